"""
chaplab - numerical laboratory for the reduced n-dimensional Chaplygin sphere.

Integrates the reduced rolling-ball flow, its Hamiltonization by time
reparametrization and the related Veselova problem, and checks integrals,
invariant measures and flow correspondences from scenario files.
"""

__version__ = "0.3.0"
