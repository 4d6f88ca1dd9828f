import os

import hypothesis
import numpy as np

# Silent NaN/inf production fails the test instead; underflow is harmless here.
np.seterr(all="raise", under="ignore")

hypothesis.settings.register_profile("fast", max_examples=20, deadline=None)
hypothesis.settings.register_profile("ci", max_examples=200, deadline=None)
hypothesis.settings.register_profile("debugger", report_multiple_bugs=False, deadline=None)
hypothesis.settings.load_profile(os.getenv("HYPOTHESIS_PROFILE", "fast"))


def pytest_configure(config):
    config.addinivalue_line("markers", "integration: long trajectory suites (deselect with -m 'not integration')")
