import sys
import warnings

import pytest

from noc3d.thermal import UnresolvedRegionWarning


@pytest.fixture(autouse=True)
def _strict_grid_warnings():
    # an unresolved region in a test geometry is a bug unless the test asks for it
    with warnings.catch_warnings():
        warnings.simplefilter("error", UnresolvedRegionWarning)
        yield


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
