import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

# criterion id -> (passed, detail); filled by the acceptance tests
ACCEPTANCE = {}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def record():
    def _record(cid, passed, detail=""):
        ACCEPTANCE[cid] = (bool(passed), detail)
        return passed

    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for cid in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[cid]
        tr.write_line(f"criterion {cid:>2d}: {'PASS' if ok else 'FAIL'}  {detail}")
