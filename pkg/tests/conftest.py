from pathlib import Path

import numpy as np
import pytest

from smgp.kernels import SMKernelParams

DATA = Path(__file__).resolve().parents[1] / "data"


def random_params(rng, Q, f_max=0.5):
    return SMKernelParams(rng.uniform(0.1, 2.0, Q), rng.uniform(0.0, f_max, Q),
                          np.exp(rng.uniform(np.log(0.01), np.log(0.5), Q)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture
def email_csv():
    return DATA / "email_like.csv"


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)
