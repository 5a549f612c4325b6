from pathlib import Path

import numpy as np
import pytest

from paneldml.simulation import DgpConfig, generate_dgp

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def fixture_csv() -> Path:
    return DATA_DIR / "linear_panel.csv"


@pytest.fixture(scope="session")
def linear_draw():
    """DGP1 draw, N=300, T=6, p=6."""
    return generate_dgp(DgpConfig(design=1, n_units=300, n_waves=6, p=6, seed=11))


def random_panel(n=6, t=4, p=2, seed=0):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(n, t)), rng.normal(size=(n, t)), rng.normal(size=(n, t, p))


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LOG: dict[int, tuple[bool, str]] = {}


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LOG


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LOG:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LOG):
        ok, detail = ACCEPTANCE_LOG[n]
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
