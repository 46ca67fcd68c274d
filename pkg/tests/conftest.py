from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parent.parent
DATA = ROOT / "data"


@pytest.fixture(scope="session")
def synthetic_dir():
    return DATA / "synthetic"


@pytest.fixture(scope="session")
def rigged_dir():
    return DATA / "rigged"


BUNDLED_SWEEP = dict(leakage_targets=(0.05, 0.25, 0.5, 0.75, 0.95), bpc_values=(16,),
                     trials=10, seed=0, n_features=1024)


@pytest.fixture(scope="session")
def bundled_sweep(synthetic_dir):
    """Hashed sweep over the bundled corpus, shared by the trend checks."""
    import time

    from spir.evaluation import run_sweep

    start = time.perf_counter()
    rows = run_sweep(synthetic_dir, **BUNDLED_SWEEP)
    return rows, time.perf_counter() - start


# criterion number -> (passed, detail), filled by the acceptance suite
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
