import numpy as np
import pytest

from npgc.data import TimeSeriesPanel, prepare


def make_panel(T_raw=120, p=2, d=1, q=1, phi=1, seed=0, signal=0.0):
    rng = np.random.default_rng(seed)
    X, Y, Z = [], [], []
    for _ in range(phi):
        x = rng.standard_normal((T_raw, p))
        z = rng.standard_normal((T_raw, q))
        y = rng.standard_normal((T_raw, d))
        if signal:
            y[1:, 0] += signal * np.tanh(x[:-1, 0])
        X.append(x)
        Y.append(y)
        Z.append(z)
    if phi == 1:
        return TimeSeriesPanel.from_arrays(X[0], Y[0], Z[0])
    return TimeSeriesPanel.from_arrays(X, Y, Z)


@pytest.fixture
def small_prepared():
    return prepare(make_panel(T_raw=83, seed=3), lag=3)


# --------------------------------------------------------------------------- #
# acceptance summary lines


ACCEPTANCE = {}


def record_criterion(number, passed, detail):
    ACCEPTANCE[number] = (bool(passed), detail)
    print(f"criterion {number}: {'PASS' if passed else 'FAIL'} ({detail})")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'} ({detail})")
