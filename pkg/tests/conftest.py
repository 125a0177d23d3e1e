import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def rel_err(analytic: float, numeric: float) -> float:
    """Guarded relative error used by every gradient check."""
    return abs(analytic - numeric) / max(1.0, abs(analytic), abs(numeric))


def central_diff(f, x: np.ndarray, index, h: float = 1e-5) -> float:
    """Central finite difference of scalar f at one coordinate of x."""
    xp = x.copy()
    xp[index] += h
    up = f(xp)
    xp[index] -= 2 * h
    down = f(xp)
    return (up - down) / (2 * h)
