import os
import pathlib

import numpy as np
import pytest

# certified references are cached here across test runs (the oracle is
# deliberately persistent; delete the directory to force recomputation)
_REPO = pathlib.Path(__file__).resolve().parent.parent
os.environ.setdefault("XRK_REFCACHE", str(_REPO / "refcache"))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_system(M, f, jvp, y0, t0=0.0, tend=1.0):
    from xrk import SemiLinearSystem

    return SemiLinearSystem(M=M, f=f, jvp=jvp, y0=y0, t0=t0, tend=tend)


@pytest.fixture
def zero_f_system():
    """Builder for f == 0 systems (homogeneous linear problems)."""

    def build(M, y0, tend=1.0):
        return make_system(
            np.asarray(M, float),
            lambda y: np.zeros_like(y),
            lambda y, v: np.zeros_like(v),
            np.asarray(y0, float),
            tend=tend,
        )

    return build
