"""Dense matrix exponentials and phi-functions, cached per stepsize.

Every matrix function used by the integrators is built here, once per
(h, M) pair.  Fixed-stepsize runs therefore pay for each exponential
exactly one time, which is the cost model under which the modified and
simplified integrators are cheap: their coefficients are plain scalars,
so a whole run needs only the handful of e^{c h M} listed in the tableau.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import DimensionError, DomainError

__all__ = ["expm", "phi", "ExpCache", "DimensionError", "DomainError"]


def _checked(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {A.shape}")
    if not np.isfinite(A).all():
        raise DomainError("matrix entries must be finite")
    return A


def expm(A) -> np.ndarray:
    """Matrix exponential e^A.

    Scaling and squaring with a degree-13 diagonal Pade approximant and
    1-norm based scaling selection (the standard backward-stable dense
    algorithm, as provided by scipy.linalg.expm).
    """
    return np.ascontiguousarray(scipy.linalg.expm(_checked(A)))


def phi(k: int, A) -> np.ndarray:
    """phi_k(A) for k in {1, 2, 3}.

    phi_1(z) = (e^z - 1)/z and phi_{k+1}(z) = (phi_k(z) - 1/k!)/z.  The
    matrix value is read off the exponential of the augmented block matrix

        W = [[A, I, 0, ...],
             [0, 0, I, ...],
             [0, 0, 0, ...]]

    whose top-right d x d block equals phi_k(A).  This stays well defined
    for singular A (no inverse of A is ever formed).
    """
    if k not in (1, 2, 3):
        raise DomainError(f"phi index {k} unsupported (need 1 <= k <= 3)")
    A = _checked(A)
    d = A.shape[0]
    W = np.zeros(((k + 1) * d, (k + 1) * d))
    W[:d, :d] = A
    for i in range(k):
        W[i * d : (i + 1) * d, (i + 1) * d : (i + 2) * d] = np.eye(d)
    return np.ascontiguousarray(scipy.linalg.expm(W)[:d, k * d :])


class ExpCache:
    """Matrix functions of c*h*M for one fixed (h, M) pair.

    Entries are built on first request and reused afterwards; ``exp_builds``
    counts constructions, which is the unit the benchmark counters report.
    A cache must never outlive a change of h or M -- build a new one.
    Each integration run owns its cache, so independent runs may proceed
    in parallel without sharing mutable state.
    """

    def __init__(self, M, h: float, counters=None):
        self.M = np.ascontiguousarray(_checked(M))
        self.h = float(h)
        self.counters = counters
        self.exp_builds = 0
        self._store: dict = {}
        self.derived: dict = {}  # per-method step plans, managed by xrk.kernels

    @property
    def dim(self) -> int:
        return self.M.shape[0]

    def _build(self, key, make):
        mat = self._store.get(key)
        if mat is None:
            mat = make()
            self._store[key] = mat
            self.exp_builds += 1
            if self.counters is not None:
                self.counters.exp_builds += 1
        return mat

    def exp(self, c) -> np.ndarray:
        """e^{c h M}.  c = 0 returns the identity and costs no build."""
        c = float(c)
        if c == 0.0:
            mat = self._store.get(("exp", 0.0))
            if mat is None:
                mat = np.eye(self.dim)
                self._store[("exp", 0.0)] = mat
            return mat
        return self._build(("exp", c), lambda: expm(c * self.h * self.M))

    def phi(self, k: int, c=1.0) -> np.ndarray:
        """phi_k(c h M)."""
        c = float(c)
        return self._build(("phi", int(k), c), lambda: phi(k, c * self.h * self.M))
