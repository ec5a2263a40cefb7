"""Lanczos approximation of ``exp(-i tau A) v`` for sparse Hermitian ``A``."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal


@dataclass
class KrylovInfo:
    m: int
    error: float
    converged: bool


def expm_krylov(matvec, v: np.ndarray, tau: float, m_max: int = 60, tol: float = 1e-12,
                shift: float = 0.0):
    """Return ``exp(-i tau (A - shift)) v`` and a :class:`KrylovInfo`.

    Builds the Lanczos basis with full reorthogonalization and stops once two
    successive orders differ by less than ``tol`` in norm. ``shift`` moves the
    spectrum toward zero, which lowers the dimension needed; the caller
    restores the phase ``exp(-i tau shift)`` if it matters.
    """
    n = v.shape[0]
    beta0 = np.linalg.norm(v)
    if beta0 == 0.0:
        return v.copy(), KrylovInfo(0, 0.0, True)
    m_max = min(m_max, n)
    V = np.empty((m_max + 1, n), dtype=complex)
    alpha = np.zeros(m_max)
    beta = np.zeros(m_max)
    V[0] = v / beta0
    y_prev = None
    err = np.inf
    for j in range(m_max):
        w = matvec(V[j]) - shift * V[j]
        alpha[j] = np.vdot(V[j], w).real
        # two passes of classical Gram-Schmidt keep the basis orthonormal
        for _ in range(2):
            w -= V[: j + 1].T @ (V[: j + 1].conj() @ w)
        beta[j] = np.linalg.norm(w)
        m = j + 1
        lam, Q = eigh_tridiagonal(alpha[:m], beta[: m - 1])
        y = Q @ (np.exp(-1j * tau * lam) * Q[0].conj())
        breakdown = beta[j] < 1e-13 * max(1.0, abs(alpha[j]))
        if y_prev is not None:
            err = beta0 * np.sqrt(np.linalg.norm(y[:-1] - y_prev) ** 2 + abs(y[-1]) ** 2)
        if breakdown or err < tol:
            return beta0 * (y @ V[:m]), KrylovInfo(m, 0.0 if breakdown else err, True)
        y_prev = y
        V[j + 1] = w / beta[j]
    return beta0 * (y @ V[:m_max]), KrylovInfo(m_max, err, False)
