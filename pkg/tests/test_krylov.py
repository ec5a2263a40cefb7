import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import expm_multiply

from tiltpump.krylov import expm_krylov


def _hermitian(rng, n=200, density=0.05):
    A = sp.random(n, n, density=density, random_state=rng) + 1j * sp.random(n, n, density=density, random_state=rng)
    return ((A + A.getH()) / 2).tocsr()


def test_matches_expm_multiply(rng):
    A = _hermitian(rng)
    v = rng.normal(size=A.shape[0]) + 0j
    for tau in (0.01, 0.3, 1.0):
        ref = expm_multiply(-1j * tau * A, v)
        out, info = expm_krylov(A.dot, v, tau, m_max=80, tol=1e-13)
        assert info.converged
        assert np.linalg.norm(out - ref) < 1e-10 * np.linalg.norm(v)


def test_shift_only_changes_phase(rng):
    A = _hermitian(rng)
    v = rng.normal(size=A.shape[0]) + 0j
    a, _ = expm_krylov(A.dot, v, 0.5)
    b, _ = expm_krylov(A.dot, v, 0.5, shift=3.0)
    assert np.linalg.norm(a - b * np.exp(-1j * 0.5 * 3.0)) < 1e-10


def test_invariant_subspace_breakdown():
    A = sp.diags([1.0, 2.0, 3.0]).tocsr()
    v = np.array([0, 1, 0], complex)
    out, info = expm_krylov(A.dot, v, 0.7)
    assert info.m == 1 and info.converged
    assert np.allclose(out, np.exp(-0.7j * 2.0) * v, atol=1e-15)


def test_zero_vector():
    out, info = expm_krylov(lambda x: x, np.zeros(4, complex), 1.0)
    assert info.m == 0 and not out.any()


def test_non_convergence_reported(rng):
    A = _hermitian(rng)
    v = rng.normal(size=A.shape[0]) + 0j
    _, info = expm_krylov(A.dot, v, 20.0, m_max=4, tol=1e-14)
    assert not info.converged and info.m == 4 and info.error > 1e-14
