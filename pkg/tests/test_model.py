import math
from itertools import combinations_with_replacement

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from tiltpump.model import (
    CELL, ModelParams, SparseHamiltonian, TwoBosonBasis, block_builder, build_basis,
    build_lab_hamiltonian, build_momentum_block, build_rotating_hamiltonian, hopping_amplitude,
    k_grid, onsite_energy, orbit_table,
)


def brute_force_hamiltonian(params: ModelParams, t: float) -> np.ndarray:
    """Dense H from occupation-number states and explicit a^dag a matrix elements."""
    L = params.L_t
    states = []
    for l1, l2 in combinations_with_replacement(range(1, L + 1), 2):
        n = [0] * (L + 1)
        n[l1] += 1
        n[l2] += 1
        states.append(tuple(n))
    index = {s: i for i, s in enumerate(states)}
    H = np.zeros((len(states), len(states)))
    bonds = range(1, L) if params.boundary == "open" else range(1, L + 1)
    for col, n in enumerate(states):
        for j in range(1, L + 1):
            H[col, col] += onsite_energy(params, j, t, include_tilt=True) * n[j]
            H[col, col] += 0.5 * params.U * n[j] * (n[j] - 1)
        for j in bonds:
            jp = j % L + 1
            amp = hopping_amplitude(params, j, t)
            for src, dst in ((jp, j), (j, jp)):   # a_dst^dag a_src
                if n[src] == 0:
                    continue
                m = list(n)
                f = math.sqrt(m[src])
                m[src] -= 1
                f *= math.sqrt(m[dst] + 1)
                m[dst] += 1
                H[index[tuple(m)], col] += amp * f
    return H


@pytest.mark.parametrize("L_t, D", [(4, 10), (26, 351), (58, 1711)])
def test_basis_dimension(L_t, D):
    assert build_basis(L_t).D == D


@pytest.mark.parametrize("L_t", [3, 5, 2, 0])
def test_basis_rejects_bad_sizes(L_t):
    with pytest.raises(ValueError):
        TwoBosonBasis(L_t)


@given(st.integers(2, 20).map(lambda n: 2 * n), st.data())
@settings(max_examples=30, deadline=None)
def test_basis_is_bijective(L_t, data):
    b = build_basis(L_t)
    i = data.draw(st.integers(0, b.D - 1))
    l1, l2 = b.pair_of(i)
    assert l1 <= l2
    assert b.index_of(l1, l2) == i == b.index_of(l2, l1)


def test_hopping_examples():
    p = ModelParams(J=-1, delta0=0.8)
    assert hopping_amplitude(p, 2, 0) == pytest.approx(-1.0, abs=1e-15)
    q = p.replace(phi0=math.pi / 2)
    assert hopping_amplitude(q, 2, 0) == pytest.approx(-0.2, abs=1e-15)
    assert hopping_amplitude(q, 1, 0) == pytest.approx(-1.8, abs=1e-15)


def test_onsite_examples():
    p = ModelParams(Delta0=2.0)
    assert onsite_energy(p, 1, 0) == pytest.approx(-2.0)
    assert onsite_energy(p, 2, 0) == pytest.approx(2.0)
    assert onsite_energy(p, 2, 0, include_tilt=True) == pytest.approx(2.0 + 2 * p.omega_F)


@given(st.floats(-3, 3), st.floats(0, 1e4), st.integers(1, 60))
@settings(max_examples=50, deadline=None)
def test_parity_forms_agree(phi0, t, j):
    p = ModelParams(phi0=phi0)
    phi = phi0 + p.omega * t
    assert hopping_amplitude(p, j, t) == pytest.approx(p.J + p.delta0 * math.sin(math.pi * j + phi), abs=1e-12)
    assert onsite_energy(p, j, t) == pytest.approx(p.Delta0 * math.cos(math.pi * j + phi), abs=1e-12)


def test_lab_matrix_elements(fig_params):
    p = fig_params.replace(boundary="open")
    b = build_basis(p.L_t)
    H = build_lab_hamiltonian(p, b, 0.0)
    j = 6
    d = b.index_of(j, j)
    assert H[d, d] == pytest.approx(p.U + 2 * onsite_energy(p, j, 0, include_tilt=True))
    assert H[b.index_of(j, j + 1), d] == pytest.approx(math.sqrt(2) * hopping_amplitude(p, j, 0))


@pytest.mark.parametrize("boundary", ["open", "periodic"])
def test_lab_hamiltonian_matches_brute_force(boundary):
    p = ModelParams(L_t=6, U=30.0, boundary=boundary, phi0=0.3)
    for t in (0.0, 123.4):
        H = build_lab_hamiltonian(p, t=t).toarray()
        assert np.max(np.abs(H - brute_force_hamiltonian(p, t))) < 1e-12
        E = np.linalg.eigvalsh(H)
        assert np.max(np.abs(E - np.linalg.eigvalsh(brute_force_hamiltonian(p, t)))) < 1e-12


@pytest.mark.parametrize("frame", ["lab", "rotating"])
@pytest.mark.parametrize("boundary", ["open", "periodic"])
def test_hermitian_exactly(fig_params, frame, boundary):
    H = SparseHamiltonian(fig_params.replace(boundary=boundary), frame=frame).matrix(777.7)
    assert abs(H - H.conj().T).max() == 0.0


def test_rotating_equals_lab_without_tilt(fig_params):
    p = fig_params.replace(tilt_p=0, tilt_q=1)
    for t in (0.0, 50.0, 900.0):
        diff = build_rotating_hamiltonian(p, t=t) - build_lab_hamiltonian(p, t=t)
        assert abs(diff).max() == 0.0


def test_rotating_gauge_oracle():
    p = ModelParams(L_t=10, boundary="open")
    b = build_basis(p.L_t)
    s = b.pairs.sum(axis=1)
    for t in (0.0, 321.0, 1700.0):
        Hl = build_lab_hamiltonian(p, b, t).toarray()
        Hr = build_rotating_hamiltonian(p, b, t).toarray()
        # U H_lab U^dag - i U dU^dag/dt with U = exp(i omega_F t sum_j j n_j)
        u = np.exp(1j * p.omega_F * t * s)
        oracle = (u[:, None] * Hl * u.conj()[None, :]) - np.diag(p.omega_F * s)
        assert np.max(np.abs(oracle - Hr)) < 1e-12
        E0 = np.linalg.eigvalsh(build_lab_hamiltonian(p, b, t, include_tilt=False).toarray())
        assert np.max(np.abs(np.linalg.eigvalsh(Hr) - E0)) < 1e-10


def test_rotating_time_periodicity(fig_params):
    p = fig_params
    H = SparseHamiltonian(p, frame="rotating")
    t = 345.6
    assert np.max(np.abs(H.data(t + p.T_tot()) - H.data(t))) < 1e-10


def test_orbits_full_size():
    orb = orbit_table(26)
    assert orb.D_k == 27
    assert np.all(orb.orbit_size == 13)
    assert orb.D_k * 13 == build_basis(26).D


def test_block_dimension_and_hermiticity(fig_params):
    blk = build_momentum_block(fig_params, 1.1, 77.0)
    assert blk.D_k == fig_params.L_t + 1
    for M in (blk.H, blk.dHdk, blk.dHdt):
        assert np.max(np.abs(M - M.conj().T)) < 1e-14


def test_block_rejects_bad_input(fig_params):
    with pytest.raises(ValueError):
        build_momentum_block(fig_params.replace(boundary="open"), 0.0, 0.0)
    with pytest.raises(ValueError):
        build_momentum_block(fig_params, 2 * math.pi / CELL, 0.0)


def test_block_union_matches_full_spectrum():
    p = ModelParams(L_t=10)
    full = SparseHamiltonian(p, frame="rotating")
    for t in (0.0, 400.0, 1234.5):
        E_full = np.sort(np.linalg.eigvalsh(full.matrix(t).toarray()))
        H = block_builder(p).blocks(k_grid(p), np.full(p.n_cells, t), derivatives=False)
        E_blocks = np.sort(np.linalg.eigvalsh(H).ravel())
        assert np.max(np.abs(E_full - E_blocks)) < 1e-10


def test_block_k_periodicity(fig_params):
    b = block_builder(fig_params)
    H0 = b.blocks(0.4, 100.0, derivatives=False)[0]
    H1 = b.blocks(0.4 + 2 * math.pi / CELL, 100.0, derivatives=False)[0]
    assert np.max(np.abs(np.linalg.eigvalsh(H0) - np.linalg.eigvalsh(H1))) < 1e-12


def test_block_derivatives_finite_difference(fig_params):
    b = block_builder(fig_params)
    k, t, h = 0.7, 432.1, 1e-5
    _, dk, dt = b.blocks(k, t)
    fd_k = (b.blocks(k + h, t, derivatives=False) - b.blocks(k - h, t, derivatives=False)) / (2 * h)
    ht = 1e-3
    fd_t = (b.blocks(k, t + ht, derivatives=False) - b.blocks(k, t - ht, derivatives=False)) / (2 * ht)
    assert np.max(np.abs(fd_k - dk)) < 1e-7
    assert np.max(np.abs(fd_t - dt)) < 1e-7


def test_params_validation():
    with pytest.raises(ValueError):
        ModelParams(tilt_p=20, tilt_q=6)
    with pytest.raises(ValueError):
        ModelParams(boundary="twisted")
    p = ModelParams()
    assert ModelParams.from_dict(p.to_dict()) == p
    with pytest.raises(KeyError):
        ModelParams.from_dict({"bogus": 1})
