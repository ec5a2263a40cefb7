"""State preparation, time evolution and observables of the two-boson chain.

States are complex vectors over :class:`~tiltpump.model.TwoBosonBasis`
(amplitudes ``psi_{l1 l2}`` of the normalized pair states). Unless noted,
states live in the lab frame, where the rotating frame coincides at ``t = 0``.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.integrate import trapezoid

from .krylov import expm_krylov
from .model import CELL, ModelParams, SparseHamiltonian, block_builder, build_basis, orbit_table
from .spectrum import eigh_desc
from .topology import berry_curvature, resolve_band

log = logging.getLogger(__name__)

EDGE_CELLS = 2
EDGE_DENSITY = 1e-4
GAUSS_TAIL = 1e-6


class BoundaryWarning(UserWarning):
    """Weight reached the outermost cells of the chain."""


def _basis_for(state: np.ndarray):
    D = state.shape[-1]
    L_t = int(round((math.sqrt(8 * D + 1) - 1) / 2))
    if L_t * (L_t + 1) // 2 != D:
        raise ValueError(f"state length {D} is not a pair-basis dimension")
    return build_basis(L_t)


def rotating_phase(params: ModelParams, t: float) -> np.ndarray:
    """Diagonal of ``exp(i omega_F t sum_j j n_j)`` (lab -> rotating frame)."""
    s = build_basis(params.L_t).pairs.sum(axis=1)
    return np.exp(1j * params.omega_F * t * s)


# ------------------------------------------------------------ preparation

def prepare_fock(basis, l1: int, l2: int) -> np.ndarray:
    """Unit vector on ``|l1 l2>`` (sites are 1-based)."""
    if not (1 <= l1 <= l2 <= basis.L_t):
        raise IndexError(f"need 1 <= l1 <= l2 <= {basis.L_t}, got ({l1}, {l2})")
    psi = np.zeros(basis.D, complex)
    psi[basis.index_of(l1, l2)] = 1.0
    return psi


def _bloch_level(params: ModelParams, band, level: int) -> int:
    sl = resolve_band(params, band)
    if not 0 <= level < sl.stop - sl.start:
        raise IndexError(f"level {level} outside band {sl}")
    return sl.start + level


def bloch_state_realspace(params: ModelParams, band, k0: float, t0: float = 0.0,
                          level: int = 0, frame: str = "lab") -> np.ndarray:
    """Real-space amplitudes of a multiparticle Bloch eigenstate on the ring.

    The sector eigenvector ``c_r`` is expanded as ``psi_{T^n rep_r} =
    c_r exp(i k0 d n) / sqrt(L)``. The largest amplitude is made real
    positive. ``level`` picks a state inside a multi-level band.
    """
    if params.boundary != "periodic":
        raise ValueError("Bloch states need a periodic chain")
    lev = _bloch_level(params, band, level)
    H = block_builder(params).blocks(np.array([k0]), np.array([t0]), derivatives=False)
    e, v = eigh_desc(H)
    gaps = np.abs(np.delete(e[0], lev) - e[0, lev])
    if gaps.size and gaps.min() < 1e-8:
        from .topology import DegeneracyError
        raise DegeneracyError(f"level {lev} degenerate at (k0, t0)", gaps.min())
    orb = orbit_table(params.L_t)
    psi = v[0, orb.rep, lev] * np.exp(1j * k0 * CELL * orb.shift) / math.sqrt(params.n_cells)
    i = np.argmax(np.abs(psi))
    psi *= abs(psi[i]) / psi[i]
    if frame == "lab":
        psi = psi * np.conj(rotating_phase(params, t0))
    elif frame != "rotating":
        raise ValueError(f"unknown frame {frame!r}")
    return psi


def prepare_gaussian(bloch: np.ndarray, sigma: float, l0: float) -> np.ndarray:
    """Gaussian envelope ``exp(-[(l1-l0)^2 + (l2-l0)^2] / (4 sigma^2))`` times ``bloch``."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    basis = _basis_for(bloch)
    l1, l2 = basis.pairs[:, 0], basis.pairs[:, 1]
    env = np.exp(-((l1 - l0) ** 2 + (l2 - l0) ** 2) / (4.0 * sigma ** 2))
    psi = env * bloch
    psi /= np.linalg.norm(psi)
    tail = _edge_weight(density(psi), EDGE_CELLS)
    if tail > GAUSS_TAIL:
        warnings.warn(f"Gaussian tail weight {tail:.2e} on the outer {EDGE_CELLS} cells",
                      BoundaryWarning, stacklevel=2)
    return psi


def sector_amplitudes(state: np.ndarray, params: ModelParams) -> np.ndarray:
    """Components of a real-space state on the Bloch-sum basis, shape ``(L, D_k)``.

    Row ``n`` belongs to the ring momentum ``k_n = 2 pi n / (d L)``.
    """
    orb = orbit_table(params.L_t)
    L = params.n_cells
    ks = np.arange(L) * 2 * math.pi / (CELL * L)
    ph = np.exp(-1j * CELL * np.outer(ks, orb.shift)) / math.sqrt(L)
    weighted = ph * state[None, :]
    out = np.zeros((L, orb.D_k), complex)
    for n in range(L):
        out[n] = np.bincount(orb.rep, weighted[n].real, orb.D_k) + 1j * np.bincount(
            orb.rep, weighted[n].imag, orb.D_k)
    return out


def band_weights(state: np.ndarray, params: ModelParams, t0: float = 0.0) -> np.ndarray:
    """Weight of ``state`` on every level (descending), summed over ring momenta."""
    if params.boundary != "periodic":
        params = params.replace(boundary="periodic")
    rot = state * rotating_phase(params, t0)
    amps = sector_amplitudes(rot, params)
    L = params.n_cells
    ks = np.arange(L) * 2 * math.pi / (CELL * L)
    H = block_builder(params).blocks(ks, np.full(L, t0), derivatives=False)
    _, v = eigh_desc(H)
    proj = np.einsum("kdm,kd->km", v.conj(), amps)
    return (np.abs(proj) ** 2).sum(axis=0)


def band_fidelity(state: np.ndarray, params: ModelParams, band, t0: float = 0.0) -> float:
    """``sum_k sum_{m in band} |<psi_m(k, t0)|state>|^2`` over the ring momenta."""
    sl = resolve_band(params.replace(boundary="periodic"), band)
    return float(band_weights(state, params, t0)[sl].sum())


# ------------------------------------------------------------ observables

def density(state: np.ndarray) -> np.ndarray:
    """Site occupations ``n_j``, ``j = 1..L_t`` (array index ``j - 1``)."""
    basis = _basis_for(state)
    return basis.occupation_matrix() @ (np.abs(state) ** 2)


def centroid(state: np.ndarray) -> float:
    """Center of mass ``X = sum (l1 + l2)/2 |psi|^2`` in sites."""
    basis = _basis_for(state)
    return float(basis.com @ (np.abs(state) ** 2))


def correlation(state: np.ndarray) -> np.ndarray:
    """Two-boson correlation ``R_ij = <a_i^+ a_j^+ a_j a_i>`` (0-based indices)."""
    basis = _basis_for(state)
    p = np.abs(state) ** 2
    i, j = basis.pairs[:, 0] - 1, basis.pairs[:, 1] - 1
    R = np.zeros((basis.L_t, basis.L_t))
    R[i, j] += np.where(basis.doubly, 2 * p, p)
    off = ~basis.doubly
    R[j[off], i[off]] += p[off]
    return R


def momentum_grid(L_t: int) -> np.ndarray:
    """Center-of-mass momenta ``2 pi n / L_t`` folded into ``[0, 2 pi / d)``."""
    return 2 * math.pi * np.arange(L_t // CELL) / L_t


def momentum_density(state: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Center-of-mass momentum distribution ``rho(K)`` and its grid.

    ``psi~(K, r) = sum_{l2 - l1 = r} exp(-i K (l1 + l2)/2) psi_{l1 l2}`` on
    ``K = 2 pi n / L_t``; ``rho`` sums ``|psi~|^2`` over ``r``, is folded onto
    the zone ``[0, 2 pi/d)`` and normalized to one.
    """
    basis = _basis_for(state)
    L_t = basis.L_t
    s = basis.pairs.sum(axis=1)
    r = basis.pairs[:, 1] - basis.pairs[:, 0]
    A = np.zeros((L_t, 2 * L_t + 1), complex)
    A[r, s] = state
    K = 2 * math.pi * np.arange(L_t) / L_t
    E = np.exp(-0.5j * np.outer(np.arange(2 * L_t + 1), K))
    rho = (np.abs(A @ E) ** 2).sum(axis=0)
    Kz = momentum_grid(L_t)
    folded = rho[: len(Kz)] + rho[len(Kz):]
    return Kz, folded / folded.sum()


def mean_momentum(K: np.ndarray, rho: np.ndarray) -> float:
    """Circular mean of ``rho(K)`` on the zone ``[0, 2 pi / d)``."""
    z = np.sum(rho * np.exp(1j * CELL * K))
    return float(np.angle(z) % (2 * math.pi) / CELL)


def _edge_weight(n: np.ndarray, cells: int) -> float:
    w = CELL * cells
    return float(n[:w].sum() + n[-w:].sum())


# ------------------------------------------------------------ evolution

@dataclass
class EvolveControls:
    """Numerical controls of :func:`evolve`.

    ``h`` defaults to ``T_m / 2000`` (or ``0.5`` without drive). The Krylov
    loop targets ``krylov_tol`` per step; a step whose estimate stays above
    ``reject_tol`` is split in half.
    """

    h: float | None = None
    m_max: int = 80
    krylov_tol: float = 1e-12
    reject_tol: float = 1e-9
    n_samples: int = 301
    momentum: bool = False
    correlation_times: tuple = ()
    frame: str = "lab"


@dataclass
class EvolutionTrace:
    times: np.ndarray
    density: np.ndarray
    X: np.ndarray
    norm: np.ndarray
    momentum_K: np.ndarray | None = None
    momentum_rho: np.ndarray | None = None
    correlations: dict = field(default_factory=dict)
    final_state: np.ndarray | None = None
    steps: int = 0
    rejected: int = 0
    max_krylov: int = 0
    boundary_hit: bool = False

    @property
    def dX(self) -> np.ndarray:
        return self.X - self.X[0]

    @property
    def dX_cells(self) -> np.ndarray:
        return self.dX / CELL

    @property
    def norm_drift(self) -> float:
        return float(np.max(np.abs(self.norm - 1.0)))

    def mean_momentum(self) -> np.ndarray:
        if self.momentum_rho is None:
            raise ValueError("trace has no momentum data")
        return np.array([mean_momentum(self.momentum_K, r) for r in self.momentum_rho])


def displacement(trace: EvolutionTrace, cells: bool = False) -> np.ndarray:
    return trace.dX_cells if cells else trace.dX


def _gershgorin_center(A: sp.csr_matrix) -> tuple[float, float]:
    d = A.diagonal().real
    r = np.asarray(abs(A).sum(axis=1)).ravel() - np.abs(d)
    lo, hi = float((d - r).min()), float((d + r).max())
    return 0.5 * (lo + hi), 0.5 * (hi - lo)


def evolve(state: np.ndarray, params: ModelParams, t0: float, t1: float,
           controls: EvolveControls | None = None) -> EvolutionTrace:
    """Propagate ``state`` from ``t0`` to ``t1`` with midpoint Krylov steps.

    Each step applies ``exp(-i h H(t + h/2))``; ``H`` is the lab-frame operator
    (or the rotating one with ``controls.frame``). Observables are recorded at
    ``n_samples`` equally spaced times. The norm is never rescaled, so
    ``trace.norm`` measures the accumulated propagation error.
    """
    c = controls or EvolveControls()
    Hs = SparseHamiltonian(params, frame=c.frame)
    if Hs.basis.D != state.shape[0]:
        raise ValueError("state does not match the chain size")
    duration = t1 - t0
    h = c.h
    if h is None:
        h = params.T_m / 2000 if params.omega > 0 else 0.5
    n_samples = max(2, c.n_samples)
    n_steps = max(1, int(math.ceil(duration / h / (n_samples - 1)))) * (n_samples - 1)
    h = duration / n_steps
    stride = n_steps // (n_samples - 1)
    corr_steps = {int(round((tc - t0) / h)): tc for tc in c.correlation_times}

    psi = np.asarray(state, complex).copy()
    times = t0 + h * stride * np.arange(n_samples)
    dens = np.empty((n_samples, params.L_t))
    X = np.empty(n_samples)
    norm = np.empty(n_samples)
    rho = [] if c.momentum else None
    corr = {}
    trace = EvolutionTrace(times, dens, X, norm)

    def record(i):
        n = density(psi)
        dens[i] = n
        X[i] = centroid(psi)
        norm[i] = np.linalg.norm(psi)
        if rho is not None:
            K, r = momentum_density(psi)
            trace.momentum_K = K
            rho.append(r)
        if not trace.boundary_hit and _edge_weight(n, EDGE_CELLS) > EDGE_DENSITY:
            trace.boundary_hit = True
            warnings.warn(f"density on the outer {EDGE_CELLS} cells exceeds {EDGE_DENSITY} "
                          f"at t = {times[i]:.4g}", BoundaryWarning, stacklevel=3)

    def advance(t, dt, depth=0):
        A = sp.csr_matrix((Hs.data(t + 0.5 * dt), Hs.indices, Hs.indptr), shape=Hs.shape)
        center, _ = _gershgorin_center(A)
        out, info = expm_krylov(A.dot, psi, dt, c.m_max, c.krylov_tol, shift=center)
        if info.error > c.reject_tol and depth < 12:
            trace.rejected += 1
            advance(t, 0.5 * dt, depth + 1)
            advance(t + 0.5 * dt, 0.5 * dt, depth + 1)
            return
        trace.max_krylov = max(trace.max_krylov, info.m)
        trace.steps += 1
        psi[:] = out * np.exp(-1j * dt * center)

    record(0)
    for s in range(n_steps):
        t = t0 + s * h
        advance(t, h)
        if s + 1 in corr_steps:
            corr[corr_steps[s + 1]] = correlation(psi)
        if (s + 1) % stride == 0:
            record((s + 1) // stride)
    if 0 in corr_steps:
        corr[corr_steps[0]] = correlation(state)
    trace.correlations = corr
    trace.final_state = psi
    if rho is not None:
        trace.momentum_rho = np.array(rho)
    return trace


# ------------------------------------------------------------ semiclassics

@dataclass
class SemiclassicalResult:
    dX: float
    dispersion: float
    geometric: float

    @property
    def dX_cells(self) -> float:
        return self.dX / CELL


def semiclassical_displacement(params: ModelParams, band, k0: float, tau: float,
                               Nt: int = 2000) -> SemiclassicalResult:
    """``dX(tau) = int_0^tau [d eps/dk + F](k0, t) dt`` in sites.

    ``d eps / dk`` by a centered difference with step ``1e-4 * 2 pi / d``;
    ``F`` in the position gauge so partial-cycle values are physical.
    """
    sl = resolve_band(params, band)
    b = block_builder(params)
    t = np.linspace(0.0, tau, Nt + 1)
    dk = 1e-4 * 2 * math.pi / CELL
    Ep = np.linalg.eigvalsh(b.blocks(np.full_like(t, k0 + dk), t, derivatives=False))[:, ::-1]
    Em = np.linalg.eigvalsh(b.blocks(np.full_like(t, k0 - dk), t, derivatives=False))[:, ::-1]
    v = (Ep[:, sl] - Em[:, sl]).mean(axis=1) / (2 * dk)
    F = berry_curvature(params, sl, np.full_like(t, k0), t, gauge="position")
    disp, geo = float(trapezoid(v, t)), float(trapezoid(F, t))
    return SemiclassicalResult(disp + geo, disp, geo)
