"""Bloch bands, band clusters, open-chain spectra and edge states."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import argrelmin

from .model import (
    CELL,
    ModelParams,
    MomentumBlock,
    SparseHamiltonian,
    block_builder,
    build_basis,
)

log = logging.getLogger(__name__)

ROMAN = ("i", "ii", "iii", "iv", "v", "vi", "vii", "viii", "ix", "x")
GAP_GUARD = 1e-6
# cluster separation: levels inside a scattering cluster sit ~1e-3 apart at L_t = 26
MIN_BAND_GAP = 0.02


class SolverError(RuntimeError):
    """Eigensolver failure at a given ``(k, t)``."""


def solve_block(block: MomentumBlock):
    """Full eigendecomposition with energies in descending order."""
    try:
        e, v = np.linalg.eigh(block.H)
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"eigh failed at k={block.k}, t={block.t}") from exc
    return e[::-1], v[:, ::-1]


def eigh_desc(H: np.ndarray):
    """Batched ``eigh`` returning descending energies (last axis)."""
    e, v = np.linalg.eigh(H)
    return e[..., ::-1], v[..., ::-1]


def band_partition(energies: np.ndarray, min_gap: float = MIN_BAND_GAP) -> list[slice]:
    """Group descending levels into clusters separated by gaps over the whole grid.

    ``energies`` has shape ``(..., D)`` sorted descending. Levels ``n`` and
    ``n + 1`` belong to different bands when ``E_n - E_{n+1} > min_gap`` at
    every grid point.
    """
    E = energies.reshape(-1, energies.shape[-1])
    gaps = (E[:, :-1] - E[:, 1:]).min(axis=0)
    cuts = [0] + [int(n) + 1 for n in np.flatnonzero(gaps > min_gap)] + [int(E.shape[1])]
    return [slice(a, b) for a, b in zip(cuts[:-1], cuts[1:])]


def band_label(m: int) -> str:
    return ROMAN[m] if m < len(ROMAN) else str(m + 1)


@dataclass
class BandSet:
    """Eigenpairs on a uniform ``(k, t)`` grid, energies descending per point."""

    params: ModelParams
    k: np.ndarray
    t: np.ndarray
    energies: np.ndarray            # (Nk, Nt, D_k)
    vectors: np.ndarray | None      # (Nk, Nt, D_k, D_k), columns are states
    bands: list[slice] = field(default_factory=list)

    @property
    def labels(self) -> list[str]:
        return [band_label(m) for m in range(len(self.bands))]

    def band_energies(self, m: int) -> np.ndarray:
        return self.energies[..., self.bands[m]]

    def min_gaps(self) -> np.ndarray:
        """Smallest separation between consecutive bands over the grid."""
        out = []
        for a, b in zip(self.bands[:-1], self.bands[1:]):
            out.append((self.energies[..., a.stop - 1] - self.energies[..., b.start]).min())
        return np.array(out)

    def to_rows(self):
        """``(k, t, m, E)`` rows for CSV export (band-resolved levels)."""
        for i, k in enumerate(self.k):
            for j, t in enumerate(self.t):
                for m, sl in enumerate(self.bands):
                    for E in self.energies[i, j, sl]:
                        yield (k, t, m, E)


def band_surface(params: ModelParams, Nk: int, Nt: int, T_tot: float | None = None,
                 keep_vectors: bool = True, min_gap: float = MIN_BAND_GAP, chunk: int = 4096) -> BandSet:
    """Diagonalize every block on ``[0, 2 pi/d) x [0, T_tot)``."""
    if Nk < 3 or Nt < 3:
        raise ValueError("Nk and Nt must be at least 3")
    T_tot = params.T_tot() if T_tot is None else T_tot
    builder = block_builder(params)
    ks = np.arange(Nk) * (2 * math.pi / CELL) / Nk
    ts = np.arange(Nt) * T_tot / Nt
    K, T = np.meshgrid(ks, ts, indexing="ij")
    K, T = K.ravel(), T.ravel()
    D = builder.D_k
    E = np.empty((K.size, D))
    V = np.empty((K.size, D, D), complex) if keep_vectors else None
    for a in range(0, K.size, chunk):
        H = builder.blocks(K[a:a + chunk], T[a:a + chunk], derivatives=False)
        e, v = eigh_desc(H)
        E[a:a + chunk] = e
        if keep_vectors:
            V[a:a + chunk] = v
    E = E.reshape(Nk, Nt, D)
    if keep_vectors:
        V = V.reshape(Nk, Nt, D, D)
    bs = BandSet(params, ks, ts, E, V, band_partition(E, min_gap))
    gaps = bs.min_gaps()
    if np.any(gaps < GAP_GUARD):
        log.warning("bands approach within %g; labels may be unreliable", GAP_GUARD)
    return bs


def double_occupancy(vectors: np.ndarray, params: ModelParams) -> np.ndarray:
    """Doublon weight ``<sum_j n_j(n_j-1)>/2`` of block eigenvectors (last axis = states)."""
    dbl = block_builder(params).diag_double
    return np.einsum("...ia,i->...a", np.abs(vectors) ** 2, dbl)


def classify_band(vectors: np.ndarray, params: ModelParams, threshold: float = 0.5):
    """``('bound' | 'scattering', metric)`` from the band-averaged doublon weight.

    ``vectors`` holds the band's eigenvectors with states on the last axis.
    """
    metric = float(double_occupancy(vectors, params).mean())
    return ("bound" if metric > threshold else "scattering"), metric


# ----------------------------------------------------------------- open chain

@dataclass
class ObcSpectrum:
    params: ModelParams
    t: np.ndarray
    energies: np.ndarray   # (Nt, D) descending
    vectors: np.ndarray    # (Nt, D, D)


def obc_spectrum(params: ModelParams, Nt: int, T_tot: float | None = None) -> ObcSpectrum:
    """Instantaneous spectra of the tilt-free open chain over ``[0, T_tot)``."""
    p = params.replace(boundary="open", tilt_p=0, tilt_q=1)
    T_tot = params.T_tot() if T_tot is None else T_tot
    ham = SparseHamiltonian(p, frame="lab")
    ts = np.arange(Nt) * T_tot / Nt
    E = np.empty((Nt, ham.basis.D))
    V = np.empty((Nt, ham.basis.D, ham.basis.D), complex)
    for i, t in enumerate(ts):
        E[i], V[i] = eigh_desc(ham.matrix(t).toarray())
    return ObcSpectrum(params, ts, E, V)


def edge_metric(state: np.ndarray, cells: int = 2):
    """Fraction of the density on the outer ``cells`` unit cells at each end."""
    from .dynamics import density

    n = density(state)
    w = CELL * cells
    left, right = n[:w].sum() / 2, n[-w:].sum() / 2
    return {"left_weight": float(left), "right_weight": float(right),
            "edge": bool(max(left, right) > 0.5)}


def in_gap_states(obc: ObcSpectrum, bulk_lo: np.ndarray, bulk_hi: np.ndarray, i_t: int,
                  margin: float = 0.05):
    """Indices of open-chain states at time ``obc.t[i_t]`` outside every bulk band.

    ``bulk_lo``/``bulk_hi`` are the per-band energy ranges at that time, e.g.
    from a periodic ``BandSet`` restricted to the same ``t``. States are returned
    nearest-to-gap-center first.
    """
    E = obc.energies[i_t]
    inside = np.zeros(E.shape, bool)
    for lo, hi in zip(bulk_lo, bulk_hi):
        inside |= (E >= lo - margin) & (E <= hi + margin)
    idx = np.flatnonzero(~inside)
    order = np.argsort(bulk_lo)[::-1]
    lo_s, hi_s = np.asarray(bulk_lo)[order], np.asarray(bulk_hi)[order]
    centers = (lo_s[:-1] + hi_s[1:]) / 2
    if len(centers) == 0 or len(idx) == 0:
        return idx
    dist = np.min(np.abs(E[idx, None] - centers[None, :]), axis=1)
    return idx[np.argsort(dist)]


def bulk_ranges(params: ModelParams, t: float, Nk: int = 64, min_gap: float = MIN_BAND_GAP):
    """Per-band ``(lo, hi)`` energy ranges of the periodic tilt-free chain at time ``t``."""
    p = params.replace(boundary="periodic", tilt_p=0, tilt_q=1)
    ks = np.arange(Nk) * (2 * math.pi / CELL) / Nk
    E = np.linalg.eigvalsh(block_builder(p).blocks(ks, t, derivatives=False))[..., ::-1]
    bands = band_partition(E, min_gap)
    lo = np.array([E[:, b].min() for b in bands])
    hi = np.array([E[:, b].max() for b in bands])
    return lo, hi


# ------------------------------------------------------ resonant avoided crossings

def avoided_crossings(params: ModelParams, level: int, k: float = 0.0, Nt: int = 4000,
                      T: float | None = None):
    """Avoided crossings of a band with the doublon/pair resonance along ``t``.

    The band state is split into its doublon part ``|D>`` and pair part
    ``|S>``; the local two-level splitting ``sqrt((E_D - E_S)**2 + 4|V|**2)``
    has a minimum wherever the two characters are resonant. ``level`` counts
    block eigenstates from the bottom of the spectrum.

    Returns ``(times, splittings, t_grid, splitting_curve)``.
    """
    T = params.T_m if T is None else T
    ts = np.arange(Nt) * T / Nt
    H = block_builder(params).blocks(k, ts, derivatives=False)
    _, v = np.linalg.eigh(H)
    psi = v[:, :, level]
    dbl = block_builder(params).diag_double.astype(bool)
    Dv = np.where(dbl, psi, 0)
    Sv = np.where(dbl, 0, psi)
    nD = np.linalg.norm(Dv, axis=1)
    nS = np.linalg.norm(Sv, axis=1)
    Dv = Dv / np.maximum(nD, 1e-300)[:, None]
    Sv = Sv / np.maximum(nS, 1e-300)[:, None]
    HD = np.einsum("nij,nj->ni", H, Dv)
    HS = np.einsum("nij,nj->ni", H, Sv)
    ED = np.einsum("ni,ni->n", Dv.conj(), HD).real
    ES = np.einsum("ni,ni->n", Sv.conj(), HS).real
    V = np.einsum("ni,ni->n", Dv.conj(), HS)
    split = np.sqrt((ED - ES) ** 2 + 4 * np.abs(V) ** 2)
    # periodic padding so minima at the window edge are found once
    ext = np.concatenate([split[-1:], split, split[:1]])
    mins = argrelmin(ext, mode="clip")[0] - 1
    mins = mins[(mins >= 0) & (mins < Nt)]
    # keep genuine resonances: the detuning changes sign across the minimum
    det = ED - ES
    keep = []
    for i in mins:
        a, b = det[(i - 3) % Nt], det[(i + 3) % Nt]
        if a * b < 0 or abs(det[i]) < 2 * abs(V[i]):
            keep.append(i)
    keep = np.array(keep, dtype=int)
    return ts[keep], split[keep], ts, split


def level_index_from_bottom(bands: list[slice], m: int, D: int) -> int:
    """Block level (counted from the bottom) of a single-state band ``m``."""
    sl = bands[m]
    if sl.stop - sl.start != 1:
        raise ValueError("band is a multi-state cluster")
    return D - 1 - sl.start


def full_space_sector_spectrum(params: ModelParams, k: float, t: float) -> np.ndarray:
    """Eigenvalues of the full rotating-frame Hamiltonian in the ``k`` sector.

    Independent route: diagonalize the complete pair-space operator projected
    with the cotranslation projector ``P_k = L**-1 sum_n exp(i k d n) T**n``,
    where ``T`` moves both particles one cell to the right; its range holds
    the states with ``psi(x + d) = exp(i k d) psi(x)``.
    """
    from .model import orbit_table, translate

    basis = build_basis(params.L_t)
    H = SparseHamiltonian(params, basis, frame="rotating").matrix(t).toarray()
    L = params.n_cells
    P = np.zeros((basis.D, basis.D), complex)
    for n in range(L):
        moved = translate(basis.pairs, n, params.L_t)
        P[basis.index_of(moved[:, 0], moved[:, 1]), np.arange(basis.D)] += np.exp(1j * k * CELL * n) / L
    w, Q = np.linalg.eigh((P + P.conj().T) / 2)
    Q = Q[:, w > 0.5]
    if Q.shape[1] != orbit_table(params.L_t).D_k:
        raise SolverError("projector rank does not match the sector dimension")
    return np.sort(np.linalg.eigvalsh(Q.conj().T @ H @ Q))[::-1]


def resonant_level(params: ModelParams, k: float = 0.0, t: float = 0.0) -> slice:
    """Level (descending index, as a slice) of the doublon on the low sublattice.

    In the resonant regime ``2 Delta0 > U`` this state sits inside the pair
    continuum; it is the level with the largest doublon weight among levels
    below ``U`` at ``(k, t)``.
    """
    H = block_builder(params).blocks(np.array([k]), np.array([t]), derivatives=False)
    e, v = eigh_desc(H)
    w = double_occupancy(v, params)[0]
    w = np.where(e[0] < params.U, w, -1.0)
    m = int(np.argmax(w))
    return slice(m, m + 1)
