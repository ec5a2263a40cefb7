"""Two interacting bosons in a driven, tilted Rice-Mele superlattice.

Sites are numbered ``1..L_t``; the staggering sign of site ``j`` is ``(-1)**j``.
The unit cell holds ``CELL = 2`` sites, so cotranslations move both bosons by
two sites and the center-of-mass quasimomentum lives in ``[0, pi)``.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

CELL = 2
SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class ModelParams:
    """Physical constants of the lattice and of the drive.

    The tilt is ``omega_F = (tilt_p / tilt_q) * omega``; ``tilt_p = 0`` (with
    ``tilt_q = 1``) switches the tilt off.
    """

    J: float = -1.0
    delta0: float = 0.8
    Delta0: float = 2.0
    U: float = 30.0
    omega: float = 0.005
    tilt_p: int = 10
    tilt_q: int = 3
    phi0: float = 0.0
    L_t: int = 26
    boundary: str = "periodic"

    def __post_init__(self):
        if self.L_t < 4 or self.L_t % 2:
            raise ValueError(f"L_t must be even and >= 4, got {self.L_t}")
        if self.tilt_q < 1 or self.tilt_p < 0:
            raise ValueError("tilt_p must be >= 0 and tilt_q >= 1")
        if math.gcd(self.tilt_p, self.tilt_q) != 1:
            raise ValueError(f"tilt ratio {self.tilt_p}/{self.tilt_q} is not in lowest terms")
        if self.boundary not in ("periodic", "open"):
            raise ValueError(f"boundary must be 'periodic' or 'open', got {self.boundary!r}")

    @property
    def omega_F(self) -> float:
        return self.omega * self.tilt_p / self.tilt_q

    @property
    def T_m(self) -> float:
        return 2 * math.pi / self.omega

    @property
    def n_cells(self) -> int:
        return self.L_t // CELL

    def T_tot(self, n: int = 1) -> float:
        """Common period ``n * q * T_m`` of the rotating-frame Hamiltonian."""
        return n * self.tilt_q * self.T_m

    def phi(self, t):
        return self.phi0 + self.omega * np.asarray(t)

    def replace(self, **changes) -> "ModelParams":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelParams":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise KeyError(f"unknown model parameter(s): {sorted(unknown)}")
        return cls(**data)


def parity(j):
    """``(-1)**j`` for integer site labels (array friendly)."""
    return 1 - 2 * (np.asarray(j) % 2)


def hopping_amplitude(params: ModelParams, j, t):
    """Tunneling ``J + delta0 sin(pi j + phi(t))`` on bond ``j -> j+1``."""
    return params.J + params.delta0 * parity(j) * np.sin(params.phi(t))


def onsite_energy(params: ModelParams, j, t, include_tilt: bool = False):
    """Staggered potential ``Delta0 cos(pi j + phi(t))``, optionally plus ``omega_F j``."""
    e = params.Delta0 * parity(j) * np.cos(params.phi(t))
    if include_tilt:
        e = e + params.omega_F * np.asarray(j)
    return e


class TwoBosonBasis:
    """Symmetric pair states ``|l1 l2>`` with ``1 <= l1 <= l2 <= L_t``.

    States are ordered lexicographically in ``(l1, l2)``.
    """

    def __init__(self, L_t: int):
        if L_t < 4 or L_t % 2:
            raise ValueError(f"L_t must be even and >= 4, got {L_t}")
        self.L_t = L_t
        l1, l2 = np.triu_indices(L_t)
        self.pairs = np.stack([l1 + 1, l2 + 1], axis=1)
        self.D = len(self.pairs)
        self._index = -np.ones((L_t + 1, L_t + 1), dtype=np.int64)
        self._index[self.pairs[:, 0], self.pairs[:, 1]] = np.arange(self.D)
        self.doubly = self.pairs[:, 0] == self.pairs[:, 1]
        self.com = self.pairs.sum(axis=1) / 2.0

    def __len__(self):
        return self.D

    def __repr__(self):
        return f"TwoBosonBasis(L_t={self.L_t}, D={self.D})"

    def index_of(self, l1, l2):
        """Index of ``|l1 l2>``; the order of the two labels is irrelevant."""
        a, b = np.minimum(l1, l2), np.maximum(l1, l2)
        if np.any(a < 1) or np.any(b > self.L_t):
            raise IndexError(f"sites out of range 1..{self.L_t}: ({l1}, {l2})")
        return self._index[a, b]

    def pair_of(self, i):
        return tuple(int(x) for x in self.pairs[i])

    def normalization(self):
        """Weights ``(1 + delta_{l1 l2})**-1/2`` linking ``psi`` and ``C`` amplitudes."""
        return np.where(self.doubly, 1 / SQRT2, 1.0)

    def occupation_matrix(self) -> sp.csr_matrix:
        """Sparse ``L_t x D`` matrix of occupations ``n_j`` per basis state."""
        rows = np.concatenate([self.pairs[:, 0], self.pairs[:, 1]]) - 1
        cols = np.concatenate([np.arange(self.D)] * 2)
        return sp.csr_matrix((np.ones(2 * self.D), (rows, cols)), shape=(self.L_t, self.D))


@lru_cache(maxsize=32)
def build_basis(L_t: int) -> TwoBosonBasis:
    return TwoBosonBasis(L_t)


@dataclass(frozen=True)
class HoppingTerms:
    """Forward hops ``a_j^dag a_{j+1}`` in the pair basis: ``<row| . |col> = factor``."""

    rows: np.ndarray
    cols: np.ndarray
    bond: np.ndarray
    factor: np.ndarray


@lru_cache(maxsize=32)
def hopping_terms(L_t: int, boundary: str) -> HoppingTerms:
    basis = build_basis(L_t)
    rows, cols, bonds, factors = [], [], [], []
    for i, (l1, l2) in enumerate(basis.pairs):
        l1, l2 = int(l1), int(l2)
        occ = {l1: 2} if l1 == l2 else {l1: 1, l2: 1}
        for src, n_src in occ.items():
            # a_j^dag a_{j+1} moves a boson from src = j+1 to j
            if src > 1:
                j = src - 1
            elif boundary == "periodic":
                j = L_t
            else:
                continue
            amp = math.sqrt(n_src) * math.sqrt(occ.get(j, 0) + 1)
            other = l1 + l2 - src
            rows.append(basis.index_of(j, other))
            cols.append(i)
            bonds.append(j)
            factors.append(amp)
    return HoppingTerms(
        rows=np.asarray(rows, dtype=np.int64),
        cols=np.asarray(cols, dtype=np.int64),
        bond=np.asarray(bonds, dtype=np.int64),
        factor=np.asarray(factors, dtype=float),
    )


def _check(params: ModelParams, basis: TwoBosonBasis | None) -> TwoBosonBasis:
    if basis is None:
        return build_basis(params.L_t)
    if basis.L_t != params.L_t:
        raise ValueError(f"basis has L_t={basis.L_t} but params.L_t={params.L_t}")
    return basis


class SparseHamiltonian:
    """Time-dependent pair-basis Hamiltonian on a fixed CSR sparsity pattern.

    The matrix is ``H(t) = sum_c coeff_c(t) * A_c`` with constant data arrays
    ``A_c``; only the coefficients change with time, so a matrix at any ``t``
    costs one linear combination of data vectors.
    """

    def __init__(self, params: ModelParams, basis: TwoBosonBasis | None = None, frame: str = "lab"):
        if frame not in ("lab", "rotating"):
            raise ValueError(f"unknown frame {frame!r}")
        self.params = params
        self.basis = basis = _check(params, basis)
        self.frame = frame
        hop = hopping_terms(params.L_t, params.boundary)
        D = basis.D
        par = parity(hop.bond)
        diag = np.arange(D)
        parity_sum = parity(basis.pairs[:, 0]) + parity(basis.pairs[:, 1])
        site_sum = basis.pairs.sum(axis=1).astype(float)

        # entries: forward hops, their conjugates, diagonal
        rows = np.concatenate([hop.rows, hop.cols, diag])
        cols = np.concatenate([hop.cols, hop.rows, diag])
        nh, z = len(hop.rows), np.zeros(D)
        zh = np.zeros(nh)
        fwd = np.concatenate([np.ones(nh), zh, z])
        bwd = np.concatenate([zh, np.ones(nh), z])
        # J part, delta0 sin(phi) part for hops; U, Delta0 cos(phi), tilt for diagonal
        hopJ = np.concatenate([hop.factor, hop.factor, z]) * params.J
        hopS = np.concatenate([hop.factor * par, hop.factor * par, z]) * params.delta0
        diagU = np.concatenate([zh, zh, params.U * basis.doubly])
        diagC = np.concatenate([zh, zh, params.Delta0 * parity_sum])
        diagT = np.concatenate([zh, zh, params.omega_F * site_sum])

        flat = rows * D + cols
        uniq, inv = np.unique(flat, return_inverse=True)
        self._rows = uniq // D
        self._cols = uniq % D
        self.indptr = np.searchsorted(self._rows, np.arange(D + 1))
        self.indices = self._cols.astype(np.int32)

        def acc(w):
            return np.bincount(inv, weights=w, minlength=len(uniq))

        # fixed-phase components: fwd/bwd pieces kept apart for the rotating frame
        self._parts = {
            "J_f": acc(hopJ * fwd), "J_b": acc(hopJ * bwd),
            "S_f": acc(hopS * fwd), "S_b": acc(hopS * bwd),
            "U": acc(diagU), "C": acc(diagC), "T": acc(diagT),
        }

    @property
    def shape(self):
        return (self.basis.D, self.basis.D)

    def data(self, t: float) -> np.ndarray:
        p, a = self.params, self._parts
        phi = p.phi0 + p.omega * t
        s, c = math.sin(phi), math.cos(phi)
        if self.frame == "lab":
            out = (a["J_f"] + a["J_b"]) + s * (a["S_f"] + a["S_b"]) + a["U"] + c * a["C"] + a["T"]
            return out.astype(complex)
        ph = complex(math.cos(p.omega_F * t), -math.sin(p.omega_F * t))
        return (ph * (a["J_f"] + s * a["S_f"]) + ph.conjugate() * (a["J_b"] + s * a["S_b"])
                + a["U"] + c * a["C"])

    def matrix(self, t: float) -> sp.csr_matrix:
        return sp.csr_matrix((self.data(t), self.indices, self.indptr), shape=self.shape)

    def norm_bound(self, t: float = 0.0) -> float:
        """Gershgorin bound on the spectral radius at time ``t``."""
        return float(np.max(abs(self.matrix(t)).sum(axis=1)))


def build_lab_hamiltonian(params: ModelParams, basis: TwoBosonBasis | None = None, t: float = 0.0,
                          include_tilt: bool = True) -> sp.csr_matrix:
    """Lab-frame Hamiltonian at time ``t`` including the linear tilt."""
    if not include_tilt:
        params = params.replace(tilt_p=0, tilt_q=1)
    return SparseHamiltonian(params, basis, frame="lab").matrix(t)


def build_rotating_hamiltonian(params: ModelParams, basis: TwoBosonBasis | None = None,
                               t: float = 0.0) -> sp.csr_matrix:
    """Rotating-frame Hamiltonian: tilt traded for hopping phases ``exp(-+i omega_F t)``."""
    return SparseHamiltonian(params, basis, frame="rotating").matrix(t)


# ---------------------------------------------------------------- Bloch sectors

@dataclass(frozen=True)
class OrbitTable:
    """Cotranslation orbits of the pair basis.

    ``rep[i]`` is the block index of the orbit containing state ``i`` and
    ``shift[i]`` the number of cells ``n`` with ``state_i = T**n rep``, taken in
    ``[0, L)``. Representatives are the lexicographically smallest pairs.
    """

    L_t: int
    reps: np.ndarray
    rep: np.ndarray
    shift: np.ndarray
    orbit_size: np.ndarray
    com: np.ndarray

    @property
    def D_k(self) -> int:
        return len(self.reps)


def translate(pairs: np.ndarray, n: int, L_t: int) -> np.ndarray:
    """Shift both bosons of each pair by ``n`` cells on the ring and re-sort."""
    moved = (pairs - 1 + CELL * n) % L_t + 1
    return np.sort(moved, axis=-1)


@lru_cache(maxsize=32)
def orbit_table(L_t: int) -> OrbitTable:
    basis = build_basis(L_t)
    L = L_t // CELL
    cand = np.stack([translate(basis.pairs, -n, L_t) for n in range(L)])  # (L, D, 2)
    key = cand[..., 0] * (L_t + 1) + cand[..., 1]
    best_n = np.argmin(key, axis=0)
    rep_pairs = cand[best_n, np.arange(basis.D)]
    rep_states = basis.index_of(rep_pairs[:, 0], rep_pairs[:, 1])
    reps, rep = np.unique(rep_states, return_inverse=True)
    sizes = np.array([len(np.unique(key[:, r])) for r in reps])
    # minimal-image center of mass of each representative
    p = basis.pairs[reps]
    sep = p[:, 1] - p[:, 0]
    lo = np.where(sep > L_t // 2, p[:, 1] - L_t, p[:, 0])
    hi = np.where(sep > L_t // 2, p[:, 0], p[:, 1])
    com = (lo + hi) / 2.0
    return OrbitTable(L_t=L_t, reps=reps, rep=rep, shift=best_n.astype(np.int64),
                      orbit_size=sizes, com=com)


def _wrap_shift(n, L):
    """Map cell shifts into ``(-L/2, L/2]`` (shortest cotranslation)."""
    n = np.asarray(n) % L
    return np.where(n > L // 2, n - L, n)


@dataclass(frozen=True)
class MomentumBlock:
    """Dense Bloch-sector Hamiltonian at ``(k, t)`` with its analytic derivatives."""

    k: float
    t: float
    H: np.ndarray
    dHdk: np.ndarray
    dHdt: np.ndarray

    @property
    def D_k(self) -> int:
        return self.H.shape[0]


class BlockBuilder:
    """Assembles Bloch blocks of the rotating-frame Hamiltonian for many ``(k, t)``.

    Block basis ``|k, r> = L**-1/2 sum_n exp(i k d n) T**n |rep_r>``. Hops that
    leave the representative set are folded back with the shortest cotranslation,
    which keeps the block analytic and ``2 pi / d`` periodic in ``k``.
    """

    def __init__(self, params: ModelParams):
        if params.boundary != "periodic":
            raise ValueError("momentum blocks need a periodic chain")
        self.params = params
        L_t = params.L_t
        self.orbits = orb = orbit_table(L_t)
        if np.any(orb.orbit_size != params.n_cells):
            raise NotImplementedError(
                f"L_t={L_t} has short cotranslation orbits; use an odd number of cells")
        basis = build_basis(L_t)
        hop = hopping_terms(L_t, "periodic")
        col_of = -np.ones(basis.D, dtype=np.int64)
        col_of[orb.reps] = np.arange(orb.D_k)
        L = params.n_cells

        # forward hops acting on a representative column, and backward ones
        f = col_of[hop.cols] >= 0
        b = col_of[hop.rows] >= 0
        tgt = np.concatenate([hop.rows[f], hop.cols[b]])
        src = np.concatenate([hop.cols[f], hop.rows[b]])
        self.hop_row = orb.rep[tgt]
        self.hop_col = col_of[src]
        self.hop_shift = _wrap_shift(orb.shift[tgt], L)
        self.hop_dir = np.concatenate([np.ones(f.sum()), -np.ones(b.sum())])
        self.hop_factor = np.concatenate([hop.factor[f], hop.factor[b]])
        self.hop_parity = parity(np.concatenate([hop.bond[f], hop.bond[b]]))

        pr = basis.pairs[orb.reps]
        self.diag_double = (pr[:, 0] == pr[:, 1]).astype(float)
        self.diag_parity = (parity(pr[:, 0]) + parity(pr[:, 1])).astype(float)
        self.D_k = orb.D_k

        Dk = self.D_k
        flat_h = self.hop_row * Dk + self.hop_col
        flat_d = np.arange(Dk) * (Dk + 1)
        n_e = len(flat_h) + Dk
        self._scatter = sp.csr_matrix(
            (np.ones(n_e), (np.concatenate([flat_h, flat_d]), np.arange(n_e))),
            shape=(Dk * Dk, n_e))

    def _assemble(self, values: np.ndarray) -> np.ndarray:
        n = values.shape[0]
        out = (self._scatter @ values.T).T
        return np.ascontiguousarray(out).reshape(n, self.D_k, self.D_k)

    def blocks(self, k, t, derivatives: bool = True):
        """Stacked blocks for broadcastable arrays ``k``, ``t``.

        Returns ``H`` (and ``dHdk``, ``dHdt`` when requested) with shape
        ``(N, D_k, D_k)`` where ``N`` is the broadcast size.
        """
        p = self.params
        k, t = np.broadcast_arrays(np.atleast_1d(np.asarray(k, float)), np.atleast_1d(np.asarray(t, float)))
        k, t = k.ravel()[:, None], t.ravel()[:, None]
        phi = p.phi0 + p.omega * t
        s, c = np.sin(phi), np.cos(phi)
        amp = self.hop_factor * (p.J + p.delta0 * self.hop_parity * s)
        phase = np.exp(-1j * (self.hop_dir * p.omega_F * t + CELL * self.hop_shift * k))
        hv = amp * phase
        dv = p.U * self.diag_double + p.Delta0 * self.diag_parity * c
        H = self._assemble(np.concatenate([hv, dv.astype(complex)], axis=1))
        if not derivatives:
            return H
        zero = np.zeros_like(dv, dtype=complex)
        dk = -1j * CELL * self.hop_shift * hv
        dk = self._assemble(np.concatenate([dk, zero], axis=1))
        dt_h = (self.hop_factor * p.delta0 * self.hop_parity * p.omega * c * phase
                - 1j * self.hop_dir * p.omega_F * hv)
        dt_d = -p.Delta0 * p.omega * self.diag_parity * s
        dt = self._assemble(np.concatenate([dt_h, dt_d.astype(complex)], axis=1))
        return H, dk, dt


@lru_cache(maxsize=64)
def block_builder(params: ModelParams) -> BlockBuilder:
    return BlockBuilder(params)


def build_momentum_block(params: ModelParams, k: float, t: float) -> MomentumBlock:
    """Bloch-sector Hamiltonian at quasimomentum ``k`` in ``[0, 2 pi / d)``."""
    if params.boundary != "periodic":
        raise ValueError("momentum blocks need a periodic chain")
    if not 0 <= k < 2 * math.pi / CELL:
        raise ValueError(f"k={k} outside the fundamental interval [0, {2 * math.pi / CELL})")
    H, dk, dt = block_builder(params).blocks(k, t)
    return MomentumBlock(k=float(k), t=float(t), H=H[0], dHdk=dk[0], dHdt=dt[0])


def k_grid(params: ModelParams) -> np.ndarray:
    """The ``L`` quasimomenta ``2 pi n / (d L)`` allowed on the periodic ring."""
    L = params.n_cells
    return 2 * math.pi * np.arange(L) / (CELL * L)
