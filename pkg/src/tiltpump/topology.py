"""Berry curvature, Chern numbers and reduced Chern numbers on the ``(k, t)`` torus.

Curvature convention: ``F = i(<d_t u|d_k u> - <d_k u|d_t u>)``, the anomalous
velocity of a packet, so a band with ``F > 0`` pumps to larger site labels.
In sum-over-states form

    F_m = 2 Im sum_{m' != m} <m|d_k H|m'><m'|d_t H|m> / (E_m - E_m')**2 .

A band may be a cluster of several levels; its curvature and Chern number
are then reported per level (trace divided by the cluster size), which is the
mean center-of-mass displacement of a uniformly filled cluster.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np

from .model import CELL, ModelParams, block_builder
from .spectrum import MIN_BAND_GAP, band_label, band_partition, eigh_desc

log = logging.getLogger(__name__)

DEGENERACY_MARGIN = 1e-8
MIN_OVERLAP = 0.1
CRITICAL_MARGIN = 0.05


class DegeneracyError(ArithmeticError):
    """The requested band touches another level."""

    def __init__(self, msg, gap=None):
        super().__init__(msg)
        self.gap = gap


class GapClosureError(DegeneracyError):
    """Neighbouring grid states of a band lost overlap (band crossing on the grid)."""


class CriticalPointError(ValueError):
    """Parameters sit on a critical line where the invariant is undefined."""


@lru_cache(maxsize=128)
def bands_for(params: ModelParams, min_gap: float = MIN_BAND_GAP) -> tuple:
    """Level ranges of the isolated bands, descending, from a coarse torus scan."""
    b = block_builder(params)
    Nt = 24 * params.tilt_q
    ks = np.arange(16) * (2 * math.pi / CELL) / 16
    ts = np.arange(Nt) * params.T_tot() / Nt
    K, T = np.meshgrid(ks, ts, indexing="ij")
    E = np.linalg.eigvalsh(b.blocks(K, T, derivatives=False))[..., ::-1]
    return tuple(band_partition(E, min_gap))


def resolve_band(params: ModelParams, band) -> slice:
    """Accept a band number (0 = highest band), a roman label or a level slice."""
    if isinstance(band, slice):
        return band
    if isinstance(band, str):
        from .spectrum import ROMAN
        band = ROMAN.index(band)
    bands = bands_for(params)
    if not 0 <= band < len(bands):
        raise IndexError(f"band {band} not among the {len(bands)} isolated bands")
    return bands[band]


def _band_mask(sl: slice, D: int) -> np.ndarray:
    mask = np.zeros(D, bool)
    mask[sl] = True
    return mask


def curvature_from_blocks(H, dHdk, dHdt, sl: slice, com=None, per_level: bool = False):
    """Sum-over-states curvature for stacked blocks ``(N, D, D)``.

    ``com`` (block-basis center-of-mass positions) switches from the periodic
    cell gauge to the position gauge, where ``d_k`` also carries the intracell
    COM offset; torus and full-period integrals agree between the two.
    Returns ``(F, min_gap)`` with ``F`` of shape ``(N,)`` (or ``(N, n_band)``).
    """
    e, v = eigh_desc(H)
    vh = np.conj(np.swapaxes(v, -1, -2))
    Mk = vh @ dHdk @ v
    Mt = vh @ dHdt @ v
    D = e.shape[-1]
    inb = _band_mask(sl, D)
    if com is not None:
        X = vh @ (com[None, :, None] * v)
        Mk = Mk - 1j * (e[:, None, :] - e[:, :, None]) * X
    dE = e[:, sl, None] - e[:, None, ~inb]
    gap = np.abs(dE).min() if dE.size else np.inf
    if gap < DEGENERACY_MARGIN:
        raise DegeneracyError(f"band {sl} degenerate with another level (gap {gap:.3g})", gap)
    num = Mk[:, sl][:, :, ~inb] * np.swapaxes(Mt[:, ~inb][:, :, sl], -1, -2)
    F = 2 * np.imag(num / dE ** 2).sum(axis=-1)
    return (F if per_level else F.mean(axis=-1)), gap


def berry_curvature(params: ModelParams, band, k, t, gauge: str = "cell", chunk: int = 512):
    """Curvature of ``band`` on broadcast arrays ``k``, ``t`` (vectorized)."""
    sl = resolve_band(params, band)
    b = block_builder(params)
    com = b.orbits.com if gauge == "position" else None
    if gauge not in ("cell", "position"):
        raise ValueError(f"unknown gauge {gauge!r}")
    k, t = np.broadcast_arrays(np.asarray(k, float), np.asarray(t, float))
    shape = k.shape
    k, t = k.ravel(), t.ravel()
    out = np.empty(k.size)
    for a in range(0, k.size, chunk):
        H, dk, dt = b.blocks(k[a:a + chunk], t[a:a + chunk])
        out[a:a + chunk], _ = curvature_from_blocks(H, dk, dt, sl, com)
    return out.reshape(shape)


def berry_curvature_point(params: ModelParams, band, k: float, t: float, gauge: str = "cell") -> float:
    return float(berry_curvature(params, band, k, t, gauge))


# --------------------------------------------------------------------- FHS

@dataclass
class ChernResult:
    band: str
    raw: float
    value: int
    Nk: int
    Nt: int
    T_tot: float
    converged: bool
    refined_raw: float | None = None
    min_overlap: float = 1.0
    max_flux: float = 0.0
    n_levels: int = 1

    def to_dict(self):
        return asdict(self)


def fhs_flux(V: np.ndarray, k_embedding: np.ndarray | None = None):
    """Plaquette fluxes of the subspace spanned by ``V`` on a periodic grid.

    ``V`` has shape ``(Nk, Nt, D, n)``. ``k_embedding`` (``D x D`` unitary)
    maps states at ``k = 0`` to the gauge of ``k = 2 pi/d`` when the Bloch
    matrix is not periodic. Orientation: k-link first, then t-link.
    Returns ``(flux, min_overlap)``; ``min_overlap`` is the smallest geometric
    mean singular value of the link overlap matrices.
    """
    n = V.shape[-1]
    Vk = np.roll(V, -1, axis=0)
    if k_embedding is not None:
        Vk[-1] = k_embedding @ Vk[-1]
    Vt = np.roll(V, -1, axis=1)
    Vh = np.conj(np.swapaxes(V, -1, -2))
    Ok = np.linalg.det(Vh @ Vk)
    Ot = np.linalg.det(Vh @ Vt)
    min_ov = min(np.abs(Ok).min(), np.abs(Ot).min()) ** (1.0 / n)
    Uk, Ut = Ok / np.abs(Ok), Ot / np.abs(Ot)
    plaq = Ut * np.roll(Uk, -1, axis=1) / (np.roll(Ut, -1, axis=0) * Uk)
    return -np.angle(plaq), float(min_ov)


def _fhs_once(params: ModelParams, sl: slice, Nk: int, Nt: int, T_tot: float, chunk: int = 4096):
    b = block_builder(params)
    ks = np.arange(Nk) * (2 * math.pi / CELL) / Nk
    ts = np.arange(Nt) * T_tot / Nt
    K, T = np.meshgrid(ks, ts, indexing="ij")
    K, T = K.ravel(), T.ravel()
    D = b.D_k
    inb = _band_mask(sl, D)
    V = np.empty((K.size, D, sl.stop - sl.start), complex)
    gap = np.inf
    for a in range(0, K.size, chunk):
        e, v = eigh_desc(b.blocks(K[a:a + chunk], T[a:a + chunk], derivatives=False))
        V[a:a + chunk] = v[..., sl]
        dE = e[:, sl, None] - e[:, None, ~inb]
        if dE.size:
            gap = min(gap, np.abs(dE).min())
    if gap < DEGENERACY_MARGIN:
        raise DegeneracyError(f"band {sl} degenerate on the grid (gap {gap:.3g})", gap)
    flux, min_ov = fhs_flux(V.reshape(Nk, Nt, D, -1))
    return flux, min_ov


def chern_number_fhs(params: ModelParams, band, Nk: int = 48, Nt: int | None = None,
                     T_tot: float | None = None, refine: bool = True, max_refine: int = 2) -> ChernResult:
    """Lattice-gauge Chern number of a band on the ``(k, t)`` torus.

    Single-level bands use an ``Nk x Nt`` grid of arbitrary quasimomenta.
    Multi-level clusters (scattering bands) are evaluated on the ``L`` momenta
    of the periodic ring, where the cluster subspace is exact, and reported per
    level. With ``refine`` the grid is doubled (t only for clusters) and the
    result is converged when both grids round to the same integer.
    """
    sl = resolve_band(params, band)
    n_levels = sl.stop - sl.start
    T_tot = params.T_tot() if T_tot is None else T_tot
    Nt = 48 * params.tilt_q if Nt is None else Nt
    if n_levels > 1:
        Nk = params.n_cells
    label = _label_for(params, sl)

    def run(nk, nt):
        flux, ov = _fhs_once(params, sl, nk, nt, T_tot)
        if ov < MIN_OVERLAP:
            raise GapClosureError(f"link overlap {ov:.3g} below {MIN_OVERLAP} on {nk}x{nt} grid", ov)
        return flux.sum() / (2 * math.pi) / n_levels, ov, float(np.abs(flux).max())

    raw, ov, fmax = run(Nk, Nt)
    tries = 0
    while fmax > 0.9 * math.pi and tries < max_refine:
        # plaquettes too coarse for an unambiguous branch
        tries += 1
        Nk = Nk if n_levels > 1 else 2 * Nk
        Nt *= 2
        raw, ov, fmax = run(Nk, Nt)
    res = ChernResult(label, float(raw), int(round(raw)), Nk, Nt, T_tot, False,
                      min_overlap=ov, max_flux=fmax, n_levels=n_levels)
    if refine:
        raw2, _, _ = run(Nk if n_levels > 1 else 2 * Nk, 2 * Nt)
        res.refined_raw = float(raw2)
        res.converged = round(raw2) == res.value and abs(raw - res.value) < 0.02
    return res


def _label_for(params: ModelParams, sl: slice) -> str:
    try:
        bands = bands_for(params)
        if sl in bands:
            return band_label(bands.index(sl))
    except Exception:  # noqa: BLE001 - labels are cosmetic
        pass
    return f"levels[{sl.start}:{sl.stop}]"


# ----------------------------------------------------------- reduced Chern

def integrate_periodic(f, duration: float, n0: int = 256, tol: float = 1e-3, max_doublings: int = 14):
    """Composite trapezoid with doubling and one Richardson step.

    ``f`` maps an array of times to values. Stops when successive Richardson
    estimates differ by less than ``tol``. Returns ``(value, n_intervals)``.
    """
    t = np.linspace(0.0, duration, n0 + 1)
    y = f(t)
    h = duration / n0
    T_prev = h * (y.sum() - 0.5 * (y[0] + y[-1]))
    R_prev = None
    n = n0
    for _ in range(max_doublings):
        mid = (np.arange(n) + 0.5) * (duration / n)
        T_new = 0.5 * T_prev + 0.5 * (duration / n) * f(mid).sum()
        n *= 2
        R = (4 * T_new - T_prev) / 3
        if R_prev is not None and abs(R - R_prev) < tol:
            return R, n
        T_prev, R_prev = T_new, R
    log.warning("reduced-Chern quadrature not converged to %g", tol)
    return R_prev, n


def reduced_chern(params: ModelParams, band, k0: float = 0.0, duration: float | None = None,
                  Nt: int = 256, tol: float = 1e-3) -> float:
    """``(1/d) int_0^{duration} F(k0, t) dt``, by default over ``q T_m``."""
    duration = params.tilt_q * params.T_m if duration is None else duration
    sl = resolve_band(params, band)
    val, _ = integrate_periodic(lambda t: berry_curvature(params, sl, k0, t), duration, Nt, tol)
    return float(val) / CELL


# ------------------------------------------------------------ phase diagrams

def check_critical(delta0: float, Delta0: float, margin: float = CRITICAL_MARGIN):
    if abs(delta0) < margin or abs(Delta0) < margin:
        raise CriticalPointError(f"(delta0, Delta0) = ({delta0}, {Delta0}) lies on a critical line")


def _chern_ii(args):
    params, Nk, Nt = args
    try:
        check_critical(params.delta0, params.Delta0)
        r = chern_number_fhs(params, slice(1, 2), Nk=Nk, Nt=Nt, T_tot=3 * params.T_m, refine=False)
        return r.value, r.raw, ""
    except (DegeneracyError, CriticalPointError) as exc:
        return None, float("nan"), str(exc)


def phase_diagram(template: ModelParams, delta0_values, Delta0_values, Nk: int = 48, Nt: int = 144,
                  workers: int = 1):
    """``C_ii`` of the untilted model over a ``(delta0, Delta0)`` grid.

    Returns a dict with the grid, the integer map (``nan`` where a point
    failed) and per-point error messages.
    """
    base = template.replace(tilt_p=0, tilt_q=1)
    jobs = [(base.replace(delta0=float(a), Delta0=float(b)), Nk, Nt)
            for a in delta0_values for b in Delta0_values]
    with ThreadPoolExecutor(max_workers=max(1, workers)) as ex:
        out = list(ex.map(_chern_ii, jobs))
    shape = (len(delta0_values), len(Delta0_values))
    C = np.array([np.nan if v is None else v for v, _, _ in out], float).reshape(shape)
    raw = np.array([r for _, r, _ in out]).reshape(shape)
    errors = {(float(a), float(b)): msg for (p, _, _), (_, _, msg) in zip(jobs, out)
              for a, b in [(p.delta0, p.Delta0)] if msg}
    return {"delta0": np.asarray(delta0_values, float), "Delta0": np.asarray(Delta0_values, float),
            "C": C, "raw": raw, "errors": errors}


def transition_scan(template: ModelParams, Delta0_values, tilts, k0: float = 0.0,
                    with_chern: bool = True, Nk: int = 48, Nt: int = 144, tol: float = 1e-3,
                    workers: int = 1):
    """Band-(ii) reduced Chern numbers across ``Delta0`` for several tilt ratios.

    ``tilts`` is a list of ``(p, q)``; each curve integrates over ``3 T_m``.
    With ``with_chern`` the untilted FHS ``C_ii`` is added as reference.
    """
    Delta0_values = np.asarray(Delta0_values, float)
    if np.any(np.abs(Delta0_values) < 1e-12):
        raise CriticalPointError("Delta0 = 0 is critical")

    def one(args):
        D0, (p_, q_) = args
        params = template.replace(Delta0=float(D0), tilt_p=p_, tilt_q=q_)
        try:
            return reduced_chern(params, slice(1, 2), k0, 3 * params.T_m, tol=tol)
        except DegeneracyError:
            return float("nan")

    jobs = [(D0, tuple(pq)) for pq in tilts for D0 in Delta0_values]
    with ThreadPoolExecutor(max_workers=max(1, workers)) as ex:
        vals = list(ex.map(one, jobs))
    curves = {f"{p_}/{q_}": np.array(vals[i * len(Delta0_values):(i + 1) * len(Delta0_values)])
              for i, (p_, q_) in enumerate(tilts)}
    out = {"Delta0": Delta0_values, "reduced": curves}
    if with_chern:
        base = template.replace(tilt_p=0, tilt_q=1)
        C = []
        for D0 in Delta0_values:
            v, raw, _ = _chern_ii((base.replace(Delta0=float(D0)), Nk, Nt))
            C.append(np.nan if v is None else v)
        out["chern"] = np.array(C, float)
    return out
