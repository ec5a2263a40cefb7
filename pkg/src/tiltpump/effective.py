"""Second-order effective model of a tightly bound pair (doublon).

For ``U`` large compared with every other scale, a doublon at site ``j`` hops
to ``j + 1`` through a virtual pair state with amplitude ``2 t_j^2 / U``
(``t_j`` the single-boson tunneling) and sees twice the staggered potential
and twice the tilt. In the rotating frame and on two sublattices this becomes
a two-level Bloch Hamiltonian ``h . sigma + C``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .model import CELL, ModelParams, hopping_amplitude, parity
from .topology import fhs_flux, integrate_periodic

REGIME_FACTOR = 5.0


class RegimeWarning(UserWarning):
    """Interaction is not large enough for the perturbative model."""


def check_regime(params: ModelParams, warn: bool = True) -> bool:
    if params.U == 0:
        raise ValueError("the doublon model needs U != 0")
    scale = max(abs(params.J), abs(params.delta0), abs(params.Delta0), abs(params.omega_F))
    ok = abs(params.U) >= REGIME_FACTOR * scale
    if not ok and warn:
        warnings.warn(f"U = {params.U} is below {REGIME_FACTOR} x {scale}; doublon model is rough",
                      RegimeWarning, stacklevel=3)
    return ok


def energy_constant(params: ModelParams) -> float:
    """``C = U + 2 (J - delta0)^2 / U + 2 (J + delta0)^2 / U``."""
    J, d, U = params.J, params.delta0, params.U
    return U + 2 * (J - d) ** 2 / U + 2 * (J + d) ** 2 / U


def effective_hopping(params: ModelParams, j, t):
    """Doublon tunneling ``2 (J + delta0 sin(pi j + phi))^2 / U`` on bond ``j -> j+1``."""
    check_regime(params)
    return 2 * hopping_amplitude(params, j, t) ** 2 / params.U


def effective_onsite(params: ModelParams, j, t):
    """Doublon potential ``2 Delta0 cos(pi j + phi) + 2 omega_F j``."""
    check_regime(params)
    phi = params.phi(t)
    return 2 * params.Delta0 * parity(j) * np.cos(phi) + 2 * params.omega_F * np.asarray(j)


def second_order_terms(params: ModelParams, t: float) -> dict:
    """Pieces ``h0, h1, h2`` of the doublon Hamiltonian on ``L_t`` sites.

    ``h0 = U``, ``h1`` the projected potential and tilt, ``h2`` the virtual
    hopping through pair states with energy denominator ``U``. Returns dense
    ``L_t x L_t`` arrays and their sum under ``"total"``.
    """
    check_regime(params)
    L = params.L_t
    j = np.arange(1, L + 1)
    h0 = np.diag(np.full(L, float(params.U)))
    h1 = np.diag(effective_onsite(params, j, t))
    bonds = np.arange(1, L) if params.boundary == "open" else np.arange(1, L + 1)
    tj = hopping_amplitude(params, bonds, t)
    h2 = np.zeros((L, L))
    a, b = bonds - 1, bonds % L
    # each virtual hop |j j> -> |j j+1> carries sqrt(2) t_j
    np.add.at(h2, (a, a), 2 * tj ** 2 / params.U)
    np.add.at(h2, (b, b), 2 * tj ** 2 / params.U)
    np.add.at(h2, (a, b), 2 * tj ** 2 / params.U)
    np.add.at(h2, (b, a), 2 * tj ** 2 / params.U)
    return {"h0": h0, "h1": h1, "h2": h2, "total": h0 + h1 + h2}


# ----------------------------------------------------------- two-level form

@dataclass
class TwoLevelField:
    hx: np.ndarray
    hy: np.ndarray
    hz: np.ndarray
    C: float

    @property
    def norm(self) -> np.ndarray:
        return np.sqrt(self.hx ** 2 + self.hy ** 2 + self.hz ** 2)


def _angles(params: ModelParams, k, t):
    t = np.asarray(t, float)
    phi = params.phi0 + params.omega * t
    kappa = np.asarray(k, float) - 2 * params.omega_F * t
    return phi, kappa


def two_level_field(params: ModelParams, k, t) -> TwoLevelField:
    """Bloch vector of the rotating-frame doublon model on sublattices (even, odd)."""
    check_regime(params)
    J, d, D0, U = params.J, params.delta0, params.Delta0, params.U
    phi, kappa = _angles(params, k, t)
    s = np.sin(phi)
    hx = 4 * (J ** 2 + d ** 2 * s ** 2) / U * np.cos(kappa)
    hy = -4 * (2 * J * d * s) / U * np.sin(kappa)
    hz = 2 * D0 * np.cos(phi) * np.ones_like(kappa)
    return TwoLevelField(hx, hy, hz, energy_constant(params))


def two_level_derivatives(params: ModelParams, k, t):
    """Analytic ``d_k h`` and ``d_t h`` as ``(3, ...)`` arrays."""
    J, d, D0, U, w, wF = (params.J, params.delta0, params.Delta0, params.U,
                          params.omega, params.omega_F)
    phi, kappa = _angles(params, k, t)
    s, c = np.sin(phi), np.cos(phi)
    A = 4 * (J ** 2 + d ** 2 * s ** 2) / U
    B = -8 * J * d * s / U
    dA = 8 * d ** 2 * s * c * w / U
    dB = -8 * J * d * c * w / U
    ck, sk = np.cos(kappa), np.sin(kappa)
    dk = np.stack([-A * sk, B * ck, np.zeros_like(ck)])
    dt = np.stack([dA * ck + 2 * wF * A * sk, dB * sk - 2 * wF * B * ck, -2 * D0 * w * s * np.ones_like(ck)])
    return dk, dt


def analytic_bands(params: ModelParams, k, t):
    """``(eps_+, eps_-) = C +- |h|``."""
    f = two_level_field(params, k, t)
    return f.C + f.norm, f.C - f.norm


def analytic_berry(params: ModelParams, k, t, band: int = -1, form: str = "exact"):
    """Berry curvature of the upper (``band=+1``) or lower (``-1``) doublon band.

    Energies are measured from ``C`` (``eps~ = +-|h|``). ``form="exact"`` is
    the full two-level result; ``form="approx"`` is the compact closed form
    ``32 (J d0 w D0 / U) ((J^2 + d0^2 s^2) / U) (1 - c^2 cos^2 kappa) / eps~^3``,
    which drops a term ``128 D0 J d0^3 s^2 c^2 cos^2 kappa / U^2`` of the
    numerator and so is not exactly quantized.
    """
    if band not in (1, -1):
        raise ValueError("band must be +1 or -1")
    f = two_level_field(params, k, t)
    h = f.norm
    if np.any(h < 1e-12):
        raise ArithmeticError("two-level gap closes (|h| = 0)")
    J, d, D0, U, w = params.J, params.delta0, params.Delta0, params.U, params.omega
    phi, kappa = _angles(params, k, t)
    s2, c2 = np.sin(phi) ** 2, np.cos(phi) ** 2
    ck2 = np.cos(kappa) ** 2
    if form == "exact":
        num = J ** 2 * (1 - c2 * ck2) + d ** 2 * s2 * (1 + c2 * ck2)
    elif form == "approx":
        num = (J ** 2 + d ** 2 * s2) * (1 - c2 * ck2)
    else:
        raise ValueError(f"unknown form {form!r}")
    return 32 * (J * d * w * D0 / U) * num / U / (band * h) ** 3


def numerical_two_level_berry(params: ModelParams, k, t, band: int = -1):
    """Curvature from ``-+ h . (d_k h x d_t h) / (2 |h|^3)`` with analytic derivatives."""
    f = two_level_field(params, k, t)
    h = np.stack([f.hx, f.hy, f.hz])
    dk, dt = two_level_derivatives(params, k, t)
    trip = np.einsum("i...,i...->...", h, np.cross(dk, dt, axis=0))
    return band * trip / (2 * f.norm ** 3)


def band_sign_for(params: ModelParams, full_energy: float) -> int:
    """``+1``/``-1`` for the effective band closest to a full-model energy at ``(0, 0)``."""
    ep, em = analytic_bands(params, 0.0, 0.0)
    return 1 if abs(ep - full_energy) < abs(em - full_energy) else -1


def effective_reduced_chern(params: ModelParams, k0: float = 0.0, duration: float | None = None,
                            band: int = -1, form: str = "exact", tol: float = 1e-9) -> float:
    """``(1/d) int_0^duration F(k0, t) dt`` of the analytic curvature (default ``q T_m``)."""
    duration = params.tilt_q * params.T_m if duration is None else duration
    n0 = 64 * max(1, 2 * params.tilt_p)
    val, _ = integrate_periodic(lambda t: analytic_berry(params, k0, t, band, form),
                                duration, n0, tol)
    return float(val) / CELL


def shift_invariance_residual(params: ModelParams, dk: float, Nk: int = 32, Nt: int = 256,
                              form: str = "exact") -> dict:
    """Largest ``|F(k + dk, t + dk/(2 omega_F)) - F(k, t)|`` over a torus grid."""
    if params.omega_F <= 0:
        raise ValueError("shift invariance needs a tilt")
    k = np.arange(Nk) * (2 * math.pi / CELL) / Nk
    t = np.arange(Nt) * params.T_tot() / Nt
    K, T = np.meshgrid(k, t, indexing="ij")
    F0 = analytic_berry(params, K, T, form=form)
    F1 = analytic_berry(params, K + dk, T + dk / (2 * params.omega_F), form=form)
    res = float(np.max(np.abs(F1 - F0)))
    peak = float(np.max(np.abs(F0)))
    return {"residual": res, "peak": peak, "relative": res / peak}


def _lower_vectors(f: TwoLevelField, band: int) -> np.ndarray:
    """Normalized eigenvectors of ``h . sigma`` for eigenvalue ``band * |h|``, shape ``(..., 2, 1)``."""
    h = band * f.norm
    hm = f.hx - 1j * f.hy
    hp = f.hx + 1j * f.hy
    # two algebraically equivalent forms; use the better conditioned one per point
    a1, b1 = hm, h - f.hz
    a2, b2 = h + f.hz, hp
    use1 = np.abs(b1) >= np.abs(a2)
    a = np.where(use1, a1, a2)
    b = np.where(use1, b1, b2)
    n = np.sqrt(np.abs(a) ** 2 + np.abs(b) ** 2)
    return np.stack([a / n, b / n], axis=-1)[..., None]


def effective_chern_fhs(params: ModelParams, Nk: int = 48, Nt: int | None = None, band: int = -1,
                        chunk: int = 4096, duration: float | None = None) -> float:
    """Lattice-gauge Chern number of a doublon band over ``k in [0, 2 pi/d)``, ``t in [0, q T_m)``.

    The two-level matrix obeys ``H(k + 2 pi/d) = sigma_z H(k) sigma_z``, which
    supplies the gauge embedding of the closing k-links. ``Nt`` defaults to
    96 points per ``2 pi`` of ``kappa = k - 2 omega_F t`` (at least 48 q).
    ``duration`` replaces ``q T_m`` by any multiple of it.
    """
    T = params.T_tot() if duration is None else duration
    periods = max(1, round(T / params.T_tot()))
    if Nt is None:
        Nt = periods * max(48 * params.tilt_q, 96 * 2 * params.tilt_p)
    k = np.arange(Nk) * (2 * math.pi / CELL) / Nk
    embed = np.diag([1.0, -1.0]).astype(complex)
    total = 0.0
    for a in range(0, Nt, chunk):
        idx = np.arange(a, min(a + chunk, Nt) + 1)
        t = (idx % Nt) * T / Nt
        K, TT = np.meshgrid(k, t, indexing="ij")
        V = _lower_vectors(two_level_field(params, K, TT), band)
        flux, _ = fhs_flux(V, k_embedding=embed)
        total += flux[:, :-1].sum()
    return total / (2 * math.pi)


def reduced_equals_chern_check(params: ModelParams, n_k0: int = 8, form: str = "exact",
                               Nk: int = 48, Nt: int | None = None, duration: float | None = None) -> dict:
    """Compare per-k0 reduced Chern numbers, their zone average and the FHS Chern number.

    Both invariants run over ``duration`` (default ``q T_m``).
    """
    k0s = np.arange(n_k0) * (2 * math.pi / CELL) / n_k0
    per = np.array([effective_reduced_chern(params, k0, duration, form=form) for k0 in k0s])
    mean = float(per.mean())
    chern = float(effective_chern_fhs(params, Nk, Nt, duration=duration))
    vals = np.concatenate([per, [mean, chern]])
    return {"k0": k0s, "reduced": per, "mean_reduced": mean, "chern": chern,
            "max_deviation": float(vals.max() - vals.min()),
            "max_from_integer": float(np.max(np.abs(vals - round(chern))))}
