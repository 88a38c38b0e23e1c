"""Level crossings of the stationary Gaussian shadowing process.

Levels are in dB relative to the zero-mean shadowing process. Failure,
trigger and withdrawal probabilities are conditioned on the normalised
interference ``I = x`` and averaged over its stable law.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import special

from .field import InterferenceLaw, LinkModel, ShadowingModel, StableParams
from .numerics import DEFAULT_QUAD, DomainError, QuadSpec, gauss_q

INF = math.inf


@dataclass
class Diagnostics:
    """Caller-owned collector for non-fatal numerical events."""

    counts: Counter = field(default_factory=Counter)
    notes: list = field(default_factory=list)

    def record(self, kind: str, n: int = 1, note: Optional[str] = None):
        if n:
            self.counts[kind] += int(n)
            if note is not None:
                self.notes.append(f"{kind}: {note}")

    def __bool__(self):
        return bool(self.counts)


@dataclass(frozen=True)
class SpectralMoments:
    lambda0: float
    lambda2: float
    lambda4: float

    def __post_init__(self):
        if not (self.lambda0 > 0 and self.lambda2 > 0 and self.lambda4 > 0):
            raise DomainError("spectral moments must be positive")

    @property
    def sigma(self) -> float:
        return math.sqrt(self.lambda0)


def spectral_moments(shadow: ShadowingModel) -> SpectralMoments:
    """Moments of ``R(t) = s^2 exp(-(v t)^2 / (2 d_c^2))``."""
    l0 = shadow.sigma_x_db**2
    l2 = (shadow.sigma_x_db * shadow.velocity_mps / shadow.decorrelation_distance_m) ** 2
    l4 = 3.0 * l2 * l2 / l0
    sm = SpectralMoments(l0, l2, l4)
    _check_regularity(shadow, sm)
    return sm


def _check_regularity(shadow: ShadowingModel, sm: SpectralMoments):
    # the Taylor coefficients at 0 must match the moments and the correlation
    # must decay polynomially (here even faster)
    rate = shadow.velocity_mps / shadow.decorrelation_distance_m
    t = 1e-3 / rate
    r = sm.lambda0 * math.exp(-0.5 * (rate * t) ** 2)
    taylor = sm.lambda0 - sm.lambda2 * t * t / 2 + sm.lambda4 * t**4 / 24
    if abs(r - taylor) > 1e-9 * sm.lambda0:
        raise DomainError("correlation model violates the fourth-order expansion")


@dataclass(frozen=True)
class Thresholds:
    """SINR thresholds (linear) and minimum durations (seconds)."""

    gamma_min: float
    tau_min: float
    gamma_t: float = INF
    tau_t: float = 0.2
    gamma_w: float = INF
    tau_w: float = 1.024
    gamma_req: float = 1.0
    t_meas: float = 0.2

    def __post_init__(self):
        if not self.gamma_min > 0:
            raise DomainError("gamma_min must be positive")
        if self.gamma_t < self.gamma_min:
            raise DomainError("gamma_t must be >= gamma_min")
        if not self.gamma_w > 0 or not self.gamma_req > 0:
            raise DomainError("gamma_w and gamma_req must be positive")
        if min(self.tau_min, self.tau_t, self.tau_w) < 0:
            raise DomainError("durations must be >= 0")
        if not self.t_meas > 0:
            raise DomainError("t_meas must be positive")

    @property
    def continual(self) -> bool:
        return math.isinf(self.gamma_t) and math.isinf(self.gamma_w)


# ---------------------------------------------------------------------------
# rates and excursion probabilities


def crossing_rate(gamma_db, sm: SpectralMoments):
    """Expected number of crossings of ``gamma_db`` per second (Rice)."""
    g = np.asarray(gamma_db, dtype=float)
    out = math.sqrt(sm.lambda2 / sm.lambda0) / math.pi * np.exp(-(g**2) / (2 * sm.lambda0))
    return float(out) if out.ndim == 0 else out


def upcrossing_rate(gamma_db, sm: SpectralMoments):
    return 0.5 * crossing_rate(gamma_db, sm)


def _a_coef(gamma_db, sm):
    eu = upcrossing_rate(gamma_db, sm)
    return math.pi / 4.0 * (eu / gauss_q(np.asarray(gamma_db) / sm.sigma)) ** 2


def excursion_prob_v(gamma_db, tau, sm: SpectralMoments):
    """Probability that ``X`` is above ``gamma_db`` for at least ``tau`` seconds.

    High levels use the parabolic-excursion form, low levels the
    exponential-excursion form; the split is at 0 dB.
    """
    g = np.asarray(gamma_db, dtype=float)
    t = np.asarray(tau, dtype=float)
    if np.any(t < 0):
        raise DomainError("tau must be >= 0")
    g, t = np.broadcast_arrays(g, t)
    eu = np.asarray(upcrossing_rate(g, sm))
    q = np.asarray(gauss_q(g / sm.sigma))
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        a = math.pi / 4.0 * (eu / q) ** 2
        high = eu * (t * np.exp(-a * t * t) + np.sqrt(math.pi / a) * special.ndtr(-np.sqrt(2.0 * a) * t))
        mu = eu / q
        low = eu * np.exp(-mu * t) * (t + 1.0 / mu)
    out = np.where(g >= 0, high, low)
    out = np.where(t == 0, q, out)
    out = np.clip(np.nan_to_num(out, nan=0.0), 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def joint_case_bounds(gamma1_db, gamma2_db, tau1, sm: SpectralMoments, standardized: bool = True):
    """``(A, tau1_star, tau2_star)`` of the two-level excursion formula.

    With ``standardized`` the levels enter in units of the process standard
    deviation, which makes ``tau1_star`` a squared time. ``tau2_star`` is
    NaN where ``tau1**2 < tau1_star``.
    """
    g1 = np.asarray(gamma1_db, dtype=float)
    a = np.asarray(_a_coef(g1, sm), dtype=float)
    scale = sm.lambda0 if standardized else 1.0
    t1s = g1 * (np.asarray(gamma2_db, dtype=float) - g1) / (scale * a)
    gap = np.asarray(tau1, dtype=float) ** 2 - t1s
    with np.errstate(invalid="ignore"):
        t2s = np.where(gap >= 0, np.sqrt(np.maximum(gap, 0.0)), np.nan)
    if np.ndim(t2s) == 0:
        return float(a), float(t1s), float(t2s)
    return a, t1s, t2s


def joint_excursion_case(tau1, tau2, t1s, t2s):
    """Case label 1..5 of the two-level formula."""
    tau1, tau2, t1s, t2s = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (tau1, tau2, t1s, t2s)))
    below = tau1 * tau1 <= t1s
    with np.errstate(invalid="ignore"):
        case = np.select(
            [below & (tau2 == 0), below, tau2 == 0, tau2 <= t2s],
            [1, 2, 3, 4],
            5,
        )
    return int(case) if case.ndim == 0 else case


def _w_values(case, eu, a, tau1, tau2, t1s, t2s):
    root = np.sqrt(math.pi / (4.0 * a))
    sa = np.sqrt(a)
    t2s = np.nan_to_num(t2s)
    with np.errstate(over="ignore", invalid="ignore", under="ignore"):
        rise = eu * np.exp(a * tau1 * tau1 - 2 * a * t1s)
        lead = eu * np.exp(-a * tau1 * tau1)
        tail2 = tau2 * np.exp(-a * tau2 * tau2) + root * special.erfc(sa * tau2)
        # erfc(z) e^{z^2} taken in its scaled form to avoid overflow
        shift = np.exp(-a * (tau2 * tau2 - t2s * t2s))
        values = [
            rise * root,
            rise * tail2,
            lead * root,
            lead * (t2s + root * special.erfcx(sa * t2s)),
            lead * shift * (tau2 + root * special.erfcx(sa * tau2)),
        ]
    return np.choose(np.asarray(case) - 1, values)


def joint_excursion_array(gamma1_db, tau1, gamma2_db, tau2, sm: SpectralMoments, *, standardized: bool = True):
    """Vectorised two-level excursion probability.

    Returns ``(W, n_clamped)``; see :func:`joint_excursion_prob_w`.
    """
    g1, t1, g2, t2 = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (gamma1_db, tau1, gamma2_db, tau2)))
    if np.any(g2 < g1):
        raise DomainError("gamma2 must be >= gamma1")
    if np.any(t1 < 0) or np.any(t2 < 0):
        raise DomainError("durations must be >= 0")
    v1 = np.asarray(excursion_prob_v(g1, t1, sm))
    v2 = np.asarray(excursion_prob_v(g2, t2, sm))
    eu = np.asarray(upcrossing_rate(g1, sm))
    a, t1s, t2s = joint_case_bounds(g1, g2, t1, sm, standardized)
    case = joint_excursion_case(t1, t2, t1s, t2s)
    w = np.asarray(_w_values(case, eu, a, t1, t2, t1s, t2s), dtype=float)
    w = np.where(np.isnan(w), 0.0, w)
    bound = np.minimum(v1, v2)
    over = w > bound
    w = np.clip(np.where(over, bound, w), 0.0, 1.0)
    same = (g1 == g2) & (t1 == t2)
    w = np.where(same, v1, w)
    return w, int(np.count_nonzero(over & ~same))


def joint_excursion_prob_w(
    gamma1_db: float,
    tau1: float,
    gamma2_db: float,
    tau2: float,
    sm: SpectralMoments,
    *,
    standardized: bool = True,
    diagnostics: Optional[Diagnostics] = None,
) -> float:
    """Probability of an excursion above ``gamma1_db`` lasting ``tau1`` together
    with one above ``gamma2_db >= gamma1_db`` lasting ``tau2``.

    Identical events return the single-level probability. Values above
    ``min(V1, V2)`` (possible because the closed form is asymptotic) are
    clamped and counted in ``diagnostics``.
    """
    w, clamped = joint_excursion_array(gamma1_db, tau1, gamma2_db, tau2, sm, standardized=standardized)
    if diagnostics is not None:
        diagnostics.record("w_above_v", clamped)
    return float(w)


# ---------------------------------------------------------------------------
# per-period event probabilities


def db_level(gamma_linear, d, x, link: LinkModel):
    """Shadowing level (dB) at which the serving SINR equals ``gamma_linear``."""
    g = np.asarray(gamma_linear, dtype=float)
    if np.any(~(g > 0)):
        raise DomainError("gamma must be positive")
    xv = np.asarray(x, dtype=float)
    if np.any(xv < 0):
        raise DomainError("interference must be >= 0")
    out = 10.0 * np.log10(g * link.path_loss(d) * (1.0 + xv) / link.p_tilde)
    return float(out) if np.ndim(out) == 0 else out


def _mixing(sp: StableParams, spec: QuadSpec):
    return InterferenceLaw.from_params(sp).mixing_rule(1e-6, spec)


def fail_prob(d_m, th: Thresholds, sm: SpectralMoments, sp: StableParams, link: LinkModel, spec: QuadSpec = DEFAULT_QUAD) -> float:
    """Probability of a qualifying down-excursion below ``gamma_min`` in a period."""
    nodes, weights = _mixing(sp, spec)
    level = -np.asarray(db_level(th.gamma_min, d_m, nodes, link))
    v = excursion_prob_v(level, th.tau_min, sm)
    return float(np.clip(np.dot(weights, v), 0.0, 1.0))


def trig_prob(
    d_m,
    th: Thresholds,
    sm: SpectralMoments,
    sp: StableParams,
    link: LinkModel,
    spec: QuadSpec = DEFAULT_QUAD,
    *,
    standardized: bool = True,
    diagnostics: Optional[Diagnostics] = None,
) -> float:
    """Probability that scanning is triggered in a period without a failure."""
    if th.gamma_t < th.gamma_min:
        raise DomainError("gamma_t must be >= gamma_min")
    if math.isinf(th.gamma_t):
        return 1.0 - fail_prob(d_m, th, sm, sp, link, spec)
    nodes, weights = _mixing(sp, spec)
    lo = -np.asarray(db_level(th.gamma_t, d_m, nodes, link))
    hi = -np.asarray(db_level(th.gamma_min, d_m, nodes, link))
    v = excursion_prob_v(lo, th.tau_t, sm)
    w, clamped = joint_excursion_array(lo, th.tau_t, hi, th.tau_min, sm, standardized=standardized)
    if diagnostics is not None:
        diagnostics.record("w_above_v", clamped)
    diff = v - w
    negative = diff < 0
    if diagnostics is not None:
        diagnostics.record("trig_integrand_floored", int(negative.sum()))
    return float(np.clip(np.dot(weights, np.where(negative, 0.0, diff)), 0.0, 1.0))


def wdraw_prob(d_m, th: Thresholds, sm: SpectralMoments, sp: StableParams, link: LinkModel, spec: QuadSpec = DEFAULT_QUAD) -> float:
    """Probability of a qualifying up-excursion above ``gamma_w`` in a period."""
    if math.isinf(th.gamma_w):
        return 0.0
    nodes, weights = _mixing(sp, spec)
    level = np.asarray(db_level(th.gamma_w, d_m, nodes, link))
    v = excursion_prob_v(level, th.tau_w, sm)
    return float(np.clip(np.dot(weights, v), 0.0, 1.0))


def branch_gap(sm: SpectralMoments, tau: float, offset_sigma: float = 0.01) -> float:
    """Relative jump of the excursion probability across the 0 dB branch split."""
    eps = offset_sigma * sm.sigma
    up = float(excursion_prob_v(eps, tau, sm))
    down = float(excursion_prob_v(-eps, tau, sm))
    return abs(up - down) / max(up, down)
