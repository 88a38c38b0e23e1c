"""Distributions induced by the Poisson base-station field.

Powers are normalised by the receiver noise power throughout, so the
interference ``I`` and every received power are dimensionless. The
interference of a Poisson field with lognormal shadowing and power-law
path loss ``d**beta`` is one-sided stable with index ``alpha = 2/beta``;
its Laplace transform is ``exp(-D s**alpha)`` where
``D = c_alpha * Gamma(1 - alpha)``.
"""

from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass, field as dc_field
from typing import Optional, Union

import numpy as np
from scipy import special
from scipy.interpolate import CubicSpline

from .numerics import (
    DEFAULT_QUAD,
    DomainError,
    ModelError,
    QuadSpec,
    gamma_fn,
    hyp1f2,
    lognormal_cdf,
    panel_nodes,
    quad_2d_improper,
    quad_oscillatory_semi_infinite,
)

N_CSID = 504
THERMAL_NOISE_DBM_HZ = -174.0


def db_to_lin(x):
    return np.power(10.0, np.asarray(x, dtype=float) / 10.0)


def lin_to_db(x):
    return 10.0 * np.log10(x)


# ---------------------------------------------------------------------------
# parameter records


@dataclass(frozen=True)
class LinkModel:
    """Power-law link budget ``P_rx = P_tx Z / d**beta`` with ``d`` in meters."""

    beta: float
    d_min: float
    pl_intercept_db: float
    tx_power_dbm: float
    noise_density_dbm_hz: float = THERMAL_NOISE_DBM_HZ
    bandwidth_hz: float = 10e6
    noise_figure_db: float = 9.0

    def __post_init__(self):
        if not (math.isfinite(self.beta) and self.beta > 0):
            raise DomainError("beta must be positive and finite")
        if not self.d_min >= 0:
            raise DomainError("d_min must be >= 0")
        if not self.bandwidth_hz > 0:
            raise DomainError("bandwidth_hz must be positive")

    @classmethod
    def from_log_distance(cls, intercept_db_km: float, slope_db: float, tx_power_dbm: float, **kw) -> "LinkModel":
        """Build from ``L[dB] = intercept + slope * log10(d_km)``."""
        return cls(
            beta=slope_db / 10.0,
            pl_intercept_db=intercept_db_km - 3.0 * slope_db,
            tx_power_dbm=tx_power_dbm,
            d_min=kw.pop("d_min", 0.0),
            **kw,
        )

    @property
    def noise_power_dbm(self) -> float:
        return self.noise_density_dbm_hz + 10.0 * math.log10(self.bandwidth_hz) + self.noise_figure_db

    @property
    def p_tilde_db(self) -> float:
        """Transmit power over noise, referred to 1 m."""
        return self.tx_power_dbm - self.pl_intercept_db - self.noise_power_dbm

    @property
    def p_tilde(self) -> float:
        return 10.0 ** (self.p_tilde_db / 10.0)

    def path_loss(self, d):
        d = np.maximum(np.asarray(d, dtype=float), self.d_min)
        return d**self.beta


@dataclass(frozen=True)
class ShadowingModel:
    sigma_x_db: float
    decorrelation_distance_m: float
    velocity_mps: float

    def __post_init__(self):
        if not (0 < self.sigma_x_db < math.inf):
            raise DomainError("sigma_x_db must lie in (0, inf)")
        if not self.decorrelation_distance_m > 0:
            raise DomainError("decorrelation distance must be positive")
        if not self.velocity_mps > 0:
            raise DomainError("velocity must be positive")

    @property
    def sigma_z(self) -> float:
        return self.sigma_x_db * math.log(10.0) / 10.0

    @property
    def correlation_time_s(self) -> float:
        return self.decorrelation_distance_m / self.velocity_mps


@dataclass(frozen=True)
class Unlimited:
    n_csid: int = N_CSID

    @property
    def pool(self) -> int:
        return self.n_csid


@dataclass(frozen=True)
class LimitedSparse:
    n_cell: int

    @property
    def pool(self) -> int:
        return self.n_cell


@dataclass(frozen=True)
class LimitedDense:
    n_cell: int

    @property
    def pool(self) -> int:
        return self.n_cell


CandidateMode = Union[Unlimited, LimitedSparse, LimitedDense]


def hex_intensity(cell_radius_m: float) -> float:
    """BS intensity of a hexagonal layout with the given cell radius."""
    if not cell_radius_m > 0:
        raise DomainError("cell radius must be positive")
    return 2.0 / (3.0 * math.sqrt(3.0) * cell_radius_m**2)


@dataclass(frozen=True)
class FieldModel:
    lambda_bs_per_m2: float
    candidate_mode: CandidateMode = dc_field(default_factory=Unlimited)
    k: int = 8

    def __post_init__(self):
        if not self.lambda_bs_per_m2 > 0:
            raise DomainError("BS intensity must be positive")
        if self.k < 1:
            raise DomainError("measurement capability k must be >= 1")
        if self.candidate_mode.pool < 1:
            raise DomainError("candidate pool must hold at least one cell")
        if not isinstance(self.candidate_mode, LimitedDense) and self.k > self.candidate_mode.pool:
            raise DomainError("retention k/pool must not exceed 1")

    @classmethod
    def from_cell_radius(cls, cell_radius_m: float, candidate_mode: CandidateMode = None, k: int = 8) -> "FieldModel":
        return cls(hex_intensity(cell_radius_m), candidate_mode or Unlimited(), k)

    @property
    def retention(self) -> float:
        return min(self.k, self.candidate_mode.pool) / self.candidate_mode.pool

    @property
    def k_hat(self) -> int:
        return min(self.k, self.candidate_mode.pool)


@dataclass(frozen=True)
class StableParams:
    alpha: float
    c_alpha: float
    delta: float
    sigma_z: float

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ModelError("alpha must lie in (0, 1)")
        if self.c_alpha < 0:
            raise ModelError("c_alpha must be non-negative")

    @property
    def laplace_scale(self) -> float:
        """``D`` in ``E exp(-s I) = exp(-D s**alpha)``."""
        return self.c_alpha * math.gamma(1.0 - self.alpha)

    @property
    def scale(self) -> float:
        """Natural scale of the interference, ``delta**(1/alpha)``."""
        return self.delta ** (1.0 / self.alpha)


def make_stable_params(link: LinkModel, shadow: ShadowingModel, fieldm: FieldModel) -> StableParams:
    if link.beta <= 2:
        raise ModelError("heavy-tail non-integrable: beta must exceed 2")
    alpha = 2.0 / link.beta
    sz = shadow.sigma_z
    c_alpha = math.pi * fieldm.lambda_bs_per_m2 * link.p_tilde**alpha * math.exp(alpha**2 * sz**2 / 2.0)
    delta = c_alpha * gamma_fn(1.0 - alpha) * math.cos(math.pi * alpha / 2.0)
    return StableParams(alpha, c_alpha, delta, sz)


@dataclass(frozen=True)
class TailTable:
    gamma_grid: np.ndarray
    tail: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.gamma_grid, dtype=float)
        t = np.asarray(self.tail, dtype=float)
        if g.ndim != 1 or g.shape != t.shape or g.size < 2:
            raise DomainError("tail table needs matching 1-D grids with >= 2 points")
        if np.any(np.diff(g) <= 0):
            raise DomainError("gamma_grid must be strictly increasing")
        if np.any((t < 0) | (t > 1)):
            raise DomainError("tail values must lie in [0, 1]")
        if np.any(np.diff(t) > 1e-12):
            raise DomainError("tail must be non-increasing")
        object.__setattr__(self, "gamma_grid", g)
        object.__setattr__(self, "tail", t)

    def __call__(self, gamma):
        """Tail at ``gamma`` by log-log interpolation, 1 below and 0 far above the grid."""
        g = np.asarray(gamma, dtype=float)
        with np.errstate(divide="ignore"):
            lt = np.log(np.maximum(self.tail, 1e-300))
            out = np.exp(np.interp(np.log(np.maximum(g, 1e-300)), np.log(self.gamma_grid), lt))
        # the log floor stands in for exact zeros
        out = np.where(out < 1e-290, 0.0, out)
        out = np.where(g < self.gamma_grid[0], 1.0, out)
        out = np.where(g > self.gamma_grid[-1], self._extrapolate(g), out)
        return float(out) if out.ndim == 0 else out

    def edge_rate(self) -> float:
        """Decay rate of the exponential continuation beyond the grid, 0 for a flat end.

        The rate matches the slope of ``log tail`` at the last grid point,
        taken from the log-log secant of the last two points so that a
        power-law end gives the same continuation at any grid spacing.
        """
        g0, g1 = self.gamma_grid[-2:]
        t0, t1 = self.tail[-2:]
        if t1 <= 0 or t0 <= t1:
            return 0.0
        drop = math.log(t0) - math.log(t1)
        if g0 > 0:
            return drop / (g1 * math.log(g1 / g0))
        return drop / (g1 - g0)

    def _extrapolate(self, g):
        rate = self.edge_rate()
        if rate == 0.0:
            # a flat end is read as the tail stopping at the grid edge
            return np.zeros_like(g)
        return self.tail[-1] * np.exp(-rate * (g - self.gamma_grid[-1]))


def default_gamma_grid(n: int = 81, lo_db: float = -20.0, hi_db: float = 20.0) -> np.ndarray:
    return np.logspace(lo_db / 10.0, hi_db / 10.0, n)


# ---------------------------------------------------------------------------
# interference law


def _stable_series(x, alpha, laplace_scale, want_pdf):
    # convergent large-x expansion of the one-sided stable law (alpha < 1)
    x = np.asarray(x, dtype=float)
    z = laplace_scale * x ** (-alpha)
    out = np.zeros_like(x)
    for n in range(1, 400):
        if want_pdf:
            coef = special.gammaln(n * alpha + 1.0) - special.gammaln(n + 1.0)
        else:
            coef = special.gammaln(n * alpha) - special.gammaln(n + 1.0)
        size = np.exp(coef + n * np.log(z))
        out = out + (-1.0) ** (n + 1) * math.sin(n * math.pi * alpha) * size
        # bound without the sine factor, which vanishes at some n for rational alpha
        if n > 5 and np.all(size <= 1e-17 * np.maximum(np.abs(out), 1e-300)):
            break
    out = out / math.pi
    return out / x if want_pdf else out


@dataclass(frozen=True)
class InterferenceLaw:
    """One-sided stable law of the normalised interference.

    ``delta`` is the damping constant of the characteristic function
    ``exp(-delta w**alpha (1 - j tan(pi alpha / 2)))``.
    """

    alpha: float
    delta: float
    series_cut: float = 3.0

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ModelError("alpha must lie in (0, 1)")
        if not self.delta > 0:
            raise ModelError("delta must be positive")

    @classmethod
    def from_params(cls, sp: StableParams, fraction: float = 1.0) -> "InterferenceLaw":
        """Law of the interference from a ``fraction`` of the field."""
        return cls(sp.alpha, sp.delta * fraction)

    @property
    def laplace_scale(self) -> float:
        return self.delta / math.cos(math.pi * self.alpha / 2.0)

    @property
    def scale(self) -> float:
        return self.delta ** (1.0 / self.alpha)

    @property
    def series_threshold(self) -> float:
        return (self.laplace_scale / self.series_cut) ** (1.0 / self.alpha)

    def _split(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if np.any(x < 0) or np.any(np.isnan(x)):
            raise DomainError("interference level must be >= 0")
        return x, x >= self.series_threshold

    def pdf(self, x, spec: QuadSpec = DEFAULT_QUAD):
        x, far = self._split(x)
        out = np.zeros_like(x)
        out[far] = _stable_series(x[far], self.alpha, self.laplace_scale, True)
        near = ~far & (x > 0)
        if np.any(near):
            out[near] = self._pdf_quadrature(x[near], spec)
        out = np.where((out < 0) & (out > -spec.abs_tol), 0.0, out)
        return out if out.size > 1 else float(out[0])

    def _pdf_quadrature(self, x, spec):
        a, d = self.alpha, self.delta
        skew = d * math.tan(math.pi * a / 2.0)
        xs = x[:, None]

        def integrand(w):
            wa = w**a
            return np.exp(-d * wa) * np.cos(skew * wa - xs * w) / math.pi

        period = 2.0 * math.pi / max(float(x.max()), 1e-300)
        val, _ = quad_oscillatory_semi_infinite(
            integrand, spec, envelope=lambda w: np.exp(-d * w**a), period=period
        )
        return np.atleast_1d(val)

    def cdf(self, x, spec: QuadSpec = DEFAULT_QUAD):
        x, far = self._split(x)
        out = np.zeros_like(x)
        out[far] = 1.0 - _stable_series(x[far], self.alpha, self.laplace_scale, False)
        near = ~far & (x > 0)
        if np.any(near):
            out[near] = self._cdf_quadrature(x[near], spec)
        out = np.clip(out, 0.0, 1.0)
        return out if out.size > 1 else float(out[0])

    def sf(self, x, spec: QuadSpec = DEFAULT_QUAD):
        x, far = self._split(x)
        out = np.ones_like(x)
        out[far] = _stable_series(x[far], self.alpha, self.laplace_scale, False)
        near = ~far & (x > 0)
        if np.any(near):
            out[near] = 1.0 - self._cdf_quadrature(x[near], spec)
        out = np.clip(out, 0.0, 1.0)
        return out if out.size > 1 else float(out[0])

    def _cdf_quadrature(self, x, spec):
        # Gil-Pelaez inversion
        a, d = self.alpha, self.delta
        skew = d * math.tan(math.pi * a / 2.0)
        xs = x[:, None]

        def integrand(w):
            wa = w**a
            return np.exp(-d * wa) * np.sin(skew * wa - xs * w) / w

        period = 2.0 * math.pi / max(float(x.max()), 1e-300)
        val, _ = quad_oscillatory_semi_infinite(
            integrand, spec, envelope=lambda w: np.exp(-d * w**a), period=period
        )
        return 0.5 - np.atleast_1d(val) / math.pi

    def quantile(self, p: float, spec: QuadSpec = DEFAULT_QUAD) -> float:
        from scipy.optimize import brentq

        if not 0 < p < 1:
            raise DomainError("quantile level must lie in (0, 1)")
        hi = self.scale
        while self.cdf(hi, spec) < p:
            hi *= 4.0
        lo = hi / 4.0
        while lo > 1e-300 and self.cdf(lo, spec) > p:
            lo /= 4.0
        return brentq(lambda t: self.cdf(t, spec) - p, lo, hi, xtol=1e-12 * hi, rtol=1e-10)

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        """Exact draws by the Kanter / Chambers-Mallows-Stuck representation."""
        a = self.alpha
        theta = rng.uniform(0.0, math.pi, size)
        e = rng.exponential(1.0, size)
        part = np.sin(a * theta) / np.sin(theta) ** (1.0 / a)
        ratio = (np.sin((1.0 - a) * theta) / e) ** ((1.0 - a) / a)
        return self.laplace_scale ** (1.0 / a) * part * ratio

    def mixing_rule(self, tail_mass: float = 1e-6, spec: QuadSpec = DEFAULT_QUAD):
        """Nodes and weights for ``E g(I) ~ sum(weights * g(nodes))``.

        The range is cut where the residual mass on either side falls below
        ``tail_mass``; the weights integrate the density, so they add up to
        slightly less than one.
        """
        return _mixing_rule(self.alpha, self.delta, tail_mass, spec)


@functools.lru_cache(maxsize=64)
def _mixing_rule(alpha, delta, tail_mass, spec):
    law = InterferenceLaw(alpha, delta)
    lo = law.quantile(tail_mass, spec)
    # the tail is regularly varying, so the upper cut is explicit
    hi = (law.laplace_scale / math.gamma(1.0 - alpha) / tail_mass) ** (1.0 / alpha)
    while law.sf(hi, spec) > tail_mass:
        hi *= 2.0
    # Gauss-Legendre panels in log x: the density is smooth there
    edges = np.linspace(math.log(lo), math.log(hi), 97)
    t, wt = panel_nodes(edges, 16)
    x = np.exp(t)
    weights = wt * x * np.asarray(law.pdf(x, spec))
    weights.setflags(write=False)
    x.setflags(write=False)
    return x, weights


def interference_pdf(x, sp: StableParams, spec: QuadSpec = DEFAULT_QUAD):
    """Density of the normalised interference of the whole field."""
    return InterferenceLaw.from_params(sp).pdf(x, spec)


# ---------------------------------------------------------------------------
# scanned cells weaker than the strongest one
#
# For a retained cell set of Levy measure rho * c * alpha * p**(-alpha-1) dp,
# the cells below level u contribute the characteristic exponent
#   kappa * (h2(w u) - 1 - j h3(w u)),   kappa = rho * c * u**(-alpha),
# with h2 = 1F2(-a/2; 1/2, 1-a/2; -y^2/4) and
# h3 = a y / (1-a) * 1F2((1-a)/2; 3/2, (3-a)/2; -y^2/4).


class ShotNoiseFactors:
    """``h2(y) - 1`` and ``h3(y)`` for one ``alpha``.

    Below ``Y_SERIES`` the hypergeometric values are tabulated and splined in
    log-log coordinates. Above it both follow from
    ``E(y) = int_y^inf exp(i s) s**(-alpha-1) ds`` through its asymptotic
    expansion, which is accurate to rounding there.
    """

    Y_SERIES = 30.0

    def __init__(self, alpha: float, n_table: int = 1200):
        self.alpha = a = alpha
        ys = np.logspace(-3, math.log10(self.Y_SERIES) + 0.01, n_table)
        h2 = np.array([hyp1f2(-a / 2, 0.5, 1 - a / 2, -y * y / 4) - 1.0 for y in ys])
        h3 = np.array([a * y / (1 - a) * hyp1f2((1 - a) / 2, 1.5, (3 - a) / 2, -y * y / 4) for y in ys])
        self._lo = ys[0]
        self._h2 = CubicSpline(np.log(ys), np.log(h2))
        self._h3 = CubicSpline(np.log(ys), np.log(h3))
        self._g = math.gamma(1 - a)
        # exp(-iy) y^b E(y) is smooth and tends to i; tabulate it in 1/y
        yl = np.logspace(math.log10(self.Y_SERIES), 9, 400)
        env = self._envelope_series(yl)
        inv = 1.0 / yl[::-1]
        self._env_re = CubicSpline(inv, env.real[::-1])
        self._env_im = CubicSpline(inv, env.imag[::-1])

    def _envelope_series(self, y):
        # E(y) ~ i exp(iy) y^-b sum_n (-i)^n (b)_n y^-n with b = alpha + 1
        # summed per element up to its smallest term
        b = self.alpha + 1.0
        term = np.ones_like(y, dtype=complex)
        total = term.copy()
        live = np.ones(y.shape, dtype=bool)
        for n in range(200):
            nxt = term * (-1j) * (b + n) / y
            live &= (np.abs(nxt) < np.abs(term)) & (np.abs(term) > 1e-17)
            if not live.any():
                break
            term = np.where(live, nxt, term)
            total += np.where(live, nxt, 0.0)
        return 1j * total

    def _incomplete(self, y):
        inv = np.minimum(1.0 / y, 1.0 / self.Y_SERIES)
        env = self._env_re(inv) + 1j * self._env_im(inv)
        return np.exp(1j * y) * y ** (-(self.alpha + 1.0)) * env

    def _split(self, y):
        y = np.asarray(y, dtype=float)
        return y, y > self.Y_SERIES

    def h2m1(self, y):
        a = self.alpha
        y, big = self._split(y)
        out = np.empty_like(y)
        if np.any(big):
            yb = y[big]
            out[big] = self._g * math.cos(math.pi * a / 2) * yb**a + a * yb**a * self._incomplete(yb).real - 1.0
        sm = ~big
        ys = y[sm]
        tiny = ys < self._lo
        vals = np.exp(self._h2(np.log(np.maximum(ys, self._lo))))
        out[sm] = np.where(tiny, a * ys**2 / (2 * (2 - a)) - a * ys**4 / (24 * (4 - a)), vals)
        return out

    def h3(self, y):
        a = self.alpha
        y, big = self._split(y)
        out = np.empty_like(y)
        if np.any(big):
            yb = y[big]
            out[big] = self._g * math.sin(math.pi * a / 2) * yb**a - a * yb**a * self._incomplete(yb).imag
        sm = ~big
        ys = y[sm]
        tiny = ys < self._lo
        vals = np.exp(self._h3(np.log(np.maximum(ys, self._lo))))
        out[sm] = np.where(tiny, a * ys / (1 - a) - a * ys**3 / (6 * (3 - a)), vals)
        return out


@functools.lru_cache(maxsize=16)
def shot_noise_factors(alpha: float) -> ShotNoiseFactors:
    return ShotNoiseFactors(alpha)


# ---------------------------------------------------------------------------
# best SINR over a thinned field
#
# Write M for the strongest retained cell and G_u for everything else given
# M = u: the unretained field (stable, damping (1 - rho) delta) plus the
# retained cells weaker than u. Then
#   P(Y > gamma) = int_gamma^inf f_M(u) P(G_u < u/gamma - 1) du,
#   f_M(u) = rho c alpha u^(-alpha-1) exp(-rho c u^(-alpha)).


@dataclass(frozen=True)
class _Residual:
    alpha: float
    c1: float
    rho_c: float
    factors: ShotNoiseFactors
    rest: Optional[InterferenceLaw]
    reach: float = 8.0
    damping_cut: float = 30.0

    def jump_moments(self, u):
        a, kappa = self.alpha, self.rho_c * u ** (-self.alpha)
        mean = kappa * a * u / (1 - a)
        var = kappa * a * u * u / (2 - a)
        return mean, var

    def direct_limit(self, u):
        mean, var = self.jump_moments(u)
        s_rest = self.rest.scale if self.rest is not None else 0.0
        # the weak retained cells have light tails, the unretained field does not
        return max(self.reach * s_rest, mean + 10.0 * math.sqrt(var))

    def sf(self, x, u):
        """``P(G_u > x)`` for scalars."""
        if x <= 0:
            return 1.0
        if x > self.direct_limit(u):
            return self._sf_far(x, u)
        return 1.0 - self._cdf_direct(x, u)

    def _sf_far(self, x, u):
        # a single retained jump above x, or the unretained tail shifted by the
        # mean of the weak retained cells
        a = self.alpha
        jump = self.rho_c * max(x ** (-a) - u ** (-a), 0.0)
        if self.rest is None:
            return min(jump, 1.0)
        mean, _ = self.jump_moments(u)
        return min(float(self.rest.sf(max(x - mean, 0.0))) + jump, 1.0)

    def _exponent(self, w, u):
        a = self.alpha
        kappa = self.rho_c * u ** (-a)
        wa = w**a
        y = w * u
        re = self.c1 * wa + kappa * self.factors.h2m1(y)
        im = self.c1 * math.tan(math.pi * a / 2) * wa + kappa * self.factors.h3(y)
        return re, im

    def _cdf_direct(self, x, u):
        # Gil-Pelaez inversion, graded towards w = 0 with the first-order head
        a = self.alpha
        probe = np.logspace(-20, 20, 801)
        re, _ = self._exponent(probe, u)
        below = np.nonzero(re < self.damping_cut)[0]
        top = probe[min(below[-1] + 1, probe.size - 1)] if below.size else probe[0]
        freq = max(x, u, 1e-300)
        width = min(2.0 * math.pi / freq, top)
        geo = width * 2.0 ** -np.arange(64, 0, -1)
        n_uniform = max(1, int(math.ceil((top - width) / width)))
        edges = np.concatenate([geo, np.linspace(width, max(top, 2 * width), n_uniform + 1)])
        w, wt = panel_nodes(edges, 16)
        re, im = self._exponent(w, u)
        value = np.dot(np.exp(-re) * np.sin(im - w * x) / w, wt)
        w0 = edges[0]
        kappa = self.rho_c * u ** (-a)
        head = self.c1 * math.tan(math.pi * a / 2) * w0**a / a + (kappa * a * u / (1 - a) - x) * w0
        return min(max(0.5 - (value + head) / math.pi, 0.0), 1.0)


def _residual(sp: StableParams, rho: float) -> _Residual:
    rest = InterferenceLaw(sp.alpha, (1 - rho) * sp.delta) if rho < 1 else None
    return _Residual(sp.alpha, (1 - rho) * sp.delta, rho * sp.c_alpha, shot_noise_factors(sp.alpha), rest)


def _tail_factorized(gamma: float, sp: StableParams, rho: float, decades: float = 24.0, per_decade: int = 2) -> float:
    a, rho_c = sp.alpha, rho * sp.c_alpha
    res = _residual(sp, rho)
    lo = math.log(gamma)
    edges = np.linspace(lo, lo + decades * math.log(10.0), int(decades * per_decade) + 1)
    t, wt = panel_nodes(edges, 8)
    u = np.exp(t)
    density = rho_c * a * u ** (-a) * np.exp(-rho_c * u ** (-a))  # f_M(u) * u
    sf = np.array([res.sf(ui / gamma - 1.0, ui) for ui in u])
    miss = float(np.dot(density * sf, wt))
    return -math.expm1(-rho_c * gamma ** (-a)) - miss


def _tail_single_cell(gamma, sp: StableParams, rho: float, spec: QuadSpec = DEFAULT_QUAD):
    # gamma >= 1: at most one cell can clear gamma, so the tail is the mean
    # number of retained cells that do
    moment = _negative_moment(sp.alpha, sp.delta, spec)
    return rho * sp.c_alpha * np.asarray(gamma, dtype=float) ** (-sp.alpha) * moment


@functools.lru_cache(maxsize=64)
def _negative_moment(alpha, delta, spec):
    """``E (1 + I)**(-alpha)`` for the whole-field interference."""
    nodes, weights = _mixing_rule(alpha, delta, 1e-9, spec)
    return float(np.dot(weights, (1.0 + nodes) ** (-alpha)))


def _tail_literal(gamma: float, sp: StableParams, rho: float, spec: QuadSpec = DEFAULT_QUAD, reach: float = 200.0) -> float:
    """Tail as the double integral over (u, w) without factorising by the maximum."""
    a, c1, rho_c = sp.alpha, (1 - rho) * sp.delta, rho * sp.c_alpha
    tan_a = math.tan(math.pi * a / 2)
    factors = shot_noise_factors(a)
    ratio = (1.0 + gamma) / gamma

    def integrand(w, u):
        kappa = rho_c * u ** (-a)
        wa = w**a
        theta = c1 * tan_a * wa + kappa * factors.h3(w * u)
        damp = np.exp(-c1 * wa - kappa * (factors.h2m1(w * u) + 1.0)) / math.pi
        return damp * (-ratio * np.cos(theta + w * (1.0 - u * ratio)) + np.cos(theta - w * u))

    def envelope(w, u):
        kappa = rho_c * u ** (-a)
        return np.exp(-c1 * w**a - kappa * factors.h2m1(w * u))

    # The inner integral is exp(-kappa) (f_G(u) - ratio f_G(u ratio - 1)) with
    # f_G the density of everything but the strongest retained cell. Far out,
    # f_G(u) carries the whole-field tail while at u ratio - 1 > u only the
    # unretained tail remains, shifted by the mean of the weak retained cells.
    law = InterferenceLaw.from_params(sp)
    res = _residual(sp, rho)
    upper = gamma * (1.0 + reach * sp.scale)

    def remainder(U):
        head = float(law.sf(U, spec))
        if res.rest is not None:
            mean, _ = res.jump_moments(U)
            head -= float(res.rest.sf(max(U * ratio - 1.0 - mean, 0.0), spec))
        return math.exp(-rho_c * U ** (-a)) * head

    value, _ = quad_2d_improper(
        integrand,
        gamma,
        spec,
        inner_envelope=envelope,
        inner_period=lambda u: 2.0 * math.pi / (u * ratio),
        u_upper=upper,
        tail=remainder,
    )
    return value


def best_sinr_tail_unlimited(gamma, sp: StableParams, rho_k: float, spec: QuadSpec = DEFAULT_QUAD, method: str = "auto"):
    """``P(Y_k > gamma)`` for the best SINR over a thinned Poisson field.

    ``method`` selects the evaluation: ``"factorized"`` conditions on the
    strongest retained cell and inverts the characteristic function of the
    rest, ``"literal"`` integrates the unfactorised double integral, and
    ``"auto"`` uses the exact single-cell form ``rho c gamma^-alpha
    E(1+I)^-alpha`` for ``gamma >= 1`` (no two cells can both clear such a
    level) and the factorised form below.
    """
    if not 0 < rho_k <= 1:
        raise DomainError("retention must lie in (0, 1]")
    g = np.atleast_1d(np.asarray(gamma, dtype=float))
    if np.any(~(g > 0)) or np.any(~np.isfinite(g)):
        raise DomainError("gamma must be positive and finite")
    if method not in ("auto", "factorized", "literal"):
        raise DomainError(f"unknown method {method!r}")
    out = np.empty_like(g)
    for i, gi in enumerate(g):
        if method == "literal":
            out[i] = _tail_literal(gi, sp, rho_k, spec)
        elif method == "auto" and gi >= 1.0:
            out[i] = _tail_single_cell(gi, sp, rho_k, spec)
        else:
            out[i] = _tail_factorized(gi, sp, rho_k)
    out = np.clip(out, 0.0, 1.0)
    return float(out[0]) if np.ndim(gamma) == 0 else out


# ---------------------------------------------------------------------------
# limited candidate sets


class ApproximationWarning(UserWarning):
    """A closed form is evaluated outside the regime where it is accurate."""


@dataclass(frozen=True)
class DenseCandidatePower:
    """Law of ``P = P~ Z d^-beta`` for ``d`` uniform in area on ``[d_min, R]``."""

    p_tilde: float
    beta: float
    d_min: float
    radius: float
    sigma_z: float

    def __post_init__(self):
        if not 0 < self.d_min < self.radius:
            raise ModelError("dense mode needs 0 < d_min < candidate radius")

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        a_ = 2.0 / self.beta
        sz = self.sigma_z
        w = 2.0 * sz**2 / self.beta**2
        lo = self.p_tilde * self.radius ** (-self.beta)
        hi = self.p_tilde * self.d_min ** (-self.beta)
        scale = self.p_tilde**a_ / (self.radius**2 - self.d_min**2)
        mu1, mu2 = math.log(lo), math.log(hi)
        mu3, mu4 = mu1 + 2 * sz**2 / self.beta, mu2 + 2 * sz**2 / self.beta
        xs = np.maximum(x, 1e-300)
        out = scale * (
            lognormal_cdf(xs, mu1, sz) / lo**a_
            - lognormal_cdf(xs, mu2, sz) / hi**a_
            - math.exp(w) * lognormal_cdf(xs, mu3, sz) / xs**a_
            + math.exp(w) * lognormal_cdf(xs, mu4, sz) / xs**a_
        )
        out = np.clip(np.where(x <= 0, 0.0, out), 0.0, 1.0)
        return float(out) if out.ndim == 0 else out

    def pdf(self, x):
        # central difference with a relative step
        x = np.asarray(x, dtype=float)
        h = x * 1e-4
        return (np.asarray(self.cdf(x + h)) - np.asarray(self.cdf(x - h))) / (2 * h)

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        r2 = rng.uniform(self.d_min**2, self.radius**2, size)
        z = np.exp(rng.normal(0.0, self.sigma_z, size))
        return self.p_tilde * z * r2 ** (-self.beta / 2)


def dense_candidate_power(link: LinkModel, shadow: ShadowingModel, fieldm: FieldModel) -> DenseCandidatePower:
    radius = math.sqrt(fieldm.candidate_mode.pool / (math.pi * fieldm.lambda_bs_per_m2))
    return DenseCandidatePower(link.p_tilde, link.beta, link.d_min, radius, shadow.sigma_z)


def _tail_dense(gamma, link, shadow, fieldm, spec, literal_inner, validity_floor_db):
    if link.d_min <= 0:
        raise ModelError("dense candidate mode requires d_min > 0")
    near_db = link.p_tilde_db - 10.0 * link.beta * math.log10(link.d_min)
    if near_db < validity_floor_db:
        warnings.warn(
            f"mean power at d_min is {near_db:.1f} dB, below the {validity_floor_db:.1f} dB validity floor",
            ApproximationWarning,
            stacklevel=3,
        )
    sp = make_stable_params(link, shadow, fieldm)
    law = InterferenceLaw.from_params(sp)
    power = dense_candidate_power(link, shadow, fieldm)
    k_hat = fieldm.k_hat
    # the best of k_hat candidates lives between the lower and upper power
    # quantiles of a single candidate, widened for the shadowing spread
    lo = power.p_tilde * power.radius ** (-power.beta) * math.exp(-12 * power.sigma_z)
    hi = power.p_tilde * power.d_min ** (-power.beta) * math.exp(12 * power.sigma_z)
    out = []
    for g in np.atleast_1d(gamma):
        if g <= 0:
            out.append(1.0)
            continue
        start = max(g, lo)
        if start >= hi:
            out.append(0.0)
            continue
        edges = np.linspace(math.log(start), math.log(hi), 121)
        t, wt = panel_nodes(edges, 16)
        u = np.exp(t)
        fp = np.asarray(power.cdf(u))
        density = k_hat * np.asarray(power.pdf(u)) * fp ** (k_hat - 1) * u
        if literal_inner:
            inner = np.asarray(law.cdf(u + (u - g) / g, spec)) - np.asarray(law.cdf(u, spec))
        else:
            inner = np.asarray(law.cdf((u - g) / g, spec))
        out.append(float(np.clip(np.dot(density * inner, wt), 0.0, 1.0)))
    return out


def best_sinr_tail_limited(
    gamma,
    link: LinkModel,
    shadow: ShadowingModel,
    fieldm: FieldModel,
    spec: QuadSpec = DEFAULT_QUAD,
    *,
    literal_inner: bool = False,
    validity_floor_db: float = 30.0,
):
    """``P(Y_k > gamma)`` for a neighbour-list candidate set.

    Sparse networks reduce to the unlimited case with retention
    ``k / n_cell``. Dense networks take the best of ``k_hat`` cells drawn
    uniformly from the disc holding ``n_cell`` cells on average, against the
    whole-field interference. ``literal_inner`` swaps the inner factor
    ``F_I((u - gamma)/gamma)`` for ``F_I(u + (u - gamma)/gamma) - F_I(u)``.
    """
    mode = fieldm.candidate_mode
    scalar = np.ndim(gamma) == 0
    g = np.atleast_1d(np.asarray(gamma, dtype=float))
    if np.any(g < 0) or np.any(np.isnan(g)):
        raise DomainError("gamma must be >= 0")
    if isinstance(mode, LimitedSparse):
        sp = make_stable_params(link, shadow, fieldm)
        out = np.ones_like(g)
        pos = g > 0
        if np.any(pos):
            out[pos] = best_sinr_tail_unlimited(g[pos], sp, fieldm.retention, spec)
    elif isinstance(mode, LimitedDense):
        out = np.array(_tail_dense(g, link, shadow, fieldm, spec, literal_inner, validity_floor_db))
    else:
        raise DomainError("best_sinr_tail_limited needs a limited candidate mode")
    return float(out[0]) if scalar else out


def best_sinr_tail(gamma, link, shadow, fieldm, spec: QuadSpec = DEFAULT_QUAD):
    """Tail for whatever candidate mode ``fieldm`` carries."""
    if isinstance(fieldm.candidate_mode, Unlimited):
        g = np.asarray(gamma, dtype=float)
        if np.any(g < 0):
            raise DomainError("gamma must be >= 0")
        sp = make_stable_params(link, shadow, fieldm)
        gs = np.atleast_1d(g)
        out = np.ones_like(gs)
        pos = gs > 0
        if np.any(pos):
            out[pos] = best_sinr_tail_unlimited(gs[pos], sp, fieldm.retention, spec)
        return float(out[0]) if g.ndim == 0 else out
    return best_sinr_tail_limited(gamma, link, shadow, fieldm, spec)


def find_target_prob(gamma_req, link, shadow, fieldm, spec: QuadSpec = DEFAULT_QUAD):
    """``P(Y_k >= gamma_req)``; the law has no atoms so the tail is used as is."""
    return best_sinr_tail(gamma_req, link, shadow, fieldm, spec)


def build_tail_table(link, shadow, fieldm, grid: Optional[np.ndarray] = None, spec: QuadSpec = DEFAULT_QUAD) -> TailTable:
    grid = default_gamma_grid() if grid is None else np.asarray(grid, dtype=float)
    tail = np.asarray(best_sinr_tail(grid, link, shadow, fieldm, spec), dtype=float)
    # remove rounding-level wiggles so the table is exactly monotone
    tail = np.minimum.accumulate(np.clip(tail, 0.0, 1.0))
    return TailTable(grid, tail)


def expected_target_quality(gamma_req: float, tail: TailTable) -> float:
    """``E(Y | Y >= gamma_req)`` from a tabulated tail.

    Trapezoid rule on the table, with the exponential continuation of
    :meth:`TailTable.edge_rate` beyond its end.
    """
    t_req = float(tail(gamma_req))
    if not t_req > 0:
        raise ModelError("tail vanishes at gamma_req; conditional mean undefined")
    g, t = tail.gamma_grid, tail.tail
    keep = g > gamma_req
    ys = np.concatenate([[gamma_req], g[keep]])
    ts = np.concatenate([[t_req], t[keep]])
    body = float(np.trapezoid(ts, ys)) if ys.size > 1 else 0.0
    extra = 0.0
    rate = tail.edge_rate()
    if gamma_req < g[-1] and rate > 0:
        extra = t[-1] / rate
    return gamma_req + (body + extra) / t_req
