"""Special functions and quadrature engines used by the closed forms.

Nothing in here knows about radio networks. The two quadrature engines
work on vectorised integrands: ``f(w)`` receives a 1-D node array and may
return an array whose last axis matches it, so one call can integrate a
whole family of integrands (for example a density on a grid of points).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import mpmath
import numpy as np
from scipy import special
from scipy.integrate import quad


class DomainError(ValueError):
    """Argument outside the mathematical domain of an operation."""


class ModelError(ValueError):
    """Model parameters that make a closed form undefined."""


class NumericError(ArithmeticError):
    """A numerical procedure failed to reach its tolerance.

    ``estimate`` and ``bound`` carry the best value reached and its error
    bound so callers can still decide to use it.
    """

    def __init__(self, message: str, estimate: float = math.nan, bound: float = math.inf):
        super().__init__(message)
        self.estimate = estimate
        self.bound = bound


class NonIntegrableError(NumericError):
    pass


@dataclass(frozen=True)
class QuadSpec:
    abs_tol: float = 1e-8
    rel_tol: float = 1e-6
    max_subdivisions: int = 200
    tail_truncation_quantile: float = 1e-10

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise DomainError("quadrature tolerances must be positive")
        if self.max_subdivisions < 1:
            raise DomainError("max_subdivisions must be >= 1")
        if not (0 < self.tail_truncation_quantile < 1):
            raise DomainError("tail_truncation_quantile must lie in (0, 1)")

    def tolerance(self, value) -> float:
        return max(self.abs_tol, self.rel_tol * float(np.max(np.abs(value))))


DEFAULT_QUAD = QuadSpec()


# ---------------------------------------------------------------------------
# special functions


def _check_finite(x, name="x"):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} must be finite")
    return arr


def gauss_q(x):
    """Upper tail of the standard normal, ``Q(x) = P(N(0,1) > x)``."""
    arr = _check_finite(x)
    out = 0.5 * special.erfc(arr / math.sqrt(2.0))
    return float(out) if out.ndim == 0 else out


def gamma_fn(x):
    arr = _check_finite(x)
    if np.any((arr <= 0) & (arr == np.round(arr))):
        raise DomainError("gamma function has poles at non-positive integers")
    out = special.gamma(arr)
    return float(out) if out.ndim == 0 else out


def lognormal_cdf(x, mu, sigma):
    """CDF of ``exp(N(mu, sigma^2))`` evaluated at ``x >= 0``."""
    if sigma <= 0:
        raise DomainError("sigma must be positive")
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise DomainError("lognormal CDF is defined for x >= 0")
    with np.errstate(divide="ignore"):
        z = (np.log(arr) - mu) / sigma
    out = special.ndtr(z)
    return float(out) if out.ndim == 0 else out


def _is_nonpositive_int(b):
    return b <= 0 and float(b).is_integer()


def hyp1f2(a: float, b1: float, b2: float, z: float, *, max_terms: int = 100_000) -> float:
    """Generalised hypergeometric function 1F2(a; b1, b2; z) for real arguments.

    The ascending series is summed in double precision when it is
    well-conditioned. For large negative ``z`` the alternating terms grow
    far above the result, so the same series is re-summed in mpmath at a
    working precision sized to the observed cancellation.
    """
    for b in (b1, b2):
        if _is_nonpositive_int(b):
            raise DomainError("lower parameters must not be non-positive integers")
    if not math.isfinite(z):
        raise DomainError("z must be finite")
    if z == 0.0:
        return 1.0

    total, term, biggest = 1.0, 1.0, 1.0
    shrinking = 0
    for n in range(max_terms):
        term *= (a + n) / ((b1 + n) * (b2 + n) * (n + 1)) * z
        total += term
        biggest = max(biggest, abs(term))
        if term == 0.0:
            break
        if n > 10 and abs(term) < 1e-17 * abs(total):
            shrinking += 1
            if shrinking > 3:
                break
    else:
        raise NumericError("1F2 series did not converge", total, abs(term))

    cancellation = biggest / max(abs(total), 1e-300)
    if cancellation < 1e5 and biggest < 1e15 * max(abs(total), 1e-300):
        return total
    return _hyp1f2_extended(a, b1, b2, z, biggest, max_terms)


def _hyp1f2_extended(a, b1, b2, z, biggest, max_terms):
    # precision sized from the largest term; raised until the sum keeps
    # at least 15 significant digits after cancellation
    digits = 25 + int(math.log10(max(biggest, 1.0)))
    for _ in range(6):
        with mpmath.workdps(digits):
            ma, mb1, mb2, mz = (mpmath.mpf(v) for v in (a, b1, b2, z))
            total = mpmath.mpf(1)
            term = mpmath.mpf(1)
            top = mpmath.mpf(1)
            eps = mpmath.mpf(10) ** (-(digits - 2))
            for n in range(max_terms):
                term *= (ma + n) / ((mb1 + n) * (mb2 + n) * (n + 1)) * mz
                total += term
                top = max(top, abs(term))
                if n > 10 and abs(term) < eps * abs(total) and abs(term) < eps:
                    break
            else:
                raise NumericError("1F2 extended-precision series did not converge", float(total), float(abs(term)))
            lost = float(mpmath.log10(top / max(abs(total), mpmath.mpf(10) ** (-digits))))
            if digits - lost >= 18:
                return float(total)
            digits = int(lost) + 25
    raise NumericError("1F2 extended-precision series lost all digits", float(total), float(top))


# ---------------------------------------------------------------------------
# quadrature

_GL = {n: np.polynomial.legendre.leggauss(n) for n in (8, 16)}


def panel_nodes(edges: np.ndarray, order: int = 16):
    """Gauss-Legendre nodes and weights on consecutive panels ``edges``."""
    x, w = _GL[order] if order in _GL else np.polynomial.legendre.leggauss(order)
    a, b = edges[:-1, None], edges[1:, None]
    half = 0.5 * (b - a)
    nodes = (a + b) * 0.5 + half * x
    weights = half * w
    return nodes.ravel(), weights.ravel()


def graded_edges(width: float, upper: float, levels: int = 80) -> np.ndarray:
    """Panel edges: geometric refinement towards 0, then uniform ``width`` panels."""
    width = min(width, upper)
    geo = width * 2.0 ** -np.arange(levels, 0, -1)
    n_uniform = max(1, int(math.ceil(upper / width)))
    uniform = np.linspace(width, upper, n_uniform + 1) if upper > width else np.array([width])
    return np.concatenate([[0.0], geo, uniform])


def _truncation_point(mag: Callable, quantile: float) -> float:
    # block-wise maxima on a log grid so oscillation zeros do not fool the test
    blocks, per_block = 241, 32
    fine = np.logspace(-12, 12, blocks * per_block)
    m = np.abs(np.asarray(mag(fine), dtype=float))
    m = m.reshape(m.shape[:-1] + (blocks, per_block)).max(axis=-1)
    while m.ndim > 1:
        m = m.max(axis=0)
    peak = float(m.max())
    if not np.isfinite(peak):
        raise NonIntegrableError("integrand is not finite on the probe grid")
    if peak == 0.0:
        return 1.0
    small = m < quantile * peak
    if not small[-1]:
        raise NonIntegrableError("integrand envelope never decays")
    bad = np.nonzero(~small)[0]
    last = bad[-1] if bad.size else 0
    return float(fine[min(per_block * last + per_block - 1, fine.size - 1)])


def quad_oscillatory_semi_infinite(
    f: Callable,
    spec: QuadSpec = DEFAULT_QUAD,
    *,
    envelope: Optional[Callable] = None,
    period: Optional[float] = None,
):
    """Integrate a damped, possibly oscillating ``f`` over ``[0, inf)``.

    The range is cut where the damping envelope (given, or detected from
    ``|f|``) falls below ``spec.tail_truncation_quantile`` of its peak.
    The rest is covered with Gauss-Legendre panels of half an oscillation
    period, refined geometrically towards the origin so integrable
    endpoint singularities are resolved. Returns ``(value, error)``.
    """
    upper = _truncation_point(envelope if envelope is not None else f, spec.tail_truncation_quantile)
    width = period / 2.0 if period else upper / 32.0
    width = min(width, upper / 4.0)

    for _ in range(max(1, int(math.log2(spec.max_subdivisions)) + 1)):
        edges = graded_edges(width, upper)
        if len(edges) > 250_000:
            break
        x16, w16 = panel_nodes(edges, 16)
        x8, w8 = panel_nodes(edges, 8)
        fine = np.asarray(f(x16), dtype=float) @ w16
        coarse = np.asarray(f(x8), dtype=float) @ w8
        err = float(np.max(np.abs(fine - coarse)))
        if err <= spec.tolerance(fine):
            return (float(fine) if np.ndim(fine) == 0 else fine), err
        width /= 2.0
    raise NumericError("oscillatory quadrature did not reach tolerance", fine, err)


def quad_2d_improper(
    f: Callable,
    u_lower: float,
    spec: QuadSpec = DEFAULT_QUAD,
    *,
    inner_envelope: Optional[Callable] = None,
    inner_period: Optional[Callable] = None,
    u_scale: float = 1.0,
    u_upper: Optional[float] = None,
    tail: Optional[Callable[[float], float]] = None,
):
    """Nested integral ``int_{u_lower}^inf int_0^inf f(w, u) dw du``.

    The inner integral goes through :func:`quad_oscillatory_semi_infinite`;
    ``inner_envelope(w, u)`` and ``inner_period(u)`` are optional hints.
    Without ``u_upper`` the outer integral runs adaptive Gauss-Kronrod over
    the semi-infinite range after checking that the inner integral decays
    in ``u``. With ``u_upper`` it stops there and adds ``tail(u_upper)``,
    the caller's closed form for the remainder.
    """
    inner_spec = QuadSpec(spec.abs_tol * 1e-2, spec.rel_tol * 1e-2, spec.max_subdivisions, spec.tail_truncation_quantile)

    def inner(u):
        env = (lambda w: inner_envelope(w, u)) if inner_envelope is not None else None
        per = inner_period(u) if inner_period is not None else None
        return quad_oscillatory_semi_infinite(lambda w: f(w, u), inner_spec, envelope=env, period=per)[0]

    if u_upper is None:
        far = u_lower + u_scale * 1e8
        near = inner(u_lower + u_scale)
        if abs(inner(far)) * (far - u_lower) > max(1e-3 * abs(near) * u_scale, spec.abs_tol):
            raise NonIntegrableError("outer integrand does not decay", math.nan, math.inf)
        upper = np.inf
    else:
        if not u_upper > u_lower:
            raise DomainError("u_upper must exceed u_lower")
        upper = u_upper

    value, err = quad(inner, u_lower, upper, epsabs=spec.abs_tol, epsrel=spec.rel_tol, limit=spec.max_subdivisions)
    if tail is not None and u_upper is not None:
        value += tail(u_upper)
    if err > 10 * spec.tolerance(value):
        raise NumericError("outer quadrature did not reach tolerance", value, err)
    return value, err
