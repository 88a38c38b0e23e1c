"""Monte Carlo regeneration of the system from its stochastic ingredients.

Base stations are drawn as a Poisson field around the user, the serving
link's shadowing as a stationary Gaussian path, and measurement outcomes
by running the connected-mode state machine on simulated traces. Every
estimator returns a 95% interval so it can serve as an oracle for the
closed forms.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import signal, stats

from .field import (
    InterferenceLaw,
    LimitedDense,
    LinkModel,
    ShadowingModel,
    TailTable,
    default_gamma_grid,
    make_stable_params,
)
from .numerics import DomainError
from .scenario import Fixed, Scenario

GUARD_FRACTION = 0.01


@dataclass(frozen=True)
class EstimateCI:
    point: float
    half_width_95: float
    n: int
    low: float = math.nan
    high: float = math.nan

    def __post_init__(self):
        if not self.half_width_95 >= 0:
            raise DomainError("half width must be >= 0")

    def contains(self, value: float, widen: float = 0.0) -> bool:
        """Whether ``value`` lies in the interval with each half-width grown by ``widen`` relative."""
        lo = self.low if math.isfinite(self.low) else self.point - self.half_width_95
        hi = self.high if math.isfinite(self.high) else self.point + self.half_width_95
        return self.point - (self.point - lo) * (1 + widen) <= value <= self.point + (hi - self.point) * (1 + widen)


def wilson(successes: int, n: int) -> EstimateCI:
    if n <= 0:
        raise DomainError("need at least one trial")
    ci = stats.binomtest(int(successes), int(n)).proportion_ci(0.95, method="wilson")
    return EstimateCI(successes / n, (ci.high - ci.low) / 2, n, ci.low, ci.high)


def mean_ci(values: np.ndarray) -> EstimateCI:
    values = np.asarray(values, dtype=float)
    n = values.size
    if n == 0:
        raise DomainError("need at least one sample")
    sd = float(values.std(ddof=1)) if n > 1 else 0.0
    half = 1.959963984540054 * sd / math.sqrt(n)
    m = float(values.mean())
    return EstimateCI(m, half, n, m - half, m + half)


@dataclass(frozen=True)
class SimConfig:
    scenario: Scenario
    region_radius_m: float = 5642.0
    dt_s: float = 0.01
    n_traces: int = 1000
    n_field_samples: int = 10_000
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        th = self.scenario.thresholds
        if not self.dt_s > 0:
            raise DomainError("dt must be positive")
        if th.tau_min > 0 and self.dt_s > th.tau_min / 10 + 1e-15:
            raise DomainError("dt must be <= tau_min / 10")
        if math.pi * self.region_radius_m**2 < 20.0 / self.scenario.field.lambda_bs_per_m2:
            raise DomainError("region too small: fewer than 20 expected base stations")
        if self.n_traces < 0 or self.n_field_samples < 0:
            raise DomainError("sample counts must be >= 0")
        if self.workers < 1:
            raise DomainError("workers must be >= 1")


def trace_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for work item ``index``; stable under any scheduling."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(index,)))


# ---------------------------------------------------------------------------
# base-station field


def gen_poisson_field(lam: float, region_radius_m: float, rng: np.random.Generator) -> np.ndarray:
    """Poisson points on a disc centred at the origin; the serving BS is the last row."""
    if not lam > 0:
        raise DomainError("intensity must be positive")
    n = rng.poisson(lam * math.pi * region_radius_m**2)
    r = region_radius_m * np.sqrt(rng.random(n))
    phi = rng.uniform(0.0, 2 * math.pi, n)
    pts = np.column_stack([r * np.cos(phi), r * np.sin(phi)])
    return np.vstack([pts, [[0.0, 0.0]]])


def far_field_mean(link: LinkModel, shadow: ShadowingModel, lam: float, radius_m: float) -> float:
    """Mean interference from base stations beyond ``radius_m``."""
    beta = link.beta
    if beta <= 2:
        return math.inf
    mean_z = math.exp(shadow.sigma_z**2 / 2)
    return 2 * math.pi * lam * link.p_tilde * mean_z * radius_m ** (2 - beta) / (beta - 2)


def interference_radius(scenario: Scenario, region_radius_m: float) -> float:
    """Smallest radius ``>= region_radius_m`` whose outside contribution is below
    1% of the median interference."""
    link, shadow, lam = scenario.link, scenario.shadow, scenario.field.lambda_bs_per_m2
    median = InterferenceLaw.from_params(make_stable_params(link, shadow, scenario.field)).quantile(0.5)
    beta = link.beta
    unit = far_field_mean(link, shadow, lam, 1.0)
    needed = (unit / (GUARD_FRACTION * median)) ** (1.0 / (beta - 2))
    return max(region_radius_m, needed)


def _powers(link, shadow, lam, radius, n, rng, inner=0.0):
    counts = rng.poisson(lam * math.pi * (radius**2 - inner**2), n)
    total = int(counts.sum())
    r = np.sqrt(inner**2 + (radius**2 - inner**2) * rng.random(total))
    z = np.exp(rng.normal(0.0, shadow.sigma_z, total))
    power = link.p_tilde * z / link.path_loss(r)
    owner = np.repeat(np.arange(n), counts)
    return owner, r, power


def sample_interference(scenario: Scenario, n: int, rng: np.random.Generator, region_radius_m: float = 5642.0) -> np.ndarray:
    """Shot-noise interference at the user, normalised by noise power.

    Points beyond the guard radius enter through their mean.
    """
    radius = interference_radius(scenario, region_radius_m)
    link, shadow, lam = scenario.link, scenario.shadow, scenario.field.lambda_bs_per_m2
    owner, _, power = _powers(link, shadow, lam, radius, n, rng)
    return np.bincount(owner, power, minlength=n) + far_field_mean(link, shadow, lam, radius)


def _best_of(values, owner, n):
    best = np.zeros(n)
    np.maximum.at(best, owner, values)
    return best


def sample_best_sinr(scenario: Scenario, n: int, rng: np.random.Generator, region_radius_m: float = 5642.0) -> np.ndarray:
    """Best SINR among the cells scanned in one measurement period."""
    fm = scenario.field
    link, shadow, lam = scenario.link, scenario.shadow, fm.lambda_bs_per_m2
    radius = interference_radius(scenario, region_radius_m)
    dense = isinstance(fm.candidate_mode, LimitedDense)
    if dense:
        cand_radius = math.sqrt(fm.candidate_mode.pool / (math.pi * lam))
        radius = max(radius, cand_radius)
    owner, r, power = _powers(link, shadow, lam, radius, n, rng)
    total = np.bincount(owner, power, minlength=n) + far_field_mean(link, shadow, lam, radius)
    sinr = power / (1.0 + total[owner] - power)
    if dense:
        inside = r <= cand_radius
        # uniform choice of k_hat cells: rank random keys within each sample
        keys = np.where(inside, rng.random(r.size), np.inf)
        order = np.lexsort((keys, owner))
        rank = np.empty(r.size, dtype=np.int64)
        starts = np.searchsorted(owner[order], np.arange(n))
        rank[order] = np.arange(r.size) - np.repeat(starts, np.bincount(owner, minlength=n))
        chosen = inside & (rank < fm.k_hat)
        return _best_of(np.where(chosen, sinr, 0.0), owner, n)
    rho = fm.retention
    keep = rng.random(r.size) < rho
    best = _best_of(np.where(keep, sinr, 0.0), owner, n)
    # retained cells beyond the guard radius: negligible interference, but
    # they keep the candidate set non-empty as in the infinite field
    reach = math.sqrt(radius**2 + 30.0 / (rho * lam * math.pi))
    f_owner, _, f_power = _powers(link, shadow, rho * lam, reach, n, rng, inner=radius)
    far = _best_of(f_power / (1.0 + total[f_owner]), f_owner, n)
    return np.maximum(best, far)


def empirical_tail_yk(scenario: Scenario, n_field_samples: int, rng: np.random.Generator, grid: Optional[np.ndarray] = None,
                      region_radius_m: float = 5642.0, chunk: int = 5000):
    """Empirical ``P(Y_k > gamma)`` on ``grid`` with Wilson intervals.

    Returns ``(TailTable, [EstimateCI per grid point])``.
    """
    if n_field_samples < 1000:
        raise DomainError("need at least 1000 field samples")
    grid = default_gamma_grid() if grid is None else np.asarray(grid, dtype=float)
    hits = np.zeros(grid.size, dtype=np.int64)
    done = 0
    while done < n_field_samples:
        m = min(chunk, n_field_samples - done)
        y = np.sort(sample_best_sinr(scenario, m, rng, region_radius_m))
        hits += m - np.searchsorted(y, grid, side="right")
        done += m
    cis = [wilson(int(h), n_field_samples) for h in hits]
    tail = np.array([c.point for c in cis])
    return TailTable(grid, np.minimum.accumulate(tail)), cis


# ---------------------------------------------------------------------------
# shadowing


def shadowing_kernel(shadow: ShadowingModel, dt_s: float) -> np.ndarray:
    # white noise through a Gaussian kernel of width T/sqrt(2) has a
    # square-exponential autocorrelation of width T = d_c / v
    width = shadow.correlation_time_s / math.sqrt(2.0) / dt_s
    half = int(math.ceil(5 * width))
    taps = np.exp(-0.5 * (np.arange(-half, half + 1) / width) ** 2)
    return shadow.sigma_x_db * taps / math.sqrt(np.sum(taps**2))


def gen_shadowing_trace(shadow: ShadowingModel, dt_s: float, n_steps: int, rng: np.random.Generator) -> np.ndarray:
    """Stationary zero-mean Gaussian path with square-exponential correlation, in dB."""
    if n_steps < 2:
        raise DomainError("n_steps must be >= 2")
    kernel = shadowing_kernel(shadow, dt_s)
    noise = rng.standard_normal(n_steps + kernel.size - 1)
    return signal.fftconvolve(noise, kernel, mode="valid")


def gen_shadowing_windows(shadow: ShadowingModel, dt_s: float, n_windows: int, n_steps: int, rng: np.random.Generator,
                          chunk: int = 1000) -> np.ndarray:
    """Independent stationary segments, one per row."""
    kernel = shadowing_kernel(shadow, dt_s)[None, :]
    out = np.empty((n_windows, n_steps))
    for lo in range(0, n_windows, chunk):
        hi = min(n_windows, lo + chunk)
        noise = rng.standard_normal((hi - lo, n_steps + kernel.size - 1))
        out[lo:hi] = signal.fftconvolve(noise, kernel, mode="valid", axes=1)
    return out


# ---------------------------------------------------------------------------
# excursion detection


def _crossing(t0, t1, y0, y1):
    return t0 + (t1 - t0) * (y0 / (y0 - y1))


def excursion_runs(t: np.ndarray, x: np.ndarray, level: float, below: bool = True) -> List[Tuple[float, float]]:
    """Maximal intervals where the piecewise-linear path is on the requested side."""
    y = (level - x) if below else (x - level)
    inside = y >= 0
    if not inside.any():
        return []
    edges = np.diff(inside.astype(np.int8))
    starts = list(np.nonzero(edges == 1)[0] + 1)
    ends = list(np.nonzero(edges == -1)[0])
    if inside[0]:
        starts.insert(0, 0)
    if inside[-1]:
        ends.append(len(x) - 1)
    runs = []
    for i, j in zip(starts, ends):
        s = t[0] if i == 0 else _crossing(t[i - 1], t[i], -y[i - 1], -y[i])
        e = t[-1] if j == len(x) - 1 else _crossing(t[j], t[j + 1], y[j], y[j + 1])
        runs.append((float(s), float(e)))
    return runs


def first_qualifying_time(runs: Sequence[Tuple[float, float]], window: Tuple[float, float], tau: float) -> Optional[float]:
    """Earliest time an excursion inside ``window`` has lasted ``tau``."""
    lo, hi = window
    for s, e in runs:
        a, b = max(s, lo), min(e, hi)
        if b - a >= tau - 1e-12:
            return a + tau
    return None


def detect_excursion(t, x, level, tau, window, below=True) -> Optional[float]:
    return first_qualifying_time(excursion_runs(np.asarray(t), np.asarray(x), level, below), window, tau)


def brute_force_excursion(t, x, level, tau, window, below=True) -> Optional[float]:
    """Reference detector: try every candidate start and check the path directly."""
    t = np.asarray(t, dtype=float)
    y = (level - np.asarray(x, dtype=float)) if below else (np.asarray(x, dtype=float) - level)
    lo, hi = window

    def value(at):
        return float(np.interp(at, t, y))

    candidates = {lo}
    for i in range(len(t)):
        if lo <= t[i] <= hi:
            candidates.add(float(t[i]))
        if i + 1 < len(t) and (y[i] < 0) != (y[i + 1] < 0):
            c = t[i] + (t[i + 1] - t[i]) * (-y[i]) / (y[i + 1] - y[i])
            if lo <= c <= hi:
                candidates.add(float(c))
    for a in sorted(candidates):
        b = a + tau
        if b > hi + 1e-12 or b > t[-1] + 1e-12:
            continue
        if value(a) < -1e-9 or value(min(b, t[-1])) < -1e-9:
            continue
        if all(y[k] >= 0 for k in range(len(t)) if a < t[k] < b):
            return a + tau
    return None


# ---------------------------------------------------------------------------
# connected-mode traces


@dataclass
class SimTrace:
    time_grid: np.ndarray
    sinr_db: np.ndarray
    events: List[Tuple[str, float]] = dc_field(default_factory=list)
    outcome: str = "Ongoing"
    states: Optional[np.ndarray] = None
    target_sinr: float = math.nan
    t_meas: float = 0.2


def _level_db(gamma_lin, d, x, link):
    return 10 * math.log10(gamma_lin * float(link.path_loss(d)) * (1 + x) / link.p_tilde)


def _window_events(t, x_path, m, d, interference, th, link):
    """Fail / trig / wdraw detection for period ``m`` (window ends at ``m T``)."""
    end = m * th.t_meas
    start = end - th.t_meas
    out = {}
    level = _level_db(th.gamma_min, d, interference, link)
    out["fail"] = detect_excursion(t, x_path, level, th.tau_min, (start - th.tau_min, end), below=True)
    if math.isinf(th.gamma_t):
        out["trig"] = None if out["fail"] is not None else start
    else:
        level_t = _level_db(th.gamma_t, d, interference, link)
        hit = detect_excursion(t, x_path, level_t, th.tau_t, (start - th.tau_t, end), below=True)
        out["trig"] = hit if out["fail"] is None else None
    if math.isinf(th.gamma_w):
        out["wdraw"] = None
    else:
        level_w = _level_db(th.gamma_w, d, interference, link)
        out["wdraw"] = detect_excursion(t, x_path, level_w, th.tau_w, (start - th.tau_w, end), below=False)
    return out


def _horizon(th):
    return max(v for v in (th.tau_min, th.tau_t, th.tau_w, 0.0) if math.isfinite(v))


def simulate_connected_mode(config: SimConfig, rng: np.random.Generator) -> SimTrace:
    """One connected-mode trace of the measurement state machine."""
    sc = config.scenario
    th, link = sc.thresholds, sc.link
    t_meas = th.t_meas
    m_c = sc.periods if isinstance(sc.duration, Fixed) else max(1, math.ceil(float(sc.duration.sample(rng, 1)[0]) / t_meas - 1e-9))
    lead = t_meas + _horizon(th)
    n_steps = int(round((lead + m_c * t_meas) / config.dt_s)) + 1
    t = -lead + config.dt_s * np.arange(n_steps)
    x_path = gen_shadowing_trace(sc.shadow, config.dt_s, n_steps, rng)
    interference = sample_interference(sc, m_c + 1, rng, config.region_radius_m)
    distances = sc.mobility.distance(np.arange(m_c + 1), t_meas)

    period_of = np.clip(np.ceil(t / t_meas - 1e-9).astype(int), 0, m_c)
    d_t = sc.mobility.d0_m + sc.mobility.velocity_mps * np.maximum(t, 0.0)
    sinr_db = link.p_tilde_db - 10 * np.log10(link.path_loss(d_t)) - 10 * np.log10(1 + interference[period_of]) + x_path
    trace = SimTrace(t, sinr_db, t_meas=t_meas)
    states = np.zeros(m_c + 1, dtype=np.int8)

    if math.isinf(th.gamma_t):
        state = 1
    else:
        ev0 = _window_events(t, x_path, 0, distances[0], interference[0], th, link)
        state = 1 if ev0["trig"] is not None else 0
        if state:
            trace.events.append(("trig", ev0["trig"]))
    states[0] = state
    for m in range(1, m_c + 1):
        ev = _window_events(t, x_path, m, distances[m], interference[m], th, link)
        if ev["fail"] is not None:
            trace.events.append(("fail", ev["fail"]))
            trace.outcome, state = "Failure", 3
        elif state == 0:
            if ev["trig"] is not None:
                trace.events.append(("trig", ev["trig"]))
                state = 1
        else:
            y = float(sample_best_sinr(sc, 1, rng, config.region_radius_m)[0])
            if y >= th.gamma_req:
                trace.events.append(("findtarget", m * t_meas))
                trace.outcome, trace.target_sinr, state = "Success", y, 2
            elif ev["wdraw"] is not None:
                trace.events.append(("wdraw", ev["wdraw"]))
                state = 0
        states[m] = state
        if state >= 2:
            states[m + 1:] = state
            break
    trace.events.sort(key=lambda e: e[1])
    trace.states = states
    return trace


def run_traces(config: SimConfig) -> List[SimTrace]:
    def one(i):
        return simulate_connected_mode(config, trace_rng(config.seed, i))

    if config.workers == 1:
        return [one(i) for i in range(config.n_traces)]
    with ThreadPoolExecutor(config.workers) as pool:
        return list(pool.map(one, range(config.n_traces)))


def empirical_metrics(config: SimConfig, traces: Optional[List[SimTrace]] = None):
    """``(F, S, Q)`` with 95% intervals from ``config.n_traces`` traces."""
    if config.n_traces < 100:
        raise DomainError("need at least 100 traces")
    traces = traces if traces is not None else run_traces(config)
    n = len(traces)
    fails = sum(tr.outcome == "Failure" for tr in traces)
    wins = sum(tr.outcome == "Success" for tr in traces)
    quality = np.array([tr.target_sinr if tr.outcome == "Success" else 0.0 for tr in traces])
    return wilson(fails, n), wilson(wins, n), mean_ci(quality)


# ---------------------------------------------------------------------------
# per-window oracles for the crossing formulas


def empirical_period_probs(scenario: Scenario, d_m: float, n_windows: int, rng: np.random.Generator,
                           dt_s: float = 0.01, region_radius_m: float = 5642.0) -> Dict[str, EstimateCI]:
    """Per-period fail / trig / wdraw frequencies at distance ``d_m``.

    Each window gets its own interference draw and an independent
    stationary shadowing segment covering ``[(m-1)T - tau, mT]``.
    """
    th, link = scenario.thresholds, scenario.link
    lead = _horizon(th)
    n_steps = int(round((lead + th.t_meas) / dt_s)) + 1
    t = -lead - th.t_meas + dt_s * np.arange(n_steps)
    x = gen_shadowing_windows(scenario.shadow, dt_s, n_windows, n_steps, rng)
    interference = sample_interference(scenario, n_windows, rng, region_radius_m)
    counts = {"fail": 0, "trig": 0, "wdraw": 0}
    for i in range(n_windows):
        ev = _window_events(t, x[i], 0, d_m, interference[i], th, link)
        for kind in counts:
            counts[kind] += ev[kind] is not None
    return {kind: wilson(c, n_windows) for kind, c in counts.items()}


@dataclass
class CrossingEstimates:
    v: Dict[Tuple[float, float], EstimateCI]
    w: Dict[Tuple[float, float, float, float], EstimateCI]


def empirical_crossing_probs(shadow: ShadowingModel, levels: Iterable[Tuple[float, float]], n_windows: int,
                             rng: np.random.Generator, *, joint: Iterable[Tuple[float, float, float, float]] = (),
                             t_meas: float = 0.2, dt_s: float = 0.01) -> CrossingEstimates:
    """Window frequencies of up-excursions above ``gamma`` lasting ``tau``.

    Every query looks at ``[-tau, t_meas]`` of the same simulated segments,
    so joint and single estimates are computed on matched windows.
    """
    levels = list(levels)
    joint = list(joint)
    taus = [tau for _, tau in levels] + [v for q in joint for v in (q[1], q[3])]
    lead = max(taus + [0.0])
    n_steps = max(2, int(round((lead + t_meas) / dt_s)) + 1)
    t = -lead + dt_s * np.arange(n_steps)
    x = gen_shadowing_windows(shadow, dt_s, n_windows, n_steps, rng)
    single = {q: 0 for q in levels}
    both = {q: 0 for q in joint}
    for i in range(n_windows):
        runs_cache = {}

        def hit(gamma, tau):
            if gamma not in runs_cache:
                runs_cache[gamma] = excursion_runs(t, x[i], gamma, below=False)
            return first_qualifying_time(runs_cache[gamma], (-tau, t_meas), tau) is not None

        for q in levels:
            single[q] += hit(*q)
        for q in joint:
            both[q] += hit(q[0], q[1]) and hit(q[2], q[3])
    return CrossingEstimates({q: wilson(c, n_windows) for q, c in single.items()},
                             {q: wilson(c, n_windows) for q, c in both.items()})


def excursion_lengths(t: np.ndarray, x: np.ndarray, level: float) -> np.ndarray:
    """Lengths of complete up-excursions above ``level``."""
    runs = excursion_runs(t, x, level, below=False)
    return np.array([e - s for s, e in runs if s > t[0] and e < t[-1]])


def write_trace(trace: SimTrace, path: str, events_path: Optional[str] = None):
    """Delimited dump of the sampled path plus an event log."""
    names = ("NoScan", "Scan", "CellSwitch", "Fail")
    with open(path, "w", newline="\n") as fh:
        fh.write("time_s,sinr_db,state\n")
        for ti, si in zip(trace.time_grid, trace.sinr_db):
            state = ""
            if trace.states is not None:
                idx = min(len(trace.states) - 1, max(0, math.ceil(ti / trace.t_meas - 1e-9)))
                state = names[trace.states[idx]]
            fh.write(f"{ti:.6f},{si:.6f},{state}\n")
    if events_path is not None:
        with open(events_path, "w", newline="\n") as fh:
            fh.write("time_s,event_kind\n")
            for kind, at in trace.events:
                fh.write(f"{at:.6f},{kind}\n")
