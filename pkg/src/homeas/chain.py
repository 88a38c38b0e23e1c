"""Four-state measurement chain: NoScan, Scan, CellSwitch, Fail.

Each measurement period gets its own transition matrix built from the
crossing probabilities at the current serving distance and the
probability of finding a target among the ``k`` scanned cells.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, List, Optional

import numpy as np

from .crossing import Diagnostics, fail_prob, spectral_moments, trig_prob, wdraw_prob
from .field import TailTable, best_sinr_tail, build_tail_table, expected_target_quality, make_stable_params
from .numerics import DEFAULT_QUAD, DomainError, ModelError, NumericError, QuadSpec
from .scenario import Fixed, LogLogistic, Scenario

NO_SCAN, SCAN, CELL_SWITCH, FAIL = range(4)
STATE_NAMES = ("NoScan", "Scan", "CellSwitch", "Fail")


@dataclass(frozen=True)
class StatePMF:
    p: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        if p.shape != (4,):
            raise DomainError("a state distribution has 4 entries")
        if np.any(p < -1e-12) or np.any(p > 1 + 1e-12) or abs(p.sum() - 1.0) > 1e-9:
            raise NumericError("not a probability distribution", float(p.sum()))
        object.__setattr__(self, "p", np.clip(p, 0.0, 1.0))

    def __getitem__(self, state: int) -> float:
        return float(self.p[state])


@dataclass(frozen=True)
class TransitionMatrix:
    rows: np.ndarray
    form: str = "M"

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=float)
        if rows.shape != (4, 4):
            raise DomainError("transition matrices are 4x4")
        if np.any(rows < 0) or np.any(rows > 1):
            raise NumericError("transition probability outside [0, 1]")
        if np.max(np.abs(rows.sum(axis=1) - 1.0)) > 1e-12:
            raise NumericError("matrix is not row-stochastic", float(np.max(np.abs(rows.sum(axis=1) - 1.0))))
        if self.form not in ("M", "N"):
            raise DomainError("form must be 'M' or 'N'")
        object.__setattr__(self, "rows", rows)


@dataclass(frozen=True)
class Metrics:
    fail_prob_F: float
    success_prob_S: float
    target_quality_Q: float
    diagnostics: Diagnostics = dc_field(default_factory=Diagnostics, compare=False)

    def __post_init__(self):
        if self.fail_prob_F + self.success_prob_S > 1 + 1e-9:
            raise NumericError("F + S exceeds 1")
        if not self.target_quality_Q >= 0:
            raise NumericError("Q must be >= 0")


@dataclass(frozen=True)
class PeriodProbabilities:
    fail: float
    trig: float
    wdraw: float


def _unit(p: float, name: str) -> float:
    if not (-1e-12 <= p <= 1 + 1e-12) or p != p:
        raise NumericError(f"{name} probability {p!r} outside [0, 1]")
    return min(max(p, 0.0), 1.0)


class ChainModel:
    """Per-scenario cache of the ingredients of every period's matrix."""

    def __init__(self, scenario: Scenario, spec: QuadSpec = DEFAULT_QUAD, tail_grid: Optional[np.ndarray] = None):
        self.scenario = scenario
        self.spec = spec
        self.tail_grid = tail_grid
        self.thresholds = scenario.thresholds
        self.moments = spectral_moments(scenario.shadow)
        self.stable = make_stable_params(scenario.link, scenario.shadow, scenario.field)
        self.diagnostics = Diagnostics()
        self._events = functools.lru_cache(maxsize=4096)(self._events_uncached)

    def distance(self, m: int) -> float:
        return self.scenario.mobility.distance(m, self.thresholds.t_meas)

    def _events_uncached(self, d: float) -> PeriodProbabilities:
        th, sc = self.thresholds, self.scenario
        args = (th, self.moments, self.stable, sc.link, self.spec)
        fail = _unit(fail_prob(d, *args), "fail")
        if math.isinf(th.gamma_t):
            trig = 1.0 - fail
        else:
            trig = _unit(trig_prob(d, *args, diagnostics=self.diagnostics), "trig")
        wdraw = _unit(wdraw_prob(d, *args), "wdraw")
        if fail + trig > 1 + 1e-9:
            raise NumericError("fail and trig probabilities overlap")
        return PeriodProbabilities(fail, min(trig, 1.0 - fail), wdraw)

    def events(self, d: float) -> PeriodProbabilities:
        return self._events(float(d))

    @functools.cached_property
    def find_required(self) -> float:
        return self._find(self.thresholds.gamma_req)

    @functools.cached_property
    def find_minimum(self) -> float:
        return self._find(self.thresholds.gamma_min)

    def _find(self, gamma: float) -> float:
        sc = self.scenario
        return _unit(float(best_sinr_tail(gamma, sc.link, sc.shadow, sc.field, self.spec)), "find-target")

    @functools.cached_property
    def tail_table(self) -> TailTable:
        sc = self.scenario
        return _cached_tail_table(sc.link, sc.shadow, sc.field, self.spec, None if self.tail_grid is None else tuple(self.tail_grid))

    def conditional_quality(self) -> float:
        """``E(Y | Y >= gamma_req)``, linear."""
        return expected_target_quality(self.thresholds.gamma_req, self.tail_table)

    # rows ---------------------------------------------------------------

    def _row_serving(self, ev: PeriodProbabilities) -> np.ndarray:
        stay = max(1.0 - ev.trig - ev.fail, 0.0)
        return np.array([stay, ev.trig, 0.0, ev.fail])

    def _row_scan(self, ev: PeriodProbabilities) -> np.ndarray:
        # failure dominates, then a found target, then withdrawal
        alive = 1.0 - ev.fail
        found = alive * self.find_required
        back = alive * (1.0 - self.find_required) * ev.wdraw
        return np.array([back, max(1.0 - (back + found + ev.fail), 0.0), found, ev.fail])

    def measurement_matrix(self, m: int) -> TransitionMatrix:
        if m < 1:
            raise DomainError("period index starts at 1")
        ev = self.events(self.distance(m))
        rows = np.vstack([self._row_serving(ev), self._row_scan(ev), np.eye(4)[CELL_SWITCH], np.eye(4)[FAIL]])
        return TransitionMatrix(_restochastize(rows), "M")

    def connected_matrix(self, m: int) -> TransitionMatrix:
        if m < 1:
            raise DomainError("period index starts at 1")
        ev = self.events(self.distance(m))
        fresh = self.events(self.scenario.new_cell_distance_m)
        switch = np.array([max(1.0 - fresh.trig - fresh.fail, 0.0), fresh.trig, 0.0, fresh.fail])
        recover = np.array([0.0, 0.0, self.find_minimum, 1.0 - self.find_minimum])
        rows = np.vstack([self._row_serving(ev), self._row_scan(ev), switch, recover])
        return TransitionMatrix(_restochastize(rows), "N")

    def initial(self) -> StatePMF:
        if self.scenario.continual or math.isinf(self.thresholds.gamma_t):
            scan = 1.0
        else:
            scan = self.events(self.distance(0)).trig
        return StatePMF(np.array([1.0 - scan, scan, 0.0, 0.0]))


def _restochastize(rows: np.ndarray) -> np.ndarray:
    # absorb rounding in the diagonal-type remainder entries so rows sum to 1
    rows = np.clip(rows, 0.0, 1.0)
    excess = rows.sum(axis=1) - 1.0
    for i, e in enumerate(excess):
        if abs(e) > 1e-9:
            raise NumericError(f"row {i + 1} sums to {1 + e!r}")
        j = int(np.argmax(rows[i]))
        rows[i, j] -= e
    return rows


@functools.lru_cache(maxsize=32)
def _cached_tail_table(link, shadow, fieldm, spec, grid):
    return build_tail_table(link, shadow, fieldm, None if grid is None else np.asarray(grid), spec)


@functools.lru_cache(maxsize=64)
def chain_model(scenario: Scenario, spec: QuadSpec = DEFAULT_QUAD) -> ChainModel:
    return ChainModel(scenario, spec)


# ---------------------------------------------------------------------------
# functional interface


def build_measurement_matrix(m: int, scenario: Scenario, spec: QuadSpec = DEFAULT_QUAD) -> TransitionMatrix:
    return chain_model(scenario, spec).measurement_matrix(m)


def build_connected_matrix(m: int, scenario: Scenario, spec: QuadSpec = DEFAULT_QUAD) -> TransitionMatrix:
    return chain_model(scenario, spec).connected_matrix(m)


def initial_pmf(scenario: Scenario, spec: QuadSpec = DEFAULT_QUAD) -> StatePMF:
    return chain_model(scenario, spec).initial()


def evolve(
    pmf0: StatePMF,
    scenario: Optional[Scenario],
    m_c: int,
    *,
    matrix_fn: Optional[Callable[[int], TransitionMatrix]] = None,
    spec: QuadSpec = DEFAULT_QUAD,
) -> List[StatePMF]:
    """``[pi_1, ..., pi_mc]`` with ``pi_m = pi_{m-1} M_m``."""
    if m_c < 1:
        raise DomainError("m_c must be >= 1")
    if matrix_fn is None:
        if scenario is None:
            raise DomainError("need a scenario or a matrix function")
        matrix_fn = chain_model(scenario, spec).measurement_matrix
    p = pmf0.p
    out = []
    for m in range(1, m_c + 1):
        p = p @ matrix_fn(m).rows
        out.append(StatePMF(p))
    return out


def period_masses(duration, t_meas_s: float) -> np.ndarray:
    """``Lambda(((m-1)T, mT])`` for ``m = 1, 2, ...``."""
    if isinstance(duration, Fixed):
        masses = np.zeros(duration.periods(t_meas_s))
        masses[-1] = 1.0
        return masses
    if isinstance(duration, LogLogistic):
        n = max(1, math.ceil(duration.truncation / t_meas_s - 1e-9))
        edges = np.array([duration.cdf(m * t_meas_s) for m in range(n + 1)])
        masses = np.diff(edges)
        if not (np.all(np.isfinite(masses)) and abs(masses.sum() - 1.0) < 1e-9):
            raise ModelError("connection-time distribution is not normalisable")
        return masses
    raise DomainError("unknown duration model")


def _metrics(scenario: Scenario, masses: np.ndarray, spec: QuadSpec) -> Metrics:
    model = chain_model(scenario, spec)
    path = evolve(model.initial(), scenario, len(masses), spec=spec)
    fail = float(sum(w * pm[FAIL] for w, pm in zip(masses, path)))
    success = float(sum(w * pm[CELL_SWITCH] for w, pm in zip(masses, path)))
    quality = success * model.conditional_quality() if success > 0 else 0.0
    return Metrics(fail, success, quality, model.diagnostics)


def metrics_fixed_duration(scenario: Scenario, duration: Optional[Fixed] = None, spec: QuadSpec = DEFAULT_QUAD) -> Metrics:
    duration = duration or scenario.duration
    if not isinstance(duration, Fixed):
        raise DomainError("expected a fixed duration")
    return _metrics(scenario, period_masses(duration, scenario.service.t_meas_s), spec)


def metrics_random_duration(scenario: Scenario, duration=None, spec: QuadSpec = DEFAULT_QUAD) -> Metrics:
    duration = duration or scenario.duration
    return _metrics(scenario, period_masses(duration, scenario.service.t_meas_s), spec)


def metrics(scenario: Scenario, spec: QuadSpec = DEFAULT_QUAD) -> Metrics:
    return metrics_random_duration(scenario, scenario.duration, spec)
