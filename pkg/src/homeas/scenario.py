"""Scenario records, presets, and the sectioned key-value config format.

Thresholds are entered in dB and converted once to linear values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field, replace
from typing import Optional, Union

import numpy as np
from scipy import stats

from .crossing import Thresholds
from .field import (
    N_CSID,
    FieldModel,
    LimitedDense,
    LimitedSparse,
    LinkModel,
    ShadowingModel,
    Unlimited,
    db_to_lin,
)
from .numerics import DomainError, ModelError

KMH = 1.0 / 3.6


@dataclass(frozen=True)
class Mobility:
    """Straight radial motion away from the serving base station."""

    d0_m: float
    velocity_mps: float

    def __post_init__(self):
        if not self.d0_m >= 0 or not math.isfinite(self.d0_m):
            raise DomainError("d0 must be finite and >= 0")
        if not self.velocity_mps >= 0:
            raise DomainError("velocity must be >= 0")

    def distance(self, m, t_meas_s: float):
        return self.d0_m + self.velocity_mps * m * t_meas_s


@dataclass(frozen=True)
class Fixed:
    t_c: float

    def __post_init__(self):
        if not (self.t_c > 0 and math.isfinite(self.t_c)):
            raise DomainError("t_c must be positive and finite")

    def periods(self, t_meas_s: float) -> int:
        # tolerate float noise such as 5.0 / 0.2 = 25.000000000000004
        return max(1, math.ceil(self.t_c / t_meas_s - 1e-9))


@dataclass(frozen=True)
class LogLogistic:
    """Log-logistic connection time, truncated to ``(0, truncation]``."""

    shape: float
    scale: float
    truncation: float

    def __post_init__(self):
        if not (self.shape > 0 and self.scale > 0):
            raise DomainError("log-logistic shape and scale must be positive")
        if not self.truncation > 0:
            raise ModelError("truncation must be positive for a normalisable distribution")

    def _law(self):
        return stats.fisk(self.shape, scale=self.scale)

    def cdf(self, t):
        law = self._law()
        # (t / scale)**-shape overflows harmlessly for t far below the scale
        with np.errstate(over="ignore"):
            return law.cdf(min(t, self.truncation)) / law.cdf(self.truncation)

    def sample(self, rng, size):
        # inverse transform restricted to the truncated range
        law = self._law()
        u = rng.uniform(0.0, law.cdf(self.truncation), size)
        return law.ppf(u)


DurationModel = Union[Fixed, LogLogistic]


@dataclass(frozen=True)
class ServiceConfig:
    """Service requirement and measurement configuration, dB-valued."""

    gamma_min_db: float = -10.0
    delta_ho_db: float = 2.0
    n310: int = 1
    t310_s: float = 0.0
    t_meas_s: float = 0.2
    mode: str = "continual"
    delta_scan_db: float = 20.0
    tau_t_s: float = 0.2
    tau_w_s: float = 1.024
    gamma_t_db: Optional[float] = None
    gamma_w_db: Optional[float] = None

    def __post_init__(self):
        if self.mode not in ("continual", "triggered"):
            raise DomainError("mode must be 'continual' or 'triggered'")
        if self.n310 < 0 or self.t310_s < 0:
            raise DomainError("n310 and t310 must be >= 0")
        if not math.isfinite(self.gamma_min_db):
            raise DomainError("gamma_min_db must be finite")

    @property
    def tau_min_s(self) -> float:
        # out-of-sync indications arrive every 200 ms
        return 0.2 * self.n310 + self.t310_s

    @property
    def gamma_req_db(self) -> float:
        return self.gamma_min_db + self.delta_ho_db

    def _level(self, override):
        if override is not None:
            return override
        return math.inf if self.mode == "continual" else self.gamma_min_db + self.delta_scan_db

    @property
    def trigger_db(self) -> float:
        return self._level(self.gamma_t_db)

    @property
    def withdraw_db(self) -> float:
        return self._level(self.gamma_w_db)

    def thresholds(self) -> Thresholds:
        lin = lambda v: math.inf if math.isinf(v) else float(db_to_lin(v))  # noqa: E731
        return Thresholds(
            gamma_min=lin(self.gamma_min_db),
            tau_min=self.tau_min_s,
            gamma_t=lin(self.trigger_db),
            tau_t=self.tau_t_s,
            gamma_w=lin(self.withdraw_db),
            tau_w=self.tau_w_s,
            gamma_req=lin(self.gamma_req_db),
            t_meas=self.t_meas_s,
        )


@dataclass(frozen=True)
class Scenario:
    name: str
    link: LinkModel
    shadow: ShadowingModel
    field: FieldModel
    cell_radius_m: float
    service: ServiceConfig = dc_field(default_factory=ServiceConfig)
    mobility: Optional[Mobility] = None
    duration: DurationModel = dc_field(default_factory=lambda: Fixed(5.0))
    new_cell_distance_m: Optional[float] = None

    def __post_init__(self):
        if not self.cell_radius_m > 0:
            raise DomainError("cell radius must be positive")
        if self.mobility is None:
            object.__setattr__(self, "mobility", Mobility(0.8 * self.cell_radius_m, self.shadow.velocity_mps))
        if self.new_cell_distance_m is None:
            object.__setattr__(self, "new_cell_distance_m", 0.5 * self.cell_radius_m)
        if self.mobility.d0_m < self.link.d_min:
            raise DomainError("d0 must be >= d_min")
        if not math.isclose(self.mobility.velocity_mps, self.shadow.velocity_mps, rel_tol=1e-12):
            raise DomainError("mobility and shadowing velocities differ")
        if self.new_cell_distance_m < self.link.d_min:
            raise DomainError("new-cell distance must be >= d_min")
        self.thresholds  # validates the composed thresholds

    @property
    def thresholds(self) -> Thresholds:
        return self.service.thresholds()

    @property
    def continual(self) -> bool:
        return self.thresholds.continual

    @property
    def periods(self) -> int:
        if isinstance(self.duration, Fixed):
            return self.duration.periods(self.service.t_meas_s)
        return max(1, math.ceil(self.duration.truncation / self.service.t_meas_s - 1e-9))

    def with_k(self, k: int) -> "Scenario":
        return replace(self, field=replace(self.field, k=int(k)))

    def with_service(self, **changes) -> "Scenario":
        return replace(self, service=replace(self.service, **changes))

    def with_d0(self, d0_m: float) -> "Scenario":
        return replace(self, mobility=replace(self.mobility, d0_m=d0_m))


_PRESETS = {
    "urban-macro": dict(intercept=128.1, slope=37.6, tx=43.0, radius=1000.0, kmh=50.0),
    "rural-macro": dict(intercept=95.5, slope=34.1, tx=46.0, radius=1732.0, kmh=130.0),
}

PRESET_NAMES = tuple(_PRESETS)


def preset(name: str, *, k: int = 8, mode: str = "continual", gamma_min_db: float = -10.0, **service) -> Scenario:
    """Macro-cell deployment with 10 dB / 50 m shadowing and the LTE service profile."""
    if name not in _PRESETS:
        raise DomainError(f"unknown preset {name!r}; choose from {', '.join(PRESET_NAMES)}")
    p = _PRESETS[name]
    link = LinkModel.from_log_distance(p["intercept"], p["slope"], p["tx"])
    shadow = ShadowingModel(10.0, 50.0, p["kmh"] * KMH)
    return Scenario(
        name=name,
        link=link,
        shadow=shadow,
        field=FieldModel.from_cell_radius(p["radius"], Unlimited(N_CSID), k),
        cell_radius_m=p["radius"],
        service=ServiceConfig(gamma_min_db=gamma_min_db, mode=mode, **service),
    )


def candidate_mode_from(name: str, n_cell: Optional[int], n_csid: int):
    if name == "unlimited":
        return Unlimited(n_csid)
    if n_cell is None:
        raise DomainError("limited candidate sets need n_cell")
    if name == "limited-sparse":
        return LimitedSparse(n_cell)
    if name == "limited-dense":
        return LimitedDense(n_cell)
    raise DomainError("candidate_set must be unlimited, limited-sparse or limited-dense")


def candidate_mode_name(mode) -> str:
    return {Unlimited: "unlimited", LimitedSparse: "limited-sparse", LimitedDense: "limited-dense"}[type(mode)]
