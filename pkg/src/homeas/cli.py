"""Command-line front end: scenario files, sweeps, validation, CSV and SVG output.

Exit codes: 0 success, 1 partial numeric failure, 2 input error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import chain, crossing, field, sim
from .numerics import DomainError, ModelError, NumericError
from .scenario import (
    KMH,
    PRESET_NAMES,
    Fixed,
    LogLogistic,
    Mobility,
    Scenario,
    ServiceConfig,
    candidate_mode_from,
    candidate_mode_name,
    preset,
)

EXIT_OK, EXIT_NUMERIC, EXIT_INPUT, EXIT_IO = 0, 1, 2, 3


class InputError(Exception):
    """Bad user input; carries the offending line and key when known."""

    def __init__(self, message: str, line: Optional[int] = None, key: Optional[str] = None):
        where = ""
        if line is not None:
            where += f"line {line}: "
        if key is not None:
            where += f"{key}: "
        super().__init__(where + message)
        self.line, self.key = line, key


class BudgetError(InputError):
    pass


# ---------------------------------------------------------------------------
# scenario files

SWEEP_AXES = ("k", "gamma_min_db", "delta_scan_db", "delta_ho_db")

_SCHEMA: Dict[str, Dict[str, type]] = {
    "scenario": {"name": str, "preset": str},
    "link": {
        "path_loss_intercept_db": float,
        "path_loss_slope_db": float,
        "tx_power_dbm": float,
        "d_min_m": float,
        "noise_density_dbm_hz": float,
        "bandwidth_hz": float,
        "noise_figure_db": float,
    },
    "shadowing": {"sigma_x_db": float, "decorrelation_distance_m": float, "velocity_kmh": float},
    "network": {"cell_radius_m": float, "candidate_set": str, "n_cell": int, "n_csid": int, "k": int},
    "service": {"gamma_min_db": float, "delta_ho_db": float, "n310": int, "t310_s": float},
    "measurement": {
        "mode": str,
        "t_meas_s": float,
        "delta_scan_db": float,
        "tau_t_s": float,
        "tau_w_s": float,
        "gamma_t_db": float,
        "gamma_w_db": float,
    },
    "mobility": {"d0_m": float, "new_cell_distance_m": float},
    "duration": {"model": str, "t_c_s": float, "shape": float, "scale_s": float, "truncation_s": float},
    "sweep": {"axis": str, "values": str, "series_axis": str, "series_values": str},
}


def _parse_value(raw: str, kind: type, line: int, key: str):
    try:
        if kind is float:
            v = float(raw)
            if math.isnan(v):
                raise ValueError
            return v
        if kind is int:
            return int(raw)
        return raw
    except ValueError:
        raise InputError(f"cannot parse {raw!r} as {kind.__name__}", line, key) from None


def parse_config_text(text: str) -> Dict[str, Dict[str, tuple]]:
    """``{section: {key: (value, line)}}`` from ``[section]`` / ``key = value`` text."""
    entries: Dict[str, Dict[str, tuple]] = {}
    section = None
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in _SCHEMA:
                raise InputError(f"unknown section [{section}]", number)
            entries.setdefault(section, {})
            continue
        if "=" not in line:
            raise InputError("expected 'key = value'", number)
        if section is None:
            raise InputError("key outside of a section", number)
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _SCHEMA[section]:
            raise InputError(f"unknown key in [{section}]", number, key)
        if key in entries[section]:
            raise InputError("duplicate key", number, key)
        entries[section][key] = (_parse_value(value, _SCHEMA[section][key], number, key), number)
    return entries


def scenario_from_entries(entries) -> Scenario:
    def get(section, key, default=None):
        item = entries.get(section, {}).get(key)
        return default if item is None else item[0]

    def line_of(section, key):
        item = entries.get(section, {}).get(key)
        return None if item is None else item[1]

    base_name = get("scenario", "preset")
    try:
        base = preset(base_name) if base_name is not None else None
    except DomainError as exc:
        raise InputError(str(exc), line_of("scenario", "preset"), "preset") from None

    def need(section, key, fallback):
        v = get(section, key, fallback)
        if v is None:
            raise InputError(f"missing key [{section}] {key}", None, key)
        return v

    try:
        link0 = base.link if base else None
        intercept = need("link", "path_loss_intercept_db", None if base is None else link0.pl_intercept_db + 30 * link0.beta)
        slope = need("link", "path_loss_slope_db", None if base is None else 10 * link0.beta)
        link = field.LinkModel.from_log_distance(
            intercept,
            slope,
            need("link", "tx_power_dbm", None if base is None else link0.tx_power_dbm),
            d_min=get("link", "d_min_m", 0.0 if base is None else link0.d_min),
            noise_density_dbm_hz=get("link", "noise_density_dbm_hz", field.THERMAL_NOISE_DBM_HZ),
            bandwidth_hz=get("link", "bandwidth_hz", 10e6),
            noise_figure_db=get("link", "noise_figure_db", 9.0),
        )
        sh0 = base.shadow if base else None
        velocity = need("shadowing", "velocity_kmh", None if base is None else sh0.velocity_mps / KMH) * KMH
        shadow = field.ShadowingModel(
            get("shadowing", "sigma_x_db", 10.0),
            get("shadowing", "decorrelation_distance_m", 50.0),
            velocity,
        )
        radius = need("network", "cell_radius_m", None if base is None else base.cell_radius_m)
        mode = candidate_mode_from(
            get("network", "candidate_set", "unlimited"), get("network", "n_cell"), get("network", "n_csid", field.N_CSID)
        )
        fm = field.FieldModel.from_cell_radius(radius, mode, get("network", "k", 8))
        service = ServiceConfig(
            gamma_min_db=get("service", "gamma_min_db", -10.0),
            delta_ho_db=get("service", "delta_ho_db", 2.0),
            n310=get("service", "n310", 1),
            t310_s=get("service", "t310_s", 0.0),
            t_meas_s=get("measurement", "t_meas_s", 0.2),
            mode=get("measurement", "mode", "continual"),
            delta_scan_db=get("measurement", "delta_scan_db", 20.0),
            tau_t_s=get("measurement", "tau_t_s", 0.2),
            tau_w_s=get("measurement", "tau_w_s", 1.024),
            gamma_t_db=get("measurement", "gamma_t_db"),
            gamma_w_db=get("measurement", "gamma_w_db"),
        )
        model = get("duration", "model", "fixed")
        if model == "fixed":
            duration = Fixed(get("duration", "t_c_s", 5.0))
        elif model == "log-logistic":
            duration = LogLogistic(
                need("duration", "shape", None), need("duration", "scale_s", None), need("duration", "truncation_s", None)
            )
        else:
            raise InputError("model must be 'fixed' or 'log-logistic'", line_of("duration", "model"), "model")
        mobility = Mobility(get("mobility", "d0_m", 0.8 * radius), velocity)
        return Scenario(
            name=get("scenario", "name", base_name or "custom"),
            link=link,
            shadow=shadow,
            field=fm,
            cell_radius_m=radius,
            service=service,
            mobility=mobility,
            duration=duration,
            new_cell_distance_m=get("mobility", "new_cell_distance_m", 0.5 * radius),
        )
    except (DomainError, ModelError) as exc:
        raise InputError(f"invalid scenario: {exc}") from None


def parse_scenario(path: str) -> Scenario:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise InputError(f"cannot read scenario file: {exc}") from None
    return scenario_from_entries(parse_config_text(text))


def _fmt(v) -> str:
    if isinstance(v, float):
        if math.isinf(v):
            return "inf"
        # shortest of a few precisions that parses back to the same float
        for digits in (10, 12, 15):
            text = format(v, f".{digits}g")
            if float(text) == v:
                return text
        return repr(v)
    return str(v)


def dump_config(sc: Scenario) -> str:
    """Scenario as config text; derived quantities follow as comments."""
    s, link = sc.service, sc.link
    lines = [
        "[scenario]",
        f"name = {sc.name}",
        "",
        "[link]",
        f"path_loss_intercept_db = {_fmt(link.pl_intercept_db + 30 * link.beta)}",
        f"path_loss_slope_db = {_fmt(10 * link.beta)}",
        f"tx_power_dbm = {_fmt(link.tx_power_dbm)}",
        f"d_min_m = {_fmt(link.d_min)}",
        f"noise_density_dbm_hz = {_fmt(link.noise_density_dbm_hz)}",
        f"bandwidth_hz = {_fmt(link.bandwidth_hz)}",
        f"noise_figure_db = {_fmt(link.noise_figure_db)}",
        "",
        "[shadowing]",
        f"sigma_x_db = {_fmt(sc.shadow.sigma_x_db)}",
        f"decorrelation_distance_m = {_fmt(sc.shadow.decorrelation_distance_m)}",
        f"velocity_kmh = {_fmt(sc.shadow.velocity_mps / KMH)}",
        "",
        "[network]",
        f"cell_radius_m = {_fmt(sc.cell_radius_m)}",
        f"candidate_set = {candidate_mode_name(sc.field.candidate_mode)}",
    ]
    mode = sc.field.candidate_mode
    lines.append(f"n_csid = {mode.n_csid}" if hasattr(mode, "n_csid") else f"n_cell = {mode.n_cell}")
    lines += [
        f"k = {sc.field.k}",
        "",
        "[service]",
        f"gamma_min_db = {_fmt(s.gamma_min_db)}",
        f"delta_ho_db = {_fmt(s.delta_ho_db)}",
        f"n310 = {s.n310}",
        f"t310_s = {_fmt(s.t310_s)}",
        "",
        "[measurement]",
        f"mode = {s.mode}",
        f"t_meas_s = {_fmt(s.t_meas_s)}",
        f"delta_scan_db = {_fmt(s.delta_scan_db)}",
        f"tau_t_s = {_fmt(s.tau_t_s)}",
        f"tau_w_s = {_fmt(s.tau_w_s)}",
    ]
    if s.gamma_t_db is not None:
        lines.append(f"gamma_t_db = {_fmt(s.gamma_t_db)}")
    if s.gamma_w_db is not None:
        lines.append(f"gamma_w_db = {_fmt(s.gamma_w_db)}")
    lines += [
        "",
        "[mobility]",
        f"d0_m = {_fmt(sc.mobility.d0_m)}",
        f"new_cell_distance_m = {_fmt(sc.new_cell_distance_m)}",
        "",
        "[duration]",
    ]
    if isinstance(sc.duration, Fixed):
        lines += ["model = fixed", f"t_c_s = {_fmt(sc.duration.t_c)}"]
    else:
        d = sc.duration
        lines += ["model = log-logistic", f"shape = {_fmt(d.shape)}", f"scale_s = {_fmt(d.scale)}", f"truncation_s = {_fmt(d.truncation)}"]
    lines += [
        "",
        "# derived",
        f"# tau_min_s = {_fmt(s.tau_min_s)}",
        f"# gamma_t_db = {_fmt(s.trigger_db)}",
        f"# gamma_w_db = {_fmt(s.withdraw_db)}",
        f"# gamma_req_db = {_fmt(s.gamma_req_db)}",
        f"# velocity_mps = {_fmt(sc.shadow.velocity_mps)}",
        f"# lambda_bs_per_m2 = {_fmt(sc.field.lambda_bs_per_m2)}",
        f"# p_tilde_db = {_fmt(link.p_tilde_db)}",
        f"# periods = {sc.periods}",
    ]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# sweeps and tables


@dataclass(frozen=True)
class SweepSpec:
    axis: str
    values: tuple
    scenario: Scenario
    series_axis: Optional[str] = None
    series_values: tuple = ()

    def __post_init__(self):
        for ax in (self.axis, self.series_axis):
            if ax is not None and ax not in SWEEP_AXES:
                raise InputError(f"sweep axis must be one of {', '.join(SWEEP_AXES)}", key="axis")
        if not self.values:
            raise InputError("sweep values must be non-empty", key="values")
        if self.series_axis is not None and not self.series_values:
            raise InputError("series values must be non-empty", key="series_values")
        for ax, vals in ((self.axis, self.values), (self.series_axis, self.series_values)):
            for v in vals:
                apply_axis(self.scenario, ax, v) if ax else None


def apply_axis(sc: Scenario, axis: str, value) -> Scenario:
    try:
        if axis == "k":
            if float(value) != int(value):
                raise DomainError("k must be an integer")
            return sc.with_k(int(value))
        if axis in ("gamma_min_db", "delta_scan_db", "delta_ho_db"):
            if not math.isfinite(float(value)):
                raise DomainError(f"{axis} must be finite")
            if axis != "gamma_min_db" and float(value) < 0:
                raise DomainError(f"{axis} must be >= 0")
            return sc.with_service(**{axis: float(value)})
    except (DomainError, ModelError) as exc:
        raise InputError(f"bad sweep value {value!r}: {exc}", key=axis) from None
    raise InputError(f"unknown sweep axis {axis!r}", key="axis")


def _values(text: str, axis: str) -> tuple:
    try:
        return tuple(int(v) if axis == "k" else float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise InputError(f"cannot parse sweep values {text!r}", key="values") from None


def sweep_from_entries(entries, sc: Scenario) -> Optional[SweepSpec]:
    sw = entries.get("sweep")
    if not sw:
        return None
    if "axis" not in sw or "values" not in sw:
        raise InputError("[sweep] needs axis and values")
    axis = sw["axis"][0]
    series_axis = sw.get("series_axis", (None,))[0]
    return SweepSpec(
        axis,
        _values(sw["values"][0], axis),
        sc,
        series_axis,
        _values(sw["series_values"][0], series_axis) if series_axis and "series_values" in sw else (),
    )


@dataclass
class Table:
    columns: List[str]
    rows: List[list]

    def column(self, name: str) -> list:
        if name not in self.columns:
            raise InputError(f"unknown column {name!r}")
        i = self.columns.index(name)
        return [r[i] for r in self.rows]


METRIC_COLUMNS = ["series", "axis", "value", "F", "S", "Q", "w_clamped", "status"]


def run_metrics(sc: Scenario, sweep: Optional[SweepSpec] = None):
    """One row per sweep point; returns ``(table, had_failure)``."""
    points = []
    if sweep is None:
        points.append(("", "", "", sc))
    else:
        series = [(None, None)] if sweep.series_axis is None else [(sweep.series_axis, v) for v in sweep.series_values]
        for s_axis, s_val in series:
            base = sc if s_axis is None else apply_axis(sc, s_axis, s_val)
            label = "" if s_axis is None else f"{s_axis}={_fmt(float(s_val))}"
            for v in sweep.values:
                points.append((label, sweep.axis, v, apply_axis(base, sweep.axis, v)))
    rows, failed = [], False
    for label, axis, value, point in points:
        try:
            m = chain.metrics(point)
            rows.append([label, axis, value, m.fail_prob_F, m.success_prob_S, m.target_quality_Q,
                         m.diagnostics.counts.get("w_above_v", 0), "ok"])
        except (NumericError, ModelError) as exc:
            failed = True
            rows.append([label, axis, value, math.nan, math.nan, math.nan, 0, f"failed: {exc}".replace(",", ";")])
    return Table(METRIC_COLUMNS, rows), failed


SCIENTIFIC_COLUMNS = {"F", "S"}


def _cell(column: str, v) -> str:
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if column in SCIENTIFIC_COLUMNS and math.isfinite(v):
            return f"{v:.5e}"
        return repr(v) if math.isfinite(v) else ("nan" if math.isnan(v) else ("inf" if v > 0 else "-inf"))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def table_to_csv(table: Table) -> str:
    if not table.rows:
        raise InputError("table is empty")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(table.columns)
    for row in table.rows:
        writer.writerow([_cell(c, v) for c, v in zip(table.columns, row)])
    return buf.getvalue()


def write_csv(table: Table, path: str):
    text = table_to_csv(table)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def read_csv(path: str) -> Table:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    return Table(rows[0], rows[1:])


def render_plot(table: Table, x: str, y: str, path: str, *, series: Optional[str] = None, log_y: bool = False,
                floor: float = 1e-6, title: Optional[str] = None):
    """SVG line plot of ``y`` against ``x``, one polyline per ``series`` value.

    On a log axis non-positive values are drawn at ``floor`` and their
    series is marked in the legend.
    """
    import matplotlib

    matplotlib.use("svg")
    import matplotlib.pyplot as plt

    xs, ys = table.column(x), table.column(y)
    groups = table.column(series) if series else [""] * len(xs)
    order = list(dict.fromkeys(groups))
    matplotlib.rcParams["svg.hashsalt"] = "homeas"
    fig, ax = plt.subplots(figsize=(6, 4))
    for name in order:
        px = [float(a) for a, g in zip(xs, groups) if g == name]
        py = [float(b) for b, g in zip(ys, groups) if g == name]
        label = name or y
        if log_y:
            clamped = [v <= 0 or not math.isfinite(v) for v in py]
            py = [floor if c else v for v, c in zip(py, clamped)]
            if any(clamped):
                label += f" (values <= 0 drawn at {floor:g})"
        ax.plot(px, py, marker="o", label=label, gid=f"series-{len(ax.lines)}")
    if log_y:
        ax.set_yscale("log")
    ax.set_xlabel(x)
    ax.set_ylabel(y)
    if title:
        ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


# ---------------------------------------------------------------------------
# validation


@dataclass
class CheckItem:
    name: str
    analytic: float
    empirical: float
    detail: str
    passed: bool


def run_validate(sc: Scenario, samples: int = 100_000, windows: int = 10_000, traces: int = 1000, seed: int = 0,
                 tail_tol: float = 0.02, widen: float = 0.3) -> List[CheckItem]:
    """Analytic versus Monte Carlo comparison of every model layer."""
    if samples < 1000 or windows < 100 or traces < 100:
        raise BudgetError("simulation budget too small: need samples >= 1000, windows >= 100, traces >= 100")
    items: List[CheckItem] = []
    rng = np.random.default_rng(np.random.SeedSequence(seed))

    grid = field.default_gamma_grid()
    sel = (grid >= 0.1 * (1 - 1e-12)) & (grid <= 100 * (1 + 1e-12))
    emp, _ = sim.empirical_tail_yk(sc, samples, rng, grid)
    ana = np.asarray(field.best_sinr_tail(grid[sel], sc.link, sc.shadow, sc.field))
    gap = float(np.max(np.abs(ana - emp.tail[sel])))
    items.append(CheckItem("best_sinr_tail_max_gap", gap, 0.0, f"max |gap| over -10..20 dB <= {tail_tol}", gap <= tail_tol))

    th = sc.thresholds
    sm = crossing.spectral_moments(sc.shadow)
    sp = field.make_stable_params(sc.link, sc.shadow, sc.field)
    for frac in (0.5, 0.8):
        d = frac * sc.cell_radius_m
        est = sim.empirical_period_probs(sc, d, windows, rng)
        f_a = crossing.fail_prob(d, th, sm, sp, sc.link)
        items.append(CheckItem(f"fail_prob@{frac}R", f_a, est["fail"].point, f"inside 95% CI widened {widen:.0%}", est["fail"].contains(f_a, widen)))
        t_a = crossing.trig_prob(d, th, sm, sp, sc.link)
        items.append(CheckItem(f"trig_prob@{frac}R", t_a, est["trig"].point, f"inside 95% CI widened {widen:.0%}", est["trig"].contains(t_a, widen)))
        w_a = crossing.wdraw_prob(d, th, sm, sp, sc.link)
        items.append(CheckItem(f"wdraw_prob@{frac}R", w_a, est["wdraw"].point, f"inside 95% CI widened {widen:.0%}", est["wdraw"].contains(w_a, widen)))

    spots = [(-25.0, 0.2), (-10.0, 0.2), (10.0, 0.2)]
    pair = (15.0, 0.5, 20.0, 0.2)
    ce = sim.empirical_crossing_probs(sc.shadow, spots + [pair[:2], pair[2:]], windows, rng, joint=[pair], t_meas=0.2)
    for g, tau in spots:
        v_a = crossing.excursion_prob_v(g, tau, sm)
        v_e = ce.v[(g, tau)].point
        ok = abs(v_a - v_e) <= 0.25 * v_e + ce.v[(g, tau)].half_width_95
        items.append(CheckItem(f"V({g:g}dB,{tau:g}s)", v_a, v_e, "within 25% relative", ok))
    w_a = crossing.joint_excursion_prob_w(*pair, sm)
    w_e = ce.w[pair].point
    bound = min(ce.v[pair[:2]].point, ce.v[pair[2:]].point)
    bound_a = min(crossing.excursion_prob_v(*pair[:2], sm), crossing.excursion_prob_v(*pair[2:], sm))
    items.append(CheckItem("W(15dB,0.5s;20dB,0.2s)", w_a, w_e, "conjunction bound holds for both", w_a <= bound_a + 1e-15 and w_e <= bound + 1e-15))

    m = chain.metrics(sc)
    f_ci, s_ci, q_ci = sim.empirical_metrics(sim.SimConfig(sc, n_traces=traces, seed=seed))
    items.append(CheckItem("F", m.fail_prob_F, f_ci.point, f"inside 95% CI widened {widen:.0%}", f_ci.contains(m.fail_prob_F, widen)))
    items.append(CheckItem("S", m.success_prob_S, s_ci.point, f"inside 95% CI widened {widen:.0%}", s_ci.contains(m.success_prob_S, widen)))
    items.append(CheckItem("Q", m.target_quality_Q, q_ci.point, f"inside 95% CI widened {widen:.0%}", q_ci.contains(m.target_quality_Q, widen)))
    return items


def format_report(sc: Scenario, items: Sequence[CheckItem]) -> str:
    lines = [f"validation report: {sc.name}", f"{'item':28s} {'analytic':>14s} {'monte-carlo':>14s}  result  criterion"]
    for it in items:
        lines.append(f"{it.name:28s} {it.analytic:14.6g} {it.empirical:14.6g}  {'PASS' if it.passed else 'FAIL':6s}  {it.detail}")
    overall = all(it.passed for it in items)
    lines.append(f"overall: {'PASS' if overall else 'FAIL'}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# commands


def _scenario(args) -> tuple:
    if args.scenario and args.preset:
        raise InputError("use either --scenario or --preset")
    if args.scenario:
        try:
            with open(args.scenario, encoding="utf-8") as fh:
                entries = parse_config_text(fh.read())
        except OSError as exc:
            raise InputError(f"cannot read scenario file: {exc}") from None
        sc = scenario_from_entries(entries)
        return sc, sweep_from_entries(entries, sc)
    if args.preset:
        try:
            return preset(args.preset), None
        except DomainError as exc:
            raise InputError(str(exc), key="preset") from None
    raise InputError("a scenario is required: --scenario <path> or --preset <name>")


def _emit(text: str, out: Optional[str]):
    if out is None:
        sys.stdout.write(text)
        return
    try:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise IOError(f"cannot write {out}: {exc}") from exc


def _cmd_metrics(args, sc, sweep) -> int:
    if args.command == "sweep" and sweep is None:
        if not args.axis or not args.values:
            raise InputError("sweep needs a [sweep] section or --axis and --values")
    if args.axis:
        sweep = SweepSpec(args.axis, _values(args.values or "", args.axis), sc, args.series_axis,
                          _values(args.series_values, args.series_axis) if args.series_axis and args.series_values else ())
    table, failed = run_metrics(sc, sweep)
    _emit(table_to_csv(table), args.out)
    if args.plot:
        try:
            render_plot(table, "value" if sweep else "F", "F", args.plot, series="series" if sweep and sweep.series_axis else None, log_y=True)
        except OSError as exc:
            raise IOError(str(exc)) from exc
    return EXIT_NUMERIC if failed else EXIT_OK


def _cmd_validate(args, sc, sweep) -> int:
    if args.traces is not None and args.traces <= 0:
        raise BudgetError("zero traces requested")
    items = run_validate(sc, samples=args.samples or 100_000, windows=10 * (args.traces or 1000),
                         traces=args.traces or 1000, seed=args.seed, tail_tol=args.tol if args.tol is not None else 0.02)
    _emit(format_report(sc, items), args.out)
    return EXIT_OK if all(i.passed for i in items) else EXIT_NUMERIC


def _cmd_simulate(args, sc, sweep) -> int:
    n = args.traces if args.traces is not None else 1000
    if n <= 0:
        raise BudgetError("zero traces requested")
    cfg = sim.SimConfig(sc, n_traces=n, seed=args.seed, workers=args.threads)
    traces = sim.run_traces(cfg)
    rows = []
    for i, tr in enumerate(traces):
        end = tr.events[-1][1] if tr.outcome != "Ongoing" and tr.events else float(tr.time_grid[-1])
        y_db = 10 * math.log10(tr.target_sinr) if tr.outcome == "Success" and tr.target_sinr > 0 else math.nan
        rows.append([i, tr.outcome, end, y_db, len(tr.events)])
    text = table_to_csv(Table(["trace", "outcome", "end_time_s", "target_sinr_db", "n_events"], rows))
    if n >= 100:
        f, s, q = sim.empirical_metrics(cfg, traces)
        text += table_to_csv(Table(["metric", "point", "half_width_95", "n"], [["F", f.point, f.half_width_95, f.n], ["S", s.point, s.half_width_95, s.n], ["Q", q.point, q.half_width_95, q.n]]))
    _emit(text, args.out)
    return EXIT_OK


def _cmd_tail(args, sc, sweep) -> int:
    grid = field.default_gamma_grid()
    tail = field.build_tail_table(sc.link, sc.shadow, sc.field, grid)
    columns = ["gamma_db", "tail"]
    rows = [[float(10 * np.log10(g)), float(t)] for g, t in zip(grid, tail.tail)]
    if args.samples:
        rng = np.random.default_rng(np.random.SeedSequence(args.seed))
        _, cis = sim.empirical_tail_yk(sc, args.samples, rng, grid)
        columns += ["empirical", "ci_low", "ci_high"]
        rows = [r + [c.point, c.low, c.high] for r, c in zip(rows, cis)]
    table = Table(columns, rows)
    _emit(table_to_csv(table), args.out)
    if args.plot:
        render_plot(table, "gamma_db", "tail", args.plot, log_y=True)
    return EXIT_OK


def _cmd_crossing(args, sc, sweep) -> int:
    model = chain.chain_model(sc)
    rows = []
    for m in range(0, sc.periods + 1):
        d = model.distance(m)
        ev = model.events(d)
        rows.append([m, d, ev.fail, ev.trig, ev.wdraw, model.find_required])
    _emit(table_to_csv(Table(["m", "distance_m", "fail", "trig", "wdraw", "find_target"], rows)), args.out)
    return EXIT_OK


def _cmd_dump(args, sc, sweep) -> int:
    _emit(dump_config(sc), args.out)
    return EXIT_OK


COMMANDS = {
    "metrics": _cmd_metrics,
    "sweep": _cmd_metrics,
    "validate": _cmd_validate,
    "simulate": _cmd_simulate,
    "tail": _cmd_tail,
    "crossing": _cmd_crossing,
    "dump-config": _cmd_dump,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="homeas", description="Handover measurement performance model")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--scenario", help="scenario file ([section] key = value)")
    p.add_argument("--preset", choices=PRESET_NAMES)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output path (default stdout)")
    p.add_argument("--plot", help="SVG plot path")
    p.add_argument("--tol", type=float, help="tail-gap tolerance for validate")
    p.add_argument("--samples", type=int, help="field samples for tail estimates")
    p.add_argument("--traces", type=int, help="Monte Carlo trace count")
    p.add_argument("--threads", type=int, default=1, help="worker threads for simulate")
    p.add_argument("--axis", choices=SWEEP_AXES, help="sweep axis")
    p.add_argument("--values", help="comma-separated sweep values")
    p.add_argument("--series-axis", choices=SWEEP_AXES, help="one series per value of this axis")
    p.add_argument("--series-values", help="comma-separated series values")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    try:
        if args.seed < 0 or args.seed >= 2**64:
            raise InputError("seed must be an unsigned 64-bit integer", key="--seed")
        if args.threads < 1:
            raise InputError("threads must be >= 1", key="--threads")
        sc, sweep = _scenario(args)
        return COMMANDS[args.command](args, sc, sweep)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (DomainError, ModelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
