"""Closed-loop simulation: forecast, optimize, correct, advance.

At every primary step the horizon MILP is solved from the current plant
state, its first setpoint goes through the secondary controller together with
the measured PV and loads, and the corrected state is carried forward.

Mode A forecasts with the measured data itself (perfect foresight). Mode B
forecasts by persistence, so the first 24 h of the profiles only serve as
history. For day types the profiles always carry that history day, and both
modes simulate the same final day.
"""

from __future__ import annotations

import csv
import io
import logging
import platform
import time
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from pvchp import __version__
from pvchp.domain import DispatchSetpoint, PlantParameters, PlantState, initial_state
from pvchp.errors import (
    ConfigError,
    InsufficientHistoryError,
    PvChpError,
    SimulationStepError,
    ThermalInfeasibleError,
)
from pvchp.kpi import KpiReport, StepCosts, accumulate, step_costs
from pvchp.milp import BnbConfig
from pvchp.profiles import (
    DAY_TYPES,
    ForecastMethod,
    ScenarioProfiles,
    day_with_history,
    load_profiles_csv,
    make_forecast,
)
from pvchp.scheduler import HorizonProblem, HorizonSchedule, ModelOptions, net_grid_kw, optimize_horizon
from pvchp.secondary import CorrectionOutcome, SecondaryOptions, apply_secondary
from pvchp.tariffs import OPTIONS, TariffBase, TariffSchedule, build_tariffs

log = logging.getLogger(__name__)

MODES = ("A", "B")

__all__ = [
    "MODES",
    "SimulationConfig",
    "SimulationResult",
    "StepRecord",
    "build_tariffs",
    "load_scenario",
    "scenario_tariffs",
    "simulated_span",
    "run_closed_loop",
    "write_run",
]


@dataclass(frozen=True)
class SimulationConfig:
    mode: str = "A"
    option: int = 1
    horizon_steps: int = 36
    step_minutes: float = 10.0
    reoptimize_every_steps: int = 1
    day_type: str = "summer"
    profile_path: str | None = None
    seed: int = 1
    forecast_method: str = "persistence"
    solver: BnbConfig = field(default_factory=BnbConfig)
    params: PlantParameters = field(default_factory=PlantParameters)
    model: ModelOptions = field(default_factory=ModelOptions)
    tariff: TariffBase = field(default_factory=TariffBase)
    secondary: SecondaryOptions = field(default_factory=SecondaryOptions)
    init_batt_fraction: float = 0.5
    init_tes_fraction: float = 0.5
    init_chp_on: bool = False
    # steps with unmet heat or TES above the safety limit tolerated before aborting
    max_thermal_infeasible_steps: int = 144

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", str(self.mode).upper())
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.option not in OPTIONS:
            raise ConfigError(f"option must be one of {OPTIONS}, got {self.option!r}")
        if self.horizon_steps < 1:
            raise ConfigError("horizon_steps must be >= 1")
        if self.reoptimize_every_steps < 1:
            raise ConfigError("reoptimize_every_steps must be >= 1")
        if self.step_minutes <= 0:
            raise ConfigError("step_minutes must be > 0")
        if self.profile_path is None and self.day_type not in DAY_TYPES:
            raise ConfigError(f"day_type must be one of {DAY_TYPES}, got {self.day_type!r}")
        try:
            ForecastMethod(self.forecast_method)
        except ValueError:
            raise ConfigError(f"unknown forecast method {self.forecast_method!r}") from None
        for name in ("init_batt_fraction", "init_tes_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v:
                raise ConfigError(f"{name} must be >= 0")
        if self.init_batt_fraction > 1.0:
            raise ConfigError("init_batt_fraction must be <= 1")


@dataclass(frozen=True)
class StepRecord:
    step: int
    state_before: PlantState
    forecast_pv: float
    forecast_el_load: float
    forecast_th_load: float
    actual_pv: float
    actual_el_load: float
    actual_th_load: float
    setpoint: DispatchSetpoint
    outcome: CorrectionOutcome
    costs: StepCosts
    planned_objective_eur: float
    nodes_explored: int

    @property
    def state_after(self) -> PlantState:
        return self.outcome.updated_state


@dataclass(frozen=True)
class SimulationResult:
    config: SimulationConfig
    records: tuple[StepRecord, ...]
    kpi: KpiReport
    tariffs: TariffSchedule
    dt_h: float
    wall_time_s: float = field(compare=False, default=0.0)

    @property
    def total_cost_eur(self) -> float:
        return self.kpi.total_cost_eur


def load_scenario(cfg: SimulationConfig) -> ScenarioProfiles:
    """Profiles for ``cfg``: a CSV file, or the day type with its history day."""
    if cfg.profile_path is not None:
        return load_profiles_csv(cfg.profile_path, cfg.step_minutes)
    return day_with_history(cfg.day_type, cfg.seed, pv_peak_kw=cfg.params.pv_peak_kw, step_minutes=cfg.step_minutes)


def simulated_span(cfg: SimulationConfig, profiles: ScenarioProfiles) -> tuple[int, int]:
    """First and one-past-last simulated step. The first day is history if there is more than one."""
    per_day = int(round(24 * 60 / profiles.step_minutes))
    n = len(profiles)
    if n > per_day:
        return per_day, n
    if cfg.mode == "B":
        raise InsufficientHistoryError(f"mode B needs 24 h of history before the simulated span; profiles hold {n} steps")
    return 0, n


def scenario_tariffs(cfg: SimulationConfig, profiles: ScenarioProfiles) -> TariffSchedule:
    series = profiles.price_import.values if profiles.price_import is not None else None
    return build_tariffs(
        cfg.option,
        len(profiles),
        profiles.start_time,
        profiles.step_minutes,
        base=cfg.tariff,
        price_series=series,
        pv_peak_kw=cfg.params.pv_peak_kw,
    )


def _horizon(
    cfg: SimulationConfig,
    profiles: ScenarioProfiles,
    tariffs: TariffSchedule,
    state: PlantState,
    k: int,
    hint=None,
) -> tuple[HorizonSchedule, ScenarioProfiles]:
    h = min(cfg.horizon_steps, len(profiles) - k)
    method = ForecastMethod.PERFECT if cfg.mode == "A" else ForecastMethod(cfg.forecast_method)
    fc = make_forecast(method, profiles, profiles.time_at(k), h)
    problem = HorizonProblem(fc, tariffs.slice(k, k + h), state, cfg.model)
    return optimize_horizon(problem, cfg.params, cfg.solver, commitment_hint=hint), fc


def run_closed_loop(cfg: SimulationConfig, profiles: ScenarioProfiles | None = None) -> SimulationResult:
    """Simulate ``cfg`` over ``profiles`` (loaded from ``cfg`` when omitted). Deterministic."""
    if profiles is None:
        profiles = load_scenario(cfg)
    if abs(profiles.step_minutes - cfg.step_minutes) > 1e-9:
        raise ConfigError(f"profiles use {profiles.step_minutes} min steps, config expects {cfg.step_minutes}")
    t0 = time.perf_counter()
    first, stop = simulated_span(cfg, profiles)
    tariffs = scenario_tariffs(cfg, profiles)
    dt_h = profiles.dt_h
    params = cfg.params
    state = initial_state(
        params, profiles.time_at(first), cfg.init_batt_fraction, cfg.init_tes_fraction, cfg.init_chp_on
    )

    records: list[StepRecord] = []
    schedule: HorizonSchedule | None = None
    forecast: ScenarioProfiles | None = None
    offset = 0
    infeasible_steps = 0
    for k in range(first, stop):
        try:
            if schedule is None or (k - first) % cfg.reoptimize_every_steps == 0 or offset + 1 >= len(schedule):
                hint = None
                if schedule is not None:
                    # previous plan from the current step on
                    hint = [s.chp_on for s in schedule.setpoints[offset + 1:]]
                schedule, forecast = _horizon(cfg, profiles, tariffs, state, k, hint)
                offset = 0
            else:
                offset += 1
            sp = schedule.setpoints[offset]
            actual_pv = float(profiles.pv.values[k])
            actual_el = float(profiles.el_load.values[k])
            actual_th = float(profiles.th_load.values[k])
            out = apply_secondary(state, sp, actual_pv, actual_el, actual_th, params, tariffs.step(k), dt_h, cfg.secondary)
        except PvChpError as exc:
            raise SimulationStepError(k - first, exc) from exc
        if out.thermal_infeasible:
            infeasible_steps += 1
            if infeasible_steps > cfg.max_thermal_infeasible_steps:
                raise SimulationStepError(
                    k - first,
                    ThermalInfeasibleError(f"{infeasible_steps} thermally infeasible steps", k - first),
                )
        records.append(
            StepRecord(
                step=k - first,
                state_before=state,
                forecast_pv=float(forecast.pv.values[offset]),
                forecast_el_load=float(forecast.el_load.values[offset]),
                forecast_th_load=float(forecast.th_load.values[offset]),
                actual_pv=actual_pv,
                actual_el_load=actual_el,
                actual_th_load=actual_th,
                setpoint=sp,
                outcome=out,
                costs=step_costs(out, tariffs.step(k), params, dt_h, cfg.model.avoided_grid_on_export),
                planned_objective_eur=schedule.planned_objective_eur,
                nodes_explored=schedule.nodes_explored if offset == 0 else 0,
            )
        )
        state = out.updated_state

    run_tariffs = tariffs.slice(first, stop)
    report = accumulate(records, run_tariffs, params, dt_h, cfg.model.avoided_grid_on_export)
    return SimulationResult(cfg, tuple(records), report, run_tariffs, dt_h, time.perf_counter() - t0)


# -- output -------------------------------------------------------------------

_FLOW_COLUMNS = tuple(
    f.name
    for f in fields(CorrectionOutcome)
    if f.name not in ("updated_state", "thermal_infeasible", "chp_started", "chp_on", "correction_magnitude_kw",
                      "pv_generation", "grid_import", "grid_export")
)
STEPS_COLUMNS = (
    ("step", "timestamp", "forecast_pv_kw", "forecast_el_load_kw", "forecast_th_load_kw",
     "actual_pv_kw", "actual_el_load_kw", "actual_th_load_kw",
     "sp_chp_on", "sp_boiler_th_kw", "sp_batt_charge_kw", "sp_batt_discharge_kw", "sp_pv_curtail_kw",
     "sp_import_kw", "sp_export_kw", "chp_on", "chp_started", "chp_el_kw")
    + _FLOW_COLUMNS
    + ("grid_import", "grid_export", "correction_magnitude_kw", "thermal_infeasible",
       "batt_soc_start_kwh", "batt_soc_end_kwh", "tes_soc_start_kwh", "tes_soc_end_kwh")
    + tuple(f"cost_{f.name}_eur" for f in fields(StepCosts))
    + ("cost_total_eur", "planned_objective_eur", "nodes_explored")
)


def _f(v: float) -> str:
    s = f"{v:.6f}"
    return "0.000000" if s == "-0.000000" else s


def _q(v: float) -> float:
    return float(_f(v))


def steps_rows(result: SimulationResult) -> list[list[str]]:
    """``steps.csv`` rows. Grid exchange is closed over the 6-decimal values written."""
    params = result.config.params
    rows = []
    for r in result.records:
        o, sp = r.outcome, r.setpoint
        chp_el = params.chp_el_kw if o.chp_on else 0.0
        net = net_grid_kw(
            _q(r.actual_pv) - _q(o.pv_curtailed), _q(chp_el), _q(o.batt_discharge), _q(o.batt_charge), _q(r.actual_el_load)
        )
        row = [
            str(r.step),
            r.state_before.sim_time.isoformat(),
            *map(_f, (r.forecast_pv, r.forecast_el_load, r.forecast_th_load, r.actual_pv, r.actual_el_load, r.actual_th_load)),
            str(int(sp.chp_on)),
            *map(_f, (sp.boiler_th_kw, sp.batt_charge_kw, sp.batt_discharge_kw, sp.pv_curtail_kw,
                      sp.planned_import_kw, sp.planned_export_kw)),
            str(int(o.chp_on)),
            str(int(o.chp_started)),
            _f(chp_el),
            *(_f(getattr(o, c)) for c in _FLOW_COLUMNS),
            _f(max(-net, 0.0)),
            _f(max(net, 0.0)),
            _f(o.correction_magnitude_kw),
            str(int(o.thermal_infeasible)),
            _f(r.state_before.batt_soc_kwh),
            _f(r.state_after.batt_soc_kwh),
            _f(r.state_before.tes_soc_kwh),
            _f(r.state_after.tes_soc_kwh),
            *(_f(getattr(r.costs, f.name)) for f in fields(StepCosts)),
            _f(r.costs.total),
            _f(r.planned_objective_eur),
            str(r.nodes_explored),
        ]
        rows.append(row)
    return rows


SUMMARY_KEYS = ("mode", "option", "day_type", "seed", "horizon_steps")


def summary_header() -> list[str]:
    return list(SUMMARY_KEYS) + list(KpiReport.columns())


def summary_row(result: SimulationResult) -> list[str]:
    cfg = result.config
    day = cfg.day_type if cfg.profile_path is None else Path(cfg.profile_path).name
    row = [cfg.mode, str(cfg.option), day, str(cfg.seed), str(cfg.horizon_steps)]
    for name, v in result.kpi.as_dict().items():
        if isinstance(v, bool):
            row.append(str(int(v)))
        elif isinstance(v, (int, np.integer)):
            row.append(str(int(v)))
        else:
            row.append(_f(float(v)))
    return row


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def run_meta_text(result: SimulationResult) -> str:
    from pvchp.config import dump_config

    lines = [
        "# run metadata",
        f"# package_version = {__version__}",
        f"# python = {platform.python_version()}",
        f"# numpy = {np.__version__}",
        f"# steps = {len(result.records)}",
        "",
        dump_config(result.config),
    ]
    return "\n".join(lines)


def write_run(result: SimulationResult, out_dir: str | Path) -> None:
    """Write ``steps.csv``, ``summary.csv`` and ``run_meta`` into an existing directory."""
    out = Path(out_dir)
    files = {
        "steps.csv": _csv_text(STEPS_COLUMNS, steps_rows(result)),
        "summary.csv": _csv_text(summary_header(), [summary_row(result)]),
        "run_meta": run_meta_text(result),
    }
    for name, text in files.items():
        with (out / name).open("w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
