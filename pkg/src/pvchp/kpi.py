"""Cost accounting, performance indicators and the conventional-system baseline."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from typing import Sequence

from pvchp.domain import PlantParameters
from pvchp.errors import AlignmentMismatchError
from pvchp.tariffs import TariffBase, TariffSchedule, TariffStep


@dataclass(frozen=True)
class StepCosts:
    """Per-step money flows in EUR. Revenues are positive numbers."""

    gas_chp: float
    gas_boiler: float
    electricity_import: float
    chp_start: float
    pv_feedin: float
    chp_feedin: float
    avoided_grid: float

    @property
    def total(self) -> float:
        return (
            self.gas_chp + self.gas_boiler + self.electricity_import + self.chp_start
            - self.pv_feedin - self.chp_feedin - self.avoided_grid
        )


def step_costs(
    outcome,
    tariff: TariffStep,
    params: PlantParameters,
    dt_h: float,
    avoided_grid_on_export: bool = True,
) -> StepCosts:
    """Price one realized step (``outcome`` is a CorrectionOutcome)."""
    chp_on = outcome.chp_on
    chp_el = params.chp_el_kw if chp_on else 0.0
    credited = outcome.chp_export if avoided_grid_on_export else chp_el - outcome.chp_export
    return StepCosts(
        gas_chp=tariff.gas_price * params.chp_fuel_kw * dt_h if chp_on else 0.0,
        gas_boiler=tariff.gas_price * outcome.boiler_th / params.boiler_eta * dt_h,
        electricity_import=tariff.price_import * outcome.grid_import * dt_h,
        chp_start=tariff.chp_start_cost if outcome.chp_started else 0.0,
        pv_feedin=tariff.feedin_pv * outcome.pv_export * dt_h,
        chp_feedin=tariff.feedin_chp * outcome.chp_export * dt_h,
        avoided_grid=tariff.avoided_grid_credit * credited * dt_h,
    )


@dataclass(frozen=True)
class KpiReport:
    gas_cost_eur: float
    electricity_cost_eur: float
    chp_start_cost_eur: float
    pv_feedin_revenue_eur: float
    chp_feedin_revenue_eur: float
    avoided_grid_revenue_eur: float
    total_cost_eur: float
    pv_self_consumption_rate: float
    pv_rate_defined: bool
    chp_self_consumption_rate: float
    chp_rate_defined: bool
    battery_full_cycles: float
    chp_runtime_h: float
    chp_starts: int
    peak_export_kw: float
    peak_import_kw: float
    el_load_kwh: float
    th_load_kwh: float
    pv_generation_kwh: float
    pv_curtailed_kwh: float
    pv_export_kwh: float
    chp_el_kwh: float
    chp_export_kwh: float
    grid_import_kwh: float
    grid_export_kwh: float
    batt_discharge_kwh: float
    unmet_heat_kwh: float
    max_tes_overcharge_kwh: float
    thermal_infeasible_steps: int
    correction_total_kw: float
    simulated_h: float

    @classmethod
    def columns(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))

    def as_dict(self) -> dict:
        return asdict(self)


def _rate(generated: float, used: float) -> tuple[float, bool]:
    if generated <= 1e-12:
        return 1.0, False
    return min(max(used / generated, 0.0), 1.0), True


def accumulate(
    records: Sequence,
    tariffs: TariffSchedule,
    params: PlantParameters,
    dt_h: float,
    avoided_grid_on_export: bool = True,
    exclude_curtailed_from_pv_rate: bool = False,
) -> KpiReport:
    """Aggregate StepRecords into a KpiReport.

    ``tariffs`` must hold exactly one entry per record. Battery cycles count
    discharge throughput against usable capacity. Curtailed PV counts as
    generated but not self-consumed unless ``exclude_curtailed_from_pv_rate``.
    """
    if len(records) == 0:
        raise AlignmentMismatchError("no step records to accumulate")
    if len(records) != len(tariffs):
        raise AlignmentMismatchError(f"{len(records)} records but {len(tariffs)} tariff steps")

    costs = [step_costs(r.outcome, tariffs.step(i), params, dt_h, avoided_grid_on_export) for i, r in enumerate(records)]
    outs = [r.outcome for r in records]

    def total(attr: str) -> float:
        return float(sum(getattr(o, attr) for o in outs)) * dt_h

    def cost(attr: str) -> float:
        return float(sum(getattr(c, attr) for c in costs))

    pv_gen = total("pv_generation")
    pv_exp = total("pv_export")
    pv_cur = total("pv_curtailed")
    chp_on_steps = sum(1 for o in outs if o.chp_on)
    chp_el = chp_on_steps * params.chp_el_kw * dt_h
    chp_exp = total("chp_export")
    pv_den = pv_gen - pv_cur if exclude_curtailed_from_pv_rate else pv_gen
    pv_rate, pv_ok = _rate(pv_den, pv_gen - pv_exp - pv_cur)
    chp_rate, chp_ok = _rate(chp_el, chp_el - chp_exp)

    gas = cost("gas_chp") + cost("gas_boiler")
    el = cost("electricity_import")
    starts = cost("chp_start")
    rev_pv, rev_chp, rev_ag = cost("pv_feedin"), cost("chp_feedin"), cost("avoided_grid")
    dis = total("batt_discharge")

    return KpiReport(
        gas_cost_eur=gas,
        electricity_cost_eur=el,
        chp_start_cost_eur=starts,
        pv_feedin_revenue_eur=rev_pv,
        chp_feedin_revenue_eur=rev_chp,
        avoided_grid_revenue_eur=rev_ag,
        total_cost_eur=float(sum(c.total for c in costs)),
        pv_self_consumption_rate=pv_rate,
        pv_rate_defined=pv_ok,
        chp_self_consumption_rate=chp_rate,
        chp_rate_defined=chp_ok,
        battery_full_cycles=dis / params.batt_usable_kwh,
        chp_runtime_h=chp_on_steps * dt_h,
        chp_starts=sum(1 for o in outs if o.chp_started),
        peak_export_kw=max(o.grid_export for o in outs),
        peak_import_kw=max(o.grid_import for o in outs),
        el_load_kwh=float(sum(r.actual_el_load for r in records)) * dt_h,
        th_load_kwh=float(sum(r.actual_th_load for r in records)) * dt_h,
        pv_generation_kwh=pv_gen,
        pv_curtailed_kwh=pv_cur,
        pv_export_kwh=pv_exp,
        chp_el_kwh=chp_el,
        chp_export_kwh=chp_exp,
        grid_import_kwh=total("grid_import"),
        grid_export_kwh=total("grid_export"),
        batt_discharge_kwh=dis,
        unmet_heat_kwh=float(sum(o.unmet_heat_kwh for o in outs)),
        max_tes_overcharge_kwh=max(o.tes_overcharge_kwh for o in outs),
        thermal_infeasible_steps=sum(1 for o in outs if o.thermal_infeasible),
        correction_total_kw=float(sum(o.correction_magnitude_kw for o in outs)),
        simulated_h=len(records) * dt_h,
    )


@dataclass(frozen=True)
class BaselineCost:
    electricity_eur: float
    heat_eur: float
    total_eur: float


def conventional_baseline(el_kwh: float, th_kwh: float, tariffs: TariffBase = TariffBase()) -> BaselineCost:
    """Grid electricity plus an ideal gas heater, no conversion losses."""
    if el_kwh < 0 or th_kwh < 0:
        raise ValueError("energies must be >= 0")
    el = el_kwh * tariffs.price_import
    heat = th_kwh * tariffs.gas_price / 1.0
    return BaselineCost(el, heat, el + heat)
