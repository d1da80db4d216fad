"""Rule-based correction of a scheduled setpoint against measured PV and loads.

Runs once per step between optimizations, in four stages:

1. heat storage check: the boiler is raised when the tank would run empty and
   lowered when it would overfill; the CHP commitment is never changed.
2. measured PV and CHP power serve the measured load, PV first.
3. the battery absorbs deviations from the planned grid exchange: surplus
   beyond plan is charged, shortfall beyond plan is discharged, within power
   and SOC limits.
4. the grid closes the balance; an export cap is enforced by extra charging
   and then by curtailing PV. Storage SOCs are advanced.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from datetime import timedelta

from pvchp.domain import (
    DispatchSetpoint,
    PlantParameters,
    PlantState,
    retention_factor,
    storage_step,
    tes_capacity_kwh,
)
from pvchp.scheduler import net_grid_kw
from pvchp.tariffs import TariffStep

log = logging.getLogger(__name__)

TOL = 1e-9


@dataclass(frozen=True)
class SecondaryOptions:
    # TES content above this multiple of nominal capacity is reported as infeasible
    tes_safety_limit: float = 1.2
    semi_continuous_boiler: bool = False


@dataclass(frozen=True)
class CorrectionOutcome:
    pv_to_load: float
    pv_to_batt: float
    pv_export: float
    pv_curtailed: float
    chp_el_to_load: float
    chp_el_to_batt: float
    chp_export: float
    batt_to_load: float
    grid_import: float
    boiler_th: float
    chp_th: float
    tes_charge: float
    tes_discharge: float
    batt_charge: float
    batt_discharge: float
    grid_to_batt: float
    grid_export: float
    unmet_heat_kwh: float
    tes_overcharge_kwh: float
    pcc_cap_violation_kw: float
    thermal_infeasible: bool
    chp_started: bool
    updated_state: PlantState
    correction_magnitude_kw: float
    chp_on: bool
    pv_generation: float


def _thermal_stage(
    state: PlantState,
    setpoint: DispatchSetpoint,
    th_load: float,
    params: PlantParameters,
    dt_h: float,
    opts: SecondaryOptions,
) -> tuple[float, float, float, float, bool]:
    """Returns (boiler_kw, chp_th_kw, tes_soc_end, unmet_heat_kwh, infeasible)."""
    etas = params.tes_etas
    rho = retention_factor(etas.retention_per_day, dt_h)
    cap = tes_capacity_kwh(params)
    chp_th = params.chp_th_kw if setpoint.chp_on else 0.0
    boiler = setpoint.boiler_th_kw

    def project(b: float) -> float:
        return state.tes_soc_kwh * rho + etas.charge * (chp_th + b) * dt_h - th_load * dt_h / etas.discharge

    soc = project(boiler)
    if soc < -TOL:
        boiler = min(boiler - soc / (etas.charge * dt_h), params.boiler_max_kw)
        if opts.semi_continuous_boiler and 0.0 < boiler < params.boiler_min_kw:
            boiler = params.boiler_min_kw
        soc = project(boiler)
    elif soc > cap + TOL and boiler > 0.0:
        boiler = max(boiler - (soc - cap) / (etas.charge * dt_h), 0.0)
        if opts.semi_continuous_boiler and 0.0 < boiler < params.boiler_min_kw:
            boiler = 0.0 if project(0.0) >= -TOL else params.boiler_min_kw
        soc = project(boiler)

    unmet = 0.0
    infeasible = False
    if soc < -TOL:
        unmet = -soc * etas.discharge
        infeasible = True
        soc = 0.0
    elif soc < 0.0:
        soc = 0.0
    if soc > cap * opts.tes_safety_limit:
        infeasible = True
    return boiler, chp_th, soc, unmet, infeasible


def _battery_room(soc: float, params: PlantParameters, dt_h: float) -> tuple[float, float]:
    """Largest charge and discharge power (kW) the battery accepts for one step."""
    etas = params.batt_etas
    base = soc * retention_factor(etas.retention_per_day, dt_h)
    usable = params.batt_usable_kwh
    ch = min(params.batt_max_charge_kw, max(usable - base, 0.0) / (etas.charge * dt_h))
    dis = min(params.batt_max_discharge_kw, max(base, 0.0) * etas.discharge / dt_h)
    return ch, dis


def _shift_battery(ch: float, dis: float, amount: float, room_ch: float, room_dis: float) -> tuple[float, float, float]:
    """Move the battery's net power by ``amount`` (positive = more charging).

    Returns (charge, discharge, amount not absorbed).
    """
    if amount > 0:
        r = min(dis, amount)
        dis -= r
        amount -= r
        add = min(amount, max(room_ch - ch, 0.0))
        ch += add
        amount -= add
    elif amount < 0:
        need = -amount
        r = min(ch, need)
        ch -= r
        need -= r
        add = min(need, max(room_dis - dis, 0.0))
        dis += add
        need -= add
        amount = -need
    return ch, dis, amount


def apply_secondary(
    state: PlantState,
    setpoint: DispatchSetpoint,
    actual_pv: float,
    actual_el_load: float,
    actual_th_load: float,
    params: PlantParameters,
    tariffs_step: TariffStep,
    dt_h: float,
    opts: SecondaryOptions = SecondaryOptions(),
) -> CorrectionOutcome:
    if actual_pv < 0 or actual_el_load < 0 or actual_th_load < 0:
        raise ValueError("measured PV and loads must be >= 0")

    # 1. heat storage
    boiler, chp_th, tes_soc, unmet, th_infeasible = _thermal_stage(
        state, setpoint, actual_th_load, params, dt_h, opts
    )
    cap = tes_capacity_kwh(params)
    overcharge = max(tes_soc - cap, 0.0)
    if th_infeasible:
        log.warning("thermal infeasibility at %s: unmet %.4f kWh, TES %.3f kWh", state.sim_time, unmet, tes_soc)
    elif overcharge > 0:
        log.info("TES above nominal capacity at %s by %.4f kWh", state.sim_time, overcharge)

    # 2. measured generation
    chp_el = params.chp_el_kw if setpoint.chp_on else 0.0
    curtail = min(setpoint.pv_curtail_kw, actual_pv)
    pv_avail = actual_pv - curtail

    # 3. battery: enforce limits on the setpoint, then absorb deviations from plan
    room_ch, room_dis = _battery_room(state.batt_soc_kwh, params, dt_h)
    ch = setpoint.batt_charge_kw
    dis = setpoint.batt_discharge_kw
    if ch > room_ch + TOL:
        ch = room_ch
    if dis > room_dis + TOL:
        dis = room_dis
    planned_net = setpoint.planned_export_kw - setpoint.planned_import_kw
    net0 = net_grid_kw(pv_avail, chp_el, dis, ch, actual_el_load)
    delta = net0 - planned_net
    if delta > 0 and net0 > 0:
        ch, dis, _ = _shift_battery(ch, dis, min(delta, net0), room_ch, room_dis)
    elif delta < 0 and net0 < 0:
        ch, dis, _ = _shift_battery(ch, dis, -min(-delta, -net0), room_ch, room_dis)

    # 4. grid closes the balance
    net = net_grid_kw(pv_avail, chp_el, dis, ch, actual_el_load)
    # exports are attributed to PV or CHP; the battery does not feed the grid
    excess = net - (pv_avail + chp_el)
    if excess > 0:
        dis = max(dis - excess, 0.0)
        net = net_grid_kw(pv_avail, chp_el, dis, ch, actual_el_load)
    cap_kw = tariffs_step.pcc_export_cap_kw
    violation = 0.0
    if cap_kw is not None and net > cap_kw + TOL:
        ch, dis, _ = _shift_battery(ch, dis, net - cap_kw, room_ch, room_dis)
        net = net_grid_kw(pv_avail, chp_el, dis, ch, actual_el_load)
        if net > cap_kw + TOL:
            cut = min(net - cap_kw, pv_avail)
            curtail += cut
            pv_avail = actual_pv - curtail
            net = net_grid_kw(pv_avail, chp_el, dis, ch, actual_el_load)
        violation = net - cap_kw if net > cap_kw + TOL else 0.0
    export = max(net, 0.0)
    grid_import = max(-net, 0.0)

    # export attribution: the better-paid source first, PV on ties
    chp_rate = tariffs_step.feedin_chp + tariffs_step.avoided_grid_credit
    if tariffs_step.feedin_pv >= chp_rate:
        pv_export = min(export, pv_avail)
        chp_export = export - pv_export
    else:
        chp_export = min(export, chp_el)
        pv_export = export - chp_export

    # descriptive split of the self-used energy
    load_left = actual_el_load
    pv_left = pv_avail - pv_export
    chp_left = chp_el - chp_export
    pv_to_load = min(pv_left, load_left)
    load_left -= pv_to_load
    chp_to_load = min(chp_left, load_left)
    load_left -= chp_to_load
    batt_to_load = min(dis, load_left)
    pv_to_batt = min(max(pv_left - pv_to_load, 0.0), ch)
    chp_to_batt = min(max(chp_left - chp_to_load, 0.0), ch - pv_to_batt)
    grid_to_batt = max(ch - pv_to_batt - chp_to_batt, 0.0)

    batt_soc = storage_step(state.batt_soc_kwh, ch, dis, dt_h, params.batt_etas, tol=1e-6)
    batt_soc = min(max(batt_soc, 0.0), params.batt_usable_kwh)

    started = setpoint.chp_on and not state.chp_on
    same_mode = setpoint.chp_on == state.chp_on
    new_state = state.advanced(
        timedelta(hours=dt_h),
        batt_soc_kwh=batt_soc,
        tes_soc_kwh=tes_soc,
        chp_on=setpoint.chp_on,
        chp_steps_in_current_mode=state.chp_steps_in_current_mode + 1 if same_mode else 1,
    )
    correction = (
        abs(ch - setpoint.batt_charge_kw)
        + abs(dis - setpoint.batt_discharge_kw)
        + abs(grid_import - setpoint.planned_import_kw)
        + abs(export - setpoint.planned_export_kw)
    )
    return CorrectionOutcome(
        pv_to_load=pv_to_load,
        pv_to_batt=pv_to_batt,
        pv_export=pv_export,
        pv_curtailed=curtail,
        chp_el_to_load=chp_to_load,
        chp_el_to_batt=chp_to_batt,
        chp_export=chp_export,
        batt_to_load=batt_to_load,
        grid_import=grid_import,
        boiler_th=boiler,
        chp_th=chp_th,
        tes_charge=chp_th + boiler,
        tes_discharge=actual_th_load,
        batt_charge=ch,
        batt_discharge=dis,
        grid_to_batt=grid_to_batt,
        grid_export=export,
        unmet_heat_kwh=unmet,
        tes_overcharge_kwh=overcharge,
        pcc_cap_violation_kw=violation,
        thermal_infeasible=th_infeasible,
        chp_started=started,
        updated_state=new_state,
        correction_magnitude_kw=correction,
        chp_on=setpoint.chp_on,
        pv_generation=actual_pv,
    )
