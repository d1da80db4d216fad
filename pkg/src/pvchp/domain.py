"""Plant parameters, plant state, dispatch setpoints and component equations."""

from __future__ import annotations

from dataclasses import dataclass, replace
from datetime import datetime, timedelta

from pvchp.errors import InfeasibleDischargeError

WATER_HEAT_CAPACITY_KJ_PER_KG_K = 4.186
WATER_DENSITY_KG_PER_L = 1.0
# slack for storage bookkeeping round-off
STORAGE_TOL_KWH = 1e-9


@dataclass(frozen=True)
class StorageEfficiencies:
    charge: float
    discharge: float
    retention_per_day: float


@dataclass(frozen=True)
class PlantParameters:
    """Sizes and efficiencies of the PV, CHP, boiler, battery and heat storage.

    Defaults are the single-family house system: 3.2 kWp PV, 1 kW_el / 2.4 kW_th
    on/off CHP, 2.4-30 kW_th gas boiler, 4 kWh battery (60 % usable) and a
    300 l hot-water tank. The unlabeled efficiency triples are read as
    (charge, discharge, standing retention per day).
    """

    pv_peak_kw: float = 3.2
    chp_el_kw: float = 1.0
    chp_th_kw: float = 2.4
    chp_eta_el: float = 0.263
    chp_eta_th: float = 0.657
    boiler_min_kw: float = 2.4
    boiler_max_kw: float = 30.0
    boiler_eta: float = 1.0
    batt_capacity_kwh: float = 4.0
    batt_usable_fraction: float = 0.6
    batt_eta_charge: float = 0.99
    batt_eta_discharge: float = 0.9
    batt_standing_retention_per_day: float = 0.92
    batt_max_charge_kw: float = 4.0
    batt_max_discharge_kw: float = 4.0
    tes_volume_l: float = 300.0
    tes_delta_t_k: float = 35.0
    tes_eta_charge: float = 0.98
    tes_eta_discharge: float = 0.9
    tes_standing_retention_per_day: float = 0.92
    chp_min_off_steps: int = 1
    chp_min_on_steps: int = 1

    def __post_init__(self) -> None:
        fractions = (
            "chp_eta_el",
            "chp_eta_th",
            "boiler_eta",
            "batt_usable_fraction",
            "batt_eta_charge",
            "batt_eta_discharge",
            "batt_standing_retention_per_day",
            "tes_eta_charge",
            "tes_eta_discharge",
            "tes_standing_retention_per_day",
        )
        for name in fractions:
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ValueError(f"{name} must be in (0, 1], got {v}")
        positives = (
            "pv_peak_kw",
            "chp_el_kw",
            "chp_th_kw",
            "boiler_min_kw",
            "boiler_max_kw",
            "batt_capacity_kwh",
            "batt_max_charge_kw",
            "batt_max_discharge_kw",
            "tes_volume_l",
        )
        for name in positives:
            v = getattr(self, name)
            if not v > 0.0:
                raise ValueError(f"{name} must be > 0, got {v}")
        if self.tes_delta_t_k < 0:
            raise ValueError("tes_delta_t_k must be >= 0")
        if self.boiler_min_kw > self.boiler_max_kw:
            raise ValueError("boiler_min_kw must not exceed boiler_max_kw")
        if self.chp_min_on_steps < 1 or self.chp_min_off_steps < 1:
            raise ValueError("CHP dwell times are at least one step")

    @property
    def batt_usable_kwh(self) -> float:
        return self.batt_capacity_kwh * self.batt_usable_fraction

    @property
    def tes_capacity_kwh(self) -> float:
        return tes_capacity_kwh(self)

    @property
    def batt_etas(self) -> StorageEfficiencies:
        return StorageEfficiencies(
            self.batt_eta_charge, self.batt_eta_discharge, self.batt_standing_retention_per_day
        )

    @property
    def tes_etas(self) -> StorageEfficiencies:
        return StorageEfficiencies(
            self.tes_eta_charge, self.tes_eta_discharge, self.tes_standing_retention_per_day
        )

    @property
    def chp_fuel_kw(self) -> float:
        return self.chp_el_kw / self.chp_eta_el


@dataclass(frozen=True)
class PlantState:
    batt_soc_kwh: float
    tes_soc_kwh: float
    chp_on: bool
    chp_steps_in_current_mode: int
    sim_time: datetime

    def advanced(self, dt: timedelta, **changes) -> "PlantState":
        return replace(self, sim_time=self.sim_time + dt, **changes)


def initial_state(
    params: PlantParameters,
    start: datetime,
    batt_fraction: float = 0.5,
    tes_fraction: float = 0.5,
    chp_on: bool = False,
) -> PlantState:
    return PlantState(
        batt_soc_kwh=batt_fraction * params.batt_usable_kwh,
        tes_soc_kwh=tes_fraction * tes_capacity_kwh(params),
        chp_on=chp_on,
        chp_steps_in_current_mode=max(params.chp_min_on_steps, params.chp_min_off_steps),
        sim_time=start,
    )


@dataclass(frozen=True)
class DispatchSetpoint:
    chp_on: bool
    boiler_th_kw: float
    batt_charge_kw: float
    batt_discharge_kw: float
    pv_curtail_kw: float
    planned_import_kw: float
    planned_export_kw: float

    def __post_init__(self) -> None:
        for name in ("batt_charge_kw", "batt_discharge_kw", "pv_curtail_kw", "planned_import_kw", "planned_export_kw"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.batt_charge_kw > 0 and self.batt_discharge_kw > 0:
            raise ValueError("battery cannot charge and discharge in the same setpoint")
        if self.boiler_th_kw < 0:
            raise ValueError("boiler_th_kw must be >= 0")


def tes_capacity_kwh(params: PlantParameters) -> float:
    """Usable heat content of the water tank over its temperature band."""
    mass_kg = params.tes_volume_l * WATER_DENSITY_KG_PER_L
    return mass_kg * WATER_HEAT_CAPACITY_KJ_PER_KG_K * params.tes_delta_t_k / 3600.0


def chp_transfer(on: bool, params: PlantParameters) -> tuple[float, float, float]:
    """(fuel, electrical, thermal) power of the on/off CHP unit in kW."""
    if not on:
        return 0.0, 0.0, 0.0
    return params.chp_el_kw / params.chp_eta_el, params.chp_el_kw, params.chp_th_kw


def retention_factor(retention_per_day: float, dt_h: float) -> float:
    return retention_per_day ** (dt_h / 24.0)


def storage_step(
    soc: float,
    charge_kw: float,
    discharge_kw: float,
    dt_h: float,
    etas: StorageEfficiencies,
    tol: float = STORAGE_TOL_KWH,
) -> float:
    """Advance a storage energy content by one step. The result is not clamped."""
    if charge_kw < 0 or discharge_kw < 0:
        raise ValueError("charge and discharge power must be >= 0")
    if soc < 0:
        raise ValueError("state of charge must be >= 0")
    rho = retention_factor(etas.retention_per_day, dt_h)
    out = soc * rho + etas.charge * charge_kw * dt_h - discharge_kw * dt_h / etas.discharge
    if out < -tol:
        raise InfeasibleDischargeError(f"discharge leaves storage at {out:.6g} kWh")
    return out


def boiler_fuel_kw(boiler_th_kw: float, params: PlantParameters) -> float:
    return boiler_th_kw / params.boiler_eta
