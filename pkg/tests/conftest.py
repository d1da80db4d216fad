"""Shared fixtures and small builders for the test suite."""

from __future__ import annotations

import sys
from datetime import datetime

import numpy as np
import pytest

from pvchp.domain import PlantParameters, PlantState, initial_state
from pvchp.profiles import ScenarioProfiles, TimeSeriesProfile
from pvchp.scheduler import HorizonProblem, ModelOptions
from pvchp.tariffs import TariffBase, TariffSchedule

T0 = datetime(2013, 7, 10)
DT_H = 1 / 6


@pytest.fixture
def params() -> PlantParameters:
    return PlantParameters()


@pytest.fixture
def base_tariff() -> TariffBase:
    return TariffBase()


def make_profiles(pv, el, th, start: datetime = T0, step_minutes: float = 10) -> ScenarioProfiles:
    mk = lambda v: TimeSeriesProfile(start, step_minutes, np.asarray(v, dtype=float))  # noqa: E731
    return ScenarioProfiles(mk(el), mk(th), mk(pv))


def make_problem(
    pv,
    el,
    th,
    params: PlantParameters | None = None,
    tariffs: TariffSchedule | None = None,
    state: PlantState | None = None,
    options: ModelOptions = ModelOptions(),
) -> HorizonProblem:
    params = params or PlantParameters()
    fc = make_profiles(pv, el, th)
    tariffs = tariffs if tariffs is not None else TariffSchedule.constant(len(fc))
    state = state or initial_state(params, T0)
    return HorizonProblem(fc, tariffs, state, options)


def random_problem(rng: np.random.Generator, steps: int, params: PlantParameters | None = None) -> HorizonProblem:
    """Horizon problem with random loads, PV, prices and initial state."""
    params = params or PlantParameters()
    pv = rng.uniform(0.0, 3.0, steps) * (rng.random(steps) < 0.7)
    el = rng.uniform(0.1, 1.5, steps)
    th = rng.uniform(0.0, 4.0, steps)
    base = TariffBase(
        gas_price=rng.uniform(0.03, 0.1),
        price_import=rng.uniform(0.15, 0.35),
        chp_start_cost=rng.uniform(0.0, 0.1),
        feedin_pv=rng.uniform(0.0, 0.15),
        feedin_chp=rng.uniform(0.0, 0.12),
        avoided_grid_credit=rng.uniform(0.0, 0.01),
    )
    cap = float(rng.uniform(0.5, 2.5)) if rng.random() < 0.3 else None
    tariffs = TariffSchedule.constant(steps, base, cap)
    state = initial_state(params, T0, rng.uniform(0, 1), rng.uniform(0.2, 1), bool(rng.random() < 0.5))
    return make_problem(pv, el, th, params, tariffs, state)


def pytest_terminal_summary(terminalreporter):
    acc = sys.modules.get("tests.test_acceptance")
    results = getattr(acc, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        ok, detail = results[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
