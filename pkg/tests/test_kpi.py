from __future__ import annotations

from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pvchp.domain import DispatchSetpoint, PlantParameters, initial_state
from pvchp.errors import AlignmentMismatchError
from pvchp.kpi import accumulate, conventional_baseline, step_costs
from pvchp.secondary import apply_secondary
from pvchp.tariffs import TariffBase, TariffSchedule
from tests.conftest import DT_H, T0

PARAMS = PlantParameters()
IDLE = DispatchSetpoint(False, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)


def _records(pv, el, th, setpoint=IDLE, tariffs=None, batt_fraction=0.5):
    n = len(pv)
    tariffs = tariffs or TariffSchedule.constant(n)
    state = initial_state(PARAMS, T0, batt_fraction)
    out = []
    for k in range(n):
        o = apply_secondary(state, setpoint, pv[k], el[k], th[k], PARAMS, tariffs.step(k), DT_H)
        out.append(SimpleNamespace(outcome=o, actual_el_load=el[k], actual_th_load=th[k]))
        state = o.updated_state
    return out, tariffs


class TestBaseline:
    def test_reference_day(self):
        b = conventional_baseline(11.4, 85.0)
        assert b.electricity_eur == pytest.approx(11.4 * 0.2838)
        assert b.heat_eur == pytest.approx(85.0 * 0.0652)
        assert b.total_eur == pytest.approx(8.777, abs=1e-3)

    def test_zero(self):
        assert conventional_baseline(0.0, 0.0).total_eur == 0.0

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            conventional_baseline(-1.0, 0.0)

    @settings(max_examples=50, deadline=None)
    @given(st.floats(0, 100), st.floats(0, 100), st.floats(0, 100), st.floats(0, 100))
    def test_additive(self, e1, t1, e2, t2):
        a, b = conventional_baseline(e1, t1), conventional_baseline(e2, t2)
        assert conventional_baseline(e1 + e2, t1 + t2).total_eur == pytest.approx(a.total_eur + b.total_eur)


class TestAccumulate:
    def test_alignment_checked(self):
        recs, _ = _records([0.0] * 3, [1.0] * 3, [0.0] * 3)
        with pytest.raises(AlignmentMismatchError):
            accumulate(recs, TariffSchedule.constant(4), PARAMS, DT_H)
        with pytest.raises(AlignmentMismatchError):
            accumulate([], TariffSchedule.constant(0), PARAMS, DT_H)

    def test_all_zero_run_flags_rates(self):
        recs, tar = _records([0.0] * 6, [0.0] * 6, [0.0] * 6)
        rep = accumulate(recs, tar, PARAMS, DT_H)
        assert not rep.pv_rate_defined and not rep.chp_rate_defined
        assert rep.total_cost_eur == 0.0
        assert rep.chp_starts == 0

    def test_grid_only_day(self):
        # 1 kW load for 6 steps, empty battery: all from the grid
        recs, tar = _records([0.0] * 6, [1.0] * 6, [0.0] * 6, batt_fraction=0.0)
        rep = accumulate(recs, tar, PARAMS, DT_H)
        assert rep.grid_import_kwh == pytest.approx(1.0)
        assert rep.peak_import_kw == pytest.approx(1.0)
        assert rep.electricity_cost_eur == pytest.approx(rep.grid_import_kwh * 0.2838)
        assert rep.el_load_kwh == pytest.approx(1.0)

    def test_chp_run_rates(self):
        sp = DispatchSetpoint(True, 0.0, 0.0, 0.0, 0.0, 0.0, 0.5)
        recs, tar = _records([0.0] * 6, [0.5] * 6, [2.4] * 6, sp)
        rep = accumulate(recs, tar, PARAMS, DT_H)
        assert rep.chp_runtime_h == pytest.approx(1.0)
        assert rep.chp_starts == 1
        assert rep.chp_start_cost_eur == pytest.approx(0.02)
        assert rep.chp_export_kwh == pytest.approx(0.5)
        assert rep.chp_self_consumption_rate == pytest.approx(0.5)
        assert rep.chp_feedin_revenue_eur == pytest.approx(0.5 * 0.09392)
        assert rep.avoided_grid_revenue_eur == pytest.approx(0.5 * 0.005)
        assert rep.gas_cost_eur == pytest.approx(0.0652 * PARAMS.chp_fuel_kw * 1.0)

    def test_pv_rate_with_curtailment(self):
        recs, tar = _records([3.0] * 6, [1.0] * 6, [0.0] * 6,
                             tariffs=TariffSchedule.constant(6, TariffBase(), 0.0))
        rep = accumulate(recs, tar, PARAMS, DT_H)
        assert rep.grid_export_kwh == pytest.approx(0.0, abs=1e-9)
        assert rep.pv_curtailed_kwh > 0
        excl = accumulate(recs, tar, PARAMS, DT_H, exclude_curtailed_from_pv_rate=True)
        assert excl.pv_self_consumption_rate == pytest.approx(1.0)
        assert rep.pv_self_consumption_rate < 1.0

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_total_is_sum_of_steps(self, seed):
        rng = np.random.default_rng(seed)
        n = 12
        recs, tar = _records(rng.uniform(0, 3, n), rng.uniform(0, 2, n), rng.uniform(0, 3, n))
        rep = accumulate(recs, tar, PARAMS, DT_H)
        steps = sum(step_costs(r.outcome, tar.step(k), PARAMS, DT_H).total for k, r in enumerate(recs))
        assert rep.total_cost_eur == pytest.approx(steps, abs=1e-12)
        parts = (rep.gas_cost_eur + rep.electricity_cost_eur + rep.chp_start_cost_eur
                 - rep.pv_feedin_revenue_eur - rep.chp_feedin_revenue_eur - rep.avoided_grid_revenue_eur)
        assert rep.total_cost_eur == pytest.approx(parts, abs=1e-12)
        assert 0.0 <= rep.pv_self_consumption_rate <= 1.0
