from __future__ import annotations

from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pvchp.domain import (
    DispatchSetpoint,
    PlantParameters,
    StorageEfficiencies,
    chp_transfer,
    storage_step,
    tes_capacity_kwh,
)
from pvchp.errors import InfeasibleDischargeError

LOSSLESS = StorageEfficiencies(1.0, 1.0, 1.0)


class TestTesCapacity:
    def test_default_tank(self, params):
        assert tes_capacity_kwh(params) == pytest.approx(12.21, abs=0.005)

    def test_zero_band(self, params):
        assert tes_capacity_kwh(replace(params, tes_delta_t_k=0.0)) == 0.0

    def test_large_tank(self, params):
        assert tes_capacity_kwh(replace(params, tes_volume_l=1000.0)) == pytest.approx(40.70, abs=0.005)

    @given(st.floats(1.0, 5000.0), st.floats(0.0, 80.0), st.floats(0.1, 10.0))
    def test_linear_in_volume_and_band(self, volume, band, k):
        p = PlantParameters(tes_volume_l=volume, tes_delta_t_k=band)
        assert tes_capacity_kwh(replace(p, tes_volume_l=k * volume)) == pytest.approx(k * tes_capacity_kwh(p))
        assert tes_capacity_kwh(replace(p, tes_delta_t_k=k * band)) == pytest.approx(k * tes_capacity_kwh(p))


class TestChpTransfer:
    def test_on(self, params):
        fuel, el, th = chp_transfer(True, params)
        assert (el, th) == (1.0, 2.4)
        assert fuel == pytest.approx(3.8023, abs=5e-5)
        assert fuel * params.chp_eta_el == pytest.approx(el, rel=1e-15)

    def test_off(self, params):
        assert chp_transfer(False, params) == (0.0, 0.0, 0.0)

    def test_pure(self, params):
        assert chp_transfer(True, params) == chp_transfer(True, params)


class TestStorageStep:
    def test_charge(self):
        etas = StorageEfficiencies(0.99, 0.9, 1.0)
        assert storage_step(1.0, 1.2, 0.0, 1 / 6, etas) == pytest.approx(1.198)

    def test_idle_is_identity(self):
        assert storage_step(2.0, 0.0, 0.0, 1 / 6, StorageEfficiencies(0.99, 0.9, 1.0)) == 2.0

    def test_discharge(self):
        etas = StorageEfficiencies(0.99, 0.9, 1.0)
        assert storage_step(1.0, 0.0, 0.9, 1 / 6, etas) == pytest.approx(0.8333, abs=5e-5)

    def test_retention(self):
        etas = StorageEfficiencies(1.0, 1.0, 0.92)
        assert storage_step(1.0, 0.0, 0.0, 24.0, etas) == pytest.approx(0.92)

    def test_overdraw_reports_infeasible(self):
        with pytest.raises(InfeasibleDischargeError):
            storage_step(0.1, 0.0, 4.0, 1 / 6, LOSSLESS)

    def test_result_not_clamped(self):
        # above capacity is the caller's concern
        assert storage_step(10.0, 4.0, 0.0, 1.0, LOSSLESS) == 14.0

    def test_negative_power_rejected(self):
        with pytest.raises(ValueError):
            storage_step(1.0, -1.0, 0.0, 1 / 6, LOSSLESS)

    @settings(max_examples=200)
    @given(
        soc=st.floats(0.0, 5.0),
        c1=st.floats(0.0, 4.0),
        c2=st.floats(0.0, 4.0),
        d1=st.floats(0.0, 4.0),
        d2=st.floats(0.0, 4.0),
        eta_c=st.floats(0.5, 1.0),
        eta_d=st.floats(0.5, 1.0),
    )
    def test_superposition(self, soc, c1, c2, d1, d2, eta_c, eta_d):
        etas = StorageEfficiencies(eta_c, eta_d, 1.0)
        big = 100.0  # keeps every partial result non-negative
        base = soc + big
        f = lambda c, d: storage_step(base, c, d, 1 / 6, etas) - base  # noqa: E731
        assert f(c1 + c2, d1 + d2) == pytest.approx(f(c1, d1) + f(c2, d2), abs=1e-9)


class TestParameters:
    def test_defaults(self, params):
        assert params.batt_usable_kwh == pytest.approx(2.4)
        assert params.batt_etas == StorageEfficiencies(0.99, 0.9, 0.92)
        assert params.tes_etas == StorageEfficiencies(0.98, 0.9, 0.92)

    @pytest.mark.parametrize(
        "change",
        [
            {"batt_eta_charge": 0.0},
            {"tes_eta_discharge": 1.2},
            {"chp_el_kw": 0.0},
            {"boiler_min_kw": 40.0},
            {"batt_usable_fraction": 0.0},
            {"chp_min_on_steps": 0},
        ],
    )
    def test_invalid(self, change):
        with pytest.raises(ValueError):
            PlantParameters(**change)


class TestSetpoint:
    def test_simultaneous_charge_discharge_rejected(self):
        with pytest.raises(ValueError):
            DispatchSetpoint(False, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0)

    def test_negative_flow_rejected(self):
        with pytest.raises(ValueError):
            DispatchSetpoint(False, 0.0, 0.0, 0.0, -0.1, 0.0, 0.0)

    def test_valid(self):
        sp = DispatchSetpoint(True, 2.0, 0.5, 0.0, 0.0, 0.0, 0.3)
        assert np.isclose(sp.batt_charge_kw * sp.batt_discharge_kw, 0.0)
