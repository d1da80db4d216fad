"""Per-step prices and credits for the five incentive options."""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timedelta

import numpy as np

from pvchp.errors import ConfigError, MissingPriceSeriesError

OPTIONS = (1, 2, 3, 4, 5)


@dataclass(frozen=True)
class TariffBase:
    """Constant costs and sales in EUR/kWh (cold start in EUR per start)."""

    gas_price: float = 0.0652
    price_import: float = 0.2838
    chp_start_cost: float = 0.02
    feedin_pv: float = 0.1256
    feedin_chp: float = 0.09392
    avoided_grid_credit: float = 0.005
    # option 3: export cap = curtail_fraction * pv_peak_kw unless pcc_export_cap_kw is set
    curtail_fraction: float = 0.5
    pcc_export_cap_kw: float | None = None
    # option 5: PV feed-in is zero on [window_start_h, window_end_h) local time
    feedin_window_start_h: float = 10.0
    feedin_window_end_h: float = 14.0


@dataclass(frozen=True)
class TariffStep:
    price_import: float
    feedin_pv: float
    feedin_chp: float
    avoided_grid_credit: float
    gas_price: float
    chp_start_cost: float
    pcc_export_cap_kw: float | None


@dataclass(frozen=True)
class TariffSchedule:
    price_import: np.ndarray
    feedin_pv: np.ndarray
    feedin_chp: np.ndarray
    avoided_grid_credit: np.ndarray
    gas_price: np.ndarray
    chp_start_cost: float
    pcc_export_cap_kw: float | None = None

    def __post_init__(self) -> None:
        arrays = ("price_import", "feedin_pv", "feedin_chp", "avoided_grid_credit", "gas_price")
        n = None
        for name in arrays:
            v = np.asarray(getattr(self, name), dtype=float).ravel()
            if n is None:
                n = v.size
            elif v.size != n:
                raise ValueError(f"tariff series {name!r} has length {v.size}, expected {n}")
            v.setflags(write=False)
            object.__setattr__(self, name, v)
        if np.any(self.gas_price < 0):
            raise ValueError("gas_price must be >= 0")
        if self.pcc_export_cap_kw is not None and self.pcc_export_cap_kw < 0:
            raise ValueError("pcc_export_cap_kw must be >= 0")

    def __len__(self) -> int:
        return self.price_import.size

    @classmethod
    def constant(cls, n: int, base: TariffBase = TariffBase(), cap: float | None = None) -> "TariffSchedule":
        full = lambda v: np.full(n, float(v))  # noqa: E731
        return cls(
            full(base.price_import),
            full(base.feedin_pv),
            full(base.feedin_chp),
            full(base.avoided_grid_credit),
            full(base.gas_price),
            base.chp_start_cost,
            cap,
        )

    def slice(self, start: int, stop: int) -> "TariffSchedule":
        return TariffSchedule(
            self.price_import[start:stop],
            self.feedin_pv[start:stop],
            self.feedin_chp[start:stop],
            self.avoided_grid_credit[start:stop],
            self.gas_price[start:stop],
            self.chp_start_cost,
            self.pcc_export_cap_kw,
        )

    def step(self, i: int) -> TariffStep:
        return TariffStep(
            float(self.price_import[i]),
            float(self.feedin_pv[i]),
            float(self.feedin_chp[i]),
            float(self.avoided_grid_credit[i]),
            float(self.gas_price[i]),
            self.chp_start_cost,
            self.pcc_export_cap_kw,
        )


def build_tariffs(
    option: int,
    n_steps: int,
    start_time: datetime,
    step_minutes: float,
    base: TariffBase = TariffBase(),
    price_series: np.ndarray | None = None,
    pv_peak_kw: float = 3.2,
) -> TariffSchedule:
    """Tariff schedule of incentive ``option`` over ``n_steps`` steps.

    1: constant costs and feed-in tariffs. 2: all sales set to zero.
    3: option 1 plus an export cap at the grid connection. 4: option 1 with the
    import price taken from ``price_series``. 5: option 1 with the PV feed-in
    zeroed inside the midday window (CHP feed-in unchanged).
    """
    if option not in OPTIONS:
        raise ConfigError(f"option must be one of {OPTIONS}, got {option}")
    sched = TariffSchedule.constant(n_steps, base)
    price = sched.price_import
    feedin_pv = sched.feedin_pv
    feedin_chp = sched.feedin_chp
    credit = sched.avoided_grid_credit
    cap = None

    if option == 2:
        feedin_pv = np.zeros(n_steps)
        feedin_chp = np.zeros(n_steps)
        credit = np.zeros(n_steps)
    elif option == 3:
        cap = base.pcc_export_cap_kw if base.pcc_export_cap_kw is not None else base.curtail_fraction * pv_peak_kw
    elif option == 4:
        if price_series is None:
            raise MissingPriceSeriesError("option 4 needs an import price series (price_import_eur_kwh)")
        price = np.asarray(price_series, dtype=float).ravel()
        if price.size != n_steps:
            raise ConfigError(f"price series has {price.size} steps, expected {n_steps}")
    elif option == 5:
        step = timedelta(minutes=step_minutes)
        hours = np.array(
            [(t := start_time + k * step).hour + t.minute / 60.0 + t.second / 3600.0 for k in range(n_steps)]
        )
        in_window = (hours >= base.feedin_window_start_h) & (hours < base.feedin_window_end_h)
        feedin_pv = np.where(in_window, 0.0, feedin_pv)

    return TariffSchedule(price, feedin_pv, feedin_chp, credit, sched.gas_price, base.chp_start_cost, cap)
