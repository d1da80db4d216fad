"""Load/PV time series: CSV ingestion, synthetic day types, and forecasts."""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import Mapping

import numpy as np

from pvchp.errors import (
    InsufficientHistoryError,
    MalformedRowError,
    MisalignedTimestampsError,
    NegativeValueError,
    ProfileError,
)

STEPS_PER_DAY = 144
DEFAULT_STEP_MINUTES = 10
DEFAULT_START = datetime(2013, 1, 1)

CSV_COLUMNS = ("timestamp", "el_load_kw", "th_load_kw", "pv_kw")
OPTIONAL_COLUMNS = ("price_import_eur_kwh", "feedin_pv_eur_kwh")


@dataclass(frozen=True)
class TimeSeriesProfile:
    start_time: datetime
    step_minutes: float
    values: np.ndarray

    def __post_init__(self) -> None:
        if not self.step_minutes > 0:
            raise ValueError("step_minutes must be > 0")
        values = np.asarray(self.values, dtype=float).ravel()
        if values.size < 1:
            raise ValueError("a profile needs at least one value")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.size

    @property
    def step(self) -> timedelta:
        return timedelta(minutes=self.step_minutes)

    def time_at(self, index: int) -> datetime:
        return self.start_time + index * self.step

    def index_of(self, when: datetime) -> int:
        offset = (when - self.start_time) / self.step
        idx = int(round(offset))
        if abs(offset - idx) > 1e-9:
            raise MisalignedTimestampsError(f"{when} is not on the {self.step_minutes}-minute grid")
        return idx

    def slice(self, start: int, stop: int) -> "TimeSeriesProfile":
        return TimeSeriesProfile(self.time_at(start), self.step_minutes, self.values[start:stop])

    def energy_kwh(self) -> float:
        return float(self.values.sum() * self.step_minutes / 60.0)


@dataclass(frozen=True)
class ScenarioProfiles:
    """Uncontrollable inputs of the plant, aligned on one time grid."""

    el_load: TimeSeriesProfile
    th_load: TimeSeriesProfile
    pv: TimeSeriesProfile
    price_import: TimeSeriesProfile | None = None
    feedin_pv: TimeSeriesProfile | None = None
    # descriptive sub-series, e.g. the space-heating part of th_load
    components: Mapping[str, TimeSeriesProfile] = field(default_factory=dict)

    def __post_init__(self) -> None:
        ref = self.el_load
        for name, prof in self._members():
            if prof.start_time != ref.start_time or prof.step_minutes != ref.step_minutes or len(prof) != len(ref):
                raise MisalignedTimestampsError(f"profile {name!r} is not aligned with el_load")

    def _members(self):
        yield "el_load", self.el_load
        yield "th_load", self.th_load
        yield "pv", self.pv
        if self.price_import is not None:
            yield "price_import", self.price_import
        if self.feedin_pv is not None:
            yield "feedin_pv", self.feedin_pv
        yield from self.components.items()

    def __len__(self) -> int:
        return len(self.el_load)

    @property
    def start_time(self) -> datetime:
        return self.el_load.start_time

    @property
    def step_minutes(self) -> float:
        return self.el_load.step_minutes

    @property
    def dt_h(self) -> float:
        return self.step_minutes / 60.0

    def time_at(self, index: int) -> datetime:
        return self.el_load.time_at(index)

    def slice(self, start: int, stop: int) -> "ScenarioProfiles":
        opt = lambda p: None if p is None else p.slice(start, stop)  # noqa: E731
        return ScenarioProfiles(
            self.el_load.slice(start, stop),
            self.th_load.slice(start, stop),
            self.pv.slice(start, stop),
            opt(self.price_import),
            opt(self.feedin_pv),
            {k: v.slice(start, stop) for k, v in self.components.items()},
        )

    @classmethod
    def concatenate(cls, first: "ScenarioProfiles", second: "ScenarioProfiles") -> "ScenarioProfiles":
        """Join two consecutive scenarios; ``second`` is re-timed to follow ``first``."""
        def cat(a, b):
            if a is None or b is None:
                return None
            return TimeSeriesProfile(a.start_time, a.step_minutes, np.concatenate([a.values, b.values]))

        keys = set(first.components) & set(second.components)
        return cls(
            cat(first.el_load, second.el_load),
            cat(first.th_load, second.th_load),
            cat(first.pv, second.pv),
            cat(first.price_import, second.price_import),
            cat(first.feedin_pv, second.feedin_pv),
            {k: cat(first.components[k], second.components[k]) for k in sorted(keys)},
        )


class ForecastMethod(str, enum.Enum):
    PERFECT = "perfect"
    PERSISTENCE = "persistence"
    RUNNING_MEAN_3D = "running_mean_3d"


# -- CSV ------------------------------------------------------------------------


def _parse_float(text: str, line: int, column: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise MalformedRowError(line, f"column {column!r}: not a number: {text!r}") from None
    if not np.isfinite(v):
        raise MalformedRowError(line, f"column {column!r}: non-finite value")
    return v


def load_profiles_csv(path: str | Path, expected_step_minutes: float = DEFAULT_STEP_MINUTES) -> ScenarioProfiles:
    """Read ``timestamp,el_load_kw,th_load_kw,pv_kw[,price...][,feedin...]``."""
    path = Path(path)
    try:
        fh = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise ProfileError(f"cannot read profiles {path}: {exc.strerror}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise MalformedRowError(1, "empty file") from None
        if tuple(header[:4]) != CSV_COLUMNS or any(h not in OPTIONAL_COLUMNS for h in header[4:]):
            raise MalformedRowError(1, f"unexpected header {header}")
        times: list[datetime] = []
        cols: dict[str, list[float]] = {h: [] for h in header[1:]}
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise MalformedRowError(line, f"expected {len(header)} fields, got {len(row)}")
            try:
                times.append(datetime.fromisoformat(row[0].strip()))
            except ValueError:
                raise MalformedRowError(line, f"bad timestamp {row[0]!r}") from None
            for h, cell in zip(header[1:], row[1:]):
                v = _parse_float(cell.strip(), line, h)
                if v < 0 and h in CSV_COLUMNS:
                    raise NegativeValueError(f"line {line}: {h} = {v} is negative")
                cols[h].append(v)
    if not times:
        raise MalformedRowError(2, "no data rows")

    step = timedelta(minutes=expected_step_minutes)
    for k in range(1, len(times)):
        if times[k] - times[k - 1] != step:
            raise MisalignedTimestampsError(
                f"row {k + 2}: timestamp {times[k].isoformat()} does not follow "
                f"{times[k - 1].isoformat()} by {expected_step_minutes} minutes"
            )

    def prof(name: str) -> TimeSeriesProfile | None:
        if name not in cols:
            return None
        return TimeSeriesProfile(times[0], expected_step_minutes, np.array(cols[name]))

    return ScenarioProfiles(
        prof("el_load_kw"),
        prof("th_load_kw"),
        prof("pv_kw"),
        prof("price_import_eur_kwh"),
        prof("feedin_pv_eur_kwh"),
    )


def write_profiles_csv(profiles: ScenarioProfiles, path: str | Path) -> None:
    header = list(CSV_COLUMNS)
    extra = []
    if profiles.price_import is not None:
        header.append("price_import_eur_kwh")
        extra.append(profiles.price_import.values)
    if profiles.feedin_pv is not None:
        header.append("feedin_pv_eur_kwh")
        extra.append(profiles.feedin_pv.values)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(len(profiles)):
            vals = [profiles.el_load.values[i], profiles.th_load.values[i], profiles.pv.values[i]]
            vals += [e[i] for e in extra]
            w.writerow([profiles.time_at(i).isoformat()] + [f"{v:.6f}" for v in vals])


# -- synthetic day types ------------------------------------------------------

DAY_TYPES = ("winter", "summer", "transition")

DAILY_EL_KWH = 11.4
WINTER_TH_KWH = 85.0


@dataclass(frozen=True)
class _DayShape:
    sunrise_h: float
    sunset_h: float
    pv_peak_kw: float
    cloudiness: float
    hot_water_kwh: float
    space_heating_kwh: float
    start: datetime


_SHAPES = {
    "winter": _DayShape(8.5, 16.0, 0.28, 0.5, 9.0, WINTER_TH_KWH - 9.0, datetime(2013, 1, 16)),
    "transition": _DayShape(6.5, 19.0, 2.3, 0.35, 9.0, 30.0, datetime(2013, 4, 10)),
    "summer": _DayShape(5.25, 21.25, 3.2, 0.1, 8.0, 0.0, datetime(2013, 7, 10)),
}


def _gauss(hours: np.ndarray, center: float, width: float) -> np.ndarray:
    return np.exp(-0.5 * ((hours - center) / width) ** 2)


def _smooth_noise(rng: np.random.Generator, n: int, scale: float, span: int) -> np.ndarray:
    raw = rng.normal(0.0, 1.0, n + span)
    kernel = np.ones(span) / span
    return scale * np.convolve(raw, kernel, mode="valid")[:n] * np.sqrt(span)


def generate_day_type(
    day_type: str,
    seed: int,
    pv_peak_kw: float = 3.2,
    step_minutes: float = DEFAULT_STEP_MINUTES,
) -> ScenarioProfiles:
    """Deterministic 24 h synthetic profiles for a winter, summer or transition day.

    Daily totals are pinned: 11.4 kWh electrical for every type and 85 kWh
    thermal on the winter day. PV is a clear-sky bell scaled to the plant's peak
    power, dented by seeded cloud noise; winter PV stays well below 1 kWh.
    Heat is hot water (morning and evening draws) plus temperature-driven
    space heating, which is zero on the summer day.
    """
    if day_type not in _SHAPES:
        raise ValueError(f"unknown day type {day_type!r}; expected one of {DAY_TYPES}")
    shape = _SHAPES[day_type]
    n = int(round(24 * 60 / step_minutes))
    dt_h = step_minutes / 60.0
    hours = (np.arange(n) + 0.5) * dt_h
    rng = np.random.default_rng([int(seed), DAY_TYPES.index(day_type)])

    # electrical: base load plus morning/evening peaks and short appliance spikes
    el = 0.22 + 0.55 * _gauss(hours, 7.25, 0.9) + 0.35 * _gauss(hours, 12.5, 1.2) + 0.85 * _gauss(hours, 19.25, 1.6)
    el *= 1.0 + _smooth_noise(rng, n, 0.08, 3)
    spikes = rng.random(n) < 0.05
    el += spikes * rng.uniform(0.3, 1.2, n) * (hours > 6) * (hours < 23)
    el = np.clip(el, 0.05, None)
    el *= DAILY_EL_KWH / (el.sum() * dt_h)

    # PV: sine bell between sunrise and sunset with cloud dents
    x = (hours - shape.sunrise_h) / (shape.sunset_h - shape.sunrise_h)
    bell = np.where((x > 0) & (x < 1), np.sin(np.pi * np.clip(x, 0, 1)) ** 2, 0.0)
    clouds = 1.0 - shape.cloudiness * np.clip(0.5 + _smooth_noise(rng, n, 0.5, 4), 0.0, 1.0)
    peak = shape.pv_peak_kw * pv_peak_kw / 3.2
    pv = np.clip(peak * bell * clouds, 0.0, None)
    if day_type == "summer":
        pv *= pv_peak_kw / max(pv.max(), 1e-12) * 0.97

    # heat: hot-water draws and space heating following a night-cold temperature curve
    hw = 0.15 + 1.6 * _gauss(hours, 7.0, 0.6) + 0.6 * _gauss(hours, 12.0, 0.8) + 1.3 * _gauss(hours, 20.0, 0.9)
    hw *= np.clip(1.0 + _smooth_noise(rng, n, 0.15, 2), 0.2, None)
    hw *= shape.hot_water_kwh / (hw.sum() * dt_h)
    if shape.space_heating_kwh > 0:
        outdoor = -np.cos(2 * np.pi * (hours - 3.0) / 24.0)  # coldest around 03:00
        sh = 1.0 + 0.45 * outdoor + 0.25 * _gauss(hours, 6.5, 1.0)
        sh *= np.clip(1.0 + _smooth_noise(rng, n, 0.05, 6), 0.5, None)
        sh = np.clip(sh, 0.0, None)
        sh *= shape.space_heating_kwh / (sh.sum() * dt_h)
    else:
        sh = np.zeros(n)
    th = hw + sh

    price = synthetic_price_profile(hours)
    start = shape.start
    mk = lambda v: TimeSeriesProfile(start, step_minutes, v)  # noqa: E731
    return ScenarioProfiles(
        el_load=mk(el),
        th_load=mk(th),
        pv=mk(pv),
        price_import=mk(price),
        components={"th_hot_water": mk(hw), "th_space_heating": mk(sh)},
    )


def synthetic_price_profile(hours: np.ndarray) -> np.ndarray:
    """Retail-like variable price in EUR/kWh spanning 0.21 to 0.24.

    Night valley, a morning ridge around 08:00 and an evening ridge around 19:00.
    """
    h = np.mod(hours, 24.0)
    shape = 0.55 * _gauss(h, 8.5, 1.8) + 1.0 * _gauss(h, 18.75, 1.8) + 0.35 * _gauss(h, 13.0, 2.5)
    shape = (shape - shape.min()) / (shape.max() - shape.min())
    return 0.21 + 0.03 * shape


def day_with_history(day_type: str, seed: int, **kwargs) -> ScenarioProfiles:
    """The ``(day_type, seed)`` day preceded by a same-type day drawn with another seed.

    The preceding day serves as persistence-forecast history.
    """
    today = generate_day_type(day_type, seed, **kwargs)
    yesterday = generate_day_type(day_type, seed + 1000, **kwargs)
    start = today.start_time - timedelta(days=1)
    retime = lambda p: None if p is None else TimeSeriesProfile(start, p.step_minutes, p.values)  # noqa: E731
    yesterday = ScenarioProfiles(
        retime(yesterday.el_load),
        retime(yesterday.th_load),
        retime(yesterday.pv),
        retime(yesterday.price_import),
        retime(yesterday.feedin_pv),
        {k: retime(v) for k, v in yesterday.components.items()},
    )
    return ScenarioProfiles.concatenate(yesterday, today)


# -- forecasts ----------------------------------------------------------------


def _forecast_series(method: ForecastMethod, values: np.ndarray, start: int, horizon: int, per_day: int) -> np.ndarray:
    idx = start + np.arange(horizon)
    if method is ForecastMethod.PERFECT:
        if idx[-1] >= values.size:
            raise InsufficientHistoryError("perfect forecast needs truth up to the end of the horizon")
        return values[idx].copy()
    lags = (1,) if method is ForecastMethod.PERSISTENCE else (1, 2, 3)
    out = np.zeros(horizon)
    for lag in lags:
        # horizons longer than a day reuse the last observed day
        src = idx - lag * per_day
        while np.any(src >= start):
            src = np.where(src >= start, src - per_day, src)
        if np.any(src < 0):
            raise InsufficientHistoryError(
                f"{method.value} forecast needs {lag * 24} h of history before step {start}"
            )
        out += values[src]
    return out / len(lags)


def make_forecast(
    method: ForecastMethod | str,
    history: ScenarioProfiles,
    now: datetime,
    horizon_steps: int,
) -> ScenarioProfiles:
    """Forecast ``horizon_steps`` steps starting at ``now``.

    ``history`` is the full data set known to the simulator; only the
    perfect method reads values at or after ``now``.
    """
    method = ForecastMethod(method)
    if horizon_steps < 1:
        raise ValueError("horizon_steps must be >= 1")
    start = history.el_load.index_of(now)
    if start < 0:
        raise InsufficientHistoryError("forecast start precedes the data")
    per_day = int(round(24 * 60 / history.step_minutes))

    def fc(p: TimeSeriesProfile) -> TimeSeriesProfile:
        return TimeSeriesProfile(now, p.step_minutes, _forecast_series(method, p.values, start, horizon_steps, per_day))

    return ScenarioProfiles(fc(history.el_load), fc(history.th_load), fc(history.pv))
