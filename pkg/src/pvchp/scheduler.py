"""Rolling-horizon dispatch MILP: construction, solve, and setpoint extraction."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from pvchp.domain import DispatchSetpoint, PlantParameters, PlantState, retention_factor, tes_capacity_kwh
from pvchp.errors import DimensionMismatchError, InfeasibleInitialStateError, ScheduleInfeasibleError
from pvchp.lp import EQ, GE, LE, BoundedSimplex, LinearProgram
from pvchp.milp import BnbConfig, MilpSolution, MilpStatus, MixedIntegerProgram, solve_milp
from pvchp.profiles import ScenarioProfiles
from pvchp.tariffs import TariffSchedule

QUANTITIES = (
    "chp_on",
    "chp_start",
    "boiler_th",
    "batt_ch",
    "batt_dis",
    "soc_b",
    "soc_t",
    "grid_imp",
    "export_pv",
    "export_chp",
    "pv_curtail",
)
# optional per-step binaries, appended after the core block when enabled
BOILER_ON = "boiler_on"
GRID_DIR = "grid_import_mode"


@dataclass(frozen=True)
class ModelOptions:
    semi_continuous_boiler: bool = False
    exclusive_grid_flow: bool = False
    # True: the avoided-grid credit pays exported CHP power; False: self-consumed CHP power
    avoided_grid_on_export: bool = True
    terminal_value_batt_eur_kwh: float = 0.0
    terminal_value_tes_eur_kwh: float = 0.0
    chp_available: bool = True


@dataclass(frozen=True)
class VariableIndex:
    """Column of each (quantity, step) pair, quantity-major."""

    steps: int
    names: tuple[str, ...]

    def __call__(self, name: str, t: int | np.ndarray) -> int | np.ndarray:
        return self.names.index(name) * self.steps + t

    def block(self, name: str) -> slice:
        k = self.names.index(name) * self.steps
        return slice(k, k + self.steps)

    @property
    def size(self) -> int:
        return len(self.names) * self.steps


@dataclass(frozen=True)
class HorizonProblem:
    forecasts: ScenarioProfiles
    tariffs: TariffSchedule
    initial_state: PlantState
    options: ModelOptions = ModelOptions()

    def __post_init__(self) -> None:
        if len(self.tariffs) != len(self.forecasts):
            raise DimensionMismatchError(
                f"forecast has {len(self.forecasts)} steps but tariffs have {len(self.tariffs)}"
            )

    @property
    def steps(self) -> int:
        return len(self.forecasts)

    @property
    def dt_h(self) -> float:
        return self.forecasts.dt_h

    @property
    def index(self) -> VariableIndex:
        names = QUANTITIES
        if self.options.semi_continuous_boiler:
            names += (BOILER_ON,)
        if self.options.exclusive_grid_flow:
            names += (GRID_DIR,)
        return VariableIndex(self.steps, names)


@dataclass(frozen=True)
class HorizonSchedule:
    setpoints: tuple[DispatchSetpoint, ...]
    planned_objective_eur: float
    planned_batt_soc: np.ndarray
    planned_tes_soc: np.ndarray
    values: dict[str, np.ndarray] = field(repr=False, default_factory=dict)
    nodes_explored: int = 0

    def __len__(self) -> int:
        return len(self.setpoints)


class _Rows:
    def __init__(self, n: int) -> None:
        self.n = n
        self.rows: list[np.ndarray] = []
        self.senses: list[str] = []
        self.rhs: list[float] = []

    def add(self, coeffs: dict[int, float], sense: str, rhs: float) -> None:
        row = np.zeros(self.n)
        for j, v in coeffs.items():
            row[j] += v
        self.rows.append(row)
        self.senses.append(sense)
        self.rhs.append(float(rhs))

    def matrix(self) -> np.ndarray:
        return np.array(self.rows).reshape(len(self.rows), self.n)


def net_grid_kw(pv_used: float, chp_el: float, discharge: float, charge: float, load: float) -> float:
    """Export-positive grid exchange closing the electrical balance."""
    return pv_used + chp_el + discharge - charge - load


def build_horizon_milp(p: HorizonProblem, params: PlantParameters) -> MixedIntegerProgram:
    """Assemble the dispatch MILP for one prediction horizon."""
    T, dt = p.steps, p.dt_h
    opts = p.options
    idx = p.index
    n = idx.size
    s0 = p.initial_state
    pv = p.forecasts.pv.values
    load = p.forecasts.el_load.values
    th = p.forecasts.th_load.values
    tar = p.tariffs

    usable = params.batt_usable_kwh
    tes_cap = tes_capacity_kwh(params)
    tol = 1e-9
    if not -tol <= s0.batt_soc_kwh <= usable + tol:
        raise InfeasibleInitialStateError(f"battery SOC {s0.batt_soc_kwh} outside [0, {usable}]")
    if s0.tes_soc_kwh < -tol:
        raise InfeasibleInitialStateError(f"negative TES SOC {s0.tes_soc_kwh}")
    soc_b0 = min(max(s0.batt_soc_kwh, 0.0), usable)
    soc_t0 = max(s0.tes_soc_kwh, 0.0)

    rho_b = retention_factor(params.batt_standing_retention_per_day, dt)
    rho_t = retention_factor(params.tes_standing_retention_per_day, dt)

    lower = np.zeros(n)
    upper = np.full(n, np.inf)
    c = np.zeros(n)
    t_all = np.arange(T)

    def bounds(name: str, lo, hi) -> None:
        blk = idx.block(name)
        lower[blk] = lo
        upper[blk] = hi

    bounds("chp_on", 0.0, 1.0 if opts.chp_available else 0.0)
    bounds("chp_start", 0.0, 1.0)
    bounds("boiler_th", 0.0, params.boiler_max_kw)
    bounds("batt_ch", 0.0, params.batt_max_charge_kw)
    bounds("batt_dis", 0.0, params.batt_max_discharge_kw)
    bounds("soc_b", 0.0, usable)
    # an overfull tank is allowed to drain back below nominal capacity
    bounds("soc_t", 0.0, np.maximum(tes_cap, soc_t0 * rho_t ** (t_all + 1)))
    bounds("grid_imp", 0.0, np.inf)
    bounds("export_pv", 0.0, np.inf)
    bounds("export_chp", 0.0, np.inf)
    bounds("pv_curtail", 0.0, pv)

    # minimum dwell carried over from the current mode
    if opts.chp_available:
        if s0.chp_on and s0.chp_steps_in_current_mode < params.chp_min_on_steps:
            k = min(T, params.chp_min_on_steps - s0.chp_steps_in_current_mode)
            lower[idx("chp_on", np.arange(k))] = 1.0
        if not s0.chp_on and s0.chp_steps_in_current_mode < params.chp_min_off_steps:
            k = min(T, params.chp_min_off_steps - s0.chp_steps_in_current_mode)
            upper[idx("chp_on", np.arange(k))] = 0.0

    fuel_chp = params.chp_el_kw / params.chp_eta_el
    c[idx.block("chp_on")] = tar.gas_price * fuel_chp * dt
    c[idx.block("boiler_th")] = tar.gas_price / params.boiler_eta * dt
    c[idx.block("grid_imp")] = tar.price_import * dt
    c[idx.block("export_pv")] = -tar.feedin_pv * dt
    c[idx.block("chp_start")] = tar.chp_start_cost
    if opts.avoided_grid_on_export:
        c[idx.block("export_chp")] = -(tar.feedin_chp + tar.avoided_grid_credit) * dt
    else:
        c[idx.block("export_chp")] = -(tar.feedin_chp - tar.avoided_grid_credit) * dt
        c[idx.block("chp_on")] -= tar.avoided_grid_credit * params.chp_el_kw * dt
    c[idx("soc_b", T - 1)] -= opts.terminal_value_batt_eur_kwh
    c[idx("soc_t", T - 1)] -= opts.terminal_value_tes_eur_kwh

    rows = _Rows(n)
    for t in range(T):
        on, start = idx("chp_on", t), idx("chp_start", t)
        # electrical balance
        rows.add(
            {
                idx("pv_curtail", t): -1.0,
                on: params.chp_el_kw,
                idx("batt_dis", t): 1.0,
                idx("grid_imp", t): 1.0,
                idx("batt_ch", t): -1.0,
                idx("export_pv", t): -1.0,
                idx("export_chp", t): -1.0,
            },
            EQ,
            load[t] - pv[t],
        )
        # export attribution
        rows.add({idx("export_pv", t): 1.0, idx("pv_curtail", t): 1.0}, LE, pv[t])
        rows.add({idx("export_chp", t): 1.0, on: -params.chp_el_kw}, LE, 0.0)
        # residual demand left by PV alone and by PV plus CHP, interpolated in
        # chp_on; redundant at integral points, it tightens the relaxation
        short_off = max(load[t] - pv[t], 0.0)
        short_on = max(load[t] - pv[t] - params.chp_el_kw, 0.0)
        if short_off > 0.0:
            rows.add({idx("batt_dis", t): 1.0, idx("grid_imp", t): 1.0, on: short_off - short_on}, GE, short_off)
        # heat storage
        coeffs = {
            idx("soc_t", t): 1.0,
            on: -params.tes_eta_charge * params.chp_th_kw * dt,
            idx("boiler_th", t): -params.tes_eta_charge * dt,
        }
        rhs = -th[t] * dt / params.tes_eta_discharge
        if t == 0:
            rhs += rho_t * soc_t0
        else:
            coeffs[idx("soc_t", t - 1)] = -rho_t
        rows.add(coeffs, EQ, rhs)
        # battery
        coeffs = {
            idx("soc_b", t): 1.0,
            idx("batt_ch", t): -params.batt_eta_charge * dt,
            idx("batt_dis", t): dt / params.batt_eta_discharge,
        }
        rhs = 0.0
        if t == 0:
            rhs = rho_b * soc_b0
        else:
            coeffs[idx("soc_b", t - 1)] = -rho_b
        rows.add(coeffs, EQ, rhs)
        # start detection
        if t == 0:
            rows.add({start: 1.0, on: -1.0}, GE, -float(s0.chp_on))
        else:
            rows.add({start: 1.0, on: -1.0, idx("chp_on", t - 1): 1.0}, GE, 0.0)
        if tar.pcc_export_cap_kw is not None:
            rows.add({idx("export_pv", t): 1.0, idx("export_chp", t): 1.0}, LE, tar.pcc_export_cap_kw)

    # minimum up/down times inside the horizon
    if params.chp_min_on_steps > 1 or params.chp_min_off_steps > 1:
        for t in range(T):
            prev = {idx("chp_on", t - 1): 1.0} if t > 0 else {}
            prev_val = 0.0 if t > 0 else float(s0.chp_on)
            for tau in range(t + 1, min(T, t + params.chp_min_on_steps)):
                coeffs = {idx("chp_on", tau): 1.0, idx("chp_on", t): -1.0}
                for j in prev:
                    coeffs[j] = coeffs.get(j, 0.0) + 1.0
                rows.add(coeffs, GE, -prev_val)
            for tau in range(t + 1, min(T, t + params.chp_min_off_steps)):
                coeffs = {idx("chp_on", tau): 1.0, idx("chp_on", t): -1.0}
                for j in prev:
                    coeffs[j] = coeffs.get(j, 0.0) + 1.0
                rows.add(coeffs, LE, 1.0 - prev_val)

    binaries = list(idx(name="chp_on", t=t_all))
    if opts.semi_continuous_boiler:
        bounds(BOILER_ON, 0.0, 1.0)
        for t in range(T):
            b, y = idx("boiler_th", t), idx(BOILER_ON, t)
            rows.add({b: 1.0, y: -params.boiler_min_kw}, GE, 0.0)
            rows.add({b: 1.0, y: -params.boiler_max_kw}, LE, 0.0)
        binaries += list(idx(BOILER_ON, t_all))
    if opts.exclusive_grid_flow:
        bounds(GRID_DIR, 0.0, 1.0)
        for t in range(T):
            y = idx(GRID_DIR, t)
            m_imp = load[t] + params.batt_max_charge_kw + pv[t]
            m_exp = pv[t] + params.chp_el_kw + params.batt_max_discharge_kw
            rows.add({idx("grid_imp", t): 1.0, y: -m_imp}, LE, 0.0)
            rows.add({idx("export_pv", t): 1.0, idx("export_chp", t): 1.0, y: m_exp}, LE, m_exp)
        binaries += list(idx(GRID_DIR, t_all))

    lp = LinearProgram(c, rows.matrix(), tuple(rows.senses), np.array(rows.rhs), lower, upper)
    return MixedIntegerProgram(lp, tuple(int(b) for b in binaries))


def extract_schedule(
    p: HorizonProblem, params: PlantParameters, sol: MilpSolution
) -> HorizonSchedule:
    idx = p.index
    x = sol.x
    vals = {name: x[idx.block(name)].copy() for name in idx.names}
    pv = p.forecasts.pv.values
    load = p.forecasts.el_load.values
    setpoints = []
    for t in range(p.steps):
        on = bool(round(vals["chp_on"][t]))
        chp_el = params.chp_el_kw if on else 0.0
        boiler = float(min(max(vals["boiler_th"][t], 0.0), params.boiler_max_kw))
        # post-hoc complementarity: keep only the net battery flow
        net_b = float(vals["batt_ch"][t] - vals["batt_dis"][t])
        ch, dis = max(net_b, 0.0), max(-net_b, 0.0)
        curtail = float(min(max(vals["pv_curtail"][t], 0.0), pv[t]))
        net = net_grid_kw(float(pv[t]) - curtail, chp_el, dis, ch, float(load[t]))
        setpoints.append(
            DispatchSetpoint(
                chp_on=on,
                boiler_th_kw=boiler,
                batt_charge_kw=ch,
                batt_discharge_kw=dis,
                pv_curtail_kw=curtail,
                planned_import_kw=max(-net, 0.0),
                planned_export_kw=max(net, 0.0),
            )
        )
    return HorizonSchedule(
        setpoints=tuple(setpoints),
        planned_objective_eur=float(sol.objective_value),
        planned_batt_soc=vals["soc_b"],
        planned_tes_soc=vals["soc_t"],
        values=vals,
        nodes_explored=sol.nodes_explored,
    )


def _commitment_moves(on: np.ndarray) -> list[tuple[tuple[int, int], ...]]:
    """Neighbouring commitments as lists of (step, new value) flips.

    Every step next to a switch may flip (a run grows or shrinks by one step),
    and every run of ones may shift one step earlier or later.
    """
    T = on.size
    moves: list[tuple[tuple[int, int], ...]] = []
    for t in range(T):
        if (t > 0 and on[t] != on[t - 1]) or (t + 1 < T and on[t] != on[t + 1]):
            moves.append(((t, 1 - int(on[t])),))
    t = 0
    while t < T:
        if not on[t]:
            t += 1
            continue
        a = t
        while t < T and on[t]:
            t += 1
        if a > 0:
            moves.append(((a - 1, 1), (t - 1, 0)))
        if t < T:
            moves.append(((a, 0), (t, 1)))
    return moves


def commitment_start(
    mip: MixedIntegerProgram,
    p: HorizonProblem,
    commitment,
    cfg: BnbConfig = BnbConfig(),
    search_rounds: int = 10,
) -> np.ndarray | None:
    """Feasible point with the CHP binaries fixed near ``commitment``, or None if none is found.

    Used as the starting incumbent of branch-and-bound. The commitment is
    first priced as given, then improved by steepest descent over
    :func:`_commitment_moves`, each neighbour priced by a warm-started LP.
    The remaining binaries (boiler and grid modes, if enabled) are left to
    the LP; branch-and-bound only accepts the point if they come out integral.
    """
    idx = p.index
    on = np.round(np.asarray(commitment, dtype=float)[: p.steps]).astype(int)
    if on.size < p.steps:
        on = np.concatenate([on, np.full(p.steps - on.size, on[-1] if on.size else 0)])
    cols = idx(name="chp_on", t=np.arange(p.steps))
    base_lo, base_hi = mip.lp.lower[cols], mip.lp.upper[cols]
    # steps pinned by the minimum dwell of the current mode
    on = np.clip(on, base_lo, base_hi).astype(int)
    lower, upper = mip.lp.lower.copy(), mip.lp.upper.copy()
    lower[cols] = on
    upper[cols] = on
    current = BoundedSimplex(mip.lp.with_bounds(lower, upper), cfg.tolerances)
    if not current.solve().optimal:
        return None
    for _ in range(search_rounds):
        best = None
        for move in _commitment_moves(on):
            if any(not base_lo[t] <= v <= base_hi[t] for t, v in move):
                continue
            s = current
            for t, v in move:
                s = s.with_bounds(int(cols[t]), float(v), float(v), replace=True)
                if not s.solution.optimal:
                    break
            if not s.solution.optimal:
                continue
            obj = s.solution.objective_value
            if obj < current.solution.objective_value - 1e-9 and (best is None or obj < best[0].solution.objective_value):
                best = (s, move)
        if best is None:
            break
        current, move = best
        for t, v in move:
            on[t] = v
    return current.solution.x


def optimize_horizon(
    p: HorizonProblem,
    params: PlantParameters,
    cfg: BnbConfig = BnbConfig(),
    commitment_hint=None,
) -> HorizonSchedule:
    """Solve the horizon MILP and extract setpoints.

    ``commitment_hint`` (one on/off flag per step, e.g. the previous plan
    shifted by one step; all off when omitted) seeds the search with a
    feasible incumbent. It only speeds up pruning; the result is optimal
    within ``cfg.absolute_gap`` either way.
    """
    mip = build_horizon_milp(p, params)
    if commitment_hint is None:
        commitment_hint = np.zeros(p.steps)
    start = commitment_start(mip, p, commitment_hint, cfg)
    sol = solve_milp(mip, cfg, incumbent=start)
    if sol.status is MilpStatus.INFEASIBLE:
        raise ScheduleInfeasibleError("no dispatch satisfies the horizon constraints")
    if sol.x is None:
        raise ScheduleInfeasibleError(f"no feasible schedule found within {cfg.node_limit} nodes")
    return extract_schedule(p, params, sol)


SCHEDULE_COLUMNS = (
    "step",
    "chp_on",
    "boiler_th_kw",
    "batt_charge_kw",
    "batt_discharge_kw",
    "pv_curtail_kw",
    "planned_import_kw",
    "planned_export_kw",
    "planned_batt_soc_kwh",
    "planned_tes_soc_kwh",
)


def write_schedule_csv(schedule: HorizonSchedule, path: str | Path, times=None) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        cols = list(SCHEDULE_COLUMNS)
        if times is not None:
            cols.insert(1, "timestamp")
        w.writerow(cols)
        for t, sp in enumerate(schedule.setpoints):
            row = [str(t)]
            if times is not None:
                row.append(times[t].isoformat())
            row.append(str(int(sp.chp_on)))
            row += [
                f"{v:.6f}"
                for v in (
                    sp.boiler_th_kw,
                    sp.batt_charge_kw,
                    sp.batt_discharge_kw,
                    sp.pv_curtail_kw,
                    sp.planned_import_kw,
                    sp.planned_export_kw,
                    schedule.planned_batt_soc[t],
                    schedule.planned_tes_soc[t],
                )
            ]
            w.writerow(row)
