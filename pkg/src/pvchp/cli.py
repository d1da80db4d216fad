"""Command-line interface: ``simulate``, ``sweep``, ``baseline`` and ``optimize``.

Exit codes: 0 success, 2 configuration or input error, 3 solver or
simulation failure. Diagnostics go to stderr; stdout only carries the
``baseline`` table. Run directories are written next to their final location
and renamed into place, and existing outputs are only replaced with ``--force``.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import shutil
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import replace
from pathlib import Path
from typing import Iterator, Sequence

from pvchp import __version__
from pvchp.config import SweepSpec, build_config, build_sweep, dump_config, read_config_file
from pvchp.domain import initial_state
from pvchp.errors import ConfigError, ProfileError, PvChpError, SimulationStepError
from pvchp.kpi import conventional_baseline
from pvchp.profiles import DAY_TYPES, ForecastMethod, make_forecast
from pvchp.scheduler import HorizonProblem, optimize_horizon, write_schedule_csv
from pvchp.simloop import (
    MODES,
    SimulationConfig,
    load_scenario,
    run_closed_loop,
    scenario_tariffs,
    simulated_span,
    summary_header,
    summary_row,
    write_run,
)
from pvchp.tariffs import OPTIONS

log = logging.getLogger("pvchp")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3


class OutputExistsError(ConfigError):
    pass


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, SimulationStepError):
        exc = exc.cause
    if isinstance(exc, (ConfigError, ProfileError, ValueError)):
        return EXIT_CONFIG
    return EXIT_SOLVER


@contextmanager
def atomic_dir(target: Path, force: bool) -> Iterator[Path]:
    """Yield a scratch directory that is renamed to ``target`` on success."""
    target = Path(target)
    if target.exists() and not force:
        raise OutputExistsError(f"output {target} already exists; pass --force to replace it")
    target.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{target.name}.", dir=target.parent))
    try:
        yield tmp
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    if target.exists():
        if target.is_dir():
            shutil.rmtree(target)
        else:
            target.unlink()
    os.replace(tmp, target)


# -- configuration from file + flags -----------------------------------------------


def _load(args: argparse.Namespace) -> tuple[SimulationConfig, SweepSpec]:
    mapping = read_config_file(args.config) if args.config else {}
    cfg = build_config(mapping)
    sweep = build_sweep(mapping)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    for flag, name in (("option", "option"), ("mode", "mode"), ("day_type", "day_type"),
                       ("profiles", "profile_path"), ("horizon", "horizon_steps")):
        v = getattr(args, flag, None)
        if v is not None:
            changes[name] = v
    if changes:
        try:
            cfg = replace(cfg, **changes)
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc
    return cfg, sweep


# -- commands -----------------------------------------------------------------------


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg, _ = _load(args)
    result = run_closed_loop(cfg)
    with atomic_dir(Path(args.out), args.force) as tmp:
        write_run(result, tmp)
    log.info("simulate: %d steps, total cost %.6f EUR, %.1f s", len(result.records), result.total_cost_eur,
             result.wall_time_s)
    return EXIT_OK


def _sweep_cell(cfg: SimulationConfig, run_dir: str) -> tuple[list[str] | None, str]:
    try:
        result = run_closed_loop(cfg)
    except PvChpError as exc:
        return None, f"{type(exc).__name__}: {exc}"
    Path(run_dir).mkdir()
    write_run(result, run_dir)
    return summary_row(result), ""


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg, spec = _load(args)
    overrides = {}
    if args.options:
        overrides["options"] = tuple(int(v) for v in args.options.split(","))
    if args.modes:
        overrides["modes"] = tuple(args.modes.split(","))
    if args.day_types:
        overrides["day_types"] = tuple(args.day_types.split(","))
    if args.jobs is not None:
        overrides["jobs"] = args.jobs
    try:
        spec = replace(spec, **overrides)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    cells = spec.cells()
    configs = [replace(cfg, option=o, mode=m, day_type=d, profile_path=None) for o, m, d in cells]
    names = [f"{d}_option{o}_mode{m}" for o, m, d in cells]
    with atomic_dir(Path(args.out), args.force) as tmp:
        dirs = [str(tmp / n) for n in names]
        if spec.jobs > 1:
            with ProcessPoolExecutor(max_workers=spec.jobs) as pool:
                futures = [pool.submit(_sweep_cell, c, d) for c, d in zip(configs, dirs)]
                outcomes = [f.result() for f in futures]
        else:
            outcomes = [_sweep_cell(c, d) for c, d in zip(configs, dirs)]

        n_kpi = len(summary_header())
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["run", "status", "error"] + summary_header())
        failed = 0
        for name, (o, m, d), (row, err) in zip(names, cells, outcomes):
            if row is None:
                failed += 1
                log.error("sweep cell %s failed: %s", name, err)
                w.writerow([name, "failed", err, m, o, d, cfg.seed, cfg.horizon_steps] + [""] * (n_kpi - 5))
            else:
                w.writerow([name, "ok", ""] + row)
        (tmp / "summary.csv").write_text(buf.getvalue(), encoding="utf-8", newline="\n")
        (tmp / "run_meta").write_text(
            f"# sweep over {len(cells)} runs\nsweep.options = {','.join(map(str, spec.options))}\n"
            f"sweep.modes = {','.join(spec.modes)}\nsweep.day_types = {','.join(spec.day_types)}\n\n"
            + dump_config(cfg),
            encoding="utf-8",
            newline="\n",
        )
    return EXIT_OK if failed == 0 else EXIT_SOLVER


def cmd_baseline(args: argparse.Namespace) -> int:
    cfg, _ = _load(args)
    b = conventional_baseline(args.el_kwh, args.th_kwh, cfg.tariff)
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["component", "eur"])
    w.writerow(["electricity", f"{b.electricity_eur:.6f}"])
    w.writerow(["heat", f"{b.heat_eur:.6f}"])
    w.writerow(["total", f"{b.total_eur:.6f}"])
    sys.stdout.write(out.getvalue())
    return EXIT_OK


def cmd_optimize(args: argparse.Namespace) -> int:
    cfg, _ = _load(args)
    profiles = load_scenario(cfg)
    first, stop = simulated_span(cfg, profiles)
    k = first + args.start_step
    if not first <= k < stop:
        raise ConfigError(f"--start-step must be in [0, {stop - first})")
    h = min(cfg.horizon_steps, len(profiles) - k)
    method = ForecastMethod.PERFECT if cfg.mode == "A" else ForecastMethod(cfg.forecast_method)
    fc = make_forecast(method, profiles, profiles.time_at(k), h)
    tariffs = scenario_tariffs(cfg, profiles)
    state = initial_state(cfg.params, profiles.time_at(k), cfg.init_batt_fraction, cfg.init_tes_fraction,
                          cfg.init_chp_on)
    schedule = optimize_horizon(HorizonProblem(fc, tariffs.slice(k, k + h), state, cfg.model), cfg.params, cfg.solver)
    with atomic_dir(Path(args.out), args.force) as tmp:
        write_schedule_csv(schedule, tmp / "schedule.csv", [fc.time_at(t) for t in range(h)])
        (tmp / "run_meta").write_text(
            f"# optimize: start step {args.start_step}, planned objective {schedule.planned_objective_eur:.6f} EUR\n\n"
            + dump_config(cfg),
            encoding="utf-8",
            newline="\n",
        )
    return EXIT_OK


# -- parser ---------------------------------------------------------------------------


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="flat key = value configuration file")
    p.add_argument("--out", default="out", help="output directory (default: out)")
    p.add_argument("--seed", type=int, help="profile seed (overrides sim.seed)")
    p.add_argument("--force", action="store_true", help="replace an existing output directory")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    return p


def _scenario_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--option", type=int, choices=OPTIONS)
    p.add_argument("--mode", type=str.upper, choices=MODES)
    p.add_argument("--day-type", choices=DAY_TYPES)
    p.add_argument("--profiles", help="profile CSV instead of a generated day type")
    p.add_argument("--horizon", type=int, help="horizon length in steps")


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="pvchp", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="closed-loop run of one scenario")
    _scenario_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", parents=[common], help="grid of options x modes x day types")
    p.add_argument("--options", help="comma-separated options, e.g. 1,2")
    p.add_argument("--modes", help="comma-separated modes, e.g. A,B")
    p.add_argument("--day-types", help="comma-separated day types")
    p.add_argument("--jobs", type=int, help="parallel worker processes")
    p.add_argument("--horizon", type=int, help="horizon length in steps")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("baseline", parents=[common], help="cost of grid electricity plus a gas heater")
    p.add_argument("--el-kwh", type=float, required=True)
    p.add_argument("--th-kwh", type=float, required=True)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("optimize", parents=[common], help="solve one horizon and write its schedule")
    _scenario_flags(p)
    p.add_argument("--start-step", type=int, default=0, help="first step of the horizon within the simulated day")
    p.set_defaults(func=cmd_optimize)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (PvChpError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
