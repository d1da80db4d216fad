"""Flat ``key = value`` configuration files.

Keys are ``section.name`` where the section selects a configuration object:

    sim.*        SimulationConfig scalars (mode, option, horizon_steps, ...)
    plant.*      PlantParameters
    tariff.*     TariffBase
    solver.*     BnbConfig and LP tolerances
    model.*      horizon MILP options
    secondary.*  secondary controller options
    sweep.*      grid for the ``sweep`` command (options, modes, day_types, jobs)

``#`` starts a comment. Unknown or repeated keys are errors. ``none`` clears
optional values. :func:`dump_config` writes every key, and its output parses
back to an equal configuration.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Mapping

from pvchp.errors import ConfigError
from pvchp.milp import BnbConfig, Branching
from pvchp.profiles import DAY_TYPES
from pvchp.simloop import MODES, SimulationConfig
from pvchp.tariffs import OPTIONS

_SIM_NESTED = ("solver", "params", "model", "tariff", "secondary")
# keys whose value may be ``none``
_OPTIONAL = {"sim.profile_path", "tariff.pcc_export_cap_kw"}


@dataclass(frozen=True)
class SweepSpec:
    options: tuple[int, ...] = (1, 2)
    modes: tuple[str, ...] = ("A",)
    day_types: tuple[str, ...] = DAY_TYPES
    jobs: int = 1

    def __post_init__(self) -> None:
        if not self.options or any(o not in OPTIONS for o in self.options):
            raise ConfigError(f"sweep.options must be drawn from {OPTIONS}")
        modes = tuple(str(m).upper() for m in self.modes)
        if not modes or any(m not in MODES for m in modes):
            raise ConfigError(f"sweep.modes must be drawn from {MODES}")
        object.__setattr__(self, "modes", modes)
        if not self.day_types or any(d not in DAY_TYPES for d in self.day_types):
            raise ConfigError(f"sweep.day_types must be drawn from {DAY_TYPES}")
        if self.jobs < 1:
            raise ConfigError("sweep.jobs must be >= 1")

    def cells(self) -> list[tuple[int, str, str]]:
        """(option, mode, day_type) triples in a fixed order."""
        return [(o, m, d) for d in self.day_types for o in self.options for m in self.modes]


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key or "." not in key:
            raise ConfigError(f"{source}:{lineno}: key {key!r} must look like section.name")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def read_config_file(path: str | Path) -> dict[str, str]:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc.strerror}") from exc
    return parse_config_text(text, str(p))


_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}


def _convert(key: str, value: str, like):
    if value.lower() == "none":
        if key in _OPTIONAL:
            return None
        raise ConfigError(f"{key} cannot be none")
    try:
        if isinstance(like, bool):
            v = value.lower()
            if v in _TRUE:
                return True
            if v in _FALSE:
                return False
            raise ValueError(value)
        if isinstance(like, int):
            return int(value)
        if isinstance(like, float) or like is None:
            return float(value)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {value!r} as {type(like).__name__}") from None
    return value


def _apply(obj, section: str, mapping: Mapping[str, str], used: set[str]):
    changes = {}
    for f in fields(obj):
        key = f"{section}.{f.name}"
        if key in mapping:
            changes[f.name] = _convert(key, mapping[key], getattr(obj, f.name))
            used.add(key)
    if not changes:
        return obj
    try:
        return replace(obj, **changes)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{section}: {exc}") from exc


def _solver_from(mapping: Mapping[str, str], base: BnbConfig, used: set[str]) -> BnbConfig:
    # tolerance fields and branch-and-bound fields share the solver.* namespace
    tol = _apply(base.tolerances, "solver", mapping, used)
    bnb_keys = {k: v for k, v in mapping.items() if k != "solver.tolerances"}
    return _apply(replace(base, tolerances=tol), "solver", bnb_keys, used)


def build_config(mapping: Mapping[str, str], base: SimulationConfig | None = None) -> SimulationConfig:
    """SimulationConfig from parsed keys; keys outside sweep.* must all be known."""
    base = base or SimulationConfig()
    used: set[str] = set()
    sim_scalar = {f.name: getattr(base, f.name) for f in fields(base) if f.name not in _SIM_NESTED}
    changes = {}
    for name, like in sim_scalar.items():
        key = f"sim.{name}"
        if key in mapping:
            changes[name] = _convert(key, mapping[key], like if like is not None else "")
            used.add(key)
    changes["params"] = _apply(base.params, "plant", mapping, used)
    changes["tariff"] = _apply(base.tariff, "tariff", mapping, used)
    changes["model"] = _apply(base.model, "model", mapping, used)
    changes["secondary"] = _apply(base.secondary, "secondary", mapping, used)
    changes["solver"] = _solver_from(mapping, base.solver, used)
    unknown = sorted(k for k in mapping if k not in used and not k.startswith("sweep."))
    if unknown:
        raise ConfigError(f"unknown configuration key(s): {', '.join(unknown)}")
    try:
        return replace(base, **changes)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def build_sweep(mapping: Mapping[str, str]) -> SweepSpec:
    base = SweepSpec()
    kw = {}
    for key, value in mapping.items():
        if not key.startswith("sweep."):
            continue
        name = key.split(".", 1)[1]
        if name not in ("options", "modes", "day_types", "jobs"):
            raise ConfigError(f"unknown configuration key: {key}")
        items = tuple(v.strip() for v in value.split(",") if v.strip())
        try:
            if name == "options":
                kw[name] = tuple(int(v) for v in items)
            elif name == "jobs":
                kw[name] = int(value)
            else:
                kw[name] = items
        except ValueError:
            raise ConfigError(f"{key}: cannot parse {value!r}") from None
    return replace(base, **kw)


def load_config(path: str | Path | None) -> tuple[SimulationConfig, SweepSpec]:
    mapping = read_config_file(path) if path is not None else {}
    return build_config(mapping), build_sweep(mapping)


def _fmt(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, Branching):
        return v.value
    if isinstance(v, float):
        return repr(v)
    return str(v)


def dump_config(cfg: SimulationConfig) -> str:
    """Every key of ``cfg`` as ``key = value`` lines, re-parseable by :func:`build_config`."""
    lines = []
    for f in fields(cfg):
        if f.name not in _SIM_NESTED:
            lines.append(f"sim.{f.name} = {_fmt(getattr(cfg, f.name))}")
    for section, obj in (("plant", cfg.params), ("tariff", cfg.tariff), ("model", cfg.model), ("secondary", cfg.secondary)):
        for f in fields(obj):
            lines.append(f"{section}.{f.name} = {_fmt(getattr(obj, f.name))}")
    for f in fields(cfg.solver):
        if f.name != "tolerances":
            lines.append(f"solver.{f.name} = {_fmt(getattr(cfg.solver, f.name))}")
    for f in fields(cfg.solver.tolerances):
        lines.append(f"solver.{f.name} = {_fmt(getattr(cfg.solver.tolerances, f.name))}")
    return "\n".join(lines) + "\n"


def config_from_text(text: str) -> SimulationConfig:
    """Inverse of :func:`dump_config`; ``#`` comment lines are ignored."""
    return build_config(parse_config_text(text))


__all__ = [
    "SweepSpec",
    "build_config",
    "build_sweep",
    "config_from_text",
    "dump_config",
    "load_config",
    "parse_config_text",
    "read_config_file",
]
