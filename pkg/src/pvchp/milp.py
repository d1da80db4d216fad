"""Depth-first branch-and-bound over binary variables."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from pvchp.errors import SolverError
from pvchp.lp import DEFAULT_TOLERANCES, BoundedSimplex, LinearProgram, LpStatus, Tolerances

INTEGRALITY_TOL = 1e-6


class Branching(str, enum.Enum):
    MOST_FRACTIONAL = "most-fractional"
    FIRST_FRACTIONAL = "first-fractional"


@dataclass(frozen=True)
class BnbConfig:
    absolute_gap: float = 1e-6
    node_limit: int = 100_000
    branching: Branching = Branching.MOST_FRACTIONAL
    tolerances: Tolerances = field(default=DEFAULT_TOLERANCES)

    def __post_init__(self) -> None:
        if self.absolute_gap < 0:
            raise ValueError("absolute_gap must be >= 0")
        if self.node_limit < 1:
            raise ValueError("node_limit must be >= 1")
        object.__setattr__(self, "branching", Branching(self.branching))


@dataclass(frozen=True)
class MixedIntegerProgram:
    lp: LinearProgram
    binary_indices: tuple[int, ...]

    def __post_init__(self) -> None:
        idx = tuple(sorted({int(i) for i in self.binary_indices}))
        n = self.lp.num_vars
        if any(i < 0 or i >= n for i in idx):
            raise ValueError("binary index out of range")
        lo, hi = self.lp.lower[list(idx)], self.lp.upper[list(idx)]
        if np.any(lo < 0) or np.any(hi > 1):
            # binaries live in [0, 1]; tighten rather than reject wider bounds
            lower, upper = self.lp.lower.copy(), self.lp.upper.copy()
            lower[list(idx)] = np.maximum(lo, 0.0)
            upper[list(idx)] = np.minimum(hi, 1.0)
            object.__setattr__(self, "lp", self.lp.with_bounds(lower, upper))
        object.__setattr__(self, "binary_indices", idx)


class MilpStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    NODE_LIMIT = "node-limit"


@dataclass(frozen=True)
class MilpSolution:
    status: MilpStatus
    x: np.ndarray | None
    objective_value: float
    nodes_explored: int
    root_bound: float = -np.inf
    incumbents: tuple[float, ...] = ()

    @property
    def optimal(self) -> bool:
        return self.status is MilpStatus.OPTIMAL


def _pick_branch(x: np.ndarray, binaries: np.ndarray, rule: Branching) -> int | None:
    vals = x[binaries]
    frac = np.minimum(vals - np.floor(vals), np.ceil(vals) - vals)
    fractional = frac > INTEGRALITY_TOL
    if not fractional.any():
        return None
    if rule is Branching.FIRST_FRACTIONAL:
        return int(binaries[np.argmax(fractional)])
    return int(binaries[np.argmax(np.where(fractional, frac, -1.0))])


def _check_incumbent(mip: MixedIntegerProgram, x: np.ndarray, cfg: BnbConfig) -> tuple[np.ndarray | None, float]:
    """Accept a caller-supplied start point if it is feasible and integral."""
    x = np.asarray(x, dtype=float)
    if x.shape != (mip.lp.num_vars,):
        raise ValueError(f"incumbent must have {mip.lp.num_vars} entries")
    b = list(mip.binary_indices)
    if b and np.max(np.abs(x[b] - np.round(x[b]))) > INTEGRALITY_TOL:
        return None, np.inf
    if mip.lp.max_violation(x) > cfg.tolerances.feasibility:
        return None, np.inf
    return x.copy(), float(mip.lp.objective @ x)


def solve_milp(
    mip: MixedIntegerProgram,
    cfg: BnbConfig = BnbConfig(),
    incumbent: np.ndarray | None = None,
) -> MilpSolution:
    """Minimize ``mip`` exactly (to ``cfg.absolute_gap``) by branch-and-bound.

    Nodes are explored depth-first with the floor child first. A node is pruned
    when its relaxation bound is not below ``incumbent - absolute_gap``.
    """
    binaries = np.asarray(mip.binary_indices, dtype=int)
    root = BoundedSimplex(mip.lp, cfg.tolerances)
    root_sol = root.solve()
    if root_sol.status is LpStatus.UNBOUNDED:
        raise SolverError("LP relaxation is unbounded")

    best_x: np.ndarray | None = None
    best_obj = np.inf
    incumbents: list[float] = []
    if incumbent is not None:
        best_x, best_obj = _check_incumbent(mip, incumbent, cfg)
        if best_x is not None:
            incumbents.append(best_obj)
    nodes = 0
    # (solved parent, variable, new lower, new upper, last child of the parent)
    stack: list[tuple[BoundedSimplex, int, float, float, bool]] = []
    pending: list[BoundedSimplex] = [root]
    hit_limit = False

    while pending or stack:
        if pending:
            node = pending.pop()
        else:
            parent, j, lo, hi, last = stack.pop()
            node = parent.with_bounds(j, lo, hi, take_state=last)
        nodes += 1
        sol = node.solution
        if sol.status is LpStatus.OPTIMAL and sol.objective_value < best_obj - cfg.absolute_gap:
            j = _pick_branch(sol.x, binaries, cfg.branching) if binaries.size else None
            if j is None:
                best_obj = sol.objective_value
                best_x = sol.x.copy()
                if binaries.size:
                    best_x[binaries] = np.round(best_x[binaries])
                incumbents.append(best_obj)
            else:
                # ceil child pushed first so the floor child is explored first
                stack.append((node, j, 1.0, 1.0, True))
                stack.append((node, j, 0.0, 0.0, False))
        elif sol.status is LpStatus.UNBOUNDED:
            raise SolverError("LP relaxation became unbounded during branching")
        if nodes >= cfg.node_limit and (pending or stack):
            hit_limit = True
            break

    root_bound = root_sol.objective_value if root_sol.optimal else np.inf
    if hit_limit:
        return MilpSolution(MilpStatus.NODE_LIMIT, best_x, best_obj, nodes, root_bound, tuple(incumbents))
    if best_x is None:
        return MilpSolution(MilpStatus.INFEASIBLE, None, np.inf, nodes, root_bound, ())
    return MilpSolution(MilpStatus.OPTIMAL, best_x, best_obj, nodes, root_bound, tuple(incumbents))


__all__ = [
    "BnbConfig",
    "Branching",
    "MilpSolution",
    "MilpStatus",
    "MixedIntegerProgram",
    "solve_milp",
]
