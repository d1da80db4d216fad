"""Brute-force reference solvers used by the LP and MILP tests."""

from __future__ import annotations

import itertools

import numpy as np

from pvchp.lp import EQ, GE, LE, LinearProgram


def constraint_system(lp: LinearProgram) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """All constraints as ``G x <= h`` plus a mask of rows that must hold with equality."""
    g, h, eq = [], [], []
    for row, sense, b in zip(lp.a, lp.senses, lp.rhs):
        if sense == GE:
            g.append(-row)
            h.append(-b)
        else:
            g.append(row)
            h.append(b)
        eq.append(sense == EQ)
    n = lp.num_vars
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        if np.isfinite(lp.upper[j]):
            g.append(e)
            h.append(lp.upper[j])
            eq.append(False)
        if np.isfinite(lp.lower[j]):
            g.append(-e)
            h.append(-lp.lower[j])
            eq.append(False)
    return np.array(g), np.array(h), np.array(eq, dtype=bool)


def vertex_enumeration(lp: LinearProgram, tol: float = 1e-9) -> tuple[float, np.ndarray | None]:
    """Minimum of a bounded LP over its vertices: (objective, x), or (inf, None) if infeasible."""
    g, h, eq = constraint_system(lp)
    n = lp.num_vars
    combos = np.array(list(itertools.combinations(range(len(h)), n)))
    mats = g[combos]
    rhs = h[combos]
    ok = np.abs(np.linalg.det(mats)) > 1e-10
    if not ok.any():
        return np.inf, None
    xs = np.linalg.solve(mats[ok], rhs[ok][..., None])[..., 0]
    act = xs @ g.T
    scale = 1.0 + np.abs(h)
    feasible = np.all(act <= h + tol * scale, axis=1)
    if eq.any():
        feasible &= np.all(np.abs(act[:, eq] - h[eq]) <= tol * scale[eq], axis=1)
    if not feasible.any():
        return np.inf, None
    xs = xs[feasible]
    vals = xs @ lp.objective
    k = int(np.argmin(vals))
    return float(vals[k]), xs[k]


def random_bounded_lp(rng: np.random.Generator, n: int, m: int, feasible: bool = True) -> LinearProgram:
    """Random LP with finite bounds; built around an interior point when ``feasible``."""
    lower = rng.uniform(-3, 0, n).round(2)
    upper = lower + rng.uniform(0.5, 4, n).round(2)
    x0 = rng.uniform(lower, upper)
    a = rng.normal(size=(m, n)).round(2)
    senses = tuple(rng.choice([LE, LE, GE, EQ], size=m))
    act = a @ x0
    slack = rng.uniform(0.0, 2.0, m)
    if not feasible:
        act = act + rng.normal(0.0, 4.0, m)
    rhs = np.where(np.array(senses) == LE, act + slack, np.where(np.array(senses) == GE, act - slack, act))
    c = rng.normal(size=n).round(2)
    return LinearProgram(c, a, senses, rhs, lower, upper)


def enumerate_binaries(lp: LinearProgram, binaries, solve) -> float:
    """min over all 0/1 assignments of ``binaries`` of the assignment-fixed LP, solved by ``solve``."""
    best = np.inf
    for bits in itertools.product((0.0, 1.0), repeat=len(binaries)):
        lo, hi = lp.lower.copy(), lp.upper.copy()
        lo[list(binaries)] = bits
        hi[list(binaries)] = bits
        val = solve(lp.with_bounds(lo, hi))
        best = min(best, val)
    return best
