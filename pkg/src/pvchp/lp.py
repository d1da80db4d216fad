"""Bounded-variable primal simplex for small dense linear programs.

Rows are turned into ``A x - r = 0`` with one logical variable ``r_i`` per
row whose bounds carry the relation and right-hand side. Variable bounds are
handled directly in the ratio test, so they never become rows. Phase 1 uses
one artificial per violated row of the initial logical basis.

A :class:`BoundedSimplex` keeps its final basis inverse, which lets branch-and-bound
restart a child node from the parent basis after a bound change
(see :meth:`BoundedSimplex.with_bounds`).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from pvchp import _pivot
from pvchp.errors import IterationLimitError, NumericalBreakdownError

LE, EQ, GE = "<=", "=", ">="
_RELATIONS = {LE, EQ, GE, "==", "≤", "≥"}
_CANON = {"==": EQ, "≤": LE, "≥": GE}


@dataclass(frozen=True)
class Tolerances:
    feasibility: float = 1e-7
    pivot: float = 1e-9
    optimality: float = 1e-8
    # consecutive degenerate pivots before switching to Bland's rule
    stall_threshold: int = 50
    reinvert_every: int = 100


DEFAULT_TOLERANCES = Tolerances()


class LpStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass(frozen=True)
class LinearProgram:
    """``minimize c @ x`` subject to row relations and variable bounds."""

    objective: np.ndarray
    a: np.ndarray
    senses: tuple[str, ...]
    rhs: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self) -> None:
        c = np.asarray(self.objective, dtype=float).ravel()
        n = c.size
        a = np.ascontiguousarray(self.a, dtype=float)
        if a.size == 0:
            a = a.reshape(0, n)
        if a.ndim != 2 or a.shape[1] != n:
            raise ValueError(f"constraint matrix must have {n} columns, got shape {a.shape}")
        senses = tuple(_CANON.get(s, s) for s in self.senses)
        bad = [s for s in senses if s not in _RELATIONS]
        if bad:
            raise ValueError(f"unknown relation(s): {bad}")
        rhs = np.asarray(self.rhs, dtype=float).ravel()
        if len(senses) != a.shape[0] or rhs.size != a.shape[0]:
            raise ValueError("senses/rhs length must equal the number of rows")
        lower = np.broadcast_to(np.asarray(self.lower, dtype=float), (n,)).copy()
        upper = np.broadcast_to(np.asarray(self.upper, dtype=float), (n,)).copy()
        if np.any(lower > upper):
            idx = int(np.flatnonzero(lower > upper)[0])
            raise ValueError(f"variable {idx}: lower bound {lower[idx]} > upper bound {upper[idx]}")
        if np.any(lower == np.inf) or np.any(upper == -np.inf):
            raise ValueError("bounds must not exclude every finite value")
        object.__setattr__(self, "objective", c)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "senses", senses)
        object.__setattr__(self, "rhs", rhs)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        self._cache_masks()

    def _cache_masks(self) -> None:
        s = np.array(self.senses, dtype=object)
        object.__setattr__(self, "_le", s == LE)
        object.__setattr__(self, "_ge", s == GE)
        object.__setattr__(self, "_eq", s == EQ)
        # +1 on <= rows, -1 on >= rows: sign * (a x - b) > 0 is a violation
        object.__setattr__(self, "_sign", np.where(s == GE, -1.0, 1.0))
        # row-compressed nonzeros of a for the violation check
        rows, cols = np.nonzero(self.a)
        object.__setattr__(self, "_csr", (
            np.searchsorted(rows, np.arange(self.a.shape[0] + 1)).astype(np.int64),
            cols.astype(np.int64),
            self.a[rows, cols],
        ))

    @classmethod
    def from_rows(
        cls,
        objective: Sequence[float],
        rows: Iterable[tuple[Sequence[float], str, float]] = (),
        bounds: Sequence[tuple[float, float]] | None = None,
    ) -> "LinearProgram":
        c = np.asarray(objective, dtype=float)
        rows = list(rows)
        a = np.array([r[0] for r in rows], dtype=float).reshape(len(rows), c.size)
        senses = tuple(r[1] for r in rows)
        rhs = np.array([r[2] for r in rows], dtype=float)
        if bounds is None:
            lower, upper = np.zeros(c.size), np.full(c.size, np.inf)
        else:
            lower = np.array([b[0] for b in bounds], dtype=float)
            upper = np.array([b[1] for b in bounds], dtype=float)
        return cls(c, a, senses, rhs, lower, upper)

    @property
    def num_vars(self) -> int:
        return self.objective.size

    @property
    def num_rows(self) -> int:
        return self.a.shape[0]

    def with_bounds(self, lower: np.ndarray, upper: np.ndarray) -> "LinearProgram":
        return LinearProgram(self.objective, self.a, self.senses, self.rhs, lower, upper)

    def _rebounded(self, lower: np.ndarray, upper: np.ndarray) -> "LinearProgram":
        # trusted fast path for branch-and-bound children: rows are shared, not re-validated
        child = object.__new__(LinearProgram)
        for name in ("objective", "a", "senses", "rhs", "_le", "_ge", "_eq", "_sign", "_csr"):
            object.__setattr__(child, name, getattr(self, name))
        object.__setattr__(child, "lower", lower)
        object.__setattr__(child, "upper", upper)
        return child

    def with_objective(self, objective: np.ndarray) -> "LinearProgram":
        return LinearProgram(objective, self.a, self.senses, self.rhs, self.lower, self.upper)

    def row_activity(self, x: np.ndarray) -> np.ndarray:
        return self.a @ x

    def max_violation(self, x: np.ndarray) -> float:
        """Largest violation of any row relation or bound at ``x``."""
        x = np.ascontiguousarray(x, dtype=float)
        return float(_pivot.max_violation(*self._csr, x, self.rhs, self._sign, self._eq, self.lower, self.upper))

    def dump(self) -> str:
        """Plain-text matrix listing, row-major, for diagnosing a model."""
        fmt = lambda v: f"{v:.10g}"  # noqa: E731
        lines = [f"# LinearProgram: {self.num_vars} variables, {self.num_rows} rows"]
        lines.append("min " + " ".join(fmt(v) for v in self.objective))
        for i in range(self.num_rows):
            coeffs = " ".join(fmt(v) for v in self.a[i])
            lines.append(f"r{i}: {coeffs} {self.senses[i]} {fmt(self.rhs[i])}")
        lines.append("# bounds")
        for j in range(self.num_vars):
            lines.append(f"x{j}: [{fmt(self.lower[j])}, {fmt(self.upper[j])}]")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class LpSolution:
    status: LpStatus
    x: np.ndarray
    objective_value: float
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL


@dataclass
class _State:
    binv: np.ndarray  # inverse of the basis matrix, Fortran order for in-place rank-1 updates
    x: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    basis: np.ndarray
    is_basic: np.ndarray
    pivots_since_reinvert: int = 0
    # pivot count at which the accumulated error is next checked (0: the default cadence)
    next_check: int = 0

    def copy(self) -> "_State":
        return _State(
            np.array(self.binv, order="F", copy=True),
            self.x.copy(),
            self.lower.copy(),
            self.upper.copy(),
            self.basis.copy(),
            self.is_basic.copy(),
            self.pivots_since_reinvert,
            self.next_check,
        )


class BoundedSimplex:
    """Revised primal simplex over a :class:`LinearProgram` that can be re-entered.

    The basis inverse is kept explicitly and updated by rank-1 pivots; the
    constraint matrix is also kept as a list of nonzeros for pricing.
    ``solve()`` runs phase 1 and phase 2 from a logical/artificial basis. ``with_bounds(j, lo, hi)`` returns a new
    solver for the same program with variable ``j`` restricted to
    ``[lo, hi]``, restarted from this solver's final basis; the parent is
    left untouched.
    """

    def __init__(
        self,
        lp: LinearProgram,
        tol: Tolerances = DEFAULT_TOLERANCES,
        max_iterations: int | None = None,
    ) -> None:
        self.lp = lp
        self.tol = tol
        m, n = lp.num_rows, lp.num_vars
        self.max_iterations = max_iterations if max_iterations is not None else 50 * (m + n) + 1000
        self.iterations = 0
        self._state: _State | None = None
        self._m: np.ndarray | None = None
        self._n_art = 0
        self.solution: LpSolution | None = None

    # -- setup -----------------------------------------------------------

    def _initial_state(self) -> _State:
        lp, tol = self.lp, self.tol
        m, n = lp.num_rows, lp.num_vars
        row_lo = np.where(np.isin(lp.senses, (GE, EQ)), lp.rhs, -np.inf) if m else np.zeros(0)
        row_hi = np.where(np.isin(lp.senses, (LE, EQ)), lp.rhs, np.inf) if m else np.zeros(0)

        xs = np.where(np.isfinite(lp.lower), lp.lower, np.where(np.isfinite(lp.upper), lp.upper, 0.0))
        act = lp.a @ xs if m else np.zeros(0)

        below = act < row_lo - tol.feasibility
        above = act > row_hi + tol.feasibility
        art_rows = np.flatnonzero(below | above)
        n_art = art_rows.size
        self._n_art = n_art

        r_val = act.copy()
        r_val[below] = row_lo[below]
        r_val[above] = row_hi[above]
        sign = np.sign(r_val[art_rows] - act[art_rows])
        mfull = np.zeros((m, n + m + n_art))
        mfull[:, :n] = lp.a
        mfull[np.arange(m), n + np.arange(m)] = -1.0
        mfull[art_rows, n + m + np.arange(n_art)] = sign
        self._set_matrix(mfull)

        lower = np.concatenate([lp.lower, row_lo, np.zeros(n_art)])
        upper = np.concatenate([lp.upper, row_hi, np.full(n_art, np.inf)])
        x = np.concatenate([xs, r_val, np.abs(r_val[art_rows] - act[art_rows])])

        basis = n + np.arange(m)
        basis[art_rows] = n + m + np.arange(n_art)
        diag = np.full(m, -1.0)
        diag[art_rows] = sign
        binv = np.asfortranarray(np.diag(1.0 / diag)) if m else np.zeros((0, 0), order="F")
        is_basic = np.zeros(n + m + n_art, dtype=bool)
        is_basic[basis] = True
        return _State(binv, x, lower, upper, basis, is_basic)

    def _set_matrix(self, mfull: np.ndarray) -> None:
        self._m = mfull
        # coordinate form of the nonzeros, sorted by column
        cols, rows = np.nonzero(mfull.T)
        self._coo_rows = rows
        self._coo_cols = cols
        self._coo_vals = mfull[rows, cols]
        # column pointers: the coordinates are sorted by column (CSC order)
        self._indptr = np.searchsorted(cols, np.arange(mfull.shape[1] + 1)).astype(np.int64)

    def _set_shared(self, other: "BoundedSimplex") -> None:
        for name in ("_m", "_coo_rows", "_coo_cols", "_coo_vals", "_indptr"):
            setattr(self, name, getattr(other, name))

    def _cost(self, phase1: bool) -> np.ndarray:
        m, n = self.lp.num_rows, self.lp.num_vars
        c = np.zeros(n + m + self._n_art)
        if phase1:
            c[n + m:] = 1.0
        else:
            c[:n] = self.lp.objective
        return c

    # -- core iteration ----------------------------------------------------

    def _reduced_costs(self, s: _State, cost: np.ndarray) -> np.ndarray:
        return _pivot.reduced_costs(cost, s.basis, s.binv, self._indptr, self._coo_rows, self._coo_vals)

    def _reinvert(self, s: _State) -> None:
        b = self._m[:, s.basis]
        try:
            binv = np.linalg.inv(b)
        except np.linalg.LinAlgError as exc:
            raise NumericalBreakdownError("singular basis during reinversion") from exc
        if not np.all(np.isfinite(binv)):
            raise NumericalBreakdownError("non-finite basis inverse after reinversion")
        s.binv = np.asfortranarray(binv)
        nb = ~s.is_basic
        s.x[s.basis] = -(s.binv @ (self._m[:, nb] @ s.x[nb]))
        s.pivots_since_reinvert = 0
        s.next_check = 0

    def _residual(self, s: _State) -> float:
        """Largest entry of ``M x``, which exact arithmetic keeps at zero."""
        r = np.bincount(self._coo_rows, weights=self._coo_vals * s.x[self._coo_cols], minlength=self._m.shape[0])
        return float(np.abs(r).max(initial=0.0))

    def _iterate(self, s: _State, cost: np.ndarray) -> LpStatus:
        tol = self.tol
        d = self._reduced_costs(s, cost)
        movable = s.upper > s.lower
        counters = np.array([self.iterations, s.pivots_since_reinvert, 0, 0], dtype=np.int64)
        while True:
            code, piv = _pivot.pivot_loop(
                s.binv, s.x, s.lower, s.upper, s.basis, s.is_basic, movable, d,
                self._indptr, self._coo_rows, self._coo_vals, counters,
                tol.optimality, tol.pivot, tol.stall_threshold, s.next_check or tol.reinvert_every,
                self.max_iterations,
            )
            self.iterations = int(counters[_pivot.IT])
            s.pivots_since_reinvert = int(counters[_pivot.SINCE])
            if code == _pivot.OPTIMAL:
                return LpStatus.OPTIMAL
            if code == _pivot.UNBOUNDED:
                return LpStatus.UNBOUNDED
            if code == _pivot.ITERATION_LIMIT:
                raise IterationLimitError(self.max_iterations)
            if code == _pivot.SMALL_PIVOT:
                raise NumericalBreakdownError(f"pivot {piv:.3e} below tolerance")
            # refactor only when the updates have drifted, and at least every 4 checks
            since = s.pivots_since_reinvert
            scale = 1.0 + float(np.abs(s.x).max(initial=0.0))
            if since < 4 * tol.reinvert_every and self._residual(s) <= 1e-9 * scale:
                s.next_check = since + tol.reinvert_every
                continue
            self._reinvert(s)
            d = self._reduced_costs(s, cost)
            counters[_pivot.SINCE] = 0

    # -- public API --------------------------------------------------------

    def solve(self) -> LpSolution:
        s = self._initial_state()
        if self._n_art:
            self._iterate(s, self._cost(phase1=True))
            infeas = float(s.x[self.lp.num_vars + self.lp.num_rows:].sum())
            scale = 1.0 + float(np.max(np.abs(self.lp.rhs), initial=0.0))
            if infeas > self.tol.feasibility * scale:
                self._state = s
                self.solution = self._infeasible()
                return self.solution
            self._retire_artificials(s)
        return self._phase2(s)

    def _retire_artificials(self, s: _State) -> None:
        start = self.lp.num_vars + self.lp.num_rows
        s.upper[start:] = 0.0
        s.x[start:][~s.is_basic[start:]] = 0.0

    def _phase2(self, s: _State) -> LpSolution:
        status = self._iterate(s, self._cost(phase1=False))
        self._state = s
        if status is LpStatus.UNBOUNDED:
            self.solution = LpSolution(LpStatus.UNBOUNDED, s.x[: self.lp.num_vars].copy(), -np.inf, self.iterations)
            return self.solution
        self.solution = self._finish(s)
        return self.solution

    def _infeasible(self) -> LpSolution:
        n = self.lp.num_vars
        return LpSolution(LpStatus.INFEASIBLE, np.full(n, np.nan), np.inf, self.iterations)

    def _finish(self, s: _State) -> LpSolution:
        lp = self.lp
        n = lp.num_vars
        x = np.clip(s.x[:n], lp.lower, lp.upper)
        viol = lp.max_violation(x)
        if viol > self.tol.feasibility:
            self._reinvert(s)
            x = np.clip(s.x[:n], lp.lower, lp.upper)
            viol = lp.max_violation(x)
        if viol > self.tol.feasibility * (1.0 + float(np.max(np.abs(x), initial=0.0))):
            raise NumericalBreakdownError(f"optimal point violates constraints by {viol:.3e}")
        return LpSolution(LpStatus.OPTIMAL, x, float(lp.objective @ x), self.iterations)

    def with_bounds(
        self, j: int, lo: float, hi: float, take_state: bool = False, replace: bool = False
    ) -> "BoundedSimplex":
        """Child solver with variable ``j`` restricted to ``[lo, hi]``, solved.

        The child restarts from this solver's final basis: it first drives
        ``x_j`` into the new interval (an auxiliary objective on ``x_j`` alone),
        then resumes phase 2 with the real objective. With ``take_state`` the
        child takes over this solver's arrays instead of copying them, and
        this solver can no longer branch. With ``replace`` the interval replaces
        the current bounds of ``j`` instead of being intersected with them.
        """
        if self._state is None or self.solution is None or not self.solution.optimal:
            raise RuntimeError("with_bounds requires a solved, optimal parent")
        child = BoundedSimplex(self.lp, self.tol, self.max_iterations)
        child._set_shared(self)
        child._n_art = self._n_art
        if take_state:
            s = self._state
            self._state = None
        else:
            s = self._state.copy()
        child._state = s
        if replace:
            # widen first so the current point stays feasible while x_j is moved
            s.lower[j] = min(s.lower[j], lo)
            s.upper[j] = max(s.upper[j], hi)
        else:
            lo = max(lo, s.lower[j])
            hi = min(hi, s.upper[j])
        # keep any earlier branching restrictions carried by the state
        new_lower = s.lower[: self.lp.num_vars].copy()
        new_upper = s.upper[: self.lp.num_vars].copy()
        if lo > hi + self.tol.feasibility:
            child.solution = child._infeasible()
            return child
        v = s.x[j]
        if v > hi or v < lo:
            aux = np.zeros_like(s.x)
            if v > hi:
                aux[j] = 1.0
                s.lower[j] = max(s.lower[j], lo)
            else:
                aux[j] = -1.0
                s.upper[j] = min(s.upper[j], hi)
            child._iterate(s, aux)
            v = s.x[j]
            if v > hi + self.tol.feasibility or v < lo - self.tol.feasibility:
                child.solution = child._infeasible()
                return child
            if not s.is_basic[j]:
                s.x[j] = min(max(v, lo), hi)
        s.lower[j], s.upper[j] = lo, hi
        new_lower[j], new_upper[j] = lo, hi
        child.lp = self.lp._rebounded(new_lower, new_upper)
        child._phase2(s)
        return child


def solve_lp(
    lp: LinearProgram,
    tol: Tolerances = DEFAULT_TOLERANCES,
    max_iterations: int | None = None,
) -> LpSolution:
    """Solve ``lp`` from scratch. Deterministic for identical input."""
    return BoundedSimplex(lp, tol, max_iterations).solve()


__all__ = [
    "EQ",
    "GE",
    "LE",
    "BoundedSimplex",
    "LinearProgram",
    "LpSolution",
    "LpStatus",
    "Tolerances",
    "DEFAULT_TOLERANCES",
    "solve_lp",
]
