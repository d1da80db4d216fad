"""Compiled inner loop of the bounded primal simplex in :mod:`pvchp.lp`.

One call prices, ratio-tests and pivots until the basis is optimal, the
problem is unbounded along a ray, a reinversion is due or a limit is hit.
All arrays are updated in place; the caller owns reinversion and phases.
"""

from __future__ import annotations

import numpy as np
from numba import njit

OPTIMAL = 0
UNBOUNDED = 1
REINVERT = 2
ITERATION_LIMIT = 3
SMALL_PIVOT = 4

# counters layout: iterations, pivots since reinversion, degenerate run, bland flag
IT, SINCE, DEGEN, BLAND = 0, 1, 2, 3


@njit(cache=True)
def pivot_loop(binv, x, lower, upper, basis, is_basic, movable, d,
               indptr, indices, data, counters,
               opt_tol, piv_tol, stall, check_at, max_iterations):
    m = basis.size
    nn = x.size
    alpha = np.empty(m)
    rho = np.empty(m)
    ratios = np.empty(m)
    while True:
        if counters[IT] >= max_iterations:
            return ITERATION_LIMIT, -1.0
        if counters[SINCE] >= check_at:
            return REINVERT, 0.0
        bland = counters[BLAND] != 0

        # pricing: Dantzig, or the first eligible column under Bland's rule
        j = -1
        best = 0.0
        delta = 0.0
        for k in range(nn):
            if is_basic[k] or not movable[k]:
                continue
            dk = d[k]
            if dk < -opt_tol and not x[k] >= upper[k]:
                s = 1.0
            elif dk > opt_tol and not x[k] <= lower[k]:
                s = -1.0
            else:
                continue
            if bland:
                j = k
                delta = s
                break
            if abs(dk) > best:
                best = abs(dk)
                j = k
                delta = s
        if j < 0:
            return OPTIMAL, 0.0

        # entering column in basis coordinates
        for i in range(m):
            alpha[i] = 0.0
        for p in range(indptr[j], indptr[j + 1]):
            r = indices[p]
            v = data[p]
            for i in range(m):
                alpha[i] += binv[i, r] * v

        tmin = np.inf
        for i in range(m):
            g = delta * alpha[i]
            b = basis[i]
            if g > piv_tol:
                t = (x[b] - lower[b]) / g
            elif g < -piv_tol:
                t = (upper[b] - x[b]) / -g
            else:
                t = np.inf
            if t != t:
                t = np.inf
            if t < 0.0:
                t = 0.0
            ratios[i] = t
            if t < tmin:
                tmin = t
        own = upper[j] - lower[j]

        if own <= tmin:
            if not np.isfinite(own):
                return UNBOUNDED, 0.0
            # bound flip: j moves to its opposite bound, basis unchanged
            for i in range(m):
                x[basis[i]] -= delta * alpha[i] * own
            x[j] = upper[j] if delta > 0 else lower[j]
            counters[IT] += 1
            counters[DEGEN] = 0
            counters[BLAND] = 0
            continue

        # leaving row: largest |pivot| among ratio ties, lowest index under Bland
        r = -1
        for i in range(m):
            if ratios[i] <= tmin + 1e-12:
                if r < 0:
                    r = i
                elif bland:
                    if basis[i] < basis[r]:
                        r = i
                elif abs(alpha[i]) > abs(alpha[r]):
                    r = i
        step = tmin
        leave = basis[r]
        hit_lower = delta * alpha[r] > 0

        for i in range(m):
            x[basis[i]] -= delta * alpha[i] * step
        x[j] += delta * step
        x[leave] = lower[leave] if hit_lower else upper[leave]

        piv = alpha[r]
        if abs(piv) < piv_tol:
            return SMALL_PIVOT, piv
        for c in range(m):
            rho[c] = binv[r, c] / piv
        # reduced costs along the pivot row
        dj = d[j]
        for k in range(nn):
            acc = 0.0
            for p in range(indptr[k], indptr[k + 1]):
                acc += rho[indices[p]] * data[p]
            if acc != 0.0:
                d[k] -= dj * acc
        d[j] = 0.0
        # rank-1 update of the inverse; the pivot row is overwritten below
        for c in range(m):
            rc = rho[c]
            if rc != 0.0:
                for i in range(m):
                    binv[i, c] -= alpha[i] * rc
        for c in range(m):
            binv[r, c] = rho[c]

        basis[r] = j
        is_basic[j] = True
        is_basic[leave] = False
        counters[SINCE] += 1
        counters[IT] += 1
        if step <= 1e-12:
            counters[DEGEN] += 1
            if counters[DEGEN] > stall:
                counters[BLAND] = 1
        else:
            counters[DEGEN] = 0
            counters[BLAND] = 0


@njit(cache=True)
def reduced_costs(cost, basis, binv, indptr, indices, data):
    """``cost - (cost_B B^-1) M`` with ``M`` in column-compressed form."""
    m = basis.size
    y = np.zeros(m)
    for i in range(m):
        cb = cost[basis[i]]
        if cb != 0.0:
            for c in range(m):
                y[c] += cb * binv[i, c]
    nn = cost.size
    d = np.empty(nn)
    for k in range(nn):
        acc = 0.0
        for p in range(indptr[k], indptr[k + 1]):
            acc += y[indices[p]] * data[p]
        d[k] = cost[k] - acc
    return d


@njit(cache=True)
def max_violation(indptr, indices, data, x, rhs, sign, eq, lower, upper):
    """Largest row or bound violation at ``x``; rows in row-compressed form."""
    viol = 0.0
    m = rhs.size
    n = x.size
    for i in range(m):
        act = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            act += data[p] * x[indices[p]]
        v = (act - rhs[i]) * sign[i]
        if eq[i]:
            v = abs(v)
        if v > viol:
            viol = v
    for j in range(n):
        if lower[j] - x[j] > viol:
            viol = lower[j] - x[j]
        if x[j] - upper[j] > viol:
            viol = x[j] - upper[j]
    return viol
