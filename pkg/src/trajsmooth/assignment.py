"""Optimal and ranked (M-best) 2-D assignment over rectangular cost matrices.

Cost matrices are m x n with m <= n; +inf marks a forbidden pairing and is
never selected. Column indices are exclusive: a feasible assignment maps every
row to a distinct column. `murty` returns the min(M, #feasible) cheapest
assignments in nondecreasing cost order, breaking exact cost ties by
lexicographic row_to_col.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ContractError, InfeasibleAssignmentError

# switch to exhaustive enumeration when the product of per-row candidate
# counts is small; both paths produce identical ranked output
_ENUM_CAP = 512


@dataclass(frozen=True)
class Assignment:
    row_to_col: tuple[int, ...]
    cost: float


def _entry_cost(cost: np.ndarray, cols) -> float:
    # sequential accumulation so brute-force oracles can match bit-exactly
    total = 0.0
    for i, j in enumerate(cols):
        total += float(cost[i, j])
    return total


def _validate(cost: np.ndarray) -> np.ndarray:
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2:
        raise ContractError(f"cost matrix must be 2-D, got shape {cost.shape}")
    m, n = cost.shape
    if m > n:
        raise ContractError(f"cost matrix must have m <= n, got {m}x{n}")
    if np.isnan(cost).any() or np.isneginf(cost).any():
        raise ContractError("cost matrix entries must be finite or +inf")
    return cost


def solve_lap(cost: np.ndarray) -> Assignment:
    """Minimum-cost assignment of every row to a distinct column.

    Raises InfeasibleAssignmentError when no complete assignment avoids the
    +inf entries.
    """
    cost = _validate(cost)
    m = cost.shape[0]
    if m == 0:
        return Assignment((), 0.0)
    try:
        rows, cols = linear_sum_assignment(cost)
    except ValueError as exc:
        raise InfeasibleAssignmentError(str(exc)) from exc
    row_to_col = tuple(int(c) for c in cols[np.argsort(rows)])
    return Assignment(row_to_col, _entry_cost(cost, row_to_col))


def murty(cost: np.ndarray, m_best: int) -> list[Assignment]:
    """The min(m_best, #feasible) cheapest assignments, cheapest first."""
    cost = _validate(cost)
    if m_best < 1:
        raise ContractError(f"m_best must be >= 1, got {m_best}")
    return _ranked(cost, m_best)


def _ranked(cost: np.ndarray, m_best: int) -> list[Assignment]:
    """murty body for already-validated matrices (internal hot path)."""
    m = cost.shape[0]
    if m == 0:
        return [Assignment((), 0.0)]

    candidate_counts = np.isfinite(cost).sum(axis=1)
    if candidate_counts.min() == 0:
        raise InfeasibleAssignmentError("a row has no finite-cost column")
    if np.prod(candidate_counts, dtype=float) <= _ENUM_CAP:
        pairs = _enumerate_all(cost)
        if not pairs:
            raise InfeasibleAssignmentError("no feasible assignment")
        pairs.sort()
        return [Assignment(cols, total) for total, cols in pairs[:m_best]]
    out = _murty_queue(cost, m_best)
    out.sort(key=lambda a: (a.cost, a.row_to_col))
    return out[:m_best]


def _enumerate_all(cost: np.ndarray) -> list[tuple[float, tuple[int, ...]]]:
    m, n = cost.shape
    rows = cost.tolist()
    finite_cols = [
        [j for j in range(n) if rows[i][j] != np.inf] for i in range(m)
    ]
    out: list[tuple[float, tuple[int, ...]]] = []
    chosen: list[int] = []

    def recurse(row: int, total: float, used: set[int]):
        if row == m:
            out.append((total, tuple(chosen)))
            return
        entries = rows[row]
        for c in finite_cols[row]:
            if c not in used:
                chosen.append(c)
                used.add(c)
                recurse(row + 1, total + entries[c], used)
                used.discard(c)
                chosen.pop()

    recurse(0, 0.0, set())
    return out


def _murty_queue(cost: np.ndarray, m_best: int) -> list[Assignment]:
    m = cost.shape[0]
    first = solve_lap(cost)
    counter = 0
    heap = [(first.cost, first.row_to_col, counter, cost, first)]
    out: list[Assignment] = []
    while heap and len(out) < m_best:
        _, _, _, problem, solution = heapq.heappop(heap)
        out.append(solution)
        # partition the remaining solution space of this node
        node = problem.copy()
        for r in range(m):
            c = solution.row_to_col[r]
            if np.isfinite(node[r]).sum() > 1:  # else forbidding (r, c) is trivially infeasible
                child = node.copy()
                child[r, c] = np.inf
                try:
                    sub = solve_lap(child)
                except InfeasibleAssignmentError:
                    sub = None
                if sub is not None:
                    counter += 1
                    heapq.heappush(heap, (sub.cost, sub.row_to_col, counter, child, sub))
            # enforce (r, c) for the remaining children of this node
            keep = node[r, c]
            node[r, :] = np.inf
            node[:, c] = np.inf
            node[r, c] = keep
    return out
