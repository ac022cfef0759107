"""Maximum-weight one-to-one matching (Hungarian algorithm, O(n^3)).

Used for table unionability scoring: cells below a floor contribute
nothing, so maximizing the assignment on the floored matrix is exactly a
maximum-weight partial matching over admissible cells.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _hungarian_min(cost: np.ndarray) -> list[int]:
    """Solve the square min-cost assignment; returns col index per row.

    Potentials + shortest augmenting path formulation.
    """
    n = cost.shape[0]
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=int)          # p[j] = row matched to column j (1-based)
    way = np.zeros(n + 1, dtype=int)
    inf = float("inf")
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0, delta, j1 = p[j0], inf, 0
            for j in range(1, n + 1):
                if used[j]:
                    continue
                cur = cost[i0 - 1, j - 1] - u[i0] - v[j]
                if cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if minv[j] < delta:
                    delta = minv[j]
                    j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    assign = [0] * n
    for j in range(1, n + 1):
        if p[j] > 0:
            assign[p[j] - 1] = j - 1
    return assign


def hungarian_max_weight(matrix: np.ndarray) -> list[tuple[int, int]]:
    """Maximum-weight full assignment of the (padded) rectangular matrix.

    Returns (row, col) pairs for the original shape only.
    """
    matrix = np.asarray(matrix, dtype=float)
    r, c = matrix.shape
    n = max(r, c)
    padded = np.zeros((n, n))
    padded[:r, :c] = matrix
    assign = _hungarian_min(-padded)
    return [(i, j) for i, j in enumerate(assign) if i < r and j < c]


@dataclass
class MatchingResult:
    pairs: list[tuple[int, int, float]]   # (row, col, score), admissible only
    total: float


def max_bipartite_matching(score_matrix: np.ndarray, min_pair_score: float = 0.0) -> MatchingResult:
    """Maximum-weight one-to-one matching over cells >= min_pair_score."""
    matrix = np.asarray(score_matrix, dtype=float)
    if matrix.size == 0:
        return MatchingResult([], 0.0)
    if np.any(matrix < 0):
        raise ValueError("score matrix must be nonnegative")
    floored = np.where(matrix >= min_pair_score, matrix, 0.0)
    pairs = []
    for i, j in hungarian_max_weight(floored):
        if matrix[i, j] >= min_pair_score and floored[i, j] > 0:
            pairs.append((i, j, float(matrix[i, j])))
    pairs.sort()
    return MatchingResult(pairs, float(sum(s for _, _, s in pairs)))


def brute_force_max_matching(score_matrix: np.ndarray, min_pair_score: float = 0.0) -> float:
    """Exhaustive oracle: max total over all one-to-one partial matchings."""
    from itertools import permutations

    matrix = np.asarray(score_matrix, dtype=float)
    r, c = matrix.shape
    if r > c:
        return brute_force_max_matching(matrix.T, min_pair_score)
    best = 0.0
    for perm in permutations(range(c), r):
        total = sum(
            matrix[i, j] for i, j in enumerate(perm) if matrix[i, j] >= min_pair_score
        )
        best = max(best, total)
    return float(best)
