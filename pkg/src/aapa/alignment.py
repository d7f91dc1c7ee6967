"""Detection-to-anchor alignment as a capped linear assignment problem.

Costs at or above ``tau`` are forbidden. The solver is a Kuhn-Munkres
(shortest augmenting path with dual potentials) implementation that maximizes
the number of allowed pairs first and minimizes their total cost second. Among
equally good matchings the lexicographically smallest sorted pair list wins.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from aapa.geometry import BoundingBox, Detection, ObjectClass

FORBIDDEN = np.inf


@dataclass(frozen=True)
class AlignmentConfig:
    tau: float = 6500.0
    position_weight: float = 1.0
    size_weight: float = 1.0
    # None ties the penalty to tau, i.e. class changes are never matched.
    class_mismatch_penalty: float | None = None

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        for name in ("position_weight", "size_weight"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.class_mismatch_penalty is not None and self.class_mismatch_penalty < 0:
            raise ValueError("class_mismatch_penalty must be nonnegative")

    @property
    def mismatch_penalty(self) -> float:
        return self.tau if self.class_mismatch_penalty is None else self.class_mismatch_penalty


@dataclass
class AlignmentResult:
    matched: list[tuple[Any, int]] = field(default_factory=list)
    lost: list[Any] = field(default_factory=list)
    unmatched_detections: list[int] = field(default_factory=list)
    costs: dict[Any, float] = field(default_factory=dict)


def pairwise_cost(
    anchor_box: BoundingBox, anchor_class: ObjectClass, det: Detection, cfg: AlignmentConfig
) -> float:
    (ax, ay), (dx, dy) = anchor_box.center, det.box.center
    cost = cfg.position_weight * ((ax - dx) ** 2 + (ay - dy) ** 2)
    cost += cfg.size_weight * ((anchor_box.w - det.box.w) ** 2 + (anchor_box.h - det.box.h) ** 2)
    if anchor_class != det.object_class:
        cost += cfg.mismatch_penalty
    return cost


def build_cost_matrix(anchors: Sequence, detections: Sequence[Detection], cfg: AlignmentConfig) -> np.ndarray:
    """``len(anchors) x len(detections)`` costs; entries ``>= tau`` become ``FORBIDDEN``.

    Anchors are anything exposing ``box`` and ``object_class``.
    """
    out = np.full((len(anchors), len(detections)), FORBIDDEN)
    for i, a in enumerate(anchors):
        for j, d in enumerate(detections):
            c = pairwise_cost(a.box, a.object_class, d, cfg)
            if c < cfg.tau:
                out[i, j] = c
    return out


def _hungarian(a: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Min-cost perfect assignment of a square finite matrix.

    Returns (col_of_row, u, v) with ``a[i, j] - u[i] - v[j] >= 0`` everywhere
    and equality on the assignment.
    """
    n = a.shape[0]
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=int)  # p[j]: row (1-based) holding column j
    way = np.zeros(n + 1, dtype=int)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            cur = a[i0 - 1] - u[i0] - v[1:]
            free = ~used[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            cand = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(cand)) + 1
            delta = cand[j1 - 1]
            u[p[used]] += delta
            v[used] -= delta
            minv[1:][free] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    col_of_row = np.empty(n, dtype=int)
    for j in range(1, n + 1):
        col_of_row[p[j] - 1] = j - 1
    return col_of_row, u[1:], v[1:]


def _solve_block(cost: np.ndarray) -> tuple[dict[int, int], np.ndarray, np.ndarray, float]:
    """Max-cardinality, then min-cost matching on a block with inf = forbidden.

    Forbidden and padding cells get a penalty larger than any achievable
    allowed total, so each one costs more than every allowed saving.
    """
    r, c = cost.shape
    n = max(r, c)
    allowed = np.isfinite(cost)
    top = float(cost[allowed].max()) if allowed.any() else 0.0
    big = (min(r, c) + 1) * (top + 1.0)
    square = np.full((n, n), big)
    square[:r, :c] = np.where(allowed, cost, big)
    col_of_row, u, v = _hungarian(square)
    match = {i: int(col_of_row[i]) for i in range(r) if col_of_row[i] < c and allowed[i, col_of_row[i]]}
    reduced = square[:r, :c] - u[:r, None] - v[None, :c]
    return match, reduced, allowed, big


def _optimum(cost: np.ndarray, rows: list[int], cols: list[int]) -> tuple[int, float]:
    if not rows or not cols:
        return 0, 0.0
    sub = cost[np.ix_(rows, cols)]
    if not np.isfinite(sub).any():
        return 0, 0.0
    match, _, _, _ = _solve_block(sub)
    return len(match), sum(float(sub[i, j]) for i, j in match.items())


def _lex_smallest(cost: np.ndarray) -> dict[int, int]:
    r, c = cost.shape
    match, reduced, allowed, big = _solve_block(cost)
    best_card = len(match)
    best_cost = sum(float(cost[i, j]) for i, j in match.items())
    tight_tol = 1e-9 * big * max(r, c)
    same_cost_tol = 1e-9 * max(1.0, abs(best_cost))

    decided: dict[int, int | None] = {}
    for i in range(r):
        taken = {j for j in decided.values() if j is not None}
        current = match.get(i)
        for j in range(c if current is None else current):
            if j in taken or not allowed[i, j] or reduced[i, j] > tight_tol:
                continue
            fixed = {k: v for k, v in decided.items() if v is not None}
            fixed[i] = j
            rest_rows = list(range(i + 1, r))
            rest_cols = [k for k in range(c) if k not in taken and k != j]
            card, total = _optimum(cost, rest_rows, rest_cols)
            card += len(fixed)
            total += sum(float(cost[a, b]) for a, b in fixed.items())
            if card == best_card and abs(total - best_cost) <= same_cost_tol:
                sub = cost[np.ix_(rest_rows, rest_cols)]
                sub_match = _solve_block(sub)[0] if np.isfinite(sub).any() else {}
                match = dict(fixed)
                match.update({rest_rows[a]: rest_cols[b] for a, b in sub_match.items()})
                break
        decided[i] = match.get(i)
    return {i: j for i, j in decided.items() if j is not None}


def _components(allowed: np.ndarray) -> list[tuple[list[int], list[int]]]:
    """Connected components of the bipartite graph of allowed cells."""
    r, c = allowed.shape
    parent = list(range(r + c))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i, j in zip(*np.nonzero(allowed)):
        a, b = find(int(i)), find(r + int(j))
        if a != b:
            parent[max(a, b)] = min(a, b)
    groups: dict[int, tuple[list[int], list[int]]] = {}
    for i in range(r):
        if allowed[i].any():
            groups.setdefault(find(i), ([], []))[0].append(i)
    for j in range(c):
        if allowed[:, j].any():
            groups.setdefault(find(r + j), ([], []))[1].append(j)
    return [groups[k] for k in sorted(groups)]


def solve_assignment(matrix) -> list[tuple[int, int]]:
    """Optimal matching of a cost matrix whose forbidden cells are ``inf``.

    Returns the sorted ``(row, col)`` pairs. Independent blocks of the
    allowed-cell graph are solved separately.
    """
    cost = np.asarray(matrix, dtype=float)
    if cost.ndim != 2:
        raise ValueError("cost matrix must be 2-D")
    if np.isnan(cost).any() or (cost < 0).any():
        raise ValueError("costs must be nonnegative or inf")
    allowed = np.isfinite(cost)
    pairs = []
    for rows, cols in _components(allowed):
        if len(rows) == 1 and len(cols) == 1:
            pairs.append((rows[0], cols[0]))
            continue
        local = _lex_smallest(cost[np.ix_(rows, cols)])
        pairs.extend((rows[i], cols[j]) for i, j in local.items())
    return sorted(pairs)


def assignment_cost(matrix, pairs) -> float:
    cost = np.asarray(matrix, dtype=float)
    return sum(float(cost[i, j]) for i, j in sorted(pairs))


def align(anchors: Sequence, detections: Sequence[Detection], cfg: AlignmentConfig) -> AlignmentResult:
    """Match anchors to detections.

    Anchors expose ``box`` and ``object_class``; if they also carry ``id`` it
    is used in the result, otherwise the positional index is.
    """
    matrix = build_cost_matrix(anchors, detections, cfg)
    pairs = solve_assignment(matrix)
    ids = [getattr(a, "id", i) for i, a in enumerate(anchors)]
    used_rows = {i for i, _ in pairs}
    used_cols = {j for _, j in pairs}
    return AlignmentResult(
        matched=[(ids[i], j) for i, j in pairs],
        lost=[ids[i] for i in range(len(anchors)) if i not in used_rows],
        unmatched_detections=[j for j in range(len(detections)) if j not in used_cols],
        costs={ids[i]: float(matrix[i, j]) for i, j in pairs},
    )
