"""
Data association
================

Cost matrices with hard gates, an exact Hungarian solver and the greedy
matcher of the plain IoU tracker.

Infeasible (gated) pairs are stored as ``INFEASIBLE`` (``+inf``).  The
solver maximizes the number of feasible pairs first and minimizes total
cost among those assignments; remaining ties are broken towards the
lexicographically smallest ``(row, col)`` pair list.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .appearance import Embedding, TrackAppearance, cosine_distance
from .geometry import BBox, iou_matrix

INFEASIBLE = np.inf


@dataclass(frozen=True, eq=False)
class CostMatrix:
    costs: np.ndarray

    def __post_init__(self):
        c = np.array(self.costs, dtype=np.float64)
        if c.ndim == 1 and c.size == 0:
            c = c.reshape(0, 0)
        if c.ndim != 2:
            raise ValueError(f"cost matrix must be 2-D, got shape {c.shape}")
        feas = np.isfinite(c)
        if np.any(np.isnan(c)) or np.any(c[feas] < 0):
            raise ValueError("feasible costs must be finite and non-negative")
        if np.any(np.isneginf(c)):
            raise ValueError("-inf is not a valid cost")
        c.setflags(write=False)
        object.__setattr__(self, "costs", c)

    @property
    def rows(self) -> int:
        return self.costs.shape[0]

    @property
    def cols(self) -> int:
        return self.costs.shape[1]

    @property
    def feasible(self) -> np.ndarray:
        return np.isfinite(self.costs)


@dataclass
class Assignment:
    pairs: List[Tuple[int, int]] = field(default_factory=list)
    unmatched_rows: List[int] = field(default_factory=list)
    unmatched_cols: List[int] = field(default_factory=list)

    def total_cost(self, m) -> float:
        costs = m.costs if isinstance(m, CostMatrix) else np.asarray(m, dtype=float)
        return float(sum(costs[r, c] for r, c in self.pairs))


def _as_cost_matrix(m) -> CostMatrix:
    return m if isinstance(m, CostMatrix) else CostMatrix(m)


def _assignment_from_pairs(pairs, n_rows, n_cols) -> Assignment:
    pairs = sorted(pairs)
    rows = {r for r, _ in pairs}
    cols = {c for _, c in pairs}
    return Assignment(
        pairs=pairs,
        unmatched_rows=[r for r in range(n_rows) if r not in rows],
        unmatched_cols=[c for c in range(n_cols) if c not in cols],
    )


def _lsa_square(a: np.ndarray):
    """Min-cost perfect matching on a square matrix of finite costs.

    Shortest augmenting path with dual potentials, O(n^3).  Returns
    ``(col_of_row, u, v)`` with ``u[i] + v[j] <= a[i, j]`` and equality on
    the assigned cells.
    """
    n = a.shape[0]
    inf = float("inf")
    u = [0.0] * (n + 1)
    v = [0.0] * (n + 1)
    p = [0] * (n + 1)  # p[j]: row (1-based) assigned to column j
    way = [0] * (n + 1)
    rows = a.tolist()
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = [inf] * (n + 1)
        used = [False] * (n + 1)
        while True:
            used[j0] = True
            i0 = p[j0]
            row = rows[i0 - 1]
            ui0 = u[i0]
            delta = inf
            j1 = 0
            for j in range(1, n + 1):
                if not used[j]:
                    cur = row[j - 1] - ui0 - v[j]
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
        while True:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
            if j0 == 0:
                break
    col_of_row = [0] * n
    for j in range(1, n + 1):
        if p[j]:
            col_of_row[p[j] - 1] = j - 1
    return col_of_row, np.array(u[1:]), np.array(v[1:])


def _solve_padded(costs: np.ndarray):
    """Solve one max-cardinality / min-cost instance.

    Returns ``(pairs, card, total, duals)`` where ``duals`` are the potentials
    of the padded square problem (``None`` for an empty instance).
    """
    n_rows, n_cols = costs.shape
    if n_rows == 0 or n_cols == 0:
        return [], 0, 0.0, None
    k = max(n_rows, n_cols)
    feas = np.isfinite(costs)
    max_cost = float(costs[feas].max()) if feas.any() else 0.0
    # one extra feasible pair must outweigh any cost difference
    big = k * (max_cost + 1.0) + 1.0
    padded = np.full((k, k), big)
    padded[:n_rows, :n_cols] = np.where(feas, costs, big)
    col_of_row, u, v = _lsa_square(padded)
    pairs = [(r, col_of_row[r]) for r in range(n_rows)
             if col_of_row[r] < n_cols and feas[r, col_of_row[r]]]
    total = float(sum(costs[r, c] for r, c in pairs))
    return pairs, len(pairs), total, (padded, u, v, big)


def _same_value(card_a, cost_a, card_b, cost_b, scale) -> bool:
    # summation error is a few ulps of the total; anything larger is a real difference
    return card_a == card_b and abs(cost_a - cost_b) <= 1e-12 * max(1.0, scale)


def hungarian_solve(m) -> Assignment:
    """Optimal assignment over the feasible cells of ``m``.

    Among assignments with the largest number of feasible pairs, one of
    minimum total cost is returned; ties go to the lexicographically
    smallest sorted pair list.
    """
    m = _as_cost_matrix(m)
    costs = m.costs
    n_rows, n_cols = costs.shape
    pairs, card, total, duals = _solve_padded(costs)
    if duals is None or card == 0:
        return _assignment_from_pairs(pairs, n_rows, n_cols)

    padded, u, v, big = duals
    reduced = padded - u[:, None] - v[None, :]
    tol = 1e-9 * max(1.0, big)
    feas = np.isfinite(costs)
    scale = max(1.0, abs(total))

    # Tie-break: walk rows in order and, for each, try any cheaper-ordered
    # column that is tight under the optimal duals (only those can appear in
    # an optimal assignment); keep it if the remaining rows can still reach
    # the optimum.
    current = dict(pairs)
    fixed: dict = {}
    for r in range(n_rows):
        cur_col = current.get(r)
        candidates = [c for c in range(n_cols)
                      if feas[r, c] and reduced[r, c] <= tol
                      and (cur_col is None or c < cur_col)
                      and c not in fixed.values()]
        for c in candidates:
            trial = _complete(costs, fixed, r, c)
            if trial is not None:
                t_pairs, t_card, t_total = trial
                if _same_value(t_card, t_total, card, total, scale):
                    current = dict(t_pairs)
                    break
        if r in current:
            fixed[r] = current[r]
        else:
            fixed[r] = None
    final = [(r, c) for r, c in fixed.items() if c is not None]
    return _assignment_from_pairs(final, n_rows, n_cols)


def _complete(costs, fixed, r, c):
    """Best completion with rows ``< r`` fixed as given and ``(r, c)`` forced."""
    n_rows, n_cols = costs.shape
    used_cols = {cc for cc in fixed.values() if cc is not None} | {c}
    rest_rows = list(range(r + 1, n_rows))
    rest_cols = [cc for cc in range(n_cols) if cc not in used_cols]
    sub = costs[np.ix_(rest_rows, rest_cols)] if rest_rows and rest_cols else np.zeros((0, 0))
    sub_pairs, sub_card, sub_total, _ = _solve_padded(sub)
    pairs = [(rr, cc) for rr, cc in fixed.items() if cc is not None]
    pairs.append((r, c))
    pairs += [(rest_rows[i], rest_cols[j]) for i, j in sub_pairs]
    total = float(sum(costs[rr, cc] for rr, cc in pairs))
    return pairs, len(pairs), total


def greedy_solve(m) -> Assignment:
    """Rows in order, each taking its cheapest available feasible column."""
    m = _as_cost_matrix(m)
    costs = m.costs
    taken = set()
    pairs = []
    for r in range(m.rows):
        best, best_cost = None, INFEASIBLE
        for c in range(m.cols):
            if c not in taken and costs[r, c] < best_cost:
                best, best_cost = c, costs[r, c]
        if best is not None:
            taken.add(best)
            pairs.append((r, best))
    return _assignment_from_pairs(pairs, m.rows, m.cols)


def build_iou_cost(track_boxes: Sequence[BBox], det_boxes: Sequence[BBox], gate: float) -> CostMatrix:
    ious = iou_matrix(track_boxes, det_boxes)
    return CostMatrix(np.where(ious >= gate, 1.0 - ious, INFEASIBLE))


def greedy_iou_match(tracks: Sequence[BBox], dets: Sequence[BBox], sigma_iou: float) -> Assignment:
    """IoU-tracker association: each track, in order, grabs its best-IoU free detection."""
    return greedy_solve(build_iou_cost(tracks, dets, sigma_iou))


def build_stage2_cost(
    track_boxes: Sequence[BBox],
    det_boxes: Sequence[BBox],
    track_apps: Sequence[Optional[TrackAppearance]],
    det_embs: Sequence[Optional[Embedding]],
    gate_iou: float,
    gate_app: float,
    stage2_cost: str = "appearance",
) -> CostMatrix:
    """Joint IoU + appearance gate for the second cascade stage.

    A pair is feasible iff IoU >= ``gate_iou`` and cosine distance <=
    ``gate_app``.  Pairs missing an embedding on either side fall back to
    the IoU gate alone with cost ``1 - IoU``.  ``stage2_cost`` picks the
    cost of a fully gated pair: ``appearance`` (cosine distance), ``iou``
    (``1 - IoU``) or ``mean`` of the two.
    """
    if stage2_cost not in ("appearance", "iou", "mean"):
        raise ValueError(f"unknown stage2_cost {stage2_cost!r}")
    ious = iou_matrix(track_boxes, det_boxes)
    out = np.full(ious.shape, INFEASIBLE)
    for i in range(ious.shape[0]):
        app = track_apps[i]
        for j in range(ious.shape[1]):
            if ious[i, j] < gate_iou:
                continue
            emb = det_embs[j]
            if app is None or emb is None:
                out[i, j] = 1.0 - ious[i, j]
                continue
            dist = cosine_distance(app.current, emb)
            if dist > gate_app:
                continue
            if stage2_cost == "appearance":
                out[i, j] = dist
            elif stage2_cost == "iou":
                out[i, j] = 1.0 - ious[i, j]
            else:
                out[i, j] = 0.5 * (dist + 1.0 - ious[i, j])
    return CostMatrix(out)
