"""Online class-to-target matching.

Class centers are tracked with an exponential moving average over batches and
matched to the fixed targets by a minimum-cost assignment on Euclidean
distances.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateError, NotReadyError, ValidationError
from .targets import TargetSet


def batch_class_centers(features: np.ndarray, labels: np.ndarray) -> dict[int, np.ndarray]:
    """Normalized per-class feature sums for the classes present in a batch."""
    features = np.asarray(features, dtype=float)
    labels = np.asarray(labels)
    if features.ndim != 2 or len(features) == 0 or len(features) != len(labels):
        raise ValidationError("batch_class_centers needs a non-empty (N, d) batch with N labels")
    out = {}
    for c in np.unique(labels):
        s = features[labels == c].sum(axis=0)
        n = np.linalg.norm(s)
        if n < 1e-12:
            raise DegenerateError(f"features of class {int(c)} cancel out; center undefined")
        out[int(c)] = s / n
    return out


class CenterTracker:
    """EMA-maintained unit class centers.

    The first observation of a class sets its center directly. Later ones
    blend ``old_weight * c + (1 - old_weight) * c'`` and, unless
    ``renormalize`` is off, project back onto the sphere.
    """

    def __init__(self, num_classes: int, dim: int, old_weight: float = 0.9, renormalize: bool = True):
        if not 0 <= old_weight <= 1:
            raise ValidationError("old_weight must lie in [0, 1]")
        self.centers = np.zeros((num_classes, dim))
        self.initialized = np.zeros(num_classes, dtype=bool)
        self.old_weight = old_weight
        self.renormalize = renormalize

    @property
    def new_weight(self) -> float:
        return 1.0 - self.old_weight

    @property
    def ready(self) -> bool:
        return bool(self.initialized.all())

    def reset(self, centers: dict[int, np.ndarray]) -> None:
        for c, v in centers.items():
            self.centers[c] = v
            self.initialized[c] = True

    def copy(self) -> "CenterTracker":
        other = CenterTracker(*self.centers.shape, self.old_weight, self.renormalize)
        other.centers = self.centers.copy()
        other.initialized = self.initialized.copy()
        return other


def update_centers(tracker: CenterTracker, batch_centers: dict[int, np.ndarray]) -> CenterTracker:
    for c, new in batch_centers.items():
        if not tracker.initialized[c]:
            tracker.centers[c] = new
            tracker.initialized[c] = True
            continue
        blend = tracker.old_weight * tracker.centers[c] + tracker.new_weight * np.asarray(new)
        if tracker.renormalize:
            n = np.linalg.norm(blend)
            if n < 1e-12:
                raise DegenerateError(f"EMA center of class {c} collapsed to zero")
            blend = blend / n
        tracker.centers[c] = blend
    return tracker


def _hungarian_duals(cost: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Shortest augmenting path Hungarian method, O(n^3).

    Returns (row_to_col, u, v) with u_i + v_j <= cost_ij everywhere and
    equality on the matched edges.
    """
    n = cost.shape[0]
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=int)  # p[j]: row (1-based) matched to column j
    way = np.zeros(n + 1, dtype=int)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used[1:]
            cur = cost[i0 - 1] - u[i0] - v[1:]
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
        while True:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
            if j0 == 0:
                break
    row_to_col = np.empty(n, dtype=int)
    for j in range(1, n + 1):
        row_to_col[p[j] - 1] = j - 1
    return row_to_col, u[1:], v[1:]


def _reroute(tight: np.ndarray, match_col: np.ndarray, start_row: int, goal_col: int, min_row: int, banned_col: int) -> bool:
    """Alternating BFS in the tight graph: can ``start_row`` reach ``goal_col``?

    Only rows >= ``min_row`` may be re-matched. On success the matching
    ``match_col`` (column -> row) is rewritten along the path.
    """
    n = tight.shape[0]
    parent_col = {}
    seen_cols = {banned_col}
    queue = deque([start_row])
    while queue:
        r = queue.popleft()
        for c in np.flatnonzero(tight[r]):
            c = int(c)
            if c in seen_cols:
                continue
            seen_cols.add(c)
            parent_col[c] = r
            if c == goal_col:
                # walk back, flipping matched edges
                while True:
                    row = parent_col[c]
                    prev = next((cc for cc in range(n) if match_col[cc] == row), None)
                    match_col[c] = row
                    if row == start_row:
                        return True
                    c = prev
            nxt = match_col[c]
            if nxt >= min_row:
                queue.append(nxt)
    return False


def hungarian(cost) -> tuple[tuple[int, ...], float]:
    """Minimum-cost perfect assignment of rows to columns.

    Among optimal permutations the lexicographically smallest is returned.
    """
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1] or cost.shape[0] == 0:
        raise ValidationError(f"cost matrix must be square and non-empty, got {cost.shape}")
    if not np.all(np.isfinite(cost)):
        raise ValidationError("cost matrix has non-finite entries")
    n = cost.shape[0]
    row_to_col, u, v = _hungarian_duals(cost)

    # Every perfect matching on zero-reduced-cost edges is optimal.
    reduced = cost - u[:, None] - v[None, :]
    eps = 1e-9 * max(1.0, float(np.abs(cost).max()))
    tight = reduced <= eps
    tight[np.arange(n), row_to_col] = True
    match_col = np.empty(n, dtype=int)
    match_col[row_to_col] = np.arange(n)

    for i in range(n):
        for j in np.flatnonzero(tight[i]):
            j = int(j)
            if match_col[j] == i:
                break
            r = int(match_col[j])
            if r < i:
                continue
            # give j to i; r must find i's old column through rows > i
            old = int(np.flatnonzero(match_col == i)[0])
            trial = match_col.copy()
            trial[j] = i
            trial[old] = -1
            if _reroute(tight, trial, r, old, i + 1, j):
                match_col = trial
                break

    sigma = np.empty(n, dtype=int)
    sigma[match_col] = np.arange(n)
    total = float(cost[np.arange(n), sigma].sum())
    return tuple(int(s) for s in sigma), total


@dataclass(frozen=True)
class Assignment:
    sigma: tuple[int, ...]
    cost: float

    def __post_init__(self):
        if sorted(self.sigma) != list(range(len(self.sigma))):
            raise ValidationError("sigma is not a permutation")

    def target_of(self, labels: np.ndarray) -> np.ndarray:
        return np.asarray(self.sigma)[np.asarray(labels)]

    def dump(self) -> str:
        lines = [f"class={i} target={s}" for i, s in enumerate(self.sigma)]
        lines.append(f"cost={self.cost!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def parse(cls, text: str) -> "Assignment":
        sigma, cost = {}, None
        for line in text.splitlines():
            line = line.strip()
            if line.startswith("cost="):
                cost = float(line[5:])
            elif line:
                a, b = line.split()
                sigma[int(a.split("=")[1])] = int(b.split("=")[1])
        if cost is None:
            raise ValidationError("assignment dump lacks a cost line")
        return cls(tuple(sigma[i] for i in range(len(sigma))), cost)


def assignment_cost(centers: np.ndarray, targets: np.ndarray, sigma) -> float:
    """Mean distance between each class center and its assigned target."""
    d = np.linalg.norm(np.asarray(targets)[list(sigma)] - centers, axis=1)
    return float(d.mean())


def assign_targets(tracker: CenterTracker, ts: TargetSet) -> Assignment:
    if not tracker.ready:
        missing = np.flatnonzero(~tracker.initialized).tolist()
        raise NotReadyError(f"centers of classes {missing} are not initialized; extend the warm-up")
    if tracker.centers.shape != ts.points.shape:
        raise ValidationError(
            f"centers {tracker.centers.shape} and targets {ts.points.shape} disagree in shape"
        )
    dist = np.linalg.norm(tracker.centers[:, None, :] - ts.points[None, :, :], axis=2)
    sigma, _ = hungarian(dist)
    return Assignment(sigma, assignment_cost(tracker.centers, ts.points, sigma))
