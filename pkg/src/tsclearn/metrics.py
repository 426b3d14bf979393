"""Feature-space quality metrics: alignment, uniformity, neighborhood
uniformity and reasonability.

Every metric is an average of per-class contributions, which is what lets the
report break it down by frequency group.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._sphere import check_unit
from .assignment import batch_class_centers
from .datagen import HierarchyTree, distance_matrix
from .errors import ValidationError

GROUPS = ("many", "medium", "few", "all")


def _pairwise(x: np.ndarray) -> np.ndarray:
    diff = x[:, None, :] - x[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))


def class_centers(features, labels, num_classes: int) -> np.ndarray:
    centers = batch_class_centers(features, labels)
    missing = sorted(set(range(num_classes)) - set(centers))
    if missing:
        raise ValidationError(f"classes {missing} have no features")
    return np.stack([centers[c] for c in range(num_classes)])


def alignment_per_class(features, labels, num_classes: int) -> np.ndarray:
    features = check_unit(features, "features")
    labels = np.asarray(labels)
    out = np.empty(num_classes)
    for c in range(num_classes):
        f = features[labels == c]
        if len(f) == 0:
            raise ValidationError(f"class {c} has no features")
        out[c] = _pairwise(f).sum() / len(f) ** 2
    return out


def alignment(features, labels, num_classes: int | None = None) -> float:
    """Mean over classes of the average distance over ordered same-class pairs (self-pairs included)."""
    C = num_classes if num_classes is not None else int(np.max(labels)) + 1
    return float(alignment_per_class(features, labels, C).mean())


def _nearest_mean(centers: np.ndarray, k: int) -> np.ndarray:
    C = len(centers)
    if C < 2:
        raise ValidationError("need at least two class centers")
    if not 1 <= k <= C - 1:
        raise ValidationError(f"k must lie in [1, {C - 1}], got {k}")
    dist = _pairwise(centers)
    others = dist[~np.eye(C, dtype=bool)].reshape(C, C - 1)
    return np.sort(others, axis=1)[:, :k].sum(axis=1) / k


def uniformity_per_class(centers) -> np.ndarray:
    centers = check_unit(centers, "centers")
    return _nearest_mean(centers, len(centers) - 1)


def uniformity(centers) -> float:
    """Mean distance between distinct class centers."""
    return float(uniformity_per_class(centers).mean())


def neighborhood_uniformity_per_class(centers, k: int) -> np.ndarray:
    return _nearest_mean(check_unit(centers, "centers"), k)


def neighborhood_uniformity(centers, k: int) -> float:
    """Mean distance from each class center to its k nearest other centers."""
    return float(neighborhood_uniformity_per_class(centers, k).mean())


def reasonability_per_class(centers, hierarchy: HierarchyTree, k: int) -> np.ndarray:
    centers = check_unit(centers, "centers")
    C = len(centers)
    if hierarchy.num_classes != C:
        raise ValidationError(f"hierarchy covers {hierarchy.num_classes} classes, centers {C}")
    if not 1 <= k <= C - 1:
        raise ValidationError(f"k must lie in [1, {C - 1}], got {k}")
    dist = _pairwise(centers)
    np.fill_diagonal(dist, np.inf)
    nearest = np.argsort(dist, axis=1, kind="stable")[:, :k]
    tree = distance_matrix(hierarchy)
    return tree[np.arange(C)[:, None], nearest].mean(axis=1)


def reasonability(centers, hierarchy: HierarchyTree, k: int) -> float:
    """Mean tree distance from each class to its k geometrically nearest classes."""
    return float(reasonability_per_class(centers, hierarchy, k).mean())


def default_k(num_classes: int) -> int:
    return min(10, num_classes - 1)


@dataclass
class MetricsReport:
    k: int
    # group -> {"A", "U", "Uk", "R", "acc"}
    groups: dict[str, dict[str, float]] = field(default_factory=dict)

    def __getitem__(self, group: str) -> dict[str, float]:
        return self.groups[group]

    @property
    def A(self) -> float:
        return self.groups["all"]["A"]

    @property
    def U(self) -> float:
        return self.groups["all"]["U"]

    @property
    def Uk(self) -> float:
        return self.groups["all"]["Uk"]

    @property
    def R(self) -> float:
        return self.groups["all"]["R"]

    def to_text(self) -> str:
        lines = [f"k={self.k}"]
        for g, vals in self.groups.items():
            lines += [f"{g}.{key}={val!r}" for key, val in vals.items()]
        return "\n".join(lines) + "\n"

    def csv_rows(self) -> list[dict]:
        return [{"group": g, "k": self.k, **vals} for g, vals in self.groups.items()]


def metrics_report(
    features,
    labels,
    hierarchy: HierarchyTree,
    groups: dict[str, np.ndarray],
    k: int | None = None,
    per_class_accuracy: np.ndarray | None = None,
) -> MetricsReport:
    """All four metrics, overall and per frequency group.

    Centers are recomputed from ``features``. Group values average the
    per-class contributions of the classes in that group.
    """
    C = hierarchy.num_classes
    k = default_k(C) if k is None else k
    centers = class_centers(features, labels, C)
    per = {
        "A": alignment_per_class(features, labels, C),
        "U": uniformity_per_class(centers),
        "Uk": neighborhood_uniformity_per_class(centers, k),
        "R": reasonability_per_class(centers, hierarchy, k),
    }
    if per_class_accuracy is not None:
        per["acc"] = np.asarray(per_class_accuracy, dtype=float)
    report = MetricsReport(k)
    for g in GROUPS:
        idx = groups[g]
        report.groups[g] = {key: float(vals[idx].mean()) for key, vals in per.items()}
    return report
