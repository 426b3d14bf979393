"""k-positive supervised contrastive loss (KCL) and its targeted variant (TSC).

For anchor v_i the candidate set is its own augmented view, every other
first view in the batch and, for TSC, all class targets:

    Z_i = exp(v_i.~v_i/tau) + sum_{j != i} exp(v_i.v_j/tau) [+ sum_c exp(v_i.t_c/tau)]

The positive set is ~v_i plus up to k same-class first views drawn without
replacement. TSC adds ``lam * log(exp(v_i.t_{sigma(y_i)}/tau) / Z_i)``.
Both losses return the mean over anchors of the negated log-ratios together
with exact gradients w.r.t. the first and augmented views.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from ._sphere import check_unit
from .assignment import Assignment
from .errors import ContractError, ValidationError
from .targets import TargetSet


@dataclass(frozen=True)
class LossConfig:
    k: int = 6
    lam: float = 0.2
    tau: float = 0.5
    positive_sampling_seed: int = 0
    # divide the positive term by k+1 as written, instead of the actual set size
    fixed_divisor: bool = False
    # TSC only: put the targets into every denominator
    targets_in_denominator: bool = True

    def __post_init__(self):
        if self.k < 1:
            raise ValidationError("k must be >= 1")
        if self.lam < 0:
            raise ValidationError("lambda must be non-negative")
        if not self.tau > 0:
            raise ValidationError("tau must be positive")


@dataclass
class FeatureBatch:
    features: np.ndarray
    augmented: np.ndarray
    labels: np.ndarray
    ids: np.ndarray | None = None

    def __post_init__(self):
        self.features = check_unit(self.features, "features", tol=1e-9)
        self.augmented = check_unit(self.augmented, "augmented features", tol=1e-9)
        self.labels = np.asarray(self.labels, dtype=int)
        if self.augmented.shape != self.features.shape or self.labels.shape != (len(self.features),):
            raise ValidationError("features, augmented features and labels disagree in size")
        if np.any(self.labels < 0):
            raise ValidationError("labels must be non-negative")
        if self.ids is None:
            self.ids = np.arange(len(self.features))
        else:
            self.ids = np.asarray(self.ids, dtype=np.int64)
            if np.any(self.ids < 0) or len(np.unique(self.ids)) != len(self.ids):
                raise ValidationError("sample ids must be unique and non-negative")

    def __len__(self):
        return len(self.features)


@dataclass(frozen=True)
class LossResult:
    loss: float
    grad_features: np.ndarray
    grad_augmented: np.ndarray


def _pair_keys(batch: FeatureBatch, seed: int, epoch: int) -> np.ndarray:
    """Uniform keys for every (anchor, candidate) pair, indexed by sample id.

    The generator is seeded from (seed, epoch, sorted ids), so reordering a
    batch permutes the keys along with the samples.
    """
    order = np.argsort(batch.ids, kind="stable")
    rng = np.random.default_rng([seed, epoch, *batch.ids[order].tolist()])
    keys = rng.random((len(batch), len(batch)))
    rank = np.empty(len(batch), dtype=int)
    rank[order] = np.arange(len(batch))
    return keys[rank[:, None], rank[None, :]]


def positive_mask(batch: FeatureBatch, k: int, seed: int, epoch: int = 0) -> np.ndarray:
    """(N, N) boolean mask: row i marks the sampled positives of anchor i.

    Each anchor keeps the k same-class candidates with the smallest keys,
    i.e. a uniform draw without replacement; all of them if fewer than k.
    """
    n = len(batch)
    same = batch.labels[:, None] == batch.labels[None, :]
    np.fill_diagonal(same, False)
    keys = np.where(same, _pair_keys(batch, seed, epoch), np.inf)
    order = np.argsort(keys, axis=1, kind="stable")
    rank = np.empty_like(order)
    np.put_along_axis(rank, order, np.broadcast_to(np.arange(n), (n, n)), axis=1)
    return same & (rank < k)


def sample_positives(batch: FeatureBatch, anchor: int, k: int, seed: int, epoch: int = 0) -> np.ndarray:
    """Indices of up to k same-class samples other than the anchor."""
    return np.flatnonzero(positive_mask(batch, k, seed, epoch)[anchor])


def _positive_weights(batch: FeatureBatch, cfg: LossConfig, epoch: int) -> np.ndarray:
    """(N, N) weights on the logits of positives; the diagonal stands for ~v_i."""
    w = positive_mask(batch, cfg.k, cfg.positive_sampling_seed, epoch).astype(float)
    np.fill_diagonal(w, 1.0)
    size = np.full(len(batch), cfg.k + 1.0) if cfg.fixed_divisor else w.sum(axis=1)
    return w / size[:, None]


def _contrastive(
    batch: FeatureBatch,
    cfg: LossConfig,
    epoch: int,
    negatives: np.ndarray | None,
    anchor_targets: np.ndarray | None,
    lam: float,
) -> LossResult:
    v, vt = batch.features, batch.augmented
    n = len(batch)
    tau = cfg.tau

    sim = v @ v.T
    np.fill_diagonal(sim, np.sum(v * vt, axis=1))
    blocks = [sim / tau]
    if negatives is not None:
        blocks.append(v @ negatives.T / tau)
    logits = np.concatenate(blocks, axis=1)
    lse = logsumexp(logits, axis=1)
    prob = np.exp(logits - lse[:, None])

    w = _positive_weights(batch, cfg, epoch)
    if negatives is not None:
        w = np.concatenate([w, np.zeros((n, len(negatives)))], axis=1)
    wsum = w.sum(axis=1)
    per_anchor = wsum * lse - np.sum(w * logits, axis=1)
    g = wsum[:, None] * prob - w

    extra = np.zeros_like(v)
    if anchor_targets is not None and lam > 0:
        pull = np.sum(v * anchor_targets, axis=1) / tau
        per_anchor = per_anchor + lam * (lse - pull)
        g = g + lam * prob
        extra = -lam * anchor_targets / tau
    g /= n

    g_pairs = g[:, :n].copy()
    g_self = np.diag(g_pairs).copy()
    np.fill_diagonal(g_pairs, 0.0)
    grad_v = (g_pairs + g_pairs.T) @ v / tau + g_self[:, None] * vt / tau + extra / n
    if negatives is not None:
        grad_v += g[:, n:] @ negatives / tau
    grad_vt = g_self[:, None] * v / tau
    return LossResult(float(per_anchor.mean()), grad_v, grad_vt)


def kcl_loss(
    batch: FeatureBatch,
    cfg: LossConfig,
    extra_negatives: TargetSet | None = None,
    *,
    epoch: int = 0,
) -> LossResult:
    negatives = None
    if extra_negatives is not None:
        negatives = extra_negatives.points
        if negatives.shape[1] != batch.features.shape[1]:
            raise ValidationError("target dimension differs from feature dimension")
    return _contrastive(batch, cfg, epoch, negatives, None, 0.0)


def tsc_loss(
    batch: FeatureBatch,
    ts: TargetSet,
    assignment: Assignment,
    cfg: LossConfig,
    *,
    epoch: int = 0,
) -> LossResult:
    if ts.dim != batch.features.shape[1]:
        raise ValidationError("target dimension differs from feature dimension")
    if batch.labels.max() >= len(assignment.sigma):
        raise ContractError(
            f"class {int(batch.labels.max())} appears in the batch but has no assigned target"
        )
    anchor_targets = ts.points[assignment.target_of(batch.labels)]
    negatives = ts.points if cfg.targets_in_denominator else None
    return _contrastive(batch, cfg, epoch, negatives, anchor_targets, cfg.lam)
