"""Two-stage pipeline: contrastive representation learning, then a linear probe."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .assignment import (
    Assignment,
    CenterTracker,
    assign_targets,
    assignment_cost,
    batch_class_centers,
    update_centers,
)
from .datagen import LongTailDataset
from .encoder import SGD, LinearClassifier, Mlp, cosine_lr, train_classifier
from .errors import ContractError, NotReadyError, ValidationError
from .losses import FeatureBatch, LossConfig, kcl_loss, tsc_loss
from .metrics import MetricsReport, metrics_report, neighborhood_uniformity, uniformity
from .targets import TargetSet

log = logging.getLogger(__name__)

METHODS = ("kcl", "tsc", "tsc-random")


@dataclass
class TrainConfig:
    method: str = "tsc"
    epochs: int = 200
    warmup_frac: float = 0.5
    batch_size: int = 128
    loss: LossConfig = field(default_factory=LossConfig)
    lr: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 5e-4
    hidden: tuple[int, ...] = (64, 64)
    dim: int = 128
    # augmentation noise, as a fraction of the dataset's cluster noise
    aug_scale: float = 0.1
    seed: int = 0
    log_every: int = 10
    ema_old_weight: float = 0.9
    renormalize_centers: bool = True

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValidationError(f"method must be one of {METHODS}, got {self.method!r}")
        if not 0 <= self.warmup_frac <= 1:
            raise ValidationError("warmup_frac must lie in [0, 1]")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValidationError("epochs and batch_size must be >= 1")
        if isinstance(self.loss, dict):
            self.loss = LossConfig(**self.loss)
        self.hidden = tuple(self.hidden)

    @property
    def uses_targets(self) -> bool:
        return self.method != "kcl"

    @property
    def warmup_epochs(self) -> int:
        return int(round(self.warmup_frac * self.epochs)) if self.uses_targets else self.epochs

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "TrainConfig":
        return cls(**json.loads(text))


@dataclass
class EpochRecord:
    epoch: int
    phase: str
    loss: float
    assignment_cost: float | None = None
    U: float | None = None
    U1: float | None = None


@dataclass
class RunRecord:
    config: TrainConfig
    epochs: list[EpochRecord] = field(default_factory=list)
    assignments: dict[int, Assignment] = field(default_factory=dict)
    final_assignment: Assignment | None = None
    report: MetricsReport | None = None
    accuracy: float | None = None
    test_features: np.ndarray | None = None
    test_labels: np.ndarray | None = None

    @property
    def assignment_costs(self) -> list[float]:
        return [e.assignment_cost for e in self.epochs if e.assignment_cost is not None]

    def history_csv(self) -> str:
        rows = ["epoch,phase,loss,assignment_cost,U,U1"]
        for e in self.epochs:
            vals = [e.loss, e.assignment_cost, e.U, e.U1]
            rows.append(f"{e.epoch},{e.phase}," + ",".join("" if v is None else repr(v) for v in vals))
        return "\n".join(rows) + "\n"


def encoder_widths(dataset: LongTailDataset, cfg: TrainConfig) -> list[int]:
    return [dataset.input_dim, *cfg.hidden, cfg.dim]


def full_pass_centers(net: Mlp, dataset: LongTailDataset) -> dict[int, np.ndarray]:
    return batch_class_centers(net.forward(dataset.x_train), dataset.y_train)


def random_assignment(num_classes: int, seed: int, centers: np.ndarray, targets: np.ndarray) -> Assignment:
    sigma = tuple(int(s) for s in np.random.default_rng([seed, 1]).permutation(num_classes))
    return Assignment(sigma, assignment_cost(centers, targets, sigma))


def train_representation(
    dataset: LongTailDataset, config: TrainConfig, targets: TargetSet | None = None
) -> tuple[Mlp, RunRecord]:
    """Stage one: KCL warm-up, then TSC with online (or fixed random) matching.

    Sampling is instance-balanced throughout.
    """
    cfg = config
    if cfg.uses_targets != (targets is not None):
        raise ContractError(f"method {cfg.method!r} {'needs' if cfg.uses_targets else 'takes no'} targets")
    C = dataset.num_classes
    if targets is not None and (targets.num_classes != C or targets.dim != cfg.dim):
        raise ValidationError(
            f"targets are {targets.num_classes}x{targets.dim}, run needs {C}x{cfg.dim}"
        )

    rng = np.random.default_rng(cfg.seed)
    net = Mlp(encoder_widths(dataset, cfg), seed=cfg.seed)
    opt = SGD(net.params(), cfg.momentum, cfg.weight_decay)
    x, y = dataset.x_train, dataset.y_train
    n = len(y)
    steps_per_epoch = math.ceil(n / cfg.batch_size)
    total_steps = steps_per_epoch * cfg.epochs
    aug = cfg.aug_scale * dataset.noise
    record = RunRecord(cfg)
    tracker = CenterTracker(C, cfg.dim, cfg.ema_old_weight, cfg.renormalize_centers)
    assignment: Assignment | None = None
    step = 0

    for epoch in range(cfg.epochs):
        active = cfg.uses_targets and epoch >= cfg.warmup_epochs
        if active and epoch == cfg.warmup_epochs:
            tracker.reset(full_pass_centers(net, dataset))
            if not tracker.ready:
                raise NotReadyError("some classes were never observed; use a longer warm-up")
            if cfg.method == "tsc":
                assignment = assign_targets(tracker, targets)
            else:
                assignment = random_assignment(C, cfg.seed, tracker.centers, targets.points)
            log.info("epoch %d: matching starts, cost %.4f", epoch, assignment.cost)

        losses = []
        for idx in np.array_split(rng.permutation(n), steps_per_epoch):
            x1 = x[idx] + aug * rng.standard_normal((len(idx), x.shape[1]))
            x2 = x[idx] + aug * rng.standard_normal((len(idx), x.shape[1]))
            v, acts1 = net.forward(x1, return_cache=True)
            vt, acts2 = net.forward(x2, return_cache=True)
            batch = FeatureBatch(v, vt, y[idx], ids=idx)
            if active:
                res = tsc_loss(batch, targets, assignment, cfg.loss, epoch=epoch)
            else:
                res = kcl_loss(batch, cfg.loss, epoch=epoch)
            g1 = net.backward(acts1, res.grad_features)
            g2 = net.backward(acts2, res.grad_augmented)
            opt.step([a + b for a, b in zip(g1, g2)], cosine_lr(cfg.lr, step, total_steps))
            step += 1
            losses.append(res.loss)
            if active:
                update_centers(tracker, batch_class_centers(v, y[idx]))
                if cfg.method == "tsc":
                    assignment = assign_targets(tracker, targets)
                else:
                    assignment = Assignment(
                        assignment.sigma, assignment_cost(tracker.centers, targets.points, assignment.sigma)
                    )

        rec = EpochRecord(epoch, "tsc" if active else "kcl", float(np.mean(losses)))
        if active:
            rec.assignment_cost = assignment.cost
        if epoch % cfg.log_every == 0 or epoch == cfg.epochs - 1:
            # snapshot over the classes present; a missing class is reported at warm-up end
            observed = batch_class_centers(net.forward(x), y)
            if len(observed) >= 2:
                centers = np.stack([observed[c] for c in sorted(observed)])
                rec.U = uniformity(centers)
                rec.U1 = neighborhood_uniformity(centers, 1)
            if active:
                record.assignments[epoch] = assignment
            log.debug("epoch %d loss %.4f U %.4f U1 %.4f", epoch, rec.loss, rec.U, rec.U1)
        record.epochs.append(rec)

    record.final_assignment = assignment
    return net, record


@dataclass
class EvalResult:
    report: MetricsReport
    accuracy: float
    per_class_accuracy: np.ndarray
    classifier: LinearClassifier
    test_features: np.ndarray


def evaluate(
    net: Mlp,
    dataset: LongTailDataset,
    metrics_k: int | None = None,
    *,
    seed: int = 0,
    classifier_steps: int = 200,
) -> EvalResult:
    """Stage two: class-balanced linear probe on frozen features, balanced test accuracy and metrics."""
    C = dataset.num_classes
    f_train = net.forward(dataset.x_train)
    clf = train_classifier(
        f_train, dataset.y_train, "balanced", num_classes=C, steps=classifier_steps, seed=seed
    )
    f_test = net.forward(dataset.x_test)
    pred = clf.predict(f_test)
    correct = pred == dataset.y_test
    per_class = np.array([correct[dataset.y_test == c].mean() for c in range(C)])
    report = metrics_report(
        f_test, dataset.y_test, dataset.hierarchy, dataset.frequency_groups(), metrics_k, per_class
    )
    return EvalResult(report, float(correct.mean()), per_class, clf, f_test)


def run_experiment(
    dataset: LongTailDataset,
    config: TrainConfig,
    targets: TargetSet | None = None,
    metrics_k: int | None = None,
) -> tuple[Mlp, RunRecord]:
    net, record = train_representation(dataset, config, targets)
    res = evaluate(net, dataset, metrics_k, seed=config.seed)
    record.report = res.report
    record.accuracy = res.accuracy
    record.test_features = res.test_features
    record.test_labels = dataset.y_test
    return net, record


def with_loss(config: TrainConfig, **changes) -> TrainConfig:
    return replace(config, loss=replace(config.loss, **changes))


def save_run(
    directory: str | Path,
    net: Mlp,
    record: RunRecord,
    dataset: LongTailDataset,
    targets: TargetSet | None,
) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "config.json").write_text(record.config.to_json())
    net.save(directory / "checkpoint.txt")
    dataset.save(directory / "data")
    if targets is not None:
        targets.save(directory / "targets.txt")
    (directory / "history.csv").write_text(record.history_csv())
    if record.assignments:
        adir = directory / "assignments"
        adir.mkdir(exist_ok=True)
        for epoch, a in record.assignments.items():
            (adir / f"epoch_{epoch:05d}.txt").write_text(a.dump())
    if record.final_assignment is not None:
        (directory / "assignment.txt").write_text(record.final_assignment.dump())
    return directory


def load_run(directory: str | Path):
    directory = Path(directory)
    if not (directory / "checkpoint.txt").exists():
        raise ValidationError(f"{directory} is not a run directory (no checkpoint.txt)")
    cfg = TrainConfig.from_json((directory / "config.json").read_text())
    net = Mlp.load(directory / "checkpoint.txt")
    dataset = LongTailDataset.load(directory / "data")
    targets = TargetSet.load(directory / "targets.txt") if (directory / "targets.txt").exists() else None
    assignment = None
    if (directory / "assignment.txt").exists():
        assignment = Assignment.parse((directory / "assignment.txt").read_text())
    return cfg, net, dataset, targets, assignment
