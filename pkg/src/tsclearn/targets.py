"""Class targets: maximally uniform unit vectors on the hypersphere.

The energy minimized is the log-sum-exp uniformity energy

    L_u(t) = 1/C * sum_i log sum_j exp(t_i . t_j / tau)

where the inner sum includes the self term j = i.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import logsumexp, softmax

from ._sphere import check_unit, normalize_rows
from .errors import OptimizationError, ValidationError

log = logging.getLogger(__name__)

DEFAULT_TAU = 0.07


@dataclass(frozen=True)
class TargetGenConfig:
    learning_rate: float = 0.1
    iterations: int = 10_000
    seed: int = 0
    temperature: float = DEFAULT_TAU

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValidationError("learning_rate must be positive")
        if self.iterations < 1:
            raise ValidationError("iterations must be >= 1")
        if not self.temperature > 0:
            raise ValidationError("temperature must be positive")


@dataclass(frozen=True)
class TargetSet:
    points: np.ndarray
    temperature: float
    final_energy: float
    seed: int = 0
    initial_energy: float = field(default=float("nan"), compare=False)

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        check_unit(pts, "targets", tol=1e-9)
        if pts.shape[0] < 2 or pts.shape[1] < 2:
            raise ValidationError("a target set needs C >= 2 and d >= 2")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def num_classes(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def save(self, path: str | Path) -> None:
        header = (
            f"C={self.num_classes} d={self.dim} tau={self.temperature!r} "
            f"seed={self.seed} energy={self.final_energy!r}"
        )
        with open(path, "w") as fh:
            fh.write(header + "\n")
            for row in self.points:
                fh.write(" ".join(f"{x:.17g}" for x in row) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "TargetSet":
        with open(path) as fh:
            header = fh.readline().split()
            rows = [line.split() for line in fh if line.strip()]
        try:
            meta = dict(tok.split("=", 1) for tok in header)
            C, d = int(meta["C"]), int(meta["d"])
            points = np.array(rows, dtype=float)
        except (KeyError, ValueError) as exc:
            raise ValidationError(f"malformed target file {path}: {exc}") from exc
        if points.shape != (C, d):
            raise ValidationError(f"target file declares {C}x{d} but holds {points.shape}")
        return cls(points, float(meta["tau"]), float(meta["energy"]), int(meta["seed"]))


def uniformity_energy(points, tau: float) -> float:
    pts = check_unit(points)
    if not tau > 0:
        raise ValidationError("tau must be positive")
    return float(logsumexp(pts @ pts.T / tau, axis=1).mean())


def uniformity_energy_grad(points: np.ndarray, tau: float) -> np.ndarray:
    """Euclidean gradient of L_u with respect to every point."""
    pts = np.asarray(points, dtype=float)
    p = softmax(pts @ pts.T / tau, axis=1)
    return (p + p.T) @ pts / (len(pts) * tau)


def simplex_energy(C: int, tau: float) -> float:
    """L_u of a regular simplex: every off-diagonal inner product is -1/(C-1)."""
    return math.log(math.exp(1 / tau) + (C - 1) * math.exp(-1 / ((C - 1) * tau)))


def regular_simplex(C: int, d: int) -> np.ndarray:
    """Explicit regular simplex of C unit vectors in R^d (needs C <= d + 1)."""
    if C > d + 1:
        raise ValidationError(f"a regular simplex of {C} points needs d >= {C - 1}")
    # centered standard basis of R^C lives in a (C-1)-dim subspace
    e = np.eye(C) - 1.0 / C
    q, _ = np.linalg.qr(e.T)
    coords = e @ q[:, : C - 1]
    out = np.zeros((C, d))
    out[:, : C - 1] = coords
    return normalize_rows(out)


def _separate_coincident(pts: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    # gradient between coincident points has no component along their separation
    gram = pts @ pts.T
    np.fill_diagonal(gram, -np.inf)
    while np.any(gram > 1 - 1e-12):
        i = int(np.argmax(gram.max(axis=1)))
        pts[i] = pts[i] + 1e-6 * rng.standard_normal(pts.shape[1])
        pts[i] /= np.linalg.norm(pts[i])
        gram = pts @ pts.T
        np.fill_diagonal(gram, -np.inf)
    return pts


def generate_targets(
    C: int, d: int, config: TargetGenConfig | None = None, *, initial: np.ndarray | None = None
) -> TargetSet:
    """Minimize L_u over C points on S^{d-1} by projected gradient descent.

    Each step moves along the tangent-space gradient, scaled so the point
    with the largest gradient moves by the current step length; the step
    length follows a cosine decay from ``learning_rate`` to zero. Points are
    renormalized after every step. The normalization matters: at tau=0.07
    the raw gradient carries a factor of about exp(-1/tau) and a fixed step
    never gets anywhere.
    """
    cfg = config or TargetGenConfig()
    if C < 2 or d < 2:
        raise ValidationError("generate_targets needs C >= 2 and d >= 2")
    tau = cfg.temperature
    rng = np.random.default_rng(cfg.seed)
    if initial is None:
        pts = normalize_rows(rng.standard_normal((C, d)))
    else:
        pts = normalize_rows(np.array(initial, dtype=float))
        if pts.shape != (C, d):
            raise ValidationError(f"initial points have shape {pts.shape}, expected {(C, d)}")
    pts = _separate_coincident(pts, rng)
    e0 = uniformity_energy(pts, tau)

    for it in range(cfg.iterations):
        g = uniformity_energy_grad(pts, tau)
        g -= np.sum(g * pts, axis=1, keepdims=True) * pts
        if not np.all(np.isfinite(g)):
            raise OptimizationError(f"target generation diverged at iteration {it}")
        gmax = np.linalg.norm(g, axis=1).max()
        if gmax == 0.0:
            break
        step = cfg.learning_rate * 0.5 * (1 + math.cos(math.pi * it / cfg.iterations))
        pts = pts - (step / gmax) * g
        pts /= np.linalg.norm(pts, axis=1, keepdims=True)

    energy = uniformity_energy(pts, tau)
    if not math.isfinite(energy):
        raise OptimizationError(f"target energy is non-finite after iteration {cfg.iterations}")
    log.debug("targets C=%d d=%d: energy %.9f -> %.9f", C, d, e0, energy)
    return TargetSet(pts, tau, energy, cfg.seed, initial_energy=e0)


@dataclass(frozen=True)
class SimplexReport:
    applicable: bool
    ok: bool
    max_deviation: float = float("nan")
    centroid_norm: float = float("nan")
    reason: str = ""


def certify_simplex(ts: TargetSet, tol: float = 1e-3) -> SimplexReport:
    """Check that targets form a regular simplex.

    Passes when every pairwise inner product is within ``tol`` of -1/(C-1)
    and the norm of the vector sum is at most ``C * tol``.
    """
    pts = np.asarray(ts.points)
    C, d = pts.shape
    if C > d + 1:
        return SimplexReport(False, False, reason=f"no regular simplex of {C} points in d={d}")
    gram = pts @ pts.T
    off = gram[~np.eye(C, dtype=bool)]
    dev = float(np.abs(off + 1.0 / (C - 1)).max())
    cnorm = float(np.linalg.norm(pts.sum(axis=0)))
    return SimplexReport(True, dev <= tol and cnorm <= C * tol, dev, cnorm)
