"""Small numpy MLP encoder with hand-written backprop, and a linear probe."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import softmax

from .errors import DegenerateError, ValidationError


class Mlp:
    """ReLU MLP whose output layer is linear followed by L2 normalization."""

    def __init__(self, widths, seed: int = 0):
        widths = [int(w) for w in widths]
        if len(widths) < 2 or min(widths) < 1:
            raise ValidationError(f"invalid layer widths {widths}")
        self.widths = widths
        self.seed = seed
        rng = np.random.default_rng(seed)
        self.weights = [
            rng.standard_normal((a, b)) * np.sqrt(2.0 / a) for a, b in zip(widths[:-1], widths[1:])
        ]
        self.biases = [np.zeros(b) for b in widths[1:]]

    @property
    def out_dim(self) -> int:
        return self.widths[-1]

    @property
    def num_params(self) -> int:
        return sum((a + 1) * b for a, b in zip(self.widths[:-1], self.widths[1:]))

    def params(self) -> list[np.ndarray]:
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def forward(self, x, return_cache: bool = False):
        x = np.asarray(x, dtype=float)
        if x.ndim != 2 or x.shape[1] != self.widths[0]:
            raise ValidationError(f"input width {x.shape[-1]} does not match {self.widths[0]}")
        acts = [x]
        h = x
        last = len(self.weights) - 1
        for li, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if li < last:
                h = np.maximum(h, 0.0)
            acts.append(h)
        norms = np.linalg.norm(h, axis=1, keepdims=True)
        if np.any(norms < 1e-12):
            raise DegenerateError("encoder output has zero length; cannot normalize")
        out = h / norms
        if return_cache:
            return out, acts
        return out

    def backward(self, acts: list[np.ndarray], grad_out: np.ndarray) -> list[np.ndarray]:
        """Gradients of every parameter, ordered like :meth:`params`."""
        u = acts[-1]
        norms = np.linalg.norm(u, axis=1, keepdims=True)
        v = u / norms
        g = (grad_out - np.sum(grad_out * v, axis=1, keepdims=True) * v) / norms
        grads = []
        for li in range(len(self.weights) - 1, -1, -1):
            grads.append(g.sum(axis=0))
            grads.append(acts[li].T @ g)
            if li > 0:
                g = (g @ self.weights[li].T) * (acts[li] > 0)
        return grads[::-1]

    def save(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            fh.write(f"widths={','.join(map(str, self.widths))} seed={self.seed}\n")
            for w, b in zip(self.weights, self.biases):
                fh.write(f"W {w.shape[0]} {w.shape[1]}\n")
                for row in w:
                    fh.write(" ".join(f"{x:.17g}" for x in row) + "\n")
                fh.write(f"b {b.shape[0]}\n")
                fh.write(" ".join(f"{x:.17g}" for x in b) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "Mlp":
        with open(path) as fh:
            lines = [ln.split() for ln in fh if ln.strip()]
        meta = dict(tok.split("=", 1) for tok in lines[0])
        net = cls([int(w) for w in meta["widths"].split(",")], int(meta["seed"]))
        pos = 1
        for li in range(len(net.weights)):
            _, r, c = lines[pos]
            net.weights[li] = np.array(lines[pos + 1 : pos + 1 + int(r)], dtype=float).reshape(int(r), int(c))
            pos += 1 + int(r)
            net.biases[li] = np.array(lines[pos + 1], dtype=float)
            pos += 2
        return net


def forward(net: Mlp, inputs) -> np.ndarray:
    return net.forward(inputs)


def backward(net: Mlp, acts: list[np.ndarray], grad_features: np.ndarray) -> list[np.ndarray]:
    return net.backward(acts, grad_features)


class SGD:
    """SGD with heavy-ball momentum and optional L2 weight decay.

    The caller supplies the learning rate per step.
    """

    def __init__(self, params: list[np.ndarray], momentum: float = 0.9, weight_decay: float = 0.0):
        self.params = params
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.buf = [np.zeros_like(p) for p in params]

    def step(self, grads: list[np.ndarray], lr: float) -> None:
        for p, g, b in zip(self.params, grads, self.buf):
            b *= self.momentum
            b += g
            if self.weight_decay:
                b += self.weight_decay * p
            p -= lr * b


def cosine_lr(base: float, step: int, total: int) -> float:
    return 0.5 * base * (1 + np.cos(np.pi * step / max(total, 1)))


@dataclass
class LinearClassifier:
    weight: np.ndarray  # (C, d)
    bias: np.ndarray  # (C,)

    def logits(self, features) -> np.ndarray:
        return np.asarray(features) @ self.weight.T + self.bias

    def predict(self, features) -> np.ndarray:
        return np.argmax(self.logits(features), axis=1)


def classify(clf: LinearClassifier, features) -> np.ndarray:
    return clf.predict(features)


def balanced_draw(labels: np.ndarray, n: int, rng: np.random.Generator, num_classes: int | None = None) -> np.ndarray:
    """Indices drawn by picking a class uniformly, then a sample within it."""
    labels = np.asarray(labels)
    C = num_classes if num_classes is not None else int(labels.max()) + 1
    members = [np.flatnonzero(labels == c) for c in range(C)]
    empty = [c for c, m in enumerate(members) if len(m) == 0]
    if empty:
        raise ValidationError(f"classes {empty} have no samples; balanced sampling impossible")
    cls = rng.integers(C, size=n)
    pick = rng.random(n)
    return np.array([members[c][int(p * len(members[c]))] for c, p in zip(cls, pick)], dtype=int)


def train_classifier(
    features,
    labels,
    sampling: str = "balanced",
    *,
    num_classes: int | None = None,
    steps: int = 200,
    batch_size: int = 128,
    lr: float = 1.0,
    momentum: float = 0.9,
    seed: int = 0,
) -> LinearClassifier:
    """Multinomial logistic regression trained by minibatch SGD on cross-entropy.

    The learning rate follows the same cosine decay as the encoder.
    """
    x = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=int)
    if sampling not in ("balanced", "instance"):
        raise ValidationError(f"unknown sampling scheme {sampling!r}")
    C = num_classes if num_classes is not None else int(y.max()) + 1
    rng = np.random.default_rng(seed)
    clf = LinearClassifier(np.zeros((C, x.shape[1])), np.zeros(C))
    opt = SGD([clf.weight, clf.bias], momentum)
    for step in range(steps):
        if sampling == "balanced":
            idx = balanced_draw(y, batch_size, rng, C)
        else:
            idx = rng.integers(len(y), size=batch_size)
        xb, yb = x[idx], y[idx]
        p = softmax(clf.logits(xb), axis=1)
        p[np.arange(len(yb)), yb] -= 1.0
        p /= len(yb)
        opt.step([p.T @ xb, p.sum(axis=0)], cosine_lr(lr, step, steps))
    return clf
