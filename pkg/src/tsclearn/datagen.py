"""Synthetic long-tailed data with a known class hierarchy."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._sphere import normalize_rows
from .errors import ValidationError


def longtail_counts(n_max: int, rho: float, C: int) -> list[int]:
    """Per-class counts n_i = round(n_max * rho^(-i/(C-1)))."""
    if n_max < 1 or C < 2 or rho < 1:
        raise ValidationError("longtail_counts needs n_max >= 1, C >= 2 and rho >= 1")
    counts = [int(round(n_max * rho ** (-i / (C - 1)))) for i in range(C)]
    if min(counts) < 1:
        raise ValidationError(f"rho={rho} with n_max={n_max} leaves a class with zero samples")
    return counts


@dataclass(frozen=True)
class HierarchyTree:
    """Rooted tree with unit edges; nodes 0..C-1 are the class leaves.

    ``parent[n]`` is the parent id of node n, -1 for the root.
    """

    parent: tuple[int, ...]
    num_classes: int

    def __post_init__(self):
        n = len(self.parent)
        roots = [i for i, p in enumerate(self.parent) if p == -1]
        if len(roots) != 1:
            raise ValidationError(f"hierarchy must have exactly one root, found {len(roots)}")
        children = {p for p in self.parent if p >= 0}
        for c in range(self.num_classes):
            if c >= n or c in children:
                raise ValidationError(f"class {c} is not a leaf of the hierarchy")
        for i in range(n):
            seen, node = set(), i
            while node != -1:
                if node in seen or not -1 <= self.parent[node] < n:
                    raise ValidationError("hierarchy has a cycle or a dangling parent")
                seen.add(node)
                node = self.parent[node]

    @property
    def root(self) -> int:
        return self.parent.index(-1)

    def depth(self, node: int) -> int:
        d = 0
        while self.parent[node] != -1:
            node = self.parent[node]
            d += 1
        return d

    def ancestors(self, node: int) -> list[int]:
        path = [node]
        while self.parent[node] != -1:
            node = self.parent[node]
            path.append(node)
        return path

    def children(self, node: int) -> list[int]:
        return [i for i, p in enumerate(self.parent) if p == node]

    def save(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            for i, p in enumerate(self.parent):
                fh.write(f"{i} {p}\n")

    @classmethod
    def load(cls, path: str | Path, num_classes: int) -> "HierarchyTree":
        pairs = [tuple(map(int, ln.split())) for ln in open(path) if ln.strip()]
        parent = dict(pairs)
        return cls(tuple(parent[i] for i in range(len(parent))), num_classes)


def generate_hierarchy(C: int, branching: int = 2, seed: int = 0) -> HierarchyTree:
    """Balanced tree over the classes, which are shuffled onto the leaves."""
    if C < 2 or branching < 2:
        raise ValidationError("generate_hierarchy needs C >= 2 and branching >= 2")
    rng = np.random.default_rng(seed)
    parent: list[int] = [-1] * C
    level = [int(c) for c in rng.permutation(C)]
    while len(level) > 1:
        nxt = []
        for start in range(0, len(level), branching):
            group = level[start : start + branching]
            if len(group) == 1:
                nxt.append(group[0])
                continue
            node = len(parent)
            parent.append(-1)
            for g in group:
                parent[g] = node
            nxt.append(node)
        level = nxt
    return HierarchyTree(tuple(parent), C)


def hierarchy_distance(tree: HierarchyTree, a: int, b: int) -> int:
    """Number of edges on the path between two class leaves."""
    for c in (a, b):
        if not 0 <= c < tree.num_classes:
            raise ValidationError(f"unknown class id {c}")
    up_a = tree.ancestors(a)
    depth_in_a = {node: i for i, node in enumerate(up_a)}
    for j, node in enumerate(tree.ancestors(b)):
        if node in depth_in_a:
            return depth_in_a[node] + j
    raise ValidationError("classes do not share a root")  # unreachable for a valid tree


def distance_matrix(tree: HierarchyTree) -> np.ndarray:
    C = tree.num_classes
    out = np.zeros((C, C), dtype=int)
    for a in range(C):
        for b in range(a + 1, C):
            out[a, b] = out[b, a] = hierarchy_distance(tree, a, b)
    return out


@dataclass
class LongTailDataset:
    x_train: np.ndarray
    y_train: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray
    counts: list[int]
    prototypes: np.ndarray
    hierarchy: HierarchyTree
    rho: float
    noise: float
    seed: int

    @property
    def num_classes(self) -> int:
        return len(self.counts)

    @property
    def input_dim(self) -> int:
        return self.x_train.shape[1]

    def frequency_groups(self) -> dict[str, np.ndarray]:
        """Classes split into thirds by training count: many / medium / few."""
        order = np.argsort(-np.asarray(self.counts), kind="stable")
        many, medium, few = np.array_split(order, 3)
        return {"many": many, "medium": medium, "few": few, "all": np.arange(self.num_classes)}

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for name, x, y in (("train", self.x_train, self.y_train), ("test", self.x_test, self.y_test)):
            with open(directory / f"{name}.txt", "w") as fh:
                fh.write(
                    f"C={self.num_classes} d_in={self.input_dim} rho={self.rho!r} "
                    f"seed={self.seed} noise={self.noise!r}\n"
                )
                for label, row in zip(y, x):
                    fh.write(f"{label} " + " ".join(f"{v:.17g}" for v in row) + "\n")
        with open(directory / "prototypes.txt", "w") as fh:
            for row in self.prototypes:
                fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")
        self.hierarchy.save(directory / "hierarchy.txt")

    @classmethod
    def load(cls, directory: str | Path) -> "LongTailDataset":
        directory = Path(directory)
        parts = {}
        for name in ("train", "test"):
            with open(directory / f"{name}.txt") as fh:
                meta = dict(tok.split("=", 1) for tok in fh.readline().split())
                table = np.loadtxt(fh, ndmin=2)
            parts[name] = (table[:, 1:], table[:, 0].astype(int))
        C = int(meta["C"])
        counts = np.bincount(parts["train"][1], minlength=C).tolist()
        return cls(
            parts["train"][0], parts["train"][1], parts["test"][0], parts["test"][1],
            counts, np.loadtxt(directory / "prototypes.txt", ndmin=2),
            HierarchyTree.load(directory / "hierarchy.txt", C),
            float(meta["rho"]), float(meta["noise"]), int(meta["seed"]),
        )


def hierarchical_prototypes(tree: HierarchyTree, d_in: int, rng: np.random.Generator, spread: float = 1.0) -> np.ndarray:
    """Random walk down the tree; the perturbation halves at every level."""
    protos = {tree.root: normalize_rows(rng.standard_normal((1, d_in)))[0]}
    frontier = [tree.root]
    while frontier:
        node = frontier.pop(0)
        for child in tree.children(node):
            depth = tree.depth(child)
            step = normalize_rows(rng.standard_normal((1, d_in)))[0] * spread * 0.5 ** (depth - 1)
            protos[child] = normalize_rows((protos[node] + step)[None])[0]
            frontier.append(child)
    return np.stack([protos[c] for c in range(tree.num_classes)])


def generate_dataset(
    C: int,
    d_in: int,
    counts,
    hierarchy: HierarchyTree,
    noise: float,
    seed: int = 0,
    *,
    n_test: int = 50,
    spread: float = 1.0,
) -> LongTailDataset:
    """Samples are normalize(prototype + noise * N(0, I)); the test split is balanced."""
    counts = [int(c) for c in counts]
    if len(counts) != C or hierarchy.num_classes != C:
        raise ValidationError("counts and hierarchy must both cover C classes")
    if min(counts) < 1:
        raise ValidationError("every class needs at least one training sample")
    rng = np.random.default_rng(seed)
    protos = hierarchical_prototypes(hierarchy, d_in, rng, spread)

    def draw(per_class):
        y = np.repeat(np.arange(C), per_class)
        x = protos[y] + noise * rng.standard_normal((len(y), d_in))
        return normalize_rows(x), y

    x_tr, y_tr = draw(counts)
    x_te, y_te = draw([n_test] * C)
    rho = max(counts) / min(counts)
    return LongTailDataset(x_tr, y_tr, x_te, y_te, counts, protos, hierarchy, rho, noise, seed)


def step_counts(n_max: int, rho: float, C: int) -> list[int]:
    """One head class with n_max samples, every other class with round(n_max / rho)."""
    if n_max < 1 or C < 2 or rho < 1:
        raise ValidationError("step_counts needs n_max >= 1, C >= 2 and rho >= 1")
    tail = int(round(n_max / rho))
    if tail < 1:
        raise ValidationError(f"rho={rho} with n_max={n_max} leaves a class with zero samples")
    return [n_max] + [tail] * (C - 1)


PROFILES = {"exp": longtail_counts, "step": step_counts}


def toy_dataset(
    C: int,
    rho: float,
    seed: int = 0,
    *,
    profile: str = "exp",
    n_max: int = 500,
    d_in: int = 16,
    noise: float = 0.1,
    branching: int = 2,
    n_test: int = 50,
) -> LongTailDataset:
    """Default synthetic protocol: binary hierarchy, long-tailed training counts, balanced test split.

    ``profile`` is "exp" for exponential decay or "step" for one head class
    and equally rare tails (e.g. 100:1:1).
    """
    if profile not in PROFILES:
        raise ValidationError(f"unknown count profile {profile!r}; choose from {sorted(PROFILES)}")
    tree = generate_hierarchy(C, branching, seed)
    counts = PROFILES[profile](n_max, rho, C)
    return generate_dataset(C, d_in, counts, tree, noise, seed, n_test=n_test)
