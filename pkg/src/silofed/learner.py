"""Toy classification workload: synthetic data, partitioning, local SGD.

The model is multinomial logistic regression — a single (C x (d+1)) layer
with the bias handled as an appended constant-1 feature — so training has
an exact gradient and rounds complete in milliseconds while still
exercising every orchestration path.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from silofed import kernels
from silofed.weights import ShapeMismatchError, WeightVector

DATASET_MAGIC = b"UFD1"


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    lr: float
    batch_size: int
    seed: int

    def __post_init__(self):
        if self.epochs < 1 or self.lr < 0 or self.batch_size < 1 or self.seed < 0:
            raise ValueError(f"invalid training config: {self}")


@dataclass(frozen=True)
class PartitionSpec:
    kind: str  # "iid" | "dirichlet"
    alpha: float = 0.5

    def __post_init__(self):
        if self.kind not in ("iid", "dirichlet"):
            raise ValueError(f"unknown partition kind {self.kind!r}")
        if self.kind == "dirichlet" and not self.alpha > 0:
            raise ValueError("dirichlet alpha must be positive")


class Dataset:
    """Feature matrix plus integer labels in [0, n_classes)."""

    __slots__ = ("features", "labels", "n_classes")

    def __init__(self, features, labels, n_classes):
        features = np.ascontiguousarray(features, dtype=np.float64)
        labels = np.ascontiguousarray(labels, dtype=np.int64)
        if features.ndim != 2 or features.shape[0] < 1:
            raise ValueError("features must be a non-empty (n, d) matrix")
        if labels.shape != (features.shape[0],):
            raise ValueError("labels must align with feature rows")
        if not np.isfinite(features).all():
            raise ValueError("features must be finite")
        if labels.min() < 0 or labels.max() >= n_classes:
            raise ValueError(f"labels must lie in [0, {n_classes})")
        self.features = features
        self.labels = labels
        self.n_classes = int(n_classes)

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def dim(self):
        return self.features.shape[1]

    def subset(self, idx):
        return Dataset(self.features[idx], self.labels[idx], self.n_classes)

    def save(self, path):
        """Columnar binary: magic, n/d/C uint32 LE, features f64, labels i64."""
        with open(path, "wb") as fh:
            fh.write(DATASET_MAGIC)
            fh.write(struct.pack("<III", self.n, self.dim, self.n_classes))
            fh.write(self.features.astype("<f8").tobytes())
            fh.write(self.labels.astype("<i8").tobytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            raw = fh.read()
        if raw[:4] != DATASET_MAGIC:
            raise ValueError("not a dataset file (bad magic)")
        n, d, c = struct.unpack_from("<III", raw, 4)
        off = 16
        feats = np.frombuffer(raw, dtype="<f8", count=n * d, offset=off)
        off += 8 * n * d
        labels = np.frombuffer(raw, dtype="<i8", count=n, offset=off)
        return cls(feats.reshape(n, d).copy(), labels.copy(), c)


def model_shape(dataset_dim: int, n_classes: int):
    """Layer shape of the logistic-regression model for a (d, C) task."""
    return [(n_classes, dataset_dim + 1)]


def make_synthetic(n_classes, dim, samples, seed) -> Dataset:
    """Gaussian-mixture data: one unit-variance blob per class.

    Class means are random directions scaled to a sphere of radius 3;
    labels are balanced up to rounding and rows are shuffled. Fully
    deterministic per seed.
    """
    if n_classes < 2 or dim < 1 or samples < n_classes:
        raise ValueError(
            f"need n_classes >= 2, dim >= 1, samples >= n_classes; got "
            f"({n_classes}, {dim}, {samples})")
    rng = np.random.default_rng(seed)
    directions = rng.normal(size=(n_classes, dim))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    means = 3.0 * directions

    base, extra = divmod(samples, n_classes)
    counts = [base + (1 if k < extra else 0) for k in range(n_classes)]
    labels = np.repeat(np.arange(n_classes, dtype=np.int64), counts)
    features = means[labels] + rng.normal(size=(samples, dim))
    perm = rng.permutation(samples)
    return Dataset(features[perm], labels[perm], n_classes)


def _dirichlet_assignment(labels, parts, alpha, rng):
    """One draw of per-class Dirichlet proportions -> per-part index lists."""
    out = [[] for _ in range(parts)]
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        idx = idx[rng.permutation(len(idx))]
        props = rng.dirichlet([alpha] * parts)
        take = np.floor(props * len(idx)).astype(int)
        # largest remainders absorb the rounding shortfall
        frac = props * len(idx) - take
        for k in np.argsort(-frac)[: len(idx) - take.sum()]:
            take[k] += 1
        start = 0
        for p in range(parts):
            out[p].extend(idx[start:start + take[p]].tolist())
            start += take[p]
    return out


def partition(ds: Dataset, parts: int, spec: PartitionSpec, seed) -> list:
    """Disjoint cover of `ds` into `parts` non-empty datasets.

    IID: a uniform shuffle split into near-equal parts. Dirichlet: per
    class, proportions over parts drawn from Dirichlet(alpha, ..., alpha).
    Empty parts are retried a bounded number of times, then repaired by
    moving single samples round-robin from the largest parts.
    """
    if parts < 1:
        raise ValueError("parts must be >= 1")
    if parts > ds.n:
        raise ValueError(f"cannot split {ds.n} samples into {parts} parts")
    rng = np.random.default_rng(seed)
    if spec.kind == "iid":
        groups = [g.tolist() for g in np.array_split(rng.permutation(ds.n), parts)]
    else:
        for _ in range(50):
            groups = _dirichlet_assignment(ds.labels, parts, spec.alpha, rng)
            if all(groups):
                break
        while not all(groups):
            donor = max(range(parts), key=lambda p: len(groups[p]))
            needy = next(p for p in range(parts) if not groups[p])
            groups[needy].append(groups[donor].pop())
    return [ds.subset(np.array(sorted(g), dtype=np.int64)) for g in groups]


def holdout(ds: Dataset, test_size, seed, stratified=False):
    """Split off a test set; returns (rest, held_out).

    test_size: sample count, or a fraction of n when < 1. Stratified mode
    draws the test split per class (largest-remainder rounding) so its
    label mix matches the source.
    """
    n_test = int(round(ds.n * test_size)) if 0 < test_size < 1 else int(test_size)
    if not 0 < n_test < ds.n:
        raise ValueError(f"test size {n_test} out of range for n={ds.n}")
    rng = np.random.default_rng(seed)
    if not stratified:
        perm = rng.permutation(ds.n)
        test_idx, rest_idx = perm[:n_test], perm[n_test:]
    else:
        test_parts = []
        share = n_test / ds.n
        for cls in np.unique(ds.labels):
            idx = np.flatnonzero(ds.labels == cls)
            idx = idx[rng.permutation(len(idx))]
            test_parts.append(idx[: int(round(share * len(idx)))])
        test_idx = np.concatenate(test_parts)
        mask = np.ones(ds.n, dtype=bool)
        mask[test_idx] = False
        rest_idx = np.flatnonzero(mask)
    return ds.subset(np.sort(rest_idx)), ds.subset(np.sort(test_idx))


def _with_bias(features):
    return np.hstack([features, np.ones((features.shape[0], 1))])


def _check_shape(w: WeightVector, ds: Dataset):
    if w.shape != model_shape(ds.dim, ds.n_classes):
        raise ShapeMismatchError(
            f"model shape {w.shape} does not fit (d={ds.dim}, C={ds.n_classes})")


def local_train(w: WeightVector, ds: Dataset, cfg: TrainConfig) -> WeightVector:
    """Minibatch SGD on softmax cross-entropy; deterministic per (w, ds, cfg)."""
    _check_shape(w, ds)
    rng = np.random.default_rng(cfg.seed)
    order = np.stack([rng.permutation(ds.n) for _ in range(cfg.epochs)])
    mat = kernels.sgd_epochs(
        w.layers()[0], _with_bias(ds.features), ds.labels,
        order.astype(np.int64), cfg.lr, cfg.batch_size)
    return WeightVector.from_layers([mat])


def evaluate(w: WeightVector, ds: Dataset):
    """(accuracy, mean cross-entropy loss) on `ds`; pure."""
    _check_shape(w, ds)
    return kernels.softmax_eval(w.layers()[0], _with_bias(ds.features), ds.labels)


def mean_loss_gradient(w: WeightVector, ds: Dataset) -> WeightVector:
    """Analytic gradient of the mean loss; checked against finite differences."""
    _check_shape(w, ds)
    grad = kernels.softmax_grad(w.layers()[0], _with_bias(ds.features), ds.labels)
    return WeightVector.from_layers([grad])
