"""Synthetic domain-shift datasets, CSV I/O and the two-domain batch sampler.

Target labels are kept on the dataset object but hidden behind
:meth:`DomainDataset.unlabeled`: training code receives the unlabeled view,
and only evaluation reads :attr:`DomainDataset.labels`.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .errors import DimensionError, EmptyInputError, LabelError, ParameterError, ParseError
from .numeric import SeededRng, as_matrix

DOMAINS = ("source", "target")


class DomainDataset:
    def __init__(self, x, y=None, domain_tag: str = "source", num_classes: int | None = None):
        if domain_tag not in DOMAINS:
            raise ParameterError(f"domain tag must be one of {DOMAINS}, got {domain_tag!r}")
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2:
            raise DimensionError(f"inputs must be 2-D, got shape {x.shape}")
        self.x = x
        self.domain_tag = domain_tag
        self._y = None
        if y is not None:
            y = np.asarray(y)
            if y.shape != (x.shape[0],):
                raise DimensionError(f"{y.size} labels for {x.shape[0]} rows")
            if y.size and (y.min() < 0 or (num_classes is not None and y.max() >= num_classes)):
                bad = y[(y < 0) | (y >= (num_classes or np.inf))][0]
                raise LabelError(f"label {bad} outside [0, {num_classes})")
            self._y = y.astype(np.int64)
        self.num_classes = num_classes

    def __len__(self) -> int:
        return self.x.shape[0]

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d_in(self) -> int:
        return self.x.shape[1]

    @property
    def has_labels(self) -> bool:
        return self._y is not None

    @property
    def labels(self) -> np.ndarray:
        if self._y is None:
            raise LabelError(f"{self.domain_tag} dataset has no labels")
        return self._y

    def unlabeled(self) -> "DomainDataset":
        """View of the same inputs with labels removed."""
        return DomainDataset(self.x, None, self.domain_tag, self.num_classes)

    def subset(self, idx) -> "DomainDataset":
        idx = np.asarray(idx)
        return DomainDataset(self.x[idx], None if self._y is None else self._y[idx],
                             self.domain_tag, self.num_classes)

    def with_inputs(self, x) -> "DomainDataset":
        return DomainDataset(x, self._y, self.domain_tag, self.num_classes)


def _rotate(points, degrees):
    t = math.radians(degrees)
    r = np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])
    return points @ r.T


def _moons(n, noise_sigma, rng):
    n0 = n // 2
    n1 = n - n0
    t0 = rng.uniform((n0,), 0.0, math.pi)
    t1 = rng.uniform((n1,), 0.0, math.pi)
    upper = np.column_stack([np.cos(t0), np.sin(t0)])
    lower = np.column_stack([1.0 - np.cos(t1), 0.5 - np.sin(t1)])
    x = np.vstack([upper, lower])
    if noise_sigma > 0:
        x = x + rng.normal(x.shape, 0.0, noise_sigma)
    y = np.concatenate([np.zeros(n0, np.int64), np.ones(n1, np.int64)])
    perm = rng.permutation(n)
    return x[perm], y[perm]


def gen_two_moons_shift(n: int, rotation_deg: float, noise_sigma: float, rng: SeededRng):
    """Two interleaving half-circles as source; the target is drawn from the
    same generator and rotated by ``rotation_deg`` about the origin."""
    if n < 2:
        raise ParameterError(f"need at least 2 samples per domain, got {n}")
    if noise_sigma < 0:
        raise ParameterError(f"noise must be >= 0, got {noise_sigma}")
    xs, ys = _moons(n, noise_sigma, rng)
    xt, yt = _moons(n, noise_sigma, rng)
    return (DomainDataset(xs, ys, "source", 2),
            DomainDataset(_rotate(xt, rotation_deg), yt, "target", 2))


def blob_means(K: int, radius: float = 3.0) -> np.ndarray:
    angles = 2.0 * math.pi * np.arange(K) / K
    return radius * np.column_stack([np.cos(angles), np.sin(angles)])


def gen_blob_shift(K: int, n: int, mean_shift, rng: SeededRng, radius: float = 3.0,
                   sigma: float = 1.0):
    """K isotropic Gaussian blobs with means evenly spaced on a circle; the
    target blobs have every mean translated by ``mean_shift``."""
    if K < 2:
        raise ParameterError(f"need at least 2 classes, got {K}")
    if n < K:
        raise ParameterError(f"need at least one sample per class, got n={n} for K={K}")
    shift = np.asarray(mean_shift, dtype=np.float64).reshape(-1)
    if shift.shape != (2,):
        raise DimensionError(f"mean_shift must have 2 components, got {shift.size}")
    means = blob_means(K, radius)

    def draw(offset, tag):
        y = np.arange(n) % K
        y = y[rng.permutation(n)]
        x = means[y] + offset + rng.normal((n, 2), 0.0, sigma)
        return DomainDataset(x, y, tag, K)

    return draw(np.zeros(2), "source"), draw(shift, "target")


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def load_csv(path, has_labels: bool = True, num_classes: int | None = None,
             domain_tag: str = "source") -> DomainDataset:
    """Read a comma-separated numeric table; with ``has_labels`` the last
    column holds nonnegative integer classes. A non-numeric first row is
    treated as a header."""
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = [r for r in csv.reader(fh)]
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc.strerror}") from exc
    rows = [(i + 1, r) for i, r in enumerate(rows) if any(c.strip() for c in r)]
    if rows and not all(_is_number(c) for c in rows[0][1]):
        rows = rows[1:]
    if not rows:
        raise ParseError(f"{path} contains no data rows")
    width = len(rows[0][1])
    if has_labels and width < 2:
        raise ParseError("labeled files need at least one feature and a label column",
                         row=rows[0][0])
    data = []
    for lineno, r in rows:
        if len(r) != width:
            raise ParseError(f"expected {width} columns, got {len(r)}", row=lineno)
        try:
            data.append([float(c) for c in r])
        except ValueError:
            raise ParseError(f"non-numeric cell in {r!r}", row=lineno) from None
    table = np.array(data, dtype=np.float64)
    if not has_labels:
        return DomainDataset(table, None, domain_tag, num_classes)
    labels = table[:, -1]
    bad = np.nonzero((labels < 0) | (labels != np.round(labels)))[0]
    if bad.size:
        raise LabelError(f"row {rows[bad[0]][0]}: label {labels[bad[0]]} is not a nonnegative integer")
    return DomainDataset(table[:, :-1], labels.astype(np.int64), domain_tag, num_classes)


def save_csv(path, dataset: DomainDataset, include_labels: bool = True) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with tmp.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        header = [f"x{i}" for i in range(dataset.d_in)]
        labeled = include_labels and dataset.has_labels
        w.writerow(header + (["label"] if labeled else []))
        for i in range(dataset.n):
            row = [repr(float(v)) for v in dataset.x[i]]
            if labeled:
                row.append(str(int(dataset.labels[i])))
            w.writerow(row)
    tmp.replace(path)


class Standardizer:
    """Per-feature affine standardization fitted on source inputs only."""

    def __init__(self, mean, scale):
        self.mean = np.asarray(mean, dtype=np.float64).reshape(-1)
        self.scale = np.asarray(scale, dtype=np.float64).reshape(-1)

    @classmethod
    def fit(cls, x) -> "Standardizer":
        x = as_matrix(x)
        std = x.std(axis=0)
        return cls(x.mean(axis=0), np.where(std > 0, std, 1.0))

    def __call__(self, x) -> np.ndarray:
        return (as_matrix(x) - self.mean) / self.scale


class BatchSampler:
    """Emits ``m/2`` source and ``m/2`` target rows per batch, drawing
    without replacement inside each domain's epoch and reshuffling when an
    epoch cannot fill the next batch."""

    def __init__(self, m: int, rng: SeededRng):
        if m < 2 or m % 2:
            raise ParameterError(f"batch size must be even and >= 2, got {m}")
        self.m = int(m)
        self.half = self.m // 2
        self.rng = rng
        self._perm = {}
        self._pos = {}

    def _take(self, key, n):
        if self.half > n:
            raise ParameterError(f"half batch of {self.half} exceeds {key} dataset size {n}")
        perm = self._perm.get(key)
        pos = self._pos.get(key, 0)
        if perm is None or pos + self.half > n:
            perm = self._perm[key] = self.rng.permutation(n)
            pos = 0
        self._pos[key] = pos + self.half
        return perm[pos:pos + self.half]

    def next_batch(self, source: DomainDataset, target: DomainDataset):
        if source.n == 0 or target.n == 0:
            raise EmptyInputError("both datasets must be nonempty")
        i_s = self._take("source", source.n)
        i_t = self._take("target", target.n)
        return source.x[i_s], source.labels[i_s], target.x[i_t]


def next_batch(sampler: BatchSampler, source: DomainDataset, target: DomainDataset):
    return sampler.next_batch(source, target)
