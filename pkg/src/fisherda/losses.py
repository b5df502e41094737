"""Task loss, Fisher losses over trainable class centers, and the entropy
regularizer, each returning its value together with analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateCentersError,
    LabelError,
    NormalizationError,
    ParameterError,
    DimensionError,
)
from .numeric import SeededRng, as_matrix

TRACE_EPS = 1e-8


class Centers:
    """Trainable class centers, one row per class."""

    def __init__(self, per_class):
        per_class = as_matrix(per_class)
        if per_class.shape[0] < 2 or per_class.shape[1] < 1:
            raise ParameterError(f"need K >= 2 centers of width >= 1, got {per_class.shape}")
        self.per_class = per_class.copy()

    @classmethod
    def init(cls, K: int, p: int, rng: SeededRng) -> "Centers":
        return cls(rng.normal((K, p)))

    @property
    def K(self) -> int:
        return self.per_class.shape[0]

    @property
    def p(self) -> int:
        return self.per_class.shape[1]

    @property
    def global_center(self) -> np.ndarray:
        return self.per_class.mean(axis=0)


@dataclass(frozen=True)
class FisherForm:
    variant: str
    lambda_b: float | None = None

    def __post_init__(self):
        if self.variant == "trace_ratio":
            if self.lambda_b is not None:
                raise ParameterError("lambda_b only applies to the trace_difference form")
        elif self.variant == "trace_difference":
            if self.lambda_b is None or self.lambda_b < 0:
                raise ParameterError(f"trace_difference needs lambda_b >= 0, got {self.lambda_b}")
        else:
            raise ParameterError(f"unknown Fisher variant {self.variant!r}")

    @classmethod
    def trace_ratio(cls) -> "FisherForm":
        return cls("trace_ratio")

    @classmethod
    def trace_difference(cls, lambda_b: float) -> "FisherForm":
        return cls("trace_difference", float(lambda_b))


def _labels(labels, m: int, K: int) -> np.ndarray:
    y = np.asarray(labels).reshape(-1)
    if y.shape[0] != m:
        raise DimensionError(f"{y.shape[0]} labels for {m} rows")
    if y.size and (not np.issubdtype(y.dtype, np.integer)):
        if not np.all(np.equal(np.mod(y, 1), 0)):
            raise LabelError("labels must be integers")
        y = y.astype(np.int64)
    if y.size and (y.min() < 0 or y.max() >= K):
        bad = y[(y < 0) | (y >= K)][0]
        raise LabelError(f"label {bad} outside [0, {K})")
    return y.astype(np.int64)


def softmax(logits) -> np.ndarray:
    z = as_matrix(logits)
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def log_softmax(logits) -> np.ndarray:
    z = as_matrix(logits)
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def cross_entropy(logits, labels):
    """Mean softmax cross-entropy and its gradient with respect to the logits."""
    z = as_matrix(logits)
    m, K = z.shape
    if m < 1:
        raise LabelError("cross_entropy needs at least one row")
    y = _labels(labels, m, K)
    logp = log_softmax(z)
    loss = -logp[np.arange(m), y].mean()
    grad = np.exp(logp)
    grad[np.arange(m), y] -= 1.0
    return float(loss), grad / m


def scatter_traces(h, labels, centers: Centers):
    """Mini-batch traces of the within- and between-class scatter.

    ``tr_Sw`` sums squared distances of the batch rows to their own class
    center; ``tr_Sb`` sums squared distances of all K centers to their
    mean, independent of which classes the batch contains.
    """
    h = as_matrix(h)
    c = centers.per_class
    if h.shape[1] != c.shape[1]:
        raise DimensionError(f"features of width {h.shape[1]} vs centers of width {c.shape[1]}")
    y = _labels(labels, h.shape[0], centers.K)
    tr_sw = float(((h - c[y]) ** 2).sum())
    tr_sb = float(((c - c.mean(axis=0)) ** 2).sum())
    return tr_sw, tr_sb


def fisher_loss(h, labels, centers: Centers, form: FisherForm) -> float:
    tr_sw, tr_sb = scatter_traces(h, labels, centers)
    if form.variant == "trace_ratio":
        if tr_sb <= TRACE_EPS:
            raise DegenerateCentersError(f"between-class trace {tr_sb:.3g} <= {TRACE_EPS}")
        return tr_sw / tr_sb
    return tr_sw - form.lambda_b * tr_sb


def fisher_grads(h, labels, centers: Centers, form: FisherForm, printed: bool = False):
    """Gradients of :func:`fisher_loss` w.r.t. the features and the centers.

    With ``printed=True`` the between-class term of the center gradient uses
    the literature's closed form ``2 (1 - 1/K) (c_k - c)`` (without
    ``lambda_b`` in the trace-difference case). That expression drops the
    dependence of the other centers' terms on ``c``; the default is the
    exact derivative ``2 (c_k - c)``, which is what finite differences
    confirm.
    """
    h = as_matrix(h)
    c = centers.per_class
    K = centers.K
    tr_sw, tr_sb = scatter_traces(h, labels, centers)
    y = _labels(labels, h.shape[0], K)
    diff = h - c[y]
    grad_h = 2.0 * diff
    # sum_j 2 * 1(y_j = k) (c_k - h_j)
    within_c = np.zeros_like(c)
    np.add.at(within_c, y, -2.0 * diff)
    dev = c - c.mean(axis=0)
    between_c = (2.0 * (1.0 - 1.0 / K) if printed else 2.0) * dev

    if form.variant == "trace_ratio":
        if tr_sb <= TRACE_EPS:
            raise DegenerateCentersError(f"between-class trace {tr_sb:.3g} <= {TRACE_EPS}")
        return grad_h / tr_sb, within_c / tr_sb - (tr_sw / tr_sb / tr_sb) * between_c
    lam = 1.0 if printed else form.lambda_b
    return grad_h, within_c - lam * between_c


def scatter_matrices(h, labels, centers: Centers):
    """Explicitly assembled within- and between-class scatter matrices."""
    h = as_matrix(h)
    c = centers.per_class
    y = _labels(labels, h.shape[0], centers.K)
    p = c.shape[1]
    s_w = np.zeros((p, p))
    for j in range(h.shape[0]):
        d = (h[j] - c[y[j]])[:, None]
        s_w += d @ d.T
    g = c.mean(axis=0)
    s_b = np.zeros((p, p))
    for k in range(centers.K):
        d = (c[k] - g)[:, None]
        s_b += d @ d.T
    return s_w, s_b


def entropy_reg(probs, validate: bool = True):
    """Batch-summed prediction entropy and its gradient w.r.t. ``probs``.

    ``0 log 0`` is taken as 0; the gradient ``-(log p + 1)`` is evaluated
    with ``p`` floored at the smallest positive double.
    """
    p = as_matrix(probs)
    if validate:
        if np.any(p < 0):
            raise NormalizationError("probabilities must be nonnegative")
        off = np.abs(p.sum(axis=1) - 1.0)
        if np.any(off > 1e-6):
            row = int(np.argmax(off))
            raise NormalizationError(f"row {row} sums to {p[row].sum():.9g}, not 1")
    safe = np.where(p > 0, p, 1.0)
    logp = np.log(safe)
    omega = float(-(p * logp).sum())
    grad = -(np.log(np.maximum(p, np.finfo(np.float64).tiny)) + 1.0)
    return omega, grad


def entropy_from_logits(logits):
    """Entropy of ``softmax(logits)`` summed over rows, with its logit gradient."""
    logp = log_softmax(logits)
    p = np.exp(logp)
    row_h = -(p * logp).sum(axis=1, keepdims=True)
    # d H / d z_i = -p_i (log p_i + H)
    grad = -p * (logp + row_h)
    return float(row_h.sum()), grad
