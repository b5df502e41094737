"""Transfer criteria between source and target feature batches: multi-kernel
MMD, CORAL, and the domain adversarial loss."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CoverageError,
    DimensionError,
    EmptyInputError,
    InsufficientSamplesError,
    LabelError,
    ParameterError,
)
from .losses import log_softmax
from .numeric import as_matrix

DEFAULT_SIGMAS = (
    1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0, 5.0, 10.0, 15.0, 20.0, 25.0,
    30.0, 35.0, 100.0, 1e3, 1e4, 1e5, 1e6,
)


@dataclass(frozen=True)
class KernelBank:
    """Mixture of RBF kernels ``exp(-|x - y|^2 / (2 sigma^2))``."""

    sigmas: tuple = DEFAULT_SIGMAS
    weights: tuple | None = field(default=None)

    def __post_init__(self):
        sigmas = tuple(float(s) for s in self.sigmas)
        if not sigmas or min(sigmas) <= 0:
            raise ParameterError("kernel bandwidths must be positive and nonempty")
        if self.weights is None:
            weights = tuple(1.0 / len(sigmas) for _ in sigmas)
        else:
            weights = tuple(float(w) for w in self.weights)
        if len(weights) != len(sigmas):
            raise ParameterError(f"{len(weights)} weights for {len(sigmas)} kernels")
        if min(weights) < 0 or abs(sum(weights) - 1.0) > 1e-12:
            raise ParameterError("kernel weights must be nonnegative and sum to 1")
        object.__setattr__(self, "sigmas", sigmas)
        object.__setattr__(self, "weights", weights)

    def kernel(self, x, y):
        """Mixed kernel matrix and ``sum_s w_s K_s / sigma_s^2`` (for gradients),
        plus the pairwise differences ``x_i - y_j``."""
        diff = x[:, None, :] - y[None, :, :]
        d2 = (diff**2).sum(axis=2)
        k = np.zeros_like(d2)
        a = np.zeros_like(d2)
        for s, w in zip(self.sigmas, self.weights):
            ks = np.exp(-d2 / (2.0 * s * s))
            k += w * ks
            a += (w / (s * s)) * ks
        return k, a, diff


@dataclass
class DomainBatch:
    h_s: np.ndarray
    h_t: np.ndarray

    def __post_init__(self):
        self.h_s = as_matrix(self.h_s)
        self.h_t = as_matrix(self.h_t)
        if self.h_s.shape[0] == 0 or self.h_t.shape[0] == 0:
            raise EmptyInputError("both domain batches must be nonempty")
        if self.h_s.shape[1] != self.h_t.shape[1]:
            raise DimensionError(
                f"source width {self.h_s.shape[1]} != target width {self.h_t.shape[1]}"
            )

    def swapped(self) -> "DomainBatch":
        return DomainBatch(self.h_t, self.h_s)


def _within(x, bank, unbiased):
    n = x.shape[0]
    k, a, diff = bank.kernel(x, x)
    if unbiased:
        if n < 2:
            raise InsufficientSamplesError("unbiased MMD needs at least 2 samples per domain")
        np.fill_diagonal(k, 0.0)
        np.fill_diagonal(a, 0.0)
        norm = n * (n - 1)
    else:
        norm = n * n
    value = k.sum() / norm
    # d/dx_i of sum_{i,j} k(x_i, x_j): both argument slots contribute
    grad = -2.0 * np.einsum("ij,ijp->ip", a, diff) / norm
    return value, grad


def mmd(batch: DomainBatch, bank: KernelBank | None = None, unbiased: bool = False):
    """Multi-kernel MMD estimate and its gradients w.r.t. both feature batches.

    The default is the biased V-statistic (diagonal terms included).
    """
    bank = bank or KernelBank()
    hs, ht = batch.h_s, batch.h_t
    ns, nt = hs.shape[0], ht.shape[0]
    vs, gs = _within(hs, bank, unbiased)
    vt, gt = _within(ht, bank, unbiased)
    k, a, diff = bank.kernel(hs, ht)
    cross = k.sum() / (ns * nt)
    gs_cross = -np.einsum("ij,ijp->ip", a, diff) / (ns * nt)
    gt_cross = np.einsum("ij,ijp->jp", a, diff) / (ns * nt)
    loss = vs + vt - 2.0 * cross
    return float(loss), gs - 2.0 * gs_cross, gt - 2.0 * gt_cross


def mmd_naive(batch: DomainBatch, bank: KernelBank | None = None) -> float:
    """Loop-by-loop biased MMD, kept deliberately free of vectorization."""
    bank = bank or KernelBank()

    def k(x, y):
        d2 = sum((float(a) - float(b)) ** 2 for a, b in zip(x, y))
        return sum(w * np.exp(-d2 / (2.0 * s * s)) for s, w in zip(bank.sigmas, bank.weights))

    hs, ht = batch.h_s, batch.h_t
    ns, nt = len(hs), len(ht)
    ss = sum(k(hs[i], hs[j]) for i in range(ns) for j in range(ns))
    tt = sum(k(ht[i], ht[j]) for i in range(nt) for j in range(nt))
    st = sum(k(hs[i], ht[j]) for i in range(ns) for j in range(nt))
    return ss / ns**2 + tt / nt**2 - 2.0 * st / (ns * nt)


def covariance(h) -> np.ndarray:
    h = as_matrix(h)
    n = h.shape[0]
    if n < 2:
        raise InsufficientSamplesError(f"covariance needs at least 2 rows, got {n}")
    hc = h - h.mean(axis=0)
    return hc.T @ hc / (n - 1)


def coral(batch: DomainBatch):
    """CORAL loss ``|C_s - C_t|_F^2 / (4 p^2)`` and its feature gradients."""
    hs, ht = batch.h_s, batch.h_t
    p = hs.shape[1]
    cs, ct = covariance(hs), covariance(ht)
    delta = cs - ct
    loss = float((delta**2).sum() / (4.0 * p * p))
    g = delta / (2.0 * p * p)  # dL/dC_s, symmetric
    grad_s = 2.0 * (hs - hs.mean(axis=0)) @ g / (hs.shape[0] - 1)
    grad_t = -2.0 * (ht - ht.mean(axis=0)) @ g / (ht.shape[0] - 1)
    return loss, grad_s, grad_t


def domain_adv_loss(d_logits, d_labels):
    """Discriminator cross-entropy averaged within each domain, then summed.

    Labels are 0 for source rows and 1 for target rows.
    """
    z = as_matrix(d_logits)
    d = np.asarray(d_labels).reshape(-1)
    if z.shape[1] != 2:
        raise DimensionError(f"discriminator must emit 2 logits, got {z.shape[1]}")
    if d.shape[0] != z.shape[0]:
        raise DimensionError(f"{d.shape[0]} domain labels for {z.shape[0]} rows")
    if np.any((d != 0) & (d != 1)):
        raise LabelError("domain labels must be 0 (source) or 1 (target)")
    d = d.astype(np.int64)
    counts = np.array([(d == 0).sum(), (d == 1).sum()])
    if counts.min() == 0:
        raise CoverageError("both domains must be present in the discriminator batch")
    rows = np.arange(z.shape[0])
    logp = log_softmax(z)
    scale = 1.0 / counts[d]
    loss = float(-(logp[rows, d] * scale).sum())
    grad = np.exp(logp)
    grad[rows, d] -= 1.0
    return loss, grad * scale[:, None]
