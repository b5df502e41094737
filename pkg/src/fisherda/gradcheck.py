"""Central finite-difference verification of every analytic gradient.

Each component builds a few randomized problem instances and reports the
norm-wise relative error ``|a - n| / max(|a|, |n|)`` between the analytic
gradient ``a`` and the central-difference estimate ``n``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .config import ExperimentConfig
from .harness import Model, composite_loss
from .losses import Centers, FisherForm, entropy_reg, fisher_grads, fisher_loss
from .network import NetworkStack
from .numeric import SeededRng
from .transfer import DomainBatch, KernelBank, coral, mmd

STEP = 1e-5
TOLERANCE = 1e-5


def numeric_grad(f, x: np.ndarray, step: float = STEP) -> np.ndarray:
    """Central differences of scalar ``f()`` w.r.t. array ``x``, perturbed in place."""
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + step
        fp = f()
        flat[i] = old - step
        fm = f()
        flat[i] = old
        gflat[i] = (fp - fm) / (2.0 * step)
    return g


def rel_error(analytic, numeric) -> float:
    a = np.concatenate([np.ravel(v) for v in analytic]) if isinstance(analytic, (list, tuple)) \
        else np.ravel(analytic)
    n = np.concatenate([np.ravel(v) for v in numeric]) if isinstance(numeric, (list, tuple)) \
        else np.ravel(numeric)
    scale = max(np.linalg.norm(a), np.linalg.norm(n))
    return 0.0 if scale == 0 else float(np.linalg.norm(a - n) / scale)


def _points_off_kinks(net: NetworkStack, x):
    """True when no relu pre-activation sits within reach of the FD step."""
    a = x
    for layer in net.layers:
        z = a @ layer.weight.T + layer.bias
        if layer.activation == "relu" and np.min(np.abs(z)) < 1e-3:
            return False
        a = np.maximum(z, 0) if layer.activation == "relu" else z
    return True


def check_network(rng: SeededRng, widths, activation: str) -> float:
    for _ in range(50):
        net = NetworkStack.build(widths, rng, activation, "identity")
        for layer in net.layers:
            layer.bias[:] = rng.normal(layer.bias.shape, 0.0, 0.5)
        x = rng.normal((5, widths[0]))
        if _points_off_kinks(net, x):
            break
    up = rng.normal((5, widths[-1]))

    def f():
        return float((net.forward(x) * up).sum())

    net.forward(x)
    gx, grads = net.backward(up)
    errs = [rel_error(gx, numeric_grad(f, x))]
    for p, g in zip(net.params(), grads.arrays()):
        errs.append(rel_error(g, numeric_grad(f, p)))
    return max(errs)


def _fisher_instance(rng, K, p, m):
    centers = Centers.init(K, p, rng)
    y = np.arange(m) % K
    h = centers.per_class[y] + rng.normal((m, p))
    return h, y, centers


def check_fisher(rng: SeededRng, form: FisherForm, K: int, p: int, m: int,
                 grads_fn=fisher_grads) -> float:
    h, y, centers = _fisher_instance(rng, K, p, m)
    gh, gc = grads_fn(h, y, centers, form)

    def f():
        return fisher_loss(h, y, centers, form)

    return max(rel_error(gh, numeric_grad(f, h)),
               rel_error(gc, numeric_grad(f, centers.per_class)))


def check_mmd(rng: SeededRng, ns: int, nt: int, p: int, bank=None) -> float:
    bank = bank or KernelBank()
    hs, ht = rng.normal((ns, p)), rng.normal((nt, p)) + 0.5
    _, gs, gt = mmd(DomainBatch(hs, ht), bank)

    def f():
        return mmd(DomainBatch(hs, ht), bank)[0]

    return max(rel_error(gs, numeric_grad(f, hs)), rel_error(gt, numeric_grad(f, ht)))


def check_coral(rng: SeededRng, ns: int, nt: int, p: int) -> float:
    hs, ht = rng.normal((ns, p)), 2.0 * rng.normal((nt, p))
    _, gs, gt = coral(DomainBatch(hs, ht))

    def f():
        return coral(DomainBatch(hs, ht))[0]

    return max(rel_error(gs, numeric_grad(f, hs)), rel_error(gt, numeric_grad(f, ht)))


def check_entropy(rng: SeededRng, m: int, K: int) -> float:
    probs = rng.uniform((m, K), 0.05, 1.0)
    probs /= probs.sum(axis=1, keepdims=True)
    _, g = entropy_reg(probs)
    return rel_error(g, numeric_grad(lambda: entropy_reg(probs, validate=False)[0], probs))


def check_composite(rng: SeededRng, transfer: str, fisher: str, entropy_domains="target") -> float:
    cfg = ExperimentConfig(
        transfer=transfer, fisher=fisher, lambda0=0.3, lambda_b=0.7, lambda1=0.2,
        lambda2=0.8, entropy_domains=entropy_domains, feature_hidden=(6,), feature_dim=3,
        disc_hidden=(4,), num_classes=3,
    )
    for _ in range(50):
        model = Model.init(cfg, 2, rng)
        x_s, x_t = rng.normal((6, 2)), rng.normal((6, 2)) + 0.3
        h = model.feature.predict(np.vstack([x_s, x_t]))
        if _points_off_kinks(model.feature, np.vstack([x_s, x_t])) and (
                model.discriminator is None or _points_off_kinks(model.discriminator, h)):
            break
    y_s = np.arange(6) % 3
    lam2 = 0.6
    step = composite_loss(model, x_s, y_s, x_t, cfg, lam2)

    def total():
        return composite_loss(model, x_s, y_s, x_t, cfg, lam2).loss

    def disc_loss():
        return composite_loss(model, x_s, y_s, x_t, cfg, lam2).parts["transfer_loss"]

    errs = []
    for name, params in model.param_groups().items():
        f = disc_loss if name == "discriminator" else total
        for p, g in zip(params, step.grads[name]):
            errs.append(rel_error(g, numeric_grad(f, p)))
    return max(errs)


def default_cases():
    """(component name, check(rng)) pairs; 30 randomized instances."""
    cases = []
    for widths, act in [((2, 8), "relu"), ((8, 16, 2), "relu"), ((16, 8, 8, 2), "relu"),
                        ((2, 16, 16, 8), "identity"), ((8, 2, 16), "relu")]:
        cases.append(("network_backward", lambda r, w=widths, a=act: check_network(r, w, a)))
    for K, p, m in [(2, 3, 6), (5, 8, 36), (5, 3, 36)]:
        cases.append(("fisher_trace_ratio",
                      lambda r, K=K, p=p, m=m: check_fisher(r, FisherForm.trace_ratio(), K, p, m)))
    for K, p, m, lb in [(2, 8, 6, 0.5), (5, 3, 36, 1.0), (5, 8, 36, 5.0)]:
        cases.append(("fisher_trace_difference",
                      lambda r, K=K, p=p, m=m, lb=lb:
                      check_fisher(r, FisherForm.trace_difference(lb), K, p, m)))
    for ns, nt, p, bank in [(5, 7, 2, None), (10, 10, 4, None), (3, 8, 3, KernelBank((0.5, 1.0, 2.0))),
                            (6, 4, 1, KernelBank((1.0,)))]:
        cases.append(("mmd", lambda r, a=ns, b=nt, p=p, k=bank: check_mmd(r, a, b, p, k)))
    for ns, nt, p in [(5, 7, 2), (10, 10, 4), (3, 9, 3)]:
        cases.append(("coral", lambda r, a=ns, b=nt, p=p: check_coral(r, a, b, p)))
    for m, K in [(4, 2), (6, 5), (3, 3)]:
        cases.append(("entropy_reg", lambda r, m=m, K=K: check_entropy(r, m, K)))
    for transfer, fisher, ed in [("none", "none", "target"), ("mmd", "trace_difference", "target"),
                                 ("coral", "trace_ratio", "both"),
                                 ("adversarial", "trace_difference", "target"),
                                 ("adversarial", "trace_ratio", "both"),
                                 ("mmd", "none", "both"), ("adversarial", "none", "target"),
                                 ("coral", "trace_difference", "target"),
                                 ("none", "trace_ratio", "target")]:
        cases.append(("composite",
                      lambda r, t=transfer, f=fisher, e=ed: check_composite(r, t, f, e)))
    return cases


@dataclass
class GradcheckSummary:
    max_errors: dict
    tolerance: float
    n_cases: int
    seconds: float

    @property
    def failed(self) -> list:
        return [k for k, v in self.max_errors.items() if not v < self.tolerance]

    @property
    def passed(self) -> bool:
        return not self.failed

    def lines(self) -> list:
        out = [f"{'component':<26} {'max rel err':>12}  status"]
        for name, err in self.max_errors.items():
            status = "ok" if err < self.tolerance else "FAIL"
            out.append(f"{name:<26} {err:12.3e}  {status}")
        verdict = "PASS" if self.passed else "FAIL"
        out.append(f"{self.n_cases} cases in {self.seconds:.1f}s, tolerance {self.tolerance:g}: {verdict}")
        return out


def run_gradcheck(seed: int = 0, cases=None, tolerance: float = TOLERANCE) -> GradcheckSummary:
    cases = default_cases() if cases is None else cases
    rng = SeededRng(seed)
    errors = {}
    start = time.perf_counter()
    for name, check in cases:
        err = check(rng)
        errors[name] = max(errors.get(name, 0.0), err)
    return GradcheckSummary(errors, tolerance, len(cases), time.perf_counter() - start)
