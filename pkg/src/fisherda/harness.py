"""Training orchestration: the composite objective, the mini-batch loop with
schedules and early stopping, evaluation, and artifact export."""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .data import (
    BatchSampler,
    DomainDataset,
    Standardizer,
    gen_blob_shift,
    gen_two_moons_shift,
    load_csv,
)
from .errors import EmptyInputError, LabelError
from .losses import (
    Centers,
    FisherForm,
    cross_entropy,
    entropy_from_logits,
    fisher_grads,
    fisher_loss,
    softmax,
)
from .network import NetworkStack, ParamGrads, grad_reverse, save_snapshot
from .numeric import SeededRng
from .optim import AdvSchedule, EarlyStopper, LrSchedule, SgdState, lambda2_at, lr_at, sgd_step
from .transfer import DomainBatch, KernelBank, coral, domain_adv_loss, mmd

RECORD_FIELDS = (
    "batch", "task_loss", "fisher_loss", "transfer_loss", "entropy",
    "tr_sw", "tr_sb", "source_accuracy", "target_accuracy",
)

# lr multiplier groups; the remaining feature-extractor layers train at 1x
BOOSTED_GROUPS = ("bottleneck", "predictor", "centers", "discriminator")


@dataclass
class Model:
    feature: NetworkStack
    predictor: NetworkStack
    discriminator: NetworkStack | None = None
    centers: Centers | None = None
    standardizer: Standardizer | None = None

    @classmethod
    def init(cls, cfg: ExperimentConfig, d_in: int, rng: SeededRng) -> "Model":
        widths = [d_in, *cfg.feature_hidden, cfg.feature_dim]
        feature = NetworkStack.build(widths, rng, "relu", "identity")
        predictor = NetworkStack.build([cfg.feature_dim, cfg.num_classes], rng)
        disc = None
        if cfg.transfer == "adversarial":
            disc = NetworkStack.build([cfg.feature_dim, *cfg.disc_hidden, 2], rng, "relu")
        centers = None
        if cfg.fisher != "none":
            centers = Centers.init(cfg.num_classes, cfg.feature_dim, rng)
        return cls(feature, predictor, disc, centers)

    def param_groups(self) -> dict:
        fp = self.feature.params()
        groups = {"feature": fp[:-2], "bottleneck": fp[-2:], "predictor": self.predictor.params()}
        if self.centers is not None:
            groups["centers"] = [self.centers.per_class]
        if self.discriminator is not None:
            groups["discriminator"] = self.discriminator.params()
        return groups

    def features(self, x) -> np.ndarray:
        return self.feature.predict(x)

    def logits(self, x) -> np.ndarray:
        return self.predictor.predict(self.feature.predict(x))


def fisher_form(cfg: ExperimentConfig) -> FisherForm | None:
    if cfg.fisher == "trace_ratio":
        return FisherForm.trace_ratio()
    if cfg.fisher == "trace_difference":
        return FisherForm.trace_difference(cfg.lambda_b)
    return None


@dataclass
class StepResult:
    loss: float
    parts: dict
    grads: dict  # group name -> list of arrays aligned with Model.param_groups()


def _split_feature_grads(g: ParamGrads) -> dict:
    arrs = g.arrays()
    return {"feature": arrs[:-2], "bottleneck": arrs[-2:]}


def composite_loss(model: Model, x_s, y_s, x_t, cfg: ExperimentConfig, lambda2: float,
                   bank: KernelBank | None = None) -> StepResult:
    """Task loss on the source half plus the weighted Fisher, entropy and
    transfer terms, with gradients for every parameter group.

    For the adversarial criterion the returned scalar is the feature-side
    objective (the discriminator loss enters with weight ``-lambda2``); the
    discriminator's own gradients are those of its loss, unscaled, and the
    feature extractor receives them through gradient reversal.
    """
    ns = x_s.shape[0]
    h = model.feature.forward(np.vstack([x_s, x_t]))
    logits = model.predictor.forward(h)
    task, g_task = cross_entropy(logits[:ns], y_s)
    g_logits = np.zeros_like(logits)
    g_logits[:ns] = g_task
    g_h = np.zeros_like(h)
    parts = {"task_loss": task, "fisher_loss": 0.0, "transfer_loss": 0.0, "entropy": 0.0}
    total = task
    grads = {}

    form = fisher_form(cfg)
    if form is not None:
        lf = fisher_loss(h[:ns], y_s, model.centers, form)
        gh_f, gc = fisher_grads(h[:ns], y_s, model.centers, form)
        parts["fisher_loss"] = lf
        total += cfg.lambda0 * lf
        g_h[:ns] += cfg.lambda0 * gh_f
        grads["centers"] = [cfg.lambda0 * gc]

    rows = slice(ns, None) if cfg.entropy_domains == "target" else slice(None)
    omega, g_omega = entropy_from_logits(logits[rows])
    parts["entropy"] = omega
    total += cfg.lambda1 * omega
    g_logits[rows] += cfg.lambda1 * g_omega

    if cfg.transfer in ("mmd", "coral"):
        batch = DomainBatch(h[:ns], h[ns:])
        if cfg.transfer == "mmd":
            lt, gs, gt = mmd(batch, bank, unbiased=cfg.mmd_unbiased)
        else:
            lt, gs, gt = coral(batch)
        parts["transfer_loss"] = lt
        total += lambda2 * lt
        g_h += lambda2 * np.vstack([gs, gt])
    elif cfg.transfer == "adversarial":
        d_labels = np.r_[np.zeros(ns, np.int64), np.ones(h.shape[0] - ns, np.int64)]
        d_logits = model.discriminator.forward(h)
        l_adv, g_dl = domain_adv_loss(d_logits, d_labels)
        g_hd, g_disc = model.discriminator.backward(g_dl)
        parts["transfer_loss"] = l_adv
        total -= lambda2 * l_adv
        g_h += grad_reverse(g_hd, lambda2)
        grads["discriminator"] = g_disc.arrays()

    g_hy, g_pred = model.predictor.backward(g_logits)
    grads["predictor"] = g_pred.arrays()
    _, g_feat = model.feature.backward(g_h + g_hy)
    grads.update(_split_feature_grads(g_feat))
    return StepResult(float(total), parts, grads)


def accuracy(logits, labels) -> float:
    labels = np.asarray(labels)
    if labels.size == 0:
        raise EmptyInputError("cannot score an empty dataset")
    # argmax returns the first maximum, so ties go to the lowest class index
    return float((np.argmax(logits, axis=1) == labels).mean())


def evaluate(net_f: NetworkStack, net_y: NetworkStack, dataset: DomainDataset) -> float:
    """Fraction of rows whose argmax prediction equals the label."""
    if not dataset.has_labels:
        raise LabelError("evaluation needs a labeled dataset")
    if dataset.n == 0:
        raise EmptyInputError("cannot evaluate an empty dataset")
    return accuracy(net_y.predict(net_f.predict(dataset.x)), dataset.labels)


@dataclass
class DataBundle:
    source_train: DomainDataset
    source_val: DomainDataset
    target: DomainDataset  # labeled; evaluation only
    target_train: DomainDataset  # unlabeled view handed to training
    standardizer: Standardizer
    num_classes: int


def prepare_data(cfg: ExperimentConfig, rng: SeededRng) -> DataBundle:
    if cfg.dataset == "moons":
        src, tgt = gen_two_moons_shift(cfg.n_per_domain, cfg.rotation, cfg.noise, rng.spawn(1))
        K = 2
    elif cfg.dataset == "blobs":
        src, tgt = gen_blob_shift(cfg.num_classes, cfg.n_per_domain, cfg.blob_shift, rng.spawn(1),
                                  cfg.blob_radius, cfg.blob_sigma)
        K = cfg.num_classes
    else:
        K = cfg.num_classes
        src = load_csv(cfg.source_csv, True, K, "source")
        tgt = load_csv(cfg.target_csv, True, K, "target")
    if src.labels.max() >= K:
        raise LabelError(f"source label {src.labels.max()} outside [0, {K})")
    if cfg.source_fraction < 1.0:
        keep = max(2, int(round(cfg.source_fraction * src.n)))
        src = src.subset(np.sort(rng.spawn(4).permutation(src.n)[:keep]))
    perm = rng.spawn(5).permutation(src.n)
    n_val = max(1, int(round(cfg.val_fraction * src.n)))
    val, train = src.subset(perm[:n_val]), src.subset(perm[n_val:])
    std = Standardizer.fit(train.x)
    train, val = train.with_inputs(std(train.x)), val.with_inputs(std(val.x))
    target, target_train = holdout_target(tgt, std)
    return DataBundle(train, val, target, target_train, std, K)


def holdout_target(tgt: DomainDataset, std: Standardizer):
    """Split the target into a labeled evaluation copy and the unlabeled view
    handed to training. This is the only place target labels are touched
    outside :func:`evaluate`; it copies the reference and computes nothing."""
    x = std(tgt.x)
    return tgt.with_inputs(x), DomainDataset(x, None, tgt.domain_tag, tgt.num_classes)


@dataclass
class RunReport:
    records: list = field(default_factory=list)
    final: dict = field(default_factory=dict)
    stop_reason: str = "budget"
    config: ExperimentConfig | None = None
    model: Model | None = field(default=None, compare=False, repr=False)
    data: DataBundle | None = field(default=None, compare=False, repr=False)

    def series(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.records])


def _class_mean_traces(h, y, K):
    """Scatter traces with empirical class means as centers (classes absent
    from ``y`` are skipped)."""
    present = [k for k in range(K) if np.any(y == k)]
    means = np.array([h[y == k].mean(axis=0) for k in present])
    idx = np.searchsorted(present, y)
    tr_sw = float(((h - means[idx]) ** 2).sum())
    tr_sb = float(((means - means.mean(axis=0)) ** 2).sum())
    return tr_sw, tr_sb


def eval_record(model: Model, data: DataBundle, cfg: ExperimentConfig, batch: int,
                bank: KernelBank | None = None) -> dict:
    """Full-dataset diagnostics. ``tr_sw``/``tr_sb`` use empirical class means
    of the source training features; ``fisher_loss`` uses the trained centers."""
    xs, ys = data.source_train.x, data.source_train.labels
    hs, ht = model.features(xs), model.features(data.target_train.x)
    logit_s, logit_t = model.predictor.predict(hs), model.predictor.predict(ht)
    rec = {"batch": batch, "task_loss": cross_entropy(logit_s, ys)[0]}
    form = fisher_form(cfg)
    rec["fisher_loss"] = fisher_loss(hs, ys, model.centers, form) if form else 0.0
    batch_pair = DomainBatch(hs, ht)
    if cfg.transfer == "mmd":
        rec["transfer_loss"] = mmd(batch_pair, bank, cfg.mmd_unbiased)[0]
    elif cfg.transfer == "coral":
        rec["transfer_loss"] = coral(batch_pair)[0]
    elif cfg.transfer == "adversarial":
        d_logits = model.discriminator.predict(np.vstack([hs, ht]))
        d = np.r_[np.zeros(len(hs), np.int64), np.ones(len(ht), np.int64)]
        rec["transfer_loss"] = domain_adv_loss(d_logits, d)[0]
    else:
        rec["transfer_loss"] = 0.0
    rec["entropy"] = entropy_from_logits(logit_t)[0]
    rec["tr_sw"], rec["tr_sb"] = _class_mean_traces(hs, ys, data.num_classes)
    rec["source_accuracy"] = evaluate(model.feature, model.predictor, data.source_val)
    rec["target_accuracy"] = evaluate(model.feature, model.predictor, data.target)
    return rec


def _stop_metric(model: Model, data: DataBundle, cfg: ExperimentConfig):
    if cfg.early_stop_metric == "source_accuracy":
        return evaluate(model.feature, model.predictor, data.source_val), True
    return cross_entropy(model.logits(data.source_val.x), data.source_val.labels)[0], False


def run_train(cfg: ExperimentConfig) -> RunReport:
    cfg.validate()
    root = SeededRng(cfg.seed)
    data = prepare_data(cfg, root)
    if cfg.num_classes != data.num_classes:
        cfg = cfg.replace(num_classes=data.num_classes)
    model = Model.init(cfg, data.source_train.d_in, root.spawn(2))
    model.standardizer = data.standardizer
    sampler = BatchSampler(cfg.batch_size, root.spawn(3))
    bank = KernelBank()
    state = SgdState(cfg.lr, cfg.momentum, cfg.weight_decay,
                     {g: cfg.lr_mult for g in BOOSTED_GROUPS})
    lr_sched = LrSchedule(cfg.lr, cfg.lr_omega, cfg.lr_rho)
    adv_sched = AdvSchedule(cfg.lambda2, cfg.adv_gamma)
    stopper = EarlyStopper(cfg.patience)
    report = RunReport(config=cfg, model=model, data=data)
    if cfg.max_batches == 0:
        return report

    report.records.append(eval_record(model, data, cfg, 0, bank))
    metric, higher = _stop_metric(model, data, cfg)
    stopper.update(metric, higher, steps=0)
    groups = model.param_groups()
    for b in range(cfg.max_batches):
        p = b / cfg.max_batches
        lam2 = lambda2_at(adv_sched, p) if cfg.transfer == "adversarial" else cfg.lambda2
        x_s, y_s, x_t = sampler.next_batch(data.source_train, data.target_train)
        step = composite_loss(model, x_s, y_s, x_t, cfg, lam2, bank)
        if not np.isfinite(step.loss):
            raise FloatingPointError(f"non-finite loss at batch {b}")
        lr = lr_at(lr_sched, p)
        for name, params in groups.items():
            sgd_step(params, step.grads[name], state, lr, group=name)
        done = b + 1
        if done % cfg.eval_every == 0 or done == cfg.max_batches:
            report.records.append(eval_record(model, data, cfg, done, bank))
            metric, higher = _stop_metric(model, data, cfg)
            since = done - report.records[-2]["batch"]
            if stopper.update(metric, higher, steps=since) == "stop":
                report.stop_reason = "early_stop"
                break
    last = report.records[-1]
    report.final = {"batches": last["batch"], "source_accuracy": last["source_accuracy"],
                    "target_accuracy": last["target_accuracy"]}
    return report


def embeddings(model: Model, data: DataBundle):
    """Rows of (features, domain, true label, predicted label) over every
    source sample (train and validation) and every target sample."""
    rows = []
    for ds, tag in ((data.source_train, "source"), (data.source_val, "source"),
                    (data.target, "target")):
        h = model.features(ds.x)
        pred = np.argmax(model.predictor.predict(h), axis=1)
        for i in range(ds.n):
            rows.append((h[i], tag, int(ds.labels[i]), int(pred[i])))
    return rows


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _fmt(v) -> str:
    return str(v) if isinstance(v, (int, np.integer)) else repr(float(v))


def export(report: RunReport, embedding_rows, out_dir) -> list:
    """Write metrics.csv, embeddings.csv and config.echo into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RECORD_FIELDS)
    for rec in report.records:
        w.writerow([_fmt(rec[k]) for k in RECORD_FIELDS])
    _atomic_write(out / "metrics.csv", buf.getvalue())

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    rows = list(embedding_rows)
    p = len(rows[0][0]) if rows else 0
    w.writerow([f"f{i}" for i in range(p)] + ["domain", "label", "pred"])
    for h, tag, label, pred in rows:
        w.writerow([repr(float(v)) for v in h] + [tag, label, pred])
    _atomic_write(out / "embeddings.csv", buf.getvalue())

    echo = report.config.echo() if report.config is not None else ""
    _atomic_write(out / "config.echo", echo)
    return [out / "metrics.csv", out / "embeddings.csv", out / "config.echo"]


def save_model(model: Model, path) -> None:
    nets = {"feature": model.feature, "predictor": model.predictor}
    if model.discriminator is not None:
        nets["discriminator"] = model.discriminator
    arrays = {}
    if model.standardizer is not None:
        arrays["input_mean"] = model.standardizer.mean
        arrays["input_scale"] = model.standardizer.scale
    if model.centers is not None:
        arrays["centers"] = model.centers.per_class
    save_snapshot(path, nets, arrays)
