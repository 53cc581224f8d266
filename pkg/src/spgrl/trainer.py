"""End-to-end training: kNN feature graph, two encoders, combined loss, Adam."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from . import objectives
from .data import Dataset, SplitMasks, perturb_features
from .encoder import GcnParams, gcn_backward, gcn_forward, glorot_uniform, init_gcn_params
from .graph import NormalizedGraph, build_knn_graph, normalize_adjacency
from .linalg import DTYPES, SparseGraph, deterministic
from .objectives import ClassifierParams, LossReport
from .optim import AdamState, OptimHyper, adam_step

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    k: int = 7
    alpha: float = 1.0
    beta: float = 1.0
    learning_rate: float = 3e-4
    weight_decay: float = 5e-4
    dropout: float = 0.5
    epochs: int = 200
    hidden1: int = 256
    hidden2: int = 128
    variant: str = "full"
    seed: int = 0
    sigma: float = 0.0
    per_class: int = 20
    n_test: int = 1000  # negative: min(1000, labeled nodes left after training)
    self_loops: bool = True
    final_relu: bool = False
    temperature: float = 1.0
    pos_weight: float | None = 1.0
    normalize_recon: bool = True
    precision: str = "f64"
    deterministic: bool = True

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be non-negative")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if self.variant not in objectives.VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.precision not in DTYPES:
            raise ValueError(f"precision must be one of {sorted(DTYPES)}")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")

    @property
    def dtype(self):
        return DTYPES[self.precision]

    def to_dict(self):
        return asdict(self)


@dataclass
class EpochRecord:
    epoch: int
    total: float
    l_cl: float
    l_re: float
    l_cr: float
    train_acc: float


@dataclass
class MetricsHistory:
    records: list[EpochRecord] = field(default_factory=list)
    test_acc: float | None = None
    test_macro_f1: float | None = None


@dataclass(eq=False)
class Views:
    """Everything fixed before the epoch loop."""

    x: np.ndarray
    a_hat: SparseGraph
    g_topo: NormalizedGraph
    g_feat: NormalizedGraph
    target_topo: SparseGraph  # reconstruction target for the original graph
    target_feat: SparseGraph  # reconstruction target for the kNN graph


@dataclass
class TrainResult:
    params: dict[str, np.ndarray]
    history: MetricsHistory
    zt: np.ndarray
    zf: np.ndarray
    views: Views
    predictions: np.ndarray


PARAM_KEYS = ("topo.w0", "topo.w1", "feat.w0", "feat.w1", "cls.b", "cls.a")


def prepare_views(ds: Dataset, config: TrainConfig, rng: np.random.Generator | None = None) -> Views:
    x = ds.x
    if config.sigma > 0:
        x = perturb_features(x, config.sigma, rng if rng is not None else np.random.default_rng(config.seed))
    a_hat = build_knn_graph(x, config.k)
    x = x.astype(config.dtype)
    if config.self_loops:
        targets = ds.a.add_self_loops(), a_hat.add_self_loops()
    else:
        targets = ds.a, a_hat
    return Views(x, a_hat, normalize_adjacency(ds.a, config.self_loops),
                 normalize_adjacency(a_hat, config.self_loops), *targets)


def init_params(d: int, n_classes: int, config: TrainConfig, rng: np.random.Generator):
    dt = config.dtype
    topo = init_gcn_params(d, config.hidden1, config.hidden2, rng, dt)
    feat = init_gcn_params(d, config.hidden1, config.hidden2, rng, dt)
    return {
        **topo.as_dict("topo."),
        **feat.as_dict("feat."),
        "cls.b": glorot_uniform(2 * config.hidden2, n_classes, rng, dt),
        "cls.a": np.zeros(n_classes, dtype=dt),
    }


def forward_backward(params, views: Views, labels, train_mask, config: TrainConfig,
                     rng: np.random.Generator | None = None, training: bool = True, need_grads: bool = True):
    """Evaluate every head; returns ``(report, grads, probs, zt, zf)``.

    Heads whose effective weight is zero contribute no gradient at all.
    """
    p = config.dropout if training else 0.0
    topo = GcnParams(params["topo.w0"], params["topo.w1"])
    feat = GcnParams(params["feat.w0"], params["feat.w1"])
    zt, cache_t = gcn_forward(topo, views.g_topo, views.x, p, rng, training, config.final_relu)
    zf, cache_f = gcn_forward(feat, views.g_feat, views.x, p, rng, training, config.final_relu)
    r = np.concatenate([zt, zf], axis=1)
    h2 = zt.shape[1]

    clf = ClassifierParams(params["cls.b"], params["cls.a"])
    l_cl, g_r, g_b, g_a, probs = objectives.classification_loss(r, clf, labels, train_mask)
    l_cr, gt_cr, gf_cr = objectives.contrastive_loss(zt, zf, config.temperature)
    l_re, gt_re, gf_re = objectives.exchange_reconstruction(
        zt, zf, views.target_topo, views.target_feat,
        exchange=config.variant != "spgrl3",
        pos_weight=config.pos_weight, normalize=config.normalize_recon)
    report = objectives.total_loss(l_cl, l_re, l_cr, config.alpha, config.beta, config.variant)
    if not need_grads:
        return report, None, probs, zt, zf

    g_zt = g_r[:, :h2].copy()
    g_zf = g_r[:, h2:].copy()
    if report.beta:
        g_zt += report.beta * gt_cr
        g_zf += report.beta * gf_cr
    if report.alpha:
        g_zt += report.alpha * gt_re
        g_zf += report.alpha * gf_re
    gt_w0, gt_w1 = gcn_backward(cache_t, g_zt)
    gf_w0, gf_w1 = gcn_backward(cache_f, g_zf)
    grads = {"topo.w0": gt_w0, "topo.w1": gt_w1, "feat.w0": gf_w0, "feat.w1": gf_w1,
             "cls.b": g_b, "cls.a": g_a}
    return report, grads, probs, zt, zf


def classification_metrics(y_true, y_pred) -> tuple[float, float]:
    """Accuracy and macro-F1 over the classes occurring in either array."""
    y_true, y_pred = np.asarray(y_true), np.asarray(y_pred)
    if y_true.size == 0:
        raise ValueError("empty evaluation mask")
    acc = float(np.mean(y_true == y_pred))
    f1s = []
    for c in np.union1d(y_true, y_pred):
        tp = np.sum((y_true == c) & (y_pred == c))
        fp = np.sum((y_true != c) & (y_pred == c))
        fn = np.sum((y_true == c) & (y_pred != c))
        denom = 2 * tp + fp + fn
        f1s.append(2 * tp / denom if denom else 0.0)
    return acc, float(np.mean(f1s))


def evaluate(params, ds: Dataset, views: Views, mask, config: TrainConfig):
    """Eval-mode forward; returns ``(acc, macro_f1, predictions)`` with predictions for every node."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("empty evaluation mask")
    pred = predict(params, views, config)
    acc, f1 = classification_metrics(ds.labels[mask], pred[mask])
    return acc, f1, pred


def predict(params, views: Views, config: TrainConfig) -> np.ndarray:
    topo = GcnParams(params["topo.w0"], params["topo.w1"])
    feat = GcnParams(params["feat.w0"], params["feat.w1"])
    zt, _ = gcn_forward(topo, views.g_topo, views.x, final_relu=config.final_relu)
    zf, _ = gcn_forward(feat, views.g_feat, views.x, final_relu=config.final_relu)
    logits = np.concatenate([zt, zf], axis=1) @ params["cls.b"] + params["cls.a"]
    return np.argmax(logits, axis=1)


def embed(params, views: Views, config: TrainConfig):
    topo = GcnParams(params["topo.w0"], params["topo.w1"])
    feat = GcnParams(params["feat.w0"], params["feat.w1"])
    zt, _ = gcn_forward(topo, views.g_topo, views.x, final_relu=config.final_relu)
    zf, _ = gcn_forward(feat, views.g_feat, views.x, final_relu=config.final_relu)
    return zt, zf


def train(ds: Dataset, splits: SplitMasks, config: TrainConfig, callback=None) -> TrainResult:
    if ds.n_classes < 1:
        raise ValueError("dataset has no labeled classes")
    init_seq, drop_seq, noise_seq = np.random.SeedSequence(config.seed).spawn(3)
    init_rng = np.random.default_rng(init_seq)
    drop_rng = np.random.default_rng(drop_seq)
    hyper = OptimHyper(config.learning_rate, config.weight_decay)

    with deterministic(config.deterministic):
        views = prepare_views(ds, config, np.random.default_rng(noise_seq))
        params = init_params(views.x.shape[1], ds.n_classes, config, init_rng)
        state = AdamState.zeros_like(params)
        history = MetricsHistory()
        train_idx = np.flatnonzero(splits.train)
        for epoch in range(1, config.epochs + 1):
            report, grads, probs, _, _ = forward_backward(
                params, views, ds.labels, splits.train, config, drop_rng, training=True)
            if not np.isfinite(report.total):
                raise FloatingPointError(f"non-finite loss at epoch {epoch}")
            train_acc = float(np.mean(np.argmax(probs[train_idx], axis=1) == ds.labels[train_idx]))
            rec = EpochRecord(epoch, report.total, report.l_cl, report.l_re, report.l_cr, train_acc)
            history.records.append(rec)
            if callback is not None:
                callback(rec, report)
            params, state = adam_step(params, grads, state, hyper)
            if epoch % 50 == 0 or epoch == 1:
                log.debug("epoch %d total=%.4f cl=%.4f re=%.4f cr=%.4f train_acc=%.3f",
                          epoch, rec.total, rec.l_cl, rec.l_re, rec.l_cr, rec.train_acc)

        acc, f1, pred = evaluate(params, ds, views, splits.test, config)
        zt, zf = embed(params, views, config)
    history.test_acc, history.test_macro_f1 = acc, f1
    return TrainResult(params, history, zt, zf, views, pred)
