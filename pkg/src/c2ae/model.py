"""C2AE: feature mapping, label encoder and label decoder trained jointly.

Three networks share a latent space of width ``l``:

* ``fx``: features (d) -> latent (l), two hidden leaky-ReLU layers by default
* ``fe``: labels (m) -> latent (l), one affine layer
* ``fd``: latent (l) -> label scores (m), one affine layer

Training minimises ``phi + alpha * gamma`` where ``phi`` aligns ``fx(X)`` with
``fe(Y)`` under whitening penalties and ``gamma`` is the pairwise ranking loss
on ``fd(fe(Y))``. Prediction uses ``fd(fx(x))``.

The ``bpmll`` and ``bce`` baselines drop ``fe`` and train ``fd(fx(x))``
directly with the ranking loss or sigmoid cross-entropy.
"""

from __future__ import annotations

import copy
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import losses
from .data import (
    NEG,
    POS,
    BatchPlan,
    MultiLabelDataset,
    atomic_write_text,
    batches,
    encoder_inputs,
    split,
)
from .losses import LabelSets
from .nn import SGD, Adam, DenseLayer, Network, backward, forward, init_network

logger = logging.getLogger(__name__)

LOSS_MODES = ("c2ae", "bpmll", "bce")
FORMAT_VERSION = 1
N_THRESHOLD_CANDIDATES = 101


class NumericalError(FloatingPointError):
    """Raised when training produces a non-finite loss."""


class UncalibratedModelError(ValueError):
    pass


@dataclass
class TrainConfig:
    latent_dim: Optional[int] = None  # None: max(1, m // 2)
    alpha: float = 1.0
    lam: float = 0.5
    batch_size: int = 500
    epochs: int = 100
    patience: int = 10
    learning_rate: float = 5e-3
    seed: int = 0
    val_fraction: float = 1.0 / 6.0
    alpha_grid: tuple = (0.1, 0.5, 1.0, 2.0, 5.0, 10.0)
    sweep_alpha: bool = False
    hidden_dims: tuple = (512, 512)
    slope: float = 0.01
    loss_mode: str = "c2ae"
    missing_mode: bool = False
    optimizer: str = "adam"
    momentum: float = 0.0
    normalize_whitening: bool = True

    def __post_init__(self):
        self.hidden_dims = tuple(int(h) for h in self.hidden_dims)
        self.alpha_grid = tuple(float(a) for a in self.alpha_grid)
        if self.loss_mode not in LOSS_MODES:
            raise ValueError(f"loss_mode must be one of {LOSS_MODES}, got {self.loss_mode!r}")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"optimizer must be 'adam' or 'sgd', got {self.optimizer!r}")
        if self.batch_size < 1 or self.epochs < 1 or self.patience < 1:
            raise ValueError("batch_size, epochs and patience must be >= 1")
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie in (0, 1)")
        if self.alpha <= 0 or self.lam < 0 or self.learning_rate <= 0:
            raise ValueError("alpha and learning_rate must be positive, lam non-negative")
        if self.latent_dim is not None and self.latent_dim < 1:
            raise ValueError("latent_dim must be >= 1")
        if any(h < 1 for h in self.hidden_dims):
            raise ValueError("hidden_dims entries must be >= 1")


@dataclass
class TrainHistory:
    phi: list = field(default_factory=list)
    gamma: list = field(default_factory=list)
    total: list = field(default_factory=list)
    val_micro_f1: list = field(default_factory=list)
    initial_objective: float = float("nan")
    final_objective: float = float("nan")
    best_epoch: int = -1
    alpha: float = float("nan")
    wall_time: float = 0.0

    @property
    def n_epochs(self) -> int:
        return len(self.total)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2) + "\n"


@dataclass
class C2AEModel:
    fx: Network
    fd: Network
    fe: Optional[Network] = None
    alpha: float = 1.0
    lam: float = 0.5
    loss_mode: str = "c2ae"
    threshold: Optional[float] = None
    missing_mode: bool = False
    normalize_whitening: bool = True

    def __post_init__(self):
        if self.loss_mode not in LOSS_MODES:
            raise ValueError(f"unknown loss_mode {self.loss_mode!r}")
        if self.fx.out_dim != self.fd.in_dim:
            raise ValueError("fx output width must equal fd input width")
        if self.loss_mode == "c2ae":
            if self.fe is None:
                raise ValueError("c2ae mode needs a label encoder fe")
            if self.fe.out_dim != self.fx.out_dim or self.fe.in_dim != self.fd.out_dim:
                raise ValueError("fe must map m labels onto the shared latent width")

    @property
    def n_features(self) -> int:
        return self.fx.in_dim

    @property
    def n_labels(self) -> int:
        return self.fd.out_dim

    @property
    def latent_dim(self) -> int:
        return self.fx.out_dim

    def networks(self) -> dict:
        nets = {"fx": self.fx, "fe": self.fe, "fd": self.fd}
        return {k: v for k, v in nets.items() if v is not None}

    def params(self) -> list:
        out = []
        for net in self.networks().values():
            out.extend(net.params())
        return out

    def copy(self) -> "C2AEModel":
        return copy.deepcopy(self)


def init_model(n_features: int, n_labels: int, config: TrainConfig) -> C2AEModel:
    if n_labels < 1:
        raise ValueError("dataset has no labels")
    if n_features < 1:
        raise ValueError("dataset has no features")
    latent = config.latent_dim or max(1, n_labels // 2)
    rng = np.random.default_rng(np.random.SeedSequence(config.seed).spawn(3)[0])
    fx = init_network([n_features, *config.hidden_dims, latent], rng, slope=config.slope)
    fe = None
    if config.loss_mode == "c2ae":
        fe = init_network([n_labels, latent], rng, slope=config.slope)
    fd = init_network([latent, n_labels], rng, slope=config.slope)
    return C2AEModel(
        fx=fx, fd=fd, fe=fe, alpha=config.alpha, lam=config.lam, loss_mode=config.loss_mode,
        missing_mode=config.missing_mode, normalize_whitening=config.normalize_whitening,
    )


def _check_features(model: C2AEModel, features) -> np.ndarray:
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] != model.n_features:
        raise ValueError(f"expected {model.n_features} feature rows, got shape {features.shape}")
    return features


def objective_and_grads(model: C2AEModel, features, label_inputs, sets: LabelSets,
                        need_grads=True):
    """Loss terms ``(phi, gamma, total)`` and per-network parameter gradients.

    ``label_inputs`` is what ``fe`` receives (see :func:`data.encoder_inputs`);
    ``sets`` defines the known positive/negative pairs. Gradients come back as
    a dict keyed by network name, in :meth:`Network.params` order.
    """
    features = _check_features(model, features)
    if sets.m != model.n_labels or sets.n != features.shape[1]:
        raise ValueError(f"label sets are {(sets.m, sets.n)}, expected {(model.n_labels, features.shape[1])}")

    cx, cache_x = forward(model.fx, features)
    if model.loss_mode != "c2ae":
        scores, cache_d = forward(model.fd, cx)
        if model.loss_mode == "bpmll":
            gamma = losses.output_loss(scores, sets)
            d_scores = losses.output_grad(scores, sets) if need_grads else None
        else:
            gamma, d_scores = losses.bce_loss(scores, sets)
        if not need_grads:
            return 0.0, gamma, gamma, None
        g_fd, d_cx = backward(model.fd, cache_d, d_scores)
        g_fx, _ = backward(model.fx, cache_x, d_cx)
        return 0.0, gamma, gamma, {"fx": g_fx, "fd": g_fd}

    label_inputs = np.asarray(label_inputs, dtype=np.float64)
    cy, cache_e = forward(model.fe, label_inputs)
    scores, cache_d = forward(model.fd, cy)
    phi = losses.latent_loss(cx, cy, model.lam, model.normalize_whitening)
    gamma = losses.output_loss(scores, sets)
    total = phi + model.alpha * gamma
    if not need_grads:
        return phi, gamma, total, None

    d_cx, d_cy = losses.latent_grads(cx, cy, model.lam, model.normalize_whitening)
    d_scores = model.alpha * losses.output_grad(scores, sets)
    g_fd, d_cy_out = backward(model.fd, cache_d, d_scores)
    g_fx, _ = backward(model.fx, cache_x, d_cx)
    g_fe, _ = backward(model.fe, cache_e, d_cy + d_cy_out)
    return phi, gamma, total, {"fx": g_fx, "fe": g_fe, "fd": g_fd}


def objective(model: C2AEModel, features, label_inputs, sets: LabelSets):
    phi, gamma, total, _ = objective_and_grads(model, features, label_inputs, sets, need_grads=False)
    return phi, gamma, total


def predict_scores(model: C2AEModel, features) -> np.ndarray:
    """Decoder scores ``fd(fx(x))``, shape (m, n)."""
    latent, _ = forward(model.fx, _check_features(model, features))
    scores, _ = forward(model.fd, latent)
    return scores


def predict_labels(model: C2AEModel, features, threshold=None) -> np.ndarray:
    """Binary predictions: 1 where score > threshold."""
    thr = model.threshold if threshold is None else threshold
    if thr is None:
        raise UncalibratedModelError("model has no calibrated threshold; pass one explicitly")
    return (predict_scores(model, features) > thr).astype(np.int8)


def _micro_f1_counts(pred, truth, known):
    tp = np.count_nonzero(pred & truth & known)
    fp = np.count_nonzero(pred & ~truth & known)
    fn = np.count_nonzero(~pred & truth & known)
    den = 2 * tp + fp + fn
    return 2.0 * tp / den if den else 0.0


def threshold_candidates(scores) -> np.ndarray:
    scores = np.asarray(scores)
    return np.linspace(scores.min(), scores.max(), N_THRESHOLD_CANDIDATES)


def best_threshold(scores, labels):
    """Grid-search the global threshold maximising micro-F1 over known labels.

    ``labels`` is ternary; missing entries are ignored. Ties go to the
    smallest candidate. Returns ``(threshold, micro_f1)``.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.size == 0:
        raise ValueError("cannot calibrate on an empty validation set")
    if scores.shape != labels.shape:
        raise ValueError(f"scores {scores.shape} and labels {labels.shape} differ in shape")
    truth = labels == POS
    known = (labels == POS) | (labels == NEG)
    best_t, best_f1 = None, -1.0
    for t in threshold_candidates(scores):
        f1 = _micro_f1_counts(scores > t, truth, known)
        if f1 > best_f1:
            best_t, best_f1 = float(t), f1
    return best_t, best_f1


def calibrate_threshold(model: C2AEModel, val_features, val_labels) -> float:
    """Set and return the validation-optimal threshold."""
    thr, _ = best_threshold(predict_scores(model, val_features), val_labels)
    model.threshold = thr
    return thr


def embed_labels(model: C2AEModel) -> np.ndarray:
    """Latent code of each one-hot label, as columns of an (l, m) matrix."""
    if model.loss_mode != "c2ae" or model.fe is None:
        raise ValueError(f"label embeddings need a c2ae model, not {model.loss_mode!r}")
    out, _ = forward(model.fe, np.eye(model.n_labels))
    return out


def nearest_label_neighbors(model: C2AEModel, label_index: int, k: int):
    """The ``k`` labels closest to ``label_index`` in the latent space.

    Returns ``[(label, distance), ...]`` sorted by distance, then label index.
    """
    m = model.n_labels
    if not 0 <= label_index < m:
        raise IndexError(f"label index {label_index} outside [0, {m})")
    if not 0 <= k <= m - 1:
        raise ValueError(f"k must lie in [0, {m - 1}], got {k}")
    emb = embed_labels(model)
    dist = np.linalg.norm(emb - emb[:, [label_index]], axis=0)
    others = np.array([j for j in range(m) if j != label_index], dtype=int)
    order = others[np.lexsort((others, dist[others]))]
    return [(int(j), float(dist[j])) for j in order[:k]]


# ---------------------------------------------------------------------------
# training


def _make_optimizer(config: TrainConfig):
    if config.optimizer == "sgd":
        return SGD(config.learning_rate, config.momentum)
    return Adam(config.learning_rate)


def _flat_grads(model: C2AEModel, grads: dict) -> list:
    out = []
    for name in model.networks():
        out.extend(grads[name])
    return out


def mean_batch_objective(model: C2AEModel, ds: MultiLabelDataset, batch_size: int) -> float:
    """Average total objective over consecutive, unshuffled batches of ``ds``."""
    totals = []
    for start in range(0, ds.n_instances, batch_size):
        cols = slice(start, start + batch_size)
        labels = ds.labels[:, cols]
        _, _, total = objective(model, ds.features[:, cols],
                                encoder_inputs(labels, model.missing_mode),
                                LabelSets.from_ternary(labels))
        totals.append(total)
    return float(np.mean(totals))


def train(dataset: MultiLabelDataset, config: Optional[TrainConfig] = None, val=None):
    """Mini-batch training with early stopping on validation micro-F1.

    Holds out ``config.val_fraction`` of ``dataset`` unless ``val`` is given.
    The parameters from the best validation epoch are kept and the decision
    threshold is calibrated on the validation split. Returns
    ``(model, history)``.
    """
    config = config or TrainConfig()
    if dataset.n_instances == 0:
        raise ValueError("dataset is empty")
    if dataset.n_labels == 0:
        raise ValueError("dataset has no labels")
    seeds = np.random.SeedSequence(config.seed).spawn(3)
    if val is None:
        train_ds, val_ds = split(dataset, config.val_fraction, seed=seeds[1])
    else:
        train_ds, val_ds = dataset, val

    model = init_model(dataset.n_features, dataset.n_labels, config)
    if config.batch_size < model.latent_dim and model.loss_mode == "c2ae":
        logger.warning("batch_size %d < latent_dim %d: whitening penalty cannot reach zero",
                       config.batch_size, model.latent_dim)
    optimizer = _make_optimizer(config)
    params = model.params()
    plan = BatchPlan(config.batch_size, seed=seeds[2])
    history = TrainHistory(alpha=model.alpha)
    history.initial_objective = mean_batch_objective(model, train_ds, config.batch_size)

    started = time.perf_counter()
    best_f1, best_params, stale = -1.0, None, 0
    for epoch in range(config.epochs):
        phis, gammas, totals = [], [], []
        for batch in batches(train_ds, plan):
            enc = encoder_inputs(batch.labels, model.missing_mode)
            phi, gamma, total, grads = objective_and_grads(model, batch.features, enc, batch.sets)
            if not np.isfinite(total):
                raise NumericalError(f"non-finite objective at epoch {epoch}")
            optimizer.step(params, _flat_grads(model, grads))
            phis.append(phi)
            gammas.append(gamma)
            totals.append(total)
        history.phi.append(float(np.mean(phis)))
        history.gamma.append(float(np.mean(gammas)))
        history.total.append(float(np.mean(totals)))
        _, f1 = best_threshold(predict_scores(model, val_ds.features), val_ds.labels)
        history.val_micro_f1.append(f1)
        if f1 > best_f1:
            best_f1, best_params, stale = f1, [p.copy() for p in params], 0
            history.best_epoch = epoch
        else:
            stale += 1
            if stale >= config.patience:
                break

    for p, best in zip(params, best_params):
        p[...] = best
    history.final_objective = mean_batch_objective(model, train_ds, config.batch_size)
    if not np.isfinite(history.final_objective):
        raise NumericalError("non-finite objective after training")
    calibrate_threshold(model, val_ds.features, val_ds.labels)
    history.wall_time = time.perf_counter() - started
    return model, history


def select_alpha(dataset: MultiLabelDataset, config: TrainConfig):
    """Train once per ``config.alpha_grid`` entry; keep the best validation micro-F1."""
    best = None
    for alpha in config.alpha_grid:
        model, history = train(dataset, _with(config, alpha=alpha))
        score = max(history.val_micro_f1)
        if best is None or score > best[0]:
            best = (score, model, history)
    return best[1], best[2]


def _with(config: TrainConfig, **changes) -> TrainConfig:
    values = asdict(config)
    values.update(changes)
    return TrainConfig(**values)


def fit(dataset: MultiLabelDataset, config: Optional[TrainConfig] = None):
    """``train`` or, with ``config.sweep_alpha``, ``select_alpha``."""
    config = config or TrainConfig()
    if config.sweep_alpha and config.loss_mode == "c2ae":
        return select_alpha(dataset, config)
    return train(dataset, config)


# ---------------------------------------------------------------------------
# serialization


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def format_model(model: C2AEModel) -> str:
    lines = [
        f"c2ae-model {FORMAT_VERSION}",
        f"loss_mode {model.loss_mode}",
        f"n_features {model.n_features}",
        f"n_labels {model.n_labels}",
        f"latent_dim {model.latent_dim}",
        f"alpha {_fmt(model.alpha)}",
        f"lambda {_fmt(model.lam)}",
        f"threshold {'none' if model.threshold is None else _fmt(model.threshold)}",
        f"missing_mode {int(model.missing_mode)}",
        f"normalize_whitening {int(model.normalize_whitening)}",
    ]
    for name, net in model.networks().items():
        lines.append(f"network {name} {len(net.layers)}")
        for layer in net.layers:
            lines.append(f"layer {layer.in_dim} {layer.out_dim} {layer.activation} {_fmt(layer.slope)}")
            for row in layer.weight:
                lines.append(" ".join(_fmt(v) for v in row))
            lines.append(" ".join(_fmt(v) for v in layer.bias))
    lines.append("end")
    return "\n".join(lines) + "\n"


class ModelFormatError(ValueError):
    pass


def parse_model(text: str) -> C2AEModel:
    try:
        return _parse_model(text)
    except ModelFormatError:
        raise
    except (ValueError, KeyError, IndexError) as exc:
        raise ModelFormatError(f"malformed model document: {exc}") from None


def _parse_model(text: str) -> C2AEModel:
    lines = iter(text.splitlines())

    def take(key=None):
        try:
            parts = next(lines).split()
        except StopIteration:
            raise ModelFormatError("unexpected end of model document") from None
        if key is not None and (not parts or parts[0] != key):
            raise ModelFormatError(f"expected {key!r}, got {' '.join(parts)!r}")
        return parts

    head = take("c2ae-model")
    if len(head) != 2 or head[1] != str(FORMAT_VERSION):
        raise ModelFormatError(f"unsupported model format version {head[1:]!r}")
    meta = {}
    for key in ("loss_mode", "n_features", "n_labels", "latent_dim", "alpha", "lambda",
                "threshold", "missing_mode", "normalize_whitening"):
        meta[key] = take(key)[1]
    nets = {}
    while True:
        parts = take()
        if parts == ["end"]:
            break
        if parts[0] != "network" or len(parts) != 3:
            raise ModelFormatError(f"expected a network block, got {' '.join(parts)!r}")
        layers = []
        for _ in range(int(parts[2])):
            _, in_dim, out_dim, act, slope = take("layer")
            in_dim, out_dim = int(in_dim), int(out_dim)
            weight = np.array([[float(v) for v in take()] for _ in range(out_dim)]).reshape(out_dim, in_dim)
            bias = np.array([float(v) for v in take()])
            layers.append(DenseLayer(weight, bias, act, float(slope)))
        nets[parts[1]] = Network(layers)
    threshold = None if meta["threshold"] == "none" else float(meta["threshold"])
    model = C2AEModel(
        fx=nets["fx"], fd=nets["fd"], fe=nets.get("fe"), alpha=float(meta["alpha"]),
        lam=float(meta["lambda"]), loss_mode=meta["loss_mode"], threshold=threshold,
        missing_mode=meta["missing_mode"] == "1", normalize_whitening=meta["normalize_whitening"] == "1",
    )
    if (model.n_features, model.n_labels, model.latent_dim) != (
            int(meta["n_features"]), int(meta["n_labels"]), int(meta["latent_dim"])):
        raise ModelFormatError("declared dimensions disagree with the stored networks")
    return model


def save_model(model: C2AEModel, path) -> None:
    atomic_write_text(path, format_model(model))


def load_model(path) -> C2AEModel:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_model(fh.read())
