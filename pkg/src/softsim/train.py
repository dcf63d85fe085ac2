"""Desk-scale training harness: synthetic data, linear encoders, optimizer.

The trainable model is deliberately small: one linear projection per
modality (weights plus bias), followed by row normalization and a cosine
similarity matrix. The losses only ever see that matrix, so a linear
encoder over class-structured synthetic inputs exercises every loss,
gradient, and metric while keeping full runs in seconds.

Batches follow the sampled-pair scheme: each batch row is a (video,
text) pair where the text is a designated positive of the video, drawn
uniformly from the candidates at or above the mining threshold (hard
positive sampling; disable it to always pair an item with itself). The
batch relevancy submatrix is gathered up front, once per batch, and the
loss is evaluated purely on batch-local data.

Everything is deterministic given the config seed: batch order, positive
sampling, parameter init, and single-threaded reductions, so repeated
runs produce bit-identical parameter trajectories.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .data import (
    DatasetBundle,
    FeatureMatrix,
    RelevancyMatrix,
    cosine_similarity,
    gather_batch_relevancy,
    l2_normalize,
    relevancy_from_labels,
)
from .exceptions import (
    DivergenceError,
    InvalidScheduleError,
    NumericalOverflowError,
    ShapeMismatchError,
)
from .losses import LossConfig, LOSS_NAMES, backprop_to_embeddings, compute_loss
from .metrics import RetrievalReport, evaluate
from .mining import (
    TEXT_TO_VIDEO,
    VIDEO_TO_TEXT,
    build_positive_sets,
    enumerate_triplets,
    in_batch_triplets,
)

TRIPLET_STRATEGIES = ("in_batch", "all_pairs", "hardest_negative")
OPTIMIZERS = ("adamw", "sgd")


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of the synthetic paired dataset generator."""

    n_items: int = 256
    n_verb_classes: int = 8
    n_noun_classes: int = 12
    raw_dim: int = 64
    noise_sigma: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.n_items < 2:
            raise ValueError(f"n_items must be >= 2, got {self.n_items}")
        if self.n_verb_classes < 2 or self.n_noun_classes < 2:
            raise ValueError("class counts must be >= 2")
        if self.raw_dim < 1:
            raise ValueError(f"raw_dim must be >= 1, got {self.raw_dim}")
        if self.noise_sigma < 0:
            raise ValueError(f"noise_sigma must be >= 0, got {self.noise_sigma}")


@dataclass(frozen=True)
class SyntheticDataset:
    """Raw (pre-encoder) paired features plus their label structure."""

    bundle: DatasetBundle
    verb_labels: tuple[frozenset, ...]
    noun_labels: tuple[frozenset, ...]


def generate_synthetic(spec: SyntheticSpec) -> SyntheticDataset:
    """Class-prototype data with soft relevancy from label overlap.

    Every item draws one verb and one noun class; each modality has its
    own prototype vector per class, and an item's raw vector is the sum
    of its two class prototypes plus Gaussian noise of scale
    ``noise_sigma``. Relevancy is the label-overlap matrix of the
    singleton label sets, so entries land exactly in {0, 0.5, 1}.
    Generation is reproducible from the seed alone.
    """
    rng = np.random.default_rng(spec.seed)
    verbs = rng.integers(0, spec.n_verb_classes, spec.n_items)
    nouns = rng.integers(0, spec.n_noun_classes, spec.n_items)
    proto = {
        side: (
            rng.standard_normal((spec.n_verb_classes, spec.raw_dim)),
            rng.standard_normal((spec.n_noun_classes, spec.raw_dim)),
        )
        for side in ("video", "text")
    }
    raw = {}
    for side in ("video", "text"):
        verb_proto, noun_proto = proto[side]
        noise = rng.standard_normal((spec.n_items, spec.raw_dim))
        raw[side] = verb_proto[verbs] + noun_proto[nouns] + spec.noise_sigma * noise
    verb_sets = [{int(v)} for v in verbs]
    noun_sets = [{int(n)} for n in nouns]
    relevancy = relevancy_from_labels(verb_sets, noun_sets)
    ids = tuple(f"item_{i:04d}" for i in range(spec.n_items))
    bundle = DatasetBundle(
        video_features=FeatureMatrix(raw["video"]),
        text_features=FeatureMatrix(raw["text"]),
        relevancy=relevancy,
        video_ids=ids,
        text_ids=ids,
    )
    return SyntheticDataset(
        bundle=bundle,
        verb_labels=tuple(frozenset(s) for s in verb_sets),
        noun_labels=tuple(frozenset(s) for s in noun_sets),
    )


def cosine_schedule(
    step: int,
    total_steps: int,
    warmup_steps: int,
    lr: float,
    lr_end: float,
) -> float:
    """Linear ramp from 0 to ``lr`` over warmup, then cosine decay to ``lr_end``."""
    if not (0 <= step <= total_steps):
        raise InvalidScheduleError(f"step {step} outside [0, {total_steps}]")
    if not (0 <= warmup_steps < total_steps):
        raise InvalidScheduleError(
            f"warmup_steps {warmup_steps} must lie in [0, total_steps={total_steps})"
        )
    if lr < 0 or lr_end < 0 or lr_end > lr:
        raise InvalidScheduleError(f"need 0 <= lr_end <= lr, got lr={lr}, lr_end={lr_end}")
    if warmup_steps > 0 and step < warmup_steps:
        return lr * step / warmup_steps
    progress = (step - warmup_steps) / (total_steps - warmup_steps)
    return lr_end + (lr - lr_end) * 0.5 * (1.0 + math.cos(math.pi * progress))


@dataclass(frozen=True)
class TrainConfig:
    """Full training recipe: loss choice, optimizer, and schedule."""

    loss: str = "sms"
    loss_config: LossConfig = field(default_factory=LossConfig)
    embed_dim: int = 256
    learning_rate: float = 2e-5
    lr_end: float = 1e-6
    warmup_epochs: int = 1
    total_epochs: int = 100
    batch_size: int = 64
    optimizer: str = "adamw"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    seed: int = 0
    hard_positive_sampling: bool = True
    triplet_strategy: str = "in_batch"
    relevance_threshold: float | None = None

    def __post_init__(self):
        if self.loss not in LOSS_NAMES:
            raise ValueError(f"loss must be one of {LOSS_NAMES}, got {self.loss!r}")
        if self.triplet_strategy not in TRIPLET_STRATEGIES:
            raise ValueError(
                f"triplet_strategy must be one of {TRIPLET_STRATEGIES}, "
                f"got {self.triplet_strategy!r}"
            )
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        if self.batch_size < 2:
            raise ValueError(f"batch_size must be >= 2, got {self.batch_size}")
        if self.embed_dim < 1:
            raise ValueError(f"embed_dim must be >= 1, got {self.embed_dim}")
        if self.total_epochs < 1:
            raise ValueError(f"total_epochs must be >= 1, got {self.total_epochs}")
        # lr_end = lr = 0 is allowed so a zero learning rate stays a valid
        # null-update configuration.
        if self.learning_rate < 0 or self.lr_end < 0 or self.lr_end > self.learning_rate:
            raise ValueError(
                f"need 0 <= lr_end <= learning_rate, got "
                f"lr={self.learning_rate}, lr_end={self.lr_end}"
            )
        if not (0 <= self.warmup_epochs < self.total_epochs):
            raise ValueError(
                f"warmup_epochs must lie in [0, total_epochs), got {self.warmup_epochs}"
            )


_LOSS_CONFIG_KEYS = tuple(f.name for f in fields(LossConfig))


def train_config_to_dict(cfg: TrainConfig) -> dict:
    """Flatten a config (loss hyperparameters inline) for JSON storage."""
    out = asdict(cfg)
    out.update(out.pop("loss_config"))
    return out


def train_config_from_dict(d: dict) -> TrainConfig:
    """Inverse of :func:`train_config_to_dict`; unknown keys are rejected."""
    d = dict(d)
    loss_kwargs = {k: d.pop(k) for k in _LOSS_CONFIG_KEYS if k in d}
    known = {f.name for f in fields(TrainConfig)} - {"loss_config"}
    unknown = set(d) - known
    if unknown:
        raise ValueError(f"unknown training config keys: {sorted(unknown)}")
    return TrainConfig(loss_config=LossConfig(**loss_kwargs), **d)


@dataclass(frozen=True)
class EncoderParams:
    """Linear projection weights and biases for the two towers."""

    video_weight: np.ndarray
    video_bias: np.ndarray
    text_weight: np.ndarray
    text_bias: np.ndarray

    def __post_init__(self):
        for name in ("video_weight", "video_bias", "text_weight", "text_bias"):
            arr = np.array(getattr(self, name), dtype=np.float64, order="C", copy=True)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite entries")
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if self.video_weight.shape[1] != self.text_weight.shape[1]:
            raise ShapeMismatchError("video and text towers project to different dims")
        if self.video_bias.shape != (self.video_weight.shape[1],):
            raise ShapeMismatchError("video bias does not match projection dim")
        if self.text_bias.shape != (self.text_weight.shape[1],):
            raise ShapeMismatchError("text bias does not match projection dim")

    @property
    def embed_dim(self) -> int:
        return self.video_weight.shape[1]


def initialize_params(
    rng: np.random.Generator, video_dim: int, text_dim: int, embed_dim: int
) -> EncoderParams:
    return EncoderParams(
        video_weight=rng.standard_normal((video_dim, embed_dim)) / math.sqrt(video_dim),
        video_bias=np.zeros(embed_dim),
        text_weight=rng.standard_normal((text_dim, embed_dim)) / math.sqrt(text_dim),
        text_bias=np.zeros(embed_dim),
    )


def encode_features(
    params: EncoderParams, video_raw: np.ndarray, text_raw: np.ndarray
) -> tuple[FeatureMatrix, FeatureMatrix]:
    """Project raw inputs through both towers and row-normalize."""
    v = l2_normalize(FeatureMatrix(video_raw @ params.video_weight + params.video_bias))
    t = l2_normalize(FeatureMatrix(text_raw @ params.text_weight + params.text_bias))
    return v, t


class _AdamW:
    """Adam with decoupled weight decay over a dict of parameter arrays."""

    def __init__(self, params: dict, beta1: float, beta2: float, eps: float, weight_decay: float):
        self.beta1, self.beta2, self.eps, self.weight_decay = beta1, beta2, eps, weight_decay
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict, lr: float) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for key, g in grads.items():
            m = self.m[key]
            v = self.v[key]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            params[key] -= lr * (update + self.weight_decay * params[key])


class _SGD:
    """Plain gradient descent, weight decay applied decoupled."""

    def __init__(self, weight_decay: float):
        self.weight_decay = weight_decay

    def step(self, params: dict, grads: dict, lr: float) -> None:
        for key, g in grads.items():
            params[key] -= lr * (g + self.weight_decay * params[key])


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    mean_batch_loss: float
    mean_triple_loss: float
    learning_rate: float
    report: RetrievalReport

    def to_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "mean_batch_loss": self.mean_batch_loss,
            "mean_triple_loss": self.mean_triple_loss,
            "learning_rate": self.learning_rate,
            "report": self.report.to_dict(),
        }


@dataclass(frozen=True)
class TrainResult:
    params: EncoderParams
    history: tuple[EpochRecord, ...]

    @property
    def final_report(self) -> RetrievalReport:
        return self.history[-1].report


def _batch_loss(cfg: TrainConfig, s_v2t, s_t2v, batch_relevancy):
    loss_cfg = cfg.loss_config
    b = batch_relevancy.shape[0]
    triplets_v2t = triplets_t2v = None
    sets_v2t = sets_t2v = None
    if cfg.loss == "ms" or cfg.triplet_strategy != "in_batch":
        sets_v2t = build_positive_sets(batch_relevancy, loss_cfg.mining_threshold, VIDEO_TO_TEXT)
        sets_t2v = build_positive_sets(batch_relevancy, loss_cfg.mining_threshold, TEXT_TO_VIDEO)
    if cfg.loss != "ms":
        if cfg.triplet_strategy == "in_batch":
            triplets_v2t = in_batch_triplets(b, VIDEO_TO_TEXT)
            triplets_t2v = in_batch_triplets(b, TEXT_TO_VIDEO)
        else:
            sim_v2t = s_v2t if cfg.triplet_strategy == "hardest_negative" else None
            sim_t2v = s_t2v if cfg.triplet_strategy == "hardest_negative" else None
            triplets_v2t = enumerate_triplets(sets_v2t, cfg.triplet_strategy, sim_v2t)
            triplets_t2v = enumerate_triplets(sets_t2v, cfg.triplet_strategy, sim_t2v)
    return compute_loss(
        cfg.loss, s_v2t, s_t2v, batch_relevancy, loss_cfg,
        triplets_v2t=triplets_v2t, triplets_t2v=triplets_t2v,
        sets_v2t=sets_v2t, sets_t2v=sets_t2v,
    )


def train(
    bundle: DatasetBundle,
    cfg: TrainConfig,
    init: EncoderParams | None = None,
) -> TrainResult:
    """Fit the two projection towers on a paired dataset.

    ``init`` warm-starts from existing parameters (the schedule always
    restarts fresh). Raises :class:`DivergenceError` as soon as the loss
    or any parameter stops being finite. History carries, per epoch, the
    mean batch loss, the mean per-triple loss, the last applied learning
    rate, and a full-dataset retrieval report.
    """
    n = bundle.n_videos
    if bundle.n_texts != n:
        raise ShapeMismatchError(
            f"training needs paired items, got {n} videos and {bundle.n_texts} texts"
        )
    cfg.loss_config.check_relaxation(bundle.relevancy)
    rng = np.random.default_rng(cfg.seed)
    raw_v = bundle.video_features.data
    raw_t = bundle.text_features.data
    if init is None:
        start = initialize_params(rng, raw_v.shape[1], raw_t.shape[1], cfg.embed_dim)
    else:
        if init.video_weight.shape[0] != raw_v.shape[1] or init.text_weight.shape[0] != raw_t.shape[1]:
            raise ShapeMismatchError("init parameters do not match the raw feature dims")
        start = init
    params = {
        "video_weight": np.array(start.video_weight),
        "video_bias": np.array(start.video_bias),
        "text_weight": np.array(start.text_weight),
        "text_bias": np.array(start.text_bias),
    }
    if cfg.optimizer == "adamw":
        opt = _AdamW(params, cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay)
    else:
        opt = _SGD(cfg.weight_decay)

    positive_candidates = None
    if cfg.hard_positive_sampling:
        sets = build_positive_sets(
            bundle.relevancy, cfg.loss_config.mining_threshold, VIDEO_TO_TEXT
        )
        positive_candidates = sets.positives

    batch = cfg.batch_size
    full, rem = divmod(n, batch)
    steps_per_epoch = full + (1 if rem >= 2 else 0)
    if steps_per_epoch == 0:
        raise ValueError("batch size leaves no usable batch (need >= 2 items)")
    total_steps = steps_per_epoch * cfg.total_epochs
    warmup_steps = steps_per_epoch * cfg.warmup_epochs

    history = []
    step = 0
    lr = 0.0
    for epoch in range(cfg.total_epochs):
        order = rng.permutation(n)
        epoch_losses = []
        epoch_triple_losses = []
        for begin in range(0, n, batch):
            rows = order[begin : begin + batch]
            if rows.size < 2:
                continue  # a lone item has no in-batch negatives
            if positive_candidates is not None:
                text_rows = np.empty(rows.size, dtype=np.int64)
                for a, i in enumerate(rows):
                    cands = positive_candidates[i]
                    text_rows[a] = cands[rng.integers(cands.size)] if cands.size else i
            else:
                text_rows = rows
            batch_relevancy = gather_batch_relevancy(bundle.relevancy, rows, text_rows)
            vf, tf = encode_features(_params_view(params), raw_v[rows], raw_t[text_rows])
            s_v2t = cosine_similarity(vf, tf)
            s_t2v = cosine_similarity(tf, vf)
            try:
                result = _batch_loss(cfg, s_v2t, s_t2v, batch_relevancy)
            except NumericalOverflowError as exc:
                raise DivergenceError(f"loss became non-finite at step {step}") from exc
            lr = cosine_schedule(step, total_steps, warmup_steps, cfg.learning_rate, cfg.lr_end)
            grads = _parameter_gradients(result, vf, tf, raw_v[rows], raw_t[text_rows])
            opt.step(params, grads, lr)
            step += 1
            if not all(np.all(np.isfinite(p)) for p in params.values()):
                raise DivergenceError(f"parameters became non-finite at step {step}")
            epoch_losses.append(result.value)
            epoch_triple_losses.append(result.mean_value)
        vf, tf = encode_features(_params_view(params), raw_v, raw_t)
        report = evaluate(cosine_similarity(vf, tf), bundle.relevancy, cfg.relevance_threshold)
        history.append(
            EpochRecord(
                epoch=epoch,
                mean_batch_loss=float(np.mean(epoch_losses)) if epoch_losses else 0.0,
                mean_triple_loss=float(np.mean(epoch_triple_losses)) if epoch_triple_losses else 0.0,
                learning_rate=lr,
                report=report,
            )
        )
    return TrainResult(params=_params_view(params), history=tuple(history))


def _params_view(params: dict) -> EncoderParams:
    return EncoderParams(
        video_weight=params["video_weight"],
        video_bias=params["video_bias"],
        text_weight=params["text_weight"],
        text_bias=params["text_bias"],
    )


def _parameter_gradients(result, vf, tf, raw_v_batch, raw_t_batch) -> dict:
    b, dim = vf.data.shape
    grad_v = np.zeros((b, dim))
    grad_t = np.zeros((b, dim))
    if result.grad_s_v2t is not None:
        gv, gt = backprop_to_embeddings(result.grad_s_v2t, vf, tf)
        grad_v += gv
        grad_t += gt
    if result.grad_s_t2v is not None:
        gt2, gv2 = backprop_to_embeddings(result.grad_s_t2v, tf, vf)
        grad_t += gt2
        grad_v += gv2
    return {
        "video_weight": raw_v_batch.T @ grad_v,
        "video_bias": grad_v.sum(axis=0),
        "text_weight": raw_t_batch.T @ grad_t,
        "text_bias": grad_t.sum(axis=0),
    }


def descend_once(
    bundle: DatasetBundle, cfg: TrainConfig, lr: float
) -> tuple[float, float, float]:
    """One plain gradient step on the first batch; returns (before, after, grad_norm).

    Diagnostic helper for first-order sanity checks: with a small enough
    step the loss on the same batch must not increase, and must strictly
    decrease whenever the gradient is nonzero.
    """
    rng = np.random.default_rng(cfg.seed)
    raw_v = bundle.video_features.data
    raw_t = bundle.text_features.data
    params = initialize_params(rng, raw_v.shape[1], raw_t.shape[1], cfg.embed_dim)
    state = {
        "video_weight": np.array(params.video_weight),
        "video_bias": np.array(params.video_bias),
        "text_weight": np.array(params.text_weight),
        "text_bias": np.array(params.text_bias),
    }
    rows = np.arange(min(cfg.batch_size, bundle.n_videos))
    batch_relevancy = gather_batch_relevancy(bundle.relevancy, rows, rows)

    def batch_value():
        vf, tf = encode_features(_params_view(state), raw_v[rows], raw_t[rows])
        s1 = cosine_similarity(vf, tf)
        s2 = cosine_similarity(tf, vf)
        return _batch_loss(cfg, s1, s2, batch_relevancy), vf, tf

    result, vf, tf = batch_value()
    before = result.value
    grads = _parameter_gradients(result, vf, tf, raw_v[rows], raw_t[rows])
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    for key, g in grads.items():
        state[key] -= lr * g
    after = batch_value()[0].value
    return before, after, norm
