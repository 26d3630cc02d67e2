"""One-vs-rest open-world engine.

Each known category gets a binary head trained against every other
known sample plus negatives synthesized around its own samples. At
inference a sample is open when every head's logit is strictly
negative; otherwise it is routed to the C-way known classifier. The
softmax-threshold baselines (with and without synthesized negatives)
live here too, sharing the known classifier's fitting loop.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import EmbeddingDataset, category_stats
from .errors import FormatError, ShapeError, ValidationError
from .known import (
    KnownClassifier,
    KnownTrainConfig,
    fit_softmax_classifier,
    known_from_dict,
    known_to_dict,
    predict_known,
    softmax,
)
from .nn import (
    AdamState,
    Mlp,
    MlpSpec,
    adam_step,
    init_params,
    mlp_forward,
    model_from_dict,
    model_to_dict,
    write_json_atomic,
)
from .sampler import (
    AnsConfig,
    add_param_grads,
    generate_negatives,
    open_loss,
    rest_loss,
    syn_loss,
)

log = logging.getLogger(__name__)

OPEN_LABEL = -1


@dataclass(frozen=True)
class OvrTrainConfig:
    """Hyperparameters for the one-vs-rest heads. ``epochs`` of None
    resolves to min(C, 20) at training time."""

    hidden_dims: tuple[int, ...] = (256, 64)
    learning_rate: float = 1e-3
    epochs: int | None = None
    batch_size: int = 64
    dropout: float = 0.3
    seed: int = 0
    max_workers: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if not self.hidden_dims or any(h < 1 for h in self.hidden_dims):
            raise ValidationError(f"bad hidden_dims {self.hidden_dims}")
        if self.learning_rate <= 0:
            raise ValidationError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.epochs is not None and self.epochs < 1:
            raise ValidationError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValidationError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0 <= self.dropout < 1:
            raise ValidationError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.max_workers is not None and self.max_workers < 1:
            raise ValidationError(f"max_workers must be >= 1, got {self.max_workers}")

    def resolved_epochs(self, num_categories: int) -> int:
        if self.epochs is not None:
            return self.epochs
        return min(num_categories, 20)

    def to_dict(self) -> dict:
        return {
            "hidden_dims": list(self.hidden_dims),
            "learning_rate": self.learning_rate,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "dropout": self.dropout,
            "seed": self.seed,
            "max_workers": self.max_workers,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "OvrTrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in obj.items() if k in known})


@dataclass(frozen=True)
class TraceRow:
    epoch: int
    rest_loss: float
    syn_loss: float
    open_loss: float
    val_metric: float

    def to_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "rest_loss": self.rest_loss,
            "syn_loss": self.syn_loss,
            "open_loss": self.open_loss,
            "val_metric": self.val_metric,
        }


@dataclass
class TrainTrace:
    """Per-head, per-epoch loss and validation records."""

    per_head: list[list[TraceRow]]

    def to_dict(self) -> dict:
        return {"heads": [[row.to_dict() for row in rows] for rows in self.per_head]}


@dataclass
class OpenWorldModel:
    known: KnownClassifier
    heads: list[Mlp]
    ans_config: AnsConfig
    vocab: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.heads) != len(self.vocab):
            raise ValidationError(
                f"{len(self.heads)} heads for {len(self.vocab)} categories"
            )
        dims = {h.spec.input_dim for h in self.heads}
        if len(dims) > 1:
            raise ValidationError(f"heads disagree on input dim: {sorted(dims)}")
        if self.known.vocab != self.vocab:
            raise ValidationError("known classifier vocab does not match model vocab")


def _balanced_val_metric(head: Mlp, val: EmbeddingDataset, category: int) -> float:
    logits, _ = mlp_forward(head, val.features.astype(np.float64))
    fires = logits[:, 0] >= 0
    pos = val.labels == category
    sides = []
    if pos.any():
        sides.append(float(fires[pos].mean()))
    if (~pos).any():
        sides.append(float((~fires[~pos]).mean()))
    return float(np.mean(sides))


def train_single_head(
    train: EmbeddingDataset,
    val: EmbeddingDataset,
    category: int,
    ans_cfg: AnsConfig,
    cfg: OvrTrainConfig,
) -> tuple[Mlp, list[TraceRow]]:
    """Fit one binary head; deterministic given (cfg.seed, category).

    Every epoch is one shuffled pass over the known negatives in
    balanced batches: ``batch_size`` negatives against as many fresh
    positives (resampled with replacement when the category is small),
    plus one synthesized negative per positive unless mode is none.
    """
    positives = train.features_for(category).astype(np.float64)
    if positives.shape[0] < 2:
        raise ValidationError(
            f"head {category} needs >= 2 positive samples, got {positives.shape[0]}"
        )
    negatives = train.features[train.labels != category].astype(np.float64)
    if negatives.shape[0] == 0:
        raise ValidationError(f"head {category} has no known negatives")
    cov_diag = category_stats(train, category).var

    root = np.random.SeedSequence(cfg.seed, spawn_key=(category,))
    init_ss, shuffle_ss, pick_ss, gen_ss, drop_ss = root.spawn(5)
    spec = MlpSpec(
        (train.dim, *cfg.hidden_dims, 1), dropout_rate=cfg.dropout
    )
    head = Mlp(spec=spec, params=init_params(spec, np.random.default_rng(init_ss)))
    state = AdamState.for_params(head.params)
    shuffle_rng = np.random.default_rng(shuffle_ss)
    pick_rng = np.random.default_rng(pick_ss)
    gen_rng = np.random.default_rng(gen_ss)
    drop_rng = np.random.default_rng(drop_ss)

    b = cfg.batch_size
    use_syn = ans_cfg.mode != "none"
    rows: list[TraceRow] = []
    for epoch in range(cfg.resolved_epochs(train.num_categories)):
        order = shuffle_rng.permutation(negatives.shape[0])
        rest_sum = syn_sum = 0.0
        steps = 0
        for start in range(0, negatives.shape[0], b):
            neg_batch = negatives[order[start : start + b]]
            pick = pick_rng.choice(
                positives.shape[0], size=min(b, len(neg_batch)),
                replace=positives.shape[0] < b,
            )
            pos_batch = positives[pick]

            rest, rest_grads = rest_loss(
                head, pos_batch, neg_batch,
                train_mode=cfg.dropout > 0, seed=int(drop_rng.integers(2**62)),
            )
            if use_syn:
                batch = generate_negatives(
                    head, pos_batch, cov_diag, ans_cfg,
                    seed=int(gen_rng.integers(2**62)),
                )
                syn, _, syn_grads = syn_loss(
                    head, batch.negatives,
                    train_mode=cfg.dropout > 0, seed=int(drop_rng.integers(2**62)),
                )
                grads = add_param_grads(rest_grads, syn_grads, scale_b=ans_cfg.lam)
            else:
                syn = 0.0
                grads = rest_grads
            adam_step(state, head.params, grads, cfg.learning_rate)
            rest_sum += rest
            syn_sum += syn
            steps += 1

        rest_mean = rest_sum / steps
        syn_mean = syn_sum / steps
        rows.append(
            TraceRow(
                epoch=epoch,
                rest_loss=rest_mean,
                syn_loss=syn_mean,
                open_loss=open_loss(rest_mean, syn_mean, ans_cfg.lam if use_syn else 0.0),
                val_metric=_balanced_val_metric(head, val, category),
            )
        )
        log.debug("head %d epoch %d rest %.4f syn %.4f", category, epoch, rest_mean, syn_mean)
    return head, rows


def _worker_count(cfg: OvrTrainConfig, num_heads: int) -> int:
    limit = os.environ.get("ANS_THREADS")
    cap = int(limit) if limit else (os.cpu_count() or 1)
    if cap < 1:
        raise ValidationError(f"ANS_THREADS must be >= 1, got {cap}")
    if cfg.max_workers is not None:
        cap = min(cap, cfg.max_workers)
    return max(1, min(num_heads, cap))


def train_ovr(
    train: EmbeddingDataset,
    val: EmbeddingDataset,
    known: KnownClassifier,
    ans_cfg: AnsConfig | None = None,
    cfg: OvrTrainConfig | None = None,
) -> tuple[OpenWorldModel, TrainTrace]:
    """Train all C heads independently (and possibly in parallel)."""
    ans_cfg = ans_cfg or AnsConfig()
    cfg = cfg or OvrTrainConfig()
    if train.vocab != val.vocab or train.vocab != known.vocab:
        raise ValidationError("train, val, and known classifier vocab differ")
    if (train.labels < 0).any() or (val.labels < 0).any():
        raise ValidationError("open-labeled samples in a known-only training split")
    if known.model.spec.input_dim != train.dim:
        raise ShapeError(
            f"known classifier expects dim {known.model.spec.input_dim}, "
            f"train has {train.dim}"
        )

    c = train.num_categories
    workers = _worker_count(cfg, c)
    if workers == 1:
        results = [train_single_head(train, val, m, ans_cfg, cfg) for m in range(c)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(
                pool.map(lambda m: train_single_head(train, val, m, ans_cfg, cfg), range(c))
            )
    heads = [head for head, _ in results]
    trace = TrainTrace(per_head=[rows for _, rows in results])
    model = OpenWorldModel(known=known, heads=heads, ans_config=ans_cfg, vocab=train.vocab)
    return model, trace


def head_logits(model: OpenWorldModel, batch: np.ndarray) -> np.ndarray:
    """N x C matrix of raw head scores."""
    batch = np.asarray(batch, dtype=np.float64)
    cols = [mlp_forward(h, batch)[0][:, 0] for h in model.heads]
    return np.stack(cols, axis=1)


def infer(model: OpenWorldModel, batch: np.ndarray) -> np.ndarray:
    """Open iff every head logit is strictly negative, else the C-way
    argmax of the known classifier."""
    logits = head_logits(model, batch)
    is_open = (logits < 0).all(axis=1)
    known_labels, _ = predict_known(model.known, batch)
    return np.where(is_open, OPEN_LABEL, known_labels).astype(np.int64)


def model_to_json_dict(model: OpenWorldModel) -> dict:
    return {
        "known": known_to_dict(model.known),
        "heads": [model_to_dict(h) for h in model.heads],
        "ans_config": model.ans_config.to_dict(),
        "vocab": list(model.vocab),
    }


def model_from_json_dict(obj: dict) -> OpenWorldModel:
    for key in ("known", "heads", "ans_config", "vocab"):
        if key not in obj:
            raise FormatError(f"open-world model JSON lacks {key!r}")
    if not isinstance(obj["heads"], list):
        raise FormatError("heads must be a list")
    return OpenWorldModel(
        known=known_from_dict(obj["known"]),
        heads=[model_from_dict(h) for h in obj["heads"]],
        ans_config=AnsConfig.from_dict(obj["ans_config"]),
        vocab=tuple(obj["vocab"]),
    )


def save_open_world(model: OpenWorldModel, path: str | Path, extra: dict | None = None) -> None:
    obj = model_to_json_dict(model)
    if extra:
        obj.update(extra)
    write_json_atomic(obj, Path(path))


def load_open_world(path: str | Path) -> OpenWorldModel:
    try:
        obj = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON: {exc}") from None
    return model_from_json_dict(obj)


@dataclass
class MspModel:
    """Softmax-threshold baseline; the extra class, when trained, holds
    pooled synthesized negatives."""

    model: Mlp
    vocab: tuple[str, ...]
    with_negatives: bool


def train_msp(
    train: EmbeddingDataset,
    val: EmbeddingDataset,
    with_negatives: bool,
    cfg: KnownTrainConfig | None = None,
    ans_cfg: AnsConfig | None = None,
) -> MspModel:
    """Train the maximum-softmax-probability baseline.

    With negatives, one synthetic sample per training row is pooled into
    an extra class; they are drawn with the shell projection but no
    ascent, so no partially trained head is needed.
    """
    cfg = cfg or KnownTrainConfig()
    if (train.labels < 0).any() or (val.labels < 0).any():
        raise ValidationError("open-labeled samples in a known-only training split")
    c = train.num_categories
    if c < 2:
        raise ValidationError("softmax over a single category is degenerate")

    train_x = train.features.astype(np.float64)
    train_y = train.labels.astype(np.int64)
    num_classes = c
    if with_negatives:
        ans_cfg = ans_cfg or AnsConfig(mode="project")
        if ans_cfg.mode in ("none", "ascend"):
            ans_cfg = dataclasses.replace(ans_cfg, mode="project")
        chunks = []
        for m in range(c):
            anchors = train.features_for(m).astype(np.float64)
            if anchors.shape[0] == 0:
                raise ValidationError(f"category {m} has no training samples")
            cov_diag = category_stats(train, m).var
            batch = generate_negatives(
                None, anchors, cov_diag, ans_cfg,
                seed=np.random.SeedSequence(cfg.seed, spawn_key=(m, 1)),
            )
            chunks.append(batch.negatives)
        synth = np.concatenate(chunks)
        train_x = np.concatenate([train_x, synth])
        train_y = np.concatenate([train_y, np.full(len(synth), c, dtype=np.int64)])
        num_classes = c + 1

    model = fit_softmax_classifier(
        train_x, train_y, val.features, val.labels, num_classes, cfg
    )
    return MspModel(model=model, vocab=train.vocab, with_negatives=with_negatives)


def predict_msp(msp: MspModel, batch: np.ndarray) -> np.ndarray:
    """Open when the max probability is under 0.5, or (with negatives)
    when the argmax lands on the extra class."""
    logits, _ = mlp_forward(msp.model, np.asarray(batch, dtype=np.float64))
    probs = softmax(logits)
    top = np.argmax(probs, axis=1)
    max_prob = probs[np.arange(len(top)), top]
    is_open = max_prob < 0.5
    if msp.with_negatives:
        is_open |= top == len(msp.vocab)
    return np.where(is_open, OPEN_LABEL, top).astype(np.int64)
