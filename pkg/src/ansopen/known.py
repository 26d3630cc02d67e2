"""The C-way known-category classifier over frozen features.

A single-hidden-layer softmax classifier trained with early stopping on
validation accuracy and step-down learning-rate decay on plateau. The
fitting loop is shared with the (C+1)-way softmax baseline, which is
why it works on bare arrays rather than datasets.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import EmbeddingDataset
from .errors import FormatError, NumericError, ValidationError
from .nn import (
    AdamState,
    Mlp,
    MlpSpec,
    adam_step,
    init_params,
    load_model,
    mlp_backward,
    mlp_forward,
    model_from_dict,
    model_to_dict,
    save_model,
    write_json_atomic,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class KnownTrainConfig:
    """Hyperparameters for softmax-classifier fitting."""

    hidden_dim: int = 768
    learning_rate: float = 1e-3
    max_epochs: int = 100
    patience: int = 10
    lr_decay: float = 0.5
    lr_patience: int = 5
    batch_size: int = 64
    dropout: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.hidden_dim < 1:
            raise ValidationError(f"hidden_dim must be >= 1, got {self.hidden_dim}")
        if self.learning_rate <= 0:
            raise ValidationError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.max_epochs < 1 or self.patience < 1 or self.lr_patience < 1:
            raise ValidationError("epoch and patience counts must be >= 1")
        if not 0 < self.lr_decay <= 1:
            raise ValidationError(f"lr_decay must be in (0, 1], got {self.lr_decay}")
        if self.batch_size < 1:
            raise ValidationError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0 <= self.dropout < 1:
            raise ValidationError(f"dropout must be in [0, 1), got {self.dropout}")

    def to_dict(self) -> dict:
        return {
            "hidden_dim": self.hidden_dim,
            "learning_rate": self.learning_rate,
            "max_epochs": self.max_epochs,
            "patience": self.patience,
            "lr_decay": self.lr_decay,
            "lr_patience": self.lr_patience,
            "batch_size": self.batch_size,
            "dropout": self.dropout,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "KnownTrainConfig":
        fields = set(cls.__dataclass_fields__)
        return cls(**{k: v for k, v in obj.items() if k in fields})


@dataclass
class KnownClassifier:
    model: Mlp
    vocab: tuple[str, ...]

    @property
    def num_categories(self) -> int:
        return len(self.vocab)


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy_loss(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean negative log softmax likelihood and its exact logit gradient."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ValidationError(
            f"need N x C logits with N labels, got {logits.shape} and {labels.shape}"
        )
    if not np.isfinite(logits).all():
        raise NumericError("logits contain non-finite values")
    n, c = logits.shape
    if labels.min() < 0 or labels.max() >= c:
        raise ValidationError(f"labels must lie in [0, {c - 1}]")

    shifted = logits - logits.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(shifted).sum(axis=1))
    loss = float((logsumexp - shifted[np.arange(n), labels]).mean())
    grad = softmax(logits)
    grad[np.arange(n), labels] -= 1.0
    return loss, grad / n


def _accuracy(model: Mlp, features: np.ndarray, labels: np.ndarray) -> float:
    logits, _ = mlp_forward(model, features)
    return float((np.argmax(logits, axis=1) == labels).mean())


def fit_softmax_classifier(
    train_x: np.ndarray,
    train_y: np.ndarray,
    val_x: np.ndarray,
    val_y: np.ndarray,
    num_classes: int,
    cfg: KnownTrainConfig,
) -> Mlp:
    """Adam-fit a (d -> hidden -> num_classes) softmax net.

    Checkpoints the best validation accuracy (ties broken by lower train
    loss), stops after ``patience`` epochs without a new best, and halves
    the learning rate on ``lr_patience``-epoch plateaus.
    """
    train_x = np.asarray(train_x, dtype=np.float64)
    val_x = np.asarray(val_x, dtype=np.float64)
    train_y = np.asarray(train_y, dtype=np.int64)
    val_y = np.asarray(val_y, dtype=np.int64)
    n, d = train_x.shape

    spec = MlpSpec((d, cfg.hidden_dim, num_classes), dropout_rate=cfg.dropout)
    init_ss, shuffle_ss, drop_ss = np.random.SeedSequence(cfg.seed).spawn(3)
    model = Mlp(spec=spec, params=init_params(spec, np.random.default_rng(init_ss)))
    shuffle_rng = np.random.default_rng(shuffle_ss)
    drop_rng = np.random.default_rng(drop_ss)
    state = AdamState.for_params(model.params)

    lr = cfg.learning_rate
    best_acc, best_loss, best_params = -1.0, np.inf, model.params.copy()
    stale = plateau = 0
    train_drop = cfg.dropout > 0
    for epoch in range(cfg.max_epochs):
        order = shuffle_rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            rows = order[start : start + cfg.batch_size]
            logits, cache = mlp_forward(
                model, train_x[rows], train_mode=train_drop,
                seed=int(drop_rng.integers(2**63)),
            )
            loss, grad_logits = cross_entropy_loss(logits, train_y[rows])
            bundle = mlp_backward(cache, grad_logits)
            adam_step(state, model.params, bundle.param_grads, lr)
            epoch_loss += loss * len(rows)
        epoch_loss /= n

        val_acc = _accuracy(model, val_x, val_y)
        improved = val_acc > best_acc
        if improved or (val_acc == best_acc and epoch_loss < best_loss):
            best_acc, best_loss, best_params = val_acc, epoch_loss, model.params.copy()
        if improved:
            stale = plateau = 0
        else:
            stale += 1
            plateau += 1
        log.debug("epoch %d loss %.4f val_acc %.4f lr %.2e", epoch, epoch_loss, val_acc, lr)
        if stale >= cfg.patience:
            break
        if plateau >= cfg.lr_patience:
            lr *= cfg.lr_decay
            plateau = 0
    return Mlp(spec=spec, params=best_params)


def train_known(
    train: EmbeddingDataset,
    val: EmbeddingDataset,
    cfg: KnownTrainConfig | None = None,
) -> KnownClassifier:
    """Train the C-way classifier on known-only splits."""
    cfg = cfg or KnownTrainConfig()
    if train.vocab != val.vocab:
        raise ValidationError("train and val vocab differ")
    if (train.labels < 0).any() or (val.labels < 0).any():
        raise ValidationError("open-labeled samples in a known-only training split")
    c = train.num_categories
    if c < 2:
        raise ValidationError("softmax over a single category is degenerate")
    counts = train.category_counts()
    empty = np.nonzero(counts == 0)[0]
    if empty.size:
        raise ValidationError(f"category {int(empty[0])} has no training samples")

    model = fit_softmax_classifier(
        train.features, train.labels, val.features, val.labels, c, cfg
    )
    return KnownClassifier(model=model, vocab=train.vocab)


def predict_known(clf: KnownClassifier, batch: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Argmax labels and full softmax probabilities, ties to lower index."""
    logits, _ = mlp_forward(clf.model, np.asarray(batch, dtype=np.float64))
    probs = softmax(logits)
    return np.argmax(probs, axis=1), probs


def known_to_dict(clf: KnownClassifier) -> dict:
    obj = model_to_dict(clf.model)
    obj["vocab"] = list(clf.vocab)
    return obj


def known_from_dict(obj: dict) -> KnownClassifier:
    vocab = obj.get("vocab")
    if not isinstance(vocab, list) or not vocab:
        raise FormatError("known classifier JSON lacks a vocab list")
    clf = KnownClassifier(model=model_from_dict(obj), vocab=tuple(vocab))
    if clf.model.spec.output_dim != len(vocab):
        raise FormatError(
            f"model output width {clf.model.spec.output_dim} does not match "
            f"{len(vocab)} vocab entries"
        )
    return clf


def save_known(clf: KnownClassifier, path: str | Path, extra: dict | None = None) -> None:
    obj = known_to_dict(clf)
    if extra:
        obj.update(extra)
    write_json_atomic(obj, Path(path))


def load_known(path: str | Path) -> KnownClassifier:
    try:
        obj = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON: {exc}") from None
    return known_from_dict(obj)
