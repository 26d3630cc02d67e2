"""Minimal feed-forward network with hand-written forward/backward passes.

Provides exact gradients with respect to both parameters and inputs, an
Adam optimizer, and a JSON serialization whose floats survive a
round-trip bit-exactly. All math runs in float64.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, NumericError, ShapeError, ValidationError

ACTIVATIONS = ("relu",)


@dataclass(frozen=True)
class MlpSpec:
    """Architecture description: layer widths, activation, dropout.

    ``layer_dims`` lists every width from input to output, so a plain
    linear model is ``(d, 1)`` and a two-hidden-layer net is
    ``(d, 256, 64, 1)``. Dropout applies after the activation of each
    hidden layer (inverted scaling, so evaluation needs no rescale).
    """

    layer_dims: tuple[int, ...]
    activation: str = "relu"
    dropout_rate: float = 0.0

    def __post_init__(self) -> None:
        dims = tuple(int(d) for d in self.layer_dims)
        object.__setattr__(self, "layer_dims", dims)
        if len(dims) < 2:
            raise ValidationError(f"need at least 2 layer dims, got {dims}")
        if any(d < 1 for d in dims):
            raise ValidationError(f"all layer dims must be >= 1, got {dims}")
        if self.activation not in ACTIVATIONS:
            raise ValidationError(f"unsupported activation {self.activation!r}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValidationError(
                f"dropout_rate must be in [0, 1), got {self.dropout_rate}"
            )

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def output_dim(self) -> int:
        return self.layer_dims[-1]

    @property
    def num_layers(self) -> int:
        return len(self.layer_dims) - 1


@dataclass
class MlpParams:
    """Per-layer weight matrices (out x in) and bias vectors (out,)."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def validate(self, spec: MlpSpec) -> None:
        if len(self.weights) != spec.num_layers or len(self.biases) != spec.num_layers:
            raise ShapeError(
                f"expected {spec.num_layers} layers, got "
                f"{len(self.weights)} weights / {len(self.biases)} biases"
            )
        for idx, (w, b) in enumerate(zip(self.weights, self.biases)):
            want = (spec.layer_dims[idx + 1], spec.layer_dims[idx])
            if w.shape != want:
                raise ShapeError(f"layer {idx} weight shape {w.shape}, expected {want}")
            if b.shape != (want[0],):
                raise ShapeError(f"layer {idx} bias shape {b.shape}, expected ({want[0]},)")
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise NumericError(f"layer {idx} has non-finite parameters")

    def copy(self) -> "MlpParams":
        return MlpParams(
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )


@dataclass
class Mlp:
    """A network: architecture spec plus concrete parameters."""

    spec: MlpSpec
    params: MlpParams


@dataclass
class ForwardCache:
    """Everything the backward pass needs from one forward call."""

    model: Mlp
    inputs: list[np.ndarray]  # input to each linear layer
    preacts: list[np.ndarray]  # pre-activation of each layer
    masks: list[np.ndarray | None]  # dropout mask per hidden layer (scaled)
    batch_shape: tuple[int, int]


@dataclass
class GradientBundle:
    """Gradients w.r.t. parameters and w.r.t. the input batch."""

    param_grads: MlpParams
    input_grads: np.ndarray


def init_params(spec: MlpSpec, seed: int | np.random.Generator = 0) -> MlpParams:
    """Seeded Glorot-uniform weights (+-sqrt(6/(fan_in+fan_out))), zero biases."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(spec.layer_dims[:-1], spec.layer_dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights=weights, biases=biases)


def make_mlp(spec: MlpSpec, seed: int | np.random.Generator = 0) -> Mlp:
    return Mlp(spec=spec, params=init_params(spec, seed))


def mlp_forward(
    model: Mlp,
    batch: np.ndarray,
    train_mode: bool = False,
    seed: int = 0,
) -> tuple[np.ndarray, ForwardCache]:
    """Run the network on a batch of row vectors.

    With ``train_mode`` off the result is deterministic given (params,
    batch); with it on, dropout masks are drawn from ``seed`` so the same
    seed reproduces the same masks bit for bit.
    """
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 2:
        raise ShapeError(f"batch must be 2-D, got shape {batch.shape}")
    spec = model.spec
    if batch.shape[1] != spec.input_dim:
        raise ShapeError(
            f"batch has {batch.shape[1]} columns, model expects {spec.input_dim}"
        )
    if not np.isfinite(batch).all():
        raise NumericError("batch contains non-finite values")
    model.params.validate(spec)

    rng = np.random.default_rng(seed) if train_mode and spec.dropout_rate > 0 else None
    keep = 1.0 - spec.dropout_rate

    a = batch
    inputs: list[np.ndarray] = []
    preacts: list[np.ndarray] = []
    masks: list[np.ndarray | None] = []
    for idx in range(spec.num_layers):
        inputs.append(a)
        z = a @ model.params.weights[idx].T + model.params.biases[idx]
        preacts.append(z)
        if idx < spec.num_layers - 1:
            a = np.maximum(z, 0.0)
            if rng is not None:
                mask = (rng.random(a.shape) >= spec.dropout_rate) / keep
                a = a * mask
                masks.append(mask)
            else:
                masks.append(None)
    logits = preacts[-1]
    cache = ForwardCache(
        model=model,
        inputs=inputs,
        preacts=preacts,
        masks=masks,
        batch_shape=batch.shape,
    )
    return logits, cache


def mlp_backward(cache: ForwardCache, upstream_grad: np.ndarray) -> GradientBundle:
    """Exact gradients of sum(logits * upstream_grad) for the cached forward."""
    spec = cache.model.spec
    upstream = np.asarray(upstream_grad, dtype=np.float64)
    want = (cache.batch_shape[0], spec.output_dim)
    if upstream.shape != want:
        raise ShapeError(f"upstream grad shape {upstream.shape}, expected {want}")

    weights = cache.model.params.weights
    w_grads: list[np.ndarray] = [None] * spec.num_layers  # type: ignore[list-item]
    b_grads: list[np.ndarray] = [None] * spec.num_layers  # type: ignore[list-item]

    g = upstream
    for idx in reversed(range(spec.num_layers)):
        w_grads[idx] = g.T @ cache.inputs[idx]
        b_grads[idx] = g.sum(axis=0)
        g = g @ weights[idx]
        if idx > 0:
            mask = cache.masks[idx - 1]
            if mask is not None:
                g = g * mask
            g = g * (cache.preacts[idx - 1] > 0)
    return GradientBundle(
        param_grads=MlpParams(weights=w_grads, biases=b_grads),
        input_grads=g,
    )


@dataclass
class AdamState:
    """First/second moment accumulators plus the step counter."""

    m_weights: list[np.ndarray]
    m_biases: list[np.ndarray]
    v_weights: list[np.ndarray]
    v_biases: list[np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: MlpParams, beta1: float = 0.9,
                   beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        return cls(
            m_weights=[np.zeros_like(w) for w in params.weights],
            m_biases=[np.zeros_like(b) for b in params.biases],
            v_weights=[np.zeros_like(w) for w in params.weights],
            v_biases=[np.zeros_like(b) for b in params.biases],
            beta1=beta1,
            beta2=beta2,
            eps=eps,
        )


def adam_step(
    state: AdamState,
    params: MlpParams,
    grads: MlpParams,
    lr: float,
) -> tuple[AdamState, MlpParams]:
    """One bias-corrected Adam update, in place. Refuses non-finite grads."""
    if lr <= 0:
        raise ValidationError(f"learning rate must be positive, got {lr}")
    if len(grads.weights) != len(params.weights):
        raise ShapeError("gradient layer count does not match parameters")
    for gw, gb in zip(grads.weights, grads.biases):
        if not (np.isfinite(gw).all() and np.isfinite(gb).all()):
            raise NumericError("non-finite gradient; update refused")

    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1**t
    corr2 = 1.0 - b2**t
    for idx in range(len(params.weights)):
        for p, g, m, v in (
            (params.weights[idx], grads.weights[idx],
             state.m_weights[idx], state.v_weights[idx]),
            (params.biases[idx], grads.biases[idx],
             state.m_biases[idx], state.v_biases[idx]),
        ):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * np.square(g)
            p -= lr * (m / corr1) / (np.sqrt(v / corr2) + state.eps)
    return state, params


def model_to_dict(model: Mlp) -> dict:
    return {
        "spec": {
            "layer_dims": list(model.spec.layer_dims),
            "activation": model.spec.activation,
            "dropout_rate": model.spec.dropout_rate,
        },
        "weights": [w.tolist() for w in model.params.weights],
        "biases": [b.tolist() for b in model.params.biases],
    }


def model_from_dict(obj: dict) -> Mlp:
    try:
        spec_obj = obj["spec"]
        spec = MlpSpec(
            layer_dims=tuple(spec_obj["layer_dims"]),
            activation=spec_obj["activation"],
            dropout_rate=float(spec_obj["dropout_rate"]),
        )
        weights = [np.asarray(w, dtype=np.float64) for w in obj["weights"]]
        biases = [np.asarray(b, dtype=np.float64) for b in obj["biases"]]
    except (KeyError, TypeError) as exc:
        raise FormatError(f"malformed model object: {exc}") from exc
    params = MlpParams(weights=weights, biases=biases)
    params.validate(spec)
    return Mlp(spec=spec, params=params)


def save_model(model: Mlp, path: str | Path, extra: dict | None = None) -> None:
    """Write the model JSON atomically; ``extra`` adds sibling keys."""
    obj = model_to_dict(model)
    if extra:
        obj.update(extra)
    write_json_atomic(obj, path)


def load_model(path: str | Path) -> Mlp:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"not a JSON model file: {exc}") from exc
    return model_from_dict(obj)


def write_json_atomic(obj: dict, path: str | Path) -> None:
    """Serialize to a temp file then rename, so readers never see torn writes."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")
    os.replace(tmp, path)
