"""Adaptive negative-sample synthesis in feature space.

Negatives for a binary head are manufactured near its positive samples:
draw Gaussian noise scaled by the per-dimension category variance, walk
it uphill on the head's open loss with normalized gradient-ascent steps,
then clamp the result radially into the spherical shell
``r <= ||z - anchor|| <= gamma * r``. Each stage can be switched off,
giving the four training modes none / noise / project / ascend.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import NumericError, ShapeError, ValidationError
from .nn import GradientBundle, Mlp, MlpParams, mlp_backward, mlp_forward

MODES = ("none", "noise", "project", "ascend")

# Relative slack for the in-shell test, so that projecting an already
# projected point short-circuits instead of rescaling by ~1 ulp.
_SHELL_RTOL = 1e-12


@dataclass(frozen=True)
class AnsConfig:
    """Hyperparameters for negative synthesis.

    ``step_size`` of None resolves to ``radius / 4``. ``lam`` weighs the
    synthetic-loss term in the total objective and is ignored when
    ``mode`` is "none".
    """

    radius: float = 8.0
    gamma: float = 2.0
    step_size: float | None = None
    # 3 normalized steps of radius/4 bound the total drift by well under
    # one shell width, so ascended negatives keep their angular spread
    ascent_steps: int = 3
    lam: float = 0.5
    noise_cov_scale: float = 4.0
    mode: str = "ascend"

    def __post_init__(self) -> None:
        if self.radius <= 0:
            raise ValidationError(f"radius must be positive, got {self.radius}")
        if self.gamma <= 1:
            raise ValidationError(f"gamma must be > 1, got {self.gamma}")
        if self.step_size is not None and self.step_size <= 0:
            raise ValidationError(f"step_size must be positive, got {self.step_size}")
        if self.ascent_steps < 0:
            raise ValidationError(f"ascent_steps must be >= 0, got {self.ascent_steps}")
        if self.lam < 0:
            raise ValidationError(f"lambda must be >= 0, got {self.lam}")
        if self.noise_cov_scale <= 0:
            raise ValidationError(
                f"noise_cov_scale must be positive, got {self.noise_cov_scale}"
            )
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.mode == "ascend" and self.ascent_steps < 1:
            raise ValidationError("mode 'ascend' requires ascent_steps >= 1")

    @property
    def eta(self) -> float:
        return self.radius / 4.0 if self.step_size is None else self.step_size

    def to_dict(self) -> dict:
        return {
            "radius": self.radius,
            "gamma": self.gamma,
            "step_size": self.step_size,
            "ascent_steps": self.ascent_steps,
            "lambda": self.lam,
            "noise_cov_scale": self.noise_cov_scale,
            "mode": self.mode,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "AnsConfig":
        known = {
            "radius": "radius",
            "gamma": "gamma",
            "step_size": "step_size",
            "ascent_steps": "ascent_steps",
            "lambda": "lam",
            "noise_cov_scale": "noise_cov_scale",
            "mode": "mode",
        }
        kwargs = {attr: obj[key] for key, attr in known.items() if key in obj}
        return cls(**kwargs)


@dataclass(frozen=True)
class ShellSpec:
    """The relaxed constraint region around one anchor."""

    anchor: np.ndarray
    inner_radius: float
    outer_radius: float

    def __post_init__(self) -> None:
        if not 0 < self.inner_radius < self.outer_radius:
            raise ValidationError(
                f"need 0 < inner < outer, got "
                f"({self.inner_radius}, {self.outer_radius})"
            )


@dataclass
class NegativeBatch:
    """Synthesized negatives, their anchors, and anchor distances."""

    anchors: np.ndarray
    negatives: np.ndarray
    distances: np.ndarray


def estimate_radius_bound(cov_diag: np.ndarray) -> float:
    """Upper bound sqrt(2 * trace(cov)) on the expected pairwise distance
    of points drawn from any distribution with the given diagonal covariance."""
    cov_diag = np.asarray(cov_diag, dtype=np.float64)
    if (cov_diag < 0).any():
        raise ValidationError("covariance diagonal has a negative entry")
    return float(np.sqrt(2.0 * cov_diag.sum()))


def sample_noise(
    anchor_batch: np.ndarray,
    cov_diag: np.ndarray,
    scale: float,
    seed: int | np.random.Generator = 0,
) -> np.ndarray:
    """Draw one N(0, scale * diag(cov)) offset per anchor row."""
    anchor_batch = np.asarray(anchor_batch, dtype=np.float64)
    cov_diag = np.asarray(cov_diag, dtype=np.float64)
    if anchor_batch.ndim != 2:
        raise ShapeError(f"anchor batch must be 2-D, got shape {anchor_batch.shape}")
    if cov_diag.shape != (anchor_batch.shape[1],):
        raise ShapeError(
            f"cov_diag shape {cov_diag.shape} does not match feature dim "
            f"{anchor_batch.shape[1]}"
        )
    if (cov_diag < 0).any():
        raise ValidationError("covariance diagonal has a negative entry")
    if scale < 0:
        raise ValidationError(f"noise scale must be >= 0, got {scale}")
    rng = np.random.default_rng(seed)
    std = np.sqrt(scale * cov_diag)
    return rng.standard_normal(anchor_batch.shape) * std


def project_to_shell(
    anchor: np.ndarray,
    candidate: np.ndarray,
    r: float,
    gamma: float,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """Clamp the candidate's distance-to-anchor radially into [r, gamma*r].

    This is the Euclidean projection onto the closed shell: points already
    inside pass through unchanged, points outside move along the ray from
    the anchor onto the nearest bounding sphere. A candidate coinciding
    with its anchor has no ray, so a random unit direction at radius r is
    drawn from ``rng`` (seed 0 if omitted).
    """
    if r <= 0 or gamma <= 1:
        raise ValidationError(f"need r > 0 and gamma > 1, got r={r}, gamma={gamma}")
    anchor = np.asarray(anchor, dtype=np.float64)
    candidate = np.asarray(candidate, dtype=np.float64)
    if anchor.shape != candidate.shape or anchor.ndim != 1:
        raise ShapeError(
            f"anchor and candidate must be matching vectors, got "
            f"{anchor.shape} and {candidate.shape}"
        )
    offset = candidate - anchor
    t = float(np.linalg.norm(offset))
    outer = gamma * r
    if t == 0.0:
        if rng is None:
            rng = np.random.default_rng(0)
        direction = _random_unit(rng, anchor.shape[0])
        return anchor + r * direction
    if r * (1.0 - _SHELL_RTOL) <= t <= outer * (1.0 + _SHELL_RTOL):
        return candidate.copy()
    target = outer if t > outer else r
    return anchor + (target / t) * offset


def _random_unit(rng: np.random.Generator, dim: int) -> np.ndarray:
    while True:
        v = rng.standard_normal(dim)
        n = np.linalg.norm(v)
        if n > 1e-12:
            return v / n


def _project_batch(
    anchors: np.ndarray,
    candidates: np.ndarray,
    r: float,
    gamma: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Vectorized radial clamp of each candidate row to its anchor's shell."""
    offsets = candidates - anchors
    t = np.linalg.norm(offsets, axis=1)
    outer = gamma * r
    inside = (t >= r * (1.0 - _SHELL_RTOL)) & (t <= outer * (1.0 + _SHELL_RTOL))
    target = np.where(t > outer, outer, r)
    safe_t = np.where(t == 0.0, 1.0, t)
    scaled = anchors + (target / safe_t)[:, None] * offsets
    out = np.where(inside[:, None], candidates, scaled)
    for i in np.nonzero(t == 0.0)[0]:
        out[i] = anchors[i] + r * _random_unit(rng, anchors.shape[1])
    return out


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def ascend(
    head: Mlp,
    anchor_batch: np.ndarray,
    eps: np.ndarray,
    k: int,
    eta: float,
) -> np.ndarray:
    """k normalized gradient-ascent steps on log(1 + exp(g(anchor + eps))).

    Each step displaces every sample by exactly ``eta`` along its own
    L2-normalized input gradient; samples whose gradient vanishes stay
    put for that step. ``k=0`` returns ``eps`` unchanged.
    """
    if head.spec.output_dim != 1:
        raise ShapeError(f"head must have output width 1, got {head.spec.output_dim}")
    if k < 0:
        raise ValidationError(f"k must be >= 0, got {k}")
    if eta <= 0:
        raise ValidationError(f"eta must be positive, got {eta}")
    anchor_batch = np.asarray(anchor_batch, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64).copy()
    if eps.shape != anchor_batch.shape:
        raise ShapeError(
            f"eps shape {eps.shape} does not match anchors {anchor_batch.shape}"
        )
    for _ in range(k):
        logits, cache = mlp_forward(head, anchor_batch + eps, train_mode=False)
        upstream = _sigmoid(logits)  # d/dg of log(1 + exp(g)), per sample
        grads = mlp_backward(cache, upstream).input_grads
        norms = np.linalg.norm(grads, axis=1, keepdims=True)
        step = np.where(norms > 0, eta * grads / np.where(norms == 0, 1.0, norms), 0.0)
        eps += step
    return eps


def generate_negatives(
    head: Mlp | None,
    positives: np.ndarray,
    cov_diag: np.ndarray,
    cfg: AnsConfig,
    seed: int | np.random.SeedSequence = 0,
) -> NegativeBatch:
    """Synthesize one negative per positive according to ``cfg.mode``.

    noise: anchors + raw Gaussian offsets. project: noise then shell
    clamp. ascend: noise, k normalized ascent steps on the head, then
    shell clamp. Deterministic given the seed. The head may be None for
    the modes that never evaluate it.
    """
    if cfg.mode == "none":
        raise ValidationError("mode 'none' synthesizes no negatives")
    if cfg.mode == "ascend" and head is None:
        raise ValidationError("mode 'ascend' needs a head to climb")
    positives = np.asarray(positives, dtype=np.float64)
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    noise_ss, degenerate_ss = ss.spawn(2)

    eps = sample_noise(positives, cov_diag, cfg.noise_cov_scale,
                       np.random.default_rng(noise_ss))
    if cfg.mode == "ascend":
        eps = ascend(head, positives, eps, cfg.ascent_steps, cfg.eta)
    candidates = positives + eps

    if cfg.mode == "noise":
        negatives = candidates
    else:
        negatives = _project_batch(
            positives, candidates, cfg.radius, cfg.gamma,
            np.random.default_rng(degenerate_ss),
        )
    distances = np.linalg.norm(negatives - positives, axis=1)
    if cfg.mode in ("project", "ascend"):
        lo, hi = cfg.radius - 1e-6, cfg.gamma * cfg.radius + 1e-6
        if (distances < lo).any() or (distances > hi).any():
            raise NumericError("projected negative escaped the shell")
    return NegativeBatch(anchors=positives, negatives=negatives, distances=distances)


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def syn_loss(
    head: Mlp,
    negatives: np.ndarray,
    train_mode: bool = False,
    seed: int = 0,
) -> tuple[float, np.ndarray, MlpParams]:
    """Mean log(1 + exp(g(z))) over synthesized negatives, with exact
    input and parameter gradients."""
    negatives = np.asarray(negatives, dtype=np.float64)
    if head.spec.output_dim != 1:
        raise ShapeError(f"head must have output width 1, got {head.spec.output_dim}")
    logits, cache = mlp_forward(head, negatives, train_mode=train_mode, seed=seed)
    loss = float(np.mean(_softplus(logits)))
    upstream = _sigmoid(logits) / negatives.shape[0]
    bundle = mlp_backward(cache, upstream)
    return loss, bundle.input_grads, bundle.param_grads


def rest_loss(
    head: Mlp,
    positives: np.ndarray,
    known_negatives: np.ndarray,
    train_mode: bool = False,
    seed: int = 0,
) -> tuple[float, MlpParams]:
    """Binary cross-entropy against real data: mean log(1 + exp(-g)) over
    positives plus mean log(1 + exp(g)) over negatives from other
    categories."""
    positives = np.asarray(positives, dtype=np.float64)
    known_negatives = np.asarray(known_negatives, dtype=np.float64)
    if positives.shape[0] == 0 or known_negatives.shape[0] == 0:
        raise ValidationError("rest loss needs non-empty positive and negative sets")
    if head.spec.output_dim != 1:
        raise ShapeError(f"head must have output width 1, got {head.spec.output_dim}")

    pos_logits, pos_cache = mlp_forward(head, positives, train_mode=train_mode, seed=seed)
    neg_logits, neg_cache = mlp_forward(head, known_negatives,
                                        train_mode=train_mode, seed=seed + 1)
    loss = float(np.mean(_softplus(-pos_logits)) + np.mean(_softplus(neg_logits)))
    pos_up = (_sigmoid(pos_logits) - 1.0) / positives.shape[0]
    neg_up = _sigmoid(neg_logits) / known_negatives.shape[0]
    pos_grads = mlp_backward(pos_cache, pos_up).param_grads
    neg_grads = mlp_backward(neg_cache, neg_up).param_grads
    total = MlpParams(
        weights=[a + b for a, b in zip(pos_grads.weights, neg_grads.weights)],
        biases=[a + b for a, b in zip(pos_grads.biases, neg_grads.biases)],
    )
    return loss, total


def open_loss(rest: float, syn: float, lam: float) -> float:
    """Total objective: rest + lambda * syn."""
    if lam < 0:
        raise ValidationError(f"lambda must be >= 0, got {lam}")
    return rest + lam * syn


def add_param_grads(a: MlpParams, b: MlpParams, scale_b: float = 1.0) -> MlpParams:
    """Elementwise a + scale_b * b over matching parameter layouts."""
    if len(a.weights) != len(b.weights):
        raise ShapeError("parameter layouts differ")
    return MlpParams(
        weights=[aw + scale_b * bw for aw, bw in zip(a.weights, b.weights)],
        biases=[ab + scale_b * bb for ab, bb in zip(a.biases, b.biases)],
    )
