"""Independent numerical checks for the core machinery.

Each oracle re-derives an expected answer by a route that shares no code
with the implementation under test: central finite differences over a
straight-line forward pass for the backprop gradients, a dense grid
search over the shell for the radial projection, and Monte Carlo
sampling for the pairwise-distance bound. Oracles return reports rather
than raising, so harnesses can aggregate and print them.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import ceil, log

import numpy as np

from .errors import NumericError, ValidationError
from .nn import MlpSpec, init_params, Mlp, mlp_backward, mlp_forward
from .sampler import project_to_shell

_FD_STEP = 1e-4
_REL_TOL = 1e-4
_ABS_FLOOR = 1e-8
# Hidden preactivations this close to zero put a ReLU kink inside the
# finite-difference interval; such batches are redrawn.
_KINK_MARGIN = 1e-3


@dataclass(frozen=True)
class OracleReport:
    """Outcome of one oracle run."""

    name: str
    metric: float
    samples: int
    passed: bool
    seed: int

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "metric": self.metric,
            "samples": self.samples,
            "pass": self.passed,
            "seed": self.seed,
        }


def _mlp_value(
    weights: list[np.ndarray],
    biases: list[np.ndarray],
    batch: np.ndarray,
    upstream: np.ndarray,
) -> float:
    # Straight-line re-statement of the forward rule; kept free of any
    # shared helpers on purpose.
    a = batch
    last = len(weights) - 1
    for i, (w, b) in enumerate(zip(weights, biases)):
        a = a @ w.T + b
        if i != last:
            a = np.maximum(a, 0.0)
    return float((a * upstream).sum())


def _hidden_preact_margin(
    weights: list[np.ndarray], biases: list[np.ndarray], batch: np.ndarray
) -> float:
    a = batch
    margin = np.inf
    last = len(weights) - 1
    for i, (w, b) in enumerate(zip(weights, biases)):
        a = a @ w.T + b
        if i != last:
            margin = min(margin, float(np.abs(a).min()))
            a = np.maximum(a, 0.0)
    return margin


def check_gradients(spec: MlpSpec, seed: int = 0, batch_size: int = 4) -> OracleReport:
    """Compare every parameter and input gradient against central finite
    differences of sum(upstream * logits).

    The network must be small (width <= 32, at most 3 layers) and
    dropout-free so the scalar is piecewise linear in each coordinate;
    batches are redrawn until every hidden preactivation clears the kink
    margin, after which the finite difference is exact up to rounding.
    """
    if spec.dropout_rate != 0.0:
        raise ValidationError("gradient oracle requires dropout_rate == 0")
    if spec.num_layers > 3:
        raise ValidationError(f"gradient oracle allows <= 3 layers, got {spec.num_layers}")
    if max(spec.layer_dims) > 32:
        raise ValidationError(f"gradient oracle allows width <= 32, got {max(spec.layer_dims)}")

    ss = np.random.SeedSequence(seed)
    param_rng, batch_rng, up_rng = (np.random.default_rng(s) for s in ss.spawn(3))
    params = init_params(spec, param_rng)
    model = Mlp(spec=spec, params=params)
    weights = [w.copy() for w in params.weights]
    biases = [b.copy() for b in params.biases]

    for _ in range(200):
        batch = batch_rng.standard_normal((batch_size, spec.input_dim))
        if _hidden_preact_margin(weights, biases, batch) > _KINK_MARGIN:
            break
    else:
        raise NumericError("could not find a batch clear of ReLU kinks")
    upstream = up_rng.standard_normal((batch_size, spec.output_dim))

    logits, cache = mlp_forward(model, batch)
    bundle = mlp_backward(cache, upstream)
    value_cached = float((logits * upstream).sum())
    value_straight = _mlp_value(weights, biases, batch, upstream)
    if abs(value_cached - value_straight) > 1e-9 * max(1.0, abs(value_straight)):
        return OracleReport("gradients", np.inf, 0, False, seed)

    def rel_err(analytic: float, fd: float) -> float:
        scale = max(abs(analytic), abs(fd))
        if scale <= _ABS_FLOOR:
            return 0.0
        return abs(analytic - fd) / scale

    h = _FD_STEP
    worst = 0.0
    count = 0

    for arrays, grads in (
        (weights, bundle.param_grads.weights),
        (biases, bundle.param_grads.biases),
    ):
        for arr, grad in zip(arrays, grads):
            for idx in np.ndindex(arr.shape):
                saved = arr[idx]
                arr[idx] = saved + h
                hi = _mlp_value(weights, biases, batch, upstream)
                arr[idx] = saved - h
                lo = _mlp_value(weights, biases, batch, upstream)
                arr[idx] = saved
                worst = max(worst, rel_err(float(grad[idx]), (hi - lo) / (2 * h)))
                count += 1

    for idx in np.ndindex(batch.shape):
        saved = batch[idx]
        batch[idx] = saved + h
        hi = _mlp_value(weights, biases, batch, upstream)
        batch[idx] = saved - h
        lo = _mlp_value(weights, biases, batch, upstream)
        batch[idx] = saved
        worst = max(worst, rel_err(float(bundle.input_grads[idx]), (hi - lo) / (2 * h)))
        count += 1

    return OracleReport("gradients", worst, count, worst <= _REL_TOL, seed)


def _shell_grid_best(
    anchor: np.ndarray, candidate: np.ndarray, r: float, gamma: float, resolution: int
) -> tuple[np.ndarray, float, int]:
    """Scan a dense grid of the shell, returning the grid point nearest
    the candidate, the coarsest axis step of the grid, and its size."""
    d = anchor.shape[0]
    outer = gamma * r
    radii = np.linspace(r, outer, resolution)
    dr = (outer - r) / (resolution - 1)

    if d == 2:
        n_ang = max(8, ceil(2 * np.pi * outer / dr))
        angles = 2 * np.pi * np.arange(n_ang) / n_ang
        ring = np.stack([np.cos(angles), np.sin(angles)], axis=1)
        best = None
        best_dist = np.inf
        for rho in radii:
            pts = anchor + rho * ring
            dist = np.linalg.norm(pts - candidate, axis=1)
            j = int(np.argmin(dist))
            if dist[j] < best_dist:
                best_dist = float(dist[j])
                best = pts[j]
        spacing = max(dr, outer * 2 * np.pi / n_ang)
        return best, spacing, resolution * n_ang

    n_pol = max(5, ceil(np.pi * outer / dr) + 1)
    n_azi = max(8, ceil(2 * np.pi * outer / dr))
    polar = np.linspace(0.0, np.pi, n_pol)
    azim = 2 * np.pi * np.arange(n_azi) / n_azi
    sin_p, cos_p = np.sin(polar), np.cos(polar)
    sphere = np.empty((n_pol * n_azi, 3))
    sphere[:, 0] = np.outer(sin_p, np.cos(azim)).ravel()
    sphere[:, 1] = np.outer(sin_p, np.sin(azim)).ravel()
    sphere[:, 2] = np.repeat(cos_p, n_azi)
    best = None
    best_dist = np.inf
    for rho in radii:
        pts = anchor + rho * sphere
        dist = np.linalg.norm(pts - candidate, axis=1)
        j = int(np.argmin(dist))
        if dist[j] < best_dist:
            best_dist = float(dist[j])
            best = pts[j]
    spacing = max(dr, outer * np.pi / (n_pol - 1), outer * 2 * np.pi / n_azi)
    return best, spacing, resolution * n_pol * n_azi


def projection_oracle(
    anchor: np.ndarray,
    candidate: np.ndarray,
    r: float,
    gamma: float,
    resolution: int = 48,
    seed: int = 0,
) -> OracleReport:
    """Check the analytic radial clamp against a dense shell grid.

    Passes when the clamped point lands inside the shell and within
    twice the grid spacing of the best grid point. Only d in {2, 3} is
    supported; higher dimensions make the dense scan meaningless.
    """
    anchor = np.asarray(anchor, dtype=np.float64)
    candidate = np.asarray(candidate, dtype=np.float64)
    d = anchor.shape[0]
    if d not in (2, 3):
        raise ValidationError(f"projection oracle supports d in {{2, 3}}, got {d}")
    if resolution < 4:
        raise ValidationError(f"resolution must be >= 4, got {resolution}")

    analytic = project_to_shell(anchor, candidate, r, gamma)
    best, spacing, n_points = _shell_grid_best(anchor, candidate, r, gamma, resolution)

    gap = float(np.linalg.norm(analytic - best))
    anal_dist = float(np.linalg.norm(analytic - anchor))
    in_shell = r * (1 - 1e-9) <= anal_dist <= gamma * r * (1 + 1e-9)
    passed = in_shell and gap <= 2 * spacing
    return OracleReport(f"projection-d{d}", gap / spacing, n_points, passed, seed)


def _prop1_bound(cov_diag: np.ndarray) -> float:
    # Restated here rather than imported so a broken bound is caught by
    # this oracle's own negative control.
    return float(np.sqrt(2.0 * np.sum(cov_diag)))


def prop1_monte_carlo(
    cov_diag: np.ndarray,
    distribution: str = "gaussian",
    pairs: int = 100_000,
    seed: int = 0,
) -> OracleReport:
    """Estimate E||x - y|| for iid pairs and compare it to the
    sqrt(2 * trace(cov)) bound, allowing three standard errors."""
    cov_diag = np.asarray(cov_diag, dtype=np.float64)
    if (cov_diag < 0).any():
        raise ValidationError("covariance diagonal has a negative entry")
    if pairs < 100:
        raise ValidationError(f"need at least 100 pairs, got {pairs}")
    if distribution not in ("gaussian", "uniform"):
        raise ValidationError(f"unknown distribution {distribution!r}")

    rng = np.random.default_rng(seed)
    d = cov_diag.shape[0]
    if distribution == "gaussian":
        std = np.sqrt(cov_diag)
        x = rng.standard_normal((pairs, d)) * std
        y = rng.standard_normal((pairs, d)) * std
    else:
        half_width = np.sqrt(3.0 * cov_diag)
        x = rng.uniform(-1.0, 1.0, (pairs, d)) * half_width
        y = rng.uniform(-1.0, 1.0, (pairs, d)) * half_width

    dists = np.linalg.norm(x - y, axis=1)
    mean = float(dists.mean())
    stderr = float(dists.std(ddof=1) / np.sqrt(pairs))
    bound = _prop1_bound(cov_diag)
    passed = mean <= bound + 3 * stderr
    return OracleReport(f"prop1-{distribution}", mean - bound, pairs, passed, seed)


def run_gradient_cases(seed: int = 0) -> list[OracleReport]:
    """Gradient oracle over a fixed spread of small architectures."""
    specs = (
        MlpSpec((3, 1)),
        MlpSpec((5, 7, 1)),
        MlpSpec((8, 16, 4)),
        MlpSpec((12, 32, 32, 2)),
        MlpSpec((32, 24, 16, 1)),
    )
    return [check_gradients(s, seed=seed + i) for i, s in enumerate(specs)]


def run_projection_cases(
    num_cases: int = 20, seed: int = 0, resolution: int = 48
) -> list[OracleReport]:
    """Projection oracle over random anchors, shells, and candidates.

    Candidate offsets are drawn log-uniform from well inside the inner
    sphere to well outside the outer one, so all three clamp branches
    are exercised.
    """
    if num_cases < 1:
        raise ValidationError(f"need at least one case, got {num_cases}")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    reports = []
    for i in range(num_cases):
        d = 2 if i % 2 == 0 else 3
        r = float(rng.uniform(0.5, 6.0))
        gamma = float(rng.uniform(1.5, 3.0))
        anchor = rng.uniform(-5.0, 5.0, d)
        direction = rng.standard_normal(d)
        direction /= np.linalg.norm(direction)
        dist = np.exp(rng.uniform(log(0.05 * r), log(4.0 * gamma * r)))
        candidate = anchor + dist * direction
        reports.append(
            projection_oracle(anchor, candidate, r, gamma, resolution, seed=seed + i)
        )
    return reports


def run_prop1_cases(
    num_covs: int = 3, pairs: int = 100_000, seed: int = 0
) -> list[OracleReport]:
    """Distance-bound oracle over random diagonal covariances, each run
    under both supported sampling distributions."""
    if num_covs < 1:
        raise ValidationError(f"need at least one covariance, got {num_covs}")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    reports = []
    for i in range(num_covs):
        d = int(rng.integers(2, 17))
        cov = rng.uniform(0.1, 4.0, d)
        for dist_name in ("gaussian", "uniform"):
            reports.append(prop1_monte_carlo(cov, dist_name, pairs, seed=seed + i))
    return reports
