"""Tests for negative synthesis: noise, ascent, projection, and losses."""

from __future__ import annotations

import math

import numpy as np
import pytest

from ansopen.errors import ShapeError, ValidationError
from ansopen.nn import Mlp, MlpParams, MlpSpec, make_mlp
from ansopen.sampler import (
    AnsConfig,
    NegativeBatch,
    add_param_grads,
    ascend,
    estimate_radius_bound,
    generate_negatives,
    open_loss,
    project_to_shell,
    rest_loss,
    sample_noise,
    syn_loss,
)


class TestAnsConfig:
    def test_defaults(self):
        cfg = AnsConfig()
        assert cfg.radius == 8.0
        assert cfg.gamma == 2.0
        assert cfg.lam == 0.5
        assert cfg.noise_cov_scale == 4.0
        assert cfg.mode == "ascend"
        assert cfg.eta == 2.0  # radius / 4 when unset

    def test_explicit_step_size_wins(self):
        assert AnsConfig(radius=8.0, step_size=0.3).eta == 0.3

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"radius": 0.0},
            {"gamma": 1.0},
            {"step_size": -1.0},
            {"lam": -0.1},
            {"noise_cov_scale": 0.0},
            {"mode": "walk"},
            {"mode": "ascend", "ascent_steps": 0},
        ],
    )
    def test_rejects_bad_values(self, kwargs):
        with pytest.raises(ValidationError):
            AnsConfig(**kwargs)

    def test_dict_round_trip_uses_lambda_key(self):
        cfg = AnsConfig(radius=3.0, gamma=2.5, lam=0.7, mode="project")
        obj = cfg.to_dict()
        assert obj["lambda"] == 0.7
        assert "lam" not in obj
        assert AnsConfig.from_dict(obj) == cfg


class TestRadiusBound:
    def test_unit_covariance(self):
        # sqrt(2 * 8) = 4 for eight unit variances
        assert estimate_radius_bound(np.ones(8)) == pytest.approx(4.0)

    def test_zero_covariance(self):
        assert estimate_radius_bound(np.zeros(3)) == 0.0

    def test_negative_entry_rejected(self):
        with pytest.raises(ValidationError):
            estimate_radius_bound(np.array([1.0, -0.5]))


class TestSampleNoise:
    def test_std_tracks_scaled_covariance(self):
        """Unit cov at scale 4 gives per-coordinate std 2, within 2%."""
        anchors = np.zeros((100_000, 3))
        eps = sample_noise(anchors, np.ones(3), scale=4.0, seed=0)
        np.testing.assert_allclose(eps.std(axis=0), 2.0, rtol=0.02)

    def test_variance_tracks_anisotropic_covariance(self):
        cov = np.array([0.5, 2.0, 4.0])
        eps = sample_noise(np.zeros((20_000, 3)), cov, scale=4.0, seed=0)
        np.testing.assert_allclose(eps.var(axis=0), 4.0 * cov, rtol=0.05)
        np.testing.assert_allclose(eps.mean(axis=0), 0.0, atol=0.1)

    def test_zero_covariance_gives_zero_noise(self):
        eps = sample_noise(np.zeros((5, 2)), np.zeros(2), scale=4.0, seed=1)
        assert not eps.any()

    def test_seed_determinism(self):
        anchors = np.zeros((10, 4))
        cov = np.ones(4)
        a = sample_noise(anchors, cov, 4.0, seed=3)
        b = sample_noise(anchors, cov, 4.0, seed=3)
        assert np.array_equal(a, b)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            sample_noise(np.zeros((2, 3)), np.ones(4), 1.0)


class TestProjectToShell:
    def test_pulls_short_candidate_out_to_inner_radius(self):
        out = project_to_shell(np.zeros(2), np.array([3.0, 0.0]), r=4.0, gamma=2.0)
        np.testing.assert_allclose(out, [4.0, 0.0])

    def test_pulls_far_candidate_in_to_outer_radius(self):
        out = project_to_shell(np.zeros(2), np.array([10.0, 0.0]), r=4.0, gamma=2.0)
        np.testing.assert_allclose(out, [8.0, 0.0])

    def test_in_shell_candidate_untouched(self):
        cand = np.array([5.0, 0.0, 0.0])
        out = project_to_shell(np.zeros(3), cand, r=4.0, gamma=2.0)
        assert np.array_equal(out, cand)

    def test_offset_anchor(self):
        anchor = np.array([1.0, 1.0])
        out = project_to_shell(anchor, anchor + np.array([0.5, 0.0]), r=2.0, gamma=2.0)
        np.testing.assert_allclose(out, anchor + [2.0, 0.0])

    def test_idempotent(self):
        rng = np.random.default_rng(42)
        for _ in range(50):
            anchor = rng.standard_normal(5)
            cand = anchor + rng.standard_normal(5) * rng.uniform(0.01, 20)
            once = project_to_shell(anchor, cand, r=3.0, gamma=2.0)
            twice = project_to_shell(anchor, once, r=3.0, gamma=2.0)
            assert np.array_equal(once, twice)

    def test_degenerate_candidate_lands_on_inner_sphere(self):
        anchor = np.array([2.0, -1.0, 0.5])
        rng = np.random.default_rng(7)
        out = project_to_shell(anchor, anchor.copy(), r=4.0, gamma=2.0, rng=rng)
        assert np.linalg.norm(out - anchor) == pytest.approx(4.0)

    def test_bad_shell(self):
        with pytest.raises(ValidationError):
            project_to_shell(np.zeros(2), np.ones(2), r=-1.0, gamma=2.0)
        with pytest.raises(ValidationError):
            project_to_shell(np.zeros(2), np.ones(2), r=1.0, gamma=1.0)


def _linear_head(w: np.ndarray, b: float = 0.0) -> Mlp:
    spec = MlpSpec((w.shape[0], 1))
    params = MlpParams(weights=[w.reshape(1, -1).astype(float)],
                       biases=[np.array([b], dtype=float)])
    return Mlp(spec=spec, params=params)


class TestAscend:
    def test_linear_head_moves_along_weight_direction(self):
        """For g(z) = w.z + b every normalized step is eta * w/|w| exactly."""
        w = np.array([3.0, 4.0])
        head = _linear_head(w, b=0.5)
        anchors = np.array([[0.0, 0.0], [1.0, -2.0]])
        eps0 = np.array([[0.1, 0.2], [0.0, 0.0]])
        k, eta = 3, 0.25
        out = ascend(head, anchors, eps0.copy(), k=k, eta=eta)
        expected = eps0 + k * eta * (w / 5.0)
        np.testing.assert_allclose(out, expected, rtol=1e-12)

    def test_zero_gradient_rows_stay_put(self):
        head = _linear_head(np.zeros(3))
        eps0 = np.random.default_rng(0).standard_normal((4, 3))
        out = ascend(head, np.zeros((4, 3)), eps0.copy(), k=5, eta=1.0)
        assert np.array_equal(out, eps0)

    def test_k_zero_is_identity(self):
        head = _linear_head(np.array([1.0, 1.0]))
        eps0 = np.ones((2, 2))
        out = ascend(head, np.zeros((2, 2)), eps0.copy(), k=0, eta=1.0)
        assert np.array_equal(out, eps0)

    def test_climbs_the_loss(self):
        """The synthetic loss must not decrease along ascent steps."""
        head = make_mlp(MlpSpec((6, 12, 1)), seed=4)
        rng = np.random.default_rng(5)
        anchors = rng.standard_normal((30, 6))
        eps = rng.standard_normal((30, 6)) * 0.5
        prev, _, _ = syn_loss(head, anchors + eps)
        for _ in range(4):
            eps = ascend(head, anchors, eps, k=1, eta=0.05)
            cur, _, _ = syn_loss(head, anchors + eps)
            assert cur >= prev - 1e-9
            prev = cur

    def test_validation(self):
        head = _linear_head(np.ones(2))
        with pytest.raises(ValidationError):
            ascend(head, np.zeros((1, 2)), np.zeros((1, 2)), k=1, eta=0.0)
        with pytest.raises(ShapeError):
            ascend(head, np.zeros((1, 2)), np.zeros((2, 2)), k=1, eta=1.0)


class TestGenerateNegatives:
    def setup_method(self):
        self.head = make_mlp(MlpSpec((8, 16, 1)), seed=3)
        rng = np.random.default_rng(7)
        self.pos = rng.standard_normal((60, 8)) * 2.0
        self.cov = self.pos.var(axis=0, ddof=1)

    def test_mode_none_rejected(self):
        cfg = AnsConfig(mode="none", radius=4.0)  # legal config, just inert
        with pytest.raises(ValidationError):
            generate_negatives(self.head, self.pos, self.cov, cfg, seed=0)

    def test_ascend_requires_head(self):
        cfg = AnsConfig(mode="ascend", radius=4.0)
        with pytest.raises(ValidationError):
            generate_negatives(None, self.pos, self.cov, cfg, seed=0)

    def test_noise_mode_is_unclamped_gaussian(self):
        cfg = AnsConfig(mode="noise", radius=0.001, gamma=2.0)
        batch = generate_negatives(None, self.pos, self.cov, cfg, seed=2)
        # with a shell this tiny nearly every raw draw falls outside it
        assert (batch.distances > cfg.gamma * cfg.radius).mean() > 0.99

    @pytest.mark.parametrize("mode", ["project", "ascend"])
    def test_clamped_modes_land_in_shell(self, mode):
        cfg = AnsConfig(mode=mode, radius=4.0, gamma=2.0)
        batch = generate_negatives(self.head, self.pos, self.cov, cfg, seed=5)
        assert batch.negatives.shape == self.pos.shape
        assert (batch.distances >= cfg.radius - 1e-6).all()
        assert (batch.distances <= cfg.gamma * cfg.radius + 1e-6).all()

    def test_head_optional_for_project(self):
        cfg = AnsConfig(mode="project", radius=4.0)
        batch = generate_negatives(None, self.pos, self.cov, cfg, seed=5)
        assert isinstance(batch, NegativeBatch)

    def test_seed_determinism(self):
        cfg = AnsConfig(mode="ascend", radius=4.0)
        a = generate_negatives(self.head, self.pos, self.cov, cfg, seed=9)
        b = generate_negatives(self.head, self.pos, self.cov, cfg, seed=9)
        c = generate_negatives(self.head, self.pos, self.cov, cfg, seed=10)
        assert np.array_equal(a.negatives, b.negatives)
        assert not np.array_equal(a.negatives, c.negatives)

    def test_ascent_raises_synthetic_loss_over_project(self):
        proj = generate_negatives(self.head, self.pos, self.cov,
                                  AnsConfig(mode="project", radius=4.0), seed=3)
        asc = generate_negatives(self.head, self.pos, self.cov,
                                 AnsConfig(mode="ascend", radius=4.0), seed=3)
        lp, _, _ = syn_loss(self.head, proj.negatives)
        la, _, _ = syn_loss(self.head, asc.negatives)
        assert la > lp

    def test_ascend_and_project_share_shell_but_not_directions(self):
        """Same seed, both clamped modes: same distance bounds, but the
        ascent walk must bend the offsets away from the raw noise."""
        cfg_p = AnsConfig(mode="project", radius=4.0)
        cfg_a = AnsConfig(mode="ascend", radius=4.0)
        proj = generate_negatives(self.head, self.pos, self.cov, cfg_p, seed=13)
        asc = generate_negatives(self.head, self.pos, self.cov, cfg_a, seed=13)
        for batch in (proj, asc):
            assert (batch.distances >= 4.0 - 1e-6).all()
            assert (batch.distances <= 8.0 + 1e-6).all()
        u = proj.negatives - self.pos
        v = asc.negatives - self.pos
        cos = (u * v).sum(axis=1) / (
            np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1)
        )
        assert cos.min() < 1.0 - 1e-6


class TestLosses:
    def test_syn_loss_at_zero_logits(self):
        """A zeroed head gives exactly log(2) per sample."""
        head = _linear_head(np.zeros(4))
        loss, input_grads, _ = syn_loss(head, np.ones((7, 4)))
        assert loss == pytest.approx(math.log(2.0), abs=1e-12)
        assert np.allclose(input_grads, 0.0)

    def test_rest_loss_at_zero_logits(self):
        head = _linear_head(np.zeros(4))
        loss, _ = rest_loss(head, np.ones((3, 4)), -np.ones((5, 4)))
        assert loss == pytest.approx(2.0 * math.log(2.0), abs=1e-12)

    def test_syn_loss_gradients_match_finite_differences(self):
        head = make_mlp(MlpSpec((5, 9, 1)), seed=6)
        rng = np.random.default_rng(8)
        z = rng.standard_normal((4, 5))
        _, input_grads, param_grads = syn_loss(head, z)
        h = 1e-6

        def loss_at(zz):
            l, _, _ = syn_loss(head, zz)
            return l

        for idx in np.ndindex(z.shape):
            z2 = z.copy()
            z2[idx] += h
            hi = loss_at(z2)
            z2[idx] -= 2 * h
            lo = loss_at(z2)
            np.testing.assert_allclose(
                input_grads[idx], (hi - lo) / (2 * h), rtol=1e-4, atol=1e-8
            )

        w0 = head.params.weights[0]
        for idx in [(0, 0), (3, 2), (8, 4)]:
            saved = w0[idx]
            w0[idx] = saved + h
            hi = loss_at(z)
            w0[idx] = saved - h
            lo = loss_at(z)
            w0[idx] = saved
            np.testing.assert_allclose(
                param_grads.weights[0][idx], (hi - lo) / (2 * h), rtol=1e-4, atol=1e-8
            )

    def test_rest_loss_gradients_match_finite_differences(self):
        head = make_mlp(MlpSpec((4, 6, 1)), seed=9)
        rng = np.random.default_rng(10)
        pos = rng.standard_normal((5, 4))
        neg = rng.standard_normal((7, 4))
        _, grads = rest_loss(head, pos, neg)
        h = 1e-6
        b0 = head.params.biases[0]
        for idx in range(b0.shape[0]):
            saved = b0[idx]
            b0[idx] = saved + h
            hi, _ = rest_loss(head, pos, neg)
            b0[idx] = saved - h
            lo, _ = rest_loss(head, pos, neg)
            b0[idx] = saved
            np.testing.assert_allclose(
                grads.biases[0][idx], (hi - lo) / (2 * h), rtol=1e-4, atol=1e-8
            )

    def test_syn_loss_matches_direct_formula(self):
        """Straight-line re-evaluation of mean log(1 + exp(g))."""
        head = make_mlp(MlpSpec((6, 10, 1)), seed=12)
        z = np.random.default_rng(13).standard_normal((20, 6))
        loss, _, _ = syn_loss(head, z)
        w0, w1 = head.params.weights
        b0, b1 = head.params.biases
        g = np.maximum(z @ w0.T + b0, 0.0) @ w1.T + b1
        expected = np.log1p(np.exp(g)).mean()
        assert abs(loss - expected) <= 1e-9

    def test_rest_loss_matches_direct_formula(self):
        head = make_mlp(MlpSpec((6, 10, 1)), seed=14)
        rng = np.random.default_rng(15)
        pos, neg = rng.standard_normal((8, 6)), rng.standard_normal((11, 6))
        loss, _ = rest_loss(head, pos, neg)
        w0, w1 = head.params.weights
        b0, b1 = head.params.biases

        def g(x):
            return np.maximum(x @ w0.T + b0, 0.0) @ w1.T + b1

        expected = np.log1p(np.exp(-g(pos))).mean() + np.log1p(np.exp(g(neg))).mean()
        assert abs(loss - expected) <= 1e-9

    def test_rest_loss_sign_symmetry(self):
        """Swapping the sides while negating the head leaves the loss fixed."""
        head = make_mlp(MlpSpec((5, 8, 1)), seed=16)
        rng = np.random.default_rng(17)
        pos, neg = rng.standard_normal((6, 5)), rng.standard_normal((9, 5))
        loss_fwd, _ = rest_loss(head, pos, neg)
        head.params.weights[-1] *= -1.0
        head.params.biases[-1] *= -1.0
        loss_rev, _ = rest_loss(head, neg, pos)
        assert loss_fwd == pytest.approx(loss_rev, abs=1e-12)

    def test_rest_loss_rejects_empty_sides(self):
        head = _linear_head(np.ones(3))
        with pytest.raises(ValidationError):
            rest_loss(head, np.empty((0, 3)), np.ones((2, 3)))
        with pytest.raises(ValidationError):
            rest_loss(head, np.ones((2, 3)), np.empty((0, 3)))

    def test_open_loss_combination(self):
        assert open_loss(1.5, 0.4, 0.5) == pytest.approx(1.7)
        assert open_loss(1.5, 0.4, 0.0) == 1.5
        with pytest.raises(ValidationError):
            open_loss(1.0, 1.0, -0.5)

    def test_add_param_grads(self):
        a = MlpParams(weights=[np.ones((2, 2))], biases=[np.ones(2)])
        b = MlpParams(weights=[2 * np.ones((2, 2))], biases=[np.zeros(2)])
        out = add_param_grads(a, b, scale_b=0.5)
        np.testing.assert_allclose(out.weights[0], 2.0 * np.ones((2, 2)))
        np.testing.assert_allclose(out.biases[0], np.ones(2))
