"""
Unit tests for core/model: encoders, low-rank attention, decoder, predictor and gradient checks
"""

import math

import numpy as np
import pytest

from core.benchmark import BENCHMARK_COLUMNS, attention_scaling, benchmark_csv
from core.errors import ShapeError
from core.features.pipeline import FeatureScaler, collate, featurize_windows
from core.model.decoder import (
    LOG_TWO_PI,
    ManeuverHead,
    MixturePrediction,
    TrajectoryHead,
    bivariate_log_density,
    mixture_log_density,
)
from core.model.encoders import PriorityEncoder
from core.model.leanformer import AuxTokens, Leanformer, full_attention, linear_attention_head, projection_matrices
from core.model.predictor import TrajectoryPredictor, count_parameters
from core.model.verification import CASES, run_case, run_gradcheck_suite
from core.nn.tensor import Tape, Tensor
from core.training.evaluation import ablation_config


@pytest.fixture
def batch(highway_windows, tiny_config):
    features = featurize_windows(highway_windows[:2], tiny_config)
    return collate(FeatureScaler().fit(features).transform_all(features))


class TestLinearAttention:
    """Test the low-rank attention head against full attention."""

    def test_identity_projection_is_full_attention(self, rng):
        """Test that U = F = I with k = n reproduces full attention."""
        n, d = 6, 4
        q, k, v = (Tensor(rng.normal(size=(n, d))) for _ in range(3))

        linear = linear_attention_head(q, k, v, np.eye(n), np.eye(n), d)

        np.testing.assert_allclose(linear.data, full_attention(q, k, v, d).data, atol=1e-6)

    def test_rank_above_length(self):
        """Test that k > n is rejected."""
        with pytest.raises(ShapeError, match="projection rank exceeds sequence length"):
            projection_matrices(4, 5, 1, seed=0)

    def test_head_rejects_wide_projection(self, rng):
        """Test that the head itself refuses a projection wider than the sequence."""
        x = Tensor(rng.normal(size=(3, 2)))

        with pytest.raises(ShapeError):
            linear_attention_head(x, x, x, np.ones((3, 4)), np.ones((3, 4)), 2)

    def test_projections_are_seeded(self):
        """Test that the fixed projections depend only on the seed."""
        u1, f1 = projection_matrices(10, 3, 2, seed=5)
        u2, f2 = projection_matrices(10, 3, 2, seed=5)

        np.testing.assert_array_equal(u1, u2)
        np.testing.assert_array_equal(f1, f2)
        assert u1.shape == (2, 10, 3)

    def test_leanformer_shapes(self, rng):
        """Test that the interaction module maps (B, n, d_in) to (B, n, d_z)."""
        module = Leanformer(12, 8, 2, 4, 6, rng, projection_seed=3)
        o = Tensor(rng.normal(size=(1, 6, 12)))
        tokens = Tensor(rng.normal(size=(1, 1, 12)))

        assert module(o, tokens, tokens, np.ones((1, 6), dtype=bool)).shape == (1, 6, 8)

    def test_leanformer_length_mismatch(self, rng):
        """Test that a sequence of the wrong length is rejected."""
        module = Leanformer(12, 8, 1, 4, 6, rng, projection_seed=3)
        o = Tensor(np.zeros((1, 5, 12)))

        with pytest.raises(ShapeError):
            module(o, Tensor(np.zeros((1, 1, 12))), Tensor(np.zeros((1, 1, 12))))

    def test_leanformer_odd_width(self, rng):
        """Test that d_z must split evenly between the skip halves."""
        with pytest.raises(ShapeError):
            Leanformer(12, 7, 1, 4, 6, rng, projection_seed=3)


class TestAttentionScaling:
    """Test the MAC counts of linear versus full attention."""

    def test_doubling_length(self):
        """Test that doubling n doubles linear MACs and quadruples full MACs."""
        short, long = attention_scaling(lengths=(64, 128), k=8, d=16, repeats=1)

        assert long.macs_linear / short.macs_linear == pytest.approx(2.0, rel=0.15)
        assert long.macs_full / short.macs_full == pytest.approx(4.0, rel=0.15)

    def test_csv_columns(self):
        """Test that the benchmark CSV carries one row per length."""
        text = benchmark_csv(attention_scaling(lengths=(16, 32), k=4, d=8, repeats=1))

        lines = text.strip().splitlines()
        assert lines[0] == ",".join(BENCHMARK_COLUMNS)
        assert len(lines) == 3


class TestEncoders:
    """Test stream encoder properties."""

    def test_priority_encoder_is_causal(self, rng):
        """Test that a frame's output ignores later frames."""
        encoder = PriorityEncoder(4, 8, 2, rng)
        x = rng.normal(size=(1, 2, 5, 4))
        changed = x.copy()
        changed[:, :, 3:] += 2.0
        mask = np.ones((1, 2, 5), dtype=bool)

        before = encoder(Tensor(x), mask).data
        after = encoder(Tensor(changed), mask).data

        np.testing.assert_allclose(before[:, :, :3], after[:, :, :3], atol=1e-12)
        assert not np.allclose(before[:, :, 3:], after[:, :, 3:])

    def test_absent_slots_zero(self, rng):
        """Test that absent slots come out exactly zero."""
        encoder = PriorityEncoder(4, 8, 2, rng)
        mask = np.ones((1, 2, 5), dtype=bool)
        mask[0, 1, :2] = False

        out = encoder(Tensor(rng.normal(size=(1, 2, 5, 4))), mask).data

        assert not out[0, 1, :2].any()


class TestAuxTokens:
    """Test which streams feed the query and key tokens."""

    @pytest.fixture
    def streams(self, rng):
        return [rng.normal(size=(1, 3, 4, 6)) for _ in range(3)]

    def test_priority_reaches_key_only(self, rng, streams):
        """Test that changing only the priority stream moves L_k and leaves L_q unchanged."""
        tokens = AuxTokens(6, 5, rng)
        mask = np.ones((1, 3, 4), dtype=bool)
        safety, behavior, priority = streams

        q_before, k_before = tokens(Tensor(safety), Tensor(behavior), Tensor(priority), mask)
        q_after, k_after = tokens(Tensor(safety), Tensor(behavior), Tensor(priority + 1.0), mask)

        np.testing.assert_array_equal(q_before.data, q_after.data)
        assert np.abs(k_after.data - k_before.data).max() > 1e-6

    def test_behavior_reaches_query_only(self, rng, streams):
        """Test that changing only the behavior stream moves L_q and leaves L_k unchanged."""
        tokens = AuxTokens(6, 5, rng)
        mask = np.ones((1, 3, 4), dtype=bool)
        safety, behavior, priority = streams

        q_before, k_before = tokens(Tensor(safety), Tensor(behavior), Tensor(priority), mask)
        q_after, k_after = tokens(Tensor(safety), Tensor(behavior + 1.0), Tensor(priority), mask)

        np.testing.assert_array_equal(k_before.data, k_after.data)
        assert np.abs(q_after.data - q_before.data).max() > 1e-6

    def test_mismatched_streams(self, rng, streams):
        """Test that a priority stream of another shape is rejected."""
        tokens = AuxTokens(6, 5, rng)
        safety, behavior, _ = streams

        with pytest.raises(ShapeError):
            tokens(Tensor(safety), Tensor(behavior), Tensor(np.zeros((1, 2, 4, 6))), np.ones((1, 3, 4), dtype=bool))


class TestManeuverHead:
    """Test the factored maneuver distribution."""

    def test_zero_logits_uniform(self, rng):
        """Test that zero logits give 1/9 per maneuver."""
        head = ManeuverHead(4, rng)
        for p in head.parameters():
            p.data[:] = 0.0

        log_weights = head(Tensor(rng.normal(size=(2, 4))))

        np.testing.assert_allclose(np.exp(log_weights.data), 1 / 9)

    def test_joint_sums_to_one(self, rng):
        """Test that the joint table of each sample sums to one."""
        weights = np.exp(ManeuverHead(4, rng)(Tensor(rng.normal(size=(3, 4)))).data)

        np.testing.assert_allclose(weights.sum(axis=-1), 1.0)
        prediction = MixturePrediction(weights, np.zeros((3, 9, 1, 2)), np.ones((3, 9, 1, 2)), np.zeros((3, 9, 1)))
        assert prediction.maneuver_table(0).shape == (3, 3)
        assert prediction.maneuver_table(0).sum() == pytest.approx(1.0)

    def test_single_mode_table(self):
        """Test that a single-mode prediction puts all mass on keep/constant."""
        prediction = MixturePrediction(np.ones((1, 1)), np.zeros((1, 1, 2, 2)), np.ones((1, 1, 2, 2)), np.zeros((1, 1, 2)))

        table = prediction.maneuver_table(0)

        assert table[1, 1] == 1.0 and table.sum() == 1.0


class TestTrajectoryHead:
    """Test the Gaussian parameter constraints."""

    def test_parameter_ranges(self, rng):
        """Test that sigma is positive, |rho| < 1 and there are t_f steps."""
        head = TrajectoryHead(6, 8, 2, t_f=4, num_modes=9, rng=rng)

        mu, sigma, rho = head(Tensor(rng.normal(size=(2, 6)) * 10))

        assert mu.shape == sigma.shape == (2, 9, 4, 2)
        assert rho.shape == (2, 9, 4)
        assert (sigma.data > 0).all()
        assert (np.abs(rho.data) < 1).all()

    def test_anchor_added(self, rng):
        """Test that the anchor shifts every mode's mean."""
        head = TrajectoryHead(6, 8, 2, t_f=3, num_modes=2, rng=rng)
        o_bar = Tensor(rng.normal(size=(1, 6)))
        anchor = np.full((1, 3, 2), 5.0)

        plain, _, _ = head(o_bar)
        shifted, _, _ = head(o_bar, anchor)

        np.testing.assert_allclose(shifted.data - plain.data, 5.0)

    def test_anchor_shape_checked(self, rng):
        """Test that a mis-shaped anchor is rejected."""
        head = TrajectoryHead(6, 8, 2, t_f=3, num_modes=1, rng=rng)

        with pytest.raises(ShapeError):
            head(Tensor(np.zeros((1, 6))), np.zeros((1, 4, 2)))


class TestMixtureDensity:
    """Test bivariate and mixture log densities."""

    @staticmethod
    def _prediction(weights, mu, sigma, rho) -> MixturePrediction:
        m = len(weights)
        return MixturePrediction(
            weights=np.array([weights], dtype=float),
            mu=np.array(mu, dtype=float).reshape(1, m, 1, 2),
            sigma=np.array(sigma, dtype=float).reshape(1, m, 1, 2),
            rho=np.array(rho, dtype=float).reshape(1, m, 1),
        )

    def test_standard_normal_at_mean(self):
        """Test that a unit Gaussian at its mean has log density -log 2 pi."""
        value = bivariate_log_density(np.zeros(2), np.zeros(2), np.ones(2), 0.0)

        assert value == pytest.approx(-LOG_TWO_PI)

    def test_correlation_term(self):
        """Test the closed form at (1, 1) with rho = 0.5."""
        value = bivariate_log_density(np.ones(2), np.zeros(2), np.ones(2), 0.5)

        expected = -LOG_TWO_PI - 0.5 * math.log(0.75) - (1 + 1 - 1) / (2 * 0.75)
        assert value == pytest.approx(expected)

    def test_identical_modes_collapse(self):
        """Test that two identical half-weight modes equal one full-weight mode."""
        doubled = self._prediction([0.5, 0.5], [[1, 2], [1, 2]], [[1, 2], [1, 2]], [0.3, 0.3])
        single = self._prediction([1.0], [[1, 2]], [[1, 2]], [0.3])

        point = (0.4, 2.5)
        assert mixture_log_density(point, doubled, 0) == pytest.approx(mixture_log_density(point, single, 0))

    def test_zero_weight_mode_ignored(self):
        """Test that a mode with zero weight contributes nothing."""
        prediction = self._prediction([1.0, 0.0], [[0, 0], [5, 5]], [[1, 1], [1, 1]], [0.0, 0.0])

        assert mixture_log_density((0, 0), prediction, 0) == pytest.approx(-LOG_TWO_PI)

    def test_integrates_to_one(self):
        """Test that the mixture density integrates to one on a fine grid."""
        prediction = self._prediction([0.3, 0.7], [[0, 0], [2, 1]], [[1.0, 1.5], [0.8, 1.0]], [0.3, -0.5])
        step = 0.2
        xs = np.arange(-8.0, 10.0, step)
        ys = np.arange(-10.0, 10.0, step)

        total = sum(math.exp(mixture_log_density((x, y), prediction, 0)) for x in xs for y in ys) * step * step

        assert total == pytest.approx(1.0, abs=1e-3)

    def test_step_out_of_range(self):
        """Test that a step beyond t_f is rejected."""
        prediction = self._prediction([1.0], [[0, 0]], [[1, 1]], [0.0])

        with pytest.raises(IndexError):
            mixture_log_density((0, 0), prediction, 1)


class TestTrajectoryPredictor:
    """Test the assembled model."""

    def test_forward_shapes(self, batch, tiny_config):
        """Test output shapes and normalized maneuver weights."""
        output = TrajectoryPredictor(tiny_config)(batch)

        assert output.log_weights.shape == (2, 9)
        assert output.mu.shape == output.sigma.shape == (2, 9, 5, 2)
        assert output.rho.shape == (2, 9, 5)
        np.testing.assert_allclose(np.exp(output.log_weights.data).sum(axis=-1), 1.0)

    def test_same_seed_same_parameters(self, tiny_config):
        """Test that initialization is reproducible from the seed."""
        a = TrajectoryPredictor(tiny_config).parameters()
        b = TrajectoryPredictor(tiny_config).parameters()

        for x, y in zip(a, b, strict=True):
            np.testing.assert_array_equal(x.data, y.data)

    def test_single_mode_variant(self, batch, tiny_config):
        """Test that ablation E predicts one mode of weight one."""
        prediction = TrajectoryPredictor(ablation_config(tiny_config, "E")).predict(batch)

        assert prediction.num_modes == 1
        np.testing.assert_array_equal(prediction.weights, 1.0)

    def test_disabled_behavior_stream_gets_no_gradient(self, batch, tiny_config):
        """Test that ablation A leaves the behavior encoder out of the graph."""
        model = TrajectoryPredictor(ablation_config(tiny_config, "A"))

        with Tape() as tape:
            output = model(batch)
            tape.backward(output.mu.sum())

        assert all(p.grad is None or not p.grad.any() for p in model.behavior_encoder.parameters())
        assert any(p.grad is not None and p.grad.any() for p in model.priority_encoder.parameters())

    def test_disabled_streams_keep_layout(self, tiny_config):
        """Test that ablations A and B keep the full parameter count."""
        full = count_parameters(TrajectoryPredictor(tiny_config))

        assert count_parameters(TrajectoryPredictor(ablation_config(tiny_config, "A"))) == full
        assert count_parameters(TrajectoryPredictor(ablation_config(tiny_config, "B"))) == full

    def test_no_interaction_variant(self, batch, tiny_config):
        """Test that ablation D still decodes through the bypass."""
        model = TrajectoryPredictor(ablation_config(tiny_config, "D"))

        assert not hasattr(model, "leanformer")
        assert model.predict(batch).mu.shape == (2, 9, 5, 2)


class TestGradCheckSuite:
    """Test the registered gradient checks."""

    @pytest.mark.parametrize("name", ["primitives", "glu", "gcn", "linear_attention_head"])
    def test_fast_cases(self, name):
        """Test that the cheap building blocks pass."""
        assert run_case(name).passed

    @pytest.mark.slow
    def test_full_suite(self):
        """Test that every registered case passes."""
        results = run_gradcheck_suite()

        assert len(results) == len(CASES)
        failed = [r.name for r in results if not r.passed]
        assert not failed
