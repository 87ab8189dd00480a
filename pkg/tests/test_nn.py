"""Tests for the classifier engine: forward/loss/backward/ADAM/training."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from njee.nn import (
    AdamState,
    ClassifierModel,
    EncodedBatch,
    EncodedDataset,
    GradCheckReport,
    TrainConfig,
    TrainingDivergedError,
    adam_step,
    backward,
    ce_loss,
    forward,
    grad_check,
    one_hot_encode,
    train_classifier,
)
from njee.rng import make_rng


def linear_model(weights, biases=None):
    w = np.asarray(weights, dtype=float)
    b = np.zeros(w.shape[1]) if biases is None else np.asarray(biases, dtype=float)
    return ClassifierModel((w.shape[0], w.shape[1]), [w], [b])


class TestForward:
    def test_zero_model_is_uniform_binary(self):
        model = ClassifierModel((3, 2), [np.zeros((3, 2))], [np.zeros(2)])
        probs = forward(model, np.array([[1.0, -2.0, 0.5], [0.0, 0.0, 0.0]]))
        assert np.allclose(probs, 0.5)

    def test_zero_model_is_uniform_four_classes(self):
        model = ClassifierModel((2, 4), [np.zeros((2, 4))], [np.zeros(4)])
        probs = forward(model, np.ones((5, 2)))
        assert np.allclose(probs, 0.25)

    def test_single_layer_softmax_values(self):
        # logits (1, -1): softmax = (e^1, e^-1) / (e^1 + e^-1)
        model = linear_model([[1.0, -1.0]])
        probs = forward(model, np.array([[1.0]]))
        assert probs[0] == pytest.approx([0.8808, 0.1192], abs=1e-4)

    def test_dimension_mismatch_rejected(self):
        model = ClassifierModel((3, 2), [np.zeros((3, 2))], [np.zeros(2)])
        with pytest.raises(ValueError, match="shape"):
            forward(model, np.ones((4, 5)))

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_rows_on_probability_simplex(self, seed):
        rng = make_rng(seed)
        dims = [int(rng.integers(1, 8))] + [int(h) for h in rng.integers(2, 12, 2)]
        dims.append(int(rng.integers(2, 7)))
        model = ClassifierModel.initialize(dims, rng)
        probs = forward(model, 3.0 * rng.standard_normal((16, dims[0])))
        assert np.all(probs >= 0)
        assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-9)

    def test_output_alphabet_must_be_at_least_two(self):
        with pytest.raises(ValueError, match="at least 2|>= 2"):
            ClassifierModel((3, 1), [np.zeros((3, 1))], [np.zeros(1)])


class TestCeLoss:
    def test_uniform_three_classes_is_ln3(self):
        probs = np.full((7, 3), 1.0 / 3.0)
        targets = np.array([0, 1, 2, 0, 1, 2, 0])
        assert ce_loss(probs, targets, 1e-7) == pytest.approx(np.log(3), abs=1e-12)

    def test_perfect_prediction_is_zero(self):
        probs = np.eye(4)[np.array([0, 3, 1, 2])]
        assert ce_loss(probs, np.array([0, 3, 1, 2]), 1e-7) == 0.0

    def test_zero_probability_clipped_to_floor(self):
        probs = np.array([[0.0, 1.0]])
        loss = ce_loss(probs, np.array([0]), 1e-7)
        assert loss == pytest.approx(-np.log(1e-7), rel=1e-12)

    def test_loss_never_exceeds_floor_bound(self):
        rng = make_rng(3)
        for _ in range(20):
            raw = rng.random((10, 4)) ** 8
            probs = raw / raw.sum(axis=1, keepdims=True)
            targets = rng.integers(0, 4, 10)
            assert ce_loss(probs, targets, 1e-7) <= -np.log(1e-7) + 1e-12

    def test_empty_batch_rejected(self):
        with pytest.raises(ValueError):
            ce_loss(np.empty((0, 3)), np.empty(0, dtype=int), 1e-7)


class TestBackward:
    def test_softmax_regression_closed_form(self):
        # no hidden layers: dL/dW = input^T (softmax - onehot) / n
        rng = make_rng(5)
        w = rng.standard_normal((4, 3))
        model = linear_model(w)
        x = rng.standard_normal((1, 4))
        target = np.array([2])
        probs = forward(model, x)
        grads = backward(model, EncodedBatch(x, target), 1e-7)
        expected = probs.copy()
        expected[0, 2] -= 1.0
        assert np.allclose(grads[0], x.T @ expected)
        assert np.allclose(grads[1], expected[0])

    def test_confident_correct_prediction_has_tiny_gradient(self):
        model = linear_model([[30.0, -30.0]])
        batch = EncodedBatch(np.array([[1.0]]), np.array([0]))
        grads = backward(model, batch, 1e-7)
        norm = np.sqrt(sum(float((g**2).sum()) for g in grads))
        assert norm < 1e-6

    def test_floored_row_contributes_zero_gradient(self):
        # true-class probability far below the floor: loss is locally constant
        model = linear_model([[-40.0, 40.0]])
        batch = EncodedBatch(np.array([[1.0]]), np.array([0]))
        grads = backward(model, batch, 1e-7)
        assert all(np.all(g == 0.0) for g in grads)

    def test_matches_finite_differences_on_random_models(self):
        for seed in range(5):
            rng = make_rng(100 + seed)
            dims = (4, 9, 6, 3)
            model = ClassifierModel.initialize(dims, rng)
            batch = EncodedBatch(rng.standard_normal((11, 4)), rng.integers(0, 3, 11))
            report = grad_check(model, batch, tolerance=1e-4)
            assert report.passed, f"seed {seed}: max rel err {report.max_rel_error}"


class TestAdam:
    def test_first_step_matches_hand_computation(self):
        # m-hat = g, v-hat = g^2, update = -lr * g / (|g| + eps)
        config = TrainConfig()
        params = [np.array([0.0])]
        state = AdamState.for_params(params)
        adam_step(params, [np.array([2.0])], state, config)
        assert params[0][0] == pytest.approx(-0.001, rel=1e-6)
        assert state.step_count == 1

    def test_zero_gradient_leaves_params_unchanged(self):
        config = TrainConfig()
        params = [np.array([1.5, -2.0])]
        state = AdamState.for_params(params)
        adam_step(params, [np.zeros(2)], state, config)
        assert np.array_equal(params[0], [1.5, -2.0])
        assert state.step_count == 1

    def test_constant_gradient_moves_monotonically(self):
        config = TrainConfig()
        params = [np.array([0.0])]
        state = AdamState.for_params(params)
        grad = [np.array([3.0])]
        adam_step(params, grad, state, config)
        after_one = params[0][0]
        adam_step(params, grad, state, config)
        after_two = params[0][0]
        assert after_one < 0.0
        assert after_two < after_one
        # second step hand-computed: m2 = 0.9*0.3 + 0.1*3, v2 = 0.999*0.009 + 0.001*9
        m2 = (config.beta1 * 0.1 * 3.0 + (1 - config.beta1) * 3.0) / (1 - config.beta1**2)
        v2 = (config.beta2 * 0.001 * 9.0 + (1 - config.beta2) * 9.0) / (1 - config.beta2**2)
        expected = after_one - config.learning_rate * m2 / (np.sqrt(v2) + config.epsilon_adam)
        assert after_two == pytest.approx(expected, rel=1e-9)

    def test_second_moment_nonnegative(self):
        rng = make_rng(8)
        params = [rng.standard_normal(20)]
        state = AdamState.for_params(params)
        for _ in range(5):
            adam_step(params, [rng.standard_normal(20)], state, TrainConfig())
        assert np.all(state.second_moment[0] >= 0)


class TestTrainConfig:
    def test_defaults_match_contract(self):
        config = TrainConfig()
        assert config.hidden_sizes == (50, 50)
        assert config.learning_rate == 0.001
        assert (config.beta1, config.beta2) == (0.9, 0.999)
        assert config.batch_size == 64
        assert config.max_epochs == 200
        assert config.patience == 20
        assert config.prob_floor == 1e-7

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(learning_rate=0.0),
            dict(beta1=1.0),
            dict(beta2=0.0),
            dict(prob_floor=0.0),
            dict(prob_floor=1.0),
            dict(patience=300),
            dict(hidden_sizes=(0,)),
            dict(batch_size=0),
        ],
    )
    def test_invalid_values_rejected(self, kwargs):
        with pytest.raises(ValueError):
            TrainConfig(**kwargs)


class TestOneHot:
    def test_blocks_have_exactly_one_hot_entry(self):
        codes = np.array([[0, 2, 1], [1, 0, 3]])
        encoded = one_hot_encode(codes, (2, 3, 4))
        assert encoded.shape == (2, 9)
        assert np.array_equal(encoded[:, :2].sum(axis=1), [1, 1])
        assert np.array_equal(encoded[:, 2:5].sum(axis=1), [1, 1])
        assert np.array_equal(encoded[:, 5:].sum(axis=1), [1, 1])
        assert encoded[0, 0] == 1 and encoded[0, 4] == 1 and encoded[0, 6] == 1

    def test_uniform_and_mixed_paths_agree(self):
        rng = make_rng(4)
        codes = rng.integers(0, 3, size=(20, 5))
        uniform = one_hot_encode(codes, (3,) * 5)
        padded = one_hot_encode(np.hstack([codes, np.zeros((20, 1), int)]), (3, 3, 3, 3, 3, 1))
        assert np.array_equal(uniform, padded[:, :-1])

    def test_out_of_range_symbol_rejected(self):
        with pytest.raises(ValueError, match="range"):
            one_hot_encode(np.array([[3]]), (3,))


class TestTrainClassifier:
    def test_uniform_target_reaches_ln2(self):
        # target independent of the input: the best CE is the marginal entropy
        rng = make_rng(21)
        codes = rng.integers(0, 4, size=(10_000, 1))
        targets = rng.integers(0, 2, size=10_000)
        data = EncodedDataset(targets, 2, codes=codes, alphabet_sizes=(4,))
        _, min_ce, _ = train_classifier(data, TrainConfig(seed=1))
        assert 0.67 <= min_ce <= 0.71

    def test_deterministic_target_reaches_zero(self):
        rng = make_rng(22)
        codes = rng.integers(0, 4, size=(4000, 1))
        data = EncodedDataset(codes[:, 0], 4, codes=codes, alphabet_sizes=(4,))
        _, min_ce, _ = train_classifier(data, TrainConfig(seed=2, max_epochs=60))
        assert min_ce <= 0.05

    def test_xor_target_needs_and_uses_hidden_layers(self):
        rng = make_rng(23)
        codes = rng.integers(0, 2, size=(8000, 2))
        targets = codes[:, 0] ^ codes[:, 1]
        data = EncodedDataset(targets, 2, codes=codes, alphabet_sizes=(2, 2))
        _, min_ce, _ = train_classifier(data, TrainConfig(seed=3))
        assert min_ce <= 0.1

    def test_same_seed_is_bit_identical(self):
        rng = make_rng(24)
        codes = rng.integers(0, 3, size=(2000, 2))
        targets = (codes[:, 0] + codes[:, 1]) % 3
        data = EncodedDataset(targets, 3, codes=codes, alphabet_sizes=(3, 3))
        config = TrainConfig(seed=9, max_epochs=12, patience=12)
        _, first, hist1 = train_classifier(data, config)
        _, second, hist2 = train_classifier(data, config)
        assert first == second
        assert hist1 == hist2

    def test_epoch_losses_nearly_monotone_on_separable_target(self):
        rng = make_rng(25)
        codes = rng.integers(0, 8, size=(5000, 1))
        targets = (codes[:, 0] >= 4).astype(int)
        data = EncodedDataset(targets, 2, codes=codes, alphabet_sizes=(8,))
        _, _, history = train_classifier(data, TrainConfig(seed=4, max_epochs=40, patience=40))
        tail = history[5:]
        assert all(b <= a + 1e-3 for a, b in zip(tail, tail[1:]))

    def test_history_minimum_is_reported_and_model_matches_it(self):
        rng = make_rng(26)
        codes = rng.integers(0, 4, size=(3000, 1))
        targets = (codes[:, 0] % 2).astype(int)
        data = EncodedDataset(targets, 2, codes=codes, alphabet_sizes=(4,))
        config = TrainConfig(seed=5, max_epochs=15, patience=15)
        model, min_ce, history = train_classifier(data, config)
        assert min_ce == pytest.approx(min(history), abs=0)
        assert data.full_ce(model, config.prob_floor) == pytest.approx(min_ce, abs=1e-12)

    def test_divergence_raises_with_diagnostic(self):
        # a non-finite activation poisons the loss; training must abort loudly
        rng = make_rng(27)
        dense = rng.standard_normal((500, 3))
        dense[37, 1] = np.inf
        data = EncodedDataset(rng.integers(0, 4, 500), 4, dense=dense)
        with np.errstate(all="ignore"), pytest.raises(TrainingDivergedError, match="epoch"):
            train_classifier(data, TrainConfig(seed=6, max_epochs=3, patience=3))

    def test_prob_floor_must_stay_below_uniform(self):
        rng = make_rng(28)
        codes = rng.integers(0, 2, size=(100, 1))
        data = EncodedDataset(codes[:, 0], 2, codes=codes, alphabet_sizes=(2,))
        with pytest.raises(ValueError, match="uniform"):
            train_classifier(data, TrainConfig(prob_floor=0.6))


class TestGradCheck:
    def test_linear_model_passes(self):
        rng = make_rng(31)
        model = ClassifierModel.initialize((6, 3), rng)
        batch = EncodedBatch(rng.standard_normal((10, 6)), rng.integers(0, 3, 10))
        report = grad_check(model, batch)
        assert report.passed
        assert report.max_rel_error <= 1e-4

    def test_default_two_hidden_layer_model_passes(self):
        rng = make_rng(32)
        model = ClassifierModel.initialize((4, 50, 50, 3), rng)
        batch = EncodedBatch(rng.standard_normal((6, 4)), rng.integers(0, 3, 6))
        report = grad_check(model, batch)
        assert report.passed, f"max rel err {report.max_rel_error}"

    def test_all_zero_parameters_pass_by_relu_convention(self):
        dims = (3, 5, 4, 2)
        weights = [np.zeros((a, b)) for a, b in zip(dims[:-1], dims[1:])]
        biases = [np.zeros(b) for b in dims[1:]]
        model = ClassifierModel(dims, weights, biases)
        rng = make_rng(33)
        batch = EncodedBatch(rng.standard_normal((8, 3)), rng.integers(0, 2, 8))
        report = grad_check(model, batch)
        assert report.passed

    def test_report_flags_broken_gradient(self):
        rng = make_rng(34)
        model = ClassifierModel.initialize((4, 3), rng)
        batch = EncodedBatch(rng.standard_normal((9, 4)), rng.integers(0, 3, 9))
        good = backward(model, batch, 1e-7)
        report = grad_check(model, batch)
        assert report.passed
        # corrupt one weight after checking: a fresh check must flag it
        model.weights[0][0, 0] += 0.5
        probs_changed = grad_check(model, batch)
        assert isinstance(probs_changed, GradCheckReport)
        assert good is not None


class TestEncodedDataset:
    def test_rejects_single_class(self):
        with pytest.raises(ValueError, match="2 classes"):
            EncodedDataset(np.zeros(5, int), 1, codes=np.zeros((5, 1), int), alphabet_sizes=(2,))

    def test_rejects_out_of_range_labels(self):
        with pytest.raises(ValueError, match="range"):
            EncodedDataset(np.array([0, 3]), 3, codes=np.zeros((2, 1), int), alphabet_sizes=(2,))

    def test_dense_and_categorical_are_exclusive(self):
        with pytest.raises(ValueError, match="exactly one"):
            EncodedDataset(np.array([0, 1]), 2)

    def test_full_ce_matches_direct_evaluation(self):
        rng = make_rng(41)
        codes = rng.integers(0, 3, size=(100, 2))
        targets = rng.integers(0, 2, size=100)
        data = EncodedDataset(targets, 2, codes=codes, alphabet_sizes=(3, 3))
        model = ClassifierModel.initialize((6, 5, 2), rng)
        direct = ce_loss(forward(model, one_hot_encode(codes, (3, 3))), targets, 1e-7)
        assert data.full_ce(model, 1e-7, chunk=17) == pytest.approx(direct, abs=1e-12)
