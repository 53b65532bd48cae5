import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coopmaneuver.mlp import (
    MlpModel,
    grad_check,
    pairwise_loss,
    sign_accuracy,
    train_pairwise,
)


def test_zero_model_outputs_zero():
    model = MlpModel.zeros()
    for x in np.random.default_rng(0).normal(size=(5, 4)) * 100:
        assert model.forward(x) == 0.0


def test_hand_set_single_feature_net():
    model = MlpModel.zeros((1, 16, 16, 1))
    model.weights[0][0, 0] = 0.5
    model.weights[1][0, 0] = 2.0
    model.weights[2][0, 0] = 3.0
    model.biases[2][0] = 0.25
    # y = 3 tanh(2 tanh(0.5 x)) + 0.25 at x = 1:
    # tanh(0.5) = 0.462117, tanh(0.924234) = 0.727895, 3 * 0.727895 + 0.25 = 2.433683
    expected = 3 * math.tanh(2 * math.tanh(0.5)) + 0.25
    assert expected == pytest.approx(2.433683, abs=1e-6)
    assert model.forward([1.0]) == pytest.approx(expected, abs=1e-12)


def test_normalization_mean_maps_to_zero():
    model = MlpModel.init(seed=3)
    model.mean = np.array([10.0, 5.0, 1.0, 2.0])
    model.std = np.array([4.0, 2.0, 1.0, 3.0])
    shifted = model.copy()
    shifted.mean = np.zeros(4)
    shifted.std = np.ones(4)
    assert model.forward(model.mean) == shifted.forward(np.zeros(4))


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        MlpModel.init().forward([1.0, 2.0])
    with pytest.raises(ValueError):
        MlpModel.zeros((4, 16, 16, 1)).forward_batch(np.zeros((3, 5)))


def test_invalid_std_rejected():
    m = MlpModel.zeros()
    with pytest.raises(ValueError):
        MlpModel(m.sizes, m.weights, m.biases, m.mean, np.zeros(4))


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10_000), scale=st.floats(0.1, 1e3))
def test_output_bounded_by_last_layer(seed, scale):
    model = MlpModel.init(seed=seed)
    model.biases[2][0] = 0.7
    x = np.random.default_rng(seed).normal(size=(20, 4)) * scale
    bound = np.abs(model.weights[2]).sum() + abs(model.biases[2][0])
    assert np.all(np.abs(model.forward_batch(x)) <= bound)


def test_serialization_round_trip(tmp_path):
    model = MlpModel.init(seed=5)
    model.mean = np.arange(4.0)
    model.std = np.arange(1.0, 5.0)
    model.save(tmp_path / "m.json")
    again = MlpModel.load(tmp_path / "m.json")
    x = np.random.default_rng(1).normal(size=(8, 4))
    assert np.array_equal(model.forward_batch(x), again.forward_batch(x))


# -- training ----------------------------------------------------------------------


def test_symmetric_single_pair_has_zero_loss():
    x = np.array([[1.0, 2.0, 3.0, 4.0]])
    _, hist = train_pairwise(MlpModel.init(seed=0), x, x, [0.0], epochs=3)
    assert hist[0] == 0.0


def _linear_dataset(n=2000, c=3.0, seed=0):
    rng = np.random.default_rng(seed)
    xi = rng.normal(size=(n, 4))
    xj = rng.normal(size=(n, 4))
    return xi, xj, c * (xi[:, 0] - xj[:, 0])


def test_linearly_realizable_targets_are_learned():
    xi, xj, y = _linear_dataset()
    model, hist = train_pairwise(MlpModel.init(seed=0), xi, xj, y, epochs=200, seed=0)
    rmse = math.sqrt(pairwise_loss(model, xi, xj, y))
    assert rmse < 0.05 * np.std(y)
    # epoch averages trend down: the last epoch beats every one of the first ten
    assert hist[-1] < min(hist[:10])


def test_training_is_deterministic():
    xi, xj, y = _linear_dataset(300)
    a, _ = train_pairwise(MlpModel.init(seed=1), xi, xj, y, epochs=5, seed=7)
    b, _ = train_pairwise(MlpModel.init(seed=1), xi, xj, y, epochs=5, seed=7)
    assert np.array_equal(a.get_params(), b.get_params())


def test_identical_sampling_order_gives_identical_weights():
    xi, xj, y = _linear_dataset(300)
    shuffled, _ = train_pairwise(MlpModel.init(seed=1), xi, xj, y, epochs=1, seed=11, normalize=False)
    order = np.random.default_rng(11).permutation(len(y))
    plain, _ = train_pairwise(MlpModel.init(seed=1), xi[order], xj[order], y[order], epochs=1,
                              seed=11, shuffle=False, normalize=False)
    assert np.array_equal(shuffled.get_params(), plain.get_params())


@pytest.mark.filterwarnings("ignore:overflow")
def test_non_finite_loss_aborts():
    xi, xj, y = _linear_dataset(200)
    with pytest.raises(FloatingPointError, match="epoch"):
        train_pairwise(MlpModel.init(seed=0), xi, xj, y * 1e200, epochs=2, lr=1e3)


def test_bad_datasets_rejected():
    with pytest.raises(ValueError):
        train_pairwise(MlpModel.init(), np.zeros((0, 4)), np.zeros((0, 4)), [])
    with pytest.raises(ValueError):
        train_pairwise(MlpModel.init(), np.zeros((1, 4)), np.zeros((1, 4)), [math.nan])


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_pairwise_loss_antisymmetric(seed):
    rng = np.random.default_rng(seed)
    model = MlpModel.init(seed=seed)
    xi, xj, y = rng.normal(size=(10, 4)), rng.normal(size=(10, 4)), rng.normal(size=10)
    assert pairwise_loss(model, xi, xj, y) == pytest.approx(pairwise_loss(model, xj, xi, -y), rel=1e-12)


def test_sign_accuracy_counts_agreement():
    model = MlpModel.zeros((1, 16, 16, 1))
    model.weights[0][0, 0] = 1.0
    model.weights[1][0, 0] = 1.0
    model.weights[2][0, 0] = 1.0
    xi = np.array([[1.0], [2.0], [0.0], [1.0]])
    xj = np.array([[0.0], [1.0], [1.0], [1.0]])
    # u increases with x: predicted signs +, +, -, 0
    assert sign_accuracy(model, xi, xj, [1.0, -1.0, -1.0, 0.0]) == pytest.approx(2 / 3)


# -- gradient check ----------------------------------------------------------------


@pytest.mark.parametrize("seed", range(10))
def test_grad_check_random_models(seed):
    rng = np.random.default_rng(seed)
    model = MlpModel.init(seed=seed)
    for b in model.biases:
        b[:] = rng.normal(scale=0.3, size=b.shape)
    model.mean = rng.normal(size=4)
    model.std = rng.uniform(0.5, 2.0, size=4)
    x = rng.normal(size=(3, 4))
    assert grad_check(model, x, 1e-5) < 1e-4


def test_grad_check_zero_model():
    assert grad_check(MlpModel.zeros(), np.ones(4), 1e-5) < 1e-9


def test_grad_check_after_training_step():
    xi, xj, y = _linear_dataset(64)
    model, _ = train_pairwise(MlpModel.init(seed=2), xi, xj, y, epochs=1, seed=0)
    assert grad_check(model, xi[:2], 1e-5) < 1e-4


def test_grad_check_epsilon_range():
    with pytest.raises(ValueError):
        grad_check(MlpModel.zeros(), np.ones(4), 1e-2)
