"""
Unit tests for the dense network substrate.
"""

import numpy as np
import pytest

from cfpp.errors import CacheUsageError, ShapeError
from cfpp.nn import MLP, AdamState, adam_step, grad_check, linear_loss, quadratic_loss


class TestMLP:
    """Test MLP forward and backward passes."""

    def test_output_shapes(self):
        """Test that single inputs and batches keep their batching."""
        net = MLP([3, 8, 2], seed=0)
        y, _ = net.forward(np.zeros(3))
        assert y.shape == (2,)
        Y, _ = net.forward(np.zeros((5, 3)))
        assert Y.shape == (5, 2)

    def test_same_seed_same_weights(self):
        """Test that initialization is reproducible."""
        a = MLP([4, 6, 1], seed=3)
        b = MLP([4, 6, 1], seed=3)
        for p, q in zip(a.params, b.params):
            np.testing.assert_array_equal(p, q)

    def test_zero_biases_and_glorot_bound(self):
        """Test the initial parameter ranges."""
        net = MLP([3, 64, 1], seed=1)
        W0, b0, W1, b1 = net.params
        assert np.all(b0 == 0) and np.all(b1 == 0)
        assert np.abs(W0).max() <= np.sqrt(6.0 / 67.0)
        assert W0.shape == (3, 64) and W1.shape == (64, 1)

    def test_linear_network(self):
        """Test that a network without hidden layers is affine."""
        net = MLP([2, 1], seed=0)
        net.set_params([np.array([[2.0], [-1.0]]), np.array([0.5])])
        np.testing.assert_allclose(net(np.array([1.0, 3.0])), [-0.5])

    def test_input_width_checked(self):
        """Test that a wrong input width raises ShapeError."""
        net = MLP([3, 4, 1], seed=0)
        with pytest.raises(ShapeError, match="input width"):
            net.forward(np.zeros(4))

    def test_invalid_widths(self):
        """Test that a network needs at least two positive widths."""
        with pytest.raises(ShapeError):
            MLP([3])
        with pytest.raises(ShapeError):
            MLP([3, 0, 1])

    def test_set_params_shape_checked(self):
        """Test that parameter shapes must match."""
        net = MLP([3, 4, 1], seed=0)
        params = net.params
        params[0] = np.zeros((4, 3))
        with pytest.raises(ShapeError, match="parameter 0"):
            net.set_params(params)

    def test_set_params_rejects_nan(self):
        """Test that non-finite parameters are refused."""
        net = MLP([3, 4, 1], seed=0)
        params = net.params
        params[1][0] = np.nan
        with pytest.raises(ValueError, match="finite"):
            net.set_params(params)

    def test_stale_cache_rejected(self):
        """Test that a cache cannot be used after the parameters changed."""
        net = MLP([3, 4, 1], seed=0)
        _, cache = net.forward(np.ones(3))
        net.set_params(net.params)
        with pytest.raises(CacheUsageError):
            net.backward(cache, np.ones(1))

    def test_foreign_cache_rejected(self):
        """Test that a cache only works with the network that produced it."""
        net = MLP([3, 4, 1], seed=0)
        other = net.copy()
        _, cache = net.forward(np.ones(3))
        with pytest.raises(CacheUsageError):
            other.backward(cache, np.ones(1))

    def test_input_gradient(self):
        """Test the input gradient against finite differences."""
        net = MLP([3, 5, 1], seed=2)
        x = np.array([0.3, -0.2, 0.8])
        _, cache = net.forward(x)
        _, dx = net.backward(cache, np.ones(1))
        h = 1e-6
        for k in range(3):
            e = np.zeros(3)
            e[k] = h
            numeric = (net(x + e)[0] - net(x - e)[0]) / (2 * h)
            assert dx[k] == pytest.approx(numeric, rel=1e-5, abs=1e-9)

    def test_batch_gradient_is_sum(self):
        """Test that batch gradients add up the per-row gradients."""
        net = MLP([2, 3, 1], seed=4)
        X = np.array([[0.1, 0.2], [-0.5, 0.7]])
        _, cache = net.forward(X)
        batch, _ = net.backward(cache, np.ones((2, 1)))
        rows = []
        for x in X:
            _, c = net.forward(x)
            rows.append(net.backward(c, np.ones(1))[0])
        for k, g in enumerate(batch):
            np.testing.assert_allclose(g, rows[0][k] + rows[1][k])


class TestGradCheck:
    """Test grad_check function."""

    def test_random_small_net(self):
        """Test that a random 3-4-1 net passes the finite-difference check."""
        net = MLP([3, 4, 1], seed=11)
        error = grad_check(net, np.array([0.5, -1.0, 0.2]), linear_loss(np.ones(1)))
        assert error < 1e-4

    def test_batch_quadratic_loss(self):
        """Test a batch through a deeper net with a quadratic loss."""
        rng = np.random.default_rng(0)
        net = MLP([3, 16, 16, 2], seed=1)
        X = rng.normal(size=(6, 3))
        error = grad_check(net, X, quadratic_loss(rng.normal(size=(6, 2))), sample=10)
        assert error < 1e-4

    def test_parameters_restored(self):
        """Test that checking leaves the parameters as they were."""
        net = MLP([3, 4, 1], seed=5)
        before = net.params
        grad_check(net, np.ones(3), linear_loss(np.ones(1)))
        for p, q in zip(before, net.params):
            np.testing.assert_array_equal(p, q)

    def test_detects_wrong_gradient(self):
        """Test that a loss with an inconsistent gradient is caught."""
        net = MLP([3, 4, 1], seed=5)
        wrong = lambda y: (float(np.sum(y)), 2.0 * np.ones_like(y))
        assert grad_check(net, np.ones(3), wrong) > 0.1


class TestAdam:
    """Test adam_step function."""

    def test_first_step_moves_by_lr(self):
        """Test that the bias-corrected first step has size lr."""
        state = AdamState.zeros_like([np.zeros(2)], lr=0.1)
        new, state = adam_step([np.zeros(2)], [np.array([5.0, -0.01])], state)
        np.testing.assert_allclose(new[0], [-0.1, 0.1], rtol=1e-6)
        assert state.step == 1

    def test_inputs_untouched(self):
        """Test that parameters and state are not modified in place."""
        params = [np.ones(3)]
        state = AdamState.zeros_like(params)
        adam_step(params, [np.ones(3)], state)
        np.testing.assert_array_equal(params[0], np.ones(3))
        assert state.step == 0
        np.testing.assert_array_equal(state.m[0], np.zeros(3))

    def test_minimizes_quadratic(self):
        """Test that Adam drives a network output towards a target."""
        net = MLP([1, 1], seed=0)
        state = AdamState.zeros_like(net.params, lr=0.05)
        loss = quadratic_loss(np.array([[3.0]]))
        x = np.array([[1.0]])
        for _ in range(500):
            out, cache = net.forward(x)
            _, upstream = loss(out)
            grads, _ = net.backward(cache, upstream)
            params, state = adam_step(net.params, grads, state)
            net.set_params(params)
        assert net(x)[0, 0] == pytest.approx(3.0, abs=0.05)

    def test_shape_mismatch(self):
        """Test that gradients must match the parameters."""
        state = AdamState.zeros_like([np.zeros(2)])
        with pytest.raises(ShapeError):
            adam_step([np.zeros(2)], [np.zeros(3)], state)


class TestSerialization:
    """Test checkpoint persistence."""

    def test_save_load_exact(self, tmp_path):
        """Test that a saved network reloads with identical outputs."""
        net = MLP([3, 8, 1], seed=9)
        path = tmp_path / "net.json"
        net.save(path)
        loaded = MLP.load(path)
        assert loaded.widths == net.widths
        x = np.array([[0.1, 0.2, 0.3], [1.0, -2.0, 0.5]])
        np.testing.assert_array_equal(loaded(x), net(x))

    def test_row_major_layout(self):
        """Test the documented checkpoint layout."""
        net = MLP([2, 1], seed=0)
        net.set_params([np.array([[1.0], [2.0]]), np.array([3.0])])
        assert net.to_dict() == {"widths": [2, 1], "weights": [[1.0, 2.0]], "biases": [[3.0]]}

    def test_corrupt_checkpoint(self):
        """Test that stored weights must fit the stored widths."""
        with pytest.raises(ShapeError, match="layer 0"):
            MLP.from_dict({"widths": [2, 1], "weights": [[1.0]], "biases": [[0.0]]})
