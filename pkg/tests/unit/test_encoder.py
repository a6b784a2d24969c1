"""Tests for the patch encoder, its gradients and the wrappers."""

import numpy as np
import pytest
import torch

from landmark_retrieval.exceptions import CorruptedStateError, ShapeMismatchError, ZeroNormError
from landmark_retrieval.models import (
    DEFAULT_LAYER_SIZES,
    FrozenRandomEncoder,
    MLPEncoder,
    NoiseEncoder,
    backward,
    backward_input,
    forward,
    init_encoder,
    softplus,
)
from landmark_retrieval.objective import cosine_scores
from tests.factories import make_batch

SMALL = (12, 6, 5, 4)


def torch_forward(state, patches: np.ndarray):
    """Reference forward pass in torch, float64, returning output and parameter tensors."""
    params = {k: torch.tensor(v, requires_grad=True) for k, v in state.params.items()}
    h = torch.tensor(patches)
    for k in range(1, state.num_layers + 1):
        h = h @ params[f"W{k}"] + params[f"b{k}"]
        if k < state.num_layers:
            h = torch.logaddexp(torch.zeros_like(h), h)
    return h, params


class TestForward:
    def test_default_architecture(self):
        """Test layer shapes and the parameter count of the default encoder."""
        state = init_encoder(DEFAULT_LAYER_SIZES, seed=0)
        assert state.params["W1"].shape == (192, 128)
        assert state.params["b3"].shape == (64,)
        assert state.parameter_count == 192 * 128 + 128 + 128 * 128 + 128 + 128 * 64 + 64
        assert state.names() == ["W1", "b1", "W2", "b2", "W3", "b3"]

    def test_output_shape(self):
        """Test that n patches map to n embeddings."""
        state = init_encoder(SMALL, seed=1)
        assert forward(state, np.zeros((7, 12))).shape == (7, 4)

    def test_seeded_initialisation(self):
        """Test that the same seed gives the same weights."""
        a, b = init_encoder(SMALL, seed=3), init_encoder(SMALL, seed=3)
        for name in a.names():
            np.testing.assert_array_equal(a.params[name], b.params[name])

    def test_identical_patches_identical_embeddings(self):
        """Test that the encoder is a function of the pixels."""
        state = init_encoder(SMALL, seed=2)
        x = np.random.default_rng(0).uniform(size=(1, 12))
        out = forward(state, np.vstack([x, x]))
        np.testing.assert_array_equal(out[0], out[1])

    def test_zero_parameters_give_dead_embeddings(self):
        """Test that an all-zero network produces zero embeddings, which cosine scoring refuses."""
        state = init_encoder(SMALL, seed=0)
        state = state.with_params({k: np.zeros_like(v) for k, v in state.params.items()})
        out = forward(state, np.ones((3, 12)))
        assert np.all(out == 0.0)
        with pytest.raises(ZeroNormError):
            cosine_scores(out, np.ones((1, 4)))

    def test_nan_parameters(self):
        """Test that a corrupted state is refused."""
        state = init_encoder(SMALL, seed=0)
        state.params["W2"][0, 0] = np.nan
        with pytest.raises(CorruptedStateError):
            forward(state, np.zeros((1, 12)))

    def test_wrong_input_width(self):
        """Test that the patch width must match the first layer."""
        with pytest.raises(ShapeMismatchError):
            forward(init_encoder(SMALL, seed=0), np.zeros((2, 13)))

    def test_matches_torch(self):
        """Test the forward pass against a torch reference."""
        state = init_encoder(SMALL, seed=4)
        x = np.random.default_rng(1).uniform(size=(9, 12))
        ref, _ = torch_forward(state, x)
        np.testing.assert_allclose(forward(state, x), ref.detach().numpy(), atol=1e-12)

    def test_lipschitz_bound(self):
        """Test that output changes are bounded by the product of weight spectral norms."""
        state = init_encoder(SMALL, seed=5)
        bound = np.prod([np.linalg.norm(state.params[f"W{k}"], 2) for k in range(1, 4)])
        rng = np.random.default_rng(2)
        for _ in range(50):
            x = rng.uniform(size=(1, 12))
            delta = np.zeros((1, 12))
            delta[0, rng.integers(12)] = rng.uniform(-0.1, 0.1)
            change = np.linalg.norm(forward(state, x + delta) - forward(state, x))
            assert change <= bound * np.linalg.norm(delta) + 1e-12

    def test_softplus_is_stable(self):
        """Test softplus at large magnitudes."""
        np.testing.assert_allclose(softplus(np.array([-1000.0, 0.0, 1000.0])), [0.0, np.log(2.0), 1000.0])


class TestBackward:
    def test_matches_torch(self):
        """Test parameter gradients against torch autograd."""
        state = init_encoder(SMALL, seed=6)
        rng = np.random.default_rng(3)
        x, upstream = rng.uniform(size=(8, 12)), rng.normal(size=(8, 4))
        out, params = torch_forward(state, x)
        (out * torch.tensor(upstream)).sum().backward()
        grads = backward(state, x, upstream)
        for name in state.names():
            np.testing.assert_allclose(grads[name], params[name].grad.numpy(), atol=1e-10)

    def test_finite_differences_every_layer(self):
        """Test central differences on every parameter of a small encoder."""
        state = init_encoder(SMALL, seed=7)
        rng = np.random.default_rng(4)
        x, upstream = rng.uniform(size=(5, 12)), rng.normal(size=(5, 4))
        grads = backward(state, x, upstream)
        h = 1e-5
        for name in state.names():
            numeric = np.zeros_like(state.params[name])
            for idx in np.ndindex(numeric.shape):
                plus, minus = state.copy(), state.copy()
                plus.params[name][idx] += h
                minus.params[name][idx] -= h
                numeric[idx] = np.sum(upstream * (forward(plus, x) - forward(minus, x))) / (2 * h)
            scale = max(np.abs(numeric).max(), 1e-8)
            assert np.abs(grads[name] - numeric).max() / scale < 1e-4, name

    def test_linear_in_upstream(self):
        """Test backward(g1 + g2) = backward(g1) + backward(g2)."""
        state = init_encoder(SMALL, seed=8)
        rng = np.random.default_rng(5)
        x, g1, g2 = rng.uniform(size=(6, 12)), rng.normal(size=(6, 4)), rng.normal(size=(6, 4))
        both = backward(state, x, g1 + g2)
        a, b = backward(state, x, g1), backward(state, x, g2)
        for name in state.names():
            np.testing.assert_allclose(both[name], a[name] + b[name], atol=1e-10)

    def test_zero_upstream(self):
        """Test that a zero upstream gradient gives zero parameter gradients."""
        state = init_encoder(SMALL, seed=9)
        grads = backward(state, np.ones((3, 12)), np.zeros((3, 4)))
        assert all(np.all(g == 0.0) for g in grads.values())

    def test_upstream_shape(self):
        """Test that the upstream gradient must be (n, c)."""
        with pytest.raises(ShapeMismatchError):
            backward(init_encoder(SMALL, seed=0), np.zeros((3, 12)), np.zeros((3, 5)))

    def test_input_gradient(self):
        """Test the gradient with respect to the pixels by central differences."""
        state = init_encoder(SMALL, seed=10)
        rng = np.random.default_rng(6)
        x, upstream = rng.uniform(size=(2, 12)), rng.normal(size=(2, 4))
        grad = backward_input(state, x, upstream)
        h = 1e-6
        for idx in [(0, 0), (0, 7), (1, 11)]:
            plus, minus = x.copy(), x.copy()
            plus[idx] += h
            minus[idx] -= h
            numeric = np.sum(upstream * (forward(state, plus) - forward(state, minus))) / (2 * h)
            assert grad[idx] == pytest.approx(numeric, rel=1e-5, abs=1e-9)


class TestWrappers:
    def test_mlp_encoder_uses_batch_pixels(self):
        """Test that the wrapper encodes the batch pixel column."""
        state = init_encoder(SMALL, seed=11)
        batch = make_batch(np.zeros((3, 3)), patch_size=2)
        np.testing.assert_array_equal(MLPEncoder(state).encode(batch), forward(state, batch.pixels))

    def test_frozen_random_encoder(self):
        """Test that the random baseline is the untrained network at its seed."""
        batch = make_batch(np.zeros((3, 3)), patch_size=2)
        expected = forward(init_encoder(SMALL, seed=12), batch.pixels)
        np.testing.assert_array_equal(FrozenRandomEncoder(SMALL, seed=12).encode(batch), expected)

    def test_noise_encoder_ignores_pixels(self):
        """Test that noise embeddings depend on patch identity only."""
        encoder = NoiseEncoder(dim=5, seed=1)
        a = make_batch(np.zeros((4, 3)), seed=0)
        b = make_batch(np.ones((4, 3)), seed=1)
        np.testing.assert_array_equal(encoder.encode(a), encoder.encode(b))
        out = encoder.encode(a)
        assert out.shape == (4, 5)
        assert not np.array_equal(out[0], out[1])
