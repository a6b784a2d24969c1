"""Tests for the Adam update and binary checkpoints."""

import logging

import numpy as np
import pytest
import torch

from landmark_retrieval.exceptions import CheckpointError
from landmark_retrieval.models import (
    Checkpoint,
    OptimizerState,
    adam_step,
    config_hash,
    forward,
    init_encoder,
    load_checkpoint,
    save_checkpoint,
)
from landmark_retrieval.models.checkpoint import CHECKPOINT_MAGIC


@pytest.fixture
def state():
    return init_encoder((12, 6, 5, 4), seed=0)


def random_grads(rng, params):
    return {k: rng.normal(size=p.shape) for k, p in params.items()}


class TestAdam:
    def test_matches_torch_adam(self, state):
        """Test 20 steps against torch.optim.Adam in float64."""
        rng = np.random.default_rng(0)
        tensors = {k: torch.tensor(v.copy(), requires_grad=True) for k, v in state.params.items()}
        reference = torch.optim.Adam(list(tensors.values()), lr=1e-3, betas=(0.9, 0.999), eps=1e-8)
        params = {k: v.copy() for k, v in state.params.items()}
        opt = OptimizerState.zeros_like(params, lr=1e-3)
        for _ in range(20):
            grads = random_grads(rng, params)
            for k, t in tensors.items():
                t.grad = torch.tensor(grads[k])
            reference.step()
            params, opt = adam_step(opt, params, grads)
        assert opt.step == 20
        for k, t in tensors.items():
            np.testing.assert_allclose(params[k], t.detach().numpy(), rtol=1e-10, atol=1e-14)

    def test_zero_gradient_keeps_parameters(self, state):
        """Test that a zero gradient from a fresh state moves nothing."""
        opt = OptimizerState.zeros_like(state.params)
        params, opt = adam_step(opt, state.params, {k: np.zeros_like(v) for k, v in state.params.items()})
        for k in state.names():
            np.testing.assert_array_equal(params[k], state.params[k])
        assert opt.step == 1

    def test_constant_gradient_moves_by_lr(self, state):
        """Test that a constant gradient moves each parameter by about lr per step."""
        grads = {k: np.full_like(v, 0.5) for k, v in state.params.items()}
        params, opt = state.params, OptimizerState.zeros_like(state.params, lr=1e-3)
        for _ in range(100):
            new, opt = adam_step(opt, params, grads)
            delta = params["W1"] - new["W1"]
            params = new
        np.testing.assert_allclose(delta, 1e-3, rtol=1e-6)

    def test_non_finite_gradient_skips_step(self, state, caplog):
        """Test that a NaN gradient leaves parameters and moments untouched, with a warning."""
        opt = OptimizerState.zeros_like(state.params)
        grads = {k: np.zeros_like(v) for k, v in state.params.items()}
        grads["b2"][0] = np.nan
        with caplog.at_level(logging.WARNING):
            params, new_opt = adam_step(opt, state.params, grads)
        assert params is state.params
        assert new_opt is opt
        assert "Non-finite gradient" in caplog.text


class TestCheckpoint:
    def make_checkpoint(self, state, steps: int = 3) -> Checkpoint:
        rng = np.random.default_rng(1)
        params, opt = state.params, OptimizerState.zeros_like(state.params, lr=5e-4)
        for _ in range(steps):
            params, opt = adam_step(opt, params, random_grads(rng, params))
        return Checkpoint(state.with_params(params), opt, epoch=2, global_step=steps, config_hash="abc")

    def test_round_trip_is_bitwise(self, tmp_path, state):
        """Test that a saved encoder reloads with bitwise identical outputs and moments."""
        ckpt = self.make_checkpoint(state)
        loaded = load_checkpoint(save_checkpoint(tmp_path / "a.ckpt", ckpt))
        x = np.random.default_rng(2).uniform(size=(5, 12))
        np.testing.assert_array_equal(forward(loaded.state, x), forward(ckpt.state, x))
        for k in state.names():
            np.testing.assert_array_equal(loaded.optimizer.m[k], ckpt.optimizer.m[k])
            np.testing.assert_array_equal(loaded.optimizer.v[k], ckpt.optimizer.v[k])
        assert loaded.optimizer.step == 3
        assert loaded.optimizer.lr == 5e-4
        assert (loaded.epoch, loaded.global_step, loaded.config_hash) == (2, 3, "abc")
        assert loaded.state.layer_sizes == (12, 6, 5, 4)

    def test_identical_runs_identical_bytes(self, tmp_path, state):
        """Test that the same optimisation writes byte-identical checkpoints."""
        a = save_checkpoint(tmp_path / "a.ckpt", self.make_checkpoint(state))
        b = save_checkpoint(tmp_path / "b.ckpt", self.make_checkpoint(state))
        assert a.read_bytes() == b.read_bytes()
        assert not (tmp_path / "a.ckpt.tmp").exists()

    def test_missing_file(self, tmp_path):
        """Test that a missing checkpoint is reported."""
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "none.ckpt")

    def test_bad_magic(self, tmp_path):
        """Test that a foreign file is refused."""
        path = tmp_path / "x.ckpt"
        path.write_bytes(b"PK\x03\x04" + bytes(40))
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_unknown_version(self, tmp_path, state):
        """Test that an unknown format version is refused."""
        path = save_checkpoint(tmp_path / "a.ckpt", self.make_checkpoint(state))
        data = bytearray(path.read_bytes())
        data[len(CHECKPOINT_MAGIC)] = 99
        path.write_bytes(bytes(data))
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_truncated_payload(self, tmp_path, state):
        """Test that a truncated payload is refused."""
        path = save_checkpoint(tmp_path / "a.ckpt", self.make_checkpoint(state))
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_config_hash(self):
        """Test that the configuration hash ignores key order and tracks values."""
        assert config_hash({"a": 1, "b": [1, 2]}) == config_hash({"b": [1, 2], "a": 1})
        assert config_hash({"a": 1}) != config_hash({"a": 2})
        assert len(config_hash({})) == 16
