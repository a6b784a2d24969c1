"""
Patch encoder phi: flattened P x P x 3 patch -> R^c.

Three linear layers with softplus in between (192 -> 128 -> 128 -> 64 for
8 x 8 patches), float64 throughout, with hand-written reverse accumulation.
"""

import logging
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np
from scipy.special import expit

from ..exceptions import CorruptedStateError, ShapeMismatchError

logger = logging.getLogger(__name__)

DEFAULT_LAYER_SIZES = (192, 128, 128, 64)


def softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def param_names(num_layers: int) -> list[str]:
    names = []
    for k in range(1, num_layers + 1):
        names += [f"W{k}", f"b{k}"]
    return names


@dataclass
class EncoderState:
    """Parameters of the encoder. ``W_k`` has shape (fan_in, fan_out)."""

    params: dict[str, np.ndarray]
    layer_sizes: tuple[int, ...] = DEFAULT_LAYER_SIZES
    activation: str = "softplus"
    init_seed: int | None = None

    @property
    def num_layers(self) -> int:
        return len(self.layer_sizes) - 1

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_dim(self) -> int:
        return self.layer_sizes[-1]

    @property
    def parameter_count(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def names(self) -> list[str]:
        return param_names(self.num_layers)

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.params.values())

    def copy(self) -> "EncoderState":
        return EncoderState(
            {k: v.copy() for k, v in self.params.items()},
            tuple(self.layer_sizes),
            self.activation,
            self.init_seed,
        )

    def with_params(self, params: dict[str, np.ndarray]) -> "EncoderState":
        return EncoderState(params, tuple(self.layer_sizes), self.activation, self.init_seed)

    def architecture(self) -> dict:
        return {
            "layer_sizes": list(self.layer_sizes),
            "activation": self.activation,
            "init_seed": self.init_seed,
        }


def init_encoder(
    layer_sizes=DEFAULT_LAYER_SIZES, seed: int = 0, activation: str = "softplus"
) -> EncoderState:
    """Weights and biases uniform in +-1/sqrt(fan_in)."""
    if activation != "softplus":
        raise ValueError(f"Unsupported activation: {activation}")
    rng = np.random.default_rng(seed)
    params = {}
    for k, (fan_in, fan_out) in enumerate(zip(layer_sizes[:-1], layer_sizes[1:], strict=True), start=1):
        bound = 1.0 / np.sqrt(fan_in)
        params[f"W{k}"] = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        params[f"b{k}"] = rng.uniform(-bound, bound, size=fan_out)
    state = EncoderState(params, tuple(int(s) for s in layer_sizes), activation, seed)
    logger.debug(f"Encoder initialised: sizes={layer_sizes}, {state.parameter_count} parameters")
    return state


def _check_inputs(state: EncoderState, patches: np.ndarray) -> np.ndarray:
    if not state.is_finite():
        raise CorruptedStateError("Encoder parameters contain NaN or infinite values")
    patches = np.asarray(patches, dtype=np.float64)
    if patches.ndim != 2 or patches.shape[1] != state.input_dim:
        raise ShapeMismatchError(
            f"Expected patches of shape (n, {state.input_dim}), got {patches.shape}"
        )
    return patches


def _forward_cache(state: EncoderState, x: np.ndarray):
    pre_activations = []
    h = x
    for k in range(1, state.num_layers + 1):
        z = h @ state.params[f"W{k}"] + state.params[f"b{k}"]
        if k < state.num_layers:
            pre_activations.append((h, z))
            h = softplus(z)
        else:
            pre_activations.append((h, None))
            h = z
    return h, pre_activations


def forward(state: EncoderState, patches: np.ndarray) -> np.ndarray:
    """
    Args:
        state: Encoder parameters
        patches: (n, P*P*3) normalised pixels

    Returns:
        (n, c) embeddings

    Raises:
        CorruptedStateError: non-finite parameters
        ShapeMismatchError: wrong input width
    """
    x = _check_inputs(state, patches)
    out, _ = _forward_cache(state, x)
    return out


def backward(state: EncoderState, patches: np.ndarray, upstream: np.ndarray) -> dict[str, np.ndarray]:
    """
    Parameter gradients of sum(upstream * forward(patches)).

    Raises:
        ShapeMismatchError: ``upstream`` is not (n, c)
    """
    x = _check_inputs(state, patches)
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != (x.shape[0], state.output_dim):
        raise ShapeMismatchError(
            f"Expected upstream gradient of shape {(x.shape[0], state.output_dim)}, got {upstream.shape}"
        )
    _, cache = _forward_cache(state, x)

    grads: dict[str, np.ndarray] = {}
    delta = upstream
    for k in range(state.num_layers, 0, -1):
        h_in, z = cache[k - 1]
        if z is not None:
            delta = delta * expit(z)
        grads[f"W{k}"] = h_in.T @ delta
        grads[f"b{k}"] = delta.sum(axis=0)
        if k > 1:
            delta = delta @ state.params[f"W{k}"].T
    return {name: grads[name] for name in state.names()}


def backward_input(state: EncoderState, patches: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    """Gradient of sum(upstream * forward(patches)) with respect to the patches."""
    x = _check_inputs(state, patches)
    _, cache = _forward_cache(state, x)
    delta = np.asarray(upstream, dtype=np.float64)
    for k in range(state.num_layers, 0, -1):
        _, z = cache[k - 1]
        if z is not None:
            delta = delta * expit(z)
        delta = delta @ state.params[f"W{k}"].T
    return delta


class PatchEncoder(Protocol):
    def encode(self, batch) -> np.ndarray: ...


@dataclass
class MLPEncoder:
    """Encoder wrapper used by the evaluations."""

    state: EncoderState
    name: str = "trained"

    def encode(self, batch) -> np.ndarray:
        return forward(self.state, batch.pixels)


class FrozenRandomEncoder(MLPEncoder):
    """The untrained network at its initialisation seed."""

    def __init__(self, layer_sizes=DEFAULT_LAYER_SIZES, seed: int = 0):
        super().__init__(init_encoder(layer_sizes, seed), name="random")


@dataclass
class NoiseEncoder:
    """
    Content-independent embeddings: a fixed random code per patch identity
    (environment, view, grid cell), whatever the pixels show.
    """

    dim: int = 64
    seed: int = 0
    name: str = field(default="noise")

    def encode(self, batch) -> np.ndarray:
        rows = []
        for env, view, (r, c) in zip(batch.env, batch.view_ids, batch.grid, strict=True):
            rng = np.random.default_rng([self.seed, int(env), int(view), int(r), int(c)])
            rows.append(rng.standard_normal(self.dim))
        return np.stack(rows) if rows else np.zeros((0, self.dim))
