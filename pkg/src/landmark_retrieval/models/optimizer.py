"""
Adam, as a pure function over parameter dictionaries.

The trainer maximises the objective by descending on its negation.
"""

import logging
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)


@dataclass
class OptimizerState:
    """First/second moments per parameter plus the step count."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params: dict[str, np.ndarray], lr: float = 1e-4, beta1: float = 0.9,
                   beta2: float = 0.999, eps: float = 1e-8) -> "OptimizerState":
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
            step=0,
            lr=lr,
            beta1=beta1,
            beta2=beta2,
            eps=eps,
        )

    @classmethod
    def from_config(cls, params, train_cfg) -> "OptimizerState":
        return cls.zeros_like(params, train_cfg.learning_rate, train_cfg.beta1, train_cfg.beta2, train_cfg.eps)

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in (*self.m.values(), *self.v.values()))


def adam_step(
    opt: OptimizerState, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]
) -> tuple[dict[str, np.ndarray], OptimizerState]:
    """
    One bias-corrected Adam update (descent).

    Args:
        opt: Current optimizer state
        params: Current parameters
        grads: Gradients of the loss

    Returns:
        (new params, new optimizer state). With a non-finite gradient both are
        returned unchanged and a warning is logged.
    """
    if any(not np.all(np.isfinite(g)) for g in grads.values()):
        logger.warning(f"Non-finite gradient at step {opt.step + 1}: Adam step skipped")
        return params, opt

    step = opt.step + 1
    bias1 = 1.0 - opt.beta1**step
    bias2_sqrt = np.sqrt(1.0 - opt.beta2**step)
    step_size = opt.lr / bias1

    new_params, new_m, new_v = {}, {}, {}
    for name, p in params.items():
        g = grads[name]
        m = opt.beta1 * opt.m[name] + (1.0 - opt.beta1) * g
        v = opt.beta2 * opt.v[name] + (1.0 - opt.beta2) * g * g
        denom = np.sqrt(v) / bias2_sqrt + opt.eps
        new_params[name] = p - step_size * (m / denom)
        new_m[name] = m
        new_v[name] = v

    return new_params, OptimizerState(new_m, new_v, step, opt.lr, opt.beta1, opt.beta2, opt.eps)
