"""
Encoder training on the vectorized smooth AP.
"""

from .trainer import LandmarkTrainer, StepResult, objective_and_gradient, train

__all__ = ["LandmarkTrainer", "StepResult", "objective_and_gradient", "train"]
