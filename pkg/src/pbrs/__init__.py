"""Potential-based reward shaping with bias-shifted and exponential potentials."""

from .core import TerminationKind, Transition, discounted_return, run_episode
from .rng import RngStream
from .shaping import PotentialSpec, potential, recommended_bias, shaped_reward, shaping_term

__version__ = "0.1.0"

__all__ = [
    "PotentialSpec",
    "RngStream",
    "TerminationKind",
    "Transition",
    "discounted_return",
    "potential",
    "recommended_bias",
    "run_episode",
    "shaped_reward",
    "shaping_term",
]
