"""Feedback-bit allocation and distributed zero-forcing for multicell MIMO."""

from .allocation import BitAllocation, PolicySpec
from .channel import ExpDecayParams, RandomStream, WynerParams
from .evaluator import SimConfig, SweepResult, run_sweep
from .quantizer import LocalEstimate, QuantizerSpec

__version__ = "0.1.0"

__all__ = [
    "BitAllocation",
    "PolicySpec",
    "ExpDecayParams",
    "RandomStream",
    "WynerParams",
    "SimConfig",
    "SweepResult",
    "run_sweep",
    "LocalEstimate",
    "QuantizerSpec",
]
