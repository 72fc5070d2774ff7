"""Hybrid beamforming for mmWave multi-user MIMO.

Fully-digital design by fractional programming, hybrid factorization by
majorization-minimization, and an extreme-learning-machine surrogate
trained on the resulting designs.
"""

from .channel import ChannelModelParams, ChannelSet, SystemConfig, generate_channel, perturb_channel
from .metrics import FdBeamformers, HybridBeamformers, compose_effective, sum_rate

__version__ = "0.1.0"

__all__ = [
    "ChannelModelParams",
    "ChannelSet",
    "SystemConfig",
    "generate_channel",
    "perturb_channel",
    "FdBeamformers",
    "HybridBeamformers",
    "compose_effective",
    "sum_rate",
]
