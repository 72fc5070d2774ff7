"""Beamformer containers and the Gaussian-input system sum-rate."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from .channel import ChannelSet, SystemConfig
from .numerics import SingularMatrixError, hermitize

__all__ = [
    "FdBeamformers",
    "HybridBeamformers",
    "compose_effective",
    "interference_cov",
    "sum_rate",
    "user_rates",
    "transmit_power",
]


@dataclass
class FdBeamformers:
    """Per-user fully-digital precoders ``F[k]`` (Nt x Ns) and combiners ``W[k]`` (Nr x Ns)."""

    F: List[np.ndarray]
    W: List[np.ndarray]

    def __post_init__(self):
        if len(self.F) != len(self.W):
            raise ValueError("F and W must have one entry per user")

    @property
    def K(self) -> int:
        return len(self.F)

    def copy(self) -> "FdBeamformers":
        return FdBeamformers([f.copy() for f in self.F], [w.copy() for w in self.W])


@dataclass
class HybridBeamformers:
    """Shared analog precoder and per-user digital / analog factors.

    Attributes
    ----------
    Frf : ndarray, Nt x Nrft
        Constant-modulus analog precoder.
    Fbb : list of ndarray, Nrft x Ns
        Digital precoders.
    Wrf : list of ndarray, Nr x Nrfr
        Constant-modulus analog combiners.
    Wbb : list of ndarray, Nrfr x Ns
        Digital combiners.
    """

    Frf: np.ndarray
    Fbb: List[np.ndarray]
    Wrf: List[np.ndarray]
    Wbb: List[np.ndarray]

    @property
    def K(self) -> int:
        return len(self.Fbb)

    def max_modulus_error(self) -> float:
        errs = [np.max(np.abs(np.abs(self.Frf) - 1.0))]
        errs += [np.max(np.abs(np.abs(w) - 1.0)) for w in self.Wrf]
        return float(max(errs))

    def power(self) -> float:
        return transmit_power([self.Frf @ fbb for fbb in self.Fbb])


def transmit_power(F: Sequence[np.ndarray]) -> float:
    """Total precoder energy ``sum_k ||F_k||_F^2``."""
    return float(sum(np.vdot(f, f).real for f in F))


def compose_effective(hb: HybridBeamformers) -> FdBeamformers:
    """Effective ``F_k = Frf Fbb_k`` and ``W_k = Wrf_k Wbb_k``."""
    if len(hb.Wrf) != hb.K or len(hb.Wbb) != hb.K:
        raise ValueError("hybrid beamformers need one combiner pair per user")
    F, W = [], []
    for fbb, wrf, wbb in zip(hb.Fbb, hb.Wrf, hb.Wbb):
        if hb.Frf.shape[1] != fbb.shape[0]:
            raise ValueError(f"Frf {hb.Frf.shape} incompatible with Fbb {fbb.shape}")
        if wrf.shape[1] != wbb.shape[0]:
            raise ValueError(f"Wrf {wrf.shape} incompatible with Wbb {wbb.shape}")
        F.append(hb.Frf @ fbb)
        W.append(wrf @ wbb)
    return FdBeamformers(F, W)


def _signal_and_cov(cfg: SystemConfig, Hk: np.ndarray, fd: FdBeamformers, k: int):
    W = fd.W[k]
    WH = W.conj().T @ Hk
    signal = WH @ fd.F[k]
    cov = cfg.rho * (W.conj().T @ W)
    for n, Fn in enumerate(fd.F):
        if n != k:
            a = WH @ Fn
            cov = cov + a @ a.conj().T
    return signal, hermitize(cov)


def interference_cov(cfg: SystemConfig, Hk: np.ndarray, fd: FdBeamformers, k: int) -> np.ndarray:
    """Interference-plus-noise covariance seen after user k's combiner.

    ``R_k = W_k^H H_k (sum_{n != k} F_n F_n^H) H_k^H W_k + rho W_k^H W_k``
    """
    if not 0 <= k < fd.K:
        raise IndexError(f"user index {k} out of range for K={fd.K}")
    return _signal_and_cov(cfg, np.asarray(Hk), fd, k)[1]


def _logdet2_identity_plus(signal: np.ndarray, cov: np.ndarray) -> float:
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError("interference-plus-noise covariance is singular") from exc
    # whitened signal: L^{-1} A
    x = np.linalg.solve(chol, signal)
    m = hermitize(np.eye(signal.shape[1]) + x.conj().T @ x)
    lm = np.linalg.cholesky(m)
    return float(2.0 * np.sum(np.log2(np.abs(np.diag(lm)))))


def user_rates(cfg: SystemConfig, H: ChannelSet, fd: FdBeamformers) -> np.ndarray:
    """Per-user rates ``log2 |I + A_k^H R_k^{-1} A_k|`` with ``A_k = W_k^H H_k F_k``."""
    if len(H) != fd.K:
        raise ValueError(f"channel has {len(H)} users, beamformers have {fd.K}")
    rates = np.empty(fd.K)
    for k in range(fd.K):
        signal, cov = _signal_and_cov(cfg, H[k], fd, k)
        rates[k] = _logdet2_identity_plus(signal, cov)
    return rates


def sum_rate(cfg: SystemConfig, H: ChannelSet, fd: FdBeamformers) -> float:
    """System sum-rate in bits/s/Hz for Gaussian inputs."""
    return float(np.sum(user_rates(cfg, H, fd)))
