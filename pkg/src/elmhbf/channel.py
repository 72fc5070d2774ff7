"""Saleh-Valenzuela mmWave channels for uniform planar arrays.

Also provides the synthetic per-entry channel corruption used to build
training sets and to emulate imperfect CSI at test time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

__all__ = [
    "SystemConfig",
    "ChannelModelParams",
    "ChannelSet",
    "default_grid",
    "steering_vector",
    "generate_channel",
    "perturb_channel",
    "derive_seed",
]


@dataclass(frozen=True)
class SystemConfig:
    """Antenna, RF-chain, user and stream counts plus power and noise levels.

    Parameters
    ----------
    K : int
        Number of users.
    Ns : int
        Streams per user.
    Nt, Nr : int
        BS and UE antenna counts.
    Nrft, Nrfr : int
        BS and UE RF-chain counts.
    P : float
        Total transmit power (linear).
    sigma2 : float
        Per-UE noise power (linear).
    """

    K: int
    Ns: int
    Nt: int
    Nr: int
    Nrft: int
    Nrfr: int
    P: float = 1.0
    sigma2: float = 1.0

    def __post_init__(self):
        for name in ("K", "Ns", "Nt", "Nr", "Nrft", "Nrfr"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not self.K * self.Ns <= self.Nrft <= self.Nt:
            raise ValueError(
                f"need K*Ns <= Nrft <= Nt, got K*Ns={self.K * self.Ns}, Nrft={self.Nrft}, Nt={self.Nt}"
            )
        if not self.Ns <= self.Nrfr <= self.Nr:
            raise ValueError(f"need Ns <= Nrfr <= Nr, got Ns={self.Ns}, Nrfr={self.Nrfr}, Nr={self.Nr}")
        if not (self.P > 0 and self.sigma2 > 0):
            raise ValueError("P and sigma2 must be positive")

    @property
    def rho(self) -> float:
        """Normalized noise level ``sigma2 * K * Ns / P``."""
        return self.sigma2 * self.K * self.Ns / self.P

    @property
    def KNs(self) -> int:
        return self.K * self.Ns

    @classmethod
    def from_snr_db(cls, snr_db: float, **dims) -> "SystemConfig":
        """Build a config with ``P = 1`` and ``sigma2 = 10^(-snr_db/10)``."""
        return cls(P=1.0, sigma2=10.0 ** (-snr_db / 10.0), **dims)

    def with_snr_db(self, snr_db: float) -> "SystemConfig":
        return replace(self, P=1.0, sigma2=10.0 ** (-snr_db / 10.0))


def default_grid(n: int) -> Tuple[int, int]:
    """Most nearly square ``rows x cols`` factorization of `n` (rows <= cols)."""
    rows = int(math.isqrt(n))
    while n % rows:
        rows -= 1
    return rows, n // rows


@dataclass(frozen=True)
class ChannelModelParams:
    """Clustered channel model parameters.

    `tx_grid` / `rx_grid` default to the most nearly square factorization
    of the antenna counts when left as ``None``; call :meth:`resolved`.
    """

    Ncl: int = 5
    Nray: int = 10
    angle_spread_deg: float = 7.5
    tx_grid: Optional[Tuple[int, int]] = None
    rx_grid: Optional[Tuple[int, int]] = None
    spacing: float = 0.5

    def __post_init__(self):
        if self.Ncl < 1 or self.Nray < 1:
            raise ValueError("Ncl and Nray must be >= 1")

    def resolved(self, cfg: SystemConfig) -> "ChannelModelParams":
        tx = tuple(self.tx_grid) if self.tx_grid is not None else default_grid(cfg.Nt)
        rx = tuple(self.rx_grid) if self.rx_grid is not None else default_grid(cfg.Nr)
        if tx[0] * tx[1] != cfg.Nt:
            raise ValueError(f"tx_grid {tx} does not match Nt={cfg.Nt}")
        if rx[0] * rx[1] != cfg.Nr:
            raise ValueError(f"rx_grid {rx} does not match Nr={cfg.Nr}")
        return replace(self, tx_grid=tx, rx_grid=rx)


@dataclass
class ChannelSet:
    """The K downlink channel matrices, each ``Nr x Nt``."""

    H: List[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        self.H = [np.asarray(h, dtype=complex) for h in self.H]
        for h in self.H:
            if not np.all(np.isfinite(h)):
                raise ValueError("channel matrix contains non-finite entries")

    @property
    def K(self) -> int:
        return len(self.H)

    def __len__(self):
        return len(self.H)

    def __iter__(self):
        return iter(self.H)

    def __getitem__(self, k):
        return self.H[k]


def derive_seed(base: int, *indices: int) -> int:
    """Deterministic 63-bit seed from a base seed and index path."""
    ss = np.random.SeedSequence([int(base) & 0xFFFFFFFFFFFFFFFF, *[int(i) for i in indices]])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def steering_vector(
    grid: Sequence[int], azimuth: float, elevation: float, spacing: float = 0.5
) -> np.ndarray:
    """UPA response for one direction, unit Euclidean norm.

    Element ``(p, q)`` (flattened row-major) has phase
    ``2*pi*spacing*(p*sin(el) + q*cos(el)*sin(az))``; at half-wavelength
    spacing this is ``pi*(p*sin(el) + q*cos(el)*sin(az))``.
    """
    rows, cols = int(grid[0]), int(grid[1])
    p = np.arange(rows)[:, None]
    q = np.arange(cols)[None, :]
    phase = 2.0 * np.pi * spacing * (p * np.sin(elevation) + q * np.cos(elevation) * np.sin(azimuth))
    return np.exp(1j * phase).ravel() / np.sqrt(rows * cols)


def _array_responses(grid, az, el, spacing) -> np.ndarray:
    # Vectorized steering vectors, one column per path.
    rows, cols = grid
    p = np.arange(rows)[:, None, None]
    q = np.arange(cols)[None, :, None]
    phase = 2.0 * np.pi * spacing * (p * np.sin(el) + q * np.cos(el) * np.sin(az))
    return np.exp(1j * phase).reshape(rows * cols, -1) / np.sqrt(rows * cols)


def _draw_user_channel(rng: np.random.Generator, cfg: SystemConfig, params: ChannelModelParams) -> np.ndarray:
    n_paths = params.Ncl * params.Nray
    spread = np.deg2rad(params.angle_spread_deg)

    def angles():
        az_c = rng.uniform(-np.pi / 2, np.pi / 2, size=params.Ncl)
        el_c = rng.uniform(-np.pi / 4, np.pi / 4, size=params.Ncl)
        az = np.repeat(az_c, params.Nray) + spread * rng.standard_normal(n_paths)
        el = np.repeat(el_c, params.Nray) + spread * rng.standard_normal(n_paths)
        return az, el

    az_r, el_r = angles()
    az_t, el_t = angles()
    alpha = (rng.standard_normal(n_paths) + 1j * rng.standard_normal(n_paths)) / np.sqrt(2.0)
    a_rx = _array_responses(params.rx_grid, az_r, el_r, params.spacing)
    a_tx = _array_responses(params.tx_grid, az_t, el_t, params.spacing)
    gain = np.sqrt(cfg.Nt * cfg.Nr / n_paths)
    return gain * (a_rx * alpha) @ a_tx.conj().T


def generate_channel(cfg: SystemConfig, params: ChannelModelParams, seed: int) -> ChannelSet:
    """Draw K independent clustered channels, deterministic in `seed`.

    ``H_k = sqrt(Nt*Nr/(Ncl*Nray)) * sum alpha * a_rx a_tx^H`` with
    ``alpha ~ CN(0, 1)``, so ``E ||H_k||_F^2 = Nt*Nr``.
    """
    params = params.resolved(cfg)
    rng = np.random.default_rng(seed)
    return ChannelSet([_draw_user_channel(rng, cfg, params) for _ in range(cfg.K)])


def perturb_channel(
    H: ChannelSet, snr_train_db: float, seed: int, db_divisor: float = 20.0
) -> ChannelSet:
    """Add entry-wise circular Gaussian noise scaled to each entry's power.

    Entry ``(m, n)`` of user ``k`` receives noise of variance
    ``|H_k[m, n]|^2 / 10^(snr_train_db / db_divisor)``. The default
    divisor 20 follows the training-noise model as published; pass 10 for
    a conventional power-ratio dB.
    """
    if not np.isfinite(snr_train_db):
        raise ValueError("snr_train_db must be finite")
    rng = np.random.default_rng(seed)
    scale = 10.0 ** (-snr_train_db / db_divisor)
    out = []
    for h in H:
        std = np.sqrt(np.abs(h) ** 2 * scale / 2.0)
        noise = rng.standard_normal(h.shape) + 1j * rng.standard_normal(h.shape)
        out.append(h + std * noise)
    return ChannelSet(out)
