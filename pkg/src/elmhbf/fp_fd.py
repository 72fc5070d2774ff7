"""Fractional-programming fully-digital beamforming.

The sum-rate is lifted to a surrogate with auxiliary variables ``U_k``
(Ns x Ns complex) and ``V_k`` (Ns x Ns Hermitian PSD); the surrogate is
maximized by cycling closed-form block updates ``U -> V -> W -> F``. The
precoder block carries the total power equality, enforced through a
scalar multiplier found by bisection.

All surrogate values are reported in bits (natural-log surrogate divided
by ``ln 2``), so at optimal ``U, V`` the surrogate equals :func:`sum_rate`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .channel import ChannelSet, SystemConfig
from .metrics import FdBeamformers, sum_rate, transmit_power
from .numerics import bisect, hermitize, solve_hermitian

__all__ = [
    "AuxVariables",
    "SolveTrace",
    "FpStop",
    "surrogate",
    "update_U",
    "update_V",
    "update_W",
    "update_F",
    "initialize",
    "solve",
]

log = logging.getLogger(__name__)

_LN2 = np.log(2.0)


@dataclass
class AuxVariables:
    """Auxiliary FP variables; ``Gamma[k] = I + V[k]``."""

    U: List[np.ndarray]
    V: List[np.ndarray]

    @property
    def Gamma(self) -> List[np.ndarray]:
        return [np.eye(v.shape[0]) + v for v in self.V]


@dataclass
class SolveTrace:
    """Per-iteration record of one FP solve."""

    surrogate: List[float] = field(default_factory=list)
    rate: List[float] = field(default_factory=list)
    power_residual: List[float] = field(default_factory=list)
    delta: List[float] = field(default_factory=list)
    fallback: List[bool] = field(default_factory=list)
    converged: bool = False

    @property
    def iterations(self) -> int:
        return len(self.surrogate)


@dataclass(frozen=True)
class FpStop:
    max_iter: int = 100
    rel_tol: float = 1e-4


def _total_cov(fd: FdBeamformers) -> np.ndarray:
    return sum(f @ f.conj().T for f in fd.F)


def _rbar(cfg: SystemConfig, Hk: np.ndarray, Wk: np.ndarray, S: np.ndarray) -> np.ndarray:
    WH = Wk.conj().T @ Hk
    return hermitize(WH @ S @ WH.conj().T + cfg.rho * (Wk.conj().T @ Wk))


def surrogate(cfg: SystemConfig, H: ChannelSet, fd: FdBeamformers, aux: AuxVariables) -> float:
    """Quadratic-transform surrogate of the sum-rate, in bits.

    Per user: ``log|Gamma| - Tr(V) + 2 Re Tr(Gamma A^H U) - Tr(Gamma U^H Rbar U)``
    with ``A = W^H H F`` and ``Rbar`` the full received covariance
    (all users' precoders plus noise) after the combiner.
    """
    S = _total_cov(fd)
    total = 0.0
    for k, Hk in enumerate(H):
        U, V = aux.U[k], hermitize(aux.V[k])
        G = np.eye(V.shape[0]) + V
        A = fd.W[k].conj().T @ Hk @ fd.F[k]
        Rb = _rbar(cfg, Hk, fd.W[k], S)
        sign, logdet = np.linalg.slogdet(G)
        if sign.real <= 0:
            return -np.inf
        total += (
            logdet
            - np.trace(V).real
            + 2.0 * np.trace(G @ A.conj().T @ U).real
            - np.trace(G @ U.conj().T @ Rb @ U).real
        )
    return float(total / _LN2)


def update_U(cfg: SystemConfig, H: ChannelSet, fd: FdBeamformers) -> List[np.ndarray]:
    """``U_k = Rbar_k^{-1} W_k^H H_k F_k``."""
    S = _total_cov(fd)
    out = []
    for k, Hk in enumerate(H):
        A = fd.W[k].conj().T @ Hk @ fd.F[k]
        out.append(solve_hermitian(_rbar(cfg, Hk, fd.W[k], S), A))
    return out


def update_V(cfg: SystemConfig, H: ChannelSet, fd: FdBeamformers) -> List[np.ndarray]:
    """``V_k = A_k^H R_k^{-1} A_k``, the per-user matrix SINR."""
    S = _total_cov(fd)
    out = []
    for k, Hk in enumerate(H):
        A = fd.W[k].conj().T @ Hk @ fd.F[k]
        R = _rbar(cfg, Hk, fd.W[k], S - fd.F[k] @ fd.F[k].conj().T)
        out.append(hermitize(A.conj().T @ solve_hermitian(R, A)))
    return out


def update_W(cfg: SystemConfig, H: ChannelSet, fd: FdBeamformers, aux: AuxVariables) -> List[np.ndarray]:
    """Block-optimal combiners for fixed ``F, U, V``.

    ``W_k = (H_k S H_k^H + rho I)^{-1} H_k F_k Gamma_k U_k^H (U_k Gamma_k U_k^H)^{-1}``
    """
    S = _total_cov(fd)
    out = []
    for k, Hk in enumerate(H):
        U, G = aux.U[k], aux.Gamma[k]
        M = Hk @ S @ Hk.conj().T + cfg.rho * np.eye(Hk.shape[0])
        X = solve_hermitian(M, Hk @ fd.F[k] @ G @ U.conj().T)
        UGU = hermitize(U @ G @ U.conj().T)
        # right-division by the Hermitian UGU
        out.append(solve_hermitian(UGU, X.conj().T).conj().T)
    return out


def update_F(
    cfg: SystemConfig, H: ChannelSet, fd: FdBeamformers, aux: AuxVariables
) -> Tuple[List[np.ndarray], float, bool]:
    """Block-optimal precoders under ``sum_k ||F_k||^2 = K Ns``.

    ``F_k = (sum_n H_n^H W_n U_n Gamma_n U_n^H W_n^H H_n + delta I)^{-1} H_k^H W_k U_k Gamma_k``
    with the multiplier found by bisection on the transmit power, which is
    strictly decreasing in ``delta``.

    When ``delta = 0`` already leaves the power below target, no
    ``delta >= 0`` is feasible. The surrogate-optimal completion is then
    used instead: if the Gram matrix above is rank deficient, the
    remaining power is placed in its null space (invisible to every
    combiner, so the surrogate is unchanged); otherwise ``delta`` is
    searched on ``(-lambda_min, 0)``.

    Returns
    -------
    F : list of ndarray
    delta : float
    fallback : bool
        True when ``delta = 0`` was infeasible and the completion was used.
    """
    target = float(cfg.KNs)
    Nt = H[0].shape[1]
    A = np.zeros((Nt, Nt), dtype=complex)
    B = []
    for k, Hk in enumerate(H):
        U, G = aux.U[k], aux.Gamma[k]
        X = Hk.conj().T @ fd.W[k] @ U
        A += X @ G @ X.conj().T
        B.append(X @ G)
    evals, Q = np.linalg.eigh(hermitize(A))
    # directions outside range(A) carry no signal component
    keep = evals > max(evals[-1], 0.0) * 1e-12 * Nt
    Q_null = Q[:, ~keep]
    evals, Q = evals[keep], Q[:, keep]
    C = [Q.conj().T @ b for b in B]
    c2 = sum(np.sum(np.abs(c) ** 2, axis=1) for c in C)

    def power(delta: float) -> float:
        return float(np.sum(c2 / (evals + delta) ** 2))

    def precoders(delta: float) -> List[np.ndarray]:
        return [Q @ (c / (evals + delta)[:, None]) for c in C]

    p0 = power(0.0)
    fallback = p0 < target
    if not fallback:
        delta = bisect(power, target, 0.0, 1.0, tol=1e-12 * target)
        F = precoders(delta)
    elif Q_null.shape[1] > 0:
        delta = 0.0
        F = _fill_null_space(precoders(0.0), fd.F, Q_null, target - p0)
    else:
        delta = bisect(power, target, -evals[0] * (1.0 - 1e-9), 0.0, tol=1e-12 * target)
        F = precoders(delta)
    p = transmit_power(F)
    if p > 0:
        F = [f * np.sqrt(target / p) for f in F]
    if fallback:
        log.debug("precoder power %.6g below target %.6g at delta=0; completed with delta=%.3g", p0, target, delta)
    return F, float(delta), fallback


def _fill_null_space(F, F_prev, Q_null, missing):
    # Null-space direction per user: projection of the previous precoder,
    # or the leading null basis vectors if that projection vanishes.
    N = [Q_null @ (Q_null.conj().T @ f) for f in F_prev]
    energy = transmit_power(N)
    if energy <= 1e-20:
        Ns = F[0].shape[1]
        cols = Q_null[:, :1] if Q_null.shape[1] < Ns else Q_null[:, :Ns]
        N = [np.tile(cols, (1, int(np.ceil(Ns / cols.shape[1]))))[:, :Ns] for _ in F]
        energy = transmit_power(N)
    t = np.sqrt(missing / energy)
    return [f + t * n for f, n in zip(F, N)]


def initialize(cfg: SystemConfig, H: ChannelSet, seed: Optional[int] = None, method: str = "svd") -> FdBeamformers:
    """Starting point for the FP iteration.

    ``"svd"``: dominant right / left singular vectors of each ``H_k``.
    ``"random"``: complex Gaussian matrices drawn from `seed`. Precoders
    are scaled so the total power equals ``K Ns``.
    """
    Ns = cfg.Ns
    F, W = [], []
    if method == "svd":
        for Hk in H:
            u, _, vh = np.linalg.svd(Hk)
            F.append(vh[:Ns].conj().T.copy())
            W.append(u[:, :Ns].copy())
    elif method == "random":
        rng = np.random.default_rng(seed)
        for Hk in H:
            Nr, Nt = Hk.shape
            F.append(rng.standard_normal((Nt, Ns)) + 1j * rng.standard_normal((Nt, Ns)))
            W.append(rng.standard_normal((Nr, Ns)) + 1j * rng.standard_normal((Nr, Ns)))
    else:
        raise ValueError(f"unknown init method {method!r}")
    scale = np.sqrt(cfg.KNs / transmit_power(F))
    return FdBeamformers([f * scale for f in F], W)


def solve(
    cfg: SystemConfig,
    H: ChannelSet,
    seed: int = 0,
    stop: FpStop = FpStop(),
    init: str = "svd",
) -> Tuple[FdBeamformers, AuxVariables, SolveTrace]:
    """Run the FP fully-digital algorithm to convergence.

    Iterates ``U, V, W, F`` updates until the relative change of the
    surrogate drops below ``stop.rel_tol`` or ``stop.max_iter`` cycles.
    `seed` only matters for ``init="random"``.
    """
    if len(H) != cfg.K:
        raise ValueError(f"channel set has {len(H)} users, config says K={cfg.K}")
    fd = initialize(cfg, H, seed=seed, method=init)
    aux = AuxVariables(U=[np.zeros((cfg.Ns, cfg.Ns), complex)] * cfg.K, V=update_V(cfg, H, fd))
    trace = SolveTrace()
    prev = None
    for _ in range(stop.max_iter):
        aux = AuxVariables(U=update_U(cfg, H, fd), V=aux.V)
        aux = AuxVariables(U=aux.U, V=update_V(cfg, H, fd))
        fd = FdBeamformers(F=fd.F, W=update_W(cfg, H, fd, aux))
        F, delta, fallback = update_F(cfg, H, fd, aux)
        fd = FdBeamformers(F=F, W=fd.W)

        value = surrogate(cfg, H, fd, aux)
        trace.surrogate.append(value)
        trace.rate.append(sum_rate(cfg, H, fd))
        trace.power_residual.append(abs(transmit_power(fd.F) - cfg.KNs) / cfg.KNs)
        trace.delta.append(delta)
        trace.fallback.append(fallback)
        if prev is not None and abs(value - prev) <= stop.rel_tol * max(abs(prev), 1e-12):
            trace.converged = True
            break
        prev = value
    return fd, aux, trace
