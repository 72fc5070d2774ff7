"""Majorization-minimization hybrid factorization.

Given fully-digital targets ``F_k``, find a constant-modulus analog matrix
``Frf`` and unconstrained digital factors ``Fbb_k`` minimizing
``sum_k ||F_k - Frf Fbb_k||_F^2``. Digital factors are least-squares
solutions for a fixed analog matrix; the analog matrix is refined by an
inner MM loop whose step is a closed-form phase projection. The same
machinery (with K = 1 and no power normalization) designs each UE's
hybrid combiner.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .channel import ChannelSet, SystemConfig
from .fp_fd import FpStop, solve as fp_solve
from .metrics import HybridBeamformers, transmit_power
from .numerics import InvalidInputError, max_eig_gram, pinv

__all__ = [
    "MmStop",
    "MmTrace",
    "residual_f",
    "majorizer_value",
    "update_analog",
    "update_digital",
    "normalize_power",
    "random_analog",
    "solve_precoder",
    "solve_combiner",
    "fp_mm_pipeline",
    "fp_mm_pipeline_with_fd",
]


@dataclass(frozen=True)
class MmStop:
    """Stopping rules; `inner_tol` is on the relative change of the analog matrix."""

    outer_max: int = 20
    inner_max: int = 50
    inner_tol: float = 1e-5
    outer_tol: float = 1e-4


@dataclass
class MmTrace:
    """Residuals recorded during one factorization.

    `inner` holds one list per outer iteration (residual after each MM
    step); `outer` the residual right after each digital update.
    """

    inner: List[List[float]] = field(default_factory=list)
    outer: List[float] = field(default_factory=list)
    final: float = float("nan")

    def sequence(self) -> List[float]:
        """All residuals in evaluation order (digital, then its inner steps)."""
        seq: List[float] = []
        for o, inner in zip(self.outer, self.inner):
            seq.append(o)
            seq.extend(inner)
        return seq


def residual_f(Frf: np.ndarray, Fbb: Sequence[np.ndarray], F: Sequence[np.ndarray]) -> float:
    """``sum_k ||F_k - Frf Fbb_k||_F^2``."""
    total = 0.0
    for fbb, f in zip(Fbb, F):
        d = f - Frf @ fbb
        total += np.vdot(d, d).real
    return float(total)


def _check_unit_modulus(Frf: np.ndarray, name: str, tol: float = 1e-9):
    if np.max(np.abs(np.abs(Frf) - 1.0)) > tol:
        raise InvalidInputError(f"{name} must have unit-modulus entries")


def _lambdas(Fbb: Sequence[np.ndarray]) -> float:
    # sum_k lambda_max((Fbb_k Fbb_k^H)^T kron I) = sum_k lambda_max(Fbb_k Fbb_k^H)
    return float(sum(max_eig_gram(fbb) for fbb in Fbb))


def _phase_argument(anchor: np.ndarray, Fbb: Sequence[np.ndarray], F: Sequence[np.ndarray]) -> np.ndarray:
    # Matrix form of sum_k (Q_k - lambda_k I) f_anchor - e_k, using
    # Q_k vec(X) = vec(X Fbb_k Fbb_k^H) and e_k = vec(F_k Fbb_k^H).
    g = -_lambdas(Fbb) * anchor
    for fbb, f in zip(Fbb, F):
        g = g + (anchor @ fbb - f) @ fbb.conj().T
    return g


def majorizer_value(
    candidate: np.ndarray, anchor: np.ndarray, Fbb: Sequence[np.ndarray], F: Sequence[np.ndarray]
) -> float:
    """Linear upper bound of :func:`residual_f` over unit-modulus matrices, tight at `anchor`.

    ``2 Re <candidate, g> + C`` where ``g`` is the phase argument and
    ``C = sum_k ||F_k||^2 + lambda (||candidate||^2 + ||anchor||^2) - sum_k ||anchor Fbb_k||^2``
    with ``lambda = sum_k lambda_max(Fbb_k Fbb_k^H)``.
    """
    _check_unit_modulus(candidate, "candidate")
    _check_unit_modulus(anchor, "anchor")
    lam = _lambdas(Fbb)
    g = _phase_argument(anchor, Fbb, F)
    const = transmit_power(F) + lam * (np.vdot(candidate, candidate).real + np.vdot(anchor, anchor).real)
    const -= sum(np.vdot(anchor @ fbb, anchor @ fbb).real for fbb in Fbb)
    return float(2.0 * np.vdot(candidate, g).real + const)


def update_analog(anchor: np.ndarray, Fbb: Sequence[np.ndarray], F: Sequence[np.ndarray]) -> np.ndarray:
    """Closed-form minimizer of the majorizer: ``-exp(j arg g)``.

    Entries where ``g`` vanishes keep the anchor's phase.
    """
    g = _phase_argument(anchor, Fbb, F)
    mag = np.abs(g)
    out = -np.exp(1j * np.angle(g))
    zero = mag <= 1e-300
    if np.any(zero):
        out[zero] = anchor[zero] / np.abs(anchor[zero])
    return out


def update_digital(Frf: np.ndarray, F: Sequence[np.ndarray]) -> List[np.ndarray]:
    """Least-squares digital factors ``pinv(Frf) F_k``."""
    Fp = pinv(Frf)
    return [Fp @ f for f in F]


def normalize_power(Frf: np.ndarray, Fbb: Sequence[np.ndarray], KNs: float) -> List[np.ndarray]:
    """Scale all digital factors by ``sqrt(KNs) / ||Frf Fbb||_F``."""
    p = transmit_power([Frf @ fbb for fbb in Fbb])
    if p <= 0:
        raise ValueError("hybrid precoder is zero; cannot normalize power")
    scale = np.sqrt(KNs / p)
    return [fbb * scale for fbb in Fbb]


def random_analog(n: int, m: int, seed) -> np.ndarray:
    """Unit-modulus ``n x m`` matrix with phases uniform on ``[0, 2 pi)``."""
    rng = np.random.default_rng(seed)
    return np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, size=(n, m)))


def _factorize(
    F: Sequence[np.ndarray], n_rf: int, seed, stop: MmStop, init: Optional[np.ndarray]
) -> Tuple[np.ndarray, List[np.ndarray], MmTrace]:
    F = [np.asarray(f, dtype=complex) for f in F]
    n_ant = F[0].shape[0]
    if init is None:
        Frf = random_analog(n_ant, n_rf, seed)
    else:
        Frf = np.asarray(init, dtype=complex)
        _check_unit_modulus(Frf, "initial analog matrix")
        if Frf.shape != (n_ant, n_rf):
            raise ValueError(f"initial analog matrix has shape {Frf.shape}, expected {(n_ant, n_rf)}")
    trace = MmTrace()
    prev = None
    for _ in range(stop.outer_max):
        Fbb = update_digital(Frf, F)
        res = residual_f(Frf, Fbb, F)
        trace.outer.append(res)
        if prev is not None and prev - res <= stop.outer_tol * max(prev, 1e-300):
            trace.inner.append([])
            break
        prev = res
        inner = []
        for _ in range(stop.inner_max):
            new = update_analog(Frf, Fbb, F)
            change = np.linalg.norm(new - Frf) / np.linalg.norm(Frf)
            Frf = new
            inner.append(residual_f(Frf, Fbb, F))
            if change <= stop.inner_tol:
                break
        trace.inner.append(inner)
    Fbb = update_digital(Frf, F)
    trace.final = residual_f(Frf, Fbb, F)
    return Frf, Fbb, trace


def solve_precoder(
    F: Sequence[np.ndarray],
    Nrft: int,
    seed=0,
    stop: MmStop = MmStop(),
    init: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, List[np.ndarray], MmTrace]:
    """Hybrid factorization of the BS precoders, with final power normalization.

    The power target is the number of streams, ``sum_k Ns_k``.
    """
    Frf, Fbb, trace = _factorize(F, Nrft, seed, stop, init)
    KNs = sum(np.asarray(f).shape[1] for f in F)
    return Frf, normalize_power(Frf, Fbb, KNs), trace


def solve_combiner(
    W: np.ndarray,
    Nrfr: int,
    seed=0,
    stop: MmStop = MmStop(),
    init: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, np.ndarray, MmTrace]:
    """Hybrid factorization of one UE combiner; no power normalization."""
    Wrf, Wbb, trace = _factorize([W], Nrfr, seed, stop, init)
    return Wrf, Wbb[0], trace


def fp_mm_pipeline(
    cfg: SystemConfig,
    H: ChannelSet,
    seed: int = 0,
    fp_stop: FpStop = FpStop(),
    mm_stop: MmStop = MmStop(),
) -> HybridBeamformers:
    """FP fully-digital design followed by MM factorization at BS and every UE."""
    hb, _ = fp_mm_pipeline_with_fd(cfg, H, seed, fp_stop, mm_stop)
    return hb


def fp_mm_pipeline_with_fd(cfg, H, seed=0, fp_stop=FpStop(), mm_stop=MmStop()):
    """Like :func:`fp_mm_pipeline` but also returns the fully-digital solution."""
    ss = np.random.SeedSequence(int(seed))
    seeds = ss.spawn(cfg.K + 1)
    fd, _, _ = fp_solve(cfg, H, seed=seed, stop=fp_stop)
    Frf, Fbb, _ = solve_precoder(fd.F, cfg.Nrft, seed=seeds[0], stop=mm_stop)
    Wrf, Wbb = [], []
    for k in range(cfg.K):
        wrf, wbb, _ = solve_combiner(fd.W[k], cfg.Nrfr, seed=seeds[k + 1], stop=mm_stop)
        Wrf.append(wrf)
        Wbb.append(wbb)
    return HybridBeamformers(Frf=Frf, Fbb=Fbb, Wrf=Wrf, Wbb=Wbb), fd
