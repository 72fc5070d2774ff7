"""Monte-Carlo sweeps and timing runs.

Every trial draws its randomness from seeds derived from the base seed
and the trial coordinates, solver trials run through
:func:`~elmhbf.parallel.parallel_map`, and aggregation happens in trial
order, so outputs do not depend on the worker count. ELM predictions are
cheap and run in the calling process, which avoids shipping the model
weights to every worker.
"""

from __future__ import annotations

import logging
import time
from dataclasses import replace
from functools import partial
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from ..channel import ChannelSet, SystemConfig, derive_seed, generate_channel, perturb_channel
from ..elm import ElmModel, build_dataset, init_random, predict, train
from ..metrics import compose_effective, sum_rate
from ..mm_hbf import fp_mm_pipeline, fp_mm_pipeline_with_fd
from ..numerics import NoRootError
from ..parallel import parallel_map
from .config import ExperimentConfig, with_antennas
from .io import ResultTable

log = logging.getLogger(__name__)

RATE_HEADER = ["method", "snr_db", "csi_snr_test_db", "mean_rate", "std_err", "n", "failures"]
ROBUSTNESS_HEADER = ["method", "snr_test_db", "mean_rate", "std_err", "n", "failures"]
TIMING_HEADER = ["method", "stage", "Nt", "median_s", "mean_rate", "n"]

FP_FD, FP_MM, ELM = "FP-FD", "FP-MM-HBF", "ELM-HBF"

# tags separating the seed streams of test channels and perturbations
_CHANNEL_STREAM, _NOISE_STREAM = 1, 2

_SOLVER_ERRORS = (np.linalg.LinAlgError, ValueError, NoRootError)


def trial_channel_seed(exp: ExperimentConfig, j: int) -> int:
    """Channel seed of test trial `j`.

    With ``sweep.channel_pool`` set, trial ``j`` reuses training
    realization ``j % pool`` (training realization ``r`` has seed
    ``seed + r``); otherwise a fresh channel is drawn from its own stream.
    """
    pool = exp.sweep.channel_pool
    if pool is not None:
        return exp.seed + j % pool
    return derive_seed(exp.seed, _CHANNEL_STREAM, j)


def _noisy(exp: ExperimentConfig, H: ChannelSet, snr_test_db: float, i: int, j: int) -> ChannelSet:
    return perturb_channel(H, snr_test_db, derive_seed(exp.seed, _NOISE_STREAM, i, j), db_divisor=exp.elm.db_divisor)


def _summary(values: Sequence[Optional[float]]) -> Tuple[float, float, int, int]:
    ok = np.array([v for v in values if v is not None], dtype=float)
    n = ok.size
    failures = len(values) - n
    if n == 0:
        return float("nan"), float("nan"), 0, failures
    se = float(ok.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return float(ok.mean()), se, n, failures


# ---------------------------------------------------------------------------
# rate vs SNR
# ---------------------------------------------------------------------------


def _rate_trial(task, exp: ExperimentConfig):
    snr_db, j = task
    cfg = exp.with_snr(snr_db)
    ch_seed = trial_channel_seed(exp, j)
    H = generate_channel(cfg, exp.channel, ch_seed)
    Hs = H if exp.sweep.csi == "perfect" else _noisy(exp, H, exp.sweep.csi_snr_test_db, 0, j)
    try:
        hb, fd = fp_mm_pipeline_with_fd(cfg, Hs, seed=ch_seed, fp_stop=exp.fp, mm_stop=exp.mm)
        return sum_rate(cfg, H, fd), sum_rate(cfg, H, compose_effective(hb))
    except _SOLVER_ERRORS as exc:
        log.warning("rate trial snr=%g j=%d failed: %s", snr_db, j, exc)
        return None


def _elm_rate(exp: ExperimentConfig, model: ElmModel, snr_db: float, j: int) -> Optional[float]:
    cfg = exp.with_snr(snr_db)
    H = generate_channel(cfg, exp.channel, trial_channel_seed(exp, j))
    Hs = H if exp.sweep.csi == "perfect" else _noisy(exp, H, exp.sweep.csi_snr_test_db, 0, j)
    try:
        return sum_rate(cfg, H, compose_effective(predict(model, Hs)))
    except _SOLVER_ERRORS as exc:
        log.warning("ELM trial snr=%g j=%d failed: %s", snr_db, j, exc)
        return None


def run_rate_vs_snr(exp: ExperimentConfig, model: Optional[ElmModel] = None) -> ResultTable:
    """Mean sum-rate of FP-FD, FP-MM-HBF and (with a model) ELM-HBF per SNR point.

    Trial ``j`` uses the same channel at every SNR point. With
    ``sweep.csi = "imperfect"`` every method designs from a copy perturbed at
    ``sweep.csi_snr_test_db``; rates are always evaluated on the true channel.
    """
    snrs = [float(s) for s in exp.sweep.snr_db]
    trials = exp.sweep.trials
    tasks = [(s, j) for s in snrs for j in range(trials)]
    results = parallel_map(partial(_rate_trial, exp=exp), tasks, workers=exp.workers)
    csi = "clean" if exp.sweep.csi == "perfect" else float(exp.sweep.csi_snr_test_db)

    table = ResultTable(RATE_HEADER)
    for i, s in enumerate(snrs):
        block = results[i * trials:(i + 1) * trials]
        per_method = {
            FP_FD: [None if r is None else r[0] for r in block],
            FP_MM: [None if r is None else r[1] for r in block],
        }
        if model is not None:
            per_method[ELM] = [_elm_rate(exp, model, s, j) for j in range(trials)]
        for method, values in per_method.items():
            mean, se, n, fails = _summary(values)
            table.add(method=method, snr_db=s, csi_snr_test_db=csi, mean_rate=mean, std_err=se, n=n, failures=fails)
    return table


# ---------------------------------------------------------------------------
# robustness vs SNR_Test
# ---------------------------------------------------------------------------


def _robust_trial(task, exp: ExperimentConfig):
    i, snr_test, j = task
    cfg = exp.system
    ch_seed = trial_channel_seed(exp, j)
    H = generate_channel(cfg, exp.channel, ch_seed)
    try:
        hb = fp_mm_pipeline(cfg, _noisy(exp, H, snr_test, i, j), seed=ch_seed, fp_stop=exp.fp, mm_stop=exp.mm)
        return sum_rate(cfg, H, compose_effective(hb))
    except _SOLVER_ERRORS as exc:
        log.warning("robustness trial snr_test=%g j=%d failed: %s", snr_test, j, exc)
        return None


def _elm_robust(exp: ExperimentConfig, model: ElmModel, i: int, snr_test: float, j: int) -> Optional[float]:
    cfg = exp.system
    H = generate_channel(cfg, exp.channel, trial_channel_seed(exp, j))
    try:
        return sum_rate(cfg, H, compose_effective(predict(model, _noisy(exp, H, snr_test, i, j))))
    except _SOLVER_ERRORS as exc:
        log.warning("ELM robustness trial snr_test=%g j=%d failed: %s", snr_test, j, exc)
        return None


def run_robustness_sweep(exp: ExperimentConfig, model: ElmModel) -> ResultTable:
    """ELM-HBF vs FP-MM-HBF fed identically perturbed channels, per SNR_Test.

    Both designs are scored on the clean channel at the system SNR.
    """
    snrs = [float(s) for s in exp.sweep.snr_test_db]
    trials = exp.sweep.trials
    tasks = [(i, s, j) for i, s in enumerate(snrs) for j in range(trials)]
    solver = parallel_map(partial(_robust_trial, exp=exp), tasks, workers=exp.workers)

    table = ResultTable(ROBUSTNESS_HEADER)
    for i, s in enumerate(snrs):
        per_method = {
            ELM: [_elm_robust(exp, model, i, s, j) for j in range(trials)],
            FP_MM: solver[i * trials:(i + 1) * trials],
        }
        for method, values in per_method.items():
            mean, se, n, fails = _summary(values)
            table.add(method=method, snr_test_db=s, mean_rate=mean, std_err=se, n=n, failures=fails)
    return table


# ---------------------------------------------------------------------------
# timing
# ---------------------------------------------------------------------------


def _timed(fn, *args):
    t0 = time.perf_counter()
    out = fn(*args)
    return out, time.perf_counter() - t0


def timing_for(exp: ExperimentConfig, cfg: SystemConfig) -> Dict[str, Dict[str, object]]:
    """Median wall-clock times and mean rates for one system size.

    The ELM is trained on a dataset of ``elm.n_realizations x elm.n_noisy``
    rows built at this size; predictions and solves run on the same
    ``sweep.trials`` test channels (solver on clean channels, ELM on copies
    perturbed at ``sweep.csi_snr_test_db``).
    """
    ep = exp.elm
    ds = build_dataset(
        cfg, exp.channel, ep.n_realizations, ep.n_noisy, ep.snr_train_db, seed=exp.seed,
        fp_stop=exp.fp, mm_stop=exp.mm, db_divisor=ep.db_divisor, workers=exp.workers,
    )
    model = init_random(cfg, ep.L, activation=ep.activation, lam=ep.lam, seed=exp.seed, slope=ep.slope)
    _, t_train = _timed(train, model, ds)

    channels = [generate_channel(cfg, exp.channel, trial_channel_seed(exp, j)) for j in range(exp.sweep.trials)]
    noisy = [_noisy(exp, H, exp.sweep.csi_snr_test_db, 0, j) for j, H in enumerate(channels)]
    predict(model, noisy[0])  # warm-up
    solve_t, solve_r, pred_t, pred_r = [], [], [], []
    for j, (H, Hn) in enumerate(zip(channels, noisy)):
        hb, t = _timed(fp_mm_pipeline, cfg, H, trial_channel_seed(exp, j), exp.fp, exp.mm)
        solve_t.append(t)
        solve_r.append(sum_rate(cfg, H, compose_effective(hb)))
        hb, t = _timed(predict, model, Hn)
        pred_t.append(t)
        pred_r.append(sum_rate(cfg, H, compose_effective(hb)))
    return {
        "solve": dict(method=FP_MM, median_s=float(np.median(solve_t)), mean_rate=float(np.mean(solve_r)), n=len(solve_t)),
        "predict": dict(method=ELM, median_s=float(np.median(pred_t)), mean_rate=float(np.mean(pred_r)), n=len(pred_t)),
        "train": dict(method=ELM, median_s=float(t_train), mean_rate=float("nan"), n=1),
    }


def run_timing(exp: ExperimentConfig) -> ResultTable:
    """Timing rows for every ``Nt`` in ``sweep.Nt_list``.

    `median_s` is machine-dependent wall-clock; every other column is
    deterministic.
    """
    table = ResultTable(TIMING_HEADER)
    for Nt in exp.sweep.Nt_list:
        cfg = with_antennas(exp.system, Nt)
        sub = replace(exp, system=cfg, channel=replace(exp.channel, tx_grid=None) if exp.channel.tx_grid else exp.channel)
        for stage, row in timing_for(sub, cfg).items():
            table.add(stage=stage, Nt=int(Nt), **row)
    return table
