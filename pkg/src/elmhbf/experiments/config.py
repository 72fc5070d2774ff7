"""Experiment configuration loaded from JSON.

Layout of the file (every section optional except ``system``)::

    {
      "system":  {"K": 3, "Ns": 2, "Nt": 36, "Nr": 16, "Nrft": 9, "Nrfr": 3, "snr_db": 0.0},
      "channel": {"Ncl": 5, "Nray": 10, "angle_spread_deg": 7.5, "tx_grid": null, "rx_grid": null},
      "fp":      {"max_iter": 100, "rel_tol": 1e-4},
      "mm":      {"outer_max": 20, "inner_max": 50, "inner_tol": 1e-5, "outer_tol": 1e-4},
      "elm":     {"L": 4000, "activation": "prelu", "slope": 0.25, "lam": 1000.0, "lam_grid": null,
                  "n_realizations": 100, "n_noisy": 100, "snr_train_db": [15, 20, 25], "db_divisor": 20.0},
      "sweep":   {"snr_db": [-10, 0, 10], "snr_test_db": [0, 10, 20, 30], "Nt_list": [16, 36, 64],
                  "trials": 10, "csi": "perfect", "csi_snr_test_db": 10.0, "channel_pool": null},
      "seed": 0,
      "workers": null,
      "paths": {"dataset": null, "model": null, "out": null}
    }
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

from ..channel import ChannelModelParams, SystemConfig
from ..elm import ACTIVATIONS
from ..fp_fd import FpStop
from ..mm_hbf import MmStop


class ConfigError(ValueError):
    """Invalid or unreadable experiment configuration."""


@dataclass(frozen=True)
class ElmParams:
    L: int = 4000
    activation: str = "prelu"
    slope: float = 0.25
    lam: float = 1000.0
    lam_grid: Optional[Tuple[float, ...]] = None
    n_realizations: int = 100
    n_noisy: int = 100
    snr_train_db: Tuple[float, ...] = (15.0, 20.0, 25.0)
    db_divisor: float = 20.0


@dataclass(frozen=True)
class SweepParams:
    snr_db: Tuple[float, ...] = (-10.0, -5.0, 0.0, 5.0, 10.0)
    snr_test_db: Tuple[float, ...] = (0.0, 10.0, 20.0, 30.0)
    Nt_list: Tuple[int, ...] = (16, 36, 64)
    trials: int = 10
    csi: str = "perfect"
    csi_snr_test_db: float = 10.0
    # when set, test channels cycle through the first `channel_pool`
    # realizations of the training seed range instead of fresh draws
    channel_pool: Optional[int] = None


@dataclass(frozen=True)
class Paths:
    dataset: Optional[str] = None
    model: Optional[str] = None
    out: Optional[str] = None


@dataclass(frozen=True)
class ExperimentConfig:
    system: SystemConfig
    snr_db: float = 0.0
    channel: ChannelModelParams = field(default_factory=ChannelModelParams)
    fp: FpStop = field(default_factory=FpStop)
    mm: MmStop = field(default_factory=MmStop)
    elm: ElmParams = field(default_factory=ElmParams)
    sweep: SweepParams = field(default_factory=SweepParams)
    seed: int = 0
    workers: Optional[int] = None
    paths: Paths = field(default_factory=Paths)

    def with_snr(self, snr_db: float) -> SystemConfig:
        return self.system.with_snr_db(snr_db)

    def with_seed(self, seed: Optional[int]) -> "ExperimentConfig":
        return self if seed is None else replace(self, seed=int(seed))


def _build(cls, raw: Optional[Dict[str, Any]], section: str, tuples=()):
    raw = dict(raw or {})
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in '{section}': {', '.join(unknown)}")
    for key in tuples:
        if raw.get(key) is not None:
            raw[key] = tuple(raw[key])
    try:
        return cls(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid '{section}' section: {exc}") from None


def from_dict(raw: Dict[str, Any]) -> ExperimentConfig:
    """Validate a parsed JSON document and build an :class:`ExperimentConfig`."""
    if not isinstance(raw, dict):
        raise ConfigError("top level of the config must be an object")
    top = {"system", "channel", "fp", "mm", "elm", "sweep", "seed", "workers", "paths"}
    unknown = sorted(set(raw) - top)
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")
    if "system" not in raw:
        raise ConfigError("missing required section 'system'")

    sys_raw = dict(raw["system"])
    snr_db = float(sys_raw.pop("snr_db", 0.0))
    try:
        system = SystemConfig.from_snr_db(snr_db, **sys_raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid 'system' section: {exc}") from None

    channel = _build(ChannelModelParams, raw.get("channel"), "channel", tuples=("tx_grid", "rx_grid"))
    try:
        channel.resolved(system)
    except ValueError as exc:
        raise ConfigError(f"invalid 'channel' section: {exc}") from None
    fp = _build(FpStop, raw.get("fp"), "fp")
    mm = _build(MmStop, raw.get("mm"), "mm")
    elm = _build(ElmParams, raw.get("elm"), "elm", tuples=("snr_train_db", "lam_grid"))
    sweep = _build(SweepParams, raw.get("sweep"), "sweep", tuples=("snr_db", "snr_test_db", "Nt_list"))
    paths = _build(Paths, raw.get("paths"), "paths")

    if elm.activation not in ACTIVATIONS:
        raise ConfigError(f"elm.activation must be one of {ACTIVATIONS}")
    if elm.L < 1 or elm.lam <= 0 or elm.n_realizations < 1 or elm.n_noisy < 1 or not elm.snr_train_db:
        raise ConfigError("elm: L, n_realizations, n_noisy >= 1, lam > 0 and a non-empty snr_train_db are required")
    if sweep.trials < 1:
        raise ConfigError("sweep.trials must be >= 1")
    if sweep.csi not in ("perfect", "imperfect"):
        raise ConfigError("sweep.csi must be 'perfect' or 'imperfect'")
    if sweep.channel_pool is not None and sweep.channel_pool < 1:
        raise ConfigError("sweep.channel_pool must be >= 1 when given")
    if fp.max_iter < 1 or mm.outer_max < 1 or mm.inner_max < 1:
        raise ConfigError("iteration limits must be >= 1")

    workers = raw.get("workers")
    return ExperimentConfig(
        system=system,
        snr_db=snr_db,
        channel=channel,
        fp=fp,
        mm=mm,
        elm=elm,
        sweep=sweep,
        seed=int(raw.get("seed", 0)),
        workers=None if workers is None else int(workers),
        paths=paths,
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror or exc}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return from_dict(raw)


def with_antennas(cfg: SystemConfig, Nt: int) -> SystemConfig:
    """Same system with a different BS array size."""
    try:
        return replace(cfg, Nt=int(Nt))
    except ValueError as exc:
        raise ConfigError(f"Nt={Nt} is incompatible with the system: {exc}") from None
