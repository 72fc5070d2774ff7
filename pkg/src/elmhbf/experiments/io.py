"""Binary dataset files and CSV result tables.

Dataset layout (all little-endian)::

    offset  0   4s   magic "HBFD"
            4   u32  version
            8   6xu32 K, Ns, Nt, Nr, Nrft, Nrfr
           32   2xf64 P, sigma2
           48   i64  base seed
           56   2xu32 n_realizations, n_noisy
           64   f64  perturbation dB divisor
           72   u32  n_snr, then n_snr x f64 SNR_Train list
                u32  n_seeds, then n_seeds x i64 realization seeds
                u64  N rows, u32 N_I, u32 N_o
                N x N_I f64 X, then N x N_o f64 T (row-major)
"""

from __future__ import annotations

import csv
import io
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Union

import numpy as np

from ..channel import SystemConfig
from ..elm import DatasetMeta, TrainingDataset

__all__ = ["DatasetFormatError", "write_dataset", "read_dataset", "ResultTable", "write_csv", "read_csv"]

DATASET_MAGIC = b"HBFD"
DATASET_VERSION = 1
_FIXED = struct.Struct("<4sI6I2dq2Id")


class DatasetFormatError(ValueError):
    pass


def write_dataset(ds: TrainingDataset, path: Union[str, Path]) -> None:
    m = ds.meta
    cfg = m.cfg
    buf = io.BytesIO()
    buf.write(
        _FIXED.pack(
            DATASET_MAGIC,
            DATASET_VERSION,
            cfg.K, cfg.Ns, cfg.Nt, cfg.Nr, cfg.Nrft, cfg.Nrfr,
            cfg.P, cfg.sigma2,
            m.seed,
            m.n_realizations, m.n_noisy,
            m.db_divisor,
        )
    )
    buf.write(struct.pack("<I", len(m.snr_train_db)))
    buf.write(np.asarray(m.snr_train_db, dtype="<f8").tobytes())
    buf.write(struct.pack("<I", len(m.realization_seeds)))
    buf.write(np.asarray(m.realization_seeds, dtype="<i8").tobytes())
    N, n_in = ds.X.shape
    buf.write(struct.pack("<QII", N, n_in, ds.T.shape[1]))
    buf.write(np.ascontiguousarray(ds.X, dtype="<f8").tobytes())
    buf.write(np.ascontiguousarray(ds.T, dtype="<f8").tobytes())
    Path(path).write_bytes(buf.getvalue())


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.off = 0

    def take(self, n: int, what: str) -> bytes:
        if self.off + n > len(self.data):
            raise DatasetFormatError(
                f"truncated {what} at byte offset {self.off}: expected {n} bytes, "
                f"only {len(self.data) - self.off} available (file length {len(self.data)})"
            )
        out = self.data[self.off:self.off + n]
        self.off += n
        return out

    def unpack(self, fmt: struct.Struct, what: str):
        return fmt.unpack(self.take(fmt.size, what))

    def array(self, dtype: str, count: int, what: str) -> np.ndarray:
        itemsize = np.dtype(dtype).itemsize
        return np.frombuffer(self.take(itemsize * count, what), dtype=dtype).copy()


def read_dataset(path: Union[str, Path]) -> TrainingDataset:
    data = Path(path).read_bytes()
    r = _Reader(data)
    magic, version, *rest = r.unpack(_FIXED, "header")
    if magic != DATASET_MAGIC:
        raise DatasetFormatError(f"bad magic {magic!r} at byte offset 0, expected {DATASET_MAGIC!r}")
    if version != DATASET_VERSION:
        raise DatasetFormatError(f"unsupported version {version} at byte offset 4")
    dims, (P, sigma2, seed, n_real, n_noisy, divisor) = rest[:6], rest[6:]
    (n_snr,) = r.unpack(struct.Struct("<I"), "SNR count")
    snrs = r.array("<f8", n_snr, "SNR list")
    (n_seeds,) = r.unpack(struct.Struct("<I"), "seed count")
    seeds = r.array("<i8", n_seeds, "realization seeds")
    N, n_in, n_out = r.unpack(struct.Struct("<QII"), "matrix dimensions")
    expected = r.off + 8 * N * (n_in + n_out)
    if len(data) != expected:
        raise DatasetFormatError(
            f"payload length mismatch after byte offset {r.off}: expected total {expected} bytes, got {len(data)}"
        )
    X = r.array("<f8", N * n_in, "X").reshape(N, n_in)
    T = r.array("<f8", N * n_out, "T").reshape(N, n_out)
    K, Ns, Nt, Nr, Nrft, Nrfr = dims
    try:
        cfg = SystemConfig(K=K, Ns=Ns, Nt=Nt, Nr=Nr, Nrft=Nrft, Nrfr=Nrfr, P=P, sigma2=sigma2)
    except ValueError as exc:
        raise DatasetFormatError(f"invalid system dimensions in header: {exc}") from None
    meta = DatasetMeta(
        cfg=cfg,
        seed=int(seed),
        n_realizations=int(n_real),
        n_noisy=int(n_noisy),
        snr_train_db=[float(s) for s in snrs],
        realization_seeds=[int(s) for s in seeds],
        db_divisor=float(divisor),
    )
    return TrainingDataset(X.astype(float), T.astype(float), meta)


@dataclass
class ResultTable:
    """Rows of a CSV result file under a fixed header."""

    header: List[str]
    rows: List[Dict[str, object]] = field(default_factory=list)

    def add(self, **row):
        missing = set(self.header) - set(row)
        if missing:
            raise KeyError(f"row lacks columns {sorted(missing)}")
        self.rows.append(row)

    def column(self, name: str) -> List[object]:
        return [r[name] for r in self.rows]

    def select(self, **where) -> List[Dict[str, object]]:
        return [r for r in self.rows if all(r[k] == v for k, v in where.items())]


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))  # shortest round-trip representation
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


def write_csv(table: ResultTable, path: Union[str, Path]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(table.header)
        for row in table.rows:
            w.writerow([_fmt(row[c]) for c in table.header])


def read_csv(path: Union[str, Path]) -> List[Dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
