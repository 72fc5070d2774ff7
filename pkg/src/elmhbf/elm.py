"""Extreme-learning-machine surrogate for hybrid beamformer design.

Noisy channels are flattened to real feature vectors, solver-designed
hybrid beamformers to real target vectors, and a single random hidden
layer with closed-form ridge output weights maps one to the other.
Predictions are decoded back to beamformers that always satisfy the
constant-modulus and power constraints.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg as sla
from scipy.special import expit

from .channel import ChannelModelParams, ChannelSet, SystemConfig, derive_seed, generate_channel, perturb_channel
from .fp_fd import FpStop
from .metrics import HybridBeamformers
from .mm_hbf import MmStop, fp_mm_pipeline, normalize_power
from .parallel import parallel_map

__all__ = [
    "Layout",
    "ElmModel",
    "TrainingDataset",
    "DatasetMeta",
    "UntrainedModelError",
    "ModelFormatError",
    "encode_features",
    "decode_features",
    "encode_targets",
    "decode_targets",
    "build_dataset",
    "init_random",
    "hidden_matrix",
    "train",
    "ridge_solve",
    "predict",
    "predict_targets",
    "select_lambda",
    "save_model",
    "load_model",
]

log = logging.getLogger(__name__)

ACTIVATIONS = ("sigmoid", "prelu")


class UntrainedModelError(RuntimeError):
    pass


class ModelFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Layout:
    """Index map between beamformer sets / channels and flat real vectors."""

    K: int
    Ns: int
    Nt: int
    Nr: int
    Nrft: int
    Nrfr: int

    @classmethod
    def from_config(cls, cfg: SystemConfig) -> "Layout":
        return cls(cfg.K, cfg.Ns, cfg.Nt, cfg.Nr, cfg.Nrft, cfg.Nrfr)

    @property
    def n_inputs(self) -> int:
        return 2 * self.K * self.Nr * self.Nt

    @property
    def segments(self) -> List[Tuple[str, int]]:
        KNs = self.K * self.Ns
        return [
            ("Fbb_re", self.Nrft * KNs),
            ("Fbb_im", self.Nrft * KNs),
            ("Wbb_re", self.Nrfr * KNs),
            ("Wbb_im", self.Nrfr * KNs),
            ("Frf_arg", self.Nt * self.Nrft),
            ("Wrf_arg", self.Nr * self.K * self.Nrfr),
        ]

    @property
    def n_outputs(self) -> int:
        return sum(n for _, n in self.segments)

    def as_tuple(self) -> Tuple[int, ...]:
        return (self.K, self.Ns, self.Nt, self.Nr, self.Nrft, self.Nrfr)


def _vec(a: np.ndarray) -> np.ndarray:
    return np.asarray(a).ravel(order="F")


def _unvec(v: np.ndarray, rows: int, cols: int) -> np.ndarray:
    return np.asarray(v).reshape((rows, cols), order="F")


def _wrapped_angle(z: np.ndarray) -> np.ndarray:
    theta = np.angle(z)
    theta[theta <= -np.pi] = np.pi
    return theta


def encode_features(noisyH: Union[ChannelSet, Sequence[np.ndarray]]) -> np.ndarray:
    """``[Re vec(H_1), ..., Re vec(H_K), Im vec(H_1), ..., Im vec(H_K)]`` (column-major vec)."""
    Hs = list(noisyH)
    shape = Hs[0].shape
    if any(h.shape != shape for h in Hs):
        raise ValueError("all channel matrices must share one shape")
    v = np.concatenate([_vec(h) for h in Hs])
    return np.concatenate([v.real, v.imag]).astype(float)


def decode_features(x: np.ndarray, layout: Layout) -> ChannelSet:
    """Inverse of :func:`encode_features`."""
    x = np.asarray(x, dtype=float)
    if x.size != layout.n_inputs:
        raise ValueError(f"feature vector has length {x.size}, expected {layout.n_inputs}")
    half = x.size // 2
    v = x[:half] + 1j * x[half:]
    n = layout.Nr * layout.Nt
    return ChannelSet([_unvec(v[k * n:(k + 1) * n], layout.Nr, layout.Nt) for k in range(layout.K)])


def encode_targets(hb: HybridBeamformers) -> np.ndarray:
    """Flatten a hybrid design: digital parts as re/im, analog parts as phases in (-pi, pi]."""
    Fbb = _vec(np.hstack(hb.Fbb))
    Wbb = _vec(np.hstack(hb.Wbb))
    return np.concatenate(
        [
            Fbb.real,
            Fbb.imag,
            Wbb.real,
            Wbb.imag,
            _wrapped_angle(_vec(hb.Frf)),
            _wrapped_angle(_vec(np.hstack(hb.Wrf))),
        ]
    )


def _split(t: np.ndarray, layout: Layout) -> dict:
    out, start = {}, 0
    for name, n in layout.segments:
        out[name] = t[start:start + n]
        start += n
    return out


def decode_targets(t: np.ndarray, cfg: Union[SystemConfig, Layout]) -> HybridBeamformers:
    """Rebuild feasible hybrid beamformers from a (predicted) target vector.

    Analog matrices are ``exp(j * phase)``; digital precoders are scaled to
    meet the total power ``K Ns`` exactly.
    """
    layout = cfg if isinstance(cfg, Layout) else Layout.from_config(cfg)
    t = np.asarray(t, dtype=float)
    if t.size != layout.n_outputs:
        raise ValueError(f"target vector has length {t.size}, expected {layout.n_outputs}")
    s = _split(t, layout)
    K, Ns = layout.K, layout.Ns
    Fbb_all = _unvec(s["Fbb_re"] + 1j * s["Fbb_im"], layout.Nrft, K * Ns)
    Wbb_all = _unvec(s["Wbb_re"] + 1j * s["Wbb_im"], layout.Nrfr, K * Ns)
    Frf = np.exp(1j * _unvec(s["Frf_arg"], layout.Nt, layout.Nrft))
    Wrf_all = np.exp(1j * _unvec(s["Wrf_arg"], layout.Nr, K * layout.Nrfr))

    Fbb = [Fbb_all[:, k * Ns:(k + 1) * Ns].copy() for k in range(K)]
    if not np.any(Frf @ Fbb_all):
        # degenerate prediction: fall back to stream-to-RF-chain selection
        eye = np.eye(layout.Nrft, K * Ns, dtype=complex)
        Fbb = [eye[:, k * Ns:(k + 1) * Ns].copy() for k in range(K)]
    Fbb = normalize_power(Frf, Fbb, K * Ns)
    Wbb = [Wbb_all[:, k * Ns:(k + 1) * Ns].copy() for k in range(K)]
    Wrf = [Wrf_all[:, k * layout.Nrfr:(k + 1) * layout.Nrfr].copy() for k in range(K)]
    return HybridBeamformers(Frf=Frf, Fbb=Fbb, Wrf=Wrf, Wbb=Wbb)


# ---------------------------------------------------------------------------
# datasets
# ---------------------------------------------------------------------------


@dataclass
class DatasetMeta:
    cfg: SystemConfig
    seed: int
    n_realizations: int
    n_noisy: int
    snr_train_db: List[float]
    realization_seeds: List[int] = field(default_factory=list)
    db_divisor: float = 20.0


@dataclass
class TrainingDataset:
    """Rows of ``X`` (features) paired with rows of ``T`` (targets)."""

    X: np.ndarray
    T: np.ndarray
    meta: DatasetMeta

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.T = np.asarray(self.T, dtype=float)
        if self.X.ndim != 2 or self.T.ndim != 2 or self.X.shape[0] != self.T.shape[0]:
            raise ValueError(f"X {self.X.shape} and T {self.T.shape} must be 2-D with equal row counts")
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.T))):
            raise ValueError("dataset contains non-finite values")

    def __len__(self):
        return self.X.shape[0]


def _realization_rows(
    r: int,
    cfg: SystemConfig,
    params: ChannelModelParams,
    n_noisy: int,
    snr_list: Sequence[float],
    seed: int,
    fp_stop: FpStop,
    mm_stop: MmStop,
    db_divisor: float,
):
    ch_seed = seed + r
    H = generate_channel(cfg, params, ch_seed)
    try:
        hb = fp_mm_pipeline(cfg, H, seed=ch_seed, fp_stop=fp_stop, mm_stop=mm_stop)
    except (np.linalg.LinAlgError, ValueError) as exc:
        return ch_seed, None, None, str(exc)
    t = encode_targets(hb)
    X = np.empty((n_noisy, 2 * cfg.K * cfg.Nr * cfg.Nt))
    for c in range(n_noisy):
        snr = snr_list[c % len(snr_list)]
        noisy = perturb_channel(H, snr, derive_seed(seed, r, c), db_divisor=db_divisor)
        X[c] = encode_features(noisy)
    return ch_seed, X, np.tile(t, (n_noisy, 1)), None


def build_dataset(
    cfg: SystemConfig,
    params: ChannelModelParams,
    n_realizations: int,
    n_noisy: int,
    snr_train_db: Sequence[float],
    seed: int,
    fp_stop: FpStop = FpStop(),
    mm_stop: MmStop = MmStop(),
    db_divisor: float = 20.0,
    workers: Optional[int] = None,
) -> TrainingDataset:
    """Label clean channels with the FP-MM design and pair each label with noisy copies.

    Realization ``r`` uses channel seed ``seed + r``; copy ``c`` of it is
    perturbed at ``snr_train_db[c % len(snr_train_db)]``. Realizations
    whose solve fails are skipped with a warning.
    """
    if n_realizations < 1 or n_noisy < 1:
        raise ValueError("n_realizations and n_noisy must be >= 1")
    snr_list = [float(s) for s in snr_train_db]
    if not snr_list:
        raise ValueError("snr_train_db must not be empty")
    task = partial(
        _realization_rows,
        cfg=cfg,
        params=params,
        n_noisy=n_noisy,
        snr_list=snr_list,
        seed=int(seed),
        fp_stop=fp_stop,
        mm_stop=mm_stop,
        db_divisor=db_divisor,
    )
    results = parallel_map(task, range(n_realizations), workers=workers)
    Xs, Ts, seeds = [], [], []
    for ch_seed, X, T, err in results:
        if err is not None:
            log.warning("skipping realization with channel seed %d: %s", ch_seed, err)
            continue
        Xs.append(X)
        Ts.append(T)
        seeds.append(ch_seed)
    if not Xs:
        raise RuntimeError("every realization failed; dataset is empty")
    meta = DatasetMeta(
        cfg=cfg,
        seed=int(seed),
        n_realizations=n_realizations,
        n_noisy=n_noisy,
        snr_train_db=snr_list,
        realization_seeds=seeds,
        db_divisor=float(db_divisor),
    )
    return TrainingDataset(np.vstack(Xs), np.vstack(Ts), meta)


# ---------------------------------------------------------------------------
# model
# ---------------------------------------------------------------------------


@dataclass
class ElmModel:
    """Random hidden layer plus ridge output weights.

    ``Win`` is ``L x N_I``, ``b`` has length ``L``, ``beta`` is ``L x N_o``
    (``None`` until trained).
    """

    Win: np.ndarray
    b: np.ndarray
    layout: Layout
    activation: str = "prelu"
    slope: float = 0.25
    lam: float = 1000.0
    beta: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}, got {self.activation!r}")
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if self.Win.shape != (self.L, self.layout.n_inputs):
            raise ValueError(f"Win has shape {self.Win.shape}, expected {(self.L, self.layout.n_inputs)}")

    @property
    def L(self) -> int:
        return self.Win.shape[0]

    @property
    def trained(self) -> bool:
        return self.beta is not None


def init_random(
    cfg: Union[SystemConfig, Layout],
    L: int,
    activation: str = "prelu",
    lam: float = 1000.0,
    seed: int = 0,
    slope: float = 0.25,
) -> ElmModel:
    """Fresh model with ``Win ~ U[-1, 1]`` and ``b ~ U[0, 1]``."""
    if L < 1:
        raise ValueError("L must be >= 1")
    layout = cfg if isinstance(cfg, Layout) else Layout.from_config(cfg)
    rng = np.random.default_rng(seed)
    Win = rng.uniform(-1.0, 1.0, size=(L, layout.n_inputs))
    b = rng.uniform(0.0, 1.0, size=L)
    return ElmModel(Win=Win, b=b, layout=layout, activation=activation, slope=slope, lam=lam)


def _activate(z: np.ndarray, activation: str, slope: float) -> np.ndarray:
    if activation == "sigmoid":
        return expit(z)
    return np.where(z >= 0, z, slope * z)


def hidden_matrix(model: ElmModel, X: np.ndarray) -> np.ndarray:
    """``G[j, l] = g(Win[l] . x_j + b[l])``; shape ``N x L``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return _activate(X @ model.Win.T + model.b, model.activation, model.slope)


def ridge_solve(G: np.ndarray, T: np.ndarray, lam: float, form: str = "auto") -> np.ndarray:
    """Minimizer of ``(lam/2)||G beta - T||^2 + (1/2)||beta||^2``.

    ``form="dual"``: ``G^T (I/lam + G G^T)^{-1} T``; ``"primal"``:
    ``(G^T G + I/lam)^{-1} G^T T``; ``"auto"`` picks the smaller system.
    """
    if not np.all(np.isfinite(G)):
        raise ValueError("hidden-layer matrix contains non-finite values")
    N, L = G.shape
    if form == "auto":
        form = "dual" if N < L else "primal"
    if form == "dual":
        A = G @ G.T
        A[np.diag_indices(N)] += 1.0 / lam
        return G.T @ sla.solve(A, T, assume_a="pos")
    if form == "primal":
        A = G.T @ G
        A[np.diag_indices(L)] += 1.0 / lam
        return sla.solve(A, G.T @ T, assume_a="pos")
    raise ValueError(f"unknown form {form!r}")


def train(model: ElmModel, dataset: TrainingDataset) -> ElmModel:
    """Set ``beta`` in closed form; returns the same (mutated) model."""
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    if dataset.X.shape[1] != model.layout.n_inputs or dataset.T.shape[1] != model.layout.n_outputs:
        raise ValueError("dataset dimensions do not match the model layout")
    G = hidden_matrix(model, dataset.X)
    model.beta = ridge_solve(G, dataset.T, model.lam)
    return model


def predict_targets(model: ElmModel, X: np.ndarray) -> np.ndarray:
    if not model.trained:
        raise UntrainedModelError("model has no output weights; call train() first")
    return hidden_matrix(model, X) @ model.beta


def predict(model: ElmModel, noisyH: ChannelSet) -> HybridBeamformers:
    """Feasible hybrid beamformers predicted from one (noisy) channel set."""
    t = predict_targets(model, encode_features(noisyH))[0]
    return decode_targets(t, model.layout)


def select_lambda(
    model: ElmModel,
    train_set: TrainingDataset,
    val_set: TrainingDataset,
    grid: Iterable[float] = (10.0, 1e2, 1e3, 1e4),
) -> Tuple[float, List[Tuple[float, float]]]:
    """Pick the ridge trade-off with the lowest validation target MSE.

    The hidden layer is computed once and reused across the grid. Returns
    the best value and all ``(lam, mse)`` pairs; `model` is not modified.
    """
    G = hidden_matrix(model, train_set.X)
    Gv = hidden_matrix(model, val_set.X)
    scores = []
    for lam in grid:
        beta = ridge_solve(G, train_set.T, float(lam))
        scores.append((float(lam), float(np.mean((Gv @ beta - val_set.T) ** 2))))
    best = min(scores, key=lambda s: s[1])[0]
    return best, scores


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

MODEL_MAGIC = b"ELMB"
MODEL_VERSION = 1
# magic, version, L, N_I, N_o, K, Ns, Nt, Nr, Nrft, Nrfr, activation tag, activation param, lambda
_MODEL_HEADER = struct.Struct("<4sI3I6IIdd")


def save_model(model: ElmModel, path: Union[str, Path]) -> None:
    """Write the binary ``ELMB`` model file."""
    if not model.trained:
        raise UntrainedModelError("refusing to save an untrained model")
    lay = model.layout
    header = _MODEL_HEADER.pack(
        MODEL_MAGIC,
        MODEL_VERSION,
        model.L,
        lay.n_inputs,
        lay.n_outputs,
        *lay.as_tuple(),
        ACTIVATIONS.index(model.activation),
        float(model.slope),
        float(model.lam),
    )
    with open(path, "wb") as fh:
        fh.write(header)
        for arr in (model.Win, model.b, model.beta):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_model(path: Union[str, Path]) -> ElmModel:
    """Read a model written by :func:`save_model`."""
    data = Path(path).read_bytes()
    if len(data) < _MODEL_HEADER.size:
        raise ModelFormatError(f"truncated header: {len(data)} bytes, expected {_MODEL_HEADER.size}")
    magic, version, L, n_in, n_out, *rest = _MODEL_HEADER.unpack_from(data, 0)
    if magic != MODEL_MAGIC:
        raise ModelFormatError(f"bad magic {magic!r} at offset 0")
    if version != MODEL_VERSION:
        raise ModelFormatError(f"unsupported version {version} at offset 4")
    dims, (tag, slope, lam) = rest[:6], rest[6:]
    layout = Layout(*dims)
    if (layout.n_inputs, layout.n_outputs) != (n_in, n_out):
        raise ModelFormatError("layout dimensions inconsistent with stored N_I / N_o")
    if tag >= len(ACTIVATIONS):
        raise ModelFormatError(f"unknown activation tag {tag}")
    expected = _MODEL_HEADER.size + 8 * (L * n_in + L + L * n_out)
    if len(data) != expected:
        raise ModelFormatError(f"payload length mismatch: expected {expected} bytes, got {len(data)}")
    off = _MODEL_HEADER.size
    Win = np.frombuffer(data, "<f8", L * n_in, off).reshape(L, n_in).astype(float)
    off += 8 * L * n_in
    b = np.frombuffer(data, "<f8", L, off).astype(float)
    off += 8 * L
    beta = np.frombuffer(data, "<f8", L * n_out, off).reshape(L, n_out).astype(float)
    return ElmModel(Win=Win, b=b, layout=layout, activation=ACTIVATIONS[tag], slope=slope, lam=lam, beta=beta)
