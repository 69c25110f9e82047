"""Backward (stimulus-reconstruction) decoding: time-lagged ridge regression
from EEG to feature series.

The decoder integrates EEG over nonnegative delays after each stimulus
sample: s_hat(t) = sum_l sum_n W[l,n,:] * eeg(t+l, n) + intercept. Normal
equations are accumulated per trial (no cross-trial lag leakage) and solved
for a whole lambda grid from one symmetric eigendecomposition.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import matio
from .core import TimeSeries
from .errors import ConfigurationError, NumericalError, ValidationError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LagConfig:
    """Integration window in seconds; defaults give 33 taps over 0-500 ms."""

    t_min_s: float = 0.0
    t_max_s: float = 0.5
    fs_hz: float = 64.0

    def __post_init__(self):
        if self.t_min_s > self.t_max_s:
            raise ConfigurationError(f"t_min {self.t_min_s} > t_max {self.t_max_s}")
        if self.t_min_s < 0:
            raise ConfigurationError("negative delays are not supported (backward model)")

    @property
    def lags(self) -> np.ndarray:
        lo = int(round(self.t_min_s * self.fs_hz))
        hi = int(round(self.t_max_s * self.fs_hz))
        return np.arange(lo, hi + 1)

    @property
    def n_lags(self) -> int:
        return len(self.lags)

    @property
    def delays_ms(self) -> np.ndarray:
        return self.lags * 1000.0 / self.fs_hz


def build_lagged_design(eeg: TimeSeries, cfg: LagConfig) -> np.ndarray:
    """Design matrix (T x n_lags*n_channels), lag-major / channel-minor columns.

    Row t holds eeg[t+l, n] for every lag l; samples past the trial end are
    zero-padded.
    """
    if eeg.sample_rate_hz != cfg.fs_hz:
        raise ConfigurationError(
            f"EEG rate {eeg.sample_rate_hz} Hz does not match lag config {cfg.fs_hz} Hz")
    data = eeg.data.astype(np.float64)
    t_len, n_ch = data.shape
    lags = cfg.lags
    if t_len < cfg.n_lags:
        raise ValidationError(f"trial has {t_len} samples, need at least {cfg.n_lags}")
    out = np.zeros((t_len, cfg.n_lags * n_ch))
    for i, lag in enumerate(lags):
        out[: t_len - lag, i * n_ch:(i + 1) * n_ch] = data[lag:]
    return out


def _gram_dense(data: np.ndarray, cfg: LagConfig) -> np.ndarray:
    x = build_lagged_design(TimeSeries(data, cfg.fs_hz), cfg)
    return x.T @ x


def _gram_structured(data: np.ndarray, cfg: LagConfig) -> np.ndarray:
    """X^T X without forming X: one full cross-moment per lag difference plus
    a small head correction per lag pair (block-Toeplitz up to edges)."""
    t_len, n_ch = data.shape
    lags = cfg.lags
    n_lags = len(lags)
    max_delta = int(lags[-1] - lags[0])
    # full-overlap cross moments S[d] = sum_t data[t].T data[t+d]
    s = [data[: t_len - d].T @ data[d:] if d else data.T @ data
         for d in range(max_delta + 1)]
    gram = np.empty((n_lags * n_ch, n_lags * n_ch))
    for i in range(n_lags):
        for j in range(i, n_lags):
            d = int(lags[j] - lags[i])
            block = s[d].copy()
            head = int(lags[i])  # rows of X where the shorter-lag column is alive
            if head:
                block -= data[:head].T @ data[d:d + head]
            gram[i * n_ch:(i + 1) * n_ch, j * n_ch:(j + 1) * n_ch] = block
            if j != i:
                gram[j * n_ch:(j + 1) * n_ch, i * n_ch:(i + 1) * n_ch] = block.T
    return gram


def _lagged_xty(data: np.ndarray, target: np.ndarray, cfg: LagConfig) -> np.ndarray:
    t_len, n_ch = data.shape
    out = np.empty((cfg.n_lags * n_ch, target.shape[1]))
    for i, lag in enumerate(cfg.lags):
        lag = int(lag)
        out[i * n_ch:(i + 1) * n_ch] = data[lag:].T @ target[: t_len - lag]
    return out


def _lagged_colsums(data: np.ndarray, cfg: LagConfig) -> np.ndarray:
    total = data.sum(axis=0)
    return np.concatenate([total - data[: int(lag)].sum(axis=0) for lag in cfg.lags])


@dataclass(frozen=True)
class CovarianceAccumulator:
    """Sufficient statistics of the ridge problem; mergeable across trials."""

    lag_config: LagConfig
    n_channels: int
    n_features: int
    xtx: np.ndarray  # (D, D)
    xty: np.ndarray  # (D, F)
    sx: np.ndarray  # (D,) design column sums
    sy: np.ndarray  # (F,) target column sums
    n_samples: int

    @classmethod
    def empty(cls, cfg: LagConfig, n_channels: int, n_features: int) -> "CovarianceAccumulator":
        d = cfg.n_lags * n_channels
        return cls(cfg, n_channels, n_features,
                   xtx=np.zeros((d, d)), xty=np.zeros((d, n_features)),
                   sx=np.zeros(d), sy=np.zeros(n_features), n_samples=0)

    def merge(self, other: "CovarianceAccumulator") -> "CovarianceAccumulator":
        self._check_compatible(other)
        return replace(self, xtx=self.xtx + other.xtx, xty=self.xty + other.xty,
                       sx=self.sx + other.sx, sy=self.sy + other.sy,
                       n_samples=self.n_samples + other.n_samples)

    def subtract(self, other: "CovarianceAccumulator") -> "CovarianceAccumulator":
        """Remove a previously merged trial (leave-one-out folds)."""
        self._check_compatible(other)
        return replace(self, xtx=self.xtx - other.xtx, xty=self.xty - other.xty,
                       sx=self.sx - other.sx, sy=self.sy - other.sy,
                       n_samples=self.n_samples - other.n_samples)

    def _check_compatible(self, other: "CovarianceAccumulator") -> None:
        if (self.lag_config != other.lag_config or self.n_channels != other.n_channels
                or self.n_features != other.n_features):
            raise ValidationError("accumulators were built with different shapes")

    def centered(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """(XtX, XtY) about the column means, plus the means themselves."""
        if self.n_samples == 0:
            raise ValidationError("empty accumulator")
        x_mean = self.sx / self.n_samples
        y_mean = self.sy / self.n_samples
        xtx_c = self.xtx - np.outer(self.sx, self.sx) / self.n_samples
        xty_c = self.xty - np.outer(self.sx, self.sy) / self.n_samples
        return xtx_c, xty_c, x_mean, y_mean


def accumulate(acc: CovarianceAccumulator, eeg: TimeSeries, target: TimeSeries,
               structured: bool = True) -> CovarianceAccumulator:
    """Add one trial's normal-equation statistics; returns a new accumulator."""
    if eeg.n_samples != target.n_samples:
        raise ValidationError(
            f"EEG has {eeg.n_samples} rows, target has {target.n_samples}")
    if eeg.n_channels != acc.n_channels or target.n_channels != acc.n_features:
        raise ValidationError("trial shape does not match accumulator")
    cfg = acc.lag_config
    data = eeg.data.astype(np.float64)
    y = target.data.astype(np.float64)
    gram = _gram_structured(data, cfg) if structured else _gram_dense(data, cfg)
    return replace(acc,
                   xtx=acc.xtx + gram,
                   xty=acc.xty + _lagged_xty(data, y, cfg),
                   sx=acc.sx + _lagged_colsums(data, cfg),
                   sy=acc.sy + y.sum(axis=0),
                   n_samples=acc.n_samples + eeg.n_samples)


def accumulate_trials(trials: list[tuple[TimeSeries, TimeSeries]], cfg: LagConfig,
                      structured: bool = True) -> CovarianceAccumulator:
    eeg0, target0 = trials[0]
    acc = CovarianceAccumulator.empty(cfg, eeg0.n_channels, target0.n_channels)
    for eeg, target in trials:
        acc = accumulate(acc, eeg, target, structured=structured)
    return acc


@dataclass(frozen=True)
class Decoder:
    """Fitted backward model: weights (n_lags x n_channels x n_features)."""

    weights: np.ndarray
    intercept: np.ndarray
    lam: float
    lag_config: LagConfig
    norm_refs: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.weights.ndim != 3:
            raise ValidationError(f"weights must be 3-D, got {self.weights.shape}")
        if self.weights.shape[0] != self.lag_config.n_lags:
            raise ValidationError("weight tensor does not match lag config")
        if not np.isfinite(self.weights).all() or not np.isfinite(self.intercept).all():
            raise ValidationError("decoder weights must be finite")

    @property
    def n_channels(self) -> int:
        return self.weights.shape[1]

    @property
    def n_features(self) -> int:
        return self.weights.shape[2]


def default_lambda_grid(acc: CovarianceAccumulator, n: int = 13) -> np.ndarray:
    """Log-spaced 1e-6..1e6 grid scaled by mean(diag(XtX)) for scale invariance."""
    xtx_c, _, _, _ = acc.centered()
    scale = float(np.mean(np.diag(xtx_c)))
    return np.logspace(-6, 6, n) * scale


def solve_ridge(acc: CovarianceAccumulator, lambdas: list[float] | np.ndarray,
                norm_refs: dict | None = None) -> list[Decoder]:
    """Solve (XtX + lambda I) W = XtY for every lambda via one eigendecomposition.

    lambdas must be sorted ascending and nonnegative. At lambda=0 on a
    singular system the solve degrades to the pseudo-inverse with a warning.
    """
    lambdas = np.asarray(lambdas, dtype=np.float64)
    if lambdas.size == 0:
        raise ValidationError("need at least one lambda")
    if np.any(lambdas < 0):
        raise ValidationError("lambdas must be nonnegative")
    if np.any(np.diff(lambdas) < 0):
        raise ValidationError("lambdas must be sorted ascending")
    if acc.n_samples == 0:
        raise ValidationError("empty accumulator")

    xtx_c, xty_c, x_mean, y_mean = acc.centered()
    evals, evecs = np.linalg.eigh(xtx_c)
    proj = evecs.T @ xty_c
    tol = max(float(evals[-1]), 0.0) * xtx_c.shape[0] * np.finfo(np.float64).eps
    decoders = []
    cfg = acc.lag_config
    for lam in lambdas:
        denom = evals + lam
        if lam == 0.0 and np.any(evals <= tol):
            warnings.warn("XtX is numerically singular at lambda=0; "
                          "using the pseudo-inverse (minimum-norm) solution")
            inv = np.where(evals > tol, 1.0 / np.where(evals > tol, evals, 1.0), 0.0)
        else:
            if np.any(denom <= 0):
                raise NumericalError(f"XtX + {lam} I is not positive definite")
            inv = 1.0 / denom
        w = evecs @ (proj * inv[:, None])
        intercept = y_mean - w.T @ x_mean
        decoders.append(Decoder(
            weights=w.reshape(cfg.n_lags, acc.n_channels, acc.n_features),
            intercept=intercept, lam=float(lam), lag_config=cfg,
            norm_refs=dict(norm_refs or {})))
    return decoders


def reconstruct(decoder: Decoder, eeg: TimeSeries) -> TimeSeries:
    """Predict the feature series from EEG; trailing samples see zero-padding."""
    if eeg.n_channels != decoder.n_channels:
        raise ValidationError(
            f"EEG has {eeg.n_channels} channels, decoder expects {decoder.n_channels}")
    cfg = decoder.lag_config
    if eeg.sample_rate_hz != cfg.fs_hz:
        raise ConfigurationError(
            f"EEG rate {eeg.sample_rate_hz} Hz does not match decoder {cfg.fs_hz} Hz")
    data = eeg.data.astype(np.float64)
    t_len = data.shape[0]
    out = np.tile(decoder.intercept, (t_len, 1))
    for i, lag in enumerate(cfg.lags):
        lag = int(lag)
        out[: t_len - lag] += data[lag:] @ decoder.weights[i]
    return TimeSeries(out, cfg.fs_hz)


def pearson_columns(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Column-wise Pearson correlation; zero-variance columns give 0."""
    ac = a - a.mean(axis=0)
    bc = b - b.mean(axis=0)
    num = (ac * bc).sum(axis=0)
    den = np.sqrt((ac ** 2).sum(axis=0) * (bc ** 2).sum(axis=0))
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
    return r


@dataclass(frozen=True)
class CvRecord:
    fold: int
    lam: float
    score: float


def split_pseudo_trials(eeg: TimeSeries, target: TimeSeries,
                        n_segments: int = 4) -> list[tuple[TimeSeries, TimeSeries]]:
    """Cut one long trial into contiguous pseudo-trials for cross-validation."""
    if n_segments < 2:
        raise ValidationError("need at least 2 segments")
    bounds = np.linspace(0, eeg.n_samples, n_segments + 1).astype(int)
    out = []
    for a, b in zip(bounds[:-1], bounds[1:]):
        out.append((eeg.with_data(eeg.data[a:b]), target.with_data(target.data[a:b])))
    return out


def loo_cv_lambda(train_trials: list[tuple[TimeSeries, TimeSeries]],
                  lambdas: list[float] | np.ndarray,
                  lag_cfg: LagConfig | None = None,
                  structured: bool = True) -> tuple[float, list[CvRecord]]:
    """Leave-one-trial-out selection of lambda.

    Each fold trains by accumulator subtraction and scores the held-out trial
    with the mean Pearson correlation across feature dimensions. Ties go to
    the larger lambda.
    """
    if len(train_trials) < 2:
        raise ValidationError(
            "leave-one-out needs at least 2 training trials; segment the trial "
            "with split_pseudo_trials(...) into >= 4 pseudo-trials first")
    lambdas = np.asarray(lambdas, dtype=np.float64)
    cfg = lag_cfg
    per_trial = []
    for eeg, target in train_trials:
        if cfg is None:
            cfg = LagConfig(fs_hz=eeg.sample_rate_hz)
        acc = CovarianceAccumulator.empty(cfg, eeg.n_channels, target.n_channels)
        per_trial.append(accumulate(acc, eeg, target, structured=structured))
    total = per_trial[0]
    for acc in per_trial[1:]:
        total = total.merge(acc)

    records = []
    scores = np.zeros((len(train_trials), len(lambdas)))
    for fold, (eeg, target) in enumerate(train_trials):
        fold_acc = total.subtract(per_trial[fold])
        for j, fitted in enumerate(solve_ridge(fold_acc, lambdas)):
            pred = reconstruct(fitted, eeg)
            score = float(np.mean(pearson_columns(pred.data, target.data)))
            scores[fold, j] = score
            records.append(CvRecord(fold=fold, lam=float(lambdas[j]), score=score))
    mean_scores = scores.mean(axis=0)
    best_idx = int(np.flatnonzero(mean_scores >= mean_scores.max())[-1])
    return float(lambdas[best_idx]), records


def weight_energy_profile(decoder: Decoder) -> np.ndarray:
    """Per-lag weight energy, normalized to sum to 1."""
    energy = (decoder.weights ** 2).sum(axis=(1, 2))
    total = energy.sum()
    if total == 0:
        raise ValidationError("decoder weights are all zero")
    return energy / total


def save_decoder(decoder: Decoder, stem: str | Path) -> None:
    """Persist as a flattened weight matrix plus JSON metadata."""
    stem = str(stem)
    cfg = decoder.lag_config
    flat = decoder.weights.reshape(cfg.n_lags, -1)
    matio.write_matrix_atomic(flat, stem + ".weights.aadm")
    meta = {
        "lambda": decoder.lam,
        "lag": {"t_min_s": cfg.t_min_s, "t_max_s": cfg.t_max_s, "fs_hz": cfg.fs_hz},
        "n_channels": decoder.n_channels,
        "n_features": decoder.n_features,
        "intercept": [float(v) for v in decoder.intercept],
        "norm_refs": decoder.norm_refs,
    }
    tmp = Path(stem + ".json.tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    tmp.replace(stem + ".json")


def load_decoder(stem: str | Path) -> Decoder:
    stem = str(stem)
    with open(stem + ".json", "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    cfg = LagConfig(**meta["lag"])
    flat = matio.read_matrix(stem + ".weights.aadm").astype(np.float64)
    weights = flat.reshape(cfg.n_lags, meta["n_channels"], meta["n_features"])
    return Decoder(weights=weights, intercept=np.array(meta["intercept"]),
                   lam=float(meta["lambda"]), lag_config=cfg,
                   norm_refs=meta.get("norm_refs", {}))
