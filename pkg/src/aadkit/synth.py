"""Forward-model synthetic data: band-limited feature processes driven
through known response kernels into multichannel EEG, so every pipeline
stage has a ground truth to verify against.

Two kernel directions are supported:

* "forward": eeg(t,n) = sum_f (h_att[:,n,f] * s_att_f)(t)
             + rho * (h_unatt[:,n,f] * s_unatt_f)(t) + sigma * noise.
  EEG lags the stimulus, matching the decoder's 0..+500 ms convention.
* "backward": the EEG is the driving noise process and the feature streams
  are built by applying a known backward kernel to the lagged EEG, which
  makes the ridge problem exactly realizable (used for weight-recovery
  checks, where the trained decoder must reproduce the generating kernel).
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
from scipy import signal

from . import matio
from .core import TimeSeries
from .decoder import LagConfig, build_lagged_design
from .errors import ValidationError
from .manifest import save_manifest

_KERNEL_KEY = 0
_TRIAL_KEY = 1


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    n_subjects: int = 2
    n_trials_per_subject: int = 10
    trial_duration_s: float = 60.0
    n_eeg_channels: int = 8
    n_feature_dims: int = 1
    fs_hz: float = 64.0
    lag: LagConfig = field(default_factory=LagConfig)
    kernel_center_lag: int = 10
    kernel_width_lags: int = 9
    unattended_center_lag: int | None = None  # defaults to attended center + 4
    unattended_gain: float = 0.5  # rho
    noise_sigma: float = 1.0
    feature_cutoff_hz: float = 8.0
    kernel_direction: str = "forward"
    unattended_nonlinearity: str = "none"  # optional static nonlinearity hook

    def __post_init__(self):
        if not (0.0 <= self.unattended_gain <= 1.0):
            raise ValidationError(f"rho must be in [0,1], got {self.unattended_gain}")
        if self.noise_sigma < 0:
            raise ValidationError("noise_sigma must be nonnegative")
        if self.kernel_direction not in ("forward", "backward"):
            raise ValidationError(f"bad kernel_direction {self.kernel_direction!r}")
        if self.unattended_nonlinearity not in ("none", "tanh"):
            raise ValidationError(f"bad nonlinearity {self.unattended_nonlinearity!r}")


@dataclass(frozen=True)
class SynthTrial:
    trial_id: str
    subject_id: str
    eeg: TimeSeries
    attended: TimeSeries
    unattended: TimeSeries


@dataclass(frozen=True)
class GroundTruth:
    h_attended: np.ndarray  # (n_lags, n_channels, n_feature_dims)
    h_unattended: np.ndarray
    config: SynthConfig


def _rng(cfg: SynthConfig, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=tuple(key)))


def raised_cosine(lags: np.ndarray, center: float, width: float) -> np.ndarray:
    """Smooth bump on the lag axis; zero outside [center-width/2, center+width/2]."""
    arg = (lags - center) / (width / 2.0)
    return np.where(np.abs(arg) <= 1.0, 0.5 * (1 + np.cos(np.pi * arg)), 0.0)


def make_kernels(cfg: SynthConfig) -> GroundTruth:
    """Random-amplitude raised-cosine kernels with known energy peak lags."""
    rng = _rng(cfg, _KERNEL_KEY)
    lags = np.arange(cfg.lag.n_lags, dtype=np.float64)
    shape = (cfg.lag.n_lags, cfg.n_eeg_channels, cfg.n_feature_dims)
    unatt_center = (cfg.unattended_center_lag if cfg.unattended_center_lag is not None
                    else min(cfg.kernel_center_lag + 4, cfg.lag.n_lags - 1))
    kernels = []
    for center in (cfg.kernel_center_lag, unatt_center):
        bump = raised_cosine(lags, center, cfg.kernel_width_lags)
        amp = rng.uniform(0.5, 1.5, size=(cfg.n_eeg_channels, cfg.n_feature_dims))
        sign = rng.choice([-1.0, 1.0], size=amp.shape)
        kernels.append(bump[:, None, None] * (amp * sign)[None])
    h_att, h_unatt = kernels
    return GroundTruth(h_attended=h_att.reshape(shape), h_unattended=h_unatt.reshape(shape),
                       config=cfg)


def feature_process(rng: np.random.Generator, n_samples: int, n_dims: int,
                    fs_hz: float, cutoff_hz: float) -> np.ndarray:
    """Low-passed unit-variance Gaussian noise per dimension."""
    white = rng.standard_normal((n_samples, n_dims))
    sos = signal.butter(4, cutoff_hz, btype="lowpass", fs=fs_hz, output="sos")
    x = signal.sosfiltfilt(sos, white, axis=0)
    return x / x.std(axis=0)


def forward_convolve(kernel: np.ndarray, s: np.ndarray) -> np.ndarray:
    """eeg(t,n) = sum_f sum_l kernel[l,n,f] * s(t-l,f); causal, zero initial state."""
    t_len = s.shape[0]
    out = np.zeros((t_len, kernel.shape[1]))
    for lag in range(kernel.shape[0]):
        if lag == 0:
            out += s @ kernel[0].T
        else:
            out[lag:] += s[:-lag] @ kernel[lag].T
    return out


def backward_apply(kernel: np.ndarray, eeg: np.ndarray, cfg: LagConfig) -> np.ndarray:
    """s(t,f) = sum_n sum_l kernel[l,n,f] * eeg(t+l,n), zero-padded at the end."""
    t_len = eeg.shape[0]
    out = np.zeros((t_len, kernel.shape[2]))
    for i, lag in enumerate(cfg.lags):
        lag = int(lag)
        out[: t_len - lag] += eeg[lag:] @ kernel[i]
    return out


def generate_trial(cfg: SynthConfig, truth: GroundTruth, subject_idx: int,
                   trial_idx: int) -> SynthTrial:
    """One reproducible trial; the RNG stream is keyed by (seed, subject, trial)."""
    rng = _rng(cfg, _TRIAL_KEY, subject_idx, trial_idx)
    t_len = int(round(cfg.trial_duration_s * cfg.fs_hz))
    subject_id = f"s{subject_idx:02d}"
    trial_id = f"{subject_id}_t{trial_idx:03d}"

    if cfg.kernel_direction == "forward":
        s_att = feature_process(rng, t_len, cfg.n_feature_dims, cfg.fs_hz,
                                cfg.feature_cutoff_hz)
        s_unatt = feature_process(rng, t_len, cfg.n_feature_dims, cfg.fs_hz,
                                  cfg.feature_cutoff_hz)
        driven = s_unatt if cfg.unattended_nonlinearity == "none" else np.tanh(s_unatt)
        eeg = forward_convolve(truth.h_attended, s_att)
        eeg += cfg.unattended_gain * forward_convolve(truth.h_unattended, driven)
        if cfg.noise_sigma > 0:
            eeg += cfg.noise_sigma * rng.standard_normal(eeg.shape)
    else:
        eeg = rng.standard_normal((t_len, cfg.n_eeg_channels))
        s_att = backward_apply(truth.h_attended, eeg, cfg.lag)
        if cfg.unattended_gain > 0:
            s_unatt = cfg.unattended_gain * backward_apply(truth.h_unattended, eeg, cfg.lag)
            s_unatt += (1.0 - cfg.unattended_gain) * feature_process(
                rng, t_len, cfg.n_feature_dims, cfg.fs_hz, cfg.feature_cutoff_hz)
        else:
            s_unatt = feature_process(rng, t_len, cfg.n_feature_dims, cfg.fs_hz,
                                      cfg.feature_cutoff_hz)

    fs = cfg.fs_hz
    return SynthTrial(trial_id=trial_id, subject_id=subject_id,
                      eeg=TimeSeries(eeg, fs),
                      attended=TimeSeries(s_att, fs),
                      unattended=TimeSeries(s_unatt, fs))


def generate_dataset(cfg: SynthConfig) -> tuple[list[SynthTrial], GroundTruth]:
    truth = make_kernels(cfg)
    trials = [generate_trial(cfg, truth, s, t)
              for s in range(cfg.n_subjects)
              for t in range(cfg.n_trials_per_subject)]
    return trials, truth


@dataclass(frozen=True)
class OracleFit:
    weights: np.ndarray  # (n_lags, n_channels, n_features)
    intercept: np.ndarray
    rank: int
    minimum_norm: bool


def oracle_least_squares(trials: list[tuple[TimeSeries, TimeSeries]],
                         cfg: LagConfig) -> OracleFit:
    """Brute-force reference: stack explicit lagged designs (plus an intercept
    column) and solve by SVD least squares. No covariance shortcut."""
    designs, targets = [], []
    n_ch = trials[0][0].n_channels
    for eeg, target in trials:
        if eeg.n_samples != target.n_samples:
            raise ValidationError(
                f"EEG rows {eeg.n_samples} != target rows {target.n_samples}")
        if eeg.n_channels != n_ch:
            raise ValidationError("trials disagree on channel count")
        designs.append(build_lagged_design(eeg, cfg))
        targets.append(target.data.astype(np.float64))
    x = np.concatenate(designs, axis=0)
    x = np.concatenate([x, np.ones((x.shape[0], 1))], axis=1)
    y = np.concatenate(targets, axis=0)
    w, _, rank, _ = np.linalg.lstsq(x, y, rcond=None)
    minimum_norm = rank < x.shape[1]
    if minimum_norm:
        warnings.warn(f"rank-deficient system (rank {rank} < {x.shape[1]}); "
                      "returning the minimum-norm solution")
    n_features = y.shape[1]
    return OracleFit(weights=w[:-1].reshape(cfg.n_lags, n_ch, n_features),
                     intercept=w[-1], rank=int(rank), minimum_norm=minimum_norm)


def write_dataset(cfg: SynthConfig, out_dir: str | Path) -> Path:
    """Materialize manifest + matrices + truth/; consumable by the training CLI."""
    out_dir = Path(out_dir)
    (out_dir / "eeg").mkdir(parents=True, exist_ok=True)
    (out_dir / "feat").mkdir(exist_ok=True)
    (out_dir / "truth").mkdir(exist_ok=True)
    trials, truth = generate_dataset(cfg)

    entries = []
    for tr in trials:
        eeg_rel = f"eeg/{tr.trial_id}.aadm"
        att_rel = f"feat/{tr.trial_id}.att.aadm"
        unatt_rel = f"feat/{tr.trial_id}.unatt.aadm"
        matio.write_matrix_atomic(tr.eeg.data, out_dir / eeg_rel)
        matio.write_matrix_atomic(tr.attended.data, out_dir / att_rel)
        matio.write_matrix_atomic(tr.unattended.data, out_dir / unatt_rel)
        entries.append({
            "trial_id": tr.trial_id, "subject_id": tr.subject_id,
            "eeg": eeg_rel, "attended_source": att_rel, "unattended_source": unatt_rel,
        })

    n_lags = cfg.lag.n_lags
    matio.write_matrix_atomic(truth.h_attended.reshape(n_lags, -1),
                              out_dir / "truth" / "h_attended.aadm")
    matio.write_matrix_atomic(truth.h_unattended.reshape(n_lags, -1),
                              out_dir / "truth" / "h_unattended.aadm")
    cfg_dict = asdict(cfg)
    cfg_dict["lag"] = {"t_min_s": cfg.lag.t_min_s, "t_max_s": cfg.lag.t_max_s,
                       "fs_hz": cfg.lag.fs_hz}
    with open(out_dir / "truth" / "config.json", "w", encoding="utf-8") as fh:
        json.dump(cfg_dict, fh, indent=2, sort_keys=True)
        fh.write("\n")

    manifest_path = out_dir / "manifest.json"
    save_manifest({
        "dataset_id": f"synth_seed{cfg.seed}",
        "eeg_channel_count": cfg.n_eeg_channels,
        "line_noise_hz": 50,
        "language": "synthetic",
        "eeg_sample_rate_hz": cfg.fs_hz,
        "trials": entries,
    }, manifest_path)
    return manifest_path
