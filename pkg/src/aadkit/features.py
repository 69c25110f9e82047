"""Stimulus feature extraction: gammatone envelope, mel spectrogram, and
PCA-reduced deep embedding assembly. Everything lands at 64 Hz.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import dsp, matio
from .core import EMBEDDING_DIM, EMBEDDING_MODELS, TimeSeries
from .errors import (ConfigurationError, DegenerateRankError, ResolutionError,
                     ValidationError)

AUDIO_RATE_HZ = 16000.0
FEATURE_RATE_HZ = 64.0
ENVELOPE_POWER = 0.6
N_GAMMATONE = 28
N_MELS = 20
MEL_FMAX_HZ = 8000.0
STFT_WINDOW_S = 0.025
PCA_COMPONENTS = 20


@lru_cache(maxsize=4)
def _default_bank(sample_rate_hz: float) -> dsp.GammatoneBank:
    return dsp.design_gammatone_bank(sample_rate_hz, n_filters=N_GAMMATONE,
                                     f_low_hz=50.0, f_high_hz=5000.0)


def extract_envelope(audio: TimeSeries, power: float = ENVELOPE_POWER,
                     target_hz: float = FEATURE_RATE_HZ) -> TimeSeries:
    """Auditory envelope: mean over 28 gammatone bands of |.|^power,
    resampled to target_hz. Normalization happens upstream with train stats."""
    if audio.sample_rate_hz != AUDIO_RATE_HZ:
        raise ConfigurationError(
            f"envelope expects {AUDIO_RATE_HZ:.0f} Hz audio, got {audio.sample_rate_hz}")
    bands = gammatone_bands(audio)
    env = np.abs(bands.data) ** power
    env = env.mean(axis=1, keepdims=True)
    out = dsp.resample(TimeSeries(env, audio.sample_rate_hz), target_hz)
    # the resampling filter can ring slightly negative; the envelope is a magnitude
    return out.with_data(np.maximum(out.data, 0.0))


def gammatone_bands(audio: TimeSeries) -> TimeSeries:
    return dsp.gammatone_analyze(audio, _default_bank(audio.sample_rate_hz))


def hz_to_mel(f_hz):
    return 2595.0 * np.log10(1.0 + np.asarray(f_hz) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m) / 2595.0) - 1.0)


def mel_band_edges(n_mels: int = N_MELS, fmax_hz: float = MEL_FMAX_HZ) -> np.ndarray:
    """n_mels+2 edge frequencies, equally spaced on the mel scale from 0."""
    return mel_to_hz(np.linspace(0.0, hz_to_mel(fmax_hz), n_mels + 2))


def _mel_filterbank(n_fft: int, sample_rate_hz: float, n_mels: int,
                    fmax_hz: float) -> np.ndarray:
    edges = mel_band_edges(n_mels, fmax_hz)
    freqs = np.fft.rfftfreq(n_fft, d=1.0 / sample_rate_hz)
    weights = np.zeros((n_mels, len(freqs)))
    for k in range(n_mels):
        lo, mid, hi = edges[k], edges[k + 1], edges[k + 2]
        up = (freqs - lo) / (mid - lo)
        down = (hi - freqs) / (hi - mid)
        weights[k] = np.maximum(0.0, np.minimum(up, down))
    return weights


def extract_melspec(audio: TimeSeries, n_mels: int = N_MELS,
                    target_hz: float = FEATURE_RATE_HZ) -> TimeSeries:
    """20-bin mel spectrogram: 25 ms window, hop = one frame per 1/64 s,
    power -> mel -> log(1+P). Frames are centered (reflect padding)."""
    if audio.sample_rate_hz != AUDIO_RATE_HZ:
        raise ConfigurationError(
            f"melspec expects {AUDIO_RATE_HZ:.0f} Hz audio, got {audio.sample_rate_hz}")
    if audio.n_channels != 1:
        raise ConfigurationError(f"expected mono audio, got {audio.n_channels} channels")
    fs = audio.sample_rate_hz
    win = int(round(STFT_WINDOW_S * fs))  # 400 samples
    hop_f = fs / target_hz
    if abs(hop_f - round(hop_f)) > 1e-9:
        raise ConfigurationError(f"hop {hop_f} samples is not integral")
    hop = int(round(hop_f))  # 250 samples -> native 64 Hz frame rate
    x = audio.data[:, 0].astype(np.float64)
    if len(x) < win:
        raise ValidationError(f"audio shorter than one {win}-sample window")
    n_frames = dsp.output_length(len(x), fs, target_hz)
    pad_left = win // 2
    pad_right = max(0, (n_frames - 1) * hop + win - pad_left - len(x))
    xp = np.pad(x, (pad_left, pad_right), mode="reflect")
    window = np.hanning(win + 1)[:win]
    frames = np.lib.stride_tricks.sliding_window_view(xp, win)[::hop][:n_frames]
    spec = np.abs(np.fft.rfft(frames * window, n=win, axis=1)) ** 2
    mel = spec @ _mel_filterbank(win, fs, n_mels, MEL_FMAX_HZ).T
    return TimeSeries(np.log1p(mel), target_hz)


@dataclass(frozen=True)
class PcaModel:
    """Orthonormal 20-component reduction of a 768-dim embedding layer."""

    mean: np.ndarray  # (dim,)
    components: np.ndarray  # (n_components, dim), rows orthonormal
    explained_variance: np.ndarray  # (n_components,), non-increasing

    def __post_init__(self):
        gram = self.components @ self.components.T
        if not np.allclose(gram, np.eye(len(self.components)), atol=1e-5):
            raise ValidationError("PCA components are not orthonormal")
        ev = self.explained_variance
        # tolerance covers float32 round-tripping of near-tied variances
        if np.any(np.diff(ev) > 1e-5 * max(ev[0], 1.0)):
            raise ValidationError("explained variance must be non-increasing")

    @property
    def n_components(self) -> int:
        return self.components.shape[0]

    def save(self, stem: str | Path) -> None:
        stem = str(stem)
        matio.write_matrix_atomic(self.mean[None, :], stem + ".mean.aadm")
        matio.write_matrix_atomic(self.components, stem + ".components.aadm")
        matio.write_matrix_atomic(self.explained_variance[None, :], stem + ".variance.aadm")

    @classmethod
    def load(cls, stem: str | Path) -> "PcaModel":
        stem = str(stem)
        return cls(
            mean=matio.read_matrix(stem + ".mean.aadm")[0].astype(np.float64),
            components=matio.read_matrix(stem + ".components.aadm").astype(np.float64),
            explained_variance=matio.read_matrix(stem + ".variance.aadm")[0].astype(np.float64),
        )


def pca_fit(series: list[TimeSeries], n_components: int = PCA_COMPONENTS) -> PcaModel:
    """Fit by eigendecomposition of the pooled covariance (denominator N).

    Sign convention: each component's largest-magnitude element is positive,
    so refits are bit-stable.
    """
    if not series:
        raise ValidationError("pca_fit needs at least one series")
    x = np.concatenate([s.data for s in series], axis=0).astype(np.float64)
    n, dim = x.shape
    if n < n_components + 1:
        raise ValidationError(
            f"pca_fit needs at least {n_components + 1} pooled frames, got {n}")
    mean = x.mean(axis=0)
    xc = x - mean
    cov = (xc.T @ xc) / n
    evals, evecs = np.linalg.eigh(cov)
    evals, evecs = evals[::-1], evecs[:, ::-1]
    tol = max(evals[0], 0.0) * dim * np.finfo(np.float64).eps
    rank = int(np.sum(evals > tol))
    if rank < n_components:
        raise DegenerateRankError(
            f"data rank {rank} is below the requested {n_components} components", rank)
    comps = evecs[:, :n_components].T.copy()
    for row in comps:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    return PcaModel(mean=mean, components=comps,
                    explained_variance=np.maximum(evals[:n_components], 0.0))


def pca_apply(x: TimeSeries, model: PcaModel) -> TimeSeries:
    if x.n_channels != model.mean.shape[0]:
        raise ValidationError(
            f"series has {x.n_channels} dims, PCA model expects {model.mean.shape[0]}")
    return x.with_data((x.data - model.mean) @ model.components.T)


@dataclass(frozen=True)
class EmbeddingBundle:
    """Per-layer hidden states of one SSL model over one audio stream."""

    model_id: str
    stride_ms: int
    layer_count: int
    layers: list[TimeSeries]

    def __post_init__(self):
        if self.model_id in EMBEDDING_MODELS:
            stride, n_layers = EMBEDDING_MODELS[self.model_id]
            if (self.stride_ms, self.layer_count) != (stride, n_layers):
                raise ValidationError(
                    f"model {self.model_id!r} must have stride {stride} ms and "
                    f"{n_layers} layers, got {self.stride_ms} ms / {self.layer_count}")
        if len(self.layers) != self.layer_count:
            raise ValidationError(
                f"expected {self.layer_count} layers, got {len(self.layers)}")
        rows = {s.n_samples for s in self.layers}
        if len(rows) != 1:
            raise ValidationError(f"layers disagree on row count: {sorted(rows)}")

    @property
    def native_rate_hz(self) -> float:
        return 1000.0 / self.stride_ms


def bundle_metadata_path(bundle_dir: str | Path, model_id: str) -> Path:
    return Path(bundle_dir) / f"{model_id}.meta.json"


def layer_file_name(stem: str, model_id: str, layer: int) -> str:
    return f"{stem}.{model_id}.layer{layer}.aadm"


def load_bundle(bundle_dir: str | Path, stem: str, model_id: str) -> EmbeddingBundle:
    """Read `{stem}.{model}.layer{k}.aadm` files plus the model metadata."""
    bundle_dir = Path(bundle_dir)
    meta_path = bundle_metadata_path(bundle_dir, model_id)
    if not meta_path.exists():
        raise ResolutionError(f"missing embedding metadata {meta_path}")
    with open(meta_path, "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    stride_ms = int(meta["stride_ms"])
    layer_count = int(meta["layer_count"])
    rate = 1000.0 / stride_ms
    layers = []
    for k in range(layer_count):
        path = bundle_dir / layer_file_name(stem, model_id, k)
        if not path.exists():
            raise ResolutionError(f"missing embedding layer file {path}")
        arr = matio.read_matrix(path)
        if arr.shape[1] != EMBEDDING_DIM:
            raise ValidationError(
                f"{path}: expected {EMBEDDING_DIM} dims, got {arr.shape[1]}")
        layers.append(TimeSeries(arr.astype(np.float64), rate))
    return EmbeddingBundle(model_id=model_id, stride_ms=stride_ms,
                           layer_count=layer_count, layers=layers)


def selected_layers(layer_count: int, mode: str) -> list[int]:
    """LL -> last layer; FML -> first, middle (floor(count/2)), last."""
    if mode == "LL":
        return [layer_count - 1]
    if mode == "FML":
        return [0, layer_count // 2, layer_count - 1]
    raise ConfigurationError(f"unknown layer mode {mode!r}")


def assemble_layers(bundle: EmbeddingBundle, mode: str,
                    models: dict[int, PcaModel],
                    norm_stats: dsp.NormStats | None = None,
                    target_hz: float = FEATURE_RATE_HZ) -> TimeSeries:
    """PCA each selected layer to 20 dims, concatenate, resample to 64 Hz.

    Normalization stats (fitted on the training split) are applied when given.
    """
    layers = selected_layers(bundle.layer_count, mode)
    cols = []
    for k in layers:
        if k not in models:
            raise ConfigurationError(f"no PCA model for layer {k} ({mode} selection)")
        cols.append(pca_apply(bundle.layers[k], models[k]).data)
    native = TimeSeries(np.concatenate(cols, axis=1), bundle.native_rate_hz)
    out = dsp.resample(native, target_hz)
    if norm_stats is not None:
        out = dsp.zscore_apply(out, norm_stats)
    return out
