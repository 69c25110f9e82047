"""Core data carriers: sampled multichannel series and feature descriptors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

# Table of known self-supervised embedding models: id -> (stride_ms, layer_count).
# The reconstruction-style models run at 10 ms / 4 layers, the quantization-style
# ones at 20 ms / 13 layers (hidden state count includes the transformer input).
EMBEDDING_MODELS = {
    "albert": (10, 4),
    "mockingjay": (10, 4),
    "tera": (10, 4),
    "hubert": (20, 13),
    "wav2vec2": (20, 13),
    "wavlm": (20, 13),
}

EMBEDDING_DIM = 768


@dataclass(frozen=True)
class TimeSeries:
    """A (samples x channels) float matrix with a sample rate.

    Used for EEG (channels = electrodes) and stimulus features
    (channels = feature dimensions) alike.
    """

    data: np.ndarray
    sample_rate_hz: float

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2:
            raise ValidationError(f"time series must be 2-D, got shape {arr.shape}")
        if not (self.sample_rate_hz > 0):
            raise ValidationError(f"sample rate must be positive, got {self.sample_rate_hz}")
        object.__setattr__(self, "data", arr)

    @property
    def n_samples(self) -> int:
        return self.data.shape[0]

    @property
    def n_channels(self) -> int:
        return self.data.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.sample_rate_hz

    def with_data(self, data: np.ndarray, sample_rate_hz: float | None = None) -> "TimeSeries":
        return TimeSeries(data, self.sample_rate_hz if sample_rate_hz is None else sample_rate_hz)


FEATURE_KINDS = ("envelope", "melspec", "embedding", "direct")


@dataclass(frozen=True)
class FeatureSpec:
    """Which stimulus representation to use.

    kind "direct" means the manifest sources already are 64 Hz feature
    matrices (the synthetic generator emits those); its dimensionality is
    whatever the files carry.
    """

    kind: str
    embedding_model_id: str | None = None
    layer_mode: str | None = None  # "LL" or "FML", embeddings only

    def __post_init__(self):
        if self.kind not in FEATURE_KINDS:
            raise ValidationError(f"unknown feature kind {self.kind!r}")
        if self.kind == "embedding":
            if self.layer_mode not in ("LL", "FML"):
                raise ValidationError("embedding features need layer_mode LL or FML")
            if not self.embedding_model_id:
                raise ValidationError("embedding features need embedding_model_id")
        else:
            if self.layer_mode is not None or self.embedding_model_id is not None:
                raise ValidationError(f"{self.kind} features take no embedding fields")

    @property
    def dims(self) -> int | None:
        """Declared output dimensionality; None for kind 'direct' (file-defined)."""
        if self.kind == "envelope":
            return 1
        if self.kind == "melspec":
            return 20
        if self.kind == "embedding":
            return 20 if self.layer_mode == "LL" else 60
        return None

    @property
    def key(self) -> str:
        """Stable identifier used in file names and report rows."""
        if self.kind == "embedding":
            return f"{self.embedding_model_id}_{self.layer_mode.lower()}"
        return self.kind

    @classmethod
    def parse(cls, text: str) -> "FeatureSpec":
        """Parse 'envelope', 'melspec', 'direct' or '<model>:LL' / '<model>:FML'."""
        text = text.strip()
        if ":" in text:
            model, mode = text.split(":", 1)
            return cls(kind="embedding", embedding_model_id=model.strip(),
                       layer_mode=mode.strip().upper())
        return cls(kind=text)


def trim_to_common_length(*series: TimeSeries, max_trim: int = 1) -> tuple[TimeSeries, ...]:
    """Trim paired series to the shortest row count.

    Paired series must already agree within max_trim samples; larger
    mismatches indicate misaligned inputs and raise.
    """
    lengths = [s.n_samples for s in series]
    lo, hi = min(lengths), max(lengths)
    if hi - lo > max_trim:
        raise ValidationError(
            f"paired series lengths {lengths} differ by {hi - lo} samples (max {max_trim})")
    if hi == lo:
        return series
    return tuple(s.with_data(s.data[:lo]) for s in series)
