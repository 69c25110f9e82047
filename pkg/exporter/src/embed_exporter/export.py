"""Export job: run one checkpoint over a directory of trial audio and emit
`{stem}.{model}.layer{k}.aadm` files plus the bundle metadata."""

from __future__ import annotations

import json
import logging
import os
import wave as wavmod
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .backends import load_backend
from .matwrite import write_matrix
from .registry import HIDDEN_SIZE, MODEL_SPECS, ModelSpec

log = logging.getLogger(__name__)

AUDIO_RATE = 16000


class ExportError(Exception):
    pass


@dataclass
class ExportJob:
    model_id: str
    checkpoint: str
    audio_files: list[Path]
    out_dir: Path

    def spec(self) -> ModelSpec:
        if self.model_id not in MODEL_SPECS:
            raise ExportError(
                f"unknown model {self.model_id!r}; expected one of "
                f"{sorted(MODEL_SPECS)}")
        return MODEL_SPECS[self.model_id]


def read_wav_mono16k(path: Path) -> np.ndarray:
    """PCM WAV -> float32 in [-1, 1]; must be mono at 16 kHz."""
    with wavmod.open(str(path), "rb") as fh:
        if fh.getnchannels() != 1:
            raise ExportError(f"{path}: expected mono audio, got "
                              f"{fh.getnchannels()} channels")
        if fh.getframerate() != AUDIO_RATE:
            raise ExportError(f"{path}: expected {AUDIO_RATE} Hz audio, got "
                              f"{fh.getframerate()} Hz (resample upstream)")
        if fh.getsampwidth() != 2:
            raise ExportError(f"{path}: expected 16-bit PCM")
        raw = fh.readframes(fh.getnframes())
    return np.frombuffer(raw, dtype="<i2").astype(np.float32) / 32768.0


def export_embeddings(job: ExportJob) -> list[Path]:
    """Run the checkpoint over every audio file; returns the paths written."""
    spec = job.spec()
    run = load_backend(job.checkpoint)
    job.out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    for audio_path in job.audio_files:
        wave = read_wav_mono16k(audio_path)
        states = run(wave)  # (layers, frames, hidden)
        layers, frames, hidden = states.shape
        if hidden != HIDDEN_SIZE:
            raise ExportError(
                f"{job.checkpoint}: hidden size {hidden} != {HIDDEN_SIZE}; "
                "wrong checkpoint for this pipeline")
        if layers != spec.layer_count:
            raise ExportError(
                f"{job.checkpoint}: {layers} hidden states but model "
                f"{spec.model_id!r} must expose {spec.layer_count}")
        expected_frames = len(wave) / AUDIO_RATE * 1000.0 / spec.stride_ms
        if abs(frames - expected_frames) > max(1.0, 0.02 * expected_frames):
            raise ExportError(
                f"{audio_path.name}: {frames} frames, expected about "
                f"{expected_frames:.0f} at a {spec.stride_ms} ms stride")
        if not np.isfinite(states).all():
            raise ExportError(f"{audio_path.name}: non-finite hidden states")
        stem = audio_path.stem
        for k in range(layers):
            out_path = job.out_dir / f"{stem}.{spec.model_id}.layer{k}.aadm"
            write_matrix(states[k], out_path)
            written.append(out_path)
        log.info("export audio=%s frames=%d layers=%d", stem, frames, layers)

    meta = {
        "model_id": spec.model_id,
        "stride_ms": spec.stride_ms,
        "layer_count": spec.layer_count,
        "hidden_size": HIDDEN_SIZE,
        "checkpoint": str(job.checkpoint),
    }
    meta_path = job.out_dir / f"{spec.model_id}.meta.json"
    tmp = meta_path.with_name(meta_path.name + ".tmp")
    tmp.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n",
                   encoding="utf-8")
    os.replace(tmp, meta_path)
    written.append(meta_path)
    return written
