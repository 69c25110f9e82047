"""Checkpoint loading and inference.

Two checkpoint forms are supported:

* a transformers model directory (or hub id) -- covers the quantized
  family (wav2vec2 / hubert / wavlm style encoders) via AutoModel with
  output_hidden_states;
* a TorchScript file (.pt/.pts) whose module maps a 1-D float waveform to
  a stacked (layer_count, frames, hidden) tensor -- covers upstreams that
  have no transformers class, e.g. the filterbank-reconstruction family.

Inference always runs in eval mode under no_grad; without a GPU the
exporter falls back to CPU with a warning.
"""

from __future__ import annotations

import warnings
from pathlib import Path
from typing import Callable

import numpy as np
import torch

InferenceFn = Callable[[np.ndarray], np.ndarray]  # wave -> (layers, frames, 768)


def pick_device() -> torch.device:
    if torch.cuda.is_available():
        return torch.device("cuda")
    warnings.warn("no GPU available; running inference on CPU")
    return torch.device("cpu")


def _is_torchscript(ref: str | Path) -> bool:
    return Path(ref).suffix in (".pt", ".pts", ".torchscript")


def load_backend(checkpoint: str | Path, device: torch.device | None = None) -> InferenceFn:
    device = device or pick_device()
    if _is_torchscript(checkpoint):
        module = torch.jit.load(str(checkpoint), map_location=device)
        module.eval()

        def run_scripted(wave: np.ndarray) -> np.ndarray:
            with torch.no_grad():
                out = module(torch.from_numpy(wave.astype(np.float32)).to(device))
            if out.dim() != 3:
                raise ValueError(
                    f"TorchScript checkpoint returned shape {tuple(out.shape)}, "
                    "expected (layers, frames, hidden)")
            return out.cpu().numpy()

        return run_scripted

    from transformers import AutoModel

    model = AutoModel.from_pretrained(str(checkpoint))
    model.eval()
    model.to(device)

    def run_transformers(wave: np.ndarray) -> np.ndarray:
        batch = torch.from_numpy(wave.astype(np.float32))[None].to(device)
        with torch.no_grad():
            out = model(batch, output_hidden_states=True)
        return torch.stack([h[0] for h in out.hidden_states]).cpu().numpy()

    return run_transformers
