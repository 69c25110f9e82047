import wave as wavmod
from pathlib import Path

import numpy as np
import pytest
import torch


def write_wav(path: Path, samples: np.ndarray, rate: int = 16000,
              channels: int = 1) -> Path:
    pcm = np.clip(samples, -1.0, 1.0)
    pcm = (pcm * 32767).astype("<i2")
    with wavmod.open(str(path), "wb") as fh:
        fh.setnchannels(channels)
        fh.setsampwidth(2)
        fh.setframerate(rate)
        fh.writeframes(pcm.tobytes())
    return path


@pytest.fixture(scope="session")
def audio_dir(tmp_path_factory):
    rng = np.random.default_rng(0)
    d = tmp_path_factory.mktemp("audio")
    for name in ("story1a", "story1b", "story2a", "story2b", "story3a", "story3b"):
        write_wav(d / f"{name}.wav", 0.3 * rng.standard_normal(32000))  # 2 s
    write_wav(d / "silence.wav", np.zeros(32000))
    return d


def build_quantized_checkpoint(path: Path, hidden_size: int = 768,
                               num_layers: int = 12) -> Path:
    from transformers import Wav2Vec2Config, Wav2Vec2Model
    cfg = Wav2Vec2Config(hidden_size=hidden_size, num_hidden_layers=num_layers,
                         num_attention_heads=4, intermediate_size=256,
                         conv_dim=(64,) * 7)
    torch.manual_seed(0)
    model = Wav2Vec2Model(cfg)
    model.eval()
    model.save_pretrained(path)
    return path


@pytest.fixture(scope="session")
def quantized_checkpoint(tmp_path_factory):
    return build_quantized_checkpoint(tmp_path_factory.mktemp("ckpt") / "w2v2_tiny")


class TinyReconstructionModel(torch.nn.Module):
    """Stand-in for the filterbank-reconstruction family: 10 ms stride,
    4 exposed hidden states of 768 dims, scriptable on variable-length input."""

    def __init__(self, hidden: int = 768, blocks: int = 3):
        super().__init__()
        self.window = 400
        self.stride = 160  # 10 ms at 16 kHz
        self.proj = torch.nn.Linear(self.window, hidden)
        self.blocks = torch.nn.ModuleList([
            torch.nn.Sequential(torch.nn.Linear(hidden, hidden), torch.nn.GELU())
            for _ in range(blocks)])

    def forward(self, wave: torch.Tensor) -> torch.Tensor:
        pad = self.window // 2
        x = torch.nn.functional.pad(wave, (pad, pad))
        frames = x.unfold(0, self.window, self.stride)
        h = self.proj(frames)
        outs = [h]
        for blk in self.blocks:
            h = h + blk(h)
            outs.append(h)
        return torch.stack(outs)


@pytest.fixture(scope="session")
def reconstruction_checkpoint(tmp_path_factory):
    torch.manual_seed(1)
    module = torch.jit.script(TinyReconstructionModel())
    path = tmp_path_factory.mktemp("ckpt") / "recon_tiny.pt"
    module.save(str(path))
    return path
