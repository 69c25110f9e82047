"""Supported upstream models and their frame contracts.

Two families: reconstruction-style models (masked filterbank prediction)
run at a 10 ms stride with 4 exposed hidden states; quantization-style
models (masked discrete-unit prediction) at 20 ms with 13. Every model
maps to 768-dimensional frames.
"""

from dataclasses import dataclass

HIDDEN_SIZE = 768


@dataclass(frozen=True)
class ModelSpec:
    model_id: str
    family: str  # "reconstruction" | "quantized"
    stride_ms: int
    layer_count: int


MODEL_SPECS = {
    "albert": ModelSpec("albert", "reconstruction", 10, 4),
    "mockingjay": ModelSpec("mockingjay", "reconstruction", 10, 4),
    "tera": ModelSpec("tera", "reconstruction", 10, 4),
    "hubert": ModelSpec("hubert", "quantized", 20, 13),
    "wav2vec2": ModelSpec("wav2vec2", "quantized", 20, 13),
    "wavlm": ModelSpec("wavlm", "quantized", 20, 13),
}
