"""Embedding exporter: runs pretrained self-supervised speech checkpoints
over trial audio and dumps per-layer hidden states as AADM matrix files
for the decoding pipeline."""

from .export import ExportError, ExportJob, export_embeddings
from .registry import MODEL_SPECS

__version__ = "0.1.0"
