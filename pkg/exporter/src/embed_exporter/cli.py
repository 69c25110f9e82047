"""Command line: embed-export --model <id> --checkpoint <ref>
--audio-dir <path> --out <path>"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .export import ExportError, ExportJob, export_embeddings
from .registry import MODEL_SPECS


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = argparse.ArgumentParser(
        prog="embed-export",
        description="Dump per-layer hidden states of a speech model to AADM files")
    parser.add_argument("--model", required=True, choices=sorted(MODEL_SPECS))
    parser.add_argument("--checkpoint", required=True,
                        help="transformers model directory/id or TorchScript file")
    parser.add_argument("--audio-dir", required=True,
                        help="directory of 16 kHz mono WAV files")
    parser.add_argument("--out", required=True, help="output bundle directory")
    args = parser.parse_args(argv)

    audio_files = sorted(Path(args.audio_dir).glob("*.wav"))
    if not audio_files:
        print(f"no .wav files under {args.audio_dir}", file=sys.stderr)
        return 3
    job = ExportJob(model_id=args.model, checkpoint=args.checkpoint,
                    audio_files=audio_files, out_dir=Path(args.out))
    try:
        written = export_embeddings(job)
    except ExportError as exc:
        print(f"export failed: {exc}", file=sys.stderr)
        return 3
    print(f"wrote {len(written)} files to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
