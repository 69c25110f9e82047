"""Command-line front end.

Subcommands: synth, preprocess, features, train, evaluate, report. A JSON
config file drives a run; every config key has a matching flag override so
one artifact describes a reproducible run.

Exit codes: 0 success, 2 config error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import pipeline
from .core import FeatureSpec
from .decoder import LagConfig
from .dsp import FilterConfig
from .errors import (ConfigurationError, CorruptionError, FormatError,
                     NumericalError, ResolutionError, ValidationError)
from .evaluate import DEFAULT_WINDOW_SIZES_S, render_report
from .manifest import load_manifest
from .synth import SynthConfig, write_dataset

log = logging.getLogger("aadkit")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4


@dataclass
class RunConfig:
    manifest: str | None = None
    out_dir: str = "out"
    seed: int = 0
    jobs: int = 1
    features: list[FeatureSpec] = field(default_factory=lambda: [FeatureSpec("direct")])
    window_sizes_s: list[float] = field(default_factory=lambda: list(DEFAULT_WINDOW_SIZES_S))
    lambda_grid: list[float] | None = None
    lag: LagConfig = field(default_factory=LagConfig)
    notch_hz: int | None = None  # default: manifest line_noise_hz
    highpass_hz: float = 0.1
    lowpass_hz: float = 8.0
    artifact_clip: bool = True
    k_mad: float = 8.0
    embeddings_dir: str | None = None
    synth: dict = field(default_factory=dict)

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        cfg = cls()
        simple = ("manifest", "out_dir", "seed", "jobs", "window_sizes_s",
                  "lambda_grid", "notch_hz", "highpass_hz", "lowpass_hz",
                  "artifact_clip", "k_mad", "embeddings_dir", "synth")
        for key in simple:
            if key in raw:
                setattr(cfg, key, raw[key])
        if "features" in raw:
            cfg.features = [FeatureSpec.parse(f) if isinstance(f, str)
                            else FeatureSpec(**f) for f in raw["features"]]
        if "lag" in raw:
            cfg.lag = LagConfig(**raw["lag"])
        return cfg

    def filter_config(self, line_noise_hz: int) -> FilterConfig:
        return FilterConfig(notch_hz=self.notch_hz or line_noise_hz,
                            highpass_hz=self.highpass_hz, lowpass_hz=self.lowpass_hz)

    def synth_config(self) -> SynthConfig:
        raw = dict(self.synth)
        raw.setdefault("seed", self.seed)
        if "lag" in raw:
            raw["lag"] = LagConfig(**raw["lag"])
        return SynthConfig(**raw)


def _parse_floats(text: str) -> list[float]:
    return [float(tok) for tok in text.replace(",", " ").split()]


def _apply_overrides(cfg: RunConfig, args: argparse.Namespace) -> RunConfig:
    if getattr(args, "manifest", None):
        cfg.manifest = args.manifest
    if getattr(args, "out", None):
        cfg.out_dir = args.out
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "jobs", None) is not None:
        cfg.jobs = args.jobs
    if getattr(args, "feature", None):
        cfg.features = [FeatureSpec.parse(f) for f in args.feature]
    if getattr(args, "window_sizes", None):
        cfg.window_sizes_s = _parse_floats(args.window_sizes)
    if getattr(args, "lambda_grid", None):
        cfg.lambda_grid = sorted(_parse_floats(args.lambda_grid))
    if getattr(args, "notch_hz", None) is not None:
        cfg.notch_hz = args.notch_hz
    if getattr(args, "no_artifact_clip", False):
        cfg.artifact_clip = False
    if getattr(args, "embeddings_dir", None):
        cfg.embeddings_dir = args.embeddings_dir
    return cfg


def _load_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    return _apply_overrides(cfg, args)


def _require_manifest(cfg: RunConfig):
    if not cfg.manifest:
        raise ConfigurationError("no manifest given (config key 'manifest' or --manifest)")
    return load_manifest(cfg.manifest, split_seed=cfg.seed)


def cmd_synth(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    path = write_dataset(cfg.synth_config(), cfg.out_dir)
    log.info("synth done manifest=%s", path)
    print(path)
    return EXIT_OK


def cmd_preprocess(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    manifest = _require_manifest(cfg)
    summary = pipeline.run_preprocess(
        manifest, cfg.out_dir,
        filter_cfg=cfg.filter_config(manifest.line_noise_hz),
        clip_artifacts=cfg.artifact_clip, k_mad=cfg.k_mad, force=args.force,
        jobs=max(1, cfg.jobs))
    return EXIT_OK if summary.failed == 0 else EXIT_DATA


def cmd_features(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    manifest = _require_manifest(cfg)
    pipeline.run_features(manifest, cfg.features, cfg.out_dir,
                          embeddings_dir=cfg.embeddings_dir, force=args.force)
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    manifest = _require_manifest(cfg)
    pipeline.run_train(manifest, cfg.features, cfg.out_dir,
                       lambda_grid=cfg.lambda_grid, lag_cfg=cfg.lag, force=args.force)
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    manifest = _require_manifest(cfg)
    pipeline.run_evaluate(manifest, cfg.features, cfg.out_dir,
                          window_sizes_s=cfg.window_sizes_s)
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    csv_path = Path(cfg.out_dir) / "report" / "report.csv"
    if not csv_path.exists():
        raise ResolutionError(f"no report at {csv_path}; run the evaluate stage")
    report = pipeline.load_report_csv(csv_path)
    render_report(report, Path(cfg.out_dir) / "report")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aadkit",
        description="Auditory attention decoding pipeline (EEG stimulus reconstruction)")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--manifest", help="dataset manifest path")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="seed for splits and synthesis")
        p.add_argument("--jobs", type=int, help="parallel worker bound")
        p.add_argument("--force", action="store_true", help="rebuild up-to-date outputs")
        p.add_argument("--feature", action="append",
                       help="feature spec: envelope | melspec | direct | <model>:LL|FML")
        p.add_argument("--window-sizes", help="comma-separated window sizes in seconds")
        p.add_argument("--lambda-grid", help="comma-separated ridge lambdas")
        p.add_argument("--notch-hz", type=int, choices=(50, 60))
        p.add_argument("--no-artifact-clip", action="store_true")
        p.add_argument("--embeddings-dir", help="directory of exported embedding bundles")

    for name, fn in (("synth", cmd_synth), ("preprocess", cmd_preprocess),
                     ("features", cmd_features), ("train", cmd_train),
                     ("evaluate", cmd_evaluate), ("report", cmd_report)):
        p = sub.add_parser(name)
        add_common(p)
        p.set_defaults(func=fn)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except (FormatError, CorruptionError, ValidationError, ResolutionError) as exc:
        log.error("data error: %s", exc)
        return EXIT_DATA
    except NumericalError as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
