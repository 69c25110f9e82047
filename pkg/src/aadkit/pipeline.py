"""End-to-end orchestration used by the CLI: resolves manifest resources,
runs the preprocessing / feature / training / evaluation stages, and keeps
all file-naming conventions in one place.

Output layout under the run directory:
    eeg64/{trial}.eeg64.aadm               preprocessed EEG at 64 Hz
    features/{trial}.{stream}.{key}.aadm   normalized feature series
    features/{subject}.{key}.stats.aadm    per-subject train normalization
    pca/{model}.layer{k}.*                 PCA models (embedding features)
    decoders/{subject}.{key}.{mode}.*      fitted decoders + CV tables
    report/                                csv, text table, plot data
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from . import decoder as dec
from . import dsp, features, matio
from .core import FeatureSpec, TimeSeries, trim_to_common_length
from .errors import ConfigurationError, ResolutionError, ValidationError
from .evaluate import (DEFAULT_WINDOW_SIZES_S, EvaluationReport, ReportRow,
                       TrialData, evaluate_subject, render_report)
from .manifest import DatasetManifest, TrialRef

log = logging.getLogger(__name__)

EEG_RATE_HZ = 64.0
STREAMS = ("att", "unatt")


# ---------------------------------------------------------------------------
# resource loading


def load_audio(path: str | Path, target_hz: float = features.AUDIO_RATE_HZ) -> TimeSeries:
    """Read a mono WAV file as float in [-1, 1], resampled to 16 kHz if needed."""
    path = Path(path)
    if not path.exists():
        raise ResolutionError(f"missing audio file {path}")
    rate, data = wavfile.read(path)
    data = np.asarray(data)
    if data.ndim != 1:
        raise ValidationError(f"{path}: expected mono audio, got shape {data.shape}")
    if data.dtype.kind == "i":
        data = data.astype(np.float64) / float(np.iinfo(data.dtype).max)
    else:
        data = data.astype(np.float64)
    ts = TimeSeries(data[:, None], float(rate))
    if ts.sample_rate_hz != target_hz:
        ts = dsp.resample(ts, target_hz)
    return ts


def eeg64_path(out_dir: Path, trial_id: str) -> Path:
    return out_dir / "eeg64" / f"{trial_id}.eeg64.aadm"


def load_eeg(trial: TrialRef, manifest: DatasetManifest, out_dir: Path) -> TimeSeries:
    """Preprocessed EEG if present, else the manifest source (which must
    already be at 64 Hz in that case)."""
    pre = eeg64_path(out_dir, trial.trial_id)
    if pre.exists():
        return TimeSeries(matio.read_matrix(pre).astype(np.float64), EEG_RATE_HZ)
    if manifest.eeg_sample_rate_hz != EEG_RATE_HZ:
        raise ConfigurationError(
            f"trial {trial.trial_id}: raw EEG is at {manifest.eeg_sample_rate_hz} Hz; "
            "run the preprocess stage first")
    return TimeSeries(matio.read_matrix(trial.eeg).astype(np.float64), EEG_RATE_HZ)


def feature_path(out_dir: Path, trial_id: str, stream: str, key: str) -> Path:
    return out_dir / "features" / f"{trial_id}.{stream}.{key}.aadm"


def stats_path(out_dir: Path, subject_id: str, key: str) -> Path:
    return out_dir / "features" / f"{subject_id}.{key}.stats.aadm"


def save_stats(stats: dsp.NormStats, path: Path) -> None:
    matio.write_matrix_atomic(np.stack([stats.mean, stats.std]), path)


def load_stats(path: Path) -> dsp.NormStats:
    arr = matio.read_matrix(path).astype(np.float64)
    return dsp.NormStats(mean=arr[0], std=arr[1])


def load_features(trial: TrialRef, spec: FeatureSpec, out_dir: Path,
                  stream: str) -> TimeSeries:
    """Fetch one stream's feature series for a trial.

    kind 'direct' reads the manifest source itself (already 64 Hz features);
    everything else expects the features stage to have run.
    """
    if spec.kind == "direct":
        src = trial.attended_source if stream == "att" else trial.unattended_source
        return TimeSeries(matio.read_matrix(src).astype(np.float64), EEG_RATE_HZ)
    path = feature_path(out_dir, trial.trial_id, stream, spec.key)
    if not path.exists():
        raise ResolutionError(
            f"missing feature file {path}; run the features stage for '{spec.key}'")
    return TimeSeries(matio.read_matrix(path).astype(np.float64), EEG_RATE_HZ)


def _is_stale(out_path: Path, *inputs: Path) -> bool:
    if not out_path.exists():
        return True
    out_mtime = out_path.stat().st_mtime
    return any(p.exists() and p.stat().st_mtime > out_mtime for p in inputs)


# ---------------------------------------------------------------------------
# stage: preprocess


@dataclass
class StageSummary:
    written: int = 0
    skipped: int = 0
    failed: int = 0


def run_preprocess(manifest: DatasetManifest, out_dir: str | Path,
                   filter_cfg: dsp.FilterConfig | None = None,
                   clip_artifacts: bool = True, k_mad: float = 8.0,
                   force: bool = False, jobs: int = 1) -> StageSummary:
    out_dir = Path(out_dir)
    (out_dir / "eeg64").mkdir(parents=True, exist_ok=True)
    cfg = filter_cfg or dsp.FilterConfig(notch_hz=manifest.line_noise_hz)

    def process(trial: TrialRef) -> str:
        out_path = eeg64_path(out_dir, trial.trial_id)
        if not force and not _is_stale(out_path, Path(trial.eeg)):
            return "skipped"
        try:
            raw = TimeSeries(matio.read_matrix(trial.eeg).astype(np.float64),
                             manifest.eeg_sample_rate_hz)
            result = dsp.preprocess_eeg(raw, cfg, target_hz=EEG_RATE_HZ,
                                        clip_artifacts=clip_artifacts, k_mad=k_mad)
            matio.write_matrix_atomic(result.series.data, out_path)
            log.info("preprocess trial=%s rows=%d notch_db=%.1f clip_frac=%.5f",
                     trial.trial_id, result.series.n_samples,
                     result.notch_reduction_db, result.clip_fraction)
            return "written"
        except Exception as exc:  # keep going; one bad trial should not kill the run
            log.error("preprocess trial=%s failed: %s", trial.trial_id, exc)
            return "failed"

    if jobs > 1:  # trials are independent and write to distinct paths
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(process, manifest.trials))
    else:
        outcomes = [process(t) for t in manifest.trials]
    summary = StageSummary(written=outcomes.count("written"),
                           skipped=outcomes.count("skipped"),
                           failed=outcomes.count("failed"))
    log.info("preprocess done written=%d skipped=%d failed=%d",
             summary.written, summary.skipped, summary.failed)
    return summary


# ---------------------------------------------------------------------------
# stage: features


def _extract_shallow(audio: TimeSeries, spec: FeatureSpec) -> TimeSeries:
    if spec.kind == "envelope":
        return features.extract_envelope(audio)
    if spec.kind == "melspec":
        return features.extract_melspec(audio)
    raise ConfigurationError(f"not a shallow feature: {spec.kind}")


def _audio_stem(path: Path) -> str:
    return Path(path).stem


def run_features(manifest: DatasetManifest, specs: list[FeatureSpec],
                 out_dir: str | Path, embeddings_dir: str | Path | None = None,
                 force: bool = False) -> StageSummary:
    """Extract, normalize (per subject, training trials only) and persist
    every requested feature for both streams of every trial."""
    out_dir = Path(out_dir)
    (out_dir / "features").mkdir(parents=True, exist_ok=True)
    summary = StageSummary()
    for spec in specs:
        if spec.kind == "direct":
            log.info("features spec=direct: manifest sources are used as-is, skipping")
            continue
        try:
            if spec.kind == "embedding":
                _features_embedding(manifest, spec, out_dir, embeddings_dir, summary, force)
            else:
                _features_shallow(manifest, spec, out_dir, summary, force)
        except ResolutionError as exc:
            summary.failed += 1
            log.error("features spec=%s skipped: %s (produce the bundles with "
                      "`embed-export --model %s --checkpoint <ref> --audio-dir "
                      "<dir> --out <dir>`)", spec.key, exc,
                      spec.embedding_model_id or "<id>")
    log.info("features done written=%d skipped=%d failed=%d",
             summary.written, summary.skipped, summary.failed)
    return summary


def _features_shallow(manifest: DatasetManifest, spec: FeatureSpec, out_dir: Path,
                      summary: StageSummary, force: bool) -> None:
    # audio files can be shared across trials; extract each stem once
    raw: dict[str, TimeSeries] = {}

    def extract(path: Path) -> TimeSeries:
        key = str(path)
        if key not in raw:
            raw[key] = _extract_shallow(load_audio(path), spec)
        return raw[key]

    for subject in manifest.subjects():
        trials = manifest.trials_of(subject)
        outputs = [(t, s) for t in trials for s in STREAMS]
        paths = [feature_path(out_dir, t.trial_id, s, spec.key) for t, s in outputs]
        sources = [t.attended_source if s == "att" else t.unattended_source
                   for t, s in outputs]
        if not force and not any(_is_stale(p, Path(src))
                                 for p, src in zip(paths, sources)):
            summary.skipped += len(paths)
            continue
        train_series = [extract(src) for (t, s), src in zip(outputs, sources)
                        if t.is_train()]
        stats = dsp.zscore_fit(train_series)
        save_stats(stats, stats_path(out_dir, subject, spec.key))
        for (t, s), src, path in zip(outputs, sources, paths):
            normalized = dsp.zscore_apply(extract(src), stats)
            matio.write_matrix_atomic(normalized.data, path)
            summary.written += 1


def _features_embedding(manifest: DatasetManifest, spec: FeatureSpec, out_dir: Path,
                        embeddings_dir: str | Path | None, summary: StageSummary,
                        force: bool) -> None:
    if embeddings_dir is None:
        raise ResolutionError(f"spec {spec.key}: no embeddings directory configured")
    embeddings_dir = Path(embeddings_dir)
    model_id = spec.embedding_model_id

    bundles: dict[str, features.EmbeddingBundle] = {}

    def bundle(path: Path) -> features.EmbeddingBundle:
        stem = _audio_stem(path)
        if stem not in bundles:
            bundles[stem] = features.load_bundle(embeddings_dir, stem, model_id)
        return bundles[stem]

    # PCA per layer, fitted on training-split frames only (both streams)
    first = bundle(Path(manifest.trials[0].attended_source))
    layers = features.selected_layers(first.layer_count, spec.layer_mode)
    (out_dir / "pca").mkdir(exist_ok=True)
    models: dict[int, features.PcaModel] = {}
    for k in layers:
        stem = out_dir / "pca" / f"{model_id}.layer{k}.pca"
        if not force and Path(str(stem) + ".mean.aadm").exists():
            models[k] = features.PcaModel.load(stem)
            continue
        train_frames = []
        for t in manifest.trials:
            if not t.is_train():
                continue
            for src in (t.attended_source, t.unattended_source):
                train_frames.append(bundle(Path(src)).layers[k])
        models[k] = features.pca_fit(train_frames)
        models[k].save(stem)

    for subject in manifest.subjects():
        trials = manifest.trials_of(subject)
        outputs = [(t, s) for t in trials for s in STREAMS]
        paths = [feature_path(out_dir, t.trial_id, s, spec.key) for t, s in outputs]
        if not force and all(p.exists() for p in paths):
            summary.skipped += len(paths)
            continue
        assembled: dict[tuple[str, str], TimeSeries] = {}
        for t, s in outputs:
            src = t.attended_source if s == "att" else t.unattended_source
            assembled[(t.trial_id, s)] = features.assemble_layers(
                bundle(Path(src)), spec.layer_mode, models)
        stats = dsp.zscore_fit([assembled[(t.trial_id, s)] for t, s in outputs
                                if t.is_train()])
        save_stats(stats, stats_path(out_dir, subject, spec.key))
        for (t, s), path in zip(outputs, paths):
            normalized = dsp.zscore_apply(assembled[(t.trial_id, s)], stats)
            matio.write_matrix_atomic(normalized.data, path)
            summary.written += 1


# ---------------------------------------------------------------------------
# stage: train


def decoder_stem(out_dir: Path, subject: str, key: str, mode: str) -> Path:
    return out_dir / "decoders" / f"{subject}.{key}.{mode}"


def _training_pairs(manifest: DatasetManifest, spec: FeatureSpec, out_dir: Path,
                    subject: str, mode: str,
                    eeg_stats: dsp.NormStats) -> list[tuple[TimeSeries, TimeSeries]]:
    stream = "att" if mode == "attended" else "unatt"
    pairs = []
    for t in manifest.trials_of(subject, split="train"):
        eeg = dsp.zscore_apply(load_eeg(t, manifest, out_dir), eeg_stats)
        feat = load_features(t, spec, out_dir, stream)
        eeg, feat = trim_to_common_length(eeg, feat)
        pairs.append((eeg, feat))
    return pairs


def run_train(manifest: DatasetManifest, specs: list[FeatureSpec],
              out_dir: str | Path, lambda_grid: list[float] | None = None,
              lag_cfg: dec.LagConfig | None = None, force: bool = False) -> StageSummary:
    """Fit attended and unattended decoders per (subject, feature spec)."""
    out_dir = Path(out_dir)
    (out_dir / "decoders").mkdir(parents=True, exist_ok=True)
    cfg = lag_cfg or dec.LagConfig(fs_hz=EEG_RATE_HZ)
    summary = StageSummary()
    for subject in manifest.subjects():
        train_trials = manifest.trials_of(subject, split="train")
        if len(train_trials) < 2:
            raise ValidationError(
                f"subject {subject} has {len(train_trials)} training trials; need >= 2 "
                "(or segment trials into pseudo-trials)")
        eeg_stats = dsp.zscore_fit(
            [load_eeg(t, manifest, out_dir) for t in train_trials])
        for spec in specs:
            for mode in ("attended", "unattended"):
                stem = decoder_stem(out_dir, subject, spec.key, mode)
                if not force and Path(str(stem) + ".json").exists():
                    summary.skipped += 1
                    continue
                pairs = _training_pairs(manifest, spec, out_dir, subject, mode, eeg_stats)
                total = dec.accumulate_trials(pairs, cfg)
                grid = (np.asarray(lambda_grid, dtype=np.float64)
                        if lambda_grid is not None else dec.default_lambda_grid(total))
                best_lam, records = dec.loo_cv_lambda(pairs, grid, lag_cfg=cfg)
                norm_refs = {
                    "eeg_mean": [float(v) for v in eeg_stats.mean],
                    "eeg_std": [float(v) for v in eeg_stats.std],
                    "feature_stats": str(stats_path(out_dir, subject, spec.key))
                    if spec.kind != "direct" else "",
                }
                fitted = dec.solve_ridge(total, [best_lam], norm_refs=norm_refs)[0]
                dec.save_decoder(fitted, stem)
                with open(str(stem) + ".cv.csv", "w", encoding="utf-8", newline="") as fh:
                    writer = csv.writer(fh, lineterminator="\n")
                    writer.writerow(["fold", "lambda", "score"])
                    for r in records:
                        writer.writerow([r.fold, f"{r.lam:.8g}", f"{r.score:.6f}"])
                summary.written += 1
                log.info("train subject=%s feature=%s mode=%s lambda=%.6g folds=%d",
                         subject, spec.key, mode, best_lam, len(pairs))
    log.info("train done written=%d skipped=%d", summary.written, summary.skipped)
    return summary


# ---------------------------------------------------------------------------
# stage: evaluate


def _eeg_stats_from(decoder: dec.Decoder) -> dsp.NormStats:
    refs = decoder.norm_refs
    return dsp.NormStats(mean=np.asarray(refs["eeg_mean"], dtype=np.float64),
                         std=np.asarray(refs["eeg_std"], dtype=np.float64))


def run_evaluate(manifest: DatasetManifest, specs: list[FeatureSpec],
                 out_dir: str | Path,
                 window_sizes_s: list[float] = DEFAULT_WINDOW_SIZES_S
                 ) -> EvaluationReport:
    out_dir = Path(out_dir)
    report = EvaluationReport()
    energy_profiles: dict[str, tuple[np.ndarray, float]] = {}
    for subject in manifest.subjects():
        test_trials = manifest.trials_of(subject, split="test")
        for spec in specs:
            stem_att = decoder_stem(out_dir, subject, spec.key, "attended")
            stem_unatt = decoder_stem(out_dir, subject, spec.key, "unattended")
            for stem in (stem_att, stem_unatt):
                if not Path(str(stem) + ".json").exists():
                    raise ResolutionError(f"missing decoder {stem}; run the train stage")
            d_att = dec.load_decoder(stem_att)
            d_unatt = dec.load_decoder(stem_unatt)
            eeg_stats = _eeg_stats_from(d_att)
            trials = []
            for t in test_trials:
                eeg = dsp.zscore_apply(load_eeg(t, manifest, out_dir), eeg_stats)
                att = load_features(t, spec, out_dir, "att")
                unatt = load_features(t, spec, out_dir, "unatt")
                eeg, att, unatt = trim_to_common_length(eeg, att, unatt)
                trials.append(TrialData(trial_id=t.trial_id, eeg=eeg,
                                        attended=att, unattended=unatt))
            layer_mode = spec.layer_mode or ""
            report.extend(evaluate_subject(
                d_att, d_unatt, trials, window_sizes_s,
                dataset=manifest.dataset_id, subject=subject,
                feature=spec.key, layer_mode=layer_mode))
            for mode, d in (("attended", d_att), ("unattended", d_unatt)):
                profile = dec.weight_energy_profile(d)
                energy_profiles[f"{subject}.{spec.key}.{mode}"] = (
                    profile, d.lag_config.fs_hz)
    render_report(report, out_dir / "report", energy_profiles)
    log.info("evaluate done rows=%d", len(report.rows))
    return report


def load_report_csv(path: str | Path) -> EvaluationReport:
    report = EvaluationReport()
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            report.rows.append(ReportRow(
                dataset=row["dataset"], subject=row["subject"], feature=row["feature"],
                layer_mode=row["layer_mode"], decoder_mode=row["decoder_mode"],
                window_s=float(row["window_s"]), accuracy=float(row["accuracy"]),
                std=float(row["std"]), n_windows=int(row["n_windows"]),
                n_ties=int(row["n_ties"])))
    return report
