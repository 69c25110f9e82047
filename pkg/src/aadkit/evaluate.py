"""Attended/unattended decision rules, windowed accuracy, report rendering.

A trial is tiled with non-overlapping windows from t=0 (final partial window
discarded). Within each window both candidate streams are correlated against
the decoder's reconstruction; the window is correct when the decoder's own
stream wins (ties count for the decoder's mode).
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import binom

from .core import TimeSeries
from .decoder import Decoder, pearson_columns, reconstruct
from .errors import ValidationError

log = logging.getLogger(__name__)

DEFAULT_WINDOW_SIZES_S = (1.0, 2.0, 5.0, 10.0, 20.0, 30.0, 60.0)
MODES = ("attended", "unattended")


@dataclass
class CorrCounters:
    zero_variance_dims: int = 0


def window_correlation(predicted: TimeSeries, candidate: TimeSeries,
                       window: tuple[int, int],
                       counters: CorrCounters | None = None) -> float:
    """Mean over feature dimensions of the per-dimension Pearson correlation
    inside [start, stop). Zero-variance dimensions contribute 0."""
    if predicted.n_channels != candidate.n_channels:
        raise ValidationError("predicted and candidate dimensionality differ")
    if predicted.sample_rate_hz != candidate.sample_rate_hz:
        raise ValidationError("predicted and candidate sample rates differ")
    start, stop = window
    n = min(predicted.n_samples, candidate.n_samples)
    if not (0 <= start < stop <= n):
        raise ValidationError(f"window [{start}, {stop}) out of range for {n} samples")
    if stop - start < 4:
        raise ValidationError(f"window of {stop - start} samples is below the 4-sample minimum")
    a = predicted.data[start:stop]
    b = candidate.data[start:stop]
    if counters is not None:
        dead = int(np.sum((a.std(axis=0) == 0) | (b.std(axis=0) == 0)))
        if dead:
            counters.zero_variance_dims += dead
            log.warning("window [%d,%d): %d zero-variance dimension(s) scored as 0",
                        start, stop, dead)
    return float(np.mean(pearson_columns(a, b)))


def decide_window(corr_att: float, corr_unatt: float, mode: str) -> bool:
    """Attended mode: correct iff corr_att >= corr_unatt; unattended mirrors it."""
    if not (np.isfinite(corr_att) and np.isfinite(corr_unatt)):
        raise ValidationError("correlations must be finite")
    if mode == "attended":
        return corr_att >= corr_unatt
    if mode == "unattended":
        return corr_unatt >= corr_att
    raise ValidationError(f"unknown mode {mode!r}")


@dataclass(frozen=True)
class WindowDecision:
    trial_id: str
    window_index: int
    window_size_s: float
    corr_attended: float
    corr_unattended: float
    decision: str  # attended_chosen / unattended_chosen
    correct: bool


@dataclass(frozen=True)
class ReportRow:
    dataset: str
    subject: str
    feature: str
    layer_mode: str
    decoder_mode: str
    window_s: float
    accuracy: float
    std: float
    n_windows: int
    n_ties: int

    def __post_init__(self):
        if not (0.0 <= self.accuracy <= 1.0):
            raise ValidationError(f"accuracy {self.accuracy} outside [0, 1]")
        if self.n_windows <= 0:
            raise ValidationError("report rows need at least one window")


@dataclass
class EvaluationReport:
    rows: list[ReportRow] = field(default_factory=list)

    def extend(self, rows: list[ReportRow]) -> None:
        self.rows.extend(rows)

    def sorted_rows(self) -> list[ReportRow]:
        return sorted(self.rows, key=lambda r: (r.dataset, r.subject, r.feature,
                                                r.decoder_mode, r.window_s))


@dataclass(frozen=True)
class TrialData:
    """One test trial ready for scoring: EEG plus both candidate streams."""

    trial_id: str
    eeg: TimeSeries
    attended: TimeSeries
    unattended: TimeSeries


def tile_windows(n_samples: int, window_samples: int) -> list[tuple[int, int]]:
    """Non-overlapping windows from t=0; the final partial window is dropped."""
    n_windows = n_samples // window_samples
    return [(i * window_samples, (i + 1) * window_samples) for i in range(n_windows)]


def score_trial_windows(reconstruction: TimeSeries, trial: TrialData,
                        window_size_s: float, mode: str,
                        counters: CorrCounters | None = None) -> list[WindowDecision]:
    fs = reconstruction.sample_rate_hz
    w = int(round(window_size_s * fs))
    n = min(reconstruction.n_samples, trial.attended.n_samples, trial.unattended.n_samples)
    decisions = []
    for idx, (start, stop) in enumerate(tile_windows(n, w)):
        c_att = window_correlation(reconstruction, trial.attended, (start, stop), counters)
        c_unatt = window_correlation(reconstruction, trial.unattended, (start, stop), counters)
        chosen = "attended_chosen" if c_att >= c_unatt else "unattended_chosen"
        decisions.append(WindowDecision(
            trial_id=trial.trial_id, window_index=idx, window_size_s=window_size_s,
            corr_attended=c_att, corr_unattended=c_unatt, decision=chosen,
            correct=decide_window(c_att, c_unatt, mode)))
    return decisions


def evaluate_subject(decoder_att: Decoder, decoder_unatt: Decoder,
                     test_trials: list[TrialData],
                     window_sizes_s: list[float] = DEFAULT_WINDOW_SIZES_S,
                     dataset: str = "", subject: str = "",
                     feature: str = "", layer_mode: str = "") -> list[ReportRow]:
    """Accuracy per (mode, window size) over all test windows of one subject.

    std is taken across per-trial accuracies; window sizes longer than a trial
    skip that (size, trial) pair with a warning.
    """
    if not test_trials:
        raise ValidationError("no test trials to evaluate")
    rows = []
    recon = {
        "attended": {t.trial_id: reconstruct(decoder_att, t.eeg) for t in test_trials},
        "unattended": {t.trial_id: reconstruct(decoder_unatt, t.eeg) for t in test_trials},
    }
    counters = CorrCounters()
    for mode in MODES:
        for w_s in window_sizes_s:
            per_trial_acc = []
            n_correct = n_total = n_ties = 0
            for trial in test_trials:
                fs = trial.eeg.sample_rate_hz
                if int(round(w_s * fs)) > trial.eeg.n_samples:
                    log.warning("window %.1f s exceeds trial %s (%.1f s), skipped",
                                w_s, trial.trial_id, trial.eeg.duration_s)
                    continue
                decisions = score_trial_windows(recon[mode][trial.trial_id], trial,
                                                w_s, mode, counters)
                if not decisions:
                    continue
                correct = sum(d.correct for d in decisions)
                n_ties += sum(d.corr_attended == d.corr_unattended for d in decisions)
                n_correct += correct
                n_total += len(decisions)
                per_trial_acc.append(correct / len(decisions))
            if n_total == 0:
                continue
            rows.append(ReportRow(
                dataset=dataset, subject=subject, feature=feature,
                layer_mode=layer_mode, decoder_mode=mode, window_s=float(w_s),
                accuracy=n_correct / n_total,
                std=float(np.std(per_trial_acc, ddof=1)) if len(per_trial_acc) > 1 else 0.0,
                n_windows=n_total, n_ties=n_ties))
    return rows


def chance_level(n_windows: int, alpha: float = 0.05) -> float:
    """Smallest accuracy whose one-sided binomial tail (p=0.5) is below alpha."""
    if n_windows < 1:
        raise ValidationError("need at least one window")
    for k in range(n_windows + 1):
        if binom.sf(k - 1, n_windows, 0.5) < alpha:
            return k / n_windows
    return 1.0


# ---------------------------------------------------------------------------
# rendering

CSV_HEADER = ["dataset", "subject", "feature", "layer_mode", "decoder_mode",
              "window_s", "accuracy", "std", "n_windows", "n_ties"]


def report_to_csv(report: EvaluationReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in report.sorted_rows():
        writer.writerow([r.dataset, r.subject, r.feature, r.layer_mode, r.decoder_mode,
                         f"{r.window_s:g}", f"{r.accuracy:.6f}", f"{r.std:.6f}",
                         r.n_windows, r.n_ties])
    return buf.getvalue()


def _aggregate_over_subjects(report: EvaluationReport, window_s: float
                             ) -> dict[tuple[str, str, str], tuple[float, float]]:
    """(feature, dataset, mode) -> (mean over subjects, std over subjects)."""
    cells: dict[tuple[str, str, str], list[float]] = {}
    for r in report.rows:
        if r.window_s != window_s:
            continue
        cells.setdefault((r.feature, r.dataset, r.decoder_mode), []).append(r.accuracy)
    out = {}
    for key, accs in cells.items():
        arr = np.asarray(accs)
        out[key] = (float(arr.mean()),
                    float(arr.std(ddof=1)) if len(arr) > 1 else 0.0)
    return out


def render_table_text(report: EvaluationReport) -> str:
    """Plain-text accuracy table: feature rows, attended/unattended column
    groups, one dataset column per group plus the average, cells mean +/- std
    across subjects. One table per window size."""
    if not report.rows:
        raise ValidationError("empty report")
    datasets = sorted({r.dataset for r in report.rows})
    features = sorted({r.feature for r in report.rows})
    window_sizes = sorted({r.window_s for r in report.rows})
    cols = datasets + ["Avg"]
    cell_w = max(13, max(len(d) for d in cols) + 2)
    feat_w = max(12, max(len(f) for f in features) + 2)

    lines = []
    for w_s in window_sizes:
        agg = _aggregate_over_subjects(report, w_s)
        lines.append(f"Window = {w_s:g} s")
        group_w = cell_w * len(cols)
        lines.append(" " * feat_w + "| " + "Attended Decoder".center(group_w) +
                     " | " + "Unattended Decoder".center(group_w))
        header = "Feature".ljust(feat_w) + "| "
        header += "".join(c.center(cell_w) for c in cols) + " | "
        header += "".join(c.center(cell_w) for c in cols)
        lines.append(header)
        lines.append("-" * len(header))
        for feat in features:
            row = feat.ljust(feat_w) + "| "
            for mode in MODES:
                accs = []
                for ds in datasets:
                    cell = agg.get((feat, ds, mode))
                    if cell is None:
                        row += "-".center(cell_w)
                    else:
                        accs.append(cell)
                        row += f"{cell[0]:.2f} ± {cell[1]:.2f}".center(cell_w)
                if accs:
                    avg = float(np.mean([a for a, _ in accs]))
                    std = float(np.mean([s for _, s in accs]))
                    row += f"{avg:.2f} ± {std:.2f}".center(cell_w)
                else:
                    row += "-".center(cell_w)
                if mode == "attended":
                    row += " | "
            lines.append(row)
        lines.append("")
    return "\n".join(lines)


def accuracy_curve_data(report: EvaluationReport) -> dict[str, str]:
    """Per (dataset, feature, mode): accuracy vs window size, averaged over
    subjects. Returns {file name: two-column text}."""
    series: dict[tuple[str, str, str], dict[float, list[float]]] = {}
    for r in report.rows:
        key = (r.dataset, r.feature, r.decoder_mode)
        series.setdefault(key, {}).setdefault(r.window_s, []).append(r.accuracy)
    out = {}
    for (ds, feat, mode), curve in sorted(series.items()):
        lines = [f"{w:g} {np.mean(a):.6f}" for w, a in sorted(curve.items())]
        out[f"accuracy_vs_window.{ds}.{feat}.{mode}.dat"] = "\n".join(lines) + "\n"
    return out


def weight_energy_data(profile: np.ndarray, fs_hz: float) -> str:
    """Two-column (delay_ms, energy) text for one decoder's lag profile."""
    delays = np.arange(len(profile)) * 1000.0 / fs_hz
    return "\n".join(f"{d:g} {e:.8f}" for d, e in zip(delays, profile)) + "\n"


def render_report(report: EvaluationReport, out_dir: str | Path,
                  energy_profiles: dict[str, tuple[np.ndarray, float]] | None = None
                  ) -> list[Path]:
    """Write CSV, text table, and plot-data files; returns the paths written."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    csv_path = out_dir / "report.csv"
    csv_path.write_text(report_to_csv(report), encoding="utf-8")
    written.append(csv_path)

    table_path = out_dir / "report.txt"
    table_path.write_text(render_table_text(report), encoding="utf-8")
    written.append(table_path)

    plot_dir = out_dir / "plotdata"
    plot_dir.mkdir(exist_ok=True)
    for name, text in accuracy_curve_data(report).items():
        p = plot_dir / name
        p.write_text(text, encoding="utf-8")
        written.append(p)
    for key, (profile, fs_hz) in (energy_profiles or {}).items():
        p = plot_dir / f"weight_energy.{key}.dat"
        p.write_text(weight_energy_data(profile, fs_hz), encoding="utf-8")
        written.append(p)
    return written
