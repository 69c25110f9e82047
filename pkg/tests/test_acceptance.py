"""Acceptance suite: one test per release criterion, each printing a
PASS line (run with -s or -v to see them). Tolerances are fixed here and
must not be loosened.
"""

import dataclasses
import io
import json
import struct
import time

import numpy as np
import pytest
from scipy.stats import binom

from aadkit import cli, decoder as dec, features, matio, synth
from aadkit import evaluate as ev
from aadkit.core import TimeSeries
from aadkit.errors import CorruptionError, FormatError, ValidationError

CFG_LAG = dec.LagConfig()
FS = 64.0


def ok(criterion: str, detail: str):
    print(f"ACCEPTANCE PASS {criterion}: {detail}")


def fit_attended(trials, lam_rel=1e-4):
    acc = dec.accumulate_trials([(t.eeg, t.attended) for t in trials], CFG_LAG)
    lam = lam_rel * float(np.mean(np.diag(acc.xtx)))
    return dec.solve_ridge(acc, [lam])[0]


def windowed_accuracy(decoder, trials, window_s, mode="attended"):
    n_correct = n_total = 0
    for t in trials:
        pred = dec.reconstruct(decoder, t.eeg)
        td = ev.TrialData(t.trial_id, t.eeg, t.attended, t.unattended)
        decisions = ev.score_trial_windows(pred, td, window_s, mode)
        n_correct += sum(d.correct for d in decisions)
        n_total += len(decisions)
    return n_correct / n_total, n_total


def test_criterion_01_ridge_oracle_equivalence():
    start = time.perf_counter()
    cfg = synth.SynthConfig(seed=101, n_subjects=1, n_trials_per_subject=3,
                            trial_duration_s=60.0, n_eeg_channels=8,
                            n_feature_dims=2, noise_sigma=2.0, unattended_gain=0.5)
    trials, _ = synth.generate_dataset(cfg)
    pairs = [(t.eeg, t.attended) for t in trials]
    d0 = dec.solve_ridge(dec.accumulate_trials(pairs, CFG_LAG), [0.0])[0]
    oracle = synth.oracle_least_squares(pairs, CFG_LAG)
    rel = np.linalg.norm(d0.weights - oracle.weights) / np.linalg.norm(oracle.weights)
    elapsed = time.perf_counter() - start
    assert rel < 1e-6
    assert elapsed < 10.0
    ok("1 ridge-oracle equivalence",
       f"rel Frobenius err {rel:.2e} (< 1e-6), {elapsed:.2f} s (< 10 s)")


def test_criterion_02_kernel_recovery():
    cfg = synth.SynthConfig(seed=102, n_subjects=1, n_trials_per_subject=3,
                            trial_duration_s=60.0, n_eeg_channels=8,
                            n_feature_dims=2, noise_sigma=0.0, unattended_gain=0.0,
                            kernel_direction="backward")
    trials, truth = synth.generate_dataset(cfg)
    d0 = dec.solve_ridge(dec.accumulate_trials(
        [(t.eeg, t.attended) for t in trials], CFG_LAG), [0.0])[0]
    rel = (np.linalg.norm(d0.weights - truth.h_attended)
           / np.linalg.norm(truth.h_attended))
    corr_min = min(
        dec.pearson_columns(dec.reconstruct(d0, t.eeg).data, t.attended.data).min()
        for t in trials)
    assert corr_min > 0.999
    assert rel < 1e-5
    ok("2 kernel recovery",
       f"recon corr {corr_min:.6f} (> 0.999), weight err {rel:.2e} (< 1e-5)")


def test_criterion_03_high_snr_decoding():
    start = time.perf_counter()
    n_train, n_eval = 4, 50
    cfg = synth.SynthConfig(seed=103, n_subjects=1,
                            n_trials_per_subject=n_train + n_eval,
                            trial_duration_s=120.0, n_eeg_channels=8,
                            noise_sigma=28.0, unattended_gain=0.5)
    trials, _ = synth.generate_dataset(cfg)
    d = fit_attended(trials[:n_train])
    corr = np.mean([dec.pearson_columns(dec.reconstruct(d, t.eeg).data,
                                        t.attended.data)[0]
                    for t in trials[n_train:n_train + 10]])
    acc, n = windowed_accuracy(d, trials[n_train:], 60.0)
    elapsed = time.perf_counter() - start
    assert 0.4 <= corr <= 0.7  # the operating point the criterion asks for
    assert n >= 100
    assert acc >= 0.95
    assert elapsed < 120.0
    ok("3 high-SNR decoding",
       f"recon corr {corr:.2f}, accuracy {acc:.3f} (>= 0.95) over {n} windows of "
       f"60 s, {elapsed:.1f} s (< 2 min)")


def test_criterion_04_chance_floor():
    cfg = synth.SynthConfig(seed=104, n_subjects=1, n_trials_per_subject=12,
                            trial_duration_s=120.0, n_eeg_channels=8,
                            noise_sigma=1.0)
    truth = synth.make_kernels(cfg)
    truth = dataclasses.replace(truth,
                                h_attended=np.zeros_like(truth.h_attended),
                                h_unattended=np.zeros_like(truth.h_unattended))
    trials = [synth.generate_trial(cfg, truth, 0, k) for k in range(12)]
    d = fit_attended(trials[:4], lam_rel=1e-2)
    acc, n = windowed_accuracy(d, trials[4:], 2.0)
    assert n >= 400
    lo, hi = binom.interval(0.95, n, 0.5)
    assert lo / n <= acc <= hi / n
    ok("4 chance floor",
       f"accuracy {acc:.3f} within exact binomial 95% interval "
       f"[{lo / n:.3f}, {hi / n:.3f}] over {n} windows")


def test_criterion_05_window_size_trend():
    diffs = []
    for seed in range(5):
        cfg = synth.SynthConfig(seed=500 + seed, n_subjects=1,
                                n_trials_per_subject=16, trial_duration_s=120.0,
                                n_eeg_channels=8, noise_sigma=80.0,
                                unattended_gain=0.5)
        trials, _ = synth.generate_dataset(cfg)
        d = fit_attended(trials[:6])
        acc30, _ = windowed_accuracy(d, trials[6:], 30.0)
        acc2, _ = windowed_accuracy(d, trials[6:], 2.0)
        diffs.append(acc30 - acc2)
    mean_diff = float(np.mean(diffs))
    assert mean_diff >= 0.05
    ok("5 window-size trend",
       f"accuracy(30 s) - accuracy(2 s) = {mean_diff:.3f} (>= 0.05) over 5 seeds")


def test_criterion_06_loo_cv_sanity():
    hits = 0
    for seed in range(5):
        cfg = synth.SynthConfig(seed=300 + seed, n_subjects=1,
                                n_trials_per_subject=24, trial_duration_s=15.0,
                                n_eeg_channels=8, noise_sigma=30.0,
                                unattended_gain=0.5)
        trials, _ = synth.generate_dataset(cfg)
        train = [(t.eeg, t.attended) for t in trials[:4]]
        test = [(t.eeg, t.attended) for t in trials[4:]]
        acc = dec.accumulate_trials(train, CFG_LAG)
        grid = np.logspace(-4, 2, 7) * float(np.mean(np.diag(acc.xtx)))
        best, _ = dec.loo_cv_lambda(train, grid, lag_cfg=CFG_LAG)
        scores = [np.mean([dec.pearson_columns(dec.reconstruct(d, e).data,
                                               y.data)[0] for e, y in test])
                  for d in dec.solve_ridge(acc, grid)]
        cv_idx = int(np.argmin(np.abs(grid - best)))
        hits += abs(cv_idx - int(np.argmax(scores))) <= 1
    assert hits == 5
    ok("6 LOO-CV sanity", f"selected lambda within one grid step on {hits}/5 seeds")


def test_criterion_07_weight_energy_latency():
    cfg = synth.SynthConfig(seed=107, n_subjects=1, n_trials_per_subject=6,
                            trial_duration_s=120.0, n_eeg_channels=8,
                            kernel_center_lag=20, unattended_gain=0.5,
                            noise_sigma=4.0)
    trials, truth = synth.generate_dataset(cfg)
    assert int(np.argmax((truth.h_attended ** 2).sum(axis=(1, 2)))) == 20
    profile = dec.weight_energy_profile(fit_attended(trials))
    peak = int(np.argmax(profile))
    assert peak in (19, 20, 21)
    ok("7 weight-energy latency",
       f"profile argmax {peak} (about 312 ms) in {{19, 20, 21}}")


def test_criterion_08_envelope_homogeneity():
    rng = np.random.default_rng(108)
    worst = 0.0
    for _ in range(100):
        audio = TimeSeries(rng.standard_normal((4800, 1)), 16000.0)  # 0.3 s
        alpha = float(rng.uniform(0.1, 10.0))
        base = features.extract_envelope(audio).data
        scaled = features.extract_envelope(audio.with_data(alpha * audio.data)).data
        mask = base > 1e-9 * base.max()
        rel = np.abs(scaled[mask] / (alpha ** 0.6 * base[mask]) - 1.0).max()
        worst = max(worst, float(rel))
    assert worst < 1e-3
    ok("8 envelope homogeneity",
       f"max relative deviation from alpha^0.6 scaling {worst:.2e} (< 1e-3) "
       "over 100 clips")


def test_criterion_09_interchange_round_trip():
    rng = np.random.default_rng(109)
    for _ in range(1000):
        rows = int(rng.integers(1, 30))
        cols = int(rng.integers(1, 30))
        m = (rng.standard_normal((rows, cols)) *
             10.0 ** rng.integers(-20, 20)).astype(np.float32)
        buf = io.BytesIO()
        matio.write_matrix(m, buf)
        buf.seek(0)
        assert matio.read_matrix(buf).tobytes() == m.tobytes()

    fuzz_cases = [
        (b"XXXX" + struct.pack("<IQQ", 1, 1, 1) + b"\0" * 4, FormatError),
        (b"AADM" + struct.pack("<IQQ", 2, 1, 1) + b"\0" * 4, FormatError),
        (b"AADM" + struct.pack("<IQQ", 1, 10, 10) + b"\0" * 399, CorruptionError),
        (b"AADM" + struct.pack("<IQQ", 1, 2, 2) + b"\0" * 10, CorruptionError),
        (b"AADM" + struct.pack("<IQ", 1, 4), CorruptionError),  # short header
        (b"AADM" + struct.pack("<IQQ", 1, 1, 1) + struct.pack("<f", np.nan),
         ValidationError),
        (b"AADM" + struct.pack("<IQQ", 1, 1 << 40, 1 << 40) + b"", CorruptionError),
    ]
    for payload, err in fuzz_cases:
        with pytest.raises(err):
            matio.read_matrix(io.BytesIO(payload))
    ok("9 interchange round-trip",
       f"1000 matrices bit-exact; {len(fuzz_cases)} corrupted-header cases "
       "rejected with the correct error class")


def test_criterion_10_report_schema_fidelity(tmp_path):
    outputs = []
    for name in ("run1", "run2"):
        base = tmp_path / name
        base.mkdir()
        cfg_path = base / "config.json"
        cfg_path.write_text(json.dumps({
            "manifest": str(base / "data" / "manifest.json"),
            "out_dir": str(base / "out"), "seed": 110, "features": ["direct"],
            "window_sizes_s": [2.0, 10.0], "lambda_grid": [1e-2, 1.0, 1e2],
            "synth": {"n_subjects": 2, "n_trials_per_subject": 6,
                      "trial_duration_s": 20.0, "n_eeg_channels": 4,
                      "noise_sigma": 4.0, "unattended_gain": 0.5}}))
        for command in ("synth", "train", "evaluate"):
            args = ["--config", str(cfg_path)]
            if command == "synth":
                args += ["--out", str(base / "data")]
            assert cli.main([command] + args) == 0
        outputs.append((base / "out" / "report" / "report.txt").read_bytes())
        outputs.append((base / "out" / "report" / "report.csv").read_bytes())
    assert outputs[0] == outputs[2], "text table not byte-stable across runs"
    assert outputs[1] == outputs[3], "csv not byte-stable across runs"

    text = outputs[0].decode("utf-8")
    assert "Attended Decoder" in text and "Unattended Decoder" in text
    assert "direct" in text
    import re
    cells = re.findall(r"\d\.\d{2} ± \d\.\d{2}", text)
    assert len(cells) >= 4  # mean +/- std cells per dataset and average columns
    ok("10 report schema fidelity",
       f"byte-stable table with attended/unattended groups and {len(cells)} "
       "mean +/- std cells")


def test_criterion_11_decision_rule_properties():
    rng = np.random.default_rng(111)
    n_anti = n_order = 0
    transforms = [np.tanh, np.arctan, lambda v: v ** 3, lambda v: 3 * v - 0.2]
    for _ in range(10000):
        a, b = rng.uniform(-1, 1, size=2)
        if a != b:
            assert ev.decide_window(a, b, "attended") != \
                   ev.decide_window(a, b, "unattended")
            n_anti += 1
        f = transforms[int(rng.integers(len(transforms)))]
        for mode in ("attended", "unattended"):
            assert ev.decide_window(a, b, mode) == \
                   ev.decide_window(float(f(a)), float(f(b)), mode)
        n_order += 1
    ok("11 decision-rule properties",
       f"antisymmetry on {n_anti} non-tied cases, order-invariance on "
       f"{n_order} cases")
