from fractions import Fraction
from math import comb

import numpy as np
import pytest
from scipy.stats import binom

from aadkit import decoder as dec
from aadkit import evaluate as ev
from aadkit.core import TimeSeries
from aadkit.errors import ValidationError

FS = 64.0


def series(data):
    return TimeSeries(np.asarray(data, dtype=np.float64), FS)


# ---------------------------------------------------------------------------
# window correlation


class TestWindowCorrelation:
    def test_self_correlation(self, rng):
        x = series(rng.standard_normal((100, 3)))
        assert ev.window_correlation(x, x, (0, 100)) == pytest.approx(1.0)

    def test_anti_correlation(self, rng):
        x = series(rng.standard_normal((100, 3)))
        neg = x.with_data(-x.data)
        assert ev.window_correlation(x, neg, (0, 100)) == pytest.approx(-1.0)

    def test_independent_noise_near_zero(self):
        rng = np.random.default_rng(5)
        a = series(rng.standard_normal((10000, 1)))
        b = series(rng.standard_normal((10000, 1)))
        assert abs(ev.window_correlation(a, b, (0, 10000))) < 0.05

    def test_zero_variance_dim_counts(self, rng):
        a = series(np.hstack([rng.standard_normal((50, 1)), np.ones((50, 1))]))
        b = series(rng.standard_normal((50, 2)))
        counters = ev.CorrCounters()
        ev.window_correlation(a, b, (0, 50), counters)
        assert counters.zero_variance_dims == 1

    def test_window_out_of_range(self, rng):
        x = series(rng.standard_normal((50, 1)))
        with pytest.raises(ValidationError):
            ev.window_correlation(x, x, (0, 51))
        with pytest.raises(ValidationError):
            ev.window_correlation(x, x, (10, 12))  # below 4-sample minimum


# ---------------------------------------------------------------------------
# decision rule


class TestDecideWindow:
    @pytest.mark.parametrize("c_att,c_unatt,mode,expected", [
        (0.3, 0.1, "attended", True),
        (0.2, 0.2, "attended", True),   # ties favor the decoder's own mode
        (0.2, 0.2, "unattended", True),
        (0.0, 0.2, "attended", False),
        (0.0, 0.2, "unattended", True),
    ])
    def test_examples(self, c_att, c_unatt, mode, expected):
        assert ev.decide_window(c_att, c_unatt, mode) is expected

    def test_mode_antisymmetry_randomized(self):
        rng = np.random.default_rng(17)
        for _ in range(10000):
            a, b = rng.uniform(-1, 1, size=2)
            if a == b:
                continue
            assert ev.decide_window(a, b, "attended") != ev.decide_window(a, b, "unattended")

    def test_order_invariance_randomized(self):
        # any strictly increasing transform applied to both correlations
        # leaves the decision unchanged
        rng = np.random.default_rng(23)
        transforms = [np.tanh, np.arctan, lambda v: v ** 3, lambda v: 2 * v + 1]
        for _ in range(10000):
            a, b = rng.uniform(-1, 1, size=2)
            f = transforms[int(rng.integers(len(transforms)))]
            for mode in ("attended", "unattended"):
                assert ev.decide_window(a, b, mode) == ev.decide_window(
                    float(f(a)), float(f(b)), mode)

    def test_non_finite_rejected(self):
        with pytest.raises(ValidationError):
            ev.decide_window(np.nan, 0.1, "attended")


# ---------------------------------------------------------------------------
# window tiling / subject evaluation


class TestTiling:
    def test_counts(self):
        assert len(ev.tile_windows(7680, 1920)) == 4  # 120 s trial, 30 s windows
        assert len(ev.tile_windows(100, 30)) == 3

    def test_disjoint_cover(self, rng):
        n, w = int(rng.integers(50, 500)), int(rng.integers(4, 40))
        wins = ev.tile_windows(n, w)
        seen = np.zeros(n, dtype=int)
        for a, b in wins:
            seen[a:b] += 1
        assert seen.max() <= 1
        assert seen.sum() == (n // w) * w


def make_trials(rng, decoder, n_trials=4, duration_s=30.0, planted=True):
    """Trials where the attended stream is (noisily) reconstructable."""
    trials = []
    n = int(duration_s * FS)
    for i in range(n_trials):
        eeg = TimeSeries(rng.standard_normal((n, decoder.n_channels)), FS)
        recon = dec.reconstruct(decoder, eeg)
        att = recon.data + 0.5 * rng.standard_normal(recon.data.shape)
        unatt = rng.standard_normal(recon.data.shape)
        trials.append(ev.TrialData(f"t{i}", eeg, TimeSeries(att, FS),
                                   TimeSeries(unatt, FS)))
    return trials


def fitted_decoder(rng, n_ch=4, n_feat=1):
    trials = [(TimeSeries(rng.standard_normal((400, n_ch)), FS),
               TimeSeries(rng.standard_normal((400, n_feat)), FS))
              for _ in range(2)]
    return dec.solve_ridge(dec.accumulate_trials(trials, dec.LagConfig()), [1.0])[0]


class TestEvaluateSubject:
    def test_reconstructable_stream_wins(self, rng):
        d = fitted_decoder(rng)
        trials = make_trials(rng, d)
        rows = ev.evaluate_subject(d, d, trials, [5.0], dataset="ds", subject="s",
                                   feature="direct")
        att_row = [r for r in rows if r.decoder_mode == "attended"][0]
        assert att_row.accuracy == 1.0
        assert att_row.n_windows == 24  # 4 trials x 6 windows of 5 s

    def test_coin_flip_within_binomial_bounds(self):
        rng = np.random.default_rng(31)
        d = fitted_decoder(rng)
        n = int(30.0 * FS)
        trials = []
        for i in range(20):  # 20 trials x 30 s / 1 s windows -> 600 windows
            eeg = TimeSeries(rng.standard_normal((n, 4)), FS)
            trials.append(ev.TrialData(
                f"t{i}", eeg, TimeSeries(rng.standard_normal((n, 1)), FS),
                TimeSeries(rng.standard_normal((n, 1)), FS)))
        rows = ev.evaluate_subject(d, d, trials, [1.0], dataset="ds", subject="s",
                                   feature="direct")
        att = [r for r in rows if r.decoder_mode == "attended"][0]
        lo, hi = binom.interval(0.95, att.n_windows, 0.5)
        assert lo / att.n_windows <= att.accuracy <= hi / att.n_windows

    def test_oversized_window_skipped(self, rng):
        d = fitted_decoder(rng)
        trials = make_trials(rng, d, n_trials=2, duration_s=10.0)
        rows = ev.evaluate_subject(d, d, trials, [60.0, 5.0], dataset="ds",
                                   subject="s", feature="direct")
        assert {r.window_s for r in rows} == {5.0}

    def test_label_swap_flips_accuracy(self, rng):
        d = fitted_decoder(rng)
        trials = make_trials(rng, d, duration_s=20.0)
        swapped = [ev.TrialData(t.trial_id, t.eeg, t.unattended, t.attended)
                   for t in trials]
        rows = ev.evaluate_subject(d, d, trials, [2.0], feature="direct")
        rows_sw = ev.evaluate_subject(d, d, swapped, [2.0], feature="direct")
        for mode in ("attended", "unattended"):
            a = [r for r in rows if r.decoder_mode == mode][0]
            b = [r for r in rows_sw if r.decoder_mode == mode][0]
            assert a.n_ties == b.n_ties == 0
            assert a.accuracy == pytest.approx(1.0 - b.accuracy)

    def test_no_trials(self, rng):
        d = fitted_decoder(rng)
        with pytest.raises(ValidationError):
            ev.evaluate_subject(d, d, [], [1.0])


# ---------------------------------------------------------------------------
# chance level


class TestChanceLevel:
    def test_single_window(self):
        assert ev.chance_level(1) == 1.0

    def test_hundred_windows(self):
        assert ev.chance_level(100, 0.05) == pytest.approx(0.59)

    def test_exact_enumeration_oracle(self):
        # independent integer-arithmetic tail: P(X >= k) = sum C(n,i) / 2^n
        for n in (10, 100, 257):
            got = ev.chance_level(n, 0.05)
            k = None
            for kk in range(n + 1):
                tail = Fraction(sum(comb(n, i) for i in range(kk, n + 1)), 2 ** n)
                if tail < Fraction(1, 20):
                    k = kk
                    break
            assert got == pytest.approx(k / n)

    def test_above_half(self):
        for n in (1, 2, 10, 50, 400, 1000):
            assert ev.chance_level(n) > 0.5


# ---------------------------------------------------------------------------
# rendering


def sample_report():
    report = ev.EvaluationReport()
    # two subjects so the aggregate has a spread: mean 0.65, std 0.36…
    for subject, acc_att in (("s01", 0.9045584412), ("s02", 0.3954415588)):
        report.rows.append(ev.ReportRow("FU_18", subject, "envelope", "", "attended",
                                        30.0, acc_att, 0.1, 40, 0))
        report.rows.append(ev.ReportRow("FU_18", subject, "envelope", "", "unattended",
                                        30.0, 0.5, 0.1, 40, 1))
    return report


class TestRendering:
    def test_table_structure_and_cell_format(self):
        text = ev.render_table_text(sample_report())
        assert "Attended Decoder" in text
        assert "Unattended Decoder" in text
        assert "envelope" in text
        assert "0.65 ± 0.36" in text  # mean/std across the two subjects

    def test_byte_stable(self):
        a = ev.render_table_text(sample_report())
        b = ev.render_table_text(sample_report())
        assert a == b
        assert ev.report_to_csv(sample_report()) == ev.report_to_csv(sample_report())

    def test_empty_report_rejected(self):
        with pytest.raises(ValidationError):
            ev.render_table_text(ev.EvaluationReport())

    def test_csv_schema(self):
        text = ev.report_to_csv(sample_report())
        header = text.splitlines()[0]
        assert header == ("dataset,subject,feature,layer_mode,decoder_mode,"
                          "window_s,accuracy,std,n_windows,n_ties")

    def test_weight_energy_plot_data(self):
        profile = np.zeros(33)
        profile[5] = 1.0
        text = ev.weight_energy_data(profile, 64.0)
        lines = text.strip().splitlines()
        assert len(lines) == 33
        delays = [float(line.split()[0]) for line in lines]
        assert delays[0] == 0.0
        assert delays[1] == pytest.approx(15.625)
        assert delays[-1] == pytest.approx(500.0)

    def test_render_report_files(self, tmp_path):
        paths = ev.render_report(sample_report(), tmp_path / "report",
                                 {"s01.envelope.attended": (np.full(33, 1 / 33), 64.0)})
        names = {p.name for p in paths}
        assert "report.csv" in names
        assert "report.txt" in names
        assert "weight_energy.s01.envelope.attended.dat" in names
        assert any(n.startswith("accuracy_vs_window") for n in names)
