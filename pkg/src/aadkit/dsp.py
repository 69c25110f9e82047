"""Signal-processing kernels: gammatone filterbank, notch/band filters,
resampling, normalization, artifact clipping.

All filters are zero-phase where the contract says so (forward-backward
application) and operate column-wise on TimeSeries data.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import signal

from .core import TimeSeries
from .errors import ConfigurationError, ValidationError

log = logging.getLogger(__name__)

_EAR_Q = 9.26449  # Glasberg & Moore ERB constants
_MIN_BW = 24.7


def erb_bandwidth(f_hz: np.ndarray) -> np.ndarray:
    return _MIN_BW + f_hz / _EAR_Q


def erb_space(f_low_hz: float, f_high_hz: float, n: int) -> np.ndarray:
    """Center frequencies equally spaced on the ERB-rate scale, endpoints exact."""
    lo = np.log(f_low_hz + _EAR_Q * _MIN_BW)
    hi = np.log(f_high_hz + _EAR_Q * _MIN_BW)
    pts = np.linspace(lo, hi, n)
    freqs = np.exp(pts) - _EAR_Q * _MIN_BW
    freqs[0], freqs[-1] = f_low_hz, f_high_hz
    return freqs


@dataclass(frozen=True)
class GammatoneBank:
    """4th-order gammatone bank as cascaded biquads (Slaney-style design)."""

    sample_rate_hz: float
    center_freqs_hz: np.ndarray  # (n_filters,)
    sos: np.ndarray  # (n_filters, 4, 6)

    @property
    def n_filters(self) -> int:
        return len(self.center_freqs_hz)


def design_gammatone_bank(sample_rate_hz: float, n_filters: int = 28,
                          f_low_hz: float = 50.0, f_high_hz: float = 5000.0) -> GammatoneBank:
    if f_high_hz >= sample_rate_hz / 2:
        raise ConfigurationError(
            f"top center frequency {f_high_hz} Hz must be below Nyquist "
            f"({sample_rate_hz / 2} Hz)")
    cfs = erb_space(f_low_hz, f_high_hz, n_filters)
    t = 1.0 / sample_rate_hz
    sos = np.zeros((n_filters, 4, 6))
    for k, cf in enumerate(cfs):
        b = 2 * np.pi * 1.019 * erb_bandwidth(cf)
        theta = 2 * np.pi * cf * t
        decay = np.exp(-b * t)
        a1 = -2 * np.cos(theta) * decay
        a2 = decay ** 2
        # the four numerator variants of the 4th-order gammatone
        c = np.cos(theta) * decay
        s = np.sin(theta) * decay
        r1 = np.sqrt(3 + 2 ** 1.5)
        r2 = np.sqrt(3 - 2 ** 1.5)
        zeros = [c + r1 * s, c - r1 * s, c + r2 * s, c - r2 * s]
        for j, z in enumerate(zeros):
            sos[k, j] = [t, -t * z, 0.0, 1.0, a1, a2]
        # normalize to unit gain at the center frequency
        _, h = signal.sosfreqz(sos[k], worN=[theta])
        sos[k, 0, :3] /= np.abs(h[0])
    bank = GammatoneBank(sample_rate_hz=sample_rate_hz, center_freqs_hz=cfs, sos=sos)
    _check_bank_stability(bank)
    return bank


def _check_bank_stability(bank: GammatoneBank) -> None:
    for k in range(bank.n_filters):
        for sec in bank.sos[k]:
            poles = np.roots(sec[3:])
            if np.any(np.abs(poles) >= 1.0):
                raise ConfigurationError(
                    f"gammatone filter {k} unstable at fs={bank.sample_rate_hz}")


def gammatone_analyze(audio: TimeSeries, bank: GammatoneBank) -> TimeSeries:
    """Filter mono audio through every band; output is (samples x n_filters)."""
    if audio.n_channels != 1:
        raise ConfigurationError(f"expected mono audio, got {audio.n_channels} channels")
    if audio.sample_rate_hz != bank.sample_rate_hz:
        raise ConfigurationError(
            f"audio rate {audio.sample_rate_hz} Hz does not match bank rate "
            f"{bank.sample_rate_hz} Hz")
    x = audio.data[:, 0].astype(np.float64)
    out = np.empty((len(x), bank.n_filters))
    for k in range(bank.n_filters):
        out[:, k] = signal.sosfilt(bank.sos[k], x)
    return TimeSeries(out, audio.sample_rate_hz)


@dataclass(frozen=True)
class FilterConfig:
    notch_hz: int = 50
    highpass_hz: float = 0.1  # 0 selects the pure low-pass mode
    lowpass_hz: float = 8.0
    order: int = 4
    zero_phase: bool = True

    def validate(self, sample_rate_hz: float) -> None:
        nyq = sample_rate_hz / 2
        if not (0 <= self.highpass_hz < self.lowpass_hz < nyq):
            raise ConfigurationError(
                f"need 0 <= highpass ({self.highpass_hz}) < lowpass ({self.lowpass_hz}) "
                f"< Nyquist ({nyq})")


def notch_filter(x: TimeSeries, notch_hz: float, quality: float = 30.0) -> TimeSeries:
    """Zero-phase line-noise notch (>= 30 dB at notch, <= 1 dB 10 Hz away)."""
    nyq = x.sample_rate_hz / 2
    if notch_hz >= nyq:
        raise ConfigurationError(f"notch {notch_hz} Hz at or above Nyquist {nyq} Hz")
    b, a = signal.iirnotch(notch_hz, quality, fs=x.sample_rate_hz)
    out = signal.filtfilt(b, a, x.data.astype(np.float64), axis=0)
    return x.with_data(out)


def _padlen(n_samples: int, sample_rate_hz: float, corner_hz: float) -> int:
    # filtfilt's default padding is far too short for sub-Hz corners; pad by
    # several filter time constants so edge transients do not leak inward
    return min(n_samples - 1, int(10 * sample_rate_hz / corner_hz))


def band_limit(x: TimeSeries, cfg: FilterConfig) -> TimeSeries:
    """Zero-phase band-pass; >= 40 dB one octave beyond each edge."""
    cfg.validate(x.sample_rate_hz)
    data = x.data.astype(np.float64)
    if cfg.highpass_hz > 0:
        sos_hp = signal.butter(cfg.order, cfg.highpass_hz, btype="highpass",
                               fs=x.sample_rate_hz, output="sos")
        data = signal.sosfiltfilt(sos_hp, data, axis=0,
                                  padlen=_padlen(len(data), x.sample_rate_hz,
                                                 cfg.highpass_hz))
    sos_lp = signal.butter(cfg.order, cfg.lowpass_hz, btype="lowpass",
                           fs=x.sample_rate_hz, output="sos")
    data = signal.sosfiltfilt(sos_lp, data, axis=0,
                              padlen=_padlen(len(data), x.sample_rate_hz,
                                             cfg.lowpass_hz))
    return x.with_data(data)


def average_reference(x: TimeSeries) -> TimeSeries:
    """Subtract the instantaneous cross-channel mean from every channel."""
    return x.with_data(x.data - x.data.mean(axis=1, keepdims=True))


def output_length(n_in: int, rate_in: float, rate_out: float) -> int:
    """Row count after resampling: round half up."""
    return int(np.floor(n_in * rate_out / rate_in + 0.5))


def resample(x: TimeSeries, target_hz: float) -> TimeSeries:
    """Polyphase resampling with anti-alias cutoff at 0.45x the lower rate."""
    if not (target_hz > 0):
        raise ConfigurationError(f"target rate must be positive, got {target_hz}")
    if target_hz == x.sample_rate_hz:
        return x.with_data(x.data.copy())
    frac = Fraction(target_hz / x.sample_rate_hz).limit_denominator(10000)
    up, down = frac.numerator, frac.denominator
    fs_up = x.sample_rate_hz * up
    cutoff_hz = 0.45 * min(x.sample_rate_hz, target_hz)
    numtaps = 2 * (10 * max(up, down)) + 1
    h = signal.firwin(numtaps, cutoff_hz, fs=fs_up, window=("kaiser", 8.6))
    out = signal.resample_poly(x.data.astype(np.float64), up, down, axis=0,
                               window=h, padtype="line")
    n_out = output_length(x.n_samples, x.sample_rate_hz, target_hz)
    if out.shape[0] > n_out:
        out = out[:n_out]
    elif out.shape[0] < n_out:
        out = np.concatenate([out, np.repeat(out[-1:], n_out - out.shape[0], axis=0)])
    return TimeSeries(out, target_hz)


@dataclass(frozen=True)
class NormStats:
    """Per-column mean/std fitted on training data only."""

    mean: np.ndarray
    std: np.ndarray

    @property
    def n_columns(self) -> int:
        return len(self.mean)


def zscore_fit(series: list[TimeSeries], eps: float = 1e-8) -> NormStats:
    """Pool rows across series; std uses denominator N, floored at eps."""
    if not series:
        raise ValidationError("zscore_fit needs at least one series")
    pooled = np.concatenate([s.data for s in series], axis=0).astype(np.float64)
    if pooled.shape[0] < 2:
        raise ValidationError("zscore_fit needs at least 2 pooled samples per column")
    mean = pooled.mean(axis=0)
    std = pooled.std(axis=0)  # ddof=0
    std = np.where(std < eps, eps, std)
    return NormStats(mean=mean, std=std)


def zscore_apply(x: TimeSeries, stats: NormStats) -> TimeSeries:
    if x.n_channels != stats.n_columns:
        raise ValidationError(
            f"stats have {stats.n_columns} columns, series has {x.n_channels}")
    return x.with_data((x.data - stats.mean) / stats.std)


def artifact_clip(x: TimeSeries, k_mad: float = 8.0) -> tuple[TimeSeries, float]:
    """Replace per-channel outliers (|v - median| > k_mad * MAD) by linear
    interpolation between the nearest valid neighbors.

    Returns the cleaned series and the fraction of samples replaced.
    """
    if not (k_mad > 0):
        raise ConfigurationError(f"k_mad must be positive, got {k_mad}")
    data = x.data.astype(np.float64).copy()
    n_replaced = 0
    for ch in range(data.shape[1]):
        col = data[:, ch]
        med = np.median(col)
        mad = np.median(np.abs(col - med))
        if mad == 0:
            log.warning("artifact_clip: channel %d has zero MAD, skipped", ch)
            continue
        bad = np.abs(col - med) > k_mad * mad
        if not bad.any():
            continue
        good = ~bad
        if not good.any():
            log.warning("artifact_clip: channel %d entirely flagged, skipped", ch)
            continue
        idx = np.arange(len(col))
        col[bad] = np.interp(idx[bad], idx[good], col[good])
        data[:, ch] = col
        n_replaced += int(bad.sum())
    fraction = n_replaced / data.size
    return x.with_data(data), fraction


@dataclass
class PreprocessResult:
    series: TimeSeries
    clip_fraction: float
    notch_reduction_db: float


def tone_power_db(x: TimeSeries, freq_hz: float) -> float:
    """Power (dB) of the spectral bin closest to freq_hz, averaged over channels."""
    spec = np.abs(np.fft.rfft(x.data, axis=0)) ** 2
    freqs = np.fft.rfftfreq(x.n_samples, d=1.0 / x.sample_rate_hz)
    k = int(np.argmin(np.abs(freqs - freq_hz)))
    return 10 * np.log10(spec[k].mean() + 1e-30)


def preprocess_eeg(raw: TimeSeries, cfg: FilterConfig, target_hz: float = 64.0,
                   clip_artifacts: bool = True, k_mad: float = 8.0) -> PreprocessResult:
    """Standard EEG chain: notch -> average reference -> band-limit ->
    optional artifact clip -> resample to target rate."""
    before_db = tone_power_db(raw, cfg.notch_hz)
    ts = notch_filter(raw, cfg.notch_hz)
    after_db = tone_power_db(ts, cfg.notch_hz)
    ts = average_reference(ts)
    ts = band_limit(ts, cfg)
    frac = 0.0
    if clip_artifacts:
        ts, frac = artifact_clip(ts, k_mad=k_mad)
    ts = resample(ts, target_hz)
    return PreprocessResult(series=ts, clip_fraction=frac,
                            notch_reduction_db=before_db - after_db)
