import numpy as np
import pytest

from aadkit.core import TimeSeries


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_tone(freq_hz: float, duration_s: float, fs_hz: float,
              amplitude: float = 1.0) -> TimeSeries:
    t = np.arange(int(round(duration_s * fs_hz))) / fs_hz
    return TimeSeries(amplitude * np.sin(2 * np.pi * freq_hz * t)[:, None], fs_hz)


def make_noise(rng, duration_s: float, fs_hz: float, channels: int = 1,
               scale: float = 1.0) -> TimeSeries:
    n = int(round(duration_s * fs_hz))
    return TimeSeries(scale * rng.standard_normal((n, channels)), fs_hz)
