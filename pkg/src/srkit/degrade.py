"""On-the-fly bandwidth degradation: low-pass, downsample to r, back to 48 kHz.

Filter family is fixed (Kaiser-windowed sinc, cutoff 0.91*(r/2), transition
0.18*(r/2), so the stop band starts exactly at the target Nyquist) and only
the rate is randomized. Resampling is rational polyphase via the reduced
fraction r/48000 with linear-phase FIRs, group delay compensated.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import signal

from .signal_io import Waveform

SOURCE_RATE = 48000
CUTOFF_FRAC = 0.91
TRANSITION_FRAC = 0.18
STOPBAND_DB = 70.0
DEFAULT_RATE_GRID = (4000, 8000, 12000, 16000, 24000, 32000)


@dataclass(frozen=True)
class DegradeSpec:
    """Target rate plus filter knobs. filter_taps=0 picks the Kaiser-formula order."""

    target_rate: int
    filter_taps: int = 0
    transition_width: float = TRANSITION_FRAC
    seed: int = 0

    def __post_init__(self):
        if not 4000 <= self.target_rate <= SOURCE_RATE:
            raise ValueError(
                f"target rate {self.target_rate} outside [4000, {SOURCE_RATE}] Hz"
            )
        if self.transition_width <= 0:
            raise ValueError("transition_width must be positive")


def design_lowpass(spec: DegradeSpec) -> np.ndarray:
    """Kaiser-windowed sinc at 48 kHz; odd length for integer group delay."""
    nyq = spec.target_rate / 2.0
    width_hz = spec.transition_width * nyq
    numtaps, beta = signal.kaiserord(STOPBAND_DB, width_hz / (0.5 * SOURCE_RATE))
    if spec.filter_taps:
        numtaps = spec.filter_taps
    numtaps |= 1
    return signal.firwin(numtaps, CUTOFF_FRAC * nyq, window=("kaiser", beta), fs=SOURCE_RATE)


def _rational_resample(x: np.ndarray, up: int, down: int) -> np.ndarray:
    """Polyphase resampling with an explicit >= 75 dB Kaiser interpolation FIR.

    scipy's default resample_poly window only reaches ~50 dB near the band
    edge, which leaks imaging above the lower Nyquist; that would break the
    60 dB stop-band guarantee of the degradation chain.
    """
    # cutoff/width as fractions of the intermediate-rate Nyquist
    f_norm = min(1.0 / up, 1.0 / down)
    numtaps, beta = signal.kaiserord(STOPBAND_DB + 5.0, 0.10 * f_norm)
    numtaps |= 1
    h = signal.firwin(numtaps, 0.95 * f_norm, window=("kaiser", beta))
    return signal.resample_poly(x, up, down, window=h)


def degrade_to_rate(wave: Waveform, spec: DegradeSpec) -> Waveform:
    """Band-limit a 48 kHz waveform and downsample to the target rate."""
    if wave.sample_rate != SOURCE_RATE:
        raise ValueError(f"expected a {SOURCE_RATE} Hz waveform, got {wave.sample_rate}")
    taps = design_lowpass(spec)
    y = signal.fftconvolve(wave.samples, taps, mode="same")
    frac = Fraction(spec.target_rate, SOURCE_RATE)
    if frac != 1:
        y = _rational_resample(y, frac.numerator, frac.denominator)
    return Waveform(samples=y, sample_rate=spec.target_rate)


def resample_to_source(wave: Waveform) -> Waveform:
    """Polyphase-resample any supported rate up to the 48 kHz grid."""
    if wave.sample_rate == SOURCE_RATE:
        return wave
    frac = Fraction(SOURCE_RATE, wave.sample_rate)
    y = _rational_resample(wave.samples, frac.numerator, frac.denominator)
    return Waveform(samples=y, sample_rate=SOURCE_RATE)


def lowpass_resample(wave: Waveform, spec: DegradeSpec) -> Waveform:
    """Band-limit to the target rate and return to 48 kHz at the same length."""
    y = resample_to_source(degrade_to_rate(wave, spec)).samples
    if y.size < len(wave):
        y = np.pad(y, (0, len(wave) - y.size))
    return Waveform(samples=y[: len(wave)], sample_rate=SOURCE_RATE)


def random_degrade(
    wave: Waveform,
    rng: np.random.Generator,
    rate_grid: tuple[int, ...] = DEFAULT_RATE_GRID,
) -> tuple[Waveform, int]:
    """Degrade at a rate drawn uniformly from the grid; returns (wave, rate)."""
    if not rate_grid:
        raise ValueError("rate grid is empty")
    rate = int(rate_grid[rng.integers(0, len(rate_grid))])
    return lowpass_resample(wave, DegradeSpec(target_rate=rate)), rate


def random_crop(wave: Waveform, length: int, rng: np.random.Generator) -> Waveform:
    """Contiguous random segment of exactly `length` samples, zero-padded if short."""
    if length < 1:
        raise ValueError(f"crop length must be >= 1, got {length}")
    n = len(wave)
    if n >= length:
        start = int(rng.integers(0, n - length + 1))
        segment = wave.samples[start : start + length]
    else:
        segment = np.pad(wave.samples, (0, length - n))
    return Waveform(samples=segment, sample_rate=wave.sample_rate)
