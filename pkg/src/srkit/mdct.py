"""KBD window, MDCT/IMDCT with perfect reconstruction, arcsinh companding.

Conventions: frame length L, hop H = L/2, K = L/2 coefficients per frame.

    X[k] = sum_n w[n] x[n] cos((pi/K)(n + 1/2 + K/2)(k + 1/2))

The synthesis transform carries the 2/K normalization, so the analysis sum
needs no scale factor. With a Princen-Bradley window and the symmetric
half-frame padding from `signal_io`, time-domain alias cancellation makes
the roundtrip exact over every original sample.

Companding keeps the coefficient sign, which is algebraically an odd map:

    S = asinh(g * X) / ln(10)        X = sinh(S * ln(10)) / g
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from .signal_io import FrameGrid, Waveform, frame_signal, overlap_add

DEFAULT_GAIN = 800.0
LN10 = np.log(10.0)


@dataclass(frozen=True)
class KbdWindow:
    """Kaiser-Bessel derived window; satisfies Princen-Bradley by construction."""

    taps: np.ndarray
    alpha: float

    def __post_init__(self):
        taps = np.asarray(self.taps, dtype=np.float64)
        object.__setattr__(self, "taps", taps)
        if taps.ndim != 1 or taps.size < 4 or taps.size % 2 != 0:
            raise ValueError(f"window taps must be 1-D, even, >= 4; got shape {taps.shape}")
        if not np.all(np.isfinite(taps)):
            raise ValueError("window taps contain non-finite values")

    def __len__(self) -> int:
        return self.taps.size


@dataclass(frozen=True)
class MdctSpectrogram:
    """T x K grid of signed MDCT coefficients plus framing metadata.

    `num_samples` is the source waveform length; `imdct` uses it to trim the
    synthesis padding so the roundtrip preserves length exactly. `companded`
    marks coefficients passed through `compress`.
    """

    coeffs: np.ndarray
    sample_rate: int
    hop: int
    num_samples: int
    companded: bool = False

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=np.float64)
        object.__setattr__(self, "coeffs", coeffs)
        if coeffs.ndim != 2:
            raise ValueError(f"coeffs must be T x K, got shape {coeffs.shape}")
        if not np.all(np.isfinite(coeffs)):
            raise ValueError("non-finite MDCT coefficients")

    @property
    def num_bins(self) -> int:
        return self.coeffs.shape[1]

    def bin_center_hz(self, k: int) -> float:
        return (k + 0.5) * self.sample_rate / (2.0 * self.num_bins)


def kbd_window(length: int, alpha: float) -> KbdWindow:
    """Build a length-L KBD window from a length-(L/2+1) Kaiser, beta = pi*alpha."""
    if length < 4 or length % 2 != 0:
        raise ValueError(f"window length must be even and >= 4, got {length}")
    if alpha < 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    half = length // 2
    kaiser = np.kaiser(half + 1, np.pi * alpha)
    csum = np.cumsum(kaiser)
    front = np.sqrt(csum[:half] / csum[half])
    return KbdWindow(taps=np.concatenate([front, front[::-1]]), alpha=float(alpha))


def princen_bradley_error(window: KbdWindow) -> float:
    """max_n |w[n]^2 + w[n+H]^2 - 1| over the first half."""
    half = len(window) // 2
    taps = window.taps
    return float(np.max(np.abs(taps[:half] ** 2 + taps[half:] ** 2 - 1.0)))


@lru_cache(maxsize=8)
def cosine_basis(frame_len: int) -> np.ndarray:
    """The L x K MDCT cosine kernel cos((pi/K)(n + 1/2 + K/2)(k + 1/2))."""
    half = frame_len // 2
    n = np.arange(frame_len)[:, None]
    k = np.arange(half)[None, :]
    return np.cos(np.pi / half * (n + 0.5 + half / 2.0) * (k + 0.5))


def mdct_frames(frames: np.ndarray, window: KbdWindow) -> np.ndarray:
    """Forward transform of pre-framed data, (T, L) -> (T, K), FFT-based."""
    frames = np.asarray(frames, dtype=np.float64)
    length = len(window)
    if frames.shape[-1] != length:
        raise ValueError(f"frame length {frames.shape[-1]} != window length {length}")
    half = length // 2
    n = np.arange(length)
    k = np.arange(half)
    n0 = (half + 1) / 2.0
    pre = (frames * window.taps) * np.exp(-1j * np.pi * n / length)
    post = np.exp(-2j * np.pi * n0 * (k + 0.5) / length)
    return np.real(np.fft.fft(pre, axis=-1)[..., :half] * post)


def imdct_frames(coeffs: np.ndarray, window: KbdWindow) -> np.ndarray:
    """Synthesis of windowed frames, (T, K) -> (T, L), ready for overlap-add."""
    coeffs = np.asarray(coeffs, dtype=np.float64)
    length = len(window)
    half = length // 2
    if coeffs.shape[-1] != half:
        raise ValueError(f"got {coeffs.shape[-1]} bins for a {length}-tap window")
    n = np.arange(length)
    k = np.arange(half)
    n0 = (half + 1) / 2.0
    c = coeffs * np.exp(2j * np.pi * n0 * (k + 0.5) / length)
    padded = np.concatenate([c, np.zeros_like(c)], axis=-1)
    core = length * np.real(np.exp(1j * np.pi * n / length) * np.fft.ifft(padded, axis=-1))
    return (2.0 / half) * window.taps * core


def mdct(wave: Waveform, window: KbdWindow) -> MdctSpectrogram:
    """Analyze a waveform into signed MDCT coefficients (T x K, K = L/2)."""
    length = len(window)
    grid = FrameGrid(frame_len=length, hop=length // 2).fit(len(wave))
    frames = frame_signal(wave, grid)
    return MdctSpectrogram(
        coeffs=mdct_frames(frames, window),
        sample_rate=wave.sample_rate,
        hop=grid.hop,
        num_samples=len(wave),
    )


def imdct(spec: MdctSpectrogram, window: KbdWindow) -> Waveform:
    """TDAC synthesis back to a waveform of the original length.

    Requires linear-domain coefficients; call `expand` first if companded.
    """
    if spec.companded:
        raise ValueError("spectrogram is companded; expand() before imdct()")
    length = len(window)
    if spec.num_bins != length // 2:
        raise ValueError(f"{spec.num_bins} bins do not match window length {length}")
    grid = FrameGrid(frame_len=length, hop=spec.hop).fit(spec.num_samples)
    if grid.num_frames != spec.coeffs.shape[0]:
        raise ValueError(
            f"frame count {spec.coeffs.shape[0]} inconsistent with num_samples={spec.num_samples}"
        )
    frames = imdct_frames(spec.coeffs, window)
    return Waveform(samples=overlap_add(frames, grid), sample_rate=spec.sample_rate)


def compress_values(x: np.ndarray, gain: float = DEFAULT_GAIN) -> np.ndarray:
    """Sign-preserving arcsinh companding: asinh(g*x)/ln(10), odd and monotone."""
    if gain <= 0:
        raise ValueError(f"gain must be positive, got {gain}")
    return np.arcsinh(gain * np.asarray(x, dtype=np.float64)) / LN10

def expand_values(s: np.ndarray, gain: float = DEFAULT_GAIN) -> np.ndarray:
    """Exact inverse of `compress_values`: sinh(s*ln(10))/g."""
    if gain <= 0:
        raise ValueError(f"gain must be positive, got {gain}")
    return np.sinh(np.asarray(s, dtype=np.float64) * LN10) / gain


def compress(spec: MdctSpectrogram, gain: float = DEFAULT_GAIN) -> MdctSpectrogram:
    """Compand a linear-domain spectrogram."""
    if spec.companded:
        raise ValueError("spectrogram is already companded")
    return replace(spec, coeffs=compress_values(spec.coeffs, gain), companded=True)


def expand(spec: MdctSpectrogram, gain: float = DEFAULT_GAIN) -> MdctSpectrogram:
    """Invert `compress` back to the linear domain."""
    if not spec.companded:
        raise ValueError("spectrogram is not companded")
    return replace(spec, coeffs=expand_values(spec.coeffs, gain), companded=False)
