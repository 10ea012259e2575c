"""Log-spectral distance and the magnitude STFT it is measured on.

LSD is the frame-wise RMS of the squared log10 power ratio between two
magnitude spectrograms, averaged over frames. Powers are floored before the
log so silence against silence scores 0 rather than NaN.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import get_window

from .signal_io import Waveform, read_wav

DEFAULT_FFT_SIZE = 2048
DEFAULT_HOP = 512
POWER_FLOOR = 1e-10


@dataclass(frozen=True)
class MagSpectrogram:
    """T x F magnitude STFT with the analysis parameters that produced it."""

    mags: np.ndarray
    fft_size: int
    hop: int
    floor: float = POWER_FLOOR

    def __post_init__(self) -> None:
        m = np.asarray(self.mags, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
            raise ValueError(f"mags must be a nonempty T x F matrix, got shape {m.shape}")
        if np.any(m < 0) or not np.all(np.isfinite(m)):
            raise ValueError("magnitudes must be finite and nonnegative")
        object.__setattr__(self, "mags", m)

    @property
    def num_frames(self) -> int:
        return self.mags.shape[0]

    @property
    def num_bins(self) -> int:
        return self.mags.shape[1]


def stft_mag(
    wave: Waveform | np.ndarray,
    fft_size: int = DEFAULT_FFT_SIZE,
    hop: int = DEFAULT_HOP,
) -> MagSpectrogram:
    """Hann-windowed one-sided magnitude STFT, F = fft_size/2 + 1.

    Frames start every `hop` samples from offset 0; the tail is zero padded
    so the last frame covers the final samples.
    """
    if fft_size < 2 or fft_size & (fft_size - 1):
        raise ValueError(f"fft_size must be a power of two, got {fft_size}")
    if not 1 <= hop <= fft_size:
        raise ValueError(f"hop must be in [1, fft_size], got {hop}")
    x = wave.samples if isinstance(wave, Waveform) else np.asarray(wave, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("expected a nonempty 1-D signal")

    n = x.size
    num_frames = 1 + max(0, -(-(n - fft_size) // hop))
    padded = np.zeros((num_frames - 1) * hop + fft_size)
    padded[:n] = x
    idx = np.arange(fft_size)[None, :] + hop * np.arange(num_frames)[:, None]
    frames = padded[idx] * get_window("hann", fft_size)
    mags = np.abs(np.fft.rfft(frames, axis=1))
    return MagSpectrogram(mags=mags, fft_size=fft_size, hop=hop)


def lsd(ref: MagSpectrogram, est: MagSpectrogram) -> float:
    """Log-spectral distance in dB; 0 means the floored spectra coincide.

    LSD = (1/T) sum_t sqrt((1/F) sum_f (log10(S^2 / S_hat^2))^2)
    with each power floored at its spectrogram's floor.
    """
    if ref.mags.shape != est.mags.shape:
        raise ValueError(f"shape mismatch: ref {ref.mags.shape} vs est {est.mags.shape}")
    p_ref = np.maximum(ref.mags**2, ref.floor)
    p_est = np.maximum(est.mags**2, est.floor)
    r = np.log10(p_ref) - np.log10(p_est)
    return float(np.mean(np.sqrt(np.mean(r**2, axis=1))))


def lsd_waves(ref: Waveform, est: Waveform) -> float:
    """LSD between two waveforms at the default 2048/512 analysis."""
    if ref.sample_rate != est.sample_rate:
        raise ValueError(
            f"sample rates differ: {ref.sample_rate} vs {est.sample_rate}"
        )
    e = est.samples
    if e.size < len(ref):
        e = np.pad(e, (0, len(ref) - e.size))
    elif e.size > len(ref):
        e = e[: len(ref)]
    return lsd(stft_mag(ref.samples), stft_mag(e))


def lsd_files(ref_path: str | Path, est_path: str | Path) -> float:
    """LSD between two audio files; the estimate is aligned to the reference
    length by truncation or zero padding."""
    return lsd_waves(read_wav(ref_path), read_wav(est_path))


def lsd_corpus(
    ref_dir: str | Path,
    est_dir: str | Path,
    pattern: str = "*.wav",
) -> list[tuple[str, float]]:
    """Per-file LSD for every reference wav with a same-named estimate.

    Sorted by filename so aggregation order is fixed.
    """
    ref_dir, est_dir = Path(ref_dir), Path(est_dir)
    refs = sorted(ref_dir.glob(pattern))
    if not refs:
        raise ValueError(f"no files matching {pattern!r} in {ref_dir}")
    rows = []
    for ref in refs:
        est = est_dir / ref.name
        if not est.exists():
            raise FileNotFoundError(f"missing estimate for {ref.name} in {est_dir}")
        rows.append((ref.name, lsd_files(ref, est)))
    return rows
