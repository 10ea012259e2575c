"""Waveform container, WAV file I/O, framing/overlap-add, synthetic corpus.

WAV support covers RIFF/WAVE with PCM16 or IEEE float32 payloads; anything
else is rejected. Multichannel files are averaged to mono on read.
"""

from __future__ import annotations

import os
import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.io import wavfile

PCM16_SCALE = 32768.0


@dataclass(frozen=True)
class Waveform:
    """Mono audio signal: float64 samples (nominal range [-1, 1]) plus rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        object.__setattr__(self, "samples", samples)
        if samples.ndim != 1:
            raise ValueError(f"waveform must be 1-D, got shape {samples.shape}")
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if samples.size and not np.all(np.isfinite(samples)):
            raise ValueError("waveform contains non-finite samples")

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class FrameGrid:
    """50%-overlap frame geometry with symmetric half-frame zero padding.

    The signal is padded by `hop` zeros in front and by enough zeros at the
    back (at least `hop`) that every original sample is covered by exactly
    two frames. `num_frames` and `orig_len` describe a concrete segmentation
    and are filled in by `fit`.
    """

    frame_len: int = 1024
    hop: int = 512
    num_frames: int = 0
    orig_len: int = 0

    def __post_init__(self):
        if self.frame_len < 2 or self.frame_len % 2 != 0:
            raise ValueError(f"frame_len must be even and >= 2, got {self.frame_len}")
        if self.hop * 2 != self.frame_len:
            raise ValueError(
                f"hop must be frame_len/2 (50% overlap), got hop={self.hop} frame_len={self.frame_len}"
            )
        if self.num_frames < 0 or self.orig_len < 0:
            raise ValueError("num_frames and orig_len must be nonnegative")

    def fit(self, num_samples: int) -> "FrameGrid":
        """Grid sized for a signal of `num_samples` samples."""
        if num_samples < 1:
            raise ValueError("cannot frame an empty signal")
        num_frames = -(-num_samples // self.hop) + 1
        return replace(self, num_frames=num_frames, orig_len=num_samples)

    @property
    def padded_len(self) -> int:
        return (self.num_frames - 1) * self.hop + self.frame_len

    @property
    def pad_back(self) -> int:
        return self.padded_len - self.orig_len - self.hop


def frame_signal(wave: Waveform, grid: FrameGrid) -> np.ndarray:
    """Segment into 50%-overlapping frames, zero-padded per the grid policy.

    Returns an array of shape (num_frames, frame_len). Pass a grid sized via
    `grid.fit(len(wave))`; an unsized grid is fitted internally.
    """
    if len(wave) == 0:
        raise ValueError("cannot frame an empty waveform")
    if grid.num_frames == 0:
        grid = grid.fit(len(wave))
    elif grid.orig_len != len(wave):
        raise ValueError(f"grid was fitted for {grid.orig_len} samples, waveform has {len(wave)}")
    padded = np.concatenate(
        [np.zeros(grid.hop), wave.samples, np.zeros(grid.pad_back)]
    )
    idx = np.arange(grid.frame_len)[None, :] + grid.hop * np.arange(grid.num_frames)[:, None]
    return padded[idx]


def overlap_add(frames: np.ndarray, grid: FrameGrid) -> np.ndarray:
    """Sum overlapping frames back into a signal, trimming the grid padding.

    Inverse of `frame_signal` up to the analysis/synthesis window product.
    If the grid carries no orig_len the untrimmed buffer is returned.
    """
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[1] != grid.frame_len:
        raise ValueError(
            f"expected frames of shape (T, {grid.frame_len}), got {frames.shape}"
        )
    num_frames = frames.shape[0]
    out = np.zeros((num_frames - 1) * grid.hop + grid.frame_len)
    for t in range(num_frames):
        out[t * grid.hop : t * grid.hop + grid.frame_len] += frames[t]
    if grid.orig_len:
        out = out[grid.hop : grid.hop + grid.orig_len]
    return out


def read_wav(path: str | os.PathLike) -> Waveform:
    """Read a PCM16 or float32 RIFF/WAVE file as mono in [-1, 1]."""
    try:
        rate, data = wavfile.read(path)
    except ValueError as exc:
        raise ValueError(f"malformed or unsupported WAV file {path}: {exc}") from exc
    if data.size == 0:
        raise ValueError(f"empty data chunk in {path}")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / PCM16_SCALE
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float64)
    else:
        raise ValueError(f"unsupported WAV codec {data.dtype} in {path} (want PCM16 or float32)")
    if samples.ndim == 2:
        samples = samples.mean(axis=1)
    return Waveform(samples=samples, sample_rate=int(rate))


def write_wav(path: str | os.PathLike, wave: Waveform, fmt: str = "float32") -> None:
    """Write as PCM16 or IEEE float32.

    PCM16 clamps to [-1, 1 - 1/32768] with a warning; it never wraps.
    """
    if fmt == "float32":
        wavfile.write(path, wave.sample_rate, wave.samples.astype(np.float32))
    elif fmt == "pcm16":
        hi = 1.0 - 1.0 / PCM16_SCALE
        if np.any(wave.samples > hi) or np.any(wave.samples < -1.0):
            warnings.warn(f"samples outside [-1, {hi:.6f}] clipped while writing {path}")
        clipped = np.clip(wave.samples, -1.0, hi)
        pcm = np.round(clipped * PCM16_SCALE).astype(np.int16)
        wavfile.write(path, wave.sample_rate, pcm)
    else:
        raise ValueError(f"unknown format {fmt!r} (want 'pcm16' or 'float32')")


def synth_corpus(n: int, seed: int, out_dir: str | os.PathLike, sample_rate: int = 48000) -> list[str]:
    """Generate n deterministic 1-2 s harmonic-plus-noise WAV files at 48 kHz.

    Each file: a harmonic source with f0 in [80, 400] Hz, partials up to
    24 kHz with 1/h amplitude decay, a slow amplitude envelope, and a few
    band-limited high-frequency noise bursts. A stand-in for real speech at
    desk scale; every file has energy above 12 kHz.
    """
    if n < 1:
        raise ValueError(f"need n >= 1 files, got {n}")
    out_dir = os.fspath(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for i in range(n):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(i,)))
        dur = rng.uniform(1.0, 2.0)
        num = int(round(dur * sample_rate))
        t = np.arange(num) / sample_rate
        f0 = rng.uniform(80.0, 400.0)
        num_harmonics = int(24000.0 // f0)
        x = np.zeros(num)
        for h in range(1, num_harmonics + 1):
            phase = rng.uniform(0.0, 2.0 * np.pi)
            x += np.sin(2.0 * np.pi * h * f0 * t + phase) / h
        # slow 2-6 Hz amplitude envelope, kept strictly positive
        env_f = rng.uniform(2.0, 6.0)
        env = 0.6 + 0.4 * np.sin(2.0 * np.pi * env_f * t + rng.uniform(0, 2 * np.pi))
        x *= env
        x += _noise_bursts(rng, num, sample_rate)
        x *= 0.9 / np.max(np.abs(x))
        path = os.path.join(out_dir, f"synth_{i:04d}.wav")
        write_wav(path, Waveform(samples=x, sample_rate=sample_rate), fmt="float32")
        paths.append(path)
    return paths


def _noise_bursts(rng: np.random.Generator, num: int, sample_rate: int) -> np.ndarray:
    """A few fricative-like bursts of 10-20 kHz band-limited noise."""
    from scipy.signal import firwin, fftconvolve

    out = np.zeros(num)
    taps = firwin(255, [10000.0, 20000.0], pass_zero=False, fs=sample_rate)
    for _ in range(rng.integers(2, 5)):
        length = int(rng.uniform(0.03, 0.10) * sample_rate)
        start = rng.integers(0, max(num - length, 1))
        burst = fftconvolve(rng.standard_normal(length), taps, mode="same")
        burst *= np.hanning(length)
        out[start : start + length] += 0.25 * burst
    return out
