"""srkit: MDCT-domain speech super-resolution toolkit.

Vocoder-free bandwidth extension working on KBD-windowed MDCT
coefficients: transform front-end with arcsinh companding, on-the-fly
bandwidth degradation, high-band discriminator geometry, the full GAN
loss stack, log-spectral distance evaluation, and a deterministic
desk-scale training loop built on a small reverse-mode autodiff.

The transforms live in the ``srkit.mdct`` submodule (``srkit.mdct.mdct``,
``srkit.mdct.imdct``); the bare function names are not re-exported here so
the submodule stays importable, the same convention as ``numpy.fft``.
"""

__version__ = "0.1.0"

from .signal_io import FrameGrid, Waveform, read_wav, write_wav
from .mdct import KbdWindow, MdctSpectrogram, compress, expand, kbd_window
from .bands import BandLayout, layout
from .metrics import MagSpectrogram, lsd, lsd_files, stft_mag

__all__ = [
    "BandLayout",
    "FrameGrid",
    "KbdWindow",
    "MagSpectrogram",
    "MdctSpectrogram",
    "Waveform",
    "compress",
    "expand",
    "kbd_window",
    "layout",
    "lsd",
    "lsd_files",
    "read_wav",
    "stft_mag",
    "write_wav",
]
