"""High-band discriminator geometry over the MDCT bin grid.

The upsampling boundary f_lo = (lr_sr/hr_sr) * f_hi with f_hi = hr_sr/2
splits the spectrum into an intact low band and an added band [f_lo, f_hi)
that must be hallucinated. The added band is divided into contiguous
sub-bands of uniform width in Hz (equal bin count, within one bin), each at
least `min_bins` wide; the band count is reduced when the added band is too
narrow. A single full-band range is always present.
"""

from __future__ import annotations

from dataclasses import dataclass

DEFAULT_NUM_BANDS = 4
DEFAULT_MIN_BINS = 32


@dataclass(frozen=True)
class BandLayout:
    """Bin ranges for the high-band heads plus the full-band head."""

    lr_sr: int
    hr_sr: int
    f_lo: float
    f_hi: float
    bands: tuple[tuple[int, int], ...]
    full_band: tuple[int, int]
    num_bins: int

    @property
    def first_high_bin(self) -> int:
        return self.bands[0][0] if self.bands else self.num_bins

    def describe(self) -> list[dict]:
        """Rows for the CLI table: one per head, full band last."""
        sr, k = self.hr_sr, self.num_bins
        rows = []
        for i, (lo, hi) in enumerate(self.bands):
            rows.append(
                {
                    "head": f"band{i}",
                    "bin_lo": lo,
                    "bin_hi": hi,
                    "hz_lo": (lo + 0.5) * sr / (2 * k),
                    "hz_hi": (hi - 0.5) * sr / (2 * k),
                }
            )
        lo, hi = self.full_band
        rows.append(
            {
                "head": "full",
                "bin_lo": lo,
                "bin_hi": hi,
                "hz_lo": (lo + 0.5) * sr / (2 * k),
                "hz_hi": (hi - 0.5) * sr / (2 * k),
            }
        )
        return rows


def layout(
    lr_sr: int,
    hr_sr: int,
    num_bins: int = 512,
    num_bands: int = DEFAULT_NUM_BANDS,
    min_bins: int = DEFAULT_MIN_BINS,
) -> BandLayout:
    """Compute the band geometry for an lr_sr -> hr_sr extension task.

    The first high bin is the smallest k whose center (k+1/2)*hr_sr/(2K)
    reaches f_lo. Sub-band widths differ by at most one bin, with the wider
    bands placed highest. If even a single band cannot reach min_bins the
    band list is empty and only the full-band head remains.
    """
    if lr_sr <= 0 or hr_sr <= 0:
        raise ValueError("sample rates must be positive")
    if lr_sr > hr_sr:
        raise ValueError(f"lr_sr {lr_sr} exceeds hr_sr {hr_sr}")
    if num_bins < 1 or num_bands < 1 or min_bins < 1:
        raise ValueError("num_bins, num_bands and min_bins must be >= 1")

    f_hi = hr_sr / 2.0
    f_lo = (lr_sr / hr_sr) * f_hi
    bin_hz = hr_sr / (2.0 * num_bins)
    # smallest k with (k + 0.5) * bin_hz >= f_lo
    first = max(0, int(-(-(f_lo / bin_hz - 0.5) // 1)))
    width = num_bins - first

    effective = min(num_bands, width // min_bins)
    bands: list[tuple[int, int]] = []
    if effective >= 1:
        base, rem = divmod(width, effective)
        lo = first
        for i in range(effective):
            w = base + (1 if i >= effective - rem else 0)
            bands.append((lo, lo + w))
            lo += w
    return BandLayout(
        lr_sr=lr_sr,
        hr_sr=hr_sr,
        f_lo=f_lo,
        f_hi=f_hi,
        bands=tuple(bands),
        full_band=(0, num_bins),
        num_bins=num_bins,
    )
