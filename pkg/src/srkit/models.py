"""Network definitions: Swin U-Net generator and the three discriminators.

The generator treats a companded T x K spectrogram as a one-channel image
(time as height, frequency as width). Encoder stages alternate residual
Swin transformer blocks with patch merging; the decoder mirrors them with
patch expansion and skip concatenation. The final convolution is zero
initialized so, through the global residual, the untrained generator is an
exact identity map.

Discriminators follow the usual waveform GAN recipe: a multi-period bank
reshaping the signal into period-strided 2-D maps, a multi-scale bank on
average-pooled copies, and a spectrogram bank with one PatchGAN head per
high band plus a full-band head. Every head returns its intermediate
activations for feature matching.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .bands import BandLayout


class Module:
    """Parameter container with recursive dotted-name collection."""

    def parameters(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for name, val in vars(self).items():
            if isinstance(val, Tensor):
                if val.requires_grad:
                    out[name] = val
            elif isinstance(val, Module):
                for k, v in val.parameters().items():
                    out[f"{name}.{k}"] = v
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        for k, v in item.parameters().items():
                            out[f"{name}.{i}.{k}"] = v
        return out

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {k: p.data for k, p in self.parameters().items()}

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        params = self.parameters()
        missing = sorted(set(params) - set(arrays))
        extra = sorted(set(arrays) - set(params))
        if missing or extra:
            raise ValueError(
                f"checkpoint/model mismatch; missing={missing[:4]} extra={extra[:4]}"
            )
        for k, p in params.items():
            a = np.asarray(arrays[k], dtype=np.float64)
            if a.shape != p.data.shape:
                raise ValueError(
                    f"shape mismatch for {k}: checkpoint {a.shape} vs model {p.data.shape}"
                )
            p.data = a.copy()


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, std: float = 0.02):
        self.w = Tensor(std * rng.standard_normal((d_in, d_out)), requires_grad=True)
        self.b = Tensor(np.zeros(d_out), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return ad.add(ad.matmul(x, self.w), self.b)


class LayerNorm(Module):
    def __init__(self, dim: int):
        self.gamma = Tensor(np.ones(dim), requires_grad=True)
        self.beta = Tensor(np.zeros(dim), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return ad.layer_norm(x, self.gamma, self.beta)


class Conv2d(Module):
    """NCHW convolution layer; He-initialized unless zero_init."""

    def __init__(
        self,
        c_in: int,
        c_out: int,
        kernel: tuple[int, int],
        rng: np.random.Generator,
        stride: tuple[int, int] = (1, 1),
        padding: tuple[int, int] | None = None,
        zero_init: bool = False,
    ):
        kh, kw = kernel
        fan_in = c_in * kh * kw
        if zero_init:
            w = np.zeros((c_out, c_in, kh, kw))
        else:
            w = np.sqrt(2.0 / fan_in) * rng.standard_normal((c_out, c_in, kh, kw))
        self.w = Tensor(w, requires_grad=True)
        self.b = Tensor(np.zeros(c_out), requires_grad=True)
        self.stride = stride
        self.padding = padding if padding is not None else (kh // 2, kw // 2)

    def __call__(self, x: Tensor) -> Tensor:
        out = ad.conv2d(x, self.w, self.stride, self.padding)
        return ad.add(out, ad.reshape(self.b, (1, self.b.size, 1, 1)))


class Conv1d(Module):
    def __init__(
        self,
        c_in: int,
        c_out: int,
        kernel: int,
        rng: np.random.Generator,
        stride: int = 1,
        padding: int | None = None,
    ):
        fan_in = c_in * kernel
        self.w = Tensor(
            np.sqrt(2.0 / fan_in) * rng.standard_normal((c_out, c_in, kernel)),
            requires_grad=True,
        )
        self.b = Tensor(np.zeros(c_out), requires_grad=True)
        self.stride = stride
        self.padding = padding if padding is not None else kernel // 2

    def __call__(self, x: Tensor) -> Tensor:
        out = ad.conv1d(x, self.w, self.stride, self.padding)
        return ad.add(out, ad.reshape(self.b, (1, self.b.size, 1)))


# ---------------------------------------------------------------------------
# windowed attention


def window_partition(x: Tensor, window: int) -> Tensor:
    """(B,H,W,C) -> (B*nH*nW, window*window, C); H, W must divide by window."""
    B, H, W, C = x.shape
    if H % window or W % window:
        raise ValueError(f"map {H}x{W} not divisible by window {window}")
    x = ad.reshape(x, (B, H // window, window, W // window, window, C))
    x = ad.transpose(x, (0, 1, 3, 2, 4, 5))
    return ad.reshape(x, (-1, window * window, C))


def window_reverse(windows: Tensor, window: int, H: int, W: int) -> Tensor:
    """Inverse of window_partition back to (B,H,W,C)."""
    t = window * window
    n = (H // window) * (W // window)
    B = windows.shape[0] // n
    x = ad.reshape(windows, (B, H // window, W // window, window, window, -1))
    x = ad.transpose(x, (0, 1, 3, 2, 4, 5))
    return ad.reshape(x, (B, H, W, windows.shape[-1]))


_MASK_CACHE: dict[tuple[int, int, int, int], np.ndarray] = {}


def shift_attention_mask(H: int, W: int, window: int, shift: int) -> np.ndarray:
    """(nW, 1, t, t) additive mask: -1e9 across wrapped-region pairs, else 0.

    After a cyclic shift, pixels rolled in from the far side share windows
    with pixels they are not adjacent to; those pairs are blocked.
    """
    key = (H, W, window, shift)
    cached = _MASK_CACHE.get(key)
    if cached is not None:
        return cached
    img = np.zeros((H, W))
    region = 0
    spans = (slice(0, -window), slice(-window, -shift), slice(-shift, None))
    for hs in spans:
        for ws in spans:
            img[hs, ws] = region
            region += 1
    win = (
        img.reshape(H // window, window, W // window, window)
        .transpose(0, 2, 1, 3)
        .reshape(-1, window * window)
    )
    mask = np.where(win[:, None, :] != win[:, :, None], -1e9, 0.0)[:, None, :, :]
    _MASK_CACHE[key] = mask
    return mask


class WindowAttention(Module):
    """Multi-head self-attention within (optionally shifted) square windows.

    A learned additive bias per head over window positions stands in for
    the usual relative-position table; it starts at zero.
    """

    def __init__(self, dim: int, heads: int, window: int, rng: np.random.Generator):
        if dim % heads:
            raise ValueError(f"dim {dim} not divisible by heads {heads}")
        self.dim = dim
        self.heads = heads
        self.window = window
        self.qkv = Linear(dim, 3 * dim, rng)
        self.proj = Linear(dim, dim, rng)
        t = window * window
        self.bias = Tensor(np.zeros((heads, t, t)), requires_grad=True)

    def __call__(self, x: Tensor, shift: int = 0) -> Tensor:
        B, H, W, C = x.shape
        w, hds = self.window, self.heads
        dh = C // hds
        t = w * w
        if shift:
            x = ad.roll(x, (-shift, -shift), axis=(1, 2))
        xw = window_partition(x, w)  # (B*n, t, C)
        n = xw.shape[0] // B

        qkv = ad.reshape(self.qkv(xw), (B * n, t, 3, hds, dh))
        qkv = ad.transpose(qkv, (2, 0, 3, 1, 4))  # (3, B*n, heads, t, dh)
        q, k, v = qkv[0], qkv[1], qkv[2]

        # scale q, not the t*t logits: keeps one fewer large array alive
        q = ad.mul(q, Tensor(1.0 / np.sqrt(dh)))
        logits = ad.matmul(q, ad.transpose(k, (0, 1, 3, 2)))
        logits = ad.add(logits, self.bias)
        if shift:
            mask = Tensor(shift_attention_mask(H, W, w, shift))
            logits = ad.reshape(logits, (B, n, hds, t, t))
            logits = ad.add(logits, ad.reshape(mask, (1, n, 1, t, t)))
            logits = ad.reshape(logits, (B * n, hds, t, t))
        attn = ad.softmax(logits, axis=-1)

        out = ad.matmul(attn, v)  # (B*n, heads, t, dh)
        out = ad.reshape(ad.transpose(out, (0, 2, 1, 3)), (B * n, t, C))
        out = self.proj(out)
        out = window_reverse(out, w, H, W)
        if shift:
            out = ad.roll(out, (shift, shift), axis=(1, 2))
        return out


class SwinBlock(Module):
    """Pre-norm attention + MLP, each with a residual connection."""

    def __init__(
        self,
        dim: int,
        heads: int,
        window: int,
        shift: int,
        rng: np.random.Generator,
        mlp_ratio: float = 2.0,
    ):
        self.shift = shift
        self.norm1 = LayerNorm(dim)
        self.attn = WindowAttention(dim, heads, window, rng)
        self.norm2 = LayerNorm(dim)
        hidden = int(dim * mlp_ratio)
        self.fc1 = Linear(dim, hidden, rng)
        self.fc2 = Linear(hidden, dim, rng)

    def __call__(self, x: Tensor) -> Tensor:
        x = ad.add(x, self.attn(self.norm1(x), self.shift))
        y = self.fc2(ad.gelu(self.fc1(self.norm2(x))))
        return ad.add(x, y)


class Rstb(Module):
    """Residual group: shift-alternating Swin blocks, a 3x3 conv, residual."""

    def __init__(
        self,
        dim: int,
        depth: int,
        heads: int,
        window: int,
        rng: np.random.Generator,
        mlp_ratio: float = 2.0,
    ):
        self.blocks = [
            SwinBlock(dim, heads, window, 0 if i % 2 == 0 else window // 2, rng, mlp_ratio)
            for i in range(depth)
        ]
        self.conv = Conv2d(dim, dim, (3, 3), rng)

    def __call__(self, x: Tensor) -> Tensor:
        y = x
        for block in self.blocks:
            y = block(y)
        y = ad.transpose(self.conv(ad.transpose(y, (0, 3, 1, 2))), (0, 2, 3, 1))
        return ad.add(x, y)


class PatchMerge(Module):
    """2x2 neighborhood concat then linear: (B,H,W,C) -> (B,H/2,W/2,2C)."""

    def __init__(self, dim: int, rng: np.random.Generator):
        self.reduce = Linear(4 * dim, 2 * dim, rng)

    def __call__(self, x: Tensor) -> Tensor:
        B, H, W, C = x.shape
        x = ad.reshape(x, (B, H // 2, 2, W // 2, 2, C))
        x = ad.transpose(x, (0, 1, 3, 2, 4, 5))
        x = ad.reshape(x, (B, H // 2, W // 2, 4 * C))
        return self.reduce(x)


class PatchExpand(Module):
    """Linear to 2C then pixel-shuffle: (B,H,W,C) -> (B,2H,2W,C/2)."""

    def __init__(self, dim: int, rng: np.random.Generator):
        self.expand = Linear(dim, 2 * dim, rng)

    def __call__(self, x: Tensor) -> Tensor:
        x = self.expand(x)
        B, H, W, C2 = x.shape
        c = C2 // 4
        x = ad.reshape(x, (B, H, W, 2, 2, c))
        x = ad.transpose(x, (0, 1, 3, 2, 4, 5))
        return ad.reshape(x, (B, 2 * H, 2 * W, c))


# ---------------------------------------------------------------------------
# generator


@dataclass(frozen=True)
class GeneratorConfig:
    """Shape of the U-Net; defaults are desk scale, larger variants are
    expressible by widening embed_dim/depths."""

    embed_dim: int = 32
    depths: tuple[int, ...] = (2, 2)
    heads: int = 4
    window_size: int = 8
    num_bins: int = 512
    mlp_ratio: float = 2.0
    bottleneck_depth: int = 0  # 0 means: reuse depths[-1]

    def __post_init__(self) -> None:
        if self.embed_dim % self.heads:
            raise ValueError("embed_dim must be divisible by heads")
        if not self.depths or any(d < 1 for d in self.depths):
            raise ValueError("depths must be nonempty positive counts")
        if self.window_size < 2 or self.window_size % 2:
            raise ValueError("window_size must be even and >= 2")
        object.__setattr__(self, "depths", tuple(self.depths))

    @property
    def num_stages(self) -> int:
        return len(self.depths)

    @property
    def pad_multiple(self) -> int:
        return self.window_size * (2**self.num_stages)

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2) + "\n")

    @classmethod
    def from_json(cls, path: str | Path) -> "GeneratorConfig":
        raw = json.loads(Path(path).read_text())
        raw["depths"] = tuple(raw["depths"])
        return cls(**raw)


class SwinUNetGenerator(Module):
    """U-Net over companded spectrograms with a global residual path."""

    def __init__(self, cfg: GeneratorConfig, rng: np.random.Generator):
        self.cfg = cfg
        C = cfg.embed_dim
        self.embed = Conv2d(1, C, (3, 3), rng)
        self.enc = []
        self.merges = []
        dim = C
        for d in cfg.depths:
            self.enc.append(Rstb(dim, d, cfg.heads, cfg.window_size, rng, cfg.mlp_ratio))
            self.merges.append(PatchMerge(dim, rng))
            dim *= 2
        bdepth = cfg.bottleneck_depth or cfg.depths[-1]
        self.bottleneck = Rstb(dim, bdepth, cfg.heads, cfg.window_size, rng, cfg.mlp_ratio)
        self.expands = []
        self.fuses = []
        self.dec = []
        for d in reversed(cfg.depths):
            self.expands.append(PatchExpand(dim, rng))
            dim //= 2
            self.fuses.append(Linear(2 * dim, dim, rng))
            self.dec.append(Rstb(dim, d, cfg.heads, cfg.window_size, rng, cfg.mlp_ratio))
        self.head = Conv2d(C, 1, (3, 3), rng, zero_init=True)

    def __call__(self, s_in: Tensor) -> Tensor:
        squeeze = s_in.ndim == 2
        if squeeze:
            s_in = ad.reshape(s_in, (1,) + s_in.shape)
        B, T, K = s_in.shape
        if K != self.cfg.num_bins:
            raise ValueError(f"expected {self.cfg.num_bins} bins, got {K}")
        m = self.cfg.pad_multiple
        pt, pk = -T % m, -K % m
        x = ad.pad(s_in, ((0, 0), (0, pt), (0, pk)))
        x = ad.reshape(x, (B, 1, T + pt, K + pk))
        x = ad.transpose(self.embed(x), (0, 2, 3, 1))

        skips = []
        for rstb, merge in zip(self.enc, self.merges):
            x = rstb(x)
            skips.append(x)
            x = merge(x)
        x = self.bottleneck(x)
        for expand, fuse, rstb, skip in zip(
            self.expands, self.fuses, self.dec, reversed(skips)
        ):
            x = expand(x)
            x = fuse(ad.concat([x, skip], axis=-1))
            x = rstb(x)

        x = self.head(ad.transpose(x, (0, 3, 1, 2)))
        x = ad.reshape(x, (B, T + pt, K + pk))[:, :T, :K]
        out = ad.add(x, s_in)
        return ad.reshape(out, (T, K)) if squeeze else out


# ---------------------------------------------------------------------------
# discriminators


@dataclass(frozen=True)
class DiscriminatorConfig:
    """Desk-scale head shapes; channel stacks widen per layer."""

    periods: tuple[int, ...] = (2, 3, 5, 7, 11)
    msd_scales: int = 3
    channels: tuple[int, ...] = (8, 16, 32)
    leaky_slope: float = 0.1


def period_fold(wave: Tensor, period: int) -> Tensor:
    """(B,T) -> (B,1,ceil(T/p),p): row i holds the p consecutive samples
    starting at i*p, so each column tracks one phase of the period."""
    B, T = wave.shape
    t_pad = -T % period
    x = ad.pad(wave, ((0, 0), (0, t_pad)))
    return ad.reshape(x, (B, 1, (T + t_pad) // period, period))


class PeriodHead(Module):
    """One MPD branch: fold to (B,1,T/p,p), convolve along time."""

    def __init__(self, period: int, channels: tuple[int, ...], slope: float, rng):
        self.period = period
        self.slope = slope
        self.convs = []
        c_prev = 1
        for c in channels:
            self.convs.append(
                Conv2d(c_prev, c, (5, 1), rng, stride=(3, 1), padding=(2, 0))
            )
            c_prev = c
        self.post = Conv2d(c_prev, 1, (3, 1), rng, padding=(1, 0))

    def __call__(self, wave: Tensor) -> tuple[Tensor, list[Tensor]]:
        x = period_fold(wave, self.period)
        feats = []
        for conv in self.convs:
            x = ad.leaky_relu(conv(x), self.slope)
            feats.append(x)
        return self.post(x), feats


class ScaleHead(Module):
    """One MSD branch: strided 1-D convs on a pooled copy of the wave."""

    def __init__(self, channels: tuple[int, ...], slope: float, rng):
        self.slope = slope
        self.convs = []
        c_prev = 1
        for c in channels:
            self.convs.append(Conv1d(c_prev, c, 15, rng, stride=4, padding=7))
            c_prev = c
        self.post = Conv1d(c_prev, 1, 3, rng, padding=1)

    def __call__(self, x: Tensor) -> tuple[Tensor, list[Tensor]]:
        feats = []
        for conv in self.convs:
            x = ad.leaky_relu(conv(x), self.slope)
            feats.append(x)
        return self.post(x), feats


class BandHead(Module):
    """PatchGAN over one bin range of a companded spectrogram."""

    def __init__(self, bin_range: tuple[int, int], channels, slope: float, rng):
        self.bin_range = bin_range
        self.slope = slope
        self.convs = []
        c_prev = 1
        for c in channels:
            self.convs.append(
                Conv2d(c_prev, c, (3, 3), rng, stride=(2, 2), padding=(1, 1))
            )
            c_prev = c
        self.post = Conv2d(c_prev, 1, (3, 3), rng, padding=(1, 1))

    def __call__(self, spec: Tensor) -> tuple[Tensor, list[Tensor]]:
        lo, hi = self.bin_range
        B, T, K = spec.shape
        x = ad.reshape(spec[:, :, lo:hi], (B, 1, T, hi - lo))
        feats = []
        for conv in self.convs:
            x = ad.leaky_relu(conv(x), self.slope)
            feats.append(x)
        return self.post(x), feats


class MultiPeriodDiscriminator(Module):
    def __init__(self, cfg: DiscriminatorConfig, rng):
        self.heads = [
            PeriodHead(p, cfg.channels, cfg.leaky_slope, rng) for p in cfg.periods
        ]

    def __call__(self, wave: Tensor) -> list[tuple[Tensor, list[Tensor]]]:
        if wave.ndim != 2 or wave.shape[1] < max(h.period for h in self.heads):
            raise ValueError("wave must be (B,T) with T >= largest period")
        return [head(wave) for head in self.heads]


class MultiScaleDiscriminator(Module):
    def __init__(self, cfg: DiscriminatorConfig, rng):
        self.heads = [
            ScaleHead(cfg.channels, cfg.leaky_slope, rng) for _ in range(cfg.msd_scales)
        ]

    def __call__(self, wave: Tensor) -> list[tuple[Tensor, list[Tensor]]]:
        if wave.ndim != 2 or wave.shape[1] < 4:
            raise ValueError("wave must be (B,T) with T >= 4")
        x = ad.reshape(wave, (wave.shape[0], 1, wave.shape[1]))
        out = []
        for head in self.heads:
            out.append(head(x))
            x = ad.avg_pool1d(x, 4, 2, 1)
        return out


class HighBandDiscriminator(Module):
    """Band-sliced PatchGAN heads plus one full-band head."""

    def __init__(self, band_layout: BandLayout, cfg: DiscriminatorConfig, rng):
        self.layout = band_layout
        self.band_heads = [
            BandHead(b, cfg.channels, cfg.leaky_slope, rng) for b in band_layout.bands
        ]
        self.full_head = BandHead(
            band_layout.full_band, cfg.channels, cfg.leaky_slope, rng
        )

    def __call__(self, spec: Tensor) -> list[tuple[Tensor, list[Tensor]]]:
        if spec.ndim != 3 or spec.shape[2] != self.layout.num_bins:
            raise ValueError(
                f"spectrogram bins {spec.shape} do not match layout K={self.layout.num_bins}"
            )
        out = [head(spec) for head in self.band_heads]
        out.append(self.full_head(spec))
        return out


class DiscriminatorSet(Module):
    """MPD + MSD on waveforms, high-band bank on companded spectrograms."""

    def __init__(self, band_layout: BandLayout, cfg: DiscriminatorConfig, rng):
        self.mpd = MultiPeriodDiscriminator(cfg, rng)
        self.msd = MultiScaleDiscriminator(cfg, rng)
        self.hbmbd = HighBandDiscriminator(band_layout, cfg, rng)

    def forward_wave(self, wave: Tensor) -> list[tuple[Tensor, list[Tensor]]]:
        return self.mpd(wave) + self.msd(wave)

    def forward_spec(self, spec: Tensor) -> list[tuple[Tensor, list[Tensor]]]:
        return self.hbmbd(spec)
