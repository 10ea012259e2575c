"""Training losses and their combination schedule.

Adversarial terms use the least-squares GAN form with real/fake targets
1/0. Expectations are arithmetic means over batch and elements; multiple
discriminator heads are summed. The sparse-aware spectral loss soft-gates
the L1 data term per coefficient by how far the reference magnitude sits
above its per-bin 0.8-quantile, pushing everything below toward zero. The
waveform term is a multi-resolution STFT loss (spectral convergence plus
log-magnitude L1). Adversarial weights warm up linearly from zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import get_window
from scipy.special import expit

from . import autodiff as ad
from .autodiff import Tensor

STFT_RESOLUTIONS = ((512, 50, 240), (1024, 120, 600), (2048, 240, 1200))
_MAG_EPS_SQ = 1e-24  # inside the sqrt, keeps |X| differentiable at 0
_LOG_FLOOR = 1e-10


@dataclass(frozen=True)
class LossWeights:
    lambda_wav_adv: float = 0.3
    lambda_spec_adv: float = 0.7
    lambda_wav: float = 5.0
    lambda_feat: float = 3.0
    lambda_c: float = 1.0
    lambda_s: float = 0.25
    warmup_steps: int = 20_000

    def __post_init__(self) -> None:
        vals = (
            self.lambda_wav_adv,
            self.lambda_spec_adv,
            self.lambda_wav,
            self.lambda_feat,
            self.lambda_c,
            self.lambda_s,
            self.warmup_steps,
        )
        if any(v < 0 for v in vals):
            raise ValueError("loss weights must be nonnegative")


@dataclass(frozen=True)
class SparseParams:
    quantile: float = 0.8
    alpha: float = 10.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.quantile <= 1.0:
            raise ValueError("quantile must lie in [0, 1]")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")


def lsgan_d(real_logits: list[Tensor], fake_logits: list[Tensor]) -> Tensor:
    """L_D = sum over heads of E[(1 - D(real))^2] + E[D(fake)^2]."""
    if not real_logits or len(real_logits) != len(fake_logits):
        raise ValueError("need matching nonempty real/fake logit lists")
    total = None
    for r, f in zip(real_logits, fake_logits):
        term = ad.add(
            ad.mean(ad.power(ad.sub(Tensor(1.0), r), 2.0)),
            ad.mean(ad.power(f, 2.0)),
        )
        total = term if total is None else ad.add(total, term)
    return total


def lsgan_g(fake_logits: list[Tensor]) -> Tensor:
    """L_G = sum over heads of E[(1 - D(fake))^2]."""
    if not fake_logits:
        raise ValueError("need at least one head")
    total = None
    for f in fake_logits:
        term = ad.mean(ad.power(ad.sub(Tensor(1.0), f), 2.0))
        total = term if total is None else ad.add(total, term)
    return total


def feature_matching(
    real_feats: list[list[Tensor]], fake_feats: list[list[Tensor]]
) -> Tensor:
    """Sum over discriminators and layers of mean |real - fake|."""
    if not real_feats or len(real_feats) != len(fake_feats):
        raise ValueError("feature structures must match and be nonempty")
    total = None
    for rf, ff in zip(real_feats, fake_feats):
        if len(rf) != len(ff):
            raise ValueError("per-head layer counts differ")
        for r, f in zip(rf, ff):
            if r.shape != f.shape:
                raise ValueError(f"feature shape mismatch {r.shape} vs {f.shape}")
            term = ad.mean(ad.abs_(ad.sub(r, f)))
            total = term if total is None else ad.add(total, term)
    return total


def sparse_weights(
    s_hr: np.ndarray, params: SparseParams = SparseParams(), tau: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Soft gates (w_c, w_s = 1 - w_c) from the reference spectrogram.

    tau is the per-utterance, per-bin quantile of |S_hr| over time frames
    (linear interpolation between order statistics); pass tau to override.
    The sigmoid argument is clamped to +-30, which changes nothing beyond
    1e-13 but avoids overflow warnings.
    """
    mag = np.abs(s_hr)
    if tau is None:
        tau = np.quantile(mag, params.quantile, axis=-2, keepdims=True)
    w_c = expit(np.clip((mag - tau) * params.alpha, -30.0, 30.0))
    return w_c, 1.0 - w_c


def sparse_aware(
    s_hr: np.ndarray | Tensor,
    s_hat: Tensor,
    params: SparseParams = SparseParams(),
    lambda_c: float = 1.0,
    lambda_s: float = 0.25,
    tau: np.ndarray | None = None,
) -> Tensor:
    """mean(lambda_c * w_c * |S_hr - S_hat| + lambda_s * w_s * |S_hat|).

    The reference and the gates are constants; gradients flow only through
    the prediction.
    """
    ref = s_hr.data if isinstance(s_hr, Tensor) else np.asarray(s_hr, dtype=np.float64)
    if ref.shape != s_hat.shape:
        raise ValueError(f"shape mismatch {ref.shape} vs {s_hat.shape}")
    w_c, w_s = sparse_weights(ref, params, tau)
    data_term = ad.mul(Tensor(lambda_c * w_c), ad.abs_(ad.sub(Tensor(ref), s_hat)))
    sparse_term = ad.mul(Tensor(lambda_s * w_s), ad.abs_(s_hat))
    return ad.mean(ad.add(data_term, sparse_term))


def _stft_mag_t(x: Tensor, fft_size: int, hop: int, win_len: int) -> Tensor:
    """Differentiable magnitude STFT: frame, window, zero-pad, rfft, |.|."""
    window = get_window("hann", win_len)
    frames = ad.frame(x, win_len, hop)
    frames = ad.mul(frames, Tensor(window))
    if fft_size > win_len:
        padw = [(0, 0)] * (frames.ndim - 1) + [(0, fft_size - win_len)]
        frames = ad.pad(frames, padw)
    spec = ad.rfft(frames)  # (..., nf, 2, F)
    power = ad.sum_(ad.mul(spec, spec), axis=-2)
    return ad.power(ad.add(power, Tensor(_MAG_EPS_SQ)), 0.5)


def stft_loss_terms(
    x: Tensor, x_hat: Tensor, fft_size: int, hop: int, win_len: int
) -> tuple[Tensor, Tensor]:
    """(spectral convergence, log-magnitude L1) at one resolution."""
    if x.shape != x_hat.shape:
        raise ValueError("signals must have equal length")
    if x.shape[-1] < win_len:
        raise ValueError(f"signal shorter than window {win_len}")
    mag_ref = _stft_mag_t(x, fft_size, hop, win_len)
    mag_est = _stft_mag_t(x_hat, fft_size, hop, win_len)
    diff = ad.sub(mag_ref, mag_est)
    num = ad.power(ad.sum_(ad.mul(diff, diff)), 0.5)
    den = ad.power(ad.sum_(ad.mul(mag_ref, mag_ref)), 0.5)
    sc = ad.div(num, ad.add(den, Tensor(1e-12)))
    log_l1 = ad.mean(
        ad.abs_(
            ad.sub(
                ad.log(ad.add(mag_ref, Tensor(_LOG_FLOOR))),
                ad.log(ad.add(mag_est, Tensor(_LOG_FLOOR))),
            )
        )
    )
    return sc, log_l1


def multires_stft_loss(
    x: Tensor, x_hat: Tensor, resolutions=STFT_RESOLUTIONS
) -> Tensor:
    """Sum over resolutions of spectral convergence + log-magnitude L1."""
    total = None
    for fft_size, hop, win_len in resolutions:
        sc, log_l1 = stft_loss_terms(x, x_hat, fft_size, hop, win_len)
        term = ad.add(sc, log_l1)
        total = term if total is None else ad.add(total, term)
    return total


def warmup_weights(step: int, weights: LossWeights = LossWeights()) -> tuple[float, float]:
    """Linear ramp from (0,0) to the adversarial targets, clamped after."""
    if step < 0:
        raise ValueError("step must be nonnegative")
    ramp = 1.0 if weights.warmup_steps == 0 else min(step / weights.warmup_steps, 1.0)
    return ramp * weights.lambda_wav_adv, ramp * weights.lambda_spec_adv


def total_g(
    adv_wav: Tensor,
    adv_spec: Tensor,
    wav_recon: Tensor,
    feat: Tensor,
    sparse: Tensor,
    step: int,
    weights: LossWeights = LossWeights(),
) -> Tensor:
    lw, ls = warmup_weights(step, weights)
    out = ad.add(
        ad.add(ad.mul(Tensor(lw), adv_wav), ad.mul(Tensor(ls), adv_spec)),
        ad.add(
            ad.mul(Tensor(weights.lambda_wav), wav_recon),
            ad.mul(Tensor(weights.lambda_feat), feat),
        ),
    )
    return ad.add(out, sparse)


def total_d(adv_wav: Tensor, adv_spec: Tensor) -> Tensor:
    return ad.add(adv_wav, adv_spec)


@dataclass(frozen=True)
class LossReport:
    """Scalar loss values for one training step, as logged to telemetry."""

    step: int
    adv_wav_g: float
    adv_spec_g: float
    adv_wav_d: float
    adv_spec_d: float
    feat: float
    sparse: float
    wav_recon: float
    total_g: float
    total_d: float

    CSV_FIELDS = (
        "step",
        "adv_wav_g",
        "adv_spec_g",
        "adv_wav_d",
        "adv_spec_d",
        "feat",
        "sparse",
        "wav_recon",
        "total_g",
        "total_d",
    )

    def verify_totals(self, weights: LossWeights, atol: float = 0.0) -> None:
        """Recompute the weighted sums; raise if they do not match."""
        lw, ls = warmup_weights(self.step, weights)
        # same association order as total_g so the check can be exact
        tg = (
            (lw * self.adv_wav_g + ls * self.adv_spec_g)
            + (weights.lambda_wav * self.wav_recon + weights.lambda_feat * self.feat)
        ) + self.sparse
        td = self.adv_wav_d + self.adv_spec_d
        if abs(tg - self.total_g) > atol or abs(td - self.total_d) > atol:
            raise AssertionError(
                f"totals drifted: total_g {self.total_g} vs {tg}, "
                f"total_d {self.total_d} vs {td}"
            )

    def csv_values(self) -> list[str]:
        return [
            repr(getattr(self, name)) if name != "step" else str(self.step)
            for name in self.CSV_FIELDS
        ]
