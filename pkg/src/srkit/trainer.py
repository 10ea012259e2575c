"""Deterministic training loop, inference pipeline, and model evaluation.

Each step draws its own rng stream from (seed, step index), so a resumed
run sees exactly the sample sequence an unbroken run would. Per step: crop
a batch, degrade it at a random grid rate, compand both sides' MDCTs, run
the generator, synthesize its waveform on the tape (basis matmul, window,
overlap-add), then take one discriminator step on detached fakes followed
by one generator step against the updated discriminators.

Training state (float64 weights, optimizer moments, step counter) is
checkpointed separately from float32 model snapshots so a resume replays
bit-identically.
"""

from __future__ import annotations

import json
import sys
import time
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import objectives as ob
from .autodiff import MODEL_MAGIC, STATE_MAGIC, Tensor, load_checkpoint, save_checkpoint
from .bands import layout
from .degrade import (
    DEFAULT_RATE_GRID,
    SOURCE_RATE,
    DegradeSpec,
    degrade_to_rate,
    random_crop,
    random_degrade,
    resample_to_source,
)
from .mdct import (
    DEFAULT_GAIN,
    LN10,
    compress,
    compress_values,
    cosine_basis,
    expand,
    imdct,
    kbd_window,
    mdct,
)
from .metrics import lsd_waves
from .models import (
    DiscriminatorConfig,
    DiscriminatorSet,
    GeneratorConfig,
    SwinUNetGenerator,
)
from .signal_io import Waveform, read_wav, write_wav

FRAME_LEN = 1024
HOP = FRAME_LEN // 2
KBD_ALPHA = 6.0


@dataclass(frozen=True)
class TrainConfig:
    """Run description; everything needed to reproduce a run bit-for-bit."""

    corpus_dir: str
    ckpt_dir: str
    seed: int = 0
    batch_size: int = 4
    segment_len: int = 48_460
    steps: int = 500
    lr_init: float = 2e-4
    lr_decay: float = 0.999
    rate_grid: tuple[int, ...] = DEFAULT_RATE_GRID
    model_config: str | None = None
    checkpoint_every: int = 100

    def __post_init__(self) -> None:
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.segment_len < FRAME_LEN:
            raise ValueError(f"segment_len must be >= {FRAME_LEN}")
        if self.batch_size < 1 or self.checkpoint_every < 1:
            raise ValueError("batch_size and checkpoint_every must be >= 1")
        if not self.rate_grid:
            raise ValueError("rate grid is empty")
        object.__setattr__(self, "rate_grid", tuple(int(r) for r in self.rate_grid))

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2) + "\n")

    @classmethod
    def from_json(cls, path: str | Path) -> "TrainConfig":
        raw = json.loads(Path(path).read_text())
        raw["rate_grid"] = tuple(raw.get("rate_grid", DEFAULT_RATE_GRID))
        return cls(**raw)


@dataclass(frozen=True)
class StepTrace:
    """Telemetry for one step. wall_ms is console-only; the CSV must be
    byte-identical across runs with the same seed."""

    report: ob.LossReport
    lr: float
    lambda_wav_adv: float
    lambda_spec_adv: float
    wall_ms: float

    CSV_FIELDS = ob.LossReport.CSV_FIELDS + ("lr", "lambda_wav_adv", "lambda_spec_adv")

    def csv_row(self) -> str:
        vals = self.report.csv_values() + [
            repr(self.lr),
            repr(self.lambda_wav_adv),
            repr(self.lambda_spec_adv),
        ]
        return ",".join(vals)


def _step_rng(seed: int, step: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(step,)))


class Trainer:
    def __init__(self, cfg: TrainConfig):
        self.cfg = cfg
        self.files = sorted(Path(cfg.corpus_dir).glob("*.wav"))
        if not self.files:
            raise ValueError(f"corpus empty: no wav files in {cfg.corpus_dir}")
        self.waves = [read_wav(p) for p in self.files]
        for w in self.waves:
            if w.sample_rate != SOURCE_RATE:
                raise ValueError(f"corpus must be {SOURCE_RATE} Hz")

        self.gen_cfg = (
            GeneratorConfig.from_json(cfg.model_config)
            if cfg.model_config
            else GeneratorConfig()
        )
        init_rng = np.random.default_rng(
            np.random.SeedSequence(entropy=cfg.seed, spawn_key=(0xC0DE,))
        )
        self.gen = SwinUNetGenerator(self.gen_cfg, init_rng)
        band_layout = layout(min(cfg.rate_grid), SOURCE_RATE, self.gen_cfg.num_bins)
        self.disc = DiscriminatorSet(band_layout, DiscriminatorConfig(), init_rng)
        self.opt_g = ad.AdamW(self.gen.parameters(), lr=cfg.lr_init)
        self.opt_d = ad.AdamW(self.disc.parameters(), lr=cfg.lr_init)
        self.weights = ob.LossWeights()
        self.next_step = 0

        self.window = kbd_window(FRAME_LEN, KBD_ALPHA)
        # synthesis operator folded into one matrix: coeffs @ basis -> frames
        basis = cosine_basis(FRAME_LEN)  # (L, K)
        self.synth = Tensor((2.0 / HOP) * basis.T * self.window.taps[None, :])

    # -- state ---------------------------------------------------------------

    def state_arrays(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {"step": np.float64(self.next_step)}
        for k, p in self.gen.parameters().items():
            out[f"gen.{k}"] = p.data
        for k, p in self.disc.parameters().items():
            out[f"disc.{k}"] = p.data
        for k, v in self.opt_g.state_arrays().items():
            out[f"optg.{k}"] = v
        for k, v in self.opt_d.state_arrays().items():
            out[f"optd.{k}"] = v
        return out

    def save_state(self, path: str | Path) -> None:
        save_checkpoint(path, self.state_arrays(), magic=STATE_MAGIC)

    def load_state(self, path: str | Path) -> None:
        arrays = load_checkpoint(path, magic=STATE_MAGIC)
        self.next_step = int(arrays["step"])
        self.gen.load_state_arrays(
            {k[4:]: v for k, v in arrays.items() if k.startswith("gen.")}
        )
        self.disc.load_state_arrays(
            {k[5:]: v for k, v in arrays.items() if k.startswith("disc.")}
        )
        self.opt_g.load_state_arrays(
            {k[5:]: v for k, v in arrays.items() if k.startswith("optg.")}
        )
        self.opt_d.load_state_arrays(
            {k[5:]: v for k, v in arrays.items() if k.startswith("optd.")}
        )

    def save_model(self, path: str | Path) -> None:
        save_checkpoint(path, self.gen.state_arrays(), magic=MODEL_MAGIC)
        self.gen_cfg.to_json(Path(path).with_suffix(".json"))

    # -- data ----------------------------------------------------------------

    def _make_batch(self, rng: np.random.Generator):
        """Crop, degrade, and analyze one batch; all arrays (B, ...)."""
        idx = rng.integers(0, len(self.waves), self.cfg.batch_size)
        hr_list, in_list = [], []
        for i in idx:
            hr = random_crop(self.waves[int(i)], self.cfg.segment_len, rng)
            lr48, _rate = random_degrade(hr, rng, self.cfg.rate_grid)
            hr_list.append(hr)
            in_list.append(lr48)
        s_hr = np.stack(
            [compress_values(mdct(w, self.window).coeffs) for w in hr_list]
        )
        s_in = np.stack(
            [compress_values(mdct(w, self.window).coeffs) for w in in_list]
        )
        x_hr = np.stack([w.samples for w in hr_list])
        return x_hr, s_hr, s_in

    # -- tape-domain synthesis -----------------------------------------------

    def _synth_wave(self, s_hat: Tensor) -> Tensor:
        """Companded coefficients -> waveform, differentiably."""
        y = ad.mul(s_hat, Tensor(LN10))
        lin = ad.mul(ad.sub(ad.exp(y), ad.exp(ad.neg(y))), Tensor(0.5 / DEFAULT_GAIN))
        frames = ad.matmul(lin, self.synth)  # (B, T, L)
        padded = ad.overlap_add(frames, HOP)
        return padded[:, HOP : HOP + self.cfg.segment_len]

    # -- the loop ------------------------------------------------------------

    def train_step(self, step: int) -> StepTrace:
        t0 = time.perf_counter()
        cfg = self.cfg
        rng = _step_rng(cfg.seed, step)
        x_hr, s_hr, s_in = self._make_batch(rng)

        epoch = step * cfg.batch_size // len(self.waves)
        lr = cfg.lr_init * cfg.lr_decay**epoch
        self.opt_g.lr = self.opt_d.lr = lr

        s_hat = self.gen(Tensor(s_in))
        x_hat = self._synth_wave(s_hat)

        # discriminator step on detached fakes
        self.opt_d.zero_grad()
        real_w = self.disc.forward_wave(Tensor(x_hr))
        fake_w = self.disc.forward_wave(x_hat.detach())
        real_s = self.disc.forward_spec(Tensor(s_hr))
        fake_s = self.disc.forward_spec(s_hat.detach())
        adv_wav_d = ob.lsgan_d([l for l, _ in real_w], [l for l, _ in fake_w])
        adv_spec_d = ob.lsgan_d([l for l, _ in real_s], [l for l, _ in fake_s])
        loss_d = ob.total_d(adv_wav_d, adv_spec_d)
        ad.backward(loss_d)
        self.opt_d.step()

        # generator step against the updated discriminators
        self.opt_g.zero_grad()
        with ad.no_grad():
            ref_w = self.disc.forward_wave(Tensor(x_hr))
            ref_s = self.disc.forward_spec(Tensor(s_hr))
        gen_w = self.disc.forward_wave(x_hat)
        gen_s = self.disc.forward_spec(s_hat)
        adv_wav_g = ob.lsgan_g([l for l, _ in gen_w])
        adv_spec_g = ob.lsgan_g([l for l, _ in gen_s])
        feat = ob.feature_matching(
            [f for _, f in ref_w] + [f for _, f in ref_s],
            [f for _, f in gen_w] + [f for _, f in gen_s],
        )
        wav_recon = ob.multires_stft_loss(Tensor(x_hr), x_hat)
        sparse = ob.sparse_aware(
            s_hr, s_hat, lambda_c=self.weights.lambda_c, lambda_s=self.weights.lambda_s
        )
        loss_g = ob.total_g(
            adv_wav_g, adv_spec_g, wav_recon, feat, sparse, step, self.weights
        )
        ad.backward(loss_g)
        self.opt_g.step()

        lam_w, lam_s = ob.warmup_weights(step, self.weights)
        report = ob.LossReport(
            step=step,
            adv_wav_g=adv_wav_g.item(),
            adv_spec_g=adv_spec_g.item(),
            adv_wav_d=adv_wav_d.item(),
            adv_spec_d=adv_spec_d.item(),
            feat=feat.item(),
            sparse=sparse.item(),
            wav_recon=wav_recon.item(),
            total_g=loss_g.item(),
            total_d=loss_d.item(),
        )
        report.verify_totals(self.weights, atol=0.0)
        return StepTrace(
            report=report,
            lr=lr,
            lambda_wav_adv=lam_w,
            lambda_spec_adv=lam_s,
            wall_ms=1e3 * (time.perf_counter() - t0),
        )

    def run(self, log_path: str | Path | None = None, quiet: bool = False) -> Path:
        """Train from self.next_step to cfg.steps; returns the model path."""
        cfg = self.cfg
        ckpt_dir = Path(cfg.ckpt_dir)
        ckpt_dir.mkdir(parents=True, exist_ok=True)
        log_path = Path(log_path) if log_path else ckpt_dir / "train_log.csv"
        model_path = ckpt_dir / "gen_final.srkt"
        state_path = ckpt_dir / "train_state.srks"

        with open(log_path, "w") as log:
            log.write(",".join(StepTrace.CSV_FIELDS) + "\n")
            for step in range(self.next_step, cfg.steps):
                try:
                    trace = self.train_step(step)
                except FloatingPointError as exc:
                    print(
                        f"aborting at step {step}: {exc}", file=sys.stderr, flush=True
                    )
                    raise
                log.write(trace.csv_row() + "\n")
                log.flush()
                self.next_step = step + 1
                if not quiet:
                    r = trace.report
                    print(
                        f"step {step:5d} lr {trace.lr:.3e} "
                        f"g {r.total_g:8.4f} d {r.total_d:8.4f} "
                        f"recon {r.wav_recon:7.4f} sparse {r.sparse:7.4f} "
                        f"({trace.wall_ms:.0f} ms)",
                        flush=True,
                    )
                if self.next_step % cfg.checkpoint_every == 0:
                    self.save_state(state_path)
                    self.save_model(model_path)
        self.save_state(state_path)
        self.save_model(model_path)
        return model_path


def train(cfg: TrainConfig, resume: str | Path | None = None, quiet: bool = False) -> Path:
    trainer = Trainer(cfg)
    if resume is not None:
        trainer.load_state(resume)
    return trainer.run(quiet=quiet)


# ---------------------------------------------------------------------------
# inference


def load_generator(ckpt_path: str | Path) -> SwinUNetGenerator:
    """Model snapshot + its JSON config sidecar -> ready generator."""
    ckpt_path = Path(ckpt_path)
    cfg_path = ckpt_path.with_suffix(".json")
    if not cfg_path.exists():
        raise FileNotFoundError(f"missing model config sidecar {cfg_path}")
    gen_cfg = GeneratorConfig.from_json(cfg_path)
    gen = SwinUNetGenerator(gen_cfg, np.random.default_rng(0))
    gen.load_state_arrays(load_checkpoint(ckpt_path))
    return gen


def super_resolve(gen: SwinUNetGenerator | None, wave: Waveform) -> Waveform:
    """Resample to 48 kHz, run the generator in the companded MDCT domain,
    and synthesize. gen=None is the passthrough (resample-only) path."""
    if not 4000 <= wave.sample_rate <= SOURCE_RATE:
        raise ValueError(f"input rate {wave.sample_rate} outside [4000, {SOURCE_RATE}]")
    wave48 = resample_to_source(wave)
    if gen is None:
        return wave48
    window = kbd_window(FRAME_LEN, KBD_ALPHA)
    spec = compress(mdct(wave48, window))
    with ad.no_grad():
        s_hat = gen(Tensor(spec.coeffs))
    return imdct(expand(replace(spec, coeffs=s_hat.data)), window)


def infer(ckpt_path: str | Path, in_path: str | Path, out_path: str | Path) -> Waveform:
    gen = load_generator(ckpt_path)
    out = super_resolve(gen, read_wav(in_path))
    write_wav(out_path, out)
    return out


# ---------------------------------------------------------------------------
# evaluation


def eval_model(
    ckpt_path: str | Path | None,
    ref_dir: str | Path,
    rates: tuple[int, ...] = (4000, 8000, 16000, 24000),
    passthrough: bool = False,
) -> dict:
    """Degrade each reference to each rate, super-resolve, score LSD.

    Returns {"per_rate": {rate: mean LSD}, "average": float,
    "per_file": [(name, rate, lsd), ...]}. passthrough (or ckpt=None)
    scores the resample-only pipeline, the untrained baseline.
    """
    refs = sorted(Path(ref_dir).glob("*.wav"))
    if not refs:
        raise ValueError(f"no wav files in {ref_dir}")
    gen = None if (passthrough or ckpt_path is None) else load_generator(ckpt_path)
    per_file: list[tuple[str, int, float]] = []
    per_rate: dict[int, float] = {}
    for rate in rates:
        vals = []
        for ref in refs:
            hr = read_wav(ref)
            lo = degrade_to_rate(hr, DegradeSpec(target_rate=int(rate)))
            est = super_resolve(gen, lo)
            vals.append(lsd_waves(hr, est))
            per_file.append((ref.name, int(rate), vals[-1]))
        per_rate[int(rate)] = float(np.mean(vals))
    return {
        "per_rate": per_rate,
        "average": float(np.mean(list(per_rate.values()))),
        "per_file": per_file,
    }
