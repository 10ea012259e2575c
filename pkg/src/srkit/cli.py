"""Command line front door.

One subcommand per workflow: corpus synthesis, transform checks, degradation,
band geometry, LSD scoring, and the train/infer/eval loop. Each handler is a
thin shim over the library so everything here stays scriptable from Python.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from .bands import layout
from .degrade import DEFAULT_RATE_GRID, DegradeSpec, lowpass_resample, random_degrade
from .mdct import DEFAULT_GAIN, compress, expand, imdct, kbd_window, mdct
from .metrics import lsd_corpus, lsd_files
from .signal_io import read_wav, synth_corpus, write_wav
from .trainer import TrainConfig, eval_model, infer, train


def _cmd_synth_corpus(args: argparse.Namespace) -> int:
    paths = synth_corpus(args.n, args.seed, args.out)
    print(f"wrote {len(paths)} files to {args.out}")
    return 0


def _cmd_mdct_roundtrip(args: argparse.Namespace) -> int:
    wave = read_wav(args.input)
    window = kbd_window(1024, 6.0)
    spec = compress(mdct(wave, window), gain=args.gain)
    recon = imdct(expand(spec, gain=args.gain), window)
    err = float(np.max(np.abs(recon.samples - wave.samples)))
    print(f"max-abs roundtrip error: {err:.6e}")
    return 0


def _cmd_degrade(args: argparse.Namespace) -> int:
    wave = read_wav(args.input)
    if args.random:
        rng = np.random.default_rng(args.seed)
        out, rate = random_degrade(wave, rng)
        print(f"rate drawn from grid: {rate}")
    else:
        if args.rate is None:
            print("error: --rate is required unless --random is given", file=sys.stderr)
            return 2
        out = lowpass_resample(wave, DegradeSpec(target_rate=args.rate))
    write_wav(args.output, out)
    return 0


def _cmd_bands(args: argparse.Namespace) -> int:
    lay = layout(args.lr, args.hr, num_bins=args.k, num_bands=args.num, min_bins=args.min_bins)
    rows = lay.describe()
    print(f"{'head':<8}{'bin_lo':>8}{'bin_hi':>8}{'hz_lo':>12}{'hz_hi':>12}")
    for r in rows:
        print(f"{r['head']:<8}{r['bin_lo']:>8}{r['bin_hi']:>8}{r['hz_lo']:>12.1f}{r['hz_hi']:>12.1f}")
    print()
    print("head,bin_lo,bin_hi,hz_lo,hz_hi")
    for r in rows:
        print(f"{r['head']},{r['bin_lo']},{r['bin_hi']},{r['hz_lo']:.3f},{r['hz_hi']:.3f}")
    return 0


def _cmd_lsd(args: argparse.Namespace) -> int:
    print(f"{lsd_files(args.ref, args.est):.4f}")
    return 0


def _cmd_lsd_corpus(args: argparse.Namespace) -> int:
    rows = lsd_corpus(args.ref_dir, args.est_dir)
    mean = float(np.mean([v for _, v in rows]))
    with open(args.csv, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["file", "lsd"])
        for name, val in rows:
            writer.writerow([name, f"{val:.6f}"])
        writer.writerow(["mean", f"{mean:.6f}"])
    print(f"mean LSD over {len(rows)} files: {mean:.4f}  (per-file table: {args.csv})")
    return 0


def _cmd_train(args: argparse.Namespace) -> int:
    cfg = TrainConfig.from_json(args.config)
    model_path = train(cfg, resume=args.resume)
    print(f"model: {model_path}")
    print(f"telemetry: {Path(cfg.ckpt_dir) / 'train_log.csv'}")
    return 0


def _cmd_infer(args: argparse.Namespace) -> int:
    out = infer(args.ckpt, args.input, args.output)
    print(f"wrote {args.output} ({out.duration:.2f}s @ {out.sample_rate} Hz)")
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    rates = tuple(int(r) for r in args.rates.split(","))
    report = eval_model(args.ckpt, args.ref_dir, rates=rates, passthrough=args.passthrough)
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["file", "rate", "lsd"])
            for name, rate, val in report["per_file"]:
                writer.writerow([name, rate, f"{val:.6f}"])
    for rate in rates:
        print(f"{rate:>6} Hz  LSD {report['per_rate'][rate]:.4f}")
    print(f"average    LSD {report['average']:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="srkit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-corpus", help="generate a synthetic wav corpus")
    p.add_argument("--n", type=int, required=True, help="number of files")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_synth_corpus)

    p = sub.add_parser("mdct-roundtrip", help="analysis/synthesis error for a wav file")
    p.add_argument("input", metavar="in.wav")
    p.add_argument("--gain", type=float, default=DEFAULT_GAIN)
    p.set_defaults(func=_cmd_mdct_roundtrip)

    p = sub.add_parser("degrade", help="bandlimit a wav file")
    p.add_argument("input", metavar="in.wav")
    p.add_argument("output", metavar="out.wav")
    p.add_argument("--rate", type=int, help="target sample rate in Hz")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--random", action="store_true",
                   help=f"draw the rate from the grid {DEFAULT_RATE_GRID}")
    p.set_defaults(func=_cmd_degrade)

    p = sub.add_parser("bands", help="print discriminator band geometry")
    p.add_argument("--lr", type=int, required=True, help="low sample rate (Hz)")
    p.add_argument("--hr", type=int, required=True, help="high sample rate (Hz)")
    p.add_argument("--k", type=int, default=512, help="spectrum bins per frame")
    p.add_argument("--num", type=int, default=4, help="max high-band count")
    p.add_argument("--min-bins", type=int, default=32)
    p.set_defaults(func=_cmd_bands)

    p = sub.add_parser("lsd", help="log-spectral distance between two wavs")
    p.add_argument("ref", metavar="ref.wav")
    p.add_argument("est", metavar="est.wav")
    p.set_defaults(func=_cmd_lsd)

    p = sub.add_parser("lsd-corpus", help="per-file and mean LSD over a directory pair")
    p.add_argument("--ref-dir", required=True)
    p.add_argument("--est-dir", required=True)
    p.add_argument("--csv", required=True, help="output table path")
    p.set_defaults(func=_cmd_lsd_corpus)

    p = sub.add_parser("train", help="run the training loop")
    p.add_argument("--config", required=True, help="TrainConfig JSON path")
    p.add_argument("--resume", help="training state checkpoint to continue from")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("infer", help="super-resolve one wav file")
    p.add_argument("--ckpt", required=True, help="model checkpoint (.bin with .json sidecar)")
    p.add_argument("--in", dest="input", required=True, metavar="a.wav")
    p.add_argument("--out", dest="output", required=True, metavar="b.wav")
    p.set_defaults(func=_cmd_infer)

    p = sub.add_parser("eval", help="LSD table over degradation rates")
    p.add_argument("--ckpt", help="model checkpoint; omit for --passthrough")
    p.add_argument("--ref-dir", required=True)
    p.add_argument("--rates", default="4000,8000,16000,24000",
                   help="comma-separated target rates")
    p.add_argument("--csv", help="optional per-file output table")
    p.add_argument("--passthrough", action="store_true",
                   help="score the resample-only pipeline instead of a model")
    p.set_defaults(func=_cmd_eval)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
