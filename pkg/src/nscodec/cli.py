"""``nsc`` command line: train, encode, decode, eval, bench (plus a synthetic corpus helper)."""

from __future__ import annotations

import os

# Single-threaded BLAS keeps runs bit-reproducible; must precede the numpy import.
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

import argparse  # noqa: E402
import csv  # noqa: E402
import json  # noqa: E402
import logging  # noqa: E402
import sys  # noqa: E402
from dataclasses import replace  # noqa: E402
from pathlib import Path  # noqa: E402

from . import __version__  # noqa: E402
from .audio_io import list_wavs, load_normalized, read_wav, split_corpus, write_wav  # noqa: E402
from .codec import (REPORT_FIELDS, bench, decode_stream, encode_signal, evaluate_files,  # noqa: E402
                    full_scale_model, report_rows)
from .errors import CodecError  # noqa: E402
from .model import checkpoint_load, checkpoint_save  # noqa: E402
from .trainer import TrainConfig, Trainer, desk_config, load_windows  # noqa: E402

log = logging.getLogger("nscodec")


class UsageError(Exception):
    """Bad paths or arguments; exits with status 2."""


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    try:
        tmp.write_bytes(data)
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink()


def _existing_dir(path: str) -> Path:
    p = Path(path)
    if not p.is_dir():
        raise UsageError(f"corpus directory not found: {p}")
    return p


def _existing_file(path: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"file not found: {p}")
    return p


def _parse_split(text: str):
    try:
        parts = tuple(int(v) for v in text.split(","))
    except ValueError:
        parts = ()
    if len(parts) != 3 or min(parts) < 1:
        raise UsageError(f"--split expects three positive integers TRAIN,VAL,TEST, got {text!r}")
    return parts


def build_config(args) -> TrainConfig:
    cfg = desk_config() if args.desk_scale else TrainConfig()
    overrides = {"seed": args.seed, "target_bps": args.target_bps}
    for attr, key in (("channels", "channels"), ("blocks", "residual_blocks"),
                      ("epochs_stage1", "stage1_epochs"), ("epochs_stage2", "stage2_epochs"),
                      ("batch_size", "batch_size")):
        value = getattr(args, attr)
        if value is not None:
            if value < 1:
                raise UsageError(f"--{attr.replace('_', '-')} must be positive")
            overrides[key] = value
    if args.split:
        overrides["split"] = _parse_split(args.split)
    if args.target_bps <= 0:
        raise UsageError("--target-bps must be positive")
    return replace(cfg, **overrides)


def cmd_train(args) -> int:
    corpus = _existing_dir(args.corpus)
    cfg = build_config(args)
    out = Path(args.out)
    log_path = Path(args.log) if args.log else out.with_name(out.name + ".log.csv")
    split = split_corpus(corpus, cfg.split, cfg.seed)
    train = load_windows(split.train)
    val = load_windows(split.validation)
    log.info("training on %d windows, validating on %d", len(train), len(val))
    trainer = Trainer(cfg, train, val, log_path)
    model = trainer.fit()
    model.info["split"] = {role: [p.name for p in getattr(split, role)]
                           for role in ("train", "validation", "test")}
    checkpoint_save(out, model)
    figure = None
    if not args.no_plot:
        from .plotting import plot_training_log

        figure = plot_training_log(trainer.rows, log_path.with_suffix(".png"), cfg.target_bps,
                                   cfg.target_halfwidth)
    best = model.info.get("best_epoch")
    status = f"best epoch {best}" if best else "no epoch reached the target region; saved final weights"
    print(f"wrote {out} ({status}); log {log_path}" + (f"; figure {figure}" if figure else ""))
    return 0


def cmd_encode(args) -> int:
    model = checkpoint_load(_existing_file(args.model))
    signal = load_normalized(_existing_file(args.input))
    data = encode_signal(model, signal)
    out = Path(args.output)
    _atomic_write(out, data)
    print(f"wrote {out}: {len(data)} bytes, {8 * len(data) / signal.duration / 1000:.3f} kbps")
    return 0


def cmd_decode(args) -> int:
    model = checkpoint_load(_existing_file(args.model))
    data = _existing_file(args.input).read_bytes()
    signal = decode_stream(model, data)
    out = Path(args.output)
    tmp = out.with_name(out.name + ".tmp")
    try:
        write_wav(tmp, signal)
        os.replace(tmp, out)
    finally:
        if tmp.exists():
            tmp.unlink()
    print(f"wrote {out}: {len(signal)} samples")
    return 0


def _select_files(model, corpus: Path, role: str):
    if role == "all":
        return list_wavs(corpus)
    names = model.info.get("split", {}).get(role)
    if names is None:
        raise UsageError(f"model does not record a {role} split; use --files all")
    return [corpus / n for n in names]


def cmd_eval(args) -> int:
    model = checkpoint_load(_existing_file(args.model))
    corpus = _existing_dir(args.corpus)
    paths = _select_files(model, corpus, args.files)
    report = evaluate_files(model, paths, bypass=args.bypass)
    rows = report_rows(report)
    out = Path(args.out) if args.out else None
    if out is not None:
        with open(out, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=REPORT_FIELDS)
            writer.writeheader()
            writer.writerows(rows)
        if not args.no_plot:
            from .plotting import plot_eval

            plot_eval(rows, out.with_suffix(".png"), model.target_bps)
    _print_table(rows)
    failures = [f for f in report.files if f.error]
    for f in failures:
        print(f"error: {f.name}: {f.error}", file=sys.stderr)
    return 1 if failures and len(failures) == len(report.files) else 0


def _print_table(rows):
    print(f"{'file':<28}{'snr_db':>9}{'P':>9}{'kbps':>9}{'payload':>9}{'est':>9}")
    for r in rows:
        if r["error"]:
            print(f"{r['file']:<28}  {r['error']}")
            continue
        print(f"{r['file']:<28}{r['snr_db']:9.2f}{r['perceptual']:9.4f}{r['measured_bps'] / 1000:9.3f}"
              f"{r['payload_bps'] / 1000:9.3f}{r['estimated_bps'] / 1000:9.3f}")


def cmd_bench(args) -> int:
    if args.model:
        model = checkpoint_load(_existing_file(args.model))
    else:
        model = full_scale_model(args.seed, args.channels or 32, args.blocks or 2)
    if args.iterations < 1:
        raise UsageError("--iterations must be positive")
    result = bench(model, args.iterations, seed=args.seed)
    summary = result.summary()
    spec = model.spec
    print(f"channels {spec.channels}, residual blocks {spec.residual_blocks}, {args.iterations} windows")
    print(f"{'stage':<10}{'mean_ms':>10}{'p95_ms':>10}")
    for stage, vals in summary.items():
        print(f"{stage:<10}{vals['mean_ms']:10.3f}{vals['p95_ms']:10.3f}")
    if args.json:
        Path(args.json).write_text(json.dumps(summary, indent=2))
    return 0


def cmd_synth(args) -> int:
    from .synth import make_corpus

    paths = make_corpus(args.directory, args.count, args.seconds, args.seed)
    print(f"wrote {len(paths)} files to {args.directory}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nsc", description="Learned wideband speech codec.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="two-stage training on a directory of 16 kHz WAV files")
    p.add_argument("--corpus", required=True)
    p.add_argument("--target-bps", type=float, required=True)
    p.add_argument("--out", required=True, help="checkpoint path (.nscm)")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--desk-scale", action="store_true", help="small preset: 48/8/8 files, 10+20 epochs, C=16")
    p.add_argument("--channels", type=int)
    p.add_argument("--blocks", type=int, help="residual blocks per stack")
    p.add_argument("--epochs-stage1", type=int)
    p.add_argument("--epochs-stage2", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--split", help="file counts TRAIN,VAL,TEST")
    p.add_argument("--log", help="CSV training log (default: <out>.log.csv)")
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("encode", help="WAV -> .nsc bitstream")
    p.add_argument("model")
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help=".nsc bitstream -> WAV")
    p.add_argument("model")
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("eval", help="encode/decode every file and report SNR, perceptual distance and rates")
    p.add_argument("model")
    p.add_argument("--corpus", required=True)
    p.add_argument("--files", choices=("all", "train", "validation", "test"), default="all",
                   help="which recorded split to evaluate (default: every WAV in the corpus)")
    p.add_argument("--out", help="CSV report path; a figure is written next to it")
    p.add_argument("--bypass", action="store_true", help="skip the codec (metric plumbing check)")
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="per-window encode/decode timing")
    p.add_argument("model", nargs="?", help="checkpoint (default: untrained full-size network)")
    p.add_argument("--iterations", type=int, default=1000)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--channels", type=int)
    p.add_argument("--blocks", type=int)
    p.add_argument("--json", help="also write the summary as JSON")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("synth-corpus", help="write a synthetic harmonic+noise test corpus")
    p.add_argument("directory")
    p.add_argument("--count", type=int, default=64)
    p.add_argument("--seconds", type=float, default=3.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)
    return parser


def _setup_logging() -> None:
    level = os.environ.get("NSC_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def _one_line(exc: BaseException) -> str:
    return " ".join(str(exc).split()) or type(exc).__name__


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {_one_line(exc)}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: not found: {exc.filename or _one_line(exc)}", file=sys.stderr)
        return 2
    except CodecError as exc:
        print(f"error: {type(exc).__name__}: {_one_line(exc)}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {_one_line(exc)}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
