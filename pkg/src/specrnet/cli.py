"""Command-line interface.

Machine-readable results go to stdout (JSON, or a bare number for `info`);
human-oriented logs go to stderr. Exit codes: 0 success, 1 usage error,
2 data error, 3 runtime/artifact error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import audio
from .bench import DEFAULT_BATCH_SIZES, DEFAULT_ITERATIONS, bench_inference, compare_backends
from .errors import ArtifactError, DataError, SpecRNetError
from .lfcc import LfccConfig
from .manifest import (
    DEFAULT_RATIOS,
    build_manifest,
    oversample_balance,
    read_manifest,
    split_manifest,
    write_manifest,
)
from .model import build, count_parameters, load_weights
from .protocols import PROTOCOLS, run_protocol
from .training import TrainConfig, config_from_dict, evaluate, extract_features, train

log = logging.getLogger("specrnet")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_RUNTIME = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _csv_floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(","))


def _csv_ints(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.split(","))


def _load_json_arg(text: str) -> dict:
    """Accept inline JSON or a path to a JSON file."""
    text = text.strip()
    if text.startswith("{"):
        return json.loads(text)
    with open(text, encoding="utf-8") as fh:
        return json.load(fh)


def _emit(payload) -> None:
    json.dump(payload, sys.stdout, indent=2)
    sys.stdout.write("\n")


def make_parser() -> _Parser:
    parser = _Parser(prog="specrnet",
                     description="Audio deepfake detection toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("manifest", help="build/split/balance a dataset manifest")
    p.add_argument("--root", required=True, help="dataset root directory")
    p.add_argument("--layout", required=True,
                   help="JSON (inline or file) mapping subdirectory -> attack tag")
    p.add_argument("--ratios", type=_csv_floats, default=DEFAULT_RATIOS,
                   help="train,test,eval fractions (default 0.7,0.15,0.15)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--balance", metavar="SPLIT", default=None,
                   help="oversample the minority class in this split")
    p.add_argument("--out", default="manifest.csv")

    p = sub.add_parser("extract", help="cache LFCC features for a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--clip-len", type=int, default=audio.TARGET_LEN)
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("train", help="train a detector")
    p.add_argument("--manifest", required=True)
    p.add_argument("--config", default=None, help="JSON training config")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--checkpoint-dir", default=None)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a manifest split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", default="eval")
    p.add_argument("--clip-len", type=int, default=audio.TARGET_LEN)

    p = sub.add_parser("protocol", help="run a named benchmark protocol")
    p.add_argument("--name", required=True, choices=PROTOCOLS)
    p.add_argument("--manifest", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--seeds", type=_csv_ints, default=None,
                   help="comma-separated seeds (default: config file, else 1,2,3)")
    p.add_argument("--checkpoint-dir", default=None)

    p = sub.add_parser("score", help="score a single WAV file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--threshold", type=float, default=0.5)

    p = sub.add_parser("bench", help="inference latency benchmark")
    p.add_argument("--checkpoint", default=None,
                   help="weights to bench (fresh random build when omitted)")
    p.add_argument("--batch-sizes", type=_csv_ints, default=DEFAULT_BATCH_SIZES)
    p.add_argument("--iterations", type=int, default=DEFAULT_ITERATIONS)
    p.add_argument("--measure-lfcc", action="store_true")
    p.add_argument("--compare-backends", action="store_true",
                   help="run the protocol under both kernel backends")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("info", help="model facts")
    p.add_argument("--params", action="store_true",
                   help="print the trainable-parameter total")
    p.add_argument("--checkpoint", default=None)

    return parser


# --- subcommand bodies -------------------------------------------------------


def _cmd_manifest(args) -> int:
    layout = _load_json_arg(args.layout)
    manifest = build_manifest(args.root, layout)
    if args.ratios:
        manifest = split_manifest(manifest, args.ratios, args.seed)
    if args.balance:
        manifest = oversample_balance(manifest, args.balance, args.seed)
    write_manifest(manifest, args.out)
    log.info("wrote %d records to %s", len(manifest.records), args.out)
    _emit({"manifest": args.out, "records": len(manifest.records)})
    return EXIT_OK


def _cmd_extract(args) -> int:
    manifest = read_manifest(args.manifest)
    out_dir = Path(args.out_dir)
    cfg = LfccConfig()

    def one(record):
        extract_features(record.path, args.clip_len, cfg, cache_dir=out_dir)

    if args.workers > 1:
        with ThreadPoolExecutor(max_workers=args.workers) as pool:
            list(pool.map(one, manifest.records))
    else:
        for record in manifest.records:
            one(record)
    n_files = len(list(out_dir.glob("*.srnw")))
    log.info("extracted features for %d records into %s", len(manifest.records), out_dir)
    _emit({"out_dir": str(out_dir), "records": len(manifest.records),
           "feature_files": n_files})
    return EXIT_OK


def _effective_train_config(args) -> TrainConfig:
    data = _load_json_arg(args.config) if args.config else {}
    cfg = config_from_dict(data)
    if args.seed is not None:
        cfg = TrainConfig(**{**cfg.__dict__, "seed": args.seed})
    if getattr(args, "checkpoint_dir", None):
        cfg = TrainConfig(**{**cfg.__dict__, "checkpoint_dir": args.checkpoint_dir})
    return cfg


def _cmd_train(args) -> int:
    cfg = _effective_train_config(args)
    manifest = read_manifest(args.manifest)
    result = train(manifest, cfg)
    _emit({"best_checkpoint": result.best_checkpoint,
           "best_epoch": result.best_epoch,
           "log_csv": result.log_csv,
           "epochs": len(result.log)})
    return EXIT_OK


def _cmd_eval(args) -> int:
    manifest = read_manifest(args.manifest)
    report = evaluate(args.checkpoint, manifest, args.split, clip_len=args.clip_len)
    sys.stdout.write(report.to_json() + "\n")
    return EXIT_OK


def _cmd_protocol(args) -> int:
    data = _load_json_arg(args.config) if args.config else {}
    seeds = list(args.seeds if args.seeds is not None else data.get("seeds", (1, 2, 3)))
    base = config_from_dict(data)
    if args.checkpoint_dir:
        base = TrainConfig(**{**base.__dict__, "checkpoint_dir": args.checkpoint_dir})
    manifest = read_manifest(args.manifest)
    report = run_protocol(args.name, manifest, base, seeds)
    _emit(report)
    return EXIT_OK


def _cmd_score(args) -> int:
    from .lfcc import lfcc

    model = load_weights(args.checkpoint)
    clip = audio.load_wav(args.input)
    features = lfcc(audio.preprocess(clip).samples)
    score = float(model.forward(features[None], train=False)[0])
    verdict = "fake" if score >= args.threshold else "bonafide"
    _emit({"score": score, "verdict": verdict})
    return EXIT_OK


def _cmd_bench(args) -> int:
    if args.compare_backends:
        result = compare_backends(lambda: _bench_model(args),
                                  args.batch_sizes, args.iterations, args.seed)
        _emit(result)
        return EXIT_OK
    model = _bench_model(args)
    report = bench_inference(model, args.batch_sizes, args.iterations,
                             measure_lfcc=args.measure_lfcc, seed=args.seed)
    log.info("bench device: %s", report.device)
    sys.stdout.write(report.rows_json() + "\n")
    return EXIT_OK


def _bench_model(args):
    if args.checkpoint:
        return load_weights(args.checkpoint)
    return build(seed=args.seed)


def _cmd_info(args) -> int:
    model = load_weights(args.checkpoint) if args.checkpoint else build(seed=0)
    if args.params:
        sys.stdout.write(f"{count_parameters(model)}\n")
    else:
        _emit({"trainable_parameters": count_parameters(model),
               "config": model.cfg.__dict__ | {"block_channels": list(model.cfg.block_channels)}})
    return EXIT_OK


_COMMANDS = {
    "manifest": _cmd_manifest,
    "extract": _cmd_extract,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "protocol": _cmd_protocol,
    "score": _cmd_score,
    "bench": _cmd_bench,
    "info": _cmd_info,
}


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits; surface the code instead
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except ArtifactError as exc:
        log.error("%s", exc)
        return EXIT_RUNTIME
    except (DataError, FileNotFoundError) as exc:
        log.error("%s", exc)
        return EXIT_DATA
    except (ValueError, json.JSONDecodeError) as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    except SpecRNetError as exc:
        log.error("%s", exc)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
