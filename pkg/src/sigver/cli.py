"""Command line entry point: ``sigver <subcommand> [options]``.

Exit codes: 0 success, 1 validation error, 2 runtime or training error,
3 failed gradient check.
"""

from __future__ import annotations

import argparse
import hashlib
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import __version__, pipeline
from .config import DESK_CONFIG, RunConfig, read_config
from .errors import (ConfigError, DegenerateImageError, FormatError, ProtocolError, ReportingError,
                     ShapeError, SigverError, StageOrderError)
from .nn.gradcheck import LAYERS, THRESHOLD, run_gradchecks
from .protocol import MANIFEST_NAME, write_corpus
from .synthetic import generate_synthetic_corpus

log = logging.getLogger("sigver")

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2
EXIT_GRADCHECK = 3

VALIDATION_ERRORS = (ConfigError, FormatError, StageOrderError, ProtocolError, ShapeError,
                     DegenerateImageError, ReportingError)


def _dir_is_nonempty(path: Path) -> bool:
    return path.exists() and (not path.is_dir() or any(path.iterdir()))


def _load(args) -> RunConfig:
    if not args.config:
        raise ConfigError("--config is required for this subcommand")
    cfg = read_config(Path(args.config), seed=args.seed)
    if args.jobs is not None:
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        cfg = replace(cfg, jobs=args.jobs)
    log.info("config %s digest %s", args.config, cfg.digest_hex)
    return cfg


def _report(name: str, summary: dict, started: float) -> None:
    fields = " ".join(f"{k}={v}" for k, v in summary.items())
    print(f"{name}: {fields} ({time.perf_counter() - started:.1f}s)")


# ---------------------------------------------------------------- commands

def cmd_init_config(args) -> int:
    out = Path(args.out)
    if out.exists() and not args.force:
        raise ConfigError(f"{out} exists; pass --force to overwrite")
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(DESK_CONFIG, encoding="utf-8")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_datagen(args) -> int:
    out = Path(args.out)
    if _dir_is_nonempty(out) and not args.force:
        raise ConfigError(f"{out} is not empty; pass --force to overwrite")
    seed = 0 if args.seed is None else args.seed
    corpus = generate_synthetic_corpus(args.users, args.genuine, args.skilled, height=args.height,
                                       width=args.width, seed=seed, n_simple=args.simple)
    manifest = write_corpus(corpus, out)
    digest = hashlib.sha256(manifest.read_bytes()).hexdigest()
    print(f"datagen: users={args.users} files={len(corpus.samples)} manifest={manifest} sha256={digest}")
    return EXIT_OK


def _stage(name, fn):
    def run(args) -> int:
        cfg = _load(args)
        if name == "preprocess" and not (cfg.corpus_root / MANIFEST_NAME).is_file():
            raise ConfigError(f"no {MANIFEST_NAME} under corpus_root {cfg.corpus_root}")
        started = time.perf_counter()
        _report(name, fn(cfg), started)
        return EXIT_OK
    return run


def cmd_train_wd(args) -> int:
    cfg = _load(args)
    started = time.perf_counter()
    _report("train-wd", pipeline.stage_train_wd(cfg, cfg.jobs), started)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _load(args)
    report = pipeline.stage_evaluate(cfg)
    print(report.summary(), end="")
    print(f"report: {cfg.work_dir / pipeline.REPORT_CSV}")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _load(args)
    if not (cfg.corpus_root / MANIFEST_NAME).is_file():
        raise ConfigError(f"no {MANIFEST_NAME} under corpus_root {cfg.corpus_root}")
    report = pipeline.run_all(cfg)
    print(report.summary(), end="")
    print(f"report: {cfg.work_dir / pipeline.REPORT_CSV}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    if args.seeds < 1:
        raise ConfigError("--seeds must be >= 1")
    seed = 0 if args.seed is None else args.seed
    worst = run_gradchecks(args.seeds, seed, tuple(args.layers or LAYERS))
    failed = False
    for kind, err in worst.items():
        ok = err < THRESHOLD
        failed |= not ok
        print(f"{kind:<13} max_rel_err={err:.3e} {'ok' if ok else 'FAIL'}")
    return EXIT_GRADCHECK if failed else EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run config file (key = value)")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--force", action="store_true", help="overwrite existing outputs")
    common.add_argument("--jobs", type=int, help="worker threads for per-user stages")
    common.add_argument("-v", "--verbose", action="store_true", help="debug logging")

    parser = argparse.ArgumentParser(prog="sigver", description="Offline signature verification pipeline")
    parser.add_argument("--version", action="version", version=f"sigver {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init-config", parents=[common], help="write the desk-scale config")
    p.add_argument("--out", default="sigver.cfg")
    p.set_defaults(func=cmd_init_config)

    p = sub.add_parser("datagen", parents=[common], help="generate a synthetic corpus")
    p.add_argument("--out", required=True, help="corpus directory")
    p.add_argument("--users", type=int, default=30)
    p.add_argument("--genuine", type=int, default=24)
    p.add_argument("--skilled", type=int, default=30)
    p.add_argument("--simple", type=int, default=0)
    p.add_argument("--height", type=int, default=110)
    p.add_argument("--width", type=int, default=160)
    p.set_defaults(func=cmd_datagen)

    stages = [
        ("preprocess", "preprocess the corpus into a tensor file", _stage("preprocess", pipeline.stage_preprocess)),
        ("train-wi", "train the writer-independent CNN", _stage("train-wi", pipeline.stage_train_wi)),
        ("extract", "extract feature vectors", _stage("extract", pipeline.stage_extract)),
        ("gridsearch", "select SVM C and gamma on development users", _stage("gridsearch", pipeline.stage_gridsearch)),
        ("train-wd", "train one SVM per enrolled user", cmd_train_wd),
        ("evaluate", "score test sets and write the report", cmd_evaluate),
        ("run", "run every stage in order", cmd_run),
    ]
    for name, help_text, func in stages:
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.set_defaults(func=func)

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference check of every layer")
    p.add_argument("--seeds", type=int, default=20, help="random problems per layer")
    p.add_argument("--layers", nargs="*", choices=LAYERS)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s %(name)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except VALIDATION_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except (SigverError, RuntimeError, FloatingPointError, MemoryError) as e:
        print(f"runtime error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
