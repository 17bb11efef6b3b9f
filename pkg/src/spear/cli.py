"""``spear`` command line: one subcommand per pipeline stage.

Errors end the process with a single JSON line on stderr, e.g.
``{"error": "ConfigError", "exit_code": 2, "message": "train.epochs: ..."}``.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from spear import pipeline
from spear.config import load_config, resolve
from spear.errors import ConfigError, DataError, NumericError, SpearError

EXIT_OK, EXIT_ERROR, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3, 4


def _threads(text):
    n = int(text)
    if n < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return n


def _seed(text):
    n = int(text)
    if not 0 <= n < 2 ** 64:
        raise argparse.ArgumentTypeError("must be an unsigned 64-bit integer")
    return n


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"arguments: {message}")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="run config JSON (missing keys take defaults)")
    common.add_argument("--output-dir", help="overrides output_dir from the config")
    common.add_argument("--seed", type=_seed, help="overrides seed from the config")
    common.add_argument("--threads", type=_threads, default=os.cpu_count() or 1,
                        help="worker threads; results do not depend on this")
    common.add_argument("--f64", action="store_true", help="64-bit parameters and activations")

    parser = _Parser(prog="spear", description="Soft-prompt anomaly detection pipeline.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("synth", parents=[common], help="generate the synthetic corpus and train/test split")
    p = sub.add_parser("label", parents=[common], help="run the context-anomaly detectors on a series CSV")
    p.add_argument("--input", help="series CSV (default: <out>/series.csv)")
    p = sub.add_parser("resample", parents=[common], help="balance a window dataset with T-SMOTE")
    p.add_argument("--input", help="window dataset (default: <out>/train.csv)")
    p = sub.add_parser("train", parents=[common], help="train prompts and head")
    p.add_argument("--train", help="training windows (default: balanced or raw train file in <out>)")
    p.add_argument("--val", help="validation windows (default: <out>/test.csv when present)")
    for name, what in (("eval", "metrics and curves"), ("predict", "per-window scores")):
        p = sub.add_parser(name, parents=[common], help=f"{what} from a checkpoint")
        p.add_argument("--checkpoint", help="default: <out>/model.ckpt")
        p.add_argument("--input", help="window dataset or series CSV (default: <out>/test.csv)")
    p = sub.add_parser("ablate", parents=[common], help="prompt sizes 10, 20, 30")
    p.add_argument("--train", help="training windows")
    p.add_argument("--test", help="test windows (default: <out>/test.csv)")
    return parser


def _setup_logging():
    level = os.environ.get("SPEAR_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def _config(args):
    cfg = load_config(args.config) if args.config else resolve()
    if args.output_dir is not None:
        cfg.doc["output_dir"] = args.output_dir
    if args.seed is not None:
        cfg.doc["seed"] = args.seed
    cfg.validate()
    os.makedirs(cfg.output_dir, exist_ok=True)
    with open(os.path.join(cfg.output_dir, "config.resolved.json"), "w", encoding="utf-8") as fh:
        fh.write(cfg.to_json())
    return cfg


def run(argv=None) -> int:
    """Parse ``argv``, run one stage and return the exit code."""
    try:
        args = build_parser().parse_args(argv)
        cfg = _config(args)
        run_opts = {"threads": args.threads, "f64": args.f64}
        cmd = args.command
        if cmd == "synth":
            result = pipeline.synth(cfg)
        elif cmd == "label":
            result = pipeline.label(cfg, args.input)
        elif cmd == "resample":
            result = pipeline.resample(cfg, args.input)
        elif cmd == "train":
            result = pipeline.train(cfg, args.train, args.val, **run_opts)
        elif cmd == "eval":
            result = pipeline.evaluate(cfg, args.checkpoint, args.input, **run_opts)
        elif cmd == "predict":
            result = pipeline.predict(cfg, args.checkpoint, args.input, **run_opts)
        else:
            result = pipeline.ablate(cfg, args.train, args.test, **run_opts)
    except SpearError as exc:
        return _fail(exc, exc.exit_code)
    except OSError as exc:
        return _fail(exc, EXIT_DATA)
    except (FloatingPointError, ArithmeticError) as exc:
        return _fail(exc, EXIT_NUMERIC)
    print(json.dumps({"command": cmd, **result}, separators=(",", ":")))
    return EXIT_OK


def _fail(exc, code) -> int:
    kind = {EXIT_CONFIG: ConfigError, EXIT_DATA: DataError, EXIT_NUMERIC: NumericError}.get(code)
    name = type(exc).__name__ if isinstance(exc, SpearError) or kind is None else kind.__name__
    line = json.dumps({"error": name, "exit_code": code, "message": " ".join(str(exc).split())})
    print(line, file=sys.stderr)
    return code


def main(argv=None):
    _setup_logging()
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
