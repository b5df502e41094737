"""Command-line entry point.

Exit codes: 0 success, 1 validation or configuration error, 2 runtime
error, 3 gradient-check failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import load_config
from .data import Standardizer, gen_blob_shift, gen_two_moons_shift, load_csv, save_csv
from .errors import ConfigError, FisherDAError, LabelError, ParameterError, ParseError
from .gradcheck import run_gradcheck
from .harness import accuracy, embeddings, export, run_train, save_model
from .network import load_snapshot
from .numeric import SeededRng

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_GRADCHECK = 0, 1, 2, 3

log = logging.getLogger("fisherda")


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    report = run_train(cfg)
    out = Path(args.out)
    export(report, embeddings(report.model, report.data) if report.records else [], out)
    save_model(report.model, out / "model.snapshot")
    if report.records:
        f = report.final
        print(f"stopped ({report.stop_reason}) after {f['batches']} batches: "
              f"source val acc {f['source_accuracy']:.4f}, target acc {f['target_accuracy']:.4f}")
    else:
        print(f"no batches run ({report.stop_reason})")
    print(f"artifacts written to {out}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    summary = run_gradcheck(seed=args.seed)
    print("\n".join(summary.lines()))
    return EXIT_OK if summary.passed else EXIT_GRADCHECK


def cmd_gen_data(args) -> int:
    rng = SeededRng(args.seed)
    if args.kind == "moons":
        src, tgt = gen_two_moons_shift(args.n, args.rotation, args.noise, rng)
    else:
        src, tgt = gen_blob_shift(args.classes, args.n, args.shift, rng)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_csv(out / "source.csv", src)
    save_csv(out / "target.csv", tgt)
    print(f"wrote {out / 'source.csv'} and {out / 'target.csv'} ({args.n} rows each)")
    return EXIT_OK


def cmd_eval(args) -> int:
    nets, arrays = load_snapshot(args.model)
    if "feature" not in nets or "predictor" not in nets:
        raise ParseError("snapshot lacks feature/predictor networks")
    data = load_csv(args.data, has_labels=True, num_classes=nets["predictor"].n_out)
    x = data.x
    if "input_mean" in arrays:
        x = Standardizer(arrays["input_mean"], arrays["input_scale"])(x)
    acc = accuracy(nets["predictor"].forward(nets["feature"].forward(x)), data.labels)
    print(f"accuracy {acc:.4f} on {data.n} rows")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fisherda", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run one experiment and export its artifacts")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("gradcheck", help="finite-difference check of every gradient")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("gen-data", help="write a synthetic source/target pair as CSV")
    p.add_argument("--kind", choices=("moons", "blobs"), required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--rotation", type=float, default=30.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--classes", type=int, default=5)
    p.add_argument("--shift", type=float, nargs=2, default=(1.5, 1.5))
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("eval", help="accuracy of a saved model on a labeled CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ParameterError, LabelError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FisherDAError, OSError, ArithmeticError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
