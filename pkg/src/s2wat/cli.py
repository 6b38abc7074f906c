"""Command-line entry point: ``s2wat {train,stylize,analyze,bench,gen-data,verify}``.

Exit codes: 0 ok, 1 usage, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .analysis import analyze, leak_rounds
from .complexity import KINDS, run_grid, scaling_slopes
from .config import RunConfig, load_config
from .errors import (ConfigurationError, ContractError, FormatError, InputTooSmallError, NumericError,
                     S2WATError)
from .fileio import atomic_write, load_weights, read_ppm, write_ppm
from .model import S2WAT
from .training import generate_dataset, train
from .validation import check_image

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("s2wat")


class UsageError(S2WATError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _int_list(text: str) -> tuple:
    try:
        return tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--preset", default="desk", help="base preset: desk or full (default: desk)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="s2wat", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    _add = sub.add_parser
    sub.add_parser = lambda *a, **k: _add(*a, parents=[common], **k)

    p = sub.add_parser("train", help="train a model; any config key may be given as --key value")
    _config_args(p)
    p.add_argument("--out-dir", help="where checkpoints and loss.csv go (default: config out_dir)")

    p = sub.add_parser("stylize", help="stylize one content image with one style image")
    for name in ("content", "style", "weights", "out"):
        p.add_argument(name)
    _config_args(p)
    p.add_argument("--rounds", type=int, default=1, help="feed the output back as content this many times")

    p = sub.add_parser("analyze", help="write feature, attention and probe similarity maps")
    for name in ("content", "style", "weights", "outdir"):
        p.add_argument(name)
    _config_args(p)

    p = sub.add_parser("bench", help="analytic vs measured attention multiplication counts (CSV)")
    p.add_argument("--sizes", type=_int_list, default=(8, 16, 32))
    p.add_argument("--ms", type=_int_list, default=(2, 4))
    p.add_argument("--cs", type=_int_list, default=(8, 16))
    p.add_argument("--kinds", default=",".join(KINDS))
    p.add_argument("--out", help="CSV path (default: stdout)")
    p.add_argument("--slopes", action="store_true", help="also report log-log scaling slopes")

    p = sub.add_parser("gen-data", help="write a synthetic content/style dataset")
    p.add_argument("outdir")
    p.add_argument("--count", type=int, default=4)
    p.add_argument("--size", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)

    sub.add_parser("verify", help="run the built-in invariant checks")
    return parser


def parse_overrides(extra: Sequence[str]) -> dict:
    """``["--lr", "0.1", "--iters=5"]`` -> ``{"lr": "0.1", "iters": "5"}``."""
    out = {}
    items = list(extra)
    i = 0
    while i < len(items):
        item = items[i]
        if not item.startswith("--"):
            raise UsageError(f"unexpected argument {item!r}")
        key = item[2:]
        if "=" in key:
            key, value = key.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(items):
                raise UsageError(f"missing value for {item}")
            value = items[i + 1]
            i += 2
        out[key.replace("-", "_")] = value
    return out


def _load_cfg(args, extra) -> RunConfig:
    try:
        return load_config(args.config, args.preset, parse_overrides(extra))
    except ConfigurationError as exc:
        raise UsageError(str(exc)) from exc


def _load_model(cfg: RunConfig, weights: str) -> S2WAT:
    model = S2WAT.initialize(cfg.model_config(), seed=cfg.seed, dtype=cfg.np_dtype)
    stored = load_weights(weights)
    try:
        model.params.load_state(stored.state())
    except ConfigurationError as exc:
        raise FormatError(f"weights {weights} do not match the configured model: {exc}") from exc
    return model


def _read_pair(args, dtype):
    content = check_image(read_ppm(args.content), "content", dtype=dtype)
    style = check_image(read_ppm(args.style), "style", dtype=dtype)
    return content, style


def cmd_train(args, extra) -> int:
    cfg = _load_cfg(args, extra)
    out_dir = Path(args.out_dir or cfg.out_dir)

    def report(row):
        if row["iter"] == 1 or row["iter"] % 10 == 0 or row["iter"] == cfg.iters:
            log.info("iter %d total %.5f lr %.2e", row["iter"], row["total"], row["lr"])

    result = train(cfg, out_dir=out_dir, callback=report)
    print(f"trained {cfg.iters} iterations; final total {result.log[-1]['total']:.6f}; outputs in {out_dir}")
    return EXIT_OK


def round_paths(out: str, rounds: int) -> list:
    if rounds == 1:
        return [Path(out)]
    out = Path(out)
    return [out.with_name(f"{out.stem}_round{k:02d}{out.suffix or '.ppm'}") for k in range(1, rounds + 1)]


def cmd_stylize(args, extra) -> int:
    cfg = _load_cfg(args, extra)
    if args.rounds < 1:
        raise UsageError("--rounds must be >= 1")
    model = _load_model(cfg, args.weights)
    content, style = _read_pair(args, cfg.np_dtype)
    outputs = leak_rounds(model, content, style, args.rounds)
    for path, img in zip(round_paths(args.out, args.rounds), outputs):
        write_ppm(path, img)
        print(path)
    return EXIT_OK


def cmd_analyze(args, extra) -> int:
    cfg = _load_cfg(args, extra)
    model = _load_model(cfg, args.weights)
    content, style = _read_pair(args, cfg.np_dtype)
    summary = analyze(model, content, style, args.outdir)
    print(f"wrote diagnostics to {args.outdir}; max attention row-sum error {summary['max_row_sum_error']:.2e}")
    return EXIT_OK


def cmd_bench(args, extra) -> int:
    if extra:
        raise UsageError(f"unexpected arguments {extra}")
    kinds = tuple(k for k in args.kinds.split(",") if k)
    if any(k not in KINDS for k in kinds):
        raise UsageError(f"kinds must be among {KINDS}")
    report = run_grid(args.sizes, args.ms, args.cs, kinds)
    text = report.to_csv()
    if args.out:
        atomic_write(args.out, text.encode())
    else:
        sys.stdout.write(text)
    if report.failures():
        sys.stderr.write("analytic/measured disagreement:\n" + report.breakdowns() + "\n")
    if args.slopes:
        for kind, slope in scaling_slopes().items():
            sys.stderr.write(f"log-log slope {kind}: {slope:.4f}\n")
    return EXIT_OK if not report.failures() else EXIT_NUMERIC


def cmd_gen_data(args, extra) -> int:
    if extra:
        raise UsageError(f"unexpected arguments {extra}")
    content_dir, style_dir = generate_dataset(args.outdir, args.count, args.size, args.seed)
    print(f"content_dir = {content_dir}\nstyle_dir = {style_dir}")
    return EXIT_OK


def cmd_verify(args, extra) -> int:
    from .verify import run_checks
    if extra:
        raise UsageError(f"unexpected arguments {extra}")
    results = run_checks()
    for r in results:
        print(f"{'PASS' if r.ok else 'FAIL'}  {r.name:<26} {r.detail} ({r.seconds:.2f}s)")
    return EXIT_OK if all(r.ok for r in results) else EXIT_NUMERIC


COMMANDS = {
    "train": cmd_train,
    "stylize": cmd_stylize,
    "analyze": cmd_analyze,
    "bench": cmd_bench,
    "gen-data": cmd_gen_data,
    "verify": cmd_verify,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args, extra)
    except UsageError as exc:
        print(f"s2wat: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"s2wat: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FormatError, ContractError, InputTooSmallError, ConfigurationError, OSError) as exc:
        print(f"s2wat: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
