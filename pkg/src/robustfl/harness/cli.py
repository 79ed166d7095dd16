"""Command-line entry point: ``run``, ``validate`` and ``sweep``.

Exit codes: 0 success, 2 configuration error, 3 when more than half of the
rounds of some run ended without a consensus majority.
"""

from __future__ import annotations

import argparse
import itertools
import logging
import sys
from pathlib import Path

from .config import ConfigError, Scenario, load_config, set_key, validate
from .runner import ABORT_EXIT_FRACTION, metrics_csv, run_scenario

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_COLLAPSE = 3

log = logging.getLogger("robustfl")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="robustfl", description="Robust, private federated learning simulator")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("config", help="key=value scenario file")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--backend", choices=("ideal", "shared"), help="override fl.backend")

    run = sub.add_parser("run", help="run one scenario and write its metrics CSV")
    common(run)
    run.add_argument("--out", default=".", help="output directory (default: current)")

    val = sub.add_parser("validate", help="check a config file without running it")
    common(val)

    sweep = sub.add_parser("sweep", help="run the cartesian product of --vary values")
    common(sweep)
    sweep.add_argument("--out", default=".", help="output directory (default: current)")
    sweep.add_argument("--vary", action="append", required=True, metavar="KEY=V1,V2,...")
    return p


def _load(args) -> Scenario:
    path = Path(args.config)
    if not path.is_file():
        raise ConfigError([f"{path}: no such config file"])
    s = load_config(path)
    if args.seed is not None:
        s.seed = args.seed
    if args.backend is not None:
        s.fl.backend = args.backend
    return validate(s)


def _run_one(s: Scenario, out_csv: Path) -> int:
    result = run_scenario(s)
    out_csv.parent.mkdir(parents=True, exist_ok=True)
    out_csv.write_text(metrics_csv(result.metrics))
    out_csv.with_name(out_csv.stem + "_reveals.csv").write_text(result.reveal_log.to_csv())
    if result.metrics:
        last = result.metrics[-1]
        log.info("%s: %d rounds, ma_global=%.4f ba=%.4f eps_rdp=%s", out_csv.name, len(result.metrics),
                 last.ma_global, last.ba, last.eps_rdp)
    if result.abort_fraction > ABORT_EXIT_FRACTION:
        log.error("%s: %d of %d rounds found no consensus", out_csv.name, result.aborted_rounds, len(result.metrics))
        return EXIT_COLLAPSE
    return EXIT_OK


def _parse_vary(items: list[str]) -> list[tuple[str, list[str]]]:
    out = []
    for item in items:
        key, sep, values = item.partition("=")
        if not sep or not values:
            raise ConfigError([f"--vary {item!r}: expected KEY=V1,V2,..."])
        out.append((key.strip(), [v.strip() for v in values.split(",")]))
    return out


def _sweep(base: Scenario, vary: list[tuple[str, list[str]]], out: Path) -> int:
    # build and validate every variant before running any of them
    variants = []
    for combo in itertools.product(*(vals for _, vals in vary)):
        s = base.copy()
        s.seed = base.seed
        for (key, _), value in zip(vary, combo):
            set_key(s, key, value)
        validate(s)
        name = "_".join(f"{k}={v}" for (k, _), v in zip(vary, combo))
        variants.append((s, out / f"{name}.csv"))
    return max(_run_one(s, path) for s, path in variants)


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = _parser().parse_args(argv)
    try:
        s = _load(args)
        if args.command == "validate":
            print(f"{args.config}: ok")
            return EXIT_OK
        if args.command == "run":
            return _run_one(s, Path(args.out) / "metrics.csv")
        return _sweep(s, _parse_vary(args.vary), Path(args.out))
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
