"""Command-line entry point: ``trajphd run | scenario | truth``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import campaign
from .models import ModelError, VARY_KEYS, load_scenario, normalize_lscan, benchmark_scenario, save_scenario, vary
from .simulator import generate_truth, truth_from_json, truth_to_json

log = logging.getLogger("trajphd")


def parse_lscan_list(text: str) -> list:
    return [normalize_lscan(item) for item in text.split(",") if item.strip()]


def parse_vary(items) -> list[tuple[str, float]]:
    out = []
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise argparse.ArgumentTypeError(f"--vary expects param=value, got {item!r}")
        out.append((key.strip(), float(value)))
    return out


def _load(args):
    config = load_scenario(args.scenario) if args.scenario else benchmark_scenario()
    if getattr(args, "truth_mode", None):
        config = config.replace(truth_mode=args.truth_mode)
    for key, value in parse_vary(getattr(args, "vary", None)):
        config = vary(config, key, value)
    return config


def cmd_run(args) -> int:
    config = _load(args)
    lscans = parse_lscan_list(args.lscan) if args.lscan else [config.lscan]
    runs = args.runs or config.runs
    seed = config.base_seed if args.seed is None else args.seed
    truth = truth_from_json(args.truth_file) if args.truth_file else None

    def progress(done, total):
        if done == total or done % max(1, total // 10) == 0:
            log.info("%d/%d runs", done, total)

    result = campaign.run_monte_carlo(config, lscans, runs, seed, workers=args.workers, truth=truth,
                                      progress=progress)
    paths = campaign.emit_csv(result, args.out)
    for L, cost in result.summary().items():
        print(f"L={L}\ttime_averaged_cost={cost:.4f}")
    for p in paths:
        log.info("wrote %s", p)
    return 0


def cmd_scenario(args) -> int:
    config = _load(args)
    save_scenario(config, args.out)
    print(args.out)
    return 0


def cmd_truth(args) -> int:
    config = _load(args)
    truth = generate_truth(config, campaign.stream(args.seed, args.run, campaign.TRUTH_TAG), config.truth_mode)
    truth_to_json(truth, args.out)
    print(args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trajphd", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def scenario_opts(p):
        p.add_argument("--scenario", type=Path, help="scenario JSON (default: built-in benchmark)")
        p.add_argument("--truth-mode", choices=["fixed", "sampled"])
        p.add_argument("--vary", action="append", metavar="PARAM=VALUE",
                       help=f"override a benchmark parameter ({', '.join(VARY_KEYS)}); repeatable")

    run = sub.add_parser("run", help="Monte Carlo campaign, writes CSV results")
    scenario_opts(run)
    run.add_argument("--runs", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--lscan", help="comma-separated window lengths, or 'full'")
    run.add_argument("--out", type=Path, default=Path("results"))
    run.add_argument("--workers", type=int, default=1)
    run.add_argument("--truth-file", type=Path, help="pin ground truth from a JSON export")
    run.set_defaults(func=cmd_run)

    scen = sub.add_parser("scenario", help="write the (possibly varied) scenario as JSON")
    scenario_opts(scen)
    scen.add_argument("--out", type=Path, required=True)
    scen.set_defaults(func=cmd_scenario)

    tr = sub.add_parser("truth", help="simulate and export one ground-truth realization")
    scenario_opts(tr)
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--run", type=int, default=0)
    tr.add_argument("--out", type=Path, required=True)
    tr.set_defaults(func=cmd_truth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ModelError, ValueError, OSError, argparse.ArgumentTypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - any failed run must give a nonzero exit
        print(f"error: run failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
