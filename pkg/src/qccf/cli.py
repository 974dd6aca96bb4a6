"""Command-line entry points: run, sweep, validate, oracle."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .bounds import ToyConfig, validate_bounds
from .config import DEFAULT_CONFIG, load_config

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


def _load(path: str):
    if not Path(path).is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    return load_config(path)


def _cmd_run(args) -> int:
    cfg = _load(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.policy is not None:
        overrides["policy"] = args.policy
    if overrides:
        cfg = cfg.with_overrides(**overrides)
    out = args.out or cfg.output
    from .simctl import run_experiment

    res = run_experiment(cfg, out_dir=out, verbose=args.verbose)
    print(f"policy={cfg.policy} seed={cfg.seed} rounds={cfg.rounds} "
          f"final_acc={res.final_acc:.4f} total_energy={res.total_energy:.6g} J "
          f"-> {out}/trace.csv")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    cfg = _load(args.config)
    values = [float(tok) for tok in args.v_list.replace(",", " ").split()]
    out = args.out or cfg.output
    from .simctl import run_sweep

    rows = run_sweep(cfg, values, out_dir=out)
    for row in rows:
        print(f"V={row['v_penalty']:g}  final_acc={row['final_acc']:.4f}  "
              f"total_energy={row['total_energy_j']:.6g} J")
    return EXIT_OK


def _cmd_validate(args) -> int:
    _load(args.config)  # the report is config-independent, but the path must be valid
    report = validate_bounds(num_seeds=args.seeds, cfg=ToyConfig())
    text = json.dumps({k: v for k, v in report.items() if k != "lemma_rows"}, indent=2,
                      sort_keys=True)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        with open(args.out, "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")
    print(text)
    return EXIT_OK if report["theorem_ok"] and report["lemma_ok"] else EXIT_RUNTIME


def _cmd_oracle(args) -> int:
    from .verification import ga_comparison, kkt_comparison

    if args.module == "kkt":
        report = kkt_comparison(trials=args.trials, seed=args.seed)
    else:
        report = ga_comparison(trials=args.trials, seed=args.seed)
    print(json.dumps(report, indent=2, sort_keys=True))
    return EXIT_OK if report["pass"] else EXIT_RUNTIME


def _cmd_init_config(args) -> int:
    path = Path(args.path)
    if path.exists() and not args.force:
        raise FileNotFoundError(f"{path} already exists (use --force to overwrite)")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(DEFAULT_CONFIG)
    print(f"wrote {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qccf",
                                 description="Energy-aware wireless FL simulator")
    sub = ap.add_subparsers(dest="command")

    p = sub.add_parser("run", help="run one experiment")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--policy")
    p.add_argument("--out")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(fn=_cmd_run)

    p = sub.add_parser("sweep", help="run one experiment per penalty weight")
    p.add_argument("--config", required=True)
    p.add_argument("--v-list", required=True)
    p.add_argument("--out")
    p.set_defaults(fn=_cmd_sweep)

    p = sub.add_parser("validate", help="convergence-bound toy validation report")
    p.add_argument("--config", required=True)
    p.add_argument("--seeds", type=int, default=1000)
    p.add_argument("--out")
    p.set_defaults(fn=_cmd_validate)

    p = sub.add_parser("oracle", help="closed-form vs brute-force comparison suites")
    p.add_argument("--module", choices=["kkt", "ga"], required=True)
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_oracle)

    p = sub.add_parser("init-config", help="write the default config template")
    p.add_argument("path")
    p.add_argument("--force", action="store_true")
    p.set_defaults(fn=_cmd_init_config)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if not getattr(args, "fn", None):
        ap.print_usage(sys.stderr)
        return EXIT_CONFIG
    try:
        return args.fn(args)
    except (FileNotFoundError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # runtime aborts carry round context in the message
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    raise SystemExit(main())
