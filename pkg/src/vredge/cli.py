"""Command-line front end: batch jobs that write metric files.

Subcommands: run, compare, sweep, bench-optime, ingest. Exit codes:
0 success, 2 configuration problems, 3 runtime failures.
"""

from __future__ import annotations

import argparse
import sys

from . import harness
from .agents import LEARNING_VARIANTS, VARIANTS
from .config import SWEEPABLE_KEYS, ConfigError


def _add_config_args(p):
    p.add_argument("--config", help="path to a key=value config file")
    p.add_argument("--preset", help="shipped preset name "
                                    "(paper-table1, desk-scale)")
    p.add_argument("--out-dir", help="output directory "
                                     "(else $VREDGE_OUT_DIR, else ./vredge-out)")


def _csv_list(text, conv):
    return [conv(v) for v in text.split(",") if v.strip()]


def build_parser():
    parser = argparse.ArgumentParser(
        prog="vredge",
        description="attention-based VR streaming simulator and trainer")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="one continual run, full metrics files")
    _add_config_args(p)
    p.add_argument("--variant", choices=VARIANTS, default="fper")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rounds", type=int, default=100)
    p.add_argument("--gaze-dir", help="directory of gaze trace files")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("compare", help="variants x seeds comparison table")
    _add_config_args(p)
    p.add_argument("--variants", default="fper,per,cddpg,fixed_2k",
                   help="comma-separated variant list")
    p.add_argument("--seeds", default="0,1,2", help="comma-separated seeds")
    p.add_argument("--rounds", type=int, default=100)
    p.add_argument("--gaze-dir")
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("sweep", help="re-run a variant across one parameter")
    _add_config_args(p)
    p.add_argument("--param", required=True,
                   help=f"one of {', '.join(SWEEPABLE_KEYS)}")
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--variant", choices=VARIANTS, default="avg_alloc")
    p.add_argument("--seeds", default="0")
    p.add_argument("--rounds", type=int, default=20)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("bench-optime", help="wall time per training step")
    _add_config_args(p)
    p.add_argument("--variants", default="fper,per,cddpg")
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--users", default="",
                   help="comma-separated user counts (default: config value)")
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("ingest", help="gaze traces to attention-count CSV")
    _add_config_args(p)
    p.add_argument("--gaze-dir", help="directory of gaze trace files")
    p.add_argument("--synthetic", action="store_true",
                   help="synthesize gaze instead of reading traces")
    p.add_argument("--slots", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_ingest)
    return parser


def _cmd_run(args):
    cfg = harness.load_config(args.config, args.preset)
    result = harness.cmd_run(cfg, args.variant, args.seed, args.rounds,
                             out_dir=args.out_dir, gaze_dir=args.gaze_dir)
    win = harness.final_window(result)
    print(f"{args.variant} seed={args.seed} rounds={args.rounds}: "
          f"final-window reward {win['mean_reward']:.4g}, "
          f"success {win['success_rate']:.3f}, hfqoe {win['hfqoe']:.4f}")
    return 0


def _cmd_compare(args):
    cfg = harness.load_config(args.config, args.preset)
    rows = harness.cmd_compare(cfg, _csv_list(args.variants, str),
                               _csv_list(args.seeds, int), args.rounds,
                               out_dir=args.out_dir, gaze_dir=args.gaze_dir)
    for r in rows:
        print(f"{r['variant']:>12}  reward {r['mean_reward']:>10.4g} "
              f"(+-{r['std_reward']:.3g})  success {r['success_rate']:.3f}  "
              f"hfqoe {r['hfqoe']:.4f}")
    return 0


def _cmd_sweep(args):
    cfg = harness.load_config(args.config, args.preset)
    rows = harness.cmd_sweep(cfg, args.param, _csv_list(args.values, float),
                             args.variant, _csv_list(args.seeds, int),
                             args.rounds, out_dir=args.out_dir)
    for r in rows:
        print(f"{args.param}={r['value']:g}  reward {r['mean_reward']:.4g}  "
              f"latency {r['mean_latency_s']:.4g}s  "
              f"success {r['success_rate']:.3f}")
    return 0


def _cmd_bench(args):
    cfg = harness.load_config(args.config, args.preset)
    users = _csv_list(args.users, int) if args.users else None
    rows = harness.cmd_bench_optime(cfg, _csv_list(args.variants, str),
                                    args.steps, seed=args.seed,
                                    out_dir=args.out_dir, user_counts=users)
    for r in rows:
        print(f"{r['variant']:>12} K={r['num_users']:<3} "
              f"{r['mean_ms']:.3f} ms/step (+-{r['std_ms']:.3f})")
    return 0


def _cmd_ingest(args):
    cfg = harness.load_config(args.config, args.preset)
    path = harness.cmd_ingest(cfg, out_dir=args.out_dir, slots=args.slots,
                              seed=args.seed, gaze_dir=args.gaze_dir,
                              synthetic=args.synthetic)
    print(f"wrote {path}")
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
