"""``slice-reserve`` command line entry point."""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from slice_reserve.ddpg import NumericalAbort
from slice_reserve.experiment import (
    ConfigError,
    ExperimentConfig,
    load_config,
    run_baseline,
    run_compare,
    run_train,
    run_validation,
)
from slice_reserve.rng import stream_bundle
from slice_reserve.traffic import TraceError, synth_diurnal, write_trace_csv

EXIT_OK, EXIT_THRESHOLD, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("slice_reserve")


def _seed(value: str) -> int:
    seed = int(value)
    if not 0 <= seed < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return seed


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="slice-reserve", description="Slice resource reservation experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_help="output directory"):
        sp.add_argument("--config", type=Path, help="JSON experiment config (defaults if omitted)")
        sp.add_argument("--seed", type=_seed, default=None,
                        help="root seed (default: $SLICE_RESERVE_SEED or 0)")
        sp.add_argument("--out", type=Path, default=Path("out"), help=out_help)
        sp.add_argument("-v", "--verbose", action="store_true")

    sp = sub.add_parser("validate-queuing", help="check closed-form delays against the simulator")
    common(sp)

    sp = sub.add_parser("train", help="train the DDPG reservation agent")
    common(sp)
    sp.add_argument("--episodes", type=int, default=None, help="override agent.episodes")
    sp.add_argument("--step-log", action="store_true", help="also write the per-step cost log")

    sp = sub.add_parser("compare", help="DDPG checkpoint vs myopic on the held-out day")
    common(sp)
    sp.add_argument("--checkpoint", type=Path, required=True)
    sp.add_argument("--trace", type=Path, default=None, help="evaluation trace CSV (default: synthetic)")
    sp.add_argument("--des-replay", action="store_true", help="add simulated satisfaction rates")

    sp = sub.add_parser("baseline", help="myopic policy on the evaluation trace")
    common(sp)
    sp.add_argument("--trace", type=Path, default=None)

    sp = sub.add_parser("synth-trace", help="write a synthetic hour,vehicles CSV")
    common(sp, out_help="output CSV path")
    sp.add_argument("--hours", type=int, default=24)
    sp.add_argument("--n-min", type=int, default=None)
    sp.add_argument("--n-max", type=int, default=None)
    sp.add_argument("--noise-sd", type=float, default=None)
    return p


def _resolve_seed(arg):
    if arg is not None:
        return arg
    env = os.environ.get("SLICE_RESERVE_SEED")
    return _seed(env) if env else 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        seed = _resolve_seed(args.seed)
        exp = load_config(args.config) if args.config else ExperimentConfig()
        return _dispatch(args, exp, seed)
    except (ConfigError, TraceError, argparse.ArgumentTypeError) as exc:
        print(f"slice-reserve: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalAbort as exc:
        print(f"slice-reserve: numerical abort: {exc}; diagnostic checkpoint: {exc.checkpoint}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"slice-reserve: {exc}", file=sys.stderr)
        return EXIT_USAGE


def _dispatch(args, exp: ExperimentConfig, seed: int) -> int:
    if args.command == "validate-queuing":
        rows = run_validation(exp, seed, args.out)
        for r in rows:
            print(f"lambda={r.lam:g} n_s={r.n_s} n_v={r.n_v} analytic={r.analytic:.5f} "
                  f"empirical={r.empirical:.5f} rel_err={r.rel_err:.4f} {r.status}")
        judged = [r for r in rows if r.status != "unstable"]
        return EXIT_OK if all(r.status == "pass" for r in judged) else EXIT_THRESHOLD

    if args.command == "train":
        def progress(ep, tlog):
            if (ep + 1) % 100 == 0:
                log.info("episode %d cost %.1f best-val %.1f", ep + 1, tlog.cum_costs[-1], tlog.best_eval_cost)
        res = run_train(exp, seed, args.out, args.episodes, step_log=args.step_log, progress=progress)
        print(f"trained {len(res.log.cum_costs)} episodes; best validation cost "
              f"{res.log.best_eval_cost:.1f} at episode {res.log.best_episode}; logs in {args.out}")
        return EXIT_OK

    if args.command == "compare":
        try:
            res = run_compare(exp, args.checkpoint, seed, args.out, args.trace, args.des_replay)
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"cannot use checkpoint {args.checkpoint}: {exc}") from exc
        print(f"ddpg {res.ddpg.total:.1f} (C_s {res.ddpg.c_s_total:g})  myopic {res.myopic.total:.1f} "
              f"(C_s {res.myopic.c_s_total:g})  gap {res.gap_pct:.2f}%")
        return EXIT_OK

    if args.command == "baseline":
        rep = run_baseline(exp, seed, args.out, args.trace)
        print(f"myopic cumulative cost {rep.total:.1f} (C_r {rep.c_r_total:g}, C_s {rep.c_s_total:g}, "
              f"C_d {rep.c_d_total:g})")
        return EXIT_OK

    if args.command == "synth-trace":
        t = exp.traffic
        n_min = t.n_min if args.n_min is None else args.n_min
        n_max = t.n_max if args.n_max is None else args.n_max
        noise = t.noise_sd if args.noise_sd is None else args.noise_sd
        try:
            trace = synth_diurnal(args.hours, n_min, n_max, noise, stream_bundle(seed)["trace"], exp.scenario)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        out = args.out if args.out.suffix else args.out / "trace.csv"
        out.parent.mkdir(parents=True, exist_ok=True)
        write_trace_csv(out, trace)
        print(f"wrote {len(trace)} windows to {out}")
        return EXIT_OK
    raise AssertionError(args.command)


if __name__ == "__main__":
    sys.exit(main())
