"""Train and compare several seeds; prints one summary line per seed.

    python3 scripts/run_seeds.py --seeds 0 1 2 3 4 --out runs [--config cfg.json]
"""
import argparse
import time
from pathlib import Path

import numpy as np

from slice_reserve.experiment import ExperimentConfig, load_config, run_compare, run_train


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    p.add_argument("--config", type=Path)
    p.add_argument("--out", type=Path, default=Path("runs"))
    p.add_argument("--episodes", type=int)
    args = p.parse_args()
    exp = load_config(args.config) if args.config else ExperimentConfig()

    print("seed,train_s,ma_spread_last500,best_episode,gap_pct,ddpg_c_s,myopic_c_s")
    for seed in args.seeds:
        t0 = time.perf_counter()
        res = run_train(exp, seed, args.out / f"seed{seed}", args.episodes)
        secs = time.perf_counter() - t0
        ma = np.asarray(res.log.moving_avg[-500:])
        spread = ma.std() / ma.mean() if ma.size else float("nan")
        cmp = run_compare(exp, args.out / f"seed{seed}" / "checkpoint_best.json", seed, args.out / f"cmp{seed}")
        print(f"{seed},{secs:.0f},{spread:.4f},{res.log.best_episode},{cmp.gap_pct:.2f},"
              f"{cmp.ddpg.c_s_total:g},{cmp.myopic.c_s_total:g}", flush=True)


if __name__ == "__main__":
    main()
