"""Plot a training curve and a cost comparison from the CSVs the CLI writes.

    python3 scripts/plot_curves.py --train out/training_log.csv --compare cmp/comparison.csv --out figs
"""
import argparse
import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def read(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def plot_training(path, out):
    rows = read(path)
    ep = [int(r["episode"]) for r in rows]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(ep, [float(r["cum_cost"]) for r in rows], lw=0.5, alpha=0.4, label="episode cost")
    ma = [(e, float(r["moving_avg"])) for e, r in zip(ep, rows) if r["moving_avg"]]
    if ma:
        ax.plot(*zip(*ma), lw=1.2, label="5-episode moving average")
    ax.set_xlabel("episode")
    ax.set_ylabel("cumulative cost per day")
    ax.set_yscale("log")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out / "training_curve.png", dpi=150)


def plot_comparison(path, out):
    rows = read(path)
    hours = [int(r["window"]) + 1 for r in rows]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(hours, [float(r["ddpg_cum"]) for r in rows], marker="o", ms=3, label="DDPG")
    ax.plot(hours, [float(r["myopic_cum"]) for r in rows], marker="s", ms=3, label="myopic")
    ax.set_xlabel("planning window (hour)")
    ax.set_ylabel("cumulative cost")
    ax.set_title(f"final gap {float(rows[-1]['gap_pct']):.1f}%")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out / "cumulative_cost.png", dpi=150)


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--train", type=Path)
    p.add_argument("--compare", type=Path)
    p.add_argument("--out", type=Path, default=Path("figs"))
    args = p.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    if args.train:
        plot_training(args.train, args.out)
    if args.compare:
        plot_comparison(args.compare, args.out)


if __name__ == "__main__":
    main()
