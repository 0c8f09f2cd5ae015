"""Delimited output plus rendered figures for the CLI report paths.

Every CSV a command writes gets a PNG of the same data next to it, named
after the CSV.
"""

import csv
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def write_csv(path, rows, fieldnames):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _fig_path(csv_path):
    return os.path.splitext(csv_path)[0] + ".png"


def plot_metrics(csv_path, metrics):
    """Loss and validation accuracy over iterations."""
    iters = [m[0] for m in metrics]
    fig, ax1 = plt.subplots(figsize=(7, 4))
    ax1.plot(iters, [m[2] for m in metrics], color="tab:blue", label="loss")
    ax1.set_xlabel("iteration")
    ax1.set_ylabel("training loss", color="tab:blue")
    ax2 = ax1.twinx()
    val_points = [(m[0], m[3]) for m in metrics if m[3] is not None]
    if val_points:
        ax2.plot(*zip(*val_points), color="tab:orange", label="val acc")
    ax2.set_ylabel("validation accuracy", color="tab:orange")
    ax2.set_ylim(0, 1)
    fig.tight_layout()
    out = _fig_path(csv_path)
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return out


def plot_noise_sweep(csv_path, rows):
    """Accuracy vs SNR, one line per noise set."""
    fig, ax = plt.subplots(figsize=(6, 4))
    by_set = {}
    for r in rows:
        if r["noise_set"] == "total-avg" or r["snr_db"] == "clean":
            continue
        by_set.setdefault(r["noise_set"], []).append((float(r["snr_db"]), r["accuracy"]))
    for name, pts in by_set.items():
        pts.sort()
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=name)
    ax.set_xlabel("SNR (dB)")
    ax.set_ylabel("accuracy")
    ax.set_ylim(0, 1)
    ax.legend()
    fig.tight_layout()
    out = _fig_path(csv_path)
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return out


def plot_rate_sweep(csv_path, rows):
    fig, ax = plt.subplots(figsize=(6, 4))
    pts = sorted((r["training_rate"], r["accuracy"]) for r in rows)
    ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o")
    ax.set_xlabel("training rate")
    ax.set_ylabel("test accuracy")
    ax.set_ylim(0, 1)
    fig.tight_layout()
    out = _fig_path(csv_path)
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return out


def plot_costs(csv_path, rows):
    """Flops per component, bar chart."""
    fig, ax = plt.subplots(figsize=(7, 4))
    named = [(r["component"], int(r["flops"])) for r in rows
             if r["component"] not in ("total",) and int(r["flops"]) > 0]
    ax.bar([n for n, _ in named], [v for _, v in named], color="tab:blue")
    ax.set_ylabel("flops")
    ax.tick_params(axis="x", rotation=30)
    fig.tight_layout()
    out = _fig_path(csv_path)
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return out


def plot_bench(csv_path, rows):
    fig, ax = plt.subplots(figsize=(6, 4))
    names = [r["model"] for r in rows]
    meds = [float(r["median_s"]) for r in rows]
    iqrs = [float(r["iqr_s"]) for r in rows]
    ax.bar(names, meds, yerr=iqrs, color="tab:green")
    ax.set_ylabel("forward wall time, median (s)")
    fig.tight_layout()
    out = _fig_path(csv_path)
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return out
