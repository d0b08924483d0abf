"""Tidy plot data and static SVG renderings for the tilt/height and position sweeps."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .config import Config  # noqa: E402
from .dataset import Dataset, normalization_bounds, normalize  # noqa: E402
from .mdp import TILTS, XS, YS, ZS, UavState  # noqa: E402
from .reward import FEATURES, reward  # noqa: E402
from .scenario import build_deployment, drop_users, load_profile  # noqa: E402
from .simulator import run_drop  # noqa: E402

TILT_HEADER = ("load", "tilt_deg", "z_m", "metric", "value")
POSITION_HEADER = ("load", "x_m", "y_m") + FEATURES + ("reward",)
BACKHAUL_METRIC = "backhaul_se"


def backhaul_se_grid(config: Config, load: str, seeds, x: int = 0, y: int = 0) -> dict[tuple[int, int], float]:
    """Seed-mean backhaul spectral efficiency for every (tilt, height) at one 2-D position."""
    deployment = build_deployment(config)
    profile = load_profile(config, load)
    users = {s: drop_users(deployment, profile, s) for s in seeds}
    out = {}
    for tilt in TILTS:
        for z in ZS:
            state = UavState(tilt, x, y, z)
            se = [run_drop(deployment, state, profile, s, users=users[s]).backhaul_mean_se for s in seeds]
            out[(tilt, z)] = float(np.mean(se))
    return out


def tilt_height_rows(dataset: Dataset, load: str, backhaul: dict | None = None,
                     x: int = 0, y: int = 0) -> list[tuple]:
    """Long-format rows: one per (metric, tilt, height) at the fixed 2-D position."""
    rows = []
    metrics = ([BACKHAUL_METRIC] if backhaul is not None else []) + list(FEATURES)
    for metric in metrics:
        for tilt in TILTS:
            for z in ZS:
                if metric == BACKHAUL_METRIC:
                    value = backhaul[(tilt, z)]
                else:
                    rec = dataset.record(load, UavState(tilt, x, y, z))
                    value = rec.metrics.values()[FEATURES.index(metric)]
                rows.append((load, tilt, z, metric, value))
    return rows


def position_rows(dataset: Dataset, load: str, tilt: int = 0, z: int = 10) -> list[tuple]:
    bounds = normalization_bounds(dataset)
    rows = []
    for x in XS:
        for y in YS:
            m = dataset.record(load, UavState(tilt, x, y, z)).metrics
            rows.append((load, x, y, *m.values(), reward(normalize(m, bounds, load))))
    return rows


def write_rows(path: str | Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([f"{v:.9g}" if isinstance(v, float) else v for v in row])


_LABELS = {
    BACKHAUL_METRIC: "backhaul SE (bit/s/Hz)",
    "a_dl50": "DL median throughput (Mbit/s)",
    "a_ul50": "UL median throughput (Mbit/s)",
    "beta_dl": "DL drop rate",
    "beta_ul": "UL drop rate",
}


def render_tilt_height(rows, path: str | Path) -> None:
    metrics = [m for m in _LABELS if any(r[3] == m for r in rows)]
    fig, axes = plt.subplots(1, len(metrics), figsize=(3.2 * len(metrics), 3.0), squeeze=False)
    for ax, metric in zip(axes[0], metrics):
        for z in ZS:
            pts = sorted((r[1], r[4]) for r in rows if r[3] == metric and r[2] == z)
            ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", ms=3, label=f"z={z} m")
        ax.set_xlabel("tilt (deg)")
        ax.set_title(_LABELS[metric], fontsize=9)
        ax.grid(alpha=0.3)
    axes[0][0].legend(fontsize=7)
    fig.suptitle(f"{rows[0][0]} load, UAV at the disaster-area centre", fontsize=10)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def render_position(rows, path: str | Path) -> None:
    x = np.array([r[1] for r in rows], dtype=float)
    y = np.array([r[2] for r in rows], dtype=float)
    dl50 = np.array([r[3 + FEATURES.index("a_dl50")] for r in rows])
    drop = np.array([r[3 + FEATURES.index("beta_dl")] for r in rows])
    size = 20 + 400 * dl50 / dl50.max() if dl50.max() > 0 else np.full_like(dl50, 20)
    fig, ax = plt.subplots(figsize=(4.2, 3.8))
    sc = ax.scatter(x, y, s=size, c=drop, cmap="viridis_r", vmin=0, vmax=max(drop.max(), 1e-9),
                    edgecolors="k", linewidths=0.4)
    fig.colorbar(sc, ax=ax, label="DL drop rate")
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    ax.set_title(f"{rows[0][0]} load, tilt 0 deg, z 10 m\nbubble area ~ DL median throughput", fontsize=9)
    ax.set_aspect("equal")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def render_trace(iterations, rewards, path: str | Path, window: int = 100) -> None:
    r = np.asarray(rewards, dtype=float)
    fig, ax = plt.subplots(figsize=(4.5, 3.0))
    ax.plot(iterations, r, lw=0.5, alpha=0.4, label="step reward")
    if len(r) >= window:
        avg = np.convolve(r, np.ones(window) / window, mode="valid")
        ax.plot(np.asarray(iterations)[window - 1:], avg, lw=1.5, label=f"moving average ({window})")
    ax.set_xlabel("training iteration")
    ax.set_ylabel("reward")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
