"""Report rendering: CSV tables and SVG plots from flight logs and
iteration records (intervention-rate boxes, distance bars, speed sweeps,
command histograms, top-down trajectory overlays).
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .flightlog import FlightLog
from .metrics import box_stats, command_histogram, distance_before_failure
from .world import generate_world, OrchardParams

AGENT_COLOR = "#1f77d4"  # agent segments drawn in blue
EXPERT_COLOR = "#d62728"  # expert/intervention segments in red


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows(rows)


def intervention_box_plot(out_dir: Path, rates_by_controller: dict) -> list[Path]:
    """rates_by_controller: {controller: {iteration: [rates...]}}."""
    out = []
    rows = []
    fig, ax = plt.subplots(figsize=(7, 4))
    offset = 0.0
    width = 0.8 / max(1, len(rates_by_controller))
    for ci, (controller, by_iter) in enumerate(sorted(rates_by_controller.items())):
        stats = []
        for iteration in sorted(by_iter):
            s = box_stats(by_iter[iteration])
            rows.append([controller, iteration, s["n"], s["mean"], s["median"],
                         s["q1"], s["q3"], s["whisker_low"], s["whisker_high"],
                         s["notch_low"], s["notch_high"]])
            stats.append({
                "med": s["median"], "q1": s["q1"], "q3": s["q3"],
                "whislo": s["whisker_low"], "whishi": s["whisker_high"],
                "cilo": s["notch_low"], "cihi": s["notch_high"],
                "mean": s["mean"], "fliers": s["outliers"],
                "label": f"iter {iteration}",
            })
        positions = [i + 1 + (ci - len(rates_by_controller) / 2 + 0.5) * width
                     for i in range(len(stats))]
        ax.bxp(stats, positions=positions, widths=width * 0.9, shownotches=True,
               showmeans=True, patch_artist=True,
               boxprops={"facecolor": f"C{ci}", "alpha": 0.5})
    ax.set_xlabel("training iteration")
    ax.set_ylabel("intervention rate")
    ax.set_xticks(range(1, 1 + max(len(v) for v in rates_by_controller.values())))
    ax.legend(handles=[plt.Rectangle((0, 0), 1, 1, fc=f"C{i}", alpha=0.5)
                       for i in range(len(rates_by_controller))],
              labels=sorted(rates_by_controller), loc="upper right", fontsize=8)
    svg = out_dir / "intervention_rate_box.svg"
    fig.savefig(svg)
    plt.close(fig)
    out.append(svg)
    table = out_dir / "intervention_rate_box.csv"
    _write_csv(table, ["controller", "iteration", "n", "mean", "median", "q1", "q3",
                       "whisker_low", "whisker_high", "notch_low", "notch_high"], rows)
    out.append(table)
    return out


def distance_bar_plot(out_dir: Path, distances: dict, name: str = "distance") -> list[Path]:
    """distances: {group_label: {controller: [meters...]}}."""
    rows = []
    groups = sorted(distances)
    controllers = sorted({c for g in distances.values() for c in g})
    fig, ax = plt.subplots(figsize=(7, 4))
    width = 0.8 / max(1, len(controllers))
    for ci, controller in enumerate(controllers):
        means, errs, xs = [], [], []
        for gi, group in enumerate(groups):
            vals = distances[group].get(controller, [])
            if not vals:
                continue
            means.append(np.mean(vals))
            errs.append(np.std(vals))
            xs.append(gi + (ci - len(controllers) / 2 + 0.5) * width)
            rows.append([group, controller, len(vals), np.mean(vals), np.std(vals)])
        ax.bar(xs, means, width * 0.9, yerr=errs, capsize=3, label=controller)
    ax.set_xticks(range(len(groups)))
    ax.set_xticklabels(groups)
    ax.set_ylabel("mean distance before failure (m)")
    ax.legend(fontsize=8)
    svg = out_dir / f"{name}_bars.svg"
    fig.savefig(svg)
    plt.close(fig)
    table = out_dir / f"{name}_table.csv"
    _write_csv(table, ["group", "controller", "flights", "mean_m", "std_m"], rows)
    return [svg, table]


def histogram_plot(out_dir: Path, demo_actions, prediction_sets: dict,
                   bins: int = 30) -> list[Path]:
    """Demo vs model command densities, one panel per controller."""
    out = []
    edges = np.linspace(-1, 1, bins + 1)
    centers = (edges[:-1] + edges[1:]) / 2
    demo_density = command_histogram(demo_actions, bins)
    rows = [["demo", *demo_density]]
    n_panels = max(1, len(prediction_sets))
    fig, axes = plt.subplots(1, n_panels, figsize=(4 * n_panels, 3.2), squeeze=False)
    for i, (controller, preds) in enumerate(sorted(prediction_sets.items())):
        ax = axes[0][i]
        density = command_histogram(preds, bins)
        rows.append([controller, *density])
        ax.bar(centers, demo_density, width=2 / bins, alpha=0.45,
               color="#777777", label="demonstrations")
        ax.bar(centers, density, width=2 / bins, alpha=0.55,
               color=f"C{i}", label=controller)
        ax.set_xlabel("normalized yaw command")
        ax.set_ylabel("probability density")
        ax.legend(fontsize=7)
    svg = out_dir / "command_histograms.svg"
    fig.tight_layout()
    fig.savefig(svg)
    plt.close(fig)
    out.append(svg)
    table = out_dir / "command_histograms.csv"
    _write_csv(table, ["series", *[f"bin_{i}" for i in range(bins)]], rows)
    out.append(table)
    return out


def _segments_by_source(log: FlightLog):
    """Contiguous (source, xy array) runs, with shared joints for continuity."""
    segments = []
    current_source = None
    current: list = []
    for r in log.records:
        if r.source != current_source:
            if len(current) > 1:
                segments.append((current_source, np.array(current)))
            current = current[-1:] if current else []
            current_source = r.source
        current.append(r.position[:2])
    if len(current) > 1:
        segments.append((current_source, np.array(current)))
    return segments


def trajectory_overlay(out_dir: Path, log: FlightLog, name: str) -> list[Path]:
    """Top-down overlay: agent segments blue, expert segments red, trees dotted."""
    fig, ax = plt.subplots(figsize=(9, 3))
    world_params = log.metadata.get("world_params")
    if world_params:
        world = generate_world(OrchardParams(
            **{**world_params,
               "trunk_radius_range": tuple(world_params["trunk_radius_range"]),
               "tree_height_range": tuple(world_params["tree_height_range"]),
               "removed_slots": tuple(map(tuple, world_params.get("removed_slots", [])))}))
        xs = [t.base_position[0] for t in world.trees]
        ys = [t.base_position[1] for t in world.trees]
        ax.scatter(xs, ys, s=12, c="#3a6b35", marker="o", label="trees")
    for source, xy in _segments_by_source(log):
        ax.plot(xy[:, 0], xy[:, 1],
                color=EXPERT_COLOR if source == "expert" else AGENT_COLOR,
                linewidth=1.6)
    failure_ticks = [r for r in log.records if r.would_intervene or r.collision]
    if failure_ticks:
        ax.scatter([failure_ticks[0].position[0]], [failure_ticks[0].position[1]],
                   marker="x", c=EXPERT_COLOR, s=60, label="first failure")
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    ax.set_aspect("equal", adjustable="datalim")
    ax.legend(fontsize=7, loc="upper right")
    svg = out_dir / f"trajectory_{name}.svg"
    fig.tight_layout()
    fig.savefig(svg)
    plt.close(fig)

    seg_table = out_dir / f"trajectory_{name}_segments.csv"
    rows = []
    for source, xy in _segments_by_source(log):
        length = float(np.sum(np.hypot(*np.diff(xy, axis=0).T)))
        rows.append([source, xy[0, 0], xy[-1, 0], length])
    _write_csv(seg_table, ["source", "start_x", "end_x", "length_m"], rows)
    return [svg, seg_table]


def render_report(out_dir, *, rates_by_controller: dict | None = None,
                  distances: dict | None = None,
                  speed_distances: dict | None = None,
                  demo_actions=None, prediction_sets: dict | None = None,
                  trajectory_logs: dict | None = None,
                  summary: dict | None = None) -> list[Path]:
    """Write every requested table/plot into out_dir; returns written paths.

    All sections are optional: an empty call still produces a valid (if
    boring) bundle with just the summary file.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    if rates_by_controller:
        written += intervention_box_plot(out_dir, rates_by_controller)
    if distances:
        written += distance_bar_plot(out_dir, distances, "distance")
    if speed_distances:
        written += distance_bar_plot(out_dir, speed_distances, "speed")
    if demo_actions is not None and prediction_sets:
        written += histogram_plot(out_dir, demo_actions, prediction_sets)
    for name, log in (trajectory_logs or {}).items():
        written += trajectory_overlay(out_dir, log, name)
    summary_path = out_dir / "summary.json"
    summary_path.write_text(json.dumps(summary or {}, indent=2, sort_keys=True,
                                       default=float))
    written.append(summary_path)
    return written
