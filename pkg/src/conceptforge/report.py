"""Evaluation reporting: aligned text tables, CSV records, and figures."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .fitting import FitConfig, fit_structural
from .simulator import EvaluationReport
from .synthetic import make_fit_case, relative_param_errors


def category_table(report: EvaluationReport) -> str:
    header = f"{'category':<20} {'task':<6} {'episodes':>8} {'successes':>9} {'rate':>6} {'steps':>7}"
    lines = [header, "-" * len(header)]
    for row in report.rows:
        lines.append(
            f"{row.category:<20} {row.task:<6} {row.episodes:>8d} {row.successes:>9d} "
            f"{row.rate:>6.3f} {row.mean_steps:>7.1f}"
        )
    lines.append("-" * len(header))
    lines.append(f"{'average':<20} {'':<6} {'':>8} {'':>9} {report.average_rate:>6.3f}")
    return "\n".join(lines) + "\n"


def write_evaluation_report(report: EvaluationReport, out_dir, stem: str = "evaluation") -> dict:
    """Text table + CSV + success-rate bar figure; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    txt = out / f"{stem}.txt"
    txt.write_text(category_table(report))

    csv_path = out / f"{stem}.csv"
    with csv_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["category", "blueprint", "task", "episodes", "successes", "rate", "mean_steps"])
        for row in report.rows:
            writer.writerow(
                [row.category, row.blueprint_id, row.task, row.episodes, row.successes,
                 f"{row.rate:.6f}", f"{row.mean_steps:.3f}"]
            )
        writer.writerow(["average", "", "", "", "", f"{report.average_rate:.6f}", ""])

    png = out / f"{stem}.png"
    fig, ax = plt.subplots(figsize=(7.0, 3.6))
    names = [row.category for row in report.rows]
    rates = [row.rate for row in report.rows]
    ax.bar(range(len(names)), rates, color="#4878a8")
    ax.axhline(report.average_rate, color="#b04030", linestyle="--", linewidth=1.2,
               label=f"average {report.average_rate:.2f}")
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=20, ha="right", fontsize=8)
    ax.set_ylim(0.0, 1.05)
    ax.set_ylabel("success rate")
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(png, dpi=130)
    plt.close(fig)
    return {"txt": txt, "csv": csv_path, "png": png}


def noise_robustness_rows(
    asset_ids: list[str],
    sigmas: list[float],
    instances: int = 6,
    seed: int = 0,
) -> list[dict]:
    """Mean relative parameter error per (asset, noise sigma), half views."""
    rows = []
    for asset_id in asset_ids:
        for sigma in sigmas:
            errs = []
            for k in range(instances):
                case = make_fit_case(
                    asset_id, seed=seed + 1000 * k + 17, partial=True, noise_sigma=sigma
                )
                fit = fit_structural(case.asset, case.cloud, FitConfig(seed=seed))
                errs.append(max(relative_param_errors(case, fit.params).values()))
            rows.append(
                {
                    "asset": asset_id,
                    "sigma": sigma,
                    "mean_rel_error": float(np.mean(errs)),
                    "max_rel_error": float(np.max(errs)),
                    "instances": instances,
                }
            )
    return rows


def write_noise_report(rows: list[dict], out_dir, stem: str = "noise_robustness") -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{stem}.csv"
    with csv_path.open("w", newline="") as fh:
        writer = csv.DictWriter(
            fh, fieldnames=["asset", "sigma", "mean_rel_error", "max_rel_error", "instances"]
        )
        writer.writeheader()
        for row in rows:
            writer.writerow(row)

    png = out / f"{stem}.png"
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    assets = sorted({r["asset"] for r in rows})
    for asset in assets:
        pts = sorted((r["sigma"], r["mean_rel_error"]) for r in rows if r["asset"] == asset)
        ax.plot([p[0] * 1000 for p in pts], [p[1] * 100 for p in pts], marker="o", label=asset)
    ax.set_xlabel("point noise sigma (mm)")
    ax.set_ylabel("mean relative parameter error (%)")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(png, dpi=130)
    plt.close(fig)
    return {"csv": csv_path, "png": png}
