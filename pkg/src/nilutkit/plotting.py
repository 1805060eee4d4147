"""Figures written next to the CSV/JSON reports.

Uses the non-interactive Agg backend; every function writes a file and
closes its figure.
"""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .fitting import QUALITY_DB, EvalReport, HistoryPoint  # noqa: E402

PLOT_CEILING_DB = 80.0


def report_figure(width=6.4, height=None):
    """Figure with the package's plot defaults (golden-ratio height)."""
    golden_ratio = (math.sqrt(5) - 1.0) / 2.0
    height = height or width * golden_ratio
    plt.rcParams.update(
        {
            "font.size": 10,
            "axes.spines.top": False,
            "axes.spines.right": False,
            "axes.grid": True,
            "grid.alpha": 0.3,
        }
    )
    return plt.subplots(figsize=(width, height), dpi=120)


def _finite(v):
    # +inf PSNR (exact reproduction) is drawn at the ceiling
    if v is None:
        return float("nan")
    return PLOT_CEILING_DB if math.isinf(v) else v


def plot_history(history: list[HistoryPoint], path, title: str = "") -> None:
    fig, ax = report_figure()
    steps = [h.step for h in history]
    ax.plot(steps, [_finite(h.psnr_rgb) for h in history], lw=1.8, color="k", label="PSNR (mean)")
    n_styles = max((len(h.style_psnr) for h in history), default=0)
    for k in range(n_styles):
        ax.plot(steps, [_finite(h.style_psnr[k]) for h in history], lw=1, alpha=0.7, label=f"style {k + 1}")
    if any(h.blend_psnr is not None for h in history):
        ax.plot(steps, [_finite(h.blend_psnr) for h in history], lw=1, ls="--", label="equal blend")
    ax.axhline(QUALITY_DB, color="tab:red", lw=0.8, ls=":", label=f"{QUALITY_DB:.0f} dB")
    ax.set_xlabel("step")
    ax.set_ylabel("PSNR on RGB map (dB)")
    if title:
        ax.set_title(title)
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_eval_report(report: EvalReport, path, title: str = "") -> None:
    rows = report.per_style or []
    labels = [s.name for s in rows] or ["model"]
    psnr_rgb = [_finite(s.psnr_rgb) for s in rows] or [_finite(report.psnr_rgb)]
    psnr_img = [_finite(s.psnr_img) for s in rows] or [_finite(report.psnr_img)]
    de_rgb = [s.delta_e_rgb for s in rows] or [report.delta_e_rgb]
    de_img = [s.delta_e_img for s in rows] or [report.delta_e_img]

    fig, (ax_p, ax_d) = plt.subplots(1, 2, figsize=(9, 3.5), dpi=120)
    xs = range(len(labels))
    width = 0.38
    ax_p.bar([x - width / 2 for x in xs], psnr_rgb, width, label="RGB map")
    ax_p.bar([x + width / 2 for x in xs], psnr_img, width, label="images")
    ax_p.axhline(QUALITY_DB, color="tab:red", lw=0.8, ls=":")
    ax_p.set_ylabel("PSNR (dB)")
    ax_d.bar([x - width / 2 for x in xs], [_nan(v) for v in de_rgb], width, label="RGB map")
    ax_d.bar([x + width / 2 for x in xs], [_nan(v) for v in de_img], width, label="images")
    ax_d.axhline(2.0, color="tab:red", lw=0.8, ls=":")
    ax_d.set_ylabel("mean Delta E 76")
    for ax in (ax_p, ax_d):
        ax.set_xticks(list(xs))
        ax.set_xticklabels(labels, rotation=20, ha="right", fontsize=8)
        ax.spines["top"].set_visible(False)
        ax.spines["right"].set_visible(False)
    ax_d.legend(frameon=False, fontsize=8)
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def _nan(v):
    return float("nan") if v is None else v
