"""Figure rendering for the report-producing CLI paths.

Figures are written next to the delimited output: the approximation report
gets a marginal/coupling overview and the convergence experiment gets the
error-versus-distance trend.  Rendering is headless (Agg) and file-only.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .pipeline import PipelineReport
from .potentials import potential_of
from .transport import Coupling

__all__ = ["render_approx_figure", "render_convergence_figure"]


def _plot_potentials(ax, measures: dict, title: str) -> None:
    grids = []
    for m in measures.values():
        grids.append(m.positions)
    lo = min(g[0] for g in grids)
    hi = max(g[-1] for g in grids)
    pad = 0.25 * (hi - lo + 1.0)
    ys = np.linspace(lo - pad, hi + pad, 400)
    for label, m in measures.items():
        ax.plot(ys, potential_of(m).evaluate(ys), label=label, lw=1.4)
    ax.set_title(title)
    ax.set_xlabel("y")
    ax.set_ylabel("potential")
    ax.legend(fontsize=8)


def _plot_joint(ax, p: Coupling, q: Coupling) -> None:
    for coupling, color, label in ((p, "tab:blue", "input"), (q, "tab:red", "output")):
        xs, ys, ms = [], [], []
        for x, y, m in coupling.joint():
            xs.append(x)
            ys.append(y)
            ms.append(m)
        sizes = 400.0 * np.asarray(ms) / max(coupling.total_mass, 1e-300)
        ax.scatter(xs, ys, s=sizes, alpha=0.45, color=color, label=label, edgecolors="none")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    ax.set_title("joint supports (area = mass)")
    ax.legend(fontsize=8)


def render_approx_figure(
    p: Coupling, out: Coupling, report: PipelineReport, path: str
) -> None:
    """Two-panel overview of one approximation run, written to `path`."""
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    _plot_potentials(
        axes[0],
        {
            "first marginal (input)": p.first_marginal(),
            "second marginal (input)": p.second_marginal(),
            "first marginal (new)": out.first_marginal(),
            "second marginal (new)": out.second_marginal(),
        },
        "marginal potentials",
    )
    _plot_joint(axes[1], p, out)
    fig.suptitle(
        f"adapted W1 = {report.final_aw1:.6f}   "
        f"marginal W1 errors = ({report.w1_mu_error:.4f}, {report.w1_nu_error:.4f})",
        fontsize=10,
    )
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_convergence_figure(rows: list[dict], path: str) -> None:
    """Error-versus-distance trend of a convergence experiment."""
    good = [r for r in rows if "aw1" in r]
    fig, ax = plt.subplots(figsize=(6, 4))
    if good:
        levels = [r["level"] for r in good]
        ax.plot(levels, [r["aw1"] for r in good], "o-", label="adapted W1 to input")
        ax.plot(levels, [r["w1_mu"] for r in good], "s--", label="W1 error, first marginal")
        ax.plot(levels, [r["w1_nu"] for r in good], "d--", label="W1 error, second marginal")
        ax.set_yscale("log")
    ax.set_xlabel("level")
    ax.set_ylabel("distance")
    ax.set_title("convergence experiment")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
