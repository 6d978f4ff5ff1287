"""Matplotlib renderings of the report CSVs (effect curves, multistart
distributions, sensitivity bounds and contours). Headless Agg backend; one
chart per file, written next to the delimited output."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "save_estimate_curve",
    "save_multistart_objectives",
    "save_multistart_deltas",
    "save_sensitivity_bounds",
    "save_contours",
]

_DPI = 120


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def save_estimate_curve(rows: list[dict], path) -> str:
    """Incremental-effect curves with Wald bands, one line per label."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    labels = sorted({r["label"] for r in rows})
    for label in labels:
        sub = sorted((r for r in rows if r["label"] == label),
                     key=lambda r: r["gelbrich_target"])
        x = [r["gelbrich_target"] for r in sub]
        y = [r["theta_hat"] for r in sub]
        lo = [r["ci_lo"] for r in sub]
        hi = [r["ci_hi"] for r in sub]
        line, = ax.plot(x, y, marker="o", ms=3, label=label)
        ax.fill_between(x, lo, hi, alpha=0.15, color=line.get_color())
    ax.axhline(0.0, color="0.4", lw=0.8, ls="--")
    ax.set_xlabel("Gelbrich target c")
    ax.set_ylabel("incremental effect")
    ax.legend(fontsize=8)
    return _finish(fig, path)


def save_multistart_objectives(per_target: dict[float, list[float]], path) -> str:
    """Distribution of endpoint objectives across random starts per target."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    targets = sorted(per_target)
    data = [per_target[c] for c in targets]
    ax.boxplot(data, positions=range(len(targets)), widths=0.6)
    ax.set_xticks(range(len(targets)))
    ax.set_xticklabels([f"{c:g}" for c in targets])
    ax.set_xlabel("Gelbrich target c")
    ax.set_ylabel("objective at endpoint")
    return _finish(fig, path)


def save_multistart_deltas(per_target: dict[float, np.ndarray], exposure_names,
                           path) -> str:
    """Per-exposure distributions of the endpoint tilt across starts."""
    targets = sorted(per_target)
    q = np.asarray(per_target[targets[0]]).shape[1]
    names = list(exposure_names) if exposure_names else [f"w{j}" for j in range(q)]
    fig, axes = plt.subplots(q, 1, figsize=(7, 1.6 * q), sharex=True)
    axes = np.atleast_1d(axes)
    for j in range(q):
        data = [np.asarray(per_target[c])[:, j] for c in targets]
        axes[j].boxplot(data, positions=range(len(targets)), widths=0.6)
        axes[j].axhline(0.0, color="0.4", lw=0.6, ls="--")
        axes[j].set_ylabel(names[j], fontsize=8)
    axes[-1].set_xticks(range(len(targets)))
    axes[-1].set_xticklabels([f"{c:g}" for c in targets])
    axes[-1].set_xlabel("Gelbrich target c")
    return _finish(fig, path)


def save_sensitivity_bounds(rows: list[dict], path) -> str:
    """Point estimates with point-identified sets and adjusted 95% bounds."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    labels = sorted({r["label"] for r in rows})
    for label in labels:
        sub = sorted((r for r in rows if r["label"] == label),
                     key=lambda r: r["gelbrich_target"])
        x = [r["gelbrich_target"] for r in sub]
        ax.plot(x, [r["theta_hat"] for r in sub], marker="o", ms=3, label=label)
        ax.fill_between(x, [r["ci_lo"] for r in sub], [r["ci_hi"] for r in sub],
                        alpha=0.15)
    ax.axhline(0.0, color="0.4", lw=0.8, ls="--")
    ax.set_xlabel("Gelbrich target c")
    ax.set_ylabel("adjusted bounds")
    ax.legend(fontsize=8)
    return _finish(fig, path)


def save_contours(contours: dict[str, list[tuple[float, float]]], path) -> str:
    """Confounding-strength combinations that drive the adjusted upper bound
    to zero; farther from the origin means more robust."""
    fig, ax = plt.subplots(figsize=(5.5, 4.5))
    for label, pts in sorted(contours.items()):
        if not pts:
            continue
        pts = sorted(pts)
        ax.plot([p[0] for p in pts], [p[1] for p in pts], label=label)
    ax.set_xlabel(r"$\eta_Y^2$")
    ax.set_ylabel(r"$\eta_\alpha^2$")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1)
    ax.legend(fontsize=8)
    return _finish(fig, path)
