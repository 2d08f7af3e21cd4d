"""Figure rendering for reports: prediction scatters and loss curves.

Everything draws through the Agg backend and writes PNG files next to the
delimited outputs; nothing here opens a window.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .metrics import MetricsReport, ScatterRow  # noqa: E402

_AXIS_LIMITS = (0.5, 9.5)


def _panel(ax, truth, pred, label: str, r: float, conc: float) -> None:
    ax.plot(_AXIS_LIMITS, _AXIS_LIMITS, color="0.6", lw=1, ls="--", zorder=1)
    ax.scatter(truth, pred, s=12, alpha=0.55, edgecolors="none", zorder=2)
    ax.set_xlim(*_AXIS_LIMITS)
    ax.set_ylim(*_AXIS_LIMITS)
    ax.set_xlabel(f"conditioned {label}")
    ax.set_ylabel(f"predicted {label}")
    ax.set_title(f"{label}  (r={r:.3f}, ccc={conc:.3f})", fontsize=10)
    ax.set_aspect("equal")


def scatter_figure(rows: list[ScatterRow], report: MetricsReport,
                   path: Path) -> Path:
    """Two-panel true-vs-predicted scatter on the 1..9 rating scale."""
    fig, (ax_v, ax_a) = plt.subplots(1, 2, figsize=(9, 4.4))
    _panel(ax_v, [r.v_true for r in rows], [r.v_pred for r in rows],
           "valence", report.r_v, report.ccc_v)
    _panel(ax_a, [r.a_true for r in rows], [r.a_pred for r in rows],
           "arousal", report.r_a, report.ccc_a)
    fig.suptitle(f"{report.system_name}  (n={report.n_clips}, fd={report.fd:.4g})")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def loss_curves_figure(records: list[dict], path: Path) -> Path:
    """Training curves: cross entropy and alignment loss over steps."""
    steps = [r["step"] for r in records]
    fig, (ax_ce, ax_al) = plt.subplots(1, 2, figsize=(9, 3.6))
    ax_ce.plot(steps, [r["ce"] for r in records], lw=0.8)
    ax_ce.set_xlabel("step")
    ax_ce.set_ylabel("cross entropy")
    ax_al.plot(steps, [r["align"] for r in records], lw=0.8, color="tab:orange")
    ax_al.set_xlabel("step")
    ax_al.set_ylabel("alignment mse")
    for ax in (ax_ce, ax_al):
        ax.margins(x=0)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
