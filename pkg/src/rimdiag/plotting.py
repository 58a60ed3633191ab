"""Figures for simulated traces and the evaluation matrix.

Everything renders through the Agg backend straight to files.
"""

from __future__ import annotations

from pathlib import Path
from typing import Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .constraints import ViolationKind, build_step_formula, check_sat  # noqa: E402
from .diagnosis import slice_trace_by_step  # noqa: E402
from .evaluation import ALGORITHM_LABELS, CHECK, CROSS, PUBLISHED, TABLE_FAULTS  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
    "svg.hashsalt": "rimdiag",
}
OK_COLOR = "#4c72b0"
BAD_COLOR = "#c44e52"


def _save(fig, path: Union[str, Path]) -> Path:
    path = Path(path)
    metadata = {"Software": None} if path.suffix.lower() == ".png" else None
    fig.savefig(path, bbox_inches="tight", metadata=metadata)
    plt.close(fig)
    return path


def plot_trace(trace, cfg, path: Union[str, Path]) -> Path:
    """Timeline of one product: every reading at its station, violations in red."""
    m, e = cfg.process, cfg.expected
    slices = slice_trace_by_step(m, trace)
    bad = set()
    for step, events in slices.items():
        result = check_sat(build_step_formula(e, m, step), events)
        for v in result.violations:
            if v.kind is ViolationKind.TIMING:
                t = m.timing(v.subject)
                bad.update(s for s in (t.start, t.complete) if s is not None)
            else:
                bad.add(v.subject)

    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(7.0, 3.2))
        labelled = set()
        for ev in trace.events:
            step = m.step_of_sensor(ev.sensor)
            color = BAD_COLOR if ev.sensor in bad else OK_COLOR
            ax.plot(ev.time, step, "o", color=color, ms=5)
            if ev.sensor not in labelled:
                labelled.add(ev.sensor)
                lift = 4 + 8 * (len([s for s in labelled if m.step_of_sensor(s) == step]) - 1)
                ax.annotate(ev.sensor.split(".", 1)[-1], (ev.time, step), xytext=(3, -lift),
                            textcoords="offset points", fontsize=6, va="top")
        ax.set_yticks([s.index for s in m.stations])
        ax.set_yticklabels([f"{s.index} {s.name}" for s in m.stations])
        ax.invert_yaxis()
        ax.set_xlabel("internal time [s]")
        ax.set_title(f"product {trace.product_id}: {trace.verdict}")
        return _save(fig, path)


def plot_evaluation(matrix, path: Union[str, Path]) -> Path:
    """Fault x algorithm grid of correct / incorrect diagnoses, published cells outlined."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.6, 2.8))
        for i, kind in enumerate(TABLE_FAULTS):
            for j in range(2):
                ok = matrix.rows[kind][j]
                agrees = ok == PUBLISHED[kind][j]
                ax.add_patch(plt.Rectangle((j, i), 1, 1, facecolor="#dde8f3" if ok else "#f3dede",
                                           edgecolor="black" if agrees else BAD_COLOR, lw=0.8 if agrees else 2.0))
                ax.text(j + 0.5, i + 0.5, CHECK if ok else CROSS, ha="center", va="center", fontsize=13)
        ax.set_xlim(0, 2)
        ax.set_ylim(len(TABLE_FAULTS), 0)
        ax.set_xticks([0.5, 1.5])
        ax.set_xticklabels(ALGORITHM_LABELS)
        ax.xaxis.tick_top()
        ax.set_yticks([i + 0.5 for i in range(len(TABLE_FAULTS))])
        ax.set_yticklabels([k.label for k in TABLE_FAULTS])
        ax.tick_params(length=0)
        for side in ax.spines.values():
            side.set_visible(False)
        return _save(fig, path)
