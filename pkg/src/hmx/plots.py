"""Figure rendering for benchmark reports.

Figures land next to the delimited output file, named after its stem.
Rendering is headless (Agg) and optional: the CLI turns it off with
--no-plot, and library users simply don't call these functions.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

__all__ = ["render_figures"]

_MARKERS = ("o", "s", "D", "^", "v", "P", "X", "*", "h", "<", ">")


def _by_scheme(records):
    """Group records by scheme label, preserving first-seen order."""
    groups = {}
    for rec in records:
        groups.setdefault(rec.scheme, []).append(rec)
    for recs in groups.values():
        recs.sort(key=lambda r: r.threads)
    return groups


def _line_plot(groups, attr, ylabel, title, path, logy=False):
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    for k, (label, recs) in enumerate(groups.items()):
        xs = [r.threads for r in recs]
        ys = [getattr(r, attr) for r in recs]
        ax.plot(xs, ys, marker=_MARKERS[k % len(_MARKERS)], label=label)
    ax.set_xlabel("threads")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    if logy:
        ax.set_yscale("log")
    xs_all = sorted({r.threads for recs in groups.values() for r in recs})
    ax.set_xticks(xs_all)
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def _bar_plot(groups, attr, ylabel, title, path):
    labels = list(groups)
    values = []
    for recs in groups.values():
        v = getattr(recs[0], attr)
        values.append(0 if v is None else v)
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    ax.bar(range(len(labels)), values)
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def render_figures(records, out_path, mode: str) -> list[str]:
    """Render PNG figures for a benchmark run next to `out_path`.

    Always writes a time-vs-threads and a speedup-vs-threads figure;
    solve mode adds an iteration-count bar chart. Returns the paths.
    """
    if not records:
        raise ValueError("no records to plot")
    stem, _ = os.path.splitext(str(out_path))
    groups = _by_scheme(records)
    what = "matvec" if mode == "matvec" else "solve"
    written = [
        _line_plot(groups, "mean_time_s", "mean time [s]",
                   f"{what} time per scheme", f"{stem}_times.png", logy=True),
        _line_plot(groups, "speedup", "speedup vs m1-double",
                   f"{what} speedup per scheme", f"{stem}_speedup.png"),
    ]
    if mode == "solve":
        written.append(
            _bar_plot(groups, "iterations", "iterations to converge",
                      "solver iterations per scheme", f"{stem}_iterations.png"))
    return written
