"""SVG charts from sweep output, shaped like the usual ablation figures.

``bars_vs_p``       grouped bars of score against p, one bar per mode.
``heat_delta_r``    heatmap of mean score over (delta, target_r).
``lines_selection`` score against target_r, one line per selection rule.

Artists carry ``gid`` attributes (``bar-<mode>-<p>``, ``line-<selection>``,
``cell-<delta>-<r>``) so the SVG structure can be inspected.
"""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from maxroam.harness.experiment import read_sweep_csv  # noqa: E402

PLOT_KINDS = ("bars_vs_p", "heat_delta_r", "lines_selection")


class PlotError(ValueError):
    pass


def _rows(csv_source) -> list[dict]:
    rows = [r for r in read_sweep_csv(csv_source) if r.get("status", "ok") == "ok"]
    if not rows:
        raise PlotError("no rows")
    return rows


def _need(rows, *cols):
    missing = [c for c in cols if c not in rows[0]]
    if missing:
        raise PlotError(f"CSV lacks column(s) {missing} needed for this plot")


def _grouped(rows, keys) -> dict[tuple, list[float]]:
    out = defaultdict(list)
    for r in rows:
        out[tuple(r[k] for k in keys)].append(float(r["score"]))
    return out


def _bars(ax, rows):
    _need(rows, "p", "score")
    if "mode" not in rows[0]:
        for r in rows:
            r["mode"] = "mr"
    groups = _grouped(rows, ("p", "mode"))
    ps = sorted({k[0] for k in groups}, key=float)
    modes = sorted({k[1] for k in groups})
    width = 0.8 / len(modes)
    x = np.arange(len(ps))
    for j, mode in enumerate(modes):
        for i, p in enumerate(ps):
            vals = groups.get((p, mode))
            if not vals:
                continue
            bar = ax.bar(x[i] + (j - (len(modes) - 1) / 2) * width, np.mean(vals), width,
                         yerr=np.std(vals), color=f"C{j}", label=mode if i == 0 else None)
            bar.patches[0].set_gid(f"bar-{mode}-{p}")
    ax.set_xticks(x, ps)
    ax.set_xlabel("sharing ratio p")
    ax.set_ylabel("best validation score")
    ax.legend()


def _heat(ax, rows):
    _need(rows, "delta", "target_r", "score")
    groups = _grouped(rows, ("delta", "target_r"))
    deltas = sorted({k[0] for k in groups}, key=float)
    rs = sorted({k[1] for k in groups}, key=float)
    grid = np.full((len(deltas), len(rs)), np.nan)
    for (d, r), vals in groups.items():
        grid[deltas.index(d), rs.index(r)] = np.mean(vals)
    im = ax.imshow(grid, origin="lower", aspect="auto", cmap="viridis")
    im.set_gid("heatmap")
    for i, d in enumerate(deltas):
        for j, r in enumerate(rs):
            if np.isfinite(grid[i, j]):
                ax.text(j, i, f"{grid[i, j]:.3f}", ha="center", va="center", fontsize=7,
                        color="w", gid=f"cell-{d}-{r}")
    ax.set_xticks(range(len(rs)), rs)
    ax.set_yticks(range(len(deltas)), deltas)
    ax.set_xlabel("update completion rate r")
    ax.set_ylabel("update interval delta (epochs)")
    ax.figure.colorbar(im, ax=ax)


def _lines(ax, rows):
    _need(rows, "selection", "target_r", "score")
    groups = _grouped(rows, ("selection", "target_r"))
    for j, sel in enumerate(sorted({k[0] for k in groups})):
        rs = sorted({k[1] for k in groups if k[0] == sel}, key=float)
        means = [np.mean(groups[(sel, r)]) for r in rs]
        errs = [np.std(groups[(sel, r)]) for r in rs]
        line = ax.errorbar([float(r) for r in rs], means, yerr=errs, marker="o", color=f"C{j}", label=sel)
        line.lines[0].set_gid(f"line-{sel}")
    ax.set_xlabel("update completion rate r")
    ax.set_ylabel("best validation score")
    ax.legend()


_DRAW = {"bars_vs_p": _bars, "heat_delta_r": _heat, "lines_selection": _lines}


def render(csv_source, kind: str) -> str:
    """Return the chart as SVG text."""
    if kind not in _DRAW:
        raise PlotError(f"unknown plot kind {kind!r}; expected one of {PLOT_KINDS}")
    rows = _rows(csv_source)
    with plt.rc_context({"svg.hashsalt": "maxroam", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6, 4))
        try:
            _DRAW[kind](ax, rows)
            fig.tight_layout()
            import io

            buf = io.StringIO()
            fig.savefig(buf, format="svg", metadata={"Date": None})
        finally:
            plt.close(fig)
    return buf.getvalue()


def plot(csv_source, kind: str, out_path) -> Path:
    out = Path(out_path)
    out.write_text(render(csv_source, kind))
    return out
