"""Result tables, coefficient plots and check-in density grids."""
from __future__ import annotations

import logging
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .explain import stars, t_ppf  # noqa: E402

_logger = logging.getLogger(__name__)

METRIC_LABELS = {"ndcg": "nDCG", "epc": "EPC", "item_exposure": "Item Exposure"}

# fixed hash salt and no date stamp keep the SVG bytes reproducible
_RC = {
    "svg.hashsalt": "poiexplain",
    "svg.fonttype": "none",
    "font.size": 8,
    "axes.titlesize": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
}


def _fmt(x: float, digits: int = 3) -> str:
    if x is None or not np.isfinite(x):
        return "nan"
    return f"{x:.{digits}f}" if abs(x) < 1e6 else f"{x:.{digits}g}"


def markdown_table(frame: pd.DataFrame, index: bool = True) -> str:
    """Render a frame as a GitHub markdown table (strings kept, floats at 3 decimals)."""
    cols = ([frame.index.name or ""] if index else []) + [str(c) for c in frame.columns]
    lines = ["| " + " | ".join(cols) + " |", "|" + "|".join(["---"] * len(cols)) + "|"]
    for key, row in frame.iterrows():
        cells = [str(key)] if index else []
        cells += [_fmt(v) if isinstance(v, (float, np.floating)) else str(v) for v in row]
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# tables


def metric_summary(metrics: pd.DataFrame, cutoff: int = 5,
                   names: Sequence[str] = ("ndcg", "epc", "item_exposure")) -> pd.DataFrame:
    """Mean and standard deviation of each metric@cutoff per recommender, across subsamples."""
    cols = [f"{m}@{cutoff}" for m in names if f"{m}@{cutoff}" in metrics.columns]
    grouped = metrics.groupby("model", sort=False)[cols]
    mean, std = grouped.mean(), grouped.std(ddof=1)
    out = pd.DataFrame(index=mean.index)
    for c in cols:
        out[f"{c} mean"] = mean[c]
        out[f"{c} std"] = std[c]
    out.index.name = "model"
    return out


def coefficient_matrix(tables: Mapping[str, pd.DataFrame]) -> pd.DataFrame:
    """EV x model matrix of ``theta`` annotated with significance stars.

    ``tables`` maps model name to a regression table with ``ev``, ``theta``
    and ``p`` columns.
    """
    columns = {}
    for model, table in tables.items():
        columns[model] = pd.Series([f"{t:.3f}{stars(p)}" for t, p in zip(table["theta"], table["p"])],
                                   index=table["ev"].to_list())
    out = pd.DataFrame(columns)
    out.index.name = "ev"
    return out


# ---------------------------------------------------------------------------
# coefficient plots


def confidence_bounds(theta: np.ndarray, stderr: np.ndarray, dof: int, level: float = 0.95) -> np.ndarray:
    """``(n, 2)`` array of ``theta -/+ t_q,dof * stderr``."""
    q = t_ppf(0.5 + level / 2.0, dof)
    theta, stderr = np.asarray(theta, float), np.asarray(stderr, float)
    return np.column_stack([theta - q * stderr, theta + q * stderr])


def coefficient_plot(tables: Mapping[str, pd.DataFrame], dofs: Mapping[str, int], path: str | Path,
                     title: str = "", level: float = 0.95) -> Path:
    """One panel per model: dots at ``theta``, whiskers spanning the confidence interval.

    The intercept row is left out.  Returns the written path (SVG).
    """
    path = Path(path)
    models = list(tables)
    if not models:
        raise ValueError("no regression tables to plot")
    with plt.rc_context(_RC):
        fig, axes = plt.subplots(1, len(models), figsize=(2.4 * len(models) + 0.8, 3.2), sharey=True, squeeze=False)
        for ax, model in zip(axes[0], models):
            table = tables[model]
            table = table.loc[table["ev"] != "(Intercept)"]
            bounds = confidence_bounds(table["theta"], table["stderr"], dofs[model], level)
            y = np.arange(len(table))[::-1]
            ax.hlines(y, bounds[:, 0], bounds[:, 1], color="0.35", lw=1.2)
            ax.plot(table["theta"], y, "o", color="C0", ms=4)
            ax.axvline(0.0, color="0.6", lw=0.8, ls="--")
            ax.set_yticks(y, table["ev"].to_list())
            ax.set_title(model)
            ax.set_xlabel(r"$\theta$")
        if title:
            fig.suptitle(title)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return path


# ---------------------------------------------------------------------------
# heat maps


def density_grid(lat: np.ndarray, lon: np.ndarray, bbox: Mapping[str, float], bins: int = 50) -> pd.DataFrame:
    """Check-in counts on a ``bins x bins`` lat/lon grid over ``bbox``; one row per cell."""
    lat_edges = np.linspace(bbox["lat_min"], bbox["lat_max"], bins + 1)
    lon_edges = np.linspace(bbox["lon_min"], bbox["lon_max"], bins + 1)
    counts, _, _ = np.histogram2d(np.asarray(lat, float), np.asarray(lon, float), bins=[lat_edges, lon_edges])
    i, j = np.meshgrid(np.arange(bins), np.arange(bins), indexing="ij")
    return pd.DataFrame({
        "lat_bin": i.ravel(), "lon_bin": j.ravel(),
        "lat_min": lat_edges[i.ravel()], "lat_max": lat_edges[i.ravel() + 1],
        "lon_min": lon_edges[j.ravel()], "lon_max": lon_edges[j.ravel() + 1],
        "count": counts.ravel().astype(np.int64),
    })


def heatmap_figure(grids: Mapping[str, pd.DataFrame], path: str | Path) -> Path:
    """Log-scaled density panels, one per grid (e.g. per origin class)."""
    path = Path(path)
    names = list(grids)
    with plt.rc_context(_RC):
        fig, axes = plt.subplots(1, len(names), figsize=(2.6 * len(names), 2.8), squeeze=False)
        for ax, name in zip(axes[0], names):
            g = grids[name]
            bins = int(g["lat_bin"].max()) + 1
            counts = g["count"].to_numpy().reshape(bins, bins)
            extent = (g["lon_min"].min(), g["lon_max"].max(), g["lat_min"].min(), g["lat_max"].max())
            ax.imshow(np.log1p(counts), origin="lower", extent=extent, cmap="magma", aspect="auto")
            ax.set_title(name)
            ax.set_xticks([])
            ax.set_yticks([])
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return path
