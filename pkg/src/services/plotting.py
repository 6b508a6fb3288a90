"""
Plotting Service - SVG line charts of ensemble results
"""

import io
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import matplotlib

matplotlib.use('Agg')  # Use non-interactive backend
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd
import seaborn as sns

from src.services.errors import SchemaError

logger = logging.getLogger(__name__)

STYLE_COLUMNS = {
    "time": ["strategy", "alpha", "t", "mean"],
    "snr": ["strategy", "alpha", "time", "mean"],
    "ttt": ["strategy", "alpha", "time_to_threshold"],
}

# adaptive schemes solid red, static schemes dashed blue, others cycle
_SERIES_STYLES = {
    "adaptive": {"color": "#e74c3c", "linestyle": "-"},
    "static": {"color": "#3498db", "linestyle": "--"},
}
_PALETTE = ['#2ecc71', '#f39c12', '#9b59b6', '#95a5a6', '#1abc9c', '#34495e']


def load_results(path: Union[str, Path], style: str) -> pd.DataFrame:
    """Read a results CSV and check it has the columns a plot style needs"""
    if style not in STYLE_COLUMNS:
        raise SchemaError(f"unknown plot style {style!r}; choose from {sorted(STYLE_COLUMNS)}")
    try:
        df = pd.read_csv(path)
    except pd.errors.EmptyDataError:
        raise SchemaError(f"{path} is empty")
    missing = [c for c in STYLE_COLUMNS[style] if c not in df.columns]
    if missing:
        raise SchemaError(f"{path} lacks columns {missing} needed for style '{style}'")
    if df.empty:
        raise SchemaError(f"{path} has a header but no rows")
    return df


def _series_style(name: str, index: int) -> dict:
    for key, style in _SERIES_STYLES.items():
        if key in name.lower():
            return dict(style)
    return {"color": _PALETTE[index % len(_PALETTE)], "linestyle": "-."}


def plot_time(df: pd.DataFrame, ax) -> int:
    """Posterior vs time, one series per (strategy, alpha), labels averaged"""
    series = 0
    for (strategy, alpha), group in df.groupby(["strategy", "alpha"], sort=False):
        curve = group.groupby("t", sort=True)
        mean = curve["mean"].mean()
        style = _series_style(str(strategy), series)
        ax.plot(mean.index, mean.values, label=f"{strategy}, α={alpha:g}", **style)
        if "stderr" in group.columns:
            # stderr of the label-averaged mean, labels treated as independent
            stderr = curve["stderr"].apply(lambda s: np.sqrt((s ** 2).sum()) / len(s))
            ax.fill_between(mean.index, mean - stderr, mean + stderr, color=style["color"], alpha=0.2, linewidth=0)
        series += 1
    ax.set_xlabel("t")
    ax.set_ylabel("mean posterior of correct phase")
    return series


def plot_snr(df: pd.DataFrame, ax) -> int:
    """Posterior vs alpha at fixed times, error bars from the stderr column"""
    series = 0
    for (strategy, time), group in df.groupby(["strategy", "time"], sort=False):
        group = group.sort_values("alpha")
        style = _series_style(str(strategy), series)
        yerr = group["stderr"] if "stderr" in group.columns else None
        ax.errorbar(group["alpha"], group["mean"], yerr=yerr, marker="o", capsize=3,
                    label=f"{strategy}, t={time:g}", **style)
        series += 1
    ax.set_xlabel("α")
    ax.set_ylabel("mean posterior of correct phase")
    return series


def plot_ttt(df: pd.DataFrame, ax) -> int:
    """Time to threshold vs alpha; points that never reached it are dropped"""
    series = 0
    for strategy, group in df.groupby("strategy", sort=False):
        group = group.drop_duplicates(subset=["alpha"]).sort_values("alpha")
        group = group[np.isfinite(group["time_to_threshold"].astype(float))]
        style = _series_style(str(strategy), series)
        ax.plot(group["alpha"], group["time_to_threshold"], marker="o", label=str(strategy), **style)
        series += 1
    ax.set_xlabel("α")
    ax.set_ylabel("time to threshold")
    return series


@dataclass
class Chart:
    svg: str
    series: int


_PLOTTERS = {"time": plot_time, "snr": plot_snr, "ttt": plot_ttt}


def render_svg(df: pd.DataFrame, style: str, title: str = "") -> Chart:
    """Render one chart as SVG text"""
    sns.set_theme(style="whitegrid")
    matplotlib.rcParams["svg.hashsalt"] = "phase-discrimination"

    fig, ax = plt.subplots(figsize=(7, 4.5))
    n_series = _PLOTTERS[style](df, ax)
    if title:
        ax.set_title(title)
    ax.legend(loc="best", fontsize="small")
    plt.tight_layout()

    buffer = io.StringIO()
    fig.savefig(buffer, format="svg", bbox_inches="tight", metadata={"Date": None})
    plt.close(fig)
    logger.info(f"Rendered '{style}' plot with {n_series} series")
    return Chart(svg=buffer.getvalue(), series=n_series)

