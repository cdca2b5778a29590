"""
SVG figures for parameter scans.
1D scans become log-scale line plots, 2D scans log-colour heatmaps with
optional analytic seam overlays.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple, Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.colors import LogNorm

from scan import EP_CAP, ScanResult, SeamPoint

logger = logging.getLogger(__name__)

# (label, x values, y values) drawn on top of a 2D heatmap
Overlay = Tuple[str, Sequence[float], Sequence[float]]


def _masked_field(r: ScanResult, observable: str) -> np.ndarray:
    values = np.array(r.values[observable], dtype=float)
    values = np.minimum(values, EP_CAP)
    bad = r.excluded | ~np.isfinite(values) | (values <= 0)
    return np.ma.masked_where(bad, values)


def plot_scan(r: ScanResult, path: Union[str, Path], observable: str = "ep_strength",
              seams: Optional[Sequence[Overlay]] = None,
              extracted: Optional[Sequence[SeamPoint]] = None,
              config_echo: Optional[Dict[str, Any]] = None) -> Path:
    """
    Render a scan to SVG.

    Args:
        r: scan result
        path: output file
        observable: field to draw
        seams: analytic seam curves, each (label, axis1 values, axis2 values)
        extracted: numerically extracted seam points to mark
        config_echo: resolved run configuration stored in the SVG metadata

    Returns:
        The written path
    """
    if observable not in r.values:
        raise KeyError(f"observable {observable!r} not in scan result")
    path = Path(path)
    axis1, axis2 = r.axis_names
    field_values = _masked_field(r, observable)

    fig, ax = plt.subplots(figsize=(7, 5))
    if not r.is_2d:
        ax.semilogy(r.grid1, field_values, "-", color="#1f77b4", linewidth=1.5)
        if extracted:
            ax.semilogy([p.axis1 for p in extracted], [min(p.value, EP_CAP) for p in extracted],
                        "o", color="#d62728", markersize=5, label="seam")
            ax.legend(loc="best")
        ax.set_xlabel(axis1)
        ax.set_ylabel(observable)
    else:
        # pcolormesh wants (rows=axis2, cols=axis1)
        image = field_values.T
        finite = image.compressed()
        norm = LogNorm(vmin=finite.min(), vmax=finite.max()) if finite.size else None
        mesh = ax.pcolormesh(r.grid1, r.grid2, image, norm=norm, shading="nearest", cmap="viridis")
        fig.colorbar(mesh, ax=ax, label=observable)
        for label, xs, ys in seams or ():
            ax.plot(xs, ys, "--", color="white", linewidth=1.2, label=label)
        if extracted:
            ax.plot([p.axis1 for p in extracted], [p.axis2 for p in extracted],
                    ".", color="#d62728", markersize=3, label="extracted")
        if seams or extracted:
            ax.legend(loc="best", fontsize=8)
        ax.set_xlim(r.grid1[0], r.grid1[-1])
        ax.set_ylim(r.grid2[0], r.grid2[-1])
        ax.set_xlabel(axis1)
        ax.set_ylabel(axis2)
    ax.grid(True, alpha=0.3, linestyle="--", linewidth=0.8)

    echo = config_echo if config_echo is not None else r.meta.get("config", {})
    metadata = {
        "Title": f"{observable} scan",
        "Description": json.dumps(echo, sort_keys=True),
        "Date": None,
    }
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=metadata)
    plt.close(fig)
    logger.info(f"Wrote plot to {path}")
    return path
