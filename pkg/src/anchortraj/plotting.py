"""Static SVG figures of predicted mixtures: groundtruth samples, anchors, MAP
trajectories and per-step 1-sigma ellipses coloured by anchor probability."""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.patches import Ellipse  # noqa: E402

from .geom import points_from_frame  # noqa: E402
from .mixture import TrajectoryMixture, top_indices  # noqa: E402


def ellipse_axes(cov: np.ndarray) -> tuple[float, float, float]:
    """Semi-axes (major, minor) of the 1-sigma ellipse and the major-axis angle in degrees."""
    vals, vecs = np.linalg.eigh(np.asarray(cov, dtype=np.float64))
    major, minor = math.sqrt(max(vals[1], 0.0)), math.sqrt(max(vals[0], 0.0))
    angle = math.degrees(math.atan2(vecs[1, 1], vecs[0, 1]))
    return major, minor, angle


def plot_mixture(path, mix: TrajectoryMixture, gt=None, samples=(), top_k: int | None = None,
                 title: str | None = None, cmap: str = "jet"):
    """Write an SVG and return the indices of the components drawn.

    ``samples`` are world-frame (T, 2) groundtruth paths drawn faintly.
    """
    top_k = mix.K if top_k is None else top_k
    w = mix.weights
    colors = plt.get_cmap(cmap)
    fig, ax = plt.subplots(figsize=(6, 6))
    for s in samples:
        ax.plot(s[:, 0], s[:, 1], color="tab:blue", lw=0.5, alpha=0.3)
    anchors_world = points_from_frame(mix.anchors.anchors, mix.frame)
    for a in anchors_world:
        ax.plot(a[:, 0], a[:, 1], color="0.75", lw=3, zorder=1)
    means = points_from_frame(mix.means(), mix.frame)
    cov = mix.covariances()
    drawn = [int(k) for k in top_indices(w, top_k)]
    for k in drawn:
        c = colors(float(w[k]))
        ax.plot(means[k, :, 0], means[k, :, 1], "-o", color=c, ms=2, lw=1.2, zorder=3,
                label=f"pi={w[k]:.3f}")
        for t in range(mix.T):
            major, minor, angle = ellipse_axes(cov[k, t])
            ax.add_patch(Ellipse(means[k, t], 2 * major, 2 * minor,
                                 angle=angle + math.degrees(mix.frame.heading),
                                 fill=False, ec=c, lw=0.6, zorder=2))
    if gt is not None:
        g = np.asarray(gt)
        ax.plot(g[:, 0], g[:, 1], "k--", lw=1.0, zorder=4, label="groundtruth")
    ax.plot([mix.frame.position.x], [mix.frame.position.y], "ks", ms=4)
    ax.set_aspect("equal")
    ax.legend(loc="best", fontsize=7)
    if title:
        ax.set_title(title)
    fig.savefig(path, format="svg")
    plt.close(fig)
    return drawn
