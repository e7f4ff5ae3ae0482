"""Static SVG figures for a finished run.

Uses the non-interactive Agg backend.  A fixed ``svg.hashsalt`` and an empty
``Date`` metadata entry make the output byte-for-byte reproducible.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .ellipsoid import Ellipsoid  # noqa: E402

_RC = {
    "svg.hashsalt": "ljfuse",
    "svg.fonttype": "path",
    "figure.figsize": (6.4, 4.0),
    "axes.grid": True,
    "grid.alpha": 0.3,
}


def _save(fig, path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_consensus(trace, path, zoom: float | None = None) -> None:
    """Local estimates ``s_hat_i`` against ``s(x)``, full horizon plus an early zoom."""
    t = trace.times
    if zoom is None:
        zoom = 0.06 if trace.t_cons is None else max(0.06, 2.0 * trace.t_cons)
    with plt.rc_context(_RC):
        fig, (ax, axz) = plt.subplots(1, 2, figsize=(9.0, 3.8), gridspec_kw={"width_ratios": [2, 1]})
        for a, sel in ((ax, slice(None)), (axz, t <= zoom)):
            for i in range(trace.s_hat.shape[1]):
                a.plot(t[sel], trace.s_hat[sel, i], lw=0.8, label=rf"$\hat s_{{{i + 1}}}$")
            a.plot(t[sel], trace.s[sel], "k--", lw=1.2, label=r"$s(x)$")
            a.set_xlabel("t")
        eps = getattr(trace, "epsilon", None)
        if eps is not None:
            ax.axhspan(1.0 - eps, 1.0, color="0.85", zorder=0)
        ax.axvline(trace.t_c, color="0.4", lw=0.8, ls=":")
        ax.set_ylabel("estimate")
        ax.set_title("consensus on s(x)")
        axz.set_title(f"t <= {zoom:g}")
        ax.legend(fontsize=7, ncol=2, loc="lower right")
        fig.tight_layout()
        _save(fig, path)


def plot_weights(trace, path, lambda_star=None) -> None:
    """Weights ``lambda_i(t) = x_i^2 / N``; dashed lines mark reference optima."""
    lam = trace.lam
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        for i in range(lam.shape[1]):
            (line,) = ax.plot(trace.times, lam[:, i], lw=1.0, label=rf"$\lambda_{{{i + 1}}}$")
            if lambda_star is not None:
                ax.axhline(lambda_star[i], color=line.get_color(), ls="--", lw=0.7)
        ax.axvline(trace.t_c, color="0.4", lw=0.8, ls=":")
        ax.set_xlabel("t")
        ax.set_ylabel(r"$\lambda_i$")
        ax.set_title("weights")
        ax.legend(fontsize=7, ncol=3)
        fig.tight_layout()
        _save(fig, path)


def plot_ellipses(P_list, outer_shapes: dict, path, n_points: int = 300) -> None:
    """Input ellipses ``E(P_i)`` in grey with the outer ellipses ``{y : y^T Q y <= 1}`` on top.

    ``outer_shapes`` maps a legend label to the shape matrix ``Q``.  Only
    defined for two-dimensional instances.
    """
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5.0, 5.0))
        for k, P in enumerate(P_list):
            pts = Ellipsoid.from_covariance(P).boundary(n_points)
            ax.plot(pts[:, 0], pts[:, 1], color="0.6", lw=0.9, label="inputs" if k == 0 else None)
        styles = ["-", "--", "-.", ":"]
        for k, (label, Q) in enumerate(outer_shapes.items()):
            pts = Ellipsoid(np.asarray(Q)).boundary(n_points)
            ax.plot(pts[:, 0], pts[:, 1], ls=styles[k % len(styles)], lw=1.6, label=label)
        ax.set_aspect("equal", adjustable="datalim")
        ax.set_title("outer ellipse")
        ax.legend(fontsize=8)
        fig.tight_layout()
        _save(fig, path)
