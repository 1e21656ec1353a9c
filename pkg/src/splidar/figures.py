"""Figure rendering for restoration reports.

Every report path can drop PNG figures next to the delimited output: the
estimated images, the per-level quality curves against SBR, and the solver
cost trace.  Rendering uses the Agg backend so it works headless.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed metadata keeps PNG output byte-reproducible
_META = {"Software": "splidar"}


def plot_images(depth, refl, path) -> str:
    fig, axes = plt.subplots(1, 2, figsize=(9, 4))
    im0 = axes[0].imshow(np.asarray(depth), cmap="viridis")
    axes[0].set_title("depth (bins)")
    fig.colorbar(im0, ax=axes[0], fraction=0.046)
    im1 = axes[1].imshow(np.asarray(refl), cmap="magma")
    axes[1].set_title("reflectivity")
    fig.colorbar(im1, ax=axes[1], fraction=0.046)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_META)
    plt.close(fig)
    return str(path)


def plot_level_curves(levels, path) -> str:
    """SRE and N-Bias per reflectivity level against SBR (log axis)."""
    sbrs = [row.sbr for row in levels]
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    axes[0].semilogx(sbrs, [row.sre_depth for row in levels], "o-",
                     label="depth")
    axes[0].semilogx(sbrs, [row.sre_refl for row in levels], "s-",
                     label="reflectivity")
    axes[0].set_xlabel("SBR")
    axes[0].set_ylabel("SRE (dB)")
    axes[0].legend()
    axes[0].grid(True, which="both", alpha=0.3)
    axes[1].loglog(sbrs, [max(row.nbias_depth, 1e-12) for row in levels],
                   "o-", label="depth")
    axes[1].loglog(sbrs, [max(row.nbias_refl, 1e-12) for row in levels],
                   "s-", label="reflectivity")
    axes[1].set_xlabel("SBR")
    axes[1].set_ylabel("N-Bias")
    axes[1].legend()
    axes[1].grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_META)
    plt.close(fig)
    return str(path)


def plot_cost_trace(costs, path, ylabel: str = "negative log posterior") -> str:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(np.arange(1, len(costs) + 1), costs, "-")
    ax.set_xlabel("iteration")
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_META)
    plt.close(fig)
    return str(path)
