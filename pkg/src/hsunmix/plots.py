"""Report figures rendered next to the delimited outputs."""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

FIGURE_DPI = 120


def plot_sweep_curves(rows, out_dir):
    """Render mean rmsSAD and rmsAAD versus SNR, one line per method.

    ``rows`` are sweep-result dicts with snr_db, method, rms_sad and
    rms_aad keys; rows with non-finite metrics (failed cells) are
    skipped.  Returns the written paths.
    """
    out_dir = Path(out_dir)
    methods = sorted({r["method"] for r in rows})
    snrs = sorted({float(r["snr_db"]) for r in rows})
    written = []
    for metric, label, filename in (
        ("rms_sad", "mean rmsSAD (rad)", "rms_sad_vs_snr.png"),
        ("rms_aad", "mean rmsAAD (rad)", "rms_aad_vs_snr.png"),
    ):
        fig, ax = plt.subplots(figsize=(5.0, 3.5))
        for method in methods:
            means = []
            for snr in snrs:
                values = [
                    float(r[metric])
                    for r in rows
                    if r["method"] == method
                    and float(r["snr_db"]) == snr
                    and np.isfinite(float(r[metric]))
                ]
                means.append(np.mean(values) if values else np.nan)
            ax.plot(snrs, means, marker="o", label=method)
        ax.set_xlabel("SNR (dB)")
        ax.set_ylabel(label)
        ax.legend()
        ax.grid(True, alpha=0.3)
        fig.tight_layout()
        path = out_dir / filename
        fig.savefig(path, dpi=FIGURE_DPI)
        plt.close(fig)
        written.append(path)
    return written


def plot_signatures(reference, estimated, names, path, permutation=None):
    """Overlay estimated signatures on their matched references."""
    ref = np.asarray(reference, dtype=float)
    est = np.asarray(estimated, dtype=float)
    count = ref.shape[1]
    if permutation is None:
        permutation = list(range(count))
    ncols = min(3, count)
    nrows = (count + ncols - 1) // ncols
    fig, axes = plt.subplots(nrows, ncols, figsize=(3.2 * ncols, 2.4 * nrows), squeeze=False)
    for j in range(count):
        ax = axes[j // ncols][j % ncols]
        ref_index = permutation[j]
        ax.plot(ref[:, ref_index], color="tab:blue", lw=1.2, label="reference")
        ax.plot(est[:, j], color="tab:red", ls="--", lw=1.2, label="estimate")
        title = names[ref_index] if names and ref_index < len(names) else f"endmember {j}"
        ax.set_title(title, fontsize=9)
        ax.set_xticks([])
    for k in range(count, nrows * ncols):
        axes[k // ncols][k % ncols].axis("off")
    axes[0][0].legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=FIGURE_DPI)
    plt.close(fig)
    return Path(path)


def plot_abundance_maps(abundances, grid, names, path):
    """Render per-endmember abundance maps on the scene grid."""
    s = np.asarray(abundances, dtype=float)
    rows, cols = grid
    count = s.shape[0]
    ncols = min(3, count)
    nrows = (count + ncols - 1) // ncols
    fig, axes = plt.subplots(nrows, ncols, figsize=(2.8 * ncols, 2.4 * nrows), squeeze=False)
    for k in range(count):
        ax = axes[k // ncols][k % ncols]
        image = ax.imshow(s[k].reshape(rows, cols), vmin=0.0, vmax=1.0, cmap="viridis")
        title = names[k] if names and k < len(names) else f"endmember {k}"
        ax.set_title(title, fontsize=9)
        ax.set_xticks([])
        ax.set_yticks([])
        fig.colorbar(image, ax=ax, fraction=0.046)
    for k in range(count, nrows * ncols):
        axes[k // ncols][k % ncols].axis("off")
    fig.tight_layout()
    fig.savefig(path, dpi=FIGURE_DPI)
    plt.close(fig)
    return Path(path)
