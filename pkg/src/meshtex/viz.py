"""Colored-mesh exports and report figures.

Field visualizations encode the tangent direction angle modulo 90
degrees as hue; singular faces are painted red. Label visualizations
use a fixed 20-color palette. Figures are rendered with matplotlib to
files next to the delimited outputs.
"""

from __future__ import annotations

import colorsys

import numpy as np

from .errors import ValidationError
from .meshio import save_colored_ply

# fixed 20-color palette (tab20 ordering)
PALETTE = np.array([
    (0.121, 0.466, 0.705), (0.682, 0.780, 0.909), (1.000, 0.498, 0.054),
    (1.000, 0.733, 0.470), (0.172, 0.627, 0.172), (0.596, 0.874, 0.541),
    (0.839, 0.152, 0.156), (1.000, 0.596, 0.588), (0.580, 0.403, 0.741),
    (0.772, 0.690, 0.835), (0.549, 0.337, 0.294), (0.768, 0.611, 0.580),
    (0.890, 0.466, 0.760), (0.968, 0.713, 0.823), (0.498, 0.498, 0.498),
    (0.780, 0.780, 0.780), (0.737, 0.741, 0.133), (0.858, 0.858, 0.553),
    (0.090, 0.745, 0.811), (0.619, 0.854, 0.898),
])

SINGULAR_RED = np.array([1.0, 0.0, 0.0])


def field_vertex_colors(field) -> np.ndarray:
    """Hue from the direction angle mod 90 degrees in a global chart."""
    n = field.normals
    # reference direction: global +x projected to the tangent plane,
    # +y where the normal is nearly parallel to x
    ref = np.tile(np.array([1.0, 0.0, 0.0]), (len(n), 1))
    near_x = np.abs(n[:, 0]) > 0.9
    ref[near_x] = (0.0, 1.0, 0.0)
    ref -= n * np.einsum("ij,ij->i", n, ref)[:, None]
    ref /= np.linalg.norm(ref, axis=1)[:, None]
    ortho = np.cross(n, ref)
    c = np.einsum("ij,ij->i", field.i_dirs, ref)
    s = np.einsum("ij,ij->i", field.i_dirs, ortho)
    hue = (np.arctan2(s, c) % (0.5 * np.pi)) / (0.5 * np.pi)
    return np.array([colorsys.hsv_to_rgb(h, 0.85, 0.95) for h in hue])


def label_vertex_colors(labels, n_vertices: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if len(labels) != n_vertices:
        raise ValidationError(
            f"label count {len(labels)} != vertex count {n_vertices}")
    return PALETTE[labels % len(PALETTE)]


def field_face_colors(mesh, field) -> np.ndarray:
    colors = np.full((len(mesh.faces), 3), 0.85)
    for face, _q in field.singularities:
        colors[face] = SINGULAR_RED
    return colors


def write_field_viz(mesh, field, path):
    save_colored_ply(mesh, field_vertex_colors(field), path,
                     face_colors=field_face_colors(mesh, field))


def write_label_viz(mesh, labels, path):
    save_colored_ply(mesh, label_vertex_colors(labels, len(mesh.vertices)),
                     path)


# -- report figures ---------------------------------------------------------

def _pyplot():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def figure_energy_curve(energy_log, path):
    """Per-level smoothness energy across Gauss-Seidel iterations."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    for entry in energy_log:
        xs = np.arange(len(entry["iterations"]) + 1)
        ys = [entry["pre"]] + list(entry["iterations"])
        ax.plot(xs, ys, marker=".",
                label=f"level {entry['level']} ({entry['vertices']} verts)")
    ax.set_xlabel("Gauss-Seidel iteration")
    ax.set_ylabel("smoothness energy")
    ax.set_yscale("symlog", linthresh=1e-6)
    if len(energy_log) <= 10:
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def figure_training_curve(history, path, title="training"):
    plt = _pyplot()
    fig, ax1 = plt.subplots(figsize=(6, 4))
    epochs = [h["epoch"] for h in history]
    ax1.plot(epochs, [h["loss"] for h in history], "C0.-", label="loss")
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("loss", color="C0")
    ax2 = ax1.twinx()
    ax2.plot(epochs, [h["accuracy"] for h in history], "C1.-",
             label="accuracy")
    ax2.set_ylabel("train accuracy", color="C1")
    ax1.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def figure_patch_montage(dataset, path, max_patches=16):
    """Grid of patch images from a PatchDataset (first channel[s])."""
    plt = _pyplot()
    k = min(max_patches, len(dataset.records))
    cols = max(1, int(np.ceil(np.sqrt(k))))
    rows = max(1, int(np.ceil(k / cols)))
    fig, axes = plt.subplots(rows, cols, figsize=(1.6 * cols, 1.6 * rows),
                             squeeze=False)
    for ax in axes.ravel():
        ax.axis("off")
    for i in range(k):
        r = dataset.records[i]
        img = r.values if dataset.C == 3 else r.values[..., 0]
        ax = axes[i // cols][i % cols]
        ax.imshow(np.clip(img, 0, 1) if dataset.C == 3 else img,
                  origin="lower", cmap=None if dataset.C == 3 else "viridis")
        ax.set_title(f"#{i}", fontsize=6)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def figure_spacing_histogram(samples, spacing, path):
    from scipy.spatial import cKDTree

    plt = _pyplot()
    pos = np.array([s.position for s in samples])
    fig, ax = plt.subplots(figsize=(6, 4))
    if len(pos) > 1:
        d, _ = cKDTree(pos).query(pos, k=2)
        ax.hist(d[:, 1], bins=40, color="C0", alpha=0.8)
        ax.axvline(spacing, color="C3", linestyle="--", label="target")
        ax.legend()
    ax.set_xlabel("nearest-neighbor distance (m)")
    ax.set_ylabel("samples")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def figure_confusion(confusion, path, class_names=None):
    plt = _pyplot()
    confusion = np.asarray(confusion)
    fig, ax = plt.subplots(figsize=(4.5, 4))
    im = ax.imshow(confusion, cmap="Blues")
    for r in range(confusion.shape[0]):
        for c in range(confusion.shape[1]):
            ax.text(c, r, str(int(confusion[r, c])), ha="center",
                    va="center", fontsize=8)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    if class_names is not None:
        ax.set_xticks(range(len(class_names)), class_names, fontsize=7)
        ax.set_yticks(range(len(class_names)), class_names, fontsize=7)
    fig.colorbar(im, shrink=0.8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
