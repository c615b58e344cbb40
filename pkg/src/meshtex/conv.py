"""Texture-space convolution with 4-fold rotation-invariant weights.

Points in a patch are grouped into a 3x3 texture grid; the four corner
cells share weight matrix h1, the four edge cells h2, and the center
cell h3. Because a 90-degree rotation permutes cells within (never
across) categories, the aggregated output is invariant to the frame's
4-fold ambiguity. Aggregation is channel-wise max or mean followed by
a bias and ReLU.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

CORNER, EDGE, CENTER = 0, 1, 2

# category of each (row, col) cell of the 3x3 grid
CELL_CATEGORY = np.array([
    [CORNER, EDGE, CORNER],
    [EDGE, CENTER, EDGE],
    [CORNER, EDGE, CORNER],
], dtype=np.int64)


@dataclass
class TextureConvWeights:
    """Per-category 1x1 weights (C_in x C_out), shared bias, aggregation."""

    h1: np.ndarray            # corners
    h2: np.ndarray            # edges
    h3: np.ndarray            # center
    bias: np.ndarray          # (C_out,)
    aggregation: str = "max"  # "max" or "avg"

    def __post_init__(self):
        if self.aggregation not in ("max", "avg"):
            raise ValidationError("aggregation must be 'max' or 'avg'")
        shape = self.h1.shape
        if self.h2.shape != shape or self.h3.shape != shape:
            raise ValidationError("h1/h2/h3 shapes differ")
        if self.bias.shape != (shape[1],):
            raise ValidationError("bias length must equal C_out")
        for a in (self.h1, self.h2, self.h3, self.bias):
            if not np.all(np.isfinite(a)):
                raise ValidationError("non-finite weight")

    @classmethod
    def random(cls, c_in, c_out, rng, aggregation="max", scale=None,
               dtype=np.float64):
        scale = scale if scale is not None else 1.0 / np.sqrt(c_in)
        make = lambda: (rng.standard_normal((c_in, c_out)) * scale).astype(dtype)
        return cls(h1=make(), h2=make(), h3=make(),
                   bias=np.zeros(c_out, dtype=dtype), aggregation=aggregation)


def cell_of(t, rho) -> tuple[int, int]:
    """(row, col) of the 3x3 cell containing texture coordinate t.

    Cells are half-open with exact-boundary points assigned to the
    lower-index cell; requires ||t||_inf < rho.
    """
    tx, ty = float(t[0]), float(t[1])
    if max(abs(tx), abs(ty)) >= rho:
        raise ValidationError("coordinate outside the patch square")
    return _index(ty, rho), _index(tx, rho)


def _index(coord, rho):
    u = (coord + rho) / (2.0 * rho / 3.0)
    idx = int(np.ceil(u)) - 1
    return min(max(idx, 0), 2)


def group_texture_cells(t, rho) -> tuple[tuple[int, int], int]:
    """Cell (row, col) and category for one texture coordinate."""
    row, col = cell_of(t, rho)
    return (row, col), int(CELL_CATEGORY[row, col])


def _categories(coords, rho) -> np.ndarray:
    coords = np.asarray(coords, dtype=np.float64)
    if coords.size and np.max(np.abs(coords)) >= rho:
        raise ValidationError("coordinate outside the patch square")
    u = (coords + rho) / (2.0 * rho / 3.0)
    idx = np.clip(np.ceil(u).astype(np.int64) - 1, 0, 2)
    return CELL_CATEGORY[idx[:, 1], idx[:, 0]]


def _as_arrays(points):
    """Accept list of (t, feature) pairs or an (coords, feats) tuple."""
    if isinstance(points, tuple) and len(points) == 2:
        coords, feats = points
        return (np.asarray(coords, dtype=np.float64),
                np.asarray(feats))
    coords = np.array([np.asarray(t, dtype=np.float64) for t, _ in points]) \
        if points else np.zeros((0, 2))
    feats = np.array([np.asarray(f) for _, f in points]) \
        if points else np.zeros((0, 0))
    return coords, feats


def texture_conv_forward(points, rho, weights: TextureConvWeights,
                         return_state: bool = False):
    """ReLU(bias + aggregate of h_category(t)^T feature over points).

    An empty patch yields a zero vector. Pass return_state=True to keep
    what the backward pass needs.
    """
    coords, feats = _as_arrays(points)
    c_out = weights.h1.shape[1]
    if len(coords) == 0:
        out = np.zeros(c_out, dtype=weights.h1.dtype)
        return (out, None) if return_state else out
    if feats.shape[1] != weights.h1.shape[0]:
        raise ValidationError("feature width does not match weights")
    cats = _categories(coords, rho)
    transformed = np.empty((len(coords), c_out), dtype=weights.h1.dtype)
    for cat, h in ((CORNER, weights.h1), (EDGE, weights.h2),
                   (CENTER, weights.h3)):
        rows = cats == cat
        if np.any(rows):
            transformed[rows] = feats[rows] @ h
    if weights.aggregation == "max":
        argmax = np.argmax(transformed, axis=0)  # first index wins ties
        pooled = transformed[argmax, np.arange(c_out)]
    else:
        argmax = None
        pooled = transformed.mean(axis=0)
    pre_relu = pooled + weights.bias
    out = np.maximum(pre_relu, 0.0)
    if not return_state:
        return out
    state = {"coords": coords, "feats": feats, "cats": cats,
             "argmax": argmax, "pre_relu": pre_relu, "weights": weights}
    return out, state


def texture_conv_backward(state, grad_out):
    """Exact reverse-mode gradients of texture_conv_forward.

    Returns (grad_feats, grad_h1, grad_h2, grad_h3, grad_bias). For max
    aggregation the gradient flows only to the argmax contributor per
    channel (ties resolved to the lowest point index by the forward).
    """
    if state is None:
        raise ValidationError("forward state missing (empty patch?)")
    w: TextureConvWeights = state["weights"]
    feats = state["feats"]
    cats = state["cats"]
    grad_out = np.asarray(grad_out)
    relu_mask = state["pre_relu"] > 0
    g_pool = grad_out * relu_mask
    grad_bias = g_pool.copy()
    P, c_out = len(feats), w.h1.shape[1]
    g_transformed = np.zeros((P, c_out), dtype=feats.dtype)
    if w.aggregation == "max":
        g_transformed[state["argmax"], np.arange(c_out)] = g_pool
    else:
        g_transformed[:] = g_pool[None, :] / P
    grad_feats = np.zeros_like(feats)
    grads_h = []
    for cat, h in ((CORNER, w.h1), (EDGE, w.h2), (CENTER, w.h3)):
        rows = cats == cat
        gh = np.zeros_like(h)
        if np.any(rows):
            gh += feats[rows].T @ g_transformed[rows]
            grad_feats[rows] = g_transformed[rows] @ h.T
        grads_h.append(gh)
    return grad_feats, grads_h[0], grads_h[1], grads_h[2], grad_bias


def pool_cell_grid(points, rho, c_in) -> np.ndarray:
    """3x3xC_in grid of per-cell feature means (empty cells are zero)."""
    coords, feats = _as_arrays(points)
    grid = np.zeros((3, 3, c_in))
    if len(coords) == 0:
        return grid
    u = (coords + rho) / (2.0 * rho / 3.0)
    idx = np.clip(np.ceil(u).astype(np.int64) - 1, 0, 2)
    counts = np.zeros((3, 3))
    for p in range(len(coords)):
        r, c = idx[p, 1], idx[p, 0]
        grid[r, c] += feats[p]
        counts[r, c] += 1
    nz = counts > 0
    grid[nz] /= counts[nz][:, None]
    return grid


def rosy4m_conv_forward(grid, W, return_state: bool = False):
    """Max over the four 90-degree grid rotations of a 3x3 convolution.

    grid: (3, 3, C_in) cell-pooled features; W: (3, 3, C_in, C_out).
    """
    grid = np.asarray(grid)
    W = np.asarray(W)
    if grid.shape[:2] != (3, 3) or W.shape[:2] != (3, 3) \
            or grid.shape[2] != W.shape[2]:
        raise ValidationError("grid/weight dimensions inconsistent")
    responses = []
    for r in range(4):
        rotated = np.rot90(grid, k=r, axes=(0, 1))
        responses.append(np.einsum("rci,rcio->o", rotated, W))
    responses = np.array(responses)          # (4, C_out)
    argrot = np.argmax(responses, axis=0)    # per-channel best rotation
    pre_relu = responses[argrot, np.arange(responses.shape[1])]
    out = np.maximum(pre_relu, 0.0)
    if not return_state:
        return out
    return out, {"grid": grid, "W": W, "argrot": argrot,
                 "pre_relu": pre_relu}


def rosy4m_conv_backward(state, grad_out):
    """Gradients (d grid, d W) of rosy4m_conv_forward."""
    grid, W = state["grid"], state["W"]
    g = np.asarray(grad_out) * (state["pre_relu"] > 0)
    grad_grid = np.zeros_like(grid)
    grad_W = np.zeros_like(W)
    for r in range(4):
        sel = state["argrot"] == r
        if not np.any(sel):
            continue
        rotated = np.rot90(grid, k=r, axes=(0, 1))
        grad_W[..., sel] += rotated[..., None] * g[sel]
        g_rot = np.einsum("rcio,o->rci", W[..., sel], g[sel])
        grad_grid += np.rot90(g_rot, k=-r, axes=(0, 1))
    return grad_grid, grad_W


def rosy1_conv_forward(grid, W) -> np.ndarray:
    """Plain 3x3 convolution on the cell grid followed by ReLU."""
    grid = np.asarray(grid)
    W = np.asarray(W)
    if grid.shape[:2] != (3, 3) or W.shape[:2] != (3, 3) \
            or grid.shape[2] != W.shape[2]:
        raise ValidationError("grid/weight dimensions inconsistent")
    return np.maximum(np.einsum("rci,rcio->o", grid, W), 0.0)
