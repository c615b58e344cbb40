"""Hierarchical point network built from texture convolutions.

The encoder applies a category-weighted neighborhood convolution at
each level and downsamples by furthest-point sampling; the decoder
interpolates features back up with inverse-distance 3-NN weights,
concatenates skip connections, and mixes with 1x1 layers. A small
two-layer patch encoder turns N x N signal patches into per-sample
feature vectors.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dataclass_field

import numpy as np

from . import autodiff as ad
from .conv import CELL_CATEGORY
from .errors import SolveError, ValidationError
from .geodesic import FaceSampleIndex, extract_geodesic_patch
from .mesh import TriMesh


def fps(points, k: int, seed_index: int = 0) -> np.ndarray:
    """Greedy furthest-point subset of size k, starting at seed_index."""
    points = np.asarray(points, dtype=np.float64)
    n = len(points)
    if not 1 <= k <= n:
        raise ValidationError(f"fps count {k} out of range 1..{n}")
    if not 0 <= seed_index < n:
        raise ValidationError("fps seed index out of range")
    chosen = np.empty(k, dtype=np.int64)
    chosen[0] = seed_index
    dist = np.linalg.norm(points - points[seed_index], axis=1)
    for t in range(1, k):
        nxt = int(np.argmax(dist))
        chosen[t] = nxt
        dist = np.minimum(dist, np.linalg.norm(points - points[nxt], axis=1))
    return chosen


def knn_weights(coarse_pos, query_pos, k: int = 3) -> np.ndarray:
    """Inverse-distance weights over the k nearest coarse points.

    Returns a dense (Q, M) row-stochastic matrix. A query coinciding
    with a coarse point takes that point's feature exactly.
    """
    coarse_pos = np.asarray(coarse_pos, dtype=np.float64)
    query_pos = np.asarray(query_pos, dtype=np.float64)
    if len(coarse_pos) == 0:
        raise ValidationError("empty coarse set")
    k = min(k, len(coarse_pos))
    W = np.zeros((len(query_pos), len(coarse_pos)))
    d2 = ((query_pos[:, None, :] - coarse_pos[None, :, :]) ** 2).sum(axis=2)
    nearest = np.argsort(d2, axis=1)[:, :k]
    for q in range(len(query_pos)):
        idx = nearest[q]
        d = np.sqrt(d2[q, idx])
        if d[0] < 1e-12:
            W[q, idx[0]] = 1.0
            continue
        inv = 1.0 / d
        W[q, idx] = inv / inv.sum()
    return W


def knn_interpolate(coarse_pos, coarse_feats: ad.Tensor, query_pos,
                    k: int = 3) -> ad.Tensor:
    return ad.weighted_rows(knn_weights(coarse_pos, query_pos, k),
                            coarse_feats)


@dataclass
class NetworkSpec:
    """Shape of the hierarchy: counts decrease, radii increase."""

    level_counts: list[int]
    radii: list[float]
    widths: list[int]
    num_classes: int
    encoder_width: int = 32
    head_width: int = 64
    patch_layers: tuple[int, int] = (16, 32)

    def __post_init__(self):
        L = len(self.level_counts)
        if not (len(self.radii) == len(self.widths) == L):
            raise ValidationError("level lists must have equal length")
        if any(b >= a for a, b in zip(self.level_counts,
                                      self.level_counts[1:])):
            raise ValidationError("sample counts must strictly decrease")
        if any(b <= a for a, b in zip(self.radii, self.radii[1:])):
            raise ValidationError("radii must strictly increase")


@dataclass
class UNetGraph:
    """Precomputed geometry: per-level point subsets and neighborhoods."""

    positions: list[np.ndarray]          # per level (n_l, 3)
    subset_idx: list[np.ndarray]         # level l -> rows of level l-1
    neighborhoods: list[tuple]           # per level (idx, valid, cats)
    up_weights: list[np.ndarray]         # per level l: (n_l, n_{l+1})
    sample_ids: list[np.ndarray] = dataclass_field(default_factory=list)


def _coords_to_cats(coords, rho):
    u = (np.asarray(coords) + rho) / (2.0 * rho / 3.0)
    idx = np.clip(np.ceil(u).astype(np.int64) - 1, 0, 2)
    return CELL_CATEGORY[idx[:, 1], idx[:, 0]]


def _level_neighborhoods(mesh, level_samples, rho):
    """Dense (idx, valid, cats) arrays from geodesic patches."""
    index = FaceSampleIndex(level_samples)
    rows = []
    for s in level_samples:
        patch = extract_geodesic_patch(mesh, index, s, rho)
        if patch.members:
            ids = np.array([k for k, _ in patch.members], dtype=np.int64)
            cats = _coords_to_cats(patch.member_coords(), rho)
        else:
            ids = np.zeros(0, dtype=np.int64)
            cats = np.zeros(0, dtype=np.int64)
        rows.append((ids, cats))
    M = max(1, max(len(ids) for ids, _ in rows))
    P = len(level_samples)
    idx = np.zeros((P, M), dtype=np.int64)
    valid = np.zeros((P, M), dtype=bool)
    cats = np.zeros((P, M), dtype=np.int64)
    for p, (ids, cc) in enumerate(rows):
        idx[p, :len(ids)] = ids
        valid[p, :len(ids)] = True
        cats[p, :len(ids)] = cc
    return idx, valid, cats


def build_unet_graph(mesh: TriMesh, samples, spec: NetworkSpec,
                     fps_seed_index: int = 0) -> UNetGraph:
    """FPS-chain the levels and extract their geodesic neighborhoods."""
    if spec.level_counts[0] > len(samples):
        raise ValidationError("spec level 0 exceeds available samples")
    positions = np.array([s.position for s in samples])
    level_ids = [fps(positions, spec.level_counts[0], fps_seed_index)]
    for count in spec.level_counts[1:]:
        prev = level_ids[-1]
        sub = fps(positions[prev], count, 0)
        level_ids.append(prev[sub])

    graph = UNetGraph(positions=[], subset_idx=[], neighborhoods=[],
                      up_weights=[], sample_ids=level_ids)
    prev_lookup = None
    for li, ids in enumerate(level_ids):
        level_samples = [samples[i] for i in ids]
        graph.positions.append(positions[ids])
        graph.neighborhoods.append(
            _level_neighborhoods(mesh, level_samples, spec.radii[li]))
        if li > 0:
            lookup = {g: r for r, g in enumerate(level_ids[li - 1])}
            graph.subset_idx.append(
                np.array([lookup[g] for g in ids], dtype=np.int64))
    for li in range(len(level_ids) - 1):
        graph.up_weights.append(
            knn_weights(graph.positions[li + 1], graph.positions[li], k=3))
    return graph


def init_unet_params(spec: NetworkSpec, in_channels: int, seed: int = 0,
                     dtype=np.float32) -> ad.ParamStore:
    rng = np.random.default_rng(seed)
    store = ad.ParamStore(dtype=dtype)

    def mat(name, a, b):
        store.add(name, rng.standard_normal((a, b)) * np.sqrt(2.0 / a))

    c = in_channels
    for li, w in enumerate(spec.widths):
        for h in ("h1", "h2", "h3"):
            mat(f"enc{li}/{h}", c, w)
        store.add(f"enc{li}/bias", np.zeros(w))
        c = w
    for li in range(len(spec.widths) - 2, -1, -1):
        mat(f"dec{li}/mix", spec.widths[li + 1] + spec.widths[li],
            spec.widths[li])
        store.add(f"dec{li}/bias", np.zeros(spec.widths[li]))
    mat("head/w1", spec.widths[0], spec.head_width)
    store.add("head/b1", np.zeros(spec.head_width))
    mat("head/w2", spec.head_width, spec.num_classes)
    store.add("head/b2", np.zeros(spec.num_classes))
    return store


def forward_unet(store: ad.ParamStore, spec: NetworkSpec, graph: UNetGraph,
                 features: ad.Tensor, aggregation: str = "max") -> ad.Tensor:
    """Per-point class logits for level-0 points."""
    if features.shape[0] != spec.level_counts[0]:
        raise ValidationError("feature count does not match spec level 0")
    L = len(spec.level_counts)
    skips = []
    x = features
    for li in range(L):
        x = ad.texture_conv_points(
            x, graph.neighborhoods[li], store[f"enc{li}/h1"],
            store[f"enc{li}/h2"], store[f"enc{li}/h3"],
            store[f"enc{li}/bias"], aggregation)
        skips.append(x)
        if li < L - 1:
            x = ad.gather_rows(x, graph.subset_idx[li])
    for li in range(L - 2, -1, -1):
        up = ad.weighted_rows(graph.up_weights[li], x)
        x = ad.concat_cols(up, skips[li])
        x = ad.relu(ad.add(ad.matmul(x, store[f"dec{li}/mix"]),
                           store[f"dec{li}/bias"]))
    h = ad.relu(ad.add(ad.matmul(x, store["head/w1"]), store["head/b1"]))
    return ad.add(ad.matmul(h, store["head/w2"]), store["head/b2"])


def init_patch_encoder_params(spec: NetworkSpec, in_channels: int,
                              seed: int = 0, dtype=np.float32,
                              store: ad.ParamStore | None = None):
    rng = np.random.default_rng(seed + 7)
    store = store if store is not None else ad.ParamStore(dtype=dtype)
    w1, w2 = spec.patch_layers
    c = in_channels
    for li, w in ((0, w1), (1, w2)):
        for h in ("h1", "h2", "h3"):
            store.add(f"pe{li}/{h}",
                      rng.standard_normal((c, w)) * np.sqrt(2.0 / c))
        store.add(f"pe{li}/bias", np.zeros(w))
        c = w
    store.add("pe/out", rng.standard_normal((w2, spec.encoder_width))
              * np.sqrt(2.0 / w2))
    store.add("pe/out_bias", np.zeros(spec.encoder_width))
    return store


def encode_patches(store: ad.ParamStore, values: ad.Tensor, mask,
                   frame_rotation: int = 0) -> ad.Tensor:
    """Two texture convolutions with a 2x2 pool between, then global max.

    values: (B, N, N, C) Tensor; mask: (B, N, N) bool. All-masked
    patches encode to zero vectors.
    """
    x, m = ad.texture_conv2d(values, store["pe0/h1"], store["pe0/h2"],
                             store["pe0/h3"], store["pe0/bias"], mask=mask,
                             frame_rotation=frame_rotation)
    x, m = ad.maxpool2x2(x, m)
    x, m = ad.texture_conv2d(x, store["pe1/h1"], store["pe1/h2"],
                             store["pe1/h3"], store["pe1/bias"], mask=m,
                             frame_rotation=frame_rotation)
    x = ad.global_maxpool(x, m)
    return ad.add(ad.matmul(x, store["pe/out"]), store["pe/out_bias"])


def train(store: ad.ParamStore, loss_fn, batches, optimizer: str = "adam",
          epochs: int = 1, lr: float = 1e-3, seed: int = 0,
          log=None) -> list[dict]:
    """Generic loop: loss_fn(batch) -> (loss Tensor, n_correct, n_total).

    Batches are re-shuffled each epoch with the given seed. Raises
    SolveError on NaN loss. Returns per-epoch metric dicts.
    """
    if optimizer == "adam":
        opt = ad.Adam(store, lr=lr)
    elif optimizer == "sgd":
        opt = ad.SGD(store, lr=lr)
    else:
        raise ValidationError(f"unknown optimizer: {optimizer}")
    rng = np.random.default_rng(seed)
    history = []
    for epoch in range(epochs):
        order = rng.permutation(len(batches))
        total_loss, correct, seen = 0.0, 0, 0
        for bi in order:
            store.zero_grad()
            loss, n_ok, n = loss_fn(batches[bi])
            if not np.isfinite(loss.data):
                raise SolveError(
                    f"NaN loss at epoch {epoch}, batch {bi}; "
                    f"lr={lr}, optimizer={optimizer}")
            loss.backward()
            opt.step()
            total_loss += float(loss.data) * n
            correct += n_ok
            seen += n
        entry = {"epoch": epoch, "loss": total_loss / max(seen, 1),
                 "accuracy": correct / max(seen, 1)}
        history.append(entry)
        if log is not None:
            log(entry)
    return history
