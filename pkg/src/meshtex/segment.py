"""Synthetic three-class segmentation: plane vs cylinder vs sphere.

End-to-end exercise of the pipeline: solve the orientation field on a
composite scene, sample the surface, resample normal-signal patches,
encode them, and train the hierarchical point network to label every
sample with its primitive.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .field import solve_orientation_field
from .network import (NetworkSpec, build_unet_graph, encode_patches,
                      forward_unet, init_patch_encoder_params,
                      init_unet_params, train)
from .patches import batch_patches
from .sampling import sample_surface
from .shapes import scene_three_primitives

CLASS_NAMES = ("plane", "cylinder", "sphere")


def build_scene_task(spacing: float = 0.06, n_patch: int = 6,
                     d_patch: float = 0.02, seed: int = 0,
                     target_points: int = 2000):
    """Scene mesh, samples (capped at target_points), labels, patches."""
    mesh, face_labels = scene_three_primitives()
    import warnings
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # intentionally disconnected scene
        field = solve_orientation_field(mesh, seed=seed)
    samples = sample_surface(mesh, field, spacing, "field_lattice",
                             seed=seed)
    if len(samples) > target_points:
        rng = np.random.default_rng(seed)
        keep = np.sort(rng.choice(len(samples), target_points,
                                  replace=False))
        samples = [samples[i] for i in keep]
    labels = np.array([face_labels[s.face] for s in samples],
                      dtype=np.int64)
    dataset = batch_patches(mesh, samples, n_patch, d_patch, "normal")
    return mesh, field, samples, labels, dataset


def run_toy_segmentation(epochs: int = 60, seed: int = 0, lr: float = 2e-3,
                         spacing: float = 0.06, target_points: int = 2000,
                         log=None):
    """Train the toy task; returns (accuracy, history, confusion, extras)."""
    mesh, field, samples, labels, dataset = build_scene_task(
        spacing=spacing, seed=seed, target_points=target_points)
    n_points = len(samples)
    counts = [n_points, max(n_points // 4, 8), max(n_points // 16, 4)]
    spec = NetworkSpec(level_counts=counts, radii=[0.1, 0.2, 0.4],
                       widths=[48, 64, 96], num_classes=3,
                       encoder_width=24)
    graph = build_unet_graph(mesh, samples, spec, fps_seed_index=0)

    store = init_unet_params(spec, in_channels=spec.encoder_width, seed=seed)
    init_patch_encoder_params(spec, in_channels=3, seed=seed, store=store)

    values = ad.Tensor(dataset.values_array().astype(np.float32))
    masks = dataset.masks_array()
    level0 = graph.sample_ids[0]
    labels0 = labels[level0]

    def loss_fn(_batch):
        feats = encode_patches(store, values, masks)
        feats = ad.gather_rows(feats, level0)
        logits = forward_unet(store, spec, graph, feats)
        loss, probs = ad.softmax_cross_entropy(logits, labels0)
        n_ok = int((probs.argmax(axis=1) == labels0).sum())
        return loss, n_ok, len(labels0)

    history = train(store, loss_fn, [None], optimizer="adam", epochs=epochs,
                    lr=lr, seed=seed, log=log)

    feats = encode_patches(store, values, masks)
    feats = ad.gather_rows(feats, level0)
    logits = forward_unet(store, spec, graph, feats).data
    pred = logits.argmax(axis=1)
    accuracy = float((pred == labels0).mean())
    confusion = np.zeros((3, 3), dtype=np.int64)
    np.add.at(confusion, (labels0, pred), 1)
    return accuracy, history, confusion, {
        "mesh": mesh, "field": field, "samples": samples,
        "labels": labels, "spec": spec, "store": store, "graph": graph,
    }
