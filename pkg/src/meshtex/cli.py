"""Command-line interface.

One binary with subcommands field | sample | patches | viz | mnist |
segment-toy. Exit codes: 0 ok, 2 usage/parse error, 3 numerical
failure, 4 IO error. Report-style outputs (CSV) are accompanied by
matplotlib figures unless --no-figures is given.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .config import RunConfig, load_config, merge_flags
from .errors import (DataError, MeshTexError, ParseError, SolveError,
                     ValidationError)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3
EXIT_IO = 4


def _add_common(p, mesh_required=True):
    p.add_argument("--mesh", required=mesh_required, help="OBJ or PLY file")
    p.add_argument("--scale", type=float, default=None,
                   help="scale factor applied to coordinates on load")
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--no-figures", action="store_true",
                   help="skip matplotlib report figures")


def _config_from(args, **extra) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    flags = {"mesh": getattr(args, "mesh", None),
             "scale": getattr(args, "scale", None),
             "seed": getattr(args, "seed", None),
             "threads": getattr(args, "threads", None)}
    flags.update(extra)
    return merge_flags(cfg, **flags)


def _load(cfg) -> "TriMesh":
    from .meshio import load_mesh

    return load_mesh(cfg.mesh, scale=cfg.scale)


def cmd_field(args) -> int:
    from .field import solve_orientation_field
    from .meshio import save_field_ply, save_singularities_csv

    cfg = _config_from(args, levels=args.levels, iterations=args.iterations)
    mesh = _load(cfg)
    field = solve_orientation_field(mesh, levels=cfg.levels,
                                    iterations_per_level=cfg.iterations,
                                    seed=cfg.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_field_ply(mesh, field, out)
    csv_path = out.with_suffix(".singularities.csv")
    save_singularities_csv(field.singularities, csv_path)
    if not args.no_figures:
        from .viz import figure_energy_curve
        figure_energy_curve(field.energy_log, out.with_suffix(".energy.png"))
    total = sum(q for _, q in field.singularities)
    print(f"field: {len(mesh.vertices)} vertices, "
          f"{len(field.singularities)} singular faces, "
          f"quarter-index sum {total}")
    print(f"wrote {out} and {csv_path}")
    return EXIT_OK


def cmd_sample(args) -> int:
    from .field import solve_orientation_field
    from .sampling import sample_surface

    cfg = _config_from(args, spacing=args.spacing, method=args.method)
    mesh = _load(cfg)
    field = solve_orientation_field(mesh, levels=cfg.levels,
                                    iterations_per_level=cfg.iterations,
                                    seed=cfg.seed)
    samples = sample_surface(mesh, field, cfg.spacing, cfg.method,
                             seed=cfg.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w") as f:
        f.write("x,y,z,face,b0,b1,b2,ix,iy,iz,jx,jy,jz\n")
        for s in samples:
            row = (list(s.position) + [s.face] + list(s.bary)
                   + list(s.frame.i) + list(s.frame.j))
            f.write(",".join(f"{v}" if isinstance(v, (int, np.integer))
                             else f"{v:.9g}" for v in row) + "\n")
    if not args.no_figures:
        from .viz import figure_spacing_histogram
        figure_spacing_histogram(samples, cfg.spacing,
                                 out.with_suffix(".spacing.png"))
    print(f"sampled {len(samples)} points (method {cfg.method})")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_patches(args) -> int:
    from .field import solve_orientation_field
    from .patches import batch_patches
    from .sampling import sample_surface

    cfg = _config_from(args, spacing=args.spacing, n=args.n, d=args.d,
                       source=args.source)
    mesh = _load(cfg)
    field = solve_orientation_field(mesh, levels=cfg.levels,
                                    iterations_per_level=cfg.iterations,
                                    seed=cfg.seed)
    samples = sample_surface(mesh, field, cfg.spacing, cfg.method,
                             seed=cfg.seed)
    dataset = batch_patches(mesh, samples, cfg.n, cfg.d, cfg.source,
                            threads=cfg.threads)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    dataset.save(out)
    if not args.no_figures:
        from .viz import figure_patch_montage
        figure_patch_montage(dataset, out.with_suffix(".montage.png"))
    masks = dataset.masks_array()
    density = float(masks.mean()) if masks.size else 0.0
    print(f"wrote {len(dataset.records)} patches "
          f"(N={cfg.n}, d={cfg.d}, source {cfg.source}, "
          f"mask density {density:.3f}) to {out}")
    return EXIT_OK


def cmd_viz(args) -> int:
    from .field import solve_orientation_field
    from .viz import write_field_viz, write_label_viz

    cfg = _config_from(args)
    mesh = _load(cfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if args.labels:
        labels = np.loadtxt(args.labels, dtype=np.int64, ndmin=1)
        write_label_viz(mesh, labels, out)
        print(f"wrote label viz for {len(labels)} vertices to {out}")
    else:
        field = solve_orientation_field(mesh, levels=cfg.levels,
                                        iterations_per_level=cfg.iterations,
                                        seed=cfg.seed)
        write_field_viz(mesh, field, out)
        print(f"wrote field viz ({len(field.singularities)} singular faces "
              f"in red) to {out}")
    return EXIT_OK


def cmd_mnist(args) -> int:
    from .mnist import mnist_experiment

    if args.epochs < 0:
        raise ValidationError("epochs must be >= 0")
    history_rows = []

    def log(entry):
        history_rows.append(entry)
        print(f"epoch {entry['epoch']}: loss {entry['loss']:.4f} "
              f"train acc {entry['accuracy']:.4f}", flush=True)

    accuracy, history, store = mnist_experiment(
        variant=args.variant, epochs=args.epochs, seed=args.seed or 0,
        data_dir=args.data_dir, train_limit=args.train_limit, log=log)
    print(f"{args.variant} test accuracy: {accuracy:.4f}")
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        store.save(out)
        with open(out.with_suffix(".metrics.csv"), "w") as f:
            f.write("epoch,loss,train_accuracy\n")
            for h in history:
                f.write(f"{h['epoch']},{h['loss']:.6f},"
                        f"{h['accuracy']:.6f}\n")
            f.write(f"test,,{accuracy:.6f}\n")
        if not args.no_figures and history:
            from .viz import figure_training_curve
            figure_training_curve(history, out.with_suffix(".train.png"),
                                  title=f"mnist {args.variant}")
        print(f"wrote checkpoint to {out}")
    return EXIT_OK


def cmd_segment_toy(args) -> int:
    from .segment import CLASS_NAMES, run_toy_segmentation

    def log(entry):
        if entry["epoch"] % 10 == 0:
            print(f"epoch {entry['epoch']}: loss {entry['loss']:.4f} "
                  f"acc {entry['accuracy']:.4f}", flush=True)

    accuracy, history, confusion, extras = run_toy_segmentation(
        epochs=args.epochs, seed=args.seed or 0, log=log)
    print(f"toy segmentation point accuracy: {accuracy:.4f}")
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w") as f:
            f.write("class," + ",".join(CLASS_NAMES) + "\n")
            for r, name in enumerate(CLASS_NAMES):
                f.write(name + "," + ",".join(str(int(x))
                                              for x in confusion[r]) + "\n")
        if not args.no_figures:
            from .viz import figure_confusion, figure_training_curve
            figure_confusion(confusion, out.with_suffix(".confusion.png"),
                             CLASS_NAMES)
            figure_training_curve(history, out.with_suffix(".train.png"),
                                  title="toy segmentation")
        print(f"wrote confusion matrix to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="meshtex",
        description="4-RoSy fields, geodesic patches, and invariant "
                    "convolution on triangle meshes")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("field", help="solve the orientation field")
    _add_common(p)
    p.add_argument("--out", required=True, help="output field PLY")
    p.add_argument("--levels", type=int, default=None)
    p.add_argument("--iterations", type=int, default=None)
    p.set_defaults(fn=cmd_field)

    p = sub.add_parser("sample", help="sample the surface")
    _add_common(p)
    p.add_argument("--out", required=True, help="output CSV")
    p.add_argument("--spacing", type=float, default=None)
    p.add_argument("--method", default=None,
                   choices=["field_lattice", "poisson_disk", "fps"])
    p.add_argument("--levels", type=int, default=None)
    p.add_argument("--iterations", type=int, default=None)
    p.set_defaults(fn=cmd_sample)

    p = sub.add_parser("patches", help="resample signal patches")
    _add_common(p)
    p.add_argument("--out", required=True, help="output dataset file")
    p.add_argument("--spacing", type=float, default=None)
    p.add_argument("--n", type=int, default=None, help="patch grid size")
    p.add_argument("--d", type=float, default=None, help="pixel pitch (m)")
    p.add_argument("--source", default=None,
                   choices=["vertex_color", "texture_atlas", "normal",
                            "constant"])
    p.add_argument("--levels", type=int, default=None)
    p.add_argument("--iterations", type=int, default=None)
    p.set_defaults(fn=cmd_patches)

    p = sub.add_parser("viz", help="colored PLY of field or labels")
    _add_common(p)
    p.add_argument("--out", required=True, help="output PLY")
    p.add_argument("--labels", help="per-vertex integer label file")
    p.add_argument("--levels", type=int, default=None)
    p.add_argument("--iterations", type=int, default=None)
    p.set_defaults(fn=cmd_viz)

    p = sub.add_parser("mnist", help="train the digit classifier")
    p.add_argument("--variant", default="rosy",
                   choices=["baseline", "rosy"])
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--data-dir", default=None,
                   help="IDX directory (default $TXN_DATA_DIR)")
    p.add_argument("--train-limit", type=int, default=None)
    p.add_argument("--out", help="checkpoint output path")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(fn=cmd_mnist)

    p = sub.add_parser("segment-toy", help="synthetic 3-class segmentation")
    p.add_argument("--epochs", type=int, default=60)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="confusion matrix CSV path")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(fn=cmd_segment_toy)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else EXIT_OK
    try:
        return args.fn(args)
    except (ParseError, ValidationError, DataError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except SolveError as e:
        print(f"numerical error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as e:
        print(f"io error: {e}", file=sys.stderr)
        return EXIT_IO
    except MeshTexError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
