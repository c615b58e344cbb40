import struct
import subprocess
import sys

import numpy as np
import pytest

from meshtex import shapes
from meshtex.cli import main


def run_cli(args):
    """In-process invocation; returns (exit code, stdout) via capsys-free
    subprocess only where byte determinism across runs matters."""
    return main(args)


def write_obj(mesh, path):
    with open(path, "w") as f:
        for v in mesh.vertices:
            f.write(f"v {v[0]:.17g} {v[1]:.17g} {v[2]:.17g}\n")
        for t in mesh.faces:
            f.write(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}\n")


@pytest.fixture(scope="module")
def cube_obj(tmp_path_factory):
    path = tmp_path_factory.mktemp("meshes") / "cube.obj"
    write_obj(shapes.cube(6, 1.0), path)
    return path


@pytest.fixture(scope="module")
def plane_obj(tmp_path_factory):
    path = tmp_path_factory.mktemp("meshes") / "plane.obj"
    write_obj(shapes.plane_grid(24, 24, 1.0, 1.0), path)
    return path


@pytest.fixture(scope="module")
def icosphere_obj(tmp_path_factory):
    path = tmp_path_factory.mktemp("meshes") / "sphere.obj"
    write_obj(shapes.icosphere(2, 1.0), path)
    return path


def test_field_writes_frame_ply(cube_obj, tmp_path):
    out = tmp_path / "field.ply"
    code = run_cli(["field", "--mesh", str(cube_obj), "--out", str(out),
                    "--seed", "1"])
    assert code == 0
    header = out.read_bytes()[:400].decode("ascii", "replace")
    for prop in ("ix", "iy", "iz", "jx", "jy", "jz"):
        assert f"property float {prop}" in header
    assert out.with_suffix(".singularities.csv").exists()
    assert out.with_suffix(".energy.png").exists()


def test_field_singularity_csv_sums_to_eight(icosphere_obj, tmp_path):
    out = tmp_path / "sphere.ply"
    assert run_cli(["field", "--mesh", str(icosphere_obj), "--out",
                    str(out), "--seed", "0", "--no-figures"]) == 0
    rows = out.with_suffix(".singularities.csv").read_text().splitlines()
    assert rows[0] == "face_index,quarter_index"
    total = sum(int(r.split(",")[1]) for r in rows[1:])
    assert total == 8


def test_missing_mesh_exits_2(tmp_path):
    assert run_cli(["field", "--mesh", str(tmp_path / "nope.obj"),
                    "--out", str(tmp_path / "x.ply")]) == 2


def test_bad_obj_exits_2(tmp_path):
    bad = tmp_path / "bad.obj"
    bad.write_text("v 0 0 0\nf 1 2 spam\n")
    assert run_cli(["field", "--mesh", str(bad),
                    "--out", str(tmp_path / "x.ply")]) == 2


def test_odd_patch_size_exits_2(plane_obj, tmp_path):
    code = run_cli(["patches", "--mesh", str(plane_obj), "--out",
                    str(tmp_path / "p.bin"), "--n", "7", "--no-figures"])
    assert code == 2


def test_patches_pipeline_and_mask_density(plane_obj, tmp_path):
    from meshtex.datasets import PatchDataset
    out = tmp_path / "patches.bin"
    code = run_cli(["patches", "--mesh", str(plane_obj), "--out", str(out),
                    "--spacing", "0.1", "--n", "6", "--d", "0.004",
                    "--source", "constant", "--seed", "0",
                    "--no-figures"])
    assert code == 0
    ds = PatchDataset.load(out)
    assert len(ds.records) > 50
    # interior samples (away from the border) must be fully valid
    interior = [r for r in ds.records
                if 0.1 < r.position[0] < 0.9 and 0.1 < r.position[1] < 0.9]
    density = np.mean([r.mask.mean() for r in interior])
    assert density >= 0.99


def test_sample_subcommand(plane_obj, tmp_path):
    out = tmp_path / "samples.csv"
    code = run_cli(["sample", "--mesh", str(plane_obj), "--out", str(out),
                    "--spacing", "0.15", "--no-figures"])
    assert code == 0
    rows = out.read_text().splitlines()
    assert rows[0].startswith("x,y,z,face")
    assert len(rows) > 20


def test_viz_field_and_labels(cube_obj, tmp_path):
    out = tmp_path / "viz.ply"
    assert run_cli(["viz", "--mesh", str(cube_obj), "--out", str(out),
                    "--seed", "0"]) == 0
    data = out.read_bytes()
    assert b"property uchar red" in data[:500]
    # label mode with a wrong count exits 2
    labels = tmp_path / "labels.txt"
    labels.write_text("0\n1\n0\n")
    assert run_cli(["viz", "--mesh", str(cube_obj), "--out", str(out),
                    "--labels", str(labels)]) == 2
    mesh = shapes.cube(6, 1.0)
    labels.write_text("\n".join(
        str(k % 3) for k in range(len(mesh.vertices))))
    assert run_cli(["viz", "--mesh", str(cube_obj), "--out", str(out),
                    "--labels", str(labels)]) == 0


def test_singular_faces_painted_red(icosphere_obj, tmp_path):
    out = tmp_path / "sing.ply"
    assert run_cli(["viz", "--mesh", str(icosphere_obj), "--out", str(out),
                    "--seed", "0"]) == 0
    raw = out.read_bytes()
    header_end = raw.find(b"end_header\n") + len(b"end_header\n")
    header = raw[:header_end].decode("ascii")
    n_verts = int(header.split("element vertex ")[1].split()[0])
    n_faces = int(header.split("element face ")[1].split()[0])
    pos = header_end + n_verts * (12 + 3)
    reds = 0
    for _ in range(n_faces):
        pos += 13  # list count + 3 ints
        r, g, b = raw[pos], raw[pos + 1], raw[pos + 2]
        reds += (r, g, b) == (255, 0, 0)
        pos += 3
    assert reds == 8  # icosphere carries 8 quarter singularities


def test_mnist_corrupt_idx_exits_2(tmp_path):
    data = tmp_path / "mnist"
    data.mkdir()
    (data / "train-images-idx3-ubyte").write_bytes(
        struct.pack(">II", 0xbad, 0))
    code = run_cli(["mnist", "--variant", "baseline", "--epochs", "0",
                    "--data-dir", str(data)])
    assert code == 2


def test_unknown_subcommand_exits_2():
    assert run_cli(["frobnicate"]) == 2


def _cli_bytes(args):
    out = subprocess.run([sys.executable, "-m", "meshtex.cli"] + args,
                         capture_output=True)
    return out.returncode, out.stdout


def test_field_byte_determinism(cube_obj, tmp_path):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / f"{name}.ply"
        code, _ = _cli_bytes(["field", "--mesh", str(cube_obj), "--out",
                              str(out), "--seed", "5", "--threads", "1",
                              "--no-figures"])
        assert code == 0
        outs.append(out.read_bytes()
                    + out.with_suffix(".singularities.csv").read_bytes())
    assert outs[0] == outs[1]


def test_patches_byte_determinism(plane_obj, tmp_path):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / f"{name}.bin"
        code, _ = _cli_bytes(["patches", "--mesh", str(plane_obj), "--out",
                              str(out), "--spacing", "0.12", "--n", "6",
                              "--d", "0.004", "--seed", "5", "--threads",
                              "1", "--no-figures"])
        assert code == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
