"""OBJ and PLY mesh file IO.

OBJ: v/vn/vt/f records with 1-based v, v/vt, v//vn and v/vt/vn forms;
mtllib/usemtl resolve a diffuse texture image (PNG or JPEG). The
texture's v axis is flipped on load so uv (0,0) addresses the
bottom-left, matching the OBJ convention.

PLY: ascii and binary_little_endian; vertex x y z with optional
nx ny nz and red green blue (uchar or float), faces as vertex_indices
lists. Big-endian files are rejected.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import ParseError, ValidationError
from .mesh import TriMesh


def load_mesh(path, fmt: str | None = None, scale: float = 1.0) -> TriMesh:
    """Load an OBJ or PLY mesh; format is sniffed from the extension.

    scale multiplies all coordinates (meshes are assumed metric; use
    it for files authored in other units).
    """
    path = Path(path)
    if not path.exists():
        raise ParseError("file not found", path=str(path))
    if fmt is None:
        fmt = path.suffix.lower().lstrip(".")
    if fmt == "obj":
        mesh = _load_obj(path)
    elif fmt == "ply":
        mesh = _load_ply(path)
    else:
        raise ValidationError(f"unsupported mesh format: {fmt}")
    if scale != 1.0:
        if scale <= 0:
            raise ValidationError("scale must be positive")
        mesh = TriMesh(mesh.vertices * scale, mesh.faces, colors=mesh.colors,
                       uvs=mesh.uvs, texture=mesh.texture)
    return mesh


# -- OBJ -------------------------------------------------------------------

def _parse_obj_index(token: str, count: int, path, ln) -> tuple[int, int | None]:
    parts = token.split("/")
    try:
        vi = int(parts[0])
        ti = int(parts[1]) if len(parts) > 1 and parts[1] else None
    except ValueError:
        raise ParseError(f"bad face token {token!r}", path=str(path), line=ln)
    vi = vi - 1 if vi > 0 else count + vi
    return vi, (ti - 1 if ti is not None and ti > 0 else ti)


def _load_obj(path: Path) -> TriMesh:
    verts: list[tuple] = []
    uvs_pool: list[tuple] = []
    faces: list[tuple] = []
    face_uv_idx: list[tuple] = []
    texture = None
    materials: dict[str, str] = {}
    active_texture_file = None

    for ln, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        tag = parts[0]
        try:
            if tag == "v":
                verts.append(tuple(float(x) for x in parts[1:4]))
            elif tag == "vt":
                uvs_pool.append((float(parts[1]), float(parts[2])))
            elif tag == "vn":
                pass  # vertex normals are recomputed area-weighted
            elif tag == "f":
                idx = [_parse_obj_index(t, len(verts), path, ln)
                       for t in parts[1:]]
                if len(idx) < 3:
                    raise ParseError("face with fewer than 3 vertices",
                                     path=str(path), line=ln)
                for k in range(1, len(idx) - 1):  # fan-triangulate
                    tri = (idx[0], idx[k], idx[k + 1])
                    faces.append(tuple(v for v, _ in tri))
                    face_uv_idx.append(tuple(t for _, t in tri))
            elif tag == "mtllib":
                materials = _parse_mtl(path.parent / " ".join(parts[1:]))
            elif tag == "usemtl":
                active_texture_file = materials.get(" ".join(parts[1:]))
        except (ValueError, IndexError):
            raise ParseError(f"cannot parse {tag!r} record",
                             path=str(path), line=ln)
        if active_texture_file and texture is None:
            texture = _load_texture(path.parent / active_texture_file)

    if not verts:
        raise ParseError("no vertices", path=str(path))
    if not faces:
        raise ParseError("no faces", path=str(path))
    uvs = None
    if uvs_pool and all(all(t is not None for t in f) for f in face_uv_idx):
        pool = np.asarray(uvs_pool)
        uvs = pool[np.asarray(face_uv_idx, dtype=np.int64)]
    return TriMesh(np.asarray(verts), np.asarray(faces, dtype=np.int64),
                   uvs=uvs, texture=texture)


def _parse_mtl(path: Path) -> dict[str, str]:
    if not path.exists():
        raise ParseError("mtllib file not found", path=str(path))
    materials: dict[str, str] = {}
    current = None
    for raw in path.read_text().splitlines():
        parts = raw.strip().split()
        if not parts:
            continue
        if parts[0] == "newmtl":
            current = " ".join(parts[1:])
        elif parts[0] == "map_Kd" and current:
            materials[current] = " ".join(parts[1:])
    return materials


def _load_texture(path: Path) -> np.ndarray:
    from PIL import Image

    if not path.exists():
        raise ParseError("texture image not found", path=str(path))
    img = np.asarray(Image.open(path).convert("RGB"), dtype=np.float32) / 255.0
    return img[::-1]  # flip so row 0 is v = 0 (bottom-left origin)


# -- PLY -------------------------------------------------------------------

_PLY_TYPES = {
    "char": "b", "int8": "b", "uchar": "B", "uint8": "B",
    "short": "h", "int16": "h", "ushort": "H", "uint16": "H",
    "int": "i", "int32": "i", "uint": "I", "uint32": "I",
    "float": "f", "float32": "f", "double": "d", "float64": "d",
}


def _load_ply(path: Path) -> TriMesh:
    data = path.read_bytes()
    if not data.startswith(b"ply"):
        raise ParseError("not a PLY file", path=str(path), line=1)
    end = data.find(b"end_header")
    if end < 0:
        raise ParseError("missing end_header", path=str(path))
    header_lines = data[:end].decode("ascii", "replace").splitlines()
    body = data[end:].split(b"\n", 1)[1]

    fmt = None
    elements = []  # (name, count, [(prop_type, name) or ('list', ct, t, name)])
    for ln, line in enumerate(header_lines, start=1):
        parts = line.strip().split()
        if not parts:
            continue
        if parts[0] == "format":
            if parts[1] == "binary_big_endian":
                raise ParseError("big-endian PLY not supported",
                                 path=str(path), line=ln)
            fmt = parts[1]
        elif parts[0] == "element":
            elements.append((parts[1], int(parts[2]), []))
        elif parts[0] == "property":
            if not elements:
                raise ParseError("property before element",
                                 path=str(path), line=ln)
            if parts[1] == "list":
                elements[-1][2].append(("list", parts[2], parts[3], parts[4]))
            else:
                elements[-1][2].append((parts[1], parts[2]))
    if fmt not in ("ascii", "binary_little_endian"):
        raise ParseError(f"unsupported PLY format {fmt}", path=str(path))

    parsed: dict[str, list] = {}
    if fmt == "ascii":
        tokens = body.decode("ascii", "replace").split()
        pos = 0
        for name, count, props in elements:
            rows = []
            for _ in range(count):
                row = {}
                for p in props:
                    if p[0] == "list":
                        n = int(float(tokens[pos])); pos += 1
                        row[p[3]] = [int(float(tokens[pos + k]))
                                     for k in range(n)]
                        pos += n
                    else:
                        row[p[1]] = float(tokens[pos]); pos += 1
                rows.append(row)
            parsed[name] = rows
    else:
        pos = 0
        for name, count, props in elements:
            rows = []
            for _ in range(count):
                row = {}
                for p in props:
                    if p[0] == "list":
                        ct = _PLY_TYPES[p[1]]
                        n = struct.unpack_from("<" + ct, body, pos)[0]
                        pos += struct.calcsize(ct)
                        it = _PLY_TYPES[p[2]]
                        vals = struct.unpack_from(f"<{n}{it}", body, pos)
                        pos += struct.calcsize(it) * n
                        row[p[3]] = list(vals)
                    else:
                        t = _PLY_TYPES[p[0]]
                        row[p[1]] = struct.unpack_from("<" + t, body, pos)[0]
                        pos += struct.calcsize(t)
                rows.append(row)
            parsed[name] = rows

    if "vertex" not in parsed:
        raise ParseError("no vertex element", path=str(path))
    vrows = parsed["vertex"]
    verts = np.array([(r["x"], r["y"], r["z"]) for r in vrows])
    colors = None
    if vrows and all(k in vrows[0] for k in ("red", "green", "blue")):
        colors = np.array([(r["red"], r["green"], r["blue"]) for r in vrows])
        if colors.max() > 1.0:
            colors = colors / 255.0
    faces = []
    for r in parsed.get("face", []):
        key = "vertex_indices" if "vertex_indices" in r else "vertex_index"
        idx = r.get(key)
        if idx is None:
            raise ParseError("face without vertex_indices", path=str(path))
        for k in range(1, len(idx) - 1):
            faces.append((idx[0], idx[k], idx[k + 1]))
    if not faces:
        raise ParseError("no faces", path=str(path))
    return TriMesh(verts, np.asarray(faces, dtype=np.int64), colors=colors)


# -- writers ---------------------------------------------------------------

def save_field_ply(mesh: TriMesh, field, path):
    """Binary PLY with per-vertex frame directions ix..jz."""
    V = len(mesh.vertices)
    j_dirs = np.cross(field.normals, field.i_dirs)
    header = (
        "ply\nformat binary_little_endian 1.0\n"
        f"element vertex {V}\n"
        + "".join(f"property float {p}\n"
                  for p in ("x", "y", "z", "ix", "iy", "iz",
                            "jx", "jy", "jz"))
        + f"element face {len(mesh.faces)}\n"
        "property list uchar int vertex_indices\n"
        "end_header\n"
    )
    payload = np.hstack([mesh.vertices, field.i_dirs, j_dirs]) \
        .astype("<f4").tobytes()
    with open(path, "wb") as f:
        f.write(header.encode("ascii"))
        f.write(payload)
        for tri in mesh.faces:
            f.write(struct.pack("<Biii", 3, *(int(v) for v in tri)))


def save_colored_ply(mesh: TriMesh, vertex_colors, path, face_colors=None):
    """Binary PLY with uchar vertex colors and optional face colors."""
    vc = np.clip(np.asarray(vertex_colors), 0.0, 1.0)
    if vc.shape != mesh.vertices.shape:
        raise ValidationError("vertex color count mismatch")
    vc8 = np.round(vc * 255).astype(np.uint8)
    fc8 = None
    if face_colors is not None:
        fc = np.clip(np.asarray(face_colors), 0.0, 1.0)
        if fc.shape != (len(mesh.faces), 3):
            raise ValidationError("face color count mismatch")
        fc8 = np.round(fc * 255).astype(np.uint8)
    header = (
        "ply\nformat binary_little_endian 1.0\n"
        f"element vertex {len(mesh.vertices)}\n"
        "property float x\nproperty float y\nproperty float z\n"
        "property uchar red\nproperty uchar green\nproperty uchar blue\n"
        f"element face {len(mesh.faces)}\n"
        "property list uchar int vertex_indices\n"
        + ("property uchar red\nproperty uchar green\nproperty uchar blue\n"
           if fc8 is not None else "")
        + "end_header\n"
    )
    with open(path, "wb") as f:
        f.write(header.encode("ascii"))
        pos = mesh.vertices.astype("<f4")
        for k in range(len(pos)):
            f.write(pos[k].tobytes())
            f.write(vc8[k].tobytes())
        for k, tri in enumerate(mesh.faces):
            f.write(struct.pack("<Biii", 3, *(int(v) for v in tri)))
            if fc8 is not None:
                f.write(fc8[k].tobytes())


def save_singularities_csv(singularities, path):
    with open(path, "w") as f:
        f.write("face_index,quarter_index\n")
        for face, q in singularities:
            f.write(f"{face},{q}\n")
