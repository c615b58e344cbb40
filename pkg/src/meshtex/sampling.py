"""Uniformly spaced surface samples carrying tangent frames.

Three methods are provided: a lattice extracted from a hierarchically
smoothed position field (the default; one sample per occupied lattice
cell of the cross-field-aligned grid), Poisson-disk dart throwing, and
furthest-point sampling to the lattice method's count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .field import RoSyField, build_hierarchy
from .frames import TangentFrame, transport_many, transportable_rows
from .mesh import TriMesh


@dataclass
class SurfaceSample:
    """A point on the mesh surface with its tangent frame."""

    position: np.ndarray   # (3,)
    face: int
    bary: np.ndarray       # (3,) nonnegative, sums to 1
    frame: TangentFrame

    def validate(self, mesh: TriMesh):
        if np.any(self.bary < -1e-9) or abs(self.bary.sum() - 1.0) > 1e-9:
            raise ValidationError("invalid barycentric coordinates")
        p = mesh.barycentric_point(self.face, self.bary)
        if np.linalg.norm(p - self.position) > 1e-7:
            raise ValidationError("position inconsistent with barycentrics")


def round_half_toward_zero(x):
    """Round to nearest integer; exact .5 ties go toward zero."""
    return np.sign(x) * np.ceil(np.abs(x) - 0.5)


def closest_point_on_triangle(p, a, b, c):
    """Closest point to p on triangle (a, b, c) and its barycentrics."""
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = ab @ ap
    d2 = ac @ ap
    if d1 <= 0 and d2 <= 0:
        return a, np.array([1.0, 0.0, 0.0])
    bp = p - b
    d3 = ab @ bp
    d4 = ac @ bp
    if d3 >= 0 and d4 <= d3:
        return b, np.array([0.0, 1.0, 0.0])
    vc = d1 * d4 - d3 * d2
    if vc <= 0 and d1 >= 0 and d3 <= 0:
        t = d1 / (d1 - d3)
        return a + t * ab, np.array([1.0 - t, t, 0.0])
    cp = p - c
    d5 = ab @ cp
    d6 = ac @ cp
    if d6 >= 0 and d5 <= d6:
        return c, np.array([0.0, 0.0, 1.0])
    vb = d5 * d2 - d1 * d6
    if vb <= 0 and d2 >= 0 and d6 <= 0:
        t = d2 / (d2 - d6)
        return a + t * ac, np.array([1.0 - t, 0.0, t])
    va = d3 * d6 - d5 * d4
    if va <= 0 and (d4 - d3) >= 0 and (d5 - d6) >= 0:
        t = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        pt = b + t * (c - b)
        return pt, np.array([0.0, 1.0 - t, t])
    denom = 1.0 / (va + vb + vc)
    v = vb * denom
    w = vc * denom
    return a + ab * v + ac * w, np.array([1.0 - v - w, v, w])


def frame_for_point(mesh: TriMesh, field: RoSyField, face: int, bary,
                    singular_faces: set[int] | None = None) -> TangentFrame:
    """Interpolated sample frame: 4-RoSy-align corners, average, project.

    On singular faces, where corner alignment is inconsistent, the frame
    of the nearest corner vertex is adopted instead.
    """
    corners = mesh.faces[face]
    bary = np.asarray(bary, dtype=np.float64)
    n = bary @ mesh.vertex_normals[corners]
    nn = np.linalg.norm(n)
    n = mesh.face_normals[face] if nn < 1e-8 else n / nn

    if singular_faces is None:
        singular_faces = {f for f, _ in field.singularities}
    if face in singular_faces:
        p = bary @ mesh.vertices[corners]
        nearest = corners[int(np.argmin(
            np.linalg.norm(mesh.vertices[corners] - p, axis=1)))]
        i = transport_many(field.i_dirs[nearest][None, :],
                           field.normals[nearest][None, :], n[None, :])[0]
        return TangentFrame.from_in(i, n)

    n3 = np.broadcast_to(n, (3, 3))
    dirs = transport_many(field.i_dirs[corners], field.normals[corners], n3)
    ref = dirs[0]
    acc = bary[0] * ref
    for t in (1, 2):
        d = dirs[t]
        jd = np.cross(n, d)
        ci, cj = float(ref @ d), float(ref @ jd)
        if abs(ci) >= abs(cj):
            rep = d if ci >= 0 else -d
        else:
            rep = jd if cj >= 0 else -jd
        acc = acc + bary[t] * rep
    if np.linalg.norm(acc) < 1e-9:
        acc = ref
    return TangentFrame.from_in(acc, n)


def _make_sample(mesh, field, point, candidate_faces, singular_faces):
    """Project a point onto the nearest candidate face; lowest index wins ties."""
    best = None
    for f in candidate_faces:
        tri = mesh.vertices[mesh.faces[f]]
        q, bary = closest_point_on_triangle(point, tri[0], tri[1], tri[2])
        d = float(np.linalg.norm(q - point))
        if best is None or d < best[0] - 1e-12:
            best = (d, int(f), q, bary)
    _d, face, q, bary = best
    frame = frame_for_point(mesh, field, face, bary, singular_faces)
    return SurfaceSample(position=q, face=face, bary=bary, frame=frame)


def _position_field(mesh: TriMesh, field: RoSyField, spacing: float,
                    iterations: int = 10) -> np.ndarray:
    """Per-vertex lattice representatives from a hierarchical position solve."""
    hierarchy = field._hierarchy
    dirs_by_level = field._level_dirs
    if hierarchy is None or dirs_by_level is None:
        hierarchy = build_hierarchy(
            mesh, max_levels=max(1, int(np.ceil(np.log2(max(len(mesh.vertices), 2))))))
        dirs_by_level = [None] * len(hierarchy)
        dirs_by_level[0] = field.i_dirs
        for li in range(1, len(hierarchy)):
            parent = hierarchy[li].parent
            fine = dirs_by_level[li - 1]
            coarse = np.zeros((len(hierarchy[li].positions), 3))
            np.add.at(coarse, parent, fine)
            norms = np.linalg.norm(coarse, axis=1)
            bad = norms < 1e-9
            coarse[bad] = hierarchy[li].normals[bad]  # placeholder, reprojected
            norms[bad] = 1.0
            coarse /= norms[:, None]
            coarse -= hierarchy[li].normals * np.einsum(
                "ij,ij->i", hierarchy[li].normals, coarse)[:, None]
            n2 = np.linalg.norm(coarse, axis=1)
            coarse[n2 < 1e-9] = _any_tangent(hierarchy[li].normals[n2 < 1e-9])
            n2 = np.maximum(np.linalg.norm(coarse, axis=1), 1e-30)
            coarse /= n2[:, None]
            dirs_by_level[li] = coarse

    q = hierarchy[-1].positions.copy()
    for li in range(len(hierarchy) - 1, -1, -1):
        level = hierarchy[li]
        dirs = dirs_by_level[li]
        q = _snap_positions(q, level.positions, level.normals, dirs, spacing)
        for _ in range(iterations):
            _smooth_positions(q, level, dirs, spacing)
        if li > 0:
            q = q[hierarchy[li].parent]
    return q


def _any_tangent(normals):
    out = np.zeros_like(normals)
    for r in range(len(normals)):
        n = normals[r]
        e = np.zeros(3)
        e[int(np.argmin(np.abs(n)))] = 1.0
        t = np.cross(n, e)
        out[r] = t / np.linalg.norm(t)
    return out


def _snap_positions(q, anchors, normals, dirs, spacing):
    """Project q to tangent planes and snap the lattice so the
    representative is the lattice point nearest its anchor vertex."""
    q = q - normals * np.einsum("ij,ij->i", normals, q - anchors)[:, None]
    j = np.cross(normals, dirs)
    rel = anchors - q
    ti = round_half_toward_zero(np.einsum("ij,ij->i", rel, dirs) / spacing)
    tj = round_half_toward_zero(np.einsum("ij,ij->i", rel, j) / spacing)
    return q + (ti[:, None] * dirs + tj[:, None] * j) * spacing


def _smooth_positions(q, level, dirs, spacing):
    """One ascending Gauss-Seidel sweep of the lattice position field."""
    normals = level.normals
    positions = level.positions
    K = len(positions)
    for v in range(K):
        lo, hi = level.adj_ptr[v], level.adj_ptr[v + 1]
        if hi == lo:
            continue
        nbrs = level.adj[lo:hi]
        n_v = normals[v]
        nbn = normals[nbrs]
        ok = transportable_rows(nbn, np.broadcast_to(n_v, nbn.shape))
        nbrs = nbrs[ok]
        if len(nbrs) == 0:
            continue
        i_v = dirs[v]
        j_v = np.cross(n_v, i_v)
        acc = q[v].copy()
        weight = 1.0
        for u in nbrs:
            rel = q[v] - q[u]
            ti = round(float(rel @ i_v) / spacing)
            tj = round(float(rel @ j_v) / spacing)
            candidate = q[u] + (ti * i_v + tj * j_v) * spacing
            acc = (weight * acc + candidate) / (weight + 1.0)
            weight += 1.0
        acc -= n_v * (n_v @ (acc - positions[v]))
        rel = positions[v] - acc
        ti = float(round_half_toward_zero(float(rel @ i_v) / spacing))
        tj = float(round_half_toward_zero(float(rel @ j_v) / spacing))
        q[v] = acc + (ti * i_v + tj * j_v) * spacing


def _lattice_clusters(mesh: TriMesh, q: np.ndarray, spacing: float):
    """Union-find merge of vertices whose representatives coincide."""
    V = len(q)
    parent = np.arange(V)

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for (u, v) in mesh._edge_map:
        d = q[u] - q[v]
        if float(d @ d) < (0.5 * spacing) ** 2:
            ru, rv = find(u), find(v)
            if ru != rv:
                parent[max(ru, rv)] = min(ru, rv)
    clusters: dict[int, list[int]] = {}
    for v in range(V):
        clusters.setdefault(find(v), []).append(v)
    return list(clusters.values())


def _vertex_faces(mesh: TriMesh) -> list[list[int]]:
    vf: list[list[int]] = [[] for _ in range(len(mesh.vertices))]
    for fi, (a, b, c) in enumerate(mesh.faces):
        vf[a].append(fi)
        vf[b].append(fi)
        vf[c].append(fi)
    return vf


def sample_surface(mesh: TriMesh, field: RoSyField, spacing: float,
                   method: str = "field_lattice", seed: int = 0) \
        -> list[SurfaceSample]:
    """Surface samples with ~`spacing` pairwise separation and frames."""
    if spacing <= 0:
        raise ValidationError("spacing must be positive")
    if spacing > mesh.bounding_diagonal():
        raise ValidationError("spacing exceeds the mesh bounding diagonal")
    if method == "field_lattice":
        return _sample_lattice(mesh, field, spacing)
    if method == "poisson_disk":
        return _sample_poisson(mesh, field, spacing, seed)
    if method == "fps":
        count = len(_sample_lattice(mesh, field, spacing))
        return _sample_fps(mesh, field, spacing, count, seed)
    raise ValidationError(f"unknown sampling method: {method}")


def _sample_lattice(mesh, field, spacing):
    q = _position_field(mesh, field, spacing)
    clusters = _lattice_clusters(mesh, q, spacing)
    vf = _vertex_faces(mesh)
    singular = {f for f, _ in field.singularities}
    candidates = []
    for members in clusters:
        point = q[members].mean(axis=0)
        faces = sorted({f for v in members for f in vf[v]})
        candidates.append((len(members), members[0],
                           _make_sample(mesh, field, point, faces, singular)))
    # boundary slivers (few occupants) yield to their dominant neighbor
    candidates.sort(key=lambda c: (-c[0], c[1]))
    samples: list[SurfaceSample] = []
    kept = np.zeros((0, 3))
    min_sep = 0.75 * spacing
    for _size, _idx, sample in candidates:
        if len(samples) == 0 or np.min(np.linalg.norm(
                kept - sample.position, axis=1)) >= min_sep:
            samples.append(sample)
            kept = np.vstack([kept, sample.position[None, :]])
    return samples


def _random_surface_points(mesh, rng, count):
    areas = mesh.face_areas / mesh.face_areas.sum()
    faces = rng.choice(len(mesh.faces), size=count, p=areas)
    r1 = np.sqrt(rng.random(count))
    r2 = rng.random(count)
    b = np.column_stack([1.0 - r1, r1 * (1.0 - r2), r1 * r2])
    pts = np.einsum("kc,kcd->kd", b, mesh.vertices[mesh.faces[faces]])
    return faces, b, pts


def _sample_poisson(mesh, field, spacing, seed):
    rng = np.random.default_rng(seed)
    radius = 0.75 * spacing
    expected = max(8, int(mesh.face_areas.sum() / spacing**2 * 1.6))
    attempts = 40 * expected
    cell = radius / np.sqrt(3.0)
    grid: dict[tuple[int, int, int], list[int]] = {}
    accepted: list[np.ndarray] = []
    meta: list[tuple[int, np.ndarray]] = []
    faces, barys, pts = _random_surface_points(mesh, rng, attempts)
    r2 = radius * radius
    for t in range(attempts):
        p = pts[t]
        key = tuple((p // cell).astype(np.int64))
        ok = True
        for dx in (-2, -1, 0, 1, 2):
            for dy in (-2, -1, 0, 1, 2):
                for dz in (-2, -1, 0, 1, 2):
                    for idx in grid.get((key[0] + dx, key[1] + dy,
                                         key[2] + dz), ()):
                        d = accepted[idx] - p
                        if float(d @ d) < r2:
                            ok = False
                            break
                    if not ok:
                        break
                if not ok:
                    break
            if not ok:
                break
        if ok:
            grid.setdefault(key, []).append(len(accepted))
            accepted.append(p)
            meta.append((int(faces[t]), barys[t]))
    singular = {f for f, _ in field.singularities}
    return [SurfaceSample(position=accepted[k], face=meta[k][0],
                          bary=meta[k][1],
                          frame=frame_for_point(mesh, field, meta[k][0],
                                                meta[k][1], singular))
            for k in range(len(accepted))]


def _sample_fps(mesh, field, spacing, count, seed):
    rng = np.random.default_rng(seed)
    pool = max(count * 16, 256)
    faces, barys, pts = _random_surface_points(mesh, rng, pool)
    chosen = [0]
    dist = np.linalg.norm(pts - pts[0], axis=1)
    while len(chosen) < count:
        nxt = int(np.argmax(dist))
        chosen.append(nxt)
        dist = np.minimum(dist, np.linalg.norm(pts - pts[nxt], axis=1))
    singular = {f for f, _ in field.singularities}
    return [SurfaceSample(position=pts[k], face=int(faces[k]), bary=barys[k],
                          frame=frame_for_point(mesh, field, int(faces[k]),
                                                barys[k], singular))
            for k in chosen]
