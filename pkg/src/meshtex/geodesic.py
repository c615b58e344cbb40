"""Geodesic patch extraction and straight-line tracing in texture space.

A patch is grown face-by-face from a center sample with a priority
queue ordered by the unfolded distance of face centers. Each face is
adopted on first pop, which realizes the shortest-unfolding rule: near
singularities, competing unfoldings of the same face lose to the one
reached through the shorter path, and the seam falls along the
shortest geodesic through the singularity.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass

import numpy as np

from .errors import SolveError, ValidationError
from .frames import TangentFrame, rotation_between, unfold_frame_across_edge
from .mesh import TriMesh
from .sampling import SurfaceSample

SQRT2 = float(np.sqrt(2.0))


class FaceSampleIndex:
    """Maps each face to the samples it contains.

    A sample belongs to exactly one face (the one stored on the sample;
    construction assigns edge-straddling points to the lower face index),
    so patch membership is automatically unique.
    """

    def __init__(self, samples: list[SurfaceSample]):
        self.samples = samples
        self.by_face: dict[int, list[int]] = {}
        for k, s in enumerate(samples):
            self.by_face.setdefault(int(s.face), []).append(k)

    def in_face(self, face: int) -> list[int]:
        return self.by_face.get(face, [])


@dataclass
class GeodesicPatch:
    """Unfolded neighborhood of a center sample.

    members holds (sample index, 2D texture coordinate); face_records
    holds (face index, t_f, i_f, j_f) for every visited face.
    rejected_records holds unfoldings that lost the first-visit race
    (only populated when extraction ran with collect_rejected).
    """

    center: SurfaceSample
    radius: float
    members: list[tuple[int, np.ndarray]]
    face_records: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]]
    rejected_records: dict[int, list[tuple[np.ndarray, np.ndarray,
                                           np.ndarray]]] | None = None

    def member_coords(self) -> np.ndarray:
        if not self.members:
            return np.zeros((0, 2))
        return np.array([t for _, t in self.members])

    def member_ids(self) -> list[int]:
        return [k for k, _ in self.members]

    def to_json(self) -> str:
        return json.dumps({
            "center_face": int(self.center.face),
            "rho": self.radius,
            "members": [{"sample_id": int(k),
                         "tx": float(t[0]), "ty": float(t[1])}
                        for k, t in self.members],
        })


def extract_geodesic_patch(mesh: TriMesh, sample_index: FaceSampleIndex,
                           center: SurfaceSample, rho: float,
                           collect_rejected: bool = False) -> GeodesicPatch:
    """Collect samples whose unfolded coordinate lies in the rho-square.

    Faces pop in nondecreasing unfolded-center distance; each is
    visited once, so the coordinate a face keeps is the one reached
    through the shortest unfolding. Frames propagate by rotation across
    the shared edge; coordinates by exact two-leg development through
    the shared-edge midpoint.
    """
    if rho <= 0:
        raise ValidationError("patch radius must be positive")
    f0 = int(center.face)
    if mesh.face_areas[f0] <= 0:
        raise ValidationError("center lies on a degenerate face")
    p = center.position
    n0 = mesh.face_normals[f0]
    R = rotation_between(center.frame.n, n0)
    i0 = R @ center.frame.i
    i0 -= n0 * (n0 @ i0)
    i0 /= np.linalg.norm(i0)
    j0 = np.cross(n0, i0)
    c0 = mesh.face_centers[f0]
    t0 = np.array([i0 @ (c0 - p), j0 @ (c0 - p)])

    cutoff = SQRT2 * rho
    visited: set[int] = set()
    records: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}
    members: list[tuple[int, np.ndarray]] = []
    # priority is clamped below the parent's so pop order is provably
    # nondecreasing; the counter breaks ties deterministically
    last_priority = -np.inf
    counter = 0
    heap = [(float(np.linalg.norm(t0)), counter, f0, t0, i0, j0)]

    rejected: dict[int, list] = {} if collect_rejected else None
    while heap:
        priority, _tie, f, t_f, i_f, j_f = heapq.heappop(heap)
        if f in visited:
            if rejected is not None:
                rejected.setdefault(f, []).append((t_f, i_f, j_f))
            continue
        if priority < last_priority - 1e-9:
            raise SolveError("pop order regression in patch traversal")
        last_priority = priority
        visited.add(f)
        records[f] = (t_f, i_f, j_f)

        c_f = mesh.face_centers[f]
        for k in sample_index.in_face(f):
            s = sample_index.samples[k]
            rel = s.position - c_f
            t_s = np.array([t_f[0] + i_f @ rel, t_f[1] + j_f @ rel])
            if max(abs(t_s[0]), abs(t_s[1])) < rho:
                members.append((k, t_s))

        for g in mesh.face_neighbors[f]:
            if g < 0 or g in visited:
                continue
            g = int(g)
            frame_g = unfold_frame_across_edge(
                TangentFrame(i=i_f, j=j_f, n=mesh.face_normals[f]), f, g, mesh)
            # relay through the shared-edge midpoint: both legs lie in
            # their face planes, so the development is exact for any
            # dihedral angle (the center-to-center chord is not)
            a, b = mesh.shared_edge(f, g)
            m_e = 0.5 * (mesh.vertices[a] + mesh.vertices[b])
            leg_u = m_e - c_f
            leg_v = mesh.face_centers[g] - m_e
            t_g = np.array([
                t_f[0] + i_f @ leg_u + frame_g.i @ leg_v,
                t_f[1] + j_f @ leg_u + frame_g.j @ leg_v,
            ])
            norm_g = float(np.linalg.norm(t_g))
            if norm_g >= cutoff + mesh.face_circumradius[g]:
                continue
            counter += 1
            heapq.heappush(heap, (max(norm_g, priority), counter, g,
                                  t_g, frame_g.i, frame_g.j))

    return GeodesicPatch(center=center, radius=rho, members=members,
                         face_records=records, rejected_records=rejected)


def _exit_through_edges(bary, dbary, entry_edge):
    """First barycentric coordinate to hit zero along direction dbary.

    Edge slot e is opposite corner (e + 2) % 3: the edge (v_e, v_{e+1})
    is where bary[(e + 2) % 3] vanishes.
    """
    best_s, best_edge = np.inf, -1
    for corner in range(3):
        edge = (corner + 1) % 3
        if edge == entry_edge:
            continue
        if dbary[corner] < -1e-15:
            s = -bary[corner] / dbary[corner]
            if s < best_s:
                best_s, best_edge = s, edge
    return best_s, best_edge


def trace_texture_coordinate(mesh: TriMesh, start: SurfaceSample,
                             frame: TangentFrame, target_t) \
        -> SurfaceSample | None:
    """Walk a straight texture-space segment from start to target_t.

    The walk unfolds each crossed face into the plane and returns the
    surface point whose unfolded position equals target_t, or None if
    it exits a boundary or degenerates (e.g. pinned on a singular
    vertex fan).
    """
    target_t = np.asarray(target_t, dtype=np.float64)
    total = float(np.linalg.norm(target_t))
    f = int(start.face)
    if total == 0.0:
        return start

    n_f = mesh.face_normals[f]
    R = rotation_between(frame.n, n_f)
    i_f = R @ frame.i
    i_f -= n_f * (n_f @ i_f)
    i_f /= np.linalg.norm(i_f)
    j_f = np.cross(n_f, i_f)

    x = start.position.copy()
    bary = start.bary.copy()
    remaining = total
    u = target_t / total
    entry_edge = -1
    max_steps = 4 * len(mesh.faces) + 16
    for _ in range(max_steps):
        d3 = u[0] * i_f + u[1] * j_f
        tri = mesh.vertices[mesh.faces[f]]
        # barycentric velocity of the ray inside this face
        e1 = tri[1] - tri[0]
        e2 = tri[2] - tri[0]
        nrm = np.cross(e1, e2)
        inv_den = 1.0 / (nrm @ nrm)
        db1 = np.cross(d3, tri[2] - tri[0]) @ nrm * inv_den
        db2 = np.cross(tri[1] - tri[0], d3) @ nrm * inv_den
        dbary = np.array([-(db1 + db2), db1, db2])
        s_exit, exit_edge = _exit_through_edges(bary, dbary, entry_edge)
        if remaining <= s_exit:
            bary_end = bary + remaining * dbary
            bary_end = np.clip(bary_end, 0.0, None)
            bary_end /= bary_end.sum()
            pos = bary_end @ tri
            return SurfaceSample(position=pos, face=f, bary=bary_end,
                                 frame=TangentFrame(i=i_f, j=j_f, n=n_f))
        if exit_edge < 0:
            return None  # direction parallel to the only admissible edges
        g = int(mesh.face_neighbors[f, exit_edge])
        if g < 0:
            return None  # walked off an open boundary
        bary = bary + s_exit * dbary
        x = np.clip(bary, 0.0, None) @ tri
        remaining -= s_exit
        unfolded = unfold_frame_across_edge(
            TangentFrame(i=i_f, j=j_f, n=n_f), f, g, mesh)
        # entry edge slot in g: the edge shared with f
        entry_edge = -1
        for slot in range(3):
            if mesh.face_neighbors[g, slot] == f:
                entry_edge = slot
                break
        # re-express barycentrics in g
        tri_g = mesh.vertices[mesh.faces[g]]
        _q, bary = _project_bary(x, tri_g)
        f = g
        i_f, j_f, n_f = unfolded.i, unfolded.j, unfolded.n
    return None


def _project_bary(p, tri):
    e1 = tri[1] - tri[0]
    e2 = tri[2] - tri[0]
    nrm = np.cross(e1, e2)
    inv_den = 1.0 / (nrm @ nrm)
    rel = p - tri[0]
    b1 = np.cross(rel, e2) @ nrm * inv_den
    b2 = np.cross(e1, rel) @ nrm * inv_den
    bary = np.array([1.0 - b1 - b2, b1, b2])
    bary = np.clip(bary, 0.0, None)
    s = bary.sum()
    q = bary @ tri / s
    return q, bary / s
