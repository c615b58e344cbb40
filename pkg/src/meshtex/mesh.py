"""Indexed triangle mesh with adjacency, normals and validation.

Coordinates are in meters throughout. A TriMesh is immutable after
construction; all derived quantities (normals, areas, adjacency) are
computed once in the constructor and safe for concurrent reads.
"""

from __future__ import annotations

import numpy as np

from .errors import ValidationError

DEGENERATE_AREA = 1e-12  # m^2; faces at or below this are rejected


class TriMesh:
    """A triangle mesh with face adjacency and area-weighted vertex normals.

    Parameters
    ----------
    vertices : (V, 3) float array
        Vertex positions in meters.
    faces : (F, 3) int array
        Vertex index triples, counter-clockwise when viewed from outside.
    colors : (V, 3) float array, optional
        Per-vertex RGB in [0, 1].
    uvs : (F, 3, 2) float array, optional
        Texture coordinates per face corner, (0,0) at bottom-left.
    texture : (H, W, 3) float array, optional
        Texture image with row 0 at v=0 (bottom).
    fix_winding : bool
        Flip each closed connected component whose signed volume is
        negative so normals point outward.
    """

    def __init__(self, vertices, faces, colors=None, uvs=None, texture=None,
                 fix_winding=True):
        self.vertices = np.ascontiguousarray(vertices, dtype=np.float64)
        self.faces = np.ascontiguousarray(faces, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise ValidationError("vertices must be (V, 3)")
        if self.faces.ndim != 2 or self.faces.shape[1] != 3:
            raise ValidationError("faces must be (F, 3)")
        if self.faces.size and (self.faces.min() < 0
                                or self.faces.max() >= len(self.vertices)):
            raise ValidationError("face index out of range")
        if np.any(self.faces[:, 0] == self.faces[:, 1]) or \
           np.any(self.faces[:, 1] == self.faces[:, 2]) or \
           np.any(self.faces[:, 2] == self.faces[:, 0]):
            raise ValidationError("face with repeated vertex")

        self.colors = None if colors is None else np.clip(
            np.asarray(colors, dtype=np.float64), 0.0, 1.0)
        if self.colors is not None and self.colors.shape != self.vertices.shape:
            raise ValidationError("colors must be (V, 3)")
        self.uvs = None if uvs is None else np.asarray(uvs, dtype=np.float64)
        if self.uvs is not None and self.uvs.shape != (len(self.faces), 3, 2):
            raise ValidationError("uvs must be (F, 3, 2)")
        self.texture = None if texture is None else np.asarray(
            texture, dtype=np.float32)

        self._build_geometry()
        self._build_adjacency()
        if fix_winding:
            self._fix_component_winding()

    # -- construction helpers -------------------------------------------

    def _build_geometry(self):
        v = self.vertices
        f = self.faces
        e1 = v[f[:, 1]] - v[f[:, 0]]
        e2 = v[f[:, 2]] - v[f[:, 0]]
        cross = np.cross(e1, e2)
        norms = np.linalg.norm(cross, axis=1)
        self.face_areas = 0.5 * norms
        bad = np.nonzero(self.face_areas <= DEGENERATE_AREA)[0]
        if bad.size:
            raise ValidationError(
                f"degenerate face {bad[0]} (area {self.face_areas[bad[0]]:.3e} m^2)")
        self.face_normals = cross / norms[:, None]
        self.face_centers = v[f].mean(axis=1)
        # max corner distance from the centroid, used as a traversal bound
        self.face_circumradius = np.linalg.norm(
            v[f] - self.face_centers[:, None, :], axis=2).max(axis=1)
        self._compute_vertex_normals()

    def _compute_vertex_normals(self):
        vn = np.zeros_like(self.vertices)
        weighted = self.face_normals * self.face_areas[:, None]
        for c in range(3):
            np.add.at(vn, self.faces[:, c], weighted)
        norms = np.linalg.norm(vn, axis=1)
        # isolated or perfectly cancelling vertices get an arbitrary unit axis
        degenerate = norms < 1e-20
        vn[degenerate] = (0.0, 0.0, 1.0)
        norms[degenerate] = 1.0
        self.vertex_normals = vn / norms[:, None]

    def _build_adjacency(self):
        F = len(self.faces)
        # edge slot e of face f is (faces[f, e], faces[f, (e+1) % 3])
        self.face_neighbors = np.full((F, 3), -1, dtype=np.int64)
        edge_map: dict[tuple[int, int], list[tuple[int, int, bool]]] = {}
        for fi in range(F):
            a, b, c = self.faces[fi]
            for slot, (u, w) in enumerate(((a, b), (b, c), (c, a))):
                key = (u, w) if u < w else (w, u)
                edge_map.setdefault(key, []).append((fi, slot, u < w))
        for key, entries in edge_map.items():
            if len(entries) > 2:
                raise ValidationError(
                    f"non-manifold edge {key}: {len(entries)} incident faces")
            if len(entries) == 2:
                (f0, s0, d0), (f1, s1, d1) = entries
                if d0 == d1:
                    raise ValidationError(
                        f"inconsistent winding across edge {key} "
                        f"(faces {f0} and {f1})")
                self.face_neighbors[f0, s0] = f1
                self.face_neighbors[f1, s1] = f0
        self._edge_map = edge_map
        self.n_edges = len(edge_map)

        V = len(self.vertices)
        nbr_sets: list[set[int]] = [set() for _ in range(V)]
        for (u, w) in edge_map:
            nbr_sets[u].add(w)
            nbr_sets[w].add(u)
        counts = np.array([len(s) for s in nbr_sets], dtype=np.int64)
        self.vertex_adj_ptr = np.concatenate(([0], np.cumsum(counts)))
        self.vertex_adj = np.empty(self.vertex_adj_ptr[-1], dtype=np.int64)
        for u, s in enumerate(nbr_sets):
            self.vertex_adj[self.vertex_adj_ptr[u]:self.vertex_adj_ptr[u + 1]] = \
                sorted(s)

    def _fix_component_winding(self):
        comps = self.face_components()
        flipped_any = False
        for comp in comps:
            faces = self.faces[comp]
            boundary = np.any(self.face_neighbors[comp] < 0)
            if boundary:
                continue
            centers = self.face_centers[comp]
            vol = np.einsum("ij,ij->i", centers, self.face_normals[comp])
            signed = (vol * self.face_areas[comp]).sum() / 3.0
            if signed < 0:
                self.faces[comp] = faces[:, ::-1]
                flipped_any = True
        if flipped_any:
            self._build_geometry()
            self._build_adjacency()

    # -- queries ---------------------------------------------------------

    def face_components(self) -> list[np.ndarray]:
        """Connected components of the face-adjacency graph."""
        F = len(self.faces)
        label = np.full(F, -1, dtype=np.int64)
        comps = []
        for start in range(F):
            if label[start] >= 0:
                continue
            stack = [start]
            label[start] = len(comps)
            members = [start]
            while stack:
                f = stack.pop()
                for g in self.face_neighbors[f]:
                    if g >= 0 and label[g] < 0:
                        label[g] = len(comps)
                        members.append(g)
                        stack.append(g)
            comps.append(np.array(sorted(members), dtype=np.int64))
        return comps

    def vertex_neighbors(self, v: int) -> np.ndarray:
        return self.vertex_adj[self.vertex_adj_ptr[v]:self.vertex_adj_ptr[v + 1]]

    def shared_edge(self, face_a: int, face_b: int) -> tuple[int, int]:
        """Endpoints (vertex ids) of the edge shared by two adjacent faces."""
        for slot in range(3):
            if self.face_neighbors[face_a, slot] == face_b:
                u = self.faces[face_a, slot]
                w = self.faces[face_a, (slot + 1) % 3]
                return int(u), int(w)
        raise ValidationError(f"faces {face_a} and {face_b} are not adjacent")

    def is_closed(self) -> bool:
        return bool(np.all(self.face_neighbors >= 0))

    def bounding_diagonal(self) -> float:
        lo = self.vertices.min(axis=0)
        hi = self.vertices.max(axis=0)
        return float(np.linalg.norm(hi - lo))

    def barycentric_point(self, face: int, bary) -> np.ndarray:
        return np.asarray(bary, dtype=np.float64) @ self.vertices[self.faces[face]]

    def __repr__(self):
        return (f"TriMesh(V={len(self.vertices)}, F={len(self.faces)}, "
                f"E={self.n_edges}, closed={self.is_closed()})")


def euler_characteristic(mesh: TriMesh) -> int:
    """V - E + F with E counted as unique undirected edges."""
    return len(mesh.vertices) - mesh.n_edges + len(mesh.faces)
