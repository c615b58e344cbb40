"""Extrinsic 4-RoSy orientation fields on triangle meshes.

The solver is a hierarchical Gauss-Seidel smoother: the vertex graph is
coarsened by maximal matching, the coarsest level is seeded with random
tangent directions, and each level smooths vertices in ascending index
order by averaging 4-RoSy-aligned neighbor directions. Every vertex
update is accepted only if it does not increase the local smoothness
energy, which makes the per-level energy monotonically nonincreasing.

Singular faces are detected from the matching rotations around each
face combined with the normal-transport holonomy, so that the quarter
indices of a closed mesh sum exactly to 4 * (V - E + F).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from .errors import SolveError, ValidationError
from .frames import QUARTER, TangentFrame, cross_rows, transport_many
from .mesh import TriMesh, euler_characteristic


@dataclass
class _Level:
    """One level of the vertex-decimation hierarchy."""

    positions: np.ndarray       # (K, 3)
    normals: np.ndarray         # (K, 3)
    adj_ptr: np.ndarray         # (K + 1,)
    adj: np.ndarray             # neighbor indices, ascending per vertex
    edges: np.ndarray           # (E, 2) unique undirected edges, u < v
    parent: np.ndarray | None   # map from the next-finer level into this one
    weights: np.ndarray         # accumulated vertex weights


@dataclass
class RoSyField:
    """Per-vertex tangent crosses, defined up to k*90deg about the normal."""

    i_dirs: np.ndarray                       # (V, 3) representative direction
    normals: np.ndarray                      # (V, 3)
    singularities: list[tuple[int, int]]     # (face index, quarter index)
    energy_log: list[dict] = dataclass_field(default_factory=list)
    _hierarchy: list[_Level] | None = None
    _level_dirs: list[np.ndarray] | None = None

    def frame_at(self, v: int) -> TangentFrame:
        n = self.normals[v]
        i = self.i_dirs[v]
        return TangentFrame(i=i, j=np.cross(n, i), n=n)

    def __len__(self):
        return len(self.i_dirs)


def extrinsic_pair_alignment(i_a, n_a, i_b, n_b):
    """Best |dot| between cross representatives, compared raw in 3D.

    Unlike the transported rosy distance this depends on the embedding,
    which is what makes the solved field align to shape features (an
    axis direction on a cylinder beats any other helix angle).
    All inputs (K, 3); returns the per-row best absolute dot in [0, 1].
    """
    j_a = cross_rows(n_a, i_a)
    j_b = cross_rows(n_b, i_b)
    best = np.abs(np.einsum("ij,ij->i", i_a, i_b))
    for a, b in ((i_a, j_b), (j_a, i_b), (j_a, j_b)):
        np.maximum(best, np.abs(np.einsum("ij,ij->i", a, b)), out=best)
    return np.minimum(best, 1.0)


def smoothness_energy(field_dirs, normals, edges) -> float:
    """Extrinsic cross-smoothness energy over the given undirected edges.

    Sum of squared angles arccos(best representative dot); zero exactly
    when neighboring crosses contain a common 3D direction.
    """
    if len(edges) == 0:
        return 0.0
    u, v = edges[:, 0], edges[:, 1]
    best = extrinsic_pair_alignment(field_dirs[u], normals[u],
                                    field_dirs[v], normals[v])
    ang = np.arccos(best)
    return float(np.sum(ang * ang))


def _random_tangents(normals, rng) -> np.ndarray:
    dirs = rng.standard_normal(normals.shape)
    dirs -= normals * np.einsum("ij,ij->i", normals, dirs)[:, None]
    bad = np.linalg.norm(dirs, axis=1) < 1e-8
    while np.any(bad):
        dirs[bad] = rng.standard_normal((int(bad.sum()), 3))
        dirs[bad] -= normals[bad] * np.einsum(
            "ij,ij->i", normals[bad], dirs[bad])[:, None]
        bad = np.linalg.norm(dirs, axis=1) < 1e-8
    return dirs / np.linalg.norm(dirs, axis=1)[:, None]


def _mesh_level(mesh: TriMesh) -> _Level:
    edges = np.array(sorted(mesh._edge_map.keys()), dtype=np.int64)
    if edges.size == 0:
        edges = edges.reshape(0, 2)
    return _Level(positions=mesh.vertices, normals=mesh.vertex_normals,
                  adj_ptr=mesh.vertex_adj_ptr, adj=mesh.vertex_adj,
                  edges=edges, parent=None,
                  weights=np.ones(len(mesh.vertices)))


def _coarsen(level: _Level) -> _Level | None:
    """Collapse a maximal matching of the level graph; None if stuck."""
    K = len(level.positions)
    mate = np.full(K, -1, dtype=np.int64)
    matched_any = False
    for v in range(K):
        if mate[v] >= 0:
            continue
        for u in level.adj[level.adj_ptr[v]:level.adj_ptr[v + 1]]:
            if mate[u] < 0 and u != v:
                mate[v] = u
                mate[u] = v
                matched_any = True
                break
    if not matched_any:
        return None

    parent = np.full(K, -1, dtype=np.int64)
    coarse_pos, coarse_nrm, coarse_w = [], [], []
    for v in range(K):
        if parent[v] >= 0:
            continue
        u = mate[v]
        idx = len(coarse_pos)
        if u >= 0 and parent[u] < 0:
            wv, wu = level.weights[v], level.weights[u]
            parent[v] = parent[u] = idx
            coarse_pos.append((wv * level.positions[v] + wu * level.positions[u])
                              / (wv + wu))
            n = wv * level.normals[v] + wu * level.normals[u]
            nn = np.linalg.norm(n)
            coarse_nrm.append(n / nn if nn > 1e-8 else level.normals[v])
            coarse_w.append(wv + wu)
        else:
            parent[v] = idx
            coarse_pos.append(level.positions[v])
            coarse_nrm.append(level.normals[v])
            coarse_w.append(level.weights[v])

    Kc = len(coarse_pos)
    edge_set = set()
    for u, v in level.edges:
        pu, pv = parent[u], parent[v]
        if pu != pv:
            edge_set.add((min(pu, pv), max(pu, pv)))
    edges = np.array(sorted(edge_set), dtype=np.int64).reshape(-1, 2)
    nbrs: list[set[int]] = [set() for _ in range(Kc)]
    for u, v in edges:
        nbrs[u].add(v)
        nbrs[v].add(u)
    counts = np.array([len(s) for s in nbrs], dtype=np.int64)
    adj_ptr = np.concatenate(([0], np.cumsum(counts)))
    adj = np.empty(adj_ptr[-1], dtype=np.int64)
    for u, s in enumerate(nbrs):
        adj[adj_ptr[u]:adj_ptr[u + 1]] = sorted(s)
    return _Level(positions=np.array(coarse_pos), normals=np.array(coarse_nrm),
                  adj_ptr=adj_ptr, adj=adj, edges=edges, parent=parent,
                  weights=np.array(coarse_w))


def build_hierarchy(mesh: TriMesh, max_levels: int) -> list[_Level]:
    """Vertex-decimation hierarchy, finest first."""
    levels = [_mesh_level(mesh)]
    while len(levels) < max_levels and len(levels[-1].positions) > 4:
        coarser = _coarsen(levels[-1])
        if coarser is None:
            break
        levels.append(coarser)
    return levels


def _cross3(a, b):
    return np.array([a[1] * b[2] - a[2] * b[1],
                     a[2] * b[0] - a[0] * b[2],
                     a[0] * b[1] - a[1] * b[0]])


def _local_energy(d, n_v, nb_dirs, nb_j) -> float:
    """Extrinsic energy of direction d against raw neighbor crosses."""
    jd = _cross3(n_v, d)
    best = np.abs(nb_dirs @ d)
    np.maximum(best, np.abs(nb_j @ d), out=best)
    np.maximum(best, np.abs(nb_dirs @ jd), out=best)
    np.maximum(best, np.abs(nb_j @ jd), out=best)
    ang = np.arccos(np.minimum(best, 1.0))
    return float(ang @ ang)


def _smooth_level(dirs, level: _Level, iterations: int):
    """Gauss-Seidel sweeps in ascending vertex order; greedy-safe updates.

    Each vertex averages the best-aligned representatives of its
    neighbors' crosses (raw 3D comparison), projects to its tangent
    plane, and keeps the update only if the local extrinsic energy does
    not increase.
    """
    K = len(level.positions)
    normals = level.normals
    for _ in range(iterations):
        for v in range(K):
            lo, hi = level.adj_ptr[v], level.adj_ptr[v + 1]
            if hi == lo:
                continue
            nbrs = level.adj[lo:hi]
            n_v = normals[v]
            nb_dirs = dirs[nbrs]
            nb_j = cross_rows(normals[nbrs], nb_dirs)
            acc = dirs[v].copy()
            weight = 1.0
            for t in range(len(nbrs)):
                d = nb_dirs[t]
                jd = nb_j[t]
                ja = _cross3(n_v, acc)
                dots = (float(acc @ d), float(acc @ jd),
                        float(ja @ d), float(ja @ jd))
                k = int(np.argmax([abs(x) for x in dots]))
                a_rep = acc if k < 2 else ja
                b_rep = (d, jd, d, jd)[k]
                if dots[k] < 0:
                    b_rep = -b_rep
                acc = weight * a_rep + b_rep
                acc -= n_v * (n_v @ acc)
                norm = float(acc @ acc) ** 0.5
                if norm < 1e-12:
                    acc = dirs[v].copy()
                else:
                    acc /= norm
                weight += 1.0
            if _local_energy(acc, n_v, nb_dirs, nb_j) <= \
               _local_energy(dirs[v], n_v, nb_dirs, nb_j):
                dirs[v] = acc


def solve_orientation_field(mesh: TriMesh, levels: int | None = None,
                            iterations_per_level: int = 10,
                            seed: int = 0) -> RoSyField:
    """Smooth extrinsic 4-RoSy field via hierarchical Gauss-Seidel.

    levels defaults to ceil(log2(V)). The returned field records, per
    hierarchy level, the smoothness energy after prolongation and after
    smoothing; the latter never exceeds the former.
    """
    V = len(mesh.vertices)
    if V == 0:
        raise ValidationError("empty mesh")
    if levels is not None and levels < 1:
        raise ValidationError("levels must be >= 1")
    if levels is None:
        levels = max(1, int(np.ceil(np.log2(max(V, 2)))))
    n_comp = len(mesh.face_components())
    if n_comp > 1:
        warnings.warn(f"mesh has {n_comp} connected components; "
                      "the field is solved independently on each")

    hierarchy = build_hierarchy(mesh, levels)
    rng = np.random.default_rng(seed)
    level_dirs: list[np.ndarray | None] = [None] * len(hierarchy)
    energy_log = []

    dirs = _random_tangents(hierarchy[-1].normals, rng)
    for li in range(len(hierarchy) - 1, -1, -1):
        level = hierarchy[li]
        e_pre = smoothness_energy(dirs, level.normals, level.edges)
        iteration_energies = []
        for _ in range(iterations_per_level):
            _smooth_level(dirs, level, 1)
            iteration_energies.append(
                smoothness_energy(dirs, level.normals, level.edges))
        e_post = iteration_energies[-1] if iteration_energies else e_pre
        if e_post > e_pre + 1e-9:
            raise SolveError(
                f"energy increased on level {li}: {e_pre} -> {e_post}")
        energy_log.append({"level": li, "vertices": len(level.positions),
                           "pre": e_pre, "post": e_post,
                           "iterations": iteration_energies})
        level_dirs[li] = dirs
        if li > 0:
            finer = hierarchy[li - 1]
            # the parent map on level li is indexed by level li-1 vertices
            child = dirs[level.parent]
            child -= finer.normals * np.einsum(
                "ij,ij->i", finer.normals, child)[:, None]
            norms = np.linalg.norm(child, axis=1)
            bad = norms < 1e-8
            if np.any(bad):
                child[bad] = _random_tangents(finer.normals[bad], rng)
                norms[bad] = 1.0
            dirs = child / norms[:, None]

    field = RoSyField(i_dirs=dirs, normals=mesh.vertex_normals.copy(),
                      singularities=[], energy_log=energy_log,
                      _hierarchy=hierarchy, _level_dirs=level_dirs)
    field.singularities = detect_singularities(field, mesh)
    return field


def random_field(mesh: TriMesh, seed: int = 0) -> RoSyField:
    """Uniformly random tangent direction per vertex (ablation baseline)."""
    rng = np.random.default_rng(seed)
    dirs = _random_tangents(mesh.vertex_normals, rng)
    field = RoSyField(i_dirs=dirs, normals=mesh.vertex_normals.copy(),
                      singularities=[])
    field.singularities = detect_singularities(field, mesh)
    return field


def _edge_matching_angles(field: RoSyField, edges: np.ndarray) -> np.ndarray:
    """Angle from the transported u-direction to the v-direction, per edge."""
    u, v = edges[:, 0], edges[:, 1]
    n_u, n_v = field.normals[u], field.normals[v]
    t = transport_many(field.i_dirs[u], n_u, n_v)
    i_v = field.i_dirs[v]
    s = np.einsum("ij,ij->i", n_v, np.cross(t, i_v))
    c = np.einsum("ij,ij->i", t, i_v)
    return np.arctan2(s, c)


def _spherical_areas(na, nb, nc) -> np.ndarray:
    """Signed area of the spherical triangles spanned by unit normals."""
    triple = np.einsum("ij,ij->i", na, np.cross(nb, nc))
    denom = 1.0 + np.einsum("ij,ij->i", na, nb) \
        + np.einsum("ij,ij->i", nb, nc) + np.einsum("ij,ij->i", nc, na)
    return 2.0 * np.arctan2(triple, denom)


def detect_singularities(field: RoSyField, mesh: TriMesh) \
        -> list[tuple[int, int]]:
    """Faces where the 4-RoSy matchings around the corners do not cancel.

    Returns (face index, quarter index) pairs. For a closed mesh the
    quarter indices sum exactly to 4 * euler_characteristic(mesh).
    """
    edges = np.array(sorted(mesh._edge_map.keys()), dtype=np.int64)
    if edges.size == 0:
        return []
    theta = _edge_matching_angles(field, edges)
    theta_of = {(int(u), int(v)): float(t)
                for (u, v), t in zip(edges, theta)}

    f = mesh.faces
    H = _spherical_areas(field.normals[f[:, 0]], field.normals[f[:, 1]],
                         field.normals[f[:, 2]])

    out = []
    two_pi = 2.0 * np.pi
    for fi in range(len(f)):
        a, b, c = int(f[fi, 0]), int(f[fi, 1]), int(f[fi, 2])
        theta_sum = 0.0
        k_sum = 0
        for u, v in ((a, b), (b, c), (c, a)):
            t = theta_of[(u, v)] if u < v else -theta_of[(v, u)]
            theta_sum += t
            k_sum += int(np.round(t / QUARTER))
        m = int(np.round((theta_sum + H[fi]) / two_pi))
        index = 4 * m - k_sum
        if index != 0:
            out.append((fi, index))
    return out


def poincare_hopf_sum(field: RoSyField) -> int:
    return sum(q for _, q in field.singularities)


def check_poincare_hopf(field: RoSyField, mesh: TriMesh):
    """Raise unless quarter indices sum to 4 * chi (closed meshes only)."""
    if not mesh.is_closed():
        raise ValidationError("Poincare-Hopf check requires a closed mesh")
    total = poincare_hopf_sum(field)
    expected = 4 * euler_characteristic(mesh)
    if total != expected:
        raise SolveError(
            f"singularity indices sum to {total}, expected {expected}")
