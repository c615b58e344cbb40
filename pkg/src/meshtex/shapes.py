"""Synthetic test meshes: plane, cube, sphere, cylinder, torus, genus-2.

All generators return watertight or cleanly bounded TriMesh instances
with consistent counter-clockwise winding. Dimensions are meters.
"""

from __future__ import annotations

import numpy as np

from .mesh import TriMesh


def _grid_faces(nx: int, ny: int) -> np.ndarray:
    """Two triangles per cell of an (nx+1) x (ny+1) vertex grid."""
    faces = []
    for y in range(ny):
        for x in range(nx):
            a = y * (nx + 1) + x
            b = a + 1
            c = a + nx + 1
            d = c + 1
            faces.append((a, b, d))
            faces.append((a, d, c))
    return np.array(faces, dtype=np.int64)


def plane_grid(nx: int = 40, ny: int = 40, width: float = 1.0,
               height: float = 1.0, z: float = 0.0) -> TriMesh:
    """Open rectangular grid in the z-plane, normal +z."""
    xs = np.linspace(0.0, width, nx + 1)
    ys = np.linspace(0.0, height, ny + 1)
    gx, gy = np.meshgrid(xs, ys)
    verts = np.column_stack([gx.ravel(), gy.ravel(), np.full(gx.size, z)])
    return TriMesh(verts, _grid_faces(nx, ny))


def checkerboard_texture(period_px: int = 8, size_px: int = 64,
                         lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
    """Gray checkerboard image, (size, size, 3), row 0 at v = 0."""
    idx = np.arange(size_px) // period_px
    board = (idx[:, None] + idx[None, :]) % 2
    img = np.where(board[..., None] == 0, lo, hi)
    return np.repeat(img, 3, axis=2).astype(np.float32)


def textured_plane(nx: int = 40, ny: int = 40, width: float = 1.0,
                   height: float = 1.0, texture=None) -> TriMesh:
    """Plane grid with uv coordinates spanning [0, 1]^2 and a texture."""
    mesh = plane_grid(nx, ny, width, height)
    if texture is None:
        texture = checkerboard_texture()
    uv_verts = mesh.vertices[:, :2] / np.array([width, height])
    uvs = uv_verts[mesh.faces]
    return TriMesh(mesh.vertices, mesh.faces, uvs=uvs, texture=texture)


def cube(n: int = 6, side: float = 1.0) -> TriMesh:
    """Closed axis-aligned cube with n x n cells per side, welded corners."""
    grids = []
    t = np.linspace(0.0, side, n + 1)
    u, v = np.meshgrid(t, t)
    flat = np.column_stack([u.ravel(), v.ravel()])
    s = side
    # (axis plane, constant coordinate, uv -> xyz map, flip winding)
    sides = [
        (lambda a, b: np.column_stack([a, b, np.zeros_like(a)]), True),   # z=0
        (lambda a, b: np.column_stack([a, b, np.full_like(a, s)]), False),  # z=s
        (lambda a, b: np.column_stack([a, np.zeros_like(a), b]), False),  # y=0
        (lambda a, b: np.column_stack([a, np.full_like(a, s), b]), True),   # y=s
        (lambda a, b: np.column_stack([np.zeros_like(a), a, b]), True),   # x=0
        (lambda a, b: np.column_stack([np.full_like(a, s), a, b]), False),  # x=s
    ]
    all_verts = []
    all_faces = []
    offset = 0
    base_faces = _grid_faces(n, n)
    for mapper, flip in sides:
        verts = mapper(flat[:, 0], flat[:, 1])
        faces = base_faces.copy() + offset
        if flip:
            faces = faces[:, ::-1]
        all_verts.append(verts)
        all_faces.append(faces)
        offset += len(verts)
    verts = np.vstack(all_verts)
    faces = np.vstack(all_faces)
    verts, faces = weld_vertices(verts, faces, tol=side * 1e-9)
    return TriMesh(verts, faces)


def weld_vertices(verts: np.ndarray, faces: np.ndarray, tol: float):
    """Merge vertices that coincide on a tolerance grid; drops duplicates."""
    keys = np.round(verts / tol).astype(np.int64)
    _, first, inverse = np.unique(keys, axis=0, return_index=True,
                                  return_inverse=True)
    order = np.argsort(first)
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    new_verts = verts[np.sort(first)]
    remap = rank[inverse]
    return new_verts, remap[faces]


def icosphere(subdivisions: int = 3, radius: float = 1.0) -> TriMesh:
    """Closed sphere from subdividing an icosahedron."""
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array([
        (-1, phi, 0), (1, phi, 0), (-1, -phi, 0), (1, -phi, 0),
        (0, -1, phi), (0, 1, phi), (0, -1, -phi), (0, 1, -phi),
        (phi, 0, -1), (phi, 0, 1), (-phi, 0, -1), (-phi, 0, 1),
    ], dtype=np.float64)
    verts /= np.linalg.norm(verts, axis=1)[:, None]
    faces = np.array([
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ], dtype=np.int64)
    for _ in range(subdivisions):
        verts_list = list(verts)
        midpoint: dict[tuple[int, int], int] = {}

        def mid(a, b):
            key = (a, b) if a < b else (b, a)
            if key not in midpoint:
                m = verts_list[a] + verts_list[b]
                m = m / np.linalg.norm(m)
                midpoint[key] = len(verts_list)
                verts_list.append(m)
            return midpoint[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        verts = np.array(verts_list)
        faces = np.array(new_faces, dtype=np.int64)
    return TriMesh(verts * radius, faces)


def cylinder(n_around: int = 64, n_along: int = 16, radius: float = 0.5,
             height: float = 1.0) -> TriMesh:
    """Open tube around the z axis (no caps, two boundary loops)."""
    thetas = np.arange(n_around) * (2.0 * np.pi / n_around)
    zs = np.linspace(0.0, height, n_along + 1)
    verts = []
    for z in zs:
        for t in thetas:
            verts.append((radius * np.cos(t), radius * np.sin(t), z))
    verts = np.array(verts)
    faces = []
    for row in range(n_along):
        for k in range(n_around):
            a = row * n_around + k
            b = row * n_around + (k + 1) % n_around
            c = a + n_around
            d = b + n_around
            faces.append((a, b, d))
            faces.append((a, d, c))
    return TriMesh(verts, np.array(faces, dtype=np.int64))


def torus(n_major: int = 48, n_minor: int = 24, major_radius: float = 1.0,
          minor_radius: float = 0.35) -> TriMesh:
    """Closed torus around the z axis."""
    verts = []
    for a in range(n_major):
        ta = 2.0 * np.pi * a / n_major
        for b in range(n_minor):
            tb = 2.0 * np.pi * b / n_minor
            r = major_radius + minor_radius * np.cos(tb)
            verts.append((r * np.cos(ta), r * np.sin(ta),
                          minor_radius * np.sin(tb)))
    verts = np.array(verts)
    faces = []
    for a in range(n_major):
        for b in range(n_minor):
            v00 = a * n_minor + b
            v01 = a * n_minor + (b + 1) % n_minor
            v10 = ((a + 1) % n_major) * n_minor + b
            v11 = ((a + 1) % n_major) * n_minor + (b + 1) % n_minor
            faces.append((v00, v10, v11))
            faces.append((v00, v11, v01))
    return TriMesh(verts, np.array(faces, dtype=np.int64))


def genus2(resolution: int = 80, scale: float = 1.0) -> TriMesh:
    """Closed genus-2 surface from an implicit double-holed blob."""
    from skimage import measure

    n = resolution
    lim = 1.45
    xs = np.linspace(-lim, lim, n)
    ys = np.linspace(-lim * 0.75, lim * 0.75, int(n * 0.75))
    zs = np.linspace(-lim * 0.4, lim * 0.4, int(n * 0.4) + 4)
    X, Y, Z = np.meshgrid(xs, ys, zs, indexing="ij")
    f = (X**2 * (1.0 - X**2) - Y**2) ** 2 + 0.5 * Z**2 - 0.025
    spacing = (xs[1] - xs[0], ys[1] - ys[0], zs[1] - zs[0])
    verts, faces, _normals, _vals = measure.marching_cubes(
        f, level=0.0, spacing=spacing)
    verts = verts + np.array([xs[0], ys[0], zs[0]])
    verts, faces = weld_vertices(verts, faces.astype(np.int64), tol=1e-7)
    return TriMesh(verts * scale, faces)


def scene_three_primitives(spacing_hint: float = 0.05):
    """Disjoint plane / cylinder / sphere arrangement with face labels.

    Returns (mesh, face_labels) with labels 0=plane, 1=cylinder, 2=sphere.
    The three parts are disconnected components of one mesh.
    """
    plane = plane_grid(24, 24, 1.2, 1.2)
    cyl = cylinder(n_around=48, n_along=14, radius=0.3, height=1.0)
    sph = icosphere(subdivisions=3, radius=0.45)

    parts = [(plane, np.array([0.0, 0.0, 0.0])),
             (cyl, np.array([2.0, 0.5, 0.0])),
             (sph, np.array([0.5, 2.2, 0.5]))]
    verts, faces, labels = [], [], []
    offset = 0
    for li, (part, shift) in enumerate(parts):
        verts.append(part.vertices + shift)
        faces.append(part.faces + offset)
        labels.append(np.full(len(part.faces), li, dtype=np.int64))
        offset += len(part.vertices)
    mesh = TriMesh(np.vstack(verts), np.vstack(faces))
    return mesh, np.concatenate(labels)
