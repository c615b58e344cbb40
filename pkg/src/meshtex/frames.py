"""Tangent frames with 4-fold rotational matching.

A frame is an orthonormal triple (i, j, n) with j = n x i. Cross
directions are compared modulo 90-degree rotations about the normal,
after parallel-transporting one frame into the other's tangent plane
by the smallest rotation between the normals.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

QUARTER = 0.5 * np.pi
ANTIPARALLEL_EPS = 1e-9


@dataclass(frozen=True)
class TangentFrame:
    """Orthonormal tangent frame; i, j span the tangent plane of n."""

    i: np.ndarray
    j: np.ndarray
    n: np.ndarray

    @classmethod
    def from_in(cls, i, n) -> "TangentFrame":
        """Build a frame from a tangent direction and a normal.

        i is projected into n's plane and renormalized; j = n x i.
        """
        n = _unit(np.asarray(n, dtype=np.float64))
        i = np.asarray(i, dtype=np.float64)
        i = i - n * (n @ i)
        norm = np.linalg.norm(i)
        if norm < 1e-12:
            raise ValidationError("tangent direction parallel to normal")
        i = i / norm
        return cls(i=i, j=np.cross(n, i), n=n)

    def validate(self, tol=1e-6):
        for a, b in ((self.i, self.j), (self.j, self.n), (self.n, self.i)):
            if abs(a @ b) > tol:
                raise ValidationError("frame axes not orthogonal")
        for a in (self.i, self.j, self.n):
            if abs(np.linalg.norm(a) - 1.0) > tol:
                raise ValidationError("frame axis not unit length")
        if np.linalg.norm(np.cross(self.n, self.i) - self.j) > tol:
            raise ValidationError("frame is not right-handed (j != n x i)")

    def rotated_quarter(self, k: int) -> "TangentFrame":
        """Frame rotated by k*90 degrees about its normal (exact axis swap)."""
        i, j = self.i, self.j
        k = k % 4
        if k == 1:
            i, j = j, -i
        elif k == 2:
            i, j = -i, -j
        elif k == 3:
            i, j = -j, i
        return TangentFrame(i=i, j=j, n=self.n)


def _unit(v):
    return v / np.linalg.norm(v)


def rotation_about(axis, angle) -> np.ndarray:
    """Rodrigues rotation matrix about a unit axis."""
    axis = np.asarray(axis, dtype=np.float64)
    c, s = np.cos(angle), np.sin(angle)
    K = np.array([[0.0, -axis[2], axis[1]],
                  [axis[2], 0.0, -axis[0]],
                  [-axis[1], axis[0], 0.0]])
    return c * np.eye(3) + s * K + (1.0 - c) * np.outer(axis, axis)


def rotation_between(n_from, n_to) -> np.ndarray:
    """Smallest rotation taking unit vector n_from to n_to.

    Raises for antiparallel inputs, where the rotation is undefined.
    """
    n_from = np.asarray(n_from, dtype=np.float64)
    n_to = np.asarray(n_to, dtype=np.float64)
    c = float(n_from @ n_to)
    if c <= -1.0 + ANTIPARALLEL_EPS:
        raise ValidationError("antiparallel normals: transport undefined")
    axis = np.cross(n_from, n_to)
    s2 = axis @ axis
    if s2 < 1e-30:
        return np.eye(3)
    # Rodrigues with sin = |axis|, cos = c; numerically stable for c > -1
    K = np.array([[0.0, -axis[2], axis[1]],
                  [axis[2], 0.0, -axis[0]],
                  [-axis[1], axis[0], 0.0]])
    return np.eye(3) + K + K @ K / (1.0 + c)


def transport_direction(d, n_from, n_to) -> np.ndarray:
    """Parallel-transport tangent direction d from n_from's plane to n_to's."""
    return rotation_between(n_from, n_to) @ d


def rosy_align(reference: TangentFrame, candidate: TangentFrame):
    """Align candidate's cross with reference's direction.

    The candidate is transported into the reference tangent plane, then
    rotated by k*90 degrees (k in 0..3) to maximize dot(i_ref, i_cand).
    Ties at exactly 45 degrees resolve to the smaller k.

    Returns (aligned TangentFrame in the reference plane, k).
    """
    k, _delta, it, jt = _align_parts(reference, candidate)
    return TangentFrame(i=it, j=jt, n=reference.n).rotated_quarter(k), k


def rosy_match(reference: TangentFrame, candidate: TangentFrame):
    """Matching index and residual angle of candidate against reference.

    Returns (k, delta) such that rotating the transported candidate by
    k*90deg + delta about the reference normal gives i_ref, with
    delta in (-pi/4, pi/4].
    """
    k, delta, _it, _jt = _align_parts(reference, candidate)
    return k, delta


def _align_parts(reference: TangentFrame, candidate: TangentFrame):
    R = rotation_between(candidate.n, reference.n)
    it = R @ candidate.i
    jt = R @ candidate.j
    dots = (float(reference.i @ it), float(reference.i @ jt),
            -float(reference.i @ it), -float(reference.i @ jt))
    k = int(np.argmax(dots))  # argmax returns the first (smallest) on ties
    # aligned i after rotating by k quarters: sequence it, jt, -it, -jt
    ali = (it, jt, -it, -jt)[k]
    alj = (jt, -it, -jt, it)[k]
    s = float(reference.n @ np.cross(ali, reference.i))
    delta = float(np.arctan2(s, dots[k]))
    return k, delta, it, jt


def rosy_distance(a: TangentFrame, b: TangentFrame) -> float:
    """Angle between the crosses of a and b modulo 90 degrees, in [0, pi/4]."""
    _k, delta = rosy_match(a, b)
    return abs(delta)


def normalize_match(k: int, delta: float):
    """Fold (k, delta) so that delta lies in (-pi/4, pi/4]."""
    while delta > QUARTER / 2:
        delta -= QUARTER
        k += 1
    while delta <= -QUARTER / 2:
        delta += QUARTER
        k -= 1
    return k % 4, delta


def reverse_match(k: int, delta: float):
    """Matching of the reversed edge from the forward matching."""
    return normalize_match(-k, -delta)


def unfold_frame_across_edge(frame_u: TangentFrame, face_u: int, face_v: int,
                             mesh) -> TangentFrame:
    """Rotate a frame from face_u's plane into face_v's across their edge.

    The rotation takes face_u's normal to face_v's normal about the
    shared edge direction; it is the isometric unfolding used for
    geodesic patch parameterization.
    """
    a, b = mesh.shared_edge(face_u, face_v)
    axis = mesh.vertices[b] - mesh.vertices[a]
    axis = axis / np.linalg.norm(axis)
    n_u = mesh.face_normals[face_u]
    n_v = mesh.face_normals[face_v]
    # signed dihedral about the edge axis
    pu = n_u - axis * (axis @ n_u)
    pv = n_v - axis * (axis @ n_v)
    s = float(axis @ np.cross(pu, pv))
    c = float(pu @ pv)
    angle = np.arctan2(s, c)
    R = rotation_about(axis, angle)
    i = R @ frame_u.i
    n = n_v
    i = i - n * (n @ i)
    i = i / np.linalg.norm(i)
    return TangentFrame(i=i, j=np.cross(n, i), n=n)


# -- vectorized helpers (used by the field solver) -----------------------

def cross_rows(a, b):
    """Row-wise cross product of (K, 3) arrays, without np.cross overhead."""
    out = np.empty(np.broadcast_shapes(a.shape, b.shape))
    a0, a1, a2 = a[..., 0], a[..., 1], a[..., 2]
    b0, b1, b2 = b[..., 0], b[..., 1], b[..., 2]
    out[..., 0] = a1 * b2 - a2 * b1
    out[..., 1] = a2 * b0 - a0 * b2
    out[..., 2] = a0 * b1 - a1 * b0
    return out


def transportable_rows(n_from, n_to) -> np.ndarray:
    """Mask of row pairs whose smallest-rotation transport is defined."""
    c = np.einsum("ij,ij->i", n_from, n_to)
    return c > -1.0 + ANTIPARALLEL_EPS


def transport_many(dirs, n_from, n_to):
    """Transport rows of dirs from planes n_from to planes n_to.

    All arguments are (K, 3). Antiparallel rows raise; callers that can
    tolerate them should filter with transportable_rows first.
    """
    dirs = np.asarray(dirs, dtype=np.float64)
    c = np.einsum("ij,ij->i", n_from, n_to)
    if np.any(c <= -1.0 + ANTIPARALLEL_EPS):
        raise ValidationError("antiparallel normals: transport undefined")
    axis = cross_rows(n_from, n_to)
    ad = np.einsum("ij,ij->i", axis, dirs)
    return (c[:, None] * dirs + cross_rows(axis, dirs)
            + (ad / (1.0 + c))[:, None] * axis)


def fold_quarter(theta):
    """Fold angles into [0, pi/4] distance from the nearest quarter turn."""
    return np.abs((theta + QUARTER / 2) % QUARTER - QUARTER / 2)


def rosy_distance_many(i_a, n_a, i_b, n_b):
    """Pairwise rosy distance of rows; all arrays (K, 3). Returns (K,)."""
    bt = transport_many(i_b, n_b, n_a)
    c = np.einsum("ij,ij->i", i_a, bt)
    s = np.einsum("ij,ij->i", n_a, cross_rows(i_a, bt))
    return fold_quarter(np.arctan2(s, c))
