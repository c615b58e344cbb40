import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from meshtex.errors import ValidationError
from meshtex.frames import (TangentFrame, rosy_align, rosy_distance,
                            unfold_frame_across_edge)
from meshtex.mesh import TriMesh


def frame_in_xy(angle):
    i = np.array([np.cos(angle), np.sin(angle), 0.0])
    return TangentFrame.from_in(i, np.array([0.0, 0.0, 1.0]))


def test_rosy_align_identical():
    f = frame_in_xy(0.3)
    aligned, k = rosy_align(f, f)
    assert k == 0
    assert np.allclose(aligned.i, f.i)


def test_rosy_align_quarter_turn():
    ref = frame_in_xy(0.0)
    cand = ref.rotated_quarter(1)
    aligned, k = rosy_align(ref, cand)
    assert np.isclose(aligned.i @ ref.i, 1.0, atol=1e-9)
    # k restores alignment: rotating the candidate by k quarters hits i_ref
    assert np.allclose(cand.rotated_quarter(k).i, ref.i, atol=1e-9)


def test_rosy_align_45_degrees():
    ref = frame_in_xy(0.0)
    cand = frame_in_xy(np.pi / 4)
    aligned, _k = rosy_align(ref, cand)
    assert np.isclose(abs(aligned.i @ ref.i), np.cos(np.pi / 4), atol=1e-9)


def test_rosy_distance_values():
    a = frame_in_xy(0.0)
    assert rosy_distance(a, a) == 0.0
    assert np.isclose(rosy_distance(a, frame_in_xy(np.pi / 2)), 0.0,
                      atol=1e-12)
    assert np.isclose(rosy_distance(a, frame_in_xy(np.pi / 6)), np.pi / 6,
                      atol=1e-12)


def test_antiparallel_normals_error():
    a = TangentFrame.from_in(np.array([1.0, 0, 0]), np.array([0.0, 0, 1]))
    b = TangentFrame.from_in(np.array([1.0, 0, 0]), np.array([0.0, 0, -1]))
    with pytest.raises(ValidationError):
        rosy_distance(a, b)


@settings(max_examples=200, deadline=None)
@given(st.floats(-np.pi, np.pi), st.floats(-np.pi, np.pi))
def test_rosy_distance_pseudometric(angle_a, angle_b):
    a, b = frame_in_xy(angle_a), frame_in_xy(angle_b)
    dab = rosy_distance(a, b)
    assert 0.0 <= dab <= np.pi / 4 + 1e-12
    assert np.isclose(dab, rosy_distance(b, a), atol=1e-9)
    # zero iff equal mod 90 degrees
    gap = (angle_a - angle_b) % (np.pi / 2)
    gap = min(gap, np.pi / 2 - gap)
    assert np.isclose(dab, gap, atol=1e-9)


@settings(max_examples=100, deadline=None)
@given(st.floats(-np.pi, np.pi), st.floats(-np.pi, np.pi),
       st.floats(-np.pi, np.pi))
def test_rosy_distance_triangle_inequality_coplanar(a, b, c):
    fa, fb, fc = frame_in_xy(a), frame_in_xy(b), frame_in_xy(c)
    assert rosy_distance(fa, fc) <= rosy_distance(fa, fb) \
        + rosy_distance(fb, fc) + 1e-9


def _two_face_mesh(dihedral):
    """Faces sharing edge (0,1) along x, second bent by `dihedral`."""
    c, s = np.cos(dihedral), np.sin(dihedral)
    verts = np.array([
        (0.0, 0.0, 0.0), (1.0, 0.0, 0.0),
        (0.5, 1.0, 0.0),               # face A in the z=0 plane
        (0.5, -c, s),                  # face B bent about the x axis
    ])
    return TriMesh(verts, np.array([(0, 1, 2), (1, 0, 3)]),
                   fix_winding=False)


def test_unfold_coplanar_identity():
    mesh = _two_face_mesh(0.0)
    frame = TangentFrame.from_in(np.array([0.3, 0.7, 0.0]),
                                 mesh.face_normals[0])
    out = unfold_frame_across_edge(frame, 0, 1, mesh)
    assert np.allclose(out.i, frame.i, atol=1e-9)
    assert np.allclose(out.j, frame.j, atol=1e-9)


def test_unfold_right_angle_edge_aligned():
    mesh = _two_face_mesh(np.pi / 2)
    frame = TangentFrame.from_in(np.array([1.0, 0.0, 0.0]),
                                 mesh.face_normals[0])
    out = unfold_frame_across_edge(frame, 0, 1, mesh)
    assert np.allclose(out.i, frame.i, atol=1e-9)  # i parallel to the edge
    assert np.isclose(abs(out.j @ frame.j), abs(np.cos(np.pi / 2)),
                      atol=1e-9)
    assert np.allclose(np.cross(out.n, out.i), out.j, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.floats(-2.8, 2.8), st.floats(0.0, 2 * np.pi))
def test_unfold_matches_rotation_oracle(dihedral, tangent_angle):
    from scipy.spatial.transform import Rotation

    mesh = _two_face_mesh(dihedral)
    i = np.array([np.cos(tangent_angle), np.sin(tangent_angle), 0.0])
    frame = TangentFrame.from_in(i, mesh.face_normals[0])
    out = unfold_frame_across_edge(frame, 0, 1, mesh)
    # oracle: scipy's minimal rotation taking n0 to n1 (equal to the
    # about-edge rotation since both normals are perpendicular to it)
    n0, n1 = mesh.face_normals[0], mesh.face_normals[1]
    R, _ = Rotation.align_vectors(n1[None, :], n0[None, :])
    assert np.allclose(out.i, R.apply(frame.i), atol=1e-7)
    assert np.allclose(out.j, R.apply(frame.j), atol=1e-7)
    out.validate(tol=1e-9)


def test_unfold_isometry_and_roundtrip(rng):
    for _ in range(20):
        dihedral = rng.uniform(-2.5, 2.5)
        mesh = _two_face_mesh(dihedral)
        i = rng.standard_normal(3)
        i[2] = 0.0
        frame = TangentFrame.from_in(i, mesh.face_normals[0])
        out = unfold_frame_across_edge(frame, 0, 1, mesh)
        # isometry: any tangent combo keeps its length
        a, b = rng.standard_normal(2)
        v_in = a * frame.i + b * frame.j
        v_out = a * out.i + b * out.j
        assert np.isclose(np.linalg.norm(v_in), np.linalg.norm(v_out),
                          atol=1e-9)
        # roundtrip is the identity
        back = unfold_frame_across_edge(out, 1, 0, mesh)
        assert np.allclose(back.i, frame.i, atol=1e-9)


def test_unfold_requires_adjacency(icosphere_mesh):
    mesh = icosphere_mesh
    f = 0
    non_neighbor = next(g for g in range(len(mesh.faces))
                        if g not in mesh.face_neighbors[f] and g != f)
    frame = TangentFrame.from_in(
        mesh.vertices[mesh.faces[f][1]] - mesh.vertices[mesh.faces[f][0]],
        mesh.face_normals[f])
    with pytest.raises(ValidationError, match="not adjacent"):
        unfold_frame_across_edge(frame, f, non_neighbor, mesh)
