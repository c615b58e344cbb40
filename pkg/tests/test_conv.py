import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _oracles import finite_difference_grad, texture_conv_reference
from meshtex.conv import (CELL_CATEGORY, CENTER, CORNER, EDGE,
                          TextureConvWeights, group_texture_cells,
                          pool_cell_grid, rosy1_conv_forward,
                          rosy4m_conv_backward, rosy4m_conv_forward,
                          texture_conv_backward, texture_conv_forward)
from meshtex.errors import ValidationError


def rot90_coords(coords, k=1):
    out = np.asarray(coords, dtype=np.float64).copy()
    for _ in range(k % 4):
        out = np.column_stack([-out[:, 1], out[:, 0]])
    return out


def test_cell_map_categories():
    rho = 0.5
    assert group_texture_cells((0.0, 0.0), rho) == ((1, 1), CENTER)
    assert group_texture_cells((0.45, 0.45), rho) == ((2, 2), CORNER)
    assert group_texture_cells((0.0, 0.45), rho)[1] == EDGE
    assert group_texture_cells((0.45, 0.0), rho)[1] == EDGE
    with pytest.raises(ValidationError):
        group_texture_cells((0.51, 0.0), rho)


def test_cell_map_rotation_closed():
    for k in range(4):
        assert np.array_equal(np.rot90(CELL_CATEGORY, k), CELL_CATEGORY)


def test_category_preserved_under_rotation_exhaustive():
    rho = 1.0
    step = 1e-3 * rho
    axis = np.arange(-rho + step / 2, rho, step)
    gx, gy = np.meshgrid(axis[:500], axis[:500])  # quarter; rotation covers rest
    coords = np.column_stack([gx.ravel(), gy.ravel()])
    from meshtex.conv import _categories
    base = _categories(coords, rho)
    rot = _categories(rot90_coords(coords), rho)
    assert np.array_equal(base, rot)


def test_boundary_points_go_to_lower_cell():
    rho = 0.3
    edge_coord = -rho + 2 * rho / 3  # exact boundary between cells 0 and 1
    (row, col), _cat = group_texture_cells((edge_coord, 0.0), rho)
    assert col == 0
    (row, col), _cat = group_texture_cells((0.0, edge_coord), rho)
    assert row == 0


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 16), st.integers(1, 8),
       st.sampled_from(["max", "avg"]))
def test_forward_matches_reference_and_invariance(seed, c_in, c_out, agg):
    rng = np.random.default_rng(seed)
    rho = float(rng.uniform(0.05, 2.0))
    P = int(rng.integers(5, 51))
    coords = rng.uniform(-rho * 0.999, rho * 0.999, (P, 2))
    feats = rng.standard_normal((P, c_in))
    w = TextureConvWeights.random(c_in, c_out, rng, aggregation=agg)
    w.bias[:] = rng.standard_normal(c_out) * 0.1
    out = texture_conv_forward((coords, feats), rho, w)
    ref = texture_conv_reference(coords, feats, rho, w.h1, w.h2, w.h3,
                                 w.bias, agg)
    assert np.allclose(out, ref, atol=1e-10)
    for k in (1, 2, 3):
        rotated = texture_conv_forward((rot90_coords(coords, k), feats),
                                       rho, w)
        if agg == "max":
            assert np.array_equal(out, rotated)
        else:
            assert np.allclose(out, rotated, rtol=1e-6, atol=1e-12)


def test_empty_patch_zero():
    rng = np.random.default_rng(0)
    w = TextureConvWeights.random(3, 5, rng)
    out = texture_conv_forward([], 0.5, w)
    assert np.array_equal(out, np.zeros(5))


def test_single_center_point_identity():
    w = TextureConvWeights(h1=np.zeros((3, 3)), h2=np.zeros((3, 3)),
                           h3=np.eye(3), bias=np.zeros(3),
                           aggregation="max")
    feat = np.array([0.5, -1.0, 2.0])
    out = texture_conv_forward([(np.zeros(2), feat)], 0.4, w)
    assert np.allclose(out, np.maximum(feat, 0.0))


def test_bias_applied_after_aggregation():
    w = TextureConvWeights(h1=np.zeros((1, 1)), h2=np.zeros((1, 1)),
                           h3=np.array([[1.0]]), bias=np.array([-0.6]),
                           aggregation="max")
    out = texture_conv_forward([(np.zeros(2), np.array([0.5]))], 0.4, w)
    assert out[0] == 0.0  # relu(0.5 - 0.6); bias after pooling
    w.bias[:] = 0.6
    out = texture_conv_forward([(np.zeros(2), np.array([0.5]))], 0.4, w)
    assert np.isclose(out[0], 1.1)


def test_backward_zero_grad():
    rng = np.random.default_rng(0)
    w = TextureConvWeights.random(2, 3, rng)
    coords = rng.uniform(-0.2, 0.2, (6, 2))
    feats = rng.standard_normal((6, 2))
    _out, state = texture_conv_forward((coords, feats), 0.3, w,
                                       return_state=True)
    gf, g1, g2, g3, gb = texture_conv_backward(state, np.zeros(3))
    for g in (gf, g1, g2, g3, gb):
        assert np.all(g == 0.0)


@pytest.mark.parametrize("agg", ["max", "avg"])
def test_backward_finite_difference(agg, rng):
    rho = 0.3
    P, c_in, c_out = 14, 4, 5
    coords = rng.uniform(-rho * 0.99, rho * 0.99, (P, 2))
    feats = rng.standard_normal((P, c_in))
    w = TextureConvWeights.random(c_in, c_out, rng, aggregation=agg)
    w.bias[:] = 0.3 * rng.standard_normal(c_out)
    g_out = rng.standard_normal(c_out)
    _out, state = texture_conv_forward((coords, feats), rho, w,
                                       return_state=True)
    gf, g1, g2, g3, gb = texture_conv_backward(state, g_out)

    def loss_with(feats_=None, h1=None, h2=None, h3=None, bias=None):
        w2 = TextureConvWeights(
            h1 if h1 is not None else w.h1,
            h2 if h2 is not None else w.h2,
            h3 if h3 is not None else w.h3,
            bias if bias is not None else w.bias, agg)
        f = feats_ if feats_ is not None else feats
        return float(texture_conv_forward((coords, f), rho, w2) @ g_out)

    checks = [
        (gf, lambda x: loss_with(feats_=x), feats),
        (g1, lambda x: loss_with(h1=x), w.h1),
        (g2, lambda x: loss_with(h2=x), w.h2),
        (g3, lambda x: loss_with(h3=x), w.h3),
        (gb, lambda x: loss_with(bias=x), w.bias),
    ]
    for got, fn, x in checks:
        fd = finite_difference_grad(fn, x.copy())
        scale = max(np.abs(fd).max(), 1e-9)
        assert np.abs(fd - got).max() / scale < 1e-4


def test_max_tie_routes_to_lowest_index():
    w = TextureConvWeights(h1=np.zeros((1, 1)), h2=np.zeros((1, 1)),
                           h3=np.array([[1.0]]), bias=np.zeros(1),
                           aggregation="max")
    # two identical center points: gradient goes to the first
    pts = [(np.zeros(2), np.array([1.0])), (np.zeros(2), np.array([1.0]))]
    _out, state = texture_conv_forward(pts, 0.4, w, return_state=True)
    gf, *_rest = texture_conv_backward(state, np.ones(1))
    assert gf[0, 0] == 1.0 and gf[1, 0] == 0.0


def test_rosy4m_invariance_and_symmetric_grid(rng):
    grid = rng.standard_normal((3, 3, 4))
    W = rng.standard_normal((3, 3, 4, 6)) * 0.4
    out = rosy4m_conv_forward(grid, W)
    for r in (1, 2, 3):
        rotated = np.rot90(grid, k=r, axes=(0, 1))
        assert np.array_equal(out, rosy4m_conv_forward(rotated, W))
    flat = np.tile(rng.standard_normal(4), (3, 3, 1))
    plain = rosy1_conv_forward(flat, W)
    assert np.allclose(rosy4m_conv_forward(flat, W), plain, atol=1e-12)


def test_rosy4m_matches_enumeration(rng):
    grid = rng.standard_normal((3, 3, 3))
    W = rng.standard_normal((3, 3, 3, 5)) * 0.3
    responses = []
    for r in range(4):
        rot = np.rot90(grid, k=r, axes=(0, 1))
        acc = np.zeros(5)
        for row in range(3):
            for col in range(3):
                acc += rot[row, col] @ W[row, col]
        responses.append(acc)
    want = np.maximum(np.max(responses, axis=0), 0.0)
    assert np.allclose(rosy4m_conv_forward(grid, W), want, atol=1e-6)


def test_rosy4m_gradients(rng):
    grid = rng.standard_normal((3, 3, 4))
    W = rng.standard_normal((3, 3, 4, 6)) * 0.3
    g_out = rng.standard_normal(6)
    _out, state = rosy4m_conv_forward(grid, W, return_state=True)
    gg, gW = rosy4m_conv_backward(state, g_out)
    fd_g = finite_difference_grad(
        lambda G: float(rosy4m_conv_forward(G, W) @ g_out), grid.copy())
    fd_W = finite_difference_grad(
        lambda X: float(rosy4m_conv_forward(grid, X) @ g_out), W.copy())
    assert np.abs(fd_g - gg).max() / np.abs(fd_g).max() < 1e-4
    assert np.abs(fd_W - gW).max() / np.abs(fd_W).max() < 1e-4


def test_rosy1_basics(rng):
    W = np.zeros((3, 3, 2, 2))
    W[1, 1] = np.eye(2)  # center tap identity
    grid = rng.standard_normal((3, 3, 2))
    out = rosy1_conv_forward(grid, W)
    assert np.allclose(out, np.maximum(grid[1, 1], 0.0))
    ones = np.ones((3, 3, 1))
    Wo = np.ones((3, 3, 1, 1))
    assert np.isclose(rosy1_conv_forward(ones, Wo)[0], 9.0)
    grid = rng.standard_normal((3, 3, 2))
    W = rng.standard_normal((3, 3, 2, 3))
    assert not np.allclose(rosy1_conv_forward(grid, W),
                           rosy1_conv_forward(np.rot90(grid, 1, (0, 1)), W))


def test_pool_cell_grid(rng):
    rho = 0.3
    coords = np.array([(0.0, 0.0), (0.01, 0.01), (0.25, 0.25)])
    feats = np.array([[1.0], [3.0], [10.0]])
    grid = pool_cell_grid((coords, feats), rho, 1)
    assert np.isclose(grid[1, 1, 0], 2.0)   # mean of the two center points
    assert np.isclose(grid[2, 2, 0], 10.0)
    assert grid[0, 0, 0] == 0.0
