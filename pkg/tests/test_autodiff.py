import numpy as np
import pytest

import meshtex.autodiff as ad
from _oracles import finite_difference_grad
from meshtex.errors import DataError


def relative_fd_check(build_loss, params, tol=1e-4):
    tensors = {k: ad.Tensor(v.copy(), requires_grad=True)
               for k, v in params.items()}
    build_loss(tensors).backward()
    for key, value in params.items():
        def f(x, key=key):
            frozen = {k: ad.Tensor(v.copy() if k != key else x)
                      for k, v in params.items()}
            return float(build_loss(frozen).data)
        fd = finite_difference_grad(f, value.copy())
        scale = max(np.abs(fd).max(), 1e-8)
        assert np.abs(fd - tensors[key].grad).max() / scale < tol, key


def test_basic_op_gradients(rng):
    params = {
        "a": rng.standard_normal((4, 3)),
        "b": rng.standard_normal((3, 5)),
        "c": rng.standard_normal(5),
    }

    def loss(t):
        y = ad.relu(ad.add(ad.matmul(t["a"], t["b"]), t["c"]))
        return ad.mean(y)

    relative_fd_check(loss, params)


def test_gather_concat_weighted(rng):
    W = rng.random((5, 7))
    idx = rng.integers(0, 7, 9)
    params = {"f": rng.standard_normal((7, 4))}

    def loss(t):
        g = ad.gather_rows(t["f"], idx)
        w = ad.weighted_rows(W, t["f"])
        both = ad.concat_cols(ad.weighted_rows(np.eye(5, 9), g), w)
        return ad.mean(both)

    relative_fd_check(loss, params)


def test_conv_and_pool_gradients(rng):
    params = {
        "x": rng.standard_normal((2, 8, 8, 3)),
        "W": rng.standard_normal((3, 3, 3, 4)) * 0.3,
        "b": rng.standard_normal(4) * 0.1,
    }

    def loss(t):
        y = ad.relu(ad.conv3x3_valid(t["x"], t["W"], t["b"]))
        y, m = ad.maxpool2x2(y)
        return ad.mean(ad.global_maxpool(y, m))

    relative_fd_check(loss, params)


def test_texture_conv2d_gradients_and_rotation(rng):
    mask = rng.random((2, 6, 6)) > 0.25
    params = {
        "x": rng.standard_normal((2, 6, 6, 3)),
        "h1": rng.standard_normal((3, 4)) * 0.4,
        "h2": rng.standard_normal((3, 4)) * 0.4,
        "h3": rng.standard_normal((3, 4)) * 0.4,
        "b": rng.standard_normal(4) * 0.05,
    }

    def loss(t):
        y, m = ad.texture_conv2d(t["x"], t["h1"], t["h2"], t["h3"], t["b"],
                                 mask=mask)
        return ad.mean(ad.global_maxpool(y, m))

    relative_fd_check(loss, params)
    tensors = {k: ad.Tensor(v) for k, v in params.items()}
    outs = [ad.texture_conv2d(tensors["x"], tensors["h1"], tensors["h2"],
                              tensors["h3"], tensors["b"], mask=mask,
                              frame_rotation=k)[0].data for k in range(4)]
    for k in (1, 2, 3):
        assert np.array_equal(outs[0], outs[k])


def test_texture_conv_points_gradients(rng):
    P_in, P_out, M = 9, 5, 6
    idx = rng.integers(0, P_in, (P_out, M))
    valid = rng.random((P_out, M)) > 0.3
    valid[3] = False
    cats = rng.integers(0, 3, (P_out, M))
    params = {
        "F": rng.standard_normal((P_in, 3)),
        "h1": rng.standard_normal((3, 4)) * 0.4,
        "h2": rng.standard_normal((3, 4)) * 0.4,
        "h3": rng.standard_normal((3, 4)) * 0.4,
        "b": rng.standard_normal(4) * 0.05,
    }
    for agg in ("max", "avg"):
        def loss(t, agg=agg):
            y = ad.texture_conv_points(t["F"], (idx, valid, cats), t["h1"],
                                       t["h2"], t["h3"], t["b"], agg)
            return ad.mean(y)
        relative_fd_check(loss, params)


def test_cross_entropy_gradient(rng):
    labels = rng.integers(0, 5, 8)
    params = {"z": rng.standard_normal((8, 5))}

    def loss(t):
        l, _ = ad.softmax_cross_entropy(t["z"], labels)
        return l

    relative_fd_check(loss, params, tol=1e-6)


def test_dtype_preserved():
    x32 = ad.Tensor(np.ones((2, 2), dtype=np.float32), requires_grad=True)
    y = ad.relu(x32)
    assert y.dtype == np.float32
    x64 = ad.Tensor(np.ones((2, 2), dtype=np.float64))
    assert ad.relu(x64).dtype == np.float64


def test_checkpoint_roundtrip(tmp_path, rng):
    store = ad.ParamStore(dtype=np.float32)
    store.add("layer/w", rng.standard_normal((4, 6)))
    store.add("layer/b", rng.standard_normal(6))
    path = tmp_path / "weights.bin"
    store.save(path)
    assert path.read_bytes()[:5] == b"TXNW1"
    other = ad.ParamStore(dtype=np.float32)
    other.load(path)
    for name in store.params:
        assert np.array_equal(store.params[name].data,
                              other.params[name].data)


def test_checkpoint_bad_magic(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"NOPE!" + b"\x00" * 16)
    with pytest.raises(DataError, match="magic"):
        ad.ParamStore().load(path)


def test_sgd_and_adam_zero_lr(rng):
    for opt_cls in (ad.SGD, ad.Adam):
        store = ad.ParamStore(dtype=np.float64)
        w = store.add("w", rng.standard_normal((3, 3)))
        before = w.data.copy()
        opt = opt_cls(store, lr=0.0)
        w.grad = np.ones_like(w.data)
        opt.step()
        assert np.array_equal(w.data, before)


def test_adam_descends(rng):
    store = ad.ParamStore(dtype=np.float64)
    w = store.add("w", np.array([3.0, -2.0]))
    opt = ad.Adam(store, lr=0.1)
    for _ in range(300):
        store.zero_grad()
        t = store["w"]
        loss = ad.mean(ad.matmul(ad.reshape(t, (1, 2)),
                                 ad.reshape(t, (2, 1))))
        loss.backward()
        opt.step()
    assert np.abs(w.data).max() < 1e-2
