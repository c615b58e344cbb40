"""Minimal reverse-mode autodiff over dense numpy arrays.

Tensors record the operations that produced them; backward() walks the
graph in reverse topological order. float32 is the training dtype;
gradient-check tests run the same ops in float64.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import DataError, ValidationError

CHECKPOINT_MAGIC = b"TXNW1"


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_backward", "_prev")

    def __init__(self, data, requires_grad=False, _prev=()):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._backward = None
        self._prev = _prev

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def _accumulate(self, g):
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self, grad=None):
        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._prev:
                stack.append((p, False))
        self.grad = np.ones_like(self.data) if grad is None \
            else np.asarray(grad, dtype=self.data.dtype)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype})"

    # small operator sugar used by layers
    def __add__(self, other):
        return add(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def _track(*tensors):
    return any(t.requires_grad for t in tensors)


def _unbroadcast(g, shape):
    """Sum g down to the given broadcast source shape."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, s in enumerate(shape):
        if s == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def add(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data + b.data, _track(a, b), (a, b))
    if out.requires_grad:
        def back(g):
            a._accumulate(_unbroadcast(g, a.shape))
            b._accumulate(_unbroadcast(g, b.shape))
        out._backward = back
        out.requires_grad = True
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data @ b.data, _track(a, b), (a, b))
    if out.requires_grad:
        def back(g):
            a._accumulate(g @ b.data.swapaxes(-1, -2))
            b._accumulate(a.data.swapaxes(-1, -2) @ g)
        out._backward = back
    return out


def relu(a: Tensor) -> Tensor:
    out = Tensor(np.maximum(a.data, 0.0), a.requires_grad, (a,))
    if out.requires_grad:
        mask = a.data > 0
        out._backward = lambda g: a._accumulate(g * mask)
    return out


def reshape(a: Tensor, shape) -> Tensor:
    out = Tensor(a.data.reshape(shape), a.requires_grad, (a,))
    if out.requires_grad:
        out._backward = lambda g: a._accumulate(g.reshape(a.shape))
    return out


def mean(a: Tensor) -> Tensor:
    out = Tensor(np.asarray(a.data.mean(), dtype=a.dtype),
                 a.requires_grad, (a,))
    if out.requires_grad:
        out._backward = lambda g: a._accumulate(
            np.full(a.shape, g / a.data.size, dtype=a.dtype))
    return out


def gather_rows(a: Tensor, idx) -> Tensor:
    idx = np.asarray(idx, dtype=np.int64)
    out = Tensor(a.data[idx], a.requires_grad, (a,))
    if out.requires_grad:
        def back(g):
            acc = np.zeros_like(a.data)
            np.add.at(acc, idx, g)
            a._accumulate(acc)
        out._backward = back
    return out


def concat_cols(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(np.concatenate([a.data, b.data], axis=1), _track(a, b),
                 (a, b))
    if out.requires_grad:
        na = a.shape[1]
        def back(g):
            a._accumulate(g[:, :na])
            b._accumulate(g[:, na:])
        out._backward = back
    return out


def weighted_rows(weights, a: Tensor) -> Tensor:
    """Constant (Q, P) weight matrix applied to row features (P, C)."""
    W = np.asarray(weights, dtype=a.dtype)
    out = Tensor(W @ a.data, a.requires_grad, (a,))
    if out.requires_grad:
        out._backward = lambda g: a._accumulate(W.T @ g)
    return out


def softmax_cross_entropy(logits: Tensor, labels) -> tuple[Tensor, np.ndarray]:
    """Mean cross-entropy loss and the softmax probabilities."""
    z = logits.data
    z_shift = z - z.max(axis=1, keepdims=True)
    ez = np.exp(z_shift)
    probs = ez / ez.sum(axis=1, keepdims=True)
    labels = np.asarray(labels, dtype=np.int64)
    B = len(labels)
    nll = -(z_shift[np.arange(B), labels]
            - np.log(ez.sum(axis=1)))
    loss = Tensor(np.asarray(nll.mean(), dtype=z.dtype),
                  logits.requires_grad, (logits,))
    if loss.requires_grad:
        def back(g):
            grad = probs.copy()
            grad[np.arange(B), labels] -= 1.0
            logits._accumulate(grad * (g / B))
        loss._backward = back
    return loss, probs


# -- image-grid operations (B, H, W, C layout) ---------------------------

def _im2col_valid(x, k=3):
    B, H, W, C = x.shape
    OH, OW = H - k + 1, W - k + 1
    s = x.strides
    cols = np.lib.stride_tricks.as_strided(
        x, (B, OH, OW, k, k, C), (s[0], s[1], s[2], s[1], s[2], s[3]))
    return np.ascontiguousarray(cols).reshape(B, OH, OW, k * k * C)


def conv3x3_valid(x: Tensor, W: Tensor, bias: Tensor) -> Tensor:
    """3x3 'valid' convolution; W is (3, 3, C_in, C_out)."""
    B, H, Wd, C = x.shape
    k = 3
    OH, OW = H - k + 1, Wd - k + 1
    cols = _im2col_valid(x.data, k)
    Wm = W.data.reshape(k * k * C, -1)
    out_data = cols.reshape(-1, k * k * C) @ Wm
    Cout = Wm.shape[1]
    out = Tensor(out_data.reshape(B, OH, OW, Cout) + bias.data,
                 _track(x, W, bias), (x, W, bias))
    if out.requires_grad:
        def back(g):
            gf = g.reshape(-1, Cout)
            if W.requires_grad:
                W._accumulate((cols.reshape(-1, k * k * C).T @ gf)
                              .reshape(W.shape))
            if bias.requires_grad:
                bias._accumulate(g.sum(axis=(0, 1, 2)))
            if x.requires_grad:
                gcols = (gf @ Wm.T).reshape(B, OH, OW, k, k, C)
                gx = np.zeros_like(x.data)
                for dy in range(k):
                    for dx in range(k):
                        gx[:, dy:dy + OH, dx:dx + OW, :] += \
                            gcols[:, :, :, dy, dx, :]
                x._accumulate(gx)
        out._backward = back
    return out


# window tap offsets and their corner/edge/center weight assignment
TAP_OFFSETS = [(dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1)]
TAP_CATEGORY = [0 if abs(dy) + abs(dx) == 2 else (2 if dy == dx == 0 else 1)
                for dy, dx in TAP_OFFSETS]


def texture_conv2d(x: Tensor, h1: Tensor, h2: Tensor, h3: Tensor,
                   bias: Tensor, mask=None, frame_rotation: int = 0) \
        -> tuple[Tensor, np.ndarray]:
    """Sliding 3x3 category-weighted max convolution on an image grid.

    Each output pixel takes the channel-wise max over its 9 window taps
    of h_category^T x[tap], then bias and ReLU. Off-image taps (and taps
    masked out by `mask`, (B, H, W) bool) are skipped; windows with no
    valid tap produce 0. frame_rotation rotates the window coordinate
    frame by k*90 degrees, which permutes taps within categories and is
    an exact no-op on the output (exposed for the invariance tests).

    Returns (out, out_mask).
    """
    B, H, W, C = x.shape
    hs = (h1, h2, h3)
    U = [x.data.reshape(-1, C) @ h.data for h in hs]
    Cout = U[0].shape[1]
    U = [u.reshape(B, H, W, Cout) for u in U]
    neg = np.array(-np.inf, dtype=x.dtype)
    best = np.full((B, H, W, Cout), -np.inf, dtype=x.dtype)
    best_tap = np.zeros((B, H, W, Cout), dtype=np.int8)
    for tap, (dy, dx) in enumerate(TAP_OFFSETS):
        rdy, rdx = dy, dx
        for _ in range(frame_rotation % 4):
            rdy, rdx = rdx, -rdy
        cat = TAP_CATEGORY[tap]
        ys = slice(max(0, -rdy), H - max(0, rdy))
        yt = slice(max(0, rdy), H - max(0, -rdy))
        xs = slice(max(0, -rdx), W - max(0, rdx))
        xt = slice(max(0, rdx), W - max(0, -rdx))
        src = U[cat][:, yt, xt, :]
        if mask is not None:
            src = np.where(mask[:, yt, xt, None], src, neg)
        cur = best[:, ys, xs, :]
        upd = src > cur  # strict: the earliest tap wins ties
        best[:, ys, xs, :] = np.where(upd, src, cur)
        best_tap[:, ys, xs, :] = np.where(upd, tap, best_tap[:, ys, xs, :])
    valid = best[..., 0] > -np.inf
    pre = np.where(valid[..., None], best + bias.data, 0.0)
    out_data = np.maximum(pre, 0.0)
    out = Tensor(out_data.astype(x.dtype), _track(x, h1, h2, h3, bias),
                 (x, h1, h2, h3, bias))
    if out.requires_grad:
        relu_mask = (pre > 0) & valid[..., None]

        def back(g):
            g = g * relu_mask
            if bias.requires_grad:
                bias._accumulate(g.sum(axis=(0, 1, 2)))
            gU = [np.zeros((B, H, W, Cout), dtype=x.dtype) for _ in range(3)]
            for tap, (dy, dx) in enumerate(TAP_OFFSETS):
                if frame_rotation % 4:
                    rdy, rdx = dy, dx
                    for _ in range(frame_rotation % 4):
                        rdy, rdx = rdx, -rdy
                else:
                    rdy, rdx = dy, dx
                cat = TAP_CATEGORY[tap]
                sel = (best_tap == tap) & relu_mask
                contrib = np.where(sel, g, 0.0)
                ys = slice(max(0, -rdy), H - max(0, rdy))
                yt = slice(max(0, rdy), H - max(0, -rdy))
                xs = slice(max(0, -rdx), W - max(0, rdx))
                xt = slice(max(0, rdx), W - max(0, -rdx))
                gU[cat][:, yt, xt, :] += contrib[:, ys, xs, :]
            xf = x.data.reshape(-1, C)
            for cat, h in enumerate(hs):
                gu = gU[cat].reshape(-1, Cout)
                if h.requires_grad:
                    h._accumulate(xf.T @ gu)
                if x.requires_grad:
                    x._accumulate((gu @ h.data.T).reshape(x.shape))
        out._backward = back
    return out, valid


def maxpool2x2(x: Tensor, mask=None) -> tuple[Tensor, np.ndarray]:
    """2x2 stride-2 max pool; masked entries are skipped.

    Returns (out, out_mask); fully masked windows produce 0.
    """
    B, H, W, C = x.shape
    OH, OW = H // 2, W // 2
    xv = x.data[:, :OH * 2, :OW * 2, :].reshape(B, OH, 2, OW, 2, C)
    if mask is not None:
        mv = mask[:, :OH * 2, :OW * 2].reshape(B, OH, 2, OW, 2)
        xm = np.where(mv[..., None], xv, -np.inf)
        out_mask = mv.any(axis=(2, 4))
    else:
        xm = xv
        out_mask = np.ones((B, OH, OW), dtype=bool)
    flat = xm.transpose(0, 1, 3, 2, 4, 5).reshape(B, OH, OW, 4, C)
    arg = flat.argmax(axis=3)
    pooled = np.take_along_axis(flat, arg[:, :, :, None, :], axis=3)[:, :, :, 0, :]
    pooled = np.where(out_mask[..., None], pooled, 0.0)
    out = Tensor(pooled.astype(x.dtype), x.requires_grad, (x,))
    if out.requires_grad:
        def back(g):
            g = np.where(out_mask[..., None], g, 0.0)
            gflat = np.zeros((B, OH, OW, 4, C), dtype=x.dtype)
            np.put_along_axis(gflat, arg[:, :, :, None, :],
                              g[:, :, :, None, :], axis=3)
            gx = np.zeros_like(x.data)
            gv = gflat.reshape(B, OH, OW, 2, 2, C).transpose(0, 1, 3, 2, 4, 5)
            gx[:, :OH * 2, :OW * 2, :] = gv.reshape(B, OH * 2, OW * 2, C)
            x._accumulate(gx)
        out._backward = back
    return out, out_mask


def global_maxpool(x: Tensor, mask=None) -> Tensor:
    """Channel-wise max over all valid spatial positions; (B, C) output."""
    B, H, W, C = x.shape
    flat = x.data.reshape(B, H * W, C)
    if mask is not None:
        mflat = mask.reshape(B, H * W)
        masked = np.where(mflat[:, :, None], flat, -np.inf)
    else:
        mflat = np.ones((B, H * W), dtype=bool)
        masked = flat
    any_valid = mflat.any(axis=1)
    arg = masked.argmax(axis=1)
    pooled = np.take_along_axis(flat, arg[:, None, :], axis=1)[:, 0, :]
    pooled = np.where(any_valid[:, None], pooled, 0.0)
    out = Tensor(pooled.astype(x.dtype), x.requires_grad, (x,))
    if out.requires_grad:
        def back(g):
            g = np.where(any_valid[:, None], g, 0.0)
            gflat = np.zeros((B, H * W, C), dtype=x.dtype)
            np.put_along_axis(gflat, arg[:, None, :], g[:, None, :], axis=1)
            x._accumulate(gflat.reshape(x.shape))
        out._backward = back
    return out


# -- point-set texture convolution (UNet encoder layers) -----------------

def texture_conv_points(feats: Tensor, neighborhoods, h1: Tensor,
                        h2: Tensor, h3: Tensor, bias: Tensor,
                        aggregation: str = "max") -> Tensor:
    """Category-weighted neighborhood pooling over point sets.

    neighborhoods is (idx, valid, cats): idx (P_out, M) member row
    indices into feats, valid (P_out, M) bool, cats (P_out, M) in
    {0 corner, 1 edge, 2 center}. Empty neighborhoods produce zeros.
    """
    idx, valid, cats = neighborhoods
    P_out, M = idx.shape
    C = feats.shape[1]
    hs = (h1, h2, h3)
    G = np.stack([feats.data @ h.data for h in hs])    # (3, P_in, Cout)
    Cout = G.shape[2]
    contrib = G[cats.reshape(-1), idx.reshape(-1), :].reshape(P_out, M, Cout)
    any_valid = valid.any(axis=1)
    if aggregation == "max":
        masked = np.where(valid[:, :, None], contrib, -np.inf)
        arg = masked.argmax(axis=1)                     # (P_out, Cout)
        pooled = np.take_along_axis(contrib, arg[:, None, :], axis=1)[:, 0, :]
    elif aggregation == "avg":
        arg = None
        counts = np.maximum(valid.sum(axis=1), 1)
        pooled = np.where(valid[:, :, None], contrib, 0.0).sum(axis=1) \
            / counts[:, None]
    else:
        raise ValidationError("aggregation must be 'max' or 'avg'")
    pre = np.where(any_valid[:, None], pooled + bias.data, 0.0)
    out_data = np.maximum(pre, 0.0)
    out = Tensor(out_data.astype(feats.dtype),
                 _track(feats, h1, h2, h3, bias), (feats, h1, h2, h3, bias))
    if out.requires_grad:
        relu_mask = (pre > 0) & any_valid[:, None]

        def back(g):
            g = g * relu_mask
            if bias.requires_grad:
                bias._accumulate(g.sum(axis=0))
            gcontrib = np.zeros((P_out, M, Cout), dtype=feats.dtype)
            if aggregation == "max":
                np.put_along_axis(gcontrib, arg[:, None, :],
                                  g[:, None, :], axis=1)
                gcontrib = np.where(valid[:, :, None], gcontrib, 0.0)
            else:
                counts = np.maximum(valid.sum(axis=1), 1).astype(feats.dtype)
                gcontrib = np.where(valid[:, :, None],
                                    (g / counts[:, None])[:, None, :], 0.0)
            gG = np.zeros_like(G)
            np.add.at(gG, (cats.reshape(-1), idx.reshape(-1)),
                      gcontrib.reshape(-1, Cout))
            xf = feats.data
            for cat, h in enumerate(hs):
                if h.requires_grad:
                    h._accumulate(xf.T @ gG[cat])
                if feats.requires_grad:
                    feats._accumulate(gG[cat] @ h.data.T)
        out._backward = back
    return out


# -- parameters, checkpoints, optimizers ----------------------------------

class ParamStore:
    """Named trainable tensors with checkpoint IO."""

    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self.params: dict[str, Tensor] = {}

    def add(self, name, array) -> Tensor:
        if name in self.params:
            raise ValidationError(f"duplicate parameter {name}")
        t = Tensor(np.asarray(array, dtype=self.dtype), requires_grad=True)
        self.params[name] = t
        return t

    def __getitem__(self, name) -> Tensor:
        return self.params[name]

    def zero_grad(self):
        for t in self.params.values():
            t.grad = None

    def n_parameters(self) -> int:
        return sum(t.data.size for t in self.params.values())

    def save(self, path):
        with open(path, "wb") as f:
            f.write(CHECKPOINT_MAGIC)
            f.write(struct.pack("<I", len(self.params)))
            for name in sorted(self.params):
                data = self.params[name].data.astype(np.float32)
                nb = name.encode("utf-8")
                f.write(struct.pack("<H", len(nb)))
                f.write(nb)
                f.write(struct.pack("<B", data.ndim))
                f.write(struct.pack(f"<{data.ndim}Q", *data.shape))
                f.write(data.astype("<f4").tobytes())

    def load(self, path):
        with open(path, "rb") as f:
            magic = f.read(5)
            if magic != CHECKPOINT_MAGIC:
                raise DataError(f"bad checkpoint magic in {path}")
            (count,) = struct.unpack("<I", f.read(4))
            for _ in range(count):
                (nlen,) = struct.unpack("<H", f.read(2))
                name = f.read(nlen).decode("utf-8")
                (ndim,) = struct.unpack("<B", f.read(1))
                shape = struct.unpack(f"<{ndim}Q", f.read(8 * ndim))
                n = int(np.prod(shape)) if ndim else 1
                data = np.frombuffer(f.read(4 * n), dtype="<f4").reshape(shape)
                if name not in self.params:
                    self.params[name] = Tensor(
                        data.astype(self.dtype), requires_grad=True)
                else:
                    if self.params[name].shape != tuple(shape):
                        raise DataError(f"shape mismatch for {name}")
                    self.params[name].data = data.astype(self.dtype)


class SGD:
    def __init__(self, store: ParamStore, lr=1e-2, momentum=0.0):
        self.store = store
        self.lr = lr
        self.momentum = momentum
        self._vel = {k: np.zeros_like(t.data)
                     for k, t in store.params.items()}

    def step(self):
        for k, t in self.store.params.items():
            if t.grad is None:
                continue
            v = self._vel[k]
            v *= self.momentum
            v -= self.lr * t.grad
            t.data = t.data + v


class Adam:
    def __init__(self, store: ParamStore, lr=1e-3, beta1=0.9, beta2=0.999,
                 eps=1e-8):
        self.store = store
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self._m = {k: np.zeros_like(p.data) for k, p in store.params.items()}
        self._v = {k: np.zeros_like(p.data) for k, p in store.params.items()}

    def step(self):
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for k, p in self.store.params.items():
            if p.grad is None:
                continue
            m, v = self._m[k], self._v[k]
            m *= self.beta1
            m += (1 - self.beta1) * p.grad
            v *= self.beta2
            v += (1 - self.beta2) * (p.grad * p.grad)
            p.data = p.data - self.lr * (m / b1t) / (np.sqrt(v / b2t)
                                                     + self.eps)
