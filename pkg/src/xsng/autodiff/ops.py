"""Differentiable operations.

Each op computes eagerly with numpy and registers a backward closure on
the active tape.  Broadcasting is deliberately restricted: elementwise
ops require identical shapes, and the only mixed-shape forms are
scalar*tensor and the row-vector (per-channel) add/mul used for biases
and conditional scaling.  Everything else is an explicit ShapeError.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError, ContractError, ShapeError
from .tensor import Tensor, as_tensor, track


def _same_shape(a: Tensor, b: Tensor, op: str):
    if a.shape != b.shape:
        raise ShapeError(f"{op}: operand shapes {a.shape} and {b.shape} differ")


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _same_shape(a, b, "add")
    return track("add", a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _same_shape(a, b, "sub")
    return track("sub", a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _same_shape(a, b, "mul")
    ad, bd = a.data, b.data
    return track("mul", ad * bd, (a, b), lambda g: (g * bd, g * ad))


def scale(a: Tensor, c: float) -> Tensor:
    a = as_tensor(a)
    c = float(c)
    return track("scale", a.data * c, (a,), lambda g: (g * c,))


def add_scalar(a: Tensor, c: float) -> Tensor:
    a = as_tensor(a)
    return track("add_scalar", a.data + float(c), (a,), lambda g: (g,))


def neg(a: Tensor) -> Tensor:
    return scale(a, -1.0)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects rank-2 operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions differ, {a.shape} x {b.shape}")
    ad, bd = a.data, b.data
    return track("matmul", ad @ bd, (a, b), lambda g: (g @ bd.T, ad.T @ g))


def transpose(a: Tensor) -> Tensor:
    a = as_tensor(a)
    if a.ndim != 2:
        raise ShapeError(f"transpose expects rank 2, got {a.shape}")
    return track("transpose", np.ascontiguousarray(a.data.T), (a,),
                 lambda g: (np.ascontiguousarray(g.T),))


def relu(a: Tensor) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0.0
    return track("relu", np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def leaky_relu(a: Tensor, alpha: float = 0.2) -> Tensor:
    a = as_tensor(a)
    slope = np.where(a.data > 0.0, 1.0, float(alpha))
    return track("leaky_relu", a.data * slope, (a,), lambda g: (g * slope,))


def log(a: Tensor) -> Tensor:
    a = as_tensor(a)
    if np.any(a.data <= 0.0):
        raise ContractError("log requires strictly positive inputs")
    ad = a.data
    return track("log", np.log(ad), (a,), lambda g: (g / ad,))


def clamp_min(a: Tensor, floor: float) -> Tensor:
    a = as_tensor(a)
    mask = a.data > floor
    return track("clamp_min", np.where(mask, a.data, floor), (a,),
                 lambda g: (g * mask,))


def square(a: Tensor) -> Tensor:
    a = as_tensor(a)
    ad = a.data
    return track("square", ad * ad, (a,), lambda g: (2.0 * ad * g,))


def absolute(a: Tensor) -> Tensor:
    a = as_tensor(a)
    sign = np.sign(a.data)
    return track("absolute", np.abs(a.data), (a,), lambda g: (g * sign,))


def sum_all(a: Tensor) -> Tensor:
    a = as_tensor(a)
    shape = a.shape
    return track("sum_all", np.asarray(a.data.sum()), (a,),
                 lambda g: (np.full(shape, g, dtype=np.float64),))


def mean_all(a: Tensor) -> Tensor:
    a = as_tensor(a)
    shape, n = a.shape, a.size
    return track("mean_all", np.asarray(a.data.mean()), (a,),
                 lambda g: (np.full(shape, g / n, dtype=np.float64),))


def mean_rows(a: Tensor) -> Tensor:
    """Mean over axis 0: (T, d) -> (d,).  Used for pooling over time."""
    a = as_tensor(a)
    if a.ndim != 2:
        raise ShapeError(f"mean_rows expects rank 2, got {a.shape}")
    t = a.shape[0]
    return track("mean_rows", a.data.mean(axis=0), (a,),
                 lambda g: (np.broadcast_to(g / t, (t, g.shape[0])).copy(),))


def mul_rowvec(x: Tensor, r: Tensor) -> Tensor:
    """Scale every row of x (T, d) by the vector r (d,)."""
    x, r = as_tensor(x), as_tensor(r)
    if x.ndim != 2 or r.ndim != 1 or x.shape[1] != r.shape[0]:
        raise ShapeError(f"mul_rowvec: got {x.shape} and {r.shape}")
    xd, rd = x.data, r.data
    return track("mul_rowvec", xd * rd, (x, r),
                 lambda g: (g * rd, (g * xd).sum(axis=0)))


def add_rowvec(x: Tensor, r: Tensor) -> Tensor:
    """Add the vector r (d,) to every row of x (T, d).  Per-channel bias."""
    x, r = as_tensor(x), as_tensor(r)
    if x.ndim != 2 or r.ndim != 1 or x.shape[1] != r.shape[0]:
        raise ShapeError(f"add_rowvec: got {x.shape} and {r.shape}")
    return track("add_rowvec", x.data + r.data, (x, r),
                 lambda g: (g, g.sum(axis=0)))


def softmax(a: Tensor) -> Tensor:
    """Softmax over the last axis, max-subtracted for stability."""
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)

    def bwd(g):
        inner = (g * y).sum(axis=-1, keepdims=True)
        return (y * (g - inner),)

    return track("softmax", y, (a,), bwd)


def layer_norm(a: Tensor, epsilon: float = 1e-5):
    """Normalize the last axis to zero mean, unit variance.

    Returns (y, mu, sigma); mu and sigma are plain arrays, exposed so
    conditional normalization and tests can reuse the statistics.
    Population variance; epsilon sits inside the square root.
    """
    a = as_tensor(a)
    if a.ndim < 1:
        raise ShapeError("layer_norm needs at least one axis")
    d = a.shape[-1]
    mu = a.data.mean(axis=-1, keepdims=True)
    var = ((a.data - mu) ** 2).mean(axis=-1, keepdims=True)
    sigma = np.sqrt(var + float(epsilon))
    xhat = (a.data - mu) / sigma

    def bwd(g):
        gm = g.mean(axis=-1, keepdims=True)
        gx = (g * xhat).mean(axis=-1, keepdims=True)
        return ((g - gm - xhat * gx) / sigma,)

    y = track("layer_norm", xhat, (a,), bwd)
    return y, mu.reshape(a.shape[:-1]), sigma.reshape(a.shape[:-1])


def conv1d(x: Tensor, kernels: Tensor, padding: str = "same") -> Tensor:
    """1-d cross-correlation over time.

    x: (C_in, T), kernels: (C_out, C_in, K).  "same" keeps T and needs
    odd K; "valid" yields T - K + 1 and needs T >= K.
    """
    x, kernels = as_tensor(x), as_tensor(kernels)
    if x.ndim != 2 or kernels.ndim != 3:
        raise ShapeError(f"conv1d: got x {x.shape}, kernels {kernels.shape}")
    c_in, t = x.shape
    c_out, kc, k = kernels.shape
    if kc != c_in:
        raise ShapeError(f"conv1d: x has {c_in} channels, kernels expect {kc}")
    if padding == "same":
        if k % 2 == 0:
            raise ConfigError(f"conv1d: same padding requires odd kernel, got {k}")
        pad = (k - 1) // 2
        t_out = t
    elif padding == "valid":
        if t < k:
            raise ShapeError(f"conv1d: input length {t} shorter than kernel {k}")
        pad = 0
        t_out = t - k + 1
    else:
        raise ConfigError(f"conv1d: unknown padding {padding!r}")

    xp = np.pad(x.data, ((0, 0), (pad, pad))) if pad else x.data
    kd = kernels.data
    out = np.zeros((c_out, t_out), dtype=np.float64)
    for j in range(k):
        out += np.einsum("oc,ct->ot", kd[:, :, j], xp[:, j:j + t_out])

    def bwd(g):
        dxp = np.zeros_like(xp)
        dk = np.zeros_like(kd)
        for j in range(k):
            seg = xp[:, j:j + t_out]
            dk[:, :, j] = np.einsum("ot,ct->oc", g, seg)
            dxp[:, j:j + t_out] += np.einsum("oc,ot->ct", kd[:, :, j], g)
        dx = dxp[:, pad:pad + t] if pad else dxp
        return dx, dk

    return track("conv1d", out, (x, kernels), bwd)


def conv2d(x: Tensor, kernels: Tensor) -> Tensor:
    """2-d cross-correlation with same padding.

    x: (C_in, H, W), kernels: (C_out, C_in, KH, KW), odd KH and KW.
    Inputs smaller than the kernel in either axis are rejected.
    """
    x, kernels = as_tensor(x), as_tensor(kernels)
    if x.ndim != 3 or kernels.ndim != 4:
        raise ShapeError(f"conv2d: got x {x.shape}, kernels {kernels.shape}")
    c_in, h, w = x.shape
    c_out, kc, kh, kw = kernels.shape
    if kc != c_in:
        raise ShapeError(f"conv2d: x has {c_in} channels, kernels expect {kc}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ConfigError(f"conv2d: same padding requires odd kernel, got {kh}x{kw}")
    if h < kh or w < kw:
        raise ShapeError(f"conv2d: input {h}x{w} smaller than kernel {kh}x{kw}")
    ph, pw = (kh - 1) // 2, (kw - 1) // 2
    xp = np.pad(x.data, ((0, 0), (ph, ph), (pw, pw)))
    kd = kernels.data
    out = np.zeros((c_out, h, w), dtype=np.float64)
    for i in range(kh):
        for j in range(kw):
            out += np.einsum("oc,chw->ohw", kd[:, :, i, j], xp[:, i:i + h, j:j + w])

    def bwd(g):
        dxp = np.zeros_like(xp)
        dk = np.zeros_like(kd)
        for i in range(kh):
            for j in range(kw):
                seg = xp[:, i:i + h, j:j + w]
                dk[:, :, i, j] = np.einsum("ohw,chw->oc", g, seg)
                dxp[:, i:i + h, j:j + w] += np.einsum("oc,ohw->chw", kd[:, :, i, j], g)
        return dxp[:, ph:ph + h, pw:pw + w], dk

    return track("conv2d", out, (x, kernels), bwd)


def gather_rows(table: Tensor, ids) -> Tensor:
    """Embedding lookup: rows of table (V, d) at integer ids (n,)."""
    table = as_tensor(table)
    if table.ndim != 2:
        raise ShapeError(f"gather_rows: table must be rank 2, got {table.shape}")
    idx = np.asarray(ids, dtype=np.int64)
    if idx.ndim != 1:
        raise ShapeError(f"gather_rows: ids must be rank 1, got {idx.shape}")
    v = table.shape[0]
    if idx.size and (idx.min() < 0 or idx.max() >= v):
        raise ContractError(f"gather_rows: id out of range for table with {v} rows")
    shape = table.shape

    def bwd(g):
        dt = np.zeros(shape, dtype=np.float64)
        np.add.at(dt, idx, g)
        return (dt,)

    return track("gather_rows", table.data[idx], (table,), bwd)


def repeat_rows(x: Tensor, counts) -> Tensor:
    """Repeat row t of x (T, d) counts[t] times; counts are positive ints."""
    x = as_tensor(x)
    if x.ndim != 2:
        raise ShapeError(f"repeat_rows expects rank 2, got {x.shape}")
    c = np.asarray(counts, dtype=np.int64)
    if c.ndim != 1 or c.shape[0] != x.shape[0]:
        raise ShapeError(f"repeat_rows: {c.shape[0] if c.ndim == 1 else c.shape} counts "
                         f"for {x.shape[0]} rows")
    if np.any(c < 1):
        raise ContractError("repeat_rows: every count must be >= 1")
    offsets = np.concatenate(([0], np.cumsum(c)[:-1]))

    def bwd(g):
        return (np.add.reduceat(g, offsets, axis=0),)

    return track("repeat_rows", np.repeat(x.data, c, axis=0), (x,), bwd)


def slice_rows(x: Tensor, lo: int, hi: int) -> Tensor:
    x = as_tensor(x)
    if x.ndim != 2:
        raise ShapeError(f"slice_rows expects rank 2, got {x.shape}")
    if not (0 <= lo < hi <= x.shape[0]):
        raise ShapeError(f"slice_rows: [{lo}, {hi}) out of range for {x.shape}")
    shape = x.shape

    def bwd(g):
        dx = np.zeros(shape, dtype=np.float64)
        dx[lo:hi] = g
        return (dx,)

    return track("slice_rows", x.data[lo:hi].copy(), (x,), bwd)


def slice_cols(x: Tensor, lo: int, hi: int) -> Tensor:
    x = as_tensor(x)
    if x.ndim != 2:
        raise ShapeError(f"slice_cols expects rank 2, got {x.shape}")
    if not (0 <= lo < hi <= x.shape[1]):
        raise ShapeError(f"slice_cols: [{lo}, {hi}) out of range for {x.shape}")
    shape = x.shape

    def bwd(g):
        dx = np.zeros(shape, dtype=np.float64)
        dx[:, lo:hi] = g
        return (dx,)

    return track("slice_cols", np.ascontiguousarray(x.data[:, lo:hi]), (x,), bwd)


def concat_cols(parts: list) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    if not parts:
        raise ContractError("concat_cols needs at least one part")
    rows = parts[0].shape[0]
    for p in parts:
        if p.ndim != 2 or p.shape[0] != rows:
            raise ShapeError(f"concat_cols: incompatible part shape {p.shape}")
    widths = [p.shape[1] for p in parts]
    splits = np.cumsum(widths)[:-1]

    def bwd(g):
        return tuple(np.ascontiguousarray(piece) for piece in np.split(g, splits, axis=1))

    return track("concat_cols", np.concatenate([p.data for p in parts], axis=1),
                 tuple(parts), bwd)


def reshape(x: Tensor, shape) -> Tensor:
    x = as_tensor(x)
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape)) != x.size:
        raise ShapeError(f"reshape: cannot view {x.shape} as {shape}")
    orig = x.shape
    return track("reshape", x.data.reshape(shape), (x,),
                 lambda g: (g.reshape(orig),))


def pick(x: Tensor, index: int) -> Tensor:
    """Scalar element of a vector, differentiable through the index."""
    x = as_tensor(x)
    if x.ndim != 1:
        raise ShapeError(f"pick expects rank 1, got {x.shape}")
    if not (0 <= index < x.shape[0]):
        raise ContractError(f"pick: index {index} out of range for {x.shape}")
    n = x.shape[0]

    def bwd(g):
        dx = np.zeros(n, dtype=np.float64)
        dx[index] = g
        return (dx,)

    return track("pick", np.asarray(x.data[index]), (x,), bwd)


def gradient_reversal(x: Tensor, lam: float) -> Tensor:
    """Identity forward; backward multiplies the gradient by -lam."""
    x = as_tensor(x)
    lam = float(lam)
    return track("gradient_reversal", x.data.copy(), (x,), lambda g: (-lam * g,))
