"""Minimal reverse-mode differentiation tape.

Covers exactly the primitives the unfolding network needs: elementwise
arithmetic, small 3-D convolutions (stride 1 and 2) and their transposed
counterparts, leaky rectifier, layer normalization over channels, softmax,
batched matrix multiply, reductions, sigmoid, plus two custom-backward
nodes: the hard rank-truncation projection (gradient flows only through the
retained singular subspaces) and the per-position Top-K channel selection
(straight-through mask gradient, marginal-channel surrogate for the rate).

Nodes are appended to their tape in creation order, which is already a
topological order, so the backward sweep is a single reversed pass with a
fixed accumulation order; gradients are therefore bitwise reproducible.
"""

from __future__ import annotations

import numpy as np

from .errors import EmptySelection, MissingGrad, NonScalarLoss, ShapeMismatch
from .tensor_ops import truncated_project_with_factors


class Node:
    """One value in the computation graph."""

    __slots__ = ("value", "grad", "parents", "requires_grad", "tape")

    def __init__(self, value, parents, requires_grad, tape):
        self.value = value
        self.grad = None
        self.parents = parents
        self.requires_grad = requires_grad
        self.tape = tape

    # Light operator sugar used by the network code.
    def __add__(self, other):
        return add(self, _wrap(self.tape, other))

    def __sub__(self, other):
        return sub(self, _wrap(self.tape, other))

    def __mul__(self, other):
        if isinstance(other, Node):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)


class Tape:
    """Records nodes in creation order; one forward/backward pass per use."""

    def __init__(self):
        self.nodes: list[Node] = []

    def _emit(self, value, parents=(), requires_grad=False) -> Node:
        value = np.asarray(value, dtype=np.float64)
        if parents and not requires_grad:
            requires_grad = any(p.requires_grad for p, _ in parents)
        node = Node(value, list(parents), requires_grad, self)
        self.nodes.append(node)
        return node

    def leaf(self, value, requires_grad=False) -> Node:
        return self._emit(value, (), requires_grad)

    def constant(self, value) -> Node:
        return self.leaf(value, requires_grad=False)


class Parameter:
    """Trainable array with adaptive-moment optimizer state.

    bind() creates a fresh leaf node on a tape for each forward pass; the
    gradient of the latest backward pass is read through .grad.
    """

    def __init__(self, name: str, value):
        self.name = name
        self.value = np.array(value, dtype=np.float64)
        self.m1 = np.zeros_like(self.value)
        self.m2 = np.zeros_like(self.value)
        self.step_count = 0
        self.node: Node | None = None

    def bind(self, tape: Tape) -> Node:
        # One leaf per tape: repeated use (parameter sharing across stages)
        # must accumulate into a single gradient buffer.
        if self.node is None or self.node.tape is not tape:
            self.node = tape.leaf(self.value, requires_grad=True)
        return self.node

    @property
    def grad(self):
        return None if self.node is None else self.node.grad

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.value.shape})"


def _wrap(tape: Tape, value) -> Node:
    if isinstance(value, Node):
        return value
    return tape.constant(value)


def _same_shape(a: Node, b: Node, op: str):
    if a.value.shape != b.value.shape:
        raise ShapeMismatch(f"{op}: shapes {a.value.shape} and {b.value.shape} differ")


def backward(loss: Node) -> None:
    """Populate .grad of every requires_grad ancestor of a scalar loss."""
    if loss.value.shape != ():
        raise NonScalarLoss(f"loss has shape {loss.value.shape}, expected scalar")
    tape = loss.tape
    for node in tape.nodes:
        node.grad = None
    loss.grad = np.array(1.0)
    for node in reversed(tape.nodes):
        if node.grad is None or not node.requires_grad:
            continue
        for parent, pull in node.parents:
            if not parent.requires_grad:
                continue
            contrib = pull(node.grad)
            parent.grad = contrib if parent.grad is None else parent.grad + contrib


def adam_step(params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8) -> None:
    """Adaptive-moment update with bias correction, in place on .value."""
    for p in params:
        g = p.grad
        if g is None:
            raise MissingGrad(f"parameter {p.name} has no gradient")
        p.step_count += 1
        t = p.step_count
        p.m1 = beta1 * p.m1 + (1.0 - beta1) * g
        p.m2 = beta2 * p.m2 + (1.0 - beta2) * g * g
        m_hat = p.m1 / (1.0 - beta1**t)
        v_hat = p.m2 / (1.0 - beta2**t)
        p.value = p.value - lr * m_hat / (np.sqrt(v_hat) + eps)


# ---------------------------------------------------------------------------
# elementwise and shape primitives
# ---------------------------------------------------------------------------


def add(a: Node, b: Node) -> Node:
    _same_shape(a, b, "add")
    return a.tape._emit(a.value + b.value, [(a, lambda g: g), (b, lambda g: g)])


def sub(a: Node, b: Node) -> Node:
    _same_shape(a, b, "sub")
    return a.tape._emit(a.value - b.value, [(a, lambda g: g), (b, lambda g: -g)])


def mul(a: Node, b: Node) -> Node:
    _same_shape(a, b, "mul")
    av, bv = a.value, b.value
    return a.tape._emit(av * bv, [(a, lambda g: g * bv), (b, lambda g: g * av)])


def scale(a: Node, s) -> Node:
    """Multiply by a python float or a scalar node."""
    if isinstance(s, Node):
        if s.value.shape != ():
            raise ShapeMismatch("scale factor must be scalar")
        av, sv = a.value, float(s.value)
        return a.tape._emit(
            av * sv,
            [(a, lambda g: g * sv), (s, lambda g: np.array(np.sum(g * av)))],
        )
    sv = float(s)
    return a.tape._emit(a.value * sv, [(a, lambda g: g * sv)])


def reshape(a: Node, shape) -> Node:
    old = a.value.shape
    return a.tape._emit(a.value.reshape(shape), [(a, lambda g: g.reshape(old))])


def transpose(a: Node, axes) -> Node:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return a.tape._emit(
        np.ascontiguousarray(a.value.transpose(axes)),
        [(a, lambda g: np.ascontiguousarray(g.transpose(inv)))],
    )


def leaky_relu(a: Node, alpha: float = 0.1) -> Node:
    pos = a.value > 0
    out = np.where(pos, a.value, alpha * a.value)
    return a.tape._emit(out, [(a, lambda g: np.where(pos, g, alpha * g))])


def sigmoid(a: Node) -> Node:
    y = 1.0 / (1.0 + np.exp(-a.value))
    return a.tape._emit(y, [(a, lambda g: g * y * (1.0 - y))])


def softmax(a: Node, axis: int = -1) -> Node:
    shifted = a.value - a.value.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def pull(g):
        return y * (g - np.sum(g * y, axis=axis, keepdims=True))

    return a.tape._emit(y, [(a, pull)])


def matmul(a: Node, b: Node) -> Node:
    """Batched matrix product over the last two axes; batch dims must match."""
    av, bv = a.value, b.value
    if av.shape[:-2] != bv.shape[:-2] or av.shape[-1] != bv.shape[-2]:
        raise ShapeMismatch(f"matmul: shapes {av.shape} and {bv.shape} do not chain")

    def swap(x):
        return np.swapaxes(x, -1, -2)

    return a.tape._emit(
        av @ bv,
        [(a, lambda g: g @ swap(bv)), (b, lambda g: swap(av) @ g)],
    )


def sum_all(a: Node) -> Node:
    shape = a.value.shape
    return a.tape._emit(
        np.array(a.value.sum()), [(a, lambda g: np.broadcast_to(g, shape).copy())]
    )


def mean_all(a: Node) -> Node:
    n = a.value.size
    shape = a.value.shape
    return a.tape._emit(
        np.array(a.value.mean()),
        [(a, lambda g: np.broadcast_to(g / n, shape).copy())],
    )


def frob_sq(a: Node) -> Node:
    """Squared Frobenius norm (sum of squared entries)."""
    av = a.value
    return a.tape._emit(np.array(np.sum(av * av)), [(a, lambda g: 2.0 * g * av)])


def layer_norm(x: Node, gain: Node, bias: Node, eps: float = 1e-5) -> Node:
    """Normalize over the channel axis (axis 0) at every position."""
    xv = x.value
    c = xv.shape[0]
    if gain.value.shape != (c,) or bias.value.shape != (c,):
        raise ShapeMismatch("layer_norm gain/bias must have shape (C,)")
    bshape = (c,) + (1,) * (xv.ndim - 1)
    mu = xv.mean(axis=0, keepdims=True)
    var = ((xv - mu) ** 2).mean(axis=0, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (xv - mu) * inv
    gv = gain.value.reshape(bshape)
    out = gv * xhat + bias.value.reshape(bshape)

    def pull_x(g):
        dxhat = g * gv
        return inv * (
            dxhat
            - dxhat.mean(axis=0, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=0, keepdims=True)
        )

    axes = tuple(range(1, xv.ndim))
    return x.tape._emit(
        out,
        [
            (x, pull_x),
            (gain, lambda g: (g * xhat).sum(axis=axes)),
            (bias, lambda g: g.sum(axis=axes)),
        ],
    )


# ---------------------------------------------------------------------------
# 3-D convolution (stride 1 and 2) and its transpose
# ---------------------------------------------------------------------------


def _as_stride3(stride) -> tuple[int, int, int]:
    if isinstance(stride, int):
        return (stride, stride, stride)
    s = tuple(int(v) for v in stride)
    if len(s) != 3 or any(v not in (1, 2) for v in s):
        raise ValueError(f"stride must be 1 or 2 per axis, got {stride}")
    return s


def _pad_spatial(x: np.ndarray, pads) -> np.ndarray:
    return np.pad(x, ((0, 0),) + tuple((p, p) for p in pads))


def _patches(xp: np.ndarray, kdims, strides, odims) -> np.ndarray:
    """View of all kernel-sized windows: (C, kh, kw, kd, Ho, Wo, Do)."""
    c = xp.shape[0]
    sc, sh, sw, sd = xp.strides
    shape = (c, *kdims, *odims)
    strd = (sc, sh, sw, sd, sh * strides[0], sw * strides[1], sd * strides[2])
    return np.lib.stride_tricks.as_strided(xp, shape, strd, writeable=False)


def _scatter(buf: np.ndarray, dp: np.ndarray, kdims, strides, odims) -> None:
    """Adjoint of _patches: accumulate dp (C,kh,kw,kd,Ho,Wo,Do) into buf."""
    for a in range(kdims[0]):
        for b in range(kdims[1]):
            for c in range(kdims[2]):
                buf[
                    :,
                    a : a + strides[0] * odims[0] : strides[0],
                    b : b + strides[1] * odims[1] : strides[1],
                    c : c + strides[2] * odims[2] : strides[2],
                ] += dp[:, a, b, c]


def conv3d(x: Node, w: Node, b: Node | None = None, stride=1) -> Node:
    """3-D convolution, odd kernels, 'same' padding k//2 per axis.

    x: (Cin, H, W, D), w: (Cout, Cin, kh, kw, kd), b: (Cout,) or None.
    """
    strides = _as_stride3(stride)
    xv, wv = x.value, w.value
    if xv.ndim != 4 or wv.ndim != 5 or xv.shape[0] != wv.shape[1]:
        raise ShapeMismatch(f"conv3d: x {xv.shape} and w {wv.shape} incompatible")
    kdims = wv.shape[2:]
    if any(k % 2 == 0 for k in kdims):
        raise ValueError("conv3d kernels must be odd")
    pads = tuple(k // 2 for k in kdims)
    idims = xv.shape[1:]
    odims = tuple(
        (idims[i] + 2 * pads[i] - kdims[i]) // strides[i] + 1 for i in range(3)
    )
    xp = _pad_spatial(xv, pads)
    pat = _patches(xp, kdims, strides, odims)
    out = np.einsum("ocxyz,cxyzhwd->ohwd", wv, pat)
    if b is not None:
        if b.value.shape != (wv.shape[0],):
            raise ShapeMismatch("conv3d bias must have shape (Cout,)")
        out = out + b.value[:, None, None, None]

    def pull_x(g):
        dp = np.einsum("ohwd,ocxyz->cxyzhwd", g, wv)
        buf = np.zeros_like(xp)
        _scatter(buf, dp, kdims, strides, odims)
        return buf[
            :,
            pads[0] : pads[0] + idims[0],
            pads[1] : pads[1] + idims[1],
            pads[2] : pads[2] + idims[2],
        ]

    parents = [
        (x, pull_x),
        (w, lambda g: np.einsum("ohwd,cxyzhwd->ocxyz", g, pat)),
    ]
    if b is not None:
        parents.append((b, lambda g: g.sum(axis=(1, 2, 3))))
    return x.tape._emit(out, parents)


def conv3d_transpose(x: Node, w: Node, b: Node | None = None, stride=2) -> Node:
    """Transposed 3-D convolution (adjoint of conv3d with the same kernel).

    x: (Cin, H, W, D), w: (Cin, Cout, kh, kw, kd); output spatial dims are
    stride times the input's, exactly undoing a matching strided conv3d.
    """
    strides = _as_stride3(stride)
    xv, wv = x.value, w.value
    if xv.ndim != 4 or wv.ndim != 5 or xv.shape[0] != wv.shape[0]:
        raise ShapeMismatch(
            f"conv3d_transpose: x {xv.shape} and w {wv.shape} incompatible"
        )
    kdims = wv.shape[2:]
    if any(k % 2 == 0 for k in kdims):
        raise ValueError("conv3d_transpose kernels must be odd")
    pads = tuple(k // 2 for k in kdims)
    idims = xv.shape[1:]
    odims = tuple(strides[i] * idims[i] for i in range(3))
    cout = wv.shape[1]

    dp = np.einsum("coxyz,chwd->oxyzhwd", wv, xv)
    buf = np.zeros((cout,) + tuple(odims[i] + 2 * pads[i] for i in range(3)))
    _scatter(buf, dp, kdims, strides, idims)
    out = buf[
        :,
        pads[0] : pads[0] + odims[0],
        pads[1] : pads[1] + odims[1],
        pads[2] : pads[2] + odims[2],
    ]
    if b is not None:
        if b.value.shape != (cout,):
            raise ShapeMismatch("conv3d_transpose bias must have shape (Cout,)")
        out = out + b.value[:, None, None, None]

    def pull_x(g):
        gp = _pad_spatial(g, pads)
        gpat = _patches(gp, kdims, strides, idims)
        return np.einsum("coxyz,oxyzhwd->chwd", wv, gpat)

    def pull_w(g):
        gp = _pad_spatial(g, pads)
        gpat = _patches(gp, kdims, strides, idims)
        return np.einsum("chwd,oxyzhwd->coxyz", xv, gpat)

    parents = [(x, pull_x), (w, pull_w)]
    if b is not None:
        parents.append((b, lambda g: g.sum(axis=(1, 2, 3))))
    return x.tape._emit(out, parents)


# ---------------------------------------------------------------------------
# custom-backward nodes
# ---------------------------------------------------------------------------


def tsvd_project(x: Node, r: int) -> Node:
    """Hard rank-r tubal truncation with a retained-subspace pseudo-gradient.

    Forward is the exact hard truncation.  Backward projects the incoming
    cotangent, per frequency slice, onto the kept subspaces
    (U_r U_r^H G V_r V_r^H); components along discarded directions and any
    frequency-domain imaginary residue are dropped before the inverse
    transform.  The map is linear and idempotent in the cotangent, and is
    the identity when truncation is inactive on square slices.
    """
    out, uf, vf = truncated_project_with_factors(x.value, r)

    def pull(g):
        gh = np.fft.fft(g, axis=2)
        core = np.einsum("irn,ijn,jsn->rsn", uf.conj(), gh, vf)
        proj = np.einsum("irn,rsn,jsn->ijn", uf, core, vf.conj())
        return np.fft.ifft(proj, axis=2).real

    return x.tape._emit(out, [(x, pull)])


def topk_channels(x: Node, ratio: Node) -> Node:
    """Keep the ceil(ratio*C) largest-magnitude channels at every position.

    x: (C, h, w, d) feature array; ratio: scalar node in (0, 1].  Ties are
    broken toward the lower channel index.  Backward passes the cotangent
    through retained entries only; the ratio receives a straight-through
    surrogate equal to C times the sum over positions of cotangent*value at
    the first excluded (boundary) channel, the marginal effect of admitting
    one more channel per position.
    """
    xv = x.value
    if xv.ndim != 4:
        raise ShapeMismatch(f"topk_channels expects (C,h,w,d), got {xv.shape}")
    if ratio.value.shape != ():
        raise ShapeMismatch("topk ratio must be scalar")
    c = xv.shape[0]
    k = int(np.ceil(float(ratio.value) * c))
    if k < 1:
        raise EmptySelection(f"ratio {float(ratio.value)} keeps no channels")
    k = min(k, c)
    # Stable sort on -|x|: equal magnitudes keep ascending channel order.
    order = np.argsort(-np.abs(xv), axis=0, kind="stable")
    mask = np.zeros(xv.shape, dtype=bool)
    np.put_along_axis(mask, order[:k], True, axis=0)
    out = np.where(mask, xv, 0.0)

    if k < c:
        boundary = order[k : k + 1]
    else:
        boundary = None

    def pull_ratio(g):
        if boundary is None:
            return np.array(0.0)
        gb = np.take_along_axis(g, boundary, axis=0)
        xb = np.take_along_axis(xv, boundary, axis=0)
        return np.array(c * float(np.sum(gb * xb)))

    return x.tape._emit(
        out,
        [(x, lambda g: np.where(mask, g, 0.0)), (ratio, pull_ratio)],
    )
