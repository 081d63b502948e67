"""Reverse-mode automatic differentiation on float32 numpy arrays.

The library is define-by-run: a :class:`Graph` is opened as a context
manager, every operation executed inside records itself onto the tape,
and :func:`backward` replays the tape in reverse to accumulate
gradients into the ``grad`` buffers of the participating leaves.  The
graph is rebuilt on every forward pass; nothing is retained between
passes except the leaf tensors themselves.

All values are float32.  Every operation validates its operand shapes
up front and checks its output for NaN/Inf; gradients are checked the
same way during the backward sweep.
"""

from __future__ import annotations

import numpy as np

from .errors import GraphError, NumericsError, ShapeError

__all__ = [
    "Tensor",
    "Graph",
    "backward",
    "record_op",
    "matmul",
    "conv2d",
    "relu",
    "clamp01",
    "softmax_cross_entropy",
    "add",
    "add_row_bias",
    "add_channel_bias",
    "scale",
    "reshape",
    "tensor_sum",
]


def _as_f32(data) -> np.ndarray:
    return np.asarray(data, dtype=np.float32)


def _check_finite(arr: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericsError(f"{what} contains NaN or Inf")


class Tensor:
    """A float32 array plus an optional gradient buffer.

    ``requires_grad`` marks the tensor as a differentiation target;
    operations propagate the flag to their outputs.  ``grad`` is filled
    by :func:`backward` for leaves only (tensors not produced inside the
    graph being differentiated); repeated backward calls accumulate.
    """

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        arr = _as_f32(data)
        _check_finite(arr, "tensor value")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a scalar, got shape {self.data.shape}")
        return float(self.data.reshape(()))

    def __repr__(self) -> str:  # pragma: no cover - debug aid
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"


class _TapeEntry:
    __slots__ = ("output", "inputs", "backward_fn", "flops")

    def __init__(self, output, inputs, backward_fn, flops):
        self.output = output
        self.inputs = inputs
        self.backward_fn = backward_fn
        self.flops = flops


_GRAPH_STACK: list["Graph"] = []


class Graph:
    """Tape of recorded operations for one forward/backward cycle.

    Also keeps deterministic work accounting: ``flops`` counts the
    arithmetic performed (backward traversal adds twice the forward
    cost of each op it visits) and ``bytes_tracked`` sums the buffers
    that were alive on the tape, gradients included.
    """

    def __init__(self):
        self._tape: list[_TapeEntry] = []
        self._produced: set[int] = set()
        self._counted: set[int] = set()
        self.flops: int = 0
        self.bytes_tracked: int = 0

    def __enter__(self) -> "Graph":
        _GRAPH_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> bool:
        popped = _GRAPH_STACK.pop()
        if popped is not self:  # pragma: no cover - defensive
            raise GraphError("graph context stack corrupted")
        return False

    def record(self, output: Tensor, inputs: tuple[Tensor, ...], backward_fn, flops: int) -> None:
        self._tape.append(_TapeEntry(output, inputs, backward_fn, flops))
        self._produced.add(id(output))
        self.flops += int(flops)
        for t in (output, *inputs):
            if id(t) not in self._counted:
                self._counted.add(id(t))
                self.bytes_tracked += t.data.nbytes

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/d(leaf) into every requires_grad leaf."""
        if loss.data.size != 1:
            raise GraphError(f"backward needs a scalar loss, got shape {loss.data.shape}")
        if id(loss) not in self._produced:
            raise GraphError("loss tensor was not produced by this graph")

        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        for entry in reversed(self._tape):
            g_out = grads.pop(id(entry.output), None)
            if g_out is None:
                continue  # op not on any path to the loss
            if not entry.output.requires_grad:
                continue  # nothing below needs a gradient
            self.flops += 2 * entry.flops
            input_grads = entry.backward_fn(g_out)
            for inp, g_in in zip(entry.inputs, input_grads):
                if g_in is None:
                    continue
                g_in = _as_f32(g_in)
                _check_finite(g_in, "gradient")
                if g_in.shape != inp.data.shape:  # pragma: no cover - defensive
                    raise GraphError(
                        f"backward produced gradient of shape {g_in.shape} "
                        f"for input of shape {inp.data.shape}"
                    )
                self.bytes_tracked += g_in.nbytes
                if id(inp) in self._produced:
                    key = id(inp)
                    if key in grads:
                        grads[key] = grads[key] + g_in
                    else:
                        grads[key] = g_in
                elif inp.requires_grad:
                    # leaf: accumulate into the persistent buffer
                    if inp.grad is None:
                        inp.grad = np.zeros_like(inp.data)
                    inp.grad += g_in


def backward(graph: Graph, loss: Tensor) -> None:
    """Functional alias for :meth:`Graph.backward`."""
    graph.backward(loss)


def record_op(output: Tensor, inputs: tuple[Tensor, ...], backward_fn, flops: int = 0) -> None:
    """Record a custom op onto the active graph, if one is open."""
    if _GRAPH_STACK:
        _GRAPH_STACK[-1].record(output, inputs, backward_fn, flops)


def _make_output(data: np.ndarray, inputs: tuple[Tensor, ...], what: str) -> Tensor:
    _check_finite(data, what)
    out = Tensor.__new__(Tensor)
    out.data = data.astype(np.float32, copy=False)
    out.requires_grad = any(t.requires_grad for t in inputs)
    out.grad = None
    return out


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of two rank-2 tensors.

    Backward: dA = G @ B^T, dB = A^T @ G.
    """
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(
            f"matmul needs rank-2 operands, got {a.data.shape} and {b.data.shape}"
        )
    if a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(
            f"matmul inner dimensions disagree: {a.data.shape} vs {b.data.shape}"
        )
    out = _make_output(a.data @ b.data, (a, b), "matmul output")
    m, k = a.data.shape
    n = b.data.shape[1]

    def bwd(g):
        ga = g @ b.data.T if a.requires_grad else None
        gb = a.data.T @ g if b.requires_grad else None
        return ga, gb

    record_op(out, (a, b), bwd, flops=2 * m * k * n)
    return out


def _im2col(x: np.ndarray, kh: int, kw: int, stride: int):
    n, c, h, w = x.shape
    h_out = (h - kh) // stride + 1
    w_out = (w - kw) // stride + 1
    sn, sc, sh, sw = x.strides
    view = np.lib.stride_tricks.as_strided(
        x,
        shape=(n, c, kh, kw, h_out, w_out),
        strides=(sn, sc, sh, sw, sh * stride, sw * stride),
        writeable=False,
    )
    cols = np.ascontiguousarray(view.transpose(0, 4, 5, 1, 2, 3))
    return cols.reshape(n, h_out * w_out, c * kh * kw), h_out, w_out


def conv2d(x: Tensor, kernel: Tensor, stride: int = 1) -> Tensor:
    """Valid (no padding) 2-D convolution over NCHW input.

    Implemented as im2col followed by a matrix product; the backward
    pass scatters the column gradient back onto the input raster.
    """
    if x.data.ndim != 4 or kernel.data.ndim != 4:
        raise ShapeError(
            f"conv2d needs NCHW input and FCHW kernel, got {x.data.shape} and {kernel.data.shape}"
        )
    if not isinstance(stride, int) or stride < 1:
        raise ShapeError(f"conv2d stride must be a positive int, got {stride!r}")
    n, c, h, w = x.data.shape
    f, ck, kh, kw = kernel.data.shape
    if ck != c:
        raise ShapeError(f"conv2d channel mismatch: input has {c}, kernel expects {ck}")
    if kh > h or kw > w:
        raise ShapeError(
            f"conv2d kernel {kh}x{kw} larger than input {h}x{w}"
        )
    cols, h_out, w_out = _im2col(x.data, kh, kw, stride)
    kmat = kernel.data.reshape(f, c * kh * kw)
    prod = cols @ kmat.T  # (n, h_out*w_out, f)
    out_data = prod.transpose(0, 2, 1).reshape(n, f, h_out, w_out)
    out = _make_output(np.ascontiguousarray(out_data), (x, kernel), "conv2d output")

    def bwd(g):
        gmat = g.reshape(n, f, h_out * w_out).transpose(0, 2, 1)  # (n, P, f)
        gk = None
        gx = None
        if kernel.requires_grad:
            gk = np.tensordot(gmat, cols, axes=([0, 1], [0, 1])).reshape(kernel.data.shape)
        if x.requires_grad:
            dcols = gmat @ kmat  # (n, P, c*kh*kw)
            dc = dcols.reshape(n, h_out, w_out, c, kh, kw).transpose(0, 3, 4, 5, 1, 2)
            gx = np.zeros_like(x.data)
            for i in range(kh):
                for j in range(kw):
                    gx[:, :, i : i + stride * h_out : stride, j : j + stride * w_out : stride] += dc[:, :, i, j]
        return gx, gk

    record_op(out, (x, kernel), bwd, flops=2 * n * h_out * w_out * f * c * kh * kw)
    return out


def relu(x: Tensor) -> Tensor:
    """max(x, 0); gradient passes where x > 0."""
    out = _make_output(np.maximum(x.data, 0.0), (x,), "relu output")

    def bwd(g):
        if not x.requires_grad:
            return (None,)
        return (g * (x.data > 0.0),)

    record_op(out, (x,), bwd, flops=x.data.size)
    return out


def clamp01(x: Tensor) -> Tensor:
    """Clamp into [0, 1]; gradient passes only on the open interval (0, 1)."""
    out = _make_output(np.clip(x.data, 0.0, 1.0), (x,), "clamp01 output")

    def bwd(g):
        if not x.requires_grad:
            return (None,)
        gate = (x.data > 0.0) & (x.data < 1.0)
        return (g * gate,)

    record_op(out, (x,), bwd, flops=x.data.size)
    return out


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum of two same-shape tensors."""
    if a.data.shape != b.data.shape:
        raise ShapeError(f"add shape mismatch: {a.data.shape} vs {b.data.shape}")
    out = _make_output(a.data + b.data, (a, b), "add output")

    def bwd(g):
        return (g if a.requires_grad else None, g if b.requires_grad else None)

    record_op(out, (a, b), bwd, flops=a.data.size)
    return out


def add_row_bias(x: Tensor, bias: Tensor) -> Tensor:
    """Add a length-K bias vector to every row of an (N, K) tensor."""
    if x.data.ndim != 2 or bias.data.ndim != 1 or x.data.shape[1] != bias.data.shape[0]:
        raise ShapeError(
            f"add_row_bias needs (N,K) and (K,), got {x.data.shape} and {bias.data.shape}"
        )
    out = _make_output(x.data + bias.data, (x, bias), "bias output")

    def bwd(g):
        gx = g if x.requires_grad else None
        gb = g.sum(axis=0) if bias.requires_grad else None
        return gx, gb

    record_op(out, (x, bias), bwd, flops=x.data.size)
    return out


def add_channel_bias(x: Tensor, bias: Tensor) -> Tensor:
    """Add a per-channel bias to an (N, F, H, W) tensor."""
    if x.data.ndim != 4 or bias.data.ndim != 1 or x.data.shape[1] != bias.data.shape[0]:
        raise ShapeError(
            f"add_channel_bias needs (N,F,H,W) and (F,), got {x.data.shape} and {bias.data.shape}"
        )
    out = _make_output(x.data + bias.data[None, :, None, None], (x, bias), "bias output")

    def bwd(g):
        gx = g if x.requires_grad else None
        gb = g.sum(axis=(0, 2, 3)) if bias.requires_grad else None
        return gx, gb

    record_op(out, (x, bias), bwd, flops=x.data.size)
    return out


def scale(x: Tensor, factor: float) -> Tensor:
    """Multiply by a python scalar constant."""
    out = _make_output(x.data * np.float32(factor), (x,), "scale output")

    def bwd(g):
        if not x.requires_grad:
            return (None,)
        return (g * np.float32(factor),)

    record_op(out, (x,), bwd, flops=x.data.size)
    return out


def reshape(x: Tensor, new_shape: tuple[int, ...]) -> Tensor:
    """Reshape without changing the element count."""
    try:
        data = x.data.reshape(new_shape)
    except ValueError as exc:
        raise ShapeError(f"cannot reshape {x.data.shape} into {new_shape}: {exc}") from None
    out = _make_output(np.ascontiguousarray(data), (x,), "reshape output")

    def bwd(g):
        if not x.requires_grad:
            return (None,)
        return (g.reshape(x.data.shape),)

    record_op(out, (x,), bwd, flops=0)
    return out


def tensor_sum(x: Tensor) -> Tensor:
    """Sum all elements down to a scalar."""
    out = _make_output(np.asarray(x.data.sum(), dtype=np.float32), (x,), "sum output")

    def bwd(g):
        if not x.requires_grad:
            return (None,)
        return (np.broadcast_to(g, x.data.shape).astype(np.float32),)

    record_op(out, (x,), bwd, flops=x.data.size)
    return out


def softmax_cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean cross-entropy between softmax(logits) and integer labels.

    Uses the max-shift trick for stability.  Backward on the logits is
    (softmax - onehot) / N.
    """
    if logits.data.ndim != 2:
        raise ShapeError(f"softmax_cross_entropy needs (N,K) logits, got {logits.data.shape}")
    y = np.asarray(labels)
    if y.ndim != 1 or y.shape[0] != logits.data.shape[0]:
        raise ShapeError(
            f"labels must be a length-{logits.data.shape[0]} vector, got shape {y.shape}"
        )
    if not np.issubdtype(y.dtype, np.integer):
        raise ShapeError(f"labels must be integers, got dtype {y.dtype}")
    n, k = logits.data.shape
    if y.size and (y.min() < 0 or y.max() >= k):
        raise ShapeError(f"label out of range [0, {k}) in {np.unique(y)[[0, -1]]}")
    z = logits.data.astype(np.float64)
    z = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    loss_val = np.float32((log_norm - z[np.arange(n), y]).mean())
    out = _make_output(np.asarray(loss_val, dtype=np.float32), (logits,), "cross-entropy loss")

    def bwd(g):
        if not logits.requires_grad:
            return (None,)
        probs = np.exp(z - log_norm[:, None])
        probs[np.arange(n), y] -= 1.0
        return ((probs * (np.float64(g) / n)).astype(np.float32),)

    record_op(out, (logits,), bwd, flops=6 * n * k)
    return out
