"""Dense-tensor reverse-mode differentiation on float64 numpy buffers.

Provides exactly the operations the screening network needs (dense algebra,
1-D convolution, LSTM recurrence, self-attention, squeeze-excitation gating)
plus a named parameter store with a versioned binary checkpoint format.

A computation builds a tape of Tensor nodes; ``Tensor.backward()`` walks the
tape once in reverse topological order and accumulates gradients into
``.grad`` buffers. Everything is float64 and single-threaded per tape.
"""

from __future__ import annotations

import struct
from contextlib import contextmanager
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "ParamStore",
    "no_grad",
    "constant",
    "add",
    "sub",
    "mul",
    "scale",
    "matmul",
    "transpose",
    "reshape",
    "concat",
    "stack",
    "relu",
    "sigmoid",
    "tanh",
    "log",
    "exp",
    "softmax",
    "sum_",
    "mean",
    "max_",
    "global_max_pool",
    "dropout",
    "conv1d",
    "conv1d_out_len",
    "sdp_self_attention",
    "lstm_layer",
    "se_block_gate",
    "uniform_init",
    "save_checkpoint",
    "load_checkpoint",
]

_grad_enabled = True


@contextmanager
def no_grad():
    """Disable tape construction (inference mode)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """A tape node: float64 array plus parents and a local backward rule."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data, dtype=np.float64)
        if not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], tuple] | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}{tag})"

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self, seed: np.ndarray | None = None) -> None:
        """Accumulate d(self)/d(node) into .grad for every node on the tape."""
        if seed is None:
            if self.data.size != 1:
                raise ValueError(
                    f"backward() without a seed requires a scalar, got shape {self.data.shape}"
                )
            seed = np.ones_like(self.data)
        order = _toposort(self)
        grads: dict[int, np.ndarray] = {id(self): np.asarray(seed, dtype=np.float64)}
        for node in order:  # already reversed: outputs first
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.grad is None:
                node.grad = g.copy()
            else:
                node.grad = node.grad + g
            if node._backward is None:
                continue
            parent_grads = node._backward(g)
            for parent, pg in zip(node._parents, parent_grads):
                if pg is None:
                    continue
                held = grads.get(id(parent))
                grads[id(parent)] = pg if held is None else held + pg

    # Operator sugar; all math lives in the module-level op functions.
    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        return mul(self, other)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __neg__(self) -> "Tensor":
        return scale(self, -1.0)

    def __getitem__(self, key) -> "Tensor":
        return slice_(self, key)

    @property
    def T(self) -> "Tensor":
        return transpose(self)


def _toposort(root: Tensor) -> list[Tensor]:
    """Iterative DFS post-order, returned outputs-first (reverse topological)."""
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    order.reverse()
    return order


def _op(data: np.ndarray, parents: tuple[Tensor, ...], backward) -> Tensor:
    out = Tensor(data)
    if _grad_enabled:
        out.requires_grad = any(p.requires_grad for p in parents)
        out._parents = parents
        out._backward = backward
    return out


def constant(data) -> Tensor:
    return Tensor(data)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a gradient back down to `shape` after numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def add(a: Tensor, b: Tensor) -> Tensor:
    data = a.data + b.data
    return _op(data, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a: Tensor, b: Tensor) -> Tensor:
    data = a.data - b.data
    return _op(data, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    data = a.data * b.data
    return _op(
        data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _op(a.data * c, (a,), lambda g: (g * c,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim > 2 or b.data.ndim > 2:
        raise ValueError(f"matmul supports 1-D/2-D operands, got {a.shape} @ {b.shape}")
    data = a.data @ b.data

    def backward(g: np.ndarray):
        if a.data.ndim == 1 and b.data.ndim == 2:  # (k,) @ (k,m) -> (m,)
            return b.data @ g, np.outer(a.data, g)
        if a.data.ndim == 2 and b.data.ndim == 1:  # (n,k) @ (k,) -> (n,)
            return np.outer(g, b.data), a.data.T @ g
        if a.data.ndim == 1 and b.data.ndim == 1:  # inner product
            return g * b.data, g * a.data
        return g @ b.data.T, a.data.T @ g

    return _op(data, (a, b), backward)


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ValueError(f"transpose expects a 2-D tensor, got shape {a.shape}")
    return _op(a.data.T.copy(), (a,), lambda g: (g.T,))


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)
    old = a.shape
    return _op(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def slice_(a: Tensor, key) -> Tensor:
    data = a.data[key]
    if isinstance(data, np.ndarray):
        data = data.copy()

    def backward(g: np.ndarray):
        gx = np.zeros_like(a.data)
        gx[key] = g
        return (gx,)

    return _op(np.asarray(data), (a,), backward)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise ValueError("concat of zero tensors")
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum(sizes)[:-1]

    def backward(g: np.ndarray):
        return tuple(np.ascontiguousarray(p) for p in np.split(g, offsets, axis=axis))

    return _op(data, tuple(tensors), backward)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise ValueError("stack of zero tensors")
    data = np.stack([t.data for t in tensors], axis=axis)

    def backward(g: np.ndarray):
        return tuple(np.ascontiguousarray(s) for s in np.moveaxis(g, axis, 0))

    return _op(data, tuple(tensors), backward)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _op(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    y = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    return _op(y, (a,), lambda g: (g * y * (1.0 - y),))


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    return _op(y, (a,), lambda g: (g * (1.0 - y * y),))


def log(a: Tensor, floor: float = 0.0) -> Tensor:
    """Natural log; with floor > 0, inputs are clamped from below first."""
    x = np.maximum(a.data, floor) if floor > 0.0 else a.data
    y = np.log(x)
    live = a.data > floor if floor > 0.0 else np.ones_like(a.data, dtype=bool)
    return _op(y, (a,), lambda g: (np.where(live, g / x, 0.0),))


def exp(a: Tensor) -> Tensor:
    y = np.exp(a.data)
    return _op(y, (a,), lambda g: (g * y,))


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g: np.ndarray):
        dot = (g * y).sum(axis=axis, keepdims=True)
        return ((g - dot) * y,)

    return _op(y, (a,), backward)


def sum_(a: Tensor, axis: int | None = None) -> Tensor:
    data = a.data.sum(axis=axis)

    def backward(g: np.ndarray):
        if axis is None:
            return (np.full_like(a.data, g.sum()),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),)

    return _op(np.asarray(data), (a,), backward)


def mean(a: Tensor, axis: int | None = None) -> Tensor:
    n = a.data.size if axis is None else a.shape[axis]
    return scale(sum_(a, axis=axis), 1.0 / n)


def max_(a: Tensor, axis: int) -> Tensor:
    """Max over one axis; gradient routes to the first argmax (deterministic)."""
    idx = np.argmax(a.data, axis=axis)
    data = np.take_along_axis(a.data, np.expand_dims(idx, axis), axis=axis).squeeze(axis)

    def backward(g: np.ndarray):
        gx = np.zeros_like(a.data)
        np.put_along_axis(gx, np.expand_dims(idx, axis), np.expand_dims(g, axis), axis=axis)
        return (gx,)

    return _op(data, (a,), backward)


def global_max_pool(a: Tensor, axis: int = -1) -> Tensor:
    return max_(a, axis=axis)


def dropout(a: Tensor, rate: float, rng: np.random.Generator, train: bool) -> Tensor:
    """Inverted dropout: kept units are scaled by 1/(1-rate) so E[out] = in."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not train or rate == 0.0:
        return a
    mask = (rng.random(a.shape) >= rate) / (1.0 - rate)
    return _op(a.data * mask, (a,), lambda g: (g * mask,))


def conv1d_out_len(length: int, kernel: int, stride: int, padding: int) -> int:
    return (length + 2 * padding - kernel) // stride + 1


def conv1d(x: Tensor, w: Tensor, stride: int = 1, padding: int = 0, bias: Tensor | None = None) -> Tensor:
    """1-D convolution: x (C, L), w (C_out, C, K) -> (C_out, L_out)."""
    if x.data.ndim != 2 or w.data.ndim != 3:
        raise ValueError(f"conv1d expects x (C,L) and w (C_out,C,K), got {x.shape}, {w.shape}")
    c_in, length = x.shape
    c_out, c_w, kernel = w.shape
    if c_w != c_in:
        raise ValueError(f"conv1d channel mismatch: x has {c_in}, w expects {c_w}")
    if stride < 1 or padding < 0:
        raise ValueError(f"invalid stride/padding: stride={stride}, padding={padding}")
    if length + 2 * padding < kernel:
        raise ValueError(
            f"conv1d input too short: L={length}, padding={padding}, kernel={kernel}"
        )
    l_out = conv1d_out_len(length, kernel, stride, padding)
    xp = np.pad(x.data, ((0, 0), (padding, padding))) if padding else x.data
    y = np.zeros((c_out, l_out))
    # One small matmul per kernel tap avoids materializing an im2col buffer.
    for k in range(kernel):
        y += w.data[:, :, k] @ xp[:, k : k + stride * l_out : stride]
    if bias is not None:
        y = y + bias.data[:, None]

    def backward(g: np.ndarray):
        gxp = np.zeros_like(xp)
        gw = np.zeros_like(w.data)
        for k in range(kernel):
            seg = xp[:, k : k + stride * l_out : stride]
            gw[:, :, k] = g @ seg.T
            gxp[:, k : k + stride * l_out : stride] += w.data[:, :, k].T @ g
        gx = gxp[:, padding : padding + length] if padding else gxp
        if bias is None:
            return np.ascontiguousarray(gx), gw
        return np.ascontiguousarray(gx), gw, g.sum(axis=1)

    parents = (x, w) if bias is None else (x, w, bias)
    return _op(y, parents, backward)


def sdp_self_attention(x: Tensor) -> Tensor:
    """Scaled dot-product self-attention with x as query, key and value.

    x is (L, d); output is softmax(x xᵀ / √d) x, shape (L, d). Each attention
    row sums to 1.
    """
    if x.data.ndim != 2:
        raise ValueError(f"attention expects (L, d), got shape {x.shape}")
    d = x.shape[1]
    scores = scale(matmul(x, transpose(x)), 1.0 / np.sqrt(d))
    weights = softmax(scores, axis=1)
    return matmul(weights, x)


def lstm_layer(
    x: Tensor,
    params: dict[str, Tensor],
    hidden: int,
    bidirectional: bool = True,
) -> Tensor:
    """LSTM over x (T, d_in) -> (T, 2*hidden) when bidirectional, else (T, hidden).

    params holds, per direction prefix ("fw"/"bw"): `<p>_wx` (d_in, 4H),
    `<p>_wh` (H, 4H), `<p>_b` (4H,). Gate order along the 4H axis is
    input, forget, cell, output. Initial states are zero.
    """
    if x.data.ndim != 2:
        raise ValueError(f"lstm_layer expects (T, d_in), got shape {x.shape}")
    t_len = x.shape[0]
    h = hidden

    def run(prefix: str, reverse: bool) -> list[Tensor]:
        wx, wh, b = params[f"{prefix}_wx"], params[f"{prefix}_wh"], params[f"{prefix}_b"]
        if wx.shape != (x.shape[1], 4 * h) or wh.shape != (h, 4 * h) or b.shape != (4 * h,):
            raise ValueError(
                f"lstm weight shapes {wx.shape}/{wh.shape}/{b.shape} do not match "
                f"d_in={x.shape[1]}, hidden={h}"
            )
        xw = matmul(x, wx)  # (T, 4H), one matmul for all steps
        h_t = constant(np.zeros(h))
        c_t = constant(np.zeros(h))
        outs: list[Tensor] = []
        steps = range(t_len - 1, -1, -1) if reverse else range(t_len)
        for t in steps:
            z = add(add(xw[t], matmul(h_t, wh)), b)
            i = sigmoid(z[0:h])
            f = sigmoid(z[h : 2 * h])
            g = tanh(z[2 * h : 3 * h])
            o = sigmoid(z[3 * h : 4 * h])
            c_t = add(mul(f, c_t), mul(i, g))
            h_t = mul(o, tanh(c_t))
            outs.append(h_t)
        if reverse:
            outs.reverse()
        return outs

    fw = run("fw", reverse=False)
    if not bidirectional:
        return stack(fw, axis=0)
    bw = run("bw", reverse=True)
    return concat([stack(fw, axis=0), stack(bw, axis=0)], axis=1)


def se_block_gate(u: Tensor, w1: Tensor, w2: Tensor) -> Tensor:
    """Squeeze-excitation channel gating on u (C, L).

    squeeze = per-channel mean over length; excitation = σ(w2ᵀ relu(w1ᵀ s));
    output is u scaled channel-wise by the gates, which lie in (0, 1).
    """
    if u.data.ndim != 2:
        raise ValueError(f"se_block_gate expects (C, L), got shape {u.shape}")
    c = u.shape[0]
    if w1.shape[0] != c or w2.shape[1] != c or w1.shape[1] != w2.shape[0]:
        raise ValueError(f"se weights {w1.shape}/{w2.shape} do not match C={c}")
    squeeze = mean(u, axis=1)  # (C,)
    gates = sigmoid(matmul(relu(matmul(squeeze, w1)), w2))  # (C,)
    return mul(u, reshape(gates, (c, 1)))


def se_bottleneck_dim(channels: int, reduction: int) -> int:
    return max(1, channels // reduction)


def uniform_init(rng: np.random.Generator, shape: Sequence[int], fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=tuple(shape))


def he_uniform_init(rng: np.random.Generator, shape: Sequence[int], fan_in: int) -> np.ndarray:
    # gain sqrt(2) keeps activation variance flat through ReLU layer stacks
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=tuple(shape))


class ParamStore:
    """Ordered collection of named trainable tensors with gradient slots."""

    def __init__(self) -> None:
        self._tensors: dict[str, Tensor] = {}

    def add(self, name: str, data: np.ndarray) -> Tensor:
        if name in self._tensors:
            raise ValueError(f"duplicate parameter name: {name}")
        t = Tensor(data, requires_grad=True, name=name)
        self._tensors[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __len__(self) -> int:
        return len(self._tensors)

    def names(self) -> list[str]:
        return list(self._tensors)

    def items(self) -> Iterable[tuple[str, Tensor]]:
        return self._tensors.items()

    def tensors(self) -> Iterable[Tensor]:
        return self._tensors.values()

    def zero_grad(self) -> None:
        for t in self._tensors.values():
            t.grad = None

    def n_params(self) -> int:
        return sum(t.size for t in self._tensors.values())

    def state(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self._tensors.items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        if set(state) != set(self._tensors):
            missing = set(self._tensors) - set(state)
            extra = set(state) - set(self._tensors)
            raise ValueError(f"state mismatch: missing={sorted(missing)}, extra={sorted(extra)}")
        for name, arr in state.items():
            t = self._tensors[name]
            if t.data.shape != arr.shape:
                raise ValueError(f"shape mismatch for {name}: {t.data.shape} vs {arr.shape}")
            t.data = np.ascontiguousarray(arr, dtype=np.float64)


_CKPT_MAGIC = b"CGSTENS1"


def save_checkpoint(path, tensors: dict[str, np.ndarray] | ParamStore) -> None:
    """Write a named-tensor archive; float64 little-endian, bit-exact."""
    if isinstance(tensors, ParamStore):
        tensors = tensors.state()
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(struct.pack("<I", len(tensors)))
        for name, arr in tensors.items():
            arr = np.asarray(arr, dtype=np.float64)
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.astype("<f8", copy=False).tobytes())


def load_checkpoint(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        magic = fh.read(len(_CKPT_MAGIC))
        if magic != _CKPT_MAGIC:
            raise ValueError(f"not a checkpoint file (bad header): {path}")
        (count,) = struct.unpack("<I", fh.read(4))
        out: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", fh.read(2))
            name = fh.read(name_len).decode("utf-8")
            (ndim,) = struct.unpack("<B", fh.read(1))
            shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim)) if ndim else ()
            n = int(np.prod(shape)) if shape else 1
            buf = fh.read(8 * n)
            if len(buf) != 8 * n:
                raise ValueError(f"truncated checkpoint: {path}")
            out[name] = np.frombuffer(buf, dtype="<f8").reshape(shape).astype(np.float64)
        return out
