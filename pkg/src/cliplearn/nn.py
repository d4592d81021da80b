"""Small reverse-mode autodiff kernel over dense float64 numpy arrays.

Every op returns a new :class:`Tensor` that remembers its parents and a
closure pushing the output gradient back to them. ``Tensor.backward`` walks
the recorded graph in reverse topological order. Only the broadcasting needed
here is supported: a 1-D bias added to a 2-D batch.
"""
from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np


class ShapeError(ValueError):
    pass


def _shape_error(op: str, a, b) -> ShapeError:
    return ShapeError(f"{op}: incompatible shapes {tuple(a)} and {tuple(b)}")


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False,
                 _parents: tuple["Tensor", ...] = (), _backward: Callable | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in _parents)
        self._parents = _parents if self.requires_grad else ()
        self._backward = _backward if self.requires_grad else None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def _acc(self, g: np.ndarray) -> None:
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self, grad: np.ndarray | None = None) -> None:
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a gradient needs a scalar output")
            grad = np.ones_like(self.data)
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        grads: dict[int, np.ndarray] = {id(self): np.asarray(grad, dtype=np.float64)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node._acc(g)
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                if id(parent) in grads:
                    grads[id(parent)] = grads[id(parent)] + pg
                else:
                    grads[id(parent)] = pg

    def __add__(self, other):
        return add(self, _lift(other))

    def __radd__(self, other):
        return add(_lift(other), self)

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __mul__(self, other):
        return mul(self, _lift(other))

    def __rmul__(self, other):
        return mul(_lift(other), self)

    def __matmul__(self, other):
        return matmul(self, other)


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data) -> Tensor:
    return Tensor(data, requires_grad=True)


# --- primitives -------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise _shape_error("matmul", a.shape, b.shape)

    def back(g):
        return g @ b.data.T, a.data.T @ g
    return Tensor(a.data @ b.data, _parents=(a, b), _backward=back)


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape == b.shape:
        return Tensor(a.data + b.data, _parents=(a, b), _backward=lambda g: (g, g))
    if a.data.ndim == 2 and b.data.ndim == 1 and a.shape[1] == b.shape[0]:
        return Tensor(a.data + b.data, _parents=(a, b), _backward=lambda g: (g, g.sum(axis=0)))
    if b.data.ndim == 0:
        return Tensor(a.data + b.data, _parents=(a, b), _backward=lambda g: (g, g.sum()))
    if a.data.ndim == 0:
        return Tensor(a.data + b.data, _parents=(a, b), _backward=lambda g: (g.sum(), g))
    raise _shape_error("add", a.shape, b.shape)


def sub(a: Tensor, b: Tensor) -> Tensor:
    return add(a, scale(b, -1.0))


def scale(a: Tensor, c: float) -> Tensor:
    return Tensor(a.data * c, _parents=(a,), _backward=lambda g: (g * c,))


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product (same shapes, or a scalar on either side)."""
    if a.shape != b.shape and a.data.ndim and b.data.ndim:
        raise _shape_error("mul", a.shape, b.shape)

    def back(g):
        ga = g * b.data
        gb = g * a.data
        if a.data.ndim == 0:
            ga = ga.sum()
        if b.data.ndim == 0:
            gb = gb.sum()
        return ga, gb
    return Tensor(a.data * b.data, _parents=(a, b), _backward=back)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return Tensor(np.where(mask, x.data, 0.0), _parents=(x,), _backward=lambda g: (g * mask,))


def _sigmoid(v: np.ndarray) -> np.ndarray:
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


def sigmoid(x: Tensor) -> Tensor:
    s = _sigmoid(x.data)
    return Tensor(s, _parents=(x,), _backward=lambda g: (g * s * (1 - s),))


def tanh(x: Tensor) -> Tensor:
    t = np.tanh(x.data)
    return Tensor(t, _parents=(x,), _backward=lambda g: (g * (1 - t * t),))


def _softmax(v: np.ndarray) -> np.ndarray:
    z = v - v.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax(x: Tensor) -> Tensor:
    """Row-wise softmax of a 2-D tensor."""
    s = _softmax(x.data)

    def back(g):
        return (s * (g - (g * s).sum(axis=-1, keepdims=True)),)
    return Tensor(s, _parents=(x,), _backward=back)


def mean_rows(x: Tensor) -> Tensor:
    """Column-wise mean over the rows of a 2-D tensor -> 1-D."""
    n = x.shape[0]
    if n == 0:
        raise ShapeError("mean_rows: empty input")
    return Tensor(x.data.mean(axis=0), _parents=(x,),
                  _backward=lambda g: (np.broadcast_to(g / n, x.shape),))


def concat(xs: Sequence[Tensor], axis: int = 1) -> Tensor:
    if not xs:
        raise ShapeError("concat: no inputs")
    ref = xs[0].shape
    for x in xs[1:]:
        if len(x.shape) != len(ref) or any(
                d1 != d2 for i, (d1, d2) in enumerate(zip(ref, x.shape)) if i != axis % len(ref)):
            raise _shape_error("concat", ref, x.shape)
    sizes = [x.shape[axis] for x in xs]
    cuts = np.cumsum(sizes)[:-1]

    def back(g):
        return tuple(np.split(g, cuts, axis=axis))
    return Tensor(np.concatenate([x.data for x in xs], axis=axis), _parents=tuple(xs), _backward=back)


def stack_rows(xs: Sequence[Tensor]) -> Tensor:
    """Stack 1-D tensors of equal length into a 2-D tensor."""
    for x in xs[1:]:
        if x.shape != xs[0].shape:
            raise _shape_error("stack_rows", xs[0].shape, x.shape)
    return Tensor(np.stack([x.data for x in xs]), _parents=tuple(xs),
                  _backward=lambda g: tuple(g[i] for i in range(len(xs))))


def batchnorm(x: Tensor, gamma: Tensor, beta: Tensor, running_mean: np.ndarray,
              running_var: np.ndarray, training: bool, momentum: float = 0.9,
              eps: float = 1e-5) -> Tensor:
    """Batch normalisation over the rows of ``x``. In training mode the running
    statistics are updated in place as ``momentum * old + (1 - momentum) * batch``."""
    if x.data.ndim != 2 or gamma.shape != (x.shape[1],) or beta.shape != (x.shape[1],):
        raise _shape_error("batchnorm", x.shape, gamma.shape)
    if not training:
        inv = 1.0 / np.sqrt(running_var + eps)
        xhat = (x.data - running_mean) * inv
        out = xhat * gamma.data + beta.data

        def back_eval(g):
            return g * gamma.data * inv, (g * xhat).sum(axis=0), g.sum(axis=0)
        return Tensor(out, _parents=(x, gamma, beta), _backward=back_eval)

    n = x.shape[0]
    mu = x.data.mean(axis=0)
    var = x.data.var(axis=0)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    running_mean *= momentum
    running_mean += (1 - momentum) * mu
    running_var *= momentum
    running_var += (1 - momentum) * (var * n / max(n - 1, 1))

    def back(g):
        gx_hat = g * gamma.data
        gx = inv / n * (n * gx_hat - gx_hat.sum(axis=0) - xhat * (gx_hat * xhat).sum(axis=0))
        return gx, (g * xhat).sum(axis=0), g.sum(axis=0)
    return Tensor(xhat * gamma.data + beta.data, _parents=(x, gamma, beta), _backward=back)


def dropout(x: Tensor, p: float, training: bool, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; identity in eval mode or when ``p == 0``."""
    if not training or p == 0:
        return x
    if not 0 <= p < 1:
        raise ValueError("dropout probability must be in [0, 1)")
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    return Tensor(x.data * mask, _parents=(x,), _backward=lambda g: (g * mask,))


def gru_cell(x: Tensor, h: Tensor, W: Tensor, U: Tensor, b: Tensor) -> Tensor:
    """One GRU step for a batch.

    ``W`` is (in, 3H), ``U`` is (H, 3H), ``b`` is (3H,), gate blocks ordered
    update, reset, candidate::

        z  = sigmoid(x W_z + h U_z + b_z)
        r  = sigmoid(x W_r + h U_r + b_r)
        h~ = tanh(x W_h + (r * h) U_h + b_h)
        h' = (1 - z) * h + z * h~
    """
    H = h.shape[1]
    if (x.data.ndim != 2 or W.shape != (x.shape[1], 3 * H) or U.shape != (H, 3 * H)
            or b.shape != (3 * H,) or h.shape[0] != x.shape[0]):
        raise ShapeError(f"gru_cell: x {x.shape}, h {h.shape}, W {W.shape}, U {U.shape}, b {b.shape}")
    xw = x.data @ W.data + b.data
    hu = h.data @ U.data[:, :2 * H]
    z = _sigmoid(xw[:, :H] + hu[:, :H])
    r = _sigmoid(xw[:, H:2 * H] + hu[:, H:])
    rh = r * h.data
    hc = np.tanh(xw[:, 2 * H:] + rh @ U.data[:, 2 * H:])
    out = (1 - z) * h.data + z * hc

    def back(g):
        dz = g * (hc - h.data)
        da_h = g * z * (1 - hc * hc)
        drh = da_h @ U.data[:, 2 * H:].T
        da_z = dz * z * (1 - z)
        da_r = drh * h.data * r * (1 - r)
        da = np.concatenate([da_z, da_r, da_h], axis=1)
        dW = x.data.T @ da
        db = da.sum(axis=0)
        dU = np.concatenate([h.data.T @ da[:, :2 * H], rh.T @ da_h], axis=1)
        dx = da @ W.data.T
        dh = g * (1 - z) + drh * r + da[:, :2 * H] @ U.data[:, :2 * H].T
        return dx, dh, dW, dU, db
    return Tensor(out, _parents=(x, h, W, U, b), _backward=back)


# --- losses -----------------------------------------------------------------

def class_weights(labels: Iterable[int], num_classes: int) -> np.ndarray:
    """1/sqrt(count) per class index; 0 for classes absent from ``labels``."""
    counts = np.bincount(np.asarray(list(labels), dtype=np.int64), minlength=num_classes)
    if counts.shape[0] > num_classes:
        raise ValueError("label outside class range")
    w = np.zeros(num_classes)
    nz = counts > 0
    w[nz] = 1.0 / np.sqrt(counts[nz])
    return w


def weighted_cross_entropy(scores: Tensor, targets, weights) -> Tensor:
    """-(1/bs) * sum_i w[y_i] * log(softmax(scores_i)[y_i]); probabilities are
    clamped below at 1e-12."""
    y = np.asarray(targets, dtype=np.int64)
    w = np.asarray(weights, dtype=np.float64)
    bs, C = scores.shape
    if y.shape != (bs,):
        raise _shape_error("weighted_cross_entropy", scores.shape, y.shape)
    if y.size and (y.min() < 0 or y.max() >= C):
        raise ValueError(f"target out of range 0..{C - 1}")
    if w.shape != (C,):
        raise _shape_error("weighted_cross_entropy", scores.shape, w.shape)
    p = _softmax(scores.data)
    rows = np.arange(bs)
    py = p[rows, y]
    clamped = py < 1e-12
    wy = w[y]
    loss = -(wy * np.log(np.maximum(py, 1e-12))).sum() / bs

    def back(g):
        d = p.copy()
        d[rows, y] -= 1.0
        d *= (wy * ~clamped / bs)[:, None]
        return (d * g,)
    return Tensor(loss, _parents=(scores,), _backward=back)


# --- modules ----------------------------------------------------------------

class Module:
    training = True

    def named_parameters(self) -> dict[str, Tensor]:
        out = {}
        for name, v in vars(self).items():
            if isinstance(v, Tensor) and v.requires_grad:
                out[name] = v
            elif isinstance(v, Module):
                out.update({f"{name}.{k}": t for k, t in v.named_parameters().items()})
            elif isinstance(v, list) and v and isinstance(v[0], Module):
                for i, m in enumerate(v):
                    out.update({f"{name}.{i}.{k}": t for k, t in m.named_parameters().items()})
        return out

    def named_buffers(self) -> dict[str, np.ndarray]:
        out = {}
        for name, v in vars(self).items():
            if isinstance(v, Module):
                out.update({f"{name}.{k}": t for k, t in v.named_buffers().items()})
            elif isinstance(v, list) and v and isinstance(v[0], Module):
                for i, m in enumerate(v):
                    out.update({f"{name}.{i}.{k}": t for k, t in m.named_buffers().items()})
        out.update(getattr(self, "_buffers", {}))
        return out

    def state(self) -> dict[str, np.ndarray]:
        st = {k: t.data for k, t in self.named_parameters().items()}
        st.update(self.named_buffers())
        return st

    def load_state(self, st: Mapping[str, np.ndarray]) -> None:
        params = self.named_parameters()
        bufs = self.named_buffers()
        for k, v in st.items():
            if k in params:
                target = params[k].data
            elif k in bufs:
                target = bufs[k]
            else:
                raise KeyError(f"unexpected state entry {k!r}")
            if target.shape != np.shape(v):
                raise _shape_error(f"load_state[{k}]", target.shape, np.shape(v))
            target[...] = v

    def train(self, mode: bool = True):
        self.training = mode
        for v in vars(self).values():
            if isinstance(v, Module):
                v.train(mode)
            elif isinstance(v, list):
                for m in v:
                    if isinstance(m, Module):
                        m.train(mode)
        return self

    def eval(self):
        return self.train(False)


class Linear(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator):
        bound = 1.0 / np.sqrt(n_in)
        self.W = parameter(rng.uniform(-bound, bound, (n_in, n_out)))
        self.b = parameter(rng.uniform(-bound, bound, n_out))

    def __call__(self, x: Tensor) -> Tensor:
        return add(matmul(x, self.W), self.b)


class BatchNorm(Module):
    def __init__(self, n: int, momentum: float = 0.9):
        self.gamma = parameter(np.ones(n))
        self.beta = parameter(np.zeros(n))
        self.momentum = momentum
        self._buffers = {"running_mean": np.zeros(n), "running_var": np.ones(n)}

    def __call__(self, x: Tensor) -> Tensor:
        return batchnorm(x, self.gamma, self.beta, self._buffers["running_mean"],
                         self._buffers["running_var"], self.training, self.momentum)


class GRU(Module):
    """Stacked GRU over a (batch, time, features) array; returns the last
    hidden state of the top layer."""

    def __init__(self, n_in: int, hidden: int, layers: int, rng: np.random.Generator):
        self.hidden = hidden
        self.cells = [_GRUParams(n_in if i == 0 else hidden, hidden, rng) for i in range(layers)]

    def __call__(self, seq: np.ndarray | Sequence[Tensor]) -> Tensor:
        if isinstance(seq, np.ndarray):
            steps = [Tensor(seq[:, t, :]) for t in range(seq.shape[1])]
        else:
            steps = list(seq)
        if not steps:
            raise ShapeError("GRU: empty sequence")
        bs = steps[0].shape[0]
        for cell in self.cells:
            h = Tensor(np.zeros((bs, self.hidden)))
            outs = []
            for x in steps:
                h = gru_cell(x, h, cell.W, cell.U, cell.b)
                outs.append(h)
            steps = outs
        return steps[-1]


class _GRUParams(Module):
    def __init__(self, n_in: int, hidden: int, rng: np.random.Generator):
        bound = 1.0 / np.sqrt(hidden)
        self.W = parameter(rng.uniform(-bound, bound, (n_in, 3 * hidden)))
        self.U = parameter(rng.uniform(-bound, bound, (hidden, 3 * hidden)))
        self.b = parameter(rng.uniform(-bound, bound, 3 * hidden))


# --- optimisation -----------------------------------------------------------

@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_step(params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray | None],
              state: AdamState, lr: float) -> None:
    """In-place Adam update with bias correction."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1 - b1 ** state.t
    c2 = 1 - b2 ** state.t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p)
        if g.shape != p.shape:
            raise _shape_error(f"adam[{name}]", p.shape, g.shape)
        m = state.m.setdefault(name, np.zeros_like(p))
        v = state.v.setdefault(name, np.zeros_like(p))
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


class Adam:
    def __init__(self, params: Mapping[str, Tensor], lr: float = 0.003):
        self.params = dict(params)
        self.lr = lr
        self.state = AdamState()

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def step(self) -> None:
        adam_step({k: p.data for k, p in self.params.items()},
                  {k: p.grad for k, p in self.params.items()}, self.state, self.lr)


# --- verification -----------------------------------------------------------

def gradient_check(loss_fn: Callable[[], Tensor], params: Mapping[str, Tensor],
                   eps: float = 1e-5, max_coords: int = 200,
                   rng: np.random.Generator | None = None, floor: float = 1e-6) -> float:
    """Max relative error between backprop and central differences.

    ``loss_fn`` must be deterministic (eval mode, no dropout). Up to
    ``max_coords`` coordinates are checked, spread over all parameters; the
    relative error of one coordinate is ``|a - n| / max(|a|, |n|, floor)``.
    """
    rng = rng or np.random.default_rng(0)
    for p in params.values():
        p.grad = None
    loss_fn().backward()
    analytic = {k: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
                for k, p in params.items()}
    coords = [(k, i) for k, p in params.items() for i in range(p.data.size)]
    if len(coords) > max_coords:
        pick = rng.choice(len(coords), size=max_coords, replace=False)
        coords = [coords[j] for j in sorted(pick)]
    worst = 0.0
    for k, i in coords:
        flat = params[k].data.reshape(-1)
        old = flat[i]
        flat[i] = old + eps
        up = float(loss_fn().data.reshape(-1)[0])
        flat[i] = old - eps
        down = float(loss_fn().data.reshape(-1)[0])
        flat[i] = old
        num = (up - down) / (2 * eps)
        a = float(analytic[k].reshape(-1)[i])
        worst = max(worst, abs(a - num) / max(abs(a), abs(num), floor))
    for p in params.values():
        p.grad = None
    return worst


# --- serialisation ----------------------------------------------------------

MAGIC = b"CLIPNN1"


def save_weights(state: Mapping[str, np.ndarray], header: Mapping | None = None) -> bytes:
    """``CLIPNN1`` magic, a JSON header (u32 length + UTF-8), a u32 entry count,
    then per entry: u32 name length, name, u32 rank, u32 dims, float64 LE values."""
    buf = io.BytesIO()
    buf.write(MAGIC)
    head = json.dumps(dict(header or {}), sort_keys=True).encode()
    buf.write(struct.pack("<I", len(head)))
    buf.write(head)
    buf.write(struct.pack("<I", len(state)))
    for name in sorted(state):
        arr = np.ascontiguousarray(state[name], dtype="<f8")
        raw = name.encode()
        buf.write(struct.pack("<I", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<I", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(arr.tobytes())
    return buf.getvalue()


def load_weights(blob: bytes) -> tuple[dict[str, np.ndarray], dict]:
    if not blob.startswith(MAGIC):
        raise ValueError("not a CLIPNN1 weight file")
    pos = len(MAGIC)

    def take(fmt):
        nonlocal pos
        vals = struct.unpack_from(fmt, blob, pos)
        pos += struct.calcsize(fmt)
        return vals

    (hlen,) = take("<I")
    header = json.loads(blob[pos:pos + hlen].decode())
    pos += hlen
    (count,) = take("<I")
    state = {}
    for _ in range(count):
        (nlen,) = take("<I")
        name = blob[pos:pos + nlen].decode()
        pos += nlen
        (rank,) = take("<I")
        shape = take(f"<{rank}I") if rank else ()
        n = int(np.prod(shape)) if shape else 1
        state[name] = np.frombuffer(blob, dtype="<f8", count=n, offset=pos).reshape(shape).copy()
        pos += 8 * n
    return state, header
