"""Minimal reverse-mode automatic differentiation over numpy arrays.

Double precision throughout. Each Tensor records its parents and a
closure that scatters its output gradient back to them; backward() walks
the recorded trace in reverse topological order. The recurrent encoder
is a single fused node with a hand-written backward pass so per-instance
graphs stay small.
"""

from __future__ import annotations

import math
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import (
    EmptySequenceError,
    NumericError,
    ShapeError,
    VocabularyError,
)


class Tensor:
    __slots__ = ("data", "grad", "parents", "_backward", "name")

    def __init__(self, data, parents=(), backward=None, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.parents = parents
        self._backward = backward
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        tag = f" {self.name}" if self.name else ""
        return f"<Tensor{tag} {self.data.shape}>"

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self):
        if self.data.shape != ():
            raise ShapeError("backward() requires a scalar output")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node.parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones(())
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # convenience operators (Tensor or float on the right)
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, scale(other, -1.0) if isinstance(other, Tensor)
                   else -other)

    def __mul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def constant(x, name=None) -> Tensor:
    return Tensor(np.asarray(x, dtype=np.float64), name=name)


def zeros(shape) -> Tensor:
    return Tensor(np.zeros(shape))


# ---------------------------------------------------------------------------
# Elementwise and linear-algebra kernels
# ---------------------------------------------------------------------------

def add(a: Tensor, b) -> Tensor:
    b = _wrap(b)
    if a.data.shape != b.data.shape:
        raise ShapeError(f"add: {a.data.shape} vs {b.data.shape}")
    out = Tensor(a.data + b.data, (a, b))
    def backward(g):
        a._accumulate(g)
        b._accumulate(g)
    out._backward = backward
    return out


def mul(a: Tensor, b) -> Tensor:
    b = _wrap(b)
    if a.data.shape != b.data.shape:
        raise ShapeError(f"mul: {a.data.shape} vs {b.data.shape}")
    out = Tensor(a.data * b.data, (a, b))
    def backward(g):
        a._accumulate(g * b.data)
        b._accumulate(g * a.data)
    out._backward = backward
    return out


def scale(a: Tensor, c: float) -> Tensor:
    out = Tensor(a.data * c, (a,))
    def backward(g):
        a._accumulate(g * c)
    out._backward = backward
    return out


def smul(vec: Tensor, s: Tensor) -> Tensor:
    """Vector scaled by a 0-d tensor."""
    if s.data.shape != ():
        raise ShapeError("smul scalar operand must be 0-d")
    out = Tensor(vec.data * s.data, (vec, s))
    def backward(g):
        vec._accumulate(g * s.data)
        s._accumulate(np.sum(g * vec.data))
    out._backward = backward
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim not in (1, 2):
        raise ShapeError(f"matmul: got {a.data.shape} @ {b.data.shape}")
    if a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul: {a.data.shape} @ {b.data.shape}")
    out = Tensor(a.data @ b.data, (a, b))
    def backward(g):
        if b.data.ndim == 1:
            a._accumulate(np.outer(g, b.data))
            b._accumulate(a.data.T @ g)
        else:
            a._accumulate(g @ b.data.T)
            b._accumulate(a.data.T @ g)
    out._backward = backward
    return out


def linear(w: Tensor, x: Tensor, b: Tensor | None = None) -> Tensor:
    """Fused w @ x + b for a vector x."""
    if x.data.ndim != 1 or w.data.ndim != 2 or w.data.shape[1] != x.data.shape[0]:
        raise ShapeError(f"linear: {w.data.shape} @ {x.data.shape}")
    data = w.data @ x.data
    if b is not None:
        data = data + b.data
    parents = (w, x, b) if b is not None else (w, x)
    out = Tensor(data, parents)
    def backward(g):
        w._accumulate(np.outer(g, x.data))
        x._accumulate(w.data.T @ g)
        if b is not None:
            b._accumulate(g)
    out._backward = backward
    return out


def concat(parts: Sequence[Tensor]) -> Tensor:
    for p in parts:
        if p.data.ndim != 1:
            raise ShapeError("concat expects 1-d tensors")
    out = Tensor(np.concatenate([p.data for p in parts]), tuple(parts))
    sizes = [p.data.shape[0] for p in parts]
    def backward(g):
        lo = 0
        for p, size in zip(parts, sizes):
            p._accumulate(g[lo:lo + size])
            lo += size
    out._backward = backward
    return out


def stack_scalars(parts: Sequence[Tensor]) -> Tensor:
    for p in parts:
        if p.data.shape != ():
            raise ShapeError("stack_scalars expects 0-d tensors")
    out = Tensor(np.array([p.data for p in parts]), tuple(parts))
    def backward(g):
        for i, p in enumerate(parts):
            p._accumulate(g[i])
    out._backward = backward
    return out


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    out = Tensor(y, (a,))
    def backward(g):
        a._accumulate(g * (1.0 - y * y))
    out._backward = backward
    return out


def sigmoid(a: Tensor) -> Tensor:
    y = _sigmoid(a.data)
    out = Tensor(y, (a,))
    def backward(g):
        a._accumulate(g * y * (1.0 - y))
    out._backward = backward
    return out


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sum_all(a: Tensor) -> Tensor:
    out = Tensor(np.sum(a.data), (a,))
    def backward(g):
        a._accumulate(np.full_like(a.data, g))
    out._backward = backward
    return out


def pick(a: Tensor, index: int) -> Tensor:
    if a.data.ndim != 1:
        raise ShapeError("pick expects a 1-d tensor")
    out = Tensor(a.data[index], (a,))
    def backward(g):
        buf = np.zeros_like(a.data)
        buf[index] = g
        a._accumulate(buf)
    out._backward = backward
    return out


def maxpool(states: Tensor) -> Tensor:
    """Coordinatewise maximum over the sequence axis of a (len, d) tensor."""
    if states.data.ndim != 2:
        raise ShapeError("maxpool expects a (len, d) tensor")
    if states.data.shape[0] == 0:
        raise EmptySequenceError("maxpool over an empty sequence")
    idx = np.argmax(states.data, axis=0)
    out = Tensor(states.data[idx, np.arange(states.data.shape[1])], (states,))
    def backward(g):
        buf = np.zeros_like(states.data)
        buf[idx, np.arange(states.data.shape[1])] = g
        states._accumulate(buf)
    out._backward = backward
    return out


def softmax(a: Tensor) -> Tensor:
    if a.data.ndim != 1 or a.data.shape[0] == 0:
        raise ShapeError("softmax expects a nonempty 1-d tensor")
    y = _softmax(a.data)
    out = Tensor(y, (a,))
    def backward(g):
        a._accumulate(y * (g - np.dot(g, y)))
    out._backward = backward
    return out


def _softmax(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - np.max(x))
    return e / e.sum()


def log_softmax(a: Tensor) -> Tensor:
    x = a.data
    m = np.max(x)
    lse = m + math.log(np.sum(np.exp(x - m)))
    y = x - lse
    out = Tensor(y, (a,))
    def backward(g):
        a._accumulate(g - np.exp(y) * np.sum(g))
    out._backward = backward
    return out


def attention_weights(scores: Sequence[float]) -> list[float]:
    """Numerically stable softmax over plain floats."""
    arr = np.asarray(scores, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ShapeError("attention_weights expects a nonempty list")
    if not np.all(np.isfinite(arr)):
        raise NumericError("attention_weights requires finite scores")
    return _softmax(arr).tolist()


# ---------------------------------------------------------------------------
# Embedding lookup
# ---------------------------------------------------------------------------

def embed(ids: Sequence[int], table: Tensor) -> Tensor:
    vocab = table.data.shape[0]
    for i in ids:
        if not (0 <= i < vocab):
            raise VocabularyError(f"token id {i} outside vocabulary of {vocab}")
    idx = np.asarray(list(ids), dtype=np.intp)
    out = Tensor(table.data[idx], (table,))
    def backward(g):
        if table.grad is None:
            table.grad = np.zeros_like(table.data)
        np.add.at(table.grad, idx, g)
    out._backward = backward
    return out


# ---------------------------------------------------------------------------
# Fused bidirectional recurrent encoder
# ---------------------------------------------------------------------------

def brnn(seq: Tensor, wf: Tensor, wb: Tensor, wo: Tensor, b: Tensor) -> Tensor:
    """Bidirectional tanh recurrence with an affine output layer.

    Forward states fold the previous hidden state with the current input,
    backward states the next one; each output row is an affine map of the
    concatenated pair. Zero boundary states; sequences run at true length.
    The recurrence weights act on the concatenation [state; input] and are
    split into state/input halves so the input projection and the whole
    backward pass batch over timesteps.
    """
    if seq.data.ndim != 2:
        raise ShapeError("brnn expects a (len, d) input")
    length, d = seq.data.shape
    if length < 1:
        raise EmptySequenceError("brnn over an empty sequence")
    if wf.data.shape != (d, 2 * d) or wb.data.shape != (d, 2 * d):
        raise ShapeError("brnn recurrence weights must be (d, 2d)")
    if wo.data.shape != (d, 2 * d) or b.data.shape != (d,):
        raise ShapeError("brnn output layer must be (d, 2d) and (d,)")

    x = seq.data
    wf_h, wf_x = wf.data[:, :d], wf.data[:, d:]
    wb_h, wb_x = wb.data[:, :d], wb.data[:, d:]

    xf = x @ wf_x.T
    hf = np.zeros((length + 1, d))
    for t in range(length):
        hf[t + 1] = np.tanh(wf_h @ hf[t] + xf[t])
    xb = x @ wb_x.T
    hb = np.zeros((length + 1, d))
    for t in range(length - 1, -1, -1):
        hb[t] = np.tanh(wb_h @ hb[t + 1] + xb[t])

    hfb = np.concatenate((hf[1:], hb[:length]), axis=1)  # (len, 2d)
    out_data = hfb @ wo.data.T + b.data
    out = Tensor(out_data, (seq, wf, wb, wo, b))

    def backward(g):
        wo._accumulate(g.T @ hfb)
        b._accumulate(g.sum(axis=0))
        ghfb = g @ wo.data
        ghf, ghb = ghfb[:, :d], ghfb[:, d:]

        gaf = np.empty((length, d))
        carry = np.zeros(d)
        for t in range(length - 1, -1, -1):
            ga = (ghf[t] + carry) * (1.0 - hf[t + 1] * hf[t + 1])
            gaf[t] = ga
            carry = wf_h.T @ ga
        gab = np.empty((length, d))
        carry = np.zeros(d)
        for t in range(length):
            ga = (ghb[t] + carry) * (1.0 - hb[t] * hb[t])
            gab[t] = ga
            carry = wb_h.T @ ga

        wf._accumulate(np.concatenate((gaf.T @ hf[:length], gaf.T @ x), axis=1))
        wb._accumulate(np.concatenate((gab.T @ hb[1:], gab.T @ x), axis=1))
        seq._accumulate(gaf @ wf_x + gab @ wb_x)

    out._backward = backward
    return out


# ---------------------------------------------------------------------------
# Parameters, optimizer, gradient checking
# ---------------------------------------------------------------------------

class ParameterStore:
    """Named trainable tensors with seeded uniform initialization."""

    def __init__(self, rng: np.random.Generator, init_bound: float):
        self.rng = rng
        self.init_bound = init_bound
        self._params: dict[str, Tensor] = {}

    def create(self, name: str, shape: tuple[int, ...]) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter {name!r}")
        data = self.rng.uniform(-self.init_bound, self.init_bound, size=shape)
        t = Tensor(data, name=name)
        self._params[name] = t
        return t

    def create_zeros(self, name: str, shape: tuple[int, ...]) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter {name!r}")
        t = Tensor(np.zeros(shape), name=name)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def items(self):
        return self._params.items()

    def tensors(self) -> list[Tensor]:
        return list(self._params.values())

    def zero_grad(self):
        for t in self._params.values():
            t.grad = None

    def state(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self._params.items()}

    def load_state(self, state: dict[str, np.ndarray]):
        for name, t in self._params.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != t.data.shape:
                raise ShapeError(
                    f"checkpoint shape {arr.shape} != {t.data.shape} for {name}")
            t.data = arr.copy()


def global_grad_norm(params: Iterable[Tensor]) -> float:
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float(np.sum(p.grad * p.grad))
    return math.sqrt(total)


def sgd_step(params: Iterable[Tensor], lr: float, clip_norm: float = 5.0) -> float:
    """One gradient descent step with global-norm clipping; returns the
    pre-clip gradient norm and clears gradients."""
    params = list(params)
    norm = global_grad_norm(params)
    factor = lr
    if clip_norm > 0 and norm > clip_norm:
        factor = lr * (clip_norm / norm)
    for p in params:
        if p.grad is not None:
            p.data -= factor * p.grad
            p.grad = None
    return norm


class GradCheckResult:
    def __init__(self, ok: bool, worst: float, worst_at: str):
        self.ok = ok
        self.worst = worst
        self.worst_at = worst_at

    def __repr__(self):
        status = "pass" if self.ok else "FAIL"
        return f"<GradCheck {status} worst={self.worst:.3e} at {self.worst_at}>"


def grad_check(
    f: Callable[[], Tensor],
    params: Sequence[Tensor],
    eps: float = 1e-4,
    tol: float = 1e-4,
) -> GradCheckResult:
    """Compare reverse-mode gradients against central finite differences.

    Relative error per coordinate is |a - n| / max(1e-8, |a| + |n|).
    A central difference of a double-precision function cannot resolve
    derivatives smaller than ulp(f) / (2 eps); discrepancies below that
    quantization floor count as agreement, not error.
    """
    for p in params:
        p.grad = None
    out = f()
    if not np.isfinite(out.data):
        raise NumericError("grad_check: function value is not finite")
    out.backward()
    analytic = [
        (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
        for p in params
    ]
    fd_floor = 4.0 * float(np.spacing(max(abs(float(out.data)), 1.0))) / (2.0 * eps)

    worst = 0.0
    worst_at = ""
    for pi, p in enumerate(params):
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = float(f().data)
            flat[i] = orig - eps
            lo = float(f().data)
            flat[i] = orig
            if not (math.isfinite(hi) and math.isfinite(lo)):
                raise NumericError("grad_check: non-finite function value")
            numeric = (hi - lo) / (2.0 * eps)
            a = float(analytic[pi].reshape(-1)[i])
            if abs(a - numeric) <= fd_floor:
                continue
            rel = abs(a - numeric) / max(1e-8, abs(a) + abs(numeric))
            if rel > worst:
                worst = rel
                name = p.name or f"param{pi}"
                worst_at = f"{name}[{i}]"
    for p in params:
        p.grad = None
    return GradCheckResult(worst <= tol, worst, worst_at)
