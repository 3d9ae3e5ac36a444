"""Dense float64 tensors with a recorded reverse-mode tape.

Every operation is a method on :class:`Tape`. When the tape records, each
op pushes a closure that maps the output gradient back onto its inputs;
:meth:`Tape.backward` replays them in reverse. Leaf parameters accumulate
gradients in place, so two backward passes add up exactly.

Shapes are explicit. The leading axes of an operand are batch axes; the
only implicit broadcasting is a vector bias over rows and a column mask
over features.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import IndexOutOfRange, NonDeterministicLoss, ShapeMismatch

DTYPE = np.float64


class Tensor:
    """A value plus an (optional) gradient buffer."""

    __slots__ = ("value", "grad", "requires_grad", "name")

    def __init__(self, value, requires_grad=False, name=None):
        self.value = np.asarray(value, dtype=DTYPE)
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = g
        else:
            self.grad = self.grad + g

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"<Tensor{label} shape={self.shape}>"


class Parameter(Tensor):
    """A trainable leaf; its gradient buffer always exists."""

    __slots__ = ()

    def __init__(self, value, name):
        super().__init__(np.array(value, dtype=DTYPE), requires_grad=True, name=name)
        self.grad = np.zeros_like(self.value)

    def _accumulate(self, g):
        self.grad += g


def zero_grads(params: Iterable[Parameter]) -> None:
    for p in params:
        p.grad[...] = 0.0


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _check_same(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeMismatch(f"{op}: {a.shape} vs {b.shape}")


def _sigmoid(x):
    # Split by sign so exp never overflows.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax_array(z: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    """Row softmax over the last axis; masked entries get exactly zero."""
    z = np.asarray(z, dtype=DTYPE)
    if mask is not None:
        z = np.where(mask, z, -np.inf)
    m = np.max(z, axis=-1, keepdims=True)
    e = np.exp(z - m)
    return e / np.sum(e, axis=-1, keepdims=True)


def log_softmax_array(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=DTYPE)
    m = np.max(z, axis=-1, keepdims=True)
    shifted = z - m
    return shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))


class Tape:
    """Records operations for one forward pass.

    ``Tape(record=False)`` evaluates the same ops without keeping closures,
    which is what decoding uses.
    """

    def __init__(self, record: bool = True):
        self.record = record
        self._ops: list[Callable[[], None]] = []

    def __len__(self):
        return len(self._ops)

    def _out(self, value, inputs: Sequence[Tensor]) -> Tensor:
        needs = self.record and any(t.requires_grad for t in inputs)
        return Tensor(value, requires_grad=needs)

    def _push(self, out: Tensor, fn: Callable[[np.ndarray], None]) -> Tensor:
        if out.requires_grad:
            self._ops.append(lambda: out.grad is not None and fn(out.grad))
        return out

    def backward(self, loss: Tensor, seed: float = 1.0) -> None:
        if loss.value.size != 1:
            raise ShapeMismatch(f"backward needs a scalar loss, got {loss.shape}")
        loss.grad = np.full_like(loss.value, seed)
        for fn in reversed(self._ops):
            fn()
        self._ops.clear()

    # ---- linear algebra -------------------------------------------------

    def affine(self, x, W: Tensor, b: Tensor | None = None) -> Tensor:
        """``y = W x + b`` applied to every row of ``x``."""
        x = _as_tensor(x)
        if x.shape[-1] != W.shape[1] or (b is not None and b.shape != (W.shape[0],)):
            raise ShapeMismatch(
                f"affine: x{x.shape} W{W.shape} b{None if b is None else b.shape}"
            )
        y = x.value @ W.value.T
        if b is not None:
            y = y + b.value
        inputs = (x, W) if b is None else (x, W, b)
        out = self._out(y, inputs)

        def back(g):
            if x.requires_grad:
                x._accumulate(g @ W.value)
            if W.requires_grad:
                g2 = g.reshape(-1, g.shape[-1])
                W._accumulate(g2.T @ x.value.reshape(-1, x.shape[-1]))
            if b is not None and b.requires_grad:
                b._accumulate(g.reshape(-1, g.shape[-1]).sum(axis=0))

        return self._push(out, back)

    # ---- elementwise ----------------------------------------------------

    def add(self, a: Tensor, b: Tensor) -> Tensor:
        _check_same(a, b, "add")
        out = self._out(a.value + b.value, (a, b))

        def back(g):
            if a.requires_grad:
                a._accumulate(g)
            if b.requires_grad:
                b._accumulate(g)

        return self._push(out, back)

    def mul(self, a: Tensor, b: Tensor) -> Tensor:
        _check_same(a, b, "mul")
        out = self._out(a.value * b.value, (a, b))

        def back(g):
            if a.requires_grad:
                a._accumulate(g * b.value)
            if b.requires_grad:
                b._accumulate(g * a.value)

        return self._push(out, back)

    def sigmoid(self, a: Tensor) -> Tensor:
        y = _sigmoid(a.value)
        out = self._out(y, (a,))
        return self._push(out, lambda g: a._accumulate(g * y * (1.0 - y)))

    def tanh(self, a: Tensor) -> Tensor:
        y = np.tanh(a.value)
        out = self._out(y, (a,))
        return self._push(out, lambda g: a._accumulate(g * (1.0 - y * y)))

    def interpolate(self, z: Tensor, a: Tensor, b: Tensor) -> Tensor:
        """``(1 - z) * a + z * b``, the GRU state mix."""
        _check_same(z, a, "interpolate")
        _check_same(a, b, "interpolate")
        out = self._out((1.0 - z.value) * a.value + z.value * b.value, (z, a, b))

        def back(g):
            if z.requires_grad:
                z._accumulate(g * (b.value - a.value))
            if a.requires_grad:
                a._accumulate(g * (1.0 - z.value))
            if b.requires_grad:
                b._accumulate(g * z.value)

        return self._push(out, back)

    def where_rows(self, keep: np.ndarray, a: Tensor, b: Tensor) -> Tensor:
        """Row ``i`` of the result is ``a[i]`` where ``keep[i]`` else ``b[i]``."""
        _check_same(a, b, "where_rows")
        keep = np.asarray(keep, dtype=bool)
        if keep.shape != a.shape[:1]:
            raise ShapeMismatch(f"where_rows: mask {keep.shape} vs rows {a.shape[:1]}")
        col = keep[:, None]
        out = self._out(np.where(col, a.value, b.value), (a, b))

        def back(g):
            if a.requires_grad:
                a._accumulate(np.where(col, g, 0.0))
            if b.requires_grad:
                b._accumulate(np.where(col, 0.0, g))

        return self._push(out, back)

    # ---- structural -----------------------------------------------------

    def concat(self, parts: Sequence[Tensor], axis: int = -1) -> Tensor:
        parts = [_as_tensor(p) for p in parts]
        out = self._out(np.concatenate([p.value for p in parts], axis=axis), parts)
        ax = axis % out.value.ndim
        bounds = np.cumsum([0] + [p.shape[ax] for p in parts])

        def back(g):
            for p, lo, hi in zip(parts, bounds[:-1], bounds[1:]):
                if p.requires_grad:
                    idx = [slice(None)] * g.ndim
                    idx[ax] = slice(lo, hi)
                    p._accumulate(g[tuple(idx)])

        return self._push(out, back)

    def stack(self, parts: Sequence[Tensor], axis: int = 1) -> Tensor:
        out = self._out(np.stack([p.value for p in parts], axis=axis), parts)

        def back(g):
            for i, p in enumerate(parts):
                if p.requires_grad:
                    p._accumulate(np.take(g, i, axis=axis))

        return self._push(out, back)

    def take(self, a: Tensor, index, axis: int = 1) -> Tensor:
        """Select one slice (integer index) or a range (slice) along ``axis``."""
        idx = [slice(None)] * a.value.ndim
        idx[axis] = index
        idx = tuple(idx)
        out = self._out(a.value[idx], (a,))

        def back(g):
            full = np.zeros_like(a.value)
            full[idx] = g
            a._accumulate(full)

        return self._push(out, back)

    def reshape(self, a: Tensor, shape) -> Tensor:
        out = self._out(a.value.reshape(shape), (a,))
        return self._push(out, lambda g: a._accumulate(g.reshape(a.shape)))

    def permute_rows(self, a: Tensor, order: np.ndarray, axis: int = 1) -> Tensor:
        """Gather along ``axis`` with a per-batch-row permutation ``order[b]``."""
        order = np.asarray(order)
        rows = np.arange(a.shape[0])[:, None]
        if axis != 1:
            raise ShapeMismatch("permute_rows only supports axis=1")
        out = self._out(a.value[rows, order], (a,))

        def back(g):
            full = np.zeros_like(a.value)
            np.add.at(full, (rows, order), g)
            a._accumulate(full)

        return self._push(out, back)

    def embed(self, E: Tensor, ids) -> Tensor:
        ids = np.asarray(ids, dtype=np.int64)
        if ids.size and (ids.min() < 0 or ids.max() >= E.shape[0]):
            raise IndexOutOfRange(f"embedding id outside [0, {E.shape[0]})")
        out = self._out(E.value[ids], (E,))

        def back(g):
            full = np.zeros_like(E.value)
            np.add.at(full, ids.reshape(-1), g.reshape(-1, E.shape[1]))
            E._accumulate(full)

        return self._push(out, back)

    def sum(self, a: Tensor) -> Tensor:
        out = self._out(np.sum(a.value), (a,))
        return self._push(out, lambda g: a._accumulate(np.broadcast_to(g, a.shape).copy()))

    # ---- normalisers and losses -----------------------------------------

    def softmax(self, z: Tensor, mask: np.ndarray | None = None) -> Tensor:
        """Softmax over the last axis; ``mask`` False entries get exactly 0."""
        if z.value.size == 0:
            raise ShapeMismatch("softmax of an empty tensor")
        y = softmax_array(z.value, mask)
        out = self._out(y, (z,))

        def back(g):
            inner = np.sum(g * y, axis=-1, keepdims=True)
            z._accumulate(y * (g - inner))

        return self._push(out, back)

    def cross_entropy(self, logits: Tensor, gold, weights=None) -> Tensor:
        """Weighted sum over rows of ``-log softmax(logits)[gold]``.

        A 1-d ``logits`` with scalar ``gold`` is treated as a single row.
        """
        single = logits.value.ndim == 1
        z = logits.value[None] if single else logits.value
        gold = np.atleast_1d(np.asarray(gold, dtype=np.int64))
        if gold.shape != z.shape[:1]:
            raise ShapeMismatch(f"cross_entropy: gold {gold.shape} vs logits {z.shape}")
        if gold.size and (gold.min() < 0 or gold.max() >= z.shape[1]):
            raise IndexOutOfRange(f"gold id outside [0, {z.shape[1]})")
        w = np.ones(len(gold)) if weights is None else np.asarray(weights, dtype=DTYPE)
        logp = log_softmax_array(z)
        rows = np.arange(len(gold))
        out = self._out(-np.sum(w * logp[rows, gold]), (logits,))

        def back(g):
            d = np.exp(logp)
            d[rows, gold] -= 1.0
            d *= (g * w)[:, None]
            logits._accumulate(d[0] if single else d)

        return self._push(out, back)

    # ---- attention ------------------------------------------------------

    def additive_scores(self, query: Tensor, keys: Tensor, v: Tensor) -> Tensor:
        """``e[b, p] = v . tanh(query[b] + keys[b, p])``."""
        B, P, A = keys.shape
        if query.shape != (B, A) or v.shape != (A,):
            raise ShapeMismatch(f"additive_scores: q{query.shape} k{keys.shape} v{v.shape}")
        t = np.tanh(query.value[:, None, :] + keys.value)
        out = self._out(t @ v.value, (query, keys, v))

        def back(g):
            gp = g[:, :, None] * v.value * (1.0 - t * t)
            if query.requires_grad:
                query._accumulate(gp.sum(axis=1))
            if keys.requires_grad:
                keys._accumulate(gp)
            if v.requires_grad:
                v._accumulate(np.einsum("bp,bpa->a", g, t))

        return self._push(out, back)

    def weighted_sum(self, weights, values: Tensor) -> Tensor:
        """``c[b] = sum_p weights[b, p] * values[b, p]``."""
        weights = _as_tensor(weights)
        if weights.shape != values.shape[:2]:
            raise ShapeMismatch(f"weighted_sum: w{weights.shape} v{values.shape}")
        out = self._out(np.einsum("bp,bpd->bd", weights.value, values.value), (weights, values))

        def back(g):
            if weights.requires_grad:
                weights._accumulate(np.einsum("bd,bpd->bp", g, values.value))
            if values.requires_grad:
                values._accumulate(weights.value[:, :, None] * g[:, None, :])

        return self._push(out, back)


def grad_check(
    loss_fn: Callable[[Tape], Tensor],
    params: Sequence[Parameter],
    step: float = 1e-5,
) -> float:
    """Max relative error between tape gradients and central differences.

    ``loss_fn`` builds the loss on the tape it is handed. Parameter values
    are restored before returning; gradient buffers hold the analytic
    gradient afterwards.
    """
    params = list(params)
    zero_grads(params)
    tape = Tape()
    loss = loss_fn(tape)
    tape.backward(loss)
    base = float(loss.value)
    again = float(loss_fn(Tape(record=False)).value)
    if base != again:
        raise NonDeterministicLoss(f"{base!r} != {again!r}")

    worst = 0.0
    for p in params:
        flat = p.value.reshape(-1)
        analytic = p.grad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = float(loss_fn(Tape(record=False)).value)
            flat[i] = orig - step
            down = float(loss_fn(Tape(record=False)).value)
            flat[i] = orig
            numeric = (up - down) / (2.0 * step)
            a = analytic[i]
            denom = max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, abs(a - numeric) / denom)
    return worst
