"""
Numerics - dense float64 tensors with reverse-mode differentiation
==================================================================

Just enough tensor math to train the toy decoder:
1. Tensor: a numpy float64 array plus an optional gradient
2. ComputationTape: ordered record of every differentiable op, one per thread
3. Ops: matmul, add, mul, scale, transpose, rmsnorm, silu, embedding lookup,
   row/column splicing, masked softmax, causal attention, cross-entropy
4. Adam: parameter update applied after backward()

All data is 64-bit. matmul accumulates over the inner dimension in a fixed
order so results match a naive triple loop bit for bit.
"""

import threading
from contextlib import contextmanager

import numpy as np

from errors import DimensionError, EmbeddingIndexError, NoSupervisedTokens, RankError

IGNORE_INDEX = -100


class Tensor:
    """Float64 array with gradient slot"""

    def __init__(self, data, requires_grad=False):
        self.data = np.array(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)

    @property
    def shape(self):
        return list(self.data.shape)

    def item(self):
        if self.data.size != 1:
            raise RankError(f"item() needs a single value, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self):
        return self.data

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data.copy(), requires_grad=False)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


class TapeNode:
    __slots__ = ("inputs", "output", "backward_fn")

    def __init__(self, inputs, output, backward_fn):
        self.inputs = inputs
        self.output = output
        self.backward_fn = backward_fn


class ComputationTape:
    """Operations recorded in creation order, which is already topological"""

    def __init__(self):
        self.nodes = []

    def record(self, inputs, output, backward_fn):
        self.nodes.append(TapeNode(inputs, output, backward_fn))

    def clear(self):
        self.nodes = []

    def __len__(self):
        return len(self.nodes)


_state = threading.local()


def active_tape():
    """Tape for the calling thread"""
    tape = getattr(_state, "tape", None)
    if tape is None:
        tape = ComputationTape()
        _state.tape = tape
    return tape


def grad_enabled():
    return getattr(_state, "grad_enabled", True)


@contextmanager
def no_grad():
    """Run ops without recording them (inference)"""
    previous = grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


def _record(inputs, output_data, backward_fn):
    requires = grad_enabled() and any(t.requires_grad for t in inputs)
    out = Tensor(output_data, requires_grad=requires)
    if requires:
        active_tape().record(tuple(inputs), out, backward_fn)
    return out


def backward(loss):
    """Accumulate d(loss)/d(t) into every requires_grad ancestor, then clear the tape"""
    if loss.data.ndim != 0:
        raise RankError(f"backward() needs a scalar loss, got shape {loss.shape}")

    tape = active_tape()
    pending = {id(loss): (loss, np.ones_like(loss.data))}

    for node in reversed(tape.nodes):
        entry = pending.pop(id(node.output), None)
        if entry is None:
            continue
        out, grad_out = entry
        out.grad = grad_out if out.grad is None else out.grad + grad_out

        input_grads = node.backward_fn(grad_out)
        for tensor, grad in zip(node.inputs, input_grads):
            if grad is None or not tensor.requires_grad:
                continue
            key = id(tensor)
            if key in pending:
                pending[key] = (tensor, pending[key][1] + grad)
            else:
                pending[key] = (tensor, grad)

    # whatever is left are leaves (parameters, inputs)
    for tensor, grad in pending.values():
        if tensor.requires_grad:
            tensor.grad = grad if tensor.grad is None else tensor.grad + grad

    tape.clear()


def _check_2d(name, *tensors):
    for t in tensors:
        if t.data.ndim != 2:
            raise DimensionError(f"{name} expects 2-D tensors, got shape {t.shape}")


def ordered_matmul(a, b):
    """Matrix product accumulated k = 0..K-1, same order as a triple loop"""
    m, k = a.shape
    out = np.zeros((m, b.shape[1]), dtype=np.float64)
    for j in range(k):
        out += a[:, j:j + 1] * b[j:j + 1, :]
    return out


def matmul(a, b):
    _check_2d("matmul", a, b)
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    a_data, b_data = a.data, b.data

    def backward_fn(g):
        return (
            g @ b_data.T if a.requires_grad else None,
            a_data.T @ g if b.requires_grad else None,
        )

    return _record((a, b), ordered_matmul(a_data, b_data), backward_fn)


def add(a, b):
    """Elementwise sum; b may also be a row vector broadcast over a's rows"""
    if a.shape == b.shape:
        def backward_fn(g):
            return g, g
        return _record((a, b), a.data + b.data, backward_fn)

    if a.data.ndim == 2 and b.data.ndim == 1 and a.shape[1] == b.shape[0]:
        def backward_fn(g):
            return g, g.sum(axis=0)
        return _record((a, b), a.data + b.data, backward_fn)

    raise DimensionError(f"add shape mismatch: {a.shape} + {b.shape}")


def mul(a, b):
    if a.shape != b.shape:
        raise DimensionError(f"mul shape mismatch: {a.shape} * {b.shape}")
    a_data, b_data = a.data, b.data

    def backward_fn(g):
        return g * b_data, g * a_data

    return _record((a, b), a_data * b_data, backward_fn)


def scale(a, factor):
    factor = float(factor)

    def backward_fn(g):
        return (g * factor,)

    return _record((a,), a.data * factor, backward_fn)


def transpose(a):
    _check_2d("transpose", a)

    def backward_fn(g):
        return (g.T,)

    return _record((a,), a.data.T.copy(), backward_fn)


def sum_all(a):
    """Scalar sum of every element"""
    shape = a.data.shape

    def backward_fn(g):
        return (np.full(shape, float(g)),)

    return _record((a,), np.array(a.data.sum()), backward_fn)


def rmsnorm(x, weight, eps=1e-6):
    """Row-wise x / rms(x) * weight"""
    _check_2d("rmsnorm", x)
    if weight.shape != [x.shape[1]]:
        raise DimensionError(f"rmsnorm weight {weight.shape} does not match rows {x.shape}")
    x_data, w_data = x.data, weight.data
    rms = np.sqrt(np.mean(x_data * x_data, axis=1, keepdims=True) + eps)
    x_hat = x_data / rms

    def backward_fn(g):
        d_hat = g * w_data
        dx = (d_hat - x_hat * np.mean(d_hat * x_hat, axis=1, keepdims=True)) / rms
        dw = (g * x_hat).sum(axis=0)
        return dx, dw

    return _record((x, weight), x_hat * w_data, backward_fn)


def silu(x):
    x_data = x.data
    sig = 1.0 / (1.0 + np.exp(-x_data))

    def backward_fn(g):
        return (g * (sig + x_data * sig * (1.0 - sig)),)

    return _record((x,), x_data * sig, backward_fn)


def embedding(table, ids):
    """Row lookup; gradient scatters back onto the looked-up rows"""
    _check_2d("embedding", table)
    idx = np.asarray(ids, dtype=np.int64).reshape(-1)
    n_rows = table.shape[0]
    if idx.size and (idx.min() < 0 or idx.max() >= n_rows):
        raise EmbeddingIndexError(f"row index out of range for table with {n_rows} rows")
    width = table.shape[1]

    def backward_fn(g):
        grad = np.zeros((n_rows, width), dtype=np.float64)
        np.add.at(grad, idx, g)
        return (grad,)

    return _record((table,), table.data[idx].copy(), backward_fn)


# gather_rows is the same operation on an arbitrary matrix
gather_rows = embedding


def concat_rows(tensors):
    tensors = list(tensors)
    _check_2d("concat_rows", *tensors)
    widths = {t.shape[1] for t in tensors}
    if len(widths) != 1:
        raise DimensionError(f"concat_rows width mismatch: {[t.shape for t in tensors]}")
    bounds = np.cumsum([0] + [t.shape[0] for t in tensors])

    def backward_fn(g):
        return tuple(g[bounds[i]:bounds[i + 1]] for i in range(len(tensors)))

    return _record(tensors, np.concatenate([t.data for t in tensors], axis=0), backward_fn)


def concat_cols(tensors):
    tensors = list(tensors)
    _check_2d("concat_cols", *tensors)
    heights = {t.shape[0] for t in tensors}
    if len(heights) != 1:
        raise DimensionError(f"concat_cols height mismatch: {[t.shape for t in tensors]}")
    bounds = np.cumsum([0] + [t.shape[1] for t in tensors])

    def backward_fn(g):
        return tuple(g[:, bounds[i]:bounds[i + 1]] for i in range(len(tensors)))

    return _record(tensors, np.concatenate([t.data for t in tensors], axis=1), backward_fn)


def slice_cols(x, start, stop):
    _check_2d("slice_cols", x)
    shape = x.data.shape

    def backward_fn(g):
        grad = np.zeros(shape, dtype=np.float64)
        grad[:, start:stop] = g
        return (grad,)

    return _record((x,), x.data[:, start:stop].copy(), backward_fn)


def softmax_rows(values, mask=None):
    """Plain numpy row softmax; masked-out entries get probability 0"""
    if mask is None:
        mask = np.ones(values.shape, dtype=bool)
    shifted = np.where(mask, values, -np.inf)
    row_max = np.max(shifted, axis=-1, keepdims=True)
    row_max = np.where(np.isfinite(row_max), row_max, 0.0)
    exps = np.where(mask, np.exp(shifted - row_max), 0.0)
    totals = exps.sum(axis=-1, keepdims=True)
    return np.divide(exps, totals, out=np.zeros_like(exps), where=totals > 0)


def masked_softmax(scores, mask):
    """Row softmax over the entries where mask is True"""
    _check_2d("masked_softmax", scores)
    mask = np.asarray(mask, dtype=bool)
    if list(mask.shape) != scores.shape:
        raise DimensionError(f"mask {list(mask.shape)} does not match scores {scores.shape}")
    probs = softmax_rows(scores.data, mask)

    def backward_fn(g):
        return (probs * (g - np.sum(g * probs, axis=1, keepdims=True)),)

    return _record((scores,), probs, backward_fn)


def causal_mask(n, valid_len=None):
    """Boolean n x n: query i may attend key j when j <= i and j is not padding"""
    mask = np.tril(np.ones((n, n), dtype=bool))
    if valid_len is not None and valid_len < n:
        mask[:, valid_len:] = False
        # padding queries still see the real keys
        mask[valid_len:, :valid_len] = True
    return mask


def causal_attention(q, k, v, mask):
    """softmax(q k^T / sqrt(d)) v with the given boolean mask"""
    if q.shape != k.shape or q.shape[0] != v.shape[0]:
        raise DimensionError(f"attention shape mismatch: q{q.shape} k{k.shape} v{v.shape}")
    scores = scale(matmul(q, transpose(k)), 1.0 / np.sqrt(q.shape[1]))
    return matmul(masked_softmax(scores, mask), v)


def softmax_cross_entropy_ignore(logits, targets, ignore_index=IGNORE_INDEX, reduction="mean"):
    """Cross-entropy over rows whose target is not ignore_index

    Ignored rows never enter the computation, so they affect neither the value
    nor the gradient.
    """
    _check_2d("softmax_cross_entropy_ignore", logits)
    n_rows, vocab = logits.shape
    targets = [int(t) for t in targets]
    if len(targets) != n_rows:
        raise DimensionError(f"{len(targets)} targets for {n_rows} logit rows")
    if reduction not in ("mean", "sum"):
        raise ValueError(f"Unknown loss reduction: {reduction}")

    rows = []
    for n, t in enumerate(targets):
        if t == ignore_index:
            continue
        if not 0 <= t < vocab:
            raise EmbeddingIndexError(f"target {t} at row {n} outside [0, {vocab})")
        rows.append(n)
    if not rows:
        raise NoSupervisedTokens("every target equals the ignore index")

    rows = np.asarray(rows, dtype=np.int64)
    picked = np.asarray([targets[n] for n in rows], dtype=np.int64)
    selected = logits.data[rows]
    row_max = selected.max(axis=1, keepdims=True)
    log_norm = row_max[:, 0] + np.log(np.exp(selected - row_max).sum(axis=1))
    per_row = log_norm - selected[np.arange(len(rows)), picked]
    divisor = float(len(rows)) if reduction == "mean" else 1.0
    value = per_row.sum() / divisor

    def backward_fn(g):
        probs = np.exp(selected - log_norm[:, None])
        probs[np.arange(len(rows)), picked] -= 1.0
        grad = np.zeros((n_rows, vocab), dtype=np.float64)
        grad[rows] = probs * (float(g) / divisor)
        return (grad,)

    return _record((logits,), np.array(value), backward_fn)


class Adam:
    """Adam update (beta1=0.9, beta2=0.999, eps=1e-8) over tensors with grads"""

    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        self.t += 1
        bias1 = 1.0 - self.beta1 ** self.t
        bias2 = 1.0 - self.beta2 ** self.t
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            g = p.grad
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            m_hat = self.m[i] / bias1
            v_hat = self.v[i] / bias2
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self):
        for p in self.params:
            p.grad = None


def numeric_gradient(fn, tensor, h=1e-5, coords=None):
    """Central finite differences of scalar fn() w.r.t. tensor.data

    fn must rebuild its graph on every call. Returns an array shaped like the
    tensor, filled only at `coords` (all coordinates when None).
    """
    grad = np.zeros_like(tensor.data)
    flat = tensor.data.reshape(-1)
    indices = range(flat.size) if coords is None else coords
    with no_grad():
        for i in indices:
            original = flat[i]
            flat[i] = original + h
            plus = fn().item()
            flat[i] = original - h
            minus = fn().item()
            flat[i] = original
            grad.reshape(-1)[i] = (plus - minus) / (2.0 * h)
    return grad
