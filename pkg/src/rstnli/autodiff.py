"""Dense reverse-mode differentiation over rank-<=2 float64 arrays.

A `Tape` records primitive applications in execution order; `backward` walks
the records in reverse, accumulating gradients by addition. Only the handful
of primitives the network needs exist: matrix products, broadcasted
add/multiply, concatenation, row means/slices, (masked) row softmax, ELU,
sigmoid, ReLU, log, negation, scalar scaling, transposition, Euclidean
distance, and externally supplied dropout masks. `grad_check` compares any
recorded scalar function against central finite differences.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError, NumericError, ShapeError

_TAPE_STACK: list["Tape | None"] = []


def active_tape() -> "Tape | None":
    return _TAPE_STACK[-1] if _TAPE_STACK else None


class no_grad:
    """Context manager that suspends recording (used by evaluation)."""

    def __enter__(self):
        _TAPE_STACK.append(None)
        return self

    def __exit__(self, *exc):
        _TAPE_STACK.pop()
        return False


class Value:
    """A rank-<=2 float64 array participating in recorded computation."""

    __slots__ = ("data", "requires_grad", "grad", "tape")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.ascontiguousarray(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise ShapeError(f"Value supports rank <= 2, got shape {arr.shape}")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.tape: Tape | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() on non-scalar shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        return f"Value(shape={self.shape}, requires_grad={self.requires_grad})"


def constant(data) -> Value:
    return Value(data, requires_grad=False)


def parameter(data) -> Value:
    return Value(data, requires_grad=True)


class Tape:
    """Ordered record of primitive applications; one backward pass per reset."""

    def __init__(self):
        self._records: list[tuple[Value, tuple[Value, ...], object]] = []
        self._produced: set[int] = set()
        self._consumed = False

    def __enter__(self):
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc):
        _TAPE_STACK.pop()
        return False

    def __len__(self) -> int:
        return len(self._records)

    def record(self, out: Value, inputs: tuple[Value, ...], backward_fn) -> None:
        self._records.append((out, inputs, backward_fn))
        self._produced.add(id(out))
        out.tape = self

    def reset(self) -> None:
        self._records.clear()
        self._produced.clear()
        self._consumed = False

    def run_backward(self, loss: Value) -> dict[Value, np.ndarray]:
        if self._consumed:
            raise ContractError("tape already used for a backward pass; call reset() first")
        if loss.data.shape != (1, 1):
            raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
        self._consumed = True
        grads: dict[int, np.ndarray] = {id(loss): np.ones((1, 1))}
        leaves: dict[Value, np.ndarray] = {}
        for out, inputs, backward_fn in reversed(self._records):
            g_out = grads.get(id(out))
            if g_out is None:
                continue
            contribs = backward_fn(g_out)
            for inp, g in zip(inputs, contribs):
                if g is None or not inp.requires_grad:
                    continue
                key = id(inp)
                if key in grads:
                    grads[key] = grads[key] + g
                else:
                    grads[key] = g
                if key not in self._produced:
                    leaves[inp] = grads[key]
        for out, inputs, _ in self._records:
            out.grad = grads.get(id(out))
            for inp in inputs:
                if inp.requires_grad:
                    inp.grad = grads.get(id(inp))
        loss.grad = grads[id(loss)]
        return leaves


def backward(loss: Value) -> dict[Value, np.ndarray]:
    """Run reverse accumulation from a scalar; returns leaf gradient map."""
    if loss.tape is None:
        raise ContractError("loss was not recorded on any tape")
    return loss.tape.run_backward(loss)


def _finite_or_raise(arr: np.ndarray, op: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{op} produced non-finite values")


def _make(op: str, data: np.ndarray, inputs: tuple[Value, ...], backward_fn) -> Value:
    _finite_or_raise(data, op)
    out = Value(data)
    out.requires_grad = any(v.requires_grad for v in inputs)
    tape = active_tape()
    if tape is not None and out.requires_grad:
        tape.record(out, inputs, backward_fn)
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    if g.shape == shape:
        return g
    if shape[0] == 1 and g.shape[0] != 1:
        g = g.sum(axis=0, keepdims=True)
    if shape[1] == 1 and g.shape[1] != 1:
        g = g.sum(axis=1, keepdims=True)
    return g


def _broadcastable(a: tuple[int, int], b: tuple[int, int]) -> bool:
    return all(x == y or x == 1 or y == 1 for x, y in zip(a, b))


def matmul(a: Value, b: Value) -> Value:
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: {a.shape} @ {b.shape}")
    data = a.data @ b.data

    def back(g):
        return (g @ b.data.T, a.data.T @ g)

    return _make("matmul", data, (a, b), back)


def add(a: Value, b: Value) -> Value:
    if not _broadcastable(a.shape, b.shape):
        raise ShapeError(f"add: {a.shape} + {b.shape}")
    data = a.data + b.data

    def back(g):
        return (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape))

    return _make("add", data, (a, b), back)


def mul(a: Value, b: Value) -> Value:
    if not _broadcastable(a.shape, b.shape):
        raise ShapeError(f"mul: {a.shape} * {b.shape}")
    data = a.data * b.data

    def back(g):
        return (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape))

    return _make("mul", data, (a, b), back)


def neg(a: Value) -> Value:
    return _make("neg", -a.data, (a,), lambda g: (-g,))


def scale(a: Value, c: float) -> Value:
    c = float(c)
    return _make("scale", a.data * c, (a,), lambda g: (g * c,))


def transpose(a: Value) -> Value:
    return _make("transpose", a.data.T.copy(), (a,), lambda g: (g.T,))


def concat(a: Value, b: Value, axis: int = 1) -> Value:
    if axis not in (0, 1):
        raise ShapeError(f"concat: axis must be 0 or 1, got {axis}")
    other = 1 - axis
    if a.shape[other] != b.shape[other]:
        raise ShapeError(f"concat axis={axis}: {a.shape} vs {b.shape}")
    data = np.concatenate([a.data, b.data], axis=axis)
    split = a.shape[axis]

    def back(g):
        if axis == 0:
            return (g[:split, :], g[split:, :])
        return (g[:, :split], g[:, split:])

    return _make("concat", data, (a, b), back)


def slice_rows(a: Value, idx) -> Value:
    idx = np.asarray(idx, dtype=np.intp)
    if idx.ndim != 1:
        raise ShapeError("slice_rows: index list must be 1-D")
    if idx.size and (idx.min() < 0 or idx.max() >= a.shape[0]):
        raise ShapeError(f"slice_rows: index out of range for {a.shape[0]} rows")
    data = a.data[idx, :]

    def back(g):
        ga = np.zeros_like(a.data)
        np.add.at(ga, idx, g)
        return (ga,)

    return _make("slice_rows", data, (a,), back)


def row_mean(a: Value) -> Value:
    n = a.shape[0]
    data = a.data.mean(axis=0, keepdims=True)

    def back(g):
        return (np.repeat(g / n, n, axis=0),)

    return _make("row_mean", data, (a,), back)


def softmax_rows(a: Value) -> Value:
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=1, keepdims=True)

    def back(g):
        dot = (g * y).sum(axis=1, keepdims=True)
        return (y * (g - dot),)

    return _make("softmax_rows", y, (a,), back)


def masked_softmax_rows(a: Value, mask: np.ndarray) -> Value:
    """Row softmax restricted to True mask entries; empty rows come out zero."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != a.shape:
        raise ShapeError(f"masked_softmax_rows: mask {mask.shape} vs data {a.shape}")
    any_active = mask.any(axis=1, keepdims=True)
    shifted = np.where(mask, a.data, -np.inf)
    row_max = np.where(any_active, shifted.max(axis=1, keepdims=True), 0.0)
    e = np.where(mask, np.exp(np.where(mask, a.data - row_max, 0.0)), 0.0)
    denom = e.sum(axis=1, keepdims=True)
    y = np.divide(e, denom, out=np.zeros_like(e), where=denom > 0)

    def back(g):
        dot = (g * y).sum(axis=1, keepdims=True)
        return (y * (g - dot),)

    return _make("masked_softmax_rows", y, (a,), back)


def elu(a: Value) -> Value:
    neg_part = np.exp(np.minimum(a.data, 0.0)) - 1.0
    y = np.where(a.data > 0, a.data, neg_part)

    def back(g):
        return (g * np.where(a.data > 0, 1.0, neg_part + 1.0),)

    return _make("elu", y, (a,), back)


def relu(a: Value) -> Value:
    y = np.maximum(a.data, 0.0)

    def back(g):
        return (g * (a.data > 0),)

    return _make("relu", y, (a,), back)


def sigmoid(a: Value) -> Value:
    x = a.data
    y = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))

    def back(g):
        return (g * y * (1.0 - y),)

    return _make("sigmoid", y, (a,), back)


def log(a: Value, floor: float | None = None) -> Value:
    x = a.data
    if floor is not None:
        x = np.maximum(x, floor)
    elif np.any(a.data <= 0):
        raise NumericError("log of non-positive value (pass floor= to clamp)")
    y = np.log(x)

    def back(g):
        gx = g / x
        if floor is not None:
            gx = gx * (a.data >= floor)
        return (gx,)

    return _make("log", y, (a,), back)


def euclidean_dist(a: Value, b: Value) -> Value:
    if a.shape != b.shape:
        raise ShapeError(f"euclidean_dist: {a.shape} vs {b.shape}")
    diff = a.data - b.data
    d = float(np.sqrt((diff * diff).sum()))

    def back(g):
        if d == 0.0:
            z = np.zeros_like(diff)
            return (z, z.copy())
        scaled = (float(g) / d) * diff
        return (scaled, -scaled)

    return _make("euclidean_dist", np.array([[d]]), (a, b), back)


def dropout_mask_apply(a: Value, mask: np.ndarray | None) -> Value:
    """Multiply by an externally drawn keep-mask; mask None is the identity."""
    if mask is None:
        return a
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape != a.shape:
        raise ShapeError(f"dropout_mask_apply: mask {mask.shape} vs data {a.shape}")

    def back(g):
        return (g * mask,)

    return _make("dropout_mask_apply", a.data * mask, (a,), back)


PRIMITIVES = {
    "matmul": matmul,
    "add": add,
    "mul": mul,
    "concat": concat,
    "row_mean": row_mean,
    "softmax_rows": softmax_rows,
    "masked_softmax_rows": masked_softmax_rows,
    "elu": elu,
    "relu": relu,
    "sigmoid": sigmoid,
    "log": log,
    "neg": neg,
    "slice_rows": slice_rows,
    "scale": scale,
    "transpose": transpose,
    "euclidean_dist": euclidean_dist,
    "dropout_mask_apply": dropout_mask_apply,
}


class MaskSource:
    """Scaled Bernoulli keep-masks, drawn from a seeded generator.

    With ``record=True`` the drawn masks are kept so a `ReplayMasks` can feed
    the identical sequence back (frozen-mask gradient checking).
    """

    def __init__(self, rate: float, rng: np.random.Generator, record: bool = False):
        if not (0.0 <= rate < 1.0):
            raise ContractError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate
        self.rng = rng
        self.drawn: list[np.ndarray] | None = [] if record else None

    def next(self, shape) -> np.ndarray | None:
        if self.rate == 0.0:
            return None
        mask = (self.rng.random(shape) >= self.rate) / (1.0 - self.rate)
        if self.drawn is not None:
            self.drawn.append(mask)
        return mask


class ReplayMasks:
    def __init__(self, masks: list[np.ndarray]):
        self._masks = masks
        self._pos = 0

    def next(self, shape) -> np.ndarray | None:
        mask = self._masks[self._pos]
        if mask.shape != tuple(shape):
            raise ContractError(f"replayed mask shape {mask.shape} vs requested {tuple(shape)}")
        self._pos += 1
        return mask

    def rewind(self) -> None:
        self._pos = 0


class NoDropout:
    rate = 0.0

    def next(self, shape) -> None:
        return None


NO_DROPOUT = NoDropout()


def grad_check(f, params, eps: float = 1e-5) -> float:
    """Max relative error between reverse-mode and central-difference gradients.

    ``f`` must be a zero-argument deterministic function returning a scalar
    Value built from ``params``. The relative error denominator is
    max(1, |analytic|, |numeric|) per coordinate.
    """
    if not (1e-7 <= eps <= 1e-3):
        raise ContractError(f"eps must lie in [1e-7, 1e-3], got {eps}")
    with Tape() as tape:
        loss = f()
        leaf_grads = tape.run_backward(loss)
    max_rel = 0.0
    for p in params:
        analytic = leaf_grads.get(p)
        flat_grad = (np.zeros_like(p.data) if analytic is None else analytic).reshape(-1)
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            with no_grad():
                f_plus = f().item()
            flat[i] = orig - eps
            with no_grad():
                f_minus = f().item()
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * eps)
            rel = abs(numeric - flat_grad[i]) / max(1.0, abs(numeric), abs(flat_grad[i]))
            if rel > max_rel:
                max_rel = rel
    return max_rel
