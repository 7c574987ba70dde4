"""Black-box scoring interface and reference models with analytic gradients.

The reference zoo (linear, logistic, 2-layer tanh MLP, constant) doubles as a
set of test oracles: closed-form optimal masks exist for the linear models and
every analytic gradient can be cross-checked against finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import Datum, InputError


@dataclass(frozen=True)
class OutputSelector:
    """Selects the scalar output the distortion is computed on.

    Exactly one of scalar_index (a single coordinate) or region_weights
    (a convex combination of coordinates) must be set.
    """

    scalar_index: int | None = None
    region_weights: np.ndarray | None = None

    def __post_init__(self):
        if (self.scalar_index is None) == (self.region_weights is None):
            raise InputError("set exactly one of scalar_index or region_weights")
        if self.region_weights is not None:
            w = np.asarray(self.region_weights, dtype=np.float64)
            if w.ndim != 1 or np.any(w < 0.0):
                raise InputError("region_weights must be a non-negative vector")
            if abs(float(w.sum()) - 1.0) > 1e-9:
                raise InputError("region_weights must sum to 1 within 1e-9")
            w = w.copy()
            w.setflags(write=False)
            object.__setattr__(self, "region_weights", w)
        else:
            object.__setattr__(self, "scalar_index", int(self.scalar_index))

    def weight_vector(self, out_dim: int) -> np.ndarray:
        if self.scalar_index is not None:
            if not (0 <= self.scalar_index < out_dim):
                raise InputError(f"scalar_index {self.scalar_index} out of range for out_dim {out_dim}")
            v = np.zeros(out_dim)
            v[self.scalar_index] = 1.0
            return v
        if self.region_weights.size != out_dim:
            raise InputError("region_weights length must equal out_dim")
        return self.region_weights


class ModelOracle:
    """Black-box model: a finite score vector for every finite input.

    Implementations must be read-only after construction so they can be
    evaluated from multiple threads concurrently.
    """

    in_dim: int
    out_dim: int
    has_gradient: bool = False

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def evaluate_batch(self, X: np.ndarray) -> np.ndarray:
        return np.stack([self.evaluate(row) for row in X])

    def vjp(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Gradient of v . evaluate(x) with respect to x (analytic)."""
        raise NotImplementedError

    def vjp_batch(self, X: np.ndarray, v: np.ndarray) -> np.ndarray:
        return np.stack([self.vjp(row, v) for row in X])

    def _check_dim(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.in_dim:
            raise InputError(f"input has dim {x.shape[-1]}, model expects {self.in_dim}")
        return x


class LinearModel(ModelOracle):
    """y = W x + b."""

    has_gradient = True

    def __init__(self, weights, bias=None):
        W = np.atleast_2d(np.asarray(weights, dtype=np.float64))
        self.W = W
        self.b = np.zeros(W.shape[0]) if bias is None else np.asarray(bias, dtype=np.float64).reshape(W.shape[0])
        self.in_dim = W.shape[1]
        self.out_dim = W.shape[0]

    def evaluate(self, x):
        return self.W @ self._check_dim(x) + self.b

    def evaluate_batch(self, X):
        return self._check_dim(X) @ self.W.T + self.b

    def vjp(self, x, v):
        return self.W.T @ v

    def vjp_batch(self, X, v):
        return np.broadcast_to(self.W.T @ v, (X.shape[0], self.in_dim)).copy()


class LogisticModel(ModelOracle):
    """Single-score model a = w . x + b, reported post-activation by default.

    pre=True exposes the raw score a instead of sigmoid(a); distortion
    experiments conventionally run on the pre-activation output.
    """

    has_gradient = True
    out_dim = 1

    def __init__(self, weights, bias=0.0, pre: bool = False):
        self.w = np.asarray(weights, dtype=np.float64).ravel()
        self.b = float(bias)
        self.pre = bool(pre)
        self.in_dim = self.w.size

    def _score(self, X):
        return X @ self.w + self.b

    def evaluate(self, x):
        a = self._score(self._check_dim(x))
        y = a if self.pre else _sigmoid(a)
        return np.array([y])

    def evaluate_batch(self, X):
        a = self._score(self._check_dim(X))
        y = a if self.pre else _sigmoid(a)
        return y[:, None]

    def vjp(self, x, v):
        if self.pre:
            return v[0] * self.w
        p = _sigmoid(self._score(self._check_dim(x)))
        return v[0] * p * (1.0 - p) * self.w

    def vjp_batch(self, X, v):
        if self.pre:
            return np.broadcast_to(v[0] * self.w, (X.shape[0], self.in_dim)).copy()
        p = _sigmoid(self._score(self._check_dim(X)))
        return (v[0] * p * (1.0 - p))[:, None] * self.w


class MLPModel(ModelOracle):
    """Fixed-weight 2-layer MLP: y = W2 tanh(W1 x + b1) + b2."""

    has_gradient = True

    def __init__(self, W1, b1, W2, b2):
        self.W1 = np.asarray(W1, dtype=np.float64)
        self.b1 = np.asarray(b1, dtype=np.float64).ravel()
        self.W2 = np.asarray(W2, dtype=np.float64)
        self.b2 = np.asarray(b2, dtype=np.float64).ravel()
        if self.W1.shape[0] != self.b1.size or self.W2.shape[1] != self.W1.shape[0]:
            raise InputError("inconsistent MLP weight shapes")
        self.in_dim = self.W1.shape[1]
        self.hidden_dim = self.W1.shape[0]
        self.out_dim = self.W2.shape[0]

    def evaluate(self, x):
        h = np.tanh(self.W1 @ self._check_dim(x) + self.b1)
        return self.W2 @ h + self.b2

    def evaluate_batch(self, X):
        H = np.tanh(self._check_dim(X) @ self.W1.T + self.b1)
        return H @ self.W2.T + self.b2

    def vjp(self, x, v):
        h = np.tanh(self.W1 @ self._check_dim(x) + self.b1)
        return self.W1.T @ ((self.W2.T @ v) * (1.0 - h * h))

    def vjp_batch(self, X, v):
        H = np.tanh(self._check_dim(X) @ self.W1.T + self.b1)
        return ((1.0 - H * H) * (self.W2.T @ v)) @ self.W1


class ConstantModel(ModelOracle):
    """Ignores its input entirely; useful as a zero-gradient control."""

    has_gradient = True

    def __init__(self, value, in_dim: int):
        self.value = np.atleast_1d(np.asarray(value, dtype=np.float64))
        self.in_dim = int(in_dim)
        self.out_dim = self.value.size

    def evaluate(self, x):
        self._check_dim(x)
        return self.value.copy()

    def evaluate_batch(self, X):
        self._check_dim(X)
        return np.broadcast_to(self.value, (X.shape[0], self.out_dim)).copy()

    def vjp(self, x, v):
        return np.zeros(self.in_dim)

    def vjp_batch(self, X, v):
        return np.zeros((X.shape[0], self.in_dim))


def _sigmoid(a):
    a = np.asarray(a, dtype=np.float64)
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    ea = np.exp(a[~pos])
    out[~pos] = ea / (1.0 + ea)
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def evaluate(model: ModelOracle, x: Datum) -> np.ndarray:
    """Score vector of the model at x."""
    if x.dim != model.in_dim:
        raise InputError(f"datum dim {x.dim} does not match model in_dim {model.in_dim}")
    y = model.evaluate(x.values)
    if y.shape != (model.out_dim,) or not np.all(np.isfinite(y)):
        raise InputError("model returned a malformed score vector")
    return y


def select_output(model: ModelOracle, x: np.ndarray, sel: OutputSelector) -> float:
    """Scalar output: one coordinate, or a region-weighted mean of coordinates."""
    y = model.evaluate(np.asarray(x, dtype=np.float64))
    if sel.scalar_index is not None:
        if not (0 <= sel.scalar_index < model.out_dim):
            raise InputError("scalar_index out of range")
        return float(y[sel.scalar_index])
    return float(sel.weight_vector(model.out_dim) @ y)


def select_output_batch(model: ModelOracle, X: np.ndarray, sel: OutputSelector) -> np.ndarray:
    Y = model.evaluate_batch(np.asarray(X, dtype=np.float64))
    return Y @ sel.weight_vector(model.out_dim)


def input_gradient(model: ModelOracle, x: np.ndarray, sel: OutputSelector) -> np.ndarray:
    """d select_output / dx; analytic when available, central differences otherwise."""
    x = np.asarray(x, dtype=np.float64)
    v = sel.weight_vector(model.out_dim)
    if model.has_gradient:
        return model.vjp(x, v)
    return finite_difference_gradient(lambda z: float(v @ model.evaluate(z)), x)


def input_gradient_batch(model: ModelOracle, X: np.ndarray, sel: OutputSelector) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    v = sel.weight_vector(model.out_dim)
    if model.has_gradient:
        return model.vjp_batch(X, v)
    return np.stack([finite_difference_gradient(lambda z: float(v @ model.evaluate(z)), row)
                     for row in X])


def finite_difference_gradient(fn, x: np.ndarray) -> np.ndarray:
    """Central differences with per-component step max(1e-4, 1e-4 |x_i|)."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.empty_like(x)
    for i in range(x.size):
        h = max(1e-4, 1e-4 * abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        grad[i] = (fn(xp) - fn(xm)) / (2.0 * h)
    return grad


# ---------------------------------------------------------------------------
# Plain-text fixture format
# ---------------------------------------------------------------------------
#
#   MODEL <kind> <in_dim> <out_dim>
#   <whitespace-separated weight rows>
#
# linear:    out_dim rows of in_dim weights, then one bias row of out_dim.
# logistic:  one row of in_dim weights, then one bias value.  kind
#            "logistic_pre" selects the pre-activation output.
# mlp:       a single hidden-width line, then W1 rows, b1, W2 rows, b2.

def save_model(model: ModelOracle, path: str | Path) -> None:
    lines: list[str] = []

    def row(vals):
        lines.append(" ".join(repr(float(v)) for v in np.atleast_1d(vals)))

    if isinstance(model, LinearModel):
        lines.append(f"MODEL linear {model.in_dim} {model.out_dim}")
        for r in model.W:
            row(r)
        row(model.b)
    elif isinstance(model, LogisticModel):
        kind = "logistic_pre" if model.pre else "logistic"
        lines.append(f"MODEL {kind} {model.in_dim} 1")
        row(model.w)
        row([model.b])
    elif isinstance(model, MLPModel):
        lines.append(f"MODEL mlp {model.in_dim} {model.out_dim}")
        lines.append(str(model.hidden_dim))
        for r in model.W1:
            row(r)
        row(model.b1)
        for r in model.W2:
            row(r)
        row(model.b2)
    elif isinstance(model, ConstantModel):
        lines.append(f"MODEL constant {model.in_dim} {model.out_dim}")
        row(model.value)
    else:
        raise InputError(f"cannot serialize model type {type(model).__name__}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_model(path: str | Path) -> ModelOracle:
    raw = [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not raw or not raw[0].startswith("MODEL "):
        raise InputError(f"{path}: missing MODEL header")
    header = raw[0].split()
    if len(header) != 4:
        raise InputError(f"{path}: malformed MODEL header")
    kind, in_dim, out_dim = header[1], int(header[2]), int(header[3])
    body = raw[1:]

    def rows(n, width, at):
        block = [np.array([float(t) for t in body[at + i].split()]) for i in range(n)]
        for r in block:
            if r.size != width:
                raise InputError(f"{path}: expected row of {width} values")
        return np.stack(block), at + n

    if kind == "linear":
        W, at = rows(out_dim, in_dim, 0)
        b, at = rows(1, out_dim, at)
        _expect_end(body, at, path)
        return LinearModel(W, b[0])
    if kind in ("logistic", "logistic_pre"):
        w, at = rows(1, in_dim, 0)
        b, at = rows(1, 1, at)
        _expect_end(body, at, path)
        return LogisticModel(w[0], b[0, 0], pre=(kind == "logistic_pre"))
    if kind == "mlp":
        hidden = int(body[0])
        W1, at = rows(hidden, in_dim, 1)
        b1, at = rows(1, hidden, at)
        W2, at = rows(out_dim, hidden, at)
        b2, at = rows(1, out_dim, at)
        _expect_end(body, at, path)
        return MLPModel(W1, b1[0], W2, b2[0])
    if kind == "constant":
        v, at = rows(1, out_dim, 0)
        _expect_end(body, at, path)
        return ConstantModel(v[0], in_dim)
    raise InputError(f"{path}: unknown model kind {kind!r}")


def _expect_end(body, at, path):
    if at != len(body):
        raise InputError(f"{path}: trailing data after model weights")
