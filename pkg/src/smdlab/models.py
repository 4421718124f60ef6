"""Differentiable scalar-output predictors, losses, and derivative checks.

Models are immutable descriptors; all state lives in the flat parameter
vector ``w``. Two architectures are provided: a linear map and a tanh
multilayer perceptron with one scalar output. Gradients are analytic
(reverse-mode), validated against central finite differences in the test
suite.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CapabilityError, NumericError
from .numdiff import hessian_from_grad

__all__ = [
    "Dataset",
    "LinearModel",
    "MLP",
    "Model",
    "SquareLoss",
    "BinaryCrossEntropy",
    "Loss",
    "make_loss",
    "loss_value",
    "loss_grad",
    "total_loss",
    "residuals",
    "is_interpolating",
    "train_accuracy",
    "teacher_weights",
    "AssumptionReport",
    "assumption2_estimate",
]


@dataclass(frozen=True, eq=False)
class Dataset:
    """Inputs (n, d), scalar labels (n,), and an optional held-out split."""

    X: np.ndarray
    y: np.ndarray
    X_test: np.ndarray | None = None
    y_test: np.ndarray | None = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
            raise ValueError(f"inconsistent dataset shapes {X.shape} / {y.shape}")
        if X.shape[0] < 1 or X.shape[1] < 1:
            raise ValueError("dataset needs n >= 1 samples and d >= 1 features")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise NumericError("dataset contains non-finite entries")
        if self.X_test is not None:
            Xt = np.asarray(self.X_test, dtype=float)
            yt = np.asarray(self.y_test, dtype=float)
            object.__setattr__(self, "X_test", Xt)
            object.__setattr__(self, "y_test", yt)
            if Xt.ndim != 2 or Xt.shape[1] != X.shape[1] or Xt.shape[0] != yt.shape[0]:
                raise ValueError("test split shapes do not match the train split")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]


# ---------------------------------------------------------------------------
# models
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LinearModel:
    """f(x, w) = x . w with p = d."""

    d: int
    kind = "linear"

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("linear model needs d >= 1")

    @property
    def p(self) -> int:
        return self.d

    def predict(self, w, x) -> float:
        w, x = self._check(w, x)
        return float(x @ w)

    def predict_batch(self, w, X) -> np.ndarray:
        return np.asarray(X, dtype=float) @ np.asarray(w, dtype=float)

    def grad(self, w, x) -> np.ndarray:
        w, x = self._check(w, x)
        return x.copy()

    def jacobian(self, w, X) -> np.ndarray:
        return np.asarray(X, dtype=float)

    def spec_string(self) -> str:
        return f"linear:d={self.d}"

    def _check(self, w, x):
        w = np.asarray(w, dtype=float)
        x = np.asarray(x, dtype=float)
        if w.shape != (self.d,) or x.shape != (self.d,):
            raise ValueError(f"expected vectors of length {self.d}, got {w.shape} and {x.shape}")
        return w, x


@dataclass(frozen=True)
class MLP:
    """Fully connected tanh network with widths (d, h1, ..., hk, 1).

    Hidden layers carry biases; the output bias is optional so that exact
    parameter counts can be hit when an experiment calls for them.
    """

    widths: tuple[int, ...]
    output_bias: bool = True
    kind = "mlp"
    _specs: tuple = field(init=False, repr=False, compare=False)
    _p: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        widths = tuple(int(v) for v in self.widths)
        object.__setattr__(self, "widths", widths)
        if len(widths) < 2 or widths[-1] != 1 or any(v < 1 for v in widths):
            raise ValueError(f"mlp widths must be (d, ..., 1) with positive entries, got {widths}")
        specs = []
        offset = 0
        last = len(widths) - 2
        for k in range(len(widths) - 1):
            fan_in, fan_out = widths[k], widths[k + 1]
            w_sl = slice(offset, offset + fan_in * fan_out)
            offset += fan_in * fan_out
            b_sl = None
            if k < last or self.output_bias:
                b_sl = slice(offset, offset + fan_out)
                offset += fan_out
            specs.append((w_sl, b_sl, fan_out, fan_in))
        object.__setattr__(self, "_specs", tuple(specs))
        object.__setattr__(self, "_p", offset)

    @property
    def d(self) -> int:
        return self.widths[0]

    @property
    def p(self) -> int:
        return self._p

    def spec_string(self) -> str:
        tag = "-".join(str(v) for v in self.widths)
        return f"mlp:{tag}" + ("" if self.output_bias else ":nob")

    # -- forward -----------------------------------------------------------

    def predict(self, w, x) -> float:
        w, x = self._check(w, x)
        a = x
        for w_sl, b_sl, out, inp in self._specs[:-1]:
            z = w[w_sl].reshape(out, inp) @ a
            if b_sl is not None:
                z += w[b_sl]
            a = np.tanh(z)
        w_sl, b_sl, out, inp = self._specs[-1]
        y = w[w_sl].reshape(out, inp) @ a
        if b_sl is not None:
            y += w[b_sl]
        return float(y[0])

    def predict_batch(self, w, X) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        A = np.asarray(X, dtype=float)
        for w_sl, b_sl, out, inp in self._specs[:-1]:
            Z = A @ w[w_sl].reshape(out, inp).T
            if b_sl is not None:
                Z += w[b_sl]
            A = np.tanh(Z)
        w_sl, b_sl, out, inp = self._specs[-1]
        Y = A @ w[w_sl].reshape(out, inp).T
        if b_sl is not None:
            Y += w[b_sl]
        return Y[:, 0]

    # -- reverse mode --------------------------------------------------------

    def grad(self, w, x) -> np.ndarray:
        w, x = self._check(w, x)
        acts = [x]
        for w_sl, b_sl, out, inp in self._specs[:-1]:
            z = w[w_sl].reshape(out, inp) @ acts[-1]
            if b_sl is not None:
                z += w[b_sl]
            acts.append(np.tanh(z))
        g = np.zeros(self._p)
        w_sl, b_sl, out, inp = self._specs[-1]
        g[w_sl] = acts[-1]
        if b_sl is not None:
            g[b_sl] = 1.0
        upstream = w[w_sl].reshape(out, inp)[0]
        for k in range(len(self._specs) - 2, -1, -1):
            w_sl, b_sl, out, inp = self._specs[k]
            delta = upstream * (1.0 - acts[k + 1] ** 2)
            g[w_sl] = np.outer(delta, acts[k]).ravel()
            if b_sl is not None:
                g[b_sl] = delta
            upstream = w[w_sl].reshape(out, inp).T @ delta
        return g

    def jacobian(self, w, X) -> np.ndarray:
        """Per-sample gradients stacked into an (n, p) matrix."""
        w = np.asarray(w, dtype=float)
        X = np.asarray(X, dtype=float)
        n = X.shape[0]
        acts = [X]
        for w_sl, b_sl, out, inp in self._specs[:-1]:
            Z = acts[-1] @ w[w_sl].reshape(out, inp).T
            if b_sl is not None:
                Z += w[b_sl]
            acts.append(np.tanh(Z))
        J = np.zeros((n, self._p))
        w_sl, b_sl, out, inp = self._specs[-1]
        J[:, w_sl] = acts[-1]
        if b_sl is not None:
            J[:, b_sl] = 1.0
        upstream = np.broadcast_to(w[w_sl].reshape(out, inp)[0], (n, inp))
        for k in range(len(self._specs) - 2, -1, -1):
            w_sl, b_sl, out, inp = self._specs[k]
            delta = upstream * (1.0 - acts[k + 1] ** 2)
            J[:, w_sl] = np.einsum("no,ni->noi", delta, acts[k]).reshape(n, -1)
            if b_sl is not None:
                J[:, b_sl] = delta
            upstream = delta @ w[w_sl].reshape(out, inp)
        return J

    def _check(self, w, x):
        w = np.asarray(w, dtype=float)
        x = np.asarray(x, dtype=float)
        if w.shape != (self._p,):
            raise ValueError(f"expected parameter vector of length {self._p}, got {w.shape}")
        if x.shape != (self.widths[0],):
            raise ValueError(f"expected input of length {self.widths[0]}, got {x.shape}")
        return w, x


Model = LinearModel | MLP


def teacher_weights(model: Model, rng: np.random.Generator) -> np.ndarray:
    """Draw teacher parameters with per-layer 1/sqrt(fan_in) scaling.

    Keeps labels O(1) so teacher-generated problems are well scaled.
    """
    if isinstance(model, LinearModel):
        return rng.standard_normal(model.d)
    w = np.zeros(model.p)
    for w_sl, b_sl, out, inp in model._specs:
        w[w_sl] = rng.standard_normal(out * inp) / np.sqrt(inp)
        if b_sl is not None:
            w[b_sl] = 0.1 * rng.standard_normal(out)
    return w


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SquareLoss:
    """l(y, yhat) = (y - yhat)^2 / 2; zero exactly at interpolation."""

    kind = "square"

    def value(self, y: float, yhat: float) -> float:
        r = y - yhat
        return 0.5 * r * r

    def dvalue(self, y: float, yhat: float) -> float:
        return yhat - y


@dataclass(frozen=True)
class BinaryCrossEntropy:
    """Logistic loss for labels in {-1, +1} against a real-valued logit."""

    kind = "cross-entropy-binary"

    def value(self, y: float, yhat: float) -> float:
        return float(np.logaddexp(0.0, -y * yhat))

    def dvalue(self, y: float, yhat: float) -> float:
        return float(-y / (1.0 + np.exp(y * yhat)))


Loss = SquareLoss | BinaryCrossEntropy


def make_loss(kind: str) -> Loss:
    if kind == "square":
        return SquareLoss()
    if kind in ("cross-entropy-binary", "cross_entropy"):
        return BinaryCrossEntropy()
    raise ValueError(f"unknown loss kind {kind!r}")


def loss_value(loss: Loss, model: Model, w, x, y: float) -> float:
    return loss.value(float(y), model.predict(w, x))


def loss_grad(loss: Loss, model: Model, w, x, y: float) -> np.ndarray:
    yhat = model.predict(w, x)
    return loss.dvalue(float(y), yhat) * model.grad(w, x)


def total_loss(loss: Loss, model: Model, w, data: Dataset) -> float:
    yhat = model.predict_batch(w, data.X)
    if isinstance(loss, SquareLoss):
        r = data.y - yhat
        return float(0.5 * np.dot(r, r))
    return float(np.sum(np.logaddexp(0.0, -data.y * yhat)))


def residuals(model: Model, w, data: Dataset) -> np.ndarray:
    """y_i - f(x_i, w) over the training split."""
    return data.y - model.predict_batch(w, data.X)


def is_interpolating(model: Model, w, data: Dataset, tol: float = 1e-6) -> bool:
    return float(np.max(np.abs(residuals(model, w, data)))) <= tol


def train_accuracy(model: Model, w, data: Dataset) -> float:
    """Sign-agreement accuracy for {-1, +1} classification labels."""
    yhat = model.predict_batch(w, data.X)
    pred = np.where(yhat >= 0.0, 1.0, -1.0)
    return float(np.mean(pred == np.sign(data.y)))


# ---------------------------------------------------------------------------
# bounded-derivative diagnostics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AssumptionReport:
    """Sampled (not certified) bounds on model derivatives over a region."""

    gamma: float
    alpha: float
    beta: float
    sampled_points: int
    region_radius: float

    def __post_init__(self):
        if self.alpha > self.beta:
            raise ValueError("alpha must not exceed beta")


def assumption2_estimate(
    model: Model,
    data: Dataset,
    center,
    radius: float,
    samples: int,
    *,
    seed: int = 0,
    step: float = 1e-5,
    max_p: int = 500,
) -> AssumptionReport:
    """Estimate gradient-norm and Hessian-eigenvalue bounds near ``center``.

    Points are drawn from the Euclidean ball of the given radius (the
    q = 2 Bregman ball up to scaling); per-sample Hessians come from
    central differences of the analytic gradient. Estimates cover only
    the sampled points.
    """
    center = np.asarray(center, dtype=float)
    p = model.p
    if p > max_p:
        raise CapabilityError(f"explicit Hessians limited to p <= {max_p}, got p = {p}")
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    points = [center]
    for _ in range(samples - 1):
        u = rng.standard_normal(p)
        u /= np.linalg.norm(u)
        points.append(center + radius * rng.uniform() * u)

    gamma = 0.0
    alpha = np.inf
    beta = -np.inf
    for w in points:
        J = model.jacobian(w, data.X)
        gamma = max(gamma, float(np.max(np.linalg.norm(J, axis=1))))
        H_cols = np.empty((data.n, p, p))
        for j in range(p):
            wp = w.copy()
            wm = w.copy()
            wp[j] += step
            wm[j] -= step
            H_cols[:, :, j] = (model.jacobian(wp, data.X) - model.jacobian(wm, data.X)) / (2.0 * step)
        if not np.all(np.isfinite(H_cols)):
            raise NumericError("non-finite Hessian entry in finite-difference sampling")
        for i in range(data.n):
            H = 0.5 * (H_cols[i] + H_cols[i].T)
            eig = np.linalg.eigvalsh(H)
            alpha = min(alpha, float(eig[0]))
            beta = max(beta, float(eig[-1]))
    return AssumptionReport(
        gamma=gamma,
        alpha=alpha,
        beta=beta,
        sampled_points=len(points),
        region_radius=float(radius),
    )


def fd_hessian(model: Model, w, x, step: float = 1e-5) -> np.ndarray:
    """Finite-difference Hessian of f(x, .) at w (diagnostic helper)."""
    return hessian_from_grad(lambda v: model.grad(v, x), np.asarray(w, dtype=float), step)
