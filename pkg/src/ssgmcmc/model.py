"""Models exposing minibatch posterior energies with hand-derived gradients.

Every model scores a flat parameter vector ``theta`` of length ``n_params``.
The minibatch energy is

    U_hat(theta) = -(N / B) * sum_{i in batch} log p(y_i | x_i, theta) - log p(theta)

with theta-independent constants dropped. The prior is ``N(0, prior_scale^2 I)``.
``batch=None`` means the full dataset, which gives the exact energy.

Each call to ``energy``, ``grad_energy`` or ``energy_and_grad`` counts as one
model evaluation in ``n_evals``; samplers and the cost-contract tests read it.
"""
from __future__ import annotations

import numpy as np

from .data import Dataset

KINDS = ("gaussian-target", "linear-regression", "logistic-regression", "mlp")


class DivergenceError(FloatingPointError):
    """A non-finite energy, gradient or parameter was produced."""

    def __init__(self, message: str, index: int | None = None, step: int | None = None):
        super().__init__(message)
        self.index = index
        self.step = step


def _first_nonfinite(a) -> int:
    return int(np.flatnonzero(~np.isfinite(a))[0])


def _log_softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


class Model:
    """Base class. Subclasses implement ``_loglik`` and ``_loglik_grad``."""

    kind = ""
    n_params = 0
    prior_scale = 1.0
    needs_data = True

    def __init__(self):
        self.n_evals = 0

    # -- public API -------------------------------------------------------

    def energy(self, theta, batch=None, data: Dataset | None = None) -> float:
        return self.energy_and_grad(theta, batch, data, need_grad=False)[0]

    def grad_energy(self, theta, batch=None, data: Dataset | None = None) -> np.ndarray:
        return self.energy_and_grad(theta, batch, data)[1]

    def energy_and_grad(self, theta, batch=None, data: Dataset | None = None,
                        need_grad: bool = True):
        theta = self._check_theta(theta)
        self.n_evals += 1
        # overflow surfaces as DivergenceError below, not as a warning
        with np.errstate(over="ignore", invalid="ignore"):
            if self.needs_data:
                X, y, scale = self._slice(batch, data)
                ll, gll = self._loglik(theta, X, y, need_grad)
                value = -scale * ll + 0.5 * float(theta @ theta) / self.prior_scale ** 2
                grad = None
                if need_grad:
                    grad = -scale * gll + theta / self.prior_scale ** 2
            else:
                value, grad = self._direct(theta, need_grad)
        if not np.isfinite(value):
            raise DivergenceError(f"non-finite energy {value!r}", index=None)
        if grad is not None and not np.all(np.isfinite(grad)):
            i = _first_nonfinite(grad)
            raise DivergenceError(f"non-finite gradient at parameter {i}", index=i)
        return float(value), grad

    def predict(self, theta, X) -> np.ndarray:
        raise ValueError(f"{self.kind} has no predictive distribution")

    def layout(self) -> np.ndarray:
        """(n_params, 2) int array of (layer id, output-neuron id) per index."""
        return np.zeros((self.n_params, 2), dtype=np.int64)

    @property
    def is_classifier(self) -> bool:
        return False

    # -- helpers ----------------------------------------------------------

    def _check_theta(self, theta):
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.n_params,):
            raise ValueError(f"theta has shape {theta.shape}, expected ({self.n_params},)")
        if not np.all(np.isfinite(theta)):
            i = _first_nonfinite(theta)
            raise DivergenceError(f"non-finite parameter at index {i}", index=i)
        return theta

    def _slice(self, batch, data):
        if data is None:
            raise ValueError(f"{self.kind} needs a dataset")
        if batch is None:
            return data.X, data.y, 1.0
        batch = np.asarray(batch)
        if batch.size < 1:
            raise ValueError("empty minibatch")
        return data.X[batch], data.y[batch], data.n / batch.size

    def _check_X(self, X, d):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != d:
            raise ValueError(f"covariates have {X.shape[1]} columns, model expects {d}")
        return X

    def _loglik(self, theta, X, y, need_grad):
        raise NotImplementedError

    def _direct(self, theta, need_grad):
        raise NotImplementedError


class GaussianTarget(Model):
    """Energy ``0.5 (theta - mean)^T precision (theta - mean)``; no data.

    The Boltzmann distribution is ``N(mean, precision^-1)``, which makes the
    factorized fixed point exactly computable.
    """

    kind = "gaussian-target"
    needs_data = False

    def __init__(self, precision, mean=None):
        super().__init__()
        lam = np.atleast_2d(np.asarray(precision, dtype=np.float64))
        if lam.shape[0] != lam.shape[1]:
            raise ValueError("precision must be square")
        if not np.allclose(lam, lam.T):
            raise ValueError("precision must be symmetric")
        np.linalg.cholesky(lam)
        self.precision = lam
        self.n_params = lam.shape[0]
        self.mean = np.zeros(self.n_params) if mean is None else np.asarray(mean, dtype=np.float64)
        if self.mean.shape != (self.n_params,):
            raise ValueError("mean length does not match precision")

    def _direct(self, theta, need_grad):
        diff = theta - self.mean
        g = self.precision @ diff
        return 0.5 * float(diff @ g), (g if need_grad else None)


class LinearRegression(Model):
    """Gaussian likelihood with known noise variance; theta = [w, b]."""

    kind = "linear-regression"

    def __init__(self, dim: int, bias: bool = True, noise_var: float = 1.0,
                 prior_scale: float = 1.0):
        super().__init__()
        if noise_var <= 0 or prior_scale <= 0:
            raise ValueError("noise_var and prior_scale must be positive")
        self.dim = int(dim)
        self.bias = bool(bias)
        self.noise_var = float(noise_var)
        self.prior_scale = float(prior_scale)
        self.n_params = self.dim + int(self.bias)

    def _mean(self, theta, X):
        out = X @ theta[:self.dim]
        if self.bias:
            out = out + theta[self.dim]
        return out

    def _loglik(self, theta, X, y, need_grad):
        resid = y - self._mean(theta, X)
        ll = -0.5 * float(resid @ resid) / self.noise_var
        if not need_grad:
            return ll, None
        g = np.empty(self.n_params)
        g[:self.dim] = X.T @ resid / self.noise_var
        if self.bias:
            g[self.dim] = resid.sum() / self.noise_var
        return ll, g

    def design(self, X):
        """Covariates with a trailing column of ones when the model has a bias."""
        X = self._check_X(X, self.dim)
        return np.hstack([X, np.ones((X.shape[0], 1))]) if self.bias else X

    def predict(self, theta, X):
        theta = self._check_theta(theta)
        return self._mean(theta, self._check_X(X, self.dim))


class LogisticRegression(Model):
    """Softmax regression over ``n_classes``; theta = [W (d x C) row-major, b (C)]."""

    kind = "logistic-regression"

    def __init__(self, dim: int, n_classes: int = 2, prior_scale: float = 1.0):
        super().__init__()
        if n_classes < 2:
            raise ValueError("need at least two classes")
        self.dim = int(dim)
        self.n_classes = int(n_classes)
        self.prior_scale = float(prior_scale)
        self.n_params = (self.dim + 1) * self.n_classes

    @property
    def is_classifier(self):
        return True

    def _unpack(self, theta):
        d, c = self.dim, self.n_classes
        return theta[:d * c].reshape(d, c), theta[d * c:]

    def _loglik(self, theta, X, y, need_grad):
        W, b = self._unpack(theta)
        logp = _log_softmax(X @ W + b)
        rows = np.arange(X.shape[0])
        ll = float(logp[rows, y].sum())
        if not need_grad:
            return ll, None
        delta = -np.exp(logp)
        delta[rows, y] += 1.0
        return ll, np.concatenate([(X.T @ delta).ravel(), delta.sum(axis=0)])

    def predict(self, theta, X):
        theta = self._check_theta(theta)
        W, b = self._unpack(theta)
        return np.exp(_log_softmax(self._check_X(X, self.dim) @ W + b))

    def layout(self):
        lay = np.zeros((self.n_params, 2), dtype=np.int64)
        d, c = self.dim, self.n_classes
        lay[:d * c, 1] = np.tile(np.arange(c), d)
        lay[d * c:, 1] = np.arange(c)
        return lay


class MLP(Model):
    """Fully connected tanh network.

    ``widths`` lists layer sizes from input to output, e.g. ``(784, 50, 50, 10)``.
    Parameters are stored layer by layer as ``W`` (fan_in x fan_out, row-major)
    followed by ``b``. ``task`` is ``"classification"`` (softmax/categorical)
    or ``"regression"`` (Gaussian, known ``noise_var``, single output).
    """

    kind = "mlp"

    def __init__(self, widths=(2, 50, 50, 2), task: str = "classification",
                 noise_var: float = 1.0, prior_scale: float = 1.0):
        super().__init__()
        widths = tuple(int(w) for w in widths)
        if len(widths) < 2 or min(widths) < 1:
            raise ValueError("widths needs at least input and output sizes, all >= 1")
        if task not in ("classification", "regression"):
            raise ValueError(f"unknown task {task!r}")
        if task == "classification" and widths[-1] < 2:
            raise ValueError("classification needs at least two outputs")
        if task == "regression" and widths[-1] != 1:
            raise ValueError("regression MLP must have a single output")
        self.widths = widths
        self.task = task
        self.noise_var = float(noise_var)
        self.prior_scale = float(prior_scale)
        self._shapes = []
        offset = 0
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            w_end = offset + fan_in * fan_out
            self._shapes.append((offset, w_end, w_end + fan_out, fan_in, fan_out))
            offset = w_end + fan_out
        self.n_params = offset

    @property
    def is_classifier(self):
        return self.task == "classification"

    @property
    def n_layers(self) -> int:
        return len(self._shapes)

    def _unpack(self, theta):
        return [(theta[a:b].reshape(fi, fo), theta[b:c]) for a, b, c, fi, fo in self._shapes]

    def _forward(self, params, X):
        acts = [X]
        h = X
        for layer, (W, b) in enumerate(params):
            z = h @ W + b
            h = z if layer == len(params) - 1 else np.tanh(z)
            acts.append(h)
        return acts

    def _loglik(self, theta, X, y, need_grad):
        params = self._unpack(theta)
        acts = self._forward(params, X)
        out = acts[-1]
        if self.task == "classification":
            logp = _log_softmax(out)
            rows = np.arange(X.shape[0])
            ll = float(logp[rows, y].sum())
            if not need_grad:
                return ll, None
            delta = -np.exp(logp)
            delta[rows, y] += 1.0
        else:
            resid = y - out[:, 0]
            ll = -0.5 * float(resid @ resid) / self.noise_var
            if not need_grad:
                return ll, None
            delta = (resid / self.noise_var)[:, None]
        grad = np.empty(self.n_params)
        for layer in range(len(params) - 1, -1, -1):
            a, b, c, _, _ = self._shapes[layer]
            h_in = acts[layer]
            grad[a:b] = (h_in.T @ delta).ravel()
            grad[b:c] = delta.sum(axis=0)
            if layer:
                delta = (delta @ params[layer][0].T) * (1.0 - h_in * h_in)
        return ll, grad

    def predict(self, theta, X):
        theta = self._check_theta(theta)
        out = self._forward(self._unpack(theta), self._check_X(X, self.widths[0]))[-1]
        if self.task == "classification":
            return np.exp(_log_softmax(out))
        return out[:, 0]

    def layout(self):
        lay = np.empty((self.n_params, 2), dtype=np.int64)
        for layer, (a, b, c, fi, fo) in enumerate(self._shapes):
            lay[a:c, 0] = layer
            lay[a:b, 1] = np.tile(np.arange(fo), fi)
            lay[b:c, 1] = np.arange(fo)
        return lay


def make_model(kind: str, **kwargs) -> Model:
    """Build a model by kind name; keyword arguments go to the constructor."""
    classes = {
        "gaussian-target": GaussianTarget,
        "linear-regression": LinearRegression,
        "logistic-regression": LogisticRegression,
        "mlp": MLP,
    }
    if kind not in classes:
        raise ValueError(f"unknown model kind {kind!r}; expected one of {KINDS}")
    return classes[kind](**kwargs)


def energy(model: Model, theta, batch=None, data: Dataset | None = None) -> float:
    return model.energy(theta, batch, data)


def grad_energy(model: Model, theta, batch=None, data: Dataset | None = None) -> np.ndarray:
    return model.grad_energy(theta, batch, data)


def predict(model: Model, theta, X) -> np.ndarray:
    return model.predict(theta, X)


def layout(model: Model) -> np.ndarray:
    return model.layout()
