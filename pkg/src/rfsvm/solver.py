"""Regularized hinge-loss classifiers without a bias term.

Both the random-feature model (``w . phi_N(x)``) and the exact Gaussian-kernel
baseline (``sum_i alpha_i k(x_i, x)``) minimize

    R(f) = (1/m) sum_i max(0, 1 - y_i f(x_i)) + lambda/2 |f|^2.

The default solver is projected stochastic subgradient descent with step
``1/(lambda t)``, projection onto the ball ``|w| <= sqrt(2/lambda)`` (which
contains the minimizer, since ``R(f_opt) <= R(0) = 1``) and averaging of the
last half of the iterates. A dual coordinate-descent solver (``"dcd"``)
minimizes the same objective to high accuracy and is used where a precise
minimizer matters.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _rng
from .errors import NumericError, SizeError, ValidationError
from .features import FeatureSet, embed, gaussian_gram

SOLVERS = ("pegasos", "dcd")
LOSSES = ("hinge", "zero-one", "clipped-hinge")
KSVM_MAX_SAMPLES = 20000


@dataclass(frozen=True)
class TrainConfig:
    lam: float
    epochs: int = 20
    seed: int = 0
    tolerance: float = 1e-6
    solver: str = "pegasos"
    step_schedule: str = "pegasos"

    def __post_init__(self):
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise ValidationError(f"lambda must be positive, got {self.lam!r}")
        if int(self.epochs) != self.epochs or self.epochs < 1:
            raise ValidationError(f"epochs must be a positive integer, got {self.epochs!r}")
        if not self.tolerance > 0:
            raise ValidationError("tolerance must be positive")
        if self.solver not in SOLVERS:
            raise ValidationError(f"unknown solver {self.solver!r}; expected one of {SOLVERS}")
        if self.step_schedule != "pegasos":
            raise ValidationError("only the pegasos step schedule 1/(lambda t) is supported")


@dataclass(frozen=True)
class Model:
    features: FeatureSet
    weights: np.ndarray
    lam: float
    objective: float

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64).reshape(-1)
        if w.size != self.features.output_dim:
            raise ValidationError("weight vector does not match the feature dimension")
        if not np.all(np.isfinite(w)):
            raise NumericError("model weights are not finite")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    def decision_function(self, X) -> np.ndarray:
        return np.atleast_2d(embed(self.features, X)) @ self.weights

    @property
    def dim(self) -> int:
        return self.features.spec.dim

    def to_dict(self) -> dict:
        return {
            "features": self.features.to_dict(),
            "weights": self.weights.tolist(),
            "lambda": self.lam,
            "objective": self.objective,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Model":
        return cls(FeatureSet.from_dict(d["features"]), d["weights"], float(d["lambda"]), float(d["objective"]))


@dataclass(frozen=True)
class KernelModel:
    alphas: np.ndarray
    support: np.ndarray
    gamma: float
    lam: float
    objective: float = float("nan")
    _active: np.ndarray = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        a = np.array(self.alphas, dtype=np.float64).reshape(-1)
        S = np.atleast_2d(np.array(self.support, dtype=np.float64))
        if a.size != S.shape[0]:
            raise ValidationError("one coefficient per support point is required")
        if not np.all(np.isfinite(a)):
            raise NumericError("kernel coefficients are not finite")
        a.setflags(write=False)
        S.setflags(write=False)
        object.__setattr__(self, "alphas", a)
        object.__setattr__(self, "support", S)
        object.__setattr__(self, "_active", np.flatnonzero(a))

    @property
    def dim(self) -> int:
        return self.support.shape[1]

    def decision_function(self, X, chunk: int = 8192) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.dim:
            raise ValidationError(f"expected points of dimension {self.dim}, got {X.shape[1]}")
        S, a = self.support[self._active], self.alphas[self._active]
        out = np.zeros(X.shape[0])
        if a.size == 0:
            return out
        for lo in range(0, X.shape[0], chunk):
            out[lo : lo + chunk] = gaussian_gram(X[lo : lo + chunk], S, self.gamma) @ a
        return out

    def to_dict(self) -> dict:
        return {
            "kind": "ksvm",
            "alphas": self.alphas.tolist(),
            "support": self.support.tolist(),
            "gamma": self.gamma,
            "lambda": self.lam,
            "objective": self.objective,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KernelModel":
        return cls(d["alphas"], d["support"], float(d["gamma"]), float(d["lambda"]), float(d["objective"]))


def model_from_dict(d: dict):
    return KernelModel.from_dict(d) if d.get("kind") == "ksvm" else Model.from_dict(d)


def model_to_json(model) -> str:
    return json.dumps(model.to_dict())


# -- losses and risks ------------------------------------------------------


def _labels(y) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if not np.all((y == 1.0) | (y == -1.0)):
        raise ValidationError("labels must be -1 or +1")
    return y


def pointwise_loss(y, scores, loss: str) -> np.ndarray:
    margin = np.asarray(y, dtype=np.float64) * np.asarray(scores, dtype=np.float64)
    if loss == "hinge":
        return np.maximum(0.0, 1.0 - margin)
    if loss == "zero-one":
        return (margin <= 0).astype(np.float64)
    if loss == "clipped-hinge":
        return np.clip(1.0 - margin, 0.0, 1.0)
    raise ValidationError(f"unknown loss {loss!r}; expected one of {LOSSES}")


def sign(scores) -> np.ndarray:
    """Labels with the tie-break ``sign(0) = +1``."""
    return np.where(np.asarray(scores) >= 0, 1, -1)


def _check_dims(model, X):
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != model.dim:
        raise ValidationError(f"expected points of dimension {model.dim}, got {X.shape[1]}")
    return X


def predict(model, x) -> tuple[float, int]:
    """Score and label of a single point."""
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    score = float(model.decision_function(_check_dims(model, x))[0])
    return score, 1 if score >= 0 else -1


def evaluate_risk(model, data, loss: str = "zero-one", scores=None) -> float:
    """Empirical mean of ``loss`` over ``data``.

    ``scores`` may be passed to reuse precomputed decision values.
    """
    if loss not in LOSSES:
        raise ValidationError(f"unknown loss {loss!r}; expected one of {LOSSES}")
    if len(data) == 0:
        raise ValidationError("cannot evaluate risk on an empty dataset")
    if scores is None:
        scores = model.decision_function(_check_dims(model, data.points))
    return float(np.mean(pointwise_loss(data.labels, scores, loss)))


def objective(model, data) -> float:
    """Hinge risk plus ``lambda/2 |f|^2``."""
    X = _check_dims(model, data.points)
    if isinstance(model, KernelModel):
        K = gaussian_gram(model.support, model.support, model.gamma)
        sq = float(model.alphas @ K @ model.alphas)
    else:
        sq = float(model.weights @ model.weights)
    return evaluate_risk(model, data, "hinge", model.decision_function(X)) + 0.5 * model.lam * sq


# -- primal solvers --------------------------------------------------------


def _project(w: np.ndarray, radius: float) -> np.ndarray:
    """Scale ``w`` onto the ball of the given radius; exact in floating point."""
    nrm = math.sqrt(float(w @ w))
    if nrm > radius:
        w *= radius / nrm
        while math.sqrt(float(w @ w)) > radius:
            w *= 1.0 - 2.0**-52
    return w


def _primal_objective(Z, y, w, lam, sw):
    margins = y * (Z @ w)
    return float(sw @ np.maximum(0.0, 1.0 - margins)) + 0.5 * lam * float(w @ w)


def pegasos(Z, y, lam, epochs, rng, tolerance, sample_weight=None, callback=None):
    """Projected stochastic subgradient descent with last-half averaging.

    ``Z`` holds one embedded sample per row. ``sample_weight`` must sum to 1;
    sampling is uniform and each subgradient is rescaled by ``m * weight``.
    Returns ``(w, objective)`` for the averaged iterate.
    """
    m, D = Z.shape
    sw = np.full(m, 1.0 / m) if sample_weight is None else sample_weight
    scale = m * sw
    radius = math.sqrt(2.0 / lam)
    w = np.zeros(D)
    epoch_sums = []
    t = 0
    prev = None
    avg = w.copy()
    obj = 1.0
    for _ in range(int(epochs)):
        acc = np.zeros(D)
        for i in rng.permutation(m):
            t += 1
            eta = 1.0 / (lam * t)
            z = Z[i]
            viol = y[i] * float(z @ w) < 1.0
            w *= 1.0 - eta * lam
            if viol:
                w += (eta * y[i] * scale[i]) * z
            _project(w, radius)
            if callback is not None:
                callback(t, w)
            acc += w
        epoch_sums.append(acc)
        keep = (len(epoch_sums) + 1) // 2
        avg = _project(np.sum(epoch_sums[-keep:], axis=0) / (keep * m), radius)
        obj = _primal_objective(Z, y, avg, lam, sw)
        if prev is not None and abs(prev - obj) < tolerance:
            break
        prev = obj
    return avg, obj


def _dcd_linear(Z, y, lam, epochs, rng, tolerance, sample_weight=None):
    m, D = Z.shape
    sw = np.full(m, 1.0 / m) if sample_weight is None else sample_weight
    C = sw / lam
    qd = np.einsum("ij,ij->i", Z, Z)
    alpha = np.zeros(m)
    w = np.zeros(D)
    for _ in range(int(epochs)):
        max_step = 0.0
        for i in rng.permutation(m):
            if qd[i] <= 0:
                continue
            g = y[i] * float(Z[i] @ w) - 1.0
            new = min(max(alpha[i] - g / qd[i], 0.0), C[i])
            delta = new - alpha[i]
            if delta != 0.0:
                alpha[i] = new
                w += (delta * y[i]) * Z[i]
                max_step = max(max_step, abs(delta) * math.sqrt(qd[i]))
        if max_step < tolerance:
            break
    w = _project(w, math.sqrt(2.0 / lam))
    return w, _primal_objective(Z, y, w, lam, sw)


def _prepare(data, sample_weight):
    m = len(data)
    if m == 0:
        raise ValidationError("cannot train on an empty dataset")
    y = _labels(data.labels)
    if sample_weight is None:
        return y, None
    sw = np.asarray(sample_weight, dtype=np.float64).reshape(-1)
    if sw.size != m or np.any(sw < 0) or not sw.sum() > 0:
        raise ValidationError("sample_weight must be non-negative, one per sample, not all zero")
    return y, sw / sw.sum()


def train_rfsvm(
    data,
    fs: FeatureSet,
    cfg: TrainConfig,
    sample_weight=None,
    callback: Callable | None = None,
    embedded: np.ndarray | None = None,
) -> Model:
    """Fit ``w`` over the random features ``fs``.

    ``embedded`` may carry a precomputed ``embed(fs, data.points)``.
    ``callback(t, w)`` sees every stochastic iterate (pegasos only).
    """
    y, sw = _prepare(data, sample_weight)
    if data.points.shape[1] != fs.spec.dim:
        raise ValidationError(f"data dimension {data.points.shape[1]} does not match features ({fs.spec.dim})")
    Z = embed(fs, data.points) if embedded is None else embedded
    Z = np.atleast_2d(Z)
    if not np.all(np.isfinite(Z)):
        raise ValidationError("embedded features are not finite")
    rng = _rng.make_rng(cfg.seed, _rng.SOLVER)
    if cfg.solver == "pegasos":
        w, obj = pegasos(Z, y, cfg.lam, cfg.epochs, rng, cfg.tolerance, sw, callback)
    else:
        w, obj = _dcd_linear(Z, y, cfg.lam, cfg.epochs, rng, cfg.tolerance, sw)
    return Model(fs, w, cfg.lam, obj)


# -- kernel baseline --------------------------------------------------------


def _kernel_pegasos(K, y, lam, epochs, rng, tolerance, sw):
    """Pegasos on the representer coefficients ``beta`` (``f = sum beta_j k(x_j, .)``).

    Tracks ``g = K beta`` and ``|f|^2 = beta^T K beta`` so each step is O(m).
    """
    m = K.shape[0]
    scale = m * sw
    radius2 = 2.0 / lam
    beta = np.zeros(m)
    g = np.zeros(m)
    sq = 0.0
    epoch_sums = []
    prev = None
    t = 0
    avg = beta.copy()
    obj = 1.0
    for _ in range(int(epochs)):
        acc = np.zeros(m)
        for i in rng.permutation(m):
            t += 1
            eta = 1.0 / (lam * t)
            viol = y[i] * g[i] < 1.0
            c = 1.0 - eta * lam
            beta *= c
            g *= c
            sq *= c * c
            if viol:
                d = eta * y[i] * scale[i]
                sq += 2.0 * d * g[i] + d * d * K[i, i]
                beta[i] += d
                g += d * K[:, i]
            if sq > radius2:
                s = math.sqrt(radius2 / sq)
                beta *= s
                g *= s
                sq *= s * s
            acc += beta
        epoch_sums.append(acc)
        keep = (len(epoch_sums) + 1) // 2
        avg = np.sum(epoch_sums[-keep:], axis=0) / (keep * m)
        ga = K @ avg
        obj = float(sw @ np.maximum(0.0, 1.0 - y * ga)) + 0.5 * lam * float(avg @ ga)
        if prev is not None and abs(prev - obj) < tolerance:
            break
        prev = obj
    return avg, obj


def _kernel_dcd(K, y, lam, epochs, rng, tolerance, sw):
    m = K.shape[0]
    C = sw / lam
    alpha = np.zeros(m)
    g = np.zeros(m)  # K @ (alpha * y)
    qd = np.diag(K).copy()
    for _ in range(int(epochs)):
        max_step = 0.0
        for i in rng.permutation(m):
            if qd[i] <= 0:
                continue
            grad = y[i] * g[i] - 1.0
            new = min(max(alpha[i] - grad / qd[i], 0.0), C[i])
            delta = new - alpha[i]
            if delta != 0.0:
                alpha[i] = new
                g += (delta * y[i]) * K[:, i]
                max_step = max(max_step, abs(delta) * math.sqrt(qd[i]))
        if max_step < tolerance:
            break
    beta = alpha * y
    ga = K @ beta
    obj = float(sw @ np.maximum(0.0, 1.0 - y * ga)) + 0.5 * lam * float(beta @ ga)
    return beta, obj


def train_ksvm(data, gamma: float, cfg: TrainConfig, sample_weight=None, gram: np.ndarray | None = None) -> KernelModel:
    """Exact Gaussian-kernel SVM trained by the kernelized version of the same solver."""
    m = len(data)
    if m > KSVM_MAX_SAMPLES:
        raise SizeError(f"kernel SVM is limited to {KSVM_MAX_SAMPLES} samples, got {m}")
    y, sw = _prepare(data, sample_weight)
    if sw is None:
        sw = np.full(m, 1.0 / m)
    K = gaussian_gram(data.points, data.points, gamma) if gram is None else gram
    rng = _rng.make_rng(cfg.seed, _rng.SOLVER)
    if cfg.solver == "pegasos":
        beta, obj = _kernel_pegasos(K, y, cfg.lam, cfg.epochs, rng, cfg.tolerance, sw)
    else:
        beta, obj = _kernel_dcd(K, y, cfg.lam, cfg.epochs, rng, cfg.tolerance, sw)
    return KernelModel(beta, data.points, float(gamma), cfg.lam, obj)
