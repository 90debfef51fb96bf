"""Random feature maps and the kernels they approximate.

Two kinds of map are supported:

* ``gaussian-rff``: random Fourier features for the Gaussian kernel
  ``exp(-|x - x'|^2 / (2 gamma^2))``. Frequencies are standard normal and the
  bandwidth is applied at embedding time, ``cos(w . x / gamma)``, so one sampled
  set serves every bandwidth.
* ``walsh-basis``: a truncated orthonormal-basis map on ``[0, 1]`` built from
  Paley-ordered Walsh functions, ``phi(w; x) = sum_j sqrt(l_j) w_j(x) w_j(w)``.

Feature vectors are scaled by ``1/sqrt(N)`` and each feature carries an
importance weight ``a_i`` (1 for plain sampling), so that the approximate
kernel is ``k_N(x, x') = (1/N) sum_i a_i^2 phi(w_i; x) phi(w_i; x')``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import pdist

from . import _rng
from .errors import DegenerateError, ValidationError

GAUSSIAN_RFF = "gaussian-rff"
WALSH_BASIS = "walsh-basis"
KINDS = (GAUSSIAN_RFF, WALSH_BASIS)


def _frozen(a, dtype=np.float64):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


def default_eigen_decay(basis_size: int) -> tuple[float, ...]:
    """``l_j = j^-2`` for ``j = 1..K``."""
    return tuple(1.0 / (j * j) for j in range(1, basis_size + 1))


@dataclass(frozen=True)
class FeatureSpec:
    kind: str = GAUSSIAN_RFF
    dim: int = 2
    bandwidth: float = 1.0
    basis_size: int = 8
    eigen_decay: tuple[float, ...] | None = None
    seed: int = 0
    # affine rescale of inputs onto [0, 1] for walsh-basis maps
    domain: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown feature kind {self.kind!r}; expected one of {KINDS}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValidationError(f"dim must be a positive integer, got {self.dim!r}")
        if self.kind == GAUSSIAN_RFF:
            if not (math.isfinite(self.bandwidth) and self.bandwidth > 0):
                raise ValidationError(f"bandwidth must be positive, got {self.bandwidth!r}")
        else:
            if self.dim != 1:
                raise ValidationError("walsh-basis maps are defined on one-dimensional inputs")
            if int(self.basis_size) != self.basis_size or self.basis_size < 1:
                raise ValidationError(f"basis_size must be a positive integer, got {self.basis_size!r}")
            decay = self.eigen_decay
            if decay is None:
                decay = default_eigen_decay(self.basis_size)
            decay = tuple(float(v) for v in decay)
            if len(decay) != self.basis_size:
                raise ValidationError("eigen_decay must have basis_size entries")
            if any(not (v > 0 and math.isfinite(v)) for v in decay):
                raise ValidationError("eigen_decay must be strictly positive")
            if any(b > a for a, b in zip(decay, decay[1:])):
                raise ValidationError("eigen_decay must be non-increasing")
            object.__setattr__(self, "eigen_decay", decay)
            lo, hi = (float(v) for v in self.domain)
            if not hi > lo:
                raise ValidationError("walsh domain must satisfy lo < hi")
            object.__setattr__(self, "domain", (lo, hi))

    @property
    def gamma(self) -> float:
        return self.bandwidth


@dataclass(frozen=True)
class FeatureSet:
    """Sampled frequencies plus importance weights; defines ``phi_N``.

    ``origin`` records the pool index of every feature when the set was
    produced by resampling, and is ``None`` for directly sampled sets.
    """

    spec: FeatureSpec
    frequencies: np.ndarray
    weights: np.ndarray
    origin: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        freqs = np.asarray(self.frequencies, dtype=np.float64)
        if freqs.ndim == 1:
            freqs = freqs.reshape(-1, 1) if self.spec.dim == 1 else freqs.reshape(1, -1)
        weights = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        if freqs.ndim != 2 or freqs.shape[1] != self.spec.dim:
            raise ValidationError(f"frequencies must have shape (N, {self.spec.dim}), got {freqs.shape}")
        if freqs.shape[0] < 1:
            raise ValidationError("a feature set needs at least one feature")
        if weights.shape[0] != freqs.shape[0]:
            raise ValidationError("frequencies and weights differ in length")
        if not (np.all(np.isfinite(freqs)) and np.all(np.isfinite(weights))):
            raise ValidationError("frequencies and weights must be finite")
        if np.any(weights <= 0):
            raise ValidationError("importance weights must be positive")
        object.__setattr__(self, "frequencies", _frozen(freqs))
        object.__setattr__(self, "weights", _frozen(weights))
        if self.origin is not None:
            object.__setattr__(self, "origin", _frozen(self.origin, np.int64))

    def __len__(self):
        return self.frequencies.shape[0]

    @property
    def n_features(self) -> int:
        return self.frequencies.shape[0]

    @property
    def output_dim(self) -> int:
        """Length of an embedded vector: 2N for Fourier maps, N for Walsh."""
        return 2 * len(self) if self.spec.kind == GAUSSIAN_RFF else len(self)

    @property
    def blocks(self) -> int:
        return 2 if self.spec.kind == GAUSSIAN_RFF else 1

    def with_bandwidth(self, gamma: float) -> "FeatureSet":
        spec = FeatureSpec(**{**self.spec.__dict__, "bandwidth": float(gamma)})
        return FeatureSet(spec, self.frequencies, self.weights, self.origin)

    def subset(self, indices, weights=None) -> "FeatureSet":
        indices = np.asarray(indices, dtype=np.int64)
        w = self.weights[indices] if weights is None else weights
        return FeatureSet(self.spec, self.frequencies[indices], w, indices)

    def equals(self, other: "FeatureSet") -> bool:
        return (
            self.spec == other.spec
            and np.array_equal(self.frequencies, other.frequencies)
            and np.array_equal(self.weights, other.weights)
        )

    # -- serialization -------------------------------------------------

    def to_dict(self) -> dict:
        spec = self.spec
        out = {
            "kind": spec.kind,
            "dim": spec.dim,
            "gamma": spec.bandwidth,
            "seed": spec.seed,
            "frequencies": self.frequencies.tolist(),
            "weights": self.weights.tolist(),
        }
        if spec.kind == WALSH_BASIS:
            out["basis_size"] = spec.basis_size
            out["eigen_decay"] = list(spec.eigen_decay)
            out["domain"] = list(spec.domain)
        if self.origin is not None:
            out["origin"] = self.origin.tolist()
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSet":
        try:
            kw = dict(kind=d["kind"], dim=int(d["dim"]), bandwidth=float(d["gamma"]), seed=int(d["seed"]))
            if d["kind"] == WALSH_BASIS:
                kw.update(
                    basis_size=int(d["basis_size"]),
                    eigen_decay=tuple(d["eigen_decay"]),
                    domain=tuple(d.get("domain", (0.0, 1.0))),
                )
            return cls(FeatureSpec(**kw), d["frequencies"], d["weights"], d.get("origin"))
        except KeyError as exc:
            raise ValidationError(f"feature set is missing key {exc.args[0]!r}") from None

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "FeatureSet":
        return cls.from_dict(json.loads(text))


def sample_features(spec: FeatureSpec, n: int, seed: int | None = None) -> FeatureSet:
    """Draw ``n`` i.i.d. frequencies for ``spec`` with unit weights.

    Gaussian maps draw standard-normal vectors in R^d; Walsh maps draw
    uniform points on [0, 1]. ``seed`` defaults to ``spec.seed``.
    """
    if int(n) != n or n < 1:
        raise ValidationError(f"number of features must be a positive integer, got {n!r}")
    n = int(n)
    if seed is None:
        seed = spec.seed
    elif seed != spec.seed:
        spec = FeatureSpec(**{**spec.__dict__, "seed": int(seed)})
    rng = _rng.make_rng(seed, _rng.FEATURES)
    if spec.kind == GAUSSIAN_RFF:
        freqs = rng.standard_normal((n, spec.dim))
    else:
        freqs = rng.random((n, 1))
    return FeatureSet(spec, freqs, np.ones(n))


# -- Walsh functions -----------------------------------------------------


def _bits_needed(k: int) -> int:
    return max(1, math.ceil(math.log2(k))) if k > 1 else 1


def walsh_functions(u, count: int) -> np.ndarray:
    """Values of the first ``count`` Paley-ordered Walsh functions.

    ``w_j(u) = (-1)^(sum_k bit_k(j) * digit_{k+1}(u))`` where ``digit_k`` is the
    k-th binary digit of ``u`` in [0, 1]. Returns an array of shape
    ``(len(u), count)``.
    """
    u = np.atleast_1d(np.asarray(u, dtype=np.float64)).reshape(-1)
    nbits = _bits_needed(count)
    scale = 1 << nbits
    q = np.floor(np.clip(u, 0.0, 1.0) * scale).astype(np.int64)
    q = np.minimum(q, scale - 1)
    j = np.arange(count, dtype=np.int64)
    parity = np.zeros((u.shape[0], count), dtype=np.int64)
    for k in range(nbits):
        # bit k of j pairs with the (k+1)-th binary digit of u
        digit = (q >> (nbits - 1 - k)) & 1
        parity += np.outer(digit, (j >> k) & 1)
    return np.where(parity % 2 == 0, 1.0, -1.0)


def walsh_kernel(x, x_prime, eigen_decay) -> float:
    """Truncated Walsh kernel ``sum_j l_j w_j(x) w_j(x')`` on [0, 1]."""
    lam = np.asarray(eigen_decay, dtype=np.float64)
    wx = walsh_functions(x, lam.size)[0]
    wy = walsh_functions(x_prime, lam.size)[0]
    return float(np.sum(lam * wx * wy))


# -- embedding -----------------------------------------------------------


def _as_points(fs: FeatureSet, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim <= 1
    if fs.spec.dim == 1 and x.ndim == 1 and x.shape[0] != 1:
        # a 1-d array of scalar inputs
        x = x.reshape(-1, 1)
        single = False
    X = np.atleast_2d(x)
    if X.ndim != 2 or X.shape[1] != fs.spec.dim:
        raise ValidationError(f"expected points of dimension {fs.spec.dim}, got shape {x.shape}")
    return X, single


def embed(fs: FeatureSet, x) -> np.ndarray:
    """Random feature vector ``phi_N(x)``.

    ``x`` may be one point (returns a vector) or an ``(m, d)`` array (returns
    an ``(m, output_dim)`` array). Fourier maps put the cosine block first.
    """
    X, single = _as_points(fs, x)
    n = len(fs)
    scale = fs.weights / math.sqrt(n)
    if fs.spec.kind == GAUSSIAN_RFF:
        proj = X @ (fs.frequencies.T / fs.spec.bandwidth)
        out = np.empty((X.shape[0], 2 * n))
        out[:, :n] = np.cos(proj) * scale
        out[:, n:] = np.sin(proj) * scale
    else:
        lo, hi = fs.spec.domain
        u = (X[:, 0] - lo) / (hi - lo)
        lam = np.asarray(fs.spec.eigen_decay)
        wx = walsh_functions(u, lam.size)
        ww = walsh_functions(fs.frequencies[:, 0], lam.size)
        out = (wx * np.sqrt(lam)) @ ww.T * scale
    return out[0] if single else out


def kernel_approx(fs: FeatureSet, x, x_prime) -> float:
    """``k_N(x, x') = embed(x) . embed(x')``."""
    X, _ = _as_points(fs, x)
    Y, _ = _as_points(fs, x_prime)
    if X.shape[0] != 1 or Y.shape[0] != 1:
        raise ValidationError("kernel_approx takes single points; use embed for batches")
    return float(embed(fs, X)[0] @ embed(fs, Y)[0])


def kernel_exact(x, x_prime, gamma: float) -> float:
    """Gaussian kernel ``exp(-|x - x'|^2 / (2 gamma^2))``."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    y = np.asarray(x_prime, dtype=np.float64).reshape(-1)
    if x.shape != y.shape:
        raise ValidationError(f"dimension mismatch: {x.shape} vs {y.shape}")
    if not gamma > 0:
        raise ValidationError(f"gamma must be positive, got {gamma!r}")
    d = x - y
    return math.exp(-float(d @ d) / (2.0 * gamma * gamma))


def gaussian_gram(X, Y, gamma: float) -> np.ndarray:
    """Matrix of Gaussian kernel values between the rows of ``X`` and ``Y``."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    if X.shape[1] != Y.shape[1]:
        raise ValidationError(f"dimension mismatch: {X.shape[1]} vs {Y.shape[1]}")
    if not gamma > 0:
        raise ValidationError(f"gamma must be positive, got {gamma!r}")
    sq = (X * X).sum(1)[:, None] + (Y * Y).sum(1)[None, :] - 2.0 * (X @ Y.T)
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-sq / (2.0 * gamma * gamma))


def bandwidth_heuristic(xs, cap: int = 1000, seed: int = 0) -> float:
    """Mean pairwise Euclidean distance over a seeded subsample of ``cap`` points."""
    X = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    if X.shape[0] < 2:
        raise ValidationError("bandwidth heuristic needs at least 2 points")
    if cap < 2:
        raise ValidationError("cap must be at least 2")
    if X.shape[0] > cap:
        rng = _rng.make_rng(seed, _rng.BANDWIDTH)
        X = X[np.sort(rng.choice(X.shape[0], size=cap, replace=False))]
    gamma = float(np.mean(pdist(X)))
    if not gamma > 0:
        raise DegenerateError("all points coincide; bandwidth would be zero")
    return gamma
