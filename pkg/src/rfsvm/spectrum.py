"""Empirical integral-operator spectra, degrees of freedom and feature-budget planners.

The integral operator of a kernel is estimated by the Gram matrix divided by
the sample count. Its eigenvalues feed the degrees of freedom
``d(mu) = sum_i l_i / (l_i + mu)``, decay-law fits, the closed-form bounds on
``d(mu)`` for polynomial and sub-exponential decay, and two parameter
planners: one driven by a decay fit, one by the separation between classes.

The leading constants of these rates are not known numerically; planners
expose them as a ``constant`` argument (default 1), so planned feature
counts are order-of-magnitude guidance.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import SizeError, ValidationError
from .features import gaussian_gram

SPECTRUM_GUARD = 5000
EIGEN_FLOOR = 1e-12
POLYNOMIAL = "polynomial"
SUBEXPONENTIAL = "subexponential"
_FIT_ALIASES = {"poly": POLYNOMIAL, "polynomial": POLYNOMIAL, "subexp": SUBEXPONENTIAL, "subexponential": SUBEXPONENTIAL}


@dataclass(frozen=True)
class SpectrumEstimate:
    eigenvalues: np.ndarray
    sample_count: int
    kernel: dict = field(default_factory=dict)
    # smallest eigenvalue before clipping negatives to zero
    raw_min: float = 0.0
    dim: int | None = None

    def __post_init__(self):
        ev = np.array(self.eigenvalues, dtype=np.float64).reshape(-1)
        if np.any(np.diff(ev) > 0):
            raise ValidationError("eigenvalues must be non-increasing")
        ev.setflags(write=False)
        object.__setattr__(self, "eigenvalues", ev)


@dataclass(frozen=True)
class DecayFit:
    """``kind='polynomial'``: ``l_i ~ c1 i^-c2``; ``kind='subexponential'``: ``l_i ~ c3 exp(-c4 i^(1/d))``."""

    kind: str
    params: dict
    residual: float = 0.0

    def __post_init__(self):
        if self.kind == POLYNOMIAL:
            c1, c2 = self.params.get("c1"), self.params.get("c2")
            if c1 is None or c2 is None or not c1 > 0:
                raise ValidationError("polynomial fit needs c1 > 0 and c2")
        elif self.kind == SUBEXPONENTIAL:
            p = self.params
            if not (p.get("c3", 0) > 0 and p.get("c4", 0) > 0 and int(p.get("d", 0)) >= 1):
                raise ValidationError("sub-exponential fit needs c3 > 0, c4 > 0 and d >= 1")
        else:
            raise ValidationError(f"unknown decay kind {self.kind!r}")

    @classmethod
    def polynomial(cls, c1, c2, residual=0.0):
        return cls(POLYNOMIAL, {"c1": float(c1), "c2": float(c2)}, residual)

    @classmethod
    def subexponential(cls, c3, c4, d, residual=0.0):
        return cls(SUBEXPONENTIAL, {"c3": float(c3), "c4": float(c4), "d": int(d)}, residual)

    def model(self, i) -> np.ndarray:
        i = np.asarray(i, dtype=np.float64)
        p = self.params
        if self.kind == POLYNOMIAL:
            return p["c1"] * i ** (-p["c2"])
        return p["c3"] * np.exp(-p["c4"] * i ** (1.0 / p["d"]))


@dataclass(frozen=True)
class FeatureCountPlan:
    mu: float | None
    dof: float | None
    n_features: int
    lam: float
    gamma: float | None
    delta: float

    def to_dict(self) -> dict:
        return {"mu": self.mu, "dof": self.dof, "n_features": self.n_features,
                "lambda": self.lam, "gamma": self.gamma, "delta": self.delta}


def empirical_spectrum(xs, gamma: float, guard: int = SPECTRUM_GUARD) -> SpectrumEstimate:
    """Eigenvalues of the Gaussian Gram matrix divided by ``m``, descending, negatives clipped."""
    X = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    m = X.shape[0]
    if m < 1:
        raise ValidationError("need at least one point")
    if m > guard:
        raise SizeError(f"spectrum estimation is limited to {guard} points, got {m}")
    K = gaussian_gram(X, X, gamma) / m
    ev = np.linalg.eigvalsh(K)[::-1]
    raw_min = float(ev[-1])
    ev = np.maximum(ev, 0.0)
    # clipping can only break monotonicity at the tail of zeros; re-sort defensively
    ev = np.sort(ev)[::-1]
    return SpectrumEstimate(ev, m, {"kind": "gaussian", "gamma": float(gamma)}, raw_min, X.shape[1])


def _eigs(spec) -> np.ndarray:
    if isinstance(spec, SpectrumEstimate):
        return spec.eigenvalues
    return np.asarray(spec, dtype=np.float64).reshape(-1)


def degrees_of_freedom(spec, mu: float) -> float:
    """``sum_i l_i / (l_i + mu)``; accepts a :class:`SpectrumEstimate` or a plain sequence."""
    if not mu > 0:
        raise ValidationError(f"mu must be positive, got {mu!r}")
    ev = _eigs(spec)
    return float(np.sum(ev / (ev + mu)))


def fit_decay(spec, kind: str, d: int | None = None) -> DecayFit:
    """Least-squares fit of ``log l_i`` against ``log i`` or ``i^(1/d)``.

    Only indices with ``l_i > 1e-12`` are used. ``d`` defaults to the input
    dimension recorded in the estimate (or 1).
    """
    kind = _FIT_ALIASES.get(kind, kind)
    ev = _eigs(spec)
    idx = np.flatnonzero(ev > EIGEN_FLOOR)
    if idx.size < 10:
        raise ValidationError(f"need at least 10 eigenvalues above {EIGEN_FLOOR}, got {idx.size}")
    i = idx + 1.0
    logl = np.log(ev[idx])
    if kind == POLYNOMIAL:
        A = np.column_stack([np.ones_like(i), -np.log(i)])
    elif kind == SUBEXPONENTIAL:
        if d is None:
            d = getattr(spec, "dim", None) or 1
        A = np.column_stack([np.ones_like(i), -(i ** (1.0 / d))])
    else:
        raise ValidationError(f"unknown decay kind {kind!r}")
    coef, *_ = np.linalg.lstsq(A, logl, rcond=None)
    residual = float(np.mean((A @ coef - logl) ** 2))
    if kind == POLYNOMIAL:
        return DecayFit.polynomial(math.exp(coef[0]), coef[1], residual)
    if not coef[1] > 0:
        raise ValidationError("fitted sub-exponential rate is not positive")
    return DecayFit.subexponential(math.exp(coef[0]), coef[1], d, residual)


def dof_bound(fit: DecayFit, mu: float) -> float:
    """Closed-form upper bound on ``d(mu)`` for the fitted decay law.

    Polynomial: ``2 c2/(c2-1) (c1/mu)^(1/c2)``, valid for ``mu < c1``.
    Sub-exponential: ``5 c4^-d ln^d(c3/mu)``, valid for
    ``mu < c3 exp(-max(c4, 1/c4) d^2)``. Outside the range a warning is issued.
    """
    if not mu > 0:
        raise ValidationError(f"mu must be positive, got {mu!r}")
    p = fit.params
    if fit.kind == POLYNOMIAL:
        c1, c2 = p["c1"], p["c2"]
        if not c2 > 1:
            raise ValidationError(f"polynomial bound needs c2 > 1, got {c2}")
        if not mu < c1:
            warnings.warn(f"mu={mu} is outside the bound's range mu < c1={c1}", stacklevel=2)
        return 2.0 * c2 / (c2 - 1.0) * (c1 / mu) ** (1.0 / c2)
    c3, c4, d = p["c3"], p["c4"], p["d"]
    limit = c3 * math.exp(-max(c4, 1.0 / c4) * d * d)
    if not mu < limit:
        warnings.warn(f"mu={mu} is outside the bound's range mu < {limit:.3g}", stacklevel=2)
    if not c3 > mu:
        raise ValidationError("sub-exponential bound needs mu < c3")
    return 5.0 * c4 ** (-d) * math.log(c3 / mu) ** d


def feature_count(dof: float, delta: float) -> int:
    """``ceil(5 d ln(16 d / delta))``: features sufficient for approximation at level ``mu``."""
    if not (0 < delta < 1):
        raise ValidationError(f"delta must lie in (0, 1), got {delta!r}")
    if not dof > 0:
        raise ValidationError(f"degrees of freedom must be positive, got {dof!r}")
    return max(1, math.ceil(5.0 * dof * math.log(16.0 * dof / delta)))


def plan_realizable(m: int, fit: DecayFit, delta: float, constant: float = 1.0) -> FeatureCountPlan:
    """Parameter choices for the realizable case.

    Polynomial decay: ``lambda = m^(-c2/(2+c2))``, ``mu = c1 m^(-2 c2/(2+c2))``.
    Sub-exponential decay: ``lambda = 1/m``, ``mu = c3/m^2``.
    ``N = feature_count(constant * dof_bound(fit, mu), delta)``.
    """
    if int(m) != m or m < 2:
        raise ValidationError(f"m must be an integer >= 2, got {m!r}")
    p = fit.params
    if fit.kind == POLYNOMIAL:
        c1, c2 = p["c1"], p["c2"]
        if not c2 > 1:
            raise ValidationError(f"polynomial decay needs c2 > 1, got {c2}")
        lam = m ** (-c2 / (2.0 + c2))
        mu = c1 * m ** (-2.0 * c2 / (2.0 + c2))
    else:
        c4, d = p["c4"], p["d"]
        if m < math.exp(max(c4, 1.0 / c4) * d * d / 2.0):
            warnings.warn("m is below the sample size where the sub-exponential prescription applies", stacklevel=2)
        lam = 1.0 / m
        mu = p["c3"] / (m * m)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        dof = constant * dof_bound(fit, mu)
    return FeatureCountPlan(mu, dof, feature_count(dof, delta), lam, None, delta)


def plan_separation(m: int, tau: float, d: int, delta: float, constant: float = 1.0) -> FeatureCountPlan:
    """Parameter choices for separated classes with a Gaussian kernel.

    ``lambda = 1/m``, ``gamma = tau/sqrt(ln m)``,
    ``N = ceil(C ln^(2d)(m) (ln ln m + ln(1/delta)))``.
    """
    if int(m) != m or m < 3:
        raise ValidationError(f"m must be an integer >= 3, got {m!r}")
    if not tau > 0:
        raise ValidationError(f"tau must be positive, got {tau!r}")
    if int(d) != d or d < 1:
        raise ValidationError(f"d must be a positive integer, got {d!r}")
    if not (0 < delta < 1):
        raise ValidationError(f"delta must lie in (0, 1), got {delta!r}")
    lnm = math.log(m)
    n = math.ceil(constant * lnm ** (2 * d) * (math.log(lnm) + math.log(1.0 / delta)))
    return FeatureCountPlan(None, None, max(1, n), 1.0 / m, tau / math.sqrt(lnm), delta)
