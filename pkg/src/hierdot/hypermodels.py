"""
Gaussian prior models, hyperpriors on their variances, the closed-form
variance updates used by the alternating solver, and CDF-based selection
of the hyperprior scale.

For a residual ``z`` (x_j - mu, or a difference d_t) and variance
``theta`` the per-entry objective minimised by the variance update is::

    0.5 * z**2 / theta + penalty(theta)

with ``penalty`` given by :func:`hyper_objective_terms`:

=================  ================================================
fixed              0.5 log(theta)
exponential        gamma / (2 theta) + 0.5 log(theta)
standard gamma     theta / scale - eta log(theta / scale)
inverse gamma      scale / theta + (beta + 3/2) log(theta / scale)
=================  ================================================
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy import special

from .errors import ValidationError
from .mesh import DifferenceStructure

__all__ = [
    "Fixed",
    "Exponential",
    "StandardGamma",
    "InverseGamma",
    "HyperpriorSpec",
    "UncorrelatedPrior",
    "DifferencePrior",
    "update_theta",
    "update_theta_exponential",
    "update_theta_standard_gamma",
    "update_theta_inverse_gamma",
    "hyper_objective_terms",
    "gamma_cdf",
    "inverse_gamma_cdf",
    "select_scale_from_cdf",
    "make_hyperprior",
]


def _positive(name, value):
    arr = np.asarray(value, dtype=float)
    if not np.all(arr > 0):
        raise ValidationError(f"{name} must be positive, got {value!r}")


@dataclass(frozen=True)
class Fixed:
    """Variances held at their initial values (non-hierarchical prior)."""

    kind = "fixed"


@dataclass(frozen=True)
class Exponential:
    gamma: float
    kind = "exponential"

    def __post_init__(self):
        _positive("gamma", self.gamma)


@dataclass(frozen=True, eq=False)
class StandardGamma:
    eta: float
    vartheta: float | np.ndarray
    kind = "standard-gamma"

    def __post_init__(self):
        _positive("eta", self.eta)
        _positive("vartheta", self.vartheta)


@dataclass(frozen=True, eq=False)
class InverseGamma:
    beta: float
    vartheta: float | np.ndarray
    kind = "inverse-gamma"

    def __post_init__(self):
        _positive("beta", self.beta)
        _positive("vartheta", self.vartheta)


HyperpriorSpec = Union[Fixed, Exponential, StandardGamma, InverseGamma]


def update_theta_exponential(z, gamma):
    return np.square(z) + gamma


def update_theta_standard_gamma(z, eta, vartheta):
    return vartheta * (eta / 2 + np.sqrt(eta**2 / 4 + np.square(z) / (2 * vartheta)))


def update_theta_inverse_gamma(z, beta, vartheta):
    return (vartheta + 0.5 * np.square(z)) / (beta + 1.5)


def update_theta(z, spec: HyperpriorSpec, theta=None):
    """Minimise the per-entry variance objective for fixed residuals ``z``.

    For :class:`Fixed` the current ``theta`` is returned unchanged.
    """
    if isinstance(spec, Exponential):
        return update_theta_exponential(z, spec.gamma)
    if isinstance(spec, StandardGamma):
        return update_theta_standard_gamma(z, spec.eta, spec.vartheta)
    if isinstance(spec, InverseGamma):
        return update_theta_inverse_gamma(z, spec.beta, spec.vartheta)
    if isinstance(spec, Fixed):
        if theta is None:
            raise ValidationError("fixed hyperprior needs the current variances")
        return np.asarray(theta, dtype=float)
    raise TypeError(f"unknown hyperprior {spec!r}")


def hyper_objective_terms(theta, spec: HyperpriorSpec) -> float:
    """Sum of the variance-dependent terms of the MAP objective."""
    theta = np.asarray(theta, dtype=float)
    if np.any(theta <= 0):
        raise ValidationError("variances must be positive")
    if isinstance(spec, Fixed):
        return 0.5 * float(np.sum(np.log(theta)))
    if isinstance(spec, Exponential):
        return float(np.sum(spec.gamma / (2 * theta)) + 0.5 * np.sum(np.log(theta)))
    if isinstance(spec, StandardGamma):
        r = theta / spec.vartheta
        return float(np.sum(r - spec.eta * np.log(r)))
    if isinstance(spec, InverseGamma):
        return float(
            np.sum(spec.vartheta / theta + (spec.beta + 1.5) * np.log(theta / spec.vartheta))
        )
    raise TypeError(f"unknown hyperprior {spec!r}")


def gamma_cdf(u, shape, scale):
    """CDF of Gamma(shape, scale) at ``u``: P(shape, u / scale)."""
    return special.gammainc(shape, np.asarray(u) / scale)


def inverse_gamma_cdf(u, shape, scale):
    """CDF of InvGamma(shape, scale) at ``u``: 1 - P(shape, scale / u)."""
    return special.gammaincc(shape, scale / np.asarray(u))


def select_scale_from_cdf(
    m_bound: float,
    quantile: float = 0.95,
    kind: str = "standard-gamma",
    shape: float = 1.5,
    rtol: float = 1e-10,
) -> float:
    """Scale such that the hyperprior CDF at (m_bound / 2)**2 equals ``quantile``.

    Both CDFs decrease monotonically in the scale, so the root is found by
    bisection in log-scale.
    """
    if kind in ("standard-gamma", "gamma"):
        cdf = gamma_cdf
    elif kind == "inverse-gamma":
        cdf = inverse_gamma_cdf
    elif kind == "exponential":
        raise ValidationError(
            "CDF selection not applicable to the exponential hyperprior"
        )
    else:
        raise ValidationError(f"unknown hyperprior kind {kind!r}")
    if not m_bound > 0:
        raise ValidationError(f"magnitude bound must be positive, got {m_bound}")
    if not 0 < quantile < 1:
        raise ValidationError(f"quantile must lie in (0, 1), got {quantile}")
    _positive("shape", shape)

    u = (m_bound / 2) ** 2
    lo, hi = u, u
    while cdf(u, shape, lo) < quantile:
        lo /= 10
    while cdf(u, shape, hi) > quantile:
        hi *= 10
    while hi - lo > rtol * lo:
        mid = np.sqrt(lo * hi)
        if cdf(u, shape, mid) > quantile:
            lo = mid
        else:
            hi = mid
    return float(np.sqrt(lo * hi))


def make_hyperprior(kind: str, **params) -> HyperpriorSpec:
    """Build a hyperprior from its configuration name and parameters."""
    if kind == "fixed":
        return Fixed()
    if kind == "exponential":
        return Exponential(params["gamma"])
    if kind == "standard-gamma":
        return StandardGamma(params.get("eta", 1e-4), params["vartheta"])
    if kind == "inverse-gamma":
        return InverseGamma(params.get("beta", 1.5), params["vartheta"])
    raise ValidationError(f"unknown hyperprior kind {kind!r}")


@dataclass(frozen=True)
class UncorrelatedPrior:
    """Independent Gaussians with one mean per parameter class.

    ``sizes[c]`` entries of the unknown belong to class ``c``; for optical
    fields the classes are (absorption, scattering). ``theta0[c]`` is the
    initial (or, with a fixed hyperprior, permanent) variance of class ``c``.
    """

    means: tuple
    sizes: tuple
    theta0: tuple

    def __post_init__(self):
        if not len(self.means) == len(self.sizes) == len(self.theta0):
            raise ValidationError("means, sizes and theta0 need one entry per class")
        _positive("theta0", self.theta0)

    @classmethod
    def optical(cls, n, mua=0.01, mus=1.0, theta0=(0.0025**2, 0.25**2)):
        return cls((float(mua), float(mus)), (n, n), tuple(theta0))

    def mean_vector(self) -> np.ndarray:
        return np.concatenate([np.full(s, m) for m, s in zip(self.means, self.sizes)])


@dataclass(frozen=True)
class DifferencePrior:
    """Gaussian prior on differences d = B x, one structure per class.

    The gauge difference of each class has mean ``gauge_means[c]`` and the
    fixed variance ``gauge_variances[c]``; it is never hierarchically updated.
    """

    structures: tuple
    gauge_means: tuple
    gauge_variances: tuple
    theta0: tuple

    def __post_init__(self):
        k = len(self.structures)
        if not len(self.gauge_means) == len(self.gauge_variances) == len(self.theta0) == k:
            raise ValidationError("gauge_means, gauge_variances and theta0 need one entry per class")
        _positive("gauge_variances", self.gauge_variances)
        _positive("theta0", self.theta0)

    @classmethod
    def optical(
        cls,
        structure: DifferenceStructure,
        mua=0.01,
        mus=1.0,
        theta0=(0.001**2, 0.1**2),
        gauge_variances=None,
    ):
        if gauge_variances is None:
            gauge_variances = ((10 * mua) ** 2, (10 * mus) ** 2)
        return cls(
            (structure, structure),
            (float(mua), float(mus)),
            tuple(gauge_variances),
            tuple(theta0),
        )
