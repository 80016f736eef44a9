"""Parametric model families with site-specific nuisance parameters.

Each observation carries an outcome ``y``, common covariates ``x`` (the
design of the shared parameter ``beta``, dimension ``p``) and nuisance
covariates ``z`` (the design of the site-specific parameter ``gamma``,
dimension ``q``).  A :class:`ModelFamily` provides the log density and
its first/second derivatives in the stacked order ``(beta, gamma)``,
plus log density ratios between two nuisance values at a common beta.

Two families are implemented:

* :class:`LogisticFamily` — binary outcome,
  ``logit Pr(Y=1 | x, z) = beta'x + gamma'z``.  The reference model of
  the simulation study.
* :class:`GaussianFamily` — ``Y = beta'x + gamma'z + eps`` with unit
  noise variance.  Quadratic log likelihood, used as an analytic
  oracle (closed-form least-squares fits, exact Newton steps).

All derivative code is vectorized over observations; the
per-observation operations delegate to the batched ones.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


@dataclass(frozen=True)
class ParameterPartition:
    """Split of the per-site parameter into common and nuisance blocks.

    ``p`` common parameters (shared across sites) come first, ``q``
    site-specific nuisance parameters follow; ``d = p + q``.
    """

    p: int
    q: int

    def __post_init__(self):
        if self.p < 1:
            raise ValueError(f"need at least one common parameter, got p={self.p}")
        if self.q < 1:
            raise ValueError(f"need at least one nuisance parameter, got q={self.q}")

    @property
    def d(self) -> int:
        return self.p + self.q

    def split(self, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Split a stacked ``(d,)`` vector into ``(beta, gamma)``."""
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.d,):
            raise ValueError(f"expected theta of shape ({self.d},), got {theta.shape}")
        return theta[: self.p], theta[self.p :]


@dataclass(frozen=True)
class Observation:
    """One outcome with its common and nuisance covariate rows."""

    y: float
    x: np.ndarray
    z: np.ndarray


class SiteData:
    """One site's observations: ``y`` (n,), ``x`` (n,p), ``z`` (n,q).

    Immutable after construction; arrays are copied and locked.
    """

    def __init__(self, y, x, z, site_id: int = 0):
        y = np.array(y, dtype=float).reshape(-1)
        x = np.atleast_2d(np.array(x, dtype=float))
        z = np.atleast_2d(np.array(z, dtype=float))
        if x.shape[0] != y.shape[0] or z.shape[0] != y.shape[0]:
            raise ValueError(
                f"row mismatch: y has {y.shape[0]} rows, x {x.shape[0]}, z {z.shape[0]}"
            )
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(x)) and np.all(np.isfinite(z))):
            raise ValueError("non-finite value in site data")
        for arr in (y, x, z):
            arr.setflags(write=False)
        self.y = y
        self.x = x
        self.z = z
        self.site_id = site_id

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def partition(self) -> ParameterPartition:
        return ParameterPartition(self.x.shape[1], self.z.shape[1])

    def design(self) -> np.ndarray:
        """Stacked design matrix ``[x | z]`` of shape (n, d)."""
        return np.hstack([self.x, self.z])

    def row(self, i: int) -> Observation:
        return Observation(float(self.y[i]), self.x[i].copy(), self.z[i].copy())

    def __repr__(self) -> str:
        part = self.partition
        return f"SiteData(site={self.site_id}, n={self.n}, p={part.p}, q={part.q})"


def _obs_as_data(obs: Observation) -> SiteData:
    return SiteData(np.array([obs.y]), np.atleast_2d(obs.x), np.atleast_2d(obs.z))


class ModelFamily(ABC):
    """A parametric density f(y; beta, gamma) with derivatives.

    Subclasses implement the batched primitives; everything else
    (per-observation API, site log likelihoods, density ratios) is
    derived here.
    """

    tag: str = ""

    def __init__(self, partition: ParameterPartition):
        self.partition = partition

    # -- batched primitives -------------------------------------------------

    @abstractmethod
    def log_density_all(self, data: SiteData, beta, gamma) -> np.ndarray:
        """Per-observation log f, shape ``(n,)``."""

    @abstractmethod
    def score_all(self, data: SiteData, beta, gamma) -> np.ndarray:
        """Per-observation score ``d log f / d(beta, gamma)``, shape ``(n, d)``."""

    @abstractmethod
    def curvature_weights(self, data: SiteData, beta, gamma) -> np.ndarray:
        """Weights ``w_i`` with per-observation Hessian ``-w_i u_i u_i'``.

        Both families have log-density Hessians of this form, with
        ``u_i = (x_i, z_i)``; the weight carries the whole parameter
        dependence.
        """

    # -- derived batched operations -----------------------------------------

    def neg_hessian_mean(self, data: SiteData, beta, gamma, weights=None) -> np.ndarray:
        """``-(1/n) sum_i w_i * d^2 log f_i``, optionally reweighted.

        ``weights`` (e.g. density ratios) multiply the curvature
        observation-wise; ``None`` means all ones.
        """
        w = self.curvature_weights(data, beta, gamma)
        if weights is not None:
            w = w * np.asarray(weights, dtype=float)
        u = data.design()
        return (u.T * w) @ u / data.n

    def log_ratio_all(self, data: SiteData, beta, gamma_num, gamma_den) -> np.ndarray:
        """Per-observation ``log f(y; beta, gamma_num) - log f(y; beta, gamma_den)``."""
        return self.log_density_all(data, beta, gamma_num) - self.log_density_all(
            data, beta, gamma_den
        )

    def loglik(self, data: SiteData, beta, gamma) -> float:
        """Site log likelihood ``(1/n) sum_i log f_i``."""
        return float(np.mean(self.log_density_all(data, beta, gamma)))

    def loglik_grad(self, data: SiteData, beta, gamma) -> np.ndarray:
        """Gradient of :meth:`loglik`, shape ``(d,)``."""
        return self.score_all(data, beta, gamma).mean(axis=0)

    # -- per-observation API -------------------------------------------------

    def log_density(self, obs: Observation, beta, gamma) -> float:
        value = float(self.log_density_all(_obs_as_data(obs), beta, gamma)[0])
        if not np.isfinite(value):
            raise ValueError(f"non-finite log density at y={obs.y}")
        return value

    def score(self, obs: Observation, beta, gamma) -> np.ndarray:
        return self.score_all(_obs_as_data(obs), beta, gamma)[0]

    def hessian(self, obs: Observation, beta, gamma) -> np.ndarray:
        """Hessian of log f for one observation, shape ``(d, d)``."""
        data = _obs_as_data(obs)
        w = float(self.curvature_weights(data, beta, gamma)[0])
        u = data.design()[0]
        return -w * np.outer(u, u)

    def log_density_ratio(self, obs: Observation, beta, gamma_num, gamma_den) -> float:
        return float(self.log_ratio_all(_obs_as_data(obs), beta, gamma_num, gamma_den)[0])

    # -- shared validation ---------------------------------------------------

    def _check(self, data: SiteData, beta, gamma) -> tuple[np.ndarray, np.ndarray]:
        beta = np.asarray(beta, dtype=float).reshape(-1)
        gamma = np.asarray(gamma, dtype=float).reshape(-1)
        part = self.partition
        if beta.shape[0] != part.p or gamma.shape[0] != part.q:
            raise ValueError(
                f"parameter shape mismatch: expected p={part.p}, q={part.q}, "
                f"got {beta.shape[0]}, {gamma.shape[0]}"
            )
        if data.x.shape[1] != part.p or data.z.shape[1] != part.q:
            raise ValueError(
                f"design shape mismatch: data has p={data.x.shape[1]}, "
                f"q={data.z.shape[1]}, family expects p={part.p}, q={part.q}"
            )
        if not (np.all(np.isfinite(beta)) and np.all(np.isfinite(gamma))):
            raise ValueError("non-finite parameter value")
        return beta, gamma


class LogisticFamily(ModelFamily):
    """Binary-outcome logistic regression, site-specific nuisance block."""

    tag = "logistic"

    def _eta(self, data: SiteData, beta, gamma) -> np.ndarray:
        beta, gamma = self._check(data, beta, gamma)
        return data.x @ beta + data.z @ gamma

    def log_density_all(self, data, beta, gamma):
        bad = ~np.isin(data.y, (0.0, 1.0))
        if np.any(bad):
            raise ValueError(
                f"logistic outcome must be 0/1; offending row {int(np.argmax(bad))}"
            )
        eta = self._eta(data, beta, gamma)
        # y*eta - log(1 + exp(eta)), stable on both tails
        return data.y * eta - np.logaddexp(0.0, eta)

    def score_all(self, data, beta, gamma):
        eta = self._eta(data, beta, gamma)
        resid = data.y - expit(eta)
        return resid[:, None] * data.design()

    def curvature_weights(self, data, beta, gamma):
        mu = expit(self._eta(data, beta, gamma))
        return mu * (1.0 - mu)


class GaussianFamily(ModelFamily):
    """Gaussian linear model with fixed unit noise variance.

    Exists as an analytic oracle: the log likelihood is quadratic, so
    Newton solves are exact and the MLE has a normal-equations closed
    form.  Estimating the noise variance is deliberately not supported.
    """

    tag = "gaussian"

    def _resid(self, data: SiteData, beta, gamma) -> np.ndarray:
        beta, gamma = self._check(data, beta, gamma)
        return data.y - data.x @ beta - data.z @ gamma

    def log_density_all(self, data, beta, gamma):
        r = self._resid(data, beta, gamma)
        return -_LOG_SQRT_2PI - 0.5 * r * r

    def score_all(self, data, beta, gamma):
        r = self._resid(data, beta, gamma)
        return r[:, None] * data.design()

    def curvature_weights(self, data, beta, gamma):
        self._check(data, beta, gamma)
        return np.ones(data.n)


_FAMILIES = {"logistic": LogisticFamily, "gaussian": GaussianFamily}


def make_family(tag: str, partition: ParameterPartition) -> ModelFamily:
    """Instantiate a family by tag (``logistic`` or ``gaussian``)."""
    try:
        cls = _FAMILIES[tag]
    except KeyError:
        raise ValueError(f"unknown family {tag!r}; choose from {sorted(_FAMILIES)}") from None
    return cls(partition)
