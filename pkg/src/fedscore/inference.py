"""Variance estimation, confidence intervals and Wald tests.

The efficient estimators are covered by the density-ratio-tilted
variance (:func:`tilted_variance`): the local site reweights its own
curvature to estimate every other site's partial information, and the
average of those Schur complements, inverted and scaled by the total
sample size, estimates the sampling covariance of the common
parameter.  The averaging baseline gets the mean-of-inverses form
(:func:`average_variance`), which is never smaller in the Loewner
order — the inefficiency of averaging under heterogeneity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaincc, ndtri

from .model import ModelFamily, SiteData
from .score import partial_information, tilted_information


@dataclass(frozen=True)
class InferenceResult:
    """Covariance-derived summaries for one estimate."""

    covariance: np.ndarray     # (p, p), total-sample scale already applied
    std_errors: np.ndarray     # (p,)
    ci_lower: np.ndarray       # (p,)
    ci_upper: np.ndarray       # (p,)
    level: float
    chi_square: float | None   # Wald statistic vs the supplied null
    p_value: float | None
    dof: int


def tilted_variance(
    family: ModelFamily,
    local_data: SiteData,
    beta_hat,
    gamma_bar: dict[int, np.ndarray],
    local_site: int,
    n_sites: dict[int, int] | None = None,
) -> np.ndarray:
    """Estimated covariance of the common parameter, local data only.

    For each site j the local observations are reweighted by the
    density ratio at ``(beta_hat, gamma_bar[j])`` against the local
    nuisance, giving a tilted information estimate whose Schur
    complement stands in for that site's partial information.  The
    sample-size-weighted average is inverted and scaled by one over
    the total sample size (``n_sites`` defaults to every site matching
    the local size, the equal-n setting).
    """
    beta_hat = np.asarray(beta_hat, dtype=float)
    sites = list(gamma_bar)
    if n_sites is None:
        n_sites = {j: local_data.n for j in sites}
    n_total = sum(n_sites[j] for j in sites)

    p = family.partition.p
    info = np.zeros((p, p))
    for j in sites:
        blocks = tilted_information(
            family, local_data, beta_hat, gamma_bar[j], gamma_bar[local_site]
        )
        info += (n_sites[j] / n_total) * partial_information(blocks, site=j)
    return np.linalg.inv(info) / n_total


def average_variance(site_partial_infos: list[np.ndarray], n_j: list[int]) -> np.ndarray:
    """Covariance of the uniform average of local estimates.

    Mean of the per-site inverse partial informations, scaled by the
    squared site count: ``(1/K^2) sum_j inv(I_j) / n_j``.  For equal
    site sizes this is ``(Kn)^{-1}`` times the mean of inverses, the
    mean-of-inverses structure that makes averaging inefficient.
    """
    k = len(site_partial_infos)
    if k != len(n_j):
        raise ValueError("one sample size per site required")
    p = site_partial_infos[0].shape[0]
    out = np.zeros((p, p))
    for info, n in zip(site_partial_infos, n_j):
        out += np.linalg.inv(info) / n
    return out / k**2


def chi_square_sf(stat: float, dof: int) -> float:
    """Upper-tail probability of the chi-square distribution.

    Regularized upper incomplete gamma Q(dof/2, stat/2).
    """
    if stat < 0:
        raise ValueError("chi-square statistic must be nonnegative")
    if dof < 1:
        raise ValueError("degrees of freedom must be positive")
    return float(gammaincc(dof / 2.0, stat / 2.0))


def wald(beta_hat, beta_null, covariance) -> tuple[float, float]:
    """Quadratic-form Wald statistic and its chi-square p-value."""
    beta_hat = np.asarray(beta_hat, dtype=float)
    beta_null = np.asarray(beta_null, dtype=float)
    cov = np.asarray(covariance, dtype=float)
    delta = beta_hat - beta_null
    try:
        stat = float(delta @ np.linalg.solve(cov, delta))
    except np.linalg.LinAlgError:
        raise np.linalg.LinAlgError("singular covariance in Wald statistic") from None
    stat = max(stat, 0.0)
    return stat, chi_square_sf(stat, beta_hat.shape[0])


def ci(beta_hat, covariance, level: float = 0.95) -> tuple[np.ndarray, np.ndarray]:
    """Per-coordinate normal confidence intervals."""
    if not 0.0 < level < 1.0:
        raise ValueError(f"confidence level must be in (0, 1), got {level}")
    beta_hat = np.asarray(beta_hat, dtype=float)
    se = np.sqrt(np.diag(np.asarray(covariance, dtype=float)))
    z = float(ndtri(0.5 + level / 2.0))
    return beta_hat - z * se, beta_hat + z * se


def infer(
    beta_hat,
    covariance,
    beta_null=None,
    level: float = 0.95,
) -> InferenceResult:
    """Bundle standard errors, intervals and the optional Wald test."""
    beta_hat = np.asarray(beta_hat, dtype=float)
    cov = np.asarray(covariance, dtype=float)
    lower, upper = ci(beta_hat, cov, level)
    stat = p_value = None
    if beta_null is not None:
        stat, p_value = wald(beta_hat, beta_null, cov)
    return InferenceResult(
        covariance=cov,
        std_errors=np.sqrt(np.diag(cov)),
        ci_lower=lower,
        ci_upper=upper,
        level=level,
        chi_square=stat,
        p_value=p_value,
        dof=beta_hat.shape[0],
    )
