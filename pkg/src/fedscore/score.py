"""Efficient-score machinery and the tilted surrogate estimating equation.

The building blocks, in the order an estimation round uses them:

* :func:`empirical_information` — blocks of the negative mean Hessian
  of a site log likelihood (the "information" sign convention used
  throughout: information objects are positive semidefinite).
* :func:`site_efficient_score` — the p-vector a site publishes: its
  beta-score with the nuisance direction projected out.
* :func:`tilted_information` — the same blocks computed on the local
  site's data but reweighted by density ratios, so they estimate
  another site's information without seeing its data.
* :class:`SurrogateContext` / :func:`build_surrogate_context` — the
  frozen bundle of initial estimates, ratio weights, tilted blocks and
  transferred score summaries the local site needs to evaluate the
  surrogate equation.
* :func:`surrogate_local_score`, :func:`surrogate_equation`,
  :func:`surrogate_jacobian` — the local tilted score average U_1, the
  full surrogate efficient score (anchored so that its value at the
  initial estimate equals the averaged transferred scores exactly),
  and its analytic Jacobian in beta with the tilts frozen.

Ratio weights and tilted blocks depend only on the initial estimates,
never on the beta being solved for, so they are computed once per
context and cached.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .exceptions import COND_LIMIT, DegenerateDensityError, SingularInformationError
from .model import ModelFamily, SiteData


@dataclass(frozen=True)
class InfoBlocks:
    """(beta,beta), (beta,gamma), (gamma,gamma) blocks of an information matrix."""

    bb: np.ndarray  # (p, p)
    bg: np.ndarray  # (p, q)
    gg: np.ndarray  # (q, q)

    @property
    def p(self) -> int:
        return self.bb.shape[0]

    @property
    def q(self) -> int:
        return self.gg.shape[0]

    def assembled(self) -> np.ndarray:
        """Full (d, d) matrix with the stacked (beta, gamma) order."""
        top = np.hstack([self.bb, self.bg])
        bottom = np.hstack([self.bg.T, self.gg])
        return np.vstack([top, bottom])


class TiltedBlocks(InfoBlocks):
    """Information blocks computed under density-ratio reweighting."""


def _split_blocks(matrix: np.ndarray, p: int, cls=InfoBlocks) -> InfoBlocks:
    sym = (matrix + matrix.T) / 2.0
    return cls(bb=sym[:p, :p], bg=sym[:p, p:], gg=sym[p:, p:])


def solve_nuisance_block(gg: np.ndarray, rhs: np.ndarray, site: int | None = None) -> np.ndarray:
    """Solve ``gg @ x = rhs`` by factorization, guarding conditioning.

    Raises :class:`SingularInformationError` naming the site when the
    condition estimate exceeds ``COND_LIMIT``.
    """
    cond = float(np.linalg.cond(gg))
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularInformationError(site, cond)
    try:
        c = scipy.linalg.cho_factor(gg, lower=True)
        return scipy.linalg.cho_solve(c, rhs)
    except scipy.linalg.LinAlgError:
        return scipy.linalg.solve(gg, rhs, assume_a="sym")


def empirical_information(family: ModelFamily, data: SiteData, beta, gamma) -> InfoBlocks:
    """Blocks of ``-(1/n) sum_i d^2 log f(y_i; beta, gamma)``."""
    return _split_blocks(family.neg_hessian_mean(data, beta, gamma), family.partition.p)


def density_ratio_weights(
    family: ModelFamily, data: SiteData, beta, gamma_num, gamma_den
) -> np.ndarray:
    """Per-observation weights ``f(y; beta, gamma_num) / f(y; beta, gamma_den)``.

    Computed in log space and exponentiated at the last moment.  Any
    non-finite weight aborts with a diagnostic rather than clipping.
    """
    log_ratio = family.log_ratio_all(data, beta, gamma_num, gamma_den)
    weights = np.exp(log_ratio)
    if not np.all(np.isfinite(weights)):
        i = int(np.argmax(~np.isfinite(weights)))
        raise DegenerateDensityError(
            f"non-finite density ratio at observation {i} "
            f"(log ratio {log_ratio[i]:.3e})"
        )
    return weights


def tilted_information(
    family: ModelFamily,
    local_data: SiteData,
    beta_bar,
    gamma_bar_j,
    gamma_bar_local,
) -> TiltedBlocks:
    """Density-ratio-tilted information for a remote site, from local data.

    The negative mean Hessian at ``(beta_bar, gamma_bar_j)`` with each
    observation weighted by ``f(y; beta_bar, gamma_bar_j) / f(y;
    beta_bar, gamma_bar_local)``.  With ``gamma_bar_j ==
    gamma_bar_local`` all ratios are one and the result equals the
    untilted information exactly.
    """
    weights = density_ratio_weights(family, local_data, beta_bar, gamma_bar_j, gamma_bar_local)
    matrix = family.neg_hessian_mean(local_data, beta_bar, gamma_bar_j, weights=weights)
    return _split_blocks(matrix, family.partition.p, cls=TiltedBlocks)


def site_efficient_score(
    family: ModelFamily,
    data: SiteData,
    beta,
    gamma,
    blocks: InfoBlocks,
    site: int | None = None,
) -> np.ndarray:
    """The p-vector ``grad_beta L - I_bg I_gg^{-1} grad_gamma L``.

    This is the summary each site transfers; its root attains the
    partial-information precision for beta.
    """
    grad = family.loglik_grad(data, beta, gamma)
    p = family.partition.p
    return grad[:p] - blocks.bg @ solve_nuisance_block(blocks.gg, grad[p:], site=site)


def partial_information(blocks: InfoBlocks, site: int | None = None) -> np.ndarray:
    """Schur complement ``bb - bg gg^{-1} gb`` (p x p, symmetric)."""
    schur = blocks.bb - blocks.bg @ solve_nuisance_block(blocks.gg, blocks.bg.T, site=site)
    return (schur + schur.T) / 2.0


@dataclass(frozen=True)
class SurrogateContext:
    """Everything the local site holds to evaluate the surrogate score.

    Immutable once built; all evaluation against it is pure.  The
    ratio weights, tilted blocks and projections depend on the initial
    estimates only, so they are computed once here and reused for
    every beta the solver visits.
    """

    local_site: int
    beta_bar: np.ndarray                  # (p,) initial common estimate
    gamma_bar: dict[int, np.ndarray]      # site -> (q,) initial nuisance
    tilted: dict[int, TiltedBlocks]       # site -> tilted information
    ratios: dict[int, np.ndarray]         # site -> (n_local,) ratio weights
    projections: dict[int, np.ndarray]    # site -> (p, q) tilted bg gg^{-1}
    site_weights: dict[int, float]        # site -> n_j / N, summing to 1
    global_efficient_score: np.ndarray    # (p,) weighted mean of transferred scores
    local_anchor: np.ndarray              # (p,) U_local at beta_bar


def build_surrogate_context(
    family: ModelFamily,
    local_data: SiteData,
    local_site: int,
    beta_bar,
    gamma_bar: dict[int, np.ndarray],
    site_scores: dict[int, np.ndarray],
    site_weights: dict[int, float] | None = None,
) -> SurrogateContext:
    """Assemble the local site's view of one surrogate round.

    ``gamma_bar`` and ``site_scores`` must cover the same sites;
    ``site_weights`` defaults to uniform and is normalized to sum to
    one (sample-size weights generalize the equal-n paper setting).
    """
    beta_bar = np.asarray(beta_bar, dtype=float)
    sites = list(gamma_bar)
    if set(site_scores) != set(sites):
        raise ValueError("gamma_bar and site_scores must cover the same sites")
    if local_site not in gamma_bar:
        raise ValueError(f"local site {local_site} missing from gamma_bar")
    if site_weights is None:
        site_weights = {j: 1.0 for j in sites}
    total = sum(site_weights[j] for j in sites)
    weights = {j: site_weights[j] / total for j in sites}

    gamma_local = gamma_bar[local_site]
    ratios: dict[int, np.ndarray] = {}
    tilted: dict[int, TiltedBlocks] = {}
    projections: dict[int, np.ndarray] = {}
    for j in sites:
        r = density_ratio_weights(family, local_data, beta_bar, gamma_bar[j], gamma_local)
        blocks = _split_blocks(
            family.neg_hessian_mean(local_data, beta_bar, gamma_bar[j], weights=r),
            family.partition.p,
            cls=TiltedBlocks,
        )
        ratios[j] = r
        tilted[j] = blocks
        projections[j] = solve_nuisance_block(blocks.gg, blocks.bg.T, site=j).T

    global_score = np.zeros(family.partition.p)
    for j in sites:
        global_score = global_score + weights[j] * np.asarray(site_scores[j], dtype=float)

    anchor = _local_score(
        family, local_data, beta_bar, gamma_bar, ratios, projections, weights
    )
    return SurrogateContext(
        local_site=local_site,
        beta_bar=beta_bar,
        gamma_bar=dict(gamma_bar),
        tilted=tilted,
        ratios=ratios,
        projections=projections,
        site_weights=weights,
        global_efficient_score=global_score,
        local_anchor=anchor,
    )


def _local_score(family, local_data, beta, gamma_bar, ratios, projections, weights):
    p = family.partition.p
    out = np.zeros(p)
    for j, w in weights.items():
        s = family.score_all(local_data, beta, gamma_bar[j])
        integrand = s[:, :p] - s[:, p:] @ projections[j].T
        out = out + w * (ratios[j][:, None] * integrand).mean(axis=0)
    return out


def surrogate_local_score(
    ctx: SurrogateContext, family: ModelFamily, local_data: SiteData, beta
) -> np.ndarray:
    """U_local(beta): ratio-tilted efficient-score integrand averaged
    over local observations and sites, nuisances frozen at the initial
    estimates."""
    beta = np.asarray(beta, dtype=float)
    return _local_score(
        family, local_data, beta, ctx.gamma_bar, ctx.ratios, ctx.projections, ctx.site_weights
    )


def surrogate_equation(
    ctx: SurrogateContext, family: ModelFamily, local_data: SiteData, beta
) -> np.ndarray:
    """The surrogate efficient score whose root is the round's estimate.

    ``U_local(beta) + mean_j S_j - U_local(beta_bar)``; at ``beta ==
    beta_bar`` the local terms cancel exactly and the value is the
    averaged transferred scores.
    """
    return (
        surrogate_local_score(ctx, family, local_data, beta)
        + ctx.global_efficient_score
        - ctx.local_anchor
    )


def surrogate_jacobian(
    ctx: SurrogateContext, family: ModelFamily, local_data: SiteData, beta
) -> np.ndarray:
    """d/d(beta) of the surrogate equation, tilts and ratios frozen.

    Equals minus the ratio-weighted partial-information average; at
    ``beta == beta_bar`` this is minus the Schur complement of the
    cached tilted blocks.
    """
    beta = np.asarray(beta, dtype=float)
    p = family.partition.p
    out = np.zeros((p, p))
    for j, w in ctx.site_weights.items():
        t = family.neg_hessian_mean(local_data, beta, ctx.gamma_bar[j], weights=ctx.ratios[j])
        out = out + w * (t[:p, :p] - ctx.projections[j] @ t[p:, :p])
    return -out
