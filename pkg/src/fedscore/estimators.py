"""All estimation procedures over a simulated site network.

Proposed methods
    * :func:`algorithm1` — the tilted surrogate efficient-score
      estimator, any number of refinement rounds ``T`` (T=1 is the
      oneshot estimator).
    * :func:`one_step` — single Newton correction of the initial
      combine using the local tilted Jacobian.
    * :func:`algorithm2` — every site solves its own surrogate
      equation; the estimates are averaged (reduces local-site
      influence).
    * :func:`modified_algorithm` — gradient-only inner rounds that
      avoid nuisance-block inversions, closed by one full surrogate
      round.

Baselines
    * :func:`average_estimator` — weighted mean of local fits.
    * :func:`homogeneous_surrogate` — the surrogate-likelihood score
      that ignores heterogeneity (one shared parameter vector).
    * :func:`pooled_mle` — the all-data maximizer.  Privacy-violating
      by construction; exists as the oracle every closeness test
      compares against and is marked as such in its report.

Every distributed method logs each transfer in a
:class:`~fedscore.network.CommLedger` (the local site's self-sends
included, so round costs are exactly linear in the site count).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import FedscoreError, NonConvergenceError
from .inference import average_variance, tilted_variance
from .model import ModelFamily, SiteData
from .network import CommLedger, MessageKind, SiteNode, make_message
from .optimize import SolverConfig, newton_root
from .score import (
    build_surrogate_context,
    empirical_information,
    partial_information,
    density_ratio_weights,
    solve_nuisance_block,
    surrogate_equation,
    surrogate_jacobian,
)

WEIGHT_SCHEMES = ("uniform", "sample_size", "inverse_variance")


class SiteFailureError(FedscoreError):
    """One or more per-site solves failed inside an averaging estimator."""

    category = "solver"

    def __init__(self, failures: dict[int, Exception]):
        self.failures = failures
        parts = "; ".join(f"site {j}: {err}" for j, err in failures.items())
        super().__init__(f"{len(failures)} site solve(s) failed: {parts}")


@dataclass
class EstimateReport:
    """What an estimation procedure hands back."""

    method: str
    beta_hat: np.ndarray
    covariance: np.ndarray | None
    iterations: int
    solver_stats: list[dict]
    ledger: CommLedger | None
    warnings: list[str] = field(default_factory=list)
    beta_bar: np.ndarray | None = None
    gamma_bar: dict[int, np.ndarray] | None = None


def combine_initial(local_estimates, scheme: str = "uniform") -> np.ndarray:
    """Weighted combine of local estimates of the common parameter.

    ``local_estimates`` holds ``(beta_j, var_diag_j, n_j)`` triples;
    ``var_diag_j`` may be None except under inverse-variance weighting,
    which weights each coordinate by its reciprocal estimated variance.
    """
    if scheme not in WEIGHT_SCHEMES:
        raise ValueError(f"unknown weight scheme {scheme!r}; choose from {WEIGHT_SCHEMES}")
    if not local_estimates:
        raise ValueError("no local estimates to combine")
    betas = np.array([np.asarray(b, dtype=float) for b, _, _ in local_estimates])
    if scheme == "uniform":
        return betas.mean(axis=0)
    if scheme == "sample_size":
        sizes = np.array([float(n) for _, _, n in local_estimates])
        return (betas * sizes[:, None]).sum(axis=0) / sizes.sum()
    weights = []
    for _, var_diag, _ in local_estimates:
        if var_diag is None:
            raise ValueError("inverse_variance weighting requires per-site variances")
        var = np.asarray(var_diag, dtype=float)
        if np.any(~np.isfinite(var)) or np.any(var <= 0):
            raise ValueError("per-site variances must be positive and finite")
        weights.append(1.0 / var)
    w = np.array(weights)
    return (betas * w).sum(axis=0) / w.sum(axis=0)


# -- shared protocol pieces ---------------------------------------------------


def _family_of(sites: list[SiteNode]) -> ModelFamily:
    if not sites:
        raise ValueError("need at least one site")
    family = sites[0].family
    ids = [node.site_id for node in sites]
    if len(set(ids)) != len(ids):
        raise ValueError(f"duplicate site ids: {ids}")
    return family

def _new_ledger(sites: list[SiteNode]) -> CommLedger:
    d = sites[0].partition.d
    return CommLedger(max_payload=d * len(sites))


def _site_sizes(sites: list[SiteNode]) -> dict[int, int]:
    return {node.site_id: node.n for node in sites}


def _local_fits(sites, hub: int, scheme: str, ledger: CommLedger):
    """Algorithm-1 lines 3-4: local fits to the hub, combined beta back."""
    p = sites[0].partition.p
    thetas: dict[int, np.ndarray] = {}
    estimates = []
    attach_var = scheme == "inverse_variance" and len(sites) > 1
    for node in sites:
        theta = node.local_mle()
        thetas[node.site_id] = theta
        var_diag = node.beta_variance_diag() if attach_var else None
        payload = theta if var_diag is None else np.concatenate([theta, var_diag])
        ledger.send(make_message(MessageKind.BROADCAST_THETA, node.site_id, hub, payload))
        estimates.append((theta[:p], var_diag, node.n))
    if scheme == "inverse_variance" and len(sites) == 1:
        scheme = "uniform"
    beta_bar = combine_initial(estimates, scheme)
    for node in sites:
        ledger.send(make_message(MessageKind.RETURN_BETA_BAR, hub, node.site_id, beta_bar))
    return beta_bar, thetas


def _collect_scores(sites, hub: int, beta, gamma_bar, ledger: CommLedger):
    """Algorithm-1 line 5: efficient-score summaries to the hub."""
    scores: dict[int, np.ndarray] = {}
    for node in sites:
        s = node.efficient_score(beta, gamma_bar[node.site_id])
        ledger.send(make_message(MessageKind.EFFICIENT_SCORE, node.site_id, hub, s))
        scores[node.site_id] = s
    return scores


def _solve_surrogate(family, local_node, ctx, solver: SolverConfig):
    data = local_node.local_data

    def func(beta):
        return surrogate_equation(ctx, family, data, beta)

    def jac(beta):
        return surrogate_jacobian(ctx, family, data, beta)

    return newton_root(func, jac, ctx.beta_bar, solver, site=local_node.site_id)


# -- proposed estimators ------------------------------------------------------


def algorithm1(
    sites: list[SiteNode],
    local_site: int = 0,
    T: int = 1,
    scheme: str = "uniform",
    solver: SolverConfig | None = None,
    method: str | None = None,
) -> EstimateReport:
    """Tilted surrogate efficient-score estimator with ``T`` rounds.

    Round one combines the local fits, collects efficient-score
    summaries and solves the surrogate equation at the local site.
    Each later round broadcasts the current estimate, re-profiles the
    nuisances, refreshes the summaries and re-solves.
    """
    if T < 1:
        raise ValueError(f"need T >= 1, got {T}")
    if not 0 <= local_site < len(sites):
        raise ValueError(f"local_site {local_site} out of range for {len(sites)} sites")
    family = _family_of(sites)
    solver = solver or SolverConfig()
    local_node = sites[local_site]
    hub = local_node.site_id
    sizes = _site_sizes(sites)
    p = family.partition.p

    ledger = _new_ledger(sites)
    ledger.begin_round("round-1")
    beta_bar, thetas = _local_fits(sites, hub, scheme, ledger)
    gamma_bar = {j: theta[p:] for j, theta in thetas.items()}
    scores = _collect_scores(sites, hub, beta_bar, gamma_bar, ledger)
    ctx = build_surrogate_context(
        family, local_node.local_data, hub, beta_bar, gamma_bar, scores, sizes
    )
    beta_t, stats = _solve_surrogate(family, local_node, ctx, solver)
    solver_stats = [{"round": 1, **stats}]

    for t in range(2, T + 1):
        ledger.begin_round(f"round-{t}")
        for node in sites:
            ledger.send(make_message(MessageKind.BROADCAST_BETA_T, hub, node.site_id, beta_t))
        gamma_bar = {}
        for node in sites:
            gamma_j = node.profile_nuisance(beta_t)
            gamma_bar[node.site_id] = gamma_j
            ledger.send(make_message(MessageKind.NUISANCE_UPDATE, node.site_id, hub, gamma_j))
        scores = _collect_scores(sites, hub, beta_t, gamma_bar, ledger)
        ctx = build_surrogate_context(
            family, local_node.local_data, hub, beta_t, gamma_bar, scores, sizes
        )
        beta_t, stats = _solve_surrogate(family, local_node, ctx, solver)
        solver_stats.append({"round": t, **stats})

    cov = tilted_variance(family, local_node.local_data, beta_t, gamma_bar, hub, sizes)
    return EstimateReport(
        method=method or f"alg1-t{T}",
        beta_hat=beta_t,
        covariance=cov,
        iterations=T,
        solver_stats=solver_stats,
        ledger=ledger,
        beta_bar=beta_bar,
        gamma_bar=gamma_bar,
    )


def one_step(
    sites: list[SiteNode],
    local_site: int = 0,
    scheme: str = "uniform",
    method: str | None = None,
) -> EstimateReport:
    """One Newton correction of the initial combine.

    Uses the local tilted Jacobian and the averaged efficient scores:
    the first iterate of the ``T=1`` surrogate solve, without further
    iteration.
    """
    if not 0 <= local_site < len(sites):
        raise ValueError(f"local_site {local_site} out of range for {len(sites)} sites")
    family = _family_of(sites)
    local_node = sites[local_site]
    hub = local_node.site_id
    sizes = _site_sizes(sites)
    p = family.partition.p

    ledger = _new_ledger(sites)
    ledger.begin_round("round-1")
    beta_bar, thetas = _local_fits(sites, hub, scheme, ledger)
    gamma_bar = {j: theta[p:] for j, theta in thetas.items()}
    scores = _collect_scores(sites, hub, beta_bar, gamma_bar, ledger)
    ctx = build_surrogate_context(
        family, local_node.local_data, hub, beta_bar, gamma_bar, scores, sizes
    )
    jac = surrogate_jacobian(ctx, family, local_node.local_data, beta_bar)
    beta_hat = beta_bar - np.linalg.solve(jac, ctx.global_efficient_score)
    residual = float(
        np.max(np.abs(surrogate_equation(ctx, family, local_node.local_data, beta_hat)))
    )
    cov = tilted_variance(family, local_node.local_data, beta_hat, gamma_bar, hub, sizes)
    return EstimateReport(
        method=method or "onestep",
        beta_hat=beta_hat,
        covariance=cov,
        iterations=1,
        solver_stats=[{"round": 1, "iterations": 1, "final_residual": residual, "halvings": 0}],
        ledger=ledger,
        beta_bar=beta_bar,
        gamma_bar=gamma_bar,
    )


def algorithm2(
    sites: list[SiteNode],
    scheme: str = "uniform",
    solver: SolverConfig | None = None,
    allow_partial: bool = False,
    method: str | None = None,
) -> EstimateReport:
    """Each site solves its own surrogate equation; estimates averaged.

    All local fits and score summaries are relayed through a hub so
    every site can tilt against every other.  If any per-site solve
    fails the whole estimator fails (averaging over a failed site is
    undefined) unless ``allow_partial`` is set, in which case the
    failures are recorded as warnings and the survivors are averaged.
    """
    family = _family_of(sites)
    solver = solver or SolverConfig()
    sizes = _site_sizes(sites)
    hub = sites[0].site_id
    p = family.partition.p

    ledger = _new_ledger(sites)
    ledger.begin_round("round-1")
    beta_bar, thetas = _local_fits(sites, hub, scheme, ledger)
    gamma_bar = {j: theta[p:] for j, theta in thetas.items()}
    for node in sites:  # relay every local fit to every other site
        for origin, theta in thetas.items():
            if origin != node.site_id and node.site_id != hub:
                ledger.send(
                    make_message(MessageKind.BROADCAST_THETA, hub, node.site_id, theta)
                )
    scores = _collect_scores(sites, hub, beta_bar, gamma_bar, ledger)
    for node in sites:  # relay the score summaries likewise
        for origin, s in scores.items():
            if origin != node.site_id and node.site_id != hub:
                ledger.send(make_message(MessageKind.EFFICIENT_SCORE, hub, node.site_id, s))

    estimates: dict[int, np.ndarray] = {}
    infos: dict[int, np.ndarray] = {}
    failures: dict[int, Exception] = {}
    solver_stats = []
    for node in sites:
        try:
            ctx = build_surrogate_context(
                family, node.local_data, node.site_id, beta_bar, gamma_bar, scores, sizes
            )
            beta_j, stats = _solve_surrogate(family, node, ctx, solver)
        except FedscoreError as err:
            failures[node.site_id] = err
            continue
        estimates[node.site_id] = beta_j
        weights = ctx.site_weights
        infos[node.site_id] = sum(
            weights[k] * partial_information(blocks, site=k)
            for k, blocks in ctx.tilted.items()
        )
        solver_stats.append({"site": node.site_id, **stats})
        ledger.send(make_message(MessageKind.ESTIMATE_SHARE, node.site_id, hub, beta_j))

    warnings_list = [f"site {j} failed: {err}" for j, err in failures.items()]
    if failures and not allow_partial:
        raise SiteFailureError(failures)
    if not estimates:
        raise SiteFailureError(failures)

    total_n = sum(sizes[j] for j in estimates)
    beta_all = sum((sizes[j] / total_n) * estimates[j] for j in estimates)
    info_all = sum((sizes[j] / total_n) * infos[j] for j in estimates)
    cov = np.linalg.inv(info_all) / sum(sizes.values())
    return EstimateReport(
        method=method or "alg2",
        beta_hat=beta_all,
        covariance=cov,
        iterations=1,
        solver_stats=solver_stats,
        ledger=ledger,
        warnings=warnings_list,
        beta_bar=beta_bar,
        gamma_bar=gamma_bar,
    )


def modified_inner_score(
    family: ModelFamily,
    local_data: SiteData,
    beta,
    beta_anchor,
    gamma_anchor: dict[int, np.ndarray],
    local_site: int,
    site_weights: dict[int, float],
    grad_total: np.ndarray,
) -> np.ndarray:
    """Inner estimating function of the gradient-only rounds.

    Ratio-tilted plain beta-scores on local data, anchored so the
    value at ``beta_anchor`` is the transferred combined gradient
    ``grad_total``.  No nuisance-block inversions are involved.
    """
    total = sum(site_weights.values())
    p = family.partition.p

    def tilted_grad(b):
        out = np.zeros(p)
        for j, w in site_weights.items():
            r = density_ratio_weights(
                family, local_data, beta_anchor, gamma_anchor[j], gamma_anchor[local_site]
            )
            s = family.score_all(local_data, b, gamma_anchor[j])[:, :p]
            out += (w / total) * (r[:, None] * s).mean(axis=0)
        return out

    return tilted_grad(np.asarray(beta, dtype=float)) + grad_total - tilted_grad(beta_anchor)


def modified_algorithm(
    sites: list[SiteNode],
    local_site: int = 0,
    T: int = 1,
    solver: SolverConfig | None = None,
    scheme: str = "uniform",
    method: str | None = None,
) -> EstimateReport:
    """Gradient-only rounds followed by one full surrogate round.

    Each inner round transfers plain beta-gradients only; updated
    nuisances ride along with the next round's gradient (the last
    round's are superseded by the closing full round, which re-profiles
    and ships fresh summaries).  Inner rounds therefore cost strictly
    less than full surrogate rounds on average.
    """
    if T < 1:
        raise ValueError(f"need T >= 1, got {T}")
    if not 0 <= local_site < len(sites):
        raise ValueError(f"local_site {local_site} out of range for {len(sites)} sites")
    family = _family_of(sites)
    solver = solver or SolverConfig()
    local_node = sites[local_site]
    hub = local_node.site_id
    sizes = _site_sizes(sites)
    total_n = sum(sizes.values())
    weights = {j: n / total_n for j, n in sizes.items()}
    p = family.partition.p

    ledger = _new_ledger(sites)
    ledger.begin_round("round-1")
    beta_t, thetas = _local_fits(sites, hub, scheme, ledger)
    gamma_t = {j: theta[p:] for j, theta in thetas.items()}

    solver_stats = []
    for t in range(1, T + 1):
        ledger.begin_round(f"inner-{t}")
        grad_total = np.zeros(p)
        for node in sites:
            if t >= 2:  # nuisances updated last round ride along now
                ledger.send(
                    make_message(
                        MessageKind.NUISANCE_UPDATE, node.site_id, hub, gamma_t[node.site_id]
                    )
                )
            g = node.loglik_grad(beta_t, gamma_t[node.site_id])[:p]
            ledger.send(make_message(MessageKind.SCORE_GRADIENT, node.site_id, hub, g))
            grad_total += weights[node.site_id] * g

        beta_anchor = beta_t
        gamma_anchor = dict(gamma_t)

        def func(beta):
            return modified_inner_score(
                family, local_node.local_data, beta, beta_anchor, gamma_anchor,
                hub, weights, grad_total,
            )

        def jac(beta):
            out = np.zeros((p, p))
            for j, w in weights.items():
                r = density_ratio_weights(
                    family, local_node.local_data, beta_anchor, gamma_anchor[j],
                    gamma_anchor[hub],
                )
                t_blocks = family.neg_hessian_mean(
                    local_node.local_data, beta, gamma_anchor[j], weights=r
                )
                out += w * t_blocks[:p, :p]
            return -out

        beta_t, stats = newton_root(func, jac, beta_t, solver, site=hub)
        solver_stats.append({"round": f"inner-{t}", **stats})
        for node in sites:
            ledger.send(make_message(MessageKind.BROADCAST_BETA_T, hub, node.site_id, beta_t))
        gamma_t = {node.site_id: node.profile_nuisance(beta_t) for node in sites}

    # closing pass: one full surrogate round from the inner solution
    ledger.begin_round("final")
    gamma_bar = gamma_t
    for node in sites:
        ledger.send(
            make_message(MessageKind.NUISANCE_UPDATE, node.site_id, hub, gamma_bar[node.site_id])
        )
    scores = _collect_scores(sites, hub, beta_t, gamma_bar, ledger)
    ctx = build_surrogate_context(
        family, local_node.local_data, hub, beta_t, gamma_bar, scores, sizes
    )
    beta_hat, stats = _solve_surrogate(family, local_node, ctx, solver)
    solver_stats.append({"round": "final", **stats})

    cov = tilted_variance(family, local_node.local_data, beta_hat, gamma_bar, hub, sizes)
    return EstimateReport(
        method=method or f"modified-t{T}",
        beta_hat=beta_hat,
        covariance=cov,
        iterations=T + 1,
        solver_stats=solver_stats,
        ledger=ledger,
        beta_bar=beta_t,
        gamma_bar=gamma_bar,
    )


# -- baselines ----------------------------------------------------------------


def average_estimator(
    sites: list[SiteNode], scheme: str = "uniform", method: str | None = None
) -> EstimateReport:
    """Weighted mean of the local fits (the meta-analysis baseline).

    Covariance follows the mean-of-inverses form; per-site partial
    informations are exchanged as p x p aggregates alongside the
    estimate shares.
    """
    family = _family_of(sites)
    hub = sites[0].site_id
    p = family.partition.p
    ledger = _new_ledger(sites)
    ledger.begin_round("round-1")

    estimates = []
    partials = []
    sizes = []
    attach_var = scheme == "inverse_variance" and len(sites) > 1
    for node in sites:
        theta = node.local_mle()
        var_diag = node.beta_variance_diag() if attach_var else None
        payload = theta[:p] if var_diag is None else np.concatenate([theta[:p], var_diag])
        ledger.send(make_message(MessageKind.ESTIMATE_SHARE, node.site_id, hub, payload))
        estimates.append((theta[:p], var_diag, node.n))
        partials.append(node.partial_information_at())
        sizes.append(node.n)
    if scheme == "inverse_variance" and len(sites) == 1:
        scheme = "uniform"
    beta_bar = combine_initial(estimates, scheme)

    if scheme == "uniform":
        cov = average_variance(partials, sizes)
    else:
        # general weighted combine: sum w_j^2 Var_j / (sum w_j)^2
        if scheme == "sample_size":
            w = np.array(sizes, dtype=float)[:, None, None]
            var_js = np.array([np.linalg.inv(i) / n for i, n in zip(partials, sizes)])
            cov = (w**2 * var_js).sum(axis=0) / float(np.sum(sizes)) ** 2
        else:  # inverse_variance, per-coordinate
            var = np.array([est[1] for est in estimates])
            cov = np.diag(1.0 / (1.0 / var).sum(axis=0))
    return EstimateReport(
        method=method or "average",
        beta_hat=beta_bar,
        covariance=cov,
        iterations=0,
        solver_stats=[],
        ledger=ledger,
        beta_bar=beta_bar,
        gamma_bar={node.site_id: node.local_mle()[p:] for node in sites},
    )


def homogeneous_surrogate_score(
    family: ModelFamily, local_data: SiteData, theta, theta_bar, grad_total: np.ndarray
) -> np.ndarray:
    """Surrogate score of the shared-parameter model.

    ``grad_total + grad L_local(theta) - grad L_local(theta_bar)``:
    the combined gradient at the initial value plus the local
    curvature correction.
    """
    part = family.partition
    theta = np.asarray(theta, dtype=float)
    theta_bar = np.asarray(theta_bar, dtype=float)
    g = family.loglik_grad(local_data, *part.split(theta))
    g_bar = family.loglik_grad(local_data, *part.split(theta_bar))
    return grad_total + g - g_bar


def homogeneous_surrogate(
    sites: list[SiteNode],
    local_site: int = 0,
    solver: SolverConfig | None = None,
    method: str | None = None,
) -> EstimateReport:
    """Surrogate-likelihood fit of one shared parameter vector.

    The heterogeneity-blind baseline: all sites are assumed to share
    (beta, gamma).  Its covariance is the model-based one from the
    local information at the root, which is only meaningful when the
    homogeneity assumption actually holds.
    """
    if not 0 <= local_site < len(sites):
        raise ValueError(f"local_site {local_site} out of range for {len(sites)} sites")
    family = _family_of(sites)
    solver = solver or SolverConfig()
    local_node = sites[local_site]
    hub = local_node.site_id
    part = family.partition
    sizes = _site_sizes(sites)
    total_n = sum(sizes.values())

    ledger = _new_ledger(sites)
    ledger.begin_round("round-1")
    thetas = {}
    for node in sites:
        theta = node.local_mle()
        thetas[node.site_id] = theta
        ledger.send(make_message(MessageKind.BROADCAST_THETA, node.site_id, hub, theta))
    theta_bar = sum((sizes[j] / total_n) * thetas[j] for j in thetas)
    for node in sites:
        ledger.send(make_message(MessageKind.RETURN_BETA_BAR, hub, node.site_id, theta_bar))

    grad_total = np.zeros(part.d)
    for node in sites:
        g = node.loglik_grad(*part.split(theta_bar))
        ledger.send(make_message(MessageKind.SCORE_GRADIENT, node.site_id, hub, g))
        grad_total += (sizes[node.site_id] / total_n) * g

    def func(theta):
        return homogeneous_surrogate_score(
            family, local_node.local_data, theta, theta_bar, grad_total
        )

    def jac(theta):
        beta, gamma = part.split(np.asarray(theta, dtype=float))
        return -family.neg_hessian_mean(local_node.local_data, beta, gamma)

    theta_hat, stats = newton_root(func, jac, theta_bar, solver, site=hub)
    info = empirical_information(family, local_node.local_data, *part.split(theta_hat))
    cov = np.linalg.inv(partial_information(info, site=hub)) / total_n
    return EstimateReport(
        method=method or "homo",
        beta_hat=theta_hat[: part.p],
        covariance=cov,
        iterations=1,
        solver_stats=[{"round": 1, **stats}],
        ledger=ledger,
        beta_bar=theta_bar[: part.p],
        gamma_bar={j: theta_hat[part.p :] for j in thetas},
    )


def pooled_mle(
    sites: list[SiteNode], solver: SolverConfig | None = None, method: str | None = None
) -> EstimateReport:
    """All-data maximum likelihood over (beta, gamma_1..gamma_K).

    Oracle only: it reads every site's individual-level data, which no
    distributed method may do.  The Newton iteration exploits the
    arrow sparsity of the Hessian (dense in beta, block-diagonal in
    the per-site nuisances) through per-site Schur complements.
    """
    family = _family_of(sites)
    part = family.partition
    p, q = part.p, part.q
    datasets = [node.local_data for node in sites]
    sizes = np.array([d.n for d in datasets], dtype=float)
    total_n = sizes.sum()
    omega = sizes / total_n

    thetas = [node.local_mle() for node in sites]
    beta = np.mean([t[:p] for t in thetas], axis=0)
    gammas = [t[p:].copy() for t in thetas]

    def loglik(beta, gammas):
        return sum(
            w * family.loglik(d, beta, g) for w, d, g in zip(omega, datasets, gammas)
        )

    max_iter, gtol = 100, 1e-10
    stats = {}
    for it in range(max_iter):
        grads = [family.loglik_grad(d, beta, g) for d, g in zip(datasets, gammas)]
        infos = [
            empirical_information(family, d, beta, g) for d, g in zip(datasets, gammas)
        ]
        g_beta = sum(w * g[:p] for w, g in zip(omega, grads))
        gnorm = max(
            float(np.max(np.abs(g_beta))),
            max(float(np.max(np.abs(w * g[p:]))) for w, g in zip(omega, grads)),
        )
        if gnorm <= gtol:
            stats = {"iterations": it, "final_residual": gnorm}
            break
        # Newton step through the beta Schur complement
        schur = np.zeros((p, p))
        rhs = g_beta.copy()
        solves = []
        for w, g, blocks in zip(omega, grads, infos):
            bg_solve = solve_nuisance_block(blocks.gg, np.column_stack([blocks.bg.T, g[p:]]))
            solves.append(bg_solve)
            schur += w * (blocks.bb - blocks.bg @ bg_solve[:, :p])
            rhs -= w * blocks.bg @ bg_solve[:, p]
        d_beta = np.linalg.solve(schur, rhs)
        d_gammas = [
            s[:, p] - s[:, :p] @ d_beta for s in solves
        ]
        value = loglik(beta, gammas)
        slope = float(g_beta @ d_beta) + sum(
            w * float(g[p:] @ dg) for w, g, dg in zip(omega, grads, d_gammas)
        )
        t_step = 1.0
        for _ in range(30):
            beta_new = beta + t_step * d_beta
            gammas_new = [g + t_step * dg for g, dg in zip(gammas, d_gammas)]
            if loglik(beta_new, gammas_new) >= value + 1e-4 * t_step * slope:
                break
            t_step *= 0.5
        beta, gammas = beta_new, gammas_new
    else:
        raise NonConvergenceError(None, max_iter, gnorm)

    schur = np.zeros((p, p))
    for w, d, g in zip(omega, datasets, gammas):
        blocks = empirical_information(family, d, beta, g)
        schur += w * partial_information(blocks)
    cov = np.linalg.inv(schur) / total_n
    return EstimateReport(
        method=method or "pooled",
        beta_hat=beta,
        covariance=cov,
        iterations=1,
        solver_stats=[{"round": 1, **stats}],
        ledger=None,
        warnings=["oracle estimator: pools all individual-level data, no communication accounting"],
        beta_bar=beta,
        gamma_bar={node.site_id: g for node, g in zip(sites, gammas)},
    )
