"""Exception hierarchy shared across the package.

Every failure mode an estimator can hit maps to one class here, so the
CLI can translate exceptions into machine-readable error categories.
"""

from __future__ import annotations


class FedscoreError(Exception):
    """Base class for all package-specific errors."""

    category = "internal"


class DataFormatError(FedscoreError):
    """Malformed site CSV or manifest (bad value, missing column, ...)."""

    category = "data"


class SingularInformationError(FedscoreError):
    """A nuisance information block is numerically singular.

    Raised whenever a solve against an H_gg-type block would divide by
    a block whose condition estimate exceeds ``COND_LIMIT``.
    """

    category = "singular"

    def __init__(self, site: int | None = None, cond: float | None = None):
        self.site = site
        self.cond = cond
        where = "pooled fit" if site is None else f"site {site}"
        detail = "" if cond is None else f" (condition estimate {cond:.3e})"
        super().__init__(f"singular nuisance information block at {where}{detail}")


class NonConvergenceError(FedscoreError):
    """Newton iteration hit its iteration cap without meeting tolerance."""

    category = "solver"

    def __init__(self, site: int | None, iterations: int, grad_norm: float):
        self.site = site
        self.iterations = iterations
        self.grad_norm = grad_norm
        where = "" if site is None else f" at site {site}"
        super().__init__(
            f"no convergence{where} after {iterations} iterations "
            f"(residual norm {grad_norm:.3e})"
        )


class SeparationError(FedscoreError):
    """Parameter norm exploded during likelihood maximization.

    For the logistic family this is the signature of (quasi-)complete
    separation: the MLE runs off to infinity.
    """

    category = "separation"

    def __init__(self, site: int | None, theta_norm: float):
        self.site = site
        self.theta_norm = theta_norm
        where = "" if site is None else f" at site {site}"
        super().__init__(
            f"parameter norm {theta_norm:.3e} exploded{where}; "
            "data are likely separated"
        )


class DegenerateDensityError(FedscoreError):
    """A density ratio came out non-finite (zero-probability outcome)."""

    category = "degenerate"


# Condition-number threshold above which a nuisance block counts as singular.
COND_LIMIT = 1e12
