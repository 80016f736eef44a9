"""Scenario generation and the Monte-Carlo replication harness.

Three generator styles, matching the simulation study's three sweeps:

* ``prevalence`` — binary exposure X ~ Bernoulli(b), confounder
  Z ~ N(X - 0.3, 1), site intercepts U(a-1, a+1) and slopes U(-2, 2);
  the knobs ``a`` and ``b`` steer outcome and exposure prevalence.
* ``hetero`` — same design, intercepts U(-v, v) and slopes U(-2v, 2v);
  ``v`` scales the cross-site heterogeneity.
* ``dimension`` — Z ~ N(0, I) with ``d_gamma - 1`` columns, all
  nuisance coefficients U(-1, 1); ``d_gamma`` sweeps the nuisance
  dimension (intercept included).

Heterogeneity is re-drawn every replicate, so the reported bias and
coverage average over the nuisance law.  Every random stream is keyed
by (master seed, replicate, site, attempt), which makes runs
deterministic and replicates independent; replicates are processed
sequentially so the aggregation order is fixed.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit

from .estimators import (
    SolverConfig,
    algorithm1,
    algorithm2,
    average_estimator,
    homogeneous_surrogate,
    modified_algorithm,
    one_step,
    pooled_mle,
)
from .exceptions import FedscoreError
from .inference import ci
from .model import SiteData, make_family
from .network import sites_from_data

GENERATORS = ("auto", "prevalence", "hetero", "dimension")

METHOD_TAGS = ("average", "homo", "m1", "m2", "m3", "onestep", "modified", "pooled")

_MAX_REGEN_ATTEMPTS = 100


@dataclass(frozen=True)
class ScenarioConfig:
    """One simulation setting."""

    K: int = 10
    n: int | tuple[int, ...] = 100
    true_beta: tuple[float, ...] = (-1.0,)
    a: float = 0.0            # intercept location knob (outcome prevalence)
    b: float = 0.3            # exposure prevalence
    v: float | None = None    # heterogeneity scale (hetero generator)
    d_gamma: int = 2          # nuisance dimension including the intercept
    family: str = "logistic"
    replicates: int = 200
    seed: int = 0
    generator: str = "auto"
    label: str = ""

    def __post_init__(self):
        if self.replicates < 1:
            raise ValueError("need at least one replicate")
        if not 0.0 < self.b < 1.0:
            raise ValueError(f"exposure prevalence b must be in (0,1), got {self.b}")
        if self.d_gamma < 2:
            raise ValueError("d_gamma counts the intercept and must be >= 2")
        if self.generator not in GENERATORS:
            raise ValueError(f"unknown generator {self.generator!r}")

    @property
    def style(self) -> str:
        if self.generator != "auto":
            return self.generator
        if self.v is not None:
            return "hetero"
        if self.d_gamma != 2:
            return "dimension"
        return "prevalence"

    def site_sizes(self) -> list[int]:
        if isinstance(self.n, int):
            return [self.n] * self.K
        sizes = list(self.n)
        if len(sizes) != self.K:
            raise ValueError(f"got {len(sizes)} site sizes for K={self.K}")
        return sizes

    def setting_label(self) -> str:
        if self.label:
            return self.label
        style = self.style
        if style == "hetero":
            return f"v={self.v:g},K={self.K}"
        if style == "dimension":
            return f"dgamma={self.d_gamma},K={self.K}"
        return f"a={self.a:g},b={self.b:g},K={self.K}"


def _draw_site(cfg: ScenarioConfig, rng: np.random.Generator, n: int):
    """One site's nuisance coefficients and design, by generator style."""
    beta = np.asarray(cfg.true_beta, dtype=float)
    style = cfg.style
    if style == "dimension":
        q = cfg.d_gamma
        gamma = rng.uniform(-1.0, 1.0, size=q)
        x = rng.binomial(1, cfg.b, size=n).astype(float)[:, None]
        z = np.hstack([np.ones((n, 1)), rng.normal(0.0, 1.0, size=(n, q - 1))])
    else:
        if style == "hetero":
            gamma0 = rng.uniform(-cfg.v, cfg.v)
            gamma1 = rng.uniform(-2.0 * cfg.v, 2.0 * cfg.v)
        else:
            gamma0 = rng.uniform(cfg.a - 1.0, cfg.a + 1.0)
            gamma1 = rng.uniform(-2.0, 2.0)
        gamma = np.array([gamma0, gamma1])
        x = rng.binomial(1, cfg.b, size=n).astype(float)[:, None]
        z_conf = rng.normal(x[:, 0] - 0.3, 1.0)
        z = np.column_stack([np.ones(n), z_conf])
    eta = x @ beta + z @ gamma
    if cfg.family == "logistic":
        y = rng.binomial(1, expit(eta)).astype(float)
    else:
        y = eta + rng.normal(0.0, 1.0, size=n)
    return y, x, z


def _degenerate(cfg: ScenarioConfig, y: np.ndarray, x: np.ndarray) -> bool:
    # constant outcome or constant binary exposure leaves the site fit
    # unidentified; such draws are re-generated rather than dropped
    if cfg.family != "logistic":
        return False
    return bool(np.all(y == y[0]) or np.all(x[:, 0] == x[0, 0]))


def generate_scenario(cfg: ScenarioConfig, replicate_index: int) -> tuple[list[SiteData], int]:
    """Draw the K site datasets of one replicate.

    Returns the datasets and the count of degenerate site draws that
    had to be regenerated (with an offset sub-seed).
    """
    datasets = []
    regenerated = 0
    for site, n in enumerate(cfg.site_sizes()):
        for attempt in range(_MAX_REGEN_ATTEMPTS):
            seq = np.random.SeedSequence((cfg.seed, replicate_index, site, attempt))
            y, x, z = _draw_site(cfg, np.random.default_rng(seq), n)
            if not _degenerate(cfg, y, x):
                break
            regenerated += 1
        else:
            raise FedscoreError(
                f"site {site} of replicate {replicate_index} degenerate after "
                f"{_MAX_REGEN_ATTEMPTS} attempts"
            )
        datasets.append(SiteData(y, x, z, site_id=site))
    return datasets, regenerated


# -- running methods over replicates ------------------------------------------


def run_method(
    tag: str,
    sites,
    local_site: int = 0,
    scheme: str = "uniform",
    solver: SolverConfig | None = None,
    iterations: int = 1,
):
    """Dispatch a method tag to its estimator."""
    if tag == "average":
        return average_estimator(sites, scheme=scheme, method=tag)
    if tag == "homo":
        return homogeneous_surrogate(sites, local_site=local_site, solver=solver, method=tag)
    if tag == "m1":
        return algorithm1(sites, local_site=local_site, T=1, scheme=scheme, solver=solver, method=tag)
    if tag == "m2":
        return algorithm1(sites, local_site=local_site, T=2, scheme=scheme, solver=solver, method=tag)
    if tag == "m3":
        return algorithm2(sites, scheme=scheme, solver=solver, method=tag)
    if tag == "onestep":
        return one_step(sites, local_site=local_site, scheme=scheme, method=tag)
    if tag == "modified":
        return modified_algorithm(
            sites, local_site=local_site, T=iterations, solver=solver, scheme=scheme, method=tag
        )
    if tag == "pooled":
        return pooled_mle(sites, solver=solver, method=tag)
    raise ValueError(f"unknown method tag {tag!r}; choose from {METHOD_TAGS}")


@dataclass
class ReplicateRecord:
    """Raw outcome of one (replicate, method) cell."""

    replicate: int
    method: str
    estimate: np.ndarray | None
    ci_lower: np.ndarray | None
    ci_upper: np.ndarray | None
    covered: np.ndarray | None
    comm_total: int
    error: str = ""

    @property
    def failed(self) -> bool:
        return self.estimate is None


@dataclass
class MetricsTable:
    """Aggregates plus the raw per-replicate estimates behind them."""

    setting: str
    truth: np.ndarray
    methods: list[str]
    records: list[ReplicateRecord]
    regenerated: int = 0
    rows: list[dict] = field(default_factory=list)

    def __post_init__(self):
        if not self.rows:
            self.rows = summarize(self.records, self.truth, self.methods, self.setting)

    def write_metrics_csv(self, path, append: bool = False) -> None:
        write_metrics_csv(path, self.rows, append=append)

    def write_raw_csv(self, path, append: bool = False) -> None:
        write_raw_csv(path, self.records, self.truth, self.setting, append=append)


def summarize(records, truth, methods, setting: str) -> list[dict]:
    """Bias / SD / RMSE / coverage / communication per method and coordinate."""
    truth = np.asarray(truth, dtype=float)
    rows = []
    for method in methods:
        cells = [r for r in records if r.method == method]
        ok = [r for r in cells if not r.failed]
        failures = len(cells) - len(ok)
        for coord in range(truth.shape[0]):
            row = {
                "setting": setting,
                "method": method,
                "coord": coord,
                "replicates": len(cells),
                "failures": failures,
            }
            if ok:
                est = np.array([r.estimate[coord] for r in ok])
                bias = float(np.mean(est) - truth[coord])
                row.update(
                    {
                        "bias": bias,
                        "sd": float(np.std(est, ddof=1)) if len(est) > 1 else 0.0,
                        "rmse": float(np.sqrt(np.mean((est - truth[coord]) ** 2))),
                        "coverage": _coverage(ok, coord),
                        "mean_comm": float(np.mean([r.comm_total for r in ok])),
                    }
                )
            else:
                row.update({"bias": "", "sd": "", "rmse": "", "coverage": "", "mean_comm": ""})
            rows.append(row)
    return rows


def _coverage(records, coord: int):
    hits = [r.covered[coord] for r in records if r.covered is not None]
    return float(np.mean(hits)) if hits else ""


def run_replications(
    cfg: ScenarioConfig,
    methods: list[str],
    local_site: int = 0,
    scheme: str = "uniform",
    level: float = 0.95,
    iterations: int = 1,
    solver: SolverConfig | None = None,
) -> MetricsTable:
    """Generate-estimate-record over all replicates of one setting.

    Per-method failures inside a replicate are recorded (with the
    error category) and counted, never silently dropped.
    """
    if not methods:
        raise ValueError("no methods requested")
    for tag in methods:
        if tag not in METHOD_TAGS:
            raise ValueError(f"unknown method tag {tag!r}; choose from {METHOD_TAGS}")
    truth = np.asarray(cfg.true_beta, dtype=float)
    records: list[ReplicateRecord] = []
    regenerated = 0
    for r in range(cfg.replicates):
        datasets, regen = generate_scenario(cfg, r)
        regenerated += regen
        family = make_family(cfg.family, datasets[0].partition)
        for tag in methods:
            nodes = sites_from_data(datasets, family)
            try:
                report = run_method(
                    tag, nodes, local_site=local_site, scheme=scheme,
                    solver=solver, iterations=iterations,
                )
            except FedscoreError as err:
                records.append(
                    ReplicateRecord(r, tag, None, None, None, None, 0, error=err.category)
                )
                continue
            if report.covariance is not None:
                lower, upper = ci(report.beta_hat, report.covariance, level)
                covered = (lower <= truth) & (truth <= upper)
            else:
                lower = upper = covered = None
            comm = report.ledger.total() if report.ledger is not None else 0
            records.append(
                ReplicateRecord(r, tag, report.beta_hat, lower, upper, covered, comm)
            )
    return MetricsTable(
        setting=cfg.setting_label(),
        truth=truth,
        methods=list(methods),
        records=records,
        regenerated=regenerated,
    )


# -- CSV output ----------------------------------------------------------------

METRICS_FIELDS = (
    "setting", "method", "coord", "replicates", "failures",
    "bias", "sd", "rmse", "coverage", "mean_comm",
)


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def metrics_csv_text(rows: list[dict], header: bool = True) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    if header:
        writer.writerow(METRICS_FIELDS)
    for row in rows:
        writer.writerow([_fmt(row.get(k, "")) for k in METRICS_FIELDS])
    return buf.getvalue()


def raw_csv_text(records, truth, setting: str, header: bool = True) -> str:
    truth = np.asarray(truth, dtype=float)
    p = truth.shape[0]
    head = ["setting", "replicate", "method", "failed", "error", "comm_total"]
    for k in range(p):
        head += [f"estimate_{k}", f"ci_lower_{k}", f"ci_upper_{k}", f"covered_{k}"]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    if header:
        writer.writerow(head)
    for r in records:
        row = [setting, r.replicate, r.method, int(r.failed), r.error, r.comm_total]
        for k in range(p):
            if r.failed:
                row += ["", "", "", ""]
            else:
                row += [
                    _fmt(float(r.estimate[k])),
                    _fmt(float(r.ci_lower[k])) if r.ci_lower is not None else "",
                    _fmt(float(r.ci_upper[k])) if r.ci_upper is not None else "",
                    int(r.covered[k]) if r.covered is not None else "",
                ]
        writer.writerow(row)
    return buf.getvalue()


def write_metrics_csv(path, rows: list[dict], append: bool = False) -> None:
    with open(path, "a" if append else "w", newline="") as fh:
        fh.write(metrics_csv_text(rows, header=not append))


def write_raw_csv(path, records, truth, setting: str, append: bool = False) -> None:
    with open(path, "a" if append else "w", newline="") as fh:
        fh.write(raw_csv_text(records, truth, setting, header=not append))


# -- presets -------------------------------------------------------------------


def preset_scenarios(name: str, base: ScenarioConfig) -> list[ScenarioConfig]:
    """The figure presets: prevalence grid, heterogeneity sweep, dimension sweep."""
    if name == "figure1":
        grid = [(0.0, 0.3), (-3.0, 0.3), (0.0, 0.1), (-3.0, 0.1)]
        return [
            replace(base, a=a, b=b, v=None, d_gamma=2, generator="prevalence")
            for a, b in grid
        ]
    if name == "figure2":
        return [
            replace(base, v=v, d_gamma=2, generator="hetero") for v in (0.1, 1.0, 2.0, 4.0)
        ]
    if name == "figure3":
        return [
            replace(base, v=None, d_gamma=d, generator="dimension") for d in (2, 6, 10, 14)
        ]
    raise ValueError(f"unknown preset {name!r}; choose figure1, figure2 or figure3")
