"""Simulated multi-site network: site nodes, messages, communication ledger.

A :class:`SiteNode` owns one site's observations and never serializes
them into a message; everything another party may learn crosses the
node boundary through summary methods (local estimates, gradients,
information blocks, efficient scores).  The designated local site is
the one exception: the estimation round literally runs *at* that site,
so its raw data are reachable through :attr:`SiteNode.local_data`.

Every logical transfer — including the local site's self-transfers —
is logged in a :class:`CommLedger`, so round costs are exact counts of
real numbers moved.  The network is synchronous and lossless.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .exceptions import DataFormatError
from .model import ModelFamily, ParameterPartition, SiteData, make_family
from .optimize import newton_maximize
from .score import InfoBlocks, empirical_information, partial_information, site_efficient_score


class MessageKind(str, Enum):
    BROADCAST_THETA = "broadcast_theta"
    RETURN_BETA_BAR = "return_beta_bar"
    EFFICIENT_SCORE = "efficient_score"
    BROADCAST_BETA_T = "broadcast_beta_t"
    NUISANCE_UPDATE = "nuisance_update"
    SCORE_GRADIENT = "score_gradient"
    ESTIMATE_SHARE = "estimate_share"


@dataclass(frozen=True)
class Message:
    """One directed transfer of a flat vector of real numbers."""

    kind: MessageKind
    sender: int
    recipient: int
    payload: tuple[float, ...]

    @property
    def payload_len(self) -> int:
        return len(self.payload)


def make_message(kind: MessageKind, sender: int, recipient: int, payload) -> Message:
    values = tuple(float(v) for v in np.asarray(payload, dtype=float).reshape(-1))
    return Message(kind, sender, recipient, values)


class CommLedger:
    """Exact per-round accounting of numbers transferred.

    ``max_payload`` is the per-message sanity bound (d*K by default in
    the estimators): any payload longer than that is rejected as
    smuggled per-observation data.
    """

    def __init__(self, max_payload: int | None = None):
        self.max_payload = max_payload
        self.rounds: list[list[Message]] = []
        self.labels: list[str] = []

    def begin_round(self, label: str) -> int:
        self.rounds.append([])
        self.labels.append(label)
        return len(self.rounds) - 1

    def send(self, msg: Message) -> None:
        if not self.rounds:
            raise RuntimeError("no round begun; call begin_round first")
        if self.max_payload is not None and msg.payload_len > self.max_payload:
            raise ValueError(
                f"payload of {msg.payload_len} numbers exceeds the per-message "
                f"bound {self.max_payload}; per-observation data must not cross "
                "site boundaries"
            )
        self.rounds[-1].append(msg)

    def round_cost(self, round_index: int) -> int:
        if round_index >= len(self.rounds):
            return 0
        return sum(m.payload_len for m in self.rounds[round_index])

    def per_round(self) -> list[int]:
        return [self.round_cost(i) for i in range(len(self.rounds))]

    def total(self) -> int:
        return sum(self.per_round())

    @property
    def messages(self) -> list[Message]:
        return [m for rnd in self.rounds for m in rnd]

    def summary(self) -> dict:
        return {
            "total": self.total(),
            "per_round": self.per_round(),
            "round_labels": list(self.labels),
            "n_messages": len(self.messages),
        }


class SiteNode:
    """One site: private data plus the summaries it is willing to share."""

    def __init__(self, site_id: int, data: SiteData, family: ModelFamily):
        self.site_id = site_id
        self._data = data
        self.family = family
        self._theta_bar: np.ndarray | None = None
        part = family.partition
        if data.n < part.d:
            warnings.warn(
                f"site {site_id} has n={data.n} < d={part.d} observations; "
                "the local fit may be unstable",
                stacklevel=2,
            )

    @property
    def n(self) -> int:
        return self._data.n

    @property
    def partition(self) -> ParameterPartition:
        return self.family.partition

    @property
    def local_data(self) -> SiteData:
        """Raw observations.

        Only the designated local site of a round may use this; remote
        sites are driven exclusively through the summary methods below.
        """
        return self._data

    # -- summary interface (what may cross the site boundary) ---------------

    def local_mle(self, init=None) -> np.ndarray:
        """Joint maximizer of the site log likelihood, cached."""
        if init is None and self._theta_bar is not None:
            return self._theta_bar
        part = self.partition
        x0 = np.zeros(part.d) if init is None else np.asarray(init, dtype=float)

        def objective(theta):
            beta, gamma = part.split(theta)
            value = self.family.loglik(self._data, beta, gamma)
            grad = self.family.loglik_grad(self._data, beta, gamma)
            hess = -self.family.neg_hessian_mean(self._data, beta, gamma)
            return value, grad, hess

        theta, _ = newton_maximize(objective, x0, site=self.site_id)
        if init is None:
            self._theta_bar = theta
        return theta

    def profile_nuisance(self, beta_fixed) -> np.ndarray:
        """Maximizer of the site log likelihood over gamma at fixed beta."""
        part = self.partition
        beta_fixed = np.asarray(beta_fixed, dtype=float)
        if self._theta_bar is not None:
            g0 = self._theta_bar[part.p :]
        else:
            g0 = np.zeros(part.q)

        def objective(gamma):
            value = self.family.loglik(self._data, beta_fixed, gamma)
            grad = self.family.loglik_grad(self._data, beta_fixed, gamma)[part.p :]
            hess = -self.family.neg_hessian_mean(self._data, beta_fixed, gamma)[part.p :, part.p :]
            return value, grad, hess

        gamma, _ = newton_maximize(objective, g0, site=self.site_id)
        return gamma

    def loglik_grad(self, beta, gamma) -> np.ndarray:
        return self.family.loglik_grad(self._data, beta, gamma)

    def information(self, beta, gamma) -> InfoBlocks:
        return empirical_information(self.family, self._data, beta, gamma)

    def efficient_score(self, beta, gamma) -> np.ndarray:
        blocks = self.information(beta, gamma)
        return site_efficient_score(
            self.family, self._data, beta, gamma, blocks, site=self.site_id
        )

    def partial_information_at(self, theta=None) -> np.ndarray:
        """Per-site partial information for beta (at the local MLE by default)."""
        theta = self.local_mle() if theta is None else np.asarray(theta, dtype=float)
        beta, gamma = self.partition.split(theta)
        return partial_information(self.information(beta, gamma), site=self.site_id)

    def beta_variance_diag(self) -> np.ndarray:
        """Diagonal of the estimated variance of the local beta estimate."""
        info = self.partial_information_at()
        return np.diag(np.linalg.inv(info)) / self.n


# -- data ingestion ----------------------------------------------------------


def load_site_csv(
    path,
    outcome: str,
    common: list[str],
    intercept: bool = True,
    site_id: int = 0,
) -> SiteData:
    """Read one site file: header row, outcome column, declared common
    columns; every remaining column is a nuisance covariate.  An
    intercept column is prepended to the nuisance block by default."""
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataFormatError(f"{path}: file is empty")
    header = [h.strip() for h in rows[0]]
    if outcome not in header:
        raise DataFormatError(f"{path}: outcome column {outcome!r} not in header {header}")
    for name in common:
        if name not in header:
            raise DataFormatError(f"{path}: common column {name!r} not in header {header}")
    nuisance = [h for h in header if h != outcome and h not in common]
    if not rows[1:]:
        raise DataFormatError(f"{path}: no data rows")

    def parse(row_idx: int, row: list[str], name: str) -> float:
        try:
            return float(row[header.index(name)])
        except (ValueError, IndexError):
            raise DataFormatError(
                f"{path}: row {row_idx}, column {name!r}: malformed value"
            ) from None

    y, x_rows, z_rows = [], [], []
    for i, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise DataFormatError(
                f"{path}: row {i}: expected {len(header)} fields, got {len(row)}"
            )
        y.append(parse(i, row, outcome))
        x_rows.append([parse(i, row, name) for name in common])
        z_vals = [parse(i, row, name) for name in nuisance]
        z_rows.append(([1.0] + z_vals) if intercept else z_vals)
    if not y:
        raise DataFormatError(f"{path}: no data rows")
    if not z_rows[0]:
        raise DataFormatError(
            f"{path}: no nuisance columns (need at least an intercept or one "
            "undeclared covariate column)"
        )
    return SiteData(np.array(y), np.array(x_rows), np.array(z_rows), site_id=site_id)


def load_manifest(path) -> tuple[ModelFamily, list[SiteNode]]:
    """Load a JSON manifest listing site CSVs and the column partition.

    Schema::

        {
          "family":   "logistic" | "gaussian",
          "outcome":  "<column name>",
          "common":   ["<column>", ...],
          "sites":    ["site1.csv", ...],      # relative to the manifest
          "intercept": true                    # optional, default true
        }
    """
    path = Path(path)
    try:
        spec = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataFormatError(f"{path}: cannot read manifest ({exc})") from None
    for key in ("family", "outcome", "common", "sites"):
        if key not in spec:
            raise DataFormatError(f"{path}: manifest missing required key {key!r}")
    if not spec["sites"]:
        raise DataFormatError(f"{path}: manifest lists no site files")
    if not spec["common"]:
        raise DataFormatError(f"{path}: manifest declares no common covariates")
    intercept = bool(spec.get("intercept", True))

    datasets = []
    for idx, rel in enumerate(spec["sites"]):
        datasets.append(
            load_site_csv(
                path.parent / rel,
                outcome=spec["outcome"],
                common=list(spec["common"]),
                intercept=intercept,
                site_id=idx,
            )
        )
    part = datasets[0].partition
    for rel, data in zip(spec["sites"], datasets):
        if data.partition != part:
            raise DataFormatError(
                f"{path}: partition mismatch: {rel} has (p={data.partition.p}, "
                f"q={data.partition.q}), expected (p={part.p}, q={part.q})"
            )
    family = make_family(spec["family"], part)
    return family, [SiteNode(d.site_id, d, family) for d in datasets]


def sites_from_data(datasets: list[SiteData], family: ModelFamily) -> list[SiteNode]:
    """Wrap in-memory per-site datasets as network nodes."""
    return [SiteNode(d.site_id, d, family) for d in datasets]
