"""Command-line interface: estimate on user data, simulate, compare.

Subcommands
    estimate  — run one method on a site-CSV manifest, write a JSON report
    simulate  — Monte-Carlo study over one setting or a figure preset,
                write metrics/raw CSVs and boxplot figures
    compare   — run several methods on the same data (manifest or one
                simulated replicate), write a side-by-side CSV and a
                forest plot

Config precedence: command-line flags override values from an optional
``--config`` JSON file, which override built-in defaults.  Outputs are
pure functions of (flags, input files, seed): reports carry no
timestamps, and files are written atomically so failures leave nothing
partial behind.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .estimators import SolverConfig
from .exceptions import DataFormatError, FedscoreError
from .inference import infer
from .model import make_family
from .network import load_manifest, sites_from_data
from .simlab import (
    METHOD_TAGS,
    ScenarioConfig,
    generate_scenario,
    metrics_csv_text,
    preset_scenarios,
    raw_csv_text,
    run_method,
    run_replications,
)

SCHEMA_VERSION = 1

WEIGHTS_FLAG_TO_SCHEME = {"uniform": "uniform", "n": "sample_size", "invvar": "inverse_variance"}

EXIT_CODES = {
    "usage": 2,
    "data": 3,
    "solver": 4,
    "singular": 5,
    "separation": 6,
    "degenerate": 7,
    "io": 8,
    "internal": 1,
}


class CliUsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # raise instead of exiting so failures become categorized JSON errors
    def error(self, message):
        raise CliUsageError(message)


def _atomic_write(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataFormatError(f"{path}: cannot read config ({exc})") from None
    if not isinstance(cfg, dict):
        raise DataFormatError(f"{path}: config must be a JSON object")
    return cfg


def _get(args, config: dict, key: str, default):
    """flag > config-file value > default."""
    value = getattr(args, key, None)
    if value is not None:
        return value
    if key in config:
        return config[key]
    return default


def _parse_methods(raw) -> list[str]:
    if isinstance(raw, str):
        methods = [m.strip() for m in raw.split(",") if m.strip()]
    else:
        methods = list(raw)
    for m in methods:
        if m not in METHOD_TAGS:
            raise CliUsageError(f"unknown method {m!r}; choose from {', '.join(METHOD_TAGS)}")
    if not methods:
        raise CliUsageError("no methods given")
    return methods


def _scheme(args, config) -> str:
    flag = _get(args, config, "weights", "uniform")
    if flag not in WEIGHTS_FLAG_TO_SCHEME:
        raise CliUsageError(
            f"unknown weight scheme {flag!r}; choose from {', '.join(WEIGHTS_FLAG_TO_SCHEME)}"
        )
    return WEIGHTS_FLAG_TO_SCHEME[flag]


def _local_site_index(raw, n_sites: int) -> int:
    site = int(raw)
    if not 1 <= site <= n_sites:
        raise CliUsageError(f"--local-site {site} out of range 1..{n_sites}")
    return site - 1


def _scenario_from_flags(args, config) -> ScenarioConfig:
    return ScenarioConfig(
        K=int(_get(args, config, "K", 10)),
        n=int(_get(args, config, "n", 100)),
        true_beta=tuple(float(v) for v in _get(args, config, "true_beta", (-1.0,))),
        a=float(_get(args, config, "a", 0.0)),
        b=float(_get(args, config, "b", 0.3)),
        v=(None if _get(args, config, "v", None) is None else float(_get(args, config, "v", None))),
        d_gamma=int(_get(args, config, "d_gamma", 2)),
        replicates=int(_get(args, config, "replicates", 200)),
        seed=int(_get(args, config, "seed", 0)),
    )


# -- estimate ------------------------------------------------------------------


def _report_payload(report, result, null_vec, local_site_1b, sizes, scheme) -> dict:
    payload = {
        "schema_version": SCHEMA_VERSION,
        "method": report.method,
        "beta": [float(v) for v in report.beta_hat],
        "std_errors": [float(v) for v in result.std_errors],
        "covariance": [[float(v) for v in row] for row in result.covariance],
        "ci": {
            "level": result.level,
            "lower": [float(v) for v in result.ci_lower],
            "upper": [float(v) for v in result.ci_upper],
        },
        "wald": {
            "null": [float(v) for v in null_vec],
            "chi_square": float(result.chi_square),
            "p_value": float(result.p_value),
            "dof": result.dof,
        },
        "iterations": report.iterations,
        "solver_stats": report.solver_stats,
        "communication": report.ledger.summary() if report.ledger is not None else None,
        "sites": {
            "count": len(sizes),
            "n_per_site": sizes,
            "local_site": local_site_1b,
        },
        "weights": scheme,
        "initial_beta": [float(v) for v in report.beta_bar]
        if report.beta_bar is not None
        else None,
        "warnings": list(report.warnings),
    }
    return payload


def _dump_json(payload: dict) -> str:
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def cmd_estimate(args, config) -> int:
    family, nodes = load_manifest(args.manifest)
    method = _get(args, config, "method", "m2")
    if method not in METHOD_TAGS:
        raise CliUsageError(f"unknown method {method!r}; choose from {', '.join(METHOD_TAGS)}")
    scheme = _scheme(args, config)
    local_1b = int(_get(args, config, "local_site", 1))
    local = _local_site_index(local_1b, len(nodes))
    level = float(_get(args, config, "level", 0.95))
    iterations = int(_get(args, config, "iterations", 1))
    p = family.partition.p
    null_raw = _get(args, config, "null", None)
    null_vec = np.zeros(p) if null_raw is None else np.asarray([float(v) for v in null_raw])
    if null_vec.shape != (p,):
        raise CliUsageError(f"--null needs {p} value(s), got {null_vec.shape[0]}")

    report = run_method(
        method, nodes, local_site=local, scheme=scheme,
        solver=SolverConfig(), iterations=iterations,
    )
    result = infer(report.beta_hat, report.covariance, beta_null=null_vec, level=level)
    payload = _report_payload(report, result, null_vec, local_1b, [n.n for n in nodes], scheme)
    out = Path(_get(args, config, "out", "report.json"))
    _atomic_write(out, _dump_json(payload))
    beta_txt = ", ".join(f"{v:.6g}" for v in report.beta_hat)
    print(f"{method}: beta = [{beta_txt}]  (report: {out})")
    return 0


# -- simulate ------------------------------------------------------------------


def _safe_label(label: str) -> str:
    return "".join(c if c.isalnum() or c in ".-" else "_" for c in label)


def cmd_simulate(args, config) -> int:
    base = _scenario_from_flags(args, config)
    preset = _get(args, config, "preset", None)
    scenarios = preset_scenarios(preset, base) if preset else [base]
    methods = _parse_methods(_get(args, config, "methods", "average,homo,m1,m2,m3"))
    scheme = _scheme(args, config)
    level = float(_get(args, config, "level", 0.95))
    iterations = int(_get(args, config, "iterations", 1))
    out_dir = Path(_get(args, config, "out_dir", "simout"))
    figures = _get(args, config, "figures", True)

    local_1b = int(_get(args, config, "local_site", 1))
    tables = []
    for cfg in scenarios:
        local = _local_site_index(local_1b, cfg.K)
        tables.append(
            run_replications(
                cfg, methods, local_site=local, scheme=scheme,
                level=level, iterations=iterations,
            )
        )

    metrics_text = "".join(
        metrics_csv_text(t.rows, header=(i == 0)) for i, t in enumerate(tables)
    )
    raw_text = "".join(
        raw_csv_text(t.records, t.truth, t.setting, header=(i == 0))
        for i, t in enumerate(tables)
    )
    _atomic_write(out_dir / "metrics.csv", metrics_text)
    _atomic_write(out_dir / "raw_estimates.csv", raw_text)
    if figures:
        from .plots import boxplot_estimates

        out_dir.mkdir(parents=True, exist_ok=True)
        for t in tables:
            boxplot_estimates(
                t.records, t.truth, methods, t.setting,
                out_dir / f"fig_{_safe_label(t.setting)}.png",
            )
    for t in tables:
        for row in t.rows:
            if row["bias"] != "":
                print(
                    f"[{t.setting}] {row['method']}: bias={row['bias']:+.4f} "
                    f"sd={row['sd']:.4f} rmse={row['rmse']:.4f} "
                    f"coverage={row['coverage'] if row['coverage'] != '' else 'n/a'} "
                    f"failures={row['failures']}"
                )
            else:
                print(f"[{t.setting}] {row['method']}: all replicates failed")
    print(f"wrote {out_dir / 'metrics.csv'} and {out_dir / 'raw_estimates.csv'}")
    return 0


# -- compare -------------------------------------------------------------------


def cmd_compare(args, config) -> int:
    methods = _parse_methods(_get(args, config, "methods", "average,m1,m2,m3"))
    scheme = _scheme(args, config)
    level = float(_get(args, config, "level", 0.95))
    iterations = int(_get(args, config, "iterations", 1))

    if getattr(args, "manifest", None):
        family, nodes = load_manifest(args.manifest)
        datasets = None
    else:
        cfg = _scenario_from_flags(args, config)
        datasets, _ = generate_scenario(cfg, 0)
        family = make_family(cfg.family, datasets[0].partition)
        nodes = sites_from_data(datasets, family)
    local_1b = int(_get(args, config, "local_site", 1))
    local = _local_site_index(local_1b, len(nodes))

    rows = []
    for method in methods:
        current = nodes if datasets is None else sites_from_data(datasets, family)
        report = run_method(
            method, current, local_site=local, scheme=scheme,
            solver=SolverConfig(), iterations=iterations,
        )
        result = infer(report.beta_hat, report.covariance, level=level)
        for coord in range(family.partition.p):
            rows.append(
                {
                    "method": method,
                    "coord": coord,
                    "estimate": float(report.beta_hat[coord]),
                    "std_error": float(result.std_errors[coord]),
                    "ci_lower": float(result.ci_lower[coord]),
                    "ci_upper": float(result.ci_upper[coord]),
                    "comm_total": report.ledger.total() if report.ledger else 0,
                }
            )

    baseline = methods[0]
    base_by_coord = {r["coord"]: r["estimate"] for r in rows if r["method"] == baseline}
    lines = [f"method,coord,estimate,std_error,ci_lower,ci_upper,comm_total,rel_diff_vs_{baseline}"]
    for r in rows:
        b = base_by_coord[r["coord"]]
        rel = abs(r["estimate"] - b) / abs(b) if b != 0.0 else float("nan")
        rel_txt = "" if r["method"] == baseline else repr(rel)
        lines.append(
            f"{r['method']},{r['coord']},{r['estimate']!r},{r['std_error']!r},"
            f"{r['ci_lower']!r},{r['ci_upper']!r},{r['comm_total']},{rel_txt}"
        )
    out = Path(_get(args, config, "out", "compare.csv"))
    _atomic_write(out, "\n".join(lines) + "\n")
    if _get(args, config, "figures", True):
        from .plots import forest_plot

        forest_plot(rows, out.with_suffix(".png"))
    for r in rows:
        print(
            f"{r['method']}[{r['coord']}]: {r['estimate']:+.6f} "
            f"({r['ci_lower']:+.4f}, {r['ci_upper']:+.4f})"
        )
    print(f"wrote {out}")
    return 0


# -- parser --------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(
        prog="fedscore",
        description=(
            "Heterogeneity-aware distributed inference: tilted surrogate "
            "efficient-score estimators, baselines, and a replication harness. "
            "Precedence: flags > --config JSON > defaults."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON file with default flag values")
        p.add_argument("--weights", choices=sorted(WEIGHTS_FLAG_TO_SCHEME),
                       help="initial-combine weights (default uniform)")
        p.add_argument("--local-site", dest="local_site", type=int,
                       help="designated local site, 1-based (default 1)")
        p.add_argument("--level", type=float, help="confidence level (default 0.95)")
        p.add_argument("--iterations", type=int,
                       help="inner rounds for the modified method (default 1)")

    pe = sub.add_parser("estimate", help="run one estimator on a data manifest")
    pe.add_argument("--manifest", required=True, help="JSON manifest of site CSVs")
    pe.add_argument("--method", choices=METHOD_TAGS, help="estimator (default m2)")
    pe.add_argument("--null", nargs="+", type=float,
                    help="null value(s) for the Wald test (default zeros)")
    pe.add_argument("--out", help="report path (default report.json)")
    common(pe)
    pe.set_defaults(func=cmd_estimate)

    ps = sub.add_parser("simulate", help="Monte-Carlo replication study")
    ps.add_argument("--preset", choices=("figure1", "figure2", "figure3"),
                    help="run a whole figure's settings instead of one scenario")
    ps.add_argument("--K", type=int, help="number of sites (default 10)")
    ps.add_argument("--n", type=int, help="per-site sample size (default 100)")
    ps.add_argument("--a", type=float, help="outcome-prevalence knob (default 0.0)")
    ps.add_argument("--b", type=float, help="exposure prevalence (default 0.3)")
    ps.add_argument("--v", type=float, help="heterogeneity scale (hetero generator)")
    ps.add_argument("--d-gamma", dest="d_gamma", type=int,
                    help="nuisance dimension incl. intercept (default 2)")
    ps.add_argument("--replicates", type=int, help="replicates per setting (default 200)")
    ps.add_argument("--methods", help="comma-separated methods (default average,homo,m1,m2,m3)")
    ps.add_argument("--seed", type=int, help="master seed (default 0)")
    ps.add_argument("--out-dir", dest="out_dir", help="output directory (default simout)")
    ps.add_argument("--figures", dest="figures", action="store_true", default=None,
                    help="render boxplot PNGs (default on)")
    ps.add_argument("--no-figures", dest="figures", action="store_false",
                    help="skip figure rendering")
    common(ps)
    ps.set_defaults(func=cmd_simulate)

    pc = sub.add_parser("compare", help="side-by-side methods on the same data")
    pc.add_argument("--manifest", help="JSON manifest of site CSVs")
    pc.add_argument("--K", type=int, help="scenario sites (if no manifest)")
    pc.add_argument("--n", type=int, help="scenario per-site n")
    pc.add_argument("--a", type=float, help="scenario outcome knob")
    pc.add_argument("--b", type=float, help="scenario exposure prevalence")
    pc.add_argument("--v", type=float, help="scenario heterogeneity scale")
    pc.add_argument("--d-gamma", dest="d_gamma", type=int, help="scenario nuisance dimension")
    pc.add_argument("--seed", type=int, help="scenario seed (default 0)")
    pc.add_argument("--methods", help="comma-separated methods (default average,m1,m2,m3)")
    pc.add_argument("--out", help="table path (default compare.csv)")
    pc.add_argument("--figures", dest="figures", action="store_true", default=None)
    pc.add_argument("--no-figures", dest="figures", action="store_false")
    common(pc)
    pc.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        config = _load_config(getattr(args, "config", None))
        return args.func(args, config)
    except CliUsageError as err:
        _emit_error("usage", str(err))
        return EXIT_CODES["usage"]
    except FedscoreError as err:
        _emit_error(err.category, str(err))
        return EXIT_CODES.get(err.category, 1)
    except OSError as err:
        _emit_error("io", str(err))
        return EXIT_CODES["io"]


def _emit_error(category: str, detail: str) -> None:
    sys.stderr.write(json.dumps({"error": category, "detail": detail}) + "\n")


if __name__ == "__main__":
    sys.exit(main())
