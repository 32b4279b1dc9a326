"""Command-line experiment runner.

    ipslab <subcommand> --config cfg.json [--seed N] [--workers N] [--out DIR] [--replicas N]

Each run writes ``<out>/<subcommand>.csv`` and ``<out>/<subcommand>.manifest.json``.
The exit status is 0 when every check passes, 1 when a check fails, 2 for
an invalid configuration and 3 for a runtime error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import KINDS, ConfigError, ExperimentConfig, parse_config
from .coupling import CouplingSchedule, coupling_experiment, spread_estimator
from .duality import mc_deterministic_duality_check, mc_duality_check
from .engine import Configuration, RngStream, evolve_block, map_blocks
from .exactcheck import (
    exact_dtransform_constancy,
    exact_generator_duality_residual,
    exact_ladder_consistency,
    exact_stationarity_residual,
)
from .instances import ExactCase, exact_suite
from .measures import ProductMeasure, exact_dtransform_site, mc_invariance_check, mixing_estimator, theta
from .stats import Moments, merge_all

__all__ = ["SCHEMAS", "RunOutput", "run", "main", "format_csv"]

SCHEMA_VERSION = 1

SCHEMAS = {
    "simulate": ("simulate", ["t", "pos", "layer", "mean_occupancy", "se"]),
    "check-duality": ("duality", ["xi_id", "eta_id", "t", "lhs", "rhs", "lhs_se", "rhs_se", "z"]),
    "check-invariance": ("duality", ["xi_id", "eta_id", "t", "lhs", "rhs", "lhs_se", "rhs_se", "z"]),
    "check-exact": ("exact", ["check_name", "instance", "residual", "threshold", "pass"]),
    "couple": ("coupling", ["horizon", "fraction_coupled", "se", "q50", "q90"]),
    "spread": ("spread", ["t", "p_disjoint", "se"]),
    "mixing": ("mixing", ["t", "cov", "se"]),
}


@dataclass
class RunOutput:
    rows: list[list] = field(default_factory=list)
    checks: list[tuple[str, bool]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(ok for _, ok in self.checks)


def _cell(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def format_csv(kind: str, rows) -> str:
    """CSV text: a schema comment line, the column header, then the rows."""
    name, columns = SCHEMAS[kind]
    buf = io.StringIO()
    buf.write(f"# ipslab schema={name} version={SCHEMA_VERSION}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(x) for x in row])
    return buf.getvalue()


def _config_of(cfg: ExperimentConfig, sites) -> Configuration:
    return Configuration.from_particles(sites, cfg.model.num_sites)


# --------------------------------------------------------------------------
# experiment runners


def _run_simulate(cfg: ExperimentConfig) -> RunOutput:
    model, p = cfg.model, cfg.params
    eta = _config_of(cfg, p["eta"])
    eta.validate(model)
    particles = eta.particles().astype(np.int64)
    n, N = len(particles), model.num_sites
    times = np.asarray(p["times"], dtype=np.float64)

    def block(b, reps, bitgen):
        rep_ptr = np.arange(reps + 1, dtype=np.int64) * n
        out, _ = evolve_block(model, rep_ptr, np.tile(particles, reps), times, bitgen)
        rid = np.repeat(np.arange(reps), n)
        occ = [np.bincount(rid * N + out[g], minlength=reps * N).reshape(reps, N) for g in range(len(times))]
        return [Moments.of(o) for o in occ]

    parts = map_blocks(block, p["replicas"], RngStream(cfg.run.seed), cfg.run.workers)
    res = RunOutput()
    lat = model.lattice
    for g, t in enumerate(times):
        acc = merge_all([part[g] for part in parts])
        for v in range(N):
            site = lat.site_of(v)
            res.rows.append([t, ";".join(map(str, site.position)), site.layer, acc.mean[v], acc.se[v]])
        res.checks.append((f"conservation t={t!r}", math.isclose(float(acc.mean.sum()), n, abs_tol=1e-9)))
    return res


def _run_duality(cfg: ExperimentConfig) -> RunOutput:
    model, p = cfg.model, cfg.params
    root = RngStream(cfg.run.seed)
    thr = p["z_threshold"]
    res = RunOutput()
    row = 0
    for i, xi in enumerate(p["xis"]):
        for j, eta in enumerate(p["etas"]):
            for t in p["times"]:
                rep = mc_duality_check(model, _config_of(cfg, xi), _config_of(cfg, eta), float(t), p["replicas"],
                                       root.child(row), cfg.run.workers)
                row += 1
                res.rows.append([i, j, float(t), rep.lhs_mean, rep.rhs_mean, rep.lhs_se, rep.rhs_se, rep.z])
                res.checks.append((f"z xi={i} eta={j} t={t!r}", rep.z <= thr))
    for i, f in enumerate(p.get("f_profiles") or []):
        for j, eta in enumerate(p["etas"]):
            for t in p["times"]:
                rep = mc_deterministic_duality_check(model, f, _config_of(cfg, eta), float(t), p["replicas"],
                                                     root.child(row), cfg.run.workers)
                row += 1
                res.rows.append([f"f{i}", j, float(t), rep.lhs_mean, rep.rhs_mean, rep.lhs_se, rep.rhs_se, rep.z])
                res.checks.append((f"z f={i} eta={j} t={t!r}", rep.z <= thr))
    return res


def _run_invariance(cfg: ExperimentConfig) -> RunOutput:
    model, p = cfg.model, cfg.params
    measure = ProductMeasure.for_model(model, p["rho"])
    root = RngStream(cfg.run.seed)
    res = RunOutput()
    row = 0
    for i, xi in enumerate(p["xis"]):
        for t in p["times"]:
            rep = mc_invariance_check(model, measure, _config_of(cfg, xi), float(t), p["replicas"],
                                      root.child(row), cfg.run.workers)
            row += 1
            res.rows.append([i, f"mu(rho={p['rho']!r})", float(t), rep.lhs_mean, rep.rhs_mean, rep.lhs_se,
                             rep.rhs_se, rep.z])
            res.checks.append((f"z xi={i} t={t!r}", rep.z <= p["z_threshold"]))
    return res


def _custom_exact_cases(cfg: ExperimentConfig) -> list[ExactCase]:
    model, p = cfg.model, cfg.params
    thr, cap = p["threshold"], p["cap"]
    checks = p["checks"] or (["duality", "dtransform"] + (["stationarity", "ladder"] if model.kind == -1 else []))
    cases = []
    tag = f"s={model.kind} a={model.alpha} d={model.lattice.d} L={model.lattice.L} S={model.lattice.num_layers}"
    if "duality" in checks:
        for n in p["sectors"]:
            cases.append(ExactCase("generator_duality", f"{tag} n={n}",
                                   lambda n=n: exact_generator_duality_residual(model, n, cap=cap), thr))
    if "dtransform" in checks:
        for rho in p["rhos"]:
            mu = ProductMeasure.for_model(model, rho)
            top = min(int(model.alpha), 4) if model.kind == -1 else 4
            cases.append(ExactCase("dtransform_site", f"{tag} rho={rho!r} k<={top}",
                                   lambda mu=mu, top=top: max(abs(exact_dtransform_site(mu, k) - theta(mu) ** k)
                                                              for k in range(top + 1)), thr))
            for n in p["sectors"]:
                cases.append(ExactCase("dtransform_constancy", f"{tag} rho={rho!r} n={n}",
                                       lambda mu=mu, n=n: exact_dtransform_constancy(model, n, mu, cap=cap), thr))
    if "stationarity" in checks:
        for rho in p["rhos"]:
            mu = ProductMeasure.for_model(model, rho)
            cases.append(ExactCase("stationarity", f"{tag} rho={rho!r}",
                                   lambda mu=mu: exact_stationarity_residual(model, mu, cap=cap), thr))
    if "ladder" in checks:
        cases.append(ExactCase("ladder_intertwining", tag, lambda: exact_ladder_consistency(model, cap=cap), thr))
    return cases


def _run_exact(cfg: ExperimentConfig) -> RunOutput:
    cases = exact_suite() if cfg.params["default_instances"] else _custom_exact_cases(cfg)
    res = RunOutput()
    for case in cases:
        r, ok = case.evaluate()
        res.rows.append([case.check, case.instance, r, case.threshold, ok])
        res.checks.append((f"{case.check} {case.instance}", ok))
    return res


def _run_couple(cfg: ExperimentConfig) -> RunOutput:
    model, p = cfg.model, cfg.params
    schedule = CouplingSchedule(p["h0"], p["max_horizon"], p["target"], p["spread0"], p["spread_cap"])
    rep = coupling_experiment(model, p["x1"], p["x2"], p["replicas"], RngStream(cfg.run.seed), schedule,
                              cfg.run.workers, route=p["route"])
    res = RunOutput()
    for h, f, se, a, b in zip(rep.horizons, rep.fraction, rep.se, rep.q50, rep.q90):
        res.rows.append([h, f, se, a, b])
    res.checks.append((f"fraction >= {p['target']!r} by horizon {rep.adaptive_horizon!r}",
                       rep.final_fraction >= p["target"]))
    res.checks.append(("fraction nondecreasing", all(b >= a for a, b in zip(rep.fraction, rep.fraction[1:]))))
    return res


def _run_spread(cfg: ExperimentConfig) -> RunOutput:
    model, p = cfg.model, cfg.params
    rep = spread_estimator(model, p["xi"], p["xi_prime"], p["times"], p["replicas"], RngStream(cfg.run.seed),
                           cfg.run.workers)
    res = RunOutput()
    for t, q, se in zip(rep.times, rep.p_disjoint, rep.se):
        res.rows.append([t, q, se])
    ok = all(b >= a - 2 * math.hypot(sa, sb)
             for a, b, sa, sb in zip(rep.p_disjoint, rep.p_disjoint[1:], rep.se, rep.se[1:]))
    res.checks.append(("nondecreasing within 2 se", ok))
    return res


def _run_mixing(cfg: ExperimentConfig) -> RunOutput:
    model, p = cfg.model, cfg.params
    measure = ProductMeasure.for_model(model, p["rho"])
    series = mixing_estimator(model, measure, _config_of(cfg, p["xi"]), _config_of(cfg, p["xi_prime"]),
                              p["times"], p["replicas"], RngStream(cfg.run.seed), cfg.run.workers)
    res = RunOutput()
    for t, c, se in zip(series.times, series.cov, series.se):
        res.rows.append([t, c, se])
    return res


RUNNERS = {
    "simulate": _run_simulate,
    "check-duality": _run_duality,
    "check-exact": _run_exact,
    "check-invariance": _run_invariance,
    "couple": _run_couple,
    "spread": _run_spread,
    "mixing": _run_mixing,
}


def run(cfg: ExperimentConfig) -> tuple[RunOutput, dict]:
    """Execute the experiment, write CSV and manifest, return the output and manifest."""
    start = time.perf_counter()
    out = RUNNERS[cfg.kind](cfg)
    wall = time.perf_counter() - start
    out_dir = Path(cfg.run.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{cfg.kind}.csv"
    csv_path.write_text(format_csv(cfg.kind, out.rows), encoding="utf-8")
    manifest = {
        "kind": cfg.kind,
        "config_sha256": cfg.digest,
        "seed": cfg.run.seed,
        "workers": cfg.run.workers,
        "version": __version__,
        "wall_time_s": round(wall, 6),
        "csv": csv_path.name,
        "checks": [{"name": name, "passed": bool(ok)} for name, ok in out.checks],
        "passed": out.passed,
    }
    (out_dir / f"{cfg.kind}.manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return out, manifest


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ipslab", description="Interacting particle system experiments.")
    parser.add_argument("--version", action="version", version=f"ipslab {__version__}")
    sub = parser.add_subparsers(dest="kind", required=True)
    for kind in KINDS:
        p = sub.add_parser(kind)
        p.add_argument("--config", required=True, type=Path, help="JSON configuration document")
        p.add_argument("--seed", type=int, help="override run.seed")
        p.add_argument("--workers", type=int, help="override run.workers")
        p.add_argument("--out", help="override run.out (output directory)")
        p.add_argument("--replicas", type=int, help="override experiment.replicas")
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        text = args.config.read_text(encoding="utf-8")
    except OSError as exc:
        print(f"error: cannot read {args.config}: {exc}", file=sys.stderr)
        return 2
    overrides = {"seed": args.seed, "workers": args.workers, "out": args.out, "replicas": args.replicas}
    try:
        cfg = parse_config(text, kind=args.kind, overrides=overrides)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    try:
        out, manifest = run(cfg)
    except (ValueError, ArithmeticError, RuntimeError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    failed = [name for name, ok in out.checks if not ok]
    for name in failed:
        print(f"FAIL {name}", file=sys.stderr)
    print(f"{cfg.kind}: {len(out.checks) - len(failed)}/{len(out.checks)} checks passed; "
          f"wrote {Path(cfg.run.out) / manifest['csv']}")
    return 0 if not failed else 1


if __name__ == "__main__":
    sys.exit(main())
