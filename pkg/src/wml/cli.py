"""Experiment runner: scenario pipeline, report assembly, and emission.

The runner orchestrates mesh construction, operator assembly, eigenvalue
scans, the flow complex, and the comparison map for a registered
scenario, and emits a deterministic JSON or CSV report.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from . import chainmap as cm
from .dec import ABSOLUTE, RELATIVE, assemble
from .errors import ConfigurationError, WmlError
from .geometry import mesh_report
from .homology import simplicial_betti
from .model import oscillator_1d, robin_halfline
from .morse import adapted_field, build_thom_smale_complex, \
    find_critical_points, homology_ranks, morse_counts, morse_inequalities, \
    reflected_complex, unstable_manifold
from .scenarios import SHIPPED_SCENARIOS, get_scenario, list_scenarios, \
    scenario_mesh
from .spectral import gap_scan, lowest_eigenpairs, resolution_contract_ok

EXIT_PASS = 0
EXIT_CHECK_FAILURE = 1
EXIT_CONFIG_ERROR = 2
EXIT_NUMERICAL_FAILURE = 3


@dataclass
class RunConfig:
    scenario: str = "disk_linear"
    bc: str = ABSOLUTE
    T_list: tuple = (4.0, 8.0, 16.0)
    target_h: float = 0.08
    C0: float = 1.0
    k_eigs: int = 8
    seed: int = 0
    out: str = ""
    format: str = "json"
    override_resolution_contract: bool = False

    def validate(self):
        if self.scenario not in SHIPPED_SCENARIOS:
            # allow any registered scenario; raises for unknown names
            get_scenario(self.scenario)
        if self.bc not in (ABSOLUTE, RELATIVE):
            raise ConfigurationError("bc must be absolute or relative")
        T = list(self.T_list)
        if not T or any(t <= 0 for t in T) or \
                any(b <= a for a, b in zip(T, T[1:])):
            raise ConfigurationError("T values must be ascending and positive")
        if self.target_h <= 0:
            raise ConfigurationError("target_h must be positive")
        if self.C0 <= 0:
            raise ConfigurationError("C0 must be positive")
        if self.k_eigs < 1:
            raise ConfigurationError("k must be at least 1")
        if self.format not in ("json", "csv"):
            raise ConfigurationError("format must be json or csv")
        if self.scenario != "interval_robin" and \
                not resolution_contract_ok(self.target_h, max(T)) and \
                not self.override_resolution_contract:
            raise ConfigurationError(
                "h·sqrt(max T) = %.3f exceeds 0.5; refine the mesh or pass "
                "--override-resolution-contract"
                % (self.target_h * math.sqrt(max(T))))


@dataclass
class RunReport:
    config: dict
    checks: list                      # (name, passed, detail)
    mesh: dict = None
    counts: dict = None
    gap_table: list = field(default_factory=list)
    slopes: dict = field(default_factory=dict)
    min_big_over_T2: float = None
    inequalities: dict = None
    complex_summary: dict = None
    comparison: dict = None
    model_suite: dict = None
    timings: dict = field(default_factory=dict)

    @property
    def all_passed(self) -> bool:
        return all(ok for _, ok, _ in self.checks)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["all_passed"] = self.all_passed
        return d


def _config_from_mapping(pairs: dict) -> RunConfig:
    cfg = RunConfig()
    casts = {
        "scenario": str, "bc": str, "out": str, "format": str,
        "target_h": float, "C0": float,
        "k_eigs": int, "seed": int,
        "T_list": lambda s: tuple(float(t) for t in str(s).split(",")),
        "override_resolution_contract":
            lambda s: str(s).strip().lower() in ("1", "true", "yes"),
    }
    for key, raw in pairs.items():
        if key not in casts:
            raise ConfigurationError("unknown config key %r" % key)
        try:
            setattr(cfg, key, casts[key](raw))
        except (ValueError, TypeError):
            raise ConfigurationError("bad value %r for config key %r"
                                     % (raw, key))
    return cfg


def read_config_file(path: str) -> dict:
    """Flat key=value configuration, one assignment per line."""
    pairs = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigurationError(
                    "%s:%d: expected key=value" % (path, lineno))
            key, _, value = line.partition("=")
            pairs[key.strip()] = value.strip()
    return pairs


# ---------------------------------------------------------------------------
# pipeline


def run(config: RunConfig) -> RunReport:
    config.validate()
    if config.scenario == "interval_robin":
        return _run_model_suite(config)
    return _run_surface(config)


def _run_model_suite(config: RunConfig) -> RunReport:
    t0 = time.perf_counter()
    checks = []
    suite = {"oscillator": [], "halfline": []}
    for T in config.T_list:
        L = max(math.sqrt(25.0 / T) * 1.05, 1.0)
        h = min(config.target_h, L / 40.0)
        m = oscillator_1d(T, L, h)
        vals, _, _ = lowest_eigenpairs(m.A, m.M, k=3, seed=config.seed)
        suite["oscillator"].append(
            {"T": T, "L": L, "h": h, "eigenvalues": [float(v) for v in vals],
             "expected": [0.0, 2.0 * T, 4.0 * T]})
        ok = all(abs(v - e) <= 1e-2 * max(1.0, T)
                 for v, e in zip(vals, [0.0, 2.0 * T, 4.0 * T]))
        checks.append(("oscillator_spectrum_T%g" % T, ok,
                       "lowest three eigenvalues vs (0, 2T, 4T)"))
        L_r = max(12.5 / T, 1.0)
        h_r = min(config.target_h / 10.0, L_r / 200.0)
        r = robin_halfline(T, L_r, h_r)
        rvals, _, _ = lowest_eigenpairs(r.A, r.M, k=2, seed=config.seed)
        suite["halfline"].append(
            {"T": T, "L": L_r, "h": h_r,
             "eigenvalues": [float(v) for v in rvals]})
        ok = abs(rvals[0]) <= 1e-5 * max(1.0, T * T) and \
            rvals[1] >= 0.9 * T * T
        checks.append(("halfline_kernel_T%g" % T, ok,
                       "near-zero ground state and gap of order T^2"))
    return RunReport(config=asdict(config), checks=checks, model_suite=suite,
                     timings={"total": time.perf_counter() - t0})


def _run_surface(config: RunConfig) -> RunReport:
    t0 = time.perf_counter()
    timings = {}
    sc = get_scenario(config.scenario)
    mesh = scenario_mesh(config.scenario, config.target_h)
    timings["mesh"] = time.perf_counter() - t0
    f = sc.f
    domain = sc.domain
    checks = []

    crits = find_critical_points(f, domain)
    counts = morse_counts(crits)
    expected = sc.expected_absolute_counts if config.bc == ABSOLUTE \
        else sc.expected_relative_counts
    timings["critical_points"] = time.perf_counter() - t0

    scan = gap_scan(
        lambda: assemble(mesh, f, config.bc), config.T_list, config.C0,
        config.bc, mesh=mesh, expected_counts=expected,
        n_eigs=config.k_eigs, seed=config.seed,
        override_resolution_contract=config.override_resolution_contract,
        mesh_id=config.scenario)
    timings["gap_scan"] = time.perf_counter() - t0
    checks.append(("eigenvalue_counts", not scan.violations,
                   "; ".join(scan.violations) or
                   "low-cluster sizes match the generator counts"))

    # combinatorial complex matching the boundary condition
    if config.bc == ABSOLUTE:
        field_ = adapted_field(f, domain, sc.adaptation_radius, crits)
        complex_ = build_thom_smale_complex(crits, field_)
    else:
        neg = f.negated()
        neg_crits = find_critical_points(neg, domain)
        field_ = adapted_field(neg, domain, sc.adaptation_radius, neg_crits)
        complex_ = reflected_complex(
            build_thom_smale_complex(neg_crits, field_))
    ranks = homology_ranks(complex_)
    simp = tuple(simplicial_betti(mesh, relative=(config.bc == RELATIVE)))
    checks.append(("homology_match", tuple(ranks.betti) == simp,
                   "flow-complex Betti %s vs mesh Betti %s"
                   % (tuple(ranks.betti), simp)))
    ineq = morse_inequalities(counts, simp, config.bc)
    checks.append(("morse_inequalities", ineq.all_hold,
                   "alternating partial sums and top-degree equality"))
    timings["complex"] = time.perf_counter() - t0

    comparison = None
    if config.bc == ABSOLUTE:
        T_cmp = max(config.T_list)
        asm = assemble(mesh, f, ABSOLUTE)
        basis = cm.instanton_basis(asm, T_cmp, config.C0, seed=config.seed)
        cells = [[unstable_manifold(field_, p) for p in gens]
                 for gens in complex_.generators]
        cmat = cm.build_comparison(
            basis, complex_, cells, mesh, f, asm, sc.adaptation_radius,
            domain,
            override_resolution_contract=config.override_resolution_contract)
        D = cm.eigenbasis_differentials(basis, asm, T_cmp)
        resid = cm.chain_commutation_residual(cmat.P, D,
                                              complex_.boundary_matrices)
        iso = cm.verify_isomorphism(cmat, D, complex_.boundary_matrices)
        comparison = {
            "T": T_cmp,
            "commutation_residual": resid,
            "singular_values": [[float(s) for s in sv]
                                for sv in iso.singular_values],
            "offdiag_frobenius": [float(x) for x in iso.offdiag_frobenius],
            "induced_betti": list(iso.induced_betti),
            "complex_betti": list(iso.complex_betti),
            "is_isomorphism": iso.is_isomorphism,
        }
        checks.append(("comparison_isomorphism", iso.is_isomorphism,
                       "normalized pairing invertible and homology "
                       "transported"))
        timings["comparison"] = time.perf_counter() - t0

    timings["total"] = time.perf_counter() - t0
    return RunReport(
        config=asdict(config),
        checks=checks,
        mesh=asdict(mesh_report(mesh)),
        counts={
            "interior": list(counts.c),
            "boundary_inward": list(counts.p),
            "boundary_outward": list(counts.q),
            "generators": list(counts.absolute_generators()
                               if config.bc == ABSOLUTE
                               else counts.relative_generators()),
            "expected": list(expected),
        },
        gap_table=[{"T": r.T, "degree": r.degree, "bc": r.bc,
                    "count": r.count, "lambda_small": r.lambda_small,
                    "lambda_big": r.lambda_big} for r in scan.rows],
        slopes={str(k): v for k, v in scan.slopes.items()},
        min_big_over_T2=scan.min_big_over_T2,
        inequalities={
            "mode": ineq.mode,
            "partial_sums": [list(row) for row in ineq.partial_sums],
            "equality_at_top": ineq.equality_at_top,
            "all_hold": ineq.all_hold,
        },
        complex_summary={
            "dims": complex_.dims(),
            "boundary_matrices": [np.asarray(b).tolist()
                                  for b in complex_.boundary_matrices],
            "betti": list(ranks.betti),
            "torsion": list(ranks.torsion),
        },
        comparison=comparison,
        timings=timings,
    )


# ---------------------------------------------------------------------------
# emission


def _round12(obj):
    """Copy of a report tree with floats at 12 significant digits."""
    if isinstance(obj, dict):
        return {k: _round12(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round12(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isnan(x):
            return None
        if math.isinf(x):
            return "-inf" if x < 0 else "inf"
        return float("%.12g" % x)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def report_json(report: RunReport) -> str:
    # timings are wall-clock and would break the byte-identical output
    # guarantee for repeated runs with the same seed, so they stay
    # in-memory only
    d = report.to_dict()
    d.pop("timings", None)
    return json.dumps(_round12(d), indent=2, sort_keys=True)


def report_csv(report: RunReport) -> str:
    lines = ["T,degree,bc,count,lambda_small,lambda_big"]
    for row in report.gap_table:
        ls = row["lambda_small"]
        ls = "" if ls is None or (isinstance(ls, float) and math.isnan(ls)) \
            else "%.12g" % ls
        lines.append("%.12g,%d,%s,%d,%s,%.12g"
                     % (row["T"], row["degree"], row["bc"], row["count"],
                        ls, row["lambda_big"]))
    return "\n".join(lines) + "\n"


def emit(report: RunReport, fmt: str = "json", out: str = "") -> str:
    """Render the report; write it to `out` when a path is given."""
    if fmt == "json":
        text = report_json(report)
    elif fmt == "csv":
        text = report_csv(report)
    else:
        raise ConfigurationError("format must be json or csv")
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    return text


# ---------------------------------------------------------------------------
# entry point


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="wml",
        description="Spectral and flow-complex experiments on planar "
                    "surfaces with boundary.")
    sub = p.add_subparsers(dest="command")
    runp = sub.add_parser("run", help="run a scenario pipeline")
    runp.add_argument("--config", default="",
                      help="flat key=value configuration file")
    runp.add_argument("--scenario", default=None)
    runp.add_argument("--bc", default=None, choices=(ABSOLUTE, RELATIVE))
    runp.add_argument("--T", default=None,
                      help="comma-separated ascending deformation strengths")
    runp.add_argument("--h", default=None, type=float,
                      help="target mesh resolution")
    runp.add_argument("--C0", default=None, type=float,
                      help="low-spectrum threshold")
    runp.add_argument("--k", default=None, type=int,
                      help="eigenpairs per solve")
    runp.add_argument("--seed", default=None, type=int)
    runp.add_argument("--out", default=None, help="output file path")
    runp.add_argument("--format", default=None, choices=("json", "csv"))
    runp.add_argument("--override-resolution-contract", action="store_true",
                      default=None)
    listp = sub.add_parser("list", help="list registered scenarios")
    listp.add_argument("filter", nargs="?", default="")
    return p


_FLAG_TO_KEY = {
    "scenario": "scenario", "bc": "bc", "T": "T_list", "h": "target_h",
    "C0": "C0", "k": "k_eigs", "seed": "seed", "out": "out",
    "format": "format",
    "override_resolution_contract": "override_resolution_contract",
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "list":
            for sc in list_scenarios(args.filter):
                sys.stdout.write(
                    "%-18s %-28s abs=%s rel=%s\n"
                    % (sc.name, sc.f_formula,
                       sc.expected_absolute_counts,
                       sc.expected_relative_counts))
            return EXIT_PASS
        if args.command != "run":
            _build_parser().print_help()
            return EXIT_CONFIG_ERROR
        pairs = read_config_file(args.config) if args.config else {}
        for flag, key in _FLAG_TO_KEY.items():
            value = getattr(args, flag)
            if value is not None:
                pairs[key] = value
        config = _config_from_mapping(pairs)
        report = run(config)
    except ConfigurationError as exc:
        sys.stderr.write("configuration error: %s\n" % exc)
        return EXIT_CONFIG_ERROR
    except WmlError as exc:
        sys.stderr.write("numerical failure: %s\n" % exc)
        return EXIT_NUMERICAL_FAILURE
    text = emit(report, config.format, config.out)
    if not config.out:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    for name, ok, detail in report.checks:
        sys.stderr.write("[%s] %s: %s\n"
                         % ("PASS" if ok else "FAIL", name, detail))
    return EXIT_PASS if report.all_passed else EXIT_CHECK_FAILURE


if __name__ == "__main__":
    sys.exit(main())
