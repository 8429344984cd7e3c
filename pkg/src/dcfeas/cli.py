"""Command-line front end.

Exit codes for the analysis commands depend on the verdict only:
0 feasible, 2 infeasible, 3 boundary, 4 undecided. Input errors exit with 1.
With several demands the largest code wins.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .boundary import FAMILIES, sweep_boundary, write_boundary_csv
from .errors import DCFeasError, DimensionMismatch, StepFailure
from .feasibility import (
    NonnegVerdict,
    SPStatus,
    chi_batch,
    dominates,
    find_certificate,
    nonneg_decide,
    sufficient_bolognani,
    sufficient_clamped_nonneg,
    sufficient_simpson_porco,
    tight_points,
    verify_certificate,
)
from .matanalysis import lmi_block
from .network import check_partition, read_network
from .operating_point import (
    ContinuationOptions,
    ContinuationResult,
    Verdict,
    classify,
    solve_desired,
    write_trace_csv,
)
from .powerflow import GridCore, dissipation, make_core

EXIT_CODES = {"feasible": 0, "infeasible": 2, "boundary": 3, "undecided": 4}


@dataclass
class DemandReport:
    demand: list
    verdict: str
    decided_by: str
    provenance: list = field(default_factory=list)
    theta_star: Optional[float] = None
    theta_star_is_bound: bool = False
    degenerate_ray: bool = False
    operating_point: Optional[list] = None
    stability: Optional[str] = None
    dissipation: Optional[float] = None
    certificate: Optional[dict] = None
    note: Optional[str] = None

    @property
    def exit_code(self) -> int:
        return EXIT_CODES[self.verdict]


@dataclass
class Report:
    command: str
    grid: dict
    results: list = field(default_factory=list)
    timing_s: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "Report":
        return cls(d["command"], d["grid"], [DemandReport(**r) for r in d["results"]], d["timing_s"])

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "Report":
        return cls.from_dict(json.loads(text))

    @property
    def exit_code(self) -> int:
        return max((r.exit_code for r in self.results), default=0)


# -- analysis -------------------------------------------------------------------

def _floats(x) -> list:
    return [float(v) for v in np.asarray(x).reshape(-1)]


def _attach_point(core: GridCore, rep: DemandReport, res: ContinuationResult) -> None:
    rep.theta_star = float(res.theta_star)
    rep.theta_star_is_bound = res.theta_star_is_bound
    rep.degenerate_ray = res.degenerate_ray
    if res.V_L is not None:
        rep.operating_point = _floats(res.V_L)
        rep.stability = classify(core, res.V_L).value
        rep.dissipation = float(dissipation(core, res.V_L))


def _lmi_certificate(core: GridCore, P: np.ndarray, seeds, budget: int, seed: int) -> Optional[dict]:
    for s in seeds:
        if s is None:
            continue
        s = np.asarray(s, dtype=float)
        if np.all(s > 0) and verify_certificate(core, s, P):
            nu = s / s.sum()
            return {"kind": "lmi", "nu": _floats(nu),
                    "min_eig": float(np.linalg.eigvalsh(lmi_block(core, nu, P))[0])}
    cert = find_certificate(core, P, budget=budget, seeds=[s for s in seeds if s is not None], seed=seed)
    if cert is None:
        return None
    return {"kind": "lmi", "nu": _floats(cert.nu), "min_eig": cert.min_eig}


def _run_continuation(core: GridCore, P: np.ndarray, rep: DemandReport, opts: ContinuationOptions,
                      budget: int, seed: int) -> DemandReport:
    try:
        res = solve_desired(core, P, opts)
    except StepFailure as exc:
        rep.verdict, rep.note = "undecided", f"continuation failed: {exc}"
        rep.provenance.append("continuation: step failure")
        return rep
    _attach_point(core, rep, res)
    rep.provenance.append(f"continuation: {res.verdict.value} (theta*={res.theta_star:.12g})")
    if res.verdict is Verdict.INFEASIBLE:
        rep.verdict = "infeasible"
        rep.certificate = _lmi_certificate(core, P, [res.fold_normal], budget, seed)
        if rep.certificate is None:
            rep.certificate = {"kind": "ray-margin", "theta_star": float(res.theta_star),
                               "fold_normal": _floats(res.fold_normal)}
    else:
        rep.verdict = "boundary" if res.verdict is Verdict.BOUNDARY else "feasible"
    return rep


def analyse_demand(core: GridCore, P, method: str = "auto", seed: int = 42, resolution: int = 200,
                   budget: int = 2000, opts: Optional[ContinuationOptions] = None) -> DemandReport:
    """Decide one demand with the requested method and collect the evidence."""
    P = np.asarray(P, dtype=float).reshape(-1)
    if P.shape != (core.n,):
        raise DimensionMismatch(f"demand must have length {core.n}, got {P.shape[0]}")
    opts = opts or ContinuationOptions()
    rep = DemandReport(_floats(P), "undecided", method)

    if method == "continuation":
        return _run_continuation(core, P, rep, opts, budget, seed)

    if method == "lmi":
        cert = _lmi_certificate(core, P, [], budget, seed)
        if cert is None:
            rep.note = f"no certificate found within {budget} evaluations"
            rep.provenance.append("lmi: none found")
        else:
            rep.verdict, rep.certificate = "infeasible", cert
            rep.provenance.append("lmi: certificate found")
        return rep

    if method == "nonneg":
        if np.any(P < 0):
            ok = sufficient_clamped_nonneg(core, P, resolution)
            rep.provenance.append(f"clamped-nonneg: {'holds' if ok else 'fails'}")
            if not ok:
                rep.note = "clamped demand is infeasible; the test is only sufficient for mixed signs"
                return rep
            return _feasible_with_point(core, P, rep, "feasible", opts)
        res = nonneg_decide(core, P, resolution)
        rep.provenance.append(f"nonneg-simplex: {res.verdict.value} (min m={res.m_min:.3e})")
        return _from_nonneg(core, P, rep, res, opts)

    if method != "auto":
        raise ValueError(f"unknown method {method!r}")

    # Cheap sufficient conditions first.
    if not np.any(P > 0):
        rep.decided_by = "nonpositive-demand"
        rep.provenance.append("nonpositive demand: interior")
        return _feasible_with_point(core, P, rep, "feasible", opts)

    sp = sufficient_simpson_porco(core, P)
    rep.provenance.append(f"simpson-porco: {sp.status.value}")
    bol = sufficient_bolognani(core, P, 2.0)
    rep.provenance.append(f"bolognani(p=2): {'holds' if bol else 'fails'}")
    dom = dominates(P, core.P_max) or bool(np.all(P == core.P_max))
    rep.provenance.append(f"below P_max: {'yes' if dom else 'no'}")
    if sp.status is SPStatus.HOLDS_TIGHT:
        rep.decided_by = "simpson-porco"
        return _feasible_with_point(core, P, rep, "boundary", opts)
    if sp.status is SPStatus.HOLDS:
        rep.decided_by = "simpson-porco"
        return _feasible_with_point(core, P, rep, "feasible", opts)
    if bol:
        rep.decided_by = "bolognani"
        return _feasible_with_point(core, P, rep, "feasible", opts)

    total, cap = float(P.sum()), float(core.P_max.sum())
    if total > cap * (1.0 + 1e-9):
        rep.decided_by = "total-power-bound"
        rep.provenance.append(f"total demand {total:.6g} exceeds total of P_max {cap:.6g}")
        rep.verdict = "infeasible"
        uniform = np.full(core.n, 1.0 / core.n)
        rep.certificate = _lmi_certificate(core, P, [uniform], budget, seed)
        return rep

    if np.all(P >= 0):
        res = nonneg_decide(core, P, resolution)
        rep.provenance.append(f"nonneg-simplex: {res.verdict.value} (min m={res.m_min:.3e})")
        if res.verdict is NonnegVerdict.INFEASIBLE:
            rep.decided_by = "nonneg-simplex"
            return _from_nonneg(core, P, rep, res, opts)

    rep.decided_by = "continuation"
    return _run_continuation(core, P, rep, opts, budget, seed)


def _feasible_with_point(core, P, rep: DemandReport, verdict: str, opts) -> DemandReport:
    rep.verdict = verdict
    try:
        res = solve_desired(core, P, opts)
    except StepFailure as exc:
        rep.note = f"operating point unavailable: {exc}"
        return rep
    _attach_point(core, rep, res)
    if res.verdict is Verdict.BOUNDARY and rep.verdict == "feasible":
        rep.verdict = "boundary"
    rep.provenance.append(f"continuation: {res.verdict.value} (theta*={res.theta_star:.12g})")
    return rep


def _from_nonneg(core, P, rep: DemandReport, res, opts) -> DemandReport:
    if res.verdict is NonnegVerdict.INFEASIBLE:
        rep.verdict = "infeasible"
        lam = chi_batch(core, res.nu)[0]
        rep.certificate = {"kind": "lmi", "nu": _floats(lam / lam.sum()),
                           "min_eig": float(np.linalg.eigvalsh(lmi_block(core, lam / lam.sum(), P))[0]),
                           "simplex_nu": _floats(res.nu), "m_min": res.m_min}
        return rep
    verdict = "feasible" if res.verdict is NonnegVerdict.FEASIBLE_INTERIOR else "boundary"
    return _feasible_with_point(core, P, rep, verdict, opts)


# -- input helpers --------------------------------------------------------------

def parse_demands(text: str) -> list:
    """Inline ``a,b,c`` (several separated by ``;``) or a JSON file with one array or a list of arrays."""
    path = Path(text)
    if path.is_file():
        data = json.loads(path.read_text())
        arr = np.asarray(data, dtype=float)
        if arr.ndim == 1:
            return [arr]
        if arr.ndim == 2:
            return list(arr)
        raise ValueError(f"{text}: expected a JSON array or a list of arrays")
    out = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if chunk:
            out.append(np.array([float(v) for v in chunk.split(",")]))
    if not out:
        raise ValueError("empty demand")
    return out


def _load_core(path) -> GridCore:
    part, V_S = read_network(path)
    return make_core(part, V_S)


def _print_human(report: Report, out=sys.stdout) -> None:
    g = report.grid
    print(f"grid: n={g['n']} m={g['m']}", file=out)
    print(f"  V_star = {g['V_star']}", file=out)
    print(f"  P_max  = {g['P_max']}", file=out)
    for r in report.results:
        print(f"demand {r.demand}: {r.verdict.upper()} (decided by {r.decided_by})", file=out)
        for line in r.provenance:
            print(f"  - {line}", file=out)
        if r.theta_star is not None:
            bound = " (lower bound)" if r.theta_star_is_bound else ""
            print(f"  theta_star = {r.theta_star:.12g}{bound}", file=out)
        if r.degenerate_ray:
            print("  degenerate ray: zero demand", file=out)
        if r.operating_point is not None:
            print(f"  V_L = {r.operating_point}", file=out)
            print(f"  stability = {r.stability}, dissipation = {r.dissipation:.12g}", file=out)
        if r.certificate is not None:
            print(f"  certificate = {r.certificate}", file=out)
        if r.note:
            print(f"  note: {r.note}", file=out)
    print(f"time: {report.timing_s:.3f} s", file=out)


# -- commands -------------------------------------------------------------------

def cmd_validate(args) -> int:
    part, V_S = read_network(args.network)
    ok = True
    for name, passed, detail in check_partition(part):
        ok &= passed
        print(f"{'ok  ' if passed else 'FAIL'} {name}: {detail}")
    core = make_core(part, V_S)
    print(f"V_star = {_floats(core.V_star)}")
    print(f"I_star = {_floats(core.I_star)}")
    print(f"P_max  = {_floats(core.P_max)}")
    return 0 if ok else 1


def _analysis_report(args, command: str, method: str) -> Report:
    t0 = time.perf_counter()
    core = _load_core(args.network)
    opts = ContinuationOptions(boundary_band=args.band)
    report = Report(command, core.summary())
    for P in parse_demands(args.demand):
        report.results.append(analyse_demand(core, P, method, seed=args.seed, resolution=args.resolution,
                                             budget=args.budget, opts=opts))
    report.timing_s = time.perf_counter() - t0
    return report


def _emit(report: Report, as_json: bool) -> int:
    if as_json:
        print(report.to_json())
    else:
        _print_human(report)
    return report.exit_code


def cmd_feasible(args) -> int:
    return _emit(_analysis_report(args, "feasible", args.method), args.json)


def cmd_operating_point(args) -> int:
    t0 = time.perf_counter()
    core = _load_core(args.network)
    opts = ContinuationOptions(boundary_band=args.band)
    demands = parse_demands(args.demand)
    if args.trace and len(demands) != 1:
        raise ValueError("--trace needs exactly one demand")
    report = Report("operating-point", core.summary())
    for P in demands:
        if P.shape != (core.n,):
            raise DimensionMismatch(f"demand must have length {core.n}, got {P.shape[0]}")
        rep = DemandReport(_floats(P), "undecided", "continuation")
        try:
            res = solve_desired(core, P, opts)
        except StepFailure as exc:
            rep.note = str(exc)
            report.results.append(rep)
            continue
        _attach_point(core, rep, res)
        rep.verdict = {Verdict.INTERIOR: "feasible", Verdict.BOUNDARY: "boundary",
                       Verdict.INFEASIBLE: "infeasible"}[res.verdict]
        rep.provenance.append(f"continuation: {res.verdict.value}")
        if res.verdict is Verdict.INFEASIBLE:
            rep.certificate = {"kind": "ray-margin", "theta_star": float(res.theta_star),
                               "fold_normal": _floats(res.fold_normal)}
        if args.trace:
            write_trace_csv(args.trace, res.trace)
        report.results.append(rep)
    report.timing_s = time.perf_counter() - t0
    return _emit(report, args.json)


def cmd_certificate(args) -> int:
    return _emit(_analysis_report(args, "certificate", "lmi"), args.json)


def cmd_boundary(args) -> int:
    if args.samples < 2:
        raise ValueError("--samples must be >= 2")
    core = _load_core(args.network)
    pts = sweep_boundary(core, args.family, args.samples, seed=args.seed)
    if args.out:
        write_boundary_csv(args.out, pts)
    else:
        write_boundary_csv(sys.stdout, pts)
    P = np.array([bp.P_c for bp in pts])
    print(f"{len(pts)} boundary points ({args.family}); "
          f"P range per load: min {_floats(P.min(axis=0))} max {_floats(P.max(axis=0))}",
          file=sys.stderr if not args.out else sys.stdout)
    return 0


def cmd_tight_points(args) -> int:
    core = _load_core(args.network)
    pts = tight_points(core)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["alpha"] + [f"P_{i + 1}" for i in range(core.n)])
            for alpha, P in pts:
                w.writerow([" ".join(str(i) for i in alpha)] + [f"{x:.17g}" for x in P])
    if args.json:
        print(json.dumps([{"alpha": list(a), "P": _floats(P)} for a, P in pts], indent=2))
    else:
        for alpha, P in pts:
            print(f"alpha={list(alpha)} P={_floats(P)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dcfeas", description="Feasibility analysis of constant-power DC grids.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("validate", help="check a network file and print open-circuit quantities")
    s.add_argument("network")
    s.set_defaults(func=cmd_validate)

    def analysis(name, func, help_, method=True):
        s = sub.add_parser(name, help=help_)
        s.add_argument("network")
        s.add_argument("demand", help="inline 'a,b,...' (';' separates demands) or a JSON array file; "
                                      "put '--' before demands starting with '-'")
        if method:
            s.add_argument("--method", choices=["auto", "continuation", "nonneg", "lmi"], default="auto")
        s.add_argument("--json", action="store_true", help="emit the JSON report")
        s.add_argument("--seed", type=int, default=42)
        s.add_argument("--resolution", type=int, default=200, help="simplex subdivisions per edge")
        s.add_argument("--budget", type=int, default=2000, help="certificate search evaluations")
        s.add_argument("--band", type=float, default=1e-6, help="boundary band on the ray margin")
        s.set_defaults(func=func)
        return s

    analysis("feasible", cmd_feasible, "decide feasibility of demands")
    s = analysis("operating-point", cmd_operating_point, "compute the desired operating point", method=False)
    s.add_argument("--trace", help="write the continuation trace CSV here")
    analysis("certificate", cmd_certificate, "search for an infeasibility certificate", method=False)

    s = sub.add_parser("boundary", help="sample the feasibility boundary to CSV")
    s.add_argument("network")
    s.add_argument("--family", choices=FAMILIES, default="nu")
    s.add_argument("--samples", type=int, default=101)
    s.add_argument("--out", help="CSV path (default: stdout)")
    s.add_argument("--seed", type=int, default=42)
    s.set_defaults(func=cmd_boundary)

    s = sub.add_parser("tight-points", help="list the tight points of the polyhedral condition (0-based alpha)")
    s.add_argument("network")
    s.add_argument("--out", help="CSV path")
    s.add_argument("--json", action="store_true")
    s.set_defaults(func=cmd_tight_points)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (DCFeasError, ValueError, OSError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
