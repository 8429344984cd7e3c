"""Acceptance suite: one check per criterion, each printing a PASS/FAIL line."""

import time

import numpy as np
import pytest

from conftest import core_from_edges, corpus, random_core
from dcfeas.boundary import boundary_from_mu, boundary_from_nu, lambda_to_mu, mu_to_lambda, point_in_D
from dcfeas.feasibility import (
    NonnegVerdict,
    SPStatus,
    find_certificate,
    halfspace_margin,
    nonneg_decide,
    sufficient_bolognani,
    sufficient_simpson_porco,
    tight_point,
    verify_certificate,
)
from dcfeas.operating_point import (
    StabilityClass,
    Verdict,
    all_solutions_oracle,
    classify,
    solve_desired,
)
from dcfeas.powerflow import (
    chi_normalized,
    dissipation,
    g_of,
    in_Lambda,
    injected_power,
    jacobian,
    phi,
    psi,
    source_power,
)

BAND = 1e-4
CORPUS_SIZE = 240


def _report(capsys, k, ok, detail):
    with capsys.disabled():
        print(f"\ncriterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


@pytest.fixture(scope="module")
def runs():
    """Continuation and oracle results over the seeded random corpus."""
    out = []
    t0 = time.perf_counter()
    for core, P in corpus(2024, CORPUS_SIZE):
        out.append((core, P, solve_desired(core, P), all_solutions_oracle(core, P)))
    return out, time.perf_counter() - t0


def test_criterion_1_scalar_grid(capsys):
    t0 = time.perf_counter()
    core = core_from_edges(1, 1, [(0, 1, 1.0)], [1.0])
    errs = []
    if abs(core.P_max[0] - 0.25) > 0:
        errs.append(f"P_max={core.P_max[0]}")
    if solve_desired(core, [0.25 * (1 - 1e-9)]).verdict is Verdict.INFEASIBLE:
        errs.append("just below 0.25 declared infeasible")
    if solve_desired(core, [0.25 * (1 + 1e-3)]).verdict is not Verdict.INFEASIBLE:
        errs.append("above 0.25 not infeasible")
    th = solve_desired(core, [0.5]).theta_star
    if abs(th - 0.5) > 1e-6:
        errs.append(f"theta_star(0.5)={th}")
    V = solve_desired(core, [0.2]).V_L[0]
    if abs(V - (1 + np.sqrt(0.2)) / 2) > 1e-8:
        errs.append(f"V(0.2)={V}")
    dt = time.perf_counter() - t0
    if dt >= 1.0:
        errs.append(f"runtime {dt:.2f} s")
    _report(capsys, 1, not errs, "; ".join(errs) or f"theta*={th:.9f} V={V:.12f} in {dt * 1e3:.0f} ms")


def test_criterion_2_symmetric_pair(capsys):
    core = core_from_edges(2, 1, [(0, 1, 1.0), (0, 2, 1.0), (1, 2, 1.0)], [1.0])
    errs = []
    for name, got, want in (("V*", core.V_star, [1, 1]), ("I*", core.I_star, [1, 1]),
                            ("P_max", core.P_max, [0.25, 0.25])):
        if not np.allclose(got, want, rtol=0, atol=1e-12):
            errs.append(f"{name}={got}")
    r = solve_desired(core, core.P_max)
    if r.verdict is not Verdict.BOUNDARY:
        errs.append(f"verdict {r.verdict}")
    elif np.max(np.abs(r.V_L - 0.5)) > 1e-6:
        errs.append(f"V={r.V_L}")
    _report(capsys, 2, not errs, "; ".join(errs) or f"boundary at V={r.V_L}")


def test_criterion_3_boundary_chain(capsys):
    core = core_from_edges(2, 1, [(0, 1, 1.0), (0, 2, 1.0), (1, 2, 1.0)], [1.0])
    errs = []
    mu = np.linalg.solve(core.Y_LL, [1.0, 0.0])
    mu = mu / mu.sum()
    if np.max(np.abs(mu - [2 / 3, 1 / 3])) > 1e-10:
        errs.append(f"mu={mu}")
    bp = boundary_from_nu(core, [1, 0])
    if np.max(np.abs(bp.V_L - [0.5, 0.75])) > 1e-10:
        errs.append(f"V={bp.V_L}")
    if np.max(np.abs(bp.P_c - [0.375, 0])) > 1e-10:
        errs.append(f"P={bp.P_c}")
    Pk = tight_point(core, (0,))
    if np.max(np.abs(Pk - bp.P_c)) > 1e-10:
        errs.append(f"tight point {Pk}")
    if np.max(np.abs(boundary_from_mu(core, [2 / 3, 1 / 3]).P_c - Pk)) > 1e-10:
        errs.append("mu chain disagrees")
    m = lambda_to_mu(core, [0.75, 0.25])
    lam = mu_to_lambda(core, [2 / 3, 1 / 3])
    if np.max(np.abs(m - [2 / 3, 1 / 3])) > 1e-8 or np.max(np.abs(lam - [0.75, 0.25])) > 1e-8:
        errs.append(f"duality mu={m} lambda={lam}")
    _report(capsys, 3, not errs, "; ".join(errs) or f"P={bp.P_c} tight={Pk}")


def test_criterion_4_oracle_equivalence(runs, capsys):
    data, dt = runs
    bad, banded = [], 0
    for i, (core, P, r, sols) in enumerate(data):
        if abs(r.theta_star - 1) <= BAND:
            banded += 1
            continue
        if (r.verdict is not Verdict.INFEASIBLE) != bool(sols):
            bad.append(i)
    ok = not bad and len(data) >= 200 and dt < 300
    _report(capsys, 4, ok, f"{len(data)} grids, {banded} in band, contradictions {bad}, {dt:.1f} s")


def test_criterion_5_desired_point(runs, capsys):
    data, _ = runs
    bad, checked = [], 0
    for i, (core, P, r, sols) in enumerate(data):
        if r.V_L is None or len(sols) < 2:
            continue
        checked += 1
        scale = float(np.max(core.V_star))
        others = [s for s in sols if np.max(np.abs(s - r.V_L)) > 1e-6 * scale]
        if len(others) != len(sols) - 1:
            bad.append((i, "continuation point not among oracle solutions"))
            continue
        d0 = dissipation(core, r.V_L)
        for s in others:
            if not np.min(r.V_L - s) > 1e-8:
                bad.append((i, "domination"))
            if not d0 < dissipation(core, s):
                bad.append((i, "dissipation"))
            if classify(core, 0.5 * (r.V_L + s), tol=1e-6) is not StabilityClass.SEMI_STABLE_BOUNDARY:
                bad.append((i, "midpoint"))
    _report(capsys, 5, not bad and checked > 0, f"{checked} multi-solution demands, violations {bad[:5]}")


def test_criterion_6_condition_ordering(runs, capsys):
    data, _ = runs
    bad = []
    counts = {"bolognani": 0, "simpson-porco": 0, "nonneg-interior": 0}
    for i, (core, P, r, _) in enumerate(data):
        near = abs(r.theta_star - 1) <= BAND
        sp = sufficient_simpson_porco(core, P).status is not SPStatus.FAILS
        counts["simpson-porco"] += sp
        for p in (1, 2, np.inf):
            if sufficient_bolognani(core, P, p):
                counts["bolognani"] += 1
                if not sp:
                    bad.append((i, "bolognani", p))
        if sp and r.verdict is Verdict.INFEASIBLE and not near:
            bad.append((i, "simpson-porco"))
        if np.all(P >= 0) and nonneg_decide(core, P).verdict is NonnegVerdict.FEASIBLE_INTERIOR:
            counts["nonneg-interior"] += 1
            if r.verdict is not Verdict.INTERIOR and not near:
                bad.append((i, "nonneg"))
    _report(capsys, 6, not bad, f"passes {counts}, violations {bad[:5]}")


def test_criterion_7_certificates(runs, capsys):
    data, _ = runs
    bad, found, interior = [], 0, 0
    rng = np.random.default_rng(7)
    for i, (core, P, r, _) in enumerate(data):
        if r.verdict is Verdict.INFEASIBLE and np.all(P >= 0) and r.theta_star < 0.9:
            if find_certificate(core, P, budget=2000) is None:
                bad.append((i, "no certificate"))
            else:
                found += 1
        if r.verdict is Verdict.INTERIOR:
            interior += 1
            trial = list(rng.dirichlet(np.ones(core.n), size=20)) + [np.ones(core.n)]
            if any(verify_certificate(core, nu, P) for nu in trial):
                bad.append((i, "certificate for interior demand"))
            if core.n > 1 and find_certificate(core, P, budget=200) is not None:
                bad.append((i, "search found certificate for interior demand"))
    _report(capsys, 7, not bad and found > 0,
            f"{found} certificates found, {interior} interior demands clean, violations {bad[:5]}")


def test_criterion_8_invariants(capsys):
    rng = np.random.default_rng(8)
    worst = {"jacobian": 0.0, "g_bilinear": 0.0, "g_transpose": 0.0, "balance": 0.0, "scale": 0.0}
    for _ in range(100):
        n = int(rng.integers(1, 4))
        core = random_core(rng, n)
        V = core.V_star * rng.uniform(0.2, 1.5, n)
        J = jacobian(core, V)
        fd = np.empty_like(J)
        for j in range(n):
            e = np.zeros(n)
            e[j] = 1e-6
            fd[:, j] = (injected_power(core, V + e) - injected_power(core, V - e)) / 2e-6
        worst["jacobian"] = max(worst["jacobian"], np.max(np.abs(fd - J)) / max(1.0, np.max(np.abs(J))))
        mu, v = rng.uniform(0.1, 2.0, n), rng.normal(size=n)
        s = 4 * np.max(np.abs(core.Y_LL))
        worst["g_bilinear"] = max(worst["g_bilinear"],
                                  np.max(np.abs(g_of(core, mu) @ v - g_of(core, v) @ mu)) / s)
        G = g_of(core, mu)
        worst["g_transpose"] = max(worst["g_transpose"],
                                   np.max(np.abs(G * mu[None, :] / mu[:, None] - G.T)) / s)
        d = dissipation(core, V)
        lhs = source_power(core, V).sum() - injected_power(core, V).sum()
        worst["balance"] = max(worst["balance"],
                               abs(lhs - d) / max(1.0, d, np.abs(source_power(core, V)).sum()))
        c = 10 ** rng.uniform(-3, 3)
        lam = chi_normalized(core, rng.dirichlet(np.ones(n)))
        m = np.linalg.solve(core.Y_LL, rng.uniform(0.1, 1.0, n))
        for a, b in ((phi(core, c * lam), phi(core, lam)), (psi(core, c * m), psi(core, m))):
            worst["scale"] = max(worst["scale"], np.max(np.abs(a - b) / np.abs(b)))
    tol = {"jacobian": 1e-5, "g_bilinear": 1e-10, "g_transpose": 1e-10, "balance": 1e-10, "scale": 1e-10}
    errs = [f"{k}={worst[k]:.2e}" for k in worst if worst[k] > tol[k]]

    pairs, min_margin = 0, np.inf
    while pairs < 1000:
        n = int(rng.integers(1, 4))
        core = random_core(rng, n)
        # feasible demands: at a stable point, or scaled into the interior of a feasible ray
        lam0 = chi_normalized(core, rng.dirichlet(np.ones(n)))
        P = injected_power(core, point_in_D(core, lam0, rng.exponential(0.5)))
        if rng.random() < 0.5:
            Q = rng.uniform(-1, 1, n) * core.P_max * 3
            r = solve_desired(core, Q)
            if r.verdict is not Verdict.INFEASIBLE:
                P = Q
        for _ in range(10):
            lam = rng.dirichlet(np.ones(n))
            if not in_Lambda(core, lam):
                continue
            min_margin = min(min_margin, halfspace_margin(core, lam, P).margin)
            pairs += 1
    if min_margin < -1e-8:
        errs.append(f"halfspace margin {min_margin:.2e}")
    _report(capsys, 8, not errs,
            "; ".join(errs) or "worst " + ", ".join(f"{k}={v:.1e}" for k, v in worst.items())
            + f"; min halfspace margin over {pairs} pairs {min_margin:.2e}")
