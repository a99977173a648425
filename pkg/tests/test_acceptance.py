"""Acceptance suite: one PASS/FAIL line per criterion, printed in the terminal summary.

Run alone with ``pytest tests/test_acceptance.py -v``.  Criteria that the
numerics cannot meet fail here rather than being loosened.
"""
import math
from pathlib import Path

import numpy as np
import pytest

from blowuplab.cli import main
from blowuplab.energy import (blowup_time_bound, classify_collapse, derived_constants, dissipation_audit,
                              energy, envelope_check, spacetime_integrals)
from blowuplab.integrator import ModelParams, SolverConfig, estimate_omega, kappa, run
from blowuplab.mesh import DomainSpec, build_grid
from blowuplab.rate import classify_type, rate_curve
from blowuplab.regularity import (covering_dimension, cylinder_density, cylinder_radius_factor, default_r_list,
                                  extract_singular_set, flat_densities)
from blowuplab.scenarios import CATALOGUE, TIERS, DatumSpec, bisect_borderline
from blowuplab.selfsim import blowup_center, flat_local_energy, local_energy_series, rescale, resolved_s_range

from conftest import _scenario_run

pytestmark = pytest.mark.acceptance

NEGATIVE_ENERGY_DATA = [
    (2.0, DatumSpec("eigenfunction", {"amplitude": 25.0})),
    (2.0, DatumSpec("eigenfunction", {"amplitude": 40.0})),
    (2.0, DatumSpec("gaussian_bump", {"amplitude": 60.0, "width": 0.2, "center": 0.5})),
    (3.0, DatumSpec("eigenfunction", {"amplitude": 6.0})),
    (3.0, DatumSpec("eigenfunction", {"amplitude": 10.0})),
    (3.0, DatumSpec("gaussian_bump", {"amplitude": 10.0, "width": 0.2, "center": 0.5})),
    (3.0, DatumSpec("gaussian_bump", {"amplitude": 25.0, "width": 0.1, "center": 0.3})),
    (5.0, DatumSpec("eigenfunction", {"amplitude": 3.0})),
    (5.0, DatumSpec("gaussian_bump", {"amplitude": 4.0, "width": 0.2, "center": 0.5})),
    (5.0, DatumSpec("gaussian_bump", {"amplitude": 6.0, "width": 0.1, "center": 0.6})),
]


@pytest.fixture(scope="module")
def bump_tiers(bump):
    return {"coarse": _scenario_run("subcritical_collapse", "coarse"), "reference": bump,
            "fine": _scenario_run("subcritical_collapse", "fine")}


@pytest.fixture(scope="module")
def negative_runs():
    g = build_grid(DomainSpec("interval"), TIERS["reference"].M)
    cfg = SolverConfig(rk_tolerance=TIERS["reference"].rk_tolerance)
    out = []
    for p, d in NEGATIVE_ENERGY_DATA:
        u0 = d.build(g)
        tr = run(u0, cfg, ModelParams(p, g))
        out.append((p, d, energy(g, u0, p), tr, estimate_omega(tr)))
    return out


def test_c01_ode_blowup_time(acceptance):
    g = build_grid(DomainSpec("interval"), TIERS["reference"].M)
    errs = []
    for A in (1.0, 2.0):
        for p in (2.0, 3.0, 5.0):
            tr = run(np.full(g.M, A), SolverConfig(rk_tolerance=1e-8), ModelParams(p, g, diffusion_on=False))
            exact = A ** (1.0 - p) / (p - 1.0)
            errs.append(abs(estimate_omega(tr).omega / exact - 1.0))
    ok = max(errs) < 1e-2
    acceptance(1, ok, f"max relative blowup-time error {max(errs):.2e} over 6 (A, p) pairs (< 1e-2)")
    assert ok


def test_c02_energy_identity(acceptance, bump_tiers):
    ref = dissipation_audit(bump_tiers["reference"], umax_limit=1e6)
    fine = dissipation_audit(bump_tiers["fine"], umax_limit=1e6)
    led = bump_tiers["reference"].ledger
    E_peak = float(np.abs(led.E[: ref.n_entries]).max())
    shrink = ref.max_defect / fine.max_defect
    small = ref.relative <= 1e-2
    ok = small and shrink >= 3.0
    acceptance(2, ok, f"defect/(1+|E0|) = {ref.relative:.3g} (<= 1e-2: {small}); |E| reaches {E_peak:.3g}, "
                      f"float spacing there {np.spacing(E_peak):.3g}; fine-tier shrink {shrink:.1f}x (>= 3: "
                      f"{shrink >= 3.0})")
    assert shrink >= 3.0
    assert small


def test_c03_blowup_time_bound(acceptance, negative_runs):
    violations, worst = 0, 0.0
    for p, d, E0, tr, est in negative_runs:
        assert E0 < 0.0, d
        consts = derived_constants(p, tr.grid)
        stop = tr.resolved_stop()
        led = tr.ledger
        for k in np.flatnonzero(led.E[:stop] < 0.0):
            bound = blowup_time_bound(float(led.E[k]), float(led.t[k]), consts)
            worst = max(worst, est.omega / bound)
            violations += int(est.omega > bound)
    ok = violations == 0
    acceptance(3, ok, f"{len(negative_runs)} negative-energy data, p in {{2,3,5}}: {violations} violations, "
                      f"max omega/bound {worst:.3f}")
    assert ok


def test_c04_energy_envelope(acceptance, negative_runs, bump, bump_omega):
    runs = [(tr, est) for *_, tr, est in negative_runs] + [(bump, bump_omega)]
    checked, violations, n_runs = 0, 0, 0
    for tr, est in runs:
        if classify_collapse(tr, est).verdict != "collapsing":
            continue
        n_runs += 1
        env = envelope_check(tr, est, derived_constants(tr.p, tr.grid))
        checked += env["n_checked"]
        violations += env["n_violations"]
    ok = violations == 0 and n_runs > 0
    acceptance(4, ok, f"{n_runs} collapsing runs, {checked} ledger times checked, {violations} violations")
    assert ok


def test_c05_type_one_plateau(acceptance, bump, bump_omega):
    rep = classify_type(rate_curve(bump, bump_omega))
    ok = rep.type_class == "TypeI" and rep.plateau_error <= 0.05
    acceptance(5, ok, f"{rep.type_class}, plateau {rep.plateau:.5f} vs kappa {kappa(3.0):.5f} "
                      f"(error {rep.plateau_error:.2%}, <= 5%)")
    assert ok


def test_c06_local_energy_monotone(acceptance, bump, bump_omega):
    lo, hi = resolved_s_range(bump, bump_omega)
    s = np.arange(math.ceil(lo * 10.0) / 10.0, hi, 0.1)
    a = blowup_center(bump)
    ser = local_energy_series(bump, a, bump_omega, s)
    frac = rescale(bump, a, bump_omega, float(s[-1])).masked_fraction
    target = flat_local_energy(3.0, 1) * frac
    err = abs(ser.E[-1] / target - 1.0)
    ok = ser.monotone and err <= 0.1
    acceptance(6, ok, f"max positive jump {ser.max_positive_jump:.2e} (tol {ser.audit_tol:.2e}) over "
                      f"{len(s)} s-values; limit {ser.E[-1]:.5f} vs {target:.5f} ({err:.2%}, <= 10%)")
    assert ok


def test_c07_collapse_dichotomy(acceptance, bump, bump_omega, supercritical):
    v_sub = classify_collapse(bump, bump_omega)
    v_sup = classify_collapse(supercritical, estimate_omega(supercritical))
    sub_ok = v_sub.verdict == "collapsing"
    sup_ok = v_sup.verdict == "non_collapsing" and v_sup.tail_fraction < 1e-2
    acceptance(7, sub_ok and sup_ok,
               f"subcritical bump: {v_sub.verdict} ({'ok' if sub_ok else 'wrong'}); supercritical ball: "
               f"{v_sup.verdict}, dissipation tail {v_sup.tail_fraction:.3g} over the last resolved decade "
               f"(< 1e-2: {v_sup.tail_fraction < 1e-2}), E at end of window {v_sup.B_est:.4g}")
    assert sub_ok
    assert sup_ok


def test_c08_spacetime_integrals(acceptance, supercritical, bump_tiers):
    est = estimate_omega(supercritical)
    stop = supercritical.resolved_stop()
    ints = spacetime_integrals(supercritical, supercritical.time_to_blowup(est.tail), stop)
    tails = {q: ints[q]["tail_fraction"] for q in ("q1", "q2")}
    conv = all(t < 0.05 for t in tails.values())
    q2 = []
    for tier in ("coarse", "reference", "fine"):
        tr = bump_tiers[tier]
        e = estimate_omega(tr)
        q2.append(spacetime_integrals(tr, tr.time_to_blowup(e.tail), tr.resolved_stop(), qs=(2,))["q2"]["total"])
    grows = q2[0] < q2[1] < q2[2] and q2[2] > 10.0 * q2[0]
    ok = conv and grows
    acceptance(8, ok, f"supercritical tails q1 {tails['q1']:.2%}, q2 {tails['q2']:.2%} (< 5%); collapsing "
                      f"q2 by tier {q2[0]:.3g} < {q2[1]:.3g} < {q2[2]:.3g}")
    assert ok


def test_c09_singular_set_geometry(acceptance, supercritical, annulus):
    sm_b = extract_singular_set(supercritical, estimate_omega(supercritical))
    d_b = covering_dimension(sm_b)
    sm_a = extract_singular_set(annulus, estimate_omega(annulus))
    d_a = covering_dimension(sm_a)
    bb, ba = sm_b.bands(), sm_a.bands()
    ball_ok = len(bb) == 1 and bb[0][0] == 0.0 and abs(d_b.slope) <= 0.2
    ann_ok = len(ba) == 1 and ba[0][0] > annulus.grid.spec.R0 and abs(d_a.slope - 2.0) <= 0.2
    contra = d_a.slope > d_a.bound
    ok = ball_ok and ann_ok and contra
    acceptance(9, ok, f"ball S = r in [{bb[0][0]:.3f}, {bb[0][1]:.3f}], slope {d_b.slope:.3f}; annulus S = "
                      f"r in [{ba[0][0]:.3f}, {ba[0][1]:.3f}] ({len(ba)} band), slope {d_a.slope:.3f}; "
                      f"non-collapse bound N-2-4/(p-1) = {d_a.bound:.3f} < {d_a.slope:.3f}")
    assert ok


def test_c10_flat_cylinder_density(acceptance, flat):
    est = estimate_omega(flat)
    r_list = [r for r in default_r_list(flat, est, n_scales=8)
              if cylinder_radius_factor(1) * r >= 1.5 * flat.grid.h]
    vals = np.array([cylinder_density(flat, 0.5, r, est)[0] for r in r_list])
    spread = float(np.ptp(vals) / vals.mean())
    exact = flat_densities(3.0, 1)["L32"]
    ok = len(vals) >= 3 and spread <= 1e-2
    acceptance(10, ok, f"{len(vals)} radii {r_list[0]:.3g}..{r_list[-1]:.3g}: spread {spread:.2e} (<= 1e-2); "
                       f"mean {vals.mean():.6f}, closed form {exact:.6f}")
    assert ok


def test_c11_borderline_bisection(acceptance):
    d = DatumSpec("eigenfunction")
    out = {}
    for tier, bracket in (("coarse", (1.0, 100.0)), ("reference", None)):
        t = TIERS[tier]
        g = build_grid(DomainSpec("interval"), t.M)
        if bracket is None:
            c = out["coarse"]
            bracket = (c.lambda_lo * 0.99, c.lambda_hi * 1.01)
        out[tier] = bisect_borderline(d, ModelParams(3.0, g), SolverConfig(rk_tolerance=t.rk_tolerance),
                                      bracket, tol=1e-3, classify=False)
    c, r = out["coarse"], out["reference"]
    stable = c.lambda_lo <= r.lambda_star <= c.lambda_hi and r.lambda_lo <= c.lambda_star <= r.lambda_hi
    ok = r.relative_width <= 1e-3 and c.relative_width <= 1e-3 and c.monotone() and r.monotone() and stable
    acceptance(11, ok, f"coarse [{c.lambda_lo:.6f}, {c.lambda_hi:.6f}] ({len(c.iterates)} runs), reference "
                       f"[{r.lambda_lo:.6f}, {r.lambda_hi:.6f}] width {r.relative_width:.1e}; monotone "
                       f"{c.monotone() and r.monotone()}; lambda* stable {stable}")
    assert ok


def _artifacts(d: Path) -> dict:
    return {p.relative_to(d).as_posix(): p.read_bytes() for p in sorted(d.rglob("*"))
            if p.suffix in (".csv", ".json")}


def test_c12_determinism(acceptance, tmp_path):
    cfg = tmp_path / "bisect.yaml"
    cfg.write_text("datum: {profile: eigenfunction}\nbisect: {lambda_lo: 3.0, lambda_hi: 4.0, tol: 0.01}\n")
    jobs = [["scenario", "subcritical_collapse"], ["scenario", "annulus_sphere"], ["run", "--tier", "coarse"],
            ["bisect", "--config", str(cfg), "--tier", "coarse"]]
    n_files, diffs = 0, []
    for j, job in enumerate(jobs):
        a, b = tmp_path / f"a{j}", tmp_path / f"b{j}"
        assert main(job + ["--out", str(a)]) == 0
        assert main(job + ["--out", str(b)]) == 0
        fa, fb = _artifacts(a), _artifacts(b)
        n_files += len(fa)
        diffs += [f"{job[0]}:{k}" for k in fa if fa[k] != fb.get(k)]
        diffs += [f"{job[0]}:{k}" for k in fb if k not in fa]
    ok = not diffs and n_files > 0
    acceptance(12, ok, f"{n_files} CSV/JSON artifacts from {len(jobs)} commands, reruns byte-identical: "
                       f"{'yes' if ok else diffs}")
    assert ok
