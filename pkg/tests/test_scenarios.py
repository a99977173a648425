import numpy as np
import pytest

from blowuplab.exceptions import BracketError, BudgetExhausted, ConfigError
from blowuplab.integrator import ModelParams, SolverConfig, StopReason
from blowuplab.mesh import DomainSpec, build_grid
from blowuplab.scenarios import (CATALOGUE, PROFILES, TIERS, BlowupSimulator, CollapseClassifier, DatumSpec,
                                 ScenarioSpec, analyze, bisect_borderline, classify_global_vs_blowup,
                                 run_scenario)


@pytest.fixture(scope="module")
def coarse():
    return build_grid(DomainSpec("interval"), 101)


def test_profiles_vanish_on_the_boundary():
    grids = {"interval": build_grid(DomainSpec("interval"), 101),
             "ball": build_grid(DomainSpec("radial_ball", N=3), 101),
             "annulus": build_grid(DomainSpec("radial_annulus", N=3, R0=0.5), 101)}
    cases = [("gaussian_bump", "interval", {}), ("eigenfunction", "interval", {}),
             ("radial_decreasing", "ball", {}), ("radial_decreasing", "ball", {"profile": "gaussian"}),
             ("annulus_ring", "annulus", {}), ("eigenfunction", "ball", {})]
    for name, gk, args in cases:
        g = grids[gk]
        u = DatumSpec(name, args).build(g)
        assert np.all(u[g.dirichlet] == 0.0), name
        assert np.all(np.isfinite(u))


def test_radial_profiles_are_nonincreasing():
    g = build_grid(DomainSpec("radial_ball", N=3), 101)
    for args in ({}, {"profile": "gaussian"}):
        u = DatumSpec("radial_decreasing", args).build(g)
        assert np.all(np.diff(u) <= 1e-15)


def test_profile_errors():
    with pytest.raises(ConfigError):
        DatumSpec("nope")
    g = build_grid(DomainSpec("interval"), 11)
    with pytest.raises(ConfigError):
        DatumSpec("radial_decreasing").build(g)
    with pytest.raises(ConfigError):
        DatumSpec("gaussian_bump", {"bogus": 1}).build(g)
    with pytest.raises(ConfigError):
        DatumSpec("gaussian_bump", {"width": -1}).build(g)


def test_amplitude_defaults_and_override():
    assert DatumSpec("radial_decreasing").amplitude == 1.6
    assert DatumSpec("gaussian_bump").with_amplitude(3.0).amplitude == 3.0
    assert set(PROFILES) >= {"gaussian_bump", "eigenfunction", "constant"}


def test_spec_roundtrip_and_validation():
    for spec in CATALOGUE.values():
        assert ScenarioSpec.from_dict(spec.to_dict()) == spec
    with pytest.raises(ConfigError):
        ScenarioSpec("x", 1.0, DomainSpec("interval"), DatumSpec("constant"))
    with pytest.raises(ConfigError):
        ScenarioSpec("x", 3.0, DomainSpec("interval"), DatumSpec("constant"), expected={"bogus": 1})
    with pytest.raises(ConfigError):
        CATALOGUE["flat_ode"].grid("huge")
    assert CATALOGUE["flat_ode"].grid("coarse").M == TIERS["coarse"].M


def test_classify_global_vs_blowup(coarse, decaying):
    prm = ModelParams(3.0, coarse)
    phi = np.array(coarse.principal_mode)
    assert classify_global_vs_blowup(decaying) == "global"
    assert classify_global_vs_blowup(run_small(10 * phi, prm)) == "blowup"
    short = run_small(3.0 * phi, prm, SolverConfig(t_max=1e-3))
    assert short.stop is StopReason.HORIZON
    assert classify_global_vs_blowup(short) == "unresolved"


def run_small(u0, prm, cfg=None):
    from blowuplab.integrator import run

    return run(u0, cfg or SolverConfig(rk_tolerance=1e-6), prm)


def test_bisection_bad_bracket(coarse):
    prm, cfg = ModelParams(3.0, coarse), SolverConfig(rk_tolerance=1e-6)
    with pytest.raises(BracketError):
        bisect_borderline(DatumSpec("eigenfunction"), prm, cfg, (2.0, 1.0))
    with pytest.raises(BracketError):
        bisect_borderline(DatumSpec("eigenfunction"), prm, cfg, (1.0, 2.0), max_expansions=0)


def test_bisection_expands_and_converges(coarse):
    prm, cfg = ModelParams(3.0, coarse), SolverConfig(rk_tolerance=1e-6)
    rep = bisect_borderline(DatumSpec("eigenfunction"), prm, cfg, (1.0, 2.0), tol=1e-2, classify=False)
    assert rep.converged and rep.monotone()
    assert rep.relative_width <= 1e-2
    assert 3.4 < rep.lambda_star < 3.7
    lams = [it[0] for it in rep.iterates[:4]]
    assert 4.0 in lams


def test_bisection_budget(coarse):
    prm, cfg = ModelParams(3.0, coarse), SolverConfig(rk_tolerance=1e-6)
    with pytest.raises(BudgetExhausted) as ei:
        bisect_borderline(DatumSpec("eigenfunction"), prm, cfg, (1.0, 100.0), budget=3)
    assert ei.value.exit_code == 5
    assert len(ei.value.details["iterates"]) == 3


def test_subcritical_scenario_matches(bump):
    rep = run_scenario(CATALOGUE["subcritical_collapse"], "coarse")
    assert rep.ok, rep.mismatches
    assert rep.observed["type"] == "TypeI"
    assert rep.summary()["rationale"]


def test_flat_scenario_has_no_collapse_verdict():
    rep = run_scenario(CATALOGUE["flat_ode"], "reference")
    assert rep.ok
    assert "collapse" in rep.blowup.notes


def test_mismatch_is_reported():
    spec = ScenarioSpec.from_dict({**CATALOGUE["flat_ode"].to_dict(), "expected": {"type": "TypeII"}})
    rep = run_scenario(spec, "reference")
    assert not rep.ok
    assert rep.mismatches == [{"key": "type", "expected": "TypeII", "observed": "TypeI"}]


def test_short_rate_window_becomes_a_note():
    # the coarse flat run has fewer than 20 entries in its final decade
    rep = run_scenario(CATALOGUE["flat_ode"], "coarse")
    assert "rate" in rep.blowup.notes
    assert rep.mismatches == [{"key": "type", "expected": "TypeI", "observed": None}]


def test_analyze_decayed(decaying):
    rep = analyze(decaying)
    assert rep.omega is None and "omega" in rep.notes


def test_estimators(coarse, bump):
    sim = BlowupSimulator(M=101, rk_tolerance=1e-6)
    phi = np.array(coarse.principal_mode)
    sim.fit(10 * phi)
    assert sim.report_.rate.type_class == "TypeI"
    assert list(sim.predict([0.5 * phi, 10 * phi])) == ["global", "blowup"]
    clf = CollapseClassifier().fit([bump])
    assert clf.predict([bump])[0] == "collapsing"
