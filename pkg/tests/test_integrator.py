import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from blowuplab.integrator import (LEDGER_FIELDS, ModelParams, SolverConfig, StopReason, estimate_omega,
                                  joseph_lundgren_exponent, kappa, load_trajectory, run, save_trajectory,
                                  sobolev_exponent, step)
from blowuplab.mesh import DomainSpec, build_grid


def test_exponents_and_kappa():
    assert sobolev_exponent(3) == 5.0
    assert math.isinf(sobolev_exponent(2))
    assert math.isinf(joseph_lundgren_exponent(10))
    assert joseph_lundgren_exponent(11) == pytest.approx(1 + 4 / (7 - 2 * math.sqrt(10)))
    assert kappa(3.0) == pytest.approx(2 ** -0.5)
    with pytest.raises(ValueError):
        kappa(1.0)


def test_regime(interval401):
    ball = build_grid(DomainSpec("radial_ball", N=3), 41)
    assert ModelParams(5.0, ball).regime == "critical"
    assert ModelParams(7.0, ball).regime == "supercritical"
    assert ModelParams(3.0, interval401).regime == "subcritical"
    with pytest.raises(ValueError):
        ModelParams(1.0, interval401)


@pytest.mark.parametrize("kw", [dict(cfl_safety=0), dict(U_max=10.0), dict(t_max=-1.0), dict(snapshot_ds=1.0),
                                dict(decay_factor=1.0), dict(snapshot_stride=0), dict(rk_tolerance=0.0)])
def test_solver_config_validation(kw):
    with pytest.raises(ValueError):
        SolverConfig(**kw)


def test_initial_datum_checks(interval401):
    prm = ModelParams(3.0, interval401)
    with pytest.raises(ValueError):
        run(np.ones(interval401.M), SolverConfig(), prm)  # nonzero boundary values
    with pytest.raises(ValueError):
        run(np.zeros(5), SolverConfig(), prm)
    u = np.zeros(interval401.M)
    u[3] = np.nan
    with pytest.raises(ValueError):
        run(u, SolverConfig(), prm)


def test_zero_datum_is_global(interval401):
    tr = run(np.zeros(interval401.M), SolverConfig(), ModelParams(3.0, interval401))
    assert tr.stop is StopReason.DECAYED
    assert len(tr.ledger) == 1


@given(A=st.floats(0.5, 3.0), p=st.sampled_from([2.0, 3.0, 5.0]))
@settings(max_examples=15, deadline=None)
def test_ode_blowup_time_property(A, p):
    g = build_grid(DomainSpec("interval"), 11)
    tr = run(np.full(g.M, A), SolverConfig(), ModelParams(p, g, diffusion_on=False))
    assert tr.stop is StopReason.BLOWUP
    exact = A ** (1 - p) / (p - 1)
    assert estimate_omega(tr).omega == pytest.approx(exact, rel=1e-6)


def test_flat_solution_pointwise(flat):
    led = flat.ledger
    exact = (1.0 - 2.0 * led.t[:50]) ** -0.5
    assert np.allclose(led.umax[:50], exact, rtol=1e-6)


def test_ledger_monotone_time_and_dissipation(bump):
    led = bump.ledger
    assert np.all(np.diff(led.t) > 0)
    assert np.all(led.dD >= 0)
    assert set(LEDGER_FIELDS) == set(led.as_dict())
    assert bump.snap_index[0] == 0 and bump.snap_index[-1] == len(led) - 1


def test_time_to_end_matches_differences(bump):
    rem = bump.time_to_end()
    assert rem[-1] == 0.0
    assert rem[0] == pytest.approx(bump.ledger.t[-1], rel=1e-12)


def test_estimate_omega_requires_blowup(decaying):
    with pytest.raises(ValueError):
        estimate_omega(decaying)


def test_omega_estimate_bump(bump_omega, bump):
    assert bump_omega.method == "fit"
    assert bump_omega.omega > bump.ledger.t[-1] - bump_omega.uncertainty
    assert 0 < bump_omega.uncertainty < 1e-4 * bump_omega.omega * 10


def test_step_underflow_raises(interval401):
    prm = ModelParams(3.0, interval401, diffusion_on=False)
    with pytest.raises(FloatingPointError):
        step(np.full(interval401.M, 1e60), 0.0, SolverConfig(dt_min=1e-30, rk_tolerance=1e-14), prm, dt=1e-3)


def test_step_advances(interval401):
    prm = ModelParams(3.0, interval401, diffusion_on=False)
    u, dt, ut = step(np.ones(interval401.M), 0.0, SolverConfig(), prm, dt=1e-3)
    assert u[0] == pytest.approx((1 - 2 * dt) ** -0.5, rel=1e-9)
    assert np.allclose(ut, 1.0)


def test_snapshot_times_are_hit(interval401):
    prm = ModelParams(3.0, interval401, diffusion_on=False)
    targets = [0.1, 0.25, 0.4]
    tr = run(np.ones(interval401.M), SolverConfig(), prm, snapshot_times=targets)
    st = tr.snapshot_times
    for t in targets:
        assert np.min(np.abs(st - t)) < 1e-12


def test_resume_continues_without_gap(interval401, tmp_path):
    x = interval401.nodes
    u0 = 10 * np.exp(-((x - 0.5) / 0.2) ** 2)
    u0 -= u0[0]
    prm = ModelParams(3.0, interval401)
    full = run(u0, SolverConfig(), prm)
    part = run(u0, SolverConfig(t_max=0.004), prm)
    assert part.stop is StopReason.HORIZON
    save_trajectory(tmp_path / "c.npz", part)
    back = load_trajectory(tmp_path / "c.npz")
    assert np.array_equal(back.ledger.t, part.ledger.t)
    assert back.params.grid.M == interval401.M
    cont = run(None, SolverConfig(), back.params, resume=back)
    assert np.array_equal(cont.ledger.t[: len(part.ledger)], part.ledger.t)
    assert np.all(np.diff(cont.ledger.t) > 0)
    assert cont.stop is StopReason.BLOWUP
    assert len(cont.ledger) == len(full.ledger)
    assert cont.ledger.t[-1] == pytest.approx(full.ledger.t[-1], rel=1e-12)


def test_checkpoint_rejects_unknown_schema(tmp_path, flat):
    import json

    path = save_trajectory(tmp_path / "c.npz", flat)
    with np.load(path) as z:
        data = dict(z)
    meta = json.loads(str(data["meta"]))
    meta["schema"] = 99
    data["meta"] = np.array(json.dumps(meta))
    np.savez(tmp_path / "bad.npz", **data)
    with pytest.raises(ValueError):
        load_trajectory(tmp_path / "bad.npz")


def test_horizon_without_decay(interval401):
    # reaction-free, diffusion on: decays but horizon is short
    prm = ModelParams(3.0, interval401, reaction_on=False)
    tr = run(np.array(interval401.principal_mode), SolverConfig(t_max=0.01), prm)
    assert tr.stop is StopReason.HORIZON
    assert tr.ledger.umax[-1] == pytest.approx(math.exp(-interval401.lambda1 * 0.01), rel=1e-6)
