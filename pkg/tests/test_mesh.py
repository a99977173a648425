import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from blowuplab.mesh import (DomainSpec, ball_weights, build_grid, grad_sq_integral, gradient, integrate,
                            laplacian, sphere_area)


@pytest.mark.parametrize("kw", [
    dict(kind="torus"),
    dict(kind="interval", N=2),
    dict(kind="interval", R=0.0, R0=1.0),
    dict(kind="radial_annulus", N=3, R0=0.0),
    dict(kind="radial_ball", N=3, R0=0.1),
    dict(kind="radial_ball", N=0),
])
def test_domain_spec_rejects_inconsistent_geometry(kw):
    with pytest.raises(ValueError):
        DomainSpec(**kw)


def test_build_grid_rejects_small_m():
    with pytest.raises(ValueError):
        build_grid(DomainSpec("interval"), 7)


@pytest.mark.parametrize("spec", [
    DomainSpec("interval", R=2.0, R0=-1.0),
    DomainSpec("radial_ball", N=3, R=1.0),
    DomainSpec("radial_ball", N=2, R=2.0),
    DomainSpec("radial_annulus", N=3, R=1.0, R0=0.5),
])
def test_quadrature_of_one_is_volume(spec):
    g = build_grid(spec, 101)
    assert integrate(g, np.ones(g.M)) == pytest.approx(spec.volume, rel=1e-12)


def test_dirichlet_nodes():
    assert build_grid(DomainSpec("interval"), 11).dirichlet.tolist() == [True] + [False] * 9 + [True]
    ball = build_grid(DomainSpec("radial_ball", N=3), 11)
    assert ball.dirichlet[-1] and not ball.dirichlet[0]
    ann = build_grid(DomainSpec("radial_annulus", N=3, R0=0.5), 11)
    assert ann.dirichlet[0] and ann.dirichlet[-1]


def test_sphere_area():
    assert sphere_area(1) == 2.0
    assert sphere_area(2) == pytest.approx(2 * math.pi)
    assert sphere_area(3) == pytest.approx(4 * math.pi)


@given(seed=st.integers(0, 10_000), kind=st.sampled_from(["interval", "radial_ball", "radial_annulus"]))
@settings(max_examples=30, deadline=None)
def test_discrete_green_identity(seed, kind):
    spec = {"interval": DomainSpec("interval"), "radial_ball": DomainSpec("radial_ball", N=3),
            "radial_annulus": DomainSpec("radial_annulus", N=2, R0=0.3)}[kind]
    g = build_grid(spec, 41)
    rng = np.random.default_rng(seed)
    f, h = rng.normal(size=(2, g.M))
    f[g.dirichlet] = 0.0
    h[g.dirichlet] = 0.0
    lhs = -np.sum(g.quad_weights * f * laplacian(g, h))
    rhs = np.sum(g.face_area * np.diff(f) * np.diff(h) / g.h)
    assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-10)
    assert grad_sq_integral(g, f) == pytest.approx(np.sum(g.face_area * np.diff(f) ** 2 / g.h), rel=1e-12)


@pytest.mark.parametrize("spec,exact,lam", [
    (DomainSpec("interval"), lambda x: np.sin(np.pi * x), math.pi ** 2),
    (DomainSpec("radial_ball", N=3), lambda r: np.sinc(r), math.pi ** 2),
])
def test_laplacian_second_order(spec, exact, lam):
    errs = []
    for M in (51, 101, 201):
        g = build_grid(spec, M)
        u = exact(g.nodes)
        err = (laplacian(g, u) + lam * u)[~g.dirichlet]
        errs.append(np.abs(err).max())
    assert errs[0] / errs[1] > 3.5 and errs[1] / errs[2] > 3.5


def test_principal_mode_and_lambda1():
    g = build_grid(DomainSpec("interval"), 201)
    assert np.abs(g.principal_mode - np.sin(np.pi * g.nodes)).max() < 1e-10
    assert g.lambda1 == pytest.approx(math.pi ** 2, rel=1e-4)
    b = build_grid(DomainSpec("radial_ball", N=3), 201)
    assert np.abs(b.principal_mode - np.sinc(b.nodes)).max() < 1e-5


def test_gradient_of_linear_function():
    g = build_grid(DomainSpec("interval"), 21)
    assert np.allclose(gradient(g, 3.0 * g.nodes), 3.0)


def test_ball_weights_interval_exact():
    g = build_grid(DomainSpec("interval"), 101)
    w = ball_weights(g, 0.5, 0.123)
    assert w.sum() == pytest.approx(0.246, rel=1e-12)
    w = ball_weights(g, 0.0, 0.2)  # clipped at the boundary
    assert w.sum() == pytest.approx(0.2, rel=1e-12)


def test_ball_weights_radial():
    g = build_grid(DomainSpec("radial_ball", N=3), 201)
    rho = 0.3141
    assert ball_weights(g, 0.0, rho).sum() == pytest.approx(4 / 3 * math.pi * rho ** 3, rel=1e-12)
    # off-centre ball inside the domain: volume to quadrature accuracy
    assert ball_weights(g, 0.5, 0.2).sum() == pytest.approx(4 / 3 * math.pi * 0.2 ** 3, rel=1e-2)
