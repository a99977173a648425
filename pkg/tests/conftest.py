import numpy as np
import pytest

from blowuplab.integrator import ModelParams, SolverConfig, estimate_omega, run
from blowuplab.mesh import DomainSpec, build_grid
from blowuplab.scenarios import CATALOGUE


def _scenario_run(name, tier="reference"):
    spec = CATALOGUE[name]
    params = spec.model(tier)
    return run(spec.datum.build(params.grid), spec.solver_config(tier), params)


@pytest.fixture(scope="session")
def interval401():
    return build_grid(DomainSpec("interval"), 401)


@pytest.fixture(scope="session")
def bump():
    """Subcritical Gaussian bump, p=3 on [0,1], reference tier."""
    return _scenario_run("subcritical_collapse")


@pytest.fixture(scope="session")
def bump_omega(bump):
    return estimate_omega(bump)


@pytest.fixture(scope="session")
def flat():
    """Reaction-only constant datum u0=1, p=3: u = (1 - 2t)^(-1/2)."""
    g = build_grid(DomainSpec("interval"), 401)
    return run(np.ones(g.M), SolverConfig(), ModelParams(3.0, g, diffusion_on=False))


@pytest.fixture(scope="session")
def supercritical():
    return _scenario_run("supercritical_radial")


@pytest.fixture(scope="session")
def annulus():
    return _scenario_run("annulus_sphere")


@pytest.fixture(scope="session")
def decaying():
    """Small eigenfunction datum, p=3: decays to zero."""
    g = build_grid(DomainSpec("interval"), 201)
    return run(0.5 * np.array(g.principal_mode), SolverConfig(rk_tolerance=1e-7), ModelParams(3.0, g))


# ------------------------------------------------------------ acceptance log

_ACCEPTANCE = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = {}


@pytest.fixture(scope="session")
def acceptance(request):
    """Record one PASS/FAIL line per criterion; printed in the terminal summary."""
    log = request.config.stash[_ACCEPTANCE]

    def record(n: int, ok: bool, detail: str):
        log[n] = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(log[n])
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    log = config.stash.get(_ACCEPTANCE, {})
    if log:
        terminalreporter.section("acceptance criteria")
        for n in sorted(log):
            terminalreporter.write_line(log[n])
