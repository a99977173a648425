"""Initial-datum families, the scenario catalogue, end-to-end reports and borderline bisection."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
import logging
import math

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .energy import (CollapseConfig, CollapseVerdict, classify_collapse, derived_constants,
                     envelope_check)
from .exceptions import BracketError, BudgetExhausted, ConfigError
from .integrator import (ModelParams, OmegaEstimate, SolverConfig, StopReason, Trajectory,
                         estimate_omega, run)
from .mesh import DomainSpec, Grid, build_grid
from .rate import RateConfig, RateReport, classify_type, rate_curve
from .regularity import (DimensionReport, RegularityConfig, SingularSetMap, covering_dimension,
                         extract_singular_set)

__all__ = [
    "Tier",
    "TIERS",
    "PROFILES",
    "DatumSpec",
    "ScenarioSpec",
    "CATALOGUE",
    "UNREACHABLE",
    "BlowupReport",
    "ScenarioReport",
    "analyze",
    "run_scenario",
    "classify_global_vs_blowup",
    "BisectionReport",
    "bisect_borderline",
    "BlowupSimulator",
    "CollapseClassifier",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Tier:
    M: int
    rk_tolerance: float


TIERS = {
    "coarse": Tier(201, 1e-7),
    "reference": Tier(401, 1e-8),
    "fine": Tier(801, 1e-9),
}


# ---------------------------------------------------------------- profiles

def _pin(grid: Grid, u: np.ndarray) -> np.ndarray:
    """Subtract the affine function matching ``u`` on the Dirichlet nodes."""
    x = grid.nodes
    if grid.dirichlet[0]:
        a, b = u[0], u[-1]
        u = u - (a + (b - a) * (x - x[0]) / (x[-1] - x[0]))
    else:
        u = u - u[-1]
    u[grid.dirichlet] = 0.0
    return u


def gaussian_bump(grid: Grid, amplitude: float = 10.0, width: float = 0.2, center: float | None = None):
    """``A exp(-((x - c)/w)^2)`` pinned to zero boundary values."""
    if not width > 0.0:
        raise ConfigError("width must be positive")
    c = 0.5 * (grid.spec.R0 + grid.spec.R) if center is None else center
    return _pin(grid, amplitude * np.exp(-((grid.nodes - c) / width) ** 2))


def radial_decreasing(grid: Grid, amplitude: float = 1.6, profile: str = "cosine", width: float = 0.3):
    """Radially nonincreasing datum on a ball: ``cosine`` is ``A cos(pi r / 2R)``, ``gaussian`` is pinned."""
    if grid.spec.kind != "radial_ball":
        raise ConfigError("radial_decreasing needs a radial_ball domain")
    r = grid.nodes / grid.spec.R
    if profile == "cosine":
        u = amplitude * np.cos(0.5 * math.pi * r)
        u[-1] = 0.0
        return u
    if profile == "gaussian":
        return _pin(grid, amplitude * np.exp(-(r / width) ** 2))
    raise ConfigError(f"unknown radial profile {profile!r}; expected 'cosine' or 'gaussian'")


def annulus_ring(grid: Grid, amplitude: float = 2.5, ring_center: float | None = None, width: float = 0.1):
    """Gaussian ring ``A exp(-((r - r*)/w)^2)`` pinned to zero on both spheres."""
    if not grid.radial:
        raise ConfigError("annulus_ring needs a radial domain")
    if not width > 0.0:
        raise ConfigError("width must be positive")
    c = 0.5 * (grid.spec.R0 + grid.spec.R) if ring_center is None else ring_center
    return _pin(grid, amplitude * np.exp(-((grid.nodes - c) / width) ** 2))


def eigenfunction(grid: Grid, amplitude: float = 1.0):
    """``A`` times the principal Dirichlet mode (max 1) of the discrete Laplacian."""
    return amplitude * np.array(grid.principal_mode)


def constant(grid: Grid, amplitude: float = 1.0):
    """``u0 = A`` everywhere, boundary nodes included (for runs without diffusion)."""
    return np.full(grid.M, float(amplitude))


PROFILES = {
    "gaussian_bump": gaussian_bump,
    "radial_decreasing": radial_decreasing,
    "annulus_ring": annulus_ring,
    "eigenfunction": eigenfunction,
    "constant": constant,
}


@dataclass(frozen=True)
class DatumSpec:
    """A named profile with keyword arguments; every profile has an ``amplitude``."""

    profile: str
    args: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.profile not in PROFILES:
            raise ConfigError(f"unknown profile {self.profile!r}; expected one of {sorted(PROFILES)}")

    @property
    def amplitude(self) -> float:
        import inspect

        if "amplitude" in self.args:
            return float(self.args["amplitude"])
        return float(inspect.signature(PROFILES[self.profile]).parameters["amplitude"].default)

    def with_amplitude(self, amplitude: float) -> "DatumSpec":
        return DatumSpec(self.profile, {**self.args, "amplitude": float(amplitude)})

    def build(self, grid: Grid) -> np.ndarray:
        try:
            return PROFILES[self.profile](grid, **self.args)
        except TypeError as exc:
            raise ConfigError(f"bad arguments for profile {self.profile!r}: {exc}") from exc

    def to_dict(self) -> dict:
        return {"profile": self.profile, "args": dict(self.args)}


# ---------------------------------------------------------------- scenarios

@dataclass(frozen=True)
class ScenarioSpec:
    """A complete experiment.

    ``M`` and ``rk_tolerance`` come from the tier; ``mesh_factor`` multiplies
    the tier's interval count for geometries that need finer meshes.
    ``expected`` maps ``collapse``, ``type`` and ``dimension`` to the
    anticipated observations; ``rationale`` says where each comes from.
    """

    name: str
    p: float
    domain: DomainSpec
    datum: DatumSpec
    solver: dict = field(default_factory=dict)
    regularity: dict = field(default_factory=dict)
    mesh_factor: int = 1
    reaction_on: bool = True
    diffusion_on: bool = True
    scan: bool = True
    expected: dict = field(default_factory=dict)
    rationale: str = ""

    def __post_init__(self):
        if not self.p > 1.0:
            raise ConfigError(f"p must exceed 1, got {self.p}")
        if int(self.mesh_factor) != self.mesh_factor or self.mesh_factor < 1:
            raise ConfigError("mesh_factor must be a positive integer")
        bad = set(self.expected) - {"collapse", "type", "dimension"}
        if bad:
            raise ConfigError(f"unknown expectation keys {sorted(bad)}")

    def grid(self, tier: str = "reference") -> Grid:
        t = _tier(tier)
        return build_grid(self.domain, (t.M - 1) * int(self.mesh_factor) + 1)

    def model(self, tier: str = "reference") -> ModelParams:
        return ModelParams(self.p, self.grid(tier), self.reaction_on, self.diffusion_on)

    def solver_config(self, tier: str = "reference") -> SolverConfig:
        try:
            return SolverConfig(**{"rk_tolerance": _tier(tier).rk_tolerance, **self.solver})
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad solver settings: {exc}") from exc

    def regularity_config(self) -> RegularityConfig:
        args = dict(self.regularity)
        for k in ("r_list", "q_list"):
            if args.get(k) is not None:
                args[k] = tuple(args[k])
        try:
            return RegularityConfig(**args)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad regularity settings: {exc}") from exc

    def to_dict(self) -> dict:
        d = asdict(self)
        d["domain"] = self.domain.to_dict()
        d["datum"] = self.datum.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioSpec":
        d = dict(d)
        d["domain"] = DomainSpec(**d["domain"])
        d["datum"] = DatumSpec(**d["datum"])
        return cls(**d)


def _tier(name: str) -> Tier:
    if name not in TIERS:
        raise ConfigError(f"unknown tier {name!r}; expected one of {sorted(TIERS)}")
    return TIERS[name]


CATALOGUE = {
    "subcritical_collapse": ScenarioSpec(
        "subcritical_collapse", 3.0, DomainSpec("interval"),
        DatumSpec("gaussian_bump", {"amplitude": 10.0, "width": 0.2, "center": 0.5}),
        expected={"collapse": "collapsing", "type": "TypeI"},
        rationale="subcritical exponent on a convex domain: every blowup collapses and is Type I",
    ),
    "supercritical_radial": ScenarioSpec(
        "supercritical_radial", 7.0, DomainSpec("radial_ball", N=3),
        DatumSpec("radial_decreasing", {"amplitude": 1.6, "profile": "cosine"}),
        expected={"collapse": "non_collapsing", "dimension": 0.0},
        rationale="radially decreasing data on a ball, Sobolev-supercritical: single-point, "
                  "non-collapsing blowup at the origin",
    ),
    "annulus_sphere": ScenarioSpec(
        "annulus_sphere", 7.0, DomainSpec("radial_annulus", N=3, R=1.0, R0=0.5),
        DatumSpec("annulus_ring", {"amplitude": 2.5, "ring_center": 0.75, "width": 0.1}),
        expected={"collapse": "collapsing", "dimension": 2.0},
        rationale="blowup on a whole sphere has dimension N-1 > N-2-4/(p-1), which rules out "
                  "non-collapsing blowup",
    ),
    "critical_ball": ScenarioSpec(
        "critical_ball", 5.0, DomainSpec("radial_ball", N=3),
        DatumSpec("radial_decreasing", {"amplitude": 3.0, "profile": "cosine"}),
        scan=False,
        expected={"type": "TypeI"},
        rationale="positive radial data at the Sobolev exponent blow up with Type I rate; "
                  "completeness is attached as a label, not simulated",
    ),
    "flat_ode": ScenarioSpec(
        "flat_ode", 3.0, DomainSpec("interval"), DatumSpec("constant", {"amplitude": 1.0}),
        diffusion_on=False, scan=False,
        expected={"type": "TypeI"},
        rationale="reaction-only constant datum: the exact flat solution kappa (omega - t)^(-1/(p-1))",
    ),
}


# Regimes with no known initial datum; only the classifiers cover them.
UNREACHABLE = {
    "critical_non_collapsing": "non-collapsing blowup at the critical exponent would be Type II, "
                               "but no datum producing it is known",
    "continuation_past_blowup": "incomplete blowup and continuation beyond omega are not simulated",
}


# ----------------------------------------------------------------- reports

@dataclass
class BlowupReport:
    """Blowup-time estimate, rate verdict and collapse verdict of one trajectory.

    ``notes`` records why a verdict is missing or how a fit was obtained.
    """

    stop: str
    omega: OmegaEstimate | None = None
    rate: RateReport | None = None
    collapse: CollapseVerdict | None = None
    envelope: dict | None = None
    notes: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "stop": self.stop,
            "omega": None if self.omega is None else self.omega.to_dict(),
            "rate": None if self.rate is None else self.rate.to_dict(),
            "collapse": None if self.collapse is None else self.collapse.to_dict(),
            "envelope": self.envelope,
            "notes": dict(self.notes),
        }


def analyze(traj: Trajectory, rate_cfg: RateConfig = RateConfig(),
            collapse_cfg: CollapseConfig = CollapseConfig()) -> BlowupReport:
    """Run the omega, rate and collapse pipelines; failures become notes."""
    rep = BlowupReport(traj.stop.value)
    if traj.stop is not StopReason.BLOWUP:
        rep.notes["omega"] = f"no blowup ({traj.stop.value})"
        return rep
    try:
        rep.omega = estimate_omega(traj, resolve_nodes=collapse_cfg.resolve_nodes)
    except ValueError as exc:
        rep.notes["omega"] = str(exc)
        return rep
    try:
        rep.rate = classify_type(rate_curve(traj, rep.omega, collapse_cfg.resolve_nodes), rate_cfg)
    except ValueError as exc:
        rep.notes["rate"] = str(exc)
    if traj.params.diffusion_on:
        rep.collapse = classify_collapse(traj, rep.omega, collapse_cfg)
        if rep.collapse.verdict == "collapsing":
            consts = derived_constants(traj.p, traj.grid)
            rep.envelope = envelope_check(traj, rep.omega, consts)
    else:
        rep.notes["collapse"] = "energy verdicts need the diffusion term"
    return rep


@dataclass
class ScenarioReport:
    spec: ScenarioSpec
    tier: str
    trajectory: Trajectory
    blowup: BlowupReport
    setmap: SingularSetMap | None = None
    dimension: DimensionReport | None = None
    observed: dict = field(default_factory=dict)
    mismatches: list = field(default_factory=list)
    notes: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.mismatches

    def summary(self) -> dict:
        return {
            "scenario": self.spec.name,
            "tier": self.tier,
            "rationale": self.spec.rationale,
            "expected": dict(self.spec.expected),
            "observed": dict(self.observed),
            "mismatches": list(self.mismatches),
            "ok": self.ok,
            "notes": dict(self.notes),
        }


DIMENSION_TOL = 0.2


def run_scenario(spec: ScenarioSpec, tier: str = "reference", scan: bool | None = None) -> ScenarioReport:
    """Simulate, analyse and compare against the expectations.

    Mismatches are listed in the report, never dropped.  A solver stop
    other than blowup or decay raises.
    """
    params = spec.model(tier)
    cfg = spec.solver_config(tier)
    traj = run(spec.datum.build(params.grid), cfg, params)
    if traj.stop not in (StopReason.BLOWUP, StopReason.DECAYED):
        raise RuntimeError(f"scenario {spec.name}: solver stopped with {traj.stop.value}")
    blow = analyze(traj)
    rep = ScenarioReport(spec, tier, traj, blow)
    obs = rep.observed
    obs["stop"] = traj.stop.value
    if blow.omega is not None:
        obs["omega"] = blow.omega.omega
    if blow.collapse is not None:
        obs["collapse"] = blow.collapse.verdict
    if blow.rate is not None:
        obs["type"] = blow.rate.type_class
    do_scan = spec.scan if scan is None else scan
    if do_scan and blow.omega is not None:
        try:
            rep.setmap = extract_singular_set(traj, blow.omega, spec.regularity_config())
            rep.dimension = covering_dimension(rep.setmap, spec.regularity_config().q_list)
            obs["dimension"] = rep.dimension.slope
            obs["blowup_set"] = rep.setmap.bands()
        except ValueError as exc:
            rep.notes["scan"] = str(exc)
    for key, want in spec.expected.items():
        got = obs.get(key)
        if key == "dimension":
            good = got is not None and abs(got - want) <= DIMENSION_TOL
        else:
            good = got == want
        if not good:
            rep.mismatches.append({"key": key, "expected": want, "observed": got})
    return rep


# ----------------------------------------------------------------- bisection

def classify_global_vs_blowup(traj: Trajectory) -> str:
    """``global``, ``blowup`` or ``unresolved`` from how a run ended."""
    if traj.stop is StopReason.BLOWUP:
        return "blowup"
    if traj.stop is StopReason.DECAYED:
        return "global"
    led = traj.ledger
    if traj.stop is StopReason.HORIZON and led.umax[-1] <= traj.cfg.decay_factor * led.umax[0] \
            and led.E[-1] >= 0.0:
        return "global"
    return "unresolved"


@dataclass
class BisectionReport:
    lambda_lo: float
    lambda_hi: float
    iterates: list
    trajectory_hi: Trajectory | None = None
    collapse_hi: CollapseVerdict | None = None
    converged: bool = False
    notes: list = field(default_factory=list)

    @property
    def lambda_star(self) -> float:
        return 0.5 * (self.lambda_lo + self.lambda_hi)

    @property
    def relative_width(self) -> float:
        return (self.lambda_hi - self.lambda_lo) / self.lambda_star

    def monotone(self) -> bool:
        """No blowup verdict at an amplitude below a global one."""
        glob = [lam for lam, v, *_ in self.iterates if v == "global"]
        blow = [lam for lam, v, *_ in self.iterates if v == "blowup"]
        return not glob or not blow or max(glob) < min(blow)

    def to_dict(self) -> dict:
        return {
            "lambda_lo": self.lambda_lo,
            "lambda_hi": self.lambda_hi,
            "lambda_star": self.lambda_star,
            "relative_width": self.relative_width,
            "converged": self.converged,
            "monotone": self.monotone(),
            "iterates": [{"lambda": lam, "verdict": v, "stop": s, "t_end": t} for lam, v, s, t in self.iterates],
            "collapse_hi": None if self.collapse_hi is None else self.collapse_hi.to_dict(),
            "notes": list(self.notes),
        }


def bisect_borderline(datum: DatumSpec, params: ModelParams, cfg: SolverConfig,
                      lambda_bracket=(0.5, 2.0), tol: float = 1e-3, budget: int = 60,
                      max_expansions: int = 20, classify: bool = True) -> BisectionReport:
    """Bisect the amplitude between global existence and blowup.

    Endpoints with equal verdicts are pushed apart geometrically (factor 2)
    first.  An unresolved midpoint is logged and the quarter points are tried
    instead.  Stops once ``lambda_hi - lambda_lo <= tol * lambda_star``.
    """
    lo, hi = (float(v) for v in lambda_bracket)
    if not 0.0 < lo < hi:
        raise BracketError(f"need 0 < lambda_lo < lambda_hi, got {lambda_bracket}")
    if not tol > 0.0:
        raise BracketError("tol must be positive")
    iterates: list = []
    runs = {"n": 0}
    best_hi: dict = {}

    def probe(lam):
        if runs["n"] >= budget:
            partial = BisectionReport(lo, hi, iterates, notes=["budget exhausted"])
            raise BudgetExhausted(f"run budget {budget} exhausted", partial.to_dict())
        runs["n"] += 1
        tr = run(datum.with_amplitude(lam).build(params.grid), cfg, params)
        v = classify_global_vs_blowup(tr)
        iterates.append((lam, v, tr.stop.value, float(tr.ledger.t[-1])))
        if v == "blowup" and ("lam" not in best_hi or lam < best_hi["lam"]):
            best_hi.update(lam=lam, traj=tr)
        log.info("lambda=%.10g -> %s", lam, v)
        return v

    v_lo, v_hi = probe(lo), probe(hi)
    for v, lam in ((v_lo, lo), (v_hi, hi)):
        if v == "unresolved":
            raise BracketError(f"endpoint lambda={lam} is unresolved", {"iterates": iterates})
    n_exp = 0
    while v_lo == v_hi:
        if n_exp >= max_expansions:
            raise BracketError(f"both endpoints {v_lo} after {n_exp} expansions",
                               {"lambda_lo": lo, "lambda_hi": hi, "iterates": iterates})
        n_exp += 1
        if v_lo == "global":
            lo, hi = hi, 2.0 * hi
            v_lo, v_hi = v_hi, probe(hi)
        else:
            lo, hi = 0.5 * lo, lo
            v_lo, v_hi = probe(lo), v_lo
        for v, lam in ((v_lo, lo), (v_hi, hi)):
            if v == "unresolved":
                raise BracketError(f"expanded endpoint lambda={lam} is unresolved", {"iterates": iterates})
    if v_lo == "blowup":
        raise BracketError(f"blowup at lambda_lo={lo} but global at lambda_hi={hi}",
                           {"iterates": iterates})
    notes = []
    while hi - lo > tol * 0.5 * (lo + hi):
        width = hi - lo
        for frac in (0.5, 0.25, 0.75):
            lam = lo + frac * width
            v = probe(lam)
            if v != "unresolved":
                break
            notes.append(f"unresolved at lambda={lam:.10g}")
        else:
            raise BracketError("three unresolved probes in one bracket",
                               {"lambda_lo": lo, "lambda_hi": hi, "iterates": iterates})
        if v == "global":
            lo = lam
        else:
            hi = lam
        rep = BisectionReport(lo, hi, iterates)
        if not rep.monotone():
            raise BracketError("verdicts are not monotone in lambda (resolution fault)",
                               {"iterates": iterates})
    rep = BisectionReport(lo, hi, iterates, converged=True, notes=notes)
    rep.trajectory_hi = best_hi.get("traj")
    if classify and rep.trajectory_hi is not None and params.diffusion_on:
        try:
            rep.collapse_hi = classify_collapse(rep.trajectory_hi, estimate_omega(rep.trajectory_hi))
        except ValueError as exc:
            rep.notes.append(f"collapse verdict unavailable: {exc}")
    return rep


# ----------------------------------------------------------------- estimators

class BlowupSimulator(BaseEstimator):
    """Estimator wrapper: ``fit(u0)`` integrates one datum on a fixed grid.

    Sets ``trajectory_`` and ``report_``; ``predict`` returns the
    global/blowup verdict for each datum in a list.
    """

    def __init__(self, p=3.0, domain=None, M=401, rk_tolerance=1e-8, diffusion_on=True, reaction_on=True):
        self.p = p
        self.domain = domain
        self.M = M
        self.rk_tolerance = rk_tolerance
        self.diffusion_on = diffusion_on
        self.reaction_on = reaction_on

    def _setup(self):
        spec = self.domain if self.domain is not None else DomainSpec("interval")
        params = ModelParams(self.p, build_grid(spec, self.M), self.reaction_on, self.diffusion_on)
        return params, SolverConfig(rk_tolerance=self.rk_tolerance)

    def fit(self, X, y=None):
        params, cfg = self._setup()
        self.params_ = params
        self.trajectory_ = run(np.asarray(X, dtype=float), cfg, params)
        self.report_ = analyze(self.trajectory_)
        return self

    def predict(self, X):
        params, cfg = self._setup()
        return np.array([classify_global_vs_blowup(run(np.asarray(u, dtype=float), cfg, params)) for u in X])


class CollapseClassifier(ClassifierMixin, BaseEstimator):
    """Estimator wrapper: ``predict`` the collapse verdict of blowup trajectories."""

    def __init__(self, E_threshold_factor=1e3, tail_tol=1e-2, min_final_umax=1e4):
        self.E_threshold_factor = E_threshold_factor
        self.tail_tol = tail_tol
        self.min_final_umax = min_final_umax

    def _cfg(self):
        return CollapseConfig(self.E_threshold_factor, self.tail_tol, self.min_final_umax)

    def fit(self, X, y=None):
        self.classes_ = np.array(["collapsing", "non_collapsing", "undetermined"])
        self.verdicts_ = [classify_collapse(tr, estimate_omega(tr), self._cfg()) for tr in X]
        return self

    def predict(self, X):
        return np.array([classify_collapse(tr, estimate_omega(tr), self._cfg()).verdict for tr in X])
