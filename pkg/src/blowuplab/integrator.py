"""Time integration of u_t = lap u + |u|^{p-1} u up to numerical blowup."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from enum import Enum
import json
import math
from pathlib import Path

import numpy as np

from . import _kernels
from .mesh import DomainSpec, Grid, build_grid

__all__ = [
    "sobolev_exponent",
    "joseph_lundgren_exponent",
    "kappa",
    "ModelParams",
    "SolverConfig",
    "StopReason",
    "Ledger",
    "Trajectory",
    "OmegaEstimate",
    "step",
    "run",
    "estimate_omega",
    "save_trajectory",
    "load_trajectory",
    "CHECKPOINT_SCHEMA",
]

CHECKPOINT_SCHEMA = 1
CRITICAL_TOL = 1e-12
RESOLVE_NODES = 1.0


def sobolev_exponent(N: int) -> float:
    return (N + 2.0) / (N - 2.0) if N >= 3 else math.inf


def joseph_lundgren_exponent(N: int) -> float:
    if N <= 10:
        return math.inf
    return 1.0 + 4.0 / (N - 4.0 - 2.0 * math.sqrt(N - 1.0))


def kappa(p: float) -> float:
    """Amplitude of the flat blowup solution kappa (omega - t)^{-1/(p-1)}."""
    if not p > 1.0:
        raise ValueError(f"p must exceed 1, got {p}")
    return (p - 1.0) ** (-1.0 / (p - 1.0))


@dataclass(frozen=True)
class ModelParams:
    p: float
    grid: Grid
    reaction_on: bool = True
    diffusion_on: bool = True

    def __post_init__(self):
        if not self.p > 1.0:
            raise ValueError(f"p must exceed 1, got {self.p}")

    @property
    def N(self) -> int:
        return self.grid.N

    @property
    def p_S(self) -> float:
        return sobolev_exponent(self.N)

    @property
    def p_JL(self) -> float:
        return joseph_lundgren_exponent(self.N)

    @property
    def kappa(self) -> float:
        return kappa(self.p)

    @property
    def regime(self) -> str:
        pS = self.p_S
        if math.isfinite(pS) and abs(self.p - pS) <= CRITICAL_TOL:
            return "critical"
        return "subcritical" if self.p < pS else "supercritical"

    def to_dict(self) -> dict:
        return {"p": self.p, "grid": self.grid.to_dict(),
                "reaction_on": self.reaction_on, "diffusion_on": self.diffusion_on}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelParams":
        g = d["grid"]
        grid = build_grid(DomainSpec(**g["spec"]), g["M"])
        return cls(d["p"], grid, d.get("reaction_on", True), d.get("diffusion_on", True))


@dataclass(frozen=True)
class SolverConfig:
    """Step control and stopping rules.

    ``t_max=None`` means ten diffusion times ``10 / lambda_1`` (or 100 when
    diffusion is off).  Snapshots are stored every ``snapshot_stride`` steps
    and additionally whenever the provisional similarity time
    ``-log(omega - t)`` has advanced by ``snapshot_ds``.
    """

    cfl_safety: float = 0.9
    reaction_safety: float = 0.1
    dt_min: float = 1e-200
    U_max: float = 1e8
    t_max: float | None = None
    snapshot_stride: int = 250
    snapshot_ds: float = 0.05
    rk_tolerance: float = 1e-8
    decay_factor: float = 1e-2
    dt_init: float | None = None

    def __post_init__(self):
        if not 0.0 < self.cfl_safety <= 1.0:
            raise ValueError("cfl_safety must lie in (0, 1]")
        if not 0.0 < self.reaction_safety <= 1.0:
            raise ValueError("reaction_safety must lie in (0, 1]")
        if not self.dt_min > 0.0:
            raise ValueError("dt_min must be positive")
        if self.U_max < 1e6:
            raise ValueError("U_max must be at least 1e6")
        if self.t_max is not None and not self.t_max > 0.0:
            raise ValueError("t_max must be positive")
        if int(self.snapshot_stride) != self.snapshot_stride or self.snapshot_stride < 1:
            raise ValueError("snapshot_stride must be a positive integer")
        if not 0.0 < self.snapshot_ds <= 0.25:
            raise ValueError("snapshot_ds must lie in (0, 0.25]")
        if not self.rk_tolerance > 0.0:
            raise ValueError("rk_tolerance must be positive")
        if not 0.0 < self.decay_factor < 1.0:
            raise ValueError("decay_factor must lie in (0, 1)")
        if self.dt_init is not None and not self.dt_init > self.dt_min:
            raise ValueError("dt_init must exceed dt_min")

    def horizon(self, params: ModelParams) -> float:
        if self.t_max is not None:
            return self.t_max
        return 10.0 / params.grid.lambda1 if params.diffusion_on else 100.0

    def to_dict(self) -> dict:
        return asdict(self)


class StopReason(str, Enum):
    BLOWUP = "blowup_suspected"
    HORIZON = "horizon_reached"
    DECAYED = "decayed_to_zero"
    UNDERFLOW = "step_underflow"


LEDGER_FIELDS = ("t", "dt", "umax", "imax", "E", "D", "dD", "grad_sq", "pint")


@dataclass(eq=False)
class Ledger:
    """Per-step records; entry 0 is the initial state and ``dt[k]`` leads into entry k."""

    t: np.ndarray
    dt: np.ndarray
    umax: np.ndarray
    imax: np.ndarray
    E: np.ndarray
    D: np.ndarray
    dD: np.ndarray
    grad_sq: np.ndarray
    pint: np.ndarray

    def __len__(self):
        return len(self.t)

    def slice(self, stop: int) -> "Ledger":
        return Ledger(*(getattr(self, f)[:stop] for f in LEDGER_FIELDS))

    def as_dict(self) -> dict:
        return {f: getattr(self, f) for f in LEDGER_FIELDS}


@dataclass(eq=False)
class Trajectory:
    params: ModelParams
    cfg: SolverConfig
    u0: np.ndarray
    ledger: Ledger
    snapshots: np.ndarray
    snap_index: np.ndarray
    stop: StopReason
    dt_next: float = 0.0
    t_comp: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def grid(self) -> Grid:
        return self.params.grid

    @property
    def p(self) -> float:
        return self.params.p

    @property
    def final_state(self) -> np.ndarray:
        return self.snapshots[-1]

    @property
    def snapshot_times(self) -> np.ndarray:
        return self.ledger.t[self.snap_index]

    def time_to_end(self) -> np.ndarray:
        """``t_last - t_n`` per ledger entry, summed from the tail.

        Near blowup the step sizes drop far below the spacing of floats
        around ``t``; this reverse sum keeps full relative precision.
        """
        dt = self.ledger.dt
        rem = np.zeros(len(dt))
        if len(dt) > 1:
            rem[:-1] = np.cumsum(dt[:0:-1])[::-1]
        return rem

    def time_to_blowup(self, tail: float) -> np.ndarray:
        """``omega - t_n`` given ``tail = omega - t_last``."""
        return tail + self.time_to_end()

    def core_length(self) -> np.ndarray:
        """Length scale ``(|u|_inf / kappa)^{-(p-1)/2}`` of a type-I core at each entry."""
        p = self.p
        with np.errstate(divide="ignore"):
            return (self.ledger.umax / kappa(p)) ** (-(p - 1.0) / 2.0)

    def resolved_stop(self, resolve_nodes: float = RESOLVE_NODES) -> int:
        """Number of leading ledger entries whose blowup core spans ``resolve_nodes`` cells.

        Beyond this point the discrete peak behaves like a pointwise ODE and
        carries no information about the continuum dynamics.
        """
        n = len(self.ledger)
        if not self.params.diffusion_on:
            return n
        bad = np.flatnonzero(self.core_length() < resolve_nodes * self.grid.h)
        return int(bad[0]) if len(bad) else n


def _rhs(u: np.ndarray, params: ModelParams) -> np.ndarray:
    g = params.grid
    out = np.empty_like(u)
    _kernels.rhs(u, out, g.face_area / g.h, g.quad_weights, g.dirichlet, float(params.p),
                 params.diffusion_on, params.reaction_on)
    return out


def _diffusion_cap(params: ModelParams, cfg: SolverConfig) -> float:
    if not params.diffusion_on:
        return math.inf
    g = params.grid
    return cfg.cfl_safety * min(g.h ** 2 / 2.0, 2.0 / g.eigenvalue_bounds[1])


def step(state, t, cfg: SolverConfig, params: ModelParams, dt: float | None = None):
    """Advance one accepted step from ``(state, t)``.

    Returns ``(new_state, dt_used, u_t)`` where ``u_t`` is the right-hand
    side at ``t``.  Raises ``FloatingPointError`` on step underflow.
    """
    u = np.array(state, dtype=float)
    g = params.grid
    k1 = _rhs(u, params)
    cap = _diffusion_cap(params, cfg)
    if dt is None:
        dt = cfg.dt_init or min(cap, 1e-3)
    work = np.empty((6, g.M))
    status, u_new, _k, dt_used, _dt_next, _dD, _nrej = _kernels.advance(
        u, k1, float(dt), g.face_area / g.h, g.quad_weights, g.dirichlet, float(params.p),
        params.diffusion_on, params.reaction_on, cap, cfg.reaction_safety,
        cfg.rk_tolerance, cfg.dt_min, work)
    if status == _kernels.STATUS_UNDERFLOW:
        raise FloatingPointError(f"step underflow at t={t}: dt={dt_used} < dt_min={cfg.dt_min}")
    return u_new, dt_used, k1


def _check_initial(u0, params: ModelParams) -> np.ndarray:
    u = np.array(u0, dtype=float)
    g = params.grid
    if u.shape != (g.M,):
        raise ValueError(f"initial datum has shape {u.shape}, grid has {g.M} nodes")
    if not np.all(np.isfinite(u)):
        raise ValueError("initial datum must be finite")
    if params.diffusion_on:
        scale = max(1.0, float(np.max(np.abs(u))))
        if np.any(np.abs(u[g.dirichlet]) > 1e-12 * scale):
            raise ValueError("initial datum must vanish on Dirichlet nodes")
        u[g.dirichlet] = 0.0
    return u


def _decayed(umax: float, umax0: float, params: ModelParams, cfg: SolverConfig) -> bool:
    if umax == 0.0:
        return True
    if not params.diffusion_on:
        return False
    if umax > cfg.decay_factor * umax0:
        return False
    if params.reaction_on:
        # below this amplitude the reaction cannot beat the principal decay rate
        return umax ** (params.p - 1.0) <= 0.5 * params.grid.lambda1
    return True


def run(u0, cfg: SolverConfig, params: ModelParams, resume: Trajectory | None = None,
        snapshot_times=None) -> Trajectory:
    """Integrate until a stopping rule fires.

    With ``resume`` the run continues from that trajectory's final state,
    extending its ledger and snapshots without a time gap.  Steps are cut to
    land on each of ``snapshot_times``, where a snapshot is stored.
    """
    g = params.grid
    p = float(params.p)
    coef = g.face_area / g.h
    W = g.quad_weights
    dirichlet = g.dirichlet
    cap = _diffusion_cap(params, cfg)
    t_max = cfg.horizon(params)
    work = np.empty((6, g.M))

    if resume is None:
        u = _check_initial(u0, params)
        u_init = u.copy()
        t, t_comp, D = 0.0, 0.0, 0.0
        gsq, P, umax, imax = _kernels.functionals(u, coef, W, p)
        rec = {f: [] for f in LEDGER_FIELDS}
        for f, v in zip(LEDGER_FIELDS, (0.0, 0.0, umax, imax, 0.5 * gsq - P / (p + 1.0), 0.0, 0.0, gsq, P)):
            rec[f].append(v)
        snaps = [u.copy()]
        snap_idx = [0]
        dt = cfg.dt_init or (min(cap, 1e-3) if math.isfinite(cap) else 1e-3)
    else:
        u = resume.final_state.copy()
        u_init = resume.u0
        led = resume.ledger
        rec = {f: list(getattr(led, f)) for f in LEDGER_FIELDS}
        t, t_comp, D = float(led.t[-1]), resume.t_comp, float(led.D[-1])
        umax, imax = float(led.umax[-1]), int(led.imax[-1])
        snaps = list(resume.snapshots)
        snap_idx = list(resume.snap_index)
        if snap_idx[-1] != len(led) - 1:
            snaps.append(u.copy())
            snap_idx.append(len(led) - 1)
        dt = resume.dt_next or (min(cap, 1e-3) if math.isfinite(cap) else 1e-3)

    umax0 = float(np.max(np.abs(u_init)))
    targets = np.sort(np.asarray([] if snapshot_times is None else snapshot_times, dtype=float))
    targets = targets[targets > t]
    it = 0
    k1 = _rhs(u, params)
    n = len(rec["t"]) - 1
    last_snap_step = n
    snap_umax = umax
    snap_tau = math.inf
    stop = None

    while True:
        if umax >= cfg.U_max:
            stop = StopReason.BLOWUP
        elif _decayed(umax, umax0, params, cfg):
            stop = StopReason.DECAYED
        elif t >= t_max:
            stop = StopReason.HORIZON
        if stop is not None:
            break
        dt_try = min(dt, t_max - t) if t_max - t > 0 else dt
        if it < len(targets):
            dt_try = min(dt_try, targets[it] - t)
        status, u_new, k_new, dt_used, dt_next, dD, _nrej = _kernels.advance(
            u, k1, dt_try, coef, W, dirichlet, p, params.diffusion_on, params.reaction_on,
            cap, cfg.reaction_safety, cfg.rk_tolerance, cfg.dt_min, work)
        if status == _kernels.STATUS_UNDERFLOW:
            growing = n > 0 and rec["umax"][-1] > rec["umax"][max(0, n - 5)]
            stop = StopReason.BLOWUP if growing else StopReason.UNDERFLOW
            break
        # compensated sum keeps t monotone to the last bit
        y = dt_used - t_comp
        t_new = t + y
        t_comp = (t_new - t) - y
        t = t_new
        D += dD
        u, k1, dt = u_new, k_new, dt_next
        n += 1
        gsq, P, umax, imax = _kernels.functionals(u, coef, W, p)
        for f, v in zip(LEDGER_FIELDS, (t, dt_used, umax, imax, 0.5 * gsq - P / (p + 1.0), D, dD, gsq, P)):
            rec[f].append(v)

        take = n - last_snap_step >= cfg.snapshot_stride
        while it < len(targets) and t >= targets[it] * (1.0 - 1e-14):
            take = True
            it += 1
        if params.reaction_on and umax > snap_umax > 0.0:
            take |= math.log(umax / snap_umax) >= cfg.snapshot_ds / (p - 1.0)
            kt = k1[imax] * np.sign(u[imax])
            if kt > 0.0:
                tau = umax / ((p - 1.0) * kt)
                take |= math.log(snap_tau / tau) >= cfg.snapshot_ds if math.isfinite(snap_tau) else False
        if take:
            snaps.append(u.copy())
            snap_idx.append(n)
            last_snap_step = n
            snap_umax = umax
            kt = k1[imax] * np.sign(u[imax])
            snap_tau = umax / ((p - 1.0) * kt) if (params.reaction_on and kt > 0.0) else math.inf

    if snap_idx[-1] != n:
        snaps.append(u.copy())
        snap_idx.append(n)
    ledger = Ledger(*(np.asarray(rec[f], dtype=np.int64 if f == "imax" else float)
                      for f in LEDGER_FIELDS))
    return Trajectory(params, cfg, u_init, ledger, np.array(snaps), np.asarray(snap_idx, dtype=np.int64),
                      stop, dt_next=float(dt), t_comp=float(t_comp))


@dataclass(frozen=True)
class OmegaEstimate:
    """Blowup-time estimate.

    ``tail`` is ``omega - t_last``; use it with ``Trajectory.time_to_blowup``
    rather than subtracting ledger times from ``omega``.
    """

    omega: float
    tail: float
    fit_quality: float
    method: str
    fit_tail: float
    extrapolated_tail: float
    uncertainty: float
    n_fit: int

    def to_dict(self) -> dict:
        return asdict(self)

    def shifted(self, delta: float) -> "OmegaEstimate":
        return replace(self, omega=self.omega + delta, tail=self.tail + delta)


def estimate_omega(traj: Trajectory, *, growth_factor: float = 10.0, min_entries: int = 20,
                   fallback_threshold: float = 0.1, resolve_nodes: float = RESOLVE_NODES,
                   resolution_fraction: float = 0.1) -> OmegaEstimate:
    """Invert ``|u|_inf ~ C (omega - t)^{-1/(p-1)}`` over the final growth window.

    ``|u|_inf^{1-p}`` is fit linearly against time-to-end with relative
    weights; the zero crossing gives ``omega``.  When the relative residual
    exceeds ``fallback_threshold`` the two-point extrapolation from the last
    steps is used instead.  ``uncertainty`` is the larger of the gap
    between the two estimates and ``resolution_fraction`` times the time
    left when the grid stopped resolving the core.
    """
    if traj.stop is not StopReason.BLOWUP:
        raise ValueError(f"trajectory did not blow up (stop={traj.stop.value})")
    led = traj.ledger
    p = traj.p
    umax0 = float(np.max(np.abs(traj.u0)))
    low = np.flatnonzero(led.umax <= growth_factor * umax0)
    start = int(low[-1]) + 1 if len(low) else 0
    n_fit = len(led) - start
    if n_fit < min_entries:
        raise ValueError(f"only {n_fit} ledger entries above {growth_factor} x |u0|; need {min_entries}")
    rem = traj.time_to_end()[start:]
    y = led.umax[start:] ** (1.0 - p)
    # relative residuals: model alpha * (rem + tail) / y == 1
    A = np.column_stack([rem / y, 1.0 / y])
    scale = np.linalg.norm(A, axis=0)
    scale[scale == 0.0] = 1.0
    coef, *_ = np.linalg.lstsq(A / scale, np.ones_like(y), rcond=None)
    alpha, beta = coef / scale
    resid = (A @ (coef / scale)) - 1.0
    quality = float(np.sqrt(np.mean(resid ** 2)))
    fit_tail = beta / alpha if alpha > 0 else math.nan
    # two-point extrapolation from the final step
    dy = y[-2] - y[-1]
    ext_tail = y[-1] * led.dt[-1] / dy if dy > 0 else led.dt[-1]
    if alpha > 0 and fit_tail >= 0 and quality <= fallback_threshold:
        tail, method = fit_tail, "fit"
    else:
        tail, method = ext_tail, "fallback"
    unc = abs(fit_tail - ext_tail) if math.isfinite(fit_tail) else abs(ext_tail)
    # past the resolved window the discrete peak decouples from the continuum,
    # so omega carries an error of a fraction of the time left at that point
    rs = traj.resolved_stop(resolve_nodes)
    if rs < len(led):
        unc = max(unc, resolution_fraction * (tail + traj.time_to_end()[rs - 1]))
    return OmegaEstimate(float(led.t[-1] + tail), float(tail), quality, method,
                         float(fit_tail), float(ext_tail), float(unc), n_fit)


def save_trajectory(path, traj: Trajectory) -> Path:
    """Write a trajectory (doubling as a resumable checkpoint) to ``.npz``."""
    path = Path(path)
    meta = {
        "schema": CHECKPOINT_SCHEMA,
        "params": traj.params.to_dict(),
        "cfg": traj.cfg.to_dict(),
        "stop": traj.stop.value,
        "dt_next": traj.dt_next,
        "t_comp": traj.t_comp,
        "meta": traj.meta,
    }
    arrays = {f"ledger_{f}": v for f, v in traj.ledger.as_dict().items()}
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.array(json.dumps(meta, sort_keys=True)), u0=traj.u0,
                 snapshots=traj.snapshots, snap_index=traj.snap_index, **arrays)
    return path


def load_trajectory(path) -> Trajectory:
    with np.load(Path(path), allow_pickle=False) as z:
        meta = json.loads(str(z["meta"]))
        if meta.get("schema") != CHECKPOINT_SCHEMA:
            raise ValueError(f"unsupported checkpoint schema {meta.get('schema')}")
        ledger = Ledger(*(z[f"ledger_{f}"] for f in LEDGER_FIELDS))
        params = ModelParams.from_dict(meta["params"])
        cfg = SolverConfig(**meta["cfg"])
        return Trajectory(params, cfg, z["u0"], ledger, z["snapshots"], z["snap_index"],
                          StopReason(meta["stop"]), meta["dt_next"], meta["t_comp"], meta.get("meta", {}))
