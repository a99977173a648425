"""Energy functional, dissipation audit, a-priori constants and collapse classification."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
import math

import numpy as np

from .integrator import RESOLVE_NODES, OmegaEstimate, StopReason, Trajectory
from .mesh import Grid, grad_sq_integral, integrate

__all__ = [
    "energy",
    "AuditReport",
    "dissipation_audit",
    "DerivedConstants",
    "derived_constants",
    "blowup_time_bound",
    "CollapseConfig",
    "CollapseVerdict",
    "classify_collapse",
    "envelope_check",
    "spacetime_integrals",
]


def energy(grid: Grid, f, p: float) -> float:
    """E(f) = 1/2 int |grad f|^2 - 1/(p+1) int |f|^{p+1}."""
    f = np.asarray(f, dtype=float)
    return 0.5 * grad_sq_integral(grid, f) - integrate(grid, np.abs(f) ** (p + 1.0)) / (p + 1.0)


@dataclass(frozen=True)
class AuditReport:
    max_defect: float
    t: np.ndarray = field(repr=False)
    defect: np.ndarray = field(repr=False)
    E0: float = 0.0
    n_entries: int = 0

    @property
    def relative(self) -> float:
        """Max defect scaled by ``1 + |E(0)|``."""
        return self.max_defect / (1.0 + abs(self.E0))


def dissipation_audit(traj: Trajectory, umax_limit: float | None = None) -> AuditReport:
    """Max over the ledger of ``|E(t) - E(0) + int_0^t int u_t^2|``.

    With ``umax_limit`` only entries up to the first one exceeding it are audited.
    """
    led = traj.ledger
    n = len(led)
    if umax_limit is not None:
        over = np.flatnonzero(led.umax > umax_limit)
        n = int(over[0]) + 1 if len(over) else n
    E0 = float(led.E[0])
    defect = np.abs(led.E[:n] - E0 + led.D[:n])
    return AuditReport(float(defect.max()), led.t[:n], defect, E0, n)


@dataclass(frozen=True)
class DerivedConstants:
    """Constants of the a-priori estimates for given ``p`` and ``|Omega|``.

    ``delta``: ``(1/2) d/dt int v^2 >= delta (|E|^{2/(p+1)} + int v^2)^{(p+1)/2}``
    for negative energy.  ``C2``: blowup-time constant ``2 / ((p-1) delta)``.
    ``delta_dissipation``: ``int v_t^2 >= delta_dissipation |E|^{2p/(p+1)}``.
    ``C_envelope``: ``E(t) >= -C_envelope (omega - t)^{-(p+1)/(p-1)}``.
    """

    p: float
    volume: float
    delta: float
    C2: float
    delta_dissipation: float
    C_envelope: float

    def to_dict(self) -> dict:
        return asdict(self)


def derived_constants(p: float, grid: Grid | float) -> DerivedConstants:
    """Explicit constants retraced through the Hoelder and Young steps.

    The combination step uses ``alpha a^q + beta b^q >= min(alpha, beta) 2^{1-q} (a + b)^q``
    for ``q = (p+1)/2 >= 1`` (convexity).  The dissipation bound minimises
    ``(c lam + 2)^2 lam^{-2/(p+1)}`` over ``lam = int|v|^{p+1} / |E| >= p + 1``,
    which follows from Cauchy-Schwarz and Hoelder applied to ``int v v_t``.
    """
    if not p > 1.0:
        raise ValueError(f"p must exceed 1, got {p}")
    vol = float(grid) if not isinstance(grid, Grid) else float(np.sum(grid.quad_weights))
    if not vol > 0.0:
        raise ValueError("domain volume must be positive")
    c = (p - 1.0) / (p + 1.0)
    holder = c * vol ** (-(p - 1.0) / 2.0)
    delta = 2.0 ** ((1.0 - p) / 2.0) * min(2.0, holder)
    C2 = 2.0 / ((p - 1.0) * delta)
    lam = max(p + 1.0, 2.0 / (c * p))
    g = (c * lam + 2.0) ** 2 * lam ** (-2.0 / (p + 1.0))
    delta_diss = g * vol ** (-(p - 1.0) / (p + 1.0))
    C_env = (c * delta_diss) ** (-(p + 1.0) / (p - 1.0))
    return DerivedConstants(float(p), vol, delta, C2, delta_diss, C_env)


def blowup_time_bound(E0: float, t0: float, consts: DerivedConstants) -> float:
    """Latest possible blowup time given ``E(t0) = E0 < 0``."""
    if not E0 < 0.0:
        raise ValueError(f"blowup-time bound needs negative energy, got E0={E0}")
    p = consts.p
    return t0 + consts.C2 * abs(E0) ** (-(p - 1.0) / (p + 1.0))


@dataclass(frozen=True)
class CollapseConfig:
    """Thresholds for the collapse verdict.

    ``E_threshold_factor`` scales ``1 + |E(0)|`` into the descent a collapsing
    run must show; ``tail_tol`` bounds the share of the dissipation integral
    accrued over the final resolved decade of ``omega - t``.
    """

    E_threshold_factor: float = 1e3
    tail_tol: float = 1e-2
    min_final_umax: float = 1e4
    resolve_nodes: float = RESOLVE_NODES

    def __post_init__(self):
        for name in ("E_threshold_factor", "tail_tol", "min_final_umax", "resolve_nodes"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class CollapseVerdict:
    verdict: str
    B_est: float
    E_threshold: float
    tail_fraction: float
    window: tuple
    exponent: float = math.nan
    label: str = ""
    integrals: dict = field(default_factory=dict)
    reason: str = ""

    def to_dict(self) -> dict:
        d = asdict(self)
        d["window"] = list(self.window)
        return d


def _decade_start(tau: np.ndarray, stop: int) -> int:
    """First index whose time-to-blowup is within a factor 10 of ``tau[stop-1]``."""
    return int(np.searchsorted(-tau[:stop], -10.0 * tau[stop - 1], side="left"))


def spacetime_integrals(traj: Trajectory, tau: np.ndarray, stop: int, qs=(1, 2)) -> dict:
    """``int (int |grad u|^2 + |u|^{p+1})^q dt`` over the resolved window.

    Returns total and final-decade share for each ``q``.
    """
    led = traj.ledger
    out = {}
    k0 = _decade_start(tau, stop)
    for q in qs:
        f = (led.grad_sq[:stop] + led.pint[:stop]) ** q
        inc = 0.5 * (f[1:] + f[:-1]) * led.dt[1:stop]
        total = float(inc.sum())
        tail = float(inc[k0:].sum()) if stop > 1 else 0.0
        out[f"q{q}"] = {"total": total, "tail_fraction": tail / total if total > 0 else math.nan}
    return out


def envelope_check(traj: Trajectory, est: OmegaEstimate, consts: DerivedConstants,
                   stop: int | None = None) -> dict:
    """Test ``E(t) >= -C (omega - t)^{-(p+1)/(p-1)}`` at every ledger time with ``E < 0``.

    Entries with non-negative energy satisfy it trivially and are counted as skipped.
    """
    led = traj.ledger
    n = len(led) if stop is None else stop
    p = traj.p
    tau = traj.time_to_blowup(est.tail)[:n]
    E = led.E[:n]
    neg = E < 0.0
    bound = -consts.C_envelope * tau ** (-(p + 1.0) / (p - 1.0))
    ok = ~neg | (E >= bound)
    margin = np.where(neg, E / bound, 0.0)
    return {
        "holds": bool(ok.all()),
        "n_checked": int(neg.sum()),
        "n_skipped": int((~neg).sum()),
        "n_violations": int((~ok).sum()),
        "max_ratio": float(margin.max()) if neg.any() else 0.0,
    }


def classify_collapse(traj: Trajectory, omega_est: OmegaEstimate,
                      cfg: CollapseConfig = CollapseConfig()) -> CollapseVerdict:
    """Collapsing / non-collapsing / undetermined, judged on the resolved window.

    Past the resolved window the discrete peak is a single-node ODE whose
    energy always diverges, so only resolved entries carry evidence.
    """
    if traj.stop is not StopReason.BLOWUP:
        raise ValueError(f"collapse classification needs a blowup run, got {traj.stop.value}")
    led = traj.ledger
    p = traj.p
    E0 = float(led.E[0])
    thr = cfg.E_threshold_factor * (1.0 + abs(E0))
    stop = max(traj.resolved_stop(cfg.resolve_nodes), 2)
    tau = traj.time_to_blowup(omega_est.tail)
    k0 = _decade_start(tau, stop)
    window = (float(tau[k0]), float(tau[stop - 1]))
    B = float(led.E[stop - 1])
    D_end = float(led.D[stop - 1])
    tail = (D_end - float(led.D[k0])) / D_end if D_end > 0 else math.nan
    common = dict(B_est=B, E_threshold=thr, tail_fraction=tail, window=window)
    if led.umax[-1] < cfg.min_final_umax:
        return CollapseVerdict("undetermined", **common,
                               reason=f"final |u|_inf {led.umax[-1]:.3g} < {cfg.min_final_umax:g}")
    E_res = led.E[:stop]
    if E_res.min() < -thr:
        neg = (E_res < 0.0) & (tau[:stop] > 0.0)
        sel = neg.copy()
        sel[:k0] = False
        if sel.sum() < 3:
            sel = neg
        slope = math.nan
        if sel.sum() >= 3:
            slope = float(-np.polyfit(np.log(tau[:stop][sel]), np.log(-E_res[sel]), 1)[0])
        return CollapseVerdict("collapsing", **common, exponent=slope, label="complete",
                               reason=f"E fell to {E_res.min():.4g} < -{thr:.4g}; "
                                      f"envelope exponent {(p + 1) / (p - 1):.4g}")
    integrals = spacetime_integrals(traj, tau, stop)
    bounded = bool(E_res[k0:].min() >= -thr)
    if bounded and tail < cfg.tail_tol:
        return CollapseVerdict("non_collapsing", **common, integrals=integrals,
                               reason=f"E bounded, dissipation tail {tail:.3g} < {cfg.tail_tol:g}")
    return CollapseVerdict("undetermined", **common, integrals=integrals,
                           reason=f"E bounded below by -{thr:.4g} but dissipation tail "
                                  f"{tail:.3g} >= {cfg.tail_tol:g} over the last resolved decade")
