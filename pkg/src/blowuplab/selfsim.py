"""Self-similar rescaling around a blowup point and the weighted local energy.

With ``tau = omega - t = exp(-s)`` the rescaled field is
``w(y, s) = tau^{1/(p-1)} u(a + y sqrt(tau), t)``, extended by zero outside
the moving domain ``Omega_s``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np
from scipy.interpolate import CubicSpline
from sklearn.base import BaseEstimator, TransformerMixin

from .integrator import RESOLVE_NODES, OmegaEstimate, Trajectory, kappa
from .mesh import DomainSpec, Grid, build_grid, gradient, laplacian

__all__ = [
    "kappa",
    "RescaledFrame",
    "LocalEnergySeries",
    "y_grid",
    "rescale",
    "unrescale",
    "resolved_s_range",
    "local_energy",
    "flat_local_energy",
    "rescaled_residual",
    "local_energy_series",
    "local_energy_spread",
    "nondegeneracy_check",
    "blowup_center",
    "SelfSimilarTransformer",
]

Y_EXTENT = 8.0
Y_NODES = 257
RADIAL_Y_NODES = 129


def y_grid(N: int, radial: bool, extent: float = Y_EXTENT, nodes: int | None = None) -> Grid:
    """Uniform grid in similarity variables: ``[-extent, extent]`` or the ball ``|y| <= extent``."""
    if not extent > 0.0:
        raise ValueError("y extent must be positive")
    if radial:
        return build_grid(DomainSpec("radial_ball", N=N, R=extent), nodes or RADIAL_Y_NODES)
    return build_grid(DomainSpec("interval", R0=-extent, R=extent), nodes or Y_NODES)


def _tail(traj: Trajectory, omega) -> float:
    if isinstance(omega, OmegaEstimate):
        return omega.tail
    return float(omega) - float(traj.ledger.t[-1])


@dataclass(frozen=True, eq=False)
class RescaledFrame:
    a: float
    omega: float
    s: float
    y: Grid = field(repr=False)
    w: np.ndarray = field(repr=False)
    mask: np.ndarray = field(repr=False)
    rho: np.ndarray = field(repr=False)

    @property
    def y_extent(self) -> float:
        return float(self.y.spec.R)

    @property
    def masked_fraction(self) -> float:
        """Share of the Gaussian weight lying inside ``Omega_s``."""
        W = self.y.quad_weights * self.rho
        return float(np.dot(W, self.mask) / W.sum())


@dataclass(frozen=True, eq=False)
class LocalEnergySeries:
    s: np.ndarray
    E: np.ndarray
    ws_norm: np.ndarray
    decay_integrand: np.ndarray
    max_positive_jump: float
    audit_tol: float

    @property
    def monotone(self) -> bool:
        return self.max_positive_jump <= self.audit_tol

    def as_table(self) -> dict:
        return {"s": self.s, "E": self.E, "ws_norm": self.ws_norm,
                "decay_integrand": self.decay_integrand}


def _snapshot_tau(traj: Trajectory, tail: float) -> np.ndarray:
    return traj.time_to_blowup(tail)[traj.snap_index]


def _check_center(traj: Trajectory, a: float):
    spec = traj.grid.spec
    if spec.radial:
        if spec.kind != "radial_ball" or a != 0.0:
            raise ValueError("radial trajectories can only be rescaled about the origin of a ball")
    elif not spec.R0 <= a <= spec.R:
        raise ValueError(f"centre a={a} lies outside [{spec.R0}, {spec.R}]")


def _interp_field(traj: Trajectory, tau_snap: np.ndarray, tau: float) -> np.ndarray:
    # absorb exp/log round-off at the ends of the range
    if tau_snap[0] < tau <= tau_snap[0] * (1.0 + 1e-12):
        tau = tau_snap[0]
    elif tau_snap[-1] * (1.0 - 1e-12) <= tau < tau_snap[-1]:
        tau = tau_snap[-1]
    if not (tau_snap[-1] <= tau <= tau_snap[0]):
        s = -math.log(tau) if tau > 0 else math.inf
        raise ValueError(f"s={s:.6g} outside the snapshot range "
                         f"[{-math.log(tau_snap[0]):.6g}, {-math.log(tau_snap[-1]):.6g}]")
    # tau_snap is decreasing
    k = int(np.searchsorted(-tau_snap, -tau, side="right")) - 1
    k = min(max(k, 0), len(tau_snap) - 2)
    t0, t1 = tau_snap[k], tau_snap[k + 1]
    th = 0.0 if t0 == t1 else (t0 - tau) / (t0 - t1)
    return (1.0 - th) * traj.snapshots[k] + th * traj.snapshots[k + 1]


def _spatial_sample(traj: Trajectory, u: np.ndarray, x: np.ndarray):
    g = traj.grid
    if g.spec.kind == "radial_ball":
        spl = CubicSpline(g.nodes, u, bc_type=((1, 0.0), "not-a-knot"))
        r = np.abs(x)
        inside = r <= g.spec.R
    else:
        spl = CubicSpline(g.nodes, u)
        r = x
        inside = (x >= g.spec.R0) & (x <= g.spec.R)
    vals = np.zeros_like(x)
    vals[inside] = spl(r[inside])
    return vals, inside


def rescale(traj: Trajectory, a: float, omega, s: float, y: Grid | None = None) -> RescaledFrame:
    """Rescaled frame at similarity time ``s``.

    ``omega`` is an :class:`OmegaEstimate` (preferred: keeps full precision
    of ``omega - t`` near blowup) or a float blowup time.
    """
    _check_center(traj, a)
    tail = _tail(traj, omega)
    p = traj.p
    yg = y or y_grid(traj.grid.N, traj.grid.radial)
    tau = math.exp(-s)
    u = _interp_field(traj, _snapshot_tau(traj, tail), tau)
    x = a + yg.nodes * math.sqrt(tau)
    vals, inside = _spatial_sample(traj, u, x)
    w = tau ** (1.0 / (p - 1.0)) * vals
    rho = np.exp(-yg.nodes ** 2 / 4.0)
    om = float(traj.ledger.t[-1]) + tail
    return RescaledFrame(float(a), om, float(s), yg, w, inside, rho)


def unrescale(frame: RescaledFrame, p: float) -> tuple[np.ndarray, np.ndarray]:
    """Physical coordinates and values ``(x, u)`` represented by the frame's unmasked nodes."""
    tau = math.exp(-frame.s)
    x = frame.a + frame.y.nodes[frame.mask] * math.sqrt(tau)
    return x, frame.w[frame.mask] * tau ** (-1.0 / (p - 1.0))


def local_energy(frame: RescaledFrame, p: float) -> float:
    """Weighted energy over ``Omega_s``.

    ``1/2 int |grad w|^2 rho + 1/(2(p-1)) int w^2 rho - 1/(p+1) int |w|^{p+1} rho``;
    the gradient term only counts cells with both ends inside ``Omega_s``.
    """
    yg = frame.y
    w = np.where(frame.mask, frame.w, 0.0)
    Wr = yg.quad_weights * frame.rho * frame.mask
    faces = yg.faces
    both = frame.mask[1:] & frame.mask[:-1]
    dw = np.diff(w) / yg.h
    grad = float(np.dot(yg.face_area * yg.h * np.exp(-faces ** 2 / 4.0) * both, dw * dw))
    quad = float(np.dot(Wr, w * w))
    pot = float(np.dot(Wr, np.abs(w) ** (p + 1.0)))
    return 0.5 * grad + quad / (2.0 * (p - 1.0)) - pot / (p + 1.0)


def flat_local_energy(p: float, N: int) -> float:
    """Local energy of ``w = kappa`` on all of ``R^N``: ``kappa^2 (4 pi)^{N/2} / (2(p+1))``."""
    return kappa(p) ** 2 * (4.0 * math.pi) ** (N / 2.0) / (2.0 * (p + 1.0))


def rescaled_residual(frame: RescaledFrame, p: float, w_s=None) -> np.ndarray:
    """Pointwise residual of ``w_s - lap w + y.grad w / 2 + w/(p-1) - |w|^{p-1} w`` on interior unmasked nodes."""
    yg = frame.y
    w = frame.w
    ws = np.zeros_like(w) if w_s is None else np.asarray(w_s, dtype=float)
    res = ws - laplacian(yg, w) + 0.5 * yg.nodes * gradient(yg, w) + w / (p - 1.0) \
        - np.abs(w) ** (p - 1.0) * w
    keep = frame.mask.copy()
    keep[yg.dirichlet] = False
    inner = keep.copy()
    inner[1:] &= keep[:-1]
    inner[:-1] &= keep[1:]
    if yg.spec.kind == "radial_ball":
        inner[0] = keep[0] and keep[1]
    return np.where(inner, res, 0.0)


def _ws(frames, s):
    W = np.array([f.w for f in frames])
    if len(frames) < 2:
        return np.zeros_like(W)
    return np.gradient(W, s, axis=0, edge_order=1)


def local_energy_series(traj: Trajectory, a: float, omega, s_grid, audit_tol: float | None = None,
                        y: Grid | None = None) -> LocalEnergySeries:
    """Local energy along ``s_grid`` with its monotonicity audit.

    ``ws_norm[i]`` is ``int_{s_i}^{s_i + 1} int w_s^2 rho`` (NaN when the unit
    window leaves the grid); ``decay_integrand`` is
    ``int rho (1 + |y|^2)(w_s^2 + |grad w|^2)`` per frame.  The audit
    tolerance defaults to ``1e-2 (1 + |E(s_0)|)``.
    """
    s = np.asarray(s_grid, dtype=float)
    if s.ndim != 1 or len(s) < 1 or np.any(np.diff(s) <= 0):
        raise ValueError("s_grid must be a strictly increasing 1-D array")
    p = traj.p
    yg = y or y_grid(traj.grid.N, traj.grid.radial)
    frames = [rescale(traj, a, omega, si, yg) for si in s]
    E = np.array([local_energy(f, p) for f in frames])
    ws = _ws(frames, s)
    Wr = np.array([yg.quad_weights * f.rho * f.mask for f in frames])
    ws2 = np.einsum("ij,ij->i", Wr, ws * ws)
    gradw = np.array([gradient(yg, f.w) for f in frames])
    decay = np.einsum("ij,ij->i", Wr * (1.0 + yg.nodes ** 2), ws * ws + gradw * gradw)
    # running trapezoid of ws2, then unit windows
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (ws2[1:] + ws2[:-1]) * np.diff(s))])
    window = np.full(len(s), np.nan)
    ok = s + 1.0 <= s[-1] + 1e-12
    window[ok] = np.interp(s[ok] + 1.0, s, cum) - cum[ok]
    jumps = np.diff(E)
    max_jump = float(jumps.max()) if len(jumps) else 0.0
    tol = 1e-2 * (1.0 + abs(E[0])) if audit_tol is None else float(audit_tol)
    return LocalEnergySeries(s, E, window, decay, max(max_jump, 0.0), tol)


def local_energy_spread(traj: Trajectory, a: float, est: OmegaEstimate, s_grid) -> dict:
    """Local energy at ``omega`` and ``omega +- uncertainty`` over the common s-range."""
    out = {}
    s = np.asarray(s_grid, dtype=float)
    for tag, d in (("minus", -est.uncertainty), ("nominal", 0.0), ("plus", est.uncertainty)):
        e = est.shifted(d)
        lo, hi = _s_range(traj, e)
        keep = (s >= lo) & (s <= hi)
        ser = local_energy_series(traj, a, e, s[keep])
        out[tag] = dict(zip(ser.s.tolist(), ser.E.tolist()))
    common = sorted(set(out["minus"]) & set(out["nominal"]) & set(out["plus"]))
    spread = max((max(out[k][si] for k in out) - min(out[k][si] for k in out)) for si in common) \
        if common else math.nan
    return {"series": out, "max_spread": spread, "s_common": common}


def _s_range(traj: Trajectory, omega) -> tuple[float, float]:
    tau = _snapshot_tau(traj, _tail(traj, omega))
    hi = -math.log(tau[-1]) if tau[-1] > 0 else math.inf
    return -math.log(tau[0]), hi


def resolved_s_range(traj: Trajectory, omega, resolve_nodes: float = RESOLVE_NODES) -> tuple[float, float]:
    """Similarity-time span between the first snapshot and the end of the resolved window."""
    tail = _tail(traj, omega)
    tau = traj.time_to_blowup(tail)
    stop = max(traj.resolved_stop(resolve_nodes), 1)
    return -math.log(tau[0]), -math.log(tau[stop - 1])


def blowup_center(traj: Trajectory, resolve_nodes: float = RESOLVE_NODES) -> float:
    """Coordinate of the peak at the end of the resolved window."""
    stop = max(traj.resolved_stop(resolve_nodes), 1)
    return float(traj.grid.nodes[traj.ledger.imax[stop - 1]])


def nondegeneracy_check(traj: Trajectory, a: float, omega, tol: float = 0.1,
                        resolve_nodes: float = RESOLVE_NODES) -> dict:
    """Scaled local sup ``(2 sqrt(tau))^{2/(p-1)} sup_{|x-a| <= 2 sqrt(tau)} |u|`` over the final resolved decade.

    A value below ``tol`` at the end of the window means ``a`` is not a blowup point.
    """
    p = traj.p
    tail = _tail(traj, omega)
    tau_all = traj.time_to_blowup(tail)
    stop = max(traj.resolved_stop(resolve_nodes), 1)
    tau_end = tau_all[stop - 1]
    tau_snap = tau_all[traj.snap_index]
    sel = np.flatnonzero((traj.snap_index < stop) & (tau_snap <= 10.0 * tau_end))
    if len(sel) < 2:
        raise ValueError("fewer than two snapshots in the final resolved decade; refine snapshot_ds")
    x = traj.grid.nodes
    dist = np.abs(x - a)
    g = np.empty(len(sel))
    for i, k in enumerate(sel):
        rad = 2.0 * math.sqrt(tau_snap[k])
        near = dist <= rad
        if not near.any():
            near = dist == dist.min()
        g[i] = rad ** (2.0 / (p - 1.0)) * np.abs(traj.snapshots[k][near]).max()
    verdict = "non_blowup" if g[-1] < tol else "blowup_candidate"
    return {"verdict": verdict, "a": float(a), "g": g, "tau": tau_snap[sel], "final": float(g[-1])}


class SelfSimilarTransformer(TransformerMixin, BaseEstimator):
    """Map a blowup trajectory to rescaled frames.

    ``fit(traj)`` records the trajectory and the blowup-time estimate;
    ``transform(s_grid)`` returns an array of ``w`` profiles, one row per ``s``.

    Parameters
    ----------
    a : float or None
        Blowup centre; ``None`` takes the resolved peak location.
    omega : OmegaEstimate or None
        Blowup time; ``None`` estimates it from the trajectory.
    y_extent, y_nodes : float, int or None
        Similarity grid.
    """

    def __init__(self, a=None, omega=None, y_extent=Y_EXTENT, y_nodes=None):
        self.a = a
        self.omega = omega
        self.y_extent = y_extent
        self.y_nodes = y_nodes

    def fit(self, traj: Trajectory, y=None):
        from .integrator import estimate_omega

        self.traj_ = traj
        self.omega_ = self.omega if self.omega is not None else estimate_omega(traj)
        self.a_ = blowup_center(traj) if self.a is None else float(self.a)
        self.y_grid_ = y_grid(traj.grid.N, traj.grid.radial, self.y_extent, self.y_nodes)
        self.s_range_ = _s_range(traj, self.omega_)
        return self

    def transform(self, s_grid):
        s = np.atleast_1d(np.asarray(s_grid, dtype=float))
        return np.array([rescale(self.traj_, self.a_, self.omega_, si, self.y_grid_).w for si in s])

    def frames(self, s_grid):
        return [rescale(self.traj_, self.a_, self.omega_, si, self.y_grid_) for si in np.atleast_1d(s_grid)]

    def local_energy_series(self, s_grid, audit_tol=None) -> LocalEnergySeries:
        return local_energy_series(self.traj_, self.a_, self.omega_, s_grid, audit_tol, self.y_grid_)
