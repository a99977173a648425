"""Epsilon-regularity density scans, blowup-set extraction and dimension estimates.

Densities are scale-balanced space-time integrals over parabolic
cylinders ending near the blowup time.  Each is evaluated for every grid
node (or radial shell) as a centre and for a geometric list of radii.
Time integrals run over the snapshot sequence in ``sigma = -log(omega - t)``
with the integrand interpolated piecewise-exponentially, which is exact for
power laws in ``omega - t``.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
import math

import numpy as np
from sklearn.base import BaseEstimator

from .integrator import RESOLVE_NODES, ModelParams, kappa, OmegaEstimate, StopReason, Trajectory, run
from .mesh import ball_weights, gradient, sphere_area
from .selfsim import flat_local_energy, local_energy, rescale

__all__ = [
    "RegularityConfig",
    "SingularSetMap",
    "DimensionReport",
    "cylinder_radius_factor",
    "flat_densities",
    "cylinder_density",
    "grad_density",
    "supercrit_density",
    "local_energy_criterion",
    "default_r_list",
    "calibrate_thresholds",
    "extract_singular_set",
    "box_count",
    "covering_dimension",
    "SingularSetScanner",
]

MIN_BALL_CELLS = 1.5  # ball radius in cells: at least four nodes across
DENSITY_KINDS = ("L32", "P41_grad", "P41_L2", "P42")


def cylinder_radius_factor(N: int) -> float:
    """Radius of the heat-kernel cylinder per unit time scale, ``sqrt(N / (2 pi e))``."""
    return math.sqrt(N / (2.0 * math.pi * math.e))


@dataclass(frozen=True)
class RegularityConfig:
    """Thresholds and scales for the regularity scan.

    Thresholds left as ``None`` are calibrated.  With
    ``calibration="bounded"`` each is ``calibration_factor`` times the largest
    density seen on the bounded run that drops the reaction term but keeps
    everything else (datum, grid, blowup time).  With ``calibration="flat"``
    each is ``flat_fraction`` times the scale-free density of the spatially
    flat blowup solution.
    ``cylinder_slab="scaled"`` integrates the cylinder density over
    ``(omega - r^2, omega - r^2/e)``; ``"open"`` runs up to ``omega`` and
    truncates at the end of the resolved window, reporting the cut share.
    """

    eps0: float | None = None
    eps1: float | None = None
    eps3: float | None = None
    eps4: float | None = None
    K: float = 2.0
    r_list: tuple | None = None
    n_scales: int = 8
    q_list: tuple = (2, 4, 8, 16)
    cylinder_slab: str = "scaled"
    calibration: str = "flat"
    calibration_factor: float = 10.0
    flat_fraction: float = 0.5
    resolve_nodes: float = RESOLVE_NODES

    def __post_init__(self):
        for name in ("eps0", "eps1", "eps3", "eps4"):
            v = getattr(self, name)
            if v is not None and not v > 0.0:
                raise ValueError(f"{name} must be positive")
        if not self.K > 1.0:
            raise ValueError("K must exceed 1")
        if self.r_list is not None:
            r = np.asarray(self.r_list, dtype=float)
            if r.ndim != 1 or len(r) == 0 or np.any(r <= 0) or np.any(np.diff(r) >= 0):
                raise ValueError("r_list must be positive and strictly decreasing")
        if self.cylinder_slab not in ("scaled", "open"):
            raise ValueError("cylinder_slab must be 'scaled' or 'open'")
        if self.n_scales < 1:
            raise ValueError("n_scales must be positive")
        if any(q <= 1 for q in self.q_list):
            raise ValueError("covering exponents q must exceed 1")
        if self.calibration not in ("bounded", "flat"):
            raise ValueError("calibration must be 'bounded' or 'flat'")
        if not self.calibration_factor > 0.0:
            raise ValueError("calibration_factor must be positive")
        if not 0.0 < self.flat_fraction < 1.0:
            raise ValueError("flat_fraction must lie in (0, 1)")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["r_list"] = None if self.r_list is None else list(self.r_list)
        d["q_list"] = list(self.q_list)
        return d


# ---------------------------------------------------------------- timeline

@dataclass(frozen=True, eq=False)
class _Timeline:
    tau: np.ndarray        # time to blowup at usable snapshots (decreasing, > 0)
    snaps: np.ndarray      # snapshot rows
    tau_cut: float         # end of the resolved window


def _timeline(traj: Trajectory, omega, resolve_nodes: float) -> _Timeline:
    tail = omega.tail if isinstance(omega, OmegaEstimate) else float(omega) - float(traj.ledger.t[-1])
    tau_all = traj.time_to_blowup(tail)
    stop = traj.resolved_stop(resolve_nodes) if traj.stop is StopReason.BLOWUP else len(tau_all)
    tau_s = tau_all[traj.snap_index]
    use = (tau_s > 0.0) & (traj.snap_index < max(stop, 1))
    if use.sum() < 2:
        raise ValueError("fewer than two resolved snapshots before omega")
    idx = np.flatnonzero(use)
    return _Timeline(tau_s[idx], traj.snapshots[idx], float(tau_s[idx[-1]]))


def _interp_exp(x0, x1, y0, y1, x):
    """Interpolate rows y0, y1 at x; log-linear where both ends are positive."""
    th = 0.0 if x1 == x0 else (x - x0) / (x1 - x0)
    lin = (1.0 - th) * y0 + th * y1
    pos = (y0 > 0.0) & (y1 > 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ex = y0 * (y1 / y0) ** th
    return np.where(pos, ex, lin)


def _segment(s0, s1, g0, g1):
    """Exact integral over [s0, s1] of the exponential through (s0, g0), (s1, g1)."""
    ds = s1 - s0
    pos = (g0 > 0.0) & (g1 > 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        lr = np.log(g1 / g0)
        ex = ds * (g1 - g0) / lr
    flat = ~pos | (np.abs(lr) < 1e-10)
    return np.where(flat, 0.5 * ds * (g0 + g1), ex)


def _slab_integral(tl: _Timeline, W: np.ndarray, nodal, tau_hi: float, tau_lo: float):
    """``int_{omega - tau_hi}^{omega - tau_lo} (W @ nodal(u)) dt`` over the snapshots.

    Returns ``(values, truncated_share)``; the slab is cut at the end of the
    resolved window when it reaches past it.
    """
    tau = tl.tau
    if tau_hi > tau[0] * (1.0 + 1e-12):
        raise ValueError(f"slab start omega - {tau_hi:.4g} precedes the first snapshot "
                         f"(omega - {tau[0]:.4g})")
    lo = max(tau_lo, tl.tau_cut)
    trunc = (lo - tau_lo) / (tau_hi - tau_lo) if lo > tau_lo else 0.0
    if lo >= tau_hi:
        return np.zeros(W.shape[0]), 1.0
    tau_hi = min(tau_hi, tau[0])
    # snapshot indices strictly inside (lo, tau_hi)
    inner = np.flatnonzero((tau < tau_hi) & (tau > lo))
    k_first = max(int(np.searchsorted(-tau, -tau_hi, side="right")) - 1, 0)
    k_last = min(int(np.searchsorted(-tau, -lo, side="left")), len(tau) - 1)
    ks = np.arange(k_first, k_last + 1)
    vals = {int(k): (W @ nodal(tl.snaps[k])) * tau[k] for k in ks}
    sig = -np.log(tau)

    def at(t):
        k = int(np.searchsorted(-tau, -t, side="right")) - 1
        k = min(max(k, k_first), k_last - 1) if k_last > k_first else k_first
        if k_last == k_first:
            return vals[k_first]
        return _interp_exp(sig[k], sig[k + 1], vals[k], vals[k + 1], -math.log(t))

    s_pts = [-math.log(tau_hi)] + [sig[k] for k in inner] + [-math.log(lo)]
    g_pts = [at(tau_hi)] + [vals[int(k)] for k in inner] + [at(lo)]
    total = np.zeros(W.shape[0])
    for i in range(len(s_pts) - 1):
        total += _segment(s_pts[i], s_pts[i + 1], g_pts[i], g_pts[i + 1])
    return total, trunc


def _weights(traj: Trajectory, centers: np.ndarray, radius: float) -> np.ndarray:
    g = traj.grid
    if radius < MIN_BALL_CELLS * g.h:
        raise ValueError(f"ball radius {radius:.3g} spans fewer than 4 nodes (h={g.h:.3g})")
    return np.array([ball_weights(g, float(a), radius) for a in centers])


def _nodal(traj: Trajectory, kind: str):
    p = traj.p
    g = traj.grid
    if kind == "pow":
        return lambda u: np.abs(u) ** (p + 1.0)
    if kind == "grad":
        return lambda u: gradient(g, u) ** 2
    if kind == "sq":
        return lambda u: u * u
    if kind == "grad+pow":
        return lambda u: gradient(g, u) ** 2 + np.abs(u) ** (p + 1.0)
    raise ValueError(kind)


def _scale(traj: Trajectory, r: float, extra: float = 0.0) -> float:
    return r ** (4.0 / (traj.p - 1.0) - traj.grid.N - extra)


def _centers(traj: Trajectory, a) -> np.ndarray:
    return np.atleast_1d(np.asarray(a, dtype=float))


def _cyl_slab(r: float, slab: str):
    return (r * r, r * r / math.e) if slab == "scaled" else (r * r, 0.0)


def _cylinder(traj, centers, r, tl, slab):
    W = _weights(traj, centers, cylinder_radius_factor(traj.grid.N) * r)
    hi, lo = _cyl_slab(r, slab)
    v, tr = _slab_integral(tl, W, _nodal(traj, "pow"), hi, lo)
    return _scale(traj, r) * v, tr


def _grad(traj, centers, r, tl):
    W = _weights(traj, centers, r)
    hi, lo = r * r, r * r / math.e
    vg, _ = _slab_integral(tl, W, _nodal(traj, "grad"), hi, lo)
    vs, _ = _slab_integral(tl, W, _nodal(traj, "sq"), hi, lo)
    return _scale(traj, r) * vg, _scale(traj, r, 2.0) * vs


def _supercrit(traj, centers, r, K, tl):
    W = _weights(traj, centers, K * r)
    v, tr = _slab_integral(tl, W, _nodal(traj, "grad+pow"), 9.0 * r * r, 4.0 * r * r)
    return _scale(traj, r) * v, tr


def _scan(traj, centers, r_list, tl, K, slab):
    """All densities at all radii; NaN where a ball or slab is not admissible."""
    h = traj.grid.h
    c = cylinder_radius_factor(traj.grid.N)
    n, m = len(centers), len(r_list)
    dens = {k: np.full((n, m), np.nan) for k in DENSITY_KINDS}
    trunc = {"L32": np.full(m, np.nan), "P42": np.full(m, np.nan)}
    for k, r in enumerate(r_list):
        if c * r >= MIN_BALL_CELLS * h:
            dens["L32"][:, k], trunc["L32"][k] = _cylinder(traj, centers, r, tl, slab)
        if r >= MIN_BALL_CELLS * h and r * r / math.e >= tl.tau_cut:
            dens["P41_grad"][:, k], dens["P41_L2"][:, k] = _grad(traj, centers, r, tl)
        dens["P42"][:, k], trunc["P42"][k] = _supercrit(traj, centers, r, K, tl)
    return dens, trunc


def _finest(col: np.ndarray) -> float:
    """Largest value in the last radius column that holds any finite entry."""
    ok = np.flatnonzero(np.isfinite(col).any(axis=0))
    return float(np.nanmax(col[:, ok[-1]])) if len(ok) else 0.0


def cylinder_density(traj: Trajectory, a, r: float, omega, slab: str = "scaled",
                     resolve_nodes: float = RESOLVE_NODES):
    """``r^{4/(p-1)-N} int int |u|^{p+1}`` over ``B_{c r}(a)`` times the time slab.

    ``c = sqrt(N/(2 pi e))``.  Returns ``(density, truncated_share)``; scalar
    for scalar ``a``.
    """
    tl = _timeline(traj, omega, resolve_nodes)
    v, tr = _cylinder(traj, _centers(traj, a), r, tl, slab)
    return (float(v[0]) if np.ndim(a) == 0 else v), tr


def grad_density(traj: Trajectory, a, r: float, omega, resolve_nodes: float = RESOLVE_NODES):
    """Scaled ``int int |grad u|^2`` and ``int int u^2`` over ``B_r(a) x (omega - r^2, omega - r^2/e)``."""
    tl = _timeline(traj, omega, resolve_nodes)
    g, s = _grad(traj, _centers(traj, a), r, tl)
    if np.ndim(a) == 0:
        return float(g[0]), float(s[0])
    return g, s


def supercrit_density(traj: Trajectory, a, r: float, K: float, omega,
                      resolve_nodes: float = RESOLVE_NODES):
    """``r^{4/(p-1)-N} int int (|grad u|^2 + |u|^{p+1})`` over ``B_{K r}(a) x (omega - 9r^2, omega - 4r^2)``."""
    tl = _timeline(traj, omega, resolve_nodes)
    v, tr = _supercrit(traj, _centers(traj, a), r, K, tl)
    if tr > 0.0:
        raise ValueError(f"slab (omega - 9r^2, omega - 4r^2) reaches the unresolved tip for r={r:.3g}")
    return float(v[0]) if np.ndim(a) == 0 else v


def local_energy_criterion(traj: Trajectory, a: float, omega, s0: float, eps1: float | None = None) -> dict:
    """Local energy of the rescaled frame at ``s0`` against ``eps1`` (default half the flat value)."""
    p = traj.p
    e1 = 0.5 * flat_local_energy(p, traj.grid.N) if eps1 is None else eps1
    val = local_energy(rescale(traj, a, omega, s0), p)
    return {"value": val, "eps1": e1, "regular": bool(val <= e1)}


# ------------------------------------------------------------------ scales

def default_r_list(traj: Trajectory, omega, K: float = 2.0, n_scales: int = 8,
                   resolve_nodes: float = RESOLVE_NODES) -> np.ndarray:
    """Radii ``r_0 2^{-k}`` admissible for the supercritical density.

    ``r_0`` keeps ``omega - 9 r_0^2`` after the first snapshot and ``B_{K r_0}``
    inside the domain; the smallest radius keeps the slab
    ``(omega - 9r^2, omega - 4r^2)`` inside the resolved window and ``B_{K r}``
    at least four nodes across.  The other densities are recorded as NaN at
    radii where their smaller balls or later slabs are not admissible.
    """
    tl = _timeline(traj, omega, resolve_nodes)
    g = traj.grid
    spec = g.spec
    width = spec.R - spec.R0
    r_max = min(math.sqrt(tl.tau[0] / 9.0) * (1.0 - 1e-9), width / (2.0 * K))
    r_min = max(math.sqrt(tl.tau_cut / 4.0), MIN_BALL_CELLS * g.h / K)
    if r_max < r_min:
        raise ValueError(f"no admissible radius: r_max={r_max:.3g} < r_min={r_min:.3g}")
    radii = [r_max]
    while len(radii) < n_scales and radii[-1] / 2.0 >= r_min:
        radii.append(radii[-1] / 2.0)
    return np.array(radii)


def _cal_trajectory(traj: Trajectory, omega, r_list: np.ndarray) -> tuple[Trajectory, float]:
    """Reaction-free run from the same datum, snapshotted across every slab."""
    om = omega.omega if isinstance(omega, OmegaEstimate) else float(omega)
    t_end = float(traj.ledger.t[-1])
    om_cal = min(om, t_end) if traj.stop is not StopReason.BLOWUP else om
    tau_hi = 9.0 * r_list[0] ** 2
    tau_lo = r_list[-1] ** 2 / math.e
    n = int(math.ceil(math.log(tau_hi / tau_lo) / 0.05)) + 1
    taus = np.geomspace(tau_hi * (1.0 + 1e-9), tau_lo, n)
    times = om_cal - taus
    times = times[times > 0.0]
    prm = ModelParams(traj.p, traj.grid, reaction_on=False, diffusion_on=traj.params.diffusion_on)
    cfg = replace(traj.cfg, t_max=om_cal, decay_factor=1e-300)
    cal = run(traj.u0, cfg, prm, snapshot_times=times)
    return cal, om_cal


def _ball_volume(N: int, radius: float) -> float:
    return sphere_area(N) * radius ** N / N


def _power_integral(lo: float, hi: float, e: float) -> float:
    """``int_lo^hi s^{-e} ds``."""
    if abs(e - 1.0) < 1e-12:
        return math.log(hi / lo)
    return (hi ** (1.0 - e) - lo ** (1.0 - e)) / (1.0 - e)


def flat_densities(p: float, N: int, K: float = 2.0, slab: str = "scaled") -> dict:
    """Densities of ``kappa (omega - t)^{-1/(p-1)}`` on all of space; independent of ``r``."""
    k = kappa(p)
    e = (p + 1.0) / (p - 1.0)
    c = cylinder_radius_factor(N)
    lo = 1.0 / math.e if slab == "scaled" else 0.0
    L32 = _ball_volume(N, c) * k ** (p + 1.0) * (_power_integral(lo, 1.0, e) if lo > 0 else math.inf)
    L2 = _ball_volume(N, 1.0) * k * k * _power_integral(1.0 / math.e, 1.0, 2.0 / (p - 1.0))
    P42 = _ball_volume(N, K) * k ** (p + 1.0) * _power_integral(4.0, 9.0, e)
    return {"L32": L32, "P41_grad": 0.0, "P41_L2": L2, "P42": P42}


def calibrate_thresholds(traj: Trajectory, omega, cfg: RegularityConfig, r_list=None) -> dict:
    """Fill unset thresholds from the reaction-free companion run.

    In ``"bounded"`` mode each threshold is ``calibration_factor`` times the
    companion run's largest density over all centres at the smallest
    admissible radius, where bounded fields are smallest; a bounded run is
    then never flagged at that scale.
    """
    r_list = np.asarray(r_list if r_list is not None else
                        (cfg.r_list or default_r_list(traj, omega, cfg.K, cfg.n_scales, cfg.resolve_nodes)))
    out = {"eps0": cfg.eps0, "eps1": cfg.eps1, "eps3": cfg.eps3, "eps4": cfg.eps4}
    if all(v is not None for v in out.values()):
        return out
    if cfg.calibration == "flat":
        fl = flat_densities(traj.p, traj.grid.N, cfg.K)
        mx = {"L32": fl["L32"], "P41": fl["P41_L2"], "P42": fl["P42"]}
        f = cfg.flat_fraction
    else:
        cal, om_cal = _cal_trajectory(traj, omega, r_list)
        tl = _timeline(cal, om_cal, cfg.resolve_nodes)
        tl = _Timeline(tl.tau, tl.snaps, 0.0)
        dens, _ = _scan(cal, traj.grid.nodes, r_list, tl, cfg.K, "scaled")
        mx = {"L32": _finest(dens["L32"]), "P41": _finest(dens["P41_grad"] + dens["P41_L2"]),
              "P42": _finest(dens["P42"])}
        f = cfg.calibration_factor
    tiny = np.finfo(float).tiny
    if out["eps0"] is None:
        out["eps0"] = max(f * mx["L32"], tiny)
    if out["eps3"] is None:
        out["eps3"] = max(f * mx["P41"], tiny)
    if out["eps4"] is None:
        out["eps4"] = max(f * mx["P42"], tiny)
    if out["eps1"] is None:
        out["eps1"] = 0.5 * flat_local_energy(traj.p, traj.grid.N)
    return out


# ------------------------------------------------------------- set extraction

@dataclass(frozen=True, eq=False)
class SingularSetMap:
    """Densities per (centre, radius) and the flagged blowup set.

    On radial grids each centre stands for the sphere of that radius.
    """

    centers: np.ndarray
    r_list: np.ndarray
    densities: dict
    truncation: dict
    flags_by_scale: np.ndarray
    flags: np.ndarray
    eps: dict
    criterion: str
    N: int
    p: float
    K: float
    radial: bool
    edges: np.ndarray = field(repr=False)
    h: float = 0.0

    @property
    def empty(self) -> bool:
        return not bool(self.flags.any())

    def flagged_centers(self) -> np.ndarray:
        return self.centers[self.flags]

    def with_threshold(self, eps4: float) -> np.ndarray:
        """Flags for another P42 threshold (raising it can only shrink the set)."""
        return np.all(self.densities["P42"] >= eps4, axis=1)

    def bands(self) -> list:
        """Flagged set as merged coordinate intervals of dual cells."""
        return self._bands(self.flags)

    def bands_at(self, k: int) -> list:
        """Cells flagged at the ``k``-th radius alone."""
        return self._bands(self.flags_by_scale[:, k])

    def _bands(self, mask) -> list:
        out = []
        for j in np.flatnonzero(mask):
            lo, hi = float(self.edges[j]), float(self.edges[j + 1])
            if out and abs(out[-1][1] - lo) <= 1e-12 * max(1.0, abs(lo)):
                out[-1][1] = hi
            else:
                out.append([lo, hi])
        return [tuple(b) for b in out]

    def table(self) -> list:
        rows = []
        for i, a in enumerate(self.centers):
            for k, r in enumerate(self.r_list):
                rows.append({"a": float(a), "r": float(r),
                             "density_L32": float(self.densities["L32"][i, k]),
                             "density_P41_grad": float(self.densities["P41_grad"][i, k]),
                             "density_P41_L2": float(self.densities["P41_L2"][i, k]),
                             "density_P42": float(self.densities["P42"][i, k]),
                             "flagged": bool(self.flags[i])})
        return rows


def extract_singular_set(traj: Trajectory, omega, cfg: RegularityConfig = RegularityConfig()) -> SingularSetMap:
    """Flag centres whose P42 density reaches ``eps4`` at every radius of ``r_list``."""
    if traj.stop is StopReason.BLOWUP and traj.ledger.umax[-1] < 1e5:
        raise ValueError(f"blowup run only reached |u|_inf={traj.ledger.umax[-1]:.3g} < 1e5")
    r_list = np.asarray(cfg.r_list) if cfg.r_list is not None else \
        default_r_list(traj, omega, cfg.K, cfg.n_scales, cfg.resolve_nodes)
    eps = calibrate_thresholds(traj, omega, cfg, r_list)
    tl = _timeline(traj, omega, cfg.resolve_nodes)
    g = traj.grid
    centers = np.array(g.nodes)
    dens, trunc = _scan(traj, centers, r_list, tl, cfg.K, cfg.cylinder_slab)
    by_scale = dens["P42"] >= eps["eps4"]
    flags = by_scale.all(axis=1)
    edges = np.concatenate([[g.spec.R0], g.faces, [g.spec.R]])
    return SingularSetMap(centers, r_list, dens, trunc, by_scale, flags, eps, "P42",
                          g.N, traj.p, cfg.K, g.radial, edges, g.h)


# --------------------------------------------------------------- dimension

def _merge(bands):
    out = []
    for lo, hi in sorted(bands):
        if out and lo <= out[-1][1]:
            out[-1][1] = max(out[-1][1], hi)
        else:
            out.append([lo, hi])
    return np.array(out, dtype=float).reshape(-1, 2)


def _radial_slices(N: int, n: int, step: float, offset: float):
    """Squared distances to the origin of lattice sites, one slab of the first axis at a time.

    Sites are ``step * (k + offset)`` with ``k`` in ``[0, n)`` on every axis.
    """
    ax = (np.arange(n) + offset) * step
    rest = sum(np.meshgrid(*([ax * ax] * (N - 1)), indexing="ij")) if N > 1 else np.zeros(())
    for x in ax:
        yield x * x + rest


def box_count(bands, eps: float, N: int, radial: bool, max_cells: int = 200_000_000) -> int:
    """Lattice cubes of side ``eps`` (anchored at the origin) meeting the flagged set.

    ``bands`` are coordinate intervals on the line, or radial intervals
    whose N-dimensional shells make up the set.
    """
    B = _merge(bands)
    if len(B) == 0:
        return 0
    if not radial:
        i0 = np.floor(B[:, 0] / eps).astype(np.int64)
        i1 = np.ceil(B[:, 1] / eps).astype(np.int64)
        cells = set()
        for a, b in zip(i0, i1):
            cells.update(range(int(a), int(max(b, a + 1))))
        return len(cells)
    n = int(math.ceil(float(B[:, 1].max()) / eps))
    if n ** N > max_cells:
        raise ValueError(f"box size {eps:.3g} needs {n ** N} cells in one orthant")
    lo2, hi2 = B[:, 0] ** 2, B[:, 1] ** 2
    total = 0
    near = _radial_slices(N, n, eps, 0.0)
    far = _radial_slices(N, n, eps, 1.0)
    for dmin2, dmax2 in zip(near, far):
        hit = np.zeros(np.shape(dmin2), dtype=bool)
        for l2, h2 in zip(lo2, hi2):
            hit |= (dmin2 <= h2) & (dmax2 >= l2)
        total += int(hit.sum())
    return total * 2 ** N


def _radial_packing(bands, rad: float, N: int) -> int:
    """Sites of the lattice ``2 rad Z^N`` inside the shells.

    Balls of radius ``rad`` around distinct sites are disjoint and every
    point of a shell thicker than the lattice diagonal lies within
    ``5 rad`` of some site, so this is a Vitali subfamily of the cover.
    """
    B = _merge(bands)
    step = 2.0 * rad
    n = int(math.ceil(float(B[:, 1].max()) / step)) + 1
    lo2, hi2 = B[:, 0] ** 2, B[:, 1] ** 2
    total = 0.0
    ax = np.arange(n)
    mult = np.where(ax == 0, 1, 2)  # sites off an axis plane appear in both half-spaces
    wr = np.ones(()) if N == 1 else np.prod(np.meshgrid(*([mult] * (N - 1)), indexing="ij"), axis=0)
    for x, d2 in zip(ax, _radial_slices(N, n, step, 0.0)):
        inside = np.zeros(np.shape(d2), dtype=bool)
        for l2, h2 in zip(lo2, hi2):
            inside |= (d2 >= l2) & (d2 <= h2)
        total += mult[x] * float(np.sum(wr * inside))
    return int(total)


def _vitali_count(points: np.ndarray, rad: float) -> int:
    """Greedy disjoint subfamily of equal balls on the line, in index order."""
    count = 0
    last = -math.inf
    for x in np.sort(points):
        if x - last >= 2.0 * rad:
            count += 1
            last = x
    return count


@dataclass(frozen=True)
class DimensionReport:
    empty: bool
    slope: float
    box_sizes: list
    box_counts: list
    covering: dict
    bound: float
    note: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def covering_dimension(setmap: SingularSetMap, q_list=None, n_sizes: int = 6) -> DimensionReport:
    """Box-counting slope of the flagged set plus covering sums per ``q``.

    Box sizes run geometrically (ratio sqrt 2) from four times the flagged
    thickness (at least two cells) up to a quarter of the set's extent.
    Covering sums are ``n_r (5 K r)^{N - 4/(p-1) - 2q/(q-1)}`` with ``n_r`` the
    size of a disjoint subfamily of balls ``B_{K r}`` centred on the set
    flagged at scale ``r`` (greedy in coordinate order on the line, a
    lattice packing for radial sets).
    """
    q_list = tuple(q_list or (2, 4, 8, 16))
    N, p, K = setmap.N, setmap.p, setmap.K
    bound = N - 2.0 - 4.0 / (p - 1.0)
    if setmap.empty:
        return DimensionReport(True, -math.inf, [], [], {}, bound, "empty; dimension -inf by convention")
    B = _merge(setmap.bands())
    thick = float((B[:, 1] - B[:, 0]).max())
    extent = float(B[:, 1].max()) if setmap.radial else float(B[:, 1].max() - B[:, 0].min())
    e_lo = max(4.0 * thick, 2.0 * setmap.h)
    e_hi = max(extent / 4.0, 4.0 * e_lo) if setmap.radial else max(extent, 4.0 * e_lo)
    sizes = np.geomspace(e_lo, e_hi, n_sizes)
    counts = [box_count(B, float(e), N if setmap.radial else 1, setmap.radial) for e in sizes]
    slope = float(np.polyfit(np.log(1.0 / sizes), np.log(counts), 1)[0])
    covering = {}
    for q in q_list:
        expo = N - 4.0 / (p - 1.0) - 2.0 * q / (q - 1.0)
        sums = []
        for k, r in enumerate(setmap.r_list):
            rad = K * r
            sel = setmap.centers[setmap.flags_by_scale[:, k]]
            if len(sel) == 0:
                sums.append(0.0)
                continue
            if setmap.radial:
                band = _merge(setmap.bands_at(k))
                n_r = _radial_packing(band, rad, N)
            else:
                n_r = _vitali_count(sel, rad)
            sums.append(n_r * (5.0 * K * r) ** expo)
        covering[str(q)] = {"exponent": expo, "r": setmap.r_list.tolist(), "sums": sums}
    return DimensionReport(False, slope, sizes.tolist(), counts, covering, bound)


class SingularSetScanner(BaseEstimator):
    """Estimator wrapper around :func:`extract_singular_set` and :func:`covering_dimension`.

    ``fit(traj)`` sets ``setmap_``, ``dimension_`` and ``eps_``.
    """

    def __init__(self, eps4=None, K=2.0, r_list=None, n_scales=8, q_list=(2, 4, 8, 16),
                 cylinder_slab="scaled", calibration="flat", calibration_factor=10.0,
                 flat_fraction=0.5, omega=None):
        self.eps4 = eps4
        self.K = K
        self.r_list = r_list
        self.n_scales = n_scales
        self.q_list = q_list
        self.cylinder_slab = cylinder_slab
        self.calibration = calibration
        self.calibration_factor = calibration_factor
        self.flat_fraction = flat_fraction
        self.omega = omega

    def fit(self, traj: Trajectory, y=None):
        from .integrator import estimate_omega

        om = self.omega if self.omega is not None else estimate_omega(traj)
        cfg = RegularityConfig(eps4=self.eps4, K=self.K,
                               r_list=None if self.r_list is None else tuple(self.r_list),
                               n_scales=self.n_scales, q_list=tuple(self.q_list),
                               cylinder_slab=self.cylinder_slab,
                               calibration=self.calibration,
                               calibration_factor=self.calibration_factor,
                               flat_fraction=self.flat_fraction)
        self.omega_ = om
        self.setmap_ = extract_singular_set(traj, om, cfg)
        self.eps_ = self.setmap_.eps
        self.dimension_ = covering_dimension(self.setmap_, self.q_list)
        return self

    def predict(self, X=None):
        """Flags of the fitted set (one per centre)."""
        return self.setmap_.flags
