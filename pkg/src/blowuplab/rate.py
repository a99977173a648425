"""Type I / Type II classification of the blowup rate."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
import math

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .integrator import RESOLVE_NODES, OmegaEstimate, StopReason, Trajectory, estimate_omega, kappa

__all__ = ["RateCurve", "RateConfig", "RateReport", "rate_curve", "classify_type", "RateClassifier"]

TYPE_CLASSES = ("TypeI", "TypeII", "Undetermined")


@dataclass(frozen=True, eq=False)
class RateCurve:
    """``g(t) = (omega - t)^{1/(p-1)} |u(t)|_inf`` over the ledger.

    ``stop`` marks the end of the resolved window; classification uses the
    decade of ``omega - t`` ending there.
    """

    t: np.ndarray
    tau: np.ndarray
    g: np.ndarray
    p: float
    stop: int

    def __len__(self):
        return len(self.t)

    @classmethod
    def from_series(cls, t, tau, umax, p: float, stop: int | None = None) -> "RateCurve":
        tau = np.asarray(tau, dtype=float)
        umax = np.asarray(umax, dtype=float)
        if np.any(tau <= 0.0):
            raise ValueError("omega lies inside the ledger range")
        if not np.any(umax > 0.0):
            raise ValueError("empty curve: the trajectory never leaves zero")
        g = tau ** (1.0 / (p - 1.0)) * umax
        return cls(np.asarray(t, dtype=float), tau, g, float(p), len(tau) if stop is None else int(stop))

    def window(self) -> np.ndarray:
        """Indices of the final resolved decade of ``omega - t``."""
        tau = self.tau[: self.stop]
        return np.flatnonzero(tau <= 10.0 * tau[-1])

    def as_table(self) -> dict:
        return {"t": self.t, "omega_minus_t": self.tau, "g": self.g}


def rate_curve(traj: Trajectory, omega, resolve_nodes: float = RESOLVE_NODES) -> RateCurve:
    """Scaled sup-norm along the trajectory.

    ``omega`` is an :class:`OmegaEstimate` or a float.  It must lie beyond
    the resolved window; ledger entries in the unresolved tip at or past
    ``omega`` (possible when ``omega`` is shifted by its uncertainty) are
    dropped from the curve.
    """
    if traj.stop is not StopReason.BLOWUP:
        raise ValueError(f"rate curve needs a blowup trajectory, got {traj.stop.value}")
    tail = omega.tail if isinstance(omega, OmegaEstimate) else float(omega) - float(traj.ledger.t[-1])
    tau = traj.time_to_blowup(tail)
    stop = max(traj.resolved_stop(resolve_nodes), 2)
    if not tau[stop - 1] > 0.0:
        raise ValueError(f"omega {omega} lies inside the resolved ledger range")
    keep = int(np.searchsorted(-tau, 0.0, side="left"))
    led = traj.ledger
    return RateCurve.from_series(led.t[:keep], tau[:keep], led.umax[:keep], traj.p, min(stop, keep))


@dataclass(frozen=True)
class RateConfig:
    typeI_band: float = 0.2
    typeII_slope: float = 0.05
    min_entries: int = 20

    def __post_init__(self):
        if not (self.typeI_band > 0.0 and self.typeII_slope > 0.0):
            raise ValueError("rate thresholds must be positive")
        if self.min_entries < 3:
            raise ValueError("min_entries must be at least 3")


@dataclass(frozen=True)
class RateReport:
    type_class: str
    plateau: float
    slope: float
    oscillation: float
    sup_g: float
    kappa: float
    window: tuple
    n_window: int
    diagnostics: dict = field(default_factory=dict)

    @property
    def plateau_error(self) -> float:
        """Relative deviation of the plateau from ``kappa``."""
        return abs(self.plateau / self.kappa - 1.0)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["window"] = list(self.window)
        d["plateau_error"] = self.plateau_error
        return d


def classify_type(curve: RateCurve, cfg: RateConfig = RateConfig()) -> RateReport:
    """Classify the final resolved decade of the rate curve.

    The slope is the least-squares slope of ``log g`` per e-fold of
    ``omega - t`` (positive when ``g`` grows towards blowup); the plateau is
    the mean of ``g`` over the window, uniform in ``log(omega - t)``.
    """
    idx = curve.window()
    if len(idx) < cfg.min_entries:
        raise ValueError(f"rate window holds {len(idx)} entries; need {cfg.min_entries}")
    sig = -np.log(curve.tau[idx])
    g = curve.g[idx]
    slope = float(np.polyfit(sig, np.log(g), 1)[0])
    span = sig[-1] - sig[0]
    plateau = float(np.trapezoid(g, sig) / span) if span > 0 else float(g.mean())
    osc = float((g.max() - g.min()) / plateau)
    if slope >= cfg.typeII_slope:
        cls = "TypeII"
    elif osc < cfg.typeI_band and abs(slope) < cfg.typeII_slope:
        cls = "TypeI"
    else:
        cls = "Undetermined"
    return RateReport(cls, plateau, slope, osc, float(curve.g[: curve.stop].max()), kappa(curve.p),
                      (float(curve.tau[idx[0]]), float(curve.tau[idx[-1]])), int(len(idx)))


class RateClassifier(ClassifierMixin, BaseEstimator):
    """Estimator wrapper: ``fit`` on a list of blowup trajectories, ``predict`` their rate class.

    Parameters
    ----------
    typeI_band, typeII_slope : float
        Classification thresholds.
    resolve_nodes : float
        Resolution criterion for the classification window.
    """

    def __init__(self, typeI_band=0.2, typeII_slope=0.05, resolve_nodes=RESOLVE_NODES):
        self.typeI_band = typeI_band
        self.typeII_slope = typeII_slope
        self.resolve_nodes = resolve_nodes

    def _report(self, traj):
        curve = rate_curve(traj, estimate_omega(traj, resolve_nodes=self.resolve_nodes), self.resolve_nodes)
        return classify_type(curve, RateConfig(self.typeI_band, self.typeII_slope))

    def fit(self, X, y=None):
        self.classes_ = np.array(TYPE_CLASSES)
        self.reports_ = [self._report(tr) for tr in X]
        return self

    def predict(self, X):
        return np.array([self._report(tr).type_class for tr in X])
