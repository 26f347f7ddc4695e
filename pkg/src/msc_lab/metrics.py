"""Quantitative verdicts on simulated trajectories.

All functions are pure and take the recorded samples of a
:class:`~msc_lab.sim.Trajectory` (or plain arrays where noted).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import simpson

from .scaling import ScalingSet
from .spectral import p_matrix

__all__ = [
    "MetricError",
    "MetricResult",
    "MetricReport",
    "scaled_states",
    "disagreement",
    "virtual_point_series",
    "settling_time",
    "conservation_drift",
    "pe_window",
    "PEReport",
    "estimate_error",
    "reference_tracking",
    "TrackingReport",
    "radius_spread",
    "sliding_error",
]

CONSERVATIVE_VARIANTS = ("basic", "nonlinear")


class MetricError(ValueError):
    pass


def _x(traj_or_x) -> np.ndarray:
    X = traj_or_x.x if hasattr(traj_or_x, "block") else np.asarray(traj_or_x, dtype=float)
    return X[None] if X.ndim == 2 else X


def scaled_states(traj_or_x, ss: ScalingSet) -> np.ndarray:
    """S_i x_i(t) as a (samples, n, d) array."""
    X = _x(traj_or_x)
    if X.shape[1:] != (ss.n, ss.d):
        raise MetricError(f"agent block has shape {X.shape[1:]}, scaling set expects {(ss.n, ss.d)}")
    return np.einsum("nij,tnj->tni", ss.stack, X)


def disagreement(traj_or_x, ss: ScalingSet) -> np.ndarray:
    """D(t) = max_{i<j} ||S_i x_i(t) - S_j x_j(t)||_2."""
    SX = scaled_states(traj_or_x, ss)
    diff = SX[:, :, None, :] - SX[:, None, :, :]
    return np.sqrt((diff ** 2).sum(axis=-1)).max(axis=(1, 2))


def virtual_point_series(traj_or_x, ss: ScalingSet) -> np.ndarray:
    """x0(t) = P sum_i sign(S_i) x_i(t), one row per sample."""
    X = _x(traj_or_x)
    return np.einsum("ij,tj->ti", p_matrix(ss), np.einsum("n,tnj->tj", ss.signs, X))


def settling_time(times, states, reference=None, fraction: float = 0.05, radius: float | None = None,
                  hold_fraction: float = 0.1, diverged: bool = False) -> float | None:
    """First time after which the stacked state stays inside a ball around ``reference``.

    The ball radius is ``radius`` when given, otherwise ``fraction * ||x(0) - x_inf||``.
    Without a reference the last sample is used, and the state must have
    entered the ball before the final ``hold_fraction`` of the horizon.
    Returns None for diverged runs or when the state never settles.
    """
    if diverged:
        return None
    times = np.asarray(times, dtype=float)
    Y = np.asarray(states, dtype=float).reshape(len(times), -1)
    use_last = reference is None
    ref = Y[-1] if use_last else np.asarray(reference, dtype=float).reshape(-1)
    err = np.linalg.norm(Y - ref, axis=1)
    thr = radius if radius is not None else fraction * err[0]
    outside = np.nonzero(err >= thr)[0]
    if outside.size == 0:
        return float(times[0])
    k = outside[-1] + 1
    if k >= len(times):
        return None
    t = float(times[k])
    if use_last and t > times[-1] - hold_fraction * (times[-1] - times[0]):
        return None
    return t


def conservation_drift(traj, ss: ScalingSet) -> float:
    """max_t ||x0(t) - x0(0)||_inf for the conservative protocols."""
    variant = traj.metadata.get("protocol", {}).get("variant")
    if variant is not None and variant not in CONSERVATIVE_VARIANTS:
        raise MetricError(f"the virtual point is only conserved by {CONSERVATIVE_VARIANTS}, not {variant!r}")
    x0 = virtual_point_series(traj, ss)
    return float(np.abs(x0 - x0[0]).max())


@dataclass(frozen=True)
class PEReport:
    mu2_min: float
    mu1_max: float
    window: float
    threshold: float

    @property
    def persistently_exciting(self) -> bool:
        return self.mu2_min > self.threshold


def pe_window(phi: Callable[[float], np.ndarray], T_window: float, horizon: float, step: float | None = None,
              starts: int = 200, form: str = "outer") -> PEReport:
    """Extremal eigenvalues of int_t^{t+T} phi phi^T over window starts in [0, horizon - T].

    Integrals use composite Simpson on a grid no coarser than T/1000.
    ``form="inner"`` uses phi^T phi instead. PE holds when
    ``mu2_min > 1e-6 * T_window``.
    """
    if T_window <= 0:
        raise MetricError("window length must be positive")
    if form not in ("outer", "inner"):
        raise MetricError(f"unknown Gram form {form!r}")
    step = min(step or T_window / 1000, T_window / 1000)
    m = int(math.ceil(T_window / step))
    m += m % 2  # even number of intervals for Simpson
    last = max(horizon - T_window, 0.0)
    mu2, mu1 = math.inf, -math.inf
    for t0 in np.linspace(0.0, last, max(starts, 1) if last > 0 else 1):
        ts = np.linspace(t0, t0 + T_window, m + 1)
        P = np.array([np.atleast_2d(phi(t)) for t in ts])
        G = np.einsum("tij,tkj->tik", P, P) if form == "outer" else np.einsum("tji,tjk->tik", P, P)
        W = simpson(G, x=ts, axis=0)
        ev = np.linalg.eigvalsh(0.5 * (W + W.T))
        mu2, mu1 = min(mu2, ev[0]), max(mu1, ev[-1])
    return PEReport(float(mu2), float(mu1), float(T_window), 1e-6 * T_window)


def estimate_error(traj, theta, relative: bool = False) -> np.ndarray:
    """Per-agent ||theta_hat_i(t) - theta_i|| as a (samples, n) array."""
    if "theta_hat" not in traj.layout:
        raise MetricError("trajectory has no parameter estimates; estimate_error needs the adaptive protocol")
    theta = np.asarray(theta, dtype=float)
    err = np.linalg.norm(traj.block("theta_hat") - theta[None], axis=2)
    if relative:
        err = err / np.linalg.norm(theta, axis=1)[None]
    return err


@dataclass(frozen=True, eq=False)
class TrackingReport:
    times: np.ndarray
    reference: np.ndarray  # (samples, d)
    residual: np.ndarray  # max_i ||S_i x_i - r||
    defect: np.ndarray  # ||r' - P A P^{-1} r||
    relative_defect: np.ndarray

    def after(self, t: float) -> tuple[float, float]:
        """Max residual and max relative defect over samples with time >= t."""
        k = self.times >= t
        return float(self.residual[k].max()), float(self.relative_defect[k].max())


def reference_tracking(traj, ss: ScalingSet, A_ref, samples_per_period: int = 10) -> TrackingReport:
    """Distance of S_i x_i(t) from their mean r(t), and how well r follows r' = P A P^{-1} r.

    The derivative of r is estimated with second-order finite differences on
    the recorded grid, which must resolve the fastest mode of A with at
    least ``samples_per_period`` samples.
    """
    A_ref = np.asarray(A_ref, dtype=float)
    times = np.asarray(traj.times, dtype=float)
    if len(times) < 3:
        raise MetricError("need at least three samples to difference the reference")
    dt = float(np.max(np.diff(times)))
    rate = float(np.abs(np.linalg.eigvals(A_ref)).max())
    if rate > 0 and dt > 2 * math.pi / rate / samples_per_period:
        raise MetricError(
            f"record spacing {dt:g}s is too coarse: need {samples_per_period} samples per period "
            f"{2 * math.pi / rate:.3g}s; reduce the stride"
        )
    SX = scaled_states(traj, ss)
    r = SX.mean(axis=1)
    residual = np.linalg.norm(SX - r[:, None, :], axis=2).max(axis=1)
    P = p_matrix(ss)
    M = P @ A_ref @ np.linalg.inv(P)
    rdot = np.gradient(r, times, axis=0, edge_order=2)
    defect = np.linalg.norm(rdot - r @ M.T, axis=1)
    scale = np.maximum(np.linalg.norm(r, axis=1), 1.0)
    return TrackingReport(times, r, residual, defect, defect / scale)


def radius_spread(traj, ss: ScalingSet, t_from: float) -> float:
    """Relative spread (max - min) / mean of the mean radius ||S_i x_i|| over t >= t_from."""
    SX = scaled_states(traj, ss)
    k = np.asarray(traj.times) >= t_from
    rad = np.linalg.norm(SX[k], axis=2).mean(axis=1)
    return float((rad.max() - rad.min()) / rad.mean())


def sliding_error(traj) -> np.ndarray:
    """e_i(t) for the sliding-mode variants as a (samples, n, d) array.

    e = z - x with full input; e = z - (xhat - eta) with observers.
    """
    if "z" not in traj.layout:
        raise MetricError("trajectory has no reference state z")
    if "eta" in traj.layout:
        return traj.block("z") - (traj.block("xhat") - traj.block("eta"))
    return traj.block("z") - traj.x


# -- reports ---------------------------------------------------------------------

_OPS = {
    "<=": lambda v, tol: v <= tol,
    ">=": lambda v, tol: v >= tol,
    "<": lambda v, tol: v < tol,
    ">": lambda v, tol: v > tol,
    "==": lambda v, tol: v == tol,
}


@dataclass(frozen=True)
class MetricResult:
    name: str
    value: float | bool | None
    op: str
    tolerance: float | bool | None
    window: str
    passed: bool


@dataclass
class MetricReport:
    scenario: str
    results: list[MetricResult] = field(default_factory=list)
    info: dict = field(default_factory=dict)

    def add(self, name: str, value, op: str, tolerance, window: str = "") -> MetricResult:
        if op not in _OPS:
            raise MetricError(f"unknown comparison {op!r}")
        if value is None or (isinstance(value, float) and math.isnan(value)):
            passed = False
        else:
            passed = bool(_OPS[op](value, tolerance))
        res = MetricResult(name, _plain(value), op, _plain(tolerance), window, passed)
        self.results.append(res)
        return res

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "passed": self.passed,
            "results": [asdict(r) for r in self.results],
            "info": self.info,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def format(self) -> str:
        lines = [f"scenario {self.scenario}"]
        for r in self.results:
            flag = "PASS" if r.passed else "FAIL"
            win = f" [{r.window}]" if r.window else ""
            lines.append(f"  {flag} {r.name} = {_fmt(r.value)} {r.op} {_fmt(r.tolerance)}{win}")
        lines.append("  overall: " + ("PASS" if self.passed else "FAIL"))
        return "\n".join(lines)


def _plain(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def _fmt(v) -> str:
    return f"{v:.6g}" if isinstance(v, float) else str(v)
