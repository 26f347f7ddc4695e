"""Evaluate the tolerances a scenario declares.

Each entry of ``scenario.checks`` names a metric, a comparison ``op`` and a
tolerance ``tol``; extra keys are metric parameters. Spectral metrics need
no trajectory; the rest are computed from one simulation run.
"""

from __future__ import annotations

import math

import numpy as np

from . import metrics as M
from .protocols import FiniteTimeMSC, virtual_consensus_point
from .scaling import msc_targets, rotation_matrix
from .scenarios import Instance
from .sim import Trajectory, integrate
from .spectral import analyze, schur_eigenvalues

__all__ = ["SPECTRAL_METRICS", "TRAJECTORY_METRICS", "evaluate", "run_and_check", "needs_trajectory"]


def _spectrum(inst: Instance):
    return analyze(inst.graph, inst.scalings)


def _spectrum_match(inst, traj, p):
    ev = np.sort(np.real(_spectrum(inst).eigenvalues))
    exp = np.sort(np.asarray(p["expected"], dtype=float))
    if ev.shape != exp.shape:
        return math.inf
    return float(np.abs(ev - exp).max())


def _spectrum_interval(inst, traj, p):
    lo, hi = p["interval"]
    ev = np.asarray(_spectrum(inst).eigenvalues)
    nz = ev[np.abs(ev) > 1e-8]
    return bool(np.all(np.abs(nz.imag) < 1e-8) and np.all((nz.real >= lo - 1e-12) & (nz.real <= hi + 1e-12)))


def _theta_c_hurwitz(inst, traj, p):
    rep = analyze(inst.graph, inst.scalings, A=np.asarray(p["A"], dtype=float), c=p.get("c"))
    return bool(rep.checks.get("theta_c_hurwitz", False))


def _limit(inst: Instance) -> np.ndarray:
    x0 = virtual_consensus_point(inst.scalings, inst.y0.block("x"))
    return msc_targets(inst.scalings, x0)


def _endpoint_error(inst, traj, p):
    return float(np.abs(traj.x[-1] - _limit(inst)).max())


def _settling(inst, traj, p):
    ref = _limit(inst) if inst.protocol.variant in M.CONSERVATIVE_VARIANTS else None
    return M.settling_time(traj.times, traj.x, ref, fraction=p.get("fraction", 0.05), radius=p.get("radius"),
                           diverged=traj.diverged)


def _u_inf_max(inst, traj, p):
    proto = inst.protocol
    return float(max(np.abs(proto.control(t, y)).max() for t, y in zip(traj.times, traj.states)))


def _finite_time(inst, traj, p):
    D = M.disagreement(traj, inst.scalings)
    hit = np.nonzero(D <= p.get("level", 1e-9))[0]
    return bool(hit.size and D[hit[0]:].max() <= p.get("stay", 1e-8))


def _est_err(inst, traj, p):
    return float(M.estimate_error(traj, inst.protocol.theta, relative=True)[-1].max())


def _pe(inst, traj, p):
    phi = inst.protocol.uncertainty.regressor
    T = float(traj.times[-1])
    win = float(p.get("window", 2 * math.pi))
    for i in range(inst.scalings.n):
        rep = M.pe_window(lambda t, i=i: phi(t)[i], win, min(T, p.get("horizon", 50.0)), starts=p.get("starts", 50))
        if not rep.persistently_exciting:
            return False
    return True


def _gains_monotone(inst, traj, p):
    c = traj.block("c")[:, :, 0]
    return bool(np.all(np.diff(c, axis=0) >= -1e-12))


def _gains_decile(inst, traj, p):
    c = traj.block("c")[:, :, 0]
    k = int(0.9 * (len(c) - 1))
    return float((c[-1] - c[k]).max())


def _final_norm(inst, traj, p):
    return float(np.linalg.norm(traj.x[-1]))


def _diverged_or_large(inst, traj, p):
    return bool(traj.diverged or np.linalg.norm(traj.x[-1]) >= p.get("threshold", 1e3))


def _tracking(inst, traj, p, which):
    A = np.asarray(inst.protocol.A)
    rep = M.reference_tracking(traj, inst.scalings, A)
    res, defect = rep.after(p.get("t_from", 10.0))
    return res if which == 0 else defect


def _radius_spread(inst, traj, p):
    T = float(traj.times[-1])
    return M.radius_spread(traj, inst.scalings, T - 0.25 * (T - traj.times[0]))


def _sliding_band(inst, traj, p):
    proto = inst.protocol
    h = traj.metadata["config"]["h"] / traj.metadata.get("substeps", 1)
    e = np.abs(M.sliding_error(traj)).max(axis=(1, 2))
    src = traj.x if "eta" not in traj.layout else traj.block("xhat") - traj.block("eta")
    band = 5 * (proto.beta1 + proto.beta2 * np.abs(src).sum(axis=2).max()) * h
    out = np.nonzero(e > band)[0]
    return bool(out.size == 0 or out[-1] + 1 < len(e))


def _target_error(inst, traj, p):
    return float(np.abs(traj.x[-1][:, :2] - _limit(inst)[:, :2]).max())


def _sixfold(inst, traj, p):
    pts = traj.x[-1][:, :2]
    rot = pts @ rotation_matrix(math.pi / 3).T
    dist = np.linalg.norm(rot[:, None, :] - pts[None, :, :], axis=2)
    return float(dist.min(axis=1).max())


SPECTRAL_METRICS = {
    "spectrum_match": _spectrum_match,
    "spectrum_interval": _spectrum_interval,
    "theta_c_hurwitz": _theta_c_hurwitz,
}

TRAJECTORY_METRICS = {
    "disagreement_final": lambda inst, traj, p: float(M.disagreement(traj, inst.scalings)[-1]),
    "endpoint_error": _endpoint_error,
    "conservation_drift": lambda inst, traj, p: M.conservation_drift(traj, inst.scalings),
    "settling_time": _settling,
    "u_inf_max": _u_inf_max,
    "finite_time_consensus": _finite_time,
    "estimate_error_rel_max": _est_err,
    "pe_certified": _pe,
    "gains_monotone": _gains_monotone,
    "gains_last_decile_variation": _gains_decile,
    "final_norm": _final_norm,
    "diverged": lambda inst, traj, p: bool(traj.diverged),
    "diverged_or_large": _diverged_or_large,
    "tracking_residual": lambda inst, traj, p: _tracking(inst, traj, p, 0),
    "tracking_defect": lambda inst, traj, p: _tracking(inst, traj, p, 1),
    "radius_spread": _radius_spread,
    "sliding_band": _sliding_band,
    "target_error": _target_error,
    "sixfold_symmetry": _sixfold,
}

_RESERVED = {"metric", "op", "tol"}


def needs_trajectory(inst: Instance) -> bool:
    return any(c["metric"] not in SPECTRAL_METRICS for c in inst.scenario.checks)


def _in_band(value, tol) -> bool:
    lo, hi = tol
    return value is not None and lo <= value <= hi


def evaluate(inst: Instance, traj: Trajectory | None) -> M.MetricReport:
    report = M.MetricReport(inst.scenario.name, info={"seed": inst.materialized.get("seed")})
    if traj is not None:
        report.info.update(diverged=traj.diverged, horizon=float(traj.times[-1]))
    for chk in inst.scenario.checks:
        name, op, tol = chk["metric"], chk.get("op", "<="), chk.get("tol")
        params = {k: v for k, v in chk.items() if k not in _RESERVED}
        fn = SPECTRAL_METRICS.get(name) or TRAJECTORY_METRICS.get(name)
        if fn is None:
            report.results.append(M.MetricResult(name, None, op, tol, "unknown metric", False))
            continue
        if traj is None and name in TRAJECTORY_METRICS:
            report.results.append(M.MetricResult(name, None, op, tol, "no trajectory", False))
            continue
        try:
            value = fn(inst, traj, params)
        except (M.MetricError, ValueError) as exc:
            report.results.append(M.MetricResult(name, None, op, tol, f"error: {exc}", False))
            continue
        except (AttributeError, KeyError):
            variant = inst.protocol.variant if inst.protocol is not None else "none"
            report.results.append(M.MetricResult(name, None, op, tol, f"error: not defined for {variant}", False))
            continue
        window = _window(name, params, traj)
        if op == "in":
            report.results.append(M.MetricResult(name, M._plain(value), op, list(tol), window, _in_band(value, tol)))
        else:
            report.add(name, value, op, tol, window)
    return report


def _window(name: str, params: dict, traj) -> str:
    if name in SPECTRAL_METRICS:
        return "spectrum"
    if traj is None:
        return ""
    T = float(traj.times[-1])
    if "t_from" in params:
        return f"t in [{params['t_from']:g}, {T:g}]"
    if name in ("disagreement_final", "endpoint_error", "final_norm", "target_error", "sixfold_symmetry",
                "estimate_error_rel_max"):
        return f"t = {T:g}"
    return f"t in [0, {T:g}]"


def run_and_check(inst: Instance) -> tuple[Trajectory | None, M.MetricReport]:
    traj = integrate(inst.protocol, inst.y0, inst.config) if needs_trajectory(inst) else None
    return traj, evaluate(inst, traj)
