import json
import math

import numpy as np
import pytest
from scipy.linalg import expm

from msc_lab import metrics as M
from msc_lab.scaling import ScalingSet, msc_targets, rotation_matrix
from msc_lab.sim import Trajectory
from msc_lab.spectral import p_matrix

SS = ScalingSet([np.eye(2), -2 * np.eye(2), rotation_matrix(0.5)])
SKEW = np.array([[0.0, 1.0], [-1.0, 0.0]])


def make_traj(times, X, variant="basic", extra=None):
    """Trajectory from an x block (samples, n, d) plus optional extra blocks."""
    times = np.asarray(times, dtype=float)
    blocks = {"x": np.asarray(X, dtype=float), **(extra or {})}
    layout, cols, off = {}, [], 0
    for name, B in blocks.items():
        layout[name] = (off, B.shape[1], B.shape[2])
        off += B.shape[1] * B.shape[2]
        cols.append(B.reshape(len(times), -1))
    return Trajectory(times, np.hstack(cols), layout, metadata={"protocol": {"variant": variant}})


def test_disagreement_matches_pairwise_loop():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(5, 3, 2))
    D = M.disagreement(X, SS)
    for k in range(5):
        SX = [SS.stack[i] @ X[k, i] for i in range(3)]
        ref = max(np.linalg.norm(SX[i] - SX[j]) for i in range(3) for j in range(3))
        assert D[k] == pytest.approx(ref, abs=1e-14)


def test_disagreement_vanishes_on_targets():
    X = msc_targets(SS, [0.3, -1.2])
    assert M.disagreement(X, SS)[0] < 1e-14


def test_scaled_states_shape_check():
    with pytest.raises(M.MetricError):
        M.scaled_states(np.zeros((4, 2)), SS)


def test_virtual_point_series():
    X = np.random.default_rng(1).normal(size=(2, 3, 2))
    x0 = M.virtual_point_series(X, SS)
    ref = p_matrix(SS) @ (X[1, 0] - X[1, 1] + X[1, 2])
    assert np.allclose(x0[1], ref)


def test_settling_time_exponential():
    t = np.linspace(0, 10, 10001)
    Y = np.exp(-t)[:, None] * np.ones((1, 4)) / 2.0  # ||Y|| = e^{-t}
    ts = M.settling_time(t, Y, reference=np.zeros(4), radius=0.05)
    assert ts == pytest.approx(math.log(20), abs=1e-3)
    # relative radius: 5% of the initial error gives the same ball
    assert M.settling_time(t, Y, reference=np.zeros(4)) == pytest.approx(math.log(20), abs=1e-3)


def test_settling_time_edge_cases():
    t = np.linspace(0, 1, 11)
    Y = np.ones((11, 2))
    assert M.settling_time(t, Y, np.zeros(2), radius=0.1) is None
    assert M.settling_time(t, Y * 0, np.zeros(2), radius=0.1) == 0.0
    assert M.settling_time(t, Y * 0, np.zeros(2), radius=0.1, diverged=True) is None
    # without a reference the last sample is the limit, and a late entry does not count
    late = np.vstack([np.ones((10, 2)), np.zeros((1, 2))])
    assert M.settling_time(t, late, radius=0.1) is None


def test_conservation_drift():
    X = np.stack([msc_targets(SS, [1.0, 2.0])] * 3)
    traj = make_traj([0, 1, 2], X)
    assert M.conservation_drift(traj, SS) < 1e-14
    with pytest.raises(M.MetricError):
        M.conservation_drift(make_traj([0, 1, 2], X, variant="linear_homogeneous"), SS)


def test_pe_window_rotating_vector():
    phi = lambda t: np.array([[math.sin(t)], [math.cos(t)]])  # noqa: E731
    rep = M.pe_window(phi, 2 * math.pi, 20.0, starts=20)
    # int_0^{2 pi} phi phi^T dt = pi I for every window
    assert rep.mu2_min == pytest.approx(math.pi, rel=1e-6)
    assert rep.mu1_max == pytest.approx(math.pi, rel=1e-6)
    assert rep.persistently_exciting


def test_pe_window_degenerate_regressor():
    phi = lambda t: np.array([[math.sin(t)], [0.0]])  # noqa: E731
    rep = M.pe_window(phi, 2 * math.pi, 20.0, starts=5)
    assert abs(rep.mu2_min) < 1e-12
    assert not rep.persistently_exciting
    # the inner form of a column regressor is a scalar, so it is positive
    assert M.pe_window(phi, 2 * math.pi, 20.0, starts=5, form="inner").persistently_exciting
    with pytest.raises(M.MetricError):
        M.pe_window(phi, 0.0, 1.0)
    with pytest.raises(M.MetricError):
        M.pe_window(phi, 1.0, 1.0, form="diag")


def test_estimate_error():
    theta = np.array([[3.0, 4.0], [0.0, 2.0], [1.0, 0.0]])
    th_hat = np.stack([np.zeros((3, 2)), theta])
    traj = make_traj([0, 1], np.zeros((2, 3, 2)), "adaptive", {"theta_hat": th_hat})
    err = M.estimate_error(traj, theta, relative=True)
    assert np.allclose(err, [[1, 1, 1], [0, 0, 0]])
    assert np.allclose(M.estimate_error(traj, theta)[0], [5, 2, 1])
    with pytest.raises(M.MetricError):
        M.estimate_error(make_traj([0], np.zeros((1, 3, 2))), theta)


def exact_tracking_traj(A, T=20.0, dt=0.01):
    """Agents exactly on S_i^{-1} r(t) with r' = P A P^{-1} r."""
    P = p_matrix(SS)
    Mr = P @ A @ np.linalg.inv(P)
    t = np.arange(0, T + dt / 2, dt)
    r = np.array([expm(Mr * tk) @ [1.0, 0.5] for tk in t])
    X = np.array([msc_targets(SS, rk) for rk in r])
    return make_traj(t, X, "linear_homogeneous")


def test_reference_tracking_exact_solution():
    rep = M.reference_tracking(exact_tracking_traj(SKEW), SS, SKEW)
    res, defect = rep.after(1.0)
    assert res < 1e-12
    assert defect < 1e-3  # second-order finite differences at dt = 0.01
    assert rep.relative_defect.shape == rep.times.shape


def test_reference_tracking_rejects_coarse_sampling():
    traj = exact_tracking_traj(SKEW * 10, T=2.0, dt=0.1)
    with pytest.raises(M.MetricError, match="coarse"):
        M.reference_tracking(traj, SS, SKEW * 10)


def test_radius_spread():
    traj = exact_tracking_traj(SKEW)
    assert M.radius_spread(traj, SS, 10.0) < 1e-9
    X = traj.x * np.linspace(1, 2, len(traj.times))[:, None, None]
    assert M.radius_spread(make_traj(traj.times, X), SS, 0.0) > 0.5


def test_sliding_error():
    X = np.ones((2, 3, 2))
    traj = make_traj([0, 1], X, "hetero_full_input", {"z": X + 0.5})
    assert np.allclose(M.sliding_error(traj), 0.5)
    obs = make_traj([0, 1], X, "observer_heterogeneous", {"xhat": X * 3, "eta": X, "z": X * 2})
    assert np.allclose(M.sliding_error(obs), 0.0)
    with pytest.raises(M.MetricError):
        M.sliding_error(make_traj([0], np.zeros((1, 3, 2))))


def test_metric_report():
    rep = M.MetricReport("demo")
    rep.add("a", np.float64(1e-4), "<=", 1e-3, "t = 20")
    rep.add("b", True, "==", True)
    assert rep.passed
    rep.add("c", float("nan"), "<=", 1.0)
    rep.add("d", None, ">=", 0.0)
    assert not rep.passed
    assert [r.passed for r in rep.results] == [True, True, False, False]
    data = json.loads(rep.to_json())
    assert data["scenario"] == "demo" and data["passed"] is False
    text = rep.format()
    assert "PASS a = 0.0001 <= 0.001 [t = 20]" in text
    assert text.splitlines()[-1].strip() == "overall: FAIL"
    with pytest.raises(M.MetricError):
        rep.add("e", 1.0, "~", 1.0)
