"""End-to-end acceptance runs, one test per criterion.

Each test records a one-line verdict (shown in the terminal summary) before
asserting it. Tolerances are the published ones; nothing is loosened when a
run misses them.
"""

import json
import math
import time

import numpy as np
import pytest
from scipy.linalg import expm, null_space

from msc_lab import metrics as M
from msc_lab.checks import _limit
from msc_lab.cli import main
from msc_lab.graph import build_graph, cycle_graph, incidence_matrix, laplacian, spanning_tree_split, weight_matrix
from msc_lab.protocols import AdaptiveGainMSC, AdaptiveMSC, BasicMSC, CommutationError, UncertaintyModel, sinusoidal_regressor
from msc_lab.scaling import ScalingMatrix, ScalingSet, classify_2x2_closed_form, classify_definiteness, rotation_matrix
from msc_lab.scenarios import builtin, instantiate
from msc_lab.sim import SimConfig, integrate, random_initial_state
from msc_lab.spectral import analyze, coupling_gain, is_hurwitz, lyapunov_solve, msc_laplacian, reduce, theta_c

PAIRS_SPECTRUM = [0, 0, 1.059, 1.264, 2.088, 2.387, 3.406, 3.477, 5.051, 6.657, 7.388, 10.222]
SKEW = np.array([[0.0, 1.0], [-1.0, 0.0]])

_RUNS: dict = {}


def run(name, **kw):
    """Instantiate and integrate a built-in once per session."""
    key = (name, tuple(sorted(kw.items())))
    if key not in _RUNS:
        inst = instantiate(builtin(name), **kw)
        t = time.perf_counter()
        traj = integrate(inst.protocol, inst.y0, inst.config)
        _RUNS[key] = (inst, traj, time.perf_counter() - t)
    return _RUNS[key]


def test_criterion_01_symmetric_pairs_spectrum(tmp_path, criterion):
    t = time.perf_counter()
    code = main(["spectral", "symmetric_pairs_cycle", "--out", str(tmp_path)])
    elapsed = time.perf_counter() - t
    data = json.loads((tmp_path / "symmetric_pairs_cycle.spectral.json").read_text())
    ev = np.sort([z[0] for z in data["eigenvalues"]])
    err = float(np.abs(ev - PAIRS_SPECTRUM).max())
    nz = ev[2:]
    inside = bool(np.all((nz >= 0.5) & (nz <= 12)))
    ok = code == 0 and err <= 2e-3 and inside and elapsed < 1.0
    assert criterion(1, "symmetric pairs spectrum", ok,
                     f"max |ev - ref| = {err:.2e} (tol 2e-3), nonzero in [0.5, 12]: {inside}, {elapsed:.2f}s")


def test_criterion_02_laplacian_baseline(criterion):
    ev = np.linalg.eigvalsh(laplacian(cycle_graph(6)))
    err = float(np.abs(ev - [0, 1, 1, 3, 3, 4]).max())
    assert criterion(2, "six-cycle Laplacian", err <= 1e-9, f"max error {err:.1e} (tol 1e-9)")


def test_criterion_03_basic_limit(criterion):
    inst, traj, secs = run("basic_rotations")
    x0 = M.virtual_point_series(inst.y0.block("x")[None], inst.scalings)[0]
    target = np.linalg.solve(inst.scalings.stack, np.broadcast_to(x0, (6, 2))[..., None])[..., 0]
    end = float(np.abs(traj.x[-1] - target).max())
    drift = M.conservation_drift(traj, inst.scalings)
    ok = end <= 1e-3 and drift <= 1e-6 and secs < 10
    assert criterion(3, "basic law limit", ok,
                     f"endpoint error {end:.2e} (tol 1e-3), drift {drift:.1e} (tol 1e-6), {secs:.1f}s")


def test_criterion_04_saturated_law(criterion):
    b_inst, b_traj, _ = run("basic_rotations")
    inst, traj, _ = run("saturated_tanh")
    u_max = max(float(np.abs(inst.protocol.control(t, y)).max()) for t, y in zip(traj.times, traj.states))
    end = float(np.abs(traj.x[-1] - _limit(b_inst)).max())
    ts_basic = M.settling_time(b_traj.times, b_traj.x, _limit(b_inst), radius=0.05)
    ts_tanh = M.settling_time(traj.times, traj.x, _limit(inst), radius=0.05)
    ok = (u_max <= 1 and end <= 1e-3 and ts_basic is not None and ts_tanh is not None and ts_tanh > ts_basic
          and 7 <= ts_tanh <= 14 and 3 <= ts_basic <= 8)
    assert criterion(4, "saturated law", ok,
                     f"max |u| {u_max:.3f}, endpoint error {end:.1e}, settling tanh {ts_tanh} s vs basic {ts_basic} s")


def test_criterion_05_finite_time(criterion):
    inst, traj, _ = run("finite_time")
    D = M.disagreement(traj, inst.scalings)
    hit = np.nonzero(D <= 1e-9)[0]
    ok = bool(hit.size) and float(D[hit[0]:].max()) <= 1e-8
    t_hit = float(traj.times[hit[0]]) if hit.size else math.nan
    assert criterion(5, "finite-time law", ok,
                     f"D <= 1e-9 first at t = {t_hit:.3f} s, max D afterwards {D[hit[0]:].max() if hit.size else math.nan:.1e}")


@pytest.mark.slow
def test_criterion_06_adaptive(criterion):
    inst, traj, secs = run("adaptive_estimation")
    D = float(M.disagreement(traj, inst.scalings)[-1])
    rel = float(M.estimate_error(traj, inst.protocol.theta, relative=True)[-1].max())
    phi = inst.protocol.uncertainty.regressor
    pe = [M.pe_window(lambda t, i=i: phi(t)[i], 2 * math.pi, 50.0, starts=50) for i in range(6)]
    pe_ok = all(r.persistently_exciting for r in pe)
    ok = D <= 1e-2 and rel <= 0.02 and pe_ok and secs < 60
    assert criterion(6, "adaptive law", ok,
                     f"D(200) {D:.1e}, max relative estimate error {rel:.1e}, PE all agents: {pe_ok} "
                     f"(min mu2 {min(r.mu2_min for r in pe):.3g}), {secs:.0f}s")


def test_criterion_07_gain_synthesis(criterion):
    inst = instantiate(builtin("basic_rotations"), build_protocol=False)
    rp = reduce(msc_laplacian(inst.graph, inst.scalings))
    syn = coupling_gain(rp, SKEW)
    two = coupling_gain(rp, SKEW, c=2.0)
    ok = syn.hurwitz and is_hurwitz(theta_c(rp, SKEW, syn.c)) and two.hurwitz
    assert criterion(7, "coupling gain synthesis", ok,
                     f"c = {syn.c:.4f} (bound {syn.bound:.4f}) Hurwitz: {syn.hurwitz}; c = 2 Hurwitz: {two.hurwitz}")


def test_criterion_08_linear_regimes(criterion):
    ia, ta, _ = run("linear_hurwitz")
    ic, tc, _ = run("linear_unstable")
    ib, tb, _ = run("linear_marginal")
    idd, td, _ = run("linear_skew")
    a_norm = float(np.linalg.norm(ta.x[-1]))
    c_ok = tc.diverged or float(np.linalg.norm(tc.x[-1])) >= 1e3
    res_b = M.reference_tracking(tb, ib.scalings, ib.protocol.A).after(10.0)[0]
    res_d = M.reference_tracking(td, idd.scalings, idd.protocol.A).after(10.0)[0]
    T = float(td.times[-1])
    spread = M.radius_spread(td, idd.scalings, 0.75 * T)
    ok = a_norm <= 1e-3 and c_ok and res_b <= 1e-2 and res_d <= 1e-2 and spread <= 0.01
    assert criterion(8, "linear agent regimes", ok,
                     f"(a) |x(T)| {a_norm:.1e}; (c) diverged/large {c_ok}; residual after 10 s (b) {res_b:.2e} "
                     f"(d) {res_d:.1e}; (d) radius spread {spread:.1e}")


def test_criterion_09_adaptive_gain(criterion):
    inst, traj, _ = run("adaptive_gain")
    try:
        AdaptiveGainMSC(inst.graph, ScalingSet([np.diag([1.0, 2.0])] * 6), SKEW, 1.0)
        rejects = False
    except CommutationError:
        rejects = True
    D = float(M.disagreement(traj, inst.scalings)[-1])
    c = traj.block("c")[:, :, 0]
    mono = bool(np.all(np.diff(c, axis=0) >= -1e-12))
    k = int(0.9 * (len(c) - 1))
    var = float((c[-1] - c[k]).max())
    ok = rejects and D <= 1e-3 and mono and var <= 1e-4
    assert criterion(9, "adaptive coupling gains", ok,
                     f"D(T) {D:.1e}, gains non-decreasing {mono}, last-decile change {var:.1e}, "
                     f"non-commuting scalings rejected {rejects}")


@pytest.mark.slow
def test_criterion_10_full_input_compensation(criterion):
    inst, traj, _ = run("full_input_compensation")
    p = inst.protocol
    h = inst.config.h
    e = np.abs(M.sliding_error(traj)).max(axis=(1, 2))
    band = 5 * (p.beta1 + p.beta2 * np.abs(traj.x).sum(axis=2).max()) * h
    outside = np.nonzero(e > band)[0]
    k0 = 0 if outside.size == 0 else outside[-1] + 1
    reached = k0 < len(e)
    D = M.disagreement(traj, inst.scalings)
    rises = np.diff(D[k0:])
    # records are one integration step apart (stride 1)
    tol = 1e-9 * h * inst.config.stride
    bad = int(np.sum(rises > tol))
    ok = reached and bad == 0 and float(D[-1]) <= 1e-2
    assert criterion(10, "full-input compensation", ok,
                     f"band entered for good at t = {traj.times[min(k0, len(e) - 1)]:.3f} s: {reached}; "
                     f"D increases beyond 1e-9 h on {bad} of {rises.size} steps (max {rises.max():.1e}); "
                     f"D(20) {D[-1]:.1e}")


@pytest.mark.slow
def test_criterion_11_observer_laws(criterion):
    lines, ok = [], True
    for name in ("observer_oscillator", "observer_perturbed"):
        inst, traj, _ = run(name)
        D = float(M.disagreement(traj, inst.scalings)[-1])
        defect = M.reference_tracking(traj, inst.scalings, inst.protocol.A).after(10.0)[1]
        ok &= D <= 1e-2 and defect <= 1e-2
        lines.append(f"{name} D(T) {D:.1e} defect {defect:.1e}")
    with pytest.warns(UserWarning, match="beta2"):
        inst, traj, _ = run("observer_uncompensated")
    ok &= traj.diverged
    lines.append(f"uncompensated diverged {traj.diverged} at t = {traj.divergence_time}")
    assert criterion(11, "observer-based laws", ok, "; ".join(lines))


def test_criterion_12_snowflake(criterion):
    inst, traj, _ = run("snowflake")
    X = traj.x[-1]
    target = float(np.abs(X[:, :2] - _limit(inst)[:, :2]).max())
    pts = X[:, :2]
    rot = pts @ rotation_matrix(math.pi / 3).T
    orbit = float(np.linalg.norm(rot[:, None] - pts[None], axis=2).min(axis=1).max())
    ok = target <= 1e-2 and orbit <= 1e-2
    assert criterion(12, "snowflake formation", ok,
                     f"max distance to cluster points {target:.1e}, R(pi/3) orbit mismatch {orbit:.1e}")


def _random_connected(rng, n):
    perm = rng.permutation(n) + 1
    edges = {(min(a, b), max(a, b)) for a, b in zip(perm, perm[1:])}
    edges |= {(i, j) for i in range(1, n + 1) for j in range(i + 1, n + 1) if rng.random() < 0.3}
    return build_graph(n, [(i, j, rng.uniform(0.2, 3.0)) for i, j in sorted(edges)])


def _random_definite(rng, d):
    B, K = rng.normal(size=(d, d)), rng.normal(size=(d, d))
    return rng.choice([-1.0, 1.0]) * (B @ B.T + 0.2 * np.eye(d) + K - K.T)


def test_criterion_13_property_suites(criterion):
    rng = np.random.default_rng(13)
    failures = []

    # graph identities
    for _ in range(50):
        g = _random_connected(rng, int(rng.integers(2, 10)))
        H, W = incidence_matrix(g), weight_matrix(g)
        split = spanning_tree_split(g)
        if not (np.allclose(H.T @ W @ H, laplacian(g)) and np.allclose(H @ np.ones(g.n), 0)
                and np.allclose(split.R @ split.H_tree, incidence_matrix(g, split.ordering))):
            failures.append("graph")
            break

    # scaling identities and the closed-form definiteness test
    for _ in range(200):
        S = ScalingMatrix(_random_definite(rng, int(rng.integers(2, 5))))
        if not (ScalingMatrix(S.inv).sign == S.sign == ScalingMatrix(S.matrix.T).sign
                and np.allclose(ScalingMatrix(S.inv).abs, np.linalg.inv(S.abs))):
            failures.append("scaling")
            break
    mism = 0
    for A in rng.uniform(-2, 2, (10_000, 2, 2)):
        if np.abs(np.linalg.eigvalsh(0.5 * (A + A.T))).min() >= 1e-9:
            mism += classify_2x2_closed_form(A) is not classify_definiteness(A)
    if mism:
        failures.append(f"closed form ({mism} mismatches)")

    # Omega kernel and eigenvalue count, Lyapunov residuals
    worst_lyap = 0.0
    for _ in range(100):
        n, d = int(rng.integers(2, 8)), int(rng.integers(2, 4))
        g = _random_connected(rng, n)
        ss = ScalingSet([_random_definite(rng, d) for _ in range(n)])
        rep = analyze(g, ss)
        if not (rep.ok and null_space(msc_laplacian(g, ss).omega, rcond=1e-10).shape[1] == d):
            failures.append("omega")
            break
        Mp = reduce(msc_laplacian(g, ss)).omega_prime
        Q = lyapunov_solve(Mp)
        worst_lyap = max(worst_lyap, float(np.abs(Q @ Mp + Mp.T @ Q - np.eye(len(Q))).max()))
    if worst_lyap > 1e-8:
        failures.append("lyapunov")

    # right-hand side: matrix form against per-agent loops
    g = cycle_graph(6)
    ss = ScalingSet([rotation_matrix(0.3 * k) * (1 if k % 2 == 0 else -1) for k in range(6)])
    p = BasicMSC(g, ss)
    worst_rhs = 0.0
    for _ in range(50):
        X = rng.uniform(-2, 2, (6, 2))
        ref = np.zeros_like(X)
        for i, j, w in g.edges:
            diff = ss.stack[i - 1] @ X[i - 1] - ss.stack[j - 1] @ X[j - 1]
            ref[i - 1] -= ss.signs[i - 1] * w * diff
            ref[j - 1] += ss.signs[j - 1] * w * diff
        worst_rhs = max(worst_rhs, float(np.abs(p.rhs(0, X.ravel()) - ref.ravel()).max()))
    if worst_rhs > 1e-12:
        failures.append("rhs")

    # adaptive Lyapunov function is non-increasing
    theta = np.array([[i - 0.5, float(i)] for i in range(1, 7)])
    ap = AdaptiveMSC(g, ss, UncertaintyModel(lambda t, X: sinusoidal_regressor(6)(t), theta), np.linspace(1, 10, 6))
    at = integrate(ap, random_initial_state(ap, 0, random_blocks=("x", "theta_hat")), SimConfig(h=1e-3, T=5.0))
    V = np.array([ap.lyapunov(y) for y in at.states])
    if np.diff(V).max() > 1e-9 * V[0]:
        failures.append("adaptive V")

    # RK4 order by step halving
    from msc_lab.protocols import LinearHomogeneousMSC

    lp = LinearHomogeneousMSC(g, ss, SKEW, 2.0)
    y0 = random_initial_state(lp, 1).y
    exact = expm(lp.system_matrix() * 2.0) @ y0
    errs = [np.abs(integrate(lp, y0, SimConfig(h=h, T=2.0, method="rk4", stride=10_000)).states[-1] - exact).max()
            for h in (0.1, 0.05, 0.025)]
    ratio = min(errs[0] / errs[1], errs[1] / errs[2])
    if ratio < 8:
        failures.append("rk4 order")

    ok = not failures
    assert criterion(13, "property suites", ok,
                     f"failures: {failures or 'none'}; Lyapunov residual {worst_lyap:.1e}, rhs agreement "
                     f"{worst_rhs:.1e}, RK4 halving ratio {ratio:.1f}")
