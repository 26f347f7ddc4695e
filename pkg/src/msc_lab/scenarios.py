"""Scenario files: schema, validation, construction and the built-in library.

A scenario is a JSON document (``"schema": 1``) with the sections
``graph``, ``scalings``, ``protocol``, ``sim``, ``initial``, ``checks`` and
``outputs`` plus ``name``, ``description`` and ``seed``. Loading validates
every section and reports all problems at once, each prefixed with its
field path (``protocol.c: must be positive``).

Random parameters that a scenario only describes by a distribution (plant
perturbations, input-matrix offsets, adaptation rates) are drawn from a
PCG64 stream seeded with ``SeedSequence([seed, 1])``; agent initial states
use the per-agent streams of :func:`msc_lab.sim.random_initial_state`.
"""

from __future__ import annotations

import copy
import json
import math
import re
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import protocols as P
from .graph import Graph, GraphError, build_graph, circulant_graph, cycle_graph, is_connected
from .scaling import ScalingMatrix, ScalingSet, make_transform, snowflake_set
from .sim import SimConfig, random_initial_state, snowflake_initial_state
from .spectral import SpectralError, coupling_gain, msc_laplacian, reduce

__all__ = [
    "SCHEMA_VERSION",
    "Scenario",
    "Instance",
    "ScenarioError",
    "BUILTINS",
    "builtin",
    "builtin_names",
    "load_scenario",
    "parse_scenario",
    "write_scenario",
    "instantiate",
    "parse_angle",
]

SCHEMA_VERSION = 1
SECTIONS = ("graph", "scalings", "protocol", "sim", "initial", "checks", "outputs")


class ScenarioError(ValueError):
    """Validation failure; ``errors`` lists one message per offending field."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class Scenario:
    name: str
    description: str = ""
    seed: int = 0
    graph: dict = field(default_factory=dict)
    scalings: dict = field(default_factory=dict)
    protocol: dict = field(default_factory=dict)
    sim: dict = field(default_factory=dict)
    initial: dict = field(default_factory=dict)
    checks: tuple = ()
    outputs: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "name": self.name,
            "description": self.description,
            "seed": self.seed,
            **{k: copy.deepcopy(getattr(self, k)) for k in SECTIONS if k != "checks"},
            "checks": [dict(c) for c in self.checks],
        }

    def replace(self, **changes) -> "Scenario":
        d = self.to_dict()
        for k, v in changes.items():
            if k in ("sim",) and isinstance(v, dict):
                d[k] = {**d[k], **v}
            else:
                d[k] = v
        return parse_scenario(d, validate=False)


@dataclass(eq=False)
class Instance:
    """A scenario turned into objects, with every random draw materialized."""

    scenario: Scenario
    graph: Graph
    scalings: ScalingSet
    protocol: P.Protocol | None
    config: SimConfig
    y0: P.ExtendedState | None
    materialized: dict


# -- parsing helpers -----------------------------------------------------------------

_ANGLE = re.compile(r"^\s*([-+]?\d*\.?\d*)\s*\*?\s*pi\s*(?:/\s*(\d+\.?\d*))?\s*$")


def parse_angle(v) -> float:
    """Number in radians, or a string such as ``"pi/3"``, ``"5pi/3"``, ``"-0.5*pi"``."""
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return float(v)
    if isinstance(v, str):
        m = _ANGLE.match(v)
        if m:
            k = m.group(1)
            coef = 1.0 if k in ("", "+") else -1.0 if k == "-" else float(k)
            return coef * math.pi / (float(m.group(2)) if m.group(2) else 1.0)
    raise ValueError(f"not an angle: {v!r}")


def _matrix(v, shape=None) -> np.ndarray:
    a = np.array(v, dtype=float)
    if a.ndim == 1:
        a = a[:, None] if shape is not None and len(shape) == 2 and shape[1] == 1 else a[None]
    if a.ndim != 2 or not np.all(np.isfinite(a)):
        raise ValueError(f"expected a finite matrix, got {v!r}")
    if shape is not None and a.shape != shape:
        raise ValueError(f"expected shape {shape}, got {a.shape}")
    return a


class _Errors:
    def __init__(self):
        self.items: list[str] = []

    def add(self, path: str, msg) -> None:
        self.items.append(f"{path}: {msg}")

    def guard(self, path: str, fn, *args, **kw):
        try:
            return fn(*args, **kw)
        except (ValueError, TypeError, KeyError, IndexError, np.linalg.LinAlgError) as exc:
            msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
            self.add(path, msg if not isinstance(exc, KeyError) else f"missing field {msg!r}")
            return None


# -- graph and scalings ------------------------------------------------------------------


def _build_graph(spec: dict) -> Graph:
    kind = spec.get("kind", "edges")
    if kind == "cycle":
        return cycle_graph(int(spec["n"]), float(spec.get("weight", 1.0)))
    if kind == "circulant":
        return circulant_graph(int(spec["n"]), [int(k) for k in spec["offsets"]], float(spec.get("weight", 1.0)))
    if kind == "edges":
        return build_graph(spec["n"], spec["edges"])
    raise ValueError(f"unknown graph kind {kind!r}; expected cycle, circulant or edges")


def _preset_members(name: str) -> list:
    R = lambda th: make_transform("rotation", theta=th)  # noqa: E731
    if name == "rotation_pairs":
        return [R(math.pi / 3)] * 2 + [ScalingMatrix(-np.eye(2))] * 2 + [R(5 * math.pi / 3)] * 2
    if name == "symmetric_pairs":
        s3 = math.sqrt(3) / 4
        return ([ScalingMatrix([[2, -s3], [-s3, 7 / 4]])] * 2 + [ScalingMatrix(np.diag([2.0, 1.0]))] * 2
                + [ScalingMatrix(np.diag([-3.0, -1.0]))] * 2)
    if name == "snowflake":
        return list(snowflake_set().members)
    raise ValueError(f"unknown scaling preset {name!r}; expected rotation_pairs, symmetric_pairs or snowflake")


def _member(spec: dict) -> ScalingMatrix:
    kind = spec.get("kind", "matrix")
    if kind == "matrix":
        return ScalingMatrix(_matrix(spec["matrix"]))
    if kind == "rotation":
        return make_transform("rotation", theta=parse_angle(spec["theta"]))
    if kind == "scale":
        return make_transform("scale", a=float(spec["a"]), d=float(spec["d"]))
    if kind in ("shear_x", "shear_y"):
        return make_transform(kind, c=float(spec["c"]))
    if kind == "identity":
        return ScalingMatrix(float(spec.get("sign", 1)) * np.eye(int(spec.get("d", 2))))
    raise ValueError(f"unknown scaling kind {kind!r}")


def _build_scalings(spec: dict, err: _Errors) -> ScalingSet | None:
    if "preset" in spec:
        members = err.guard("scalings.preset", _preset_members, spec["preset"])
    elif "members" in spec:
        members, failed = [], False
        for k, m in enumerate(spec["members"]):
            if not isinstance(m, dict):
                err.add(f"scalings.members[{k}]", "expected an object")
                failed = True
                continue
            s = err.guard(f"scalings.members[{k}]", _member, m)
            failed |= s is None
            if s is not None:
                members += [s] * int(m.get("repeat", 1))
        if failed:
            return None  # a count mismatch against the graph would only repeat the error
    else:
        err.add("scalings", "needs either 'preset' or 'members'")
        return None
    if not members:
        return None
    return err.guard("scalings", ScalingSet, members)


# -- protocol ---------------------------------------------------------------------------

VARIANTS = (
    "basic", "nonlinear", "finite_time", "adaptive", "linear_homogeneous", "adaptive_gain",
    "hetero_full_input", "observer_homogeneous", "observer_heterogeneous",
)


def _rates(v, n: int, rng, name: str) -> np.ndarray:
    if isinstance(v, dict) and "uniform" in v:
        lo, hi = v["uniform"]
        return rng.uniform(lo, hi, n)
    a = np.asarray(v, dtype=float).reshape(-1)
    if a.size == 1:
        a = np.full(n, a[0])
    if a.shape != (n,):
        raise ValueError(f"{name} needs 1 or {n} values")
    return a


def _theta(v, n: int) -> np.ndarray:
    if v == "ramp":
        return np.array([[i - 0.5, float(i)] for i in range(1, n + 1)])
    return _matrix(v)


def _gain(v, graph, ss, A, margin: float) -> float:
    if v == "auto":
        return coupling_gain(reduce(msc_laplacian(graph, ss)), A, margin=margin).c
    c = float(v)
    if not c > 0:
        raise ValueError("must be positive")
    return c


def _build_protocol(spec: dict, graph: Graph, ss: ScalingSet, seed: int, err: _Errors):
    variant = spec.get("variant")
    if variant not in VARIANTS:
        err.add("protocol.variant", f"unknown variant {variant!r}; expected one of {list(VARIANTS)}")
        return None, {}
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 1])))
    n, d = ss.n, ss.d
    mat: dict[str, Any] = {}
    g = lambda key, fn, *a: err.guard(f"protocol.{key}", fn, *a)  # noqa: E731

    def A_nom():
        return g("A", _matrix, spec["A"], (d, d)) if "A" in spec else err.add("protocol.A", "missing") or None

    def build():
        if variant == "basic":
            return P.BasicMSC(graph, ss)
        if variant == "nonlinear":
            return P.NonlinearMSC(graph, ss, spec.get("f", "tanh_scaled"), float(spec.get("beta", 1.0)))
        if variant == "finite_time":
            return P.FiniteTimeMSC(graph, ss, float(spec.get("alpha", 0.5)), bool(spec.get("modified", False)))
        if variant == "adaptive":
            if spec.get("regressor", "sinusoidal") != "sinusoidal":
                raise ValueError(f"protocol.regressor: unknown regressor {spec.get('regressor')!r}")
            theta = _theta(spec.get("theta", "ramp"), n)
            gamma = _rates(spec.get("gamma", {"uniform": [1, 10]}), n, rng, "gamma")
            mat["gamma"] = gamma.tolist()
            model = P.UncertaintyModel(P.sinusoidal_regressor(n), theta, "sinusoidal")
            return P.AdaptiveMSC(graph, ss, model, gamma)
        A = A_nom()
        if A is None:
            return None
        margin = float(spec.get("margin", 1.05))
        if variant == "linear_homogeneous":
            c = _gain(spec.get("c", "auto"), graph, ss, A, margin)
            mat["c"] = c
            return P.LinearHomogeneousMSC(graph, ss, A, c)
        if variant == "adaptive_gain":
            kappa = _rates(spec.get("kappa", 1.0), n, rng, "kappa")
            return P.AdaptiveGainMSC(graph, ss, A, kappa)
        c = _gain(spec.get("c", "auto"), graph, ss, A, margin)
        mat["c"] = c
        if variant == "hetero_full_input":
            if "plants" in spec:
                plants = np.array([_matrix(m, (d, d)) for m in spec["plants"]])
            else:
                amp = float(spec.get("perturbation", 0.2))
                plants = A + rng.uniform(-amp, amp, (n, d, d))
            mat["plants"] = plants.tolist()
            return P.HeteroFullInputMSC(graph, ss, A, plants, c, float(spec.get("beta1", 1.0)),
                                        float(spec.get("beta2", 0.0)), float(spec.get("eps", 0.0)))
        B = _matrix(spec["B"], (d, 1)) if np.ndim(spec.get("B")) == 1 else _matrix(spec["B"])
        C = _matrix(spec["C"])
        if variant == "observer_homogeneous":
            K = _matrix(spec["K"]) if "K" in spec else P.ackermann(A, B, spec["K_poles"])
            H = _matrix(spec["H"], (d, C.shape[0])) if "H" in spec else P.observer_ackermann(A, C, spec["H_poles"])
            mat.update(K=K.tolist(), H=H.tolist())
            return P.ObserverHomogeneousMSC(graph, ss, A, B, C, K, H, c)
        # observer_heterogeneous
        pert = spec.get("perturbation", {"A_bar": 0.2, "delta_b": 0.5})
        Abar = rng.uniform(-pert["A_bar"], pert["A_bar"], (n, d, d))
        db = rng.uniform(-pert["delta_b"], pert["delta_b"], n)
        plants = []
        for i in range(n):
            Ai = A + Abar[i]
            Bi = B.copy()
            Bi[-1, 0] += db[i]
            Ki = P.ackermann(Ai, Bi, spec.get("K_poles", [-2, -2]))
            Hi = P.observer_ackermann(Ai, C, spec.get("H_poles", [-4, -4]))
            plants.append(P.AgentPlant(Ai, Bi, C, Ki, Hi))
        mat.update(
            A_bar=Abar.tolist(), delta_b=db.tolist(),
            K=[p.K.tolist() for p in plants], H=[p.H.tolist() for p in plants],
        )
        return P.ObserverHeterogeneousMSC(graph, ss, A, plants, c, float(spec.get("beta1", 1.0)),
                                          float(spec.get("beta2", 0.0)), float(spec.get("eps", 0.0)))

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            proto = build()
        except (P.ProtocolError, SpectralError, GraphError, ValueError, KeyError, TypeError) as exc:
            if isinstance(exc, P.CommutationError):
                err.add("protocol.A", f"{exc} (hypothesis of the adaptive gain convergence result)")
            elif isinstance(exc, KeyError):
                err.add(f"protocol.{exc.args[0]}", "missing")
            else:
                err.add("protocol", exc)
            proto = None
    mat["warnings"] = [str(w.message) for w in caught]
    for w in caught:
        warnings.warn(w.message, stacklevel=3)
    return proto, mat


def _build_config(spec: dict, seed: int, err: _Errors) -> SimConfig | None:
    allowed = {"h", "T", "method", "stride", "signum_max_step", "divergence_threshold"}
    for k in spec:
        if k not in allowed:
            err.add(f"sim.{k}", "unknown field")
    return err.guard("sim", SimConfig, seed=seed, **{k: v for k, v in spec.items() if k in allowed})


def _build_initial(spec: dict, proto: P.Protocol, seed: int, err: _Errors):
    kind = spec.get("kind", "uniform")
    if kind == "snowflake":
        return err.guard("initial", snowflake_initial_state, proto, seed)
    if kind != "uniform":
        err.add("initial.kind", f"unknown rule {kind!r}; expected uniform or snowflake")
        return None
    blocks = {}
    for name, v in spec.get("values", {}).items():
        blocks[name] = np.asarray(v, dtype=float)
    y0 = err.guard("initial", random_initial_state, proto, seed, float(spec.get("low", -2.0)),
                   float(spec.get("high", 2.0)), tuple(spec.get("blocks", ["x"])), blocks)
    if y0 is None:
        return None
    match = spec.get("z")
    if match == "match":
        if "z" not in proto.layout:
            err.add("initial.z", f"protocol {proto.variant} has no z block")
            return None
        b = proto.unpack(y0.y)
        b["z"] = b["xhat"] - b["eta"] if "eta" in b else b["x"]
        y0 = P.ExtendedState(0.0, proto.pack(**b), proto.layout)
    elif match not in (None, "zero"):
        err.add("initial.z", f"expected 'match' or 'zero', got {match!r}")
    return y0


# -- public API --------------------------------------------------------------------------


def parse_scenario(data: dict, validate: bool = True) -> Scenario:
    err = _Errors()
    if not isinstance(data, dict):
        raise ScenarioError(["<root>: expected a JSON object"])
    if data.get("schema") != SCHEMA_VERSION:
        err.add("schema", f"expected {SCHEMA_VERSION}, got {data.get('schema')!r}")
    if not isinstance(data.get("name"), str) or not data.get("name"):
        err.add("name", "must be a non-empty string")
    seed = data.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        err.add("seed", f"must be a non-negative integer, got {seed!r}")
    for sec in ("graph", "scalings", "protocol"):
        if not isinstance(data.get(sec), dict):
            err.add(sec, "missing or not an object")
    for sec in ("sim", "initial", "outputs"):
        if sec in data and not isinstance(data[sec], dict):
            err.add(sec, "must be an object")
    checks = data.get("checks", [])
    if not isinstance(checks, list) or not all(isinstance(c, dict) and "metric" in c for c in checks):
        err.add("checks", "must be a list of objects with a 'metric' field")
        checks = []
    unknown = set(data) - {"schema", "name", "description", *SECTIONS, "seed"}
    for k in sorted(unknown):
        err.add(k, "unknown top-level field")
    if err.items:
        raise ScenarioError(err.items)
    s = Scenario(
        name=data["name"],
        description=str(data.get("description", "")),
        seed=int(seed),
        graph=copy.deepcopy(data["graph"]),
        scalings=copy.deepcopy(data["scalings"]),
        protocol=copy.deepcopy(data["protocol"]),
        sim=copy.deepcopy(data.get("sim", {})),
        initial=copy.deepcopy(data.get("initial", {})),
        checks=tuple(copy.deepcopy(c) for c in checks),
        outputs=copy.deepcopy(data.get("outputs", {})),
    )
    if validate:
        instantiate(s)
    return s


def instantiate(s: Scenario, seed: int | None = None, h: float | None = None, T: float | None = None,
                require_connected: bool = True, build_protocol: bool = True) -> Instance:
    """Build and cross-validate every object a scenario describes.

    With ``require_connected=False`` a disconnected graph is accepted and no
    protocol is built (spectral analysis only).
    """
    err = _Errors()
    seed = s.seed if seed is None else seed
    graph = err.guard("graph", _build_graph, s.graph)
    ss = _build_scalings(s.scalings, err)
    if graph is not None and ss is not None and graph.n != ss.n:
        err.add("scalings", f"{ss.n} scaling matrices for a graph with {graph.n} vertices")
    connected = graph is not None and is_connected(graph)
    if graph is not None and not connected and require_connected:
        err.add("graph", "interaction graph is disconnected")
    sim = dict(s.sim)
    if h is not None:
        sim["h"] = h
    if T is not None:
        sim["T"] = T
    cfg = _build_config(sim, seed, err)
    if err.items:
        raise ScenarioError(err.items)
    proto, y0, mat = None, None, {}
    if build_protocol and connected:
        proto, mat = _build_protocol(s.protocol, graph, ss, seed, err)
        if proto is not None:
            y0 = _build_initial(s.initial, proto, seed, err)
            if isinstance(proto, P.NonlinearMSC) and y0 is not None and proto.domain_violated(y0.y):
                msg = (f"initial scaled disagreement {proto.max_scaled_disagreement(y0.y):.3g} leaves the "
                       f"domain |y| < {proto.domain:.3g} of f={proto.f_name}")
                mat.setdefault("warnings", []).append(msg)
                warnings.warn(msg, stacklevel=2)
    if err.items:
        raise ScenarioError(err.items)
    mat["seed"] = seed
    return Instance(s, graph, ss, proto, cfg, y0, mat)


def load_scenario(ref: str | Path, validate: bool = True) -> Scenario:
    """Load a built-in by name or a JSON scenario file by path."""
    if isinstance(ref, str) and ref in BUILTINS:
        return builtin(ref)
    path = Path(ref)
    if not path.exists() and path.suffix != ".json" and len(path.parts) == 1:
        raise ScenarioError([f"<scenario>: {str(ref)!r} is neither a built-in ({', '.join(BUILTINS)}) nor a file"])
    text = path.read_text()  # OSError propagates as an I/O failure
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError([f"<file>: not valid JSON ({exc.msg} at line {exc.lineno})"]) from None
    return parse_scenario(data, validate=validate)


def write_scenario(s: Scenario, path: str | Path) -> Path:
    from .sim import _atomic_write

    path = Path(path)
    _atomic_write(path, lambda fh: fh.write(json.dumps(s.to_dict(), indent=2) + "\n"))
    return path


# -- built-in library -------------------------------------------------------------------

SKEW = [[0.0, 1.0], [-1.0, 0.0]]
_PAIRS_SPECTRUM = [0, 0, 1.059, 1.264, 2.088, 2.387, 3.406, 3.477, 5.051, 6.657, 7.388, 10.222]
_CYCLE6 = {"kind": "cycle", "n": 6}
# Whether the uncompensated loop diverges depends on the plant draws (about a
# third of seeds give an unstable mode); both perturbed-oscillator scenarios
# share this seed, whose draws do.
PERTURBED_SEED = 38
_ROT6 = {"preset": "rotation_pairs"}


def _sc(name, description, protocol, sim, checks, graph=None, scalings=None, initial=None, seed=0) -> dict:
    return {
        "schema": SCHEMA_VERSION,
        "name": name,
        "description": description,
        "seed": seed,
        "graph": graph or dict(_CYCLE6),
        "scalings": scalings or dict(_ROT6),
        "protocol": protocol,
        "sim": sim,
        "initial": initial or {"kind": "uniform", "low": -2.0, "high": 2.0, "blocks": ["x"]},
        "checks": checks,
        "outputs": {"csv": f"{name}.csv"},
    }


def _linear(tag: str, A, desc: str, checks) -> dict:
    return _sc(f"linear_{tag}", desc, {"variant": "linear_homogeneous", "A": A, "c": 2.0},
               {"h": 1e-3, "T": 40.0, "stride": 10}, checks)


_LIB = [
    _sc("symmetric_pairs_cycle", "Six-cycle with three symmetric scaling pairs; reference spectrum of Omega.",
        {"variant": "basic"}, {"h": 1e-3, "T": 20.0, "stride": 10},
        [{"metric": "spectrum_match", "expected": _PAIRS_SPECTRUM, "op": "<=", "tol": 2e-3},
         {"metric": "spectrum_interval", "interval": [0.5, 12.0], "op": "==", "tol": True},
         {"metric": "disagreement_final", "op": "<=", "tol": 1e-3}],
        scalings={"preset": "symmetric_pairs"}),
    _sc("cycle6_identity", "Six-cycle with identity scalings; Omega reduces to L kron I.",
        {"variant": "basic"}, {"h": 1e-3, "T": 20.0, "stride": 10},
        [{"metric": "spectrum_match", "expected": [0, 0, 1, 1, 1, 1, 3, 3, 3, 3, 4, 4], "op": "<=", "tol": 1e-9},
         {"metric": "disagreement_final", "op": "<=", "tol": 1e-3}],
        scalings={"members": [{"kind": "identity", "d": 2, "repeat": 6}]}),
    _sc("basic_rotations", "Basic law on the six-cycle with rotation and negative-identity scalings.",
        {"variant": "basic"}, {"h": 1e-3, "T": 20.0, "stride": 1},
        [{"metric": "disagreement_final", "op": "<=", "tol": 1e-3},
         {"metric": "endpoint_error", "op": "<=", "tol": 1e-3},
         {"metric": "conservation_drift", "op": "<=", "tol": 1e-6},
         {"metric": "settling_time", "radius": 0.05, "op": "in", "tol": [3.0, 8.0]}]),
    _sc("saturated_tanh", "Saturated law 0.5 tanh on the same network; inputs bounded by 1.",
        {"variant": "nonlinear", "f": "tanh_scaled", "beta": 1.0}, {"h": 1e-3, "T": 30.0, "stride": 1},
        [{"metric": "u_inf_max", "op": "<=", "tol": 1.0},
         {"metric": "endpoint_error", "op": "<=", "tol": 1e-3},
         {"metric": "conservation_drift", "op": "<=", "tol": 1e-6},
         {"metric": "settling_time", "radius": 0.05, "op": "in", "tol": [7.0, 14.0]}]),
    _sc("finite_time", "Finite-time law sig^0.5 on a four-cycle with symmetric scalings.",
        {"variant": "finite_time", "alpha": 0.5, "modified": False},
        {"h": 1e-3, "T": 4.0, "stride": 10, "signum_max_step": 1e-5},
        [{"metric": "finite_time_consensus", "level": 1e-9, "stay": 1e-8, "op": "==", "tol": True}],
        graph={"kind": "cycle", "n": 4},
        scalings={"members": [
            {"kind": "scale", "a": 1.0, "d": 2.0},
            {"kind": "matrix", "matrix": [[2.0, 0.5], [0.5, 1.0]]},
            {"kind": "identity", "sign": -1, "d": 2},
            {"kind": "matrix", "matrix": [[-1.5, -0.2], [-0.2, -0.8]]},
        ]}),
    _sc("adaptive_estimation", "Adaptive law with the sinusoidal regressors and theta_i = [i - 0.5, i].",
        {"variant": "adaptive", "regressor": "sinusoidal", "theta": "ramp",
         "gamma": {"uniform": [1.0, 10.0]}},
        {"h": 1e-3, "T": 200.0, "stride": 100},
        [{"metric": "disagreement_final", "op": "<=", "tol": 1e-2},
         {"metric": "estimate_error_rel_max", "op": "<=", "tol": 0.02},
         {"metric": "pe_certified", "window": 6.283185307179586, "op": "==", "tol": True}],
        initial={"kind": "uniform", "low": -2.0, "high": 2.0, "blocks": ["x", "theta_hat"]}),
    _sc("adaptive_gain", "Distributed gain tuning with a skew-symmetric A; scalings commute with A.",
        {"variant": "adaptive_gain", "A": SKEW, "kappa": 1.0}, {"h": 1e-3, "T": 30.0, "stride": 10},
        [{"metric": "disagreement_final", "op": "<=", "tol": 1e-3},
         {"metric": "gains_monotone", "op": "==", "tol": True},
         {"metric": "gains_last_decile_variation", "op": "<=", "tol": 1e-4}]),
    _sc("full_input_compensation", "Sliding-mode compensation of plant perturbations with full input.",
        {"variant": "hetero_full_input", "A": SKEW, "perturbation": 0.2, "c": 2.0, "beta1": 2.0, "beta2": 5.0},
        {"h": 1e-4, "T": 20.0, "stride": 1},
        [{"metric": "sliding_band", "op": "==", "tol": True},
         {"metric": "disagreement_final", "op": "<=", "tol": 1e-2}]),
    _linear("hurwitz", 0.5 * np.array([[-1.0, 1.0], [-1.0, 0.0]]), "Hurwitz agent matrix: states vanish.",
           [{"metric": "final_norm", "op": "<=", "tol": 1e-3}]),
    _linear("marginal", 0.5 * np.array([[0.0, 1.0], [-0.5, 0.0]]), "Marginally stable, not skew: scaled ellipses.",
           [{"metric": "tracking_residual", "t_from": 10.0, "op": "<=", "tol": 1e-2},
            {"metric": "tracking_defect", "t_from": 10.0, "op": "<=", "tol": 1e-2}]),
    _linear("unstable", 0.5 * np.array([[1.0, 1.0], [-1.0, 0.0]]), "Unstable agent matrix: states grow.",
           [{"metric": "diverged_or_large", "threshold": 1e3, "op": "==", "tol": True}]),
    _linear("skew", np.array(SKEW), "Skew-symmetric agent matrix: agents settle on circles.",
           [{"metric": "tracking_residual", "t_from": 10.0, "op": "<=", "tol": 1e-2},
            {"metric": "tracking_defect", "t_from": 10.0, "op": "<=", "tol": 1e-2},
            {"metric": "radius_spread", "op": "<=", "tol": 0.01}]),
    _sc("observer_oscillator", "Observer-based law for identical oscillators with output y = x_1.",
        {"variant": "observer_homogeneous", "A": SKEW, "B": [0.0, 1.0], "C": [[1.0, 0.0]],
         "K": [[-3.0, -4.0]], "H": [[-8.0], [-15.0]], "c": 2.0},
        {"h": 1e-3, "T": 20.0, "stride": 10},
        [{"metric": "disagreement_final", "op": "<=", "tol": 1e-2},
         {"metric": "tracking_residual", "t_from": 10.0, "op": "<=", "tol": 1e-2},
         {"metric": "tracking_defect", "t_from": 10.0, "op": "<=", "tol": 1e-2}],
        initial={"kind": "uniform", "low": -2.0, "high": 2.0, "blocks": ["x", "xhat", "eta"]}),
    _sc("observer_perturbed", "Observer-based law with disturbance compensation for perturbed oscillators.",
        {"variant": "observer_heterogeneous", "A": SKEW, "B": [0.0, 1.0], "C": [[1.0, 0.0]],
         "perturbation": {"A_bar": 0.2, "delta_b": 0.5}, "K_poles": [-2.0, -2.0], "H_poles": [-4.0, -4.0],
         "c": 2.0, "beta1": 2.0, "beta2": 5.0},
        {"h": 1e-3, "T": 20.0, "stride": 10},
        [{"metric": "disagreement_final", "op": "<=", "tol": 1e-2},
         {"metric": "tracking_defect", "t_from": 10.0, "op": "<=", "tol": 1e-2}],
        initial={"kind": "uniform", "low": -2.0, "high": 2.0, "blocks": ["x", "xhat", "eta"], "z": "match"},
        seed=PERTURBED_SEED),
    _sc("observer_uncompensated", "Same perturbed oscillators with the signum terms removed.",
        {"variant": "observer_heterogeneous", "A": SKEW, "B": [0.0, 1.0], "C": [[1.0, 0.0]],
         "perturbation": {"A_bar": 0.2, "delta_b": 0.5}, "K_poles": [-2.0, -2.0], "H_poles": [-4.0, -4.0],
         "c": 2.0, "beta1": 0.0, "beta2": 0.0},
        {"h": 1e-2, "T": 400.0, "stride": 100},
        [{"metric": "diverged", "op": "==", "tol": True}],
        initial={"kind": "uniform", "low": -2.0, "high": 2.0, "blocks": ["x", "xhat", "eta"], "z": "match"},
        seed=PERTURBED_SEED),
    _sc("snowflake", "Eighteen agents with lifted rotation-translation scalings forming a snowflake.",
        {"variant": "basic"}, {"h": 1e-3, "T": 10.0, "stride": 10},
        [{"metric": "target_error", "op": "<=", "tol": 1e-2},
         {"metric": "sixfold_symmetry", "op": "<=", "tol": 1e-2}],
        graph={"kind": "circulant", "n": 18, "offsets": [1, 3]}, scalings={"preset": "snowflake"},
        initial={"kind": "snowflake"}),
]


def _plain(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_plain(v) for v in obj]
    return obj


BUILTINS: dict[str, dict] = {d["name"]: _plain(d) for d in _LIB}


def builtin_names() -> list[str]:
    return list(BUILTINS)


def builtin(name: str) -> Scenario:
    try:
        data = BUILTINS[name]
    except KeyError:
        raise ScenarioError([f"name: no built-in scenario {name!r}"]) from None
    return parse_scenario(copy.deepcopy(data), validate=False)
