"""Fixed-step integration of protocol vector fields.

Smooth protocols use classical RK4. Protocols with signum terms are forced
onto explicit Euler with a step no larger than ``signum_max_step``, since a
higher-order scheme buys nothing across the discontinuity. The finite-time
law switches to the same sub-stepped Euler once it is close to consensus.
Output is subsampled every ``stride`` steps.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .protocols import ExtendedState, Protocol
from .scaling import ScalingSet

__all__ = [
    "SimConfig",
    "Trajectory",
    "SimulationError",
    "integrate",
    "random_initial_state",
    "snowflake_initial_state",
    "write_csv",
    "read_csv",
]


class SimulationError(ValueError):
    pass


@dataclass(frozen=True)
class SimConfig:
    """Integration settings.

    ``method`` is ``"rk4"``, ``"euler"`` or ``"auto"``; ``auto`` picks RK4
    unless the protocol asks for Euler. ``stride`` thins the stored output.
    """

    h: float = 1e-3
    T: float = 10.0
    method: str = "auto"
    stride: int = 10
    seed: int = 0
    signum_max_step: float = 1e-4
    divergence_threshold: float = 1e9

    def __post_init__(self):
        if not (self.h > 0 and math.isfinite(self.h)):
            raise SimulationError(f"step size must be positive, got {self.h}")
        if not (self.T > 0 and math.isfinite(self.T)):
            raise SimulationError(f"horizon must be positive, got {self.T}")
        if self.method not in ("rk4", "euler", "auto"):
            raise SimulationError(f"unknown method {self.method!r}")
        if self.stride < 1:
            raise SimulationError("stride must be at least 1")


@dataclass(eq=False)
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (samples, size)
    layout: dict[str, tuple[int, int, int]]
    diverged: bool = False
    divergence_time: float | None = None
    metadata: dict = field(default_factory=dict)

    def block(self, name: str) -> np.ndarray:
        """Block ``name`` over time as a (samples, rows, cols) array."""
        off, r, c = self.layout[name]
        return self.states[:, off:off + r * c].reshape(-1, r, c)

    @property
    def x(self) -> np.ndarray:
        return self.block("x")

    def final(self) -> ExtendedState:
        return ExtendedState(float(self.times[-1]), self.states[-1].copy(), dict(self.layout))


def _rk4(f, t, y, h):
    k1 = f(t, y)
    k2 = f(t + h / 2, y + h / 2 * k1)
    k3 = f(t + h / 2, y + h / 2 * k2)
    k4 = f(t + h, y + h * k3)
    return y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def integrate(protocol: Protocol, y0, cfg: SimConfig, t0: float = 0.0) -> Trajectory:
    """Integrate ``protocol`` from ``y0`` over ``[t0, t0 + cfg.T]``.

    Returns the trajectory up to the horizon, or up to the first step where
    a component exceeds ``cfg.divergence_threshold`` in magnitude (flagged in
    ``diverged``). The sample at the horizon is always stored.
    """
    y = np.array(y0.y if isinstance(y0, ExtendedState) else y0, dtype=float).reshape(-1)
    if y.size != protocol.size:
        raise SimulationError(f"initial state has {y.size} entries, protocol expects {protocol.size}")
    steps = int(round(cfg.T / cfg.h))
    if not math.isclose(steps * cfg.h, cfg.T, rel_tol=1e-9):
        raise SimulationError(f"horizon {cfg.T} is not a multiple of the step {cfg.h}")
    # Euler sub-steps keep nonsmooth laws at or below the step cap
    sub = max(1, math.ceil(cfg.h / cfg.signum_max_step - 1e-9)) if protocol.nonsmooth else 1
    hs = cfg.h / sub
    f = protocol.rhs
    times, states = [t0], [y.copy()]
    diverged, t_div = False, None
    for k in range(steps):
        t = t0 + k * cfg.h
        if cfg.method == "euler" or (cfg.method == "auto" and protocol.prefers_euler(t, y)):
            for s in range(sub):
                y = y + hs * f(t + s * hs, y)
        else:
            y = _rk4(f, t, y, cfg.h)
        t_next = t0 + (k + 1) * cfg.h
        if not np.all(np.isfinite(y)) or np.abs(y).max() > cfg.divergence_threshold:
            diverged, t_div = True, t_next
            times.append(t_next)
            states.append(y.copy())
            break
        if (k + 1) % cfg.stride == 0 or k + 1 == steps:
            times.append(t_next)
            states.append(y.copy())
    meta = {
        "protocol": protocol.describe(),
        "config": asdict(cfg),
        "t0": t0,
        "substeps": sub,
    }
    return Trajectory(np.array(times), np.array(states), protocol.layout, diverged, t_div, meta)


# -- initial states -------------------------------------------------------------


def _streams(seed: int, n: int) -> list[np.random.Generator]:
    return [np.random.Generator(np.random.PCG64(s)) for s in np.random.SeedSequence(seed).spawn(n)]


def random_initial_state(protocol: Protocol, seed: int, low: float = -2.0, high: float = 2.0,
                         random_blocks: tuple[str, ...] = ("x",), blocks: dict | None = None) -> ExtendedState:
    """Draw the listed blocks from U[low, high] with one PCG64 stream per agent.

    Agent i's stream fills its row of each block in ``random_blocks`` order.
    Other blocks start at zero unless given in ``blocks`` (which also
    overrides random draws), except the adaptive gains ``c`` which default
    to 1 and must be positive.
    """
    n = protocol.n
    layout = protocol.layout
    for name in random_blocks:
        if name not in layout:
            raise SimulationError(f"protocol {protocol.variant} has no state block {name!r}")
    rows = [[g.uniform(low, high, layout[name][2]) for name in random_blocks] for g in _streams(seed, n)]
    given = {name: np.array([r[k] for r in rows]) for k, name in enumerate(random_blocks)}
    given.update(blocks or {})
    if "c" in layout:
        c0 = np.broadcast_to(np.asarray(given.get("c", 1.0), dtype=float), (n,))
        if np.any(c0 <= 0):
            raise SimulationError("initial adaptive gains c_i(0) must be positive")
        given["c"] = c0
    return ExtendedState(0.0, protocol.pack(**given), layout)


def snowflake_initial_state(protocol: Protocol, seed: int, low: float = -2.0, high: float = 2.0) -> ExtendedState:
    """x_i = [3 sign(S_i) + e1, e2, sign(S_i)] with e1, e2 ~ U[low, high].

    The homogeneous coordinate carries sign(S_i) so that the conserved
    third component of the virtual point is nonzero; with a constant 1 it
    vanishes whenever the signs sum to zero and the translations are lost.
    """
    ss: ScalingSet = protocol.scalings
    if ss.d != 3:
        raise SimulationError("the snowflake rule needs 3-dimensional lifted states")
    X = np.empty((ss.n, 3))
    for i, g in enumerate(_streams(seed, ss.n)):
        e = g.uniform(low, high, 2)
        X[i] = (3 * ss.signs[i] + e[0], e[1], ss.signs[i])
    return ExtendedState(0.0, protocol.pack(x=X), protocol.layout)


# -- CSV output -----------------------------------------------------------------


def column_names(layout: dict[str, tuple[int, int, int]]) -> list[str]:
    cols = ["t"]
    for name, (_, r, c) in sorted(layout.items(), key=lambda kv: kv[1][0]):
        cols += [f"{name}_{i}_{k}" for i in range(1, r + 1) for k in range(1, c + 1)]
    return cols


def _atomic_write(path: Path, write) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            write(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(traj: Trajectory, path, extra_meta: dict | None = None) -> Path:
    """Write the trajectory as CSV plus a ``.json`` metadata sidecar.

    Values use ``%.17g`` so the file round-trips bit for bit. Both files are
    written to a temporary name first and then renamed.
    """
    path = Path(path)
    data = np.column_stack([traj.times, traj.states])
    header = ",".join(column_names(traj.layout))
    _atomic_write(path, lambda fh: np.savetxt(fh, data, fmt="%.17g", delimiter=",", header=header, comments=""))
    meta = dict(traj.metadata)
    meta.update(extra_meta or {})
    meta.update({
        "layout": {k: list(v) for k, v in traj.layout.items()},
        "diverged": traj.diverged,
        "divergence_time": traj.divergence_time,
        "samples": int(len(traj.times)),
    })
    side = path.with_suffix(".json")
    _atomic_write(side, lambda fh: json.dump(meta, fh, indent=2, sort_keys=True))
    return path


def read_csv(path) -> tuple[list[str], np.ndarray]:
    path = Path(path)
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header, data
