"""Matrix-scaled consensus control laws as vector fields.

Every protocol packs its agent states and internal states (estimates,
observers, adaptive gains) into one flat vector. ``layout`` maps each block
name to ``(offset, rows, cols)``; blocks are stored row-major, one row per
agent.

All right-hand sides use per-agent neighbour sums
``sum_j w_ij (S_i x_i - S_j x_j)``; the matrix forms (``-Omega x`` and
friends) are exposed separately so the two can be checked against each other.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import expm

from .graph import DisconnectedGraphError, Graph, is_connected, laplacian
from .scaling import ScalingSet
from .spectral import GainVerificationError, is_hurwitz, msc_laplacian, p_matrix, reduce, theta_c

__all__ = [
    "ProtocolError",
    "CommutationError",
    "StabilityError",
    "ExtendedState",
    "UncertaintyModel",
    "AgentPlant",
    "Protocol",
    "BasicMSC",
    "NonlinearMSC",
    "FiniteTimeMSC",
    "AdaptiveMSC",
    "LinearHomogeneousMSC",
    "AdaptiveGainMSC",
    "HeteroFullInputMSC",
    "ObserverHomogeneousMSC",
    "ObserverHeterogeneousMSC",
    "sgn",
    "sig",
    "virtual_consensus_point",
    "nonlinearity",
    "sinusoidal_regressor",
    "ackermann",
    "observer_ackermann",
]


class ProtocolError(ValueError):
    pass


class CommutationError(ProtocolError):
    pass


class StabilityError(ProtocolError):
    pass


def sgn(y: np.ndarray, eps: float = 0.0) -> np.ndarray:
    """Signum with sgn(0) = 0; ``eps > 0`` gives the boundary layer y/(|y| + eps)."""
    if eps > 0:
        return y / (np.abs(y) + eps)
    return np.sign(y)


def sig(y: np.ndarray, alpha: float) -> np.ndarray:
    return np.sign(y) * np.abs(y) ** alpha


def virtual_consensus_point(ss: ScalingSet, X) -> np.ndarray:
    """x0 = P sum_i sign(S_i) x_i for agent states given as an (n, d) array."""
    X = np.asarray(X, dtype=float).reshape(ss.n, ss.d)
    return p_matrix(ss) @ (ss.signs @ X)


@dataclass(frozen=True, eq=False)
class ExtendedState:
    t: float
    y: np.ndarray
    layout: dict[str, tuple[int, int, int]]

    def block(self, name: str) -> np.ndarray:
        off, rows, cols = self.layout[name]
        return self.y[off:off + rows * cols].reshape(rows, cols)


# -- nonlinear interaction functions ---------------------------------------


def nonlinearity(name: str, graph: Graph | None = None, beta: float = 1.0) -> Callable[[np.ndarray], np.ndarray]:
    """Named componentwise odd function.

    ``tanh_scaled`` is ``beta / max_degree * tanh``, which keeps
    ``||u_i||_inf < beta``; ``sin`` is the Kuramoto coupling.
    """
    if name == "identity":
        return lambda y: y
    if name == "tanh":
        return np.tanh
    if name == "sin":
        return np.sin
    if name == "tanh_scaled":
        if graph is None:
            raise ProtocolError("tanh_scaled needs the graph to know the maximum degree")
        k = beta / graph.max_degree()
        return lambda y: k * np.tanh(y)
    raise ProtocolError(f"unknown nonlinearity {name!r}")


def _check_odd_sign(f, domain: float, samples: int = 257) -> None:
    if np.any(f(np.zeros(3)) != 0):
        raise ProtocolError("interaction function must satisfy f(0) = 0")
    y = np.linspace(-domain, domain, samples)
    y = y[y != 0]
    if np.any(y * f(y) <= 0):
        raise ProtocolError("interaction function must satisfy y f(y) > 0 on its domain")


# -- uncertainty models ------------------------------------------------------


@dataclass(frozen=True, eq=False)
class UncertaintyModel:
    """Regressor ``phi(t, X) -> (n, d, r)`` and the true parameters ``theta (n, r)``.

    The controller never reads ``theta``; only the plant does.
    """

    regressor: Callable[[float, np.ndarray], np.ndarray]
    theta: np.ndarray
    name: str = "custom"

    @property
    def r(self) -> int:
        return self.theta.shape[1]


def sinusoidal_regressor(n: int) -> Callable[[float, np.ndarray], np.ndarray]:
    """phi_i(t) = [[0.2 sin t, 0.5 - 0.2 sin(i t / pi)], [-0.2 sin(t / (i pi)), 0.1 cos(t / pi)]]."""
    idx = np.arange(1, n + 1, dtype=float)

    def phi(t: float, X: np.ndarray | None = None) -> np.ndarray:
        out = np.empty((n, 2, 2))
        out[:, 0, 0] = 0.2 * math.sin(t)
        out[:, 0, 1] = 0.5 - 0.2 * np.sin(idx * t / math.pi)
        out[:, 1, 0] = -0.2 * np.sin(t / (idx * math.pi))
        out[:, 1, 1] = 0.1 * math.cos(t / math.pi)
        return out

    return phi


# -- pole placement ----------------------------------------------------------


def _char_poly_at(A: np.ndarray, poles: Sequence[complex]) -> np.ndarray:
    coeffs = np.real(np.poly(poles))
    k = A.shape[0]
    out = np.zeros_like(A)
    for c in coeffs:
        out = out @ A + c * np.eye(k)
    return out


def ackermann(A, B, poles) -> np.ndarray:
    """Single-input state feedback K (1 x d) placing eig(A + B K) at ``poles``."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float).reshape(-1, 1)
    d = A.shape[0]
    ctrb = np.hstack([np.linalg.matrix_power(A, k) @ B for k in range(d)])
    if abs(np.linalg.det(ctrb)) < 1e-12:
        raise ProtocolError("(A, B) is not controllable")
    last = np.zeros((1, d))
    last[0, -1] = 1.0
    return -last @ np.linalg.solve(ctrb, _char_poly_at(A, poles))


def observer_ackermann(A, C, poles) -> np.ndarray:
    """Observer gain H (d x 1) placing eig(A + H C) at ``poles``."""
    A = np.asarray(A, dtype=float)
    C = np.asarray(C, dtype=float).reshape(1, -1)
    return ackermann(A.T, C.T, poles).T


# -- protocols -----------------------------------------------------------------


class Protocol:
    """Common machinery: neighbour sums, state layout, validation helpers."""

    variant = "abstract"
    has_signum = False
    # True when the right-hand side is not Lipschitz somewhere; Euler steps
    # taken for such protocols are split into sub-steps by the integrator
    nonsmooth = False

    def __init__(self, graph: Graph, scalings: ScalingSet):
        if scalings.n != graph.n:
            raise ProtocolError(f"graph has {graph.n} vertices but {scalings.n} scaling matrices were given")
        if not is_connected(graph):
            raise DisconnectedGraphError("protocols need a connected interaction graph")
        self.graph = graph
        self.scalings = scalings
        self.n, self.d = scalings.n, scalings.d
        self.L = laplacian(graph)
        self.S = np.array(scalings.stack)
        self.signs = np.array(scalings.signs)
        self.abs_S = np.array(scalings.abs_stack)
        src, dst, w = [], [], []
        for i, j, wij in graph.edges:
            src += [i - 1, j - 1]
            dst += [j - 1, i - 1]
            w += [wij, wij]
        self._src, self._dst = np.array(src), np.array(dst)
        self._w = np.array(w)[:, None]
        self._gather = np.zeros((self.n, len(src)))
        self._gather[self._src, np.arange(len(src))] = 1.0
        self._layout: dict[str, tuple[int, int, int]] = {}
        self._size = 0
        self._add_block("x", self.d)

    # layout ---------------------------------------------------------------
    def _add_block(self, name: str, cols: int, rows: int | None = None) -> None:
        rows = self.n if rows is None else rows
        self._layout[name] = (self._size, rows, cols)
        self._size += rows * cols

    @property
    def layout(self) -> dict[str, tuple[int, int, int]]:
        return dict(self._layout)

    @property
    def size(self) -> int:
        return self._size

    def unpack(self, y: np.ndarray) -> dict[str, np.ndarray]:
        return {k: y[o:o + r * c].reshape(r, c) for k, (o, r, c) in self._layout.items()}

    def pack(self, **blocks) -> np.ndarray:
        y = np.zeros(self._size)
        for name, (o, r, c) in self._layout.items():
            if name in blocks:
                y[o:o + r * c] = np.asarray(blocks[name], dtype=float).reshape(-1)
        missing = set(blocks) - set(self._layout)
        if missing:
            raise ProtocolError(f"unknown state blocks {sorted(missing)} for {self.variant}")
        return y

    # coupling -------------------------------------------------------------
    def scaled(self, X: np.ndarray) -> np.ndarray:
        return np.einsum("nij,nj->ni", self.S, X)

    def local(self, X: np.ndarray) -> np.ndarray:
        """Rows sum_j w_ij (S_i x_i - S_j x_j)."""
        return self.L @ self.scaled(X)

    def local_nonlinear(self, X: np.ndarray, f) -> np.ndarray:
        """Rows sum_j w_ij f(S_i x_i - S_j x_j)."""
        SX = self.scaled(X)
        return self._gather @ (self._w * f(SX[self._src] - SX[self._dst]))

    def omega(self) -> np.ndarray:
        return msc_laplacian(self.graph, self.scalings).omega

    def rhs(self, t: float, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def control(self, t: float, y: np.ndarray) -> np.ndarray:
        """Agent inputs u_i as an (n, .) array."""
        raise NotImplementedError

    def prefers_euler(self, t: float, y: np.ndarray) -> bool:
        return self.has_signum

    def parameters(self) -> dict:
        return {}

    def describe(self) -> dict:
        return {"variant": self.variant, **self.parameters()}

    def _matrix(self, A, shape=None, name="matrix") -> np.ndarray:
        A = np.atleast_2d(np.asarray(A, dtype=float))
        if shape is not None and A.shape != shape:
            raise ProtocolError(f"{name} must have shape {shape}, got {A.shape}")
        return A


class BasicMSC(Protocol):
    variant = "basic"

    def control(self, t, y):
        X = y[: self.n * self.d].reshape(self.n, self.d)
        return -self.signs[:, None] * self.local(X)

    def rhs(self, t, y):
        return self.control(t, y).ravel()

    def system_matrix(self) -> np.ndarray:
        return -self.omega()


class NonlinearMSC(Protocol):
    """u_i = -sign(S_i) sum_j w_ij f(S_i x_i - S_j x_j) with f odd and componentwise."""

    variant = "nonlinear"

    def __init__(self, graph, scalings, f: str | Callable = "tanh_scaled", beta: float = 1.0,
                 domain: float = math.inf):
        super().__init__(graph, scalings)
        if isinstance(f, str):
            self.f_name = f
            if f == "sin" and math.isinf(domain):
                domain = math.pi / 2
            f = nonlinearity(f, graph, beta)
        else:
            self.f_name = getattr(f, "__name__", "custom")
        self.f = f
        self.beta = beta
        self.domain = domain
        _check_odd_sign(f, min(domain, 10.0) * (1 - 1e-9))

    def control(self, t, y):
        X = y[: self.n * self.d].reshape(self.n, self.d)
        return -self.signs[:, None] * self.local_nonlinear(X, self.f)

    def rhs(self, t, y):
        return self.control(t, y).ravel()

    def max_scaled_disagreement(self, y) -> float:
        SX = self.scaled(y[: self.n * self.d].reshape(self.n, self.d))
        return float(np.abs(SX[self._src] - SX[self._dst]).max())

    def domain_violated(self, y) -> bool:
        return self.max_scaled_disagreement(y) >= self.domain

    def parameters(self):
        return {"f": self.f_name, "beta": self.beta}


class FiniteTimeMSC(Protocol):
    """u_i = -sign(S_i) [|S_i|^{-1}] sig^alpha(sum_j w_ij (S_i x_i - S_j x_j)).

    The bracketed factor is applied in the ``modified`` form, which also
    admits non-symmetric scalings.
    """

    EULER_SWITCH = 1e-3
    nonsmooth = True

    def __init__(self, graph, scalings, alpha: float = 0.5, modified: bool = False):
        super().__init__(graph, scalings)
        if not 0 < alpha < 1:
            raise ProtocolError(f"alpha must lie in (0, 1), got {alpha}")
        if not modified and not scalings.all_symmetric:
            raise ProtocolError("the unmodified finite-time law needs symmetric scaling matrices")
        self.alpha = float(alpha)
        self.modified = bool(modified)
        self._abs_inv = np.linalg.inv(self.abs_S)

    @property
    def variant(self):
        return "finite_time_modified" if self.modified else "finite_time"

    def control(self, t, y):
        X = y[: self.n * self.d].reshape(self.n, self.d)
        v = sig(self.local(X), self.alpha)
        if self.modified:
            v = np.einsum("nij,nj->ni", self._abs_inv, v)
        return -self.signs[:, None] * v

    def rhs(self, t, y):
        return self.control(t, y).ravel()

    def prefers_euler(self, t, y):
        X = y[: self.n * self.d].reshape(self.n, self.d)
        return bool(np.abs(self.local(X)).max() < self.EULER_SWITCH)

    def parameters(self):
        return {"alpha": self.alpha, "modified": self.modified}


class AdaptiveMSC(Protocol):
    """Certainty-equivalence law for x_i' = u_i + phi_i theta_i.

    u_i = -sign(S_i) sum_j w_ij (S_i x_i - S_j x_j) - phi_i theta_hat_i
    theta_hat_i' = gamma_i phi_i^T S_i^T sum_j w_ij (S_i x_i - S_j x_j)
    """

    variant = "adaptive"

    def __init__(self, graph, scalings, uncertainty: UncertaintyModel, gamma: Sequence[float]):
        super().__init__(graph, scalings)
        theta = np.asarray(uncertainty.theta, dtype=float)
        if theta.ndim != 2 or theta.shape[0] != self.n:
            raise ProtocolError(f"theta must have shape (n, r) with n = {self.n}, got {theta.shape}")
        gamma = np.asarray(gamma, dtype=float).reshape(-1)
        if gamma.shape != (self.n,) or np.any(gamma <= 0):
            raise ProtocolError("gamma must hold n strictly positive adaptation rates")
        probe = np.asarray(uncertainty.regressor(0.0, np.zeros((self.n, self.d))))
        if probe.shape != (self.n, self.d, theta.shape[1]):
            raise ProtocolError(
                f"regressor returns shape {probe.shape}, expected {(self.n, self.d, theta.shape[1])}"
            )
        self.uncertainty = uncertainty
        self.theta = theta
        self.gamma = gamma
        self.r = theta.shape[1]
        self._add_block("theta_hat", self.r)

    def _parts(self, t, y):
        b = self.unpack(y)
        X, th = b["x"], b["theta_hat"]
        phi = self.uncertainty.regressor(t, X)
        loc = self.local(X)
        u = -self.signs[:, None] * loc - np.einsum("nij,nj->ni", phi, th)
        return X, th, phi, loc, u

    def control(self, t, y):
        return self._parts(t, y)[4]

    def rhs(self, t, y):
        X, th, phi, loc, u = self._parts(t, y)
        xdot = u + np.einsum("nij,nj->ni", phi, self.theta)
        SL = np.einsum("nji,nj->ni", self.S, loc)  # S_i^T loc_i
        thdot = self.gamma[:, None] * np.einsum("nji,nj->ni", phi, SL)
        return np.concatenate([xdot.ravel(), thdot.ravel()])

    def lyapunov(self, y) -> float:
        """V = 1/2 x^T S^T (L kron I) S x + sum_i ||theta_i - theta_hat_i||^2 / (2 gamma_i)."""
        b = self.unpack(y)
        SX = self.scaled(b["x"])
        err = self.theta - b["theta_hat"]
        return float(0.5 * np.sum(SX * (self.L @ SX)) + np.sum((err ** 2).sum(axis=1) / (2 * self.gamma)))

    def parameters(self):
        return {"regressor": self.uncertainty.name, "theta": self.theta.tolist(), "gamma": self.gamma.tolist()}


class LinearHomogeneousMSC(Protocol):
    """x_i' = A x_i - c sign(S_i) sum_j w_ij (S_i x_i - S_j x_j)."""

    variant = "linear_homogeneous"

    def __init__(self, graph, scalings, A, c: float):
        super().__init__(graph, scalings)
        self.A = self._matrix(A, (self.d, self.d), "A")
        if c <= 0:
            raise ProtocolError("coupling gain c must be positive")
        self.c = float(c)

    def control(self, t, y):
        X = y[: self.n * self.d].reshape(self.n, self.d)
        return -self.c * self.signs[:, None] * self.local(X)

    def rhs(self, t, y):
        X = y[: self.n * self.d].reshape(self.n, self.d)
        return (X @ self.A.T + self.control(t, y)).ravel()

    def system_matrix(self) -> np.ndarray:
        return np.kron(np.eye(self.n), self.A) - self.c * self.omega()

    def parameters(self):
        return {"A": self.A.tolist(), "c": self.c}


class AdaptiveGainMSC(Protocol):
    """Distributed gain tuning for x' = (I kron A - C Omega) x.

    c_i' = kappa_i chi_i^T |S_i| chi_i with chi_i = exp(-A (t - t0)) sum_j
    w_ij (S_i x_i - S_j x_j). Every S_i must commute with A.
    """

    variant = "adaptive_gain"

    def __init__(self, graph, scalings, A, kappa: Sequence[float], t0: float = 0.0, tol: float = 1e-9):
        super().__init__(graph, scalings)
        self.A = self._matrix(A, (self.d, self.d), "A")
        for i, S in enumerate(self.S):
            err = np.linalg.norm(S @ self.A - self.A @ S)
            if err > tol:
                raise CommutationError(
                    f"S_{i + 1} does not commute with A (||S A - A S|| = {err:.3g}); adaptive gain tuning "
                    "is only guaranteed when every scaling matrix commutes with A"
                )
        kappa = np.asarray(kappa, dtype=float).reshape(-1)
        if kappa.size == 1:
            kappa = np.full(self.n, kappa[0])
        if kappa.shape != (self.n,) or np.any(kappa <= 0):
            raise ProtocolError("kappa must hold n positive rates")
        self.kappa = kappa
        self.t0 = float(t0)
        self._add_block("c", 1)
        self._expm = lru_cache(maxsize=16)(self._expm_uncached)

    def _expm_uncached(self, t: float) -> np.ndarray:
        return expm(-self.A * (t - self.t0))

    def chi(self, t, X) -> np.ndarray:
        return self.local(X) @ self._expm(float(t)).T

    def control(self, t, y):
        b = self.unpack(y)
        return -(b["c"] * self.signs[:, None]) * self.local(b["x"])

    def rhs(self, t, y):
        b = self.unpack(y)
        X, c = b["x"], b["c"]
        loc = self.local(X)
        chi = loc @ self._expm(float(t)).T
        cdot = self.kappa * np.einsum("ni,nij,nj->n", chi, self.abs_S, chi)
        xdot = X @ self.A.T - (c * self.signs[:, None]) * loc
        return np.concatenate([xdot.ravel(), cdot])

    def parameters(self):
        return {"A": self.A.tolist(), "kappa": self.kappa.tolist(), "t0": self.t0}


def _max_entry(Ms: np.ndarray) -> float:
    return float(np.abs(Ms).max()) if Ms.size else 0.0


class HeteroFullInputMSC(Protocol):
    """Sliding-mode compensation of unknown A_i = A + Abar_i with full input.

    z_i' = A x_i - c sign(S_i) sum_j w_ij (S_i x_i - S_j x_j)
    u_i  = -c sign(S_i) sum_j (...) + beta1 sgn(e_i) + beta2 sgn(e_i) ||x_i||_1
    with e_i = z_i - x_i. The plant matrices are held by the plant only; the
    controller sees A, c, beta1 and beta2.
    """

    variant = "hetero_full_input"

    def __init__(self, graph, scalings, A, plants, c: float, beta1: float, beta2: float, eps: float = 0.0):
        super().__init__(graph, scalings)
        self.A = self._matrix(A, (self.d, self.d), "A")
        plants = np.asarray(plants, dtype=float)
        if plants.shape != (self.n, self.d, self.d):
            raise ProtocolError(f"plants must have shape {(self.n, self.d, self.d)}, got {plants.shape}")
        if c <= 0 or beta1 < 0 or beta2 < 0 or eps < 0:
            raise ProtocolError("need c > 0, beta1 >= 0, beta2 >= 0, eps >= 0")
        self.plants = plants
        self.c, self.beta1, self.beta2, self.eps = float(c), float(beta1), float(beta2), float(eps)
        self.has_signum = self.nonsmooth = (beta1 > 0 or beta2 > 0) and eps == 0
        bound = _max_entry(plants - self.A)
        if beta2 < bound:
            warnings.warn(f"beta2 = {beta2} is below max |Abar_i| entry {bound:.3g}; compensation not guaranteed",
                          stacklevel=2)
        self._add_block("z", self.d)

    def _parts(self, y):
        b = self.unpack(y)
        X, Z = b["x"], b["z"]
        coup = -self.c * self.signs[:, None] * self.local(X)
        s = sgn(Z - X, self.eps)
        u = coup + self.beta1 * s + self.beta2 * s * np.abs(X).sum(axis=1, keepdims=True)
        return X, coup, u

    def control(self, t, y):
        return self._parts(y)[2]

    def rhs(self, t, y):
        X, coup, u = self._parts(y)
        xdot = np.einsum("nij,nj->ni", self.plants, X) + u
        zdot = X @ self.A.T + coup
        return np.concatenate([xdot.ravel(), zdot.ravel()])

    def compensation_term(self, X, E) -> np.ndarray:
        """beta2 diag(sgn e_i) (I_d kron |x_i|^T) 1_{d^2}, per agent."""
        return self.beta2 * sgn(E, self.eps) * np.abs(X).sum(axis=1, keepdims=True)

    def parameters(self):
        return {"A": self.A.tolist(), "plants": self.plants.tolist(), "c": self.c,
                "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps}


def _validate_theta_c(graph, scalings, A, c) -> None:
    rp = reduce(msc_laplacian(graph, scalings))
    if not is_hurwitz(theta_c(rp, A, c)):
        raise GainVerificationError(f"Theta_c is not Hurwitz for c = {c}; choose a larger coupling gain")


class ObserverHomogeneousMSC(Protocol):
    """Observer-based law for identical agents x_i' = A x_i + B u_i, y_i = C x_i.

    xhat_i' = A xhat_i + B u_i + H (C xhat_i - y_i)
    eta_i'  = A eta_i + B u_i + H (C xhat_i - y_i) + c sign(S_i) sum_j w_ij (S_i zeta_i - S_j zeta_j)
    u_i = K eta_i, with zeta_i = xhat_i - eta_i.
    """

    variant = "observer_homogeneous"

    def __init__(self, graph, scalings, A, B, C, K, H, c: float):
        super().__init__(graph, scalings)
        d = self.d
        self.A = self._matrix(A, (d, d), "A")
        self.B = np.asarray(B, dtype=float).reshape(d, -1)
        p = self.B.shape[1]
        self.C = np.atleast_2d(np.asarray(C, dtype=float))
        q = self.C.shape[0]
        self.K = self._matrix(K, (p, d), "K")
        self.H = np.asarray(H, dtype=float).reshape(d, q)
        if c <= 0:
            raise ProtocolError("coupling gain c must be positive")
        self.c = float(c)
        if not is_hurwitz(self.A + self.B @ self.K):
            raise StabilityError("A + B K is not Hurwitz")
        if not is_hurwitz(self.A + self.H @ self.C):
            raise StabilityError("A + H C is not Hurwitz")
        _validate_theta_c(graph, scalings, self.A, self.c)
        self._add_block("xhat", d)
        self._add_block("eta", d)

    def control(self, t, y):
        return self.unpack(y)["eta"] @ self.K.T

    def rhs(self, t, y):
        b = self.unpack(y)
        X, Xh, Eta = b["x"], b["xhat"], b["eta"]
        Bu = (Eta @ self.K.T) @ self.B.T
        innov = (Xh @ self.C.T - X @ self.C.T) @ self.H.T
        coup = self.c * self.signs[:, None] * self.local(Xh - Eta)
        return np.concatenate([
            (X @ self.A.T + Bu).ravel(),
            (Xh @ self.A.T + Bu + innov).ravel(),
            (Eta @ self.A.T + Bu + innov + coup).ravel(),
        ])

    def parameters(self):
        return {"A": self.A.tolist(), "B": self.B.tolist(), "C": self.C.tolist(),
                "K": self.K.tolist(), "H": self.H.tolist(), "c": self.c}


@dataclass(frozen=True, eq=False)
class AgentPlant:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    K: np.ndarray
    H: np.ndarray


class ObserverHeterogeneousMSC(Protocol):
    """Observer-based law for heterogeneous agents with sliding-mode compensation.

    Each agent runs an observer with its own (A_i, B_i, C_i, H_i) and feedback
    K_i. The consensus part acts on zeta_i = xhat_i - eta_i through the
    reference state z_i and the compensated input

        uhat_i = -c sign(S_i) sum_j w_ij (S_i zeta_i - S_j zeta_j)
                 + beta1 sgn(e_i) + beta2 sgn(e_i) ||zeta_i||_1,   e_i = z_i - zeta_i.
    """

    variant = "observer_heterogeneous"

    def __init__(self, graph, scalings, A, plants: Sequence[AgentPlant], c: float, beta1: float, beta2: float,
                 eps: float = 0.0):
        super().__init__(graph, scalings)
        d = self.d
        self.A = self._matrix(A, (d, d), "A")
        if len(plants) != self.n:
            raise ProtocolError(f"need {self.n} agent plants, got {len(plants)}")
        try:
            self.As = np.array([np.asarray(p.A, dtype=float).reshape(d, d) for p in plants])
            self.Bs = np.array([np.asarray(p.B, dtype=float).reshape(d, -1) for p in plants])
            self.Cs = np.array([np.atleast_2d(np.asarray(p.C, dtype=float)) for p in plants])
            self.Ks = np.array([np.atleast_2d(np.asarray(p.K, dtype=float)) for p in plants])
            self.Hs = np.array([np.asarray(p.H, dtype=float).reshape(d, -1) for p in plants])
        except ValueError as exc:
            raise ProtocolError(f"agent plant matrices have inconsistent shapes: {exc}") from None
        for i in range(self.n):
            if not is_hurwitz(self.As[i] + self.Bs[i] @ self.Ks[i]):
                raise StabilityError(f"A_{i + 1} + B_{i + 1} K_{i + 1} is not Hurwitz")
            if not is_hurwitz(self.As[i] + self.Hs[i] @ self.Cs[i]):
                raise StabilityError(f"A_{i + 1} + H_{i + 1} C_{i + 1} is not Hurwitz")
        if c <= 0 or beta1 < 0 or beta2 < 0 or eps < 0:
            raise ProtocolError("need c > 0, beta1 >= 0, beta2 >= 0, eps >= 0")
        self.c, self.beta1, self.beta2, self.eps = float(c), float(beta1), float(beta2), float(eps)
        _validate_theta_c(graph, scalings, self.A, self.c)
        bound = _max_entry(self.As - self.A)
        if beta2 < bound:
            warnings.warn(f"beta2 = {beta2} is below max |Abar_i| entry {bound:.3g}; compensation not guaranteed",
                          stacklevel=2)
        self.has_signum = self.nonsmooth = (beta1 > 0 or beta2 > 0) and eps == 0
        self._add_block("xhat", d)
        self._add_block("eta", d)
        self._add_block("z", d)

    def _uhat(self, Zeta, Z):
        coup = -self.c * self.signs[:, None] * self.local(Zeta)
        s = sgn(Z - Zeta, self.eps)
        return coup, coup + self.beta1 * s + self.beta2 * s * np.abs(Zeta).sum(axis=1, keepdims=True)

    def control(self, t, y):
        return np.einsum("nij,nj->ni", self.Ks, self.unpack(y)["eta"])

    def rhs(self, t, y):
        b = self.unpack(y)
        X, Xh, Eta, Z = b["x"], b["xhat"], b["eta"], b["z"]
        Zeta = Xh - Eta
        coup, uhat = self._uhat(Zeta, Z)
        u = np.einsum("nij,nj->ni", self.Ks, Eta)
        Bu = np.einsum("nij,nj->ni", self.Bs, u)
        innov = np.einsum("nij,nj->ni", self.Hs, np.einsum("nij,nj->ni", self.Cs, Xh - X))
        mv = lambda M, V: np.einsum("nij,nj->ni", M, V)  # noqa: E731
        return np.concatenate([
            (mv(self.As, X) + Bu).ravel(),
            (mv(self.As, Xh) + Bu + innov).ravel(),
            (mv(self.As, Eta) + Bu + innov - uhat).ravel(),
            (Zeta @ self.A.T + coup).ravel(),
        ])

    def parameters(self):
        return {"A": self.A.tolist(), "c": self.c, "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps,
                "plants": [{"A": a.tolist(), "B": b.tolist(), "C": c.tolist(), "K": k.tolist(), "H": h.tolist()}
                           for a, b, c, k, h in zip(self.As, self.Bs, self.Cs, self.Ks, self.Hs)]}
