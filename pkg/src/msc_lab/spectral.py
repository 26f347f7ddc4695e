"""Spectral analysis of the matrix-scaled Laplacian.

``Omega = (sign(S) L kron I_d) S`` is non-symmetric in general. Its kernel
encodes the consensus space; its reduction ``Omega'`` on the complement
drives every linear protocol, and its Lyapunov solution gives the coupling
gain bound ``c > 2 ||A|| lambda_max(Q)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import null_space, schur

from .graph import DisconnectedGraphError, Graph, is_connected, laplacian
from .scaling import ScalingSet

__all__ = [
    "SpectralError",
    "NotStableError",
    "GainVerificationError",
    "IllConditionedError",
    "ZERO_TOL",
    "MscLaplacian",
    "ReducedPair",
    "GainSynthesis",
    "InterlacingReport",
    "SpectralReport",
    "msc_laplacian",
    "p_matrix",
    "schur_eigenvalues",
    "is_hurwitz",
    "kernel_bases",
    "reduce",
    "lyapunov_solve",
    "theta_c",
    "coupling_gain",
    "interlacing_check",
    "analyze",
]

ZERO_TOL = 1e-8
DEFAULT_MARGIN = 1.05


class SpectralError(ValueError):
    pass


class NotStableError(SpectralError):
    pass


class GainVerificationError(SpectralError):
    pass


class IllConditionedError(SpectralError):
    pass


@dataclass(frozen=True, eq=False)
class MscLaplacian:
    omega: np.ndarray
    graph: Graph
    scalings: ScalingSet

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def d(self) -> int:
        return self.scalings.d


def msc_laplacian(g: Graph, ss: ScalingSet) -> MscLaplacian:
    if ss.n != g.n:
        raise SpectralError(f"graph has {g.n} vertices but {ss.n} scaling matrices were given")
    L = laplacian(g)
    omega = np.kron(ss.sign_matrix @ L, np.eye(ss.d)) @ ss.block
    return MscLaplacian(omega, g, ss)


def p_matrix(ss: ScalingSet) -> np.ndarray:
    """P = (sum_i |S_i|^{-1})^{-1}."""
    return np.linalg.inv(np.linalg.inv(ss.abs_stack).sum(axis=0))


def schur_eigenvalues(M: np.ndarray) -> np.ndarray:
    """Eigenvalues read off the real Schur form, sorted by real part."""
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return np.zeros(0, dtype=complex)
    T, _ = schur(M, output="real")
    k, ev = 0, []
    size = T.shape[0]
    while k < size:
        if k + 1 < size and T[k + 1, k] != 0.0:
            a, b, c, d = T[k, k], T[k, k + 1], T[k + 1, k], T[k + 1, k + 1]
            mid, disc = 0.5 * (a + d), 0.25 * (a - d) ** 2 + b * c
            root = np.sqrt(complex(disc))
            ev.extend([mid + root, mid - root])
            k += 2
        else:
            ev.append(complex(T[k, k]))
            k += 1
    ev = np.array(ev)
    return ev[np.lexsort((ev.imag, ev.real))]


def is_hurwitz(M: np.ndarray) -> bool:
    """True iff max Re(eig) < -1e-9 (1 + ||M||)."""
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return True
    thr = -1e-9 * (1.0 + np.linalg.norm(M, 2))
    return bool(schur_eigenvalues(M).real.max() < thr)


def _require_connected(ml: MscLaplacian) -> None:
    if not is_connected(ml.graph):
        raise DisconnectedGraphError("kernel of Omega is larger than d for a disconnected graph")


def kernel_bases(ml: MscLaplacian) -> tuple[np.ndarray, np.ndarray]:
    """Right kernel S^{-1}(1_n kron I_d) and left kernel sign(S)1_n kron I_d."""
    _require_connected(ml)
    ss = ml.scalings
    ones = np.kron(np.ones((ss.n, 1)), np.eye(ss.d))
    right = ss.inv_block @ ones
    left = np.kron(ss.signs[:, None], np.eye(ss.d))
    return right, left


@dataclass(frozen=True, eq=False)
class ReducedPair:
    """Biorthogonal pair with ``Z^T V = I`` block-diagonalising Omega."""

    V: np.ndarray
    Z: np.ndarray
    omega_prime: np.ndarray
    P: np.ndarray
    d: int

    @property
    def V_rest(self) -> np.ndarray:
        return self.V[:, self.d:]

    @property
    def Z_rest(self) -> np.ndarray:
        return self.Z[:, self.d:]


def reduce(ml: MscLaplacian, max_cond: float = 1e12) -> ReducedPair:
    """Reduce Omega to Omega' on the complement of its kernel.

    The leading columns are V_1 = S^{-1}(1_n kron P) and Z_1 = sign(S)1_n kron
    I_d; since Z_1^T V_1 = sum_i |S_i|^{-1} P = I, completing V by an
    orthonormal basis of span(Z_1)^perp and taking Z = V^{-T} keeps those
    leading columns intact.
    """
    right, left = kernel_bases(ml)
    P = p_matrix(ml.scalings)
    V1 = right @ P
    V = np.hstack([V1, null_space(left.T)])
    cond = np.linalg.cond(V)
    if not np.isfinite(cond) or cond > max_cond:
        raise IllConditionedError(f"completion of V is ill-conditioned (cond = {cond:.3g})")
    Z = np.linalg.inv(V).T
    d = ml.d
    omega_prime = Z[:, d:].T @ ml.omega @ V[:, d:]
    return ReducedPair(V, Z, omega_prime, P, d)


def lyapunov_solve(M: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    """Solve Q M + M^T Q = I for stable -M by Kronecker vectorisation.

    With column-major vec, vec(Q M) = (M^T kron I) vec(Q) and
    vec(M^T Q) = (I kron M^T) vec(Q).
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    k = M.shape[0]
    if M.shape != (k, k):
        raise SpectralError(f"expected a square matrix, got shape {M.shape}")
    if not is_hurwitz(-M):
        raise NotStableError("-M is not Hurwitz; the Lyapunov equation has no positive definite solution")
    eye = np.eye(k)
    K = np.kron(M.T, eye) + np.kron(eye, M.T)
    q = np.linalg.solve(K, eye.reshape(-1, order="F"))
    Q = q.reshape((k, k), order="F")
    Q = 0.5 * (Q + Q.T)
    resid = np.abs(Q @ M + M.T @ Q - eye).max()
    if resid > tol:
        raise SpectralError(f"Lyapunov residual {resid:.3g} exceeds {tol:g}")
    if np.linalg.eigvalsh(Q)[0] <= 0:
        raise NotStableError("Lyapunov solution is not positive definite")
    return Q


def theta_c(rp: ReducedPair, A: np.ndarray, c: float) -> np.ndarray:
    """Reduced closed-loop matrix Z_rest^T (I_n kron A) V_rest - c Omega'."""
    A = np.asarray(A, dtype=float)
    n = rp.V.shape[0] // rp.d
    return rp.Z_rest.T @ np.kron(np.eye(n), A) @ rp.V_rest - c * rp.omega_prime


@dataclass(frozen=True, eq=False)
class GainSynthesis:
    c: float
    bound: float
    Q: np.ndarray
    theta_c_eigenvalues: np.ndarray
    hurwitz: bool


def coupling_gain(
    rp: ReducedPair,
    A: np.ndarray,
    margin: float = DEFAULT_MARGIN,
    c: float | None = None,
    Q: np.ndarray | None = None,
) -> GainSynthesis:
    """Synthesize (or, with ``c`` given, verify) a stabilizing coupling gain.

    The synthesized value is ``margin * 2 ||A||_2 lambda_max(Q)``. When
    ``A = 0`` the bound is zero and any positive gain works; ``margin`` is
    then returned as the gain itself. Raises :class:`GainVerificationError`
    if the reduced closed loop is not Hurwitz.
    """
    if margin < 1:
        raise SpectralError("margin must be >= 1")
    A = np.asarray(A, dtype=float)
    if Q is None:
        Q = lyapunov_solve(rp.omega_prime)
    bound = 2.0 * np.linalg.norm(A, 2) * np.linalg.eigvalsh(Q)[-1]
    if c is None:
        c = margin * bound if bound > 0 else float(margin)
    if c <= 0:
        raise SpectralError("coupling gain must be positive")
    M = theta_c(rp, A, c)
    ok = is_hurwitz(M)
    result = GainSynthesis(float(c), float(bound), Q, schur_eigenvalues(M), ok)
    if not ok:
        raise GainVerificationError(
            f"Theta_c is not Hurwitz for c = {c:g} (max Re = {result.theta_c_eigenvalues.real.max():.3g})"
        )
    return result


@dataclass(frozen=True)
class InterlacingReport:
    p_min: float
    p_max: float
    lambda_2: float
    lambda_n: float
    max_imag: float
    nonzero: tuple[float, ...]

    @property
    def lower(self) -> float:
        return self.p_min * self.lambda_2

    @property
    def upper(self) -> float:
        return self.p_max * self.lambda_n

    @property
    def all_real(self) -> bool:
        return self.max_imag <= 1e-8

    def contained_in(self, lo: float, hi: float, tol: float = 1e-9) -> bool:
        return all(lo - tol <= v <= hi + tol for v in self.nonzero)

    @property
    def contained(self) -> bool:
        return self.contained_in(self.lower, self.upper)


def interlacing_check(ml: MscLaplacian) -> InterlacingReport:
    """Realness and interval containment of the nonzero eigenvalues of Omega.

    Requires every S_i symmetric; p_min and p_max are the extreme eigenvalues
    over all |S_i|.
    """
    ss = ml.scalings
    if not ss.all_symmetric:
        raise SpectralError("interlacing bounds need symmetric scaling matrices")
    _require_connected(ml)
    p = np.concatenate([np.linalg.eigvalsh(a) for a in ss.abs_stack])
    lam = np.linalg.eigvalsh(laplacian(ml.graph))
    ev = schur_eigenvalues(ml.omega)
    nonzero = ev[np.argsort(np.abs(ev))][ml.d:]
    nonzero = np.sort(nonzero.real)
    return InterlacingReport(
        p_min=float(p.min()),
        p_max=float(p.max()),
        lambda_2=float(lam[1]),
        lambda_n=float(lam[-1]),
        max_imag=float(np.abs(ev.imag).max()),
        nonzero=tuple(float(v) for v in nonzero),
    )


@dataclass(eq=False)
class SpectralReport:
    eigenvalues: np.ndarray
    kernel_dim: int
    n: int
    d: int
    P: np.ndarray
    checks: dict[str, bool] = field(default_factory=dict)
    Q: np.ndarray | None = None
    gain: GainSynthesis | None = None
    interlacing: InterlacingReport | None = None
    notes: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(self.checks.values())

    def to_dict(self) -> dict:
        out = {
            "n": self.n,
            "d": self.d,
            "eigenvalues": [[float(z.real), float(z.imag)] for z in self.eigenvalues],
            "kernel_dim": self.kernel_dim,
            "P": self.P.tolist(),
            "checks": dict(self.checks),
            "ok": self.ok,
            "notes": list(self.notes),
        }
        if self.Q is not None:
            out["Q_lambda_max"] = float(np.linalg.eigvalsh(self.Q)[-1])
            out["Q"] = self.Q.tolist()
        if self.gain is not None:
            out["coupling_gain"] = {
                "c": self.gain.c,
                "bound": self.gain.bound,
                "hurwitz": self.gain.hurwitz,
                "theta_c_eigenvalues": [[float(z.real), float(z.imag)] for z in self.gain.theta_c_eigenvalues],
            }
        if self.interlacing is not None:
            il = self.interlacing
            out["interlacing"] = {
                "p_min": il.p_min,
                "p_max": il.p_max,
                "interval": [il.lower, il.upper],
                "all_real": il.all_real,
                "contained": il.contained,
            }
        return out


def _kernel_dim(omega: np.ndarray, ev: np.ndarray) -> int:
    scale = np.linalg.norm(omega, 2)
    if scale == 0:
        return omega.shape[0]
    return int(np.sum(np.abs(ev) / scale <= ZERO_TOL))


def analyze(
    g: Graph,
    ss: ScalingSet,
    A: np.ndarray | None = None,
    c: float | None = None,
    margin: float = DEFAULT_MARGIN,
) -> SpectralReport:
    """Full spectral report; never raises on a failed invariant, records it instead."""
    ml = msc_laplacian(g, ss)
    ev = schur_eigenvalues(ml.omega)
    kdim = _kernel_dim(ml.omega, ev)
    nd = ss.n * ss.d
    report = SpectralReport(ev, kdim, ss.n, ss.d, p_matrix(ss))
    report.checks["kernel_dim_equals_d"] = kdim == ss.d
    order = np.argsort(np.abs(ev))
    rest = ev[order][ss.d:]
    report.checks["nonzero_positive_real"] = bool(nd == ss.d or rest.real.min() > 1e-9)
    if not is_connected(g):
        report.notes.append("graph is disconnected")
        return report

    rp = reduce(ml)
    mirror = np.sort_complex(schur_eigenvalues(rp.omega_prime))
    report.checks["reduction_spectrum_matches"] = bool(
        np.allclose(np.sort_complex(rest), mirror, atol=1e-6, rtol=0)
    )
    report.checks["biorthogonal"] = bool(np.abs(rp.Z.T @ rp.V - np.eye(nd)).max() <= 1e-8)
    report.checks["reduced_hurwitz"] = is_hurwitz(-rp.omega_prime)
    if report.checks["reduced_hurwitz"]:
        report.Q = lyapunov_solve(rp.omega_prime)
    if ss.all_symmetric:
        il = interlacing_check(ml)
        report.interlacing = il
        report.checks["eigenvalues_real"] = il.all_real
        report.checks["interlacing_contained"] = il.contained
    if A is not None and report.Q is not None:
        try:
            report.gain = coupling_gain(rp, A, margin=margin, c=c, Q=report.Q)
            report.checks["theta_c_hurwitz"] = True
        except GainVerificationError as exc:
            report.checks["theta_c_hurwitz"] = False
            report.notes.append(str(exc))
    return report
