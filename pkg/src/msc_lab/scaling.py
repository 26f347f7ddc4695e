"""Definite scaling matrices and scaling sets.

A scaling matrix is a real square matrix whose quadratic form is strictly
single-signed. Its sign is cached, together with ``|S| = sign(S) * S``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import block_diag

__all__ = [
    "Definiteness",
    "ScalingError",
    "IndefiniteScalingError",
    "DEFINITENESS_TOL",
    "classify_definiteness",
    "classify_2x2_closed_form",
    "rotation_matrix",
    "ScalingMatrix",
    "ScalingSet",
    "AugmentedScaling",
    "make_transform",
    "axis_scale",
    "rotation",
    "shear_x",
    "shear_y",
    "augment_homogeneous",
    "snowflake_members",
    "snowflake_set",
    "msc_targets",
]

DEFINITENESS_TOL = 1e-9


class Definiteness(enum.Enum):
    POSITIVE = 1
    NEGATIVE = -1
    INDEFINITE = 0


class ScalingError(ValueError):
    pass


class IndefiniteScalingError(ScalingError):
    pass


def classify_definiteness(M, tol: float = DEFINITENESS_TOL) -> Definiteness:
    """Classify via the extreme eigenvalues of the symmetric part.

    Eigenvalues within ``tol`` of zero count as indefinite, so analytic
    boundary cases (shear with |c| = 2, rotation by pi/2) land there.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ScalingError(f"expected a square matrix, got shape {M.shape}")
    ev = np.linalg.eigvalsh(0.5 * (M + M.T))
    if ev[0] > tol:
        return Definiteness.POSITIVE
    if ev[-1] < -tol:
        return Definiteness.NEGATIVE
    return Definiteness.INDEFINITE


def classify_2x2_closed_form(M) -> Definiteness:
    """Trace/discriminant test for 2x2 matrices: a+d and 4ad - (b+c)^2."""
    (a, b), (c, d) = np.asarray(M, dtype=float)
    if 4 * a * d > (b + c) ** 2:
        if a + d > 0:
            return Definiteness.POSITIVE
        if a + d < 0:
            return Definiteness.NEGATIVE
    return Definiteness.INDEFINITE


def rotation_matrix(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ScalingMatrix:
    """A strictly definite d x d matrix (d >= 2) with cached sign."""

    matrix: np.ndarray
    sign: int = field(init=False)

    def __post_init__(self):
        M = _frozen(self.matrix)
        if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] < 2:
            raise ScalingError(f"scaling matrix must be square with d >= 2, got shape {M.shape}")
        cls = classify_definiteness(M)
        if cls is Definiteness.INDEFINITE:
            raise IndefiniteScalingError(f"matrix is not definite:\n{M}")
        object.__setattr__(self, "matrix", M)
        object.__setattr__(self, "sign", cls.value)

    @property
    def d(self) -> int:
        return self.matrix.shape[0]

    @property
    def abs(self) -> np.ndarray:
        return self.sign * self.matrix

    @property
    def inv(self) -> np.ndarray:
        return np.linalg.inv(self.matrix)

    @property
    def is_symmetric(self) -> bool:
        return bool(np.allclose(self.matrix, self.matrix.T, atol=1e-12, rtol=0))

    def __eq__(self, other):
        return isinstance(other, ScalingMatrix) and np.array_equal(self.matrix, other.matrix)

    def __hash__(self):
        return hash(self.matrix.tobytes())

    def __repr__(self):
        return f"ScalingMatrix(sign={self.sign:+d}, matrix={self.matrix.tolist()})"


def axis_scale(a: float, d: float) -> ScalingMatrix:
    return ScalingMatrix(np.diag([a, d]))


def rotation(theta: float) -> ScalingMatrix:
    return ScalingMatrix(rotation_matrix(theta))


def shear_x(c: float) -> ScalingMatrix:
    return ScalingMatrix(np.array([[1.0, c], [0.0, 1.0]]))


def shear_y(c: float) -> ScalingMatrix:
    return ScalingMatrix(np.array([[1.0, 0.0], [c, 1.0]]))


_TRANSFORMS = {
    "scale": lambda p: axis_scale(p["a"], p["d"]),
    "rotation": lambda p: rotation(p["theta"]),
    "shear_x": lambda p: shear_x(p["c"]),
    "shear_y": lambda p: shear_y(p["c"]),
}


def make_transform(kind: str, **params) -> ScalingMatrix:
    """Build one of the elementary 2x2 transforms.

    ``kind`` is ``"scale"`` (``a``, ``d``), ``"rotation"`` (``theta``),
    ``"shear_x"`` or ``"shear_y"`` (``c``). Raises
    :class:`IndefiniteScalingError` when the result is not definite.
    """
    try:
        build = _TRANSFORMS[kind]
    except KeyError:
        raise ScalingError(f"unknown transform kind {kind!r}; expected one of {sorted(_TRANSFORMS)}") from None
    return build(params)


@dataclass(frozen=True, eq=False)
class AugmentedScaling:
    """Homogeneous-coordinate lift of a 2x2 scaling with translation (a, b).

    The 3x3 matrix is ``[[S, sign*(a, b)^T], [0, 0, sign]]``. ``definite`` is
    False when the lifted matrix lost definiteness; ``within_bound`` records
    whether a^2 + b^2 < 4.
    """

    base: ScalingMatrix
    translation: tuple[float, float]
    matrix: np.ndarray
    definite: bool
    within_bound: bool

    def as_scaling(self) -> ScalingMatrix:
        if not self.definite:
            raise IndefiniteScalingError(
                f"augmented scaling with translation {self.translation} is not definite"
            )
        return ScalingMatrix(self.matrix)


def augment_homogeneous(base: ScalingMatrix, a: float, b: float) -> AugmentedScaling:
    if not isinstance(base, ScalingMatrix):
        base = ScalingMatrix(base)
    if base.d != 2:
        raise ScalingError("homogeneous augmentation is defined for 2x2 scalings")
    s = base.sign
    M = np.zeros((3, 3))
    M[:2, :2] = base.matrix
    M[:2, 2] = (s * a, s * b)
    M[2, 2] = s
    cls = classify_definiteness(M)
    return AugmentedScaling(
        base=base,
        translation=(float(a), float(b)),
        matrix=_frozen(M),
        definite=cls.value == s,
        within_bound=a * a + b * b < 4,
    )


class ScalingSet:
    """Ordered collection of n scaling matrices of common dimension d."""

    def __init__(self, members: Sequence):
        mats = [m if isinstance(m, ScalingMatrix) else ScalingMatrix(m) for m in members]
        if not mats:
            raise ScalingError("a scaling set needs at least one matrix")
        dims = {m.d for m in mats}
        if len(dims) != 1:
            raise ScalingError(f"scaling matrices have mixed dimensions {sorted(dims)}")
        self.members: tuple[ScalingMatrix, ...] = tuple(mats)
        self.n = len(mats)
        self.d = mats[0].d
        self.stack = _frozen([m.matrix for m in mats])  # (n, d, d)
        self.signs = _frozen([m.sign for m in mats])
        self.abs_stack = _frozen(self.signs[:, None, None] * self.stack)
        self.inv_stack = _frozen(np.linalg.inv(self.stack))

    def __len__(self):
        return self.n

    def __iter__(self):
        return iter(self.members)

    def __getitem__(self, i) -> ScalingMatrix:
        return self.members[i]

    def __eq__(self, other):
        return isinstance(other, ScalingSet) and np.array_equal(self.stack, other.stack)

    def __repr__(self):
        return f"ScalingSet(n={self.n}, d={self.d}, signs={self.signs.astype(int).tolist()})"

    @property
    def block(self) -> np.ndarray:
        """S = blkdiag(S_1, ..., S_n)."""
        return block_diag(*self.stack)

    @property
    def sign_matrix(self) -> np.ndarray:
        """sign(S) = diag(sign(S_1), ..., sign(S_n)), an n x n matrix."""
        return np.diag(self.signs)

    @property
    def abs_block(self) -> np.ndarray:
        return block_diag(*self.abs_stack)

    @property
    def inv_block(self) -> np.ndarray:
        return block_diag(*self.inv_stack)

    @property
    def all_symmetric(self) -> bool:
        return all(m.is_symmetric for m in self.members)

    def scale(self, x: np.ndarray) -> np.ndarray:
        """Return rows S_i x_i for agent states given as an (n, d) array."""
        return np.einsum("nij,nj->ni", self.stack, np.asarray(x, dtype=float).reshape(self.n, self.d))


def snowflake_members(theta: float = math.pi / 3) -> list[AugmentedScaling]:
    """The 18 lifted scalings of the snowflake formation.

    Agents 3k+1..3k+3 share the rotation R(pi/4 + k theta); their
    translations are R(0), R(2 theta), R(4 theta) applied to (1, 0).
    """
    e1 = np.array([1.0, 0.0])
    out = []
    for k in range(6):
        base = rotation(math.pi / 4 + k * theta)
        for j in range(3):
            t = rotation_matrix(2 * j * theta) @ e1
            out.append(augment_homogeneous(base, t[0], t[1]))
    return out


def snowflake_set(theta: float = math.pi / 3) -> ScalingSet:
    return ScalingSet([m.as_scaling() for m in snowflake_members(theta)])


def msc_targets(ss: ScalingSet, x0) -> np.ndarray:
    """Cluster points S_i^{-1} x0, one row per agent."""
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (ss.d,):
        raise ScalingError(f"x0 must have shape ({ss.d},), got {x0.shape}")
    return np.linalg.solve(ss.stack, np.broadcast_to(x0, (ss.n, ss.d))[..., None])[..., 0]
