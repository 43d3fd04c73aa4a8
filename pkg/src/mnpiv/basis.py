"""B-spline sieve bases on [0, 1] and the smoothing kernel used by the IV test.

The basis uses a clamped (open) knot vector with ``degree + 1`` copies of each
boundary knot, so the raw basis is a partition of unity and spans constants.
An optional orthonormalized variant rotates the raw basis by the inverse
Cholesky factor of its L2[0, 1] Gram matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import as_1d_column, as_unit_interval

__all__ = [
    "SplineBasis",
    "Kernel",
    "BSplineFeatures",
    "make_basis",
    "eval_basis",
    "eval_deriv",
    "design_matrix",
    "derivative_matrix",
    "gram_matrix",
    "kernel_weight",
]


@dataclass(frozen=True, eq=False)
class SplineBasis:
    """Univariate B-spline basis on [0, 1].

    Attributes
    ----------
    degree : int
        Polynomial degree of the pieces (>= 1).
    interior_knots : tuple of float
        Strictly increasing knots inside (0, 1).
    rotation : ndarray of shape (dim, dim) or None
        When set, the basis evaluates to ``rotation @ raw(x)``.
    """

    degree: int
    interior_knots: tuple[float, ...]
    rotation: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if int(self.degree) != self.degree or self.degree < 1:
            raise ValueError(f"degree must be an integer >= 1, got {self.degree!r}")
        knots = np.asarray(self.interior_knots, dtype=float)
        if knots.size:
            if knots.min() <= 0.0 or knots.max() >= 1.0:
                raise ValueError("interior knots must lie strictly inside (0, 1)")
            if np.any(np.diff(knots) <= 0):
                raise ValueError("interior knots must be strictly increasing")
        object.__setattr__(self, "interior_knots", tuple(float(k) for k in knots))
        if self.rotation is not None:
            rot = np.array(self.rotation, dtype=float)
            if rot.shape != (self.dim, self.dim):
                raise ValueError(f"rotation must have shape {(self.dim, self.dim)}")
            if np.linalg.matrix_rank(rot) < self.dim:
                raise ValueError("rotation matrix must be invertible")
            rot.setflags(write=False)
            object.__setattr__(self, "rotation", rot)

    @property
    def dim(self) -> int:
        return len(self.interior_knots) + self.degree + 1

    @property
    def knots(self) -> np.ndarray:
        """Full clamped knot vector."""
        d = self.degree
        return np.r_[np.zeros(d + 1), self.interior_knots, np.ones(d + 1)]

    @property
    def breakpoints(self) -> np.ndarray:
        """Distinct knots including the boundary, i.e. the piece boundaries."""
        return np.r_[0.0, self.interior_knots, 1.0]

    @property
    def orthonormal(self) -> bool:
        return self.rotation is not None

    def raw(self) -> SplineBasis:
        """The unrotated basis with the same knots."""
        return SplineBasis(self.degree, self.interior_knots)

    def orthonormalized(self) -> SplineBasis:
        """Basis rotated to be orthonormal in L2[0, 1]."""
        raw = self.raw()
        chol = np.linalg.cholesky(gram_matrix(raw))
        return SplineBasis(self.degree, self.interior_knots, np.linalg.inv(chol))

    def __call__(self, x) -> np.ndarray:
        return design_matrix(self, x)

    def deriv(self, x) -> np.ndarray:
        return derivative_matrix(self, x)


def make_basis(degree: int, num_interior_knots: int, orthonormal: bool = False) -> SplineBasis:
    """Clamped B-spline basis with equispaced interior knots.

    ``dim = num_interior_knots + degree + 1``.
    """
    if int(num_interior_knots) != num_interior_knots or num_interior_knots < 0:
        raise ValueError(f"num_interior_knots must be a nonnegative integer, got {num_interior_knots!r}")
    knots = np.linspace(0.0, 1.0, int(num_interior_knots) + 2)[1:-1]
    basis = SplineBasis(degree, tuple(knots))
    return basis.orthonormalized() if orthonormal else basis


def _cox_de_boor(knots: np.ndarray, degree: int, x: np.ndarray) -> np.ndarray:
    """Values of all B-splines of ``degree`` on ``knots`` at points ``x`` (n, len(knots)-degree-1)."""
    n_int = len(knots) - 1
    # degree-0 indicators on half-open spans; x == 1 goes to the last nonempty span
    basis = ((knots[:-1] <= x[:, None]) & (x[:, None] < knots[1:])).astype(float)
    last = np.nonzero(knots[:-1] < knots[1:])[0][-1]
    at_right = x >= knots[-1]
    basis[at_right, :] = 0.0
    basis[at_right, last] = 1.0
    for d in range(1, degree + 1):
        m = n_int - d
        left_den = knots[d : d + m] - knots[:m]
        right_den = knots[d + 1 : d + 1 + m] - knots[1 : 1 + m]
        with np.errstate(divide="ignore", invalid="ignore"):
            left = np.where(left_den > 0, (x[:, None] - knots[:m]) / left_den, 0.0)
            right = np.where(
                right_den > 0, (knots[d + 1 : d + 1 + m] - x[:, None]) / right_den, 0.0
            )
        basis = left * basis[:, :m] + right * basis[:, 1 : m + 1]
    return basis


def _raw_derivative(knots: np.ndarray, degree: int, x: np.ndarray) -> np.ndarray:
    lower = _cox_de_boor(knots, degree - 1, x)
    dim = len(knots) - degree - 1
    left_den = knots[degree : degree + dim] - knots[:dim]
    right_den = knots[degree + 1 : degree + 1 + dim] - knots[1 : 1 + dim]
    with np.errstate(divide="ignore", invalid="ignore"):
        left = np.where(left_den > 0, degree / left_den, 0.0)
        right = np.where(right_den > 0, degree / right_den, 0.0)
    return left * lower[:, :dim] - right * lower[:, 1 : dim + 1]


def design_matrix(basis: SplineBasis, points) -> np.ndarray:
    """Matrix whose row ``i`` holds the basis evaluated at ``points[i]``."""
    x = as_unit_interval(points, "points")
    mat = _cox_de_boor(basis.knots, basis.degree, x)
    if basis.rotation is not None:
        mat = mat @ basis.rotation.T
    return mat


def derivative_matrix(basis: SplineBasis, points) -> np.ndarray:
    """Matrix of first derivatives of the basis functions at ``points``."""
    x = as_unit_interval(points, "points")
    mat = _raw_derivative(basis.knots, basis.degree, x)
    if basis.rotation is not None:
        mat = mat @ basis.rotation.T
    return mat


def eval_basis(basis: SplineBasis, x: float) -> np.ndarray:
    """Basis vector ``p(x)`` at a single point."""
    return design_matrix(basis, [x])[0]


def eval_deriv(basis: SplineBasis, x: float) -> np.ndarray:
    """Derivative vector ``Dp(x)`` at a single point."""
    return derivative_matrix(basis, [x])[0]


def gauss_legendre_pieces(breaks, n_nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre nodes and weights over consecutive ``breaks``."""
    breaks = np.unique(np.asarray(breaks, dtype=float))
    t, wt = np.polynomial.legendre.leggauss(n_nodes)
    lo, hi = breaks[:-1, None], breaks[1:, None]
    nodes = 0.5 * (hi - lo) * t + 0.5 * (hi + lo)
    weights = 0.5 * (hi - lo) * wt
    return nodes.ravel(), weights.ravel()


def gram_matrix(basis: SplineBasis, lower: float = 0.0, upper: float = 1.0) -> np.ndarray:
    """Exact Lebesgue Gram matrix ``int_lower^upper p(x) p(x)' dx``."""
    breaks = basis.breakpoints
    breaks = np.r_[lower, breaks[(breaks > lower) & (breaks < upper)], upper]
    nodes, weights = gauss_legendre_pieces(breaks, basis.degree + 1)
    P = design_matrix(basis, nodes)
    return (P * weights[:, None]).T @ P


@dataclass(frozen=True)
class Kernel:
    """Second-order kernel supported on (-1, 1). Only Epanechnikov is provided."""

    family: str = "epanechnikov"

    def __post_init__(self):
        if self.family != "epanechnikov":
            raise ValueError(f"unsupported kernel family {self.family!r}")

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return np.where(np.abs(t) < 1.0, 0.75 * (1.0 - t * t), 0.0)


def kernel_weight(kernel: Kernel, h: float, u) -> np.ndarray | float:
    """Scaled kernel ``K_h(u) = K(u / h) / h``."""
    if not h > 0:
        raise ValueError(f"bandwidth must be positive, got {h!r}")
    out = kernel(np.asarray(u, dtype=float) / h) / h
    return float(out) if np.ndim(out) == 0 else out


class BSplineFeatures(TransformerMixin, BaseEstimator):
    """Transform a single [0, 1]-valued feature into its B-spline design matrix.

    Parameters
    ----------
    degree : int, default=3
    n_knots : int, default=3
        Number of equispaced interior knots.
    orthonormal : bool, default=False
        Use the L2[0, 1]-orthonormalized basis.
    derivative : bool, default=False
        Return first derivatives of the basis functions instead of values.
    """

    def __init__(self, degree=3, n_knots=3, orthonormal=False, derivative=False):
        self.degree = degree
        self.n_knots = n_knots
        self.orthonormal = orthonormal
        self.derivative = derivative

    def fit(self, X, y=None):
        as_unit_interval(as_1d_column(X), "X")
        self.basis_ = make_basis(self.degree, self.n_knots, self.orthonormal)
        self.n_features_in_ = 1
        return self

    def transform(self, X):
        check_is_fitted(self, "basis_")
        x = as_1d_column(X)
        if self.derivative:
            return derivative_matrix(self.basis_, x)
        return design_matrix(self.basis_, x)

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "basis_")
        prefix = "dbs" if self.derivative else "bs"
        return np.array([f"{prefix}{k}" for k in range(self.basis_.dim)], dtype=object)
