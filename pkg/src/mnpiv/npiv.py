"""Series (sieve) NPIV estimation with and without a monotonicity constraint.

Both estimators minimize the first-stage-projected least-squares criterion

    (Y - P b)' Q (Q'Q)^{-1} Q' (Y - P b)

where ``P`` and ``Q`` hold B-spline bases evaluated at the regressor and the
instrument. The constrained estimator adds ``Dp(x)' b >= 0`` on a grid of
points, which makes the fitted function nondecreasing.
"""

from __future__ import annotations

import math
import numbers
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as sla
from scipy.optimize import minimize_scalar
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import as_1d_column, as_unit_interval, check_same_length
from .basis import SplineBasis, derivative_matrix, design_matrix, gram_matrix, make_basis
from .exceptions import NumericalError
from .solver import Qp, QpSolution, QpStatus, solve_qp

__all__ = [
    "Sample",
    "NpivConfig",
    "NpivFit",
    "NPIVRegressor",
    "rescale",
    "constraint_points",
    "fit_unconstrained",
    "fit_constrained",
    "predict",
    "sieve_tau_hat",
    "restricted_tau_hat",
    "identification_constant",
]


# ---------------------------------------------------------------------------
# data containers
# ---------------------------------------------------------------------------


def rescale(values, method: str = "minmax") -> tuple[np.ndarray, dict]:
    """Map ``values`` into [0, 1] and return the map's metadata.

    ``minmax`` is affine; ``ecdf`` replaces values by ``(rank - 1) / (n - 1)``
    with average ranks for ties.
    """
    v = np.asarray(values, dtype=float)
    if method == "minmax":
        lo, hi = float(v.min()), float(v.max())
        if hi <= lo:
            raise ValueError("cannot rescale a constant variable")
        return np.clip((v - lo) / (hi - lo), 0.0, 1.0), {"method": "minmax", "min": lo, "max": hi}
    if method == "ecdf":
        from scipy.stats import rankdata

        if v.size < 2:
            raise ValueError("ecdf rescaling needs at least two observations")
        ranks = rankdata(v, method="average")
        meta = {"method": "ecdf", "sorted_values": np.sort(v).tolist()}
        return (ranks - 1.0) / (v.size - 1.0), meta
    raise ValueError(f"unknown rescale method {method!r}")


def unscale(u, meta: dict | None) -> np.ndarray:
    """Inverse of :func:`rescale` for grid points in [0, 1]."""
    u = np.asarray(u, dtype=float)
    if not meta:
        return u
    if meta["method"] == "minmax":
        return meta["min"] + u * (meta["max"] - meta["min"])
    sv = np.asarray(meta["sorted_values"])
    return np.interp(u * (sv.size - 1), np.arange(sv.size), sv)


@dataclass(frozen=True, eq=False)
class Sample:
    """Observations ``(y_i, x_i, w_i)`` with ``x`` and ``w`` already in [0, 1]."""

    y: np.ndarray
    x: np.ndarray
    w: np.ndarray
    rescale_meta: dict = field(default_factory=dict)

    def __post_init__(self):
        x = as_unit_interval(self.x, "x")
        w = as_unit_interval(self.w, "w")
        y = np.asarray(self.y, dtype=float).ravel()
        check_same_length(y=y, x=x, w=w)
        if x.size < 2:
            raise ValueError("a sample needs at least two observations")
        if not np.all(np.isfinite(y)):
            raise ValueError("y contains non-finite values")
        for name, arr in (("y", y), ("x", x), ("w", w)):
            arr = arr.copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_raw(cls, y, x, w, method: str = "minmax") -> Sample:
        xs, mx = rescale(x, method)
        ws, mw = rescale(w, method)
        return cls(y, xs, ws, {"x": mx, "w": mw})

    @property
    def n(self) -> int:
        return self.x.size


@dataclass(frozen=True, eq=False)
class NpivConfig:
    """Sieve bases and constraint options. Requires ``dim(basis_w) >= dim(basis_x)``."""

    basis_x: SplineBasis
    basis_w: SplineBasis
    constrained: bool = True
    constraint_grid_size: int = 401
    norm_bound: float | None = None

    def __post_init__(self):
        if self.basis_w.dim < self.basis_x.dim:
            raise ValueError(
                f"instrument basis dimension J={self.basis_w.dim} must be at least "
                f"the regressor basis dimension K={self.basis_x.dim}"
            )
        if int(self.constraint_grid_size) != self.constraint_grid_size or self.constraint_grid_size < 2:
            raise ValueError("constraint_grid_size must be an integer >= 2")
        if self.norm_bound is not None and not self.norm_bound > 0:
            raise ValueError("norm_bound must be positive")

    @classmethod
    def from_knots(cls, kx: int, kw: int, degree_x: int = 3, degree_w: int = 4, **kwargs) -> NpivConfig:
        return cls(make_basis(degree_x, kx), make_basis(degree_w, kw), **kwargs)

    def describe(self) -> dict:
        return {
            "degree_x": self.basis_x.degree,
            "knots_x": list(self.basis_x.interior_knots),
            "dim_x": self.basis_x.dim,
            "degree_w": self.basis_w.degree,
            "knots_w": list(self.basis_w.interior_knots),
            "dim_w": self.basis_w.dim,
            "orthonormal_x": self.basis_x.orthonormal,
            "orthonormal_w": self.basis_w.orthonormal,
            "constrained": self.constrained,
            "constraint_grid_size": int(self.constraint_grid_size),
            "norm_bound": self.norm_bound,
        }


@dataclass(frozen=True, eq=False)
class NpivFit:
    beta: np.ndarray
    config: NpivConfig
    constrained: bool
    qp_diag: QpSolution
    tau_hat: float
    min_slope_hat: float
    objective: float
    constraint_points: np.ndarray
    constraint_mode: str
    refined: bool = False
    ridge: float = 0.0

    @property
    def ok(self) -> bool:
        return self.qp_diag.status is QpStatus.OPTIMAL

    def predict(self, x_grid) -> np.ndarray:
        return predict(self, x_grid)

    def slope(self, x_grid) -> np.ndarray:
        return derivative_matrix(self.config.basis_x, x_grid) @ self.beta


# ---------------------------------------------------------------------------
# estimation
# ---------------------------------------------------------------------------


def constraint_points(basis: SplineBasis, grid_size: int = 401) -> tuple[np.ndarray, str]:
    """Points where ``Dp(x)' b >= 0`` is imposed.

    Degree 1 splines have piecewise constant slopes (one point per piece
    suffices) and degree 2 splines piecewise linear slopes (the knots suffice).
    Higher degrees use an equispaced grid merged with the knots.
    """
    breaks = basis.breakpoints
    if basis.degree == 1:
        return 0.5 * (breaks[:-1] + breaks[1:]), "midpoints"
    if basis.degree == 2:
        return breaks.copy(), "knots"
    return np.union1d(np.linspace(0.0, 1.0, int(grid_size)), breaks), "grid"


_MAX_CUTS = 8


def _verification_points(basis: SplineBasis, grid_size: int) -> np.ndarray:
    return np.union1d(np.linspace(0.0, 1.0, 5 * (int(grid_size) - 1) + 1), basis.breakpoints)


def _negative_slope_points(basis: SplineBasis, beta: np.ndarray, grid: np.ndarray, tol: float) -> np.ndarray:
    """Local minimizers of the fitted slope (searched between grid nodes) below ``-tol``."""
    slope = derivative_matrix(basis, grid) @ beta
    found = []
    for i in range(grid.size):
        left = slope[i - 1] if i > 0 else np.inf
        right = slope[i + 1] if i + 1 < grid.size else np.inf
        if slope[i] > min(left, right):
            continue
        lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
        res = minimize_scalar(
            lambda t: float(derivative_matrix(basis, [t])[0] @ beta),
            bounds=(lo, hi), method="bounded", options={"xatol": 1e-12},
        )
        t, v = (res.x, res.fun) if res.fun < slope[i] else (grid[i], slope[i])
        if v < -tol:
            found.append(t)
    return np.asarray(found, dtype=float)


@dataclass(frozen=True, eq=False)
class _Projected:
    R: np.ndarray  # U'P, J x K
    c: np.ndarray  # U'Y
    P: np.ndarray
    Q: np.ndarray


def _project(sample: Sample, config: NpivConfig) -> _Projected:
    J = config.basis_w.dim
    if sample.n <= J:
        raise ValueError(f"need more observations than instrument basis functions (n={sample.n}, J={J})")
    P = design_matrix(config.basis_x, sample.x)
    Q = design_matrix(config.basis_w, sample.w)
    U, s, _ = np.linalg.svd(Q, full_matrices=False)
    if s[-1] <= 1e-10 * s[0]:
        raise NumericalError(
            "instrument basis (basis_w) design matrix is rank deficient: "
            f"singular values span [{s[-1]:.3e}, {s[0]:.3e}]; reduce the number of w-knots"
        )
    return _Projected(U.T @ P, U.T @ sample.y, P, Q)


def _criterion(proj: _Projected, b: np.ndarray) -> float:
    r = proj.c - proj.R @ b
    return float(r @ r)


def _unconstrained_beta(proj: _Projected) -> tuple[np.ndarray, float]:
    H = proj.R.T @ proj.R
    K = H.shape[0]
    floor = 1e-10 * np.trace(H) / K
    s = np.linalg.svd(proj.R, compute_uv=False)
    if s[-1] ** 2 >= floor and s[-1] > 0:
        return np.linalg.lstsq(proj.R, proj.c, rcond=None)[0], 0.0
    if np.trace(H) <= 0:
        raise NumericalError("regressor basis (basis_x) design matrix is zero")
    beta = np.linalg.solve(H + floor * np.eye(K), proj.R.T @ proj.c)
    return beta, floor


def _tau_or_nan(sample: Sample, config: NpivConfig) -> float:
    try:
        return sieve_tau_hat(sample, config)
    except (NumericalError, np.linalg.LinAlgError):
        return float("nan")


def fit_unconstrained(sample: Sample, config: NpivConfig) -> NpivFit:
    """Sieve 2SLS estimate ``[P'Pi P]^{-1} P'Pi Y`` with ``Pi = Q(Q'Q)^{-1}Q'``."""
    proj = _project(sample, config)
    beta, ridge = _unconstrained_beta(proj)
    H = proj.R.T @ proj.R
    f = -proj.R.T @ proj.c
    qp = Qp(H, f, np.zeros((0, beta.size)), norm_bound=config.norm_bound)
    if config.norm_bound is not None and np.linalg.norm(beta) > config.norm_bound:
        diag = solve_qp(qp)
        beta = diag.b
    else:
        resid = float(np.abs(H @ beta + f + ridge * beta).max())
        diag = QpSolution(
            b=beta, multipliers=np.zeros(0), active_set=(), kkt_residual=resid,
            objective=qp.objective(beta), iterations=0, status=QpStatus.OPTIMAL,
            tolerance=1e-8 * (1 + np.abs(f).max()), ridge=ridge,
        )
    points, mode = constraint_points(config.basis_x, config.constraint_grid_size)
    slopes = derivative_matrix(config.basis_x, points) @ beta
    return NpivFit(
        beta=beta, config=config, constrained=False, qp_diag=diag,
        tau_hat=_tau_or_nan(sample, config), min_slope_hat=float(slopes.min()),
        objective=_criterion(proj, beta), constraint_points=points,
        constraint_mode=mode, ridge=ridge,
    )


def _solve_monotone(proj: _Projected, D: np.ndarray, norm_bound) -> QpSolution:
    H = proj.R.T @ proj.R
    f = -proj.R.T @ proj.c
    norms = np.linalg.norm(D, axis=1)
    A = D[norms > 0] / norms[norms > 0, None]
    return solve_qp(Qp(H, f, A, norm_bound=norm_bound))


def fit_constrained(sample: Sample, config: NpivConfig) -> NpivFit:
    """Estimate under ``Dp(x)' b >= 0`` on :func:`constraint_points`.

    For degree >= 3 the fit is verified on a 5x finer grid; if it dips below
    zero there, the constraints are moved to that grid and the problem solved
    once more. Remaining dips between grid nodes are then cut off by adding
    the slope minimizers as constraint points. Solver failures are reported
    through ``qp_diag.status``.
    """
    proj = _project(sample, config)
    basis = config.basis_x
    points, mode = constraint_points(basis, config.constraint_grid_size)
    fine = _verification_points(basis, config.constraint_grid_size) if mode == "grid" else None
    D = derivative_matrix(basis, points)
    beta_u, ridge = _unconstrained_beta(proj)
    refined = False
    scale = 1.0 + np.abs(beta_u).max()
    within_ball = config.norm_bound is None or np.linalg.norm(beta_u) <= config.norm_bound
    slack = within_ball and (D @ beta_u).min() >= -1e-12 * scale
    if slack and fine is not None:
        slack = _negative_slope_points(basis, beta_u, fine, 1e-10 * scale).size == 0
    if slack:
        H = proj.R.T @ proj.R
        f = -proj.R.T @ proj.c
        beta = beta_u
        diag = QpSolution(
            b=beta, multipliers=np.zeros(D.shape[0]), active_set=(),
            kkt_residual=float(np.abs(H @ beta + f + ridge * beta).max()),
            objective=float(0.5 * beta @ H @ beta + f @ beta), iterations=0,
            status=QpStatus.OPTIMAL, tolerance=1e-8 * (1 + np.abs(f).max()), ridge=ridge,
        )
    else:
        diag = _solve_monotone(proj, D, config.norm_bound)
        beta = diag.b
        if fine is not None:
            if (derivative_matrix(basis, fine) @ beta).min() < -1e-9 * (1.0 + np.abs(beta).max()):
                points = fine
                D = derivative_matrix(basis, points)
                diag = _solve_monotone(proj, D, config.norm_bound)
                beta = diag.b
                refined = True
            for _ in range(_MAX_CUTS):
                cuts = _negative_slope_points(basis, beta, fine, 1e-10 * (1.0 + np.abs(beta).max()))
                if cuts.size == 0 or not diag.ok:
                    break
                points = np.union1d(points, cuts)
                D = derivative_matrix(basis, points)
                diag = _solve_monotone(proj, D, config.norm_bound)
                beta = diag.b
                refined = True
        ridge = diag.ridge
    return NpivFit(
        beta=beta, config=config, constrained=True, qp_diag=diag,
        tau_hat=_tau_or_nan(sample, config), min_slope_hat=float((D @ beta).min()),
        objective=_criterion(proj, beta), constraint_points=points,
        constraint_mode=mode, refined=refined, ridge=ridge,
    )


def fit(sample: Sample, config: NpivConfig) -> NpivFit:
    return fit_constrained(sample, config) if config.constrained else fit_unconstrained(sample, config)


def predict(fit: NpivFit, x_grid) -> np.ndarray:
    """Fitted function ``p(x)' beta`` on points in [0, 1]."""
    return design_matrix(fit.config.basis_x, x_grid) @ fit.beta


# ---------------------------------------------------------------------------
# ill-posedness diagnostics
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class _Moments:
    Gx: np.ndarray  # norm of h in the numerator
    Gw: np.ndarray
    M: np.ndarray  # E[q(W) p(X)']
    Gt: np.ndarray  # truncated version of Gx


def _moments(design, config: NpivConfig, trunc=(0.0, 1.0)) -> _Moments:
    lo, hi = trunc
    if isinstance(design, Sample):
        n = design.n
        P = design_matrix(config.basis_x, design.x)
        Q = design_matrix(config.basis_w, design.w)
        inside = (design.x >= lo) & (design.x <= hi)
        return _Moments(P.T @ P / n, Q.T @ Q / n, Q.T @ P / n, (P[inside].T @ P[inside]) / n)
    if hasattr(design, "cross_moment"):
        M = design.cross_moment(config.basis_x, config.basis_w)
        return _Moments(
            gram_matrix(config.basis_x), gram_matrix(config.basis_w), M,
            gram_matrix(config.basis_x, lo, hi),
        )
    raise TypeError("design must be a Sample (empirical mode) or provide cross_moment() (population mode)")


def _chol(G: np.ndarray, name: str) -> np.ndarray:
    try:
        L = np.linalg.cholesky(G)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"{name} Gram matrix is singular") from exc
    d = np.diag(L)
    if d.min() <= 1e-10 * d.max():
        raise NumericalError(f"{name} Gram matrix is numerically singular")
    return L


def _operator_form(mom: _Moments) -> np.ndarray:
    """``S = M' Gw^{-1} M``: squared norm of the projected image ``T h``."""
    Lw = _chol(mom.Gw, "instrument basis")
    half = sla.solve_triangular(Lw, mom.M, lower=True)
    return half.T @ half


def sieve_tau_hat(design, config: NpivConfig) -> float:
    """Sieve measure of ill-posedness ``1 / sigma_min(Gw^{-1/2} M Gx^{-1/2})``.

    ``design`` is a :class:`Sample` (empirical moments) or an object exposing
    ``cross_moment(basis_x, basis_w)`` (population moments; the Gram matrices
    are then Lebesgue integrals on [0, 1]).
    """
    mom = _moments(design, config)
    Lw = _chol(mom.Gw, "instrument basis")
    Lx = _chol(mom.Gx, "regressor basis")
    A = sla.solve_triangular(Lw, mom.M, lower=True)
    A = sla.solve_triangular(Lx, A.T, lower=True).T
    smin = np.linalg.svd(A, compute_uv=False)[-1]
    if smin <= 0:
        raise NumericalError("the sieve operator is singular")
    return float(1.0 / smin)


def _raw_to_coef(basis: SplineBasis, c: np.ndarray) -> np.ndarray:
    if basis.rotation is None:
        return c
    return np.linalg.solve(basis.rotation.T, c)


def restricted_tau_hat(
    design,
    config: NpivConfig,
    a: float,
    trunc: tuple[float, float] = (0.05, 0.95),
    *,
    n_starts: int = 16,
    seed: int = 0,
    max_iter: int = 200,
) -> float:
    """Heuristic lower bound on the restricted sieve measure of ill-posedness.

    Maximizes ``||h||_{2,t} / ||T h||`` over ``h = p' b`` with slope at least
    ``-a`` on the constraint grid and ``||h||_{2,t} = 1``. The problem is
    nonconvex; each start runs a minorize-maximize iteration (the norm
    constraint linearized at the current iterate, then a QP), and the best
    value over ``n_starts`` seeded starts is returned. For ``a = inf`` the
    exact generalized-eigenvalue answer is returned.
    """
    lo, hi = trunc
    if not 0.0 <= lo < hi <= 1.0:
        raise ValueError("trunc must satisfy 0 <= lower < upper <= 1")
    if not a >= 0:
        raise ValueError("a must be nonnegative")
    mom = _moments(design, config, trunc)
    S = _operator_form(mom)
    Gt = mom.Gt
    K = S.shape[0]
    if math.isinf(a):
        Lw = _chol(mom.Gw, "instrument basis")
        Lt = _chol(Gt, "truncated regressor basis")
        A = sla.solve_triangular(Lw, mom.M, lower=True)
        A = sla.solve_triangular(Lt, A.T, lower=True).T
        smin = np.linalg.svd(A, compute_uv=False)[-1]
        return float(1.0 / smin) if smin > 0 else float("inf")
    # smallest S-to-Gt eigenvalue gives the unrestricted maximizer of the ratio
    _, evecs = sla.eigh(S, Gt)

    basis = config.basis_x
    points, _ = constraint_points(basis, config.constraint_grid_size)
    D = derivative_matrix(basis, points)
    lb = np.full(D.shape[0], -float(a))

    def tnorm(b):
        return math.sqrt(max(float(b @ Gt @ b), 0.0))

    def normalized_if_feasible(b):
        nb = tnorm(b)
        if nb <= 1e-300:
            return None
        b = b / nb
        return b if (D @ b).min() >= -a - 1e-12 else None

    rng = np.random.default_rng(seed)
    top = evecs[:, 0]
    top = top * np.sign(top[np.argmax(np.abs(top))])
    starts = []
    for sign in (1.0, -1.0):
        cand = normalized_if_feasible(sign * top)
        if cand is not None:
            starts.append(cand)
    base = [np.ones(K)] + [np.sort(rng.standard_normal(K)) for _ in range(n_starts)]
    dirs = [top, -top] + [rng.standard_normal(K) for _ in range(n_starts)]
    for i in range(n_starts):
        m = _raw_to_coef(basis, base[i % len(base)])
        d = dirs[i % len(dirs)]
        if normalized_if_feasible(m) is None:
            continue
        m = m / tnorm(m)
        d = d / max(tnorm(d), 1e-300)
        t_lo, t_hi = 0.0, 1e6
        for _ in range(60):
            t = 0.5 * (t_lo + t_hi)
            if normalized_if_feasible(m + t * d) is not None:
                t_lo = t
            else:
                t_hi = t
        starts.append(normalized_if_feasible(m + t_lo * d))
    starts = starts[: max(n_starts, 1)]

    Hs = 2.0 * S
    best = 0.0
    for b in starts:
        val = b @ S @ b
        for _ in range(max_iter):
            g = Gt @ b
            A = np.vstack([D, 2.0 * g])
            lbk = np.r_[lb, 1.0 + b @ g]
            sol = solve_qp(Qp(Hs, np.zeros(K), A, lbk))
            if sol.status is not QpStatus.OPTIMAL:
                break
            nb = tnorm(sol.b)
            new = sol.b / nb if nb > 0 else sol.b
            if (D @ new).min() < -a - 1e-9:
                new = sol.b
            new_val = (new @ S @ new) / max(tnorm(new) ** 2, 1e-300)
            done = new_val >= val * (1 - 1e-12)
            if new_val < val:
                b, val = new, new_val
            if done:
                break
        if val > 0:
            best = max(best, tnorm(b) / math.sqrt(b @ S @ b))
    return float(best)


def identification_constant(
    c_f: float,
    c_w: float,
    C_F: float,
    w1: float,
    w2: float,
    x1: float,
    x2: float,
    xt1: float,
    xt2: float,
) -> float:
    """Constant ``C1 / c_p`` bounding the truncated norm of monotone differences.

    ``C1 = sqrt(xt2 - xt1) / min(xt1 - x1, x2 - xt2)`` and
    ``c_p = min(1 - w2, w1) * min(C_F - 1, 2) * c_w * c_f / 4``.
    """
    values = dict(c_f=c_f, c_w=c_w, C_F=C_F, w1=w1, w2=w2, x1=x1, x2=x2, xt1=xt1, xt2=xt2)
    for name, v in values.items():
        if not isinstance(v, numbers.Real) or not math.isfinite(v):
            raise ValueError(f"{name} must be a finite real number")
    checks = [
        (0 <= x1, "0 <= x1"),
        (x1 < xt1, "x1 < xt1"),
        (xt1 < xt2, "xt1 < xt2"),
        (xt2 < x2, "xt2 < x2"),
        (x2 <= 1, "x2 <= 1"),
        (0 <= w1, "0 <= w1"),
        (w1 < w2, "w1 < w2"),
        (w2 <= 1, "w2 <= 1"),
        (C_F > 1, "C_F > 1"),
        (c_f > 0, "c_f > 0"),
        (c_w > 0, "c_w > 0"),
    ]
    for ok, label in checks:
        if not ok:
            raise ValueError(f"identification constants violate {label}")
    c1 = math.sqrt(xt2 - xt1) / min(xt1 - x1, x2 - xt2)
    cp = min(1 - w2, w1) * min(C_F - 1, 2) * c_w * c_f / 4
    if cp <= 0:
        raise ValueError("c_p is zero: need w1 > 0 and w2 < 1")
    return c1 / cp


# ---------------------------------------------------------------------------
# scikit-learn interface
# ---------------------------------------------------------------------------


class NPIVRegressor(RegressorMixin, BaseEstimator):
    """Series NPIV regression of ``y`` on an endogenous ``X`` with instrument ``W``.

    Parameters
    ----------
    kx_knots, kw_knots : int
        Interior knots of the regressor and instrument B-spline bases.
    degree_x, degree_w : int
        Spline degrees; the instrument basis must be at least as large.
    monotone : bool, default=True
        Impose a nondecreasing fitted function.
    constraint_grid_size : int, default=401
    norm_bound : float or None
        Optional bound on the Euclidean norm of the coefficients.
    rescale : {None, "minmax", "ecdf"}
        How ``X`` and ``W`` are mapped into [0, 1]. With ``None`` the inputs
        must already lie there.

    Attributes
    ----------
    coef_ : ndarray of shape (K,)
    fit_ : NpivFit
    """

    def __init__(
        self,
        kx_knots=3,
        kw_knots=4,
        degree_x=3,
        degree_w=4,
        monotone=True,
        constraint_grid_size=401,
        norm_bound=None,
        rescale=None,
    ):
        self.kx_knots = kx_knots
        self.kw_knots = kw_knots
        self.degree_x = degree_x
        self.degree_w = degree_w
        self.monotone = monotone
        self.constraint_grid_size = constraint_grid_size
        self.norm_bound = norm_bound
        self.rescale = rescale

    def _config(self) -> NpivConfig:
        return NpivConfig.from_knots(
            self.kx_knots, self.kw_knots, self.degree_x, self.degree_w,
            constrained=self.monotone, constraint_grid_size=self.constraint_grid_size,
            norm_bound=self.norm_bound,
        )

    def fit(self, X, y, W):
        x = as_1d_column(X, "X")
        w = as_1d_column(W, "W")
        y = as_1d_column(y, "y")
        check_same_length(X=x, y=y, W=w)
        if self.rescale is None:
            sample = Sample(y, x, w)
        else:
            sample = Sample.from_raw(y, x, w, self.rescale)
        self.sample_meta_ = sample.rescale_meta
        self.fit_ = fit(sample, self._config())
        if not self.fit_.ok:
            raise NumericalError(f"QP solver did not converge: {self.fit_.qp_diag.status.value}")
        self.coef_ = self.fit_.beta
        self.n_features_in_ = 1
        return self

    def _to_unit(self, X) -> np.ndarray:
        x = as_1d_column(X, "X")
        meta = self.sample_meta_.get("x")
        if meta is None:
            return x
        if meta["method"] == "minmax":
            u = (x - meta["min"]) / (meta["max"] - meta["min"])
        else:
            sv = np.asarray(meta["sorted_values"])
            u = np.interp(x, sv, np.arange(sv.size)) / (sv.size - 1)
        return u

    def predict(self, X):
        check_is_fitted(self, "fit_")
        return predict(self.fit_, self._to_unit(X))


__all__.append("fit")
