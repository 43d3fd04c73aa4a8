"""Convex quadratic programs with linear inequality constraints.

Solves::

    minimize    0.5 * b' H b + f' b
    subject to  A b >= lb            (lb defaults to 0)
                ||b|| <= norm_bound  (optional)

with the dual active-set method of Goldfarb and Idnani. Iterates start at the
unconstrained minimizer and add the most violated constraint, so no feasible
starting point is needed and dense grids of nearly parallel constraint rows
take few iterations.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

__all__ = ["Qp", "QpSolution", "QpStatus", "solve_qp", "kkt_residual"]


class QpStatus(str, enum.Enum):
    OPTIMAL = "Optimal"
    MAX_ITER = "MaxIter"
    DEGENERATE = "Degenerate"


@dataclass(frozen=True, eq=False)
class Qp:
    """Problem data. ``A`` has one row per constraint ``A[r] @ b >= lb[r]``."""

    H: np.ndarray
    f: np.ndarray
    A: np.ndarray
    lb: np.ndarray | None = None
    norm_bound: float | None = None

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        f = np.asarray(self.f, dtype=float).ravel()
        k = f.size
        A = np.asarray(self.A, dtype=float).reshape(-1, k) if np.size(self.A) else np.zeros((0, k))
        if H.shape != (k, k):
            raise ValueError(f"H must be {k}x{k}, got {H.shape}")
        if not np.allclose(H, H.T, rtol=0.0, atol=1e-10 * max(1.0, np.abs(H).max())):
            raise ValueError("H must be symmetric")
        lb = np.zeros(A.shape[0]) if self.lb is None else np.asarray(self.lb, dtype=float).ravel()
        if lb.size != A.shape[0]:
            raise ValueError("lb must have one entry per constraint row")
        if self.norm_bound is not None and not self.norm_bound > 0:
            raise ValueError("norm_bound must be positive")
        object.__setattr__(self, "H", 0.5 * (H + H.T))
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "lb", lb)

    @property
    def n_vars(self) -> int:
        return self.f.size

    def objective(self, b) -> float:
        b = np.asarray(b, dtype=float)
        return float(0.5 * b @ self.H @ b + self.f @ b)


@dataclass(frozen=True, eq=False)
class QpSolution:
    b: np.ndarray
    multipliers: np.ndarray
    active_set: tuple[int, ...]
    kkt_residual: float
    objective: float
    iterations: int
    status: QpStatus
    tolerance: float
    ridge: float = 0.0
    ball_multiplier: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status is QpStatus.OPTIMAL

    def summary(self) -> dict:
        return {
            "status": self.status.value,
            "iterations": self.iterations,
            "active_set": list(self.active_set),
            "kkt_residual": self.kkt_residual,
            "objective": self.objective,
            "ridge": self.ridge,
            "ball_multiplier": self.ball_multiplier,
        }


def kkt_residual(qp: Qp, b, lam, *, shift: float = 0.0) -> float:
    """Largest violation among stationarity, primal and dual feasibility and
    complementary slackness. ``shift`` adds ``shift * I`` to H (ball multiplier)."""
    b = np.asarray(b, dtype=float)
    lam = np.asarray(lam, dtype=float)
    slack = qp.A @ b - qp.lb
    grad = qp.H @ b + shift * b + qp.f - qp.A.T @ lam
    terms = [np.abs(grad).max(initial=0.0)]
    terms.append(np.maximum(-slack, 0.0).max(initial=0.0))
    terms.append(np.maximum(-lam, 0.0).max(initial=0.0))
    terms.append(np.abs(lam * slack).max(initial=0.0))
    return float(max(terms))


def _ridge_floor(H: np.ndarray) -> tuple[np.ndarray, float]:
    k = H.shape[0]
    floor = 1e-10 * max(np.trace(H), 0.0) / k
    eig_min = np.linalg.eigvalsh(H)[0]
    scale = max(np.abs(H).max(), 1.0)
    if eig_min < -1e-8 * scale:
        raise ValueError(f"H is not positive semidefinite (smallest eigenvalue {eig_min:.3e})")
    if eig_min < floor:
        ridge = floor if floor > 0 else 1e-12 * scale
        return H + ridge * np.eye(k), ridge
    return H, 0.0


class _Infeasible(Exception):
    pass


def _active_kkt(H, f, N, lb_act, x, u):
    """Re-solve stationarity with the active rows held at equality.

    Rounding in the ``J`` updates drifts along flat directions of ``H``; the
    bordered system restores ``H x + f = N' u`` and ``N x = lb`` exactly.
    """
    k, q = f.size, N.shape[0]
    M = np.block([[H, -N.T], [N, np.zeros((q, q))]])
    try:
        sol = np.linalg.solve(M, np.r_[-f, lb_act])
    except np.linalg.LinAlgError:
        return x, u
    if not np.all(np.isfinite(sol)):
        return x, u
    return sol[:k], np.maximum(sol[k:], 0.0)


def _dual_active_set(H, f, A, lb, tol, max_iter):
    k = f.size
    m = A.shape[0]
    L = np.linalg.cholesky(H)
    J = solve_triangular(L, np.eye(k), lower=True).T  # J J' = H^{-1}
    x = -J @ (J.T @ f)
    active: list[int] = []
    u = np.zeros(0)
    row_norm = np.linalg.norm(A, axis=1)
    x_scale = max(1.0, float(np.linalg.norm(x)))
    skipped: set[int] = set()
    it = 0
    bland = False
    seen: set[tuple] = set()
    status = QpStatus.OPTIMAL
    while True:
        slack = A @ x - lb
        slack[active] = 0.0
        slack[list(skipped)] = 0.0
        scale = np.abs(lb) + row_norm * max(x_scale, float(np.linalg.norm(x)))
        violated = np.nonzero(slack < -1e-12 * scale)[0]
        if violated.size == 0:
            break
        if it >= max_iter:
            status = QpStatus.MAX_ITER
            break
        p = int(violated[0]) if bland else int(violated[np.argmin(slack[violated])])
        key = (tuple(sorted(active)), p)
        if key in seen:
            if bland:
                status = QpStatus.DEGENERATE
                break
            bland = True
            seen.clear()
        seen.add(key)
        n_p = A[p]
        u_p = 0.0
        while True:
            it += 1
            d = J.T @ n_p
            q = len(active)
            if q:
                Qf, R = np.linalg.qr(J.T @ A[active].T, mode="complete")
                R = R[:q]
                z = J @ (Qf[:, q:] @ (Qf[:, q:].T @ d))
                r = solve_triangular(R, Qf[:, :q].T @ d)
            else:
                z = J @ d
                r = np.zeros(0)
            zn = float(z @ n_p)
            dependent = zn <= 1e-12 * float(d @ d)
            if dependent and q:
                # n_p lies in the span of the active rows; solve for r in the
                # original coordinates, which avoids the conditioning of J
                r = np.linalg.lstsq(A[active].T, n_p, rcond=None)[0]
            t1, drop = np.inf, -1
            pos = np.nonzero(r > 1e-14 * (1.0 + np.abs(r).max(initial=0.0)))[0]
            if pos.size:
                ratios = u[pos] / r[pos]
                j = int(np.argmin(ratios))
                t1, drop = max(float(ratios[j]), 0.0), int(pos[j])
            t2 = np.inf if dependent else -float(n_p @ x - lb[p]) / zn
            t = min(t1, t2)
            if not np.isfinite(t):
                if -(n_p @ x - lb[p]) <= 1e-8 * scale[p]:
                    # rounding-level violation of a row implied by the active set
                    skipped.add(p)
                    break
                raise _Infeasible(f"constraint {p} cannot be satisfied together with {sorted(active)}")
            if np.isfinite(t2):
                x = x + t * z
            u = u - t * r
            u_p += t
            if t2 <= t1:
                active.append(p)
                u = np.append(u, u_p)
                x, u = _active_kkt(H, f, A[active], lb[active], x, u)
                skipped.clear()
                break
            del active[drop]
            u = np.delete(u, drop)
            if it >= max_iter:
                break
    lam = np.zeros(m)
    lam[active] = np.maximum(u, 0.0)
    return x, lam, tuple(sorted(active)), it, status


def _solve_fixed(qp: Qp, H: np.ndarray, tol, max_iter):
    try:
        return _dual_active_set(H, qp.f, qp.A, qp.lb, tol, max_iter)
    except _Infeasible as exc:
        raise ValueError(f"the constraints are infeasible: {exc}") from None


def solve_qp(qp: Qp, *, tol: float = 1e-8, max_iter: int | None = None) -> QpSolution:
    """Solve ``qp`` and return the solution with a KKT certificate.

    Near-singular ``H`` receives a ridge of ``1e-10 * trace(H) / K``; ties among
    equally violated constraints go to the lowest index. ``max_iter`` counts
    constraint additions and removals (default ``50 K``).
    When ``norm_bound`` is set and binding, the ball constraint is handled by
    bisection on a ridge multiplier ``mu`` so that ``||b(mu)|| = norm_bound``.
    """
    k = qp.n_vars
    if max_iter is None:
        max_iter = 50 * k
    H, ridge = _ridge_floor(qp.H)
    x, lam, work, iters, status = _solve_fixed(qp, H, tol, max_iter)
    mu = 0.0
    if qp.norm_bound is not None and np.linalg.norm(x) > qp.norm_bound:
        lo, hi = 0.0, 1.0
        eye = np.eye(k)
        while True:
            xh = _solve_fixed(qp, H + hi * eye, tol, max_iter)
            if np.linalg.norm(xh[0]) <= qp.norm_bound:
                break
            lo, hi = hi, 2.0 * hi
            if hi > 1e300:
                raise RuntimeError("failed to bracket the ball multiplier")
        best = xh
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            cur = _solve_fixed(qp, H + mid * eye, tol, max_iter)
            if np.linalg.norm(cur[0]) <= qp.norm_bound:
                hi, best = mid, cur
            else:
                lo = mid
            if hi - lo <= 1e-14 * max(hi, 1e-300):
                break
        x, lam, work, iters, status = best
        mu = hi
    tolerance = tol * (1.0 + np.abs(qp.f).max(initial=0.0))
    ridge_total = ridge + mu
    resid = kkt_residual(Qp(H, qp.f, qp.A, qp.lb), x, lam, shift=mu)
    if status is QpStatus.OPTIMAL and resid > tolerance:
        status = QpStatus.DEGENERATE
    return QpSolution(
        b=x,
        multipliers=lam,
        active_set=work,
        kkt_residual=resid,
        objective=qp.objective(x),
        iterations=iters,
        status=status,
        tolerance=tolerance,
        ridge=ridge,
        ball_multiplier=mu,
        extra={"total_shift": ridge_total},
    )
