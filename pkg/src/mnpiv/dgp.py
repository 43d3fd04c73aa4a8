"""Simulation designs, closed-form conditional CDFs and the Monte Carlo harness.

Two structural models share a Gaussian-copula first stage::

    (nu, zeta, e) ~ N(0, I),  xi = rho * zeta + sqrt(1 - rho^2) * e
    X = Phi(xi),  W = Phi(zeta),  eps = kappa * sigma * (eta * e + sqrt(1 - eta^2) * nu)
    Y = g(X) + eps

Model 1 uses ``g(x) = kappa * sin(pi x - pi/2)``; Model 2 is flat on
[0.25, 0.75] with quadratic pieces at both ends. Two design-only examples
describe the joint law of ``(X, W)`` alone.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.special import ndtr, ndtri

from ._parallel import indexed_map
from .basis import SplineBasis, design_matrix, gauss_legendre_pieces
from .exceptions import NumericalError
from .npiv import NpivConfig, Sample, fit_constrained, fit_unconstrained

__all__ = [
    "Family",
    "DgpSpec",
    "McConfig",
    "McReport",
    "true_g",
    "simulate",
    "cond_cdf_oracle",
    "mc_study",
    "table_cells",
    "SIM_DEGREES",
]


class Family(str, enum.Enum):
    MODEL1 = "Model1"
    MODEL2 = "Model2"
    EXAMPLE1 = "Example1Normal"
    EXAMPLE2 = "Example2TwoDim"


_STRUCTURAL = (Family.MODEL1, Family.MODEL2)

#: Spline degrees (x, w) used by the simulation study: quadratic regressor
#: basis, cubic instrument basis.
SIM_DEGREES = (2, 3)


@dataclass(frozen=True)
class DgpSpec:
    """A simulation design.

    ``g`` optionally supplies a regression function for the design-only
    examples; their outcome is identically zero otherwise.
    """

    family: Family
    n: int = 500
    seed: int = 0
    kappa: float = 1.0
    rho: float = 0.3
    eta: float = 0.3
    sigma_eps: float = 0.1
    g: Callable[[np.ndarray], np.ndarray] | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if int(self.n) != self.n or self.n < 2:
            raise ValueError("n must be an integer >= 2")
        if not -1.0 < self.rho < 1.0:
            raise ValueError("rho must lie in (-1, 1)")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError("eta must lie in [0, 1]")
        if not self.sigma_eps > 0:
            raise ValueError("sigma_eps must be positive")

    def describe(self) -> dict:
        out = {"family": self.family.value, "n": int(self.n), "seed": int(self.seed)}
        if self.family in _STRUCTURAL:
            out.update(kappa=self.kappa, rho=self.rho, eta=self.eta, sigma_eps=self.sigma_eps)
        elif self.family is Family.EXAMPLE1:
            out.update(rho=self.rho)
        return out

    def cross_moment(self, basis_x: SplineBasis, basis_w: SplineBasis) -> np.ndarray:
        """Population ``E[q(W) p(X)']`` by quadrature (``J x K``)."""
        if self.family is Family.EXAMPLE2:
            return _example2_cross_moment(basis_x, basis_w)
        return _copula_cross_moment(self.rho, basis_x, basis_w)


def true_g(spec: DgpSpec, x) -> np.ndarray | float:
    """Structural function of Model 1 or Model 2."""
    xa = np.asarray(x, dtype=float)
    if not np.all((xa >= 0) & (xa <= 1)):
        raise ValueError("true_g is defined on [0, 1]")
    if spec.family is Family.MODEL1:
        out = spec.kappa * np.sin(np.pi * xa - np.pi / 2)
    elif spec.family is Family.MODEL2:
        left = -((xa - 0.25) ** 2) * ((xa >= 0) & (xa <= 0.25))
        right = (xa - 0.75) ** 2 * ((xa >= 0.75) & (xa <= 1))
        out = 10 * spec.kappa * (left + right)
    elif spec.g is not None:
        out = np.asarray(spec.g(xa), dtype=float)
    else:
        raise ValueError(f"{spec.family.value} is a design-only example with no structural g")
    return float(out) if np.ndim(out) == 0 else out


def simulate(spec: DgpSpec) -> Sample:
    """Draw a sample of size ``spec.n`` from ``default_rng(spec.seed)``."""
    rng = np.random.default_rng(spec.seed)
    n = int(spec.n)
    fam = spec.family
    if fam in _STRUCTURAL:
        nu, zeta, e = rng.standard_normal((3, n))
        xi = spec.rho * zeta + math.sqrt(1 - spec.rho**2) * e
        x, w = ndtr(xi), ndtr(zeta)
        eps = spec.kappa * spec.sigma_eps * (spec.eta * e + math.sqrt(1 - spec.eta**2) * nu)
        return Sample(true_g(spec, x) + eps, x, w)
    if fam is Family.EXAMPLE1:
        w = rng.uniform(size=n)
        u = rng.standard_normal(n)
        x = ndtr(spec.rho * ndtri(w) + math.sqrt(1 - spec.rho**2) * u)
    else:
        w = rng.uniform(size=n)
        u1, u2 = rng.uniform(0.0, 0.5, size=(2, n))
        x = u1 + u2 * w
    y = true_g(spec, x) if spec.g is not None else np.zeros(n)
    return Sample(y, x, w)


def cond_cdf_oracle(family, x, w, rho: float | None = None):
    """Closed-form ``F_{X|W}(x | w)`` for the two design-only examples."""
    family = Family(family)
    xa, wa = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(w, dtype=float))
    if np.any((xa <= 0) | (xa >= 1) | (wa <= 0) | (wa >= 1)):
        raise ValueError("x and w must lie in the open interval (0, 1)")
    if family is Family.EXAMPLE1:
        if rho is None or not -1 < rho < 1:
            raise ValueError("Example1Normal needs rho in (-1, 1)")
        out = ndtr((ndtri(xa) - rho * ndtri(wa)) / math.sqrt(1 - rho**2))
    elif family is Family.EXAMPLE2:
        out = np.select(
            [xa < wa / 2, xa < 0.5, xa < (1 + wa) / 2],
            [2 * xa**2 / wa, 2 * xa - wa / 2, 1 - (2 / wa) * (xa - (1 + wa) / 2) ** 2],
            1.0,
        )
    else:
        raise ValueError(f"no closed-form conditional CDF for {family.value}")
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# population moments
# ---------------------------------------------------------------------------

_SCORE_LIMIT = 9.0


def _score_nodes(basis: SplineBasis, per_piece: int) -> tuple[np.ndarray, np.ndarray]:
    """Quadrature on the normal-score scale, split where the spline has knots."""
    breaks = np.r_[-_SCORE_LIMIT, ndtri(np.asarray(basis.interior_knots)), _SCORE_LIMIT]
    return gauss_legendre_pieces(breaks, per_piece)


def _copula_cross_moment(rho: float, basis_x: SplineBasis, basis_w: SplineBasis, per_piece: int = 64):
    s, ws = _score_nodes(basis_w, per_piece)
    t, wt = _score_nodes(basis_x, per_piece)
    Q = design_matrix(basis_w, ndtr(s))
    P = design_matrix(basis_x, ndtr(t))
    r = math.sqrt(1 - rho**2)
    z = (t[None, :] - rho * s[:, None]) / r
    dens = np.exp(-0.5 * (s[:, None] ** 2 + z**2)) / (2 * np.pi * r)
    return (Q * ws[:, None]).T @ (dens * wt[None, :]) @ P


def _example2_cross_moment(basis_x: SplineBasis, basis_w: SplineBasis, per_piece: int = 24):
    kx = np.asarray(basis_x.interior_knots)
    wbreaks = np.r_[0.0, basis_w.interior_knots, 2 * kx, 2 * kx - 1, 1.0]
    wbreaks = np.unique(wbreaks[(wbreaks >= 0) & (wbreaks <= 1)])
    wn, ww = gauss_legendre_pieces(wbreaks, per_piece)
    Q = design_matrix(basis_w, wn)
    t, wt = np.polynomial.legendre.leggauss(basis_x.degree + 2)
    cond = np.empty((wn.size, basis_x.dim))
    for i, w in enumerate(wn):
        br = np.unique(np.r_[0.0, w / 2, 0.5, (1 + w) / 2, kx[kx < (1 + w) / 2]])
        lo, hi = br[:-1, None], br[1:, None]
        xs = (0.5 * (hi - lo) * t + 0.5 * (hi + lo)).ravel()
        wx = (0.5 * (hi - lo) * wt).ravel()
        dens = np.select([xs < w / 2, xs < 0.5], [4 * xs / w, 2.0], 4 / w * ((1 + w) / 2 - xs))
        cond[i] = (design_matrix(basis_x, xs) * (dens * wx)[:, None]).sum(axis=0)
    return (Q * ww[:, None]).T @ cond


# ---------------------------------------------------------------------------
# Monte Carlo
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class McConfig:
    spec: DgpSpec
    npiv: NpivConfig
    replications: int = 1000
    eval_grid: int = 100
    seed: int = 0
    threads: int | None = None

    def __post_init__(self):
        if self.spec.family not in _STRUCTURAL:
            raise ValueError("Monte Carlo studies need a structural model (Model1 or Model2)")
        if int(self.replications) != self.replications or self.replications < 1:
            raise ValueError("replications must be an integer >= 1")
        if int(self.eval_grid) != self.eval_grid or self.eval_grid < 2:
            raise ValueError("eval_grid must be an integer >= 2")


@dataclass(frozen=True, eq=False)
class McReport:
    """Grid-averaged Monte Carlo summaries for both estimators.

    ``pointwise`` holds the per-grid-point arrays (``mean``, ``sd``,
    ``bias_sq``, ``variance``, ``mse``) used for plots and checks.
    """

    unconstrained: dict
    constrained: dict
    mse_ratio: float
    failures: int
    replications: int
    grid: np.ndarray
    g_true: np.ndarray
    pointwise: dict
    metadata: dict

    def row(self) -> dict:
        u, c = self.unconstrained, self.constrained
        return {
            "bias_sq_uncon": u["bias_sq"], "var_uncon": u["variance"], "mse_uncon": u["mse"],
            "bias_sq_con": c["bias_sq"], "var_con": c["variance"], "mse_con": c["mse"],
            "mse_ratio": self.mse_ratio,
        }


def replication_seed(seed: int, r: int) -> int:
    """Seed of replication ``r``, independent of execution order."""
    return int(np.random.SeedSequence([int(seed), int(r)]).generate_state(1, np.uint64)[0])


def _one_replication(cfg: McConfig, r: int, grid: np.ndarray):
    sample = simulate(replace(cfg.spec, seed=replication_seed(cfg.seed, r)))
    try:
        fu = fit_unconstrained(sample, cfg.npiv)
        fc = fit_constrained(sample, cfg.npiv)
    except NumericalError:
        return None
    if not (fu.ok and fc.ok):
        return None
    return fu.predict(grid), fc.predict(grid)


def _summaries(fits: np.ndarray, g: np.ndarray) -> tuple[dict, dict]:
    mean = fits.mean(axis=0)
    bias_sq = (mean - g) ** 2
    variance = fits.var(axis=0)
    mse = ((fits - g) ** 2).mean(axis=0)
    point = {"mean": mean, "sd": np.sqrt(variance), "bias_sq": bias_sq, "variance": variance, "mse": mse}
    avg = {"bias_sq": float(bias_sq.mean()), "variance": float(variance.mean()), "mse": float(mse.mean())}
    return avg, point


def mc_study(config: McConfig) -> McReport:
    """Run the replications and summarize bias, variance and MSE on a grid.

    Replications run on a thread pool; results are stored by replication index,
    so the report does not depend on the number of threads.
    """
    R = int(config.replications)
    grid = np.linspace(0.0, 1.0, int(config.eval_grid))
    results = indexed_map(lambda r: _one_replication(config, r, grid), R, config.threads)
    kept = [res for res in results if res is not None]
    failures = R - len(kept)
    if failures > 0.05 * R:
        raise NumericalError(f"{failures} of {R} replications failed (more than 5%)")
    g = np.asarray(true_g(config.spec, grid), dtype=float)
    fu = np.array([k[0] for k in kept])
    fc = np.array([k[1] for k in kept])
    uavg, upt = _summaries(fu, g)
    cavg, cpt = _summaries(fc, g)
    ratio = cavg["mse"] / uavg["mse"] if uavg["mse"] > 0 else float("nan")
    meta = {
        "spec": {k: v for k, v in config.spec.describe().items() if k != "seed"},
        "npiv": config.npiv.describe(),
        "replications": R,
        "eval_grid": int(config.eval_grid),
        "seed": int(config.seed),
    }
    return McReport(
        unconstrained=uavg, constrained=cavg, mse_ratio=float(ratio), failures=failures,
        replications=R, grid=grid, g_true=g,
        pointwise={"unconstrained": upt, "constrained": cpt}, metadata=meta,
    )


_KNOT_PAIRS = ((2, 3), (2, 5), (3, 4), (3, 7), (5, 8))
_KAPPAS = (1.0, 0.5, 0.1)


def table_cells(table: int) -> list[dict]:
    """Parameter cells of the four standard simulation tables.

    Tables 1 and 2 vary noise level and knot counts at ``rho = eta = 0.3``;
    tables 3 and 4 vary ``rho`` and ``eta`` at ``sigma = 0.1``, ``k_X = 3``,
    ``k_W = 4``. Odd tables use Model 1, even ones Model 2.
    """
    if table not in (1, 2, 3, 4):
        raise ValueError("table must be 1, 2, 3 or 4")
    model = 1 if table in (1, 3) else 2
    cells = []
    if table in (1, 2):
        for sigma in (0.1, 0.7):
            for kx, kw in _KNOT_PAIRS:
                for kappa in _KAPPAS:
                    cells.append(dict(model=model, sigma=sigma, kx=kx, kw=kw, kappa=kappa, rho=0.3, eta=0.3))
    else:
        for rho, eta in ((0.3, 0.3), (0.3, 0.7), (0.7, 0.3), (0.7, 0.7)):
            for kappa in _KAPPAS:
                cells.append(dict(model=model, sigma=0.1, kx=3, kw=4, kappa=kappa, rho=rho, eta=eta))
    return cells
