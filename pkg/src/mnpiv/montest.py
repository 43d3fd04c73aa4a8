"""Test of the monotone-instrument condition and a slope-sign test.

The monotone-IV condition says ``F_{X|W}(x | w)`` is nonincreasing in ``w``:
larger instruments shift the regressor to the right. The test statistic is a
self-normalized maximum over a grid of ``x`` values, observed instrument
values ``w`` and a geometric lattice of bandwidths ``h``::

    T = max_{x, w, h}  sum_i k_{i,h}(w) 1{X_i <= x} / ||k_{., h}(w)||

with ``k_{i,h}(w) = 2 K_h(W_i - w) sum_j sign(W_i - W_j) K_h(W_j - w)``.
Critical values come from a Gaussian multiplier bootstrap in which the
indicators are centered by a kernel estimate of the conditional CDF.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri
from sklearn.base import BaseEstimator

from ._parallel import indexed_map
from ._validation import as_1d_column, check_probability, check_same_length
from .basis import Kernel, kernel_weight
from .exceptions import NumericalError
from .npiv import Sample

__all__ = [
    "MivTestConfig",
    "MivTestResult",
    "SlopeSignResult",
    "MonotoneIVTest",
    "default_h_min",
    "bandwidth_lattice",
    "x_grid",
    "estimate_cond_cdf",
    "dominance_weights",
    "test_statistic",
    "bootstrap_critical_value",
    "monotone_iv_test",
    "slope_sign_test",
]

_BLOCK = 16  # bootstrap draws per work unit; fixed so results do not depend on threads


def default_h_min(n: int) -> float:
    return max(0.05, (math.log(n) / n) ** (1.0 / 3.0))


@dataclass(frozen=True)
class MivTestConfig:
    """Tuning constants of the test. ``h_min=None`` selects :func:`default_h_min`."""

    kernel: Kernel = field(default_factory=Kernel)
    u: float = 0.5
    h_min: float | None = None
    epsilon: float = 0.05
    n_boot: int = 1000
    alpha: float = 0.05
    cdf_bandwidth: float = 0.3
    seed: int = 0
    threads: int | None = None

    def __post_init__(self):
        check_probability(self.u, "u")
        check_probability(self.alpha, "alpha")
        if not 0.0 < self.epsilon < 0.5:
            raise ValueError("epsilon must lie in (0, 0.5)")
        if self.h_min is not None and not 0.0 < self.h_min <= 0.5:
            raise ValueError("h_min must lie in (0, 0.5]")
        if int(self.n_boot) != self.n_boot or self.n_boot < 1:
            raise ValueError("n_boot must be a positive integer")
        if not self.cdf_bandwidth > 0:
            raise ValueError("cdf_bandwidth must be positive")

    def resolved_h_min(self, n: int) -> float:
        h = default_h_min(n) if self.h_min is None else self.h_min
        return min(h, 0.5)

    def describe(self, n: int) -> dict:
        return {
            "kernel": self.kernel.family,
            "u": self.u,
            "h_min": self.resolved_h_min(n),
            "epsilon": self.epsilon,
            "n_boot": int(self.n_boot),
            "alpha": self.alpha,
            "cdf_bandwidth": self.cdf_bandwidth,
            "seed": int(self.seed),
        }


@dataclass(frozen=True, eq=False)
class MivTestResult:
    statistic: float
    critical_value: float
    p_value: float
    bandwidths: tuple[float, ...]
    argmax: tuple[float, float, float]  # (x, w, h)
    reject: bool
    alpha: float
    draws: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        x, w, h = self.argmax
        return {
            "statistic": self.statistic,
            "critical_value": self.critical_value,
            "p_value": self.p_value,
            "alpha": self.alpha,
            "bandwidths": list(self.bandwidths),
            "argmax": {"x": x, "w": w, "h": h},
            "reject": self.reject,
        }


def bandwidth_lattice(n: int, u: float = 0.5, h_min: float | None = None) -> tuple[float, ...]:
    """Bandwidths ``0.5 * u^l`` for ``l = 0, 1, ...`` down to ``h_min``."""
    h_min = default_h_min(n) if h_min is None else h_min
    out = [0.5]
    while out[-1] * u >= h_min:
        out.append(out[-1] * u)
    return tuple(out)


def x_grid(n: int, epsilon: float = 0.05) -> np.ndarray:
    """Evaluation points ``epsilon + l (1 - 2 epsilon) / n`` for ``l = 0..n``."""
    return epsilon + np.arange(n + 1) * (1 - 2 * epsilon) / n


def _cdf_matrix(x: np.ndarray, w: np.ndarray, points: np.ndarray, at_w: np.ndarray, bandwidth: float) -> np.ndarray:
    """``F_hat(points[l] | at_w[i])`` as an ``(len(at_w), len(points))`` matrix."""
    kern = Kernel()
    weights = kern((w[None, :] - at_w[:, None]) / bandwidth)
    ind = (x[:, None] <= points[None, :]).astype(float)
    den = weights.sum(axis=1)
    ecdf = ind.mean(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        F = (weights @ ind) / den[:, None]
    F = np.where(den[:, None] > 0, F, ecdf[None, :])
    return np.clip(F, 0.0, 1.0)


def estimate_cond_cdf(sample: Sample, x: float, w: float, bandwidth: float = 0.3) -> float:
    """Nadaraya-Watson estimate of ``P(X <= x | W = w)`` with an Epanechnikov kernel.

    Falls back to the empirical CDF of ``X`` when no instrument value lies
    within ``bandwidth`` of ``w``.
    """
    if not bandwidth > 0:
        raise ValueError("bandwidth must be positive")
    return float(_cdf_matrix(sample.x, sample.w, np.array([x], float), np.array([w], float), bandwidth)[0, 0])


def _weight_matrix(w_obs: np.ndarray, w_eval: np.ndarray, h: float, kernel: Kernel) -> np.ndarray:
    """Rows ``k_{., h}(w_eval[a])``; uses sorted prefix sums for the sign sums."""
    Kmat = kernel_weight(kernel, h, w_obs[None, :] - w_eval[:, None])
    Kmat = np.atleast_2d(Kmat)
    order = np.argsort(w_obs, kind="stable")
    ws = w_obs[order]
    cum = np.concatenate([np.zeros((Kmat.shape[0], 1)), np.cumsum(Kmat[:, order], axis=1)], axis=1)
    left = np.searchsorted(ws, w_obs, side="left")
    right = np.searchsorted(ws, w_obs, side="right")
    below = cum[:, left]
    above = cum[:, -1:] - cum[:, right]
    return 2.0 * Kmat * (below - above)


def dominance_weights(sample: Sample, w: float, h: float, kernel: Kernel | None = None) -> np.ndarray:
    """Weights ``k_{i,h}(w)``, ``i = 1..n``. They sum to zero."""
    if not h > 0:
        raise ValueError("h must be positive")
    return _weight_matrix(sample.w, np.array([float(w)]), h, kernel or Kernel())[0]


@dataclass(frozen=True, eq=False)
class _Layer:
    h: float
    k: np.ndarray  # (n_w, n)
    norm: np.ndarray  # (n_w,)


@dataclass(frozen=True, eq=False)
class _Prepared:
    xs: np.ndarray
    ws: np.ndarray  # instrument values scanned, ascending
    ind: np.ndarray  # (n, n_x) indicators 1{X_i <= x_l}
    layers: tuple[_Layer, ...]
    bandwidths: tuple[float, ...]


def _prepare(sample: Sample, config: MivTestConfig) -> _Prepared:
    n = sample.n
    if n < 4:
        raise ValueError("the monotone-IV test needs at least 4 observations")
    xs = x_grid(n, config.epsilon)
    ws = np.unique(sample.w)
    hs = bandwidth_lattice(n, config.u, config.resolved_h_min(n))
    ind = (sample.x[:, None] <= xs[None, :]).astype(float)
    layers = []
    for h in hs:
        k = _weight_matrix(sample.w, ws, h, config.kernel)
        layers.append(_Layer(h, k, np.sqrt((k * k).sum(axis=1))))
    if all(not np.any(layer.norm > 0) for layer in layers):
        raise NumericalError("degenerate instrument spacing: every weight vector is zero")
    return _Prepared(xs, ws, ind, tuple(layers), hs)


def _ratio(num: np.ndarray, norm: np.ndarray) -> np.ndarray:
    out = np.full(num.shape, -np.inf)
    ok = norm > 0
    out[..., ok, :] = num[..., ok, :] / norm[ok, None]
    return out


def _statistic(prep: _Prepared) -> tuple[float, tuple[float, float, float]]:
    best, where = -np.inf, None
    n = prep.ind.shape[0]
    for layer in prep.layers:
        num = layer.k @ prep.ind
        # partial sums that are exactly zero in exact arithmetic (all windowed
        # points below x) come out at rounding level; snap those to zero
        bound = 4.0 * n * np.finfo(float).eps * np.abs(layer.k).sum(axis=1, keepdims=True)
        num[np.abs(num) <= bound] = 0.0
        vals = _ratio(num, layer.norm)
        a, l = np.unravel_index(int(np.argmax(vals)), vals.shape)
        if vals[a, l] > best:
            best, where = float(vals[a, l]), (float(prep.xs[l]), float(prep.ws[a]), layer.h)
    return best, where


def test_statistic(sample: Sample, config: MivTestConfig | None = None) -> tuple[float, tuple[float, float, float]]:
    """Statistic ``T`` and the ``(x, w, h)`` attaining it.

    Ties go to the first triple in the scan over ``h`` (descending), then
    ``w`` (ascending), then ``x`` (ascending).
    """
    return _statistic(_prepare(sample, config or MivTestConfig()))


def _multipliers(seed: int, start: int, stop: int, n: int) -> np.ndarray:
    return np.stack([np.random.default_rng([int(seed), b]).standard_normal(n) for b in range(start, stop)])


def _bootstrap_block(prep: _Prepared, centred: np.ndarray, e: np.ndarray) -> np.ndarray:
    best = np.full(e.shape[0], -np.inf)
    for layer in prep.layers:
        num = (e[:, None, :] * layer.k[None, :, :]) @ centred
        vals = _ratio(num, layer.norm)
        best = np.maximum(best, vals.reshape(e.shape[0], -1).max(axis=1))
    return best


def _bootstrap(prep: _Prepared, sample: Sample, config: MivTestConfig, multipliers) -> np.ndarray:
    F = _cdf_matrix(sample.x, sample.w, prep.xs, sample.w, config.cdf_bandwidth)
    centred = prep.ind - F
    n = sample.n
    if multipliers is not None:
        e = np.atleast_2d(np.asarray(multipliers, dtype=float))
        if e.shape[1] != n:
            raise ValueError(f"multipliers must have {n} columns")
        blocks = [e[i : i + _BLOCK] for i in range(0, e.shape[0], _BLOCK)]
        parts = indexed_map(lambda i: _bootstrap_block(prep, centred, blocks[i]), len(blocks), config.threads)
        return np.concatenate(parts)
    B = int(config.n_boot)
    starts = list(range(0, B, _BLOCK))

    def work(i):
        lo = starts[i]
        hi = min(lo + _BLOCK, B)
        return _bootstrap_block(prep, centred, _multipliers(config.seed, lo, hi, n))

    return np.concatenate(indexed_map(work, len(starts), config.threads))


def _quantile(draws: np.ndarray, alpha: float) -> float:
    B = draws.size
    k = max(1, math.ceil((1 - alpha) * B - 1e-9))
    return float(np.sort(draws)[k - 1])


def bootstrap_critical_value(
    sample: Sample, config: MivTestConfig | None = None, multipliers=None
) -> tuple[float, np.ndarray]:
    """Critical value ``c(alpha)`` and the bootstrap draws ``T^b``.

    Draw ``b`` uses standard normal multipliers from ``default_rng([seed, b])``.
    ``multipliers`` (shape ``(B, n)``) replaces the random draws.
    ``c(alpha)`` is the ``ceil((1 - alpha) B)``-th order statistic.
    """
    config = config or MivTestConfig()
    prep = _prepare(sample, config)
    draws = _bootstrap(prep, sample, config, multipliers)
    return _quantile(draws, config.alpha), draws


def monotone_iv_test(sample: Sample, config: MivTestConfig | None = None, multipliers=None) -> MivTestResult:
    """Run the test; reject the monotone-IV condition when ``T > c(alpha)``."""
    config = config or MivTestConfig()
    prep = _prepare(sample, config)
    T, where = _statistic(prep)
    draws = _bootstrap(prep, sample, config, multipliers)
    c = _quantile(draws, config.alpha)
    p = (1 + int(np.sum(draws >= T))) / (1 + draws.size)
    return MivTestResult(
        statistic=T, critical_value=c, p_value=p, bandwidths=prep.bandwidths,
        argmax=where, reject=bool(T > c), alpha=config.alpha, draws=draws,
    )


@dataclass(frozen=True)
class SlopeSignResult:
    slope: float
    se: float
    t_stat: float
    sign: int
    reject_flat: bool

    def to_dict(self) -> dict:
        return {"slope": self.slope, "se": self.se, "t_stat": self.t_stat,
                "sign": self.sign, "reject_flat": self.reject_flat}


def slope_sign_test(sample: Sample, alpha: float = 0.05) -> SlopeSignResult:
    """OLS of ``y`` on ``(1, w)`` with an HC1 robust standard error.

    The slope is declared nonzero when ``|t|`` exceeds the two-sided normal
    critical value; ``sign`` is then the sign of the slope, else 0.
    """
    check_probability(alpha, "alpha")
    n = sample.n
    if n < 3:
        raise ValueError("slope_sign_test needs at least 3 observations")
    w, y = sample.w, sample.y
    wc = w - w.mean()
    sxx = float(wc @ wc)
    if sxx <= 0:
        raise ValueError("w is constant; the slope is not identified")
    slope = float(wc @ (y - y.mean())) / sxx
    resid = y - y.mean() - slope * wc
    se = math.sqrt(n / (n - 2) * float((wc * wc) @ (resid * resid))) / sxx
    if se > 0:
        t = slope / se
    else:
        t = math.copysign(math.inf, slope) if slope != 0 else 0.0
    crit = float(ndtri(1 - alpha / 2))
    reject = abs(t) > crit
    sign = int(np.sign(slope)) if reject else 0
    return SlopeSignResult(slope, se, float(t), sign, bool(reject))


class MonotoneIVTest(BaseEstimator):
    """Estimator-style wrapper around :func:`monotone_iv_test`.

    ``fit(X, W)`` stores ``result_`` plus ``statistic_``, ``critical_value_``,
    ``p_value_`` and ``reject_``. Inputs must lie in [0, 1].
    """

    def __init__(self, alpha=0.05, n_boot=1000, u=0.5, h_min=None, epsilon=0.05,
                 cdf_bandwidth=0.3, seed=0, threads=None):
        self.alpha = alpha
        self.n_boot = n_boot
        self.u = u
        self.h_min = h_min
        self.epsilon = epsilon
        self.cdf_bandwidth = cdf_bandwidth
        self.seed = seed
        self.threads = threads

    def fit(self, X, W, y=None):
        x = as_1d_column(X, "X")
        w = as_1d_column(W, "W")
        check_same_length(X=x, W=w)
        config = MivTestConfig(
            u=self.u, h_min=self.h_min, epsilon=self.epsilon, n_boot=self.n_boot,
            alpha=self.alpha, cdf_bandwidth=self.cdf_bandwidth, seed=self.seed, threads=self.threads,
        )
        self.result_ = monotone_iv_test(Sample(np.zeros_like(x), x, w), config)
        self.statistic_ = self.result_.statistic
        self.critical_value_ = self.result_.critical_value
        self.p_value_ = self.result_.p_value
        self.reject_ = self.result_.reject
        return self
