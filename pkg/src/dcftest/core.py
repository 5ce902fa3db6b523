"""The DCF two-sample test for high-dimensional means.

The statistic is ``sqrt(n) * max_j |Xbar_j - Ybar_j|``. Its critical value is
the ``1 - alpha`` quantile of the Gaussian multiplier bootstrap

    T^e = || n^{-1/2} sum_i e_i (X_i - Xbar)
             - sqrt(n/m) m^{-1/2} sum_i e_{n+i} (Y_i - Ybar) ||_inf

with the data held fixed. Replicate ``r`` draws its ``n + m`` multipliers from
its own counter block (see :func:`dcftest.rng.multiplier_block`), so the draws
are bitwise identical for any number of worker threads.
"""

from __future__ import annotations

import math
import warnings
from fractions import Fraction
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .rng import BOOT_DOMAIN, STAR_DOMAIN, SeedSpec, multiplier_block

__all__ = [
    "TestConfig",
    "TestResult",
    "ConfidenceBox",
    "Diagnostics",
    "DegenerateBootstrapWarning",
    "check_samples",
    "test_statistic",
    "bootstrap_draws",
    "critical_value",
    "p_value",
    "run_test",
    "confidence_region",
    "power_estimate",
    "diagnostics",
    "DCFTest",
]

# replicates per matrix product; bounds peak memory at chunk * (n + m + p) floats
DEFAULT_CHUNK = 1024


class DegenerateBootstrapWarning(UserWarning):
    """All bootstrap draws are zero, so every statistic is rejected."""


@dataclass(frozen=True)
class TestConfig:
    """Significance level, bootstrap size and master seed of one test."""

    __test__ = False  # keep pytest from collecting this class

    alpha: float = 0.05
    n_boot: int = 10_000
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if int(self.n_boot) != self.n_boot or self.n_boot < 100:
            raise ValueError(f"n_boot must be an integer >= 100, got {self.n_boot}")
        SeedSpec(self.seed)  # range check

    def to_dict(self):
        return asdict(self)


@dataclass
class TestResult:
    __test__ = False

    statistic: float
    critical_value: float
    p_value: float
    reject: bool
    degenerate: bool = False

    def to_dict(self):
        return asdict(self)


@dataclass
class ConfidenceBox:
    """The sup-norm box ``{d : ||center - d||_inf <= half_width}``."""

    center: np.ndarray
    half_width: float

    def contains(self, d) -> bool:
        d = np.asarray(d, dtype=float)
        return bool(np.max(np.abs(self.center - d)) <= self.half_width)


@dataclass
class Diagnostics:
    """Empirical moment proxies for the test's regularity conditions.

    These replace population moments by centered sample moments; they describe
    the data and do not certify the conditions.
    """

    min_combined_variance: float
    max_avg_abs_moment_3: float
    max_avg_moment_4: float
    notes: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)


def _as_sample(A, name):
    A = check_array(A, dtype=np.float64, ensure_2d=True, ensure_all_finite=True, input_name=name)
    if A.shape[0] < 2:
        raise ValueError(f"{name} needs at least 2 observations, got {A.shape[0]}")
    return A


def check_samples(X, Y):
    """Validate two samples and return them as float arrays of shape (n, p), (m, p)."""
    X = _as_sample(X, "X")
    Y = _as_sample(Y, "Y")
    if X.shape[1] != Y.shape[1]:
        raise ValueError(f"dimension mismatch: X has p={X.shape[1]}, Y has p={Y.shape[1]}")
    return X, Y


def test_statistic(X, Y) -> float:
    """Return ``sqrt(n) * max_j |Xbar_j - Ybar_j|``."""
    X, Y = check_samples(X, Y)
    n = X.shape[0]
    return float(math.sqrt(n) * np.max(np.abs(_col_means(X) - _col_means(Y))))


test_statistic.__test__ = False  # not a pytest test


def _col_means(A):
    # Reducing each contiguous row of A.T runs the same summation for every
    # column, so the means do not depend on column order.
    return np.ascontiguousarray(A.T).sum(axis=1) / A.shape[0]


def _bootstrap_weights(X, Y):
    """Stack centered rows so that ``e @ W`` is ``S^eX - sqrt(n/m) S^eY``."""
    n, m = X.shape[0], Y.shape[0]
    Xc = X - _col_means(X)
    Yc = Y - _col_means(Y)
    return np.vstack([Xc / math.sqrt(n), Yc * (-math.sqrt(n) / m)])


def _sup_norm_draws(W, seed, n_boot, shift=None, domain=BOOT_DOMAIN, chunk=DEFAULT_CHUNK, n_jobs=1):
    width = W.shape[0]
    # GEMM roundoff depends on where a column sits in the kernel's tiling.
    # Sorting columns by content first makes the sup norm exactly invariant
    # to the caller's column order.
    keys = W if shift is None else np.vstack([W, shift])
    order = np.lexsort(keys)
    W = np.ascontiguousarray(W[:, order])
    if shift is not None:
        shift = shift[order]
    bounds = [(s, min(s + chunk, n_boot)) for s in range(0, n_boot, chunk)]

    def work(b):
        E = multiplier_block(seed, b[0], b[1], width, domain=domain)
        S = E @ W
        if shift is not None:
            S += shift
        return np.max(np.abs(S), axis=1)

    if n_jobs == 1 or len(bounds) == 1:
        parts = [work(b) for b in bounds]
    else:
        with ThreadPoolExecutor(max_workers=n_jobs) as ex:
            parts = list(ex.map(work, bounds))
    return np.concatenate(parts)


def bootstrap_draws(X, Y, config: TestConfig, *, chunk=DEFAULT_CHUNK, n_jobs=1) -> np.ndarray:
    """Multiplier-bootstrap realizations of the sup statistic, sorted ascending.

    Parameters
    ----------
    X, Y : array-like of shape (n, p) and (m, p)
    config : TestConfig
    chunk : int
        Replicates per matrix product. Multipliers do not depend on it; the
        draws can differ only by floating-point roundoff in the product.
    n_jobs : int
        Worker threads. Does not affect the result.

    Returns
    -------
    ndarray of shape (config.n_boot,)
    """
    X, Y = check_samples(X, Y)
    W = _bootstrap_weights(X, Y)
    draws = _sup_norm_draws(W, config.seed, config.n_boot, chunk=chunk, n_jobs=n_jobs)
    draws.sort()
    return draws


def critical_value(draws, alpha) -> float:
    """Smallest draw ``t`` with ``#{draws <= t} / N >= 1 - alpha``.

    For sorted draws this is the order statistic of rank ``ceil(N (1 - alpha))``.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    d = np.sort(np.asarray(draws, dtype=float))
    N = d.size
    # ceil(N (1 - alpha)) = N - floor(N alpha); the decimal alpha keeps 10 * 0.3 exact
    k = N - math.floor(N * Fraction(repr(float(alpha))))
    return float(d[max(k, 1) - 1])


def p_value(draws, statistic) -> float:
    """Proportion of bootstrap draws at least as large as ``statistic``."""
    d = np.asarray(draws, dtype=float)
    return float(np.count_nonzero(d >= statistic) / d.size)


def run_test(X, Y, config: TestConfig, *, n_jobs=1) -> TestResult:
    """Statistic, critical value, p-value and decision; reject when T >= c_B(alpha)."""
    X, Y = check_samples(X, Y)
    stat = test_statistic(X, Y)
    draws = bootstrap_draws(X, Y, config, n_jobs=n_jobs)
    return _assemble(stat, draws, config.alpha)


def _assemble(stat, draws, alpha):
    cv = critical_value(draws, alpha)
    degenerate = bool(draws[-1] == 0.0)
    if degenerate:
        warnings.warn(
            "all bootstrap draws are 0 (constant samples); the test rejects at any level",
            DegenerateBootstrapWarning,
            stacklevel=3,
        )
    return TestResult(
        statistic=stat,
        critical_value=cv,
        p_value=p_value(draws, stat),
        reject=bool(stat >= cv),
        degenerate=degenerate,
    )


def confidence_region(X, Y, config: TestConfig) -> ConfidenceBox:
    """Simultaneous ``1 - alpha`` box for ``mu_X - mu_Y`` with half-width ``c_B / sqrt(n)``."""
    X, Y = check_samples(X, Y)
    cv = critical_value(bootstrap_draws(X, Y, config), config.alpha)
    return ConfidenceBox(center=_col_means(X) - _col_means(Y), half_width=cv / math.sqrt(X.shape[0]))


def power_estimate(X, Y, delta, config: TestConfig, n_boot_star=10_000, star_seed=None, *, cv=None) -> float:
    """Bootstrap approximation of the power at mean difference ``delta``.

    A second, independent multiplier set ``e*`` gives the fraction of
    replicates with ``||S^{e*X} - sqrt(n/m) S^{e*Y} + sqrt(n) delta||_inf``
    at least ``c_B(alpha)``, where ``c_B`` comes from ``config.seed``. The
    ``e*`` streams live in a separate key domain, so they never coincide with
    the critical-value streams even when ``star_seed == config.seed``.

    Parameters
    ----------
    delta : array-like of shape (p,)
        Hypothesised ``mu_X - mu_Y``.
    star_seed : int, optional
        Seed of the ``e*`` multipliers; defaults to ``config.seed``.
    cv : float, optional
        Precomputed ``c_B(alpha)`` for these data and ``config``.
    """
    X, Y = check_samples(X, Y)
    delta = np.asarray(delta, dtype=float).reshape(-1)
    if delta.shape[0] != X.shape[1]:
        raise ValueError(f"delta has length {delta.shape[0]}, expected p={X.shape[1]}")
    if n_boot_star < 1:
        raise ValueError("n_boot_star must be >= 1")
    star_seed = config.seed if star_seed is None else int(star_seed)
    W = _bootstrap_weights(X, Y)
    if cv is None:
        cv = critical_value(_sup_norm_draws(W, config.seed, config.n_boot), config.alpha)
    star = _sup_norm_draws(W, star_seed, n_boot_star, shift=math.sqrt(X.shape[0]) * delta, domain=STAR_DOMAIN)
    return float(np.count_nonzero(star >= cv) / n_boot_star)


def _moments(A):
    C = A - A.mean(axis=0)
    C2 = C * C
    return C2.mean(axis=0), np.abs(C2 * C).mean(axis=0), (C2 * C2).mean(axis=0)


def diagnostics(X, Y) -> Diagnostics:
    """Centered empirical moments standing in for the population conditions."""
    X, Y = check_samples(X, Y)
    vx, m3x, m4x = _moments(X)
    vy, m3y, m4y = _moments(Y)
    return Diagnostics(
        min_combined_variance=float(np.min(vx + vy)),
        max_avg_abs_moment_3=float(max(m3x.max(), m3y.max())),
        max_avg_moment_4=float(max(m4x.max(), m4y.max())),
        notes=["sample-mean-centered proxies for population moment conditions"],
    )


class DCFTest(BaseEstimator):
    """Distribution-and-correlation-free two-sample test of equal mean vectors.

    Parameters
    ----------
    alpha : float, default=0.05
        Significance level.
    n_boot : int, default=10000
        Number of multiplier-bootstrap replicates.
    seed : int, default=0
        Master seed of the bootstrap multipliers.
    n_jobs : int, default=1
        Worker threads for the bootstrap. Results do not depend on it.

    Attributes
    ----------
    statistic_ : float
    draws_ : ndarray of shape (n_boot,)
        Sorted bootstrap draws.
    critical_value_ : float
    p_value_ : float
    reject_ : bool
    mean_diff_ : ndarray of shape (p,)
    n_features_in_ : int

    Examples
    --------
    >>> import numpy as np
    >>> rng = np.random.default_rng(0)
    >>> X, Y = rng.normal(size=(50, 20)), rng.normal(size=(70, 20)) + 1.0
    >>> DCFTest(n_boot=500).fit(X, Y).reject_
    True
    """

    def __init__(self, alpha=0.05, n_boot=10_000, seed=0, n_jobs=1):
        self.alpha = alpha
        self.n_boot = n_boot
        self.seed = seed
        self.n_jobs = n_jobs

    def _config(self):
        return TestConfig(alpha=self.alpha, n_boot=self.n_boot, seed=self.seed)

    def fit(self, X, Y):
        """Run the bootstrap for samples ``X`` (n, p) and ``Y`` (m, p)."""
        config = self._config()
        X, Y = check_samples(X, Y)
        self.n_features_in_ = X.shape[1]
        self.n_x_, self.n_y_ = X.shape[0], Y.shape[0]
        self.mean_diff_ = _col_means(X) - _col_means(Y)
        self.statistic_ = test_statistic(X, Y)
        self._W = _bootstrap_weights(X, Y)
        self.draws_ = bootstrap_draws(X, Y, config, n_jobs=self.n_jobs)
        res = _assemble(self.statistic_, self.draws_, self.alpha)
        self.critical_value_ = res.critical_value
        self.p_value_ = res.p_value
        self.reject_ = res.reject
        self.degenerate_ = res.degenerate
        return self

    def result(self) -> TestResult:
        check_is_fitted(self, "draws_")
        return TestResult(self.statistic_, self.critical_value_, self.p_value_, self.reject_, self.degenerate_)

    def critical_value(self, alpha=None) -> float:
        check_is_fitted(self, "draws_")
        return critical_value(self.draws_, self.alpha if alpha is None else alpha)

    def confidence_region(self, alpha=None) -> ConfidenceBox:
        cv = self.critical_value(alpha)
        return ConfidenceBox(center=self.mean_diff_.copy(), half_width=cv / math.sqrt(self.n_x_))

    def power(self, delta, n_boot_star=10_000, star_seed=None) -> float:
        """Bootstrap power at mean difference ``delta``; see :func:`power_estimate`."""
        check_is_fitted(self, "draws_")
        delta = np.asarray(delta, dtype=float).reshape(-1)
        if delta.shape[0] != self.n_features_in_:
            raise ValueError(f"delta has length {delta.shape[0]}, expected p={self.n_features_in_}")
        star_seed = self.seed if star_seed is None else int(star_seed)
        star = _sup_norm_draws(
            self._W, star_seed, n_boot_star, shift=math.sqrt(self.n_x_) * delta, domain=STAR_DOMAIN
        )
        return float(np.count_nonzero(star >= self.critical_value_) / n_boot_star)
