"""Conditional extremes dependence models on the Gumbel scale.

Implements the regression-form model (Y | X = x) = alpha * x + x^beta * Z for
x above a high threshold, in bivariate, multivariate, and directional-covariate
forms, plus simulation of joint extremes and quantile regression for the
sub-threshold body.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import sparse
from scipy.optimize import linprog, minimize
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .exceptions import FitConvergenceError
from .validation import (
    check_array_1d,
    check_array_2d,
    check_finite_scalar,
    check_positive,
    check_probability,
    check_same_length,
)

ALPHA_RANGE = (0.0, 1.0)   # open below, closed above
BETA_RANGE = (-5.0, 1.0)
SIGMA_FLOOR = 1e-8
MIN_EXCEEDANCES = 10

_HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)


@dataclass(frozen=True)
class HtFit:
    """Fitted conditional-extremes parameters with the empirical residual set.

    The residuals are the standardized departures of the conditioned variate
    from the fitted linear term; their empirical distribution stands in for
    the limit distribution of Z.  The exceedance pairs used in the fit are
    retained for bootstrap refitting.
    """

    alpha: float
    beta: float
    mu: float
    sigma: float
    threshold_u: float
    residuals: np.ndarray
    nll: float = field(default=float("nan"), compare=False)
    x_exc: np.ndarray | None = field(default=None, compare=False, repr=False)
    y_exc: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if not ALPHA_RANGE[0] < self.alpha <= ALPHA_RANGE[1]:
            raise ValueError(f"alpha={self.alpha} outside (0, 1]")
        if not BETA_RANGE[0] <= self.beta <= BETA_RANGE[1]:
            raise ValueError(f"beta={self.beta} outside {BETA_RANGE}")
        check_positive(self.sigma, "sigma")
        res = check_array_1d(self.residuals, "residuals")
        object.__setattr__(self, "residuals", res)

    @property
    def n_exceedances(self) -> int:
        return self.residuals.size

    def to_dict(self) -> dict:
        return {
            "alpha": float(self.alpha),
            "beta": float(self.beta),
            "mu": float(self.mu),
            "sigma": float(self.sigma),
            "threshold_u": float(self.threshold_u),
            "residuals": [float(z) for z in self.residuals],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HtFit":
        return cls(
            alpha=d["alpha"], beta=d["beta"], mu=d["mu"], sigma=d["sigma"],
            threshold_u=d["threshold_u"], residuals=np.asarray(d["residuals"], dtype=float),
        )


def ht_residuals(alpha: float, beta: float, x, y, threshold_u: float) -> np.ndarray:
    """Standardized residuals z_i = (y_i - alpha * x_i) / x_i^beta over exceedances.

    Raises if any selected conditioning value is non-positive, which signals a
    Gumbel-scale threshold too low for the power term to be well defined.
    """
    x = check_array_1d(x, "x")
    y = check_array_1d(y, "y")
    check_same_length(x, y, "x", "y")
    mask = x > threshold_u
    xs, ys = x[mask], y[mask]
    if xs.size and np.min(xs) <= 0.0:
        raise ValueError(
            "conditioning values <= 0 among exceedances; threshold too low on Gumbel scale"
        )
    return (ys - alpha * xs) / xs ** beta


def _ht_nll(params, x, y) -> float:
    """Gaussian pseudo-likelihood objective (negative log)."""
    alpha, beta, mu, sigma = params
    if not ALPHA_RANGE[0] < alpha <= ALPHA_RANGE[1]:
        return np.inf
    if not BETA_RANGE[0] <= beta <= BETA_RANGE[1]:
        return np.inf
    if sigma < SIGMA_FLOOR:
        return np.inf
    xb = x ** beta
    mean = alpha * x + mu * xb
    sd = sigma * xb
    return float(np.sum(np.log(sd) + 0.5 * ((y - mean) / sd) ** 2)) + x.size * _HALF_LOG_2PI


def ht_profile_nll(alpha: float, beta: float, x, y) -> float:
    """Objective with the Gaussian nuisance (mu, sigma) concentrated out.

    Used as the reference-grid oracle against the joint optimum.
    """
    z = (y - alpha * x) / x ** beta
    mu = float(np.mean(z))
    sigma = max(float(np.std(z)), SIGMA_FLOOR)
    return _ht_nll((alpha, beta, mu, sigma), x, y)


def _fit_ht_core(x: np.ndarray, y: np.ndarray, threshold_u: float) -> HtFit:
    mask = x > threshold_u
    xs, ys = x[mask], y[mask]
    if xs.size < MIN_EXCEEDANCES:
        raise ValueError(
            f"need at least {MIN_EXCEEDANCES} exceedances above u={threshold_u}, got {xs.size}"
        )
    if np.min(xs) <= 0.0:
        raise ValueError(
            "conditioning values <= 0 among exceedances; threshold too low on Gumbel scale"
        )

    best = None
    for a0, b0 in itertools.product((0.2, 0.5, 0.9), (0.0, 0.3)):
        z0 = (ys - a0 * xs) / xs ** b0
        start = [a0, b0, float(np.mean(z0)), max(float(np.std(z0)), 1e-4)]
        res = minimize(
            _ht_nll, start, args=(xs, ys),
            method="Nelder-Mead",
            options={"fatol": 1e-8, "xatol": 1e-7, "maxiter": 4000, "maxfev": 4000},
        )
        if np.isfinite(res.fun) and (best is None or res.fun < best.fun):
            best = res
    if best is None:
        raise FitConvergenceError("conditional-extremes fit failed from all restarts")
    alpha, beta, mu, sigma = best.x
    alpha = float(min(alpha, ALPHA_RANGE[1]))
    beta = float(np.clip(beta, *BETA_RANGE))
    residuals = (ys - alpha * xs) / xs ** beta
    return HtFit(
        alpha=alpha, beta=beta, mu=float(mu), sigma=float(max(sigma, SIGMA_FLOOR)),
        threshold_u=float(threshold_u), residuals=residuals,
        nll=float(best.fun), x_exc=xs.copy(), y_exc=ys.copy(),
    )


def _sample_truncated_gumbel(n: int, y_min: float, rng: np.random.Generator) -> np.ndarray:
    """Standard Gumbel draws truncated below at y_min, by inverse CDF.

    Sampling is done in survival space: sf uniform on (0, sf(y_min)], and
    y = -log(-log1p(-sf)) keeps full precision deep in the tail.
    """
    sf_min = -np.expm1(-np.exp(-y_min))
    sf = sf_min * (1.0 - rng.uniform(size=n))
    return -np.log(-np.log1p(-sf))


def _simulate_gumbel(alpha, beta, residual_rows: np.ndarray, n: int, y_min: float,
                     rng: np.random.Generator):
    """Core simulation on the Gumbel scale shared by all model forms.

    Returns (x, Y) where Y has one column per conditioned component; drawing
    whole residual rows preserves cross-component dependence.
    """
    x = _sample_truncated_gumbel(n, y_min, rng)
    idx = rng.integers(0, residual_rows.shape[0], size=n)
    z = residual_rows[idx]
    alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    y = alpha[None, :] * x[:, None] + x[:, None] ** beta[None, :] * z
    return x, y


class ConditionalReturnCurve(NamedTuple):
    x_return: float
    median_y: float
    band_lo: float
    band_hi: float


def simulate_pairs(fit: HtFit, marginal_x, marginal_y, n: int, x_min: float,
                   seed=None) -> np.ndarray:
    """Simulate joint (x, y) pairs in physical units from a fitted model.

    Draws x from the standard Gumbel distribution truncated below at the
    Gumbel image of ``x_min``, resamples residuals with replacement,
    evaluates the regression form, and maps both coordinates back to
    physical scale through the marginals.
    """
    n = int(n)
    if n <= 0:
        raise ValueError("n must be positive")
    if fit.residuals.size == 0:
        raise ValueError("empty residual set")
    y_min = float(marginal_x.to_gumbel(x_min))
    if y_min < fit.threshold_u:
        raise ValueError(
            f"x_min maps to Gumbel {y_min:.4f}, below the fitted threshold "
            f"{fit.threshold_u:.4f}"
        )
    rng = np.random.default_rng(seed)
    xg, yg = _simulate_gumbel(fit.alpha, fit.beta, fit.residuals[:, None], n, y_min, rng)
    return np.column_stack([
        marginal_x.from_gumbel(xg),
        marginal_y.from_gumbel(yg[:, 0]),
    ])


def conditional_return_curve(fit: HtFit, marginal_x, marginal_y,
                             exceed_prob_annual: float, n_sim: int, seed=None,
                             n_bootstrap: int = 100) -> ConditionalReturnCurve:
    """Median of Y given X above its return value, with bootstrap bands.

    The central estimate is the empirical median of ``n_sim`` simulated
    conditioned values; the 95% band comes from refitting on resampled
    exceedance pairs and resimulating, one derived seed per replicate.
    """
    check_probability(exceed_prob_annual, "exceed_prob_annual")
    n_sim = int(n_sim)
    if n_sim < 100:
        raise ValueError("too few simulated exceedances (need n_sim >= 100)")
    T = 1.0 / exceed_prob_annual
    x_return = float(marginal_x.return_value(T))
    sims = simulate_pairs(fit, marginal_x, marginal_y, n_sim, x_return, seed=seed)
    median_y = float(np.median(sims[:, 1]))

    if fit.x_exc is None or fit.y_exc is None:
        raise ValueError("fit does not retain its exceedance pairs; cannot bootstrap")
    y_min = float(marginal_x.to_gumbel(x_return))
    xs, ys = fit.x_exc, fit.y_exc
    base = 0 if seed is None else int(seed)
    boot_medians = np.empty(n_bootstrap)
    for r in range(n_bootstrap):
        rng = np.random.default_rng(base + r + 1)
        idx = rng.integers(0, xs.size, size=xs.size)
        refit = _fit_ht_core(xs[idx], ys[idx], fit.threshold_u)
        _, yg = _simulate_gumbel(
            refit.alpha, refit.beta, refit.residuals[:, None], n_sim, y_min, rng
        )
        boot_medians[r] = np.median(marginal_y.from_gumbel(yg[:, 0]))
    lo, hi = np.percentile(boot_medians, [2.5, 97.5])
    return ConditionalReturnCurve(x_return, median_y, float(lo), float(hi))


class ConditionalExtremes(BaseEstimator):
    """Bivariate conditional extremes model (Y | X = x) = alpha*x + x^beta * Z.

    Both variates must already be on the standard Gumbel scale (use
    :class:`~jointmet.marginals.SemiParametricMarginal.to_gumbel`).  The model
    is fitted over pairs whose conditioning value exceeds ``threshold`` by
    maximizing the working Gaussian pseudo-likelihood in which Z ~ N(mu,
    sigma^2); the Gaussian assumption is used only for fitting, and simulation
    resamples the empirical residual set.

    Parameters
    ----------
    threshold : float
        Conditioning threshold on the Gumbel scale.
    """

    def __init__(self, threshold=None):
        self.threshold = threshold

    def fit(self, x, y):
        x = check_array_1d(x, "x")
        y = check_array_1d(y, "y")
        check_same_length(x, y, "x", "y")
        u = check_finite_scalar(self.threshold, "threshold")
        self.fit_ = _fit_ht_core(x, y, u)
        self.alpha_ = self.fit_.alpha
        self.beta_ = self.fit_.beta
        self.mu_ = self.fit_.mu
        self.sigma_ = self.fit_.sigma
        self.residuals_ = self.fit_.residuals
        self.n_exceedances_ = self.fit_.n_exceedances
        return self

    def _check_fitted(self):
        if not hasattr(self, "fit_"):
            raise NotFittedError("model is not fitted; call fit() first")

    def conditional(self, x_gumbel, z):
        """Evaluate alpha*x + x^beta * z for given conditioning value(s)."""
        self._check_fitted()
        x_gumbel = np.asarray(x_gumbel, dtype=float)
        return (self.alpha_ * x_gumbel + x_gumbel ** self.beta_ * np.asarray(z, float))[()]

    def simulate(self, marginal_x, marginal_y, n: int, x_min: float, seed=None) -> np.ndarray:
        """Simulate n joint (x, y) pairs in physical units; see :func:`simulate_pairs`."""
        self._check_fitted()
        return simulate_pairs(self.fit_, marginal_x, marginal_y, n, x_min, seed=seed)

    def return_curve(self, marginal_x, marginal_y, exceed_prob_annual: float,
                     n_sim: int, seed=None, n_bootstrap: int = 100) -> ConditionalReturnCurve:
        """Conditioned-median return curve; see :func:`conditional_return_curve`."""
        self._check_fitted()
        return conditional_return_curve(
            self.fit_, marginal_x, marginal_y, exceed_prob_annual, n_sim,
            seed=seed, n_bootstrap=n_bootstrap,
        )


class MultivariateConditionalExtremes(BaseEstimator):
    """Conditional extremes of all remaining components given component k.

    Each non-conditioning component is fitted marginally against component k
    exactly as in the bivariate model; residual vectors are stored jointly
    (one row per exceedance) so simulation preserves the dependence between
    conditioned components.
    """

    def __init__(self, conditioning_index=0, threshold=None):
        self.conditioning_index = conditioning_index
        self.threshold = threshold

    def fit(self, X):
        X = check_array_2d(X, "X")
        d = X.shape[1]
        if d < 2:
            raise ValueError("need at least 2 components")
        k = int(self.conditioning_index)
        if not 0 <= k < d:
            raise ValueError(f"conditioning_index {k} out of range for d={d}")
        u = check_finite_scalar(self.threshold, "threshold")

        xk = X[:, k]
        others = [j for j in range(d) if j != k]
        fits = []
        for j in others:
            try:
                fits.append(_fit_ht_core(xk, X[:, j], u))
            except (ValueError, FitConvergenceError) as err:
                raise type(err)(f"component {j}: {err}") from err
        self.d_ = d
        self.k_ = k
        self.component_indices_ = others
        self.alpha_ = np.array([f.alpha for f in fits])
        self.beta_ = np.array([f.beta for f in fits])
        self.mu_ = np.array([f.mu for f in fits])
        self.sigma_ = np.array([f.sigma for f in fits])
        self.residual_vectors_ = np.column_stack([f.residuals for f in fits])
        self.x_exc_ = fits[0].x_exc
        self.fits_ = fits
        return self

    def _check_fitted(self):
        if not hasattr(self, "fits_"):
            raise NotFittedError("model is not fitted; call fit() first")

    def simulate(self, marginals, n: int, x_min: float, seed=None) -> np.ndarray:
        """Simulate n joint d-vectors in physical units.

        ``marginals`` is one fitted marginal per column of the training
        matrix, in column order; ``x_min`` is the physical conditioning floor
        for component k.
        """
        self._check_fitted()
        n = int(n)
        if n <= 0:
            raise ValueError("n must be positive")
        if len(marginals) != self.d_:
            raise ValueError(f"need {self.d_} marginals, got {len(marginals)}")
        y_min = float(marginals[self.k_].to_gumbel(x_min))
        u = check_finite_scalar(self.threshold, "threshold")
        if y_min < u:
            raise ValueError(
                f"x_min maps to Gumbel {y_min:.4f}, below the fitted threshold {u:.4f}"
            )
        rng = np.random.default_rng(seed)
        xg, yg = _simulate_gumbel(self.alpha_, self.beta_, self.residual_vectors_, n, y_min, rng)
        out = np.empty((n, self.d_))
        out[:, self.k_] = marginals[self.k_].from_gumbel(xg)
        for col, j in enumerate(self.component_indices_):
            out[:, j] = marginals[j].from_gumbel(yg[:, col])
        return out


def _sector_width(lo: float, hi: float) -> float:
    if hi > lo:
        return hi - lo
    return hi + 360.0 - lo


def _sector_contains(theta, lo: float, hi: float):
    width = _sector_width(lo, hi)
    return (theta - lo) % 360.0 < width


def validate_sectors(sectors) -> list[tuple[float, float]]:
    """Check that half-open [lo, hi) degree sectors partition the circle.

    Returns normalized sectors with lo in [0, 360) and hi = lo + width, so a
    wrapping sector such as (300, 60) becomes (300, 420).
    """
    if sectors is None or len(sectors) == 0:
        raise ValueError("sectors must be a non-empty list of (lo, hi) degree intervals")
    if len(sectors) == 1:
        lo, hi = (float(v) for v in sectors[0])
        if hi == lo or (hi - lo) % 360.0 != 0.0:
            raise ValueError("a single sector must cover the full circle, e.g. (0, 360)")
        lo %= 360.0
        return [(lo, lo + 360.0)]
    norm = []
    for lo, hi in sectors:
        lo, hi = float(lo) % 360.0, float(hi) % 360.0
        width = _sector_width(lo, hi)
        if not 0.0 < width < 360.0:
            raise ValueError(f"invalid sector [{lo:g}, {hi:g})")
        norm.append((lo, lo + width))
    ordered = sorted(norm, key=lambda s: s[0])
    total = sum(hi - lo for lo, hi in ordered)
    if abs(total - 360.0) > 1e-9:
        raise ValueError(f"sector widths sum to {total:g} degrees, expected 360")
    for i, (lo, hi) in enumerate(ordered):
        nxt = ordered[(i + 1) % len(ordered)][0]
        gap = (nxt - hi) % 360.0
        if min(gap, 360.0 - gap) > 1e-9:
            raise ValueError(
                f"sectors do not partition [0, 360): [{lo:g}, {hi % 360.0:g}) is not "
                f"followed by a sector starting at {hi % 360.0:g}"
            )
    return ordered


class DirectionalConditionalExtremes(BaseEstimator):
    """Per-sector conditional extremes with direction as covariate.

    The model (T | H = h, theta) = alpha_theta * h + h^beta_theta *
    (mu_theta + sigma_theta * Z) is realized by fitting an independent
    bivariate model inside each directional sector.  Sectors with no
    exceedances are flagged and skipped; sectors with 1-9 exceedances are an
    error.

    Parameters
    ----------
    sectors : sequence of (lo, hi)
        Half-open degree intervals partitioning [0, 360).
    threshold : float
        Conditioning threshold on the Gumbel scale, shared by all sectors.
    """

    def __init__(self, sectors=None, threshold=None):
        self.sectors = sectors
        self.threshold = threshold

    def fit(self, x, y, theta):
        x = check_array_1d(x, "x")
        y = check_array_1d(y, "y")
        theta = check_array_1d(theta, "theta") % 360.0
        check_same_length(x, y, "x", "y")
        check_same_length(x, theta, "x", "theta")
        u = check_finite_scalar(self.threshold, "threshold")
        sectors = validate_sectors(self.sectors)

        fits: list[HtFit | None] = []
        empty, sparse, failed = [], [], []
        for lo, hi in sectors:
            mask = _sector_contains(theta, lo, hi)
            n_exc = int(np.count_nonzero(mask & (x > u)))
            if n_exc == 0:
                fits.append(None)
                empty.append((lo, hi))
                continue
            if n_exc < MIN_EXCEEDANCES:
                sparse.append(f"[{lo:g}, {hi:g}) has only {n_exc} exceedances")
                fits.append(None)
                continue
            try:
                fits.append(_fit_ht_core(x[mask], y[mask], u))
            except FitConvergenceError as err:
                failed.append(f"[{lo:g}, {hi:g}): {err}")
                fits.append(None)
        if sparse:
            raise ValueError(
                f"sectors below the minimum of {MIN_EXCEEDANCES} exceedances: "
                + "; ".join(sparse)
            )
        if failed:
            raise FitConvergenceError("sector fits failed: " + "; ".join(failed))
        self.sectors_ = sectors
        self.sector_fits_ = fits
        self.no_data_sectors_ = empty
        return self

    def _check_fitted(self):
        if not hasattr(self, "sector_fits_"):
            raise NotFittedError("model is not fitted; call fit() first")

    def fit_for(self, angle: float) -> HtFit | None:
        """The fitted sector model containing the given direction, if any."""
        self._check_fitted()
        angle = float(angle) % 360.0
        for (lo, hi), fit in zip(self.sectors_, self.sector_fits_):
            if _sector_contains(angle, lo, hi):
                return fit
        raise ValueError(f"no sector contains angle {angle}")


def conditional_median(fit: HtFit, marginal_x, marginal_y, x_physical: float) -> float:
    """Plug-in conditional median of Y at a fixed conditioning value.

    Evaluates alpha*x + x^beta * median(z) on the Gumbel scale and maps back.
    """
    xg = float(marginal_x.to_gumbel(x_physical))
    yg = fit.alpha * xg + xg ** fit.beta * float(np.median(fit.residuals))
    return float(marginal_y.from_gumbel(yg))


def most_probable_value(values) -> float:
    """Histogram mode with Freedman-Diaconis bin width."""
    v = check_array_1d(values, "values")
    q75, q25 = np.percentile(v, [75, 25])
    width = 2.0 * (q75 - q25) * v.size ** (-1.0 / 3.0)
    if width <= 0:
        return float(np.median(v))
    counts, edges = np.histogram(v, bins=np.arange(v.min(), v.max() + width, width))
    i = int(np.argmax(counts))
    return float(0.5 * (edges[i] + edges[i + 1]))


def pinball_loss(intercept: float, slope: float, x, y, tau: float) -> float:
    """Total quantile-regression loss of a candidate line."""
    r = np.asarray(y, float) - intercept - slope * np.asarray(x, float)
    return float(np.sum(np.where(r >= 0, tau * r, (tau - 1.0) * r)))


class QuantileRegression(BaseEstimator):
    """Linear quantile regression by exact linear programming.

    Minimizes the pinball loss sum rho_tau(y - a - b*x) over (a, b); the LP
    formulation splits each residual into positive and negative parts, so the
    optimum is exact up to solver tolerance.
    """

    def __init__(self, tau=0.5):
        self.tau = tau

    def fit(self, x, y):
        tau = check_probability(self.tau, "tau")
        x = check_array_1d(x, "x")
        y = check_array_1d(y, "y")
        check_same_length(x, y, "x", "y")
        n = x.size
        if n < 3:
            raise ValueError("need at least 3 observations")
        if np.ptp(x) == 0.0:
            raise ValueError("x is degenerate (zero variance)")

        # variables: [a, b, p_1..p_n, m_1..m_n], residual r_i = p_i - m_i
        c = np.concatenate([[0.0, 0.0], np.full(n, tau), np.full(n, 1.0 - tau)])
        eye = sparse.identity(n, format="csc")
        A = sparse.hstack(
            [np.ones((n, 1)), x[:, None], eye, -eye], format="csc"
        )
        bounds = [(None, None), (None, None)] + [(0, None)] * (2 * n)
        res = linprog(c, A_eq=A, b_eq=y, bounds=bounds, method="highs")
        if not res.success:
            raise FitConvergenceError(f"quantile regression LP failed: {res.message}")
        self.intercept_ = float(res.x[0])
        self.slope_ = float(res.x[1])
        self.loss_ = float(res.fun)
        return self

    def predict(self, x):
        if not hasattr(self, "slope_"):
            raise NotFittedError("model is not fitted; call fit() first")
        return self.intercept_ + self.slope_ * np.asarray(x, dtype=float)
