"""Semi-parametric marginal distributions for metocean variables.

The marginal model is an empirical body below a high threshold stitched to a
generalized Pareto tail above it.  Fitted marginals transform data to and from
the standard Gumbel scale, which is the working scale for the conditional
dependence models in :mod:`jointmet.condex`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .exceptions import FitConvergenceError
from .validation import (
    check_array_1d,
    check_finite_scalar,
    check_positive,
    check_probability,
    check_same_length,
    check_strictly_increasing,
)

SECONDS_PER_YEAR = 365.25 * 24.0 * 3600.0

# Treat the shape parameter as zero below this magnitude and use the
# exponential-limit formulas instead; avoids catastrophic cancellation.
XI_ZERO_TOL = 1e-8

XI_BOUNDS = (-5.0, 1.0)


@dataclass(frozen=True)
class UnivariateSample:
    """A univariate series in physical units, optionally timestamped.

    Timestamps are seconds (any epoch) and must be strictly increasing when
    present.
    """

    values: np.ndarray
    timestamps: np.ndarray | None = None
    label: str = ""

    def __post_init__(self):
        values = check_array_1d(self.values, "values")
        object.__setattr__(self, "values", values)
        if self.timestamps is not None:
            t = check_array_1d(self.timestamps, "timestamps")
            check_same_length(values, t, "values", "timestamps")
            check_strictly_increasing(t, "timestamps")
            object.__setattr__(self, "timestamps", t)

    @property
    def n(self) -> int:
        return self.values.size

    def span_years(self) -> float:
        if self.timestamps is None:
            raise ValueError("sample has no timestamps")
        return (self.timestamps[-1] - self.timestamps[0]) / SECONDS_PER_YEAR


@dataclass(frozen=True)
class GpdParams:
    """Generalized Pareto tail parameters above a fixed threshold."""

    sigma: float
    xi: float
    threshold: float
    nll: float = field(default=float("nan"), compare=False)

    def __post_init__(self):
        check_positive(self.sigma, "sigma")
        check_finite_scalar(self.xi, "xi")
        check_finite_scalar(self.threshold, "threshold")
        if not XI_BOUNDS[0] <= self.xi <= XI_BOUNDS[1]:
            raise ValueError(f"xi={self.xi} outside numerical bounds {XI_BOUNDS}")

    @property
    def upper_endpoint(self) -> float:
        """Finite upper endpoint for xi < 0, +inf otherwise."""
        if self.xi < -XI_ZERO_TOL:
            return self.threshold - self.sigma / self.xi
        return np.inf


def _gpd_excess_sf(z, sigma: float, xi: float):
    """Survival function of GPD excesses, P(Z > z) for z >= 0."""
    z = np.asarray(z, dtype=float)
    if abs(xi) < XI_ZERO_TOL:
        return np.exp(-z / sigma)
    t = 1.0 + xi * z / sigma
    out = np.where(t > 0.0, np.power(np.maximum(t, 1e-300), -1.0 / xi), 0.0)
    return out


def _gpd_excess_quantile(sf_ratio, sigma: float, xi: float):
    """Excess z with P(Z > z) = sf_ratio, inverse of :func:`_gpd_excess_sf`."""
    s = np.asarray(sf_ratio, dtype=float)
    if abs(xi) < XI_ZERO_TOL:
        return -sigma * np.log(s)
    return sigma / xi * (np.power(s, -xi) - 1.0)


def gpd_nll(sigma: float, xi: float, excesses: np.ndarray) -> float:
    """Negative log-likelihood of GPD excesses (all strictly positive)."""
    if sigma <= 0 or not XI_BOUNDS[0] <= xi <= XI_BOUNDS[1]:
        return np.inf
    n = excesses.size
    if abs(xi) < XI_ZERO_TOL:
        return n * np.log(sigma) + float(np.sum(excesses)) / sigma
    t = 1.0 + xi * excesses / sigma
    if np.any(t <= 0.0):
        return np.inf
    return n * np.log(sigma) + (1.0 + 1.0 / xi) * float(np.sum(np.log(t)))


def fit_gpd(exceedances, threshold: float, fix_xi: float | None = None) -> GpdParams:
    """Fit a generalized Pareto distribution to threshold exceedances by MLE.

    Parameters
    ----------
    exceedances : array-like
        Observations strictly above ``threshold`` (not the excesses).
    threshold : float
        Fixed threshold in the same units.
    fix_xi : float, optional
        Constrain the shape to this value; ``0`` selects the exponential
        limit whose scale MLE is the mean excess.

    Returns
    -------
    GpdParams
        Fitted scale/shape with the achieved negative log-likelihood.
    """
    exc = check_array_1d(exceedances, "exceedances")
    threshold = check_finite_scalar(threshold, "threshold")
    z = exc - threshold
    if np.any(z <= 0.0):
        raise ValueError("all exceedances must lie strictly above the threshold")

    if fix_xi is not None:
        fix_xi = check_finite_scalar(fix_xi, "fix_xi")
        if abs(fix_xi) < XI_ZERO_TOL:
            sigma = float(np.mean(z))
            return GpdParams(sigma, 0.0, threshold, nll=gpd_nll(sigma, 0.0, z))
        res = minimize(
            lambda p: gpd_nll(np.exp(p[0]), fix_xi, z),
            x0=[np.log(max(np.mean(z), 1e-12))],
            method="Nelder-Mead",
            options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 500},
        )
        sigma = float(np.exp(res.x[0]))
        return GpdParams(sigma, fix_xi, threshold, nll=float(res.fun))

    if z.size < 10:
        raise ValueError(f"need at least 10 exceedances, got {z.size}")

    z_max = float(np.max(z))
    best = None
    for xi0 in (-0.3, 0.0, 0.3):
        sigma0 = float(np.mean(z))
        # inflate the initial scale until the start point is feasible
        # (negative-shape support requires sigma > |xi| * max excess)
        for _ in range(60):
            if np.isfinite(gpd_nll(sigma0, xi0, z)):
                break
            sigma0 *= 2.0
        else:
            continue
        res = minimize(
            lambda p: gpd_nll(np.exp(p[0]), p[1], z),
            x0=[np.log(sigma0), xi0],
            method="Nelder-Mead",
            options={"xatol": 1e-9, "fatol": 1e-10, "maxiter": 2000},
        )
        if np.isfinite(res.fun) and (best is None or res.fun < best[0]):
            best = (float(res.fun), float(np.exp(res.x[0])), float(res.x[1]), res.success)
    if best is None or not np.isfinite(best[0]):
        raise FitConvergenceError("GPD likelihood optimization failed from all restarts")
    nll, sigma, xi, success = best
    if not success:
        raise FitConvergenceError("GPD optimizer did not converge within iteration budget")
    xi = float(np.clip(xi, *XI_BOUNDS))
    return GpdParams(sigma, xi, threshold, nll=nll)


def sample_gpd(n: int, sigma: float, xi: float, threshold: float = 0.0, seed=None) -> np.ndarray:
    """Draw GPD exceedances through the quantile function (inversion method)."""
    rng = np.random.default_rng(seed)
    p = rng.uniform(size=n)
    return threshold + _gpd_excess_quantile(1.0 - p, sigma, xi)


class SemiParametricMarginal(BaseEstimator):
    """Empirical-body / GPD-tail marginal with Gumbel-scale transforms.

    Below the threshold the CDF is the interpolated empirical distribution
    with plotting positions ``i/(n+1)``, anchored to ``1 - tail_fraction`` at
    the threshold so the model is continuous there.  Above the threshold the
    tail is generalized Pareto, fitted by maximum likelihood.

    Parameters
    ----------
    threshold : float, optional
        Explicit threshold in physical units.  When omitted the
        ``threshold_quantile`` sample quantile is used.
    threshold_quantile : float
        Sample quantile defining the threshold when ``threshold`` is None.
    events_per_year : float, optional
        Rate of observations per year, used for return values.  Inferred
        from timestamps when available, otherwise defaults to 1.
    label : str
        Variable name carried through serialized records.
    """

    def __init__(self, threshold=None, threshold_quantile=0.95,
                 events_per_year=None, label=""):
        self.threshold = threshold
        self.threshold_quantile = threshold_quantile
        self.events_per_year = events_per_year
        self.label = label

    def fit(self, values, timestamps=None):
        v = check_array_1d(values, "values")
        if self.threshold is not None:
            u = check_finite_scalar(self.threshold, "threshold")
        else:
            q = check_probability(self.threshold_quantile, "threshold_quantile")
            u = float(np.quantile(v, q))
        exceedances = v[v > u]
        self.gpd_ = fit_gpd(exceedances, u)
        n = v.size
        self.n_ = n
        self.tail_fraction_ = exceedances.size / n
        if self.events_per_year is not None:
            self.events_per_year_ = check_positive(self.events_per_year, "events_per_year")
        elif timestamps is not None:
            t = check_array_1d(timestamps, "timestamps")
            check_same_length(v, t, "values", "timestamps")
            check_strictly_increasing(t)
            self.events_per_year_ = n / ((t[-1] - t[0]) / SECONDS_PER_YEAR)
        else:
            self.events_per_year_ = 1.0
        self.sample_values_ = v.copy()

        # interpolation nodes for the body CDF: plotting positions of the
        # values at or below the threshold plus the continuity anchor at u
        sorted_v = np.sort(v)
        body = sorted_v[sorted_v <= u]
        positions = np.arange(1, body.size + 1) / (n + 1.0)
        if body.size and body[-1] >= u:
            positions[-1] = 1.0 - self.tail_fraction_
            self._body_x, self._body_p = body, positions
        else:
            self._body_x = np.append(body, u)
            self._body_p = np.append(positions, 1.0 - self.tail_fraction_)
        return self

    def _check_fitted(self):
        if not hasattr(self, "gpd_"):
            raise NotFittedError("marginal is not fitted; call fit() first")

    # -- distribution functions -------------------------------------------

    def cdf(self, x):
        """Model CDF: interpolated empirical body, GPD tail."""
        self._check_fitted()
        xa = np.asarray(x, dtype=float)
        if not np.all(np.isfinite(xa)):
            raise ValueError("x contains non-finite values")
        return self._eval_cdf(xa)[()]

    def _eval_cdf(self, xa):
        u = self.gpd_.threshold
        body = np.interp(xa, self._body_x, self._body_p)
        tail_sf = self.tail_fraction_ * _gpd_excess_sf(
            np.maximum(xa - u, 0.0), self.gpd_.sigma, self.gpd_.xi
        )
        return np.where(xa <= u, body, 1.0 - tail_sf)

    def _eval_sf(self, xa):
        """Survival function, carried explicitly for tail precision."""
        u = self.gpd_.threshold
        body = 1.0 - np.interp(xa, self._body_x, self._body_p)
        tail = self.tail_fraction_ * _gpd_excess_sf(
            np.maximum(xa - u, 0.0), self.gpd_.sigma, self.gpd_.xi
        )
        return np.where(xa <= u, body, tail)

    def ppf(self, p):
        """Quantile function; inverts the body by interpolation, the tail analytically."""
        self._check_fitted()
        pa = np.asarray(p, dtype=float)
        if np.any(~np.isfinite(pa)) or np.any(pa <= 0.0) or np.any(pa >= 1.0):
            raise ValueError("probabilities must lie strictly inside (0, 1)")
        return self._ppf_from_sf(1.0 - pa)[()]

    def _ppf_from_sf(self, sf):
        body_x = np.interp(1.0 - sf, self._body_p, self._body_x)
        ratio = np.minimum(sf / self.tail_fraction_, 1.0)
        tail_x = self.gpd_.threshold + _gpd_excess_quantile(
            np.maximum(ratio, 1e-300), self.gpd_.sigma, self.gpd_.xi
        )
        return np.where(sf >= self.tail_fraction_, body_x, tail_x)

    # -- Gumbel transforms --------------------------------------------------

    def to_gumbel(self, x):
        """Map physical values to the standard Gumbel scale.

        y = -log(-log(F(x))); saturated probabilities (0 or 1) are rejected.
        """
        self._check_fitted()
        xa = np.asarray(x, dtype=float)
        if not np.all(np.isfinite(xa)):
            raise ValueError("x contains non-finite values")
        sf = self._eval_sf(xa)
        p = self._eval_cdf(xa)
        if np.any(sf <= 0.0) or np.any(p <= 0.0):
            raise ValueError("CDF saturated (0 or 1); value outside transformable range")
        # -log(-log(1 - sf)) evaluated through log1p so deep-tail values
        # keep full relative precision in survival space
        y = -np.log(-np.log1p(-sf))
        return y[()]

    def from_gumbel(self, y):
        """Inverse of :meth:`to_gumbel`."""
        self._check_fitted()
        ya = np.asarray(y, dtype=float)
        if not np.all(np.isfinite(ya)):
            raise ValueError("y contains non-finite values")
        sf = -np.expm1(-np.exp(-ya))
        return self._ppf_from_sf(sf)[()]

    # sklearn-style aliases so the marginal composes as a transformer
    def transform(self, x):
        return self.to_gumbel(x)

    def inverse_transform(self, y):
        return self.from_gumbel(y)

    # -- return values -------------------------------------------------------

    def return_value(self, return_period_years):
        """T-year return value from the GPD tail.

        x_T = u + (sigma/xi) * ((lambda * T)^xi - 1) with
        lambda = events_per_year * tail_fraction, and the exponential limit
        u + sigma * log(lambda * T) when xi is numerically zero.
        """
        self._check_fitted()
        T = check_positive(return_period_years, "return_period_years")
        lam = self.events_per_year_ * self.tail_fraction_
        if lam * T <= 1.0:
            raise ValueError(
                f"return period {T} yr too short for the tail model "
                f"(events_per_year * tail_fraction * T = {lam * T:.3g} <= 1)"
            )
        sigma, xi, u = self.gpd_.sigma, self.gpd_.xi, self.gpd_.threshold
        if abs(xi) < XI_ZERO_TOL:
            return u + sigma * np.log(lam * T)
        return u + sigma / xi * ((lam * T) ** xi - 1.0)

    # -- serialization --------------------------------------------------------

    def to_dict(self) -> dict:
        self._check_fitted()
        return {
            "label": self.label,
            "threshold": float(self.gpd_.threshold),
            "sigma": float(self.gpd_.sigma),
            "xi": float(self.gpd_.xi),
            "tail_fraction": float(self.tail_fraction_),
            "events_per_year": float(self.events_per_year_),
            "n": int(self.n_),
        }


def decluster(sample: UnivariateSample, threshold: float, gap_hours: float = 24.0) -> UnivariateSample:
    """Extract storm-peak events by the runs method.

    Exceedances of ``threshold`` separated by more than ``gap_hours`` below
    the threshold are treated as distinct events; the peak value of each
    event is returned with its timestamp.
    """
    if sample.timestamps is None:
        raise ValueError("declustering requires timestamps")
    threshold = check_finite_scalar(threshold, "threshold")
    gap_seconds = check_positive(gap_hours, "gap_hours") * 3600.0

    idx = np.flatnonzero(sample.values > threshold)
    if idx.size == 0:
        return UnivariateSample(np.empty(0), np.empty(0), sample.label)
    t_exc = sample.timestamps[idx]
    # a new cluster starts when consecutive exceedances are separated by
    # more than the gap (the series sat below threshold in between)
    breaks = np.flatnonzero(np.diff(t_exc) > gap_seconds) + 1
    peaks, peak_times = [], []
    for cluster in np.split(idx, breaks):
        j = cluster[np.argmax(sample.values[cluster])]
        peaks.append(sample.values[j])
        peak_times.append(sample.timestamps[j])
    return UnivariateSample(np.array(peaks), np.array(peak_times), sample.label)
