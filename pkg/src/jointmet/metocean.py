"""Concrete joint environmental models and response/reliability utilities.

Includes the Weibull/conditional-lognormal joint Hs-Tp model, the load vs
resistance reliability convolution, a configurable power-law response surface
with back-calculation, a single-degree-of-freedom response proxy, and the
naive independent-combination baseline it improves upon.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.stats import norm, weibull_min

from .form import ConditionalStage, DistributionStage, RosenblattChain
from .validation import check_finite_scalar, check_positive


@dataclass(frozen=True)
class HaverNutzenModel:
    """Joint Hs/Tp model: Weibull Hs, lognormal Tp conditional on Hs.

    The conditional log-mean and log-variance follow the standard published
    shapes mu(h) = a1 + a2 * h^a3 and var(h) = b1 + b2 * exp(-b3 * h); the
    coefficients are entirely configuration, no site is implied.
    """

    weibull_alpha: float
    weibull_beta: float
    mu_coeffs: tuple[float, float, float]
    var_coeffs: tuple[float, float, float]

    def __post_init__(self):
        check_positive(self.weibull_alpha, "weibull_alpha")
        check_positive(self.weibull_beta, "weibull_beta")
        a = tuple(float(v) for v in self.mu_coeffs)
        b = tuple(float(v) for v in self.var_coeffs)
        if len(a) != 3 or len(b) != 3:
            raise ValueError("mu_coeffs and var_coeffs must each hold 3 values")
        object.__setattr__(self, "mu_coeffs", a)
        object.__setattr__(self, "var_coeffs", b)
        b1, b2, b3 = b
        # conditional variance must stay positive over h >= 0; its extremes
        # sit at h = 0 and the h -> inf limit
        if b1 + b2 <= 0.0:
            raise ValueError("conditional log-variance non-positive at h=0")
        if b3 > 0.0 and b1 <= 0.0:
            raise ValueError("conditional log-variance limit b1 must be positive for b3 > 0")
        if b3 < 0.0 and b2 < 0.0:
            raise ValueError("conditional log-variance turns negative for large h (b2 < 0, b3 < 0)")

    def log_mean(self, h):
        a1, a2, a3 = self.mu_coeffs
        return a1 + a2 * np.asarray(h, dtype=float) ** a3

    def log_std(self, h):
        b1, b2, b3 = self.var_coeffs
        return np.sqrt(b1 + b2 * np.exp(-b3 * np.asarray(h, dtype=float)))

    def rosenblatt_chain(self) -> RosenblattChain:
        """Two-stage chain: Weibull Hs, then lognormal Tp | Hs."""
        hs_stage = DistributionStage(weibull_min(self.weibull_beta, scale=self.weibull_alpha))

        def tp_cdf(t, given):
            h = given[0]
            return norm.cdf((np.log(t) - self.log_mean(h)) / self.log_std(h))

        def tp_ppf(p, given):
            h = given[0]
            return np.exp(self.log_mean(h) + self.log_std(h) * norm.ppf(p))

        return RosenblattChain([hs_stage, ConditionalStage(tp_cdf, tp_ppf)])

    def hs_quantile(self, p):
        return float(weibull_min(self.weibull_beta, scale=self.weibull_alpha).ppf(p))

    def to_dict(self) -> dict:
        a1, a2, a3 = self.mu_coeffs
        b1, b2, b3 = self.var_coeffs
        return {
            "weibull": {"alpha": self.weibull_alpha, "beta": self.weibull_beta},
            "mu": {"a1": a1, "a2": a2, "a3": a3},
            "var": {"b1": b1, "b2": b2, "b3": b3},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HaverNutzenModel":
        return cls(
            weibull_alpha=float(d["weibull"]["alpha"]),
            weibull_beta=float(d["weibull"]["beta"]),
            mu_coeffs=(float(d["mu"]["a1"]), float(d["mu"]["a2"]), float(d["mu"]["a3"])),
            var_coeffs=(float(d["var"]["b1"]), float(d["var"]["b2"]), float(d["var"]["b3"])),
        )


@dataclass(frozen=True)
class ReliabilityInputs:
    """Load exceedance curve and resistance density for the failure integral.

    ``resistance_point`` selects the degenerate-resistance analytic branch
    (resistance concentrated at one value) instead of quadrature.
    """

    load_survival: object  # callable x -> P(E > x)
    resistance_density: object  # callable x -> f_R(x)
    domain: tuple[float, float] = (0.0, 1.0)
    resistance_point: float | None = None

    def __post_init__(self):
        lo, hi = (float(v) for v in self.domain)
        if not lo < hi:
            raise ValueError(f"domain must satisfy lo < hi, got ({lo}, {hi})")
        object.__setattr__(self, "domain", (lo, hi))


def structural_reliability(inputs: ReliabilityInputs) -> float:
    """Failure probability p_F = integral of F_bar_E(x) * f_R(x) dx.

    Adaptive quadrature over the resistance domain; the domain must carry
    essentially all of the resistance probability mass.
    """
    if inputs.resistance_point is not None:
        return float(inputs.load_survival(float(inputs.resistance_point)))
    lo, hi = inputs.domain
    mass, mass_err = quad(inputs.resistance_density, lo, hi, epsabs=1e-12, epsrel=1e-10, limit=500)
    if abs(mass - 1.0) > 1e-6:
        raise ValueError(
            f"resistance density integrates to {mass:.8f} over the domain; "
            "choose a domain covering the full resistance mass"
        )
    result = quad(
        lambda x: float(inputs.load_survival(x)) * float(inputs.resistance_density(x)),
        lo, hi, epsabs=1e-12, epsrel=1e-10, limit=500, full_output=1,
    )
    p, abserr = result[0], result[1]
    if len(result) > 3:
        raise ArithmeticError(f"reliability quadrature did not converge: {result[3]}")
    if abserr > 1e-9 + 1e-6 * abs(p):
        raise ArithmeticError(f"reliability quadrature error estimate {abserr:.2e} too large")
    return float(min(max(p, 0.0), 1.0))


@dataclass(frozen=True)
class PowerTerm:
    """One separable term c * Hs^p * W^q * C^r of a response surface."""

    coefficient: float
    hs_exponent: float = 0.0
    wind_exponent: float = 0.0
    current_exponent: float = 0.0

    def __post_init__(self):
        check_finite_scalar(self.coefficient, "coefficient")
        for name in ("hs_exponent", "wind_exponent", "current_exponent"):
            v = check_finite_scalar(getattr(self, name), name)
            if v < 0:
                raise ValueError(f"{name} must be non-negative, got {v}")


@dataclass(frozen=True)
class ResponseSurface:
    """Load proxy as a sum of power-law terms in (Hs, wind speed, current speed)."""

    terms: tuple[PowerTerm, ...]

    def __post_init__(self):
        terms = tuple(self.terms)
        if not terms:
            raise ValueError("response surface needs at least one term")
        object.__setattr__(self, "terms", terms)

    def evaluate(self, hs, wind, current) -> float:
        for name, v in (("hs", hs), ("wind", wind), ("current", current)):
            v = check_finite_scalar(v, name)
            if v < 0:
                raise ValueError(f"{name} must be non-negative, got {v}")
        total = 0.0
        for t in self.terms:
            total += (
                t.coefficient
                * float(hs) ** t.hs_exponent
                * float(wind) ** t.wind_exponent
                * float(current) ** t.current_exponent
            )
        return total

    def to_dict(self) -> dict:
        return {
            "terms": [
                {"c": t.coefficient, "hs": t.hs_exponent, "wind": t.wind_exponent,
                 "current": t.current_exponent}
                for t in self.terms
            ]
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ResponseSurface":
        return cls(tuple(
            PowerTerm(float(t["c"]), float(t.get("hs", 0.0)), float(t.get("wind", 0.0)),
                      float(t.get("current", 0.0)))
            for t in d["terms"]
        ))


_VARIABLES = ("hs", "wind", "current")


def back_calculate(surface: ResponseSurface, target_load: float, dominant: str,
                   associates: dict, bracket: tuple[float, float],
                   rel_tol: float = 1e-8, max_iter: int = 200) -> dict:
    """Invert the response surface for the dominant environmental variable.

    Bisection on the dominant variable over ``bracket``; the remaining
    variables are evaluated at each trial point from ``associates`` (constants
    or callables of the dominant value, e.g. conditional medians from a
    fitted dependence model).  Returns the full environment vector.
    """
    if dominant not in _VARIABLES:
        raise ValueError(f"dominant must be one of {_VARIABLES}")
    target_load = check_finite_scalar(target_load, "target_load")
    if target_load == 0.0:
        raise ValueError("target_load must be non-zero for a relative tolerance")

    def environment(v):
        env = {name: 0.0 for name in _VARIABLES}
        env[dominant] = v
        for name, a in associates.items():
            if name == dominant:
                continue
            env[name] = float(a(v)) if callable(a) else float(a)
        return env

    def response(v):
        e = environment(v)
        return surface.evaluate(e["hs"], e["wind"], e["current"])

    lo, hi = (float(v) for v in bracket)
    f_lo, f_hi = response(lo), response(hi)
    increasing = f_hi >= f_lo
    f_min, f_max = min(f_lo, f_hi), max(f_lo, f_hi)
    if not f_min <= target_load <= f_max:
        raise ValueError(
            f"target load {target_load:g} outside achievable range "
            f"[{f_min:g}, {f_max:g}] on the bracket"
        )
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        f_mid = response(mid)
        if abs(f_mid - target_load) <= rel_tol * abs(target_load):
            return environment(mid)
        if (f_mid < target_load) == increasing:
            lo = mid
        else:
            hi = mid
    raise ArithmeticError("back-calculation bisection did not reach the requested tolerance")


def sdof_response(hs, tp, natural_period: float = 17.0, damping_ratio: float = 0.1):
    """Response amplitude proxy hs * |H(tp)| of a single-DOF oscillator.

    |H(T)| = 1 / sqrt((1 - r^2)^2 + (2*zeta*r)^2) with r = natural_period / T;
    resonance (tp = natural_period) amplifies by 1/(2*zeta) and long periods
    recover the static limit |H| -> 1.
    """
    check_positive(natural_period, "natural_period")
    zeta = check_finite_scalar(damping_ratio, "damping_ratio")
    if not 0.0 < zeta < 1.0:
        raise ValueError(f"damping_ratio must lie in (0, 1), got {zeta}")
    tp_arr = np.asarray(tp, dtype=float)
    if np.any(tp_arr <= 0.0):
        raise ValueError("tp must be positive")
    r = natural_period / tp_arr
    amp = 1.0 / np.sqrt((1.0 - r ** 2) ** 2 + (2.0 * zeta * r) ** 2)
    return (np.asarray(hs, dtype=float) * amp)[()]


@dataclass(frozen=True)
class DesignFactors:
    """Code-style environmental load factor."""

    gamma_e: float = 1.35

    def __post_init__(self):
        g = check_finite_scalar(self.gamma_e, "gamma_e")
        if not 1.0 <= g <= 2.0:
            raise ValueError(f"gamma_e must lie in [1, 2], got {g}")


def apply_load_factor(load: float, factors: DesignFactors) -> float:
    """Factored design load gamma_E * load."""
    return factors.gamma_e * load


def load_metocean_config(doc: dict):
    """Parse a model-coefficient configuration document.

    Recognized key groups: ``weibull.alpha/beta`` and ``mu.a1..a3`` /
    ``var.b1..b3`` for the joint Hs/Tp model, ``response.terms[]`` for the
    response surface, and ``factors.gamma_e``.  Absent groups yield None.

    Returns
    -------
    (HaverNutzenModel | None, ResponseSurface | None, DesignFactors | None)
    """
    model = None
    if "weibull" in doc:
        model = HaverNutzenModel.from_dict(doc)
    surface = None
    if "response" in doc:
        surface = ResponseSurface.from_dict(doc["response"])
    factors = None
    if "factors" in doc:
        factors = DesignFactors(gamma_e=float(doc["factors"]["gamma_e"]))
    return model, surface, factors


def naive_combination(marginals, return_periods, dependence=None,
                      n_sim: int = 100_000, seed=None) -> dict:
    """Componentwise return-value design vector, with its true joint rarity.

    Combining per-variable return values ignores dependence; when a fitted
    multivariate conditional-extremes model is supplied, the report adds the
    simulated annual probability that all components jointly exceed their
    listed return values, which is 1/T only under perfect dependence and far
    smaller otherwise.
    """
    if len(marginals) != len(return_periods):
        raise ValueError("one return period per marginal is required")
    design = [float(m.return_value(T)) for m, T in zip(marginals, return_periods)]
    report = {
        "labels": [m.label for m in marginals],
        "return_periods_years": [float(T) for T in return_periods],
        "design_point": design,
        "joint_annual_probability": None,
    }
    if dependence is None:
        return report
    if seed is None:
        raise ValueError("seed is required for the joint-exceedance simulation")
    k = dependence.k_
    sims = dependence.simulate(marginals, int(n_sim), design[k], seed=seed)
    exceed = np.ones(sims.shape[0], dtype=bool)
    for j in range(sims.shape[1]):
        if j != k:
            exceed &= sims[:, j] > design[j]
    q = float(np.mean(exceed))
    T_k = float(return_periods[k])
    report.update({
        "conditioning_index": int(k),
        "n_sim": int(n_sim),
        "conditional_fraction": q,
        "joint_annual_probability": q / T_k,
        "joint_probability_std_error": float(np.sqrt(q * (1.0 - q) / n_sim)) / T_k,
    })
    return report
