"""First-order reliability machinery and inverse-FORM environmental contours.

A Rosenblatt chain maps dependent physical variables to independent standard
normals one conditional stage at a time; the FORM search finds the most
probable failure point (MPP) in that standard space, and the inverse problem
maps a fixed-radius sphere back to physical space as an environmental contour.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, minimize, minimize_scalar
from scipy.stats import norm

from .exceptions import FitConvergenceError
from .validation import check_finite_scalar, check_positive


class DistributionStage:
    """Chain stage for a variable independent of the earlier ones.

    Wraps anything exposing ``cdf`` and ``ppf`` (a frozen scipy distribution,
    or a fitted :class:`~jointmet.marginals.SemiParametricMarginal`).
    """

    def __init__(self, dist):
        self.dist = dist

    def cdf(self, x, given=()):
        return float(self.dist.cdf(x))

    def ppf(self, p, given=()):
        return float(self.dist.ppf(p))


class ConditionalStage:
    """Chain stage defined by conditional CDF / inverse-CDF callables.

    Both callables take (value, given) where ``given`` is the tuple of
    physical values of the earlier stages.
    """

    def __init__(self, cdf_fn, ppf_fn):
        self._cdf = cdf_fn
        self._ppf = ppf_fn

    def cdf(self, x, given=()):
        return float(self._cdf(x, given))

    def ppf(self, p, given=()):
        return float(self._ppf(p, given))


class RosenblattChain:
    """Ordered conditional stages realizing the Rosenblatt transform.

    Stage j exposes the distribution of X_j | X_1..X_{j-1}; the forward map
    sends physical x to independent standard normals via u_j =
    Phi^{-1}(F_j(x_j | x_1..x_{j-1})) and the inverse unwinds it stage by
    stage.
    """

    def __init__(self, stages):
        if not stages:
            raise ValueError("chain needs at least one stage")
        self.stages = list(stages)

    @property
    def dimension(self) -> int:
        return len(self.stages)

    def forward(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dimension,):
            raise ValueError(f"expected point of dimension {self.dimension}, got {x.shape}")
        u = np.empty_like(x)
        for j, stage in enumerate(self.stages):
            p = stage.cdf(x[j], tuple(x[:j]))
            if not 0.0 < p < 1.0:
                raise ValueError(
                    f"stage {j} CDF saturated at {p} for value {x[j]}; "
                    "point outside transformable range"
                )
            u[j] = norm.ppf(p)
        return u

    def inverse(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape != (self.dimension,):
            raise ValueError(f"expected point of dimension {self.dimension}, got {u.shape}")
        if not np.all(np.isfinite(u)):
            raise ValueError("u contains non-finite values")
        x = np.empty_like(u)
        for j, stage in enumerate(self.stages):
            x[j] = stage.ppf(norm.cdf(u[j]), tuple(x[:j]))
        return x


class LimitState:
    """Safety margin function g; failure iff g <= 0.

    With a chain attached the evaluator acts on physical coordinates and is
    pulled back to standard-normal space through the inverse Rosenblatt map;
    without one it is read as g_U directly.
    """

    def __init__(self, fn, dimension: int, chain: RosenblattChain | None = None):
        self.fn = fn
        self.dimension = int(dimension)
        self.chain = chain
        if chain is not None and chain.dimension != self.dimension:
            raise ValueError("chain dimension does not match limit state dimension")

    def g_standard(self, u) -> float:
        if self.chain is None:
            return float(self.fn(np.asarray(u, dtype=float)))
        return float(self.fn(self.chain.inverse(u)))


@dataclass(frozen=True)
class FormResult:
    """Most probable failure point with its reliability index."""

    u_star: np.ndarray
    x_star: np.ndarray
    beta: float
    p_f: float
    iterations: int
    converged: bool

    def to_dict(self) -> dict:
        return {
            "u_star": [float(v) for v in self.u_star],
            "x_star": [float(v) for v in self.x_star],
            "beta": float(self.beta),
            "p_f": float(self.p_f),
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
        }


def failure_probability(beta: float) -> float:
    """p_f = 1 - Phi(beta) for reliability index beta >= 0."""
    beta = check_finite_scalar(beta, "beta")
    if beta < 0:
        raise ValueError(f"beta must be non-negative, got {beta}")
    return float(norm.sf(beta))


def _gradient(g, u, rel_step=1e-6):
    """Central-difference gradient with a step relative to coordinate size."""
    d = u.size
    grad = np.empty(d)
    for i in range(d):
        h = rel_step * max(1.0, abs(u[i]))
        up, um = u.copy(), u.copy()
        up[i] += h
        um[i] -= h
        grad[i] = (g(up) - g(um)) / (2.0 * h)
    return grad


def _polish_along_ray(g, u):
    """Refine the surface crossing along the fixed MPP direction.

    The finite-difference HLRF iterate carries O(eps/h) gradient noise; a
    scalar root solve along u's direction removes it, pinning |g| at the
    returned point to machine precision.
    """
    r = float(np.linalg.norm(u))
    direction = u / r

    def g_ray(t):
        return g(t * direction)

    lo, hi, widen = r, r, 1e-8
    for _ in range(60):
        lo, hi = r * (1.0 - widen), r * (1.0 + widen)
        if g_ray(lo) == 0.0:
            return lo * direction
        if g_ray(lo) * g_ray(hi) < 0.0:
            t_star = brentq(g_ray, lo, hi, xtol=1e-15, rtol=8.9e-16)
            return t_star * direction
        widen *= 4.0
    return u


def form_search(limit_state: LimitState, start=None, g_tol: float = 1e-9,
                angle_tol: float = 1e-6, max_iter: int = 200) -> FormResult:
    """Find the MPP by damped Hasofer-Lind-Rackwitz-Fiessler iteration.

    The objective is normalized by g(0) so tolerances and iterates are
    invariant to rescaling the limit state by a positive constant.  On
    failure to converge the best iterate is returned with ``converged``
    False.
    """
    d = limit_state.dimension
    g0 = limit_state.g_standard(np.zeros(d))
    if not np.isfinite(g0):
        raise ValueError("limit state not evaluable at the origin")
    if g0 <= 0.0:
        raise ValueError("origin lies in the failure domain (g(0) <= 0)")
    scale = abs(g0)

    def g(u):
        return limit_state.g_standard(u) / scale

    def merit(u, c):
        return 0.5 * float(u @ u) + c * abs(g(u))

    u = np.zeros(d) if start is None else np.asarray(start, dtype=float).copy()
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        gu = g(u)
        grad = _gradient(g, u)
        gnorm2 = float(grad @ grad)
        if gnorm2 <= 0.0 or not np.isfinite(gnorm2):
            raise FitConvergenceError("limit-state gradient vanished during MPP search")
        nu = float(np.linalg.norm(u))
        if nu > 0.0:
            cosang = float(-(grad @ u) / (np.sqrt(gnorm2) * nu))
            if abs(gu) < g_tol and cosang > np.cos(angle_tol):
                converged = True
                break
        u_full = ((grad @ u - gu) / gnorm2) * grad
        c = 2.0 * nu / np.sqrt(gnorm2) + 10.0
        m0 = merit(u, c)
        lam = 1.0
        step = u_full - u
        while lam > 1e-6:
            candidate = u + lam * step
            if merit(candidate, c) <= m0 + 1e-14:
                break
            lam *= 0.5
        u = u + lam * step
        if float(np.linalg.norm(lam * step)) < 1e-13 * max(1.0, nu):
            gu = g(u)
            converged = abs(gu) < g_tol
            break

    if converged and np.linalg.norm(u) > 1e-8:
        u = _polish_along_ray(g, u)
    beta = float(np.linalg.norm(u))
    x_star = limit_state.chain.inverse(u) if limit_state.chain is not None else u.copy()
    return FormResult(
        u_star=u, x_star=np.asarray(x_star, dtype=float), beta=beta,
        p_f=failure_probability(beta), iterations=iterations, converged=converged,
    )


@dataclass(frozen=True)
class InverseFormPoint:
    u_star: np.ndarray
    x_star: np.ndarray
    g_value: float


def inverse_form_design_point(limit_state: LimitState, beta: float,
                              n_grid: int = 3600) -> InverseFormPoint:
    """Minimize g_U over the sphere ||u|| = beta.

    In two dimensions the sphere is scanned on a coarse angle grid and the
    best cell refined; ties (radially symmetric g) deterministically keep the
    smallest angle.  Higher dimensions use multi-start simplex minimization
    over directions.
    """
    beta = check_positive(beta, "beta")
    d = limit_state.dimension
    g = limit_state.g_standard

    if d == 2:
        angles = np.linspace(0.0, 2.0 * np.pi, n_grid, endpoint=False)
        vals = np.array([g(beta * np.array([np.cos(a), np.sin(a)])) for a in angles])
        vmin = float(np.min(vals))
        # ties (radially symmetric g differs only by rounding noise across
        # the grid) resolve to the smallest angle
        tie_tol = 1e-9 * max(1.0, abs(vmin))
        i = int(np.argmax(vals <= vmin + tie_tol))
        theta0, v0 = float(angles[i]), float(vals[i])
        step = 2.0 * np.pi / n_grid

        def g_of_angle(a):
            return g(beta * np.array([np.cos(a), np.sin(a)]))

        res = minimize_scalar(
            g_of_angle, bounds=(theta0 - step, theta0 + step), method="bounded",
            options={"xatol": 1e-12},
        )
        theta = float(res.x) if res.fun < v0 - tie_tol else theta0
        u = beta * np.array([np.cos(theta), np.sin(theta)])
    else:
        best_u, best_v = None, np.inf
        starts = [np.eye(d)[i] * s for i in range(d) for s in (1.0, -1.0)]
        for v0 in starts:
            res = minimize(
                lambda v: g(beta * v / np.linalg.norm(v)), v0,
                method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-12},
            )
            if res.fun < best_v - 1e-15:
                best_v = float(res.fun)
                best_u = beta * res.x / np.linalg.norm(res.x)
        if best_u is None:
            raise FitConvergenceError("inverse-FORM direction search failed")
        u = best_u

    x = limit_state.chain.inverse(u) if limit_state.chain is not None else u.copy()
    return InverseFormPoint(u_star=u, x_star=np.asarray(x, dtype=float), g_value=float(g(u)))


@dataclass(frozen=True)
class EnvironmentalContour:
    """Closed constant-exceedance-probability contour in physical space."""

    return_period_years: float
    states_per_year: float
    beta: float
    angles_deg: np.ndarray = field(repr=False)
    u_points: np.ndarray = field(repr=False)
    points: np.ndarray = field(repr=False)

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    def max_preimage_norm_error(self, chain: RosenblattChain) -> float:
        """Max | ||forward(point)|| - beta | over all contour points."""
        errs = [
            abs(float(np.linalg.norm(chain.forward(p))) - self.beta)
            for p in self.points
        ]
        return max(errs)


def environmental_contour(chain: RosenblattChain, return_period_years: float,
                          states_per_year: float, n_points: int = 360) -> EnvironmentalContour:
    """Inverse-FORM contour for a two-stage chain.

    The per-state exceedance probability is p = 1 / (T * N); the contour is
    the image of the radius Phi^{-1}(1 - p) circle under the inverse
    Rosenblatt map, ordered by angle.
    """
    T = check_positive(return_period_years, "return_period_years")
    N = check_positive(states_per_year, "states_per_year")
    n_points = int(n_points)
    if n_points < 8:
        raise ValueError("n_points must be at least 8")
    if chain.dimension != 2:
        raise ValueError("environmental contours require a 2-stage chain")
    if T * N <= 1.0:
        raise ValueError("return_period_years * states_per_year must exceed 1")
    p = 1.0 / (T * N)
    beta = float(norm.isf(p))
    angles = 2.0 * np.pi * np.arange(n_points) / n_points
    u_pts = beta * np.column_stack([np.cos(angles), np.sin(angles)])
    pts = np.array([chain.inverse(u) for u in u_pts])
    contour = EnvironmentalContour(
        return_period_years=T, states_per_year=N, beta=beta,
        angles_deg=np.degrees(angles), u_points=u_pts, points=pts,
    )
    if beta > 0.0:
        err = contour.max_preimage_norm_error(chain)
        if err > 1e-8:
            raise FitConvergenceError(
                f"contour preimage norm error {err:.3e} exceeds 1e-8; "
                "chain stages are not numerically invertible enough"
            )
    return contour


def polygon_contains(polygon: np.ndarray, point) -> bool:
    """Even-odd ray casting test; points on an edge count as inside."""
    poly = np.asarray(polygon, dtype=float)
    px, py = float(point[0]), float(point[1])
    x0, y0 = poly[:, 0], poly[:, 1]
    x1, y1 = np.roll(x0, -1), np.roll(y0, -1)
    inside = False
    for ax, ay, bx, by in zip(x0, y0, x1, y1):
        if (ay > py) != (by > py):
            t = (py - ay) / (by - ay)
            xi = ax + t * (bx - ax)
            if px < xi:
                inside = not inside
            elif px == xi:
                return True
    return inside


def contours_nested(inner: EnvironmentalContour, outer: EnvironmentalContour) -> bool:
    """True when every inner point lies inside the outer polygon."""
    return all(polygon_contains(outer.points, p) for p in inner.points)
