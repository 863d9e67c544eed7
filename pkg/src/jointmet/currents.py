"""Multi-depth current preprocessing and profile conditional extremes.

Implements the measurement-to-model pipeline: rotation of east/north velocity
into principal (major/minor) axes per depth, separation of tidal and residual
components by windowed harmonic least squares, hourly extrema extraction, and
recombination of simulated residual extremes with resampled tidal profiles.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .condex import MultivariateConditionalExtremes
from .marginals import SemiParametricMarginal
from .validation import (
    check_array_1d,
    check_array_2d,
    check_finite_scalar,
    check_positive,
    check_probability,
    check_same_length,
    check_strictly_increasing,
)

HOURS_PER_YEAR = 365.25 * 24.0

# constituent frequencies in cycles/hour (period in hours in comments)
CONSTITUENT_FREQUENCIES = {
    "M2": 1.0 / 12.4206012,   # principal lunar semidiurnal
    "S2": 1.0 / 12.0,         # principal solar semidiurnal
    "K1": 1.0 / 23.9344696,   # lunisolar diurnal
    "O1": 1.0 / 25.8193417,   # principal lunar diurnal
}


@dataclass(frozen=True)
class HarmonicFitConfig:
    """Constituents and windowing for the local harmonic analysis.

    The window must satisfy the Rayleigh criterion: the smallest frequency
    gap between constituents times the window length must reach one full
    cycle, otherwise the pair cannot be separated by least squares.
    """

    frequencies: dict = field(default_factory=lambda: dict(CONSTITUENT_FREQUENCIES))
    window_hours: float = 360.0
    step_hours: float = 24.0

    def __post_init__(self):
        freqs = {str(k): check_positive(v, f"frequency {k}") for k, v in self.frequencies.items()}
        if not freqs:
            raise ValueError("at least one constituent frequency is required")
        object.__setattr__(self, "frequencies", freqs)
        w = check_positive(self.window_hours, "window_hours")
        s = check_positive(self.step_hours, "step_hours")
        if s > w:
            raise ValueError("step_hours must not exceed window_hours")
        names = list(freqs)
        for i in range(len(names)):
            for j in range(i + 1, len(names)):
                gap = abs(freqs[names[i]] - freqs[names[j]])
                if gap * w < 1.0:
                    raise ValueError(
                        f"constituent pair ({names[i]}, {names[j]}) is not resolvable: "
                        f"frequency gap {gap:.6g} cycles/h needs a window of at least "
                        f"{1.0 / gap:.1f} h, got {w:.1f} h"
                    )


def principal_axes(east, north):
    """Rotate east/north velocities onto the principal current axes.

    The major axis is the leading eigenvector of the 2x2 velocity covariance;
    the angle is degrees counterclockwise from east, reported in [0, 180).
    Degenerate (isotropic) covariances break the tie at angle 0.  The
    rotation is orthonormal, so speed is preserved pointwise.
    """
    e = check_array_1d(east, "east")
    n = check_array_1d(north, "north")
    check_same_length(e, n, "east", "north")
    if e.size < 2:
        raise ValueError("need at least 2 samples")
    cov = np.cov(e, n)
    eigvals, eigvecs = np.linalg.eigh(cov)
    if eigvals[1] <= 0.0:
        raise ValueError("zero-variance velocity input; principal axes undefined")
    if eigvals[1] - eigvals[0] <= 1e-9 * (eigvals[0] + eigvals[1]):
        angle = 0.0
    else:
        v = eigvecs[:, 1]
        angle = float(np.degrees(np.arctan2(v[1], v[0]))) % 180.0
    th = np.radians(angle)
    major = e * np.cos(th) + n * np.sin(th)
    minor = -e * np.sin(th) + n * np.cos(th)
    return angle, major, minor


def harmonic_split(series, timestamps, config: HarmonicFitConfig | None = None):
    """Separate a series into tidal and residual parts by local harmonic fits.

    Least-squares fits of mean plus constituent sinusoids run in overlapping
    windows; overlapping predictions are blended with triangular
    center-peaked weights.  The residual is the series minus the blended
    tidal component, so reconstruction is exact by construction.
    """
    if config is None:
        config = HarmonicFitConfig()
    y = check_array_1d(series, "series")
    t = check_array_1d(timestamps, "timestamps")
    check_same_length(y, t, "series", "timestamps")
    check_strictly_increasing(t, "timestamps")

    t_h = (t - t[0]) / 3600.0
    span = float(t_h[-1])
    w, s = config.window_hours, config.step_hours
    if span < w:
        raise ValueError(f"record spans {span:.1f} h, shorter than one window ({w:.1f} h)")

    starts = list(np.arange(0.0, span - w + 1e-9, s))
    if not starts or starts[-1] + w < span - 1e-9:
        starts.append(span - w)

    omegas = 2.0 * np.pi * np.array(list(config.frequencies.values()))
    n_par = 1 + 2 * omegas.size
    num = np.zeros_like(y)
    den = np.zeros_like(y)
    fitted_any = np.zeros(y.size, dtype=bool)
    for w0 in starts:
        mask = (t_h >= w0 - 1e-9) & (t_h <= w0 + w + 1e-9)
        m = int(np.count_nonzero(mask))
        if m < n_par + 1:
            continue
        tw = t_h[mask]
        design = np.empty((m, n_par))
        design[:, 0] = 1.0
        for k, om in enumerate(omegas):
            design[:, 1 + 2 * k] = np.cos(om * tw)
            design[:, 2 + 2 * k] = np.sin(om * tw)
        coef, *_ = np.linalg.lstsq(design, y[mask], rcond=None)
        pred = design @ coef
        center = w0 + 0.5 * w
        # triangular weight peaked at the window center with a small floor so
        # samples covered by a single window are still blended
        weight = np.maximum(1.0 - np.abs(tw - center) / (0.5 * w), 1e-3)
        num[mask] += weight * pred
        den[mask] += weight
        fitted_any[mask] = True
    if not np.all(fitted_any):
        raise ValueError("some samples are not covered by any fittable window")
    tidal = num / den
    residual = y - tidal
    return tidal, residual


@dataclass(frozen=True)
class HourlyExtrema:
    """Per-hour maxima/minima with the starts of any empty (missing) hours."""

    hour_start: np.ndarray
    maxima: np.ndarray
    minima: np.ndarray
    missing_hours: np.ndarray


def hourly_extrema(series, timestamps) -> HourlyExtrema:
    """One maximum and one minimum per complete hour bucket.

    The incomplete trailing hour is dropped; hours inside data gaps longer
    than an hour are reported as missing, never interpolated.
    """
    y = check_array_1d(series, "series")
    t = check_array_1d(timestamps, "timestamps")
    check_same_length(y, t, "series", "timestamps")
    check_strictly_increasing(t, "timestamps")
    if t.size < 2:
        raise ValueError("need at least 2 samples")
    dt = float(np.median(np.diff(t)))
    if dt > 3600.0:
        raise ValueError(f"sampling interval {dt:.0f} s exceeds 1 hour")

    t0 = t[0]
    n_hours = int(np.floor((t[-1] - t0 + dt) / 3600.0))
    if n_hours < 1:
        raise ValueError("record shorter than one complete hour")
    bucket = np.floor((t - t0) / 3600.0).astype(int)
    keep = bucket < n_hours
    bucket, yk = bucket[keep], y[keep]

    starts, maxima, minima, missing = [], [], [], []
    order = np.argsort(bucket, kind="stable")
    bucket, yk = bucket[order], yk[order]
    boundaries = np.searchsorted(bucket, np.arange(n_hours + 1))
    for h in range(n_hours):
        lo, hi = boundaries[h], boundaries[h + 1]
        if lo == hi:
            missing.append(t0 + 3600.0 * h)
            continue
        starts.append(t0 + 3600.0 * h)
        maxima.append(float(np.max(yk[lo:hi])))
        minima.append(float(np.min(yk[lo:hi])))
    return HourlyExtrema(
        hour_start=np.array(starts), maxima=np.array(maxima),
        minima=np.array(minima), missing_hours=np.array(missing),
    )


@dataclass(frozen=True)
class ProcessedDepth:
    """One depth's rotated series and its tidal/residual decomposition."""

    label: str
    major_angle_deg: float
    major: np.ndarray
    minor: np.ndarray
    tidal_major: np.ndarray
    tidal_minor: np.ndarray
    residual_major: np.ndarray
    residual_minor: np.ndarray


@dataclass(frozen=True)
class CurrentProfileDataset:
    """Processed multi-depth currents with hourly extrema tables.

    Column layout of the hourly matrices is (depth, axis) pairs in depth
    order, axis order (major, minor); ``column_labels`` spells it out.
    """

    timestamps: np.ndarray
    depths: tuple[ProcessedDepth, ...]
    hour_start: np.ndarray
    column_labels: tuple[str, ...]
    residual_maxima: np.ndarray
    residual_minima: np.ndarray
    tidal_maxima: np.ndarray
    tidal_minima: np.ndarray
    total_maxima: np.ndarray
    total_minima: np.ndarray

    def column_index(self, depth_label: str, axis: str) -> int:
        key = f"{depth_label}:{axis}"
        try:
            return self.column_labels.index(key)
        except ValueError:
            raise ValueError(f"no column {key!r}; have {list(self.column_labels)}") from None


def process_current_profiles(velocities: dict, timestamps,
                             config: HarmonicFitConfig | None = None) -> CurrentProfileDataset:
    """Run the per-depth pipeline: rotate, split, bucket hourly extrema.

    ``velocities`` maps depth label to an (east, north) pair of series
    sharing one time base.
    """
    if config is None:
        config = HarmonicFitConfig()
    t = check_array_1d(timestamps, "timestamps")
    check_strictly_increasing(t, "timestamps")
    if not velocities:
        raise ValueError("no depths supplied")

    depths = []
    res_max_cols, res_min_cols = [], []
    tid_max_cols, tid_min_cols = [], []
    tot_max_cols, tot_min_cols = [], []
    labels = []
    hour_start = None
    for label, (east, north) in velocities.items():
        angle, major, minor = principal_axes(east, north)
        tidal_major, residual_major = harmonic_split(major, t, config)
        tidal_minor, residual_minor = harmonic_split(minor, t, config)
        depths.append(ProcessedDepth(
            label=str(label), major_angle_deg=angle, major=major, minor=minor,
            tidal_major=tidal_major, tidal_minor=tidal_minor,
            residual_major=residual_major, residual_minor=residual_minor,
        ))
        for axis, tidal, residual, total in (
            ("major", tidal_major, residual_major, major),
            ("minor", tidal_minor, residual_minor, minor),
        ):
            res = hourly_extrema(residual, t)
            tid = hourly_extrema(tidal, t)
            tot = hourly_extrema(total, t)
            if hour_start is None:
                hour_start = res.hour_start
            labels.append(f"{label}:{axis}")
            res_max_cols.append(res.maxima)
            res_min_cols.append(res.minima)
            tid_max_cols.append(tid.maxima)
            tid_min_cols.append(tid.minima)
            tot_max_cols.append(tot.maxima)
            tot_min_cols.append(tot.minima)

    return CurrentProfileDataset(
        timestamps=t, depths=tuple(depths), hour_start=hour_start,
        column_labels=tuple(labels),
        residual_maxima=np.column_stack(res_max_cols),
        residual_minima=np.column_stack(res_min_cols),
        tidal_maxima=np.column_stack(tid_max_cols),
        tidal_minima=np.column_stack(tid_min_cols),
        total_maxima=np.column_stack(tot_max_cols),
        total_minima=np.column_stack(tot_min_cols),
    )


def recombine(simulated_residual_extremes, tidal_pool, seed=None) -> np.ndarray:
    """Add a resampled tidal row to each simulated residual row.

    Tidal rows are drawn uniformly with replacement as complete profiles, one
    draw per residual row, preserving the vertical coherence of the tide
    across depths and axes.
    """
    res = check_array_2d(simulated_residual_extremes, "simulated_residual_extremes")
    pool = check_array_2d(tidal_pool, "tidal_pool")
    if res.shape[1] != pool.shape[1]:
        raise ValueError(
            f"column layout mismatch: residuals have {res.shape[1]} columns, "
            f"tidal pool has {pool.shape[1]}"
        )
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, pool.shape[0], size=res.shape[0])
    return res + pool[idx]


def profile_conditional_extremes(dataset: CurrentProfileDataset, conditioning_depth: str,
                                 conditioning_axis: str = "major", *, condition_on: str,
                                 threshold_quantile: float = 0.95,
                                 return_period_years: float = 10.0,
                                 n_sim: int = 10_000, seed=None) -> dict:
    """Per-depth conditional medians given an extreme conditioning current.

    Fits GPD marginals to each component's residual hourly maxima, a
    multivariate conditional-extremes model conditioned on the chosen
    component, simulates joint residual extremes above the conditioning
    level, recombines with resampled tidal profiles, and reports per-depth
    medians of the conditioned totals plus the rotation of the conditional
    extremes relative to the unconditioned axes.

    ``condition_on`` must be ``"residual"`` (conditioning level is the
    return value of the residual maxima and truncation happens at
    simulation time) or ``"total"`` (level comes from the observed total
    maxima and simulated totals are filtered after recombination).
    """
    if condition_on not in ("residual", "total"):
        raise ValueError('condition_on must be "residual" or "total"')
    check_probability(threshold_quantile, "threshold_quantile")
    check_positive(return_period_years, "return_period_years")
    n_sim = int(n_sim)
    if n_sim < 100:
        raise ValueError("n_sim must be at least 100")

    k = dataset.column_index(conditioning_depth, conditioning_axis)
    cols = dataset.residual_maxima
    n_cols = cols.shape[1]
    marginals = []
    for j in range(n_cols):
        m = SemiParametricMarginal(
            threshold_quantile=threshold_quantile,
            events_per_year=HOURS_PER_YEAR,
            label=dataset.column_labels[j],
        ).fit(cols[:, j])
        marginals.append(m)

    gumbel = np.column_stack([m.to_gumbel(cols[:, j]) for j, m in enumerate(marginals)])
    # Gumbel image of the conditioning marginal's threshold
    threshold_u = float(-np.log(-np.log(1.0 - marginals[k].tail_fraction_)))
    model = MultivariateConditionalExtremes(conditioning_index=k, threshold=threshold_u).fit(gumbel)

    base_seed = 0 if seed is None else int(seed)
    if condition_on == "residual":
        level = float(marginals[k].return_value(return_period_years))
        sims = model.simulate(marginals, n_sim, level, seed=base_seed)
        totals = recombine(sims, dataset.tidal_maxima, seed=base_seed + 1)
        conditioned = totals
    else:
        total_marginal = SemiParametricMarginal(
            threshold_quantile=threshold_quantile, events_per_year=HOURS_PER_YEAR,
        ).fit(dataset.total_maxima[:, k])
        level = float(total_marginal.return_value(return_period_years))
        anchor = float(marginals[k].ppf(threshold_quantile))
        sims = model.simulate(marginals, n_sim, anchor, seed=base_seed)
        totals = recombine(sims, dataset.tidal_maxima, seed=base_seed + 1)
        conditioned = totals[totals[:, k] > level]
        if conditioned.shape[0] < 100:
            raise ValueError(
                f"only {conditioned.shape[0]} simulated totals exceed the conditioning "
                "level; increase n_sim"
            )

    report = {
        "conditioning": {
            "depth": conditioning_depth, "axis": conditioning_axis,
            "condition_on": condition_on, "level": level,
            "return_period_years": float(return_period_years),
        },
        "n_conditioned": int(conditioned.shape[0]),
        "depths": {},
    }
    for depth in dataset.depths:
        jm = dataset.column_index(depth.label, "major")
        jn = dataset.column_index(depth.label, "minor")
        med_major = float(np.median(conditioned[:, jm]))
        med_minor = float(np.median(conditioned[:, jn]))
        report["depths"][depth.label] = {
            "median_major": med_major,
            "median_minor": med_minor,
            # rotation of the conditional extreme relative to the
            # unconditioned principal axes; positive = anticlockwise
            "rotation_deg": float(np.degrees(np.arctan2(med_minor, med_major))),
            "unconditional_median_major": float(np.median(dataset.total_maxima[:, jm])),
            "unconditional_median_minor": float(np.median(dataset.total_maxima[:, jn])),
            "major_angle_deg": depth.major_angle_deg,
        }
    return report
