"""Shared fixture builders for the unit and acceptance suites."""

import numpy as np
import pandas as pd
import yaml
from scipy.stats import norm


def iso_timestamps(n, step_seconds=10_800.0, start="2015-01-01"):
    t0 = pd.Timestamp(start)
    return [(t0 + pd.Timedelta(seconds=i * step_seconds)).isoformat() for i in range(n)]


def standard_gumbel(n, seed):
    return -np.log(-np.log(np.random.default_rng(seed).uniform(size=n)))


def gaussian_copula_gumbel(rho, n, seed):
    rng = np.random.default_rng(seed)
    z = rng.multivariate_normal([0.0, 0.0], [[1.0, rho], [rho, 1.0]], size=n)
    u = norm.cdf(z)
    return -np.log(-np.log(u[:, 0])), -np.log(-np.log(u[:, 1]))


def write_yaml(path, doc):
    path.write_text(yaml.safe_dump(doc))
    return path


def marginal_csv(tmp_path, n=4000, seed=1):
    rng = np.random.default_rng(seed)
    df = pd.DataFrame({
        "timestamp": iso_timestamps(n),
        "value": rng.gumbel(5.0, 2.0, size=n),
    })
    path = tmp_path / "hs.csv"
    df.to_csv(path, index=False)
    return path


def pairs_csv(tmp_path, n=6000, seed=2, directional=False):
    rng = np.random.default_rng(seed)
    hg = standard_gumbel(n, seed + 1)
    z = rng.normal(0.0, 0.5, size=n)
    if directional:
        theta = rng.uniform(0.0, 360.0, size=n)
        alpha = np.where(theta < 180.0, 0.9, 0.1)
    else:
        theta = None
        alpha = 0.6
    tg = alpha * hg + z
    df = pd.DataFrame({
        "timestamp": iso_timestamps(n),
        "hs": 5.0 + 1.6 * hg,
        "tp": 9.0 + 1.8 * tg,
    })
    if directional:
        df["direction"] = theta
    path = tmp_path / "pairs.csv"
    df.to_csv(path, index=False)
    return path


def currents_csv(tmp_path, days=30, seed=3):
    rng = np.random.default_rng(seed)
    t = np.arange(0.0, days * 24 * 3600.0, 600.0)
    t_h = t / 3600.0
    n = t.size
    tide = 0.6 * np.cos(2.0 * np.pi * t_h / 12.4206012 + 0.2)
    frames = []
    for label in ("D1", "D2"):
        east = tide + rng.normal(0.0, 0.15, size=n)
        north = rng.normal(0.0, 0.05, size=n)
        for s in rng.choice(np.arange(100, n - 100), size=25, replace=False):
            east[s:s + 8] += rng.uniform(1.0, 2.0)
        frames.append(pd.DataFrame({
            "timestamp": iso_timestamps(n, step_seconds=600.0),
            "depth_label": label,
            "east_mps": east,
            "north_mps": north,
        }))
    path = tmp_path / "currents.csv"
    pd.concat(frames).to_csv(path, index=False)
    return path


def joint_csv(tmp_path, n=20_000, seed=4):
    rng = np.random.default_rng(seed)
    z = rng.multivariate_normal([0.0, 0.0], [[1.0, 0.5], [0.5, 1.0]], size=n)
    g = -np.log(-np.log(norm.cdf(z)))
    df = pd.DataFrame({
        "timestamp": iso_timestamps(n, step_seconds=3600.0),
        "hs": 4.0 + 1.5 * g[:, 0],
        "cs": 0.5 + 0.2 * g[:, 1],
    })
    path = tmp_path / "joint.csv"
    df.to_csv(path, index=False)
    return path


def profile_fixture(rotation_deg_d2=0.0, independent_d2=False, days=40, seed=20):
    """Two-depth fixture: tidal + noise bulk along east, planted storm pulses.

    D2 shares D1's storm events (optionally rotated), or gets its own
    independent events.
    """
    rng = np.random.default_rng(seed)
    t = np.arange(0.0, days * 24 * 3600.0, 600.0)
    t_h = t / 3600.0
    n = t.size
    tide = 0.6 * np.cos(2.0 * np.pi * t_h / 12.4206012 + 0.2)
    base_e1 = tide + rng.normal(0.0, 0.15, size=n)
    base_n1 = rng.normal(0.0, 0.05, size=n)
    base_e2 = tide + rng.normal(0.0, 0.15, size=n)
    base_n2 = rng.normal(0.0, 0.05, size=n)

    def add_events(east, north, angle_deg, event_starts):
        for s in event_starts:
            length = rng.integers(6, 18)
            amp = rng.uniform(1.2, 2.4)
            shape = amp * np.hanning(2 * length)[length:]
            sl = slice(s, min(s + length, n))
            k = sl.stop - sl.start
            east[sl] += shape[:k] * np.cos(np.radians(angle_deg))
            north[sl] += shape[:k] * np.sin(np.radians(angle_deg))

    starts_d1 = rng.choice(np.arange(100, n - 200), size=30, replace=False)
    add_events(base_e1, base_n1, 0.0, starts_d1)
    if independent_d2:
        starts_d2 = rng.choice(np.arange(100, n - 200), size=30, replace=False)
        add_events(base_e2, base_n2, 0.0, starts_d2)
    else:
        add_events(base_e2, base_n2, rotation_deg_d2, starts_d1)
    return {"D1": (base_e1, base_n1), "D2": (base_e2, base_n2)}, t


CONDEX_BASE = {
    "x_column": "hs", "y_column": "tp",
    "threshold_quantile": 0.95, "ht_threshold_quantile": 0.95,
    "exceed_prob_annual": 0.02, "n_sim": 2000, "n_bootstrap": 5,
}

CONTOUR_CFG = {
    "model": {
        "weibull": {"alpha": 2.8, "beta": 1.5},
        "mu": {"a1": 1.78, "a2": 0.26, "a3": 0.44},
        "var": {"b1": 0.005, "b2": 0.12, "b3": 0.35},
    },
    "return_periods_years": [10, 100, 1000],
    "states_per_year": 2922,
    "n_points": 90,
}

CURRENTS_BASE = {
    "conditioning": {"depth": "D1", "axis": "major"},
    "condition_on": "residual",
    "threshold_quantile": 0.95,
    "return_period_years": 10.0,
    "n_sim": 1500,
}
