"""Batch front end: config-driven analysis runs with reproducible outputs.

Every command reads a single YAML config, writes its artifacts plus a run
manifest into the output directory, and maps failures to exit codes:
0 success, 2 input/validation, 3 numerical failure, 4 post-emission
invariant failure.
"""

from __future__ import annotations

import sys
import time
from pathlib import Path

import click
import numpy as np
import pandas as pd
import yaml
from scipy import stats

from . import __version__
from .condex import (
    ConditionalExtremes,
    DirectionalConditionalExtremes,
    MultivariateConditionalExtremes,
    conditional_return_curve,
    simulate_pairs,
)
from .currents import (
    CONSTITUENT_FREQUENCIES,
    HarmonicFitConfig,
    process_current_profiles,
    profile_conditional_extremes,
)
from .exceptions import FitConvergenceError, InvariantViolation
from .form import LimitState, environmental_contour, form_search, polygon_contains
from .io import derive_seed, sha256_file, write_csv, write_json
from .marginals import SemiParametricMarginal, UnivariateSample, decluster
from .metocean import HaverNutzenModel, ReliabilityInputs, naive_combination, structural_reliability

EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
EXIT_INVARIANT = 4

STOCHASTIC_COMMANDS = {"condex", "currents", "naive-combo"}


class ConfigError(ValueError):
    """A run configuration is missing or malformed."""


def load_config(path) -> dict:
    with open(path) as fh:
        doc = yaml.safe_load(fh)
    if not isinstance(doc, dict):
        raise ConfigError(f"config {path} must be a mapping, got {type(doc).__name__}")
    return doc


def _require(cfg: dict, key: str):
    if key not in cfg:
        raise ConfigError(f"config is missing required key {key!r}")
    return cfg[key]


def _read_input_csv(cfg: dict, required_columns) -> pd.DataFrame:
    path = Path(_require(cfg, "input"))
    if not path.exists():
        raise ConfigError(f"input file {path} does not exist")
    df = pd.read_csv(path)
    if df.empty:
        raise ConfigError(f"input file {path} has no rows")
    missing = [c for c in required_columns if c not in df.columns]
    if missing:
        raise ConfigError(f"input file {path} is missing columns {missing}")
    return df


def _timestamps_seconds(column) -> np.ndarray:
    t = pd.to_datetime(column, format="ISO8601")
    return t.astype("int64").to_numpy() / 1e9


def _iso(seconds: float) -> str:
    return pd.Timestamp(int(round(seconds * 1e9)), unit="ns").isoformat()


# ---------------------------------------------------------------------------
# command runners: cfg + outdir + seed -> list of written files
# ---------------------------------------------------------------------------


def run_fit_marginal(cfg: dict, outdir: Path, seed) -> list[Path]:
    df = _read_input_csv(cfg, ["timestamp", "value"])
    t = _timestamps_seconds(df["timestamp"])
    order = np.argsort(t, kind="stable")
    sample = UnivariateSample(df["value"].to_numpy(float)[order], t[order],
                              label=str(cfg.get("label", "value")))
    if "decluster" in cfg:
        d = cfg["decluster"]
        sample = decluster(sample, float(_require(d, "threshold")),
                           float(d.get("gap_hours", 24.0)))
        if sample.n == 0:
            raise ConfigError("declustering left no events; lower the decluster threshold")
    marginal = SemiParametricMarginal(
        threshold=cfg.get("threshold"),
        threshold_quantile=float(cfg.get("threshold_quantile", 0.95)),
        events_per_year=cfg.get("events_per_year"),
        label=sample.label,
    ).fit(sample.values, timestamps=sample.timestamps)

    fit_path = outdir / "marginal.json"
    write_json(fit_path, marginal.to_dict())

    exceedances = np.sort(sample.values[sample.values > marginal.gpd_.threshold])
    n = sample.n
    rows = []
    for v in exceedances:
        empirical = np.count_nonzero(sample.values <= v) / (n + 1.0)
        rows.append((v, empirical, float(marginal.cdf(v))))
    diag_path = outdir / "diagnostics.csv"
    write_csv(diag_path, ["exceedance", "empirical_p", "model_p"], rows)
    return [fit_path, diag_path]


def _fit_pair_marginals(df, cfg, x_col, y_col, t):
    kwargs = dict(
        threshold_quantile=float(cfg.get("threshold_quantile", 0.95)),
        events_per_year=cfg.get("events_per_year"),
    )
    m_x = SemiParametricMarginal(label=x_col, **kwargs).fit(df[x_col].to_numpy(float), timestamps=t)
    m_y = SemiParametricMarginal(label=y_col, **kwargs).fit(df[y_col].to_numpy(float), timestamps=t)
    return m_x, m_y


def run_condex(cfg: dict, outdir: Path, seed) -> list[Path]:
    x_col = str(cfg.get("x_column", "x"))
    y_col = str(cfg.get("y_column", "y"))
    direction_col = cfg.get("direction_column")
    needed = ["timestamp", x_col, y_col] + ([direction_col] if direction_col else [])
    df = _read_input_csv(cfg, needed)
    t = _timestamps_seconds(df["timestamp"])
    m_x, m_y = _fit_pair_marginals(df, cfg, x_col, y_col, t)
    xg = np.asarray(m_x.to_gumbel(df[x_col].to_numpy(float)))
    yg = np.asarray(m_y.to_gumbel(df[y_col].to_numpy(float)))
    threshold_u = float(np.quantile(xg, float(cfg.get("ht_threshold_quantile", 0.95))))

    n_sim = int(cfg.get("n_sim", 10_000))
    n_bootstrap = int(cfg.get("n_bootstrap", 100))
    exceed_prob = float(cfg.get("exceed_prob_annual", 0.01))
    x_min = cfg.get("sim_x_min")
    if x_min is None:
        # nudge above the threshold so the Gumbel roundtrip cannot land below it
        x_min = float(m_x.from_gumbel(threshold_u + 1e-6))

    sectors_cfg = cfg.get("sectors")
    if sectors_cfg:
        theta = df[direction_col].to_numpy(float) if direction_col else None
        if theta is None:
            raise ConfigError("sectored runs need direction_column in the config")
        model = DirectionalConditionalExtremes(
            [tuple(s) for s in sectors_cfg], threshold=threshold_u
        ).fit(xg, yg, theta)
        fit_doc = {"threshold_u": threshold_u, "sectors": []}
        sample_rows, curve_rows = [], []
        for i, ((lo, hi), fit) in enumerate(zip(model.sectors_, model.sector_fits_)):
            entry = {"lo_deg": lo, "hi_deg": hi % 360.0 if hi > 360.0 else hi}
            if fit is None:
                entry["no_data"] = True
                fit_doc["sectors"].append(entry)
                continue
            entry["fit"] = fit.to_dict()
            fit_doc["sectors"].append(entry)
            sims = simulate_pairs(fit, m_x, m_y, n_sim, x_min,
                                  seed=derive_seed(seed, f"sim:{i}"))
            sample_rows.extend((lo, s[0], s[1]) for s in sims)
            curve = conditional_return_curve(
                fit, m_x, m_y, exceed_prob, n_sim,
                seed=derive_seed(seed, f"curve:{i}"), n_bootstrap=n_bootstrap,
            )
            curve_rows.append((lo, entry["hi_deg"], curve.x_return, curve.median_y,
                               curve.band_lo, curve.band_hi))
        sample_header = ["sector_lo_deg", x_col, y_col]
        curve_header = ["sector_lo_deg", "sector_hi_deg", "x_return",
                        "median_y", "band_lo", "band_hi"]
    else:
        model = ConditionalExtremes(threshold=threshold_u).fit(xg, yg)
        fit_doc = model.fit_.to_dict()
        sims = model.simulate(m_x, m_y, n_sim, x_min, seed=derive_seed(seed, "sim"))
        sample_rows = [(s[0], s[1]) for s in sims]
        sample_header = [x_col, y_col]
        curve = model.return_curve(m_x, m_y, exceed_prob, n_sim,
                                   seed=derive_seed(seed, "curve"), n_bootstrap=n_bootstrap)
        curve_rows = [(curve.x_return, curve.median_y, curve.band_lo, curve.band_hi)]
        curve_header = ["x_return", "median_y", "band_lo", "band_hi"]

    fit_path = outdir / "condex_fit.json"
    write_json(fit_path, fit_doc)
    samples_path = outdir / "simulated_samples.csv"
    write_csv(samples_path, sample_header, sample_rows)
    curve_path = outdir / "conditional_return_curve.csv"
    write_csv(curve_path, curve_header, curve_rows)
    return [fit_path, samples_path, curve_path]


def run_contour(cfg: dict, outdir: Path, seed) -> list[Path]:
    model = HaverNutzenModel.from_dict(_require(cfg, "model"))
    chain = model.rosenblatt_chain()
    periods = sorted(float(T) for T in _require(cfg, "return_periods_years"))
    states_per_year = float(cfg.get("states_per_year", 2922.0))
    n_points = int(cfg.get("n_points", 360))

    paths = []
    for T in periods:
        contour = environmental_contour(chain, T, states_per_year, n_points)
        path = outdir / f"contour_T{T:g}.csv"
        rows = [
            (contour.angles_deg[i], contour.u_points[i, 0], contour.u_points[i, 1],
             contour.points[i, 0], contour.points[i, 1])
            for i in range(contour.n_points)
        ]
        write_csv(path, ["angle_deg", "u1", "u2", "x1", "x2"], rows)
        paths.append(path)

    # nesting re-verified from the emitted files
    emitted = []
    for path in paths:
        parsed = pd.read_csv(path)
        if len(parsed) != n_points:
            raise InvariantViolation(f"{path.name} has {len(parsed)} rows, expected {n_points}")
        emitted.append(parsed[["x1", "x2"]].to_numpy())
    for inner, outer in zip(emitted[:-1], emitted[1:]):
        if not all(polygon_contains(outer, p) for p in inner):
            raise InvariantViolation("emitted contours do not nest with increasing return period")
    return paths


def run_form(cfg: dict, outdir: Path, seed) -> list[Path]:
    ls_cfg = _require(cfg, "limit_state")
    linear = np.asarray(_require(ls_cfg, "linear"), dtype=float)
    quadratic = np.asarray(ls_cfg.get("quadratic", np.zeros_like(linear)), dtype=float)
    c0 = float(_require(ls_cfg, "c0"))
    if quadratic.shape != linear.shape:
        raise ConfigError("limit_state.quadratic must match the length of limit_state.linear")

    def g(u):
        return c0 - float(linear @ u) - float(quadratic @ (np.asarray(u) ** 2))

    ls = LimitState(g, dimension=linear.size)
    start = cfg.get("start")
    result = form_search(ls, start=None if start is None else np.asarray(start, dtype=float))
    if not result.converged:
        raise FitConvergenceError(
            f"MPP search did not converge in {result.iterations} iterations"
        )
    path = outdir / "form_result.json"
    write_json(path, result.to_dict())
    return [path]


_DIST_BUILDERS = {
    "normal": lambda p: stats.norm(loc=p.get("loc", 0.0), scale=p.get("scale", 1.0)),
    "lognormal": lambda p: stats.lognorm(s=p["s"], scale=p.get("scale", 1.0)),
    "exponential": lambda p: stats.expon(scale=p.get("scale", 1.0)),
    "uniform": lambda p: stats.uniform(loc=p.get("loc", 0.0),
                                       scale=p.get("scale", 1.0)),
    "weibull": lambda p: stats.weibull_min(p["shape"], scale=p.get("scale", 1.0)),
    "gumbel": lambda p: stats.gumbel_r(loc=p.get("loc", 0.0), scale=p.get("scale", 1.0)),
}


def _dist_from_config(block: dict):
    name = str(_require(block, "dist"))
    if name not in _DIST_BUILDERS:
        raise ConfigError(f"unknown distribution {name!r}; choose from {sorted(_DIST_BUILDERS)}")
    return _DIST_BUILDERS[name](block.get("params", {}))


def run_reliability(cfg: dict, outdir: Path, seed) -> list[Path]:
    load = _dist_from_config(_require(cfg, "load"))
    res_cfg = _require(cfg, "resistance")
    if "point" in res_cfg:
        inputs = ReliabilityInputs(
            load_survival=load.sf, resistance_density=lambda x: 0.0,
            domain=(0.0, 1.0), resistance_point=float(res_cfg["point"]),
        )
        domain = None
    else:
        resistance = _dist_from_config(res_cfg)
        if "domain" in cfg:
            domain = tuple(float(v) for v in cfg["domain"])
        else:
            domain = (float(resistance.ppf(1e-10)), float(resistance.isf(1e-10)))
        inputs = ReliabilityInputs(load_survival=load.sf,
                                   resistance_density=resistance.pdf, domain=domain)
    p_f = structural_reliability(inputs)
    path = outdir / "reliability.json"
    write_json(path, {"p_f": p_f, "domain": list(domain) if domain else None})
    return [path]


def _harmonic_config(cfg: dict) -> HarmonicFitConfig:
    constituents = cfg.get("constituents")
    if constituents is None:
        freqs = dict(CONSTITUENT_FREQUENCIES)
    elif isinstance(constituents, dict):
        freqs = {str(k): float(v) for k, v in constituents.items()}
    else:
        freqs = {}
        for name in constituents:
            if name not in CONSTITUENT_FREQUENCIES:
                raise ConfigError(
                    f"unknown constituent {name!r}; known: {sorted(CONSTITUENT_FREQUENCIES)} "
                    "(or give a mapping name -> cycles/hour)"
                )
            freqs[name] = CONSTITUENT_FREQUENCIES[name]
    return HarmonicFitConfig(
        frequencies=freqs,
        window_hours=float(cfg.get("window_hours", 360.0)),
        step_hours=float(cfg.get("step_hours", 24.0)),
    )


def run_currents(cfg: dict, outdir: Path, seed) -> list[Path]:
    df = _read_input_csv(cfg, ["timestamp", "depth_label", "east_mps", "north_mps"])
    df = df.assign(_t=_timestamps_seconds(df["timestamp"]))
    labels = sorted(df["depth_label"].astype(str).unique())
    base_t = None
    velocities = {}
    for label in labels:
        block = df[df["depth_label"].astype(str) == label].sort_values("_t")
        t = block["_t"].to_numpy()
        if base_t is None:
            base_t = t
        elif t.shape != base_t.shape or not np.array_equal(t, base_t):
            raise ConfigError(f"depth {label} does not share the common time base")
        velocities[label] = (block["east_mps"].to_numpy(float),
                             block["north_mps"].to_numpy(float))

    harmonic = _harmonic_config(cfg)
    dataset = process_current_profiles(velocities, base_t, harmonic)

    paths = []
    for depth in dataset.depths:
        path = outdir / f"processed_{depth.label}.csv"
        rows = zip(
            (_iso(v) for v in dataset.timestamps),
            depth.major, depth.minor, depth.tidal_major, depth.tidal_minor,
            depth.residual_major, depth.residual_minor,
        )
        write_csv(path, ["timestamp", "major", "minor", "tidal_major", "tidal_minor",
                         "residual_major", "residual_minor"], rows)
        paths.append(path)

    extrema_path = outdir / "hourly_extrema.csv"
    header = ["hour_start"]
    for label in dataset.column_labels:
        tag = label.replace(":", "_")
        header += [f"{tag}_residual_max", f"{tag}_residual_min",
                   f"{tag}_tidal_max", f"{tag}_tidal_min"]
    rows = []
    for i, h in enumerate(dataset.hour_start):
        row = [_iso(h)]
        for j in range(len(dataset.column_labels)):
            row += [dataset.residual_maxima[i, j], dataset.residual_minima[i, j],
                    dataset.tidal_maxima[i, j], dataset.tidal_minima[i, j]]
        rows.append(row)
    write_csv(extrema_path, header, rows)
    paths.append(extrema_path)

    conditioning = _require(cfg, "conditioning")
    report = profile_conditional_extremes(
        dataset,
        conditioning_depth=str(_require(conditioning, "depth")),
        conditioning_axis=str(conditioning.get("axis", "major")),
        condition_on=str(_require(cfg, "condition_on")),
        threshold_quantile=float(cfg.get("threshold_quantile", 0.95)),
        return_period_years=float(cfg.get("return_period_years", 10.0)),
        n_sim=int(cfg.get("n_sim", 10_000)),
        seed=derive_seed(seed, "currents"),
    )
    report_path = outdir / "conditional_extremes_report.json"
    write_json(report_path, report)
    paths.append(report_path)

    _verify_currents_outputs(outdir, dataset, velocities)
    return paths


def _verify_currents_outputs(outdir: Path, dataset, velocities) -> None:
    """Re-read emitted per-depth files and re-check pipeline invariants."""
    for depth in dataset.depths:
        emitted = pd.read_csv(outdir / f"processed_{depth.label}.csv")
        major = emitted["major"].to_numpy()
        minor = emitted["minor"].to_numpy()
        recon_major = emitted["tidal_major"].to_numpy() + emitted["residual_major"].to_numpy()
        recon_minor = emitted["tidal_minor"].to_numpy() + emitted["residual_minor"].to_numpy()
        if np.max(np.abs(recon_major - major)) > 1e-9 or \
                np.max(np.abs(recon_minor - minor)) > 1e-9:
            raise InvariantViolation(
                f"tidal + residual does not reconstruct the rotated series for {depth.label}"
            )
        east, north = velocities[depth.label]
        energy_in = float(np.sum(np.asarray(east) ** 2 + np.asarray(north) ** 2))
        energy_out = float(np.sum(major ** 2 + minor ** 2))
        if abs(energy_out - energy_in) > 1e-9 * max(energy_in, 1.0):
            raise InvariantViolation(f"rotation does not preserve energy for {depth.label}")


def run_naive_combo(cfg: dict, outdir: Path, seed) -> list[Path]:
    variables = [str(v) for v in _require(cfg, "variables")]
    df = _read_input_csv(cfg, ["timestamp"] + variables)
    t = _timestamps_seconds(df["timestamp"])
    quantile = float(cfg.get("threshold_quantile", 0.95))
    marginals = [
        SemiParametricMarginal(threshold_quantile=quantile,
                               events_per_year=cfg.get("events_per_year"),
                               label=v).fit(df[v].to_numpy(float), timestamps=t)
        for v in variables
    ]
    periods = [float(T) for T in _require(cfg, "return_periods_years")]

    dependence = None
    if cfg.get("with_dependence", False):
        gumbel = np.column_stack([
            m.to_gumbel(df[v].to_numpy(float)) for v, m in zip(variables, marginals)
        ])
        k = int(cfg.get("conditioning_index", 0))
        threshold_u = float(np.quantile(gumbel[:, k],
                                        float(cfg.get("ht_threshold_quantile", 0.95))))
        dependence = MultivariateConditionalExtremes(
            conditioning_index=k, threshold=threshold_u
        ).fit(gumbel)
    report = naive_combination(
        marginals, periods, dependence=dependence,
        n_sim=int(cfg.get("n_sim", 100_000)),
        seed=None if dependence is None else derive_seed(seed, "naive-combo"),
    )
    path = outdir / "naive_combo.json"
    write_json(path, report)
    return [path]


# ---------------------------------------------------------------------------
# click wiring
# ---------------------------------------------------------------------------

_RUNNERS = {
    "fit-marginal": run_fit_marginal,
    "condex": run_condex,
    "contour": run_contour,
    "form": run_form,
    "reliability": run_reliability,
    "currents": run_currents,
    "naive-combo": run_naive_combo,
}


def _execute(command: str, config: str, out, seed, verbose: bool) -> int:
    t0 = time.monotonic()
    try:
        cfg = load_config(config)
        effective_seed = seed if seed is not None else cfg.get("seed")
        if command in STOCHASTIC_COMMANDS and effective_seed is None:
            raise ConfigError(f"a seed is required for the stochastic command {command!r}")
        outdir = Path(out) if out is not None else cfg.get("output_dir")
        if outdir is None:
            raise ConfigError("no output directory: pass --out or set output_dir in the config")
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        outputs = _RUNNERS[command](cfg, outdir, effective_seed)
        manifest = {
            "command": command,
            "artifact_version": __version__,
            "config": cfg,
            "effective_seed": effective_seed,
            "outputs": {p.name: sha256_file(p) for p in outputs},
            "duration_seconds": time.monotonic() - t0,
        }
        write_json(outdir / "run_manifest.json", manifest)
        if verbose:
            for p in outputs:
                click.echo(f"wrote {p}")
            click.echo(f"wrote {outdir / 'run_manifest.json'}")
        return 0
    except InvariantViolation as err:
        click.echo(f"error: post-emission invariant failed: {err}", err=True)
        return EXIT_INVARIANT
    except (FitConvergenceError, ArithmeticError, np.linalg.LinAlgError) as err:
        click.echo(f"error: numerical failure: {err}", err=True)
        return EXIT_NUMERICAL
    except (ValueError, KeyError, TypeError, OSError) as err:
        click.echo(f"error: {err}", err=True)
        return EXIT_VALIDATION


def _command(name: str, help_text: str):
    @main.command(name=name, help=help_text)
    @click.option("--config", required=True, type=click.Path(), help="Run configuration (YAML).")
    @click.option("--out", type=click.Path(), default=None,
                  help="Output directory (overrides config output_dir).")
    @click.option("--seed", type=int, default=None, help="Seed override.")
    @click.option("--verbose", is_flag=True, default=False)
    def cmd(config, out, seed, verbose, _name=name):
        sys.exit(_execute(_name, config, out, seed, verbose))

    return cmd


@click.group()
@click.version_option(version=__version__)
def main():
    """Joint metocean extremes toolkit."""


_command("fit-marginal", "Fit a semi-parametric marginal to a timestamp,value CSV.")
_command("condex", "Fit and simulate the conditional extremes model on a paired CSV.")
_command("contour", "Emit inverse-FORM environmental contours for a configured Hs/Tp model.")
_command("form", "Run the FORM most-probable-point search for a configured limit state.")
_command("reliability", "Evaluate the load/resistance failure-probability integral.")
_command("currents", "Process multi-depth currents and run profile conditional extremes.")
_command("naive-combo", "Report componentwise return values and their joint rarity.")


if __name__ == "__main__":
    main()
