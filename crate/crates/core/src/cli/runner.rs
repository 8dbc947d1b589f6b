//! Experiment dispatch: configuration in, CSV tables out.

use std::sync::Arc;

use log::info;

use super::config::{parse_list, Config};
use super::table::{fmt_f64, Table};
use crate::bounds::{tube_lower_bound, tube_upper_bound, BoundConstants, Profiles};
use crate::control_metric::{
    dc_estimate, equivalence_report, frame_directions, rho2_estimate, DcOptions,
};
use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::mc::density::density_fit_with;
use crate::mc::{
    rescaled_samples, short_time_escape, tube_probabilities, SimConfig, EXIT_BINS,
};
use crate::model::{builtin, DiffusionModel, Domain, Monomial, PolyField, Polynomial};
use crate::norms::lemmas::{run_all, LocalityParams};
use crate::norms::quasi_distance;
use crate::skeleton::{r_star, solve_skeleton, Control};

/// Experiment kinds accepted under the `experiment` key.
pub const EXPERIMENTS: &[&str] = &[
    "tube",
    "density",
    "shorttime-escape",
    "norms-check",
    "control-metric",
    "taylor-scaling",
];

/// Seed used when the configuration has none.
pub const DEFAULT_SEED: u64 = 20_240_601;

fn parse_poly(key: &str, text: &str) -> Result<Polynomial> {
    let mut terms = Vec::new();
    for term in text.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let parts: Vec<&str> = term.split(':').map(str::trim).collect();
        let bad = || Error::Config(format!("'{key}': term '{term}' is not 'coef:p1:p2'"));
        let (coef, p1, p2) = match parts.as_slice() {
            [c] => (c.parse().map_err(|_| bad())?, 0, 0),
            [c, a, b] => (
                c.parse().map_err(|_| bad())?,
                a.parse().map_err(|_| bad())?,
                b.parse().map_err(|_| bad())?,
            ),
            _ => return Err(bad()),
        };
        terms.push(Monomial::new(coef, p1, p2));
    }
    Ok(Polynomial::new(terms))
}

fn parse_box(key: &str, text: &str) -> Result<Domain> {
    match parse_list(key, text)?.as_slice() {
        &[a, b, c, d] if a < b && c < d => Ok(Domain::new((a, b), (c, d))),
        _ => Err(Error::Config(format!(
            "'{key}': expected 'x1_lo, x1_hi, x2_lo, x2_hi' with lo < hi, got '{text}'"
        ))),
    }
}

/// Builds the model named by `model.name`, or a polynomial model from `model.sigma.*`
/// and `model.drift.*` when the name is `custom`.
pub fn model_from_config(cfg: &Config) -> Result<DiffusionModel> {
    let name = cfg.string_or("model.name", "asian");
    if name != "custom" {
        let mu0 = match cfg.get("model.mu0") {
            Some(_) => Some(cfg.f64_req("model.mu0")?),
            None => None,
        };
        return builtin(&name, mu0);
    }
    let field = |prefix: &str| -> Result<PolyField> {
        let c = |i| {
            let key = format!("{prefix}.{i}");
            parse_poly(&key, cfg.get(&key).unwrap_or(""))
        };
        Ok(PolyField::new(c(1)?, c(2)?))
    };
    let domain = parse_box("model.domain", cfg.require("model.domain")?)?;
    let mut model = DiffusionModel::new(
        cfg.string_or("model.label", "custom"),
        Arc::new(field("model.sigma")?),
        Arc::new(field("model.drift")?),
        domain,
    );
    match cfg.string_or("model.h3", "none").as_str() {
        "derived" => model = model.with_kappa_from_derivatives(),
        "none" => {}
        other => {
            return Err(Error::Config(format!("'model.h3' must be 'derived' or 'none', got '{other}'")))
        }
    }
    if let Some(r) = cfg.get("model.reference") {
        model = model.with_reference_region(parse_box("model.reference", r)?);
    }
    if cfg.get("model.n_bound").is_some() || cfg.get("model.lambda_bound").is_some() {
        model = model.with_constant_bounds(
            cfg.f64_or("model.n_bound", 1.0)?,
            cfg.f64_or("model.lambda_bound", 1.0)?,
        );
    }
    Ok(model)
}

fn seed(cfg: &Config) -> Result<u64> {
    cfg.u64_or("seed", DEFAULT_SEED)
}

fn threads(cfg: &Config) -> Result<Option<usize>> {
    Ok(match cfg.usize_or("sim.threads", 0)? {
        0 => None,
        n => Some(n),
    })
}

fn control_from_config(cfg: &Config, prefix: &str, horizon: f64) -> Result<Control> {
    if let Some(pairs) = cfg.get(&format!("{prefix}.control.pairs")) {
        let mut out = Vec::new();
        for item in pairs.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (t, v) = item.split_once(':').ok_or_else(|| {
                Error::Config(format!("'{prefix}.control.pairs': '{item}' is not 'time:value'"))
            })?;
            out.push((
                super::config::parse_f64(prefix, t)?,
                super::config::parse_f64(prefix, v)?,
            ));
        }
        return Control::from_pairs(&out, horizon);
    }
    Control::preset(&cfg.string_or(&format!("{prefix}.control"), "zero"), horizon)
}

fn bound_constants(cfg: &Config) -> Result<BoundConstants> {
    let c = BoundConstants {
        k: cfg.f64_or("bounds.K", 1.0)?,
        q: cfg.f64_or("bounds.q", 1.0)?,
        mu: cfg.f64_or("bounds.mu", 1.0)?,
        h: cfg.f64_or("bounds.h", 1.0)?,
    };
    c.validate()?;
    Ok(c)
}

fn tube(cfg: &Config, model: &DiffusionModel) -> Result<Vec<Table>> {
    let horizon = cfg.f64_or("tube.T", 1.0)?;
    let radii = cfg.list_or("tube.radii", &[0.4, 0.2, 0.1, 0.05])?;
    let x0 = cfg.point_or("tube.x0", Point2::new(1.0, 0.0))?;
    let phi = control_from_config(cfg, "tube", horizon)?;
    let sim = SimConfig {
        dt: cfg.f64_or("sim.dt", 1e-3)?,
        n_paths: cfg.usize_or("sim.paths", 10_000)?,
        master_seed: seed(cfg)?,
        horizon,
        threads: threads(cfg)?,
    };
    let results = tube_probabilities(model, x0, &phi, &radii, &sim)?;

    let constants = bound_constants(cfg)?;
    let path = solve_skeleton(model, x0, &phi, cfg.usize_or("bounds.steps_per_knot", 8)?)?;
    let profiles = Profiles::along_skeleton(model, &path, &phi)?;
    let rs = r_star(&phi, &profiles.n, &profiles.lambda, &constants);
    info!("R_* = {rs}");

    let mut tube_t = Table::new("tube", &["R", "p_hat", "ci_low", "ci_high", "n_paths", "seed"]);
    let mut bounds_t = Table::new(
        "bounds",
        &["R", "lower", "upper", "mc_p_hat", "ci_low", "ci_high"],
    );
    let mut hist_t = Table::new("exit_times", &["R", "bin_start", "bin_end", "count"]);
    for r in &results {
        tube_t.push(vec![
            fmt_f64(r.r),
            fmt_f64(r.p_hat),
            fmt_f64(r.ci_low),
            fmt_f64(r.ci_high),
            r.n_paths.to_string(),
            r.seed.to_string(),
        ]);
        let lower = tube_lower_bound(&constants, r.r, &profiles, horizon)?;
        let upper = match tube_upper_bound(&constants, r.r, &profiles, horizon, rs) {
            Ok(u) => u,
            Err(Error::Validity { .. }) => f64::NAN,
            Err(e) => return Err(e),
        };
        bounds_t.push(vec![
            fmt_f64(r.r),
            fmt_f64(lower),
            fmt_f64(upper),
            fmt_f64(r.p_hat),
            fmt_f64(r.ci_low),
            fmt_f64(r.ci_high),
        ]);
        let w = horizon / EXIT_BINS as f64;
        for (b, &count) in r.exit_time_histogram.iter().enumerate() {
            hist_t.push(vec![
                fmt_f64(r.r),
                fmt_f64(b as f64 * w),
                fmt_f64((b + 1) as f64 * w),
                count.to_string(),
            ]);
        }
    }
    Ok(vec![tube_t, bounds_t, hist_t])
}

fn density(cfg: &Config, model: &DiffusionModel) -> Result<Vec<Table>> {
    let x = cfg.point_or("density.x", Point2::new(1.0, 1.0))?;
    let delta = cfg.f64_or("density.delta", 0.01)?;
    let radius = cfg.f64_or("density.grid_radius", 3.0)?;
    let grid_n = cfg.usize_or("density.grid_n", 41)?;
    let dt_ratio = cfg.f64_or("density.dt_ratio", 50.0)?;
    let mut deltas = vec![delta];
    if cfg.bool_or("density.refit_half", false)? {
        deltas.push(0.5 * delta);
    }
    let mut grid_t = Table::new("density_grid", &["z1", "z2", "p_hat", "lower_env", "upper_env"]);
    let mut fit_t = Table::new(
        "density_fit",
        &[
            "delta", "n_samples", "K1", "L1", "K2", "L2", "h1", "h2", "noise_floor",
            "non_gaussian_tail", "L1_half_bw", "L2_half_bw", "L1_double_bw", "L2_double_bw",
        ],
    );
    for (i, &d) in deltas.iter().enumerate() {
        let sim = SimConfig {
            dt: d / dt_ratio,
            n_paths: cfg.usize_or("sim.paths", 100_000)?,
            master_seed: seed(cfg)?,
            horizon: d,
            threads: threads(cfg)?,
        };
        let samples = rescaled_samples(model, x, &sim)?;
        let fit = density_fit_with(&samples.f, radius, grid_n, sim.threads)?;
        if i == 0 {
            for (z, &p) in fit.grid.iter().zip(&fit.p_hat) {
                grid_t.push(vec![
                    fmt_f64(z.x1),
                    fmt_f64(z.x2),
                    fmt_f64(p),
                    fmt_f64(fit.lower_env(*z)),
                    fmt_f64(fit.upper_env(*z)),
                ]);
            }
        }
        let s = &fit.sensitivity;
        fit_t.push(vec![
            fmt_f64(d),
            samples.f.len().to_string(),
            fmt_f64(fit.k1),
            fmt_f64(fit.l1),
            fmt_f64(fit.k2),
            fmt_f64(fit.l2),
            fmt_f64(fit.bandwidth.0),
            fmt_f64(fit.bandwidth.1),
            fmt_f64(fit.noise_floor),
            fit.non_gaussian_tail.to_string(),
            fmt_f64(s[0].l1),
            fmt_f64(s[0].l2),
            fmt_f64(s[1].l1),
            fmt_f64(s[1].l2),
        ]);
    }
    Ok(vec![grid_t, fit_t])
}

fn escape(cfg: &Config, model: &DiffusionModel) -> Result<Vec<Table>> {
    let x = cfg.point_or("escape.x", Point2::new(1.0, 1.0))?;
    let delta = cfg.f64_or("escape.delta", 0.01)?;
    let radii = cfg.list_or("escape.radii", &[0.1, 0.2, 0.4])?;
    let threshold = cfg.f64_or("escape.threshold", 0.5)?;
    let sim = SimConfig {
        dt: cfg.f64_or("sim.dt", delta / 100.0)?,
        n_paths: cfg.usize_or("sim.paths", 10_000)?,
        master_seed: seed(cfg)?,
        horizon: delta,
        threads: threads(cfg)?,
    };
    let mut t = Table::new(
        "escape",
        &["delta", "R", "threshold", "p_hat", "ci_low", "ci_high", "n_paths", "seed"],
    );
    for &r in &radii {
        let e = short_time_escape(model, x, r, threshold, &sim)?;
        t.push(vec![
            fmt_f64(delta),
            fmt_f64(r),
            fmt_f64(threshold),
            fmt_f64(e.p_hat),
            fmt_f64(e.ci_low),
            fmt_f64(e.ci_high),
            e.n_paths.to_string(),
            sim.master_seed.to_string(),
        ]);
    }
    Ok(vec![t])
}

fn norms_check(cfg: &Config, model: &DiffusionModel) -> Result<Vec<Table>> {
    let cases = cfg.usize_or("norms.cases", 10_000)?;
    let params = LocalityParams {
        delta_star: cfg.f64_or("norms.delta_star", LocalityParams::default().delta_star)?,
        rho: cfg.f64_or("norms.rho", LocalityParams::default().rho)?,
    };
    let reports = run_all(model, cases, seed(cfg)?, params)?;
    let mut t = Table::new(
        "lemmas",
        &["model", "suite", "cases", "violations", "worst", "limit", "passed"],
    );
    for r in reports {
        t.push(vec![
            model.name().to_string(),
            r.name.to_string(),
            r.cases.to_string(),
            r.violations.to_string(),
            fmt_f64(r.worst),
            fmt_f64(r.limit),
            r.passed().to_string(),
        ]);
    }
    Ok(vec![t])
}

fn control_metric(cfg: &Config, model: &DiffusionModel) -> Result<Vec<Table>> {
    let x = cfg.point_or("metric.x", Point2::new(1.0, 1.0))?;
    let radii = cfg.list_or("metric.radii", &[1e-3, 1e-2, 1e-1])?;
    let count = cfg.usize_or("metric.directions", 8)?;
    let defaults = DcOptions::default();
    let opts = DcOptions {
        intervals: cfg.usize_or("metric.intervals", defaults.intervals)?,
        restarts: cfg.usize_or("metric.restarts", defaults.restarts)?,
        penalty_schedule: cfg.list_or("metric.penalties", &defaults.penalty_schedule)?,
        steps: cfg.usize_or("metric.steps", defaults.steps)?,
        seed: seed(cfg)?,
        threads: threads(cfg)?,
        max_sweeps: cfg.usize_or("metric.sweeps", defaults.max_sweeps)?,
    };
    if let Some(y) = cfg.get("metric.y") {
        let y = super::config::parse_point("metric.y", y)?;
        let d = quasi_distance(model, x, y, 1e-12)?;
        let dc = dc_estimate(model, x, y, &opts)?;
        let rho2 = rho2_estimate(model, x, y)?;
        let mut t = Table::new(
            "dc",
            &["x1", "x2", "y1", "y2", "d", "d_c_upper", "endpoint_gap", "rho2", "saturated"],
        );
        t.push(vec![
            fmt_f64(x.x1),
            fmt_f64(x.x2),
            fmt_f64(y.x1),
            fmt_f64(y.x2),
            fmt_f64(d.d),
            fmt_f64(dc.upper_bound),
            fmt_f64(dc.endpoint_gap),
            fmt_f64(rho2),
            d.saturated.to_string(),
        ]);
        return Ok(vec![t]);
    }
    let dirs = frame_directions(model, x, count)?;
    let rows = equivalence_report(model, x, &dirs, &radii, &opts)?;
    let mut t = Table::new(
        "equivalence",
        &["direction", "radius", "d", "d_c_upper", "rho2", "d_over_dc", "rho2_over_d"],
    );
    for r in rows {
        t.push(vec![
            r.direction.to_string(),
            fmt_f64(r.radius),
            fmt_f64(r.d),
            fmt_f64(r.d_c_upper),
            fmt_f64(r.rho2),
            fmt_f64(r.d_over_dc()),
            fmt_f64(r.rho2_over_d()),
        ]);
    }
    Ok(vec![t])
}

/// Least-squares slope and intercept of `log y` against `log x`.
pub fn log_log_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// `E[|R̃_δ|²]^{1/2}` for each `δ`.
pub fn remainder_rms(
    model: &DiffusionModel,
    x: Point2,
    deltas: &[f64],
    dt_ratio: f64,
    n_paths: usize,
    seed: u64,
    threads: Option<usize>,
) -> Result<Vec<(f64, f64, usize)>> {
    deltas
        .iter()
        .map(|&d| {
            let sim = SimConfig {
                dt: d / dt_ratio,
                n_paths,
                master_seed: seed,
                horizon: d,
                threads,
            };
            let s = rescaled_samples(model, x, &sim)?;
            let ms = s.remainder.iter().map(|r| r.norm_sq()).sum::<f64>() / s.remainder.len() as f64;
            Ok((d, ms.sqrt(), s.exits))
        })
        .collect()
}

fn taylor_scaling(cfg: &Config, model: &DiffusionModel) -> Result<Vec<Table>> {
    let x = cfg.point_or("taylor.x", Point2::new(1.0, 1.0))?;
    let deltas = cfg.list_or("taylor.deltas", &[0.02, 0.04, 0.08, 0.16])?;
    let rows = remainder_rms(
        model,
        x,
        &deltas,
        cfg.f64_or("taylor.dt_ratio", 100.0)?,
        cfg.usize_or("sim.paths", 10_000)?,
        seed(cfg)?,
        threads(cfg)?,
    )?;
    let mut t = Table::new("remainder", &["delta", "rms_remainder", "exits"]);
    for &(d, rms, exits) in &rows {
        t.push(vec![fmt_f64(d), fmt_f64(rms), exits.to_string()]);
    }
    let (slope, intercept) = log_log_fit(
        &rows.iter().map(|r| r.0).collect::<Vec<_>>(),
        &rows.iter().map(|r| r.1).collect::<Vec<_>>(),
    );
    let mut fit = Table::new("remainder_fit", &["slope", "intercept"]);
    fit.push(vec![fmt_f64(slope), fmt_f64(intercept)]);
    Ok(vec![t, fit])
}

/// Runs the experiment named by `experiment` and returns its tables.
pub fn execute(cfg: &Config) -> Result<Vec<Table>> {
    let kind = cfg.require("experiment")?;
    let model = model_from_config(cfg)?;
    info!("experiment {kind} on model {}", model.name());
    match kind {
        "tube" => tube(cfg, &model),
        "density" => density(cfg, &model),
        "shorttime-escape" => escape(cfg, &model),
        "norms-check" => norms_check(cfg, &model),
        "control-metric" => control_metric(cfg, &model),
        "taylor-scaling" => taylor_scaling(cfg, &model),
        other => Err(Error::Config(format!(
            "unknown experiment '{other}' (expected one of {})",
            EXPERIMENTS.join(", ")
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn custom_model_from_config() {
        let cfg = Config::parse(
            "model.name = custom\nmodel.sigma.1 = 1:1:0\nmodel.drift.2 = 1:1:0\nmodel.domain = 0.001, 1000, -1000, 1000\nmodel.h3 = derived\n",
        )
        .unwrap();
        let m = model_from_config(&cfg).unwrap();
        let x = Point2::new(2.0, 0.5);
        assert_eq!(m.sigma(x).unwrap(), Point2::new(2.0, 0.0));
        assert_eq!(m.bracket(x).unwrap(), Point2::new(0.0, 2.0));
        assert!(m.has_h3());
    }

    #[test]
    fn bad_inputs_are_config_errors() {
        let mut cfg = Config::default();
        assert!(execute(&cfg).unwrap_err().is_config());
        cfg.set("experiment", "histogram");
        assert!(execute(&cfg).unwrap_err().is_config());
        cfg.set("experiment", "tube");
        cfg.set("model.name", "nope");
        assert!(execute(&cfg).unwrap_err().is_config());
    }

    #[test]
    fn log_log_slope() {
        let xs = [1.0, 2.0, 4.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(0.5)).collect();
        let (s, _) = log_log_fit(&xs, &ys);
        assert!((s - 0.5).abs() < 1e-12);
    }
}
