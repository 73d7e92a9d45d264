//! Experiment execution and artifact writing.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use bergman_core::domains::DomainSpec;
use bergman_core::geometry::{hsc_from_kernel, metric_from_kernel};
use bergman_core::kernel::{build_kernel, KernelModel, KernelOptions};
use bergman_core::minint::fuks_at;
use bergman_core::oracles::{
    fr_kernel, fr_metric_hsc, ln_tsuji_closed_form, ln_tsuji_normalized_closed_form, tian_ke_ratio, KeDomain,
};
use bergman_core::sequences::{
    fit_expansion_coefficient, log_trend, potential_curvature, radial_probes, tian_ke_sweep, tian_sweep, tsuji_error,
    tsuji_iterate, tsuji_rule, SequenceRecord, TsujiOptions, TsujiVariant,
};
use bergman_core::{Point, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::config::{DomainConfig, Experiment, ExperimentConfig, WeightConfig};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Numerics(#[from] bergman_core::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// One CSV line.
#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub m: Option<usize>,
    pub probe: Point,
    pub quantity: &'static str,
    pub computed: f64,
    pub oracle: Option<f64>,
}

impl Row {
    fn new(m: Option<usize>, probe: &[C64], quantity: &'static str, computed: f64, oracle: Option<f64>) -> Self {
        Self { m, probe: probe.to_vec(), quantity, computed, oracle }
    }

    pub fn abs_err(&self) -> Option<f64> {
        self.oracle.map(|o| (self.computed - o).abs())
    }

    pub fn rel_err(&self) -> Option<f64> {
        self.oracle.map(|o| ((self.computed - o) / o).abs())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    fn at_most(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self { name: name.into(), value, tolerance, pass: value <= tolerance }
    }
}

/// Everything an experiment produces before it is written out.
#[derive(Debug, Default)]
pub struct Outcome {
    pub rows: Vec<Row>,
    pub fits: Map<String, Value>,
    pub checks: Vec<Check>,
    pub extra: Map<String, Value>,
}

impl Outcome {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    fn sup<F: Fn(&Row) -> Option<f64>>(&self, quantity: &str, f: F) -> f64 {
        self.rows.iter().filter(|r| r.quantity == quantity).filter_map(f).fold(0.0, f64::max)
    }
}

/// The probe set: explicit points, the radial grid, then seeded random points.
pub fn probe_points(cfg: &ExperimentConfig, domain: &DomainSpec) -> Result<Vec<Point>, RunError> {
    let mut out = cfg.explicit_points();
    if let Some(ke) = cfg.domain.ke() {
        out.extend(radial_probes(&ke, &cfg.probes.fractions));
    }
    let n = domain.dim();
    let scale = domain.scale();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut attempts = 0usize;
    let mut accepted = 0usize;
    while accepted < cfg.probes.random {
        attempts += 1;
        if attempts > 1_000_000 {
            return Err(bergman_core::Error::Domain("could not sample probes inside the domain".into()).into());
        }
        let z: Point = (0..n).map(|_| C64::new(rng.gen_range(-scale..scale), rng.gen_range(-scale..scale))).collect();
        // keep samples away from the outer boundary
        let shrunk: Point = z.iter().map(|c| c / 0.75).collect();
        if domain.contains(&z) && domain.contains(&shrunk) {
            out.push(z);
            accepted += 1;
        }
    }
    Ok(out)
}

fn kernel_options(cfg: &ExperimentConfig) -> KernelOptions {
    KernelOptions {
        base_resolution: cfg.resolution,
        degree_cap: cfg.degree_cap,
        fixed_degree: cfg.max_degree,
        ..Default::default()
    }
}

/// Closed forms for `(K, g(X), H(X))` when the domain and weight have them.
fn closed_form(cfg: &ExperimentConfig, z: &[C64], x: &[C64]) -> Option<(f64, f64, f64)> {
    let m = match cfg.weight() {
        WeightConfig::Unit => 0,
        WeightConfig::RadialPower { m } => *m as usize,
        _ => return None,
    };
    match &cfg.domain {
        DomainConfig::Disk { .. } | DomainConfig::Ball { .. } => {
            let (n, r) = cfg.domain.ball()?;
            let k = fr_kernel(n, r, m, z).ok()?;
            let (g, h) = fr_metric_hsc(n, r, m, z, x).ok()?;
            Some((k, g, h))
        }
        DomainConfig::Polydisc { radii } if m == 0 => {
            let mut k = 1.0;
            let mut g = 0.0;
            let mut gsq_h = 0.0;
            for (j, r) in radii.iter().enumerate() {
                k *= fr_kernel(1, *r, 0, &z[j..=j]).ok()?;
                let (gj, hj) = fr_metric_hsc(1, *r, 0, &z[j..=j], &x[j..=j]).ok()?;
                g += gj;
                // R(X,X̄,X,X̄) of a product is the sum of the factors' terms
                gsq_h += hj * gj * gj;
            }
            Some((k, g, gsq_h / (g * g)))
        }
        _ => None,
    }
}

fn run_kernel(cfg: &ExperimentConfig, domain: &DomainSpec, probes: &[Point], x: &[C64]) -> Result<Outcome, RunError> {
    let model = build_kernel(domain, &cfg.weight().build(&cfg.domain), probes, &kernel_options(cfg))?;
    let m = cfg.weight().level();
    let mut out = Outcome::default();
    for z in probes {
        let oracle = closed_form(cfg, z, x);
        out.rows.push(Row::new(m, z, "kernel", model.diag(z)?, oracle.map(|o| o.0)));
        out.rows.push(Row::new(m, z, "metric", metric_from_kernel(&model, z, x)?, oracle.map(|o| o.1)));
        out.rows.push(Row::new(m, z, "hsc", hsc_from_kernel(&model, z, x)?, oracle.map(|o| o.2)));
    }
    describe_model(&mut out, &model);
    if closed_form(cfg, &probes[0], x).is_some() {
        let t = &cfg.tolerances;
        out.checks.push(Check::at_most("kernel_rel", out.sup("kernel", Row::rel_err), t.kernel_rel));
        out.checks.push(Check::at_most("metric_rel", out.sup("metric", Row::rel_err), t.metric_rel));
        out.checks.push(Check::at_most("hsc_abs", out.sup("hsc", Row::abs_err), t.hsc_abs));
    }
    Ok(out)
}

fn describe_model(out: &mut Outcome, model: &KernelModel) {
    out.extra.insert("degree".into(), json!(model.system.max_degree));
    out.extra.insert("basis_size".into(), json!(model.system.len()));
    out.extra.insert("truncation_change".into(), json!(model.truncation_change));
}

/// Bergman–Fuks values against the kernel route on the same system.
fn run_minint(cfg: &ExperimentConfig, domain: &DomainSpec, probes: &[Point], x: &[C64]) -> Result<Outcome, RunError> {
    let model = build_kernel(domain, &cfg.weight().build(&cfg.domain), probes, &kernel_options(cfg))?;
    let m = cfg.weight().level();
    let mut out = Outcome::default();
    let mut residual = 0.0f64;
    for z in probes {
        let (v, results) = fuks_at(&model.system, z, x)?;
        for (r, name) in results.iter().zip(["I0", "I1", "I2"]) {
            out.rows.push(Row::new(m, z, name, r.value, None));
            residual = residual.max(r.constraint_residual);
        }
        out.rows.push(Row::new(m, z, "kernel", v.kernel, Some(model.diag(z)?)));
        out.rows.push(Row::new(m, z, "metric", v.metric, Some(metric_from_kernel(&model, z, x)?)));
        out.rows.push(Row::new(m, z, "hsc", v.hsc, Some(hsc_from_kernel(&model, z, x)?)));
    }
    describe_model(&mut out, &model);
    out.extra.insert("max_constraint_residual".into(), json!(residual));
    let t = &cfg.tolerances;
    out.checks.push(Check::at_most("kernel_rel", out.sup("kernel", Row::rel_err), t.kernel_rel));
    out.checks.push(Check::at_most("metric_rel", out.sup("metric", Row::rel_err), t.metric_rel));
    out.checks.push(Check::at_most("hsc_abs", out.sup("hsc", Row::abs_err), t.hsc_abs));
    Ok(out)
}

fn sequence_rows(out: &mut Outcome, recs: &[SequenceRecord], names: [&'static str; 3]) {
    for r in recs {
        for p in &r.probes {
            out.rows.push(Row::new(Some(r.m), &p.point, names[0], p.kernel, Some(p.kernel_oracle)));
            out.rows.push(Row::new(Some(r.m), &p.point, names[1], p.metric, Some(p.metric_oracle)));
            out.rows.push(Row::new(Some(r.m), &p.point, names[2], p.hsc, Some(p.hsc_oracle)));
        }
    }
}

fn level_summary(recs: &[SequenceRecord]) -> Value {
    let levels: Vec<Value> = recs
        .iter()
        .map(|r| {
            json!({
                "m": r.m,
                "sup_kernel_error": r.sup_kernel_error,
                "sup_metric_error": r.sup_metric_error,
                "sup_hsc_error": r.sup_hsc_error,
                "degree": r.degree,
                "basis_size": r.basis_size,
                "runtime_s": r.runtime_s,
            })
        })
        .collect();
    Value::Array(levels)
}

/// Tian's sequence `e^{-mφ}` at every probe, with the `1/m` fit per probe.
fn run_tyz(cfg: &ExperimentConfig, domain: &DomainSpec, probes: &[Point], x: &[C64]) -> Result<Outcome, RunError> {
    let phi = cfg.weight().potential(&cfg.domain).expect("validated potential");
    let opts = kernel_options(cfg);
    let mut out = Outcome::default();
    let mut fits = Vec::new();
    let mut levels = Vec::new();
    let mut worst_fit = 0.0f64;
    for p in probes {
        let recs = tian_sweep(domain, phi.clone(), cfg.m_list(), p, x, &opts)?;
        sequence_rows(&mut out, &recs, ["kernel_ratio", "metric_ratio", "m_hsc"]);
        let s = potential_curvature(phi.as_ref(), p, x)?.scalar;
        let (s_hat, stderr) = fit_expansion_coefficient(&recs)?;
        let rel = if s.abs() > 1e-12 { ((s_hat - s) / s).abs() } else { (s_hat - s).abs() };
        worst_fit = worst_fit.max(rel);
        fits.push(json!({ "probe": point_json(p), "S_hat": s_hat, "stderr": stderr, "S": s, "rel_err": rel }));
        levels.push(json!({ "probe": point_json(p), "levels": level_summary(&recs) }));
    }
    out.fits.insert("S_hat".into(), fits[0]["S_hat"].clone());
    out.fits.insert("S".into(), fits[0]["S"].clone());
    out.fits.insert("per_probe".into(), Value::Array(fits));
    out.extra.insert("sweeps".into(), Value::Array(levels));
    out.checks.push(Check::at_most("S_hat_rel", worst_fit, cfg.tolerances.fit_rel));
    Ok(out)
}

/// Kernels of `det(g^{KE})^{-(m-1)}` against the KE volume form.
fn run_tian_ke(cfg: &ExperimentConfig, ke: &KeDomain, probes: &[Point], x: &[C64]) -> Result<Outcome, RunError> {
    let recs = tian_ke_sweep(ke, cfg.m_list(), probes, x, &kernel_options(cfg))?;
    let mut out = Outcome::default();
    sequence_rows(&mut out, &recs, ["kernel_root", "metric_over_m", "m_hsc"]);
    let mut spread = 0.0f64;
    let mut closed_dev = 0.0f64;
    let mut per_level = Vec::new();
    for r in &recs {
        let ratios: Vec<f64> = r.probes.iter().map(|p| p.kernel / p.kernel_oracle).collect();
        let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let closed = tian_ke_ratio(ke, r.m);
        spread = spread.max((hi - lo) / lo);
        closed_dev = closed_dev.max(ratios.iter().map(|q| ((q - closed) / closed).abs()).fold(0.0, f64::max));
        per_level.push(json!({ "m": r.m, "ratio": hi, "closed_form": closed, "rel_err": closed - 1.0 }));
    }
    out.fits.insert("ratio".into(), Value::Array(per_level));
    out.extra.insert("levels".into(), level_summary(&recs));
    out.checks.push(Check::at_most("ratio_spread", spread, cfg.tolerances.kernel_rel));
    out.checks.push(Check::at_most("ratio_vs_closed_form", closed_dev, cfg.tolerances.kernel_rel));
    Ok(out)
}

fn run_tsuji(cfg: &ExperimentConfig, domain: &DomainSpec, ke: &KeDomain, probes: &[Point]) -> Result<Outcome, RunError> {
    let steps = cfg.steps.expect("validated steps");
    let variant = TsujiVariant::from(cfg.variant.as_ref().expect("validated variant"));
    let opts = TsujiOptions {
        variant,
        degree_slope: cfg.degree_slope.expect("validated"),
        degree_margin: cfg.degree_margin.expect("validated"),
        base_resolution: cfg.resolution,
    };
    let rule = tsuji_rule(domain, steps, &opts)?;
    let states = tsuji_iterate(domain, steps, rule, &opts)?;
    let ball = cfg.domain.ball();
    let mut out = Outcome::default();
    let mut scaled = Vec::new();
    let mut spread = 0.0f64;
    let mut steps_json = Vec::new();
    for s in &states {
        for z in probes {
            let oracle = match (ball, variant) {
                (Some((n, r)), TsujiVariant::Normalized) => ln_tsuji_normalized_closed_form(n, s.m, z, r).ok(),
                (Some((n, r)), TsujiVariant::Unnormalized) => ln_tsuji_closed_form(n, s.m, z, r).ok(),
                _ => None,
            };
            out.rows.push(Row::new(Some(s.m), z, "ln_kernel", s.model.diag(z)?.ln(), oracle));
        }
        if variant == TsujiVariant::Normalized {
            let (errs, sup) = tsuji_error(s, ke, probes)?;
            for (z, e) in probes.iter().zip(errs) {
                out.rows.push(Row::new(Some(s.m), z, "tsuji_error", e, Some(0.0)));
            }
            scaled.push((s.m, s.m as f64 * sup));
        }
        spread = spread.max(s.radial_spread);
        steps_json.push(json!({
            "m": s.m,
            "normalization": s.normalization,
            "degree": s.model.system.max_degree,
            "basis_size": s.model.system.len(),
            "radial_spread": s.radial_spread,
        }));
    }
    out.extra.insert("steps".into(), Value::Array(steps_json));
    if !scaled.is_empty() {
        let bound = scaled.iter().map(|v| v.1).fold(0.0, f64::max);
        out.fits.insert("m_sup_error_bound".into(), json!(bound));
        out.fits.insert("m_sup_error".into(), json!(scaled.iter().map(|v| json!([v.0, v.1])).collect::<Vec<_>>()));
        if scaled.len() >= 2 {
            let trend = log_trend(&scaled)?;
            out.fits.insert("log_trend".into(), json!(trend));
            out.checks.push(Check::at_most("log_trend", trend, cfg.tolerances.trend));
        }
    }
    if ball.is_some() {
        out.checks.push(Check::at_most("ln_kernel_abs", out.sup("ln_kernel", Row::abs_err), cfg.tolerances.kernel_rel));
    }
    if domain.is_reinhardt() {
        out.checks.push(Check::at_most("radial_spread", spread, cfg.tolerances.radial_spread));
    }
    Ok(out)
}

/// Numerical kernels of `(1-|z|²/r²)^m` against the Forelli–Rudin closed form.
fn run_oracle_compare(cfg: &ExperimentConfig, domain: &DomainSpec, probes: &[Point], x: &[C64]) -> Result<Outcome, RunError> {
    let mut out = Outcome::default();
    for &m in cfg.m_list() {
        let weight = WeightConfig::RadialPower { m: m as u32 };
        if cfg.domain.ball().is_none() && m > 0 {
            continue;
        }
        let model = build_kernel(domain, &weight.build(&cfg.domain), probes, &kernel_options(cfg))?;
        let local = ExperimentConfig { weight: Some(weight), ..cfg.clone() };
        for z in probes {
            let (k, g, h) = closed_form(&local, z, x).expect("validated model domain");
            out.rows.push(Row::new(Some(m), z, "kernel", model.diag(z)?, Some(k)));
            out.rows.push(Row::new(Some(m), z, "metric", metric_from_kernel(&model, z, x)?, Some(g)));
            out.rows.push(Row::new(Some(m), z, "hsc", hsc_from_kernel(&model, z, x)?, Some(h)));
        }
    }
    let t = &cfg.tolerances;
    out.fits.insert("max_kernel_rel_err".into(), json!(out.sup("kernel", Row::rel_err)));
    out.checks.push(Check::at_most("kernel_rel", out.sup("kernel", Row::rel_err), t.kernel_rel));
    out.checks.push(Check::at_most("metric_rel", out.sup("metric", Row::rel_err), t.metric_rel));
    out.checks.push(Check::at_most("hsc_abs", out.sup("hsc", Row::abs_err), t.hsc_abs));
    Ok(out)
}

fn point_json(p: &[C64]) -> Value {
    Value::Array(p.iter().map(|c| json!([c.re, c.im])).collect())
}

/// Runs the experiment without writing anything.
pub fn execute(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let domain = cfg.domain.build()?;
    let probes = probe_points(cfg, &domain)?;
    let x = cfg.direction_vec();
    match cfg.kind() {
        Experiment::Kernel => run_kernel(cfg, &domain, &probes, &x),
        Experiment::Minint => run_minint(cfg, &domain, &probes, &x),
        Experiment::Tyz => run_tyz(cfg, &domain, &probes, &x),
        Experiment::TianKe => run_tian_ke(cfg, &cfg.domain.ke().expect("validated"), &probes, &x),
        Experiment::Tsuji => run_tsuji(cfg, &domain, &cfg.domain.ke().expect("validated"), &probes),
        Experiment::OracleCompare => run_oracle_compare(cfg, &domain, &probes, &x),
    }
}

pub fn write_csv(path: &Path, experiment: Experiment, n: usize, rows: &[Row]) -> Result<(), RunError> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["experiment".to_string(), "m".to_string()];
    for j in 0..n {
        let tag = if j == 0 { String::new() } else { (j + 1).to_string() };
        header.push(format!("probe{tag}_re"));
        header.push(format!("probe{tag}_im"));
    }
    header.extend(["quantity", "computed", "oracle", "abs_err", "rel_err"].map(String::from));
    w.write_record(&header)?;
    let opt = |v: Option<f64>| v.map(|v| format!("{v:e}")).unwrap_or_default();
    for r in rows {
        let mut rec = vec![experiment.name().to_string(), r.m.map(|m| m.to_string()).unwrap_or_default()];
        for c in &r.probe {
            rec.push(format!("{:e}", c.re));
            rec.push(format!("{:e}", c.im));
        }
        rec.push(r.quantity.to_string());
        rec.push(format!("{:e}", r.computed));
        rec.push(opt(r.oracle));
        rec.push(opt(r.abs_err()));
        rec.push(opt(r.rel_err()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Paths of the written artifacts.
#[derive(Clone, Debug)]
pub struct Artifacts {
    pub csv: Option<PathBuf>,
    pub json: PathBuf,
    pub pass: bool,
    pub failed: bool,
}

/// Runs `cfg` and writes the CSV and JSON summary under `out_dir`. A
/// numerical failure still writes the summary, with its `error` field set.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Artifacts, RunError> {
    fs::create_dir_all(out_dir)?;
    let csv_path = out_dir.join(&cfg.output.csv);
    let json_path = out_dir.join(&cfg.output.json);
    let started = Instant::now();
    let outcome = execute(cfg);
    let runtime = started.elapsed().as_secs_f64();
    let mut summary = Map::new();
    summary.insert("config".into(), serde_json::to_value(cfg)?);
    let (pass, failed, csv) = match outcome {
        Ok(o) => {
            write_csv(&csv_path, cfg.kind(), cfg.domain.dim(), &o.rows)?;
            let pass = o.pass();
            let mut results = o.extra;
            results.insert("rows".into(), json!(o.rows.len()));
            results.insert("checks".into(), serde_json::to_value(&o.checks)?);
            results.insert("runtime_s".into(), json!(runtime));
            summary.insert("results".into(), Value::Object(results));
            summary.insert("fits".into(), Value::Object(o.fits));
            summary.insert("pass".into(), json!(pass));
            (pass, false, Some(csv_path))
        }
        Err(e) => {
            let record = match &e {
                RunError::Numerics(inner) => json!({ "kind": "numerical", "message": inner.to_string(), "detail": format!("{inner:?}") }),
                other => json!({ "kind": "io", "message": other.to_string() }),
            };
            summary.insert("results".into(), json!({ "runtime_s": runtime }));
            summary.insert("fits".into(), json!({}));
            summary.insert("pass".into(), json!(false));
            summary.insert("error".into(), record);
            (false, true, None)
        }
    };
    fs::write(&json_path, serde_json::to_string_pretty(&Value::Object(summary))? + "\n")?;
    Ok(Artifacts { csv, json: json_path, pass, failed })
}
