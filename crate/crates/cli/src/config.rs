//! Experiment configuration: TOML text in, range-checked [`ExperimentConfig`] out.

use std::fmt;
use std::path::PathBuf;
use std::sync::Arc;

use bergman_core::domains::{DomainSpec, NegLogBall, Potential, QuadraticPotential, WeightSpec};
use bergman_core::oracles::KeDomain;
use bergman_core::sequences::TsujiVariant;
use bergman_core::{Point, C64};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Kernel,
    Minint,
    Tyz,
    TianKe,
    Tsuji,
    OracleCompare,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Experiment::Kernel,
        Experiment::Minint,
        Experiment::Tyz,
        Experiment::TianKe,
        Experiment::Tsuji,
        Experiment::OracleCompare,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Kernel => "kernel",
            Experiment::Minint => "minint",
            Experiment::Tyz => "tyz",
            Experiment::TianKe => "tian-ke",
            Experiment::Tsuji => "tsuji",
            Experiment::OracleCompare => "oracle-compare",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.name() == s)
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainConfig {
    Disk { r: f64 },
    Ball { n: usize, r: f64 },
    Polydisc { radii: Vec<f64> },
    Annulus { r_in: f64, r_out: f64 },
    Ellipse { a: f64, b: f64 },
    Rectangle { x0: f64, x1: f64, y0: f64, y1: f64 },
}

impl Default for DomainConfig {
    fn default() -> Self {
        DomainConfig::Disk { r: 1.0 }
    }
}

impl DomainConfig {
    pub fn dim(&self) -> usize {
        match self {
            DomainConfig::Ball { n, .. } => *n,
            DomainConfig::Polydisc { radii } => radii.len(),
            _ => 1,
        }
    }

    pub fn build(&self) -> bergman_core::Result<DomainSpec> {
        match self {
            DomainConfig::Disk { r } => DomainSpec::disk(*r),
            DomainConfig::Ball { n, r } => DomainSpec::ball(*n, *r),
            DomainConfig::Polydisc { radii } => DomainSpec::polydisc(radii.clone()),
            DomainConfig::Annulus { r_in, r_out } => DomainSpec::annulus(*r_in, *r_out),
            DomainConfig::Ellipse { a, b } => DomainSpec::ellipse(*a, *b),
            DomainConfig::Rectangle { x0, x1, y0, y1 } => DomainSpec::rectangle(*x0, *x1, *y0, *y1),
        }
    }

    pub fn ke(&self) -> Option<KeDomain> {
        match self {
            DomainConfig::Disk { r } => Some(KeDomain::Ball { n: 1, r: *r }),
            DomainConfig::Ball { n, r } => Some(KeDomain::Ball { n: *n, r: *r }),
            DomainConfig::Polydisc { radii } => Some(KeDomain::Polydisc { radii: radii.clone() }),
            _ => None,
        }
    }

    /// `(n, r)` when the domain is a ball.
    pub fn ball(&self) -> Option<(usize, f64)> {
        match self {
            DomainConfig::Disk { r } => Some((1, *r)),
            DomainConfig::Ball { n, r } => Some((*n, *r)),
            _ => None,
        }
    }

    fn check(&self, errors: &mut Vec<ConfigError>) {
        let mut positive: Vec<(&str, f64)> = Vec::new();
        match self {
            DomainConfig::Disk { r } => positive.push(("r", *r)),
            DomainConfig::Ball { n, r } => {
                positive.push(("r", *r));
                if !(1..=4).contains(n) {
                    errors.push(ConfigError::range("domain.n", format!("must be in 1..=4, got {n}")));
                }
            }
            DomainConfig::Polydisc { radii } => {
                if radii.is_empty() || radii.len() > 3 {
                    errors.push(ConfigError::range("domain.radii", "needs 1 to 3 radii"));
                }
                positive.extend(radii.iter().map(|r| ("radii", *r)));
            }
            DomainConfig::Annulus { r_in, r_out } => {
                positive.extend([("r_in", *r_in), ("r_out", *r_out)]);
                if r_in >= r_out {
                    errors.push(ConfigError::range("domain.r_in", format!("must be below r_out, got {r_in} >= {r_out}")));
                }
            }
            DomainConfig::Ellipse { a, b } => positive.extend([("a", *a), ("b", *b)]),
            DomainConfig::Rectangle { x0, x1, y0, y1 } => {
                if !(x0 < x1 && y0 < y1) {
                    errors.push(ConfigError::range("domain", "rectangle needs x0 < x1 and y0 < y1"));
                }
            }
        }
        for (field, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                errors.push(ConfigError::range(format!("domain.{field}"), format!("must be positive, got {v}")));
            }
        }
    }
}

/// Weight of the kernel experiments, or the potential `φ` for `tyz`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightConfig {
    Unit,
    /// `(1 - |z|²/r²)^m` on a ball of radius `r`.
    RadialPower { m: u32 },
    /// `e^{-multiplier·φ}` with `φ = -c log(1 - |z|²/r²)`.
    NegLogBall {
        #[serde(default = "one")]
        c: f64,
        #[serde(default = "one")]
        multiplier: f64,
    },
    /// `e^{-multiplier·φ}` with `φ = c|z|²`.
    Quadratic {
        #[serde(default = "one")]
        c: f64,
        #[serde(default = "one")]
        multiplier: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl WeightConfig {
    pub fn potential(&self, domain: &DomainConfig) -> Option<Arc<dyn Potential>> {
        let n = domain.dim();
        match self {
            WeightConfig::NegLogBall { c, .. } => {
                let r = domain.ball().map(|b| b.1).unwrap_or(1.0);
                Some(Arc::new(NegLogBall { n, r, c: *c }))
            }
            WeightConfig::Quadratic { c, .. } => Some(Arc::new(QuadraticPotential { n, c: *c })),
            _ => None,
        }
    }

    pub fn build(&self, domain: &DomainConfig) -> WeightSpec {
        let r = domain.ball().map(|b| b.1).unwrap_or(1.0);
        match self {
            WeightConfig::Unit => WeightSpec::unit(),
            WeightConfig::RadialPower { m } => WeightSpec::radial_power(*m, r),
            WeightConfig::NegLogBall { multiplier, .. } | WeightConfig::Quadratic { multiplier, .. } => {
                WeightSpec::potential(self.potential(domain).expect("potential weight"), *multiplier)
            }
        }
    }

    /// The `m` column for kernel rows.
    pub fn level(&self) -> Option<usize> {
        match self {
            WeightConfig::Unit => Some(0),
            WeightConfig::RadialPower { m } => Some(*m as usize),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    /// Radial grid: fractions of the radius, each at a few phases.
    pub fractions: Vec<f64>,
    /// Additional points sampled uniformly with the run seed.
    pub random: usize,
    /// Explicit points as `[re_1, im_1, re_2, im_2, …]`.
    pub points: Vec<Vec<f64>>,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self { fractions: vec![0.0, 0.3, 0.6], random: 0, points: Vec::new() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub kernel_rel: f64,
    pub metric_rel: f64,
    pub hsc_abs: f64,
    pub fit_rel: f64,
    pub trend: f64,
    pub radial_spread: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { kernel_rel: 1e-8, metric_rel: 1e-6, hsc_abs: 1e-5, fit_rel: 0.02, trend: 1e-2, radial_spread: 1e-9 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub csv: PathBuf,
    pub json: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { csv: "results.csv".into(), json: "summary.json".into() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Normalized,
    Unnormalized,
}

impl From<&Variant> for TsujiVariant {
    fn from(v: &Variant) -> Self {
        match v {
            Variant::Normalized => TsujiVariant::Normalized,
            Variant::Unnormalized => TsujiVariant::Unnormalized,
        }
    }
}

/// A validated experiment. Optional fields are filled by [`validate_config`]
/// so the echoed config records every effective setting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Option<String>,
    pub seed: u64,
    pub domain: DomainConfig,
    pub weight: Option<WeightConfig>,
    pub m_list: Option<Vec<usize>>,
    pub steps: Option<usize>,
    pub variant: Option<Variant>,
    /// Base quadrature resolution.
    pub resolution: usize,
    /// Fixed polynomial degree; adaptive when absent.
    pub max_degree: Option<usize>,
    /// Upper bound for the adaptive degree.
    pub degree_cap: Option<usize>,
    /// Tsuji degree `degree_slope·m + degree_margin`.
    pub degree_slope: Option<usize>,
    pub degree_margin: Option<usize>,
    /// Tangent vector `X` as `[re_1, im_1, …]`.
    pub direction: Option<Vec<f64>>,
    pub probes: ProbeConfig,
    pub tolerances: Tolerances,
    pub output: OutputConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: None,
            seed: 0,
            domain: DomainConfig::default(),
            weight: None,
            m_list: None,
            steps: None,
            variant: None,
            resolution: 64,
            max_degree: None,
            degree_cap: None,
            degree_slope: None,
            degree_margin: None,
            direction: None,
            probes: ProbeConfig::default(),
            tolerances: Tolerances::default(),
            output: OutputConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn kind(&self) -> Experiment {
        self.experiment.as_deref().and_then(Experiment::from_name).expect("validated config")
    }

    pub fn weight(&self) -> &WeightConfig {
        self.weight.as_ref().expect("validated config")
    }

    pub fn m_list(&self) -> &[usize] {
        self.m_list.as_deref().unwrap_or(&[])
    }

    pub fn direction_vec(&self) -> Vec<C64> {
        pairs(self.direction.as_deref().unwrap_or(&[]))
    }

    pub fn explicit_points(&self) -> Vec<Point> {
        self.probes.points.iter().map(|p| pairs(p)).collect()
    }
}

fn pairs(v: &[f64]) -> Vec<C64> {
    v.chunks(2).map(|c| C64::new(c[0], c.get(1).copied().unwrap_or(0.0))).collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfigErrorKind {
    Parse,
    UnknownExperiment,
    Range,
    Conflict,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ConfigError {
    pub kind: ConfigErrorKind,
    pub field: String,
    pub message: String,
}

impl ConfigError {
    fn range(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self { kind: ConfigErrorKind::Range, field: field.into(), message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Parses and range-checks a config. `experiment` (from the subcommand)
/// fills the field when the text omits it and must agree when it does not.
pub fn validate_config(text: &str, experiment: Option<Experiment>) -> Result<ExperimentConfig, Vec<ConfigError>> {
    let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
        vec![ConfigError { kind: ConfigErrorKind::Parse, field: String::new(), message: e.message().to_string() }]
    })?;
    let mut errors = Vec::new();
    let kind = match (cfg.experiment.as_deref(), experiment) {
        (None, None) => {
            errors.push(ConfigError {
                kind: ConfigErrorKind::UnknownExperiment,
                field: "experiment".into(),
                message: "no experiment given".into(),
            });
            return Err(errors);
        }
        (None, Some(e)) => e,
        (Some(name), given) => match Experiment::from_name(name) {
            None => {
                let known: Vec<&str> = Experiment::ALL.iter().map(|e| e.name()).collect();
                errors.push(ConfigError {
                    kind: ConfigErrorKind::UnknownExperiment,
                    field: "experiment".into(),
                    message: format!("unknown experiment {name:?}, expected one of {}", known.join(", ")),
                });
                return Err(errors);
            }
            Some(e) => {
                if let Some(g) = given.filter(|g| *g != e) {
                    errors.push(ConfigError {
                        kind: ConfigErrorKind::Conflict,
                        field: "experiment".into(),
                        message: format!("config names {e} but the command is {g}"),
                    });
                }
                e
            }
        },
    };
    cfg.experiment = Some(kind.name().to_string());
    cfg.domain.check(&mut errors);
    let n = cfg.domain.dim();

    if cfg.resolution < 8 {
        errors.push(ConfigError::range("resolution", format!("must be at least 8, got {}", cfg.resolution)));
    }
    if cfg.max_degree.is_some() && cfg.degree_cap.is_some() {
        errors.push(ConfigError {
            kind: ConfigErrorKind::Conflict,
            field: "max_degree".into(),
            message: "give either max_degree or degree_cap".into(),
        });
    }

    // experiment-dependent defaults
    let weight = cfg.weight.get_or_insert(match kind {
        Experiment::Tyz => WeightConfig::NegLogBall { c: 1.0, multiplier: 1.0 },
        _ => WeightConfig::Unit,
    });
    match (kind, &*weight) {
        (Experiment::Tyz, WeightConfig::NegLogBall { .. } | WeightConfig::Quadratic { .. }) => {}
        (Experiment::Tyz, _) => {
            errors.push(ConfigError::range("weight.kind", "tyz needs a potential: neg_log_ball or quadratic"))
        }
        (_, WeightConfig::RadialPower { .. } | WeightConfig::NegLogBall { .. }) if cfg.domain.ball().is_none() => {
            errors.push(ConfigError::range("weight.kind", "radial_power and neg_log_ball weights need a ball domain"))
        }
        _ => {}
    }
    match weight {
        WeightConfig::NegLogBall { c, multiplier } | WeightConfig::Quadratic { c, multiplier } => {
            if !(c.is_finite() && *c > 0.0) {
                errors.push(ConfigError::range("weight.c", format!("must be positive, got {c}")));
            }
            if !(multiplier.is_finite() && *multiplier >= 0.0) {
                errors.push(ConfigError::range("weight.multiplier", format!("must be nonnegative, got {multiplier}")));
            }
        }
        _ => {}
    }

    let default_m: Option<Vec<usize>> = match kind {
        Experiment::Tyz => Some(vec![10, 20, 40, 80]),
        Experiment::TianKe => Some(vec![5, 10, 20, 40, 80]),
        Experiment::OracleCompare => Some((0..=5).collect()),
        _ => None,
    };
    if cfg.m_list.is_none() {
        cfg.m_list = default_m.clone();
    }
    if let Some(ms) = &cfg.m_list {
        if default_m.is_none() {
            errors.push(ConfigError::range("m_list", format!("not used by {kind}")));
        } else if ms.is_empty() {
            errors.push(ConfigError::range("m_list", "must not be empty"));
        } else if kind != Experiment::OracleCompare && ms.contains(&0) {
            errors.push(ConfigError::range("m_list", "levels start at m = 1"));
        }
    }
    if matches!(kind, Experiment::Tyz) && cfg.m_list.as_ref().is_some_and(|m| !m.is_empty() && m.len() < 3) {
        errors.push(ConfigError::range("m_list", "the expansion fit needs at least 3 levels"));
    }

    if kind == Experiment::Tsuji {
        let steps = *cfg.steps.get_or_insert(20);
        if steps == 0 || steps > 200 {
            errors.push(ConfigError::range("steps", format!("must be in 1..=200, got {steps}")));
        }
        cfg.variant.get_or_insert(Variant::Normalized);
        let base = bergman_core::sequences::TsujiOptions::for_dim(n);
        cfg.degree_slope.get_or_insert(base.degree_slope);
        cfg.degree_margin.get_or_insert(base.degree_margin);
        if !matches!(cfg.weight, Some(WeightConfig::Unit)) {
            errors.push(ConfigError::range("weight.kind", "tsuji starts from the unit weight"));
        }
    } else {
        for (field, set) in [
            ("steps", cfg.steps.is_some()),
            ("variant", cfg.variant.is_some()),
            ("degree_slope", cfg.degree_slope.is_some()),
            ("degree_margin", cfg.degree_margin.is_some()),
        ] {
            if set {
                errors.push(ConfigError::range(field, format!("only used by tsuji, not {kind}")));
            }
        }
    }
    if kind == Experiment::TianKe && cfg.max_degree.is_none() && cfg.degree_cap.is_none() {
        cfg.degree_cap = Some(3000);
    }
    if matches!(kind, Experiment::TianKe | Experiment::Tsuji | Experiment::OracleCompare) && cfg.domain.ke().is_none() {
        errors.push(ConfigError::range("domain.kind", format!("{kind} needs a ball, disk or polydisc")));
    }

    match &cfg.direction {
        None => {
            let mut x = vec![0.0; 2 * n];
            x[0] = 1.0;
            cfg.direction = Some(x);
        }
        Some(x) => {
            if x.len() != 2 * n || x.iter().all(|v| *v == 0.0) || !x.iter().all(|v| v.is_finite()) {
                errors.push(ConfigError::range("direction", format!("needs {} finite numbers, not all zero", 2 * n)));
            }
        }
    }
    for (i, f) in cfg.probes.fractions.iter().enumerate() {
        if !(0.0..1.0).contains(f) {
            errors.push(ConfigError::range(format!("probes.fractions[{i}]"), format!("must be in [0, 1), got {f}")));
        }
    }
    if cfg.probes.random > 10_000 {
        errors.push(ConfigError::range("probes.random", "at most 10000 random probes"));
    }
    let domain = cfg.domain.build().ok();
    for (i, p) in cfg.probes.points.iter().enumerate() {
        let field = format!("probes.points[{i}]");
        if p.len() != 2 * n {
            errors.push(ConfigError::range(field, format!("needs {} numbers", 2 * n)));
        } else if domain.as_ref().is_some_and(|d| !d.contains(&pairs(p))) {
            errors.push(ConfigError::range(field, "lies outside the domain"));
        }
    }
    let has_grid = !cfg.probes.fractions.is_empty() && cfg.domain.ke().is_some();
    if !has_grid && cfg.probes.points.is_empty() && cfg.probes.random == 0 {
        errors.push(ConfigError::range("probes", "no probe points: give fractions (ball/polydisc), points or random"));
    }
    let t = &cfg.tolerances;
    for (field, v) in [
        ("kernel_rel", t.kernel_rel),
        ("metric_rel", t.metric_rel),
        ("hsc_abs", t.hsc_abs),
        ("fit_rel", t.fit_rel),
        ("trend", t.trend),
        ("radial_spread", t.radial_spread),
    ] {
        if !(v.is_finite() && v > 0.0) {
            errors.push(ConfigError::range(format!("tolerances.{field}"), format!("must be positive, got {v}")));
        }
    }
    if errors.is_empty() {
        Ok(cfg)
    } else {
        Err(errors)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(errors: &[ConfigError]) -> Vec<(&str, &ConfigErrorKind)> {
        errors.iter().map(|e| (e.field.as_str(), &e.kind)).collect()
    }

    #[test]
    fn minimal_tsuji_config_gets_defaults() {
        let cfg = validate_config("", Some(Experiment::Tsuji)).unwrap();
        assert_eq!(cfg.steps, Some(20));
        assert_eq!(cfg.resolution, 64);
        assert_eq!(cfg.variant, Some(Variant::Normalized));
        assert_eq!(cfg.probes.fractions, vec![0.0, 0.3, 0.6]);
        assert_eq!(cfg.weight, Some(WeightConfig::Unit));
        assert_eq!(cfg.direction, Some(vec![1.0, 0.0]));
        assert_eq!(cfg.degree_margin, Some(4000));
    }

    #[test]
    fn experiment_name_in_text() {
        let cfg = validate_config("experiment = \"tian-ke\"", None).unwrap();
        assert_eq!(cfg.kind(), Experiment::TianKe);
        assert_eq!(cfg.m_list(), &[5, 10, 20, 40, 80]);
        assert_eq!(cfg.degree_cap, Some(3000));
    }

    #[test]
    fn unknown_experiment() {
        let errs = validate_config("experiment = \"foo\"", None).unwrap_err();
        assert_eq!(kinds(&errs), vec![("experiment", &ConfigErrorKind::UnknownExperiment)]);
        assert!(validate_config("", None).is_err());
    }

    #[test]
    fn command_and_text_must_agree() {
        let errs = validate_config("experiment = \"tyz\"", Some(Experiment::Kernel)).unwrap_err();
        assert_eq!(kinds(&errs), vec![("experiment", &ConfigErrorKind::Conflict)]);
    }

    #[test]
    fn annulus_radii_out_of_order() {
        let text = "[domain]\nkind = \"annulus\"\nr_in = 1.0\nr_out = 0.5\n[probes]\nrandom = 3\n";
        let errs = validate_config(text, Some(Experiment::Kernel)).unwrap_err();
        assert_eq!(kinds(&errs), vec![("domain.r_in", &ConfigErrorKind::Range)]);
    }

    #[test]
    fn empty_m_list() {
        let errs = validate_config("m_list = []", Some(Experiment::Tyz)).unwrap_err();
        assert_eq!(kinds(&errs), vec![("m_list", &ConfigErrorKind::Range)]);
    }

    #[test]
    fn errors_are_collected() {
        let text = "resolution = 4\nm_list = [0, 5]\n[tolerances]\nfit_rel = -1.0\n[domain]\nkind = \"ball\"\nn = 2\nr = -1.0\n";
        let errs = validate_config(text, Some(Experiment::TianKe)).unwrap_err();
        let fields: Vec<&str> = errs.iter().map(|e| e.field.as_str()).collect();
        for f in ["domain.r", "resolution", "m_list", "tolerances.fit_rel"] {
            assert!(fields.contains(&f), "{f} missing from {fields:?}");
        }
    }

    #[test]
    fn parse_errors_and_unknown_keys() {
        let errs = validate_config("steps = [", Some(Experiment::Tsuji)).unwrap_err();
        assert_eq!(errs[0].kind, ConfigErrorKind::Parse);
        let errs = validate_config("stepz = 3", Some(Experiment::Tsuji)).unwrap_err();
        assert_eq!(errs[0].kind, ConfigErrorKind::Parse);
    }

    #[test]
    fn settings_of_other_experiments_are_rejected() {
        let errs = validate_config("steps = 5", Some(Experiment::Kernel)).unwrap_err();
        assert_eq!(kinds(&errs), vec![("steps", &ConfigErrorKind::Range)]);
        let errs = validate_config("m_list = [1, 2, 3]", Some(Experiment::Minint)).unwrap_err();
        assert_eq!(kinds(&errs), vec![("m_list", &ConfigErrorKind::Range)]);
    }

    #[test]
    fn probes_and_weights_are_checked_against_the_domain() {
        let errs = validate_config("[probes]\npoints = [[0.9, 0.9]]", Some(Experiment::Kernel)).unwrap_err();
        assert_eq!(kinds(&errs), vec![("probes.points[0]", &ConfigErrorKind::Range)]);
        let text = "[domain]\nkind = \"ellipse\"\na = 2.0\nb = 1.0\n[weight]\nkind = \"radial_power\"\nm = 2\n[probes]\nrandom = 2\n";
        let errs = validate_config(text, Some(Experiment::Kernel)).unwrap_err();
        assert_eq!(kinds(&errs), vec![("weight.kind", &ConfigErrorKind::Range)]);
    }

    #[test]
    fn effective_config_round_trips() {
        let cfg = validate_config("[domain]\nkind = \"ball\"\nn = 2\nr = 1.0\n", Some(Experiment::Tyz)).unwrap();
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(validate_config(&text, None).unwrap(), cfg);
    }
}
