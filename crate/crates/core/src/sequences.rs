//! Tian's sequence `e^{-mφ}` with its expansion checks, the Kähler–Einstein
//! weights `det(g^{KE})^{-(m-1)}`, and Tsuji's dynamical sequence.

use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::domains::{potential_jet, DomainSpec, Potential, WeightSpec};
use crate::error::{Error, Result};
use crate::geometry::{bochner_normal_map, curvature_from_jet, hsc_from_jet, hsc_from_kernel, metric_from_jet};
use crate::kernel::{build_kernel, build_orthonormal_system, KernelModel, KernelOptions};
use crate::numerics::{build_quadrature, radial_resolution, QuadratureRule};
use crate::oracles::{ke_oracle, ln_inv_d, tsuji_normalization, KeDomain, KePotential};
use crate::{Point, C64};

#[derive(Clone, Debug, Serialize)]
pub struct ProbeRecord {
    pub point: Point,
    pub kernel: f64,
    pub kernel_oracle: f64,
    pub metric: f64,
    pub metric_oracle: f64,
    pub hsc: f64,
    pub hsc_oracle: f64,
    /// `|kernel/kernel_oracle - 1|`
    pub kernel_error: f64,
    /// `|metric/metric_oracle - 1|`
    pub metric_error: f64,
    /// `|hsc - hsc_oracle|`
    pub hsc_error: f64,
}

impl ProbeRecord {
    fn new(point: Point, kernel: (f64, f64), metric: (f64, f64), hsc: (f64, f64)) -> Self {
        Self {
            point,
            kernel: kernel.0,
            kernel_oracle: kernel.1,
            metric: metric.0,
            metric_oracle: metric.1,
            hsc: hsc.0,
            hsc_oracle: hsc.1,
            kernel_error: (kernel.0 / kernel.1 - 1.0).abs(),
            metric_error: (metric.0 / metric.1 - 1.0).abs(),
            hsc_error: (hsc.0 - hsc.1).abs(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SequenceRecord {
    pub m: usize,
    pub probes: Vec<ProbeRecord>,
    pub sup_kernel_error: f64,
    pub sup_metric_error: f64,
    pub sup_hsc_error: f64,
    pub degree: usize,
    pub basis_size: usize,
    pub truncation_change: Option<f64>,
    pub runtime_s: f64,
}

impl SequenceRecord {
    fn new(m: usize, probes: Vec<ProbeRecord>, model: &KernelModel, started: Instant) -> Self {
        let sup = |f: fn(&ProbeRecord) -> f64| probes.iter().map(f).fold(0.0, f64::max);
        Self {
            m,
            sup_kernel_error: sup(|p| p.kernel_error),
            sup_metric_error: sup(|p| p.metric_error),
            sup_hsc_error: sup(|p| p.hsc_error),
            probes,
            degree: model.system.max_degree,
            basis_size: model.system.len(),
            truncation_change: model.truncation_change,
            runtime_s: started.elapsed().as_secs_f64(),
        }
    }
}

/// Curvatures of `i∂∂̄φ` at `p` used by the expansion: `(S, R(X), H(X), g_φ(X), det φ_{kl̄})`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct PotentialCurvature {
    pub scalar: f64,
    pub ricci: f64,
    pub hsc: f64,
    pub metric: f64,
    pub det: f64,
}

pub fn potential_curvature(phi: &dyn Potential, p: &[C64], x: &[C64]) -> Result<PotentialCurvature> {
    let jet = potential_jet(phi, p)?;
    let map = bochner_normal_map(&jet)?;
    let curv = curvature_from_jet(&map, x)?;
    Ok(PotentialCurvature {
        scalar: curv.scalar,
        ricci: curv.ricci_along,
        hsc: curv.hsc,
        metric: metric_from_jet(&jet, x),
        det: map.hessian.determinant().re,
    })
}

/// For each `m`, builds the kernel of `e^{-mφ}` and records at `p`
/// `K e^{-mφ} (π/m)ⁿ / det φ_{kl̄}` against `1 - S/2m`,
/// `g/(m g_φ)` against `1 - R(X)/m` and `mH` against `H_φ`.
pub fn tian_sweep(
    domain: &DomainSpec,
    phi: Arc<dyn Potential>,
    m_list: &[usize],
    p: &[C64],
    x: &[C64],
    opts: &KernelOptions,
) -> Result<Vec<SequenceRecord>> {
    let n = domain.dim();
    if phi.dim() != n || p.len() != n || x.len() != n {
        return Err(Error::InvalidArgument("potential, point and direction dimensions must match the domain".into()));
    }
    let pc = potential_curvature(phi.as_ref(), p, x)?;
    let phi_p = phi.value(p);
    m_list
        .par_iter()
        .map(|&m| {
            let started = Instant::now();
            let mf = m as f64;
            let weight = WeightSpec::potential(phi.clone(), mf);
            let model = build_kernel(domain, &weight, &[p.to_vec()], opts)?;
            let k = model.diag(p)?;
            let jet = model.log_kernel_jet(p)?;
            let ln_ratio = k.ln() - mf * phi_p - pc.det.ln() + n as f64 * (std::f64::consts::PI / mf).ln();
            let g = metric_from_jet(&jet, x);
            let h = hsc_from_jet(&jet, x)?;
            let rec = ProbeRecord::new(
                p.to_vec(),
                (ln_ratio.exp(), 1.0 - pc.scalar / (2.0 * mf)),
                (g / (mf * pc.metric), 1.0 - pc.ricci / mf),
                (mf * h, pc.hsc),
            );
            Ok(SequenceRecord::new(m, vec![rec], &model, started))
        })
        .collect()
}

/// Fit of `ratio - 1 = a/m + b/m²` over the records' first probes;
/// returns `(S_hat, stderr)` with `S_hat = -2a`.
pub fn fit_expansion_coefficient(records: &[SequenceRecord]) -> Result<(f64, f64)> {
    let mut pts: Vec<(f64, f64)> = Vec::new();
    for r in records {
        let probe = r.probes.first().ok_or_else(|| Error::InsufficientData("record without probes".into()))?;
        let x = 1.0 / r.m as f64;
        if !pts.iter().any(|(px, _)| *px == x) {
            pts.push((x, probe.kernel - 1.0));
        }
    }
    if pts.len() < 3 {
        return Err(Error::InsufficientData(format!("{} distinct levels, need at least 3", pts.len())));
    }
    // normal equations for the basis (x, x²)
    let (mut s11, mut s12, mut s22, mut t1, mut t2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(x, y) in &pts {
        s11 += x * x;
        s12 += x * x * x;
        s22 += x * x * x * x;
        t1 += x * y;
        t2 += x * x * y;
    }
    let det = s11 * s22 - s12 * s12;
    let a = (t1 * s22 - t2 * s12) / det;
    let b = (s11 * t2 - s12 * t1) / det;
    let rss: f64 = pts.iter().map(|&(x, y)| (y - a * x - b * x * x).powi(2)).sum();
    let sigma2 = rss / (pts.len() - 2) as f64;
    let var_a = sigma2 * s22 / det;
    Ok((-2.0 * a, 2.0 * var_a.max(0.0).sqrt()))
}

pub fn domain_of(ke: &KeDomain) -> Result<DomainSpec> {
    match ke {
        KeDomain::Ball { n, r } => DomainSpec::ball(*n, *r),
        KeDomain::Polydisc { radii } => DomainSpec::polydisc(radii.clone()),
    }
}

/// Points `t·r·e^{iθ}·v` for each fraction `t`, a few phases `θ`, and the
/// unit directions `v` along the first axis and the diagonal.
pub fn radial_probes(ke: &KeDomain, fractions: &[f64]) -> Vec<Point> {
    let n = ke.dim();
    let r = match ke {
        KeDomain::Ball { r, .. } => *r,
        KeDomain::Polydisc { radii } => radii.iter().copied().fold(f64::INFINITY, f64::min),
    };
    let mut dirs = vec![{
        let mut v = vec![C64::new(0.0, 0.0); n];
        v[0] = C64::new(1.0, 0.0);
        v
    }];
    if n > 1 {
        let s = match ke {
            KeDomain::Ball { .. } => 1.0 / (n as f64).sqrt(),
            KeDomain::Polydisc { .. } => 1.0,
        };
        dirs.push(vec![C64::new(s, 0.0); n]);
    }
    let mut out: Vec<Point> = Vec::new();
    for &t in fractions {
        for d in &dirs {
            for theta in [0.0, 1.1, 2.7] {
                let e = C64::from_polar(t * r, theta);
                let z: Point = d.iter().map(|c| c * e).collect();
                if !out.iter().any(|q| q.iter().zip(&z).all(|(a, b)| (a - b).norm() < 1e-15)) {
                    out.push(z);
                }
            }
        }
    }
    out
}

/// For each `m`, the kernel of `det(g^{KE})^{-(m-1)}` and the normalized
/// `K^{1/m}`, `g/m`, `mH` against `det g^{KE}`, `g^{KE}(X)`, `H^{KE}(X)`.
pub fn tian_ke_sweep(
    ke: &KeDomain,
    m_list: &[usize],
    probes: &[Point],
    x: &[C64],
    opts: &KernelOptions,
) -> Result<Vec<SequenceRecord>> {
    let domain = domain_of(ke)?;
    let phi: Arc<dyn Potential> = Arc::new(KePotential { domain: ke.clone() });
    if m_list.contains(&0) {
        return Err(Error::InvalidArgument("levels start at m = 1".into()));
    }
    let oracle: Vec<(f64, f64, f64)> = probes
        .iter()
        .map(|z| {
            let data = ke_oracle(ke, z)?;
            let jet = potential_jet(phi.as_ref(), z)?;
            Ok((data.potential, data.metric_along(x), hsc_from_jet(&jet, x)?))
        })
        .collect::<Result<_>>()?;
    m_list
        .par_iter()
        .map(|&m| {
            let started = Instant::now();
            let mf = m as f64;
            let weight = WeightSpec::potential(phi.clone(), mf - 1.0);
            let model = build_kernel(&domain, &weight, probes, opts)?;
            let recs = probes
                .iter()
                .zip(&oracle)
                .map(|(z, &(ln_det, g_ke, h_ke))| {
                    let jet = model.log_kernel_jet(z)?;
                    let k = model.diag(z)?;
                    let h = hsc_from_kernel(&model, z, x)?;
                    Ok(ProbeRecord::new(
                        z.clone(),
                        ((k.ln() / mf).exp(), ln_det.exp()),
                        (metric_from_jet(&jet, x) / mf, g_ke),
                        (mf * h, h_ke),
                    ))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(SequenceRecord::new(m, recs, &model, started))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum TsujiVariant {
    /// `μ̃_{m+1} = C_m / K̃_m`
    Normalized,
    /// `μ_{m+1} = 1 / K_m`
    Unnormalized,
}

/// Settings for [`tsuji_iterate`]. Step `m` uses polynomials of degree
/// `degree_slope·m + degree_margin`.
#[derive(Clone, Debug)]
pub struct TsujiOptions {
    pub variant: TsujiVariant,
    pub degree_slope: usize,
    pub degree_margin: usize,
    pub base_resolution: usize,
}

impl Default for TsujiOptions {
    fn default() -> Self {
        Self { variant: TsujiVariant::Normalized, degree_slope: 8, degree_margin: 40, base_resolution: 32 }
    }
}

impl TsujiOptions {
    /// Defaults by dimension. The truncated kernel is inaccurate in a
    /// boundary layer of width `O(m/D)`, and the next weight inherits that
    /// error, so one-dimensional runs use a large margin.
    pub fn for_dim(n: usize) -> Self {
        let margin = if n == 1 { 4000 } else { 40 };
        Self { degree_margin: margin, ..Self::default() }
    }

    pub fn degree(&self, m: usize) -> usize {
        self.degree_slope * m + self.degree_margin
    }
}

#[derive(Clone, Debug)]
pub struct TsujiState {
    pub m: usize,
    pub variant: TsujiVariant,
    /// `μ̃_m` tabulated on the shared rule.
    pub weight: WeightSpec,
    /// Kernel `K̃_m` of `μ̃_m`.
    pub model: KernelModel,
    /// `C_m = (m/π)ⁿ(1 - n/2m)`.
    pub normalization: f64,
    /// Largest `|log K̃_m(Rz) - log K̃_m(z)|` over rotated node copies.
    pub radial_spread: f64,
}

/// The rule shared by every step of a run with `steps` levels.
pub fn tsuji_rule(domain: &DomainSpec, steps: usize, opts: &TsujiOptions) -> Result<Arc<QuadratureRule>> {
    let n = domain.dim();
    let res = if domain.is_reinhardt() {
        radial_resolution(opts.base_resolution, n, opts.degree(steps), (n + 1) * steps.saturating_sub(1))
    } else {
        opts.base_resolution
    };
    Ok(Arc::new(build_quadrature(domain, res)?))
}

fn rotations(n: usize) -> Vec<Vec<C64>> {
    [0.7, 2.3, 4.1]
        .iter()
        .map(|&t| (0..n).map(|j| C64::from_polar(1.0, t * (j + 1) as f64)).collect())
        .collect()
}

/// Runs `steps` levels of the dynamical sequence from `μ̃_1 = 1` on one
/// fixed rule.
pub fn tsuji_iterate(
    domain: &DomainSpec,
    steps: usize,
    rule: Arc<QuadratureRule>,
    opts: &TsujiOptions,
) -> Result<Vec<TsujiState>> {
    if steps == 0 {
        return Err(Error::InvalidArgument("at least one step is needed".into()));
    }
    if domain.volume().is_none() && !matches!(domain, DomainSpec::GeneralPlanar(_)) {
        return Err(Error::Domain("the domain must be bounded".into()));
    }
    let n = domain.dim();
    let radial = domain.is_reinhardt();
    let rots = if radial { rotations(n) } else { Vec::new() };
    let mut ln_mu = vec![0.0; rule.len()];
    let mut states = Vec::with_capacity(steps);
    for m in 1..=steps {
        let weight = WeightSpec::tabulated_ln(&rule, ln_mu.clone(), radial)
            .map_err(|e| Error::IterationFailure { step: m, reason: e.to_string() })?;
        let sys = build_orthonormal_system(domain, &weight, opts.degree(m), None, rule.clone())
            .map_err(|e| Error::IterationFailure { step: m, reason: e.to_string() })?;
        let model = KernelModel::new(sys);
        let ln_k: Vec<f64> = rule
            .nodes
            .par_iter()
            .map(|z| model.diag(z).map(f64::ln))
            .collect::<Result<_>>()?;
        if let Some((i, v)) = ln_k.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::IterationFailure { step: m, reason: format!("log K = {v} at node {i}") });
        }
        let mut spread = 0.0f64;
        for (z, lk) in rule.nodes.iter().zip(&ln_k).step_by((rule.len() / 64).max(1)) {
            for rot in &rots {
                let w: Vec<C64> = z.iter().zip(rot).map(|(a, b)| a * b).collect();
                spread = spread.max((model.diag(&w)?.ln() - lk).abs());
            }
        }
        let c = tsuji_normalization(n, m);
        let ln_c = match opts.variant {
            TsujiVariant::Unnormalized => 0.0,
            TsujiVariant::Normalized => {
                if c <= 0.0 && m < steps {
                    return Err(Error::IterationFailure {
                        step: m,
                        reason: format!("normalization C_{m} = {c} is not positive"),
                    });
                }
                c.ln()
            }
        };
        ln_mu = ln_k.iter().map(|lk| ln_c - lk).collect();
        states.push(TsujiState { m, variant: opts.variant, weight, model, normalization: c, radial_spread: spread });
    }
    Ok(states)
}

/// `(1/m) log(K̃_m(z)/C_m) - log det g^{KE}(z)` at each probe and the sup of
/// the absolute values.
pub fn tsuji_error(state: &TsujiState, ke: &KeDomain, probes: &[Point]) -> Result<(Vec<f64>, f64)> {
    let c = state.normalization;
    if c <= 0.0 {
        return Err(Error::IterationFailure { step: state.m, reason: format!("C_{} = {c} is not positive", state.m) });
    }
    let errs: Vec<f64> = probes
        .iter()
        .map(|z| {
            let k = state.model.diag(z)?;
            Ok((k.ln() - c.ln()) / state.m as f64 - ke_oracle(ke, z)?.potential)
        })
        .collect::<Result<_>>()?;
    let sup = errs.iter().map(|e| e.abs()).fold(0.0, f64::max);
    Ok((errs, sup))
}

/// Least-squares slope of `values` against `log m`; a sequence bounded
/// like `O(1)` has slope near zero, one growing like `c log m` has slope `c`.
pub fn log_trend(values: &[(usize, f64)]) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::InsufficientData("need at least two levels".into()));
    }
    let n = values.len() as f64;
    let mx = values.iter().map(|(m, _)| (*m as f64).ln()).sum::<f64>() / n;
    let my = values.iter().map(|(_, v)| v).sum::<f64>() / n;
    let (mut num, mut den) = (0.0, 0.0);
    for (m, v) in values {
        let x = (*m as f64).ln() - mx;
        num += x * (v - my);
        den += x * x;
    }
    Ok(num / den)
}

/// Log-space bracket of the ratio lemma for the unnormalized sequence.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct RatioBounds {
    /// `log D_m`, `1/D_m = (mn+m-1)!/((m-1)!(n+1)^{m-1})`
    pub ln_d: f64,
    /// `log((πr²)^{nm} D_m / C^m)`
    pub ln_lower: f64,
    /// `log(C^m π^{nm} D_m)`
    pub ln_upper: f64,
}

pub fn ratio_bounds(n: usize, r: f64, m: usize, c: f64) -> Result<RatioBounds> {
    if m == 0 || n == 0 {
        return Err(Error::InvalidArgument("n and m must be at least 1".into()));
    }
    if !(c > 0.0 && r > 0.0) {
        return Err(Error::InvalidArgument("C and r must be positive".into()));
    }
    let ln_d = -ln_inv_d(n, m);
    let nm = (n * m) as f64;
    let pi = std::f64::consts::PI;
    Ok(RatioBounds {
        ln_d,
        ln_lower: nm * (pi * r * r).ln() + ln_d - m as f64 * c.ln(),
        ln_upper: m as f64 * c.ln() + nm * pi.ln() + ln_d,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::NegLogBall;
    use crate::oracles::{ln_tsuji_closed_form, ln_tsuji_normalized_closed_form, tian_ke_ratio};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn disk_tian_sweep_center() {
        let disk = DomainSpec::disk(1.0).unwrap();
        let recs = tian_sweep(
            &disk,
            Arc::new(NegLogBall::unit(1)),
            &[3, 10, 20],
            &[c(0.0, 0.0)],
            &[c(1.0, 0.0)],
            &KernelOptions::default(),
        )
        .unwrap();
        for r in &recs {
            let m = r.m as f64;
            let p = &r.probes[0];
            assert_relative_eq!(p.kernel, (m + 1.0) / m, max_relative = 1e-10);
            assert_relative_eq!(p.kernel_oracle, (m + 1.0) / m, max_relative = 1e-14);
            assert_relative_eq!(p.metric, (m + 2.0) / m, max_relative = 1e-9);
            assert_relative_eq!(p.hsc, -2.0 * m / (m + 2.0), max_relative = 1e-8);
        }
        let (s, err) = fit_expansion_coefficient(&recs).unwrap();
        assert_relative_eq!(s, -2.0, max_relative = 1e-8);
        assert!(err < 1e-8);
    }

    #[test]
    fn fit_of_constant_ratio_is_zero() {
        let disk = DomainSpec::disk(1.0).unwrap();
        let mut recs = tian_sweep(
            &disk,
            Arc::new(NegLogBall::unit(1)),
            &[2, 4, 8],
            &[c(0.0, 0.0)],
            &[c(1.0, 0.0)],
            &KernelOptions::default(),
        )
        .unwrap();
        for r in &mut recs {
            r.probes[0].kernel = 1.0;
        }
        assert_eq!(fit_expansion_coefficient(&recs).unwrap().0, 0.0);
        assert!(matches!(fit_expansion_coefficient(&recs[..2]), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn disk_ke_ratio_is_constant() {
        let ke = KeDomain::Ball { n: 1, r: 1.0 };
        let probes = radial_probes(&ke, &[0.0, 0.5, 0.8]);
        let recs = tian_ke_sweep(&ke, &[5], &probes, &[c(1.0, 0.0)], &KernelOptions::default()).unwrap();
        let want = tian_ke_ratio(&ke, 5);
        assert_relative_eq!(want, 2f64.powf(-0.2) * (9.0 / PI).powf(0.2), max_relative = 1e-14);
        for p in &recs[0].probes {
            assert_relative_eq!(p.kernel / p.kernel_oracle, want, max_relative = 1e-9);
        }
    }

    #[test]
    fn normalized_disk_iteration_matches_closed_form() {
        let disk = DomainSpec::disk(1.0).unwrap();
        let opts = TsujiOptions { degree_margin: 400, ..Default::default() };
        let rule = tsuji_rule(&disk, 4, &opts).unwrap();
        let states = tsuji_iterate(&disk, 4, rule, &opts).unwrap();
        // μ̃_2 = (1-|z|²)²/2 and K̃_2(0) = 6/π; the truncated K̃_1 near the
        // boundary perturbs μ̃_2 by O(D⁻³)
        assert_relative_eq!(states[1].model.diag(&[c(0.0, 0.0)]).unwrap(), 6.0 / PI, max_relative = 1e-6);
        let ke = KeDomain::Ball { n: 1, r: 1.0 };
        let probes = radial_probes(&ke, &[0.0, 0.3, 0.6]);
        let tol = [1e-13, 5e-5, 5e-4, 2e-3];
        for (s, tol) in states.iter().zip(tol) {
            assert!(s.radial_spread < 1e-12);
            for z in &probes {
                let want = ln_tsuji_normalized_closed_form(1, s.m, z, 1.0).unwrap();
                let got = s.model.diag(z).unwrap().ln();
                assert!((got - want).abs() < tol, "m={} z={z:?}: {got} vs {want}", s.m);
            }
            let (errs, sup) = tsuji_error(s, &ke, &probes).unwrap();
            assert!(errs.iter().all(|e| e.abs() <= sup));
            assert!(sup < tol, "m={} sup={sup}", s.m);
        }
    }

    #[test]
    fn truncation_error_shrinks_with_degree() {
        let disk = DomainSpec::disk(1.0).unwrap();
        let err = |margin| {
            let opts = TsujiOptions { degree_margin: margin, ..Default::default() };
            let rule = tsuji_rule(&disk, 3, &opts).unwrap();
            let s = tsuji_iterate(&disk, 3, rule, &opts).unwrap().pop().unwrap();
            let z = [c(0.0, 0.0)];
            (s.model.diag(&z).unwrap().ln() - ln_tsuji_normalized_closed_form(1, 3, &z, 1.0).unwrap()).abs()
        };
        let (coarse, fine) = (err(100), err(400));
        assert!(fine < coarse / 20.0, "{coarse:e} -> {fine:e}");
    }

    #[test]
    fn unnormalized_disk_iteration_matches_product() {
        let disk = DomainSpec::disk(1.0).unwrap();
        let opts = TsujiOptions { variant: TsujiVariant::Unnormalized, degree_margin: 400, ..Default::default() };
        let rule = tsuji_rule(&disk, 3, &opts).unwrap();
        let states = tsuji_iterate(&disk, 3, rule, &opts).unwrap();
        let z = [c(0.0, 0.0)];
        for (s, tol) in states.iter().zip([1e-13, 1e-6, 1e-5]) {
            let want = ln_tsuji_closed_form(1, s.m, &z, 1.0).unwrap();
            assert!((s.model.diag(&z).unwrap().ln() - want).abs() < tol, "m={}", s.m);
            let d = ratio_bounds(1, 1.0, s.m, 1.0).unwrap().ln_d;
            assert_relative_eq!(want, -d - s.m as f64 * PI.ln(), max_relative = 1e-12);
        }
    }

    #[test]
    fn unnormalized_ball_first_steps() {
        let ball = DomainSpec::ball(2, 1.0).unwrap();
        let opts = TsujiOptions {
            variant: TsujiVariant::Unnormalized,
            degree_slope: 3,
            degree_margin: 20,
            base_resolution: 16,
        };
        let rule = tsuji_rule(&ball, 2, &opts).unwrap();
        let states = tsuji_iterate(&ball, 2, rule, &opts).unwrap();
        let z = [c(0.0, 0.0); 2];
        assert_relative_eq!(states[0].model.diag(&z).unwrap(), 2.0 / PI.powi(2), max_relative = 1e-13);
        // degree 26 leaves a boundary-layer error of a few parts in 10³
        let want = ln_tsuji_closed_form(2, 2, &z, 1.0).unwrap();
        assert!((states[1].model.diag(&z).unwrap().ln() - want).abs() < 1e-2);
        assert_relative_eq!(want, -ratio_bounds(2, 1.0, 2, 1.0).unwrap().ln_d - 4.0 * PI.ln(), max_relative = 1e-12);
    }

    #[test]
    fn normalized_ball_iteration_stops_at_zero_normalization() {
        let ball = DomainSpec::ball(2, 1.0).unwrap();
        let opts = TsujiOptions { degree_slope: 3, degree_margin: 4, base_resolution: 8, ..Default::default() };
        let rule = tsuji_rule(&ball, 3, &opts).unwrap();
        let err = tsuji_iterate(&ball, 3, rule, &opts).unwrap_err();
        assert!(matches!(err, Error::IterationFailure { step: 1, .. }));
    }

    #[test]
    fn ratio_bound_constants() {
        assert_relative_eq!(ratio_bounds(1, 1.0, 2, 1.0).unwrap().ln_d.exp(), 1.0 / 3.0, max_relative = 1e-14);
        assert_relative_eq!(ratio_bounds(3, 1.0, 1, 1.0).unwrap().ln_d.exp(), 1.0 / 6.0, max_relative = 1e-14);
        let b = ratio_bounds(1, 1.0, 2, 1.0).unwrap();
        assert_relative_eq!((-b.ln_d).exp() / PI.powi(2), 3.0 / PI.powi(2), max_relative = 1e-14);
        let b = ratio_bounds(2, 0.5, 3, 2.0).unwrap();
        assert!(b.ln_lower < b.ln_upper);
    }
}
