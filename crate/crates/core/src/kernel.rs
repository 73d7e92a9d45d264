//! Truncated orthonormal systems of weighted Bergman spaces and kernel evaluation.

use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::domains::{DomainSpec, Jet4, WeightSpec, JET_ORDER};
use crate::error::{Error, Result};
use crate::numerics::{
    build_quadrature, diagonal_factorization, graded_indices, laurent_indices, monomial_derivative,
    pivoted_factorization, radial_resolution, GramFactor, MultiIndex, QuadratureRule, DEFAULT_DROP_TOL,
};
use crate::series::Series;
use crate::{Point, C64};

/// Orthonormal functions `u^α = Σ_{β ≤ α} C_{αβ} (z - c)^β` of `A²(Ω, μ)`
/// restricted to monomials of bounded degree.
#[derive(Clone, Debug)]
pub struct OrthonormalSystem {
    pub domain: DomainSpec,
    pub weight: WeightSpec,
    pub rule: Arc<QuadratureRule>,
    pub max_degree: usize,
    pub center: Point,
    /// Retained exponents, in basis order.
    pub indices: Vec<MultiIndex>,
    pub dropped: Vec<MultiIndex>,
    /// Row `a` lists `(b, C_{ab})` for `b ≤ a`.
    pub coeffs: Vec<Vec<(usize, C64)>>,
    /// Squared distance of each monomial to the span of its predecessors.
    pub prenorms: Vec<f64>,
    ln_mu: Arc<Vec<f64>>,
}

fn basis_indices(domain: &DomainSpec, max_degree: usize) -> Vec<MultiIndex> {
    match domain {
        DomainSpec::Annulus { .. } => laurent_indices(max_degree),
        _ => graded_indices(domain.dim(), max_degree),
    }
}

fn quadrature_failure(e: Error) -> Error {
    match e {
        Error::NotPositiveSemidefinite { index, pivot } => {
            Error::QuadratureFailure(format!("Gram matrix has negative pivot {pivot:e} at basis position {index}"))
        }
        other => other,
    }
}

pub fn build_orthonormal_system(
    domain: &DomainSpec,
    weight: &WeightSpec,
    max_degree: usize,
    center: Option<Point>,
    rule: Arc<QuadratureRule>,
) -> Result<OrthonormalSystem> {
    let n = domain.dim();
    if rule.domain.dim() != n {
        return Err(Error::InvalidArgument("rule and domain dimensions differ".into()));
    }
    let center = center.unwrap_or_else(|| domain.default_center(&rule));
    if center.len() != n {
        return Err(Error::InvalidArgument("center has the wrong dimension".into()));
    }
    let ln_mu = Arc::new(weight.ln_values_on(&rule)?);
    let all = basis_indices(domain, max_degree);
    let factor: GramFactor = if rule.orbit_reduced() {
        if !weight.is_radial() {
            return Err(Error::UnsupportedReduction(
                "orbit-reduced rules need a weight depending only on the moduli".into(),
            ));
        }
        if center.iter().any(|c| c.norm() > 0.0) {
            return Err(Error::InvalidArgument("orbit-reduced rules need the origin as center".into()));
        }
        let ln_t: Vec<Vec<f64>> = rule.moduli_sq().iter().map(|t| t.iter().map(|x| x.ln()).collect()).collect();
        let diag: Vec<f64> = all
            .par_iter()
            .map(|alpha| {
                ln_t.iter()
                    .zip(rule.weights.iter().zip(ln_mu.iter()))
                    .map(|(lt, (w, lm))| {
                        let e: f64 = lt.iter().zip(alpha).map(|(l, &a)| a as f64 * l).sum();
                        w * (lm + e).exp()
                    })
                    .sum()
            })
            .collect();
        diagonal_factorization(&diag, DEFAULT_DROP_TOL).map_err(quadrature_failure)?
    } else {
        let gram = dense_gram(&rule, &ln_mu, &all, &center);
        pivoted_factorization(&gram, DEFAULT_DROP_TOL).map_err(quadrature_failure)?
    };
    if factor.retained.is_empty() {
        return Err(Error::DegenerateSystem("every basis monomial was dropped".into()));
    }
    let prenorms = factor
        .rows
        .iter()
        .map(|row| row.last().map(|e| e.1.norm_sqr()).unwrap_or(0.0))
        .collect();
    let coeffs = factor.inverse_rows();
    Ok(OrthonormalSystem {
        domain: domain.clone(),
        weight: weight.clone(),
        rule,
        max_degree,
        center,
        indices: factor.retained.iter().map(|&i| all[i].clone()).collect(),
        dropped: factor.dropped.iter().map(|&i| all[i].clone()).collect(),
        coeffs,
        prenorms,
        ln_mu,
    })
}

fn dense_gram(rule: &QuadratureRule, ln_mu: &[f64], indices: &[MultiIndex], center: &[C64]) -> DMatrix<C64> {
    let rows: Vec<Vec<C64>> = rule
        .nodes
        .par_iter()
        .zip(rule.weights.par_iter().zip(ln_mu.par_iter()))
        .map(|(z, (w, lm))| {
            let s = (w * lm.exp()).sqrt();
            let shifted: Vec<C64> = z.iter().zip(center).map(|(a, b)| a - b).collect();
            indices.iter().map(|alpha| s * crate::numerics::monomial(alpha, &shifted)).collect()
        })
        .collect();
    let b = DMatrix::from_fn(rows.len(), indices.len(), |i, j| rows[i][j]);
    let g = b.transpose() * b.conjugate();
    // exact Hermitian symmetry
    DMatrix::from_fn(indices.len(), indices.len(), |i, j| if i <= j { g[(i, j)] } else { g[(j, i)].conj() })
}

impl OrthonormalSystem {
    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    fn shifted(&self, z: &[C64]) -> Vec<C64> {
        z.iter().zip(&self.center).map(|(a, b)| a - b).collect()
    }

    /// `(z - c)^β` for every retained exponent.
    pub fn monomial_values(&self, z: &[C64]) -> Vec<C64> {
        let s = self.shifted(z);
        self.indices.iter().map(|b| crate::numerics::monomial(b, &s)).collect()
    }

    fn combine(&self, mono: &[C64]) -> Vec<C64> {
        self.coeffs.iter().map(|row| row.iter().map(|&(b, c)| c * mono[b]).sum()).collect()
    }

    /// `u^α(z)` for every basis element.
    pub fn basis_values(&self, z: &[C64]) -> Vec<C64> {
        self.combine(&self.monomial_values(z))
    }

    /// `D^γ u^α(p)` for every basis element.
    pub fn basis_derivatives(&self, p: &[C64], gamma: &[usize]) -> Vec<C64> {
        let s = self.shifted(p);
        let mono: Vec<C64> = self.indices.iter().map(|b| monomial_derivative(b, gamma, &s)).collect();
        self.combine(&mono)
    }

    /// `⟨(z-c)^β, (z-c)^γ⟩_μ` on the bound rule.
    pub fn monomial_inner(&self, beta: &[i32], gamma: &[i32]) -> C64 {
        if self.rule.orbit_reduced() {
            if beta != gamma {
                return C64::new(0.0, 0.0);
            }
            let v: f64 = self
                .rule
                .moduli_sq()
                .iter()
                .zip(self.rule.weights.iter().zip(self.ln_mu.iter()))
                .map(|(t, (w, lm))| {
                    let e: f64 = t.iter().zip(beta).map(|(ti, &b)| b as f64 * ti.ln()).sum();
                    w * (lm + e).exp()
                })
                .sum();
            return C64::new(v, 0.0);
        }
        self.rule
            .nodes
            .iter()
            .zip(self.rule.weights.iter().zip(self.ln_mu.iter()))
            .map(|(z, (w, lm))| {
                let s = self.shifted(z);
                crate::numerics::monomial(beta, &s)
                    * crate::numerics::monomial(gamma, &s).conj()
                    * (w * lm.exp())
            })
            .sum()
    }

    /// Frobenius distance of the Gram matrix of `{u^α}` from the identity.
    pub fn gram_defect(&self) -> f64 {
        let n = self.len();
        let g = DMatrix::from_fn(n, n, |i, j| {
            if self.rule.orbit_reduced() && i != j {
                C64::new(0.0, 0.0)
            } else {
                self.monomial_inner(&self.indices[i], &self.indices[j])
            }
        });
        let mut c = DMatrix::zeros(n, n);
        for (a, row) in self.coeffs.iter().enumerate() {
            for &(b, v) in row {
                c[(a, b)] = v;
            }
        }
        let u = &c * g * c.adjoint();
        (u - DMatrix::identity(n, n)).norm()
    }
}

/// Evaluator for the truncated kernel `K(z, w) = Σ_α u^α(z) conj(u^α(w))`.
#[derive(Clone, Debug)]
pub struct KernelModel {
    pub system: OrthonormalSystem,
    /// Largest relative change of the diagonal at the probes between the
    /// last two degrees tried by the adaptive builder.
    pub truncation_change: Option<f64>,
}

impl KernelModel {
    pub fn new(system: OrthonormalSystem) -> Self {
        Self { system, truncation_change: None }
    }

    pub fn dim(&self) -> usize {
        self.system.dim()
    }

    fn check_point(&self, z: &[C64]) -> Result<()> {
        if !self.system.domain.contains(z) {
            return Err(Error::Domain(format!("{z:?} is not inside the domain")));
        }
        Ok(())
    }

    pub fn eval(&self, z: &[C64], w: &[C64]) -> Result<C64> {
        self.check_point(z)?;
        self.check_point(w)?;
        let uz = self.system.basis_values(z);
        let uw = self.system.basis_values(w);
        Ok(uz.iter().zip(&uw).map(|(a, b)| a * b.conj()).sum())
    }

    pub fn diag(&self, z: &[C64]) -> Result<f64> {
        self.check_point(z)?;
        Ok(self.system.basis_values(z).iter().map(|u| u.norm_sqr()).sum())
    }

    /// Taylor series of `K(p + ζ, p + ζ)` in `(ζ, ζ̄)` through `order`.
    pub fn diagonal_series(&self, p: &[C64], order: usize) -> Result<Series> {
        self.check_point(p)?;
        let n = self.dim();
        let mut gammas: Vec<Vec<usize>> = Vec::new();
        for alpha in graded_indices(n, order) {
            gammas.push(alpha.iter().map(|&a| a as usize).collect());
        }
        let scaled: Vec<Vec<C64>> = gammas
            .par_iter()
            .map(|g| {
                let f: f64 = g.iter().map(|&k| crate::numerics::factorial(k)).product();
                self.system.basis_derivatives(p, g).into_iter().map(|v| v / f).collect()
            })
            .collect();
        let mut s = Series::zero(2 * n, order);
        for (i, a) in gammas.iter().enumerate() {
            for (j, b) in gammas.iter().enumerate() {
                let deg: usize = a.iter().chain(b).sum();
                if deg > order {
                    continue;
                }
                let v: C64 = scaled[i].iter().zip(&scaled[j]).map(|(x, y)| x * y.conj()).sum();
                let mut e: Vec<u8> = a.iter().map(|&k| k as u8).collect();
                e.extend(b.iter().map(|&k| k as u8));
                s.add_term(e, v);
            }
        }
        Ok(s)
    }

    /// 4-jet of `log K(z, z)` at `p`, a Kähler potential of the Bergman metric.
    pub fn log_kernel_jet(&self, p: &[C64]) -> Result<Jet4> {
        let s = self.diagonal_series(p, JET_ORDER)?;
        let k0 = s.constant_term().re;
        if k0.is_nan() || k0 <= 1e-300 {
            return Err(Error::DegenerateKernel(format!("K(p, p) = {k0:e}")));
        }
        Ok(Jet4::from_series(p, &s.ln()?))
    }

    /// `|∫ K(z, w) u(w) μ(w) dλ(w) - u(z)|` for a polynomial `u = Σ u_β (w - c)^β`.
    pub fn reproducing_residual(&self, u: &[(MultiIndex, C64)], z: &[C64]) -> Result<f64> {
        self.check_point(z)?;
        let sys = &self.system;
        let basis = sys.basis_values(z);
        let mut projected = C64::new(0.0, 0.0);
        for (a, row) in sys.coeffs.iter().enumerate() {
            let mut inner = C64::new(0.0, 0.0);
            for (beta, ub) in u {
                for &(b, c) in row {
                    let g = sys.monomial_inner(beta, &sys.indices[b]);
                    inner += ub * c.conj() * g;
                }
            }
            projected += inner * basis[a];
        }
        let s = sys.shifted(z);
        let direct: C64 = u.iter().map(|(beta, ub)| ub * crate::numerics::monomial(beta, &s)).sum();
        Ok((projected - direct).norm())
    }
}

/// Settings for [`build_kernel`].
#[derive(Clone, Debug)]
pub struct KernelOptions {
    pub base_resolution: usize,
    pub start_degree: usize,
    pub degree_cap: Option<usize>,
    /// Stop once the diagonal at every probe moves less than this (relative).
    pub tol: f64,
    pub fixed_degree: Option<usize>,
    pub center: Option<Point>,
}

impl Default for KernelOptions {
    fn default() -> Self {
        Self { base_resolution: 32, start_degree: 8, degree_cap: None, tol: 1e-9, fixed_degree: None, center: None }
    }
}

fn rule_for(domain: &DomainSpec, weight: &WeightSpec, degree: usize, base: usize) -> Result<Arc<QuadratureRule>> {
    let res = if domain.is_reinhardt() {
        radial_resolution(base, domain.dim(), degree, weight.degree_hint())
    } else {
        base
    };
    Ok(Arc::new(build_quadrature(domain, res)?))
}

/// Builds a kernel, growing the degree until the diagonal at `probes` settles.
pub fn build_kernel(
    domain: &DomainSpec,
    weight: &WeightSpec,
    probes: &[Point],
    opts: &KernelOptions,
) -> Result<KernelModel> {
    if weight.is_tabulated() {
        return Err(Error::Binding("tabulated weights need build_orthonormal_system on their rule".into()));
    }
    for p in probes {
        if !domain.contains(p) {
            return Err(Error::Domain(format!("probe {p:?} is outside the domain")));
        }
    }
    if let Some(d) = opts.fixed_degree {
        let rule = rule_for(domain, weight, d, opts.base_resolution)?;
        let sys = build_orthonormal_system(domain, weight, d, opts.center.clone(), rule)?;
        return Ok(KernelModel::new(sys));
    }
    let cap = opts.degree_cap.unwrap_or(match (domain.dim(), domain.is_reinhardt()) {
        (_, false) => 30,
        (1, true) => 400,
        _ => 90,
    });
    let mut degree = opts.start_degree.min(cap);
    let mut planar_rule = None;
    let mut previous: Option<(KernelModel, Vec<f64>)> = None;
    loop {
        let rule = if domain.is_reinhardt() {
            rule_for(domain, weight, degree, opts.base_resolution)?
        } else {
            if planar_rule.is_none() {
                planar_rule = Some(rule_for(domain, weight, degree, opts.base_resolution)?);
            }
            planar_rule.clone().expect("just set")
        };
        let sys = build_orthonormal_system(domain, weight, degree, opts.center.clone(), rule)?;
        let model = KernelModel::new(sys);
        let diag: Vec<f64> = probes.iter().map(|p| model.diag(p)).collect::<Result<_>>()?;
        if let Some((_, prev)) = &previous {
            let change = diag
                .iter()
                .zip(prev)
                .map(|(a, b)| ((a - b) / a).abs())
                .fold(0.0, f64::max);
            if change < opts.tol || degree >= cap {
                return Ok(KernelModel { truncation_change: Some(change), ..model });
            }
        } else if probes.is_empty() || degree >= cap {
            return Ok(model);
        }
        previous = Some((model, diag));
        degree = (degree * 3 / 2 + 2).min(cap);
    }
}

/// Disk automorphism `F_a(z) = (z - a)/(1 - ā z)`.
#[derive(Clone, Copy, Debug)]
pub struct Mobius {
    pub a: C64,
}

impl Mobius {
    pub fn map(&self, z: C64) -> C64 {
        (z - self.a) / (C64::new(1.0, 0.0) - self.a.conj() * z)
    }

    pub fn derivative(&self, z: C64) -> C64 {
        let d = C64::new(1.0, 0.0) - self.a.conj() * z;
        C64::new(1.0 - self.a.norm_sqr(), 0.0) / (d * d)
    }
}

/// A holomorphic map with its complex Jacobian determinant.
pub trait HolomorphicMap: Sync {
    fn apply(&self, z: &[C64]) -> Point;
    fn jacobian(&self, z: &[C64]) -> C64;
}

impl HolomorphicMap for Mobius {
    fn apply(&self, z: &[C64]) -> Point {
        vec![self.map(z[0])]
    }
    fn jacobian(&self, z: &[C64]) -> C64 {
        self.derivative(z[0])
    }
}

/// `F(z) = z / r` on ℂⁿ.
#[derive(Clone, Copy, Debug)]
pub struct Dilation {
    pub n: usize,
    pub r: f64,
}

impl HolomorphicMap for Dilation {
    fn apply(&self, z: &[C64]) -> Point {
        z.iter().map(|c| c / self.r).collect()
    }
    fn jacobian(&self, _z: &[C64]) -> C64 {
        C64::new(self.r.powi(-(self.n as i32)), 0.0)
    }
}

pub struct Identity;

impl HolomorphicMap for Identity {
    fn apply(&self, z: &[C64]) -> Point {
        z.to_vec()
    }
    fn jacobian(&self, _z: &[C64]) -> C64 {
        C64::new(1.0, 0.0)
    }
}

/// Largest defect of `K(z,w) = J(z)h(z) K'(F z, F w) conj(J(w)h(w))` over
/// `pairs`, relative to `sqrt(K(z,z) K(w,w))`.
pub fn transformation_check(
    source: &KernelModel,
    target: &KernelModel,
    map: &dyn HolomorphicMap,
    h: &dyn Fn(&[C64]) -> C64,
    pairs: &[(Point, Point)],
) -> Result<f64> {
    let (ws, wt) = (&source.system.weight, &target.system.weight);
    if !ws.is_tabulated() && !wt.is_tabulated() {
        for (z, w) in pairs {
            for p in [z, w] {
                let lhs = wt.eval(&map.apply(p))?;
                let rhs = h(p).norm_sqr() * ws.eval(p)?;
                if ((lhs - rhs) / rhs).abs() > 1e-6 {
                    return Err(Error::MismatchedWeights(format!(
                        "μ'(F(z)) = {lhs:e} but |h|²μ = {rhs:e} at {p:?}"
                    )));
                }
            }
        }
    }
    let mut worst: f64 = 0.0;
    for (z, w) in pairs {
        let k = source.eval(z, w)?;
        let fz = map.apply(z);
        let fw = map.apply(w);
        let kt = target.eval(&fz, &fw)?;
        let rhs = map.jacobian(z) * h(z) * kt * (map.jacobian(w) * h(w)).conj();
        let scale = (source.diag(z)? * source.diag(w)?).sqrt();
        worst = worst.max((k - rhs).norm() / scale);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn disk_system(weight: WeightSpec, degree: usize) -> OrthonormalSystem {
        let disk = DomainSpec::disk(1.0).unwrap();
        let rule = Arc::new(build_quadrature(&disk, 40).unwrap());
        build_orthonormal_system(&disk, &weight, degree, None, rule).unwrap()
    }

    #[test]
    fn disk_basis_coefficients() {
        let sys = disk_system(WeightSpec::unit(), 2);
        for k in 0..3 {
            assert_eq!(sys.coeffs[k].len(), 1);
            assert_relative_eq!(sys.coeffs[k][0].1.re, ((k + 1) as f64 / PI).sqrt(), max_relative = 1e-13);
        }
        assert!(sys.gram_defect() < 1e-12);
    }

    #[test]
    fn weighted_disk_constant_norm() {
        let sys = disk_system(WeightSpec::radial_power(2, 1.0), 0);
        assert_relative_eq!(sys.coeffs[0][0].1.re, 1.0 / (PI / 3.0).sqrt(), max_relative = 1e-13);
    }

    #[test]
    fn ball_linear_monomials_are_orthogonal() {
        let ball = DomainSpec::ball(2, 1.0).unwrap();
        let rule = Arc::new(build_quadrature(&ball, 16).unwrap());
        let sys = build_orthonormal_system(&ball, &WeightSpec::unit(), 1, None, rule).unwrap();
        assert_eq!(sys.len(), 3);
        assert!(sys.coeffs.iter().all(|r| r.len() == 1));
        assert!(sys.gram_defect() < 1e-12);
    }

    #[test]
    fn classic_disk_kernel_values() {
        let model = KernelModel::new(disk_system(WeightSpec::unit(), 120));
        assert_relative_eq!(model.diag(&[c(0.0, 0.0)]).unwrap(), 1.0 / PI, max_relative = 1e-13);
        assert_relative_eq!(model.diag(&[c(0.0, 0.5)]).unwrap(), 16.0 / (9.0 * PI), max_relative = 1e-12);
        let (z, w) = ([c(0.2, -0.3)], [c(-0.1, 0.4)]);
        assert_eq!(model.eval(&z, &w).unwrap(), model.eval(&w, &z).unwrap().conj());
    }

    #[test]
    fn reproducing_property() {
        let model = KernelModel::new(disk_system(WeightSpec::unit(), 8));
        assert!(model.reproducing_residual(&[(vec![0], c(1.0, 0.0))], &[c(0.0, 0.0)]).unwrap() < 1e-10);
        assert!(model.reproducing_residual(&[(vec![5], c(1.0, 0.0))], &[c(0.3, 0.0)]).unwrap() < 1e-8);
        let outside = model.reproducing_residual(&[(vec![9], c(1.0, 0.0))], &[c(0.3, 0.0)]).unwrap();
        assert!(outside > 1e-6);
    }

    #[test]
    fn diagonal_nondecreasing_in_degree() {
        let z = [c(0.4, 0.3)];
        let mut last = 0.0;
        for d in [0, 1, 3, 6, 10] {
            let k = KernelModel::new(disk_system(WeightSpec::unit(), d)).diag(&z).unwrap();
            assert!(k >= last);
            last = k;
        }
    }

    #[test]
    fn adaptive_kernel_reaches_closed_form() {
        let disk = DomainSpec::disk(1.0).unwrap();
        let probes = vec![vec![c(0.6, 0.0)], vec![c(0.0, -0.3)]];
        let model = build_kernel(&disk, &WeightSpec::unit(), &probes, &KernelOptions::default()).unwrap();
        let exact = 1.0 / (PI * (1.0f64 - 0.36).powi(2));
        assert_relative_eq!(model.diag(&probes[0]).unwrap(), exact, max_relative = 1e-9);
    }

    #[test]
    fn tabulated_weight_bound_to_other_rule_is_rejected() {
        let disk = DomainSpec::disk(1.0).unwrap();
        let r1 = Arc::new(build_quadrature(&disk, 10).unwrap());
        let r2 = Arc::new(build_quadrature(&disk, 10).unwrap());
        let w = WeightSpec::tabulated(&r1, vec![1.0; r1.len()], true).unwrap();
        assert!(matches!(build_orthonormal_system(&disk, &w, 2, None, r2), Err(Error::Binding(_))));
    }

    #[test]
    fn mobius_maps_a_to_origin() {
        let f = Mobius { a: c(0.5, 0.0) };
        assert!(f.map(c(0.5, 0.0)).norm() < 1e-16);
        assert_relative_eq!(f.derivative(c(0.0, 0.0)).re, 0.75);
    }

    #[test]
    fn identity_transformation_has_zero_defect() {
        let model = KernelModel::new(disk_system(WeightSpec::unit(), 30));
        let pairs = vec![(vec![c(0.1, 0.2)], vec![c(-0.3, 0.1)])];
        let d = transformation_check(&model, &model, &Identity, &|_| c(1.0, 0.0), &pairs).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn mismatched_weights_are_detected() {
        let a = KernelModel::new(disk_system(WeightSpec::unit(), 5));
        let b = KernelModel::new(disk_system(WeightSpec::radial_power(1, 1.0), 5));
        let pairs = vec![(vec![c(0.3, 0.0)], vec![c(0.0, 0.1)])];
        let r = transformation_check(&a, &b, &Identity, &|_| c(1.0, 0.0), &pairs);
        assert!(matches!(r, Err(Error::MismatchedWeights(_))));
    }
}
