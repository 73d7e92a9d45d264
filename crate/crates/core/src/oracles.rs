//! Closed-form kernels, metrics and Kähler–Einstein data on model domains.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::domains::{norm_sq_series, DomainSpec, Potential, Symmetry};
use crate::error::{Error, Result};
use crate::numerics::ln_factorial;
use crate::series::Series;
use crate::{Point, C64};

fn norm_sq(z: &[C64]) -> f64 {
    z.iter().map(|c| c.norm_sqr()).sum()
}

fn check_in_ball(n: usize, r: f64, w: &[C64]) -> Result<()> {
    if w.len() != n {
        return Err(Error::Domain(format!("point has dimension {}, expected {n}", w.len())));
    }
    if norm_sq(w) >= r * r {
        return Err(Error::Domain(format!("|w| = {} is not inside the ball of radius {r}", norm_sq(w).sqrt())));
    }
    Ok(())
}

/// `log c_m(r)` with `c_m(r) = (πr²)ⁿ m!/(n+m)!`, the weighted volume of the ball.
pub fn ln_weighted_volume(n: usize, r: f64, m: usize) -> f64 {
    n as f64 * (PI * r * r).ln() + ln_factorial(m) - ln_factorial(n + m)
}

pub fn weighted_volume(n: usize, r: f64, m: usize) -> f64 {
    ln_weighted_volume(n, r, m).exp()
}

/// Weighted ball kernel on the diagonal for the weight `((r² - |w|²)/r²)^m`.
pub fn fr_kernel(n: usize, r: f64, m: usize, w: &[C64]) -> Result<f64> {
    check_in_ball(n, r, w)?;
    let r2 = r * r;
    let e = (n + m + 1) as f64;
    Ok((-ln_weighted_volume(n, r, m) + e * (r2 / (r2 - norm_sq(w))).ln()).exp())
}

/// Off-diagonal weighted ball kernel `K(z, w)`.
pub fn fr_kernel_offdiag(n: usize, r: f64, m: usize, z: &[C64], w: &[C64]) -> Result<C64> {
    check_in_ball(n, r, z)?;
    check_in_ball(n, r, w)?;
    let r2 = r * r;
    let inner: C64 = z.iter().zip(w).map(|(a, b)| a * b.conj()).sum();
    let base = C64::new(r2, 0.0) / (C64::new(r2, 0.0) - inner);
    Ok(base.powu((n + m + 1) as u32) / weighted_volume(n, r, m))
}

/// Metric matrix `g_{jk̄}(w)` of the weighted ball kernel.
pub fn fr_metric_matrix(n: usize, r: f64, m: usize, w: &[C64]) -> Result<DMatrix<C64>> {
    check_in_ball(n, r, w)?;
    let d = r * r - norm_sq(w);
    let c = (n + m + 1) as f64;
    Ok(DMatrix::from_fn(n, n, |j, k| {
        let delta = if j == k { d } else { 0.0 };
        (C64::new(delta, 0.0) + w[j].conj() * w[k]) * (c / (d * d))
    }))
}

/// `g(w; X)` and the holomorphic sectional curvature of the weighted ball.
pub fn fr_metric_hsc(n: usize, r: f64, m: usize, w: &[C64], x: &[C64]) -> Result<(f64, f64)> {
    let g = fr_metric_matrix(n, r, m, w)?;
    if x.len() != n {
        return Err(Error::InvalidArgument("direction has the wrong dimension".into()));
    }
    Ok((quadratic_form(&g, x), -2.0 / (n + m + 1) as f64))
}

/// `Σ g_{jk̄} X_j conj(X_k)`.
pub fn quadratic_form(g: &DMatrix<C64>, x: &[C64]) -> f64 {
    let mut v = C64::new(0.0, 0.0);
    for j in 0..x.len() {
        for k in 0..x.len() {
            v += g[(j, k)] * x[j] * x[k].conj();
        }
    }
    v.re
}

/// Model domains with a closed-form Kähler–Einstein metric (`Ric = -g`).
#[derive(Clone, Debug, PartialEq)]
pub enum KeDomain {
    Ball { n: usize, r: f64 },
    Polydisc { radii: Vec<f64> },
}

impl KeDomain {
    pub fn from_domain(domain: &DomainSpec) -> Result<Self> {
        match domain {
            DomainSpec::Ball { n, r } => Ok(KeDomain::Ball { n: *n, r: *r }),
            DomainSpec::Polydisc { radii } => Ok(KeDomain::Polydisc { radii: radii.clone() }),
            other => Err(Error::UnsupportedDomain(format!("no closed-form Kähler–Einstein metric for {other:?}"))),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            KeDomain::Ball { n, .. } => *n,
            KeDomain::Polydisc { radii } => radii.len(),
        }
    }

    pub fn tag(&self) -> String {
        match self {
            KeDomain::Ball { n: 1, r } => format!("disk(r={r})"),
            KeDomain::Ball { n, r } => format!("ball(n={n}, r={r})"),
            KeDomain::Polydisc { radii } => format!("polydisc({radii:?})"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct KeData {
    pub tag: String,
    pub point: Point,
    pub det: f64,
    pub metric: DMatrix<C64>,
    /// `log det g^{KE}`.
    pub potential: f64,
}

impl KeData {
    pub fn metric_along(&self, x: &[C64]) -> f64 {
        quadratic_form(&self.metric, x)
    }
}

pub fn ke_oracle(domain: &KeDomain, z: &[C64]) -> Result<KeData> {
    let n = domain.dim();
    let (ln_det, metric) = match domain {
        KeDomain::Ball { n, r } => {
            check_in_ball(*n, *r, z)?;
            let r2 = r * r;
            let d = r2 - norm_sq(z);
            let ln_det = *n as f64 * ((*n + 1) as f64).ln() + r2.ln() - (*n + 1) as f64 * d.ln();
            let c = (*n + 1) as f64;
            let g = DMatrix::from_fn(*n, *n, |j, k| {
                let delta = if j == k { d } else { 0.0 };
                (C64::new(delta, 0.0) + z[j].conj() * z[k]) * (c / (d * d))
            });
            (ln_det, g)
        }
        KeDomain::Polydisc { radii } => {
            if z.len() != radii.len() {
                return Err(Error::Domain("point has the wrong dimension".into()));
            }
            let mut ln_det = 0.0;
            let mut g = DMatrix::zeros(n, n);
            for (j, (zj, r)) in z.iter().zip(radii).enumerate() {
                let r2 = r * r;
                let d = r2 - zj.norm_sqr();
                if d <= 0.0 {
                    return Err(Error::Domain(format!("coordinate {j} outside its disc")));
                }
                ln_det += 2f64.ln() + r2.ln() - 2.0 * d.ln();
                g[(j, j)] = C64::new(2.0 * r2 / (d * d), 0.0);
            }
            (ln_det, g)
        }
    };
    Ok(KeData { tag: domain.tag(), point: z.to_vec(), det: ln_det.exp(), metric, potential: ln_det })
}

/// `φ^{KE} = log det g^{KE}` as a potential with analytic Taylor series.
#[derive(Clone, Debug)]
pub struct KePotential {
    pub domain: KeDomain,
}

impl Potential for KePotential {
    fn dim(&self) -> usize {
        self.domain.dim()
    }

    fn value(&self, z: &[C64]) -> f64 {
        ke_oracle(&self.domain, z).map(|d| d.potential).unwrap_or(f64::INFINITY)
    }

    fn taylor(&self, p: &[C64], order: usize) -> Option<Series> {
        let n = self.dim();
        let one = C64::new(1.0, 0.0);
        match &self.domain {
            KeDomain::Ball { n: nn, r } => {
                let r2 = r * r;
                let s = norm_sq_series(p, order);
                let d = &Series::constant(2 * n, order, C64::new(r2, 0.0)) - &s;
                let head = *nn as f64 * ((*nn + 1) as f64).ln() + r2.ln();
                let out = &Series::constant(2 * n, order, C64::new(head, 0.0))
                    + &d.ln().ok()?.scale(C64::new(-((*nn + 1) as f64), 0.0));
                Some(out)
            }
            KeDomain::Polydisc { radii } => {
                let mut out = Series::zero(2 * n, order);
                for (j, r) in radii.iter().enumerate() {
                    let r2 = r * r;
                    let mut s = Series::constant(2 * n, order, C64::new(r2 - p[j].norm_sqr(), 0.0));
                    let mut e = vec![0; 2 * n];
                    e[j] = 1;
                    s.add_term(e.clone(), -p[j].conj());
                    e[j] = 0;
                    e[n + j] = 1;
                    s.add_term(e.clone(), -p[j]);
                    e[j] = 1;
                    s.add_term(e, -one);
                    let term = &Series::constant(2 * n, order, C64::new(2f64.ln() + r2.ln(), 0.0))
                        + &s.ln().ok()?.scale(C64::new(-2.0, 0.0));
                    out = &out + &term;
                }
                Some(out)
            }
        }
    }

    fn weight_degree_hint(&self, multiplier: f64) -> Option<usize> {
        if multiplier < 0.0 || (multiplier - multiplier.round()).abs() > 1e-12 {
            return None;
        }
        let k = multiplier.round() as usize;
        Some(match &self.domain {
            KeDomain::Ball { n, .. } => (n + 1) * k,
            KeDomain::Polydisc { radii } => 2 * radii.len() * k,
        })
    }

    fn symmetry(&self) -> Symmetry {
        match self.domain {
            KeDomain::Ball { .. } => Symmetry::Unitary,
            KeDomain::Polydisc { .. } => Symmetry::Reinhardt,
        }
    }
}

/// Relative Frobenius defect of `∂∂̄ log det g^{KE} = g^{KE}` at `z`, via the jet of `φ^{KE}`.
pub fn einstein_residual(domain: &KeDomain, z: &[C64]) -> Result<f64> {
    let data = ke_oracle(domain, z)?;
    let jet = crate::domains::potential_jet(&KePotential { domain: domain.clone() }, z)?;
    Ok((jet.hessian() - &data.metric).norm() / data.metric.norm())
}

/// `log(1/D_m)` with `1/D_m = (mn+m-1)! / ((m-1)! (n+1)^{m-1})`.
pub fn ln_inv_d(n: usize, m: usize) -> f64 {
    assert!(m >= 1, "m must be at least 1");
    ln_factorial(m * n + m - 1) - ln_factorial(m - 1) - (m - 1) as f64 * ((n + 1) as f64).ln()
}

/// `log K^B_m(z)` for the unnormalized dynamical sequence `μ_1 = 1`,
/// `μ_{m+1} = 1/K_m` on the ball of radius `r`.
pub fn ln_tsuji_closed_form(n: usize, m: usize, z: &[C64], r: f64) -> Result<f64> {
    if m == 0 {
        return Err(Error::InvalidArgument("levels start at m = 1".into()));
    }
    check_in_ball(n, r, z)?;
    let ln_center: f64 = (0..m).map(|k| -ln_weighted_volume(n, r, k * (n + 1))).sum();
    let t = norm_sq(z) / (r * r);
    Ok(ln_center - ((n + 1) * m) as f64 * (1.0 - t).ln())
}

pub fn tsuji_closed_form(n: usize, m: usize, z: &[C64], r: f64) -> Result<f64> {
    ln_tsuji_closed_form(n, m, z, r).map(f64::exp)
}

/// Normalization `C_m = (m/π)ⁿ (1 - n/2m)` of the dynamical sequence.
pub fn tsuji_normalization(n: usize, m: usize) -> f64 {
    (m as f64 / PI).powi(n as i32) * (1.0 - n as f64 / (2.0 * m as f64))
}

/// `log K̃_m(z)` for the normalized sequence `μ̃_1 = 1`, `μ̃_{m+1} = C_m / K̃_m`
/// on the ball of radius `r`, where `μ̃_m = λ_m (1 - |z|²/r²)^{(n+1)(m-1)}`.
pub fn ln_tsuji_normalized_closed_form(n: usize, m: usize, z: &[C64], r: f64) -> Result<f64> {
    if m == 0 {
        return Err(Error::InvalidArgument("levels start at m = 1".into()));
    }
    check_in_ball(n, r, z)?;
    let mut ln_lambda = 0.0;
    for k in 1..m {
        let c = tsuji_normalization(n, k);
        if c <= 0.0 {
            return Err(Error::IterationFailure { step: k, reason: format!("normalization C_{k} = {c} is not positive") });
        }
        ln_lambda += c.ln() + ln_weighted_volume(n, r, (n + 1) * (k - 1));
    }
    let t = norm_sq(z) / (r * r);
    Ok(-ln_lambda - ln_weighted_volume(n, r, (n + 1) * (m - 1)) - ((n + 1) * m) as f64 * (1.0 - t).ln())
}

/// `(K̃^{KE}_m / det g^{KE})` for the weight `det(g^{KE})^{-(m-1)}`; constant in `z`.
pub fn tian_ke_ratio(domain: &KeDomain, m: usize) -> f64 {
    match domain {
        KeDomain::Ball { n, r } => {
            // the weight is a multiple of ((r² - |z|²)/r²)^a, and all powers of
            // (r² - |z|²) cancel against det^m
            let a = (n + 1) * (m - 1);
            let ln_scale = -((m - 1) as f64) * (*n as f64 * ((n + 1) as f64).ln() + (r * r).ln())
                + a as f64 * (r * r).ln();
            let ln_k = -ln_scale - ln_weighted_volume(*n, *r, a) + ((n + 1) * m) as f64 * (r * r).ln();
            let ln_det_m = m as f64 * (*n as f64 * ((n + 1) as f64).ln() + (r * r).ln());
            ((ln_k - ln_det_m) / m as f64).exp()
        }
        KeDomain::Polydisc { radii } => radii
            .iter()
            .map(|&r| tian_ke_ratio(&KeDomain::Ball { n: 1, r }, m))
            .product(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn fr_kernel_values() {
        assert_relative_eq!(fr_kernel(1, 1.0, 0, &[c(0.0, 0.0)]).unwrap(), 1.0 / PI, max_relative = 1e-14);
        assert_relative_eq!(
            fr_kernel(2, 1.0, 1, &[c(0.0, 0.0), c(0.0, 0.0)]).unwrap(),
            6.0 / (PI * PI),
            max_relative = 1e-14
        );
        assert_relative_eq!(fr_kernel(1, 1.0, 0, &[c(0.5, 0.0)]).unwrap(), 16.0 / (9.0 * PI), max_relative = 1e-14);
        assert!(fr_kernel(1, 1.0, 0, &[c(1.0, 0.0)]).is_err());
    }

    #[test]
    fn fr_offdiag_restricts_to_diagonal() {
        let w = [c(0.3, -0.2), c(0.1, 0.4)];
        let k = fr_kernel_offdiag(2, 1.0, 2, &w, &w).unwrap();
        assert_relative_eq!(k.re, fr_kernel(2, 1.0, 2, &w).unwrap(), max_relative = 1e-13);
        assert!(k.im.abs() < 1e-12 * k.re);
    }

    #[test]
    fn fr_metric_values() {
        let (g, h) = fr_metric_hsc(1, 1.0, 0, &[c(0.0, 0.0)], &[c(1.0, 0.0)]).unwrap();
        assert_relative_eq!(g, 2.0);
        assert_relative_eq!(h, -1.0);
        let (g, h) = fr_metric_hsc(2, 1.0, 3, &[c(0.0, 0.0); 2], &[c(1.0, 0.0), c(0.0, 0.0)]).unwrap();
        assert_relative_eq!(g, 6.0);
        assert_relative_eq!(h, -1.0 / 3.0);
        let (g, _) = fr_metric_hsc(1, 2.0, 0, &[c(0.0, 0.0)], &[c(1.0, 0.0)]).unwrap();
        assert_relative_eq!(g, 0.5);
    }

    #[test]
    fn ke_determinants_at_origin() {
        let disk = KeDomain::Ball { n: 1, r: 1.0 };
        assert_relative_eq!(ke_oracle(&disk, &[c(0.0, 0.0)]).unwrap().det, 2.0, max_relative = 1e-15);
        let ball = KeDomain::Ball { n: 2, r: 1.0 };
        assert_relative_eq!(ke_oracle(&ball, &[c(0.0, 0.0); 2]).unwrap().det, 9.0, max_relative = 1e-15);
        let bidisc = KeDomain::Polydisc { radii: vec![1.0, 1.0] };
        assert_relative_eq!(ke_oracle(&bidisc, &[c(0.0, 0.0); 2]).unwrap().det, 4.0, max_relative = 1e-15);
    }

    #[test]
    fn ke_metric_determinant_is_consistent() {
        let ball = KeDomain::Ball { n: 2, r: 1.3 };
        let z = [c(0.4, 0.1), c(-0.2, 0.5)];
        let d = ke_oracle(&ball, &z).unwrap();
        assert_relative_eq!(d.metric.determinant().re, d.det, max_relative = 1e-12);
    }

    #[test]
    fn einstein_equation_holds() {
        let z = [c(0.3, 0.2), c(-0.1, 0.25)];
        for dom in [KeDomain::Ball { n: 2, r: 1.0 }, KeDomain::Polydisc { radii: vec![1.0, 0.8] }] {
            assert!(einstein_residual(&dom, &z).unwrap() < 1e-12);
        }
        assert!(einstein_residual(&KeDomain::Ball { n: 1, r: 2.0 }, &[c(0.7, -0.9)]).unwrap() < 1e-12);
    }

    #[test]
    fn tsuji_closed_form_values() {
        assert_relative_eq!(tsuji_closed_form(1, 2, &[c(0.0, 0.0)], 1.0).unwrap(), 3.0 / (PI * PI), max_relative = 1e-14);
        assert_relative_eq!(tsuji_closed_form(1, 1, &[c(0.0, 0.0)], 1.0).unwrap(), 1.0 / PI, max_relative = 1e-14);
        let z = [c(0.5f64.sqrt(), 0.0)];
        assert_relative_eq!(
            tsuji_closed_form(1, 2, &z, 1.0).unwrap(),
            3.0 / (PI * PI) * 0.5f64.powi(-4),
            max_relative = 1e-13
        );
    }

    #[test]
    fn normalized_disk_sequence_second_level() {
        let k2 = ln_tsuji_normalized_closed_form(1, 2, &[c(0.0, 0.0)], 1.0).unwrap().exp();
        assert_relative_eq!(k2, 6.0 / PI, max_relative = 1e-14);
    }

    #[test]
    fn inverse_d_small_cases() {
        // n = 1, m = 2: 1/D_2 = 3!/(1!·2)
        assert_relative_eq!(ln_inv_d(1, 2).exp(), 3.0, max_relative = 1e-14);
        assert_relative_eq!(ln_inv_d(2, 1).exp(), 2.0, max_relative = 1e-14);
    }

    #[test]
    fn tian_ke_disk_ratio_matches_closed_form() {
        let disk = KeDomain::Ball { n: 1, r: 1.0 };
        for m in [1usize, 2, 5, 40] {
            let expected = 2f64.powf(-1.0 / m as f64) * ((2 * m - 1) as f64 / PI).powf(1.0 / m as f64);
            assert_relative_eq!(tian_ke_ratio(&disk, m), expected, max_relative = 1e-13);
        }
    }
}
