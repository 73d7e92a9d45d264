//! Minimum integrals `I⁰, I¹, I²` over a truncated orthonormal system and
//! the Bergman–Fuks formulas for `K`, `g` and `H`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::OrthonormalSystem;
use crate::{Point, C64};

#[derive(Clone, Debug, Serialize)]
pub struct MinIntegralResult {
    pub order: usize,
    pub value: f64,
    /// Minimizer coefficients in the orthonormal basis.
    #[serde(skip)]
    pub coeffs: Vec<C64>,
    #[serde(skip)]
    pub point: Point,
    #[serde(skip)]
    pub direction: Vec<C64>,
    /// Largest violation of the defining constraints by the minimizer.
    pub constraint_residual: f64,
}

fn gamma(n: usize, idx: &[usize]) -> Vec<usize> {
    let mut g = vec![0; n];
    for &i in idx {
        g[i] += 1;
    }
    g
}

/// Rows `L(u^α)` of the linear functionals that define `ℰ^j` and their targets.
fn constraints(sys: &OrthonormalSystem, p: &[C64], x: &[C64], order: usize) -> (Vec<Vec<C64>>, Vec<C64>) {
    let n = sys.dim();
    let one = C64::new(1.0, 0.0);
    let zero = C64::new(0.0, 0.0);
    let value = sys.basis_derivatives(p, &vec![0; n]);
    let first: Vec<Vec<C64>> = (0..n).map(|i| sys.basis_derivatives(p, &gamma(n, &[i]))).collect();
    let along = |vals: &[Vec<C64>]| -> Vec<C64> {
        (0..sys.len()).map(|a| (0..n).map(|i| x[i] * vals[i][a]).sum()).collect()
    };
    match order {
        0 => (vec![value], vec![one]),
        1 => (vec![value, along(&first)], vec![zero, one]),
        _ => {
            let mut second = vec![C64::new(0.0, 0.0); sys.len()];
            for i in 0..n {
                for k in 0..n {
                    let d = sys.basis_derivatives(p, &gamma(n, &[i, k]));
                    for (s, v) in second.iter_mut().zip(d) {
                        *s += x[i] * x[k] * v;
                    }
                }
            }
            let mut rows = vec![value];
            rows.extend(first);
            rows.push(second);
            let mut rhs = vec![zero; rows.len()];
            rhs[rows.len() - 1] = one;
            (rows, rhs)
        }
    }
}

/// `I^j(p; X)`: the least `‖u‖²` over the span of `sys` subject to the
/// order-`j` normalization at `p` along `X`.
pub fn minimum_integral(sys: &OrthonormalSystem, p: &[C64], x: &[C64], order: usize) -> Result<MinIntegralResult> {
    if order > 2 {
        return Err(Error::InvalidArgument(format!("minimum integral of order {order} is not supported")));
    }
    if p.len() != sys.dim() || x.len() != sys.dim() {
        return Err(Error::InvalidArgument("point or direction has the wrong dimension".into()));
    }
    if order > 0 && x.iter().all(|c| c.norm() == 0.0) {
        return Err(Error::InvalidArgument("direction must be nonzero".into()));
    }
    if !sys.domain.contains(p) {
        return Err(Error::Domain(format!("{p:?} is not inside the domain")));
    }
    if sys.is_empty() {
        return Err(Error::InfeasibleConstraint("empty system".into()));
    }
    let (rows, rhs) = constraints(sys, p, x, order);
    let a = DMatrix::from_fn(rows.len(), sys.len(), |i, j| rows[i][j]);
    let b = DVector::from_vec(rhs);
    let (c, value) = crate::numerics::constrained_min_norm(&a, &b)?;
    let residual = (&a * &c - &b).iter().map(|v| v.norm()).fold(0.0, f64::max);
    Ok(MinIntegralResult {
        order,
        value,
        coeffs: c.iter().copied().collect(),
        point: p.to_vec(),
        direction: x.to_vec(),
        constraint_residual: residual,
    })
}

/// Kernel, metric and holomorphic sectional curvature from `(I⁰, I¹, I²)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FuksValues {
    pub kernel: f64,
    pub metric: f64,
    pub hsc: f64,
}

pub fn bergman_fuks(i0: f64, i1: f64, i2: f64) -> Result<FuksValues> {
    if !(i0 > 0.0 && i1 > 0.0 && i2 > 0.0) {
        return Err(Error::DegenerateKernel(format!("minimum integrals ({i0:e}, {i1:e}, {i2:e}) must be positive")));
    }
    Ok(FuksValues { kernel: 1.0 / i0, metric: i0 / i1, hsc: 2.0 - i1 * i1 / (i2 * i0) })
}

/// All three minimum integrals at `(p, X)` and the values they determine.
pub fn fuks_at(sys: &OrthonormalSystem, p: &[C64], x: &[C64]) -> Result<(FuksValues, [MinIntegralResult; 3])> {
    let r0 = minimum_integral(sys, p, x, 0)?;
    let r1 = minimum_integral(sys, p, x, 1)?;
    let r2 = minimum_integral(sys, p, x, 2)?;
    let v = bergman_fuks(r0.value, r1.value, r2.value)?;
    Ok((v, [r0, r1, r2]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::{DomainSpec, WeightSpec};
    use crate::kernel::build_orthonormal_system;
    use crate::numerics::build_quadrature;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn disk(weight: WeightSpec, degree: usize) -> OrthonormalSystem {
        let d = DomainSpec::disk(1.0).unwrap();
        let rule = Arc::new(build_quadrature(&d, 48).unwrap());
        build_orthonormal_system(&d, &weight, degree, None, rule).unwrap()
    }

    #[test]
    fn disk_minimum_integrals_at_center() {
        let sys = disk(WeightSpec::unit(), 10);
        let p = [c(0.0, 0.0)];
        let x = [c(1.0, 0.0)];
        let r: Vec<f64> = (0..3).map(|j| minimum_integral(&sys, &p, &x, j).unwrap().value).collect();
        assert_relative_eq!(r[0], PI, max_relative = 1e-12);
        assert_relative_eq!(r[1], PI / 2.0, max_relative = 1e-12);
        assert_relative_eq!(r[2], PI / 12.0, max_relative = 1e-12);
        let v = bergman_fuks(r[0], r[1], r[2]).unwrap();
        assert_relative_eq!(v.kernel, 1.0 / PI, max_relative = 1e-12);
        assert_relative_eq!(v.metric, 2.0, max_relative = 1e-12);
        assert_relative_eq!(v.hsc, -1.0, max_relative = 1e-11);
    }

    #[test]
    fn fuks_algebra() {
        assert_eq!(bergman_fuks(1.0, 1.0, 1.0).unwrap(), FuksValues { kernel: 1.0, metric: 1.0, hsc: 1.0 });
        let v = bergman_fuks(PI, PI / 2.0, PI / 12.0).unwrap();
        assert_relative_eq!(v.hsc, -1.0, max_relative = 1e-14);
        assert!(matches!(bergman_fuks(0.0, 1.0, 1.0), Err(Error::DegenerateKernel(_))));
    }

    #[test]
    fn infeasible_in_constant_span() {
        let sys = disk(WeightSpec::unit(), 0);
        let r = minimum_integral(&sys, &[c(0.1, 0.0)], &[c(1.0, 0.0)], 1);
        assert!(matches!(r, Err(Error::InfeasibleConstraint(_))));
    }

    #[test]
    fn minimizer_meets_constraints() {
        let sys = disk(WeightSpec::radial_power(2, 1.0), 60);
        for j in 0..3 {
            let r = minimum_integral(&sys, &[c(0.3, -0.4)], &[c(0.6, 0.8)], j).unwrap();
            assert!(r.constraint_residual < 1e-9, "order {j}: {}", r.constraint_residual);
        }
    }

    #[test]
    fn weighted_disk_constant_curvature() {
        let sys = disk(WeightSpec::radial_power(3, 1.0), 200);
        for p in [c(0.0, 0.0), c(0.3, 0.0), c(-0.2, 0.4)] {
            let (v, _) = fuks_at(&sys, &[p], &[c(1.0, 0.0)]).unwrap();
            assert!((v.hsc + 0.4).abs() < 1e-7, "{p}: {}", v.hsc);
        }
    }

    #[test]
    fn weight_and_direction_scaling() {
        let sys = disk(WeightSpec::radial_power(1, 1.0), 80);
        let scaled = disk(WeightSpec::radial_power(1, 1.0).with_scale(2.5), 80);
        let p = [c(0.2, 0.1)];
        let x = [c(1.0, 0.0)];
        let (v, r) = fuks_at(&sys, &p, &x).unwrap();
        let (vs, rs) = fuks_at(&scaled, &p, &x).unwrap();
        for j in 0..3 {
            assert_relative_eq!(rs[j].value, 2.5 * r[j].value, max_relative = 1e-10);
        }
        assert_relative_eq!(vs.metric, v.metric, max_relative = 1e-10);
        assert_relative_eq!(vs.hsc, v.hsc, max_relative = 1e-9);
        let k = c(0.0, 3.0);
        let (vx, rx) = fuks_at(&sys, &p, &[x[0] * k]).unwrap();
        assert_relative_eq!(rx[1].value, r[1].value / 9.0, max_relative = 1e-10);
        assert_relative_eq!(rx[2].value, r[2].value / 81.0, max_relative = 1e-10);
        assert_relative_eq!(vx.metric, 9.0 * v.metric, max_relative = 1e-10);
        assert_relative_eq!(vx.hsc, v.hsc, max_relative = 1e-9);
    }

    #[test]
    fn refinement_is_monotone() {
        let p = [c(0.5, 0.2)];
        let x = [c(1.0, 0.0)];
        let mut last = [f64::INFINITY; 3];
        for d in [4, 8, 16, 32] {
            let sys = disk(WeightSpec::unit(), d);
            for (j, prev) in last.iter_mut().enumerate() {
                let v = minimum_integral(&sys, &p, &x, j).unwrap().value;
                assert!(v <= *prev * (1.0 + 1e-12), "degree {d} order {j}");
                *prev = v;
            }
        }
    }
}
