//! Metrics and curvatures from kernels and potential jets, and Bochner
//! normal coordinates from a 4-jet.
//!
//! Curvature convention: `R_{ij̄kl̄} = -∂_k∂̄_l g_{ij̄} + g^{αβ̄} ∂_k g_{iβ̄} ∂̄_l g_{αj̄}`
//! and `H(X) = R(X, X̄, X, X̄) / g(X, X̄)²`. With it the unit disk's Bergman
//! metric has `H = -1` and the weighted ball has `H = -2/(n+m+1)`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::domains::{check_strictly_psh, Jet4, Potential};
use crate::error::{Error, Result};
use crate::kernel::KernelModel;
use crate::oracles::quadratic_form;
use crate::series::{inverse_map, linear_part, Series};
use crate::{Point, C64};

fn unit(n: usize, i: usize) -> Vec<u8> {
    let mut e = vec![0; n];
    e[i] = 1;
    e
}

fn pair(n: usize, i: usize, k: usize) -> Vec<u8> {
    let mut e = vec![0; n];
    e[i] += 1;
    e[k] += 1;
    e
}

/// `Σ ψ_{jk̄} X_j conj(X_k)` for the potential whose jet is given.
pub fn metric_from_jet(jet: &Jet4, x: &[C64]) -> f64 {
    quadratic_form(&jet.hessian(), x)
}

/// Holomorphic sectional curvature of `i∂∂̄ψ` from the 4-jet of `ψ`.
pub fn hsc_from_jet(jet: &Jet4, x: &[C64]) -> Result<f64> {
    let n = jet.dim();
    let g = jet.hessian();
    let eig = g.clone().symmetric_eigen();
    if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
        return Err(Error::IndefiniteMetric(format!("metric eigenvalues {:?}", eig.eigenvalues.as_slice())));
    }
    let ginv = g.clone().try_inverse().ok_or_else(|| Error::IndefiniteMetric("singular metric".into()))?;
    // -ψ_{ij̄kl̄} X^i X̄^j X^k X̄^l
    let mut r = C64::new(0.0, 0.0);
    for i in 0..n {
        for k in 0..n {
            for j in 0..n {
                for l in 0..n {
                    r -= jet.get(&pair(n, i, k), &pair(n, j, l)) * x[i] * x[k] * (x[j] * x[l]).conj();
                }
            }
        }
    }
    // a_β = Σ ψ_{ikβ̄} X^i X^k, b_α = Σ ψ_{αj̄l̄} X̄^j X̄^l, term g^{αβ̄} a_β b_α
    let mut a = vec![C64::new(0.0, 0.0); n];
    let mut b = vec![C64::new(0.0, 0.0); n];
    for s in 0..n {
        for i in 0..n {
            for k in 0..n {
                a[s] += jet.get(&pair(n, i, k), &unit(n, s)) * x[i] * x[k];
                b[s] += jet.get(&unit(n, s), &pair(n, i, k)) * (x[i] * x[k]).conj();
            }
        }
    }
    for alpha in 0..n {
        for beta in 0..n {
            // g^{αβ̄} = (G^{-1})_{βα} with G_{γβ} = g_{γβ̄}
            r += ginv[(beta, alpha)] * a[beta] * b[alpha];
        }
    }
    let gx = quadratic_form(&g, x);
    Ok(r.re / (gx * gx))
}

fn kernel_jet(model: &KernelModel, p: &[C64]) -> Result<Jet4> {
    let k = model.diag(p)?;
    if k.is_nan() || k <= 1e-300 {
        return Err(Error::DegenerateKernel(format!("K(p, p) = {k:e}")));
    }
    model.log_kernel_jet(p)
}

/// Complex Hessian of `log K` at `p`.
pub fn metric_matrix_from_kernel(model: &KernelModel, p: &[C64]) -> Result<DMatrix<C64>> {
    Ok(kernel_jet(model, p)?.hessian())
}

/// `g(p; X)` of the weighted Bergman metric. Indefinite Hessians are
/// returned as computed; use [`metric_matrix_from_kernel`] to inspect them.
pub fn metric_from_kernel(model: &KernelModel, p: &[C64], x: &[C64]) -> Result<f64> {
    Ok(metric_from_jet(&kernel_jet(model, p)?, x))
}

pub fn hsc_from_kernel(model: &KernelModel, p: &[C64], x: &[C64]) -> Result<f64> {
    hsc_from_jet(&kernel_jet(model, p)?, x)
}

/// Curvature tensor coefficients `T[i][j][k][l]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor4 {
    pub n: usize,
    data: Vec<C64>,
}

impl Tensor4 {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![C64::new(0.0, 0.0); n.pow(4)] }
    }

    fn idx(&self, i: usize, j: usize, k: usize, l: usize) -> usize {
        ((i * self.n + j) * self.n + k) * self.n + l
    }

    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> C64 {
        self.data[self.idx(i, j, k, l)]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, l: usize, v: C64) {
        let t = self.idx(i, j, k, l);
        self.data[t] = v;
    }

    /// Coefficients in the frame `w = U w'`:
    /// `T'_{ij̄kl̄} = Σ U_{ai} conj(U_{bj}) U_{ck} conj(U_{dl}) T_{ab̄cd̄}`.
    pub fn in_frame(&self, u: &DMatrix<C64>) -> Tensor4 {
        let n = self.n;
        let mut out = Tensor4::zeros(n);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let mut v = C64::new(0.0, 0.0);
                        for a in 0..n {
                            for b in 0..n {
                                for c in 0..n {
                                    for d in 0..n {
                                        v += u[(a, i)] * u[(b, j)].conj() * u[(c, k)] * u[(d, l)].conj()
                                            * self.get(a, b, c, d);
                                    }
                                }
                            }
                        }
                        out.set(i, j, k, l, v);
                    }
                }
            }
        }
        out
    }
}

/// Finite-order Bochner coordinates `w = f(z)` at `p` and the normalized
/// potential `Φ = (φ - h - h̄) ∘ f^{-1}`.
#[derive(Clone, Debug)]
pub struct BochnerMap {
    pub center: Point,
    /// Components of `f` as series in `ζ = z - p`, degree ≤ 3.
    pub f: Vec<Series>,
    /// Pure holomorphic part of the Taylor expansion, degree ≤ 4.
    pub h: Series,
    /// Matrix `P` with `f = P ψ`; `P^T` squares to the inverse Hessian.
    pub sqrt_inverse: DMatrix<C64>,
    /// `Φ` as a series in `(w, w̄)` through order 4.
    pub phi_normal: Series,
    /// `Φ_{ij̄kl̄}(0)`.
    pub coeffs: Tensor4,
    pub hessian: DMatrix<C64>,
}

/// Hermitian inverse square root by eigendecomposition with eigenvalue floor.
pub fn inverse_sqrt(h: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    check_strictly_psh(h)?;
    let eig = h.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    if eig.eigenvalues.iter().any(|&l| l <= 1e-12 * max) {
        return Err(Error::NotStrictlyPsh("Hessian eigenvalue below floor".into()));
    }
    let d = DMatrix::from_diagonal(&DVector::from_iterator(
        h.nrows(),
        eig.eigenvalues.iter().map(|&l| C64::new(1.0 / l.sqrt(), 0.0)),
    ));
    Ok(&eig.eigenvectors * d * eig.eigenvectors.adjoint())
}

pub fn bochner_normal_map(jet: &Jet4) -> Result<BochnerMap> {
    let n = jet.dim();
    let hess = jet.hessian();
    let p_mat = inverse_sqrt(&hess)?.transpose();
    // ψ_k(ζ) = Σ_{1≤|α|≤3} D^α φ_{k̄}(p)/α! ζ^α
    let mut psi = Vec::with_capacity(n);
    for k in 0..n {
        let mut s = Series::zero(n, 3);
        for ((a, b), v) in jet.entries() {
            let deg: usize = a.iter().map(|&x| x as usize).sum();
            if *b == unit(n, k) && (1..=3).contains(&deg) {
                let fact: f64 = a.iter().map(|&x| crate::numerics::factorial(x as usize)).product();
                s.add_term(a.clone(), v / fact);
            }
        }
        psi.push(s);
    }
    let f: Vec<Series> = (0..n)
        .map(|j| {
            let mut s = Series::zero(n, 4);
            for (k, pk) in psi.iter().enumerate() {
                s = &s + &pk.truncate(4).scale(p_mat[(j, k)]);
            }
            s
        })
        .collect();
    let taylor = jet.to_series();
    // h = ½φ(p) + pure holomorphic terms of order 1..4
    let mut h = Series::constant(n, 4, 0.5 * taylor.constant_term());
    for (e, c) in taylor.terms() {
        let hol: usize = e[..n].iter().map(|&x| x as usize).sum();
        if hol >= 1 && e[n..].iter().all(|&x| x == 0) {
            h.add_term(e[..n].to_vec(), *c);
        }
    }
    let reduced = &(&taylor - &h.embed(false)) - &h.embed(true);
    let g = inverse_map(&f)?;
    let inner: Vec<Series> = g
        .iter()
        .map(|gi| gi.embed(false))
        .chain(g.iter().map(|gi| gi.embed(true)))
        .collect();
    let phi_normal = reduced.compose(&inner);
    let mut coeffs = Tensor4::zeros(n);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    let a = pair(n, i, k);
                    let b = pair(n, j, l);
                    let mut e = a.clone();
                    e.extend_from_slice(&b);
                    let fact: f64 =
                        e.iter().map(|&x| crate::numerics::factorial(x as usize)).product();
                    coeffs.set(i, j, k, l, phi_normal.coef(&e) * fact);
                }
            }
        }
    }
    Ok(BochnerMap { center: jet.point.clone(), f, h, sqrt_inverse: p_mat, phi_normal, coeffs, hessian: hess })
}

/// Deviations of a Bochner map from its defining normalizations.
#[derive(Clone, Debug, Serialize)]
pub struct BochnerInvariants {
    /// `max |Φ_{ij̄}(0) - δ_ij|`
    pub hessian: f64,
    /// `max |D^α_w Φ(0)|`, `|α| ≤ 4`
    pub pure: f64,
    /// `max |D^β_w Φ_{k̄}(0)|`, `2 ≤ |β| ≤ 3`, and conjugates
    pub mixed: f64,
    /// `| |J(f)(p)|² - det φ_{kl̄}(p) |` relative to the determinant
    pub jacobian: f64,
}

impl BochnerInvariants {
    pub fn max(&self) -> f64 {
        self.hessian.max(self.pure).max(self.mixed).max(self.jacobian)
    }
}

impl BochnerMap {
    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn invariants(&self) -> BochnerInvariants {
        let n = self.dim();
        let fact = |e: &[u8]| -> f64 { e.iter().map(|&x| crate::numerics::factorial(x as usize)).product() };
        let mut out = BochnerInvariants { hessian: 0.0, pure: 0.0, mixed: 0.0, jacobian: 0.0 };
        for i in 0..n {
            for j in 0..n {
                let mut e = unit(n, i);
                e.extend(unit(n, j));
                let target = if i == j { 1.0 } else { 0.0 };
                out.hessian = out.hessian.max((self.phi_normal.coef(&e) - target).norm());
            }
        }
        for (e, c) in self.phi_normal.terms() {
            let hol: usize = e[..n].iter().map(|&x| x as usize).sum();
            let anti: usize = e[n..].iter().map(|&x| x as usize).sum();
            let d = (c * fact(e)).norm();
            if hol == 0 || anti == 0 {
                out.pure = out.pure.max(d);
            } else if (anti == 1 && (2..=3).contains(&hol)) || (hol == 1 && (2..=3).contains(&anti)) {
                out.mixed = out.mixed.max(d);
            }
        }
        let jac = linear_part(&self.f).determinant().norm_sqr();
        let det = self.hessian.determinant().re;
        out.jacobian = ((jac - det) / det).abs();
        out
    }

    /// `df_p(X)`.
    pub fn push_forward(&self, x: &[C64]) -> Vec<C64> {
        let a = linear_part(&self.f);
        (0..self.dim()).map(|i| (0..self.dim()).map(|j| a[(i, j)] * x[j]).sum()).collect()
    }

    /// `Φ(w)` evaluated exactly: solves `f(ζ) = w` by Newton's method and
    /// returns `φ(p + ζ) - 2 Re h(ζ)`.
    pub fn phi_exact(&self, phi: &dyn Potential, w: &[C64]) -> Result<f64> {
        let n = self.dim();
        let g = inverse_map(&self.f)?;
        let mut zeta: Vec<C64> = g.iter().map(|s| s.eval(w)).collect();
        let jac_series: Vec<Vec<Series>> =
            self.f.iter().map(|fi| (0..n).map(|j| fi.derivative(j)).collect()).collect();
        for _ in 0..50 {
            let r = DVector::from_iterator(n, self.f.iter().zip(w).map(|(fi, wi)| fi.eval(&zeta) - wi));
            if r.norm() <= 1e-17 * (1.0 + w.iter().map(|c| c.norm()).sum::<f64>()) {
                break;
            }
            let j = DMatrix::from_fn(n, n, |a, b| jac_series[a][b].eval(&zeta));
            let step = j
                .lu()
                .solve(&r)
                .ok_or_else(|| Error::InvalidArgument("singular Jacobian in Newton solve".into()))?;
            for (z, s) in zeta.iter_mut().zip(step.iter()) {
                *z -= s;
            }
            if step.norm() <= 1e-18 {
                break;
            }
        }
        let z: Vec<C64> = self.center.iter().zip(&zeta).map(|(p, d)| p + d).collect();
        Ok(phi.value(&z) - 2.0 * self.h.eval(&zeta).re)
    }

    /// `|w|² + ¼ Σ Φ_{ij̄kl̄}(0) w_i w̄_j w_k w̄_l`.
    pub fn quartic_model(&self, w: &[C64]) -> f64 {
        let n = self.dim();
        let mut v = C64::new(w.iter().map(|c| c.norm_sqr()).sum(), 0.0);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        v += 0.25 * self.coeffs.get(i, j, k, l) * w[i] * w[j].conj() * w[k] * w[l].conj();
                    }
                }
            }
        }
        v.re
    }
}

/// Unitary matrix whose first column is `v/|v|`.
pub fn unitary_completion(v: &[C64]) -> Result<DMatrix<C64>> {
    let n = v.len();
    let norm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::InvalidArgument("zero direction".into()));
    }
    let mut cols: Vec<DVector<C64>> = vec![DVector::from_iterator(n, v.iter().map(|c| c / norm))];
    for e in 0..n {
        if cols.len() == n {
            break;
        }
        let mut c = DVector::from_fn(n, |i, _| if i == e { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) });
        for q in &cols {
            let proj = q.dotc(&c);
            c -= q * proj;
        }
        let cn = c.norm();
        if cn > 1e-8 {
            cols.push(c / C64::new(cn, 0.0));
        }
    }
    Ok(DMatrix::from_columns(&cols))
}

#[derive(Clone, Debug, Serialize)]
pub struct CurvatureReport {
    pub scalar: f64,
    pub ricci_along: f64,
    pub hsc: f64,
    pub convention: &'static str,
}

pub const CURVATURE_CONVENTION: &str = "R = -∂∂̄g + g⁻¹∂g∂̄g; H(X) = R(X,X̄,X,X̄)/g(X,X̄)²";

/// Scalar curvature, Ricci curvature along `X` and holomorphic sectional
/// curvature along `X` from the fourth-order coefficients of `Φ`.
pub fn curvature_from_jet(map: &BochnerMap, x: &[C64]) -> Result<CurvatureReport> {
    let n = map.dim();
    let mut scalar = C64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            scalar -= map.coeffs.get(i, i, j, j);
        }
    }
    let u = unitary_completion(&map.push_forward(x))?;
    let t = map.coeffs.in_frame(&u);
    let mut ricci = C64::new(0.0, 0.0);
    for i in 0..n {
        ricci -= t.get(0, 0, i, i);
    }
    Ok(CurvatureReport {
        scalar: scalar.re,
        ricci_along: ricci.re,
        hsc: -t.get(0, 0, 0, 0).re,
        convention: CURVATURE_CONVENTION,
    })
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (sx, sy) = points.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x.ln(), b + y.ln()));
    let (mx, my) = (sx / n, sy / n);
    let (mut num, mut den) = (0.0, 0.0);
    for (x, y) in points {
        num += (x.ln() - mx) * (y.ln() - my);
        den += (x.ln() - mx).powi(2);
    }
    num / den
}

/// `sup_X |Φ(ρX) - quartic model|` over the unit `directions` for each `ρ`;
/// returns `(ρ, remainder)` pairs.
pub fn quintic_remainder(
    map: &BochnerMap,
    phi: &dyn Potential,
    directions: &[Vec<C64>],
    radii: &[f64],
) -> Result<Vec<(f64, f64)>> {
    radii
        .iter()
        .map(|&rho| {
            let mut worst = 0.0f64;
            for d in directions {
                let norm = d.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
                let w: Vec<C64> = d.iter().map(|c| c * (rho / norm)).collect();
                let exact = map.phi_exact(phi, &w)?;
                worst = worst.max((exact - map.quartic_model(&w)).abs());
            }
            Ok((rho, worst))
        })
        .collect()
}

/// Deterministic spread of unit directions in `C^n`: phases on each
/// coordinate axis and on the diagonals.
pub fn sample_directions(n: usize, phases: usize) -> Vec<Vec<C64>> {
    let mut out = Vec::new();
    for k in 0..phases {
        let t = 2.0 * std::f64::consts::PI * k as f64 / phases as f64;
        let e = C64::from_polar(1.0, t);
        for i in 0..n {
            let mut d = vec![C64::new(0.0, 0.0); n];
            d[i] = e;
            out.push(d);
        }
        if n > 1 {
            for j in 1..n {
                let mut d = vec![C64::new(1.0, 0.0); n];
                d[j] = e;
                out.push(d);
            }
        }
    }
    out
}

/// Index tables of `Φ_{ij̄kl̄}` for reporting.
pub fn coefficient_table(map: &BochnerMap) -> BTreeMap<String, (f64, f64)> {
    let n = map.dim();
    let mut out = BTreeMap::new();
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    let v = map.coeffs.get(i, j, k, l);
                    out.insert(format!("{}{}{}{}", i + 1, j + 1, k + 1, l + 1), (v.re, v.im));
                }
            }
        }
    }
    out
}
