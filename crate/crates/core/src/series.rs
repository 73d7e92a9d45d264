//! Truncated multivariate power series with complex coefficients.
//!
//! Jets of potentials and kernels are handled as series in the `2n` independent
//! variables `(ζ_1, …, ζ_n, ζ̄_1, …, ζ̄_n)`: variable `i < n` is `ζ_i` and
//! variable `n + i` is `ζ̄_i`. Holomorphic maps are series in `n` variables.
//! Every series carries a total-degree truncation order; products and
//! compositions drop terms above it.

use std::collections::BTreeMap;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::C64;

/// Exponent vector of a monomial.
pub type Exponents = Vec<u8>;

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    nvars: usize,
    order: usize,
    terms: BTreeMap<Exponents, C64>,
}

fn degree(e: &[u8]) -> usize {
    e.iter().map(|&k| k as usize).sum()
}

impl Series {
    pub fn zero(nvars: usize, order: usize) -> Self {
        Self { nvars, order, terms: BTreeMap::new() }
    }

    pub fn constant(nvars: usize, order: usize, c: C64) -> Self {
        let mut s = Self::zero(nvars, order);
        s.add_term(vec![0; nvars], c);
        s
    }

    /// The coordinate function `x_i`.
    pub fn var(nvars: usize, order: usize, i: usize) -> Self {
        let mut s = Self::zero(nvars, order);
        let mut e = vec![0; nvars];
        e[i] = 1;
        s.add_term(e, C64::new(1.0, 0.0));
        s
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Accumulates `c` onto the coefficient of `x^e`; terms above the order are dropped.
    pub fn add_term(&mut self, e: Exponents, c: C64) {
        assert_eq!(e.len(), self.nvars, "exponent length mismatch");
        if degree(&e) > self.order || c == C64::new(0.0, 0.0) {
            return;
        }
        *self.terms.entry(e).or_insert(C64::new(0.0, 0.0)) += c;
    }

    pub fn coef(&self, e: &[u8]) -> C64 {
        self.terms.get(e).copied().unwrap_or_default()
    }

    pub fn constant_term(&self) -> C64 {
        self.coef(&vec![0; self.nvars])
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Exponents, &C64)> {
        self.terms.iter()
    }

    pub fn scale(&self, c: C64) -> Self {
        let mut out = Self::zero(self.nvars, self.order);
        for (e, v) in &self.terms {
            out.add_term(e.clone(), v * c);
        }
        out
    }

    /// Returns a copy with a (possibly lower) truncation order.
    pub fn truncate(&self, order: usize) -> Self {
        let mut out = Self::zero(self.nvars, order);
        for (e, v) in &self.terms {
            out.add_term(e.clone(), *v);
        }
        out
    }

    /// Terms of total degree exactly `d`.
    pub fn homogeneous_part(&self, d: usize) -> Self {
        let mut out = Self::zero(self.nvars, self.order);
        for (e, v) in &self.terms {
            if degree(e) == d {
                out.add_term(e.clone(), *v);
            }
        }
        out
    }

    pub fn max_abs_coef(&self) -> f64 {
        self.terms.values().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn pow(&self, k: usize) -> Self {
        let mut out = Self::constant(self.nvars, self.order, C64::new(1.0, 0.0));
        for _ in 0..k {
            out = &out * self;
        }
        out
    }

    pub fn eval(&self, x: &[C64]) -> C64 {
        assert_eq!(x.len(), self.nvars);
        self.terms
            .iter()
            .map(|(e, c)| {
                e.iter()
                    .zip(x)
                    .fold(*c, |acc, (&k, xi)| acc * xi.powu(k as u32))
            })
            .sum()
    }

    /// Substitutes `inner[i]` for variable `i`.
    ///
    /// The inner series should have vanishing constant terms, otherwise the
    /// truncation of `self` leaks into low orders.
    pub fn compose(&self, inner: &[Series]) -> Series {
        assert_eq!(inner.len(), self.nvars, "one inner series per variable");
        let nv = inner.first().map(|s| s.nvars).unwrap_or(0);
        let order = inner.iter().map(|s| s.order).min().unwrap_or(self.order);
        let max_pow = self
            .terms
            .keys()
            .flat_map(|e| e.iter().copied())
            .max()
            .unwrap_or(0) as usize;
        let powers: Vec<Vec<Series>> = inner
            .iter()
            .map(|s| {
                let s = s.truncate(order);
                let mut p = vec![Series::constant(nv, order, C64::new(1.0, 0.0))];
                for k in 1..=max_pow {
                    let next = &p[k - 1] * &s;
                    p.push(next);
                }
                p
            })
            .collect();
        let mut out = Series::zero(nv, order);
        for (e, c) in &self.terms {
            let mut term = Series::constant(nv, order, *c);
            for (i, &k) in e.iter().enumerate() {
                if k > 0 {
                    term = &term * &powers[i][k as usize];
                }
            }
            out = &out + &term;
        }
        out
    }

    /// Applies a univariate power series `Σ a_k t^k` to the non-constant part.
    fn apply_univariate(&self, head: C64, coeffs: impl Fn(usize) -> C64) -> Series {
        let mut delta = self.clone();
        delta.terms.remove(&vec![0; self.nvars]);
        let mut out = Series::constant(self.nvars, self.order, head);
        let mut dk = Series::constant(self.nvars, self.order, C64::new(1.0, 0.0));
        for k in 1..=self.order {
            dk = &dk * &delta;
            out = &out + &dk.scale(coeffs(k));
        }
        out
    }

    /// `log(self)` for a series with nonzero constant term.
    pub fn ln(&self) -> Result<Series> {
        let c0 = self.constant_term();
        if c0.norm() == 0.0 {
            return Err(Error::InvalidArgument("log of a series with zero constant term".into()));
        }
        Ok(self.apply_univariate(c0.ln(), |k| {
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            C64::new(sign / k as f64, 0.0) / c0.powu(k as u32)
        }))
    }

    pub fn recip(&self) -> Result<Series> {
        let c0 = self.constant_term();
        if c0.norm() == 0.0 {
            return Err(Error::InvalidArgument("reciprocal of a series with zero constant term".into()));
        }
        Ok(self.apply_univariate(c0.inv(), |k| {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            C64::new(sign, 0.0) / c0.powu(k as u32 + 1)
        }))
    }

    pub fn exp(&self) -> Series {
        let c0 = self.constant_term();
        let e0 = c0.exp();
        let mut fact = 1.0;
        let facts: Vec<f64> = (0..=self.order)
            .map(|k| {
                if k > 0 {
                    fact *= k as f64;
                }
                fact
            })
            .collect();
        self.apply_univariate(e0, |k| e0 / facts[k])
    }

    /// For a series in `(ζ, ζ̄)` (2n variables) returns the series of the
    /// complex conjugate function: `coef(a, b) ↦ conj(coef(b, a))`.
    pub fn conjugate_function(&self) -> Series {
        let n = self.nvars / 2;
        let mut out = Series::zero(self.nvars, self.order);
        for (e, c) in &self.terms {
            let mut swapped = e[n..].to_vec();
            swapped.extend_from_slice(&e[..n]);
            out.add_term(swapped, c.conj());
        }
        out
    }

    /// Embeds a series in `n` variables into `2n` variables, either as a
    /// holomorphic series (first block) or, conjugating coefficients, as the
    /// antiholomorphic conjugate (second block).
    pub fn embed(&self, conjugate: bool) -> Series {
        let n = self.nvars;
        let mut out = Series::zero(2 * n, self.order);
        for (e, c) in &self.terms {
            let mut full = vec![0; 2 * n];
            if conjugate {
                full[n..].copy_from_slice(e);
                out.add_term(full, c.conj());
            } else {
                full[..n].copy_from_slice(e);
                out.add_term(full, *c);
            }
        }
        out
    }

    /// Partial derivative with respect to variable `i`.
    pub fn derivative(&self, i: usize) -> Series {
        let mut out = Series::zero(self.nvars, self.order.saturating_sub(1));
        for (e, c) in &self.terms {
            if e[i] > 0 {
                let mut d = e.clone();
                d[i] -= 1;
                out.add_term(d, c * e[i] as f64);
            }
        }
        out
    }

    /// Terms of a `(ζ, ζ̄)` series with no `ζ̄` dependence, as a series in `n` variables.
    pub fn holomorphic_part(&self) -> Series {
        let n = self.nvars / 2;
        let mut out = Series::zero(n, self.order);
        for (e, c) in &self.terms {
            if e[n..].iter().all(|&k| k == 0) {
                out.add_term(e[..n].to_vec(), *c);
            }
        }
        out
    }
}

impl Add for &Series {
    type Output = Series;
    fn add(self, rhs: &Series) -> Series {
        assert_eq!(self.nvars, rhs.nvars);
        let mut out = Series::zero(self.nvars, self.order.min(rhs.order));
        for (e, c) in self.terms.iter().chain(rhs.terms.iter()) {
            out.add_term(e.clone(), *c);
        }
        out
    }
}

impl Sub for &Series {
    type Output = Series;
    fn sub(self, rhs: &Series) -> Series {
        self + &(-rhs)
    }
}

impl Neg for &Series {
    type Output = Series;
    fn neg(self) -> Series {
        self.scale(C64::new(-1.0, 0.0))
    }
}

impl Mul for &Series {
    type Output = Series;
    fn mul(self, rhs: &Series) -> Series {
        assert_eq!(self.nvars, rhs.nvars);
        let order = self.order.min(rhs.order);
        let mut out = Series::zero(self.nvars, order);
        for (ea, ca) in &self.terms {
            let da = degree(ea);
            if da > order {
                continue;
            }
            for (eb, cb) in &rhs.terms {
                if da + degree(eb) > order {
                    continue;
                }
                let e: Exponents = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                out.add_term(e, ca * cb);
            }
        }
        out
    }
}

/// Linear part of a map given as `n` series in `n` variables: `A[i][j] = ∂f_i/∂x_j(0)`.
pub fn linear_part(map: &[Series]) -> DMatrix<C64> {
    let n = map.len();
    DMatrix::from_fn(n, n, |i, j| {
        let mut e = vec![0; n];
        e[j] = 1;
        map[i].coef(&e)
    })
}

/// Formal inverse of a map `f` with `f(0) = 0` and invertible linear part,
/// through the truncation order of `f`.
pub fn inverse_map(map: &[Series]) -> Result<Vec<Series>> {
    let n = map.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let order = map.iter().map(|s| s.order).min().unwrap_or(0);
    for s in map {
        if s.nvars != n {
            return Err(Error::InvalidArgument("map must be square".into()));
        }
        if s.constant_term().norm() > 0.0 {
            return Err(Error::InvalidArgument("map must fix the origin".into()));
        }
    }
    let a = linear_part(map);
    let a_inv = a
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidArgument("map has singular linear part".into()))?;
    // nonlinear remainder N(x) = f(x) - A x
    let nonlinear: Vec<Series> = map
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mut lin = Series::zero(n, order);
            for j in 0..n {
                lin = &lin + &Series::var(n, order, j).scale(a[(i, j)]);
            }
            s - &lin
        })
        .collect();
    let vars: Vec<Series> = (0..n).map(|j| Series::var(n, order, j)).collect();
    let mut g: Vec<Series> = (0..n)
        .map(|i| {
            let mut s = Series::zero(n, order);
            for j in 0..n {
                s = &s + &vars[j].scale(a_inv[(i, j)]);
            }
            s
        })
        .collect();
    // g = A^{-1}(w - N(g)); each pass fixes one more order
    for _ in 1..order {
        let ng: Vec<Series> = nonlinear.iter().map(|s| s.compose(&g)).collect();
        let rhs: Vec<Series> = (0..n).map(|j| &vars[j] - &ng[j]).collect();
        g = (0..n)
            .map(|i| {
                let mut s = Series::zero(n, order);
                for j in 0..n {
                    s = &s + &rhs[j].scale(a_inv[(i, j)]);
                }
                s
            })
            .collect();
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn log_of_one_minus_t_matches_taylor() {
        let t = Series::var(1, 6, 0);
        let one = Series::constant(1, 6, c(1.0));
        let s = (&one - &t).ln().unwrap();
        for k in 1..=6u8 {
            assert_relative_eq!(s.coef(&[k]).re, -1.0 / k as f64, epsilon = 1e-15);
        }
    }

    #[test]
    fn exp_log_roundtrip() {
        let mut s = Series::constant(2, 4, c(2.0));
        s.add_term(vec![1, 0], C64::new(0.3, 0.1));
        s.add_term(vec![1, 1], c(-0.7));
        s.add_term(vec![0, 3], c(0.25));
        let back = s.ln().unwrap().exp();
        for (e, v) in s.terms() {
            assert!((back.coef(e) - v).norm() < 1e-13);
        }
        assert!((&back - &s).max_abs_coef() < 1e-13);
    }

    #[test]
    fn recip_times_self_is_one() {
        let mut s = Series::constant(2, 4, c(3.0));
        s.add_term(vec![2, 1], c(1.5));
        s.add_term(vec![0, 1], C64::new(0.0, 2.0));
        let p = &s * &s.recip().unwrap();
        assert!((&p - &Series::constant(2, 4, c(1.0))).max_abs_coef() < 1e-14);
    }

    #[test]
    fn inverse_map_composes_to_identity() {
        let order = 4;
        let x = Series::var(2, order, 0);
        let y = Series::var(2, order, 1);
        let f0 = &(&x.scale(c(2.0)) + &y) + &(&x * &y).scale(C64::new(0.5, 0.2));
        let f1 = &(&y.scale(c(1.5)) + &x.pow(2)) + &y.pow(3).scale(c(-0.3));
        let f = vec![f0, f1];
        let g = inverse_map(&f).unwrap();
        for (i, fi) in f.iter().enumerate() {
            let id = fi.compose(&g);
            let expected = Series::var(2, order, i);
            assert!((&id - &expected).max_abs_coef() < 1e-13, "component {i}");
        }
    }

    #[test]
    fn conjugate_function_swaps_blocks() {
        let mut s = Series::zero(2, 4);
        s.add_term(vec![2, 1], C64::new(1.0, 2.0));
        let cs = s.conjugate_function();
        assert_eq!(cs.coef(&[1, 2]), C64::new(1.0, -2.0));
        assert_eq!(cs.coef(&[2, 1]), C64::new(0.0, 0.0));
    }
}
