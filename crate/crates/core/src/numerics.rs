//! Quadrature rules, radial moments, Gram factorization and least-norm solves.

use std::num::NonZeroUsize;
use std::sync::atomic::{AtomicU64, Ordering};

use gauss_quad::GaussLegendre;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::domains::{DomainSpec, WeightSpec};
use crate::error::{Error, Result};
use crate::{Point, C64};

/// Exponent vector of a monomial `z^α`. Entries may be negative for Laurent
/// monomials on the annulus.
pub type MultiIndex = Vec<i32>;

/// All multi-indices in `n` variables of total degree `≤ max_degree`,
/// graded by degree and lexicographic within a degree (`z_1` before `z_2`).
pub fn graded_indices(n: usize, max_degree: usize) -> Vec<MultiIndex> {
    let mut out = Vec::new();
    for d in 0..=max_degree {
        let mut level = Vec::new();
        compositions(n, d as i32, &mut vec![0; n], 0, &mut level);
        out.extend(level);
    }
    out
}

fn compositions(n: usize, rest: i32, cur: &mut Vec<i32>, pos: usize, out: &mut Vec<MultiIndex>) {
    if pos + 1 == n {
        cur[pos] = rest;
        out.push(cur.clone());
        return;
    }
    for k in (0..=rest).rev() {
        cur[pos] = k;
        compositions(n, rest - k, cur, pos + 1, out);
    }
}

/// Laurent exponents `0, 1, -1, 2, -2, …, max_degree, -max_degree` in one variable.
pub fn laurent_indices(max_degree: usize) -> Vec<MultiIndex> {
    let mut out = vec![vec![0]];
    for k in 1..=max_degree as i32 {
        out.push(vec![k]);
        out.push(vec![-k]);
    }
    out
}

/// `k (k-1) ⋯ (k-j+1)`, valid for negative `k`.
pub fn falling(k: i32, j: usize) -> f64 {
    (0..j).map(|i| (k - i as i32) as f64).product()
}

pub fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

pub fn ln_factorial(k: usize) -> f64 {
    (2..=k).map(|i| (i as f64).ln()).sum()
}

/// Evaluates `D^γ z^α` at `p` (holomorphic derivatives).
pub fn monomial_derivative(alpha: &[i32], gamma: &[usize], p: &[C64]) -> C64 {
    let mut v = C64::new(1.0, 0.0);
    for ((&a, &g), &z) in alpha.iter().zip(gamma).zip(p) {
        let f = falling(a, g);
        if f == 0.0 {
            return C64::new(0.0, 0.0);
        }
        v *= f * powi(z, a - g as i32);
    }
    v
}

pub fn powi(z: C64, k: i32) -> C64 {
    if k >= 0 {
        z.powu(k as u32)
    } else {
        z.inv().powu((-k) as u32)
    }
}

pub fn monomial(alpha: &[i32], z: &[C64]) -> C64 {
    alpha.iter().zip(z).map(|(&a, &zi)| powi(zi, a)).product()
}

/// Gauss–Legendre nodes and weights mapped to `[a, b]`.
pub fn gauss_legendre(n: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let n = NonZeroUsize::new(n.max(1)).expect("nonzero");
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    GaussLegendre::new(n)
        .as_node_weight_pairs()
        .iter()
        .map(|&(x, w)| (mid + half * x, half * w))
        .collect()
}

// Gauss–Kronrod 7/15 abscissae and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Adaptive Gauss–Kronrod integration of `f` over `[a, b]` to relative tolerance `rel_tol`.
pub fn adaptive_integrate(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> Result<f64> {
    const MAX_INTERVALS: usize = 4000;
    let (v, e) = gk15(&mut f, a, b);
    let mut intervals = vec![(a, b, v, e)];
    loop {
        let total: f64 = intervals.iter().map(|t| t.2).sum();
        let err: f64 = intervals.iter().map(|t| t.3).sum();
        if !total.is_finite() || !err.is_finite() {
            return Err(Error::Integrability(format!("non-finite integrand on [{a}, {b}]")));
        }
        if err <= rel_tol * total.abs() || err <= f64::MIN_POSITIVE {
            return Ok(total);
        }
        if intervals.len() >= MAX_INTERVALS {
            return Err(Error::Integrability(format!(
                "adaptive quadrature did not converge on [{a}, {b}] (estimate {total:e}, error {err:e})"
            )));
        }
        let (worst, _) = intervals
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("nonempty");
        let (lo, hi, _, _) = intervals.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(&mut f, lo, mid);
        let (v2, e2) = gk15(&mut f, mid, hi);
        intervals.push((lo, mid, v1, e1));
        intervals.push((mid, hi, v2, e2));
    }
}

const RADIAL_TOL: f64 = 1e-12;

/// `∫_Ω |z^α|² μ dλ` by reduction to radial integrals.
pub fn radial_moment(domain: &DomainSpec, weight: &WeightSpec, alpha: &[i32]) -> Result<f64> {
    if !domain.is_reinhardt() {
        return Err(Error::UnsupportedReduction("domain is not Reinhardt".into()));
    }
    if !weight.is_radial() {
        return Err(Error::UnsupportedReduction("weight is not a function of the moduli".into()));
    }
    if weight.is_tabulated() {
        return Err(Error::UnsupportedReduction("tabulated weights have no pointwise values".into()));
    }
    let n = domain.dim();
    if alpha.len() != n {
        return Err(Error::InvalidArgument(format!("multi-index has length {}, expected {n}", alpha.len())));
    }
    // the weight evaluated at the orbit representative with |z_i|² = t_i
    let mu = |t: &[f64]| -> f64 {
        let z: Point = t.iter().map(|&ti| C64::new(ti.max(0.0).sqrt(), 0.0)).collect();
        weight.eval(&z).unwrap_or(f64::NAN)
    };
    let pi_n = std::f64::consts::PI.powi(n as i32);
    let value = match domain {
        DomainSpec::Ball { r, .. } => {
            let r2 = r * r;
            if alpha.iter().any(|&a| a < 0) {
                return Err(Error::Integrability("negative exponent on a domain containing the origin".into()));
            }
            if weight.depends_only_on_norm() {
                // Dirichlet integral over the simplex Σ t_i = s
                let deg: i32 = alpha.iter().sum();
                let ln_c = alpha.iter().map(|&a| ln_factorial(a as usize)).sum::<f64>()
                    - ln_factorial(deg as usize + n - 1);
                let k = deg + n as i32 - 1;
                let mut t = vec![0.0; n];
                let v = adaptive_integrate(
                    |s| {
                        t[0] = s;
                        s.powi(k) * mu(&t)
                    },
                    0.0,
                    r2,
                    RADIAL_TOL,
                )?;
                pi_n * ln_c.exp() * v
            } else {
                pi_n * nested_simplex(n, r2, alpha, &mu)?
            }
        }
        DomainSpec::Polydisc { radii } => {
            let bounds: Vec<(f64, f64)> = radii.iter().map(|r| (0.0, r * r)).collect();
            if alpha.iter().any(|&a| a < 0) {
                return Err(Error::Integrability("negative exponent on a domain containing the origin".into()));
            }
            pi_n * nested_box(&bounds, alpha, &mu)?
        }
        DomainSpec::Annulus { r_in, r_out } => {
            pi_n * nested_box(&[(r_in * r_in, r_out * r_out)], alpha, &mu)?
        }
        DomainSpec::GeneralPlanar(_) => unreachable!("checked Reinhardt above"),
    };
    if !value.is_finite() || value <= 0.0 {
        return Err(Error::Integrability(format!("moment evaluated to {value}")));
    }
    Ok(value)
}

fn nested_box(bounds: &[(f64, f64)], alpha: &[i32], mu: &dyn Fn(&[f64]) -> f64) -> Result<f64> {
    fn rec(
        level: usize,
        t: &mut Vec<f64>,
        bounds: &[(f64, f64)],
        alpha: &[i32],
        mu: &dyn Fn(&[f64]) -> f64,
    ) -> Result<f64> {
        if level == bounds.len() {
            return Ok(mu(t));
        }
        let (a, b) = bounds[level];
        let mut failure = None;
        let v = adaptive_integrate(
            |x| {
                t[level] = x;
                match rec(level + 1, t, bounds, alpha, mu) {
                    Ok(inner) => x.powi(alpha[level]) * inner,
                    Err(e) => {
                        failure = Some(e);
                        f64::NAN
                    }
                }
            },
            a,
            b,
            RADIAL_TOL,
        );
        if let Some(e) = failure {
            return Err(e);
        }
        v
    }
    rec(0, &mut vec![0.0; bounds.len()], bounds, alpha, mu)
}

fn nested_simplex(n: usize, r2: f64, alpha: &[i32], mu: &dyn Fn(&[f64]) -> f64) -> Result<f64> {
    fn rec(
        level: usize,
        rest: f64,
        t: &mut Vec<f64>,
        alpha: &[i32],
        mu: &dyn Fn(&[f64]) -> f64,
    ) -> Result<f64> {
        let n = t.len();
        if level == n {
            return Ok(mu(t));
        }
        let mut failure = None;
        let v = adaptive_integrate(
            |x| {
                t[level] = x;
                match rec(level + 1, rest - x, t, alpha, mu) {
                    Ok(inner) => x.powi(alpha[level]) * inner,
                    Err(e) => {
                        failure = Some(e);
                        f64::NAN
                    }
                }
            },
            0.0,
            rest.max(0.0),
            RADIAL_TOL,
        );
        if let Some(e) = failure {
            return Err(e);
        }
        v
    }
    rec(0, r2, &mut vec![0.0; n], alpha, mu)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
pub enum Tier {
    /// Torus-orbit representatives with exact angular integration.
    SpectralRadial,
    /// Masked tensor grid in the plane.
    Grid,
}

static NEXT_RULE_ID: AtomicU64 = AtomicU64::new(1);

/// A quadrature rule for Lebesgue measure on a domain.
///
/// On the spectral-radial tier each node is the representative
/// `(|z_1|, …, |z_n|)` of a torus orbit and its weight carries the full
/// angular measure, so the rule integrates functions of the moduli only.
#[derive(Clone, Debug)]
pub struct QuadratureRule {
    id: u64,
    pub nodes: Vec<Point>,
    pub weights: Vec<f64>,
    pub tier: Tier,
    pub reported_accuracy: f64,
    pub domain: DomainSpec,
    pub resolution: usize,
}

impl QuadratureRule {
    /// Identity used to bind tabulated weights.
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(&[C64]) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(z, w)| w * f(z)).sum()
    }

    pub fn orbit_reduced(&self) -> bool {
        self.tier == Tier::SpectralRadial
    }

    /// Squared moduli `|z_i|²` of every node.
    pub fn moduli_sq(&self) -> Vec<Vec<f64>> {
        self.nodes.iter().map(|z| z.iter().map(|c| c.norm_sqr()).collect()).collect()
    }
}

/// Radial node count that integrates a Gram diagonal of degree `max_degree`
/// against a weight of polynomial degree `weight_degree` exactly.
pub fn radial_resolution(base: usize, n: usize, max_degree: usize, weight_degree: usize) -> usize {
    base.max((max_degree + weight_degree + n).div_ceil(2) + 8)
}

pub fn build_quadrature(domain: &DomainSpec, resolution: usize) -> Result<QuadratureRule> {
    if resolution == 0 {
        return Err(Error::EmptyRule("resolution must be positive".into()));
    }
    match domain {
        DomainSpec::GeneralPlanar(_) => grid_rule(domain, resolution),
        _ => radial_rule(domain, resolution),
    }
}

fn radial_rule(domain: &DomainSpec, resolution: usize) -> Result<QuadratureRule> {
    let n = domain.dim();
    let pi_n = std::f64::consts::PI.powi(n as i32);
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    match domain {
        DomainSpec::Ball { r, .. } => {
            let s_rule = gauss_legendre(resolution, 0.0, r * r);
            let u_rule = gauss_legendre(resolution, 0.0, 1.0);
            let mut idx = vec![0usize; n.saturating_sub(1)];
            loop {
                for &(s, ws) in &s_rule {
                    // stick-breaking map from (s, u_1, …, u_{n-1}) to the simplex Σ t = s
                    let mut t = Vec::with_capacity(n);
                    let mut rest = s;
                    let mut w = ws * s.powi(n as i32 - 1);
                    for (j, &k) in idx.iter().enumerate() {
                        let (u, wu) = u_rule[k];
                        t.push(rest * u);
                        w *= wu * (1.0 - u).powi((n - 2 - j) as i32);
                        rest *= 1.0 - u;
                    }
                    t.push(rest);
                    nodes.push(t.iter().map(|&ti| C64::new(ti.sqrt(), 0.0)).collect());
                    weights.push(pi_n * w);
                }
                if !advance(&mut idx, resolution) {
                    break;
                }
            }
        }
        DomainSpec::Polydisc { radii } => {
            let rules: Vec<_> = radii.iter().map(|r| gauss_legendre(resolution, 0.0, r * r)).collect();
            let mut idx = vec![0usize; n];
            loop {
                let mut w = pi_n;
                let mut z = Vec::with_capacity(n);
                for (j, &k) in idx.iter().enumerate() {
                    let (t, wt) = rules[j][k];
                    w *= wt;
                    z.push(C64::new(t.sqrt(), 0.0));
                }
                nodes.push(z);
                weights.push(w);
                if !advance(&mut idx, resolution) {
                    break;
                }
            }
        }
        DomainSpec::Annulus { r_in, r_out } => {
            // geometric panels keep Laurent monomials t^k well resolved
            let (a, b) = (r_in * r_in, r_out * r_out);
            let panels = ((b / a).ln() / 1.5f64.ln()).ceil().max(1.0) as usize;
            let q = (b / a).powf(1.0 / panels as f64);
            for p in 0..panels {
                let lo = a * q.powi(p as i32);
                let hi = if p + 1 == panels { b } else { lo * q };
                for (t, w) in gauss_legendre(resolution, lo, hi) {
                    nodes.push(vec![C64::new(t.sqrt(), 0.0)]);
                    weights.push(std::f64::consts::PI * w);
                }
            }
        }
        DomainSpec::GeneralPlanar(_) => unreachable!(),
    }
    let mut rule = QuadratureRule {
        id: NEXT_RULE_ID.fetch_add(1, Ordering::Relaxed),
        nodes,
        weights,
        tier: Tier::SpectralRadial,
        reported_accuracy: 0.0,
        domain: domain.clone(),
        resolution,
    };
    rule.reported_accuracy = radial_self_test(&rule, resolution);
    Ok(rule)
}

fn advance(idx: &mut [usize], base: usize) -> bool {
    for k in idx.iter_mut().rev() {
        *k += 1;
        if *k < base {
            return true;
        }
        *k = 0;
    }
    false
}

/// Exact Lebesgue moment `∫ |z^α|² dλ` on a Reinhardt domain.
pub fn exact_unit_moment(domain: &DomainSpec, alpha: &[i32]) -> Option<f64> {
    use std::f64::consts::PI;
    match domain {
        DomainSpec::Ball { n, r } => {
            let deg: i32 = alpha.iter().sum();
            if alpha.iter().any(|&a| a < 0) {
                return None;
            }
            let ln = alpha.iter().map(|&a| ln_factorial(a as usize)).sum::<f64>()
                - ln_factorial(deg as usize + n)
                + 2.0 * (deg as f64 + *n as f64) * r.ln();
            Some(PI.powi(*n as i32) * ln.exp())
        }
        DomainSpec::Polydisc { radii } => {
            if alpha.iter().any(|&a| a < 0) {
                return None;
            }
            Some(
                radii
                    .iter()
                    .zip(alpha)
                    .map(|(r, &a)| PI * r.powi(2 * (a + 1)) / (a + 1) as f64)
                    .product(),
            )
        }
        DomainSpec::Annulus { r_in, r_out } => {
            let k = alpha[0];
            let (a, b) = (r_in * r_in, r_out * r_out);
            Some(if k == -1 {
                PI * (b / a).ln()
            } else {
                PI * (b.powi(k + 1) - a.powi(k + 1)) / (k + 1) as f64
            })
        }
        DomainSpec::GeneralPlanar(_) => None,
    }
}

fn radial_self_test(rule: &QuadratureRule, resolution: usize) -> f64 {
    let n = rule.domain.dim();
    let moduli = rule.moduli_sq();
    let mut worst: f64 = 0.0;
    let probe: Vec<MultiIndex> = match &rule.domain {
        DomainSpec::Annulus { .. } => laurent_indices(resolution.min(40)),
        _ => graded_indices(n, resolution.min(if n == 1 { 60 } else { 20 })),
    };
    for alpha in probe {
        let Some(exact) = exact_unit_moment(&rule.domain, &alpha) else { continue };
        let q: f64 = moduli
            .iter()
            .zip(&rule.weights)
            .map(|(t, w)| w * t.iter().zip(&alpha).map(|(ti, &a)| ti.powi(a)).product::<f64>())
            .sum();
        worst = worst.max(((q - exact) / exact).abs());
    }
    worst.max(1e-14)
}

const GRID_DEPTH: u32 = 6;

fn grid_rule(domain: &DomainSpec, resolution: usize) -> Result<QuadratureRule> {
    let (nodes, weights) = grid_nodes(domain, resolution);
    if nodes.is_empty() {
        return Err(Error::EmptyRule(format!("no grid node fell inside the domain at resolution {resolution}")));
    }
    let (fine_nodes, fine_weights) = grid_nodes(domain, 2 * resolution);
    let moments = |nodes: &[Point], weights: &[f64]| -> [f64; 3] {
        let mut m = [0.0; 3];
        for (z, w) in nodes.iter().zip(weights) {
            let t = z[0].norm_sqr();
            m[0] += w;
            m[1] += w * t;
            m[2] += w * t * t;
        }
        m
    };
    let coarse = moments(&nodes, &weights);
    let fine = moments(&fine_nodes, &fine_weights);
    let mut acc: f64 = 1e-14;
    for k in 0..3 {
        acc = acc.max(4.0 * ((coarse[k] - fine[k]) / fine[k]).abs());
    }
    Ok(QuadratureRule {
        id: NEXT_RULE_ID.fetch_add(1, Ordering::Relaxed),
        nodes,
        weights,
        tier: Tier::Grid,
        reported_accuracy: acc,
        domain: domain.clone(),
        resolution,
    })
}

fn grid_nodes(domain: &DomainSpec, resolution: usize) -> (Vec<Point>, Vec<f64>) {
    let DomainSpec::GeneralPlanar(planar) = domain else { unreachable!() };
    let [x0, x1, y0, y1] = planar.bbox;
    let hx = (x1 - x0) / resolution as f64;
    let hy = (y1 - y0) / resolution as f64;
    let gl = gauss_legendre(3, -0.5, 0.5);
    let cells: Vec<(usize, usize)> =
        (0..resolution).flat_map(|i| (0..resolution).map(move |j| (i, j))).collect();
    let per_cell: Vec<Vec<(C64, f64)>> = cells
        .par_iter()
        .map(|&(i, j)| {
            let mut out = Vec::new();
            let cx = x0 + (i as f64 + 0.5) * hx;
            let cy = y0 + (j as f64 + 0.5) * hy;
            refine_cell(domain, cx, cy, hx, hy, 0, &gl, &mut out);
            out
        })
        .collect();
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for (z, w) in per_cell.into_iter().flatten() {
        nodes.push(vec![z]);
        weights.push(w);
    }
    (nodes, weights)
}

#[allow(clippy::too_many_arguments)]
fn refine_cell(
    domain: &DomainSpec,
    cx: f64,
    cy: f64,
    hx: f64,
    hy: f64,
    depth: u32,
    gl: &[(f64, f64)],
    out: &mut Vec<(C64, f64)>,
) {
    let inside = |x: f64, y: f64| domain.contains(&[C64::new(x, y)]);
    let mut count = 0;
    let mut total = 0;
    for sx in [-0.5, 0.0, 0.5] {
        for sy in [-0.5, 0.0, 0.5] {
            total += 1;
            if inside(cx + sx * hx, cy + sy * hy) {
                count += 1;
            }
        }
    }
    if count == total {
        for &(u, wu) in gl {
            for &(v, wv) in gl {
                out.push((C64::new(cx + u * hx, cy + v * hy), wu * wv * hx * hy));
            }
        }
        return;
    }
    if depth == GRID_DEPTH {
        if count > 0 && inside(cx, cy) {
            out.push((C64::new(cx, cy), hx * hy));
        }
        return;
    }
    if count == 0 && depth > 0 {
        return;
    }
    for (dx, dy) in [(-0.25, -0.25), (-0.25, 0.25), (0.25, -0.25), (0.25, 0.25)] {
        refine_cell(domain, cx + dx * hx, cy + dy * hy, 0.5 * hx, 0.5 * hy, depth + 1, gl, out);
    }
}

/// Triangular factorization `G_RR = L L*` of the retained part of a Gram matrix.
#[derive(Clone, Debug)]
pub struct GramFactor {
    /// Retained positions, increasing.
    pub retained: Vec<usize>,
    pub dropped: Vec<usize>,
    /// Rows of the lower-triangular `L` as `(column, value)` pairs, indexed
    /// by position within `retained`; the diagonal entry is last.
    pub rows: Vec<Vec<(usize, C64)>>,
    pub drop_tol: f64,
}

impl GramFactor {
    pub fn dense(&self) -> DMatrix<C64> {
        let n = self.rows.len();
        let mut l = DMatrix::zeros(n, n);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                l[(i, j)] = v;
            }
        }
        l
    }

    /// Rows of `L^{-1}`.
    pub fn inverse_rows(&self) -> Vec<Vec<(usize, C64)>> {
        lower_inverse_rows(&self.rows)
    }
}

/// Factorization of a diagonal Gram matrix given by its diagonal.
pub fn diagonal_factorization(diag: &[f64], drop_tol: f64) -> Result<GramFactor> {
    let max_diag = diag.iter().copied().fold(0.0, f64::max);
    let mut retained = Vec::new();
    let mut dropped = Vec::new();
    let mut rows = Vec::new();
    for (i, &g) in diag.iter().enumerate() {
        if !g.is_finite() || g < -1e-8 * max_diag {
            return Err(Error::NotPositiveSemidefinite { index: i, pivot: g });
        }
        if g <= 0.0 {
            dropped.push(i);
        } else {
            rows.push(vec![(retained.len(), C64::new(g.sqrt(), 0.0))]);
            retained.push(i);
        }
    }
    Ok(GramFactor { retained, dropped, rows, drop_tol })
}

pub const DEFAULT_DROP_TOL: f64 = 1e-12;

/// Greedy-pivot Cholesky that selects the numerically independent columns,
/// followed by an unpivoted factorization of the retained block in its
/// original order (so that the inverse factor stays triangular in that order).
///
/// Rows and columns are equilibrated to unit diagonal first; pivots are
/// compared against `drop_tol` on that scale.
pub fn pivoted_factorization(gram: &DMatrix<C64>, drop_tol: f64) -> Result<GramFactor> {
    let n = gram.nrows();
    if gram.ncols() != n {
        return Err(Error::InvalidArgument("Gram matrix must be square".into()));
    }
    let off_diagonal_zero = (0..n).all(|i| (0..n).all(|j| i == j || gram[(i, j)] == C64::new(0.0, 0.0)));
    if off_diagonal_zero {
        if let Some(i) = (0..n).find(|&i| gram[(i, i)].im != 0.0) {
            return Err(Error::NotHermitian(gram[(i, i)].im.abs()));
        }
        let diag: Vec<f64> = (0..n).map(|i| gram[(i, i)].re).collect();
        return diagonal_factorization(&diag, drop_tol);
    }
    let scale = gram.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let mut asym: f64 = 0.0;
    for i in 0..n {
        for j in 0..=i {
            asym = asym.max((gram[(i, j)] - gram[(j, i)].conj()).norm());
        }
    }
    if scale > 0.0 && asym > 1e-12 * scale {
        return Err(Error::NotHermitian(asym / scale));
    }
    let max_diag = (0..n).map(|i| gram[(i, i)].re).fold(0.0, f64::max);
    let mut d = vec![0.0; n];
    let mut candidates = Vec::new();
    let mut dropped = Vec::new();
    for i in 0..n {
        let gii = gram[(i, i)].re;
        if gii < -1e-8 * max_diag {
            return Err(Error::NotPositiveSemidefinite { index: i, pivot: gii });
        }
        if gii <= 0.0 || max_diag == 0.0 {
            dropped.push(i);
        } else {
            d[i] = gii.sqrt();
            candidates.push(i);
        }
    }
    let equilibrated = |idx: &[usize]| {
        DMatrix::from_fn(idx.len(), idx.len(), |a, b| {
            let (i, j) = (idx[a], idx[b]);
            gram[(i, j)] / (d[i] * d[j])
        })
    };
    let a = equilibrated(&candidates);
    let order = greedy_pivots(&a, drop_tol)?;
    let mut keep = vec![false; candidates.len()];
    for &k in &order {
        keep[k] = true;
    }
    let mut retained = Vec::new();
    for (k, &i) in candidates.iter().enumerate() {
        if keep[k] {
            retained.push(i);
        } else {
            dropped.push(i);
        }
    }
    dropped.sort_unstable();
    let sub = equilibrated(&retained);
    let l = sparse_cholesky(&sub, drop_tol)?;
    let rows = retained
        .iter()
        .enumerate()
        .map(|(a, &i)| (0..=a).filter(|&b| l[(a, b)] != C64::new(0.0, 0.0)).map(|b| (b, l[(a, b)] * d[i])).collect())
        .collect();
    Ok(GramFactor { retained, dropped, rows, drop_tol })
}

fn nonzero_columns(a: &DMatrix<C64>) -> Vec<Vec<usize>> {
    (0..a.ncols())
        .map(|j| (0..a.nrows()).filter(|&i| a[(i, j)] != C64::new(0.0, 0.0)).collect())
        .collect()
}

/// Greedy diagonal pivoting on a unit-diagonal matrix; returns the selected pivots.
fn greedy_pivots(a: &DMatrix<C64>, drop_tol: f64) -> Result<Vec<usize>> {
    let n = a.nrows();
    let mut work = a.clone();
    let mut active = vec![true; n];
    let mut chosen = Vec::new();
    let mut cols = nonzero_columns(&work);
    for _ in 0..n {
        let mut best = None;
        let mut best_val = f64::NEG_INFINITY;
        for i in 0..n {
            if active[i] && work[(i, i)].re > best_val {
                best_val = work[(i, i)].re;
                best = Some(i);
            }
        }
        let Some(k) = best else { break };
        if best_val < -1e-8 {
            return Err(Error::NotPositiveSemidefinite { index: k, pivot: best_val });
        }
        if best_val <= drop_tol {
            break;
        }
        active[k] = false;
        chosen.push(k);
        let piv = best_val.sqrt();
        let col: Vec<(usize, C64)> = cols[k]
            .iter()
            .filter(|&&i| active[i])
            .map(|&i| (i, work[(i, k)] / piv))
            .collect();
        for &(i, li) in &col {
            for &(j, lj) in &col {
                work[(i, j)] -= li * lj.conj();
            }
        }
        // fill-in: columns touched by the update gain the new nonzero rows
        if col.len() > 1 {
            let rows: Vec<usize> = col.iter().map(|c| c.0).collect();
            for &j in &rows {
                let mut merged: Vec<usize> = cols[j].iter().copied().chain(rows.iter().copied()).collect();
                merged.sort_unstable();
                merged.dedup();
                cols[j] = merged;
            }
        }
    }
    Ok(chosen)
}

/// Unpivoted Cholesky that skips structurally zero entries.
fn sparse_cholesky(a: &DMatrix<C64>, drop_tol: f64) -> Result<DMatrix<C64>> {
    let n = a.nrows();
    let mut work = a.clone();
    let mut l = DMatrix::zeros(n, n);
    let mut cols = nonzero_columns(&work);
    for k in 0..n {
        let piv = work[(k, k)].re;
        if piv <= drop_tol * 1e-3 {
            return Err(Error::DegenerateSystem(format!(
                "pivot {piv:e} at retained position {k} after reordering"
            )));
        }
        let s = piv.sqrt();
        l[(k, k)] = C64::new(s, 0.0);
        let col: Vec<(usize, C64)> =
            cols[k].iter().filter(|&&i| i > k).map(|&i| (i, work[(i, k)] / s)).collect();
        for &(i, li) in &col {
            l[(i, k)] = li;
        }
        for &(i, li) in &col {
            for &(j, lj) in &col {
                work[(i, j)] -= li * lj.conj();
            }
        }
        if col.len() > 1 {
            let rows: Vec<usize> = col.iter().map(|c| c.0).collect();
            for &j in &rows {
                let mut merged: Vec<usize> = cols[j].iter().copied().chain(rows.iter().copied()).collect();
                merged.sort_unstable();
                merged.dedup();
                cols[j] = merged;
            }
        }
    }
    Ok(l)
}

/// Inverse of a lower-triangular matrix as sparse rows `(column, value)`.
pub fn lower_inverse_rows(l: &[Vec<(usize, C64)>]) -> Vec<Vec<(usize, C64)>> {
    let n = l.len();
    let diag: Vec<C64> = l
        .iter()
        .enumerate()
        .map(|(i, row)| row.iter().find(|e| e.0 == i).map(|e| e.1).unwrap_or_default())
        .collect();
    let lower: Vec<Vec<(usize, C64)>> =
        l.iter().enumerate().map(|(i, row)| row.iter().copied().filter(|e| e.0 < i).collect()).collect();
    let mut rows: Vec<Vec<(usize, C64)>> = Vec::with_capacity(n);
    for i in 0..n {
        // row i of L^{-1}: x_i = (e_i - Σ_{j<i} L_ij x_j) / L_ii
        let mut acc = std::collections::BTreeMap::new();
        acc.insert(i, C64::new(1.0, 0.0));
        for &(j, lij) in &lower[i] {
            for &(k, v) in &rows[j] {
                *acc.entry(k).or_insert(C64::new(0.0, 0.0)) -= lij * v;
            }
        }
        let inv = diag[i].inv();
        rows.push(acc.into_iter().filter(|(_, v)| v.norm() > 0.0).map(|(k, v)| (k, v * inv)).collect());
    }
    rows
}

/// Minimum-norm solution of `A c = b` and its squared norm `‖c‖²`.
pub fn constrained_min_norm(a: &DMatrix<C64>, b: &DVector<C64>) -> Result<(DVector<C64>, f64)> {
    if a.nrows() != b.len() {
        return Err(Error::InvalidArgument("constraint rows and rhs length differ".into()));
    }
    let b_norm = b.norm();
    if b_norm == 0.0 {
        return Ok((DVector::zeros(a.ncols()), 0.0));
    }
    let mut an = a.clone();
    let mut bn = b.clone();
    for i in 0..an.nrows() {
        let r = an.row(i).norm();
        if r > 0.0 {
            an.row_mut(i).scale_mut(1.0 / r);
            bn[i] /= r;
        }
    }
    let svd = an.svd(true, true);
    let sigma_max = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let c = svd
        .solve(&bn, 1e-12 * sigma_max)
        .map_err(|e| Error::InfeasibleConstraint(e.to_string()))?;
    let residual = (a * &c - b).norm();
    if residual > 1e-10 * b_norm {
        return Err(Error::InfeasibleConstraint(format!(
            "residual {residual:e} exceeds tolerance for ‖b‖ = {b_norm:e}"
        )));
    }
    let value = c.norm_squared();
    Ok((c, value))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn graded_order_is_lexicographic_within_degree() {
        let idx = graded_indices(2, 2);
        assert_eq!(idx, vec![vec![0, 0], vec![1, 0], vec![0, 1], vec![2, 0], vec![1, 1], vec![0, 2]]);
        assert_eq!(graded_indices(3, 4).len(), 35);
    }

    #[test]
    fn falling_factorial_handles_negative_exponents() {
        assert_eq!(falling(3, 2), 6.0);
        assert_eq!(falling(2, 3), 0.0);
        assert_eq!(falling(-1, 2), 2.0);
    }

    #[test]
    fn gk_integrates_polynomials() {
        let v = adaptive_integrate(|x| x.powi(6), 0.0, 1.0, 1e-13).unwrap();
        assert_relative_eq!(v, 1.0 / 7.0, max_relative = 1e-14);
    }

    #[test]
    fn divergent_integral_is_reported() {
        let r = adaptive_integrate(|x| 1.0 / x, 0.0, 1.0, 1e-12);
        assert!(matches!(r, Err(Error::Integrability(_))));
    }

    #[test]
    fn disk_rule_integrates_area_and_second_moment() {
        let disk = DomainSpec::disk(1.0).unwrap();
        for res in [8, 16, 33] {
            let rule = build_quadrature(&disk, res).unwrap();
            assert_relative_eq!(rule.integrate(|_| 1.0), PI, max_relative = 1e-12);
            assert_relative_eq!(rule.integrate(|z| z[0].norm_sqr()), PI / 2.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn annulus_area() {
        let ann = DomainSpec::annulus(0.3, 1.0).unwrap();
        let rule = build_quadrature(&ann, 12).unwrap();
        assert_relative_eq!(rule.integrate(|_| 1.0), PI * (1.0 - 0.09), max_relative = 1e-12);
        assert!(rule.reported_accuracy < 1e-12);
    }

    #[test]
    fn ball_rule_matches_dirichlet_moments() {
        let ball = DomainSpec::ball(2, 1.0).unwrap();
        let rule = build_quadrature(&ball, 12).unwrap();
        let m = rule.integrate(|z| z[0].norm_sqr().powi(2) * z[1].norm_sqr());
        // π² 2! 1! / 5!
        assert_relative_eq!(m, PI * PI * 2.0 / 120.0, max_relative = 1e-12);
    }

    #[test]
    fn identity_gram_is_retained_whole() {
        let g = DMatrix::<C64>::identity(4, 4);
        let f = pivoted_factorization(&g, DEFAULT_DROP_TOL).unwrap();
        assert_eq!(f.retained, vec![0, 1, 2, 3]);
        assert_eq!(f.dense(), DMatrix::identity(4, 4));
    }

    #[test]
    fn disk_gram_of_one_and_z_is_diagonal() {
        let g = DMatrix::from_diagonal(&DVector::from_vec(vec![C64::new(PI, 0.0), C64::new(PI / 2.0, 0.0)]));
        let f = pivoted_factorization(&g, DEFAULT_DROP_TOL).unwrap();
        assert_eq!(f.retained, vec![0, 1]);
        let l = f.dense();
        assert_relative_eq!(l[(0, 0)].re, PI.sqrt(), max_relative = 1e-15);
        assert_relative_eq!(l[(1, 1)].re, (PI / 2.0).sqrt(), max_relative = 1e-15);
        assert_eq!(l[(1, 0)], C64::new(0.0, 0.0));
    }

    #[test]
    fn duplicated_column_is_dropped() {
        let v = [C64::new(1.0, 0.0), C64::new(0.5, 0.2), C64::new(0.5, 0.2), C64::new(-0.1, 0.3)];
        let mut g = DMatrix::from_fn(4, 4, |i, j| v[i] * v[j].conj());
        for i in 0..4 {
            g[(i, i)] += if i == 2 { 0.0 } else { 1.0 };
        }
        // make column 2 an exact copy of column 1
        for i in 0..4 {
            g[(i, 2)] = g[(i, 1)];
            g[(2, i)] = g[(1, i)];
        }
        let f = pivoted_factorization(&g, DEFAULT_DROP_TOL).unwrap();
        assert_eq!(f.retained.len(), 3);
        assert_eq!(f.dropped.len(), 1);
        assert!(f.dropped[0] == 1 || f.dropped[0] == 2);
    }

    #[test]
    fn indefinite_gram_is_rejected() {
        let g = DMatrix::from_row_slice(2, 2, &[C64::new(1.0, 0.0), C64::new(2.0, 0.0), C64::new(2.0, 0.0), C64::new(1.0, 0.0)]);
        assert!(matches!(
            pivoted_factorization(&g, DEFAULT_DROP_TOL),
            Err(Error::NotPositiveSemidefinite { .. })
        ));
    }

    #[test]
    fn lower_inverse_is_inverse() {
        let l = DMatrix::from_row_slice(
            3,
            3,
            &[
                C64::new(2.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0),
                C64::new(1.0, 1.0), C64::new(1.0, 0.0), C64::new(0.0, 0.0),
                C64::new(0.0, 0.0), C64::new(0.5, -0.5), C64::new(3.0, 0.0),
            ],
        );
        let l_rows: Vec<Vec<(usize, C64)>> =
            (0..3).map(|i| (0..=i).map(|j| (j, l[(i, j)])).filter(|e| e.1.norm() > 0.0).collect()).collect();
        let rows = lower_inverse_rows(&l_rows);
        let mut inv = DMatrix::zeros(3, 3);
        for (i, r) in rows.iter().enumerate() {
            for &(j, v) in r {
                inv[(i, j)] = v;
            }
        }
        let id = &inv * &l;
        assert!((id - DMatrix::<C64>::identity(3, 3)).norm() < 1e-14);
    }

    #[test]
    fn min_norm_single_unit_constraint() {
        let a = DMatrix::from_row_slice(1, 3, &[C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0)]);
        let b = DVector::from_vec(vec![C64::new(1.0, 0.0)]);
        let (c, v) = constrained_min_norm(&a, &b).unwrap();
        assert_relative_eq!(v, 1.0, max_relative = 1e-14);
        assert!((c[0] - C64::new(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn contradictory_constraints_are_infeasible() {
        let one = C64::new(1.0, 0.0);
        let zero = C64::new(0.0, 0.0);
        let a = DMatrix::from_row_slice(2, 2, &[one, zero, one, zero]);
        let b = DVector::from_vec(vec![one, C64::new(2.0, 0.0)]);
        assert!(matches!(constrained_min_norm(&a, &b), Err(Error::InfeasibleConstraint(_))));
    }
}
