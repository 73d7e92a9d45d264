//! Domains, weights and potential jets.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::numerics::QuadratureRule;
use crate::series::{Exponents, Series};
use crate::{Point, C64};

pub type Indicator = Arc<dyn Fn(C64) -> bool + Send + Sync>;
pub type PointFn = Arc<dyn Fn(&[C64]) -> f64 + Send + Sync>;

/// A bounded planar domain given by an indicator and a bounding box.
#[derive(Clone)]
pub struct PlanarDomain {
    pub label: String,
    pub indicator: Indicator,
    /// `[x_min, x_max, y_min, y_max]`
    pub bbox: [f64; 4],
    /// Area when known in closed form.
    pub area: Option<f64>,
}

impl fmt::Debug for PlanarDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PlanarDomain")
            .field("label", &self.label)
            .field("bbox", &self.bbox)
            .field("area", &self.area)
            .finish()
    }
}

#[derive(Clone, Debug)]
pub enum DomainSpec {
    Ball { n: usize, r: f64 },
    Polydisc { radii: Vec<f64> },
    Annulus { r_in: f64, r_out: f64 },
    GeneralPlanar(PlanarDomain),
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be positive and finite, got {v}")))
    }
}

impl DomainSpec {
    pub fn ball(n: usize, r: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain("dimension must be at least 1".into()));
        }
        positive("radius", r)?;
        Ok(DomainSpec::Ball { n, r })
    }

    pub fn disk(r: f64) -> Result<Self> {
        Self::ball(1, r)
    }

    pub fn polydisc(radii: Vec<f64>) -> Result<Self> {
        if radii.is_empty() {
            return Err(Error::Domain("polydisc needs at least one radius".into()));
        }
        for &r in &radii {
            positive("radius", r)?;
        }
        Ok(DomainSpec::Polydisc { radii })
    }

    pub fn annulus(r_in: f64, r_out: f64) -> Result<Self> {
        positive("inner radius", r_in)?;
        positive("outer radius", r_out)?;
        if r_in >= r_out {
            return Err(Error::Domain(format!("annulus needs r_in < r_out, got {r_in} ≥ {r_out}")));
        }
        Ok(DomainSpec::Annulus { r_in, r_out })
    }

    pub fn planar(label: &str, bbox: [f64; 4], area: Option<f64>, indicator: Indicator) -> Result<Self> {
        if !(bbox.iter().all(|v| v.is_finite()) && bbox[0] < bbox[1] && bbox[2] < bbox[3]) {
            return Err(Error::Domain(format!("invalid bounding box {bbox:?}")));
        }
        Ok(DomainSpec::GeneralPlanar(PlanarDomain { label: label.into(), indicator, bbox, area }))
    }

    /// The ellipse `(x/a)² + (y/b)² < 1`.
    pub fn ellipse(a: f64, b: f64) -> Result<Self> {
        positive("semi-axis", a)?;
        positive("semi-axis", b)?;
        Self::planar(
            "ellipse",
            [-a, a, -b, b],
            Some(std::f64::consts::PI * a * b),
            Arc::new(move |z: C64| (z.re / a).powi(2) + (z.im / b).powi(2) < 1.0),
        )
    }

    pub fn rectangle(x0: f64, x1: f64, y0: f64, y1: f64) -> Result<Self> {
        Self::planar(
            "rectangle",
            [x0, x1, y0, y1],
            Some((x1 - x0) * (y1 - y0)),
            Arc::new(move |z: C64| z.re > x0 && z.re < x1 && z.im > y0 && z.im < y1),
        )
    }

    pub fn dim(&self) -> usize {
        match self {
            DomainSpec::Ball { n, .. } => *n,
            DomainSpec::Polydisc { radii } => radii.len(),
            DomainSpec::Annulus { .. } | DomainSpec::GeneralPlanar(_) => 1,
        }
    }

    pub fn is_reinhardt(&self) -> bool {
        !matches!(self, DomainSpec::GeneralPlanar(_))
    }

    pub fn contains(&self, z: &[C64]) -> bool {
        if z.len() != self.dim() {
            return false;
        }
        match self {
            DomainSpec::Ball { r, .. } => z.iter().map(|c| c.norm_sqr()).sum::<f64>() < r * r,
            DomainSpec::Polydisc { radii } => z.iter().zip(radii).all(|(c, r)| c.norm() < *r),
            DomainSpec::Annulus { r_in, r_out } => {
                let a = z[0].norm();
                a > *r_in && a < *r_out
            }
            DomainSpec::GeneralPlanar(p) => (p.indicator)(z[0]),
        }
    }

    /// Lebesgue volume when available in closed form.
    pub fn volume(&self) -> Option<f64> {
        use std::f64::consts::PI;
        match self {
            DomainSpec::Ball { n, r } => {
                Some((PI * r * r).powi(*n as i32) / crate::numerics::factorial(*n))
            }
            DomainSpec::Polydisc { radii } => Some(radii.iter().map(|r| PI * r * r).product()),
            DomainSpec::Annulus { r_in, r_out } => Some(PI * (r_out * r_out - r_in * r_in)),
            DomainSpec::GeneralPlanar(p) => p.area,
        }
    }

    /// Radius of the smallest origin-centred ball containing the domain.
    pub fn scale(&self) -> f64 {
        match self {
            DomainSpec::Ball { r, .. } => *r,
            DomainSpec::Polydisc { radii } => radii.iter().map(|r| r * r).sum::<f64>().sqrt(),
            DomainSpec::Annulus { r_out, .. } => *r_out,
            DomainSpec::GeneralPlanar(p) => {
                let [x0, x1, y0, y1] = p.bbox;
                (x0.abs().max(x1.abs()).powi(2) + y0.abs().max(y1.abs()).powi(2)).sqrt()
            }
        }
    }

    /// Default center of the special basis: the origin if it lies in the
    /// domain, otherwise the barycenter under `rule`.
    pub fn default_center(&self, rule: &QuadratureRule) -> Point {
        let origin = vec![C64::new(0.0, 0.0); self.dim()];
        if self.is_reinhardt() || self.contains(&origin) {
            return origin;
        }
        let mass: f64 = rule.weights.iter().sum();
        let mut c = vec![C64::new(0.0, 0.0); self.dim()];
        for (z, w) in rule.nodes.iter().zip(&rule.weights) {
            for (ci, zi) in c.iter_mut().zip(z) {
                *ci += zi * (w / mass);
            }
        }
        c
    }
}

/// Symmetry class of a potential, used to decide which quadrature reductions apply.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Symmetry {
    None,
    /// Depends only on the moduli `|z_1|, …, |z_n|`.
    Reinhardt,
    /// Depends only on `|z|`.
    Unitary,
}

/// A real potential `φ` on ℂⁿ.
pub trait Potential: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn value(&self, z: &[C64]) -> f64;
    /// Taylor series at `p` in the `2n` variables `(ζ, ζ̄)` through total
    /// order `order`, when available in closed form.
    fn taylor(&self, _p: &[C64], _order: usize) -> Option<Series> {
        None
    }
    fn symmetry(&self) -> Symmetry {
        Symmetry::None
    }
    /// Polynomial degree in `|z|²` of `e^{-mφ}`, when that is a polynomial.
    fn weight_degree_hint(&self, _multiplier: f64) -> Option<usize> {
        None
    }
}

/// Series of `|p + ζ|²` in the `2n` variables `(ζ, ζ̄)`.
pub fn norm_sq_series(p: &[C64], order: usize) -> Series {
    let n = p.len();
    let mut s = Series::constant(2 * n, order, C64::new(p.iter().map(|c| c.norm_sqr()).sum(), 0.0));
    for (i, pi) in p.iter().enumerate() {
        let mut e = vec![0; 2 * n];
        e[i] = 1;
        s.add_term(e.clone(), pi.conj());
        e[i] = 0;
        e[n + i] = 1;
        s.add_term(e.clone(), *pi);
        e[i] = 1;
        s.add_term(e, C64::new(1.0, 0.0));
    }
    s
}

/// `φ = c·|z|²`.
#[derive(Clone, Debug)]
pub struct QuadraticPotential {
    pub n: usize,
    pub c: f64,
}

impl Potential for QuadraticPotential {
    fn dim(&self) -> usize {
        self.n
    }
    fn value(&self, z: &[C64]) -> f64 {
        self.c * z.iter().map(|v| v.norm_sqr()).sum::<f64>()
    }
    fn taylor(&self, p: &[C64], order: usize) -> Option<Series> {
        Some(norm_sq_series(p, order).scale(C64::new(self.c, 0.0)))
    }
    fn symmetry(&self) -> Symmetry {
        Symmetry::Unitary
    }
}

/// `φ = -c·log(1 - |z|²/r²)`, the potential whose weight `e^{-mφ}` is
/// `(1 - |z|²/r²)^{cm}`.
#[derive(Clone, Debug)]
pub struct NegLogBall {
    pub n: usize,
    pub r: f64,
    pub c: f64,
}

impl NegLogBall {
    pub fn unit(n: usize) -> Self {
        Self { n, r: 1.0, c: 1.0 }
    }
}

impl Potential for NegLogBall {
    fn dim(&self) -> usize {
        self.n
    }
    fn value(&self, z: &[C64]) -> f64 {
        let t = z.iter().map(|v| v.norm_sqr()).sum::<f64>() / (self.r * self.r);
        -self.c * (1.0 - t).ln()
    }
    fn taylor(&self, p: &[C64], order: usize) -> Option<Series> {
        let n = self.n;
        let s = norm_sq_series(p, order).scale(C64::new(-1.0 / (self.r * self.r), 0.0));
        let inner = &Series::constant(2 * n, order, C64::new(1.0, 0.0)) + &s;
        Some(inner.ln().ok()?.scale(C64::new(-self.c, 0.0)))
    }
    fn symmetry(&self) -> Symmetry {
        Symmetry::Unitary
    }
    fn weight_degree_hint(&self, multiplier: f64) -> Option<usize> {
        let e = self.c * multiplier;
        (e >= 0.0 && (e - e.round()).abs() < 1e-12).then(|| e.round() as usize)
    }
}

/// A potential given only by a pointwise closure; jets come from finite differences.
#[derive(Clone)]
pub struct FnPotential {
    pub n: usize,
    pub f: PointFn,
    pub symmetry: Symmetry,
}

impl fmt::Debug for FnPotential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnPotential").field("n", &self.n).field("symmetry", &self.symmetry).finish()
    }
}

impl Potential for FnPotential {
    fn dim(&self) -> usize {
        self.n
    }
    fn value(&self, z: &[C64]) -> f64 {
        (self.f)(z)
    }
    fn symmetry(&self) -> Symmetry {
        self.symmetry
    }
}

#[derive(Clone, Debug)]
pub enum WeightKind {
    Unit,
    /// `((r² - |z|²)/r²)^m`
    RadialPower { m: u32, r: f64 },
    /// `e^{-m φ}`
    Potential { phi: Arc<dyn Potential>, multiplier: f64 },
    /// Logarithms of the values at the nodes of one quadrature rule.
    Tabulated { rule_id: u64, ln_values: Arc<Vec<f64>>, radial: bool },
}

#[derive(Clone, Debug)]
pub struct WeightSpec {
    pub kind: WeightKind,
    pub scale: f64,
}

impl WeightSpec {
    pub fn unit() -> Self {
        Self { kind: WeightKind::Unit, scale: 1.0 }
    }

    pub fn radial_power(m: u32, r: f64) -> Self {
        Self { kind: WeightKind::RadialPower { m, r }, scale: 1.0 }
    }

    pub fn potential(phi: Arc<dyn Potential>, multiplier: f64) -> Self {
        Self { kind: WeightKind::Potential { phi, multiplier }, scale: 1.0 }
    }

    /// Binds node values to `rule`. `radial` records that the values are a
    /// function of the moduli (always true for values on orbit representatives).
    pub fn tabulated(rule: &QuadratureRule, values: Vec<f64>, radial: bool) -> Result<Self> {
        if values.len() != rule.len() {
            return Err(Error::Binding(format!(
                "{} tabulated values for a rule with {} nodes",
                values.len(),
                rule.len()
            )));
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::PositivityViolation(format!("tabulated value {v} at node {i}")));
        }
        Self::tabulated_ln(rule, values.iter().map(|v| v.ln()).collect(), radial)
    }

    /// Like [`WeightSpec::tabulated`] with `log μ` given at the nodes, so
    /// weights below the smallest positive double stay representable.
    pub fn tabulated_ln(rule: &QuadratureRule, ln_values: Vec<f64>, radial: bool) -> Result<Self> {
        if ln_values.len() != rule.len() {
            return Err(Error::Binding(format!(
                "{} tabulated values for a rule with {} nodes",
                ln_values.len(),
                rule.len()
            )));
        }
        if let Some((i, v)) = ln_values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::PositivityViolation(format!("tabulated log value {v} at node {i}")));
        }
        Ok(Self {
            kind: WeightKind::Tabulated { rule_id: rule.id(), ln_values: Arc::new(ln_values), radial },
            scale: 1.0,
        })
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale *= scale;
        self
    }

    pub fn is_tabulated(&self) -> bool {
        matches!(self.kind, WeightKind::Tabulated { .. })
    }

    /// Whether the weight depends only on the moduli of the coordinates.
    pub fn is_radial(&self) -> bool {
        match &self.kind {
            WeightKind::Unit | WeightKind::RadialPower { .. } => true,
            WeightKind::Potential { phi, .. } => phi.symmetry() != Symmetry::None,
            WeightKind::Tabulated { radial, .. } => *radial,
        }
    }

    /// Whether the weight depends only on `|z|`.
    pub fn depends_only_on_norm(&self) -> bool {
        match &self.kind {
            WeightKind::Unit | WeightKind::RadialPower { .. } => true,
            WeightKind::Potential { phi, .. } => phi.symmetry() == Symmetry::Unitary,
            WeightKind::Tabulated { .. } => false,
        }
    }

    pub fn potential_parts(&self) -> Option<(&Arc<dyn Potential>, f64)> {
        match &self.kind {
            WeightKind::Potential { phi, multiplier } => Some((phi, *multiplier)),
            _ => None,
        }
    }

    /// Degree of the weight as a polynomial in `|z|²`, when it is one.
    pub fn degree_hint(&self) -> usize {
        match &self.kind {
            WeightKind::Unit => 0,
            WeightKind::RadialPower { m, .. } => *m as usize,
            WeightKind::Potential { phi, multiplier } => phi.weight_degree_hint(*multiplier).unwrap_or(0),
            WeightKind::Tabulated { .. } => 0,
        }
    }

    /// `log μ(z)`.
    pub fn ln_eval(&self, z: &[C64]) -> Result<f64> {
        let ln_scale = self.scale.ln();
        let v = match &self.kind {
            WeightKind::Unit => 0.0,
            WeightKind::RadialPower { m, r } => {
                let base = 1.0 - z.iter().map(|c| c.norm_sqr()).sum::<f64>() / (r * r);
                if base <= 0.0 && *m > 0 {
                    return Err(Error::PositivityViolation(format!("(r² - |z|²)/r² = {base} outside the ball")));
                }
                if *m == 0 {
                    0.0
                } else {
                    *m as f64 * base.ln()
                }
            }
            WeightKind::Potential { phi, multiplier } => -multiplier * phi.value(z),
            WeightKind::Tabulated { .. } => {
                return Err(Error::Binding("tabulated weight queried off its bound nodes".into()))
            }
        };
        let out = v + ln_scale;
        if out.is_nan() || out == f64::INFINITY || !self.scale.is_finite() || self.scale <= 0.0 {
            return Err(Error::PositivityViolation(format!("log weight {out} at {z:?}")));
        }
        Ok(out)
    }

    pub fn eval(&self, z: &[C64]) -> Result<f64> {
        let v = self.ln_eval(z)?.exp();
        if v <= 0.0 {
            return Err(Error::PositivityViolation(format!("weight underflows to {v} at {z:?}")));
        }
        Ok(v)
    }

    /// `log μ` at every node of `rule`.
    pub fn ln_values_on(&self, rule: &QuadratureRule) -> Result<Vec<f64>> {
        match &self.kind {
            WeightKind::Tabulated { rule_id, ln_values, .. } => {
                if *rule_id != rule.id() {
                    return Err(Error::Binding(format!(
                        "tabulated weight bound to rule {rule_id}, paired with rule {}",
                        rule.id()
                    )));
                }
                let ls = self.scale.ln();
                Ok(ln_values.iter().map(|v| v + ls).collect())
            }
            _ => rule.nodes.iter().map(|z| self.ln_eval(z)).collect(),
        }
    }

    /// Value at node `i` of `rule`.
    pub fn eval_at_node(&self, rule: &QuadratureRule, i: usize) -> Result<f64> {
        match &self.kind {
            WeightKind::Tabulated { rule_id, ln_values, .. } => {
                if *rule_id != rule.id() || i >= ln_values.len() {
                    return Err(Error::Binding(format!("node {i} of rule {} is not bound", rule.id())));
                }
                Ok(ln_values[i].exp() * self.scale)
            }
            _ => self.eval(&rule.nodes[i]),
        }
    }
}

fn multi_factorial(e: &[u8]) -> f64 {
    e.iter().map(|&k| crate::numerics::factorial(k as usize)).product()
}

/// All derivatives `D^a_z D^b_z̄ φ(p)` with `|a| + |b| ≤ 4`.
#[derive(Clone, Debug)]
pub struct Jet4 {
    pub point: Point,
    entries: BTreeMap<(Exponents, Exponents), C64>,
}

pub const JET_ORDER: usize = 4;

impl Jet4 {
    /// Builds a jet from a Taylor series in `(ζ, ζ̄)`, enforcing Hermitian symmetry.
    pub fn from_series(point: &[C64], series: &Series) -> Self {
        let n = point.len();
        let mut entries = BTreeMap::new();
        for (e, c) in series.terms() {
            if e.iter().map(|&k| k as usize).sum::<usize>() > JET_ORDER {
                continue;
            }
            let a = e[..n].to_vec();
            let b = e[n..].to_vec();
            let d = c * multi_factorial(e);
            entries.insert((a, b), d);
        }
        let keys: Vec<_> = entries.keys().cloned().collect();
        for (a, b) in keys {
            if a > b {
                continue;
            }
            let x = entries.get(&(a.clone(), b.clone())).copied().unwrap_or_default();
            let y = entries.get(&(b.clone(), a.clone())).copied().unwrap_or_default();
            let avg = 0.5 * (x + y.conj());
            entries.insert((a.clone(), b.clone()), avg);
            entries.insert((b, a), avg.conj());
        }
        Self { point: point.to_vec(), entries }
    }

    pub fn dim(&self) -> usize {
        self.point.len()
    }

    pub fn get(&self, a: &[u8], b: &[u8]) -> C64 {
        self.entries.get(&(a.to_vec(), b.to_vec())).copied().unwrap_or_default()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&(Exponents, Exponents), &C64)> {
        self.entries.iter()
    }

    /// Complex Hessian `φ_{jk̄}(p)`.
    pub fn hessian(&self) -> DMatrix<C64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |j, k| {
            let mut a = vec![0; n];
            let mut b = vec![0; n];
            a[j] = 1;
            b[k] = 1;
            self.get(&a, &b)
        })
    }

    /// Taylor series at `p` through order 4.
    pub fn to_series(&self) -> Series {
        let n = self.dim();
        let mut s = Series::zero(2 * n, JET_ORDER);
        for ((a, b), d) in &self.entries {
            let mut e = a.clone();
            e.extend_from_slice(b);
            let f = multi_factorial(&e);
            s.add_term(e, d / f);
        }
        s
    }
}

/// Step and Richardson depth of the finite-difference fallback.
pub const FD_STEP: f64 = 1e-2;
pub const FD_RICHARDSON_LEVELS: usize = 2;

/// Real Taylor coefficients of `f` at `x0` through order 4 by central
/// differences, refined by Richardson extrapolation over halved steps.
fn fd_real_taylor(f: &dyn Fn(&[f64]) -> f64, x0: &[f64], h: f64, levels: usize) -> Series {
    let d = x0.len();
    let mut cache: HashMap<(usize, Vec<i32>), f64> = HashMap::new();
    let mut eval = |level: usize, offs: &[i32]| -> f64 {
        let key = (level, offs.to_vec());
        if let Some(v) = cache.get(&key) {
            return *v;
        }
        let step = h / 2f64.powi(level as i32);
        let x: Vec<f64> = x0.iter().zip(offs).map(|(x, &o)| x + step * o as f64).collect();
        let v = f(&x);
        cache.insert(key, v);
        v
    };
    // 1-D central stencils (offset, coefficient) for derivative orders 0..4,
    // each with O(h²) error.
    let stencil = |k: u8| -> Vec<(i32, f64)> {
        match k {
            0 => vec![(0, 1.0)],
            1 => vec![(-1, -0.5), (1, 0.5)],
            2 => vec![(-1, 1.0), (0, -2.0), (1, 1.0)],
            3 => vec![(-2, -0.5), (-1, 1.0), (1, -1.0), (2, 0.5)],
            _ => vec![(-2, 1.0), (-1, -4.0), (0, 6.0), (1, -4.0), (2, 1.0)],
        }
    };
    let mut out = Series::zero(d, JET_ORDER);
    let mut gammas = Vec::new();
    for deg in 0..=JET_ORDER {
        let mut level = Vec::new();
        let mut cur = vec![0i32; d];
        fn comp(d: usize, rest: i32, cur: &mut Vec<i32>, pos: usize, out: &mut Vec<Vec<i32>>) {
            if pos + 1 == d {
                cur[pos] = rest;
                out.push(cur.clone());
                return;
            }
            for k in (0..=rest).rev() {
                cur[pos] = k;
                comp(d, rest - k, cur, pos + 1, out);
            }
        }
        comp(d, deg as i32, &mut cur, 0, &mut level);
        gammas.extend(level);
    }
    for gamma in gammas {
        let g: Vec<u8> = gamma.iter().map(|&k| k as u8).collect();
        let deg: usize = g.iter().map(|&k| k as usize).sum();
        let stencils: Vec<Vec<(i32, f64)>> = g.iter().map(|&k| stencil(k)).collect();
        let mut estimates = Vec::new();
        for level in 0..=levels {
            let step = h / 2f64.powi(level as i32);
            let mut acc = 0.0;
            let mut idx = vec![0usize; d];
            loop {
                let mut coef = 1.0;
                let mut offs = vec![0i32; d];
                for j in 0..d {
                    let (o, c) = stencils[j][idx[j]];
                    offs[j] = o;
                    coef *= c;
                }
                acc += coef * eval(level, &offs);
                let mut j = d;
                let mut done = true;
                while j > 0 {
                    j -= 1;
                    idx[j] += 1;
                    if idx[j] < stencils[j].len() {
                        done = false;
                        break;
                    }
                    idx[j] = 0;
                }
                if done {
                    break;
                }
            }
            estimates.push(acc / step.powi(deg as i32));
        }
        // Richardson on the even error expansion in h
        for k in 1..estimates.len() {
            let factor = 4f64.powi(k as i32);
            for i in (k..estimates.len()).rev() {
                estimates[i] = (factor * estimates[i] - estimates[i - 1]) / (factor - 1.0);
            }
        }
        let dval = *estimates.last().expect("at least one level");
        let fact: f64 = g.iter().map(|&k| crate::numerics::factorial(k as usize)).product();
        out.add_term(g, C64::new(dval / fact, 0.0));
    }
    out
}

/// Taylor series of `φ` at `p` in `(ζ, ζ̄)` from finite differences.
pub fn fd_taylor(phi: &dyn Potential, p: &[C64], h: f64, levels: usize) -> Series {
    let n = p.len();
    let x0: Vec<f64> = p.iter().flat_map(|c| [c.re, c.im]).collect();
    let f = |x: &[f64]| -> f64 {
        let z: Vec<C64> = x.chunks(2).map(|c| C64::new(c[0], c[1])).collect();
        phi.value(&z)
    };
    let real = fd_real_taylor(&f, &x0, h, levels);
    // x_j = (ζ_j + ζ̄_j)/2, y_j = (ζ_j - ζ̄_j)/(2i)
    let mut subs = Vec::with_capacity(2 * n);
    for j in 0..n {
        let zeta = Series::var(2 * n, JET_ORDER, j);
        let zbar = Series::var(2 * n, JET_ORDER, n + j);
        subs.push((&zeta + &zbar).scale(C64::new(0.5, 0.0)));
        subs.push((&zeta - &zbar).scale(C64::new(0.0, -0.5)));
    }
    real.compose(&subs)
}

/// 4-jet of `φ` at `p`: analytic when the potential provides a Taylor
/// series, finite differences otherwise.
pub fn potential_jet(phi: &dyn Potential, p: &[C64]) -> Result<Jet4> {
    if p.len() != phi.dim() {
        return Err(Error::InvalidArgument(format!("point has dimension {}, potential {}", p.len(), phi.dim())));
    }
    let series = match phi.taylor(p, JET_ORDER) {
        Some(s) => s,
        None => fd_taylor(phi, p, FD_STEP, FD_RICHARDSON_LEVELS),
    };
    let jet = Jet4::from_series(p, &series);
    check_strictly_psh(&jet.hessian())?;
    Ok(jet)
}

/// Jet of the potential behind a potential weight.
pub fn weight_jet(weight: &WeightSpec, p: &[C64]) -> Result<Jet4> {
    let (phi, _) = weight
        .potential_parts()
        .ok_or_else(|| Error::InvalidArgument("weight is not of the form e^{-mφ}".into()))?;
    potential_jet(phi.as_ref(), p)
}

pub fn check_strictly_psh(h: &DMatrix<C64>) -> Result<()> {
    let eig = h.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if max.is_nan() || max <= 0.0 || min <= 1e-12 * max {
        return Err(Error::NotStrictlyPsh(format!("complex Hessian eigenvalues in [{min:e}, {max:e}]")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn membership() {
        let ball = DomainSpec::ball(1, 1.0).unwrap();
        assert!(ball.contains(&[c(0.0, 0.0)]));
        assert!(!ball.contains(&[c(1.5, 0.0)]));
        let ann = DomainSpec::annulus(0.3, 1.0).unwrap();
        assert!(!ann.contains(&[c(0.1, 0.0)]));
        assert!(ann.contains(&[c(0.0, 0.5)]));
        assert!(DomainSpec::annulus(1.0, 0.3).is_err());
    }

    #[test]
    fn radial_power_values() {
        let w = WeightSpec::radial_power(2, 1.0);
        assert_eq!(w.eval(&[c(0.0, 0.0)]).unwrap(), 1.0);
        let z = c(0.5f64.sqrt(), 0.0);
        assert_relative_eq!(w.eval(&[z]).unwrap(), 0.25, max_relative = 1e-14);
        assert!(matches!(w.eval(&[c(1.2, 0.0)]), Err(Error::PositivityViolation(_))));
    }

    #[test]
    fn potential_weight_at_origin() {
        let w = WeightSpec::potential(Arc::new(NegLogBall::unit(1)), 3.0);
        assert_eq!(w.eval(&[c(0.0, 0.0)]).unwrap(), 1.0);
    }

    #[test]
    fn quadratic_jet() {
        let jet = potential_jet(&QuadraticPotential { n: 1, c: 1.0 }, &[c(0.0, 0.0)]).unwrap();
        assert_eq!(jet.get(&[1], &[1]), c(1.0, 0.0));
        assert_eq!(jet.get(&[2], &[2]), c(0.0, 0.0));
    }

    #[test]
    fn neg_log_jet_disk() {
        let jet = potential_jet(&NegLogBall::unit(1), &[c(0.0, 0.0)]).unwrap();
        assert_relative_eq!(jet.get(&[1], &[1]).re, 1.0, max_relative = 1e-15);
        assert_relative_eq!(jet.get(&[2], &[2]).re, 2.0, max_relative = 1e-15);
    }

    #[test]
    fn neg_log_jet_ball_hessian_is_identity() {
        let jet = potential_jet(&NegLogBall::unit(2), &[c(0.0, 0.0), c(0.0, 0.0)]).unwrap();
        let h = jet.hessian();
        assert!((h - DMatrix::<C64>::identity(2, 2)).norm() < 1e-15);
    }

    #[test]
    fn jet_is_hermitian_key_by_key() {
        let p = [c(0.2, -0.1), c(0.05, 0.3)];
        let jet = potential_jet(&NegLogBall::unit(2), &p).unwrap();
        for ((a, b), v) in jet.entries() {
            assert_eq!(*v, jet.get(b, a).conj());
        }
    }

    #[test]
    fn non_psh_potential_is_rejected() {
        let phi = FnPotential { n: 1, f: Arc::new(|z: &[C64]| z[0].re * z[0].re - z[0].im * z[0].im), symmetry: Symmetry::None };
        assert!(matches!(potential_jet(&phi, &[c(0.0, 0.0)]), Err(Error::NotStrictlyPsh(_))));
    }

    #[test]
    fn finite_difference_jet_tracks_analytic_jet() {
        let model = NegLogBall::unit(1);
        let p = [c(0.3, 0.2)];
        let fd = FnPotential {
            n: 1,
            f: Arc::new(|z: &[C64]| -(1.0 - z[0].norm_sqr()).ln()),
            symmetry: Symmetry::Unitary,
        };
        let exact = potential_jet(&model, &p).unwrap();
        let approx_jet = potential_jet(&fd, &p).unwrap();
        for ((a, b), v) in exact.entries() {
            let w = approx_jet.get(a, b);
            let order = a.iter().chain(b).map(|&k| k as usize).sum::<usize>();
            let tol = if order <= 2 { 1e-9 } else { 1e-5 };
            assert!((v - w).norm() <= tol * v.norm().max(1.0), "{a:?},{b:?}: {v} vs {w}");
        }
    }
}
