//! Small numerical kernels: real roots of polynomials up to degree four,
//! 2×2 eigen-analysis and truncated multivariate polynomials.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{usage, Result};

/// Default clustering tolerance for coincident roots.
pub const DEFAULT_CLUSTER_TOL: f64 = 1e-7;
/// Relative size of |p| at a critical point below which the closed forms are not trusted.
const NEAR_DOUBLE: f64 = 1e-10;

/// Real polynomial of degree at most four, coefficients in ascending order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Poly1 {
    pub coeffs: Vec<f64>,
}

impl Poly1 {
    pub fn new(coeffs: &[f64]) -> Self {
        Poly1 { coeffs: coeffs.to_vec() }
    }

    /// Degree after dropping exactly-zero leading coefficients (`None` for the zero polynomial).
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.iter().rposition(|&c| c != 0.0)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    /// Σ|c_i||x|^i, the natural magnitude of the terms summed by `eval`.
    pub fn eval_scale(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x.abs() + c.abs())
    }

    pub fn deriv(&self) -> Poly1 {
        if self.coeffs.len() <= 1 {
            return Poly1 { coeffs: vec![0.0] };
        }
        Poly1 {
            coeffs: self.coeffs.iter().enumerate().skip(1).map(|(i, &c)| i as f64 * c).collect(),
        }
    }

    /// Largest coefficient magnitude.
    pub fn scale(&self) -> f64 {
        self.coeffs.iter().fold(0.0_f64, |m, c| m.max(c.abs()))
    }

    fn trimmed(&self) -> Poly1 {
        let n = self.degree().map_or(0, |d| d + 1);
        Poly1 { coeffs: self.coeffs[..n.max(1)].to_vec() }
    }
}

fn newton_polish(p: &Poly1, dp: &Poly1, mut x: f64) -> f64 {
    let mut fx = p.eval(x).abs();
    for _ in 0..8 {
        let d = dp.eval(x);
        if d == 0.0 || fx == 0.0 {
            break;
        }
        let xn = x - p.eval(x) / d;
        let fn_ = p.eval(xn).abs();
        if !(fn_ < fx) {
            break;
        }
        x = xn;
        fx = fn_;
    }
    x
}

fn quadratic_roots(c: f64, b: f64, a: f64) -> Vec<f64> {
    // a x² + b x + c
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return vec![];
    }
    let s = disc.sqrt();
    let q = -0.5 * (b + b.signum() * s);
    if q == 0.0 {
        return vec![0.0, 0.0];
    }
    vec![q / a, c / q]
}

fn cubic_roots(p: &Poly1) -> Vec<f64> {
    let c = &p.coeffs;
    let (a, b, cc) = (c[2] / c[3], c[1] / c[3], c[0] / c[3]);
    let pp = b - a * a / 3.0;
    let qq = 2.0 * a * a * a / 27.0 - a * b / 3.0 + cc;
    let shift = -a / 3.0;
    let d = qq * qq / 4.0 + pp * pp * pp / 27.0;
    if d > 0.0 {
        let u = (-qq / 2.0 - qq.signum() * d.sqrt()).cbrt();
        let t = if u != 0.0 { u - pp / (3.0 * u) } else { 0.0 };
        vec![t + shift]
    } else if pp == 0.0 {
        vec![shift; 3]
    } else {
        let r = (-pp / 3.0).sqrt();
        let arg = (3.0 * qq / (2.0 * pp) * (-3.0 / pp).sqrt()).clamp(-1.0, 1.0);
        let phi = arg.acos() / 3.0;
        (0..3)
            .map(|k| 2.0 * r * (phi - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos() + shift)
            .collect()
    }
}

fn quartic_roots(p: &Poly1) -> Vec<f64> {
    let c = &p.coeffs;
    let (a, b, cc, d) = (c[3] / c[4], c[2] / c[4], c[1] / c[4], c[0] / c[4]);
    let pp = b - 3.0 * a * a / 8.0;
    let qq = cc - a * b / 2.0 + a * a * a / 8.0;
    let rr = d - a * cc / 4.0 + a * a * b / 16.0 - 3.0 * a * a * a * a / 256.0;
    let shift = -a / 4.0;
    let mut ys = Vec::new();
    if qq.abs() <= 1e-14 * (1.0 + pp.abs() + rr.abs()) {
        for z in quadratic_roots(rr, pp, 1.0) {
            if z >= 0.0 {
                ys.push(z.sqrt());
                ys.push(-z.sqrt());
            }
        }
    } else {
        // resolvent 8m³ + 8p m² + (2p² − 8r) m − q² = 0 has a positive root
        let res = Poly1::new(&[-qq * qq, 2.0 * pp * pp - 8.0 * rr, 8.0 * pp, 8.0]);
        let m = cubic_roots(&res).into_iter().fold(f64::NAN, |best, m| if m > 0.0 && !(m <= best) { m } else { best });
        if !(m > 0.0) {
            return vec![];
        }
        let m = newton_polish(&res, &res.deriv(), m);
        let s = (2.0 * m).sqrt();
        for sg in [1.0, -1.0] {
            ys.extend(quadratic_roots(pp / 2.0 + m + sg * qq / (2.0 * s), -sg * s, 1.0));
        }
    }
    ys.into_iter().map(|y| y + shift).collect()
}

fn closed_form(p: &Poly1) -> Vec<f64> {
    let c = &p.coeffs;
    match c.len() - 1 {
        1 => vec![-c[0] / c[1]],
        2 => quadratic_roots(c[0], c[1], c[2]),
        3 => cubic_roots(p),
        4 => quartic_roots(p),
        _ => vec![],
    }
}

fn bisect_root(p: &Poly1, mut lo: f64, mut hi: f64) -> f64 {
    let mut flo = p.eval(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = p.eval(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm < 0.0) == (flo < 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Bracketing solver: critical points split the line into monotone pieces.
/// Returns roots with multiplicities (double roots found as near-zero critical values).
fn bracketed(p: &Poly1) -> Vec<(f64, usize)> {
    let p = p.trimmed();
    let n = p.coeffs.len() - 1;
    if n == 0 {
        return vec![];
    }
    if n == 1 {
        return vec![(-p.coeffs[0] / p.coeffs[1], 1)];
    }
    let crit = bracketed(&p.deriv());
    let lead = p.coeffs[n];
    let bound = 1.0 + p.coeffs[..n].iter().fold(0.0_f64, |m, c| m.max((c / lead).abs()));
    let mut out = Vec::new();
    let mut knots: Vec<(f64, bool)> = vec![(-bound, false)];
    for &(c, m) in &crit {
        if c <= -bound || c >= bound {
            continue;
        }
        let zero = p.eval(c).abs() <= NEAR_DOUBLE * p.eval_scale(c);
        if zero {
            out.push((c, m + 1));
        }
        knots.push((c, zero));
    }
    knots.push((bound, false));
    for w in knots.windows(2) {
        let ((lo, zl), (hi, zh)) = (w[0], w[1]);
        if zl || zh || hi <= lo {
            continue;
        }
        let (fl, fh) = (p.eval(lo), p.eval(hi));
        if fl == 0.0 {
            out.push((lo, 1));
        } else if fh != 0.0 && (fl < 0.0) != (fh < 0.0) {
            out.push((bisect_root(&p, lo, hi), 1));
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

fn cluster(mut roots: Vec<(f64, usize)>, tol: f64) -> Vec<(f64, usize)> {
    roots.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, usize, f64)> = Vec::new();
    for (r, m) in roots {
        if let Some(last) = out.last_mut() {
            if (r - last.2).abs() <= tol {
                let tot = last.1 + m;
                last.0 = (last.0 * last.1 as f64 + r * m as f64) / tot as f64;
                last.1 = tot;
                last.2 = r;
                continue;
            }
        }
        out.push((r, m, r));
    }
    out.into_iter().map(|(r, m, _)| (r, m)).collect()
}

/// All real roots of a polynomial of degree 1–4, with multiplicities.
///
/// Closed forms (Cardano/Ferrari) are polished by Newton; when the polynomial
/// is within a relative 1e-10 of having a multiple root, or the closed form
/// disagrees with the bracketing count, the bracketing solver is used instead.
/// Roots closer than `tol` are merged.
pub fn solve_poly_real(p: &Poly1, tol: f64) -> Result<Vec<(f64, usize)>> {
    if !(tol > 0.0) {
        return usage("root clustering tolerance must be positive");
    }
    if p.coeffs.iter().any(|c| !c.is_finite()) {
        return usage("polynomial has non-finite coefficients");
    }
    let Some(deg) = p.degree() else {
        return usage("zero polynomial has no isolated roots");
    };
    if deg > 4 {
        return usage(format!("degree {deg} exceeds 4"));
    }
    let p = p.trimmed();
    // exact zero roots first
    let nz = p.coeffs.iter().position(|&c| c != 0.0).unwrap_or(0);
    let mut roots: Vec<(f64, usize)> = Vec::new();
    if nz > 0 {
        roots.push((0.0, nz));
    }
    let q = Poly1 { coeffs: p.coeffs[nz..].to_vec() };
    if q.coeffs.len() > 1 {
        let dq = q.deriv();
        let brack = bracketed(&q);
        let near_multiple = brack.iter().any(|&(_, m)| m > 1)
            || bracketed(&dq).iter().any(|&(c, _)| q.eval(c).abs() <= NEAR_DOUBLE * q.eval_scale(c));
        let cf: Vec<f64> = closed_form(&q).into_iter().filter(|r| r.is_finite()).collect();
        if near_multiple || cf.len() != brack.len() {
            roots.extend(brack.into_iter().map(|(r, m)| (if m == 1 { newton_polish(&q, &dq, r) } else { r }, m)));
        } else {
            roots.extend(cf.into_iter().map(|r| (newton_polish(&q, &dq, r), 1)));
        }
    }
    Ok(cluster(roots, tol))
}

/// Real 2×2 matrix [[a, b], [c, d]].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Matrix2 {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Matrix2 {
    pub const fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Matrix2 { a, b, c, d }
    }

    pub fn trace(&self) -> f64 {
        self.a + self.d
    }

    pub fn det(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    pub fn max_abs(&self) -> f64 {
        self.a.abs().max(self.b.abs()).max(self.c.abs()).max(self.d.abs())
    }

    pub fn mul_vec(&self, v: [f64; 2]) -> [f64; 2] {
        [self.a * v[0] + self.b * v[1], self.c * v[0] + self.d * v[1]]
    }

    pub fn transpose(&self) -> Matrix2 {
        Matrix2::new(self.a, self.c, self.b, self.d)
    }

    /// Unit vector spanning the (numerical) kernel of M − λI.
    pub fn eigvec(&self, lambda: f64) -> [f64; 2] {
        let r1 = [self.b, lambda - self.a];
        let r2 = [lambda - self.d, self.c];
        let n1 = r1[0].hypot(r1[1]);
        let n2 = r2[0].hypot(r2[1]);
        let v = if n1 >= n2 { r1 } else { r2 };
        let n = n1.max(n2);
        if n == 0.0 {
            [1.0, 0.0]
        } else {
            [v[0] / n, v[1] / n]
        }
    }
}

/// Eigenvalue pair of a real 2×2 matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EigPair {
    /// Real eigenvalues, ascending.
    Real(f64, f64),
    /// re ± i·im with im > 0.
    Complex { re: f64, im: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Eigen2 {
    pub trace: f64,
    pub det: f64,
    pub pair: EigPair,
}

impl Eigen2 {
    pub fn values(&self) -> [Complex64; 2] {
        match self.pair {
            EigPair::Real(l1, l2) => [Complex64::new(l1, 0.0), Complex64::new(l2, 0.0)],
            EigPair::Complex { re, im } => [Complex64::new(re, im), Complex64::new(re, -im)],
        }
    }

    pub fn is_real(&self) -> bool {
        matches!(self.pair, EigPair::Real(..))
    }
}

/// Eigenvalues from trace and determinant; the sign of the discriminant decides the type.
pub fn eigen2(m: &Matrix2) -> Eigen2 {
    let tr = m.trace();
    let det = m.det();
    let h = 0.5 * (m.a - m.d);
    let disc = h * h + m.b * m.c;
    let pair = if disc >= 0.0 {
        let s = disc.sqrt();
        let big = if tr >= 0.0 { 0.5 * tr + s } else { 0.5 * tr - s };
        let small = if big != 0.0 { det / big } else { 0.0 };
        if big <= small {
            EigPair::Real(big, small)
        } else {
            EigPair::Real(small, big)
        }
    } else {
        EigPair::Complex { re: 0.5 * tr, im: (-disc).sqrt() }
    };
    Eigen2 { trace: tr, det, pair }
}

/// Multivariate polynomial truncated at total degree `cap`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncMultiPoly {
    nvars: usize,
    cap: u32,
    terms: BTreeMap<Vec<u32>, f64>,
}

pub const MAX_VARS: usize = 4;
pub const MAX_CAP: u32 = 6;

impl TruncMultiPoly {
    pub fn zero(nvars: usize, cap: u32) -> Result<Self> {
        if nvars == 0 || nvars > MAX_VARS {
            return usage(format!("number of variables must be 1..={MAX_VARS}, got {nvars}"));
        }
        if cap > MAX_CAP {
            return usage(format!("degree cap must be at most {MAX_CAP}, got {cap}"));
        }
        Ok(TruncMultiPoly { nvars, cap, terms: BTreeMap::new() })
    }

    pub fn constant(nvars: usize, cap: u32, c: f64) -> Result<Self> {
        Self::monomial(nvars, cap, &vec![0; nvars], c)
    }

    /// The coordinate function of variable `i`.
    pub fn var(nvars: usize, cap: u32, i: usize) -> Result<Self> {
        if i >= nvars {
            return usage(format!("variable index {i} out of range for {nvars} variables"));
        }
        let mut e = vec![0; nvars];
        e[i] = 1;
        Self::monomial(nvars, cap, &e, 1.0)
    }

    pub fn monomial(nvars: usize, cap: u32, exps: &[u32], c: f64) -> Result<Self> {
        let mut p = Self::zero(nvars, cap)?;
        if exps.len() != nvars {
            return usage("exponent vector length does not match variable count");
        }
        p.add_term(exps.to_vec(), c);
        Ok(p)
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn cap(&self) -> u32 {
        self.cap
    }

    fn add_term(&mut self, exps: Vec<u32>, c: f64) {
        if exps.iter().sum::<u32>() > self.cap || c == 0.0 {
            return;
        }
        let v = self.terms.get(&exps).copied().unwrap_or(0.0) + c;
        if v == 0.0 {
            self.terms.remove(&exps);
        } else {
            self.terms.insert(exps, v);
        }
    }

    pub fn coeff(&self, exps: &[u32]) -> f64 {
        self.terms.get(exps).copied().unwrap_or(0.0)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<u32>, &f64)> {
        self.terms.iter()
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.values().fold(0.0_f64, |m, c| m.max(c.abs()))
    }

    /// Largest coefficient magnitude among terms of total degree ≤ d.
    pub fn max_abs_coeff_upto(&self, d: u32) -> f64 {
        self.terms
            .iter()
            .filter(|(k, _)| k.iter().sum::<u32>() <= d)
            .fold(0.0_f64, |m, (_, c)| m.max(c.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| c * e.iter().zip(x).map(|(&k, &v)| v.powi(k as i32)).product::<f64>())
            .sum()
    }

    fn compatible(&self, q: &Self) -> Result<()> {
        if self.nvars != q.nvars {
            return usage(format!("variable-count mismatch: {} vs {}", self.nvars, q.nvars));
        }
        if self.cap != q.cap {
            return usage(format!("degree-cap mismatch: {} vs {}", self.cap, q.cap));
        }
        Ok(())
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut r = TruncMultiPoly { terms: BTreeMap::new(), ..*self };
        for (k, v) in &self.terms {
            r.add_term(k.clone(), v * s);
        }
        r
    }
}

pub fn tp_add(p: &TruncMultiPoly, q: &TruncMultiPoly) -> Result<TruncMultiPoly> {
    p.compatible(q)?;
    let mut r = p.clone();
    for (k, v) in &q.terms {
        r.add_term(k.clone(), *v);
    }
    Ok(r)
}

pub fn tp_sub(p: &TruncMultiPoly, q: &TruncMultiPoly) -> Result<TruncMultiPoly> {
    tp_add(p, &q.scale(-1.0))
}

pub fn tp_mul(p: &TruncMultiPoly, q: &TruncMultiPoly) -> Result<TruncMultiPoly> {
    p.compatible(q)?;
    let mut acc: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
    for (ka, va) in &p.terms {
        let da: u32 = ka.iter().sum();
        for (kb, vb) in &q.terms {
            if da + kb.iter().sum::<u32>() > p.cap {
                continue;
            }
            let k: Vec<u32> = ka.iter().zip(kb).map(|(a, b)| a + b).collect();
            *acc.entry(k).or_insert(0.0) += va * vb;
        }
    }
    acc.retain(|_, v| *v != 0.0);
    Ok(TruncMultiPoly { nvars: p.nvars, cap: p.cap, terms: acc })
}

/// Partial derivative with respect to variable `var`.
pub fn tp_diff(p: &TruncMultiPoly, var: usize) -> Result<TruncMultiPoly> {
    if var >= p.nvars {
        return usage(format!("variable index {var} out of range for {} variables", p.nvars));
    }
    let mut r = TruncMultiPoly { terms: BTreeMap::new(), ..*p };
    for (k, v) in &p.terms {
        if k[var] == 0 {
            continue;
        }
        let mut e = k.clone();
        e[var] -= 1;
        r.add_term(e, v * k[var] as f64);
    }
    Ok(r)
}

/// Substitutes `subs[i]` for variable i of `p`; the result lives in the variables of `subs`.
pub fn tp_compose(p: &TruncMultiPoly, subs: &[TruncMultiPoly]) -> Result<TruncMultiPoly> {
    if subs.len() != p.nvars {
        return usage(format!("composition needs {} substitutions, got {}", p.nvars, subs.len()));
    }
    let first = &subs[0];
    for s in subs {
        first.compatible(s)?;
    }
    let one = TruncMultiPoly::constant(first.nvars, first.cap, 1.0)?;
    // powers[i][k] = subs[i]^k
    let mut powers: Vec<Vec<TruncMultiPoly>> = Vec::with_capacity(subs.len());
    for s in subs {
        let mut v = vec![one.clone()];
        for k in 1..=p.cap as usize {
            let next = tp_mul(&v[k - 1], s)?;
            v.push(next);
        }
        powers.push(v);
    }
    let mut r = TruncMultiPoly::zero(first.nvars, first.cap)?;
    for (k, c) in &p.terms {
        let mut t = one.scale(*c);
        for (i, &e) in k.iter().enumerate() {
            if e > 0 {
                t = tp_mul(&t, &powers[i][e as usize])?;
            }
        }
        r = tp_add(&r, &t)?;
    }
    Ok(r)
}
