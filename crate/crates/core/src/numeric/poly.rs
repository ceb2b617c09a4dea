//! Homogeneous polynomials in two or three variables.

use std::collections::BTreeMap;
use std::fmt::Debug;

use super::exact::Exact;
use super::scalar::{Scalar, C64};
use crate::error::{Error, Result};

/// Coefficient ring for [`HomPoly`].
pub trait Coeff: Clone + Debug + PartialEq + Send + Sync {
    fn zero() -> Self;
    fn one() -> Self;
    fn from_int(n: i64) -> Self;
    fn is_zero(&self) -> bool;
    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn neg(&self) -> Self;
    fn magnitude(&self) -> f64;
    fn to_c64(&self) -> C64;
}

impl Coeff for C64 {
    fn zero() -> Self {
        C64::new(0.0, 0.0)
    }
    fn one() -> Self {
        C64::new(1.0, 0.0)
    }
    fn from_int(n: i64) -> Self {
        C64::new(n as f64, 0.0)
    }
    fn is_zero(&self) -> bool {
        self.re == 0.0 && self.im == 0.0
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn neg(&self) -> Self {
        -self
    }
    fn magnitude(&self) -> f64 {
        self.norm()
    }
    fn to_c64(&self) -> C64 {
        *self
    }
}

impl Coeff for Exact {
    fn zero() -> Self {
        Exact::zero()
    }
    fn one() -> Self {
        Exact::one()
    }
    fn from_int(n: i64) -> Self {
        Exact::from_int(n)
    }
    fn is_zero(&self) -> bool {
        Exact::is_zero(self)
    }
    fn add(&self, o: &Self) -> Self {
        Exact::add(self, o)
    }
    fn sub(&self, o: &Self) -> Self {
        Exact::sub(self, o)
    }
    fn mul(&self, o: &Self) -> Self {
        Exact::mul(self, o)
    }
    fn neg(&self) -> Self {
        Exact::neg(self)
    }
    fn magnitude(&self) -> f64 {
        Exact::magnitude(self)
    }
    fn to_c64(&self) -> C64 {
        Exact::to_c64(self)
    }
}

pub type Exps = [u32; 3];

/// Homogeneous polynomial; every stored monomial has total degree `degree`.
///
/// Terms are kept sorted by exponent tuple with no zero coefficients, so
/// structural equality is polynomial equality.
#[derive(Clone, Debug, PartialEq)]
pub struct HomPoly<C: Coeff = C64> {
    nvars: usize,
    degree: u32,
    terms: Vec<(Exps, C)>,
}

impl<C: Coeff> HomPoly<C> {
    pub fn zero(nvars: usize, degree: u32) -> Self {
        assert!(nvars == 2 || nvars == 3, "HomPoly supports 2 or 3 variables");
        HomPoly { nvars, degree, terms: Vec::new() }
    }

    pub fn from_terms<I>(nvars: usize, degree: u32, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Exps, C)>,
    {
        if nvars != 2 && nvars != 3 {
            return Err(Error::InvalidInput(format!("HomPoly needs 2 or 3 variables, got {nvars}")));
        }
        let mut acc: BTreeMap<Exps, C> = BTreeMap::new();
        for (e, c) in terms {
            if nvars == 2 && e[2] != 0 {
                return Err(Error::InvalidInput(format!("exponent {e:?} uses a third variable")));
            }
            let total: u32 = e.iter().sum();
            if total != degree {
                return Err(Error::DegreeMismatch(format!("monomial {e:?} has degree {total}, expected {degree}")));
            }
            let entry = acc.entry(e).or_insert_with(C::zero);
            *entry = entry.add(&c);
        }
        Ok(Self::from_map(nvars, degree, acc))
    }

    fn from_map(nvars: usize, degree: u32, map: BTreeMap<Exps, C>) -> Self {
        let terms = map.into_iter().filter(|(_, c)| !c.is_zero()).collect();
        HomPoly { nvars, degree, terms }
    }

    pub fn monomial(nvars: usize, exps: Exps, c: C) -> Self {
        let degree = exps.iter().sum();
        Self::from_terms(nvars, degree, [(exps, c)]).expect("valid monomial")
    }

    /// The coordinate function `x_k`.
    pub fn var(nvars: usize, k: usize) -> Self {
        let mut e = [0; 3];
        e[k] = 1;
        Self::monomial(nvars, e, C::one())
    }

    pub fn constant(nvars: usize, c: C) -> Self {
        Self::monomial(nvars, [0, 0, 0], c)
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn terms(&self) -> &[(Exps, C)] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coeff(&self, e: Exps) -> C {
        match self.terms.binary_search_by(|(x, _)| x.cmp(&e)) {
            Ok(i) => self.terms[i].1.clone(),
            Err(_) => C::zero(),
        }
    }

    /// Largest coefficient magnitude.
    pub fn max_coeff(&self) -> f64 {
        self.terms.iter().map(|(_, c)| c.magnitude()).fold(0.0, f64::max)
    }

    /// True when the polynomial does not involve variable `k`.
    pub fn independent_of(&self, k: usize) -> bool {
        self.terms.iter().all(|(e, _)| e[k] == 0)
    }

    pub fn add(&self, o: &Self) -> Result<Self> {
        self.combine(o, false)
    }

    pub fn sub(&self, o: &Self) -> Result<Self> {
        self.combine(o, true)
    }

    fn combine(&self, o: &Self, negate: bool) -> Result<Self> {
        if self.is_zero() && o.nvars == self.nvars {
            return Ok(if negate { o.neg() } else { o.clone() });
        }
        if o.is_zero() && o.nvars == self.nvars {
            return Ok(self.clone());
        }
        if self.degree != o.degree || self.nvars != o.nvars {
            return Err(Error::DegreeMismatch(format!(
                "cannot add degree {} ({} vars) and degree {} ({} vars)",
                self.degree, self.nvars, o.degree, o.nvars
            )));
        }
        let mut acc: BTreeMap<Exps, C> = self.terms.iter().cloned().collect();
        for (e, c) in &o.terms {
            let entry = acc.entry(*e).or_insert_with(C::zero);
            *entry = if negate { entry.sub(c) } else { entry.add(c) };
        }
        Ok(Self::from_map(self.nvars, self.degree, acc))
    }

    pub fn neg(&self) -> Self {
        HomPoly {
            nvars: self.nvars,
            degree: self.degree,
            terms: self.terms.iter().map(|(e, c)| (*e, c.neg())).collect(),
        }
    }

    pub fn scale(&self, s: &C) -> Self {
        let terms = self.terms.iter().map(|(e, c)| (*e, c.mul(s))).filter(|(_, c)| !c.is_zero()).collect();
        HomPoly { nvars: self.nvars, degree: self.degree, terms }
    }

    pub fn mul(&self, o: &Self) -> Self {
        assert_eq!(self.nvars, o.nvars, "variable count mismatch");
        let mut acc: BTreeMap<Exps, C> = BTreeMap::new();
        for (e1, c1) in &self.terms {
            for (e2, c2) in &o.terms {
                let e = [e1[0] + e2[0], e1[1] + e2[1], e1[2] + e2[2]];
                let entry = acc.entry(e).or_insert_with(C::zero);
                *entry = entry.add(&c1.mul(c2));
            }
        }
        Self::from_map(self.nvars, self.degree + o.degree, acc)
    }

    pub fn pow(&self, n: u32) -> Self {
        let mut acc = Self::constant(self.nvars, C::one());
        for _ in 0..n {
            acc = acc.mul(self);
        }
        acc
    }

    /// Partial derivative with respect to variable `k`.
    pub fn partial(&self, k: usize) -> Self {
        let degree = self.degree.saturating_sub(1);
        let mut acc: BTreeMap<Exps, C> = BTreeMap::new();
        for (e, c) in &self.terms {
            if e[k] == 0 {
                continue;
            }
            let mut ne = *e;
            ne[k] -= 1;
            let entry = acc.entry(ne).or_insert_with(C::zero);
            *entry = entry.add(&c.mul(&C::from_int(e[k] as i64)));
        }
        Self::from_map(self.nvars, degree, acc)
    }

    /// Substitute `x_k ↦ subs[k]`, where all substitutes share one degree.
    pub fn compose(&self, subs: &[HomPoly<C>]) -> Result<Self> {
        if subs.len() != self.nvars {
            return Err(Error::InvalidInput(format!("compose needs {} substitutes, got {}", self.nvars, subs.len())));
        }
        let nv = subs[0].nvars;
        let e = subs[0].degree;
        if subs.iter().any(|s| s.nvars != nv || s.degree != e) {
            return Err(Error::DegreeMismatch("substitutes must share degree and variable count".into()));
        }
        let mut powers: Vec<Vec<HomPoly<C>>> = Vec::with_capacity(self.nvars);
        for s in subs {
            let mut row = vec![HomPoly::constant(nv, C::one())];
            for _ in 0..self.degree {
                let next = row.last().unwrap().mul(s);
                row.push(next);
            }
            powers.push(row);
        }
        let mut acc = HomPoly::zero(nv, self.degree * e);
        for (ex, c) in &self.terms {
            let mut m = HomPoly::constant(nv, c.clone());
            for k in 0..self.nvars {
                if ex[k] > 0 {
                    m = m.mul(&powers[k][ex[k] as usize]);
                }
            }
            acc = acc.add(&m)?;
        }
        Ok(acc)
    }

    /// The same polynomial viewed in `nvars` variables (adding or dropping
    /// an unused trailing variable).
    pub fn with_nvars(&self, nvars: usize) -> Result<Self> {
        if nvars == 2 && !self.independent_of(2) {
            return Err(Error::InvalidInput("polynomial depends on the third variable".into()));
        }
        Ok(HomPoly { nvars, degree: self.degree, terms: self.terms.clone() })
    }

    /// Binary-form coefficients `a_k` of `x^k y^(n−k)` (two variables).
    pub fn binary_coeffs(&self) -> Vec<C64> {
        let n = self.degree as usize;
        let mut out = vec![C64::new(0.0, 0.0); n + 1];
        for (e, c) in &self.terms {
            out[e[0] as usize] += c.to_c64();
        }
        out
    }

    /// Change of coefficient ring.
    pub fn map_coeffs<D: Coeff>(&self, f: impl Fn(&C) -> D) -> HomPoly<D> {
        HomPoly {
            nvars: self.nvars,
            degree: self.degree,
            terms: self.terms.iter().map(|(e, c)| (*e, f(c))).filter(|(_, c)| !c.is_zero()).collect(),
        }
    }

    pub fn to_c64(&self) -> HomPoly<C64> {
        self.map_coeffs(|c| c.to_c64())
    }

    /// Coefficients of the univariate polynomial in variable `k` obtained by
    /// fixing the other variables: returns `c[j]` multiplying `x_k^j`.
    pub fn collect_in(&self, k: usize, others: &[C64]) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); self.degree as usize + 1];
        for (e, c) in &self.terms {
            let mut v = c.to_c64();
            for m in 0..self.nvars {
                if m != k {
                    v *= others[m].powu(e[m]);
                }
            }
            out[e[k] as usize] += v;
        }
        out
    }
}

impl HomPoly<C64> {
    /// Evaluate at a point with `nvars` coordinates.
    pub fn eval(&self, x: &[C64]) -> C64 {
        self.eval_s(x)
    }

    /// Evaluate in any scalar type.
    pub fn eval_s<S: Scalar>(&self, x: &[S]) -> S {
        let d = self.degree as usize;
        let mut powers: Vec<S> = Vec::with_capacity(self.nvars * (d + 1));
        for &xi in x.iter().take(self.nvars) {
            let mut p = S::one();
            powers.push(p);
            for _ in 0..d {
                p = p * xi;
                powers.push(p);
            }
        }
        let mut acc = S::zero();
        for (e, c) in &self.terms {
            let mut m = S::from_c64(*c);
            for k in 0..self.nvars {
                if e[k] > 0 {
                    m = m * powers[k * (d + 1) + e[k] as usize];
                }
            }
            acc = acc + m;
        }
        acc
    }

    /// Evaluate with jet arguments.
    pub fn eval_jets<S: Scalar>(&self, x: &[crate::numeric::Jet2<S>]) -> crate::numeric::Jet2<S> {
        let d = self.degree as usize;
        let m = x.first().map(|j| j.order()).unwrap_or(0);
        let mut powers = Vec::with_capacity(self.nvars * (d + 1));
        for xi in x.iter().take(self.nvars) {
            let mut p = crate::numeric::Jet2::constant(m, S::one());
            powers.push(p.clone());
            for _ in 0..d {
                p = p.mul(xi);
                powers.push(p.clone());
            }
        }
        let mut acc = crate::numeric::Jet2::zero(m);
        for (e, c) in &self.terms {
            let mut t = crate::numeric::Jet2::constant(m, S::from_c64(*c));
            for k in 0..self.nvars {
                if e[k] > 0 {
                    t = t.mul(&powers[k * (d + 1) + e[k] as usize]);
                }
            }
            acc = acc.add(&t);
        }
        acc
    }

    /// Value and gradient.
    pub fn eval_grad<S: Scalar>(&self, x: &[S]) -> (S, [S; 3]) {
        let d = self.degree as usize;
        let mut powers: Vec<S> = Vec::with_capacity(self.nvars * (d + 1));
        for &xi in x.iter().take(self.nvars) {
            let mut p = S::one();
            powers.push(p);
            for _ in 0..d {
                p = p * xi;
                powers.push(p);
            }
        }
        let pw = |k: usize, e: u32| powers[k * (d + 1) + e as usize];
        let mut val = S::zero();
        let mut grad = [S::zero(); 3];
        for (e, c) in &self.terms {
            let c = S::from_c64(*c);
            let mut full = c;
            for k in 0..self.nvars {
                full = full * pw(k, e[k]);
            }
            val = val + full;
            for k in 0..self.nvars {
                if e[k] == 0 {
                    continue;
                }
                let mut t = c * S::from_f64(e[k] as f64);
                for m in 0..self.nvars {
                    let ex = if m == k { e[m] - 1 } else { e[m] };
                    t = t * pw(m, ex);
                }
                grad[k] = grad[k] + t;
            }
        }
        (val, grad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn degree_mismatch_rejected() {
        let r = HomPoly::<C64>::from_terms(3, 2, [([1, 0, 0], c(1.0, 0.0))]);
        assert!(matches!(r, Err(Error::DegreeMismatch(_))));
    }

    #[test]
    fn partial_and_euler_identity() {
        let p =
            HomPoly::from_terms(3, 3, [([3, 0, 0], c(1.0, 0.0)), ([1, 1, 1], c(0.0, 2.0)), ([0, 0, 3], c(-1.0, 0.5))])
                .unwrap();
        let x = [c(0.3, 0.1), c(-0.7, 0.2), c(1.1, -0.4)];
        let mut euler = c(0.0, 0.0);
        for k in 0..3 {
            euler += x[k] * p.partial(k).eval(&x);
        }
        assert!((euler - p.eval(&x) * 3.0).norm() < 1e-13);
        let (v, g) = p.eval_grad(&x);
        assert!((v - p.eval(&x)).norm() < 1e-14);
        for k in 0..3 {
            assert!((g[k] - p.partial(k).eval(&x)).norm() < 1e-13);
        }
    }

    #[test]
    fn compose_matches_evaluation() {
        let x = HomPoly::<C64>::var(2, 0);
        let y = HomPoly::<C64>::var(2, 1);
        let p = x.mul(&x).add(&y.mul(&y)).unwrap();
        let q = x.mul(&y).scale(&c(4.0, 0.0));
        let comp = p.compose(&[q.clone(), p.clone()]).unwrap();
        assert_eq!(comp.degree(), 4);
        let pt = [c(0.2, 0.9), c(-1.3, 0.4)];
        let direct = p.eval(&[q.eval(&pt), p.eval(&pt)]);
        assert!((comp.eval(&pt) - direct).norm() < 1e-12);
    }

    #[test]
    fn exact_cancellation_is_structural() {
        let x = HomPoly::<Exact>::var(3, 0);
        let y = HomPoly::<Exact>::var(3, 1);
        let a = x.mul(&y).sub(&y.mul(&x)).unwrap();
        assert!(a.is_zero());
    }
}
