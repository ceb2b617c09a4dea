//! Truncated power series in one and two variables.

use super::scalar::{Scalar, C64};
use crate::error::{Error, Result};

/// Position of the monomial `z^i w^j` in the dense graded layout.
#[inline]
pub fn idx(i: usize, j: usize) -> usize {
    let k = i + j;
    k * (k + 1) / 2 + j
}

#[inline]
fn len_for(order: usize) -> usize {
    (order + 1) * (order + 2) / 2
}

/// Bivariate series truncated above total degree `order`.
#[derive(Clone, Debug, PartialEq)]
pub struct Jet2<S: Scalar = C64> {
    order: usize,
    c: Vec<S>,
}

impl<S: Scalar> Jet2<S> {
    pub fn zero(order: usize) -> Self {
        Jet2 { order, c: vec![S::zero(); len_for(order)] }
    }

    pub fn constant(order: usize, v: S) -> Self {
        let mut j = Self::zero(order);
        j.c[0] = v;
        j
    }

    /// The coordinate `z` (k = 0) or `w` (k = 1).
    pub fn var(order: usize, k: usize) -> Self {
        let mut j = Self::zero(order);
        if order >= 1 {
            j.c[if k == 0 { idx(1, 0) } else { idx(0, 1) }] = S::one();
        }
        j
    }

    pub fn monomial(order: usize, i: usize, jj: usize, v: S) -> Self {
        let mut j = Self::zero(order);
        if i + jj <= order {
            j.c[idx(i, jj)] = v;
        }
        j
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn coeff(&self, i: usize, j: usize) -> S {
        if i + j <= self.order {
            self.c[idx(i, j)]
        } else {
            S::zero()
        }
    }

    pub fn set(&mut self, i: usize, j: usize, v: S) {
        assert!(i + j <= self.order, "monomial beyond truncation order");
        self.c[idx(i, j)] = v;
    }

    pub fn coeffs(&self) -> &[S] {
        &self.c
    }

    /// Re-truncate at a (usually lower) order.
    pub fn truncate(&self, order: usize) -> Self {
        let mut out = Self::zero(order);
        let m = order.min(self.order);
        out.c[..len_for(m)].copy_from_slice(&self.c[..len_for(m)]);
        out
    }

    pub fn add(&self, o: &Self) -> Self {
        let m = self.order.min(o.order);
        let n = len_for(m);
        Jet2 { order: m, c: (0..n).map(|k| self.c[k] + o.c[k]).collect() }
    }

    pub fn sub(&self, o: &Self) -> Self {
        let m = self.order.min(o.order);
        let n = len_for(m);
        Jet2 { order: m, c: (0..n).map(|k| self.c[k] - o.c[k]).collect() }
    }

    pub fn scale(&self, s: S) -> Self {
        Jet2 { order: self.order, c: self.c.iter().map(|&x| x * s).collect() }
    }

    pub fn mul(&self, o: &Self) -> Self {
        let m = self.order.min(o.order);
        let mut out = vec![S::zero(); len_for(m)];
        for k1 in 0..=m {
            let b1 = k1 * (k1 + 1) / 2;
            for k2 in 0..=(m - k1) {
                let b2 = k2 * (k2 + 1) / 2;
                let bo = (k1 + k2) * (k1 + k2 + 1) / 2;
                for j1 in 0..=k1 {
                    let a = self.c[b1 + j1];
                    if a.is_zero() {
                        continue;
                    }
                    for j2 in 0..=k2 {
                        out[bo + j1 + j2] = out[bo + j1 + j2] + a * o.c[b2 + j2];
                    }
                }
            }
        }
        Jet2 { order: m, c: out }
    }

    pub fn has_zero_constant(&self) -> bool {
        self.c[0].is_zero()
    }

    /// Homogeneous part of total degree k as a jet.
    pub fn homogeneous_part(&self, k: usize) -> Self {
        let mut out = Self::zero(self.order);
        if k <= self.order {
            let b = k * (k + 1) / 2;
            out.c[b..=b + k].copy_from_slice(&self.c[b..=b + k]);
        }
        out
    }

    /// `self(u, v)` for series `u, v` without constant term.
    pub fn compose(&self, u: &Self, v: &Self) -> Result<Self> {
        if !u.has_zero_constant() || !v.has_zero_constant() {
            return Err(Error::Precondition("inner jet must have zero constant term".into()));
        }
        let m = self.order.min(u.order).min(v.order);
        let u = u.truncate(m);
        let v = v.truncate(m);
        let mut vpow = Vec::with_capacity(m + 1);
        vpow.push(Self::constant(m, S::one()));
        for k in 1..=m {
            let next = vpow[k - 1].mul(&v);
            vpow.push(next);
        }
        // B_i(v) = Σ_j a_ij v^j, then Horner in u
        let b = |i: usize| {
            let mut acc = Self::zero(m);
            for j in 0..=(m - i) {
                let a = self.coeff(i, j);
                if !a.is_zero() {
                    for (t, x) in acc.c.iter_mut().zip(vpow[j].c.iter()) {
                        *t = *t + a * *x;
                    }
                }
            }
            acc
        };
        let mut acc = b(m);
        for i in (0..m).rev() {
            acc = acc.mul(&u).add(&b(i));
        }
        Ok(acc)
    }

    pub fn eval(&self, z: S, w: S) -> S {
        // Horner over total degree, then in w/z inside each block
        let mut acc = S::zero();
        for i in (0..=self.order).rev() {
            let mut row = S::zero();
            for j in (0..=(self.order - i)).rev() {
                row = row * w + self.c[idx(i, j)];
            }
            acc = acc * z + row;
        }
        acc
    }

    /// Partial derivatives at a point.
    pub fn eval_grad(&self, z: S, w: S) -> (S, S, S) {
        let m = self.order;
        let mut zp = vec![S::one(); m + 1];
        let mut wp = vec![S::one(); m + 1];
        for k in 1..=m {
            zp[k] = zp[k - 1] * z;
            wp[k] = wp[k - 1] * w;
        }
        let (mut v, mut dz, mut dw) = (S::zero(), S::zero(), S::zero());
        for i in 0..=m {
            for j in 0..=(m - i) {
                let a = self.c[idx(i, j)];
                if a.is_zero() {
                    continue;
                }
                v = v + a * zp[i] * wp[j];
                if i > 0 {
                    dz = dz + a * S::from_usize(i) * zp[i - 1] * wp[j];
                }
                if j > 0 {
                    dw = dw + a * S::from_usize(j) * zp[i] * wp[j - 1];
                }
            }
        }
        (v, dz, dw)
    }

    /// Largest coefficient modulus.
    /// Series reciprocal; the constant term must be nonzero.
    pub fn recip(&self) -> Result<Self> {
        let c0 = self.c[0];
        if c0.is_zero() {
            return Err(Error::Precondition("series reciprocal of a non-unit".into()));
        }
        let inv0 = S::one() / c0;
        let mut r = self.scale(inv0);
        r.c[0] = S::zero();
        let one = Self::constant(self.order, S::one());
        let mut acc = one.clone();
        for _ in 0..self.order {
            acc = one.sub(&r.mul(&acc));
        }
        Ok(acc.scale(inv0))
    }

    pub fn max_abs(&self) -> f64 {
        self.c.iter().map(|x| x.modulus()).fold(0.0, f64::max)
    }

    /// Largest coefficient modulus in total degrees `from..=order`.
    pub fn max_abs_from(&self, from: usize) -> f64 {
        if from > self.order {
            return 0.0;
        }
        self.c[from * (from + 1) / 2..].iter().map(|x| x.modulus()).fold(0.0, f64::max)
    }

    pub fn map<T: Scalar>(&self, f: impl Fn(S) -> T) -> Jet2<T> {
        Jet2 { order: self.order, c: self.c.iter().map(|&x| f(x)).collect() }
    }

    pub fn to_c64(&self) -> Jet2<C64> {
        self.map(|x| x.to_c64())
    }

    pub fn from_c64(j: &Jet2<C64>) -> Self {
        j.map(S::from_c64)
    }
}

/// A pair of jets: a germ `(ℂ², 0) → (ℂ², ·)` truncated at a common order.
#[derive(Clone, Debug, PartialEq)]
pub struct JetMap<S: Scalar = C64> {
    pub f: [Jet2<S>; 2],
}

impl<S: Scalar> JetMap<S> {
    pub fn new(a: Jet2<S>, b: Jet2<S>) -> Self {
        JetMap { f: [a, b] }
    }

    pub fn identity(order: usize) -> Self {
        JetMap { f: [Jet2::var(order, 0), Jet2::var(order, 1)] }
    }

    /// Linear map `(z,w) ↦ (a z + b w, c z + d w)` from a row-major matrix.
    pub fn linear(order: usize, m: [[S; 2]; 2]) -> Self {
        let mut a = Jet2::zero(order);
        let mut b = Jet2::zero(order);
        a.set(1, 0, m[0][0]);
        a.set(0, 1, m[0][1]);
        b.set(1, 0, m[1][0]);
        b.set(0, 1, m[1][1]);
        JetMap { f: [a, b] }
    }

    /// The normal form `(χ₁z + c w^q, χ₂w)`.
    pub fn normal_form(order: usize, chi1: S, chi2: S, c: S, q: usize) -> Self {
        let mut a = Jet2::monomial(order, 1, 0, chi1);
        if q >= 1 && q <= order && !c.is_zero() {
            a.set(0, q, a.coeff(0, q) + c);
        }
        JetMap { f: [a, Jet2::monomial(order, 0, 1, chi2)] }
    }

    pub fn order(&self) -> usize {
        self.f[0].order().min(self.f[1].order())
    }

    pub fn linear_part(&self) -> [[S; 2]; 2] {
        [[self.f[0].coeff(1, 0), self.f[0].coeff(0, 1)], [self.f[1].coeff(1, 0), self.f[1].coeff(0, 1)]]
    }

    /// `self ∘ inner`.
    pub fn compose(&self, inner: &Self) -> Result<Self> {
        Ok(JetMap { f: [self.f[0].compose(&inner.f[0], &inner.f[1])?, self.f[1].compose(&inner.f[0], &inner.f[1])?] })
    }

    pub fn sub(&self, o: &Self) -> Self {
        JetMap { f: [self.f[0].sub(&o.f[0]), self.f[1].sub(&o.f[1])] }
    }

    pub fn eval(&self, z: S, w: S) -> [S; 2] {
        [self.f[0].eval(z, w), self.f[1].eval(z, w)]
    }

    /// Jacobian matrix (row-major) at a point.
    pub fn jacobian(&self, z: S, w: S) -> [[S; 2]; 2] {
        let (_, a, b) = self.f[0].eval_grad(z, w);
        let (_, c, d) = self.f[1].eval_grad(z, w);
        [[a, b], [c, d]]
    }

    /// Compositional inverse by fixed-point iteration
    /// `η ← L⁻¹(id − N∘η)`, where `L` is the linear part and `N` the rest.
    pub fn inverse(&self) -> Result<Self> {
        if !self.f[0].has_zero_constant() || !self.f[1].has_zero_constant() {
            return Err(Error::Precondition("jet inverse needs a germ fixing 0".into()));
        }
        let m = self.order();
        let l = self.linear_part();
        let det = l[0][0] * l[1][1] - l[0][1] * l[1][0];
        let scale = l.iter().flatten().map(|x| x.modulus()).fold(0.0, f64::max);
        if det.modulus() <= 1e-14 * scale * scale || det.modulus() == 0.0 {
            return Err(Error::Singular { det: det.modulus() });
        }
        let linv = [[l[1][1] / det, -l[0][1] / det], [-l[1][0] / det, l[0][0] / det]];
        let lin = JetMap::linear(m, l);
        let nonlin = self.sub(&lin);
        let apply_linv = |x: &JetMap<S>| -> JetMap<S> {
            JetMap {
                f: [
                    x.f[0].scale(linv[0][0]).add(&x.f[1].scale(linv[0][1])),
                    x.f[1].scale(linv[1][1]).add(&x.f[0].scale(linv[1][0])),
                ],
            }
        };
        let id = JetMap::identity(m);
        let mut eta = JetMap::linear(m, linv);
        for _ in 1..m {
            let ne = nonlin.compose(&eta)?;
            eta = apply_linv(&id.sub(&ne));
        }
        Ok(eta)
    }

    pub fn map<T: Scalar>(&self, f: impl Fn(S) -> T + Copy) -> JetMap<T> {
        JetMap { f: [self.f[0].map(f), self.f[1].map(f)] }
    }

    pub fn to_c64(&self) -> JetMap<C64> {
        self.map(|x| x.to_c64())
    }

    pub fn max_abs_from(&self, from: usize) -> f64 {
        self.f[0].max_abs_from(from).max(self.f[1].max_abs_from(from))
    }
}

/// Univariate series truncated above degree `order`.
#[derive(Clone, Debug, PartialEq)]
pub struct Jet1<S: Scalar = C64> {
    pub c: Vec<S>,
}

impl<S: Scalar> Jet1<S> {
    pub fn zero(order: usize) -> Self {
        Jet1 { c: vec![S::zero(); order + 1] }
    }

    pub fn var(order: usize) -> Self {
        let mut j = Self::zero(order);
        if order >= 1 {
            j.c[1] = S::one();
        }
        j
    }

    pub fn from_coeffs(c: Vec<S>) -> Self {
        assert!(!c.is_empty());
        Jet1 { c }
    }

    pub fn order(&self) -> usize {
        self.c.len() - 1
    }

    pub fn coeff(&self, k: usize) -> S {
        self.c.get(k).copied().unwrap_or_else(S::zero)
    }

    pub fn add(&self, o: &Self) -> Self {
        let m = self.order().min(o.order());
        Jet1 { c: (0..=m).map(|k| self.c[k] + o.c[k]).collect() }
    }

    pub fn sub(&self, o: &Self) -> Self {
        let m = self.order().min(o.order());
        Jet1 { c: (0..=m).map(|k| self.c[k] - o.c[k]).collect() }
    }

    pub fn scale(&self, s: S) -> Self {
        Jet1 { c: self.c.iter().map(|&x| x * s).collect() }
    }

    pub fn mul(&self, o: &Self) -> Self {
        let m = self.order().min(o.order());
        let mut out = vec![S::zero(); m + 1];
        for i in 0..=m {
            if self.c[i].is_zero() {
                continue;
            }
            for j in 0..=(m - i) {
                out[i + j] = out[i + j] + self.c[i] * o.c[j];
            }
        }
        Jet1 { c: out }
    }

    /// Series quotient; the denominator must have a nonzero constant term.
    pub fn div(&self, o: &Self) -> Result<Self> {
        let m = self.order().min(o.order());
        if o.c[0].is_zero() {
            return Err(Error::Precondition("series division by a non-unit".into()));
        }
        let mut q = vec![S::zero(); m + 1];
        for k in 0..=m {
            let mut acc = self.c[k];
            for j in 1..=k {
                acc = acc - o.c[j] * q[k - j];
            }
            q[k] = acc / o.c[0];
        }
        Ok(Jet1 { c: q })
    }

    /// `self ∘ inner` for `inner` without constant term.
    pub fn compose(&self, inner: &Self) -> Result<Self> {
        if !inner.c[0].is_zero() {
            return Err(Error::Precondition("inner series must vanish at 0".into()));
        }
        let m = self.order().min(inner.order());
        let mut acc = Jet1::zero(m);
        acc.c[0] = self.c[m];
        for k in (0..m).rev() {
            acc = acc.mul(inner);
            acc.c[0] = acc.c[0] + self.c[k];
        }
        Ok(acc)
    }

    /// Compositional inverse of a series `a₁x + …` with `a₁ ≠ 0`.
    pub fn inverse(&self) -> Result<Self> {
        let m = self.order();
        if !self.c[0].is_zero() || self.coeff(1).is_zero() {
            return Err(Error::Singular { det: self.coeff(1).modulus() });
        }
        let a1 = self.c[1];
        let mut nonlin = self.clone();
        nonlin.c[0] = S::zero();
        nonlin.c[1] = S::zero();
        let id = Jet1::var(m);
        let mut eta = id.scale(S::one() / a1);
        for _ in 1..m {
            let ne = nonlin.compose(&eta)?;
            eta = id.sub(&ne).scale(S::one() / a1);
        }
        Ok(eta)
    }

    /// `self ∘ inner` for a bivariate `inner` without constant term.
    pub fn compose2(&self, inner: &Jet2<S>) -> Result<Jet2<S>> {
        if !inner.has_zero_constant() {
            return Err(Error::Precondition("inner series must vanish at 0".into()));
        }
        let m = inner.order();
        let mut acc = Jet2::constant(m, self.coeff(self.order()));
        for k in (0..self.order()).rev() {
            acc = acc.mul(inner);
            acc.c[0] = acc.c[0] + self.c[k];
        }
        Ok(acc)
    }

    pub fn eval(&self, x: S) -> S {
        self.c.iter().rev().fold(S::zero(), |acc, &a| acc * x + a)
    }

    pub fn eval_deriv(&self, x: S) -> (S, S) {
        let mut p = S::zero();
        let mut dp = S::zero();
        for &a in self.c.iter().rev() {
            dp = dp * x + p;
            p = p * x + a;
        }
        (p, dp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::scalar::Cdd;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_jet(rng: &mut ChaCha8Rng, m: usize, linear: Option<[C64; 2]>) -> Jet2 {
        let mut j = Jet2::zero(m);
        for i in 0..=m {
            for k in 0..=(m - i) {
                if i + k == 0 {
                    continue;
                }
                j.set(i, k, C64::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)));
            }
        }
        if let Some(l) = linear {
            j.set(1, 0, l[0]);
            j.set(0, 1, l[1]);
        }
        j
    }

    #[test]
    fn index_layout_is_graded() {
        assert_eq!(idx(0, 0), 0);
        assert_eq!(idx(1, 0), 1);
        assert_eq!(idx(0, 1), 2);
        assert_eq!(idx(2, 0), 3);
        assert_eq!(idx(0, 2), 5);
    }

    #[test]
    fn product_matches_direct_expansion() {
        let m = 5;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = rand_jet(&mut rng, m, None);
        let b = rand_jet(&mut rng, m, None);
        let p = a.mul(&b);
        for i in 0..=m {
            for j in 0..=(m - i) {
                let mut s = C64::new(0.0, 0.0);
                for i1 in 0..=i {
                    for j1 in 0..=j {
                        s += a.coeff(i1, j1) * b.coeff(i - i1, j - j1);
                    }
                }
                assert!((s - p.coeff(i, j)).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn identity_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = JetMap::new(rand_jet(&mut rng, 6, None), rand_jet(&mut rng, 6, None));
        let id = JetMap::identity(6);
        let g = f.compose(&id).unwrap();
        for k in 0..2 {
            assert!(g.f[k].sub(&f.f[k]).max_abs() < 1e-15);
        }
    }

    #[test]
    fn shear_inverse() {
        let m = 6;
        let mut a = Jet2::<C64>::var(m, 0);
        a.set(0, 2, C64::new(1.0, 0.0));
        let f = JetMap::new(a, Jet2::var(m, 1));
        let inv = f.inverse().unwrap();
        assert!((inv.f[0].coeff(0, 2) + C64::new(1.0, 0.0)).norm() < 1e-15);
        assert!(inv.f[0].max_abs_from(3) < 1e-15);
    }

    #[test]
    fn singular_inverse_names_determinant() {
        let f = JetMap::<C64>::linear(
            3,
            [[C64::new(1.0, 0.0), C64::new(2.0, 0.0)], [C64::new(2.0, 0.0), C64::new(4.0, 0.0)]],
        );
        assert!(matches!(f.inverse(), Err(Error::Singular { .. })));
    }

    #[test]
    fn random_round_trip_order_8() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let one = C64::new(1.0, 0.0);
        let z = C64::new(0.0, 0.0);
        let f = JetMap::new(rand_jet(&mut rng, 8, Some([one, z + 0.3])), rand_jet(&mut rng, 8, Some([z - 0.2, one])));
        let inv = f.inverse().unwrap();
        let r = inv.compose(&f).unwrap().sub(&JetMap::identity(8));
        assert!(r.max_abs_from(0) < 1e-12, "{}", r.max_abs_from(0));
        let r2 = f.compose(&inv).unwrap().sub(&JetMap::identity(8));
        assert!(r2.max_abs_from(0) < 1e-12);
    }

    #[test]
    fn extended_precision_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let one = C64::new(1.0, 0.0);
        let f = JetMap::new(
            rand_jet(&mut rng, 6, Some([one * 2.0, one * 0.1])),
            rand_jet(&mut rng, 6, Some([one * 0.0, one * 3.0])),
        );
        let fd: JetMap<Cdd> = f.map(Cdd::from_c64);
        let inv = fd.inverse().unwrap();
        let r = inv.compose(&fd).unwrap().sub(&JetMap::identity(6));
        assert!(r.max_abs_from(0) < 1e-26);
    }

    #[test]
    fn univariate_series() {
        // log(1+x) inverse is exp(x) - 1
        let m = 10;
        let mut c = vec![C64::new(0.0, 0.0)];
        for k in 1..=m {
            let s = if k % 2 == 1 { 1.0 } else { -1.0 };
            c.push(C64::new(s / k as f64, 0.0));
        }
        let l = Jet1::from_coeffs(c);
        let e = l.inverse().unwrap();
        let mut fact = 1.0;
        for k in 1..=m {
            fact *= k as f64;
            assert!((e.coeff(k) - C64::new(1.0 / fact, 0.0)).norm() < 1e-13);
        }
    }
}
