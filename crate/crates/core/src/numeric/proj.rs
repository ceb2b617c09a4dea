//! Points of projective space and Fubini-Study geometry.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::scalar::C64;
use crate::error::{Error, Result};

/// A point of ℙ^(N−1) stored in normalized homogeneous coordinates: the
/// largest-modulus coordinate (lowest index on ties) is exactly 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProjPoint<const N: usize> {
    c: [C64; N],
}

pub type P1 = ProjPoint<2>;
pub type P2 = ProjPoint<3>;

fn is_normalized<const N: usize>(c: &[C64; N]) -> bool {
    let one = C64::new(1.0, 0.0);
    c.iter().any(|&x| x == one) && c.iter().all(|x| x.norm() <= 1.0 + 4.0 * f64::EPSILON)
}

impl<const N: usize> ProjPoint<N> {
    pub fn new(c: [C64; N]) -> Result<Self> {
        if c.iter().any(|x| !x.re.is_finite() || !x.im.is_finite()) {
            return Err(Error::InvalidInput("non-finite homogeneous coordinate".into()));
        }
        if is_normalized(&c) {
            return Ok(ProjPoint { c });
        }
        let mut k = 0;
        let mut best = -1.0;
        for (i, x) in c.iter().enumerate() {
            let m = x.norm();
            if m > best {
                best = m;
                k = i;
            }
        }
        if best == 0.0 {
            return Err(Error::InvalidInput("all homogeneous coordinates vanish".into()));
        }
        let p = c[k];
        let mut out = [C64::new(0.0, 0.0); N];
        for i in 0..N {
            out[i] = if i == k { C64::new(1.0, 0.0) } else { c[i] / p };
        }
        Ok(ProjPoint { c: out })
    }

    pub fn coords(&self) -> &[C64; N] {
        &self.c
    }

    /// Re-run normalization (idempotent).
    pub fn normalized(&self) -> Self {
        Self::new(self.c).expect("valid point")
    }

    /// Index of the coordinate equal to 1.
    pub fn max_index(&self) -> usize {
        let one = C64::new(1.0, 0.0);
        self.c.iter().position(|&x| x == one).unwrap_or(0)
    }

    /// Unit-norm representative.
    pub fn unit_lift(&self) -> [C64; N] {
        let n = norm(&self.c);
        self.c.map(|x| x / n)
    }

    /// Chordal Fubini-Study distance `sin∠(p, q) ∈ [0, 1]`.
    pub fn fs_distance(&self, o: &Self) -> f64 {
        fs_distance_raw(&self.c, &o.c)
    }

    pub fn approx_eq(&self, o: &Self, tol: f64) -> bool {
        self.fs_distance(o) < tol
    }

    /// FS-uniform random point.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        loop {
            let v: [C64; N] = std::array::from_fn(|_| gaussian_c(rng));
            if let Ok(p) = Self::new(v) {
                return p;
            }
        }
    }
}

/// Chordal FS distance between two nonzero vectors.
pub fn fs_distance_raw<const N: usize>(p: &[C64; N], q: &[C64; N]) -> f64 {
    let np = norm(p);
    let nq = norm(q);
    let mut s = 0.0;
    for i in 0..N {
        for j in i + 1..N {
            s += (p[i] * q[j] - p[j] * q[i]).norm_sqr();
        }
    }
    (s.sqrt() / (np * nq)).min(1.0)
}

pub fn norm(v: &[C64]) -> f64 {
    let m = v.iter().map(|x| x.norm()).fold(0.0, f64::max);
    if m == 0.0 {
        return 0.0;
    }
    m * v.iter().map(|x| (x / m).norm_sqr()).sum::<f64>().sqrt()
}

pub fn gaussian_c<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let a: f64 = rng.sample(StandardNormal);
    let b: f64 = rng.sample(StandardNormal);
    C64::new(a, b) * std::f64::consts::FRAC_1_SQRT_2
}

impl P1 {
    /// `[x : 1]`.
    pub fn from_affine(x: C64) -> Self {
        Self::new([x, C64::new(1.0, 0.0)]).expect("finite affine point")
    }

    pub fn infinity() -> Self {
        Self::new([C64::new(1.0, 0.0), C64::new(0.0, 0.0)]).unwrap()
    }

    /// Affine coordinate `z/w`, `None` at ∞.
    pub fn affine(&self) -> Option<C64> {
        if self.c[1].norm() == 0.0 {
            None
        } else {
            Some(self.c[0] / self.c[1])
        }
    }
}

impl P2 {
    /// `[z : w : 1]`.
    pub fn from_affine(z: C64, w: C64) -> Self {
        Self::new([z, w, C64::new(1.0, 0.0)]).expect("finite affine point")
    }

    /// Coordinates in the chart `x_k = 1`, or `None` where it is undefined.
    pub fn chart(&self, k: usize) -> Option<[C64; 2]> {
        chart_coords(&self.c, k)
    }

    /// The pencil projection `[z:w:t] ↦ [z:w]`.
    pub fn pencil_base(&self) -> Result<P1> {
        P1::new([self.c[0], self.c[1]])
    }
}

/// The other two indices of chart `k`, in increasing order.
pub fn chart_others(k: usize) -> [usize; 2] {
    match k {
        0 => [1, 2],
        1 => [0, 2],
        _ => [0, 1],
    }
}

pub fn chart_coords(c: &[C64; 3], k: usize) -> Option<[C64; 2]> {
    if c[k].norm() == 0.0 {
        return None;
    }
    let [a, b] = chart_others(k);
    Some([c[a] / c[k], c[b] / c[k]])
}

/// Homogeneous vector of a chart point.
pub fn from_chart(x: [C64; 2], k: usize) -> [C64; 3] {
    let mut v = [C64::new(0.0, 0.0); 3];
    v[k] = C64::new(1.0, 0.0);
    let [a, b] = chart_others(k);
    v[a] = x[0];
    v[b] = x[1];
    v
}

/// A projective line `{ℓ · x = 0}` in ℙ².
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub dual: [C64; 3],
}

impl Line {
    pub fn new(dual: [C64; 3]) -> Result<Self> {
        if norm(&dual) == 0.0 {
            return Err(Error::InvalidInput("zero linear form".into()));
        }
        let n = norm(&dual);
        Ok(Line { dual: dual.map(|x| x / n) })
    }

    /// The line through two distinct points.
    pub fn through(p: &P2, q: &P2) -> Result<Self> {
        let a = p.coords();
        let b = q.coords();
        Self::new([a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]])
    }

    /// Unitarily invariant random line.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        loop {
            let v: [C64; 3] = std::array::from_fn(|_| gaussian_c(rng));
            if let Ok(l) = Self::new(v) {
                return l;
            }
        }
    }

    pub fn eval(&self, x: &[C64; 3]) -> C64 {
        self.dual[0] * x[0] + self.dual[1] * x[1] + self.dual[2] * x[2]
    }

    /// Orthonormal basis `(e0, e1)` of the kernel of the form.
    pub fn kernel_basis(&self) -> [[C64; 3]; 2] {
        let l = self.dual.map(|x| x.conj());
        // start from the coordinate axis least aligned with l
        let k = (0..3).min_by(|&i, &j| l[i].norm().total_cmp(&l[j].norm())).unwrap();
        let mut e = [C64::new(0.0, 0.0); 3];
        e[k] = C64::new(1.0, 0.0);
        let e0 = unit(&orth(&e, &l));
        let e1 = unit(&cross_conj(&l, &e0));
        [e0, e1]
    }
}

fn dot(a: &[C64; 3], b: &[C64; 3]) -> C64 {
    a[0].conj() * b[0] + a[1].conj() * b[1] + a[2].conj() * b[2]
}

fn orth(v: &[C64; 3], u: &[C64; 3]) -> [C64; 3] {
    let nu = dot(u, u);
    let c = dot(u, v) / nu;
    [v[0] - c * u[0], v[1] - c * u[1], v[2] - c * u[2]]
}

fn unit(v: &[C64; 3]) -> [C64; 3] {
    let n = norm(v);
    v.map(|x| x / n)
}

/// Conjugated cross product: orthogonal (Hermitian) to both inputs.
pub fn cross_conj(a: &[C64; 3], b: &[C64; 3]) -> [C64; 3] {
    [(a[1] * b[2] - a[2] * b[1]).conj(), (a[2] * b[0] - a[0] * b[2]).conj(), (a[0] * b[1] - a[1] * b[0]).conj()]
}

impl<const N: usize> Serialize for ProjPoint<N> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let v: Vec<[f64; 2]> = self.c.iter().map(|z| [z.re, z.im]).collect();
        v.serialize(s)
    }
}

impl<'de, const N: usize> Deserialize<'de> for ProjPoint<N> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v: Vec<[f64; 2]> = Vec::deserialize(d)?;
        if v.len() != N {
            return Err(serde::de::Error::custom(format!("expected {N} coordinates, found {}", v.len())));
        }
        let c: [C64; N] = std::array::from_fn(|i| C64::new(v[i][0], v[i][1]));
        ProjPoint::new(c).map_err(serde::de::Error::custom)
    }
}
