//! Exact coefficients for polynomial and 1-form algebra.
//!
//! Elements of the cyclotomic field Q(ζ), ζ = exp(iπ/6), stored in the basis
//! 1, ζ, ζ², ζ³ with the relation ζ⁴ = ζ² − 1. The field contains the Gaussian
//! rationals (i = ζ³) and the cube roots of unity (ω = ζ² − 1).

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use super::scalar::C64;

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Exact {
    c: [BigRational; 4],
}

fn q(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

impl Exact {
    pub fn zero() -> Self {
        Exact { c: [q(0), q(0), q(0), q(0)] }
    }

    pub fn one() -> Self {
        Self::from_int(1)
    }

    pub fn from_int(n: i64) -> Self {
        Exact { c: [q(n), q(0), q(0), q(0)] }
    }

    pub fn rational(num: i64, den: i64) -> Self {
        assert!(den != 0, "zero denominator");
        Exact { c: [BigRational::new(num.into(), den.into()), q(0), q(0), q(0)] }
    }

    /// Gaussian rational `re_num/re_den + i·im_num/im_den`.
    pub fn gaussian(re_num: i64, re_den: i64, im_num: i64, im_den: i64) -> Self {
        assert!(re_den != 0 && im_den != 0, "zero denominator");
        Exact {
            c: [
                BigRational::new(re_num.into(), re_den.into()),
                q(0),
                q(0),
                BigRational::new(im_num.into(), im_den.into()),
            ],
        }
    }

    pub fn from_bigs(num: BigInt, den: BigInt) -> Self {
        Exact { c: [BigRational::new(num, den), q(0), q(0), q(0)] }
    }

    /// Element `c₀ + c₁ζ + c₂ζ² + c₃ζ³`.
    pub fn from_components(c: [BigRational; 4]) -> Self {
        Exact { c }
    }

    pub fn i() -> Self {
        Exact { c: [q(0), q(0), q(0), q(1)] }
    }

    /// Primitive cube root of unity exp(2πi/3).
    pub fn omega() -> Self {
        Exact { c: [q(-1), q(0), q(1), q(0)] }
    }

    pub fn zeta() -> Self {
        Exact { c: [q(0), q(1), q(0), q(0)] }
    }

    pub fn components(&self) -> &[BigRational; 4] {
        &self.c
    }

    pub fn is_zero(&self) -> bool {
        self.c.iter().all(|x| x.is_zero())
    }

    /// `Some((re, im))` when the element is a Gaussian rational.
    pub fn as_gaussian(&self) -> Option<(BigRational, BigRational)> {
        if self.c[1].is_zero() && self.c[2].is_zero() {
            Some((self.c[0].clone(), self.c[3].clone()))
        } else {
            None
        }
    }

    pub fn add(&self, o: &Exact) -> Exact {
        Exact { c: std::array::from_fn(|k| &self.c[k] + &o.c[k]) }
    }

    pub fn sub(&self, o: &Exact) -> Exact {
        Exact { c: std::array::from_fn(|k| &self.c[k] - &o.c[k]) }
    }

    pub fn neg(&self) -> Exact {
        Exact { c: std::array::from_fn(|k| -&self.c[k]) }
    }

    pub fn mul(&self, o: &Exact) -> Exact {
        let mut p: [BigRational; 7] = std::array::from_fn(|_| q(0));
        for i in 0..4 {
            if self.c[i].is_zero() {
                continue;
            }
            for j in 0..4 {
                if o.c[j].is_zero() {
                    continue;
                }
                p[i + j] += &self.c[i] * &o.c[j];
            }
        }
        // ζ⁴ = ζ² − 1, ζ⁵ = ζ³ − ζ, ζ⁶ = −1
        let [p0, p1, p2, p3, p4, p5, p6] = p;
        Exact { c: [p0 - &p4 - p6, p1 - &p5, p2 + p4, p3 + p5] }
    }

    /// Multiplicative inverse, `None` for zero.
    pub fn inv(&self) -> Option<Exact> {
        if self.is_zero() {
            return None;
        }
        // Solve self * x = 1 as a 4x4 rational linear system.
        let basis: Vec<Exact> = (0..4)
            .map(|k| {
                let mut e = Exact::zero();
                e.c[k] = q(1);
                self.mul(&e)
            })
            .collect();
        let mut m: Vec<Vec<BigRational>> = (0..4)
            .map(|row| {
                let mut r: Vec<BigRational> = (0..4).map(|col| basis[col].c[row].clone()).collect();
                r.push(if row == 0 { q(1) } else { q(0) });
                r
            })
            .collect();
        for col in 0..4 {
            let piv = (col..4).find(|&r| !m[r][col].is_zero())?;
            m.swap(col, piv);
            let pv = m[col][col].clone();
            for k in col..5 {
                m[col][k] = &m[col][k] / &pv;
            }
            for r in 0..4 {
                if r != col && !m[r][col].is_zero() {
                    let factor = m[r][col].clone();
                    for k in col..5 {
                        let delta = &factor * &m[col][k];
                        m[r][k] -= delta;
                    }
                }
            }
        }
        Some(Exact { c: std::array::from_fn(|k| m[k][4].clone()) })
    }

    pub fn to_c64(&self) -> C64 {
        let z = C64::new(3f64.sqrt() / 2.0, 0.5);
        let mut acc = C64::new(0.0, 0.0);
        let mut pw = C64::new(1.0, 0.0);
        for k in 0..4 {
            acc += pw * self.c[k].to_f64().unwrap_or(f64::NAN);
            pw *= z;
        }
        acc
    }

    /// Exact conversion of a complex double whose parts are dyadic rationals.
    pub fn from_c64_exact(z: C64) -> Option<Exact> {
        let re = BigRational::from_float(z.re)?;
        let im = BigRational::from_float(z.im)?;
        Some(Exact { c: [re, q(0), q(0), im] })
    }

    /// Largest absolute value among the rational components (as f64).
    pub fn magnitude(&self) -> f64 {
        self.c.iter().map(|x| x.abs().to_f64().unwrap_or(f64::INFINITY)).fold(0.0, f64::max)
    }
}

impl fmt::Debug for Exact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.as_gaussian() {
            Some((re, im)) if im.is_zero() => write!(f, "{re}"),
            Some((re, im)) => write!(f, "({re} + {im}i)"),
            None => write!(f, "({} + {}ζ + {}ζ² + {}ζ³)", self.c[0], self.c[1], self.c[2], self.c[3]),
        }
    }
}

impl fmt::Display for Exact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// `BigRational` → `(numerator, denominator)` when both fit in i64.
pub fn rational_parts(x: &BigRational) -> Option<(i64, i64)> {
    Some((x.numer().to_i64()?, x.denom().to_i64()?))
}

pub fn is_one(x: &BigRational) -> bool {
    x.is_one()
}
