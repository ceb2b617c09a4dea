//! Lyapunov exponents of equilibrium measures.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::sampler::{random_preimage, random_preimage_1d, DEFAULT_BURN_IN};
use super::stats::batch_mean_unweighted;
use crate::dynamics::endo::hdot;
use crate::dynamics::{perp_basis, EndoP2, RatMap1};
use crate::error::{Error, Result};
use crate::numeric::proj::norm;
use crate::numeric::{C64, P1, P2};
use crate::rng;

pub const MIN_STEPS: usize = 1000;
const Z95: f64 = 1.96;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovReport {
    /// `[λ₁, λ₂]` with `λ₁ ≥ λ₂` on ℙ², `[λ]` on ℙ¹.
    pub exponents: Vec<f64>,
    /// 95% half-widths from batch means, matching `exponents`.
    pub half_width: Vec<f64>,
    pub n_steps: usize,
    pub burn_in: usize,
    pub start: Vec<[f64; 2]>,
    /// `backward_orbit` (skew products and ℙ¹ maps) or `forward_orbit`.
    pub method: String,
    pub seed: u64,
}

impl LyapunovReport {
    pub fn min_exponent(&self) -> f64 {
        self.exponents.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

fn pairs<const N: usize>(p: &crate::numeric::ProjPoint<N>) -> Vec<[f64; 2]> {
    p.coords().iter().map(|c| [c.re, c.im]).collect()
}

fn hw(v: &[f64]) -> f64 {
    let (_, se) = batch_mean_unweighted(v);
    (Z95 * se).max(f64::MIN_POSITIVE)
}

/// Exponent of a map of ℙ¹ along a random backward orbit: the average of
/// `log ‖d_yθ‖_FS` over the visited preimages `y`.
pub fn lyapunov_1d(theta: &RatMap1, start: &P1, n_steps: usize, seed: u64) -> Result<LyapunovReport> {
    if n_steps < MIN_STEPS {
        return Err(Error::Precondition(format!("n_steps must be at least {MIN_STEPS}")));
    }
    let mut r = rng::seeded(seed);
    let mut x = *start;
    for _ in 0..DEFAULT_BURN_IN {
        x = random_preimage_1d(theta, &x, &mut r)?;
    }
    let mut logs = Vec::with_capacity(n_steps);
    for _ in 0..n_steps {
        x = random_preimage_1d(theta, &x, &mut r)?;
        logs.push(theta.fs_derivative(&x).ln());
    }
    let lam = logs.iter().sum::<f64>() / n_steps as f64;
    Ok(LyapunovReport {
        exponents: vec![lam],
        half_width: vec![hw(&logs)],
        n_steps,
        burn_in: DEFAULT_BURN_IN,
        start: pairs(start),
        method: "backward_orbit".into(),
        seed,
    })
}

/// Exponents of μ for an endomorphism of ℙ².
///
/// Skew products are handled along a random backward orbit, which is
/// μ-stationary: the inverse cocycle `(d_y f)⁻¹` is applied to an
/// orthonormal 2-frame kept in ℂ³ (tangent vectors at `[x]` as vectors
/// orthogonal to a unit lift), re-orthonormalized every step. Its exponents
/// are `−λ₂ ≥ −λ₁`. Other maps use the forward orbit of `start`.
pub fn lyapunov(f: &EndoP2, start: &P2, n_steps: usize, seed: u64) -> Result<LyapunovReport> {
    if n_steps < MIN_STEPS {
        return Err(Error::Precondition(format!("n_steps must be at least {MIN_STEPS}")));
    }
    if f.is_skew() {
        backward(f, start, n_steps, seed)
    } else {
        forward(f, start, n_steps, seed)
    }
}

fn gram_schmidt(u: &mut [[C64; 3]; 2]) -> Result<[f64; 2]> {
    let r1 = norm(&u[0]);
    if !(r1 > 0.0) || !r1.is_finite() {
        return Err(Error::Singular { det: 0.0 });
    }
    u[0] = u[0].map(|x| x / r1);
    let p = hdot(&u[0], &u[1]);
    for i in 0..3 {
        u[1][i] -= p * u[0][i];
    }
    let r2 = norm(&u[1]);
    if !(r2 > 0.0) || !r2.is_finite() {
        return Err(Error::Singular { det: 0.0 });
    }
    u[1] = u[1].map(|x| x / r2);
    Ok([r1.ln(), r2.ln()])
}

fn backward(f: &EndoP2, start: &P2, n_steps: usize, seed: u64) -> Result<LyapunovReport> {
    let mut r = rng::seeded(seed);
    let mut x = *start;
    for _ in 0..DEFAULT_BURN_IN {
        x = random_preimage(f, &x, &mut r)?;
    }
    let mut frame = perp_basis(&x.unit_lift());
    let mut l1 = Vec::with_capacity(n_steps);
    let mut l2 = Vec::with_capacity(n_steps);
    for k in 0..n_steps {
        let y = random_preimage(f, &x, &mut r)?;
        let yh = y.unit_lift();
        let (m, q) = f.tangent_map(&yh);
        let bin = perp_basis(&yh);
        let bout = perp_basis(&q);
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        if det.norm() < 1e-300 {
            return Err(Error::Precondition(format!("step {k}: backward orbit met the critical set")));
        }
        let mut u = [[C64::new(0.0, 0.0); 3]; 2];
        for (s, v) in frame.iter().enumerate() {
            let c = [hdot(&bout[0], v), hdot(&bout[1], v)];
            let d = [(m[1][1] * c[0] - m[0][1] * c[1]) / det, (m[0][0] * c[1] - m[1][0] * c[0]) / det];
            for i in 0..3 {
                u[s][i] = bin[0][i] * d[0] + bin[1][i] * d[1];
            }
        }
        let g = gram_schmidt(&mut u).map_err(|_| Error::Precondition(format!("step {k}: frame collapsed")))?;
        l1.push(g[0]);
        l2.push(g[1]);
        frame = u;
        x = y;
    }
    let n = n_steps as f64;
    let nu1 = l1.iter().sum::<f64>() / n;
    let nu2 = l2.iter().sum::<f64>() / n;
    Ok(LyapunovReport {
        exponents: vec![-nu2, -nu1],
        half_width: vec![hw(&l2), hw(&l1)],
        n_steps,
        burn_in: DEFAULT_BURN_IN,
        start: pairs(start),
        method: "backward_orbit".into(),
        seed,
    })
}

/// Forward-orbit exponents from `start` (any map).
pub fn lyapunov_forward(f: &EndoP2, start: &P2, n_steps: usize, seed: u64) -> Result<LyapunovReport> {
    if n_steps < MIN_STEPS {
        return Err(Error::Precondition(format!("n_steps must be at least {MIN_STEPS}")));
    }
    forward(f, start, n_steps, seed)
}

fn forward(f: &EndoP2, start: &P2, n_steps: usize, seed: u64) -> Result<LyapunovReport> {
    let mut r = rng::seeded(seed);
    // random initial frame, so a start on an invariant subspace is not privileged
    let a: f64 = r.random();
    let mut fr = [[C64::new(a.cos(), 0.0), C64::new(a.sin(), 0.0)], [C64::new(-a.sin(), 0.0), C64::new(a.cos(), 0.0)]];
    let mut u = start.unit_lift();
    let mut l1 = Vec::with_capacity(n_steps);
    let mut l2 = Vec::with_capacity(n_steps);
    for k in 0..n_steps {
        let (m, q) = f.tangent_map(&u);
        let mut v = [[C64::new(0.0, 0.0); 2]; 2];
        for s in 0..2 {
            v[s] = [m[0][0] * fr[s][0] + m[0][1] * fr[s][1], m[1][0] * fr[s][0] + m[1][1] * fr[s][1]];
        }
        let r1 = norm(&v[0]);
        if !(r1 > 0.0) || !r1.is_finite() {
            return Err(Error::Precondition(format!("step {k}: forward orbit met the critical set")));
        }
        v[0] = [v[0][0] / r1, v[0][1] / r1];
        let p = v[0][0].conj() * v[1][0] + v[0][1].conj() * v[1][1];
        v[1] = [v[1][0] - p * v[0][0], v[1][1] - p * v[0][1]];
        let r2 = norm(&v[1]);
        if !(r2 > 0.0) || !r2.is_finite() {
            return Err(Error::Precondition(format!("step {k}: frame collapsed")));
        }
        v[1] = [v[1][0] / r2, v[1][1] / r2];
        l1.push(r1.ln());
        l2.push(r2.ln());
        fr = v;
        u = q;
    }
    let n = n_steps as f64;
    Ok(LyapunovReport {
        exponents: vec![l1.iter().sum::<f64>() / n, l2.iter().sum::<f64>() / n],
        half_width: vec![hw(&l1), hw(&l2)],
        n_steps,
        burn_in: 0,
        start: pairs(start),
        method: "forward_orbit".into(),
        seed,
    })
}
