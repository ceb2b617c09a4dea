//! Exact preimages of skew products and inverse-iteration sampling.

use rand::Rng;
use rayon::prelude::*;

use super::cloud::{Cloud1, Cloud2, PointCloudMeasure, Provenance};
use crate::dynamics::ratmap::unit2;
use crate::dynamics::{EndoP2, RatMap1};
use crate::error::{Error, Result};
use crate::numeric::proj::norm;
use crate::numeric::univariate::poly_roots;
use crate::numeric::{ProjPoint, C64, P1, P2};
use crate::rng;

/// Unit lifts closer than this to the pencil center are refused.
pub const CENTER_EXCLUSION: f64 = 1e-12;
/// Start points closer than this (FS) to documented exceptional data are refused.
pub const EXCEPTIONAL_EXCLUSION: f64 = 1e-9;
pub const DEFAULT_BURN_IN: usize = 50;

fn root_tol() -> f64 {
    1e-13
}

fn require_base(f: &EndoP2) -> Result<&RatMap1> {
    f.base().ok_or(Error::NotSkew("exact preimages need a skew product"))
}

/// Base preimages `[u:v]` (unit lifts) of `π(x)`, with the unit lift of `x`.
fn base_stage(f: &EndoP2, x: &P2) -> Result<([C64; 3], Vec<[C64; 2]>)> {
    let base = require_base(f)?;
    let u = x.unit_lift();
    if u[0].norm().max(u[1].norm()) < CENTER_EXCLUSION {
        return Err(Error::Precondition("point at the pencil center has no fibration chart".into()));
    }
    let bx = P1::new([u[0], u[1]])?;
    let ys = base.preimages(&bx)?;
    Ok((u, ys.iter().map(|y| unit2(y.coords())).collect()))
}

/// Fiber preimages over the base lift `(a, b)`: roots `s` of
/// `R(a, b, s) = κ·x₂` where `(P, Q)(a, b) = κ·(x₀, x₁)`.
fn fiber_stage(f: &EndoP2, x: &[C64; 3], ab: &[C64; 2]) -> Result<Vec<[C64; 3]>> {
    let [p, q, r] = f.components();
    let pt = [ab[0], ab[1], C64::new(0.0, 0.0)];
    let kappa = if x[0].norm() >= x[1].norm() { p.eval(&pt) / x[0] } else { q.eval(&pt) / x[1] };
    let mut coeffs = r.collect_in(2, &pt);
    coeffs[0] -= kappa * x[2];
    let roots = poly_roots(&coeffs, root_tol())?;
    let mut out = Vec::with_capacity(f.degree() as usize);
    for rt in roots {
        for _ in 0..rt.multiplicity {
            out.push([ab[0], ab[1], rt.z]);
        }
    }
    if out.len() != f.degree() as usize {
        return Err(Error::RootSolver { iterations: 0, residual: f64::NAN });
    }
    Ok(out)
}

fn finish(f: &EndoP2, x: &P2, v: [C64; 3]) -> Result<P2> {
    let y = P2::new(v)?;
    let res = f.eval(&y)?.fs_distance(x);
    if res > 1e-12 {
        let (z, r) = f.polish_preimage(&y, x, 6)?;
        if r < res {
            return Ok(z);
        }
    }
    Ok(y)
}

/// Preimages of `x` over one base preimage `ab` of `π(x)`.
pub fn fiber_preimages(f: &EndoP2, x: &P2, ab: &[C64; 2]) -> Result<Vec<P2>> {
    let u = x.unit_lift();
    fiber_stage(f, &u, ab)?.into_iter().map(|v| finish(f, x, v)).collect()
}

/// All `d²` preimages of `x` under a skew product, with multiplicity.
pub fn preimages_exact(f: &EndoP2, x: &P2) -> Result<Vec<P2>> {
    let (u, bases) = base_stage(f, x)?;
    let mut out = Vec::with_capacity(bases.len() * f.degree() as usize);
    for ab in &bases {
        for v in fiber_stage(f, &u, ab)? {
            out.push(finish(f, x, v)?);
        }
    }
    Ok(out)
}

/// One preimage chosen uniformly among the `d²` (base root uniform, then
/// fiber root uniform).
pub fn random_preimage<R: Rng + ?Sized>(f: &EndoP2, x: &P2, rng: &mut R) -> Result<P2> {
    let (u, bases) = base_stage(f, x)?;
    let ab = bases[rng.random_range(0..bases.len())];
    let fib = fiber_stage(f, &u, &ab)?;
    let v = fib[rng.random_range(0..fib.len())];
    finish(f, x, v)
}

pub fn random_preimage_1d<R: Rng + ?Sized>(theta: &RatMap1, x: &P1, rng: &mut R) -> Result<P1> {
    let ys = theta.preimages(x)?;
    Ok(ys[rng.random_range(0..ys.len())])
}

fn to_pairs<const N: usize>(p: &ProjPoint<N>) -> Vec<[f64; 2]> {
    p.coords().iter().map(|c| [c.re, c.im]).collect()
}

/// Exceptional points of a map of ℙ¹ are detected as points whose full
/// preimage set collapses onto an orbit of length ≤ 2.
fn exceptional_1d(theta: &RatMap1, x: &P1) -> Result<bool> {
    let tol = EXCEPTIONAL_EXCLUSION;
    let img = theta.eval(x)?;
    let pre = theta.preimages(x)?;
    if pre.iter().all(|y| y.fs_distance(x) < tol) {
        return Ok(true);
    }
    if pre.iter().all(|y| y.fs_distance(&img) < 1e-6) {
        // x ↔ θ(x) exchanged with full multiplicity
        let back = theta.preimages(&img)?;
        return Ok(back.iter().all(|y| y.fs_distance(x) < 1e-6));
    }
    Ok(false)
}

fn check_start_p2(f: &EndoP2, x0: &P2) -> Result<()> {
    if let Some(e) = f.exceptional() {
        let d = e.distance(x0);
        if d < EXCEPTIONAL_EXCLUSION {
            return Err(Error::Exceptional(format!(
                "start point lies in the documented exceptional set of '{}' (FS distance {d:.2e}); \
                 its backward orbits do not equidistribute",
                f.name
            )));
        }
    }
    Ok(())
}

/// Random backward orbit of a skew product: `burn_in` steps discarded, then
/// `n` points retained with equal weights.
pub fn sample_equilibrium(f: &EndoP2, x0: &P2, burn_in: usize, n: usize, seed: u64) -> Result<Cloud2> {
    check_start_p2(f, x0)?;
    require_base(f)?;
    let mut r = rng::seeded(seed);
    let mut x = *x0;
    let mut pts = Vec::with_capacity(n);
    for k in 0..burn_in + n {
        x = random_preimage(f, &x, &mut r).map_err(|e| step_error(e, k))?;
        if k >= burn_in {
            pts.push(x);
        }
    }
    let prov = Provenance {
        map: f.name.clone(),
        kind: "inverse_iteration".into(),
        start: to_pairs(x0),
        burn_in,
        depth: burn_in + n,
        chains: 1,
    };
    PointCloudMeasure::uniform(pts, seed, prov)
}

fn step_error(e: Error, k: usize) -> Error {
    match e {
        Error::Precondition(m) => Error::Precondition(format!("step {k}: {m}")),
        other => other,
    }
}

/// Random backward orbit of a map of ℙ¹.
pub fn sample_equilibrium_1d(theta: &RatMap1, x0: &P1, burn_in: usize, n: usize, seed: u64) -> Result<Cloud1> {
    if exceptional_1d(theta, x0)? {
        return Err(Error::Exceptional(format!(
            "start point is exceptional for '{}': its preimage set is a single orbit",
            theta.name
        )));
    }
    let mut r = rng::seeded(seed);
    let mut x = *x0;
    let mut pts = Vec::with_capacity(n);
    for k in 0..burn_in + n {
        x = random_preimage_1d(theta, &x, &mut r)?;
        if k >= burn_in {
            pts.push(x);
        }
    }
    let prov = Provenance {
        map: theta.name.clone(),
        kind: "inverse_iteration".into(),
        start: to_pairs(x0),
        burn_in,
        depth: burn_in + n,
        chains: 1,
    };
    PointCloudMeasure::uniform(pts, seed, prov)
}

/// Independent chains on substreams `substream(seed, i)`, concatenated in
/// chain order.
pub fn sample_chains(f: &EndoP2, x0: &P2, burn_in: usize, n_per: usize, chains: usize, seed: u64) -> Result<Cloud2> {
    let parts: Vec<Cloud2> = (0..chains)
        .into_par_iter()
        .map(|i| sample_equilibrium(f, x0, burn_in, n_per, rng::substream_seed(seed, i as u64)))
        .collect::<Result<_>>()?;
    let mut prov = parts[0].provenance.clone();
    prov.chains = chains;
    PointCloudMeasure::concat(parts, seed, prov)
}

pub fn sample_chains_1d(
    theta: &RatMap1,
    x0: &P1,
    burn_in: usize,
    n_per: usize,
    chains: usize,
    seed: u64,
) -> Result<Cloud1> {
    let parts: Vec<Cloud1> = (0..chains)
        .into_par_iter()
        .map(|i| sample_equilibrium_1d(theta, x0, burn_in, n_per, rng::substream_seed(seed, i as u64)))
        .collect::<Result<_>>()?;
    let mut prov = parts[0].provenance.clone();
    prov.chains = chains;
    PointCloudMeasure::concat(parts, seed, prov)
}

/// Image of a cloud under `π`. Points within [`CENTER_EXCLUSION`] of the
/// center are dropped; returns the cloud and the excluded mass.
pub fn pushforward_pi(cloud: &Cloud2) -> Result<(Cloud1, f64)> {
    let mut pts = Vec::with_capacity(cloud.len());
    let mut ws = Vec::with_capacity(cloud.len());
    let mut excluded = 0.0;
    for (p, w) in cloud.iter() {
        let u = p.unit_lift();
        if norm(&[u[0], u[1]]) < CENTER_EXCLUSION {
            excluded += w;
            continue;
        }
        pts.push(P1::new([u[0], u[1]])?);
        ws.push(w);
    }
    if pts.is_empty() {
        return Err(Error::Precondition("every cloud point lies at the pencil center".into()));
    }
    let mut prov = cloud.provenance.clone();
    prov.kind = format!("{} pushed forward by pi", prov.kind);
    Ok((PointCloudMeasure::weighted(pts, ws, cloud.seed, prov)?, excluded))
}

/// Image of a cloud under the map itself (used by balance checks).
pub fn pushforward_map(f: &EndoP2, cloud: &Cloud2) -> Result<Cloud2> {
    let pts = cloud.points().iter().map(|p| f.eval(p)).collect::<Result<Vec<_>>>()?;
    PointCloudMeasure::weighted(pts, cloud.weights().to_vec(), cloud.seed, cloud.provenance.clone())
}
