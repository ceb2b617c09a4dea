//! Product-structure diagnostics in linearizing coordinates.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::cloud::{Cloud1, Cloud2, PointCloudMeasure, Provenance};
use super::compare::{compare_planar, ComparisonReport};
use crate::dynamics::EndoP2;
use crate::error::{Error, Result};
use crate::green::slice_current;
use crate::numeric::{Jet1, Line, C64, P1, P2};
use crate::rng;

pub const MIN_DISC_POINTS: usize = 200;
pub const PASS_Z: f64 = 4.0;

/// A local linearizing coordinate `c = W(x − a0)` on the disc
/// `|x − a0| < radius` of the affine chart `x = z/w`.
#[derive(Clone, Debug)]
pub struct LocalCoordinate {
    pub a0: C64,
    pub w: Jet1,
    pub w_inv: Jet1,
    pub radius: f64,
    /// Radius of a disc `|c| < rho` contained in `W(disc)`.
    pub rho: f64,
}

impl LocalCoordinate {
    pub fn new(a0: C64, w: Jet1, radius: f64) -> Result<Self> {
        let w_inv = w.inverse()?;
        let m = 256;
        let min_b = (0..m)
            .map(|k| {
                let t = 2.0 * std::f64::consts::PI * k as f64 / m as f64;
                w.eval(C64::from_polar(radius, t)).norm()
            })
            .fold(f64::INFINITY, f64::min);
        Ok(LocalCoordinate { a0, w, w_inv, radius, rho: 0.9 * min_b })
    }

    /// `c` for an affine point inside the disc with `|c| < rho`.
    pub fn coordinate(&self, x: C64) -> Option<C64> {
        if (x - self.a0).norm() >= self.radius {
            return None;
        }
        let c = self.w.eval(x - self.a0);
        (c.norm() < self.rho).then_some(c)
    }

    pub fn point(&self, c: C64) -> C64 {
        self.a0 + self.w_inv.eval(c)
    }
}

/// Planar densities for synthetic controls on `|c| < rho`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DiscDensity {
    Flat,
    /// Proportional to `|c|`.
    Radial,
}

pub fn disc_samples<R: Rng + ?Sized>(rho: f64, n: usize, density: DiscDensity, r: &mut R) -> Vec<C64> {
    (0..n)
        .map(|_| {
            let u: f64 = r.random();
            let t: f64 = r.random::<f64>() * 2.0 * std::f64::consts::PI;
            let rad = match density {
                DiscDensity::Flat => u.sqrt(),
                DiscDensity::Radial => u.cbrt(),
            };
            C64::from_polar(rho * rad, t)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductReport {
    pub n_local: usize,
    pub n_reference: usize,
    pub rho: f64,
    pub inconclusive: bool,
    pub passed: bool,
    pub comparison: Option<ComparisonReport>,
    pub reference_seed: u64,
}

fn finish(local: (&[C64], &[f64]), reference: (&[C64], &[f64]), rho: f64, seed: u64) -> ProductReport {
    let n_local = local.0.len();
    if n_local < MIN_DISC_POINTS {
        return ProductReport {
            n_local,
            n_reference: reference.0.len(),
            rho,
            inconclusive: true,
            passed: false,
            comparison: None,
            reference_seed: seed,
        };
    }
    let rep = compare_planar(local, reference, rho);
    ProductReport {
        n_local,
        n_reference: reference.0.len(),
        rho,
        inconclusive: false,
        passed: rep.passes(PASS_Z),
        comparison: Some(rep),
        reference_seed: seed,
    }
}

/// Push the part of a ℙ¹ cloud inside the linearization disc through `W`
/// and compare with the flat measure on `|c| < rho`.
pub fn product_structure_1d(cloud: &Cloud1, lc: &LocalCoordinate, seed: u64) -> ProductReport {
    let mut cs = Vec::new();
    let mut ws = Vec::new();
    for (p, w) in cloud.iter() {
        if let Some(c) = p.affine().and_then(|x| lc.coordinate(x)) {
            cs.push(c);
            ws.push(w);
        }
    }
    let n_ref = cs.len().max(10_000);
    let reference = disc_samples(lc.rho, n_ref, DiscDensity::Flat, &mut rng::seeded(seed));
    finish((&cs, &ws), (&reference, &vec![1.0; n_ref]), lc.rho, seed)
}

/// A ℙ¹ cloud whose `W`-image has the given density on `|c| < rho`.
pub fn synthetic_cloud_1d(lc: &LocalCoordinate, n: usize, density: DiscDensity, seed: u64) -> Result<Cloud1> {
    let pts = disc_samples(lc.rho, n, density, &mut rng::seeded(seed))
        .into_iter()
        .map(|c| P1::from_affine(lc.point(c)))
        .collect();
    let prov = Provenance { kind: format!("synthetic_{density:?}").to_lowercase(), ..Default::default() };
    PointCloudMeasure::uniform(pts, seed, prov)
}

/// Slice-mass profile in the ball `B(center, radius)` of pencil lines.
#[derive(Clone, Debug)]
pub struct SliceProfile<'a> {
    pub f: &'a EndoP2,
    pub center: P2,
    pub radius: f64,
    pub depth: usize,
    pub reference_line: Line,
}

impl SliceProfile<'_> {
    fn pencil_line(x: C64) -> Result<Line> {
        Line::new([C64::new(1.0, 0.0), -x, C64::new(0.0, 0.0)])
    }

    /// Slice points of the pencil line over `x` and the mass of `T` on it
    /// inside the ball.
    pub fn slice(&self, x: C64) -> Result<(Vec<P2>, f64)> {
        let s = slice_current(self.f, &Self::pencil_line(x)?, &self.reference_line, self.depth)?;
        let mass = s
            .points
            .iter()
            .zip(&s.weights)
            .filter(|(p, _)| p.fs_distance(&self.center) < self.radius)
            .map(|(_, w)| w)
            .sum();
        Ok((s.points, mass))
    }
}

/// Compare the `W∘π`-image of `μ` restricted to the ball against flat
/// measure in `c` weighted by the slice mass of `T` on `{W∘π = c}`.
pub fn product_structure_2d(
    cloud: &Cloud2,
    lc: &LocalCoordinate,
    profile: &SliceProfile,
    n_profile: usize,
    seed: u64,
) -> Result<ProductReport> {
    let mut cs = Vec::new();
    let mut ws = Vec::new();
    for (p, w) in cloud.iter() {
        if p.fs_distance(&profile.center) >= profile.radius {
            continue;
        }
        let Ok(b) = p.pencil_base() else { continue };
        if let Some(c) = b.affine().and_then(|x| lc.coordinate(x)) {
            cs.push(c);
            ws.push(w);
        }
    }
    let reference = disc_samples(lc.rho, n_profile, DiscDensity::Flat, &mut rng::seeded(seed));
    let masses = reference.iter().map(|&c| profile.slice(lc.point(c)).map(|s| s.1)).collect::<Result<Vec<f64>>>()?;
    if masses.iter().sum::<f64>() <= 0.0 {
        return Err(Error::Precondition("the ball carries no slice mass".into()));
    }
    Ok(finish((&cs, &ws), (&reference, &masses), lc.rho, seed))
}

/// Synthetic ball data: `c` drawn with the given density, then one slice
/// point of the pencil line over `c`, kept when it lies in the ball.
pub fn synthetic_cloud_2d(
    lc: &LocalCoordinate,
    profile: &SliceProfile,
    n_lines: usize,
    density: DiscDensity,
    seed: u64,
) -> Result<Cloud2> {
    let mut r = rng::seeded(seed);
    let cs = disc_samples(lc.rho, n_lines, density, &mut r);
    let mut pts = Vec::new();
    for c in cs {
        let (sl, _) = profile.slice(lc.point(c))?;
        let p = sl[r.random_range(0..sl.len())];
        if p.fs_distance(&profile.center) < profile.radius {
            pts.push(p);
        }
    }
    if pts.is_empty() {
        return Err(Error::Precondition("no synthetic point landed in the ball".into()));
    }
    let prov = Provenance { kind: format!("synthetic_{density:?}").to_lowercase(), ..Default::default() };
    PointCloudMeasure::uniform(pts, seed, prov)
}
