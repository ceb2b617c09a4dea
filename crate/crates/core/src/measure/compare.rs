//! Statistical comparison of clouds by a fixed battery of test functions.

use serde::{Deserialize, Serialize};

use super::cloud::PointCloudMeasure;
use super::stats::batch_mean;
use crate::error::{Error, Result};
use crate::numeric::proj::fs_distance_raw;
use crate::numeric::C64;

pub const BATTERY_VERSION: &str = "battery-v1";
pub const PLANAR_BATTERY_VERSION: &str = "planar-v1";

/// A bounded smooth function on ℙ^(N−1), evaluated on the unit lift `v`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum TestFn {
    /// `Re` or `Im` of `vᵢ v̄ⱼ`.
    Gram { i: usize, j: usize, imag: bool },
    /// `Re` or `Im` of `(vᵢ v̄ⱼ)²`.
    GramSq { i: usize, j: usize, imag: bool },
    /// `|vᵢ|⁴`.
    Abs4 { i: usize },
    /// `Re` or `Im` of `vᵢ v̄ⱼ |v_k|²`.
    GramAbs { i: usize, j: usize, k: usize, imag: bool },
    /// `exp(−(d_FS(v, center)/radius)²)`.
    Bump { center: Vec<[f64; 2]>, radius: f64 },
}

fn part(z: C64, imag: bool) -> f64 {
    if imag {
        z.im
    } else {
        z.re
    }
}

impl TestFn {
    pub fn eval(&self, v: &[C64]) -> f64 {
        match self {
            TestFn::Gram { i, j, imag } => part(v[*i] * v[*j].conj(), *imag),
            TestFn::GramSq { i, j, imag } => part((v[*i] * v[*j].conj()).powu(2), *imag),
            TestFn::Abs4 { i } => v[*i].norm_sqr().powi(2),
            TestFn::GramAbs { i, j, k, imag } => part(v[*i] * v[*j].conj(), *imag) * v[*k].norm_sqr(),
            TestFn::Bump { center, radius } => {
                let d = match v.len() {
                    2 => fs_distance_raw(&[v[0], v[1]], &[c(center[0]), c(center[1])]),
                    _ => fs_distance_raw(&[v[0], v[1], v[2]], &[c(center[0]), c(center[1]), c(center[2])]),
                };
                (-(d / radius).powi(2)).exp()
            }
        }
    }
}

fn c(p: [f64; 2]) -> C64 {
    C64::new(p[0], p[1])
}

/// A named list of test functions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Battery {
    pub version: String,
    pub functions: Vec<(String, TestFn)>,
}

impl Battery {
    /// The default twelve-function battery on ℙ¹ (`ncoords = 2`) or ℙ²
    /// (`ncoords = 3`).
    pub fn v1(ncoords: usize) -> Battery {
        let mut f: Vec<(String, TestFn)> = Vec::new();
        let g = |i, j, imag| TestFn::Gram { i, j, imag };
        let bump = |pts: &[[f64; 2]]| TestFn::Bump { center: pts.to_vec(), radius: 0.5 };
        if ncoords == 2 {
            f.push(("re_v0v0".into(), g(0, 0, false)));
            f.push(("re_v0v1".into(), g(0, 1, false)));
            f.push(("im_v0v1".into(), g(0, 1, true)));
            f.push(("re_v0v1_sq".into(), TestFn::GramSq { i: 0, j: 1, imag: false }));
            f.push(("im_v0v1_sq".into(), TestFn::GramSq { i: 0, j: 1, imag: true }));
            f.push(("abs4_v0".into(), TestFn::Abs4 { i: 0 }));
            f.push(("re_v0v1_abs_v0".into(), TestFn::GramAbs { i: 0, j: 1, k: 0, imag: false }));
            f.push(("im_v0v1_abs_v0".into(), TestFn::GramAbs { i: 0, j: 1, k: 0, imag: true }));
            f.push(("bump_1_0".into(), bump(&[[1.0, 0.0], [0.0, 0.0]])));
            f.push(("bump_0_1".into(), bump(&[[0.0, 0.0], [1.0, 0.0]])));
            f.push(("bump_1_1".into(), bump(&[[1.0, 0.0], [1.0, 0.0]])));
            f.push(("bump_1_i".into(), bump(&[[1.0, 0.0], [0.0, 1.0]])));
        } else {
            f.push(("re_v0v0".into(), g(0, 0, false)));
            f.push(("re_v1v1".into(), g(1, 1, false)));
            f.push(("re_v0v1".into(), g(0, 1, false)));
            f.push(("im_v0v1".into(), g(0, 1, true)));
            f.push(("re_v0v2".into(), g(0, 2, false)));
            f.push(("im_v0v2".into(), g(0, 2, true)));
            f.push(("re_v1v2".into(), g(1, 2, false)));
            f.push(("im_v1v2".into(), g(1, 2, true)));
            f.push(("bump_1_1_1".into(), bump(&[[1.0, 0.0], [1.0, 0.0], [1.0, 0.0]])));
            f.push(("bump_1_0_1".into(), bump(&[[1.0, 0.0], [0.0, 0.0], [1.0, 0.0]])));
            f.push(("bump_0_1_1".into(), bump(&[[0.0, 0.0], [1.0, 0.0], [1.0, 0.0]])));
            f.push(("bump_1_i_m1".into(), bump(&[[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])));
        }
        Battery { version: BATTERY_VERSION.into(), functions: f }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZScore {
    pub function_id: String,
    pub mean1: f64,
    pub mean2: f64,
    pub se1: f64,
    pub se2: f64,
    /// `None` when the pooled standard error vanishes.
    pub z: Option<f64>,
    pub flag: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub battery: String,
    pub n1: usize,
    pub n2: usize,
    pub entries: Vec<ZScore>,
    pub max_abs_z: f64,
}

impl ComparisonReport {
    pub fn passes(&self, threshold: f64) -> bool {
        self.max_abs_z < threshold
    }
}

/// Relative floor on the pooled standard error (rounding level).
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Compare pre-evaluated samples: `vals[k][i]` is function `k` at sample `i`.
pub fn compare_evaluated(
    battery: &str,
    ids: &[String],
    vals1: &[Vec<f64>],
    w1: &[f64],
    vals2: &[Vec<f64>],
    w2: &[f64],
) -> ComparisonReport {
    let mut entries = Vec::with_capacity(ids.len());
    let mut max_abs_z: f64 = 0.0;
    for (k, id) in ids.iter().enumerate() {
        let (m1, s1) = batch_mean(&vals1[k], w1);
        let (m2, s2) = batch_mean(&vals2[k], w2);
        let pooled = (s1 * s1 + s2 * s2).sqrt();
        let floor = VARIANCE_FLOOR * (1.0 + m1.abs().max(m2.abs()));
        let (z, flag) = if !(m1.is_finite() && m2.is_finite() && pooled.is_finite()) {
            (None, Some("non-finite values; skipped".to_string()))
        } else if pooled > floor {
            (Some((m1 - m2) / pooled), None)
        } else if (m1 - m2).abs() <= floor {
            (Some(0.0), Some("degenerate variance, equal means".to_string()))
        } else {
            (Some((m1 - m2) / floor), Some("degenerate variance, standard error floored".to_string()))
        };
        if let Some(z) = z {
            max_abs_z = max_abs_z.max(z.abs());
        }
        entries.push(ZScore { function_id: id.clone(), mean1: m1, mean2: m2, se1: s1, se2: s2, z, flag });
    }
    ComparisonReport { battery: battery.into(), n1: w1.len(), n2: w2.len(), entries, max_abs_z }
}

fn evaluate<const N: usize>(b: &Battery, cloud: &PointCloudMeasure<N>) -> Vec<Vec<f64>> {
    let lifts: Vec<[C64; N]> = cloud.points().iter().map(|p| p.unit_lift()).collect();
    b.functions.iter().map(|(_, f)| lifts.iter().map(|v| f.eval(v)).collect()).collect()
}

/// Per-function z-scores of `cloud1` against `cloud2`.
pub fn compare_measures<const N: usize>(
    c1: &PointCloudMeasure<N>,
    c2: &PointCloudMeasure<N>,
    battery: &Battery,
) -> Result<ComparisonReport> {
    if battery.functions.is_empty() {
        return Err(Error::InvalidInput("empty test-function battery".into()));
    }
    let ids: Vec<String> = battery.functions.iter().map(|(s, _)| s.clone()).collect();
    Ok(compare_evaluated(
        &battery.version,
        &ids,
        &evaluate(battery, c1),
        c1.weights(),
        &evaluate(battery, c2),
        c2.weights(),
    ))
}

/// Twelve functions of a planar point `u = c/ρ`, used on linearizing
/// coordinates.
pub fn planar_battery() -> Vec<(String, fn(C64) -> f64)> {
    vec![
        ("re_u".into(), |u| u.re),
        ("im_u".into(), |u| u.im),
        ("abs2_u".into(), |u| u.norm_sqr()),
        ("re_u2".into(), |u| (u * u).re),
        ("im_u2".into(), |u| (u * u).im),
        ("abs4_u".into(), |u| u.norm_sqr().powi(2)),
        ("re_u_abs2".into(), |u| u.re * u.norm_sqr()),
        ("im_u_abs2".into(), |u| u.im * u.norm_sqr()),
        ("re_u3".into(), |u| u.powu(3).re),
        ("im_u3".into(), |u| u.powu(3).im),
        ("bump_0".into(), |u| (-(u.norm_sqr()) / 0.35f64.powi(2)).exp()),
        ("bump_half".into(), |u| (-((u - C64::new(0.5, 0.0)).norm_sqr()) / 0.35f64.powi(2)).exp()),
    ]
}

/// Compare two weighted planar samples after scaling by `1/rho`.
pub fn compare_planar(s1: (&[C64], &[f64]), s2: (&[C64], &[f64]), rho: f64) -> ComparisonReport {
    let b = planar_battery();
    let ids: Vec<String> = b.iter().map(|(s, _)| s.clone()).collect();
    let ev =
        |pts: &[C64]| -> Vec<Vec<f64>> { b.iter().map(|(_, f)| pts.iter().map(|c| f(c / rho)).collect()).collect() };
    compare_evaluated(PLANAR_BATTERY_VERSION, &ids, &ev(s1.0), s1.1, &ev(s2.0), s2.1)
}
