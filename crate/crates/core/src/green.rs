//! Green function, slices of the Green current along lines, trace-measure
//! box masses and regularity exponents.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::endo::matvec;
use crate::dynamics::EndoP2;
use crate::error::{Error, Result};
use crate::measure::stats::ols;
use crate::measure::PointCloudMeasure;
use crate::numeric::proj::{gaussian_c, norm};
use crate::numeric::univariate::aberth_blackbox;
use crate::numeric::{Line, ProjPoint, C64, P2};
use crate::rng;

pub const DEFAULT_DEPTH_CAP: usize = 200;
pub const C_F_SAMPLES: usize = 10_000;
pub const C_F_REFINE: usize = 50;
pub const C_F_INFLATION: f64 = 1.1;
/// Largest slice degree `dⁿ` solved by default.
pub const SLICE_BUDGET: u64 = 4096;

/// Evaluates `G(z) = lim d^{-n} log‖Fⁿ(z)‖` with a certified tail bound.
#[derive(Clone, Debug)]
pub struct GreenEvaluator {
    f: EndoP2,
    c_f: f64,
    pub depth_cap: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GreenValue {
    pub value: f64,
    /// Bound on `|value − G(z)|`.
    pub error: f64,
    pub depth: usize,
    /// False when the depth cap stopped the evaluation before `tol`.
    pub converged: bool,
}

fn log_norm_unit(f: &EndoP2, v: &[C64; 3]) -> f64 {
    norm(&f.eval_lift(v)).ln()
}

fn random_unit<R: Rng + ?Sized>(r: &mut R) -> [C64; 3] {
    let v: [C64; 3] = std::array::from_fn(|_| gaussian_c(r));
    let n = norm(&v);
    v.map(|x| x / n)
}

/// `sup_{‖z‖=1} |log ‖F(z)‖|` by sampling and local refinement, inflated.
pub fn bound_constant(f: &EndoP2, samples: usize, refine: usize, seed: u64) -> f64 {
    let mut r = rng::seeded(seed);
    let mut cands: Vec<(f64, [C64; 3])> = (0..samples)
        .map(|_| {
            let v = random_unit(&mut r);
            (log_norm_unit(f, &v).abs(), v)
        })
        .collect();
    cands.sort_by(|a, b| b.0.total_cmp(&a.0));
    cands.truncate(8);
    let mut best = 0.0f64;
    for (mut val, mut v) in cands {
        let mut step = 0.1;
        for _ in 0..refine {
            let mut improved = false;
            for _ in 0..6 {
                let mut w = v;
                for x in w.iter_mut() {
                    *x += gaussian_c(&mut r) * step;
                }
                let n = norm(&w);
                let w = w.map(|x| x / n);
                let h = log_norm_unit(f, &w).abs();
                if h > val {
                    val = h;
                    v = w;
                    improved = true;
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        best = best.max(val);
    }
    best * C_F_INFLATION
}

impl GreenEvaluator {
    pub fn new(f: EndoP2) -> Self {
        let c_f = bound_constant(&f, C_F_SAMPLES, C_F_REFINE, 0x6e33);
        GreenEvaluator { f, c_f, depth_cap: DEFAULT_DEPTH_CAP }
    }

    pub fn with_constant(f: EndoP2, c_f: f64) -> Result<Self> {
        if !(c_f >= 0.0) {
            return Err(Error::InvalidInput("C_F must be nonnegative".into()));
        }
        Ok(GreenEvaluator { f, c_f, depth_cap: DEFAULT_DEPTH_CAP })
    }

    pub fn map(&self) -> &EndoP2 {
        &self.f
    }

    pub fn c_f(&self) -> f64 {
        self.c_f
    }

    /// Certified error after `n` steps: `C_F·d^{-n}/(d−1)`.
    pub fn certified_error(&self, n: usize) -> f64 {
        let d = self.f.degree() as f64;
        self.c_f * d.powi(-(n as i32)) / (d - 1.0)
    }

    /// Smallest depth whose certified error is at most `tol`.
    pub fn depth_for(&self, tol: f64) -> usize {
        let mut n = 0;
        while self.certified_error(n) > tol && n < 10_000 {
            n += 1;
        }
        n
    }

    /// `G_n(z) = log‖z‖ + Σ_{k<n} d^{-k-1} log‖F(u_k)‖` with `u_k` the unit
    /// vectors along the orbit.
    pub fn green_value(&self, z: &[C64; 3], tol: f64) -> Result<GreenValue> {
        let nz = norm(z);
        if !(nz > 0.0) || !nz.is_finite() {
            return Err(Error::InvalidInput("green_value needs a finite nonzero vector".into()));
        }
        if !(tol > 0.0) {
            return Err(Error::InvalidInput("tol must be positive".into()));
        }
        let want = self.depth_for(tol);
        let n = want.min(self.depth_cap);
        let d = self.f.degree() as f64;
        let mut u = z.map(|x| x / nz);
        let mut value = nz.ln();
        let mut w = 1.0;
        for _ in 0..n {
            w /= d;
            let g = self.f.eval_lift(&u);
            let ng = norm(&g);
            value += w * ng.ln();
            u = g.map(|x| x / ng);
        }
        Ok(GreenValue { value, error: self.certified_error(n), depth: n, converged: n == want })
    }
}

/// The measure `d^{-n} (fⁿ)*[M] ∧ [L]`: `dⁿ` points on `L`, weight `d^{-n}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceMeasure {
    pub line: Line,
    pub reference: Line,
    pub depth: usize,
    pub points: Vec<P2>,
    pub weights: Vec<f64>,
    pub converged: bool,
}

impl SliceMeasure {
    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn mass_in_ball(&self, center: &P2, radius: f64) -> f64 {
        self.points.iter().zip(&self.weights).filter(|(p, _)| p.fs_distance(center) < radius).map(|(_, w)| w).sum()
    }

    pub fn to_cloud(&self, seed: u64) -> Result<PointCloudMeasure<3>> {
        PointCloudMeasure::weighted(
            self.points.clone(),
            self.weights.clone(),
            seed,
            crate::measure::Provenance { kind: "slice".into(), depth: self.depth, ..Default::default() },
        )
    }
}

/// `ℓ_M(Fⁿ(s·e0 + e1))` divided by its `s`-derivative, and `log|ℓ_M∘Fⁿ|`.
/// Each step rescales value and derivative by the same constant, which
/// leaves the ratio exact.
fn slice_ratio(f: &EndoP2, m: &Line, e0: &[C64; 3], e1: &[C64; 3], n: usize, s: C64) -> (C64, f64) {
    let mut x: [C64; 3] = std::array::from_fn(|i| s * e0[i] + e1[i]);
    let mut dx = *e0;
    let mut logs = 0.0;
    for _ in 0..n {
        let (g, j) = f.jac_lift(&x);
        let dg = matvec(&j, &dx);
        let c = norm(&g);
        x = g.map(|v| v / c);
        dx = dg.map(|v| v / c);
        logs += c.ln();
    }
    let val = m.eval(&x);
    let der = m.eval(&dx);
    (val / der, logs + val.norm().ln())
}

fn log_form_at(f: &EndoP2, m: &Line, v: &[C64; 3], n: usize) -> f64 {
    let mut x = *v;
    let mut logs = 0.0;
    for _ in 0..n {
        let g = f.eval_lift(&x);
        let c = norm(&g);
        x = g.map(|v| v / c);
        logs += c.ln();
    }
    logs + m.eval(&x).norm().ln()
}

/// Slice of the Green-current approximant along `L` with reference line `M`.
pub fn slice_current(f: &EndoP2, l: &Line, m: &Line, n: usize) -> Result<SliceMeasure> {
    slice_current_budget(f, l, m, n, SLICE_BUDGET)
}

pub fn slice_current_budget(f: &EndoP2, l: &Line, m: &Line, n: usize, budget: u64) -> Result<SliceMeasure> {
    let d = f.degree() as u64;
    let big = d.checked_pow(n as u32).unwrap_or(u64::MAX);
    if big > budget {
        return Err(Error::Budget { name: "slice degree", needed: big, limit: budget });
    }
    let deg = big as usize;
    let [b0, b1] = l.kernel_basis();
    // choose a parametrization whose point at infinity is not a root
    let mut chosen = None;
    for k in 0..8 {
        let t = 0.37 + 0.71 * k as f64;
        let (c, s) = (C64::new(t.cos(), 0.0), C64::from_polar(1.0, 1.3 * t) * t.sin());
        let e0: [C64; 3] = std::array::from_fn(|i| c * b0[i] + s * b1[i]);
        let e1: [C64; 3] = std::array::from_fn(|i| -s.conj() * b0[i] + c * b1[i]);
        let lead = log_form_at(f, m, &e0, n);
        let typical = (0..16)
            .map(|j| {
                let z = C64::from_polar(1.0, std::f64::consts::TAU * j as f64 / 16.0);
                let v: [C64; 3] = std::array::from_fn(|i| (z * e0[i] + e1[i]) / 2f64.sqrt());
                log_form_at(f, m, &v, n)
            })
            .fold(f64::NEG_INFINITY, f64::max);
        if !typical.is_finite() {
            continue;
        }
        if lead > typical - 25.0 {
            chosen = Some((e0, e1, lead));
            break;
        }
    }
    let (e0, e1, lead) =
        chosen.ok_or_else(|| Error::Precondition("degenerate line: L lies in the pulled-back reference".into()))?;
    let at0 = log_form_at(f, m, &e1, n);
    let r0 = if at0.is_finite() { ((at0 - lead) / deg as f64).exp() } else { 1.0 };
    let init: Vec<C64> = (0..deg)
        .map(|k| C64::from_polar(r0.clamp(1e-8, 1e8), std::f64::consts::TAU * (k as f64 + 0.25) / deg as f64 + 0.3))
        .collect();
    let ratio = |s: C64| slice_ratio(f, m, &e0, &e1, n, s).0;
    let (mut roots, converged) = aberth_blackbox(ratio, init, 1e-13, 400);
    for z in roots.iter_mut() {
        for _ in 0..2 {
            let r = ratio(*z);
            if r.re.is_finite() && r.im.is_finite() {
                *z -= r;
            }
        }
    }
    let points =
        roots.iter().map(|s| P2::new(std::array::from_fn(|i| *s * e0[i] + e1[i]))).collect::<Result<Vec<_>>>()?;
    let w = 1.0 / deg as f64;
    Ok(SliceMeasure { line: *l, reference: *m, depth: n, points, weights: vec![w; deg], converged })
}

/// Depth with `dⁿ ≤ budget`.
pub fn default_slice_depth(d: u32, budget: u64) -> usize {
    let mut n = 0;
    while (d as u64).pow(n as u32 + 1) <= budget {
        n += 1;
    }
    n
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxMass {
    pub center: Vec<[f64; 2]>,
    pub radius: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub n_lines: usize,
    pub depth: usize,
    pub seed: u64,
    pub skipped: usize,
}

/// Crofton average of slice masses in the FS ball over `n_lines` random
/// lines (line `i` and its reference drawn from substream `i`).
pub fn sigma_t_box_mass(
    f: &EndoP2,
    center: &P2,
    radius: f64,
    n_lines: usize,
    depth: usize,
    seed: u64,
) -> Result<BoxMass> {
    let big = (f.degree() as u64).checked_pow(depth as u32).unwrap_or(u64::MAX);
    if big > SLICE_BUDGET {
        return Err(Error::Budget { name: "slice degree", needed: big, limit: SLICE_BUDGET });
    }
    if n_lines < 2 {
        return Err(Error::InvalidInput("need at least two lines".into()));
    }
    let masses: Vec<Option<f64>> = (0..n_lines)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::substream(seed, i as u64);
            let l = Line::random(&mut r);
            let m = Line::random(&mut r);
            slice_current(f, &l, &m, depth).ok().filter(|s| s.converged).map(|s| s.mass_in_ball(center, radius))
        })
        .collect();
    let ok: Vec<f64> = masses.iter().flatten().copied().collect();
    if ok.len() < 2 {
        return Err(Error::RootSolver { iterations: 400, residual: f64::NAN });
    }
    let k = ok.len() as f64;
    let mean = ok.iter().sum::<f64>() / k;
    let var = ok.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0);
    Ok(BoxMass {
        center: center.coords().iter().map(|c| [c.re, c.im]).collect(),
        radius,
        estimate: mean,
        stderr: (var / k).sqrt(),
        n_lines,
        depth,
        seed,
        skipped: n_lines - ok.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularityEstimate {
    /// Sampled lower estimate of `d∞`.
    pub d_inf: f64,
    /// Sampled `sup ‖d_p f‖_FS`, an upper estimate of `d∞` up to sampling.
    pub d_inf_upper: f64,
    pub gamma0: f64,
    pub n: usize,
    pub samples: usize,
    pub lower_estimate: bool,
}

pub fn gamma0(d: u32, d_inf: f64) -> f64 {
    if d_inf <= 1.0 {
        return 1.0;
    }
    ((d as f64).ln() / d_inf.ln()).min(1.0)
}

fn perturb<R: Rng + ?Sized>(p: &P2, step: f64, r: &mut R) -> P2 {
    let u = p.unit_lift();
    let v: [C64; 3] = std::array::from_fn(|i| u[i] + gaussian_c(r) * step);
    P2::new(v).unwrap_or(*p)
}

/// `d∞ ≈ max_p ‖d_p fⁿ‖^{1/n}` at `n = n_max` over FS-random samples, with
/// local maximization from the best candidates.
pub fn estimate_regularity(f: &EndoP2, n_max: usize, samples: usize, seed: u64) -> Result<RegularityEstimate> {
    if n_max < 2 {
        return Err(Error::InvalidInput("n_max must be at least 2".into()));
    }
    if samples == 0 {
        return Err(Error::InvalidInput("samples must be positive".into()));
    }
    let mut r = rng::seeded(seed);
    let pts: Vec<P2> = (0..samples).map(|_| P2::random(&mut r)).collect();
    let score = |p: &P2| f.fs_norm_iterate(p, n_max).powf(1.0 / n_max as f64);
    let upper = pts.iter().map(|p| f.fs_norm_iterate(p, 1)).fold(0.0, f64::max);
    // Hill-climb from each raw record so the result is a running max over the sample prefix.
    let mut raw_best = f64::NEG_INFINITY;
    let mut best = f64::NEG_INFINITY;
    for (i, p0) in pts.iter().enumerate() {
        let s0 = score(p0);
        if s0 <= raw_best {
            continue;
        }
        raw_best = s0;
        let mut local = rng::substream(seed, i as u64 + 1);
        let (mut val, mut p) = (s0, *p0);
        let mut step = 0.05;
        for _ in 0..30 {
            let mut improved = false;
            for _ in 0..4 {
                let q = perturb(&p, step, &mut local);
                let s = score(&q);
                if s > val {
                    val = s;
                    p = q;
                    improved = true;
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        best = best.max(val);
    }
    let d_inf = best.max(1.0);
    Ok(RegularityEstimate {
        d_inf,
        d_inf_upper: upper.max(d_inf),
        gamma0: gamma0(f.degree(), d_inf),
        n: n_max,
        samples,
        lower_estimate: true,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimensionEstimate {
    pub slope: f64,
    /// 95% band half-width.
    pub band: f64,
    pub centers_used: usize,
    pub radii: Vec<f64>,
    pub mean_log_mass: Vec<f64>,
    pub warning: Option<String>,
}

/// Pointwise dimension: per-center least-squares slope of `log μ(B(x,r))`
/// against `log r`, averaged over up to 500 centers taken from the cloud.
pub fn lower_dimension_estimate<const N: usize>(
    cloud: &PointCloudMeasure<N>,
    radii: &[f64],
) -> Result<DimensionEstimate> {
    if cloud.len() < 1000 {
        return Err(Error::Precondition("need at least 1000 cloud points".into()));
    }
    if radii.len() < 4 || radii.windows(2).any(|w| w[1] >= w[0]) || radii.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::InvalidInput("need at least 4 positive decreasing radii".into()));
    }
    if (radii[0] / radii[radii.len() - 1]).log10() < 1.5 - 1e-9 {
        return Err(Error::InvalidInput("radii must span at least 1.5 decades".into()));
    }
    let pts: Vec<[C64; N]> = cloud.points().iter().map(ProjPoint::unit_lift).collect();
    let w = cloud.weights();
    let stride = (pts.len() / 500).max(1);
    let centers: Vec<usize> = (0..pts.len()).step_by(stride).take(500).collect();
    let lx: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
    let per: Vec<(Option<f64>, Vec<f64>, usize)> = centers
        .par_iter()
        .map(|&c| {
            let mut mass = vec![0.0; radii.len()];
            let mut count = vec![0usize; radii.len()];
            for (j, q) in pts.iter().enumerate() {
                if j == c {
                    continue;
                }
                let dist = crate::numeric::proj::fs_distance_raw(&pts[c], q);
                for (k, r) in radii.iter().enumerate() {
                    if dist < *r {
                        mass[k] += w[j];
                        count[k] += 1;
                    }
                }
            }
            let (xs, ys): (Vec<f64>, Vec<f64>) =
                (0..radii.len()).filter(|&k| count[k] > 0).map(|k| (lx[k], mass[k].ln())).unzip();
            let slope = (xs.len() >= 3).then(|| ols(&xs, &ys).0);
            let lm = mass.iter().map(|m| if *m > 0.0 { m.ln() } else { f64::NAN }).collect();
            (slope, lm, count[radii.len() - 1])
        })
        .collect();
    let slopes: Vec<f64> = per.iter().filter_map(|p| p.0).collect();
    if slopes.len() < 10 {
        return Err(Error::Precondition("too few centers with enough neighbours".into()));
    }
    let k = slopes.len() as f64;
    let mean = slopes.iter().sum::<f64>() / k;
    let sd = (slopes.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt();
    let mut band = 1.96 * sd / k.sqrt();
    let sparse = per.iter().filter(|p| p.2 < 5).count();
    let mut warning = None;
    if sparse * 5 > per.len() {
        band *= 2.0;
        warning = Some(format!("{sparse} of {} centers have fewer than 5 points in the smallest ball", per.len()));
    }
    let mean_log_mass = (0..radii.len())
        .map(|j| {
            let v: Vec<f64> = per.iter().map(|p| p.1[j]).filter(|x| x.is_finite()).collect();
            v.iter().sum::<f64>() / v.len().max(1) as f64
        })
        .collect();
    Ok(DimensionEstimate {
        slope: mean,
        band,
        centers_used: slopes.len(),
        radii: radii.to_vec(),
        mean_log_mass,
        warning,
    })
}
