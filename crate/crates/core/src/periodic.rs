//! Periodic points, their multipliers, and the repelling-point counting audit.

use serde::{Deserialize, Serialize};

use crate::dynamics::endo::mul2;
use crate::dynamics::ratmap::unit2;
use crate::dynamics::{eig2, EndoP2, RatMap1};
use crate::error::{Error, Result};
use crate::numeric::proj::{chart_others, from_chart, norm};
use crate::numeric::univariate::blackbox_roots;
use crate::numeric::{C64, P1, P2};

/// Repelling means `|χ| > 1 + REPELLING_TOL` for every multiplier.
pub const REPELLING_TOL: f64 = 1e-8;
/// Relative tolerance of the `|χ₂| = d^{n/2}` flag.
pub const SQRT_D_TOL: f64 = 1e-6;
/// FS distance below which a point counts as lying on `E_θ`.
pub const E_THETA_TOL: f64 = 1e-6;
/// Degree budget of the periodic-point equations.
pub const PERIOD_BUDGET: u64 = 4096;
/// Records closer than this (FS) with equal period are one record.
pub const DEFLATION_RADIUS: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordFlags {
    pub repelling: bool,
    /// `log|det| / n > log d`.
    pub in_r_mu: bool,
    /// `||χ₂| − d^{n/2}| < tol·d^{n/2}`.
    pub chi2_matches_sqrt_d_n: bool,
    /// `None` when the map carries no `A_θ` metadata.
    pub on_e_theta: Option<bool>,
}

/// A periodic point on ℙ¹ or ℙ² with its multipliers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodicOrbitRecord {
    /// Normalized homogeneous coordinates (2 or 3 entries).
    pub point: Vec<C64>,
    pub period: usize,
    /// Largest-modulus multiplier.
    pub chi1: C64,
    /// Second multiplier on ℙ²; `None` on ℙ¹.
    pub chi2: Option<C64>,
    pub det: C64,
    pub multiplicity: usize,
    pub flags: RecordFlags,
}

impl PeriodicOrbitRecord {
    fn build(point: Vec<C64>, period: usize, chi: &[C64], degree: u32, on_e: Option<bool>, mult: usize) -> Self {
        let (chi1, chi2) = match chi {
            [a] => (*a, None),
            [a, b] => {
                if a.norm() >= b.norm() {
                    (*a, Some(*b))
                } else {
                    (*b, Some(*a))
                }
            }
            _ => unreachable!("one or two multipliers"),
        };
        let det = chi2.map_or(chi1, |c| c * chi1);
        let mut r = PeriodicOrbitRecord {
            point,
            period,
            chi1,
            chi2,
            det,
            multiplicity: mult,
            flags: RecordFlags { repelling: false, in_r_mu: false, chi2_matches_sqrt_d_n: false, on_e_theta: on_e },
        };
        r.flags = r.recompute_flags(degree);
        r
    }

    /// Flags from the stored multipliers.
    pub fn recompute_flags(&self, degree: u32) -> RecordFlags {
        let d = degree as f64;
        let n = self.period as f64;
        let weakest = self.chi2.map_or(self.chi1.norm(), |c| c.norm());
        let target = d.powf(n / 2.0);
        let c2 = self.chi2.unwrap_or(self.chi1).norm();
        RecordFlags {
            repelling: weakest > 1.0 + REPELLING_TOL,
            in_r_mu: self.det.norm().ln() / n > d.ln(),
            chi2_matches_sqrt_d_n: (c2 - target).abs() < SQRT_D_TOL * target,
            on_e_theta: self.flags.on_e_theta,
        }
    }

    pub fn p1(&self) -> Result<P1> {
        P1::new([self.point[0], self.point[1]])
    }

    pub fn p2(&self) -> Result<P2> {
        if self.point.len() != 3 {
            return Err(Error::InvalidInput("record is not on P^2".into()));
        }
        P2::new([self.point[0], self.point[1], self.point[2]])
    }
}

fn budget(d: u32, n: usize) -> Result<u64> {
    if n == 0 {
        return Err(Error::InvalidInput("period must be at least 1".into()));
    }
    let big = (d as u64).checked_pow(n as u32).unwrap_or(u64::MAX);
    if big > PERIOD_BUDGET {
        return Err(Error::Budget { name: "period degree", needed: big, limit: PERIOD_BUDGET });
    }
    Ok(big)
}

/// `Gⁿ(v)` and `dGⁿ(v)·dv` for a map of ℂ², rescaled each step by a common
/// constant; returns also the accumulated log scale.
fn iterate_dual2(theta: &RatMap1, v: [C64; 2], dv: [C64; 2], n: usize) -> ([C64; 2], [C64; 2], f64) {
    let (mut x, mut dx, mut logs) = (v, dv, 0.0);
    for _ in 0..n {
        let (g, j) = theta.jac_lift(&x);
        let dg = [j[0][0] * dx[0] + j[0][1] * dx[1], j[1][0] * dx[0] + j[1][1] * dx[1]];
        let c = norm(&g);
        x = [g[0] / c, g[1] / c];
        dx = [dg[0] / c, dg[1] / c];
        logs += c.ln();
    }
    (x, dx, logs)
}

/// Homogeneous fixed-point form `h(v) = v₀G₁(v) − v₁G₀(v)` of `G = θⁿ`
/// along `v(s) = s·e0 + e1`: returns `(h/h', log|h|)`.
fn fixed_form(theta: &RatMap1, e0: &[C64; 2], e1: &[C64; 2], n: usize, s: C64) -> (C64, f64) {
    let v = [s * e0[0] + e1[0], s * e0[1] + e1[1]];
    let (g, dg, logs) = iterate_dual2(theta, v, *e0, n);
    let h = v[0] * g[1] - v[1] * g[0];
    let dh = e0[0] * g[1] + v[0] * dg[1] - e0[1] * g[0] - v[1] * dg[0];
    (h / dh, logs + h.norm().ln())
}

fn log_fixed_form_at(theta: &RatMap1, v: &[C64; 2], n: usize) -> f64 {
    let (g, _, logs) = iterate_dual2(theta, *v, [C64::new(0.0, 0.0); 2], n);
    logs + (v[0] * g[1] - v[1] * g[0]).norm().ln()
}

/// Points of ℙ¹ with `θⁿ(x) = x` (with multiplicity, `dⁿ + 1` of them).
pub fn periodic_points_p1(theta: &RatMap1, n: usize) -> Result<Vec<(P1, usize)>> {
    let deg = budget(theta.degree(), n)? as usize + 1;
    let mut chosen = None;
    for k in 0..8 {
        let t = 0.41 + 0.67 * k as f64;
        let (c, s) = (t.cos(), C64::from_polar(t.sin(), 0.9 * t));
        let e0 = [C64::new(c, 0.0), s];
        let e1 = [-s.conj(), C64::new(c, 0.0)];
        let lead = log_fixed_form_at(theta, &e0, n);
        let typical = (0..16)
            .map(|j| {
                let z = C64::from_polar(1.0, std::f64::consts::TAU * j as f64 / 16.0);
                log_fixed_form_at(theta, &[z * e0[0] + e1[0], z * e0[1] + e1[1]], n)
            })
            .fold(f64::NEG_INFINITY, f64::max);
        if lead.is_finite() && lead > typical - 25.0 {
            chosen = Some((e0, e1, lead));
            break;
        }
    }
    let (e0, e1, lead) =
        chosen.ok_or_else(|| Error::Precondition("could not find a generic parametrization".into()))?;
    let at0 = log_fixed_form_at(theta, &e1, n);
    let r0 = if at0.is_finite() { ((at0 - lead) / deg as f64).exp() } else { 1.0 };
    let (s, _) = blackbox_roots(|s| fixed_form(theta, &e0, &e1, n, s).0, deg, r0, 1e-14);
    let pts: Vec<P1> = s.iter().map(|s| P1::new([*s * e0[0] + e1[0], *s * e0[1] + e1[1]])).collect::<Result<_>>()?;
    Ok(merge_points(pts, |a, b| a.fs_distance(b)))
}

/// Single-linkage merge of near-equal points with counts.
fn merge_points<T: Copy>(pts: Vec<T>, dist: impl Fn(&T, &T) -> f64) -> Vec<(T, usize)> {
    let mut out: Vec<(T, usize)> = Vec::new();
    for p in pts {
        match out.iter_mut().find(|(q, _)| dist(q, &p) < 1e-6) {
            Some(e) => e.1 += 1,
            None => out.push((p, 1)),
        }
    }
    out
}

/// `(θⁿ)'` at a periodic point, in the largest-coordinate charts.
pub fn multiplier_p1(theta: &RatMap1, x: &P1, n: usize) -> Result<C64> {
    let mut m = C64::new(1.0, 0.0);
    let start = x.max_index();
    let (mut p, mut src) = (*x, start);
    for k in 0..n {
        let y = theta.eval(&p)?;
        let dst = if k + 1 == n { start } else { y.max_index() };
        m *= theta.chart_derivative(&p, src, dst)?;
        p = y;
        src = dst;
    }
    Ok(m)
}

fn on_e_theta_1d(theta: &RatMap1, x: &P1) -> Option<bool> {
    theta.postcritical().map(|pc| pc.iter().any(|a| a.fs_distance(x) < E_THETA_TOL))
}

fn sort_records(v: &mut [PeriodicOrbitRecord]) {
    v.sort_by(|a, b| {
        a.period.cmp(&b.period).then_with(|| {
            for (x, y) in a.point.iter().zip(&b.point) {
                let o = x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im));
                if o != std::cmp::Ordering::Equal {
                    return o;
                }
            }
            std::cmp::Ordering::Equal
        })
    });
}

/// All points with `θⁿ(x) = x` on ℙ¹ as records.
pub fn periodic_points_1d(theta: &RatMap1, n: usize) -> Result<Vec<PeriodicOrbitRecord>> {
    let mut out = Vec::new();
    for (x, mult) in periodic_points_p1(theta, n)? {
        let chi = multiplier_p1(theta, &x, n)?;
        out.push(PeriodicOrbitRecord::build(
            x.coords().to_vec(),
            n,
            &[chi],
            theta.degree(),
            on_e_theta_1d(theta, &x),
            mult,
        ));
    }
    sort_records(&mut out);
    Ok(out)
}

/// Fixed points of θ: the `d + 1` roots of `zQ − wP`.
pub fn fixed_points_1d(theta: &RatMap1) -> Result<Vec<PeriodicOrbitRecord>> {
    let p = theta.p().binary_coeffs();
    let q = theta.q().binary_coeffs();
    let d = theta.degree() as usize;
    // coefficient of z^k w^(d+1−k) in z·Q − w·P
    let form: Vec<C64> = (0..=d + 1)
        .map(|k| {
            let zq = if k >= 1 { q[k - 1] } else { C64::new(0.0, 0.0) };
            let wp = if k <= d { p[k] } else { C64::new(0.0, 0.0) };
            zq - wp
        })
        .collect();
    let roots = crate::numeric::univariate::binary_form_roots(&form, 1e-13)?;
    let pts = roots.into_iter().map(P1::new).collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    for (x, mult) in merge_points(pts, |a, b| a.fs_distance(b)) {
        let chi = theta.multiplier(&x)?;
        out.push(PeriodicOrbitRecord::build(
            x.coords().to_vec(),
            1,
            &[chi],
            theta.degree(),
            on_e_theta_1d(theta, &x),
            mult,
        ));
    }
    sort_records(&mut out);
    Ok(out)
}

/// Product of chart differentials of `f` along the orbit of a period-`n`
/// point, from and to the chart `k`.
pub fn orbit_differential(f: &EndoP2, p: &P2, n: usize, k: usize) -> Result<[[C64; 2]; 2]> {
    let mut m = [[C64::new(1.0, 0.0), C64::new(0.0, 0.0)], [C64::new(0.0, 0.0), C64::new(1.0, 0.0)]];
    let mut x = *p;
    let mut src = k;
    for step in 0..n {
        let y = f.eval(&x)?;
        let dst = if step + 1 == n { k } else { y.max_index() };
        m = mul2(&f.differential(&x, src, dst)?, &m);
        x = y;
        src = dst;
    }
    Ok(m)
}

fn record_p2(f: &EndoP2, p: &P2, n: usize, mult: usize) -> Result<PeriodicOrbitRecord> {
    let m = orbit_differential(f, p, n, p.max_index())?;
    let chi = eig2(&m);
    let on_e = on_e_theta_2d(f, p);
    Ok(PeriodicOrbitRecord::build(p.coords().to_vec(), n, &chi, f.degree(), on_e, mult))
}

/// Whether `p` lies on `π⁻¹(A_θ)` (the center counts as on it).
pub fn on_e_theta_2d(f: &EndoP2, p: &P2) -> Option<bool> {
    let base = f.base()?;
    let pc = base.postcritical()?;
    let u = p.unit_lift();
    if norm(&[u[0], u[1]]) < 1e-12 {
        return Some(true);
    }
    let b = P1::new([u[0], u[1]]).ok()?;
    Some(pc.iter().any(|a| a.fs_distance(&b) < E_THETA_TOL))
}

/// Fiber-return fixed points over a base periodic point `(a, b)` (unit
/// lift): roots `s` of `a·G₂ − s·G₀` (or with `b, G₁`) where `G = fⁿ(a, b, s)`.
fn fiber_periodic(f: &EndoP2, ab: [C64; 2], n: usize) -> Result<Vec<P2>> {
    let deg = budget(f.degree(), n)? as usize;
    let k = if ab[0].norm() >= ab[1].norm() { 0 } else { 1 };
    let e0 = [C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(1.0, 0.0)];
    let run = |s: C64, want_d: bool| -> (C64, C64, f64) {
        let mut x = [ab[0], ab[1], s];
        let mut dx = e0;
        let mut logs = 0.0;
        for _ in 0..n {
            let (g, j) = f.jac_lift(&x);
            let dg = if want_d { crate::dynamics::endo::matvec(&j, &dx) } else { [C64::new(0.0, 0.0); 3] };
            let c = norm(&g);
            x = g.map(|v| v / c);
            dx = dg.map(|v| v / c);
            logs += c.ln();
        }
        let h = ab[k] * x[2] - s * x[k];
        let dh = ab[k] * dx[2] - x[k] - s * dx[k];
        (h, dh, logs)
    };
    // leading behaviour: a·R_n(0,0,1) s^{dⁿ}
    let mut xc = e0;
    let mut lead = 0.0;
    for _ in 0..n {
        let g = f.eval_lift(&xc);
        let c = norm(&g);
        xc = g.map(|v| v / c);
        lead += c.ln();
    }
    let lead = lead + (ab[k] * xc[2]).norm().ln();
    let (h0, _, l0) = run(C64::new(0.0, 0.0), false);
    let at0 = l0 + h0.norm().ln();
    let r0 = if at0.is_finite() && lead.is_finite() { ((at0 - lead) / deg as f64).exp() } else { 1.0 };
    let (roots, _) = blackbox_roots(
        |s| {
            let (h, dh, _) = run(s, true);
            h / dh
        },
        deg,
        r0,
        1e-14,
    );
    roots.into_iter().map(|s| P2::new([ab[0], ab[1], s])).collect()
}

/// All points with `fⁿ(p) = p` of a skew product: base periodic points of
/// θ, the fiber-return fixed points over each, and the pencil center.
pub fn periodic_points_skew(f: &EndoP2, n: usize) -> Result<Vec<PeriodicOrbitRecord>> {
    let base = f.base().ok_or(Error::NotSkew("periodic_points_skew needs a skew product"))?;
    budget(f.degree(), 2 * n)?;
    let mut pts: Vec<P2> = Vec::new();
    for (x, _) in periodic_points_p1(base, n)? {
        pts.extend(fiber_periodic(f, unit2(x.coords()), n)?);
    }
    pts.push(P2::new([C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(1.0, 0.0)])?);
    let mut out = Vec::new();
    for (p, mult) in merge_points(pts, |a, b| a.fs_distance(b)) {
        let (p, _) = refine_fixed(f, &p, n, 3).unwrap_or((p, 0.0));
        out.push(record_p2(f, &p, n, mult)?);
    }
    sort_records(&mut out);
    Ok(out)
}

/// FS residual of `fⁿ(p) = p`.
pub fn periodic_residual(f: &EndoP2, p: &P2, n: usize) -> Result<f64> {
    Ok(f.iterate(p, n)?.fs_distance(p))
}

fn chart_map(f: &EndoP2, x: [C64; 2], n: usize, k: usize) -> Result<[C64; 2]> {
    let y = f.iterate(&P2::new(from_chart(x, k))?, n)?;
    let c = y.coords();
    if c[k].norm() == 0.0 {
        return Err(Error::Chart { chart: k });
    }
    let [a, b] = chart_others(k);
    Ok([c[a] / c[k], c[b] / c[k]])
}

/// A few plain Newton steps in the largest chart (used as polish).
fn refine_fixed(f: &EndoP2, p: &P2, n: usize, steps: usize) -> Result<(P2, f64)> {
    let mut p = *p;
    let mut res = periodic_residual(f, &p, n)?;
    for _ in 0..steps {
        if res < 1e-15 {
            break;
        }
        let k = p.max_index();
        let x = p.chart(k).ok_or(Error::Chart { chart: k })?;
        let g = chart_map(f, x, n, k)?;
        let mut j = orbit_differential(f, &p, n, k)?;
        j[0][0] -= C64::new(1.0, 0.0);
        j[1][1] -= C64::new(1.0, 0.0);
        let r = [g[0] - x[0], g[1] - x[1]];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det.norm() < 1e-300 {
            break;
        }
        let dx = [(j[1][1] * r[0] - j[0][1] * r[1]) / det, (j[0][0] * r[1] - j[1][0] * r[0]) / det];
        let q = P2::new(from_chart([x[0] - dx[0], x[1] - dx[1]], k))?;
        let rq = periodic_residual(f, &q, n)?;
        if rq < res {
            p = q;
            res = rq;
        } else {
            break;
        }
    }
    Ok((p, res))
}

pub const NEWTON_MAX_ITER: usize = 80;
pub const NEWTON_TOL: f64 = 1e-12;

/// Deflated Newton iteration for `fⁿ(p) = p` in the chart `chart` (default:
/// the largest coordinate of the seed). Known records of period `n` repel
/// the iteration through the deflation factor `Π(‖x − xᵢ‖⁻² + 1)`.
pub fn newton_refine(
    f: &EndoP2,
    n: usize,
    seed: &P2,
    chart: Option<usize>,
    known: &[PeriodicOrbitRecord],
) -> Result<PeriodicOrbitRecord> {
    if n == 0 {
        return Err(Error::InvalidInput("period must be at least 1".into()));
    }
    let mut p = *seed;
    let mut k = chart.unwrap_or(p.max_index());
    let known_pts: Vec<P2> = known.iter().filter(|r| r.period == n).filter_map(|r| r.p2().ok()).collect();
    for it in 0..NEWTON_MAX_ITER {
        if periodic_residual(f, &p, n)? < NEWTON_TOL {
            if known_pts.iter().any(|q| q.fs_distance(&p) < DEFLATION_RADIUS) {
                return Err(Error::Newton(format!("converged to a known record after {it} iterations")));
            }
            return record_p2(f, &p, n, 1);
        }
        let x = match p.chart(k) {
            Some(x) if x[0].norm().max(x[1].norm()) < 1e3 => x,
            _ => {
                k = p.max_index();
                p.chart(k).ok_or(Error::Chart { chart: k })?
            }
        };
        let g = chart_map(f, x, n, k)?;
        let mut j = orbit_differential(f, &p, n, k)?;
        j[0][0] -= C64::new(1.0, 0.0);
        j[1][1] -= C64::new(1.0, 0.0);
        let r = [g[0] - x[0], g[1] - x[1]];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det.norm() < 1e-14 * (1.0 + j.iter().flatten().map(|v| v.norm()).fold(0.0, f64::max)).powi(2) {
            return Err(Error::Newton(format!("Jacobian of f^n - id singular at iterate {it}")));
        }
        let mut dx = [-(j[1][1] * r[0] - j[0][1] * r[1]) / det, -(j[0][0] * r[1] - j[1][0] * r[0]) / det];
        // deflation: scale the step by 1 / (1 − D log m[dx])
        let mut dlog = 0.0;
        for q in &known_pts {
            if let Some(y) = q.chart(k) {
                let e = [x[0] - y[0], x[1] - y[1]];
                let d2 = e[0].norm_sqr() + e[1].norm_sqr();
                if d2 > 0.0 {
                    let re = (e[0].conj() * dx[0] + e[1].conj() * dx[1]).re;
                    dlog += -2.0 * re / (d2 * d2) / (1.0 / d2 + 1.0);
                }
            }
        }
        let tau = 1.0 / (1.0 - dlog);
        if tau.is_finite() {
            dx = [dx[0] * tau, dx[1] * tau];
        }
        // damping keeps the iterate inside a reasonable chart region
        let step = (dx[0].norm_sqr() + dx[1].norm_sqr()).sqrt();
        let lim = 0.5 * (1.0 + (x[0].norm_sqr() + x[1].norm_sqr()).sqrt());
        if step > lim {
            dx = [dx[0] * (lim / step), dx[1] * (lim / step)];
        }
        p = P2::new(from_chart([x[0] + dx[0], x[1] + dx[1]], k))?;
    }
    Err(Error::Newton(format!("no convergence in {NEWTON_MAX_ITER} iterations")))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub period: usize,
    pub center: Vec<[f64; 2]>,
    pub radius: f64,
    pub epsilon: f64,
    pub lambda: [f64; 2],
    pub lambda_half_width: [f64; 2],
    /// `λ̂₁ + λ̂₂ − 2ε`.
    pub det_threshold: f64,
    pub records_total: usize,
    pub count: usize,
    pub cloud_mass: f64,
    /// `d^{2n}(1−ε)³·μ̂(V)`.
    pub bound: f64,
    pub ratio: Option<f64>,
    pub passed: bool,
    pub note: String,
}

/// Count repelling `n`-periodic points in the FS ball `V` whose
/// `(1/n)log|det|` is at least `λ̂₁ + λ̂₂ − 2ε`, and compare with the
/// asymptotic lower bound. Failure is a soft result.
pub fn repelling_count_audit(
    f: &EndoP2,
    n: usize,
    center: &P2,
    radius: f64,
    cloud: &crate::measure::Cloud2,
    eps: f64,
    lyap: &crate::measure::LyapunovReport,
) -> Result<AuditReport> {
    let records = periodic_points_skew(f, n)?;
    let thr = lyap.exponents[0] + lyap.exponents[1] - 2.0 * eps;
    let count = records
        .iter()
        .filter(|r| r.flags.repelling)
        .filter(|r| r.det.norm().ln() / n as f64 >= thr)
        .filter(|r| r.p2().map(|p| p.fs_distance(center) < radius).unwrap_or(false))
        .count();
    let mass: f64 = cloud.iter().filter(|(p, _)| p.fs_distance(center) < radius).map(|(_, w)| w).sum();
    let d = f.degree() as f64;
    let bound = d.powi(2 * n as i32) * (1.0 - eps).powi(3) * mass;
    let passed = count as f64 >= bound;
    let note = if passed {
        "bound satisfied".to_string()
    } else {
        format!("bound not reached at n = {n}; it is asymptotic (holds for n ≥ n_eps)")
    };
    Ok(AuditReport {
        period: n,
        center: center.coords().iter().map(|c| [c.re, c.im]).collect(),
        radius,
        epsilon: eps,
        lambda: [lyap.exponents[0], lyap.exponents[1]],
        lambda_half_width: [lyap.half_width[0], lyap.half_width[1]],
        det_threshold: thr,
        records_total: records.len(),
        count,
        cloud_mass: mass,
        bound,
        ratio: (bound > 0.0).then(|| count as f64 / bound),
        passed,
        note,
    })
}

/// CSV `period, coord…, chi1_re, chi1_im, chi2_re, chi2_im, flags…`
/// (flags 1/0, `on_e_theta` −1 when unknown).
pub fn write_records_csv<W: std::io::Write>(
    out: W,
    header: &serde_json::Value,
    recs: &[PeriodicOrbitRecord],
) -> Result<()> {
    let ncoord = recs.first().map_or(3, |r| r.point.len());
    let mut cols = vec!["period".to_string()];
    for i in 0..ncoord {
        cols.push(format!("coord{i}_re"));
        cols.push(format!("coord{i}_im"));
    }
    for s in [
        "chi1_re",
        "chi1_im",
        "chi2_re",
        "chi2_im",
        "multiplicity",
        "repelling",
        "in_r_mu",
        "chi2_matches_sqrt_d_n",
        "on_e_theta",
    ] {
        cols.push(s.into());
    }
    let b = |x: bool| if x { 1.0 } else { 0.0 };
    let rows = recs.iter().map(|r| {
        let mut v = vec![r.period as f64];
        for c in &r.point {
            v.push(c.re);
            v.push(c.im);
        }
        let c2 = r.chi2.unwrap_or(C64::new(f64::NAN, f64::NAN));
        v.extend([r.chi1.re, r.chi1.im, c2.re, c2.im, r.multiplicity as f64]);
        v.extend([b(r.flags.repelling), b(r.flags.in_r_mu), b(r.flags.chi2_matches_sqrt_d_n)]);
        v.push(r.flags.on_e_theta.map_or(-1.0, b));
        v
    });
    crate::io::write_csv(out, header, &cols, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{f_star, lattes_lemniscatic, monomial, power_map};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn power_map_fixed_points() {
        let recs = fixed_points_1d(&power_map(2)).unwrap();
        assert_eq!(recs.len(), 3);
        let mut mods: Vec<f64> = recs.iter().map(|r| r.chi1.norm()).collect();
        mods.sort_by(f64::total_cmp);
        assert!(mods[0] < 1e-12 && mods[1] < 1e-12 && (mods[2] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn lattes_fixed_points_and_multipliers() {
        let th = lattes_lemniscatic();
        let recs = fixed_points_1d(&th).unwrap();
        assert_eq!(recs.iter().map(|r| r.multiplicity).sum::<usize>(), 5);
        let mut finite = 0;
        for r in &recs {
            let x = r.p1().unwrap();
            match x.affine() {
                Some(a) if a.norm() < 1e6 => {
                    // quartic oracle 3x⁴ − 6x² − 1 = 0
                    let q = a.powu(4) * 3.0 - a * a * 6.0 - 1.0;
                    assert!(q.norm() < 1e-10, "{a}");
                    assert!((r.chi1.norm() - 2.0).abs() < 1e-8);
                    finite += 1;
                }
                _ => assert!((r.chi1 - c(4.0, 0.0)).norm() < 1e-10),
            }
        }
        assert_eq!(finite, 4);
        let x0 = (1.0 + 48f64.sqrt() / 6.0).sqrt();
        let roots = [x0, -x0];
        for x0 in roots {
            assert!(recs.iter().any(|r| r.p1().unwrap().affine().map_or(false, |a| (a - c(x0, 0.0)).norm() < 1e-10)));
        }
        assert!(recs.iter().any(|r| r.p1().unwrap().affine().map_or(false, |a| (a - c(
            0.0,
            (48f64.sqrt() / 6.0 - 1.0).sqrt()
        ))
        .norm()
            < 1e-10)));
    }

    #[test]
    fn black_box_period_one_matches_resultant_solve() {
        let th = lattes_lemniscatic();
        let a = fixed_points_1d(&th).unwrap();
        let b = periodic_points_1d(&th, 1).unwrap();
        assert_eq!(a.len(), b.len());
        for r in &a {
            let x = r.p1().unwrap();
            assert!(b.iter().any(|s| s.p1().unwrap().fs_distance(&x) < 1e-9));
        }
    }

    #[test]
    fn lattes_periodic_multipliers_off_postcritical() {
        let th = lattes_lemniscatic();
        let pc = th.postcritical().unwrap().to_vec();
        for n in 1..=3 {
            let recs = periodic_points_1d(&th, n).unwrap();
            assert_eq!(recs.iter().map(|r| r.multiplicity).sum::<usize>(), 4usize.pow(n as u32) + 1);
            for r in recs.iter().filter(|r| r.flags.repelling) {
                let x = r.p1().unwrap();
                let dist = pc.iter().map(|a| a.fs_distance(&x)).fold(1.0, f64::min);
                assert!(periodic_residual_1d(&th, &x, n) < 1e-10);
                if dist > 0.05 {
                    let t = 2f64.powi(n as i32);
                    assert!((r.chi1.norm() - t).abs() < 1e-6 * t, "n={n} {r:?}");
                }
            }
        }
    }

    fn periodic_residual_1d(th: &RatMap1, x: &P1, n: usize) -> f64 {
        th.iterate(x, n).unwrap().fs_distance(x)
    }

    #[test]
    fn monomial_fixed_points() {
        let recs = periodic_points_skew(&monomial(2), 1).unwrap();
        // d² + d + 1 distinct fixed points
        assert_eq!(recs.len(), 7);
        assert!(recs.len() >= 4);
        let rep: Vec<_> = recs.iter().filter(|r| r.flags.repelling).collect();
        assert_eq!(rep.len(), 1);
        assert!((rep[0].det - c(4.0, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn running_example_fixed_points() {
        let f = f_star();
        let recs = periodic_points_skew(&f, 1).unwrap();
        assert_eq!(recs.len(), 21);
        let mut good = 0;
        for r in &recs {
            let p = r.p2().unwrap();
            assert!(periodic_residual(&f, &p, 1).unwrap() < 1e-10);
            if r.flags.repelling && r.flags.on_e_theta == Some(false) {
                assert!((r.chi2.unwrap().norm() - 2.0).abs() < 1e-6, "{r:?}");
                good += 1;
            }
        }
        assert!(good > 0);
        assert!(recs.iter().any(|r| r.det.norm() > 4.0 && r.flags.in_r_mu));
        for i in 0..recs.len() {
            for j in i + 1..recs.len() {
                assert!(recs[i].p2().unwrap().fs_distance(&recs[j].p2().unwrap()) > DEFLATION_RADIUS);
            }
        }
    }

    #[test]
    fn multipliers_are_chart_invariant() {
        let f = f_star();
        for r in periodic_points_skew(&f, 1).unwrap() {
            let p = r.p2().unwrap();
            for k in 0..3 {
                if p.coords()[k].norm() < 1e-3 {
                    continue;
                }
                let ev = eig2(&orbit_differential(&f, &p, 1, k).unwrap());
                let mut a = [ev[0].norm(), ev[1].norm()];
                a.sort_by(|x, y| y.total_cmp(x));
                let b = [r.chi1.norm(), r.chi2.unwrap().norm()];
                for i in 0..2 {
                    assert!((a[i] - b[i]).abs() <= 1e-8 * b[i].max(1.0), "{a:?} {b:?}");
                }
            }
        }
    }

    #[test]
    fn flags_are_recomputable() {
        for r in periodic_points_skew(&f_star(), 1).unwrap() {
            assert_eq!(r.recompute_flags(4), r.flags);
            assert_eq!(r.flags.repelling, r.chi2.unwrap().norm() > 1.0 + REPELLING_TOL);
        }
    }

    #[test]
    fn newton_from_exact_and_perturbed_seed() {
        let f = f_star();
        let recs = periodic_points_skew(&f, 1).unwrap();
        let target = recs.iter().find(|r| r.flags.repelling && r.flags.on_e_theta == Some(false)).unwrap();
        let p = target.p2().unwrap();
        let same = newton_refine(&f, 1, &p, None, &[]).unwrap();
        assert_eq!(same.p2().unwrap(), p);
        let q = P2::new([p.coords()[0] + c(1e-3, 0.0), p.coords()[1] + c(0.0, 1e-3), p.coords()[2] + c(1e-3, -1e-3)])
            .unwrap();
        let r = newton_refine(&f, 1, &q, None, &[]).unwrap();
        assert!(r.p2().unwrap().fs_distance(&p) < 1e-10);
        // deflated against itself it must not return the same record
        let again = newton_refine(&f, 1, &q, None, std::slice::from_ref(target));
        match again {
            Ok(other) => assert!(other.p2().unwrap().fs_distance(&p) > DEFLATION_RADIUS),
            Err(_) => {}
        }
    }

    #[test]
    fn newton_in_center_basin() {
        let f = f_star();
        let seed = P2::new([c(0.05, 0.01), c(0.03, 0.0), c(1.0, 0.0)]).unwrap();
        let r = newton_refine(&f, 1, &seed, None, &[]).unwrap();
        let center = P2::new([c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]).unwrap();
        assert!(r.p2().unwrap().fs_distance(&center) < 1e-12);
        assert!(!r.flags.repelling);
    }

    #[test]
    fn budget_is_enforced() {
        assert!(matches!(periodic_points_skew(&f_star(), 4), Err(Error::Budget { .. })));
    }

    #[test]
    fn csv_export_has_flag_columns() {
        let recs = fixed_points_1d(&power_map(2)).unwrap();
        let mut buf = Vec::new();
        write_records_csv(&mut buf, &serde_json::json!({}), &recs).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.lines().nth(1).unwrap().ends_with("on_e_theta"));
        assert_eq!(s.lines().count(), 2 + recs.len());
    }
}
