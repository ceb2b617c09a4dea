//! The Poincaré map `σ: ℂ² → ℙ²` with `f^N∘σ = σ∘D`, built as
//! `f^{Nn}∘σ₀∘D^{−n}` from a Poincaré-Dulac chart `σ₀ = ξ⁻¹` at a repelling
//! periodic point, plus fiber enumeration, path lifting and direction probes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::endo::{hdot, matvec, perp_basis};
use crate::dynamics::ratmap::unit2;
use crate::dynamics::EndoP2;
use crate::dynamics::RatMap1;
use crate::error::{Error, Result};
use crate::measure::sampler::{fiber_preimages, preimages_exact};
use crate::normal_form::{normal_form_at, Germ, NormalForm, NormalFormData, RESONANCE_TOL};
use crate::numeric::proj::{chart_others, from_chart, norm};
use crate::numeric::{JetMap, C64, P1, P2};

pub const DEFAULT_SAFETY: f64 = 0.5;
/// Sampled residual bound defining the linearization radius.
pub const EPS_RESIDUAL: f64 = 1e-12;
pub const DEFAULT_MAX_DEPTH: usize = 64;
/// σ-Jacobian condition number above which fiber elements count as critical.
pub const CRITICAL_COND: f64 = 1e8;
pub const FIBER_BUDGET: u64 = 1 << 16;
pub const FIBER_TOL: f64 = 1e-7;

fn cz() -> C64 {
    C64::new(0.0, 0.0)
}

/// The map `(z, w) ↦ (αz + βw^q, γw)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClosedForm {
    pub alpha: C64,
    pub beta: C64,
    pub gamma: C64,
    pub q: usize,
}

impl ClosedForm {
    pub fn identity() -> Self {
        ClosedForm { alpha: C64::new(1.0, 0.0), beta: cz(), gamma: C64::new(1.0, 0.0), q: 0 }
    }

    pub fn eval(&self, x: [C64; 2]) -> [C64; 2] {
        let mut z = self.alpha * x[0];
        if self.q > 0 {
            z += self.beta * x[1].powu(self.q as u32);
        }
        [z, self.gamma * x[1]]
    }

    /// Jacobian (row-major) at `x`.
    pub fn jacobian(&self, x: [C64; 2]) -> [[C64; 2]; 2] {
        let dzw = if self.q > 0 { self.beta * (self.q as f64) * x[1].powu(self.q as u32 - 1) } else { cz() };
        [[self.alpha, dzw], [cz(), self.gamma]]
    }

    /// `self ∘ inner`; both must share `q` (or have `β = 0`).
    pub fn compose(&self, inner: &ClosedForm) -> ClosedForm {
        let q = self.q.max(inner.q);
        let beta = self.alpha * inner.beta + self.beta * inner.gamma.powu(q as u32);
        ClosedForm { alpha: self.alpha * inner.alpha, beta, gamma: self.gamma * inner.gamma, q }
    }

    pub fn to_jet(&self, order: usize) -> JetMap {
        JetMap::normal_form(order, self.alpha, self.gamma, self.beta, self.q)
    }
}

/// `Dⁿ` or `D⁻ⁿ` for `D = (χ₁z + cw^q, χ₂w)` in closed form.
pub fn dn_closed_form(nf: &NormalForm, n: usize, inverse: bool) -> Result<ClosedForm> {
    let (chi1, chi2, c) = (nf.chi1, nf.chi2, nf.c);
    let q = nf.q.unwrap_or(0);
    if c != cz() {
        let ok = q >= 2 && (chi2.powu(q as u32) - chi1).norm() < RESONANCE_TOL * chi1.norm();
        if !ok {
            return Err(Error::Precondition("closed form needs the resonance χ₂^q = χ₁ when c ≠ 0".into()));
        }
    }
    let nn = n as i32;
    let nc = c * n as f64;
    Ok(if inverse {
        ClosedForm { alpha: chi1.powi(-nn), beta: -nc * chi1.powi(-(nn + 1)), gamma: chi2.powi(-nn), q }
    } else {
        let beta = if n == 0 { cz() } else { nc * chi1.powi(nn - 1) };
        ClosedForm { alpha: chi1.powi(nn), beta, gamma: chi2.powi(nn), q }
    })
}

/// Precision policy of an evaluator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub tol: f64,
    pub max_depth: usize,
    pub safety: f64,
    pub fiber_tol: f64,
    pub order: usize,
}

impl Default for Policy {
    fn default() -> Self {
        Policy { tol: 1e-8, max_depth: DEFAULT_MAX_DEPTH, safety: DEFAULT_SAFETY, fiber_tol: FIBER_TOL, order: 12 }
    }
}

/// Value of `σ(x)` with its error estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaValue {
    pub point: P2,
    pub error: f64,
    pub depth: usize,
    /// FS change when the depth is increased by one (when checked).
    pub stability: Option<f64>,
    /// False when the error estimate exceeds the requested tolerance.
    pub converged: bool,
}

/// Point of `ℙ²` with a pair of tangent vectors, in a homogeneous lift.
#[derive(Clone, Copy, Debug)]
struct Tangent {
    v: [C64; 3],
    u: [[C64; 3]; 2],
}

impl Tangent {
    fn unit(mut self) -> Self {
        let s = norm(&self.v);
        for x in self.v.iter_mut() {
            *x /= s;
        }
        for col in self.u.iter_mut() {
            for x in col.iter_mut() {
                *x /= s;
            }
            let a = hdot(&self.v, col);
            for (x, vv) in col.iter_mut().zip(self.v) {
                *x -= a * vv;
            }
        }
        self
    }

    /// Tangent columns in chart `k` of the point.
    fn chart_tangents(&self, k: usize) -> Result<[[C64; 2]; 2]> {
        let vk = self.v[k];
        if vk.norm() == 0.0 {
            return Err(Error::Chart { chart: k });
        }
        let [a, b] = chart_others(k);
        let t = |u: &[C64; 3]| [(u[a] * vk - self.v[a] * u[k]) / (vk * vk), (u[b] * vk - self.v[b] * u[k]) / (vk * vk)];
        Ok([t(&self.u[0]), t(&self.u[1])])
    }

    /// Tangent columns in the orthonormal frame of `T_pℙ²` (FS metric).
    fn frame_tangents(&self) -> [[C64; 2]; 2] {
        let b = perp_basis(&self.v);
        let n = norm(&self.v);
        let coords = |u: &[C64; 3]| [hdot(&b[0], u) / n, hdot(&b[1], u) / n];
        [coords(&self.u[0]), coords(&self.u[1])]
    }
}

fn sv2(m: &[[C64; 2]; 2]) -> (f64, f64) {
    // columns m[0], m[1]; singular values of the 2×2 matrix with these columns
    let a = m[0][0].norm_sqr() + m[0][1].norm_sqr();
    let d = m[1][0].norm_sqr() + m[1][1].norm_sqr();
    let b = m[0][0].conj() * m[1][0] + m[0][1].conj() * m[1][1];
    let tr = a + d;
    let det = (a * d - b.norm_sqr()).max(0.0);
    let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
    let s1 = (tr / 2.0 + disc).sqrt();
    let s2 = if s1 > 0.0 { det.sqrt() / s1 } else { 0.0 };
    (s1, s2)
}

/// Global Poincaré map at a repelling periodic point.
#[derive(Clone, Debug)]
pub struct PoincareEvaluator {
    pub f: EndoP2,
    pub period: usize,
    pub nf: NormalForm,
    pub germ: Germ,
    pub a: P2,
    pub eps: f64,
    pub eps_residual: f64,
    /// Chart-offset radius containing `σ₀(𝔻²_ε)`, with margin.
    pub u_radius: f64,
    /// FS radius on the base containing `π(σ₀(𝔻²_ε))`, with margin (skew maps).
    pub base_radius: f64,
    pub policy: Policy,
    pub data: NormalFormData,
}

/// Deterministic sample of the distinguished boundary `|z| = |w| = r`.
fn torus(r: f64, n: usize) -> Vec<[C64; 2]> {
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let a = std::f64::consts::TAU * (i as f64 + 0.25) / n as f64;
            let b = std::f64::consts::TAU * (j as f64 + 0.6) / n as f64;
            out.push([C64::from_polar(r, a), C64::from_polar(r, b)]);
        }
    }
    out
}

fn sup(x: &[C64; 2]) -> f64 {
    x[0].norm().max(x[1].norm())
}

impl PoincareEvaluator {
    /// Build from a repelling periodic point `p` of period `period`.
    pub fn new(f: &EndoP2, p: &P2, period: usize, policy: Policy) -> Result<Self> {
        let pn = normal_form_at(f, p, period, policy.order, None)?;
        let data = pn.data()?;
        let germ = pn.germ.to_c64();
        let nf = pn.nf.to_c64();
        let a = germ.point()?;
        let dinv = dn_closed_form(&nf, 1, true)?;
        let d1 = dn_closed_form(&nf, 1, false)?;
        let mut chosen = None;
        let mut r = 0.5;
        for _ in 0..80 {
            let stable =
                dinv.alpha.norm() * r + dinv.beta.norm() * r.powi(dinv.q as i32) <= r && dinv.gamma.norm() <= 1.0;
            if stable {
                let mut worst = 0.0f64;
                let mut umax = 0.0f64;
                let mut bmax = 0.0f64;
                for x in torus(r, 8) {
                    let u = nf.xi_inv.eval(x[0], x[1]);
                    umax = umax.max(sup(&u));
                    if let Ok(q) = P2::new(from_chart([germ.center()[0] + u[0], germ.center()[1] + u[1]], germ.chart()))
                    {
                        if let (Ok(bq), Ok(ba)) = (q.pencil_base(), a.pencil_base()) {
                            bmax = bmax.max(bq.fs_distance(&ba));
                        }
                    }
                    let back = nf.xi.eval(u[0], u[1]);
                    worst = worst.max(sup(&[back[0] - x[0], back[1] - x[1]]));
                    let fu = match germ.eval_map(f, u) {
                        Ok(v) => v,
                        Err(_) => {
                            worst = f64::INFINITY;
                            break;
                        }
                    };
                    let lhs = nf.xi.eval(fu[0], fu[1]);
                    let rhs = d1.eval(x);
                    worst = worst.max(sup(&[lhs[0] - rhs[0], lhs[1] - rhs[1]]));
                }
                if worst < EPS_RESIDUAL {
                    chosen = Some((r, worst, umax, bmax));
                    break;
                }
            }
            r *= 0.85;
        }
        let (eps, eps_residual, umax, bmax) =
            chosen.ok_or_else(|| Error::Precondition("no linearization radius meets the residual bound".into()))?;
        Ok(PoincareEvaluator {
            f: f.clone(),
            period,
            nf,
            germ,
            a,
            eps,
            eps_residual,
            u_radius: 1.5 * umax,
            base_radius: 1.5 * bmax,
            policy,
            data,
        })
    }

    pub fn degree(&self) -> u32 {
        self.f.degree()
    }

    /// Depth rule: least `n` with `‖D⁻ⁿx‖∞ < safety·ε`.
    pub fn depth_for(&self, x: [C64; 2]) -> Result<usize> {
        let bound = self.policy.safety * self.eps;
        for n in 0..=self.policy.max_depth {
            let y = dn_closed_form(&self.nf, n, true)?.eval(x);
            if sup(&y) < bound {
                return Ok(n);
            }
        }
        Err(Error::Budget {
            name: "max_depth",
            needed: self.policy.max_depth as u64 + 1,
            limit: self.policy.max_depth as u64,
        })
    }

    fn jet_error(&self, s: f64) -> f64 {
        let m = self.nf.order as i32 + 1;
        self.eps_residual * (s / self.eps).powi(m)
    }

    /// σ₀ at a point of the linearization bidisc, with a tangent pair pushed
    /// through `dσ₀` from the columns of `cols`.
    fn sigma0(&self, y: [C64; 2], cols: [[C64; 2]; 2]) -> Tangent {
        let u = self.nf.xi_inv.eval(y[0], y[1]);
        let j = self.nf.xi_inv.jacobian(y[0], y[1]);
        let c = self.germ.center();
        let k = self.germ.chart();
        let v = from_chart([c[0] + u[0], c[1] + u[1]], k);
        let [a, b] = chart_others(k);
        let mut tu = [[cz(); 3]; 2];
        for (col, t) in cols.iter().zip(tu.iter_mut()) {
            let du = [j[0][0] * col[0] + j[0][1] * col[1], j[1][0] * col[0] + j[1][1] * col[1]];
            t[a] = du[0];
            t[b] = du[1];
        }
        Tangent { v, u: tu }.unit()
    }

    fn forward(&self, mut t: Tangent, steps: usize) -> Result<Tangent> {
        for _ in 0..steps {
            let (g, j) = self.f.jac_lift(&t.v);
            let n = norm(&g);
            if n <= 1e-14 * self.f.components().iter().map(|p| p.max_coeff()).fold(0.0, f64::max) {
                return Err(Error::Indeterminate { norm: n });
            }
            t = Tangent { v: g, u: [matvec(&j, &t.u[0]), matvec(&j, &t.u[1])] }.unit();
        }
        Ok(t)
    }

    /// `f^{Nn}(σ₀(D⁻ⁿx))` at a prescribed depth, with the tangent pair
    /// `dσ·e₁, dσ·e₂`.
    fn eval_at_depth(&self, x: [C64; 2], n: usize) -> Result<(Tangent, f64, f64)> {
        let dinv = dn_closed_form(&self.nf, n, true)?;
        let y = dinv.eval(x);
        let jd = dinv.jacobian(x);
        let cols = [[jd[0][0], jd[1][0]], [jd[0][1], jd[1][1]]];
        let t0 = self.sigma0(y, cols);
        let t = self.forward(t0, self.period * n)?;
        let lip = self.f.fs_norm_iterate(&P2::new(t0.v)?, self.period * n).max(1.0);
        let steps = (self.period * n + 1) as f64;
        let err = 10.0 * (self.jet_error(sup(&y)) + 8.0 * steps * f64::EPSILON) * lip;
        Ok((t, err, sup(&y)))
    }

    /// `σ(x)` at the depth rule's depth, without stability check.
    pub fn eval_sigma_raw(&self, x: [C64; 2]) -> Result<SigmaValue> {
        let n = self.depth_for(x)?;
        let (t, err, _) = self.eval_at_depth(x, n)?;
        Ok(SigmaValue {
            point: P2::new(t.v)?,
            error: err,
            depth: n,
            stability: None,
            converged: err <= self.policy.tol,
        })
    }

    /// `σ(x)` with a depth+1 stability check.
    pub fn eval_sigma(&self, x: [C64; 2]) -> Result<SigmaValue> {
        let mut v = self.eval_sigma_raw(x)?;
        if v.depth < self.policy.max_depth {
            let (t, err2, _) = self.eval_at_depth(x, v.depth + 1)?;
            let p2 = P2::new(t.v)?;
            v.stability = Some(v.point.fs_distance(&p2));
            v.error = v.error.max(err2);
            v.converged = v.error <= self.policy.tol;
        }
        Ok(v)
    }

    /// `σ(x)` together with `dσ_x` as tangent columns in chart `k` of `σ(x)`
    /// (largest coordinate when `None`) and in the FS frame.
    pub fn sigma_jet(&self, x: [C64; 2], chart: Option<usize>) -> Result<SigmaJet> {
        let n = self.depth_for(x)?;
        let (t, err, _) = self.eval_at_depth(x, n)?;
        let point = P2::new(t.v)?;
        let k = chart.unwrap_or_else(|| point.max_index());
        let chart_cols = t.chart_tangents(k)?;
        let frame = t.frame_tangents();
        let (s1, s2) = sv2(&frame);
        let cond = if s2 > 0.0 { s1 / s2 } else { f64::INFINITY };
        Ok(SigmaJet {
            point,
            lift: t.v,
            chart: k,
            chart_cols,
            frame_cols: frame,
            perp_cols: t.u,
            cond,
            error: err,
            depth: n,
        })
    }

    /// Semiconjugacy residual `FS(f^N(σ(x)), σ(Dx))`.
    pub fn semiconjugacy_residual(&self, x: [C64; 2]) -> Result<f64> {
        let s = self.eval_sigma_raw(x)?;
        let lhs = self.f.iterate(&s.point, self.period)?;
        let dx = dn_closed_form(&self.nf, 1, false)?.eval(x);
        let rhs = self.eval_sigma_raw(dx)?;
        Ok(lhs.fs_distance(&rhs.point))
    }

    /// Linearization coordinate of a point near `a`, if it lies in
    /// `σ₀(𝔻²_ε)`.
    pub fn local_coordinate(&self, p: &P2) -> Option<[C64; 2]> {
        let k = self.germ.chart();
        let c = p.chart(k)?;
        let ctr = self.germ.center();
        let u = [c[0] - ctr[0], c[1] - ctr[1]];
        if sup(&u) >= self.u_radius {
            return None;
        }
        let x = self.nf.xi.eval(u[0], u[1]);
        (sup(&x) < self.eps).then_some(x)
    }
}

/// `σ(x)` with its differential.
#[derive(Clone, Debug)]
pub struct SigmaJet {
    pub point: P2,
    pub lift: [C64; 3],
    pub chart: usize,
    /// `dσ·e₁, dσ·e₂` in chart coordinates.
    pub chart_cols: [[C64; 2]; 2],
    /// The same in an orthonormal frame of `T_pℙ²`.
    pub frame_cols: [[C64; 2]; 2],
    /// The same as lift-level vectors orthogonal to `lift`.
    pub perp_cols: [[C64; 3]; 2],
    pub cond: f64,
    pub error: f64,
    pub depth: usize,
}

/// An element of `σ⁻¹(p)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiberElement {
    pub x: [C64; 2],
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiberSet {
    pub target: P2,
    pub depth: usize,
    pub elements: Vec<FiberElement>,
    pub preimages_searched: usize,
    pub note: Option<String>,
}

fn sort_points(v: &mut [FiberElement]) {
    v.sort_by(|a, b| {
        let na = (a.x[0].norm_sqr() + a.x[1].norm_sqr()).sqrt();
        let nb = (b.x[0].norm_sqr() + b.x[1].norm_sqr()).sqrt();
        na.total_cmp(&nb)
            .then(a.x[0].re.total_cmp(&b.x[0].re))
            .then(a.x[0].im.total_cmp(&b.x[0].im))
            .then(a.x[1].re.total_cmp(&b.x[1].re))
            .then(a.x[1].im.total_cmp(&b.x[1].im))
    });
}

/// All `f^{steps}`-preimages of `p` (skew maps), without pruning.
pub fn iterated_preimages(f: &EndoP2, p: &P2, steps: usize) -> Result<Vec<P2>> {
    let mut level = vec![*p];
    for _ in 0..steps {
        let next: Result<Vec<Vec<P2>>> = level.par_iter().map(|y| preimages_exact(f, y)).collect();
        level = next?.into_iter().flatten().collect();
    }
    Ok(level)
}

/// Base chains `x_steps = π(p), …, x_0` (stored leaf first) with
/// `FS(x_0, target) < radius`.
fn base_chains(base: &RatMap1, p: &P1, steps: usize, target: &P1, radius: f64) -> Result<(Vec<Vec<[C64; 2]>>, u64)> {
    let mut level: Vec<Vec<[C64; 2]>> = vec![vec![unit2(p.coords())]];
    let mut count = 1u64;
    for _ in 0..steps {
        let next: Result<Vec<Vec<Vec<[C64; 2]>>>> = level
            .par_iter()
            .map(|chain| {
                let last = chain.last().expect("chains are nonempty");
                let ys = base.preimages(&P1::new(*last)?)?;
                Ok(ys
                    .iter()
                    .map(|y| {
                        let mut c = chain.clone();
                        c.push(unit2(y.coords()));
                        c
                    })
                    .collect())
            })
            .collect();
        level = next?.into_iter().flatten().collect();
        count += level.len() as u64;
        if count > FIBER_BUDGET * 4 {
            return Err(Error::Budget { name: "fiber_base_preimages", needed: count, limit: FIBER_BUDGET * 4 });
        }
    }
    let kept = level
        .into_iter()
        .filter(|c| P1::new(*c.last().expect("nonempty")).map(|x| x.fs_distance(target) < radius).unwrap_or(false))
        .collect();
    Ok((kept, count))
}

/// Candidate `f^{N·depth}`-preimages of `p` near `a`: base preimages are
/// pruned to the base disc under the linearization ball before the fiber
/// roots are expanded along each surviving chain.
fn candidate_preimages(ev: &PoincareEvaluator, f: &EndoP2, p: &P2, steps: usize) -> Result<(Vec<P2>, usize)> {
    let base = f.base().ok_or(Error::NotSkew("sigma_fiber"))?;
    let target = ev.a.pencil_base()?;
    let (chains, _) = base_chains(base, &p.pencil_base()?, steps, &target, ev.base_radius)?;
    let dn = (f.degree() as u64).pow(steps as u32);
    let needed = dn.saturating_mul(chains.len() as u64);
    if needed > FIBER_BUDGET * 16 {
        return Err(Error::Budget { name: "fiber_preimages", needed, limit: FIBER_BUDGET * 16 });
    }
    let per: Result<Vec<Vec<P2>>> = chains
        .par_iter()
        .map(|chain| {
            let mut level = vec![*p];
            for ab in &chain[1..] {
                let next: Result<Vec<Vec<P2>>> = level.iter().map(|y| fiber_preimages(f, y, ab)).collect();
                level = next?.into_iter().flatten().collect();
            }
            Ok(level)
        })
        .collect();
    let all: Vec<P2> = per?.into_iter().flatten().collect();
    let n = all.len();
    Ok((all, n))
}

fn collect_fiber(ev: &PoincareEvaluator, p: &P2, depth: usize, pre: &[P2], searched: usize) -> Result<FiberSet> {
    let dn = dn_closed_form(&ev.nf, depth, false)?;
    let found: Vec<FiberElement> = pre
        .par_iter()
        .filter_map(|q| {
            let x0 = ev.local_coordinate(q)?;
            let y = dn.eval(x0);
            let s = ev.eval_sigma_raw(y).ok()?;
            let residual = s.point.fs_distance(p);
            (residual < ev.policy.fiber_tol).then_some(FiberElement { x: y, residual })
        })
        .collect();
    let mut elements: Vec<FiberElement> = Vec::new();
    let mut sorted = found;
    sort_points(&mut sorted);
    for e in sorted {
        let dup = elements.iter().any(|o| {
            let d = ((e.x[0] - o.x[0]).norm_sqr() + (e.x[1] - o.x[1]).norm_sqr()).sqrt();
            d < 1e-8 * (1.0 + sup(&e.x))
        });
        if !dup {
            elements.push(e);
        }
    }
    let note = elements.is_empty().then(|| "no preimage reached the linearization ball; increase depth".to_string());
    Ok(FiberSet { target: *p, depth, elements, preimages_searched: searched, note })
}

/// Elements of `σ⁻¹(p)` found through the `f^{N·depth}`-preimages of `p`
/// that lie in the linearization ball.
pub fn sigma_fiber(ev: &PoincareEvaluator, p: &P2, depth: usize) -> Result<FiberSet> {
    if !ev.f.is_skew() {
        return Err(Error::NotSkew("sigma_fiber"));
    }
    let (pre, searched) = candidate_preimages(ev, &ev.f, p, ev.period * depth)?;
    collect_fiber(ev, p, depth, &pre, searched)
}

/// Fiber search for a non-skew map `ev.f` close to the skew map `reference`:
/// preimage chains of the reference are continued to `ev.f` by Newton
/// correction one level at a time. Elements are verified, the set may be
/// incomplete.
pub fn sigma_fiber_continued(ev: &PoincareEvaluator, reference: &EndoP2, p: &P2, depth: usize) -> Result<FiberSet> {
    let base = reference.base().ok_or(Error::NotSkew("sigma_fiber_continued reference"))?;
    let steps = ev.period * depth;
    let target = ev.a.pencil_base()?;
    let (chains, _) = base_chains(base, &p.pencil_base()?, steps, &target, 3.0 * ev.base_radius)?;
    let per: Result<Vec<Vec<P2>>> = chains
        .par_iter()
        .map(|chain| {
            // pairs (reference point, continued point)
            let mut level = vec![(*p, *p)];
            for ab in &chain[1..] {
                let mut next = Vec::new();
                for (r, q) in &level {
                    for g in fiber_preimages(reference, r, ab)? {
                        if let Ok((y, res)) = ev.f.polish_preimage(&g, q, 12) {
                            if res < 1e-12 {
                                next.push((g, y));
                            }
                        }
                    }
                }
                level = next;
            }
            Ok(level.into_iter().map(|(_, q)| q).collect())
        })
        .collect();
    let pre: Vec<P2> = per?.into_iter().flatten().collect();
    let n = pre.len();
    collect_fiber(ev, p, depth, &pre, n)
}

/// Directions `[d_xσ·(1,0)]` over a fiber.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectionProbe {
    pub p: P2,
    pub fiber_size: usize,
    pub chart: usize,
    /// Normalized chart tangents, one per regular fiber element.
    pub directions: Vec<[C64; 2]>,
    pub coherence: f64,
    /// `|ω(v)| / (‖ω‖‖v‖)` for the pencil form through `[0:0:1]`.
    pub kernel_residuals: Vec<f64>,
    pub dropped: usize,
    pub notes: Vec<String>,
}

/// Normalized pencil-form contraction for a lift-level tangent `u` at `v`.
pub fn pencil_contraction(v: &[C64; 3], u: &[C64; 3]) -> Option<f64> {
    let nv = norm(v);
    let p = v.map(|x| x / nv);
    let up: [C64; 3] = {
        let a = hdot(&p, u);
        [u[0] - a * p[0], u[1] - a * p[1], u[2] - a * p[2]]
    };
    let w_norm = (p[0].norm_sqr() + p[1].norm_sqr()).sqrt();
    let un = norm(&up);
    if w_norm < 1e-12 || un == 0.0 {
        return None;
    }
    Some((p[0] * up[1] - p[1] * up[0]).norm() / (w_norm * un))
}

fn normalize_dir(t: [C64; 2]) -> [C64; 2] {
    let n = (t[0].norm_sqr() + t[1].norm_sqr()).sqrt();
    let big = if t[0].norm() >= t[1].norm() { t[0] } else { t[1] };
    let ph = big.conj() / big.norm();
    [t[0] * ph / n, t[1] * ph / n]
}

/// FS-type projective distance between two tangent directions.
pub fn direction_distance(a: &[C64; 2], b: &[C64; 2]) -> f64 {
    let ip = a[0].conj() * b[0] + a[1].conj() * b[1];
    let na = a[0].norm_sqr() + a[1].norm_sqr();
    let nb = b[0].norm_sqr() + b[1].norm_sqr();
    (1.0 - ip.norm_sqr() / (na * nb)).max(0.0).sqrt()
}

pub fn direction_probe(ev: &PoincareEvaluator, p: &P2, fiber: &FiberSet) -> Result<DirectionProbe> {
    if fiber.elements.is_empty() {
        return Err(Error::Precondition("empty fiber".into()));
    }
    let chart = p.max_index();
    let mut frames = Vec::new();
    let mut directions = Vec::new();
    let mut kernel_residuals = Vec::new();
    let mut notes = Vec::new();
    let mut dropped = 0;
    for e in &fiber.elements {
        let j = ev.sigma_jet(e.x, Some(chart))?;
        if j.cond > CRITICAL_COND {
            dropped += 1;
            notes.push(format!("critical element dropped (condition {:.3e})", j.cond));
            continue;
        }
        frames.push(j.frame_cols[0]);
        directions.push(normalize_dir(j.chart_cols[0]));
        if let Some(r) = pencil_contraction(&j.lift, &j.perp_cols[0]) {
            kernel_residuals.push(r);
        }
    }
    if frames.is_empty() {
        return Err(Error::Precondition("every fiber element is critical".into()));
    }
    let mut coherence = 0.0f64;
    for i in 0..frames.len() {
        for k in (i + 1)..frames.len() {
            coherence = coherence.max(direction_distance(&frames[i], &frames[k]));
        }
    }
    Ok(DirectionProbe {
        p: *p,
        fiber_size: fiber.elements.len(),
        chart,
        directions,
        coherence,
        kernel_residuals,
        dropped,
        notes,
    })
}

/// Weight function `h` for [`vector_field_vq`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Weight {
    One,
    Z,
    /// `Σ c·z^i w^j`.
    Poly(Vec<(u32, u32, C64)>),
}

impl Weight {
    pub fn eval(&self, x: &[C64; 2]) -> C64 {
        match self {
            Weight::One => C64::new(1.0, 0.0),
            Weight::Z => x[0],
            Weight::Poly(t) => t.iter().map(|(i, j, c)| c * x[0].powu(*i) * x[1].powu(*j)).sum(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VectorFieldValue {
    pub chart: usize,
    pub vector: [C64; 2],
    pub weight: Weight,
}

/// `Σ_x h(x) d_xσ·(1,0)` over the fiber, in chart `chart` at `p`.
pub fn vector_field_vq(ev: &PoincareEvaluator, p: &P2, fiber: &FiberSet, h: &Weight) -> Result<VectorFieldValue> {
    if fiber.elements.is_empty() {
        return Err(Error::Precondition("empty fiber".into()));
    }
    let chart = p.max_index();
    let mut acc = [cz(); 2];
    for e in &fiber.elements {
        let j = ev.sigma_jet(e.x, Some(chart))?;
        let w = h.eval(&e.x);
        acc[0] += w * j.chart_cols[0][0];
        acc[1] += w * j.chart_cols[0][1];
    }
    Ok(VectorFieldValue { chart, vector: acc, weight: h.clone() })
}

/// `v_q` with `h ≡ 1`, falling back to `h = z` when the sum cancels.
pub fn vector_field_vq_auto(ev: &PoincareEvaluator, p: &P2, fiber: &FiberSet) -> Result<VectorFieldValue> {
    let v = vector_field_vq(ev, p, fiber, &Weight::One)?;
    if (v.vector[0].norm_sqr() + v.vector[1].norm_sqr()).sqrt() >= 1e-10 {
        return Ok(v);
    }
    vector_field_vq(ev, p, fiber, &Weight::Z)
}

/// Lifted polyline `x(t)` with `σ(x(t)) = γ(t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiftedPath {
    pub params: Vec<f64>,
    pub points: Vec<[C64; 2]>,
    pub residuals: Vec<f64>,
    pub max_cond: f64,
}

fn interpolate(a: &[C64; 3], b: &[C64; 3], s: f64) -> P2 {
    let ip = hdot(a, b);
    let ph = if ip.norm() > 0.0 { ip.conj() / ip.norm() } else { C64::new(1.0, 0.0) };
    let v = [0, 1, 2].map(|k| a[k] * (1.0 - s) + b[k] * ph * s);
    P2::new(v).expect("interpolated lifts do not vanish between nearby points")
}

fn solve2(m: &[[C64; 2]; 2], r: [C64; 2]) -> Option<[C64; 2]> {
    // m holds columns
    let det = m[0][0] * m[1][1] - m[1][0] * m[0][1];
    if det.norm() == 0.0 {
        return None;
    }
    Some([(r[0] * m[1][1] - m[1][0] * r[1]) / det, (m[0][0] * r[1] - r[0] * m[0][1]) / det])
}

/// Lift a polyline `path` (in ℙ²) through σ starting at `x0`.
pub fn lift_path(ev: &PoincareEvaluator, path: &[P2], x0: [C64; 2], tol: f64) -> Result<LiftedPath> {
    if path.is_empty() {
        return Err(Error::InvalidInput("empty path".into()));
    }
    let r0 = ev.eval_sigma_raw(x0)?.point.fs_distance(&path[0]);
    if r0 > tol {
        return Err(Error::PathLift { t: 0.0, reason: format!("start residual {r0:.3e} exceeds tolerance") });
    }
    let nseg = (path.len() - 1).max(1) as f64;
    let mut out = LiftedPath { params: vec![0.0], points: vec![x0], residuals: vec![r0], max_cond: 0.0 };
    let mut x = x0;
    for (i, w) in path.windows(2).enumerate() {
        let (a, b) = (w[0].unit_lift(), w[1].unit_lift());
        let mut s = 0.0f64;
        let mut h = 1.0f64;
        while s < 1.0 {
            let s1 = (s + h).min(1.0);
            let t_glob = (i as f64 + s1) / nseg;
            let target = interpolate(&a, &b, s1);
            let k = target.max_index();
            let tc = target.chart(k).ok_or(Error::Chart { chart: k })?;
            let mut y = x;
            let mut ok = false;
            let mut res = f64::INFINITY;
            for _ in 0..10 {
                let j = ev.sigma_jet(y, Some(k))?;
                out.max_cond = out.max_cond.max(j.cond);
                if j.cond > CRITICAL_COND {
                    return Err(Error::PathLift { t: t_glob, reason: format!("σ-Jacobian condition {:.3e}", j.cond) });
                }
                res = j.point.fs_distance(&target);
                if res < 0.1 * tol {
                    ok = true;
                    break;
                }
                let cur = j.point.chart(k).ok_or(Error::Chart { chart: k })?;
                let rhs = [tc[0] - cur[0], tc[1] - cur[1]];
                let dx = solve2(&j.chart_cols, rhs)
                    .ok_or(Error::PathLift { t: t_glob, reason: "singular σ-Jacobian".into() })?;
                y = [y[0] + dx[0], y[1] + dx[1]];
            }
            // the corrected point must stay on the local branch
            let moved = sup(&[y[0] - x[0], y[1] - x[1]]);
            if ok && (h <= 1e-3 || moved < 0.5 * (1.0 + sup(&x))) {
                x = y;
                s = s1;
                out.params.push(t_glob);
                out.points.push(x);
                out.residuals.push(res);
                h = (2.0 * h).min(1.0);
            } else {
                h *= 0.5;
                if h < 1e-10 {
                    return Err(Error::PathLift { t: t_glob, reason: "step refinement exhausted".into() });
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::f_star;
    use crate::normal_form::{NormalForm, RESONANCE_TOL};
    use crate::numeric::JetMap;
    use crate::rng;
    use rand::Rng;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn model_nf(c_: f64) -> NormalForm {
        crate::normal_form::poincare_dulac_2d(&JetMap::normal_form(8, c(4.0), c(2.0), c(c_), 2), 8, RESONANCE_TOL)
            .unwrap()
    }

    pub(crate) fn f_star_point() -> P2 {
        let x0 = (1.0 + 48f64.sqrt() / 6.0).sqrt();
        let t0 = (4.0 * x0 * (x0 * x0 - 1.0)).cbrt();
        P2::new([c(x0), c(1.0), c(t0)]).unwrap()
    }

    #[test]
    fn closed_form_squares() {
        let nf = model_nf(1.0);
        let d2 = dn_closed_form(&nf, 2, false).unwrap();
        assert_eq!((d2.alpha, d2.beta, d2.gamma, d2.q), (c(16.0), c(8.0), c(4.0), 2));
        assert_eq!(dn_closed_form(&nf, 0, false).unwrap().to_jet(6), ClosedForm::identity().to_jet(6));
    }

    #[test]
    fn closed_form_matches_composition() {
        let nf = model_nf(1.0);
        let d = nf.d_jet();
        let mut acc = JetMap::identity(8);
        for _ in 0..5 {
            acc = d.compose(&acc).unwrap();
        }
        assert_eq!(dn_closed_form(&nf, 5, false).unwrap().to_jet(8), acc);
        let fwd = dn_closed_form(&nf, 7, false).unwrap();
        let inv = dn_closed_form(&nf, 7, true).unwrap();
        assert_eq!(inv.compose(&fwd).to_jet(8), JetMap::identity(8));
    }

    #[test]
    fn closed_form_requires_resonance_for_c() {
        let mut nf = model_nf(1.0);
        nf.chi1 = c(5.0);
        assert!(dn_closed_form(&nf, 2, false).is_err());
    }

    #[test]
    fn sigma_of_zero_is_base_point() {
        let ev = PoincareEvaluator::new(&f_star(), &f_star_point(), 1, Policy::default()).unwrap();
        let s = ev.eval_sigma(C64::new(0.0, 0.0).into_pair()).unwrap();
        assert!(s.point.fs_distance(&ev.a) < 1e-15);
        assert!(ev.eps > 1e-3, "{}", ev.eps);
    }

    trait Pair {
        fn into_pair(self) -> [C64; 2];
    }
    impl Pair for C64 {
        fn into_pair(self) -> [C64; 2] {
            [self, self]
        }
    }

    #[test]
    fn semiconjugacy_on_bidisc() {
        let ev = PoincareEvaluator::new(&f_star(), &f_star_point(), 1, Policy::default()).unwrap();
        let mut r = rng::seeded(11);
        for _ in 0..20 {
            let x = [
                C64::from_polar(5.0 * r.random::<f64>().sqrt(), r.random::<f64>() * std::f64::consts::TAU),
                C64::from_polar(5.0 * r.random::<f64>().sqrt(), r.random::<f64>() * std::f64::consts::TAU),
            ];
            let res = ev.semiconjugacy_residual(x).unwrap();
            assert!(res < 1e-8, "{res}");
            let s = ev.eval_sigma(x).unwrap();
            assert!(s.stability.unwrap() < s.error, "{s:?}");
        }
    }

    #[test]
    fn fiber_contains_seed() {
        let ev = PoincareEvaluator::new(&f_star(), &f_star_point(), 1, Policy::default()).unwrap();
        let x = [C64::new(0.3 * ev.eps, 0.1 * ev.eps), C64::new(-1.5 * ev.eps, 0.4 * ev.eps)];
        let s = ev.eval_sigma(x).unwrap();
        let fib = sigma_fiber(&ev, &s.point, s.depth.max(1)).unwrap();
        assert!(fib.elements.len() <= 16usize.pow(s.depth.max(1) as u32));
        assert!(fib.elements.iter().any(|e| (e.x[0] - x[0]).norm() + (e.x[1] - x[1]).norm() < 1e-8), "{fib:?}");
        for e in &fib.elements {
            assert!(e.residual < 1e-7);
        }
        eprintln!("eps {} depth {} fiber {}", ev.eps, s.depth, fib.elements.len());
    }

    fn ev_star() -> PoincareEvaluator {
        PoincareEvaluator::new(&f_star(), &f_star_point(), 1, Policy::default()).unwrap()
    }

    fn probe_seed(ev: &PoincareEvaluator) -> ([C64; 2], P2, FiberSet) {
        let x = [C64::new(0.09, 0.06), C64::new(-0.03, 0.075)];
        let s = ev.eval_sigma(x).unwrap();
        let fib = sigma_fiber(ev, &s.point, s.depth + 2).unwrap();
        (x, s.point, fib)
    }

    #[test]
    fn coherent_directions_and_pencil_kernel() {
        let ev = ev_star();
        let (_, p, fib) = probe_seed(&ev);
        assert!(fib.elements.len() >= 2);
        assert!(fib.elements.len() <= 16usize.pow(fib.depth as u32));
        let pr = direction_probe(&ev, &p, &fib).unwrap();
        assert!(pr.coherence < 1e-6, "{}", pr.coherence);
        assert!(pr.kernel_residuals.iter().all(|r| *r < 1e-6));
        for e in &fib.elements {
            assert!(ev.eval_sigma_raw(e.x).unwrap().point.fs_distance(&p) <= e.residual.max(1e-15) * 1.0001);
        }
    }

    #[test]
    fn vector_field_is_linear_and_tangent_to_probe() {
        let ev = ev_star();
        let (_, p, fib) = probe_seed(&ev);
        let single = FiberSet { elements: fib.elements[..1].to_vec(), ..fib.clone() };
        let v1 = vector_field_vq(&ev, &p, &single, &Weight::One).unwrap();
        let j = ev.sigma_jet(single.elements[0].x, Some(p.max_index())).unwrap();
        assert_eq!(v1.vector, j.chart_cols[0]);
        let h1 = Weight::Poly(vec![(1, 0, C64::new(0.5, 1.0))]);
        let h2 = Weight::Poly(vec![(0, 2, C64::new(-2.0, 0.0)), (0, 0, C64::new(1.0, 0.0))]);
        let h12 =
            Weight::Poly(vec![(1, 0, C64::new(0.5, 1.0)), (0, 2, C64::new(-2.0, 0.0)), (0, 0, C64::new(1.0, 0.0))]);
        let a = vector_field_vq(&ev, &p, &fib, &h1).unwrap().vector;
        let b = vector_field_vq(&ev, &p, &fib, &h2).unwrap().vector;
        let ab = vector_field_vq(&ev, &p, &fib, &h12).unwrap().vector;
        let scale = a[0].norm() + a[1].norm() + b[0].norm() + b[1].norm();
        for k in 0..2 {
            assert!((a[k] + b[k] - ab[k]).norm() < 1e-12 * scale);
        }
        let v = vector_field_vq_auto(&ev, &p, &fib).unwrap();
        let pr = direction_probe(&ev, &p, &fib).unwrap();
        assert!(direction_distance(&v.vector, &pr.directions[0]) < 1e-6);
    }

    #[test]
    fn constant_path_lifts_to_constant() {
        let ev = ev_star();
        let x = [C64::new(0.2, 0.1), C64::new(0.05, -0.3)];
        let p = ev.eval_sigma_raw(x).unwrap().point;
        let l = lift_path(&ev, &[p, p], x, 1e-9).unwrap();
        for y in &l.points {
            assert!(sup(&[y[0] - x[0], y[1] - x[1]]) < 1e-12);
        }
    }

    #[test]
    fn lifted_path_ends_in_fiber() {
        let ev = ev_star();
        let x0 = [C64::new(0.2, 0.1), C64::new(0.05, -0.3)];
        let x1 = [C64::new(0.35, 0.0), C64::new(-0.1, -0.2)];
        let (p0, p1) = (ev.eval_sigma_raw(x0).unwrap().point, ev.eval_sigma_raw(x1).unwrap().point);
        let path: Vec<P2> = (0..=8).map(|i| interpolate(&p0.unit_lift(), &p1.unit_lift(), i as f64 / 8.0)).collect();
        let l = lift_path(&ev, &path, x0, 1e-9).unwrap();
        assert!(l.residuals.iter().all(|r| *r < 1e-9));
        let end = *l.points.last().unwrap();
        let depth = ev.depth_for(end).unwrap().max(ev.depth_for(x1).unwrap()) + 1;
        let fib = sigma_fiber(&ev, &p1, depth).unwrap();
        let best = fib.elements.iter().map(|e| sup(&[e.x[0] - end[0], e.x[1] - end[1]])).fold(f64::INFINITY, f64::min);
        assert!(best < 1e-6, "{best}");
    }
}
