//! Koenigs and Poincaré-Dulac linearization by order-by-order jet solves,
//! the semilinear completion of germs `(h(z,w), χ₂w)`, and sampled
//! conjugacy verification.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{EndoP2, RatMap1};
use crate::error::{Error, Result};
use crate::measure::stats::ols;
use crate::numeric::jet::idx;
use crate::numeric::proj::chart_others;
use crate::numeric::{Cdd, Jet1, Jet2, JetMap, Scalar, C64, P1, P2};
use crate::rng;

/// Relative band `|χ₂^q − χ₁| < tol·|χ₁|` that counts as an exact resonance.
pub const RESONANCE_TOL: f64 = 1e-8;
/// Relative divisors below this (but above the resonance band) raise a warning.
pub const NEAR_RESONANCE_WARN: f64 = 1e-6;
/// Margin in `|χ| > 1 + tol` for dilation.
pub const DILATION_TOL: f64 = 1e-8;
/// Relative size of coefficients treated as zero in structural preconditions.
pub const STRUCTURE_TOL: f64 = 1e-12;
pub const DEFAULT_ORDER: usize = 12;
/// Sphere samples per radius in [`verify_conjugacy`].
pub const VERIFY_SAMPLES: usize = 100;

/// Horner evaluation of an ascending coefficient list on a jet.
fn poly_on_jet1<S: Scalar>(coeffs: &[C64], x: &Jet1<S>) -> Jet1<S> {
    let m = x.order();
    let mut acc = Jet1::zero(m);
    for &a in coeffs.iter().rev() {
        acc = acc.mul(x);
        acc.c[0] = acc.c[0] + S::from_c64(a);
    }
    acc
}

fn horner_s<S: Scalar>(coeffs: &[C64], x: S) -> (S, S) {
    let mut p = S::zero();
    let mut dp = S::zero();
    for &a in coeffs.iter().rev() {
        dp = dp * x + p;
        p = p * x + S::from_c64(a);
    }
    (p, dp)
}

/// Koenigs coordinate `W₀` of a repelling fixed point in the affine chart
/// `u = x − a₀`, with `W₀(0) = 0`, `W₀'(0) = 1` and `W₀∘θ = λW₀`.
#[derive(Clone, Debug)]
pub struct Koenigs<S: Scalar = C64> {
    pub a0: S,
    pub lambda: S,
    pub w: Jet1<S>,
    pub w_inv: Jet1<S>,
    /// The germ `θ(a₀+u) − a₀`.
    pub germ: Jet1<S>,
}

impl<S: Scalar> Koenigs<S> {
    pub fn to_c64(&self) -> Koenigs<C64> {
        let m = |j: &Jet1<S>| Jet1::from_coeffs(j.c.iter().map(|x| x.to_c64()).collect());
        Koenigs {
            a0: self.a0.to_c64(),
            lambda: self.lambda.to_c64(),
            w: m(&self.w),
            w_inv: m(&self.w_inv),
            germ: m(&self.germ),
        }
    }

    /// Max coefficient of `W₀∘germ − λW₀` over all orders.
    pub fn jet_residual(&self) -> f64 {
        match self.w.compose(&self.germ) {
            Ok(c) => c.sub(&self.w.scale(self.lambda)).c.iter().map(|x| x.modulus()).fold(0.0, f64::max),
            Err(_) => f64::INFINITY,
        }
    }
}

/// Koenigs linearization at a finite fixed point `a0` of `θ`, to `order`.
impl Koenigs<C64> {
    /// Root-test estimate of the radius of convergence of `W`.
    pub fn convergence_radius(&self) -> f64 {
        let m = self.w.order();
        let best = ((m / 2).max(2)..=m).map(|k| self.w.coeff(k).norm().powf(1.0 / k as f64)).fold(0.0, f64::max);
        if best == 0.0 {
            f64::INFINITY
        } else {
            1.0 / best
        }
    }

    /// Linearizing coordinate on the disc of radius `fraction·R` around `a₀`.
    pub fn local_coordinate(&self, fraction: f64) -> Result<crate::measure::LocalCoordinate> {
        let r = fraction * self.convergence_radius();
        if !r.is_finite() || r <= 0.0 {
            return Err(Error::Precondition("Koenigs series has no usable radius".into()));
        }
        crate::measure::LocalCoordinate::new(self.a0, self.w.clone(), r)
    }
}

pub fn koenigs_1d(theta: &RatMap1, a0: &P1, order: usize) -> Result<Koenigs<C64>> {
    koenigs_1d_s::<C64>(theta, a0, order)
}

pub fn koenigs_1d_s<S: Scalar>(theta: &RatMap1, a0: &P1, order: usize) -> Result<Koenigs<S>> {
    let x0 = a0.affine().ok_or(Error::Chart { chart: 1 })?;
    let (p, q) = theta.affine_coeffs();
    // polish the fixed point of P − xQ in S
    let mut a = S::from_c64(x0);
    for _ in 0..6 {
        let (pv, dp) = horner_s(&p, a);
        let (qv, dq) = horner_s(&q, a);
        let g = pv - a * qv;
        let dg = dp - qv - a * dq;
        if dg.is_zero() {
            break;
        }
        a = a - g / dg;
    }
    let u = {
        let mut j = Jet1::var(order);
        j.c[0] = a;
        j
    };
    let mut s = poly_on_jet1(&p, &u).div(&poly_on_jet1(&q, &u))?;
    s.c[0] = S::zero();
    let lambda = s.coeff(1);
    if lambda.modulus() <= 1.0 + DILATION_TOL {
        return Err(Error::NotRepelling { modulus: lambda.modulus() });
    }
    let mut w = Jet1::var(order);
    for k in 2..=order {
        let e = w.compose(&s)?.sub(&w.scale(lambda));
        let div = lambda.powu(k as u32) - lambda;
        w.c[k] = -e.coeff(k) / div;
    }
    let w_inv = w.inverse()?;
    Ok(Koenigs { a0: a, lambda, w, w_inv, germ: s })
}

/// A germ of `f^N` at a periodic point in an affine chart.
#[derive(Clone, Debug)]
pub struct Germ<S: Scalar = C64> {
    /// `f^N(center + u) − center` in chart coordinates.
    pub jet: JetMap<S>,
    /// Chart coordinates of the orbit, one per step, in the chosen charts.
    pub orbit: Vec<[S; 2]>,
    pub charts: Vec<usize>,
    pub period: usize,
    /// Chart-coordinate size of `f^N(center) − center` after polishing.
    pub fixed_point_residual: f64,
}

impl<S: Scalar> Germ<S> {
    pub fn center(&self) -> [S; 2] {
        self.orbit[0]
    }

    pub fn chart(&self) -> usize {
        self.charts[0]
    }

    pub fn to_c64(&self) -> Germ<C64> {
        Germ {
            jet: self.jet.to_c64(),
            orbit: self.orbit.iter().map(|c| [c[0].to_c64(), c[1].to_c64()]).collect(),
            charts: self.charts.clone(),
            period: self.period,
            fixed_point_residual: self.fixed_point_residual,
        }
    }

    /// Base point in ℙ².
    pub fn point(&self) -> Result<P2> {
        let c = self.center();
        P2::new(crate::numeric::proj::from_chart([c[0].to_c64(), c[1].to_c64()], self.chart()))
    }

    /// `u ↦ f^N(center + u) − center` evaluated directly from the lift.
    pub fn eval_map(&self, f: &EndoP2, u: [S; 2]) -> Result<[S; 2]> {
        let mut x = [self.orbit[0][0] + u[0], self.orbit[0][1] + u[1]];
        for step in 0..self.period {
            let (k_in, k_out) = (self.charts[step], self.charts[(step + 1) % self.period]);
            let y = f.eval_lift_s(&lift_s(x, k_in));
            if y[k_out].is_zero() {
                return Err(Error::Chart { chart: k_out });
            }
            let [a, b] = chart_others(k_out);
            x = [y[a] / y[k_out], y[b] / y[k_out]];
        }
        Ok([x[0] - self.orbit[0][0], x[1] - self.orbit[0][1]])
    }
}

fn lift_s<S: Scalar>(x: [S; 2], k: usize) -> [S; 3] {
    let [a, b] = chart_others(k);
    let mut v = [S::zero(); 3];
    v[k] = S::one();
    v[a] = x[0];
    v[b] = x[1];
    v
}

/// Jet of the chart map from chart `k_in` around `c_in` to chart `k_out`
/// minus `c_out`.
fn chart_step<S: Scalar>(
    f: &EndoP2,
    c_in: [S; 2],
    k_in: usize,
    c_out: [S; 2],
    k_out: usize,
    order: usize,
) -> Result<JetMap<S>> {
    let [a, b] = chart_others(k_in);
    let mut v: [Jet2<S>; 3] = std::array::from_fn(|_| Jet2::zero(order));
    v[k_in] = Jet2::constant(order, S::one());
    v[a] = Jet2::var(order, 0).add(&Jet2::constant(order, c_in[0]));
    v[b] = Jet2::var(order, 1).add(&Jet2::constant(order, c_in[1]));
    let comps = f.components();
    let fj: Vec<Jet2<S>> = comps.iter().map(|p| p.eval_jets(&v)).collect();
    if fj[k_out].coeff(0, 0).is_zero() {
        return Err(Error::Chart { chart: k_out });
    }
    let r = fj[k_out].recip()?;
    let [oa, ob] = chart_others(k_out);
    Ok(JetMap::new(
        fj[oa].mul(&r).sub(&Jet2::constant(order, c_out[0])),
        fj[ob].mul(&r).sub(&Jet2::constant(order, c_out[1])),
    ))
}

fn orbit_germ<S: Scalar>(f: &EndoP2, c0: [S; 2], charts: &[usize], order: usize) -> Result<(JetMap<S>, Vec<[S; 2]>)> {
    let n = charts.len();
    let mut orbit = vec![c0];
    for step in 0..n - 1 {
        let y = f.eval_lift_s(&lift_s(orbit[step], charts[step]));
        let k = charts[step + 1];
        if y[k].is_zero() {
            return Err(Error::Chart { chart: k });
        }
        let [a, b] = chart_others(k);
        orbit.push([y[a] / y[k], y[b] / y[k]]);
    }
    let mut g = JetMap::identity(order);
    for step in 0..n {
        let next = if step + 1 == n { c0 } else { orbit[step + 1] };
        let s = chart_step(f, orbit[step], charts[step], next, charts[(step + 1) % n], order)?;
        // intermediate constants are roundoff; the closing constant stays in `s`
        g = s.compose(&strip_constant(&g))?;
    }
    Ok((g, orbit))
}

fn constant<S: Scalar>(g: &JetMap<S>) -> [S; 2] {
    [g.f[0].coeff(0, 0), g.f[1].coeff(0, 0)]
}

fn strip_constant<S: Scalar>(g: &JetMap<S>) -> JetMap<S> {
    let mut h = g.clone();
    h.f[0].set(0, 0, S::zero());
    h.f[1].set(0, 0, S::zero());
    h
}

/// Germ of `f^period` at a periodic point `p`, in chart `chart` (default:
/// the largest coordinate of `p`). The periodic point is first polished by
/// Newton's method in the scalar type `S`.
pub fn germ_at<S: Scalar>(f: &EndoP2, p: &P2, period: usize, order: usize, chart: Option<usize>) -> Result<Germ<S>> {
    if period == 0 {
        return Err(Error::InvalidInput("period must be at least 1".into()));
    }
    let mut charts = vec![chart.unwrap_or_else(|| p.max_index())];
    let mut y = *p;
    for _ in 1..period {
        y = f.eval(&y)?;
        charts.push(y.max_index());
    }
    let k0 = charts[0];
    let cc = p.chart(k0).ok_or(Error::Chart { chart: k0 })?;
    let mut c0 = [S::from_c64(cc[0]), S::from_c64(cc[1])];
    let scale = 1.0 + cc[0].norm().max(cc[1].norm());
    let mut resid = f64::INFINITY;
    for _ in 0..12 {
        let (g, _) = orbit_germ(f, c0, &charts, 1)?;
        let g0 = constant(&g);
        resid = g0[0].modulus().max(g0[1].modulus());
        if resid <= 16.0 * S::epsilon() * scale {
            break;
        }
        let l = g.linear_part();
        let m = [[l[0][0] - S::one(), l[0][1]], [l[1][0], l[1][1] - S::one()]];
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        if det.is_zero() {
            return Err(Error::Singular { det: 0.0 });
        }
        let d0 = (m[1][1] * g0[0] - m[0][1] * g0[1]) / det;
        let d1 = (m[0][0] * g0[1] - m[1][0] * g0[0]) / det;
        c0 = [c0[0] - d0, c0[1] - d1];
    }
    if resid > 1e-8 * scale {
        return Err(Error::Newton(format!("periodic point did not polish (residual {resid:.3e})")));
    }
    let (jet, orbit) = orbit_germ(f, c0, &charts, order)?;
    let jet = strip_constant(&jet);
    Ok(Germ { jet, orbit, charts, period, fixed_point_residual: resid })
}

/// Solved Poincaré-Dulac data: `ξ∘germ = D∘ξ` with `D = (χ₁z + c w^q, χ₂w)`.
#[derive(Clone, Debug)]
pub struct NormalForm<S: Scalar = C64> {
    pub chi1: S,
    pub chi2: S,
    pub q: Option<usize>,
    pub c: S,
    pub xi: JetMap<S>,
    pub xi_inv: JetMap<S>,
    pub order: usize,
    /// Max coefficient of `ξ∘germ − D∘ξ` relative to the largest
    /// coefficient of `ξ∘germ` (at least 1).
    pub homological_residual: f64,
    pub warnings: Vec<String>,
}

impl<S: Scalar> NormalForm<S> {
    pub fn d_jet(&self) -> JetMap<S> {
        JetMap::normal_form(self.order, self.chi1, self.chi2, self.c, self.q.unwrap_or(0))
    }

    pub fn d_eval(&self, x: [S; 2]) -> [S; 2] {
        let mut z = self.chi1 * x[0];
        if let Some(q) = self.q {
            z = z + self.c * x[1].powu(q as u32);
        }
        [z, self.chi2 * x[1]]
    }

    pub fn to_c64(&self) -> NormalForm<C64> {
        NormalForm {
            chi1: self.chi1.to_c64(),
            chi2: self.chi2.to_c64(),
            q: self.q,
            c: self.c.to_c64(),
            xi: self.xi.to_c64(),
            xi_inv: self.xi_inv.to_c64(),
            order: self.order,
            homological_residual: self.homological_residual,
            warnings: self.warnings.clone(),
        }
    }
}

fn eigenvalues<S: Scalar>(l: [[S; 2]; 2]) -> [S; 2] {
    let lc = [[l[0][0].to_c64(), l[0][1].to_c64()], [l[1][0].to_c64(), l[1][1].to_c64()]];
    let e = crate::dynamics::eig2(&lc);
    let tr = l[0][0] + l[1][1];
    let det = l[0][0] * l[1][1] - l[0][1] * l[1][0];
    e.map(|x| {
        let mut z = S::from_c64(x);
        for _ in 0..3 {
            let d = z + z - tr;
            if d.is_zero() {
                break;
            }
            z = z - (z * z - tr * z + det) / d;
        }
        z
    })
}

/// Eigenvector of `l` for `chi`, scaled so its largest entry is 1.
fn eigenvector<S: Scalar>(l: [[S; 2]; 2], chi: S) -> [S; 2] {
    let v1 = [l[0][1], chi - l[0][0]];
    let v2 = [chi - l[1][1], l[1][0]];
    let n = |v: &[S; 2]| v[0].modulus().max(v[1].modulus());
    let v = if n(&v1) >= n(&v2) { v1 } else { v2 };
    let s = if v[0].modulus() >= v[1].modulus() { v[0] } else { v[1] };
    [v[0] / s, v[1] / s]
}

fn pow_mono<S: Scalar>(chi1: S, chi2: S, i: usize, j: usize) -> S {
    chi1.powu(i as u32) * chi2.powu(j as u32)
}

/// Order-by-order Poincaré-Dulac solve for a dilating germ fixing 0.
pub fn poincare_dulac_2d<S: Scalar>(germ: &JetMap<S>, order: usize, tol_resonance: f64) -> Result<NormalForm<S>> {
    let m = order.min(germ.order());
    if !germ.f[0].has_zero_constant() || !germ.f[1].has_zero_constant() {
        return Err(Error::Precondition("germ must fix 0".into()));
    }
    let l = germ.linear_part();
    let mut e = eigenvalues(l);
    if e[1].modulus() > e[0].modulus() {
        e.swap(0, 1);
    }
    let [chi1, chi2] = e;
    if chi2.modulus() <= 1.0 + DILATION_TOL {
        return Err(Error::NotRepelling { modulus: chi2.modulus() });
    }
    let lscale = l.iter().flatten().map(|x| x.modulus()).fold(0.0, f64::max);
    let coincident = (chi1 - chi2).modulus() <= 1e3 * S::epsilon() * lscale;
    let offdiag = l[0][1].modulus().max(l[1][0].modulus());
    let p = if coincident {
        if offdiag > 1e3 * S::epsilon() * lscale {
            return Err(Error::Precondition("linear part is a Jordan block".into()));
        }
        [[S::one(), S::zero()], [S::zero(), S::one()]]
    } else {
        let v1 = eigenvector(l, chi1);
        let v2 = eigenvector(l, chi2);
        [[v1[0], v2[0]], [v1[1], v2[1]]]
    };
    let det = p[0][0] * p[1][1] - p[0][1] * p[1][0];
    let pinv = [[p[1][1] / det, -p[0][1] / det], [-p[1][0] / det, p[0][0] / det]];
    let g = JetMap::linear(m, pinv).compose(&germ.truncate(m).compose(&JetMap::linear(m, p))?)?;

    let q = (2..=m).find(|&q| (chi2.powu(q as u32) - chi1).modulus() < tol_resonance * chi1.modulus());
    let mut warnings = Vec::new();
    let mut c = S::zero();
    let mut xi = JetMap::identity(m);
    let chis = [chi1, chi2];
    let cscale = g.max_abs_from(0).max(1.0);
    for k in 1..=m {
        let d = JetMap::normal_form(m, chi1, chi2, c, q.unwrap_or(0));
        let err = xi.compose(&g)?.sub(&d.compose(&xi)?);
        for (lc, chi_l) in chis.iter().enumerate() {
            for i in (0..=k).rev() {
                let j = k - i;
                if k == 1 && ((lc == 0 && i == 1) || (lc == 1 && j == 1)) {
                    continue;
                }
                let ev = err.f[lc].coeff(i, j);
                if lc == 0 && i == 0 && Some(j) == q {
                    c = ev;
                    continue;
                }
                let div = pow_mono(chi1, chi2, i, j) - *chi_l;
                let rel = div.modulus() / chi_l.modulus();
                if rel < tol_resonance {
                    if k == 1 && ev.modulus() <= 1e3 * S::epsilon() * cscale {
                        continue;
                    }
                    return Err(Error::IllConditioned { i, j, component: lc, divisor: div.modulus() });
                }
                if rel < NEAR_RESONANCE_WARN {
                    warnings.push(format!("near-resonant divisor {:.3e} at ({i},{j}) component {lc}", div.modulus()));
                }
                let cur = xi.f[lc].coeff(i, j);
                xi.f[lc].set(i, j, cur - ev / div);
            }
        }
    }
    let xi = xi.compose(&JetMap::linear(m, pinv))?;
    let d = JetMap::normal_form(m, chi1, chi2, c, q.unwrap_or(0));
    let germ_m = germ.truncate(m);
    let lhs = xi.compose(&germ_m)?;
    let homological_residual = lhs.sub(&d.compose(&xi)?).max_abs_from(0) / lhs.max_abs_from(0).max(1.0);
    let xi_inv = xi.inverse()?;
    if q.is_none() {
        c = S::zero();
    }
    Ok(NormalForm { chi1, chi2, q, c, xi, xi_inv, order: m, homological_residual, warnings })
}

trait Truncate {
    fn truncate(&self, m: usize) -> Self;
}

impl<S: Scalar> Truncate for JetMap<S> {
    fn truncate(&self, m: usize) -> Self {
        JetMap::new(self.f[0].truncate(m), self.f[1].truncate(m))
    }
}

/// Output of [`semilinearize_completion`]: `ξ̃ = (Z̃, w)` with
/// `ξ̃∘germ = D̃∘ξ̃`, `D̃ = (χ₁z + c̃w^q̃, χ₂w)`.
#[derive(Clone, Debug)]
pub struct Semilinear<S: Scalar = C64> {
    pub xi: JetMap<S>,
    pub d: JetMap<S>,
    pub chi1: S,
    pub chi2: S,
    pub q: Option<usize>,
    pub c: S,
    pub residual: f64,
}

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Linearize the first component of a germ `(h(z,w), χ₂w)` while keeping
/// the second coordinate `w` untouched.
pub fn semilinearize_completion<S: Scalar>(
    germ: &JetMap<S>,
    order: usize,
    tol_resonance: f64,
) -> Result<Semilinear<S>> {
    let m = order.min(germ.order());
    let g2 = &germ.f[1];
    let chi2 = g2.coeff(0, 1);
    let scale = germ.max_abs_from(0).max(1.0);
    for k in 0..=m {
        for i in 0..=k {
            let j = k - i;
            if (i, j) == (0, 1) {
                continue;
            }
            let v = g2.coeff(i, j).modulus();
            if v > STRUCTURE_TOL * scale {
                return Err(Error::Precondition(format!(
                    "second component is not χ₂·w: coefficient of z^{i} w^{j} is {v:.3e}"
                )));
            }
        }
    }
    if germ.f[0].coeff(0, 0).modulus() > STRUCTURE_TOL * scale {
        return Err(Error::Precondition("germ must fix 0".into()));
    }
    let chi1 = germ.f[0].coeff(1, 0);
    let beta = germ.f[0].coeff(0, 1);
    if !(chi1.modulus() > chi2.modulus() && chi2.modulus() > 1.0 + DILATION_TOL) {
        return Err(Error::Precondition(format!(
            "need |∂_z h(0)| > |χ₂| > 1, got {:.6} and {:.6}",
            chi1.modulus(),
            chi2.modulus()
        )));
    }
    let mut g = JetMap::new(germ.f[0].truncate(m), Jet2::monomial(m, 0, 1, chi2));
    g.f[0].set(0, 0, S::zero());
    let q = (2..=m).find(|&q| (chi2.powu(q as u32) - chi1).modulus() < tol_resonance * chi1.modulus());
    let mut c = S::zero();
    let mut z = Jet2::var(m, 0);
    for k in 1..=m {
        let mut rhs = JetMap::new(z.clone(), Jet2::var(m, 1)).f[0].compose(&g.f[0], &g.f[1])?;
        let mut lin = z.scale(chi1);
        if let Some(qq) = q {
            let cur = lin.coeff(0, qq);
            lin.set(0, qq, cur + c);
        }
        rhs = rhs.sub(&lin);
        let mut sol: Vec<S> = vec![S::zero(); k + 1];
        for i in (0..=k).rev() {
            let j = k - i;
            if k == 1 && i == 1 {
                continue;
            }
            let mut acc = rhs.coeff(i, j);
            for ip in (i + 1)..=k {
                if sol[ip].is_zero() {
                    continue;
                }
                let t = S::from_f64(binom(ip, i))
                    * chi1.powu(i as u32)
                    * beta.powu((ip - i) as u32)
                    * chi2.powu((k - ip) as u32);
                acc = acc + sol[ip] * t;
            }
            if i == 0 && Some(j) == q {
                c = acc;
                continue;
            }
            let div = pow_mono(chi1, chi2, i, j) - chi1;
            if div.modulus() < tol_resonance * chi1.modulus() {
                return Err(Error::IllConditioned { i, j, component: 0, divisor: div.modulus() });
            }
            sol[i] = -acc / div;
        }
        for (i, v) in sol.into_iter().enumerate() {
            if !v.is_zero() {
                let cur = z.coeff(i, k - i);
                z.set(i, k - i, cur + v);
            }
        }
    }
    let xi = JetMap::new(z, Jet2::var(m, 1));
    let d = JetMap::normal_form(m, chi1, chi2, c, q.unwrap_or(0));
    let gm = JetMap::new(germ.f[0].truncate(m), germ.f[1].truncate(m));
    let residual = xi.compose(&gm)?.sub(&d.compose(&xi)?).max_abs_from(0);
    Ok(Semilinear { xi, d, chi1, chi2, q, c, residual })
}

/// Sampled conjugacy residuals `max ‖ξ(f(p)) − D(ξ(p))‖` on spheres.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConjugacyReport {
    pub radii: Vec<f64>,
    pub residuals: Vec<f64>,
    pub slope: f64,
    pub samples: usize,
    pub convergence_radius: f64,
    pub seed: u64,
}

/// Cauchy-Hadamard root-test estimate of the convergence radius of a jet
/// map from its upper half of homogeneous degrees.
pub fn convergence_radius<S: Scalar>(j: &JetMap<S>) -> f64 {
    let m = j.order();
    let mut best = 0.0f64;
    for k in (m / 2).max(2)..=m {
        let mut mx = 0.0f64;
        for comp in &j.f {
            for i in 0..=k {
                let v = comp.coeffs()[idx(i, k - i)].modulus();
                mx = mx.max(v);
            }
        }
        if mx > 0.0 {
            best = best.max(mx.powf(1.0 / k as f64));
        }
    }
    if best == 0.0 {
        f64::INFINITY
    } else {
        1.0 / best
    }
}

fn sphere_point<R: Rng + ?Sized>(r: &mut R, radius: f64) -> [C64; 2] {
    let g = [crate::numeric::proj::gaussian_c(r), crate::numeric::proj::gaussian_c(r)];
    let n = (g[0].norm_sqr() + g[1].norm_sqr()).sqrt();
    [g[0] * (radius / n), g[1] * (radius / n)]
}

/// Residual report for a chart map `f` against `nf` at the given radii.
pub fn verify_conjugacy<S: Scalar>(
    f: impl Fn([S; 2]) -> Result<[S; 2]>,
    nf: &NormalForm<S>,
    radii: &[f64],
    samples: usize,
    seed: u64,
) -> Result<ConjugacyReport> {
    let cr = convergence_radius(&nf.xi);
    if let Some(&r) = radii.iter().find(|&&r| r >= 0.5 * cr) {
        return Err(Error::Precondition(format!(
            "radius {r} outside the reliable domain (convergence radius estimate {cr:.3e})"
        )));
    }
    let mut rg = rng::seeded(seed);
    let mut residuals = Vec::with_capacity(radii.len());
    for &r in radii {
        let mut worst = 0.0f64;
        for _ in 0..samples {
            let p = sphere_point(&mut rg, r).map(S::from_c64);
            let fp = f(p)?;
            let a = nf.xi.eval(fp[0], fp[1]);
            let b = nf.d_eval(nf.xi.eval(p[0], p[1]));
            let d0 = (a[0] - b[0]).modulus();
            let d1 = (a[1] - b[1]).modulus();
            worst = worst.max((d0 * d0 + d1 * d1).sqrt());
        }
        residuals.push(worst);
    }
    let lx: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
    let ly: Vec<f64> = residuals.iter().map(|r| r.max(1e-300).ln()).collect();
    let slope = if radii.len() >= 2 { ols(&lx, &ly).0 } else { f64::NAN };
    Ok(ConjugacyReport { radii: radii.to_vec(), residuals, slope, samples, convergence_radius: cr, seed })
}

/// Dense coefficient table of a jet map, graded layout `k(k+1)/2 + j` for
/// the monomial `z^i w^j`, `k = i + j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JetTable {
    pub order: usize,
    pub components: [Vec<[f64; 2]>; 2],
}

impl JetTable {
    pub fn from_jet<S: Scalar>(j: &JetMap<S>) -> Self {
        let t = |c: &Jet2<S>| {
            c.coeffs()
                .iter()
                .map(|x| {
                    let z = x.to_c64();
                    [z.re, z.im]
                })
                .collect()
        };
        JetTable { order: j.order(), components: [t(&j.f[0]), t(&j.f[1])] }
    }

    pub fn to_jet(&self) -> Result<JetMap> {
        let mk = |v: &Vec<[f64; 2]>| -> Result<Jet2> {
            let mut j = Jet2::zero(self.order);
            if v.len() != j.coeffs().len() {
                return Err(Error::InvalidInput("jet table length does not match its order".into()));
            }
            for k in 0..=self.order {
                for i in 0..=k {
                    let e = v[idx(i, k - i)];
                    j.set(i, k - i, C64::new(e[0], e[1]));
                }
            }
            Ok(j)
        };
        Ok(JetMap::new(mk(&self.components[0])?, mk(&self.components[1])?))
    }
}

/// Serializable normal-form record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalFormData {
    pub chi1: [f64; 2],
    pub chi2: [f64; 2],
    pub q: Option<usize>,
    pub c: [f64; 2],
    pub order: usize,
    pub period: usize,
    pub chart: Option<usize>,
    pub base_point: Option<P2>,
    pub homological_residual: f64,
    pub warnings: Vec<String>,
    pub xi: JetTable,
    pub xi_inv: JetTable,
}

impl NormalFormData {
    pub fn new<S: Scalar>(nf: &NormalForm<S>, base: Option<(&P2, usize, usize)>) -> Self {
        let z = |x: S| {
            let c = x.to_c64();
            [c.re, c.im]
        };
        NormalFormData {
            chi1: z(nf.chi1),
            chi2: z(nf.chi2),
            q: nf.q,
            c: z(nf.c),
            order: nf.order,
            period: base.map(|b| b.2).unwrap_or(1),
            chart: base.map(|b| b.1),
            base_point: base.map(|b| *b.0),
            homological_residual: nf.homological_residual,
            warnings: nf.warnings.clone(),
            xi: JetTable::from_jet(&nf.xi),
            xi_inv: JetTable::from_jet(&nf.xi_inv),
        }
    }

    pub fn to_normal_form(&self) -> Result<NormalForm> {
        let c = |v: [f64; 2]| C64::new(v[0], v[1]);
        Ok(NormalForm {
            chi1: c(self.chi1),
            chi2: c(self.chi2),
            q: self.q,
            c: c(self.c),
            xi: self.xi.to_jet()?,
            xi_inv: self.xi_inv.to_jet()?,
            order: self.order,
            homological_residual: self.homological_residual,
            warnings: self.warnings.clone(),
        })
    }
}

/// Germ plus normal form at a periodic point of `f`, solved in
/// double-double precision.
#[derive(Clone, Debug)]
pub struct PointNormalForm {
    pub germ: Germ<Cdd>,
    pub nf: NormalForm<Cdd>,
}

impl PointNormalForm {
    pub fn data(&self) -> Result<NormalFormData> {
        let p = self.germ.point()?;
        Ok(NormalFormData::new(&self.nf, Some((&p, self.germ.chart(), self.germ.period))))
    }
}

pub fn normal_form_at(
    f: &EndoP2,
    p: &P2,
    period: usize,
    order: usize,
    chart: Option<usize>,
) -> Result<PointNormalForm> {
    let germ = germ_at::<Cdd>(f, p, period, order, chart)?;
    let nf = poincare_dulac_2d(&germ.jet, order, RESONANCE_TOL)?;
    Ok(PointNormalForm { germ, nf })
}

/// For a skew product at a fixed point `p` over a repelling base fixed point:
/// the germ in coordinates `(t-offset, W₀(z-offset))` of the pencil chart
/// `w = 1`, whose second component is linear by construction.
pub fn skew_semilinear_germ(f: &EndoP2, p: &P2, order: usize) -> Result<(JetMap<Cdd>, Koenigs<Cdd>)> {
    let base = f.base().ok_or(Error::NotSkew("skew_semilinear_germ"))?;
    let germ = germ_at::<Cdd>(f, p, 1, order, Some(1))?;
    let x0 = P1::from_affine(germ.center()[0].to_c64());
    let kz = koenigs_1d_s::<Cdd>(base, &x0, order)?;
    // chart 1 coordinates are (z, t); Φ(u, W) = (W₀⁻¹(W), u)
    let prm = JetMap::new(kz.w_inv.compose2(&Jet2::var(order, 1))?, Jet2::var(order, 0));
    let g = germ.jet.compose(&prm)?;
    let out = JetMap::new(g.f[1].clone(), kz.w.compose2(&g.f[0])?);
    Ok((out, kz))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{f_star, lattes_lemniscatic, power_map};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c64(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn rand_jet(rng: &mut ChaCha8Rng, m: usize, scale: f64) -> Jet2 {
        let mut j = Jet2::zero(m);
        for k in 2..=m {
            for i in 0..=k {
                j.set(i, k - i, C64::new(rng.random_range(-scale..scale), rng.random_range(-scale..scale)));
            }
        }
        j
    }

    fn lattes_real_fixed_point() -> f64 {
        (1.0 + 48f64.sqrt() / 6.0).sqrt()
    }

    #[test]
    fn koenigs_of_square_map_is_log_series() {
        let k = koenigs_1d(&power_map(2), &P1::from_affine(c64(1.0)), 10).unwrap();
        assert_eq!(k.w.coeff(1), c64(1.0));
        for n in 1..=10 {
            let s = if n % 2 == 1 { 1.0 } else { -1.0 };
            assert!((k.w.coeff(n) - c64(s / n as f64)).norm() < 1e-13, "{n}: {}", k.w.coeff(n));
        }
        assert!(k.jet_residual() < 1e-13);
    }

    #[test]
    fn koenigs_lattes_residual_on_circle() {
        let theta = lattes_lemniscatic();
        let x0 = lattes_real_fixed_point();
        let k = koenigs_1d(&theta, &P1::from_affine(c64(x0)), 24).unwrap();
        assert!((k.lambda.norm() - 2.0).abs() < 1e-10);
        let mut worst = 0.0f64;
        for s in 0..64 {
            let u = C64::from_polar(1e-2, s as f64 * std::f64::consts::TAU / 64.0);
            let lhs = k.w.eval(theta.eval_affine(k.a0 + u) - k.a0);
            let rhs = k.lambda * k.w.eval(u);
            worst = worst.max((lhs - rhs).norm());
        }
        assert!(worst < 1e-10, "{worst}");
    }

    #[test]
    fn koenigs_rejects_attracting_point() {
        let r = koenigs_1d(&power_map(2), &P1::from_affine(c64(0.0)), 5);
        assert!(matches!(r, Err(Error::NotRepelling { .. })));
    }

    #[test]
    fn normal_form_germ_is_its_own_normal_form() {
        let g = JetMap::normal_form(8, c64(4.0), c64(2.0), c64(1.0), 2);
        let nf = poincare_dulac_2d(&g, 8, RESONANCE_TOL).unwrap();
        assert_eq!(nf.q, Some(2));
        assert!((nf.c - c64(1.0)).norm() < 1e-14);
        assert!(nf.xi.sub(&JetMap::identity(8)).max_abs_from(0) < 1e-14);
    }

    #[test]
    fn non_resonant_round_trip() {
        let m = 8;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut a = rand_jet(&mut rng, m, 0.3);
        let mut b = rand_jet(&mut rng, m, 0.3);
        a.set(1, 0, c64(1.0));
        a.set(0, 1, c64(0.2));
        b.set(0, 1, c64(1.0));
        b.set(1, 0, c64(-0.1));
        let x0 = JetMap::new(a, b);
        let d = JetMap::normal_form(m, c64(3.0), c64(2.0), c64(0.0), 0);
        let germ = x0.compose(&d).unwrap().compose(&x0.inverse().unwrap()).unwrap();
        let nf = poincare_dulac_2d(&germ, m, RESONANCE_TOL).unwrap();
        assert_eq!(nf.q, None);
        assert_eq!(nf.c, c64(0.0));
        let id = nf.xi.compose(&germ).unwrap().compose(&nf.xi_inv).unwrap().sub(&nf.d_jet());
        assert!(id.max_abs_from(0) < 1e-9, "{}", id.max_abs_from(0));
        assert!(nf.homological_residual < 1e-10);
    }

    #[test]
    fn resonant_round_trip() {
        let m = 8;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut a = rand_jet(&mut rng, m, 0.3);
        let mut b = rand_jet(&mut rng, m, 0.3);
        a.set(1, 0, c64(1.0));
        a.set(0, 1, c64(0.3));
        b.set(0, 1, c64(1.0));
        b.set(1, 0, c64(0.25));
        let x0 = JetMap::new(a, b);
        let d = JetMap::normal_form(m, c64(4.0), c64(2.0), c64(1.0), 2);
        let germ = x0.compose(&d).unwrap().compose(&x0.inverse().unwrap()).unwrap();
        let nf = poincare_dulac_2d(&germ, m, RESONANCE_TOL).unwrap();
        assert_eq!(nf.q, Some(2));
        assert!(((nf.chi2 * nf.chi2) - nf.chi1).norm() < 1e-10);
        assert!(nf.c.norm() > 1e-6);
        let id = nf.xi.compose(&germ).unwrap().compose(&nf.xi_inv).unwrap().sub(&nf.d_jet());
        assert!(id.max_abs_from(0) < 1e-9, "{}", id.max_abs_from(0));
    }

    #[test]
    fn near_resonance_is_rejected() {
        let m = 4;
        let chi2 = c64(2.0);
        let chi1 = c64(4.0 + 1e-10);
        let mut g = JetMap::normal_form(m, chi1, chi2, c64(0.0), 0);
        g.f[0].set(0, 2, c64(1.0));
        // 4 + 1e-10 is inside the resonance band: c absorbs the term
        let nf = poincare_dulac_2d(&g, m, RESONANCE_TOL).unwrap();
        assert_eq!(nf.q, Some(2));
        // a wider miss lies between the band and the warning level
        let chi1 = c64(4.0 + 1e-6);
        let g = JetMap::normal_form(m, chi1, chi2, c64(0.0), 0);
        let nf = poincare_dulac_2d(&g, m, RESONANCE_TOL).unwrap();
        assert!(!nf.warnings.is_empty());
        assert_eq!(nf.q, None);
    }

    #[test]
    fn non_dilating_germ_is_rejected() {
        let g = JetMap::normal_form(4, c64(3.0), c64(0.5), c64(0.0), 0);
        assert!(matches!(poincare_dulac_2d(&g, 4, RESONANCE_TOL), Err(Error::NotRepelling { .. })));
    }

    #[test]
    fn eigenvalues_are_ordered() {
        let g = JetMap::linear(3, [[c64(2.0), c64(1.0)], [c64(0.0), c64(5.0)]]);
        let nf = poincare_dulac_2d(&g, 3, RESONANCE_TOL).unwrap();
        assert!(nf.chi1.norm() >= nf.chi2.norm());
        assert!((nf.chi1 - c64(5.0)).norm() < 1e-14);
    }

    #[test]
    fn semilinear_identity_case() {
        let g = JetMap::normal_form(6, c64(4.0), c64(2.0), c64(1.0), 2);
        let s = semilinearize_completion(&g, 6, RESONANCE_TOL).unwrap();
        assert!(s.xi.sub(&JetMap::identity(6)).max_abs_from(0) < 1e-15);
        assert_eq!(s.q, Some(2));
    }

    #[test]
    fn semilinear_keeps_second_coordinate() {
        let m = 8;
        let mut a = Jet2::monomial(m, 1, 0, c64(4.0));
        a.set(1, 1, c64(1.0));
        a.set(0, 2, c64(1.0));
        let g = JetMap::new(a, Jet2::monomial(m, 0, 1, c64(2.0)));
        let s = semilinearize_completion(&g, m, RESONANCE_TOL).unwrap();
        assert_eq!(s.xi.f[1], Jet2::var(m, 1));
        assert_eq!(s.d.f[1], Jet2::monomial(m, 0, 1, c64(2.0)));
        assert!(s.residual < 1e-12, "{}", s.residual);
    }

    #[test]
    fn semilinear_rejects_coupled_second_component() {
        let m = 5;
        let mut b = Jet2::monomial(m, 0, 1, c64(2.0));
        b.set(1, 1, c64(0.5));
        let g = JetMap::new(Jet2::monomial(m, 1, 0, c64(4.0)), b);
        assert!(matches!(semilinearize_completion(&g, m, RESONANCE_TOL), Err(Error::Precondition(_))));
    }

    #[test]
    fn polynomial_normal_form_has_roundoff_residual() {
        let nf = poincare_dulac_2d(&JetMap::normal_form(8, c64(4.0), c64(2.0), c64(1.0), 2), 8, RESONANCE_TOL).unwrap();
        let rep = verify_conjugacy(
            |p: [C64; 2]| Ok([c64(4.0) * p[0] + p[1] * p[1], c64(2.0) * p[1]]),
            &nf,
            &[1e-2, 1e-1],
            100,
            1,
        )
        .unwrap();
        assert!(rep.residuals.iter().all(|&r| r < 1e-13), "{:?}", rep.residuals);
    }

    #[test]
    fn truncation_order_slope() {
        // G = ξ₀∘(3z, 2w)∘ξ₀⁻¹ with ξ₀ = (z + g(w), w), g(w) = w²/(1 − w)
        let m = 8;
        let one = Cdd::one();
        let gfun = |w: Cdd| w * w / (one - w);
        let map = |p: [Cdd; 2]| -> Result<[Cdd; 2]> {
            let two = Cdd::from_f64(2.0);
            let three = Cdd::from_f64(3.0);
            Ok([three * (p[0] - gfun(p[1])) + gfun(two * p[1]), two * p[1]])
        };
        let mut g = Jet1::<Cdd>::zero(m);
        for k in 2..=m {
            g.c[k] = one;
        }
        let gw = g.compose2(&Jet2::var(m, 1)).unwrap();
        let xi0 = JetMap::new(Jet2::var(m, 0).add(&gw), Jet2::var(m, 1));
        let d = JetMap::normal_form(m, Cdd::from_f64(3.0), Cdd::from_f64(2.0), Cdd::zero(), 0);
        let germ = xi0.inverse().unwrap();
        let germ = xi0.compose(&d.compose(&germ).unwrap()).unwrap();
        let nf = poincare_dulac_2d(&germ, m, RESONANCE_TOL).unwrap();
        let radii = [4e-2, 2e-2, 1e-2, 5e-3];
        let rep = verify_conjugacy(map, &nf, &radii, 50, 2).unwrap();
        assert!(rep.slope >= m as f64 + 0.5, "{rep:?}");
        for w in rep.residuals.windows(2) {
            assert!(w[1] < w[0]);
            let ratio = w[0] / w[1];
            assert!(ratio >= 2f64.powi(m as i32) / 2.0, "{ratio}");
        }
    }

    #[test]
    fn f_star_germ_and_normal_form() {
        let f = f_star();
        let x0 = lattes_real_fixed_point();
        let t0 = (4.0 * x0 * (x0 * x0 - 1.0)).cbrt();
        let p = P2::new([c64(x0), c64(1.0), c64(t0)]).unwrap();
        let pn = normal_form_at(&f, &p, 1, 12, None).unwrap();
        assert!(pn.germ.fixed_point_residual < 1e-25);
        assert!((pn.nf.chi1.modulus() - 4.0).abs() < 1e-20);
        assert!((pn.nf.chi2.modulus() - 2.0).abs() < 1e-20);
        assert_eq!(pn.nf.q, Some(2));
        assert!(pn.nf.homological_residual < 1e-20, "{}", pn.nf.homological_residual);
        let data = pn.data().unwrap();
        let back: NormalFormData = serde_json::from_str(&serde_json::to_string(&data).unwrap()).unwrap();
        assert_eq!(back, data);
    }

    #[test]
    fn f_star_semilinear_germ() {
        let f = f_star();
        let x0 = lattes_real_fixed_point();
        let t0 = (4.0 * x0 * (x0 * x0 - 1.0)).cbrt();
        let p = P2::new([c64(x0), c64(1.0), c64(t0)]).unwrap();
        let (g, _) = skew_semilinear_germ(&f, &p, 10).unwrap();
        let s = semilinearize_completion(&g, 10, RESONANCE_TOL).unwrap();
        assert_eq!(s.xi.f[1], Jet2::var(10, 1));
        assert!((s.chi1.modulus() - 4.0).abs() < 1e-20);
        assert!(s.residual < 1e-20, "{}", s.residual);
    }

    #[test]
    fn f_star_conjugacy_slope() {
        let f = f_star();
        let x0 = lattes_real_fixed_point();
        let t0 = (4.0 * x0 * (x0 * x0 - 1.0)).cbrt();
        let p = P2::new([c64(x0), c64(1.0), c64(t0)]).unwrap();
        let pn = normal_form_at(&f, &p, 1, 12, None).unwrap();
        let rep = verify_conjugacy(|u| pn.germ.eval_map(&f, u), &pn.nf, &[1e-1, 3e-2, 1e-2, 3e-3], VERIFY_SAMPLES, 5)
            .unwrap();
        eprintln!("{rep:?}");
        assert!(rep.slope >= 12.5, "{rep:?}");
    }
}
