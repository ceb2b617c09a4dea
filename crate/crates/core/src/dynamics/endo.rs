//! Holomorphic endomorphisms of ℙ² given by a homogeneous lift.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ratmap::RatMap1;
use crate::error::{Error, Result};
use crate::numeric::proj::{chart_others, cross_conj, gaussian_c, norm};
use crate::numeric::{Coeff, Exact, HomPoly, Line, Scalar, C64, P1, P2};
use crate::rng;

/// Documented totally invariant sets (never computed, only supplied).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExceptionalMeta {
    pub points: Vec<[C64; 3]>,
    pub lines: Vec<Line>,
}

impl ExceptionalMeta {
    /// FS distance from `p` to the nearest documented point or line.
    pub fn distance(&self, p: &P2) -> f64 {
        let u = p.unit_lift();
        let mut best = f64::INFINITY;
        for q in &self.points {
            best = best.min(crate::numeric::proj::fs_distance_raw(&u, q));
        }
        for l in &self.lines {
            // distance to a line {ℓ·x = 0}: |ℓ·u| / ‖ℓ‖ for unit u
            best = best.min(l.eval(&u).norm() / norm(&l.dual));
        }
        best
    }
}

#[derive(Clone, Debug)]
pub struct EndoP2 {
    pub name: String,
    f: [HomPoly; 3],
    exact: Option<[HomPoly<Exact>; 3]>,
    base: Option<RatMap1>,
    exceptional: Option<ExceptionalMeta>,
    min_sphere_norm: f64,
    scale: f64,
}

/// Summary of the sampled nondegeneracy check.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Nondegeneracy {
    pub min_norm_on_sphere: f64,
    pub samples: usize,
    pub threshold: f64,
}

pub const NONDEGENERACY_THRESHOLD: f64 = 1e-10;

impl EndoP2 {
    pub fn from_polys(name: &str, f: [HomPoly; 3]) -> Result<Self> {
        let d = f[0].degree();
        if f.iter().any(|p| p.nvars() != 3) {
            return Err(Error::InvalidInput("an endomorphism of P^2 needs ternary forms".into()));
        }
        if f.iter().any(|p| p.degree() != d) {
            return Err(Error::DegreeMismatch(format!(
                "component degrees {}, {}, {}",
                f[0].degree(),
                f[1].degree(),
                f[2].degree()
            )));
        }
        if d < 2 {
            return Err(Error::InvalidInput(format!("degree {d} < 2")));
        }
        let base = if f[0].independent_of(2) && f[1].independent_of(2) {
            Some(RatMap1::new(&format!("{name}_base"), f[0].with_nvars(2)?, f[1].with_nvars(2)?)?)
        } else {
            None
        };
        let scale = f.iter().map(|p| p.max_coeff()).fold(0.0, f64::max);
        let mut m =
            EndoP2 { name: name.to_string(), f, exact: None, base, exceptional: None, min_sphere_norm: 0.0, scale };
        let nd = m.nondegeneracy(10_000, 50, 0x5eed);
        if nd.min_norm_on_sphere <= NONDEGENERACY_THRESHOLD {
            return Err(Error::InvalidInput(format!(
                "lift vanishes off the origin: min |F| on the sphere = {:.3e}",
                nd.min_norm_on_sphere
            )));
        }
        m.min_sphere_norm = nd.min_norm_on_sphere;
        if m.base.is_some() && is_pure_power(&m.f[2], 2) {
            m.exceptional = Some(ExceptionalMeta {
                points: vec![[C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(1.0, 0.0)]],
                lines: vec![Line::new([C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(1.0, 0.0)])?],
            });
        }
        Ok(m)
    }

    pub fn from_exact(name: &str, f: [HomPoly<Exact>; 3]) -> Result<Self> {
        let mut m = Self::from_polys(name, [f[0].to_c64(), f[1].to_c64(), f[2].to_c64()])?;
        if let Some(b) = m.base.take() {
            let p = f[0].with_nvars(2)?;
            let q = f[1].with_nvars(2)?;
            let mut nb = RatMap1::from_exact(&b.name, p, q)?;
            if let Some(pc) = b.postcritical() {
                nb = nb.with_postcritical(pc.to_vec());
            }
            m.base = Some(nb);
        }
        m.exact = Some(f);
        Ok(m)
    }

    pub fn with_exceptional(mut self, e: ExceptionalMeta) -> Self {
        self.exceptional = Some(e);
        self
    }

    /// Replace the base map (used to attach documented base metadata).
    pub fn with_base(mut self, base: RatMap1) -> Result<Self> {
        if self.base.is_none() {
            return Err(Error::NotSkew("with_base"));
        }
        self.base = Some(base);
        Ok(self)
    }

    pub fn degree(&self) -> u32 {
        self.f[0].degree()
    }

    pub fn components(&self) -> &[HomPoly; 3] {
        &self.f
    }

    pub fn exact(&self) -> Option<&[HomPoly<Exact>; 3]> {
        self.exact.as_ref()
    }

    /// Base map θ when the map is a skew product over the pencil through
    /// `[0:0:1]`.
    pub fn base(&self) -> Option<&RatMap1> {
        self.base.as_ref()
    }

    pub fn is_skew(&self) -> bool {
        self.base.is_some()
    }

    pub fn exceptional(&self) -> Option<&ExceptionalMeta> {
        self.exceptional.as_ref()
    }

    pub fn min_sphere_norm(&self) -> f64 {
        self.min_sphere_norm
    }

    pub fn eval_lift(&self, v: &[C64; 3]) -> [C64; 3] {
        [self.f[0].eval(v), self.f[1].eval(v), self.f[2].eval(v)]
    }

    pub fn eval_lift_s<S: Scalar>(&self, v: &[S; 3]) -> [S; 3] {
        [self.f[0].eval_s(v), self.f[1].eval_s(v), self.f[2].eval_s(v)]
    }

    /// Value and Jacobian `J[i][j] = ∂F_i/∂x_j` of the lift.
    pub fn jac_lift(&self, v: &[C64; 3]) -> ([C64; 3], [[C64; 3]; 3]) {
        self.jac_lift_s(v)
    }

    pub fn jac_lift_s<S: Scalar>(&self, v: &[S; 3]) -> ([S; 3], [[S; 3]; 3]) {
        let (a, ga) = self.f[0].eval_grad(v);
        let (b, gb) = self.f[1].eval_grad(v);
        let (c, gc) = self.f[2].eval_grad(v);
        ([a, b, c], [ga, gb, gc])
    }

    pub fn eval(&self, p: &P2) -> Result<P2> {
        let u = p.unit_lift();
        let f = self.eval_lift(&u);
        let n = norm(&f);
        if n <= 1e-14 * self.scale {
            return Err(Error::Indeterminate { norm: n });
        }
        P2::new(f)
    }

    pub fn iterate(&self, p: &P2, n: usize) -> Result<P2> {
        let mut y = *p;
        for _ in 0..n {
            y = self.eval(&y)?;
        }
        Ok(y)
    }

    /// `π ∘ f = θ ∘ π` residual at `p` (FS distance in ℙ¹).
    pub fn fibration_residual(&self, p: &P2) -> Result<f64> {
        let b = self.base.as_ref().ok_or(Error::NotSkew("fibration_residual"))?;
        let lhs = self.eval(p)?.pencil_base()?;
        let rhs = b.eval(&p.pencil_base()?)?;
        Ok(lhs.fs_distance(&rhs))
    }

    /// Jacobian of the chart representation, from chart `src` at `p` to
    /// chart `dst` at `f(p)`.
    pub fn differential(&self, p: &P2, src: usize, dst: usize) -> Result<[[C64; 2]; 2]> {
        let c = p.coords();
        if c[src].norm() == 0.0 {
            return Err(Error::Chart { chart: src });
        }
        let v = c.map(|x| x / c[src]);
        let (g, j) = self.jac_lift(&v);
        if g[dst].norm() < 1e-300 {
            return Err(Error::Chart { chart: dst });
        }
        let ins = chart_others(src);
        let outs = chart_others(dst);
        let gd = g[dst];
        let mut m = [[C64::new(0.0, 0.0); 2]; 2];
        for (r, &o) in outs.iter().enumerate() {
            for (s, &i) in ins.iter().enumerate() {
                m[r][s] = (j[o][i] * gd - g[o] * j[dst][i]) / (gd * gd);
            }
        }
        Ok(m)
    }

    /// Charts chosen from the largest coordinates of `p` and `f(p)`.
    pub fn differential_auto(&self, p: &P2) -> Result<(usize, usize, [[C64; 2]; 2])> {
        let y = self.eval(p)?;
        let (s, d) = (p.max_index(), y.max_index());
        Ok((s, d, self.differential(p, s, d)?))
    }

    /// FS tangent map at the unit vector `p`: the matrix of
    /// `(I − q̂q̂*) dF(p) / ‖F(p)‖` in the orthonormal frames
    /// [`perp_basis`] of `p` and `q̂ = F(p)/‖F(p)‖`.
    pub fn tangent_map(&self, p: &[C64; 3]) -> ([[C64; 2]; 2], [C64; 3]) {
        let (g, j) = self.jac_lift(p);
        let n = norm(&g);
        let q = g.map(|x| x / n);
        let bin = perp_basis(p);
        let bout = perp_basis(&q);
        let mut m = [[C64::new(0.0, 0.0); 2]; 2];
        for b in 0..2 {
            let ju = matvec(&j, &bin[b]);
            for a in 0..2 {
                m[a][b] = hdot(&bout[a], &ju) / n;
            }
        }
        (m, q)
    }

    /// FS operator norm of `d_p fⁿ`.
    pub fn fs_norm_iterate(&self, p: &P2, n: usize) -> f64 {
        let mut u = p.unit_lift();
        let mut acc = [[C64::new(1.0, 0.0), C64::new(0.0, 0.0)], [C64::new(0.0, 0.0), C64::new(1.0, 0.0)]];
        let mut log_scale = 0.0;
        for _ in 0..n {
            let (m, q) = self.tangent_map(&u);
            acc = mul2(&m, &acc);
            let s = op_norm2(&acc);
            if s > 0.0 {
                log_scale += s.ln();
                for r in acc.iter_mut() {
                    for x in r.iter_mut() {
                        *x /= s;
                    }
                }
            }
            u = q;
        }
        (log_scale + op_norm2(&acc).ln()).exp()
    }

    /// Sampled minimum of `‖F‖` over the unit sphere with local refinement.
    pub fn nondegeneracy(&self, samples: usize, refine_steps: usize, seed: u64) -> Nondegeneracy {
        let mut r = rng::seeded(seed);
        let scale = self.scale.max(1e-300);
        let eval = |v: &[C64; 3]| norm(&self.eval_lift(v)) / scale;
        let mut cands: Vec<(f64, [C64; 3])> = Vec::with_capacity(samples);
        for _ in 0..samples {
            let v: [C64; 3] = std::array::from_fn(|_| gaussian_c(&mut r));
            let n = norm(&v);
            let v = v.map(|x| x / n);
            cands.push((eval(&v), v));
        }
        cands.sort_by(|a, b| a.0.total_cmp(&b.0));
        cands.truncate(8);
        let mut best = f64::INFINITY;
        for (mut val, mut v) in cands {
            let mut step = 0.1;
            for _ in 0..refine_steps {
                let mut improved = false;
                for _ in 0..6 {
                    let dv: [C64; 3] = std::array::from_fn(|_| gaussian_c(&mut r) * step);
                    let w = [v[0] + dv[0], v[1] + dv[1], v[2] + dv[2]];
                    let n = norm(&w);
                    let w = w.map(|x| x / n);
                    let e = eval(&w);
                    if e < val {
                        val = e;
                        v = w;
                        improved = true;
                    }
                }
                if !improved {
                    step *= 0.5;
                }
            }
            best = best.min(val);
        }
        Nondegeneracy { min_norm_on_sphere: best, samples, threshold: NONDEGENERACY_THRESHOLD }
    }

    /// FS distance in ℙ¹ from `π(p)` to the documented postcritical set of θ.
    pub fn distance_to_e_theta(&self, p: &P2) -> Option<f64> {
        let b = self.base.as_ref()?;
        let pc = b.postcritical()?;
        let x = p.pencil_base().ok()?;
        Some(pc.iter().map(|a| a.fs_distance(&x)).fold(f64::INFINITY, f64::min))
    }

    /// Pencil lines over the documented postcritical points of θ.
    pub fn e_theta_lines(&self) -> Vec<Line> {
        let Some(pc) = self.base.as_ref().and_then(|b| b.postcritical()) else {
            return Vec::new();
        };
        pc.iter()
            .filter_map(|a: &P1| {
                let c = a.coords();
                Line::new([c[1], -c[0], C64::new(0.0, 0.0)]).ok()
            })
            .collect()
    }

    /// Exact resultant of the base forms (skew maps with exact lifts); the
    /// skew product is nondegenerate iff it and the `t^d` coefficient of `R`
    /// are nonzero.
    pub fn exact_base_resultant(&self) -> Option<Exact> {
        let f = self.exact.as_ref()?;
        if !self.is_skew() {
            return None;
        }
        Some(sylvester_resultant(&f[0], &f[1]))
    }

    /// Newton refinement of an approximate solution `y` of `f(y) = x`,
    /// solved in the largest-coordinate charts. Returns the refined point and
    /// its FS residual.
    pub fn polish_preimage(&self, y: &P2, x: &P2, steps: usize) -> Result<(P2, f64)> {
        let k = x.max_index();
        let xc = x.coords();
        let [a, b] = chart_others(k);
        let target = [xc[a] / xc[k], xc[b] / xc[k]];
        let mut y = *y;
        let mut res = self.eval(&y)?.fs_distance(x);
        for _ in 0..steps {
            if res < 1e-15 {
                break;
            }
            let s = y.max_index();
            let m = self.differential(&y, s, k)?;
            let fy = self.eval_lift(&y.coords().map(|c| c / y.coords()[s]));
            let g = [fy[a] / fy[k] - target[0], fy[b] / fy[k] - target[1]];
            let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
            if det.norm() == 0.0 {
                break;
            }
            let dx = [(m[1][1] * g[0] - m[0][1] * g[1]) / det, (m[0][0] * g[1] - m[1][0] * g[0]) / det];
            let mut yc = y.chart(s).ok_or(Error::Chart { chart: s })?;
            yc[0] -= dx[0];
            yc[1] -= dx[1];
            let cand = P2::new(crate::numeric::proj::from_chart(yc, s))?;
            let r = self.eval(&cand)?.fs_distance(x);
            if r < res {
                y = cand;
                res = r;
            } else {
                break;
            }
        }
        Ok((y, res))
    }

    /// A random point of ℙ² drawn from the FS volume.
    pub fn random_point<R: Rng + ?Sized>(rng: &mut R) -> P2 {
        P2::random(rng)
    }
}

fn is_pure_power<C: Coeff>(p: &HomPoly<C>, k: usize) -> bool {
    p.terms().len() == 1 && p.terms()[0].0[k] == p.degree()
}

/// Orthonormal basis of the Hermitian complement of a unit vector.
pub fn perp_basis(p: &[C64; 3]) -> [[C64; 3]; 2] {
    let k = (0..3).min_by(|&i, &j| p[i].norm().total_cmp(&p[j].norm())).unwrap();
    let mut e = [C64::new(0.0, 0.0); 3];
    e[k] = C64::new(1.0, 0.0);
    let c = hdot(p, &e);
    let mut v = [e[0] - c * p[0], e[1] - c * p[1], e[2] - c * p[2]];
    let n = norm(&v);
    for x in v.iter_mut() {
        *x /= n;
    }
    let w = cross_conj(p, &v);
    let nw = norm(&w);
    [v, w.map(|x| x / nw)]
}

/// Hermitian product `⟨a, b⟩ = Σ conj(aᵢ) bᵢ`.
pub fn hdot(a: &[C64; 3], b: &[C64; 3]) -> C64 {
    a[0].conj() * b[0] + a[1].conj() * b[1] + a[2].conj() * b[2]
}

pub fn matvec(j: &[[C64; 3]; 3], v: &[C64; 3]) -> [C64; 3] {
    std::array::from_fn(|i| j[i][0] * v[0] + j[i][1] * v[1] + j[i][2] * v[2])
}

pub fn mul2(a: &[[C64; 2]; 2], b: &[[C64; 2]; 2]) -> [[C64; 2]; 2] {
    [
        [a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]],
        [a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]],
    ]
}

/// Largest singular value of a 2×2 complex matrix.
pub fn op_norm2(m: &[[C64; 2]; 2]) -> f64 {
    let fro2: f64 = m.iter().flatten().map(|x| x.norm_sqr()).sum();
    let det = (m[0][0] * m[1][1] - m[0][1] * m[1][0]).norm();
    let disc = (fro2 * fro2 - 4.0 * det * det).max(0.0).sqrt();
    ((fro2 + disc) / 2.0).sqrt()
}

/// Eigenvalues of a 2×2 complex matrix, larger modulus first.
pub fn eig2(m: &[[C64; 2]; 2]) -> [C64; 2] {
    let tr = m[0][0] + m[1][1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = (tr * tr - det * 4.0).sqrt();
    let a = (tr + disc) / 2.0;
    let b = (tr - disc) / 2.0;
    // recompute the smaller one from the determinant for accuracy
    let (big, small) = if a.norm() >= b.norm() { (a, b) } else { (b, a) };
    let small = if big.norm() > 0.0 { det / big } else { small };
    [big, small]
}

/// Sylvester resultant of two binary forms of equal degree, exactly.
pub fn sylvester_resultant(p: &HomPoly<Exact>, q: &HomPoly<Exact>) -> Exact {
    let n = p.degree() as usize;
    // coefficients by descending power of the first variable
    let coeffs =
        |f: &HomPoly<Exact>| -> Vec<Exact> { (0..=n).map(|k| f.coeff([(n - k) as u32, k as u32, 0])).collect() };
    let a = coeffs(p);
    let b = coeffs(q);
    let size = 2 * n;
    let mut m = vec![vec![Exact::zero(); size]; size];
    for r in 0..n {
        for k in 0..=n {
            m[r][r + k] = a[k].clone();
            m[r + n][r + k] = b[k].clone();
        }
    }
    exact_det(m)
}

/// Determinant by Gaussian elimination over the exact field.
pub fn exact_det(mut m: Vec<Vec<Exact>>) -> Exact {
    let n = m.len();
    let mut det = Exact::one();
    for col in 0..n {
        let Some(piv) = (col..n).find(|&r| !m[r][col].is_zero()) else {
            return Exact::zero();
        };
        if piv != col {
            m.swap(piv, col);
            det = det.neg();
        }
        let pv = m[col][col].clone();
        det = det.mul(&pv);
        let inv = pv.inv().expect("nonzero pivot");
        for r in col + 1..n {
            if m[r][col].is_zero() {
                continue;
            }
            let factor = m[r][col].mul(&inv);
            for k in col..n {
                let d = factor.mul(&m[col][k]);
                m[r][k] = m[r][k].sub(&d);
            }
        }
    }
    det
}
