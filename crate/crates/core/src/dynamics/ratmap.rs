//! Rational maps of ℙ¹ given by a homogeneous lift `(P, Q)`.

use crate::error::{Error, Result};
use crate::numeric::proj::norm;
use crate::numeric::univariate::{binary_form_roots, horner};
use crate::numeric::{Exact, HomPoly, C64, P1};

#[derive(Clone, Debug)]
pub struct RatMap1 {
    pub name: String,
    p: HomPoly,
    q: HomPoly,
    exact: Option<[HomPoly<Exact>; 2]>,
    /// Postcritical set, when documented for the family.
    postcritical: Option<Vec<P1>>,
}

impl RatMap1 {
    pub fn new(name: &str, p: HomPoly, q: HomPoly) -> Result<Self> {
        if p.nvars() != 2 || q.nvars() != 2 {
            return Err(Error::InvalidInput("a map of P^1 needs binary forms".into()));
        }
        if p.degree() != q.degree() {
            return Err(Error::DegreeMismatch(format!("deg P = {}, deg Q = {}", p.degree(), q.degree())));
        }
        if p.degree() < 1 {
            return Err(Error::InvalidInput("degree must be at least 1".into()));
        }
        let m = RatMap1 { name: name.to_string(), p, q, exact: None, postcritical: None };
        m.check_no_common_root()?;
        Ok(m)
    }

    pub fn from_exact(name: &str, p: HomPoly<Exact>, q: HomPoly<Exact>) -> Result<Self> {
        let mut m = Self::new(name, p.to_c64(), q.to_c64())?;
        m.exact = Some([p, q]);
        Ok(m)
    }

    pub fn with_postcritical(mut self, pts: Vec<P1>) -> Self {
        self.postcritical = Some(pts);
        self
    }

    fn check_no_common_root(&self) -> Result<()> {
        let roots = binary_form_roots(&self.p.binary_coeffs(), 1e-12)?;
        let scale = self.q.max_coeff().max(1e-300);
        for r in roots {
            let n = norm(&r);
            let v = [r[0] / n, r[1] / n];
            if self.q.eval(&v).norm() < 1e-9 * scale {
                return Err(Error::InvalidInput(format!("P and Q share the root [{:.6}:{:.6}]", v[0], v[1])));
            }
        }
        Ok(())
    }

    pub fn degree(&self) -> u32 {
        self.p.degree()
    }

    pub fn p(&self) -> &HomPoly {
        &self.p
    }

    pub fn q(&self) -> &HomPoly {
        &self.q
    }

    pub fn exact(&self) -> Option<&[HomPoly<Exact>; 2]> {
        self.exact.as_ref()
    }

    pub fn postcritical(&self) -> Option<&[P1]> {
        self.postcritical.as_deref()
    }

    pub fn eval_lift(&self, v: &[C64; 2]) -> [C64; 2] {
        [self.p.eval(v), self.q.eval(v)]
    }

    /// Jacobian of the lift, rows `(∂P, ∂Q)`.
    pub fn jac_lift(&self, v: &[C64; 2]) -> ([C64; 2], [[C64; 2]; 2]) {
        let (pv, pg) = self.p.eval_grad(v);
        let (qv, qg) = self.q.eval_grad(v);
        ([pv, qv], [[pg[0], pg[1]], [qg[0], qg[1]]])
    }

    pub fn eval(&self, x: &P1) -> Result<P1> {
        let v = unit2(x.coords());
        let f = self.eval_lift(&v);
        let n = norm(&f);
        if n < 1e-14 * self.p.max_coeff().max(self.q.max_coeff()) {
            return Err(Error::Indeterminate { norm: n });
        }
        P1::new(f)
    }

    /// `θⁿ(x)`.
    pub fn iterate(&self, x: &P1, n: usize) -> Result<P1> {
        let mut y = *x;
        for _ in 0..n {
            y = self.eval(&y)?;
        }
        Ok(y)
    }

    /// Derivative of the chart map from chart `src` at `x` to chart `dst`
    /// at `θ(x)`. Chart 1 is `x = z/w`, chart 0 is `u = w/z`.
    pub fn chart_derivative(&self, x: &P1, src: usize, dst: usize) -> Result<C64> {
        let c = x.coords();
        if c[src].norm() == 0.0 {
            return Err(Error::Chart { chart: src });
        }
        let mut v = [C64::new(0.0, 0.0); 2];
        v[src] = C64::new(1.0, 0.0);
        v[1 - src] = c[1 - src] / c[src];
        let (g, j) = self.jac_lift(&v);
        if g[dst].norm() == 0.0 {
            return Err(Error::Chart { chart: dst });
        }
        let o = 1 - dst;
        let dg_o = j[o][1 - src];
        let dg_d = j[dst][1 - src];
        Ok((dg_o * g[dst] - g[o] * dg_d) / (g[dst] * g[dst]))
    }

    /// Chart derivative using the largest-coordinate chart at `x` and at
    /// `θ(x)`; for a fixed point this is the multiplier.
    pub fn multiplier(&self, x: &P1) -> Result<C64> {
        let y = self.eval(x)?;
        self.chart_derivative(x, x.max_index(), y.max_index())
    }

    /// Spherical (FS) derivative `‖d_xθ‖`.
    pub fn fs_derivative(&self, x: &P1) -> f64 {
        let p = unit2(x.coords());
        let (g, j) = self.jac_lift(&p);
        let n = norm(&g);
        let q = [g[0] / n, g[1] / n];
        let u = [-p[1].conj(), p[0].conj()];
        let v = [-q[1].conj(), q[0].conj()];
        let ju = [j[0][0] * u[0] + j[0][1] * u[1], j[1][0] * u[0] + j[1][1] * u[1]];
        (v[0].conj() * ju[0] + v[1].conj() * ju[1]).norm() / n
    }

    /// All `d` preimages of `x` with multiplicity.
    pub fn preimages(&self, x: &P1) -> Result<Vec<P1>> {
        let [a, b] = unit2(x.coords());
        // b·P − a·Q = 0
        let pc = self.p.binary_coeffs();
        let qc = self.q.binary_coeffs();
        let f: Vec<C64> = pc.iter().zip(&qc).map(|(p, q)| b * p - a * q).collect();
        binary_form_roots(&f, 1e-10)?.into_iter().map(P1::new).collect()
    }

    /// Critical points: zeros of the Wronskian `P_z Q_w − P_w Q_z`.
    pub fn critical_points(&self) -> Result<Vec<P1>> {
        let w = self.p.partial(0).mul(&self.q.partial(1)).sub(&self.p.partial(1).mul(&self.q.partial(0)))?;
        binary_form_roots(&w.binary_coeffs(), 1e-10)?.into_iter().map(P1::new).collect()
    }

    /// Forward orbits of the critical values, merged to distinct points.
    /// Stops after `max_steps` iterates per orbit.
    pub fn postcritical_numeric(&self, max_steps: usize, tol: f64) -> Result<Vec<P1>> {
        let mut set: Vec<P1> = Vec::new();
        for c in self.critical_points()? {
            let mut y = self.eval(&c)?;
            for _ in 0..max_steps {
                if set.iter().any(|s| s.fs_distance(&y) < tol) {
                    break;
                }
                set.push(y);
                y = self.eval(&y)?;
            }
        }
        Ok(set)
    }

    /// Univariate coefficients of `P(x,1)` and `Q(x,1)`.
    pub fn affine_coeffs(&self) -> (Vec<C64>, Vec<C64>) {
        (self.p.binary_coeffs(), self.q.binary_coeffs())
    }

    /// `θ(x)` in the affine chart (may be infinite).
    pub fn eval_affine(&self, x: C64) -> C64 {
        let (p, q) = self.affine_coeffs();
        horner(&p, x) / horner(&q, x)
    }
}

pub fn unit2(c: &[C64; 2]) -> [C64; 2] {
    let n = norm(c);
    [c[0] / n, c[1] / n]
}

/// `θ(x) = x^d`.
pub fn power_map(d: u32) -> RatMap1 {
    let p = HomPoly::<Exact>::monomial(2, [d, 0, 0], Exact::one());
    let q = HomPoly::<Exact>::monomial(2, [0, d, 0], Exact::one());
    let inf = P1::infinity();
    RatMap1::from_exact(&format!("power{d}"), p, q)
        .expect("power map is nondegenerate")
        .with_postcritical(vec![P1::from_affine(C64::new(0.0, 0.0)), inf])
}

/// The lemniscatic Lattès map `x ↦ (x²+1)² / (4x(x²−1))`, the duplication
/// formula on `y² = x³ − x`.
pub fn lattes_lemniscatic() -> RatMap1 {
    let (p, q) = lattes_exact();
    let pc = vec![
        P1::from_affine(C64::new(0.0, 0.0)),
        P1::from_affine(C64::new(1.0, 0.0)),
        P1::from_affine(C64::new(-1.0, 0.0)),
        P1::infinity(),
    ];
    RatMap1::from_exact("lattes4", p, q).expect("Lattès map is nondegenerate").with_postcritical(pc)
}

/// Exact lift `P = (z²+w²)²`, `Q = 4zw(z²−w²)`.
pub fn lattes_exact() -> (HomPoly<Exact>, HomPoly<Exact>) {
    let e = |n: i64| Exact::from_int(n);
    let p = HomPoly::from_terms(2, 4, [([4, 0, 0], e(1)), ([2, 2, 0], e(2)), ([0, 4, 0], e(1))]).unwrap();
    let q = HomPoly::from_terms(2, 4, [([3, 1, 0], e(4)), ([1, 3, 0], e(-4))]).unwrap();
    (p, q)
}
