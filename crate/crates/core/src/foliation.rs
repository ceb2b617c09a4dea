//! Polynomial 1-forms on ℂ³ and on affine charts: wedge, pullback, exact
//! invariance certificates, pencil forms and the catalog of invariant
//! foliations of skew and monomial maps.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::endo::hdot;
use crate::dynamics::EndoP2;
use crate::error::{Error, Result};
use crate::numeric::proj::{chart_others, from_chart, norm};
use crate::numeric::textfmt::{self, AnyPoly};
use crate::numeric::{Coeff, Exact, HomPoly, C64, P2};
use crate::poincare::DirectionProbe;

/// Default relative tolerance of numeric invariance checks.
pub const NUMERIC_TOL: f64 = 1e-10;
/// Probe points where `‖ω_p‖` falls below this are skipped.
pub const FORM_VANISH_TOL: f64 = 1e-12;

/// Polynomial in two affine variables `(Z, W)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChartPoly<C: Coeff = C64> {
    terms: BTreeMap<(u32, u32), C>,
}

impl<C: Coeff> ChartPoly<C> {
    pub fn zero() -> Self {
        ChartPoly { terms: BTreeMap::new() }
    }

    pub fn from_terms<I: IntoIterator<Item = ((u32, u32), C)>>(terms: I) -> Self {
        let mut p = Self::zero();
        for (e, c) in terms {
            p.add_term(e, c);
        }
        p
    }

    pub fn constant(c: C) -> Self {
        Self::from_terms([((0, 0), c)])
    }

    pub fn var(k: usize) -> Self {
        Self::from_terms([(if k == 0 { (1, 0) } else { (0, 1) }, C::one())])
    }

    fn add_term(&mut self, e: (u32, u32), c: C) {
        let v = self.terms.remove(&e).map(|x| x.add(&c)).unwrap_or(c);
        if !v.is_zero() {
            self.terms.insert(e, v);
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&(u32, u32), &C)> {
        self.terms.iter()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|(i, j)| i + j).max().unwrap_or(0)
    }

    pub fn add(&self, o: &Self) -> Self {
        let mut p = self.clone();
        for (e, c) in &o.terms {
            p.add_term(*e, c.clone());
        }
        p
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.add(&o.neg())
    }

    pub fn neg(&self) -> Self {
        ChartPoly { terms: self.terms.iter().map(|(e, c)| (*e, c.neg())).collect() }
    }

    pub fn mul(&self, o: &Self) -> Self {
        let mut p = Self::zero();
        for ((i1, j1), c1) in &self.terms {
            for ((i2, j2), c2) in &o.terms {
                p.add_term((i1 + i2, j1 + j2), c1.mul(c2));
            }
        }
        p
    }

    pub fn pow(&self, n: u32) -> Self {
        let mut acc = Self::constant(C::one());
        for _ in 0..n {
            acc = acc.mul(self);
        }
        acc
    }

    pub fn partial(&self, k: usize) -> Self {
        let mut p = Self::zero();
        for ((i, j), c) in &self.terms {
            let (e, n) = if k == 0 { (*i, (i.wrapping_sub(1), *j)) } else { (*j, (*i, j.wrapping_sub(1))) };
            if e > 0 {
                p.add_term(n, c.mul(&C::from_int(e as i64)));
            }
        }
        p
    }

    /// `self(s₀, s₁)`.
    pub fn compose(&self, s: &[ChartPoly<C>; 2]) -> Self {
        let mut acc = Self::zero();
        for ((i, j), c) in &self.terms {
            acc = acc.add(&Self::constant(c.clone()).mul(&s[0].pow(*i)).mul(&s[1].pow(*j)));
        }
        acc
    }

    pub fn eval(&self, x: [C64; 2]) -> C64 {
        self.terms.iter().map(|((i, j), c)| c.to_c64() * x[0].powu(*i) * x[1].powu(*j)).sum()
    }

    pub fn max_coeff(&self) -> f64 {
        self.terms.values().map(|c| c.magnitude()).fold(0.0, f64::max)
    }

    pub fn to_c64(&self) -> ChartPoly<C64> {
        ChartPoly::from_terms(self.terms.iter().map(|(e, c)| (*e, c.to_c64())))
    }

    /// Dehomogenize `p` in chart `k` (`x_k = 1`).
    pub fn dehomogenize(p: &HomPoly<C>, k: usize) -> Self {
        let [a, b] = chart_others(k);
        Self::from_terms(p.terms().iter().map(|(e, c)| ((e[a], e[b]), c.clone())))
    }

    /// Homogenize to degree `deg` in chart `k`.
    pub fn homogenize(&self, k: usize, deg: u32) -> Result<HomPoly<C>> {
        let [a, b] = chart_others(k);
        let mut terms = Vec::new();
        for ((i, j), c) in &self.terms {
            if i + j > deg {
                return Err(Error::DegreeMismatch(format!("chart term of degree {} exceeds {deg}", i + j)));
            }
            let mut e = [0; 3];
            e[a] = *i;
            e[b] = *j;
            e[k] = deg - i - j;
            terms.push((e, c.clone()));
        }
        HomPoly::from_terms(3, deg, terms)
    }
}

/// Polynomial 1-form. The ring `C` is the exactness flag: [`Exact`] forms
/// are handled by exact algebra.
#[derive(Clone, Debug, PartialEq)]
pub enum PolyOneForm<C: Coeff = Exact> {
    /// `A dz + B dw + C dt` on ℂ³ with `A, B, C` of equal degree.
    Homogeneous([HomPoly<C>; 3]),
    /// `a dZ + b dW` in affine chart `chart` of ℙ².
    Chart { chart: usize, coeffs: [ChartPoly<C>; 2] },
}

/// Wedge of two 1-forms.
#[derive(Clone, Debug, PartialEq)]
pub enum WedgePoly<C: Coeff> {
    /// Components on `dw∧dt, dt∧dz, dz∧dw`.
    Homogeneous([HomPoly<C>; 3]),
    /// Coefficient of `dZ∧dW`.
    Chart(ChartPoly<C>),
}

impl<C: Coeff> WedgePoly<C> {
    pub fn is_zero(&self) -> bool {
        match self {
            WedgePoly::Homogeneous(c) => c.iter().all(|p| p.is_zero()),
            WedgePoly::Chart(p) => p.is_zero(),
        }
    }

    pub fn max_coeff(&self) -> f64 {
        match self {
            WedgePoly::Homogeneous(c) => c.iter().map(|p| p.max_coeff()).fold(0.0, f64::max),
            WedgePoly::Chart(p) => p.max_coeff(),
        }
    }

    /// First nonzero coefficient: component, exponents, value.
    pub fn witness(&self) -> Option<(usize, [u32; 3], C)> {
        match self {
            WedgePoly::Homogeneous(c) => {
                c.iter().enumerate().find_map(|(k, p)| p.terms().first().map(|(e, v)| (k, *e, v.clone())))
            }
            WedgePoly::Chart(p) => p.terms().next().map(|((i, j), v)| (0, [*i, *j, 0], v.clone())),
        }
    }
}

fn hom3<C: Coeff>(p: &HomPoly<C>) -> Result<HomPoly<C>> {
    if p.nvars() == 3 {
        Ok(p.clone())
    } else {
        p.with_nvars(3)
    }
}

impl<C: Coeff> PolyOneForm<C> {
    pub fn homogeneous(a: HomPoly<C>, b: HomPoly<C>, c: HomPoly<C>) -> Result<Self> {
        let coeffs = [hom3(&a)?, hom3(&b)?, hom3(&c)?];
        let degs: Vec<u32> = coeffs.iter().filter(|p| !p.is_zero()).map(|p| p.degree()).collect();
        if degs.is_empty() {
            return Err(Error::InvalidInput("the zero form does not define a foliation".into()));
        }
        if degs.iter().any(|d| *d != degs[0]) {
            return Err(Error::DegreeMismatch("form coefficients must share one degree".into()));
        }
        let d = degs[0];
        let coeffs = coeffs.map(|p| if p.is_zero() { HomPoly::zero(3, d) } else { p });
        Ok(PolyOneForm::Homogeneous(coeffs))
    }

    pub fn chart(chart: usize, a: ChartPoly<C>, b: ChartPoly<C>) -> Result<Self> {
        if chart > 2 {
            return Err(Error::InvalidInput(format!("chart index {chart} out of range")));
        }
        if a.is_zero() && b.is_zero() {
            return Err(Error::InvalidInput("the zero form does not define a foliation".into()));
        }
        Ok(PolyOneForm::Chart { chart, coeffs: [a, b] })
    }

    pub fn is_homogeneous(&self) -> bool {
        matches!(self, PolyOneForm::Homogeneous(_))
    }

    pub fn is_zero(&self) -> bool {
        match self {
            PolyOneForm::Homogeneous(c) => c.iter().all(|p| p.is_zero()),
            PolyOneForm::Chart { coeffs, .. } => coeffs.iter().all(|p| p.is_zero()),
        }
    }

    pub fn scale(&self, s: &C) -> Self {
        match self {
            PolyOneForm::Homogeneous(c) => PolyOneForm::Homogeneous(c.clone().map(|p| p.scale(s))),
            PolyOneForm::Chart { chart, coeffs } => PolyOneForm::Chart {
                chart: *chart,
                coeffs: coeffs.clone().map(|p| p.mul(&ChartPoly::constant(s.clone()))),
            },
        }
    }

    /// Contraction `zA + wB + tC` with the Euler field; zero iff the form
    /// descends to ℙ².
    pub fn euler_contraction(&self) -> Result<HomPoly<C>> {
        match self {
            PolyOneForm::Homogeneous(c) => {
                let mut acc = HomPoly::zero(3, c[0].degree() + 1);
                for (k, p) in c.iter().enumerate() {
                    acc = acc.add(&HomPoly::var(3, k).mul(p))?;
                }
                Ok(acc)
            }
            PolyOneForm::Chart { .. } => Err(Error::InvalidInput("Euler contraction needs a homogeneous form".into())),
        }
    }

    pub fn descends(&self) -> Result<bool> {
        Ok(self.euler_contraction()?.is_zero())
    }

    /// Restriction to chart `k`.
    pub fn to_chart(&self, k: usize) -> Result<Self> {
        match self {
            PolyOneForm::Homogeneous(c) => {
                let [a, b] = chart_others(k);
                Self::chart(k, ChartPoly::dehomogenize(&c[a], k), ChartPoly::dehomogenize(&c[b], k))
            }
            PolyOneForm::Chart { chart, .. } if *chart == k => Ok(self.clone()),
            PolyOneForm::Chart { .. } => Err(Error::InvalidInput("chart forms cannot change chart".into())),
        }
    }

    pub fn to_c64(&self) -> PolyOneForm<C64> {
        match self {
            PolyOneForm::Homogeneous(c) => PolyOneForm::Homogeneous(c.clone().map(|p| p.to_c64())),
            PolyOneForm::Chart { chart, coeffs } => {
                PolyOneForm::Chart { chart: *chart, coeffs: coeffs.clone().map(|p| p.to_c64()) }
            }
        }
    }

    pub fn max_coeff(&self) -> f64 {
        match self {
            PolyOneForm::Homogeneous(c) => c.iter().map(|p| p.max_coeff()).fold(0.0, f64::max),
            PolyOneForm::Chart { coeffs, .. } => coeffs.iter().map(|p| p.max_coeff()).fold(0.0, f64::max),
        }
    }

    /// Coefficient covector at a lift `v` (homogeneous) or chart point.
    pub fn covector_at(&self, v: &[C64; 3]) -> Result<[C64; 3]> {
        match self {
            PolyOneForm::Homogeneous(c) => {
                let c = c.clone().map(|p| p.to_c64());
                Ok([c[0].eval(v), c[1].eval(v), c[2].eval(v)])
            }
            PolyOneForm::Chart { chart, coeffs } => {
                let k = *chart;
                if v[k].norm() == 0.0 {
                    return Err(Error::Chart { chart: k });
                }
                let [a, b] = chart_others(k);
                let x = [v[a] / v[k], v[b] / v[k]];
                // pull back through the chart map v ↦ (v_a/v_k, v_b/v_k)
                let (ca, cb) = (coeffs[0].eval(x) / v[k], coeffs[1].eval(x) / v[k]);
                let mut out = [C64::new(0.0, 0.0); 3];
                out[a] = ca;
                out[b] = cb;
                out[k] = -(ca * v[a] + cb * v[b]) / v[k];
                Ok(out)
            }
        }
    }
}

/// `ω ∧ η`.
pub fn wedge<C: Coeff>(w: &PolyOneForm<C>, e: &PolyOneForm<C>) -> Result<WedgePoly<C>> {
    match (w, e) {
        (PolyOneForm::Homogeneous(a), PolyOneForm::Homogeneous(b)) => {
            let comp = |i: usize, j: usize| a[i].mul(&b[j]).sub(&a[j].mul(&b[i]));
            Ok(WedgePoly::Homogeneous([comp(1, 2)?, comp(2, 0)?, comp(0, 1)?]))
        }
        (PolyOneForm::Chart { chart: k1, coeffs: a }, PolyOneForm::Chart { chart: k2, coeffs: b }) if k1 == k2 => {
            Ok(WedgePoly::Chart(a[0].mul(&b[1]).sub(&a[1].mul(&b[0]))))
        }
        _ => Err(Error::InvalidInput("wedge needs two forms of the same mode and chart".into())),
    }
}

/// `F*ω = Σ_j (ω_j∘F) dF_j` for a homogeneous lift `F`.
pub fn pullback_polys<C: Coeff>(f: &[HomPoly<C>; 3], w: &PolyOneForm<C>) -> Result<PolyOneForm<C>> {
    let PolyOneForm::Homogeneous(a) = w else {
        return Err(Error::InvalidInput("homogeneous pullback needs a homogeneous form".into()));
    };
    let f = [hom3(&f[0])?, hom3(&f[1])?, hom3(&f[2])?];
    let d = f[0].degree();
    if f.iter().any(|p| p.degree() != d) {
        return Err(Error::DegreeMismatch("map components must share one degree".into()));
    }
    let comp: Vec<HomPoly<C>> = a.iter().map(|p| p.compose(&f)).collect::<Result<_>>()?;
    let deg = a[0].degree() * d + d - 1;
    let mut out = [HomPoly::zero(3, deg), HomPoly::zero(3, deg), HomPoly::zero(3, deg)];
    for (k, o) in out.iter_mut().enumerate() {
        for j in 0..3 {
            *o = o.add(&comp[j].mul(&f[j].partial(k)))?;
        }
    }
    Ok(PolyOneForm::Homogeneous(out))
}

/// Pullback of a chart form by a polynomial chart map `(F₀, F₁)`.
pub fn pullback_chart<C: Coeff>(f: &[ChartPoly<C>; 2], w: &PolyOneForm<C>) -> Result<PolyOneForm<C>> {
    let PolyOneForm::Chart { chart, coeffs } = w else {
        return Err(Error::InvalidInput("chart pullback needs a chart form".into()));
    };
    let (a, b) = (coeffs[0].compose(f), coeffs[1].compose(f));
    let c0 = a.mul(&f[0].partial(0)).add(&b.mul(&f[1].partial(0)));
    let c1 = a.mul(&f[0].partial(1)).add(&b.mul(&f[1].partial(1)));
    Ok(PolyOneForm::Chart { chart: *chart, coeffs: [c0, c1] })
}

/// Exact pullback by a map with exact coefficients.
pub fn pullback(f: &EndoP2, w: &PolyOneForm<Exact>) -> Result<PolyOneForm<Exact>> {
    let ex = f.exact().ok_or_else(|| Error::Precondition(format!("map '{}' has no exact coefficients", f.name)))?;
    pullback_polys(ex, w)
}

pub fn pullback_numeric(f: &EndoP2, w: &PolyOneForm<C64>) -> Result<PolyOneForm<C64>> {
    pullback_polys(f.components(), w)
}

/// `[F₀∘G, F₁∘G, F₂∘G]`.
pub fn compose_maps<C: Coeff>(f: &[HomPoly<C>; 3], g: &[HomPoly<C>; 3]) -> Result<[HomPoly<C>; 3]> {
    let g = [hom3(&g[0])?, hom3(&g[1])?, hom3(&g[2])?];
    Ok([hom3(&f[0])?.compose(&g)?, hom3(&f[1])?.compose(&g)?, hom3(&f[2])?.compose(&g)?])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckMode {
    Exact,
    Numeric,
}

/// First nonzero coefficient of a nonzero wedge.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    /// `dw∧dt`, `dt∧dz` or `dz∧dw` (homogeneous), or `dZ∧dW` (chart).
    pub component: String,
    pub exponents: [u32; 3],
    pub value: String,
    pub value_c64: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub mode: CheckMode,
    /// True when `ω ∧ f*ω ≡ 0` (exactly, or within tolerance).
    pub verdict: bool,
    pub witness_coefficient: Option<Witness>,
    pub max_coefficient: f64,
    /// Absolute tolerance used (numeric mode).
    pub tolerance: Option<f64>,
    pub form_descends: bool,
}

const COMPONENT_NAMES: [&str; 3] = ["dw^dt", "dt^dz", "dz^dw"];

fn witness_of<C: Coeff + std::fmt::Display>(w: &WedgePoly<C>) -> Option<Witness> {
    let chart = matches!(w, WedgePoly::Chart(_));
    w.witness().map(|(k, e, v)| {
        let z = v.to_c64();
        Witness {
            component: if chart { "dZ^dW".into() } else { COMPONENT_NAMES[k].into() },
            exponents: e,
            value: v.to_string(),
            value_c64: [z.re, z.im],
        }
    })
}

struct C64Display(C64);

impl std::fmt::Display for C64Display {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:e}{:+e}i", self.0.re, self.0.im)
    }
}

/// Is the foliation of `ω` invariant under `f`? Exact mode needs exact
/// coefficients in both; numeric mode uses `tol` relative to the size of
/// `ω` and `f*ω`.
pub fn invariance_check(f: &EndoP2, w: &PolyOneForm<Exact>, mode: CheckMode, tol: f64) -> Result<InvarianceReport> {
    if w.is_zero() {
        return Err(Error::InvalidInput("the zero form does not define a foliation".into()));
    }
    let form_descends = w.descends()?;
    match mode {
        CheckMode::Exact => {
            let pb = pullback(f, w)?;
            let wd = wedge(w, &pb)?;
            Ok(InvarianceReport {
                mode,
                verdict: wd.is_zero(),
                witness_coefficient: witness_of(&wd),
                max_coefficient: wd.max_coeff(),
                tolerance: None,
                form_descends,
            })
        }
        CheckMode::Numeric => invariance_check_numeric(f, &w.to_c64(), tol).map(|mut r| {
            r.form_descends = form_descends;
            r
        }),
    }
}

pub fn invariance_check_numeric(f: &EndoP2, w: &PolyOneForm<C64>, tol: f64) -> Result<InvarianceReport> {
    let pb = pullback_numeric(f, w)?;
    let wd = wedge(w, &pb)?;
    let scale = w.max_coeff() * pb.max_coeff();
    let abs_tol = tol * scale.max(f64::MIN_POSITIVE);
    let m = wd.max_coeff();
    let witness = match &wd {
        WedgePoly::Homogeneous(c) => {
            let wrapped = WedgePoly::Homogeneous(c.clone().map(|p| p.map_coeffs(|x| WrapC(*x))));
            witness_of(&wrapped)
        }
        WedgePoly::Chart(p) => {
            witness_of(&WedgePoly::Chart(ChartPoly::from_terms(p.terms().map(|(e, c)| (*e, WrapC(*c))))))
        }
    };
    let descends = match w {
        PolyOneForm::Homogeneous(_) => w.euler_contraction()?.max_coeff() <= abs_tol,
        PolyOneForm::Chart { .. } => true,
    };
    Ok(InvarianceReport {
        mode: CheckMode::Numeric,
        verdict: m <= abs_tol,
        witness_coefficient: if m <= abs_tol { None } else { witness },
        max_coefficient: m,
        tolerance: Some(abs_tol),
        form_descends: descends,
    })
}

/// `C64` with a `Display` impl for witnesses.
#[derive(Clone, Copy, Debug, PartialEq)]
struct WrapC(C64);

impl std::fmt::Display for WrapC {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        C64Display(self.0).fmt(f)
    }
}

impl Coeff for WrapC {
    fn zero() -> Self {
        WrapC(<C64 as Coeff>::zero())
    }
    fn one() -> Self {
        WrapC(<C64 as Coeff>::one())
    }
    fn from_int(n: i64) -> Self {
        WrapC(<C64 as Coeff>::from_int(n))
    }
    fn is_zero(&self) -> bool {
        Coeff::is_zero(&self.0)
    }
    fn add(&self, o: &Self) -> Self {
        WrapC(self.0 + o.0)
    }
    fn sub(&self, o: &Self) -> Self {
        WrapC(self.0 - o.0)
    }
    fn mul(&self, o: &Self) -> Self {
        WrapC(self.0 * o.0)
    }
    fn neg(&self) -> Self {
        WrapC(-self.0)
    }
    fn magnitude(&self) -> f64 {
        self.0.norm()
    }
    fn to_c64(&self) -> C64 {
        self.0
    }
}

/// Pencil of lines through `c`: `ω = Σ_k (c × x)_k dx_k`.
pub fn pencil_form_generic<C: Coeff>(c: [C; 3]) -> Result<PolyOneForm<C>> {
    let x = |k: usize| HomPoly::<C>::var(3, k);
    let term = |i: usize, j: usize| x(j).scale(&c[i]).sub(&x(i).scale(&c[j]));
    // (c × x)_0 = c₁x₂ − c₂x₁, (c × x)_1 = c₂x₀ − c₀x₂, (c × x)_2 = c₀x₁ − c₁x₀
    PolyOneForm::homogeneous(term(1, 2)?, term(2, 0)?, term(0, 1)?)
}

/// Exact pencil form through a center with exact coordinates.
pub fn pencil_form(center: [Exact; 3]) -> Result<PolyOneForm<Exact>> {
    pencil_form_generic(center)
}

/// Pencil form through a numeric center.
pub fn pencil_form_at(center: &P2) -> Result<PolyOneForm<C64>> {
    pencil_form_generic(*center.coords())
}

/// Pencil through `[0:0:1]`: `z dw − w dz`.
pub fn pencil_001() -> PolyOneForm<Exact> {
    pencil_form([Exact::zero(), Exact::zero(), Exact::one()]).expect("nonzero center")
}

/// `λ₀ wt dz + λ₁ zt dw + λ₂ zw dt`; descends iff `Σλ = 0`.
pub fn logarithmic_form(lambda: [Exact; 3]) -> Result<PolyOneForm<Exact>> {
    let m = |e: [u32; 3], c: &Exact| HomPoly::monomial(3, e, c.clone());
    PolyOneForm::homogeneous(m([0, 1, 1], &lambda[0]), m([1, 0, 1], &lambda[1]), m([1, 1, 0], &lambda[2]))
}

#[derive(Clone, Debug, PartialEq)]
pub struct CatalogEntry {
    pub name: String,
    /// `"1"` (skew product, pencil) or `"2.i"` (monomial maps).
    pub case: String,
    pub degree: u32,
    pub map: [HomPoly<Exact>; 3],
    pub form: PolyOneForm<Exact>,
}

impl CatalogEntry {
    /// `ω ∧ F*ω` in exact arithmetic.
    pub fn certificate(&self) -> Result<WedgePoly<Exact>> {
        wedge(&self.form, &pullback_polys(&self.map, &self.form)?)
    }
}

fn q(n: i64) -> Exact {
    Exact::from_int(n)
}

fn mono(e: [u32; 3], c: i64) -> HomPoly<Exact> {
    HomPoly::monomial(3, e, q(c))
}

fn sum(ps: &[HomPoly<Exact>]) -> HomPoly<Exact> {
    ps[1..].iter().fold(ps[0].clone(), |a, b| a.add(b).expect("equal degrees"))
}

/// Invariant foliations of skew products (pencil through `[0:0:1]`) and of
/// the monomial maps `[z^d:w^d:t^d]`, `[t^d:z^d:w^d]` for `d = 2, 3, 4`.
/// Entries with general `R, S` depending on all three variables are not
/// enumerated.
pub fn catalog_cases() -> Vec<CatalogEntry> {
    let mut out = Vec::new();
    let (o, i) = (Exact::omega(), Exact::i());
    for d in 2..=4u32 {
        // case 1: [P(z,w) : Q(z,w) : R(z,w,t)]
        let p = sum(&[mono([d, 0, 0], 1), mono([1, d - 1, 0], 2)]);
        let qq = sum(&[mono([0, d, 0], 1), mono([d - 1, 1, 0], -3)]);
        let r = sum(&[mono([0, 0, d], 1), mono([d - 1, 0, 1], 5), HomPoly::monomial(3, [1, 1, d - 2], i.clone())]);
        out.push(CatalogEntry {
            name: format!("skew{d}_pencil"),
            case: "1".into(),
            degree: d,
            map: [p, qq, r],
            form: pencil_001(),
        });
        let monomial = [mono([d, 0, 0], 1), mono([0, d, 0], 1), mono([0, 0, d], 1)];
        let cyclic = [mono([0, 0, d], 1), mono([d, 0, 0], 1), mono([0, d, 0], 1)];
        let unit = |k: usize| {
            let mut c = [Exact::zero(), Exact::zero(), Exact::zero()];
            c[k] = Exact::one();
            c
        };
        for (k, label) in ["100", "010", "001"].iter().enumerate() {
            out.push(CatalogEntry {
                name: format!("monomial{d}_pencil_{label}"),
                case: "2.i".into(),
                degree: d,
                map: monomial.clone(),
                form: pencil_form(unit(k)).expect("nonzero center"),
            });
        }
        for (lam, label) in [([1, -1, 0], "1_m1_0"), ([1, 1, -2], "1_1_m2"), ([2, -3, 1], "2_m3_1")] {
            out.push(CatalogEntry {
                name: format!("monomial{d}_log_{label}"),
                case: "2.i".into(),
                degree: d,
                map: monomial.clone(),
                form: logarithmic_form(lam.map(q)).expect("nonzero"),
            });
        }
        // cyclic map: λ must be an eigenvector of the cyclic shift
        out.push(CatalogEntry {
            name: format!("cyclic{d}_log_omega"),
            case: "2.i".into(),
            degree: d,
            map: cyclic,
            form: logarithmic_form([Exact::one(), o.clone(), o.mul(&o)]).expect("nonzero"),
        });
    }
    out
}

/// Certificates for every catalog entry, computed in parallel.
pub fn catalog_certificates() -> Vec<(CatalogEntry, bool)> {
    catalog_cases()
        .into_par_iter()
        .map(|e| {
            let ok = e.certificate().map(|w| w.is_zero()).unwrap_or(false);
            (e, ok)
        })
        .collect()
}

/// `L ∘ F ∘ L⁻¹` up to scale, with `L⁻¹` replaced by the adjugate.
pub fn linear_conjugate(f: &[HomPoly<Exact>; 3], l: [[i64; 3]; 3]) -> Result<[HomPoly<Exact>; 3]> {
    let lin = |m: [[Exact; 3]; 3]| -> Result<[HomPoly<Exact>; 3]> {
        let row = |r: &[Exact; 3]| -> Result<HomPoly<Exact>> {
            let mut acc = HomPoly::zero(3, 1);
            for (k, c) in r.iter().enumerate() {
                acc = acc.add(&HomPoly::var(3, k).scale(c))?;
            }
            Ok(acc)
        };
        Ok([row(&m[0])?, row(&m[1])?, row(&m[2])?])
    };
    let m = l.map(|r| r.map(q));
    let cof = |i: usize, j: usize| {
        let (r0, r1) = ((i + 1) % 3, (i + 2) % 3);
        let (c0, c1) = ((j + 1) % 3, (j + 2) % 3);
        m[r0][c0].mul(&m[r1][c1]).sub(&m[r0][c1].mul(&m[r1][c0]))
    };
    // adjugate: adj[j][i] = cofactor(i, j)
    let adj = [[cof(0, 0), cof(1, 0), cof(2, 0)], [cof(0, 1), cof(1, 1), cof(2, 1)], [cof(0, 2), cof(1, 2), cof(2, 2)]];
    let lp = lin(m.clone())?;
    let lip = lin(adj)?;
    compose_maps(&lp, &compose_maps(f, &lip)?)
}

/// Contraction of `ω` with one probe direction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TangencyPoint {
    pub p: P2,
    /// `|ω_p(v)| / (‖ω_p‖‖v‖)` for each probe direction; `None` when skipped.
    pub contractions: Vec<f64>,
    pub skipped: bool,
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TangencyReport {
    pub points: Vec<TangencyPoint>,
    pub max_contraction: f64,
    pub skipped: usize,
}

/// Normalized contraction `|ω_v(u)| / (‖ω_v‖‖u⊥‖)` at a lift `v`.
pub fn contraction_at(w: &PolyOneForm<C64>, v: &[C64; 3], u: &[C64; 3]) -> Result<Option<f64>> {
    let nv = norm(v);
    let vn = v.map(|x| x / nv);
    let a = hdot(&vn, u);
    let up = [u[0] - a * vn[0], u[1] - a * vn[1], u[2] - a * vn[2]];
    let cov = w.covector_at(&vn)?;
    let nc = norm(&cov);
    let nu = norm(&up);
    if nc < FORM_VANISH_TOL * w.max_coeff().max(1.0) || nu == 0.0 {
        return Ok(None);
    }
    let val: C64 = (0..3).map(|k| cov[k] * up[k]).sum();
    Ok(Some(val.norm() / (nc * nu)))
}

/// Alignment of probe directions with the foliation of `ω`.
pub fn tangency_check(w: &PolyOneForm<C64>, probes: &[DirectionProbe]) -> Result<TangencyReport> {
    if probes.is_empty() {
        return Err(Error::InvalidInput("empty probe list".into()));
    }
    let mut points = Vec::new();
    let mut max_contraction = 0.0f64;
    let mut skipped = 0;
    for pr in probes {
        let k = pr.chart;
        let cc = pr.p.chart(k).ok_or(Error::Chart { chart: k })?;
        let v = from_chart(cc, k);
        let [a, b] = chart_others(k);
        let mut tp = TangencyPoint { p: pr.p, contractions: Vec::new(), skipped: false, note: None };
        for d in &pr.directions {
            let mut u = [C64::new(0.0, 0.0); 3];
            u[a] = d[0];
            u[b] = d[1];
            match contraction_at(w, &v, &u)? {
                Some(c) => {
                    max_contraction = max_contraction.max(c);
                    tp.contractions.push(c);
                }
                None => {
                    tp.skipped = true;
                    tp.note = Some("form vanishes at the probe point (possible singularity)".into());
                    break;
                }
            }
        }
        if tp.skipped {
            skipped += 1;
            tp.contractions.clear();
        }
        points.push(tp);
    }
    Ok(TangencyReport { points, max_contraction, skipped })
}

/// Text serialization: a `form` header with a mode tag, then the
/// coefficient polynomials (`A B C`, or `a b` homogenized in the chart).
pub fn write_form(name: &str, w: &PolyOneForm<Exact>) -> Result<String> {
    Ok(match w {
        PolyOneForm::Homogeneous(c) => {
            let mut s = format!("form {name} mode=homogeneous\n");
            for (n, p) in ["A", "B", "C"].iter().zip(c) {
                s.push_str(&textfmt::write_exact(n, p));
            }
            s
        }
        PolyOneForm::Chart { chart, coeffs } => {
            let deg = coeffs[0].degree().max(coeffs[1].degree());
            let mut s = format!("form {name} mode=chart chart={chart}\n");
            for (n, p) in ["a", "b"].iter().zip(coeffs) {
                s.push_str(&textfmt::write_exact(n, &p.homogenize(*chart, deg)?));
            }
            s
        }
    })
}

pub fn write_form_c64(name: &str, w: &PolyOneForm<C64>) -> Result<String> {
    Ok(match w {
        PolyOneForm::Homogeneous(c) => {
            let mut s = format!("form {name} mode=homogeneous\n");
            for (n, p) in ["A", "B", "C"].iter().zip(c) {
                s.push_str(&textfmt::write_float(n, p));
            }
            s
        }
        PolyOneForm::Chart { chart, coeffs } => {
            let deg = coeffs[0].degree().max(coeffs[1].degree());
            let mut s = format!("form {name} mode=chart chart={chart}\n");
            for (n, p) in ["a", "b"].iter().zip(coeffs) {
                s.push_str(&textfmt::write_float(n, &p.homogenize(*chart, deg)?));
            }
            s
        }
    })
}

/// A parsed form: exact when every coefficient polynomial is exact.
#[derive(Clone, Debug, PartialEq)]
pub enum AnyForm {
    Exact(PolyOneForm<Exact>),
    Float(PolyOneForm<C64>),
}

impl AnyForm {
    pub fn to_c64(&self) -> PolyOneForm<C64> {
        match self {
            AnyForm::Exact(w) => w.to_c64(),
            AnyForm::Float(w) => w.clone(),
        }
    }
}

pub fn parse_form(text: &str) -> Result<(String, AnyForm)> {
    let doc = textfmt::parse(text)?;
    let h = doc.header("form").ok_or_else(|| Error::Parse { line: 0, msg: "missing 'form' header".into() })?;
    let name = h.args.first().cloned().unwrap_or_default();
    let mode = h.kv.get("mode").map(String::as_str).unwrap_or("homogeneous");
    let get = |n: &str| doc.poly(n).ok_or_else(|| Error::Parse { line: 0, msg: format!("missing polynomial '{n}'") });
    let form = match mode {
        "homogeneous" => {
            let ps = [get("A")?, get("B")?, get("C")?];
            match (ps[0].as_exact(), ps[1].as_exact(), ps[2].as_exact()) {
                (Some(a), Some(b), Some(c)) => {
                    AnyForm::Exact(PolyOneForm::homogeneous(a.clone(), b.clone(), c.clone())?)
                }
                _ => AnyForm::Float(PolyOneForm::homogeneous(ps[0].to_c64(), ps[1].to_c64(), ps[2].to_c64())?),
            }
        }
        "chart" => {
            let chart: usize =
                h.kv.get("chart")
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::Parse { line: 0, msg: "chart form needs chart=k".into() })?;
            if chart > 2 {
                return Err(Error::Parse { line: 0, msg: format!("chart {chart} out of range") });
            }
            let (a, b) = (get("a")?, get("b")?);
            match (a, b) {
                (AnyPoly::Exact(a), AnyPoly::Exact(b)) => AnyForm::Exact(PolyOneForm::chart(
                    chart,
                    ChartPoly::dehomogenize(a, chart),
                    ChartPoly::dehomogenize(b, chart),
                )?),
                _ => AnyForm::Float(PolyOneForm::chart(
                    chart,
                    ChartPoly::dehomogenize(&a.to_c64(), chart),
                    ChartPoly::dehomogenize(&b.to_c64(), chart),
                )?),
            }
        }
        other => return Err(Error::Parse { line: 0, msg: format!("unknown form mode '{other}'") }),
    };
    Ok((name, form))
}

/// Named builtin forms: `pencil_001` and the pencils through the other
/// coordinate points.
pub fn builtin_form(name: &str) -> Result<PolyOneForm<Exact>> {
    let unit = |k: usize| {
        let mut c = [Exact::zero(), Exact::zero(), Exact::zero()];
        c[k] = Exact::one();
        c
    };
    match name {
        "pencil_001" => Ok(pencil_001()),
        "pencil_010" => pencil_form(unit(1)),
        "pencil_100" => pencil_form(unit(0)),
        other => Err(Error::InvalidInput(format!("unknown form '{other}'"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{f_star, f_star_perturbed, monomial};
    use rand::Rng;

    fn rand_exact_poly<R: Rng>(r: &mut R, deg: u32) -> HomPoly<Exact> {
        let mut terms = Vec::new();
        for i in 0..=deg {
            for j in 0..=(deg - i) {
                terms
                    .push(([i, j, deg - i - j], Exact::gaussian(r.random_range(-3..=3), 1, r.random_range(-2..=2), 1)));
            }
        }
        HomPoly::from_terms(3, deg, terms).unwrap()
    }

    fn rand_form<R: Rng>(r: &mut R, deg: u32) -> PolyOneForm<Exact> {
        PolyOneForm::homogeneous(rand_exact_poly(r, deg), rand_exact_poly(r, deg), rand_exact_poly(r, deg)).unwrap()
    }

    #[test]
    fn chart_wedge_basics() {
        let dz = PolyOneForm::<Exact>::chart(2, ChartPoly::constant(Exact::one()), ChartPoly::zero()).unwrap();
        let dw = PolyOneForm::<Exact>::chart(2, ChartPoly::zero(), ChartPoly::constant(Exact::one())).unwrap();
        assert!(wedge(&dw, &dw).unwrap().is_zero());
        assert_eq!(wedge(&dz, &dw).unwrap(), WedgePoly::Chart(ChartPoly::constant(Exact::one())));
        assert!(wedge(&dz, &pencil_001()).is_err());
    }

    #[test]
    fn wedge_is_antisymmetric_and_bilinear() {
        let mut r = crate::rng::seeded(3);
        for _ in 0..5 {
            let (a, b, c) = (rand_form(&mut r, 2), rand_form(&mut r, 2), rand_form(&mut r, 2));
            let (WedgePoly::Homogeneous(x), WedgePoly::Homogeneous(y)) =
                (wedge(&a, &b).unwrap(), wedge(&b, &a).unwrap())
            else {
                panic!()
            };
            for k in 0..3 {
                assert!(x[k].add(&y[k]).unwrap().is_zero());
            }
            let PolyOneForm::Homogeneous(bc) = (match (&b, &c) {
                (PolyOneForm::Homogeneous(p), PolyOneForm::Homogeneous(q)) => PolyOneForm::Homogeneous([
                    p[0].add(&q[0]).unwrap(),
                    p[1].add(&q[1]).unwrap(),
                    p[2].add(&q[2]).unwrap(),
                ]),
                _ => unreachable!(),
            }) else {
                unreachable!()
            };
            let lhs = wedge(&a, &PolyOneForm::Homogeneous(bc)).unwrap();
            let (WedgePoly::Homogeneous(l), WedgePoly::Homogeneous(p), WedgePoly::Homogeneous(q)) =
                (lhs, wedge(&a, &b).unwrap(), wedge(&a, &c).unwrap())
            else {
                panic!()
            };
            for k in 0..3 {
                assert_eq!(l[k], p[k].add(&q[k]).unwrap());
            }
        }
    }

    #[test]
    fn pencil_pullback_expansion() {
        // F*(z dw − w dz) = P dQ − Q dP
        let f = f_star();
        let [p, qq, rr] = f.exact().unwrap().clone().map(|x| hom3(&x).unwrap());
        let pb = pullback(&f, &pencil_001()).unwrap();
        let expect: Vec<HomPoly<Exact>> =
            (0..3).map(|k| p.mul(&qq.partial(k)).sub(&qq.mul(&p.partial(k))).unwrap()).collect();
        let PolyOneForm::Homogeneous(c) = pb else { panic!() };
        for k in 0..3 {
            assert_eq!(c[k], expect[k]);
        }
        let _ = rr;
    }

    #[test]
    fn pullback_by_identity_and_functoriality() {
        let id = [HomPoly::var(3, 0), HomPoly::var(3, 1), HomPoly::var(3, 2)];
        let mut r = crate::rng::seeded(8);
        let w = rand_form(&mut r, 1);
        assert_eq!(pullback_polys(&id, &w).unwrap(), w);
        let f = [rand_exact_poly(&mut r, 2), rand_exact_poly(&mut r, 2), rand_exact_poly(&mut r, 2)];
        let g = [rand_exact_poly(&mut r, 2), rand_exact_poly(&mut r, 2), rand_exact_poly(&mut r, 2)];
        let fg = compose_maps(&f, &g).unwrap();
        let lhs = pullback_polys(&fg, &w).unwrap();
        let rhs = pullback_polys(&g, &pullback_polys(&f, &w).unwrap()).unwrap();
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn pencil_is_exactly_invariant_for_f_star() {
        let rep = invariance_check(&f_star(), &pencil_001(), CheckMode::Exact, NUMERIC_TOL).unwrap();
        assert!(rep.verdict && rep.witness_coefficient.is_none() && rep.form_descends);
        let num = invariance_check(&f_star(), &pencil_001(), CheckMode::Numeric, NUMERIC_TOL).unwrap();
        assert!(num.verdict);
    }

    #[test]
    fn perturbed_map_breaks_invariance() {
        let rep = invariance_check(&f_star_perturbed(), &pencil_001(), CheckMode::Exact, NUMERIC_TOL).unwrap();
        assert!(!rep.verdict);
        assert!(rep.witness_coefficient.is_some());
        let num = invariance_check(&f_star_perturbed(), &pencil_001(), CheckMode::Numeric, NUMERIC_TOL).unwrap();
        assert!(!num.verdict);
    }

    #[test]
    fn rescaling_keeps_verdict() {
        let s = Exact::gaussian(-7, 3, 0, 1);
        for f in [f_star(), f_star_perturbed()] {
            let a = invariance_check(&f, &pencil_001(), CheckMode::Exact, NUMERIC_TOL).unwrap();
            let b = invariance_check(&f, &pencil_001().scale(&s), CheckMode::Exact, NUMERIC_TOL).unwrap();
            assert_eq!(a.verdict, b.verdict);
        }
    }

    #[test]
    fn pencil_form_center_and_kernel() {
        let w = pencil_001();
        let PolyOneForm::Homogeneous(c) = &w else { panic!() };
        assert_eq!(c[0], HomPoly::var(3, 1).neg());
        assert_eq!(c[1], HomPoly::var(3, 0));
        assert!(c[2].is_zero());
        assert!(w.descends().unwrap());
        // at [1:1:1] the line to [0:0:1] has direction (1,1,0)
        let wc = w.to_c64();
        let one = C64::new(1.0, 0.0);
        let zero = C64::new(0.0, 0.0);
        let v = [one, one, one];
        assert!(contraction_at(&wc, &v, &[one, one, zero]).unwrap().unwrap() < 1e-15);
        assert!(contraction_at(&wc, &v, &[one, -one, zero]).unwrap().unwrap() > 0.5);
        // general center
        let c2 = P2::new([C64::new(1.0, 0.5), C64::new(-2.0, 0.0), C64::new(0.3, 1.0)]).unwrap();
        let wg = pencil_form_at(&c2).unwrap();
        let p = [C64::new(0.2, 0.1), C64::new(1.0, -1.0), C64::new(3.0, 0.0)];
        let dir: Vec<C64> = (0..3).map(|k| c2.coords()[k] - p[k]).collect();
        assert!(contraction_at(&wg, &p, &[dir[0], dir[1], dir[2]]).unwrap().unwrap() < 1e-14);
    }

    #[test]
    fn catalog_is_invariant() {
        let all = catalog_certificates();
        assert!(all.len() >= 24);
        for (e, ok) in &all {
            assert!(ok, "{}", e.name);
            assert!(e.form.descends().unwrap(), "{}", e.name);
            // descent is preserved by pullback
            assert!(pullback_polys(&e.map, &e.form).unwrap().descends().unwrap(), "{}", e.name);
        }
        assert!(all.iter().any(|(e, _)| e.case == "1") && all.iter().any(|(e, _)| e.case == "2.i"));
    }

    #[test]
    fn log_form_with_monomial_map() {
        let w = logarithmic_form([q(1), q(-1), q(0)]).unwrap();
        assert!(invariance_check(&monomial(2), &w, CheckMode::Exact, NUMERIC_TOL).unwrap().verdict);
        let bad = logarithmic_form([q(1), q(1), q(1)]).unwrap();
        assert!(!bad.descends().unwrap());
    }

    #[test]
    fn conjugated_monomial_is_negative_control() {
        let f = [mono([2, 0, 0], 1), mono([0, 2, 0], 1), mono([0, 0, 2], 1)];
        let g = linear_conjugate(&f, [[1, 2, 0], [0, 1, 3], [1, 0, 1]]).unwrap();
        let e = CatalogEntry { name: "neg".into(), case: "1".into(), degree: 2, map: g, form: pencil_001() };
        assert!(!e.certificate().unwrap().is_zero());
    }

    #[test]
    fn chart_pullback_matches_homogeneous() {
        // monomial map in chart t = 1 is (Z², W²)
        let f = [ChartPoly::<Exact>::var(0).pow(2), ChartPoly::var(1).pow(2)];
        let w = pencil_001().to_chart(2).unwrap();
        let pb = pullback_chart(&f, &w).unwrap();
        let hom = pullback(&monomial(2), &pencil_001()).unwrap().to_chart(2).unwrap();
        assert_eq!(pb, hom);
        assert!(wedge(&w, &pb).unwrap().is_zero());
    }

    #[test]
    fn tangency_with_pencil_and_misaligned_form() {
        assert!(tangency_check(&pencil_001().to_c64(), &[]).is_err());
        let p = P2::new([C64::new(0.7, 0.2), C64::new(1.0, 0.0), C64::new(0.4, -0.3)]).unwrap();
        let k = p.max_index();
        let cc = p.chart(k).unwrap();
        // direction of the line to [0:0:1] in chart k
        let v = from_chart(cc, k);
        let u = [v[0], v[1], C64::new(0.0, 0.0)];
        let [a, b] = chart_others(k);
        let dir = [(u[a] * v[k] - v[a] * u[k]) / (v[k] * v[k]), (u[b] * v[k] - v[b] * u[k]) / (v[k] * v[k])];
        let probe = DirectionProbe {
            p,
            fiber_size: 1,
            chart: k,
            directions: vec![dir],
            coherence: 0.0,
            kernel_residuals: vec![],
            dropped: 0,
            notes: vec![],
        };
        let good = tangency_check(&pencil_001().to_c64(), &[probe.clone()]).unwrap();
        assert!(good.max_contraction < 1e-12);
        let mis = PolyOneForm::homogeneous(HomPoly::var(3, 1), HomPoly::var(3, 0), HomPoly::zero(3, 1)).unwrap();
        let bad = tangency_check(&mis, &[probe]).unwrap();
        assert!(bad.max_contraction > 0.1, "{}", bad.max_contraction);
    }

    #[test]
    fn form_text_round_trip() {
        for (i, w) in
            [pencil_001(), logarithmic_form([q(1), Exact::omega(), q(3)]).unwrap(), pencil_001().to_chart(1).unwrap()]
                .into_iter()
                .enumerate()
        {
            let s = write_form(&format!("w{i}"), &w).unwrap();
            let (name, back) = parse_form(&s).unwrap();
            assert_eq!(name, format!("w{i}"));
            assert_eq!(back, AnyForm::Exact(w));
        }
        let wf = pencil_001().to_c64();
        let (_, back) = parse_form(&write_form_c64("f", &wf).unwrap()).unwrap();
        assert_eq!(back, AnyForm::Float(wf));
    }
}
