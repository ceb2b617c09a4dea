//! Builtin maps and map definition files.

use super::endo::{EndoP2, ExceptionalMeta};
use super::ratmap::{lattes_exact, lattes_lemniscatic, power_map, RatMap1};
use crate::error::{Error, Result};
use crate::numeric::textfmt::{self, AnyPoly, Document};
use crate::numeric::{Exact, HomPoly, Line, C64, P2};

/// A map of ℙ¹ or ℙ².
#[derive(Clone, Debug)]
pub enum MapRef {
    P1(RatMap1),
    P2(EndoP2),
}

impl MapRef {
    pub fn name(&self) -> &str {
        match self {
            MapRef::P1(m) => &m.name,
            MapRef::P2(m) => &m.name,
        }
    }

    pub fn as_p2(&self) -> Result<&EndoP2> {
        match self {
            MapRef::P2(m) => Ok(m),
            MapRef::P1(m) => Err(Error::InvalidInput(format!("'{}' is a map of P^1, expected P^2", m.name))),
        }
    }

    pub fn as_p1(&self) -> Result<&RatMap1> {
        match self {
            MapRef::P1(m) => Ok(m),
            MapRef::P2(m) => Err(Error::InvalidInput(format!("'{}' is a map of P^2, expected P^1", m.name))),
        }
    }
}

pub const BUILTIN_NAMES: &[&str] = &["monomial2", "lattes4", "f_star", "f_star_perturbed", "power2", "cyclic2"];

/// Skew product `[P(z,w) : Q(z,w) : R(z,w,t)]` from binary `P, Q` and ternary `R`.
pub fn make_skew(name: &str, p: &HomPoly, q: &HomPoly, r: &HomPoly) -> Result<EndoP2> {
    check_skew_shapes(p.nvars(), q.nvars(), r.nvars(), [p.degree(), q.degree(), r.degree()])?;
    RatMap1::new("base", p.clone(), q.clone())?;
    EndoP2::from_polys(name, [p.with_nvars(3)?, q.with_nvars(3)?, r.clone()])
}

pub fn make_skew_exact(name: &str, p: &HomPoly<Exact>, q: &HomPoly<Exact>, r: &HomPoly<Exact>) -> Result<EndoP2> {
    check_skew_shapes(p.nvars(), q.nvars(), r.nvars(), [p.degree(), q.degree(), r.degree()])?;
    RatMap1::from_exact("base", p.clone(), q.clone())?;
    EndoP2::from_exact(name, [p.with_nvars(3)?, q.with_nvars(3)?, r.clone()])
}

fn check_skew_shapes(np: usize, nq: usize, nr: usize, d: [u32; 3]) -> Result<()> {
    if np != 2 || nq != 2 || nr != 3 {
        return Err(Error::InvalidInput("skew products need binary P, Q and ternary R".into()));
    }
    if d[0] != d[1] || d[1] != d[2] {
        return Err(Error::DegreeMismatch(format!("deg P = {}, deg Q = {}, deg R = {}", d[0], d[1], d[2])));
    }
    Ok(())
}

fn e(n: i64) -> Exact {
    Exact::from_int(n)
}

fn coord_lines() -> Vec<Line> {
    (0..3)
        .map(|k| {
            let mut v = [C64::new(0.0, 0.0); 3];
            v[k] = C64::new(1.0, 0.0);
            Line::new(v).unwrap()
        })
        .collect()
}

/// `[z^d : w^d : t^d]`.
pub fn monomial(d: u32) -> EndoP2 {
    let p = HomPoly::monomial(2, [d, 0, 0], e(1));
    let q = HomPoly::monomial(2, [0, d, 0], e(1));
    let r = HomPoly::monomial(3, [0, 0, d], e(1));
    let unit = |k: usize| {
        let mut v = [C64::new(0.0, 0.0); 3];
        v[k] = C64::new(1.0, 0.0);
        v
    };
    make_skew_exact(&format!("monomial{d}"), &p, &q, &r)
        .expect("monomial map")
        .with_base(power_map(d))
        .expect("skew")
        .with_exceptional(ExceptionalMeta { points: vec![unit(0), unit(1), unit(2)], lines: coord_lines() })
}

/// `[t^d : z^d : w^d]`, the cyclic permutation of the monomial map.
pub fn cyclic_monomial(d: u32) -> EndoP2 {
    let f = [
        HomPoly::monomial(3, [0, 0, d], e(1)),
        HomPoly::monomial(3, [d, 0, 0], e(1)),
        HomPoly::monomial(3, [0, d, 0], e(1)),
    ];
    EndoP2::from_exact(&format!("cyclic{d}"), f)
        .expect("cyclic monomial map")
        .with_exceptional(ExceptionalMeta { points: Vec::new(), lines: coord_lines() })
}

/// The running example: lemniscatic Lattès base with fiber map `t⁴`.
pub fn f_star() -> EndoP2 {
    let (p, q) = lattes_exact();
    let r = HomPoly::monomial(3, [0, 0, 4], e(1));
    make_skew_exact("f_star", &p, &q, &r).expect("f_star").with_base(lattes_lemniscatic()).expect("skew")
}

/// Strength of the perturbation in [`f_star_perturbed`].
/// Real repelling fixed point of the lemniscatic base map, the root of
/// `3x⁴ − 6x² − 1` near 1.4679.
pub fn lattes_real_fixed_point() -> f64 {
    (1.0 + 48f64.sqrt() / 6.0).sqrt()
}

/// The fixed point of f★ over [`lattes_real_fixed_point`] with real fiber
/// coordinate.
pub fn f_star_fixed_point() -> P2 {
    let x = lattes_real_fixed_point();
    let t = (4.0 * x * (x * x - 1.0)).cbrt();
    P2::new([C64::new(x, 0.0), C64::new(1.0, 0.0), C64::new(t, 0.0)]).expect("nonzero")
}

pub fn perturbation_delta() -> Exact {
    Exact::rational(1, 100)
}

/// Non-skew negative control: `P + δw²t²`, `R + δzwt²` with `δ = 1/100`.
/// The `t`-dependence of the first component breaks pencil invariance.
pub fn f_star_perturbed() -> EndoP2 {
    let (p, q) = lattes_exact();
    let delta = perturbation_delta();
    let p3 = p.with_nvars(3).unwrap().add(&HomPoly::monomial(3, [0, 2, 2], delta.clone())).unwrap();
    let q3 = q.with_nvars(3).unwrap();
    let r = HomPoly::monomial(3, [0, 0, 4], e(1)).add(&HomPoly::monomial(3, [1, 1, 2], delta)).unwrap();
    EndoP2::from_exact("f_star_perturbed", [p3, q3, r]).expect("perturbed map is nondegenerate")
}

pub fn builtin(name: &str) -> Result<MapRef> {
    Ok(match name {
        "monomial2" => MapRef::P2(monomial(2)),
        "lattes4" => MapRef::P1(lattes_lemniscatic()),
        "f_star" => MapRef::P2(f_star()),
        "f_star_perturbed" => MapRef::P2(f_star_perturbed()),
        "power2" => MapRef::P1(power_map(2)),
        "cyclic2" => MapRef::P2(cyclic_monomial(2)),
        other => return Err(Error::UnknownMap(other.to_string())),
    })
}

/// Parse a map file:
///
/// ```text
/// map NAME space=p2
/// poly P vars=3 degree=2 exact=true
/// ...
/// end
/// ```
///
/// `space=p1` files carry blocks `P` and `Q`; `space=p2` files carry `P`,
/// `Q`, `R`. A `p2` map whose `P`, `Q` do not involve `t` is a skew product.
pub fn parse_map(text: &str) -> Result<MapRef> {
    let doc = textfmt::parse(text)?;
    let h = doc.header("map").ok_or(Error::Parse { line: 0, msg: "missing 'map' header".into() })?;
    let name = h.args.first().cloned().unwrap_or_else(|| "unnamed".into());
    let space = h.kv.get("space").map(String::as_str).unwrap_or("p2");
    let get = |k: &str| -> Result<&AnyPoly> {
        doc.poly(k).ok_or(Error::Parse { line: 0, msg: format!("missing poly block '{k}'") })
    };
    let all_exact = |names: &[&str], d: &Document| names.iter().all(|n| d.poly(n).and_then(|p| p.as_exact()).is_some());
    match space {
        "p1" => {
            let (p, q) = (get("P")?, get("Q")?);
            if all_exact(&["P", "Q"], &doc) {
                Ok(MapRef::P1(RatMap1::from_exact(
                    &name,
                    p.as_exact().unwrap().clone(),
                    q.as_exact().unwrap().clone(),
                )?))
            } else {
                Ok(MapRef::P1(RatMap1::new(&name, p.to_c64(), q.to_c64())?))
            }
        }
        "p2" => {
            let ps = [get("P")?, get("Q")?, get("R")?];
            if all_exact(&["P", "Q", "R"], &doc) {
                let f = ps.map(|p| p.as_exact().unwrap().with_nvars(3));
                let [a, b, c] = f;
                Ok(MapRef::P2(EndoP2::from_exact(&name, [a?, b?, c?])?))
            } else {
                let [a, b, c] = ps.map(|p| p.to_c64().with_nvars(3));
                Ok(MapRef::P2(EndoP2::from_polys(&name, [a?, b?, c?])?))
            }
        }
        other => Err(Error::Parse { line: 0, msg: format!("unknown space '{other}'") }),
    }
}

pub fn write_map(m: &EndoP2) -> String {
    let mut s = format!("map {} space=p2\n", m.name);
    let names = ["P", "Q", "R"];
    match m.exact() {
        Some(f) => {
            for (n, p) in names.iter().zip(f) {
                s.push_str(&textfmt::write_exact(n, p));
            }
        }
        None => {
            for (n, p) in names.iter().zip(m.components()) {
                s.push_str(&textfmt::write_float(n, p));
            }
        }
    }
    s
}

/// Resolve a builtin name or a path to a map file.
pub fn resolve(reference: &str) -> Result<MapRef> {
    match builtin(reference) {
        Ok(m) => Ok(m),
        Err(Error::UnknownMap(_)) if std::path::Path::new(reference).exists() => {
            parse_map(&std::fs::read_to_string(reference)?)
        }
        Err(e) => Err(e),
    }
}
