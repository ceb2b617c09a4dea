//! Line-oriented text format for polynomials and the documents built from
//! them (map files, 1-form files).
//!
//! ```text
//! # comment
//! map f_star degree=4
//! poly P vars=2 degree=4 exact=true
//! 4 0 0 : 1 1 0 1
//! 2 2 0 : 2 1 0 1
//! end
//! ```
//!
//! Each term line is an exponent triple, a colon and the coefficient. Float
//! coefficients are `re im`. Exact Gaussian rationals are the quadruple
//! `re_num re_den im_num im_den`; other cyclotomic elements are written as
//! `zeta` followed by four numerator/denominator pairs in the basis
//! `1, ζ, ζ², ζ³` with `ζ = exp(iπ/6)`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;

use super::exact::Exact;
use super::poly::{Exps, HomPoly};
use super::scalar::C64;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum AnyPoly {
    Float(HomPoly<C64>),
    Exact(HomPoly<Exact>),
}

impl AnyPoly {
    pub fn to_c64(&self) -> HomPoly<C64> {
        match self {
            AnyPoly::Float(p) => p.clone(),
            AnyPoly::Exact(p) => p.to_c64(),
        }
    }

    pub fn as_exact(&self) -> Option<&HomPoly<Exact>> {
        match self {
            AnyPoly::Exact(p) => Some(p),
            AnyPoly::Float(_) => None,
        }
    }
}

/// A header line `keyword arg... key=value...`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Header {
    pub keyword: String,
    pub args: Vec<String>,
    pub kv: BTreeMap<String, String>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Document {
    pub headers: Vec<Header>,
    pub polys: Vec<(String, AnyPoly)>,
}

impl Document {
    pub fn poly(&self, name: &str) -> Option<&AnyPoly> {
        self.polys.iter().find(|(n, _)| n == name).map(|(_, p)| p)
    }

    pub fn header(&self, keyword: &str) -> Option<&Header> {
        self.headers.iter().find(|h| h.keyword == keyword)
    }
}

fn fmt_exps(out: &mut String, e: &Exps) {
    let _ = write!(out, "{} {} {} :", e[0], e[1], e[2]);
}

pub fn write_float(name: &str, p: &HomPoly<C64>) -> String {
    let mut s = format!("poly {name} vars={} degree={} exact=false\n", p.nvars(), p.degree());
    for (e, c) in p.terms() {
        fmt_exps(&mut s, e);
        let _ = writeln!(s, " {:?} {:?}", c.re, c.im);
    }
    s.push_str("end\n");
    s
}

pub fn write_exact(name: &str, p: &HomPoly<Exact>) -> String {
    let mut s = format!("poly {name} vars={} degree={} exact=true\n", p.nvars(), p.degree());
    for (e, c) in p.terms() {
        fmt_exps(&mut s, e);
        match c.as_gaussian() {
            Some((re, im)) => {
                let _ = writeln!(s, " {} {} {} {}", re.numer(), re.denom(), im.numer(), im.denom());
            }
            None => {
                s.push_str(" zeta");
                for x in c.components() {
                    let _ = write!(s, " {} {}", x.numer(), x.denom());
                }
                s.push('\n');
            }
        }
    }
    s.push_str("end\n");
    s
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

fn parse_header(line: usize, toks: &[&str]) -> Result<Header> {
    let mut h = Header { keyword: toks[0].to_string(), ..Default::default() };
    for t in &toks[1..] {
        match t.split_once('=') {
            Some((k, v)) => {
                if h.kv.insert(k.to_string(), v.to_string()).is_some() {
                    return Err(parse_err(line, format!("duplicate key '{k}'")));
                }
            }
            None => h.args.push(t.to_string()),
        }
    }
    Ok(h)
}

fn big(line: usize, s: &str) -> Result<BigInt> {
    s.parse::<BigInt>().map_err(|_| parse_err(line, format!("bad integer '{s}'")))
}

fn ratio(line: usize, n: &str, d: &str) -> Result<BigRational> {
    let d = big(line, d)?;
    if d.is_zero() {
        return Err(parse_err(line, "zero denominator"));
    }
    Ok(BigRational::new(big(line, n)?, d))
}

fn exact_from_parts(parts: [BigRational; 4]) -> Exact {
    Exact::from_components(parts)
}

pub fn parse(text: &str) -> Result<Document> {
    let mut doc = Document::default();
    let mut lines = text.lines().enumerate().peekable();
    while let Some((ln, raw)) = lines.next() {
        let ln = ln + 1;
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks[0] != "poly" {
            doc.headers.push(parse_header(ln, &toks)?);
            continue;
        }
        let h = parse_header(ln, &toks)?;
        let name = h.args.first().cloned().ok_or_else(|| parse_err(ln, "poly block needs a name"))?;
        let nvars: usize =
            h.kv.get("vars")
                .ok_or_else(|| parse_err(ln, "missing vars="))?
                .parse()
                .map_err(|_| parse_err(ln, "bad vars="))?;
        let degree: u32 =
            h.kv.get("degree")
                .ok_or_else(|| parse_err(ln, "missing degree="))?
                .parse()
                .map_err(|_| parse_err(ln, "bad degree="))?;
        let exact = h.kv.get("exact").map(|v| v == "true").unwrap_or(false);
        let mut fterms: Vec<(Exps, C64)> = Vec::new();
        let mut eterms: Vec<(Exps, Exact)> = Vec::new();
        let mut closed = false;
        for (ln2, raw2) in lines.by_ref() {
            let ln2 = ln2 + 1;
            let l2 = raw2.split('#').next().unwrap().trim();
            if l2.is_empty() {
                continue;
            }
            if l2 == "end" {
                closed = true;
                break;
            }
            let (ex, co) = l2.split_once(':').ok_or_else(|| parse_err(ln2, "term line needs ':'"))?;
            let ev: Vec<u32> = ex
                .split_whitespace()
                .map(|t| t.parse::<u32>().map_err(|_| parse_err(ln2, format!("bad exponent '{t}'"))))
                .collect::<Result<_>>()?;
            if ev.len() != 3 {
                return Err(parse_err(ln2, "exponent tuple must have three entries"));
            }
            let e = [ev[0], ev[1], ev[2]];
            let ct: Vec<&str> = co.split_whitespace().collect();
            if exact {
                let val = if ct.first() == Some(&"zeta") {
                    if ct.len() != 9 {
                        return Err(parse_err(ln2, "zeta coefficient needs 8 integers"));
                    }
                    exact_from_parts([
                        ratio(ln2, ct[1], ct[2])?,
                        ratio(ln2, ct[3], ct[4])?,
                        ratio(ln2, ct[5], ct[6])?,
                        ratio(ln2, ct[7], ct[8])?,
                    ])
                } else {
                    if ct.len() != 4 {
                        return Err(parse_err(ln2, "exact coefficient needs 4 integers"));
                    }
                    let re = ratio(ln2, ct[0], ct[1])?;
                    let im = ratio(ln2, ct[2], ct[3])?;
                    Exact::from_bigs(re.numer().clone(), re.denom().clone())
                        .add(&Exact::i().mul(&Exact::from_bigs(im.numer().clone(), im.denom().clone())))
                };
                eterms.push((e, val));
            } else {
                if ct.len() != 2 {
                    return Err(parse_err(ln2, "float coefficient needs 're im'"));
                }
                let re: f64 = ct[0].parse().map_err(|_| parse_err(ln2, "bad real part"))?;
                let im: f64 = ct[1].parse().map_err(|_| parse_err(ln2, "bad imaginary part"))?;
                fterms.push((e, C64::new(re, im)));
            }
        }
        if !closed {
            return Err(parse_err(ln, format!("poly block '{name}' missing 'end'")));
        }
        let p = if exact {
            AnyPoly::Exact(HomPoly::from_terms(nvars, degree, eterms).map_err(|e| parse_err(ln, e.to_string()))?)
        } else {
            AnyPoly::Float(HomPoly::from_terms(nvars, degree, fterms).map_err(|e| parse_err(ln, e.to_string()))?)
        };
        doc.polys.push((name, p));
    }
    Ok(doc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_round_trip() {
        let p =
            HomPoly::from_terms(3, 2, [([2, 0, 0], C64::new(0.1, -3.5)), ([0, 1, 1], C64::new(1e-17, 2.0))]).unwrap();
        let s = write_float("P", &p);
        let d = parse(&s).unwrap();
        assert_eq!(d.poly("P"), Some(&AnyPoly::Float(p)));
    }

    #[test]
    fn exact_round_trip_with_zeta() {
        let c1 = Exact::gaussian(-7, 3, 1, 2);
        let c2 = Exact::omega().mul(&Exact::rational(5, 11));
        let p = HomPoly::from_terms(3, 3, [([1, 1, 1], c1), ([0, 0, 3], c2)]).unwrap();
        let s = write_exact("R", &p);
        let d = parse(&s).unwrap();
        assert_eq!(d.poly("R"), Some(&AnyPoly::Exact(p)));
    }

    #[test]
    fn headers_and_errors() {
        let d = parse("map foo degree=2 skew=true\n").unwrap();
        let h = d.header("map").unwrap();
        assert_eq!(h.args, vec!["foo".to_string()]);
        assert_eq!(h.kv["degree"], "2");
        assert!(matches!(parse("poly P vars=2 degree=1\n1 0 0 : 1 0\n"), Err(Error::Parse { .. })));
        assert!(parse("poly P vars=2 degree=2\n1 0 0 : 1 0\nend\n").is_err());
    }
}
