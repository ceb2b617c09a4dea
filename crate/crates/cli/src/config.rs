//! Experiment configs: one TOML document with common keys at top level and
//! one optional table per command.

use std::fmt;

use serde::de::{self, DeserializeOwned, Deserializer};
use serde::{Deserialize, Serialize, Serializer};
use skewlab::{Precision, C64};

use crate::error::CliError;

pub const COMMANDS: [&str; 13] = [
    "green",
    "slice",
    "sample",
    "compare",
    "lyapunov",
    "periodic",
    "audit",
    "normal-form",
    "sigma",
    "probe",
    "foliation",
    "product-structure",
    "report",
];

const COMMON_KEYS: [&str; 4] = ["map", "seed", "precision", "threads"];

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Common {
    pub map: Option<String>,
    #[serde(default)]
    pub seed: u64,
    /// Defaults to `extended` for `normal-form`, `double` elsewhere.
    #[serde(default)]
    pub precision: Option<Precision>,
    /// Worker threads; 0 selects the available parallelism.
    #[serde(default)]
    pub threads: usize,
}

/// A complex number written as a real or as `[re, im]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cplx(pub C64);

impl Serialize for Cplx {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        [self.0.re, self.0.im].serialize(s)
    }
}

impl<'de> Deserialize<'de> for Cplx {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Real(f64),
            Pair([f64; 2]),
        }
        match Repr::deserialize(d).map_err(|_| de::Error::custom("expected a number or [re, im]"))? {
            Repr::Real(x) => Ok(Cplx(C64::new(x, 0.0))),
            Repr::Pair([a, b]) => Ok(Cplx(C64::new(a, b))),
        }
    }
}

pub fn cplx_vec(v: &[C64]) -> Vec<Cplx> {
    v.iter().copied().map(Cplx).collect()
}

pub fn to_c64(v: &[Cplx]) -> Vec<C64> {
    v.iter().map(|c| c.0).collect()
}

/// Counts accept integral floats such as `1e5`.
pub fn count<'de, D: Deserializer<'de>>(d: D) -> Result<usize, D::Error> {
    struct V;
    impl de::Visitor<'_> for V {
        type Value = usize;
        fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
            f.write_str("a nonnegative integer")
        }
        fn visit_i64<E: de::Error>(self, v: i64) -> Result<usize, E> {
            usize::try_from(v).map_err(|_| E::custom(format!("expected a nonnegative integer, found {v}")))
        }
        fn visit_u64<E: de::Error>(self, v: u64) -> Result<usize, E> {
            usize::try_from(v).map_err(|_| E::custom(format!("{v} is too large")))
        }
        fn visit_f64<E: de::Error>(self, v: f64) -> Result<usize, E> {
            if v >= 0.0 && v.fract() == 0.0 && v < 2f64.powi(53) {
                Ok(v as usize)
            } else {
                Err(E::custom(format!("expected a nonnegative integer, found {v}")))
            }
        }
    }
    d.deserialize_any(V)
}

/// A raw config document plus `--set key=value` overrides.
#[derive(Clone, Debug, Default)]
pub struct RawConfig {
    pub table: toml::Table,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        Ok(RawConfig { table })
    }

    /// `key=value` with a TOML value (bare words become strings). Keys other
    /// than the common ones go to the table of `command` unless qualified.
    pub fn set(&mut self, command: &str, assignment: &str) -> Result<(), CliError> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--set expects key=value, got '{assignment}'")))?;
        let key = key.trim();
        let value = parse_value(value.trim());
        let mut path: Vec<&str> = key.split('.').collect();
        if path.len() == 1 && !COMMON_KEYS.contains(&path[0]) {
            path.insert(0, command);
        }
        let mut t = &mut self.table;
        for seg in &path[..path.len() - 1] {
            let entry = t.entry(seg.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
            t = entry.as_table_mut().ok_or_else(|| CliError::Config(format!("'{seg}' is not a table")))?;
        }
        t.insert(path[path.len() - 1].to_string(), value);
        Ok(())
    }

    /// Split into the common keys and the typed table of `command`.
    pub fn resolve<P: DeserializeOwned>(&self, command: &str) -> Result<(Common, P), CliError> {
        let mut top = self.table.clone();
        let mut section = toml::Table::new();
        for c in COMMANDS {
            if let Some(v) = top.remove(c) {
                let t = match v {
                    toml::Value::Table(t) => t,
                    other => {
                        return Err(CliError::Config(format!("'{c}' must be a table, found {}", other.type_str())))
                    }
                };
                if c == command {
                    section = t;
                }
            }
        }
        let common: Common = toml::Value::Table(top)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(format!("top level: {}", e.message())))?;
        let params: P = toml::Value::Table(section)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(format!("[{command}]: {}", e.message())))?;
        Ok((common, params))
    }
}

fn parse_value(s: &str) -> toml::Value {
    let doc = format!("v = {s}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(s.to_string())),
        Err(_) => toml::Value::String(s.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, Deserialize)]
    #[serde(deny_unknown_fields)]
    struct P {
        #[serde(default, deserialize_with = "count")]
        n: usize,
        #[serde(default)]
        z: Option<Vec<Cplx>>,
    }

    #[test]
    fn overrides_and_sections() {
        let mut c = RawConfig::parse("map = \"f_star\"\n[lyapunov]\nn = 10\n[green]\nn = 3\n").unwrap();
        c.set("lyapunov", "n=1e5").unwrap();
        c.set("lyapunov", "z=[1, [0, 2]]").unwrap();
        c.set("lyapunov", "seed=7").unwrap();
        let (common, p): (Common, P) = c.resolve("lyapunov").unwrap();
        assert_eq!(common.seed, 7);
        assert_eq!(common.map.as_deref(), Some("f_star"));
        assert_eq!(p.n, 100_000);
        assert_eq!(p.z.unwrap()[1].0, C64::new(0.0, 2.0));
    }

    #[test]
    fn unknown_fields_are_named() {
        let c = RawConfig::parse("[green]\nbogus = 1\n").unwrap();
        let e = c.resolve::<P>("green").unwrap_err().to_string();
        assert!(e.contains("bogus"), "{e}");
        let c = RawConfig::parse("wat = 1\n").unwrap();
        assert!(c.resolve::<P>("green").unwrap_err().to_string().contains("wat"));
    }

    #[test]
    fn counts_reject_fractions() {
        let mut c = RawConfig::default();
        c.set("green", "n=2.5").unwrap();
        assert!(c.resolve::<P>("green").is_err());
    }

    #[test]
    fn bare_words_are_strings() {
        let mut c = RawConfig::default();
        c.set("green", "map=monomial2").unwrap();
        let (common, _): (Common, P) = c.resolve("green").unwrap();
        assert_eq!(common.map.as_deref(), Some("monomial2"));
    }
}
