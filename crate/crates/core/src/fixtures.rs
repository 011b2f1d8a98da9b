//! Golden inputs stored as TOML files under `fixtures/`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use num_rational::BigRational;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::parser::parse;

/// Directory holding the shipped fixtures. `CONTACTLIN_FIXTURES` overrides
/// the build-time location.
pub fn fixture_dir() -> PathBuf {
    match std::env::var_os("CONTACTLIN_FIXTURES") {
        Some(d) => PathBuf::from(d),
        None => Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures"),
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fixture {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub f: String,
    /// Expected classification tag.
    pub outcome: String,
    pub first_failing: Option<String>,
    /// Expected tower values, by name.
    #[serde(default)]
    pub invariants: BTreeMap<String, String>,
    pub transform: Option<TransformFixture>,
    pub synthesis: Option<SynthesisFixture>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformFixture {
    pub phi: String,
    pub psi: String,
    pub chi: String,
    pub a1: String,
    pub eta: Option<String>,
    /// `"linear5"` or `"linear4"`.
    pub target: String,
    pub s: Option<String>,
    pub abar: Option<String>,
    #[serde(rename = "H")]
    pub h: Option<String>,
    pub b: Option<String>,
    /// Parameter values for float-mode checks.
    #[serde(default)]
    pub pins: BTreeMap<String, String>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisFixture {
    pub base: [f64; 3],
    #[serde(rename = "H")]
    pub h: Option<String>,
    pub b: Option<String>,
    #[serde(default)]
    pub pins: BTreeMap<String, String>,
    /// Closed-form candidates for the gauge fit.
    #[serde(default)]
    pub candidate: BTreeMap<String, String>,
}

pub fn parse_rational(s: &str) -> Result<BigRational> {
    let s = s.trim();
    let bad = || Error::Fixture(format!("`{s}` is not a rational number"));
    match s.split_once('/') {
        Some((n, d)) => {
            let n = n.trim().parse().map_err(|_| bad())?;
            let d: num_bigint::BigInt = d.trim().parse().map_err(|_| bad())?;
            if d == 0.into() {
                return Err(bad());
            }
            Ok(BigRational::new(n, d))
        }
        None => Ok(BigRational::from_integer(s.parse().map_err(|_| bad())?)),
    }
}

pub fn parse_pins(pins: &BTreeMap<String, String>) -> Result<BTreeMap<String, BigRational>> {
    pins.iter().map(|(k, v)| Ok((k.clone(), parse_rational(v)?))).collect()
}

fn expr(field: &str, s: &str) -> Result<Expr> {
    parse(s).map_err(|e| Error::Fixture(format!("{field}: {e}")))
}

impl Fixture {
    pub fn from_toml(text: &str) -> Result<Fixture> {
        let fx: Fixture = toml::from_str(text).map_err(|e| Error::Fixture(e.to_string()))?;
        fx.validate()?;
        Ok(fx)
    }

    pub fn load(path: &Path) -> Result<Fixture> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Fixture(format!("{}: {e}", path.display())))?;
        Fixture::from_toml(&text)
    }

    /// Loads `name` from [`fixture_dir`], or `name` as a path if it names a
    /// file.
    pub fn named(name: &str) -> Result<Fixture> {
        let p = Path::new(name);
        if p.is_file() {
            return Fixture::load(p);
        }
        Fixture::load(&fixture_dir().join(format!("{name}.toml")))
    }

    /// All fixtures in [`fixture_dir`], sorted by name.
    pub fn all() -> Result<Vec<Fixture>> {
        let dir = fixture_dir();
        let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)
            .map_err(|e| Error::Fixture(format!("{}: {e}", dir.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "toml"))
            .collect();
        paths.sort();
        paths.iter().map(|p| Fixture::load(p)).collect()
    }

    fn validate(&self) -> Result<()> {
        const TAGS: [&str; 4] =
            ["FiveSymmetryLinearizable", "FourSymmetryLinearizable", "WuenschmannZero", "OutsideScope"];
        if !TAGS.contains(&self.outcome.as_str()) {
            return Err(Error::Fixture(format!("unknown outcome `{}`", self.outcome)));
        }
        self.f()?;
        for (k, v) in &self.invariants {
            expr(k, v)?;
        }
        if let Some(t) = &self.transform {
            if !["linear5", "linear4"].contains(&t.target.as_str()) {
                return Err(Error::Fixture(format!("unknown target `{}`", t.target)));
            }
            parse_pins(&t.pins)?;
        }
        if let Some(s) = &self.synthesis {
            parse_pins(&s.pins)?;
            for (k, v) in &s.candidate {
                if !["a1", "phi", "eta", "chi", "psi"].contains(&k.as_str()) {
                    return Err(Error::Fixture(format!("unknown candidate component `{k}`")));
                }
                expr(k, v)?;
            }
        }
        Ok(())
    }

    pub fn f(&self) -> Result<Expr> {
        expr("f", &self.f)
    }

    pub fn invariant_exprs(&self) -> Result<Vec<(String, Expr)>> {
        self.invariants.iter().map(|(k, v)| Ok((k.clone(), expr(k, v)?))).collect()
    }
}

impl TransformFixture {
    pub fn expr(&self, field: &str) -> Result<Option<Expr>> {
        let s = match field {
            "phi" => Some(&self.phi),
            "psi" => Some(&self.psi),
            "chi" => Some(&self.chi),
            "a1" => Some(&self.a1),
            "eta" => self.eta.as_ref(),
            "s" => self.s.as_ref(),
            "abar" => self.abar.as_ref(),
            "H" => self.h.as_ref(),
            "b" => self.b.as_ref(),
            _ => None,
        };
        s.map(|s| expr(field, s)).transpose()
    }
}

impl SynthesisFixture {
    pub fn candidate(&self) -> Result<crate::synthesizer::Candidate> {
        let get = |k: &str| self.candidate.get(k).map(|v| expr(k, v)).transpose();
        Ok(crate::synthesizer::Candidate {
            a1: get("a1")?,
            phi: get("phi")?,
            eta: get("eta")?,
            chi: get("chi")?,
            psi: get("psi")?,
        })
    }
}
