use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{exact_from_f64, parse_decimal, Exact, Real};

use super::{Base, Branch, Bus, BusKind, Generator, NetworkCase, TapChanger, Units};

pub const SCHEMA: &str = "opf-case/1";

/// On-disk case document (JSON), physical units.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseFile {
    pub schema: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
    pub base: BaseEntry,
    pub buses: Vec<BusEntry>,
    #[serde(default)]
    pub branches: Vec<BranchEntry>,
    #[serde(default)]
    pub generators: Vec<GeneratorEntry>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseEntry {
    pub mva: f64,
    pub kv: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusEntry {
    pub id: u32,
    pub kind: BusKind,
    pub p_load_kw: f64,
    pub q_load_kvar: f64,
    pub v_min_pu: f64,
    pub v_max_pu: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_set_pu: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchEntry {
    pub from: u32,
    pub to: u32,
    pub r_ohm: f64,
    pub x_ohm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub i_max_a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transformer: Option<TransformerEntry>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformerEntry {
    pub t_min: DecimalValue,
    pub t_max: DecimalValue,
    pub k_taps: u32,
}

/// Ratio bound given either as a JSON number or a decimal string.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DecimalValue {
    Text(String),
    Number(f64),
}

impl DecimalValue {
    fn exact(&self) -> Result<Exact> {
        match self {
            DecimalValue::Text(s) => parse_decimal(s),
            DecimalValue::Number(v) => exact_from_f64(*v),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorEntry {
    pub bus: u32,
    pub p_min_kw: f64,
    pub p_max_kw: f64,
    pub q_min_kvar: f64,
    pub q_max_kvar: f64,
}

/// Reads and validates a case file.
pub fn load_case<T: Real>(path: impl AsRef<Path>) -> Result<NetworkCase<T>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let fallback = path.file_stem().and_then(|s| s.to_str()).unwrap_or("case");
    parse_case(&text, fallback)
}

/// Parses case JSON; `fallback_name` is used when the document has no name.
pub fn parse_case<T: Real>(text: &str, fallback_name: &str) -> Result<NetworkCase<T>> {
    let file: CaseFile = serde_json::from_str(text)?;
    file.into_case(fallback_name)
}

impl CaseFile {
    pub fn into_case<T: Real>(self, fallback_name: &str) -> Result<NetworkCase<T>> {
        if self.schema != SCHEMA {
            return Err(Error::Parse(format!(
                "unsupported schema {:?}, expected {SCHEMA:?}",
                self.schema
            )));
        }
        let lit = |v: f64| T::lit(v);
        let index: HashMap<u32, usize> =
            self.buses.iter().enumerate().map(|(k, b)| (b.id, k)).collect();
        let lookup = |id: u32, what: &str| {
            index
                .get(&id)
                .copied()
                .ok_or_else(|| Error::Validation(format!("{what} references unknown bus {id}")))
        };
        let buses = self
            .buses
            .iter()
            .map(|b| Bus {
                id: b.id,
                kind: b.kind,
                p_load: lit(b.p_load_kw),
                q_load: lit(b.q_load_kvar),
                v_min: lit(b.v_min_pu),
                v_max: lit(b.v_max_pu),
                v_set: lit(b.v_set_pu.unwrap_or(1.0)),
            })
            .collect();
        let mut branches = Vec::with_capacity(self.branches.len());
        for br in &self.branches {
            let tap = match &br.transformer {
                Some(t) => Some(TapChanger::new(t.t_min.exact()?, t.t_max.exact()?, t.k_taps)?),
                None => None,
            };
            branches.push(Branch {
                from: lookup(br.from, "branch")?,
                to: lookup(br.to, "branch")?,
                r: lit(br.r_ohm),
                x: lit(br.x_ohm),
                i_max: br.i_max_a.map(lit),
                tap,
            });
        }
        let mut generators = Vec::with_capacity(self.generators.len());
        for g in &self.generators {
            generators.push(Generator {
                bus: lookup(g.bus, "generator")?,
                p_min: lit(g.p_min_kw),
                p_max: lit(g.p_max_kw),
                q_min: lit(g.q_min_kvar),
                q_max: lit(g.q_max_kvar),
            });
        }
        NetworkCase::new(
            self.name.unwrap_or_else(|| fallback_name.to_string()),
            Base { mva: lit(self.base.mva), kv: lit(self.base.kv) },
            Units::Physical,
            buses,
            branches,
            generators,
        )
    }

    /// Document for a case (converted to physical units first).
    pub fn from_case<T: Real>(case: &NetworkCase<T>) -> Result<Self> {
        let case = case.from_per_unit()?;
        let f = |v: T| v.as_f64();
        let id = |i: usize| case.buses()[i].id;
        Ok(CaseFile {
            schema: SCHEMA.to_string(),
            name: Some(case.name().to_string()),
            notes: None,
            base: BaseEntry { mva: f(case.base().mva), kv: f(case.base().kv) },
            buses: case
                .buses()
                .iter()
                .map(|b| BusEntry {
                    id: b.id,
                    kind: b.kind,
                    p_load_kw: f(b.p_load),
                    q_load_kvar: f(b.q_load),
                    v_min_pu: f(b.v_min),
                    v_max_pu: f(b.v_max),
                    v_set_pu: (b.kind == BusKind::Slack).then(|| f(b.v_set)),
                })
                .collect(),
            branches: case
                .branches()
                .iter()
                .map(|br| BranchEntry {
                    from: id(br.from),
                    to: id(br.to),
                    r_ohm: f(br.r),
                    x_ohm: f(br.x),
                    i_max_a: br.i_max.map(f),
                    transformer: br.tap.as_ref().map(|t| TransformerEntry {
                        t_min: DecimalValue::Text(decimal_text(&t.t_min)),
                        t_max: DecimalValue::Text(decimal_text(&t.t_max)),
                        k_taps: t.k_taps,
                    }),
                })
                .collect(),
            generators: case
                .generators()
                .iter()
                .map(|g| GeneratorEntry {
                    bus: id(g.bus),
                    p_min_kw: f(g.p_min),
                    p_max_kw: f(g.p_max),
                    q_min_kvar: f(g.q_min),
                    q_max_kvar: f(g.q_max),
                })
                .collect(),
        })
    }
}

/// Decimal text for a rational with a power-of-ten-compatible denominator,
/// `n/d` otherwise.
fn decimal_text(r: &Exact) -> String {
    let mut d = *r.denom();
    let (mut twos, mut fives) = (0u32, 0u32);
    while d % 2 == 0 {
        d /= 2;
        twos += 1;
    }
    while d % 5 == 0 {
        d /= 5;
        fives += 1;
    }
    if d != 1 {
        return format!("{}/{}", r.numer(), r.denom());
    }
    let digits = twos.max(fives);
    let scaled = r * Exact::from_integer(10i64.pow(digits));
    let n = scaled.to_integer();
    if digits == 0 {
        return n.to_string();
    }
    let sign = if n < 0 { "-" } else { "" };
    let n = n.unsigned_abs();
    let p = 10u64.pow(digits);
    format!("{sign}{}.{:0width$}", n / p, n % p, width = digits as usize)
}
