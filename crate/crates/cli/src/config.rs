//! Scenario configuration files.
//!
//! A config is one JSON object: `command`, the box keys `n`, `K`, `margin`, `N`, optional
//! `out` and `seed`, and the keys of the chosen command.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::CliError;

pub const COMMANDS: [&str; 12] = [
    "quantize-apply",
    "extract",
    "extend-roundtrip",
    "compose-order",
    "adjoint-check",
    "parametrix",
    "fso-apply",
    "fso-compose",
    "l2-bounds",
    "evolve",
    "wavefront",
    "taylor-suite",
];

const COMMON_KEYS: [&str; 7] = ["command", "n", "K", "margin", "N", "out", "seed"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Common {
    pub command: String,
    #[serde(default = "one")]
    pub n: usize,
    #[serde(rename = "K", default = "default_k")]
    pub k: usize,
    /// Box margin; commands pick what they need when absent.
    #[serde(default)]
    pub margin: Option<usize>,
    #[serde(rename = "N", default)]
    pub grid: Option<usize>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn one() -> usize {
    1
}

fn default_k() -> usize {
    32
}

fn default_ms() -> Vec<usize> {
    vec![1, 2, 3]
}

fn default_pairs() -> usize {
    20
}

fn default_amplitude() -> String {
    "1".into()
}

fn default_h() -> f64 {
    24.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantizeApply {
    pub symbol: String,
    pub f: String,
    #[serde(default)]
    pub order: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Extract {
    pub symbol: String,
    #[serde(default)]
    pub order: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    SmoothedBox,
    CompactBump,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtendRoundtrip {
    #[serde(default = "default_roundtrip_symbols")]
    pub symbols: Vec<String>,
    #[serde(rename = "H", default = "default_h")]
    pub h: f64,
    #[serde(default = "default_profile")]
    pub profile: Profile,
}

fn default_roundtrip_symbols() -> Vec<String> {
    ["1", "xi1", "ang(xi)", "exp(i*x1)*ang(xi)"].map(String::from).to_vec()
}

fn default_profile() -> Profile {
    Profile::SmoothedBox
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComposeOrder {
    pub a: String,
    pub b: String,
    #[serde(rename = "M", default = "default_ms")]
    pub ms: Vec<usize>,
    #[serde(default)]
    pub order_a: f64,
    #[serde(default)]
    pub order_b: f64,
    /// Expected composite symbol; compared with the largest M.
    #[serde(default)]
    pub expected: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdjointCheck {
    pub symbol: String,
    #[serde(rename = "M", default = "two")]
    pub m: usize,
    #[serde(default = "default_pairs")]
    pub pairs: usize,
    #[serde(default)]
    pub order: f64,
    #[serde(default)]
    pub expected: Option<String>,
}

fn two() -> usize {
    2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Parametrix {
    pub symbol: String,
    #[serde(rename = "M", default = "four")]
    pub m: usize,
    /// Order of the symbol; fitted from its growth when absent.
    #[serde(default)]
    pub order: Option<f64>,
    #[serde(default = "default_n0")]
    pub n0: f64,
}

fn four() -> usize {
    4
}

fn default_n0() -> f64 {
    2.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FsoApply {
    pub phase: String,
    #[serde(default = "default_amplitude")]
    pub amplitude: String,
    pub f: String,
    #[serde(default)]
    pub t: f64,
    #[serde(default)]
    pub order: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CompositionSide {
    /// T∘P.
    FsoPdo,
    /// P∘T.
    PdoFso,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Route {
    Derivative,
    Difference,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FsoCompose {
    pub phase: String,
    #[serde(default = "default_amplitude")]
    pub amplitude: String,
    pub symbol: String,
    pub side: CompositionSide,
    #[serde(default = "default_route")]
    pub route: Route,
    #[serde(rename = "M", default = "default_ms")]
    pub ms: Vec<usize>,
    #[serde(default)]
    pub t: f64,
    #[serde(default)]
    pub order_amplitude: f64,
    #[serde(default)]
    pub order_symbol: f64,
}

fn default_route() -> Route {
    Route::Derivative
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct L2Bounds {
    #[serde(default)]
    pub symbols: Vec<String>,
    /// Number of additional random band-limited order-0 symbols.
    #[serde(default)]
    pub random: usize,
    #[serde(default)]
    pub phase: Option<String>,
    #[serde(default = "default_amplitude")]
    pub amplitude: String,
    #[serde(default)]
    pub t: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Methods {
    Fso,
    Reference,
    Both,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Evolve {
    pub a1: String,
    #[serde(default)]
    pub a0: Option<String>,
    pub f: String,
    pub times: Vec<f64>,
    #[serde(rename = "M", default = "one")]
    pub m: usize,
    #[serde(default = "default_methods")]
    pub method: Methods,
}

fn default_methods() -> Methods {
    Methods::Both
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Wavefront {
    pub f: String,
    /// Number of cones; defaults to 2 for n = 1 and 8 otherwise.
    #[serde(default)]
    pub cones: Option<usize>,
    #[serde(default = "default_half_angle")]
    pub half_angle: f64,
    #[serde(default = "default_cells")]
    pub cells: usize,
    #[serde(default = "default_power")]
    pub power: u32,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    /// Symbol whose operator is checked for containment.
    #[serde(default)]
    pub symbol: Option<String>,
}

fn default_half_angle() -> f64 {
    std::f64::consts::PI / 8.0
}

fn default_cells() -> usize {
    4
}

fn default_power() -> u32 {
    torus_pdo::microlocal::DEFAULT_BUMP_POWER
}

fn default_threshold() -> f64 {
    torus_pdo::microlocal::DEFAULT_THRESHOLD
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaylorSuite {
    #[serde(default = "default_instances")]
    pub instances: usize,
    #[serde(rename = "M", default = "four")]
    pub m_max: usize,
}

fn default_instances() -> usize {
    100
}

#[derive(Clone, Debug, PartialEq)]
pub enum Command {
    QuantizeApply(QuantizeApply),
    Extract(Extract),
    ExtendRoundtrip(ExtendRoundtrip),
    ComposeOrder(ComposeOrder),
    AdjointCheck(AdjointCheck),
    Parametrix(Parametrix),
    FsoApply(FsoApply),
    FsoCompose(FsoCompose),
    L2Bounds(L2Bounds),
    Evolve(Evolve),
    Wavefront(Wavefront),
    TaylorSuite(TaylorSuite),
}

/// Parsed scenario plus the directory relative paths resolve against.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub common: Common,
    pub command: Command,
    pub base_dir: PathBuf,
}

fn typed<T: DeserializeOwned>(v: Value) -> Result<T, CliError> {
    serde_path_to_error::deserialize(v).map_err(|e| {
        let path = e.path().to_string();
        CliError::Usage(format!("config key `{path}`: {}", e.inner()))
    })
}

impl ScenarioConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, CliError> {
        let value: Value = serde_json::from_str(text).map_err(|e| {
            CliError::Usage(format!("malformed JSON at line {}, column {}: {e}", e.line(), e.column()))
        })?;
        let Value::Object(map) = value else {
            return Err(CliError::Usage("config must be a JSON object".into()));
        };
        let (mut common_map, mut rest) = (Map::new(), Map::new());
        for (k, v) in map {
            if COMMON_KEYS.contains(&k.as_str()) {
                common_map.insert(k, v);
            } else {
                rest.insert(k, v);
            }
        }
        let common: Common = typed(Value::Object(common_map))?;
        if !(1..=3).contains(&common.n) {
            return Err(CliError::Usage(format!("config key `n`: dimension {} not in 1..=3", common.n)));
        }
        let rest = Value::Object(rest);
        let command = match common.command.as_str() {
            "quantize-apply" => Command::QuantizeApply(typed(rest)?),
            "extract" => Command::Extract(typed(rest)?),
            "extend-roundtrip" => Command::ExtendRoundtrip(typed(rest)?),
            "compose-order" => Command::ComposeOrder(typed(rest)?),
            "adjoint-check" => Command::AdjointCheck(typed(rest)?),
            "parametrix" => Command::Parametrix(typed(rest)?),
            "fso-apply" => Command::FsoApply(typed(rest)?),
            "fso-compose" => Command::FsoCompose(typed(rest)?),
            "l2-bounds" => Command::L2Bounds(typed(rest)?),
            "evolve" => Command::Evolve(typed(rest)?),
            "wavefront" => Command::Wavefront(typed(rest)?),
            "taylor-suite" => Command::TaylorSuite(typed(rest)?),
            other => {
                return Err(CliError::Usage(format!(
                    "config key `command`: unknown command {other:?}; expected one of {}",
                    COMMANDS.join(", ")
                )))
            }
        };
        let cfg = ScenarioConfig { common, command, base_dir: base_dir.to_path_buf() };
        for p in cfg.referenced_files() {
            if !p.is_file() {
                return Err(CliError::Usage(format!("referenced file {} does not exist", p.display())));
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<(Self, Vec<u8>), CliError> {
        let bytes = std::fs::read(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let text = std::str::from_utf8(&bytes)
            .map_err(|_| CliError::Usage(format!("config {} is not UTF-8", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((Self::parse(text, &base)?, bytes))
    }

    /// Resolves a data spec that names a file.
    pub fn path_of(&self, spec: &str) -> Option<PathBuf> {
        is_path(spec).then(|| self.base_dir.join(spec))
    }

    /// Files named by the config, in a fixed order.
    pub fn referenced_files(&self) -> Vec<PathBuf> {
        let specs: Vec<&str> = match &self.command {
            Command::QuantizeApply(c) => vec![&c.f],
            Command::FsoApply(c) => vec![&c.f],
            Command::Evolve(c) => {
                let mut v = vec![c.f.as_str()];
                v.extend(c.a0.as_deref());
                v
            }
            Command::Wavefront(c) => vec![&c.f],
            _ => vec![],
        };
        let mut out = Vec::new();
        for s in specs {
            if let Some(p) = self.path_of(s) {
                if s.ends_with(".csv") && self.is_symbol_spec(s) {
                    out.push(sidecar_path(&p));
                }
                out.push(p);
            }
        }
        out
    }

    fn is_symbol_spec(&self, s: &str) -> bool {
        matches!(&self.command, Command::Evolve(c) if c.a0.as_deref() == Some(s))
    }
}

/// Data specs ending in `.csv` or `.json` are files; anything else is an expression tag.
pub fn is_path(spec: &str) -> bool {
    let s = spec.trim();
    s.ends_with(".csv") || s.ends_with(".json")
}

/// `table.csv` ↦ `table.json`.
pub fn sidecar_path(p: &Path) -> PathBuf {
    p.with_extension("json")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn usage(text: &str) -> String {
        match ScenarioConfig::parse(text, Path::new(".")) {
            Err(CliError::Usage(m)) => m,
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn parses_defaults() {
        let c = ScenarioConfig::parse(r#"{"command":"parametrix","symbol":"1+|xi|^2+exp(ix1)","M":4}"#, Path::new("."))
            .unwrap();
        assert_eq!(c.common.n, 1);
        assert_eq!(c.common.k, 32);
        let Command::Parametrix(p) = c.command else { panic!() };
        assert_eq!(p.m, 4);
        assert_eq!(p.order, None);
    }

    #[test]
    fn errors_point_at_the_key() {
        assert!(usage(r#"{"command":"evolve","a1":"xi","f":"u.csv","times":[0,"one"]}"#).contains("`times[1]`"));
        assert!(usage(r#"{"command":"parametrix","symbol":"1","M":-1}"#).contains("`M`"));
        assert!(usage(r#"{"command":"parametrix","symbol":"1","typo":3}"#).contains("typo"));
        assert!(usage(r#"{"command":"parametrix","symbol":"1","K":"big"}"#).contains("`K`"));
        assert!(usage(r#"{"command":"frobnicate"}"#).contains("`command`"));
        assert!(usage(r#"{"command":"parametrix","symbol":"1","n":4}"#).contains("`n`"));
        assert!(usage(r#"{"command": "evolve", "#).contains("line 1"));
        assert!(usage(r#"{"command":"evolve","a1":"xi","f":"missing.csv","times":[0,1]}"#).contains("missing.csv"));
    }
}
