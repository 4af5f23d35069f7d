//! Instance and report files (JSON).
//!
//! Rationals are always `"p/q"` strings; floats appear only in cost and
//! price coefficients and in reported gaps. Unknown fields are rejected.
//!
//! ```json
//! { "version": 1, "kind": "congestion",
//!   "resources": ["e1", "e2"],
//!   "players": [
//!     { "demand": "1", "polymatroid": { "simplex": { "allowed": ["e1", "e2"], "rank": "1" } } },
//!     { "demand": "1", "polymatroid": { "explicit": { "": "0", "e1": "1", "e2": "1", "e1,e2": "3/2" } } }
//!   ],
//!   "costs": [ [[0, 1], [0, 1]], [[0, 2], [1, 0, 1]] ] }
//! ```
//!
//! `costs[i][e]` lists player `i`'s cost coefficients on resource `e` in
//! ascending degree. Explicit rank tables are keyed by comma-separated
//! resource names (`""` is the empty set).
//!
//! ```json
//! { "version": 1, "kind": "cournot", "markets": ["m"],
//!   "firms": [ { "name": "a", "markets": ["m"], "cost": 0.0,
//!                "prices": { "m": { "affine": [10, 1] } } } ] }
//! ```

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::cournot::{Firm, Oligopoly, PriceFunction};
use crate::error::{Error, Result};
use crate::game::{CostFunction, Game, Player, Profile};
use crate::poly::{Polymatroid, Violation};
use crate::rational::Rational;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CongestionFile {
    pub version: u32,
    pub kind: String,
    pub resources: Vec<String>,
    pub players: Vec<PlayerSpec>,
    pub costs: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlayerSpec {
    pub demand: Rational,
    pub polymatroid: PolymatroidSpec,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum PolymatroidSpec {
    Simplex(SimplexSpec),
    Explicit(BTreeMap<String, Rational>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimplexSpec {
    pub allowed: Vec<String>,
    pub rank: Rational,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CournotFile {
    pub version: u32,
    pub kind: String,
    pub markets: Vec<String>,
    pub firms: Vec<FirmSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FirmSpec {
    pub name: String,
    pub markets: Vec<String>,
    pub cost: f64,
    pub prices: BTreeMap<String, PriceSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum PriceSpec {
    Affine([f64; 2]),
    Quad([f64; 3]),
}

#[derive(Clone, Debug)]
pub enum Instance {
    Congestion(Game),
    Cournot(Oligopoly),
}

fn from_value<T: DeserializeOwned>(value: serde_json::Value) -> Result<T> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        Error::Parse(format!("{path}: {}", e.into_inner()))
    })
}

fn index_of(names: &HashMap<&str, usize>, name: &str, field: &str) -> Result<usize> {
    names
        .get(name)
        .copied()
        .ok_or_else(|| Error::Parse(format!("{field}: unknown resource {name:?}")))
}

fn name_map<'a>(names: &'a [String], field: &str) -> Result<HashMap<&'a str, usize>> {
    let mut map = HashMap::new();
    for (i, n) in names.iter().enumerate() {
        if map.insert(n.as_str(), i).is_some() {
            return Err(Error::Parse(format!("{field}: duplicate name {n:?}")));
        }
    }
    Ok(map)
}

fn describe_violation(v: &Violation, names: &[String]) -> String {
    let set = |s: &[usize]| {
        let inner: Vec<&str> = s.iter().map(|&e| names[e].as_str()).collect();
        format!("{{{}}}", inner.join(","))
    };
    match v {
        Violation::NotNormalized { empty_rank } => {
            format!("rank of the empty set is {empty_rank}, expected 0")
        }
        Violation::NotMonotone { subset, superset } => format!(
            "not monotone: U = {}, V = {}",
            set(subset),
            set(superset)
        ),
        Violation::NotSubmodular { u, v } => {
            format!("not submodular: U = {}, V = {}", set(u), set(v))
        }
    }
}

impl CongestionFile {
    pub fn into_game(self) -> Result<Game> {
        let m = self.resources.len();
        let names = name_map(&self.resources, "resources")?;
        if self.costs.len() != self.players.len() {
            return Err(Error::Parse(format!(
                "costs: {} rows for {} players",
                self.costs.len(),
                self.players.len()
            )));
        }
        let mut players = Vec::with_capacity(self.players.len());
        for (i, raw) in self.players.into_iter().enumerate() {
            let field = format!("players[{i}].polymatroid");
            let polymatroid = match raw.polymatroid {
                PolymatroidSpec::Simplex(s) => {
                    let allowed = s
                        .allowed
                        .iter()
                        .map(|n| index_of(&names, n, &format!("{field}.simplex.allowed")))
                        .collect::<Result<Vec<_>>>()?;
                    Polymatroid::simplex(m, &allowed, s.rank)
                        .map_err(|e| Error::Parse(format!("{field}.simplex: {e}")))?
                }
                PolymatroidSpec::Explicit(table) => {
                    let mut entries = Vec::with_capacity(table.len());
                    for (key, rank) in table {
                        let subset = key
                            .split(',')
                            .map(str::trim)
                            .filter(|s| !s.is_empty())
                            .map(|n| index_of(&names, n, &format!("{field}.explicit[{key:?}]")))
                            .collect::<Result<Vec<_>>>()?;
                        entries.push((subset, rank));
                    }
                    let p = Polymatroid::explicit_from_entries(m, entries)
                        .map_err(|e| Error::Parse(format!("{field}.explicit: {e}")))?;
                    if let Err(v) = p.validate() {
                        return Err(Error::Parse(format!(
                            "{field}.explicit: {}",
                            describe_violation(&v, &self.resources)
                        )));
                    }
                    p
                }
            };
            if raw.demand > polymatroid.full_rank() {
                return Err(Error::Parse(format!(
                    "players[{i}].demand: {} exceeds rank(E) = {}",
                    raw.demand,
                    polymatroid.full_rank()
                )));
            }
            players.push(Player {
                demand: raw.demand,
                polymatroid,
            });
        }
        let mut costs = Vec::with_capacity(self.costs.len());
        for (i, row) in self.costs.into_iter().enumerate() {
            if row.len() != m {
                return Err(Error::Parse(format!(
                    "costs[{i}]: {} cost functions for {m} resources",
                    row.len()
                )));
            }
            let row = row
                .into_iter()
                .enumerate()
                .map(|(e, coeffs)| {
                    CostFunction::new(coeffs).map_err(|err| Error::Parse(format!("costs[{i}][{e}]: {err}")))
                })
                .collect::<Result<Vec<_>>>()?;
            costs.push(row);
        }
        Game::new(self.resources, players, costs).map_err(|e| Error::Parse(e.to_string()))
    }
}

impl CournotFile {
    pub fn into_oligopoly(self) -> Result<Oligopoly> {
        let names = name_map(&self.markets, "markets")?;
        let mut firms = Vec::with_capacity(self.firms.len());
        for (i, raw) in self.firms.into_iter().enumerate() {
            let field = format!("firms[{i}]");
            let listed: Vec<&String> = raw.markets.iter().collect();
            let priced: Vec<&String> = raw.prices.keys().collect();
            let mut sorted = listed.clone();
            sorted.sort();
            if sorted != priced {
                return Err(Error::Parse(format!(
                    "{field}.prices: keys must be exactly the firm's markets {listed:?}"
                )));
            }
            let mut prices = Vec::with_capacity(raw.prices.len());
            for (market, price) in raw.prices {
                let e = index_of(&names, &market, &format!("{field}.markets"))?;
                let p = match price {
                    PriceSpec::Affine([a, b]) => PriceFunction::affine(a, b),
                    PriceSpec::Quad([a, b, c]) => PriceFunction::quadratic(a, b, c),
                }
                .map_err(|err| Error::Parse(format!("{field}.prices[{market:?}]: {err}")))?;
                prices.push((e, p));
            }
            firms.push(Firm {
                name: raw.name,
                production_cost: raw.cost,
                prices,
            });
        }
        Oligopoly::new(self.markets, firms).map_err(|e| Error::Parse(e.to_string()))
    }
}

pub fn parse_instance_str(text: &str) -> Result<Instance> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("invalid JSON: {e}")))?;
    let version = value.get("version").and_then(|v| v.as_u64());
    if version != Some(FORMAT_VERSION as u64) {
        return Err(Error::Parse(format!(
            "version: expected {FORMAT_VERSION}, got {:?}",
            value.get("version")
        )));
    }
    match value.get("kind").and_then(|k| k.as_str()) {
        Some("congestion") => Ok(Instance::Congestion(
            from_value::<CongestionFile>(value)?.into_game()?,
        )),
        Some("cournot") => Ok(Instance::Cournot(
            from_value::<CournotFile>(value)?.into_oligopoly()?,
        )),
        other => Err(Error::Parse(format!(
            "kind: expected \"congestion\" or \"cournot\", got {other:?}"
        ))),
    }
}

pub fn parse_instance(path: &Path) -> Result<Instance> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    parse_instance_str(&text)
}

/// Solver output. Every field except `wall_time_secs` is a deterministic
/// function of the inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Report {
    pub version: u32,
    pub kind: String,
    pub resources: Vec<String>,
    pub epsilon: Option<f64>,
    pub k: Rational,
    pub lipschitz: f64,
    pub delta: Rational,
    pub rho_gcd: Rational,
    /// `delta / k`.
    pub predicted_packets: Rational,
    pub best_response_count: u64,
    pub demand_increments: u64,
    /// `profile[i][e]`, exact loads.
    pub profile: Vec<Vec<Rational>>,
    pub gaps: Vec<f64>,
    pub max_gap: f64,
    pub tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub markets: Option<Vec<String>>,
    /// Oligopoly quantities `quantities[i][e]` (Cournot runs only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantities: Option<Vec<Vec<Rational>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utilities: Option<Vec<f64>>,
    pub wall_time_secs: f64,
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Any JSON object with a `profile` field of exact loads (reports qualify).
#[derive(Debug, Deserialize)]
struct ProfileFile {
    profile: Vec<Vec<Rational>>,
}

/// Reads exact loads and wraps them as an integral profile whose packet size
/// is the gcd of all entries.
pub fn load_profile(path: &Path) -> Result<Profile> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("invalid JSON: {e}")))?;
    let file: ProfileFile = from_value(value)?;
    profile_from_exact(&file.profile)
}

pub fn profile_from_exact(rows: &[Vec<Rational>]) -> Result<Profile> {
    if rows.iter().flatten().any(Rational::is_negative) {
        return Err(Error::Infeasible("negative load in profile".into()));
    }
    let k = rows
        .iter()
        .flatten()
        .filter(|v| !v.is_zero())
        .fold(None::<Rational>, |acc, v| {
            Some(match acc {
                None => v.clone(),
                Some(g) => g.gcd(v),
            })
        })
        .unwrap_or_else(Rational::one);
    Profile::from_exact(k, rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SYMM: &str = r#"{
        "version": 1, "kind": "congestion",
        "resources": ["e1", "e2"],
        "players": [
            {"demand": "1", "polymatroid": {"simplex": {"allowed": ["e1", "e2"], "rank": "1"}}},
            {"demand": "1", "polymatroid": {"simplex": {"allowed": ["e1", "e2"], "rank": "1"}}}
        ],
        "costs": [[[0, 1], [0, 1]], [[0, 1], [0, 1]]]
    }"#;

    fn err_of(text: &str) -> String {
        match parse_instance_str(text) {
            Err(Error::Parse(msg)) => msg,
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn symmetric_instance() {
        let Instance::Congestion(g) = parse_instance_str(SYMM).unwrap() else { panic!() };
        assert_eq!((g.n(), g.m()), (2, 2));
    }

    #[test]
    fn explicit_table_and_rho_gcd() {
        let text = r#"{
            "version": 1, "kind": "congestion", "resources": ["a", "b"],
            "players": [{"demand": "1/3", "polymatroid": {"explicit":
                {"": "0", "a": "1/2", "b": "1/2", "a,b": "1"}}}],
            "costs": [[[0, 1], [0, 1]]]
        }"#;
        let Instance::Congestion(g) = parse_instance_str(text).unwrap() else { panic!() };
        assert_eq!(crate::integral::game_rho_gcd(&g), "1/6".parse().unwrap());
    }

    #[test]
    fn diagnostics_name_the_field() {
        let bad_rational = SYMM.replacen("\"demand\": \"1\"", "\"demand\": \"0.5\"", 1);
        assert!(err_of(&bad_rational).contains("players[0].demand"), "{}", err_of(&bad_rational));

        let not_sub = r#"{
            "version": 1, "kind": "congestion", "resources": ["a", "b"],
            "players": [{"demand": "1", "polymatroid": {"explicit":
                {"": "0", "a": "1", "b": "1", "b,a": "3"}}}],
            "costs": [[[0, 1], [0, 1]]]
        }"#;
        let msg = err_of(not_sub);
        assert!(msg.contains("not submodular: U = {a}, V = {b}"), "{msg}");

        let negative = SYMM.replacen("[[0, 1], [0, 1]]", "[[0, 1], [0, -1]]", 1);
        assert!(err_of(&negative).contains("costs[0][1]"));

        let unknown = SYMM.replacen("\"kind\"", "\"colour\": 1, \"kind\"", 1);
        assert!(err_of(&unknown).contains("colour"));

        let bad_resource = SYMM.replacen("[\"e1\", \"e2\"], \"rank\"", "[\"e1\", \"e9\"], \"rank\"", 1);
        assert!(err_of(&bad_resource).contains("e9"));

        assert!(err_of(&SYMM.replacen("\"version\": 1", "\"version\": 2", 1)).contains("version"));
        assert!(err_of(&SYMM.replacen("congestion", "routing", 1)).contains("kind"));
    }

    #[test]
    fn cournot_instance() {
        let text = r#"{
            "version": 1, "kind": "cournot", "markets": ["m", "n"],
            "firms": [
                {"name": "a", "markets": ["m"], "cost": 0.0, "prices": {"m": {"affine": [10, 1]}}},
                {"name": "b", "markets": ["n", "m"], "cost": 1.0,
                 "prices": {"m": {"affine": [10, 1]}, "n": {"quad": [4, 0, 1]}}}
            ]
        }"#;
        let Instance::Cournot(o) = parse_instance_str(text).unwrap() else { panic!() };
        assert_eq!(o.firms().len(), 2);
        assert_eq!(o.firms()[1].markets().collect::<Vec<_>>(), vec![0, 1]);

        let mismatch = text.replacen("\"markets\": [\"m\"], \"cost\"", "\"markets\": [\"n\"], \"cost\"", 1);
        assert!(err_of(&mismatch).contains("firms[0].prices"));
    }

    #[test]
    fn profile_packet_size_is_gcd_of_loads() {
        let rows = vec![
            vec!["1/2".parse().unwrap(), "1/3".parse().unwrap()],
            vec![Rational::zero(), Rational::one()],
        ];
        let p = profile_from_exact(&rows).unwrap();
        assert_eq!(p.packet_size(), Some(&"1/6".parse().unwrap()));
        assert_eq!(p.exact_player_loads(0).unwrap(), rows[0]);
    }
}
