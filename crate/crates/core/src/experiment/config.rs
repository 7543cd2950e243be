//! Scenario configuration, loaded from TOML with `key=value` overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classifier::{reference_working_points, working_point_grid, ClassifierSpec, GridPoint};
use crate::delivery::Strategy;
use crate::error::{Error, Result};
use crate::mobility::{MobilityParams, Preset};
use crate::seed::{SeedPath, Stage};
use crate::topology::{
    generate_topology, load_topology, Extent, SiteFileFormat, Topology, REFERENCE_AREA, REFERENCE_SITES,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub repetitions: usize,
    pub users: usize,
    /// `Omega = floor(omega_fraction * M)`, at least 1.
    pub omega_fraction: f64,
    pub topology: TopologyConfig,
    pub mobility: MobilityConfig,
    pub profile: ProfileConfig,
    pub delivery: DeliverySettings,
    pub detection: DetectionSettings,
    pub classifier: ClassifierSettings,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            seed: 1,
            repetitions: 10,
            users: 10_000,
            omega_fraction: 0.1,
            topology: TopologyConfig::default(),
            mobility: MobilityConfig::default(),
            profile: ProfileConfig::default(),
            delivery: DeliverySettings::default(),
            detection: DetectionSettings::default(),
            classifier: ClassifierSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase", deny_unknown_fields)]
pub enum TopologyConfig {
    /// Sites uniform in a square of the given area.
    Synthetic { sites: usize, area: f64 },
    File {
        path: PathBuf,
        #[serde(default = "default_delimiter")]
        delimiter: char,
    },
}

fn default_delimiter() -> char {
    ','
}

impl Default for TopologyConfig {
    fn default() -> Self {
        TopologyConfig::Synthetic {
            sites: REFERENCE_SITES,
            area: REFERENCE_AREA,
        }
    }
}

/// Mobility preset plus optional per-field overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MobilityConfig {
    pub preset: Preset,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jump_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jump_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wait_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wait_max: Option<f64>,
    pub horizon: f64,
    /// Simulate trajectories once and reuse them in every repetition.
    pub reuse: bool,
}

impl Default for MobilityConfig {
    fn default() -> Self {
        MobilityConfig {
            preset: Preset::S1,
            rho: None,
            gamma: None,
            alpha: None,
            beta: None,
            jump_min: None,
            jump_max: None,
            wait_min: None,
            wait_max: None,
            horizon: 1.0,
            reuse: false,
        }
    }
}

impl MobilityConfig {
    pub fn resolve(&self, topology: &Topology) -> Result<MobilityParams> {
        let mut p = MobilityParams::with_default_bounds(
            topology,
            self.rho.unwrap_or(Preset::RHO),
            self.gamma.unwrap_or(self.preset.gamma()),
            self.alpha.unwrap_or(Preset::ALPHA),
            self.beta.unwrap_or(Preset::BETA),
            self.horizon,
        );
        if let Some(v) = self.jump_min {
            p.jump_min = v;
        }
        if let Some(v) = self.jump_max {
            p.jump_max = v;
        }
        if let Some(v) = self.wait_min {
            p.wait_min = v;
        }
        if let Some(v) = self.wait_max {
            p.wait_max = v;
        }
        p.validate()?;
        Ok(p)
    }
}

/// What to do when no sigma reaches the calibration target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InfeasiblePolicy {
    #[default]
    Error,
    /// Use the sigma whose fraction comes closest to the target.
    Nearest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileConfig {
    pub mu: f64,
    /// Used when `calibrate` is absent.
    pub sigma: f64,
    /// Dissatisfied-fraction target; when present sigma is calibrated per
    /// repetition.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibrate: Option<[f64; 2]>,
    pub on_infeasible: InfeasiblePolicy,
    pub psi: f64,
    /// Draw tolerances once and reuse them in every repetition.
    pub freeze_tolerances: bool,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        ProfileConfig {
            mu: 0.25,
            sigma: 0.029,
            calibrate: None,
            on_infeasible: InfeasiblePolicy::Error,
            psi: 0.0,
            freeze_tolerances: false,
        }
    }
}

/// How respondents are chosen. `Full` disables sampling: every user's true
/// label is known.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeliveryMode {
    Full,
    Random,
    Optimized,
}

impl DeliveryMode {
    pub fn strategy(self) -> Option<Strategy> {
        match self {
            DeliveryMode::Full => None,
            DeliveryMode::Random => Some(Strategy::Random),
            DeliveryMode::Optimized => Some(Strategy::Optimized),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DeliveryMode::Full => "full",
            DeliveryMode::Random => "random",
            DeliveryMode::Optimized => "optimized",
        }
    }
}

impl std::str::FromStr for DeliveryMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "full" | "none" => Ok(DeliveryMode::Full),
            other => Ok(match other.parse::<Strategy>()? {
                Strategy::Random => DeliveryMode::Random,
                Strategy::Optimized => DeliveryMode::Optimized,
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeliverySettings {
    pub strategy: DeliveryMode,
    pub response_rate: f64,
    /// Overrides `floor(response_rate * N)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budget: Option<usize>,
    pub n_min: usize,
    /// Coverage threshold; defaults to the detection threshold.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub xi: Option<f64>,
}

impl Default for DeliverySettings {
    fn default() -> Self {
        DeliverySettings {
            strategy: DeliveryMode::Random,
            response_rate: 0.01,
            budget: None,
            n_min: 3,
            xi: None,
        }
    }
}

impl DeliverySettings {
    pub fn budget_for(&self, users: usize) -> usize {
        self.budget
            .unwrap_or_else(|| (self.response_rate * users as f64 + 1e-9).floor() as usize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KPolicy {
    /// Report P@k and R@k for every k.
    #[default]
    All,
    /// Report them up to k = Omega only.
    Omega,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionSettings {
    pub xi: f64,
    pub k: KPolicy,
}

impl Default for DetectionSettings {
    fn default() -> Self {
        DetectionSettings {
            xi: 0.2,
            k: KPolicy::All,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase", deny_unknown_fields)]
pub enum ClassifierSettings {
    /// Ground-truth labels only.
    #[default]
    None,
    Spec {
        fpr: f64,
        tpr: f64,
    },
    Grid {
        step: f64,
    },
    Reference,
}

impl ClassifierSettings {
    /// Working points to evaluate, in canonical order.
    pub fn working_points(&self) -> Result<Vec<GridPoint>> {
        Ok(match self {
            ClassifierSettings::None => Vec::new(),
            ClassifierSettings::Spec { fpr, tpr } => vec![GridPoint {
                spec: ClassifierSpec::new(*fpr, *tpr)?,
                in_reference_grid: *fpr < 1.0 && *tpr < 1.0,
            }],
            ClassifierSettings::Grid { step } => working_point_grid(*step)?,
            ClassifierSettings::Reference => reference_working_points()
                .into_iter()
                .map(|(_, spec)| GridPoint {
                    spec,
                    in_reference_grid: true,
                })
                .collect(),
        })
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::from_toml_with_overrides(text, &[])
    }

    /// Parse `text`, then apply dotted `key=value` overrides before
    /// deserializing. Values are read as TOML literals, falling back to
    /// plain strings.
    pub fn from_toml_with_overrides(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for (key, value) in overrides {
            apply_override(&mut table, key, value)?;
        }
        let config: ScenarioConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>, overrides: &[(String, String)]) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_with_overrides(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario config always serializes")
    }

    /// First 16 hex digits of the SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        hex::encode(&digest[..8])
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::param("repetitions", "need at least one repetition"));
        }
        if self.users == 0 {
            return Err(Error::param("users", "population must have at least one user"));
        }
        if !(self.omega_fraction > 0.0 && self.omega_fraction < 1.0) {
            return Err(Error::param(
                "omega_fraction",
                format!("must lie in (0, 1), got {}", self.omega_fraction),
            ));
        }
        match &self.topology {
            TopologyConfig::Synthetic { sites, area } => {
                if *sites < 2 {
                    return Err(Error::param("topology.sites", "need at least two sites"));
                }
                if !(*area > 0.0 && area.is_finite()) {
                    return Err(Error::param("topology.area", format!("must be positive, got {area}")));
                }
            }
            TopologyConfig::File { .. } => {}
        }
        let p = &self.profile;
        if !(p.mu > 0.0 && p.mu < 1.0) {
            return Err(Error::param("profile.mu", format!("must lie in (0, 1), got {}", p.mu)));
        }
        if !(p.sigma > 0.0 && p.sigma.is_finite()) {
            return Err(Error::param(
                "profile.sigma",
                format!("must be positive, got {}", p.sigma),
            ));
        }
        if let Some([lo, hi]) = p.calibrate {
            if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo >= hi {
                return Err(Error::param(
                    "profile.calibrate",
                    format!("need 0 <= lo < hi <= 1, got [{lo}, {hi}]"),
                ));
            }
        }
        if !(0.0..=1.0).contains(&p.psi) {
            return Err(Error::param(
                "profile.psi",
                format!("must lie in [0, 1], got {}", p.psi),
            ));
        }
        let d = &self.delivery;
        if !(d.response_rate > 0.0 && d.response_rate <= 1.0) {
            return Err(Error::param(
                "delivery.response_rate",
                format!("must lie in (0, 1], got {}", d.response_rate),
            ));
        }
        if d.n_min == 0 {
            return Err(Error::param("delivery.n_min", "must be at least 1"));
        }
        if d.strategy != DeliveryMode::Full {
            let b = d.budget_for(self.users);
            if b == 0 || b > self.users {
                return Err(Error::param(
                    "delivery.budget",
                    format!("need 1 <= B <= N, got B={b} with N={}", self.users),
                ));
            }
        }
        for (name, xi) in [("detection.xi", Some(self.detection.xi)), ("delivery.xi", d.xi)] {
            if let Some(xi) = xi {
                if !(xi > 0.0 && xi < 1.0) {
                    return Err(Error::param(name, format!("must lie in (0, 1), got {xi}")));
                }
            }
        }
        self.classifier.working_points()?;
        Ok(())
    }

    pub fn build_topology(&self) -> Result<Topology> {
        match &self.topology {
            TopologyConfig::Synthetic { sites, area } => generate_topology(
                *sites,
                Extent::square_with_area(*area),
                SeedPath::master(self.seed).stage(Stage::Topology).value(),
            ),
            TopologyConfig::File { path, delimiter } => {
                let delimiter = u8::try_from(*delimiter as u32)
                    .map_err(|_| Error::param("topology.delimiter", "must be a single ASCII character"))?;
                load_topology(path, SiteFileFormat { delimiter })
            }
        }
    }

    pub fn omega_for(&self, sites: usize) -> usize {
        ((self.omega_fraction * sites as f64 + 1e-9).floor() as usize).max(1)
    }
}

fn apply_override(table: &mut toml::Table, key: &str, raw: &str) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("malformed override key `{key}`")));
    }
    let value = parse_literal(raw);
    let (last, parents) = parts.split_last().expect("split yields at least one part");
    let mut cursor = table;
    for part in parents {
        let entry = cursor
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cursor = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override `{key}`: `{part}` is not a table")))?;
    }
    cursor.insert(last.to_string(), value);
    Ok(())
}

fn parse_literal(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key v was just written"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_the_default_scenario() {
        let c = ScenarioConfig::from_toml_str("").unwrap();
        assert_eq!(c, ScenarioConfig::default());
        assert_eq!(c.delivery.budget_for(100_000), 1000);
        assert_eq!(c.omega_for(136), 13);
    }

    #[test]
    fn s1_preset_resolves_to_reference_constants() {
        let c = ScenarioConfig::default();
        let t = c.build_topology().unwrap();
        let p = c.mobility.resolve(&t).unwrap();
        assert_eq!((p.gamma, p.rho, p.alpha, p.beta), (0.21, 0.6, 0.55, 0.8));
    }

    #[test]
    fn overrides_reach_nested_fields() {
        let text = "users = 500\n[profile]\nmu = 0.3\n";
        let overrides = vec![
            ("profile.mu".to_string(), "0.35".to_string()),
            ("mobility.preset".to_string(), "s2".to_string()),
            ("classifier.mode".to_string(), "grid".to_string()),
            ("classifier.step".to_string(), "0.5".to_string()),
            ("profile.calibrate".to_string(), "[0.15, 0.3]".to_string()),
        ];
        let c = ScenarioConfig::from_toml_with_overrides(text, &overrides).unwrap();
        assert_eq!(c.users, 500);
        assert_eq!(c.profile.mu, 0.35);
        assert_eq!(c.profile.calibrate, Some([0.15, 0.3]));
        assert_eq!(c.mobility.preset, Preset::S2);
        assert_eq!(c.classifier, ClassifierSettings::Grid { step: 0.5 });
        assert_eq!(c.classifier.working_points().unwrap().len(), 9);
    }

    #[test]
    fn toml_round_trip_and_stable_hash() {
        let mut c = ScenarioConfig {
            classifier: ClassifierSettings::Spec { fpr: 0.1, tpr: 0.4 },
            ..Default::default()
        };
        c.delivery.budget = Some(7);
        let back = ScenarioConfig::from_toml_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
        assert_eq!(c.hash().len(), 16);
        let mut other = c.clone();
        other.seed += 1;
        assert_ne!(other.hash(), c.hash());
    }

    #[test]
    fn invalid_documents_are_rejected() {
        for bad in [
            "repetitions = 0",
            "unknown = 1",
            "[mobility]\npreset = \"s9\"",
            "[profile]\ncalibrate = [0.3, 0.1]",
            "users = 10\n[delivery]\nresponse_rate = 0.01",
            "[classifier]\nmode = \"grid\"\nstep = 0.0",
        ] {
            assert!(ScenarioConfig::from_toml_str(bad).is_err(), "{bad}");
        }
        let bad_key = vec![("a..b".to_string(), "1".to_string())];
        assert!(ScenarioConfig::from_toml_with_overrides("", &bad_key).is_err());
    }
}
