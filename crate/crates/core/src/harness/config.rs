//! Experiment configuration: TOML on disk, `UAVTERRA_*` environment
//! overrides, defaults for every key, and validation that names the key.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::ChannelParams;
use crate::coverage::Mode;
use crate::error::{Error, Result};
use crate::reconstruct::ScanConfig;
use crate::search::{LengthSweepConfig, RelaySceneConfig};
use crate::terrain::{HeightDistribution, Region};
use crate::tracking::ParadeScenario;

/// TOML integers are signed, so seeds above `i64::MAX` are written as
/// decimal strings. Both forms are accepted on input.
mod seed_repr {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u64, s: S) -> Result<S::Ok, S::Error> {
        match i64::try_from(*v) {
            Ok(i) => s.serialize_i64(i),
            Err(_) => s.serialize_str(&v.to_string()),
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Int(i64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Int(i) => u64::try_from(i).map_err(|_| de::Error::custom(format!("seed must be >= 0, got {i}"))),
            Repr::Str(s) => {
                s.trim().parse().map_err(|_| de::Error::custom(format!("`{s}` is not an unsigned 64-bit seed")))
            }
        }
    }
}

pub const ENV_PREFIX: &str = "UAVTERRA_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    #[serde(with = "seed_repr")]
    pub master_seed: u64,
    pub channel: ChannelParams,
    pub buildings: BuildingsConfig,
    pub los: LosConfig,
    pub coverage: CoverageSection,
    pub relay: RelaySection,
    pub search: LengthSweepConfig,
    pub reconstruct: ScanConfig,
    pub tracking: TrackingSection,
    pub limits: Limits,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            master_seed: 1,
            channel: ChannelParams::default(),
            buildings: BuildingsConfig::default(),
            los: LosConfig::default(),
            coverage: CoverageSection::default(),
            relay: RelaySection::default(),
            search: LengthSweepConfig::default(),
            reconstruct: ScanConfig::default(),
            tracking: TrackingSection::default(),
            limits: Limits::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BuildingsConfig {
    /// Buildings per km^2.
    pub density: f64,
    pub radius: f64,
    pub heights: HeightDistribution,
    /// Side of the square core, m.
    pub core_side: f64,
    /// Extra generation margin around the core, m.
    pub guard: f64,
}

impl Default for BuildingsConfig {
    fn default() -> Self {
        BuildingsConfig {
            density: 500.0,
            radius: 8.0,
            heights: HeightDistribution::default(),
            core_side: 1000.0,
            guard: 100.0,
        }
    }
}

impl BuildingsConfig {
    pub fn core(&self) -> Region {
        Region::square(self.core_side).expect("validated core side")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LosConfig {
    pub uav_height: f64,
    pub user_height: f64,
    pub pairs: u64,
    pub bin_width: f64,
    pub fit_starts: usize,
    pub azimuth_theta0: f64,
    pub azimuths: Vec<f64>,
    pub azimuth_trials: u64,
}

impl Default for LosConfig {
    fn default() -> Self {
        LosConfig {
            uav_height: 80.0,
            user_height: 0.0,
            pairs: 200_000,
            bin_width: 1.0,
            fit_starts: 100,
            azimuth_theta0: 30.0,
            azimuths: vec![0.0, 1.0, 2.0, 3.0, 5.0, 7.5, 10.0, 12.5, 15.0, 20.0, 30.0, 45.0, 60.0, 90.0],
            azimuth_trials: 200_000,
        }
    }
}

/// Which LoS curve thins links in model mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveChoice {
    /// The published sigmoid parameters.
    Reference,
    /// A sigmoid fitted to the generated city.
    Fitted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoverageSection {
    pub densities: Vec<f64>,
    pub altitude: f64,
    pub thresholds: Vec<f64>,
    pub modes: Vec<Mode>,
    pub trials: u64,
    pub user_height: f64,
    pub curve: CurveChoice,
}

impl Default for CoverageSection {
    fn default() -> Self {
        CoverageSection {
            densities: vec![4.0, 8.0, 12.0, 16.0, 20.0, 24.0],
            altitude: 80.0,
            thresholds: vec![0.0, 4.0],
            modes: vec![Mode::Terrain, Mode::Model],
            trials: 20_000,
            user_height: 0.0,
            curve: CurveChoice::Reference,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RelaySection {
    pub scenes: u64,
    /// Grid step of the plane heatmap, m.
    pub heatmap_step: f64,
    pub scene: RelaySceneConfig,
}

impl Default for RelaySection {
    fn default() -> Self {
        RelaySection { scenes: 20, heatmap_step: 1.0, scene: RelaySceneConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackingSection {
    /// Independent cities, each scanned and tracked once.
    pub seeds: u64,
    pub scenario: ParadeScenario,
}

impl Default for TrackingSection {
    fn default() -> Self {
        TrackingSection { seeds: 1, scenario: ParadeScenario::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Limits {
    /// Largest grid (heatmap, exhaustive search, height field) in cells.
    pub max_cells: u64,
}

impl Default for Limits {
    fn default() -> Self {
        Limits { max_cells: crate::terrain::DEFAULT_CELL_CAP }
    }
}

fn positive(key: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(key, format!("must be > 0, got {v}")))
    }
}

fn non_negative(key: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(key, format!("must be >= 0, got {v}")))
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.channel.validate().map_err(|e| Error::config("channel", e.to_string()))?;

        let b = &self.buildings;
        non_negative("buildings.density", b.density)?;
        positive("buildings.radius", b.radius)?;
        positive("buildings.core_side", b.core_side)?;
        non_negative("buildings.guard", b.guard)?;
        b.heights.validate().map_err(|e| Error::config("buildings.heights", e.to_string()))?;

        let l = &self.los;
        non_negative("los.user_height", l.user_height)?;
        if !(l.uav_height > l.user_height && l.uav_height.is_finite()) {
            return Err(Error::config("los.uav_height", "must exceed los.user_height"));
        }
        if l.pairs == 0 {
            return Err(Error::config("los.pairs", "must be >= 1"));
        }
        positive("los.bin_width", l.bin_width)?;
        if l.fit_starts == 0 {
            return Err(Error::config("los.fit_starts", "must be >= 1"));
        }
        if !(l.azimuth_theta0 > 0.0 && l.azimuth_theta0 < 90.0) {
            return Err(Error::config("los.azimuth_theta0", "must lie in (0, 90)"));
        }
        if l.azimuth_trials == 0 {
            return Err(Error::config("los.azimuth_trials", "must be >= 1"));
        }
        if l.azimuths.iter().any(|a| !(0.0..=180.0).contains(a)) {
            return Err(Error::config("los.azimuths", "azimuths must lie in [0, 180] degrees"));
        }

        let c = &self.coverage;
        if c.densities.is_empty() {
            return Err(Error::config("coverage.densities", "must not be empty"));
        }
        for &d in &c.densities {
            non_negative("coverage.densities", d)?;
        }
        if c.thresholds.is_empty() || c.thresholds.iter().any(|t| !t.is_finite()) {
            return Err(Error::config("coverage.thresholds", "need at least one finite threshold"));
        }
        if c.modes.is_empty() {
            return Err(Error::config("coverage.modes", "must not be empty"));
        }
        if c.trials == 0 {
            return Err(Error::config("coverage.trials", "must be >= 1"));
        }
        non_negative("coverage.user_height", c.user_height)?;
        if !(c.altitude > c.user_height && c.altitude.is_finite()) {
            return Err(Error::config("coverage.altitude", "must exceed coverage.user_height"));
        }

        if self.relay.scenes == 0 {
            return Err(Error::config("relay.scenes", "must be >= 1"));
        }
        positive("relay.heatmap_step", self.relay.heatmap_step)?;
        self.relay.scene.validate().map_err(|e| rekey(e, "relay.scene"))?;

        self.search.validate()?;
        self.reconstruct.validate()?;
        if self.tracking.seeds == 0 {
            return Err(Error::config("tracking.seeds", "must be >= 1"));
        }
        self.tracking.scenario.validate().map_err(|e| rekey(e, "tracking.scenario"))?;
        if self.limits.max_cells == 0 {
            return Err(Error::config("limits.max_cells", "must be >= 1"));
        }
        Ok(())
    }

    /// Canonical on-disk form, also used for the config hash.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("<config>", e.to_string()))
    }

    pub fn hash(&self) -> Result<String> {
        Ok(format!("{:x}", Sha256::digest(self.to_toml()?.as_bytes())))
    }
}

/// Move a nested section's config error under `prefix`.
fn rekey(e: Error, prefix: &str) -> Error {
    match e {
        Error::Config { key, message } => {
            let leaf = key.rsplit('.').next().unwrap_or(&key).to_string();
            Error::Config { key: format!("{prefix}.{leaf}"), message }
        }
        other => Error::config(prefix, other.to_string()),
    }
}

/// Parse TOML text, apply overrides, fill defaults and validate.
pub fn parse_config_str(text: &str, env: &[(String, String)]) -> Result<ExperimentConfig> {
    let mut doc: toml::Table =
        text.parse().map_err(|e: toml::de::Error| Error::config("<file>", e.message().to_string()))?;
    for (name, raw) in env {
        apply_override(&mut doc, name, raw)?;
    }
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(toml::Value::Table(doc)).map_err(|e| {
        let path = e.path().to_string();
        let key = if path == "." { "<root>".to_string() } else { path };
        Error::config(key, e.into_inner().to_string())
    })?;
    cfg.validate()?;
    Ok(cfg)
}

/// Read `path` and apply every `UAVTERRA_*` variable of the process environment.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config("<file>", format!("cannot read {}: {e}", path.display())))?;
    parse_config_str(&text, &env_overrides())
}

/// `UAVTERRA_` variables, sorted by name so the order is stable.
pub fn env_overrides() -> Vec<(String, String)> {
    let mut v: Vec<(String, String)> = std::env::vars().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
    v.sort();
    v
}

/// `UAVTERRA_SECTION__KEY=value` sets `section.key`. Sections nest with `__`;
/// names are lower-cased. The value is read as a TOML value, falling back to
/// a plain string.
fn apply_override(doc: &mut toml::Table, name: &str, raw: &str) -> Result<()> {
    let Some(rest) = name.strip_prefix(ENV_PREFIX) else {
        return Ok(());
    };
    let path: Vec<String> = rest.split("__").map(|s| s.to_ascii_lowercase()).collect();
    let dotted = path.join(".");
    if path.iter().any(|p| p.is_empty()) {
        return Err(Error::config(dotted, format!("malformed override variable {name}")));
    }
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let mut table = doc;
    for p in &path[..path.len() - 1] {
        let entry = table.entry(p.clone()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry.as_table_mut().ok_or_else(|| Error::config(dotted.clone(), format!("`{p}` is not a section")))?;
    }
    table.insert(path[path.len() - 1].clone(), value);
    Ok(())
}
