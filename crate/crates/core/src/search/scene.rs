//! Random two-user relay scenes with a few buildings between the users.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{AllowedSet, SearchProblem};
use crate::channel::ChannelParams;
use crate::error::{Error, Result};
use crate::rng::SeedStream;
use crate::terrain::{Building, BuildingSet, Point3, Region};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RelaySceneConfig {
    /// Range of user separations, m.
    pub separation: [f64; 2],
    pub buildings: usize,
    pub radius: f64,
    /// Uniform building heights, m.
    pub height: [f64; 2],
    /// Buildings sit within this lateral distance of the user axis.
    pub lateral_spread: f64,
    /// Horizontal margin of the allowed box around the users.
    pub margin: f64,
    pub z_min: f64,
    pub z_max: f64,
    /// Start altitude range.
    pub start_z: [f64; 2],
    pub granularity: f64,
    pub budget: f64,
}

impl Default for RelaySceneConfig {
    fn default() -> Self {
        RelaySceneConfig {
            separation: [100.0, 300.0],
            buildings: 3,
            radius: 8.0,
            height: [20.0, 60.0],
            lateral_spread: 30.0,
            margin: 100.0,
            z_min: 10.0,
            z_max: 250.0,
            start_z: [100.0, 250.0],
            granularity: 0.2,
            budget: 5000.0,
        }
    }
}

impl RelaySceneConfig {
    pub fn validate(&self) -> Result<()> {
        let key = |k: &str| format!("relay.{k}");
        if !(self.separation[0] > 0.0 && self.separation[1] >= self.separation[0]) {
            return Err(Error::config(key("separation"), "must be an increasing pair of positive lengths"));
        }
        if !(self.height[0] > 0.0 && self.height[1] >= self.height[0]) {
            return Err(Error::config(key("height"), "must be an increasing pair of positive heights"));
        }
        if !(self.radius > 0.0) {
            return Err(Error::config(key("radius"), "must be > 0"));
        }
        if !(self.lateral_spread >= 0.0 && self.margin > 0.0) {
            return Err(Error::config(key("margin"), "margin must be > 0 and lateral spread >= 0"));
        }
        if !(self.z_min >= 0.0 && self.z_max >= self.z_min) {
            return Err(Error::config(key("z_max"), "altitude bounds must satisfy 0 <= z_min <= z_max"));
        }
        if !(self.start_z[0] >= self.z_min && self.start_z[1] <= self.z_max && self.start_z[1] >= self.start_z[0]) {
            return Err(Error::config(key("start_z"), "must lie within the altitude bounds"));
        }
        if !(self.granularity > 0.0) {
            return Err(Error::config(key("granularity"), "must be > 0"));
        }
        if !(self.budget >= 0.0) {
            return Err(Error::config(key("budget"), "must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RelayScene {
    pub buildings: BuildingSet,
    pub problem: SearchProblem,
    pub start: Point3,
}

/// Users on the x axis symmetric about the origin, buildings scattered along
/// the segment between them, start above a random point of the allowed box.
pub fn relay_scene(cfg: &RelaySceneConfig, cp: &ChannelParams, stream: &SeedStream) -> Result<RelayScene> {
    cfg.validate()?;
    let mut rng = stream.rng(0);
    let sep = cfg.separation[0] + rng.random::<f64>() * (cfg.separation[1] - cfg.separation[0]);
    let half = sep / 2.0;
    let users = vec![Point3::new(-half, 0.0, 0.0), Point3::new(half, 0.0, 0.0)];
    let region = Region::new(-half - cfg.margin, half + cfg.margin, -cfg.margin - half, cfg.margin + half)?;
    let mut bs = Vec::with_capacity(cfg.buildings);
    while bs.len() < cfg.buildings {
        let x = (rng.random::<f64>() * 1.6 - 0.8) * half;
        let y = (rng.random::<f64>() * 2.0 - 1.0) * cfg.lateral_spread;
        let h = cfg.height[0] + rng.random::<f64>() * (cfg.height[1] - cfg.height[0]);
        let b = Building::new(x, y, cfg.radius, h)?;
        // keep the users outside every footprint
        if users.iter().all(|u| !b.covers(u.x, u.y)) {
            bs.push(b);
        }
    }
    let buildings = BuildingSet::from_buildings(region, bs)?;
    let allowed = AllowedSet::new(region, cfg.z_min, cfg.z_max)?;
    let (sx, sy) = region.sample(&mut rng);
    let sz = cfg.start_z[0] + rng.random::<f64>() * (cfg.start_z[1] - cfg.start_z[0]);
    let problem = SearchProblem::new(users, allowed, cfg.granularity, cfg.budget, *cp)?;
    Ok(RelayScene { buildings, problem, start: Point3::new(sx, sy, sz) })
}
