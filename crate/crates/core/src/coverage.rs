//! Downlink coverage probability by Monte Carlo.
//!
//! Terrain mode and model mode share the whole pipeline; the only injected
//! dependency is the [`LinkResolver`] that decides LoS/NLoS per link.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{dbm_to_mw, ChannelParams, Fading, LinkState};
use crate::error::{ensure_finite, Error, Result};
use crate::los_model::{elevation_deg, LosCurveModel};
use crate::rng::{rng_from_seed, SeedStream, SimRng};
use crate::terrain::{poisson_count, BuildingSet, Point3, Region};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deployment {
    pub uav_positions: Vec<Point3>,
    /// UAVs per km^2.
    pub density: f64,
    pub altitude: f64,
    pub seed: u64,
}

impl Deployment {
    pub fn fixed(uav_positions: Vec<Point3>) -> Self {
        let altitude = uav_positions.first().map_or(0.0, |p| p.z);
        Deployment { uav_positions, density: f64::NAN, altitude, seed: 0 }
    }

    pub fn len(&self) -> usize {
        self.uav_positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.uav_positions.is_empty()
    }
}

/// Homogeneous PPP of UAVs at a common altitude.
pub fn deploy_ppp(density: f64, altitude: f64, region: &Region, seed: u64) -> Result<Deployment> {
    ensure_finite("density", density)?;
    ensure_finite("altitude", altitude)?;
    if density < 0.0 {
        return Err(Error::Parameter(format!("density must be >= 0, got {density}")));
    }
    if !(altitude > 0.0) {
        return Err(Error::Parameter(format!("altitude must be > 0, got {altitude}")));
    }
    let mut rng = rng_from_seed(seed);
    Ok(deploy_with(&mut rng, density, altitude, region, seed))
}

fn deploy_with(rng: &mut SimRng, density: f64, altitude: f64, region: &Region, seed: u64) -> Deployment {
    let n = poisson_count(rng, density * region.area_km2());
    let uav_positions = (0..n)
        .map(|_| {
            let (x, y) = region.sample(rng);
            Point3::new(x, y, altitude)
        })
        .collect();
    Deployment { uav_positions, density, altitude, seed }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Exact blockage against the building set.
    Terrain,
    /// Independent Bernoulli blockage from an elevation-angle curve.
    Model,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Terrain => "terrain",
            Mode::Model => "model",
        }
    }
}

/// Decides the state of one UAV-user link.
pub trait LinkResolver: Sync {
    fn resolve(&self, user: &Point3, uav: &Point3, rng: &mut SimRng) -> LinkState;

    /// Whether `resolve` ignores the RNG.
    fn is_deterministic(&self) -> bool;
}

pub struct TerrainResolver<'a>(pub &'a BuildingSet);

impl LinkResolver for TerrainResolver<'_> {
    fn resolve(&self, user: &Point3, uav: &Point3, _rng: &mut SimRng) -> LinkState {
        LinkState::from_blocked(self.0.segment_blocked(*user, *uav))
    }

    fn is_deterministic(&self) -> bool {
        true
    }
}

pub struct ModelResolver(pub LosCurveModel);

impl LinkResolver for ModelResolver {
    fn resolve(&self, user: &Point3, uav: &Point3, rng: &mut SimRng) -> LinkState {
        let dz = uav.z - user.z;
        let p = if dz > 0.0 {
            self.0.probability(elevation_deg(user.horizontal_distance(uav), dz))
        } else {
            self.0.probability(0.0)
        };
        LinkState::from_blocked(rng.random::<f64>() >= p)
    }

    fn is_deterministic(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Association {
    pub serving: usize,
    pub states: Vec<LinkState>,
}

/// Linear mean received power in mW.
#[inline]
pub(crate) fn mean_power_mw(d: f64, q: LinkState, cp: &ChannelParams) -> f64 {
    dbm_to_mw(cp.zeta + cp.eta(q)) * d.powf(-cp.alpha(q))
}

/// Resolve every link and pick the UAV with the largest mean received power.
/// `None` when the deployment is empty.
pub fn associate(
    user: &Point3,
    d: &Deployment,
    resolver: &dyn LinkResolver,
    cp: &ChannelParams,
    rng: &mut SimRng,
) -> Option<Association> {
    let states: Vec<LinkState> = d.uav_positions.iter().map(|u| resolver.resolve(user, u, rng)).collect();
    let serving = serving_index(user, &d.uav_positions, &states, cp)?;
    Some(Association { serving, states })
}

fn serving_index(user: &Point3, uavs: &[Point3], states: &[LinkState], cp: &ChannelParams) -> Option<usize> {
    uavs.iter()
        .zip(states)
        .enumerate()
        .map(|(k, (u, &q))| (k, mean_power_mw(user.distance(u), q, cp)))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(k, _)| k)
}

#[derive(Debug, Clone)]
pub enum UserSpec {
    /// One uniformly placed user per trial.
    Typical(Region),
    /// A PPP of users per trial, density per km^2.
    Ppp { density: f64, region: Region },
    /// The same users every trial.
    Explicit(Vec<Point3>),
}

#[derive(Debug, Clone)]
pub enum DeploymentSpec {
    /// Redrawn every trial.
    Ppp {
        density: f64,
        altitude: f64,
        region: Region,
    },
    Fixed(Deployment),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoverageResult {
    pub threshold: f64,
    pub mean_coverage: f64,
    pub trials: u64,
    /// 95 % normal-approximation half width.
    pub ci95: f64,
}

impl CoverageResult {
    fn from_counts(threshold: f64, hits: u64, n: u64) -> Self {
        let p = if n > 0 { hits as f64 / n as f64 } else { 0.0 };
        let ci95 = if n > 0 { 1.96 * (p * (1.0 - p) / n as f64).sqrt() } else { 0.0 };
        CoverageResult { threshold, mean_coverage: p, trials: n, ci95 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverageConfig {
    pub user_height: f64,
    pub trials: u64,
}

impl Default for CoverageConfig {
    fn default() -> Self {
        CoverageConfig { user_height: 0.0, trials: 20_000 }
    }
}

const TRIAL_CHUNK: u64 = 256;

/// Coverage at each threshold (dB) from the same Monte Carlo samples.
///
/// Each trial redraws the deployment (PPP spec), the users, model-mode
/// blockage and all fading gains, each from its own substream keyed by the
/// trial index, so two modes run with the same `stream` are paired.
pub fn coverage_probability(
    users: &UserSpec,
    deployment: &DeploymentSpec,
    resolver: &dyn LinkResolver,
    cp: &ChannelParams,
    thresholds: &[f64],
    cfg: &CoverageConfig,
    stream: &SeedStream,
) -> Result<Vec<CoverageResult>> {
    if cfg.trials < 1 {
        return Err(Error::Parameter("trials must be >= 1".into()));
    }
    cp.validate()?;
    let fading = Fading::new(cp);
    let noise = cp.noise_mw();
    let s_deploy = stream.child("deploy", 0);
    let s_users = stream.child("users", 0);
    let s_block = stream.child("blockage", 0);
    let s_fade = stream.child("fading", 0);
    let nt = thresholds.len();

    // fixed geometry with exact blockage: resolve once
    let cached: Option<(Vec<Point3>, Vec<Vec<LinkState>>)> = match (users, deployment) {
        (UserSpec::Explicit(us), DeploymentSpec::Fixed(d)) if resolver.is_deterministic() => {
            let mut rng = s_block.rng(0);
            let states =
                us.iter().map(|u| d.uav_positions.iter().map(|v| resolver.resolve(u, v, &mut rng)).collect()).collect();
            Some((us.clone(), states))
        }
        _ => None,
    };

    let chunks = cfg.trials.div_ceil(TRIAL_CHUNK);
    let parts: Vec<(Vec<u64>, u64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut hits = vec![0u64; nt];
            let mut n = 0u64;
            let mut sinrs = Vec::new();
            let end = ((c + 1) * TRIAL_CHUNK).min(cfg.trials);
            for t in c * TRIAL_CHUNK..end {
                let mut rng_d = s_deploy.rng(t);
                let mut rng_u = s_users.rng(t);
                let mut rng_b = s_block.rng(t);
                let mut rng_f = s_fade.rng(t);
                let dep_owned;
                let uavs: &[Point3] = match deployment {
                    DeploymentSpec::Fixed(d) => &d.uav_positions,
                    DeploymentSpec::Ppp { density, altitude, region } => {
                        dep_owned = deploy_with(&mut rng_d, *density, *altitude, region, t);
                        &dep_owned.uav_positions
                    }
                };
                sinrs.clear();
                match &cached {
                    Some((us, states)) => {
                        for (u, st) in us.iter().zip(states) {
                            sinrs.push(trial_sinr(u, uavs, st, cp, &fading, noise, &mut rng_f));
                        }
                    }
                    None => {
                        let user_list: Vec<Point3> = match users {
                            UserSpec::Typical(r) => {
                                let (x, y) = r.sample(&mut rng_u);
                                vec![Point3::new(x, y, cfg.user_height)]
                            }
                            UserSpec::Ppp { density, region } => {
                                let k = poisson_count(&mut rng_u, density * region.area_km2());
                                (0..k)
                                    .map(|_| {
                                        let (x, y) = region.sample(&mut rng_u);
                                        Point3::new(x, y, cfg.user_height)
                                    })
                                    .collect()
                            }
                            UserSpec::Explicit(us) => us.clone(),
                        };
                        let mut st = Vec::with_capacity(uavs.len());
                        for u in &user_list {
                            st.clear();
                            st.extend(uavs.iter().map(|v| resolver.resolve(u, v, &mut rng_b)));
                            sinrs.push(trial_sinr(u, uavs, &st, cp, &fading, noise, &mut rng_f));
                        }
                    }
                }
                for s in &sinrs {
                    n += 1;
                    for (k, &g) in thresholds.iter().enumerate() {
                        if *s > g {
                            hits[k] += 1;
                        }
                    }
                }
            }
            (hits, n)
        })
        .collect();
    let mut hits = vec![0u64; nt];
    let mut n = 0u64;
    for (h, m) in parts {
        n += m;
        for k in 0..nt {
            hits[k] += h[k];
        }
    }
    Ok(thresholds.iter().enumerate().map(|(k, &g)| CoverageResult::from_counts(g, hits[k], n)).collect())
}

/// SINR in dB for one user; `-inf` without any UAV.
fn trial_sinr(
    user: &Point3,
    uavs: &[Point3],
    states: &[LinkState],
    cp: &ChannelParams,
    fading: &Fading,
    noise: f64,
    rng: &mut SimRng,
) -> f64 {
    let Some(serving) = serving_index(user, uavs, states, cp) else {
        return f64::NEG_INFINITY;
    };
    let mut signal = 0.0;
    let mut interference = 0.0;
    for (k, (u, &q)) in uavs.iter().zip(states).enumerate() {
        let p = mean_power_mw(user.distance(u), q, cp) * fading.sample(q, rng);
        if k == serving {
            signal = p;
        } else {
            interference += p;
        }
    }
    10.0 * (signal / (interference + noise)).log10()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub mode: Mode,
    pub density: f64,
    pub result: CoverageResult,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn get(&self, mode: Mode, density: f64, threshold: f64) -> Option<&CoverageResult> {
        self.rows
            .iter()
            .find(|r| r.mode == mode && r.density == density && r.result.threshold == threshold)
            .map(|r| &r.result)
    }

    /// Density with the highest coverage for each `(mode, threshold)`.
    pub fn argmax(&self) -> Vec<(Mode, f64, f64)> {
        let mut keys: Vec<(Mode, f64)> = Vec::new();
        for r in &self.rows {
            if !keys.iter().any(|k| k.0 == r.mode && k.1 == r.result.threshold) {
                keys.push((r.mode, r.result.threshold));
            }
        }
        keys.into_iter()
            .map(|(m, g)| {
                let best = self
                    .rows
                    .iter()
                    .filter(|r| r.mode == m && r.result.threshold == g)
                    .max_by(|a, b| a.result.mean_coverage.total_cmp(&b.result.mean_coverage))
                    .map_or(f64::NAN, |r| r.density);
                (m, g, best)
            })
            .collect()
    }

    /// `mode,density_per_km2,threshold_db,coverage,ci95,trials`
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "mode,density_per_km2,threshold_db,coverage,ci95,trials")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{:.6},{:.6},{}",
                r.mode.name(),
                r.density,
                r.result.threshold,
                r.result.mean_coverage,
                r.result.ci95,
                r.result.trials
            )?;
        }
        Ok(())
    }
}

/// Scene shared by every point of a density sweep.
pub struct SweepScene<'a> {
    pub buildings: &'a BuildingSet,
    pub curve: LosCurveModel,
    /// Users are placed here.
    pub core: Region,
    /// UAVs are placed here.
    pub deploy_region: Region,
}

/// Coverage for every `(mode, density, threshold)`; modes at one density
/// share their substreams.
#[allow(clippy::too_many_arguments)]
pub fn density_sweep(
    scene: &SweepScene<'_>,
    densities: &[f64],
    altitude: f64,
    thresholds: &[f64],
    modes: &[Mode],
    cp: &ChannelParams,
    cfg: &CoverageConfig,
    stream: &SeedStream,
) -> Result<SweepTable> {
    if densities.is_empty() {
        return Err(Error::Parameter("density list is empty".into()));
    }
    let terrain = TerrainResolver(scene.buildings);
    let model = ModelResolver(scene.curve);
    let mut rows = Vec::new();
    for (k, &density) in densities.iter().enumerate() {
        let s = stream.child("density", k as u64);
        let deployment = DeploymentSpec::Ppp { density, altitude, region: scene.deploy_region };
        let users = UserSpec::Typical(scene.core);
        for &mode in modes {
            let resolver: &dyn LinkResolver = match mode {
                Mode::Terrain => &terrain,
                Mode::Model => &model,
            };
            for result in coverage_probability(&users, &deployment, resolver, cp, thresholds, cfg, &s)? {
                rows.push(SweepRow { mode, density, result });
            }
        }
    }
    Ok(SweepTable { rows })
}
