//! Mean user coverage as a function of the search budget.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::relay::device_search;
use super::{grid_argmax, AllowedSet, SearchProblem};
use crate::channel::{dbm_to_mw, mean_received_power_unchecked, ChannelParams, Fading, LinkState};
use crate::coverage::{coverage_probability, CoverageConfig, DeploymentSpec, ModelResolver, UserSpec};
use crate::error::{Error, Result};
use crate::los_model::LosCurveModel;
use crate::rng::SeedStream;
use crate::terrain::{poisson_count, BuildingSet, Point3, Region, DEFAULT_CELL_CAP};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LengthSweepConfig {
    /// UAVs per km^2.
    pub uav_density: f64,
    /// Users per km^2.
    pub user_density: f64,
    pub user_height: f64,
    pub z_min: f64,
    pub z_max: f64,
    pub granularity: f64,
    /// Ascending search budgets, m.
    pub budgets: Vec<f64>,
    pub threshold_db: f64,
    /// Fading draws per coverage evaluation.
    pub fading_trials: u64,
    /// Independent user/UAV draws averaged together.
    pub scenes: u64,
    /// Each UAV searches the bounding box of its users grown by this margin.
    pub search_margin: f64,
    pub exhaustive_step: f64,
    /// Altitude grid for the model-based deployment.
    pub sg_altitudes: Vec<f64>,
    pub sg_trials: u64,
    /// Guard band around the core for the model-based altitude choice.
    pub sg_guard: f64,
}

impl Default for LengthSweepConfig {
    fn default() -> Self {
        LengthSweepConfig {
            uav_density: 12.0,
            user_density: 200.0,
            user_height: 0.0,
            z_min: 10.0,
            z_max: 150.0,
            granularity: 0.2,
            budgets: vec![0.0, 50.0, 100.0, 200.0, 300.0, 500.0, 750.0, 1000.0, 1500.0, 2000.0],
            threshold_db: 4.0,
            fading_trials: 200,
            scenes: 3,
            search_margin: 50.0,
            exhaustive_step: 5.0,
            sg_altitudes: (4..=15).map(|k| 10.0 * k as f64).collect(),
            sg_trials: 20_000,
            sg_guard: 100.0,
        }
    }
}

impl LengthSweepConfig {
    pub fn validate(&self) -> Result<()> {
        let key = |k: &str| format!("search.{k}");
        if self.budgets.is_empty() || self.budgets.windows(2).any(|w| w[1] < w[0]) || self.budgets[0] < 0.0 {
            return Err(Error::config(key("budgets"), "must be a non-empty ascending list of non-negative lengths"));
        }
        for (k, v) in [
            ("uav_density", self.uav_density),
            ("user_density", self.user_density),
            ("granularity", self.granularity),
            ("exhaustive_step", self.exhaustive_step),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(key(k), format!("must be > 0, got {v}")));
            }
        }
        if !(self.z_min >= 0.0 && self.z_max >= self.z_min && self.z_max.is_finite()) {
            return Err(Error::config(key("z_max"), "altitude bounds must satisfy 0 <= z_min <= z_max"));
        }
        if !(self.search_margin >= 0.0 && self.sg_guard >= 0.0) {
            return Err(Error::config(key("search_margin"), "must be >= 0"));
        }
        if self.fading_trials == 0 || self.scenes == 0 || self.sg_trials == 0 {
            return Err(Error::config(key("fading_trials"), "trial and scene counts must be >= 1"));
        }
        if self.sg_altitudes.is_empty() || self.sg_altitudes.iter().any(|h| !(*h > 0.0)) {
            return Err(Error::config(key("sg_altitudes"), "must be a non-empty list of positive altitudes"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LengthSweepResult {
    pub budgets: Vec<f64>,
    /// Mean coverage over all users, per budget.
    pub coverage: Vec<f64>,
    pub ci95: Vec<f64>,
    /// Every UAV parked at its exhaustive-grid optimum.
    pub exhaustive: f64,
    /// Random positions at the model-optimal common altitude.
    pub sg_level: f64,
    pub sg_altitude: f64,
    /// Coverage samples per budget (users x fading draws, all scenes).
    pub trials: u64,
}

impl LengthSweepResult {
    /// Smallest budget whose coverage reaches the model-based level.
    pub fn crossing_budget(&self) -> Option<f64> {
        self.budgets.iter().zip(&self.coverage).find(|(_, c)| **c >= self.sg_level).map(|(b, _)| *b)
    }

    /// `budget_m,coverage,ci95,exhaustive,sg_level,trials`
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "budget_m,coverage,ci95,exhaustive,sg_level,trials")?;
        for k in 0..self.budgets.len() {
            writeln!(
                w,
                "{},{:.6},{:.6},{:.6},{:.6},{}",
                self.budgets[k], self.coverage[k], self.ci95[k], self.exhaustive, self.sg_level, self.trials
            )?;
        }
        Ok(())
    }
}

struct Scene {
    users: Vec<Point3>,
    starts: Vec<Point3>,
    /// Users grouped by nearest UAV (horizontal distance).
    groups: Vec<Vec<Point3>>,
}

fn draw_scene(core: &Region, cfg: &LengthSweepConfig, stream: &SeedStream) -> Scene {
    let mut rng = stream.rng(0);
    let n_uav = poisson_count(&mut rng, cfg.uav_density * core.area_km2()).max(1);
    let starts: Vec<Point3> = (0..n_uav)
        .map(|_| {
            let (x, y) = core.sample(&mut rng);
            let lo = cfg.sg_altitudes.iter().copied().fold(f64::INFINITY, f64::min).max(cfg.z_min);
            let hi = cfg.sg_altitudes.iter().copied().fold(0.0, f64::max).min(cfg.z_max).max(lo);
            Point3::new(x, y, lo + rng.random::<f64>() * (hi - lo))
        })
        .collect();
    let n_user = poisson_count(&mut rng, cfg.user_density * core.area_km2());
    let users: Vec<Point3> = (0..n_user)
        .map(|_| {
            let (x, y) = core.sample(&mut rng);
            Point3::new(x, y, cfg.user_height)
        })
        .collect();
    let mut groups = vec![Vec::new(); n_uav];
    for u in &users {
        let k = (0..n_uav)
            .min_by(|&i, &j| u.horizontal_distance(&starts[i]).total_cmp(&u.horizontal_distance(&starts[j])))
            .unwrap_or(0);
        groups[k].push(*u);
    }
    Scene { users, starts, groups }
}

fn allowed_for(group: &[Point3], start: &Point3, core: &Region, cfg: &LengthSweepConfig) -> Result<AllowedSet> {
    let xs = group.iter().map(|p| p.x).chain([start.x]);
    let ys = group.iter().map(|p| p.y).chain([start.y]);
    let (x0, x1) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let (y0, y1) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let m = cfg.search_margin.max(cfg.granularity);
    let r = Region::new(
        (x0 - m).max(core.x_min),
        (x1 + m).min(core.x_max),
        (y0 - m).max(core.y_min),
        (y1 + m).min(core.y_max),
    )?;
    AllowedSet::new(r, cfg.z_min, cfg.z_max)
}

/// Model-mode coverage of a PPP at each candidate altitude; the best one.
fn sg_altitude(
    core: &Region,
    curve: &LosCurveModel,
    cfg: &LengthSweepConfig,
    cp: &ChannelParams,
    stream: &SeedStream,
) -> Result<f64> {
    let resolver = ModelResolver(*curve);
    let mut best = (f64::NAN, f64::NEG_INFINITY);
    for (k, &h) in cfg.sg_altitudes.iter().enumerate() {
        let dep = DeploymentSpec::Ppp { density: cfg.uav_density, altitude: h, region: core.expanded(cfg.sg_guard) };
        let res = coverage_probability(
            &UserSpec::Typical(*core),
            &dep,
            &resolver,
            cp,
            &[cfg.threshold_db],
            &CoverageConfig { user_height: cfg.user_height, trials: cfg.sg_trials },
            &stream.child("altitude", k as u64),
        )?;
        if res[0].mean_coverage > best.1 {
            best = (h, res[0].mean_coverage);
        }
    }
    Ok(best.0)
}

/// Coverage of one UAV's group, evaluated with common random numbers.
///
/// Each user keeps `F` fading draws. Interference comes from every other UAV
/// at its pre-search position, so a UAV's score depends on its own position
/// only and the network total is a sum of per-UAV scores.
struct GroupScore<'a> {
    users: &'a [Point3],
    /// Per user and serving-link state, the mean serving power (mW) each draw
    /// needs to clear the threshold, ascending.
    required: Vec<[Vec<f64>; 2]>,
    b: &'a BuildingSet,
    cp: &'a ChannelParams,
}

impl GroupScore<'_> {
    /// Number of (user, draw) pairs covered with the UAV at `x`.
    fn covered(&self, x: &Point3) -> u64 {
        self.users
            .iter()
            .zip(&self.required)
            .map(|(u, req)| {
                let q = if self.b.segment_blocked(*u, *x) { LinkState::Nlos } else { LinkState::Los };
                let s = dbm_to_mw(mean_received_power_unchecked(u.distance(x).max(1e-3), q, self.cp));
                let r = match q {
                    LinkState::Los => &req[0],
                    LinkState::Nlos => &req[1],
                };
                r.partition_point(|&need| need <= s) as u64
            })
            .sum()
    }
}

fn group_scores<'a>(
    scene: &'a Scene,
    b: &'a BuildingSet,
    cp: &'a ChannelParams,
    cfg: &LengthSweepConfig,
    stream: &SeedStream,
) -> Vec<GroupScore<'a>> {
    let fading = Fading::new(cp);
    let noise = cp.noise_mw();
    let theta = dbm_to_mw(cfg.threshold_db);
    let mut next = 0u64;
    scene
        .groups
        .iter()
        .enumerate()
        .map(|(k, group)| {
            let required = group
                .iter()
                .map(|u| {
                    let mut rng = stream.rng(next);
                    next += 1;
                    let interferers: Vec<(LinkState, f64)> = scene
                        .starts
                        .iter()
                        .enumerate()
                        .filter(|&(j, _)| j != k)
                        .map(|(_, v)| {
                            let q = if b.segment_blocked(*u, *v) { LinkState::Nlos } else { LinkState::Los };
                            (q, dbm_to_mw(mean_received_power_unchecked(u.distance(v).max(1e-3), q, cp)))
                        })
                        .collect();
                    let mut req = [Vec::new(), Vec::new()];
                    for _ in 0..cfg.fading_trials {
                        let i: f64 = interferers.iter().map(|&(q, p)| p * fading.sample(q, &mut rng)).sum();
                        let g_los = fading.sample(LinkState::Los, &mut rng);
                        let g_nlos = fading.sample(LinkState::Nlos, &mut rng);
                        let need = theta * (noise + i);
                        req[0].push(need / g_los);
                        req[1].push(need / g_nlos);
                    }
                    for r in &mut req {
                        r.sort_by(f64::total_cmp);
                    }
                    req
                })
                .collect();
            GroupScore { users: group, required, b, cp }
        })
        .collect()
}

/// Every UAV runs the multi-user search once with the largest budget. For
/// each budget it is parked at the probe, reached within that budget, whose
/// group coverage is highest, so coverage never decreases with the budget.
/// The exhaustive reference parks each UAV at the grid node maximizing the
/// same group coverage.
pub fn search_length_sweep(
    b: &BuildingSet,
    core: &Region,
    curve: &LosCurveModel,
    cfg: &LengthSweepConfig,
    cp: &ChannelParams,
    stream: &SeedStream,
) -> Result<LengthSweepResult> {
    cfg.validate()?;
    cp.validate()?;
    let h_sg = sg_altitude(core, curve, cfg, cp, &stream.child("sg", 0))?;
    let max_budget = *cfg.budgets.last().unwrap_or(&0.0);
    let nb = cfg.budgets.len();
    let mut hits = vec![0u64; nb];
    let (mut ex_hits, mut sg_hits, mut total) = (0u64, 0u64, 0u64);
    for s in 0..cfg.scenes {
        let ss = stream.child("scene", s);
        let scene = draw_scene(core, cfg, &ss.child("draw", 0));
        if scene.users.is_empty() {
            continue;
        }
        let scores = group_scores(&scene, b, cp, cfg, &ss.child("fading", 0));
        let per_uav: Vec<(Vec<u64>, u64, u64)> = scene
            .groups
            .par_iter()
            .zip(&scene.starts)
            .zip(&scores)
            .enumerate()
            .map(|(k, ((group, start), score))| {
                let sg = score.covered(&start.with_z(h_sg));
                if group.is_empty() {
                    return Ok((vec![0; nb], 0, sg));
                }
                let allowed = allowed_for(group, start, core, cfg)?;
                let p = SearchProblem::new(group.clone(), allowed, cfg.granularity, max_budget, *cp)?;
                let mut rng = ss.child("search", k as u64).rng(0);
                let trace = device_search(&p, b, allowed.clamp(*start), &mut rng)?;
                let mut by_budget = Vec::with_capacity(nb);
                let mut best = 0u64;
                let mut i = 0;
                for &budget in &cfg.budgets {
                    while i < trace.probes.len() && (i == 0 || trace.probes[i].path_length <= budget + 1e-9) {
                        best = best.max(score.covered(&trace.probes[i].position));
                        i += 1;
                    }
                    by_budget.push(best);
                }
                let (_, ex) =
                    grid_argmax(&allowed, cfg.exhaustive_step, DEFAULT_CELL_CAP, |x| score.covered(x) as f64)?;
                Ok((by_budget, ex as u64, sg))
            })
            .collect::<Result<_>>()?;
        for (by_budget, ex, sg) in per_uav {
            for (h, v) in hits.iter_mut().zip(by_budget) {
                *h += v;
            }
            ex_hits += ex;
            sg_hits += sg;
        }
        total += scene.users.len() as u64 * cfg.fading_trials;
    }
    if total == 0 {
        return Err(Error::Parameter("no users were drawn in any scene".into()));
    }
    let nt = total as f64;
    let coverage: Vec<f64> = hits.iter().map(|&h| h as f64 / nt).collect();
    let ci95 = coverage.iter().map(|p| 1.96 * (p * (1.0 - p) / nt).sqrt()).collect();
    Ok(LengthSweepResult {
        budgets: cfg.budgets.clone(),
        coverage,
        ci95,
        exhaustive: ex_hits as f64 / nt,
        sg_level: sg_hits as f64 / nt,
        sg_altitude: h_sg,
        trials: total,
    })
}
