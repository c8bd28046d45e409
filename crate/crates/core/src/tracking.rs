//! Parade tracking: two crowds walk known routes and one UAV per crowd
//! follows it, steering with a height map to keep line of sight.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::channel::{mean_snr_db, ChannelParams, LinkState};
use crate::error::{Error, Result};
use crate::reconstruct::{Corridor, HeightField, Polyline};
use crate::rng::{SeedStream, SimRng};
use crate::terrain::{generate_buildings, poisson_count, BuildingSet, HeightDistribution, Point3, Region};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParadeScenario {
    pub route_a: Polyline,
    pub route_b: Polyline,
    /// Crowd centroid advance per slot, m.
    pub pace: f64,
    pub slots: usize,
    pub crowd_size_mean: f64,
    /// Radius of the crowd disc around its centroid, m.
    pub crowd_spread: f64,
    /// Per-slot standard deviation of each user's offset, m.
    pub jitter: f64,
    pub user_height: f64,
    pub uav_altitude_bounds: [f64; 2],
    /// Largest UAV displacement per slot, m.
    pub step_budget: f64,
    /// Buildings whose footprint comes this close to a route are left out.
    pub road_half_width: f64,
    /// The UAV keeps at least this horizontal distance from the crowd centroid.
    pub standoff: f64,
    pub directions: usize,
    pub radii: usize,
    pub altitudes: usize,
    /// Quantile of the height prior assumed for unknown cells.
    pub pessimistic_quantile: f64,
    pub height_prior: HeightDistribution,
}

impl Default for ParadeScenario {
    fn default() -> Self {
        ParadeScenario {
            route_a: Polyline { points: vec![(580.0, 370.0), (500.0, 450.0), (500.0, 550.0), (300.0, 550.0)] },
            route_b: Polyline { points: vec![(420.0, 370.0), (500.0, 450.0), (500.0, 550.0), (640.0, 690.0)] },
            pace: 50.0,
            slots: 9,
            crowd_size_mean: 20.0,
            crowd_spread: 15.0,
            jitter: 2.0,
            user_height: 0.0,
            uav_altitude_bounds: [30.0, 30.0],
            step_budget: 60.0,
            road_half_width: 6.0,
            standoff: 40.0,
            directions: 24,
            radii: 3,
            altitudes: 3,
            pessimistic_quantile: 0.95,
            height_prior: HeightDistribution::default(),
        }
    }
}

impl ParadeScenario {
    pub fn validate(&self) -> Result<()> {
        let key = |k: &str| format!("tracking.{k}");
        self.route_a.validate().map_err(|e| Error::config(key("route_a"), e.to_string()))?;
        self.route_b.validate().map_err(|e| Error::config(key("route_b"), e.to_string()))?;
        if !(self.pace > 0.0 && self.pace.is_finite()) {
            return Err(Error::config(key("pace"), "must be > 0"));
        }
        if self.slots == 0 {
            return Err(Error::config(key("slots"), "must be >= 1"));
        }
        if !(self.crowd_size_mean > 0.0 && self.crowd_spread >= 0.0 && self.jitter >= 0.0) {
            return Err(Error::config(key("crowd_size_mean"), "crowd size must be > 0, spread and jitter >= 0"));
        }
        let [lo, hi] = self.uav_altitude_bounds;
        if !(lo >= 0.0 && hi >= lo && hi.is_finite()) {
            return Err(Error::config(key("uav_altitude_bounds"), "must satisfy 0 <= min <= max"));
        }
        if !(self.step_budget >= 0.0 && self.step_budget.is_finite()) {
            return Err(Error::config(key("step_budget"), "must be >= 0"));
        }
        if !(self.road_half_width >= 0.0) {
            return Err(Error::config(key("road_half_width"), "must be >= 0"));
        }
        if !(self.standoff >= 0.0 && self.standoff.is_finite()) {
            return Err(Error::config(key("standoff"), "must be >= 0"));
        }
        if self.directions == 0 || self.radii == 0 || self.altitudes == 0 {
            return Err(Error::config(key("directions"), "candidate counts must be >= 1"));
        }
        if !(self.pessimistic_quantile > 0.0 && self.pessimistic_quantile < 1.0) {
            return Err(Error::config(key("pessimistic_quantile"), "must lie in (0, 1)"));
        }
        self.height_prior.validate().map_err(|e| Error::config(key("height_prior"), e.to_string()))
    }

    pub fn routes(&self) -> [&Polyline; 2] {
        [&self.route_a, &self.route_b]
    }

    pub fn corridor(&self, width: f64) -> Result<Corridor> {
        Corridor::new(vec![self.route_a.clone(), self.route_b.clone()], width)
    }

    fn track_options(&self) -> TrackOptions {
        TrackOptions {
            directions: self.directions,
            radii: self.radii,
            altitudes: self.altitudes,
            unknown_height: self.height_prior.quantile(self.pessimistic_quantile),
            standoff: self.standoff,
        }
    }
}

/// City for the parade: a building PPP with the roads along both routes kept clear.
pub fn parade_buildings(
    s: &ParadeScenario,
    region: Region,
    density: f64,
    radius: f64,
    heights: HeightDistribution,
    seed: u64,
) -> Result<BuildingSet> {
    let all = generate_buildings(region, density, radius, heights, seed)?;
    let kept = all
        .buildings()
        .iter()
        .filter(|b| s.routes().iter().all(|r| r.distance(b.x, b.y) >= b.radius + s.road_half_width))
        .copied()
        .collect();
    BuildingSet::from_buildings(region, kept)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotState {
    pub slot: usize,
    pub users_a: Vec<Point3>,
    pub users_b: Vec<Point3>,
    pub uav_a: Point3,
    pub uav_b: Point3,
}

/// User positions of both crowds per slot.
///
/// Slot 1 is a Poisson number of users uniform in a disc around each route
/// start. Every later slot moves the centroid `pace` metres along the route
/// (clamped at its end) and jitters each user's offset. No user is placed or
/// moved inside a building footprint of `b`.
pub fn gen_crowd_track(s: &ParadeScenario, b: &BuildingSet, rng: &mut SimRng) -> Result<Vec<[Vec<Point3>; 2]>> {
    s.validate()?;
    let jitter = Normal::new(0.0, s.jitter.max(1e-300)).expect("finite sigma");
    let mut offsets: [Vec<(f64, f64)>; 2] = [Vec::new(), Vec::new()];
    for (c, route) in s.routes().into_iter().enumerate() {
        let n = poisson_count(rng, s.crowd_size_mean).max(1);
        let (cx, cy) = route.at(0.0);
        for _ in 0..n {
            let mut off = (0.0, 0.0);
            for _ in 0..100 {
                let r = s.crowd_spread * rng.random::<f64>().sqrt();
                let phi = std::f64::consts::TAU * rng.random::<f64>();
                off = (r * phi.cos(), r * phi.sin());
                if !inside_building(b, cx + off.0, cy + off.1) {
                    break;
                }
            }
            offsets[c].push(off);
        }
    }
    let mut out = Vec::with_capacity(s.slots);
    for k in 0..s.slots {
        let mut slot: [Vec<Point3>; 2] = [Vec::new(), Vec::new()];
        for (c, route) in s.routes().into_iter().enumerate() {
            let (cx, cy) = route.at(k as f64 * s.pace);
            for off in offsets[c].iter_mut() {
                if k > 0 && s.jitter > 0.0 {
                    let mut n = (off.0 + jitter.sample(rng), off.1 + jitter.sample(rng));
                    let len = n.0.hypot(n.1);
                    if len > s.crowd_spread {
                        let f = s.crowd_spread / len;
                        n = (n.0 * f, n.1 * f);
                    }
                    if !inside_building(b, cx + n.0, cy + n.1) {
                        *off = n;
                    }
                }
                slot[c].push(Point3::new(cx + off.0, cy + off.1, s.user_height));
            }
        }
        out.push(slot);
    }
    Ok(out)
}

fn inside_building(b: &BuildingSet, x: f64, y: f64) -> bool {
    b.height_at(x, y) > 0.0
}

/// Candidate grid of the local tracker.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackOptions {
    pub directions: usize,
    pub radii: usize,
    pub altitudes: usize,
    /// Height assumed for cells with no finite upper bound, m.
    pub unknown_height: f64,
    /// Smallest horizontal distance kept from the crowd centroid, m.
    pub standoff: f64,
}

impl Default for TrackOptions {
    fn default() -> Self {
        TrackOptions {
            directions: 24,
            radii: 3,
            altitudes: 3,
            unknown_height: HeightDistribution::default().quantile(0.95),
            standoff: 0.0,
        }
    }
}

/// Whether the map predicts an unobstructed link.
pub fn estimated_los(user: &Point3, uav: &Point3, hf: &HeightField, unknown_height: f64) -> bool {
    let mut clear = true;
    hf.traverse_bounds(*user, *uav, |upper, z| {
        let h = if upper.is_finite() { upper } else { unknown_height };
        if h > z {
            clear = false;
        }
    });
    clear
}

/// Next UAV position: best (estimated-LoS fraction, then smaller mean
/// distance) over a disc of candidates within `step_budget` of `current`.
///
/// Candidates are the current position, `directions x radii` horizontal
/// moves at each of `altitudes` evenly spaced levels, and a move straight
/// toward the crowd centroid at each level. Moves whose 3-D length exceeds
/// the budget are dropped. If no candidate sees any user, the closest
/// candidate at the highest available altitude is returned.
pub fn track_step(
    current: Point3,
    crowd: &[Point3],
    hf: &HeightField,
    bounds: [f64; 2],
    step_budget: f64,
    opts: &TrackOptions,
) -> Result<Point3> {
    if !(step_budget >= 0.0) {
        return Err(Error::Parameter(format!("step budget must be >= 0, got {step_budget}")));
    }
    if crowd.is_empty() || step_budget == 0.0 {
        return Ok(current);
    }
    let cands = candidates(current, crowd, bounds, step_budget, opts);
    let scored: Vec<(f64, f64)> = cands
        .iter()
        .map(|c| {
            let seen = crowd.iter().filter(|u| estimated_los(u, c, hf, opts.unknown_height)).count();
            let dist = crowd.iter().map(|u| u.distance(c)).sum::<f64>() / crowd.len() as f64;
            (seen as f64 / crowd.len() as f64, dist)
        })
        .collect();
    let better = |a: (f64, f64), b: (f64, f64)| a.0 > b.0 || (a.0 == b.0 && a.1 < b.1);
    let mut best = 0;
    for (i, s) in scored.iter().enumerate() {
        if better(*s, scored[best]) {
            best = i;
        }
    }
    if scored[best].0 > 0.0 {
        return Ok(cands[best]);
    }
    let top = cands.iter().map(|c| c.z).fold(f64::NEG_INFINITY, f64::max);
    let mut pick: Option<usize> = None;
    for (i, c) in cands.iter().enumerate() {
        if c.z == top && pick.is_none_or(|p| scored[i].1 < scored[p].1) {
            pick = Some(i);
        }
    }
    Ok(cands[pick.expect("non-empty candidate set")])
}

fn candidates(current: Point3, crowd: &[Point3], bounds: [f64; 2], budget: f64, opts: &TrackOptions) -> Vec<Point3> {
    let [lo, hi] = bounds;
    let mut levels: Vec<f64> = (0..opts.altitudes)
        .map(|k| if opts.altitudes == 1 { lo } else { lo + (hi - lo) * k as f64 / (opts.altitudes - 1) as f64 })
        .collect();
    levels.dedup();
    let n = crowd.len() as f64;
    let (cx, cy) = crowd.iter().fold((0.0, 0.0), |a, u| (a.0 + u.x / n, a.1 + u.y / n));
    let fits = |p: &Point3| p.distance(&current) <= budget + 1e-9 && (p.x - cx).hypot(p.y - cy) >= opts.standoff - 1e-9;
    let mut out = Vec::new();
    if fits(&current) && current.z >= lo - 1e-9 && current.z <= hi + 1e-9 {
        out.push(current);
    }
    for &z in &levels {
        let dz = z - current.z;
        let reach = (budget * budget - dz * dz).max(0.0).sqrt();
        for r in 1..=opts.radii {
            let rho = reach * r as f64 / opts.radii as f64;
            for d in 0..opts.directions {
                let phi = std::f64::consts::TAU * d as f64 / opts.directions as f64;
                let p = Point3::new(current.x + rho * phi.cos(), current.y + rho * phi.sin(), z);
                if fits(&p) {
                    out.push(p);
                }
            }
        }
        // straight at the centroid, stopping at the standoff ring
        let (gx, gy) = (cx - current.x, cy - current.y);
        let g = gx.hypot(gy);
        if g > 0.0 {
            let go = (g - opts.standoff).clamp(0.0, reach);
            let p = Point3::new(current.x + gx * go / g, current.y + gy * go / g, z);
            if fits(&p) {
                out.push(p);
            }
        }
        // the vertical move alone
        let v = current.with_z(z);
        if fits(&v) {
            out.push(v);
        }
    }
    if out.is_empty() {
        // inside the standoff ring or out of the band: back off along the
        // centroid ray, or move vertically toward the band
        let (gx, gy) = (current.x - cx, current.y - cy);
        let g = gx.hypot(gy);
        let z = current.z.clamp(lo, hi);
        let dz = z - current.z;
        let reach = (budget * budget - dz * dz).max(0.0).sqrt();
        if dz.abs() <= budget && g > 0.0 {
            let go = (opts.standoff - g).clamp(0.0, reach);
            return vec![Point3::new(current.x + gx * go / g, current.y + gy * go / g, z)];
        }
        let dz = (current.z.clamp(lo, hi) - current.z).clamp(-budget, budget);
        out.push(current.with_z(current.z + dz));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotMetrics {
    /// 1-based slot index.
    pub slot: usize,
    /// 0 for crowd a, 1 for crowd b.
    pub crowd: usize,
    pub los_fraction: f64,
    pub mean_snr_db: f64,
    pub min_snr_db: f64,
    pub uav: Point3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParadeRun {
    pub slots: Vec<SlotState>,
    pub metrics: Vec<SlotMetrics>,
}

impl ParadeRun {
    pub fn mean_los_fraction(&self) -> f64 {
        if self.metrics.is_empty() {
            return 0.0;
        }
        self.metrics.iter().map(|m| m.los_fraction).sum::<f64>() / self.metrics.len() as f64
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "slot,crowd,los_fraction,mean_snr_db,min_snr_db,uav_x,uav_y,uav_z")?;
        for m in &self.metrics {
            writeln!(
                w,
                "{},{},{:.6},{:.4},{:.4},{:.3},{:.3},{:.3}",
                m.slot,
                if m.crowd == 0 { "a" } else { "b" },
                m.los_fraction,
                m.mean_snr_db,
                m.min_snr_db,
                m.uav.x,
                m.uav.y,
                m.uav.z
            )?;
        }
        Ok(())
    }
}

/// Track both crowds for every slot, steering with `hf` and scoring against
/// the true terrain `b`. SNRs are fading-averaged.
///
/// Each UAV starts on the route line one standoff behind the start, at the
/// top of the altitude band. In every slot it sees the crowd's new positions,
/// moves once, and is scored.
pub fn run_parade(
    s: &ParadeScenario,
    hf: &HeightField,
    b: &BuildingSet,
    cp: &ChannelParams,
    stream: &SeedStream,
) -> Result<ParadeRun> {
    s.validate()?;
    cp.validate()?;
    let crowds = gen_crowd_track(s, b, &mut stream.rng(0))?;
    let opts = s.track_options();
    let mut uav: [Point3; 2] = [0, 1].map(|c| {
        let (x, y) = s.routes()[c].at_extended(-s.standoff);
        Point3::new(x, y, s.uav_altitude_bounds[1])
    });
    let mut slots = Vec::with_capacity(s.slots);
    let mut metrics = Vec::with_capacity(2 * s.slots);
    for (k, users) in crowds.into_iter().enumerate() {
        for c in 0..2 {
            uav[c] = track_step(uav[c], &users[c], hf, s.uav_altitude_bounds, s.step_budget, &opts)?;
            let mut los = 0usize;
            let mut snrs = Vec::with_capacity(users[c].len());
            for u in &users[c] {
                let q = LinkState::from_blocked(b.segment_blocked(*u, uav[c]));
                if q.is_los() {
                    los += 1;
                }
                snrs.push(mean_snr_db(u.distance(&uav[c]).max(1e-9), q, cp)?);
            }
            let n = users[c].len() as f64;
            metrics.push(SlotMetrics {
                slot: k + 1,
                crowd: c,
                los_fraction: los as f64 / n,
                mean_snr_db: snrs.iter().sum::<f64>() / n,
                min_snr_db: snrs.iter().copied().fold(f64::INFINITY, f64::min),
                uav: uav[c],
            });
        }
        let [users_a, users_b] = users;
        slots.push(SlotState { slot: k + 1, users_a, users_b, uav_a: uav[0], uav_b: uav[1] });
    }
    Ok(ParadeRun { slots, metrics })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use crate::terrain::Building;

    fn open_field() -> HeightField {
        let region = Region::square(1000.0).unwrap();
        HeightField::from_truth(&BuildingSet::empty(region), region, 4.0).unwrap()
    }

    fn ring(cx: f64, cy: f64) -> Vec<Point3> {
        (0..8)
            .map(|k| {
                let a = std::f64::consts::TAU * k as f64 / 8.0;
                Point3::new(cx + 5.0 * a.cos(), cy + 5.0 * a.sin(), 0.0)
            })
            .collect()
    }

    #[test]
    fn open_field_moves_straight_at_the_crowd() {
        let hf = open_field();
        let cur = Point3::new(100.0, 100.0, 30.0);
        let next = track_step(cur, &ring(400.0, 500.0), &hf, [30.0, 30.0], 50.0, &TrackOptions::default()).unwrap();
        let dir = ((400.0 - 100.0) / 500.0, (500.0 - 100.0) / 500.0);
        assert!((next.x - (100.0 + 50.0 * dir.0)).abs() < 1e-9);
        assert!((next.y - (100.0 + 50.0 * dir.1)).abs() < 1e-9);
        assert_eq!(next.z, 30.0);
    }

    #[test]
    fn zero_budget_stays_put() {
        let hf = open_field();
        let cur = Point3::new(100.0, 100.0, 30.0);
        assert_eq!(
            track_step(cur, &ring(400.0, 500.0), &hf, [30.0, 30.0], 0.0, &TrackOptions::default()).unwrap(),
            cur
        );
    }

    #[test]
    fn displacement_never_exceeds_budget() {
        let hf = open_field();
        let cur = Point3::new(500.0, 500.0, 80.0);
        for budget in [5.0, 20.0, 60.0] {
            let next =
                track_step(cur, &ring(520.0, 480.0), &hf, [30.0, 100.0], budget, &TrackOptions::default()).unwrap();
            assert!(next.distance(&cur) <= budget + 1e-9);
        }
    }

    #[test]
    fn known_building_is_skirted() {
        let region = Region::square(200.0).unwrap();
        let b = BuildingSet::from_buildings(region, vec![Building::new(100.0, 100.0, 8.0, 60.0).unwrap()]).unwrap();
        let hf = HeightField::from_truth(&b, region, 4.0).unwrap();
        let crowd = ring(130.0, 100.0);
        let cur = Point3::new(60.0, 100.0, 30.0);
        let opts = TrackOptions::default();
        let next = track_step(cur, &crowd, &hf, [30.0, 30.0], 20.0, &opts).unwrap();
        let frac = |p: &Point3| crowd.iter().filter(|u| estimated_los(u, p, &hf, opts.unknown_height)).count();
        assert!(frac(&next) >= frac(&cur));
        assert!(frac(&next) > 0);
    }

    #[test]
    fn unknown_map_falls_back_to_the_highest_level() {
        let region = Region::square(1000.0).unwrap();
        let hf = HeightField::new(region, 4.0).unwrap();
        let cur = Point3::new(100.0, 100.0, 30.0);
        let next = track_step(cur, &ring(400.0, 500.0), &hf, [20.0, 35.0], 50.0, &TrackOptions::default()).unwrap();
        assert_eq!(next.z, 35.0);
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn rigid_crowd_advances_by_pace() {
        let s = ParadeScenario { jitter: 0.0, ..ParadeScenario::default() };
        let b = BuildingSet::empty(Region::square(1000.0).unwrap());
        let track = gen_crowd_track(&s, &b, &mut rng_from_seed(3)).unwrap();
        let centroid = |v: &[Point3]| {
            let n = v.len() as f64;
            v.iter().fold((0.0, 0.0), |a, u| (a.0 + u.x / n, a.1 + u.y / n))
        };
        for c in 0..2 {
            for k in 1..s.slots {
                let (a, b2) = (centroid(&track[k - 1][c]), centroid(&track[k][c]));
                let step = (b2.0 - a.0).hypot(b2.1 - a.1);
                let route = s.routes()[c];
                let (p, q) = (route.at((k - 1) as f64 * s.pace), route.at(k as f64 * s.pace));
                assert!((step - (q.0 - p.0).hypot(q.1 - p.1)).abs() < 1e-9);
                for (u, v) in track[k - 1][c].iter().zip(&track[k][c]) {
                    assert!(((v.x - u.x) - (q.0 - p.0)).abs() < 1e-9);
                }
            }
        }
        // past the end the centroid stays put
        let long = ParadeScenario { slots: 30, jitter: 0.0, ..ParadeScenario::default() };
        let t = gen_crowd_track(&long, &b, &mut rng_from_seed(3)).unwrap();
        assert_eq!(t[28], t[29]);
    }

    #[test]
    fn empty_city_keeps_every_link() {
        let s = ParadeScenario::default();
        let region = Region::square(1000.0).unwrap();
        let b = BuildingSet::empty(region);
        let hf = HeightField::new(region, 4.0).unwrap();
        let run = run_parade(&s, &hf, &b, &ChannelParams::default(), &SeedStream::new(1, "p")).unwrap();
        assert_eq!(run.metrics.len(), 2 * s.slots);
        assert!(run.metrics.iter().all(|m| m.los_fraction == 1.0));
    }
}
