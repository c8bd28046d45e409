//! Terrain-blind placement search for a UAV serving ground devices.
//!
//! The objective is the smallest mean SNR over the served devices with each
//! link state resolved exactly against the buildings. Fading is averaged out.

mod relay;
mod scene;
mod sweep;

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{mean_received_power_unchecked, ChannelParams, LinkState};
use crate::error::{ensure_finite, Error, Result};
use crate::terrain::{BuildingSet, Point3, Region, DEFAULT_CELL_CAP};

pub use relay::{multiuser_search, relay_search};
pub use scene::{relay_scene, RelayScene, RelaySceneConfig};
pub use sweep::{search_length_sweep, LengthSweepConfig, LengthSweepResult};

const EPS: f64 = 1e-9;

/// Positions a UAV may occupy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AllowedSet {
    pub region: Region,
    pub z_min: f64,
    pub z_max: f64,
}

impl AllowedSet {
    pub fn new(region: Region, z_min: f64, z_max: f64) -> Result<Self> {
        ensure_finite("z_min", z_min)?;
        ensure_finite("z_max", z_max)?;
        if !(z_min >= 0.0 && z_max >= z_min) {
            return Err(Error::Parameter(format!(
                "altitude bounds must satisfy 0 <= z_min <= z_max, got [{z_min}, {z_max}]"
            )));
        }
        Ok(AllowedSet { region, z_min, z_max })
    }

    pub fn contains(&self, p: &Point3) -> bool {
        p.x >= self.region.x_min - EPS
            && p.x <= self.region.x_max + EPS
            && p.y >= self.region.y_min - EPS
            && p.y <= self.region.y_max + EPS
            && p.z >= self.z_min - EPS
            && p.z <= self.z_max + EPS
    }

    pub(crate) fn clamp(&self, p: Point3) -> Point3 {
        Point3::new(
            p.x.clamp(self.region.x_min, self.region.x_max),
            p.y.clamp(self.region.y_min, self.region.y_max),
            p.z.clamp(self.z_min, self.z_max),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchProblem {
    pub served: Vec<Point3>,
    pub allowed: AllowedSet,
    /// Step length of every move, m.
    pub granularity: f64,
    /// Maximum trajectory length, m.
    pub budget: f64,
    pub channel: ChannelParams,
    /// Standard deviation of Gaussian noise added to every sensed SNR, dB.
    pub sensing_noise_db: f64,
}

impl SearchProblem {
    pub fn new(
        served: Vec<Point3>,
        allowed: AllowedSet,
        granularity: f64,
        budget: f64,
        channel: ChannelParams,
    ) -> Result<Self> {
        let p = SearchProblem { served, allowed, granularity, budget, channel, sensing_noise_db: 0.0 };
        p.validate()?;
        Ok(p)
    }

    pub fn with_sensing_noise(mut self, sigma_db: f64) -> Result<Self> {
        self.sensing_noise_db = sigma_db;
        self.validate()?;
        Ok(self)
    }

    pub fn with_budget(mut self, budget: f64) -> Result<Self> {
        self.budget = budget;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.served.is_empty() {
            return Err(Error::Parameter("at least one served device is required".into()));
        }
        for d in &self.served {
            ensure_finite("device position", d.x + d.y + d.z)?;
        }
        ensure_finite("granularity", self.granularity)?;
        ensure_finite("budget", self.budget)?;
        ensure_finite("sensing noise", self.sensing_noise_db)?;
        if self.granularity <= 0.0 {
            return Err(Error::Parameter(format!("granularity must be > 0, got {}", self.granularity)));
        }
        if self.budget < 0.0 {
            return Err(Error::Parameter(format!("budget must be >= 0, got {}", self.budget)));
        }
        if self.sensing_noise_db < 0.0 {
            return Err(Error::Parameter("sensing noise must be >= 0".into()));
        }
        self.channel.validate()
    }
}

/// Smallest mean SNR over the served devices, in dB.
pub fn objective(x: &Point3, p: &SearchProblem, b: &BuildingSet) -> Result<f64> {
    if !p.allowed.contains(x) {
        return Err(Error::Domain(format!("({:.3}, {:.3}, {:.3}) is outside the allowed set", x.x, x.y, x.z)));
    }
    Ok(evaluate(x, p, b).0)
}

/// Objective together with every link state.
pub(crate) fn evaluate(x: &Point3, p: &SearchProblem, b: &BuildingSet) -> (f64, Vec<LinkState>) {
    let mut worst = f64::INFINITY;
    let states = p
        .served
        .iter()
        .map(|d| {
            let q = LinkState::from_blocked(b.segment_blocked(*d, *x));
            worst = worst.min(link_snr_db(x, d, q, &p.channel));
            q
        })
        .collect();
    (worst, states)
}

fn objective_value(x: &Point3, p: &SearchProblem, b: &BuildingSet) -> f64 {
    p.served
        .iter()
        .map(|d| link_snr_db(x, d, LinkState::from_blocked(b.segment_blocked(*d, *x)), &p.channel))
        .fold(f64::INFINITY, f64::min)
}

#[inline]
fn link_snr_db(x: &Point3, d: &Point3, q: LinkState, cp: &ChannelParams) -> f64 {
    mean_received_power_unchecked(x.distance(d).max(1e-9), q, cp) - cp.sigma2
}

/// A plane with an orthonormal in-plane frame. `e1` is horizontal and `e2`
/// points upward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    pub origin: Point3,
    pub e1: [f64; 3],
    pub e2: [f64; 3],
}

impl Plane {
    /// Perpendicular bisector of `p` and `q`, anchored at their midpoint.
    pub fn bisector(p: Point3, q: Point3) -> Result<Plane> {
        let n = [q.x - p.x, q.y - p.y, q.z - p.z];
        let nh = n[0].hypot(n[1]);
        if nh < 1e-9 {
            return Err(Error::Domain("devices share a ground position; the bisector plane is horizontal".into()));
        }
        let e1 = [-n[1] / nh, n[0] / nh, 0.0];
        let mut e2 = cross(n, e1);
        let len = norm(e2);
        e2 = [e2[0] / len, e2[1] / len, e2[2] / len];
        if e2[2] < 0.0 {
            e2 = [-e2[0], -e2[1], -e2[2]];
        }
        Ok(Plane { origin: p.lerp(&q, 0.5), e1, e2 })
    }

    /// Vertical plane through `center` containing the ground direction to `toward`.
    pub(crate) fn vertical_through(center: Point3, toward: Point3) -> Plane {
        let (dx, dy) = (toward.x - center.x, toward.y - center.y);
        let h = dx.hypot(dy);
        let e1 = if h < 1e-9 { [1.0, 0.0, 0.0] } else { [dx / h, dy / h, 0.0] };
        Plane { origin: center, e1, e2: [0.0, 0.0, 1.0] }
    }

    pub fn point(&self, a: f64, c: f64) -> Point3 {
        Point3::new(
            self.origin.x + a * self.e1[0] + c * self.e2[0],
            self.origin.y + a * self.e1[1] + c * self.e2[1],
            self.origin.z + a * self.e1[2] + c * self.e2[2],
        )
    }

    /// In-plane coordinates of the orthogonal projection of `p`.
    pub fn coords(&self, p: &Point3) -> (f64, f64) {
        let v = [p.x - self.origin.x, p.y - self.origin.y, p.z - self.origin.z];
        (dot(v, self.e1), dot(v, self.e2))
    }

    /// `c` range whose altitude lies within `[z_min, z_max]`.
    fn c_range(&self, z_min: f64, z_max: f64) -> (f64, f64) {
        let ez = self.e2[2].max(1e-12);
        ((z_min - self.origin.z) / ez, (z_max - self.origin.z) / ez)
    }

    /// `a` range of the plane row at height coordinate `c` inside `region`.
    fn a_range(&self, c: f64, region: &Region) -> Option<(f64, f64)> {
        let base = self.point(0.0, c);
        let mut lo = f64::NEG_INFINITY;
        let mut hi = f64::INFINITY;
        for (p0, d, min, max) in
            [(base.x, self.e1[0], region.x_min, region.x_max), (base.y, self.e1[1], region.y_min, region.y_max)]
        {
            if d.abs() < 1e-12 {
                if p0 < min - EPS || p0 > max + EPS {
                    return None;
                }
            } else {
                let (t0, t1) = ((min - p0) / d, (max - p0) / d);
                lo = lo.max(t0.min(t1));
                hi = hi.min(t0.max(t1));
            }
        }
        (lo <= hi).then_some((lo, hi))
    }
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

/// Objective sampled on a plane grid. Nodes outside the allowed set are NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatMap {
    pub plane: Plane,
    pub a0: f64,
    pub c0: f64,
    pub step: f64,
    pub na: usize,
    pub nc: usize,
    /// Row-major in `c`: index `j * na + i`.
    pub values: Vec<f64>,
}

impl HeatMap {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.na + i]
    }

    pub fn coords(&self, i: usize, j: usize) -> (f64, f64) {
        (self.a0 + i as f64 * self.step, self.c0 + j as f64 * self.step)
    }

    pub fn position(&self, i: usize, j: usize) -> Point3 {
        let (a, c) = self.coords(i, j);
        self.plane.point(a, c)
    }

    /// Largest finite node, first in row-major order on ties.
    pub fn argmax(&self) -> Option<(usize, usize, f64)> {
        let mut best: Option<(usize, usize, f64)> = None;
        for j in 0..self.nc {
            for i in 0..self.na {
                let v = self.get(i, j);
                if v.is_finite() && best.is_none_or(|b| v > b.2) {
                    best = Some((i, j, v));
                }
            }
        }
        best
    }

    /// Dense grid: header `c_m\a_m` then the `a` node coordinates, one row per `c`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "c_m\\a_m")?;
        for i in 0..self.na {
            write!(w, ",{:.3}", self.coords(i, 0).0)?;
        }
        writeln!(w)?;
        for j in 0..self.nc {
            write!(w, "{:.3}", self.coords(0, j).1)?;
            for i in 0..self.na {
                let v = self.get(i, j);
                if v.is_finite() {
                    write!(w, ",{v:.4}")?;
                } else {
                    write!(w, ",")?;
                }
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn metadata(&self) -> HeatMapMetadata {
        HeatMapMetadata {
            origin: self.plane.origin,
            e1: self.plane.e1,
            e2: self.plane.e2,
            a0: self.a0,
            c0: self.c0,
            step: self.step,
            na: self.na,
            nc: self.nc,
        }
    }
}

/// Sidecar describing how heat-map nodes map to world coordinates:
/// `origin + (a0 + i*step) e1 + (c0 + j*step) e2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatMapMetadata {
    pub origin: Point3,
    pub e1: [f64; 3],
    pub e2: [f64; 3],
    pub a0: f64,
    pub c0: f64,
    pub step: f64,
    pub na: usize,
    pub nc: usize,
}

/// Objective on a grid over `plane` clipped to the allowed set. The grid
/// contains the in-plane point `a = 0` and starts at the lowest allowed `c`.
pub fn snr_heatmap(plane: &Plane, p: &SearchProblem, b: &BuildingSet, grid_step: f64) -> Result<HeatMap> {
    snr_heatmap_capped(plane, p, b, grid_step, DEFAULT_CELL_CAP)
}

pub fn snr_heatmap_capped(
    plane: &Plane,
    p: &SearchProblem,
    b: &BuildingSet,
    grid_step: f64,
    cell_cap: u64,
) -> Result<HeatMap> {
    p.validate()?;
    ensure_finite("grid_step", grid_step)?;
    if grid_step <= 0.0 {
        return Err(Error::Parameter(format!("grid step must be > 0, got {grid_step}")));
    }
    let (c_lo, c_hi) = plane.c_range(p.allowed.z_min, p.allowed.z_max);
    let mut a_lo = f64::INFINITY;
    let mut a_hi = f64::NEG_INFINITY;
    for c in [c_lo, c_hi] {
        if let Some((lo, hi)) = plane.a_range(c, &p.allowed.region) {
            a_lo = a_lo.min(lo);
            a_hi = a_hi.max(hi);
        }
    }
    if a_lo > a_hi {
        return Err(Error::Domain("plane does not cross the allowed set".into()));
    }
    let i_lo = (a_lo / grid_step - 1e-9).ceil();
    let i_hi = (a_hi / grid_step + 1e-9).floor();
    let na = (i_hi - i_lo + 1.0).max(0.0);
    let nc = ((c_hi - c_lo) / grid_step + 1e-9).floor() + 1.0;
    let requested = na * nc;
    if requested > cell_cap as f64 {
        return Err(Error::Resource {
            what: "heat-map nodes",
            requested: requested.min(u64::MAX as f64) as u64,
            cap: cell_cap,
        });
    }
    let (na, nc) = (na as usize, nc as usize);
    let a0 = i_lo * grid_step;
    let values: Vec<f64> = (0..nc)
        .into_par_iter()
        .flat_map_iter(|j| {
            let c = c_lo + j as f64 * grid_step;
            (0..na).map(move |i| {
                let x = plane.point(a0 + i as f64 * grid_step, c);
                if p.allowed.contains(&x) {
                    objective_value(&x, p, b)
                } else {
                    f64::NAN
                }
            })
        })
        .collect();
    Ok(HeatMap { plane: *plane, a0, c0: c_lo, step: grid_step, na, nc, values })
}

/// Best node of a 3D grid over the allowed set, anchored at its lower corner.
pub fn exhaustive_search(p: &SearchProblem, b: &BuildingSet, grid_step: f64) -> Result<(Point3, f64)> {
    exhaustive_search_capped(p, b, grid_step, DEFAULT_CELL_CAP)
}

pub fn exhaustive_search_capped(
    p: &SearchProblem,
    b: &BuildingSet,
    grid_step: f64,
    cell_cap: u64,
) -> Result<(Point3, f64)> {
    p.validate()?;
    ensure_finite("grid_step", grid_step)?;
    if grid_step <= 0.0 {
        return Err(Error::Parameter(format!("grid step must be > 0, got {grid_step}")));
    }
    grid_argmax(&p.allowed, grid_step, cell_cap, |x| objective_value(x, p, b))
}

/// Maximize `f` over the lattice with spacing `step` anchored at the lower
/// corner of `allowed`. Ties go to the lowest node index.
pub(crate) fn grid_argmax(
    allowed: &AllowedSet,
    step: f64,
    cell_cap: u64,
    f: impl Fn(&Point3) -> f64 + Sync,
) -> Result<(Point3, f64)> {
    let r = &allowed.region;
    let count = |len: f64| (len / step + 1e-9).floor() + 1.0;
    let (nx, ny, nz) = (count(r.width()), count(r.height()), count(allowed.z_max - allowed.z_min));
    let requested = nx * ny * nz;
    if requested > cell_cap as f64 {
        return Err(Error::Resource {
            what: "exhaustive grid nodes",
            requested: requested.min(u64::MAX as f64) as u64,
            cap: cell_cap,
        });
    }
    let (nx, ny, nz) = (nx as usize, ny as usize, nz as usize);
    let node = |i: usize, j: usize, k: usize| {
        Point3::new(r.x_min + i as f64 * step, r.y_min + j as f64 * step, allowed.z_min + k as f64 * step)
    };
    let best = (0..nz * ny)
        .into_par_iter()
        .map(|row| {
            let (k, j) = (row / ny, row % ny);
            let mut best = (usize::MAX, f64::NEG_INFINITY);
            for i in 0..nx {
                let v = f(&node(i, j, k));
                if v > best.1 {
                    best = (row * nx + i, v);
                }
            }
            best
        })
        .reduce(|| (usize::MAX, f64::NEG_INFINITY), |a, b| if b.1 > a.1 || (b.1 == a.1 && b.0 < a.0) { b } else { a });
    let (idx, v) = best;
    let (row, i) = (idx / nx, idx % nx);
    Ok((node(i, row % ny, row / ny), v))
}

/// One sensed position.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Probe {
    pub position: Point3,
    pub min_snr_db: f64,
    pub states: Vec<LinkState>,
    /// Trajectory length flown up to and including this probe.
    pub path_length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchTrace {
    pub probes: Vec<Probe>,
    pub path_length: f64,
    pub best_index: usize,
}

impl SearchTrace {
    pub(crate) fn from_probes(probes: Vec<Probe>) -> Self {
        let path_length = probes.last().map_or(0.0, |p| p.path_length);
        let best_index = best_of(&probes);
        SearchTrace { probes, path_length, best_index }
    }

    pub fn best(&self) -> &Probe {
        &self.probes[self.best_index]
    }

    /// Best probe reached within `budget` meters of flight.
    pub fn best_within(&self, budget: f64) -> &Probe {
        let n = self.probes.partition_point(|p| p.path_length <= budget + EPS).max(1);
        &self.probes[best_of(&self.probes[..n])]
    }

    /// Running maximum of the sensed objective.
    pub fn prefix_best(&self) -> Vec<f64> {
        let mut m = f64::NEG_INFINITY;
        self.probes
            .iter()
            .map(|p| {
                m = m.max(p.min_snr_db);
                m
            })
            .collect()
    }

    /// `step,x,y,z,min_snr_db,blocked_mask,path_length_m`; the mask holds one
    /// character per device, `1` when that link is blocked.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "step,x,y,z,min_snr_db,blocked_mask,path_length_m")?;
        for (k, p) in self.probes.iter().enumerate() {
            let mask: String = p.states.iter().map(|q| if q.is_los() { '0' } else { '1' }).collect();
            writeln!(
                w,
                "{},{:.6},{:.6},{:.6},{:.6},{},{:.6}",
                k, p.position.x, p.position.y, p.position.z, p.min_snr_db, mask, p.path_length
            )?;
        }
        Ok(())
    }
}

fn best_of(probes: &[Probe]) -> usize {
    let mut best = 0;
    for (k, p) in probes.iter().enumerate() {
        if p.min_snr_db > probes[best].min_snr_db {
            best = k;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::terrain::Building;

    fn open_problem(served: Vec<Point3>) -> SearchProblem {
        let allowed = AllowedSet::new(Region::new(-200.0, 200.0, -200.0, 200.0).unwrap(), 10.0, 200.0).unwrap();
        SearchProblem::new(served, allowed, 0.2, 1000.0, ChannelParams::default()).unwrap()
    }

    #[test]
    fn single_los_device_at_80m() {
        let p = open_problem(vec![Point3::new(0.0, 0.0, 0.0)]);
        let b = BuildingSet::empty(p.allowed.region);
        let v = objective(&Point3::new(0.0, 0.0, 80.0), &p, &b).unwrap();
        assert!((v - 46.9382).abs() < 1e-3, "{v}");
        assert!(objective(&Point3::new(0.0, 0.0, 5.0), &p, &b).is_err());
    }

    #[test]
    fn symmetric_pair_equals_single_link() {
        let p = open_problem(vec![Point3::new(-50.0, 0.0, 0.0), Point3::new(50.0, 0.0, 0.0)]);
        let b = BuildingSet::empty(p.allowed.region);
        let x = Point3::new(0.0, 30.0, 60.0);
        let single = open_problem(vec![Point3::new(50.0, 0.0, 0.0)]);
        assert!((objective(&x, &p, &b).unwrap() - objective(&x, &single, &b).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn nlos_link_dominates_min() {
        // device 0 hidden behind a tall tower, 100 m from the UAV
        let uav = Point3::new(0.0, 0.0, 100.0);
        let p = open_problem(vec![Point3::new(0.0, 0.0, 0.0), Point3::new(10.0, 0.0, 95.0)]);
        let b =
            BuildingSet::from_buildings(p.allowed.region, vec![Building::new(0.0, 0.0, 2.0, 50.0).unwrap()]).unwrap();
        let v = objective(&uav, &p, &b).unwrap();
        assert!((v - 26.0).abs() < 1e-9, "{v}");
    }

    #[test]
    fn bisector_frame() {
        let pl = Plane::bisector(Point3::new(-50.0, 0.0, 0.0), Point3::new(50.0, 0.0, 0.0)).unwrap();
        assert_eq!(pl.e2, [0.0, 0.0, 1.0]);
        let x = pl.point(12.0, 34.0);
        assert!(x.x.abs() < 1e-12);
        let (a, c) = pl.coords(&x);
        assert!((a - 12.0).abs() < 1e-12 && (c - 34.0).abs() < 1e-12);
        assert!(Plane::bisector(Point3::new(0.0, 0.0, 0.0), Point3::new(0.0, 0.0, 9.0)).is_err());
        let tilted = Plane::bisector(Point3::new(0.0, 0.0, 0.0), Point3::new(30.0, 40.0, 20.0)).unwrap();
        assert!(dot(tilted.e1, tilted.e2).abs() < 1e-12);
        assert!(tilted.e2[2] > 0.0);
    }

    #[test]
    fn empty_scene_heatmap_peaks_low_above_midpoint() {
        let p = open_problem(vec![Point3::new(-60.0, 10.0, 0.0), Point3::new(60.0, 10.0, 0.0)]);
        let b = BuildingSet::empty(p.allowed.region);
        let pl = Plane::bisector(p.served[0], p.served[1]).unwrap();
        let hm = snr_heatmap(&pl, &p, &b, 2.0).unwrap();
        let (i, j, _) = hm.argmax().unwrap();
        let x = hm.position(i, j);
        assert!(x.x.abs() < 1e-9 && (x.y - 10.0).abs() < 1e-9 && (x.z - 10.0).abs() < 1e-9, "{x:?}");
        // mirror symmetry about the vertical through the midpoint
        let (ia, _) = (0..hm.na).fold((0, 0), |acc, k| if hm.coords(k, 0).0.abs() < 1e-9 { (k, 0) } else { acc });
        for j in 0..hm.nc {
            for d in 1..=ia.min(hm.na - 1 - ia) {
                let (u, v) = (hm.get(ia - d, j), hm.get(ia + d, j));
                assert!((u - v).abs() < 1e-9 || (u.is_nan() && v.is_nan()));
            }
        }
    }

    #[test]
    fn heatmap_cap() {
        let p = open_problem(vec![Point3::new(-60.0, 0.0, 0.0), Point3::new(60.0, 0.0, 0.0)]);
        let b = BuildingSet::empty(p.allowed.region);
        let pl = Plane::bisector(p.served[0], p.served[1]).unwrap();
        assert!(matches!(snr_heatmap_capped(&pl, &p, &b, 1.0, 100), Err(Error::Resource { .. })));
    }

    #[test]
    fn exhaustive_single_device_sits_overhead_at_floor() {
        let mut p = open_problem(vec![Point3::new(20.0, -40.0, 0.0)]);
        p.allowed.region = Region::new(0.0, 50.0, -50.0, 0.0).unwrap();
        p.allowed.z_max = 60.0;
        let b = BuildingSet::empty(p.allowed.region);
        let (x, v) = exhaustive_search(&p, &b, 5.0).unwrap();
        assert_eq!((x.x, x.y, x.z), (20.0, -40.0, 10.0));
        assert!((v - objective(&x, &p, &b).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn best_within_respects_path() {
        let probe =
            |v: f64, l: f64| Probe { position: Point3::default(), min_snr_db: v, states: vec![], path_length: l };
        let t = SearchTrace::from_probes(vec![probe(1.0, 0.0), probe(3.0, 1.0), probe(2.0, 2.0), probe(5.0, 3.0)]);
        assert_eq!(t.best_index, 3);
        assert_eq!(t.best_within(0.0).min_snr_db, 1.0);
        assert_eq!(t.best_within(2.5).min_snr_db, 3.0);
        assert_eq!(t.prefix_best(), vec![1.0, 3.0, 3.0, 5.0]);
    }
}
