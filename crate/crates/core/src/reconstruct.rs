//! Terrain construction from received-power measurements.
//!
//! UAVs hover over a corridor and ground receivers log the received power of
//! every link in range. A link is classified LoS or NLoS by comparing its
//! power with the midpoint of the two mean powers at that distance. LoS links
//! carve upper bounds on the heights of every grid cell they pass over; NLoS
//! links raise the lower bound of the single cell that could have blocked them.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{mean_received_power_unchecked, ChannelParams, Fading, LinkState};
use crate::error::{ensure_finite, Error, Result};
use crate::rng::SeedStream;
use crate::terrain::{grid_dims, BuildingSet, Point3, Region, DEFAULT_CELL_CAP};

/// Open polyline on the ground plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polyline {
    pub points: Vec<(f64, f64)>,
}

impl Polyline {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        let p = Polyline { points };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.len() < 2 {
            return Err(Error::Parameter("a polyline needs at least two vertices".into()));
        }
        for &(x, y) in &self.points {
            ensure_finite("polyline vertex", x + y)?;
        }
        if !(self.length() > 0.0) {
            return Err(Error::Parameter("polyline has zero length".into()));
        }
        Ok(())
    }

    pub fn length(&self) -> f64 {
        self.points.windows(2).map(|w| seg_len(w[0], w[1])).sum()
    }

    /// Point at arc length `s`, clamped to the ends.
    pub fn at(&self, s: f64) -> (f64, f64) {
        let mut rest = s.max(0.0);
        for w in self.points.windows(2) {
            let l = seg_len(w[0], w[1]);
            if rest <= l && l > 0.0 {
                let t = rest / l;
                return (w[0].0 + t * (w[1].0 - w[0].0), w[0].1 + t * (w[1].1 - w[0].1));
            }
            rest -= l;
        }
        *self.points.last().expect("validated")
    }

    /// Like [`Polyline::at`], but continues straight past either end.
    pub fn at_extended(&self, s: f64) -> (f64, f64) {
        let len = self.length();
        let n = self.points.len();
        let (origin, a, b, over) = if s < 0.0 {
            (self.points[0], self.points[0], self.points[1], s)
        } else if s > len {
            (self.points[n - 1], self.points[n - 2], self.points[n - 1], s - len)
        } else {
            return self.at(s);
        };
        let l = seg_len(a, b).max(1e-12);
        (origin.0 + over * (b.0 - a.0) / l, origin.1 + over * (b.1 - a.1) / l)
    }

    /// Horizontal distance from `(x, y)` to the polyline.
    pub fn distance(&self, x: f64, y: f64) -> f64 {
        self.points.windows(2).map(|w| point_segment_distance((x, y), w[0], w[1])).fold(f64::INFINITY, f64::min)
    }
}

fn seg_len(a: (f64, f64), b: (f64, f64)) -> f64 {
    (b.0 - a.0).hypot(b.1 - a.1)
}

fn point_segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let l2 = dx * dx + dy * dy;
    let t = if l2 > 0.0 { (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / l2).clamp(0.0, 1.0) } else { 0.0 };
    (p.0 - a.0 - t * dx).hypot(p.1 - a.1 - t * dy)
}

/// Band of half-width `width / 2` around one or more polylines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corridor {
    pub routes: Vec<Polyline>,
    pub width: f64,
}

impl Corridor {
    pub fn new(routes: Vec<Polyline>, width: f64) -> Result<Self> {
        let c = Corridor { routes, width };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.routes.is_empty() {
            return Err(Error::config("reconstruct.corridor", "at least one route is required"));
        }
        for r in &self.routes {
            r.validate().map_err(|e| Error::config("reconstruct.corridor", e.to_string()))?;
        }
        if !(self.width >= 0.0 && self.width.is_finite()) {
            return Err(Error::config("reconstruct.corridor_width", "must be finite and >= 0"));
        }
        Ok(())
    }

    pub fn distance(&self, x: f64, y: f64) -> f64 {
        self.routes.iter().map(|r| r.distance(x, y)).fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        self.distance(x, y) <= self.width / 2.0 + 1e-9
    }
}

/// UAV sampling positions covering the corridor at each altitude.
///
/// Points are laid along every route at `spacing`, on parallel offsets
/// `k * spacing` up to the half-width, then thinned greedily so no two points
/// at the same altitude are closer than `spacing`.
pub fn plan_scan(corridor: &Corridor, altitudes: &[f64], spacing: f64) -> Result<Vec<Point3>> {
    corridor.validate()?;
    if !(spacing > 0.0 && spacing.is_finite()) {
        return Err(Error::config("reconstruct.spacing", "must be > 0"));
    }
    if altitudes.is_empty() {
        return Err(Error::config("reconstruct.altitudes", "at least one altitude is required"));
    }
    for &z in altitudes {
        if !(z >= 0.0 && z.is_finite()) {
            return Err(Error::config("reconstruct.altitudes", "altitudes must be finite and >= 0"));
        }
    }
    let half = corridor.width / 2.0;
    let kmax = (half / spacing + 1e-9).floor() as i64;
    let mut ground: Vec<(f64, f64)> = Vec::new();
    for route in &corridor.routes {
        // run past both ends by the half-width so the end caps are covered
        let len = route.length();
        let start = -kmax as f64 * spacing;
        let n = ((len + 2.0 * kmax as f64 * spacing) / spacing + 1e-9).floor() as usize;
        for i in 0..=n {
            let s = start + i as f64 * spacing;
            let (x, y) = route.at_extended(s);
            let (nx, ny) = normal_at(route, s);
            for k in -kmax..=kmax {
                let o = k as f64 * spacing;
                ground.push((x + o * nx, y + o * ny));
            }
        }
    }
    let min_d2 = (spacing * (1.0 - 1e-9)).powi(2);
    let mut kept: Vec<(f64, f64)> = Vec::with_capacity(ground.len());
    for p in ground {
        if kept.iter().all(|q| (p.0 - q.0).powi(2) + (p.1 - q.1).powi(2) >= min_d2) {
            kept.push(p);
        }
    }
    Ok(altitudes.iter().flat_map(|&z| kept.iter().map(move |&(x, y)| Point3::new(x, y, z))).collect())
}

/// Unit left normal of the segment containing arc length `s`.
fn normal_at(route: &Polyline, s: f64) -> (f64, f64) {
    let mut rest = s;
    let mut last = (0.0, 1.0);
    for w in route.points.windows(2) {
        let l = seg_len(w[0], w[1]);
        if l > 0.0 {
            last = (-(w[1].1 - w[0].1) / l, (w[1].0 - w[0].0) / l);
            if rest <= l {
                return last;
            }
        }
        rest -= l;
    }
    last
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkMeasurement {
    pub uav: Point3,
    pub receiver: Point3,
    /// Received power, dBm.
    pub rx_power: f64,
    /// Exact link state; for diagnostics only.
    pub truth_state: LinkState,
}

/// One faded power sample per (UAV, receiver) pair within `max_range` metres.
///
/// Every UAV position draws from its own substream, so the list does not
/// depend on the worker count.
pub fn measure_links(
    uav_positions: &[Point3],
    receivers: &[Point3],
    b: &BuildingSet,
    cp: &ChannelParams,
    max_range: f64,
    stream: &SeedStream,
) -> Result<Vec<LinkMeasurement>> {
    cp.validate()?;
    if receivers.is_empty() {
        return Err(Error::Parameter("at least one receiver is required".into()));
    }
    if !(max_range > 0.0) {
        return Err(Error::config("reconstruct.max_range", "must be > 0"));
    }
    let fading = Fading::new(cp);
    let per_uav: Vec<Vec<LinkMeasurement>> = uav_positions
        .par_iter()
        .enumerate()
        .map(|(i, uav)| {
            let mut rng = stream.rng(i as u64);
            let mut out = Vec::new();
            for r in receivers {
                let d = uav.distance(r);
                if d > max_range || d <= 0.0 {
                    continue;
                }
                let q = LinkState::from_blocked(b.segment_blocked(*r, *uav));
                let g = fading.sample(q, &mut rng);
                let rx_power = mean_received_power_unchecked(d, q, cp) + 10.0 * g.log10();
                out.push(LinkMeasurement { uav: *uav, receiver: *r, rx_power, truth_state: q });
            }
            out
        })
        .collect();
    Ok(per_uav.into_iter().flatten().collect())
}

/// LoS iff the power reaches the midpoint of the two mean powers.
pub fn classify(m: &LinkMeasurement, cp: &ChannelParams) -> LinkState {
    let d = m.uav.distance(&m.receiver).max(1e-9);
    let mid = 0.5
        * (mean_received_power_unchecked(d, LinkState::Los, cp)
            + mean_received_power_unchecked(d, LinkState::Nlos, cp));
    LinkState::from_blocked(m.rx_power < mid)
}

pub fn write_measurements_csv<W: Write>(mut w: W, ms: &[LinkMeasurement], cp: &ChannelParams) -> Result<()> {
    writeln!(w, "uav_x,uav_y,uav_z,rx_x,rx_y,rx_z,rx_power_dbm,classified,truth")?;
    for m in ms {
        let label = |q: LinkState| if q.is_los() { "los" } else { "nlos" };
        writeln!(
            w,
            "{:.3},{:.3},{:.3},{:.3},{:.3},{:.3},{:.4},{},{}",
            m.uav.x,
            m.uav.y,
            m.uav.z,
            m.receiver.x,
            m.receiver.y,
            m.receiver.z,
            m.rx_power,
            label(classify(m, cp)),
            label(m.truth_state)
        )?;
    }
    Ok(())
}

/// Per-cell building height bounds. Cell `(i, j)` covers
/// `[x_min + i c, x_min + (i + 1) c) x [y_min + j c, y_min + (j + 1) c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightField {
    region: Region,
    cell: f64,
    nx: usize,
    ny: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl HeightField {
    /// All cells unknown: lower 0, upper +inf.
    pub fn new(region: Region, cell: f64) -> Result<Self> {
        let (nx, ny) = grid_dims(&region, cell, DEFAULT_CELL_CAP, "height field")?;
        Ok(HeightField { region, cell, nx, ny, lower: vec![0.0; nx * ny], upper: vec![f64::INFINITY; nx * ny] })
    }

    /// Exact bounds from the true terrain sampled at each cell centre.
    pub fn from_truth(b: &BuildingSet, region: Region, cell: f64) -> Result<Self> {
        let mut hf = HeightField::new(region, cell)?;
        for j in 0..hf.ny {
            for i in 0..hf.nx {
                let (x, y) = hf.center(i, j);
                let h = b.height_at(x, y);
                let k = j * hf.nx + i;
                hf.lower[k] = h;
                hf.upper[k] = h;
            }
        }
        Ok(hf)
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    pub fn cell_size(&self) -> f64 {
        self.cell
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn center(&self, i: usize, j: usize) -> (f64, f64) {
        (self.region.x_min + (i as f64 + 0.5) * self.cell, self.region.y_min + (j as f64 + 0.5) * self.cell)
    }

    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        if !self.region.contains(x, y) {
            return None;
        }
        let i = (((x - self.region.x_min) / self.cell) as usize).min(self.nx - 1);
        let j = (((y - self.region.y_min) / self.cell) as usize).min(self.ny - 1);
        Some((i, j))
    }

    pub fn bounds(&self, i: usize, j: usize) -> (f64, f64) {
        let k = j * self.nx + i;
        (self.lower[k], self.upper[k])
    }

    /// Midpoint of the bounds, or `None` while the upper bound is unknown.
    pub fn estimate(&self, i: usize, j: usize) -> Option<f64> {
        let (lo, hi) = self.bounds(i, j);
        hi.is_finite().then_some(0.5 * (lo + hi))
    }

    pub fn is_touched(&self, i: usize, j: usize) -> bool {
        let (lo, hi) = self.bounds(i, j);
        hi.is_finite() || lo > 0.0
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "i,j,lower_m,upper_m")?;
        for j in 0..self.ny {
            for i in 0..self.nx {
                let (lo, hi) = self.bounds(i, j);
                if hi.is_finite() {
                    writeln!(w, "{i},{j},{lo:.3},{hi:.3}")?;
                } else {
                    writeln!(w, "{i},{j},{lo:.3},inf")?;
                }
            }
        }
        Ok(())
    }

    /// Upper bound of every cell under the projection of `p -> q`, with the
    /// lowest segment altitude over that cell.
    pub fn traverse_bounds(&self, p: Point3, q: Point3, mut f: impl FnMut(f64, f64)) {
        self.traverse(p, q, |k, z| f(self.upper[k], z));
    }

    /// Cells under the ground projection of `p -> q`, each with the lowest
    /// segment altitude over the part of the segment inside it.
    pub(crate) fn traverse(&self, p: Point3, q: Point3, mut f: impl FnMut(usize, f64)) {
        let r = &self.region;
        let (dx, dy) = (q.x - p.x, q.y - p.y);
        // clip the projection to the grid
        let (mut t0, mut t1) = (0.0f64, 1.0f64);
        for (o, d, lo, hi) in [(p.x, dx, r.x_min, r.x_max), (p.y, dy, r.y_min, r.y_max)] {
            if d.abs() < 1e-15 {
                if o < lo || o > hi {
                    return;
                }
            } else {
                let (a, b) = ((lo - o) / d, (hi - o) / d);
                t0 = t0.max(a.min(b));
                t1 = t1.min(a.max(b));
            }
        }
        if t0 > t1 {
            return;
        }
        let z = |t: f64| p.z + t * (q.z - p.z);
        let cell_index = |t: f64| {
            let x = p.x + t * dx;
            let y = p.y + t * dy;
            let i = (((x - r.x_min) / self.cell).floor().max(0.0) as usize).min(self.nx - 1);
            let j = (((y - r.y_min) / self.cell).floor().max(0.0) as usize).min(self.ny - 1);
            (i, j)
        };
        let (mut i, mut j) = cell_index(t0 + (t1 - t0) * 1e-12);
        let step_i: i64 = if dx > 0.0 { 1 } else { -1 };
        let step_j: i64 = if dy > 0.0 { 1 } else { -1 };
        let next_boundary = |i: usize, j: usize| -> (f64, f64) {
            let tx = if dx.abs() < 1e-15 {
                f64::INFINITY
            } else {
                let edge = r.x_min + (i as f64 + if dx > 0.0 { 1.0 } else { 0.0 }) * self.cell;
                (edge - p.x) / dx
            };
            let ty = if dy.abs() < 1e-15 {
                f64::INFINITY
            } else {
                let edge = r.y_min + (j as f64 + if dy > 0.0 { 1.0 } else { 0.0 }) * self.cell;
                (edge - p.y) / dy
            };
            (tx, ty)
        };
        let mut t = t0;
        loop {
            let (tx, ty) = next_boundary(i, j);
            let t_exit = tx.min(ty).min(t1);
            f(j * self.nx + i, z(t).min(z(t_exit)));
            if t_exit >= t1 {
                break;
            }
            t = t_exit;
            if tx <= ty {
                let ni = i as i64 + step_i;
                if ni < 0 || ni >= self.nx as i64 {
                    break;
                }
                i = ni as usize;
            }
            if ty <= tx {
                let nj = j as i64 + step_j;
                if nj < 0 || nj >= self.ny as i64 {
                    break;
                }
                j = nj as usize;
            }
        }
    }
}

/// A link with a decided state; endpoints in either order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifiedLink {
    pub a: Point3,
    pub b: Point3,
    pub state: LinkState,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CarveStats {
    pub los: usize,
    pub nlos_applied: usize,
    /// NLoS links with no candidate cell left, or whose vote would cross an upper bound.
    pub contradictions: usize,
    /// NLoS links still ambiguous after the second pass.
    pub unresolved: usize,
}

/// Classify every measurement and carve it into a copy of `grid`.
pub fn carve(ms: &[LinkMeasurement], grid: &HeightField, cp: &ChannelParams) -> (HeightField, CarveStats) {
    let links: Vec<ClassifiedLink> =
        ms.iter().map(|m| ClassifiedLink { a: m.receiver, b: m.uav, state: classify(m, cp) }).collect();
    carve_links(&links, grid)
}

/// LoS links first, then two passes over the NLoS links.
///
/// An NLoS link raises the lower bound of a cell only when exactly one cell
/// under it could still reach above the segment. Links with several such
/// cells wait for the second pass and are dropped after it.
pub fn carve_links(links: &[ClassifiedLink], grid: &HeightField) -> (HeightField, CarveStats) {
    let mut hf = grid.clone();
    let mut stats = CarveStats::default();
    for l in links.iter().filter(|l| l.state.is_los()) {
        stats.los += 1;
        let (lower, upper) = (&mut hf.lower, &mut hf.upper);
        grid.traverse(l.a, l.b, |k, z| {
            if z < upper[k] {
                upper[k] = z;
            }
            if lower[k] > upper[k] {
                // LoS wins over an earlier NLoS vote
                lower[k] = upper[k];
                stats.contradictions += 1;
            }
        });
    }
    let mut pending: Vec<&ClassifiedLink> = links.iter().filter(|l| !l.state.is_los()).collect();
    for pass in 0..2 {
        let mut deferred = Vec::new();
        for l in pending {
            let mut candidate: Option<(usize, f64)> = None;
            let mut count = 0;
            hf.traverse(l.a, l.b, |k, z| {
                if hf.upper[k] > z {
                    count += 1;
                    candidate = Some((k, z));
                }
            });
            match (count, candidate) {
                (0, _) => stats.contradictions += 1,
                (1, Some((k, z))) => {
                    if z > hf.lower[k] {
                        hf.lower[k] = z;
                    }
                    stats.nlos_applied += 1;
                }
                _ => deferred.push(l),
            }
        }
        if pass == 1 {
            stats.unresolved = deferred.len();
        }
        pending = deferred;
    }
    (hf, stats)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionError {
    /// Mean absolute height error over building cells inside the corridor.
    pub mae_near: f64,
    pub mae_far: f64,
    pub undetected: usize,
    pub undetected_near: usize,
    pub undetected_far: usize,
    pub buildings_near: usize,
    pub buildings_far: usize,
}

impl ReconstructionError {
    pub fn detected_fraction_near(&self) -> f64 {
        if self.buildings_near == 0 {
            1.0
        } else {
            1.0 - self.undetected_near as f64 / self.buildings_near as f64
        }
    }
}

/// Height error over cells whose centre lies in a building footprint.
///
/// A cell with a finite upper bound is scored at the midpoint of its bounds;
/// an unknown cell is scored at its lower bound, so a building nobody saw
/// counts with its full height. A building is near when its centre lies in
/// the corridor and undetected when none of its cells was touched.
pub fn reconstruction_error(est: &HeightField, b: &BuildingSet, corridor: &Corridor) -> ReconstructionError {
    let (mut sum_near, mut n_near, mut sum_far, mut n_far) = (0.0, 0usize, 0.0, 0usize);
    for j in 0..est.ny {
        for i in 0..est.nx {
            let (x, y) = est.center(i, j);
            let truth = b.height_at(x, y);
            if truth <= 0.0 {
                continue;
            }
            let (lo, _) = est.bounds(i, j);
            let err = (est.estimate(i, j).unwrap_or(lo) - truth).abs();
            if corridor.contains(x, y) {
                sum_near += err;
                n_near += 1;
            } else {
                sum_far += err;
                n_far += 1;
            }
        }
    }
    let mut out = ReconstructionError {
        mae_near: if n_near > 0 { sum_near / n_near as f64 } else { 0.0 },
        mae_far: if n_far > 0 { sum_far / n_far as f64 } else { 0.0 },
        undetected: 0,
        undetected_near: 0,
        undetected_far: 0,
        buildings_near: 0,
        buildings_far: 0,
    };
    for bl in b.buildings() {
        let cells = footprint_cells(est, bl.x, bl.y, bl.radius);
        if cells.is_empty() {
            continue;
        }
        let near = corridor.contains(bl.x, bl.y);
        let seen = cells.iter().any(|&(i, j)| est.is_touched(i, j));
        if near {
            out.buildings_near += 1;
        } else {
            out.buildings_far += 1;
        }
        if !seen {
            out.undetected += 1;
            if near {
                out.undetected_near += 1;
            } else {
                out.undetected_far += 1;
            }
        }
    }
    out
}

/// Grid cells whose centre lies inside the disc.
fn footprint_cells(hf: &HeightField, cx: f64, cy: f64, r: f64) -> Vec<(usize, usize)> {
    let reg = &hf.region;
    let lo_i = (((cx - r - reg.x_min) / hf.cell).floor().max(0.0)) as usize;
    let lo_j = (((cy - r - reg.y_min) / hf.cell).floor().max(0.0)) as usize;
    let hi_i = ((((cx + r - reg.x_min) / hf.cell).ceil()) as usize).min(hf.nx);
    let hi_j = ((((cy + r - reg.y_min) / hf.cell).ceil()) as usize).min(hf.ny);
    let mut out = Vec::new();
    for j in lo_j..hi_j {
        for i in lo_i..hi_i {
            let (x, y) = hf.center(i, j);
            if (x - cx).powi(2) + (y - cy).powi(2) < r * r {
                out.push((i, j));
            }
        }
    }
    out
}

/// Corridor scan settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanConfig {
    /// Height-field cell size, m.
    pub cell: f64,
    pub corridor_width: f64,
    pub uav_altitudes: Vec<f64>,
    pub uav_spacing: f64,
    pub receiver_spacing: f64,
    pub receiver_height: f64,
    /// Links longer than this are not logged, m.
    pub max_range: f64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            cell: 4.0,
            corridor_width: 100.0,
            uav_altitudes: vec![30.0, 60.0, 90.0],
            uav_spacing: 20.0,
            receiver_spacing: 10.0,
            receiver_height: 0.0,
            max_range: 250.0,
        }
    }
}

impl ScanConfig {
    pub fn validate(&self) -> Result<()> {
        let key = |k: &str| format!("reconstruct.{k}");
        if !(self.cell > 0.0 && self.cell.is_finite()) {
            return Err(Error::config(key("cell"), "must be > 0"));
        }
        if !(self.corridor_width >= 0.0 && self.corridor_width.is_finite()) {
            return Err(Error::config(key("corridor_width"), "must be >= 0"));
        }
        if !(self.uav_spacing > 0.0 && self.receiver_spacing > 0.0) {
            return Err(Error::config(key("uav_spacing"), "spacings must be > 0"));
        }
        if !(self.receiver_height >= 0.0) {
            return Err(Error::config(key("receiver_height"), "must be >= 0"));
        }
        if !(self.max_range > 0.0) {
            return Err(Error::config(key("max_range"), "must be > 0"));
        }
        if self.uav_altitudes.is_empty() || self.uav_altitudes.iter().any(|z| !(*z > 0.0 && z.is_finite())) {
            return Err(Error::config(key("uav_altitudes"), "need at least one positive altitude"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ScanOutcome {
    pub field: HeightField,
    pub stats: CarveStats,
    pub measurements: Vec<LinkMeasurement>,
    pub uav_positions: Vec<Point3>,
    pub receivers: Vec<Point3>,
}

/// Scan the corridor, log every link in range and carve a fresh height field
/// over `region`. Receivers sit on a ground lattice in the corridor, skipping
/// building footprints.
pub fn scan_corridor(
    b: &BuildingSet,
    region: Region,
    routes: &[Polyline],
    cfg: &ScanConfig,
    cp: &ChannelParams,
    stream: &SeedStream,
) -> Result<ScanOutcome> {
    cfg.validate()?;
    let corridor = Corridor::new(routes.to_vec(), cfg.corridor_width)?;
    let uav_positions = plan_scan(&corridor, &cfg.uav_altitudes, cfg.uav_spacing)?;
    let receivers: Vec<Point3> = plan_scan(&corridor, &[cfg.receiver_height], cfg.receiver_spacing)?
        .into_iter()
        .filter(|p| region.contains(p.x, p.y) && b.height_at(p.x, p.y) <= 0.0)
        .collect();
    let measurements = measure_links(&uav_positions, &receivers, b, cp, cfg.max_range, stream)?;
    let (field, stats) = carve(&measurements, &HeightField::new(region, cfg.cell)?, cp);
    Ok(ScanOutcome { field, stats, measurements, uav_positions, receivers })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::terrain::Building;

    fn flat() -> HeightField {
        HeightField::new(Region::square(100.0).unwrap(), 4.0).unwrap()
    }

    #[test]
    fn classify_spot_values() {
        let cp = ChannelParams::default();
        let rx = Point3::new(0.0, 0.0, 0.0);
        let uav = Point3::new(0.0, 0.0, 100.0);
        let mut m = LinkMeasurement { uav, receiver: rx, rx_power: -45.0, truth_state: LinkState::Los };
        assert_eq!(classify(&m, &cp), LinkState::Los);
        m.rx_power = -64.0;
        assert_eq!(classify(&m, &cp), LinkState::Nlos);
        m.rx_power = -54.5;
        assert_eq!(classify(&m, &cp), LinkState::Los);
    }

    #[test]
    fn traverse_visits_contiguous_cells_with_lowest_altitude() {
        let hf = flat();
        let mut seen = Vec::new();
        hf.traverse(Point3::new(2.0, 2.0, 0.0), Point3::new(18.0, 2.0, 16.0), |k, z| seen.push((k, z)));
        assert_eq!(seen.iter().map(|s| s.0).collect::<Vec<_>>(), vec![0, 1, 2, 3, 4]);
        let want = [0.0, 2.0, 6.0, 10.0, 14.0];
        for (s, w) in seen.iter().zip(want) {
            assert!((s.1 - w).abs() < 1e-9, "{s:?} vs {w}");
        }
    }

    #[test]
    fn traverse_matches_dense_sampling() {
        use rand::Rng;
        let hf = HeightField::new(Region::new(-40.0, 60.0, -20.0, 80.0).unwrap(), 4.0).unwrap();
        let mut rng = crate::rng::rng_from_seed(5);
        for _ in 0..500 {
            let mut pt = || {
                Point3::new(rng.random_range(-60.0..80.0), rng.random_range(-40.0..100.0), rng.random_range(0.0..50.0))
            };
            let (p, q) = (pt(), pt());
            let mut got = std::collections::BTreeMap::new();
            hf.traverse(p, q, |k, z| {
                assert!(got.insert(k, z).is_none(), "cell visited twice");
            });
            let mut want = std::collections::BTreeMap::<usize, f64>::new();
            let n = 20000;
            for s in 0..=n {
                let t = s as f64 / n as f64;
                let x = p.lerp(&q, t);
                if let Some((i, j)) = hf.cell_of(x.x, x.y) {
                    let e = want.entry(j * hf.nx + i).or_insert(f64::INFINITY);
                    *e = e.min(x.z);
                }
            }
            for (k, z) in &want {
                let g = got.get(k).unwrap_or_else(|| panic!("missed cell {k} for {p:?} -> {q:?}"));
                assert!(*g <= z + 1e-9 && *g >= z - 0.02 * (q.z - p.z).abs() - 1e-9);
            }
        }
    }

    #[test]
    fn empty_measurements_leave_grid_unchanged() {
        let hf = flat();
        let (out, stats) = carve_links(&[], &hf);
        assert_eq!(out, hf);
        assert_eq!(stats, CarveStats::default());
    }

    #[test]
    fn los_links_only_lower_touched_cells() {
        let hf = flat();
        let l =
            ClassifiedLink { a: Point3::new(2.0, 50.0, 10.0), b: Point3::new(98.0, 50.0, 10.0), state: LinkState::Los };
        let (out, _) = carve_links(&[l], &hf);
        for j in 0..25 {
            for i in 0..25 {
                let (_, hi) = out.bounds(i, j);
                if j == 12 {
                    assert_eq!(hi, 10.0);
                } else {
                    assert!(hi.is_infinite());
                }
            }
        }
    }

    #[test]
    fn single_ambiguous_cell_takes_the_nlos_vote() {
        let hf = flat();
        let row = |z: f64, s| ClassifiedLink { a: Point3::new(2.0, 50.0, z), b: Point3::new(98.0, 50.0, z), state: s };
        // carve the whole row down to 5 m, except that a gap must stay open
        let mut links = vec![row(5.0, LinkState::Los)];
        let (base, _) = carve_links(&links, &hf);
        assert_eq!(base.bounds(3, 12).1, 5.0);
        // an NLoS link at 3 m now has every cell ambiguous: deferred, then dropped
        links.push(row(3.0, LinkState::Nlos));
        let (_, stats) = carve_links(&links, &hf);
        assert_eq!(stats.unresolved, 1);
        // a short NLoS link over one cell at 4 m hits exactly that cell
        let short =
            ClassifiedLink { a: Point3::new(8.5, 50.0, 4.0), b: Point3::new(11.5, 50.0, 4.0), state: LinkState::Nlos };
        let (out, stats) = carve_links(&[row(5.0, LinkState::Los), short], &hf);
        assert_eq!(stats.nlos_applied, 1);
        assert_eq!(out.bounds(2, 12), (4.0, 5.0));
    }

    #[test]
    fn nlos_below_carved_ceiling_is_a_contradiction() {
        let hf = flat();
        let a =
            ClassifiedLink { a: Point3::new(2.0, 50.0, 5.0), b: Point3::new(98.0, 50.0, 5.0), state: LinkState::Los };
        let n =
            ClassifiedLink { a: Point3::new(2.0, 50.0, 7.0), b: Point3::new(98.0, 50.0, 7.0), state: LinkState::Nlos };
        let (_, stats) = carve_links(&[a, n], &hf);
        assert_eq!(stats.contradictions, 1);
    }

    #[test]
    fn perfect_bounds_have_zero_error() {
        let region = Region::square(100.0).unwrap();
        let b = BuildingSet::from_buildings(region, vec![Building::new(50.0, 50.0, 8.0, 20.0).unwrap()]).unwrap();
        let hf = HeightField::from_truth(&b, region, 4.0).unwrap();
        let c = Corridor::new(vec![Polyline::new(vec![(0.0, 50.0), (100.0, 50.0)]).unwrap()], 20.0).unwrap();
        let e = reconstruction_error(&hf, &b, &c);
        assert_eq!((e.mae_near, e.mae_far, e.undetected), (0.0, 0.0, 0));
        let none = reconstruction_error(&HeightField::new(region, 4.0).unwrap(), &b, &c);
        assert_eq!(none.undetected, 1);
        assert!((none.mae_near - 20.0).abs() < 1e-12);
    }

    #[test]
    fn plan_scan_shapes() {
        let route = Polyline::new(vec![(0.0, 0.0), (100.0, 0.0)]).unwrap();
        let line = Corridor::new(vec![route.clone()], 0.0).unwrap();
        let pts = plan_scan(&line, &[30.0], 10.0).unwrap();
        assert_eq!(pts.len(), 11);
        assert!(pts.iter().all(|p| p.y.abs() < 1e-12 && p.z == 30.0));
        let two = plan_scan(&line, &[30.0, 60.0], 10.0).unwrap();
        assert_eq!(two.len(), 22);
        let band = Corridor::new(vec![route], 40.0).unwrap();
        let pts = plan_scan(&band, &[30.0], 10.0).unwrap();
        assert_eq!(pts.len(), 75);
        for (a, p) in pts.iter().enumerate() {
            for q in &pts[a + 1..] {
                assert!(p.distance(q) >= 10.0 - 1e-6);
            }
        }
        assert!(plan_scan(&band, &[30.0], 0.0).is_err());
    }

    #[test]
    fn scan_covers_end_caps() {
        let route = Polyline::new(vec![(0.0, 0.0), (100.0, 0.0)]).unwrap();
        assert_eq!(route.at_extended(-10.0), (-10.0, 0.0));
        assert_eq!(route.at_extended(110.0), (110.0, 0.0));
        let band = Corridor::new(vec![route], 40.0).unwrap();
        let pts = plan_scan(&band, &[30.0], 10.0).unwrap();
        assert!(pts.iter().any(|p| p.x == -20.0) && pts.iter().any(|p| p.x == 120.0));
    }

    #[test]
    fn polyline_clamps_at_end() {
        let r = Polyline::new(vec![(0.0, 0.0), (30.0, 0.0), (30.0, 40.0)]).unwrap();
        assert_eq!(r.length(), 70.0);
        assert_eq!(r.at(50.0), (30.0, 20.0));
        assert_eq!(r.at(500.0), (30.0, 40.0));
        assert!((r.distance(0.0, 5.0) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn empty_terrain_measurements_are_all_los() {
        let cp = ChannelParams::default();
        let region = Region::square(200.0).unwrap();
        let b = BuildingSet::empty(region);
        let uavs = vec![Point3::new(50.0, 50.0, 40.0), Point3::new(150.0, 50.0, 40.0)];
        let rx = vec![Point3::new(100.0, 100.0, 0.0)];
        let s = SeedStream::new(1, "m");
        let ms = measure_links(&uavs, &rx, &b, &cp, 500.0, &s).unwrap();
        assert_eq!(ms.len(), 2);
        assert!(ms.iter().all(|m| m.truth_state.is_los()));
        assert_eq!(ms, measure_links(&uavs, &rx, &b, &cp, 500.0, &s).unwrap());
    }
}
