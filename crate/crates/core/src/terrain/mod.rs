//! Stochastic urban terrain: cylindrical buildings on a Poisson point process,
//! exact line-of-sight queries, shadow masks and ITU-style terrain features.

mod index;

pub use index::cylinder_blocks;

use std::io::{BufRead, Write};

use rand::Rng;
use rand_distr::{Distribution, LogNormal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::rng::{rng_from_seed, SimRng};
use index::GridIndex;

/// Axis-aligned rectangle in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Region {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Result<Self> {
        for (n, v) in [("x_min", x_min), ("x_max", x_max), ("y_min", y_min), ("y_max", y_max)] {
            ensure_finite(n, v)?;
        }
        if x_max <= x_min || y_max <= y_min {
            return Err(Error::Parameter(format!("degenerate region [{x_min}, {x_max}] x [{y_min}, {y_max}]")));
        }
        Ok(Region { x_min, x_max, y_min, y_max })
    }

    /// Square `[0, side] x [0, side]`.
    pub fn square(side: f64) -> Result<Self> {
        Region::new(0.0, side, 0.0, side)
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area_m2(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn area_km2(&self) -> f64 {
        self.area_m2() * 1e-6
    }

    pub fn center(&self) -> (f64, f64) {
        (0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max))
    }

    pub fn expanded(&self, margin: f64) -> Region {
        Region {
            x_min: self.x_min - margin,
            x_max: self.x_max + margin,
            y_min: self.y_min - margin,
            y_max: self.y_max + margin,
        }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        (self.x_min + rng.random::<f64>() * self.width(), self.y_min + rng.random::<f64>() * self.height())
    }
}

/// Position in meters; `z` is altitude above ground.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Point3 { x, y, z }
    }

    pub fn distance(&self, o: &Point3) -> f64 {
        ((self.x - o.x).powi(2) + (self.y - o.y).powi(2) + (self.z - o.z).powi(2)).sqrt()
    }

    pub fn horizontal_distance(&self, o: &Point3) -> f64 {
        (self.x - o.x).hypot(self.y - o.y)
    }

    pub fn with_z(self, z: f64) -> Self {
        Point3 { z, ..self }
    }

    pub fn lerp(&self, o: &Point3, t: f64) -> Point3 {
        Point3::new(self.x + t * (o.x - self.x), self.y + t * (o.y - self.y), self.z + t * (o.z - self.z))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Building {
    pub x: f64,
    pub y: f64,
    pub radius: f64,
    pub height: f64,
}

impl Building {
    pub fn new(x: f64, y: f64, radius: f64, height: f64) -> Result<Self> {
        for (n, v) in [("x", x), ("y", y), ("radius", radius), ("height", height)] {
            ensure_finite(n, v)?;
        }
        if radius <= 0.0 || height <= 0.0 {
            return Err(Error::Parameter(format!(
                "building needs radius > 0 and height > 0, got r={radius}, h={height}"
            )));
        }
        Ok(Building { x, y, radius, height })
    }

    pub fn covers(&self, x: f64, y: f64) -> bool {
        (x - self.x).powi(2) + (y - self.y).powi(2) < self.radius * self.radius
    }
}

/// Building height law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HeightDistribution {
    /// `ln h ~ N(mu, sigma^2)`.
    LogNormal { mu: f64, sigma: f64 },
    /// Rayleigh with scale `omega`.
    Rayleigh { omega: f64 },
}

impl Default for HeightDistribution {
    fn default() -> Self {
        HeightDistribution::LogNormal { mu: 3.0, sigma: 0.4 }
    }
}

impl HeightDistribution {
    pub fn validate(&self) -> Result<()> {
        match *self {
            HeightDistribution::LogNormal { mu, sigma } => {
                ensure_finite("mu", mu)?;
                ensure_finite("sigma", sigma)?;
                if sigma <= 0.0 {
                    return Err(Error::Parameter(format!("log-normal sigma must be > 0, got {sigma}")));
                }
            }
            HeightDistribution::Rayleigh { omega } => {
                ensure_finite("omega", omega)?;
                if omega <= 0.0 {
                    return Err(Error::Parameter(format!("Rayleigh scale must be > 0, got {omega}")));
                }
            }
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            HeightDistribution::LogNormal { mu, sigma } => LogNormal::new(mu, sigma).expect("validated").sample(rng),
            HeightDistribution::Rayleigh { omega } => {
                let u: f64 = rng.random();
                omega * (-2.0 * (1.0 - u).ln()).sqrt()
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            HeightDistribution::LogNormal { mu, sigma } => (mu + 0.5 * sigma * sigma).exp(),
            HeightDistribution::Rayleigh { omega } => omega * (std::f64::consts::PI / 2.0).sqrt(),
        }
    }

    /// Inverse CDF at probability `p`.
    pub fn quantile(&self, p: f64) -> f64 {
        use statrs::distribution::{ContinuousCDF, Normal};
        match *self {
            HeightDistribution::LogNormal { mu, sigma } => {
                let z = Normal::new(0.0, 1.0).expect("unit normal").inverse_cdf(p);
                (mu + sigma * z).exp()
            }
            HeightDistribution::Rayleigh { omega } => omega * (-2.0 * (1.0 - p).ln()).sqrt(),
        }
    }

    fn describe(&self) -> String {
        match *self {
            HeightDistribution::LogNormal { mu, sigma } => format!("lognormal({mu},{sigma})"),
            HeightDistribution::Rayleigh { omega } => format!("rayleigh({omega})"),
        }
    }
}

/// Immutable set of cylindrical buildings with a spatial index.
#[derive(Debug, Clone)]
pub struct BuildingSet {
    region: Region,
    buildings: Vec<Building>,
    seed: u64,
    heights: Option<HeightDistribution>,
    index: GridIndex,
}

impl PartialEq for BuildingSet {
    fn eq(&self, other: &Self) -> bool {
        self.region == other.region
            && self.buildings == other.buildings
            && self.seed == other.seed
            && self.heights == other.heights
    }
}

/// Draw a homogeneous Poisson point process of buildings.
///
/// `density` is in buildings per km^2 over `region`; pass an already
/// guard-expanded region when edge effects matter.
pub fn generate_buildings(
    region: Region,
    density: f64,
    radius: f64,
    heights: HeightDistribution,
    seed: u64,
) -> Result<BuildingSet> {
    ensure_finite("density", density)?;
    ensure_finite("radius", radius)?;
    heights.validate()?;
    if density < 0.0 {
        return Err(Error::Parameter(format!("density must be >= 0, got {density}")));
    }
    if radius <= 0.0 {
        return Err(Error::Parameter(format!("radius must be > 0, got {radius}")));
    }
    let mut rng = rng_from_seed(seed);
    let n = poisson_count(&mut rng, density * region.area_km2());
    let mut buildings = Vec::with_capacity(n);
    for _ in 0..n {
        let (x, y) = region.sample(&mut rng);
        let h = heights.sample(&mut rng);
        buildings.push(Building { x, y, radius, height: h });
    }
    Ok(BuildingSet::build(region, buildings, seed, Some(heights)))
}

pub(crate) fn poisson_count(rng: &mut SimRng, mean: f64) -> usize {
    if mean <= 0.0 {
        0
    } else {
        Poisson::new(mean).expect("positive mean").sample(rng) as usize
    }
}

impl BuildingSet {
    fn build(region: Region, buildings: Vec<Building>, seed: u64, heights: Option<HeightDistribution>) -> Self {
        let index = GridIndex::build(&region, &buildings);
        BuildingSet { region, buildings, seed, heights, index }
    }

    /// Hand-placed scene. Centers must lie inside `region`.
    pub fn from_buildings(region: Region, buildings: Vec<Building>) -> Result<Self> {
        for b in &buildings {
            Building::new(b.x, b.y, b.radius, b.height)?;
            if !region.contains(b.x, b.y) {
                return Err(Error::Parameter(format!("building center ({}, {}) outside region", b.x, b.y)));
            }
        }
        Ok(BuildingSet::build(region, buildings, 0, None))
    }

    pub fn empty(region: Region) -> Self {
        BuildingSet::build(region, Vec::new(), 0, None)
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    pub fn buildings(&self) -> &[Building] {
        &self.buildings
    }

    pub fn len(&self) -> usize {
        self.buildings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buildings.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn height_distribution(&self) -> Option<HeightDistribution> {
        self.heights
    }

    /// True iff the open segment `p`-`q` passes through the interior of any building.
    pub fn segment_blocked(&self, p: Point3, q: Point3) -> bool {
        self.index.segment_blocked(&self.buildings, p, q)
    }

    /// Same query without the spatial index.
    pub fn segment_blocked_linear(&self, p: Point3, q: Point3) -> bool {
        self.buildings.iter().any(|b| cylinder_blocks(b, p, q))
    }

    /// Tallest building covering the ground point, 0 when none does.
    pub fn height_at(&self, x: f64, y: f64) -> f64 {
        self.buildings.iter().filter(|b| b.covers(x, y)).map(|b| b.height).fold(0.0, f64::max)
    }

    /// Copy with one building's height replaced.
    pub fn with_height(&self, i: usize, height: f64) -> Result<Self> {
        let mut bs = self.buildings.clone();
        let b = bs.get_mut(i).ok_or_else(|| Error::Parameter(format!("no building {i}")))?;
        *b = Building::new(b.x, b.y, b.radius, height)?;
        Ok(BuildingSet::build(self.region, bs, self.seed, self.heights))
    }

    /// CSV with header `x,y,radius,height`, six decimals.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "x,y,radius,height")?;
        for b in &self.buildings {
            writeln!(w, "{:.6},{:.6},{:.6},{:.6}", b.x, b.y, b.radius, b.height)?;
        }
        Ok(())
    }

    pub fn metadata(&self) -> TerrainMetadata {
        TerrainMetadata {
            region: self.region,
            seed: self.seed,
            distribution: self.heights.map(|h| h.describe()),
            count: self.buildings.len(),
        }
    }

    /// Inverse of [`BuildingSet::write_csv`] plus its metadata record.
    pub fn read_csv<R: BufRead>(r: R, meta: &TerrainMetadata) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().transpose()?.unwrap_or_default();
        if header.trim() != "x,y,radius,height" {
            return Err(Error::Parameter(format!("unexpected building CSV header `{header}`")));
        }
        let mut buildings = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let v: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parameter(format!("bad building row `{line}`: {e}")))?;
            if v.len() != 4 {
                return Err(Error::Parameter(format!("bad building row `{line}`")));
            }
            buildings.push(Building::new(v[0], v[1], v[2], v[3])?);
        }
        let mut set = BuildingSet::from_buildings(meta.region, buildings)?;
        set.seed = meta.seed;
        Ok(set)
    }
}

/// Sidecar record stored next to a building CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerrainMetadata {
    pub region: Region,
    pub seed: u64,
    pub distribution: Option<String>,
    pub count: usize,
}

/// Dense boolean raster over a region; cell `(i, j)` has its center at
/// `(x_min + (i + 0.5) step, y_min + (j + 0.5) step)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoolGrid {
    pub region: Region,
    pub step: f64,
    pub nx: usize,
    pub ny: usize,
    pub cells: Vec<bool>,
}

impl BoolGrid {
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.cells[j * self.nx + i]
    }

    pub fn center(&self, i: usize, j: usize) -> (f64, f64) {
        (self.region.x_min + (i as f64 + 0.5) * self.step, self.region.y_min + (j as f64 + 0.5) * self.step)
    }

    pub fn count_true(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    pub fn true_area(&self) -> f64 {
        self.count_true() as f64 * self.step * self.step
    }
}

pub const DEFAULT_CELL_CAP: u64 = 50_000_000;

pub(crate) fn grid_dims(region: &Region, step: f64, cap: u64, what: &'static str) -> Result<(usize, usize)> {
    ensure_finite("grid_step", step)?;
    if step <= 0.0 {
        return Err(Error::Parameter(format!("grid step must be > 0, got {step}")));
    }
    let nx = (region.width() / step).ceil();
    let ny = (region.height() / step).ceil();
    let requested = nx * ny;
    if requested > cap as f64 {
        return Err(Error::Resource { what, requested: requested.min(u64::MAX as f64) as u64, cap });
    }
    Ok((nx as usize, ny as usize))
}

/// Ground cells whose link to `uav` is blocked, evaluated at the cell center
/// raised to `plane_z`.
pub fn shadow_mask(
    uav: Point3,
    plane_z: f64,
    grid_step: f64,
    b: &BuildingSet,
    region: &Region,
    cell_cap: u64,
) -> Result<BoolGrid> {
    let (nx, ny) = grid_dims(region, grid_step, cell_cap, "shadow mask")?;
    let mut grid = BoolGrid { region: *region, step: grid_step, nx, ny, cells: vec![false; nx * ny] };
    for j in 0..ny {
        for i in 0..nx {
            let (x, y) = grid.center(i, j);
            grid.cells[j * nx + i] = b.segment_blocked(uav, Point3::new(x, y, plane_z));
        }
    }
    Ok(grid)
}

/// ITU-style terrain parameters of a building set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TerrainFeatures {
    /// Union footprint area over region area.
    pub kappa: f64,
    /// Buildings per km^2.
    pub iota: f64,
    /// Maximum-likelihood Rayleigh scale of the heights; `None` without buildings.
    pub omega: Option<f64>,
}

/// Terrain features with the footprint ratio rasterized at `cell` meters.
pub fn terrain_features(b: &BuildingSet, cell: f64) -> Result<TerrainFeatures> {
    let region = b.region();
    if b.is_empty() {
        return Ok(TerrainFeatures { kappa: 0.0, iota: 0.0, omega: None });
    }
    let (nx, ny) = grid_dims(region, cell, DEFAULT_CELL_CAP, "footprint raster")?;
    let mut occ = vec![false; nx * ny];
    for bd in b.buildings() {
        let i0 = ((bd.x - bd.radius - region.x_min) / cell - 0.5).floor().max(0.0) as usize;
        let i1 = (((bd.x + bd.radius - region.x_min) / cell - 0.5).ceil().max(0.0) as usize).min(nx - 1);
        let j0 = ((bd.y - bd.radius - region.y_min) / cell - 0.5).floor().max(0.0) as usize;
        let j1 = (((bd.y + bd.radius - region.y_min) / cell - 0.5).ceil().max(0.0) as usize).min(ny - 1);
        for j in j0..=j1 {
            let y = region.y_min + (j as f64 + 0.5) * cell;
            for i in i0..=i1 {
                let x = region.x_min + (i as f64 + 0.5) * cell;
                if bd.covers(x, y) {
                    occ[j * nx + i] = true;
                }
            }
        }
    }
    let covered = occ.iter().filter(|&&o| o).count() as f64 * cell * cell;
    let kappa = covered / region.area_m2();
    let iota = b.len() as f64 / region.area_km2();
    let mean_sq = b.buildings().iter().map(|x| x.height * x.height).sum::<f64>() / b.len() as f64;
    Ok(TerrainFeatures { kappa, iota, omega: Some((mean_sq / 2.0).sqrt()) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lone() -> BuildingSet {
        let region = Region::new(-100.0, 100.0, -100.0, 100.0).unwrap();
        BuildingSet::from_buildings(region, vec![Building::new(0.0, 0.0, 8.0, 20.0).unwrap()]).unwrap()
    }

    #[test]
    fn empty_set_never_blocks() {
        let b = BuildingSet::empty(Region::square(100.0).unwrap());
        assert!(!b.segment_blocked(Point3::new(1.0, 1.0, 0.0), Point3::new(90.0, 50.0, 30.0)));
    }

    #[test]
    fn lone_building_examples() {
        let b = lone();
        assert!(b.segment_blocked(Point3::new(20.0, 0.0, 0.0), Point3::new(-20.0, 0.0, 30.0)));
        assert!(!b.segment_blocked(Point3::new(20.0, 0.0, 0.0), Point3::new(-20.0, 0.0, 80.0)));
    }

    #[test]
    fn grazing_contact_is_not_blocked() {
        let b = lone();
        // tangent to the cylinder wall
        assert!(!b.segment_blocked(Point3::new(-50.0, 8.0, 5.0), Point3::new(50.0, 8.0, 5.0)));
        // skimming the roof plane
        assert!(!b.segment_blocked(Point3::new(-50.0, 0.0, 20.0), Point3::new(50.0, 0.0, 20.0)));
        assert!(b.segment_blocked(Point3::new(-50.0, 7.9, 19.9), Point3::new(50.0, 7.9, 19.9)));
    }

    #[test]
    fn vertical_segments() {
        let b = lone();
        assert!(b.segment_blocked(Point3::new(1.0, 1.0, 0.0), Point3::new(1.0, 1.0, 50.0)));
        assert!(!b.segment_blocked(Point3::new(1.0, 1.0, 20.0), Point3::new(1.0, 1.0, 50.0)));
        assert!(!b.segment_blocked(Point3::new(9.0, 0.0, 0.0), Point3::new(9.0, 0.0, 50.0)));
    }

    #[test]
    fn zero_density_is_empty() {
        let b =
            generate_buildings(Region::square(1000.0).unwrap(), 0.0, 8.0, HeightDistribution::default(), 3).unwrap();
        assert!(b.is_empty());
    }

    #[test]
    fn rejects_bad_parameters() {
        let r = Region::square(1000.0).unwrap();
        assert!(generate_buildings(r, f64::NAN, 8.0, HeightDistribution::default(), 1).is_err());
        assert!(generate_buildings(r, 100.0, 0.0, HeightDistribution::default(), 1).is_err());
        assert!(generate_buildings(r, -1.0, 8.0, HeightDistribution::default(), 1).is_err());
        assert!(Region::new(0.0, 0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn features_of_empty_and_constant_heights() {
        let r = Region::square(1000.0).unwrap();
        let f = terrain_features(&BuildingSet::empty(r), 1.0).unwrap();
        assert_eq!((f.kappa, f.iota, f.omega), (0.0, 0.0, None));

        let bs = (0..10).map(|k| Building::new(50.0 + 90.0 * k as f64, 500.0, 8.0, 12.0).unwrap()).collect();
        let set = BuildingSet::from_buildings(r, bs).unwrap();
        let f = terrain_features(&set, 1.0).unwrap();
        assert!((f.omega.unwrap() - 12.0 / 2f64.sqrt()).abs() < 1e-12);
        assert!((f.iota - 10.0).abs() < 1e-12);
    }

    #[test]
    fn shadow_mask_cap() {
        let b = lone();
        let err = shadow_mask(Point3::new(0.0, 0.0, 50.0), 0.0, 0.001, &b, b.region(), 1000).unwrap_err();
        assert!(matches!(err, Error::Resource { .. }));
    }

    #[test]
    fn csv_round_trip() {
        let b =
            generate_buildings(Region::square(300.0).unwrap(), 500.0, 8.0, HeightDistribution::default(), 9).unwrap();
        let mut buf = Vec::new();
        b.write_csv(&mut buf).unwrap();
        let back = BuildingSet::read_csv(&buf[..], &b.metadata()).unwrap();
        assert_eq!(back.len(), b.len());
        for (x, y) in back.buildings().iter().zip(b.buildings()) {
            assert!((x.x - y.x).abs() < 1e-6 && (x.height - y.height).abs() < 1e-6);
        }
    }

    #[test]
    fn quantile_matches_median() {
        let h = HeightDistribution::LogNormal { mu: 3.0, sigma: 0.4 };
        assert!((h.quantile(0.5) - 3f64.exp()).abs() < 1e-9);
        let r = HeightDistribution::Rayleigh { omega: 10.0 };
        assert!((r.quantile(1.0 - (-0.5f64).exp()) - 10.0).abs() < 1e-9);
    }
}
