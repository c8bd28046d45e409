//! Elevation-angle LoS probability: the logistic terrain model, its
//! polynomial parameter map, empirical curves sampled from exact terrain,
//! least-squares curve fits and the azimuth decorrelation experiment.

mod fit;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::rng::SeedStream;
use crate::terrain::{BuildingSet, Point3, Region};
use fit::Bounds;

/// Elevation angle in degrees of `uav` as seen from `user`.
pub fn elevation_angle(user: &Point3, uav: &Point3) -> Result<f64> {
    let dz = uav.z - user.z;
    if !(dz > 0.0) {
        return Err(Error::Domain(format!("UAV altitude {} must exceed user altitude {}", uav.z, user.z)));
    }
    Ok(elevation_deg(user.horizontal_distance(uav), dz))
}

#[inline]
pub(crate) fn elevation_deg(horizontal: f64, dz: f64) -> f64 {
    if horizontal == 0.0 {
        90.0
    } else {
        dz.atan2(horizontal).to_degrees()
    }
}

/// Logistic LoS probability with `theta` in degrees.
pub fn a2glpm_probability(theta: f64, a: f64, b: f64) -> Result<f64> {
    ensure_finite("theta", theta)?;
    ensure_finite("b", b)?;
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::Domain(format!("a must be positive, got {a}")));
    }
    if !(0.0..=90.0).contains(&theta) {
        return Err(Error::Domain(format!("theta must lie in [0, 90], got {theta}")));
    }
    Ok(sigmoid(theta, a, b))
}

#[inline]
fn sigmoid(theta: f64, a: f64, b: f64) -> f64 {
    1.0 / (1.0 + a * (-b * (theta - a)).exp())
}

/// Which curve target a coefficient table produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum CoeffTarget {
    A,
    B,
}

/// Named `(kappa, iota, omega)` environment.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentPreset {
    pub name: String,
    pub kappa: f64,
    pub iota: f64,
    pub omega: f64,
}

/// Bivariate cubic coefficient tables, one per target.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct A2glpmCoeffs {
    a: BTreeMap<(usize, usize), f64>,
    b: BTreeMap<(usize, usize), f64>,
    presets: Vec<EnvironmentPreset>,
}

pub const COEFF_INDICES: [(usize, usize); 10] =
    [(0, 0), (0, 1), (0, 2), (0, 3), (1, 0), (1, 1), (1, 2), (2, 0), (2, 1), (3, 0)];

impl A2glpmCoeffs {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut out = A2glpmCoeffs::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let tok: Vec<&str> = line.split_whitespace().collect();
            let bad = |m: &str| Error::config(format!("coefficients:{}", lineno + 1), m.to_string());
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(&format!("`{s}` is not a number")));
            match tok.as_slice() {
                ["coef", target, i, j, v] => {
                    let i: usize = i.parse().map_err(|_| bad("bad index i"))?;
                    let j: usize = j.parse().map_err(|_| bad("bad index j"))?;
                    if i + j > 3 {
                        return Err(bad("i + j must be <= 3"));
                    }
                    let v = num(v)?;
                    let table = match *target {
                        "a" => &mut out.a,
                        "b" => &mut out.b,
                        other => return Err(bad(&format!("unknown target `{other}`"))),
                    };
                    if table.insert((i, j), v).is_some() {
                        return Err(bad("duplicate coefficient"));
                    }
                }
                ["preset", name, k, io, om] => out.presets.push(EnvironmentPreset {
                    name: name.to_string(),
                    kappa: num(k)?,
                    iota: num(io)?,
                    omega: num(om)?,
                }),
                _ => return Err(bad("expected `coef t i j v` or `preset name kappa iota omega`")),
            }
        }
        Ok(out)
    }

    pub fn set(&mut self, target: CoeffTarget, i: usize, j: usize, v: f64) {
        match target {
            CoeffTarget::A => self.a.insert((i, j), v),
            CoeffTarget::B => self.b.insert((i, j), v),
        };
    }

    pub fn get(&self, target: CoeffTarget, i: usize, j: usize) -> Option<f64> {
        match target {
            CoeffTarget::A => self.a.get(&(i, j)).copied(),
            CoeffTarget::B => self.b.get(&(i, j)).copied(),
        }
    }

    pub fn presets(&self) -> &[EnvironmentPreset] {
        &self.presets
    }

    pub fn preset(&self, name: &str) -> Option<&EnvironmentPreset> {
        self.presets.iter().find(|p| p.name == name)
    }

    fn eval(&self, target: CoeffTarget, x: f64, omega: f64) -> Result<f64> {
        let tname = match target {
            CoeffTarget::A => "a",
            CoeffTarget::B => "b",
        };
        // Horner in omega for each power of x
        let mut total = 0.0;
        let mut xp = 1.0;
        for i in 0..=3 {
            let mut inner = 0.0;
            for j in (0..=3 - i).rev() {
                let c = self
                    .get(target, i, j)
                    .ok_or_else(|| Error::config(format!("coefficients.{tname}[{i}][{j}]"), "missing"))?;
                inner = inner * omega + c;
            }
            total += inner * xp;
            xp *= x;
        }
        Ok(total)
    }
}

/// Map terrain features to the logistic curve parameters `(a, b)`.
pub fn coeffs_to_ab(kappa: f64, iota: f64, omega: f64, coeffs: &A2glpmCoeffs) -> Result<(f64, f64)> {
    let x = kappa * iota;
    Ok((coeffs.eval(CoeffTarget::A, x, omega)?, coeffs.eval(CoeffTarget::B, x, omega)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveFamily {
    /// `1 / (1 + a exp(-b (theta - a)))`, theta in degrees.
    Sigmoid,
    /// `a tanh(b theta)`, theta in radians.
    Tanh,
    /// `clamp(a theta + b, 0, 1)`, theta in radians.
    ReLu,
}

impl CurveFamily {
    pub const ALL: [CurveFamily; 3] = [CurveFamily::Sigmoid, CurveFamily::Tanh, CurveFamily::ReLu];

    pub fn name(self) -> &'static str {
        match self {
            CurveFamily::Sigmoid => "sigmoid",
            CurveFamily::Tanh => "tanh",
            CurveFamily::ReLu => "relu",
        }
    }

    #[inline]
    pub fn eval(self, theta_deg: f64, a: f64, b: f64) -> f64 {
        match self {
            CurveFamily::Sigmoid => sigmoid(theta_deg, a, b),
            CurveFamily::Tanh => a * (b * theta_deg.to_radians()).tanh(),
            CurveFamily::ReLu => (a * theta_deg.to_radians() + b).clamp(0.0, 1.0),
        }
    }

    /// Parameter box searched by the fitter.
    fn bounds(self) -> Bounds {
        match self {
            CurveFamily::Sigmoid => Bounds { lo: [1e-3, 1e-4], hi: [50.0, 2.0] },
            CurveFamily::Tanh => Bounds { lo: [0.0, 0.0], hi: [1.0, 20.0] },
            CurveFamily::ReLu => Bounds { lo: [-5.0, -2.0], hi: [5.0, 2.0] },
        }
    }

    pub fn parameter_bounds(self) -> ([f64; 2], [f64; 2]) {
        let b = self.bounds();
        (b.lo, b.hi)
    }
}

/// A fitted elevation-angle curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LosCurveModel {
    pub family: CurveFamily,
    pub a: f64,
    pub b: f64,
    pub mse: f64,
}

impl LosCurveModel {
    pub fn new(family: CurveFamily, a: f64, b: f64) -> Self {
        LosCurveModel { family, a, b, mse: 0.0 }
    }

    /// The logistic curve with the parameters fitted on the reference city.
    pub fn reference_sigmoid() -> Self {
        LosCurveModel::new(CurveFamily::Sigmoid, 2.8240, 0.0628)
    }

    /// Constant probability one.
    pub fn always_los() -> Self {
        LosCurveModel::new(CurveFamily::ReLu, 0.0, 1.0)
    }

    pub fn probability(&self, theta_deg: f64) -> f64 {
        self.family.eval(theta_deg, self.a, self.b).clamp(0.0, 1.0)
    }
}

/// LoS outcome counts for one elevation bin; `theta` is the bin center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElevationSample {
    pub theta: f64,
    pub trials: u64,
    pub los_count: u64,
}

impl ElevationSample {
    pub fn p_hat(&self) -> Option<f64> {
        (self.trials > 0).then(|| self.los_count as f64 / self.trials as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LosSampling {
    pub uav_height: f64,
    pub user_height: f64,
    pub n_pairs: u64,
    pub bin_width: f64,
}

impl Default for LosSampling {
    fn default() -> Self {
        LosSampling { uav_height: 80.0, user_height: 0.0, n_pairs: 200_000, bin_width: 1.0 }
    }
}

const CHUNK: u64 = 4096;

/// Empirical LoS probability per elevation bin from exact geometry, with user
/// and UAV ground positions uniform over `core`.
pub fn sample_los_curve(
    b: &BuildingSet,
    core: &Region,
    cfg: &LosSampling,
    stream: &SeedStream,
) -> Result<Vec<ElevationSample>> {
    if cfg.n_pairs < 1 {
        return Err(Error::Parameter("n_pairs must be >= 1".into()));
    }
    if !(cfg.uav_height > cfg.user_height) {
        return Err(Error::Parameter("UAV height must exceed user height".into()));
    }
    if !(cfg.bin_width > 0.0) || !cfg.bin_width.is_finite() {
        return Err(Error::Parameter("bin width must be > 0".into()));
    }
    let nb = (90.0 / cfg.bin_width).ceil() as usize;
    let chunks = cfg.n_pairs.div_ceil(CHUNK);
    let dz = cfg.uav_height - cfg.user_height;
    let hist = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream.rng(c);
            let mut trials = vec![0u64; nb];
            let mut los = vec![0u64; nb];
            let mut theta_sum = vec![0.0f64; nb];
            let n = CHUNK.min(cfg.n_pairs - c * CHUNK);
            for _ in 0..n {
                let (ux, uy) = core.sample(&mut rng);
                let (vx, vy) = core.sample(&mut rng);
                let user = Point3::new(ux, uy, cfg.user_height);
                let uav = Point3::new(vx, vy, cfg.uav_height);
                let theta = elevation_deg(user.horizontal_distance(&uav), dz);
                let k = ((theta / cfg.bin_width) as usize).min(nb - 1);
                trials[k] += 1;
                theta_sum[k] += theta;
                if !b.segment_blocked(user, uav) {
                    los[k] += 1;
                }
            }
            (trials, los, theta_sum)
        })
        .collect::<Vec<_>>();
    let mut trials = vec![0u64; nb];
    let mut los = vec![0u64; nb];
    let mut theta_sum = vec![0.0f64; nb];
    for (t, l, s) in hist {
        for k in 0..nb {
            trials[k] += t[k];
            los[k] += l[k];
            theta_sum[k] += s[k];
        }
    }
    // bins are located at the mean sampled angle, not the bin centre
    Ok((0..nb)
        .map(|k| ElevationSample {
            theta: if trials[k] > 0 {
                theta_sum[k] / trials[k] as f64
            } else {
                ((k as f64 + 0.5) * cfg.bin_width).min(90.0)
            },
            trials: trials[k],
            los_count: los[k],
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub starts: usize,
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { starts: 100, rel_tol: 1e-10, max_iter: 4000 }
    }
}

/// Mean squared error of `(theta, p)` points against a curve, bins weighted equally.
pub fn curve_mse(points: &[(f64, f64)], family: CurveFamily, a: f64, b: f64) -> f64 {
    points.iter().map(|&(t, p)| (family.eval(t, a, b) - p).powi(2)).sum::<f64>() / points.len() as f64
}

/// Least-squares fit of `family` to the non-empty bins.
pub fn fit_curve(samples: &[ElevationSample], family: CurveFamily, opts: &FitOptions) -> Result<LosCurveModel> {
    let points: Vec<(f64, f64)> = samples.iter().filter_map(|s| s.p_hat().map(|p| (s.theta, p))).collect();
    fit_points(&points, family, opts)
}

/// Same as [`fit_curve`] on explicit `(theta_deg, probability)` points.
pub fn fit_points(points: &[(f64, f64)], family: CurveFamily, opts: &FitOptions) -> Result<LosCurveModel> {
    if points.len() < 2 {
        return Err(Error::Parameter(format!("need at least 2 non-empty bins, got {}", points.len())));
    }
    let objective = |x: [f64; 2]| curve_mse(points, family, x[0], x[1]);
    let best = fit::multistart(&objective, &family.bounds(), opts.starts, opts.rel_tol, opts.max_iter);
    if !best.converged {
        return Err(Error::Fit { a: best.x[0], b: best.x[1], mse: best.f });
    }
    Ok(LosCurveModel { family, a: best.x[0], b: best.x[1], mse: best.f })
}

/// Conditional LoS probability of user B at a given azimuth offset from user A.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AzimuthPoint {
    pub azimuth: f64,
    pub conditional: f64,
    pub conditioning_trials: u64,
    pub low_confidence: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AzimuthCurve {
    pub theta0: f64,
    /// Unconditional LoS probability at `theta0` (user A).
    pub unconditional: f64,
    pub trials: u64,
    pub points: Vec<AzimuthPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AzimuthConfig {
    pub theta0: f64,
    pub uav_height: f64,
    pub user_height: f64,
    pub n_trials: u64,
    /// Bins with fewer conditioning samples are flagged.
    pub min_conditioning: u64,
}

/// Place users A and B at elevation `theta0` from a random UAV with azimuth
/// offsets from `azimuths` (degrees) and estimate `P(B LoS | A LoS)`.
pub fn azimuth_correlation(
    b: &BuildingSet,
    core: &Region,
    azimuths: &[f64],
    cfg: &AzimuthConfig,
    stream: &SeedStream,
) -> Result<AzimuthCurve> {
    if !(cfg.theta0 > 0.0 && cfg.theta0 < 90.0) {
        return Err(Error::Domain(format!("theta0 must lie in (0, 90), got {}", cfg.theta0)));
    }
    if !(cfg.uav_height > cfg.user_height) {
        return Err(Error::Parameter("UAV height must exceed user height".into()));
    }
    let dz = cfg.uav_height - cfg.user_height;
    let radius = dz / cfg.theta0.to_radians().tan();
    // keep both users inside the core when it is large enough
    let inner = Region::new(core.x_min + radius, core.x_max - radius, core.y_min + radius, core.y_max - radius)
        .unwrap_or(*core);
    let chunks = cfg.n_trials.div_ceil(CHUNK);
    let na = azimuths.len();
    let parts = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream.rng(c);
            let mut a_los = 0u64;
            let mut b_los = vec![0u64; na];
            let n = CHUNK.min(cfg.n_trials - c * CHUNK);
            for _ in 0..n {
                let (x, y) = inner.sample(&mut rng);
                let uav = Point3::new(x, y, cfg.uav_height);
                let phi = rng.random::<f64>() * std::f64::consts::TAU;
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                let at = |ang: f64| Point3::new(x + radius * ang.cos(), y + radius * ang.sin(), cfg.user_height);
                let user_a = at(phi);
                if b.segment_blocked(user_a, uav) {
                    continue;
                }
                a_los += 1;
                for (k, az) in azimuths.iter().enumerate() {
                    let user_b = if *az == 0.0 { user_a } else { at(phi + sign * az.to_radians()) };
                    if !b.segment_blocked(user_b, uav) {
                        b_los[k] += 1;
                    }
                }
            }
            (a_los, b_los)
        })
        .collect::<Vec<_>>();
    let mut a_los = 0u64;
    let mut b_los = vec![0u64; na];
    for (a, bl) in parts {
        a_los += a;
        for k in 0..na {
            b_los[k] += bl[k];
        }
    }
    let points = azimuths
        .iter()
        .zip(&b_los)
        .map(|(&az, &n)| AzimuthPoint {
            azimuth: az,
            conditional: if a_los > 0 { n as f64 / a_los as f64 } else { f64::NAN },
            conditioning_trials: a_los,
            low_confidence: a_los < cfg.min_conditioning,
        })
        .collect();
    Ok(AzimuthCurve {
        theta0: cfg.theta0,
        unconditional: if cfg.n_trials > 0 { a_los as f64 / cfg.n_trials as f64 } else { f64::NAN },
        trials: cfg.n_trials,
        points,
    })
}

/// `theta_deg,p_hat,trials`
pub fn write_curve_csv<W: Write>(mut w: W, samples: &[ElevationSample]) -> Result<()> {
    writeln!(w, "theta_deg,p_hat,trials")?;
    for s in samples {
        match s.p_hat() {
            Some(p) => writeln!(w, "{:.3},{:.6},{}", s.theta, p, s.trials)?,
            None => writeln!(w, "{:.3},,0", s.theta)?,
        }
    }
    Ok(())
}

/// `family,a,b,mse`
pub fn write_fits_csv<W: Write>(mut w: W, fits: &[LosCurveModel]) -> Result<()> {
    writeln!(w, "family,a,b,mse")?;
    for f in fits {
        writeln!(w, "{},{:.6},{:.6},{:.6e}", f.family.name(), f.a, f.b, f.mse)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn elevation_examples() {
        let u = Point3::new(0.0, 0.0, 0.0);
        assert!((elevation_angle(&u, &Point3::new(50.0, 0.0, 50.0)).unwrap() - 45.0).abs() < 1e-12);
        assert_eq!(elevation_angle(&u, &Point3::new(0.0, 0.0, 10.0)).unwrap(), 90.0);
        let t = elevation_angle(&u, &Point3::new(80.0 * 3f64.sqrt(), 0.0, 80.0)).unwrap();
        assert!((t - 30.0).abs() < 1e-9);
        assert!(elevation_angle(&u, &Point3::new(1.0, 1.0, 0.0)).is_err());
    }

    #[test]
    fn logistic_examples() {
        let p = a2glpm_probability(2.824, 2.824, 0.0628).unwrap();
        assert!((p - 1.0 / 3.824).abs() < 1e-12);
        assert!((p - 0.26151).abs() < 1e-5);
        let p90 = a2glpm_probability(90.0, 2.824, 0.0628).unwrap();
        assert!((p90 - 0.988301).abs() < 1e-6, "{p90}");
        assert!(a2glpm_probability(60.0, 2.824, 50.0).unwrap() > 1.0 - 1e-12);
        assert!(a2glpm_probability(10.0, 0.0, 0.1).is_err());
        assert!(a2glpm_probability(95.0, 1.0, 0.1).is_err());
    }

    #[test]
    fn single_monomials() {
        let mut c = A2glpmCoeffs::default();
        for (i, j) in COEFF_INDICES {
            c.set(CoeffTarget::A, i, j, 0.0);
            c.set(CoeffTarget::B, i, j, 0.0);
        }
        c.set(CoeffTarget::A, 0, 0, 4.5);
        c.set(CoeffTarget::B, 1, 0, 1.0);
        let (a, b) = coeffs_to_ab(7.0, 1.0, 5.0, &c).unwrap();
        assert_eq!(a, 4.5);
        assert_eq!(b, 7.0);
    }

    #[test]
    fn missing_coefficient_is_a_config_error() {
        let c = A2glpmCoeffs::parse("coef a 0 0 1.0\n").unwrap();
        assert!(matches!(coeffs_to_ab(0.1, 1.0, 1.0, &c), Err(Error::Config { .. })));
        assert!(A2glpmCoeffs::parse("coef a 2 2 1.0\n").is_err());
        assert!(A2glpmCoeffs::parse("coef a 0 0 1.0\ncoef a 0 0 2.0\n").is_err());
    }

    #[test]
    fn flat_data_relu() {
        let pts: Vec<(f64, f64)> = (0..40).map(|k| (2.0 + 2.0 * k as f64, 0.5)).collect();
        let m = fit_points(&pts, CurveFamily::ReLu, &FitOptions::default()).unwrap();
        assert!(m.a.abs() < 1e-6 && (m.b - 0.5).abs() < 1e-6 && m.mse < 1e-12, "{m:?}");
    }

    #[test]
    fn too_few_bins() {
        let s = [ElevationSample { theta: 10.0, trials: 5, los_count: 2 }];
        assert!(fit_curve(&s, CurveFamily::Tanh, &FitOptions::default()).is_err());
    }
}
