//! End-to-end scenarios: build the scene, run the module pipeline, write CSV
//! outputs plus a manifest with checksums and timings.

mod config;

pub use config::{
    env_overrides, parse_config, parse_config_str, BuildingsConfig, CoverageSection, CurveChoice, ExperimentConfig,
    Limits, LosConfig, RelaySection, TrackingSection, ENV_PREFIX,
};

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::coverage::{density_sweep, CoverageConfig, SweepScene};
use crate::error::{Error, Result};
use crate::los_model::{
    azimuth_correlation, fit_curve, sample_los_curve, write_curve_csv, write_fits_csv, AzimuthConfig, CurveFamily,
    FitOptions, LosCurveModel, LosSampling,
};
use crate::reconstruct::{reconstruction_error, scan_corridor, write_measurements_csv, HeightField};
use crate::rng::SeedStream;
use crate::search::{relay_scene, relay_search, search_length_sweep, snr_heatmap_capped, Plane};
use crate::terrain::{generate_buildings, grid_dims, BuildingSet};
use crate::tracking::{parade_buildings, run_parade};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Fig2Track,
    Fig4Losfit,
    Fig6Coverage,
    Fig7Relay,
    Fig8Sweep,
    ReconstructDemo,
}

impl Scenario {
    pub const ALL: [Scenario; 6] = [
        Scenario::Fig2Track,
        Scenario::Fig4Losfit,
        Scenario::Fig6Coverage,
        Scenario::Fig7Relay,
        Scenario::Fig8Sweep,
        Scenario::ReconstructDemo,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Fig2Track => "fig2_track",
            Scenario::Fig4Losfit => "fig4_losfit",
            Scenario::Fig6Coverage => "fig6_coverage",
            Scenario::Fig7Relay => "fig7_relay",
            Scenario::Fig8Sweep => "fig8_sweep",
            Scenario::ReconstructDemo => "reconstruct_demo",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::config("scenario", format!("unknown scenario `{s}`")))
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub scenario: Scenario,
    pub config: ExperimentConfig,
    pub out_dir: PathBuf,
    /// Replaces the scenario's main Monte Carlo count.
    pub trials: Option<u64>,
    /// Worker threads; `None` uses every core.
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub file: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub scenario: Scenario,
    pub master_seed: u64,
    pub config_hash: String,
    pub git_describe: String,
    pub crate_version: String,
    pub workers: usize,
    pub outputs: Vec<OutputRecord>,
    pub timings: Vec<Timing>,
}

impl RunManifest {
    pub fn checksum(&self, file: &str) -> Option<&str> {
        self.outputs.iter().find(|o| o.file == file).map(|o| o.sha256.as_str())
    }
}

/// Apply the `--trials` override to the key that drives each scenario.
pub fn apply_trials(cfg: &mut ExperimentConfig, scenario: Scenario, trials: u64) {
    match scenario {
        Scenario::Fig4Losfit => cfg.los.pairs = trials,
        Scenario::Fig6Coverage => cfg.coverage.trials = trials,
        Scenario::Fig7Relay => cfg.relay.scenes = trials,
        Scenario::Fig8Sweep => cfg.search.fading_trials = trials,
        Scenario::Fig2Track | Scenario::ReconstructDemo => cfg.tracking.seeds = trials,
    }
}

/// Run one scenario into `opts.out_dir`.
pub fn run(opts: &RunOptions) -> Result<RunManifest> {
    let mut cfg = opts.config.clone();
    if let Some(t) = opts.trials {
        if t == 0 {
            return Err(Error::config("trials", "must be >= 1"));
        }
        apply_trials(&mut cfg, opts.scenario, t);
    }
    cfg.validate()?;
    let workers = opts.workers.unwrap_or_else(rayon::current_num_threads);
    if workers == 0 {
        return Err(Error::config("workers", "must be >= 1"));
    }
    std::fs::create_dir_all(&opts.out_dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::config("workers", e.to_string()))?;
    let mut out = Outputs::new(&opts.out_dir);
    out.write("effective_config.toml", |w| Ok(w.write_all(cfg.to_toml()?.as_bytes())?))?;
    pool.install(|| match opts.scenario {
        Scenario::Fig4Losfit => fig4_losfit(&cfg, &mut out),
        Scenario::Fig6Coverage => fig6_coverage(&cfg, &mut out),
        Scenario::Fig7Relay => fig7_relay(&cfg, &mut out),
        Scenario::Fig8Sweep => fig8_sweep(&cfg, &mut out),
        Scenario::ReconstructDemo => reconstruct_demo(&cfg, &mut out),
        Scenario::Fig2Track => fig2_track(&cfg, &mut out),
    })
    .map_err(|e| match e {
        Error::Domain(m) => Error::Domain(format!("{}: {m}", opts.scenario)),
        Error::Parameter(m) => Error::Parameter(format!("{}: {m}", opts.scenario)),
        other => other,
    })?;
    let manifest = RunManifest {
        scenario: opts.scenario,
        master_seed: cfg.master_seed,
        config_hash: cfg.hash()?,
        git_describe: git_describe(),
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        workers,
        outputs: out.records,
        timings: out.timings,
    };
    let f = File::create(opts.out_dir.join("manifest.json"))?;
    serde_json::to_writer_pretty(BufWriter::new(f), &manifest).map_err(|e| Error::Io(e.into()))?;
    Ok(manifest)
}

fn git_describe() -> String {
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .current_dir(env!("CARGO_MANIFEST_DIR"))
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".to_string())
}

struct Outputs {
    dir: PathBuf,
    records: Vec<OutputRecord>,
    timings: Vec<Timing>,
    clock: Instant,
}

impl Outputs {
    fn new(dir: &Path) -> Self {
        Outputs { dir: dir.to_path_buf(), records: Vec::new(), timings: Vec::new(), clock: Instant::now() }
    }

    /// Render into memory, then write and checksum the bytes.
    fn write(&mut self, name: &str, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        std::fs::write(self.dir.join(name), &buf)?;
        self.records.push(OutputRecord {
            file: name.to_string(),
            sha256: format!("{:x}", Sha256::digest(&buf)),
            bytes: buf.len() as u64,
        });
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, v: &T) -> Result<()> {
        self.write(name, |w| {
            serde_json::to_writer_pretty(&mut *w, v).map_err(|e| Error::Io(e.into()))?;
            Ok(w.write_all(b"\n")?)
        })
    }

    fn lap(&mut self, stage: &str) {
        self.timings.push(Timing { stage: stage.to_string(), seconds: self.clock.elapsed().as_secs_f64() });
        self.clock = Instant::now();
    }

    fn buildings(&mut self, b: &BuildingSet) -> Result<()> {
        self.write("buildings.csv", |w| b.write_csv(w))?;
        self.json("buildings_meta.json", &b.metadata())
    }
}

fn city(cfg: &ExperimentConfig) -> Result<BuildingSet> {
    let bc = &cfg.buildings;
    let seed = SeedStream::new(cfg.master_seed, "terrain").seed(0);
    generate_buildings(bc.core().expanded(bc.guard), bc.density, bc.radius, bc.heights, seed)
}

fn los_sampling(cfg: &ExperimentConfig) -> LosSampling {
    LosSampling {
        uav_height: cfg.los.uav_height,
        user_height: cfg.los.user_height,
        n_pairs: cfg.los.pairs,
        bin_width: cfg.los.bin_width,
    }
}

fn fig4_losfit(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let b = city(cfg)?;
    let core = cfg.buildings.core();
    out.buildings(&b)?;
    out.lap("terrain");
    let samples = sample_los_curve(&b, &core, &los_sampling(cfg), &SeedStream::new(cfg.master_seed, "los"))?;
    out.write("los_curve.csv", |w| write_curve_csv(w, &samples))?;
    out.lap("sampling");
    let opts = FitOptions { starts: cfg.los.fit_starts, ..FitOptions::default() };
    let fits =
        CurveFamily::ALL.iter().map(|&f| fit_curve(&samples, f, &opts)).collect::<Result<Vec<LosCurveModel>>>()?;
    out.write("fits.csv", |w| write_fits_csv(w, &fits))?;
    out.lap("fitting");
    let az = azimuth_correlation(
        &b,
        &core,
        &cfg.los.azimuths,
        &AzimuthConfig {
            theta0: cfg.los.azimuth_theta0,
            uav_height: cfg.los.uav_height,
            user_height: cfg.los.user_height,
            n_trials: cfg.los.azimuth_trials,
            min_conditioning: 100,
        },
        &SeedStream::new(cfg.master_seed, "azimuth"),
    )?;
    out.write("azimuth.csv", |w| {
        writeln!(w, "theta0_deg,azimuth_deg,conditional,unconditional,conditioning_trials,low_confidence")?;
        for p in &az.points {
            writeln!(
                w,
                "{},{},{:.6},{:.6},{},{}",
                az.theta0, p.azimuth, p.conditional, az.unconditional, p.conditioning_trials, p.low_confidence
            )?;
        }
        Ok(())
    })?;
    out.lap("azimuth");
    Ok(())
}

/// The model-mode curve: published, or fitted on this city.
fn coverage_curve(cfg: &ExperimentConfig, b: &BuildingSet) -> Result<LosCurveModel> {
    match cfg.coverage.curve {
        CurveChoice::Reference => Ok(LosCurveModel::reference_sigmoid()),
        CurveChoice::Fitted => {
            let s = sample_los_curve(
                b,
                &cfg.buildings.core(),
                &los_sampling(cfg),
                &SeedStream::new(cfg.master_seed, "los"),
            )?;
            fit_curve(&s, CurveFamily::Sigmoid, &FitOptions { starts: cfg.los.fit_starts, ..FitOptions::default() })
        }
    }
}

fn fig6_coverage(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let b = city(cfg)?;
    out.buildings(&b)?;
    let curve = coverage_curve(cfg, &b)?;
    out.write("model_curve.csv", |w| write_fits_csv(w, &[curve]))?;
    out.lap("terrain");
    let c = &cfg.coverage;
    let core = cfg.buildings.core();
    let scene = SweepScene { buildings: &b, curve, core, deploy_region: core.expanded(cfg.buildings.guard) };
    let table = density_sweep(
        &scene,
        &c.densities,
        c.altitude,
        &c.thresholds,
        &c.modes,
        &cfg.channel,
        &CoverageConfig { user_height: c.user_height, trials: c.trials },
        &SeedStream::new(cfg.master_seed, "coverage"),
    )?;
    out.write("sweep.csv", |w| table.write_csv(w))?;
    out.write("argmax.csv", |w| {
        writeln!(w, "mode,threshold_db,density_per_km2")?;
        for (m, t, d) in table.argmax() {
            writeln!(w, "{},{},{}", m.name(), t, d)?;
        }
        Ok(())
    })?;
    out.lap("sweep");
    Ok(())
}

fn fig7_relay(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let r = &cfg.relay;
    let mut rows = Vec::new();
    for s in 0..r.scenes {
        let scene = relay_scene(&r.scene, &cfg.channel, &SeedStream::new(cfg.master_seed, "relay").child("scene", s))?;
        let p = &scene.problem;
        let trace = relay_search(
            p,
            &scene.buildings,
            scene.start,
            &mut SeedStream::new(cfg.master_seed, "relay_search").rng(s),
        )?;
        let plane = Plane::bisector(p.served[0], p.served[1])?;
        let hm = snr_heatmap_capped(&plane, p, &scene.buildings, r.heatmap_step, cfg.limits.max_cells)?;
        let (_, _, optimum) =
            hm.argmax().ok_or_else(|| Error::Domain("plane heatmap has no admissible cell".into()))?;
        let best = trace.best();
        rows.push((s, best.min_snr_db, optimum, trace.path_length, best.position));
        if s == 0 {
            out.buildings(&scene.buildings)?;
            out.write("trace.csv", |w| trace.write_csv(w))?;
            out.write("heatmap.csv", |w| hm.write_csv(w))?;
            out.json("heatmap_meta.json", &hm.metadata())?;
        }
    }
    out.write("relay_summary.csv", |w| {
        writeln!(w, "scene,terminal_min_snr_db,plane_optimum_db,gap_db,path_length_m,x,y,z")?;
        for (s, got, opt, len, pos) in &rows {
            writeln!(w, "{s},{got:.6},{opt:.6},{:.6},{len:.3},{:.3},{:.3},{:.3}", opt - got, pos.x, pos.y, pos.z)?;
        }
        Ok(())
    })?;
    out.lap("relay");
    Ok(())
}

fn fig8_sweep(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let b = city(cfg)?;
    out.buildings(&b)?;
    let curve = coverage_curve(cfg, &b)?;
    out.lap("terrain");
    let res = search_length_sweep(
        &b,
        &cfg.buildings.core(),
        &curve,
        &cfg.search,
        &cfg.channel,
        &SeedStream::new(cfg.master_seed, "length_sweep"),
    )?;
    out.write("length_sweep.csv", |w| res.write_csv(w))?;
    out.lap("sweep");
    Ok(())
}

fn check_field_size(cfg: &ExperimentConfig) -> Result<()> {
    grid_dims(&cfg.buildings.core(), cfg.reconstruct.cell, cfg.limits.max_cells, "height field").map(|_| ())
}

fn parade_city(cfg: &ExperimentConfig, k: u64) -> Result<BuildingSet> {
    let bc = &cfg.buildings;
    let seed = SeedStream::new(cfg.master_seed, "parade_terrain").seed(k);
    parade_buildings(&cfg.tracking.scenario, bc.core(), bc.density, bc.radius, bc.heights, seed)
}

fn reconstruct_demo(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    check_field_size(cfg)?;
    let s = &cfg.tracking.scenario;
    let routes = [s.route_a.clone(), s.route_b.clone()];
    let corridor = s.corridor(cfg.reconstruct.corridor_width)?;
    let mut rows = Vec::new();
    for k in 0..cfg.tracking.seeds {
        let b = parade_city(cfg, k)?;
        let scan = scan_corridor(
            &b,
            cfg.buildings.core(),
            &routes,
            &cfg.reconstruct,
            &cfg.channel,
            &SeedStream::new(cfg.master_seed, "scan").child("city", k),
        )?;
        let err = reconstruction_error(&scan.field, &b, &corridor);
        if k == 0 {
            out.buildings(&b)?;
            out.write("measurements.csv", |w| write_measurements_csv(w, &scan.measurements, &cfg.channel))?;
            out.write("heightfield.csv", |w| scan.field.write_csv(w))?;
        }
        rows.push((k, err, scan.stats, scan.measurements.len()));
    }
    out.write("reconstruction.csv", |w| {
        writeln!(
            w,
            "city,mae_near_m,mae_far_m,undetected,undetected_near,undetected_far,buildings_near,buildings_far,links,los_links,nlos_applied,contradictions,unresolved"
        )?;
        for (k, e, st, n) in &rows {
            writeln!(
                w,
                "{k},{:.6},{:.6},{},{},{},{},{},{n},{},{},{},{}",
                e.mae_near,
                e.mae_far,
                e.undetected,
                e.undetected_near,
                e.undetected_far,
                e.buildings_near,
                e.buildings_far,
                st.los,
                st.nlos_applied,
                st.contradictions,
                st.unresolved
            )?;
        }
        Ok(())
    })?;
    out.lap("reconstruct");
    Ok(())
}

fn fig2_track(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    check_field_size(cfg)?;
    let s = &cfg.tracking.scenario;
    let routes = [s.route_a.clone(), s.route_b.clone()];
    let core = cfg.buildings.core();
    let mut summary = Vec::new();
    for k in 0..cfg.tracking.seeds {
        let b = parade_city(cfg, k)?;
        let scan = scan_corridor(
            &b,
            core,
            &routes,
            &cfg.reconstruct,
            &cfg.channel,
            &SeedStream::new(cfg.master_seed, "scan").child("city", k),
        )?;
        let truth = HeightField::from_truth(&b, core, cfg.reconstruct.cell)?;
        let empty = HeightField::new(core, cfg.reconstruct.cell)?;
        let stream = SeedStream::new(cfg.master_seed, "parade").child("city", k);
        let rec = run_parade(s, &scan.field, &b, &cfg.channel, &stream)?;
        let tru = run_parade(s, &truth, &b, &cfg.channel, &stream)?;
        let emp = run_parade(s, &empty, &b, &cfg.channel, &stream)?;
        if k == 0 {
            out.buildings(&b)?;
            out.write("heightfield.csv", |w| scan.field.write_csv(w))?;
            out.write("tracking.csv", |w| rec.write_csv(w))?;
            out.write("tracking_truth_map.csv", |w| tru.write_csv(w))?;
            out.write("tracking_empty_map.csv", |w| emp.write_csv(w))?;
            out.write("crowds.csv", |w| {
                writeln!(w, "slot,crowd,x,y,z")?;
                for st in &rec.slots {
                    for (label, users) in [("a", &st.users_a), ("b", &st.users_b)] {
                        for u in users.iter() {
                            writeln!(w, "{},{label},{:.3},{:.3},{:.3}", st.slot, u.x, u.y, u.z)?;
                        }
                    }
                }
                Ok(())
            })?;
        }
        summary.push((k, rec.mean_los_fraction(), tru.mean_los_fraction(), emp.mean_los_fraction()));
    }
    out.write("tracking_summary.csv", |w| {
        writeln!(w, "city,los_reconstructed,los_truth,los_empty")?;
        for (k, r, t, e) in &summary {
            writeln!(w, "{k},{r:.6},{t:.6},{e:.6}")?;
        }
        Ok(())
    })?;
    out.lap("tracking");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_names_round_trip() {
        for s in Scenario::ALL {
            assert_eq!(s.name().parse::<Scenario>().unwrap(), s);
        }
        assert!("fig9".parse::<Scenario>().is_err());
    }
}
