//! Probe-by-probe search on the bisector plane of the two farthest devices.
//!
//! (c1) While the tracked links are clear, two one-sided probes of length
//! `granularity` along the plane axes estimate the ascent direction.
//! (c2) At a local optimum the UAV walks the circle around the plane origin,
//! which keeps the distance to both tracked devices fixed, probing inward
//! after every step and resuming (c1) on the first improvement.
//! When both tracked links are blocked the UAV climbs.

use rand_distr::{Distribution, Normal};

use super::{evaluate, AllowedSet, Plane, Probe, SearchProblem, SearchTrace, EPS};
use crate::channel::LinkState;
use crate::error::{Error, Result};
use crate::rng::SimRng;
use crate::terrain::{BuildingSet, Point3};

/// Improvements up to this many dB over 10 steps count as stalled.
const WINDOW_GAIN_DB: f64 = 0.05;
const WINDOW: usize = 10;
/// Smallest gain that ends an excursion.
const IMPROVE_DB: f64 = 1e-6;

/// Max-min search for exactly two devices.
pub fn relay_search(p: &SearchProblem, b: &BuildingSet, start: Point3, rng: &mut SimRng) -> Result<SearchTrace> {
    if p.served.len() != 2 {
        return Err(Error::Parameter(format!("relay search needs 2 devices, got {}", p.served.len())));
    }
    run(p, b, start, rng)
}

/// Max-min search for two or more devices. The plane follows whichever two
/// devices are currently farthest from the UAV.
pub fn multiuser_search(p: &SearchProblem, b: &BuildingSet, start: Point3, rng: &mut SimRng) -> Result<SearchTrace> {
    if p.served.len() < 2 {
        return Err(Error::Parameter(format!("multi-user search needs at least 2 devices, got {}", p.served.len())));
    }
    run(p, b, start, rng)
}

/// Any number of devices; a single device uses the vertical plane through
/// it and the start position.
pub(crate) fn device_search(
    p: &SearchProblem,
    b: &BuildingSet,
    start: Point3,
    rng: &mut SimRng,
) -> Result<SearchTrace> {
    run(p, b, start, rng)
}

fn run(p: &SearchProblem, b: &BuildingSet, start: Point3, rng: &mut SimRng) -> Result<SearchTrace> {
    p.validate()?;
    if !p.allowed.contains(&start) {
        return Err(Error::Domain(format!(
            "start ({:.3}, {:.3}, {:.3}) is outside the allowed set",
            start.x, start.y, start.z
        )));
    }
    let noise = if p.sensing_noise_db > 0.0 {
        Some(Normal::new(0.0, p.sensing_noise_db).map_err(|e| Error::Parameter(e.to_string()))?)
    } else {
        None
    };
    let mut s = Searcher { p, b, rng, noise, probes: Vec::new(), exhausted: false };
    s.visit(start, Kind::Start);
    let max_restarts = 8 * p.served.len();
    let mut restarts = 0;
    while !s.exhausted {
        let pair = s.farthest_pair(&s.pos());
        let plane = match pair {
            (i, j) if i != j => Plane::bisector(p.served[i], p.served[j])
                .unwrap_or_else(|_| Plane::vertical_through(p.served[i], s.pos())),
            (i, _) => Plane::vertical_through(p.served[i], s.pos()),
        };
        let frame = Frame::new(plane, &p.allowed);
        if !s.enter(&frame) {
            break;
        }
        match s.plane_search(&frame, pair, restarts >= max_restarts) {
            Outcome::Done => break,
            Outcome::PairChanged => restarts += 1,
        }
    }
    Ok(SearchTrace::from_probes(s.probes.into_iter().map(|(p, _)| p).collect()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Start,
    Transit,
    Gradient,
    Excursion,
    /// Probe toward the plane origin during an excursion.
    Inward,
    Climb,
}

enum Outcome {
    Done,
    PairChanged,
}

/// Plane plus its allowed coordinate window.
struct Frame {
    plane: Plane,
    c_lo: f64,
    c_hi: f64,
    allowed: AllowedSet,
}

impl Frame {
    fn new(plane: Plane, allowed: &AllowedSet) -> Self {
        let (c_lo, c_hi) = plane.c_range(allowed.z_min, allowed.z_max);
        Frame { plane, c_lo, c_hi, allowed: *allowed }
    }

    /// Nearest in-window coordinates, or `None` when the row leaves the region.
    fn clamp(&self, a: f64, c: f64) -> Option<(f64, f64)> {
        let c = c.clamp(self.c_lo, self.c_hi);
        let (lo, hi) = self.plane.a_range(c, &self.allowed.region)?;
        Some((a.clamp(lo, hi), c))
    }

    fn allowed(&self, a: f64, c: f64) -> bool {
        self.allowed.contains(&self.plane.point(a, c))
    }
}

struct Searcher<'a> {
    p: &'a SearchProblem,
    b: &'a BuildingSet,
    rng: &'a mut SimRng,
    noise: Option<Normal<f64>>,
    probes: Vec<(Probe, Kind)>,
    exhausted: bool,
}

impl Searcher<'_> {
    fn pos(&self) -> Point3 {
        self.probes.last().map_or(Point3::default(), |(p, _)| p.position)
    }

    fn path(&self) -> f64 {
        self.probes.last().map_or(0.0, |(p, _)| p.path_length)
    }

    fn value(&self) -> f64 {
        self.probes.last().map_or(f64::NEG_INFINITY, |(p, _)| p.min_snr_db)
    }

    fn states(&self) -> &[LinkState] {
        self.probes.last().map_or(&[], |(p, _)| &p.states)
    }

    /// Fly to `x` and sense; `None` once the budget cannot cover the leg.
    fn visit(&mut self, x: Point3, kind: Kind) -> Option<f64> {
        let leg = if self.probes.is_empty() { 0.0 } else { self.pos().distance(&x) };
        let path = self.path() + leg;
        if path > self.p.budget + EPS {
            self.exhausted = true;
            return None;
        }
        let (mut v, states) = evaluate(&x, self.p, self.b);
        if let Some(n) = &self.noise {
            v += n.sample(self.rng);
        }
        self.probes.push((Probe { position: x, min_snr_db: v, states, path_length: path }, kind));
        Some(v)
    }

    fn visit_ac(&mut self, f: &Frame, a: f64, c: f64, kind: Kind) -> Option<f64> {
        self.visit(f.plane.point(a, c), kind)
    }

    /// Two devices farthest from `x` in index order; `(0, 0)` for one device.
    fn farthest_pair(&self, x: &Point3) -> (usize, usize) {
        let n = self.p.served.len();
        if n == 1 {
            return (0, 0);
        }
        let mut idx: Vec<usize> = (0..n).collect();
        let d: Vec<f64> = self.p.served.iter().map(|s| s.distance(x)).collect();
        idx.sort_by(|&i, &j| d[j].total_cmp(&d[i]).then(i.cmp(&j)));
        (idx[0].min(idx[1]), idx[0].max(idx[1]))
    }

    /// Fly straight to the plane, stopping early if the budget runs out.
    fn enter(&mut self, f: &Frame) -> bool {
        let here = self.pos();
        let (a, c) = f.plane.coords(&here);
        let (a, c) = f.clamp(a, c).unwrap_or((0.0, f.c_lo.max(0.0).min(f.c_hi)));
        let target = f.plane.point(a, c);
        let leg = here.distance(&target);
        if leg < EPS {
            return true;
        }
        let left = self.p.budget - self.path();
        if leg > left + EPS {
            if left > EPS {
                let partial = here.lerp(&target, left / leg);
                self.visit(self.p.allowed.clamp(partial), Kind::Transit);
            }
            self.exhausted = true;
            return false;
        }
        self.visit(target, Kind::Transit).is_some()
    }

    fn tracked_blocked(&self, pair: (usize, usize)) -> bool {
        let st = self.states();
        !st[pair.0].is_los() && !st[pair.1].is_los()
    }

    fn plane_search(&mut self, f: &Frame, pair: (usize, usize), locked: bool) -> Outcome {
        let g = self.p.granularity;
        let mut history = vec![self.value()];
        loop {
            if self.exhausted {
                return Outcome::Done;
            }
            if !locked && self.farthest_pair(&self.pos()) != pair {
                return Outcome::PairChanged;
            }
            let (a, c) = f.plane.coords(&self.pos());
            if self.tracked_blocked(pair) && c + g <= f.c_hi + EPS && f.allowed(a, c + g) {
                if self.visit_ac(f, a, c + g, Kind::Climb).is_none() {
                    return Outcome::Done;
                }
                history = vec![self.value()];
                continue;
            }
            if !self.tracked_blocked(pair) {
                match self.ascent_step(f, a, c) {
                    Step::Moved => {
                        history.push(self.value());
                        let n = history.len();
                        if n <= WINDOW || self.value() - history[n - 1 - WINDOW] > WINDOW_GAIN_DB {
                            continue;
                        }
                    }
                    Step::Exhausted => return Outcome::Done,
                    Step::Stalled => {}
                }
            }
            match self.excursions(f, pair, locked) {
                Excursion::Improved => history = vec![self.value()],
                Excursion::PairChanged => return Outcome::PairChanged,
                Excursion::Done => return Outcome::Done,
            }
        }
    }

    /// One (c1) step from `(a, c)`, which is the current position.
    fn ascent_step(&mut self, f: &Frame, a: f64, c: f64) -> Step {
        let g = self.p.granularity;
        let f0 = self.value();
        let sa = if a > EPS { -1.0 } else { 1.0 };
        let sc = if c > EPS { -1.0 } else { 1.0 };
        let mut probes: Vec<((f64, f64), f64)> = Vec::with_capacity(3);
        let mut grad = [0.0f64; 2];
        for (axis, target) in [(0, (a + sa * g, c)), (1, (a, c + sc * g))] {
            let Some(t) = f.clamp(target.0, target.1) else { continue };
            if (t.0 - a).hypot(t.1 - c) < EPS {
                continue;
            }
            let Some(v) = self.visit_ac(f, t.0, t.1, Kind::Gradient) else { return Step::Exhausted };
            grad[axis] = (v - f0).max(0.0) * if axis == 0 { sa } else { sc };
            probes.push((t, v));
        }
        let best_probe = probes.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        if !(best_probe > f0) {
            // come back so the excursion starts from the optimum
            if self.pos().distance(&f.plane.point(a, c)) > EPS && self.visit_ac(f, a, c, Kind::Gradient).is_none() {
                return Step::Exhausted;
            }
            return Step::Stalled;
        }
        // step on from where the probes left the UAV
        let n = grad[0].hypot(grad[1]);
        let here = f.plane.coords(&self.pos());
        if let Some(t) = f.clamp(here.0 + g * grad[0] / n, here.1 + g * grad[1] / n) {
            if (t.0 - here.0).hypot(t.1 - here.1) > EPS {
                let Some(v) = self.visit_ac(f, t.0, t.1, Kind::Gradient) else { return Step::Exhausted };
                if v >= best_probe {
                    return Step::Moved;
                }
            }
        }
        let (t, v) = probes.iter().copied().fold(probes[0], |m, p| if p.1 > m.1 { p } else { m });
        let here = f.plane.coords(&self.pos());
        if ((here.0 - t.0).hypot(here.1 - t.1) > EPS || v != self.value())
            && self.visit_ac(f, t.0, t.1, Kind::Gradient).is_none()
        {
            return Step::Exhausted;
        }
        Step::Moved
    }

    /// Iso-distance walks both ways around the plane origin.
    fn excursions(&mut self, f: &Frame, pair: (usize, usize), locked: bool) -> Excursion {
        let g = self.p.granularity;
        let home = self.pos();
        let (a0, c0) = f.plane.coords(&home);
        let f_ref = self.value();
        let rho = a0.hypot(c0);
        if rho < EPS {
            return Excursion::Done;
        }
        let theta0 = c0.atan2(a0);
        let dtheta = 2.0 * (g / (2.0 * rho)).min(1.0).asin();
        // lower altitude first
        let cos0 = theta0.cos();
        let first = if cos0 > 1e-12 { -1.0 } else { 1.0 };
        let mut swept = 0.0;
        for (k, sgn) in [first, -first].into_iter().enumerate() {
            if k == 1 && self.pos().distance(&home) > EPS && self.visit(home, Kind::Excursion).is_none() {
                return Excursion::Done;
            }
            let mut theta = theta0;
            while swept + dtheta <= std::f64::consts::TAU + EPS {
                theta += sgn * dtheta;
                let (a, c) = (rho * theta.cos(), rho * theta.sin());
                if !f.allowed(a, c) {
                    break;
                }
                swept += dtheta;
                let Some(v) = self.visit_ac(f, a, c, Kind::Excursion) else { return Excursion::Done };
                if v > f_ref + IMPROVE_DB {
                    return Excursion::Improved;
                }
                if !locked && self.farthest_pair(&self.pos()) != pair {
                    return Excursion::PairChanged;
                }
                let inward = 1.0 - g / rho;
                if inward > 0.0 {
                    if let Some(t) = f.clamp(a * inward, c * inward) {
                        if f.allowed(t.0, t.1) && (t.0 - a).hypot(t.1 - c) > EPS {
                            let Some(v) = self.visit_ac(f, t.0, t.1, Kind::Inward) else { return Excursion::Done };
                            if v > f_ref + IMPROVE_DB {
                                return Excursion::Improved;
                            }
                        }
                    }
                }
            }
        }
        Excursion::Done
    }
}

enum Step {
    Moved,
    Stalled,
    Exhausted,
}

enum Excursion {
    Improved,
    PairChanged,
    Done,
}
