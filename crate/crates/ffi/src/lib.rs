//! C ABI over the uavterra core.
//!
//! Every fallible call returns a `UtStatus` and writes its result through an
//! out-pointer. `ut_last_error` returns the message of the most recent
//! failure on the calling thread. Handles are opaque and must be released
//! with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use uavterra::channel::{mean_snr_db, ChannelParams, LinkState};
use uavterra::error::Error;
use uavterra::los_model::{CurveFamily, LosCurveModel};
use uavterra::terrain::{generate_buildings, Building, BuildingSet, HeightDistribution, Point3, Region};

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UtStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidParameter = 2,
    Domain = 3,
    ResourceCap = 4,
    Config = 5,
    FitFailed = 6,
    Io = 7,
    Panic = 8,
}

/// Opaque building layout.
pub struct UtBuildings {
    inner: BuildingSet,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

/// Channel parameters in dBm / dB. Mirrors the core defaults via
/// `ut_channel_default`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtChannel {
    pub zeta: f64,
    pub eta_los: f64,
    pub eta_nlos: f64,
    pub alpha_los: f64,
    pub alpha_nlos: f64,
    pub m_los: f64,
    pub m_nlos: f64,
    pub sigma2: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UtLinkState {
    Los = 0,
    Nlos = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UtCurveFamily {
    Sigmoid = 0,
    Tanh = 1,
    ReLu = 2,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> UtStatus {
    match e {
        Error::Parameter(_) => UtStatus::InvalidParameter,
        Error::Domain(_) => UtStatus::Domain,
        Error::Resource { .. } => UtStatus::ResourceCap,
        Error::Config { .. } => UtStatus::Config,
        Error::Fit { .. } => UtStatus::FitFailed,
        Error::Io(_) => UtStatus::Io,
    }
}

/// Run `f`, record any error or panic, and map it to a status.
fn guard(f: impl FnOnce() -> Result<(), Error>) -> UtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => UtStatus::Ok,
        Ok(Err(e)) => {
            let s = status_of(&e);
            set_error(e.to_string());
            s
        }
        Err(_) => {
            set_error("internal panic".into());
            UtStatus::Panic
        }
    }
}

fn null(what: &str) -> UtStatus {
    set_error(format!("{what} is null"));
    UtStatus::NullPointer
}

impl From<UtChannel> for ChannelParams {
    fn from(c: UtChannel) -> Self {
        ChannelParams {
            zeta: c.zeta,
            eta_los: c.eta_los,
            eta_nlos: c.eta_nlos,
            alpha_los: c.alpha_los,
            alpha_nlos: c.alpha_nlos,
            m_los: c.m_los,
            m_nlos: c.m_nlos,
            sigma2: c.sigma2,
        }
    }
}

impl From<UtPoint> for Point3 {
    fn from(p: UtPoint) -> Self {
        Point3 { x: p.x, y: p.y, z: p.z }
    }
}

/// Message for the last failed call on this thread, or NULL. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ut_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

#[no_mangle]
pub extern "C" fn ut_channel_default() -> UtChannel {
    let d = ChannelParams::default();
    UtChannel {
        zeta: d.zeta,
        eta_los: d.eta_los,
        eta_nlos: d.eta_nlos,
        alpha_los: d.alpha_los,
        alpha_nlos: d.alpha_nlos,
        m_los: d.m_los,
        m_nlos: d.m_nlos,
        sigma2: d.sigma2,
    }
}

/// Mean SNR in dB of a link of length `distance` meters.
///
/// # Safety
/// `out` must be NULL or valid for one write.
#[no_mangle]
pub unsafe extern "C" fn ut_mean_snr_db(
    channel: UtChannel,
    distance: f64,
    state: UtLinkState,
    out: *mut f64,
) -> UtStatus {
    if out.is_null() {
        return null("out");
    }
    guard(|| {
        let cp = ChannelParams::from(channel);
        cp.validate()?;
        let q = match state {
            UtLinkState::Los => LinkState::Los,
            UtLinkState::Nlos => LinkState::Nlos,
        };
        *out = mean_snr_db(distance, q, &cp)?;
        Ok(())
    })
}

/// LoS probability of a fitted curve at elevation `theta_deg` degrees.
///
/// # Safety
/// `out` must be NULL or valid for one write.
#[no_mangle]
pub unsafe extern "C" fn ut_los_probability(
    family: UtCurveFamily,
    a: f64,
    b: f64,
    theta_deg: f64,
    out: *mut f64,
) -> UtStatus {
    if out.is_null() {
        return null("out");
    }
    guard(|| {
        if !(a.is_finite() && b.is_finite() && theta_deg.is_finite()) {
            return Err(Error::Parameter("a, b and theta must be finite".into()));
        }
        if !(0.0..=90.0).contains(&theta_deg) {
            return Err(Error::Domain(format!("elevation must lie in [0, 90], got {theta_deg}")));
        }
        let f = match family {
            UtCurveFamily::Sigmoid => CurveFamily::Sigmoid,
            UtCurveFamily::Tanh => CurveFamily::Tanh,
            UtCurveFamily::ReLu => CurveFamily::ReLu,
        };
        *out = LosCurveModel::new(f, a, b).probability(theta_deg);
        Ok(())
    })
}

/// Draw a Poisson building layout over `[0, side]^2` with log-normal heights.
///
/// # Safety
/// `out` must be NULL or valid for one write. On success `*out` owns a
/// handle to be released with `ut_buildings_free`.
#[no_mangle]
pub unsafe extern "C" fn ut_buildings_generate(
    side: f64,
    density_per_km2: f64,
    radius: f64,
    height_mu: f64,
    height_sigma: f64,
    seed: u64,
    out: *mut *mut UtBuildings,
) -> UtStatus {
    if out.is_null() {
        return null("out");
    }
    *out = ptr::null_mut();
    guard(|| {
        let region = Region::square(side)?;
        let heights = HeightDistribution::LogNormal { mu: height_mu, sigma: height_sigma };
        let inner = generate_buildings(region, density_per_km2, radius, heights, seed)?;
        *out = Box::into_raw(Box::new(UtBuildings { inner }));
        Ok(())
    })
}

/// Build a layout from explicit cylinders. `x`, `y`, `radius`, `height` are
/// arrays of length `n` (may be NULL when `n == 0`).
///
/// # Safety
/// Each non-NULL array must hold `n` readable values; `out` as above.
#[no_mangle]
pub unsafe extern "C" fn ut_buildings_from_arrays(
    side: f64,
    x: *const f64,
    y: *const f64,
    radius: *const f64,
    height: *const f64,
    n: usize,
    out: *mut *mut UtBuildings,
) -> UtStatus {
    if out.is_null() {
        return null("out");
    }
    *out = ptr::null_mut();
    if n > 0 && (x.is_null() || y.is_null() || radius.is_null() || height.is_null()) {
        return null("building array");
    }
    guard(|| {
        let region = Region::square(side)?;
        let bs = (0..n)
            .map(|i| Building::new(*x.add(i), *y.add(i), *radius.add(i), *height.add(i)))
            .collect::<Result<Vec<_>, _>>()?;
        let inner = BuildingSet::from_buildings(region, bs)?;
        *out = Box::into_raw(Box::new(UtBuildings { inner }));
        Ok(())
    })
}

/// # Safety
/// `h` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ut_buildings_free(h: *mut UtBuildings) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Number of buildings; 0 for NULL.
///
/// # Safety
/// `h` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ut_buildings_len(h: *const UtBuildings) -> usize {
    h.as_ref().map_or(0, |b| b.inner.len())
}

/// Copy building `i` into the out-pointers.
///
/// # Safety
/// `h` must be a live handle and every out-pointer valid for one write.
#[no_mangle]
pub unsafe extern "C" fn ut_buildings_get(
    h: *const UtBuildings,
    i: usize,
    x: *mut f64,
    y: *mut f64,
    radius: *mut f64,
    height: *mut f64,
) -> UtStatus {
    let Some(b) = h.as_ref() else { return null("handle") };
    if x.is_null() || y.is_null() || radius.is_null() || height.is_null() {
        return null("out");
    }
    guard(|| {
        let bd = b.inner.buildings().get(i).ok_or_else(|| Error::Domain(format!("index {i} out of range")))?;
        *x = bd.x;
        *y = bd.y;
        *radius = bd.radius;
        *height = bd.height;
        Ok(())
    })
}

/// Whether the segment `p`-`q` passes through a building. `*out` is 1 when
/// blocked and 0 otherwise.
///
/// # Safety
/// `h` must be a live handle and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn ut_segment_blocked(h: *const UtBuildings, p: UtPoint, q: UtPoint, out: *mut i32) -> UtStatus {
    let Some(b) = h.as_ref() else { return null("handle") };
    if out.is_null() {
        return null("out");
    }
    guard(|| {
        for v in [p.x, p.y, p.z, q.x, q.y, q.z] {
            if !v.is_finite() {
                return Err(Error::Parameter("segment endpoints must be finite".into()));
            }
        }
        *out = b.inner.segment_blocked(p.into(), q.into()) as i32;
        Ok(())
    })
}

/// Roof height at `(x, y)`, 0 on open ground.
///
/// # Safety
/// `h` must be a live handle and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn ut_height_at(h: *const UtBuildings, x: f64, y: f64, out: *mut f64) -> UtStatus {
    let Some(b) = h.as_ref() else { return null("handle") };
    if out.is_null() {
        return null("out");
    }
    guard(|| {
        if !(x.is_finite() && y.is_finite()) {
            return Err(Error::Parameter("coordinates must be finite".into()));
        }
        *out = b.inner.height_at(x, y);
        Ok(())
    })
}
