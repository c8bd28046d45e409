use std::ffi::CStr;
use std::ptr;

use uavterra_ffi::*;

fn last_error() -> String {
    let p = ut_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn spot_received_power_through_snr() {
    let ch = ut_channel_default();
    let mut snr = f64::NAN;
    unsafe {
        assert_eq!(ut_mean_snr_db(ch, 100.0, UtLinkState::Los, &mut snr), UtStatus::Ok);
        assert!((snr + ch.sigma2 - -45.0).abs() < 1e-9, "{snr}");
        assert_eq!(ut_mean_snr_db(ch, 100.0, UtLinkState::Nlos, &mut snr), UtStatus::Ok);
        assert!((snr + ch.sigma2 - -64.0).abs() < 1e-9, "{snr}");
    }
}

#[test]
fn bad_distance_is_domain_error() {
    let mut snr = 0.0;
    let s = unsafe { ut_mean_snr_db(ut_channel_default(), -1.0, UtLinkState::Los, &mut snr) };
    assert_eq!(s, UtStatus::Domain);
    assert!(last_error().contains("distance"));
}

#[test]
fn invalid_channel_is_rejected() {
    let mut ch = ut_channel_default();
    ch.m_los = 0.0;
    let mut snr = 0.0;
    let s = unsafe { ut_mean_snr_db(ch, 10.0, UtLinkState::Los, &mut snr) };
    assert_eq!(s, UtStatus::Config);
    assert!(last_error().contains("m_los"));
}

#[test]
fn null_out_pointer() {
    let s = unsafe { ut_mean_snr_db(ut_channel_default(), 10.0, UtLinkState::Los, ptr::null_mut()) };
    assert_eq!(s, UtStatus::NullPointer);
    assert_eq!(unsafe { ut_buildings_len(ptr::null()) }, 0);
    unsafe { ut_buildings_free(ptr::null_mut()) };
}

#[test]
fn los_probability_matches_reference_curve() {
    let mut p = 0.0;
    unsafe {
        assert_eq!(ut_los_probability(UtCurveFamily::Sigmoid, 2.824, 0.0628, 90.0, &mut p), UtStatus::Ok);
    }
    assert!(p > 0.95 && p <= 1.0, "{p}");
    let s = unsafe { ut_los_probability(UtCurveFamily::Sigmoid, 2.824, 0.0628, 120.0, &mut p) };
    assert_eq!(s, UtStatus::Domain);
}

#[test]
fn explicit_building_blocks_and_reports_height() {
    let (x, y, r, h) = ([50.0], [50.0], [5.0], [30.0]);
    let mut hd = ptr::null_mut();
    unsafe {
        assert_eq!(
            ut_buildings_from_arrays(100.0, x.as_ptr(), y.as_ptr(), r.as_ptr(), h.as_ptr(), 1, &mut hd),
            UtStatus::Ok
        );
        assert_eq!(ut_buildings_len(hd), 1);
        let mut blocked = -1;
        let low_a = UtPoint { x: 10.0, y: 50.0, z: 10.0 };
        let low_b = UtPoint { x: 90.0, y: 50.0, z: 10.0 };
        assert_eq!(ut_segment_blocked(hd, low_a, low_b, &mut blocked), UtStatus::Ok);
        assert_eq!(blocked, 1);
        let high_a = UtPoint { z: 40.0, ..low_a };
        let high_b = UtPoint { z: 40.0, ..low_b };
        assert_eq!(ut_segment_blocked(hd, high_a, high_b, &mut blocked), UtStatus::Ok);
        assert_eq!(blocked, 0);
        let mut z = 0.0;
        assert_eq!(ut_height_at(hd, 52.0, 50.0, &mut z), UtStatus::Ok);
        assert_eq!(z, 30.0);
        assert_eq!(ut_height_at(hd, 5.0, 5.0, &mut z), UtStatus::Ok);
        assert_eq!(z, 0.0);
        let (mut bx, mut by, mut br, mut bh) = (0.0, 0.0, 0.0, 0.0);
        assert_eq!(ut_buildings_get(hd, 0, &mut bx, &mut by, &mut br, &mut bh), UtStatus::Ok);
        assert_eq!((bx, by, br, bh), (50.0, 50.0, 5.0, 30.0));
        assert_eq!(ut_buildings_get(hd, 1, &mut bx, &mut by, &mut br, &mut bh), UtStatus::Domain);
        ut_buildings_free(hd);
    }
}

#[test]
fn generation_is_seeded() {
    let gen = |seed| {
        let mut h = ptr::null_mut();
        unsafe {
            assert_eq!(ut_buildings_generate(500.0, 300.0, 8.0, 3.0, 0.5, seed, &mut h), UtStatus::Ok);
            let n = ut_buildings_len(h);
            let mut first = [0.0; 4];
            let [a, b, c, d] = &mut first;
            if n > 0 {
                ut_buildings_get(h, 0, a, b, c, d);
            }
            ut_buildings_free(h);
            (n, first)
        }
    };
    assert_eq!(gen(7), gen(7));
    assert_ne!(gen(7), gen(8));
}

#[test]
fn negative_density_is_parameter_error() {
    let mut h = ptr::null_mut();
    let s = unsafe { ut_buildings_generate(500.0, -1.0, 8.0, 3.0, 0.5, 1, &mut h) };
    assert_eq!(s, UtStatus::InvalidParameter);
    assert!(h.is_null());
    assert!(last_error().contains("density"));
}

#[test]
fn header_declares_every_export() {
    let header = include_str!("../include/uavterra.h");
    for sym in [
        "ut_last_error",
        "ut_channel_default",
        "ut_mean_snr_db",
        "ut_los_probability",
        "ut_buildings_generate",
        "ut_buildings_from_arrays",
        "ut_buildings_free",
        "ut_buildings_len",
        "ut_buildings_get",
        "ut_segment_blocked",
        "ut_height_at",
        "typedef struct UtBuildings UtBuildings",
        "UT_STATUS_RESOURCE_CAP = 4",
    ] {
        assert!(header.contains(sym), "missing {sym}");
    }
}

#[test]
fn header_compiles_as_c() {
    let Ok(cc) = std::process::Command::new("cc").arg("--version").output() else {
        eprintln!("no C compiler, skipping");
        return;
    };
    assert!(cc.status.success());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"uavterra.h\"\n\
         int f(void) { UtChannel c = ut_channel_default(); double s; UtBuildings *h = 0;\n\
         UtStatus st = ut_mean_snr_db(c, 10.0, UT_LINK_STATE_LOS, &s); ut_buildings_free(h);\n\
         return st == UT_STATUS_OK ? 0 : 1; }\n",
    )
    .unwrap();
    let out = std::process::Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/include"))
        .arg(&src)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
