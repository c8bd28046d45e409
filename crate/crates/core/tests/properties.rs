use proptest::prelude::*;

use uavterra::channel::{mean_snr_db, sinr, ChannelParams, LinkState};
use uavterra::coverage::{coverage_probability, CoverageConfig, Deployment, DeploymentSpec, TerrainResolver, UserSpec};
use uavterra::harness::{parse_config_str, ExperimentConfig};
use uavterra::los_model::{curve_mse, fit_points, CurveFamily, FitOptions};
use uavterra::reconstruct::{carve_links, ClassifiedLink, HeightField};
use uavterra::rng::SeedStream;
use uavterra::search::{relay_scene, relay_search, RelaySceneConfig};
use uavterra::terrain::{shadow_mask, Building, BuildingSet, HeightDistribution, Point3, Region, DEFAULT_CELL_CAP};

fn region() -> Region {
    Region::square(200.0).unwrap()
}

fn building() -> impl Strategy<Value = Building> {
    (10.0..190.0f64, 10.0..190.0f64, 2.0..12.0f64, 3.0..60.0f64)
        .prop_map(|(x, y, r, h)| Building::new(x, y, r, h).unwrap())
}

fn scene() -> impl Strategy<Value = BuildingSet> {
    prop::collection::vec(building(), 0..12).prop_map(|bs| BuildingSet::from_buildings(region(), bs).unwrap())
}

fn point() -> impl Strategy<Value = Point3> {
    (0.0..200.0f64, 0.0..200.0f64, 0.0..100.0f64).prop_map(|(x, y, z)| Point3::new(x, y, z))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn blockage_is_symmetric(b in scene(), p in point(), q in point()) {
        prop_assert_eq!(b.segment_blocked(p, q), b.segment_blocked(q, p));
    }

    #[test]
    fn indexed_and_linear_blockage_agree(b in scene(), p in point(), q in point()) {
        prop_assert_eq!(b.segment_blocked(p, q), b.segment_blocked_linear(p, q));
    }

    #[test]
    fn segment_above_every_roof_is_clear(b in scene(), p in point(), q in point()) {
        let top = b.buildings().iter().map(|c| c.height).fold(0.0, f64::max) + 1e-6;
        prop_assert!(!b.segment_blocked(p.with_z(p.z + top), q.with_z(q.z + top)));
    }

    #[test]
    fn snr_falls_with_distance(d in 1.0..5000.0f64, k in 1.001..10.0f64, los in any::<bool>()) {
        let q = if los { LinkState::Los } else { LinkState::Nlos };
        let cp = ChannelParams::default();
        prop_assert!(mean_snr_db(d * k, q, &cp).unwrap() < mean_snr_db(d, q, &cp).unwrap());
    }

    #[test]
    fn sinr_is_monotone(
        s in 1e-12..1e-3f64,
        gain in 1.0..100.0f64,
        inter in prop::collection::vec(1e-12..1e-3f64, 0..6),
        extra in 1e-12..1e-3f64,
    ) {
        let cp = ChannelParams::default();
        let base = sinr(s, &inter, &cp).unwrap();
        prop_assert!(sinr(s * gain, &inter, &cp).unwrap() >= base);
        let mut more = inter.clone();
        more.push(extra);
        prop_assert!(sinr(s, &more, &cp).unwrap() <= base);
    }

    #[test]
    fn height_quantile_is_monotone(p1 in 0.001..0.999f64, p2 in 0.001..0.999f64, mu in 1.0..4.0f64, sigma in 0.1..1.0f64) {
        let h = HeightDistribution::LogNormal { mu, sigma };
        let (lo, hi) = if p1 <= p2 { (p1, p2) } else { (p2, p1) };
        prop_assert!(h.quantile(lo) <= h.quantile(hi));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn shadow_mask_matches_pointwise_blockage(b in scene(), uav in point(), plane_z in 0.0..20.0f64) {
        let m = shadow_mask(uav.with_z(uav.z + 20.0), plane_z, 10.0, &b, &region(), DEFAULT_CELL_CAP).unwrap();
        for j in 0..20 {
            for i in 0..20 {
                let (x, y) = m.center(i, j);
                prop_assert_eq!(m.get(i, j), b.segment_blocked(uav.with_z(uav.z + 20.0), Point3::new(x, y, plane_z)));
            }
        }
    }

    #[test]
    fn fitted_curve_beats_random_parameters(
        a in 1.0..6.0f64,
        k in 0.02..0.2f64,
        noise in prop::collection::vec(-0.03..0.03f64, 90),
        probe_a in 0.5..8.0f64,
        probe_b in 0.01..0.3f64,
    ) {
        let pts: Vec<(f64, f64)> = (0..90)
            .map(|i| {
                let t = i as f64 + 0.5;
                (t, (CurveFamily::Sigmoid.eval(t, a, k) + noise[i]).clamp(0.0, 1.0))
            })
            .collect();
        let fit = fit_points(&pts, CurveFamily::Sigmoid, &FitOptions { starts: 30, ..FitOptions::default() }).unwrap();
        prop_assert!(fit.mse <= curve_mse(&pts, CurveFamily::Sigmoid, probe_a, probe_b) + 1e-12);
        prop_assert!(fit.mse <= curve_mse(&pts, CurveFamily::Sigmoid, a, k) + 1e-9);
    }

    #[test]
    fn coverage_falls_with_threshold(b in scene(), uavs in prop::collection::vec(point(), 1..4), seed in any::<u64>()) {
        let users: Vec<Point3> = (0..8).map(|i| Point3::new(20.0 + 20.0 * i as f64, 100.0, 0.0)).collect();
        let dep = Deployment::fixed(uavs.iter().map(|u| u.with_z(u.z + 10.0)).collect());
        let res = coverage_probability(
            &UserSpec::Explicit(users),
            &DeploymentSpec::Fixed(dep),
            &TerrainResolver(&b),
            &ChannelParams::default(),
            &[-10.0, 0.0, 5.0, 20.0, 40.0],
            &CoverageConfig { user_height: 0.0, trials: 50 },
            &SeedStream::new(seed, "prop"),
        )
        .unwrap();
        for w in res.windows(2) {
            prop_assert!(w[1].mean_coverage <= w[0].mean_coverage);
        }
    }

    #[test]
    fn carving_only_tightens(
        links in prop::collection::vec((point(), point(), any::<bool>()), 1..40),
        extra in prop::collection::vec((point(), point()), 1..10),
    ) {
        let grid = HeightField::new(region(), 10.0).unwrap();
        let mk = |(a, b, los): &(Point3, Point3, bool)| ClassifiedLink {
            a: *a,
            b: *b,
            state: if *los { LinkState::Los } else { LinkState::Nlos },
        };
        let first: Vec<ClassifiedLink> = links.iter().map(mk).collect();
        let (hf, _) = carve_links(&first, &grid);
        let mut more = first.clone();
        more.extend(extra.iter().map(|(a, b)| ClassifiedLink { a: *a, b: *b, state: LinkState::Los }));
        let (hf2, _) = carve_links(&more, &grid);
        let (nx, ny) = hf.dims();
        for j in 0..ny {
            for i in 0..nx {
                let (lo, up) = hf.bounds(i, j);
                let (lo2, up2) = hf2.bounds(i, j);
                prop_assert!(lo >= 0.0 && up2 <= up, "cell ({i},{j}) upper {up} -> {up2}");
                prop_assert!(lo2 <= up2 + 1e-12 || lo2 == up2);
            }
        }
    }

    #[test]
    fn los_only_carving_ignores_order(
        links in prop::collection::vec((point(), point()), 1..40),
        seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        let grid = HeightField::new(region(), 10.0).unwrap();
        let ls: Vec<ClassifiedLink> = links.iter().map(|(a, b)| ClassifiedLink { a: *a, b: *b, state: LinkState::Los }).collect();
        let mut shuffled = ls.clone();
        shuffled.shuffle(&mut uavterra::rng::rng_from_seed(seed));
        let (h1, s1) = carve_links(&ls, &grid);
        let (h2, s2) = carve_links(&shuffled, &grid);
        prop_assert_eq!(s1, s2);
        let (nx, ny) = h1.dims();
        for j in 0..ny {
            for i in 0..nx {
                prop_assert_eq!(h1.bounds(i, j), h2.bounds(i, j));
            }
        }
    }

    #[test]
    fn config_round_trips(density in 0.0..2000.0f64, seed in any::<u64>(), trials in 1u64..100_000) {
        let mut cfg = ExperimentConfig::default();
        cfg.buildings.density = density;
        cfg.master_seed = seed;
        cfg.coverage.trials = trials;
        let back = parse_config_str(&cfg.to_toml().unwrap(), &[]).unwrap();
        prop_assert_eq!(back, cfg);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn relay_trace_respects_budget_and_prefix_best(seed in any::<u64>(), budget in 50.0..600.0f64) {
        let cfg = RelaySceneConfig { budget, ..RelaySceneConfig::default() };
        let sc = relay_scene(&cfg, &ChannelParams::default(), &SeedStream::new(seed, "prop_relay")).unwrap();
        let t = relay_search(&sc.problem, &sc.buildings, sc.start, &mut SeedStream::new(seed, "prop_search").rng(0)).unwrap();
        prop_assert!(t.path_length <= budget + sc.problem.granularity);
        let pb = t.prefix_best();
        prop_assert!(pb.windows(2).all(|w| w[1] >= w[0]));
        prop_assert_eq!(*pb.last().unwrap(), t.best().min_snr_db);
        for p in &t.probes {
            prop_assert!(sc.problem.allowed.contains(&p.position));
        }
    }
}
