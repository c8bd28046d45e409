//! Independent checks against closed forms and brute-force references.

use rand::Rng;
use uavterra::channel::{dbm_to_mw, mean_received_power, ChannelParams, Fading, LinkState};
use uavterra::coverage::{coverage_probability, CoverageConfig, Deployment, DeploymentSpec, TerrainResolver, UserSpec};
use uavterra::rng::{rng_from_seed, SeedStream};
use uavterra::terrain::{
    generate_buildings, terrain_features, Building, BuildingSet, HeightDistribution, Point3, Region,
};

#[test]
fn blockage_matches_dense_sampling_away_from_grazing() {
    let mut rng = rng_from_seed(77);
    let region = Region::square(100.0).unwrap();
    let mut checked = 0;
    for _ in 0..2000 {
        let bs: Vec<Building> = (0..rng.random_range(1..5))
            .map(|_| {
                Building::new(
                    rng.random_range(20.0..80.0),
                    rng.random_range(20.0..80.0),
                    5.0,
                    rng.random_range(5.0..40.0),
                )
                .unwrap()
            })
            .collect();
        let set = BuildingSet::from_buildings(region, bs.clone()).unwrap();
        let p = Point3::new(rng.random_range(0.0..100.0), rng.random_range(0.0..100.0), rng.random_range(0.0..50.0));
        let q = Point3::new(rng.random_range(0.0..100.0), rng.random_range(0.0..100.0), rng.random_range(0.0..50.0));
        // Shrunk and grown copies bracket the boundary; skip cases where they disagree.
        let inside = |x: &Point3, c: &Building, pad: f64| {
            (x.x - c.x).hypot(x.y - c.y) <= c.radius + pad && x.z <= c.height + pad
        };
        let sampled = |pad: f64| {
            (0..=20_000).any(|k| {
                let x = p.lerp(&q, k as f64 / 20_000.0);
                bs.iter().any(|c| inside(&x, c, pad))
            })
        };
        let (shrunk, grown) = (sampled(-0.05), sampled(0.05));
        if shrunk != grown {
            continue;
        }
        checked += 1;
        assert_eq!(set.segment_blocked(p, q), shrunk, "p {p:?} q {q:?} buildings {bs:?}");
    }
    assert!(checked > 1900);
}

/// Kolmogorov-Smirnov distance of `xs` against `cdf`.
fn ks(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn unit_shape_fading_is_exponential() {
    let cp = ChannelParams::default();
    let f = Fading::new(&cp);
    let mut rng = rng_from_seed(5);
    let xs: Vec<f64> = (0..20_000).map(|_| f.sample(LinkState::Los, &mut rng)).collect();
    // 1 % critical value 1.63 / sqrt(n)
    let d = ks(xs, |x| 1.0 - (-x).exp());
    assert!(d < 1.63 / (20_000f64).sqrt(), "KS distance {d}");
}

#[test]
fn shape_two_fading_matches_gamma_cdf() {
    let cp = ChannelParams::default();
    let f = Fading::new(&cp);
    let mut rng = rng_from_seed(6);
    let xs: Vec<f64> = (0..20_000).map(|_| f.sample(LinkState::Nlos, &mut rng)).collect();
    // Gamma(2, 1/2): F(x) = 1 - (1 + 2x) e^{-2x}
    let d = ks(xs, |x| 1.0 - (1.0 + 2.0 * x) * (-2.0 * x).exp());
    assert!(d < 1.63 / (20_000f64).sqrt(), "KS distance {d}");
}

#[test]
fn building_count_is_poisson() {
    let region = Region::square(500.0).unwrap();
    let counts: Vec<f64> = (0..400)
        .map(|s| generate_buildings(region, 200.0, 5.0, HeightDistribution::default(), s).unwrap().len() as f64)
        .collect();
    let n = counts.len() as f64;
    let mean = counts.iter().sum::<f64>() / n;
    let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0);
    // expected 50; standard error of the mean ~0.35
    assert!((mean - 50.0).abs() < 1.5, "mean {mean}");
    assert!((var / mean - 1.0).abs() < 0.25, "dispersion {}", var / mean);
}

#[test]
fn lognormal_heights_have_the_right_mean() {
    let region = Region::square(1000.0).unwrap();
    let b = generate_buildings(region, 2000.0, 3.0, HeightDistribution::LogNormal { mu: 3.0, sigma: 0.4 }, 3).unwrap();
    let hs: Vec<f64> = b.buildings().iter().map(|c| c.height).collect();
    let mean = hs.iter().sum::<f64>() / hs.len() as f64;
    let expect = (3.0f64 + 0.08).exp();
    assert!((mean - expect).abs() / expect < 0.02, "mean {mean} expected {expect}");
    let log_mean = hs.iter().map(|h| h.ln()).sum::<f64>() / hs.len() as f64;
    assert!((log_mean - 3.0).abs() < 0.02);
}

#[test]
fn footprint_ratio_matches_boolean_model() {
    let region = Region::square(1000.0).unwrap();
    let b = generate_buildings(region, 500.0, 8.0, HeightDistribution::default(), 9).unwrap();
    // discs near the edge are clipped, hence the loose band
    let f = terrain_features(&b, 1.0).unwrap();
    let expect = 1.0 - (-500e-6 * std::f64::consts::PI * 64.0).exp();
    assert!((f.kappa - expect).abs() < 0.02, "kappa {} expected {expect}", f.kappa);
}

#[test]
fn single_link_coverage_has_exponential_tail() {
    let region = Region::square(200.0).unwrap();
    let b = BuildingSet::empty(region);
    let cp = ChannelParams::default();
    let user = Point3::new(100.0, 100.0, 0.0);
    let uav = Point3::new(100.0, 100.0, 500.0);
    let snr = dbm_to_mw(mean_received_power(500.0, LinkState::Los, &cp).unwrap()) / cp.noise_mw();
    let thresholds = [30.0, 35.0, 38.0];
    let trials = 40_000;
    let res = coverage_probability(
        &UserSpec::Explicit(vec![user]),
        &DeploymentSpec::Fixed(Deployment::fixed(vec![uav])),
        &TerrainResolver(&b),
        &cp,
        &thresholds,
        &CoverageConfig { user_height: 0.0, trials },
        &SeedStream::new(4, "tail"),
    )
    .unwrap();
    for (r, th) in res.iter().zip(thresholds) {
        let expect = (-dbm_to_mw(th) / snr).exp();
        let se = (expect * (1.0 - expect) / trials as f64).sqrt();
        assert!((r.mean_coverage - expect).abs() < 4.0 * se, "threshold {th}: {} vs {expect}", r.mean_coverage);
    }
}
