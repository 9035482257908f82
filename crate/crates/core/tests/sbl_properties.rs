use asvkit::geo::{Attitude, EnuPoint, GeoPoint, Pose};
use asvkit::sbl::{
    filter_track, geolocate, simulate_toa, solve_fix, AcousticNoiseModel, ReceiverArray, SblFix, SolverConfig, ToaOutcome,
    DEFAULT_SOUND_SPEED,
};
use nalgebra::{Rotation3, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn origin() -> GeoPoint {
    GeoPoint::new(43.0, 6.0, 0.0).unwrap()
}

fn random_case(rng: &mut ChaCha8Rng) -> (Pose, EnuPoint) {
    let attitude = Attitude::new(rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05), rng.random_range(0.0..std::f64::consts::TAU));
    let pose = Pose::new(0.0, EnuPoint::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0), 0.3), attitude);
    let range: f64 = rng.random_range(5.0..95.0);
    let depth: f64 = rng.random_range(1.0..range.min(30.0));
    let azimuth: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let horizontal = (range * range - depth * depth).sqrt();
    let beacon = EnuPoint::new(
        pose.position.east + horizontal * azimuth.sin(),
        pose.position.north + horizontal * azimuth.cos(),
        -depth,
    );
    (pose, beacon)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn median_error(noise: &AcousticNoiseModel, seed: u64, trials: usize) -> f64 {
    let array = ReceiverArray::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut errors = Vec::with_capacity(trials);
    while errors.len() < trials {
        let (pose, beacon) = random_case(&mut rng);
        let ToaOutcome::Received { toa, .. } = simulate_toa(beacon, &pose, &array, noise, DEFAULT_SOUND_SPEED, &mut rng).unwrap() else {
            continue;
        };
        let fix = solve_fix(&toa, &pose, &array, None, origin(), &SolverConfig::default()).unwrap();
        errors.push(fix.enu_position.distance(beacon));
    }
    median(errors)
}

#[test]
fn error_scales_linearly_with_range_noise() {
    let quiet = AcousticNoiseModel {
        range_fraction_sigma: 0.001,
        receiver_jitter_sigma: 0.0,
        ..AcousticNoiseModel::noise_free()
    };
    let loud = AcousticNoiseModel { range_fraction_sigma: 0.01, ..quiet };
    let ratio = median_error(&loud, 7, 2000) / median_error(&quiet, 7, 2000);
    assert!((8.0..12.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn surface_spikes_follow_configured_rate() {
    let noise = AcousticNoiseModel {
        surface_depth_threshold: 0.5,
        surface_spike_probability: 0.2,
        dropout_probability: 0.0,
        ..AcousticNoiseModel::default()
    };
    let array = ReceiverArray::default();
    let pose = Pose::new(0.0, EnuPoint::new(0.0, 0.0, 0.3), Attitude::level(0.0));
    let beacon = EnuPoint::new(10.0, 5.0, -0.4);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let draws = 10_000;
    let spikes = (0..draws)
        .filter(|_| matches!(simulate_toa(beacon, &pose, &array, &noise, DEFAULT_SOUND_SPEED, &mut rng).unwrap(), ToaOutcome::Received { spiked: true, .. }))
        .count() as f64;
    let expected = draws as f64 * noise.surface_spike_probability;
    let expected_clean = draws as f64 - expected;
    let chi2 = (spikes - expected).powi(2) / expected + (spikes - expected).powi(2) / expected_clean;
    // 1 degree of freedom, p = 0.001
    assert!(chi2 < 10.83, "chi2 {chi2} with {spikes} spikes");
}

#[test]
fn deep_beacons_never_spike() {
    let noise = AcousticNoiseModel { surface_spike_probability: 1.0, ..AcousticNoiseModel::default() };
    let array = ReceiverArray::default();
    let pose = Pose::new(0.0, EnuPoint::new(0.0, 0.0, 0.3), Attitude::level(0.0));
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..500 {
        let outcome = simulate_toa(EnuPoint::new(3.0, 4.0, -5.0), &pose, &array, &noise, DEFAULT_SOUND_SPEED, &mut rng).unwrap();
        assert!(!matches!(outcome, ToaOutcome::Received { spiked: true, .. }));
    }
}

#[test]
fn identical_seeds_give_identical_arrivals() {
    let array = ReceiverArray::default();
    let pose = Pose::new(0.0, EnuPoint::new(1.0, 2.0, 0.3), Attitude::new(0.02, -0.01, 1.0));
    let beacon = EnuPoint::new(30.0, -20.0, -6.0);
    let noise = AcousticNoiseModel::default();
    let run = |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..50)
            .map(|_| simulate_toa(beacon, &pose, &array, &noise, DEFAULT_SOUND_SPEED, &mut rng).unwrap())
            .collect::<Vec<_>>()
    };
    assert_eq!(run(5), run(5));
    assert_ne!(run(5), run(6));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn fix_is_invariant_under_yaw_counter_rotation(
        yaw in 0.0..std::f64::consts::TAU,
        turn in -3.0..3.0f64,
        east in 5.0..60.0f64,
        north in -60.0..60.0f64,
        depth in 2.0..30.0f64,
    ) {
        let array = ReceiverArray::default();
        let beacon = EnuPoint::new(east, north, -depth);
        let pose = Pose::new(0.0, EnuPoint::new(0.0, 0.0, 0.3), Attitude::new(0.0, 0.0, yaw));
        let turned = Pose::new(0.0, pose.position, Attitude::new(0.0, 0.0, yaw + turn));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let noise = AcousticNoiseModel::noise_free();
        let solve = |p: &Pose, rng: &mut ChaCha8Rng| {
            let toa = *simulate_toa(beacon, p, &array, &noise, DEFAULT_SOUND_SPEED, rng).unwrap().toa().unwrap();
            solve_fix(&toa, p, &array, None, origin(), &SolverConfig::default()).unwrap()
        };
        let a = solve(&pose, &mut rng);
        let b = solve(&turned, &mut rng);
        prop_assert!(a.valid && b.valid);
        prop_assert!(a.enu_position.distance(b.enu_position) < 1e-6);
        // Body z is down, so a positive yaw turns body-frame vectors by -turn about z.
        let counter = Rotation3::from_axis_angle(&Vector3::z_axis(), -turn) * a.rel_position;
        prop_assert!((counter - b.rel_position).norm() < 1e-6);
        let (enu, _) = geolocate(&counter, &turned, origin()).unwrap();
        prop_assert!(enu.distance(a.enu_position) < 1e-6);
    }

    #[test]
    fn filtered_track_never_hides_noisy_fixes(
        stds in prop::collection::vec(0.0..8.0f64, 2..60),
        invalid in prop::collection::vec(any::<bool>(), 60),
        threshold in 0.5..5.0f64,
    ) {
        let fixes: Vec<SblFix> = stds
            .iter()
            .enumerate()
            .map(|(i, &std)| {
                let enu = EnuPoint::new(i as f64, 0.0, -2.0);
                SblFix {
                    timestamp: i as f64,
                    rel_position: enu.to_vector(),
                    enu_position: enu,
                    geo_position: origin(),
                    std,
                    valid: !invalid[i],
                    interpolated: false,
                }
            })
            .collect();
        let good = fixes.iter().filter(|f| f.valid && f.std <= threshold).count();
        match filter_track(&fixes, threshold) {
            Ok(out) => {
                prop_assert!(good >= 2);
                prop_assert_eq!(out.len(), fixes.len());
                for (o, f) in out.iter().zip(&fixes) {
                    prop_assert_eq!(o.timestamp, f.timestamp);
                    prop_assert!(o.std <= threshold);
                    prop_assert!(o.valid);
                    if !o.interpolated {
                        prop_assert_eq!(o, f);
                    }
                }
            }
            Err(_) => prop_assert!(good < 2),
        }
    }
}
