use asvkit::bathy::{
    attitude_filter, georeference, grid, median_filter, process_log, triangulate, Band, BathyConfig, DepthPoint, GridMethod,
    QualityFlags, Sample, VerticalReference,
};
use asvkit::geo::{Attitude, EnuPoint, GeoPoint, LeverArm, Pose};
use asvkit::logfmt::LogRecord;
use asvkit::mission::{plan_lawnmower, SurveyArea};
use asvkit::sim::{run_survey, BatteryModel, RockScatter, SeabedModel, SensorNoise, SurveyRun, VehicleModel, WaveModel};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn origin() -> GeoPoint {
    GeoPoint::new(-21.08, 55.22, 0.0).unwrap()
}

fn point(e: f64, n: f64, d: f64) -> DepthPoint {
    DepthPoint {
        timestamp: 0.0,
        ground_position: EnuPoint::new(e, n, -d),
        corrected_depth: d,
        quality_flags: QualityFlags::NONE,
    }
}

fn survey(width: f64, length: f64, seabed: &SeabedModel, waves: &WaveModel, noise: &SensorNoise, arm: LeverArm, seed: u64) -> SurveyRun {
    let area = SurveyArea::new(origin(), width, length, 0.0).unwrap();
    let plan = plan_lawnmower(&area, 2.0, 1.0, 2.0).unwrap();
    run_survey(&plan, &VehicleModel::default(), seabed, waves, &BatteryModel::default(), &arm, noise, seed).unwrap()
}

fn dpth_times(run: &SurveyRun) -> Vec<f64> {
    run.log
        .records
        .iter()
        .filter_map(|r| match r {
            LogRecord::Dpth(d) => Some(d.t.seconds()),
            _ => None,
        })
        .collect()
}

/// Points on the convex hull boundary, collinear ones included.
fn hull_size(pts: &[[f64; 2]]) -> usize {
    let mut p = pts.to_vec();
    p.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    let mut hull: Vec<[f64; 2]> = Vec::new();
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[f64; 2]>> = if pass == 0 { Box::new(p.iter()) } else { Box::new(p.iter().rev()) };
        for &q in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], q) < 0.0 {
                hull.pop();
            }
            hull.push(q);
        }
        hull.pop();
    }
    hull.len()
}

#[test]
fn delaunay_matches_brute_force_and_covers_the_hull() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for n in [3usize, 4, 10, 57, 200, 500] {
        let pts: Vec<DepthPoint> = (0..n)
            .map(|_| point(rng.random_range(-50.0..50.0), rng.random_range(-20.0..20.0), rng.random_range(1.0..9.0)))
            .collect();
        let tin = triangulate(&pts).unwrap();
        let xy: Vec<[f64; 2]> = tin.vertices.iter().map(|v| [v.ground_position.east, v.ground_position.north]).collect();
        for t in &tin.triangles {
            let [a, b, c] = t.map(|i| xy[i]);
            let area = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
            assert!(area > 0.0);
            let d = 2.0 * (a[0] * (b[1] - c[1]) + b[0] * (c[1] - a[1]) + c[0] * (a[1] - b[1]));
            let sq = |p: [f64; 2]| p[0] * p[0] + p[1] * p[1];
            let ux = (sq(a) * (b[1] - c[1]) + sq(b) * (c[1] - a[1]) + sq(c) * (a[1] - b[1])) / d;
            let uy = (sq(a) * (c[0] - b[0]) + sq(b) * (a[0] - c[0]) + sq(c) * (b[0] - a[0])) / d;
            let r = (a[0] - ux).hypot(a[1] - uy);
            for (k, q) in xy.iter().enumerate() {
                if t.contains(&k) {
                    continue;
                }
                assert!((q[0] - ux).hypot(q[1] - uy) >= r - 1e-9 * r.max(1.0), "point {k} inside circumcircle of {t:?}");
            }
        }
        // Euler: a full triangulation of n points with b on the hull has 2n - 2 - b triangles.
        assert_eq!(tin.triangles.len(), 2 * n - 2 - hull_size(&xy), "n = {n}");
    }
}

#[test]
fn grid_lattice_triangulates_without_slivers() {
    let pts: Vec<DepthPoint> = (0..15).flat_map(|i| (0..12).map(move |j| point(i as f64 * 0.5, j as f64 * 0.5, 3.0))).collect();
    let tin = triangulate(&pts).unwrap();
    // Cocircular squares may split either way, but every cell splits once.
    assert_eq!(tin.triangles.len(), 2 * 14 * 11);
}

#[test]
fn zero_noise_level_survey_passes_through_unchanged() {
    let seabed = SeabedModel::slope(5.0, 0.02, -0.01);
    // Sounder exactly at the waterline below the antenna.
    let arm = LeverArm::new(0.0, 0.0, VehicleModel::default().antenna_height).unwrap();
    let run = survey(10.0, 30.0, &seabed, &WaveModel::calm(), &SensorNoise::noise_free(), arm, 3);
    let product = process_log(&run.log, &BathyConfig::default()).unwrap();
    let raw: Vec<f64> = run
        .log
        .records
        .iter()
        .filter_map(|r| match r {
            LogRecord::Dpth(d) => Some(d.raw_depth),
            _ => None,
        })
        .collect();
    assert_eq!(product.unplaced, 0);
    assert_eq!(product.points.len(), raw.len());
    for (p, (r, truth)) in product.points.iter().zip(raw.iter().zip(&run.truth.ground_points)) {
        assert!(p.quality_flags.is_empty());
        assert!((p.corrected_depth - r).abs() < 1e-3, "{} vs {r}", p.corrected_depth);
        // Soundings between 5 Hz GPS fixes get a linearly interpolated position.
        assert!(p.ground_position.distance(*truth) < 1e-2, "{:?} vs {truth:?}", p.ground_position);
    }
}

#[test]
fn flat_survey_cells_agree_within_their_standard_error() {
    let noise = SensorNoise {
        depth_spike_probability: 0.0,
        ..SensorNoise::default()
    };
    let run = survey(10.0, 30.0, &SeabedModel::plane(5.0), &WaveModel::calm(), &noise, LeverArm::new(0.0, 0.0, 0.4).unwrap(), 12);
    let product = process_log(&run.log, &BathyConfig::default()).unwrap();
    // Per-sounding noise: sounder and GPS height in quadrature.
    let sigma = ((0.02f64 + 0.001 * 4.9).powi(2) + 0.03f64.powi(2)).sqrt();
    let mut worst: f64 = 0.0;
    for (_, _, c) in product.grid.populated() {
        let z = (c.depth - 5.0) / (sigma / (c.count as f64).sqrt());
        worst = worst.max(z.abs());
    }
    // Largest of a few hundred standard normals.
    assert!(worst < 4.5, "worst cell {worst} standard errors off");
}

#[test]
fn europa_grid_shows_every_transect() {
    let area = SurveyArea::new(origin(), 49.0, 115.0, 0.0).unwrap();
    let plan = plan_lawnmower(&area, 2.0, 1.0, 2.0).unwrap();
    let run = run_survey(
        &plan,
        &VehicleModel::default(),
        &SeabedModel::slope(4.0, 0.0, 0.02),
        &WaveModel::default(),
        &BatteryModel::default(),
        &LeverArm::new(0.0, 0.0, 0.4).unwrap(),
        &SensorNoise::default(),
        42,
    )
    .unwrap();
    let product = process_log(&run.log, &BathyConfig::default()).unwrap();
    let g = &product.grid;
    let mut per_col = vec![0usize; g.cols];
    for (_, col, _) in g.populated() {
        per_col[col] += 1;
    }
    // Columns that carry a line: a transect fills most of the 230 rows.
    let dense: Vec<f64> = (0..g.cols).filter(|&c| per_col[c] > 60).map(|c| g.cell_center(0, c).0).collect();
    let mut swaths: Vec<Vec<f64>> = Vec::new();
    for e in dense {
        match swaths.last_mut() {
            Some(s) if e - s[s.len() - 1] <= 0.5 + 1e-9 => s.push(e),
            _ => swaths.push(vec![e]),
        }
    }
    assert_eq!(swaths.len(), 24);
    let centers: Vec<f64> = swaths.iter().map(|s| s.iter().sum::<f64>() / s.len() as f64).collect();
    for w in centers.windows(2) {
        assert!((w[1] - w[0] - 2.0).abs() <= 0.5, "swath spacing {}", w[1] - w[0]);
    }
}

fn tvu(d: f64) -> f64 {
    (0.25 + (0.013 * d).powi(2)).sqrt()
}

fn composite_rmse(depth: f64, seed: u64) -> (f64, f64) {
    let scatter = RockScatter {
        count: 10,
        height: 1.0,
        radius_min: 2.5,
        radius_max: 4.0,
        extent: [-9.0, 9.0, -18.0, 18.0],
        seed,
    };
    let seabed = SeabedModel::composite(depth, [0.01, 0.005], scatter).unwrap();
    let run = survey(20.0, 40.0, &seabed, &WaveModel::default(), &SensorNoise::default(), LeverArm::new(0.1, 0.0, 0.4).unwrap(), seed);
    let product = process_log(&run.log, &BathyConfig::default()).unwrap();
    let g = &product.grid;
    let (mut sum, mut n) = (0.0, 0usize);
    for (row, col, c) in g.populated() {
        let (e, north) = g.cell_center(row, col);
        sum += (c.depth - seabed.depth_at(e, north)).powi(2);
        n += 1;
    }
    let mean_depth = g.populated().map(|(_, _, c)| c.depth).sum::<f64>() / n as f64;
    ((sum / n as f64).sqrt(), mean_depth)
}

#[test]
fn composite_seabed_is_recovered_within_order_1a() {
    for depth in [2.0, 5.0, 10.0, 40.0] {
        let (rmse, mean) = composite_rmse(depth, depth as u64);
        assert!(rmse <= tvu(mean), "depth {depth}: rmse {rmse} vs {}", tvu(mean));
    }
}

#[test]
fn filters_catch_injected_errors_and_spare_a_ramp() {
    let noise = SensorNoise {
        depth_spike_probability: 0.03,
        ..SensorNoise::default()
    };
    let waves = WaveModel {
        gust_spike_probability: 0.01,
        ..WaveModel::default()
    };
    let seabed = SeabedModel::slope(6.0, 0.04, 0.02);
    let run = survey(20.0, 40.0, &seabed, &waves, &noise, LeverArm::new(0.0, 0.0, 0.4).unwrap(), 5);
    let product = process_log(&run.log, &BathyConfig::default()).unwrap();
    let times = dpth_times(&run);
    let by_time = |t: f64| product.points.iter().find(|p| p.timestamp == t).expect("placed");
    assert!(run.truth.attitude_spikes.len() > 10);
    for &i in &run.truth.attitude_spikes {
        assert!(by_time(times[i]).quality_flags.contains(QualityFlags::ATTITUDE_REJECT));
    }
    let spikes = &run.truth.depth_spikes;
    assert!(spikes.len() > 20);
    let caught = spikes.iter().filter(|&&i| by_time(times[i]).quality_flags.is_rejected()).count();
    assert!(caught as f64 >= 0.95 * spikes.len() as f64, "{caught} of {}", spikes.len());
    for (i, t) in times.iter().enumerate() {
        if !spikes.contains(&i) {
            assert!(!by_time(*t).quality_flags.contains(QualityFlags::MEDIAN_REJECT), "false rejection at {t}");
        }
    }
}

#[test]
fn idw_and_mean_grids_share_a_frame() {
    let pts: Vec<DepthPoint> = (0..40).map(|i| point((i % 8) as f64 * 0.7, (i / 8) as f64 * 0.9, 3.0 + 0.01 * i as f64)).collect();
    let mean = grid(&pts, 0.5, GridMethod::Mean, origin()).unwrap();
    let idw = grid(&pts, 0.5, GridMethod::Idw { radius: 1.0 }, origin()).unwrap();
    assert_eq!((mean.x0, mean.y0, mean.rows, mean.cols), (idw.x0, idw.y0, idw.rows, idw.cols));
    assert!(idw.populated().count() > mean.populated().count());
    for (_, _, c) in idw.populated() {
        assert!((3.0..=3.4).contains(&c.depth));
    }
}

fn arb_sample() -> impl Strategy<Value = Sample> {
    (0.5..30.0f64, -20.0..20.0f64, -20.0..20.0f64, 0u8..8).prop_map(|(d, r, p, f)| Sample {
        pose: Pose::new(0.0, EnuPoint::new(0.0, 0.0, 0.3), Attitude::new(r.to_radians(), p.to_radians(), 1.0)),
        raw_depth: d,
        flags: [QualityFlags::NONE, QualityFlags::ATTITUDE_REJECT, QualityFlags::MEDIAN_REJECT, QualityFlags::INTERPOLATED][f as usize % 4],
    })
}

proptest! {
    #[test]
    fn stages_never_clear_flags(samples in prop::collection::vec(arb_sample(), 1..80), width in 0.1..3.0f64) {
        let a = attitude_filter(&samples, 10.0);
        let m = median_filter(&a, 9, Band::Fixed { width }).unwrap();
        let r = median_filter(&a, 5, Band::default()).unwrap();
        let g = georeference(&m, &LeverArm::ZERO, 0.0, 0.0, VerticalReference::GpsHeight, origin()).unwrap();
        prop_assert_eq!(a.len(), samples.len());
        prop_assert_eq!(g.len(), samples.len());
        for i in 0..samples.len() {
            prop_assert!(a[i].flags.contains(samples[i].flags));
            prop_assert!(m[i].flags.contains(a[i].flags));
            prop_assert!(r[i].flags.contains(a[i].flags));
            prop_assert_eq!(g[i].quality_flags, m[i].flags);
        }
    }

    #[test]
    fn mean_grid_conserves_mass(
        pts in prop::collection::vec((-20.0..20.0f64, -20.0..20.0f64, 0.5..40.0f64), 1..300),
        cell in 0.2..3.0f64,
    ) {
        let points: Vec<DepthPoint> = pts.iter().map(|&(e, n, d)| point(e, n, d)).collect();
        let g = grid(&points, cell, GridMethod::Mean, origin()).unwrap();
        let total: f64 = points.iter().map(|p| p.corrected_depth).sum();
        let gridded: f64 = g.populated().map(|(_, _, c)| c.depth * c.count as f64).sum();
        let count: u32 = g.populated().map(|(_, _, c)| c.count).sum();
        prop_assert_eq!(count as usize, points.len());
        prop_assert!((total - gridded).abs() <= 1e-9 * total);
        for p in &points {
            let (r, c) = g.locate(p.ground_position.east, p.ground_position.north).unwrap();
            prop_assert!(g.get(r, c).is_some());
        }
    }
}
