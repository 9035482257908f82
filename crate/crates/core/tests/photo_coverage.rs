use asvkit::geo::{Attitude, EnuPoint, GeoPoint, LeverArm, Pose};
use asvkit::mission::{plan_lawnmower, SurveyArea};
use asvkit::photo::{
    coverage_report, footprint, in_water_fov, required_fov, spacing_for_overlap, CameraModel, CoverageOptions, CoverageReport,
};
use asvkit::sim::{run_survey, BatteryModel, SeabedModel, SensorNoise, SurveyRun, VehicleModel, WaveModel};
use proptest::prelude::*;

fn origin() -> GeoPoint {
    GeoPoint::new(-22.36, 40.37, 0.0).unwrap()
}

fn calm_survey(width: f64, length: f64, spacing: f64, speed: f64, seabed: &SeabedModel) -> SurveyRun {
    let area = SurveyArea::new(origin(), width, length, 0.0).unwrap();
    let plan = plan_lawnmower(&area, spacing, speed, 2.0).unwrap();
    let vehicle = VehicleModel {
        cross_track_rms: 0.0,
        ..VehicleModel::default()
    };
    run_survey(
        &plan,
        &vehicle,
        seabed,
        &WaveModel::calm(),
        &BatteryModel::default(),
        &LeverArm::ZERO,
        &SensorNoise::noise_free(),
        5,
    )
    .unwrap()
}

fn report(run: &SurveyRun, camera: &CameraModel, seabed: &SeabedModel, opts: CoverageOptions) -> CoverageReport {
    coverage_report(&run.log, camera, &|e, n| seabed.depth_at(e, n), &opts).unwrap()
}

fn nadir(hfov: f64) -> CameraModel {
    CameraModel::new(hfov, 45.0, 0.5, 0.0).unwrap()
}

/// Overlaps recorded away from the ends of each pass, where the vehicle is
/// still turning onto the line or slowing for the waypoint.
fn mid_pass<'a>(r: &'a CoverageReport, margin: f64) -> impl Iterator<Item = &'a asvkit::photo::Frame> {
    let bounds: Vec<(f64, f64)> = (0..r.passes)
        .map(|p| {
            let ts: Vec<f64> = r.frames.iter().filter(|f| f.pass == Some(p)).map(|f| f.pose.timestamp).collect();
            (ts[0] + margin, ts[ts.len() - 1] - margin)
        })
        .collect();
    r.frames.iter().filter(move |f| f.pass.is_some_and(|p| f.pose.timestamp >= bounds[p].0 && f.pose.timestamp <= bounds[p].1))
}

proptest! {
    #[test]
    fn spacing_is_monotone(h in 10.0f64..150.0, d in 0.5f64..30.0, o in 0.0f64..0.95, dd in 0.01f64..5.0, dov in 0.001f64..0.04) {
        let cam = CameraModel::new(h, 40.0, 0.5, 0.0).unwrap();
        let s = spacing_for_overlap(&cam, d, o).unwrap();
        prop_assert!(spacing_for_overlap(&cam, d + dd, o).unwrap() > s);
        prop_assert!(spacing_for_overlap(&cam, d, o + dov).unwrap() < s);
    }

    #[test]
    fn footprint_area_scales_with_depth_squared(
        h in 10.0f64..150.0, v in 10.0f64..120.0, tilt in -30.0f64..30.0,
        roll in -0.2f64..0.2, pitch in -0.2f64..0.2, yaw in -3.1f64..3.1, d in 0.5f64..30.0,
    ) {
        let cam = CameraModel::new(h, v, 0.5, tilt).unwrap();
        let pose = Pose::new(0.0, EnuPoint::new(3.0, -7.0, 0.0), Attitude::new(roll, pitch, yaw));
        if let (Ok(a), Ok(b)) = (footprint(&pose, &cam, d), footprint(&pose, &cam, 2.0 * d)) {
            prop_assert!(a.is_convex() && b.is_convex());
            prop_assert!((b.area() / a.area() - 4.0).abs() < 1e-9);
        }
    }
}

#[test]
fn single_transect_forward_overlap_matches_closed_form() {
    let seabed = SeabedModel::plane(3.0);
    let run = calm_survey(2.0, 60.0, 2.0, 1.0, &seabed);
    let cam = nadir(60.0);
    let r = report(&run, &cam, &seabed, CoverageOptions::default());
    assert_eq!(r.passes, 1);
    assert!(r.side_overlaps.is_empty());
    let expected = 1.0 - 1.0 * cam.frame_interval / cam.footprint_length(3.0);
    let frames: Vec<_> = mid_pass(&r, 10.0).collect();
    assert!(frames.len() > 60);
    for pair in frames.windows(2) {
        let o = pair[0].footprint.intersection_area(&pair[1].footprint) / pair[0].footprint.area();
        assert!((o - expected).abs() < 2e-3, "forward overlap {o} vs {expected}");
    }
    assert!(r.forward_ok);
}

#[test]
fn transects_one_swath_apart_do_not_overlap() {
    let seabed = SeabedModel::plane(3.0);
    let cam = nadir(60.0);
    let swath = cam.swath_width(3.0);
    let run = calm_survey(2.0 * swath, 40.0, swath, 1.0, &seabed);
    let r = report(&run, &cam, &seabed, CoverageOptions::default());
    assert_eq!(r.passes, 2);
    let mid: Vec<f64> = mid_pass(&r, 10.0)
        .map(|f| {
            let other = r
                .frames
                .iter()
                .filter(|g| g.pass.is_some() && g.pass != f.pass)
                .min_by(|a, b| {
                    let d = |g: &&asvkit::photo::Frame| g.pose.position.horizontal_distance(f.pose.position);
                    d(a).total_cmp(&d(b))
                })
                .unwrap();
            f.footprint.intersection_area(&other.footprint) / f.footprint.area()
        })
        .collect();
    assert!(!mid.is_empty());
    assert!(mid.iter().all(|o| *o < 1e-3), "max side overlap {}", mid.iter().cloned().fold(0.0, f64::max));
    assert!(!r.side_ok);
}

#[test]
fn spacing_at_the_shallowest_depth_meets_the_target_everywhere() {
    // Sloping seabed, 4 m at its shallowest inside the area.
    let (width, length) = (15.0, 40.0);
    let seabed = SeabedModel::slope(4.0 + 0.05 * width / 2.0, 0.05, 0.0);
    let cam = nadir(90.0);
    let spacing = spacing_for_overlap(&cam, 4.0, 0.7).unwrap();
    let run = calm_survey(width, length, spacing, 0.8, &seabed);
    let r = report(&run, &cam, &seabed, CoverageOptions::default());
    assert!(r.passes >= 6, "{} passes", r.passes);
    let worst = r.side_min.unwrap();
    assert!(worst >= 0.7, "side overlap {worst}");
    assert!(r.side_ok);
    assert!(r.forward_ok);
}

#[test]
fn two_meter_spacing_needs_wide_optics_in_shallow_water() {
    // Transects 2 m apart over 2 to 4 m of water.
    let at2 = required_fov(2.0, 2.0, 0.7);
    let at4 = required_fov(2.0, 4.0, 0.7);
    assert!((at2 - 118.072_486_935_852_96).abs() < 1e-9, "{at2}");
    assert!((at4 - 79.611_142_184_530_4).abs() < 1e-9, "{at4}");
    // In-air equivalent behind a flat port.
    let in_air = 2.0 * (1.33 * (at2.to_radians() / 2.0).tan()).atan().to_degrees();
    assert!((in_air - 131.437_080).abs() < 1e-5, "{in_air}");
    assert!((in_water_fov(in_air) - at2).abs() < 1e-9);
}

#[test]
fn overlap_holds_at_four_meters_but_not_at_two() {
    let cam = nadir(95.0);
    let mut verdicts = Vec::new();
    for depth in [2.0, 4.0] {
        let seabed = SeabedModel::plane(depth);
        let run = calm_survey(12.0, 40.0, 2.0, 0.8, &seabed);
        let r = report(&run, &cam, &seabed, CoverageOptions::default());
        let expected = 1.0 - 2.0 / cam.swath_width(depth);
        let median = {
            let mut v = r.side_overlaps.clone();
            v.sort_by(f64::total_cmp);
            v[v.len() / 2]
        };
        assert!((median - expected).abs() < 0.02, "depth {depth}: median side overlap {median} vs {expected}");
        assert!(r.forward_ok);
        assert!(r.covered_fraction > 0.9);
        verdicts.push(r.side_ok);
    }
    assert_eq!(verdicts, [false, true]);
}

#[test]
fn gaps_show_up_between_distant_transects() {
    let seabed = SeabedModel::plane(2.0);
    let cam = nadir(60.0);
    let run = calm_survey(12.0, 30.0, 4.0, 1.0, &seabed);
    let r = report(&run, &cam, &seabed, CoverageOptions::default());
    assert!(r.covered_fraction < 0.9);
    let gap_area: f64 = r.gaps.iter().map(|g| g.area).sum();
    let cells = (r.raster.rows * r.raster.cols) as f64;
    let uncovered = r.raster.counts.iter().filter(|c| **c == 0).count() as f64;
    assert!((gap_area - uncovered * 0.01).abs() < 1e-9);
    assert!((r.covered_fraction - (1.0 - uncovered / cells)).abs() < 1e-12);
    // Long strips between the lines.
    assert!(r.gaps.iter().any(|g| g.area > 10.0));
}

#[test]
fn empty_window_is_an_error() {
    let seabed = SeabedModel::plane(3.0);
    let run = calm_survey(2.0, 20.0, 2.0, 1.0, &seabed);
    let opts = CoverageOptions {
        window: Some((1e6, 2e6)),
        ..CoverageOptions::default()
    };
    assert!(coverage_report(&run.log, &nadir(60.0), &|_, _| 3.0, &opts).is_err());
}
