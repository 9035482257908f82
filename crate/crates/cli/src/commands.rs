//! Subcommands other than `report`.

use crate::output::Output;
use anyhow::{anyhow, bail, Context};
use asvkit::bathy::{self, BathyConfig, GridMethod};
use asvkit::geo::{EnuPoint, GeoPoint, LeverArm};
use asvkit::logfmt::{self, LogRecord, SurveyLog};
use asvkit::mission::{self, SurveyArea};
use asvkit::photo::{self, CameraModel, CoverageOptions};
use asvkit::sbl::{self, ReceiverArray, SolverConfig, ToaSet};
use asvkit::sim::{self, BatteryModel, BeaconProfile, SeabedModel, SensorNoise, VehicleModel, WaveModel};
use asvkit::tracker::{self, SessionConfig};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::path::{Path, PathBuf};

fn parse_numbers(s: &str, what: &str, n: std::ops::RangeInclusive<usize>) -> anyhow::Result<Vec<f64>> {
    let v = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .with_context(|| format!("{what} must be comma-separated numbers, got {s:?}"))?;
    if !n.contains(&v.len()) {
        bail!("{what} needs {}..={} values, got {}", n.start(), n.end(), v.len());
    }
    Ok(v)
}

fn parse_geo(s: &str) -> anyhow::Result<GeoPoint> {
    let v = parse_numbers(s, "position \"lat,lon[,height]\"", 2..=3)?;
    Ok(GeoPoint::new(v[0], v[1], v.get(2).copied().unwrap_or(0.0))?)
}

fn parse_enu(s: &str) -> anyhow::Result<EnuPoint> {
    let v = parse_numbers(s, "local position \"east,north,up\"", 3..=3)?;
    Ok(EnuPoint::new(v[0], v[1], v[2]))
}

fn read_log(out: &mut Output, path: &Path) -> anyhow::Result<SurveyLog> {
    let bytes = out.read_input(path)?;
    logfmt::from_bytes(&bytes).with_context(|| format!("parsing {}", path.display()))
}

/// Seabed from a TOML spec, or from the `seabed` entry of a simulation truth file.
pub fn read_seabed(out: &mut Output, path: &Path) -> anyhow::Result<SeabedModel> {
    let bytes = out.read_input(path)?;
    let text = String::from_utf8(bytes).with_context(|| format!("{} is not UTF-8", path.display()))?;
    let model: SeabedModel = if path.extension().is_some_and(|e| e == "json") {
        let v: serde_json::Value = serde_json::from_str(&text)?;
        let seabed = v.get("seabed").cloned().unwrap_or(v);
        serde_json::from_value(seabed).with_context(|| format!("seabed in {}", path.display()))?
    } else {
        toml::from_str(&text).with_context(|| format!("seabed spec {}", path.display()))?
    };
    Ok(model.resolved()?)
}

fn required<T: Clone>(v: &Option<T>, flag: &str) -> anyhow::Result<T> {
    v.clone().ok_or_else(|| anyhow!("missing --{flag} (flag or config file)"))
}

// ---------------------------------------------------------------------------

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanArgs {
    /// Area center as "lat,lon".
    #[arg(long)]
    pub center: Option<String>,
    /// Across-transect extent, meters.
    #[arg(long)]
    pub width: Option<f64>,
    /// Along-transect extent, meters.
    #[arg(long)]
    pub length: Option<f64>,
    /// Direction of the transects, degrees clockwise from north.
    #[arg(long)]
    pub bearing: Option<f64>,
    /// Distance between transects, meters.
    #[arg(long)]
    pub spacing: Option<f64>,
    /// Cruise speed, m/s [default: 1.0].
    #[arg(long)]
    pub speed: Option<f64>,
    /// Echo-sounder ping rate, Hz [default: 2].
    #[arg(long)]
    pub rate: Option<f64>,
    /// Full beam angle of the echo sounder, degrees [default: 5].
    #[arg(long)]
    pub beam_angle: Option<f64>,
    /// Time charged per transect for turning, seconds [default: 10].
    #[arg(long)]
    pub turn_time: Option<f64>,
    /// Plan file [default: plan.geojson].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn plan(a: PlanArgs, out: &mut Output) -> anyhow::Result<()> {
    out.begin("plan", &a)?;
    let center = parse_geo(&required(&a.center, "center")?)?;
    let area = SurveyArea::new(
        center,
        required(&a.width, "width")?,
        required(&a.length, "length")?,
        a.bearing.unwrap_or(0.0),
    )?;
    let plan = mission::plan_lawnmower(&area, required(&a.spacing, "spacing")?, a.speed.unwrap_or(1.0), a.rate.unwrap_or(2.0))?;
    let sampling = mission::sampling_spec(&plan, a.beam_angle.unwrap_or(5.0))?;
    let duration = mission::estimate_duration(&plan, a.turn_time.unwrap_or(10.0))?;
    out.write_json(a.out.as_deref().unwrap_or(Path::new("plan.geojson")), &mission::to_geojson(&plan))?;
    println!("transects            {}", plan.transect_count);
    println!("transect length      {:.1} m", plan.transect_length());
    println!("along-track spacing  {:.3} m", sampling.along_track_spacing);
    for d in [1.0, 10.0] {
        let f = sampling.footprint_diameter_at(d);
        println!("footprint at {d:>4} m   {:.1} cm (≈ {} cm)", f * 100.0, mission::round_significant(f * 100.0, 1));
    }
    println!("path length          {:.0} m", plan.path_length()?);
    println!("estimated duration   {:.2} h", duration / 3600.0);
    Ok(())
}

// ---------------------------------------------------------------------------

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateArgs {
    /// Plan written by `plan`.
    #[arg(long)]
    pub plan: Option<PathBuf>,
    /// Seabed spec (TOML) [default: 5 m flat].
    #[arg(long)]
    pub seabed: Option<PathBuf>,
    /// Survey log [default: log.svlog].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Sounder offset from the antenna, "forward,starboard,down" meters [default: 0,0,0.4].
    #[arg(long)]
    pub sounder_arm: Option<String>,
    /// Calm sea: no waves or gusts.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub calm: Option<bool>,
    #[arg(skip)]
    pub vehicle: Option<VehicleModel>,
    #[arg(skip)]
    pub waves: Option<WaveModel>,
    #[arg(skip)]
    pub noise: Option<SensorNoise>,
    #[arg(skip)]
    pub battery: Option<BatteryModel>,
}

pub fn simulate(a: SimulateArgs, out: &mut Output) -> anyhow::Result<()> {
    out.begin("simulate", &a)?;
    let plan_path = required(&a.plan, "plan")?;
    let plan_json: serde_json::Value = serde_json::from_slice(&out.read_input(&plan_path)?)?;
    let plan = mission::from_geojson(&plan_json)?;
    let seabed = match &a.seabed {
        Some(p) => read_seabed(out, p)?,
        None => SeabedModel::plane(5.0),
    };
    let arm = parse_numbers(a.sounder_arm.as_deref().unwrap_or("0,0,0.4"), "sounder arm", 3..=3)?;
    let arm = LeverArm::new(arm[0], arm[1], arm[2])?;
    let waves = match (a.calm, a.waves) {
        (Some(true), _) => WaveModel::calm(),
        (_, Some(w)) => w,
        _ => WaveModel::default(),
    };
    let run = sim::run_survey(
        &plan,
        &a.vehicle.unwrap_or_default(),
        &seabed,
        &waves,
        &a.battery.unwrap_or_default(),
        &arm,
        &a.noise.unwrap_or_default(),
        out.seed(),
    )?;
    out.write(a.out.as_deref().unwrap_or(Path::new("log.svlog")), &logfmt::to_bytes(&run.log)?)?;
    let t = &run.truth;
    out.write_json(
        Path::new("truth.json"),
        &json!({
            "kind": "survey_truth",
            "seabed": seabed,
            "soundings": t.ground_points.len(),
            "depth_spikes": t.depth_spikes.len(),
            "attitude_spikes": t.attitude_spikes.len(),
            "duration": t.duration,
            "energy_used_wh": t.energy_used_wh,
            "truncated": t.truncated,
        }),
    )?;
    println!("simulated {:.1} min, {} soundings, {} records", t.duration / 60.0, t.ground_points.len(), run.log.records.len());
    if t.truncated {
        log::warn!("battery ran out before the plan was finished");
    }
    Ok(())
}

// ---------------------------------------------------------------------------

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NamedProfile {
    Stationary,
    RandomWalk,
    DiveCycle,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackSimArgs {
    /// Horizontal distance that switches HOLD to FOLLOW, meters [default: 5].
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Control loop period, seconds [default: 1].
    #[arg(long)]
    pub loop_period: Option<f64>,
    /// stationary, random-walk, dive-cycle, or a CSV (t,east,north,up) / TOML profile file [default: dive-cycle].
    #[arg(long)]
    pub beacon_profile: Option<String>,
    /// Beacon start in the local frame, "east,north,up" [default: 10,0,-0.5].
    #[arg(long)]
    pub beacon_start: Option<String>,
    /// Mean horizontal beacon speed for generated profiles, m/s [default: 0.8].
    #[arg(long)]
    pub beacon_speed: Option<f64>,
    /// Session length for generated profiles, seconds [default: 1500].
    #[arg(long)]
    pub duration: Option<f64>,
    /// Tracking log [default: track.svlog].
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(skip)]
    pub session: Option<SessionConfig>,
}

fn read_beacon_track(out: &mut Output, path: &Path) -> anyhow::Result<Vec<(f64, EnuPoint)>> {
    let bytes = out.read_input(path)?;
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(bytes.as_slice());
    let mut track = Vec::new();
    for rec in rdr.deserialize::<(f64, f64, f64, f64)>() {
        let (t, e, n, u) = rec.with_context(|| format!("beacon track {}", path.display()))?;
        track.push((t, EnuPoint::new(e, n, u)));
    }
    Ok(track)
}

pub fn track_sim(a: TrackSimArgs, out: &mut Output) -> anyhow::Result<()> {
    out.begin("track-sim", &a)?;
    let mut session = a.session.unwrap_or_default();
    if let Some(t) = a.threshold {
        session.tracker.follow_threshold = t;
    }
    if let Some(p) = a.loop_period {
        session.tracker.loop_period = p;
    }
    let start = parse_enu(a.beacon_start.as_deref().unwrap_or("10,0,-0.5"))?;
    let speed = a.beacon_speed.unwrap_or(0.8);
    let duration = a.duration.unwrap_or(1500.0);
    let spec = a.beacon_profile.clone().unwrap_or_else(|| "dive-cycle".into());
    let named = NamedProfile::from_str(&spec, true).ok();
    let profile = match named {
        Some(NamedProfile::Stationary) => Some(BeaconProfile::Stationary { position: start }),
        Some(NamedProfile::RandomWalk) => Some(BeaconProfile::RandomWalk {
            start,
            mean_speed: speed,
            correlation_time: 30.0,
        }),
        Some(NamedProfile::DiveCycle) => Some(BeaconProfile::dive_cycle(start, speed)),
        None if spec.ends_with(".toml") => {
            let text = String::from_utf8(out.read_input(Path::new(&spec))?)?;
            Some(toml::from_str(&text).with_context(|| format!("beacon profile {spec}"))?)
        }
        None => None,
    };
    let track = match profile {
        Some(p) => sim::beacon_profile(&p, duration, sim::SIM_DT, out.seed())?,
        None => read_beacon_track(out, Path::new(&spec))?,
    };
    let run = tracker::track_session(&track, &session, out.seed())?;
    out.write(a.out.as_deref().unwrap_or(Path::new("track.svlog")), &logfmt::to_bytes(&run.log)?)?;
    let s = &run.summary;
    let mut summary = serde_json::to_value(s)?;
    if let Some(m) = summary.as_object_mut() {
        m.remove("horizontal_distances");
        m.insert("kind".into(), json!("tracking_summary"));
        m.insert("max_range".into(), json!(session.tracker.max_range_abort));
        m.insert("near_distance".into(), json!(session.tracker.follow_threshold + session.near_margin));
    }
    out.write_json(Path::new("tracking_summary.json"), &summary)?;
    println!("{}", crate::report::tracking_line(&summary));
    Ok(())
}

// ---------------------------------------------------------------------------

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SblSolveArgs {
    /// Log with SBLR records.
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    /// Fix table [default: fixes.csv].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Drop fixes with a larger std and interpolate over them, meters.
    #[arg(long)]
    pub filter_std: Option<f64>,
    #[arg(skip)]
    pub array: Option<ReceiverArray>,
    #[arg(skip)]
    pub solver: Option<SolverConfig>,
}

pub fn sbl_solve(a: SblSolveArgs, out: &mut Output) -> anyhow::Result<()> {
    out.begin("sbl-solve", &a)?;
    let log = read_log(out, &required(&a.input, "in")?)?;
    let array = a.array.unwrap_or_default();
    let solver = a.solver.unwrap_or_default();
    let track = log.pose_track()?;
    let origin = log.header.origin;
    let mut fixes = Vec::new();
    let mut prior = None;
    let mut unposed = 0;
    let mut pings = 0;
    for r in &log.records {
        let LogRecord::SblRaw(raw) = r else { continue };
        pings += 1;
        let t = raw.t.seconds();
        let Some(pose) = track.pose_at(t) else {
            unposed += 1;
            continue;
        };
        let toa = ToaSet {
            timestamp: t,
            arrival_times: raw.toa,
            sound_speed: raw.sound_speed,
        };
        match sbl::solve_fix(&toa, &pose, &array, prior, origin, &solver) {
            Ok(fix) => {
                if fix.valid {
                    prior = Some(fix.enu_position);
                }
                fixes.push(fix);
            }
            Err(e) => log::warn!("t = {t:.1} s: {e}"),
        }
    }
    if unposed > 0 {
        log::warn!("{unposed} pings outside the logged track were skipped");
    }
    if fixes.is_empty() {
        bail!("no solvable SBLR records in the log");
    }
    let valid = fixes.iter().filter(|f| f.valid).count();
    if let Some(th) = a.filter_std {
        fixes = sbl::filter_track(&fixes, th)?;
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["t", "lat", "lon", "depth", "std", "valid", "interpolated"])?;
    for f in &fixes {
        w.write_record([
            format!("{:.3}", f.timestamp),
            format!("{:.9}", f.geo_position.latitude),
            format!("{:.9}", f.geo_position.longitude),
            format!("{:.3}", -f.enu_position.up),
            format!("{:.3}", f.std),
            f.valid.to_string(),
            f.interpolated.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| anyhow!("{e}"))?;
    out.write(a.out.as_deref().unwrap_or(Path::new("fixes.csv")), &bytes)?;
    println!("{pings} pings, {valid} valid fixes, {} rows written", fixes.len());
    Ok(())
}

// ---------------------------------------------------------------------------

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Mean,
    Idw,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessBathyArgs {
    /// Survey log with GPS, ATT and DPTH records.
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    /// Grid cell size, meters [default: 0.5].
    #[arg(long)]
    pub cell: Option<f64>,
    /// Gridding method [default: mean].
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    /// IDW search radius, meters [default: 2 cells].
    #[arg(long)]
    pub radius: Option<f64>,
    /// Attitude rejection threshold, degrees [default: 10].
    #[arg(long)]
    pub max_angle: Option<f64>,
    /// Median filter window, samples [default: 9].
    #[arg(long)]
    pub window: Option<usize>,
    /// Median band in robust standard deviations [default: 3].
    #[arg(long)]
    pub band_k: Option<f64>,
    /// ESRI ASCII grid [default: grid.asc].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the soundings as CSV.
    #[arg(long)]
    pub xyz: Option<PathBuf>,
    /// Also write a Delaunay TIN as PLY.
    #[arg(long)]
    pub ply: Option<PathBuf>,
    /// Also write rejected soundings as GeoJSON.
    #[arg(long)]
    pub rejects: Option<PathBuf>,
    /// Seabed spec or simulation truth file; adds an RMSE against it.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(skip)]
    pub bathy: Option<BathyConfig>,
}

pub fn process_bathy(a: ProcessBathyArgs, out: &mut Output) -> anyhow::Result<()> {
    out.begin("process-bathy", &a)?;
    let log = read_log(out, &required(&a.input, "in")?)?;
    let mut cfg = a.bathy.unwrap_or_default();
    if let Some(c) = a.cell {
        cfg.cell_size = c;
    }
    if let Some(m) = a.max_angle {
        cfg.max_angle_deg = m;
    }
    if let Some(w) = a.window {
        cfg.median_window = w;
    }
    if let Some(k) = a.band_k {
        cfg.band = match cfg.band {
            bathy::Band::Robust { floor, .. } => bathy::Band::Robust { k, floor },
            bathy::Band::Fixed { .. } => bathy::Band::Robust { k, floor: 0.5 },
        };
    }
    match a.method {
        Some(Method::Idw) => cfg.method = GridMethod::Idw { radius: a.radius.unwrap_or(2.0 * cfg.cell_size) },
        Some(Method::Mean) => cfg.method = GridMethod::Mean,
        None => {}
    }
    let product = bathy::process_log(&log, &cfg)?;
    let origin = log.header.origin;
    let mut buf = Vec::new();
    bathy::write_asc(&product.grid, &mut buf)?;
    out.write(a.out.as_deref().unwrap_or(Path::new("grid.asc")), &buf)?;
    if let Some(p) = &a.xyz {
        let mut buf = Vec::new();
        bathy::write_xyz_csv(&product.points, origin, true, &mut buf)?;
        out.write(p, &buf)?;
    }
    if let Some(p) = &a.ply {
        let kept: Vec<_> = product.points.iter().filter(|p| !p.quality_flags.is_rejected()).cloned().collect();
        let mut buf = Vec::new();
        bathy::write_ply(&bathy::triangulate(&kept)?, &mut buf)?;
        out.write(p, &buf)?;
    }
    if let Some(p) = &a.rejects {
        let mut buf = Vec::new();
        bathy::write_rejects_geojson(&product.points, origin, &mut buf)?;
        out.write(p, &buf)?;
    }
    let g = &product.grid;
    let cells: Vec<_> = (0..g.rows).flat_map(|r| (0..g.cols).map(move |c| (r, c))).filter_map(|(r, c)| g.get(r, c).map(|cell| (r, c, cell))).collect();
    let mean_depth = cells.iter().map(|(_, _, c)| c.depth).sum::<f64>() / cells.len().max(1) as f64;
    let rmse = match &a.truth {
        Some(p) => {
            let seabed = read_seabed(out, p)?;
            let sq: f64 = cells
                .iter()
                .map(|(r, c, cell)| {
                    let (e, n) = g.cell_center(*r, *c);
                    (cell.depth - seabed.depth_at(e, n)).powi(2)
                })
                .sum();
            Some((sq / cells.len().max(1) as f64).sqrt())
        }
        None => None,
    };
    let n = product.soundings.max(1) as f64;
    let summary = json!({
        "kind": "bathy_summary",
        "soundings": product.soundings,
        "unplaced": product.unplaced,
        "attitude_rejects": product.attitude_rejects,
        "median_rejects": product.median_rejects,
        "attitude_reject_fraction": product.attitude_rejects as f64 / n,
        "median_reject_fraction": product.median_rejects as f64 / n,
        "cell_size": g.cell_size,
        "rows": g.rows,
        "cols": g.cols,
        "populated_cells": cells.len(),
        "grid_coverage": cells.len() as f64 / (g.rows * g.cols).max(1) as f64,
        "mean_depth": mean_depth,
        "rmse_vs_truth": rmse,
    });
    out.write_json(Path::new("bathy_summary.json"), &summary)?;
    print!("{}", crate::report::bathy_text(&summary));
    Ok(())
}

// ---------------------------------------------------------------------------

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckOverlapArgs {
    /// Survey log with GPS and ATT records.
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    /// Horizontal (across-track) field of view in water, degrees [default: 60].
    #[arg(long)]
    pub fov_water: Option<f64>,
    /// Vertical (along-track) field of view in water, degrees [default: 45].
    #[arg(long)]
    pub vfov_water: Option<f64>,
    /// Seconds between frames used for reconstruction [default: 0.5].
    #[arg(long)]
    pub interval: Option<f64>,
    /// Camera tilt from nadir, degrees [default: 0].
    #[arg(long)]
    pub tilt: Option<f64>,
    /// Constant seabed depth, meters.
    #[arg(long, conflicts_with = "seabed")]
    pub depth: Option<f64>,
    /// Seabed spec or simulation truth file, instead of --depth.
    #[arg(long)]
    pub seabed: Option<PathBuf>,
    /// Required overlap fraction [default: 0.7].
    #[arg(long)]
    pub target: Option<f64>,
    /// Raster cell size, meters [default: 0.1].
    #[arg(long)]
    pub cell: Option<f64>,
    /// Image-count raster [default: coverage.asc].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Uncovered areas as GeoJSON [default: gaps.geojson].
    #[arg(long)]
    pub gaps: Option<PathBuf>,
}

pub fn check_overlap(a: CheckOverlapArgs, out: &mut Output) -> anyhow::Result<()> {
    out.begin("check-overlap", &a)?;
    let log = read_log(out, &required(&a.input, "in")?)?;
    let camera = CameraModel::new(
        a.fov_water.unwrap_or(60.0),
        a.vfov_water.unwrap_or(45.0),
        a.interval.unwrap_or(0.5),
        a.tilt.unwrap_or(0.0),
    )?;
    let seabed = match (&a.seabed, a.depth) {
        (Some(p), _) => read_seabed(out, p)?,
        (None, Some(d)) => SeabedModel::plane(d),
        (None, None) => bail!("give --depth or --seabed"),
    };
    let opts = CoverageOptions {
        cell_size: a.cell.unwrap_or(0.1),
        target_overlap: a.target.unwrap_or(0.7),
        ..CoverageOptions::default()
    };
    let r = photo::coverage_report(&log, &camera, &|e, n| seabed.depth_at(e, n), &opts)?;
    let mut buf = Vec::new();
    photo::write_coverage_asc(&r.raster, &mut buf)?;
    out.write(a.out.as_deref().unwrap_or(Path::new("coverage.asc")), &buf)?;
    let mut buf = Vec::new();
    photo::write_gaps_geojson(&r.gaps, log.header.origin, &mut buf)?;
    out.write(a.gaps.as_deref().unwrap_or(Path::new("gaps.geojson")), &buf)?;
    let shallowest = r
        .frames
        .iter()
        .map(|f| seabed.depth_at(f.pose.position.east, f.pose.position.north))
        .fold(f64::INFINITY, f64::min);
    let summary = json!({
        "kind": "coverage_summary",
        "target_overlap": opts.target_overlap,
        "frames": r.frames.len(),
        "passes": r.passes,
        "skipped_frames": r.skipped_frames,
        "covered_fraction": r.covered_fraction,
        "forward_ok_fraction": r.forward_ok_fraction,
        "forward_min": r.forward_min,
        "side_min": r.side_min,
        "forward_ok": r.forward_ok,
        "side_ok": r.side_ok,
        "gaps": r.gaps.len(),
        "gap_area": r.gaps.iter().map(|g| g.area).sum::<f64>(),
        "shallowest_depth": shallowest,
        "spacing_for_target": photo::spacing_for_overlap(&camera, shallowest, opts.target_overlap).ok(),
    });
    out.write_json(Path::new("coverage_summary.json"), &summary)?;
    print!("{}", crate::report::coverage_text(&summary));
    Ok(())
}
