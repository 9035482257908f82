//! `report`: a readable summary of whatever artifacts it is given.

use crate::output::Output;
use anyhow::{anyhow, bail, Context};
use asvkit::logfmt::{self, LogRecord, SurveyLog};
use asvkit::mission;
use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportArgs {
    /// Artifacts: .svlog logs, plan .geojson, gap .geojson, .asc grids and
    /// the *_summary.json / truth / manifest files.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Also write the report as HTML.
    #[arg(long)]
    pub html: Option<PathBuf>,
    /// Turn time used for the plan duration estimate, seconds [default: 10].
    #[arg(long)]
    pub turn_time: Option<f64>,
    /// Echo-sounder beam angle for plan footprints, degrees [default: 5].
    #[arg(long)]
    pub beam_angle: Option<f64>,
}

fn num(v: &Value, key: &str) -> f64 {
    v.get(key).and_then(Value::as_f64).unwrap_or(f64::NAN)
}

fn pct(x: f64) -> String {
    format!("{:.1} %", 100.0 * x)
}

pub fn tracking_line(s: &Value) -> String {
    let max_range = v_or(s, "max_range", 100.0);
    let mut line = format!(
        "tracked {:.1} minutes, {} within {max_range} m",
        num(s, "duration") / 60.0,
        pct(num(s, "within_range_fraction"))
    );
    if s.get("converged_at").is_some_and(|c| !c.is_null()) {
        let _ = write!(line, ", {} within {} m after convergence", pct(num(s, "near_fraction")), v_or(s, "near_distance", 7.0));
    } else {
        line.push_str(", never converged");
    }
    line
}

fn v_or(s: &Value, key: &str, default: f64) -> f64 {
    s.get(key).and_then(Value::as_f64).unwrap_or(default)
}

fn tracking_text(s: &Value) -> String {
    let mut t = tracking_line(s) + "\n";
    if let Some(modes) = s.get("mode_counts").and_then(Value::as_array) {
        let steps = num(s, "steps").max(1.0);
        let parts: Vec<String> = modes
            .iter()
            .filter_map(|m| Some(format!("{} {}", m.get(0)?.as_str()?, pct(m.get(1)?.as_f64()? / steps))))
            .collect();
        let _ = writeln!(t, "  modes: {}", parts.join(", "));
    }
    let _ = writeln!(
        t,
        "  fixes: {} valid, {} invalid, {} dropouts; max slant range {:.1} m",
        num(s, "valid_fixes"),
        num(s, "invalid_fixes"),
        num(s, "dropouts"),
        num(s, "max_slant_range")
    );
    t
}

pub fn bathy_text(s: &Value) -> String {
    let mut t = format!(
        "bathymetry: {} soundings, attitude rejects {}, median rejects {}\n",
        num(s, "soundings"),
        pct(num(s, "attitude_reject_fraction")),
        pct(num(s, "median_reject_fraction"))
    );
    let _ = writeln!(
        t,
        "  grid {} x {} at {} m, coverage {}, mean depth {:.2} m",
        num(s, "cols"),
        num(s, "rows"),
        num(s, "cell_size"),
        pct(num(s, "grid_coverage")),
        num(s, "mean_depth")
    );
    if let Some(r) = s.get("rmse_vs_truth").and_then(Value::as_f64) {
        let _ = writeln!(t, "  RMSE vs truth {r:.3} m");
    }
    t
}

pub fn coverage_text(s: &Value) -> String {
    let target = num(s, "target_overlap");
    let verdict = |k: &str| if s.get(k).and_then(Value::as_bool) == Some(true) { "meets" } else { "misses" };
    let opt = |k: &str| s.get(k).and_then(Value::as_f64).map_or("n/a".to_string(), pct);
    let mut t = format!(
        "photogrammetry: {} frames in {} passes, {} of the area seen\n",
        num(s, "frames"),
        num(s, "passes"),
        pct(num(s, "covered_fraction"))
    );
    let _ = writeln!(t, "  forward overlap min {} ({} {})", opt("forward_min"), verdict("forward_ok"), pct(target));
    let _ = writeln!(t, "  side overlap min {} ({} {})", opt("side_min"), verdict("side_ok"), pct(target));
    let _ = writeln!(t, "  {} gaps, {:.2} m² uncovered", num(s, "gaps"), num(s, "gap_area"));
    if let Some(sp) = s.get("spacing_for_target").and_then(Value::as_f64) {
        let _ = writeln!(t, "  spacing for {} at {:.2} m: {sp:.2} m", pct(target), num(s, "shallowest_depth"));
    }
    t
}

fn plan_text(v: &Value, turn_time: f64, beam: f64) -> anyhow::Result<String> {
    let plan = mission::from_geojson(v)?;
    let sampling = mission::sampling_spec(&plan, beam)?;
    let mut t = format!(
        "plan: {} x {} m, {} transects {} m apart, {} m/s at {} Hz\n",
        plan.area.width, plan.area.length, plan.transect_count, plan.transect_spacing, plan.cruise_speed, plan.sample_rate
    );
    let _ = writeln!(
        t,
        "  along-track spacing {:.3} m; footprint {:.1} cm at 1 m, {:.1} cm at 10 m",
        sampling.along_track_spacing,
        100.0 * sampling.footprint_diameter_at(1.0),
        100.0 * sampling.footprint_diameter_at(10.0)
    );
    let _ = writeln!(
        t,
        "  path {:.0} m, estimated duration {:.2} h",
        plan.path_length()?,
        mission::estimate_duration(&plan, turn_time)? / 3600.0
    );
    Ok(t)
}

fn log_text(log: &SurveyLog) -> String {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for r in &log.records {
        *counts.entry(r.kind().tag().to_string()).or_default() += 1;
    }
    let span = log.span().map_or(0.0, |(a, b)| b.seconds() - a.seconds());
    let parts: Vec<String> = counts.iter().map(|(k, n)| format!("{k} {n}")).collect();
    let mut t = format!("log {}: {:.1} min, records {}\n", log.header.survey_id, span / 60.0, parts.join(", "));
    // Time in each tracker mode, from MODE transitions.
    let modes: Vec<(f64, &str)> = log
        .records
        .iter()
        .filter_map(|r| match r {
            LogRecord::Mode(m) => Some((m.t.seconds(), m.mode.as_str())),
            _ => None,
        })
        .collect();
    if let (Some(first), Some((_, end))) = (modes.first(), log.span()) {
        let mut time: BTreeMap<&str, f64> = BTreeMap::new();
        for (i, (t0, m)) in modes.iter().enumerate() {
            let t1 = modes.get(i + 1).map_or(end.seconds(), |n| n.0);
            *time.entry(m).or_default() += t1 - t0;
        }
        let total = (end.seconds() - first.0).max(1e-9);
        let parts: Vec<String> = time.iter().map(|(m, s)| format!("{m} {}", pct(s / total))).collect();
        let _ = writeln!(t, "  time in mode: {}", parts.join(", "));
    }
    let slant: Vec<f64> = log
        .records
        .iter()
        .filter_map(|r| match r {
            LogRecord::Sbl(s) => Some((s.rel_x.powi(2) + s.rel_y.powi(2) + s.rel_z.powi(2)).sqrt()),
            _ => None,
        })
        .collect();
    if !slant.is_empty() {
        let within = slant.iter().filter(|d| **d < 100.0).count() as f64 / slant.len() as f64;
        let _ = writeln!(t, "  {} acoustic fixes, {} within 100 m", slant.len(), pct(within));
    }
    t
}

fn asc_text(text: &str) -> anyhow::Result<String> {
    let mut header: BTreeMap<String, f64> = BTreeMap::new();
    let mut lines = text.lines();
    for _ in 0..6 {
        let line = lines.next().ok_or_else(|| anyhow!("truncated ASC header"))?;
        let mut it = line.split_whitespace();
        let (k, v) = (it.next().unwrap_or(""), it.next().unwrap_or(""));
        header.insert(k.to_ascii_lowercase(), v.parse().with_context(|| format!("ASC header line {line:?}"))?);
    }
    let get = |k: &str| header.get(k).copied().ok_or_else(|| anyhow!("ASC header lacks {k}"));
    let (cols, rows, nodata, cell) = (get("ncols")?, get("nrows")?, get("nodata_value")?, get("cellsize")?);
    let mut total = 0usize;
    let mut populated = 0usize;
    for line in lines {
        for v in line.split_whitespace() {
            total += 1;
            if v.parse::<f64>().context("ASC cell value")? != nodata {
                populated += 1;
            }
        }
    }
    if total != (cols * rows) as usize {
        bail!("ASC has {total} cells, header says {}", cols * rows);
    }
    Ok(format!(
        "grid {cols} x {rows} at {cell} m: {populated} cells with data, coverage {}\n",
        pct(if total == 0 { 0.0 } else { populated as f64 / total as f64 })
    ))
}

fn json_text(v: &Value, turn_time: f64, beam: f64) -> anyhow::Result<String> {
    match v.get("kind").and_then(Value::as_str) {
        Some("tracking_summary") => return Ok(tracking_text(v)),
        Some("bathy_summary") => return Ok(bathy_text(v)),
        Some("coverage_summary") => return Ok(coverage_text(v)),
        Some("survey_truth") => {
            return Ok(format!(
                "simulation truth: {:.1} min, {} soundings, {} depth spikes, {} attitude spikes, {:.0} Wh used{}\n",
                num(v, "duration") / 60.0,
                num(v, "soundings"),
                num(v, "depth_spikes"),
                num(v, "attitude_spikes"),
                num(v, "energy_used_wh"),
                if v.get("truncated").and_then(Value::as_bool) == Some(true) { ", battery exhausted" } else { "" }
            ))
        }
        Some("manifest") => {
            return Ok(format!(
                "manifest: {} run, seed {}, {} inputs, {} outputs\n",
                v.get("command").and_then(Value::as_str).unwrap_or("?"),
                num(v, "seed"),
                v.get("inputs").and_then(Value::as_array).map_or(0, Vec::len),
                v.get("outputs").and_then(Value::as_array).map_or(0, Vec::len)
            ))
        }
        _ => {}
    }
    match v.get("type").and_then(Value::as_str) {
        Some("Feature") => plan_text(v, turn_time, beam),
        Some("FeatureCollection") => {
            let features = v.get("features").and_then(Value::as_array).map_or(&[][..], Vec::as_slice);
            let polygons = features.iter().filter(|f| f.pointer("/geometry/type").and_then(Value::as_str) == Some("Polygon"));
            let area: f64 = polygons.clone().filter_map(|f| f.pointer("/properties/area_m2").and_then(Value::as_f64)).sum();
            let n_poly = polygons.count();
            Ok(if n_poly > 0 {
                format!("coverage gaps: {n_poly} polygons, {area:.2} m²\n")
            } else {
                format!("feature collection: {} features\n", features.len())
            })
        }
        _ => bail!("unknown artifact type"),
    }
}

fn describe(out: &mut Output, path: &Path, turn_time: f64, beam: f64) -> anyhow::Result<String> {
    let bytes = out.read_input(path)?;
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    match ext.as_str() {
        "svlog" => Ok(log_text(&logfmt::from_bytes(&bytes)?)),
        "asc" => asc_text(std::str::from_utf8(&bytes)?),
        "json" | "geojson" => json_text(&serde_json::from_slice(&bytes)?, turn_time, beam),
        _ => bail!("unknown artifact type"),
    }
}

fn html_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn report(a: ReportArgs, out: &mut Output) -> anyhow::Result<()> {
    out.begin("report", &a)?;
    let (turn_time, beam) = (a.turn_time.unwrap_or(10.0), a.beam_angle.unwrap_or(5.0));
    let mut sections = Vec::new();
    for p in &a.inputs {
        let text = describe(out, p, turn_time, beam).with_context(|| format!("{}", p.display()))?;
        sections.push((p.display().to_string(), text));
    }
    let mut text = String::new();
    for (name, body) in &sections {
        let _ = write!(text, "== {name}\n{body}");
    }
    print!("{text}");
    out.write(Path::new("report.txt"), text.as_bytes())?;
    if let Some(h) = &a.html {
        let mut html = String::from("<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>asvkit report</title></head><body>\n");
        for (name, body) in &sections {
            let _ = write!(html, "<h2>{}</h2>\n<pre>{}</pre>\n", html_escape(name), html_escape(body));
        }
        html.push_str("</body></html>\n");
        out.write(h, html.as_bytes())?;
    }
    Ok(())
}
