//! Photogrammetric survey geometry.
//!
//! Footprints come from projecting the four image corners onto a horizontal
//! seabed plane. Coverage is checked after the fact by placing a frame every
//! `frame_interval` seconds along a logged track and measuring how the
//! footprints overlap, both between consecutive frames and between passes.

use crate::geo::{self, EnuPoint, GeoError, GeoPoint, Pose};
use crate::logfmt::SurveyLog;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::{self, Write};
use thiserror::Error;

/// Refractive index of seawater used for flat-port FOV conversion.
pub const WATER_REFRACTIVE_INDEX: f64 = 1.33;

#[derive(Debug, Error)]
pub enum PhotoError {
    #[error("camera: {0}")]
    Camera(String),
    #[error("geometry: {0}")]
    Geometry(String),
    #[error("no frames in the requested window")]
    NoFrames,
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Camera geometry as seen through the water. Angles in degrees.
///
/// The horizontal image axis runs across track (starboard), the vertical one
/// along track. A positive tilt pitches the optical axis forward from nadir.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraModel {
    pub horizontal_fov_in_water: f64,
    pub vertical_fov_in_water: f64,
    /// Seconds between frames used for reconstruction.
    pub frame_interval: f64,
    pub tilt_from_vertical: f64,
}

impl Default for CameraModel {
    fn default() -> Self {
        Self {
            horizontal_fov_in_water: 60.0,
            vertical_fov_in_water: 45.0,
            frame_interval: 0.5,
            tilt_from_vertical: 0.0,
        }
    }
}

/// In-water field of view behind a flat port, degrees.
pub fn in_water_fov(in_air_deg: f64) -> f64 {
    2.0 * ((in_air_deg.to_radians() / 2.0).tan() / WATER_REFRACTIVE_INDEX).atan().to_degrees()
}

impl CameraModel {
    pub fn new(horizontal_fov: f64, vertical_fov: f64, frame_interval: f64, tilt: f64) -> Result<Self, PhotoError> {
        let c = Self {
            horizontal_fov_in_water: horizontal_fov,
            vertical_fov_in_water: vertical_fov,
            frame_interval,
            tilt_from_vertical: tilt,
        };
        c.validate()?;
        Ok(c)
    }

    /// Camera specified by its in-air field of view, converted for a flat port.
    pub fn from_in_air(horizontal_fov: f64, vertical_fov: f64, frame_interval: f64, tilt: f64) -> Result<Self, PhotoError> {
        Self::new(in_water_fov(horizontal_fov), in_water_fov(vertical_fov), frame_interval, tilt)
    }

    pub fn validate(&self) -> Result<(), PhotoError> {
        for (name, v) in [("horizontal", self.horizontal_fov_in_water), ("vertical", self.vertical_fov_in_water)] {
            if !(v > 0.0 && v < 180.0) {
                return Err(PhotoError::Camera(format!("{name} FOV {v} outside (0, 180) degrees")));
            }
        }
        if !(self.frame_interval > 0.0 && self.frame_interval.is_finite()) {
            return Err(PhotoError::Camera(format!("frame interval {} must be positive", self.frame_interval)));
        }
        if !(self.tilt_from_vertical.abs() < 90.0) {
            return Err(PhotoError::Camera(format!("tilt {} must be within ±90 degrees", self.tilt_from_vertical)));
        }
        Ok(())
    }

    fn half_tans(&self) -> (f64, f64) {
        (
            (self.horizontal_fov_in_water.to_radians() / 2.0).tan(),
            (self.vertical_fov_in_water.to_radians() / 2.0).tan(),
        )
    }

    /// Body-frame directions of the image corners: forward-starboard,
    /// forward-port, aft-port, aft-starboard.
    fn corner_rays(&self) -> [Vector3<f64>; 4] {
        let (th, tv) = self.half_tans();
        let (st, ct) = self.tilt_from_vertical.to_radians().sin_cos();
        let axis = Vector3::new(st, 0.0, ct);
        let up = Vector3::new(ct, 0.0, -st);
        let right = Vector3::new(0.0, 1.0, 0.0);
        [(1.0, 1.0), (1.0, -1.0), (-1.0, -1.0), (-1.0, 1.0)].map(|(a, s)| axis + up * (a * tv) + right * (s * th))
    }

    /// Narrowest across-track width of a level footprint at `depth`.
    pub fn swath_width(&self, depth: f64) -> f64 {
        let (th, tv) = self.half_tans();
        let (st, ct) = self.tilt_from_vertical.to_radians().sin_cos();
        2.0 * depth * th / (ct + tv * st)
    }

    /// Along-track length of a level footprint at `depth`.
    pub fn footprint_length(&self, depth: f64) -> f64 {
        let t = self.tilt_from_vertical.to_radians();
        let half = self.vertical_fov_in_water.to_radians() / 2.0;
        depth * ((t + half).tan() - (t - half).tan())
    }
}

/// Footprint of one image on the seabed plane, corners counter-clockwise
/// seen from above.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Footprint {
    pub corners: [EnuPoint; 4],
}

type P2 = [f64; 2];

fn shoelace(poly: &[P2]) -> f64 {
    let n = poly.len();
    (0..n).map(|i| poly[i][0] * poly[(i + 1) % n][1] - poly[(i + 1) % n][0] * poly[i][1]).sum::<f64>() / 2.0
}

fn cross(o: P2, a: P2, b: P2) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Intersection of two counter-clockwise convex polygons.
fn clip(subject: &[P2], clipper: &[P2]) -> Vec<P2> {
    let mut out = subject.to_vec();
    for i in 0..clipper.len() {
        if out.is_empty() {
            break;
        }
        let (a, b) = (clipper[i], clipper[(i + 1) % clipper.len()]);
        let input = std::mem::take(&mut out);
        for j in 0..input.len() {
            let (p, q) = (input[j], input[(j + 1) % input.len()]);
            let (dp, dq) = (cross(a, b, p), cross(a, b, q));
            if dp >= 0.0 {
                out.push(p);
            }
            if (dp >= 0.0) != (dq >= 0.0) {
                let f = dp / (dp - dq);
                out.push([p[0] + (q[0] - p[0]) * f, p[1] + (q[1] - p[1]) * f]);
            }
        }
    }
    out
}

impl Footprint {
    pub fn polygon(&self) -> [P2; 4] {
        self.corners.map(|c| [c.east, c.north])
    }

    pub fn area(&self) -> f64 {
        shoelace(&self.polygon())
    }

    pub fn centroid(&self) -> P2 {
        let p = self.polygon();
        [p.iter().map(|q| q[0]).sum::<f64>() / 4.0, p.iter().map(|q| q[1]).sum::<f64>() / 4.0]
    }

    pub fn is_convex(&self) -> bool {
        let p = self.polygon();
        (0..4).all(|i| cross(p[i], p[(i + 1) % 4], p[(i + 2) % 4]) > 0.0)
    }

    pub fn contains(&self, east: f64, north: f64) -> bool {
        let p = self.polygon();
        (0..4).all(|i| cross(p[i], p[(i + 1) % 4], [east, north]) >= 0.0)
    }

    /// Area shared with another footprint.
    pub fn intersection_area(&self, other: &Footprint) -> f64 {
        let poly = clip(&self.polygon(), &other.polygon());
        if poly.len() < 3 {
            0.0
        } else {
            shoelace(&poly).max(0.0)
        }
    }

    /// Extent of the footprint along a horizontal unit direction.
    fn projection(&self, dir: P2) -> (f64, f64) {
        self.polygon().iter().map(|p| p[0] * dir[0] + p[1] * dir[1]).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        })
    }
}

/// Projects the camera's field of view onto the horizontal plane `depth`
/// meters below the pose.
pub fn footprint(pose: &Pose, camera: &CameraModel, depth: f64) -> Result<Footprint, PhotoError> {
    camera.validate()?;
    if !(depth > 0.0 && depth.is_finite()) {
        return Err(PhotoError::Geometry(format!("depth {depth} must be positive")));
    }
    let mut corners = [EnuPoint::ORIGIN; 4];
    for (k, ray) in camera.corner_rays().iter().enumerate() {
        let d = geo::rotate_body_to_enu(*ray, &pose.attitude);
        if d.z >= -1e-6 * d.norm() {
            return Err(PhotoError::Geometry("a corner ray does not reach the seabed".into()));
        }
        corners[k] = pose.position + d * (depth / -d.z);
    }
    Ok(Footprint { corners })
}

/// Transect spacing giving `target_overlap` side-lap at `depth`. Pass the
/// shallowest depth of the area: overlap only grows with depth.
pub fn spacing_for_overlap(camera: &CameraModel, depth: f64, target_overlap: f64) -> Result<f64, PhotoError> {
    camera.validate()?;
    if !(0.0..1.0).contains(&target_overlap) {
        return Err(PhotoError::Geometry(format!("overlap {target_overlap} outside [0, 1)")));
    }
    if !(depth > 0.0 && depth.is_finite()) {
        return Err(PhotoError::Geometry(format!("depth {depth} must be positive")));
    }
    Ok((1.0 - target_overlap) * camera.swath_width(depth))
}

/// In-water horizontal FOV a nadir camera needs for `target_overlap` side-lap
/// with transects `spacing` apart at `depth`, degrees.
pub fn required_fov(spacing: f64, depth: f64, target_overlap: f64) -> f64 {
    2.0 * (spacing / (2.0 * depth * (1.0 - target_overlap))).atan().to_degrees()
}

// ---------------------------------------------------------------------------
// Coverage

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub east_min: f64,
    pub east_max: f64,
    pub north_min: f64,
    pub north_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoverageOptions {
    pub cell_size: f64,
    pub target_overlap: f64,
    /// Area to assess; defaults to the bounding box of all footprints.
    pub area: Option<Rect>,
    /// Time window in seconds; defaults to the whole log.
    pub window: Option<(f64, f64)>,
    /// Heading change, degrees, that ends a pass.
    pub pass_alignment: f64,
    /// Passes shorter than this, meters, are treated as turns.
    pub min_pass_length: f64,
}

impl Default for CoverageOptions {
    fn default() -> Self {
        Self {
            cell_size: 0.1,
            target_overlap: 0.7,
            area: None,
            window: None,
            pass_alignment: 10.0,
            min_pass_length: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub pose: Pose,
    pub footprint: Footprint,
    /// Straight pass this frame belongs to, if any.
    pub pass: Option<usize>,
}

/// Per-cell image counts.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageRaster {
    pub x0: f64,
    pub y0: f64,
    pub cell_size: f64,
    pub rows: usize,
    pub cols: usize,
    /// Row-major from the southern row.
    pub counts: Vec<u32>,
}

impl CoverageRaster {
    pub fn count(&self, row: usize, col: usize) -> u32 {
        self.counts[row * self.cols + col]
    }

    pub fn cell_center(&self, row: usize, col: usize) -> P2 {
        [
            self.x0 + (col as f64 + 0.5) * self.cell_size,
            self.y0 + (row as f64 + 0.5) * self.cell_size,
        ]
    }

    /// Calls `f` with the row and column of every cell whose center lies in
    /// the footprint.
    fn for_cells_in(&self, fp: &Footprint, mut f: impl FnMut(usize, usize)) {
        let p = fp.polygon();
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for q in &p {
            for k in 0..2 {
                lo[k] = lo[k].min(q[k]);
                hi[k] = hi[k].max(q[k]);
            }
        }
        let c0 = (((lo[0] - self.x0) / self.cell_size - 0.5).ceil().max(0.0)) as usize;
        let r0 = (((lo[1] - self.y0) / self.cell_size - 0.5).ceil().max(0.0)) as usize;
        let c1 = ((hi[0] - self.x0) / self.cell_size - 0.5).floor();
        let r1 = ((hi[1] - self.y0) / self.cell_size - 0.5).floor();
        if c1 < 0.0 || r1 < 0.0 {
            return;
        }
        let c1 = (c1 as usize).min(self.cols.saturating_sub(1));
        let r1 = (r1 as usize).min(self.rows.saturating_sub(1));
        for r in r0..=r1 {
            for c in c0..=c1 {
                let [e, n] = self.cell_center(r, c);
                if fp.contains(e, n) {
                    f(r, c);
                }
            }
        }
    }
}

/// Uncovered region as rings of local (east, north) vertices: the outer
/// boundary first, then holes.
#[derive(Debug, Clone, PartialEq)]
pub struct Gap {
    pub rings: Vec<Vec<P2>>,
    pub area: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageReport {
    pub frames: Vec<Frame>,
    pub raster: CoverageRaster,
    /// Fraction of the area seen by at least one frame.
    pub covered_fraction: f64,
    /// Fraction of the area inside a frame whose overlap with its predecessor
    /// or successor reaches the target.
    pub forward_ok_fraction: f64,
    /// Overlap of each consecutive frame pair within a pass, as a fraction of
    /// the earlier footprint.
    pub forward_overlaps: Vec<f64>,
    /// For each pass frame with a neighboring pass, the across-track overlap
    /// with the nearest frame of that pass, as a fraction of its own width.
    pub side_overlaps: Vec<f64>,
    pub forward_min: Option<f64>,
    pub side_min: Option<f64>,
    pub forward_ok: bool,
    pub side_ok: bool,
    pub passes: usize,
    /// Frames skipped because the seabed depth there was not positive.
    pub skipped_frames: usize,
    pub gaps: Vec<Gap>,
}

fn heading_dirs(yaw: f64) -> (P2, P2) {
    let (s, c) = yaw.sin_cos();
    ([s, c], [c, -s])
}

/// Splits frames into straight passes of near-constant heading.
fn assign_passes(frames: &mut [Frame], alignment: f64, min_length: f64) -> usize {
    let mut segments: Vec<(usize, usize)> = Vec::new();
    let mut start = 0;
    for i in 1..=frames.len() {
        let split = i == frames.len()
            || geo::wrap_pi(frames[i].pose.attitude.yaw - frames[start].pose.attitude.yaw).abs() > alignment.to_radians();
        if split {
            segments.push((start, i));
            start = i;
        }
    }
    let mut passes = 0;
    for (a, b) in segments {
        let length = frames[a].pose.position.horizontal_distance(frames[b - 1].pose.position);
        if b - a >= 2 && length >= min_length {
            for f in &mut frames[a..b] {
                f.pass = Some(passes);
            }
            passes += 1;
        }
    }
    passes
}

fn side_overlap_of(frame: &Frame, other: &Frame) -> f64 {
    let (_, across) = heading_dirs(frame.pose.attitude.yaw);
    let (a0, a1) = frame.footprint.projection(across);
    let (b0, b1) = other.footprint.projection(across);
    ((a1.min(b1) - a0.max(b0)).max(0.0) / (a1 - a0)).min(1.0)
}

/// Places frames along the logged track and measures their coverage.
///
/// Frames sit at the water surface above the logged antenna position with
/// the logged attitude. `depth` gives the seabed depth at a local (east,
/// north) position.
pub fn coverage_report(
    log: &SurveyLog,
    camera: &CameraModel,
    depth: &dyn Fn(f64, f64) -> f64,
    opts: &CoverageOptions,
) -> Result<CoverageReport, PhotoError> {
    camera.validate()?;
    if !(opts.cell_size > 0.0 && (0.0..1.0).contains(&opts.target_overlap)) {
        return Err(PhotoError::Geometry("cell size must be positive and target overlap in [0, 1)".into()));
    }
    let track = log.pose_track()?;
    let (mut t0, mut t1) = track.span().ok_or(PhotoError::NoFrames)?;
    if let Some((w0, w1)) = opts.window {
        t0 = t0.max(w0);
        t1 = t1.min(w1);
    }
    let mut frames = Vec::new();
    let mut skipped_frames = 0;
    let mut k = 0u64;
    loop {
        let t = t0 + k as f64 * camera.frame_interval;
        if t > t1 {
            break;
        }
        k += 1;
        let Some(mut pose) = track.pose_at(t) else { continue };
        pose.position.up = 0.0;
        let d = depth(pose.position.east, pose.position.north);
        if !(d > 0.0) {
            skipped_frames += 1;
            continue;
        }
        frames.push(Frame {
            pose,
            footprint: footprint(&pose, camera, d)?,
            pass: None,
        });
    }
    if frames.is_empty() {
        return Err(PhotoError::NoFrames);
    }
    let passes = assign_passes(&mut frames, opts.pass_alignment, opts.min_pass_length);

    // Forward overlap between consecutive frames of a pass.
    let mut forward_overlaps = Vec::new();
    let mut best_forward = vec![0.0f64; frames.len()];
    for i in 0..frames.len() - 1 {
        let (a, b) = (&frames[i], &frames[i + 1]);
        if a.pass.is_some() && a.pass == b.pass {
            let o = a.footprint.intersection_area(&b.footprint) / a.footprint.area();
            forward_overlaps.push(o);
            best_forward[i] = best_forward[i].max(o);
            best_forward[i + 1] = best_forward[i + 1].max(o);
        }
    }

    // Side overlap against the nearest frame of every other pass.
    let reach = frames
        .iter()
        .map(|f| {
            let p = f.footprint.polygon();
            (0..4).map(|i| (p[i][0] - p[(i + 2) % 4][0]).hypot(p[i][1] - p[(i + 2) % 4][1])).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
        .max(1e-6);
    let key = |p: P2| ((p[0] / reach).floor() as i64, (p[1] / reach).floor() as i64);
    let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, f) in frames.iter().enumerate() {
        if f.pass.is_some() {
            buckets.entry(key(f.footprint.centroid())).or_default().push(i);
        }
    }
    let mut side_overlaps = Vec::new();
    for f in frames.iter().filter(|f| f.pass.is_some()) {
        let c = f.footprint.centroid();
        let (kx, ky) = key(c);
        let mut nearest: HashMap<usize, (f64, usize)> = HashMap::new();
        for dx in -1..=1 {
            for dy in -1..=1 {
                for &j in buckets.get(&(kx + dx, ky + dy)).into_iter().flatten() {
                    let g = &frames[j];
                    if g.pass == f.pass {
                        continue;
                    }
                    let q = g.footprint.centroid();
                    let d = (q[0] - c[0]).hypot(q[1] - c[1]);
                    let entry = nearest.entry(g.pass.expect("pass frame")).or_insert((f64::INFINITY, j));
                    if d < entry.0 {
                        *entry = (d, j);
                    }
                }
            }
        }
        let (along, _) = heading_dirs(f.pose.attitude.yaw);
        let (a0, a1) = f.footprint.projection(along);
        let best = nearest
            .values()
            .filter(|(_, j)| {
                let (b0, b1) = frames[*j].footprint.projection(along);
                a1.min(b1) > a0.max(b0)
            })
            .map(|(_, j)| side_overlap_of(f, &frames[*j]))
            .fold(None, |acc: Option<f64>, o| Some(acc.map_or(o, |a| a.max(o))));
        if let Some(o) = best {
            side_overlaps.push(o);
        }
    }

    // Raster.
    let area = opts.area.unwrap_or_else(|| {
        let mut r = Rect {
            east_min: f64::INFINITY,
            east_max: f64::NEG_INFINITY,
            north_min: f64::INFINITY,
            north_max: f64::NEG_INFINITY,
        };
        for p in frames.iter().flat_map(|f| f.footprint.polygon()) {
            r.east_min = r.east_min.min(p[0]);
            r.east_max = r.east_max.max(p[0]);
            r.north_min = r.north_min.min(p[1]);
            r.north_max = r.north_max.max(p[1]);
        }
        r
    });
    if !(area.east_max > area.east_min && area.north_max > area.north_min) {
        return Err(PhotoError::Geometry("coverage area is empty".into()));
    }
    let cols = ((area.east_max - area.east_min) / opts.cell_size).ceil() as usize;
    let rows = ((area.north_max - area.north_min) / opts.cell_size).ceil() as usize;
    let mut raster = CoverageRaster {
        x0: area.east_min,
        y0: area.north_min,
        cell_size: opts.cell_size,
        rows,
        cols,
        counts: vec![0; rows * cols],
    };
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(frames.len());
    let chunk = frames.len().div_ceil(workers);
    let partials: Vec<(Vec<u32>, Vec<bool>)> = std::thread::scope(|s| {
        let handles: Vec<_> = frames
            .chunks(chunk)
            .zip(best_forward.chunks(chunk))
            .map(|(fs, bf)| {
                let raster = &raster;
                s.spawn(move || {
                    let mut counts = vec![0u32; rows * cols];
                    let mut fwd = vec![false; rows * cols];
                    for (f, best) in fs.iter().zip(bf) {
                        let ok = *best >= opts.target_overlap;
                        raster.for_cells_in(&f.footprint, |r, c| {
                            counts[r * cols + c] += 1;
                            fwd[r * cols + c] |= ok;
                        });
                    }
                    (counts, fwd)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("raster worker")).collect()
    });
    let mut forward_cells = vec![false; rows * cols];
    for (counts, fwd) in partials {
        for (k, (c, f)) in counts.into_iter().zip(fwd).enumerate() {
            raster.counts[k] += c;
            forward_cells[k] |= f;
        }
    }
    let total = (rows * cols) as f64;
    let covered_fraction = raster.counts.iter().filter(|c| **c > 0).count() as f64 / total;
    let forward_ok_fraction = forward_cells.iter().filter(|c| **c).count() as f64 / total;
    let min = |v: &[f64]| v.iter().copied().fold(None, |acc: Option<f64>, x| Some(acc.map_or(x, |a| a.min(x))));
    let forward_min = min(&forward_overlaps);
    let side_min = min(&side_overlaps);
    let gaps = trace_gaps(&raster);
    Ok(CoverageReport {
        frames,
        covered_fraction,
        forward_ok_fraction,
        forward_ok: forward_min.is_some_and(|m| m >= opts.target_overlap),
        side_ok: side_min.is_some_and(|m| m >= opts.target_overlap),
        forward_overlaps,
        side_overlaps,
        forward_min,
        side_min,
        passes,
        skipped_frames,
        raster,
        gaps,
    })
}

/// Outlines of the 4-connected regions of cells without any view.
fn trace_gaps(raster: &CoverageRaster) -> Vec<Gap> {
    let (rows, cols) = (raster.rows, raster.cols);
    let empty = |r: i64, c: i64| r >= 0 && c >= 0 && (r as usize) < rows && (c as usize) < cols && raster.count(r as usize, c as usize) == 0;
    let mut label = vec![usize::MAX; rows * cols];
    let mut gaps = Vec::new();
    for start in 0..rows * cols {
        if label[start] != usize::MAX || raster.counts[start] != 0 {
            continue;
        }
        let id = gaps.len();
        let mut stack = vec![start];
        label[start] = id;
        let mut cells = Vec::new();
        while let Some(i) = stack.pop() {
            cells.push(i);
            let (r, c) = ((i / cols) as i64, (i % cols) as i64);
            for (dr, dc) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                let (nr, nc) = (r + dr, c + dc);
                if empty(nr, nc) && label[nr as usize * cols + nc as usize] == usize::MAX {
                    label[nr as usize * cols + nc as usize] = id;
                    stack.push(nr as usize * cols + nc as usize);
                }
            }
        }
        // Directed boundary edges with the gap on their left.
        let inside = |r: i64, c: i64| empty(r, c) && label[r as usize * cols + c as usize] == id;
        let mut edges: HashMap<(i64, i64), Vec<(i64, i64)>> = HashMap::new();
        for &i in &cells {
            let (r, c) = ((i / cols) as i64, (i % cols) as i64);
            if !inside(r - 1, c) {
                edges.entry((c, r)).or_default().push((c + 1, r));
            }
            if !inside(r, c + 1) {
                edges.entry((c + 1, r)).or_default().push((c + 1, r + 1));
            }
            if !inside(r + 1, c) {
                edges.entry((c + 1, r + 1)).or_default().push((c, r + 1));
            }
            if !inside(r, c - 1) {
                edges.entry((c, r + 1)).or_default().push((c, r));
            }
        }
        let mut rings = Vec::new();
        let mut starts: Vec<(i64, i64)> = edges.keys().copied().collect();
        starts.sort();
        for s in starts {
            while let Some(first) = edges.get_mut(&s).and_then(|v| v.pop()) {
                let mut ring = vec![s];
                let (mut prev, mut cur) = (s, first);
                while cur != s {
                    ring.push(cur);
                    let dir = (cur.0 - prev.0, cur.1 - prev.1);
                    let outs = edges.get_mut(&cur).expect("closed boundary");
                    // Sharpest left turn first keeps diagonal neighbors apart.
                    let pick = (0..outs.len())
                        .max_by_key(|&k| {
                            let d = (outs[k].0 - cur.0, outs[k].1 - cur.1);
                            dir.0 * d.1 - dir.1 * d.0
                        })
                        .expect("closed boundary");
                    let next = outs.swap_remove(pick);
                    prev = cur;
                    cur = next;
                }
                rings.push(simplify(&ring));
            }
        }
        let to_local = |ring: &Vec<(i64, i64)>| -> Vec<P2> {
            ring.iter()
                .map(|&(c, r)| [raster.x0 + c as f64 * raster.cell_size, raster.y0 + r as f64 * raster.cell_size])
                .collect()
        };
        let mut rings: Vec<Vec<P2>> = rings.iter().map(to_local).collect();
        rings.sort_by(|a, b| shoelace(b).total_cmp(&shoelace(a)));
        gaps.push(Gap {
            area: cells.len() as f64 * raster.cell_size * raster.cell_size,
            rings,
        });
    }
    gaps
}

/// Drops vertices in the middle of straight runs.
fn simplify(ring: &[(i64, i64)]) -> Vec<(i64, i64)> {
    let n = ring.len();
    (0..n)
        .filter(|&i| {
            let (a, b, c) = (ring[(i + n - 1) % n], ring[i], ring[(i + 1) % n]);
            (b.0 - a.0) * (c.1 - b.1) - (b.1 - a.1) * (c.0 - b.0) != 0
        })
        .map(|i| ring[i])
        .collect()
}

/// Image counts as an ESRI ASCII grid, north row first. Cells never seen
/// hold the NODATA value 0.
pub fn write_coverage_asc<W: Write>(raster: &CoverageRaster, mut w: W) -> io::Result<()> {
    writeln!(w, "ncols {}", raster.cols)?;
    writeln!(w, "nrows {}", raster.rows)?;
    writeln!(w, "xllcorner {}", raster.x0)?;
    writeln!(w, "yllcorner {}", raster.y0)?;
    writeln!(w, "cellsize {}", raster.cell_size)?;
    writeln!(w, "NODATA_value 0")?;
    for row in (0..raster.rows).rev() {
        let line: Vec<String> = (0..raster.cols).map(|col| raster.count(row, col).to_string()).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    Ok(())
}

/// Gap polygons as a GeoJSON FeatureCollection.
pub fn write_gaps_geojson<W: Write>(gaps: &[Gap], origin: GeoPoint, w: W) -> Result<(), PhotoError> {
    let mut features = Vec::new();
    for gap in gaps {
        let mut rings = Vec::new();
        for ring in &gap.rings {
            let mut coords = Vec::with_capacity(ring.len() + 1);
            for p in ring.iter().chain(ring.first()) {
                let g = geo::enu_to_geo(EnuPoint::new(p[0], p[1], 0.0), origin)?;
                coords.push([g.longitude, g.latitude]);
            }
            rings.push(coords);
        }
        features.push(serde_json::json!({
            "type": "Feature",
            "geometry": { "type": "Polygon", "coordinates": rings },
            "properties": { "area_m2": gap.area },
        }));
    }
    let doc = serde_json::json!({ "type": "FeatureCollection", "features": features });
    serde_json::to_writer_pretty(w, &doc).map_err(io::Error::from)?;
    Ok(())
}
