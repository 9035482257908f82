//! Single-beam bathymetry processing.
//!
//! A raw log goes through five stages: pose interpolation at each sounding,
//! attitude rejection, sliding-median rejection, lever-arm and beam-ray
//! georeferencing, and vertical reduction to a chart datum. Rejected
//! soundings are flagged, never dropped, so exports can show what was
//! removed and why. The georeferenced points can then be gridded or
//! triangulated.

use crate::geo::{self, EnuPoint, GeoError, GeoPoint, LeverArm, Pose};
use crate::logfmt::{LogRecord, SurveyLog};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{self, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BathyError {
    #[error("no usable soundings")]
    Empty,
    #[error("bathymetry config: {0}")]
    Config(String),
    #[error("triangulation: {0}")]
    Triangulation(String),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

// ---------------------------------------------------------------------------
// Samples and flags

/// Set of quality flags carried by a sounding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct QualityFlags(u8);

impl QualityFlags {
    pub const NONE: QualityFlags = QualityFlags(0);
    pub const ATTITUDE_REJECT: QualityFlags = QualityFlags(1);
    pub const MEDIAN_REJECT: QualityFlags = QualityFlags(2);
    /// Pose bridged a gap in the GPS stream longer than the configured limit.
    pub const INTERPOLATED: QualityFlags = QualityFlags(4);

    const NAMES: [(QualityFlags, &'static str); 3] = [
        (QualityFlags::ATTITUDE_REJECT, "ATTITUDE_REJECT"),
        (QualityFlags::MEDIAN_REJECT, "MEDIAN_REJECT"),
        (QualityFlags::INTERPOLATED, "INTERPOLATED"),
    ];

    pub fn contains(self, other: QualityFlags) -> bool {
        self.0 & other.0 == other.0
    }

    pub fn insert(&mut self, other: QualityFlags) {
        self.0 |= other.0;
    }

    pub fn union(self, other: QualityFlags) -> QualityFlags {
        QualityFlags(self.0 | other.0)
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// True when a filter removed the sample from the product.
    pub fn is_rejected(self) -> bool {
        self.0 & (Self::ATTITUDE_REJECT.0 | Self::MEDIAN_REJECT.0) != 0
    }

    pub fn names(self) -> impl Iterator<Item = &'static str> {
        Self::NAMES.into_iter().filter(move |(f, _)| self.contains(*f)).map(|(_, n)| n)
    }
}

impl fmt::Display for QualityFlags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.names().collect();
        f.write_str(&names.join("|"))
    }
}

/// One sounding with the antenna pose at its timestamp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub pose: Pose,
    /// Slant range along the beam, meters.
    pub raw_depth: f64,
    pub flags: QualityFlags,
}

/// A sounding placed on the seafloor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthPoint {
    pub timestamp: f64,
    pub ground_position: EnuPoint,
    /// Depth below the chart datum, meters, positive down.
    pub corrected_depth: f64,
    pub quality_flags: QualityFlags,
}

/// Pairs every sounding with the GPS antenna position and attitude
/// interpolated at its timestamp.
///
/// Soundings outside the span of either stream are dropped: there is no pose
/// to place them. GPS records without a fix are ignored. Soundings whose
/// bracketing GPS records are more than `max_gps_gap` seconds apart are
/// flagged INTERPOLATED.
pub fn samples_from_log(log: &SurveyLog, max_gps_gap: f64) -> Result<Vec<Sample>, BathyError> {
    let track = log.pose_track()?;
    let mut out = Vec::new();
    for r in &log.records {
        let LogRecord::Dpth(d) = r else { continue };
        let t = d.t.seconds();
        let (Some((position, gap)), Some(attitude)) = (track.position_at(t), track.attitude_at(t)) else {
            continue;
        };
        let mut flags = QualityFlags::NONE;
        if gap > max_gps_gap {
            flags.insert(QualityFlags::INTERPOLATED);
        }
        out.push(Sample {
            pose: Pose::new(t, position, attitude),
            raw_depth: d.raw_depth,
            flags,
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Filters

/// Flags samples whose roll or pitch magnitude exceeds `max_angle_deg`.
/// A sample exactly at the limit is kept.
pub fn attitude_filter(samples: &[Sample], max_angle_deg: f64) -> Vec<Sample> {
    let limit = max_angle_deg.to_radians();
    samples
        .iter()
        .map(|s| {
            let mut s = *s;
            if s.pose.attitude.roll.abs() > limit || s.pose.attitude.pitch.abs() > limit {
                s.flags.insert(QualityFlags::ATTITUDE_REJECT);
            }
            s
        })
        .collect()
}

/// Half-width of the acceptance band around the running median.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "UPPERCASE")]
pub enum Band {
    /// Fixed width, meters.
    Fixed { width: f64 },
    /// `k` robust standard deviations of the window (1.4826 × MAD), never
    /// narrower than `floor` meters.
    Robust { k: f64, floor: f64 },
}

impl Default for Band {
    fn default() -> Self {
        Band::Robust { k: 3.0, floor: 0.5 }
    }
}

impl Band {
    fn validate(&self) -> Result<(), BathyError> {
        let ok = match *self {
            Band::Fixed { width } => width > 0.0 && width.is_finite(),
            Band::Robust { k, floor } => k > 0.0 && k.is_finite() && floor >= 0.0 && floor.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(BathyError::Config(format!("invalid median band {self:?}")))
        }
    }
}

fn median_of(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Flags samples further than the band from the median of a centered window.
///
/// Samples already rejected by an earlier stage are skipped and do not enter
/// any window. Near the ends the window shrinks symmetrically, so the first
/// and last samples are compared only with themselves.
pub fn median_filter(samples: &[Sample], window: usize, band: Band) -> Result<Vec<Sample>, BathyError> {
    if window < 3 || window % 2 == 0 {
        return Err(BathyError::Config(format!("median window {window} must be odd and at least 3")));
    }
    band.validate()?;
    let eligible: Vec<usize> = (0..samples.len()).filter(|&i| !samples[i].flags.is_rejected()).collect();
    let depths: Vec<f64> = eligible.iter().map(|&i| samples[i].raw_depth).collect();
    let n = depths.len();
    let h = window / 2;
    let mut out = samples.to_vec();
    let mut buf = Vec::with_capacity(window);
    for k in 0..n {
        let half = h.min(k).min(n - 1 - k);
        buf.clear();
        buf.extend_from_slice(&depths[k - half..=k + half]);
        let m = median_of(&mut buf);
        let width = match band {
            Band::Fixed { width } => width,
            Band::Robust { k: factor, floor } => {
                for v in buf.iter_mut() {
                    *v = (*v - m).abs();
                }
                (factor * 1.4826 * median_of(&mut buf)).max(floor)
            }
        };
        if (depths[k] - m).abs() > width {
            out[eligible[k]].flags.insert(QualityFlags::MEDIAN_REJECT);
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Georeferencing

/// How the vertical position of the seabed is tied to the datum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum VerticalReference {
    /// Seabed ellipsoidal height from the GPS antenna height, lever arm and
    /// beam, converted with the geoid undulation. Needs a vertical-grade fix.
    GpsHeight,
    /// The sounder sits `immersion` meters below a water surface assumed to
    /// be at the geoid. GPS height is ignored.
    Waterline { immersion: f64 },
}

impl Default for VerticalReference {
    fn default() -> Self {
        VerticalReference::GpsHeight
    }
}

/// Places each sample on the seafloor and reduces it to the chart datum.
///
/// The sounder sits at the antenna position plus the rotated lever arm and
/// ranges along its body-down axis. `datum_offset` is the orthometric height
/// of the chart datum and `geoid_undulation` the geoid height above the
/// ellipsoid, both meters. Flags are carried through unchanged, so rejected
/// samples still get a location for export.
pub fn georeference(
    samples: &[Sample],
    lever_arm: &LeverArm,
    datum_offset: f64,
    geoid_undulation: f64,
    vertical: VerticalReference,
    origin: GeoPoint,
) -> Result<Vec<DepthPoint>, BathyError> {
    samples
        .iter()
        .map(|s| {
            let sounder = geo::apply_lever_arm(&s.pose, lever_arm);
            let beam = geo::rotate_body_to_enu(Vector3::new(0.0, 0.0, 1.0), &s.pose.attitude) * s.raw_depth;
            let ground = sounder + beam;
            let corrected_depth = match vertical {
                VerticalReference::GpsHeight => {
                    let h = geo::enu_to_geo(ground, origin)?.ellipsoidal_height;
                    datum_offset + geoid_undulation - h
                }
                VerticalReference::Waterline { immersion } => -beam.z + immersion - datum_offset,
            };
            Ok(DepthPoint {
                timestamp: s.pose.timestamp,
                ground_position: ground,
                corrected_depth,
                quality_flags: s.flags,
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Gridding

pub const NODATA: f64 = -9999.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "UPPERCASE")]
pub enum GridMethod {
    Mean,
    /// Inverse-distance-squared weighting of points within `radius` meters
    /// of the cell center.
    Idw { radius: f64 },
}

impl Default for GridMethod {
    fn default() -> Self {
        GridMethod::Mean
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridCell {
    pub depth: f64,
    pub count: u32,
    pub sigma: f64,
}

/// Regular depth grid in the local frame of `origin`.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthGrid {
    pub origin: GeoPoint,
    /// Local east and north of the grid's south-west corner.
    pub x0: f64,
    pub y0: f64,
    pub cell_size: f64,
    pub rows: usize,
    pub cols: usize,
    /// Row-major, row 0 is the southernmost.
    pub cells: Vec<Option<GridCell>>,
}

impl DepthGrid {
    pub fn get(&self, row: usize, col: usize) -> Option<&GridCell> {
        if row < self.rows && col < self.cols {
            self.cells[row * self.cols + col].as_ref()
        } else {
            None
        }
    }

    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        (
            self.x0 + (col as f64 + 0.5) * self.cell_size,
            self.y0 + (row as f64 + 0.5) * self.cell_size,
        )
    }

    /// Row and column of the cell containing a local position.
    pub fn locate(&self, east: f64, north: f64) -> Option<(usize, usize)> {
        let c = ((east - self.x0) / self.cell_size).floor();
        let r = ((north - self.y0) / self.cell_size).floor();
        if c < 0.0 || r < 0.0 || c >= self.cols as f64 || r >= self.rows as f64 {
            return None;
        }
        Some((r as usize, c as usize))
    }

    /// Populated cells with their row and column.
    pub fn populated(&self) -> impl Iterator<Item = (usize, usize, &GridCell)> {
        self.cells
            .iter()
            .enumerate()
            .filter_map(move |(i, c)| c.as_ref().map(|c| (i / self.cols, i % self.cols, c)))
    }
}

/// Running count, mean and sum of squared deviations.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    fn merge(&mut self, o: &Moments) {
        if o.n == 0 {
            return;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        self.mean += d * o.n as f64 / n as f64;
        self.m2 += o.m2 + d * d * (self.n as f64 * o.n as f64) / n as f64;
        self.n = n;
    }

    fn sigma(&self) -> f64 {
        if self.n > 1 {
            (self.m2 / (self.n - 1) as f64).sqrt()
        } else {
            0.0
        }
    }
}

/// Per-cell mean accumulator. Cells are aligned to multiples of the cell
/// size, so accumulators filled from disjoint chunks of a survey can be
/// merged in any order.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanAccumulator {
    cell_size: f64,
    cells: BTreeMap<(i64, i64), Moments>,
}

impl MeanAccumulator {
    pub fn new(cell_size: f64) -> Result<Self, BathyError> {
        if !(cell_size > 0.0 && cell_size.is_finite()) {
            return Err(BathyError::Config(format!("cell size {cell_size} must be positive")));
        }
        Ok(Self {
            cell_size,
            cells: BTreeMap::new(),
        })
    }

    fn key(&self, east: f64, north: f64) -> (i64, i64) {
        ((north / self.cell_size).floor() as i64, (east / self.cell_size).floor() as i64)
    }

    /// Adds a point unless it has been rejected.
    pub fn add(&mut self, p: &DepthPoint) {
        if p.quality_flags.is_rejected() || !p.corrected_depth.is_finite() || !p.ground_position.is_finite() {
            return;
        }
        let k = self.key(p.ground_position.east, p.ground_position.north);
        self.cells.entry(k).or_default().push(p.corrected_depth);
    }

    pub fn merge(&mut self, other: &MeanAccumulator) -> Result<(), BathyError> {
        if other.cell_size != self.cell_size {
            return Err(BathyError::Config("cannot merge grids with different cell sizes".into()));
        }
        for (k, m) in &other.cells {
            self.cells.entry(*k).or_default().merge(m);
        }
        Ok(())
    }

    pub fn finish(&self, origin: GeoPoint) -> Result<DepthGrid, BathyError> {
        let (r0, r1) = span(self.cells.keys().map(|k| k.0)).ok_or(BathyError::Empty)?;
        let (c0, c1) = span(self.cells.keys().map(|k| k.1)).ok_or(BathyError::Empty)?;
        let rows = (r1 - r0 + 1) as usize;
        let cols = (c1 - c0 + 1) as usize;
        let mut cells = vec![None; rows * cols];
        for ((r, c), m) in &self.cells {
            cells[(r - r0) as usize * cols + (c - c0) as usize] = Some(GridCell {
                depth: m.mean,
                count: m.n as u32,
                sigma: m.sigma(),
            });
        }
        Ok(DepthGrid {
            origin,
            x0: c0 as f64 * self.cell_size,
            y0: r0 as f64 * self.cell_size,
            cell_size: self.cell_size,
            rows,
            cols,
            cells,
        })
    }
}

fn span(it: impl Iterator<Item = i64>) -> Option<(i64, i64)> {
    it.fold(None, |acc, v| match acc {
        None => Some((v, v)),
        Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
    })
}

/// Grids the unrejected points. The grid covers their bounding box on cell
/// boundaries aligned to multiples of `cell_size`; cells with no data are
/// `None`.
pub fn grid(points: &[DepthPoint], cell_size: f64, method: GridMethod, origin: GeoPoint) -> Result<DepthGrid, BathyError> {
    let mut acc = MeanAccumulator::new(cell_size)?;
    for p in points {
        acc.add(p);
    }
    let mean = acc.finish(origin)?;
    match method {
        GridMethod::Mean => Ok(mean),
        GridMethod::Idw { radius } => {
            if !(radius > 0.0 && radius.is_finite()) {
                return Err(BathyError::Config(format!("IDW radius {radius} must be positive")));
            }
            Ok(idw(points, mean, radius))
        }
    }
}

fn idw(points: &[DepthPoint], frame: DepthGrid, radius: f64) -> DepthGrid {
    let cs = frame.cell_size;
    let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, p) in points.iter().enumerate() {
        if p.quality_flags.is_rejected() || !p.corrected_depth.is_finite() {
            continue;
        }
        let key = ((p.ground_position.north / cs).floor() as i64, (p.ground_position.east / cs).floor() as i64);
        buckets.entry(key).or_default().push(i);
    }
    let reach = (radius / cs).ceil() as i64;
    let r2 = radius * radius;
    let row0 = (frame.y0 / cs).round() as i64;
    let col0 = (frame.x0 / cs).round() as i64;
    let mut cells = vec![None; frame.rows * frame.cols];
    for row in 0..frame.rows {
        for col in 0..frame.cols {
            let (e, n) = frame.cell_center(row, col);
            let (gr, gc) = (row0 + row as i64, col0 + col as i64);
            let mut wsum = 0.0;
            let mut dsum = 0.0;
            let mut d2sum = 0.0;
            let mut count = 0u32;
            let mut exact = None;
            for dr in -reach..=reach {
                for dc in -reach..=reach {
                    let Some(idx) = buckets.get(&(gr + dr, gc + dc)) else { continue };
                    for &i in idx {
                        let p = &points[i];
                        let d2 = (p.ground_position.east - e).powi(2) + (p.ground_position.north - n).powi(2);
                        if d2 > r2 {
                            continue;
                        }
                        count += 1;
                        if d2 < 1e-18 {
                            exact.get_or_insert(p.corrected_depth);
                            continue;
                        }
                        let w = 1.0 / d2;
                        wsum += w;
                        dsum += w * p.corrected_depth;
                        d2sum += w * p.corrected_depth * p.corrected_depth;
                    }
                }
            }
            if count == 0 {
                continue;
            }
            let (depth, sigma) = match exact {
                Some(d) => (d, 0.0),
                None => {
                    let m = dsum / wsum;
                    (m, (d2sum / wsum - m * m).max(0.0).sqrt())
                }
            };
            cells[row * frame.cols + col] = Some(GridCell { depth, count, sigma });
        }
    }
    DepthGrid { cells, ..frame }
}

// ---------------------------------------------------------------------------
// Triangulation

/// Triangulated irregular network over the horizontal projection of the
/// vertices. Triangles are counter-clockwise seen from above.
#[derive(Debug, Clone, PartialEq)]
pub struct Tin {
    pub vertices: Vec<DepthPoint>,
    pub triangles: Vec<[usize; 3]>,
}

type P2 = [f64; 2];

fn orient(a: P2, b: P2, c: P2) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

/// Positive when `d` lies strictly inside the circumcircle of the
/// counter-clockwise triangle `abc`.
fn in_circle(a: P2, b: P2, c: P2, d: P2) -> f64 {
    let (adx, ady) = (a[0] - d[0], a[1] - d[1]);
    let (bdx, bdy) = (b[0] - d[0], b[1] - d[1]);
    let (cdx, cdy) = (c[0] - d[0], c[1] - d[1]);
    let ad = adx * adx + ady * ady;
    let bd = bdx * bdx + bdy * bdy;
    let cd = cdx * cdx + cdy * cdy;
    adx * (bdy * cd - bd * cdy) - ady * (bdx * cd - bd * cdx) + ad * (bdx * cdy - bdy * cdx)
}

struct Mesh {
    pts: Vec<P2>,
    tris: Vec<[usize; 3]>,
    /// Neighbor across the edge opposite each vertex.
    nbrs: Vec<[Option<usize>; 3]>,
    alive: Vec<bool>,
    stamp: Vec<u32>,
}

impl Mesh {
    fn contains_circle(&self, t: usize, p: P2) -> bool {
        let [a, b, c] = self.tris[t];
        in_circle(self.pts[a], self.pts[b], self.pts[c], p) > 0.0
    }

    /// Visibility walk towards `p`, falling back to a scan if rounding makes
    /// the walk cycle.
    fn locate(&self, start: usize, p: P2) -> usize {
        let mut t = start;
        'walk: for _ in 0..self.tris.len() {
            let v = self.tris[t];
            for i in 0..3 {
                let (a, b) = (self.pts[v[(i + 1) % 3]], self.pts[v[(i + 2) % 3]]);
                if orient(a, b, p) < 0.0 {
                    if let Some(n) = self.nbrs[t][i] {
                        t = n;
                        continue 'walk;
                    }
                }
            }
            return t;
        }
        (0..self.tris.len())
            .filter(|&t| self.alive[t])
            .find(|&t| self.contains_circle(t, p))
            .unwrap_or(start)
    }

    fn insert(&mut self, pi: usize, start: usize, epoch: u32) -> usize {
        let p = self.pts[pi];
        let seed = self.locate(start, p);
        let mut cavity = vec![seed];
        self.stamp[seed] = epoch;
        let mut k = 0;
        while k < cavity.len() {
            let t = cavity[k];
            k += 1;
            for n in self.nbrs[t].into_iter().flatten() {
                if self.stamp[n] != epoch && self.contains_circle(n, p) {
                    self.stamp[n] = epoch;
                    cavity.push(n);
                }
            }
        }
        let mut boundary = Vec::new();
        for &t in &cavity {
            let v = self.tris[t];
            for i in 0..3 {
                let outer = self.nbrs[t][i];
                if outer.is_none_or(|n| self.stamp[n] != epoch) {
                    boundary.push((v[(i + 1) % 3], v[(i + 2) % 3], outer, t));
                }
            }
            self.alive[t] = false;
        }
        let first = self.tris.len();
        let mut by_start = HashMap::with_capacity(boundary.len());
        let mut by_end = HashMap::with_capacity(boundary.len());
        for (k, &(a, b, _, _)) in boundary.iter().enumerate() {
            by_start.insert(a, first + k);
            by_end.insert(b, first + k);
        }
        for &(a, b, outer, old) in &boundary {
            let id = self.tris.len();
            self.tris.push([a, b, pi]);
            self.nbrs.push([by_start.get(&b).copied(), by_end.get(&a).copied(), outer]);
            self.alive.push(true);
            self.stamp.push(0);
            if let Some(n) = outer {
                for slot in self.nbrs[n].iter_mut() {
                    if *slot == Some(old) {
                        *slot = Some(id);
                    }
                }
            }
        }
        first
    }
}

/// Delaunay triangulation of the horizontal projection (incremental
/// Bowyer–Watson). Points repeating an earlier horizontal position are
/// skipped; depths ride along as vertex attributes.
pub fn triangulate(points: &[DepthPoint]) -> Result<Tin, BathyError> {
    let mut seen = std::collections::HashSet::new();
    let vertices: Vec<DepthPoint> = points
        .iter()
        .filter(|p| p.ground_position.east.is_finite() && p.ground_position.north.is_finite())
        .filter(|p| seen.insert((p.ground_position.east.to_bits(), p.ground_position.north.to_bits())))
        .copied()
        .collect();
    if vertices.len() < 3 {
        return Err(BathyError::Triangulation(format!("need at least 3 distinct points, got {}", vertices.len())));
    }
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for v in &vertices {
        let q = [v.ground_position.east, v.ground_position.north];
        for k in 0..2 {
            lo[k] = lo[k].min(q[k]);
            hi[k] = hi[k].max(q[k]);
        }
    }
    let center = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])];
    let size = (hi[0] - lo[0]).max(hi[1] - lo[1]);
    let mut pts: Vec<P2> = vertices
        .iter()
        .map(|v| [v.ground_position.east - center[0], v.ground_position.north - center[1]])
        .collect();

    // Collinearity against the widest pair through the first point.
    let far = (1..pts.len())
        .max_by(|&i, &j| {
            let di = (pts[i][0] - pts[0][0]).hypot(pts[i][1] - pts[0][1]);
            let dj = (pts[j][0] - pts[0][0]).hypot(pts[j][1] - pts[0][1]);
            di.total_cmp(&dj)
        })
        .expect("at least 3 points");
    let area_tol = 1e-12 * size * size;
    if pts.iter().all(|&q| orient(pts[0], pts[far], q).abs() <= area_tol) {
        return Err(BathyError::Triangulation("all points are collinear".into()));
    }

    let n = pts.len();
    let m = 100.0 * size.max(1e-3);
    pts.extend([[-2.0 * m, -m], [2.0 * m, -m], [0.0, 2.0 * m]]);
    let mut mesh = Mesh {
        pts,
        tris: vec![[n, n + 1, n + 2]],
        nbrs: vec![[None; 3]],
        alive: vec![true],
        stamp: vec![0],
    };
    // Insert in a row-snaking order so consecutive points are close and the
    // walk stays short.
    let bins = ((n as f64).sqrt() / 2.0).ceil().max(1.0);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        let key = |k: usize| {
            let [x, y] = mesh.pts[k];
            let row = (((y / size.max(1e-9)) + 0.5) * bins).floor().clamp(0.0, bins - 1.0) as i64;
            let xs = if row % 2 == 0 { x } else { -x };
            (row, xs)
        };
        let (a, b) = (key(i), key(j));
        a.0.cmp(&b.0).then(a.1.total_cmp(&b.1))
    });
    let mut last = 0;
    for (epoch, &i) in order.iter().enumerate() {
        last = mesh.insert(i, last, epoch as u32 + 1);
    }
    let triangles: Vec<[usize; 3]> = mesh
        .tris
        .iter()
        .zip(&mesh.alive)
        .filter(|(t, alive)| **alive && t.iter().all(|&v| v < n))
        .map(|(t, _)| *t)
        .filter(|&[a, b, c]| orient(mesh.pts[a], mesh.pts[b], mesh.pts[c]) > area_tol)
        .collect();
    Ok(Tin { vertices, triangles })
}

// ---------------------------------------------------------------------------
// Pipeline

/// Settings for [`process_log`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BathyConfig {
    pub max_angle_deg: f64,
    pub median_window: usize,
    pub band: Band,
    pub vertical: VerticalReference,
    pub datum_offset: f64,
    pub geoid_undulation: f64,
    /// Sounder offset from the antenna. Falls back to the log header's
    /// `sounder` entry, then to zero.
    pub lever_arm: Option<LeverArm>,
    pub cell_size: f64,
    pub method: GridMethod,
    /// Longest GPS gap bridged without flagging, seconds.
    pub max_gps_gap: f64,
}

impl Default for BathyConfig {
    fn default() -> Self {
        Self {
            max_angle_deg: 10.0,
            median_window: 9,
            band: Band::default(),
            vertical: VerticalReference::GpsHeight,
            datum_offset: 0.0,
            geoid_undulation: 0.0,
            lever_arm: None,
            cell_size: 0.5,
            method: GridMethod::Mean,
            max_gps_gap: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BathyProduct {
    /// Every placed sounding, rejected ones included.
    pub points: Vec<DepthPoint>,
    pub grid: DepthGrid,
    pub soundings: usize,
    /// Soundings without a pose to place them.
    pub unplaced: usize,
    pub attitude_rejects: usize,
    pub median_rejects: usize,
}

/// Runs the full pipeline from a raw log to a depth grid.
pub fn process_log(log: &SurveyLog, cfg: &BathyConfig) -> Result<BathyProduct, BathyError> {
    let soundings = log.records.iter().filter(|r| matches!(r, LogRecord::Dpth(_))).count();
    let samples = samples_from_log(log, cfg.max_gps_gap)?;
    let unplaced = soundings - samples.len();
    let samples = attitude_filter(&samples, cfg.max_angle_deg);
    let attitude_rejects = samples.iter().filter(|s| s.flags.contains(QualityFlags::ATTITUDE_REJECT)).count();
    let samples = median_filter(&samples, cfg.median_window, cfg.band)?;
    let median_rejects = samples.iter().filter(|s| s.flags.contains(QualityFlags::MEDIAN_REJECT)).count();
    let arm = cfg
        .lever_arm
        .or_else(|| log.header.lever_arms.get("sounder").copied())
        .unwrap_or(LeverArm::ZERO);
    let points = georeference(&samples, &arm, cfg.datum_offset, cfg.geoid_undulation, cfg.vertical, log.header.origin)?;
    let grid = grid(&points, cfg.cell_size, cfg.method, log.header.origin)?;
    Ok(BathyProduct {
        points,
        grid,
        soundings,
        unplaced,
        attitude_rejects,
        median_rejects,
    })
}

// ---------------------------------------------------------------------------
// Exports

/// ESRI ASCII grid with local-frame corner coordinates, north row first.
pub fn write_asc<W: Write>(grid: &DepthGrid, mut w: W) -> io::Result<()> {
    writeln!(w, "ncols {}", grid.cols)?;
    writeln!(w, "nrows {}", grid.rows)?;
    writeln!(w, "xllcorner {}", grid.x0)?;
    writeln!(w, "yllcorner {}", grid.y0)?;
    writeln!(w, "cellsize {}", grid.cell_size)?;
    writeln!(w, "NODATA_value {NODATA}")?;
    for row in (0..grid.rows).rev() {
        let line: Vec<String> = (0..grid.cols)
            .map(|col| match grid.get(row, col) {
                Some(c) => format!("{:.3}", c.depth),
                None => format!("{NODATA}"),
            })
            .collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    Ok(())
}

/// One row per point: time, local and geodetic position, depth and flags.
pub fn write_xyz_csv<W: Write>(points: &[DepthPoint], origin: GeoPoint, include_rejected: bool, mut w: W) -> Result<(), BathyError> {
    writeln!(w, "t,east,north,latitude,longitude,depth,flags")?;
    for p in points.iter().filter(|p| include_rejected || !p.quality_flags.is_rejected()) {
        let g = geo::enu_to_geo(p.ground_position, origin)?;
        writeln!(
            w,
            "{:.3},{:.3},{:.3},{:.9},{:.9},{:.3},{}",
            p.timestamp, p.ground_position.east, p.ground_position.north, g.latitude, g.longitude, p.corrected_depth, p.quality_flags
        )?;
    }
    Ok(())
}

/// ASCII PLY mesh; z is the negated depth so the surface faces up.
pub fn write_ply<W: Write>(tin: &Tin, mut w: W) -> io::Result<()> {
    writeln!(w, "ply")?;
    writeln!(w, "format ascii 1.0")?;
    writeln!(w, "element vertex {}", tin.vertices.len())?;
    writeln!(w, "property double x")?;
    writeln!(w, "property double y")?;
    writeln!(w, "property double z")?;
    writeln!(w, "element face {}", tin.triangles.len())?;
    writeln!(w, "property list uchar int vertex_indices")?;
    writeln!(w, "end_header")?;
    for v in &tin.vertices {
        writeln!(w, "{:.4} {:.4} {:.4}", v.ground_position.east, v.ground_position.north, -v.corrected_depth)?;
    }
    for [a, b, c] in &tin.triangles {
        writeln!(w, "3 {a} {b} {c}")?;
    }
    Ok(())
}

/// GeoJSON FeatureCollection of the rejected soundings.
pub fn write_rejects_geojson<W: Write>(points: &[DepthPoint], origin: GeoPoint, w: W) -> Result<(), BathyError> {
    let mut features = Vec::new();
    for p in points.iter().filter(|p| p.quality_flags.is_rejected()) {
        let g = geo::enu_to_geo(p.ground_position, origin)?;
        features.push(serde_json::json!({
            "type": "Feature",
            "geometry": { "type": "Point", "coordinates": [g.longitude, g.latitude] },
            "properties": {
                "t": p.timestamp,
                "depth": p.corrected_depth,
                "flags": p.quality_flags.names().collect::<Vec<_>>(),
            },
        }));
    }
    let doc = serde_json::json!({ "type": "FeatureCollection", "features": features });
    serde_json::to_writer_pretty(w, &doc).map_err(io::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::Attitude;
    use approx::assert_abs_diff_eq;

    fn sample(t: f64, raw: f64, roll_deg: f64, pitch_deg: f64) -> Sample {
        Sample {
            pose: Pose::new(t, EnuPoint::ORIGIN, Attitude::new(roll_deg.to_radians(), pitch_deg.to_radians(), 0.0)),
            raw_depth: raw,
            flags: QualityFlags::NONE,
        }
    }

    fn origin() -> GeoPoint {
        GeoPoint::new(-21.0, 55.2, 0.0).unwrap()
    }

    fn point(e: f64, n: f64, d: f64) -> DepthPoint {
        DepthPoint {
            timestamp: 0.0,
            ground_position: EnuPoint::new(e, n, -d),
            corrected_depth: d,
            quality_flags: QualityFlags::NONE,
        }
    }

    #[test]
    fn flag_set_operations() {
        let mut f = QualityFlags::NONE;
        assert!(f.is_empty() && !f.is_rejected());
        f.insert(QualityFlags::INTERPOLATED);
        assert!(!f.is_rejected());
        f.insert(QualityFlags::MEDIAN_REJECT);
        assert!(f.is_rejected());
        assert_eq!(f.to_string(), "MEDIAN_REJECT|INTERPOLATED");
        assert!(f.union(QualityFlags::ATTITUDE_REJECT).contains(QualityFlags::ATTITUDE_REJECT));
    }

    #[test]
    fn attitude_threshold_is_strict() {
        let s = [sample(0.0, 5.0, 0.0, 0.0), sample(1.0, 5.0, 12.0, 0.0), sample(2.0, 5.0, 10.0, -10.0), sample(3.0, 5.0, 0.0, -10.5)];
        let out = attitude_filter(&s, 10.0);
        let flagged: Vec<bool> = out.iter().map(|s| s.flags.contains(QualityFlags::ATTITUDE_REJECT)).collect();
        assert_eq!(flagged, [false, true, false, true]);
        assert_eq!(out.len(), s.len());
    }

    #[test]
    fn median_filter_flags_an_isolated_spike() {
        let mut s: Vec<Sample> = (0..30).map(|i| sample(i as f64, 5.0, 0.0, 0.0)).collect();
        s[14].raw_depth = 10.0;
        let out = median_filter(&s, 9, Band::Fixed { width: 1.0 }).unwrap();
        let flagged: Vec<usize> = (0..30).filter(|&i| out[i].flags.contains(QualityFlags::MEDIAN_REJECT)).collect();
        assert_eq!(flagged, [14]);
        let constant = median_filter(&s[..10], 9, Band::default()).unwrap();
        assert!(constant.iter().all(|s| s.flags.is_empty()));
    }

    #[test]
    fn median_filter_keeps_a_ramp() {
        let s: Vec<Sample> = (0..200).map(|i| sample(i as f64, 2.0 + 0.05 * i as f64, 0.0, 0.0)).collect();
        for band in [Band::Fixed { width: 0.01 }, Band::Robust { k: 3.0, floor: 0.0 }, Band::default()] {
            let out = median_filter(&s, 9, band).unwrap();
            assert!(out.iter().all(|s| s.flags.is_empty()), "{band:?}");
        }
    }

    #[test]
    fn median_filter_ignores_rejected_samples() {
        let mut s: Vec<Sample> = (0..20).map(|i| sample(i as f64, 5.0, 0.0, 0.0)).collect();
        for k in [8, 9, 10, 11, 12] {
            s[k].raw_depth = 20.0;
            s[k].flags.insert(QualityFlags::ATTITUDE_REJECT);
        }
        let out = median_filter(&s, 9, Band::Fixed { width: 1.0 }).unwrap();
        assert!(out.iter().all(|s| !s.flags.contains(QualityFlags::MEDIAN_REJECT)));
        assert!(median_filter(&s, 8, Band::default()).is_err());
        assert!(median_filter(&s, 1, Band::default()).is_err());
    }

    #[test]
    fn level_georeference_is_identity() {
        let s = [sample(0.0, 7.5, 0.0, 0.0)];
        let p = georeference(&s, &LeverArm::ZERO, 0.0, 0.0, VerticalReference::Waterline { immersion: 0.0 }, origin()).unwrap();
        assert_abs_diff_eq!(p[0].corrected_depth, 7.5, epsilon = 1e-12);
        assert_abs_diff_eq!(p[0].ground_position.east, 0.0, epsilon = 1e-12);
        let g = georeference(&s, &LeverArm::ZERO, 0.0, 0.0, VerticalReference::GpsHeight, origin()).unwrap();
        assert_abs_diff_eq!(g[0].corrected_depth, 7.5, epsilon = 1e-6);
    }

    #[test]
    fn pitched_beam_is_projected() {
        // Nose up tilts the body-down axis forward.
        let s = [sample(0.0, 10.0, 0.0, 10.0)];
        let p = georeference(&s, &LeverArm::ZERO, 0.0, 0.0, VerticalReference::Waterline { immersion: 0.0 }, origin()).unwrap();
        assert_abs_diff_eq!(p[0].corrected_depth, 9.848_077_530_122_08, epsilon = 1e-9);
        assert_abs_diff_eq!(p[0].ground_position.north, 1.736_481_776_669_303, epsilon = 1e-9);
    }

    #[test]
    fn datum_and_geoid_shift_depths() {
        let mut s = sample(0.0, 6.0, 0.0, 0.0);
        s.pose.position.up = 0.3;
        let arm = LeverArm::new(0.0, 0.0, 0.4).unwrap();
        let gps = georeference(&[s], &arm, -0.5, 1.2, VerticalReference::GpsHeight, origin()).unwrap();
        // Seabed ellipsoidal height 0.3 - 0.4 - 6 = -6.1.
        assert_abs_diff_eq!(gps[0].corrected_depth, -0.5 + 1.2 + 6.1, epsilon = 1e-6);
        let wl = georeference(&[s], &arm, -0.5, 1.2, VerticalReference::Waterline { immersion: 0.1 }, origin()).unwrap();
        assert_abs_diff_eq!(wl[0].corrected_depth, 6.0 + 0.1 + 0.5, epsilon = 1e-12);
    }

    #[test]
    fn single_point_grid() {
        let g = grid(&[point(1.2, -3.7, 4.25)], 0.5, GridMethod::Mean, origin()).unwrap();
        assert_eq!((g.rows, g.cols), (1, 1));
        let c = g.get(0, 0).unwrap();
        assert_eq!((c.depth, c.count, c.sigma), (4.25, 1, 0.0));
        assert_eq!(g.locate(1.2, -3.7), Some((0, 0)));
        assert!(grid(&[], 0.5, GridMethod::Mean, origin()).is_err());
        let mut rejected = point(0.0, 0.0, 1.0);
        rejected.quality_flags.insert(QualityFlags::MEDIAN_REJECT);
        assert!(matches!(grid(&[rejected], 0.5, GridMethod::Mean, origin()), Err(BathyError::Empty)));
    }

    #[test]
    fn mean_cells_report_spread() {
        let pts = [point(0.1, 0.1, 4.0), point(0.2, 0.3, 6.0), point(1.6, 0.2, 3.0)];
        let g = grid(&pts, 1.0, GridMethod::Mean, origin()).unwrap();
        assert_eq!((g.rows, g.cols), (1, 2));
        let c = g.get(0, 0).unwrap();
        assert_eq!(c.count, 2);
        assert_abs_diff_eq!(c.depth, 5.0);
        assert_abs_diff_eq!(c.sigma, 2f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn merged_accumulators_match_a_single_pass() {
        let pts: Vec<DepthPoint> = (0..50).map(|i| point(i as f64 * 0.37 % 5.0, i as f64 * 0.11, 3.0 + (i % 7) as f64 * 0.1)).collect();
        let mut whole = MeanAccumulator::new(0.5).unwrap();
        pts.iter().for_each(|p| whole.add(p));
        let (mut a, mut b) = (MeanAccumulator::new(0.5).unwrap(), MeanAccumulator::new(0.5).unwrap());
        pts[..20].iter().for_each(|p| a.add(p));
        pts[20..].iter().for_each(|p| b.add(p));
        b.merge(&a).unwrap();
        let (gw, gm) = (whole.finish(origin()).unwrap(), b.finish(origin()).unwrap());
        assert_eq!((gw.rows, gw.cols, gw.x0, gw.y0), (gm.rows, gm.cols, gm.x0, gm.y0));
        for (x, y) in gw.cells.iter().zip(&gm.cells) {
            match (x, y) {
                (Some(x), Some(y)) => {
                    assert_eq!(x.count, y.count);
                    assert_abs_diff_eq!(x.depth, y.depth, epsilon = 1e-12);
                    assert_abs_diff_eq!(x.sigma, y.sigma, epsilon = 1e-12);
                }
                (None, None) => {}
                _ => panic!("population differs"),
            }
        }
        assert!(b.merge(&MeanAccumulator::new(1.0).unwrap()).is_err());
    }

    #[test]
    fn idw_weights_by_inverse_square_distance() {
        let pts = [point(0.25, 0.25, 2.0), point(0.75, 0.25, 4.0), point(5.0, 5.0, 9.0)];
        let g = grid(&pts, 0.5, GridMethod::Idw { radius: 0.8 }, origin()).unwrap();
        // Cell (0, 0) is centered on the first point.
        assert_eq!(g.get(0, 0).unwrap().depth, 2.0);
        // Cell (1, 0), center (0.25, 0.75): distances 0.5 and sqrt(0.5).
        let (w1, w2) = (1.0 / 0.25, 1.0 / 0.5);
        assert_abs_diff_eq!(g.get(1, 0).unwrap().depth, (2.0 * w1 + 4.0 * w2) / (w1 + w2), epsilon = 1e-12);
        assert!(g.get(5, 5).is_none());
        assert!(grid(&pts, 0.5, GridMethod::Idw { radius: 0.0 }, origin()).is_err());
    }

    #[test]
    fn three_points_make_one_triangle() {
        let tin = triangulate(&[point(0.0, 0.0, 1.0), point(1.0, 0.0, 2.0), point(0.0, 1.0, 3.0)]).unwrap();
        assert_eq!(tin.triangles.len(), 1);
        let [a, b, c] = tin.triangles[0];
        let p = |i: usize| [tin.vertices[i].ground_position.east, tin.vertices[i].ground_position.north];
        assert!(orient(p(a), p(b), p(c)) > 0.0);
    }

    #[test]
    fn square_splits_on_a_diagonal() {
        let pts = [point(0.0, 0.0, 1.0), point(1.0, 0.0, 1.0), point(1.0, 1.1, 1.0), point(0.0, 1.0, 1.0)];
        let tin = triangulate(&pts).unwrap();
        assert_eq!(tin.triangles.len(), 2);
        // The corner at (1, 1.1) lies outside the circle through the other
        // three, so that triangle stays and the diagonal is (1,0)-(0,1).
        let shared: Vec<usize> = (0..4).filter(|v| tin.triangles.iter().all(|t| t.contains(v))).collect();
        assert_eq!(shared, [1, 3]);
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        let line: Vec<DepthPoint> = (0..10).map(|i| point(i as f64, 2.0 * i as f64, 1.0)).collect();
        assert!(matches!(triangulate(&line), Err(BathyError::Triangulation(_))));
        let dupes = [point(0.0, 0.0, 1.0), point(0.0, 0.0, 2.0), point(1.0, 1.0, 1.0)];
        assert!(triangulate(&dupes).is_err());
    }

    #[test]
    fn exports_are_well_formed() {
        let mut pts = vec![point(0.0, 0.0, 2.0), point(1.0, 0.0, 2.5), point(0.0, 1.0, 3.0)];
        pts[2].quality_flags.insert(QualityFlags::MEDIAN_REJECT);
        let g = grid(&pts, 0.5, GridMethod::Mean, origin()).unwrap();
        let mut asc = Vec::new();
        write_asc(&g, &mut asc).unwrap();
        let asc = String::from_utf8(asc).unwrap();
        assert!(asc.starts_with("ncols 3\nnrows 1\n"));
        assert!(asc.ends_with("2.000 -9999 2.500\n"));

        let mut csv = Vec::new();
        write_xyz_csv(&pts, origin(), false, &mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 3);

        let mut json = Vec::new();
        write_rejects_geojson(&pts, origin(), &mut json).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&json).unwrap();
        assert_eq!(v["features"].as_array().unwrap().len(), 1);
        assert_eq!(v["features"][0]["properties"]["flags"][0], "MEDIAN_REJECT");

        let tin = triangulate(&pts).unwrap();
        let mut ply = Vec::new();
        write_ply(&tin, &mut ply).unwrap();
        let ply = String::from_utf8(ply).unwrap();
        assert!(ply.contains("element vertex 3\n") && ply.contains("element face 1\n"));
        let face: Vec<usize> = ply.lines().last().unwrap().split(' ').skip(1).map(|v| v.parse().unwrap()).collect();
        assert_eq!(face.iter().sum::<usize>(), 3);
    }
}
