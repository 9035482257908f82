//! Short-baseline acoustic positioning.
//!
//! A beacon pings on a known schedule; four hull-mounted receivers time the
//! arrival, giving four absolute ranges. [`solve_fix`] recovers the beacon
//! position in the vehicle frame by damped Gauss-Newton and geolocates it
//! with the vehicle pose.
//!
//! Receivers on a planar array cannot tell a beacon from its reflection in
//! the array plane; the solver always picks the solution below the plane.

use crate::geo::{self, EnuPoint, GeoError, GeoPoint, Pose};
use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_SOUND_SPEED: f64 = 1530.0;
pub const SOUND_SPEED_RANGE: (f64, f64) = (1400.0, 1600.0);
pub const DEFAULT_MAX_RANGE: f64 = 100.0;
/// Recommended receiver spacing, meters.
pub const RECOMMENDED_SPACING: (f64, f64) = (1.5, 2.5);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SblError {
    #[error("degenerate receiver array: {0}")]
    DegenerateArray(String),
    #[error("invalid arrival times: {0}")]
    InvalidToa(String),
    #[error("beacon must be below the surface (up = {0:.3} m)")]
    BeaconAboveSurface(f64),
    #[error("need at least two usable fixes to interpolate, found {0}")]
    TooFewValid(usize),
    #[error("invalid noise model: {0}")]
    Noise(String),
    #[error("geodesy: {0}")]
    Geo(#[from] GeoError),
}

/// Four receivers, body-frame offsets from the GPS antenna (forward, starboard, down).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[[f64; 3]; 4]", into = "[[f64; 3]; 4]")]
pub struct ReceiverArray {
    offsets: [Vector3<f64>; 4],
    plane_normal: Option<Vector3<f64>>,
}

impl ReceiverArray {
    pub fn new(offsets: [Vector3<f64>; 4]) -> Result<Self, SblError> {
        if offsets.iter().any(|o| !o.iter().all(|c| c.is_finite())) {
            return Err(SblError::DegenerateArray("non-finite offset".into()));
        }
        let centroid = offsets.iter().sum::<Vector3<f64>>() / 4.0;
        let mut scatter = Matrix3::zeros();
        for o in &offsets {
            let d = o - centroid;
            scatter += d * d.transpose();
        }
        let eig = scatter.symmetric_eigen();
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let largest = eig.eigenvalues[order[2]];
        if largest <= 1e-12 {
            return Err(SblError::DegenerateArray("receivers coincide".into()));
        }
        if eig.eigenvalues[order[1]] <= 1e-9 * largest {
            return Err(SblError::DegenerateArray("receivers are collinear".into()));
        }
        let plane_normal = if eig.eigenvalues[order[0]] <= 1e-9 * largest {
            let mut n: Vector3<f64> = eig.eigenvectors.column(order[0]).into_owned();
            if n.z < 0.0 {
                n = -n;
            }
            if n.z.abs() < 1e-6 {
                return Err(SblError::DegenerateArray("receiver plane is vertical".into()));
            }
            Some(n.normalize())
        } else {
            None
        };
        Ok(Self { offsets, plane_normal })
    }

    /// Square array of side `side`, centred under the antenna at `immersion` meters.
    pub fn square(side: f64, immersion: f64) -> Result<Self, SblError> {
        let h = side / 2.0;
        Self::new([
            Vector3::new(h, -h, immersion),
            Vector3::new(h, h, immersion),
            Vector3::new(-h, h, immersion),
            Vector3::new(-h, -h, immersion),
        ])
    }

    pub fn offsets(&self) -> &[Vector3<f64>; 4] {
        &self.offsets
    }

    pub fn centroid(&self) -> Vector3<f64> {
        self.offsets.iter().sum::<Vector3<f64>>() / 4.0
    }

    /// Downward-pointing normal when all receivers share a plane.
    pub fn plane_normal(&self) -> Option<Vector3<f64>> {
        self.plane_normal
    }

    /// Receivers whose nearest horizontal neighbour is outside the recommended spacing.
    pub fn spacing_warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (i, a) in self.offsets.iter().enumerate() {
            let nearest = self
                .offsets
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, b)| (a.x - b.x).hypot(a.y - b.y))
                .fold(f64::INFINITY, f64::min);
            if nearest < RECOMMENDED_SPACING.0 || nearest > RECOMMENDED_SPACING.1 {
                out.push(format!(
                    "receiver {i}: nearest neighbour {nearest:.2} m outside [{}, {}] m",
                    RECOMMENDED_SPACING.0, RECOMMENDED_SPACING.1
                ));
            }
        }
        out
    }
}

impl TryFrom<[[f64; 3]; 4]> for ReceiverArray {
    type Error = SblError;

    fn try_from(v: [[f64; 3]; 4]) -> Result<Self, SblError> {
        ReceiverArray::new(v.map(Vector3::from))
    }
}

impl From<ReceiverArray> for [[f64; 3]; 4] {
    fn from(a: ReceiverArray) -> Self {
        a.offsets.map(|o| [o.x, o.y, o.z])
    }
}

impl Default for ReceiverArray {
    /// 2 m square at 0.3 m below the antenna reference.
    fn default() -> Self {
        Self::square(2.0, 0.3).expect("square array is valid")
    }
}

/// Arrival times of one ping at the four receivers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToaSet {
    pub timestamp: f64,
    /// Seconds from emission to arrival, receiver order as in the array.
    pub arrival_times: [f64; 4],
    pub sound_speed: f64,
}

impl ToaSet {
    pub fn validate(&self) -> Result<(), SblError> {
        if self.arrival_times.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(SblError::InvalidToa(format!("{:?}", self.arrival_times)));
        }
        let (lo, hi) = SOUND_SPEED_RANGE;
        if !(self.sound_speed >= lo && self.sound_speed <= hi) {
            return Err(SblError::InvalidToa(format!("sound speed {} outside [{lo}, {hi}]", self.sound_speed)));
        }
        Ok(())
    }

    pub fn ranges(&self) -> [f64; 4] {
        self.arrival_times.map(|t| t * self.sound_speed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SblFix {
    pub timestamp: f64,
    /// Beacon relative to the antenna, body axes.
    pub rel_position: Vector3<f64>,
    /// Beacon in the survey's local frame.
    pub enu_position: EnuPoint,
    pub geo_position: GeoPoint,
    /// One-sigma position uncertainty, meters.
    pub std: f64,
    pub valid: bool,
    /// Set on fixes synthesized by [`filter_track`].
    pub interpolated: bool,
}

/// Measurement error model for [`simulate_toa`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcousticNoiseModel {
    /// Standard deviation of a range offset shared by all receivers of one
    /// ping (ping-epoch and clock error), as a fraction of range.
    pub range_fraction_sigma: f64,
    /// Independent per-receiver timing jitter expressed in meters.
    pub receiver_jitter_sigma: f64,
    /// Beacon depth below which surface effects vanish, meters.
    pub surface_depth_threshold: f64,
    pub surface_spike_probability: f64,
    /// Per-receiver range error applied on a spike, meters.
    pub spike_magnitude_sigma: f64,
    pub dropout_probability: f64,
    pub max_range: f64,
}

impl Default for AcousticNoiseModel {
    fn default() -> Self {
        Self {
            range_fraction_sigma: 0.01,
            receiver_jitter_sigma: 0.001,
            surface_depth_threshold: 0.6,
            surface_spike_probability: 0.2,
            spike_magnitude_sigma: 10.0,
            dropout_probability: 0.02,
            max_range: DEFAULT_MAX_RANGE,
        }
    }
}

impl AcousticNoiseModel {
    pub fn noise_free() -> Self {
        Self {
            range_fraction_sigma: 0.0,
            receiver_jitter_sigma: 0.0,
            surface_spike_probability: 0.0,
            spike_magnitude_sigma: 0.0,
            dropout_probability: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SblError> {
        for (name, p) in [
            ("surface_spike_probability", self.surface_spike_probability),
            ("dropout_probability", self.dropout_probability),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(SblError::Noise(format!("{name} = {p} outside [0, 1]")));
            }
        }
        for (name, s) in [
            ("range_fraction_sigma", self.range_fraction_sigma),
            ("receiver_jitter_sigma", self.receiver_jitter_sigma),
            ("spike_magnitude_sigma", self.spike_magnitude_sigma),
        ] {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(SblError::Noise(format!("{name} = {s} must be finite and non-negative")));
            }
        }
        if !(self.max_range > 0.0) {
            return Err(SblError::Noise("max_range must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ToaOutcome {
    Received { toa: ToaSet, spiked: bool },
    Dropout,
}

impl ToaOutcome {
    pub fn toa(&self) -> Option<&ToaSet> {
        match self {
            ToaOutcome::Received { toa, .. } => Some(toa),
            ToaOutcome::Dropout => None,
        }
    }
}

/// Receiver positions in the local frame for a given vehicle pose.
pub fn receiver_positions(vehicle: &Pose, array: &ReceiverArray) -> [Vector3<f64>; 4] {
    let r = vehicle.attitude.body_to_enu();
    let base = vehicle.position.to_vector();
    array.offsets().map(|o| base + r * o)
}

/// Forward model: arrival times of one ping from `beacon` at each receiver.
///
/// Past `max_range` the dropout probability ramps linearly to certainty at
/// twice the range.
pub fn simulate_toa<R: Rng + ?Sized>(
    beacon: EnuPoint,
    vehicle: &Pose,
    array: &ReceiverArray,
    noise: &AcousticNoiseModel,
    sound_speed: f64,
    rng: &mut R,
) -> Result<ToaOutcome, SblError> {
    if !(beacon.up < 0.0) {
        return Err(SblError::BeaconAboveSurface(beacon.up));
    }
    noise.validate()?;
    let receivers = receiver_positions(vehicle, array);
    let ranges = receivers.map(|r| (beacon.to_vector() - r).norm());
    let mean_range = ranges.iter().sum::<f64>() / 4.0;

    // Draws happen in a fixed order so a seed reproduces the whole sequence.
    let u_drop: f64 = rng.random();
    let u_spike: f64 = rng.random();
    let common: f64 = standard_normal(rng);
    let jitter: [f64; 4] = std::array::from_fn(|_| standard_normal(rng));
    let spikes: [f64; 4] = std::array::from_fn(|_| standard_normal(rng));

    let range_drop = if mean_range <= noise.max_range {
        0.0
    } else {
        ((mean_range - noise.max_range) / noise.max_range).min(1.0)
    };
    let p_drop = 1.0 - (1.0 - noise.dropout_probability) * (1.0 - range_drop);
    if u_drop < p_drop {
        return Ok(ToaOutcome::Dropout);
    }
    let depth = -beacon.up;
    let spiked = depth < noise.surface_depth_threshold && u_spike < noise.surface_spike_probability;

    let offset = noise.range_fraction_sigma * mean_range * common;
    let mut times = [0.0; 4];
    for i in 0..4 {
        let mut r = ranges[i] + offset + noise.receiver_jitter_sigma * jitter[i];
        if spiked {
            r += noise.spike_magnitude_sigma * spikes[i];
        }
        // A receiver cannot hear the ping before it is sent.
        times[i] = r.max(1e-3) / sound_speed;
    }
    Ok(ToaOutcome::Received {
        toa: ToaSet {
            timestamp: vehicle.timestamp,
            arrival_times: times,
            sound_speed,
        },
        spiked,
    })
}

fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    Normal::new(0.0, 1.0).expect("unit normal").sample(rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Converged when the cost gradient falls below this, meters.
    pub gradient_tolerance: f64,
    /// RMS range residual above which a fix is marked invalid, meters.
    pub residual_threshold: f64,
    pub max_range: f64,
    /// Distance below the array centroid used as a starting point without a prior.
    pub initial_depth: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 1000,
            gradient_tolerance: 1e-11,
            residual_threshold: 5.0,
            max_range: DEFAULT_MAX_RANGE,
            initial_depth: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Solution {
    position: Vector3<f64>,
    cost: f64,
    normal_matrix: Matrix3<f64>,
    converged: bool,
}

fn residuals(p: &Vector3<f64>, receivers: &[Vector3<f64>; 4], ranges: &[f64; 4]) -> ([f64; 4], [Vector3<f64>; 4]) {
    let mut f = [0.0; 4];
    let mut rows = [Vector3::zeros(); 4];
    for i in 0..4 {
        let d = p - receivers[i];
        let n = d.norm().max(1e-9);
        f[i] = n - ranges[i];
        rows[i] = d / n;
    }
    (f, rows)
}

/// Levenberg-Marquardt on Σ(|p − rᵢ| − ρᵢ)².
fn least_squares(start: Vector3<f64>, receivers: &[Vector3<f64>; 4], ranges: &[f64; 4], cfg: &SolverConfig) -> Solution {
    let mut p = start;
    let (mut f, mut rows) = residuals(&p, receivers, ranges);
    let mut cost: f64 = f.iter().map(|r| r * r).sum();
    let mut lambda = 1e-3;
    let mut converged = false;
    for _ in 0..cfg.max_iterations {
        let mut jtj = Matrix3::zeros();
        let mut jtf = Vector3::zeros();
        for i in 0..4 {
            jtj += rows[i] * rows[i].transpose();
            jtf += rows[i] * f[i];
        }
        // Rows are unit vectors, so the gradient is in metres and vanishes
        // only at a stationary point, however flat the valley.
        if cost == 0.0 || jtf.norm() <= cfg.gradient_tolerance {
            converged = true;
            break;
        }
        let mut improved = false;
        while lambda < 1e12 {
            let mut a = jtj;
            for k in 0..3 {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&(-jtf))) else {
                lambda *= 10.0;
                continue;
            };
            let candidate = p + step;
            let (cf, crows) = residuals(&candidate, receivers, ranges);
            let ccost: f64 = cf.iter().map(|r| r * r).sum();
            if ccost < cost {
                p = candidate;
                f = cf;
                rows = crows;
                cost = ccost;
                lambda = (lambda / 10.0).max(1e-15);
                improved = true;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            // No downhill step left: a minimum to machine precision.
            converged = true;
            break;
        }
    }
    let mut normal_matrix = Matrix3::zeros();
    for r in &rows {
        normal_matrix += r * r.transpose();
    }
    Solution {
        position: p,
        cost,
        normal_matrix,
        converged,
    }
}

fn geolocate_enu(rel_position: &Vector3<f64>, vehicle: &Pose) -> EnuPoint {
    vehicle.position + geo::rotate_body_to_enu(*rel_position, &vehicle.attitude)
}

/// Converts a body-frame relative position into local and geodetic coordinates.
pub fn geolocate(rel_position: &Vector3<f64>, vehicle: &Pose, origin: GeoPoint) -> Result<(EnuPoint, GeoPoint), GeoError> {
    let enu = geolocate_enu(rel_position, vehicle);
    Ok((enu, geo::enu_to_geo(enu, origin)?))
}

/// Solves one ping for the beacon position.
///
/// Failure to converge, an excessive residual, a solution beyond
/// `max_range` or at or above the local surface (`up >= 0`) yields a fix
/// with `valid = false`.
pub fn solve_fix(
    toa: &ToaSet,
    vehicle: &Pose,
    array: &ReceiverArray,
    prior: Option<EnuPoint>,
    origin: GeoPoint,
    cfg: &SolverConfig,
) -> Result<SblFix, SblError> {
    toa.validate()?;
    let receivers = *array.offsets();
    let ranges = toa.ranges();
    let centroid = array.centroid();
    let start = match prior {
        Some(p) => geo::rotate_enu_to_body(p.to_vector() - vehicle.position.to_vector(), &vehicle.attitude),
        None => centroid + Vector3::new(0.0, 0.0, cfg.initial_depth),
    };

    let first = least_squares(start, &receivers, &ranges, cfg);
    let below = |p: &Vector3<f64>, n: &Vector3<f64>| (p - centroid).dot(n) > 0.0;
    let underwater = |p: &Vector3<f64>| geo::rotate_body_to_enu(*p, &vehicle.attitude).z + vehicle.position.up < 0.0;
    let sol = match array.plane_normal() {
        Some(n) => {
            // A planar array cannot tell a point from its reflection in the
            // array plane. Keep whichever image is underwater.
            let d = (first.position - centroid).dot(&n);
            let image = least_squares(first.position - 2.0 * d * n, &receivers, &ranges, cfg);
            let (lower, upper) = if below(&first.position, &n) { (first, image) } else { (image, first) };
            match (underwater(&lower.position), underwater(&upper.position)) {
                (true, true) => match prior {
                    Some(p) => {
                        let dist = |s: &Solution| geolocate_enu(&s.position, vehicle).distance(p);
                        if dist(&upper) < dist(&lower) { upper } else { lower }
                    }
                    None => lower,
                },
                (false, true) => upper,
                _ => lower,
            }
        }
        None => {
            // Non-planar arrays have a unique minimum in the ideal case, but a
            // poor start can still land above the array; retry from below.
            if first.position.z < centroid.z {
                let retry = least_squares(centroid + Vector3::new(0.0, 0.0, cfg.initial_depth), &receivers, &ranges, cfg);
                if retry.cost <= first.cost || retry.position.z > centroid.z { retry } else { first }
            } else {
                first
            }
        }
    };

    let dof = (ranges.len() - 3) as f64;
    let sigma2 = sol.cost / dof;
    let std = match sol.normal_matrix.try_inverse() {
        Some(inv) => (sigma2 * inv.trace()).max(0.0).sqrt(),
        None => f64::INFINITY,
    };
    let rms = (sol.cost / ranges.len() as f64).sqrt();
    let (enu, geo_position) = geolocate(&sol.position, vehicle, origin)?;
    let valid = sol.converged
        && sol.position.iter().all(|c| c.is_finite())
        && rms <= cfg.residual_threshold
        && sol.position.norm() <= cfg.max_range
        && enu.up < 0.0;

    Ok(SblFix {
        timestamp: toa.timestamp,
        rel_position: sol.position,
        enu_position: enu,
        geo_position,
        std,
        valid,
        interpolated: false,
    })
}

/// Drops fixes that are invalid or noisier than `std_threshold` and fills
/// their slots by linear interpolation in time between the surrounding good
/// fixes. Slots before the first or after the last good fix take its value.
pub fn filter_track(fixes: &[SblFix], std_threshold: f64) -> Result<Vec<SblFix>, SblError> {
    let good: Vec<usize> = fixes
        .iter()
        .enumerate()
        .filter(|(_, f)| f.valid && f.std <= std_threshold && f.std.is_finite())
        .map(|(i, _)| i)
        .collect();
    if good.len() < 2 {
        return Err(SblError::TooFewValid(good.len()));
    }
    let mut out = Vec::with_capacity(fixes.len());
    let mut next = 0usize;
    for (i, fix) in fixes.iter().enumerate() {
        if next < good.len() && good[next] == i {
            out.push(*fix);
            next += 1;
            continue;
        }
        let (a, b) = match (next.checked_sub(1).map(|k| good[k]), good.get(next).copied()) {
            (Some(a), Some(b)) => (a, b),
            (Some(a), None) => (a, a),
            (None, Some(b)) => (b, b),
            (None, None) => unreachable!("at least two good fixes"),
        };
        let (fa, fb) = (&fixes[a], &fixes[b]);
        let frac = if b == a || fb.timestamp == fa.timestamp {
            0.0
        } else {
            ((fix.timestamp - fa.timestamp) / (fb.timestamp - fa.timestamp)).clamp(0.0, 1.0)
        };
        let lerp = |x: f64, y: f64| x + (y - x) * frac;
        out.push(SblFix {
            timestamp: fix.timestamp,
            rel_position: fa.rel_position + (fb.rel_position - fa.rel_position) * frac,
            enu_position: fa.enu_position.lerp(fb.enu_position, frac),
            geo_position: GeoPoint {
                latitude: lerp(fa.geo_position.latitude, fb.geo_position.latitude),
                longitude: lerp(fa.geo_position.longitude, fb.geo_position.longitude),
                ellipsoidal_height: lerp(fa.geo_position.ellipsoidal_height, fb.geo_position.ellipsoidal_height),
            },
            std: lerp(fa.std, fb.std),
            valid: true,
            interpolated: true,
        });
    }
    Ok(out)
}
