//! Deterministic vehicle and environment simulation.
//!
//! The vehicle is kinematic: first-order speed lag, bounded turn rate and
//! line-of-sight guidance along mission legs, integrated at a fixed 10 Hz.
//! Seabed, wave, sensor and battery models feed a [`SurveyLog`] that the
//! processing modules consume exactly like a field log.

use crate::geo::{self, Attitude, EnuPoint, GeoError, GeoPoint, LeverArm, Pose};
use crate::logfmt::{
    AttRecord, BatRecord, DpthRecord, EventRecord, FixType, GpsRecord, LogHeader, LogRecord, SurveyLog, Timestamp, MAX_RAW_DEPTH,
};
use crate::mission::{MissionPlan, SURVEY_SPEED_RANGE};
use chrono::{DateTime, Utc};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};
use thiserror::Error;

/// Integration step, seconds.
pub const SIM_DT: f64 = 0.1;
const SIM_DT_MS: u64 = 100;

/// The sounder trigger is live on a transect once the heading is within
/// this angle of the line, radians.
pub const LINE_ALIGNMENT: f64 = 20.0 * PI / 180.0;

/// Energy of one 4S 10 Ah pack, watt-hours.
pub const PACK_ENERGY_WH: f64 = 148.0;

/// Nominal average draw while running survey transects, watts.
pub const SURVEY_POWER_DRAW: f64 = 70.0;

/// Nominal average draw in tracking mode, mostly holding with the acoustic
/// board and companion computer powered, watts.
pub const TRACKING_POWER_DRAW: f64 = 100.0;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("vehicle model: {0}")]
    Vehicle(String),
    #[error("seabed model: {0}")]
    Seabed(String),
    #[error("wave model: {0}")]
    Waves(String),
    #[error("battery model: {0}")]
    Battery(String),
    #[error("sensor model: {0}")]
    Sensors(String),
    #[error("beacon profile: {0}")]
    Beacon(String),
    #[error("plan: {0}")]
    Plan(String),
    #[error(transparent)]
    Geo(#[from] GeoError),
}

// ---------------------------------------------------------------------------
// Vehicle

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VehicleModel {
    pub max_speed: f64,
    pub cruise_speed: f64,
    /// rad/s
    pub turn_rate_max: f64,
    /// Time constant of the first-order speed response, seconds.
    pub speed_time_constant: f64,
    pub waypoint_accept_radius: f64,
    /// Upper bound on `max_speed`; raise it to model a faster hull.
    pub speed_ceiling: f64,
    /// GPS antenna height above the waterline, meters.
    pub antenna_height: f64,
    /// RMS of the lateral wander around a commanded line, meters.
    pub cross_track_rms: f64,
    /// Look-ahead distance of the line-of-sight guidance, meters.
    pub lookahead: f64,
}

impl Default for VehicleModel {
    fn default() -> Self {
        Self {
            max_speed: SURVEY_SPEED_RANGE.1,
            cruise_speed: 1.0,
            turn_rate_max: 0.5,
            speed_time_constant: 1.5,
            waypoint_accept_radius: 1.0,
            speed_ceiling: SURVEY_SPEED_RANGE.1,
            antenna_height: 0.3,
            cross_track_rms: 0.1,
            lookahead: 3.0,
        }
    }
}

impl VehicleModel {
    pub fn validate(&self) -> Result<(), SimError> {
        let err = |m: String| Err(SimError::Vehicle(m));
        if !(self.cruise_speed > 0.0 && self.cruise_speed <= self.max_speed) {
            return err(format!("cruise speed {} must be in (0, max_speed = {}]", self.cruise_speed, self.max_speed));
        }
        if self.max_speed > self.speed_ceiling {
            return err(format!("max speed {} above ceiling {}", self.max_speed, self.speed_ceiling));
        }
        for (name, v) in [
            ("turn_rate_max", self.turn_rate_max),
            ("speed_time_constant", self.speed_time_constant),
            ("waypoint_accept_radius", self.waypoint_accept_radius),
            ("lookahead", self.lookahead),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return err(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.cross_track_rms >= 0.0 && self.antenna_height.is_finite()) {
            return err("cross_track_rms must be non-negative and antenna_height finite".into());
        }
        Ok(())
    }
}

/// Horizontal kinematic state. `position.up` is the antenna height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub position: EnuPoint,
    /// Radians clockwise from north.
    pub heading: f64,
    pub speed: f64,
    /// Heading change over the last step divided by its duration.
    pub turn_rate: f64,
}

impl VehicleState {
    pub fn at_rest(position: EnuPoint, heading: f64) -> Self {
        Self {
            position,
            heading: geo::wrap_two_pi(heading),
            speed: 0.0,
            turn_rate: 0.0,
        }
    }
}

/// Advances the vehicle by `dt` toward `target`, or toward a stop when
/// `target` is `None` or already within the accept radius.
///
/// Commanded speed falls off with the cosine of the heading error so the
/// vehicle turns before it runs.
///
/// Panics if `dt` is outside (0, 1].
pub fn step_vehicle(model: &VehicleModel, state: &VehicleState, target: Option<EnuPoint>, dt: f64) -> VehicleState {
    assert!(dt > 0.0 && dt <= 1.0, "dt = {dt} outside (0, 1]");
    let goal = target.filter(|t| state.position.horizontal_distance(*t) > model.waypoint_accept_radius);
    let (heading, commanded) = match goal {
        Some(t) => {
            let error = geo::wrap_pi(geo::bearing(state.position, t) - state.heading);
            let max_turn = model.turn_rate_max * dt;
            let turn = error.clamp(-max_turn, max_turn);
            let heading = geo::wrap_two_pi(state.heading + turn);
            let residual = geo::wrap_pi(geo::bearing(state.position, t) - heading);
            (heading, model.cruise_speed * residual.cos().max(0.0))
        }
        None => (state.heading, 0.0),
    };
    let alpha = 1.0 - (-dt / model.speed_time_constant).exp();
    let speed = (state.speed + (commanded - state.speed) * alpha).clamp(0.0, model.max_speed);
    let position = EnuPoint::new(
        state.position.east + speed * heading.sin() * dt,
        state.position.north + speed * heading.cos() * dt,
        state.position.up,
    );
    VehicleState {
        position,
        heading,
        speed,
        turn_rate: geo::wrap_pi(heading - state.heading) / dt,
    }
}

/// Line-of-sight target on the segment `from → to`: the point `lookahead`
/// ahead of the vehicle's projection, clamped to the segment end.
pub fn los_target(from: EnuPoint, to: EnuPoint, position: EnuPoint, lookahead: f64, lateral_offset: f64) -> EnuPoint {
    let (dx, dy) = (to.east - from.east, to.north - from.north);
    let len = dx.hypot(dy);
    if len < 1e-9 {
        return to;
    }
    let (ux, uy) = (dx / len, dy / len);
    let along = (position.east - from.east) * ux + (position.north - from.north) * uy;
    let s = (along + lookahead).min(len);
    // Lateral offset is to the right of the direction of travel.
    let (rx, ry) = (uy, -ux);
    let off = if s >= len { 0.0 } else { lateral_offset };
    EnuPoint::new(from.east + ux * s + rx * off, from.north + uy * s + ry * off, to.up)
}

// ---------------------------------------------------------------------------
// Seabed

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SeabedKind {
    Plane,
    Slope,
    Rocks,
    SandRift,
    Composite,
}

/// A rounded boulder: a raised cosine bump that shoals the seabed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rock {
    pub east: f64,
    pub north: f64,
    pub radius: f64,
    pub height: f64,
}

/// An elongated sandy trough with a Gaussian cross-section.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rift {
    pub east: f64,
    pub north: f64,
    /// Direction of the trough axis, radians clockwise from north.
    pub bearing: f64,
    /// Half-length of the flat-bottomed section along the axis.
    pub half_length: f64,
    /// Gaussian width (one sigma) across the axis.
    pub width: f64,
    /// Extra depth at the axis.
    pub depth: f64,
}

/// Randomly placed rocks, expanded deterministically from `seed`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RockScatter {
    pub count: usize,
    pub height: f64,
    pub radius_min: f64,
    pub radius_max: f64,
    /// [east_min, east_max, north_min, north_max] in the local frame.
    pub extent: [f64; 4],
    pub seed: u64,
}

/// Seabed truth. Depth is positive down from the water surface (local
/// `up = 0`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeabedModel {
    pub kind: SeabedKind,
    /// Depth at the local origin.
    pub depth: f64,
    /// Depth increase per meter east and north.
    #[serde(default)]
    pub gradient: [f64; 2],
    #[serde(default)]
    pub rocks: Vec<Rock>,
    #[serde(default)]
    pub rifts: Vec<Rift>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scatter: Option<RockScatter>,
}

impl SeabedModel {
    pub fn plane(depth: f64) -> Self {
        Self {
            kind: SeabedKind::Plane,
            depth,
            gradient: [0.0, 0.0],
            rocks: Vec::new(),
            rifts: Vec::new(),
            scatter: None,
        }
    }

    pub fn slope(depth: f64, gradient_east: f64, gradient_north: f64) -> Self {
        Self {
            kind: SeabedKind::Slope,
            gradient: [gradient_east, gradient_north],
            ..Self::plane(depth)
        }
    }

    /// Plane at `depth` with `scatter` rocks over it.
    pub fn composite(depth: f64, gradient: [f64; 2], scatter: RockScatter) -> Result<Self, SimError> {
        Self {
            kind: SeabedKind::Composite,
            depth,
            gradient,
            rocks: Vec::new(),
            rifts: Vec::new(),
            scatter: Some(scatter),
        }
        .resolved()
    }

    /// Expands `scatter` into explicit rocks and checks the descriptor
    /// against the parameters present.
    pub fn resolved(mut self) -> Result<Self, SimError> {
        if let Some(s) = self.scatter.take() {
            let [e0, e1, n0, n1] = s.extent;
            if !(e0 < e1 && n0 < n1 && s.radius_min > 0.0 && s.radius_min <= s.radius_max && s.height.is_finite()) {
                return Err(SimError::Seabed(format!("invalid rock scatter {s:?}")));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
            for _ in 0..s.count {
                self.rocks.push(Rock {
                    east: rng.random_range(e0..e1),
                    north: rng.random_range(n0..n1),
                    radius: if s.radius_max > s.radius_min { rng.random_range(s.radius_min..s.radius_max) } else { s.radius_min },
                    height: s.height,
                });
            }
        }
        self.check_kind()?;
        Ok(self)
    }

    fn check_kind(&self) -> Result<(), SimError> {
        let sloped = self.gradient != [0.0, 0.0];
        let ok = match self.kind {
            SeabedKind::Plane => !sloped && self.rocks.is_empty() && self.rifts.is_empty(),
            SeabedKind::Slope => self.rocks.is_empty() && self.rifts.is_empty(),
            SeabedKind::Rocks => self.rifts.is_empty(),
            SeabedKind::SandRift => self.rocks.is_empty(),
            SeabedKind::Composite => true,
        };
        if !self.depth.is_finite() || !self.gradient.iter().all(|g| g.is_finite()) {
            return Err(SimError::Seabed("non-finite depth or gradient".into()));
        }
        if self.rocks.iter().any(|r| !(r.radius > 0.0) || !r.height.is_finite()) {
            return Err(SimError::Seabed("rocks need a positive radius and finite height".into()));
        }
        if self.rifts.iter().any(|r| !(r.width > 0.0) || !(r.half_length >= 0.0) || !r.depth.is_finite()) {
            return Err(SimError::Seabed("rifts need a positive width and non-negative half-length".into()));
        }
        if ok {
            Ok(())
        } else {
            Err(SimError::Seabed(format!("{:?} descriptor does not match the parameters given", self.kind)))
        }
    }

    pub fn depth_at(&self, east: f64, north: f64) -> f64 {
        let mut d = self.depth + self.gradient[0] * east + self.gradient[1] * north;
        for r in &self.rocks {
            let dist = (east - r.east).hypot(north - r.north);
            if dist < r.radius {
                d -= r.height * 0.5 * (1.0 + (PI * dist / r.radius).cos());
            }
        }
        for r in &self.rifts {
            let (ax, ay) = (r.bearing.sin(), r.bearing.cos());
            let (dx, dy) = (east - r.east, north - r.north);
            let along = dx * ax + dy * ay;
            let across = dx * ay - dy * ax;
            let beyond = (along.abs() - r.half_length).max(0.0);
            d += r.depth * (-0.5 * ((across / r.width).powi(2) + (beyond / r.width).powi(2))).exp();
        }
        d
    }

    /// Checks depth ∈ (0, 50] on a `step`-meter lattice over `extent`
    /// ([east_min, east_max, north_min, north_max]).
    pub fn validate_over(&self, extent: [f64; 4], step: f64) -> Result<(), SimError> {
        self.check_kind()?;
        let [e0, e1, n0, n1] = extent;
        let ne = ((e1 - e0) / step).ceil() as usize;
        let nn = ((n1 - n0) / step).ceil() as usize;
        for i in 0..=ne {
            for j in 0..=nn {
                let (e, n) = ((e0 + i as f64 * step).min(e1), (n0 + j as f64 * step).min(n1));
                let d = self.depth_at(e, n);
                if !(d > 0.0 && d <= MAX_RAW_DEPTH) {
                    return Err(SimError::Seabed(format!("depth {d:.3} m at ({e:.1}, {n:.1}) outside (0, 50]")));
                }
            }
        }
        Ok(())
    }

    /// Distance along the unit ray `dir` from `origin` to the seabed, if it
    /// is hit within `max_range`.
    pub fn ray_intersection(&self, origin: EnuPoint, dir: Vector3<f64>, max_range: f64) -> Option<f64> {
        if dir.z >= 0.0 {
            return None;
        }
        // Height of the ray above the seabed; negative once it is buried.
        let f = |s: f64| {
            let p = origin.to_vector() + dir * s;
            p.z + self.depth_at(p.x, p.y)
        };
        if f(0.0) <= 0.0 {
            return Some(0.0);
        }
        // Start from the vertical estimate and bracket the crossing.
        let guess = (f(0.0) / -dir.z).min(max_range);
        let step = 0.25;
        let (mut lo, mut hi);
        if f(guess) > 0.0 {
            lo = guess;
            hi = guess;
            loop {
                hi = (hi + step).min(max_range);
                if f(hi) <= 0.0 {
                    break;
                }
                if hi >= max_range {
                    return None;
                }
                lo = hi;
            }
        } else {
            hi = guess;
            lo = guess;
            loop {
                lo = (lo - step).max(0.0);
                if f(lo) > 0.0 {
                    break;
                }
                hi = lo;
            }
        }
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-10 {
                break;
            }
        }
        Some(0.5 * (lo + hi))
    }
}

// ---------------------------------------------------------------------------
// Waves

/// Wave-induced roll and pitch with occasional gust spikes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WaveModel {
    /// radians
    pub roll_amplitude: f64,
    /// radians
    pub pitch_amplitude: f64,
    pub period: f64,
    /// Probability per 10 Hz step that a gust starts.
    pub gust_spike_probability: f64,
    /// Gust angle magnitude range, radians.
    pub gust_angle: (f64, f64),
    pub gust_duration: f64,
}

impl Default for WaveModel {
    fn default() -> Self {
        Self {
            roll_amplitude: 3f64.to_radians(),
            pitch_amplitude: 2f64.to_radians(),
            period: 4.0,
            gust_spike_probability: 0.002,
            gust_angle: (11f64.to_radians(), 20f64.to_radians()),
            gust_duration: 0.5,
        }
    }
}

impl WaveModel {
    pub fn calm() -> Self {
        Self {
            roll_amplitude: 0.0,
            pitch_amplitude: 0.0,
            gust_spike_probability: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.roll_amplitude >= 0.0 && self.pitch_amplitude >= 0.0) {
            return Err(SimError::Waves("amplitudes must be non-negative".into()));
        }
        if !(self.period > 0.0 && self.gust_duration >= 0.0) {
            return Err(SimError::Waves("period must be positive and gust duration non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.gust_spike_probability) {
            return Err(SimError::Waves("gust probability outside [0, 1]".into()));
        }
        if !(self.gust_angle.0 >= 0.0 && self.gust_angle.0 <= self.gust_angle.1 && self.gust_angle.1 < PI / 2.0) {
            return Err(SimError::Waves("gust angle range must satisfy 0 <= lo <= hi < 90 deg".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Gust {
    until: f64,
    on_roll: bool,
    angle: f64,
}

/// Steps a [`WaveModel`] in time, owning its random stream.
#[derive(Debug, Clone)]
pub struct WaveState {
    model: WaveModel,
    phase: (f64, f64),
    gust: Option<Gust>,
    rng: ChaCha8Rng,
}

impl WaveState {
    pub fn new(model: WaveModel, mut rng: ChaCha8Rng) -> Self {
        let phase = (rng.random_range(0.0..TAU), rng.random_range(0.0..TAU));
        Self { model, phase, gust: None, rng }
    }

    /// Roll, pitch at time `t` and whether a gust is active. Call once per
    /// step with increasing `t`.
    pub fn sample(&mut self, t: f64) -> (f64, f64, bool) {
        let m = &self.model;
        let w = TAU / m.period;
        let mut roll = m.roll_amplitude * (w * t + self.phase.0).sin();
        let mut pitch = m.pitch_amplitude * (0.8 * w * t + self.phase.1).sin();
        if self.gust.is_some_and(|g| t >= g.until) {
            self.gust = None;
        }
        if self.gust.is_none() && m.gust_spike_probability > 0.0 && self.rng.random_bool(m.gust_spike_probability) {
            let magnitude = if m.gust_angle.1 > m.gust_angle.0 {
                self.rng.random_range(m.gust_angle.0..m.gust_angle.1)
            } else {
                m.gust_angle.0
            };
            let sign = if self.rng.random_bool(0.5) { 1.0 } else { -1.0 };
            self.gust = Some(Gust {
                until: t + m.gust_duration.max(1e-9),
                on_roll: self.rng.random_bool(0.5),
                angle: sign * magnitude,
            });
        }
        if let Some(g) = self.gust {
            if g.on_roll {
                roll = g.angle;
            } else {
                pitch = g.angle;
            }
        }
        (roll, pitch, self.gust.is_some())
    }
}

// ---------------------------------------------------------------------------
// Battery

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryModel {
    pub capacity_wh: f64,
    pub avg_power_draw: f64,
    /// (state of charge, pack voltage) pairs, state of charge ascending.
    pub voltage_curve: Vec<(f64, f64)>,
}

impl Default for BatteryModel {
    fn default() -> Self {
        Self::from_packs(2, SURVEY_POWER_DRAW)
    }
}

impl BatteryModel {
    /// `packs` 4S 10 Ah LiPo packs in parallel.
    pub fn from_packs(packs: u32, avg_power_draw: f64) -> Self {
        let per_cell = [(0.0, 3.30), (0.05, 3.55), (0.1, 3.68), (0.2, 3.74), (0.5, 3.82), (0.8, 3.97), (1.0, 4.20)];
        Self {
            capacity_wh: PACK_ENERGY_WH * f64::from(packs),
            avg_power_draw,
            voltage_curve: per_cell.iter().map(|&(s, v)| (s, 4.0 * v)).collect(),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.capacity_wh > 0.0 && self.capacity_wh.is_finite()) {
            return Err(SimError::Battery("capacity must be positive".into()));
        }
        if !(self.avg_power_draw > 0.0 && self.avg_power_draw.is_finite()) {
            return Err(SimError::Battery("power draw must be positive".into()));
        }
        let c = &self.voltage_curve;
        if c.len() < 2 || c.windows(2).any(|w| !(w[0].0 < w[1].0)) || c.iter().any(|&(_, v)| !(v > 0.0)) {
            return Err(SimError::Battery("voltage curve needs ≥ 2 points, SoC strictly ascending, voltages positive".into()));
        }
        Ok(())
    }

    /// Hours until the pack is empty at the average draw.
    pub fn endurance_hours(&self) -> f64 {
        self.capacity_wh / self.avg_power_draw
    }

    pub fn energy_used_wh(&self, elapsed: f64) -> f64 {
        self.avg_power_draw * elapsed / 3600.0
    }

    pub fn state_of_charge(&self, elapsed: f64) -> f64 {
        (1.0 - self.energy_used_wh(elapsed) / self.capacity_wh).clamp(0.0, 1.0)
    }

    pub fn voltage(&self, soc: f64) -> f64 {
        let c = &self.voltage_curve;
        let soc = soc.clamp(c[0].0, c[c.len() - 1].0);
        let k = c.partition_point(|&(s, _)| s < soc).clamp(1, c.len() - 1);
        let ((s0, v0), (s1, v1)) = (c[k - 1], c[k]);
        v0 + (v1 - v0) * (soc - s0) / (s1 - s0)
    }
}

// ---------------------------------------------------------------------------
// Sensors

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorNoise {
    pub gps_horizontal_sigma: f64,
    pub gps_vertical_sigma: f64,
    /// Hz
    pub gps_rate: f64,
    /// radians
    pub attitude_sigma: f64,
    pub depth_sigma: f64,
    /// Additional depth noise as a fraction of range.
    pub depth_sigma_fraction: f64,
    /// Probability per sounding of a spurious echo.
    pub depth_spike_probability: f64,
    /// Magnitude range of spurious echo offsets, meters.
    pub depth_spike_magnitude: (f64, f64),
    /// Hz
    pub battery_rate: f64,
}

impl Default for SensorNoise {
    fn default() -> Self {
        Self {
            gps_horizontal_sigma: 0.02,
            gps_vertical_sigma: 0.03,
            gps_rate: 5.0,
            attitude_sigma: 0.1f64.to_radians(),
            depth_sigma: 0.02,
            depth_sigma_fraction: 0.001,
            depth_spike_probability: 0.01,
            depth_spike_magnitude: (1.5, 5.0),
            battery_rate: 1.0,
        }
    }
}

impl SensorNoise {
    pub fn noise_free() -> Self {
        Self {
            gps_horizontal_sigma: 0.0,
            gps_vertical_sigma: 0.0,
            attitude_sigma: 0.0,
            depth_sigma: 0.0,
            depth_sigma_fraction: 0.0,
            depth_spike_probability: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let sigmas = [
            self.gps_horizontal_sigma,
            self.gps_vertical_sigma,
            self.attitude_sigma,
            self.depth_sigma,
            self.depth_sigma_fraction,
        ];
        if !sigmas.iter().all(|s| *s >= 0.0 && s.is_finite()) {
            return Err(SimError::Sensors("noise sigmas must be finite and non-negative".into()));
        }
        if !(self.gps_rate > 0.0 && self.gps_rate <= 10.0 && self.battery_rate > 0.0 && self.battery_rate <= 10.0) {
            return Err(SimError::Sensors("gps and battery rates must be in (0, 10] Hz".into()));
        }
        if !(0.0..=1.0).contains(&self.depth_spike_probability) {
            return Err(SimError::Sensors("spike probability outside [0, 1]".into()));
        }
        let (lo, hi) = self.depth_spike_magnitude;
        if !(lo >= 0.0 && lo <= hi && hi.is_finite()) {
            return Err(SimError::Sensors("spike magnitude range must satisfy 0 <= lo <= hi".into()));
        }
        Ok(())
    }
}

fn gaussian(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    Normal::new(0.0, sigma).expect("finite sigma").sample(rng)
}

/// Independent random streams per concern so that changing one model does
/// not reshuffle the draws of another.
pub(crate) fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Survey start time written to simulated log headers.
pub fn sim_epoch() -> DateTime<Utc> {
    DateTime::from_timestamp(1_604_296_800, 0).expect("valid epoch")
}

pub(crate) fn gps_record(t: Timestamp, antenna: EnuPoint, origin: GeoPoint) -> Result<GpsRecord, GeoError> {
    let g = geo::enu_to_geo(antenna, origin)?;
    Ok(GpsRecord {
        t,
        lat: g.latitude,
        lon: g.longitude,
        height: g.ellipsoidal_height,
        fix: FixType::RtkFixed,
        hdop: 0.7,
    })
}

// ---------------------------------------------------------------------------
// Survey

/// Ground truth kept alongside a simulated survey log.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SurveyTruth {
    /// Indices (in DPTH record order) of soundings carrying a spurious echo.
    pub depth_spikes: Vec<usize>,
    /// Indices of soundings taken while a gust held the attitude past its
    /// wave envelope.
    pub attitude_spikes: Vec<usize>,
    /// True seabed point hit by each sounding's beam, in DPTH order.
    pub ground_points: Vec<EnuPoint>,
    pub truncated: bool,
    pub duration: f64,
    pub energy_used_wh: f64,
    /// Largest speed and turn rate seen, for envelope checks.
    pub max_speed: f64,
    pub max_turn_rate: f64,
}

#[derive(Debug, Clone)]
pub struct SurveyRun {
    pub log: SurveyLog,
    pub truth: SurveyTruth,
}

/// Steps of 10 Hz time that fall on a `rate` Hz schedule.
fn on_schedule(step: u64, rate: f64) -> bool {
    let period_ms = (1000.0 / rate).round() as u64;
    period_ms > 0 && (step * SIM_DT_MS) % period_ms.max(SIM_DT_MS) < SIM_DT_MS
}

/// Flies `plan` and logs what the sensors would have recorded.
///
/// Soundings are logged on transect legs only, once the vehicle has turned
/// onto the line, like the survey trigger of the autopilot mission. The log origin is the plan's area center with the
/// water surface at local `up = 0`.
#[allow(clippy::too_many_arguments)]
pub fn run_survey(
    plan: &MissionPlan,
    vehicle: &VehicleModel,
    seabed: &SeabedModel,
    waves: &WaveModel,
    battery: &BatteryModel,
    sounder_arm: &LeverArm,
    noise: &SensorNoise,
    seed: u64,
) -> Result<SurveyRun, SimError> {
    vehicle.validate()?;
    waves.validate()?;
    battery.validate()?;
    noise.validate()?;
    let origin = plan.origin();
    let waypoints: Vec<EnuPoint> = plan
        .local_waypoints()?
        .into_iter()
        .map(|w| EnuPoint::new(w.east, w.north, vehicle.antenna_height))
        .collect();
    if waypoints.len() < 2 {
        return Err(SimError::Plan("plan needs at least two waypoints".into()));
    }
    if plan.transect_spacing < 2.0 * vehicle.waypoint_accept_radius {
        return Err(SimError::Plan(format!(
            "spacing {} m below twice the accept radius {} m",
            plan.transect_spacing, vehicle.waypoint_accept_radius
        )));
    }
    let vehicle = VehicleModel {
        cruise_speed: plan.cruise_speed.min(vehicle.max_speed),
        ..*vehicle
    };

    let mut header = LogHeader::new(format!("sim-{seed}"), origin, sim_epoch());
    header.lever_arms.insert("sounder".into(), *sounder_arm);
    let mut log = SurveyLog::new(header);
    let mut truth = SurveyTruth::default();

    let mut wave = WaveState::new(*waves, stream(seed, 1));
    let mut sensor_rng = stream(seed, 2);
    let mut nav_rng = stream(seed, 3);

    let first_heading = geo::bearing(waypoints[0], waypoints[1]);
    let mut state = VehicleState::at_rest(waypoints[0], first_heading);
    let mut leg = 0usize;
    let mut wander = 0.0f64;
    let wander_tau = 10.0;
    let sample_period_ms = (1000.0 / plan.sample_rate).round().max(1.0) as u64;
    let mut next_sample_ms = 0u64;
    let mut dpth_index = 0usize;
    let max_steps = (battery.endurance_hours() * 3600.0 / SIM_DT).ceil() as u64 + 2;

    for step in 0..=max_steps {
        let t_ms = step * SIM_DT_MS;
        let t = t_ms as f64 / 1000.0;
        let ts = Timestamp::from_millis(t_ms);

        if battery.energy_used_wh(t) >= battery.capacity_wh {
            log.push(LogRecord::Event(EventRecord {
                t: ts,
                code: "BATTERY_EXHAUSTED".into(),
                message: format!("survey truncated on leg {leg} of {}", waypoints.len() - 1),
            }));
            truth.truncated = true;
            truth.duration = t;
            break;
        }

        let (roll, pitch, gusting) = wave.sample(t);
        let attitude = Attitude::new(roll, pitch, state.heading);
        let pose = Pose::new(t, state.position, attitude);

        log.push(LogRecord::Att(AttRecord {
            t: ts,
            roll: roll + gaussian(&mut sensor_rng, noise.attitude_sigma),
            pitch: pitch + gaussian(&mut sensor_rng, noise.attitude_sigma),
            yaw: geo::wrap_two_pi(state.heading + gaussian(&mut sensor_rng, noise.attitude_sigma)),
        }));
        if on_schedule(step, noise.gps_rate) {
            let measured = EnuPoint::new(
                state.position.east + gaussian(&mut sensor_rng, noise.gps_horizontal_sigma),
                state.position.north + gaussian(&mut sensor_rng, noise.gps_horizontal_sigma),
                state.position.up + gaussian(&mut sensor_rng, noise.gps_vertical_sigma),
            );
            log.push(LogRecord::Gps(gps_record(ts, measured, origin)?));
        }
        if on_schedule(step, noise.battery_rate) {
            let v = battery.voltage(battery.state_of_charge(t));
            log.push(LogRecord::Bat(BatRecord {
                t: ts,
                voltage: v,
                current: battery.avg_power_draw / v,
            }));
        }

        let aligned = geo::wrap_pi(geo::bearing(waypoints[leg], waypoints[leg + 1]) - state.heading).abs() <= LINE_ALIGNMENT;
        let on_transect = leg % 2 == 0 && aligned;
        if t_ms >= next_sample_ms {
            if on_transect {
                let sounder = geo::apply_lever_arm(&pose, sounder_arm);
                let beam = geo::rotate_body_to_enu(Vector3::new(0.0, 0.0, 1.0), &attitude);
                match seabed.ray_intersection(sounder, beam, MAX_RAW_DEPTH) {
                    Some(range) if range > 0.0 => {
                        let mut raw = range + gaussian(&mut sensor_rng, noise.depth_sigma + noise.depth_sigma_fraction * range);
                        let spike = noise.depth_spike_probability > 0.0 && sensor_rng.random_bool(noise.depth_spike_probability);
                        if spike {
                            let (lo, hi) = noise.depth_spike_magnitude;
                            let m = if hi > lo { sensor_rng.random_range(lo..hi) } else { lo };
                            let up = sensor_rng.random_bool(0.5);
                            raw = if up && raw - m > 0.2 { raw - m } else { raw + m };
                            truth.depth_spikes.push(dpth_index);
                        }
                        if raw > 0.0 && raw <= MAX_RAW_DEPTH {
                            if gusting {
                                truth.attitude_spikes.push(dpth_index);
                            }
                            truth.ground_points.push(sounder + beam * range);
                            log.push(LogRecord::Dpth(DpthRecord { t: ts, raw_depth: raw }));
                            dpth_index += 1;
                        } else if spike {
                            truth.depth_spikes.pop();
                        }
                    }
                    _ => log.push(LogRecord::Event(EventRecord {
                        t: ts,
                        code: "DPTH_DROPOUT".into(),
                        message: "no bottom echo within sensor range".into(),
                    })),
                }
            }
            next_sample_ms += sample_period_ms;
        }

        // Guidance for the next step.
        if state.position.horizontal_distance(waypoints[leg + 1]) <= vehicle.waypoint_accept_radius {
            leg += 1;
            if leg + 1 >= waypoints.len() {
                truth.duration = t;
                break;
            }
        }
        let (from, to) = (waypoints[leg], waypoints[leg + 1]);
        if vehicle.cross_track_rms > 0.0 {
            let a = (-SIM_DT / wander_tau).exp();
            wander = a * wander + vehicle.cross_track_rms * (1.0 - a * a).sqrt() * gaussian(&mut nav_rng, 1.0);
        }
        let offset = if leg % 2 == 0 { wander } else { 0.0 };
        let target = los_target(from, to, state.position, vehicle.lookahead, offset);
        state = step_vehicle(&vehicle, &state, Some(target), SIM_DT);
        truth.max_speed = truth.max_speed.max(state.speed);
        truth.max_turn_rate = truth.max_turn_rate.max(state.turn_rate.abs());
    }
    truth.energy_used_wh = battery.energy_used_wh(truth.duration);
    Ok(SurveyRun { log, truth })
}

// ---------------------------------------------------------------------------
// Beacon

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BeaconProfile {
    Stationary {
        position: EnuPoint,
    },
    RandomWalk {
        start: EnuPoint,
        mean_speed: f64,
        /// Correlation time of heading and speed changes, seconds.
        correlation_time: f64,
    },
    DiveCycle {
        start: EnuPoint,
        mean_speed: f64,
        correlation_time: f64,
        /// Locator depth while the diver is at the surface.
        surface_offset: f64,
        dive_depth: f64,
        surface_time: f64,
        dive_time: f64,
        vertical_speed: f64,
    },
}

/// Maximum beacon horizontal speed accepted by [`beacon_profile`].
pub const MAX_BEACON_SPEED: f64 = 2.0;

impl BeaconProfile {
    pub fn dive_cycle(start: EnuPoint, mean_speed: f64) -> Self {
        BeaconProfile::DiveCycle {
            start,
            mean_speed,
            correlation_time: 30.0,
            surface_offset: 0.5,
            dive_depth: 6.0,
            surface_time: 40.0,
            dive_time: 50.0,
            vertical_speed: 0.5,
        }
    }

    fn validate(&self) -> Result<(), SimError> {
        let err = |m: &str| Err(SimError::Beacon(m.into()));
        match *self {
            BeaconProfile::Stationary { position } => {
                if !(position.is_finite() && position.up < 0.0) {
                    return err("stationary beacon must be finite and underwater");
                }
            }
            BeaconProfile::RandomWalk { start, mean_speed, correlation_time } => {
                if !(start.is_finite() && start.up < 0.0) {
                    return err("start must be finite and underwater");
                }
                if !(mean_speed >= 0.0 && mean_speed <= MAX_BEACON_SPEED && correlation_time > 0.0) {
                    return err("speed must be in [0, 2] m/s and correlation time positive");
                }
            }
            BeaconProfile::DiveCycle {
                start,
                mean_speed,
                correlation_time,
                surface_offset,
                dive_depth,
                surface_time,
                dive_time,
                vertical_speed,
            } => {
                if !start.is_finite() {
                    return err("start must be finite");
                }
                if !(mean_speed >= 0.0 && mean_speed <= MAX_BEACON_SPEED && correlation_time > 0.0) {
                    return err("speed must be in [0, 2] m/s and correlation time positive");
                }
                if !(surface_offset > 0.0 && dive_depth >= surface_offset && vertical_speed > 0.0) {
                    return err("need 0 < surface_offset <= dive_depth and a positive vertical speed");
                }
                if !(surface_time >= 0.0 && dive_time > 0.0) {
                    return err("dive time must be positive and surface time non-negative");
                }
            }
        }
        Ok(())
    }
}

/// Depth of a dive cycle at time `t` into the cycle: a trapezoid that leaves
/// `surface`, reaches `bottom` at `vs`, and returns within `dive_time`.
fn dive_depth_at(t: f64, surface: f64, bottom: f64, surface_time: f64, dive_time: f64, vs: f64) -> f64 {
    let cycle = surface_time + dive_time;
    let phase = t.rem_euclid(cycle);
    if phase < surface_time {
        return surface;
    }
    let into = phase - surface_time;
    let travel = ((bottom - surface) / vs).min(dive_time / 2.0);
    let reach = surface + travel * vs;
    if into < travel {
        surface + into * vs
    } else if into > dive_time - travel {
        surface + (dive_time - into) * vs
    } else {
        reach
    }
}

/// Samples a beacon trajectory every `dt` seconds over `duration`.
///
/// Horizontal motion is a correlated random walk: heading and speed follow
/// Ornstein–Uhlenbeck processes around a random drift and `mean_speed`.
pub fn beacon_profile(profile: &BeaconProfile, duration: f64, dt: f64, seed: u64) -> Result<Vec<(f64, EnuPoint)>, SimError> {
    profile.validate()?;
    if !(dt > 0.0 && duration >= 0.0 && duration.is_finite()) {
        return Err(SimError::Beacon("dt must be positive and duration finite".into()));
    }
    let n = (duration / dt).round() as usize;
    let mut out = Vec::with_capacity(n + 1);
    let mut rng = stream(seed, 4);
    let (start, mean_speed, tau) = match *profile {
        BeaconProfile::Stationary { position } => {
            return Ok((0..=n).map(|i| (i as f64 * dt, position)).collect());
        }
        BeaconProfile::RandomWalk { start, mean_speed, correlation_time } => (start, mean_speed, correlation_time),
        BeaconProfile::DiveCycle { start, mean_speed, correlation_time, .. } => (start, mean_speed, correlation_time),
    };
    let mut heading = rng.random_range(0.0..TAU);
    let mut turn = 0.0f64;
    let mut speed = mean_speed;
    let (mut east, mut north) = (start.east, start.north);
    let a = (-dt / tau).exp();
    let b = (1.0 - a * a).sqrt();
    for i in 0..=n {
        let t = i as f64 * dt;
        let up = match *profile {
            BeaconProfile::DiveCycle {
                surface_offset,
                dive_depth,
                surface_time,
                dive_time,
                vertical_speed,
                ..
            } => -dive_depth_at(t, surface_offset, dive_depth, surface_time, dive_time, vertical_speed),
            _ => start.up,
        };
        out.push((t, EnuPoint::new(east, north, up)));
        // Turn rate wanders with a one-sigma of a quarter turn per correlation time.
        turn = a * turn + b * gaussian(&mut rng, PI / 2.0 / tau);
        heading = geo::wrap_two_pi(heading + turn * dt);
        speed = (a * speed + (1.0 - a) * mean_speed + b * gaussian(&mut rng, 0.2 * mean_speed)).clamp(0.0, MAX_BEACON_SPEED);
        east += speed * heading.sin() * dt;
        north += speed * heading.cos() * dt;
    }
    Ok(out)
}

/// Linear interpolation in a time-ordered trajectory; clamps at the ends.
pub fn sample_trajectory(track: &[(f64, EnuPoint)], t: f64) -> Option<EnuPoint> {
    let first = track.first()?;
    let last = track.last()?;
    if t <= first.0 {
        return Some(first.1);
    }
    if t >= last.0 {
        return Some(last.1);
    }
    let k = track.partition_point(|(ti, _)| *ti <= t);
    let (t0, p0) = track[k - 1];
    let (t1, p1) = track[k];
    Some(p0.lerp(p1, (t - t0) / (t1 - t0)))
}
