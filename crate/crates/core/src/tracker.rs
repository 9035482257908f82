//! Follow/hold beacon tracking.
//!
//! Once per loop period the controller compares the latest acoustic fix with
//! the vehicle position. Inside the threshold it holds; outside it sends the
//! beacon's horizontal position as the next waypoint.

use crate::geo::{self, Attitude, EnuPoint, GeoPoint, Pose};
use crate::logfmt::{
    AttRecord, EventRecord, LogHeader, LogRecord, ModeRecord, SblRawRecord, SblRecord, SurveyLog, Timestamp,
};
use crate::sbl::{self, AcousticNoiseModel, ReceiverArray, SblFix, SolverConfig, ToaOutcome, DEFAULT_SOUND_SPEED};
use crate::sim::{self, SimError, VehicleModel, VehicleState, WaveModel, WaveState, SIM_DT};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrackError {
    #[error("tracker config: {0}")]
    Config(String),
    #[error("beacon track: {0}")]
    Track(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Sbl(#[from] sbl::SblError),
    #[error(transparent)]
    Geo(#[from] geo::GeoError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerConfig {
    pub follow_threshold: f64,
    /// Seconds between controller updates.
    pub loop_period: f64,
    pub max_range_abort: f64,
    /// Seconds without a valid fix before the tracker declares LOST.
    pub lost_timeout: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            follow_threshold: 5.0,
            loop_period: 1.0,
            max_range_abort: 100.0,
            lost_timeout: 10.0,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<(), TrackError> {
        if !(self.follow_threshold > 0.0 && self.follow_threshold < self.max_range_abort) {
            return Err(TrackError::Config(format!(
                "need 0 < follow_threshold ({}) < max_range_abort ({})",
                self.follow_threshold, self.max_range_abort
            )));
        }
        // The session integrates at 10 Hz, so the loop period is a whole
        // number of steps.
        let steps = self.loop_period / SIM_DT;
        if !(self.loop_period > 0.0 && (steps - steps.round()).abs() < 1e-9 && steps >= 1.0) {
            return Err(TrackError::Config(format!("loop period {} s must be a positive multiple of 0.1 s", self.loop_period)));
        }
        if !(self.lost_timeout > 0.0) {
            return Err(TrackError::Config("lost timeout must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum TrackerMode {
    #[default]
    Hold,
    Follow,
    Lost,
}

impl fmt::Display for TrackerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrackerMode::Hold => "HOLD",
            TrackerMode::Follow => "FOLLOW",
            TrackerMode::Lost => "LOST",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackerState {
    pub mode: TrackerMode,
    pub current_waypoint: Option<GeoPoint>,
    /// Seconds since the last valid fix.
    pub last_fix_age: f64,
}

impl Default for TrackerState {
    fn default() -> Self {
        Self {
            mode: TrackerMode::Hold,
            current_waypoint: None,
            last_fix_age: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Command {
    HoldPosition,
    /// Go to the beacon's horizontal position. `local` carries the vehicle's
    /// own height; the height of `geo` is not used by the autopilot.
    SetWaypoint { geo: GeoPoint, local: EnuPoint },
    /// No new information: keep executing the previous command.
    Continue,
}

/// One controller update.
///
/// Invalid or missing fixes age the last one; past `lost_timeout` the mode
/// becomes LOST and the vehicle holds. Before that the previous command
/// stands.
pub fn step(state: &TrackerState, vehicle: &Pose, fix: Option<&SblFix>, cfg: &TrackerConfig) -> (TrackerState, Command) {
    match fix.filter(|f| f.valid) {
        Some(f) => {
            let d = vehicle.position.horizontal_distance(f.enu_position);
            if d <= cfg.follow_threshold {
                let next = TrackerState {
                    mode: TrackerMode::Hold,
                    current_waypoint: None,
                    last_fix_age: 0.0,
                };
                (next, Command::HoldPosition)
            } else {
                let local = EnuPoint::new(f.enu_position.east, f.enu_position.north, vehicle.position.up);
                let next = TrackerState {
                    mode: TrackerMode::Follow,
                    current_waypoint: Some(f.geo_position),
                    last_fix_age: 0.0,
                };
                (next, Command::SetWaypoint { geo: f.geo_position, local })
            }
        }
        None => {
            let age = state.last_fix_age + cfg.loop_period;
            if age > cfg.lost_timeout {
                let next = TrackerState {
                    mode: TrackerMode::Lost,
                    current_waypoint: None,
                    last_fix_age: age,
                };
                return (next, Command::HoldPosition);
            }
            let next = TrackerState { last_fix_age: age, ..*state };
            (next, Command::Continue)
        }
    }
}

/// Everything besides the beacon track that a closed-loop session needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub tracker: TrackerConfig,
    pub vehicle: VehicleModel,
    pub array: ReceiverArray,
    pub acoustic: AcousticNoiseModel,
    pub solver: SolverConfig,
    pub waves: WaveModel,
    pub sound_speed: f64,
    pub origin: GeoPoint,
    /// Vehicle start position; `up` is replaced by the antenna height.
    pub start: EnuPoint,
    /// GPS horizontal noise on the pose used to geolocate fixes, meters.
    pub gps_sigma: f64,
    /// Heading noise on the same pose, radians.
    pub heading_sigma: f64,
    /// Slack on the threshold used for the time-near-beacon statistic.
    pub near_margin: f64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            tracker: TrackerConfig::default(),
            vehicle: VehicleModel::default(),
            array: ReceiverArray::default(),
            acoustic: AcousticNoiseModel::default(),
            solver: SolverConfig::default(),
            waves: WaveModel {
                gust_spike_probability: 0.0,
                ..WaveModel::default()
            },
            sound_speed: DEFAULT_SOUND_SPEED,
            origin: GeoPoint {
                latitude: -21.017348,
                longitude: 55.238212,
                ellipsoidal_height: 0.0,
            },
            start: EnuPoint::ORIGIN,
            gps_sigma: 0.02,
            heading_sigma: 0.5f64.to_radians(),
            near_margin: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct SessionSummary {
    pub duration: f64,
    pub steps: usize,
    /// Controller steps spent in each mode.
    pub mode_counts: [(TrackerMode, usize); 3],
    pub valid_fixes: usize,
    pub invalid_fixes: usize,
    pub dropouts: usize,
    /// Fraction of steps with slant range below `max_range_abort`.
    pub within_range_fraction: f64,
    /// First step whose horizontal distance is within threshold + margin.
    pub converged_at: Option<usize>,
    /// Fraction of steps from `converged_at` on within threshold + margin.
    pub near_fraction: f64,
    pub range_exceeded_warnings: usize,
    pub max_slant_range: f64,
    pub max_beacon_speed: f64,
    /// Per-step true horizontal distance, meters.
    pub horizontal_distances: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TrackingRun {
    pub log: SurveyLog,
    pub summary: SessionSummary,
}

fn max_speed(track: &[(f64, EnuPoint)]) -> f64 {
    track
        .windows(2)
        .filter(|w| w[1].0 > w[0].0)
        .map(|w| w[0].1.horizontal_distance(w[1].1) / (w[1].0 - w[0].0))
        .fold(0.0, f64::max)
}

/// Closed-loop tracking simulation over the span of `beacon_track`.
pub fn track_session(beacon_track: &[(f64, EnuPoint)], cfg: &SessionConfig, seed: u64) -> Result<TrackingRun, TrackError> {
    cfg.tracker.validate()?;
    cfg.vehicle.validate()?;
    cfg.waves.validate()?;
    cfg.acoustic.validate()?;
    if beacon_track.len() < 2 || beacon_track.windows(2).any(|w| !(w[1].0 > w[0].0)) {
        return Err(TrackError::Track("need at least two samples with increasing time".into()));
    }
    let t_end = beacon_track.last().map(|s| s.0).unwrap_or(0.0);
    let steps_per_loop = (cfg.tracker.loop_period / SIM_DT).round() as u64;
    let total_steps = (t_end / SIM_DT).floor() as u64;

    let mut header = LogHeader::new(format!("track-{seed}"), cfg.origin, sim::sim_epoch());
    header.lever_arms.insert("sbl_array".into(), geo::LeverArm::new(0.0, 0.0, cfg.array.centroid().z)?);
    let mut log = SurveyLog::new(header);
    let mut summary = SessionSummary {
        mode_counts: [(TrackerMode::Hold, 0), (TrackerMode::Follow, 0), (TrackerMode::Lost, 0)],
        max_beacon_speed: max_speed(beacon_track),
        ..SessionSummary::default()
    };
    if summary.max_beacon_speed > cfg.vehicle.max_speed {
        log.push(LogRecord::Event(EventRecord {
            t: Timestamp::from_millis(0),
            code: "BEACON_TOO_FAST".into(),
            message: format!(
                "beacon reaches {:.2} m/s, above the vehicle's {:.2} m/s",
                summary.max_beacon_speed, cfg.vehicle.max_speed
            ),
        }));
    }

    let mut wave = WaveState::new(cfg.waves, sim::stream(seed, 11));
    let mut acoustic_rng = sim::stream(seed, 12);
    let mut nav_rng = sim::stream(seed, 13);
    let gps = Normal::new(0.0, cfg.gps_sigma.max(0.0)).map_err(|e| TrackError::Config(e.to_string()))?;
    let heading = Normal::new(0.0, cfg.heading_sigma.max(0.0)).map_err(|e| TrackError::Config(e.to_string()))?;

    let b0 = beacon_track[0].1;
    let start = EnuPoint::new(cfg.start.east, cfg.start.north, cfg.vehicle.antenna_height);
    let mut vehicle = VehicleState::at_rest(start, geo::bearing(start, b0));
    let mut tracker = TrackerState::default();
    let mut target: Option<EnuPoint> = None;
    let mut prior: Option<EnuPoint> = None;
    let mut exceeded = false;
    let mut within = 0usize;

    log.push(LogRecord::Mode(ModeRecord {
        t: Timestamp::from_millis(0),
        mode: tracker.mode.to_string(),
    }));

    for step_index in 0..=total_steps {
        let t_ms = step_index * 100;
        let t = t_ms as f64 / 1000.0;
        let ts = Timestamp::from_millis(t_ms);
        let (roll, pitch, _) = wave.sample(t);

        if step_index % steps_per_loop == 0 {
            let beacon = sim::sample_trajectory(beacon_track, t).expect("non-empty track");
            let truth = Pose::new(t, vehicle.position, Attitude::new(roll, pitch, vehicle.heading));
            let measured = Pose::new(
                t,
                EnuPoint::new(
                    vehicle.position.east + gps.sample(&mut nav_rng),
                    vehicle.position.north + gps.sample(&mut nav_rng),
                    vehicle.position.up,
                ),
                Attitude::new(roll, pitch, vehicle.heading + heading.sample(&mut nav_rng)),
            );
            log.push(LogRecord::Gps(sim::gps_record(ts, measured.position, cfg.origin)?));
            log.push(LogRecord::Att(AttRecord {
                t: ts,
                roll: measured.attitude.roll,
                pitch: measured.attitude.pitch,
                yaw: measured.attitude.yaw,
            }));

            let fix = match sbl::simulate_toa(beacon, &truth, &cfg.array, &cfg.acoustic, cfg.sound_speed, &mut acoustic_rng)? {
                ToaOutcome::Received { toa, .. } => {
                    log.push(LogRecord::SblRaw(SblRawRecord {
                        t: ts,
                        toa: toa.arrival_times,
                        sound_speed: toa.sound_speed,
                    }));
                    let toa = sbl::ToaSet { timestamp: t, ..toa };
                    let fix = sbl::solve_fix(&toa, &measured, &cfg.array, prior, cfg.origin, &cfg.solver)?;
                    if fix.valid {
                        summary.valid_fixes += 1;
                        prior = Some(fix.enu_position);
                        log.push(LogRecord::Sbl(SblRecord {
                            t: ts,
                            rel_x: fix.rel_position.x,
                            rel_y: fix.rel_position.y,
                            rel_z: fix.rel_position.z,
                            std: fix.std,
                        }));
                    } else {
                        summary.invalid_fixes += 1;
                        log.push(LogRecord::Event(EventRecord {
                            t: ts,
                            code: "SBL_INVALID".into(),
                            message: format!("fix rejected, std {:.2} m", fix.std),
                        }));
                    }
                    Some(fix)
                }
                ToaOutcome::Dropout => {
                    summary.dropouts += 1;
                    log.push(LogRecord::Event(EventRecord {
                        t: ts,
                        code: "SBL_DROPOUT".into(),
                        message: "no acoustic reply".into(),
                    }));
                    None
                }
            };

            let (next, command) = step(&tracker, &measured, fix.as_ref(), &cfg.tracker);
            if next.mode != tracker.mode {
                log.push(LogRecord::Mode(ModeRecord {
                    t: ts,
                    mode: next.mode.to_string(),
                }));
            }
            tracker = next;
            match command {
                Command::HoldPosition => target = None,
                Command::SetWaypoint { local, .. } => target = Some(local),
                Command::Continue => {}
            }

            let slant = vehicle.position.distance(beacon);
            let horizontal = vehicle.position.horizontal_distance(beacon);
            summary.max_slant_range = summary.max_slant_range.max(slant);
            if slant < cfg.tracker.max_range_abort {
                within += 1;
                exceeded = false;
            } else if !exceeded {
                exceeded = true;
                summary.range_exceeded_warnings += 1;
                log.push(LogRecord::Event(EventRecord {
                    t: ts,
                    code: "RANGE_EXCEEDED".into(),
                    message: format!("beacon {slant:.1} m away"),
                }));
            }
            summary.horizontal_distances.push(horizontal);
            for (mode, count) in summary.mode_counts.iter_mut() {
                if *mode == tracker.mode {
                    *count += 1;
                }
            }
        }
        if step_index < total_steps {
            vehicle = sim::step_vehicle(&cfg.vehicle, &vehicle, target, SIM_DT);
        }
    }

    summary.steps = summary.horizontal_distances.len();
    summary.duration = total_steps as f64 * SIM_DT;
    summary.within_range_fraction = within as f64 / summary.steps.max(1) as f64;
    let near = cfg.tracker.follow_threshold + cfg.near_margin;
    summary.converged_at = summary.horizontal_distances.iter().position(|d| *d <= near);
    summary.near_fraction = match summary.converged_at {
        Some(k) => {
            let tail = &summary.horizontal_distances[k..];
            tail.iter().filter(|d| **d <= near).count() as f64 / tail.len() as f64
        }
        None => 0.0,
    };
    Ok(TrackingRun { log, summary })
}
