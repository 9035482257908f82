//! Lawnmower survey planning over a rectangular area.
//!
//! Transects run parallel to the longer side of the rectangle, the first one
//! inset half a spacing from the edge, and are visited in serpentine order.

use crate::geo::{self, EnuPoint, GeoError, GeoPoint};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

/// Cruise-speed envelope for surveys, m/s.
pub const SURVEY_SPEED_RANGE: (f64, f64) = (0.5, 1.2);
/// Area cap, m².
pub const MAX_AREA: f64 = 1.0e6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("invalid survey area: {0}")]
    Area(String),
    #[error("transect spacing {spacing} m must be in (0, {short}] m")]
    Spacing { spacing: f64, short: f64 },
    #[error("cruise speed {0} m/s outside the allowed range")]
    Speed(f64),
    #[error("sample rate must be positive, got {0}")]
    Rate(f64),
    #[error("{0}")]
    Domain(String),
    #[error("geodesy: {0}")]
    Geo(#[from] GeoError),
    #[error("geojson: {0}")]
    GeoJson(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurveyArea {
    pub center: GeoPoint,
    pub width: f64,
    pub length: f64,
    /// Bearing of the `length` side, degrees clockwise from north.
    pub bearing_of_length_axis: f64,
}

impl SurveyArea {
    pub fn new(center: GeoPoint, width: f64, length: f64, bearing_of_length_axis: f64) -> Result<Self, PlanError> {
        let a = Self {
            center,
            width,
            length,
            bearing_of_length_axis,
        };
        a.validate()?;
        Ok(a)
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        self.center.validate()?;
        if !(self.width > 0.0 && self.length > 0.0) {
            return Err(PlanError::Area(format!("sides must be positive ({} x {})", self.width, self.length)));
        }
        if self.width * self.length > MAX_AREA {
            return Err(PlanError::Area(format!("{} m² exceeds {MAX_AREA} m²", self.width * self.length)));
        }
        if !self.bearing_of_length_axis.is_finite() {
            return Err(PlanError::Area("bearing is not finite".into()));
        }
        Ok(())
    }

    /// Unit vectors (east, north) along the length and width sides.
    pub fn axes(&self) -> ([f64; 2], [f64; 2]) {
        let b = self.bearing_of_length_axis.to_radians();
        let along = [b.sin(), b.cos()];
        let across = [b.cos(), -b.sin()];
        (along, across)
    }

    /// Corner points in the local frame centred on `center`, counter-clockwise.
    pub fn local_corners(&self) -> [EnuPoint; 4] {
        let (l, w) = self.axes();
        let hl = self.length / 2.0;
        let hw = self.width / 2.0;
        let pt = |sl: f64, sw: f64| EnuPoint::new(sl * hl * l[0] + sw * hw * w[0], sl * hl * l[1] + sw * hw * w[1], 0.0);
        [pt(-1.0, -1.0), pt(-1.0, 1.0), pt(1.0, 1.0), pt(1.0, -1.0)]
    }

    /// True when `p` (local frame) is inside the rectangle grown by `margin`.
    pub fn contains_local(&self, p: EnuPoint, margin: f64) -> bool {
        let (l, w) = self.axes();
        let a = p.east * l[0] + p.north * l[1];
        let c = p.east * w[0] + p.north * w[1];
        a.abs() <= self.length / 2.0 + margin && c.abs() <= self.width / 2.0 + margin
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionPlan {
    pub area: SurveyArea,
    /// Transect endpoints in visiting order: start₀, end₀, start₁, end₁, ...
    pub waypoints: Vec<GeoPoint>,
    pub transect_spacing: f64,
    pub cruise_speed: f64,
    pub sample_rate: f64,
    pub transect_count: usize,
}

impl MissionPlan {
    /// Local-frame origin shared by everything derived from this plan.
    pub fn origin(&self) -> GeoPoint {
        self.area.center
    }

    pub fn local_waypoints(&self) -> Result<Vec<EnuPoint>, GeoError> {
        self.waypoints.iter().map(|w| geo::geo_to_enu(*w, self.origin())).collect()
    }

    /// Total along-path distance through all waypoints, meters.
    pub fn path_length(&self) -> Result<f64, GeoError> {
        let pts = self.local_waypoints()?;
        Ok(pts.windows(2).map(|w| w[0].horizontal_distance(w[1])).sum())
    }

    /// Length of a single transect, meters.
    pub fn transect_length(&self) -> f64 {
        self.area.width.max(self.area.length)
    }
}

/// Speed limits applied by [`plan_lawnmower_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedLimits {
    pub min: f64,
    pub max: f64,
}

impl Default for SpeedLimits {
    fn default() -> Self {
        Self {
            min: SURVEY_SPEED_RANGE.0,
            max: SURVEY_SPEED_RANGE.1,
        }
    }
}

impl SpeedLimits {
    /// Any positive speed.
    pub const UNBOUNDED: SpeedLimits = SpeedLimits {
        min: 0.0,
        max: f64::INFINITY,
    };
}

/// Plans a serpentine survey with the default speed envelope.
pub fn plan_lawnmower(area: &SurveyArea, spacing: f64, speed: f64, rate: f64) -> Result<MissionPlan, PlanError> {
    plan_lawnmower_with(area, spacing, speed, rate, SpeedLimits::default())
}

pub fn plan_lawnmower_with(
    area: &SurveyArea,
    spacing: f64,
    speed: f64,
    rate: f64,
    limits: SpeedLimits,
) -> Result<MissionPlan, PlanError> {
    area.validate()?;
    let short = area.width.min(area.length);
    if !(spacing > 0.0 && spacing <= short) {
        return Err(PlanError::Spacing { spacing, short });
    }
    if !(speed > 0.0 && speed >= limits.min && speed <= limits.max) {
        return Err(PlanError::Speed(speed));
    }
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(PlanError::Rate(rate));
    }

    // Guard against 0.3 / 0.1 = 2.9999999999999996.
    let count = ((short / spacing) * (1.0 + 1e-12)).floor() as usize;
    let (l_axis, w_axis) = area.axes();
    let (long_dir, across_dir) = if area.length >= area.width {
        (l_axis, w_axis)
    } else {
        (w_axis, l_axis)
    };
    let half_long = area.width.max(area.length) / 2.0;

    let mut waypoints = Vec::with_capacity(2 * count);
    for k in 0..count {
        let offset = -short / 2.0 + spacing / 2.0 + k as f64 * spacing;
        let at = |s: f64| {
            EnuPoint::new(
                offset * across_dir[0] + s * long_dir[0],
                offset * across_dir[1] + s * long_dir[1],
                0.0,
            )
        };
        let (a, b) = if k % 2 == 0 {
            (at(-half_long), at(half_long))
        } else {
            (at(half_long), at(-half_long))
        };
        waypoints.push(geo::enu_to_geo(a, area.center)?);
        waypoints.push(geo::enu_to_geo(b, area.center)?);
    }

    Ok(MissionPlan {
        area: *area,
        waypoints,
        transect_spacing: spacing,
        cruise_speed: speed,
        sample_rate: rate,
        transect_count: count,
    })
}

/// Sounding density achieved by a plan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingSpec {
    pub along_track_spacing: f64,
    pub cross_track_spacing: f64,
    /// Full cone angle of the echo-sounder beam, degrees.
    pub beam_angle: f64,
}

impl SamplingSpec {
    /// Diameter of the ensonified disc at depth `d`.
    pub fn footprint_diameter_at(&self, depth: f64) -> f64 {
        2.0 * depth * (self.beam_angle.to_radians() / 2.0).tan()
    }
}

pub fn sampling_spec(plan: &MissionPlan, beam_angle: f64) -> Result<SamplingSpec, PlanError> {
    if !(beam_angle > 0.0 && beam_angle < 90.0) {
        return Err(PlanError::Domain(format!("beam angle {beam_angle}° outside (0, 90)")));
    }
    Ok(SamplingSpec {
        along_track_spacing: plan.cruise_speed / plan.sample_rate,
        cross_track_spacing: plan.transect_spacing,
        beam_angle,
    })
}

/// Rounds to `digits` significant figures (8.73 → 9, 87.3 → 90 with one digit).
pub fn round_significant(value: f64, digits: u32) -> f64 {
    if value == 0.0 || !value.is_finite() {
        return value;
    }
    let magnitude = value.abs().log10().floor() as i32;
    let scale = 10f64.powi(digits as i32 - 1 - magnitude);
    (value * scale).round() / scale
}

/// TVU model `sqrt(a² + (b·d)²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TvuCoefficients {
    /// Depth-independent part, meters.
    pub a: f64,
    /// Depth-dependent factor.
    pub b: f64,
    /// Deepest water the category applies to, meters.
    pub max_depth: f64,
}

impl TvuCoefficients {
    /// IHO order 1a.
    pub const ORDER_1A: TvuCoefficients = TvuCoefficients {
        a: 0.5,
        b: 0.013,
        max_depth: 100.0,
    };

    pub fn allowed(&self, depth: f64) -> f64 {
        (self.a * self.a + (self.b * depth).powi(2)).sqrt()
    }
}

impl Default for TvuCoefficients {
    fn default() -> Self {
        Self::ORDER_1A
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthBoundCheck {
    pub depth: f64,
    pub allowed_tvu: f64,
    pub sigma_ok: bool,
    pub footprint_diameter: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IhoReport {
    pub bounds: Vec<DepthBoundCheck>,
    pub sensor_sigma: f64,
    pub depth_limit_ok: bool,
    pub pass: bool,
}

/// Checks a sampling spec and sensor against a TVU budget at both depth bounds.
pub fn check_iho_category(
    spec: &SamplingSpec,
    depth_range: (f64, f64),
    tvu: &TvuCoefficients,
    sensor_sigma: f64,
) -> Result<IhoReport, PlanError> {
    if !(tvu.a > 0.0 && tvu.b > 0.0) {
        return Err(PlanError::Domain(format!("TVU coefficients must be positive (a={}, b={})", tvu.a, tvu.b)));
    }
    if !(sensor_sigma >= 0.0) {
        return Err(PlanError::Domain(format!("sensor sigma must be non-negative, got {sensor_sigma}")));
    }
    let (lo, hi) = depth_range;
    if !(lo > 0.0 && lo <= hi) {
        return Err(PlanError::Domain(format!("invalid depth range [{lo}, {hi}]")));
    }
    let bounds: Vec<DepthBoundCheck> = [lo, hi]
        .iter()
        .map(|&d| {
            let allowed = tvu.allowed(d);
            DepthBoundCheck {
                depth: d,
                allowed_tvu: allowed,
                sigma_ok: sensor_sigma <= allowed,
                footprint_diameter: spec.footprint_diameter_at(d),
            }
        })
        .collect();
    let depth_limit_ok = hi <= tvu.max_depth;
    let pass = depth_limit_ok && bounds.iter().all(|b| b.sigma_ok);
    Ok(IhoReport {
        bounds,
        sensor_sigma,
        depth_limit_ok,
        pass,
    })
}

/// Path time at cruise speed plus a fixed cost per transect for turning.
pub fn estimate_duration(plan: &MissionPlan, turn_time: f64) -> Result<f64, PlanError> {
    Ok(plan.path_length()? / plan.cruise_speed + plan.transect_count as f64 * turn_time)
}

/// GeoJSON Feature: the waypoint LineString plus the plan parameters.
pub fn to_geojson(plan: &MissionPlan) -> Value {
    let coords: Vec<Value> = plan
        .waypoints
        .iter()
        .map(|w| json!([w.longitude, w.latitude, w.ellipsoidal_height]))
        .collect();
    json!({
        "type": "Feature",
        "geometry": {"type": "LineString", "coordinates": coords},
        "properties": {
            "center": [plan.area.center.longitude, plan.area.center.latitude, plan.area.center.ellipsoidal_height],
            "width": plan.area.width,
            "length": plan.area.length,
            "bearing_of_length_axis": plan.area.bearing_of_length_axis,
            "transect_spacing": plan.transect_spacing,
            "cruise_speed": plan.cruise_speed,
            "sample_rate": plan.sample_rate,
            "transect_count": plan.transect_count,
        }
    })
}

pub fn from_geojson(v: &Value) -> Result<MissionPlan, PlanError> {
    let err = |m: &str| PlanError::GeoJson(m.to_string());
    if v.get("type").and_then(Value::as_str) != Some("Feature") {
        return Err(err("expected a Feature"));
    }
    let geom = v.get("geometry").ok_or_else(|| err("missing geometry"))?;
    if geom.get("type").and_then(Value::as_str) != Some("LineString") {
        return Err(err("geometry must be a LineString"));
    }
    let point = |c: &Value| -> Result<GeoPoint, PlanError> {
        let a = c.as_array().ok_or_else(|| err("coordinate must be an array"))?;
        let n = |i: usize| a.get(i).and_then(Value::as_f64);
        let (lon, lat) = (n(0).ok_or_else(|| err("bad longitude"))?, n(1).ok_or_else(|| err("bad latitude"))?);
        Ok(GeoPoint::new(lat, lon, n(2).unwrap_or(0.0))?)
    };
    let waypoints = geom
        .get("coordinates")
        .and_then(Value::as_array)
        .ok_or_else(|| err("missing coordinates"))?
        .iter()
        .map(point)
        .collect::<Result<Vec<_>, _>>()?;
    let props = v.get("properties").ok_or_else(|| err("missing properties"))?;
    let f = |k: &str| props.get(k).and_then(Value::as_f64).ok_or_else(|| err(&format!("missing property {k}")));
    let area = SurveyArea::new(
        point(props.get("center").ok_or_else(|| err("missing property center"))?)?,
        f("width")?,
        f("length")?,
        f("bearing_of_length_axis")?,
    )?;
    let transect_count = props
        .get("transect_count")
        .and_then(Value::as_u64)
        .ok_or_else(|| err("missing property transect_count"))? as usize;
    if waypoints.len() != 2 * transect_count {
        return Err(err("waypoint count does not match transect_count"));
    }
    Ok(MissionPlan {
        area,
        waypoints,
        transect_spacing: f("transect_spacing")?,
        cruise_speed: f("cruise_speed")?,
        sample_rate: f("sample_rate")?,
        transect_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn europa() -> SurveyArea {
        SurveyArea::new(GeoPoint::new(-22.340984, 40.337634, 0.0).unwrap(), 49.0, 115.0, 0.0).unwrap()
    }

    #[test]
    fn europa_has_24_transects() {
        let plan = plan_lawnmower(&europa(), 2.0, 1.0, 2.0).unwrap();
        assert_eq!(plan.transect_count, 24);
        assert_eq!(plan.waypoints.len(), 48);
        let pts = plan.local_waypoints().unwrap();
        // First transect inset by half a spacing from the west edge.
        assert_abs_diff_eq!(pts[0].east, -23.5, epsilon = 1e-6);
        assert_abs_diff_eq!(pts[0].north, -57.5, epsilon = 1e-6);
        assert_abs_diff_eq!(pts[1].north, 57.5, epsilon = 1e-6);
        assert_abs_diff_eq!(pts[2].east, -21.5, epsilon = 1e-6);
        assert_abs_diff_eq!(pts[2].north, 57.5, epsilon = 1e-6);
    }

    #[test]
    fn degenerate_square() {
        let a = SurveyArea::new(GeoPoint::new(0.0, 0.0, 0.0).unwrap(), 10.0, 10.0, 30.0).unwrap();
        let plan = plan_lawnmower(&a, 10.0, 1.0, 1.0).unwrap();
        assert_eq!(plan.transect_count, 1);
        let pts = plan.local_waypoints().unwrap();
        // A single transect through the centre.
        let mid = pts[0].lerp(pts[1], 0.5);
        assert_abs_diff_eq!(mid.east, 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(mid.north, 0.0, epsilon = 1e-6);
        assert!(plan_lawnmower(&a, 10.5, 1.0, 1.0).is_err());
    }

    #[test]
    fn planning_errors() {
        let a = europa();
        assert!(matches!(plan_lawnmower(&a, 0.0, 1.0, 2.0), Err(PlanError::Spacing { .. })));
        assert!(matches!(plan_lawnmower(&a, 50.0, 1.0, 2.0), Err(PlanError::Spacing { .. })));
        assert!(matches!(plan_lawnmower(&a, 2.0, 2.0, 2.0), Err(PlanError::Speed(_))));
        assert!(plan_lawnmower_with(&a, 2.0, 2.0, 2.0, SpeedLimits::UNBOUNDED).is_ok());
        assert!(matches!(plan_lawnmower(&a, 2.0, 1.0, 0.0), Err(PlanError::Rate(_))));
        assert!(SurveyArea::new(a.center, 2000.0, 1000.0, 0.0).is_err());
    }

    #[test]
    fn wide_area_runs_transects_along_width() {
        // Width is the long side here, so transects follow the width axis (east for bearing 0).
        let a = SurveyArea::new(GeoPoint::new(10.0, 10.0, 0.0).unwrap(), 60.0, 20.0, 0.0).unwrap();
        let plan = plan_lawnmower(&a, 5.0, 1.0, 1.0).unwrap();
        assert_eq!(plan.transect_count, 4);
        let pts = plan.local_waypoints().unwrap();
        assert_abs_diff_eq!(pts[0].north, pts[1].north, epsilon = 1e-6);
        assert_abs_diff_eq!((pts[1].east - pts[0].east).abs(), 60.0, epsilon = 1e-6);
    }

    #[test]
    fn sampling_matches_europa_parameters() {
        let plan = plan_lawnmower(&europa(), 2.0, 1.0, 2.0).unwrap();
        let s = sampling_spec(&plan, 5.0).unwrap();
        assert_abs_diff_eq!(s.along_track_spacing, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(s.cross_track_spacing, 2.0, epsilon = 1e-12);
        // 2·d·tan(2.5°)
        assert_abs_diff_eq!(s.footprint_diameter_at(1.0), 0.087_321_885_817_024_12, epsilon = 1e-12);
        assert_abs_diff_eq!(s.footprint_diameter_at(10.0), 0.873_218_858_170_241_1, epsilon = 1e-12);
        assert_eq!(s.footprint_diameter_at(0.0), 0.0);
        assert_eq!(round_significant(s.footprint_diameter_at(1.0) * 100.0, 1), 9.0);
        assert_eq!(round_significant(s.footprint_diameter_at(10.0) * 100.0, 1), 90.0);
        assert!(sampling_spec(&plan, 90.0).is_err());
    }

    #[test]
    fn iho_checks() {
        let plan = plan_lawnmower(&europa(), 2.0, 1.0, 2.0).unwrap();
        let s = sampling_spec(&plan, 5.0).unwrap();
        let r = check_iho_category(&s, (1.0, 10.0), &TvuCoefficients::ORDER_1A, 0.05).unwrap();
        assert_abs_diff_eq!(r.bounds[1].allowed_tvu, 0.516_623_654_123_579_6, epsilon = 1e-12);
        assert!(r.pass);

        let deep = check_iho_category(&s, (10.0, 120.0), &TvuCoefficients::ORDER_1A, 0.05).unwrap();
        assert!(!deep.depth_limit_ok);
        assert!(!deep.pass);

        let exact = check_iho_category(&s, (0.5, 99.0), &TvuCoefficients::ORDER_1A, 0.0).unwrap();
        assert!(exact.pass);

        let bad = TvuCoefficients { a: 0.0, ..TvuCoefficients::ORDER_1A };
        assert!(check_iho_category(&s, (1.0, 10.0), &bad, 0.05).is_err());
    }

    #[test]
    fn duration_arithmetic() {
        let a = SurveyArea::new(GeoPoint::new(0.0, 0.0, 0.0).unwrap(), 10.0, 100.0, 0.0).unwrap();
        let plan = plan_lawnmower(&a, 10.0, 1.0, 1.0).unwrap();
        assert_abs_diff_eq!(estimate_duration(&plan, 0.0).unwrap(), 100.0, epsilon = 1e-6);

        // 24 × 115 m transects, 23 × 2 m connectors, 24 × 10 s turns.
        let plan = plan_lawnmower(&europa(), 2.0, 1.0, 2.0).unwrap();
        assert_abs_diff_eq!(estimate_duration(&plan, 10.0).unwrap(), 2760.0 + 46.0 + 240.0, epsilon = 1e-3);
    }

    #[test]
    fn geojson_round_trip() {
        let plan = plan_lawnmower(&europa(), 2.0, 1.0, 2.0).unwrap();
        let v = to_geojson(&plan);
        let back = from_geojson(&v).unwrap();
        assert_eq!(back, plan);
        let text = serde_json::to_string(&v).unwrap();
        let reparsed: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(from_geojson(&reparsed).unwrap(), plan);
        assert!(from_geojson(&json!({"type": "Point"})).is_err());
    }
}
