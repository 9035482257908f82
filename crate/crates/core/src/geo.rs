//! Geodetic and local-frame geometry.
//!
//! All solvers work in an East-North-Up tangent plane anchored at a per-survey
//! origin. Conversions go through ECEF with the WGS84 ellipsoid, which keeps
//! round-trip error at the micrometre level for survey-scale baselines.
//!
//! Body axes follow the aerospace convention (forward, starboard, down) and
//! attitude is applied as intrinsic yaw, then pitch, then roll (Z-Y-X). With a
//! zero attitude the body axes map onto (north, east, down).

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};
use thiserror::Error;

/// WGS84 semi-major axis, meters.
pub const WGS84_A: f64 = 6_378_137.0;
/// WGS84 flattening.
pub const WGS84_F: f64 = 1.0 / 298.257_223_563;
/// First eccentricity squared.
pub const WGS84_E2: f64 = WGS84_F * (2.0 - WGS84_F);

/// Largest local-frame offset accepted by the tangent-plane conversions.
pub const MAX_LOCAL_DISTANCE: f64 = 50_000.0;

/// Upper bound on a lever-arm magnitude.
pub const MAX_LEVER_ARM: f64 = 5.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoError {
    #[error("latitude {0} outside [-90, 90]")]
    Latitude(f64),
    #[error("longitude {0} outside [-180, 180]")]
    Longitude(f64),
    #[error("non-finite coordinate")]
    NonFinite,
    #[error("point is {0:.1} m from the local origin (limit {MAX_LOCAL_DISTANCE} m)")]
    TooFar(f64),
    #[error("lever arm magnitude {0:.3} m exceeds {MAX_LEVER_ARM} m")]
    LeverArm(f64),
}

/// A WGS84 geodetic position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    /// Degrees, positive north.
    pub latitude: f64,
    /// Degrees, positive east.
    pub longitude: f64,
    /// Meters above the ellipsoid.
    pub ellipsoidal_height: f64,
}

impl GeoPoint {
    pub fn new(latitude: f64, longitude: f64, ellipsoidal_height: f64) -> Result<Self, GeoError> {
        let p = Self {
            latitude,
            longitude,
            ellipsoidal_height,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), GeoError> {
        if !(self.latitude.is_finite() && self.longitude.is_finite() && self.ellipsoidal_height.is_finite()) {
            return Err(GeoError::NonFinite);
        }
        if !(-90.0..=90.0).contains(&self.latitude) {
            return Err(GeoError::Latitude(self.latitude));
        }
        if !(-180.0..=180.0).contains(&self.longitude) {
            return Err(GeoError::Longitude(self.longitude));
        }
        Ok(())
    }

    fn to_ecef(self) -> Vector3<f64> {
        let lat = self.latitude.to_radians();
        let lon = self.longitude.to_radians();
        let (slat, clat) = lat.sin_cos();
        let (slon, clon) = lon.sin_cos();
        let n = WGS84_A / (1.0 - WGS84_E2 * slat * slat).sqrt();
        let h = self.ellipsoidal_height;
        Vector3::new(
            (n + h) * clat * clon,
            (n + h) * clat * slon,
            (n * (1.0 - WGS84_E2) + h) * slat,
        )
    }

    fn from_ecef(ecef: Vector3<f64>) -> Self {
        let (x, y, z) = (ecef.x, ecef.y, ecef.z);
        let lon = y.atan2(x);
        let p = x.hypot(y);
        // Fixed-point iteration on latitude; converges to sub-micrometre in a
        // handful of steps anywhere near the surface.
        let mut lat = z.atan2(p * (1.0 - WGS84_E2));
        let mut h = 0.0;
        for _ in 0..10 {
            let slat = lat.sin();
            let n = WGS84_A / (1.0 - WGS84_E2 * slat * slat).sqrt();
            h = if lat.cos().abs() > 1e-10 {
                p / lat.cos() - n
            } else {
                z.abs() - n * (1.0 - WGS84_E2)
            };
            let next = z.atan2(p * (1.0 - WGS84_E2 * n / (n + h)));
            let done = (next - lat).abs() < 1e-15;
            lat = next;
            if done {
                break;
            }
        }
        Self {
            latitude: lat.to_degrees(),
            longitude: lon.to_degrees(),
            ellipsoidal_height: h,
        }
    }

    /// Rotation taking ECEF deltas into (east, north, up).
    fn enu_rotation(self) -> Matrix3<f64> {
        let (slat, clat) = self.latitude.to_radians().sin_cos();
        let (slon, clon) = self.longitude.to_radians().sin_cos();
        Matrix3::new(
            -slon, clon, 0.0, //
            -slat * clon, -slat * slon, clat, //
            clat * clon, clat * slon, slat,
        )
    }
}

/// Local tangent-plane coordinates relative to a survey origin.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnuPoint {
    pub east: f64,
    pub north: f64,
    pub up: f64,
}

impl EnuPoint {
    pub const ORIGIN: EnuPoint = EnuPoint {
        east: 0.0,
        north: 0.0,
        up: 0.0,
    };

    pub const fn new(east: f64, north: f64, up: f64) -> Self {
        Self { east, north, up }
    }

    pub fn from_vector(v: Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.east, self.north, self.up)
    }

    pub fn norm(self) -> f64 {
        self.to_vector().norm()
    }

    pub fn horizontal_distance(self, other: EnuPoint) -> f64 {
        (self.east - other.east).hypot(self.north - other.north)
    }

    pub fn distance(self, other: EnuPoint) -> f64 {
        (self.to_vector() - other.to_vector()).norm()
    }

    pub fn is_finite(self) -> bool {
        self.east.is_finite() && self.north.is_finite() && self.up.is_finite()
    }

    /// Linear interpolation, `frac` = 0 gives `self`.
    pub fn lerp(self, other: EnuPoint, frac: f64) -> EnuPoint {
        EnuPoint::from_vector(self.to_vector() + (other.to_vector() - self.to_vector()) * frac)
    }
}

impl std::ops::Add<Vector3<f64>> for EnuPoint {
    type Output = EnuPoint;

    fn add(self, rhs: Vector3<f64>) -> EnuPoint {
        EnuPoint::from_vector(self.to_vector() + rhs)
    }
}

/// Vehicle attitude in radians. Yaw is the heading, clockwise from true north.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Attitude {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

/// Wraps an angle into (-π, π].
pub fn wrap_pi(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    if w > PI {
        w - TAU
    } else {
        w
    }
}

/// Wraps an angle into [0, 2π).
pub fn wrap_two_pi(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

impl Attitude {
    /// Builds a normalized attitude.
    pub fn new(roll: f64, pitch: f64, yaw: f64) -> Self {
        Self {
            roll: wrap_pi(roll),
            pitch: wrap_pi(pitch),
            yaw: wrap_two_pi(yaw),
        }
    }

    pub fn level(yaw: f64) -> Self {
        Self::new(0.0, 0.0, yaw)
    }

    /// Direction cosine matrix from body (forward, starboard, down) to
    /// (north, east, down).
    pub fn body_to_ned(&self) -> Matrix3<f64> {
        let (sr, cr) = self.roll.sin_cos();
        let (sp, cp) = self.pitch.sin_cos();
        let (sy, cy) = self.yaw.sin_cos();
        let rz = Matrix3::new(cy, -sy, 0.0, sy, cy, 0.0, 0.0, 0.0, 1.0);
        let ry = Matrix3::new(cp, 0.0, sp, 0.0, 1.0, 0.0, -sp, 0.0, cp);
        let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, cr, -sr, 0.0, sr, cr);
        rz * ry * rx
    }

    /// Direction cosine matrix from body axes to ENU.
    pub fn body_to_enu(&self) -> Matrix3<f64> {
        NED_TO_ENU * self.body_to_ned()
    }
}

const NED_TO_ENU: Matrix3<f64> = Matrix3::new(
    0.0, 1.0, 0.0, //
    1.0, 0.0, 0.0, //
    0.0, 0.0, -1.0,
);

/// A timestamped vehicle state.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    /// Seconds since survey start.
    pub timestamp: f64,
    pub position: EnuPoint,
    pub attitude: Attitude,
}

impl Pose {
    pub fn new(timestamp: f64, position: EnuPoint, attitude: Attitude) -> Self {
        Self {
            timestamp,
            position,
            attitude,
        }
    }
}

/// Body-frame offset of a sensor from the GPS antenna (forward, starboard, down).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LeverArm {
    pub offset: Vector3<f64>,
}

impl LeverArm {
    pub const ZERO: LeverArm = LeverArm {
        offset: Vector3::new(0.0, 0.0, 0.0),
    };

    pub fn new(forward: f64, starboard: f64, down: f64) -> Result<Self, GeoError> {
        let offset = Vector3::new(forward, starboard, down);
        if !offset.iter().all(|c| c.is_finite()) {
            return Err(GeoError::NonFinite);
        }
        let m = offset.norm();
        if m >= MAX_LEVER_ARM {
            return Err(GeoError::LeverArm(m));
        }
        Ok(Self { offset })
    }
}

impl Serialize for LeverArm {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        [self.offset.x, self.offset.y, self.offset.z].serialize(s)
    }
}

impl<'de> Deserialize<'de> for LeverArm {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let [f, s, dn] = <[f64; 3]>::deserialize(d)?;
        LeverArm::new(f, s, dn).map_err(serde::de::Error::custom)
    }
}

/// Converts a geodetic point to the tangent plane at `origin`.
pub fn geo_to_enu(p: GeoPoint, origin: GeoPoint) -> Result<EnuPoint, GeoError> {
    p.validate()?;
    origin.validate()?;
    let delta = p.to_ecef() - origin.to_ecef();
    let d = delta.norm();
    if d > MAX_LOCAL_DISTANCE {
        return Err(GeoError::TooFar(d));
    }
    Ok(EnuPoint::from_vector(origin.enu_rotation() * delta))
}

/// Inverse of [`geo_to_enu`].
pub fn enu_to_geo(p: EnuPoint, origin: GeoPoint) -> Result<GeoPoint, GeoError> {
    origin.validate()?;
    if !p.is_finite() {
        return Err(GeoError::NonFinite);
    }
    let d = p.norm();
    if d > MAX_LOCAL_DISTANCE {
        return Err(GeoError::TooFar(d));
    }
    let ecef = origin.to_ecef() + origin.enu_rotation().transpose() * p.to_vector();
    Ok(GeoPoint::from_ecef(ecef))
}

/// Rotates a body-frame vector into ENU.
pub fn rotate_body_to_enu(v: Vector3<f64>, a: &Attitude) -> Vector3<f64> {
    a.body_to_enu() * v
}

/// Rotates an ENU vector into the body frame.
pub fn rotate_enu_to_body(v: Vector3<f64>, a: &Attitude) -> Vector3<f64> {
    a.body_to_enu().transpose() * v
}

/// ENU position of a sensor mounted `arm` away from the antenna.
pub fn apply_lever_arm(antenna: &Pose, arm: &LeverArm) -> EnuPoint {
    antenna.position + rotate_body_to_enu(arm.offset, &antenna.attitude)
}

/// Initial bearing from `a` to `b` in the local frame, radians clockwise from north.
pub fn bearing(a: EnuPoint, b: EnuPoint) -> f64 {
    wrap_two_pi((b.east - a.east).atan2(b.north - a.north))
}

/// Time-interpolated antenna positions and attitudes.
///
/// Positions interpolate linearly, attitudes per angle with yaw taken the
/// short way round. Queries outside the span of either stream return `None`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PoseTrack {
    positions: Vec<(f64, EnuPoint)>,
    attitudes: Vec<(f64, Attitude)>,
}

/// Index `i` with `samples[i].0 <= t <= samples[i + 1].0`, and the weight of
/// the later sample.
fn bracket<T>(samples: &[(f64, T)], t: f64) -> Option<(usize, f64)> {
    let n = samples.len();
    if n == 0 || !(t >= samples[0].0 && t <= samples[n - 1].0) {
        return None;
    }
    if n == 1 {
        return Some((0, 0.0));
    }
    let i = samples.partition_point(|s| s.0 <= t).saturating_sub(1).min(n - 2);
    let (t0, t1) = (samples[i].0, samples[i + 1].0);
    let f = if t1 > t0 { (t - t0) / (t1 - t0) } else { 0.0 };
    Some((i, f))
}

impl PoseTrack {
    /// Both streams are sorted by time.
    pub fn new(mut positions: Vec<(f64, EnuPoint)>, mut attitudes: Vec<(f64, Attitude)>) -> Self {
        positions.sort_by(|a, b| a.0.total_cmp(&b.0));
        attitudes.sort_by(|a, b| a.0.total_cmp(&b.0));
        Self { positions, attitudes }
    }

    /// Time span covered by both streams.
    pub fn span(&self) -> Option<(f64, f64)> {
        let (p0, p1) = (self.positions.first()?.0, self.positions.last()?.0);
        let (a0, a1) = (self.attitudes.first()?.0, self.attitudes.last()?.0);
        let (t0, t1) = (p0.max(a0), p1.min(a1));
        (t0 <= t1).then_some((t0, t1))
    }

    /// Interpolated position and the time between the bracketing fixes.
    pub fn position_at(&self, t: f64) -> Option<(EnuPoint, f64)> {
        let (i, f) = bracket(&self.positions, t)?;
        match self.positions.get(i + 1) {
            Some(&(t1, p1)) => {
                let (t0, p0) = self.positions[i];
                Some((p0.lerp(p1, f), t1 - t0))
            }
            None => Some((self.positions[i].1, 0.0)),
        }
    }

    pub fn attitude_at(&self, t: f64) -> Option<Attitude> {
        let (i, f) = bracket(&self.attitudes, t)?;
        let a = self.attitudes[i].1;
        let Some(&(_, b)) = self.attitudes.get(i + 1) else {
            return Some(a);
        };
        Some(Attitude::new(
            a.roll + wrap_pi(b.roll - a.roll) * f,
            a.pitch + wrap_pi(b.pitch - a.pitch) * f,
            a.yaw + wrap_pi(b.yaw - a.yaw) * f,
        ))
    }

    pub fn pose_at(&self, t: f64) -> Option<Pose> {
        Some(Pose::new(t, self.position_at(t)?.0, self.attitude_at(t)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn equator() -> GeoPoint {
        GeoPoint::new(0.0, 0.0, 0.0).unwrap()
    }

    // Meridian arc length a(1-e²)∫(1-e² sin²φ)^-3/2 dφ over one arcsecond from
    // the equator, evaluated by adaptive quadrature at 30 digits.
    const ONE_ARCSEC_NORTH_AT_EQUATOR: f64 = 30.715_076_617_111_96;

    #[test]
    fn origin_maps_to_zero() {
        let o = GeoPoint::new(-22.340984, 40.337634, 12.0).unwrap();
        let e = geo_to_enu(o, o).unwrap();
        assert_abs_diff_eq!(e.norm(), 0.0, epsilon = 1e-9);
        let back = enu_to_geo(EnuPoint::ORIGIN, o).unwrap();
        assert_abs_diff_eq!(back.latitude, o.latitude, epsilon = 1e-12);
        assert_abs_diff_eq!(back.longitude, o.longitude, epsilon = 1e-12);
        assert_abs_diff_eq!(back.ellipsoidal_height, o.ellipsoidal_height, epsilon = 1e-6);
    }

    #[test]
    fn one_arcsecond_north_matches_meridian_arc() {
        let p = GeoPoint::new(1.0 / 3600.0, 0.0, 0.0).unwrap();
        let e = geo_to_enu(p, equator()).unwrap();
        // The chord is shorter than the arc by ~1e-11 m; both well inside 1 mm.
        assert_abs_diff_eq!(e.north, ONE_ARCSEC_NORTH_AT_EQUATOR, epsilon = 1e-4);
        assert_abs_diff_eq!(e.east, 0.0, epsilon = 1e-9);

        let g = enu_to_geo(EnuPoint::new(0.0, ONE_ARCSEC_NORTH_AT_EQUATOR, 0.0), equator()).unwrap();
        assert_abs_diff_eq!(g.latitude * 3600.0, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn europa_rectangle_round_trips() {
        let center = GeoPoint::new(-22.340984, 40.337634, 0.0).unwrap();
        let corners = [(-24.5, -57.5), (24.5, -57.5), (24.5, 57.5), (-24.5, 57.5)];
        let geo: Vec<GeoPoint> = corners
            .iter()
            .map(|&(e, n)| enu_to_geo(EnuPoint::new(e, n, 0.0), center).unwrap())
            .collect();
        let local: Vec<EnuPoint> = geo.iter().map(|g| geo_to_enu(*g, center).unwrap()).collect();
        assert_abs_diff_eq!(local[0].horizontal_distance(local[1]), 49.0, epsilon = 1e-3);
        assert_abs_diff_eq!(local[1].horizontal_distance(local[2]), 115.0, epsilon = 1e-3);
    }

    #[test]
    fn rejects_bad_coordinates() {
        assert!(matches!(GeoPoint::new(91.0, 0.0, 0.0), Err(GeoError::Latitude(_))));
        assert!(matches!(GeoPoint::new(0.0, -180.5, 0.0), Err(GeoError::Longitude(_))));
        let bad = GeoPoint {
            latitude: 100.0,
            longitude: 0.0,
            ellipsoidal_height: 0.0,
        };
        assert!(geo_to_enu(bad, equator()).is_err());
        assert!(matches!(
            enu_to_geo(EnuPoint::new(60_000.0, 0.0, 0.0), equator()),
            Err(GeoError::TooFar(_))
        ));
    }

    #[test]
    fn zero_attitude_relabels_axes() {
        let v = Vector3::new(1.0, 2.0, 3.0);
        let r = rotate_body_to_enu(v, &Attitude::default());
        assert_eq!(r, Vector3::new(2.0, 1.0, -3.0));
    }

    #[test]
    fn roll_tilts_down_axis() {
        // Rotation-matrix oracle: Rx(φ)·(0,0,1) = (0, -sin φ, cos φ) in NED.
        let a = Attitude::new(10f64.to_radians(), 0.0, 0.0);
        let r = rotate_body_to_enu(Vector3::new(0.0, 0.0, 1.0), &a);
        assert_abs_diff_eq!(r.x.hypot(r.y), 10f64.to_radians().sin(), epsilon = 1e-12);
        assert_abs_diff_eq!(r.x, -(10f64.to_radians().sin()), epsilon = 1e-12);
        assert_abs_diff_eq!(r.z, -(10f64.to_radians().cos()), epsilon = 1e-12);
    }

    #[test]
    fn yaw_is_clockwise_from_north() {
        let a = Attitude::level(90f64.to_radians());
        let r = rotate_body_to_enu(Vector3::new(1.0, 0.0, 0.0), &a);
        assert_abs_diff_eq!(r.x, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.y, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn lever_arm_examples() {
        let pose = Pose::new(0.0, EnuPoint::new(3.0, 4.0, 0.3), Attitude::default());
        assert_eq!(apply_lever_arm(&pose, &LeverArm::ZERO), pose.position);

        let arm = LeverArm::new(1.0, 0.0, 0.5).unwrap();
        let s = apply_lever_arm(&pose, &arm);
        assert_abs_diff_eq!(s.north, 5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.east, 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.up, -0.2, epsilon = 1e-12);

        let pitched = Pose::new(0.0, EnuPoint::ORIGIN, Attitude::new(0.0, 10f64.to_radians(), 0.0));
        let s = apply_lever_arm(&pitched, &LeverArm::new(0.0, 0.0, 0.5).unwrap());
        let horiz = s.east.hypot(s.north);
        assert_abs_diff_eq!(horiz, 0.5 * 10f64.to_radians().sin(), epsilon = 1e-12);
        assert!((horiz - 0.087).abs() < 5e-4);
    }

    #[test]
    fn lever_arm_bound() {
        assert!(LeverArm::new(4.0, 3.0, 0.1).is_err());
        assert!(LeverArm::new(1.0, 1.0, 1.0).is_ok());
    }

    #[test]
    fn attitude_normalization() {
        let a = Attitude::new(PI + 0.1, -PI, -0.5);
        assert!(a.roll > -PI && a.roll <= PI);
        assert_abs_diff_eq!(a.pitch, PI, epsilon = 1e-12);
        assert!(a.yaw >= 0.0 && a.yaw < TAU);
    }

    #[test]
    fn pose_track_interpolates_inside_its_span() {
        let track = PoseTrack::new(
            vec![(1.0, EnuPoint::new(0.0, 0.0, 0.3)), (0.0, EnuPoint::ORIGIN), (2.0, EnuPoint::new(4.0, 2.0, 0.3))],
            vec![(0.0, Attitude::new(0.0, 0.0, 6.2)), (2.0, Attitude::new(0.2, -0.2, 0.2))],
        );
        assert_eq!(track.span(), Some((0.0, 2.0)));
        let (p, gap) = track.position_at(1.5).unwrap();
        assert_eq!(p, EnuPoint::new(2.0, 1.0, 0.3));
        assert_eq!(gap, 1.0);
        let a = track.attitude_at(1.0).unwrap();
        assert!((a.roll - 0.1).abs() < 1e-12 && (a.pitch + 0.1).abs() < 1e-12);
        // 6.2 rad to 0.2 rad crosses north.
        assert!(wrap_pi(a.yaw - (6.2 + (0.2 + TAU - 6.2) / 2.0)).abs() < 1e-12);
        assert!(track.pose_at(2.5).is_none());
        assert!(track.pose_at(-0.1).is_none());
        assert!(PoseTrack::default().span().is_none());
    }
}
