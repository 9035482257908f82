//! The `.svlog` survey log: newline-delimited JSON, one header line followed by
//! time-ordered records.
//!
//! ```text
//! {"type":"HEADER","schema_version":1,"survey_id":"europa","origin":{...},"lever_arms":{"sounder":[0.2,0.0,0.4]},"started_at":"2020-11-02T06:00:00Z"}
//! {"type":"ATT","t":0.0,"roll":0.01,"pitch":-0.02,"yaw":1.57}
//! {"type":"DPTH","t":0.5,"raw_depth":4.91}
//! ```
//!
//! Timestamps are seconds since survey start with millisecond resolution.
//! Records with an unrecognized `type` are kept verbatim as [`LogRecord::Other`].

use crate::geo::{self, GeoError, GeoPoint, LeverArm, PoseTrack};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, BufRead, Write};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;
pub const FILE_EXTENSION: &str = "svlog";

/// Echo-sounder measurement range, meters.
pub const MAX_RAW_DEPTH: f64 = 50.0;
/// Upper bound accepted for a battery voltage, volts.
pub const MAX_VOLTAGE: f64 = 30.0;

#[derive(Debug, Error)]
pub enum LogError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("validation failed: missing header line")]
    MissingHeader,
    #[error("validation failed: {}", format_issues(.0))]
    Validation(Vec<ValidationIssue>),
}

/// One failed invariant. `line` is 1-based when the log came from a file.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationIssue {
    pub line: Option<usize>,
    pub record: usize,
    pub message: String,
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l} (record {}): {}", self.record, self.message),
            None => write!(f, "record {}: {}", self.record, self.message),
        }
    }
}

fn format_issues(issues: &[ValidationIssue]) -> String {
    let shown: Vec<String> = issues.iter().take(10).map(|i| i.to_string()).collect();
    let mut s = shown.join("; ");
    if issues.len() > 10 {
        s.push_str(&format!("; ... {} more", issues.len() - 10));
    }
    s
}

/// Survey time in whole milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Timestamp(u64);

impl Timestamp {
    pub const ZERO: Timestamp = Timestamp(0);

    pub const fn from_millis(ms: u64) -> Self {
        Self(ms)
    }

    /// Rounds to the nearest millisecond. `None` for negative or non-finite input.
    pub fn from_seconds(s: f64) -> Option<Self> {
        if !s.is_finite() || s < -0.0005 || s > 1e12 {
            return None;
        }
        Some(Self((s * 1000.0).round().max(0.0) as u64))
    }

    pub fn millis(self) -> u64 {
        self.0
    }

    pub fn seconds(self) -> f64 {
        self.0 as f64 / 1000.0
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:03}", self.0 / 1000, self.0 % 1000)
    }
}

impl Serialize for Timestamp {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.seconds())
    }
}

impl<'de> Deserialize<'de> for Timestamp {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = f64::deserialize(d)?;
        Timestamp::from_seconds(s).ok_or_else(|| serde::de::Error::custom(format!("invalid timestamp {s}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FixType {
    #[serde(rename = "NONE")]
    NoFix,
    #[serde(rename = "3D")]
    Fix3d,
    #[serde(rename = "RTK_FLOAT")]
    RtkFloat,
    #[serde(rename = "RTK_FIXED")]
    RtkFixed,
}

/// Roll, pitch and yaw in radians (intrinsic ZYX, yaw clockwise from north).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttRecord {
    pub t: Timestamp,
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpsRecord {
    pub t: Timestamp,
    pub lat: f64,
    pub lon: f64,
    pub height: f64,
    pub fix: FixType,
    pub hdop: f64,
}

impl GpsRecord {
    pub fn position(&self) -> GeoPoint {
        GeoPoint {
            latitude: self.lat,
            longitude: self.lon,
            ellipsoidal_height: self.height,
        }
    }
}

/// Raw echo-sounder range, meters, positive down.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpthRecord {
    pub t: Timestamp,
    pub raw_depth: f64,
}

/// Solved acoustic fix relative to the vehicle (body axes).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SblRecord {
    pub t: Timestamp,
    pub rel_x: f64,
    pub rel_y: f64,
    pub rel_z: f64,
    pub std: f64,
}

/// Raw arrival times from the four receivers, seconds after the ping epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SblRawRecord {
    pub t: Timestamp,
    pub toa: [f64; 4],
    pub sound_speed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatRecord {
    pub t: Timestamp,
    pub voltage: f64,
    pub current: f64,
}

/// Tracker mode transition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeRecord {
    pub t: Timestamp,
    pub mode: String,
}

/// Free-form event: warnings, dropouts, truncation notices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub t: Timestamp,
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LogRecord {
    Att(AttRecord),
    Gps(GpsRecord),
    Dpth(DpthRecord),
    Sbl(SblRecord),
    SblRaw(SblRawRecord),
    Bat(BatRecord),
    Mode(ModeRecord),
    Event(EventRecord),
    /// A record type this version does not interpret, kept as-is.
    Other { tag: String, t: Timestamp, fields: Map<String, Value> },
}

/// Record discriminant, as used by [`extract_channel`].
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum RecordKind {
    Att,
    Gps,
    Dpth,
    Sbl,
    SblRaw,
    Bat,
    Mode,
    Event,
    Other(String),
}

impl RecordKind {
    pub fn tag(&self) -> &str {
        match self {
            RecordKind::Att => "ATT",
            RecordKind::Gps => "GPS",
            RecordKind::Dpth => "DPTH",
            RecordKind::Sbl => "SBL",
            RecordKind::SblRaw => "SBLR",
            RecordKind::Bat => "BAT",
            RecordKind::Mode => "MODE",
            RecordKind::Event => "EVT",
            RecordKind::Other(t) => t,
        }
    }

    pub fn from_tag(tag: &str) -> RecordKind {
        match tag {
            "ATT" => RecordKind::Att,
            "GPS" => RecordKind::Gps,
            "DPTH" => RecordKind::Dpth,
            "SBL" => RecordKind::Sbl,
            "SBLR" => RecordKind::SblRaw,
            "BAT" => RecordKind::Bat,
            "MODE" => RecordKind::Mode,
            "EVT" => RecordKind::Event,
            other => RecordKind::Other(other.to_string()),
        }
    }
}

impl LogRecord {
    pub fn timestamp(&self) -> Timestamp {
        match self {
            LogRecord::Att(r) => r.t,
            LogRecord::Gps(r) => r.t,
            LogRecord::Dpth(r) => r.t,
            LogRecord::Sbl(r) => r.t,
            LogRecord::SblRaw(r) => r.t,
            LogRecord::Bat(r) => r.t,
            LogRecord::Mode(r) => r.t,
            LogRecord::Event(r) => r.t,
            LogRecord::Other { t, .. } => *t,
        }
    }

    pub fn kind(&self) -> RecordKind {
        match self {
            LogRecord::Att(_) => RecordKind::Att,
            LogRecord::Gps(_) => RecordKind::Gps,
            LogRecord::Dpth(_) => RecordKind::Dpth,
            LogRecord::Sbl(_) => RecordKind::Sbl,
            LogRecord::SblRaw(_) => RecordKind::SblRaw,
            LogRecord::Bat(_) => RecordKind::Bat,
            LogRecord::Mode(_) => RecordKind::Mode,
            LogRecord::Event(_) => RecordKind::Event,
            LogRecord::Other { tag, .. } => RecordKind::Other(tag.clone()),
        }
    }

    /// Checks the per-record invariants, returning a description of the first violation.
    pub fn check(&self) -> Result<(), String> {
        let tag = self.kind().tag().to_string();
        let at = self.timestamp();
        let finite = |name: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(format!("{tag} record at t={at}: {name} is not finite"))
            }
        };
        match self {
            LogRecord::Att(r) => {
                finite("roll", r.roll)?;
                finite("pitch", r.pitch)?;
                finite("yaw", r.yaw)?;
            }
            LogRecord::Gps(r) => {
                finite("hdop", r.hdop)?;
                r.position()
                    .validate()
                    .map_err(|e| format!("{tag} record at t={at}: {e}"))?;
                if r.hdop < 0.0 {
                    return Err(format!("{tag} record at t={at}: negative hdop {}", r.hdop));
                }
            }
            LogRecord::Dpth(r) => {
                finite("raw_depth", r.raw_depth)?;
                if !(r.raw_depth > 0.0 && r.raw_depth <= MAX_RAW_DEPTH) {
                    return Err(format!(
                        "{tag} record at t={at}: raw_depth {} outside (0, {MAX_RAW_DEPTH}]",
                        r.raw_depth
                    ));
                }
            }
            LogRecord::Sbl(r) => {
                finite("rel_x", r.rel_x)?;
                finite("rel_y", r.rel_y)?;
                finite("rel_z", r.rel_z)?;
                finite("std", r.std)?;
                if r.std < 0.0 {
                    return Err(format!("{tag} record at t={at}: negative std {}", r.std));
                }
            }
            LogRecord::SblRaw(r) => {
                for v in r.toa {
                    finite("toa", v)?;
                }
                finite("sound_speed", r.sound_speed)?;
            }
            LogRecord::Bat(r) => {
                finite("voltage", r.voltage)?;
                finite("current", r.current)?;
                if !(r.voltage > 0.0 && r.voltage < MAX_VOLTAGE) {
                    return Err(format!(
                        "{tag} record at t={at}: voltage {} outside (0, {MAX_VOLTAGE})",
                        r.voltage
                    ));
                }
            }
            LogRecord::Mode(_) | LogRecord::Event(_) | LogRecord::Other { .. } => {}
        }
        Ok(())
    }

    fn to_json(&self) -> Result<String, serde_json::Error> {
        // Field order: "type", "t", then the remaining fields in declaration order.
        fn tagged<T: Serialize>(tag: &str, body: &T) -> Result<String, serde_json::Error> {
            let inner = serde_json::to_string(body)?;
            // `inner` is a non-empty JSON object; splice the tag in front.
            Ok(format!("{{\"type\":{},{}", serde_json::to_string(tag)?, &inner[1..]))
        }
        match self {
            LogRecord::Att(r) => tagged("ATT", r),
            LogRecord::Gps(r) => tagged("GPS", r),
            LogRecord::Dpth(r) => tagged("DPTH", r),
            LogRecord::Sbl(r) => tagged("SBL", r),
            LogRecord::SblRaw(r) => tagged("SBLR", r),
            LogRecord::Bat(r) => tagged("BAT", r),
            LogRecord::Mode(r) => tagged("MODE", r),
            LogRecord::Event(r) => tagged("EVT", r),
            LogRecord::Other { tag, t, fields } => {
                let mut line = format!("{{\"type\":{},\"t\":{}", serde_json::to_string(tag)?, serde_json::to_string(t)?);
                for (k, v) in fields {
                    line.push(',');
                    line.push_str(&serde_json::to_string(k)?);
                    line.push(':');
                    line.push_str(&serde_json::to_string(v)?);
                }
                line.push('}');
                Ok(line)
            }
        }
    }

    fn from_object(mut obj: Map<String, Value>) -> Result<LogRecord, String> {
        let tag = match obj.remove("type") {
            Some(Value::String(s)) => s,
            Some(_) => return Err("\"type\" must be a string".into()),
            None => return Err("missing \"type\" field".into()),
        };
        fn parse<T: for<'de> Deserialize<'de>>(tag: &str, obj: Map<String, Value>) -> Result<T, String> {
            serde_json::from_value(Value::Object(obj)).map_err(|e| format!("{tag}: {e}"))
        }
        Ok(match tag.as_str() {
            "ATT" => LogRecord::Att(parse(&tag, obj)?),
            "GPS" => LogRecord::Gps(parse(&tag, obj)?),
            "DPTH" => LogRecord::Dpth(parse(&tag, obj)?),
            "SBL" => LogRecord::Sbl(parse(&tag, obj)?),
            "SBLR" => LogRecord::SblRaw(parse(&tag, obj)?),
            "BAT" => LogRecord::Bat(parse(&tag, obj)?),
            "MODE" => LogRecord::Mode(parse(&tag, obj)?),
            "EVT" => LogRecord::Event(parse(&tag, obj)?),
            "HEADER" => return Err("duplicate header".into()),
            _ => {
                let t = match obj.remove("t") {
                    Some(v) => serde_json::from_value::<Timestamp>(v).map_err(|e| format!("{tag}: {e}"))?,
                    None => return Err(format!("{tag}: missing field `t`")),
                };
                LogRecord::Other { tag, t, fields: obj }
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub schema_version: u32,
    pub survey_id: String,
    pub origin: GeoPoint,
    /// Sensor name → offset from the GPS antenna.
    pub lever_arms: BTreeMap<String, LeverArm>,
    pub started_at: DateTime<Utc>,
}

impl LogHeader {
    pub fn new(survey_id: impl Into<String>, origin: GeoPoint, started_at: DateTime<Utc>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            survey_id: survey_id.into(),
            origin,
            lever_arms: BTreeMap::new(),
            started_at,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurveyLog {
    pub header: LogHeader,
    pub records: Vec<LogRecord>,
}

impl SurveyLog {
    /// Antenna track from GPS records with a fix and ATT records, in the
    /// header's local frame.
    pub fn pose_track(&self) -> Result<PoseTrack, GeoError> {
        let mut positions = Vec::new();
        let mut attitudes = Vec::new();
        for r in &self.records {
            match r {
                LogRecord::Gps(g) if g.fix != FixType::NoFix => {
                    positions.push((g.t.seconds(), geo::geo_to_enu(g.position(), self.header.origin)?));
                }
                LogRecord::Att(a) => attitudes.push((a.t.seconds(), geo::Attitude::new(a.roll, a.pitch, a.yaw))),
                _ => {}
            }
        }
        Ok(PoseTrack::new(positions, attitudes))
    }

    pub fn new(header: LogHeader) -> Self {
        Self {
            header,
            records: Vec::new(),
        }
    }

    pub fn push(&mut self, r: LogRecord) {
        self.records.push(r);
    }

    /// Every invariant violation found, in record order.
    pub fn issues(&self) -> Vec<ValidationIssue> {
        let mut issues = Vec::new();
        if let Err(e) = self.header.origin.validate() {
            issues.push(ValidationIssue {
                line: Some(1),
                record: 0,
                message: format!("header origin: {e}"),
            });
        }
        let mut last = Timestamp::ZERO;
        for (i, r) in self.records.iter().enumerate() {
            if let Err(message) = r.check() {
                issues.push(ValidationIssue {
                    line: None,
                    record: i,
                    message,
                });
            }
            let t = r.timestamp();
            if t < last {
                issues.push(ValidationIssue {
                    line: None,
                    record: i,
                    message: format!("{} record at t={t} precedes t={last}", r.kind().tag()),
                });
            } else {
                last = t;
            }
        }
        issues
    }

    pub fn validate(&self) -> Result<(), LogError> {
        let issues = self.issues();
        if issues.is_empty() {
            Ok(())
        } else {
            Err(LogError::Validation(issues))
        }
    }

    /// First and last record timestamps.
    pub fn span(&self) -> Option<(Timestamp, Timestamp)> {
        Some((self.records.first()?.timestamp(), self.records.last()?.timestamp()))
    }
}

/// Serializes `log` to `sink`, returning the number of bytes written.
pub fn write_log<W: Write>(log: &SurveyLog, mut sink: W) -> Result<u64, LogError> {
    log.validate()?;
    let mut line = String::from("{\"type\":\"HEADER\",");
    let body = serde_json::to_string(&log.header).map_err(io::Error::other)?;
    line.push_str(&body[1..]);
    line.push('\n');
    let mut written = line.len() as u64;
    sink.write_all(line.as_bytes())?;
    for r in &log.records {
        let mut line = r.to_json().map_err(io::Error::other)?;
        line.push('\n');
        written += line.len() as u64;
        sink.write_all(line.as_bytes())?;
    }
    sink.flush()?;
    Ok(written)
}

/// Convenience wrapper around [`write_log`].
pub fn to_bytes(log: &SurveyLog) -> Result<Vec<u8>, LogError> {
    let mut buf = Vec::new();
    write_log(log, &mut buf)?;
    Ok(buf)
}

/// Parses a `.svlog` stream and checks its invariants.
pub fn read_log<R: BufRead>(source: R) -> Result<SurveyLog, LogError> {
    let mut header: Option<LogHeader> = None;
    let mut records = Vec::new();
    let mut lines_of = Vec::new();
    let mut line_no = 0usize;
    for chunk in source.split(b'\n') {
        let chunk = chunk?;
        line_no += 1;
        let text = std::str::from_utf8(&chunk).map_err(|e| LogError::Parse {
            line: line_no,
            message: format!("invalid UTF-8: {e}"),
        })?;
        if text.trim().is_empty() {
            continue;
        }
        let perr = |message: String| LogError::Parse { line: line_no, message };
        let value: Value = serde_json::from_str(text).map_err(|e| perr(e.to_string()))?;
        let Value::Object(mut obj) = value else {
            return Err(perr("expected a JSON object".into()));
        };
        if header.is_none() {
            match obj.get("type") {
                Some(Value::String(t)) if t == "HEADER" => {
                    obj.remove("type");
                    let h: LogHeader = serde_json::from_value(Value::Object(obj)).map_err(|e| perr(format!("HEADER: {e}")))?;
                    header = Some(h);
                    continue;
                }
                _ => return Err(LogError::MissingHeader),
            }
        }
        let record = LogRecord::from_object(obj).map_err(perr)?;
        records.push(record);
        lines_of.push(line_no);
    }
    let header = header.ok_or(LogError::MissingHeader)?;
    let log = SurveyLog { header, records };
    let mut issues = log.issues();
    for issue in &mut issues {
        if issue.line.is_none() {
            issue.line = lines_of.get(issue.record).copied();
        }
    }
    if issues.is_empty() {
        Ok(log)
    } else {
        Err(LogError::Validation(issues))
    }
}

/// Parses a log held in memory.
pub fn from_bytes(bytes: &[u8]) -> Result<SurveyLog, LogError> {
    read_log(bytes)
}

/// Records of one kind with timestamps in `[t0, t1]` seconds, in log order.
/// An inverted window yields nothing.
pub fn extract_channel<'a>(log: &'a SurveyLog, kind: &RecordKind, t0: f64, t1: f64) -> Vec<&'a LogRecord> {
    if t0 > t1 {
        return Vec::new();
    }
    log.records
        .iter()
        .filter(|r| {
            let t = r.timestamp().seconds();
            t >= t0 && t <= t1 && r.kind() == *kind
        })
        .collect()
}
