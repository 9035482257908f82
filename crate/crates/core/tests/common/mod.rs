//! Random logs and parser inputs shared by the log tests.
#![allow(dead_code)]

use asvkit::geo::{GeoPoint, LeverArm};
use asvkit::logfmt::{
    AttRecord, BatRecord, DpthRecord, EventRecord, FixType, GpsRecord, LogHeader, LogRecord, ModeRecord, SblRawRecord, SblRecord,
    SurveyLog, Timestamp, MAX_RAW_DEPTH, MAX_VOLTAGE,
};
use chrono::DateTime;
use rand::seq::IndexedRandom;
use rand::Rng;
use serde_json::{Map, Value};

fn text<R: Rng>(rng: &mut R, max: usize) -> String {
    const POOL: &[char] = &['a', 'Z', '0', ' ', '"', '\\', '\n', '\t', '{', ',', 'é', '°', '漢', '\u{1F30A}', '\u{7}'];
    (0..rng.random_range(0..=max)).map(|_| *POOL.choose(rng).unwrap()).collect()
}

fn float<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    // Mix plain draws with values whose decimal form is long.
    let x = rng.random_range(lo..hi);
    let snapped = (x * 8.0).round() / 8.0;
    if rng.random_bool(0.2) && snapped >= lo && snapped < hi {
        snapped
    } else {
        x
    }
}

fn json_value<R: Rng>(rng: &mut R, depth: u32) -> Value {
    match rng.random_range(0..if depth > 2 { 5 } else { 7 }) {
        0 => Value::Null,
        1 => Value::Bool(rng.random()),
        2 => Value::from(rng.random_range(-1_000_000i64..1_000_000)),
        3 => Value::from(float(rng, -1e6, 1e6)),
        4 => Value::String(text(rng, 12)),
        5 => Value::Array((0..rng.random_range(0..4)).map(|_| json_value(rng, depth + 1)).collect()),
        _ => Value::Object((0..rng.random_range(0..4)).map(|i| (format!("k{i}"), json_value(rng, depth + 1))).collect()),
    }
}

fn record<R: Rng>(rng: &mut R, t: Timestamp) -> LogRecord {
    match rng.random_range(0..9) {
        0 => LogRecord::Att(AttRecord {
            t,
            roll: float(rng, -0.6, 0.6),
            pitch: float(rng, -0.6, 0.6),
            yaw: float(rng, -3.2, 3.2),
        }),
        1 => LogRecord::Gps(GpsRecord {
            t,
            lat: float(rng, -90.0, 90.0),
            lon: float(rng, -180.0, 180.0),
            height: float(rng, -100.0, 100.0),
            fix: *[FixType::NoFix, FixType::Fix3d, FixType::RtkFloat, FixType::RtkFixed].choose(rng).unwrap(),
            hdop: float(rng, 0.0, 20.0),
        }),
        2 => LogRecord::Dpth(DpthRecord {
            t,
            raw_depth: float(rng, 0.01, MAX_RAW_DEPTH),
        }),
        3 => LogRecord::Sbl(SblRecord {
            t,
            rel_x: float(rng, -100.0, 100.0),
            rel_y: float(rng, -100.0, 100.0),
            rel_z: float(rng, -100.0, 100.0),
            std: float(rng, 0.0, 10.0),
        }),
        4 => LogRecord::SblRaw(SblRawRecord {
            t,
            toa: [(); 4].map(|_| float(rng, 0.0, 0.1)),
            sound_speed: float(rng, 1400.0, 1600.0),
        }),
        5 => LogRecord::Bat(BatRecord {
            t,
            voltage: float(rng, 0.1, MAX_VOLTAGE - 0.1),
            current: float(rng, -5.0, 50.0),
        }),
        6 => LogRecord::Mode(ModeRecord {
            t,
            mode: ["HOLD", "FOLLOW", "LOST"].choose(rng).unwrap().to_string(),
        }),
        7 => LogRecord::Event(EventRecord {
            t,
            code: text(rng, 8),
            message: text(rng, 40),
        }),
        _ => {
            let tag = format!("X{}", (0..rng.random_range(1..4)).map(|_| rng.random_range(b'A'..=b'Z') as char).collect::<String>());
            let fields: Map<String, Value> = (0..rng.random_range(0..5)).map(|i| (format!("f{i}"), json_value(rng, 0))).collect();
            LogRecord::Other { tag, t, fields }
        }
    }
}

/// A valid log with every record type, random content and non-decreasing time.
pub fn random_log<R: Rng>(rng: &mut R, max_records: usize) -> SurveyLog {
    let origin = GeoPoint::new(float(rng, -89.0, 89.0), float(rng, -179.0, 179.0), float(rng, -50.0, 50.0)).unwrap();
    let started = DateTime::from_timestamp(rng.random_range(0..4_000_000_000), rng.random_range(0..1000) * 1_000_000).unwrap();
    let mut header = LogHeader::new(text(rng, 16), origin, started);
    for i in 0..rng.random_range(0..3) {
        let arm = LeverArm::new(float(rng, -2.0, 2.0), float(rng, -2.0, 2.0), float(rng, -2.0, 2.0)).unwrap();
        header.lever_arms.insert(format!("sensor{i}"), arm);
    }
    let mut log = SurveyLog::new(header);
    let mut ms = 0u64;
    for _ in 0..rng.random_range(0..=max_records) {
        ms += rng.random_range(0..500);
        let r = record(rng, Timestamp::from_millis(ms));
        log.push(r);
    }
    log
}

/// Random bytes, or a valid log damaged by a few byte edits, truncation or
/// line shuffling.
pub fn parser_input<R: Rng>(rng: &mut R) -> Vec<u8> {
    match rng.random_range(0..4) {
        0 => (0..rng.random_range(0..300)).map(|_| rng.random()).collect(),
        1 => {
            let pool = b"{}[]\":,.-+eE0123456789 \ntypeHEADERGPSATTtlatlonnulltruefalse\\u";
            (0..rng.random_range(0..300)).map(|_| *pool.choose(rng).unwrap()).collect()
        }
        _ => {
            let log = random_log(rng, 12);
            let mut bytes = asvkit::logfmt::to_bytes(&log).unwrap();
            for _ in 0..rng.random_range(1..6) {
                if bytes.is_empty() {
                    break;
                }
                let i = rng.random_range(0..bytes.len());
                match rng.random_range(0..4) {
                    0 => bytes[i] = rng.random(),
                    1 => {
                        bytes.remove(i);
                    }
                    2 => bytes.insert(i, *b"{}\":,0-9eE\n".choose(rng).unwrap()),
                    _ => bytes.truncate(i),
                }
            }
            bytes
        }
    }
}
