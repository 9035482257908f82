//! Config file overlay.
//!
//! The file is TOML with an optional top-level `seed` and one table per
//! subcommand, keyed like the long flags with underscores:
//!
//! ```toml
//! seed = 7
//!
//! [plan]
//! center = "-22.36,40.37"
//! width = 49.0
//!
//! [simulate.vehicle]
//! cruise_speed = 0.8
//! ```

use anyhow::{bail, Context};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};
use std::path::Path;

#[derive(Debug, Default)]
pub struct ConfigFile {
    root: Map<String, Value>,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let table: toml::Table = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        match serde_json::to_value(table)? {
            Value::Object(root) => Ok(Self { root }),
            _ => bail!("{} is not a table", path.display()),
        }
    }

    pub fn seed(&self) -> Option<u64> {
        self.root.get("seed").and_then(Value::as_u64)
    }

    /// Flags given on the command line replace the values of the
    /// subcommand's table.
    pub fn merge<T: Serialize + DeserializeOwned>(&self, section: &str, args: T) -> anyhow::Result<T> {
        let Some(base) = self.root.get(section) else { return Ok(args) };
        let mut merged = base.clone();
        overlay(&mut merged, serde_json::to_value(args)?);
        serde_json::from_value(merged).with_context(|| format!("config table [{section}]"))
    }
}

fn overlay(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                if v.is_null() {
                    continue;
                }
                match b.get_mut(&k) {
                    Some(slot) => overlay(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) if !v.is_null() => *slot = v,
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, Serialize, Deserialize, PartialEq)]
    struct Args {
        a: Option<f64>,
        b: Option<String>,
        nested: Option<Nested>,
    }

    #[derive(Debug, Serialize, Deserialize, PartialEq)]
    struct Nested {
        x: Option<u32>,
        y: Option<u32>,
    }

    #[test]
    fn flags_override_file_values() {
        let file = ConfigFile {
            root: serde_json::from_str(r#"{"seed": 9, "cmd": {"a": 1.0, "b": "file", "nested": {"x": 1, "y": 2}}}"#).unwrap(),
        };
        let args = Args {
            a: None,
            b: Some("flag".into()),
            nested: Some(Nested { x: None, y: Some(5) }),
        };
        let merged = file.merge("cmd", args).unwrap();
        assert_eq!(merged.a, Some(1.0));
        assert_eq!(merged.b.as_deref(), Some("flag"));
        assert_eq!(merged.nested, Some(Nested { x: Some(1), y: Some(5) }));
        assert_eq!(file.seed(), Some(9));
    }

    #[test]
    fn missing_table_keeps_flags() {
        let args = Args { a: Some(2.0), b: None, nested: None };
        let merged = ConfigFile::default().merge("cmd", args).unwrap();
        assert_eq!(merged.a, Some(2.0));
    }
}
