//! Config files overlaid with command-line flags.
//!
//! A flag `--foo-bar` sets the key `foo_bar`, inside the section its command
//! documents; keys are written as dotted paths such as `train.lr`.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::failure::{CliResult, Failure};

#[derive(Clone, Debug, Default)]
pub struct Layered {
    value: Map<String, Value>,
}

impl Layered {
    pub fn load(file: Option<&Path>) -> CliResult<Self> {
        let Some(path) = file else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::usage(format!("cannot read config {}: {e}", path.display())))?;
        match serde_json::from_str(&text) {
            Ok(Value::Object(value)) => Ok(Self { value }),
            Ok(_) => Err(Failure::usage(format!("config {} must be a JSON object", path.display()))),
            Err(e) => Err(Failure::usage(format!("config {} is not valid JSON: {e}", path.display()))),
        }
    }

    /// Overrides `key` when the flag was given.
    pub fn set<T: Serialize>(&mut self, key: &str, flag: Option<T>) -> &mut Self {
        if let Some(v) = flag {
            let v = serde_json::to_value(v).expect("flag values serialize");
            let mut parts: Vec<&str> = key.split('.').collect();
            let last = parts.pop().expect("non-empty key");
            let mut node = &mut self.value;
            for p in parts {
                let entry = node.entry(p.to_string()).or_insert_with(|| Value::Object(Map::new()));
                if !entry.is_object() {
                    *entry = Value::Object(Map::new());
                }
                node = entry.as_object_mut().expect("just made an object");
            }
            node.insert(last.to_string(), v);
        }
        self
    }

    pub fn resolve<T: DeserializeOwned>(&self) -> CliResult<T> {
        serde_json::from_value(Value::Object(self.value.clone())).map_err(|e| Failure::usage(format!("invalid configuration: {e}")))
    }
}
