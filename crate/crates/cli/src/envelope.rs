use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sitesel::Error;

use crate::input::InputInfo;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tool {
    pub name: String,
    pub version: String,
}

impl Default for Tool {
    fn default() -> Self {
        Tool {
            name: env!("CARGO_BIN_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

/// Wall-clock figures; the only part of an envelope that varies between
/// identical invocations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Timing {
    pub wall_time_ms: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub phases_ms: BTreeMap<String, f64>,
}

/// Machine-readable result of one invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub schema_version: u32,
    pub tool: Tool,
    pub command: String,
    /// Echo of the parsed flags.
    pub parameters: Value,
    pub input: Option<InputInfo>,
    pub result: Value,
    pub timing: Timing,
}

impl Envelope {
    pub fn new(command: &str, parameters: Value, input: Option<InputInfo>, result: Value) -> Self {
        Envelope {
            schema_version: SCHEMA_VERSION,
            tool: Tool::default(),
            command: command.to_string(),
            parameters,
            input,
            result,
            timing: Timing::default(),
        }
    }

    pub fn to_pretty(&self) -> Result<String, Error> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| Error::Internal(format!("json: {e}")))?;
        s.push('\n');
        Ok(s)
    }

    /// Writes to `out`, or stdout when `None`.
    pub fn emit(&self, out: Option<&Path>) -> Result<(), Error> {
        let text = self.to_pretty()?;
        match out {
            Some(path) => std::fs::write(path, text)
                .map_err(|e| Error::Input(format!("cannot write {}: {e}", path.display()))),
            None => std::io::stdout()
                .lock()
                .write_all(text.as_bytes())
                .map_err(|e| Error::Internal(format!("stdout: {e}"))),
        }
    }
}
