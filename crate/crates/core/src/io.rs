//! File formats, builtin names and run reports.
//!
//! Channels and Q-graphs are addressed either by a JSON file path or by a
//! builtin name: `builtin:trapdoor:0.5`, `builtin:dec:0.3`,
//! `builtin:bec_no11:0.5`, `builtin:bec2`, `builtin:bec3`, `builtin:dec3`,
//! `builtin:trivial:<ny>`.

use std::path::Path;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bound::ChannelFamily;
use crate::channel::{ChannelSpec, UnifilarChannel};
use crate::error::{Error, Result};
use crate::qgraph::{QGraph, QGraphSpec};

const BUILTIN: &str = "builtin:";

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Loads a channel from a builtin name or a JSON file.
pub fn load_channel(arg: &str) -> Result<UnifilarChannel> {
    match arg.strip_prefix(BUILTIN) {
        Some(rest) => {
            let (family, param) = rest
                .split_once(':')
                .ok_or_else(|| Error::Io(format!("builtin channel {arg:?} needs a parameter, e.g. builtin:dec:0.5")))?;
            let family: ChannelFamily = family.parse()?;
            let param: f64 = param
                .parse()
                .map_err(|_| Error::Io(format!("builtin channel parameter {param:?} is not a number")))?;
            family.channel(param)
        }
        None => UnifilarChannel::from_spec(&read_json::<ChannelSpec>(arg)?),
    }
}

/// Loads a Q-graph from a builtin name or a JSON file.
pub fn load_qgraph(arg: &str) -> Result<QGraph> {
    match arg.strip_prefix(BUILTIN) {
        Some("bec2") => Ok(QGraph::bec2()),
        Some("bec3") => Ok(QGraph::bec3()),
        Some("dec3") => Ok(QGraph::dec3()),
        Some(rest) => match rest.strip_prefix("trivial:").map(str::parse::<usize>) {
            Some(Ok(ny)) if ny > 0 => Ok(QGraph::trivial(ny)),
            _ => Err(Error::Io(format!(
                "unknown builtin Q-graph {arg:?} (bec2, bec3, dec3, trivial:<ny>)"
            ))),
        },
        None => QGraph::from_spec(&read_json::<QGraphSpec>(arg)?),
    }
}

/// Kind of every reported number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    UpperBound,
    CertifiedLower,
    DpEstimate,
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quantity {
    pub name: String,
    pub kind: Kind,
    pub value: f64,
}

impl Quantity {
    pub fn new(name: impl Into<String>, kind: Kind, value: f64) -> Self {
        Self {
            name: name.into(),
            kind,
            value,
        }
    }
}

/// Summary written by every CLI command.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    /// SHA-256 over the canonical JSON of the loaded inputs, so a builtin
    /// and its serialized file give the same digest.
    pub inputs_digest: String,
    pub results: Vec<Quantity>,
    /// Command-specific diagnostics.
    #[serde(default)]
    pub details: serde_json::Value,
    pub wall_time_s: f64,
    pub version: String,
}

impl RunReport {
    pub fn new(command: &str, inputs_digest: String) -> Self {
        Self {
            command: command.to_string(),
            inputs_digest,
            results: Vec::new(),
            details: serde_json::Value::Null,
            wall_time_s: 0.0,
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, kind: Kind, value: f64) {
        self.results.push(Quantity::new(name, kind, value));
    }

    pub fn finish(mut self, elapsed: Duration) -> Self {
        self.wall_time_s = elapsed.as_secs_f64();
        self
    }
}

/// Incremental digest over serializable inputs.
#[derive(Default)]
pub struct InputDigest(Sha256);

impl InputDigest {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add<T: Serialize>(mut self, label: &str, value: &T) -> Self {
        let json = serde_json::to_vec(value).expect("inputs serialize");
        self.0.update(label.as_bytes());
        self.0.update((json.len() as u64).to_le_bytes());
        self.0.update(&json);
        self
    }

    pub fn hex(self) -> String {
        self.0.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_names() {
        assert_eq!(load_channel("builtin:trapdoor:0.5").unwrap().ns(), 2);
        assert_eq!(load_channel("builtin:dec:0.3").unwrap().ny(), 4);
        assert_eq!(load_channel("builtin:bec:0.3").unwrap().ny(), 3);
        assert_eq!(load_qgraph("builtin:dec3").unwrap().nq(), 3);
        assert_eq!(load_qgraph("builtin:trivial:4").unwrap().ny(), 4);
        assert!(load_channel("builtin:dec").is_err());
        assert!(load_channel("builtin:dec:x").is_err());
        assert!(load_channel("builtin:dec:1.5").is_err());
        assert!(load_qgraph("builtin:nope").is_err());
        assert!(matches!(load_channel("/nonexistent/c.json"), Err(Error::Io(_))));
    }

    #[test]
    fn digest_is_content_based() {
        let a = InputDigest::new().add("channel", &UnifilarChannel::dec(0.5).unwrap().to_spec()).hex();
        let b = InputDigest::new().add("channel", &UnifilarChannel::dec(0.5).unwrap().to_spec()).hex();
        let c = InputDigest::new().add("channel", &UnifilarChannel::dec(0.4).unwrap().to_spec()).hex();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), 64);
    }

    #[test]
    fn kinds_serialize_kebab() {
        let q = Quantity::new("rate", Kind::CertifiedLower, 0.5);
        let s = serde_json::to_string(&q).unwrap();
        assert!(s.contains("\"certified-lower\""), "{s}");
    }
}
