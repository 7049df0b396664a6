//! Run manifest: a flat `key = value` file written next to the outputs.
//!
//! The configuration is stored as `config.<path> = <toml literal>` lines,
//! with array positions as numeric path segments, so a manifest can be
//! turned back into the exact configuration it was produced from. Output
//! files are listed with their SHA-256 digests.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};
use toml::{Table, Value};

use crate::config::ConfigFile;
use crate::error::Failure;

pub const FILE_NAME: &str = "manifest.txt";

#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub entries: Vec<(String, String)>,
}

impl RunManifest {
    pub fn new(command: &str, config: &ConfigFile) -> Result<Self, Failure> {
        let mut entries = vec![
            ("tool".to_string(), env!("CARGO_PKG_NAME").to_string()),
            ("version".to_string(), env!("CARGO_PKG_VERSION").to_string()),
            ("command".to_string(), command.to_string()),
            ("created_utc".to_string(), chrono::Utc::now().to_rfc3339()),
            ("seed".to_string(), config.seed.to_string()),
        ];
        let value = Value::try_from(config)
            .map_err(|e| Failure::Input(format!("cannot record config: {e}")))?;
        flatten("config", &value, &mut entries);
        Ok(RunManifest { entries })
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.entries.push((key.into(), value.into()));
    }

    /// Records an output file by name and digest.
    pub fn add_output(&mut self, name: &str, bytes: &[u8]) {
        let digest = Sha256::digest(bytes);
        let hex = digest.iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        });
        self.push(format!("output.{name}.sha256"), hex);
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        self.entries.iter().fold(String::new(), |mut s, (k, v)| {
            let _ = writeln!(s, "{k} = {v}");
            s
        })
    }

    pub fn parse(text: &str) -> Result<Self, Failure> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once(" = ")
                .ok_or_else(|| Failure::Input(format!("manifest line {}: expected 'key = value'", i + 1)))?;
            entries.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(RunManifest { entries })
    }

    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::Input(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Rebuilds the recorded configuration.
    pub fn config(&self) -> Result<ConfigFile, Failure> {
        let mut root = Value::Table(Table::new());
        let mut any = false;
        for (k, v) in &self.entries {
            let Some(path) = k.strip_prefix("config.") else { continue };
            any = true;
            let literal: Table = toml::from_str(&format!("v = {v}"))
                .map_err(|e| Failure::Input(format!("manifest key {k}: {e}")))?;
            let value = literal.get("v").cloned().expect("parsed key");
            insert(&mut root, &path.split('.').collect::<Vec<_>>(), value)
                .map_err(|m| Failure::Input(format!("manifest key {k}: {m}")))?;
        }
        if !any {
            return Err(Failure::Input("manifest has no config entries".into()));
        }
        root.try_into()
            .map_err(|e: toml::de::Error| Failure::Input(format!("manifest config: {e}")))
    }
}

fn flatten(prefix: &str, value: &Value, out: &mut Vec<(String, String)>) {
    match value {
        Value::Table(t) => {
            for (k, v) in t {
                flatten(&format!("{prefix}.{k}"), v, out);
            }
        }
        Value::Array(a) => {
            for (i, v) in a.iter().enumerate() {
                flatten(&format!("{prefix}.{i}"), v, out);
            }
        }
        leaf => out.push((prefix.to_string(), leaf.to_string())),
    }
}

fn insert(node: &mut Value, path: &[&str], value: Value) -> Result<(), String> {
    let Some((&head, rest)) = path.split_first() else {
        *node = value;
        return Ok(());
    };
    if let Ok(idx) = head.parse::<usize>() {
        if !node.is_array() {
            if matches!(node, Value::Table(t) if t.is_empty()) {
                *node = Value::Array(Vec::new());
            } else {
                return Err("mixed array and table paths".into());
            }
        }
        let arr = node.as_array_mut().expect("array");
        if idx > arr.len() {
            return Err(format!("array index {idx} out of order"));
        }
        if idx == arr.len() {
            arr.push(Value::Table(Table::new()));
        }
        insert(&mut arr[idx], rest, value)
    } else {
        let table = node.as_table_mut().ok_or("mixed array and table paths")?;
        let child = table
            .entry(head.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        insert(child, rest, value)
    }
}

/// Writes `bytes` to `path` through a temporary file in the same directory
/// and a rename, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let mut f = fs::File::create(&tmp)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    fs::rename(&tmp, path)?;
    Ok(())
}
