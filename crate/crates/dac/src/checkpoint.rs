//! Checkpoint container: named f64 tensors in one file.
//!
//! Layout is a text manifest followed by a raw little-endian payload:
//!
//! ```text
//! DACCKPT 1
//! <name> <dim0> <dim1> ...      (one line per entry, payload order)
//! DATA
//! <little-endian f64 bytes, concatenated>
//! ```
//!
//! Round-trips are bit-exact; floats are never formatted as text.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{DacError, Result};

const MAGIC: &str = "DACCKPT 1";

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// An ordered set of named tensors. Insertion order is preserved so writes
/// are deterministic.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Container {
    names: Vec<String>,
    entries: BTreeMap<String, Entry>,
}

impl Container {
    pub fn new() -> Self {
        Container::default()
    }

    pub fn insert(&mut self, name: &str, shape: Vec<usize>, data: Vec<f64>) -> Result<()> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(DacError::validation(format!(
                "entry `{name}`: shape {:?} implies {numel} values, got {}",
                shape,
                data.len()
            )));
        }
        if self.entries.insert(name.to_string(), Entry { shape, data }).is_some() {
            return Err(DacError::validation(format!("duplicate entry `{name}`")));
        }
        self.names.push(name.to_string());
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Entry> {
        self.entries
            .get(name)
            .ok_or_else(|| DacError::validation(format!("missing checkpoint entry `{name}`")))
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        let mut manifest = String::new();
        manifest.push_str(MAGIC);
        manifest.push('\n');
        for name in &self.names {
            let entry = &self.entries[name];
            manifest.push_str(name);
            for d in &entry.shape {
                manifest.push(' ');
                manifest.push_str(&d.to_string());
            }
            manifest.push('\n');
        }
        manifest.push_str("DATA\n");
        file.write_all(manifest.as_bytes())?;
        for name in &self.names {
            for v in &self.entries[name].data {
                file.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut raw = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut raw)?;
        let data_tag = b"DATA\n";
        let split = raw
            .windows(data_tag.len())
            .position(|w| w == data_tag)
            .ok_or_else(|| DacError::Parse("checkpoint missing DATA marker".to_string()))?;
        let manifest = std::str::from_utf8(&raw[..split])
            .map_err(|e| DacError::Parse(format!("manifest is not utf-8: {e}")))?;
        let payload = &raw[split + data_tag.len()..];

        let mut lines = manifest.lines();
        if lines.next() != Some(MAGIC) {
            return Err(DacError::Parse("unrecognized checkpoint version".to_string()));
        }
        let mut container = Container::new();
        let mut offset = 0usize;
        for line in lines {
            if line.trim().is_empty() {
                continue;
            }
            let mut toks = line.split_whitespace();
            let name = toks
                .next()
                .ok_or_else(|| DacError::Parse("empty manifest line".to_string()))?;
            let shape: Vec<usize> = toks
                .map(|t| {
                    t.parse::<usize>()
                        .map_err(|e| DacError::Parse(format!("bad dim `{t}`: {e}")))
                })
                .collect::<Result<_>>()?;
            let numel: usize = shape.iter().product();
            let bytes = numel * 8;
            if offset + bytes > payload.len() {
                return Err(DacError::Parse(format!(
                    "payload too short for entry `{name}`"
                )));
            }
            let data: Vec<f64> = payload[offset..offset + bytes]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            offset += bytes;
            container.insert(name, shape, data)?;
        }
        if offset != payload.len() {
            return Err(DacError::Parse(format!(
                "payload has {} trailing bytes",
                payload.len() - offset
            )));
        }
        Ok(container)
    }
}
