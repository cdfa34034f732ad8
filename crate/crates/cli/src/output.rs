use std::fs;
use std::path::Path;

use anyhow::Context;
use moqsdc::model::ChannelParams;
use serde::Serialize;
use serde_json::Value;

use crate::{Common, Failure, Format};

/// Embedded in every output so a run can be repeated.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: Option<String>,
    pub seed: Option<u64>,
    pub version: String,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, common: &Common, seed: Option<u64>) -> Self {
        Self {
            command: command.to_string(),
            config_path: common.config.as_ref().map(|p| p.display().to_string()),
            seed,
            version: concat!("v", env!("CARGO_PKG_VERSION")).to_string(),
            outputs: vec![common
                .out
                .as_ref()
                .map_or_else(|| "-".to_string(), |p| p.display().to_string())],
        }
    }
}

pub fn load_params(common: &Common) -> Result<ChannelParams, Failure> {
    let Some(path) = &common.config else {
        return Ok(ChannelParams::default());
    };
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))
        .map_err(Failure::Io)?;
    ChannelParams::from_config_str(&text)
        .with_context(|| format!("config {}", path.display()))
        .map_err(Failure::Usage)
}

pub fn resolve_seed(common: &Common) -> u64 {
    common.seed.unwrap_or_else(|| {
        let seed = rand::random();
        eprintln!("seed: {seed}");
        seed
    })
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    fs::write(path, bytes)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(Failure::Io)
}

fn write_out(common: &Common, bytes: &[u8]) -> Result<(), Failure> {
    match &common.out {
        Some(path) => write_file(path, bytes),
        None => {
            use std::io::Write;
            std::io::stdout()
                .write_all(bytes)
                .context("writing stdout")
                .map_err(Failure::Io)
        }
    }
}

/// Writes either the CSV body (after a `# manifest:` comment line) or the
/// JSON document (with a `manifest` key).
pub fn emit<F>(
    common: &Common,
    default: Format,
    manifest: &RunManifest,
    json: Value,
    csv: F,
) -> Result<(), Failure>
where
    F: FnOnce(&mut Vec<u8>) -> anyhow::Result<()>,
{
    let manifest_json = serde_json::to_value(manifest).expect("manifest serializes");
    let mut bytes = Vec::new();
    match common.format.unwrap_or(default) {
        Format::Csv => {
            bytes.extend_from_slice(format!("# manifest: {manifest_json}\n").as_bytes());
            csv(&mut bytes).map_err(Failure::Usage)?;
        }
        Format::Json => {
            let mut doc = serde_json::Map::new();
            doc.insert("manifest".into(), manifest_json);
            match json {
                Value::Object(fields) => doc.extend(fields),
                other => {
                    doc.insert("data".into(), other);
                }
            }
            bytes = serde_json::to_vec_pretty(&Value::Object(doc)).expect("JSON value serializes");
            bytes.push(b'\n');
        }
    }
    write_out(common, &bytes)
}
