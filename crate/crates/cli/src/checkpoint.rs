//! Versioned, checksummed checkpoint files.
//!
//! Layout: a header line `sdegan-checkpoint <version>`, one line of JSON, and
//! a trailer `sha256 <hex>` over the header and body lines.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use sdegan::gan::{GanMeta, LogRecord, TrainedGan};
use sdegan::{GanDiscriminator, GanGenerator, LayerParams, Mlp};

use crate::error::{CliError, CliResult};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "sdegan-checkpoint";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub meta: GanMeta,
    pub config_hash: String,
    pub epoch: usize,
    pub iteration: usize,
    pub generator: Vec<LayerParams>,
    pub discriminator: Vec<LayerParams>,
    pub log: Vec<LogRecord>,
}

impl Checkpoint {
    pub fn new(
        meta: &GanMeta,
        config_hash: &str,
        epoch: usize,
        iteration: usize,
        generator: &Mlp<f32>,
        discriminator: &Mlp<f32>,
        log: &[LogRecord],
    ) -> Self {
        Checkpoint {
            format_version: FORMAT_VERSION,
            meta: meta.clone(),
            config_hash: config_hash.to_string(),
            epoch,
            iteration,
            generator: generator.to_params(),
            discriminator: discriminator.to_params(),
            log: log.to_vec(),
        }
    }

    pub fn from_trained(t: &TrainedGan, config_hash: &str, epoch: usize) -> Self {
        Self::new(&t.meta, config_hash, epoch, t.meta.iterations, &t.generator, &t.discriminator, &t.log)
    }

    pub fn to_trained(&self) -> CliResult<TrainedGan> {
        Ok(TrainedGan {
            meta: self.meta.clone(),
            generator: Mlp::from_params(&self.generator)?,
            discriminator: Mlp::from_params(&self.discriminator)?,
            log: self.log.clone(),
        })
    }

    pub fn generator(&self) -> CliResult<GanGenerator> {
        Ok(self.to_trained()?.generator())
    }

    pub fn discriminator(&self) -> CliResult<GanDiscriminator> {
        Ok(self.to_trained()?.discriminator())
    }

    pub fn encode(&self) -> CliResult<String> {
        let body = serde_json::to_string(self).map_err(|e| CliError::Runtime(e.to_string()))?;
        let head = format!("{MAGIC} {}\n{body}\n", self.format_version);
        let sum = hex::encode(Sha256::digest(head.as_bytes()));
        Ok(format!("{head}sha256 {sum}\n"))
    }

    pub fn decode(text: &str, origin: &str) -> CliResult<Self> {
        let fail = |message: String| CliError::Checkpoint { path: origin.to_string(), message };
        let mut lines = text.split_inclusive('\n');
        let (Some(header), Some(body), Some(trailer)) = (lines.next(), lines.next(), lines.next()) else {
            return Err(fail("truncated file".into()));
        };
        if lines.next().is_some() {
            return Err(fail("trailing data after checksum".into()));
        }
        let version = header
            .trim_end()
            .strip_prefix(MAGIC)
            .map(str::trim)
            .ok_or_else(|| fail("not a checkpoint file".into()))?;
        if version != FORMAT_VERSION.to_string() {
            return Err(fail(format!("format version {version} is not supported (expected {FORMAT_VERSION})")));
        }
        let expected = trailer
            .trim_end()
            .strip_prefix("sha256 ")
            .ok_or_else(|| fail("missing checksum".into()))?;
        let actual = hex::encode(Sha256::digest(format!("{header}{body}").as_bytes()));
        if actual != expected {
            return Err(fail("checksum mismatch".into()));
        }
        let ck: Checkpoint = serde_json::from_str(body).map_err(|e| fail(e.to_string()))?;
        if ck.format_version != FORMAT_VERSION {
            return Err(fail(format!("body declares format version {}", ck.format_version)));
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, self.encode()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let origin = path.display().to_string();
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Checkpoint { path: origin.clone(), message: e.to_string() })?;
        Self::decode(&text, &origin)
    }
}
