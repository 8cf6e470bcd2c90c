use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::layout::{Layout, TensorSpec};
use super::model::Model;
use super::{ModelConfig, PolicyError};
use crate::domains::DomainKind;
use crate::tokenizer::Vocabulary;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"PLANGEN1";

/// First and second moment estimates of AdamW and its step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f32>,
    pub v: Vec<f32>,
    pub step: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }
}

/// A trained policy: parameters, the vocabulary they were trained with, and
/// optionally the optimizer state to continue training.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub domain: DomainKind,
    pub vocab: Vocabulary,
    pub model: Model<f32>,
    pub optimizer: Option<AdamState>,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
struct Header {
    config: ModelConfig,
    domain: DomainKind,
    vocab: serde_json::Value,
    vocab_hash: String,
    step: u64,
    manifest: Vec<TensorSpec>,
    optimizer: bool,
}

impl Checkpoint {
    pub fn step(&self) -> u64 {
        self.optimizer.as_ref().map_or(0, |o| o.step)
    }

    /// Layout: magic, header length (u64 LE), JSON header, parameters as f32
    /// LE in manifest order, then the two moment buffers when present.
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            config: self.model.config.clone(),
            domain: self.domain,
            vocab: serde_json::from_str(&self.vocab.to_json()).expect("vocabulary json"),
            vocab_hash: self.vocab.hash(),
            step: self.step(),
            manifest: self.model.layout.specs.clone(),
            optimizer: self.optimizer.is_some(),
        };
        let h = serde_json::to_vec(&header).expect("header serializes");
        let extra = if self.optimizer.is_some() { 3 } else { 1 };
        let mut out = Vec::with_capacity(16 + h.len() + 4 * extra * self.model.params.len());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&(h.len() as u64).to_le_bytes());
        out.extend_from_slice(&h);
        let mut put = |xs: &[f32]| xs.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
        put(&self.model.params);
        if let Some(o) = &self.optimizer {
            put(&o.m);
            put(&o.v);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PolicyError> {
        let bad = |m: &str| PolicyError::Checkpoint(m.to_string());
        if bytes.len() < 16 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let body = bytes.get(16..).ok_or_else(|| bad("truncated"))?;
        if body.len() < hlen {
            return Err(bad("truncated header"));
        }
        let header: Header = serde_json::from_slice(&body[..hlen])?;
        header.config.validate()?;
        let vocab = Vocabulary::from_json(&header.vocab.to_string(), header.domain.domain_def())?;
        if vocab.hash() != header.vocab_hash {
            return Err(bad("vocabulary hash mismatch"));
        }
        if vocab.len() != header.config.vocab_size {
            return Err(bad("vocabulary size differs from the model config"));
        }
        let layout = Layout::new(&header.config);
        if layout.specs != header.manifest {
            return Err(bad("tensor manifest does not match the config"));
        }
        let n = layout.len;
        let blocks = if header.optimizer { 3 } else { 1 };
        let data = &body[hlen..];
        if data.len() != 4 * n * blocks {
            return Err(bad("tensor data has the wrong size"));
        }
        let read = |k: usize| -> Vec<f32> {
            data[4 * n * k..4 * n * (k + 1)]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect()
        };
        let model = Model {
            config: header.config,
            layout,
            params: read(0),
        };
        let optimizer = header.optimizer.then(|| AdamState {
            m: read(1),
            v: read(2),
            step: header.step,
        });
        Ok(Checkpoint {
            domain: header.domain,
            vocab,
            model,
            optimizer,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), PolicyError> {
        let tmp = path.with_extension("tmp");
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&self.to_bytes())?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, PolicyError> {
        let mut buf = Vec::new();
        fs::File::open(path)?.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }
}
