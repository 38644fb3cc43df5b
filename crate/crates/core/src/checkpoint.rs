//! Binary checkpoints: `SBSM` magic, little-endian u32 version, u32 header
//! length, a JSON header, then the parameters as little-endian f64.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::RunConfig;
use crate::corpus::{Perspective, Vocab};
use crate::features::FEATURE_DIM;
use crate::sentiment::SentimentModel;
use crate::summodel::{ModelDims, SummarizerModel};
use crate::valuation::ValuationScorer;

pub const MAGIC: &[u8; 4] = b"SBSM";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint (bad magic bytes)")]
    BadMagic,
    #[error("checkpoint version {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("payload has {got} bytes, header promises {expected}")]
    TruncatedPayload { expected: usize, got: usize },
    #[error("expected a {expected} checkpoint, found {found}")]
    KindMismatch { expected: ModelKind, found: ModelKind },
    #[error("malformed header: {0}")]
    Header(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Sentiment,
    Valuation,
    Summarizer,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Sentiment => "sentiment",
            ModelKind::Valuation => "valuation",
            ModelKind::Summarizer => "summarizer",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub kind: ModelKind,
    /// Shape of the parameters; their product-sum is `param_count`.
    pub dims: Vec<usize>,
    pub config_hash: u64,
    pub config: RunConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perspective: Option<Perspective>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocab: Option<Vocab>,
    pub param_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: Header,
    pub params: Vec<f64>,
}

fn expected_params(kind: ModelKind, dims: &[usize]) -> Result<usize, CheckpointError> {
    let bad = || CheckpointError::DimMismatch(format!("{kind} checkpoint with dims {dims:?}"));
    match (kind, dims) {
        (ModelKind::Sentiment, &[classes, features]) => Ok(classes * features + classes),
        (ModelKind::Valuation, &[dim, features]) => Ok(dim * features),
        (ModelKind::Summarizer, &[vocab, embed, ctx, hidden]) => Ok(ModelDims {
            vocab,
            embed,
            ctx,
            hidden,
        }
        .param_count()),
        _ => Err(bad()),
    }
}

impl Checkpoint {
    pub fn new(kind: ModelKind, dims: Vec<usize>, config: &RunConfig, params: Vec<f64>) -> Self {
        Checkpoint {
            header: Header {
                kind,
                dims,
                config_hash: config.hash(),
                config: config.clone(),
                perspective: None,
                stage: None,
                vocab: None,
                param_count: params.len(),
            },
            params,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header).expect("header serializes");
        let mut out = Vec::with_capacity(12 + header.len() + 8 * self.params.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for p in &self.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let u32_at = |at: usize| -> Result<u32, CheckpointError> {
            bytes
                .get(at..at + 4)
                .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
                .ok_or(CheckpointError::TruncatedPayload {
                    expected: at + 4,
                    got: bytes.len(),
                })
        };
        let version = u32_at(4)?;
        if version != VERSION {
            return Err(CheckpointError::VersionMismatch {
                found: version,
                expected: VERSION,
            });
        }
        let header_len = u32_at(8)? as usize;
        let header_bytes = bytes.get(12..12 + header_len).ok_or(CheckpointError::TruncatedPayload {
            expected: 12 + header_len,
            got: bytes.len(),
        })?;
        let header: Header = serde_json::from_slice(header_bytes)?;
        if expected_params(header.kind, &header.dims)? != header.param_count {
            return Err(CheckpointError::DimMismatch(format!(
                "dims {:?} do not give {} parameters",
                header.dims, header.param_count
            )));
        }
        let payload = &bytes[12 + header_len..];
        if payload.len() != 8 * header.param_count {
            return Err(CheckpointError::TruncatedPayload {
                expected: 8 * header.param_count,
                got: payload.len(),
            });
        }
        let params = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Checkpoint { header, params })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
        if let Some(dir) = path.as_ref().parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CheckpointError> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn expect_kind(&self, kind: ModelKind) -> Result<(), CheckpointError> {
        if self.header.kind != kind {
            return Err(CheckpointError::KindMismatch {
                expected: kind,
                found: self.header.kind,
            });
        }
        Ok(())
    }

    pub fn from_sentiment(model: &SentimentModel, config: &RunConfig) -> Self {
        Checkpoint::new(
            ModelKind::Sentiment,
            vec![model.classes(), FEATURE_DIM],
            config,
            model.params(),
        )
    }

    pub fn into_sentiment(self) -> Result<SentimentModel, CheckpointError> {
        self.expect_kind(ModelKind::Sentiment)?;
        SentimentModel::from_params(self.header.dims[0], &self.params)
            .ok_or_else(|| CheckpointError::DimMismatch("sentiment parameters".into()))
    }

    pub fn from_valuation(scorer: &ValuationScorer, perspective: Option<Perspective>, config: &RunConfig) -> Self {
        let mut ckpt = Checkpoint::new(
            ModelKind::Valuation,
            vec![scorer.dim(), FEATURE_DIM],
            config,
            scorer.params().to_vec(),
        );
        ckpt.header.perspective = perspective;
        ckpt
    }

    pub fn into_valuation(self) -> Result<ValuationScorer, CheckpointError> {
        self.expect_kind(ModelKind::Valuation)?;
        ValuationScorer::from_params(self.header.dims[0], self.params)
            .ok_or_else(|| CheckpointError::DimMismatch("valuation parameters".into()))
    }

    pub fn from_summarizer(
        model: &SummarizerModel,
        vocab: &Vocab,
        perspective: Perspective,
        stage: u8,
        config: &RunConfig,
    ) -> Self {
        let d = model.dims();
        let mut ckpt = Checkpoint::new(
            ModelKind::Summarizer,
            vec![d.vocab, d.embed, d.ctx, d.hidden],
            config,
            model.params().to_vec(),
        );
        ckpt.header.perspective = Some(perspective);
        ckpt.header.stage = Some(stage);
        ckpt.header.vocab = Some(vocab.clone());
        ckpt
    }

    pub fn into_summarizer(self) -> Result<(SummarizerModel, Vocab), CheckpointError> {
        self.expect_kind(ModelKind::Summarizer)?;
        let dims = ModelDims {
            vocab: self.header.dims[0],
            embed: self.header.dims[1],
            ctx: self.header.dims[2],
            hidden: self.header.dims[3],
        };
        let vocab = self
            .header
            .vocab
            .ok_or_else(|| CheckpointError::DimMismatch("summarizer checkpoint without vocabulary".into()))?;
        if vocab.len() != dims.vocab {
            return Err(CheckpointError::DimMismatch(format!(
                "vocabulary has {} tokens, model expects {}",
                vocab.len(),
                dims.vocab
            )));
        }
        let model = SummarizerModel::from_params(dims, self.params)
            .map_err(|e| CheckpointError::DimMismatch(e.to_string()))?;
        Ok((model, vocab))
    }

    /// Checks that the model dimensions in the header agree with `config`.
    pub fn check_config_dims(&self, config: &RunConfig) -> Result<(), CheckpointError> {
        let ok = match self.header.kind {
            ModelKind::Sentiment => true,
            ModelKind::Valuation => self.header.dims[0] == config.valuation.dim,
            ModelKind::Summarizer => {
                let m = &config.model;
                self.header.dims[1..] == [m.embed, m.ctx, m.hidden]
            }
        };
        if ok {
            Ok(())
        } else {
            Err(CheckpointError::DimMismatch(format!(
                "{} checkpoint dims {:?} disagree with the run config",
                self.header.kind, self.header.dims
            )))
        }
    }
}
