//! Checkpoint container and its on-disk format.
//!
//! Layout: the 8-byte magic `PACKPT\0\x01`, a little-endian `u64` header
//! length, a JSON header (format version, role, config, tokenizer and a
//! tensor manifest of name/shape/byte offset), then every tensor as raw
//! little-endian `f64` values.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::tensor::{log_softmax, Tensor};
use super::tokenizer::Tokenizer;
use super::transformer::{check_length, init_params, Decoder, InitOptions, ModelConfig};
use super::ModelError;
use crate::Scalar;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"PACKPT\x00\x01";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Base,
    Sft,
    Rlpf,
    Dpa,
    Reward,
}

impl std::fmt::Display for Role {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Role::Base => "base",
            Role::Sft => "sft",
            Role::Rlpf => "rlpf",
            Role::Dpa => "dpa",
            Role::Reward => "reward",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<S> {
    pub config: ModelConfig,
    pub tokenizer: Tokenizer,
    pub role: Role,
    pub params: ParamStore<S>,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: [usize; 2],
    offset: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    role: Role,
    config: ModelConfig,
    tokenizer: Tokenizer,
    dtype: String,
    tensors: Vec<TensorEntry>,
}

impl<S: Scalar> Checkpoint<S> {
    /// A freshly initialised base model.
    pub fn init(config: ModelConfig, tokenizer: Tokenizer, opts: InitOptions, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        if config.vocab_size != tokenizer.vocab_size() {
            return Err(ModelError::Config(format!(
                "vocab_size {} does not match tokenizer vocabulary {}",
                config.vocab_size,
                tokenizer.vocab_size()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = init_params(&config, opts, &mut rng);
        Ok(Self { config, tokenizer, role: Role::Base, params })
    }

    pub fn with_role(mut self, role: Role) -> Self {
        self.role = role;
        self
    }

    pub fn decoder(&self) -> Decoder<'_, S> {
        Decoder::new(&self.config, &self.params)
    }

    /// Next-token scores for every position: `T x |V|`. Row `i` depends only on `tokens[..=i]`.
    pub fn logits(&self, tokens: &[usize]) -> Result<Tensor<S>, ModelError> {
        check_length(&self.config, tokens.len())?;
        let mut dec = self.decoder();
        let mut out = Tensor::zeros(tokens.len(), self.config.vocab_size);
        for (t, &tok) in tokens.iter().enumerate() {
            let h = dec.step(tok)?;
            out.row_mut(t).copy_from_slice(&dec.logits(&h));
        }
        Ok(out)
    }

    /// Per-token log-probabilities of `completion` following `prompt`.
    pub fn token_logprobs(&self, prompt: &[usize], completion: &[usize]) -> Result<Vec<S>, ModelError> {
        if prompt.is_empty() {
            return Err(ModelError::EmptyInput);
        }
        check_length(&self.config, prompt.len() + completion.len())?;
        if completion.is_empty() {
            return Ok(Vec::new());
        }
        let mut dec = self.decoder();
        let mut hidden = Vec::new();
        for &tok in prompt {
            hidden = dec.step(tok)?;
        }
        let mut out = Vec::with_capacity(completion.len());
        for (i, &tok) in completion.iter().enumerate() {
            let lp = log_softmax(&dec.logits(&hidden));
            out.push(lp[tok]);
            if i + 1 < completion.len() {
                hidden = dec.step(tok)?;
            }
        }
        Ok(out)
    }

    /// Sum of completion log-probabilities; prompt positions are excluded.
    /// An empty completion yields 0.
    pub fn sequence_logprob(&self, prompt: &[usize], completion: &[usize]) -> Result<S, ModelError> {
        if completion.is_empty() {
            log::debug!("sequence_logprob called with an empty completion; returning 0");
        }
        Ok(self.token_logprobs(prompt, completion)?.into_iter().sum())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut entries = Vec::with_capacity(self.params.len());
        let mut payload = Vec::with_capacity(self.params.num_scalars() * 8);
        for (name, t) in self.params.iter() {
            entries.push(TensorEntry { name: name.to_string(), shape: [t.rows, t.cols], offset: payload.len() });
            for v in &t.data {
                payload.extend_from_slice(&v.as_f64().to_le_bytes());
            }
        }
        let header = Header {
            format_version: FORMAT_VERSION,
            role: self.role,
            config: self.config,
            tokenizer: self.tokenizer.clone(),
            dtype: "f64".to_string(),
            tensors: entries,
        };
        let header = serde_json::to_vec(&header).expect("checkpoint header serialises");
        let mut out = Vec::with_capacity(16 + header.len() + payload.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        let bad = |m: &str| ModelError::Format(m.to_string());
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(bad("missing checkpoint magic"));
        }
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let body = bytes.get(16..16 + header_len).ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(body).map_err(|e| ModelError::Format(e.to_string()))?;
        if header.format_version != FORMAT_VERSION {
            return Err(ModelError::Format(format!("unsupported format version {}", header.format_version)));
        }
        if header.dtype != "f64" {
            return Err(ModelError::Format(format!("unsupported dtype {}", header.dtype)));
        }
        header.config.validate()?;
        let payload = &bytes[16 + header_len..];
        let mut params = ParamStore::new();
        for e in header.tensors {
            let n = e.shape[0] * e.shape[1];
            let raw = payload.get(e.offset..e.offset + 8 * n).ok_or_else(|| bad("truncated tensor payload"))?;
            let data: Vec<S> = raw
                .chunks_exact(8)
                .map(|c| S::lit(f64::from_le_bytes(c.try_into().expect("8 bytes"))))
                .collect();
            let t = Tensor::from_vec(e.shape[0], e.shape[1], data);
            if !t.is_finite() {
                return Err(ModelError::NonFinite(e.name));
            }
            params.insert(e.name, t);
        }
        Ok(Self { config: header.config, tokenizer: header.tokenizer, role: header.role, params })
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        if let Some(name) = self.params.first_non_finite() {
            return Err(ModelError::NonFinite(name.to_string()));
        }
        fs::write(path, self.to_bytes()).map_err(|e| ModelError::Io(path.display().to_string(), e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let bytes = fs::read(path).map_err(|e| ModelError::Io(path.display().to_string(), e.to_string()))?;
        Self::from_bytes(&bytes)
    }

    pub fn cast<T: Scalar>(&self) -> Checkpoint<T> {
        Checkpoint { config: self.config, tokenizer: self.tokenizer.clone(), role: self.role, params: self.params.cast() }
    }
}
