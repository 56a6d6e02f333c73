//! Transformer encoder, non-causal shallow decoders, and the causal deep
//! decoder with cross-attention tracing.

mod blocks;
mod decoders;
mod encoder;

pub use blocks::{causal_mask, pad_key_mask, AttnScale};
pub use decoders::{decode_deep, decode_shallow, AttentionTrace, ShallowSection};
pub use encoder::{encode, EncoderOutput};

use crate::corpus::vocab::RESERVED;
use crate::tensor::params::ParamNodes;
use crate::tensor::{Params, Real, Rng, Tape, Tensor, TensorError};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const LN_EPS: f64 = 1e-5;
/// Additive attention mask value for blocked positions.
pub const MASK_NEG: f64 = -1e9;
const INIT_STD: f64 = 0.02;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model config: {0}")]
    Config(String),
    #[error("input length {len} exceeds max_positions {max}; caller must pre-truncate")]
    OverLength { len: usize, max: usize },
    #[error("bad input: {0}")]
    BadInput(String),
    #[error("deep decoder source states must be detached from the encoder graph")]
    SourceNotDetached,
    #[error("empty decode target")]
    EmptyTarget,
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_emb: usize,
    pub n_heads: usize,
    pub encoder_layers: usize,
    pub shallow_decoder_layers: usize,
    pub deep_decoder_layers: usize,
    pub ffn_dim: usize,
    pub vocab_size: usize,
    pub max_positions: usize,
    /// Share the encoder token embedding with all decoder output projections.
    pub tie_weights: bool,
}

impl ModelConfig {
    /// Small configuration that trains in minutes on one CPU.
    pub fn desk(vocab_size: usize) -> Self {
        ModelConfig {
            d_emb: 64,
            n_heads: 4,
            encoder_layers: 3,
            shallow_decoder_layers: 1,
            deep_decoder_layers: 4,
            ffn_dim: 256,
            vocab_size,
            max_positions: 128,
            tie_weights: true,
        }
    }

    /// BERT-base shaped configuration.
    pub fn paper(vocab_size: usize) -> Self {
        ModelConfig {
            d_emb: 768,
            n_heads: 12,
            encoder_layers: 12,
            shallow_decoder_layers: 1,
            deep_decoder_layers: 6,
            ffn_dim: 3072,
            vocab_size,
            max_positions: 512,
            tie_weights: true,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_emb / self.n_heads
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.d_emb == 0 || self.n_heads == 0 || self.d_emb % self.n_heads != 0 {
            return Err(ModelError::Config(format!(
                "d_emb {} must be a positive multiple of n_heads {}",
                self.d_emb, self.n_heads
            )));
        }
        if self.deep_decoder_layers < 2 {
            return Err(ModelError::Config(
                "deep_decoder_layers must be >= 2 (a penultimate layer must exist)".into(),
            ));
        }
        if self.encoder_layers == 0 || self.shallow_decoder_layers == 0 {
            return Err(ModelError::Config("layer counts must be positive".into()));
        }
        if self.vocab_size <= RESERVED {
            return Err(ModelError::Config(format!(
                "vocab_size {} leaves no room beyond the {RESERVED} reserved tokens",
                self.vocab_size
            )));
        }
        if self.max_positions < 2 {
            return Err(ModelError::Config("max_positions must be >= 2".into()));
        }
        Ok(())
    }
}

/// Encoder plus decoders with a flat named parameter store.
#[derive(Clone, Debug)]
pub struct Model<T> {
    pub config: ModelConfig,
    pub params: Params<T>,
}

fn init_linear<T: Real>(params: &mut Params<T>, rng: &mut Rng, name: &str, rows: usize, cols: usize) {
    params.insert(format!("{name}.w"), Tensor::randn(&[rows, cols], INIT_STD, rng));
    params.insert(format!("{name}.b"), Tensor::zeros(&[1, cols]));
}

fn init_ln<T: Real>(params: &mut Params<T>, name: &str, d: usize) {
    params.insert(format!("{name}.gain"), Tensor::full(&[d], T::one()));
    params.insert(format!("{name}.bias"), Tensor::zeros(&[d]));
}

fn init_attn<T: Real>(params: &mut Params<T>, rng: &mut Rng, name: &str, cfg: &ModelConfig) {
    let (d, dh) = (cfg.d_emb, cfg.head_dim());
    for h in 0..cfg.n_heads {
        init_linear(params, rng, &format!("{name}.head{h}.q"), d, dh);
        init_linear(params, rng, &format!("{name}.head{h}.k"), d, dh);
        init_linear(params, rng, &format!("{name}.head{h}.v"), d, dh);
    }
    init_linear(params, rng, &format!("{name}.out"), d, d);
}

fn init_ffn<T: Real>(params: &mut Params<T>, rng: &mut Rng, name: &str, cfg: &ModelConfig) {
    init_linear(params, rng, &format!("{name}.lift"), cfg.d_emb, cfg.ffn_dim);
    init_linear(params, rng, &format!("{name}.drop"), cfg.ffn_dim, cfg.d_emb);
}

impl<T: Real> Model<T> {
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = Rng::new(seed).derive(&[0x696e_6974]); // "init"
        let mut params = Params::new();
        let cfg = &config;
        let d = cfg.d_emb;

        // Encoder.
        params.insert("encoder.token_emb", Tensor::randn(&[cfg.vocab_size, d], INIT_STD, &mut rng));
        params.insert("encoder.pos_emb", Tensor::randn(&[cfg.max_positions, d], INIT_STD, &mut rng));
        init_ln(&mut params, "encoder.emb_ln", d);
        for l in 0..cfg.encoder_layers {
            let p = format!("encoder.layer{l}");
            init_attn(&mut params, &mut rng, &format!("{p}.attn"), cfg);
            init_ln(&mut params, &format!("{p}.ln1"), d);
            init_ffn(&mut params, &mut rng, &format!("{p}.ffn"), cfg);
            init_ln(&mut params, &format!("{p}.ln2"), d);
        }
        params.insert("encoder.out_bias", Tensor::zeros(&[1, cfg.vocab_size]));
        if !cfg.tie_weights {
            params.insert(
                "encoder.out_proj",
                Tensor::randn(&[cfg.vocab_size, d], INIT_STD, &mut rng),
            );
        }

        // Shallow decoders reconstruct masked sections through h_F; their
        // input embeddings reuse the encoder token table, so each one only
        // owns positions, layers and an output bias.
        for section in ["reasoning", "decision"] {
            params.insert(
                format!("{section}.pos_emb"),
                Tensor::randn(&[cfg.max_positions, d], INIT_STD, &mut rng),
            );
            init_ln(&mut params, &format!("{section}.emb_ln"), d);
            for l in 0..cfg.shallow_decoder_layers {
                let p = format!("{section}.layer{l}");
                init_attn(&mut params, &mut rng, &format!("{p}.attn"), cfg);
                init_ln(&mut params, &format!("{p}.ln1"), d);
                init_ffn(&mut params, &mut rng, &format!("{p}.ffn"), cfg);
                init_ln(&mut params, &format!("{p}.ln2"), d);
            }
            params.insert(format!("{section}.out_bias"), Tensor::zeros(&[1, cfg.vocab_size]));
            if !cfg.tie_weights {
                params.insert(
                    format!("{section}.out_proj"),
                    Tensor::randn(&[cfg.vocab_size, d], INIT_STD, &mut rng),
                );
            }
        }

        // Deep decoder: translation loss must never reach encoder parameters,
        // so it carries its own token embedding table.
        params.insert("deep.token_emb", Tensor::randn(&[cfg.vocab_size, d], INIT_STD, &mut rng));
        params.insert("deep.pos_emb", Tensor::randn(&[cfg.max_positions, d], INIT_STD, &mut rng));
        init_ln(&mut params, "deep.emb_ln", d);
        for l in 0..cfg.deep_decoder_layers {
            let p = format!("deep.layer{l}");
            init_attn(&mut params, &mut rng, &format!("{p}.self"), cfg);
            init_ln(&mut params, &format!("{p}.ln1"), d);
            init_attn(&mut params, &mut rng, &format!("{p}.cross"), cfg);
            init_ln(&mut params, &format!("{p}.ln2"), d);
            init_ffn(&mut params, &mut rng, &format!("{p}.ffn"), cfg);
            init_ln(&mut params, &format!("{p}.ln3"), d);
        }
        params.insert("deep.out_bias", Tensor::zeros(&[1, cfg.vocab_size]));
        if !cfg.tie_weights {
            params.insert(
                "deep.out_proj",
                Tensor::randn(&[cfg.vocab_size, d], INIT_STD, &mut rng),
            );
        }

        Ok(Model { config, params })
    }

    pub fn bind(&self, tape: &mut Tape<T>, trainable: bool) -> ParamNodes {
        self.params.bind(tape, trainable)
    }

    /// Stable content hash of config plus parameter payloads; used to pair a
    /// dense index with the model that produced it.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(serde_json::to_string(&self.config).expect("config serializes").as_bytes());
        for (name, tensor) in self.params.iter() {
            hasher.update(name.as_bytes());
            let mut bytes = Vec::with_capacity(tensor.numel() * T::WIDTH as usize);
            for &v in tensor.data() {
                v.write_le(&mut bytes);
            }
            hasher.update(&bytes);
        }
        let digest = hasher.finalize();
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn cast<U: Real>(&self) -> Model<U> {
        Model { config: self.config.clone(), params: self.params.cast() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_config_is_valid() {
        ModelConfig::desk(256).validate().unwrap();
        ModelConfig::paper(30000).validate().unwrap();
    }

    #[test]
    fn head_split_must_divide() {
        let mut cfg = ModelConfig::desk(256);
        cfg.n_heads = 5;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn deep_decoder_needs_penultimate_layer() {
        let mut cfg = ModelConfig::desk(256);
        cfg.deep_decoder_layers = 1;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn init_is_seed_deterministic() {
        let cfg = ModelConfig::desk(64);
        let a = Model::<f32>::init(cfg.clone(), 5).unwrap();
        let b = Model::<f32>::init(cfg.clone(), 5).unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
        let c = Model::<f32>::init(cfg, 6).unwrap();
        assert_ne!(a.fingerprint(), c.fingerprint());
    }
}
