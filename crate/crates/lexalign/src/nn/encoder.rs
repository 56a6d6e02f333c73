//! Fact encoder: bidirectional transformer producing the [CLS] bottleneck
//! vector, ordinary-token states, and MLM logits.

use super::blocks::{
    embed_tokens, feed_forward, layer_norm, multi_head_attention, output_logits, pad_key_mask,
    AttnScale,
};
use super::{ModelConfig, ModelError};
use crate::corpus::vocab::CLS;
use crate::tensor::params::ParamNodes;
use crate::tensor::tape::{NodeId, Tape};
use crate::tensor::Real;

pub struct EncoderOutput {
    /// Final-layer state of the [CLS] slot, 1 x d.
    pub h_f: NodeId,
    /// Final-layer states of the ordinary tokens (excludes [CLS]), I x d.
    pub h_tokens: NodeId,
    /// Vocabulary logits at every input position, (1 + I) x vocab.
    pub mlm_logits: NodeId,
}

/// Encode `[CLS], t_1..t_I`. `pad_mask`, when given, marks real positions
/// with `true`; padded keys are blocked from attention.
pub fn encode<T: Real>(
    tape: &mut Tape<T>,
    cfg: &ModelConfig,
    p: &ParamNodes,
    tokens: &[usize],
    pad_mask: Option<&[bool]>,
) -> Result<EncoderOutput, ModelError> {
    if tokens.is_empty() || tokens[0] != CLS {
        return Err(ModelError::BadInput("encoder input must start with [CLS]".into()));
    }
    if tokens.len() > cfg.max_positions {
        return Err(ModelError::OverLength { len: tokens.len(), max: cfg.max_positions });
    }
    if let Some(m) = pad_mask {
        if m.len() != tokens.len() {
            return Err(ModelError::BadInput(format!(
                "pad mask length {} != input length {}",
                m.len(),
                tokens.len()
            )));
        }
        if !m[0] {
            return Err(ModelError::BadInput("[CLS] position cannot be padding".into()));
        }
    }
    let n = tokens.len();
    let mask = pad_mask.map(|m| pad_key_mask::<T>(n, m));

    let mut x = embed_tokens(tape, p, "encoder.token_emb", "encoder.pos_emb", "encoder.emb_ln", tokens)?;
    for l in 0..cfg.encoder_layers {
        let prefix = format!("encoder.layer{l}");
        let attn = multi_head_attention(
            tape,
            p,
            &format!("{prefix}.attn"),
            cfg,
            x,
            x,
            mask.as_ref(),
            AttnScale::HeadDim,
        )?;
        let res1 = tape.add(x, attn.out)?;
        let x1 = layer_norm(tape, p, &format!("{prefix}.ln1"), res1)?;
        let ffn = feed_forward(tape, p, &format!("{prefix}.ffn"), x1)?;
        let res2 = tape.add(x1, ffn)?;
        x = layer_norm(tape, p, &format!("{prefix}.ln2"), res2)?;
    }

    let h_f = tape.gather_rows(x, &[0])?;
    let token_rows: Vec<usize> = (1..n).collect();
    let h_tokens = tape.gather_rows(x, &token_rows)?;
    let mlm_logits = output_logits(tape, p, cfg, "encoder", x, false)?;
    Ok(EncoderOutput { h_f, h_tokens, mlm_logits })
}
