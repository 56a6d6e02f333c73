//! Shallow reconstruction decoders and the causal deep decoder.
//!
//! Shallow decoders are non-causal: they reconstruct masked section tokens
//! from `[h_F, r_1..r_n]` with full bidirectional self-attention, which is
//! what makes h_F an information bottleneck. The deep decoder is causal and
//! teacher-forced with a [BOS]-shifted input; its per-layer, per-head
//! cross-attention probabilities are recorded for alignment extraction.

use super::blocks::{
    causal_mask, embed_tokens, feed_forward, layer_norm, multi_head_attention, output_logits,
    AttnScale,
};
use super::{ModelConfig, ModelError};
use crate::corpus::vocab::BOS;
use crate::tensor::params::ParamNodes;
use crate::tensor::tape::{NodeId, Tape};
use crate::tensor::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShallowSection {
    Reasoning,
    Decision,
}

impl ShallowSection {
    pub fn prefix(self) -> &'static str {
        match self {
            ShallowSection::Reasoning => "reasoning",
            ShallowSection::Decision => "decision",
        }
    }
}

/// Decode a masked section through the bottleneck. Input row 0 is h_F (it
/// replaces the section's [CLS] slot and takes position 0); rows 1..=n are
/// the section token embeddings. Returns logits for all n + 1 positions.
pub fn decode_shallow<T: Real>(
    tape: &mut Tape<T>,
    cfg: &ModelConfig,
    p: &ParamNodes,
    section: ShallowSection,
    h_f: NodeId,
    tokens: &[usize],
) -> Result<NodeId, ModelError> {
    let d = cfg.d_emb;
    if tape.value(h_f).shape() != [1, d] {
        return Err(ModelError::BadInput(format!(
            "h_F must be 1x{d}, got {:?}",
            tape.value(h_f).shape()
        )));
    }
    if tokens.len() + 1 > cfg.max_positions {
        return Err(ModelError::OverLength { len: tokens.len() + 1, max: cfg.max_positions });
    }
    let pre = section.prefix();
    let tok = tape.gather_rows(p.id("encoder.token_emb"), tokens)?;
    let rows = tape.concat_rows(&[h_f, tok])?;
    let positions: Vec<usize> = (0..tokens.len() + 1).collect();
    let pos = tape.gather_rows(p.id(&format!("{pre}.pos_emb")), &positions)?;
    let sum = tape.add(rows, pos)?;
    let mut x = layer_norm(tape, p, &format!("{pre}.emb_ln"), sum)?;
    for l in 0..cfg.shallow_decoder_layers {
        let prefix = format!("{pre}.layer{l}");
        let attn = multi_head_attention(
            tape,
            p,
            &format!("{prefix}.attn"),
            cfg,
            x,
            x,
            None,
            AttnScale::HeadDim,
        )?;
        let res1 = tape.add(x, attn.out)?;
        let x1 = layer_norm(tape, p, &format!("{prefix}.ln1"), res1)?;
        let ffn = feed_forward(tape, p, &format!("{prefix}.ffn"), x1)?;
        let res2 = tape.add(x1, ffn)?;
        x = layer_norm(tape, p, &format!("{prefix}.ln2"), res2)?;
    }
    output_logits(tape, p, cfg, pre, x, false)
}

/// Cross-attention probabilities recorded during one deep decode:
/// `probs[layer * n_heads + head]` is a [tgt_len, src_len] row-stochastic
/// matrix.
#[derive(Clone, Debug)]
pub struct AttentionTrace<T> {
    pub layers: usize,
    pub heads: usize,
    pub tgt_len: usize,
    pub src_len: usize,
    probs: Vec<Tensor<T>>,
}

impl<T: Real> AttentionTrace<T> {
    pub fn prob(&self, layer: usize, head: usize) -> &Tensor<T> {
        &self.probs[layer * self.heads + head]
    }

    /// Head-averaged attention matrix of one layer, in f64.
    pub fn head_mean(&self, layer: usize) -> Tensor<f64> {
        let mut acc = Tensor::<f64>::zeros(&[self.tgt_len, self.src_len]);
        for h in 0..self.heads {
            let m = self.prob(layer, h);
            for (a, &v) in acc.data_mut().iter_mut().zip(m.data().iter()) {
                *a += v.to64();
            }
        }
        let inv = 1.0 / self.heads as f64;
        for a in acc.data_mut().iter_mut() {
            *a *= inv;
        }
        acc
    }

    /// Keep only the first `n` target rows (used to drop the row that
    /// predicts [EOS] before alignment).
    pub fn truncate_targets(&self, n: usize) -> AttentionTrace<T> {
        assert!(n <= self.tgt_len);
        let probs = self
            .probs
            .iter()
            .map(|m| {
                Tensor::from_vec(&[n, self.src_len], m.data()[..n * self.src_len].to_vec())
                    .expect("prefix rows")
            })
            .collect();
        AttentionTrace { layers: self.layers, heads: self.heads, tgt_len: n, src_len: self.src_len, probs }
    }
}

/// Teacher-forced causal decode of `target` against detached encoder states.
/// Input is `[BOS], target_1..target_{J-1}`; the logits at position j predict
/// `target[j]`, and trace row j is the cross-attention of that prediction
/// step. K and V are both `source`: the keys and values are the same
/// encoder output matrix.
pub fn decode_deep<T: Real>(
    tape: &mut Tape<T>,
    cfg: &ModelConfig,
    p: &ParamNodes,
    target: &[usize],
    source: NodeId,
) -> Result<(NodeId, AttentionTrace<T>), ModelError> {
    if target.is_empty() {
        return Err(ModelError::EmptyTarget);
    }
    if tape.needs_grad(source) {
        return Err(ModelError::SourceNotDetached);
    }
    let src = tape.value(source);
    if !src.is_matrix() || src.cols() != cfg.d_emb || src.rows() == 0 {
        return Err(ModelError::BadInput(format!(
            "source states must be I x {}, got {:?}",
            cfg.d_emb,
            src.shape()
        )));
    }
    if target.len() > cfg.max_positions {
        return Err(ModelError::OverLength { len: target.len(), max: cfg.max_positions });
    }
    let j = target.len();
    let src_len = src.rows();

    let mut input = Vec::with_capacity(j);
    input.push(BOS);
    input.extend_from_slice(&target[..j - 1]);

    let mut x = embed_tokens(tape, p, "deep.token_emb", "deep.pos_emb", "deep.emb_ln", &input)?;
    let causal = causal_mask::<T>(j);
    let mut probs = Vec::with_capacity(cfg.deep_decoder_layers * cfg.n_heads);
    for l in 0..cfg.deep_decoder_layers {
        let prefix = format!("deep.layer{l}");
        let self_attn = multi_head_attention(
            tape,
            p,
            &format!("{prefix}.self"),
            cfg,
            x,
            x,
            Some(&causal),
            AttnScale::HeadDim,
        )?;
        let res1 = tape.add(x, self_attn.out)?;
        let x1 = layer_norm(tape, p, &format!("{prefix}.ln1"), res1)?;
        let cross = multi_head_attention(
            tape,
            p,
            &format!("{prefix}.cross"),
            cfg,
            x1,
            source,
            None,
            AttnScale::ModelDim,
        )?;
        for &pr in &cross.head_probs {
            probs.push(tape.value(pr).clone());
        }
        let res2 = tape.add(x1, cross.out)?;
        let x2 = layer_norm(tape, p, &format!("{prefix}.ln2"), res2)?;
        let ffn = feed_forward(tape, p, &format!("{prefix}.ffn"), x2)?;
        let res3 = tape.add(x2, ffn)?;
        x = layer_norm(tape, p, &format!("{prefix}.ln3"), res3)?;
    }
    let logits = output_logits(tape, p, cfg, "deep", x, true)?;
    let trace = AttentionTrace {
        layers: cfg.deep_decoder_layers,
        heads: cfg.n_heads,
        tgt_len: j,
        src_len,
        probs,
    };
    Ok((logits, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{encode, Model};
    use crate::corpus::vocab::CLS;
    use crate::tensor::{Rng, Tape};

    fn toy_config() -> ModelConfig {
        ModelConfig {
            d_emb: 16,
            n_heads: 2,
            encoder_layers: 1,
            shallow_decoder_layers: 1,
            deep_decoder_layers: 3,
            ffn_dim: 32,
            vocab_size: 40,
            max_positions: 24,
            tie_weights: true,
        }
    }

    #[test]
    fn shallow_logits_cover_position_zero() {
        let model = Model::<f64>::init(toy_config(), 1).unwrap();
        let mut tape = Tape::new();
        let p = model.bind(&mut tape, false);
        let mut rng = Rng::new(2);
        let h_f = tape.constant(Tensor::randn(&[1, 16], 1.0, &mut rng));
        let logits =
            decode_shallow(&mut tape, &model.config, &p, ShallowSection::Reasoning, h_f, &[7, 8, 9])
                .unwrap();
        // n + 1 rows: position 0 exists (it is simply never supervised).
        assert_eq!(tape.value(logits).shape(), &[4, 40]);
    }

    #[test]
    fn shallow_empty_section_gives_one_row() {
        let model = Model::<f64>::init(toy_config(), 1).unwrap();
        let mut tape = Tape::new();
        let p = model.bind(&mut tape, false);
        let h_f = tape.constant(Tensor::zeros(&[1, 16]));
        let logits =
            decode_shallow(&mut tape, &model.config, &p, ShallowSection::Decision, h_f, &[]).unwrap();
        assert_eq!(tape.value(logits).shape(), &[1, 40]);
    }

    #[test]
    fn zeroing_h_f_changes_masked_position_logits() {
        let model = Model::<f64>::init(toy_config(), 3).unwrap();
        let tokens = [7, crate::corpus::vocab::MASK, 9];
        let run = |zero: bool| {
            let mut tape = Tape::new();
            let p = model.bind(&mut tape, false);
            let enc = encode(&mut tape, &model.config, &p, &[CLS, 11, 12, 13], None).unwrap();
            let h_f = if zero {
                tape.constant(Tensor::zeros(&[1, 16]))
            } else {
                enc.h_f
            };
            let logits =
                decode_shallow(&mut tape, &model.config, &p, ShallowSection::Reasoning, h_f, &tokens)
                    .unwrap();
            tape.value(logits).row_slice(2).to_vec() // masked position 1 -> row 2
        };
        assert_ne!(run(false), run(true), "bottleneck carries no information");
    }

    #[test]
    fn deep_trace_shape_and_row_sums() {
        let model = Model::<f64>::init(toy_config(), 4).unwrap();
        let mut tape = Tape::new();
        let p = model.bind(&mut tape, false);
        let mut rng = Rng::new(9);
        let source = tape.constant(Tensor::randn(&[5, 16], 1.0, &mut rng));
        let (logits, trace) =
            decode_deep(&mut tape, &model.config, &p, &[7, 8, 9, 10], source).unwrap();
        assert_eq!(tape.value(logits).shape(), &[4, 40]);
        assert_eq!((trace.layers, trace.heads, trace.tgt_len, trace.src_len), (3, 2, 4, 5));
        for l in 0..trace.layers {
            for h in 0..trace.heads {
                let m = trace.prob(l, h);
                for r in 0..m.rows() {
                    let s: f64 = m.row_slice(r).iter().sum();
                    assert!((s - 1.0).abs() < 1e-5, "row sum {s}");
                }
            }
        }
    }

    #[test]
    fn causality_later_target_permutation_leaves_earlier_logits() {
        let model = Model::<f64>::init(toy_config(), 5).unwrap();
        let mut rng = Rng::new(13);
        let source_t = Tensor::randn(&[6, 16], 1.0, &mut rng);
        let run = |target: &[usize]| {
            let mut tape = Tape::new();
            let p = model.bind(&mut tape, false);
            let source = tape.constant(source_t.clone());
            let (logits, _) = decode_deep(&mut tape, &model.config, &p, target, source).unwrap();
            tape.value(logits).clone()
        };
        let a = run(&[7, 8, 9, 10, 11]);
        let b = run(&[7, 8, 9, 11, 10]); // targets at positions 3,4 swapped
        // Shifted inputs agree through index 3 ([BOS],7,8,9), so logits at
        // positions 0..=3 must match; position 4 consumes a changed input.
        for pos in 0..4 {
            assert_eq!(a.row_slice(pos), b.row_slice(pos), "position {pos} changed");
        }
        assert_ne!(a.row_slice(4), b.row_slice(4));
    }

    #[test]
    fn deep_rejects_live_source_and_empty_target() {
        let model = Model::<f64>::init(toy_config(), 6).unwrap();
        let mut tape = Tape::new();
        let p = model.bind(&mut tape, true);
        let enc = encode(&mut tape, &model.config, &p, &[CLS, 7, 8], None).unwrap();
        assert!(matches!(
            decode_deep(&mut tape, &model.config, &p, &[9], enc.h_tokens),
            Err(ModelError::SourceNotDetached)
        ));
        let detached = tape.detach(enc.h_tokens);
        assert!(matches!(
            decode_deep(&mut tape, &model.config, &p, &[], detached),
            Err(ModelError::EmptyTarget)
        ));
    }

    #[test]
    fn deep_decode_is_bitwise_repeatable() {
        let model = Model::<f64>::init(toy_config(), 7).unwrap();
        let mut rng = Rng::new(21);
        let source_t = Tensor::<f64>::randn(&[3, 16], 1.0, &mut rng);
        let run = || {
            let mut tape = Tape::new();
            let p = model.bind(&mut tape, false);
            let source = tape.constant(source_t.clone());
            let (logits, trace) = decode_deep(&mut tape, &model.config, &p, &[7, 8], source).unwrap();
            (tape.value(logits).clone(), trace)
        };
        let (la, ta) = run();
        let (lb, tb) = run();
        assert_eq!(la.data(), lb.data());
        for l in 0..ta.layers {
            for h in 0..ta.heads {
                assert_eq!(ta.prob(l, h).data(), tb.prob(l, h).data());
            }
        }
    }

    #[test]
    fn truncate_targets_drops_rows() {
        let model = Model::<f64>::init(toy_config(), 8).unwrap();
        let mut tape = Tape::new();
        let p = model.bind(&mut tape, false);
        let source = tape.constant(Tensor::zeros(&[4, 16]));
        let (_, trace) = decode_deep(&mut tape, &model.config, &p, &[7, 8, 9], source).unwrap();
        let cut = trace.truncate_targets(2);
        assert_eq!(cut.tgt_len, 2);
        assert_eq!(cut.prob(0, 0).shape(), &[2, 4]);
    }
}
