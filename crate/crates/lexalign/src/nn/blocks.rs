//! Attention, feed-forward and residual blocks assembled on the tape.

use super::{ModelConfig, ModelError, LN_EPS, MASK_NEG};
use crate::tensor::params::ParamNodes;
use crate::tensor::tape::{NodeId, Tape};
use crate::tensor::{Real, Tensor};

/// Which constant scales the attention logits. Self-attention follows the
/// usual per-head 1/sqrt(d_head); the deep decoder's cross-attention uses
/// 1/sqrt(d_emb), matching the alignment formulation it is traced for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttnScale {
    HeadDim,
    ModelDim,
}

/// Additive causal mask: position i may attend to j <= i.
pub fn causal_mask<T: Real>(n: usize) -> Tensor<T> {
    let mut m = Tensor::zeros(&[n, n]);
    for i in 0..n {
        for j in (i + 1)..n {
            m.set(i, j, T::from64(MASK_NEG));
        }
    }
    m
}

/// Additive mask blocking attention *to* padded key positions, for `n_q`
/// query rows. `valid[j] == false` blocks key j for every query.
pub fn pad_key_mask<T: Real>(n_q: usize, valid: &[bool]) -> Tensor<T> {
    let n_k = valid.len();
    let mut m = Tensor::zeros(&[n_q, n_k]);
    for i in 0..n_q {
        for (j, &ok) in valid.iter().enumerate() {
            if !ok {
                m.set(i, j, T::from64(MASK_NEG));
            }
        }
    }
    m
}

pub fn linear<T: Real>(
    tape: &mut Tape<T>,
    p: &ParamNodes,
    name: &str,
    x: NodeId,
) -> Result<NodeId, ModelError> {
    let xw = tape.matmul(x, p.id(&format!("{name}.w")))?;
    Ok(tape.add_row(xw, p.id(&format!("{name}.b")))?)
}

pub fn layer_norm<T: Real>(
    tape: &mut Tape<T>,
    p: &ParamNodes,
    name: &str,
    x: NodeId,
) -> Result<NodeId, ModelError> {
    Ok(tape.layer_norm(x, p.id(&format!("{name}.gain")), p.id(&format!("{name}.bias")), LN_EPS)?)
}

pub struct AttentionOutput {
    pub out: NodeId,
    /// Per-head attention probability matrices [n_q, n_kv].
    pub head_probs: Vec<NodeId>,
}

/// Multi-head attention with per-head projections. `kv` doubles as both the
/// key and the value input (they are always the same matrix here).
pub fn multi_head_attention<T: Real>(
    tape: &mut Tape<T>,
    p: &ParamNodes,
    name: &str,
    cfg: &ModelConfig,
    q_in: NodeId,
    kv_in: NodeId,
    mask: Option<&Tensor<T>>,
    scale: AttnScale,
) -> Result<AttentionOutput, ModelError> {
    let factor = match scale {
        AttnScale::HeadDim => 1.0 / (cfg.head_dim() as f64).sqrt(),
        AttnScale::ModelDim => 1.0 / (cfg.d_emb as f64).sqrt(),
    };
    let mask_node = mask.map(|m| tape.constant(m.clone()));
    let mut contexts = Vec::with_capacity(cfg.n_heads);
    let mut head_probs = Vec::with_capacity(cfg.n_heads);
    for h in 0..cfg.n_heads {
        let q = linear(tape, p, &format!("{name}.head{h}.q"), q_in)?;
        let k = linear(tape, p, &format!("{name}.head{h}.k"), kv_in)?;
        let v = linear(tape, p, &format!("{name}.head{h}.v"), kv_in)?;
        let scores = tape.matmul_nt(q, k)?;
        let mut scaled = tape.scale(scores, factor);
        if let Some(m) = mask_node {
            scaled = tape.add(scaled, m)?;
        }
        let probs = tape.softmax_rows(scaled)?;
        head_probs.push(probs);
        contexts.push(tape.matmul(probs, v)?);
    }
    let cat = tape.concat_cols(&contexts)?;
    let out = linear(tape, p, &format!("{name}.out"), cat)?;
    Ok(AttentionOutput { out, head_probs })
}

pub fn feed_forward<T: Real>(
    tape: &mut Tape<T>,
    p: &ParamNodes,
    name: &str,
    x: NodeId,
) -> Result<NodeId, ModelError> {
    let lifted = linear(tape, p, &format!("{name}.lift"), x)?;
    let act = tape.gelu(lifted);
    linear(tape, p, &format!("{name}.drop"), act)
}

/// Token + position embedding followed by the embedding layer norm.
pub fn embed_tokens<T: Real>(
    tape: &mut Tape<T>,
    p: &ParamNodes,
    token_table: &str,
    pos_table: &str,
    ln_name: &str,
    ids: &[usize],
) -> Result<NodeId, ModelError> {
    let tok = tape.gather_rows(p.id(token_table), ids)?;
    let positions: Vec<usize> = (0..ids.len()).collect();
    let pos = tape.gather_rows(p.id(pos_table), &positions)?;
    let sum = tape.add(tok, pos)?;
    layer_norm(tape, p, ln_name, sum)
}

/// Final hidden states to vocabulary logits. With tied weights the projection
/// is the encoder token embedding; `detach_tied` breaks its gradient link
/// (the deep decoder must not train encoder parameters).
pub fn output_logits<T: Real>(
    tape: &mut Tape<T>,
    p: &ParamNodes,
    cfg: &ModelConfig,
    module: &str,
    states: NodeId,
    detach_tied: bool,
) -> Result<NodeId, ModelError> {
    let proj = if cfg.tie_weights {
        let e = p.id("encoder.token_emb");
        if detach_tied {
            tape.detach(e)
        } else {
            e
        }
    } else {
        p.id(&format!("{module}.out_proj"))
    };
    let scores = tape.matmul_nt(states, proj)?;
    Ok(tape.add_row(scores, p.id(&format!("{module}.out_bias")))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Model;

    #[test]
    fn causal_mask_blocks_upper_triangle() {
        let m = causal_mask::<f64>(3);
        assert_eq!(m.at(0, 0), 0.0);
        assert_eq!(m.at(0, 2), MASK_NEG);
        assert_eq!(m.at(2, 1), 0.0);
    }

    #[test]
    fn cross_attention_uses_source_as_both_k_and_v() {
        // Manual oracle: recompute one head with K = V = the source matrix
        // and the model's own projection weights.
        let cfg = ModelConfig {
            d_emb: 8,
            n_heads: 2,
            encoder_layers: 1,
            shallow_decoder_layers: 1,
            deep_decoder_layers: 2,
            ffn_dim: 16,
            vocab_size: 32,
            max_positions: 16,
            tie_weights: true,
        };
        let model = Model::<f64>::init(cfg.clone(), 11).unwrap();
        let mut rng = crate::tensor::Rng::new(2);
        let q_t = Tensor::<f64>::randn(&[2, 8], 1.0, &mut rng);
        let src_t = Tensor::<f64>::randn(&[3, 8], 1.0, &mut rng);

        let mut tape = Tape::new();
        let p = model.bind(&mut tape, false);
        let q_in = tape.constant(q_t.clone());
        let kv = tape.constant(src_t.clone());
        let out = multi_head_attention(
            &mut tape,
            &p,
            "deep.layer0.cross",
            &cfg,
            q_in,
            kv,
            None,
            AttnScale::ModelDim,
        )
        .unwrap();

        let apply = |x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>| {
            let (m, k, n) = (x.rows(), x.cols(), w.cols());
            let mut y = vec![0.0; m * n];
            for i in 0..m {
                for j in 0..n {
                    let mut s = 0.0;
                    for t in 0..k {
                        s += x.at(i, t) * w.at(t, j);
                    }
                    y[i * n + j] = s + b.at(0, j);
                }
            }
            Tensor::from_vec(&[m, n], y).unwrap()
        };
        for h in 0..cfg.n_heads {
            let name = format!("deep.layer0.cross.head{h}");
            let q = apply(&q_t, model.params.get(&format!("{name}.q.w")).unwrap(), model.params.get(&format!("{name}.q.b")).unwrap());
            let k = apply(&src_t, model.params.get(&format!("{name}.k.w")).unwrap(), model.params.get(&format!("{name}.k.b")).unwrap());
            let v = apply(&src_t, model.params.get(&format!("{name}.v.w")).unwrap(), model.params.get(&format!("{name}.v.b")).unwrap());
            let scale = 1.0 / (cfg.d_emb as f64).sqrt();
            for i in 0..2 {
                // softmax(q_i K^T * scale) over the 3 source rows
                let mut scores = [0.0f64; 3];
                for (j, s) in scores.iter_mut().enumerate() {
                    let mut dot = 0.0;
                    for t in 0..k.cols() {
                        dot += q.at(i, t) * k.at(j, t);
                    }
                    *s = dot * scale;
                }
                let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
                let z: f64 = exps.iter().sum();
                let probs = tape.value(out.head_probs[h]);
                for j in 0..3 {
                    assert!((probs.at(i, j) - exps[j] / z).abs() < 1e-12);
                }
                // Context row = probs . V
                for t in 0..v.cols() {
                    let mut ctx = 0.0;
                    for j in 0..3 {
                        ctx += (exps[j] / z) * v.at(j, t);
                    }
                    // out = concat(heads) W_o + b_o; check the pre-projection
                    // context through the recorded probabilities instead.
                    let recomputed: f64 = (0..3)
                        .map(|j| probs.at(i, j) * v.at(j, t))
                        .sum();
                    assert!((ctx - recomputed).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn attention_rows_are_distributions() {
        let cfg = ModelConfig {
            d_emb: 8,
            n_heads: 2,
            encoder_layers: 1,
            shallow_decoder_layers: 1,
            deep_decoder_layers: 2,
            ffn_dim: 16,
            vocab_size: 32,
            max_positions: 16,
            tie_weights: true,
        };
        let model = Model::<f64>::init(cfg.clone(), 3).unwrap();
        let mut tape = Tape::new();
        let p = model.bind(&mut tape, false);
        let mut rng = crate::tensor::Rng::new(5);
        let x = tape.constant(Tensor::randn(&[4, 8], 1.0, &mut rng));
        let out = multi_head_attention(
            &mut tape,
            &p,
            "encoder.layer0.attn",
            &cfg,
            x,
            x,
            None,
            AttnScale::HeadDim,
        )
        .unwrap();
        for probs in out.head_probs {
            let v = tape.value(probs);
            for r in 0..v.rows() {
                let s: f64 = v.row_slice(r).iter().sum();
                assert!((s - 1.0).abs() < 1e-9, "row sum {s}");
            }
        }
    }
}
