//! Structure-aware pre-training for legal case retrieval.
//!
//! The pipeline learns a discriminative `[CLS]` case representation by
//! reconstructing aggressively masked Reasoning/Decision sections through a
//! bottleneck, aligning Fact and Reasoning tokens via deep-decoder
//! cross-attention to find key facts, and contrastively pulling the case
//! vector toward those key facts. A small deterministic tensor/autodiff
//! substrate keeps every training run reproducible bit for bit.

pub mod cli;
pub mod corpus;
pub mod nn;
pub mod tensor;
