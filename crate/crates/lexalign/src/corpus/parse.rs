//! Section-marker parsing of raw case text into Fact/Reasoning/Decision.

use super::vocab::Vocabulary;
use super::{CorpusError, LegalCase};

/// Plain-string section markers. The first occurrence of each marker wins;
/// duplicates produce a warning.
#[derive(Clone, Debug)]
pub struct SectionRules {
    pub fact: String,
    pub reasoning: String,
    pub decision: String,
}

impl Default for SectionRules {
    fn default() -> Self {
        SectionRules {
            fact: "FACT:".into(),
            reasoning: "REASONING:".into(),
            decision: "DECISION:".into(),
        }
    }
}

fn find_marker(raw: &str, marker: &str, name: &str, warnings: &mut Vec<String>) -> Result<usize, CorpusError> {
    let first = raw
        .find(marker)
        .ok_or_else(|| CorpusError::MissingSection(name.to_string()))?;
    if raw[first + marker.len()..].contains(marker) {
        warnings.push(format!("duplicate {name} marker; first occurrence used"));
    }
    Ok(first)
}

/// Split raw text at the three markers and tokenize each section.
/// Returns the case plus any parse warnings.
pub fn parse_case(
    raw: &str,
    rules: &SectionRules,
    vocab: &Vocabulary,
    id: &str,
) -> Result<(LegalCase, Vec<String>), CorpusError> {
    let mut warnings = Vec::new();
    let f = find_marker(raw, &rules.fact, "FACT", &mut warnings)?;
    let r = find_marker(raw, &rules.reasoning, "REASONING", &mut warnings)?;
    let d = find_marker(raw, &rules.decision, "DECISION", &mut warnings)?;
    if !(f < r && r < d) {
        return Err(CorpusError::MarkersOutOfOrder);
    }
    let fact_text = &raw[f + rules.fact.len()..r];
    let reasoning_text = &raw[r + rules.reasoning.len()..d];
    let decision_text = &raw[d + rules.decision.len()..];

    let fact = vocab.tokenize(fact_text);
    let reasoning = vocab.tokenize(reasoning_text);
    let decision = vocab.tokenize(decision_text);
    for (name, toks) in [("FACT", &fact), ("REASONING", &reasoning), ("DECISION", &decision)] {
        if toks.is_empty() {
            return Err(CorpusError::EmptySection(name.to_string()));
        }
    }
    Ok((
        LegalCase {
            id: id.to_string(),
            fact,
            reasoning,
            decision,
            gold_key_mask: None,
            gold_labels: None,
        },
        warnings,
    ))
}
