//! Legal case corpus: structural parsing, tokenization, a synthetic corpus
//! generator with planted key facts, and the graded relevance oracle.

pub mod io;
pub mod parse;
pub mod synth;
pub mod vocab;

pub use parse::{parse_case, SectionRules};
pub use synth::{generate_corpus, GeneratedCorpus, SyntheticSpec};
pub use vocab::Vocabulary;

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("missing section marker: {0}")]
    MissingSection(String),
    #[error("section markers out of order (expected fact < reasoning < decision)")]
    MarkersOutOfOrder,
    #[error("section {0} is empty after parsing")]
    EmptySection(String),
    #[error("relevance requires gold labels on both cases")]
    MissingLabels,
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("io: {0}")]
    Io(String),
    #[error("record {line}: {msg}")]
    Record { line: usize, msg: String },
}

/// A tokenized case: Fact, Reasoning and Decision sections, with synthetic
/// ground truth (key-fact mask and labels) when the generator produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct LegalCase {
    pub id: String,
    pub fact: Vec<usize>,
    pub reasoning: Vec<usize>,
    pub decision: Vec<usize>,
    pub gold_key_mask: Option<Vec<bool>>,
    pub gold_labels: Option<CaseLabels>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseLabels {
    pub crime: String,
    pub amount: String,
    pub factors: BTreeSet<String>,
}

/// Graded relevance between two labeled cases:
/// 3 = crime, amount bucket and factor set all match; 2 = crime and amount
/// bucket match; 1 = only crime matches; 0 otherwise.
pub fn relevance(a: &LegalCase, b: &LegalCase) -> Result<u8, CorpusError> {
    let (la, lb) = match (&a.gold_labels, &b.gold_labels) {
        (Some(la), Some(lb)) => (la, lb),
        _ => return Err(CorpusError::MissingLabels),
    };
    if la.crime != lb.crime {
        return Ok(0);
    }
    if la.amount != lb.amount {
        return Ok(1);
    }
    if la.factors != lb.factors {
        return Ok(2);
    }
    Ok(3)
}

/// Relevance triples (query id, doc id, grade > 0) for a benchmark split.
pub fn build_qrels(
    queries: &[LegalCase],
    docs: &[LegalCase],
) -> Result<Vec<(String, String, u8)>, CorpusError> {
    let mut out = Vec::new();
    for q in queries {
        for d in docs {
            let g = relevance(q, d)?;
            if g > 0 {
                out.push((q.id.clone(), d.id.clone(), g));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labeled(crime: &str, amount: &str, factors: &[&str]) -> LegalCase {
        LegalCase {
            id: "t".into(),
            fact: vec![6],
            reasoning: vec![6],
            decision: vec![6],
            gold_key_mask: None,
            gold_labels: Some(CaseLabels {
                crime: crime.into(),
                amount: amount.into(),
                factors: factors.iter().map(|s| s.to_string()).collect(),
            }),
        }
    }

    #[test]
    fn identical_labels_grade_3() {
        let a = labeled("theft", "large", &["surrender"]);
        assert_eq!(relevance(&a, &a).unwrap(), 3);
    }

    #[test]
    fn same_crime_different_bucket_and_factors_grade_1() {
        let a = labeled("theft", "large", &["surrender"]);
        let b = labeled("theft", "small", &["recidivism"]);
        assert_eq!(relevance(&a, &b).unwrap(), 1);
    }

    #[test]
    fn same_crime_same_bucket_grade_2() {
        let a = labeled("theft", "large", &["surrender"]);
        let b = labeled("theft", "large", &[]);
        assert_eq!(relevance(&a, &b).unwrap(), 2);
    }

    #[test]
    fn different_crime_grade_0_regardless_of_text() {
        // Same fact text, different crime label: textual similarity is not relevance.
        let mut a = labeled("theft", "large", &["surrender"]);
        let mut b = labeled("robbery", "large", &["surrender"]);
        a.fact = vec![10, 11, 12];
        b.fact = vec![10, 11, 12];
        assert_eq!(relevance(&a, &b).unwrap(), 0);
    }

    #[test]
    fn missing_labels_is_an_error() {
        let a = labeled("theft", "large", &[]);
        let mut b = a.clone();
        b.gold_labels = None;
        assert!(matches!(relevance(&a, &b), Err(CorpusError::MissingLabels)));
    }

    #[test]
    fn relevance_is_symmetric() {
        let combos = [
            ("theft", "large", vec!["surrender"]),
            ("theft", "small", vec![]),
            ("robbery", "large", vec!["surrender", "recidivism"]),
        ];
        for (c1, a1, f1) in &combos {
            for (c2, a2, f2) in &combos {
                let x = labeled(c1, a1, &f1.iter().map(|s| &**s).collect::<Vec<_>>());
                let y = labeled(c2, a2, &f2.iter().map(|s| &**s).collect::<Vec<_>>());
                assert_eq!(relevance(&x, &y).unwrap(), relevance(&y, &x).unwrap());
            }
        }
    }
}
