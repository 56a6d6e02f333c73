//! Corpus files: one JSON record per line with section text, plus the
//! one-token-per-line vocabulary file.

use super::vocab::Vocabulary;
use super::{CaseLabels, CorpusError, LegalCase};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

#[derive(Serialize, Deserialize)]
struct CaseRecord {
    id: String,
    fact: String,
    reasoning: String,
    decision: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<CaseLabels>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    key_mask: Option<Vec<bool>>,
}

pub fn write_corpus(path: &Path, cases: &[LegalCase], vocab: &Vocabulary) -> Result<(), CorpusError> {
    let file = std::fs::File::create(path)
        .map_err(|e| CorpusError::Io(format!("{}: {e}", path.display())))?;
    let mut w = std::io::BufWriter::new(file);
    for case in cases {
        let rec = CaseRecord {
            id: case.id.clone(),
            fact: vocab.detokenize(&case.fact),
            reasoning: vocab.detokenize(&case.reasoning),
            decision: vocab.detokenize(&case.decision),
            labels: case.gold_labels.clone(),
            key_mask: case.gold_key_mask.clone(),
        };
        let line = serde_json::to_string(&rec)
            .map_err(|e| CorpusError::Io(format!("serialize {}: {e}", case.id)))?;
        writeln!(w, "{line}").map_err(|e| CorpusError::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| CorpusError::Io(e.to_string()))?;
    Ok(())
}

pub fn read_corpus(path: &Path, vocab: &Vocabulary) -> Result<Vec<LegalCase>, CorpusError> {
    let file = std::fs::File::open(path)
        .map_err(|e| CorpusError::Io(format!("{}: {e}", path.display())))?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| CorpusError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CaseRecord = serde_json::from_str(&line)
            .map_err(|e| CorpusError::Record { line: i + 1, msg: e.to_string() })?;
        let fact = vocab.tokenize(&rec.fact);
        if let Some(mask) = &rec.key_mask {
            if mask.len() != fact.len() {
                return Err(CorpusError::Record {
                    line: i + 1,
                    msg: format!("key_mask length {} != fact length {}", mask.len(), fact.len()),
                });
            }
        }
        out.push(LegalCase {
            id: rec.id,
            fact,
            reasoning: vocab.tokenize(&rec.reasoning),
            decision: vocab.tokenize(&rec.decision),
            gold_key_mask: rec.key_mask,
            gold_labels: rec.labels,
        });
    }
    Ok(out)
}
