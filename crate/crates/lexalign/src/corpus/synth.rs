//! Synthetic corpus generator with planted key facts.
//!
//! Each case draws a crime type, an amount bucket and a factor set. The Fact
//! section interleaves attribute sentences (whose tokens are the planted key
//! facts) with noise sentences drawn from a disjoint vocabulary of names,
//! dates and places. The Reasoning section is a deterministic translation:
//! every attribute maps to a fixed legal phrase, emitted in the order the
//! attribute sentences appear in the Fact. The Decision derives verdict
//! tokens from the crime type and factors. The generator records, per case,
//! which fact span produced which reasoning span, so alignment recovery can
//! be scored exactly.

use super::vocab::Vocabulary;
use super::{CaseLabels, CorpusError, LegalCase};
use crate::tensor::Rng;
use serde::{Deserialize, Serialize};

struct Attribute {
    name: &'static str,
    fact: &'static [&'static str],
    reasoning: &'static [&'static str],
}

const CRIMES: &[(&str, &[&str], &[&str], &str)] = &[
    ("theft", &["stole", "wallet", "covertly"], &["secret", "taking", "property"], "theft"),
    ("robbery", &["snatched", "purse", "forcefully"], &["violent", "seizure", "coercion"], "robbery"),
    ("fraud", &["forged", "invoice", "deceitfully"], &["fraudulent", "misrepresentation", "gain"], "fraud"),
    ("assault", &["punched", "victim", "repeatedly"], &["intentional", "bodily", "harm"], "assault"),
    ("bribery", &["handed", "kickback", "officials"], &["improper", "benefit", "duty"], "bribery"),
    ("smuggling", &["hid", "contraband", "cargo"], &["illicit", "border", "transport"], "smuggling"),
];

const AMOUNTS: &[(&str, &[&str], &[&str])] = &[
    ("small", &["petty", "sum"], &["amount", "minor"]),
    ("large", &["thirty", "thousand"], &["amount", "huge"]),
    ("especially-large", &["three", "million"], &["amount", "especially", "enormous"]),
];

const FACTORS: &[(&str, &[&str], &[&str])] = &[
    ("surrender", &["surrendered", "voluntarily"], &["confession", "initiative"]),
    ("compensation", &["repaid", "damages"], &["restitution", "remorse"]),
    ("recidivism", &["prior", "conviction"], &["repeat", "offender"]),
];

const NAMES: &[&str] = &[
    "zhang", "wang", "liu", "chen", "yang", "huang", "zhao", "wu", "zhou", "xu", "sun", "ma",
    "zhu", "hu", "guo", "lin",
];
const PLACES: &[&str] = &[
    "downtown", "harbor", "station", "market", "village", "suburb", "plaza", "avenue", "bridge",
    "alley", "factory", "warehouse",
];
const MONTHS: &[&str] = &[
    "january", "february", "march", "april", "may", "june", "july", "august", "september",
    "october", "november", "december",
];
const FILLERS: &[&str] = &[
    "visited", "met", "walked", "called", "waited", "lingered", "morning", "evening",
    "afternoon", "midnight", "near", "beside", "together", "briefly", "later", "earlier",
];

const DECISION_GLUE: &[&str] = &["guilty", "of", "lenient", "severe", "penalty"];

const MAX_NOISE_SENTENCES: usize = 5;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_cases: usize,
    /// How many crime types to use (4..=6).
    #[serde(default = "default_crimes")]
    pub crime_types: usize,
    /// How many amount buckets to use (exactly 3 available).
    #[serde(default = "default_amounts")]
    pub amount_buckets: usize,
    /// How many sentencing factors to draw from (1..=3).
    #[serde(default = "default_factors")]
    pub factor_count: usize,
    /// Probability that each of the noise-sentence slots is filled.
    #[serde(default = "default_noise_rate")]
    pub noise_rate: f64,
    pub seed: u64,
}

fn default_crimes() -> usize {
    CRIMES.len()
}
fn default_amounts() -> usize {
    AMOUNTS.len()
}
fn default_factors() -> usize {
    FACTORS.len()
}
fn default_noise_rate() -> f64 {
    0.5
}

impl SyntheticSpec {
    pub fn new(n_cases: usize, seed: u64) -> Self {
        SyntheticSpec {
            n_cases,
            crime_types: default_crimes(),
            amount_buckets: default_amounts(),
            factor_count: default_factors(),
            noise_rate: default_noise_rate(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.n_cases == 0 {
            return Err(CorpusError::InvalidSpec("n_cases must be positive".into()));
        }
        if !(4..=CRIMES.len()).contains(&self.crime_types) {
            return Err(CorpusError::InvalidSpec(format!(
                "crime_types must be in 4..={}",
                CRIMES.len()
            )));
        }
        if self.amount_buckets != 3 {
            return Err(CorpusError::InvalidSpec("amount_buckets must be 3".into()));
        }
        if !(1..=FACTORS.len()).contains(&self.factor_count) {
            return Err(CorpusError::InvalidSpec(format!(
                "factor_count must be in 1..={}",
                FACTORS.len()
            )));
        }
        if !(0.0..=1.0).contains(&self.noise_rate) {
            return Err(CorpusError::InvalidSpec("noise_rate must be in [0,1]".into()));
        }
        Ok(())
    }
}

/// One attribute's contribution to a case: which fact tokens it planted and
/// which reasoning tokens it generated (half-open token ranges).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeSpan {
    pub attribute: String,
    pub fact_start: usize,
    pub fact_len: usize,
    pub reasoning_start: usize,
    pub reasoning_len: usize,
}

pub struct GeneratedCorpus {
    pub cases: Vec<LegalCase>,
    pub vocab: Vocabulary,
    /// Per case, the fact-to-reasoning provenance map.
    pub provenance: Vec<Vec<AttributeSpan>>,
}

/// Every word the attribute templates can plant in a Fact section.
pub fn attribute_fact_words() -> Vec<&'static str> {
    let mut out = Vec::new();
    for (_, fact, _, _) in CRIMES {
        out.extend_from_slice(fact);
    }
    for (_, fact, _) in AMOUNTS {
        out.extend_from_slice(fact);
    }
    for (_, fact, _) in FACTORS {
        out.extend_from_slice(fact);
    }
    out
}

/// Every word the noise templates can produce.
pub fn noise_words() -> Vec<&'static str> {
    let mut out = Vec::new();
    out.extend_from_slice(NAMES);
    out.extend_from_slice(PLACES);
    out.extend_from_slice(MONTHS);
    out.extend_from_slice(FILLERS);
    out
}

fn build_vocab() -> Vocabulary {
    let mut v = Vocabulary::new();
    for (_, fact, reasoning, dec) in CRIMES {
        for w in fact.iter().chain(reasoning.iter()) {
            v.add(w);
        }
        v.add(dec);
    }
    for (_, fact, reasoning) in AMOUNTS {
        for w in fact.iter().chain(reasoning.iter()) {
            v.add(w);
        }
    }
    for (_, fact, reasoning) in FACTORS {
        for w in fact.iter().chain(reasoning.iter()) {
            v.add(w);
        }
    }
    for w in DECISION_GLUE {
        v.add(w);
    }
    for w in noise_words() {
        v.add(w);
    }
    v
}

fn noise_sentence(rng: &mut Rng) -> Vec<&'static str> {
    let name = NAMES[rng.next_below(NAMES.len())];
    match rng.next_below(5) {
        0 => vec![name, "visited", PLACES[rng.next_below(PLACES.len())]],
        1 => vec![name, "met", NAMES[rng.next_below(NAMES.len())]],
        2 => vec![name, "walked", "near", PLACES[rng.next_below(PLACES.len())]],
        3 => vec![name, "waited", MONTHS[rng.next_below(MONTHS.len())], FILLERS[6 + rng.next_below(4)]],
        _ => vec![name, "lingered", PLACES[rng.next_below(PLACES.len())], "briefly"],
    }
}

enum Sentence {
    Attribute(Attribute),
    Noise(Vec<&'static str>),
}

/// Deterministic corpus generation: the same spec yields byte-identical cases.
pub fn generate_corpus(spec: &SyntheticSpec) -> Result<GeneratedCorpus, CorpusError> {
    spec.validate()?;
    let vocab = build_vocab();
    let root = Rng::new(spec.seed);
    let mut cases = Vec::with_capacity(spec.n_cases);
    let mut provenance = Vec::with_capacity(spec.n_cases);

    for idx in 0..spec.n_cases {
        let mut rng = root.derive(&[0x6361_7365, idx as u64]); // "case"
        let crime = &CRIMES[rng.next_below(spec.crime_types)];
        let amount = &AMOUNTS[rng.next_below(spec.amount_buckets)];
        let mut factor_set = Vec::new();
        for f in FACTORS.iter().take(spec.factor_count) {
            if rng.next_f64() < 0.5 {
                factor_set.push(f);
            }
        }

        let mut sentences: Vec<Sentence> = Vec::new();
        sentences.push(Sentence::Attribute(Attribute {
            name: "crime",
            fact: crime.1,
            reasoning: crime.2,
        }));
        sentences.push(Sentence::Attribute(Attribute {
            name: "amount",
            fact: amount.1,
            reasoning: amount.2,
        }));
        for f in &factor_set {
            sentences.push(Sentence::Attribute(Attribute {
                name: "factor",
                fact: f.1,
                reasoning: f.2,
            }));
        }
        for _ in 0..MAX_NOISE_SENTENCES {
            if rng.next_f64() < spec.noise_rate {
                sentences.push(Sentence::Noise(noise_sentence(&mut rng)));
            }
        }
        rng.shuffle(&mut sentences);

        let mut fact = Vec::new();
        let mut key_mask = Vec::new();
        let mut reasoning = Vec::new();
        let mut spans = Vec::new();
        for s in &sentences {
            match s {
                Sentence::Attribute(attr) => {
                    let fact_start = fact.len();
                    for w in attr.fact {
                        fact.push(vocab.id_of(w).expect("attribute word in vocab"));
                        key_mask.push(true);
                    }
                    let reasoning_start = reasoning.len();
                    for w in attr.reasoning {
                        reasoning.push(vocab.id_of(w).expect("reasoning word in vocab"));
                    }
                    spans.push(AttributeSpan {
                        attribute: attr.name.to_string(),
                        fact_start,
                        fact_len: attr.fact.len(),
                        reasoning_start,
                        reasoning_len: attr.reasoning.len(),
                    });
                }
                Sentence::Noise(words) => {
                    for w in words {
                        fact.push(vocab.id_of(w).expect("noise word in vocab"));
                        key_mask.push(false);
                    }
                }
            }
        }
        let mut decision = vec![
            vocab.id_of("guilty").unwrap(),
            vocab.id_of("of").unwrap(),
            vocab.id_of(crime.3).unwrap(),
        ];
        let mitigating = factor_set.iter().any(|f| f.0 == "surrender" || f.0 == "compensation");
        let aggravating = factor_set.iter().any(|f| f.0 == "recidivism");
        if mitigating {
            decision.push(vocab.id_of("lenient").unwrap());
            decision.push(vocab.id_of("penalty").unwrap());
        }
        if aggravating {
            decision.push(vocab.id_of("severe").unwrap());
            decision.push(vocab.id_of("penalty").unwrap());
        }

        let labels = CaseLabels {
            crime: crime.0.to_string(),
            amount: amount.0.to_string(),
            factors: factor_set.iter().map(|f| f.0.to_string()).collect(),
        };
        cases.push(LegalCase {
            id: format!("case-{idx:06}"),
            fact,
            reasoning,
            decision,
            gold_key_mask: Some(key_mask),
            gold_labels: Some(labels),
        });
        provenance.push(spans);
    }
    Ok(GeneratedCorpus { cases, vocab, provenance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn same_seed_is_identical() {
        let spec = SyntheticSpec::new(25, 7);
        let a = generate_corpus(&spec).unwrap();
        let b = generate_corpus(&spec).unwrap();
        assert_eq!(a.cases, b.cases);
        assert_eq!(a.provenance, b.provenance);
    }

    #[test]
    fn different_seed_differs() {
        let a = generate_corpus(&SyntheticSpec::new(10, 1)).unwrap();
        let b = generate_corpus(&SyntheticSpec::new(10, 2)).unwrap();
        assert_ne!(a.cases, b.cases);
    }

    #[test]
    fn noise_and_attribute_vocabularies_disjoint() {
        let attr: HashSet<&str> = attribute_fact_words().into_iter().collect();
        let noise: HashSet<&str> = noise_words().into_iter().collect();
        assert!(attr.intersection(&noise).next().is_none());
    }

    #[test]
    fn key_mask_marks_attribute_tokens_only() {
        let g = generate_corpus(&SyntheticSpec::new(50, 3)).unwrap();
        let noise: HashSet<usize> = noise_words()
            .into_iter()
            .map(|w| g.vocab.id_of(w).unwrap())
            .collect();
        for case in &g.cases {
            let mask = case.gold_key_mask.as_ref().unwrap();
            assert_eq!(mask.len(), case.fact.len());
            assert!(mask.iter().any(|&m| m), "at least one key token per case");
            for (tok, &is_key) in case.fact.iter().zip(mask.iter()) {
                if is_key {
                    assert!(!noise.contains(tok), "gold key mask marked a noise token");
                } else {
                    assert!(noise.contains(tok), "non-key fact token outside noise vocab");
                }
            }
        }
    }

    #[test]
    fn every_reasoning_token_maps_to_exactly_one_attribute() {
        let g = generate_corpus(&SyntheticSpec::new(50, 11)).unwrap();
        for (case, spans) in g.cases.iter().zip(g.provenance.iter()) {
            let mut covered = vec![0usize; case.reasoning.len()];
            for s in spans {
                for i in s.reasoning_start..s.reasoning_start + s.reasoning_len {
                    covered[i] += 1;
                }
            }
            assert!(covered.iter().all(|&c| c == 1), "reasoning coverage {covered:?}");
            // And the fact side of each span is gold-marked.
            let mask = case.gold_key_mask.as_ref().unwrap();
            for s in spans {
                for i in s.fact_start..s.fact_start + s.fact_len {
                    assert!(mask[i]);
                }
            }
        }
    }

    #[test]
    fn sections_nonempty_and_labels_present() {
        let g = generate_corpus(&SyntheticSpec::new(30, 5)).unwrap();
        for case in &g.cases {
            assert!(!case.fact.is_empty());
            assert!(!case.reasoning.is_empty());
            assert!(!case.decision.is_empty());
            assert!(case.gold_labels.is_some());
        }
    }

    #[test]
    fn invalid_spec_rejected() {
        let mut spec = SyntheticSpec::new(10, 1);
        spec.crime_types = 2;
        assert!(matches!(generate_corpus(&spec), Err(CorpusError::InvalidSpec(_))));
    }

    #[test]
    fn vocab_stays_desk_scale() {
        let g = generate_corpus(&SyntheticSpec::new(5, 1)).unwrap();
        assert!(g.vocab.len() <= 512, "vocab {}", g.vocab.len());
    }
}
