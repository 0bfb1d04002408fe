//! Corpus ingestion (JSONL), document concatenation and the synthetic
//! multi-document generator.
//!
//! One record per line:
//!
//! ```text
//! {"documents":["first doc ...","second doc ..."],"summary":"...","id":"r17"}
//! ```
//!
//! `id` is optional and defaults to the 1-based line number.

use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coverage_reward::DocumentSet;
use crate::error::{Error, Result};
use crate::policy::InputBag;
use crate::text_metrics::{tokenize, Origin, TokenSeq};
use crate::vocab::{TokenId, Vocab, END_SEP};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub documents: Vec<String>,
    pub summary: String,
    pub id: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    documents: Vec<String>,
    summary: String,
    #[serde(default)]
    id: Option<String>,
}

/// Why a line was skipped.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Clone, Debug, Default)]
pub struct LoadReport {
    pub records: Vec<CorpusRecord>,
    /// One entry per skipped line.
    pub diagnostics: Vec<Diagnostic>,
}

impl LoadReport {
    pub fn is_partial(&self) -> bool {
        !self.diagnostics.is_empty()
    }
}

fn parse_line(line: &str, number: usize) -> std::result::Result<CorpusRecord, String> {
    if line.trim().is_empty() {
        return Err("blank line".into());
    }
    let raw: RawRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
    if raw.summary.trim().is_empty() {
        return Err("empty summary".into());
    }
    if raw.documents.iter().all(|d| d.trim().is_empty()) {
        return Err("no nonempty document".into());
    }
    Ok(CorpusRecord {
        documents: raw.documents,
        summary: raw.summary,
        id: raw.id.unwrap_or_else(|| number.to_string()),
    })
}

/// Parse JSONL text; every rejected line yields exactly one diagnostic.
pub fn parse_corpus(text: &str) -> LoadReport {
    let mut report = LoadReport::default();
    for (i, line) in text.lines().enumerate() {
        match parse_line(line, i + 1) {
            Ok(r) => report.records.push(r),
            Err(message) => report.diagnostics.push(Diagnostic { line: i + 1, message }),
        }
    }
    report
}

/// Load a corpus file. Fails when the file is unreadable or holds no valid record.
pub fn load_corpus(path: &Path) -> Result<LoadReport> {
    let text = std::fs::read_to_string(path)?;
    let report = parse_corpus(&text);
    for d in &report.diagnostics {
        log::warn!("{}: {d}", path.display());
    }
    if report.records.is_empty() {
        return Err(Error::NoValidRecords { path: path.display().to_string(), dropped: report.diagnostics.len() });
    }
    Ok(report)
}

pub fn corpus_to_string(records: &[CorpusRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records serialise"));
        out.push('\n');
    }
    out
}

pub fn save_corpus(path: &Path, records: &[CorpusRecord]) -> Result<()> {
    std::fs::write(path, corpus_to_string(records))?;
    Ok(())
}

/// Documents only, for scoring predictions: `{"documents":[...]}` per line
/// (`summary` and `id` are accepted and ignored).
pub fn load_document_sets(path: &Path) -> Result<Vec<Vec<String>>> {
    #[derive(Deserialize)]
    struct Docs {
        documents: Vec<String>,
    }
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let docs: Docs =
            serde_json::from_str(line).map_err(|e| Error::Config(format!("{} line {}: {e}", path.display(), i + 1)))?;
        out.push(docs.documents);
    }
    Ok(out)
}

/// Tokenised documents joined by the `[END]` separator and truncated to
/// `max_input_len` tokens.
pub fn concat_documents(record: &CorpusRecord, vocab: &Vocab, max_input_len: usize) -> TokenSeq {
    let mut tokens: Vec<TokenId> = Vec::new();
    for (i, doc) in record.documents.iter().enumerate() {
        if i > 0 {
            tokens.push(END_SEP);
        }
        tokens.extend(tokenize(doc, vocab, Origin::Document).tokens);
    }
    tokens.truncate(max_input_len);
    TokenSeq::new(tokens, Origin::Document)
}

/// A record tokenised for training and evaluation.
#[derive(Clone, Debug)]
pub struct PreparedRecord {
    pub id: String,
    pub reference: Vec<TokenId>,
    /// Nonempty documents, in their original order.
    pub docs: DocumentSet,
    pub input: TokenSeq,
    pub bag: InputBag,
}

pub fn prepare_record(record: &CorpusRecord, vocab: &Vocab, max_input_len: usize) -> Result<PreparedRecord> {
    let reference = tokenize(&record.summary, vocab, Origin::Reference).tokens;
    if reference.is_empty() {
        return Err(Error::EmptyReference);
    }
    let documents: Vec<TokenSeq> =
        record.documents.iter().map(|d| tokenize(d, vocab, Origin::Document)).filter(|d| !d.is_empty()).collect();
    let docs = DocumentSet::new(documents, Some(END_SEP))?;
    let input = concat_documents(record, vocab, max_input_len);
    let bag = InputBag::from_tokens(&input, vocab.len())?;
    Ok(PreparedRecord { id: record.id.clone(), reference, docs, input, bag })
}

/// Settings for [`synthetic_corpus`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub records: usize,
    pub min_docs: usize,
    pub max_docs: usize,
    /// Probability that the shared phrase is appended to the reference.
    pub shared_in_reference: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec { records: 200, min_docs: 2, max_docs: 10, shared_in_reference: 0.25, seed: 0 }
    }
}

const PHRASES: [[&str; 3]; 8] = [
    ["river", "bank", "flood"],
    ["city", "council", "vote"],
    ["oil", "price", "rise"],
    ["team", "wins", "final"],
    ["storm", "hits", "coast"],
    ["court", "rules", "appeal"],
    ["market", "stocks", "fall"],
    ["school", "opens", "doors"],
];

const FILLERS: [&str; 8] = ["the", "a", "on", "and", "in", "with", "after", "today"];

/// Multi-document records built from three-word phrases.
///
/// Every record picks one phrase shared by all of its documents and two
/// headline phrases that appear (twice) only in the first document; the
/// remaining phrases are scattered one per document as distractors, and
/// filler words pad every document. The reference is the two headline
/// phrases, sometimes followed by the shared one. A reference-only policy
/// therefore covers the first document and little else, while a summary
/// that also mentions the shared phrase covers all documents more evenly.
pub fn synthetic_corpus(spec: &SyntheticSpec) -> Result<Vec<CorpusRecord>> {
    if spec.min_docs == 0 || spec.min_docs > spec.max_docs {
        return Err(Error::Config(format!("document range {}..={} is empty", spec.min_docs, spec.max_docs)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Vec::with_capacity(spec.records);
    for i in 0..spec.records {
        let n = rng.random_range(spec.min_docs..=spec.max_docs);
        let mut order: Vec<usize> = (0..PHRASES.len()).collect();
        order.shuffle(&mut rng);
        let (shared, heads, distractors) = (order[0], [order[1], order[2]], &order[3..]);

        let mut units: Vec<Vec<Vec<&str>>> = vec![Vec::new(); n];
        for unit in units.iter_mut() {
            unit.push(PHRASES[shared].to_vec());
        }
        for &h in &heads {
            units[0].push(PHRASES[h].to_vec());
            units[0].push(PHRASES[h].to_vec());
        }
        for &d in distractors {
            let slot = if n > 1 { rng.random_range(1..n) } else { 0 };
            units[slot].push(PHRASES[d].to_vec());
        }
        for unit in units.iter_mut() {
            for _ in 0..rng.random_range(3..=6) {
                unit.push(vec![FILLERS[rng.random_range(0..FILLERS.len())]]);
            }
        }
        for f in FILLERS {
            if !units.iter().flatten().any(|u| u == &[f]) {
                let slot = rng.random_range(0..n);
                units[slot].push(vec![f]);
            }
        }
        let documents = units
            .into_iter()
            .map(|mut unit| {
                unit.shuffle(&mut rng);
                unit.concat().join(" ")
            })
            .collect();
        let mut summary: Vec<&str> = heads.iter().flat_map(|&h| PHRASES[h]).collect();
        if rng.random_bool(spec.shared_in_reference) {
            summary.extend(PHRASES[shared]);
        }
        out.push(CorpusRecord { documents, summary: summary.join(" "), id: format!("syn{i}") });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_line_parses() {
        let r = parse_corpus("{\"documents\":[\"a b\"],\"summary\":\"a\"}\n");
        assert_eq!(r.records.len(), 1);
        assert_eq!(r.records[0].id, "1");
        assert!(!r.is_partial());
    }

    #[test]
    fn malformed_lines_are_reported_with_numbers() {
        let text = "{\"documents\":[\"a\"],\"summary\":\"a\",\"id\":\"x\"}\n\
                    {\"documents\":[\"a\"]}\n\
                    \n\
                    not json\n\
                    {\"documents\":[\"\"],\"summary\":\"a\"}\n\
                    {\"documents\":[\"b\"],\"summary\":\"  \"}\n";
        let r = parse_corpus(text);
        assert_eq!(r.records.len(), 1);
        let lines: Vec<usize> = r.diagnostics.iter().map(|d| d.line).collect();
        assert_eq!(lines, vec![2, 3, 4, 5, 6]);
        assert!(r.diagnostics[0].message.contains("summary"));
        assert_eq!(r.records.len() + r.diagnostics.len(), text.lines().count());
    }

    #[test]
    fn zero_valid_records_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(&path, "{}\n[]\n").unwrap();
        match load_corpus(&path) {
            Err(Error::NoValidRecords { dropped, .. }) => assert_eq!(dropped, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(load_corpus(&dir.path().join("missing.jsonl")).is_err());
    }

    #[test]
    fn save_then_load_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let records = synthetic_corpus(&SyntheticSpec { records: 5, ..Default::default() }).unwrap();
        save_corpus(&path, &records).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(load_corpus(&path).unwrap().records, records);
        assert_eq!(corpus_to_string(&load_corpus(&path).unwrap().records), text);
    }

    #[test]
    fn concatenation_separators_and_truncation() {
        let rec = |docs: &[&str]| CorpusRecord {
            documents: docs.iter().map(|s| s.to_string()).collect(),
            summary: "a".into(),
            id: "0".into(),
        };
        let vocab = Vocab::build(["a b c d"], 16);
        let two = concat_documents(&rec(&["a b", "c d"]), &vocab, 100);
        assert_eq!(two.iter().filter(|&&t| t == END_SEP).count(), 1);
        assert_eq!(two.len(), 5);
        assert_eq!(concat_documents(&rec(&["a b", "c d"]), &vocab, 3).len(), 3);
        let one = concat_documents(&rec(&["a b c"]), &vocab, 100);
        assert!(!one.contains(&END_SEP));
    }

    #[test]
    fn synthetic_records_have_coverage_structure() {
        let spec = SyntheticSpec { records: 50, seed: 3, ..Default::default() };
        let recs = synthetic_corpus(&spec).unwrap();
        assert_eq!(recs, synthetic_corpus(&spec).unwrap());
        for r in &recs {
            assert!((2..=10).contains(&r.documents.len()));
            let words: Vec<&str> = r.summary.split(' ').collect();
            assert!(words.len() == 6 || words.len() == 9);
            // the headline phrases live in the first document only
            for w in &words[..6] {
                assert!(r.documents[0].split(' ').any(|x| x == *w));
                assert!(r.documents[1..].iter().all(|d| !d.split(' ').any(|x| x == *w)));
            }
            let all: Vec<&str> = r.documents.iter().flat_map(|d| d.split(' ')).collect();
            for f in FILLERS.iter().chain(PHRASES.iter().flatten()) {
                assert!(all.contains(f), "{f} missing from {}", r.id);
            }
        }
        let vocab = Vocab::build(recs.iter().flat_map(|r| r.documents.iter().map(String::as_str)), 64);
        let prepared = prepare_record(&recs[0], &vocab, 512).unwrap();
        assert_eq!(prepared.docs.len(), recs[0].documents.len());
    }
}
