use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::record::CandidatePair;
use crate::error::{Error, Result};

/// Surface term to replacement terms. Identity mappings are dropped on
/// insertion, so every replacement changes the value.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SynonymLexicon {
    entries: BTreeMap<String, BTreeSet<String>>,
}

impl SynonymLexicon {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, term: impl Into<String>, synonym: impl Into<String>) {
        let (term, synonym) = (term.into(), synonym.into());
        let (term, synonym) = (term.trim().to_string(), synonym.trim().to_string());
        if term.is_empty() || synonym.is_empty() || term == synonym {
            return;
        }
        self.entries.entry(term).or_default().insert(synonym);
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn synonyms(&self, term: &str) -> Option<&BTreeSet<String>> {
        self.entries.get(term)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &BTreeSet<String>)> {
        self.entries.iter()
    }

    /// Reads a two-column CSV (term, synonym), one mapping per line. A first
    /// line of `term,synonym` is treated as a header.
    pub fn load(path: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_path(path)
            .map_err(|e| match e.kind() {
                csv::ErrorKind::Io(io) if io.kind() == std::io::ErrorKind::NotFound => {
                    Error::MissingFile(path.to_path_buf())
                }
                _ => Error::Csv {
                    path: path.to_path_buf(),
                    message: e.to_string(),
                },
            })?;
        let mut lex = Self::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Csv {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?;
            if rec.len() != 2 {
                return Err(Error::Format(format!(
                    "{} line {}: expected 2 columns, got {}",
                    path.display(),
                    i + 1,
                    rec.len()
                )));
            }
            if i == 0 && rec[0].trim() == "term" && rec[1].trim() == "synonym" {
                continue;
            }
            lex.insert(&rec[0], &rec[1]);
        }
        Ok(lex)
    }
}

impl<K: Into<String>, V: Into<String>> FromIterator<(K, V)> for SynonymLexicon {
    fn from_iter<I: IntoIterator<Item = (K, V)>>(iter: I) -> Self {
        let mut lex = Self::new();
        for (k, v) in iter {
            lex.insert(k, v);
        }
        lex
    }
}

/// Byte offsets of whole-word occurrences of `term` in `value`.
fn occurrences(value: &str, term: &str) -> Vec<usize> {
    let boundary = |c: Option<char>| c.is_none_or(|c| !c.is_alphanumeric());
    value
        .match_indices(term)
        .filter(|(start, _)| {
            let before = value[..*start].chars().next_back();
            let after = value[start + term.len()..].chars().next();
            boundary(before) && boundary(after)
        })
        .map(|(start, _)| start)
        .collect()
}

/// Builds `count` label-0 pairs from positive pairs by swapping one
/// whole-word lexicon term in one attribute value for a synonym.
///
/// Candidates are enumerated exhaustively, de-duplicated, and filtered of
/// any pair identical to an existing positive before a seeded draw.
pub fn synonym_negatives(
    pairs: &[CandidatePair],
    lexicon: &SynonymLexicon,
    count: usize,
    seed: u64,
) -> Result<Vec<CandidatePair>> {
    if count == 0 {
        return Ok(Vec::new());
    }
    if lexicon.is_empty() {
        return Err(Error::Generation("synonym lexicon is empty".into()));
    }
    let positives: Vec<&CandidatePair> = pairs.iter().filter(|p| p.is_positive()).collect();
    if positives.is_empty() {
        return Err(Error::Generation("no positive pairs to derive negatives from".into()));
    }
    let existing: HashSet<(&_, &_)> = positives.iter().map(|p| (&p.left, &p.right)).collect();

    let mut seen = HashSet::new();
    let mut candidates = Vec::new();
    for pair in &positives {
        for side in 0..2 {
            let record = if side == 0 { &pair.left } else { &pair.right };
            for (ai, (_, value)) in record.attributes().iter().enumerate() {
                for (term, syns) in lexicon.iter() {
                    for start in occurrences(value, term) {
                        for syn in syns {
                            let mut new_value = String::with_capacity(value.len() + syn.len());
                            new_value.push_str(&value[..start]);
                            new_value.push_str(syn);
                            new_value.push_str(&value[start + term.len()..]);
                            let edited = record.with_value(ai, new_value);
                            let (l, r) = if side == 0 {
                                (edited, pair.right.clone())
                            } else {
                                (pair.left.clone(), edited)
                            };
                            if existing.contains(&(&l, &r)) {
                                continue;
                            }
                            if seen.insert((l.clone(), r.clone())) {
                                candidates.push(CandidatePair::labeled(l, r, false));
                            }
                        }
                    }
                }
            }
        }
    }
    if candidates.is_empty() {
        return Err(Error::Generation(
            "no positive pair has a value covered by the lexicon".into(),
        ));
    }
    if count > candidates.len() {
        return Err(Error::Generation(format!(
            "requested {count} synonym negatives but at most {} are producible",
            candidates.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    candidates.shuffle(&mut rng);
    candidates.truncate(count);
    Ok(candidates)
}
