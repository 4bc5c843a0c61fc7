//! Uncased WordPiece tokenizer compatible with BERT `vocab.txt` files.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const MASK: &str = "[MASK]";
pub const COL: &str = "[COL]";
pub const VAL: &str = "[VAL]";

/// Specials, in the id order used by freshly built vocabularies.
pub const SPECIAL_TOKENS: [&str; 7] = [PAD, UNK, CLS, SEP, MASK, COL, VAL];

const MAX_WORD_CHARS: usize = 100;

fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x4E00..=0x9FFF | 0x3400..=0x4DBF | 0x20000..=0x2A6DF | 0x2A700..=0x2B73F
        | 0x2B740..=0x2B81F | 0x2B820..=0x2CEAF | 0xF900..=0xFAFF | 0x2F800..=0x2FA1F)
}

fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation() || (!c.is_alphanumeric() && !c.is_whitespace() && !c.is_control())
}

/// Lowercases and splits on whitespace, punctuation and CJK ideographs.
///
/// The output words joined by single spaces are the normalized form that a
/// decoded token range reproduces.
pub fn basic_tokenize(text: &str) -> Vec<String> {
    let mut words = Vec::new();
    let mut cur = String::new();
    for c in text.chars() {
        if c.is_whitespace() || c.is_control() {
            if !cur.is_empty() {
                words.push(std::mem::take(&mut cur));
            }
        } else if is_punct(c) || is_cjk(c) {
            if !cur.is_empty() {
                words.push(std::mem::take(&mut cur));
            }
            words.push(c.to_lowercase().collect());
        } else {
            cur.extend(c.to_lowercase());
        }
    }
    if !cur.is_empty() {
        words.push(cur);
    }
    words
}

/// Normalized text: [`basic_tokenize`] joined with single spaces.
pub fn normalize(text: &str) -> String {
    basic_tokenize(text).join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordPieceTokenizer {
    vocab: HashMap<String, u32>,
    tokens: Vec<String>,
}

impl WordPieceTokenizer {
    /// Builds a tokenizer from an ordered token list. The seven specials are
    /// appended if absent so the markers never split into subwords.
    pub fn from_tokens<I: IntoIterator<Item = String>>(tokens: I) -> Result<Self> {
        let mut t = Self {
            vocab: HashMap::new(),
            tokens: Vec::new(),
        };
        for tok in tokens {
            if tok.is_empty() {
                return Err(Error::Format("empty token in vocabulary".into()));
            }
            if t.vocab.contains_key(&tok) {
                return Err(Error::Format(format!("duplicate vocabulary token `{tok}`")));
            }
            t.push(tok);
        }
        for s in SPECIAL_TOKENS {
            if !t.vocab.contains_key(s) {
                t.push(s.to_string());
            }
        }
        Ok(t)
    }

    fn push(&mut self, tok: String) {
        self.vocab.insert(tok.clone(), self.tokens.len() as u32);
        self.tokens.push(tok);
    }

    /// Reads a BERT-style `vocab.txt` (one token per line).
    pub fn from_vocab_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::MissingFile(path.to_path_buf())
            } else {
                Error::io(path, e)
            }
        })?;
        Self::from_tokens(text.lines().map(|l| l.trim_end_matches('\r').to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut body = self.tokens.join("\n");
        body.push('\n');
        fs::write(path, body).map_err(|e| Error::io(path, e))
    }

    /// Learns a vocabulary from a corpus: specials, every character seen (as
    /// a word-initial piece and as a `##` continuation), then whole words by
    /// descending frequency until `max_size`.
    pub fn train<'a, I: IntoIterator<Item = &'a str>>(corpus: I, max_size: usize, min_freq: usize) -> Self {
        let mut counts: HashMap<String, usize> = HashMap::new();
        for text in corpus {
            for w in basic_tokenize(text) {
                *counts.entry(w).or_default() += 1;
            }
        }
        let mut chars: Vec<char> = counts.keys().flat_map(|w| w.chars()).collect();
        chars.sort_unstable();
        chars.dedup();

        let mut tokens: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        tokens.extend(chars.iter().map(|c| c.to_string()));
        tokens.extend(chars.iter().map(|c| format!("##{c}")));

        let mut words: Vec<(&String, &usize)> = counts
            .iter()
            .filter(|(w, &c)| c >= min_freq && w.chars().count() > 1)
            .collect();
        words.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
        let room = max_size.saturating_sub(tokens.len());
        tokens.extend(words.into_iter().take(room).map(|(w, _)| w.clone()));
        Self::from_tokens(tokens).expect("generated vocabulary is duplicate-free")
    }

    pub fn vocab_size(&self) -> usize {
        self.tokens.len()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.vocab.get(token).copied()
    }

    pub fn special(&self, token: &str) -> u32 {
        self.vocab[token]
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    fn word_pieces(&self, word: &str, out: &mut Vec<u32>) {
        let unk = self.special(UNK);
        let chars: Vec<char> = word.chars().collect();
        if chars.len() > MAX_WORD_CHARS {
            out.push(unk);
            return;
        }
        let start_len = out.len();
        let mut start = 0;
        while start < chars.len() {
            let mut end = chars.len();
            let mut found = None;
            while start < end {
                let piece: String = chars[start..end].iter().collect();
                let piece = if start > 0 { format!("##{piece}") } else { piece };
                if let Some(&id) = self.vocab.get(&piece) {
                    found = Some(id);
                    break;
                }
                end -= 1;
            }
            match found {
                Some(id) => {
                    out.push(id);
                    start = end;
                }
                None => {
                    out.truncate(start_len);
                    out.push(unk);
                    return;
                }
            }
        }
    }

    /// Subword ids for plain text (no marker handling).
    pub fn encode_text(&self, text: &str) -> Vec<u32> {
        let mut out = Vec::new();
        for w in basic_tokenize(text) {
            self.word_pieces(&w, &mut out);
        }
        out
    }

    /// Subword ids for text that may contain the literal special tokens.
    pub fn encode(&self, text: &str) -> Vec<u32> {
        let mut out = Vec::new();
        let mut rest = text;
        loop {
            let next = SPECIAL_TOKENS
                .iter()
                .filter_map(|s| rest.find(s).map(|i| (i, *s)))
                .min_by_key(|(i, _)| *i);
            match next {
                Some((i, s)) => {
                    out.extend(self.encode_text(&rest[..i]));
                    out.push(self.special(s));
                    rest = &rest[i + s.len()..];
                }
                None => {
                    out.extend(self.encode_text(rest));
                    return out;
                }
            }
        }
    }

    /// Joins tokens with spaces, gluing `##` continuations to their word.
    pub fn decode(&self, ids: &[u32]) -> String {
        let mut s = String::new();
        for &id in ids {
            let tok = self.token(id).unwrap_or(UNK);
            match tok.strip_prefix("##") {
                Some(cont) if !s.is_empty() => s.push_str(cont),
                _ => {
                    if !s.is_empty() {
                        s.push(' ');
                    }
                    s.push_str(tok);
                }
            }
        }
        s
    }
}
