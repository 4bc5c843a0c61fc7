//! `[COL] name [VAL] value` serialization of records and pairs, subword
//! encoding with per-attribute value spans, and the inverse parser.

mod tokenizer;

use serde::{Deserialize, Serialize};

pub use tokenizer::{
    basic_tokenize, normalize, WordPieceTokenizer, CLS, COL, MASK, PAD, SEP, SPECIAL_TOKENS, UNK, VAL,
};

use crate::data::{CandidatePair, EntityRecord};
use crate::error::{Error, Result};

pub const DEFAULT_MAX_LEN: usize = 256;
pub const MIN_MAX_LEN: usize = 16;

fn collapse_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// `[COL] name [VAL] value ...` in record order, single-space separated.
pub fn serialize_entity(e: &EntityRecord) -> Result<String> {
    if e.is_empty() {
        return Err(Error::Argument(format!("record `{}` has no attributes", e.id)));
    }
    let mut parts: Vec<String> = Vec::with_capacity(e.len() * 4);
    for (name, value) in e.attributes() {
        parts.push(COL.into());
        parts.push(collapse_ws(name));
        parts.push(VAL.into());
        let v = collapse_ws(value);
        if !v.is_empty() {
            parts.push(v);
        }
    }
    Ok(parts.join(" "))
}

/// `[CLS] left [SEP] right [SEP]`.
pub fn serialize_pair(p: &CandidatePair) -> Result<String> {
    Ok(format!(
        "{CLS} {} {SEP} {} {SEP}",
        serialize_entity(&p.left)?,
        serialize_entity(&p.right)?
    ))
}

/// Parses `[COL] a [VAL] x [COL] b [VAL] y` back into a record with an empty
/// id. Values come back whitespace-normalized.
pub fn parse_serialized(s: &str) -> Result<EntityRecord> {
    #[derive(PartialEq)]
    enum Marker {
        Col,
        Val,
    }
    let mut markers: Vec<(usize, Marker)> = s
        .match_indices(COL)
        .map(|(i, _)| (i, Marker::Col))
        .chain(s.match_indices(VAL).map(|(i, _)| (i, Marker::Val)))
        .collect();
    markers.sort_by_key(|(i, _)| *i);

    let err = |position: usize, message: &str| Error::Parse {
        position,
        message: message.to_string(),
    };
    let first = markers.first().map(|m| m.0).unwrap_or(s.len());
    if !s[..first].trim().is_empty() {
        return Err(err(0, "text before the first [COL]"));
    }
    if markers.is_empty() {
        return Err(err(0, "no [COL] marker"));
    }

    let mut attrs: Vec<(String, String)> = Vec::new();
    let mut k = 0;
    while k < markers.len() {
        let (pos, ref m) = markers[k];
        if *m != Marker::Col {
            return Err(err(pos, "[VAL] without a preceding [COL]"));
        }
        let Some((vpos, Marker::Val)) = markers.get(k + 1) else {
            let at = markers.get(k + 1).map(|m| m.0).unwrap_or(s.len());
            return Err(err(at, "[COL] not followed by [VAL]"));
        };
        let name = collapse_ws(&s[pos + COL.len()..*vpos]);
        if name.is_empty() {
            return Err(err(pos, "empty attribute name"));
        }
        let vend = markers.get(k + 2).map(|m| m.0).unwrap_or(s.len());
        let value = collapse_ws(&s[vpos + VAL.len()..vend]);
        attrs.push((name, value));
        k += 2;
    }
    EntityRecord::new("", attrs).map_err(|e| err(0, &e.to_string()))
}

/// Half-open token range `[start, end)` holding one attribute's value tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttrSpan {
    pub attr_index: usize,
    pub start: usize,
    pub end: usize,
}

impl AttrSpan {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

/// A pair encoded for the encoder, with value spans for both entities.
///
/// Every attribute gets a span, including empty values (`start == end`),
/// so `left_spans.len()` and `right_spans.len()` are the attribute counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SerializedPair {
    pub text: String,
    pub token_ids: Vec<u32>,
    pub left_spans: Vec<AttrSpan>,
    pub right_spans: Vec<AttrSpan>,
    pub sep_index: usize,
    pub truncated: bool,
}

impl SerializedPair {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    /// 0 up to and including the first `[SEP]`, 1 afterwards.
    pub fn segment_ids(&self) -> Vec<u32> {
        (0..self.len()).map(|i| (i > self.sep_index) as u32).collect()
    }

    /// One JSON object per line for debugging dumps.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("plain data serializes")
    }
}

struct AttrTokens {
    name: Vec<u32>,
    value: Vec<u32>,
}

fn attr_tokens(tok: &WordPieceTokenizer, e: &EntityRecord) -> Vec<AttrTokens> {
    e.attributes()
        .iter()
        .map(|(n, v)| AttrTokens {
            name: tok.encode_text(n),
            value: tok.encode_text(v),
        })
        .collect()
}

/// Encodes `serialize_pair(p)` into at most `max_len` subword ids.
///
/// Over-long pairs are shortened one token at a time from the tail of the
/// currently longest attribute value (left entity first on ties); names and
/// markers are never dropped.
pub fn tokenize_with_spans(
    tok: &WordPieceTokenizer,
    p: &CandidatePair,
    max_len: usize,
) -> Result<SerializedPair> {
    if max_len < MIN_MAX_LEN {
        return Err(Error::Config(format!("max_len {max_len} is below {MIN_MAX_LEN}")));
    }
    let text = serialize_pair(p)?;
    let mut sides = [attr_tokens(tok, &p.left), attr_tokens(tok, &p.right)];

    let fixed: usize = 3 + sides
        .iter()
        .flatten()
        .map(|a| 2 + a.name.len())
        .sum::<usize>();
    let values: usize = sides.iter().flatten().map(|a| a.value.len()).sum();
    let mut excess = (fixed + values).saturating_sub(max_len);
    let truncated = excess > 0;
    if fixed > max_len {
        return Err(Error::Config(format!(
            "attribute names and markers need {fixed} tokens, more than max_len {max_len}"
        )));
    }
    while excess > 0 {
        let longest = sides
            .iter_mut()
            .flatten()
            .reduce(|best, a| if a.value.len() > best.value.len() { a } else { best })
            .expect("records are non-empty");
        longest.value.pop();
        excess -= 1;
    }

    let (col, val) = (tok.special(COL), tok.special(VAL));
    let mut ids = vec![tok.special(CLS)];
    let mut spans: [Vec<AttrSpan>; 2] = [Vec::new(), Vec::new()];
    let mut sep_index = 0;
    for (s, attrs) in sides.iter().enumerate() {
        for (i, a) in attrs.iter().enumerate() {
            ids.push(col);
            ids.extend(&a.name);
            ids.push(val);
            let start = ids.len();
            ids.extend(&a.value);
            spans[s].push(AttrSpan {
                attr_index: i,
                start,
                end: ids.len(),
            });
        }
        if s == 0 {
            sep_index = ids.len();
        }
        ids.push(tok.special(SEP));
    }
    debug_assert!(ids.len() <= max_len);
    let [left_spans, right_spans] = spans;
    Ok(SerializedPair {
        text,
        token_ids: ids,
        left_spans,
        right_spans,
        sep_index,
        truncated,
    })
}
