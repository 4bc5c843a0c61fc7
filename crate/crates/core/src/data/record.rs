use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single entity as an ordered list of attribute name/value pairs.
///
/// Attribute order is significant: serialization walks attributes in the
/// order they were loaded.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EntityRecord {
    pub id: String,
    attributes: Vec<(String, String)>,
}

impl EntityRecord {
    /// Builds a record, rejecting empty or duplicate attribute names.
    pub fn new<I, K, V>(id: impl Into<String>, attributes: I) -> Result<Self>
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: Into<String>,
    {
        let attributes: Vec<(String, String)> = attributes
            .into_iter()
            .map(|(k, v)| (k.into(), v.into()))
            .collect();
        let mut seen = HashSet::with_capacity(attributes.len());
        for (name, _) in &attributes {
            if name.is_empty() {
                return Err(Error::Argument("attribute names must be non-empty".into()));
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::Argument(format!("duplicate attribute name `{name}`")));
            }
        }
        Ok(Self {
            id: id.into(),
            attributes,
        })
    }

    pub fn attributes(&self) -> &[(String, String)] {
        &self.attributes
    }

    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.attributes.iter().map(|(n, _)| n.as_str())
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.position(name).map(|i| self.attributes[i].1.as_str())
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|(n, _)| n == name)
    }

    /// Replaces the value at `index`, keeping the attribute name.
    pub fn with_value(&self, index: usize, value: impl Into<String>) -> Self {
        let mut out = self.clone();
        out.attributes[index].1 = value.into();
        out
    }
}

impl fmt::Display for EntityRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, (k, v)) in self.attributes.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{k}: {v:?}")?;
        }
        write!(f, "}}")
    }
}

/// Two records to be matched, optionally labeled (1 = same real-world entity).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CandidatePair {
    pub left: EntityRecord,
    pub right: EntityRecord,
    label: Option<u8>,
}

impl CandidatePair {
    pub fn new(left: EntityRecord, right: EntityRecord, label: Option<u8>) -> Result<Self> {
        if let Some(l) = label {
            if l > 1 {
                return Err(Error::Format(format!("label must be 0 or 1, got {l}")));
            }
        }
        Ok(Self { left, right, label })
    }

    pub fn labeled(left: EntityRecord, right: EntityRecord, matched: bool) -> Self {
        Self {
            left,
            right,
            label: Some(matched as u8),
        }
    }

    pub fn unlabeled(left: EntityRecord, right: EntityRecord) -> Self {
        Self {
            left,
            right,
            label: None,
        }
    }

    pub fn label(&self) -> Option<u8> {
        self.label
    }

    pub fn is_positive(&self) -> bool {
        self.label == Some(1)
    }

    /// The same pair with left and right swapped.
    pub fn swapped(&self) -> Self {
        Self {
            left: self.right.clone(),
            right: self.left.clone(),
            label: self.label,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Valid,
    Test,
    Unsplit,
}

impl fmt::Display for SplitTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SplitTag::Train => "train",
            SplitTag::Valid => "valid",
            SplitTag::Test => "test",
            SplitTag::Unsplit => "unsplit",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetBundle {
    pub name: String,
    pub split_tag: SplitTag,
    pub pairs: Vec<CandidatePair>,
}

impl DatasetBundle {
    pub fn new(name: impl Into<String>, split_tag: SplitTag, pairs: Vec<CandidatePair>) -> Self {
        Self {
            name: name.into(),
            split_tag,
            pairs,
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.pairs.iter().filter(|p| p.is_positive()).count()
    }

    pub fn is_labeled(&self) -> bool {
        self.pairs.iter().all(|p| p.label().is_some())
    }

    /// Labels of every pair; errors if any pair is unlabeled.
    pub fn labels(&self) -> Result<Vec<u8>> {
        self.pairs
            .iter()
            .enumerate()
            .map(|(i, p)| {
                p.label()
                    .ok_or_else(|| Error::Argument(format!("pair {i} of `{}` has no label", self.name)))
            })
            .collect()
    }

    /// Attribute counts as "c-d" from the first pair, the shape column of a
    /// dataset summary. Returns `None` for an empty bundle.
    pub fn attribute_shape(&self) -> Option<(usize, usize)> {
        self.pairs.first().map(|p| (p.left.len(), p.right.len()))
    }
}

/// One row of a dataset summary: size, positives and attribute counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DatasetSummary {
    pub name: String,
    pub size: usize,
    pub positives: usize,
    pub left_attributes: usize,
    pub right_attributes: usize,
}

impl DatasetSummary {
    pub fn of(bundle: &DatasetBundle) -> Self {
        let (l, r) = bundle.attribute_shape().unwrap_or((0, 0));
        Self {
            name: bundle.name.clone(),
            size: bundle.len(),
            positives: bundle.positives(),
            left_attributes: l,
            right_attributes: r,
        }
    }
}

impl fmt::Display for DatasetSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {}-{}",
            self.size, self.positives, self.left_attributes, self.right_attributes
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_duplicate_and_empty_names() {
        assert!(EntityRecord::new("1", [("a", "x"), ("a", "y")]).is_err());
        assert!(EntityRecord::new("1", [("", "x")]).is_err());
        let r = EntityRecord::new("1", [("a", ""), ("b", "y")]).unwrap();
        assert_eq!(r.get("a"), Some(""));
        assert_eq!(r.names().collect::<Vec<_>>(), ["a", "b"]);
    }

    #[test]
    fn label_must_be_binary() {
        let r = EntityRecord::new("1", [("a", "x")]).unwrap();
        assert!(CandidatePair::new(r.clone(), r.clone(), Some(2)).is_err());
        assert!(CandidatePair::new(r.clone(), r, Some(1)).unwrap().is_positive());
    }

    #[test]
    fn summary_formats_like_a_table_row() {
        let r = EntityRecord::new("1", [("a", "x"), ("b", "y")]).unwrap();
        let b = DatasetBundle::new(
            "t",
            SplitTag::Unsplit,
            vec![CandidatePair::labeled(r.clone(), r, true)],
        );
        assert_eq!(DatasetSummary::of(&b).to_string(), "1 1 2-2");
    }
}
