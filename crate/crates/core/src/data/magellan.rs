//! Loader and writer for the Magellan benchmark layout: two entity tables
//! (`tableA.csv`, `tableB.csv`) with an `id` column, plus one or more pair
//! files with `ltable_id`, `rtable_id`, `label` columns.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::record::{CandidatePair, DatasetBundle, EntityRecord, SplitTag};
use crate::error::{Error, Result};

pub const LEFT_TABLE: &str = "tableA.csv";
pub const RIGHT_TABLE: &str = "tableB.csv";
/// Pair files read, in order, when present. `pairs.csv` holds an unsplit
/// candidate set; the other three are the conventional pre-split files.
pub const PAIR_FILES: [&str; 4] = ["pairs.csv", "train.csv", "valid.csv", "test.csv"];

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn require(path: PathBuf) -> Result<PathBuf> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(Error::MissingFile(path))
    }
}

/// Reads an entity table keyed by its `id` column. Attribute order follows
/// the CSV column order; short rows are padded with empty values.
pub fn read_table(path: &Path) -> Result<(Vec<String>, HashMap<String, EntityRecord>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(|h| h.trim_start_matches('\u{feff}').to_string())
        .collect();
    let id_col = headers.iter().position(|h| h == "id").ok_or_else(|| {
        Error::Format(format!("{} has no `id` column", path.display()))
    })?;
    let attr_cols: Vec<usize> = (0..headers.len()).filter(|&c| c != id_col).collect();
    let names: Vec<String> = attr_cols.iter().map(|&c| headers[c].clone()).collect();
    let file = path.display().to_string();

    let mut records = HashMap::new();
    for (row, result) in rdr.records().enumerate() {
        let rec = result.map_err(|e| csv_err(path, e))?;
        let id = rec
            .get(id_col)
            .filter(|s| !s.is_empty())
            .ok_or_else(|| Error::Integrity {
                file: file.clone(),
                row: row + 2,
                message: "empty id".into(),
            })?
            .to_string();
        let attrs = attr_cols
            .iter()
            .map(|&c| (headers[c].clone(), rec.get(c).unwrap_or("").to_string()));
        let record = EntityRecord::new(id.clone(), attrs).map_err(|e| Error::Integrity {
            file: file.clone(),
            row: row + 2,
            message: e.to_string(),
        })?;
        if records.insert(id.clone(), record).is_some() {
            return Err(Error::Integrity {
                file: file.clone(),
                row: row + 2,
                message: format!("duplicate id `{id}`"),
            });
        }
    }
    Ok((names, records))
}

fn parse_label(raw: &str, file: &str, row: usize) -> Result<u8> {
    match raw.trim() {
        "0" => Ok(0),
        "1" => Ok(1),
        other => Err(Error::Format(format!(
            "{file} row {row}: label must be 0 or 1, got `{other}`"
        ))),
    }
}

/// Reads a pair file, resolving ids against the two tables.
pub fn read_pairs(
    path: &Path,
    left: &HashMap<String, EntityRecord>,
    right: &HashMap<String, EntityRecord>,
) -> Result<Vec<CandidatePair>> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let headers = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim_start_matches('\u{feff}') == name)
            .ok_or_else(|| Error::Format(format!("{} has no `{name}` column", path.display())))
    };
    let (lc, rc) = (col("ltable_id")?, col("rtable_id")?);
    let label_col = col("label").ok();
    let file = path.display().to_string();

    let mut pairs = Vec::new();
    for (i, result) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = result.map_err(|e| csv_err(path, e))?;
        let lookup = |table: &HashMap<String, EntityRecord>, c: usize, side: &str| {
            let id = rec.get(c).unwrap_or("");
            table.get(id).cloned().ok_or_else(|| Error::Integrity {
                file: file.clone(),
                row,
                message: format!("{side} id `{id}` not found"),
            })
        };
        let l = lookup(left, lc, "ltable")?;
        let r = lookup(right, rc, "rtable")?;
        let label = match label_col {
            Some(c) => Some(parse_label(rec.get(c).unwrap_or(""), &file, row)?),
            None => None,
        };
        pairs.push(CandidatePair::new(l, r, label)?);
    }
    Ok(pairs)
}

/// Loads every pair file found in `dir` into one unsplit bundle.
pub fn load_magellan_dataset(dir: &Path) -> Result<DatasetBundle> {
    if !dir.is_dir() {
        return Err(Error::MissingFile(dir.to_path_buf()));
    }
    let left_path = require(dir.join(LEFT_TABLE))?;
    let right_path = require(dir.join(RIGHT_TABLE))?;
    let pair_paths: Vec<PathBuf> = PAIR_FILES
        .iter()
        .map(|f| dir.join(f))
        .filter(|p| p.is_file())
        .collect();
    if pair_paths.is_empty() {
        return Err(Error::MissingFile(dir.join(PAIR_FILES[0])));
    }
    let (_, left) = read_table(&left_path)?;
    let (_, right) = read_table(&right_path)?;
    let mut pairs = Vec::new();
    for p in &pair_paths {
        pairs.extend(read_pairs(p, &left, &right)?);
    }
    let name = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    Ok(DatasetBundle::new(name, SplitTag::Unsplit, pairs))
}

/// Loads a pre-split directory (`train.csv`, `valid.csv`, `test.csv` all
/// present) as three tagged bundles; `None` when any split file is absent.
pub fn load_magellan_splits(dir: &Path) -> Result<Option<[DatasetBundle; 3]>> {
    let files = [
        ("train.csv", SplitTag::Train),
        ("valid.csv", SplitTag::Valid),
        ("test.csv", SplitTag::Test),
    ];
    if !files.iter().all(|(f, _)| dir.join(f).is_file()) {
        return Ok(None);
    }
    let (_, left) = read_table(&require(dir.join(LEFT_TABLE))?)?;
    let (_, right) = read_table(&require(dir.join(RIGHT_TABLE))?)?;
    let name = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    let load = |(file, tag): (&str, SplitTag)| -> Result<DatasetBundle> {
        Ok(DatasetBundle::new(name.clone(), tag, read_pairs(&dir.join(file), &left, &right)?))
    };
    let [a, b, c] = files;
    Ok(Some([load(a)?, load(b)?, load(c)?]))
}

fn write_err(path: &Path, e: csv::Error) -> Error {
    csv_err(path, e)
}

/// Writes an entity table. All records must share one schema.
pub fn write_table(path: &Path, records: &[EntityRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| write_err(path, e))?;
    if let Some(first) = records.first() {
        let mut header = vec!["id"];
        header.extend(first.names());
        w.write_record(&header).map_err(|e| write_err(path, e))?;
        for r in records {
            if !r.names().eq(first.names()) {
                return Err(Error::Schema(format!(
                    "record `{}` does not share the table schema",
                    r.id
                )));
            }
            let mut row = vec![r.id.as_str()];
            row.extend(r.attributes().iter().map(|(_, v)| v.as_str()));
            w.write_record(&row).map_err(|e| write_err(path, e))?;
        }
    } else {
        w.write_record(["id"]).map_err(|e| write_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes a pair file referencing records by id.
pub fn write_pairs(path: &Path, pairs: &[CandidatePair]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| write_err(path, e))?;
    w.write_record(["ltable_id", "rtable_id", "label"])
        .map_err(|e| write_err(path, e))?;
    for p in pairs {
        let label = p.label().map(|l| l.to_string()).unwrap_or_default();
        w.write_record([p.left.id.as_str(), p.right.id.as_str(), label.as_str()])
            .map_err(|e| write_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes a complete Magellan directory with an unsplit `pairs.csv`.
pub fn write_magellan_dataset(
    dir: &Path,
    left: &[EntityRecord],
    right: &[EntityRecord],
    pairs: &[CandidatePair],
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_table(&dir.join(LEFT_TABLE), left)?;
    write_table(&dir.join(RIGHT_TABLE), right)?;
    write_pairs(&dir.join(PAIR_FILES[0]), pairs)
}
