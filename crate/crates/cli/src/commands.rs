use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use emcar_core::data::{
    generate_uis_tables, load_magellan_dataset, load_magellan_splits, read_table, split_dataset,
    synonym_negatives, synthesize_people, write_magellan_dataset, DatasetSummary, SynonymLexicon, UisTables,
};
use emcar_core::matcher::{evaluate, run_protocol, EmCarModel};
use emcar_core::{CandidatePair, DatasetBundle, EntityRecord, SplitTag};
use serde_json::Value;

use crate::config::{GeneratorSpec, RunConfig};
use crate::Failure;

/// Command-line overrides shared by all commands.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub runs: Option<usize>,
    pub checkpoint: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

fn write_or_print(path: Option<&Path>, body: &str) -> Result<(), Failure> {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            fs::write(p, body).with_context(|| format!("writing {}", p.display()))?;
        }
        None => print!("{body}"),
    }
    Ok(())
}

/// Base records in file order of their ids (numeric ids sort numerically).
fn base_records(spec: &GeneratorSpec) -> Result<Vec<EntityRecord>, Failure> {
    let mut records = match &spec.base_records {
        Some(path) => {
            let (_, table) = read_table(path)?;
            let mut v: Vec<EntityRecord> = table.into_values().collect();
            v.sort_by(|a, b| (a.id.len(), &a.id).cmp(&(b.id.len(), &b.id)));
            if spec.people > 0 {
                v.truncate(spec.people);
            }
            v
        }
        None => synthesize_people(spec.people, spec.seed),
    };
    records.retain(|r| !r.is_empty());
    if records.is_empty() {
        return Err(Failure::usage(anyhow!("empty dataset: the generator request yields no pairs")));
    }
    Ok(records)
}

/// Generated tables plus optional synonym-replacement negatives, whose
/// edited records join the tables under fresh ids.
pub fn generate(spec: &GeneratorSpec) -> Result<UisTables, Failure> {
    let base = base_records(spec)?;
    let mut tables = generate_uis_tables(&base, &spec.options, spec.seed)?;
    if spec.synonym_negatives > 0 {
        let path = spec
            .lexicon
            .as_ref()
            .ok_or_else(|| Failure::usage(anyhow!("synonym_negatives needs a lexicon file")))?;
        let lexicon = SynonymLexicon::load(path)?;
        let negatives = synonym_negatives(&tables.pairs, &lexicon, spec.synonym_negatives, spec.seed)?;
        let a: HashMap<String, EntityRecord> = tables.table_a.iter().map(|r| (r.id.clone(), r.clone())).collect();
        let b: HashMap<String, EntityRecord> = tables.table_b.iter().map(|r| (r.id.clone(), r.clone())).collect();
        for (k, mut pair) in negatives.into_iter().enumerate() {
            if a.get(&pair.left.id) != Some(&pair.left) {
                pair.left.id = format!("{}-syn{k}", pair.left.id);
                tables.table_a.push(pair.left.clone());
            }
            if b.get(&pair.right.id) != Some(&pair.right) {
                pair.right.id = format!("{}-syn{k}", pair.right.id);
                tables.table_b.push(pair.right.clone());
            }
            tables.pairs.push(pair);
        }
    }
    Ok(tables)
}

pub fn gen(cfg: &RunConfig, ov: &Overrides) -> Result<(), Failure> {
    let mut spec = cfg
        .dataset
        .generate
        .clone()
        .ok_or_else(|| Failure::usage(anyhow!("config has no [dataset.generate] section")))?;
    if let Some(seed) = ov.seed {
        spec.seed = seed;
    }
    let tables = generate(&spec)?;
    let dir = ov.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    write_magellan_dataset(&dir, &tables.table_a, &tables.table_b, &tables.pairs)?;
    let name = dir.file_name().map_or("dataset".into(), |n| n.to_string_lossy().into_owned());
    let summary = DatasetSummary::of(&DatasetBundle::new(name, SplitTag::Unsplit, tables.pairs));
    println!("size positives attributes");
    println!("{summary}");
    Ok(())
}

/// Train/valid/test bundles for the configured dataset, plus its total size.
fn load_splits(cfg: &RunConfig) -> Result<([DatasetBundle; 3], usize), Failure> {
    let bundle = match (&cfg.dataset.path, &cfg.dataset.generate) {
        (Some(path), _) => {
            if !path.exists() {
                return Err(Failure::usage(anyhow!("dataset path {} does not exist", path.display())));
            }
            if let Some(splits) = load_magellan_splits(path)? {
                let total = splits.iter().map(DatasetBundle::len).sum();
                return Ok((splits, total));
            }
            load_magellan_dataset(path)?
        }
        (None, Some(spec)) => DatasetBundle::new("generated", SplitTag::Unsplit, generate(spec)?.pairs),
        (None, None) => return Err(Failure::usage(anyhow!("config sets neither dataset.path nor dataset.generate"))),
    };
    if bundle.is_empty() {
        return Err(Failure::usage(anyhow!("empty dataset")));
    }
    let total = bundle.len();
    let (tr, va, te) = split_dataset(&bundle, cfg.dataset.split_seed)?;
    Ok(([tr, va, te], total))
}

pub fn train(cfg: &RunConfig, ov: &Overrides) -> Result<(), Failure> {
    let mut cfg = cfg.clone();
    if let Some(seed) = ov.seed {
        cfg.train.seed = seed;
    }
    if let Some(runs) = ov.runs {
        cfg.train.runs = runs;
    }
    cfg.train.checkpoint_dir = ov.checkpoint.clone().unwrap_or_else(|| cfg.output_dir.join("checkpoints"));
    cfg.train.validate()?;
    if let Some(dir) = &cfg.model.pretrained {
        if !dir.is_dir() {
            return Err(Failure::usage(anyhow!("pretrained directory {} does not exist", dir.display())));
        }
    }
    let ([tr, va, te], total) = load_splits(&cfg)?;
    cfg.train.epochs = Some(cfg.train.resolved_epochs(total));

    fs::create_dir_all(&cfg.output_dir).with_context(|| format!("creating {}", cfg.output_dir.display()))?;
    let echo = cfg.to_toml().map_err(Failure::runtime)?;
    fs::write(cfg.output_dir.join("run.toml"), echo).context("writing run.toml")?;

    log::info!(
        "training {} run(s) on {}/{}/{} pairs for {} epochs",
        cfg.train.runs,
        tr.len(),
        va.len(),
        te.len(),
        cfg.train.epochs.unwrap_or_default()
    );
    let report = run_protocol(&cfg.train, &cfg.model, &tr, &va, &te)?;
    let json = serde_json::to_string_pretty(&report).map_err(|e| Failure::runtime(e.into()))?;
    let out = ov.out.clone().unwrap_or_else(|| cfg.output_dir.join("metrics.json"));
    write_or_print(Some(&out), &(json + "\n"))?;
    println!(
        "mean test F1 {:.4} (std {:.4}) over {} run(s); metrics in {}",
        report.mean.f1,
        report.f1_std,
        report.runs.len(),
        out.display()
    );
    Ok(())
}

fn checkpoint(cfg: &RunConfig, ov: &Overrides) -> Result<PathBuf, Failure> {
    let dir = ov
        .checkpoint
        .clone()
        .unwrap_or_else(|| cfg.output_dir.join("checkpoints").join("run-0"));
    if !dir.is_dir() {
        return Err(Failure::usage(anyhow!("checkpoint {} does not exist", dir.display())));
    }
    Ok(dir)
}

pub fn eval(cfg: &RunConfig, ov: &Overrides) -> Result<(), Failure> {
    let ckpt = checkpoint(cfg, ov)?;
    let ([_, _, test], _) = load_splits(cfg)?;
    let metrics = evaluate(&ckpt, &test)?;
    let json = serde_json::to_string_pretty(&metrics).map_err(|e| Failure::runtime(e.into()))?;
    write_or_print(ov.out.as_deref(), &(json + "\n"))
}

fn record(value: &Value, id: String, line: usize, side: &str) -> Result<EntityRecord, Failure> {
    let obj = value
        .as_object()
        .ok_or_else(|| Failure::usage(anyhow!("line {line}: `{side}` must be an object of attribute values")))?;
    let attrs = obj.iter().map(|(k, v)| {
        let text = match v {
            Value::String(s) => s.clone(),
            Value::Null => String::new(),
            other => other.to_string(),
        };
        (k.clone(), text)
    });
    Ok(EntityRecord::new(id, attrs)?)
}

/// JSON Lines of `{"left": {...}, "right": {...}}` with attribute order
/// preserved; an optional `label` of 0 or 1 is kept.
pub fn read_pair_file(path: &Path) -> Result<Vec<CandidatePair>, Failure> {
    if !path.is_file() {
        return Err(Failure::usage(anyhow!("pair file {} does not exist", path.display())));
    }
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let n = i + 1;
        let v: Value = serde_json::from_str(line).map_err(|e| Failure::usage(anyhow!("line {n}: {e}")))?;
        let left = record(&v["left"], format!("l{n}"), n, "left")?;
        let right = record(&v["right"], format!("r{n}"), n, "right")?;
        let label = match &v["label"] {
            Value::Null => None,
            l => Some(
                l.as_u64()
                    .filter(|&x| x <= 1)
                    .ok_or_else(|| Failure::usage(anyhow!("line {n}: label must be 0 or 1")))? as u8,
            ),
        };
        pairs.push(CandidatePair::new(left, right, label)?);
    }
    Ok(pairs)
}

pub fn predict(cfg: &RunConfig, ov: &Overrides, pairs: &Path) -> Result<(), Failure> {
    let ckpt = checkpoint(cfg, ov)?;
    let pairs = read_pair_file(pairs)?;
    let (model, manifest) = EmCarModel::load(&ckpt)?;
    let batch = manifest.train.map_or(32, |t| t.eval_batch_size);
    let mut body = String::new();
    for p in model.predict_pairs(&pairs, batch)? {
        body.push_str(&serde_json::to_string(&p).map_err(|e| Failure::runtime(e.into()))?);
        body.push('\n');
    }
    write_or_print(ov.out.as_deref(), &body)
}

pub fn inspect(cfg: &RunConfig, ov: &Overrides, pairs: &Path) -> Result<(), Failure> {
    let ckpt = checkpoint(cfg, ov)?;
    let pairs = read_pair_file(pairs)?;
    let (model, _) = EmCarModel::load(&ckpt)?;
    let mut body = String::new();
    for p in &pairs {
        body.push_str(&serde_json::to_string(&model.inspect(p)?).map_err(|e| Failure::runtime(e.into()))?);
        body.push('\n');
    }
    write_or_print(ov.out.as_deref(), &body)
}
