//! Property checks shared by the property tests and the acceptance report.
//! Each returns a one-line summary on success and the first violation on
//! failure.

use std::path::Path;

use candle_core::{Device, Tensor, Var};
use emcar_core::attnet::{
    attribute_similarity_matrix, compare_tokens, inter_attention, m2v, self_attention,
    similarity_with_trace, AttentionParams, AttnConfig, M2vAxis,
};
use emcar_core::serializer::{
    parse_serialized, serialize_entity, tokenize_with_spans, WordPieceTokenizer, CLS, COL, SEP, VAL,
};
use emcar_core::data::{
    generate_uis_tables, load_magellan_dataset, split_dataset, synthesize_people, DatasetSummary, UisOptions,
};
use emcar_core::{CandidatePair, DatasetBundle, EntityRecord, SplitTag};
use rand::Rng;

use super::oracle::{self, Mat};
use super::random::{self, case, lens, rng, t2, to_mat};

pub type Check = Result<String, String>;

fn max_row_deviation(rows: &Mat) -> f64 {
    rows.iter()
        .map(|r| (r.iter().sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max)
}

/// Row sums of alpha and beta, from the single-attribute ops and from the
/// batched trace, over random instances with d = 8 and L ≤ 6.
pub fn attention_normalization(instances: usize, tol: f64) -> Check {
    let mut worst = 0.0f64;
    for k in 0..instances {
        let mut r = rng(1000 + k as u64);
        let d = 8;
        let p = random::params(&mut r, d);
        let ap = random::to_tensors(&p);
        let (ls, lt) = (r.random_range(1..=6), r.random_range(1..=6));
        let hs = random::mat(&mut r, ls, d, 1.0);
        let ht = random::mat(&mut r, lt, d, 1.0);
        let alpha = self_attention(&t2(&hs), &ap.w_self).map_err(|e| e.to_string())?;
        let (beta, _) = inter_attention(&t2(&hs), &t2(&ht), &ap.w_inter).map_err(|e| e.to_string())?;
        worst = worst.max(max_row_deviation(&to_mat(&alpha)));
        worst = worst.max(max_row_deviation(&to_mat(&beta)));

        let (m, n) = (r.random_range(1..=3), r.random_range(1..=3));
        let (ll, rl) = (lens(&mut r, m, 6), lens(&mut r, n, 6));
        let c = case(&mut r, d, &ll, &rl);
        let trace = similarity_with_trace(&c.emb, &ap, &AttnConfig::default()).map_err(|e| e.to_string())?;
        for dir in [Some(&trace.left_to_right), trace.right_to_left.as_ref()].into_iter().flatten() {
            if let Some(a) = &dir.alpha {
                worst = worst.max(max_row_deviation(&to_mat(a)));
            }
            if let Some(b) = &dir.beta {
                let slices: Vec<Mat> = b.to_vec3().map_err(|e| e.to_string())?;
                for s in &slices {
                    worst = worst.max(max_row_deviation(s));
                }
            }
        }
        if worst > tol {
            return Err(format!("instance {k}: row sum deviates by {worst:.3e}"));
        }
    }
    Ok(format!("{instances} instances, max |row sum - 1| = {worst:.2e}"))
}

/// Range, unit maximum and agreement with the loop oracle on random
/// row-stochastic matrices.
pub fn m2v_contract(instances: usize, max_tol: f64, oracle_tol: f64) -> Check {
    let (mut worst_max, mut worst_diff) = (0.0f64, 0.0f64);
    for k in 0..instances {
        let mut r = rng(2000 + k as u64);
        let l = r.random_range(1..=8);
        let scale = r.random_range(0.1..6.0);
        let a = oracle::softmax_rows(&random::mat(&mut r, l, l, scale));
        let got: Vec<f64> = m2v(&t2(&a), M2vAxis::Column)
            .and_then(|t| Ok(t.to_vec1::<f64>()?))
            .map_err(|e| e.to_string())?;
        if let Some(v) = got.iter().find(|v| !(**v > 0.0 && **v <= 1.0)) {
            return Err(format!("instance {k}: entry {v} outside (0, 1]"));
        }
        let top = got.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        worst_max = worst_max.max((top - 1.0).abs());
        let want = oracle::m2v_columns(&a);
        for (g, w) in got.iter().zip(&want) {
            worst_diff = worst_diff.max((g - w).abs());
        }
        if worst_max > max_tol || worst_diff > oracle_tol {
            return Err(format!("instance {k}: |max-1| = {worst_max:.2e}, oracle diff = {worst_diff:.2e}"));
        }
    }
    Ok(format!("{instances} matrices, |max-1| <= {worst_max:.1e}, oracle diff <= {worst_diff:.1e}"))
}

/// Batched similarity matrix against the per-attribute loop oracle, with
/// and without direction fusion; some attributes have no value tokens.
pub fn oracle_equivalence(instances: usize, tol: f64) -> Check {
    let mut worst = 0.0f64;
    for k in 0..instances {
        let mut r = rng(3000 + k as u64);
        let d = r.random_range(2..=8);
        let p = random::params(&mut r, d);
        let (m, n) = (r.random_range(1..=3), r.random_range(1..=3));
        let mut ll = lens(&mut r, m, 5);
        let mut rl = lens(&mut r, n, 5);
        if k % 5 == 1 {
            ll[0] = 0;
        }
        if k % 7 == 2 {
            rl[n - 1] = 0;
        }
        let c = case(&mut r, d, &ll, &rl);
        for fuse in [true, false] {
            let cfg = AttnConfig {
                direction_fusion: fuse,
                ..Default::default()
            };
            let got = attribute_similarity_matrix(&c.emb, &random::to_tensors(&p), &cfg)
                .and_then(|s| s.to_vec2())
                .map_err(|e| e.to_string())?;
            let want = oracle::similarity(&c.left, &c.right, &p, fuse);
            if got.len() != m || got.iter().any(|row| row.len() != n) {
                return Err(format!("instance {k}: shape mismatch"));
            }
            for (gr, wr) in got.iter().zip(&want) {
                for (g, w) in gr.iter().zip(wr) {
                    worst = worst.max((g - w).abs());
                }
            }
        }
        if worst > tol {
            return Err(format!("instance {k}: max |batched - oracle| = {worst:.3e}"));
        }
    }
    Ok(format!("{instances} instances, max |batched - oracle| = {worst:.2e}"))
}

fn flatten(p: &AttentionParams) -> Vec<(Vec<usize>, Vec<f64>)> {
    p.tensors()
        .iter()
        .map(|(_, t)| (t.dims().to_vec(), t.flatten_all().unwrap().to_vec1::<f64>().unwrap()))
        .collect()
}

fn rebuild(parts: &[(Vec<usize>, Vec<f64>)]) -> AttentionParams {
    let t: Vec<Tensor> = parts
        .iter()
        .map(|(s, v)| Tensor::from_vec(v.clone(), s.as_slice(), &Device::Cpu).unwrap())
        .collect();
    AttentionParams {
        w_self: t[0].clone(),
        w_inter: t[1].clone(),
        w_h: t[2].clone(),
        b_h: t[3].clone(),
        w_t: t[4].clone(),
        b_t: t[5].clone(),
        w_c: t[6].clone(),
        c_c: t[7].clone(),
    }
}

/// Largest per-tensor relative error ‖g − ĝ‖ / max(‖g‖, ‖ĝ‖) between
/// autodiff gradients of `f` and central differences.
fn gradient_error<F>(p: &AttentionParams, f: F) -> (f64, &'static str)
where
    F: Fn(&AttentionParams) -> Tensor,
{
    let vars: Vec<Var> = p.tensors().iter().map(|(_, t)| Var::from_tensor(t).unwrap()).collect();
    let tracked = AttentionParams {
        w_self: vars[0].as_tensor().clone(),
        w_inter: vars[1].as_tensor().clone(),
        w_h: vars[2].as_tensor().clone(),
        b_h: vars[3].as_tensor().clone(),
        w_t: vars[4].as_tensor().clone(),
        b_t: vars[5].as_tensor().clone(),
        w_c: vars[6].as_tensor().clone(),
        c_c: vars[7].as_tensor().clone(),
    };
    let grads = f(&tracked).backward().unwrap();
    let base = flatten(p);
    let eps = 1e-6;
    let mut worst = (0.0, "");
    for (idx, (name, _)) in p.tensors().iter().enumerate() {
        let analytic: Vec<f64> = match grads.get(&vars[idx]) {
            Some(g) => g.flatten_all().unwrap().to_vec1().unwrap(),
            None => vec![0.0; base[idx].1.len()],
        };
        let mut numeric = Vec::with_capacity(analytic.len());
        for k in 0..base[idx].1.len() {
            let mut plus = base.clone();
            plus[idx].1[k] += eps;
            let mut minus = base.clone();
            minus[idx].1[k] -= eps;
            let fp = f(&rebuild(&plus)).to_scalar::<f64>().unwrap();
            let fm = f(&rebuild(&minus)).to_scalar::<f64>().unwrap();
            numeric.push((fp - fm) / (2.0 * eps));
        }
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, b)| a - b).collect();
        let scale = norm(&analytic).max(norm(&numeric));
        let rel = if scale < 1e-12 { norm(&diff) } else { norm(&diff) / scale };
        if rel > worst.0 {
            worst = (rel, name);
        }
    }
    worst
}

/// Autodiff vs finite differences for compare_tokens and for ΣR, over all
/// eight attention/highway tensors, at fp64.
pub fn gradient_checks(instances: usize, tol: f64) -> Check {
    let mut worst = (0.0f64, "");
    for k in 0..instances {
        let mut r = rng(4000 + k as u64);
        let d = 8;
        let p = random::to_tensors(&random::params(&mut r, d));
        let l = r.random_range(1..=4);
        let h = t2(&random::mat(&mut r, l, d, 1.0));
        let att = t2(&random::mat(&mut r, l, d, 1.0));
        let weights = random::t1(&random::vec(&mut r, l, 1.0));
        let compare = gradient_error(&p, |q| {
            (compare_tokens(&h, &att, q).unwrap() * &weights).unwrap().sum_all().unwrap()
        });

        let (m, n) = (r.random_range(1..=3), r.random_range(1..=3));
        let (ll, rl) = (lens(&mut r, m, 4), lens(&mut r, n, 4));
        let c = case(&mut r, d, &ll, &rl);
        let total = gradient_error(&p, |q| {
            attribute_similarity_matrix(&c.emb, q, &AttnConfig::default())
                .unwrap()
                .values
                .sum_all()
                .unwrap()
        });
        for e in [compare, total] {
            if e.0 > worst.0 {
                worst = e;
            }
        }
        if worst.0 > tol {
            return Err(format!("instance {k}: relative error {:.3e} on {}", worst.0, worst.1));
        }
    }
    Ok(format!("{instances} instances, max relative error {:.2e} ({})", worst.0, worst.1))
}

const WORDS: [&str; 16] = [
    "three", "gorges", "reservoir", "Yichang", "Hubei", "42.5km²", "St.", "O'Neil", "café", "三峡", "dam",
    "river-basin", "(east)", "1,024", "a/b", "Sandouping",
];

fn phrase(r: &mut impl Rng, words: usize) -> String {
    (0..words).map(|_| WORDS[r.random_range(0..WORDS.len())]).collect::<Vec<_>>().join(" ")
}

/// A record with 1..=6 distinct attribute names and 0..=max_words-word values.
pub fn random_record(r: &mut impl Rng, max_words: usize) -> EntityRecord {
    let count = r.random_range(1..=6);
    let attrs: Vec<(String, String)> = (0..count)
        .map(|i| {
            let (nw, vw) = (r.random_range(1..=2), r.random_range(0..=max_words));
            (format!("{} {i}", phrase(r, nw)), phrase(r, vw))
        })
        .collect();
    EntityRecord::new(format!("r{}", r.random_range(0..1000)), attrs).unwrap()
}

pub fn serialization_round_trip(instances: usize) -> Check {
    for k in 0..instances {
        let mut r = rng(5000 + k as u64);
        let e = random_record(&mut r, 8);
        let text = serialize_entity(&e).map_err(|x| x.to_string())?;
        let back = parse_serialized(&text).map_err(|x| format!("record {k}: {x}"))?;
        if back.attributes() != e.attributes() {
            return Err(format!("record {k}: {text:?} parsed to {back}"));
        }
    }
    Ok(format!("{instances} records round-trip"))
}

fn check_spans(tok: &WordPieceTokenizer, p: &CandidatePair, max_len: usize) -> Result<bool, String> {
    let sp = tokenize_with_spans(tok, p, max_len).map_err(|e| e.to_string())?;
    let ids = &sp.token_ids;
    let full = tok.encode(&sp.text);
    if sp.truncated != (full.len() > max_len) {
        return Err(format!("truncated flag {} for {} full tokens", sp.truncated, full.len()));
    }
    if !sp.truncated && ids != &full {
        return Err("untruncated ids differ from encoding the serialized text".into());
    }
    if sp.truncated && ids.len() != max_len {
        return Err(format!("truncated to {} tokens instead of {max_len}", ids.len()));
    }
    let (cls, sep, col, val) = (tok.special(CLS), tok.special(SEP), tok.special(COL), tok.special(VAL));
    if ids[0] != cls || ids[sp.sep_index] != sep || *ids.last().unwrap() != sep {
        return Err("misplaced [CLS]/[SEP]".into());
    }
    let mut cursor = 1;
    for (side, (e, spans)) in [(&p.left, &sp.left_spans), (&p.right, &sp.right_spans)].into_iter().enumerate() {
        if spans.len() != e.len() {
            return Err(format!("{} spans for {} attributes", spans.len(), e.len()));
        }
        for (i, ((name, value), s)) in e.attributes().iter().zip(spans).enumerate() {
            let name_ids = tok.encode_text(name);
            let expect_start = cursor + 2 + name_ids.len();
            if s.attr_index != i || s.start != expect_start || s.end < s.start {
                return Err(format!("span {s:?} should start at {expect_start}"));
            }
            if ids[cursor] != col || ids[cursor + 1..s.start - 1] != name_ids[..] || ids[s.start - 1] != val {
                return Err(format!("attribute {i}: name or markers altered"));
            }
            let value_ids = tok.encode_text(value);
            if !value_ids.starts_with(&ids[s.start..s.end]) || (!sp.truncated && s.len() != value_ids.len()) {
                return Err(format!("attribute {i}: span is not a prefix of the value tokens"));
            }
            cursor = s.end;
        }
        if side == 0 && cursor != sp.sep_index {
            return Err("left spans do not end at the separator".into());
        }
        cursor += 1;
    }
    if cursor != ids.len() {
        return Err("trailing tokens after the last span".into());
    }
    Ok(sp.truncated)
}

/// Span soundness on random pairs; every tenth pair carries long values
/// that force truncation at `max_len`.
pub fn span_soundness(instances: usize, max_len: usize) -> Check {
    let mut r = rng(6000);
    let corpus: Vec<String> = (0..50).map(|_| phrase(&mut r, 20)).collect();
    let tok = WordPieceTokenizer::train(corpus.iter().map(String::as_str), 60, 2);
    let mut forced = 0;
    for k in 0..instances {
        let mut r = rng(7000 + k as u64);
        let long = k % 10 == 0;
        let words = if long { 300 } else { 6 };
        let p = CandidatePair::unlabeled(random_record(&mut r, words), random_record(&mut r, words));
        let truncated = check_spans(&tok, &p, max_len).map_err(|e| format!("pair {k}: {e}"))?;
        if long && !truncated {
            let mut fill = p.left.clone();
            let v = phrase(&mut r, 600);
            fill = fill.with_value(0, v);
            let q = CandidatePair::unlabeled(fill, p.right.clone());
            if !check_spans(&tok, &q, max_len).map_err(|e| format!("pair {k}: {e}"))? {
                return Err(format!("pair {k}: 600-word value was not truncated"));
            }
        }
        forced += long as usize;
    }
    Ok(format!("{instances} pairs, {forced} forced truncations at max_len {max_len}"))
}

/// Loads a Magellan directory and compares its summary row and 3:1:1 split.
pub fn dataset_shape(dir: &Path, expect: &str) -> Check {
    let bundle = load_magellan_dataset(dir).map_err(|e| e.to_string())?;
    let summary = DatasetSummary::of(&bundle).to_string();
    if summary != expect {
        return Err(format!("summary {summary:?}, expected {expect:?}"));
    }
    split_ratio(&bundle).map(|s| format!("{summary}; {s}"))
}

/// Sizes of the seeded split against 3/5, 1/5, rest.
pub fn split_ratio(bundle: &DatasetBundle) -> Check {
    let (tr, va, te) = split_dataset(bundle, 0).map_err(|e| e.to_string())?;
    let sizes = (tr.len(), va.len(), te.len());
    let k = bundle.len();
    if sizes != (3 * k / 5, k / 5, k - 3 * k / 5 - k / 5) {
        return Err(format!("split sizes {sizes:?} for {k} pairs"));
    }
    Ok(format!("split {}/{}/{}", sizes.0, sizes.1, sizes.2))
}

/// UIS-style generated data: heterogeneous 4-4 schema, requested counts.
pub fn generated_uis_shape(people: usize, negatives: usize) -> Check {
    let base = synthesize_people(people, 0);
    let opts = UisOptions {
        negatives,
        ..Default::default()
    };
    let t = generate_uis_tables(&base, &opts, 0).map_err(|e| e.to_string())?;
    let bundle = DatasetBundle::new("uis", SplitTag::Unsplit, t.pairs);
    let summary = DatasetSummary::of(&bundle).to_string();
    let expect = format!("{} {people} 4-4", people + negatives);
    if summary != expect {
        return Err(format!("summary {summary:?}, expected {expect:?}"));
    }
    split_ratio(&bundle).map(|s| format!("{summary}; {s}"))
}
