#![allow(dead_code)]

pub mod checks;

use emcar_core::data::{generate_uis_tables, synthesize_people, UisOptions};
use emcar_core::{DatasetBundle, SplitTag};

/// 10 matching and 10 non-matching heterogeneous person pairs.
pub fn toy_set(seed: u64) -> DatasetBundle {
    let people = synthesize_people(10, seed);
    let opts = UisOptions {
        negatives: 10,
        ..Default::default()
    };
    let tables = generate_uis_tables(&people, &opts, seed).unwrap();
    DatasetBundle::new("toy", SplitTag::Train, tables.pairs)
}

/// Larger labeled set drawn the same way.
pub fn uis_set(people: usize, negatives: usize, seed: u64) -> DatasetBundle {
    let base = synthesize_people(people, seed);
    let opts = UisOptions {
        negatives,
        ..Default::default()
    };
    let tables = generate_uis_tables(&base, &opts, seed).unwrap();
    DatasetBundle::new("uis", SplitTag::Unsplit, tables.pairs)
}

pub mod oracle {
    //! Plain-loop f64 reimplementations used as independent references.

    pub type Mat = Vec<Vec<f64>>;

    pub fn matmul(a: &Mat, b: &Mat) -> Mat {
        let (n, k, m) = (a.len(), b.len(), b.first().map_or(0, |r| r.len()));
        let mut out = vec![vec![0.0; m]; n];
        for i in 0..n {
            for j in 0..m {
                for t in 0..k {
                    out[i][j] += a[i][t] * b[t][j];
                }
            }
        }
        out
    }

    pub fn transpose(a: &Mat) -> Mat {
        let m = a.first().map_or(0, |r| r.len());
        (0..m).map(|j| a.iter().map(|r| r[j]).collect()).collect()
    }

    pub fn softmax_rows(a: &Mat) -> Mat {
        a.iter()
            .map(|r| {
                let top = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = r.iter().map(|x| (x - top).exp()).collect();
                let s: f64 = e.iter().sum();
                e.iter().map(|x| x / s).collect()
            })
            .collect()
    }

    /// softmax(H W Hᵀ) row-wise.
    pub fn attention(hs: &Mat, w: &Mat, ht: &Mat) -> Mat {
        softmax_rows(&matmul(&matmul(hs, w), &transpose(ht)))
    }

    /// Column sums divided by their maximum.
    pub fn m2v_columns(a: &Mat) -> Vec<f64> {
        let n = a[0].len();
        let mut sums = vec![0.0; n];
        for row in a {
            for (j, v) in row.iter().enumerate() {
                sums[j] += v;
            }
        }
        let top = sums.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        sums.iter().map(|s| s / top).collect()
    }

    #[derive(Clone, Debug)]
    pub struct Params {
        pub w_self: Mat,
        pub w_inter: Mat,
        pub w_h: Mat,
        pub b_h: Vec<f64>,
        pub w_t: Mat,
        pub b_t: Vec<f64>,
        pub w_c: Vec<f64>,
        pub c_c: f64,
    }

    fn sigmoid(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    /// Score of each source token against its attended vector.
    pub fn compare(h: &Mat, att: &Mat, p: &Params) -> Vec<f64> {
        h.iter()
            .zip(att)
            .map(|(x, a)| {
                let mut u: Vec<f64> = x.iter().zip(a).map(|(x, a)| (x - a).abs()).collect();
                u.extend(x.iter().zip(a).map(|(x, a)| x * a));
                let w = u.len();
                let mut score = p.c_c;
                for k in 0..w {
                    let mut t = p.b_t[k];
                    let mut g = p.b_h[k];
                    for r in 0..w {
                        t += u[r] * p.w_t[r][k];
                        g += u[r] * p.w_h[r][k];
                    }
                    let t = sigmoid(t);
                    let y = t * g.max(0.0) + (1.0 - t) * u[k];
                    score += p.w_c[k] * y;
                }
                score
            })
            .collect()
    }

    /// One direction: R[i][j] for source attributes `src` against target
    /// attributes `tgt`, each a list of token vectors.
    pub fn directional(src: &[Mat], tgt: &[Mat], p: &Params) -> Mat {
        src.iter()
            .map(|hi| {
                tgt.iter()
                    .map(|hj| {
                        if hi.is_empty() || hj.is_empty() {
                            return 0.0;
                        }
                        let alpha = attention(hi, &p.w_self, hi);
                        let weights = m2v_columns(&alpha);
                        let beta = attention(hi, &p.w_inter, hj);
                        let attended = matmul(&beta, hj);
                        let c = compare(hi, &attended, p);
                        c.iter().zip(&weights).map(|(c, w)| c * w).sum()
                    })
                    .collect()
            })
            .collect()
    }

    /// Direction-fused matrix ½(R_lr + R_rlᵀ), or R_lr alone.
    pub fn similarity(left: &[Mat], right: &[Mat], p: &Params, fuse: bool) -> Mat {
        let lr = directional(left, right, p);
        if !fuse {
            return lr;
        }
        let rl = directional(right, left, p);
        (0..left.len())
            .map(|i| (0..right.len()).map(|j| 0.5 * (lr[i][j] + rl[j][i])).collect())
            .collect()
    }
}

pub mod random {
    //! Random attention inputs at fp64 for property tests.

    use super::oracle::{Mat, Params};
    use candle_core::{DType, Device, Tensor};
    use emcar_core::attnet::{AttentionParams, TokenEmbeddings};
    use emcar_core::serializer::AttrSpan;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    pub fn mat(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> Mat {
        (0..r)
            .map(|_| (0..c).map(|_| rng.random_range(-scale..scale)).collect())
            .collect()
    }

    pub fn vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-scale..scale)).collect()
    }

    pub fn t2(m: &Mat) -> Tensor {
        let (r, c) = (m.len(), m.first().map_or(0, |x| x.len()));
        let flat: Vec<f64> = m.iter().flatten().copied().collect();
        Tensor::from_vec(flat, (r, c), &Device::Cpu).unwrap()
    }

    pub fn t1(v: &[f64]) -> Tensor {
        Tensor::from_vec(v.to_vec(), v.len(), &Device::Cpu).unwrap()
    }

    pub fn to_mat(t: &Tensor) -> Mat {
        t.to_dtype(DType::F64).unwrap().to_vec2().unwrap()
    }

    pub fn params(rng: &mut ChaCha8Rng, d: usize) -> Params {
        let s = 1.0 / (d as f64).sqrt();
        Params {
            w_self: mat(rng, d, d, s),
            w_inter: mat(rng, d, d, s),
            w_h: mat(rng, 2 * d, 2 * d, s),
            b_h: vec(rng, 2 * d, 0.5),
            w_t: mat(rng, 2 * d, 2 * d, s),
            b_t: vec(rng, 2 * d, 0.5),
            w_c: vec(rng, 2 * d, s),
            c_c: rng.random_range(-0.5..0.5),
        }
    }

    pub fn to_tensors(p: &Params) -> AttentionParams {
        AttentionParams {
            w_self: t2(&p.w_self),
            w_inter: t2(&p.w_inter),
            w_h: t2(&p.w_h),
            b_h: t1(&p.b_h),
            w_t: t2(&p.w_t),
            b_t: t1(&p.b_t),
            w_c: t1(&p.w_c),
            c_c: t1(&[p.c_c]),
        }
    }

    /// A random pair laid out as `[CLS] marker+values... [SEP] ... [SEP]`
    /// with one filler row before each attribute's value tokens.
    pub struct Case {
        pub emb: TokenEmbeddings,
        pub left: Vec<Mat>,
        pub right: Vec<Mat>,
    }

    pub fn case(rng: &mut ChaCha8Rng, d: usize, lens_l: &[usize], lens_r: &[usize]) -> Case {
        let mut rows: Mat = vec![vec(rng, d, 1.0)];
        let side = |lens: &[usize], rows: &mut Mat, rng: &mut ChaCha8Rng| {
            let mut spans = Vec::new();
            let mut blocks = Vec::new();
            for (i, &l) in lens.iter().enumerate() {
                rows.push(vec(rng, d, 1.0));
                let start = rows.len();
                let block = mat(rng, l, d, 1.0);
                rows.extend(block.iter().cloned());
                spans.push(AttrSpan {
                    attr_index: i,
                    start,
                    end: rows.len(),
                });
                blocks.push(block);
            }
            rows.push(vec(rng, d, 1.0));
            (spans, blocks)
        };
        let (left_spans, left) = side(lens_l, &mut rows, rng);
        let (right_spans, right) = side(lens_r, &mut rows, rng);
        let vectors = t2(&rows);
        Case {
            emb: TokenEmbeddings {
                pooled: vectors.get(0).unwrap(),
                vectors,
                left_spans,
                right_spans,
            },
            left,
            right,
        }
    }

    /// Attribute token counts: `count` attributes of 1..=max_len tokens.
    pub fn lens(rng: &mut ChaCha8Rng, count: usize, max_len: usize) -> Vec<usize> {
        (0..count).map(|_| rng.random_range(1..=max_len)).collect()
    }
}

pub mod replica {
    //! Magellan-layout directories with the published benchmark shapes
    //! (attribute names, split sizes and positive counts). The records are
    //! synthetic; only the layout and counts follow the originals.

    use std::path::Path;

    use emcar_core::data::{write_pairs, write_table, LEFT_TABLE, RIGHT_TABLE};
    use emcar_core::{CandidatePair, EntityRecord};

    pub struct Shape {
        pub attributes: &'static [&'static str],
        /// (file, pairs, positives)
        pub splits: &'static [(&'static str, usize, usize)],
    }

    pub const ITUNES_AMAZON: Shape = Shape {
        attributes: &["Song_Name", "Artist_Name", "Album_Name", "Genre", "Price", "CopyRight", "Time", "Released"],
        splits: &[("train.csv", 321, 78), ("valid.csv", 109, 27), ("test.csv", 109, 27)],
    };

    pub const DBLP_SCHOLAR: Shape = Shape {
        attributes: &["title", "authors", "venue", "year"],
        splits: &[("train.csv", 17223, 3207), ("valid.csv", 5742, 1070), ("test.csv", 5742, 1070)],
    };

    fn record(prefix: &str, i: usize, attrs: &[&str]) -> EntityRecord {
        EntityRecord::new(
            format!("{i}"),
            attrs.iter().enumerate().map(|(k, a)| (a.to_string(), format!("{prefix} {a} {i} {k}"))),
        )
        .unwrap()
    }

    /// Writes tables and split files; left record `i` matches right record `i`.
    pub fn write(dir: &Path, shape: &Shape) {
        std::fs::create_dir_all(dir).unwrap();
        let total: usize = shape.splits.iter().map(|s| s.1).sum();
        let left: Vec<EntityRecord> = (0..total).map(|i| record("a", i, shape.attributes)).collect();
        let right: Vec<EntityRecord> = (0..total).map(|i| record("b", i, shape.attributes)).collect();
        write_table(&dir.join(LEFT_TABLE), &left).unwrap();
        write_table(&dir.join(RIGHT_TABLE), &right).unwrap();
        let mut next = 0;
        for &(file, size, positives) in shape.splits {
            let pairs: Vec<CandidatePair> = (next..next + size)
                .enumerate()
                .map(|(k, i)| {
                    let j = if k < positives { i } else { (i + 1) % total };
                    CandidatePair::labeled(left[i].clone(), right[j].clone(), k < positives)
                })
                .collect();
            write_pairs(&dir.join(file), &pairs).unwrap();
            next += size;
        }
    }
}
