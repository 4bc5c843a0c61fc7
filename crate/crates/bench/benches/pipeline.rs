use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use emcar_core::attnet::attribute_similarity_matrix;
use emcar_core::data::{generate_uis_tables, synthesize_people, UisOptions};
use emcar_core::matcher::EmCarModel;
use emcar_core::serializer::serialize_pair;
use emcar_core::{DatasetBundle, ModelConfig, SplitTag};

fn fixture() -> (EmCarModel, DatasetBundle) {
    let people = synthesize_people(64, 0);
    let opts = UisOptions {
        negatives: 64,
        ..Default::default()
    };
    let tables = generate_uis_tables(&people, &opts, 0).unwrap();
    let set = DatasetBundle::new("bench", SplitTag::Unsplit, tables.pairs);
    let cfg = ModelConfig::default();
    let tok = cfg.build_tokenizer(&[&set]).unwrap();
    (EmCarModel::new(&cfg, tok, 256, 0).unwrap(), set)
}

fn pipeline(c: &mut Criterion) {
    let (model, set) = fixture();
    let pair = &set.pairs[0];

    c.bench_function("serialize_pair", |b| b.iter(|| serialize_pair(black_box(pair)).unwrap()));
    c.bench_function("encode_pairs/128", |b| b.iter(|| model.encode_pairs(black_box(&set.pairs)).unwrap()));

    let encoded = model.encode_pairs(&set.pairs[..32]).unwrap();
    let refs: Vec<_> = encoded.iter().collect();
    c.bench_function("encoder_forward/32", |b| b.iter(|| model.embed(black_box(&refs), None).unwrap()));

    let emb = model.embed(&refs[..1], None).unwrap().remove(0);
    let attn = &model.config().attention;
    c.bench_function("similarity_matrix", |b| {
        b.iter(|| attribute_similarity_matrix(black_box(&emb), model.attention(), attn).unwrap())
    });

    c.bench_function("predict_pairs/128", |b| {
        b.iter_batched(|| set.pairs.clone(), |p| model.predict_pairs(&p, 32).unwrap(), BatchSize::LargeInput)
    });
}

criterion_group!(benches, pipeline);
criterion_main!(benches);
