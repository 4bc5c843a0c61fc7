mod common;

use common::checks;
use emcar_core::serializer::{parse_serialized, serialize_entity};
use emcar_core::EntityRecord;
use proptest::prelude::*;

fn word() -> impl Strategy<Value = String> {
    prop_oneof![
        "[a-z]{1,8}",
        "[A-Z][a-z]{0,6}",
        "[0-9]{1,4}(\\.[0-9]{1,2})?",
        "[a-zé]{1,4}[-'/.,()][a-z]{1,4}",
        "[一-龥]{1,3}",
    ]
}

fn value(max: usize) -> impl Strategy<Value = String> {
    prop::collection::vec(word(), 0..=max).prop_map(|w| w.join(" "))
}

fn record() -> impl Strategy<Value = EntityRecord> {
    prop::collection::vec((prop::collection::vec(word(), 1..=2), value(8)), 1..=6).prop_map(|attrs| {
        let attrs = attrs
            .into_iter()
            .enumerate()
            .map(|(i, (name, v))| (format!("{} {i}", name.join(" ")), v));
        EntityRecord::new("x", attrs).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 1000, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn parse_inverts_serialize(e in record()) {
        let back = parse_serialized(&serialize_entity(&e).unwrap()).unwrap();
        prop_assert_eq!(back.attributes(), e.attributes());
    }
}

#[test]
fn seeded_round_trip() {
    println!("{}", checks::serialization_round_trip(1000).unwrap());
}

#[test]
fn spans_are_sound_including_truncation() {
    println!("{}", checks::span_soundness(1000, 256).unwrap());
}
