mod common;

use common::formats;

#[test]
fn containers_roundtrip_bit_for_bit() {
    assert!(formats::container_roundtrip());
}

#[test]
fn datasets_depend_only_on_the_seed() {
    assert!(formats::datasets_are_deterministic());
}

#[test]
fn checkpoints_depend_only_on_the_seed() {
    assert!(formats::checkpoints_are_deterministic());
}

#[test]
fn reports_depend_only_on_the_seed() {
    assert!(formats::reports_are_deterministic());
}
