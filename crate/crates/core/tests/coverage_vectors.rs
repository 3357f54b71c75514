mod common;

use proptest::prelude::*;
use vpfuzz::coverage::record_edge;

#[test]
fn committed_vectors() {
    let v = common::edge_vectors();
    assert!(v.len() >= 10);
    for (prev, pc, index, next) in v {
        assert_eq!(record_edge(prev, pc), (index, next), "prev={prev:#x} pc={pc:#x}");
    }
}

#[test]
fn vectors_agree_with_scalar_oracle() {
    for (prev, pc, index, next) in common::edge_vectors() {
        assert_eq!(common::edge_oracle(prev, pc), (index, next));
    }
}

proptest! {
    #[test]
    fn matches_scalar_oracle(prev in 0u32..0x8000, pc: u32) {
        prop_assert_eq!(record_edge(prev, pc), common::edge_oracle(prev, pc));
    }
}
