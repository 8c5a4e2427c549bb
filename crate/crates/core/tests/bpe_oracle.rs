mod support;

use std::collections::BTreeMap;

use proptest::prelude::*;
use vulnrank_core::bpe::{apply_bpe, learn_bpe};

fn micro_corpus() -> impl Strategy<Value = BTreeMap<String, u64>> {
    prop::collection::btree_map("[abcd_]{1,8}", 1u64..6, 1..=20)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]
    #[test]
    fn merges_match_exhaustive_recount(words in micro_corpus(), n in 0usize..=30) {
        let (table, vocab) = learn_bpe(&words, n);
        let expected = support::bpe_oracle(&words, n);
        prop_assert_eq!(table.merges(), expected.as_slice());
        for w in words.keys() {
            let pieces = apply_bpe(w, &table);
            prop_assert_eq!(&pieces.concat(), w);
            for p in &pieces {
                prop_assert!(vocab.id(p).is_some(), "{} missing from vocab", p);
            }
        }
    }
}

#[test]
fn classic_example() {
    let words: BTreeMap<String, u64> = [("low", 5), ("lower", 2), ("newest", 6), ("widest", 3)]
        .iter()
        .map(|(w, c)| (w.to_string(), *c))
        .collect();
    let (table, _) = learn_bpe(&words, 4);
    assert_eq!(table.merges(), support::bpe_oracle(&words, 4).as_slice());
    // e-s and s-t both count 9; (e, s) sorts first
    assert_eq!(table.merges()[0], ("e".to_string(), "s".to_string()));
}
