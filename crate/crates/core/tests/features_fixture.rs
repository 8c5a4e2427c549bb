use std::collections::BTreeSet;
use std::path::Path;

use vulnrank_core::corpus::extract_functions;
use vulnrank_core::features::{function_length, longest_line, token_prevalence, TrimmedLexicon};

fn fixture(name: &str) -> String {
    std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/features").join(name)).unwrap()
}

/// (name, fn_length, longest_line, param_count, distinct lexicon hits)
fn expected() -> Vec<(String, usize, usize, usize, usize)> {
    fixture("expected.tsv")
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| {
            let f: Vec<&str> = l.split('\t').collect();
            (
                f[0].to_string(),
                f[1].parse().unwrap(),
                f[2].parse().unwrap(),
                f[3].parse().unwrap(),
                f[4].parse().unwrap(),
            )
        })
        .collect()
}

fn lexicon() -> TrimmedLexicon {
    TrimmedLexicon {
        tokens: ["strcpy", "free", "buf", "len", "memcpy", "malloc"]
            .iter()
            .map(|s| s.to_string())
            .collect::<BTreeSet<_>>(),
        lower_cut: 1,
        upper_cut_percentile: 100.0,
    }
}

#[test]
fn hand_counted_heuristics() {
    let out = extract_functions(&fixture("features.c"), "features.c");
    let want = expected();
    assert_eq!(want.len(), 20);
    assert_eq!(out.records.len(), 20);
    let lex = lexicon();
    for (rec, (name, len, longest, params, hits)) in out.records.iter().zip(&want) {
        assert_eq!(&rec.name, name);
        assert_eq!(function_length(rec), *len, "{name}");
        assert_eq!(longest_line(rec), *longest, "{name}");
        assert_eq!(rec.param_count, *params, "{name}");
        let p = token_prevalence(rec, &lex);
        assert!((p - *hits as f64 / *len as f64).abs() <= 1e-12, "{name}: {p}");
    }
}

#[test]
fn four_parameter_example() {
    let out = extract_functions("void myFunc(int, int, double, char*) { }", "x.c");
    assert_eq!(out.records.len(), 1);
    assert_eq!(out.records[0].param_count, 4);
}
