use std::path::Path;

use proptest::prelude::*;
use sigvae::splitfile::{format_split, parse_split, read_split, write_split, SplitFile};
use sigvae_core::graph::{split_edges, torus_graph, EdgeSplit};

#[test]
fn toy_counts_are_recorded() {
    // 10x5 torus: 100 edges.
    let g = torus_graph(10, 5).unwrap();
    let file = SplitFile { n: g.n(), split: split_edges(&g, 3).unwrap() };
    let text = format_split(&file);
    for header in ["seed 3", "n 50", "train_pos 85", "val_pos 5", "test_pos 10", "val_neg 5", "test_neg 10"] {
        assert!(text.lines().any(|l| l == header), "missing {header}");
    }
    assert_eq!(parse_split(&text, Path::new("mem")).unwrap(), file);
}

#[test]
fn writes_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let g = torus_graph(6, 6).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for p in [&a, &b] {
        write_split(p, &SplitFile { n: g.n(), split: split_edges(&g, 11).unwrap() }).unwrap();
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(read_split(&a).unwrap().split, split_edges(&g, 11).unwrap());
}

#[test]
fn rejects_damaged_files() {
    let g = torus_graph(5, 5).unwrap();
    let text = format_split(&SplitFile { n: g.n(), split: split_edges(&g, 0).unwrap() });
    let p = Path::new("mem");
    assert!(parse_split("", p).is_err());
    assert!(parse_split(&text.replace("seed 0", "seed x"), p).is_err());
    assert!(parse_split(&text[..text.len() / 2], p).is_err());
    assert!(parse_split(&text.replacen("n 25", "n 3", 1), p).is_err());
}

fn pairs() -> impl Strategy<Value = Vec<(usize, usize)>> {
    prop::collection::vec((0usize..40, 0usize..40).prop_filter("distinct", |(a, b)| a != b), 0..20)
}

proptest! {
    #[test]
    fn format_parse_round_trip(seed in any::<u64>(), lists in prop::array::uniform5(pairs())) {
        let [train_pos, val_pos, test_pos, val_neg, test_neg] = lists;
        let file = SplitFile { n: 40, split: EdgeSplit { seed, train_pos, val_pos, test_pos, val_neg, test_neg } };
        prop_assert_eq!(parse_split(&format_split(&file), Path::new("mem")).unwrap(), file);
    }
}
