//! Structural invariants of the data layer and the metrics.

use std::collections::HashSet;

use proptest::prelude::*;
use textnet_core::corpus::{load_graph, pad_and_mask, split_edges, split_nodes_unseen, save_graph, TextualGraph, TokenId};
use textnet_core::eval::{auc_score, f1_macro};

fn arb_graph() -> impl Strategy<Value = TextualGraph> {
    (2usize..25).prop_flat_map(|n| {
        let edges = proptest::collection::vec((0..n, 0..n), 1..60);
        let texts = proptest::collection::vec(proptest::collection::vec("[a-z]{1,4}", 0..5), n);
        (Just(n), edges, texts).prop_map(|(n, edges, texts)| {
            let mut seen = HashSet::new();
            let edges: Vec<_> = edges
                .into_iter()
                .filter(|&(u, v)| u != v && seen.insert((u.min(v), u.max(v))))
                .collect();
            TextualGraph::new(n, edges, texts).unwrap()
        })
    })
}

proptest! {
    #[test]
    fn edge_split_partitions_edges(g in arb_graph(), ratio in 1.0f64..=100.0, seed: u64) {
        let s = split_edges(&g, ratio, seed).unwrap();
        let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..g.edge_count()).collect::<Vec<_>>());
        prop_assert_eq!(s.train.len(), (ratio / 100.0 * g.edge_count() as f64).round() as usize);
    }

    #[test]
    fn unseen_split_keeps_no_edge_touching_unseen_nodes(g in arb_graph(), ratio in 1.0f64..99.0, seed: u64) {
        // ratios that leave one side empty are rejected up front
        let s = split_nodes_unseen(&g, ratio, seed);
        prop_assume!(s.is_ok());
        let s = s.unwrap();
        let train = s.train_edges(&g);
        let test = s.test_edges(&g);
        let mut seen = vec![false; g.node_count()];
        s.seen.iter().for_each(|&v| seen[v] = true);
        prop_assert_eq!(s.seen.len() + s.unseen.len(), g.node_count());
        prop_assert!(s.unseen.iter().all(|&v| !seen[v]));
        prop_assert_eq!(train.len() + test.len(), g.edge_count());
        for (u, v) in train {
            prop_assert!(seen[u] && seen[v]);
        }
        for (u, v) in test {
            prop_assert!(!seen[u] || !seen[v]);
        }
    }

    #[test]
    fn padding_mask_counts_real_tokens(tokens in proptest::collection::vec(1u32..50, 0..30), max_len in 1usize..20) {
        let tokens: Vec<TokenId> = tokens.into_iter().map(|t| t as TokenId).collect();
        let p = pad_and_mask(&tokens, max_len);
        prop_assert_eq!(p.len(), max_len);
        prop_assert_eq!(p.real_len(), tokens.len().min(max_len));
        prop_assert!(p.ids.iter().zip(&p.mask).all(|(&id, &m)| m == (id != 0)));
    }

    #[test]
    fn degrees_sum_to_twice_edge_count(g in arb_graph()) {
        prop_assert_eq!(g.degrees().iter().sum::<usize>(), 2 * g.edge_count());
    }

    #[test]
    fn graph_files_round_trip(g in arb_graph()) {
        let dir = tempfile::tempdir().unwrap();
        let (e, t) = (dir.path().join("edges.txt"), dir.path().join("texts.txt"));
        save_graph(&g, &e, &t, None).unwrap();
        let back = load_graph(&e, &t, None).unwrap();
        prop_assert_eq!(back.self_loops_dropped + back.duplicates_dropped, 0);
        prop_assert_eq!(back.graph, g);
    }

    #[test]
    fn auc_ignores_strictly_increasing_transforms(
        pos in proptest::collection::vec(-10.0f64..10.0, 1..50),
        neg in proptest::collection::vec(-10.0f64..10.0, 1..50),
    ) {
        let f = |x: &f64| (x / 3.0).exp() + x;
        let a = auc_score(&pos, &neg).unwrap();
        let pt: Vec<f64> = pos.iter().map(f).collect();
        let nt: Vec<f64> = neg.iter().map(f).collect();
        prop_assert_eq!(a, auc_score(&pt, &nt).unwrap());
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn macro_f1_ignores_sample_order_and_class_names(
        pairs in proptest::collection::vec((0usize..4, 0usize..4), 1..80),
        rot in 0usize..4,
        seed: u64,
    ) {
        let (pred, truth): (Vec<_>, Vec<_>) = pairs.iter().copied().unzip();
        let base = f1_macro(&pred, &truth, 4).unwrap();
        let mut shuffled = pairs.clone();
        let mut rng = textnet_core::numerics::RngStream::new(seed, textnet_core::numerics::Substream::Split);
        rng.shuffle(&mut shuffled);
        let rename = |c: usize| (c + rot) % 4;
        let (p2, t2): (Vec<_>, Vec<_>) = shuffled.iter().map(|&(p, t)| (rename(p), rename(t))).unzip();
        prop_assert!((base - f1_macro(&p2, &t2, 4).unwrap()).abs() < 1e-12);
    }
}
