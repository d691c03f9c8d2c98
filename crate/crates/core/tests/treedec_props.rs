mod common;

use std::collections::BTreeMap;

use msogame::cli::random_graph;
use msogame::structure::Structure;
use msogame::treedec::{min_fill_td, nicify, parse_td, validate_td, NiceKind, TreeDecomposition};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{min_degree_order, td_from_order};

fn graph(seed: u64, n: usize, p: f64) -> Structure {
    random_graph(n, p, &mut ChaCha8Rng::seed_from_u64(seed))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn min_fill_is_valid(seed in any::<u64>(), n in 1usize..=25, p in 0.0f64..0.5) {
        let a = graph(seed, n, p);
        let td = min_fill_td(&a);
        prop_assert!(validate_td(&td, &a).is_ok());
    }

    #[test]
    fn td_text_round_trips(seed in any::<u64>(), n in 1usize..=20, p in 0.0f64..0.5) {
        let a = graph(seed, n, p);
        let td = min_fill_td(&a);
        let back = parse_td(&td.to_td_string()).unwrap();
        prop_assert_eq!(&back.bags, &td.bags);
        prop_assert_eq!(&back.edges, &td.edges);
        prop_assert_eq!(back.n_vertices, td.n_vertices);
        prop_assert_eq!(back.to_td_string(), td.to_td_string());
    }

    #[test]
    fn nicify_keeps_validity_and_width(seed in any::<u64>(), n in 1usize..=20, p in 0.0f64..0.5, root in any::<usize>()) {
        let a = graph(seed, n, p);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let order = min_degree_order(&a, &mut rng);
        let td = td_from_order(&a, &order, root);
        prop_assert!(validate_td(&td, &a).is_ok());
        let ntd = nicify(&td).unwrap();
        prop_assert!(ntd.check_kinds().is_ok());
        prop_assert!(validate_td(&ntd.to_td(n), &a).is_ok());
        prop_assert_eq!(ntd.width(), td.width());
        let mut forgets: BTreeMap<u32, usize> = BTreeMap::new();
        for node in &ntd.nodes {
            if let NiceKind::Forget(x) = node.kind {
                *forgets.entry(x).or_default() += 1;
            }
        }
        prop_assert_eq!(forgets.len(), n);
        prop_assert!(forgets.values().all(|&c| c == 1));
    }
}

#[test]
fn missing_edge_is_reported() {
    let a = Structure::graph(3, &[(1, 2), (2, 3), (1, 3)]).unwrap();
    let td = TreeDecomposition::path(vec![vec![1, 2], vec![2, 3]], 3);
    let report = validate_td(&td, &a).unwrap_err();
    assert!(!report.0.is_empty());
    assert!(report.to_string().contains('1') && report.to_string().contains('3'));
}

#[test]
fn disconnected_occurrences_are_reported() {
    let a = Structure::graph(3, &[(1, 2), (2, 3)]).unwrap();
    let td = TreeDecomposition::path(vec![vec![1, 2], vec![2, 3], vec![1]], 3);
    assert!(validate_td(&td, &a).is_err());
}
