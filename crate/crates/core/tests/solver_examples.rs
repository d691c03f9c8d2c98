mod common;

use std::collections::BTreeSet;

use msogame::game::Game;
use msogame::logic::Symbol;
use msogame::oracle::brute_force_linmso;
use msogame::problems::{builtin, load_problem};
use msogame::solver::{solve, DpTable, SolveOptions, Solver, Value};
use msogame::structure::{Interp, Structure};
use msogame::treedec::{min_fill_td, nicify, TreeDecomposition};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn graph(n: usize, edges: &[(u32, u32)]) -> Structure {
    Structure::graph(n, edges).unwrap()
}

fn solver<'a>(a: &'a Structure, p: &'a msogame::solver::Problem) -> Solver<'a> {
    Solver::new(a, p, SolveOptions::default()).unwrap()
}

#[test]
fn solve_examples_match_oracle() {
    let cases = [
        ("vc", graph(2, &[(1, 2)]), Value::Finite(1)),
        (
            "3col",
            graph(3, &[(1, 2), (2, 3), (1, 3)]),
            Value::Finite(0),
        ),
        (
            "3col",
            graph(4, &[(1, 2), (1, 3), (1, 4), (2, 3), (2, 4), (3, 4)]),
            Value::Infinity,
        ),
    ];
    for (name, a, want) in cases {
        let p = builtin(name).unwrap();
        assert_eq!(brute_force_linmso(&a, &p).unwrap(), want);
        let ntd = nicify(&min_fill_td(&a)).unwrap();
        assert_eq!(solve(&a, &ntd, &p).unwrap().value, want, "{name}");
    }
}

#[test]
fn k4_with_width_three_path_is_not_colourable() {
    let a = graph(4, &[(1, 2), (1, 3), (1, 4), (2, 3), (2, 4), (3, 4)]);
    let ntd = nicify(&TreeDecomposition::path(vec![vec![1, 2, 3, 4]], 4)).unwrap();
    assert_eq!(ntd.width(), 3);
    assert_eq!(
        solve(&a, &ntd, &builtin("3col").unwrap()).unwrap().value,
        Value::Infinity
    );
}

#[test]
fn leaf_tables() {
    let a = graph(1, &[]);
    let vc = builtin("vc").unwrap();
    let mut s = solver(&a, &vc);
    let t = s.handle_leaf(1).unwrap();
    let with_x = t.cell(&[1]).unwrap();
    assert_eq!(with_x.len(), 1);
    assert_eq!(with_x.values().copied().collect::<Vec<_>>(), vec![0]);
    let without = t.cell(&[0]).unwrap();
    assert_eq!(without.len(), 1);
    let g = *without.keys().next().unwrap();
    assert!(
        !g.is_top() && !g.is_bottom(),
        "a future neighbour may still need covering"
    );

    let col = builtin("3col").unwrap();
    let mut s = solver(&a, &col);
    let t = s.handle_leaf(1).unwrap();
    assert_eq!(t.cell_count(), 1);
    assert_eq!(t.entry_count(), 1);
}

/// Every table entry against the reduced games of all expansions of `sub`
/// with `X` the bag.
fn matches_expansions(s: &mut Solver<'_>, sub: &Structure, t: &DpTable) {
    let x: BTreeSet<u32> = t.bag.iter().copied().collect();
    let objs: Vec<u32> = sub.universe().iter().copied().collect();
    let mut seen = 0;
    for m in 0..1u64 << objs.len() {
        let c: BTreeSet<u32> = (0..objs.len())
            .filter(|i| m >> i & 1 == 1)
            .map(|i| objs[i])
            .collect();
        let mask = t.mask_of(&c);
        let e = sub.expand(&Symbol::new("C", 1), Interp::Set(c)).unwrap();
        let f = builtin("vc").unwrap().formula;
        let g = s.store().reduce_emc(&e, &x, f.root()).unwrap();
        if g.is_bottom() {
            assert!(t.cell(&[mask]).is_none_or(|cell| cell.is_empty()));
            continue;
        }
        let cell = t.cell(&[mask]).expect("cell for a realizable expansion");
        assert!(cell.contains_key(&g));
        seen += 1;
    }
    assert_eq!(seen, t.entry_count());
}

#[test]
fn introduce_on_an_edge_matches_direct_games() {
    let a = graph(2, &[(1, 2)]);
    let vc = builtin("vc").unwrap();
    let mut s = solver(&a, &vc);
    let leaf = s.handle_leaf(1).unwrap();
    let t = s.handle_introduce(&leaf, 2, &[1, 2]).unwrap();
    assert!(t.cell(&[0]).is_none(), "an uncovered edge has no entry");
    matches_expansions(&mut s, &a, &t);
}

#[test]
fn introducing_an_isolated_vertex_keeps_child_entries() {
    let a = graph(2, &[]);
    let vc = builtin("vc").unwrap();
    let mut s = solver(&a, &vc);
    let leaf = s.handle_leaf(1).unwrap();
    let t = s.handle_introduce(&leaf, 2, &[1, 2]).unwrap();
    for (u, cell) in leaf.cells() {
        for extra in [0u64, 2] {
            let got = t.cell(&[u[0] | extra]).unwrap();
            let mut want: Vec<i64> = cell.values().copied().collect();
            let mut have: Vec<i64> = got.values().copied().collect();
            want.sort_unstable();
            have.sort_unstable();
            assert_eq!(have, want);
        }
    }
    matches_expansions(&mut s, &a, &t);
}

#[test]
fn forgetting_an_isolated_vertex_in_dominating_set() {
    let a = graph(1, &[]);
    let ds = builtin("ds").unwrap();
    let mut s = solver(&a, &ds);
    let leaf = s.handle_leaf(1).unwrap();
    let t = s.handle_forget(&leaf, 1, &[]).unwrap();
    // Both choices stay open until the root: the game still allows a vertex
    // not seen yet, which may be undominated or dominate the forgotten one.
    let mut values: Vec<i64> = t.cell(&[0]).unwrap().values().copied().collect();
    values.sort_unstable();
    assert_eq!(values, vec![0, 1]);
    assert_eq!(s.finalize(&t), Value::Finite(1));
}

#[test]
fn top_entries_survive_introduce() {
    let a = graph(2, &[]);
    let ds = builtin("ds").unwrap();
    let mut s = solver(&a, &ds);
    let mut child = DpTable::new(vec![1]);
    child.offer(Box::new([1]), Game::TOP, 1);
    let t = s.handle_introduce(&child, 2, &[1, 2]).unwrap();
    assert_eq!(t.cell_count(), 2);
    for (_, cell) in t.cells() {
        assert_eq!(cell.len(), 1);
        assert_eq!(cell.get(&Game::TOP), Some(&1));
    }
}

#[test]
fn vertex_cover_of_an_edge_by_hand() {
    let a = graph(2, &[(1, 2)]);
    let vc = builtin("vc").unwrap();
    let mut s = solver(&a, &vc);
    let t = s.handle_leaf(1).unwrap();
    let t = s.handle_introduce(&t, 2, &[1, 2]).unwrap();
    let t = s.handle_forget(&t, 1, &[2]).unwrap();
    let t = s.handle_forget(&t, 2, &[]).unwrap();
    assert_eq!(t.cell(&[0]).unwrap().values().min(), Some(&1));
    assert_eq!(s.finalize(&t), Value::Finite(1));
}

#[test]
fn zero_weights_keep_values_at_zero() {
    let p = load_problem(
        "vocabulary adj/2;\nfree C weight 0;\nobjective min;\nformula all x. all y. (~adj(x,y) | x in C | y in C);\n",
    )
    .unwrap();
    let a = graph(3, &[(1, 2), (2, 3)]);
    let mut s = solver(&a, &p);
    let t = s.handle_leaf(1).unwrap();
    let t = s.handle_introduce(&t, 2, &[1, 2]).unwrap();
    let t = s.handle_forget(&t, 1, &[2]).unwrap();
    let t = s.handle_introduce(&t, 3, &[2, 3]).unwrap();
    let t = s.handle_forget(&t, 2, &[3]).unwrap();
    let t = s.handle_forget(&t, 3, &[]).unwrap();
    for (_, cell) in t.cells() {
        assert!(cell.values().all(|&v| v == 0));
    }
    assert_eq!(s.finalize(&t), Value::Finite(0));
}

#[test]
fn star_by_join() {
    let a = graph(4, &[(1, 2), (1, 3), (1, 4)]);
    for (name, want) in [("ds", 1), ("vc", 1)] {
        let p = builtin(name).unwrap();
        let mut s = solver(&a, &p);
        let l = s.handle_leaf(1).unwrap();
        let l = s.handle_introduce(&l, 2, &[1, 2]).unwrap();
        let left = s.handle_forget(&l, 2, &[1]).unwrap();
        let r = s.handle_leaf(1).unwrap();
        let r = s.handle_introduce(&r, 3, &[1, 3]).unwrap();
        let r = s.handle_forget(&r, 3, &[1]).unwrap();
        let r = s.handle_introduce(&r, 4, &[1, 4]).unwrap();
        let right = s.handle_forget(&r, 4, &[1]).unwrap();
        let j = s.handle_join(&left, &right, &[1]).unwrap();
        for (u, _) in j.cells() {
            assert!(left.cell(u).is_some() && right.cell(u).is_some());
        }
        for (_, cell) in j.cells() {
            let games: Vec<Game> = cell.keys().copied().collect();
            for (i, &g) in games.iter().enumerate() {
                for &h in &games[i + 1..] {
                    assert!(!s.store().equivalent(g, h));
                }
            }
        }
        let root = s.handle_forget(&j, 1, &[]).unwrap();
        assert_eq!(s.finalize(&root), Value::Finite(want), "{name}");
    }
}

#[test]
fn finalize_examples() {
    let a = graph(1, &[]);
    let ds = builtin("ds").unwrap();
    let mut s = solver(&a, &ds);
    let mut top = DpTable::new(Vec::new());
    top.offer(Box::new([0]), Game::TOP, 3);
    assert_eq!(s.finalize(&top), Value::Finite(3));
    assert_eq!(s.finalize(&DpTable::new(Vec::new())), Value::Infinity);
    // An undominated vertex that could only be dominated by a future neighbour.
    let leaf = s.handle_leaf(1).unwrap();
    let open = *leaf.cell(&[0]).unwrap().keys().next().unwrap();
    assert!(!open.is_top() && !open.is_bottom());
    let mut t = DpTable::new(Vec::new());
    t.offer(Box::new([0]), open, 5);
    assert_eq!(s.finalize(&t), Value::Infinity);
}

#[test]
fn maximization_is_negated_minimization() {
    let p = load_problem(
        "vocabulary adj/2;\nfree I weight 1;\nobjective max;\nformula all x. all y. (~adj(x,y) | ~x in I | ~y in I);\n",
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let a = msogame::cli::random_graph(8, 0.35, &mut rng);
        let ntd = nicify(&min_fill_td(&a)).unwrap();
        assert_eq!(
            solve(&a, &ntd, &p).unwrap().value,
            brute_force_linmso(&a, &p).unwrap()
        );
    }
}

#[test]
fn template_cache_agrees_with_fresh_solver() {
    // One solver reuses introduce templates across instances of the same
    // local shape; the optimum must not depend on what was cached before.
    let a = msogame::cli::grid_graph(3, 4, 1.0, &mut ChaCha8Rng::seed_from_u64(0));
    let ntd = nicify(&msogame::cli::grid_path_decomposition(3, 4)).unwrap();
    for name in ["vc", "ds", "3col"] {
        let p = builtin(name).unwrap();
        let got = solve(&a, &ntd, &p).unwrap();
        assert_eq!(got.value, brute_force_linmso(&a, &p).unwrap(), "{name}");
        assert!(got.stats.templates > 0);
    }
}

#[test]
fn mismatched_inputs_are_rejected() {
    let a = graph(3, &[(1, 2), (2, 3)]);
    let vc = builtin("vc").unwrap();
    let bad = nicify(&TreeDecomposition::path(vec![vec![1, 2], vec![3]], 3)).unwrap();
    assert!(solve(&a, &bad, &vc).is_err());
}
