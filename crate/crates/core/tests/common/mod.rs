#![allow(dead_code)]

pub mod lemmas;

use std::collections::BTreeSet;

use msogame::logic::{parse_formula, to_nnf, Formula, Symbol, Vocabulary};
use msogame::structure::{Interp, Obj, Structure};
use msogame::treedec::{min_fill_td, nicify, NiceTreeDecomposition, TreeDecomposition};
use rand::seq::SliceRandom;
use rand::Rng;

/// Formulas over `adj/2`, `R/1` and the constant `c`, all of quantifier rank at most 3.
pub const CORPUS: &[&str] = &[
    "ex x. x in R",
    "all x. x in R",
    "all x. all y. (~adj(x,y) | x in R | y in R)",
    "all x. (x in R | (ex y. (y in R & adj(x,y))))",
    "ex x. all y. (~adj(x,y) | y in R)",
    "ex X. ((ex x. x in X) & (all x. all y. (~x in X | ~adj(x,y) | y in X)))",
    "all X. ((ex x. (x in X & ~x in R)) | (all y. (~y in X | y in R)))",
    "c in R | (ex x. (adj(c,x) & x in R))",
    "all x. (adj(c,x) -> x in R)",
    "ex x. ex y. (adj(x,y) & x in R & ~y in R)",
    "all x. ex y. (adj(x,y) | x in R)",
    "ex X. all x. (x in X <-> (x in R | adj(x,c)))",
];

pub fn vocab() -> Vocabulary {
    let mut v = Vocabulary::graph();
    v.add(Symbol::new("R", 1)).unwrap();
    v.add(Symbol::new("c", 0)).unwrap();
    v
}

pub fn corpus() -> Vec<Formula> {
    let v = vocab();
    CORPUS
        .iter()
        .map(|t| to_nnf(&parse_formula(t, &v).unwrap()))
        .collect()
}

pub fn set(v: &[Obj]) -> BTreeSet<Obj> {
    v.iter().copied().collect()
}

/// Pairs `(u, v)` with `u < v` on `1..=n`, in the order used by edge masks.
pub fn pairs(n: usize) -> Vec<(Obj, Obj)> {
    let mut out = Vec::new();
    for u in 1..=n as Obj {
        for v in u + 1..=n as Obj {
            out.push((u, v));
        }
    }
    out
}

pub fn graph_from_mask(n: usize, mask: u64) -> Structure {
    let edges: Vec<(Obj, Obj)> = pairs(n)
        .into_iter()
        .enumerate()
        .filter(|(i, _)| mask >> i & 1 == 1)
        .map(|(_, e)| e)
        .collect();
    Structure::graph(n, &edges).unwrap()
}

/// A structure over [`vocab`] on `objects`, built from explicit choices.
pub fn structure_on(objects: &[Obj], edges: &[(Obj, Obj)], r: &[Obj], c: Option<Obj>) -> Structure {
    let mut s = Structure::new(&vocab(), objects.iter().copied());
    for &(u, v) in edges {
        s.add_tuple("adj", vec![u, v]).unwrap();
        s.add_tuple("adj", vec![v, u]).unwrap();
    }
    for &o in r {
        s.add_tuple("R", vec![o]).unwrap();
    }
    s.set_nullary("c", c).unwrap();
    s
}

/// Random structure over [`vocab`] on `objects`; `c` is NIL with probability
/// `1 - interp` and otherwise uniform.
pub fn random_structure(rng: &mut impl Rng, objects: &[Obj], interp: f64) -> Structure {
    let mut edges = Vec::new();
    for (i, &u) in objects.iter().enumerate() {
        for &v in &objects[i + 1..] {
            if rng.gen_bool(0.4) {
                edges.push((u, v));
            }
        }
    }
    let r: Vec<Obj> = objects
        .iter()
        .copied()
        .filter(|_| rng.gen_bool(0.5))
        .collect();
    let c = if !objects.is_empty() && rng.gen_bool(interp) {
        objects.choose(rng).copied()
    } else {
        None
    };
    structure_on(objects, &edges, &r, c)
}

pub fn random_subset(rng: &mut impl Rng, s: &BTreeSet<Obj>) -> BTreeSet<Obj> {
    s.iter().copied().filter(|_| rng.gen_bool(0.5)).collect()
}

/// The structure with `c` set to `value`.
pub fn with_c(a: &Structure, value: Option<Obj>) -> Structure {
    let mut b = a.clone();
    b.set_nullary("c", value).unwrap();
    b
}

pub fn nice_min_fill(a: &Structure) -> NiceTreeDecomposition {
    nicify(&min_fill_td(a)).unwrap()
}

/// Decomposition from an elimination order: the bag of `v` is `v` with its
/// later neighbours in the filled graph, attached to the earliest of them.
pub fn td_from_order(a: &Structure, order: &[Obj], root_pick: usize) -> TreeDecomposition {
    let n = a.len();
    let pos = |v: Obj| order.iter().position(|&o| o == v).unwrap();
    let mut nb: Vec<BTreeSet<Obj>> = vec![BTreeSet::new(); n + 1];
    for (u, v) in a.edges() {
        nb[u as usize].insert(v);
        nb[v as usize].insert(u);
    }
    let mut bags = Vec::new();
    let mut later_of = Vec::new();
    for &v in order {
        let later: Vec<Obj> = nb[v as usize]
            .iter()
            .copied()
            .filter(|&w| pos(w) > pos(v))
            .collect();
        for &a1 in &later {
            for &b1 in &later {
                if a1 != b1 {
                    nb[a1 as usize].insert(b1);
                }
            }
        }
        let mut bag = later.clone();
        bag.push(v);
        bag.sort_unstable();
        bags.push(bag);
        later_of.push(later);
    }
    let mut edges = Vec::new();
    for (i, later) in later_of.iter().enumerate() {
        let parent = later.iter().map(|&w| pos(w)).min();
        match parent {
            Some(p) => edges.push((p, i)),
            // Separate components hang off the last bag.
            None if i + 1 < n => edges.push((n - 1, i)),
            None => {}
        }
    }
    TreeDecomposition {
        bags,
        edges,
        root: root_pick % n,
        n_vertices: n,
    }
}

/// Min-degree elimination order with random tie breaks.
pub fn min_degree_order(a: &Structure, rng: &mut impl Rng) -> Vec<Obj> {
    let n = a.len();
    let mut nb: Vec<BTreeSet<Obj>> = vec![BTreeSet::new(); n + 1];
    for (u, v) in a.edges() {
        nb[u as usize].insert(v);
        nb[v as usize].insert(u);
    }
    let mut left: BTreeSet<Obj> = (1..=n as Obj).collect();
    let mut order = Vec::new();
    while !left.is_empty() {
        let best = left.iter().map(|&v| nb[v as usize].len()).min().unwrap();
        let cands: Vec<Obj> = left
            .iter()
            .copied()
            .filter(|&v| nb[v as usize].len() == best)
            .collect();
        let v = *cands.choose(rng).unwrap();
        let ns: Vec<Obj> = nb[v as usize].iter().copied().collect();
        for &a1 in &ns {
            nb[a1 as usize].remove(&v);
            for &b1 in &ns {
                if a1 != b1 {
                    nb[a1 as usize].insert(b1);
                }
            }
        }
        left.remove(&v);
        order.push(v);
    }
    order
}

/// Adds free set `name` interpreted as `u`.
pub fn expand_set(a: &Structure, name: &str, u: BTreeSet<Obj>) -> Structure {
    a.expand(&Symbol::new(name, 1), Interp::Set(u)).unwrap()
}
