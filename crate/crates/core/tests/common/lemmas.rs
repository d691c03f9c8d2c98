//! One randomized trial per game lemma. Each returns a description of the
//! counterexample on failure.

use std::collections::BTreeSet;

use msogame::game::{Game, GameStore};
use msogame::logic::Formula;
use msogame::oracle::brute_force_mc;
use msogame::structure::{Obj, Structure};
use rand::seq::SliceRandom;
use rand::Rng;

use super::{corpus, random_structure, random_subset, with_c};

fn mentions_c(f: &Formula) -> bool {
    f.free_symbols_all(f.root()).iter().any(|s| s.name == "c")
}

fn pick_formula(rng: &mut impl Rng, allow_c: bool) -> Formula {
    let all = corpus();
    let usable: Vec<&Formula> = all.iter().filter(|f| allow_c || !mentions_c(f)).collect();
    (*usable.choose(rng).unwrap()).clone()
}

fn objects(n: usize) -> Vec<Obj> {
    (1..=n as Obj).collect()
}

fn sentinel(g: Game) -> Option<bool> {
    if g.is_top() {
        Some(true)
    } else if g.is_bottom() {
        Some(false)
    } else {
        None
    }
}

fn ctx(f: &Formula, a: &Structure, x: &BTreeSet<Obj>) -> String {
    format!("phi = {f}, A = {}, X = {x:?}", a.describe())
}

/// Conversion of the full game and of its reduction both evaluate to the
/// brute-force truth value, and the converted game does not depend on `X`.
pub fn convert_agreement(rng: &mut impl Rng) -> Result<(), String> {
    let n = rng.gen_range(0..=4);
    let a = random_structure(rng, &objects(n), 1.0);
    let f = pick_formula(rng, n > 0);
    let x = random_subset(rng, a.universe());
    let truth = brute_force_mc(&a, &f).map_err(|e| e.to_string())?;
    let mut st = GameStore::new(&f).unwrap();
    let full = st.emc(&a, &x, f.root()).unwrap();
    let conv = st.convert(full);
    let conv_empty = {
        let g = st.emc(&a, &BTreeSet::new(), f.root()).unwrap();
        st.convert(g)
    };
    if conv != conv_empty {
        return Err(format!("convert depends on X: {}", ctx(&f, &a, &x)));
    }
    let e1 = st.eval(conv);
    let red = st.reduce(full);
    let conv_red = st.convert(red);
    let e2 = st.eval(conv_red);
    if sentinel(e1) != Some(truth) || sentinel(e2) != Some(truth) {
        return Err(format!(
            "truth {truth}, eval(convert(G)) {:?}, eval(convert(reduce G)) {:?}: {}",
            sentinel(e1),
            sentinel(e2),
            ctx(&f, &a, &x)
        ));
    }
    Ok(())
}

/// A determined extended game fixes the truth value for every way of
/// interpreting an uninterpreted constant, and the classical game agrees.
pub fn determinacy_transfer(rng: &mut impl Rng) -> Result<(), String> {
    let n = rng.gen_range(0..=4);
    let a = random_structure(rng, &objects(n), 0.5);
    let f = pick_formula(rng, true);
    let x = random_subset(rng, a.universe());
    let mut st = GameStore::new(&f).unwrap();
    let g = st.emc(&a, &x, f.root()).unwrap();
    let Some(s) = sentinel(st.eval(g)) else {
        return Ok(());
    };
    match a.nullary("c").unwrap() {
        Some(_) => {
            let truth = brute_force_mc(&a, &f).map_err(|e| e.to_string())?;
            let conv = st.convert(g);
            let ce = sentinel(st.eval(conv));
            if truth != s || ce != Some(s) {
                return Err(format!(
                    "eval {s}, truth {truth}, classical {ce:?}: {}",
                    ctx(&f, &a, &x)
                ));
            }
        }
        None => {
            for v in a.universe().iter().copied() {
                let b = with_c(&a, Some(v));
                let gb = st.emc(&b, &x, f.root()).unwrap();
                let eb = sentinel(st.eval(gb));
                let truth = brute_force_mc(&b, &f).map_err(|e| e.to_string())?;
                if eb != Some(s) || truth != s {
                    return Err(format!(
                        "nil game {s}, with c = {v}: eval {eb:?}, truth {truth}: {}",
                        ctx(&f, &a, &x)
                    ));
                }
            }
        }
    }
    Ok(())
}

/// Adding an object `b` to both the structure and `X` keeps a determined outcome.
pub fn introduce_monotone(rng: &mut impl Rng) -> Result<(), String> {
    let n = rng.gen_range(0..=3);
    let b = n as Obj + 1;
    let big = random_structure(rng, &objects(n + 1), 0.6);
    let small = big
        .induced_substructure(&objects(n).into_iter().collect())
        .unwrap();
    let f = pick_formula(rng, true);
    let x = random_subset(rng, small.universe());
    let mut st = GameStore::new(&f).unwrap();
    let g = st.emc(&small, &x, f.root()).unwrap();
    let Some(s) = sentinel(st.eval(g)) else {
        return Ok(());
    };
    let mut xb = x.clone();
    xb.insert(b);
    let g2 = st.emc(&big, &xb, f.root()).unwrap();
    let s2 = sentinel(st.eval(g2));
    if s2 != Some(s) {
        return Err(format!(
            "{s} became {s2:?} after introducing {b}: {}",
            ctx(&f, &big, &x)
        ));
    }
    Ok(())
}

/// Shrinking `X` keeps a determined outcome.
pub fn forget_monotone(rng: &mut impl Rng) -> Result<(), String> {
    let n = rng.gen_range(0..=4);
    let a = random_structure(rng, &objects(n), 0.6);
    let f = pick_formula(rng, true);
    let x = random_subset(rng, a.universe());
    let x2 = random_subset(rng, &x);
    let mut st = GameStore::new(&f).unwrap();
    let g = st.emc(&a, &x, f.root()).unwrap();
    let Some(s) = sentinel(st.eval(g)) else {
        return Ok(());
    };
    let g2 = st.emc(&a, &x2, f.root()).unwrap();
    let s2 = sentinel(st.eval(g2));
    if s2 != Some(s) {
        return Err(format!(
            "{s} became {s2:?} with X' = {x2:?}: {}",
            ctx(&f, &a, &x)
        ));
    }
    Ok(())
}

/// Splits the objects of `u` into two sides overlapping in `shared`.
fn split(rng: &mut impl Rng, u: &Structure) -> (BTreeSet<Obj>, BTreeSet<Obj>, BTreeSet<Obj>) {
    let mut left = BTreeSet::new();
    let mut right = BTreeSet::new();
    let mut shared = BTreeSet::new();
    for &o in u.universe() {
        match rng.gen_range(0..3) {
            0 => {
                left.insert(o);
            }
            1 => {
                right.insert(o);
            }
            _ => {
                left.insert(o);
                right.insert(o);
                shared.insert(o);
            }
        }
    }
    (left, right, shared)
}

/// A determined outcome over `A` with `X = A ∩ B` survives the union with `B`.
pub fn union_monotone(rng: &mut impl Rng) -> Result<(), String> {
    let n = rng.gen_range(0..=4);
    let u = random_structure(rng, &objects(n), 0.6);
    let (l, r, shared) = split(rng, &u);
    let a = u.induced_substructure(&l).unwrap();
    let b = u.induced_substructure(&r).unwrap();
    let ab = a.union(&b).unwrap();
    let f = pick_formula(rng, true);
    let mut st = GameStore::new(&f).unwrap();
    let g = st.emc(&a, &shared, f.root()).unwrap();
    let Some(s) = sentinel(st.eval(g)) else {
        return Ok(());
    };
    let g2 = st.emc(&ab, &shared, f.root()).unwrap();
    let s2 = sentinel(st.eval(g2));
    if s2 != Some(s) {
        return Err(format!(
            "{s} became {s2:?} on the union with {}: {}",
            b.describe(),
            ctx(&f, &a, &shared)
        ));
    }
    Ok(())
}

/// Checks that a reduced game has no sentinel children and no two
/// equivalent siblings, recursively.
pub fn check_reduced_form(st: &GameStore, g: Game) -> Result<(), String> {
    let mut stack = vec![g];
    while let Some(h) = stack.pop() {
        let kids = st.children(h);
        let mut keys = BTreeSet::new();
        for k in &kids {
            if k.is_sentinel() {
                return Err("sentinel child in a reduced game".into());
            }
            if !keys.insert(st.canonical_key(*k)) {
                return Err("equivalent siblings in a reduced game".into());
            }
        }
        stack.extend(kids);
    }
    Ok(())
}

/// `eval` and `reduce` agree on determined outcomes; the fused construction
/// equals reducing the full game; reduced games are in reduced form.
pub fn eval_reduce_agreement(rng: &mut impl Rng) -> Result<(), String> {
    let n = rng.gen_range(0..=4);
    let a = random_structure(rng, &objects(n), 0.6);
    let f = pick_formula(rng, true);
    let x = random_subset(rng, a.universe());
    let mut st = GameStore::new(&f).unwrap();
    let g = st.emc(&a, &x, f.root()).unwrap();
    let e = st.eval(g);
    let r = st.reduce(g);
    if e.is_top() != r.is_top() || e.is_bottom() != r.is_bottom() {
        return Err(format!("eval {e:?} vs reduce {r:?}: {}", ctx(&f, &a, &x)));
    }
    let fused = st.reduce_emc(&a, &x, f.root()).unwrap();
    if fused != r || !st.equivalent(fused, r) {
        return Err(format!("fused reduction differs: {}", ctx(&f, &a, &x)));
    }
    check_reduced_form(&st, r).map_err(|m| format!("{m}: {}", ctx(&f, &a, &x)))
}

/// Combining the reduced games of two overlapping parts gives the reduced
/// game of their union.
pub fn combine_equivalence(rng: &mut impl Rng) -> Result<(), String> {
    let n = rng.gen_range(0..=4);
    let u = random_structure(rng, &objects(n), 0.6);
    let (l, r, shared) = split(rng, &u);
    let x1: BTreeSet<Obj> = shared.union(&random_subset(rng, &l)).copied().collect();
    let x2: BTreeSet<Obj> = shared.union(&random_subset(rng, &r)).copied().collect();
    let a1 = u.induced_substructure(&l).unwrap();
    let a2 = u.induced_substructure(&r).unwrap();
    let whole = a1.union(&a2).unwrap();
    let f = pick_formula(rng, true);
    let mut st = GameStore::new(&f).unwrap();
    let g1 = st.reduce_emc(&a1, &x1, f.root()).unwrap();
    let g2 = st.reduce_emc(&a2, &x2, f.root()).unwrap();
    let c = st
        .combine(g1, g2)
        .map_err(|e| format!("combine failed ({e}): {}", ctx(&f, &whole, &x1)))?;
    let x: BTreeSet<Obj> = x1.union(&x2).copied().collect();
    let direct = st.reduce_emc(&whole, &x, f.root()).unwrap();
    if c != direct || !st.equivalent(c, direct) {
        return Err(format!(
            "combine differs from direct reduction: A1 = {}, X1 = {x1:?}, A2 = {}, X2 = {x2:?}, phi = {f}",
            a1.describe(),
            a2.describe()
        ));
    }
    Ok(())
}

/// Forgetting an object of `X` gives the reduced game for the smaller `X`.
pub fn forget_equivalence(rng: &mut impl Rng) -> Result<(), String> {
    let n = rng.gen_range(1..=4);
    let a = random_structure(rng, &objects(n), 0.6);
    let f = pick_formula(rng, true);
    let mut x = random_subset(rng, a.universe());
    let o = *a.universe().iter().collect::<Vec<_>>().choose(rng).unwrap();
    x.insert(*o);
    let mut st = GameStore::new(&f).unwrap();
    let g = st.reduce_emc(&a, &x, f.root()).unwrap();
    let fg = st.forget(g, *o).unwrap();
    let mut x2 = x.clone();
    x2.remove(o);
    let direct = st.reduce_emc(&a, &x2, f.root()).unwrap();
    if fg != direct || !st.equivalent(fg, direct) {
        return Err(format!("forget {o} differs: {}", ctx(&f, &a, &x)));
    }
    Ok(())
}

/// Renames the objects outside `x` by a random injective map into fresh ids.
pub fn relabel_outside(rng: &mut impl Rng, a: &Structure, x: &BTreeSet<Obj>) -> Structure {
    let outside: Vec<Obj> = a
        .universe()
        .iter()
        .copied()
        .filter(|o| !x.contains(o))
        .collect();
    let mut fresh: Vec<Obj> = (100..100 + outside.len() as Obj).collect();
    fresh.shuffle(rng);
    let map = |o: Obj| -> Obj {
        match outside.iter().position(|&p| p == o) {
            Some(i) => fresh[i],
            None => o,
        }
    };
    let mut b = Structure::new(&a.vocabulary(), a.universe().iter().map(|&o| map(o)));
    for (name, _, tuples) in a.relations() {
        for t in tuples {
            b.add_tuple(name, t.iter().map(|&o| map(o)).collect())
                .unwrap();
        }
    }
    for (name, v) in a.nullaries() {
        b.set_nullary(name, v.map(map)).unwrap();
    }
    b
}

/// Canonical keys are equal exactly when the definitional equivalence holds,
/// on a mix of relabeled copies and unrelated games.
pub fn key_iff_equivalent(rng: &mut impl Rng) -> Result<(), String> {
    let n = rng.gen_range(0..=4);
    let a = random_structure(rng, &objects(n), 0.6);
    let f = pick_formula(rng, true);
    let x = random_subset(rng, a.universe());
    let other = if rng.gen_bool(0.5) {
        relabel_outside(rng, &a, &x)
    } else {
        let mut b = random_structure(rng, &objects(n), 0.6);
        if rng.gen_bool(0.5) {
            b = relabel_outside(rng, &b, &x);
        }
        b
    };
    let full = n <= 3 && rng.gen_bool(0.3);
    let mut st = GameStore::new(&f).unwrap();
    let (g1, g2) = if full {
        (
            st.emc(&a, &x, f.root()).unwrap(),
            st.emc(&other, &x, f.root()).unwrap(),
        )
    } else {
        (
            st.reduce_emc(&a, &x, f.root()).unwrap(),
            st.reduce_emc(&other, &x, f.root()).unwrap(),
        )
    };
    let keys_equal = st.canonical_key(g1) == st.canonical_key(g2);
    let equiv = st.equivalent(g1, g2);
    if keys_equal != equiv || (g1 == g2) != equiv {
        return Err(format!(
            "keys equal {keys_equal}, ids equal {}, equivalent {equiv}: A = {}, B = {}, X = {x:?}, phi = {f}",
            g1 == g2,
            a.describe(),
            other.describe()
        ));
    }
    Ok(())
}

pub type Trial = fn(&mut rand_chacha::ChaCha8Rng) -> Result<(), String>;

pub const SUITE: &[(&str, Trial)] = &[
    ("convert agreement", convert_agreement),
    ("determinacy transfer", determinacy_transfer),
    ("introduce monotonicity", introduce_monotone),
    ("forget monotonicity", forget_monotone),
    ("union monotonicity", union_monotone),
    ("eval/reduce agreement", eval_reduce_agreement),
    ("combine equivalence", combine_equivalence),
    ("forget equivalence", forget_equivalence),
    ("canonical key iff equivalent", key_iff_equivalent),
];
