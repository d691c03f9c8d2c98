//! Dynamic programming over a nice tree decomposition with reduced games as
//! table entries.

use std::collections::BTreeSet;
use std::fmt;
use std::time::{Duration, Instant};

use indexmap::IndexMap;
use rustc_hash::{FxBuildHasher, FxHashMap, FxHashSet};
use thiserror::Error;

use crate::game::{Game, GameError, GameStore};
use crate::logic::{to_nnf, Formula, Symbol, Vocabulary};
use crate::structure::{Interp, Obj, Structure};
use crate::treedec::{validate_td, NiceKind, NiceTreeDecomposition, ViolationReport};

#[derive(Clone, Debug, Error)]
pub enum SolveError {
    #[error("invalid problem: {0}")]
    Problem(String),
    #[error("structure does not match the problem vocabulary: {0}")]
    VocabularyMismatch(String),
    #[error("invalid decomposition: {0}")]
    InvalidDecomposition(String),
    #[error("decomposition does not fit the structure:\n{0}")]
    Violations(ViolationReport),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error("objective value overflows 64-bit integers")]
    Overflow,
    #[error("bag of {0} objects exceeds the supported 64")]
    BagTooLarge(usize),
    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

/// An optimum: a finite value or the value of an infeasible problem.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Value {
    NegInfinity,
    Finite(i64),
    Infinity,
}

impl Value {
    pub fn is_finite(self) -> bool {
        matches!(self, Value::Finite(_))
    }

    fn negate(self) -> Value {
        match self {
            Value::Finite(v) => Value::Finite(-v),
            Value::Infinity => Value::NegInfinity,
            Value::NegInfinity => Value::Infinity,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Finite(v) => write!(f, "{v}"),
            Value::Infinity => f.write_str("infinity"),
            Value::NegInfinity => f.write_str("-infinity"),
        }
    }
}

/// Claimed bound on table sizes, checked during solving when requested. Only
/// `OneEntry` (3col) holds in general; see the README.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TableBound {
    /// Every cell holds at most one entry.
    OnePerCell,
    /// A cell whose first free set covers `c` bag objects holds at most
    /// `2^(|bag| - c)` entries.
    PowerOfUncovered,
    /// The whole table holds at most one entry.
    OneEntry,
}

/// A weighted optimization problem over the free unary symbols of a formula.
#[derive(Clone, Debug, PartialEq)]
pub struct Problem {
    pub name: String,
    pub base: Vocabulary,
    /// Free set symbols with their weights, in declaration order.
    pub free: Vec<(String, i64)>,
    /// The formula in negation normal form over `base` plus the free symbols.
    pub formula: Formula,
    pub maximize: bool,
}

impl Problem {
    pub fn new(
        name: impl Into<String>,
        base: Vocabulary,
        free: Vec<(String, i64)>,
        formula: &Formula,
        maximize: bool,
    ) -> Result<Problem, SolveError> {
        if let Some(c) = base.nullaries().next() {
            return Err(SolveError::Problem(format!(
                "base vocabulary must be relational, found object symbol `{c}`"
            )));
        }
        let mut full = base.clone();
        for (n, _) in &free {
            full.add(Symbol::new(n.clone(), 1))
                .map_err(|e| SolveError::Problem(e.to_string()))?;
        }
        if *formula.base() != full {
            return Err(SolveError::Problem(
                "formula vocabulary differs from base plus free symbols".into(),
            ));
        }
        if free.len() > 16 {
            return Err(SolveError::Problem(
                "at most 16 free symbols are supported".into(),
            ));
        }
        Ok(Problem {
            name: name.into(),
            base,
            free,
            formula: to_nnf(formula),
            maximize,
        })
    }

    /// Weights as minimized by the solver.
    pub fn weights(&self) -> Vec<i64> {
        self.free
            .iter()
            .map(|&(_, w)| if self.maximize { -w } else { w })
            .collect()
    }

    /// Rewrites a maximization as minimization of negated weights.
    pub fn as_minimization(&self) -> Problem {
        let mut p = self.clone();
        p.free = self
            .free
            .iter()
            .zip(self.weights())
            .map(|((n, _), w)| (n.clone(), w))
            .collect();
        p.maximize = false;
        p
    }

    /// Maps a minimum of [`Problem::weights`] back to the stated objective.
    pub fn objective_value(&self, min: Value) -> Value {
        if self.maximize {
            min.negate()
        } else {
            min
        }
    }
}

/// Entries of one cell: games (never BOTTOM) with their best value.
pub type Cell = IndexMap<Game, i64, FxBuildHasher>;

/// Table of one decomposition node. Cells are keyed by one bitmask per
/// free symbol, bit `i` standing for `bag[i]`.
#[derive(Clone, Debug, Default)]
pub struct DpTable {
    pub bag: Vec<Obj>,
    cells: IndexMap<Box<[u64]>, Cell, FxBuildHasher>,
}

impl DpTable {
    pub fn new(bag: Vec<Obj>) -> DpTable {
        DpTable {
            bag,
            cells: IndexMap::default(),
        }
    }

    pub fn cells(&self) -> impl Iterator<Item = (&[u64], &Cell)> {
        self.cells.iter().map(|(k, v)| (&**k, v))
    }

    pub fn cell(&self, masks: &[u64]) -> Option<&Cell> {
        self.cells.get(masks)
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    pub fn entry_count(&self) -> usize {
        self.cells.values().map(IndexMap::len).sum()
    }

    pub fn max_entries(&self) -> usize {
        self.cells.values().map(IndexMap::len).max().unwrap_or(0)
    }

    /// Bitmask of `set ∩ bag`.
    pub fn mask_of(&self, set: &BTreeSet<Obj>) -> u64 {
        self.bag
            .iter()
            .enumerate()
            .filter(|(_, o)| set.contains(o))
            .fold(0, |m, (i, _)| m | 1 << i)
    }

    pub fn set_of(&self, mask: u64) -> BTreeSet<Obj> {
        self.bag
            .iter()
            .enumerate()
            .filter(|(i, _)| mask >> i & 1 == 1)
            .map(|(_, &o)| o)
            .collect()
    }

    /// Adds `g` with value `v` to cell `key`, keeping the smaller value for
    /// a game already present. BOTTOM is ignored.
    pub fn offer(&mut self, key: Box<[u64]>, g: Game, v: i64) {
        if g.is_bottom() {
            return;
        }
        let cell = self.cells.entry(key).or_default();
        cell.entry(g)
            .and_modify(|old| *old = (*old).min(v))
            .or_insert(v);
    }

    fn games(&self) -> impl Iterator<Item = Game> + '_ {
        self.cells.values().flat_map(|c| c.keys().copied())
    }
}

#[derive(Clone, Debug, Default)]
pub struct SolveOptions {
    /// Bound checked on every table; a violation aborts with an invariant error.
    pub bound: Option<TableBound>,
    /// Record the largest game size (costly on big tables).
    pub game_sizes: bool,
    /// Node count of the game store that triggers a compaction.
    pub compact_threshold: Option<usize>,
}

#[derive(Clone, Debug, Default)]
pub struct Stats {
    pub nodes: usize,
    pub max_cells: usize,
    pub max_entries: usize,
    pub max_game_size: usize,
    pub templates: usize,
    pub compactions: usize,
    pub time_leaf: Duration,
    pub time_introduce: Duration,
    pub time_forget: Duration,
    pub time_join: Duration,
    pub time_finalize: Duration,
}

impl fmt::Display for Stats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "nodes = {}", self.nodes)?;
        writeln!(f, "max_cells = {}", self.max_cells)?;
        writeln!(f, "max_entries = {}", self.max_entries)?;
        writeln!(f, "max_game_size = {}", self.max_game_size)?;
        writeln!(f, "templates = {}", self.templates)?;
        writeln!(f, "compactions = {}", self.compactions)?;
        writeln!(f, "time_leaf_s = {:.6}", self.time_leaf.as_secs_f64())?;
        writeln!(
            f,
            "time_introduce_s = {:.6}",
            self.time_introduce.as_secs_f64()
        )?;
        writeln!(f, "time_forget_s = {:.6}", self.time_forget.as_secs_f64())?;
        writeln!(f, "time_join_s = {:.6}", self.time_join.as_secs_f64())?;
        write!(
            f,
            "time_finalize_s = {:.6}",
            self.time_finalize.as_secs_f64()
        )
    }
}

#[derive(Clone, Debug)]
pub struct Solution {
    /// Optimum for the problem's stated objective.
    pub value: Value,
    pub stats: Stats,
}

/// Called after each node with the node index, its table and the store.
pub type Observer<'o> = dyn FnMut(usize, &DpTable, &mut GameStore) + 'o;

pub fn solve(
    a: &Structure,
    ntd: &NiceTreeDecomposition,
    prob: &Problem,
) -> Result<Solution, SolveError> {
    solve_with(a, ntd, prob, &SolveOptions::default(), None)
}

pub fn solve_with(
    a: &Structure,
    ntd: &NiceTreeDecomposition,
    prob: &Problem,
    opts: &SolveOptions,
    observer: Option<&mut Observer<'_>>,
) -> Result<Solution, SolveError> {
    let mut solver = Solver::new(a, prob, opts.clone())?;
    let min = solver.run(ntd, observer)?;
    Ok(Solution {
        value: prob.objective_value(min),
        stats: solver.stats,
    })
}

/// DP state for one structure and problem. The handlers are public so the
/// table contents can be inspected node by node.
pub struct Solver<'a> {
    a: &'a Structure,
    prob: &'a Problem,
    store: GameStore,
    weights: Vec<i64>,
    free_syms: Vec<Symbol>,
    gaifman: FxHashMap<Obj, FxHashSet<Obj>>,
    /// Tuples of `a` with relation index, indexed by each member object.
    incident: FxHashMap<Obj, Vec<(usize, Vec<Obj>)>>,
    templates: FxHashMap<Vec<u32>, Game>,
    opts: SolveOptions,
    pub stats: Stats,
}

impl<'a> Solver<'a> {
    pub fn new(
        a: &'a Structure,
        prob: &'a Problem,
        opts: SolveOptions,
    ) -> Result<Self, SolveError> {
        let vocab = a.vocabulary();
        for (name, arity) in prob.base.relations() {
            if vocab.arity(name) != Some(arity) {
                return Err(SolveError::VocabularyMismatch(format!(
                    "missing relation `{name}/{arity}`"
                )));
            }
        }
        for s in vocab.iter() {
            if prob.base.arity(&s.name) != Some(s.arity) {
                return Err(SolveError::VocabularyMismatch(format!(
                    "unexpected symbol `{}/{}`",
                    s.name, s.arity
                )));
            }
        }
        let mut gaifman: FxHashMap<Obj, FxHashSet<Obj>> = FxHashMap::default();
        let mut incident: FxHashMap<Obj, Vec<(usize, Vec<Obj>)>> = FxHashMap::default();
        for (ri, (_, _, tuples)) in a.relations().enumerate() {
            for t in tuples {
                for &u in t {
                    gaifman
                        .entry(u)
                        .or_default()
                        .extend(t.iter().filter(|&&v| v != u));
                    let list = incident.entry(u).or_default();
                    if list.last().is_none_or(|(r, l)| *r != ri || l != t) {
                        list.push((ri, t.clone()));
                    }
                }
            }
        }
        Ok(Solver {
            a,
            prob,
            store: GameStore::new(&prob.formula)?,
            weights: prob.weights(),
            free_syms: prob
                .free
                .iter()
                .map(|(n, _)| Symbol::new(n.clone(), 1))
                .collect(),
            gaifman,
            incident,
            templates: FxHashMap::default(),
            opts,
            stats: Stats::default(),
        })
    }

    pub fn store(&mut self) -> &mut GameStore {
        &mut self.store
    }

    fn l(&self) -> usize {
        self.free_syms.len()
    }

    /// Phase 1 bottom-up, then the root rule. Returns the minimum of the
    /// solver weights.
    pub fn run(
        &mut self,
        ntd: &NiceTreeDecomposition,
        mut observer: Option<&mut Observer<'_>>,
    ) -> Result<Value, SolveError> {
        if self.a.is_empty() {
            return self.solve_empty();
        }
        ntd.check_kinds()
            .map_err(SolveError::InvalidDecomposition)?;
        validate_td(&ntd.to_td(self.a.len()), self.a).map_err(SolveError::Violations)?;
        let threshold = self.opts.compact_threshold.unwrap_or(4_000_000);
        let mut next_compact = threshold;
        let mut tables: FxHashMap<usize, DpTable> = FxHashMap::default();
        for i in ntd.post_order() {
            let node = &ntd.nodes[i];
            if node.bag.len() > 64 {
                return Err(SolveError::BagTooLarge(node.bag.len()));
            }
            let start = Instant::now();
            let table = match node.kind {
                NiceKind::Leaf(x) => {
                    let t = self.handle_leaf(x)?;
                    self.stats.time_leaf += start.elapsed();
                    t
                }
                NiceKind::Introduce(x) => {
                    let child = tables.remove(&node.children[0]).unwrap();
                    let t = self.handle_introduce(&child, x, &node.bag)?;
                    self.stats.time_introduce += start.elapsed();
                    t
                }
                NiceKind::Forget(x) => {
                    let child = tables.remove(&node.children[0]).unwrap();
                    let t = self.handle_forget(&child, x, &node.bag)?;
                    self.stats.time_forget += start.elapsed();
                    t
                }
                NiceKind::Join => {
                    let left = tables.remove(&node.children[0]).unwrap();
                    let right = tables.remove(&node.children[1]).unwrap();
                    let t = self.handle_join(&left, &right, &node.bag)?;
                    self.stats.time_join += start.elapsed();
                    t
                }
            };
            self.record(&table)?;
            if let Some(obs) = observer.as_mut() {
                obs(i, &table, &mut self.store);
            }
            tables.insert(i, table);
            // Memo keys include X, so they rarely carry over to the next node.
            self.store.clear_memos();
            if self.store.node_count() > next_compact {
                self.compact(&mut tables);
                next_compact = (self.store.node_count() * 2).max(threshold);
            }
        }
        let root = tables.remove(&ntd.root).unwrap();
        let start = Instant::now();
        let v = self.finalize(&root);
        self.stats.time_finalize += start.elapsed();
        Ok(v)
    }

    fn solve_empty(&mut self) -> Result<Value, SolveError> {
        let mut s = self.a.clone();
        for sym in &self.free_syms {
            s = s
                .expand(sym, Interp::Set(BTreeSet::new()))
                .map_err(|e| SolveError::VocabularyMismatch(e.to_string()))?;
        }
        let g = self
            .store
            .reduce_emc(&s, &BTreeSet::new(), self.prob.formula.root())?;
        let c = self.store.convert(g);
        Ok(if self.store.eval(c).is_top() {
            Value::Finite(0)
        } else {
            Value::Infinity
        })
    }

    fn record(&mut self, t: &DpTable) -> Result<(), SolveError> {
        self.stats.nodes += 1;
        self.stats.max_cells = self.stats.max_cells.max(t.cell_count());
        self.stats.max_entries = self.stats.max_entries.max(t.max_entries());
        if self.opts.game_sizes {
            for g in t.games() {
                self.stats.max_game_size = self.stats.max_game_size.max(self.store.size(g));
            }
        }
        if let Some(b) = self.opts.bound {
            check_bound(b, t)?;
        }
        Ok(())
    }

    fn compact(&mut self, tables: &mut FxHashMap<usize, DpTable>) {
        let mut roots: Vec<u32> = tables
            .values()
            .flat_map(|t| t.games().map(Game::node_id))
            .collect();
        roots.extend(self.templates.values().map(|g| g.node_id()));
        let map = self.store.compact(&roots);
        for t in tables.values_mut() {
            for cell in t.cells.values_mut() {
                *cell = cell
                    .drain(..)
                    .map(|(g, v)| (GameStore::remap(g, &map), v))
                    .collect();
            }
        }
        for g in self.templates.values_mut() {
            *g = GameStore::remap(*g, &map);
        }
        self.stats.compactions += 1;
    }

    /// `reduce(EMC(A[s] with the sets of `masks`, s, φ))`; `masks` are over
    /// positions in `s`. Cached by the order-relabeled structure.
    fn template(&mut self, s: &[Obj], base_key: &[u32], masks: &[u64]) -> Result<Game, SolveError> {
        let mut key = base_key.to_vec();
        key.extend(masks.iter().map(|&m| m as u32));
        if let Some(&g) = self.templates.get(&key) {
            return Ok(self.store.rebase(g, s));
        }
        let set: BTreeSet<Obj> = s.iter().copied().collect();
        let mut h = self
            .a
            .induced_substructure(&set)
            .map_err(|e| SolveError::Invariant(e.to_string()))?;
        for (k, sym) in self.free_syms.iter().enumerate() {
            let u: BTreeSet<Obj> = s
                .iter()
                .enumerate()
                .filter(|(i, _)| masks[k] >> i & 1 == 1)
                .map(|(_, &o)| o)
                .collect();
            h = h
                .expand(sym, Interp::Set(u))
                .map_err(|e| SolveError::Invariant(e.to_string()))?;
        }
        let g = self.store.reduce_emc(&h, &set, self.prob.formula.root())?;
        self.templates.insert(key, g);
        self.stats.templates += 1;
        Ok(g)
    }

    /// Relabeled tuples of `a` inside `s`, the structural part of a template key.
    fn structure_key(&self, s: &[Obj]) -> Vec<u32> {
        let rank = |o: &Obj| s.binary_search(o).ok().map(|r| r as u32);
        let mut tuples: Vec<Vec<u32>> = Vec::new();
        for o in s {
            for (ri, t) in self.incident.get(o).into_iter().flatten() {
                if let Some(mut r) = t.iter().map(rank).collect::<Option<Vec<u32>>>() {
                    r.insert(0, *ri as u32);
                    tuples.push(r);
                }
            }
        }
        tuples.sort_unstable();
        tuples.dedup();
        let mut key = vec![s.len() as u32, tuples.len() as u32];
        for t in tuples {
            key.push(t.len() as u32);
            key.extend(t);
        }
        key
    }

    pub fn handle_leaf(&mut self, x: Obj) -> Result<DpTable, SolveError> {
        let mut table = DpTable::new(vec![x]);
        let s = [x];
        let base_key = self.structure_key(&s);
        for choice in 0..1u64 << self.l() {
            let masks: Box<[u64]> = (0..self.l()).map(|k| choice >> k & 1).collect();
            let g = self.template(&s, &base_key, &masks)?;
            table.offer(masks, g, 0);
        }
        Ok(table)
    }

    /// Combines each child entry with the reduced game of `x` and its
    /// neighbours in the bag; by the combination lemma this equals combining
    /// with the game of the whole bag.
    pub fn handle_introduce(
        &mut self,
        child: &DpTable,
        x: Obj,
        bag: &[Obj],
    ) -> Result<DpTable, SolveError> {
        let p = bag
            .binary_search(&x)
            .map_err(|_| SolveError::Invariant("introduced object not in bag".into()))?;
        let low = (1u64 << p) - 1;
        let nbrs = self.gaifman.get(&x);
        let s: Vec<Obj> = bag
            .iter()
            .copied()
            .filter(|o| *o == x || nbrs.is_some_and(|n| n.contains(o)))
            .collect();
        let s_pos: Vec<usize> = s.iter().map(|o| bag.binary_search(o).unwrap()).collect();
        let base_key = self.structure_key(&s);
        let mut table = DpTable::new(bag.to_vec());
        for (uj, cell) in child.cells() {
            for choice in 0..1u64 << self.l() {
                let ui: Box<[u64]> = uj
                    .iter()
                    .enumerate()
                    .map(|(k, &m)| (m & low) | ((m & !low) << 1) | ((choice >> k & 1) << p))
                    .collect();
                let local: Vec<u64> = ui
                    .iter()
                    .map(|&m| {
                        s_pos
                            .iter()
                            .enumerate()
                            .fold(0, |acc, (r, &bp)| acc | (m >> bp & 1) << r)
                    })
                    .collect();
                let t = self.template(&s, &base_key, &local)?;
                for (&g, &v) in cell {
                    let r = if g.is_top() {
                        g
                    } else {
                        self.store.combine(g, t)?
                    };
                    table.offer(ui.clone(), r, v);
                }
            }
        }
        Ok(table)
    }

    /// Forgets `x`; the only place where weights are added.
    pub fn handle_forget(
        &mut self,
        child: &DpTable,
        x: Obj,
        bag: &[Obj],
    ) -> Result<DpTable, SolveError> {
        let p = child
            .bag
            .binary_search(&x)
            .map_err(|_| SolveError::Invariant("forgotten object not in child bag".into()))?;
        let low = (1u64 << p) - 1;
        let mut table = DpTable::new(bag.to_vec());
        for (uj, cell) in child.cells() {
            let mut add = 0i64;
            for (k, &m) in uj.iter().enumerate() {
                if m >> p & 1 == 1 {
                    add = add
                        .checked_add(self.weights[k])
                        .ok_or(SolveError::Overflow)?;
                }
            }
            let ui: Box<[u64]> = uj.iter().map(|&m| (m & low) | ((m >> 1) & !low)).collect();
            for (&g, &v) in cell {
                let r = self.store.forget(g, x)?;
                let v = v.checked_add(add).ok_or(SolveError::Overflow)?;
                table.offer(ui.clone(), r, v);
            }
        }
        Ok(table)
    }

    pub fn handle_join(
        &mut self,
        left: &DpTable,
        right: &DpTable,
        bag: &[Obj],
    ) -> Result<DpTable, SolveError> {
        let mut table = DpTable::new(bag.to_vec());
        for (u, lc) in left.cells() {
            let Some(rc) = right.cell(u) else { continue };
            for (&g1, &v1) in lc {
                for (&g2, &v2) in rc {
                    let r = if g1.is_top() || g2.is_top() {
                        Game::TOP
                    } else {
                        self.store.combine(g1, g2)?
                    };
                    let v = v1.checked_add(v2).ok_or(SolveError::Overflow)?;
                    table.offer(u.into(), r, v);
                }
            }
        }
        Ok(table)
    }

    /// Best value among root entries whose classical game is won by the verifier.
    pub fn finalize(&mut self, root: &DpTable) -> Value {
        let key = vec![0u64; self.l()];
        let Some(cell) = root.cell(&key) else {
            return Value::Infinity;
        };
        let mut best = Value::Infinity;
        for (&g, &v) in cell {
            let c = self.store.convert(g);
            if self.store.eval(c).is_top() {
                best = best.min(Value::Finite(v));
            }
        }
        best
    }
}

fn check_bound(bound: TableBound, t: &DpTable) -> Result<(), SolveError> {
    match bound {
        TableBound::OnePerCell => match t.max_entries() {
            0 | 1 => Ok(()),
            n => Err(SolveError::Invariant(format!(
                "cell with {n} entries, bound 1"
            ))),
        },
        TableBound::OneEntry => match t.entry_count() {
            0 | 1 => Ok(()),
            n => Err(SolveError::Invariant(format!(
                "table with {n} entries, bound 1"
            ))),
        },
        TableBound::PowerOfUncovered => {
            for (u, cell) in t.cells() {
                let covered = u.first().map_or(0, |m| m.count_ones() as usize);
                let k = t.bag.len() - covered;
                if (cell.len() as u128) > 1u128 << k {
                    return Err(SolveError::Invariant(format!(
                        "cell with {} entries, bound 2^{k}",
                        cell.len()
                    )));
                }
            }
            Ok(())
        }
    }
}
