//! Extended model-checking games.
//!
//! Games are hash-consed in a [`GameStore`]. A position's structure `H` is
//! stored relative to the sorted list `X`: element `i` of `X` has code `i`,
//! and an object outside `X` (always the value of some nullary symbol) has
//! code `32 + k` where `k` is the smallest nullary slot naming it. Since the
//! isomorphisms of interest fix `X` and must preserve nullary values, this
//! encoding is canonical, so two game nodes are equivalent exactly when
//! they have the same id. Nodes do not mention `X` itself; a [`Game`] pairs
//! an interned `X` with a node.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::sync::Arc;

use indexmap::IndexSet;
use rustc_hash::{FxBuildHasher, FxHashMap, FxHashSet};
use thiserror::Error;

use crate::logic::{Class, Formula, Node, NodeId, Symbol, Vocabulary};
use crate::structure::{iso_fixing, Obj, Structure};

const NIL: u8 = u8::MAX;
const LOCAL: u8 = 32;
const NONE: u32 = u32::MAX;
/// Largest supported `|X|`.
pub const MAX_X: usize = 32;
/// Largest supported number of nullary symbols (free and bound).
pub const MAX_OBJECT_SYMBOLS: usize = 32;
/// Largest universe accepted by [`GameStore::emc`] and [`GameStore::reduce_emc`].
pub const MAX_EMC_UNIVERSE: usize = 24;
/// Object ids used for objects outside `X` when positions are decoded.
pub const LOCAL_OBJECT_BASE: Obj = 0xFFFF_FF00;

const TOP_ID: u32 = 0;
const BOTTOM_ID: u32 = 1;

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum GameError {
    #[error("formula is not in negation normal form")]
    NotNnf,
    #[error("formula uses too many symbols: {0}")]
    TooManySymbols(String),
    #[error("symbol `{0}` cannot be resolved in the structure")]
    Unresolved(String),
    #[error("structure too large for game construction: {0}")]
    TooLarge(String),
    #[error("object {0} is not in the universe")]
    NotInUniverse(Obj),
    #[error("object {0} is not in X")]
    NotInX(Obj),
    #[error("root subformulas differ")]
    FormulaMismatch,
    #[error("root structures are not compatible")]
    Incompatible,
    #[error("determined games with opposite outcomes cannot be combined")]
    ConflictingSentinels,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Owner {
    Falsifier,
    Verifier,
    Neither,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Truth {
    True,
    False,
    Draw,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Target {
    Set(u16),
    Rel(u16),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Bind {
    Set(u16),
    Var(u8),
}

#[derive(Clone, Debug)]
enum CNode {
    Atom {
        neg: bool,
        target: Target,
        args: Box<[u8]>,
    },
    Binary {
        universal: bool,
        left: u32,
        right: u32,
    },
    Quant {
        universal: bool,
        bind: Bind,
        body: u32,
    },
}

/// A formula in negation normal form with its symbols laid out in slots.
#[derive(Clone, Debug)]
pub struct GameFormula {
    formula: Formula,
    nodes: Vec<CNode>,
    set_slots: Vec<String>,
    rel_slots: Vec<(String, usize)>,
    rel_arity: Vec<usize>,
    var_slots: Vec<String>,
    /// Nullary slots in the vocabulary of positions at each node.
    scope: Vec<u32>,
}

impl GameFormula {
    pub fn new(formula: &Formula) -> Result<Self, GameError> {
        if !formula.is_nnf() {
            return Err(GameError::NotNnf);
        }
        let mut set_slots = Vec::new();
        let mut rel_slots = Vec::new();
        let mut var_slots = Vec::new();
        let mut free_vars = 0u32;
        for s in formula.base().iter() {
            match s.arity {
                0 => {
                    free_vars |= 1 << var_slots.len().min(31);
                    var_slots.push(s.name);
                }
                1 => set_slots.push(s.name),
                a => rel_slots.push((s.name, a)),
            }
        }
        for s in formula.bound_symbols() {
            if s.arity == 0 {
                var_slots.push(s.name);
            } else {
                set_slots.push(s.name);
            }
        }
        if var_slots.len() > MAX_OBJECT_SYMBOLS {
            return Err(GameError::TooManySymbols(format!(
                "{} object symbols, at most {MAX_OBJECT_SYMBOLS}",
                var_slots.len()
            )));
        }
        if set_slots.len() > u16::MAX as usize || rel_slots.len() > u16::MAX as usize {
            return Err(GameError::TooManySymbols(
                "too many relation symbols".into(),
            ));
        }
        let set_ix: FxHashMap<&str, u16> = set_slots
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i as u16))
            .collect();
        let rel_ix: FxHashMap<&str, u16> = rel_slots
            .iter()
            .enumerate()
            .map(|(i, (s, _))| (s.as_str(), i as u16))
            .collect();
        let var_ix: FxHashMap<&str, u8> = var_slots
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i as u8))
            .collect();
        let nodes = formula
            .nodes()
            .iter()
            .map(|n| match n {
                Node::Atom { rel, args } | Node::NegAtom { rel, args } => CNode::Atom {
                    neg: matches!(n, Node::NegAtom { .. }),
                    target: if args.len() == 1 {
                        Target::Set(set_ix[rel.as_str()])
                    } else {
                        Target::Rel(rel_ix[rel.as_str()])
                    },
                    args: args.iter().map(|a| var_ix[a.as_str()]).collect(),
                },
                Node::And(a, b) | Node::Or(a, b) => CNode::Binary {
                    universal: matches!(n, Node::And(..)),
                    left: *a as u32,
                    right: *b as u32,
                },
                Node::ForallSet(s, b) | Node::ExistsSet(s, b) => CNode::Quant {
                    universal: matches!(n, Node::ForallSet(..)),
                    bind: Bind::Set(set_ix[s.as_str()]),
                    body: *b as u32,
                },
                Node::ForallObj(s, b) | Node::ExistsObj(s, b) => CNode::Quant {
                    universal: matches!(n, Node::ForallObj(..)),
                    bind: Bind::Var(var_ix[s.as_str()]),
                    body: *b as u32,
                },
                Node::Not(_) => unreachable!("checked NNF"),
            })
            .collect::<Vec<_>>();
        let mut scope = vec![0u32; nodes.len()];
        let mut stack = vec![(formula.root(), free_vars)];
        while let Some((id, s)) = stack.pop() {
            scope[id] = s;
            match &nodes[id] {
                CNode::Atom { .. } => {}
                CNode::Binary { left, right, .. } => {
                    stack.push((*left as usize, s));
                    stack.push((*right as usize, s));
                }
                CNode::Quant { bind, body, .. } => {
                    let inner = match bind {
                        Bind::Var(v) => s | (1 << v),
                        Bind::Set(_) => s,
                    };
                    stack.push((*body as usize, inner));
                }
            }
        }
        Ok(GameFormula {
            formula: formula.clone(),
            nodes,
            rel_arity: rel_slots.iter().map(|(_, a)| *a).collect(),
            set_slots,
            rel_slots,
            var_slots,
            scope,
        })
    }

    pub fn formula(&self) -> &Formula {
        &self.formula
    }

    pub fn root(&self) -> NodeId {
        self.formula.root()
    }

    fn is_universal(&self, phi: u32) -> Option<bool> {
        match &self.nodes[phi as usize] {
            CNode::Atom { .. } => None,
            CNode::Binary { universal, .. } | CNode::Quant { universal, .. } => Some(*universal),
        }
    }

    /// Vocabulary of the structures of positions at `phi`.
    fn position_vocabulary(&self, phi: u32) -> Vocabulary {
        let scope = self.scope[phi as usize];
        Vocabulary::from_symbols(
            self.set_slots
                .iter()
                .map(|s| Symbol::new(s.clone(), 1))
                .chain(
                    self.rel_slots
                        .iter()
                        .map(|(s, a)| Symbol::new(s.clone(), *a)),
                )
                .chain(
                    self.var_slots
                        .iter()
                        .enumerate()
                        .filter(|(k, _)| scope & (1 << k) != 0)
                        .map(|(_, s)| Symbol::new(s.clone(), 0)),
                ),
        )
        .expect("slot names are unique")
    }
}

/// `H` of a position in the code representation described in the module docs.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct LStruct {
    null: Box<[u8]>,
    sets: Box<[u64]>,
    rels: Box<[Box<[u8]>]>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct NodeData {
    st: u32,
    phi: u32,
    kids: Box<[u32]>,
}

/// A handle to a game in a [`GameStore`]: either a sentinel or an `X` plus a node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Game {
    x: u32,
    node: u32,
}

impl Game {
    /// The game won by the verifier.
    pub const TOP: Game = Game { x: 0, node: TOP_ID };
    /// The game won by the falsifier.
    pub const BOTTOM: Game = Game {
        x: 0,
        node: BOTTOM_ID,
    };

    pub fn is_top(self) -> bool {
        self.node == TOP_ID
    }

    pub fn is_bottom(self) -> bool {
        self.node == BOTTOM_ID
    }

    pub fn is_sentinel(self) -> bool {
        self.node <= BOTTOM_ID
    }

    fn new(x: u32, node: u32) -> Game {
        if node <= BOTTOM_ID {
            Game { x: 0, node }
        } else {
            Game { x, node }
        }
    }

    /// Node id inside the owning store; stable until the next compaction.
    pub fn node_id(self) -> u32 {
        self.node
    }
}

/// Index maps for a union of two `X` lists.
struct Merge {
    m1: Vec<u8>,
    m2: Vec<u8>,
    common1: u32,
    common2: u32,
}

impl Merge {
    fn new(x1: &[Obj], x2: &[Obj], x: &[Obj]) -> Merge {
        let pos = |o: &Obj| x.binary_search(o).unwrap() as u8;
        let mut common1 = 0u32;
        let mut common2 = 0u32;
        for (i, o) in x1.iter().enumerate() {
            if let Ok(j) = x2.binary_search(o) {
                common1 |= 1 << i;
                common2 |= 1 << j;
            }
        }
        Merge {
            m1: x1.iter().map(pos).collect(),
            m2: x2.iter().map(pos).collect(),
            common1,
            common2,
        }
    }
}

fn remap_code(c: u8, m: &[u8]) -> u8 {
    if c < LOCAL {
        m[c as usize]
    } else {
        c
    }
}

fn remap_bits(mask: u64, m: &[u8]) -> u64 {
    let mut out = mask & !0xFFFF_FFFF;
    let mut low = mask & 0xFFFF_FFFF;
    while low != 0 {
        let i = low.trailing_zeros() as usize;
        low &= low - 1;
        out |= 1 << m[i];
    }
    out
}

fn sorted_tuples(flat: Vec<u8>, arity: usize) -> Box<[u8]> {
    let mut tuples: Vec<&[u8]> = flat.chunks(arity).collect();
    tuples.sort_unstable();
    tuples.dedup();
    tuples.concat().into_boxed_slice()
}

/// Hash-consing manager for the games of one formula.
pub struct GameStore {
    gf: Arc<GameFormula>,
    structs: IndexSet<LStruct, FxBuildHasher>,
    nodes: IndexSet<NodeData, FxBuildHasher>,
    xs: IndexSet<Box<[Obj]>, FxBuildHasher>,
    reduce_memo: FxHashMap<u32, u32>,
    eval_memo: FxHashMap<u32, u32>,
    convert_memo: FxHashMap<u32, u32>,
    combine_memo: FxHashMap<(u32, u32, u32, u32), u32>,
    union_memo: FxHashMap<(u32, u32, u32, u32), u32>,
    forget_memo: FxHashMap<(u32, u32, u32), u32>,
}

impl GameStore {
    pub fn new(formula: &Formula) -> Result<Self, GameError> {
        Ok(Self::with_formula(Arc::new(GameFormula::new(formula)?)))
    }

    pub fn with_formula(gf: Arc<GameFormula>) -> Self {
        let mut s = GameStore {
            gf,
            structs: IndexSet::default(),
            nodes: IndexSet::default(),
            xs: IndexSet::default(),
            reduce_memo: FxHashMap::default(),
            eval_memo: FxHashMap::default(),
            convert_memo: FxHashMap::default(),
            combine_memo: FxHashMap::default(),
            union_memo: FxHashMap::default(),
            forget_memo: FxHashMap::default(),
        };
        s.reset_tables();
        s
    }

    fn reset_tables(&mut self) {
        self.nodes.clear();
        for phi in [NONE, NONE - 1] {
            self.nodes.insert(NodeData {
                st: NONE,
                phi,
                kids: Box::new([]),
            });
        }
        if self.xs.is_empty() {
            self.xs.insert(Box::new([]));
        }
    }

    pub fn formula(&self) -> &Arc<GameFormula> {
        &self.gf
    }

    /// Number of interned game nodes, sentinels included.
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    fn data(&self, id: u32) -> &NodeData {
        self.nodes.get_index(id as usize).unwrap()
    }

    fn lst(&self, id: u32) -> &LStruct {
        self.structs.get_index(id as usize).unwrap()
    }

    fn intern_struct(&mut self, s: LStruct) -> u32 {
        self.structs.insert_full(s).0 as u32
    }

    fn intern_x(&mut self, x: &[Obj]) -> u32 {
        if let Some(i) = self.xs.get_index_of(x) {
            return i as u32;
        }
        self.xs.insert_full(x.into()).0 as u32
    }

    fn intern_node(&mut self, st: u32, phi: u32, mut kids: Vec<u32>) -> u32 {
        kids.sort_unstable();
        kids.dedup();
        self.nodes
            .insert_full(NodeData {
                st,
                phi,
                kids: kids.into_boxed_slice(),
            })
            .0 as u32
    }

    /// `X` of a game; empty for sentinels.
    pub fn x_of(&self, g: Game) -> &[Obj] {
        &self.xs[g.x as usize]
    }

    /// Subformula of the root position.
    pub fn phi_of(&self, g: Game) -> Option<NodeId> {
        (!g.is_sentinel()).then(|| self.data(g.node).phi as usize)
    }

    /// Subgames in canonical order.
    pub fn children(&self, g: Game) -> Vec<Game> {
        if g.is_sentinel() {
            return Vec::new();
        }
        self.data(g.node)
            .kids
            .iter()
            .map(|&k| Game::new(g.x, k))
            .collect()
    }

    pub fn owner(&self, g: Game) -> Option<Owner> {
        if g.is_sentinel() {
            return None;
        }
        let d = self.data(g.node);
        Some(self.owner_of(d.st, d.phi))
    }

    fn owner_of(&self, st: u32, phi: u32) -> Owner {
        match self.gf.is_universal(phi) {
            Some(true) => Owner::Falsifier,
            Some(false) => Owner::Verifier,
            None => match self.atom_truth(st, phi) {
                Truth::True => Owner::Falsifier,
                Truth::False => Owner::Verifier,
                Truth::Draw => Owner::Neither,
            },
        }
    }

    fn atom_truth(&self, st: u32, phi: u32) -> Truth {
        let CNode::Atom { neg, target, args } = &self.gf.nodes[phi as usize] else {
            unreachable!("not an atom")
        };
        let s = self.lst(st);
        let mut codes = [0u8; 8];
        let mut long = Vec::new();
        let codes: &mut [u8] = if args.len() <= 8 {
            &mut codes[..args.len()]
        } else {
            long.resize(args.len(), 0);
            &mut long
        };
        for (i, &a) in args.iter().enumerate() {
            let c = s.null[a as usize];
            if c == NIL {
                return Truth::Draw;
            }
            codes[i] = c;
        }
        let holds = match *target {
            Target::Set(slot) => s.sets[slot as usize] >> codes[0] & 1 == 1,
            Target::Rel(slot) => s.rels[slot as usize]
                .chunks(args.len())
                .any(|t| t == &codes[..]),
        };
        if holds != *neg {
            Truth::True
        } else {
            Truth::False
        }
    }

    /// Result of evaluating an atomic position.
    fn atom_result(&mut self, st: u32, phi: u32) -> u32 {
        match self.atom_truth(st, phi) {
            Truth::True => TOP_ID,
            Truth::False => BOTTOM_ID,
            Truth::Draw => self.intern_node(st, phi, Vec::new()),
        }
    }

    /// Closing step of a reduction whose children are already reduced and
    /// free of sentinels.
    fn settle(&mut self, st: u32, phi: u32, universal: bool, kids: Vec<u32>) -> u32 {
        if kids.is_empty() {
            if universal {
                TOP_ID
            } else {
                BOTTOM_ID
            }
        } else {
            self.intern_node(st, phi, kids)
        }
    }

    // -----------------------------------------------------------------------
    // Construction

    /// The full extended model-checking game `EMC(A, X, φ)`.
    pub fn emc(
        &mut self,
        a: &Structure,
        x: &BTreeSet<Obj>,
        phi: NodeId,
    ) -> Result<Game, GameError> {
        let xs: Vec<Obj> = x.iter().copied().collect();
        let mut ex = Expander::new(&self.gf, a, &xs, phi)?;
        let node = ex.build(self, phi as u32, false);
        let xid = self.intern_x(&xs);
        Ok(Game::new(xid, node))
    }

    /// `reduce(EMC(A, X, φ))` computed without materializing the full game.
    pub fn reduce_emc(
        &mut self,
        a: &Structure,
        x: &BTreeSet<Obj>,
        phi: NodeId,
    ) -> Result<Game, GameError> {
        let xs: Vec<Obj> = x.iter().copied().collect();
        let mut ex = Expander::new(&self.gf, a, &xs, phi)?;
        let node = ex.build(self, phi as u32, true);
        let xid = self.intern_x(&xs);
        Ok(Game::new(xid, node))
    }

    // -----------------------------------------------------------------------
    // Evaluation and reduction

    /// Evaluation without short-circuit: all subgames are evaluated first.
    pub fn eval(&mut self, g: Game) -> Game {
        Game::new(g.x, self.eval_rec(g.node))
    }

    fn eval_rec(&mut self, id: u32) -> u32 {
        if id <= BOTTOM_ID {
            return id;
        }
        if let Some(&r) = self.eval_memo.get(&id) {
            return r;
        }
        let d = self.data(id).clone();
        let r = match self.gf.is_universal(d.phi) {
            None => match self.atom_truth(d.st, d.phi) {
                Truth::True => TOP_ID,
                Truth::False => BOTTOM_ID,
                Truth::Draw => id,
            },
            Some(universal) => {
                let evs: Vec<u32> = d.kids.iter().map(|&k| self.eval_rec(k)).collect();
                let (win, lose) = if universal {
                    (TOP_ID, BOTTOM_ID)
                } else {
                    (BOTTOM_ID, TOP_ID)
                };
                if evs.iter().all(|&e| e == win) {
                    win
                } else if evs.contains(&lose) {
                    lose
                } else {
                    self.intern_node(d.st, d.phi, evs)
                }
            }
        };
        self.eval_memo.insert(id, r);
        r
    }

    pub fn reduce(&mut self, g: Game) -> Game {
        Game::new(g.x, self.reduce_rec(g.node))
    }

    fn reduce_rec(&mut self, id: u32) -> u32 {
        if id <= BOTTOM_ID {
            return id;
        }
        if let Some(&r) = self.reduce_memo.get(&id) {
            return r;
        }
        let d = self.data(id).clone();
        let r = match self.gf.is_universal(d.phi) {
            None => self.atom_result(d.st, d.phi),
            Some(universal) => 'done: {
                let mut kept = Vec::new();
                for &k in d.kids.iter() {
                    let r = self.reduce_rec(k);
                    if (universal && r == BOTTOM_ID) || (!universal && r == TOP_ID) {
                        break 'done r;
                    }
                    if r > BOTTOM_ID {
                        kept.push(r);
                    }
                }
                self.settle(d.st, d.phi, universal, kept)
            }
        };
        self.reduce_memo.insert(id, r);
        r
    }

    /// The classical game: positions keep only nullary values and children
    /// whose structure is not fully interpreted are dropped. Sentinel
    /// children carry no position and are dropped as well.
    pub fn convert(&mut self, g: Game) -> Game {
        if g.is_sentinel() {
            return g;
        }
        let node = self.convert_rec(g.node);
        Game::new(0, node)
    }

    fn convert_rec(&mut self, id: u32) -> u32 {
        if let Some(&r) = self.convert_memo.get(&id) {
            return r;
        }
        let d = self.data(id).clone();
        let st = restrict_to_named(self.lst(d.st), &self.gf.rel_arity);
        let st = self.intern_struct(st);
        let mut kids = Vec::new();
        for &k in d.kids.iter() {
            if k <= BOTTOM_ID {
                continue;
            }
            let kd = self.data(k);
            if self.fully_interpreted(kd.st, kd.phi) {
                kids.push(self.convert_rec(k));
            }
        }
        let r = self.intern_node(st, d.phi, kids);
        self.convert_memo.insert(id, r);
        r
    }

    fn fully_interpreted(&self, st: u32, phi: u32) -> bool {
        let scope = self.gf.scope[phi as usize];
        let s = self.lst(st);
        (0..s.null.len()).all(|k| scope & (1 << k) == 0 || s.null[k] != NIL)
    }

    // -----------------------------------------------------------------------
    // Combination and forgetting

    /// Combines two reduced games over compatible structures whose
    /// universes meet exactly in the shared part of their `X`.
    pub fn combine(&mut self, g1: Game, g2: Game) -> Result<Game, GameError> {
        match (g1.is_sentinel(), g2.is_sentinel()) {
            (true, true) if g1 != g2 => return Err(GameError::ConflictingSentinels),
            (true, _) => return Ok(g1),
            (_, true) => return Ok(g2),
            _ => {}
        }
        let (d1, d2) = (self.data(g1.node), self.data(g2.node));
        if d1.phi != d2.phi {
            return Err(GameError::FormulaMismatch);
        }
        let x1 = self.xs[g1.x as usize].clone();
        let x2 = self.xs[g2.x as usize].clone();
        let mut x: Vec<Obj> = x1.iter().chain(x2.iter()).copied().collect();
        x.sort_unstable();
        x.dedup();
        if x.len() > MAX_X {
            return Err(GameError::TooLarge(format!(
                "|X| = {} exceeds {MAX_X}",
                x.len()
            )));
        }
        let merge = Merge::new(&x1, &x2, &x);
        let xid = self.intern_x(&x);
        let ctx = (g1.x, g2.x);
        match self.combine_rec(&merge, ctx, g1.node, g2.node) {
            NONE => Err(GameError::Incompatible),
            r => Ok(Game::new(xid, r)),
        }
    }

    fn union_st(&mut self, merge: &Merge, ctx: (u32, u32), s1: u32, s2: u32) -> u32 {
        let key = (ctx.0, ctx.1, s1, s2);
        if let Some(&r) = self.union_memo.get(&key) {
            return r;
        }
        let r = match union_lstruct(self.lst(s1), self.lst(s2), merge, &self.gf) {
            Some(s) => self.intern_struct(s),
            None => NONE,
        };
        self.union_memo.insert(key, r);
        r
    }

    fn combine_rec(&mut self, merge: &Merge, ctx: (u32, u32), n1: u32, n2: u32) -> u32 {
        let key = (ctx.0, ctx.1, n1, n2);
        if let Some(&r) = self.combine_memo.get(&key) {
            return r;
        }
        let d1 = self.data(n1).clone();
        let d2 = self.data(n2).clone();
        let st = self.union_st(merge, ctx, d1.st, d2.st);
        let r = if st == NONE {
            NONE
        } else {
            match self.gf.is_universal(d1.phi) {
                None => self.atom_result(st, d1.phi),
                Some(universal) => 'done: {
                    let mut kept = Vec::new();
                    for &c1 in d1.kids.iter() {
                        if c1 <= BOTTOM_ID {
                            continue;
                        }
                        let p1 = self.data(c1).phi;
                        for &c2 in d2.kids.iter() {
                            if c2 <= BOTTOM_ID || self.data(c2).phi != p1 {
                                continue;
                            }
                            let r = self.combine_rec(merge, ctx, c1, c2);
                            if r == NONE {
                                continue;
                            }
                            if (universal && r == BOTTOM_ID) || (!universal && r == TOP_ID) {
                                break 'done r;
                            }
                            if r > BOTTOM_ID {
                                kept.push(r);
                            }
                        }
                    }
                    self.settle(st, d1.phi, universal, kept)
                }
            }
        };
        self.combine_memo.insert(key, r);
        r
    }

    /// Removes `x` from `X`; `x` stays in `H` when a nullary symbol names it.
    pub fn forget(&mut self, g: Game, x: Obj) -> Result<Game, GameError> {
        if g.is_sentinel() {
            return Ok(g);
        }
        let xs = self.xs[g.x as usize].clone();
        let idx = xs.binary_search(&x).map_err(|_| GameError::NotInX(x))?;
        let rest: Vec<Obj> = xs.iter().copied().filter(|&o| o != x).collect();
        let xid = self.intern_x(&rest);
        let node = self.forget_rec(g.x, idx as u8, g.node);
        Ok(Game::new(xid, node))
    }

    fn forget_rec(&mut self, xid: u32, idx: u8, id: u32) -> u32 {
        if id <= BOTTOM_ID {
            return id;
        }
        let key = (xid, idx as u32, id);
        if let Some(&r) = self.forget_memo.get(&key) {
            return r;
        }
        let d = self.data(id).clone();
        let st = forget_lstruct(self.lst(d.st), idx, &self.gf.rel_arity);
        let st = self.intern_struct(st);
        let r = match self.gf.is_universal(d.phi) {
            None => self.atom_result(st, d.phi),
            Some(universal) => 'done: {
                let mut kept = Vec::new();
                for &k in d.kids.iter() {
                    let r = self.forget_rec(xid, idx, k);
                    if (universal && r == BOTTOM_ID) || (!universal && r == TOP_ID) {
                        break 'done r;
                    }
                    if r > BOTTOM_ID {
                        kept.push(r);
                    }
                }
                self.settle(st, d.phi, universal, kept)
            }
        };
        self.forget_memo.insert(key, r);
        r
    }

    // -----------------------------------------------------------------------
    // Equivalence and inspection

    /// Equivalence by the definition: same `X`, same subformula, structures
    /// isomorphic by a map fixing `X`, and a bijection between subgames
    /// pairing equivalent ones.
    pub fn equivalent(&self, g1: Game, g2: Game) -> bool {
        let mut memo = FxHashMap::default();
        self.equiv_rec(g1, g2, &mut memo)
    }

    fn equiv_rec(&self, g1: Game, g2: Game, memo: &mut FxHashMap<(Game, Game), bool>) -> bool {
        if g1.is_sentinel() || g2.is_sentinel() {
            return g1 == g2;
        }
        if let Some(&r) = memo.get(&(g1, g2)) {
            return r;
        }
        let r = self.x_of(g1) == self.x_of(g2) && {
            let (p1, p2) = (self.position(g1).unwrap(), self.position(g2).unwrap());
            p1.phi == p2.phi
                && iso_fixing(&p1.structure, &p2.structure, &p1.x)
                    .ok()
                    .flatten()
                    .is_some()
                && {
                    let (k1, k2) = (self.children(g1), self.children(g2));
                    k1.len() == k2.len() && {
                        let compat: Vec<Vec<bool>> = k1
                            .iter()
                            .map(|&a| k2.iter().map(|&b| self.equiv_rec(a, b, memo)).collect())
                            .collect();
                        perfect_matching(&compat)
                    }
                }
        };
        memo.insert((g1, g2), r);
        r
    }

    /// A byte string equal for two games exactly when they are equivalent.
    pub fn canonical_key(&self, g: Game) -> Vec<u8> {
        if g.is_top() {
            return vec![0];
        }
        if g.is_bottom() {
            return vec![1];
        }
        let mut out = vec![2];
        let x = self.x_of(g);
        out.extend((x.len() as u32).to_le_bytes());
        for o in x {
            out.extend(o.to_le_bytes());
        }
        let mut memo = FxHashMap::default();
        out.extend(self.node_key(g.node, &mut memo));
        out
    }

    fn node_key(&self, id: u32, memo: &mut FxHashMap<u32, Vec<u8>>) -> Vec<u8> {
        if id <= BOTTOM_ID {
            return vec![id as u8];
        }
        if let Some(k) = memo.get(&id) {
            return k.clone();
        }
        let d = self.data(id);
        let s = self.lst(d.st);
        let mut out = vec![2];
        out.extend(d.phi.to_le_bytes());
        out.extend(s.null.iter());
        for m in s.sets.iter() {
            out.extend(m.to_le_bytes());
        }
        for r in s.rels.iter() {
            out.extend((r.len() as u32).to_le_bytes());
            out.extend(r.iter());
        }
        let mut kids: Vec<Vec<u8>> = d.kids.iter().map(|&k| self.node_key(k, memo)).collect();
        kids.sort();
        kids.dedup();
        out.extend((kids.len() as u32).to_le_bytes());
        for k in kids {
            out.extend((k.len() as u32).to_le_bytes());
            out.extend(k);
        }
        memo.insert(id, out.clone());
        out
    }

    /// The root position with `H` decoded into a [`Structure`]; objects
    /// outside `X` get ids from [`LOCAL_OBJECT_BASE`].
    pub fn position(&self, g: Game) -> Option<Position> {
        if g.is_sentinel() {
            return None;
        }
        let d = self.data(g.node);
        let x = self.x_of(g);
        let s = self.lst(d.st);
        let obj = |c: u8| -> Obj {
            if c < LOCAL {
                x[c as usize]
            } else {
                LOCAL_OBJECT_BASE + (c - LOCAL) as Obj
            }
        };
        let mut universe: BTreeSet<Obj> = x.iter().copied().collect();
        universe.extend(s.null.iter().filter(|&&c| c != NIL).map(|&c| obj(c)));
        let mut h = Structure::new(&self.gf.position_vocabulary(d.phi), universe);
        for (slot, name) in self.gf.set_slots.iter().enumerate() {
            let mut m = s.sets[slot];
            while m != 0 {
                let c = m.trailing_zeros() as u8;
                m &= m - 1;
                h.add_tuple(name, vec![obj(c)]).expect("decoded object");
            }
        }
        for (slot, (name, arity)) in self.gf.rel_slots.iter().enumerate() {
            for t in s.rels[slot].chunks(*arity) {
                h.add_tuple(name, t.iter().map(|&c| obj(c)).collect())
                    .expect("decoded object");
            }
        }
        let scope = self.gf.scope[d.phi as usize];
        for (k, name) in self.gf.var_slots.iter().enumerate() {
            if scope & (1 << k) != 0 {
                let v = s.null[k];
                h.set_nullary(name, (v != NIL).then(|| obj(v)))
                    .expect("decoded object");
            }
        }
        Some(Position {
            structure: h,
            x: x.iter().copied().collect(),
            phi: d.phi as NodeId,
            owner: self.owner_of(d.st, d.phi),
        })
    }

    /// Number of distinct positions reachable from the root.
    pub fn size(&self, g: Game) -> usize {
        if g.is_sentinel() {
            return 1;
        }
        let mut seen = FxHashSet::default();
        let mut stack = vec![g.node];
        while let Some(n) = stack.pop() {
            if seen.insert(n) {
                stack.extend(self.data(n).kids.iter().copied());
            }
        }
        seen.len()
    }

    /// Indented text rendering, one position per line.
    pub fn debug_string(&self, g: Game) -> String {
        let mut out = String::new();
        self.debug_rec(g, 0, &mut out);
        out
    }

    fn debug_rec(&self, g: Game, depth: usize, out: &mut String) {
        let pad = "  ".repeat(depth);
        if g.is_top() {
            let _ = writeln!(out, "{pad}TOP");
            return;
        }
        if g.is_bottom() {
            let _ = writeln!(out, "{pad}BOTTOM");
            return;
        }
        let p = self.position(g).unwrap();
        let _ = writeln!(
            out,
            "{pad}phi={} X={:?} H={}",
            p.phi,
            p.x,
            p.structure.describe()
        );
        for k in self.children(g) {
            self.debug_rec(k, depth + 1, out);
        }
    }

    /// Drops all operation memos; results stay interned.
    pub fn clear_memos(&mut self) {
        self.reduce_memo.clear();
        self.eval_memo.clear();
        self.convert_memo.clear();
        self.combine_memo.clear();
        self.union_memo.clear();
        self.forget_memo.clear();
    }

    /// Rebuilds the tables keeping only what is reachable from `roots` and
    /// returns the old-to-new node id map. Memo tables are cleared.
    pub fn compact(&mut self, roots: &[u32]) -> FxHashMap<u32, u32> {
        let old_nodes = std::mem::take(&mut self.nodes);
        let old_structs = std::mem::take(&mut self.structs);
        self.clear_memos();
        self.reset_tables();
        let mut map: FxHashMap<u32, u32> = FxHashMap::default();
        map.insert(TOP_ID, TOP_ID);
        map.insert(BOTTOM_ID, BOTTOM_ID);
        let mut st_map: FxHashMap<u32, u32> = FxHashMap::default();
        for &r in roots {
            let mut stack = vec![(r, false)];
            while let Some((n, expanded)) = stack.pop() {
                if map.contains_key(&n) {
                    continue;
                }
                let d = old_nodes.get_index(n as usize).unwrap();
                if !expanded {
                    stack.push((n, true));
                    for &k in d.kids.iter() {
                        if !map.contains_key(&k) {
                            stack.push((k, false));
                        }
                    }
                    continue;
                }
                let st = *st_map.entry(d.st).or_insert_with(|| {
                    self.structs
                        .insert_full(old_structs.get_index(d.st as usize).unwrap().clone())
                        .0 as u32
                });
                let kids: Vec<u32> = d.kids.iter().map(|k| map[k]).collect();
                let id = self.intern_node(st, d.phi, kids);
                map.insert(n, id);
            }
        }
        map
    }

    /// The same game with `X` renamed order-preservingly to `x`.
    pub fn rebase(&mut self, g: Game, x: &[Obj]) -> Game {
        if g.is_sentinel() {
            return g;
        }
        debug_assert_eq!(self.x_of(g).len(), x.len());
        let xid = self.intern_x(x);
        Game::new(xid, g.node)
    }

    /// Re-targets a game handle after [`GameStore::compact`].
    pub fn remap(g: Game, map: &FxHashMap<u32, u32>) -> Game {
        Game::new(g.x, map[&g.node])
    }
}

/// A decoded position.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Position {
    pub structure: Structure,
    pub x: BTreeSet<Obj>,
    pub phi: NodeId,
    pub owner: Owner,
}

fn perfect_matching(compat: &[Vec<bool>]) -> bool {
    let n = compat.len();
    let mut match_r: Vec<Option<usize>> = vec![None; n];
    fn augment(
        u: usize,
        compat: &[Vec<bool>],
        seen: &mut [bool],
        match_r: &mut [Option<usize>],
    ) -> bool {
        for v in 0..compat[u].len() {
            if compat[u][v] && !seen[v] {
                seen[v] = true;
                if match_r[v].is_none_or(|w| augment(w, compat, seen, match_r)) {
                    match_r[v] = Some(u);
                    return true;
                }
            }
        }
        false
    }
    (0..n).all(|u| augment(u, compat, &mut vec![false; n], &mut match_r))
}

fn union_lstruct(a: &LStruct, b: &LStruct, m: &Merge, gf: &GameFormula) -> Option<LStruct> {
    let mut null = Vec::with_capacity(a.null.len());
    for k in 0..a.null.len() {
        let (ca, cb) = (a.null[k], b.null[k]);
        null.push(match (ca != NIL, cb != NIL) {
            (true, true) => {
                if ca < LOCAL && cb < LOCAL && m.m1[ca as usize] == m.m2[cb as usize] {
                    m.m1[ca as usize]
                } else {
                    return None;
                }
            }
            (true, false) => remap_code(ca, &m.m1),
            (false, true) => remap_code(cb, &m.m2),
            (false, false) => NIL,
        });
    }
    let mut sets = Vec::with_capacity(a.sets.len());
    for s in 0..a.sets.len() {
        let pa = remap_bits(a.sets[s] & m.common1 as u64, &m.m1);
        let pb = remap_bits(b.sets[s] & m.common2 as u64, &m.m2);
        if pa != pb {
            return None;
        }
        sets.push(remap_bits(a.sets[s], &m.m1) | remap_bits(b.sets[s], &m.m2));
    }
    let mut rels = Vec::with_capacity(a.rels.len());
    for (r, (_, arity)) in gf.rel_slots.iter().enumerate() {
        let arity = *arity;
        let in_common = |t: &[u8], mask: u32| t.iter().all(|&c| c < LOCAL && mask >> c & 1 == 1);
        let mut ca: Vec<&[u8]> = a.rels[r]
            .chunks(arity)
            .filter(|t| in_common(t, m.common1))
            .collect();
        let mut cb: Vec<&[u8]> = b.rels[r]
            .chunks(arity)
            .filter(|t| in_common(t, m.common2))
            .collect();
        if ca.len() != cb.len() {
            return None;
        }
        let map_all = |ts: &mut Vec<&[u8]>, mm: &[u8]| -> Vec<Vec<u8>> {
            let mut v: Vec<Vec<u8>> = ts
                .iter()
                .map(|t| t.iter().map(|&c| remap_code(c, mm)).collect())
                .collect();
            v.sort_unstable();
            v
        };
        if map_all(&mut ca, &m.m1) != map_all(&mut cb, &m.m2) {
            return None;
        }
        let mut flat: Vec<u8> = a.rels[r].iter().map(|&c| remap_code(c, &m.m1)).collect();
        flat.extend(b.rels[r].iter().map(|&c| remap_code(c, &m.m2)));
        rels.push(sorted_tuples(flat, arity));
    }
    Some(LStruct {
        null: null.into_boxed_slice(),
        sets: sets.into_boxed_slice(),
        rels: rels.into_boxed_slice(),
    })
}

/// Applies a code map (`NIL` drops the object) to a structure.
fn relabel(s: &LStruct, arities: &[usize], map: impl Fn(u8) -> u8) -> LStruct {
    let null = s
        .null
        .iter()
        .map(|&c| if c == NIL { NIL } else { map(c) })
        .collect();
    let sets = s
        .sets
        .iter()
        .map(|&m| {
            let mut out = 0u64;
            let mut mm = m;
            while mm != 0 {
                let c = mm.trailing_zeros() as u8;
                mm &= mm - 1;
                let d = map(c);
                if d != NIL {
                    out |= 1 << d;
                }
            }
            out
        })
        .collect();
    let rels = s
        .rels
        .iter()
        .zip(arities)
        .map(|(flat, &arity)| {
            let mut out = Vec::with_capacity(flat.len());
            for t in flat.chunks(arity) {
                let start = out.len();
                out.extend(t.iter().map(|&c| map(c)));
                if out[start..].contains(&NIL) {
                    out.truncate(start);
                }
            }
            sorted_tuples(out, arity)
        })
        .collect();
    LStruct { null, sets, rels }
}

fn forget_lstruct(s: &LStruct, idx: u8, arities: &[usize]) -> LStruct {
    let namer = s
        .null
        .iter()
        .position(|&c| c == idx)
        .map(|k| LOCAL + k as u8);
    relabel(s, arities, |c| {
        if c >= LOCAL || c < idx {
            c
        } else if c == idx {
            namer.unwrap_or(NIL)
        } else {
            c - 1
        }
    })
}

fn restrict_to_named(s: &LStruct, arities: &[usize]) -> LStruct {
    let mut namer = [NIL; LOCAL as usize];
    for (k, &c) in s.null.iter().enumerate() {
        if c < LOCAL && namer[c as usize] == NIL {
            namer[c as usize] = LOCAL + k as u8;
        }
    }
    relabel(
        s,
        arities,
        |c| if c >= LOCAL { c } else { namer[c as usize] },
    )
}

// ---------------------------------------------------------------------------

struct RelTable {
    arity: usize,
    tuples: FxHashSet<Vec<u8>>,
    list: Vec<Vec<u8>>,
    /// Row `u` holds the bits `v` with `(u, v)` in the relation (binary only).
    matrix: Vec<u64>,
}

/// Walks the expansions of a structure and builds game nodes.
struct Expander {
    gf: Arc<GameFormula>,
    n: usize,
    xpos: Vec<u8>,
    sets: Vec<u64>,
    rels: Vec<RelTable>,
    vars: Vec<u8>,
}

impl Expander {
    fn new(
        gf: &Arc<GameFormula>,
        a: &Structure,
        x: &[Obj],
        phi: NodeId,
    ) -> Result<Self, GameError> {
        if x.len() > MAX_X {
            return Err(GameError::TooLarge(format!(
                "|X| = {} exceeds {MAX_X}",
                x.len()
            )));
        }
        if a.len() > MAX_EMC_UNIVERSE {
            return Err(GameError::TooLarge(format!(
                "universe of {} objects exceeds {MAX_EMC_UNIVERSE}",
                a.len()
            )));
        }
        if let Some(&o) = x.iter().find(|o| !a.universe().contains(o)) {
            return Err(GameError::NotInUniverse(o));
        }
        let vocab = a.vocabulary();
        for s in gf.formula.free_symbols_all(phi) {
            if vocab.arity(&s.name) != Some(s.arity) {
                return Err(GameError::Unresolved(s.name));
            }
        }
        let univ: Vec<Obj> = a.universe().iter().copied().collect();
        let idx = |o: &Obj| univ.binary_search(o).unwrap() as u8;
        let xpos = univ
            .iter()
            .map(|o| x.binary_search(o).map_or(NIL, |i| i as u8))
            .collect();
        let sets = gf
            .set_slots
            .iter()
            .map(|name| match a.relation(name) {
                Some(t) if vocab.arity(name) == Some(1) => {
                    t.iter().fold(0u64, |m, tu| m | 1 << idx(&tu[0]))
                }
                _ => 0,
            })
            .collect();
        let n = univ.len();
        let rels = gf
            .rel_slots
            .iter()
            .map(|(name, arity)| {
                let list: Vec<Vec<u8>> = match a.relation(name) {
                    Some(t) if vocab.arity(name) == Some(*arity) => {
                        t.iter().map(|tu| tu.iter().map(idx).collect()).collect()
                    }
                    _ => Vec::new(),
                };
                let mut matrix = vec![0u64; if *arity == 2 { n } else { 0 }];
                if *arity == 2 {
                    for t in &list {
                        matrix[t[0] as usize] |= 1 << t[1];
                    }
                }
                RelTable {
                    arity: *arity,
                    tuples: list.iter().cloned().collect(),
                    list,
                    matrix,
                }
            })
            .collect();
        let vars = gf
            .var_slots
            .iter()
            .map(|name| match a.nullary(name) {
                Some(Some(o)) => idx(&o),
                _ => NIL,
            })
            .collect();
        Ok(Expander {
            gf: gf.clone(),
            n,
            xpos,
            sets,
            rels,
            vars,
        })
    }

    fn truth(&self, phi: u32) -> Truth {
        let CNode::Atom { neg, target, args } = &self.gf.nodes[phi as usize] else {
            unreachable!()
        };
        let holds = match *target {
            Target::Set(slot) => {
                let u = self.vars[args[0] as usize];
                if u == NIL {
                    return Truth::Draw;
                }
                self.sets[slot as usize] >> u & 1 == 1
            }
            Target::Rel(slot) => {
                let t: Vec<u8> = args.iter().map(|&a| self.vars[a as usize]).collect();
                if t.contains(&NIL) {
                    return Truth::Draw;
                }
                let r = &self.rels[slot as usize];
                if r.arity == 2 {
                    r.matrix[t[0] as usize] >> t[1] & 1 == 1
                } else {
                    r.tuples.contains(&t)
                }
            }
        };
        if holds != *neg {
            Truth::True
        } else {
            Truth::False
        }
    }

    fn encode(&self) -> LStruct {
        let mut code = self.xpos[..self.n].to_vec();
        for (k, &u) in self.vars.iter().enumerate() {
            if u != NIL && code[u as usize] == NIL {
                code[u as usize] = LOCAL + k as u8;
            }
        }
        let null = self
            .vars
            .iter()
            .map(|&u| if u == NIL { NIL } else { code[u as usize] })
            .collect();
        let sets = self
            .sets
            .iter()
            .map(|&m| {
                let mut out = 0u64;
                let mut mm = m;
                while mm != 0 {
                    let u = mm.trailing_zeros() as usize;
                    mm &= mm - 1;
                    if code[u] != NIL {
                        out |= 1 << code[u];
                    }
                }
                out
            })
            .collect();
        let rels = self
            .rels
            .iter()
            .map(|r| {
                let mut flat = Vec::new();
                for t in &r.list {
                    if t.iter().all(|&u| code[u as usize] != NIL) {
                        flat.extend(t.iter().map(|&u| code[u as usize]));
                    }
                }
                sorted_tuples(flat, r.arity)
            })
            .collect();
        LStruct { null, sets, rels }
    }

    fn position_struct(&self, store: &mut GameStore) -> u32 {
        let s = self.encode();
        store.intern_struct(s)
    }

    /// Builds the node for `phi` under the current expansion; with `reduce`
    /// the result is the reduced game, possibly a sentinel.
    fn build(&mut self, store: &mut GameStore, phi: u32, reduce: bool) -> u32 {
        let node = self.gf.nodes[phi as usize].clone();
        let (universal, mut kids) = match node {
            CNode::Atom { .. } => {
                if reduce {
                    match self.truth(phi) {
                        Truth::True => return TOP_ID,
                        Truth::False => return BOTTOM_ID,
                        Truth::Draw => {}
                    }
                }
                let st = self.position_struct(store);
                return store.intern_node(st, phi, Vec::new());
            }
            CNode::Binary {
                universal,
                left,
                right,
            } => {
                let mut kids = Vec::new();
                for c in [left, right] {
                    let r = self.build(store, c, reduce);
                    if let Some(stop) = Self::absorb(reduce, universal, r, &mut kids) {
                        return stop;
                    }
                }
                (universal, kids)
            }
            CNode::Quant {
                universal,
                bind,
                body,
            } => {
                let mut kids = Vec::new();
                match bind {
                    Bind::Set(slot) => {
                        let old = self.sets[slot as usize];
                        for m in 0..(1u64 << self.n) {
                            self.sets[slot as usize] = m;
                            let r = self.build(store, body, reduce);
                            if let Some(stop) = Self::absorb(reduce, universal, r, &mut kids) {
                                self.sets[slot as usize] = old;
                                return stop;
                            }
                        }
                        self.sets[slot as usize] = old;
                    }
                    Bind::Var(v) => {
                        let old = self.vars[v as usize];
                        for u in (0..self.n as u8).chain([NIL]) {
                            self.vars[v as usize] = u;
                            let r = self.build(store, body, reduce);
                            if let Some(stop) = Self::absorb(reduce, universal, r, &mut kids) {
                                self.vars[v as usize] = old;
                                return stop;
                            }
                        }
                        self.vars[v as usize] = old;
                    }
                }
                (universal, kids)
            }
        };
        let st = self.position_struct(store);
        if reduce {
            store.settle(st, phi, universal, std::mem::take(&mut kids))
        } else {
            store.intern_node(st, phi, kids)
        }
    }

    /// Adds a child result; returns the final result of the parent when a
    /// reduction can stop early.
    fn absorb(reduce: bool, universal: bool, r: u32, kids: &mut Vec<u32>) -> Option<u32> {
        if !reduce {
            kids.push(r);
            return None;
        }
        if (universal && r == BOTTOM_ID) || (!universal && r == TOP_ID) {
            return Some(r);
        }
        if r > BOTTOM_ID {
            kids.push(r);
        }
        None
    }
}

/// Classification helper shared with callers that only hold a [`Formula`].
pub fn owner_class(c: Class) -> Option<Owner> {
    match c {
        Class::Universal => Some(Owner::Falsifier),
        Class::Existential => Some(Owner::Verifier),
        _ => None,
    }
}
