//! Finite relational structures with partially interpreted nullary symbols.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::logic::{Symbol, Vocabulary};

pub type Obj = u32;

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum StructureError {
    #[error("object {0} is not in the universe")]
    NotInUniverse(Obj),
    #[error("unknown symbol `{0}`")]
    UnknownSymbol(String),
    #[error("symbol `{0}` is already present")]
    SymbolPresent(String),
    #[error("tuple for `{name}` has length {got}, expected {expected}")]
    TupleArity {
        name: String,
        expected: usize,
        got: usize,
    },
    #[error("interpretation kind does not match arity of `{0}`")]
    InterpretationKind(String),
    #[error("structures have different vocabularies")]
    VocabularyMismatch,
    #[error("structures are not compatible")]
    Incompatible,
    #[error("graph format error at line {line}: {msg}")]
    GraphFormat { line: usize, msg: String },
}

/// Interpretation used by [`Structure::expand`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Interp {
    Set(BTreeSet<Obj>),
    Object(Option<Obj>),
}

/// A structure over a vocabulary: universe, relations (arity ≥ 1) and
/// nullary symbols that are either interpreted or NIL.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Structure {
    universe: BTreeSet<Obj>,
    relations: BTreeMap<String, (usize, BTreeSet<Vec<Obj>>)>,
    nullaries: BTreeMap<String, Option<Obj>>,
}

impl Structure {
    /// Empty interpretations of every symbol of `vocab` over `universe`.
    pub fn new(vocab: &Vocabulary, universe: impl IntoIterator<Item = Obj>) -> Self {
        let mut s = Structure {
            universe: universe.into_iter().collect(),
            ..Default::default()
        };
        for sym in vocab.iter() {
            if sym.arity == 0 {
                s.nullaries.insert(sym.name, None);
            } else {
                s.relations.insert(sym.name, (sym.arity, BTreeSet::new()));
            }
        }
        s
    }

    /// Undirected graph on `1..=n` with `adj` stored in both orientations.
    pub fn graph(n: usize, edges: &[(Obj, Obj)]) -> Result<Self, StructureError> {
        let mut s = Structure::new(&Vocabulary::graph(), 1..=n as Obj);
        for &(u, v) in edges {
            s.add_tuple("adj", vec![u, v])?;
            s.add_tuple("adj", vec![v, u])?;
        }
        Ok(s)
    }

    pub fn vocabulary(&self) -> Vocabulary {
        Vocabulary::from_symbols(
            self.relations
                .iter()
                .map(|(n, (a, _))| Symbol::new(n.clone(), *a))
                .chain(self.nullaries.keys().map(|n| Symbol::new(n.clone(), 0))),
        )
        .expect("names are unique by construction")
    }

    pub fn universe(&self) -> &BTreeSet<Obj> {
        &self.universe
    }

    pub fn len(&self) -> usize {
        self.universe.len()
    }

    pub fn is_empty(&self) -> bool {
        self.universe.is_empty()
    }

    pub fn relation(&self, name: &str) -> Option<&BTreeSet<Vec<Obj>>> {
        self.relations.get(name).map(|(_, t)| t)
    }

    pub fn relations(&self) -> impl Iterator<Item = (&str, usize, &BTreeSet<Vec<Obj>>)> {
        self.relations.iter().map(|(n, (a, t))| (n.as_str(), *a, t))
    }

    /// `None` if the symbol is absent; `Some(None)` if it is NIL.
    pub fn nullary(&self, name: &str) -> Option<Option<Obj>> {
        self.nullaries.get(name).copied()
    }

    pub fn nullaries(&self) -> impl Iterator<Item = (&str, Option<Obj>)> {
        self.nullaries.iter().map(|(n, v)| (n.as_str(), *v))
    }

    /// `interpreted(A)`
    pub fn interpreted(&self) -> BTreeSet<String> {
        self.nullaries
            .iter()
            .filter(|(_, v)| v.is_some())
            .map(|(n, _)| n.clone())
            .collect()
    }

    pub fn is_fully_interpreted(&self) -> bool {
        self.nullaries.values().all(|v| v.is_some())
    }

    pub fn add_object(&mut self, o: Obj) {
        self.universe.insert(o);
    }

    pub fn add_tuple(&mut self, name: &str, tuple: Vec<Obj>) -> Result<(), StructureError> {
        if let Some(&o) = tuple.iter().find(|o| !self.universe.contains(o)) {
            return Err(StructureError::NotInUniverse(o));
        }
        let (arity, tuples) = self
            .relations
            .get_mut(name)
            .ok_or_else(|| StructureError::UnknownSymbol(name.to_string()))?;
        if *arity != tuple.len() {
            return Err(StructureError::TupleArity {
                name: name.to_string(),
                expected: *arity,
                got: tuple.len(),
            });
        }
        tuples.insert(tuple);
        Ok(())
    }

    pub fn set_nullary(&mut self, name: &str, value: Option<Obj>) -> Result<(), StructureError> {
        if let Some(o) = value {
            if !self.universe.contains(&o) {
                return Err(StructureError::NotInUniverse(o));
            }
        }
        let slot = self
            .nullaries
            .get_mut(name)
            .ok_or_else(|| StructureError::UnknownSymbol(name.to_string()))?;
        *slot = value;
        Ok(())
    }

    /// Edges `{u, v}` with `u < v` of the symmetric `adj` relation.
    pub fn edges(&self) -> Vec<(Obj, Obj)> {
        self.relation("adj")
            .map(|t| {
                t.iter()
                    .filter(|e| e.len() == 2 && e[0] < e[1])
                    .map(|e| (e[0], e[1]))
                    .collect()
            })
            .unwrap_or_default()
    }

    /// `A[S]`: nullaries whose value leaves `S` become NIL.
    pub fn induced_substructure(&self, s: &BTreeSet<Obj>) -> Result<Structure, StructureError> {
        if let Some(&o) = s.iter().find(|o| !self.universe.contains(o)) {
            return Err(StructureError::NotInUniverse(o));
        }
        Ok(Structure {
            universe: s.clone(),
            relations: self
                .relations
                .iter()
                .map(|(n, (a, t))| {
                    let kept = t
                        .iter()
                        .filter(|tu| tu.iter().all(|o| s.contains(o)))
                        .cloned()
                        .collect();
                    (n.clone(), (*a, kept))
                })
                .collect(),
            nullaries: self
                .nullaries
                .iter()
                .map(|(n, v)| (n.clone(), v.filter(|o| s.contains(o))))
                .collect(),
        })
    }

    fn same_vocabulary(&self, other: &Structure) -> bool {
        self.nullaries.keys().eq(other.nullaries.keys())
            && self
                .relations
                .iter()
                .map(|(n, (a, _))| (n, a))
                .eq(other.relations.iter().map(|(n, (a, _))| (n, a)))
    }

    pub fn is_compatible(&self, other: &Structure) -> Result<bool, StructureError> {
        if !self.same_vocabulary(other) {
            return Err(StructureError::VocabularyMismatch);
        }
        for (n, v) in &self.nullaries {
            if let (Some(a), Some(b)) = (v, other.nullaries[n]) {
                if *a != b {
                    return Ok(false);
                }
            }
        }
        let common: BTreeSet<Obj> = self
            .universe
            .intersection(&other.universe)
            .copied()
            .collect();
        for (n, (_, t)) in &self.relations {
            let inside = |tu: &&Vec<Obj>| tu.iter().all(|o| common.contains(o));
            let mine: BTreeSet<&Vec<Obj>> = t.iter().filter(inside).collect();
            let theirs: BTreeSet<&Vec<Obj>> = other.relations[n].1.iter().filter(inside).collect();
            if mine != theirs {
                return Ok(false);
            }
        }
        Ok(true)
    }

    pub fn union(&self, other: &Structure) -> Result<Structure, StructureError> {
        if !self.is_compatible(other)? {
            return Err(StructureError::Incompatible);
        }
        let mut out = self.clone();
        out.universe.extend(other.universe.iter().copied());
        for (n, (_, t)) in &other.relations {
            out.relations
                .get_mut(n)
                .unwrap()
                .1
                .extend(t.iter().cloned());
        }
        for (n, v) in &other.nullaries {
            let slot = out.nullaries.get_mut(n).unwrap();
            if slot.is_none() {
                *slot = *v;
            }
        }
        Ok(out)
    }

    /// Expansion by a fresh symbol: a set for arity 1, an object or NIL for arity 0.
    pub fn expand(&self, sym: &Symbol, interp: Interp) -> Result<Structure, StructureError> {
        if self.relations.contains_key(&sym.name) || self.nullaries.contains_key(&sym.name) {
            return Err(StructureError::SymbolPresent(sym.name.clone()));
        }
        let mut out = self.clone();
        match (sym.arity, interp) {
            (1, Interp::Set(s)) => {
                if let Some(&o) = s.iter().find(|o| !self.universe.contains(o)) {
                    return Err(StructureError::NotInUniverse(o));
                }
                out.relations.insert(
                    sym.name.clone(),
                    (1, s.into_iter().map(|o| vec![o]).collect()),
                );
            }
            (0, Interp::Object(v)) => {
                if let Some(o) = v {
                    if !self.universe.contains(&o) {
                        return Err(StructureError::NotInUniverse(o));
                    }
                }
                out.nullaries.insert(sym.name.clone(), v);
            }
            _ => return Err(StructureError::InterpretationKind(sym.name.clone())),
        }
        Ok(out)
    }

    /// Human-readable single-line rendering.
    pub fn describe(&self) -> String {
        let mut s = String::new();
        let _ = write!(s, "{{{}}}", join(self.universe.iter()));
        for (n, (_, t)) in &self.relations {
            let tuples: Vec<String> = t
                .iter()
                .map(|tu| format!("({})", join(tu.iter())))
                .collect();
            let _ = write!(s, " {n}=[{}]", tuples.join(""));
        }
        for (n, v) in &self.nullaries {
            match v {
                Some(o) => {
                    let _ = write!(s, " {n}={o}");
                }
                None => {
                    let _ = write!(s, " {n}=nil");
                }
            }
        }
        s
    }
}

fn join<'a>(it: impl Iterator<Item = &'a Obj>) -> String {
    it.map(|o| o.to_string()).collect::<Vec<_>>().join(",")
}

/// An isomorphism `H1 → H2` that is the identity on `x`, found by exhaustive
/// search over bijections extending the identity.
pub fn iso_fixing(
    h1: &Structure,
    h2: &Structure,
    x: &BTreeSet<Obj>,
) -> Result<Option<BTreeMap<Obj, Obj>>, StructureError> {
    if let Some(&o) = x
        .iter()
        .find(|o| !h1.universe.contains(o) || !h2.universe.contains(o))
    {
        return Err(StructureError::NotInUniverse(o));
    }
    if !h1.same_vocabulary(h2) || h1.universe.len() != h2.universe.len() {
        return Ok(None);
    }
    let mut map: BTreeMap<Obj, Obj> = x.iter().map(|&o| (o, o)).collect();
    for (n, v) in &h1.nullaries {
        match (v, h2.nullaries[n]) {
            (None, None) => {}
            (Some(a), Some(b)) => match map.get(a) {
                Some(&m) if m != b => return Ok(None),
                Some(_) => {}
                None => {
                    if x.contains(&b) || map.values().any(|&m| m == b) {
                        return Ok(None);
                    }
                    map.insert(*a, b);
                }
            },
            _ => return Ok(None),
        }
    }
    let free1: Vec<Obj> = h1
        .universe
        .iter()
        .copied()
        .filter(|o| !map.contains_key(o))
        .collect();
    let used: BTreeSet<Obj> = map.values().copied().collect();
    let free2: Vec<Obj> = h2
        .universe
        .iter()
        .copied()
        .filter(|o| !used.contains(o))
        .collect();
    let mut taken = vec![false; free2.len()];
    if extend(h1, h2, &free1, &free2, &mut taken, &mut map) {
        Ok(Some(map))
    } else {
        Ok(None)
    }
}

fn extend(
    h1: &Structure,
    h2: &Structure,
    free1: &[Obj],
    free2: &[Obj],
    taken: &mut [bool],
    map: &mut BTreeMap<Obj, Obj>,
) -> bool {
    let Some((&a, rest)) = free1.split_first() else {
        return h1.relations.iter().all(|(n, (_, t))| {
            let t2 = &h2.relations[n].1;
            t.len() == t2.len()
                && t.iter()
                    .all(|tu| t2.contains(&tu.iter().map(|o| map[o]).collect::<Vec<_>>()))
        });
    };
    for i in 0..free2.len() {
        if taken[i] {
            continue;
        }
        taken[i] = true;
        map.insert(a, free2[i]);
        if extend(h1, h2, rest, free2, taken, map) {
            return true;
        }
        map.remove(&a);
        taken[i] = false;
    }
    false
}

/// Parses the PACE `.gr` format: `p tw <n> <m>`, then `m` edge lines.
pub fn parse_gr(text: &str) -> Result<Structure, StructureError> {
    let mut header: Option<(usize, usize)> = None;
    let mut edges = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let t = line.trim();
        if t.is_empty() || t.starts_with('c') {
            continue;
        }
        let fields: Vec<&str> = t.split_whitespace().collect();
        let bad = |msg: &str| StructureError::GraphFormat {
            line: line_no,
            msg: msg.to_string(),
        };
        if fields[0] == "p" {
            if header.is_some() {
                return Err(bad("duplicate header"));
            }
            if fields.len() != 4 || fields[1] != "tw" {
                return Err(bad("expected `p tw <n> <m>`"));
            }
            let n = fields[2].parse().map_err(|_| bad("bad vertex count"))?;
            let m = fields[3].parse().map_err(|_| bad("bad edge count"))?;
            header = Some((n, m));
            continue;
        }
        let Some((n, _)) = header else {
            return Err(bad("edge before header"));
        };
        if fields.len() != 2 {
            return Err(bad("expected `<u> <v>`"));
        }
        let u: Obj = fields[0].parse().map_err(|_| bad("bad vertex id"))?;
        let v: Obj = fields[1].parse().map_err(|_| bad("bad vertex id"))?;
        if u == 0 || v == 0 || u as usize > n || v as usize > n {
            return Err(bad("vertex id out of range"));
        }
        edges.push((u, v));
    }
    let (n, m) = header.ok_or(StructureError::GraphFormat {
        line: 0,
        msg: "missing header".into(),
    })?;
    if edges.len() != m {
        return Err(StructureError::GraphFormat {
            line: 0,
            msg: format!("header announces {m} edges, found {}", edges.len()),
        });
    }
    Structure::graph(n, &edges)
}

pub fn to_gr_string(g: &Structure) -> String {
    let edges = g.edges();
    let mut s = format!("p tw {} {}\n", g.len(), edges.len());
    for (u, v) in edges {
        let _ = writeln!(s, "{u} {v}");
    }
    s
}
