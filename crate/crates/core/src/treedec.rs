//! Tree decompositions: the `.td` exchange format, validation, the min-fill
//! heuristic, and conversion to nice decompositions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fmt::Write as _;

use thiserror::Error;

use crate::structure::{Obj, Structure};

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum TdError {
    #[error("td format error at line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error("bag graph is not a tree: {0}")]
    NotATree(String),
    #[error("structure has an empty universe")]
    EmptyUniverse,
}

/// A tree of bags. Bags and edges keep their input order so that the
/// exchange format round-trips exactly.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TreeDecomposition {
    pub bags: Vec<Vec<Obj>>,
    pub edges: Vec<(usize, usize)>,
    pub root: usize,
    pub n_vertices: usize,
}

impl TreeDecomposition {
    /// Largest bag size minus one; `-1` never occurs since empty bags give 0.
    pub fn width(&self) -> usize {
        self.bags
            .iter()
            .map(Vec::len)
            .max()
            .unwrap_or(0)
            .saturating_sub(1)
    }

    fn max_bag(&self) -> usize {
        self.bags.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.bags.len()];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        adj
    }

    /// Path decomposition from a sequence of bags.
    pub fn path(bags: Vec<Vec<Obj>>, n_vertices: usize) -> Self {
        let edges = (1..bags.len()).map(|i| (i - 1, i)).collect();
        TreeDecomposition {
            bags,
            edges,
            root: 0,
            n_vertices,
        }
    }

    pub fn to_td_string(&self) -> String {
        let mut s = format!(
            "s td {} {} {}\n",
            self.bags.len(),
            self.max_bag(),
            self.n_vertices
        );
        for (i, b) in self.bags.iter().enumerate() {
            let _ = write!(s, "b {}", i + 1);
            for v in b {
                let _ = write!(s, " {v}");
            }
            s.push('\n');
        }
        for &(a, b) in &self.edges {
            let _ = writeln!(s, "{} {}", a + 1, b + 1);
        }
        s
    }
}

/// Parses the `.td` format. The tree is rooted at bag 1. A header announcing
/// zero bags yields a single empty bag.
pub fn parse_td(text: &str) -> Result<TreeDecomposition, TdError> {
    let mut header: Option<(usize, usize, usize)> = None;
    let mut bags: Vec<Option<Vec<Obj>>> = Vec::new();
    let mut edges = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let t = line.trim();
        if t.is_empty() || t.starts_with('c') {
            continue;
        }
        let bad = |msg: String| TdError::Format { line: line_no, msg };
        let fields: Vec<&str> = t.split_whitespace().collect();
        let num = |s: &str| -> Result<usize, TdError> {
            s.parse::<usize>()
                .map_err(|_| bad(format!("`{s}` is not a non-negative integer")))
        };
        match fields[0] {
            "s" => {
                if header.is_some() {
                    return Err(bad("duplicate header".into()));
                }
                if fields.len() != 5 || fields[1] != "td" {
                    return Err(bad("expected `s td <bags> <width+1> <n>`".into()));
                }
                let h = (num(fields[2])?, num(fields[3])?, num(fields[4])?);
                bags = vec![None; h.0];
                header = Some(h);
            }
            "b" => {
                let Some((nb, _, n)) = header else {
                    return Err(bad("bag before header".into()));
                };
                if fields.len() < 2 {
                    return Err(bad("bag line without index".into()));
                }
                let idx = num(fields[1])?;
                if idx == 0 || idx > nb {
                    return Err(bad(format!("bag index {idx} out of range")));
                }
                if bags[idx - 1].is_some() {
                    return Err(bad(format!("bag {idx} listed twice")));
                }
                let mut bag = Vec::new();
                for f in &fields[2..] {
                    let v = num(f)?;
                    if v == 0 || v > n {
                        return Err(bad(format!("vertex {v} out of range")));
                    }
                    bag.push(v as Obj);
                }
                bags[idx - 1] = Some(bag);
            }
            _ => {
                let Some((nb, _, _)) = header else {
                    return Err(bad("edge before header".into()));
                };
                if fields.len() != 2 {
                    return Err(bad("expected a tree edge `<i> <j>`".into()));
                }
                let (a, b) = (num(fields[0])?, num(fields[1])?);
                if a == 0 || b == 0 || a > nb || b > nb {
                    return Err(bad(format!("bag index in edge {a} {b} out of range")));
                }
                edges.push((a - 1, b - 1));
            }
        }
    }
    let (nb, w1, n) = header.ok_or(TdError::Format {
        line: 0,
        msg: "missing header".into(),
    })?;
    if nb == 0 {
        return Ok(TreeDecomposition {
            bags: vec![Vec::new()],
            edges: Vec::new(),
            root: 0,
            n_vertices: n,
        });
    }
    let bags: Vec<Vec<Obj>> = bags
        .into_iter()
        .enumerate()
        .map(|(i, b)| {
            b.ok_or(TdError::Format {
                line: 0,
                msg: format!("bag {} missing", i + 1),
            })
        })
        .collect::<Result<_, _>>()?;
    let td = TreeDecomposition {
        bags,
        edges,
        root: 0,
        n_vertices: n,
    };
    if td.max_bag() != w1 {
        return Err(TdError::Format {
            line: 0,
            msg: format!("header width+1 is {w1}, largest bag has {}", td.max_bag()),
        });
    }
    check_tree(&td)?;
    Ok(td)
}

fn check_tree(td: &TreeDecomposition) -> Result<(), TdError> {
    let n = td.bags.len();
    if td.edges.len() + 1 != n {
        return Err(TdError::NotATree(format!(
            "{} bags need {} edges, found {}",
            n,
            n - 1,
            td.edges.len()
        )));
    }
    let adj = td.adjacency();
    let mut seen = vec![false; n];
    let mut stack = vec![td.root];
    seen[td.root] = true;
    while let Some(a) = stack.pop() {
        for &b in &adj[a] {
            if !seen[b] {
                seen[b] = true;
                stack.push(b);
            }
        }
    }
    match seen.iter().position(|s| !s) {
        Some(i) => Err(TdError::NotATree(format!(
            "bag {} is not connected to bag {}",
            i + 1,
            td.root + 1
        ))),
        None => Ok(()),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    NotATree(String),
    UnknownObject(Obj),
    UncoveredObject(Obj),
    UncoveredTuple { relation: String, tuple: Vec<Obj> },
    Disconnected(Obj),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NotATree(m) => write!(f, "bag graph is not a tree: {m}"),
            Violation::UnknownObject(o) => {
                write!(f, "bag contains object {o} outside the universe")
            }
            Violation::UncoveredObject(o) => write!(f, "object {o} is in no bag"),
            Violation::UncoveredTuple { relation, tuple } => {
                let t: Vec<String> = tuple.iter().map(|o| o.to_string()).collect();
                write!(f, "tuple {relation}({}) is in no bag", t.join(","))
            }
            Violation::Disconnected(o) => write!(f, "bags containing object {o} are not connected"),
        }
    }
}

/// First witness of each violated condition; empty means the decomposition is valid.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ViolationReport(pub Vec<Violation>);

impl fmt::Display for ViolationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.0 {
            writeln!(f, "{v}")?;
        }
        Ok(())
    }
}

pub fn validate_td(td: &TreeDecomposition, a: &Structure) -> Result<(), ViolationReport> {
    let mut report = Vec::new();
    if let Err(TdError::NotATree(m)) = check_tree(td) {
        report.push(Violation::NotATree(m));
        return Err(ViolationReport(report));
    }
    let bag_sets: Vec<BTreeSet<Obj>> = td
        .bags
        .iter()
        .map(|b| b.iter().copied().collect())
        .collect();
    if let Some(&o) = bag_sets
        .iter()
        .flatten()
        .find(|o| !a.universe().contains(o))
    {
        report.push(Violation::UnknownObject(o));
    }
    if let Some(&o) = a
        .universe()
        .iter()
        .find(|o| !bag_sets.iter().any(|b| b.contains(o)))
    {
        report.push(Violation::UncoveredObject(o));
    }
    'rel: for (name, _, tuples) in a.relations() {
        for t in tuples {
            if !bag_sets.iter().any(|b| t.iter().all(|o| b.contains(o))) {
                report.push(Violation::UncoveredTuple {
                    relation: name.to_string(),
                    tuple: t.clone(),
                });
                break 'rel;
            }
        }
    }
    let adj = td.adjacency();
    for &o in a.universe() {
        let holders: Vec<usize> = (0..td.bags.len())
            .filter(|&i| bag_sets[i].contains(&o))
            .collect();
        let Some(&start) = holders.first() else {
            continue;
        };
        let mut seen = BTreeSet::from([start]);
        let mut stack = vec![start];
        while let Some(i) = stack.pop() {
            for &j in &adj[i] {
                if bag_sets[j].contains(&o) && seen.insert(j) {
                    stack.push(j);
                }
            }
        }
        if seen.len() != holders.len() {
            report.push(Violation::Disconnected(o));
            break;
        }
    }
    if report.is_empty() {
        Ok(())
    } else {
        Err(ViolationReport(report))
    }
}

fn gaifman(a: &Structure) -> BTreeMap<Obj, BTreeSet<Obj>> {
    let mut g: BTreeMap<Obj, BTreeSet<Obj>> =
        a.universe().iter().map(|&o| (o, BTreeSet::new())).collect();
    for (_, _, tuples) in a.relations() {
        for t in tuples {
            for &u in t {
                for &v in t {
                    if u != v {
                        g.get_mut(&u).unwrap().insert(v);
                    }
                }
            }
        }
    }
    g
}

/// Decomposition from the min-fill elimination ordering; ties go to the
/// smallest object id. The bag of the last eliminated object is the root.
pub fn min_fill_td(a: &Structure) -> TreeDecomposition {
    let n = a.len();
    if n == 0 {
        return TreeDecomposition {
            bags: vec![Vec::new()],
            edges: Vec::new(),
            root: 0,
            n_vertices: 0,
        };
    }
    let mut g = gaifman(a);
    let mut order = Vec::with_capacity(n);
    let mut later: Vec<BTreeSet<Obj>> = Vec::with_capacity(n);
    while !g.is_empty() {
        let (&v, _) = g
            .iter()
            .min_by_key(|(&v, nb)| {
                let nb: Vec<Obj> = nb.iter().copied().collect();
                let mut fill = 0usize;
                for i in 0..nb.len() {
                    for j in i + 1..nb.len() {
                        if !g[&nb[i]].contains(&nb[j]) {
                            fill += 1;
                        }
                    }
                }
                (fill, v)
            })
            .unwrap();
        let nb = g.remove(&v).unwrap();
        for &u in &nb {
            let e = g.get_mut(&u).unwrap();
            e.remove(&v);
            e.extend(nb.iter().copied().filter(|&w| w != u));
        }
        order.push(v);
        later.push(nb);
    }
    // Bag k (elimination index) gets tree index n-1-k so the root comes first.
    let pos: BTreeMap<Obj, usize> = order.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let mut bags = vec![Vec::new(); n];
    let mut edges = Vec::new();
    for k in 0..n {
        let mut bag: Vec<Obj> = later[k].iter().copied().collect();
        bag.push(order[k]);
        bag.sort_unstable();
        bags[n - 1 - k] = bag;
        if k + 1 < n {
            let parent = later[k].iter().map(|u| pos[u]).min().unwrap_or(k + 1);
            edges.push((n - 1 - parent, n - 1 - k));
        }
    }
    edges.sort_unstable();
    TreeDecomposition {
        bags,
        edges,
        root: 0,
        n_vertices: a
            .universe()
            .iter()
            .next_back()
            .map_or(0, |&m| m as usize)
            .max(n),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NiceKind {
    Leaf(Obj),
    Introduce(Obj),
    Forget(Obj),
    Join,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NiceNode {
    pub kind: NiceKind,
    /// Sorted ascending.
    pub bag: Vec<Obj>,
    pub children: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NiceTreeDecomposition {
    pub nodes: Vec<NiceNode>,
    pub root: usize,
}

impl NiceTreeDecomposition {
    pub fn width(&self) -> usize {
        self.nodes
            .iter()
            .map(|n| n.bag.len())
            .max()
            .unwrap_or(0)
            .saturating_sub(1)
    }

    /// Node indices with every child before its parent.
    pub fn post_order(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![(self.root, false)];
        while let Some((i, done)) = stack.pop() {
            if done {
                out.push(i);
            } else {
                stack.push((i, true));
                for &c in self.nodes[i].children.iter().rev() {
                    stack.push((c, false));
                }
            }
        }
        out
    }

    /// The underlying plain decomposition.
    pub fn to_td(&self, n_vertices: usize) -> TreeDecomposition {
        let mut edges = Vec::new();
        for (i, n) in self.nodes.iter().enumerate() {
            for &c in &n.children {
                edges.push((i, c));
            }
        }
        TreeDecomposition {
            bags: self.nodes.iter().map(|n| n.bag.clone()).collect(),
            edges,
            root: self.root,
            n_vertices,
        }
    }

    /// Checks the node-kind rules and the empty root bag.
    pub fn check_kinds(&self) -> Result<(), String> {
        if !self.nodes[self.root].bag.is_empty() {
            return Err("root bag is not empty".into());
        }
        for (i, n) in self.nodes.iter().enumerate() {
            let child_bag = |k: usize| -> &Vec<Obj> { &self.nodes[n.children[k]].bag };
            let ok = match n.kind {
                NiceKind::Leaf(x) => n.children.is_empty() && n.bag == [x],
                NiceKind::Introduce(x) => {
                    n.children.len() == 1 && {
                        let mut b = child_bag(0).clone();
                        !b.contains(&x) && {
                            b.push(x);
                            b.sort_unstable();
                            b == n.bag
                        }
                    }
                }
                NiceKind::Forget(x) => {
                    n.children.len() == 1 && child_bag(0).contains(&x) && {
                        let b: Vec<Obj> =
                            child_bag(0).iter().copied().filter(|&v| v != x).collect();
                        b == n.bag
                    }
                }
                NiceKind::Join => {
                    n.children.len() == 2 && *child_bag(0) == n.bag && *child_bag(1) == n.bag
                }
            };
            if !ok {
                return Err(format!("node {i} ({:?}) violates its kind", n.kind));
            }
        }
        Ok(())
    }
}

/// Converts a decomposition into a nice one with singleton leaves and an
/// empty root bag. Children are visited by ascending subtree minimum.
pub fn nicify(td: &TreeDecomposition) -> Result<NiceTreeDecomposition, TdError> {
    check_tree(td)?;
    if td.bags.iter().all(Vec::is_empty) {
        return Err(TdError::EmptyUniverse);
    }
    let adj = td.adjacency();
    let n = td.bags.len();
    let mut parent = vec![usize::MAX; n];
    let mut order = vec![td.root];
    let mut seen = vec![false; n];
    seen[td.root] = true;
    let mut k = 0;
    while k < order.len() {
        let a = order[k];
        k += 1;
        for &b in &adj[a] {
            if !seen[b] {
                seen[b] = true;
                parent[b] = a;
                order.push(b);
            }
        }
    }
    let mut children = vec![Vec::new(); n];
    let mut sub_min = vec![Obj::MAX; n];
    for &a in order.iter().rev() {
        let own = td.bags[a].iter().copied().min().unwrap_or(Obj::MAX);
        sub_min[a] = sub_min[a].min(own);
        if parent[a] != usize::MAX {
            let p = parent[a];
            sub_min[p] = sub_min[p].min(sub_min[a]);
            children[p].push(a);
        }
    }
    let mut out = NiceTreeDecomposition {
        nodes: Vec::new(),
        root: 0,
    };
    let top = build_nice(td, td.root, &children, &sub_min, &mut out).expect("some bag is nonempty");
    let mut bag = sorted(&td.bags[td.root]);
    let mut cur = top;
    while let Some(&x) = bag.first() {
        bag.remove(0);
        cur = push(&mut out, NiceKind::Forget(x), bag.clone(), vec![cur]);
    }
    out.root = cur;
    Ok(out)
}

fn sorted(b: &[Obj]) -> Vec<Obj> {
    let mut v = b.to_vec();
    v.sort_unstable();
    v.dedup();
    v
}

fn push(
    out: &mut NiceTreeDecomposition,
    kind: NiceKind,
    bag: Vec<Obj>,
    children: Vec<usize>,
) -> usize {
    out.nodes.push(NiceNode {
        kind,
        bag,
        children,
    });
    out.nodes.len() - 1
}

/// Chain of forgets then introduces turning `from` into bag `to`.
fn transition(out: &mut NiceTreeDecomposition, mut cur: usize, to: &[Obj]) -> usize {
    let mut bag = out.nodes[cur].bag.clone();
    for x in bag.clone() {
        if !to.contains(&x) {
            bag.retain(|&v| v != x);
            cur = push(out, NiceKind::Forget(x), bag.clone(), vec![cur]);
        }
    }
    for &x in to {
        if !bag.contains(&x) {
            bag.push(x);
            bag.sort_unstable();
            cur = push(out, NiceKind::Introduce(x), bag.clone(), vec![cur]);
        }
    }
    cur
}

fn build_nice(
    td: &TreeDecomposition,
    t: usize,
    children: &[Vec<usize>],
    sub_min: &[Obj],
    out: &mut NiceTreeDecomposition,
) -> Option<usize> {
    let bag = sorted(&td.bags[t]);
    let mut kids = children[t].clone();
    kids.sort_by_key(|&c| (sub_min[c], c));
    let mut subtrees: Vec<usize> = Vec::new();
    for c in kids {
        if let Some(s) = build_nice(td, c, children, sub_min, out) {
            subtrees.push(transition(out, s, &bag));
        }
    }
    if subtrees.is_empty() {
        let first = *bag.first()?;
        let leaf = push(out, NiceKind::Leaf(first), vec![first], Vec::new());
        return Some(transition(out, leaf, &bag));
    }
    let mut cur = subtrees[0];
    for &s in &subtrees[1..] {
        cur = push(out, NiceKind::Join, bag.clone(), vec![cur, s]);
    }
    Some(cur)
}
