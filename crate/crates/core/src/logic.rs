//! Vocabularies and MSO formulas.
//!
//! Formulas live in an arena of [`Node`]s. Symbols are identified by name:
//! a capitalized identifier is a unary set symbol, a lowercase one is either a
//! nullary object symbol or a declared relation name.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Symbol {
    pub name: String,
    pub arity: usize,
}

impl Symbol {
    pub fn new(name: impl Into<String>, arity: usize) -> Self {
        Symbol {
            name: name.into(),
            arity,
        }
    }
}

/// A finite set of symbols with unique names.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Vocabulary {
    symbols: BTreeMap<String, usize>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_symbols<I: IntoIterator<Item = Symbol>>(symbols: I) -> Result<Self, LogicError> {
        let mut v = Vocabulary::new();
        for s in symbols {
            v.add(s)?;
        }
        Ok(v)
    }

    /// The graph vocabulary `{adj/2}`.
    pub fn graph() -> Self {
        Vocabulary::from_symbols([Symbol::new("adj", 2)]).unwrap()
    }

    pub fn add(&mut self, sym: Symbol) -> Result<(), LogicError> {
        if self.symbols.contains_key(&sym.name) {
            return Err(LogicError::DuplicateSymbol(sym.name));
        }
        self.symbols.insert(sym.name, sym.arity);
        Ok(())
    }

    pub fn arity(&self, name: &str) -> Option<usize> {
        self.symbols.get(name).copied()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.symbols.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = Symbol> + '_ {
        self.symbols.iter().map(|(n, &a)| Symbol::new(n.clone(), a))
    }

    /// `null(τ)`
    pub fn nullaries(&self) -> impl Iterator<Item = &str> {
        self.symbols
            .iter()
            .filter(|(_, &a)| a == 0)
            .map(|(n, _)| n.as_str())
    }

    /// `rel(τ)`
    pub fn relations(&self) -> impl Iterator<Item = (&str, usize)> {
        self.symbols
            .iter()
            .filter(|(_, &a)| a > 0)
            .map(|(n, &a)| (n.as_str(), a))
    }

    /// `unary(τ)`
    pub fn unaries(&self) -> impl Iterator<Item = &str> {
        self.symbols
            .iter()
            .filter(|(_, &a)| a == 1)
            .map(|(n, _)| n.as_str())
    }

    pub fn max_arity(&self) -> usize {
        self.symbols.values().copied().max().unwrap_or(0)
    }

    pub fn union(&self, other: &Vocabulary) -> Result<Vocabulary, LogicError> {
        let mut v = self.clone();
        for s in other.iter() {
            match v.arity(&s.name) {
                Some(a) if a == s.arity => {}
                Some(_) => return Err(LogicError::DuplicateSymbol(s.name)),
                None => v.add(s)?,
            }
        }
        Ok(v)
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum LogicError {
    #[error("syntax error at line {line}, column {col}: {msg}")]
    Syntax {
        line: usize,
        col: usize,
        msg: String,
    },
    #[error("undeclared symbol `{name}` at line {line}, column {col}")]
    Undeclared {
        name: String,
        line: usize,
        col: usize,
    },
    #[error("arity mismatch for `{name}`: expected {expected}, got {got}")]
    Arity {
        name: String,
        expected: usize,
        got: usize,
    },
    #[error("symbol `{0}` is already in scope and cannot be rebound")]
    Rebinding(String),
    #[error("duplicate symbol `{0}`")]
    DuplicateSymbol(String),
}

pub type NodeId = usize;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Node {
    Atom {
        rel: String,
        args: Vec<String>,
    },
    NegAtom {
        rel: String,
        args: Vec<String>,
    },
    /// General negation; only present before NNF conversion.
    Not(NodeId),
    And(NodeId, NodeId),
    Or(NodeId, NodeId),
    ForallSet(String, NodeId),
    ExistsSet(String, NodeId),
    ForallObj(String, NodeId),
    ExistsObj(String, NodeId),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Class {
    Atomic,
    NegatedAtomic,
    Universal,
    Existential,
}

/// An MSO formula over a base vocabulary.
#[derive(Clone, Debug)]
pub struct Formula {
    base: Vocabulary,
    nodes: Vec<Node>,
    root: NodeId,
}

/// Structural equality: same base vocabulary and same tree shape from the root.
impl PartialEq for Formula {
    fn eq(&self, other: &Self) -> bool {
        self.base == other.base && self.subtree_eq(self.root, other, other.root)
    }
}

impl Eq for Formula {}

impl Formula {
    pub fn base(&self) -> &Vocabulary {
        &self.base
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// `‖φ‖`, the number of nodes reachable from the root.
    pub fn size(&self) -> usize {
        self.subtree(self.root).len()
    }

    /// Node ids of the subtree rooted at `id`, parents before children.
    pub fn subtree(&self, id: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            out.push(n);
            match &self.nodes[n] {
                Node::Atom { .. } | Node::NegAtom { .. } => {}
                Node::Not(a) => stack.push(*a),
                Node::And(a, b) | Node::Or(a, b) => {
                    stack.push(*b);
                    stack.push(*a);
                }
                Node::ForallSet(_, b)
                | Node::ExistsSet(_, b)
                | Node::ForallObj(_, b)
                | Node::ExistsObj(_, b) => stack.push(*b),
            }
        }
        out
    }

    fn subtree_eq(&self, a: NodeId, other: &Formula, b: NodeId) -> bool {
        use Node::*;
        match (&self.nodes[a], &other.nodes[b]) {
            (Atom { rel: r1, args: a1 }, Atom { rel: r2, args: a2 })
            | (NegAtom { rel: r1, args: a1 }, NegAtom { rel: r2, args: a2 }) => {
                r1 == r2 && a1 == a2
            }
            (Not(x), Not(y)) => self.subtree_eq(*x, other, *y),
            (And(x1, y1), And(x2, y2)) | (Or(x1, y1), Or(x2, y2)) => {
                self.subtree_eq(*x1, other, *x2) && self.subtree_eq(*y1, other, *y2)
            }
            (ForallSet(s1, x), ForallSet(s2, y))
            | (ExistsSet(s1, x), ExistsSet(s2, y))
            | (ForallObj(s1, x), ForallObj(s2, y))
            | (ExistsObj(s1, x), ExistsObj(s2, y)) => s1 == s2 && self.subtree_eq(*x, other, *y),
            _ => false,
        }
    }

    pub fn is_nnf(&self) -> bool {
        self.subtree(self.root)
            .iter()
            .all(|&n| !matches!(self.nodes[n], Node::Not(_)))
    }

    /// Classification of the subformula at `id`. General negation is
    /// classified by the dual of its operand.
    pub fn classify_node(&self, id: NodeId) -> Class {
        match &self.nodes[id] {
            Node::Atom { .. } => Class::Atomic,
            Node::NegAtom { .. } => Class::NegatedAtomic,
            Node::And(..) | Node::ForallSet(..) | Node::ForallObj(..) => Class::Universal,
            Node::Or(..) | Node::ExistsSet(..) | Node::ExistsObj(..) => Class::Existential,
            Node::Not(a) => match self.classify_node(*a) {
                Class::Atomic => Class::NegatedAtomic,
                Class::NegatedAtomic => Class::Atomic,
                Class::Universal => Class::Existential,
                Class::Existential => Class::Universal,
            },
        }
    }

    pub fn rank_of(&self, id: NodeId) -> usize {
        match &self.nodes[id] {
            Node::Atom { .. } | Node::NegAtom { .. } => 0,
            Node::Not(a) => self.rank_of(*a),
            Node::And(a, b) | Node::Or(a, b) => self.rank_of(*a).max(self.rank_of(*b)),
            Node::ForallSet(_, b)
            | Node::ExistsSet(_, b)
            | Node::ForallObj(_, b)
            | Node::ExistsObj(_, b) => self.rank_of(*b) + 1,
        }
    }

    /// Unary and nullary symbols occurring free in the subformula at `id`.
    pub fn free_symbols_of(&self, id: NodeId) -> BTreeSet<Symbol> {
        let mut out = BTreeSet::new();
        self.collect_free(id, &mut Vec::new(), &mut out, false);
        out
    }

    /// All symbols occurring free in the subformula at `id`, relations included.
    pub fn free_symbols_all(&self, id: NodeId) -> BTreeSet<Symbol> {
        let mut out = BTreeSet::new();
        self.collect_free(id, &mut Vec::new(), &mut out, true);
        out
    }

    fn collect_free(
        &self,
        id: NodeId,
        bound: &mut Vec<String>,
        out: &mut BTreeSet<Symbol>,
        with_relations: bool,
    ) {
        match &self.nodes[id] {
            Node::Atom { rel, args } | Node::NegAtom { rel, args } => {
                if !bound.contains(rel) && (with_relations || args.len() == 1) {
                    out.insert(Symbol::new(rel.clone(), args.len()));
                }
                for a in args {
                    if !bound.contains(a) {
                        out.insert(Symbol::new(a.clone(), 0));
                    }
                }
            }
            Node::Not(a) => self.collect_free(*a, bound, out, with_relations),
            Node::And(a, b) | Node::Or(a, b) => {
                self.collect_free(*a, bound, out, with_relations);
                self.collect_free(*b, bound, out, with_relations);
            }
            Node::ForallSet(s, b)
            | Node::ExistsSet(s, b)
            | Node::ForallObj(s, b)
            | Node::ExistsObj(s, b) => {
                bound.push(s.clone());
                self.collect_free(*b, bound, out, with_relations);
                bound.pop();
            }
        }
    }

    /// Symbols bound by some quantifier, with their arity.
    pub fn bound_symbols(&self) -> BTreeSet<Symbol> {
        self.subtree(self.root)
            .into_iter()
            .filter_map(|n| match &self.nodes[n] {
                Node::ForallSet(s, _) | Node::ExistsSet(s, _) => Some(Symbol::new(s.clone(), 1)),
                Node::ForallObj(s, _) | Node::ExistsObj(s, _) => Some(Symbol::new(s.clone(), 0)),
                _ => None,
            })
            .collect()
    }

    fn display_node(&self, id: NodeId, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.nodes[id] {
            Node::Atom { rel, args } => write_atom(f, rel, args),
            Node::NegAtom { rel, args } => {
                write!(f, "~")?;
                write_atom(f, rel, args)
            }
            Node::Not(a) => {
                write!(f, "~(")?;
                self.display_node(*a, f)?;
                write!(f, ")")
            }
            Node::And(a, b) | Node::Or(a, b) => {
                let op = if matches!(self.nodes[id], Node::And(..)) {
                    "&"
                } else {
                    "|"
                };
                write!(f, "(")?;
                self.display_node(*a, f)?;
                write!(f, " {op} ")?;
                self.display_node(*b, f)?;
                write!(f, ")")
            }
            Node::ForallSet(s, b) | Node::ForallObj(s, b) => {
                write!(f, "(all {s}. ")?;
                self.display_node(*b, f)?;
                write!(f, ")")
            }
            Node::ExistsSet(s, b) | Node::ExistsObj(s, b) => {
                write!(f, "(ex {s}. ")?;
                self.display_node(*b, f)?;
                write!(f, ")")
            }
        }
    }
}

fn write_atom(f: &mut fmt::Formatter<'_>, rel: &str, args: &[String]) -> fmt::Result {
    if args.len() == 1 {
        write!(f, "{} in {}", args[0], rel)
    } else {
        write!(f, "{}({})", rel, args.join(","))
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.display_node(self.root, f)
    }
}

pub fn quantifier_rank(f: &Formula) -> usize {
    f.rank_of(f.root)
}

pub fn free_symbols(f: &Formula) -> BTreeSet<Symbol> {
    f.free_symbols_of(f.root)
}

pub fn classify(f: &Formula) -> Class {
    f.classify_node(f.root)
}

/// Negation normal form. The output arena holds exactly the reachable nodes
/// in post-order, so applying it twice gives an identical arena.
pub fn to_nnf(f: &Formula) -> Formula {
    let mut out = Vec::new();
    let root = nnf_rec(f, f.root, false, &mut out);
    Formula {
        base: f.base.clone(),
        nodes: out,
        root,
    }
}

fn nnf_rec(f: &Formula, id: NodeId, neg: bool, out: &mut Vec<Node>) -> NodeId {
    let node = match &f.nodes[id] {
        Node::Atom { rel, args } | Node::NegAtom { rel, args } => {
            let positive = matches!(f.nodes[id], Node::Atom { .. }) != neg;
            let (rel, args) = (rel.clone(), args.clone());
            if positive {
                Node::Atom { rel, args }
            } else {
                Node::NegAtom { rel, args }
            }
        }
        Node::Not(a) => return nnf_rec(f, *a, !neg, out),
        Node::And(a, b) | Node::Or(a, b) => {
            let is_and = matches!(f.nodes[id], Node::And(..)) != neg;
            let l = nnf_rec(f, *a, neg, out);
            let r = nnf_rec(f, *b, neg, out);
            if is_and {
                Node::And(l, r)
            } else {
                Node::Or(l, r)
            }
        }
        Node::ForallSet(s, b) | Node::ExistsSet(s, b) => {
            let universal = matches!(f.nodes[id], Node::ForallSet(..)) != neg;
            let body = nnf_rec(f, *b, neg, out);
            if universal {
                Node::ForallSet(s.clone(), body)
            } else {
                Node::ExistsSet(s.clone(), body)
            }
        }
        Node::ForallObj(s, b) | Node::ExistsObj(s, b) => {
            let universal = matches!(f.nodes[id], Node::ForallObj(..)) != neg;
            let body = nnf_rec(f, *b, neg, out);
            if universal {
                Node::ForallObj(s.clone(), body)
            } else {
                Node::ExistsObj(s.clone(), body)
            }
        }
    };
    out.push(node);
    out.len() - 1
}

// ---------------------------------------------------------------------------
// Parser

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    All,
    Ex,
    In,
    LParen,
    RParen,
    Comma,
    Dot,
    Tilde,
    Bar,
    Amp,
    Arrow,
    DArrow,
    End,
}

struct Lexer {
    toks: Vec<(Tok, usize, usize)>,
}

fn lex(text: &str) -> Result<Lexer, LogicError> {
    let chars: Vec<char> = text.chars().collect();
    let mut toks = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    while i < chars.len() {
        let c = chars[i];
        let (l0, c0) = (line, col);
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            col += i - start;
            let tok = match word.as_str() {
                "all" => Tok::All,
                "ex" => Tok::Ex,
                "in" => Tok::In,
                _ => Tok::Ident(word),
            };
            toks.push((tok, l0, c0));
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 3)].iter().collect();
        let (tok, len) = if rest.starts_with("<->") {
            (Tok::DArrow, 3)
        } else if rest.starts_with("->") {
            (Tok::Arrow, 2)
        } else {
            let t = match c {
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                ',' => Tok::Comma,
                '.' => Tok::Dot,
                '~' => Tok::Tilde,
                '|' => Tok::Bar,
                '&' => Tok::Amp,
                _ => {
                    return Err(LogicError::Syntax {
                        line: l0,
                        col: c0,
                        msg: format!("unexpected character `{c}`"),
                    })
                }
            };
            (t, 1)
        };
        toks.push((tok, l0, c0));
        i += len;
        col += len;
    }
    toks.push((Tok::End, line, col));
    Ok(Lexer { toks })
}

struct Parser<'a> {
    toks: Vec<(Tok, usize, usize)>,
    pos: usize,
    base: &'a Vocabulary,
    bound: Vec<(String, usize)>,
    nodes: Vec<Node>,
}

fn is_set_name(name: &str) -> bool {
    name.chars().next().is_some_and(|c| c.is_ascii_uppercase())
}

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn here(&self) -> (usize, usize) {
        let (_, l, c) = &self.toks[self.pos];
        (*l, *c)
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, LogicError> {
        let (line, col) = self.here();
        Err(LogicError::Syntax {
            line,
            col,
            msg: msg.into(),
        })
    }

    fn expect(&mut self, t: Tok, what: &str) -> Result<(), LogicError> {
        if *self.peek() == t {
            self.pos += 1;
            Ok(())
        } else {
            self.err(format!("expected {what}"))
        }
    }

    fn ident(&mut self) -> Result<(String, usize, usize), LogicError> {
        let (line, col) = self.here();
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.pos += 1;
                Ok((s, line, col))
            }
            _ => self.err("expected identifier"),
        }
    }

    fn push(&mut self, n: Node) -> NodeId {
        self.nodes.push(n);
        self.nodes.len() - 1
    }

    fn arity_of(&self, name: &str) -> Option<usize> {
        self.bound
            .iter()
            .rev()
            .find(|(n, _)| n == name)
            .map(|(_, a)| *a)
            .or_else(|| self.base.arity(name))
    }

    fn formula(&mut self) -> Result<NodeId, LogicError> {
        if matches!(self.peek(), Tok::All | Tok::Ex) {
            return self.quant();
        }
        let left = self.disj()?;
        match self.peek() {
            Tok::Arrow => {
                self.pos += 1;
                let right = self.formula()?;
                let nl = self.push(Node::Not(left));
                Ok(self.push(Node::Or(nl, right)))
            }
            Tok::DArrow => {
                self.pos += 1;
                let right = self.formula()?;
                let left2 = self.copy_subtree(left);
                let right2 = self.copy_subtree(right);
                let nl = self.push(Node::Not(left));
                let fwd = self.push(Node::Or(nl, right));
                let nr = self.push(Node::Not(right2));
                let bwd = self.push(Node::Or(left2, nr));
                Ok(self.push(Node::And(fwd, bwd)))
            }
            _ => Ok(left),
        }
    }

    fn copy_subtree(&mut self, id: NodeId) -> NodeId {
        let n = match self.nodes[id].clone() {
            a @ (Node::Atom { .. } | Node::NegAtom { .. }) => a,
            Node::Not(a) => Node::Not(self.copy_subtree(a)),
            Node::And(a, b) => {
                let (a, b) = (self.copy_subtree(a), self.copy_subtree(b));
                Node::And(a, b)
            }
            Node::Or(a, b) => {
                let (a, b) = (self.copy_subtree(a), self.copy_subtree(b));
                Node::Or(a, b)
            }
            Node::ForallSet(s, b) => Node::ForallSet(s, self.copy_subtree(b)),
            Node::ExistsSet(s, b) => Node::ExistsSet(s, self.copy_subtree(b)),
            Node::ForallObj(s, b) => Node::ForallObj(s, self.copy_subtree(b)),
            Node::ExistsObj(s, b) => Node::ExistsObj(s, self.copy_subtree(b)),
        };
        self.push(n)
    }

    fn quant(&mut self) -> Result<NodeId, LogicError> {
        let universal = *self.peek() == Tok::All;
        self.pos += 1;
        let (name, _, _) = self.ident()?;
        if self.arity_of(&name).is_some() {
            return Err(LogicError::Rebinding(name));
        }
        self.expect(Tok::Dot, "`.` after quantified symbol")?;
        let set = is_set_name(&name);
        self.bound.push((name.clone(), usize::from(set)));
        let body = self.formula()?;
        self.bound.pop();
        Ok(self.push(match (universal, set) {
            (true, true) => Node::ForallSet(name, body),
            (false, true) => Node::ExistsSet(name, body),
            (true, false) => Node::ForallObj(name, body),
            (false, false) => Node::ExistsObj(name, body),
        }))
    }

    fn disj(&mut self) -> Result<NodeId, LogicError> {
        let mut left = self.conj()?;
        while *self.peek() == Tok::Bar {
            self.pos += 1;
            let right = self.conj()?;
            left = self.push(Node::Or(left, right));
        }
        Ok(left)
    }

    fn conj(&mut self) -> Result<NodeId, LogicError> {
        let mut left = self.unit()?;
        while *self.peek() == Tok::Amp {
            self.pos += 1;
            let right = self.unit()?;
            left = self.push(Node::And(left, right));
        }
        Ok(left)
    }

    fn unit(&mut self) -> Result<NodeId, LogicError> {
        match self.peek() {
            Tok::Tilde => {
                self.pos += 1;
                let inner = self.unit()?;
                Ok(self.push(Node::Not(inner)))
            }
            Tok::LParen => {
                self.pos += 1;
                let f = self.formula()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(f)
            }
            Tok::All | Tok::Ex => self.quant(),
            Tok::Ident(_) => self.atom(),
            _ => self.err("expected atom, `(`, `~` or quantifier"),
        }
    }

    fn object(&mut self) -> Result<String, LogicError> {
        let (name, line, col) = self.ident()?;
        match self.arity_of(&name) {
            Some(0) => Ok(name),
            Some(a) => Err(LogicError::Arity {
                name,
                expected: a,
                got: 0,
            }),
            None => Err(LogicError::Undeclared { name, line, col }),
        }
    }

    fn atom(&mut self) -> Result<NodeId, LogicError> {
        let (first, line, col) = self.ident()?;
        match self.peek() {
            Tok::In => {
                self.pos += 1;
                let (set, sl, sc) = self.ident()?;
                let arg = match self.arity_of(&first) {
                    Some(0) => first,
                    Some(a) => {
                        return Err(LogicError::Arity {
                            name: first,
                            expected: a,
                            got: 0,
                        })
                    }
                    None => {
                        return Err(LogicError::Undeclared {
                            name: first,
                            line,
                            col,
                        })
                    }
                };
                match self.arity_of(&set) {
                    Some(1) => {}
                    Some(a) => {
                        return Err(LogicError::Arity {
                            name: set,
                            expected: a,
                            got: 1,
                        })
                    }
                    None => {
                        return Err(LogicError::Undeclared {
                            name: set,
                            line: sl,
                            col: sc,
                        })
                    }
                }
                Ok(self.push(Node::Atom {
                    rel: set,
                    args: vec![arg],
                }))
            }
            Tok::LParen => {
                self.pos += 1;
                let mut args = vec![self.object()?];
                while *self.peek() == Tok::Comma {
                    self.pos += 1;
                    args.push(self.object()?);
                }
                self.expect(Tok::RParen, "`)` closing the argument list")?;
                match self.arity_of(&first) {
                    Some(a) if a == args.len() && a > 0 => {}
                    Some(a) => {
                        return Err(LogicError::Arity {
                            name: first,
                            expected: a,
                            got: args.len(),
                        })
                    }
                    None => {
                        return Err(LogicError::Undeclared {
                            name: first,
                            line,
                            col,
                        })
                    }
                }
                Ok(self.push(Node::Atom { rel: first, args }))
            }
            _ => self.err("expected `in` or `(` after identifier"),
        }
    }
}

/// Parses formula text against a base vocabulary. The result may contain
/// general negation; see [`to_nnf`].
///
/// Besides the core grammar, a quantifier may appear wherever a unit is
/// expected (its body extends as far right as possible), `~` may be repeated,
/// and `a -> b`, `a <-> b` are accepted with right associativity.
pub fn parse_formula(text: &str, base: &Vocabulary) -> Result<Formula, LogicError> {
    let lexer = lex(text)?;
    let mut p = Parser {
        toks: lexer.toks,
        pos: 0,
        base,
        bound: Vec::new(),
        nodes: Vec::new(),
    };
    let root = p.formula()?;
    if *p.peek() != Tok::End {
        return p.err("unexpected trailing input");
    }
    Ok(Formula {
        base: base.clone(),
        nodes: p.nodes,
        root,
    })
}
