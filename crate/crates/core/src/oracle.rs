//! Brute-force reference semantics, independent of the game machinery.

use std::collections::HashMap;

use thiserror::Error;

use crate::logic::{Formula, Node, NodeId};
use crate::solver::{Problem, Value};
use crate::structure::{Obj, Structure};

/// Largest number of candidate interpretations `brute_force_linmso` enumerates.
pub const MAX_CANDIDATES_LOG2: usize = 24;

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("instance too large for enumeration: {0}")]
    TooLarge(String),
    #[error("object symbol `{0}` is not interpreted")]
    Uninterpreted(String),
    #[error("symbol `{0}` is not interpreted by the structure")]
    Unresolved(String),
}

enum Op {
    Mem {
        neg: bool,
        set: usize,
        var: usize,
    },
    Rel {
        neg: bool,
        rel: usize,
        args: Vec<usize>,
    },
    Not(usize),
    And(usize, usize),
    Or(usize, usize),
    AllSet(usize, usize),
    ExSet(usize, usize),
    AllObj(usize, usize),
    ExObj(usize, usize),
}

enum Rel {
    Matrix(Vec<u64>),
    Tuples(std::collections::HashSet<Vec<usize>>),
}

/// A formula compiled against one universe.
struct Checker {
    ops: Vec<Op>,
    root: usize,
    n: usize,
    sets: Vec<u64>,
    vars: Vec<usize>,
    rels: Vec<Rel>,
}

impl Checker {
    /// `extra_sets` are unary symbols not in `a`, given values later through `sets[..extra_sets.len()]`.
    fn new(a: &Structure, f: &Formula, extra_sets: &[String]) -> Result<Checker, OracleError> {
        let n = a.len();
        if n > 64 {
            return Err(OracleError::TooLarge(format!("{n} objects, at most 64")));
        }
        let univ: Vec<Obj> = a.universe().iter().copied().collect();
        let idx = |o: &Obj| univ.binary_search(o).unwrap();
        let mut set_names: HashMap<String, usize> = HashMap::new();
        let mut rel_names: HashMap<String, usize> = HashMap::new();
        let mut var_names: HashMap<String, usize> = HashMap::new();
        let mut sets = Vec::new();
        let mut vars = Vec::new();
        let mut rels = Vec::new();
        for name in extra_sets {
            set_names.insert(name.clone(), sets.len());
            sets.push(0);
        }
        for (name, arity, tuples) in a.relations() {
            if set_names.contains_key(name) {
                continue;
            }
            if arity == 1 {
                set_names.insert(name.to_string(), sets.len());
                sets.push(tuples.iter().fold(0u64, |m, t| m | 1 << idx(&t[0])));
            } else if arity == 2 {
                let mut m = vec![0u64; n];
                for t in tuples {
                    m[idx(&t[0])] |= 1 << idx(&t[1]);
                }
                rel_names.insert(name.to_string(), rels.len());
                rels.push(Rel::Matrix(m));
            } else {
                rel_names.insert(name.to_string(), rels.len());
                rels.push(Rel::Tuples(
                    tuples.iter().map(|t| t.iter().map(idx).collect()).collect(),
                ));
            }
        }
        for (name, value) in a.nullaries() {
            if let Some(o) = value {
                var_names.insert(name.to_string(), vars.len());
                vars.push(idx(&o));
            }
        }
        let mut c = Checker {
            ops: Vec::new(),
            root: 0,
            n,
            sets,
            vars,
            rels,
        };
        let mut scope = Scope {
            sets: set_names,
            rels: rel_names,
            vars: var_names,
        };
        c.root = c.compile(f, f.root(), &mut scope, a)?;
        Ok(c)
    }

    fn compile(
        &mut self,
        f: &Formula,
        id: NodeId,
        sc: &mut Scope,
        a: &Structure,
    ) -> Result<usize, OracleError> {
        let op = match f.node(id) {
            Node::Atom { rel, args } | Node::NegAtom { rel, args } => {
                let neg = matches!(f.node(id), Node::NegAtom { .. });
                let vars = args
                    .iter()
                    .map(|v| {
                        sc.vars.get(v).copied().ok_or_else(|| {
                            if a.nullary(v).is_some() {
                                OracleError::Uninterpreted(v.clone())
                            } else {
                                OracleError::Unresolved(v.clone())
                            }
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                if args.len() == 1 {
                    let set = *sc
                        .sets
                        .get(rel)
                        .ok_or_else(|| OracleError::Unresolved(rel.clone()))?;
                    Op::Mem {
                        neg,
                        set,
                        var: vars[0],
                    }
                } else {
                    let r = *sc
                        .rels
                        .get(rel)
                        .ok_or_else(|| OracleError::Unresolved(rel.clone()))?;
                    Op::Rel {
                        neg,
                        rel: r,
                        args: vars,
                    }
                }
            }
            Node::Not(b) => Op::Not(self.compile(f, *b, sc, a)?),
            Node::And(l, r) => Op::And(self.compile(f, *l, sc, a)?, self.compile(f, *r, sc, a)?),
            Node::Or(l, r) => Op::Or(self.compile(f, *l, sc, a)?, self.compile(f, *r, sc, a)?),
            Node::ForallSet(s, b) | Node::ExistsSet(s, b) => {
                let slot = self.sets.len();
                self.sets.push(0);
                let old = sc.sets.insert(s.clone(), slot);
                let body = self.compile(f, *b, sc, a)?;
                restore(&mut sc.sets, s, old);
                if matches!(f.node(id), Node::ForallSet(..)) {
                    Op::AllSet(slot, body)
                } else {
                    Op::ExSet(slot, body)
                }
            }
            Node::ForallObj(v, b) | Node::ExistsObj(v, b) => {
                let slot = self.vars.len();
                self.vars.push(0);
                let old = sc.vars.insert(v.clone(), slot);
                let body = self.compile(f, *b, sc, a)?;
                restore(&mut sc.vars, v, old);
                if matches!(f.node(id), Node::ForallObj(..)) {
                    Op::AllObj(slot, body)
                } else {
                    Op::ExObj(slot, body)
                }
            }
        };
        self.ops.push(op);
        Ok(self.ops.len() - 1)
    }

    fn holds(&mut self, i: usize) -> bool {
        match &self.ops[i] {
            Op::Mem { neg, set, var } => (self.sets[*set] >> self.vars[*var] & 1 == 1) != *neg,
            Op::Rel { neg, rel, args } => {
                let t: Vec<usize> = args.iter().map(|&v| self.vars[v]).collect();
                let r = match &self.rels[*rel] {
                    Rel::Matrix(m) => m[t[0]] >> t[1] & 1 == 1,
                    Rel::Tuples(s) => s.contains(&t),
                };
                r != *neg
            }
            &Op::Not(b) => !self.holds(b),
            &Op::And(l, r) => self.holds(l) && self.holds(r),
            &Op::Or(l, r) => self.holds(l) || self.holds(r),
            &Op::AllSet(s, b) | &Op::ExSet(s, b) => {
                let want = matches!(self.ops[i], Op::ExSet(..));
                let old = self.sets[s];
                let mut result = !want;
                for m in 0..1u64 << self.n {
                    self.sets[s] = m;
                    if self.holds(b) == want {
                        result = want;
                        break;
                    }
                }
                self.sets[s] = old;
                result
            }
            &Op::AllObj(v, b) | &Op::ExObj(v, b) => {
                let want = matches!(self.ops[i], Op::ExObj(..));
                let old = self.vars[v];
                let mut result = !want;
                for u in 0..self.n {
                    self.vars[v] = u;
                    if self.holds(b) == want {
                        result = want;
                        break;
                    }
                }
                self.vars[v] = old;
                result
            }
        }
    }
}

struct Scope {
    sets: HashMap<String, usize>,
    rels: HashMap<String, usize>,
    vars: HashMap<String, usize>,
}

fn restore(m: &mut HashMap<String, usize>, k: &str, old: Option<usize>) {
    match old {
        Some(v) => m.insert(k.to_string(), v),
        None => m.remove(k),
    };
}

/// Tarski truth of `phi` in `a`. Set quantifiers range over all subsets,
/// which needs a universe of at most 63 objects when any are present.
pub fn brute_force_mc(a: &Structure, phi: &Formula) -> Result<bool, OracleError> {
    if a.len() > 63 {
        return Err(OracleError::TooLarge(format!(
            "{} objects, at most 63",
            a.len()
        )));
    }
    let mut c = Checker::new(a, phi, &[])?;
    let root = c.root;
    Ok(c.holds(root))
}

/// Exhaustive minimum (or maximum) of the weighted free-set sizes over all
/// interpretations satisfying the formula.
pub fn brute_force_linmso(a: &Structure, prob: &Problem) -> Result<Value, OracleError> {
    let n = a.len();
    let l = prob.free.len();
    if l * n > MAX_CANDIDATES_LOG2 {
        return Err(OracleError::TooLarge(format!(
            "2^{} candidate interpretations, at most 2^{MAX_CANDIDATES_LOG2}",
            l * n
        )));
    }
    let names: Vec<String> = prob.free.iter().map(|(s, _)| s.clone()).collect();
    let weights = prob.weights();
    let mut c = Checker::new(a, &prob.formula, &names)?;
    let root = c.root;
    let mut best = Value::Infinity;
    let full = if n == 0 { 0 } else { u64::MAX >> (64 - n) };
    for cand in 0..1u64 << (l * n) {
        let mut cost = 0i64;
        for (k, w) in weights.iter().enumerate() {
            let m = (cand >> (k * n)) & full;
            c.sets[k] = m;
            cost += w * m.count_ones() as i64;
        }
        if Value::Finite(cost) < best && c.holds(root) {
            best = Value::Finite(cost);
        }
    }
    Ok(prob.objective_value(best))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::{parse_formula, Symbol, Vocabulary};
    use crate::structure::Interp;

    #[test]
    fn empty_universe_quantifiers() {
        let mut v = Vocabulary::graph();
        v.add(Symbol::new("R", 1)).unwrap();
        let a = Structure::new(&v, []);
        assert!(brute_force_mc(&a, &parse_formula("all x. x in R", &v).unwrap()).unwrap());
        assert!(!brute_force_mc(&a, &parse_formula("ex x. x in R", &v).unwrap()).unwrap());
    }

    #[test]
    fn uninterpreted_constant_is_an_error() {
        let mut v = Vocabulary::graph();
        v.add(Symbol::new("c", 0)).unwrap();
        v.add(Symbol::new("R", 1)).unwrap();
        let a = Structure::new(&v, [1]);
        let f = parse_formula("c in R", &v).unwrap();
        assert_eq!(
            brute_force_mc(&a, &f),
            Err(OracleError::Uninterpreted("c".into()))
        );
        let a = a
            .expand(&Symbol::new("S", 1), Interp::Set([1].into()))
            .unwrap();
        let mut a2 = a.clone();
        a2.set_nullary("c", Some(1)).unwrap();
        assert!(!brute_force_mc(&a2, &f).unwrap());
    }
}
