//! Built-in problems and the `.mso` problem file format.
//!
//! ```text
//! # comments run to the end of the line
//! problem vc;                 # optional name
//! vocabulary adj/2;           # relation symbols, comma separated
//! free C weight 1;            # one line per free set symbol
//! objective min;              # or max
//! formula all x. all y. (~adj(x,y) | x in C | y in C);
//! ```

use thiserror::Error;

use crate::logic::{parse_formula, LogicError, Symbol, Vocabulary};
use crate::solver::{Problem, SolveError, TableBound};

#[derive(Clone, Debug, Error)]
pub enum ProblemError {
    #[error("unknown problem `{0}` (expected vc, ds or 3col)")]
    Unknown(String),
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("formula: {0}")]
    Formula(#[from] LogicError),
    #[error(transparent)]
    Invalid(#[from] SolveError),
}

const VC: &str = "problem vc;
vocabulary adj/2;
free C weight 1;
objective min;
formula all x. all y. (~adj(x,y) | x in C | y in C);
";

const DS: &str = "problem ds;
vocabulary adj/2;
free D weight 1;
objective min;
formula all x. (x in D | (ex y. (y in D & adj(x,y))));
";

const THREE_COL: &str = "problem 3col;
vocabulary adj/2;
objective min;
formula ex R1. ex R2. ex R3. (
  (all x. ((x in R1 | x in R2 | x in R3)
    & (~x in R1 | ~x in R2) & (~x in R1 | ~x in R3) & (~x in R2 | ~x in R3)))
  & (all x. all y. (~adj(x,y)
    | ((~x in R1 | ~y in R1) & (~x in R2 | ~y in R2) & (~x in R3 | ~y in R3)))));
";

pub const BUILTIN_NAMES: [&str; 3] = ["vc", "ds", "3col"];

pub fn builtin(name: &str) -> Result<Problem, ProblemError> {
    let text = match name {
        "vc" => VC,
        "ds" => DS,
        "3col" => THREE_COL,
        _ => return Err(ProblemError::Unknown(name.to_string())),
    };
    load_problem(text)
}

/// Table-size bound claimed for a built-in problem.
pub fn table_bound(name: &str) -> Option<TableBound> {
    match name {
        "vc" => Some(TableBound::OnePerCell),
        "ds" => Some(TableBound::PowerOfUncovered),
        "3col" => Some(TableBound::OneEntry),
        _ => None,
    }
}

struct Statement<'t> {
    line: usize,
    /// Byte offset of `rest` in the comment-stripped text.
    offset: usize,
    keyword: &'t str,
    rest: &'t str,
}

fn strip_comments(text: &str) -> String {
    text.lines()
        .map(|l| match l.find('#') {
            Some(i) => format!("{}{}", &l[..i], " ".repeat(l.len() - i)),
            None => l.to_string(),
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn statements(text: &str) -> Result<Vec<Statement<'_>>, ProblemError> {
    let mut out = Vec::new();
    let mut start = 0;
    for (i, ch) in text.char_indices() {
        if ch != ';' {
            continue;
        }
        let chunk = &text[start..i];
        let lead = chunk.len() - chunk.trim_start().len();
        let body = chunk.trim();
        let line = text[..start + lead].matches('\n').count() + 1;
        if body.is_empty() {
            return Err(ProblemError::Syntax {
                line,
                msg: "empty statement".into(),
            });
        }
        let kw_len = body.find(char::is_whitespace).unwrap_or(body.len());
        out.push(Statement {
            line,
            offset: start + lead + kw_len,
            keyword: &body[..kw_len],
            rest: &body[kw_len..],
        });
        start = i + 1;
    }
    if !text[start..].trim().is_empty() {
        let lead = text[start..].len() - text[start..].trim_start().len();
        let line = text[..start + lead].matches('\n').count() + 1;
        return Err(ProblemError::Syntax {
            line,
            msg: "missing `;`".into(),
        });
    }
    Ok(out)
}

/// Parses a problem file. Formula errors carry line and column positions
/// within the whole file.
pub fn load_problem(text: &str) -> Result<Problem, ProblemError> {
    let clean = strip_comments(text);
    let mut name = None;
    let mut base = None;
    let mut free: Vec<(String, i64)> = Vec::new();
    let mut maximize = None;
    let mut formula_at = None;
    for st in statements(&clean)? {
        let err = |msg: String| ProblemError::Syntax { line: st.line, msg };
        let words: Vec<&str> = st.rest.split_whitespace().collect();
        match st.keyword {
            "problem" => {
                if name.is_some() {
                    return Err(err("duplicate `problem`".into()));
                }
                match words[..] {
                    [n] => name = Some(n.to_string()),
                    _ => return Err(err("expected `problem <name>`".into())),
                }
            }
            "vocabulary" => {
                if base.is_some() {
                    return Err(err("duplicate `vocabulary`".into()));
                }
                let mut v = Vocabulary::new();
                for decl in st.rest.split(',').map(str::trim).filter(|d| !d.is_empty()) {
                    let (sym, arity) = decl
                        .split_once('/')
                        .ok_or_else(|| err(format!("expected `name/arity`, found `{decl}`")))?;
                    let arity: usize = arity
                        .trim()
                        .parse()
                        .map_err(|_| err(format!("bad arity in `{decl}`")))?;
                    v.add(Symbol::new(sym.trim(), arity))
                        .map_err(|e| err(e.to_string()))?;
                }
                base = Some(v);
            }
            "free" => match words[..] {
                [sym, "weight", w] => {
                    let w: i64 = w.parse().map_err(|_| err(format!("bad weight `{w}`")))?;
                    if free.iter().any(|(s, _)| s == sym) {
                        return Err(err(format!("free symbol `{sym}` declared twice")));
                    }
                    free.push((sym.to_string(), w));
                }
                _ => return Err(err("expected `free <name> weight <integer>`".into())),
            },
            "objective" => {
                if maximize.is_some() {
                    return Err(err("duplicate `objective`".into()));
                }
                maximize = Some(match words[..] {
                    ["min"] => false,
                    ["max"] => true,
                    _ => return Err(err("expected `objective min` or `objective max`".into())),
                });
            }
            "formula" => {
                if formula_at.is_some() {
                    return Err(err("duplicate `formula`".into()));
                }
                formula_at = Some((st.offset, st.offset + st.rest.len()));
            }
            other => return Err(err(format!("unknown statement `{other}`"))),
        }
    }
    let last_line = clean.matches('\n').count() + 1;
    let base = base.ok_or(ProblemError::Syntax {
        line: last_line,
        msg: "missing `vocabulary`".into(),
    })?;
    let (from, to) = formula_at.ok_or(ProblemError::Syntax {
        line: last_line,
        msg: "missing `formula`".into(),
    })?;
    let mut full = base.clone();
    for (sym, _) in &free {
        full.add(Symbol::new(sym.clone(), 1))?;
    }
    // Blank everything but the formula so parser positions match the file.
    let masked: String = clean
        .char_indices()
        .map(|(i, c)| {
            if (from..to).contains(&i) || c == '\n' {
                c
            } else {
                ' '
            }
        })
        .collect();
    let f = parse_formula(&masked, &full)?;
    Ok(Problem::new(
        name.unwrap_or_else(|| "custom".to_string()),
        base,
        free,
        &f,
        maximize.unwrap_or(false),
    )?)
}

/// Renders a problem in the `.mso` format accepted by [`load_problem`].
pub fn to_mso_string(p: &Problem) -> String {
    let mut out = format!("problem {};\n", p.name);
    let decls: Vec<String> = p
        .base
        .iter()
        .map(|s| format!("{}/{}", s.name, s.arity))
        .collect();
    out += &format!("vocabulary {};\n", decls.join(", "));
    for (s, w) in &p.free {
        out += &format!("free {s} weight {w};\n");
    }
    out += &format!("objective {};\n", if p.maximize { "max" } else { "min" });
    out += &format!("formula {};\n", p.formula);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::{free_symbols, quantifier_rank};

    #[test]
    fn builtins() {
        let vc = builtin("vc").unwrap();
        assert_eq!(quantifier_rank(&vc.formula), 2);
        assert_eq!(vc.free, vec![("C".to_string(), 1)]);
        let col = builtin("3col").unwrap();
        assert!(col.free.is_empty());
        assert!(free_symbols(&col.formula).is_empty());
        assert!(matches!(builtin("tsp"), Err(ProblemError::Unknown(_))));
    }

    #[test]
    fn round_trip() {
        for n in BUILTIN_NAMES {
            let p = builtin(n).unwrap();
            assert_eq!(load_problem(&to_mso_string(&p)).unwrap(), p);
        }
    }

    #[test]
    fn maximize_and_errors() {
        let p = load_problem(
            "vocabulary adj/2;\nfree I weight 1;\nobjective max;\n\
             formula all x. all y. (~adj(x,y) | ~x in I | ~y in I);",
        )
        .unwrap();
        assert!(p.maximize);
        assert_eq!(p.weights(), vec![-1]);

        let e =
            load_problem("vocabulary adj/2;\nobjective min;\nformula all x. x in C;").unwrap_err();
        assert!(e.to_string().contains("line 3"), "{e}");
        let e = load_problem("vocabulary adj/2;\nbogus;\nformula all x. adj(x,x);").unwrap_err();
        assert!(e.to_string().contains("line 2"), "{e}");
        assert!(load_problem("vocabulary adj/2; formula all x. adj(x,x)").is_err());
    }
}
