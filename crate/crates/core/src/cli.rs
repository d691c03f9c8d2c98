//! Command-line front end.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::game::GameError;
use crate::oracle::brute_force_linmso;
use crate::problems::{builtin, load_problem, table_bound, BUILTIN_NAMES};
use crate::solver::{solve_with, Problem, SolveError, SolveOptions};
use crate::structure::{parse_gr, Obj, Structure};
use crate::treedec::{
    min_fill_td, nicify, parse_td, validate_td, NiceTreeDecomposition, TreeDecomposition,
};

#[derive(Parser, Debug)]
#[command(
    name = "msogame",
    version,
    about = "Solve MSO-definable graph optimization problems on tree decompositions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve a problem by dynamic programming over a tree decomposition.
    Solve {
        #[arg(long)]
        graph: PathBuf,
        /// Decomposition in .td format; computed by min-fill when absent.
        #[arg(long)]
        td: Option<PathBuf>,
        /// Built-in name (vc, ds, 3col) or path to a .mso file.
        #[arg(long)]
        problem: String,
        #[arg(long)]
        stats: bool,
        /// Assert the claimed table-size bound of a built-in problem (exit 2 when exceeded).
        #[arg(long)]
        check_bounds: bool,
    },
    /// Solve a problem by exhaustive enumeration.
    Oracle {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        problem: String,
    },
    /// Check a decomposition against a graph.
    Validate {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        td: PathBuf,
    },
    /// Generate instances, solve them and print one CSV row each.
    Bench {
        #[arg(long, value_enum)]
        suite: Suite,
        #[arg(long, default_value = "vc")]
        problem: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of instances; instance i uses seed + i.
        #[arg(long)]
        count: Option<u64>,
        #[arg(long, default_value_t = 2)]
        rows: usize,
        #[arg(long, default_value_t = 10)]
        cols: usize,
        /// Probability of keeping each grid edge.
        #[arg(long, default_value_t = 1.0)]
        keep: f64,
        /// Vertex count for random graphs.
        #[arg(long, default_value_t = 200)]
        n: usize,
        /// Edge probability for random graphs.
        #[arg(long, default_value_t = 0.01)]
        p: f64,
        /// Fill the time and memory columns (output is then not reproducible).
        #[arg(long)]
        timing: bool,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Suite {
    Grid,
    Random,
}

struct Failure {
    code: i32,
    msg: String,
}

fn input(msg: impl std::fmt::Display) -> Failure {
    Failure {
        code: 1,
        msg: msg.to_string(),
    }
}

fn solve_failure(e: SolveError) -> Failure {
    let code = match &e {
        SolveError::Invariant(_) => 2,
        SolveError::Game(g) => match g {
            GameError::NotNnf
            | GameError::TooManySymbols(_)
            | GameError::Unresolved(_)
            | GameError::TooLarge(_) => 1,
            _ => 2,
        },
        _ => 1,
    };
    Failure {
        code,
        msg: e.to_string(),
    }
}

/// Runs the CLI on `args` (program name first) and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                out.write_all(text.as_bytes())
            } else {
                err.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let result = match cli.command {
        Command::Solve {
            graph,
            td,
            problem,
            stats,
            check_bounds,
        } => cmd_solve(&graph, td.as_deref(), &problem, stats, check_bounds, out),
        Command::Oracle { graph, problem } => cmd_oracle(&graph, &problem, out),
        Command::Validate { graph, td } => cmd_validate(&graph, &td, out),
        Command::Bench {
            suite,
            problem,
            seed,
            count,
            rows,
            cols,
            keep,
            n,
            p,
            timing,
        } => {
            let params = BenchParams {
                suite,
                seed,
                count: count.unwrap_or(match suite {
                    Suite::Grid => 5,
                    Suite::Random => 3,
                }),
                rows,
                cols,
                keep,
                n,
                p,
                timing,
            };
            cmd_bench(&params, &problem, out)
        }
    };
    match result {
        Ok(()) => 0,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.msg);
            f.code
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| input(format!("{}: {e}", path.display())))
}

fn load_graph(path: &Path) -> Result<Structure, Failure> {
    parse_gr(&read(path)?).map_err(|e| input(format!("{}: {e}", path.display())))
}

fn resolve_problem(arg: &str) -> Result<Problem, Failure> {
    if BUILTIN_NAMES.contains(&arg) {
        return builtin(arg).map_err(input);
    }
    let path = Path::new(arg);
    if !path.exists() {
        return Err(input(format!(
            "`{arg}` is neither a built-in problem (vc, ds, 3col) nor a file"
        )));
    }
    load_problem(&read(path)?).map_err(|e| input(format!("{arg}: {e}")))
}

/// Nice decomposition from a plain one, or the placeholder used for the
/// empty structure, which the solver handles without a decomposition.
fn nice(td: &TreeDecomposition, a: &Structure) -> Result<NiceTreeDecomposition, Failure> {
    if a.is_empty() {
        return Ok(NiceTreeDecomposition {
            nodes: Vec::new(),
            root: 0,
        });
    }
    validate_td(td, a).map_err(|r| input(format!("decomposition does not fit the graph:\n{r}")))?;
    nicify(td).map_err(input)
}

fn cmd_solve(
    graph: &Path,
    td: Option<&Path>,
    problem: &str,
    stats: bool,
    check_bounds: bool,
    out: &mut dyn Write,
) -> Result<(), Failure> {
    let a = load_graph(graph)?;
    let prob = resolve_problem(problem)?;
    let td = match td {
        Some(p) => parse_td(&read(p)?).map_err(|e| input(format!("{}: {e}", p.display())))?,
        None => min_fill_td(&a),
    };
    let ntd = nice(&td, &a)?;
    let opts = SolveOptions {
        bound: if check_bounds {
            table_bound(&prob.name)
        } else {
            None
        },
        game_sizes: stats,
        compact_threshold: None,
    };
    let sol = solve_with(&a, &ntd, &prob, &opts, None).map_err(solve_failure)?;
    let _ = writeln!(out, "OPT = {}", sol.value);
    if stats {
        let _ = writeln!(out, "width = {}", td.width());
        let _ = writeln!(out, "{}", sol.stats);
    }
    Ok(())
}

fn cmd_oracle(graph: &Path, problem: &str, out: &mut dyn Write) -> Result<(), Failure> {
    let a = load_graph(graph)?;
    let prob = resolve_problem(problem)?;
    let v = brute_force_linmso(&a, &prob).map_err(input)?;
    let _ = writeln!(out, "OPT = {v}");
    Ok(())
}

fn cmd_validate(graph: &Path, td: &Path, out: &mut dyn Write) -> Result<(), Failure> {
    let a = load_graph(graph)?;
    let td = parse_td(&read(td)?).map_err(|e| input(format!("{}: {e}", td.display())))?;
    match validate_td(&td, &a) {
        Ok(()) => {
            let _ = writeln!(out, "ok");
            Ok(())
        }
        Err(report) => {
            let _ = writeln!(out, "{report}");
            Err(input("decomposition is not valid for the graph"))
        }
    }
}

struct BenchParams {
    suite: Suite,
    seed: u64,
    count: u64,
    rows: usize,
    cols: usize,
    keep: f64,
    n: usize,
    p: f64,
    timing: bool,
}

/// Grid subgraph on `rows * cols` vertices numbered column by column from 1;
/// each edge is kept with probability `keep`.
pub fn grid_graph(rows: usize, cols: usize, keep: f64, rng: &mut impl Rng) -> Structure {
    let id = |r: usize, c: usize| (c * rows + r + 1) as Obj;
    let mut edges = Vec::new();
    for c in 0..cols {
        for r in 0..rows {
            if r + 1 < rows && rng.gen_bool(keep) {
                edges.push((id(r, c), id(r + 1, c)));
            }
            if c + 1 < cols && rng.gen_bool(keep) {
                edges.push((id(r, c), id(r, c + 1)));
            }
        }
    }
    Structure::graph(rows * cols, &edges).expect("grid vertices exist")
}

/// The path decomposition with bags `{t, ..., t + rows}` for the column-major
/// numbering of [`grid_graph`]; its width is `rows` (or less for one column).
pub fn grid_path_decomposition(rows: usize, cols: usize) -> TreeDecomposition {
    let n = rows * cols;
    let bags = if cols <= 1 {
        vec![(1..=n as Obj).collect()]
    } else {
        (1..=(n - rows) as Obj)
            .map(|t| (t..=t + rows as Obj).collect())
            .collect()
    };
    TreeDecomposition::path(bags, n)
}

/// Erdős–Rényi graph on `1..=n` with edge probability `p`.
pub fn random_graph(n: usize, p: f64, rng: &mut impl Rng) -> Structure {
    let mut edges = Vec::new();
    for u in 1..=n as Obj {
        for v in u + 1..=n as Obj {
            if rng.gen_bool(p) {
                edges.push((u, v));
            }
        }
    }
    Structure::graph(n, &edges).expect("vertices exist")
}

/// Peak resident set size of this process in MB, where the platform reports it.
fn peak_rss_mb() -> Option<f64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: f64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb / 1024.0)
}

fn cmd_bench(bp: &BenchParams, problem: &str, out: &mut dyn Write) -> Result<(), Failure> {
    let prob = resolve_problem(problem)?;
    match bp.suite {
        Suite::Grid => {
            if bp.rows == 0 || bp.cols == 0 {
                return Err(input("grid needs at least one row and one column"));
            }
            if !(0.0..=1.0).contains(&bp.keep) {
                return Err(input("--keep must lie in [0, 1]"));
            }
        }
        Suite::Random => {
            if bp.n == 0 {
                return Err(input("--n must be positive"));
            }
            if !(0.0..=1.0).contains(&bp.p) {
                return Err(input("--p must lie in [0, 1]"));
            }
        }
    }
    let _ = writeln!(out, "name,generator,seed,n,m,width,opt,time_s,mem_mb");
    for i in 0..bp.count {
        let seed = bp.seed.wrapping_add(i);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (name, generator, a, td) = match bp.suite {
            Suite::Grid => (
                format!("grid-{}x{}-{i}", bp.rows, bp.cols),
                format!("grid:rows={}:cols={}:keep={}", bp.rows, bp.cols, bp.keep),
                grid_graph(bp.rows, bp.cols, bp.keep, &mut rng),
                grid_path_decomposition(bp.rows, bp.cols),
            ),
            Suite::Random => {
                let a = random_graph(bp.n, bp.p, &mut rng);
                let td = min_fill_td(&a);
                (
                    format!("random-{}-{i}", bp.n),
                    format!("gnp:n={}:p={}", bp.n, bp.p),
                    a,
                    td,
                )
            }
        };
        let start = Instant::now();
        let ntd = nice(&td, &a)?;
        let sol =
            solve_with(&a, &ntd, &prob, &SolveOptions::default(), None).map_err(solve_failure)?;
        let elapsed = start.elapsed().as_secs_f64();
        let (time, mem) = if bp.timing {
            (
                format!("{elapsed:.3}"),
                peak_rss_mb().map_or(String::new(), |m| format!("{m:.1}")),
            )
        } else {
            (String::new(), String::new())
        };
        let _ = writeln!(
            out,
            "{name},{generator},{seed},{},{},{},{},{time},{mem}",
            a.len(),
            a.edges().len(),
            td.width(),
            sol.value
        );
    }
    Ok(())
}
