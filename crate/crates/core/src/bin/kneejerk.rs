use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use kneejerk::cli::{parse_problem, run_optimize, run_oracle, run_verify, Problem, VerifyOptions};
use kneejerk::mapping::TraceStatus;
use kneejerk::Graph;

const EXIT_VERIFY_FAILED: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_DEGENERATE: u8 = 3;

#[derive(Parser)]
#[command(name = "kneejerk", version, about = "Monotone multiplicative ascent on products of simplices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Iterate the update and write the trace and terminal summary.
    Optimize {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        max_iters: Option<usize>,
        #[arg(long)]
        tol_div: Option<f64>,
        #[arg(long)]
        tol_w: Option<f64>,
    },
    /// Run the certificate sweep at seeded random points.
    Verify {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        /// Competitors per base point for the argmax check.
        #[arg(long, default_value_t = 100)]
        competitors: usize,
        /// Also probe log-concavity.
        #[arg(long)]
        concavity: bool,
        #[arg(long, hide = true)]
        inject_negative: bool,
    },
    /// Emit the discriminant polynomial of a graph.
    Discriminant {
        /// Graph file `{"vertices": n, "edges": [[u, v], ...]}`.
        #[arg(long, conflicts_with = "problem")]
        graph: Option<PathBuf>,
        /// Problem file with a "graph" source.
        #[arg(long)]
        problem: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Brute-force grid search, compared with the iteration's terminal value.
    Oracle {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        resolution: usize,
    },
}

fn read(path: &Path) -> Result<String, String> {
    fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn load(path: &Path) -> Result<Problem, String> {
    parse_problem(&read(path)?).map_err(|e| format!("{}: {e}", path.display()))
}

fn emit(out: Option<&Path>, name: &str, contents: &str) -> Result<(), String> {
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
        let path = dir.join(name);
        fs::write(&path, contents).map_err(|e| format!("{}: {e}", path.display()))?;
    }
    Ok(())
}

fn pretty<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

fn run(cli: Cli) -> Result<u8, String> {
    match cli.command {
        Command::Optimize {
            problem,
            out,
            max_iters,
            tol_div,
            tol_w,
        } => {
            let mut p = load(&problem)?;
            if let Some(v) = max_iters {
                p.config.max_iters = v;
            }
            if let Some(v) = tol_div {
                p.config.tol_div = v;
            }
            if let Some(v) = tol_w {
                p.config.tol_w = v;
            }
            let outcome = run_optimize(&p).map_err(|e| e.to_string())?;
            let summary = pretty(&outcome.summary);
            emit(out.as_deref(), "trace.csv", &outcome.trace.to_csv())?;
            emit(out.as_deref(), "summary.json", &summary)?;
            print!("{summary}");
            match outcome.summary.status {
                TraceStatus::Degenerate => {
                    eprintln!("degenerate: a block has zero gradient mass; the update cannot move it");
                    Ok(EXIT_DEGENERATE)
                }
                TraceStatus::MaxIterations => {
                    eprintln!("warning: iteration cap reached before the stopping rules fired");
                    Ok(0)
                }
                TraceStatus::Converged => Ok(0),
            }
        }
        Command::Verify {
            problem,
            out,
            seed,
            samples,
            competitors,
            concavity,
            inject_negative,
        } => {
            let p = load(&problem)?;
            let opts = VerifyOptions {
                samples,
                seed,
                competitors,
                concavity,
                inject_negative,
            };
            let report = run_verify(&p, &opts).map_err(|e| e.to_string())?;
            let text = report.to_json() + "\n";
            emit(out.as_deref(), "verify.json", &text)?;
            print!("{text}");
            if report.pass {
                Ok(0)
            } else {
                eprintln!("verification FAILED");
                Ok(EXIT_VERIFY_FAILED)
            }
        }
        Command::Discriminant { graph, problem, out } => {
            let g: Graph = match (graph, problem) {
                (Some(path), _) => serde_json::from_str(&read(&path)?).map_err(|e| format!("{}: {e}", path.display()))?,
                (None, Some(path)) => load(&path)?
                    .file
                    .graph
                    .ok_or_else(|| format!("{}: problem has no \"graph\" source", path.display()))?,
                (None, None) => return Err("one of --graph or --problem is required".into()),
            };
            let poly = g.discriminant_polynomial().map_err(|e| e.to_string())?;
            let text = pretty(&poly);
            emit(out.as_deref(), "discriminant.json", &text)?;
            print!("{text}");
            Ok(0)
        }
        Command::Oracle {
            problem,
            out,
            resolution,
        } => {
            let p = load(&problem)?;
            let result = run_oracle(&p, resolution).map_err(|e| e.to_string())?;
            let text = pretty(&result);
            emit(out.as_deref(), "oracle.json", &text)?;
            print!("{text}");
            Ok(if result.within_bound { 0 } else { EXIT_VERIFY_FAILED })
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_INPUT)
        }
    }
}
