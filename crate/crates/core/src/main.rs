use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use p3bo::harness::config::{ExperimentConfig, ProblemConfig};
use p3bo::harness::generate::{gen_problem, Params};
use p3bo::harness::presets::{preset, PresetOptions};
use p3bo::harness::runner::run_experiment;
use p3bo::harness::summarize::{load_summaries, summarize, write_summary};
use p3bo::harness::fmt_float;
use p3bo::metrics::{enumerate_optima, OPTIMA_EDIT_DISTANCE, OPTIMA_REWARD};
use p3bo::oracles::format::{load_problem, save_problem, write_problem};
use p3bo::oracles::{Oracle, OracleKind};
use p3bo::solvers::SolverClass;
use p3bo::{Error, Result};

#[derive(Parser)]
#[command(name = "p3bo", version, about = "Population-based batched black-box sequence optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (method, problem, seed) triple of a config.
    Run {
        config: PathBuf,
        /// Output directory; overrides `output_dir` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a problem instance file.
    GenProblem {
        /// ising, hmm, random_mlp, random_rnn or lookup.
        kind: String,
        /// key=value parameters, e.g. seed=3 length=12.
        params: Vec<String>,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rank methods and aggregate curves over finished result directories.
    Summarize {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        #[arg(long, default_value = "summary")]
        out: PathBuf,
    },
    /// Write the configs of an ablation preset.
    Presets {
        /// leave-one-out, sharing, bad-init, temperature, population-size or batch-size.
        name: String,
        /// Problem file; defaults to a generated Ising instance.
        #[arg(long)]
        problem: Option<PathBuf>,
        /// Class of the bad-init population.
        #[arg(long, default_value = "smw")]
        class: String,
        #[arg(long, default_value_t = 10)]
        replicates: u64,
        #[arg(long, default_value = "presets")]
        out: PathBuf,
    },
    /// List the optima clusters of a lookup problem.
    EnumerateOptima {
        problem: PathBuf,
        #[arg(long, default_value_t = OPTIMA_REWARD)]
        threshold: f64,
        #[arg(long, default_value_t = OPTIMA_EDIT_DISTANCE)]
        distance: f64,
    },
    /// Score sequences with a problem's oracle.
    Evaluate { problem: PathBuf, sequences: Vec<String> },
}

fn config_base(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn absolute(p: &Path) -> Result<PathBuf> {
    std::path::absolute(p).map_err(|e| Error::Io {
        path: p.to_path_buf(),
        source: e,
    })
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let outcome = run_experiment(&cfg, &config_base(&config), out.as_deref())?;
            println!(
                "{} runs written to {}",
                outcome.summaries.len(),
                outcome.output_dir.display()
            );
            if !outcome.errors.is_empty() {
                for e in &outcome.errors {
                    eprintln!("{}/{}/{}: {}", e.method, e.instance, e.seed, e.error);
                }
                return Err(Error::InvalidArgument(format!("{} runs failed", outcome.errors.len())));
            }
        }
        Command::GenProblem { kind, params, out } => {
            let kind: OracleKind = kind.parse()?;
            let g = gen_problem(kind, Params::parse(&params)?)?;
            let comments = vec![format!("generated: {}", g.description)];
            match out {
                Some(path) => save_problem(&path, &g.instance, &comments)?,
                None => print!("{}", write_problem(&g.instance, &comments)),
            }
        }
        Command::Summarize { dirs, out } => {
            let runs = load_summaries(&dirs)?;
            write_summary(&summarize(&runs)?, &out)?;
            println!("ranks.csv and curves.csv written to {}", out.display());
        }
        Command::Presets {
            name,
            problem,
            class,
            replicates,
            out,
        } => {
            let mut opts = PresetOptions {
                weak_class: class.parse::<SolverClass>()?,
                replicates,
                ..Default::default()
            };
            if let Some(p) = problem {
                load_problem(&p)?;
                opts.problem = ProblemConfig {
                    file: Some(absolute(&p)?),
                    ..Default::default()
                };
            }
            let variants = preset(&name, &opts)?;
            std::fs::create_dir_all(&out).map_err(|e| Error::Io {
                path: out.clone(),
                source: e,
            })?;
            for v in variants {
                let path = out.join(format!("{name}-{}.toml", v.name));
                std::fs::write(&path, v.config.to_toml()?).map_err(|e| Error::Io { path: path.clone(), source: e })?;
                println!("{}", path.display());
            }
        }
        Command::EnumerateOptima {
            problem,
            threshold,
            distance,
        } => {
            let inst = load_problem(&problem)?;
            let Oracle::Lookup(table) = &inst.oracle else {
                return Err(Error::InvalidArgument(format!("{} is not a lookup problem", problem.display())));
            };
            let optima = enumerate_optima(table, threshold, distance);
            println!("# {} clusters, {} optima with reversals", optima.clusters, optima.sequences.len());
            println!("sequence,value");
            let values = inst.evaluate(&optima.sequences)?;
            for (s, v) in optima.sequences.iter().zip(values) {
                println!("{},{}", inst.vocabulary.render(s), fmt_float(v));
            }
        }
        Command::Evaluate { problem, sequences } => {
            let inst = load_problem(&problem)?;
            let parsed = sequences
                .iter()
                .map(|s| inst.vocabulary.parse(s))
                .collect::<Result<Vec<_>>>()?;
            let values = inst.evaluate(&parsed)?;
            println!("sequence,value");
            for (s, v) in sequences.iter().zip(values) {
                println!("{s},{}", fmt_float(v));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
