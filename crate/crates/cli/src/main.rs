use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use qcqp_tight::harness::{brute_force_value, generate_instance, run_experiment, GeneratorConfig};
use qcqp_tight::io::{self, with_schema};
use qcqp_tight::sdp::{purify, solve_sdp, DEFAULT_EPS1};
use qcqp_tight::slemma::{
    s_lemma_four_complex, s_lemma_three, yuan_lemma_four_complex, yuan_lemma_three, Tolerances,
};
use qcqp_tight::tightness::{recover_optimum, DEFAULT_EPS2};
use qcqp_tight::Field;
use serde_json::{json, Value};

#[derive(Parser)]
#[command(
    name = "qcqp-tight",
    version,
    about = "SDP relaxation tightness test and rank-one recovery for small QCQPs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FieldArg {
    Real,
    Complex,
}

impl From<FieldArg> for Field {
    fn from(f: FieldArg) -> Self {
        match f {
            FieldArg::Real => Field::Real,
            FieldArg::Complex => Field::Complex,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum LemmaKind {
    /// S-lemma with two real constraint forms: matrices A0, A1, A2 and x0.
    Three,
    /// Yuan-type lemma for three real forms.
    Yuan3,
    /// S-lemma with three complex constraint forms: matrices A0..A3 and x0.
    Four,
    /// Yuan-type lemma for four complex forms.
    Yuan4,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the SDP relaxation and print the primal-dual pair.
    Solve {
        instance: PathBuf,
        #[arg(long, default_value_t = DEFAULT_EPS1)]
        eps1: f64,
    },
    /// Run the tightness test and recovery. Exit code 0 means recovered, 2 means gap or infeasible.
    Test {
        instance: PathBuf,
        #[arg(long, default_value_t = DEFAULT_EPS1)]
        eps1: f64,
        #[arg(long, default_value_t = DEFAULT_EPS2)]
        eps2: f64,
    },
    /// Certificate procedures on a matrices file.
    Slemma {
        #[arg(value_enum)]
        kind: LemmaKind,
        matrices: PathBuf,
        /// Strictly feasible point as a JSON array, overriding the file's `x0`.
        #[arg(long)]
        x0: Option<String>,
        #[arg(long, default_value_t = DEFAULT_EPS1)]
        eps1: f64,
        #[arg(long, default_value_t = DEFAULT_EPS2)]
        eps2: f64,
    },
    /// Write random instances to a directory.
    Generate {
        #[arg(long, value_enum)]
        field: FieldArg,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        count: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Randomized sweep over dimensions.
    Experiment {
        #[arg(long, value_enum)]
        field: FieldArg,
        /// Dimensions as `a..b` (inclusive), a comma list or a single value.
        #[arg(long, default_value = "2..10")]
        n: String,
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_EPS1)]
        eps1: f64,
        #[arg(long, default_value_t = DEFAULT_EPS2)]
        eps2: f64,
        /// Markdown table destination.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Grid search over the unit directions of an n = 2 instance.
    Oracle {
        instance: PathBuf,
        #[arg(long, default_value_t = 200)]
        resolution: usize,
    },
}

fn parse_dims(s: &str) -> Result<Vec<usize>> {
    let dims: Vec<usize> = if let Some((a, b)) = s.split_once("..") {
        let a: usize = a.trim().parse().context("range start")?;
        let b: usize = b.trim().parse().context("range end")?;
        (a..=b).collect()
    } else {
        s.split(',')
            .map(|p| p.trim().parse::<usize>().context("dimension"))
            .collect::<Result<_>>()?
    };
    if dims.is_empty() {
        bail!("empty dimension list {s:?}");
    }
    Ok(dims)
}

fn print(v: &Value) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{}", serde_json::to_string_pretty(v)?) {
        // A closed downstream pipe is not an error for a filter-style tool.
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Solve { instance, eps1 } => {
            let inst = io::read_instance(&instance)?;
            let pair = solve_sdp(&inst, eps1)?;
            print(&with_schema("sdp_pair", io::pair_to_json(&pair)))?;
        }
        Command::Test {
            instance,
            eps1,
            eps2,
        } => {
            let inst = io::read_instance(&instance)?;
            inst.validate_for_tightness()?;
            let pair = purify(&solve_sdp(&inst, eps1)?, eps2)?;
            let verdict = recover_optimum(&inst, &pair, eps2)?;
            let mut body = io::verdict_to_json(inst.field, &verdict);
            body["primal_value"] = json!(pair.primal_value);
            body["mu"] = json!(pair.mu);
            print(&with_schema("tightness_verdict", body))?;
            if !verdict.is_recovered() {
                return Ok(ExitCode::from(2));
            }
        }
        Command::Slemma {
            kind,
            matrices,
            x0,
            eps1,
            eps2,
        } => {
            let text = std::fs::read_to_string(&matrices)
                .with_context(|| format!("reading {}", matrices.display()))?;
            let (field, mats, file_x0) = io::matrices_from_json(&serde_json::from_str(&text)?)?;
            let x0 = match x0 {
                Some(s) => Some(io::vector_from_json(field, &serde_json::from_str(&s)?)?),
                None => file_x0,
            };
            let tol = Tolerances { eps1, eps2 };
            let want = match kind {
                LemmaKind::Three | LemmaKind::Yuan3 => 3,
                LemmaKind::Four | LemmaKind::Yuan4 => 4,
            };
            if mats.len() != want {
                bail!("{want} matrices expected, {} given", mats.len());
            }
            let need_x0 = || {
                x0.as_ref()
                    .context("x0 is required for the S-lemma variants")
            };
            let result = match kind {
                LemmaKind::Three => s_lemma_three(&mats[0], &mats[1], &mats[2], need_x0()?, tol)?,
                LemmaKind::Four => {
                    s_lemma_four_complex(&mats[0], &mats[1], &mats[2], &mats[3], need_x0()?, tol)?
                }
                LemmaKind::Yuan3 => yuan_lemma_three(&mats[0], &mats[1], &mats[2], tol)?,
                LemmaKind::Yuan4 => {
                    yuan_lemma_four_complex(&mats[0], &mats[1], &mats[2], &mats[3], tol)?
                }
            };
            print(&with_schema(
                "certificate",
                io::certificate_to_json(field, &result),
            ))?;
        }
        Command::Generate {
            field,
            n,
            seed,
            count,
            out,
        } => {
            let field: Field = field.into();
            let cfg = GeneratorConfig::new(field, n, seed, count as usize);
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let mut files = Vec::new();
            for i in 0..count {
                let inst = generate_instance(&cfg, i)?;
                let path = out.join(format!("{field}_n{n}_s{seed}_{i:04}.json"));
                io::write_instance(&path, &inst)?;
                files.push(path.display().to_string());
            }
            print(&with_schema("generated", json!({ "files": files })))?;
        }
        Command::Experiment {
            field,
            n,
            count,
            seed,
            eps1,
            eps2,
            report,
        } => {
            let dims = parse_dims(&n)?;
            let summary = run_experiment(field.into(), &dims, count, seed, eps1, eps2)?;
            let table = summary.to_markdown();
            if let Some(path) = report {
                std::fs::write(&path, &table)
                    .with_context(|| format!("writing {}", path.display()))?;
            } else {
                eprint!("{table}");
            }
            print(&with_schema(
                "experiment_summary",
                serde_json::to_value(&summary)?,
            ))?;
        }
        Command::Oracle {
            instance,
            resolution,
        } => {
            let inst = io::read_instance(&instance)?;
            let b = brute_force_value(&inst, resolution)?;
            print(&with_schema(
                "oracle",
                io::brute_force_to_json(inst.field, &b),
            ))?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
