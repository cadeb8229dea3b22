//! `ducb` — run bandit experiments and evaluate instance-dependent bounds.
//!
//! Exit codes: 0 success, 2 configuration/usage error, 3 IO error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ducb_core::harness::{
    corollary_delta_bound, instance_term_ducb, instance_term_ucb1, instance_terms_sweep,
    lambda_expectation_check, lambda_mu, theorem_bound, BoundKind, GapProfile,
};
use ducb_core::{
    empirical_divergences, exact_divergence_matrix, run_experiment, ContextValue, ExperimentConfig,
    Expert, ExpertFile,
};

#[derive(Parser)]
#[command(
    name = "ducb",
    version,
    about = "Contextual bandits with stochastic experts"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configured experiment: seeded replications, trace CSVs,
    /// aggregate JSON and plot data.
    Run(RunArgs),
    /// Evaluate regret-bound shapes for a gap profile file.
    Bounds(BoundsArgs),
    /// Monte-Carlo estimate of the expected gap-structure parameter under
    /// the uniform-gap generative model.
    LambdaMc(LambdaMcArgs),
    /// Compute and print the divergence matrix for an expert file.
    Divergence(DivergenceArgs),
    /// Sweep both bounds' gap terms over pool sizes.
    InstanceTerms(InstanceTermsArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config JSON.
    #[arg(long)]
    config: PathBuf,
    /// Override the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the number of replications.
    #[arg(long)]
    reps: Option<usize>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated policy list overriding the config.
    #[arg(long, value_delimiter = ',')]
    policy: Option<Vec<String>>,
    /// Suppress the stdout summary.
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct BoundsArgs {
    /// Gap profile JSON: {"gaps": [0.0, ...]} sorted ascending.
    #[arg(long)]
    gaps: PathBuf,
    /// Horizon T.
    #[arg(long, default_value_t = 10_000)]
    t: u64,
    /// Max log-divergence M (required for the clipped bound).
    #[arg(long)]
    m: Option<f64>,
    /// Max chi-square term sigma (required for the median-of-means bound).
    #[arg(long)]
    sigma: Option<f64>,
    /// Which bound: r1 | clipped, r2 | mom, or both.
    #[arg(long, default_value = "both")]
    which: String,
}

#[derive(Args)]
struct LambdaMcArgs {
    /// Number of experts N.
    #[arg(long)]
    n: usize,
    /// Smallest nonzero gap.
    #[arg(long, default_value_t = 0.05)]
    delta2: f64,
    #[arg(long, default_value_t = 5000)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct DivergenceArgs {
    /// Expert file JSON: {"experts": [...], "context_probs": [...]}.
    #[arg(long)]
    experts: PathBuf,
    /// Feature CSV (one context per row) for empirical estimation; required
    /// when the pool is not purely tabular or no context marginal is given.
    #[arg(long)]
    contexts: Option<PathBuf>,
    /// Median-of-means groups for empirical estimation.
    #[arg(long, default_value_t = 5)]
    groups: usize,
}

#[derive(Args)]
struct InstanceTermsArgs {
    /// Comma-separated pool sizes.
    #[arg(long, value_delimiter = ',', default_value = "10,20,40,80,160,320")]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 0.1)]
    delta2: f64,
    /// Sampled profiles per size.
    #[arg(long, default_value_t = 200)]
    profiles: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the sweep CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            if err.is_config_error() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}

fn dispatch(cli: Cli) -> ducb_core::Result<()> {
    match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Bounds(args) => cmd_bounds(args),
        Command::LambdaMc(args) => cmd_lambda_mc(args),
        Command::Divergence(args) => cmd_divergence(args),
        Command::InstanceTerms(args) => cmd_instance_terms(args),
    }
}

fn cmd_run(args: RunArgs) -> ducb_core::Result<()> {
    let mut config = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(reps) = args.reps {
        config.reps = reps;
    }
    if let Some(out) = args.out {
        config.out = Some(out);
    }
    if let Some(policies) = args.policy {
        config.policies = policies;
    }
    let base_dir = args.config.parent().map(PathBuf::from);
    let output = run_experiment(&config, base_dir.as_deref())?;
    if !args.quiet {
        println!(
            "wrote {} ({} policies x {} reps, T={})",
            output.out_dir.display(),
            output.aggregate.policies.len(),
            output.aggregate.reps,
            output.aggregate.horizon
        );
        for p in &output.aggregate.policies {
            match (p.final_mean_regret, &p.mean_progressive_loss) {
                (Some(mean), _) => println!(
                    "  {}: final mean cumulative regret {:.3} (std {:.3})",
                    p.policy,
                    mean,
                    p.final_std_regret.unwrap_or(0.0)
                ),
                (None, Some(loss)) => println!(
                    "  {}: final mean progressive loss {:.4}",
                    p.policy,
                    loss.last().copied().unwrap_or(f64::NAN)
                ),
                _ => println!("  {}: no metric", p.policy),
            }
        }
    }
    Ok(())
}

fn cmd_bounds(args: BoundsArgs) -> ducb_core::Result<()> {
    let text = std::fs::read_to_string(&args.gaps)?;
    let profile: GapProfile = serde_json::from_str(&text).map_err(ducb_core::Error::from)?;
    let which = args.which.as_str();
    let want_clipped = matches!(which, "both" | "r1" | "clipped");
    let want_mom = matches!(which, "both" | "r2" | "mom");
    if !want_clipped && !want_mom {
        return Err(ducb_core::Error::Malformed {
            what: "--which",
            detail: format!("{which} (expected r1|clipped|r2|mom|both)"),
        });
    }

    let mut report = serde_json::Map::new();
    report.insert("num_experts".into(), profile.num_experts().into());
    report.insert("delta2".into(), profile.delta2().unwrap_or(f64::NAN).into());
    report.insert("T".into(), args.t.into());
    report.insert("lambda".into(), lambda_mu(&profile)?.into());
    report.insert(
        "instance_term_ducb".into(),
        instance_term_ducb(&profile)?.into(),
    );
    report.insert(
        "instance_term_ucb1".into(),
        instance_term_ucb1(&profile)?.into(),
    );
    report.insert(
        "note".into(),
        "universal constants reported as 1; shape values, not certified ceilings".into(),
    );

    if want_clipped {
        let m = args.m.ok_or(ducb_core::Error::Malformed {
            what: "--m",
            detail: "the clipped bound needs the max log-divergence".into(),
        })?;
        let theorem = theorem_bound(&profile, args.t, m, BoundKind::Clipped)?;
        let delta = corollary_delta_bound(&profile, args.t, m, BoundKind::Clipped)?;
        report.insert(
            "clipped".into(),
            serde_json::json!({
                "theorem": theorem,
                "delta_corollary": delta,
                "min_shape": theorem.total.min(delta),
            }),
        );
    }
    if want_mom {
        let sigma = args.sigma.ok_or(ducb_core::Error::Malformed {
            what: "--sigma",
            detail: "the median-of-means bound needs the max chi-square term".into(),
        })?;
        let theorem = theorem_bound(&profile, args.t, sigma, BoundKind::Mom)?;
        let delta = corollary_delta_bound(&profile, args.t, sigma, BoundKind::Mom)?;
        report.insert(
            "mom".into(),
            serde_json::json!({
                "theorem": theorem,
                "delta_corollary": delta,
                "min_shape": theorem.total.min(delta),
            }),
        );
    }
    println!(
        "{}",
        serde_json::to_string_pretty(&serde_json::Value::Object(report))
            .map_err(ducb_core::Error::from)?
    );
    Ok(())
}

fn cmd_lambda_mc(args: LambdaMcArgs) -> ducb_core::Result<()> {
    let report = lambda_expectation_check(args.n, args.delta2, args.reps, args.seed)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&report).map_err(ducb_core::Error::from)?
    );
    Ok(())
}

fn cmd_divergence(args: DivergenceArgs) -> ducb_core::Result<()> {
    let file = ExpertFile::load(&args.experts)?;
    let all_tabular = file.experts.iter().all(|e| matches!(e, Expert::Tabular(_)));
    let matrix = match (&args.contexts, &file.context_probs, all_tabular) {
        (Some(path), _, _) => {
            let contexts = load_feature_contexts(path)?;
            empirical_divergences(&file.experts, &contexts, args.groups)?
        }
        (None, Some(probs), true) => exact_divergence_matrix(&file.experts, probs)?,
        (None, None, true) => {
            // Uniform context marginal over the tabular experts' rows.
            let c = file
                .experts
                .iter()
                .filter_map(|e| match e {
                    Expert::Tabular(t) => Some(t.num_contexts()),
                    _ => None,
                })
                .max()
                .unwrap_or(1);
            exact_divergence_matrix(&file.experts, &vec![1.0 / c as f64; c])?
        }
        _ => {
            return Err(ducb_core::Error::Malformed {
                what: "divergence inputs",
                detail: "softmax experts need --contexts for empirical estimation".into(),
            })
        }
    };
    println!(
        "{}",
        serde_json::to_string_pretty(&matrix).map_err(ducb_core::Error::from)?
    );
    Ok(())
}

fn load_feature_contexts(path: &PathBuf) -> ducb_core::Result<Vec<ContextValue>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(ducb_core::Error::from)?;
    let mut contexts = Vec::new();
    for record in reader.records() {
        let record = record.map_err(ducb_core::Error::from)?;
        let features = record
            .iter()
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|e| ducb_core::Error::Malformed {
                        what: "context feature",
                        detail: format!("{e}"),
                    })
            })
            .collect::<ducb_core::Result<Vec<f64>>>()?;
        contexts.push(ContextValue::Features(features));
    }
    Ok(contexts)
}

fn cmd_instance_terms(args: InstanceTermsArgs) -> ducb_core::Result<()> {
    let rows = instance_terms_sweep(&args.sizes, args.delta2, args.profiles, args.seed)?;
    let mut csv = String::from("n,ducb_term,ucb1_term,ratio\n");
    for row in &rows {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            row.num_experts, row.ducb_term, row.ucb1_term, row.ratio
        ));
    }
    match args.out {
        Some(path) => std::fs::write(path, csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}
