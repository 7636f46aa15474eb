use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use imp_harness::comparison::run_baseline_comparison;
use imp_harness::heuristic::run_heuristic_equivalence;
use imp_harness::lemma1::run_lemma1_check;
use imp_harness::output::{self, csv_line, find_trial_row, without_wall_time};
use imp_harness::recovery::{run_recovery_trial, run_support_recovery, TrialOutcome};
use imp_harness::{ExperimentKind, ExperimentSpec, HarnessError, Result};

/// Iterative magnitude pruning experiments.
///
/// Exit status: 0 when the acceptance gate passes, 1 when it fails or the
/// run aborts, 2 on configuration errors.
#[derive(Parser)]
#[command(name = "imp", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// JSON experiment configuration; defaults apply to omitted keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed; trial t uses seed + t.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for the trial pool.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Check recoverability every round and write per-trial traces.
    #[arg(long, global = true)]
    verified: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Support recovery Monte Carlo.
    Recover,
    /// Pruning order against the alignment heuristic.
    Heuristic,
    /// IMP against hard thresholding and IHT over a noise sweep.
    Baselines,
    /// Noise deviation bound Monte Carlo.
    Lemma1,
    /// Recompute one support-recovery trial and print its trials.csv row.
    Replay {
        #[arg(long)]
        trial: usize,
        /// Compare against this trials.csv; wall time is not compared.
        #[arg(long)]
        against: Option<PathBuf>,
    },
}

impl Command {
    fn kind(&self) -> ExperimentKind {
        match self {
            Command::Recover | Command::Replay { .. } => ExperimentKind::SupportRecovery,
            Command::Heuristic => ExperimentKind::HeuristicEquivalence,
            Command::Baselines => ExperimentKind::BaselineComparison,
            Command::Lemma1 => ExperimentKind::Lemma1Check,
        }
    }
}

fn load_spec(global: &Global, kind: ExperimentKind) -> Result<ExperimentSpec> {
    let mut spec = match &global.config {
        Some(path) => ExperimentSpec::load(path)?,
        None => ExperimentSpec::default(),
    };
    if let Some(seed) = global.seed {
        spec.base_seed = seed;
    }
    if let Some(trials) = global.trials {
        spec.trials = trials;
    }
    if let Some(out) = &global.out {
        spec.out_dir = out.clone();
    }
    if let Some(threads) = global.threads {
        spec.threads = Some(threads);
    }
    spec.verified_mode |= global.verified;
    if spec.threads == Some(0) {
        return Err(HarnessError::Config("threads must be positive".into()));
    }
    spec.validate_for(kind)?;
    Ok(spec)
}

fn report(name: &str, pass: bool, detail: String) -> bool {
    println!("{name}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
    pass
}

fn execute(command: &Command, spec: &ExperimentSpec) -> Result<bool> {
    let out = spec.out_dir.as_path();
    match command {
        Command::Recover => {
            let r = run_support_recovery(spec)?;
            output::write_recovery(out, spec, &r)?;
            let s = &r.summary;
            Ok(report(
                "support_recovery",
                s.pass,
                format!(
                    "failure rate {}/{} = {:.4}, 95% CI [{:.4}, {:.4}], delta {}, n in {:?}, {} ONP rejections",
                    s.failures, s.trials, s.failure_rate, s.ci95.0, s.ci95.1, s.delta, r.n_range, r.onp_rejections
                ),
            ))
        }
        Command::Heuristic => {
            let r = run_heuristic_equivalence(spec)?;
            output::write_heuristic(out, spec, &r)?;
            Ok(report(
                "heuristic_equivalence",
                r.pass,
                format!(
                    "full-order {}/{}, first-prune {}/{}, {} degenerate, {} gap-unmet, gated on {}",
                    r.full_matches, r.compared, r.first_matches, r.compared, r.degenerate, r.condition_unmet, r.gated_on
                ),
            ))
        }
        Command::Baselines => {
            let r = run_baseline_comparison(spec)?;
            output::write_comparison(out, spec, &r)?;
            for row in &r.rows {
                println!(
                    "sigma {:<6} {:<4} exact {:>5}/{:<5} mean F1 {:.4}",
                    row.sigma,
                    row.method.name(),
                    row.exact,
                    row.trials,
                    row.mean_f1
                );
            }
            Ok(report(
                "baseline_comparison",
                r.pass,
                format!("noiseless exact: {:?}, sparsity violations {}", r.noiseless_exact, r.sparsity_violations),
            ))
        }
        Command::Lemma1 => {
            let r = run_lemma1_check(spec)?;
            output::write_lemma1(out, spec, &r)?;
            for k in &r.kinds {
                let s = &k.summary;
                println!(
                    "{:<10} n {:<6} exceedance {}/{} = {:.4}, 95% CI [{:.4}, {:.4}]",
                    k.noise.name(),
                    k.n,
                    s.failures,
                    s.trials,
                    s.failure_rate,
                    s.ci95.0,
                    s.ci95.1
                );
            }
            Ok(report("lemma1_check", r.pass, format!("bound identity {}", r.bound_identity)))
        }
        Command::Replay { trial, against } => {
            let (record, _) = match run_recovery_trial(spec, *trial)? {
                TrialOutcome::Completed { record, trace } => (record, trace),
                TrialOutcome::OnpRejected { max_violation, .. } => {
                    return Err(HarnessError::Aborted(format!(
                        "trial {trial} was rejected (nullspace violation {max_violation})"
                    )))
                }
            };
            let line = csv_line(&record.csv_fields())?;
            println!("{line}");
            match against {
                None => Ok(true),
                Some(path) => {
                    let text = std::fs::read_to_string(path)?;
                    let stored = find_trial_row(&text, *trial).ok_or_else(|| {
                        HarnessError::Aborted(format!("trial {trial} not found in {}", path.display()))
                    })?;
                    let same = without_wall_time(&stored) == without_wall_time(&line);
                    eprintln!("replay of trial {trial}: {}", if same { "identical" } else { "DIFFERS" });
                    if !same {
                        eprintln!("stored:   {stored}");
                    }
                    Ok(same)
                }
            }
        }
    }
}

fn run(cli: &Cli) -> Result<bool> {
    let spec = load_spec(&cli.global, cli.command.kind())?;
    match spec.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| HarnessError::Config(format!("cannot build thread pool: {e}")))?
            .install(|| execute(&cli.command, &spec)),
        None => execute(&cli.command, &spec),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
