//! `semrl`: command line front-end for the experiment harness.
//!
//! Exit codes: 0 success, 1 usage error, 2 run failure, 3 verification
//! (gradient check) failure.

use clap::{Parser, Subcommand};
use semrl_core::agents::Representation;
use semrl_core::harness::{
    describe_state, eval_checkpoint, run_grid, run_nuisance_sweep, run_one, run_patch_sweep,
    Algorithm, DescribeArgs, ExperimentSpec,
};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "semrl", about = "Train and compare RL agents on raw, segmented, and natural-language state representations", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one (representation, seed) cell from a spec file.
    Run {
        /// Path to a key=value experiment spec.
        #[arg(long)]
        spec: PathBuf,
        /// Representation to train: raw, seg, or nl.
        #[arg(long)]
        rep: String,
        /// Training seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train the full representation x seed grid and aggregate curves.
    Grid {
        #[arg(long)]
        spec: PathBuf,
    },
    /// Run the comparison grid at each configured nuisance level.
    NuisanceSweep {
        #[arg(long)]
        spec: PathBuf,
    },
    /// Sweep horizontal patch counts for the language representation.
    PatchSweep {
        #[arg(long)]
        spec: PathBuf,
    },
    /// Verify analytic gradients against finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print one state as sentence, token ids, and segmentation sums.
    Describe {
        #[arg(long, default_value = "defend_line_mini")]
        scenario: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// World tick to inspect (reached with noop actions).
        #[arg(long, default_value_t = 10)]
        tick: u32,
        #[arg(long, default_value_t = 3)]
        n_dir: usize,
        #[arg(long, default_value_t = 3)]
        n_dist: usize,
        /// Also write the rendered RGB frame as a PPM file.
        #[arg(long)]
        ppm: Option<PathBuf>,
    },
    /// Greedy-evaluate a saved checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "defend_line_mini")]
        scenario: String,
        /// dqn or ppo (must match the checkpoint).
        #[arg(long)]
        algorithm: String,
        #[arg(long)]
        rep: String,
        #[arg(long, default_value_t = 3)]
        n_dir: usize,
        #[arg(long, default_value_t = 3)]
        n_dist: usize,
        #[arg(long, default_value_t = 16)]
        embed_dim: usize,
        #[arg(long, default_value_t = 99)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        episodes: u32,
    },
}

const EXIT_USAGE: u8 = 1;
const EXIT_RUN: u8 = 2;
const EXIT_CHECK: u8 = 3;

fn parse_rep(s: &str) -> Result<Representation, ExitCode> {
    Representation::from_name(s).ok_or_else(|| {
        eprintln!("error: unknown representation `{s}` (expected raw, seg, or nl)");
        ExitCode::from(EXIT_USAGE)
    })
}

fn load_spec(path: &PathBuf) -> Result<ExperimentSpec, ExitCode> {
    ExperimentSpec::load(path).map_err(|e| {
        eprintln!("error: {e}");
        ExitCode::from(EXIT_USAGE)
    })
}

fn run_failure(e: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(EXIT_RUN)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // help/version are successful exits; everything else is usage
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match cli.command {
        Command::Run { spec, rep, seed } => {
            let spec = match load_spec(&spec) {
                Ok(s) => s,
                Err(code) => return code,
            };
            let rep = match parse_rep(&rep) {
                Ok(r) => r,
                Err(code) => return code,
            };
            let nuisance = spec.nuisance.unwrap_or(0);
            match run_one(&spec, rep, seed, nuisance, spec.n_dir, &spec.out_root()) {
                Ok(out) => {
                    println!(
                        "{} seed {}: {} episodes, {} steps, final mean {:.3}{}",
                        rep.name(),
                        seed,
                        out.record.episodes,
                        out.record.steps_done,
                        out.record.final_mean_100,
                        if out.record.early_stopped { " (early stop)" } else { "" }
                    );
                    if let Some(msg) = &out.record.diverged {
                        eprintln!("error: run diverged: {msg}");
                        return ExitCode::from(EXIT_RUN);
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => run_failure(e),
            }
        }
        Command::Grid { spec } => {
            let spec = match load_spec(&spec) {
                Ok(s) => s,
                Err(code) => return code,
            };
            match run_grid(&spec) {
                Ok(outcome) => {
                    for rep in &spec.representations {
                        if let Some(m) = outcome.mean_final(*rep) {
                            println!("{}: mean final reward {m:.3}", rep.name());
                        }
                    }
                    if outcome.failed > 0 {
                        eprintln!("error: {} run(s) failed or diverged", outcome.failed);
                        return ExitCode::from(EXIT_RUN);
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => run_failure(e),
            }
        }
        Command::NuisanceSweep { spec } => {
            let spec = match load_spec(&spec) {
                Ok(s) => s,
                Err(code) => return code,
            };
            match run_nuisance_sweep(&spec) {
                Ok(levels) => {
                    let mut failed = 0;
                    for (level, outcome) in &levels {
                        failed += outcome.failed;
                        let summary: Vec<String> = spec
                            .representations
                            .iter()
                            .filter_map(|r| {
                                outcome.mean_final(*r).map(|m| format!("{} {m:.3}", r.name()))
                            })
                            .collect();
                        println!("nuisance {level}: {}", summary.join(", "));
                    }
                    if failed > 0 {
                        eprintln!("error: {failed} run(s) failed or diverged");
                        return ExitCode::from(EXIT_RUN);
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => run_failure(e),
            }
        }
        Command::PatchSweep { spec } => {
            let spec = match load_spec(&spec) {
                Ok(s) => s,
                Err(code) => return code,
            };
            match run_patch_sweep(&spec) {
                Ok((rows, spread)) => {
                    println!("n_dir\tl_max\twords\tfinal\t±std\ttrunc");
                    for r in &rows {
                        println!(
                            "{}\t{}\t{:.1}\t{:.3}\t{:.3}\t{}",
                            r.n_dir,
                            r.l_max,
                            r.mean_sentence_words,
                            r.final_mean,
                            r.final_std,
                            r.truncations
                        );
                    }
                    println!("spread of final means: {:.1}%", spread * 100.0);
                    ExitCode::SUCCESS
                }
                Err(e) => run_failure(e),
            }
        }
        Command::Gradcheck { seed } => {
            let report = semrl_core::neural::gradcheck::run_all(seed);
            for c in &report.checks {
                println!(
                    "{:<18} max rel err {:.3e} ({} coords) {}",
                    c.name,
                    c.max_rel_err,
                    c.coords_checked,
                    if c.passed() { "ok" } else { "FAIL" }
                );
            }
            if report.all_passed() {
                println!("all {} checks passed (max {:.3e})", report.checks.len(), report.max_rel_err());
                ExitCode::SUCCESS
            } else {
                eprintln!("error: gradient check failed (max rel err {:.3e})", report.max_rel_err());
                ExitCode::from(EXIT_CHECK)
            }
        }
        Command::Describe { scenario, seed, tick, n_dir, n_dist, ppm } => {
            let args = DescribeArgs { scenario, seed, tick, n_dir, n_dist, ppm_out: ppm };
            match describe_state(&args) {
                Ok(out) => {
                    print!("{}", out.text);
                    ExitCode::SUCCESS
                }
                Err(e) => run_failure(e),
            }
        }
        Command::Eval {
            checkpoint,
            scenario,
            algorithm,
            rep,
            n_dir,
            n_dist,
            embed_dim,
            seed,
            episodes,
        } => {
            let algorithm = match Algorithm::from_name(&algorithm) {
                Some(a) => a,
                None => {
                    eprintln!("error: unknown algorithm `{algorithm}` (expected dqn or ppo)");
                    return ExitCode::from(EXIT_USAGE);
                }
            };
            let rep = match parse_rep(&rep) {
                Ok(r) => r,
                Err(code) => return code,
            };
            match eval_checkpoint(
                &checkpoint,
                &scenario,
                algorithm,
                rep,
                n_dir,
                n_dist,
                embed_dim,
                seed,
                episodes,
            ) {
                Ok(mean) => {
                    println!("mean reward over {episodes} episodes: {mean:.3}");
                    ExitCode::SUCCESS
                }
                Err(e) => run_failure(e),
            }
        }
    }
}
