//! Experiment harness: seeded single runs, comparison grids, nuisance and
//! patch sweeps, aggregation, CSV/JSON logs, and SVG learning curves.

mod describe;
mod plot;
mod runner;
mod spec;

pub use describe::{describe_state, eval_checkpoint, DescribeArgs, DescribeOutput};
pub use plot::{render_curves_svg, CurveSeries};
pub use runner::{
    aggregate_curves, run_grid, run_nuisance_sweep, run_one, run_patch_sweep, GridOutcome,
    PatchRow, RunOutput,
};
pub use spec::{arena_for, Algorithm, ExperimentSpec, RunRecord};

use thiserror::Error;

/// Environment variable overriding the output root directory.
pub const OUT_ROOT_ENV: &str = "SEMRL_OUT";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Agent(#[from] crate::agents::AgentError),
    #[error(transparent)]
    Neural(#[from] crate::neural::NeuralError),
    #[error(transparent)]
    World(#[from] crate::world::WorldError),
    #[error(transparent)]
    Lang(#[from] crate::langgen::LangError),
    #[error("bad experiment spec: {0}")]
    Spec(String),
    #[error("spec parse error on line {line}: {msg}")]
    SpecParse { line: usize, msg: String },
    #[error("fairness check failed: {0}")]
    Fairness(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{failed} of {total} runs failed")]
    RunsFailed { failed: usize, total: usize },
}
