//! Grid execution: single runs, comparisons, sweeps, and aggregation.

use super::plot::{color_for, render_curves_svg, CurveSeries};
use super::spec::{arena_for, Algorithm, ExperimentSpec, RunRecord};
use super::HarnessError;
use crate::agents::{
    encoder_for, train, Agent, AgentError, ArenaEnv, CurvePoint, DqnAgent, Environment, PpoAgent,
    PolicyValueNet, QNet, Representation, TrainConfig,
};
use crate::langgen::{PatchGrid, TemplateBank};
use crate::neural::{save_checkpoint, write_manifest};
use crate::rng::{stream_rng, Stream};
use crate::world::scripted_expert_mean;
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;

/// Deterministic per-run master seed mixing all grid coordinates.
fn run_seed(seed: u64, rep: Representation, nuisance: u16, n_dir: usize) -> u64 {
    let rep_ix = match rep {
        Representation::Raw => 1u64,
        Representation::Seg => 2,
        Representation::Nl => 3,
    };
    let mixed = seed
        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(rep_ix << 32)
        .wrapping_add((nuisance as u64) << 16)
        .wrapping_add(n_dir as u64);
    crate::rng::episode_seed(mixed, 0)
}

#[derive(Debug)]
pub struct RunOutput {
    pub record: RunRecord,
    pub curve: Vec<CurvePoint>,
}

fn build_agent(
    spec: &ExperimentSpec,
    rep: Representation,
    env: &ArenaEnv,
    master: u64,
) -> Agent {
    let (h, w) = (env.config().height as usize, env.config().width as usize);
    let vocab_size = env.vocab().len();
    let l_max = env.l_max();
    let n_actions = env.n_actions();
    match spec.algorithm {
        Algorithm::Dqn => {
            let embed_dim = spec.embed_dim;
            Agent::Dqn(DqnAgent::new(spec.dqn, || {
                // both nets start from the same seeded init; the target is
                // then synced anyway
                let mut rng = stream_rng(master, Stream::Init);
                let enc = encoder_for(rep, vocab_size, l_max, embed_dim, h, w, &mut rng);
                QNet::new(enc, n_actions, &mut rng)
            }))
        }
        Algorithm::Ppo => {
            let mut rng = stream_rng(master, Stream::Init);
            let enc = encoder_for(rep, vocab_size, l_max, spec.embed_dim, h, w, &mut rng);
            Agent::Ppo(PpoAgent::new(spec.ppo, PolicyValueNet::new(enc, n_actions, &mut rng)))
        }
    }
}

fn agent_params(agent: &Agent) -> Vec<crate::neural::Tensor> {
    match agent {
        Agent::Dqn(a) => a.online.parameters(),
        Agent::Ppo(a) => a.net.parameters(),
    }
}

fn encoder_param_count(agent: &Agent) -> usize {
    match agent {
        Agent::Dqn(a) => a.online.encoder.param_count(),
        Agent::Ppo(a) => a.net.encoder.param_count(),
    }
}

pub fn run_file_stem(
    spec: &ExperimentSpec,
    rep: Representation,
    seed: u64,
    nuisance: u16,
    n_dir: usize,
) -> String {
    format!(
        "{}_{}_{}_n{}_d{}_seed{}",
        spec.scenario,
        spec.algorithm.name(),
        rep.name(),
        nuisance,
        n_dir,
        seed
    )
}

fn write_curve_csv(path: &Path, curve: &[CurvePoint]) -> Result<(), HarnessError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "step,episode,reward,moving_avg_100,epsilon_or_clipfrac")?;
    for p in curve {
        writeln!(
            f,
            "{},{},{:.6},{:.6},{:.6}",
            p.step, p.episode, p.reward, p.moving_avg_100, p.epsilon_or_clipfrac
        )?;
    }
    f.flush()?;
    Ok(())
}

/// Execute one (representation, seed) cell of a grid and write its
/// artifacts under `out_dir`. Divergence is captured in the record, not
/// returned as an error.
pub fn run_one(
    spec: &ExperimentSpec,
    rep: Representation,
    seed: u64,
    nuisance: u16,
    n_dir: usize,
    out_dir: &Path,
) -> Result<RunOutput, HarnessError> {
    let start = std::time::Instant::now();
    let mut arena = arena_for(&spec.scenario)
        .ok_or_else(|| HarnessError::Spec(format!("unknown scenario `{}`", spec.scenario)))?;
    arena.nuisance_count = nuisance as u32;
    if nuisance > 0 {
        arena.allow_nuisance = true;
    }
    let grid = PatchGrid::new(n_dir, spec.n_dist)?;
    let master = run_seed(seed, rep, nuisance, n_dir);
    let mut env = ArenaEnv::new(arena.clone(), rep, grid, master)?;
    let mut agent = build_agent(spec, rep, &env, master);
    let encoder_params = encoder_param_count(&agent);

    let early_stop_avg = spec
        .early_stop_expert_frac
        .map(|frac| frac * scripted_expert_mean(&arena, 1234, 20));
    let train_cfg = TrainConfig {
        total_steps: spec.total_steps,
        early_stop_avg,
        early_stop_min_episodes: 100,
    };
    let (result, diverged) = match train(&mut agent, &mut env, train_cfg, master) {
        Ok(r) => (r, None),
        Err(AgentError::Diverged { step, msg }) => (
            crate::agents::TrainResult { steps_done: step, ..Default::default() },
            Some(msg),
        ),
        Err(e) => return Err(e.into()),
    };

    std::fs::create_dir_all(out_dir)?;
    let stem = run_file_stem(spec, rep, seed, nuisance, n_dir);
    write_curve_csv(&out_dir.join(format!("{stem}.csv")), &result.curve)?;

    let vocab_hash = if rep == Representation::Nl { env.vocab().hash() } else { 0 };
    let ckpt = out_dir.join(format!("{stem}.ckpt"));
    let params = agent_params(&agent);
    save_checkpoint(&ckpt, &params, vocab_hash)?;
    write_manifest(&out_dir.join(format!("{stem}.manifest.txt")), &params)?;

    let record = RunRecord {
        spec_hash: spec.hash(),
        scenario: spec.scenario.clone(),
        algorithm: spec.algorithm,
        representation: rep,
        seed,
        nuisance,
        n_dir,
        episodes: result.curve.len() as u64,
        steps_done: result.steps_done,
        final_mean_100: result.curve.last().map(|p| p.moving_avg_100).unwrap_or(0.0),
        wall_time_s: start.elapsed().as_secs_f64(),
        checkpoint: Some(ckpt),
        truncations: env.truncations,
        encoder_params,
        early_stopped: result.early_stopped,
        diverged,
    };
    Ok(RunOutput { record, curve: result.curve })
}

/// Mean/std aggregation across seeds, aligned per episode index and cut to
/// the shortest curve.
pub fn aggregate_curves(curves: &[Vec<CurvePoint>]) -> Vec<(u64, f64, f64, f64, f64, f64)> {
    let n = curves.iter().map(|c| c.len()).min().unwrap_or(0);
    let k = curves.len() as f64;
    (0..n)
        .map(|i| {
            let step_mean = curves.iter().map(|c| c[i].step as f64).sum::<f64>() / k;
            let rmean = curves.iter().map(|c| c[i].reward).sum::<f64>() / k;
            let rstd = (curves.iter().map(|c| (c[i].reward - rmean).powi(2)).sum::<f64>() / k).sqrt();
            let amean = curves.iter().map(|c| c[i].moving_avg_100).sum::<f64>() / k;
            let astd =
                (curves.iter().map(|c| (c[i].moving_avg_100 - amean).powi(2)).sum::<f64>() / k).sqrt();
            (i as u64 + 1, step_mean, rmean, rstd, amean, astd)
        })
        .collect()
}

fn write_aggregate_csv(
    path: &Path,
    rows: &[(u64, f64, f64, f64, f64, f64)],
) -> Result<(), HarnessError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "episode,step_mean,reward_mean,reward_std,moving_avg_100_mean,moving_avg_100_std")?;
    for (ep, sm, rm, rs, am, astd) in rows {
        writeln!(f, "{ep},{sm:.6},{rm:.6},{rs:.6},{am:.6},{astd:.6}")?;
    }
    f.flush()?;
    Ok(())
}

/// Encoder trainable-weight parity across representations (within 2x).
/// Probes throwaway agents; cheap relative to training.
fn fairness_check(spec: &ExperimentSpec, nuisance: u16, n_dir: usize) -> Result<Vec<(Representation, usize)>, HarnessError> {
    let mut arena = arena_for(&spec.scenario)
        .ok_or_else(|| HarnessError::Spec(format!("unknown scenario `{}`", spec.scenario)))?;
    arena.nuisance_count = nuisance as u32;
    if nuisance > 0 {
        arena.allow_nuisance = true;
    }
    let grid = PatchGrid::new(n_dir, spec.n_dist)?;
    let mut counts = Vec::new();
    for &rep in &spec.representations {
        let env = ArenaEnv::new(arena.clone(), rep, grid, 0)?;
        let agent = build_agent(spec, rep, &env, 0);
        counts.push((rep, encoder_param_count(&agent)));
    }
    // the NL encoder counts its (frozen-PAD) embedding table; one-hot
    // tabular cases report 0 and are exempt from the ratio rule
    let nonzero: Vec<usize> = counts.iter().map(|&(_, c)| c).filter(|&c| c > 0).collect();
    if let (Some(&hi), Some(&lo)) = (
        nonzero.iter().max(),
        nonzero.iter().min(),
    ) {
        if hi as f64 > 2.0 * lo as f64 {
            return Err(HarnessError::Fairness(format!(
                "encoder parameter counts not within 2x: {counts:?}"
            )));
        }
    }
    Ok(counts)
}

#[derive(Debug, Default)]
pub struct GridOutcome {
    pub records: Vec<RunRecord>,
    pub failed: usize,
}

impl GridOutcome {
    /// Final-mean across seeds for one representation.
    pub fn mean_final(&self, rep: Representation) -> Option<f64> {
        let vals: Vec<f64> = self
            .records
            .iter()
            .filter(|r| r.representation == rep && r.diverged.is_none())
            .map(|r| r.final_mean_100)
            .collect();
        if vals.is_empty() {
            None
        } else {
            Some(vals.iter().sum::<f64>() / vals.len() as f64)
        }
    }
}

/// Run representation x seed under one shared hyperparameter config, then
/// aggregate and plot. Failures are recorded and the grid continues.
pub fn run_grid(spec: &ExperimentSpec) -> Result<GridOutcome, HarnessError> {
    spec.validate()?;
    let nuisance = spec.nuisance.unwrap_or_else(|| {
        arena_for(&spec.scenario).map(|a| a.nuisance_count as u16).unwrap_or(0)
    });
    run_grid_at(spec, nuisance, spec.n_dir, &spec.out_root())
}

fn run_grid_at(
    spec: &ExperimentSpec,
    nuisance: u16,
    n_dir: usize,
    out_dir: &Path,
) -> Result<GridOutcome, HarnessError> {
    std::fs::create_dir_all(out_dir)?;
    let counts = fairness_check(spec, nuisance, n_dir)?;
    {
        let mut f = std::fs::File::create(out_dir.join("encoder_params.txt"))?;
        for (rep, c) in &counts {
            writeln!(f, "{}\t{c}", rep.name())?;
        }
    }

    let tasks: Vec<(Representation, u64)> = spec
        .representations
        .iter()
        .flat_map(|&rep| spec.seeds.iter().map(move |&s| (rep, s)))
        .collect();
    let total = tasks.len();
    let results: Mutex<Vec<Option<Result<RunOutput, HarnessError>>>> =
        Mutex::new((0..total).map(|_| None).collect());
    let next: Mutex<usize> = Mutex::new(0);
    let workers = spec.workers.min(total.max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = {
                    let mut guard = next.lock().unwrap();
                    let i = *guard;
                    if i >= total {
                        return;
                    }
                    *guard += 1;
                    i
                };
                let (rep, seed) = tasks[i];
                let out = run_one(spec, rep, seed, nuisance, n_dir, out_dir);
                results.lock().unwrap()[i] = Some(out);
            });
        }
    });

    let mut outcome = GridOutcome::default();
    let mut curves_by_rep: Vec<(Representation, Vec<Vec<CurvePoint>>)> =
        spec.representations.iter().map(|&r| (r, Vec::new())).collect();
    for (i, slot) in results.into_inner().unwrap().into_iter().enumerate() {
        let (rep, _) = tasks[i];
        match slot.expect("worker filled every slot") {
            Ok(out) => {
                if out.record.diverged.is_some() {
                    outcome.failed += 1;
                }
                curves_by_rep.iter_mut().find(|(r, _)| *r == rep).unwrap().1.push(out.curve);
                outcome.records.push(out.record);
            }
            Err(e) => {
                eprintln!("run failed: {e}");
                outcome.failed += 1;
            }
        }
    }

    // records JSONL, aggregates, and the comparison chart
    {
        let mut f = std::io::BufWriter::new(std::fs::File::create(out_dir.join("records.jsonl"))?);
        for r in &outcome.records {
            writeln!(f, "{}", serde_json::to_string(r).expect("record serializes"))?;
        }
    }
    let mut series = Vec::new();
    for (rep, curves) in &curves_by_rep {
        let rows = aggregate_curves(curves);
        write_aggregate_csv(
            &out_dir.join(format!(
                "aggregate_{}_{}_{}.csv",
                spec.scenario,
                spec.algorithm.name(),
                rep.name()
            )),
            &rows,
        )?;
        series.push(CurveSeries {
            label: rep.name().to_string(),
            color: color_for(rep.name()).to_string(),
            points: rows.iter().map(|&(_, sm, _, _, am, _)| (sm, am)).collect(),
        });
    }
    let svg = render_curves_svg(
        &format!("{} / {} (nuisance {nuisance})", spec.scenario, spec.algorithm.name()),
        "env steps",
        "episode reward (moving avg 100)",
        &series,
    );
    std::fs::write(
        out_dir.join(format!("curves_{}_{}.svg", spec.scenario, spec.algorithm.name())),
        svg,
    )?;
    Ok(outcome)
}

/// One comparison grid per nuisance level (Fig. 4 layout: a panel per
/// level), under `nuisance_<level>/` subdirectories.
pub fn run_nuisance_sweep(spec: &ExperimentSpec) -> Result<Vec<(u16, GridOutcome)>, HarnessError> {
    spec.validate()?;
    if spec.nuisance_levels.is_empty() {
        return Err(HarnessError::Spec("empty nuisance level list".into()));
    }
    let root = spec.out_root();
    let mut out = Vec::new();
    for &level in &spec.nuisance_levels {
        let dir = root.join(format!("nuisance_{level}"));
        out.push((level, run_grid_at(spec, level, spec.n_dir, &dir)?));
    }
    Ok(out)
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct PatchRow {
    pub n_dir: usize,
    pub l_max: usize,
    pub mean_sentence_words: f64,
    pub final_mean: f64,
    pub final_std: f64,
    pub truncations: u64,
}

/// NL-only sweep over horizontal patch counts. Returns the per-count table
/// and the relative spread of final means ((max-min)/best).
pub fn run_patch_sweep(spec: &ExperimentSpec) -> Result<(Vec<PatchRow>, f64), HarnessError> {
    spec.validate()?;
    if spec.patch_counts.is_empty() {
        return Err(HarnessError::Spec("empty patch list".into()));
    }
    let root = spec.out_root();
    let nuisance = spec.nuisance.unwrap_or(0);
    let nl_spec = ExperimentSpec {
        representations: vec![Representation::Nl],
        ..spec.clone()
    };
    let bank = TemplateBank::default_bank();
    let mut rows = Vec::new();
    for &n_dir in &spec.patch_counts {
        let grid = PatchGrid::new(n_dir, spec.n_dist)?;
        let dir = root.join(format!("patches_{n_dir}"));
        let outcome = run_grid_at(&nl_spec, nuisance, n_dir, &dir)?;
        let finals: Vec<f64> = outcome
            .records
            .iter()
            .filter(|r| r.diverged.is_none())
            .map(|r| r.final_mean_100)
            .collect();
        let mean = finals.iter().sum::<f64>() / finals.len().max(1) as f64;
        let std = (finals.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
            / finals.len().max(1) as f64)
            .sqrt();
        let mut arena = arena_for(&spec.scenario).unwrap();
        arena.nuisance_count = nuisance as u32;
        if nuisance > 0 {
            arena.allow_nuisance = true;
        }
        let words = crate::langgen::measure_length(&arena, grid, &bank, 3, 99);
        rows.push(PatchRow {
            n_dir,
            l_max: grid.l_max(),
            mean_sentence_words: words,
            final_mean: mean,
            final_std: std,
            truncations: outcome.records.iter().map(|r| r.truncations).sum(),
        });
    }
    let best = rows.iter().map(|r| r.final_mean).fold(f64::NEG_INFINITY, f64::max);
    let worst = rows.iter().map(|r| r.final_mean).fold(f64::INFINITY, f64::min);
    let spread = if best.abs() > 1e-12 { (best - worst) / best.abs() } else { 0.0 };
    let mut f = std::io::BufWriter::new(std::fs::File::create(root.join("patch_sweep.csv"))?);
    writeln!(f, "n_dir,l_max,mean_sentence_words,final_mean,final_std,truncations")?;
    for r in &rows {
        writeln!(
            f,
            "{},{},{:.6},{:.6},{:.6},{}",
            r.n_dir, r.l_max, r.mean_sentence_words, r.final_mean, r.final_std, r.truncations
        )?;
    }
    writeln!(f, "# spread_of_final_means_pct,{:.2}", spread * 100.0)?;
    f.flush()?;
    Ok((rows, spread))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_spec(out: &Path) -> ExperimentSpec {
        ExperimentSpec {
            scenario: "defend_line_mini".into(),
            algorithm: Algorithm::Dqn,
            representations: vec![Representation::Nl, Representation::Seg],
            seeds: vec![0, 1],
            total_steps: 400,
            out_dir: out.to_path_buf(),
            workers: 2,
            ..Default::default()
        }
    }

    #[test]
    fn grid_writes_expected_files() {
        let dir = tempfile::tempdir().unwrap();
        let spec = tiny_spec(dir.path());
        let outcome = run_grid(&spec).unwrap();
        assert_eq!(outcome.records.len(), 4);
        assert_eq!(outcome.failed, 0);
        for rep in ["nl", "seg"] {
            for seed in [0, 1] {
                let stem = format!("defend_line_mini_dqn_{rep}_n0_d3_seed{seed}");
                assert!(dir.path().join(format!("{stem}.csv")).exists(), "{stem}.csv");
                assert!(dir.path().join(format!("{stem}.ckpt")).exists());
            }
            assert!(dir
                .path()
                .join(format!("aggregate_defend_line_mini_dqn_{rep}.csv"))
                .exists());
        }
        assert!(dir.path().join("curves_defend_line_mini_dqn.svg").exists());
        assert!(dir.path().join("records.jsonl").exists());
        assert!(dir.path().join("encoder_params.txt").exists());
    }

    #[test]
    fn rerun_gives_identical_aggregates() {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let mut s1 = tiny_spec(d1.path());
        s1.representations = vec![Representation::Seg];
        s1.total_steps = 350;
        let mut s2 = s1.clone();
        s2.out_dir = d2.path().to_path_buf();
        // different worker counts must not change results either
        s2.workers = 1;
        run_grid(&s1).unwrap();
        run_grid(&s2).unwrap();
        let name = "aggregate_defend_line_mini_dqn_seg.csv";
        let a = std::fs::read(d1.path().join(name)).unwrap();
        let b = std::fs::read(d2.path().join(name)).unwrap();
        assert!(!a.is_empty() && a == b);
    }

    #[test]
    fn aggregate_math() {
        let mk = |vals: &[f64]| -> Vec<CurvePoint> {
            vals.iter()
                .enumerate()
                .map(|(i, &v)| CurvePoint {
                    step: (i as u64 + 1) * 10,
                    episode: i as u64 + 1,
                    reward: v,
                    moving_avg_100: v,
                    epsilon_or_clipfrac: 0.0,
                })
                .collect()
        };
        let rows = aggregate_curves(&[mk(&[1.0, 2.0, 3.0]), mk(&[3.0, 4.0])]);
        assert_eq!(rows.len(), 2); // cut to shortest
        let (ep, sm, rm, rs, _, _) = rows[0];
        assert_eq!(ep, 1);
        assert!((sm - 10.0).abs() < 1e-12);
        assert!((rm - 2.0).abs() < 1e-12);
        assert!((rs - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fairness_rejects_lopsided_encoders() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = tiny_spec(dir.path());
        spec.representations = vec![Representation::Nl, Representation::Raw];
        spec.embed_dim = 128; // text encoder balloons past 2x
        let err = run_grid(&spec).unwrap_err();
        assert!(matches!(err, HarnessError::Fairness(_)), "{err}");
    }
}
