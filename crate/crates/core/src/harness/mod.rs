//! Experiment orchestration: run the benchmark transfers end to end
//! (Phase I source training, Phase II alignment, Phase III adaptation),
//! fan (method, seed) pairs across a worker pool, and write deterministic
//! CSV outputs and plot data.

pub mod config;
pub mod setup;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::alignment::{fit_alignment_with, AlignmentDataset, AlignmentOptions, InterTaskMap};
use crate::apprentice::{
    collect_policy_data, learn_apprentice, ApprenticeConfig, ApprenticeOutcome,
};
use crate::baselines::{run_rl_no_transfer, run_uma_tl, DEFAULT_INIT_SAMPLES};
use crate::error::{Error, Result};
use crate::fqi::{fqi_train, LearningCurve, LinearQ};
use crate::mdp::{Policy, RandomPolicy, StateVector, Transition};
use crate::rng;
use crate::transfer::{run_transfer, ProjectedPolicy, TransferContext};

pub use config::{
    CollectionPolicy, EpsParams, ExperimentConfig, ExperimentId, FqiParams, Method, Scale,
};
pub use setup::{build_task, TaskSetup};

const SRC_SALT: u64 = 0x51;
const DATA_SALT: u64 = 0x52;
const MAP_SALT: u64 = 0x53;
const APP_SALT: u64 = 0x54;
const EVAL_SALT: u64 = 0x55;
const UMA_SALT: u64 = 0x56;
const RL_SALT: u64 = 0x57;
const OPT_SALT: u64 = 0x58;

/// Per-(method, seed) result of one experiment run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRecord {
    pub method: Method,
    pub seed: u64,
    /// (cumulative target-environment samples, windowed average reward).
    pub curve: Vec<(u64, f64)>,
    pub final_avg_reward: f64,
    /// Samples needed to reach the experiment's reward threshold.
    pub training_length: Option<u64>,
    /// Mean upright seconds per evaluation episode (bicycle only).
    pub balance_time: Option<f64>,
    /// Target-environment samples charged to the method. For TA-TL this is
    /// exactly the apprentice dataset size: no hidden target interaction.
    pub target_samples: u64,
}

/// Train the source-task Q function (Phase I).
pub fn train_source_q(cfg: &ExperimentConfig, seed: u64) -> Result<(LinearQ, LearningCurve)> {
    let setup = build_task(cfg)?;
    train_source_with(cfg, &setup, seed)
}

fn train_source_with(
    cfg: &ExperimentConfig,
    setup: &TaskSetup,
    seed: u64,
) -> Result<(LinearQ, LearningCurve)> {
    let mut env = setup.source_env.clone();
    let n_actions = env.spec().action_set.cardinality();
    let q0 = LinearQ::zeros(
        setup.source_basis.clone(),
        n_actions,
        cfg.fqi_source.learning_rate,
    );
    fqi_train(
        env.as_mut(),
        &cfg.fqi_source.config(),
        q0,
        rng::mix(seed, SRC_SALT),
    )
}

/// Collect the target-domain dataset shared by alignment and apprentice
/// learning (Phase II data).
pub fn collect_target_data(
    cfg: &ExperimentConfig,
    setup: &TaskSetup,
    source_q: Option<&LinearQ>,
    map: &InterTaskMap,
    seed: u64,
) -> Result<(Vec<Transition>, Vec<usize>)> {
    let mut env = setup.target_env.clone();
    let n = env.spec().action_set.cardinality();
    match cfg.collection {
        CollectionPolicy::Random => collect_policy_data(
            env.as_mut(),
            &RandomPolicy { n_actions: n },
            cfg.trials,
            cfg.steps_per_trial,
            rng::mix(seed, DATA_SALT),
        ),
        CollectionPolicy::SourceGreedy => {
            let q = source_q.ok_or_else(|| {
                Error::Precondition(
                    "source_greedy collection requires a trained source policy".into(),
                )
            })?;
            let policy = ProjectedPolicy {
                source_q: q,
                source_env: setup.source_env.as_ref(),
                target_env: setup.target_env.as_ref(),
                map,
            };
            collect_policy_data(
                env.as_mut(),
                &policy,
                cfg.trials,
                cfg.steps_per_trial,
                rng::mix(seed, DATA_SALT),
            )
        }
    }
}

/// Deterministic whole-trajectory subsample down to at most `max` states.
fn subsample(
    states: Vec<StateVector>,
    lens: Vec<usize>,
    max: usize,
) -> (Vec<StateVector>, Vec<usize>) {
    if states.len() <= max {
        return (states, lens);
    }
    let mut out = Vec::with_capacity(max);
    let mut out_lens = Vec::new();
    let mut start = 0usize;
    // take trajectories round-robin by a stride so coverage stays broad
    let keep_ratio = max as f64 / states.len() as f64;
    for &len in &lens {
        let take = ((len as f64 * keep_ratio).ceil() as usize).min(len);
        if take > 0 && out.len() + take <= max {
            // evenly strided within the trajectory
            let stride = (len as f64 / take as f64).max(1.0);
            let mut count = 0;
            let mut idx = 0.0;
            while count < take {
                out.push(states[start + (idx as usize).min(len - 1)].clone());
                idx += stride;
                count += 1;
            }
            out_lens.push(take);
        }
        start += len;
        if out.len() >= max {
            break;
        }
    }
    (out, out_lens)
}

/// Fit the inter-task map (Phase II). Same-domain tasks get the identity.
pub fn build_map(
    cfg: &ExperimentConfig,
    setup: &TaskSetup,
    target_data: &[Transition],
    target_lens: &[usize],
    seed: u64,
) -> Result<InterTaskMap> {
    if setup.identity_map {
        return Ok(InterTaskMap::identity(setup.source_env.spec().state_dim));
    }
    let mut source_env = setup.source_env.clone();
    let n = source_env.spec().action_set.cardinality();
    let (source_data, source_lens) = collect_policy_data(
        source_env.as_mut(),
        &RandomPolicy { n_actions: n },
        cfg.trials,
        cfg.steps_per_trial,
        rng::mix(seed, MAP_SALT),
    )?;
    let source_states: Vec<StateVector> = source_data
        .iter()
        .map(|t| setup.source_env.alignment_coords(&t.state))
        .collect();
    let target_states: Vec<StateVector> = target_data
        .iter()
        .map(|t| setup.target_env.alignment_coords(&t.state))
        .collect();
    let (source_states, source_lens) =
        subsample(source_states, source_lens, cfg.alignment_samples);
    let (target_states, target_lens) = subsample(
        target_states,
        target_lens.to_vec(),
        cfg.alignment_samples,
    );
    let data = AlignmentDataset {
        source_states,
        target_states,
        source_traj_lens: source_lens,
        target_traj_lens: target_lens,
    };
    let latent = if cfg.latent_dim == 0 {
        None
    } else {
        Some(cfg.latent_dim)
    };
    fit_alignment_with(
        &data,
        &AlignmentOptions {
            knn: cfg.knn,
            latent_dim: latent,
            round_trip_bound: cfg.round_trip_bound,
            skew_tol: 0.15,
        },
    )
}

/// TA-TL pipeline outputs the caller may want to persist.
pub struct TaTlRun {
    pub record: ExperimentRecord,
    pub outcome: ApprenticeOutcome,
    pub map: InterTaskMap,
    pub source_q: LinearQ,
}

fn run_ta_tl(cfg: &ExperimentConfig, setup: &TaskSetup, seed: u64) -> Result<TaTlRun> {
    let (source_q, _) = train_source_with(cfg, setup, seed)?;

    // zeta = fraction of the source task's optimal average reward magnitude
    let mut src_eval_env = setup.source_env.clone();
    let (source_opt_avg, _) = crate::fqi::evaluate_greedy(
        src_eval_env.as_mut(),
        &source_q,
        cfg.eval_episodes.min(20).max(1),
        setup.source_env.spec().horizon,
        rng::mix(seed, OPT_SALT),
    )?;
    let zeta = (cfg.zeta_fraction * source_opt_avg.abs()).max(1e-3);

    // Phase II: target data (reused for alignment) and the inter-task map.
    // For identity-map experiments the map exists before data collection,
    // so source-greedy collection is well defined.
    let identity_guess = InterTaskMap::identity(setup.source_env.spec().state_dim);
    let (data, lens) = if setup.identity_map {
        collect_target_data(cfg, setup, Some(&source_q), &identity_guess, seed)?
    } else {
        // cross-domain collection is random-policy by definition
        let mut env = setup.target_env.clone();
        let n = env.spec().action_set.cardinality();
        collect_policy_data(
            env.as_mut(),
            &RandomPolicy { n_actions: n },
            cfg.trials,
            cfg.steps_per_trial,
            rng::mix(seed, DATA_SALT),
        )?
    };
    let map = build_map(cfg, setup, &data, &lens, seed)?;

    // Phase III: apprentice loop with the projected-policy utility gap.
    let projected = ProjectedPolicy {
        source_q: &source_q,
        source_env: setup.source_env.as_ref(),
        target_env: setup.target_env.as_ref(),
        map: &map,
    };
    let app_cfg = ApprenticeConfig {
        trials: cfg.trials,
        steps_per_trial: cfg.steps_per_trial,
        utility_gap_tol: zeta,
        max_refits: cfg.max_refits,
    };
    let n_actions = setup.target_env.spec().action_set.cardinality();
    let random = RandomPolicy {
        n_actions,
    };
    let collect: &dyn Policy = match cfg.collection {
        CollectionPolicy::Random => &random,
        CollectionPolicy::SourceGreedy => &projected,
    };
    let mut app_env = setup.target_env.clone();
    let outcome = learn_apprentice(
        app_env.as_mut(),
        data,
        lens,
        collect,
        &projected,
        &setup.apprentice_basis,
        &app_cfg,
        &setup.apprentice_fit,
        rng::mix(seed, APP_SALT),
    )?;

    // evaluate the transfer after each apprentice round -> learning curve
    let mut curve = Vec::with_capacity(outcome.rounds.len());
    let mut balance_time = None;
    for (i, round) in outcome.rounds.iter().enumerate() {
        let ctx = TransferContext::new(
            source_q.clone(),
            setup.source_env.clone(),
            map.clone(),
            Box::new(round.model.clone()),
            setup.target_env.as_ref(),
        )?;
        let mut eval_env = setup.target_env.clone();
        let (trajs, rec) = run_transfer(
            &ctx,
            eval_env.as_mut(),
            cfg.eval_episodes,
            rng::mix(seed, EVAL_SALT),
            false,
        )?;
        curve.push((round.samples, rec.average_reward));
        if i + 1 == outcome.rounds.len()
            && cfg.experiment == ExperimentId::CartpoleToBicycle
        {
            let mean_steps =
                trajs.iter().map(|t| t.len() as f64).sum::<f64>() / trajs.len() as f64;
            balance_time = Some(mean_steps * crate::env::bicycle::DT);
        }
    }
    let final_avg_reward = curve.last().map(|&(_, r)| r).unwrap_or(f64::NEG_INFINITY);
    let record = ExperimentRecord {
        method: Method::TaTl,
        seed,
        curve,
        final_avg_reward,
        training_length: None,
        balance_time,
        target_samples: outcome.total_samples(),
    };
    Ok(TaTlRun {
        record,
        outcome,
        map,
        source_q,
    })
}

fn baseline_record(
    cfg: &ExperimentConfig,
    setup: &TaskSetup,
    method: Method,
    seed: u64,
    q: LinearQ,
    learning: LearningCurve,
) -> Result<ExperimentRecord> {
    let curve = learning.windowed(cfg.window);
    let final_avg_reward = learning.final_windowed(cfg.window);
    let balance_time = if cfg.experiment == ExperimentId::CartpoleToBicycle {
        let mut env = setup.target_env.clone();
        let (_, trajs) = crate::fqi::evaluate_greedy(
            env.as_mut(),
            &q,
            cfg.eval_episodes,
            setup.target_env.spec().horizon,
            rng::mix(seed, EVAL_SALT),
        )?;
        let mean_steps = trajs.iter().map(|t| t.len() as f64).sum::<f64>() / trajs.len() as f64;
        Some(mean_steps * crate::env::bicycle::DT)
    } else {
        None
    };
    Ok(ExperimentRecord {
        method,
        seed,
        target_samples: learning.total_samples(),
        curve,
        final_avg_reward,
        training_length: None,
        balance_time,
    })
}

fn run_uma(cfg: &ExperimentConfig, setup: &TaskSetup, seed: u64) -> Result<ExperimentRecord> {
    let (source_q, _) = train_source_with(cfg, setup, seed)?;
    let map = if setup.identity_map {
        InterTaskMap::identity(setup.source_env.spec().state_dim)
    } else {
        let mut env = setup.target_env.clone();
        let n = env.spec().action_set.cardinality();
        let (data, lens) = collect_policy_data(
            env.as_mut(),
            &RandomPolicy { n_actions: n },
            cfg.trials,
            cfg.steps_per_trial,
            rng::mix(seed, DATA_SALT),
        )?;
        build_map(cfg, setup, &data, &lens, seed)?
    };
    let mut fqi_cfg = cfg.fqi_target.config();
    fqi_cfg.epsilon = cfg.uma_eps.schedule();
    fqi_cfg.sample_budget = cfg.target_sample_budget;
    let mut source_env = setup.source_env.clone();
    let mut target_env = setup.target_env.clone();
    let (q, learning) = run_uma_tl(
        &source_q,
        source_env.as_mut(),
        &map,
        target_env.as_mut(),
        setup.target_basis.clone(),
        &fqi_cfg,
        DEFAULT_INIT_SAMPLES,
        rng::mix(seed, UMA_SALT),
    )?;
    baseline_record(cfg, setup, Method::UmaTl, seed, q, learning)
}

fn run_rl(cfg: &ExperimentConfig, setup: &TaskSetup, seed: u64) -> Result<ExperimentRecord> {
    let mut fqi_cfg = cfg.fqi_target.config();
    fqi_cfg.sample_budget = cfg.target_sample_budget;
    let mut target_env = setup.target_env.clone();
    let (q, learning) = run_rl_no_transfer(
        target_env.as_mut(),
        setup.target_basis.clone(),
        &fqi_cfg,
        rng::mix(seed, RL_SALT),
    )?;
    baseline_record(cfg, setup, Method::Rl, seed, q, learning)
}

/// Run one (method, seed) cell.
pub fn run_single(cfg: &ExperimentConfig, method: Method, seed: u64) -> Result<ExperimentRecord> {
    let setup = build_task(cfg)?;
    match method {
        Method::TaTl => Ok(run_ta_tl(cfg, &setup, seed)?.record),
        Method::UmaTl => run_uma(cfg, &setup, seed),
        Method::Rl => run_rl(cfg, &setup, seed),
    }
}

/// Run every (method, seed) pair on a worker pool and fill in the
/// cross-method training-length metric. Results are merged in sorted
/// (method, seed) order regardless of completion order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ExperimentRecord>> {
    cfg.validate()?;
    let cells: Vec<(Method, u64)> = cfg
        .methods
        .iter()
        .flat_map(|&m| cfg.seeds.iter().map(move |&s| (m, s)))
        .collect();
    let mut records = cells
        .par_iter()
        .map(|&(m, s)| run_single(cfg, m, s))
        .collect::<Result<Vec<_>>>()?;
    records.sort_by(|a, b| {
        a.method
            .as_str()
            .cmp(b.method.as_str())
            .then(a.seed.cmp(&b.seed))
    });
    assign_training_lengths(&mut records);
    Ok(records)
}

/// Threshold rule: 95% of the way from the worst observed curve value to
/// the best final windowed reward across methods. Reward scales differ per
/// experiment (and are often negative), so the threshold interpolates the
/// observed range instead of taking a naive percentage.
pub fn reward_threshold(records: &[ExperimentRecord]) -> f64 {
    let best_final = records
        .iter()
        .map(|r| r.final_avg_reward)
        .fold(f64::NEG_INFINITY, f64::max);
    let baseline = records
        .iter()
        .flat_map(|r| r.curve.iter().map(|&(_, v)| v))
        .fold(f64::INFINITY, f64::min);
    if !best_final.is_finite() || !baseline.is_finite() || best_final <= baseline {
        return best_final;
    }
    best_final - 0.05 * (best_final - baseline)
}

fn assign_training_lengths(records: &mut [ExperimentRecord]) {
    let threshold = reward_threshold(records);
    for r in records.iter_mut() {
        r.training_length = r
            .curve
            .iter()
            .find(|&&(_, v)| v >= threshold)
            .map(|&(s, _)| s);
    }
}

// ---------------------------------------------------------------------------
// summaries and file outputs
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: Method,
    pub seeds: usize,
    pub final_reward_mean: f64,
    pub final_reward_std: f64,
    pub training_length_mean: Option<f64>,
    pub training_length_std: Option<f64>,
    pub balance_time_mean: Option<f64>,
    pub balance_time_std: Option<f64>,
    /// mean training length relative to TA-TL's (sample-efficiency ratio).
    pub samples_vs_ta_tl: Option<f64>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Per-method mean/std across seeds plus sample-efficiency ratios.
pub fn summarize(records: &[ExperimentRecord]) -> Result<Vec<SummaryRow>> {
    if records.is_empty() {
        return Err(Error::Precondition("summarize needs records".into()));
    }
    let mut methods: Vec<Method> = records.iter().map(|r| r.method).collect();
    methods.sort_by_key(|m| m.as_str());
    methods.dedup();
    let ta_mean: Option<f64> = {
        let ls: Vec<f64> = records
            .iter()
            .filter(|r| r.method == Method::TaTl)
            .filter_map(|r| r.training_length.map(|l| l as f64))
            .collect();
        if ls.is_empty() {
            None
        } else {
            Some(mean_std(&ls).0)
        }
    };
    let mut rows = Vec::new();
    for m in methods {
        let group: Vec<&ExperimentRecord> =
            records.iter().filter(|r| r.method == m).collect();
        let finals: Vec<f64> = group.iter().map(|r| r.final_avg_reward).collect();
        let (fm, fs) = mean_std(&finals);
        let lens: Vec<f64> = group
            .iter()
            .filter_map(|r| r.training_length.map(|l| l as f64))
            .collect();
        let (lm, ls) = if lens.is_empty() {
            (None, None)
        } else {
            let (a, b) = mean_std(&lens);
            (Some(a), Some(b))
        };
        let bts: Vec<f64> = group.iter().filter_map(|r| r.balance_time).collect();
        let (bm, bs) = if bts.is_empty() {
            (None, None)
        } else {
            let (a, b) = mean_std(&bts);
            (Some(a), Some(b))
        };
        rows.push(SummaryRow {
            method: m,
            seeds: group.len(),
            final_reward_mean: fm,
            final_reward_std: fs,
            training_length_mean: lm,
            training_length_std: ls,
            balance_time_mean: bm,
            balance_time_std: bs,
            samples_vs_ta_tl: match (lm, ta_mean) {
                (Some(l), Some(t)) if t > 0.0 => Some(l / t),
                _ => None,
            },
        });
    }
    Ok(rows)
}

fn opt_str<T: std::fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map(|x| x.to_string()).unwrap_or_default()
}

pub fn records_to_csv(records: &[ExperimentRecord]) -> String {
    let mut s =
        String::from("method,seed,target_samples,final_avg_reward,training_length,balance_time\n");
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.method.as_str(),
            r.seed,
            r.target_samples,
            r.final_avg_reward,
            opt_str(&r.training_length),
            opt_str(&r.balance_time),
        );
    }
    s
}

pub fn curves_to_csv(records: &[ExperimentRecord]) -> String {
    let mut s = String::from("method,seed,samples,avg_reward\n");
    for r in records {
        for &(samples, reward) in &r.curve {
            let _ = writeln!(s, "{},{},{samples},{reward}", r.method.as_str(), r.seed);
        }
    }
    s
}

pub fn summary_to_csv(rows: &[SummaryRow]) -> String {
    let mut s = String::from(
        "method,seeds,final_reward_mean,final_reward_std,training_length_mean,\
         training_length_std,balance_time_mean,balance_time_std,samples_vs_ta_tl\n",
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.method.as_str(),
            r.seeds,
            r.final_reward_mean,
            r.final_reward_std,
            opt_str(&r.training_length_mean),
            opt_str(&r.training_length_std),
            opt_str(&r.balance_time_mean),
            opt_str(&r.balance_time_std),
            opt_str(&r.samples_vs_ta_tl),
        );
    }
    s
}

/// Parse records.csv back (for the `summarize` subcommand).
pub fn records_from_csv(text: &str) -> Result<Vec<ExperimentRecord>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(Error::Parse(format!("records.csv line {}: bad field count", i + 1)));
        }
        let parse_opt = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse()
                    .map(Some)
                    .map_err(|_| Error::Parse(format!("bad number '{s}'")))
            }
        };
        out.push(ExperimentRecord {
            method: Method::parse(f[0])?,
            seed: f[1]
                .parse()
                .map_err(|_| Error::Parse(format!("bad seed '{}'", f[1])))?,
            target_samples: f[2]
                .parse()
                .map_err(|_| Error::Parse(format!("bad sample count '{}'", f[2])))?,
            final_avg_reward: f[3]
                .parse()
                .map_err(|_| Error::Parse(format!("bad reward '{}'", f[3])))?,
            training_length: parse_opt(f[4])?.map(|v| v as u64),
            balance_time: parse_opt(f[5])?,
            curve: Vec::new(),
        });
    }
    Ok(out)
}

/// One plot-data file per figure panel. The average-reward panel carries a
/// per-method block of `samples,avg_reward_mean,avg_reward_lo,avg_reward_hi`
/// rows; the training-length (and, for the bicycle, balance-time) panel is
/// one `method,mean,std` row per method.
pub fn emit_plot_data(
    records: &[ExperimentRecord],
    experiment: ExperimentId,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    if records.is_empty() {
        return Ok(Vec::new());
    }
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();

    let mut methods: Vec<Method> = records.iter().map(|r| r.method).collect();
    methods.sort_by_key(|m| m.as_str());
    methods.dedup();

    let mut reward = String::new();
    for m in &methods {
        let group: Vec<&ExperimentRecord> = records.iter().filter(|r| r.method == *m).collect();
        let mut grid: Vec<u64> = group
            .iter()
            .flat_map(|r| r.curve.iter().map(|&(s, _)| s))
            .collect();
        grid.sort_unstable();
        grid.dedup();
        let _ = writeln!(reward, "# method={}", m.as_str());
        let _ = writeln!(reward, "samples,avg_reward_mean,avg_reward_lo,avg_reward_hi");
        for &g in &grid {
            let mut vals = Vec::with_capacity(group.len());
            for r in &group {
                // step interpolation: last curve value at or before g
                let mut v = r.curve.first().map(|&(_, v)| v).unwrap_or(0.0);
                for &(s, val) in &r.curve {
                    if s <= g {
                        v = val;
                    } else {
                        break;
                    }
                }
                vals.push(v);
            }
            let (mean, _) = mean_std(&vals);
            let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let _ = writeln!(reward, "{g},{mean},{lo},{hi}");
        }
    }
    let reward_path = out_dir.join(format!("{}_avg_reward.dat", experiment.as_str()));
    std::fs::write(&reward_path, reward)?;
    written.push(reward_path);

    let rows = summarize(records)?;
    let mut tl = String::from("method,mean,std\n");
    for r in &rows {
        let _ = writeln!(
            tl,
            "{},{},{}",
            r.method.as_str(),
            opt_str(&r.training_length_mean),
            opt_str(&r.training_length_std)
        );
    }
    let tl_path = out_dir.join(format!("{}_training_length.dat", experiment.as_str()));
    std::fs::write(&tl_path, tl)?;
    written.push(tl_path);

    if rows.iter().any(|r| r.balance_time_mean.is_some()) {
        let mut bt = String::from("method,mean,std\n");
        for r in &rows {
            let _ = writeln!(
                bt,
                "{},{},{}",
                r.method.as_str(),
                opt_str(&r.balance_time_mean),
                opt_str(&r.balance_time_std)
            );
        }
        let bt_path = out_dir.join(format!("{}_balance_time.dat", experiment.as_str()));
        std::fs::write(&bt_path, bt)?;
        written.push(bt_path);
    }
    Ok(written)
}

/// Run an experiment and write records.csv, curves.csv, summary.csv, the
/// resolved config and the plot data into `out_dir`.
pub fn run_experiment_to_dir(
    cfg: &ExperimentConfig,
    out_dir: &Path,
) -> Result<Vec<ExperimentRecord>> {
    let records = run_experiment(cfg)?;
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("records.csv"), records_to_csv(&records))?;
    std::fs::write(out_dir.join("curves.csv"), curves_to_csv(&records))?;
    std::fs::write(
        out_dir.join("summary.csv"),
        summary_to_csv(&summarize(&records)?),
    )?;
    std::fs::write(out_dir.join("config.txt"), cfg.emit())?;
    emit_plot_data(&records, cfg.experiment, out_dir)?;
    Ok(records)
}
