//! Rollouts, metrics, and the train / eval / sweep / export runners.
//!
//! Every file written here starts with the full config echo and the seed
//! (as `#` comment lines in CSV, as fields in JSON).

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use toml::Value;

use crate::channel::{angle_between, beam_pattern, look_angles, unit_direction, write_pattern_csv};
use crate::config::ExperimentConfig;
use crate::dqn::checkpoint::Checkpoint;
use crate::dqn::{self, MlpParams, TrainLogRow, TrainOptions, TrainOutcome};
use crate::env::{write_trace_csv, ActionIndex, Environment, TraceRow, TrackingEnv};
use crate::error::{Error, Result};
use crate::policies::{fixed_action, oracle_action, PolicyKind};
use crate::wire::{simulate_trajectory, write_trajectory_csv, ImpulseEvent, WindModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Mass,
    SpringK,
    Lookback,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::Mass => "mass",
            SweepAxis::SpringK => "spring_k",
            SweepAxis::Lookback => "lookback",
        }
    }

    /// Config key that the axis overrides.
    pub fn key(self) -> &'static str {
        match self {
            SweepAxis::Mass => "wire.mass_total_kg",
            SweepAxis::SpringK => "wire.spring_k_n_per_m",
            SweepAxis::Lookback => "env.lookback_s",
        }
    }

    pub fn default_values(self) -> Vec<f64> {
        match self {
            SweepAxis::Mass => vec![5.0, 10.0, 15.0, 20.0],
            SweepAxis::SpringK => vec![500.0, 1000.0, 2000.0, 4000.0],
            SweepAxis::Lookback => vec![0.02, 0.04, 0.06, 0.08, 0.1],
        }
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mass" => Ok(SweepAxis::Mass),
            "spring_k" => Ok(SweepAxis::SpringK),
            "lookback" => Ok(SweepAxis::Lookback),
            other => Err(Error::Validation(format!(
                "sweep.axis must be mass, spring_k, or lookback, got {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub repetitions: usize,
    pub policies: Vec<PolicyKind>,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Validation("sweep.values must not be empty".into()));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("sweep.values must be finite".into()));
        }
        if self.repetitions == 0 {
            return Err(Error::Validation(
                "sweep.repetitions must be positive".into(),
            ));
        }
        if self.policies.is_empty() {
            return Err(Error::Validation("sweep.policies must not be empty".into()));
        }
        Ok(())
    }
}

/// SplitMix64 finalizer; spreads `(base, tag)` into an independent seed that
/// still fits a TOML integer.
pub fn derive_seed(base: u64, tag: u64) -> u64 {
    let mut z = base ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    (z ^ (z >> 31)) >> 1
}

/// Episode seeds shared by every policy evaluated under `cfg`.
pub fn episode_seeds(cfg: &ExperimentConfig) -> Vec<u64> {
    (0..cfg.eval_episodes as u64)
        .map(|i| derive_seed(cfg.seed, 0xE7A1_0000 + i))
        .collect()
}

/// One greedy evaluation episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    pub seed: u64,
    pub impulse_time: Option<f64>,
    pub rows: Vec<TraceRow>,
}

impl EpisodeTrace {
    pub fn mean_power_dbm(&self) -> f64 {
        mean(self.rows.iter().map(|r| r.raw_power_dbm))
    }

    pub fn mean_angle_error_deg(&self) -> f64 {
        mean(self.rows.iter().map(|r| r.angle_error_deg))
    }

    /// Rows of the steps that start at or after the impulse and end within
    /// `window` seconds of it. Empty without an impulse.
    pub fn post_impulse_rows(&self, tau: f64, window: f64) -> &[TraceRow] {
        let Some(t) = self.impulse_time else {
            return &[];
        };
        // Step k (1-based) covers [(k-1) tau, k tau).
        let first = (t / tau + 1e-9).floor() as usize + 1;
        let len = (window / tau).round() as usize;
        let start = (first - 1).min(self.rows.len());
        let end = (start + len).min(self.rows.len());
        &self.rows[start..end]
    }

    pub fn post_impulse_power_dbm(&self, tau: f64, window: f64) -> Option<f64> {
        let rows = self.post_impulse_rows(tau, window);
        (!rows.is_empty()).then(|| mean(rows.iter().map(|r| r.raw_power_dbm)))
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs.iter().copied());
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Picks actions for a rollout.
#[derive(Debug, Clone, Copy)]
pub enum Controller<'a> {
    Oracle,
    Fixed,
    Greedy(&'a MlpParams),
}

impl<'a> Controller<'a> {
    pub fn new(policy: PolicyKind, net: Option<&'a MlpParams>) -> Result<Self> {
        match (policy, net) {
            (PolicyKind::Oracle, _) => Ok(Controller::Oracle),
            (PolicyKind::FixedBeam, _) => Ok(Controller::Fixed),
            (PolicyKind::DqnGreedy, Some(net)) => Ok(Controller::Greedy(net)),
            (PolicyKind::DqnGreedy, None) => {
                Err(Error::Validation("policy dqn needs a checkpoint".into()))
            }
        }
    }

    pub fn act(&self, env: &TrackingEnv, state: &crate::env::StateVector) -> Result<ActionIndex> {
        match self {
            Controller::Oracle => oracle_action(
                env.node_position(),
                env.rx_position(),
                env.beam(),
                env.setup().env.refine_angle,
            ),
            Controller::Fixed => Ok(fixed_action()),
            Controller::Greedy(net) => {
                let q = net.forward(state.as_slice())?;
                Ok(ActionIndex::new(dqn::argmax(&q)).expect("nine outputs"))
            }
        }
    }
}

/// Runs one full episode with `controller`.
pub fn rollout(
    env: &mut TrackingEnv,
    controller: Controller<'_>,
    seed: u64,
) -> Result<EpisodeTrace> {
    let mut state = env.reset(seed)?;
    let mut rows = Vec::with_capacity(env.setup().env.episode_steps());
    loop {
        let action = controller.act(env, &state)?;
        let out = env.step(action)?;
        let node = env.node_position();
        let beam = env.beam();
        let (zen, azi, _) = look_angles(node, env.rx_position())?;
        rows.push(TraceRow {
            step: env.step_index(),
            time_s: env.time(),
            action,
            theta_s_deg: beam.theta_s.to_degrees(),
            phi_s_deg: beam.phi_s.to_degrees(),
            raw_power_dbm: out.raw_power_dbm,
            optimal_power_dbm: out.optimal_power_dbm,
            proxy_reward: out.proxy_reward,
            node,
            angle_error_deg: angle_between(beam.direction(), unit_direction(zen, azi)).to_degrees(),
        });
        if out.episode_done {
            break;
        }
        state = out.next_state;
    }
    Ok(EpisodeTrace {
        seed,
        impulse_time: env.schedule().impulse_time,
        rows,
    })
}

/// Rolls out `policy` on each seed.
pub fn evaluate_policy(
    cfg: &ExperimentConfig,
    policy: PolicyKind,
    net: Option<&MlpParams>,
    seeds: &[u64],
) -> Result<Vec<EpisodeTrace>> {
    let controller = Controller::new(policy, net)?;
    let mut env = TrackingEnv::new(cfg.setup())?;
    seeds
        .iter()
        .map(|&s| rollout(&mut env, controller, s))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub policy: String,
    pub seed: u64,
    pub episodes: usize,
    pub mean_power_dbm: f64,
    /// Mean over episodes whose post-impulse window is non-empty.
    pub mean_power_post_impulse_dbm: Option<f64>,
    pub post_impulse_episodes: usize,
    pub mean_angle_error_deg: f64,
    pub mean_optimal_power_dbm: f64,
    pub episode_seeds: Vec<u64>,
    pub episode_mean_power_dbm: Vec<f64>,
    pub episode_post_impulse_dbm: Vec<Option<f64>>,
    pub config_echo: Vec<String>,
}

impl MetricsRecord {
    pub fn from_traces(
        cfg: &ExperimentConfig,
        policy: PolicyKind,
        traces: &[EpisodeTrace],
    ) -> Result<Self> {
        if traces.is_empty() {
            return Err(Error::EmptyMetrics);
        }
        let tau = cfg.env.tau;
        let window = cfg.post_impulse_window;
        let per_ep: Vec<f64> = traces.iter().map(EpisodeTrace::mean_power_dbm).collect();
        let post: Vec<Option<f64>> = traces
            .iter()
            .map(|t| t.post_impulse_power_dbm(tau, window))
            .collect();
        let post_vals: Vec<f64> = post.iter().flatten().copied().collect();
        Ok(MetricsRecord {
            policy: policy.label().to_string(),
            seed: cfg.seed,
            episodes: traces.len(),
            mean_power_dbm: mean(per_ep.iter().copied()),
            mean_power_post_impulse_dbm: (!post_vals.is_empty())
                .then(|| mean(post_vals.iter().copied())),
            post_impulse_episodes: post_vals.len(),
            mean_angle_error_deg: mean(
                traces
                    .iter()
                    .flat_map(|t| t.rows.iter().map(|r| r.angle_error_deg)),
            ),
            mean_optimal_power_dbm: mean(
                traces
                    .iter()
                    .flat_map(|t| t.rows.iter().map(|r| r.optimal_power_dbm)),
            ),
            episode_seeds: traces.iter().map(|t| t.seed).collect(),
            episode_mean_power_dbm: per_ep,
            episode_post_impulse_dbm: post,
            config_echo: cfg.echo_lines(),
        })
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("partial");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Writes a CSV preceded by the config echo and seed as `#` comment lines.
fn write_csv_with_header(
    path: &Path,
    cfg: &ExperimentConfig,
    body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>,
) -> Result<()> {
    let io = |e| Error::io(path, e);
    let file = fs::File::create(path).map_err(io)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "# seed = {}", cfg.seed).map_err(io)?;
    for line in cfg.echo_text().lines() {
        writeln!(w, "# {line}").map_err(io)?;
    }
    body(&mut w).map_err(io)?;
    w.flush().map_err(io)
}

pub fn write_train_log<W: Write + ?Sized>(
    out: &mut W,
    rows: &[TrainLogRow],
) -> std::io::Result<()> {
    writeln!(
        out,
        "global_step,phase,mean_eval_power_dbm,mean_proxy_reward,loss"
    )?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.global_step, r.phase, r.mean_eval_power_dbm, r.mean_proxy_reward, r.loss
        )?;
    }
    Ok(())
}

/// Loads a checkpoint and checks it against the configured architecture.
pub fn load_checkpoint(cfg: &ExperimentConfig, path: &Path) -> Result<Checkpoint> {
    let ck = Checkpoint::load(path)?;
    let want = cfg.train.dims(cfg.env.state_dim());
    let got = ck.params.dims();
    if got != want {
        return Err(Error::Checkpoint(format!(
            "architecture mismatch: checkpoint {got:?}, config {want:?}"
        )));
    }
    Ok(ck)
}

#[derive(Debug, Clone, Serialize)]
struct CheckpointSidecar<'a> {
    format: &'a str,
    version: u32,
    seed: u64,
    steps: usize,
    dims: Vec<usize>,
    update_phases: usize,
    update_period_steps: usize,
    target_sync_steps: usize,
    total_steps: usize,
    config_echo: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub seed: u64,
    pub steps: usize,
    pub update_phases: usize,
    pub final_eval_power_dbm: Option<f64>,
    pub final_loss: Option<f64>,
    pub wall_time_s: f64,
    pub checkpoint: PathBuf,
    pub log: PathBuf,
    pub config_echo: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct TrainArtifacts {
    pub checkpoint: PathBuf,
    pub log: PathBuf,
    pub summary: PathBuf,
    pub outcome: TrainOutcome,
}

/// Trains under `cfg` in memory, optionally resuming from a checkpoint.
pub fn train_network(
    cfg: &ExperimentConfig,
    resume: Option<&Checkpoint>,
    diagnostics: Option<&Path>,
) -> Result<TrainOutcome> {
    let setup = cfg.setup();
    TrackingEnv::new(setup.clone())?;
    let opts = TrainOptions {
        diagnostics_dir: diagnostics.map(Path::to_path_buf),
        initial: resume.map(|ck| (ck.params.clone(), ck.adam.clone())),
    };
    dqn::train_with(
        || TrackingEnv::new(setup.clone()),
        &cfg.train,
        cfg.seed,
        opts,
    )
}

/// Trains and writes `checkpoint.txt`, `checkpoint.json`, `train_log.csv`,
/// and `train_summary.json` into the output directory.
pub fn run_train(cfg: &ExperimentConfig, resume: Option<&Path>) -> Result<TrainArtifacts> {
    let out = &cfg.output_dir;
    create_dir(out)?;
    let resume = resume.map(|p| load_checkpoint(cfg, p)).transpose()?;
    let prior_steps = resume.as_ref().map_or(0, |ck| ck.step);
    let started = Instant::now();
    let outcome = train_network(cfg, resume.as_ref(), Some(out))?;
    let wall = started.elapsed().as_secs_f64();

    let steps = prior_steps + outcome.steps;
    let ck = Checkpoint {
        params: outcome.params.clone(),
        adam: outcome.adam.clone(),
        step: steps,
        config_echo: cfg.echo_text(),
    };
    let ck_path = out.join("checkpoint.txt");
    write_atomic(&ck_path, ck.to_text().as_bytes())?;
    write_json(
        &out.join("checkpoint.json"),
        &CheckpointSidecar {
            format: dqn::checkpoint::MAGIC,
            version: dqn::checkpoint::VERSION,
            seed: cfg.seed,
            steps,
            dims: outcome.params.dims(),
            update_phases: outcome.log.len(),
            update_period_steps: cfg.train.update_period_steps,
            target_sync_steps: cfg.train.target_sync_steps,
            total_steps: cfg.train.total_steps,
            config_echo: cfg.echo_lines(),
        },
    )?;
    let log_path = out.join("train_log.csv");
    write_csv_with_header(&log_path, cfg, |w| write_train_log(w, &outcome.log))?;
    let summary_path = out.join("train_summary.json");
    write_json(
        &summary_path,
        &TrainSummary {
            seed: cfg.seed,
            steps,
            update_phases: outcome.log.len(),
            final_eval_power_dbm: outcome.log.last().map(|r| r.mean_eval_power_dbm),
            final_loss: outcome.log.last().map(|r| r.loss),
            wall_time_s: wall,
            checkpoint: ck_path.clone(),
            log: log_path.clone(),
            config_echo: cfg.echo_lines(),
        },
    )?;
    Ok(TrainArtifacts {
        checkpoint: ck_path,
        log: log_path,
        summary: summary_path,
        outcome,
    })
}

#[derive(Debug, Clone)]
pub struct EvalArtifacts {
    pub metrics: MetricsRecord,
    pub metrics_path: PathBuf,
    pub traces: Vec<PathBuf>,
}

/// Greedy evaluation on the config's paired episode seeds. Writes
/// `eval_<policy>.json` and one `trace_<policy>_ep<i>.csv` per episode.
pub fn run_eval(
    cfg: &ExperimentConfig,
    policy: PolicyKind,
    checkpoint: Option<&Path>,
) -> Result<EvalArtifacts> {
    if cfg.eval_episodes == 0 {
        return Err(Error::EmptyMetrics);
    }
    let ck = match (policy, checkpoint) {
        (PolicyKind::DqnGreedy, Some(p)) => Some(load_checkpoint(cfg, p)?),
        (PolicyKind::DqnGreedy, None) => {
            return Err(Error::Validation("policy dqn needs --checkpoint".into()));
        }
        _ => None,
    };
    let seeds = episode_seeds(cfg);
    let traces = evaluate_policy(cfg, policy, ck.as_ref().map(|c| &c.params), &seeds)?;
    let metrics = MetricsRecord::from_traces(cfg, policy, &traces)?;

    let out = &cfg.output_dir;
    create_dir(out)?;
    let label = policy.label();
    let mut trace_paths = Vec::new();
    for (i, t) in traces.iter().enumerate() {
        let path = out.join(format!("trace_{label}_ep{i}.csv"));
        write_csv_with_header(&path, cfg, |w| {
            writeln!(w, "# episode_seed = {}", t.seed)?;
            writeln!(
                w,
                "# impulse_time_s = {}",
                t.impulse_time.map_or("none".into(), |x| x.to_string())
            )?;
            write_trace_csv(w, &t.rows)
        })?;
        trace_paths.push(path);
    }
    let metrics_path = out.join(format!("eval_{label}.json"));
    write_json(&metrics_path, &metrics)?;
    Ok(EvalArtifacts {
        metrics,
        metrics_path,
        traces: trace_paths,
    })
}

/// Outcome of one (value, repetition, policy) sweep cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub axis: SweepAxis,
    pub value: f64,
    pub repetition: usize,
    pub metrics: MetricsRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub value: f64,
    pub repetition: usize,
    pub policy: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub value: f64,
    pub policy: String,
    pub repetitions: usize,
    pub mean_power_dbm: f64,
    pub std_power_dbm: f64,
    pub mean_post_impulse_dbm: Option<f64>,
    pub std_post_impulse_dbm: Option<f64>,
    pub mean_angle_error_deg: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub seed: u64,
    pub cells: Vec<CellRecord>,
    pub failures: Vec<CellFailure>,
    pub summary: Vec<SummaryRow>,
    /// Cells loaded from disk instead of recomputed.
    pub reused: usize,
    pub config_echo: Vec<String>,
}

/// Directory holding one sweep's cell files and summary.
pub fn sweep_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.output_dir
        .join(format!("sweep_{}", cfg.sweep.axis.as_str()))
}

fn cell_config(
    cfg: &ExperimentConfig,
    vi: usize,
    value: f64,
    rep: usize,
) -> Result<ExperimentConfig> {
    let axis = cfg.sweep.axis;
    cfg.with_override(axis.key(), Value::Float(value), "sweep")?
        .with_override(
            "seed",
            Value::Integer(derive_seed(cfg.seed, ((vi as u64) << 32) | rep as u64) as i64),
            "derived:sweep-cell",
        )
}

/// Runs every (value, repetition, policy) cell. Completed cells found on disk
/// are reused, failed cells are recorded, and the sweep carries on.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    let spec = &cfg.sweep;
    spec.validate()?;
    let dir = sweep_dir(cfg);
    create_dir(&dir)?;
    let mut cells = Vec::new();
    let mut failures = Vec::new();
    let mut reused = 0;

    for (vi, &value) in spec.values.iter().enumerate() {
        for rep in 0..spec.repetitions {
            let stem = format!("cell_v{vi}_r{rep}");
            let cell_cfg = match cell_config(cfg, vi, value, rep) {
                Ok(c) => c,
                Err(e) => {
                    for p in &spec.policies {
                        failures.push(CellFailure {
                            value,
                            repetition: rep,
                            policy: p.label().into(),
                            error: e.to_string(),
                        });
                    }
                    continue;
                }
            };
            let mut net: Option<MlpParams> = None;
            for &policy in &spec.policies {
                let path = dir.join(format!("{stem}_{}.json", policy.label()));
                if let Some(rec) = read_cell(&path) {
                    cells.push(rec);
                    reused += 1;
                    continue;
                }
                let result = (|| -> Result<CellRecord> {
                    if policy == PolicyKind::DqnGreedy && net.is_none() {
                        net = Some(cell_network(
                            &cell_cfg,
                            &dir.join(format!("{stem}_checkpoint.txt")),
                        )?);
                    }
                    let traces = evaluate_policy(
                        &cell_cfg,
                        policy,
                        net.as_ref(),
                        &episode_seeds(&cell_cfg),
                    )?;
                    Ok(CellRecord {
                        axis: spec.axis,
                        value,
                        repetition: rep,
                        metrics: MetricsRecord::from_traces(&cell_cfg, policy, &traces)?,
                    })
                })();
                match result {
                    Ok(rec) => {
                        write_json(&path, &rec)?;
                        cells.push(rec);
                    }
                    Err(e) => failures.push(CellFailure {
                        value,
                        repetition: rep,
                        policy: policy.label().into(),
                        error: e.to_string(),
                    }),
                }
            }
        }
    }

    let summary = summarize(spec, &cells);
    let result = SweepResult {
        axis: spec.axis,
        seed: cfg.seed,
        cells,
        failures,
        summary,
        reused,
        config_echo: cfg.echo_lines(),
    };
    write_json(&dir.join("summary.json"), &result)?;
    write_csv_with_header(&dir.join("summary.csv"), cfg, |w| {
        writeln!(
            w,
            "value,policy,repetitions,mean_power_dbm,std_power_dbm,mean_post_impulse_dbm,std_post_impulse_dbm,mean_angle_error_deg"
        )?;
        let opt = |x: Option<f64>| x.map_or(String::new(), |v| v.to_string());
        for r in &result.summary {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                r.value,
                r.policy,
                r.repetitions,
                r.mean_power_dbm,
                r.std_power_dbm,
                opt(r.mean_post_impulse_dbm),
                opt(r.std_post_impulse_dbm),
                r.mean_angle_error_deg
            )?;
        }
        Ok(())
    })?;
    Ok(result)
}

fn read_cell(path: &Path) -> Option<CellRecord> {
    let text = fs::read_to_string(path).ok()?;
    serde_json::from_str(&text).ok()
}

/// Trains (or reloads) the network for one sweep cell.
fn cell_network(cfg: &ExperimentConfig, path: &Path) -> Result<MlpParams> {
    if path.exists() {
        if let Ok(ck) = load_checkpoint(cfg, path) {
            if ck.config_echo == cfg.echo_text() {
                return Ok(ck.params);
            }
        }
    }
    let outcome = train_network(cfg, None, path.parent())?;
    let ck = Checkpoint {
        params: outcome.params,
        adam: outcome.adam,
        step: outcome.steps,
        config_echo: cfg.echo_text(),
    };
    write_atomic(path, ck.to_text().as_bytes())?;
    Ok(ck.params)
}

fn summarize(spec: &SweepSpec, cells: &[CellRecord]) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    for &value in &spec.values {
        for policy in &spec.policies {
            let group: Vec<&CellRecord> = cells
                .iter()
                .filter(|c| c.value == value && c.metrics.policy == policy.label())
                .collect();
            if group.is_empty() {
                continue;
            }
            let power: Vec<f64> = group.iter().map(|c| c.metrics.mean_power_dbm).collect();
            let post: Vec<f64> = group
                .iter()
                .filter_map(|c| c.metrics.mean_power_post_impulse_dbm)
                .collect();
            rows.push(SummaryRow {
                value,
                policy: policy.label().into(),
                repetitions: group.len(),
                mean_power_dbm: mean(power.iter().copied()),
                std_power_dbm: std_dev(&power),
                mean_post_impulse_dbm: (!post.is_empty()).then(|| mean(post.iter().copied())),
                std_post_impulse_dbm: (!post.is_empty()).then(|| std_dev(&post)),
                mean_angle_error_deg: mean(group.iter().map(|c| c.metrics.mean_angle_error_deg)),
            });
        }
    }
    rows
}

/// Writes `trajectory.csv`: the wire from equilibrium with the configured
/// impulse, sampled per the trajectory settings.
pub fn run_trajectory(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let spec = &cfg.trajectory;
    let mut wire = cfg.wire.clone();
    let wind = if spec.with_wind {
        cfg.wind.clone()
    } else {
        wire.wind_diffusion = crate::Mat3::zeros();
        WindModel::calm()
    };
    let impulses: Vec<ImpulseEvent> = spec
        .with_impulse
        .then_some(ImpulseEvent {
            point: cfg.env.impulse_point,
            force: cfg.env.impulse_force,
            apply_time: spec.impulse_time,
        })
        .into_iter()
        .collect();
    let samples = simulate_trajectory(
        &wire,
        &wind,
        &impulses,
        spec.duration,
        cfg.env.physics_dt,
        spec.sample_interval,
        cfg.seed,
    )?;
    create_dir(&cfg.output_dir)?;
    let path = cfg.output_dir.join("trajectory.csv");
    write_csv_with_header(&path, cfg, |w| write_trajectory_csv(w, &samples))?;
    Ok(path)
}

/// Writes `pattern.csv`: transmit gain over a square grid of relative angles.
pub fn run_pattern(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let spec = &cfg.pattern;
    let n = (spec.span_deg / spec.step_deg).floor() as i64;
    let grid: Vec<f64> = (-n..=n).map(|k| k as f64 * spec.step_deg).collect();
    let samples = beam_pattern(
        spec.beam,
        &cfg.array,
        cfg.channel.wavelength,
        grid.iter().copied(),
        &grid,
    )?;
    create_dir(&cfg.output_dir)?;
    let path = cfg.output_dir.join("pattern.csv");
    write_csv_with_header(&path, cfg, |w| write_pattern_csv(w, &samples))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Overrides;

    fn cfg(text: &str) -> ExperimentConfig {
        ExperimentConfig::parse(text, &Overrides::new()).unwrap()
    }

    fn trace(impulse: Option<f64>, n: usize) -> EpisodeTrace {
        EpisodeTrace {
            seed: 0,
            impulse_time: impulse,
            rows: (1..=n)
                .map(|k| TraceRow {
                    step: k,
                    time_s: k as f64 * 0.01,
                    action: ActionIndex::CENTER,
                    theta_s_deg: 90.0,
                    phi_s_deg: 90.0,
                    raw_power_dbm: k as f64,
                    optimal_power_dbm: 0.0,
                    proxy_reward: 0.0,
                    node: crate::Vec3::zeros(),
                    angle_error_deg: 0.0,
                })
                .collect(),
        }
    }

    #[test]
    fn post_impulse_window_is_thirty_steps() {
        let t = trace(Some(1.0), 300);
        let rows = t.post_impulse_rows(0.01, 0.3);
        assert_eq!(rows.len(), 30);
        assert_eq!(rows[0].step, 101);
        assert_eq!(rows[29].step, 130);
        // Mean of 101..=130.
        assert_eq!(t.post_impulse_power_dbm(0.01, 0.3), Some(115.5));
    }

    #[test]
    fn window_truncates_at_episode_end() {
        assert!(trace(Some(3.0), 300)
            .post_impulse_rows(0.01, 0.3)
            .is_empty());
        assert_eq!(trace(Some(2.9), 300).post_impulse_rows(0.01, 0.3).len(), 10);
        assert!(trace(None, 300).post_impulse_power_dbm(0.01, 0.3).is_none());
    }

    #[test]
    fn empty_metrics() {
        let c = cfg("");
        assert!(matches!(
            MetricsRecord::from_traces(&c, PolicyKind::Oracle, &[]),
            Err(Error::EmptyMetrics)
        ));
        let zero = cfg("eval.episodes = 0");
        assert!(matches!(
            run_eval(&zero, PolicyKind::Oracle, None),
            Err(Error::EmptyMetrics)
        ));
    }

    #[test]
    fn derived_seeds_are_distinct_and_toml_safe() {
        let seeds: std::collections::BTreeSet<u64> = (0..1000).map(|i| derive_seed(7, i)).collect();
        assert_eq!(seeds.len(), 1000);
        assert!(seeds.iter().all(|&s| s <= i64::MAX as u64));
    }

    #[test]
    fn sweep_spec_validation() {
        let spec = SweepSpec {
            axis: SweepAxis::Mass,
            values: vec![],
            repetitions: 1,
            policies: vec![PolicyKind::Oracle],
        };
        assert!(spec.validate().is_err());
        assert!(ExperimentConfig::parse("sweep.values = []", &Overrides::new()).is_err());
    }
}
