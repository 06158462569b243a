use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{
    adam_step, grad, select_action, AdamState, MlpParams, ReplayBuffer, TrainConfig, Transition,
};
use crate::env::Environment;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Where to dump diagnostics if the loss goes non-finite.
    pub diagnostics_dir: Option<PathBuf>,
    /// Warm start from previously trained weights and optimizer state.
    pub initial: Option<(MlpParams, AdamState)>,
}

/// One row per update phase.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainLogRow {
    pub global_step: usize,
    pub phase: usize,
    pub mean_eval_power_dbm: f64,
    pub mean_proxy_reward: f64,
    pub loss: f64,
    /// Episode seed of the evaluation segment, for paired-seed comparisons.
    pub eval_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainEvent {
    Step { global_step: usize },
    TargetSynced { global_step: usize },
    PhaseDone(TrainLogRow),
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: MlpParams,
    pub target: MlpParams,
    pub adam: AdamState,
    pub log: Vec<TrainLogRow>,
    pub steps: usize,
}

/// Stateful DQN learner driving one environment.
pub struct Trainer {
    cfg: TrainConfig,
    online: MlpParams,
    target: MlpParams,
    adam: AdamState,
    buffer: ReplayBuffer,
    rng: ChaCha8Rng,
    log: Vec<TrainLogRow>,
    global_step: usize,
    phase: usize,
    diagnostics_dir: Option<PathBuf>,
}

impl Trainer {
    pub fn new(cfg: TrainConfig, input_dim: usize, seed: u64, opts: TrainOptions) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = cfg.dims(input_dim);
        let (online, adam) = match opts.initial {
            Some((params, adam)) => {
                if params.dims() != dims {
                    return Err(Error::Checkpoint(format!(
                        "checkpoint architecture {:?} does not match config {:?}",
                        params.dims(),
                        dims
                    )));
                }
                (params, adam)
            }
            None => {
                let params = MlpParams::init(&dims, &mut rng);
                let adam = AdamState::new(&params);
                (params, adam)
            }
        };
        Ok(Trainer {
            target: online.clone(),
            online,
            adam,
            buffer: ReplayBuffer::new(cfg.replay_capacity),
            rng,
            log: Vec::new(),
            global_step: 0,
            phase: 0,
            diagnostics_dir: opts.diagnostics_dir,
            cfg,
        })
    }

    pub fn online(&self) -> &MlpParams {
        &self.online
    }

    pub fn target(&self) -> &MlpParams {
        &self.target
    }

    pub fn log(&self) -> &[TrainLogRow] {
        &self.log
    }

    /// Runs the full schedule. `observer` sees every event together with the
    /// current online and target networks.
    pub fn run<E, F, O>(&mut self, mut factory: F, mut observer: O) -> Result<()>
    where
        E: Environment,
        F: FnMut() -> Result<E>,
        O: FnMut(&TrainEvent, &MlpParams, &MlpParams),
    {
        let mut env = factory()?;
        let mut state = env.reset(self.rng.next_u64())?;
        for _ in 0..self.cfg.total_steps {
            self.global_step += 1;
            let q = self.online.forward(state.as_slice())?;
            let action = select_action(&q, self.cfg.epsilon_train, &mut self.rng);
            let out = env.step(action)?;
            let done = out.episode_done;
            // Episodes end on a time limit only; the state carries no clock,
            // so the last transition still bootstraps.
            self.buffer.push(Transition {
                state,
                action,
                reward: out.proxy_reward,
                next_state: out.next_state.clone(),
                terminal: false,
            });
            state = if done {
                env.reset(self.rng.next_u64())?
            } else {
                out.next_state
            };
            observer(
                &TrainEvent::Step {
                    global_step: self.global_step,
                },
                &self.online,
                &self.target,
            );

            if self
                .global_step
                .is_multiple_of(self.cfg.update_period_steps)
                && self.buffer.len() >= self.cfg.sample_block
            {
                let row = self.update_phase(&mut factory)?;
                observer(&TrainEvent::PhaseDone(row), &self.online, &self.target);
            }
            if self.global_step.is_multiple_of(self.cfg.target_sync_steps) {
                self.target = self.online.clone();
                observer(
                    &TrainEvent::TargetSynced {
                        global_step: self.global_step,
                    },
                    &self.online,
                    &self.target,
                );
            }
        }
        Ok(())
    }

    fn update_phase<E, F>(&mut self, factory: &mut F) -> Result<TrainLogRow>
    where
        E: Environment,
        F: FnMut() -> Result<E>,
    {
        self.phase += 1;
        let hp = self.cfg.adam();
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for _ in 0..self.cfg.outer_iterations {
            let mut block = self
                .buffer
                .sample_indices(self.cfg.sample_block, &mut self.rng);
            for _ in 0..self.cfg.epochs {
                block.shuffle(&mut self.rng);
                for chunk in block.chunks(self.cfg.minibatch) {
                    let batch: Vec<&Transition> =
                        chunk.iter().map(|&i| self.buffer.get(i)).collect();
                    let (g, loss) = grad(&self.online, &batch, &self.target, self.cfg.discount)?;
                    adam_step(&mut self.online, &mut self.adam, &g, &hp);
                    loss_sum += loss;
                    batches += 1;
                }
            }
        }
        let loss = loss_sum / batches as f64;
        if !loss.is_finite() || !self.online.is_finite() {
            return Err(self.non_finite(loss));
        }

        let eval_seed = self.rng.next_u64();
        let (power, reward) = self.evaluate(factory()?, eval_seed)?;
        let row = TrainLogRow {
            global_step: self.global_step,
            phase: self.phase,
            mean_eval_power_dbm: power,
            mean_proxy_reward: reward,
            loss,
            eval_seed,
        };
        self.log.push(row.clone());
        Ok(row)
    }

    /// Greedy rollout of `eval_steps` on a fresh episode.
    fn evaluate<E: Environment>(&self, mut env: E, seed: u64) -> Result<(f64, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut state = env.reset(seed)?;
        let (mut power, mut reward) = (0.0, 0.0);
        for _ in 0..self.cfg.eval_steps {
            let q = self.online.forward(state.as_slice())?;
            let out = env.step(select_action(&q, self.cfg.epsilon_eval, &mut rng))?;
            power += out.raw_power_dbm;
            reward += out.proxy_reward;
            state = if out.episode_done {
                env.reset(rng.next_u64())?
            } else {
                out.next_state
            };
        }
        let n = self.cfg.eval_steps as f64;
        Ok((power / n, reward / n))
    }

    fn non_finite(&self, loss: f64) -> Error {
        let report = serde_json::json!({
            "global_step": self.global_step,
            "phase": self.phase,
            "loss": loss.to_string(),
            "online_params_finite": self.online.is_finite(),
            "online_l2_norm": self.online.l2_norm().to_string(),
            "target_params_finite": self.target.is_finite(),
            "adam_step": self.adam.step,
            "replay_len": self.buffer.len(),
        });
        let detail = match &self.diagnostics_dir {
            Some(dir) => {
                let path = dir.join("diagnostics.json");
                match std::fs::create_dir_all(dir).and_then(|_| {
                    std::fs::write(&path, serde_json::to_string_pretty(&report).unwrap())
                }) {
                    Ok(()) => format!("diagnostics written to {}", path.display()),
                    Err(e) => format!("could not write diagnostics ({e}): {report}"),
                }
            }
            None => report.to_string(),
        };
        Error::NonFiniteLoss {
            step: self.global_step,
            phase: self.phase,
            detail,
        }
    }

    pub fn into_outcome(self) -> TrainOutcome {
        TrainOutcome {
            params: self.online,
            target: self.target,
            adam: self.adam,
            log: self.log,
            steps: self.global_step,
        }
    }
}

/// Trains a fresh network with the given schedule.
pub fn train<E, F>(factory: F, cfg: &TrainConfig, seed: u64) -> Result<TrainOutcome>
where
    E: Environment,
    F: FnMut() -> Result<E>,
{
    train_with(factory, cfg, seed, TrainOptions::default())
}

pub fn train_with<E, F>(
    mut factory: F,
    cfg: &TrainConfig,
    seed: u64,
    opts: TrainOptions,
) -> Result<TrainOutcome>
where
    E: Environment,
    F: FnMut() -> Result<E>,
{
    let dim = factory()?.state_dim();
    let mut trainer = Trainer::new(cfg.clone(), dim, seed, opts)?;
    trainer.run(factory, |_, _, _| {})?;
    Ok(trainer.into_outcome())
}
