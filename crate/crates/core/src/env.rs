//! Beam-tracking environment: one step advances the wire by one tracking
//! interval, applies a discrete steering action, and observes the wire through
//! a sensor buffer that lags by the look-back time.

use std::collections::VecDeque;
use std::io::Write;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel::{received_power, ArrayConfig, BeamOrientation, ChannelConfig};
use crate::error::{Error, Result};
use crate::wire::{self, ImpulseEvent, PointId, WindModel, WireParams, WireState};
use crate::Vec3;

/// Number of discrete actions.
pub const N_ACTIONS: usize = 9;

/// One of the nine `(d_theta, d_phi)` steps in `{-A, 0, +A}^2`, enumerated
/// row-major with `d_theta` varying slowest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ActionIndex(u8);

impl ActionIndex {
    pub const CENTER: ActionIndex = ActionIndex(4);

    pub fn new(index: usize) -> Option<Self> {
        (index < N_ACTIONS).then_some(ActionIndex(index as u8))
    }

    pub fn all() -> impl Iterator<Item = ActionIndex> {
        (0..N_ACTIONS as u8).map(ActionIndex)
    }

    /// Steps in units of the refinement angle, each in `{-1, 0, 1}`.
    pub fn from_steps(d_theta: i8, d_phi: i8) -> Option<Self> {
        if !(-1..=1).contains(&d_theta) || !(-1..=1).contains(&d_phi) {
            return None;
        }
        Some(ActionIndex(((d_theta + 1) * 3 + (d_phi + 1)) as u8))
    }

    pub fn steps(self) -> (i8, i8) {
        let i = self.0 as i8;
        (i / 3 - 1, i % 3 - 1)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl std::fmt::Display for ActionIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub fn apply_action(
    beam: BeamOrientation,
    action: ActionIndex,
    refine_angle: f64,
) -> BeamOrientation {
    let (dt, dp) = action.steps();
    BeamOrientation::new(
        beam.theta_s + dt as f64 * refine_angle,
        beam.phi_s + dp as f64 * refine_angle,
    )
}

/// `clip((raw - offset) / scale, -1, 1)`.
pub fn proxy_reward(raw_dbm: f64, offset_dbm: f64, scale_db: f64) -> f64 {
    ((raw_dbm - offset_dbm) / scale_db).clamp(-1.0, 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    /// Beam-tracking interval, s.
    pub tau: f64,
    /// Look-back time, s. Must be an integer multiple of `tau`.
    pub lookback: f64,
    pub episode_duration: f64,
    /// Refinement angle per action step, rad.
    pub refine_angle: f64,
    /// Point carrying the transmitter.
    pub tx_point: PointId,
    /// Points whose delayed positions/velocities form the observation, in order.
    pub sense_points: Vec<PointId>,
    pub reward_offset_dbm: f64,
    pub reward_scale_db: f64,
    pub impulse_enabled: bool,
    pub impulse_times: Vec<f64>,
    pub impulse_point: PointId,
    pub impulse_force: Vec3,
    /// Physics substep, s. Must divide `tau`.
    pub physics_dt: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            tau: 0.01,
            lookback: 0.02,
            episode_duration: 3.0,
            refine_angle: 1f64.to_radians(),
            tx_point: PointId::new(10),
            sense_points: vec![PointId::new(10)],
            reward_offset_dbm: -48.0,
            reward_scale_db: 5.0,
            impulse_enabled: false,
            impulse_times: vec![1.0, 2.0, 3.0],
            impulse_point: PointId::new(4),
            impulse_force: Vec3::new(0.0, 0.0, 470.0),
            physics_dt: 1e-3,
        }
    }
}

fn integer_ratio(num: f64, den: f64) -> Option<usize> {
    let ratio = num / den;
    let rounded = ratio.round();
    ((ratio - rounded).abs() < 1e-6 && rounded >= 0.0).then_some(rounded as usize)
}

impl EnvConfig {
    pub fn lag_steps(&self) -> usize {
        integer_ratio(self.lookback, self.tau).expect("validated lookback")
    }

    pub fn substeps(&self) -> usize {
        integer_ratio(self.tau, self.physics_dt).expect("validated substep")
    }

    pub fn episode_steps(&self) -> usize {
        (self.episode_duration / self.tau).round() as usize
    }

    pub fn state_dim(&self) -> usize {
        6 * self.sense_points.len() + 3
    }

    pub fn validate(&self, n_points: usize) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(Error::Validation("tau must be positive".into()));
        }
        if !(self.lookback >= 0.0) || integer_ratio(self.lookback, self.tau).is_none() {
            return Err(Error::Validation("lookback not a multiple of tau".into()));
        }
        if !(self.physics_dt > 0.0)
            || integer_ratio(self.tau, self.physics_dt).is_none_or(|s| s == 0)
        {
            return Err(Error::Validation("physics substep must divide tau".into()));
        }
        if !(self.episode_duration >= self.tau) {
            return Err(Error::Validation(
                "episode duration shorter than one interval".into(),
            ));
        }
        if !(self.refine_angle > 0.0) {
            return Err(Error::Validation("refine angle must be positive".into()));
        }
        if !(self.reward_scale_db > 0.0) {
            return Err(Error::Validation("reward scale must be positive".into()));
        }
        if !self.reward_offset_dbm.is_finite() {
            return Err(Error::Validation("reward offset must be finite".into()));
        }
        let in_range = |p: PointId| p.get() <= n_points;
        if !in_range(self.tx_point) {
            return Err(Error::Validation(format!(
                "tx point {} outside 1..{n_points}",
                self.tx_point
            )));
        }
        if self.sense_points.is_empty() {
            return Err(Error::Validation("sense points must not be empty".into()));
        }
        if let Some(p) = self.sense_points.iter().find(|p| !in_range(**p)) {
            return Err(Error::Validation(format!(
                "sense point {p} outside 1..{n_points}"
            )));
        }
        if !self.sense_points.contains(&self.tx_point) {
            return Err(Error::Validation(
                "tx point must be one of the sense points".into(),
            ));
        }
        if self.impulse_enabled {
            if self.impulse_times.is_empty() {
                return Err(Error::Validation(
                    "impulse enabled but no impulse times".into(),
                ));
            }
            for &t in &self.impulse_times {
                ImpulseEvent {
                    point: self.impulse_point,
                    force: self.impulse_force,
                    apply_time: t,
                }
                .validate(n_points)?;
            }
        }
        Ok(())
    }
}

/// Everything needed to build a [`TrackingEnv`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingSetup {
    pub wire: WireParams,
    pub wind: WindModel,
    pub channel: ChannelConfig,
    pub array: ArrayConfig,
    pub env: EnvConfig,
}

impl TrackingSetup {
    pub fn validate(&self) -> Result<()> {
        self.wire.validate()?;
        self.wire.check_stability(self.env.physics_dt)?;
        self.channel.validate()?;
        self.array.validate()?;
        self.env.validate(self.wire.n_points)
    }
}

/// Per-episode randomness.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeSchedule {
    /// When the impulse hits, if this episode has one.
    pub impulse_time: Option<f64>,
    pub noise_seed: u64,
}

impl EpisodeSchedule {
    pub fn draw(env: &EnvConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let impulse_time = env
            .impulse_enabled
            .then(|| env.impulse_times[rng.random_range(0..env.impulse_times.len())]);
        EpisodeSchedule {
            impulse_time,
            noise_seed: rng.next_u64(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorSnapshot {
    pub time: f64,
    /// One entry per tracked point, in the ring's point order.
    pub positions: Vec<Vec3>,
    pub velocities: Vec<Vec3>,
}

impl SensorSnapshot {
    pub fn capture(state: &WireState, points: &[PointId]) -> Self {
        SensorSnapshot {
            time: state.time,
            positions: points.iter().map(|&p| state.position(p)).collect(),
            velocities: points.iter().map(|&p| state.velocity(p)).collect(),
        }
    }
}

/// Time-ordered buffer holding the last `capacity` sensor snapshots.
#[derive(Debug, Clone)]
pub struct SensorRing {
    capacity: usize,
    entries: VecDeque<SensorSnapshot>,
}

impl SensorRing {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1);
        SensorRing {
            capacity,
            entries: VecDeque::with_capacity(capacity),
        }
    }

    /// Ring filled with copies of `snapshot`, so every lag up to `capacity - 1` resolves.
    pub fn prefilled(capacity: usize, snapshot: SensorSnapshot) -> Self {
        let mut ring = SensorRing::new(capacity);
        for _ in 0..capacity {
            ring.push(snapshot.clone());
        }
        ring
    }

    pub fn push(&mut self, snapshot: SensorSnapshot) {
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(snapshot);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Snapshot recorded `lag` pushes ago (0 = newest).
    pub fn at_lag(&self, lag: usize) -> Option<&SensorSnapshot> {
        self.entries
            .len()
            .checked_sub(lag + 1)
            .and_then(|i| self.entries.get(i))
    }
}

/// Flat observation: `[x, v]` per sensed point followed by the unit beam vector.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector(pub Vec<f64>);

impl StateVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn beam_block(&self) -> &[f64] {
        &self.0[self.0.len() - 3..]
    }

    /// Position of the `j`-th sensed point.
    pub fn position_block(&self, j: usize) -> &[f64] {
        &self.0[6 * j..6 * j + 3]
    }

    pub fn velocity_block(&self, j: usize) -> &[f64] {
        &self.0[6 * j + 3..6 * j + 6]
    }
}

pub fn assemble_state(ring: &SensorRing, beam: BeamOrientation, lag: usize) -> StateVector {
    let snap = ring
        .at_lag(lag)
        .expect("sensor ring shorter than the look-back lag");
    let mut v = Vec::with_capacity(6 * snap.positions.len() + 3);
    for (x, vel) in snap.positions.iter().zip(&snap.velocities) {
        v.extend_from_slice(x.as_slice());
        v.extend_from_slice(vel.as_slice());
    }
    v.extend_from_slice(beam.direction().as_slice());
    StateVector(v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next_state: StateVector,
    pub proxy_reward: f64,
    pub raw_power_dbm: f64,
    pub episode_done: bool,
    /// Received power with the beam pointed exactly at the receiver.
    pub optimal_power_dbm: f64,
}

/// Minimal episodic interface used by the learner.
pub trait Environment {
    fn state_dim(&self) -> usize;
    fn reset(&mut self, seed: u64) -> Result<StateVector>;
    fn step(&mut self, action: ActionIndex) -> Result<StepOutcome>;
}

/// The messenger-wire beam-tracking environment.
#[derive(Debug, Clone)]
pub struct TrackingEnv {
    setup: TrackingSetup,
    equilibrium: WireState,
    wire: WireState,
    beam: BeamOrientation,
    ring: SensorRing,
    rng: ChaCha8Rng,
    schedule: EpisodeSchedule,
    impulse: Option<ImpulseEvent>,
    step: usize,
    done: bool,
    noise: Vec<Vec3>,
}

impl TrackingEnv {
    pub fn new(setup: TrackingSetup) -> Result<Self> {
        setup.validate()?;
        let equilibrium = wire::solve_equilibrium(&setup.wire);
        let n = setup.wire.n_points;
        let lag = setup.env.lag_steps();
        let ring = SensorRing::prefilled(
            lag + 1,
            SensorSnapshot::capture(&equilibrium, &setup.env.sense_points),
        );
        let beam = Self::initial_beam(&setup, &equilibrium)?;
        Ok(TrackingEnv {
            wire: equilibrium.clone(),
            equilibrium,
            beam,
            ring,
            rng: ChaCha8Rng::seed_from_u64(0),
            schedule: EpisodeSchedule {
                impulse_time: None,
                noise_seed: 0,
            },
            impulse: None,
            step: 0,
            done: true,
            noise: vec![Vec3::zeros(); n - 2],
            setup,
        })
    }

    fn initial_beam(setup: &TrackingSetup, eq: &WireState) -> Result<BeamOrientation> {
        let node = eq.position(setup.env.tx_point);
        Ok(BeamOrientation::toward(node, setup.channel.rx_position)?
            .quantized(setup.env.refine_angle))
    }

    pub fn setup(&self) -> &TrackingSetup {
        &self.setup
    }

    pub fn reset_with(&mut self, schedule: EpisodeSchedule) -> Result<StateVector> {
        let env = &self.setup.env;
        self.wire = self.equilibrium.clone();
        self.beam = Self::initial_beam(&self.setup, &self.equilibrium)?;
        self.ring = SensorRing::prefilled(
            env.lag_steps() + 1,
            SensorSnapshot::capture(&self.equilibrium, &env.sense_points),
        );
        self.rng = ChaCha8Rng::seed_from_u64(schedule.noise_seed);
        self.impulse = schedule.impulse_time.map(|t| ImpulseEvent {
            point: env.impulse_point,
            force: env.impulse_force,
            apply_time: t,
        });
        self.schedule = schedule;
        self.step = 0;
        self.done = false;
        Ok(self.state())
    }

    pub fn state(&self) -> StateVector {
        assemble_state(&self.ring, self.beam, self.setup.env.lag_steps())
    }

    pub fn schedule(&self) -> EpisodeSchedule {
        self.schedule
    }

    pub fn beam(&self) -> BeamOrientation {
        self.beam
    }

    pub fn wire_state(&self) -> &WireState {
        &self.wire
    }

    /// True (undelayed) transmitter position.
    pub fn node_position(&self) -> Vec3 {
        self.wire.position(self.setup.env.tx_point)
    }

    pub fn rx_position(&self) -> Vec3 {
        self.setup.channel.rx_position
    }

    pub fn time(&self) -> f64 {
        self.wire.time
    }

    /// Steps taken in the current episode.
    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn power_at(&self, beam: BeamOrientation) -> Result<f64> {
        received_power(
            self.node_position(),
            beam,
            &self.setup.channel,
            &self.setup.array,
        )
    }

    fn advance_physics(&mut self) -> Result<()> {
        let dt = self.setup.env.physics_dt;
        for _ in 0..self.setup.env.substeps() {
            wire::draw_noise(&mut self.rng, &mut self.noise);
            wire::advance(
                &mut self.wire,
                &self.setup.wire,
                &self.setup.wind,
                self.impulse.as_ref(),
                dt,
                &self.noise,
            )?;
        }
        Ok(())
    }
}

impl Environment for TrackingEnv {
    fn state_dim(&self) -> usize {
        self.setup.env.state_dim()
    }

    fn reset(&mut self, seed: u64) -> Result<StateVector> {
        let schedule = EpisodeSchedule::draw(&self.setup.env, seed);
        self.reset_with(schedule)
    }

    fn step(&mut self, action: ActionIndex) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::EpisodeFinished);
        }
        self.beam = apply_action(self.beam, action, self.setup.env.refine_angle);
        self.advance_physics()?;
        self.step += 1;
        self.ring.push(SensorSnapshot::capture(
            &self.wire,
            &self.setup.env.sense_points,
        ));
        let next_state = self.state();

        let raw = self.power_at(self.beam)?;
        let node = self.node_position();
        let optimal = self.power_at(BeamOrientation::toward(node, self.rx_position())?)?;
        let env = &self.setup.env;
        self.done = self.step >= env.episode_steps();
        Ok(StepOutcome {
            next_state,
            proxy_reward: proxy_reward(raw, env.reward_offset_dbm, env.reward_scale_db),
            raw_power_dbm: raw,
            episode_done: self.done,
            optimal_power_dbm: optimal,
        })
    }
}

/// One row of the per-step trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub time_s: f64,
    pub action: ActionIndex,
    pub theta_s_deg: f64,
    pub phi_s_deg: f64,
    pub raw_power_dbm: f64,
    pub optimal_power_dbm: f64,
    pub proxy_reward: f64,
    pub node: Vec3,
    /// Great-circle angle between the beam and the true receiver direction, degrees.
    pub angle_error_deg: f64,
}

pub fn write_trace_csv<W: Write>(mut out: W, rows: &[TraceRow]) -> std::io::Result<()> {
    writeln!(
        out,
        "step,time_s,action,theta_s_deg,phi_s_deg,raw_power_dbm,optimal_power_dbm,proxy_reward,node_x,node_y,node_z"
    )?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.step,
            r.time_s,
            r.action,
            r.theta_s_deg,
            r.phi_s_deg,
            r.raw_power_dbm,
            r.optimal_power_dbm,
            r.proxy_reward,
            r.node.x,
            r.node.y,
            r.node.z
        )?;
    }
    Ok(())
}
