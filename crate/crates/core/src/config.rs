//! Experiment configuration.
//!
//! The file is a flat list of dotted keys (`wire.mass_total_kg = 10`), read
//! with a TOML parser. Every key that the program consumes is materialized
//! with its source (`file`, `default`, `cli`, `profile:smoke`, or a derivation
//! note), and the resulting echo is itself a loadable config file.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use toml::Value;

use crate::channel::{received_power, AmplitudeNorm, ArrayConfig, BeamOrientation, ChannelConfig};
use crate::dqn::TrainConfig;
use crate::env::{EnvConfig, TrackingSetup};
use crate::error::{Error, Result};
use crate::experiment::{SweepAxis, SweepSpec};
use crate::policies::PolicyKind;
use crate::wire::{self, PointId, WindModel, WireParams};
use crate::{Mat3, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    WindOnly,
    WindPlusImpulse,
}

impl Scenario {
    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::WindOnly => "wind_only",
            Scenario::WindPlusImpulse => "wind_plus_impulse",
        }
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wind_only" => Ok(Scenario::WindOnly),
            "wind_plus_impulse" => Ok(Scenario::WindPlusImpulse),
            other => Err(Error::Validation(format!(
                "scenario must be wind_only or wind_plus_impulse, got {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateMode {
    /// Observe the transmitter point only.
    SinglePoint,
    /// Observe every other point along the wire.
    Expanded,
}

impl StateMode {
    pub fn as_str(self) -> &'static str {
        match self {
            StateMode::SinglePoint => "single_point",
            StateMode::Expanded => "expanded",
        }
    }

    pub fn sense_points(self, tx: PointId, n_points: usize) -> Vec<PointId> {
        match self {
            StateMode::SinglePoint => vec![tx],
            StateMode::Expanded => {
                let mut pts: Vec<usize> = (2..=n_points.saturating_sub(3)).step_by(2).collect();
                if !pts.contains(&tx.get()) {
                    pts.push(tx.get());
                    pts.sort_unstable();
                }
                pts.into_iter().map(PointId::new).collect()
            }
        }
    }
}

impl std::str::FromStr for StateMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single_point" => Ok(StateMode::SinglePoint),
            "expanded" => Ok(StateMode::Expanded),
            other => Err(Error::Validation(format!(
                "state_mode must be single_point or expanded, got {other:?}"
            ))),
        }
    }
}

/// Wire trajectory export settings.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySpec {
    pub duration: f64,
    pub sample_interval: f64,
    pub with_impulse: bool,
    pub impulse_time: f64,
    pub with_wind: bool,
}

/// Beam pattern export settings. Angles are relative to the steering direction.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternSpec {
    pub beam: BeamOrientation,
    pub span_deg: f64,
    pub step_deg: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EchoEntry {
    pub key: String,
    /// TOML literal.
    pub value: String,
    pub source: String,
}

/// User-supplied values, before defaults are filled in.
type Layer = BTreeMap<String, (Value, String)>;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub wire: WireParams,
    pub wind: WindModel,
    pub channel: ChannelConfig,
    pub array: ArrayConfig,
    pub env: EnvConfig,
    pub train: TrainConfig,
    pub scenario: Scenario,
    pub state_mode: StateMode,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub eval_episodes: usize,
    /// Length of the post-impulse averaging window, s.
    pub post_impulse_window: f64,
    pub sweep: SweepSpec,
    pub trajectory: TrajectorySpec,
    pub pattern: PatternSpec,
    echo: Vec<EchoEntry>,
    layer: Layer,
}

/// Values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    entries: Vec<(String, Value, String)>,
}

impl Overrides {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(mut self, key: &str, value: Value, source: &str) -> Self {
        self.entries
            .push((key.to_string(), value, source.to_string()));
        self
    }

    pub fn seed(self, seed: u64) -> Self {
        self.set("seed", Value::Integer(seed as i64), "cli")
    }

    pub fn output_dir(self, dir: &Path) -> Self {
        self.set(
            "output_dir",
            Value::String(dir.display().to_string()),
            "cli",
        )
    }

    /// Reduced training and evaluation schedule for quick end-to-end runs.
    pub fn smoke(self) -> Self {
        let s = TrainConfig::smoke();
        let src = "profile:smoke";
        self.set("train.total_steps", int(s.total_steps), src)
            .set("train.sample_block", int(s.sample_block), src)
            .set("train.epochs", int(s.epochs), src)
            .set("train.outer_iterations", int(s.outer_iterations), src)
            .set("train.target_sync_steps", int(s.target_sync_steps), src)
            .set("eval.episodes", int(2), src)
            .set("sweep.repetitions", int(1), src)
    }
}

fn int(n: usize) -> Value {
    Value::Integer(n as i64)
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig::parse("", &Overrides::default()).expect("built-in defaults are valid")
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, overrides).map_err(|e| match e {
            Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str, overrides: &Overrides) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
        let mut layer = Layer::new();
        flatten("", table, &mut layer);
        for (k, v, src) in &overrides.entries {
            layer.insert(k.clone(), (v.clone(), src.clone()));
        }
        materialize(layer)
    }

    /// Copy with one more key overridden, fully re-derived.
    pub fn with_override(&self, key: &str, value: Value, source: &str) -> Result<Self> {
        let mut layer = self.layer.clone();
        layer.insert(key.to_string(), (value, source.to_string()));
        materialize(layer)
    }

    pub fn setup(&self) -> TrackingSetup {
        TrackingSetup {
            wire: self.wire.clone(),
            wind: self.wind.clone(),
            channel: self.channel.clone(),
            array: self.array.clone(),
            env: self.env.clone(),
        }
    }

    pub fn echo(&self) -> &[EchoEntry] {
        &self.echo
    }

    /// One `key = value  # source` line per materialized key; loadable as a config.
    pub fn echo_text(&self) -> String {
        let mut out = String::new();
        for e in &self.echo {
            writeln!(out, "{} = {}  # {}", e.key, e.value, e.source).unwrap();
        }
        out
    }

    pub fn echo_lines(&self) -> Vec<String> {
        self.echo_text().lines().map(str::to_string).collect()
    }
}

fn flatten(prefix: &str, table: toml::Table, out: &mut Layer) {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            other => {
                out.insert(key, (other, "file".to_string()));
            }
        }
    }
}

trait FromValue: Sized {
    const KIND: &'static str;
    fn from_value(v: &Value) -> Option<Self>;
    fn to_value(&self) -> Value;
}

impl FromValue for f64 {
    const KIND: &'static str = "a number";
    fn from_value(v: &Value) -> Option<Self> {
        match v {
            Value::Float(f) => Some(*f),
            Value::Integer(i) => Some(*i as f64),
            _ => None,
        }
    }
    fn to_value(&self) -> Value {
        Value::Float(*self)
    }
}

impl FromValue for usize {
    const KIND: &'static str = "a non-negative integer";
    fn from_value(v: &Value) -> Option<Self> {
        v.as_integer().and_then(|i| usize::try_from(i).ok())
    }
    fn to_value(&self) -> Value {
        Value::Integer(*self as i64)
    }
}

impl FromValue for u64 {
    const KIND: &'static str = "a non-negative integer";
    fn from_value(v: &Value) -> Option<Self> {
        v.as_integer().and_then(|i| u64::try_from(i).ok())
    }
    fn to_value(&self) -> Value {
        Value::Integer(*self as i64)
    }
}

impl FromValue for bool {
    const KIND: &'static str = "true or false";
    fn from_value(v: &Value) -> Option<Self> {
        v.as_bool()
    }
    fn to_value(&self) -> Value {
        Value::Boolean(*self)
    }
}

impl FromValue for String {
    const KIND: &'static str = "a string";
    fn from_value(v: &Value) -> Option<Self> {
        v.as_str().map(str::to_string)
    }
    fn to_value(&self) -> Value {
        Value::String(self.clone())
    }
}

impl<T: FromValue> FromValue for Vec<T> {
    const KIND: &'static str = "an array";
    fn from_value(v: &Value) -> Option<Self> {
        v.as_array()?.iter().map(T::from_value).collect()
    }
    fn to_value(&self) -> Value {
        Value::Array(self.iter().map(T::to_value).collect())
    }
}

struct Reader {
    layer: Layer,
    used: BTreeSet<String>,
    echo: Vec<EchoEntry>,
}

impl Reader {
    fn raw(&mut self, key: &str) -> Option<(Value, String)> {
        self.used.insert(key.to_string());
        self.layer.get(key).cloned()
    }

    fn record(&mut self, key: &str, value: Value, source: &str) {
        self.echo.push(EchoEntry {
            key: key.to_string(),
            value: value.to_string(),
            source: source.to_string(),
        });
    }

    fn convert<T: FromValue>(key: &str, v: &Value) -> Result<T> {
        T::from_value(v)
            .ok_or_else(|| Error::Validation(format!("{key}: expected {}, found {v}", T::KIND)))
    }

    fn get<T: FromValue>(&mut self, key: &str, default: T) -> Result<T> {
        self.get_noted(key, default, "default")
    }

    fn get_noted<T: FromValue>(&mut self, key: &str, default: T, note: &str) -> Result<T> {
        let (value, source) = match self.raw(key) {
            Some((v, src)) => (Self::convert(key, &v)?, src),
            None => (default, note.to_string()),
        };
        self.record(key, value.to_value(), &source);
        Ok(value)
    }

    /// A user value if present; `None` if the key is absent or set to `"auto"`.
    fn optional<T: FromValue>(&mut self, key: &str) -> Result<Option<(T, String)>> {
        match self.raw(key) {
            None => Ok(None),
            Some((Value::String(s), _)) if s == "auto" => Ok(None),
            Some((v, src)) => Ok(Some((Self::convert(key, &v)?, src))),
        }
    }

    fn parsed<T: std::str::FromStr<Err = Error>>(&mut self, key: &str, default: &str) -> Result<T> {
        let s: String = self.get(key, default.to_string())?;
        s.parse()
    }

    fn vec3(&mut self, key: &str, default: [f64; 3]) -> Result<Vec3> {
        let v: Vec<f64> = self.get(key, default.to_vec())?;
        match v.as_slice() {
            [x, y, z] => Ok(Vec3::new(*x, *y, *z)),
            _ => Err(Error::Validation(format!(
                "{key}: expected 3 components, found {}",
                v.len()
            ))),
        }
    }

    fn finish(self) -> Result<Vec<EchoEntry>> {
        // Derived values appear in echoes; reloading an echo ignores them.
        if let Some(k) = self
            .layer
            .keys()
            .find(|k| !self.used.contains(*k) && !k.starts_with("derived."))
        {
            return Err(Error::Validation(format!("unknown config key {k:?}")));
        }
        Ok(self.echo)
    }
}

fn check(cond: bool, msg: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Validation(msg.to_string()))
    }
}

fn materialize(layer: Layer) -> Result<ExperimentConfig> {
    let mut r = Reader {
        layer: layer.clone(),
        used: BTreeSet::new(),
        echo: Vec::new(),
    };

    let seed: u64 = r.get("seed", 1)?;
    let output_dir: String = r.get("output_dir", "runs".to_string())?;
    let scenario: Scenario = r.parsed("scenario", "wind_only")?;
    let state_mode: StateMode = r.parsed("state_mode", "single_point")?;

    let wd = WireParams::default();
    let n_points: usize = r.get("wire.n_points", wd.n_points)?;
    let mass_total: f64 = r.get("wire.mass_total_kg", wd.mass_total)?;
    let spring_k: f64 = r.get("wire.spring_k_n_per_m", wd.spring_k)?;
    let drag_c: f64 = r.get("wire.drag_c_per_s", wd.drag_c)?;
    let gravity = r.vec3("wire.gravity_mps2", wd.gravity.into())?;
    let endpoint_separation: f64 = r.get("wire.endpoint_separation_m", wd.endpoint_separation)?;
    let wind_diffusion = match r.raw("wire.wind_diffusion") {
        None => {
            r.record("wire.wind_diffusion", Value::Float(0.1), "default");
            Mat3::identity() * 0.1
        }
        Some((v, src)) => {
            let m = match &v {
                Value::Array(_) => {
                    let vals: Vec<f64> = Reader::convert("wire.wind_diffusion", &v)?;
                    check(
                        vals.len() == 9,
                        "wire.wind_diffusion: expected a scalar or 9 row-major entries",
                    )?;
                    Mat3::from_row_slice(&vals)
                }
                _ => Mat3::identity() * Reader::convert::<f64>("wire.wind_diffusion", &v)?,
            };
            r.record("wire.wind_diffusion", v, &src);
            m
        }
    };
    let physics_dt: f64 = r.get("wire.physics_dt_s", 1e-3)?;
    let wire = WireParams {
        n_points,
        mass_total,
        spring_k,
        drag_c,
        gravity,
        wind_diffusion,
        endpoint_separation,
    };
    wire.validate()?;
    wire.check_stability(physics_dt)?;

    let wdf = WindModel::default();
    let amplitude: f64 = r.get("wind.amplitude_mps", wdf.amplitude)?;
    let periods: Vec<f64> = r.get("wind.periods_s", wdf.periods.to_vec())?;
    check(periods.len() == 3, "wind.periods_s: expected 3 periods")?;
    check(
        periods.iter().all(|p| *p > 0.0),
        "wind.periods_s: periods must be positive",
    )?;
    let wind = WindModel {
        amplitude,
        periods: [periods[0], periods[1], periods[2]],
    };

    let ed = EnvConfig::default();
    let impulse_force = r.vec3("impulse.force_n", ed.impulse_force.into())?;
    let impulse_point: usize = r.get("impulse.point", ed.impulse_point.get())?;
    let impulse_times: Vec<f64> = r.get("impulse.times_s", ed.impulse_times.clone())?;
    check(impulse_point >= 1, "impulse.point is 1-based")?;

    let cd = ChannelConfig::default();
    let tx_power_dbm: f64 = r.get("channel.tx_power_dbm", cd.tx_power_dbm)?;
    let wavelength: f64 = r.get("channel.wavelength_m", cd.wavelength)?;
    let rx_gain_dbi: f64 = r.get("channel.rx_gain_dbi", cd.rx_gain_dbi)?;
    let pathloss_exponent: f64 =
        r.get_noted("channel.pathloss_exponent", 2.0, "default:free-space")?;
    check(wavelength > 0.0, "channel.wavelength_m must be positive")?;
    let pathloss_ref_db = match r.optional::<f64>("channel.pathloss_ref_db")? {
        Some((v, src)) => {
            r.record("channel.pathloss_ref_db", Value::Float(v), &src);
            v
        }
        None => {
            let v = ChannelConfig::free_space_ref_db(wavelength);
            r.record(
                "channel.pathloss_ref_db",
                Value::Float(v),
                "default:free-space",
            );
            v
        }
    };
    let rx_distance: f64 = r.get("channel.rx_distance_m", 5.0)?;
    let rx_height_offset: f64 = r.get("channel.rx_height_offset_m", 0.0)?;

    let ad = ArrayConfig::default();
    let array = ArrayConfig {
        n_vertical: r.get("array.n_vertical", ad.n_vertical)?,
        n_horizontal: r.get("array.n_horizontal", ad.n_horizontal)?,
        corr_coeff: r.get("array.corr_coeff", ad.corr_coeff)?,
        spacing_v: r.get("array.spacing_v_m", ad.spacing_v)?,
        spacing_h: r.get("array.spacing_h_m", ad.spacing_h)?,
        amplitude_norm: r
            .parsed::<AmplitudeNorm>("array.amplitude_norm", ad.amplitude_norm.as_str())?,
    };
    array.validate()?;

    let tau: f64 = r.get("env.tau_s", ed.tau)?;
    let lookback: f64 = r.get("env.lookback_s", ed.lookback)?;
    let episode_duration: f64 = r.get("env.episode_duration_s", ed.episode_duration)?;
    let refine_angle_deg: f64 = r.get("env.refine_angle_deg", ed.refine_angle.to_degrees())?;
    let tx_point: usize = r.get("env.tx_point", ed.tx_point.get())?;
    check(tx_point >= 1, "env.tx_point is 1-based")?;
    let tx_point = PointId::new(tx_point);
    let sense_points = match r.optional::<Vec<usize>>("env.sense_points")? {
        Some((pts, src)) => {
            check(pts.iter().all(|&p| p >= 1), "env.sense_points are 1-based")?;
            r.record("env.sense_points", pts.to_value(), &src);
            pts.into_iter().map(PointId::new).collect()
        }
        None => {
            let pts = state_mode.sense_points(tx_point, n_points);
            let raw: Vec<usize> = pts.iter().map(|p| p.get()).collect();
            r.record("env.sense_points", raw.to_value(), "derived:state_mode");
            pts
        }
    };
    let reward_scale_db: f64 = r.get("env.reward_scale_db", ed.reward_scale_db)?;

    let equilibrium = wire::solve_equilibrium(&wire);
    let sag = wire::sag_depth(&equilibrium);
    let rx_position = Vec3::new(0.0, rx_distance, sag + rx_height_offset);
    r.record(
        "derived.rx_position_m",
        vec![rx_position.x, rx_position.y, rx_position.z].to_value(),
        "derived:[0, rx_distance, sag + rx_height_offset]",
    );
    let channel = ChannelConfig {
        tx_power_dbm,
        wavelength,
        rx_gain_dbi,
        pathloss_exponent,
        pathloss_ref_db,
        rx_position,
    };
    channel.validate()?;

    let reward_offset_dbm = match r.optional::<f64>("env.reward_offset_dbm")? {
        Some((v, src)) => {
            r.record("env.reward_offset_dbm", Value::Float(v), &src);
            v
        }
        None => {
            check(tx_point.get() <= n_points, "env.tx_point outside the wire")?;
            let node = equilibrium.position(tx_point);
            let best = received_power(
                node,
                BeamOrientation::toward(node, rx_position)?,
                &channel,
                &array,
            )?;
            let v = best - 5.0;
            r.record(
                "env.reward_offset_dbm",
                Value::Float(v),
                "derived:equilibrium-boresight-minus-5dB",
            );
            v
        }
    };

    let env = EnvConfig {
        tau,
        lookback,
        episode_duration,
        refine_angle: refine_angle_deg.to_radians(),
        tx_point,
        sense_points,
        reward_offset_dbm,
        reward_scale_db,
        impulse_enabled: scenario == Scenario::WindPlusImpulse,
        impulse_times,
        impulse_point: PointId::new(impulse_point),
        impulse_force,
        physics_dt,
    };
    env.validate(n_points)?;

    let td = TrainConfig::default();
    let train = TrainConfig {
        discount: r.get("train.discount", td.discount)?,
        epsilon_train: r.get("train.epsilon_train", td.epsilon_train)?,
        epsilon_eval: r.get("train.epsilon_eval", td.epsilon_eval)?,
        learning_rate: r.get("train.learning_rate", td.learning_rate)?,
        update_period_steps: r.get("train.update_period_steps", td.update_period_steps)?,
        sample_block: r.get("train.sample_block", td.sample_block)?,
        minibatch: r.get("train.minibatch", td.minibatch)?,
        epochs: r.get("train.epochs", td.epochs)?,
        outer_iterations: r.get("train.outer_iterations", td.outer_iterations)?,
        target_sync_steps: r.get("train.target_sync_steps", td.target_sync_steps)?,
        total_steps: r.get("train.total_steps", td.total_steps)?,
        eval_steps: r.get("train.eval_steps", td.eval_steps)?,
        adam_beta1: r.get("train.adam_beta1", td.adam_beta1)?,
        adam_beta2: r.get("train.adam_beta2", td.adam_beta2)?,
        adam_eps: r.get("train.adam_eps", td.adam_eps)?,
        replay_capacity: r.get("train.replay_capacity", td.replay_capacity)?,
        hidden: r.get("train.hidden", td.hidden.clone())?,
    };
    train.validate()?;

    let eval_episodes: usize = r.get("eval.episodes", 10)?;
    let post_impulse_window: f64 = r.get("eval.post_impulse_window_s", 0.3)?;
    check(
        post_impulse_window >= tau,
        "eval.post_impulse_window_s must cover at least one interval",
    )?;

    let axis: SweepAxis = r.parsed("sweep.axis", "lookback")?;
    let values: Vec<f64> = r.get_noted("sweep.values", axis.default_values(), "default:axis")?;
    let repetitions: usize = r.get("sweep.repetitions", 3)?;
    let policy_names: Vec<String> = r.get(
        "sweep.policies",
        vec!["oracle".to_string(), "fixed".to_string(), "dqn".to_string()],
    )?;
    let sweep = SweepSpec {
        axis,
        values,
        repetitions,
        policies: policy_names
            .iter()
            .map(|p| p.parse::<PolicyKind>())
            .collect::<Result<_>>()?,
    };
    sweep.validate()?;

    let trajectory = TrajectorySpec {
        duration: r.get("trajectory.duration_s", 0.45)?,
        sample_interval: r.get("trajectory.sample_interval_s", 0.005)?,
        with_impulse: r.get("trajectory.with_impulse", true)?,
        impulse_time: r.get("trajectory.impulse_time_s", 0.0)?,
        with_wind: r.get("trajectory.with_wind", false)?,
    };
    check(
        trajectory.duration > 0.0,
        "trajectory.duration_s must be positive",
    )?;
    check(
        trajectory.impulse_time >= 0.0,
        "trajectory.impulse_time_s must be non-negative",
    )?;

    let theta_s: f64 = r.get("pattern.theta_s_deg", 90.0)?;
    let phi_s: f64 = r.get("pattern.phi_s_deg", 90.0)?;
    let pattern = PatternSpec {
        beam: BeamOrientation::new(theta_s.to_radians(), phi_s.to_radians()),
        span_deg: r.get("pattern.span_deg", 90.0)?,
        step_deg: r.get("pattern.step_deg", 1.0)?,
    };
    check(
        pattern.step_deg > 0.0 && pattern.span_deg >= 0.0,
        "pattern span and step must be positive",
    )?;

    let echo = r.finish()?;
    Ok(ExperimentConfig {
        wire,
        wind,
        channel,
        array,
        env,
        train,
        scenario,
        state_mode,
        seed,
        output_dir: PathBuf::from(output_dir),
        eval_episodes,
        post_impulse_window,
        sweep,
        trajectory,
        pattern,
        echo,
        layer,
    })
}
