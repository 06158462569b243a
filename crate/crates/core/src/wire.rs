//! Messenger wire modeled as an N-point chain of zero-rest-length springs.
//!
//! Interior points feel gravity, the discrete-Laplacian tensile pull from
//! their neighbours, an Ornstein-Uhlenbeck drag toward the mean wind, and an
//! optional impulsive force. Endpoints P1 and PN never move.
//!
//! Frame: X along the wire, Y toward the building, Z up. The origin is the
//! equilibrium position of the wire midpoint.

use std::f64::consts::PI;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::{Mat3, Vec3};

/// 1-based chain index (`P1` .. `PN`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PointId(usize);

impl PointId {
    pub fn new(one_based: usize) -> Self {
        assert!(one_based >= 1, "point ids are 1-based");
        PointId(one_based)
    }

    pub fn get(self) -> usize {
        self.0
    }

    /// Position in a 0-based slice.
    pub fn index(self) -> usize {
        self.0 - 1
    }
}

impl std::fmt::Display for PointId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "P{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WireParams {
    pub n_points: usize,
    /// Mass of the whole wire in kg; each point carries `mass_total / n_points`.
    pub mass_total: f64,
    /// Spring constant between adjacent points, N/m.
    pub spring_k: f64,
    /// Drag constant, 1/s.
    pub drag_c: f64,
    pub gravity: Vec3,
    /// Diffusion matrix multiplying the Wiener increment, m/s per sqrt(s).
    pub wind_diffusion: Mat3,
    /// Horizontal distance between the two poles, m.
    pub endpoint_separation: f64,
}

impl Default for WireParams {
    fn default() -> Self {
        WireParams {
            n_points: 21,
            mass_total: 10.0,
            spring_k: 1000.0,
            drag_c: 1.0,
            gravity: Vec3::new(0.0, 0.0, -9.8),
            wind_diffusion: Mat3::identity() * 0.1,
            endpoint_separation: 10.0,
        }
    }
}

impl WireParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_points < 3 {
            return Err(Error::Validation(format!(
                "wire needs at least 3 points, got {}",
                self.n_points
            )));
        }
        if !(self.mass_total > 0.0) {
            return Err(Error::Validation("wire mass must be positive".into()));
        }
        if !(self.spring_k > 0.0) {
            return Err(Error::Validation("spring constant must be positive".into()));
        }
        if !(self.drag_c >= 0.0) {
            return Err(Error::Validation(
                "drag constant must be non-negative".into(),
            ));
        }
        if !(self.endpoint_separation > 0.0) {
            return Err(Error::Validation(
                "endpoint separation must be positive".into(),
            ));
        }
        let d = &self.wind_diffusion;
        if (d - d.transpose()).abs().max() > 1e-12 {
            return Err(Error::Validation(
                "wind diffusion matrix must be symmetric".into(),
            ));
        }
        if d.symmetric_eigenvalues().iter().any(|&ev| ev < -1e-12) {
            return Err(Error::Validation(
                "wind diffusion matrix must be positive semidefinite".into(),
            ));
        }
        Ok(())
    }

    /// `k0 * N / m`, the tensile coupling in 1/s^2.
    pub fn coupling(&self) -> f64 {
        self.spring_k * self.n_points as f64 / self.mass_total
    }

    pub fn point_mass(&self) -> f64 {
        self.mass_total / self.n_points as f64
    }

    /// Largest substep for which the semi-implicit spring update stays stable.
    pub fn max_stable_dt(&self) -> f64 {
        2.0 / (4.0 * self.coupling()).sqrt()
    }

    pub fn check_stability(&self, dt: f64) -> Result<()> {
        if !(dt > 0.0) {
            return Err(Error::Validation("physics substep must be positive".into()));
        }
        let limit = self.max_stable_dt();
        if dt >= limit {
            return Err(Error::Validation(format!(
                "physics substep {dt} s is unstable; must be < {limit:.6} s for k0*N/m = {:.1}",
                self.coupling()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WireState {
    pub time: f64,
    pub positions: Vec<Vec3>,
    pub velocities: Vec<Vec3>,
}

impl WireState {
    pub fn n_points(&self) -> usize {
        self.positions.len()
    }

    pub fn position(&self, p: PointId) -> Vec3 {
        self.positions[p.index()]
    }

    pub fn velocity(&self, p: PointId) -> Vec3 {
        self.velocities[p.index()]
    }

    /// Total kinetic energy in J.
    pub fn kinetic_energy(&self, params: &WireParams) -> f64 {
        0.5 * params.point_mass()
            * self
                .velocities
                .iter()
                .map(|v| v.norm_squared())
                .sum::<f64>()
    }
}

/// Sinusoidal mean wind `amplitude * sin(2 pi t / period)` per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct WindModel {
    pub amplitude: f64,
    pub periods: [f64; 3],
}

impl Default for WindModel {
    fn default() -> Self {
        WindModel {
            amplitude: 5.0,
            periods: [4.0, 6.0, 8.0],
        }
    }
}

impl WindModel {
    pub fn calm() -> Self {
        WindModel {
            amplitude: 0.0,
            ..WindModel::default()
        }
    }

    pub fn velocity(&self, t: f64) -> Vec3 {
        wind_velocity(self, t)
    }
}

pub fn wind_velocity(model: &WindModel, t: f64) -> Vec3 {
    let axis = |period: f64| model.amplitude * (2.0 * PI * t / period).sin();
    Vec3::new(
        axis(model.periods[0]),
        axis(model.periods[1]),
        axis(model.periods[2]),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseEvent {
    pub point: PointId,
    pub force: Vec3,
    pub apply_time: f64,
}

impl ImpulseEvent {
    pub fn validate(&self, n_points: usize) -> Result<()> {
        let p = self.point.get();
        if p <= 1 || p >= n_points {
            return Err(Error::Validation(format!(
                "impulse point {} must be an interior point (1 < i < {n_points})",
                self.point
            )));
        }
        if !(self.apply_time >= 0.0) {
            return Err(Error::Validation(
                "impulse time must be non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Whether the impulse lands in the substep `[t, t + dt)`.
    pub fn fires_in(&self, t: f64, dt: f64) -> bool {
        let slack = 1e-9 * dt;
        self.apply_time >= t - slack && self.apply_time < t + dt - slack
    }
}

/// Static configuration under gravity with fixed endpoints, shifted so the
/// wire midpoint sits at the origin.
pub fn solve_equilibrium(params: &WireParams) -> WireState {
    let n = params.n_points;
    let half = params.endpoint_separation / 2.0;
    let coupling = params.coupling();

    // Interior equations x_{i-1} - 2 x_i + x_{i+1} = -g / coupling, per axis,
    // with the endpoint values moved to the right-hand side.
    let mut positions = vec![Vec3::zeros(); n];
    let left = Vec3::new(-half, 0.0, 0.0);
    let right = Vec3::new(half, 0.0, 0.0);
    positions[0] = left;
    positions[n - 1] = right;
    let m = n - 2;
    for axis in 0..3 {
        let mut rhs = vec![-params.gravity[axis] / coupling; m];
        rhs[0] -= left[axis];
        rhs[m - 1] -= right[axis];
        let solution = solve_tridiagonal(m, 1.0, -2.0, 1.0, &rhs);
        for (i, value) in solution.into_iter().enumerate() {
            positions[i + 1][axis] = value;
        }
    }

    let origin = if n % 2 == 1 {
        positions[n / 2]
    } else {
        (positions[n / 2 - 1] + positions[n / 2]) / 2.0
    };
    for p in &mut positions {
        *p -= origin;
    }

    WireState {
        time: 0.0,
        positions,
        velocities: vec![Vec3::zeros(); n],
    }
}

/// Thomas algorithm for a constant-coefficient tridiagonal system.
fn solve_tridiagonal(m: usize, lower: f64, diag: f64, upper: f64, rhs: &[f64]) -> Vec<f64> {
    let mut c = vec![0.0; m];
    let mut d = vec![0.0; m];
    c[0] = upper / diag;
    d[0] = rhs[0] / diag;
    for i in 1..m {
        let denom = diag - lower * c[i - 1];
        c[i] = upper / denom;
        d[i] = (rhs[i] - lower * d[i - 1]) / denom;
    }
    let mut x = vec![0.0; m];
    x[m - 1] = d[m - 1];
    for i in (0..m - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

/// Depth of the midpoint below the endpoints.
pub fn sag_depth(state: &WireState) -> f64 {
    state.positions[0].z - midpoint(state).z
}

fn midpoint(state: &WireState) -> Vec3 {
    let n = state.n_points();
    if n % 2 == 1 {
        state.positions[n / 2]
    } else {
        (state.positions[n / 2 - 1] + state.positions[n / 2]) / 2.0
    }
}

/// Spring-only acceleration `coupling * (x_{i+1} + x_{i-1} - 2 x_i)`; zero at the endpoints.
pub fn tensile_accelerations(positions: &[Vec3], params: &WireParams) -> Vec<Vec3> {
    let n = positions.len();
    let coupling = params.coupling();
    let mut out = vec![Vec3::zeros(); n];
    for i in 1..n - 1 {
        out[i] = (positions[i + 1] + positions[i - 1] - 2.0 * positions[i]) * coupling;
    }
    out
}

/// Full deterministic acceleration (gravity, springs, optional force); zero at the endpoints.
pub fn accelerations(
    state: &WireState,
    params: &WireParams,
    force: Option<(PointId, Vec3)>,
) -> Vec<Vec3> {
    let n = state.n_points();
    let mut acc = tensile_accelerations(&state.positions, params);
    for a in acc.iter_mut().take(n - 1).skip(1) {
        *a += params.gravity;
    }
    if let Some((p, f)) = force {
        let i = p.index();
        if i > 0 && i < n - 1 {
            acc[i] += f * (n as f64 / params.mass_total);
        }
    }
    acc
}

/// One Euler-Maruyama substep. `noise` holds one standard-normal 3-vector per
/// interior point (length `N - 2`). The velocity is updated first and the
/// position uses the updated velocity.
pub fn step(
    state: &WireState,
    params: &WireParams,
    wind: &WindModel,
    impulse: Option<&ImpulseEvent>,
    dt: f64,
    noise: &[Vec3],
) -> Result<WireState> {
    let mut next = state.clone();
    advance(&mut next, params, wind, impulse, dt, noise)?;
    Ok(next)
}

/// In-place form of [`step`].
pub fn advance(
    state: &mut WireState,
    params: &WireParams,
    wind: &WindModel,
    impulse: Option<&ImpulseEvent>,
    dt: f64,
    noise: &[Vec3],
) -> Result<()> {
    let n = state.n_points();
    debug_assert_eq!(noise.len(), n - 2);
    let t = state.time;
    let force = impulse
        .filter(|ev| ev.fires_in(t, dt))
        .map(|ev| (ev.point, ev.force));
    let acc = accelerations(state, params, force);
    let mean_wind = wind.velocity(t);
    let sqrt_dt = dt.sqrt();

    for i in 1..n - 1 {
        let v = state.velocities[i];
        let dv = (acc[i] - params.drag_c * (v - mean_wind)) * dt
            + params.wind_diffusion * noise[i - 1] * sqrt_dt;
        let v_new = v + dv;
        let x_new = state.positions[i] + v_new * dt;
        if !(v_new.iter().all(|c| c.is_finite()) && x_new.iter().all(|c| c.is_finite())) {
            return Err(Error::IntegrationDiverged {
                point: i + 1,
                time: t,
            });
        }
        state.velocities[i] = v_new;
        state.positions[i] = x_new;
    }
    state.time = t + dt;
    Ok(())
}

/// Fills `buf` with `N - 2` standard-normal 3-vectors.
pub fn draw_noise<R: rand::Rng + ?Sized>(rng: &mut R, buf: &mut [Vec3]) {
    for v in buf.iter_mut() {
        *v = Vec3::new(
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        );
    }
}

/// Runs the wire from equilibrium for `duration` seconds and returns samples
/// every `sample_interval` (including `t = 0`).
pub fn simulate_trajectory(
    params: &WireParams,
    wind: &WindModel,
    impulses: &[ImpulseEvent],
    duration: f64,
    dt: f64,
    sample_interval: f64,
    seed: u64,
) -> Result<Vec<WireState>> {
    params.validate()?;
    params.check_stability(dt)?;
    if !(duration > 0.0) {
        return Err(Error::Validation(
            "trajectory duration must be positive".into(),
        ));
    }
    let per_sample = (sample_interval / dt).round();
    if per_sample < 1.0 || (per_sample * dt - sample_interval).abs() > 1e-9 * sample_interval {
        return Err(Error::Validation(format!(
            "substep {dt} s does not divide the sampling interval {sample_interval} s"
        )));
    }
    for ev in impulses {
        ev.validate(params.n_points)?;
    }
    let per_sample = per_sample as usize;
    let total = (duration / dt).round() as usize;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut noise = vec![Vec3::zeros(); params.n_points - 2];
    let mut state = solve_equilibrium(params);
    let mut samples = vec![state.clone()];
    for k in 0..total {
        draw_noise(&mut rng, &mut noise);
        let t = state.time;
        let firing = impulses.iter().find(|ev| ev.fires_in(t, dt));
        advance(&mut state, params, wind, firing, dt, &noise)?;
        if (k + 1) % per_sample == 0 {
            samples.push(state.clone());
        }
    }
    Ok(samples)
}

/// CSV with one row per (sample, point); point indices are 1-based.
pub fn write_trajectory_csv<W: Write>(mut out: W, samples: &[WireState]) -> std::io::Result<()> {
    writeln!(out, "time_s,point_index,x_m,y_m,z_m,vx_mps,vy_mps,vz_mps")?;
    for s in samples {
        for (i, (x, v)) in s.positions.iter().zip(&s.velocities).enumerate() {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                s.time,
                i + 1,
                x.x,
                x.y,
                x.z,
                v.x,
                v.y,
                v.z
            )?;
        }
    }
    Ok(())
}
