//! Seeded generators for the benchmark dynamical systems.
//!
//! Stochastic models (double wells, branching flow) integrate with
//! Euler-Maruyama: `x(t+dt) = x + f(x) dt + sigma sqrt(dt) xi`, `xi`
//! standard normal. Deterministic attractors (Lorenz, Rössler) use
//! classical fourth-order Runge-Kutta with the stage increments scaled by
//! `dt`, discarding an initial transient.
//!
//! Every generator is bit-deterministic given `(seed, config)`: trial `m`
//! draws from a dedicated ChaCha stream, so parallel and serial runs agree.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{McscError, Result};

/// Which benchmark system to simulate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// One-dimensional double well, potential `x^4 - 2x^2`.
    Dw1,
    /// Two-dimensional double well with wells on the diagonal.
    Dw2,
    /// Branching flow imitating a developmental landscape.
    Branching,
    Lorenz,
    Rossler,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorenzParams {
    pub rho: f64,
    pub sigma: f64,
    pub beta: f64,
}

impl Default for LorenzParams {
    fn default() -> Self {
        Self {
            rho: 28.0,
            sigma: 10.0,
            beta: 8.0 / 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RosslerParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Default for RosslerParams {
    fn default() -> Self {
        Self {
            a: 0.1,
            b: 0.1,
            c: 14.0,
        }
    }
}

/// Simulation settings. `steps` is the number of recorded time points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub model: ModelKind,
    pub steps: usize,
    pub dt: f64,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    /// Downward drift rate of the branching flow; defaults to
    /// `1 / ((steps - 1) * dt)` so trajectories reach `y = 0` at the end.
    #[serde(default)]
    pub theta: Option<f64>,
    #[serde(default)]
    pub lorenz: LorenzParams,
    #[serde(default)]
    pub rossler: RosslerParams,
    /// Initial integration steps discarded for the attractors.
    #[serde(default = "default_transient")]
    pub transient_steps: usize,
    /// Override of the model's default initial state.
    #[serde(default)]
    pub initial: Option<Vec<f64>>,
}

fn default_sigma() -> f64 {
    1.0
}
fn default_trials() -> usize {
    1
}
fn default_transient() -> usize {
    1000
}

impl SimConfig {
    /// One-dimensional double well defaults: `T = 10^4`, `dt = 0.01`,
    /// `sigma = 1`.
    pub fn dw1_defaults(seed: u64) -> Self {
        Self {
            model: ModelKind::Dw1,
            steps: 10_000,
            dt: 0.01,
            sigma: 1.0,
            trials: 1,
            seed,
            theta: None,
            lorenz: LorenzParams::default(),
            rossler: RosslerParams::default(),
            transient_steps: default_transient(),
            initial: None,
        }
    }

    /// Two-dimensional double well defaults: `T = 10^4`, `dt = 0.05`,
    /// `sigma = 1`.
    pub fn dw2_defaults(seed: u64) -> Self {
        Self {
            model: ModelKind::Dw2,
            steps: 10_000,
            dt: 0.05,
            ..Self::dw1_defaults(seed)
        }
    }

    /// Branching-flow defaults: `M = 100` trials of `T = 100` points,
    /// `dt = 0.001`, `sigma = 0.8`.
    pub fn branching_defaults(seed: u64) -> Self {
        Self {
            model: ModelKind::Branching,
            steps: 100,
            dt: 0.001,
            sigma: 0.8,
            trials: 100,
            ..Self::dw1_defaults(seed)
        }
    }

    /// Attractor defaults: `T = 20000`, `dt = 0.01`, 1000 transient steps.
    pub fn attractor_defaults(model: ModelKind, seed: u64) -> Self {
        Self {
            model,
            steps: 20_000,
            sigma: 0.0,
            ..Self::dw1_defaults(seed)
        }
    }

    /// Effective branching drift rate.
    pub fn theta_value(&self) -> f64 {
        self.theta
            .unwrap_or(1.0 / ((self.steps - 1) as f64 * self.dt))
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(McscError::InvalidConfig("dt must be positive".into()));
        }
        if self.steps < 2 {
            return Err(McscError::InvalidConfig("steps must be >= 2".into()));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(McscError::InvalidConfig("sigma must be >= 0".into()));
        }
        if self.trials == 0 {
            return Err(McscError::InvalidConfig("trials must be >= 1".into()));
        }
        if let Some(theta) = self.theta {
            if !theta.is_finite() {
                return Err(McscError::InvalidConfig("theta must be finite".into()));
            }
        }
        if let Some(init) = &self.initial {
            let expected = state_dim(self.model);
            if init.len() != expected {
                return Err(McscError::DimensionMismatch {
                    expected,
                    got: init.len(),
                });
            }
            if init.iter().any(|v| !v.is_finite()) {
                return Err(McscError::NonFinite("initial state"));
            }
        }
        Ok(())
    }
}

/// One simulated path, `steps` points long, with integer time indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub individual_id: String,
    pub times: Vec<i64>,
    pub points: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, Vec::len)
    }
}

pub fn state_dim(model: ModelKind) -> usize {
    match model {
        ModelKind::Dw1 => 1,
        ModelKind::Dw2 | ModelKind::Branching => 2,
        ModelKind::Lorenz | ModelKind::Rossler => 3,
    }
}

fn default_initial(model: ModelKind) -> Vec<f64> {
    match model {
        ModelKind::Dw1 => vec![0.0],
        ModelKind::Dw2 => vec![0.0, 0.0],
        ModelKind::Branching => vec![0.5, 1.0],
        ModelKind::Lorenz | ModelKind::Rossler => vec![1.0, 1.0, 1.0],
    }
}

fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

/// Drift of the 1D double well `U(x) = x^4 - 2x^2`.
fn dw1_drift(x: f64) -> f64 {
    -4.0 * x * x * x + 4.0 * x
}

/// Drift of the 2D double well (wells at `+-(1/sqrt(2), 1/sqrt(2))`).
fn dw2_drift(x: f64, y: f64) -> (f64, f64) {
    let s = x + y;
    let cubic = -s * s * s;
    (cubic - 2.0 * x + 6.0 * y, cubic - 2.0 * y + 6.0 * x)
}

/// Fuzzy membership functions blending the branching potentials; they sum
/// to 1 for all `y`.
pub fn branching_memberships(y: f64) -> (f64, f64, f64) {
    let h1 = (2.0 * y - 1.0).max(0.0);
    let h2 = 1.0 - (2.0 * y - 1.0).abs();
    let h3 = (1.0 - 2.0 * y).max(0.0);
    (h1, h2, h3)
}

/// x-drift of the branching flow (the y-drift is the constant `-theta`).
fn branching_x_drift(x: f64, y: f64) -> f64 {
    use std::f64::consts::PI;
    let (h1, h2, h3) = branching_memberships(y);
    h1 * 2.0 * PI * (2.0 * PI * x).sin()
        + h2 * 4.0 * PI * (4.0 * PI * x).sin()
        + h3 * 8.0 * PI * (8.0 * PI * x).sin()
}

fn lorenz_drift(v: [f64; 3], p: &LorenzParams) -> [f64; 3] {
    let [x, y, z] = v;
    [
        p.sigma * (y - x),
        x * (p.rho - z) - y,
        x * y - p.beta * z,
    ]
}

fn rossler_drift(v: [f64; 3], p: &RosslerParams) -> [f64; 3] {
    let [x, y, z] = v;
    [-y - z, x + p.a * y, p.b + z * (x - p.c)]
}

/// Classical RK4 step with stage increments `dt * k_i`.
fn rk4_step(f: impl Fn([f64; 3]) -> [f64; 3], v: [f64; 3], dt: f64) -> [f64; 3] {
    let k1 = f(v);
    let k2 = f(add(v, scale(k1, dt / 2.0)));
    let k3 = f(add(v, scale(k2, dt / 2.0)));
    let k4 = f(add(v, scale(k3, dt)));
    let mut out = v;
    for i in 0..3 {
        out[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

fn add(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn scale(a: [f64; 3], s: f64) -> [f64; 3] {
    [a[0] * s, a[1] * s, a[2] * s]
}

fn make_trajectory(trial: usize, points: Vec<Vec<f64>>) -> Trajectory {
    Trajectory {
        individual_id: (trial + 1).to_string(),
        times: (0..points.len() as i64).collect(),
        points,
    }
}

fn simulate_dw1_trial(config: &SimConfig, trial: usize) -> Trajectory {
    let mut rng = trial_rng(config.seed, trial);
    let mut x = config.initial.as_ref().map_or(0.0, |v| v[0]);
    let noise = config.sigma * config.dt.sqrt();
    let mut points = Vec::with_capacity(config.steps);
    points.push(vec![x]);
    for _ in 1..config.steps {
        let xi: f64 = rng.sample(StandardNormal);
        x += dw1_drift(x) * config.dt + noise * xi;
        points.push(vec![x]);
    }
    make_trajectory(trial, points)
}

fn simulate_dw2_trial(config: &SimConfig, trial: usize) -> Trajectory {
    let mut rng = trial_rng(config.seed, trial);
    let init = config.initial.clone().unwrap_or_else(|| default_initial(ModelKind::Dw2));
    let (mut x, mut y) = (init[0], init[1]);
    let noise = config.sigma * config.dt.sqrt();
    let mut points = Vec::with_capacity(config.steps);
    points.push(vec![x, y]);
    for _ in 1..config.steps {
        let (fx, fy) = dw2_drift(x, y);
        let xi_x: f64 = rng.sample(StandardNormal);
        let xi_y: f64 = rng.sample(StandardNormal);
        x += fx * config.dt + noise * xi_x;
        y += fy * config.dt + noise * xi_y;
        points.push(vec![x, y]);
    }
    make_trajectory(trial, points)
}

fn simulate_branching_trial(config: &SimConfig, trial: usize) -> Trajectory {
    let mut rng = trial_rng(config.seed, trial);
    let theta = config.theta_value();
    let init = config
        .initial
        .clone()
        .unwrap_or_else(|| default_initial(ModelKind::Branching));
    let (mut x, mut y) = (init[0], init[1]);
    let noise = config.sigma * config.dt.sqrt();
    let mut points = Vec::with_capacity(config.steps);
    points.push(vec![x, y]);
    for _ in 1..config.steps {
        let xi: f64 = rng.sample(StandardNormal);
        // Noise acts on x only; y descends at the constant rate theta.
        x += branching_x_drift(x, y) * config.dt + noise * xi;
        y -= theta * config.dt;
        points.push(vec![x, y]);
    }
    make_trajectory(trial, points)
}

fn simulate_attractor_trial(config: &SimConfig, trial: usize) -> Result<Trajectory> {
    let init = config
        .initial
        .clone()
        .unwrap_or_else(|| default_initial(config.model));
    let mut v = [init[0], init[1], init[2]];
    let step = |v: [f64; 3]| -> [f64; 3] {
        match config.model {
            ModelKind::Lorenz => lorenz_drift(v, &config.lorenz),
            ModelKind::Rossler => rossler_drift(v, &config.rossler),
            _ => unreachable!("checked by caller"),
        }
    };
    for _ in 0..config.transient_steps {
        v = rk4_step(step, v, config.dt);
    }
    let mut points = Vec::with_capacity(config.steps);
    points.push(v.to_vec());
    for _ in 1..config.steps {
        v = rk4_step(step, v, config.dt);
        if v.iter().any(|c| !c.is_finite()) {
            return Err(McscError::NonFinite("attractor state (integration blew up)"));
        }
        points.push(v.to_vec());
    }
    Ok(make_trajectory(trial, points))
}

/// Simulate the 1D double well (single trajectory, trial stream 0).
pub fn simulate_dw1(config: &SimConfig) -> Result<Trajectory> {
    expect_model(config, ModelKind::Dw1)?;
    Ok(simulate_dw1_trial(config, 0))
}

/// Simulate the 2D double well (single trajectory, trial stream 0).
pub fn simulate_dw2(config: &SimConfig) -> Result<Trajectory> {
    expect_model(config, ModelKind::Dw2)?;
    Ok(simulate_dw2_trial(config, 0))
}

/// Simulate `trials` branching-flow paths, all starting at `(0.5, 1)`.
pub fn simulate_branching(config: &SimConfig) -> Result<Vec<Trajectory>> {
    expect_model(config, ModelKind::Branching)?;
    Ok((0..config.trials)
        .map(|m| simulate_branching_trial(config, m))
        .collect())
}

/// Integrate a chaotic attractor with RK4, discarding the transient.
pub fn simulate_attractor(config: &SimConfig) -> Result<Trajectory> {
    config.validate()?;
    if !matches!(config.model, ModelKind::Lorenz | ModelKind::Rossler) {
        return Err(McscError::InvalidConfig(format!(
            "expected an attractor model, got {:?}",
            config.model
        )));
    }
    simulate_attractor_trial(config, 0)
}

fn expect_model(config: &SimConfig, expected: ModelKind) -> Result<()> {
    config.validate()?;
    if config.model != expected {
        return Err(McscError::InvalidConfig(format!(
            "expected model {:?}, got {:?}",
            expected, config.model
        )));
    }
    Ok(())
}

/// Simulate all `trials` trajectories of the configured model. Trial `m`
/// uses RNG stream `m`, so results are independent of evaluation order.
pub fn simulate_trials(config: &SimConfig) -> Result<Vec<Trajectory>> {
    config.validate()?;
    (0..config.trials)
        .map(|m| match config.model {
            ModelKind::Dw1 => Ok(simulate_dw1_trial(config, m)),
            ModelKind::Dw2 => Ok(simulate_dw2_trial(config, m)),
            ModelKind::Branching => Ok(simulate_branching_trial(config, m)),
            ModelKind::Lorenz | ModelKind::Rossler => simulate_attractor_trial(config, m),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dw1_noiseless_converges_to_right_well() {
        let mut config = SimConfig::dw1_defaults(0);
        config.sigma = 0.0;
        config.steps = 2000;
        config.initial = Some(vec![0.5]);
        let traj = simulate_dw1(&config).unwrap();
        let xs: Vec<f64> = traj.points.iter().map(|p| p[0]).collect();
        for w in xs.windows(2) {
            assert!(w[1] >= w[0] - 1e-12, "monotone approach to the minimum");
        }
        assert!((xs.last().unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn dw1_noiseless_stays_at_unstable_origin() {
        let mut config = SimConfig::dw1_defaults(0);
        config.sigma = 0.0;
        config.steps = 100;
        let traj = simulate_dw1(&config).unwrap();
        assert!(traj.points.iter().all(|p| p[0] == 0.0));
    }

    #[test]
    fn dw1_default_histogram_bimodal_near_wells() {
        use crate::geometry::{partition_per_axis, EdgeRule};
        let traj = simulate_dw1(&SimConfig::dw1_defaults(42)).unwrap();
        let partition = partition_per_axis(&traj.points, &[20], EdgeRule::UniformRange).unwrap();
        let mut hist = vec![0usize; 20];
        for p in &traj.points {
            hist[partition.assign(p).unwrap() - 1] += 1;
        }
        // Two modes, one per half, whose cell centers sit near the wells
        // at -1 and +1.
        let left_mode = (0..10).max_by_key(|&i| hist[i]).unwrap();
        let right_mode = (10..20).max_by_key(|&i| hist[i]).unwrap();
        let left_x = partition.representative(left_mode + 1).unwrap()[0];
        let right_x = partition.representative(right_mode + 1).unwrap()[0];
        assert!((left_x + 1.0).abs() < 0.35, "left mode at {left_x}");
        assert!((right_x - 1.0).abs() < 0.35, "right mode at {right_x}");
        // The saddle region is visited far less than the wells.
        let saddle: usize = hist[9] + hist[10];
        assert!(saddle < hist[left_mode] + hist[right_mode]);
    }

    #[test]
    fn dw2_drift_vanishes_on_diagonal_minima() {
        let s = 1.0 / 2.0_f64.sqrt();
        for sign in [-1.0, 1.0] {
            let (fx, fy) = dw2_drift(sign * s, sign * s);
            assert!(fx.abs() < 1e-12 && fy.abs() < 1e-12);
        }
        // And the origin is an equilibrium too (the saddle).
        let (fx, fy) = dw2_drift(0.0, 0.0);
        assert_eq!((fx, fy), (0.0, 0.0));
    }

    #[test]
    fn dw2_noiseless_converges_to_diagonal_minimum() {
        let mut config = SimConfig::dw2_defaults(0);
        config.sigma = 0.0;
        config.steps = 2000;
        config.dt = 0.01;
        config.initial = Some(vec![0.6, 0.6]);
        let traj = simulate_dw2(&config).unwrap();
        let last = traj.points.last().unwrap();
        let s = 1.0 / 2.0_f64.sqrt();
        assert!((last[0] - s).abs() < 1e-6);
        assert!((last[1] - s).abs() < 1e-6);
    }

    #[test]
    fn dw2_defaults_show_well_transitions() {
        let traj = simulate_dw2(&SimConfig::dw2_defaults(7)).unwrap();
        // The diagonal coordinate x+y separates the wells at +-sqrt(2).
        let sums: Vec<f64> = traj.points.iter().map(|p| p[0] + p[1]).collect();
        let deep_left = sums.iter().any(|&s| s < -1.0);
        let deep_right = sums.iter().any(|&s| s > 1.0);
        assert!(deep_left && deep_right, "both wells visited");
    }

    #[test]
    fn branching_memberships_partition_of_unity() {
        for i in 0..10_000 {
            let y = i as f64 / 9_999.0;
            let (h1, h2, h3) = branching_memberships(y);
            assert!((h1 + h2 + h3 - 1.0).abs() <= 1e-15);
        }
    }

    #[test]
    fn branching_reaches_baseline_at_final_step() {
        let config = SimConfig::branching_defaults(3);
        let theta = config.theta_value();
        let trajs = simulate_branching(&config).unwrap();
        assert_eq!(trajs.len(), 100);
        for t in &trajs {
            let y_final = t.points.last().unwrap()[1];
            assert!(y_final.abs() <= config.dt * theta + 1e-9);
        }
    }

    #[test]
    fn branching_final_states_cluster_at_cosine_minima() {
        let config = SimConfig::branching_defaults(11);
        let trajs = simulate_branching(&config).unwrap();
        // Minima of cos(8 pi x): x = (2n+1)/8.
        let near_minimum = |x: f64| {
            let scaled = (8.0 * x - 1.0) / 2.0; // integer at each minimum
            (scaled - scaled.round()).abs() * 2.0 / 8.0 < 1.0 / 16.0
        };
        let hits = trajs
            .iter()
            .filter(|t| near_minimum(t.points.last().unwrap()[0]))
            .count();
        assert!(hits >= 80, "only {hits}/100 trials ended near a minimum");
    }

    #[test]
    fn lorenz_drift_vanishes_at_fixed_points() {
        let p = LorenzParams::default();
        let c = (p.beta * (p.rho - 1.0)).sqrt(); // sqrt(72)
        for sign in [-1.0, 1.0] {
            let f = lorenz_drift([sign * c, sign * c, p.rho - 1.0], &p);
            assert!(f.iter().all(|v| v.abs() < 1e-12), "{f:?}");
        }
    }

    #[test]
    fn rk4_matches_exponential_decay() {
        let f = |v: [f64; 3]| [-v[0], -v[1], -v[2]];
        let dt = 0.01;
        let mut v = [1.0, 1.0, 1.0];
        for _ in 0..100 {
            v = rk4_step(f, v, dt);
        }
        let exact = (-1.0f64).exp();
        assert!((v[0] - exact).abs() < 1e-8);
    }

    #[test]
    fn rk4_fourth_order_convergence() {
        let f = |v: [f64; 3]| [-v[0], 0.0, 0.0];
        let err = |dt: f64| {
            let steps = (1.0 / dt).round() as usize;
            let mut v = [1.0, 0.0, 0.0];
            for _ in 0..steps {
                v = rk4_step(f, v, dt);
            }
            (v[0] - (-1.0f64).exp()).abs()
        };
        let ratio = err(0.02) / err(0.01);
        assert!((ratio - 16.0).abs() < 2.0, "order-4 ratio was {ratio}");
    }

    #[test]
    fn rossler_z_spikes_are_intermittent() {
        let config = SimConfig::attractor_defaults(ModelKind::Rossler, 0);
        let traj = simulate_attractor(&config).unwrap();
        let zs: Vec<f64> = traj.points.iter().map(|p| p[2]).collect();
        let max_z = zs.iter().cloned().fold(f64::MIN, f64::max);
        let low_fraction =
            zs.iter().filter(|&&z| z < 1.0).count() as f64 / zs.len() as f64;
        assert!(max_z > 10.0, "spikes reach z = {max_z}");
        assert!(low_fraction > 0.6, "z is small {low_fraction} of the time");
    }

    #[test]
    fn generators_bit_deterministic() {
        for config in [
            SimConfig::dw1_defaults(9),
            SimConfig::dw2_defaults(9),
            SimConfig::branching_defaults(9),
            SimConfig::attractor_defaults(ModelKind::Lorenz, 9),
        ] {
            let mut c = config;
            c.steps = c.steps.min(500);
            let a = simulate_trials(&c).unwrap();
            let b = simulate_trials(&c).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn euler_maruyama_without_noise_is_explicit_euler() {
        let mut config = SimConfig::dw1_defaults(5);
        config.sigma = 0.0;
        config.steps = 50;
        config.initial = Some(vec![0.3]);
        let traj = simulate_dw1(&config).unwrap();
        let mut x = 0.3;
        for p in &traj.points {
            assert_eq!(p[0], x);
            x += dw1_drift(x) * config.dt;
        }
    }

    #[test]
    fn trials_use_independent_streams() {
        let mut config = SimConfig::dw1_defaults(1);
        config.trials = 3;
        config.steps = 100;
        let trajs = simulate_trials(&config).unwrap();
        assert_ne!(trajs[0].points, trajs[1].points);
        assert_ne!(trajs[1].points, trajs[2].points);
        assert_eq!(trajs[0].individual_id, "1");
        assert_eq!(trajs[2].individual_id, "3");
    }
}
