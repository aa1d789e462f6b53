use std::f64::consts::PI;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Integration step shared by both environments.
pub const DT: f64 = 0.05;
pub const HORIZON: usize = 200;

/// Outcome of a single environment step.
#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub next_state: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

/// Episodic environment with actions in the box `[-1, 1]^action_dim`.
pub trait ContinuousEnv {
    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn horizon(&self) -> usize;
    /// Largest possible `|reward|` for a single step.
    fn reward_bound(&self) -> f64;
    /// Starts a new episode and returns the initial observation.
    fn reset(&mut self) -> Vec<f64>;
    /// Advances one step. Actions must already lie in the box.
    fn step(&mut self, action: &[f64]) -> Step;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    PointMass,
    Pendulum,
}

impl EnvKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EnvKind::PointMass => "point_mass",
            EnvKind::Pendulum => "pendulum",
        }
    }

    pub fn make(self, seed: u64) -> Box<dyn ContinuousEnv> {
        match self {
            EnvKind::PointMass => Box::new(PointMass::new(seed)),
            EnvKind::Pendulum => Box::new(Pendulum::new(seed)),
        }
    }

    /// Marginal-policy replay capacity used when the config leaves it unset.
    pub fn default_marginal_capacity(self) -> usize {
        match self {
            EnvKind::PointMass => 1_000,
            EnvKind::Pendulum => 10_000,
        }
    }
}

/// 1-D double integrator driven toward the origin.
///
/// `x' = x + dt v`, `v' = v + dt a`, reward `-(x^2 + 0.1 a^2)` computed on the
/// pre-step position. Position and velocity are clipped to `[-LIMIT, LIMIT]`.
#[derive(Clone, Debug)]
pub struct PointMass {
    rng: ChaCha8Rng,
    state: [f64; 2],
    t: usize,
}

impl PointMass {
    pub const LIMIT: f64 = 5.0;

    pub fn new(seed: u64) -> Self {
        PointMass {
            rng: ChaCha8Rng::seed_from_u64(seed),
            state: [0.0, 0.0],
            t: 0,
        }
    }

    pub fn set_state(&mut self, x: f64, v: f64) {
        self.state = [x, v];
    }
}

impl ContinuousEnv for PointMass {
    fn state_dim(&self) -> usize {
        2
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn horizon(&self) -> usize {
        HORIZON
    }

    fn reward_bound(&self) -> f64 {
        Self::LIMIT * Self::LIMIT + 0.1
    }

    fn reset(&mut self) -> Vec<f64> {
        self.state = [self.rng.random_range(-1.0..=1.0), 0.0];
        self.t = 0;
        self.state.to_vec()
    }

    fn step(&mut self, action: &[f64]) -> Step {
        let a = action[0];
        let [x, v] = self.state;
        let reward = -(x * x + 0.1 * a * a);
        let x2 = (x + DT * v).clamp(-Self::LIMIT, Self::LIMIT);
        let v2 = (v + DT * a).clamp(-Self::LIMIT, Self::LIMIT);
        self.state = [x2, v2];
        self.t += 1;
        Step {
            next_state: self.state.to_vec(),
            reward,
            done: self.t >= HORIZON,
        }
    }
}

/// Swing-up pendulum; angle 0 is upright.
///
/// Uniform rod with mass 1, length 1, gravity 10, giving
/// `theta'' = 15 sin(theta) + 3 u` with torque `u = MAX_TORQUE * a`.
/// Integrated by classical Runge-Kutta with step `DT`; angular speed is
/// clipped to `[-MAX_SPEED, MAX_SPEED]` after each step. Observation is
/// `(cos theta, sin theta, theta')`; reward is
/// `-(angle^2 + 0.1 theta'^2 + 0.001 a^2)` with the angle wrapped to `[-pi, pi)`.
#[derive(Clone, Debug)]
pub struct Pendulum {
    rng: ChaCha8Rng,
    theta: f64,
    omega: f64,
    t: usize,
    speed_limit: bool,
}

impl Pendulum {
    pub const MAX_TORQUE: f64 = 2.0;
    pub const MAX_SPEED: f64 = 8.0;
    pub const GRAVITY: f64 = 10.0;

    pub fn new(seed: u64) -> Self {
        Pendulum {
            rng: ChaCha8Rng::seed_from_u64(seed),
            theta: 0.0,
            omega: 0.0,
            t: 0,
            speed_limit: true,
        }
    }

    /// Variant without the speed clip, used for energy audits.
    pub fn frictionless(seed: u64) -> Self {
        Pendulum {
            speed_limit: false,
            ..Self::new(seed)
        }
    }

    pub fn set_state(&mut self, theta: f64, omega: f64) {
        self.theta = theta;
        self.omega = omega;
    }

    pub fn angle(&self) -> f64 {
        self.theta
    }

    pub fn angular_velocity(&self) -> f64 {
        self.omega
    }

    /// Kinetic plus potential energy of the rod about its pivot.
    pub fn energy(&self) -> f64 {
        0.5 * (1.0 / 3.0) * self.omega * self.omega + 0.5 * Self::GRAVITY * self.theta.cos()
    }

    fn accel(theta: f64, torque: f64) -> f64 {
        1.5 * Self::GRAVITY * theta.sin() + 3.0 * torque
    }

    fn observe(&self) -> Vec<f64> {
        vec![self.theta.cos(), self.theta.sin(), self.omega]
    }
}

/// Wraps an angle into `[-pi, pi)`.
pub fn wrap_angle(theta: f64) -> f64 {
    (theta + PI).rem_euclid(2.0 * PI) - PI
}

impl ContinuousEnv for Pendulum {
    fn state_dim(&self) -> usize {
        3
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn horizon(&self) -> usize {
        HORIZON
    }

    fn reward_bound(&self) -> f64 {
        PI * PI + 0.1 * Self::MAX_SPEED * Self::MAX_SPEED + 0.001
    }

    fn reset(&mut self) -> Vec<f64> {
        self.theta = self.rng.random_range(-PI..PI);
        self.omega = self.rng.random_range(-1.0..1.0);
        self.t = 0;
        self.observe()
    }

    fn step(&mut self, action: &[f64]) -> Step {
        let a = action[0];
        let u = Self::MAX_TORQUE * a;
        let angle = wrap_angle(self.theta);
        let speed = self.omega.clamp(-Self::MAX_SPEED, Self::MAX_SPEED);
        let reward = -(angle * angle + 0.1 * speed * speed + 0.001 * a * a);

        let (th, om) = (self.theta, self.omega);
        let k1 = (om, Self::accel(th, u));
        let k2 = (om + 0.5 * DT * k1.1, Self::accel(th + 0.5 * DT * k1.0, u));
        let k3 = (om + 0.5 * DT * k2.1, Self::accel(th + 0.5 * DT * k2.0, u));
        let k4 = (om + DT * k3.1, Self::accel(th + DT * k3.0, u));
        self.theta = wrap_angle(th + DT / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0));
        self.omega = om + DT / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        if self.speed_limit {
            self.omega = self.omega.clamp(-Self::MAX_SPEED, Self::MAX_SPEED);
        }
        self.t += 1;
        Step {
            next_state: self.observe(),
            reward,
            done: self.t >= HORIZON,
        }
    }
}

/// One stored interaction.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Rollout {
    pub transitions: Vec<Transition>,
    /// Number of steps whose requested action had to be clipped into the box.
    pub clipped: usize,
}

/// Clips `action` into `[-1, 1]` in place; returns whether anything changed.
pub fn clip_action(action: &mut [f64]) -> bool {
    let mut changed = false;
    for a in action.iter_mut() {
        let c = if a.is_nan() { 0.0 } else { a.clamp(-1.0, 1.0) };
        if c != *a || a.is_nan() {
            changed = true;
        }
        *a = c;
    }
    changed
}

/// Runs `steps` interactions, resetting at episode ends.
pub fn rollout<E, P>(env: &mut E, mut policy: P, steps: usize) -> Rollout
where
    E: ContinuousEnv + ?Sized,
    P: FnMut(&[f64]) -> Vec<f64>,
{
    let mut out = Rollout::default();
    let mut state = env.reset();
    for _ in 0..steps {
        let mut action = policy(&state);
        if clip_action(&mut action) {
            out.clipped += 1;
        }
        let step = env.step(&action);
        let done = step.done;
        out.transitions.push(Transition {
            state: std::mem::replace(&mut state, step.next_state.clone()),
            action,
            reward: step.reward,
            next_state: step.next_state,
            done,
        });
        if done {
            state = env.reset();
        }
    }
    if out.clipped > 0 {
        log::warn!("{} of {steps} actions clipped into the action box", out.clipped);
    }
    out
}

/// Writes `step, s0.., a0.., reward, done` rows.
pub fn write_trajectory_csv<W: Write>(w: W, transitions: &[Transition]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    if let Some(first) = transitions.first() {
        let mut header = vec!["step".to_string()];
        header.extend((0..first.state.len()).map(|i| format!("s{i}")));
        header.extend((0..first.action.len()).map(|i| format!("a{i}")));
        header.push("reward".into());
        header.push("done".into());
        wtr.write_record(&header)?;
    }
    for (k, t) in transitions.iter().enumerate() {
        let mut row = vec![k.to_string()];
        row.extend(t.state.iter().map(f64::to_string));
        row.extend(t.action.iter().map(f64::to_string));
        row.push(t.reward.to_string());
        row.push(u8::from(t.done).to_string());
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Episode returns of a uniform-random policy.
pub fn random_policy_returns(kind: EnvKind, seed: u64, steps: usize) -> Vec<f64> {
    let mut env = kind.make(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_7a4d_0123);
    let dim = env.action_dim();
    let roll = rollout(env.as_mut(), |_| (0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect(), steps);
    episode_returns(&roll.transitions)
}

/// Sums rewards per completed episode.
pub fn episode_returns(transitions: &[Transition]) -> Vec<f64> {
    let mut out = Vec::new();
    let mut acc = 0.0;
    for t in transitions {
        acc += t.reward;
        if t.done {
            out.push(acc);
            acc = 0.0;
        }
    }
    out
}

/// Mean of the last `window` entries (all entries when fewer exist).
pub fn trailing_mean(xs: &[f64], window: usize) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let tail = &xs[xs.len().saturating_sub(window)..];
    Some(tail.iter().sum::<f64>() / tail.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Baseline {
    pub mean: f64,
    pub std: f64,
    pub seeds: usize,
}

/// Trailing-100 episodic return of the uniform-random policy after `steps`
/// steps, summarized across `seeds` seeds `0..seeds`.
pub fn random_baseline(kind: EnvKind, seeds: u64, steps: usize) -> Baseline {
    let finals: Vec<f64> = (0..seeds)
        .filter_map(|s| trailing_mean(&random_policy_returns(kind, s, steps), 100))
        .collect();
    let n = finals.len() as f64;
    let mean = finals.iter().sum::<f64>() / n;
    let var = finals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    Baseline {
        mean,
        std: var.sqrt(),
        seeds: finals.len(),
    }
}
