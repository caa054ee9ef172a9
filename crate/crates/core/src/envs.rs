//! Dependency-free continuous-control tasks.
//!
//! Episodes end only by time limit; [`StepResult::truncated`] reports it so
//! a learner can keep bootstrapping through the cut.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("action has {actual} components, environment expects {expected}")]
    ActionDim { expected: usize, actual: usize },
    #[error("non-finite action component {0}")]
    NonFiniteAction(f64),
    #[error("unknown environment {0:?}")]
    Unknown(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub obs: Vec<f64>,
    pub reward: f64,
    /// Physical termination. Neither built-in task ever terminates.
    pub terminated: bool,
    /// Episode hit its horizon.
    pub truncated: bool,
}

pub trait Environment: Send {
    fn name(&self) -> &'static str;
    fn obs_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn horizon(&self) -> usize;
    /// Starts a new episode from the seed's initial-state draw.
    fn reset(&mut self, seed: u64) -> Vec<f64>;
    fn step(&mut self, action: &[f64]) -> Result<StepResult, EnvError>;
}

pub const ENV_NAMES: [&str; 2] = ["pendulum", "pointreach"];

pub fn make_env(name: &str) -> Result<Box<dyn Environment>, EnvError> {
    match name {
        "pendulum" => Ok(Box::new(Pendulum::new())),
        "pointreach" => Ok(Box::new(PointReach::new())),
        other => Err(EnvError::Unknown(other.to_string())),
    }
}

fn check_action(action: &[f64], expected: usize) -> Result<(), EnvError> {
    if action.len() != expected {
        return Err(EnvError::ActionDim {
            expected,
            actual: action.len(),
        });
    }
    if let Some(&bad) = action.iter().find(|a| !a.is_finite()) {
        return Err(EnvError::NonFiniteAction(bad));
    }
    Ok(())
}

/// Wraps an angle into `[-pi, pi)`.
pub fn wrap_angle(theta: f64) -> f64 {
    use std::f64::consts::PI;
    (theta + PI).rem_euclid(2.0 * PI) - PI
}

/// Torque-limited swing-up of a uniform rod; `theta = 0` is upright.
///
/// Observations are `(cos theta, sin theta, theta_dot)`, bounded by
/// `(1, 1, MAX_SPEED)`. Rewards lie in `[-(pi^2 + 0.1 * 64 + 0.004), 0]`.
#[derive(Clone, Debug)]
pub struct Pendulum {
    pub theta: f64,
    pub theta_dot: f64,
    steps: usize,
}

impl Pendulum {
    pub const DT: f64 = 0.05;
    pub const GRAVITY: f64 = 10.0;
    pub const MASS: f64 = 1.0;
    pub const LENGTH: f64 = 1.0;
    pub const MAX_TORQUE: f64 = 2.0;
    pub const MAX_SPEED: f64 = 8.0;
    pub const HORIZON: usize = 200;

    pub fn new() -> Self {
        Self::from_state(std::f64::consts::PI, 0.0)
    }

    pub fn from_state(theta: f64, theta_dot: f64) -> Self {
        Self {
            theta,
            theta_dot,
            steps: 0,
        }
    }

    pub fn observation(&self) -> Vec<f64> {
        vec![self.theta.cos(), self.theta.sin(), self.theta_dot]
    }

    /// Kinetic plus potential energy of the rod about its pivot.
    pub fn energy(&self) -> f64 {
        let inertia = Self::MASS * Self::LENGTH * Self::LENGTH / 3.0;
        0.5 * inertia * self.theta_dot * self.theta_dot
            + Self::MASS * Self::GRAVITY * Self::LENGTH / 2.0 * self.theta.cos()
    }

    pub fn reward(theta: f64, theta_dot: f64, torque: f64) -> f64 {
        let th = wrap_angle(theta);
        -(th * th + 0.1 * theta_dot * theta_dot + 0.001 * torque * torque)
    }
}

impl Default for Pendulum {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for Pendulum {
    fn name(&self) -> &'static str {
        "pendulum"
    }

    fn obs_dim(&self) -> usize {
        3
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn horizon(&self) -> usize {
        Self::HORIZON
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        use std::f64::consts::PI;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.theta = rng.random_range(-PI..PI);
        self.theta_dot = rng.random_range(-1.0..1.0);
        self.steps = 0;
        self.observation()
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult, EnvError> {
        check_action(action, 1)?;
        let u = action[0].clamp(-1.0, 1.0) * Self::MAX_TORQUE;
        let reward = Self::reward(self.theta, self.theta_dot, u);
        let (g, m, l) = (Self::GRAVITY, Self::MASS, Self::LENGTH);
        let accel = 3.0 * g / (2.0 * l) * self.theta.sin() + 3.0 / (m * l * l) * u;
        self.theta_dot = (self.theta_dot + accel * Self::DT).clamp(-Self::MAX_SPEED, Self::MAX_SPEED);
        self.theta += self.theta_dot * Self::DT;
        self.steps += 1;
        Ok(StepResult {
            obs: self.observation(),
            reward,
            terminated: false,
            truncated: self.steps >= Self::HORIZON,
        })
    }
}

/// Planar point steered by a velocity command toward a per-episode goal.
///
/// Observations are `(pos, goal)`; positions stay inside `[-2, 2]^2`, goals
/// inside `[-1, 1]^2`. Reward is `-|pos - goal|`, plus 1 within 0.05 of the
/// goal.
#[derive(Clone, Debug)]
pub struct PointReach {
    pub pos: [f64; 2],
    pub goal: [f64; 2],
    steps: usize,
}

impl PointReach {
    pub const DT: f64 = 0.05;
    pub const MAX_SPEED: f64 = 1.0;
    pub const SUCCESS_RADIUS: f64 = 0.05;
    pub const BOUND: f64 = 2.0;
    pub const HORIZON: usize = 100;

    pub fn new() -> Self {
        Self::from_state([0.0, 0.0], [0.5, 0.0])
    }

    pub fn from_state(pos: [f64; 2], goal: [f64; 2]) -> Self {
        Self {
            pos,
            goal,
            steps: 0,
        }
    }

    pub fn observation(&self) -> Vec<f64> {
        vec![self.pos[0], self.pos[1], self.goal[0], self.goal[1]]
    }

    pub fn reward(pos: [f64; 2], goal: [f64; 2]) -> f64 {
        let dist = (pos[0] - goal[0]).hypot(pos[1] - goal[1]);
        let bonus = if dist <= Self::SUCCESS_RADIUS { 1.0 } else { 0.0 };
        bonus - dist
    }
}

impl Default for PointReach {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for PointReach {
    fn name(&self) -> &'static str {
        "pointreach"
    }

    fn obs_dim(&self) -> usize {
        4
    }

    fn action_dim(&self) -> usize {
        2
    }

    fn horizon(&self) -> usize {
        Self::HORIZON
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.pos = [0.0, 0.0];
        self.goal = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        self.steps = 0;
        self.observation()
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult, EnvError> {
        check_action(action, 2)?;
        let mut v = [action[0].clamp(-1.0, 1.0), action[1].clamp(-1.0, 1.0)];
        let speed = v[0].hypot(v[1]);
        if speed > Self::MAX_SPEED {
            v = [v[0] / speed * Self::MAX_SPEED, v[1] / speed * Self::MAX_SPEED];
        }
        for (p, vk) in self.pos.iter_mut().zip(v) {
            *p = (*p + vk * Self::DT).clamp(-Self::BOUND, Self::BOUND);
        }
        self.steps += 1;
        Ok(StepResult {
            obs: self.observation(),
            reward: Self::reward(self.pos, self.goal),
            terminated: false,
            truncated: self.steps >= Self::HORIZON,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn pendulum_reward_examples() {
        assert_eq!(Pendulum::reward(0.0, 0.0, 0.0), 0.0);
        assert!((Pendulum::reward(PI, 0.0, 0.0) + PI * PI).abs() < 1e-12);
        assert!((Pendulum::reward(PI, 0.0, 0.0) + 9.87).abs() < 1e-2);
        let mut env = Pendulum::from_state(0.0, 0.0);
        assert_eq!(env.step(&[0.0]).unwrap().reward, 0.0);
    }

    #[test]
    fn pendulum_energy_drift_is_small() {
        let mut env = Pendulum::from_state(PI - 1.0, 0.0);
        let e0 = env.energy();
        let scale = Pendulum::MASS * Pendulum::GRAVITY * Pendulum::LENGTH;
        let mut worst: f64 = 0.0;
        for _ in 0..200 {
            env.step(&[0.0]).unwrap();
            worst = worst.max((env.energy() - e0).abs());
        }
        // Relative to the potential-energy range m g l of the rod.
        assert!(worst / scale < 0.05, "drift {}", worst / scale);
    }

    #[test]
    fn pendulum_horizon_truncates() {
        let mut env = Pendulum::new();
        env.reset(3);
        for k in 1..=200 {
            let r = env.step(&[0.3]).unwrap();
            assert!(!r.terminated);
            assert_eq!(r.truncated, k == 200);
            assert!(r.obs[2].abs() <= Pendulum::MAX_SPEED);
        }
    }

    #[test]
    fn non_finite_action_is_rejected() {
        let mut env = Pendulum::new();
        assert!(matches!(env.step(&[f64::NAN]), Err(EnvError::NonFiniteAction(_))));
        let mut env = PointReach::new();
        assert!(matches!(env.step(&[0.0]), Err(EnvError::ActionDim { .. })));
    }

    #[test]
    fn pointreach_examples() {
        assert_eq!(PointReach::reward([0.3, 0.2], [0.3, 0.2]), 1.0);
        let mut env = PointReach::from_state([0.1, -0.2], [0.5, 0.5]);
        env.step(&[0.0, 0.0]).unwrap();
        assert_eq!(env.pos, [0.1, -0.2]);

        let mut env = PointReach::from_state([0.0, 0.0], [0.3, 0.4]);
        let mut steps = 0;
        loop {
            let d = [env.goal[0] - env.pos[0], env.goal[1] - env.pos[1]];
            let n = d[0].hypot(d[1]);
            if n <= PointReach::SUCCESS_RADIUS * 1e-6 {
                break;
            }
            let scale = (n / PointReach::DT).min(1.0) / n;
            env.step(&[d[0] * scale, d[1] * scale]).unwrap();
            steps += 1;
        }
        assert_eq!(steps, (0.5f64 / (1.0 * 0.05)).ceil() as usize);
    }

    #[test]
    fn reset_is_seeded() {
        for name in ENV_NAMES {
            let mut a = make_env(name).unwrap();
            let mut b = make_env(name).unwrap();
            assert_eq!(a.reset(17), b.reset(17));
            assert_ne!(a.reset(17), a.reset(18));
        }
        assert_eq!(make_env("pendulum").unwrap().reset(0).len(), 3);
        assert_eq!(make_env("pointreach").unwrap().reset(0).len(), 4);
        assert!(make_env("cartpole").is_err());
    }

    #[test]
    fn pendulum_initial_angle_is_centered() {
        let mut env = Pendulum::new();
        let n = 10_000;
        let thetas: Vec<f64> = (0..n)
            .map(|s| {
                env.reset(s);
                env.theta
            })
            .collect();
        let mean = thetas.iter().sum::<f64>() / n as f64;
        let stderr = (PI * PI / 3.0 / n as f64).sqrt();
        assert!(mean.abs() < 3.0 * stderr);
        assert!(thetas.iter().all(|t| (-PI..PI).contains(t)));
    }

    #[test]
    fn trajectories_are_deterministic() {
        let run = || {
            let mut env = make_env("pendulum").unwrap();
            let mut obs = env.reset(5);
            for k in 0..50 {
                obs = env.step(&[(k as f64 * 0.1).sin()]).unwrap().obs;
            }
            obs
        };
        assert_eq!(run(), run());
    }
}
