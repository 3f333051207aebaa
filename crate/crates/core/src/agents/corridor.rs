//! Five-state corridor MDP with a value-iteration oracle. Used to verify
//! the full DQN loop against exactly computable Q values.

use super::env::{Environment, Obs};
use super::AgentError;

pub const N_STATES: usize = 5;
pub const N_ACTIONS: usize = 2; // 0 = left, 1 = right
pub const STEP_REWARD: f64 = -0.05;
pub const GOAL_REWARD: f64 = 1.0;

/// Deterministic chain: start at state 0, `right` from the last state ends
/// the episode with +1; every step costs a little. The generous step cap
/// only bounds runaway rollouts; treating it as terminal is a negligible
/// bias because even a mostly-random policy reaches the goal sooner.
pub struct Corridor {
    state: usize,
    steps: usize,
}

impl Corridor {
    pub const MAX_STEPS: usize = 100;

    pub fn new() -> Corridor {
        Corridor { state: 0, steps: 0 }
    }

    fn obs(&self) -> Obs {
        let mut data = vec![0.0f32; N_STATES];
        data[self.state] = 1.0;
        Obs::Image { channels: 1, height: 1, width: N_STATES, data }
    }
}

impl Default for Corridor {
    fn default() -> Self {
        Corridor::new()
    }
}

impl Environment for Corridor {
    fn n_actions(&self) -> usize {
        N_ACTIONS
    }

    fn reset(&mut self) -> Result<Obs, AgentError> {
        self.state = 0;
        self.steps = 0;
        Ok(self.obs())
    }

    fn step(&mut self, action: usize) -> Result<(Obs, f64, bool), AgentError> {
        self.steps += 1;
        let mut reward = STEP_REWARD;
        let mut terminal = false;
        if action == 1 {
            if self.state == N_STATES - 1 {
                reward += GOAL_REWARD;
                terminal = true;
            } else {
                self.state += 1;
            }
        } else if self.state > 0 {
            self.state -= 1;
        }
        if self.steps >= Self::MAX_STEPS {
            terminal = true;
        }
        Ok((self.obs(), reward, terminal))
    }
}

/// Exact Q* via value iteration on the infinite-horizon chain (the step cap
/// only exists to bound rollouts; the oracle ignores it, and so does a
/// near-greedy agent since the optimal episode lasts 5 steps).
pub fn value_iteration(gamma: f64, sweeps: usize) -> Vec<[f64; N_ACTIONS]> {
    let mut q = vec![[0.0; N_ACTIONS]; N_STATES];
    for _ in 0..sweeps {
        let prev = q.clone();
        for s in 0..N_STATES {
            // action right
            q[s][1] = if s == N_STATES - 1 {
                STEP_REWARD + GOAL_REWARD
            } else {
                let sp = s + 1;
                STEP_REWARD + gamma * prev[sp].iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            };
            // action left
            let sp = s.saturating_sub(1);
            q[s][0] = STEP_REWARD + gamma * prev[sp].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        }
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn oracle_prefers_right_everywhere() {
        let q = value_iteration(0.99, 500);
        for s in 0..N_STATES {
            assert!(q[s][1] > q[s][0], "state {s}: {:?}", q[s]);
        }
        // closed form for the goal state
        assert_abs_diff_eq!(q[N_STATES - 1][1], 0.95, epsilon = 1e-10);
    }

    #[test]
    fn optimal_episode_return() {
        // 5 rights: 4 * (-0.05) + (-0.05 + 1) = 0.75
        let mut env = Corridor::new();
        env.reset().unwrap();
        let mut total = 0.0;
        for _ in 0..5 {
            let (_, r, t) = env.step(1).unwrap();
            total += r;
            if t {
                break;
            }
        }
        assert_abs_diff_eq!(total, 0.75, epsilon = 1e-12);
    }
}
