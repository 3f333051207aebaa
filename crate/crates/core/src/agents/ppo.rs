//! PPO with the clipped surrogate objective, GAE advantages, and a shared
//! encoder feeding separate policy and value heads.

use super::env::Obs;
use super::nets::PolicyValueNet;
use super::AgentError;
use crate::neural::{ops, Adam, AdamConfig, NeuralError, Tensor};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct PpoConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub clip: f64,
    pub rollout_len: usize,
    pub epochs: usize,
    pub minibatch: usize,
    pub value_coeff: f64,
    pub entropy_coeff: f64,
    pub lr: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            gamma: 0.99,
            lambda: 0.95,
            clip: 0.2,
            rollout_len: 1024,
            epochs: 4,
            minibatch: 64,
            value_coeff: 0.5,
            entropy_coeff: 0.01,
            lr: 1e-3,
        }
    }
}

/// One step of an on-policy rollout: the action's log-prob and the value
/// estimate are recorded at collection time under the frozen policy.
#[derive(Clone, Debug)]
pub struct PpoTransition {
    pub obs: Obs,
    pub action: usize,
    pub reward: f64,
    pub terminal: bool,
    pub logp_old: f64,
    pub value: f64,
}

/// Generalized advantage estimation over one rollout.
///
/// `values` has one bootstrap entry beyond the last reward (0 if that state
/// is terminal). Returns (normalized advantages, returns = raw A + v).
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    terminals: &[bool],
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let t_len = rewards.len();
    assert_eq!(values.len(), t_len + 1, "values must include the bootstrap entry");
    assert_eq!(terminals.len(), t_len);
    let mut adv = vec![0.0; t_len];
    let mut acc = 0.0;
    for t in (0..t_len).rev() {
        let cont = if terminals[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * values[t + 1] * cont - values[t];
        acc = delta + gamma * lambda * cont * acc;
        adv[t] = acc;
    }
    let returns: Vec<f64> = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    let mean = adv.iter().sum::<f64>() / t_len as f64;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / t_len as f64;
    let std = var.sqrt().max(1e-8);
    let normalized = adv.iter().map(|a| (a - mean) / std).collect();
    (normalized, returns)
}

/// Clipped-surrogate loss over one minibatch:
/// −mean(min(r·Â, clip(r)·Â)) + c_v·MSE(v, R) − c_e·entropy.
pub fn ppo_loss(
    net: &PolicyValueNet,
    batch: &[&PpoTransition],
    advantages: &[f64],
    returns: &[f64],
    config: &PpoConfig,
) -> Result<Tensor, NeuralError> {
    assert!(!batch.is_empty() && batch.len() == advantages.len() && batch.len() == returns.len());
    let obs: Vec<&Obs> = batch.iter().map(|t| &t.obs).collect();
    let actions: Vec<usize> = batch.iter().map(|t| t.action).collect();
    let b = batch.len();

    let (logits, values) = net.forward(&obs)?;
    let logp = ops::log_softmax(&logits)?;
    let logp_a = ops::gather_rows(&logp, &actions)?;
    let logp_old = Tensor::constant(&[b], batch.iter().map(|t| t.logp_old).collect());
    let ratio = ops::exp(&ops::sub(&logp_a, &logp_old)?)?;
    if ratio.data().iter().any(|v| !v.is_finite()) {
        return Err(NeuralError::NonFinite { name: "ppo ratio".into() });
    }
    let adv = Tensor::constant(&[b], advantages.to_vec());
    let unclipped = ops::mul(&ratio, &adv)?;
    let clipped = ops::mul(&ops::clip(&ratio, 1.0 - config.clip, 1.0 + config.clip)?, &adv)?;
    let surrogate = ops::mean(&ops::min_elem(&unclipped, &clipped)?)?;
    let policy_loss = ops::scale(&surrogate, -1.0)?;

    let ret = Tensor::constant(&[b], returns.to_vec());
    let vdiff = ops::sub(&values, &ret)?;
    let value_loss = ops::mean(&ops::mul(&vdiff, &vdiff)?)?;

    // entropy per sample is -sum_a p log p; average over the batch
    let probs = ops::softmax(&logits)?;
    let plogp = ops::mul(&probs, &logp)?;
    let entropy = ops::scale(&ops::sum(&plogp)?, -1.0 / b as f64)?;

    let loss = ops::add(
        &ops::add(&policy_loss, &ops::scale(&value_loss, config.value_coeff)?)?,
        &ops::scale(&entropy, -config.entropy_coeff)?,
    )?;
    Ok(loss)
}

pub struct PpoAgent {
    pub config: PpoConfig,
    pub net: PolicyValueNet,
    optimizer: Adam,
    rollout: Vec<PpoTransition>,
    pub env_steps: u64,
    pub last_loss: f64,
    pub last_clip_fraction: f64,
}

impl PpoAgent {
    pub fn new(config: PpoConfig, net: PolicyValueNet) -> PpoAgent {
        let optimizer = Adam::new(net.parameters(), AdamConfig { lr: config.lr, ..Default::default() });
        PpoAgent {
            config,
            net,
            optimizer,
            rollout: Vec::new(),
            env_steps: 0,
            last_loss: 0.0,
            last_clip_fraction: 0.0,
        }
    }

    /// Sample an action; returns (action, logp, value) for the transition.
    pub fn act(&self, obs: &Obs, rng: &mut ChaCha8Rng) -> Result<(usize, f64, f64), AgentError> {
        let (logp, value) = self.net.policy(obs)?;
        let u: f64 = rng.gen_range(0.0..1.0);
        let mut acc = 0.0;
        let mut action = logp.len() - 1;
        for (i, lp) in logp.iter().enumerate() {
            acc += lp.exp();
            if u < acc {
                action = i;
                break;
            }
        }
        Ok((action, logp[action], value))
    }

    /// True when the next stored transition completes the rollout (the
    /// caller then needs v(s_{T+1}) for bootstrapping).
    pub fn rollout_fills_next(&self) -> bool {
        self.rollout.len() + 1 >= self.config.rollout_len
    }

    /// Store one on-policy step; when the rollout is full, run the
    /// optimization phase. `bootstrap_value` is v of the state after the
    /// last stored transition (ignored if that transition was terminal).
    pub fn observe(
        &mut self,
        t: PpoTransition,
        bootstrap_value: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<(), AgentError> {
        self.rollout.push(t);
        self.env_steps += 1;
        if self.rollout.len() >= self.config.rollout_len {
            let tail = if self.rollout.last().unwrap().terminal {
                0.0
            } else {
                bootstrap_value
            };
            self.optimize(tail, rng)?;
        }
        Ok(())
    }

    fn optimize(&mut self, bootstrap_value: f64, rng: &mut ChaCha8Rng) -> Result<(), AgentError> {
        let rollout = std::mem::take(&mut self.rollout);
        let rewards: Vec<f64> = rollout.iter().map(|t| t.reward).collect();
        let terminals: Vec<bool> = rollout.iter().map(|t| t.terminal).collect();
        let mut values: Vec<f64> = rollout.iter().map(|t| t.value).collect();
        values.push(bootstrap_value);
        let (advantages, returns) = gae(&rewards, &values, &terminals, self.config.gamma, self.config.lambda);

        let mut order: Vec<usize> = (0..rollout.len()).collect();
        let mut clip_hits = 0usize;
        let mut clip_total = 0usize;
        for _ in 0..self.config.epochs {
            order.shuffle(rng);
            for chunk in order.chunks(self.config.minibatch) {
                let batch: Vec<&PpoTransition> = chunk.iter().map(|&i| &rollout[i]).collect();
                let adv: Vec<f64> = chunk.iter().map(|&i| advantages[i]).collect();
                let ret: Vec<f64> = chunk.iter().map(|&i| returns[i]).collect();
                let loss = ppo_loss(&self.net, &batch, &adv, &ret, &self.config)?;
                let value = loss.item();
                if !value.is_finite() {
                    return Err(AgentError::Diverged {
                        step: self.env_steps,
                        msg: format!("PPO loss {value}"),
                    });
                }
                self.last_loss = value;
                loss.backward()?;
                self.optimizer.step()?;
                // clip fraction for the curve: recompute ratios cheaply
                let (logits, _) = self.net.forward(&batch.iter().map(|t| &t.obs).collect::<Vec<_>>())?;
                let logp = ops::log_softmax(&logits)?;
                let actions: Vec<usize> = batch.iter().map(|t| t.action).collect();
                let logp_a = ops::gather_rows(&logp, &actions)?;
                for (lp, t) in logp_a.data().iter().zip(&batch) {
                    let ratio = (lp - t.logp_old).exp();
                    if (ratio - 1.0).abs() > self.config.clip {
                        clip_hits += 1;
                    }
                    clip_total += 1;
                }
            }
        }
        if clip_total > 0 {
            self.last_clip_fraction = clip_hits as f64 / clip_total as f64;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::nets::Encoder;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;

    fn flat(v: Vec<f32>) -> Obs {
        let n = v.len();
        Obs::Image { channels: 1, height: 1, width: n, data: v }
    }

    #[test]
    fn gae_single_terminal_step() {
        // lambda = 0, v = 0, r = 1, terminal -> A = [1] (normalization is a
        // no-op direction-wise for a single sample: (1 - 1)/floor = 0)
        let (adv, ret) = gae(&[1.0], &[0.0, 0.0], &[true], 0.99, 0.0);
        assert_eq!(ret, vec![1.0]);
        assert_abs_diff_eq!(adv[0], 0.0); // single-sample normalization centers it
    }

    #[test]
    fn gae_lambda_one_is_discounted_return_minus_baseline() {
        let gamma = 0.9;
        let rewards = [1.0, 2.0, 3.0];
        let values = [0.5, 0.25, 0.125, 0.0625];
        let terminals = [false, false, false];
        let (_, ret) = gae(&rewards, &values, &terminals, gamma, 1.0);
        // with lambda = 1: A_t = G_t - v_t where G_t bootstraps the tail value
        let g2 = 3.0 + gamma * 0.0625;
        let g1 = 2.0 + gamma * g2;
        let g0 = 1.0 + gamma * g1;
        assert_abs_diff_eq!(ret[0], g0, epsilon = 1e-12);
        assert_abs_diff_eq!(ret[1], g1, epsilon = 1e-12);
        assert_abs_diff_eq!(ret[2], g2, epsilon = 1e-12);
    }

    #[test]
    fn gae_matches_direct_double_sum() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let t_len = 50;
        let rewards: Vec<f64> = (0..t_len).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let values: Vec<f64> = (0..=t_len).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let terminals: Vec<bool> = (0..t_len).map(|i| i == 20 || i == 41).collect();
        let (gamma, lambda) = (0.99, 0.95);
        let (adv, _) = gae(&rewards, &values, &terminals, gamma, lambda);

        // O(T^2) oracle: direct sum of (gamma*lambda)^k delta_{t+k}, cut at
        // episode boundaries
        let mut raw = vec![0.0; t_len];
        for t in 0..t_len {
            let mut coeff = 1.0;
            for k in t..t_len {
                let cont = if terminals[k] { 0.0 } else { 1.0 };
                let delta = rewards[k] + gamma * values[k + 1] * cont - values[k];
                raw[t] += coeff * delta;
                if terminals[k] {
                    break;
                }
                coeff *= gamma * lambda;
            }
        }
        let mean = raw.iter().sum::<f64>() / t_len as f64;
        let std = (raw.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / t_len as f64)
            .sqrt()
            .max(1e-8);
        for (a, r) in adv.iter().zip(&raw) {
            assert_abs_diff_eq!(*a, (r - mean) / std, epsilon = 1e-6);
        }
    }

    /// Tiny 2-action policy with directly settable logits for loss tests.
    fn toy_net(logits: &[f64], value: f64) -> PolicyValueNet {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = PolicyValueNet::new(Encoder::Tabular { dim: 1 }, logits.len(), &mut rng);
        let p = net.parameters();
        p[0].set_data(logits); // policy w: (1, A)
        p[1].set_data(&vec![0.0; logits.len()]);
        p[2].set_data(&[value]); // value w: (1, 1)
        p[3].set_data(&[0.0]);
        net
    }

    fn tr(action: usize, logp_old: f64) -> PpoTransition {
        PpoTransition {
            obs: flat(vec![1.0]),
            action,
            reward: 0.0,
            terminal: false,
            logp_old,
            value: 0.0,
        }
    }

    /// Surrogate term only: configure coefficients to zero out the rest.
    fn surrogate_cfg() -> PpoConfig {
        PpoConfig { value_coeff: 0.0, entropy_coeff: 0.0, ..Default::default() }
    }

    #[test]
    fn clip_binds_for_large_positive_ratio() {
        // logits give logp_new; choose logp_old so ratio = 1.5, A = +1
        let net = toy_net(&[0.0, 0.0], 0.0); // uniform: logp_new = ln(0.5)
        let logp_old = (0.5f64 / 1.5).ln();
        let t = tr(0, logp_old);
        let loss = ppo_loss(&net, &[&t], &[1.0], &[0.0], &surrogate_cfg()).unwrap();
        // min(1.5, 1.2) * 1 = 1.2, loss = -1.2
        assert_abs_diff_eq!(loss.item(), -1.2, epsilon = 1e-9);
    }

    #[test]
    fn negative_advantage_takes_unclipped_smaller_ratio() {
        // ratio = 0.5, A = -1 -> min(-0.5, -0.8) = -0.8, loss = +0.8
        let net = toy_net(&[0.0, 0.0], 0.0);
        let logp_old = (0.5f64 / 0.5).ln();
        let t = tr(0, logp_old);
        let loss = ppo_loss(&net, &[&t], &[-1.0], &[0.0], &surrogate_cfg()).unwrap();
        assert_abs_diff_eq!(loss.item(), 0.8, epsilon = 1e-9);
    }

    #[test]
    fn ratio_one_matches_unclipped_objective() {
        // at the first epoch step logp_old = logp_new, so clip is inert:
        // loss = -A * 1
        let net = toy_net(&[0.3, -0.4], 0.0);
        let (logp, _) = net.policy(&flat(vec![1.0])).unwrap();
        let t = tr(1, logp[1]);
        let loss = ppo_loss(&net, &[&t], &[0.7], &[0.0], &surrogate_cfg()).unwrap();
        assert_abs_diff_eq!(loss.item(), -0.7, epsilon = 1e-9);
    }

    #[test]
    fn clipped_sample_has_zero_policy_gradient() {
        // ratio far above the band with A > 0: clip binds, d(loss)/d(policy) = 0
        let net = toy_net(&[0.0, 0.0], 0.0);
        let logp_old = (0.5f64 / 2.0).ln(); // ratio = 2.0
        let t = tr(0, logp_old);
        let loss = ppo_loss(&net, &[&t], &[1.0], &[0.0], &surrogate_cfg()).unwrap();
        loss.backward().unwrap();
        let p = net.parameters();
        assert!(p[0].grad().iter().all(|&g| g.abs() < 1e-12), "{:?}", *p[0].grad());
    }

    #[test]
    fn value_and_entropy_terms_contribute() {
        let net = toy_net(&[0.0, 0.0], 1.0); // v(s) = 1 for s = [1]
        let (logp, _) = net.policy(&flat(vec![1.0])).unwrap();
        let t = tr(0, logp[0]);
        let cfg = PpoConfig::default();
        let loss = ppo_loss(&net, &[&t], &[0.0], &[3.0], &cfg).unwrap();
        // surrogate 0 (A = 0), value MSE (1-3)^2 = 4, entropy of uniform = ln 2
        let expected = 0.0 + 0.5 * 4.0 - 0.01 * 2.0f64.ln();
        assert_abs_diff_eq!(loss.item(), expected, epsilon = 1e-9);
    }
}
