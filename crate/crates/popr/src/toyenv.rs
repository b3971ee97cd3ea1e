//! N-state ring environment with a scripted expert and ε-degraded mixture
//! policies.
//!
//! States `0..n` form a ring. `Forward` moves one state up (mod n),
//! `Backward` one state down, and with probability `slip_prob` the agent
//! instead lands uniformly on one of the other `n - 1` states. The reward of
//! a transition is the index of the state it lands on, so the top of the ring
//! is where the reward is. The expert climbs to the top and then oscillates
//! between the two highest states; mixing it with uniform noise at rate ε
//! yields a family of candidates whose true quality decreases in ε, which
//! gives tests a known ground-truth ordering.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::core::{
    Action, ActionSpace, CoreError, ExpertDataset, Policy, PolicyError, Step, Trajectory,
};
use crate::parallel::par_map;
use crate::seed::SeedMix;

/// Ring environment parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyEnvConfig {
    pub n_states: usize,
    pub slip_prob: f64,
    pub episode_length: usize,
    pub seed: u64,
}

impl Default for ToyEnvConfig {
    fn default() -> Self {
        ToyEnvConfig { n_states: 10, slip_prob: 0.1, episode_length: 100, seed: 0 }
    }
}

impl ToyEnvConfig {
    pub fn validate(&self) -> Result<(), ToyEnvError> {
        if self.n_states < 3 {
            return Err(ToyEnvError::InvalidConfig {
                detail: format!("n_states must be >= 3, got {}", self.n_states),
            });
        }
        if !(0.0..=1.0).contains(&self.slip_prob) {
            return Err(ToyEnvError::InvalidConfig {
                detail: format!("slip_prob must be in [0, 1], got {}", self.slip_prob),
            });
        }
        if self.episode_length == 0 {
            return Err(ToyEnvError::InvalidConfig {
                detail: "episode_length must be >= 1".into(),
            });
        }
        Ok(())
    }

    pub fn action_space(&self) -> ActionSpace {
        ActionSpace::Discrete { n: 2 }
    }
}

/// The two ring actions. Encoded as discrete indices 0 (forward) and
/// 1 (backward) everywhere actions are logged.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToyAction {
    Forward,
    Backward,
}

impl ToyAction {
    pub fn index(self) -> usize {
        match self {
            ToyAction::Forward => 0,
            ToyAction::Backward => 1,
        }
    }

    pub fn from_action(action: &Action) -> Result<Self, ToyEnvError> {
        match action {
            Action::Discrete(0) => Ok(ToyAction::Forward),
            Action::Discrete(1) => Ok(ToyAction::Backward),
            other => Err(ToyEnvError::NonToyAction { action: format!("{other:?}") }),
        }
    }
}

impl From<ToyAction> for Action {
    fn from(a: ToyAction) -> Action {
        Action::Discrete(a.index())
    }
}

/// Spec for an ε-mixture of the expert and uniform noise.
///
/// ε = 0 reproduces the expert exactly; ε = 1 is uniform random. The seed
/// salts every RNG stream derived for the policy, so two mixtures with the
/// same ε but different seeds behave differently (yet each reproducibly).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixturePolicySpec {
    pub epsilon: f64,
    pub seed: u64,
}

/// One environment transition.
///
/// With probability `1 - slip_prob` the action moves the agent one state
/// around the ring; otherwise the agent lands uniformly on one of the other
/// `n - 1` states. The reward is the index of the next state.
pub fn toy_step(
    config: &ToyEnvConfig,
    state: usize,
    action: ToyAction,
    rng: &mut dyn RngCore,
) -> Result<(usize, f64), ToyEnvError> {
    let n = config.n_states;
    if state >= n {
        return Err(ToyEnvError::StateOutOfRange { state, n_states: n });
    }
    let slipped = rng.random::<f64>() < config.slip_prob;
    let next = if slipped {
        // uniform over the other n - 1 states
        let k = rng.random_range(0..n - 1);
        if k >= state {
            k + 1
        } else {
            k
        }
    } else {
        match action {
            ToyAction::Forward => (state + 1) % n,
            ToyAction::Backward => (state + n - 1) % n,
        }
    };
    Ok((next, next as f64))
}

/// Scripted expert: moves up the ring and oscillates between the two
/// top states (`n - 2` and `n - 1`).
#[derive(Debug, Clone)]
pub struct ExpertPolicy {
    id: String,
    n_states: usize,
}

impl ExpertPolicy {
    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    fn ring_state(&self, state: &[f64]) -> Result<usize, PolicyError> {
        if state.len() != 1 {
            return Err(PolicyError::StateDimension { expected: 1, got: state.len() });
        }
        let s = state[0].round();
        if s < 0.0 || s >= self.n_states as f64 {
            return Err(PolicyError::StateOutOfDomain {
                detail: format!("ring index {} not in [0, {})", state[0], self.n_states),
            });
        }
        Ok(s as usize)
    }

    fn expert_action(&self, s: usize) -> ToyAction {
        if s == self.n_states - 1 {
            ToyAction::Backward
        } else {
            ToyAction::Forward
        }
    }
}

pub fn expert_policy(n_states: usize) -> ExpertPolicy {
    debug_assert!(n_states >= 3);
    ExpertPolicy { id: "toy-expert".into(), n_states }
}

impl Policy for ExpertPolicy {
    fn id(&self) -> &str {
        &self.id
    }

    fn act(&self, state: &[f64], _rng: &mut dyn RngCore) -> Result<Action, PolicyError> {
        let s = self.ring_state(state)?;
        Ok(self.expert_action(s).into())
    }

    fn act_dist(&self, state: &[f64]) -> Option<Vec<f64>> {
        let s = self.ring_state(state).ok()?;
        let mut dist = vec![0.0, 0.0];
        dist[self.expert_action(s).index()] = 1.0;
        Some(dist)
    }
}

/// ε-mixture of the expert and a uniform action choice.
#[derive(Debug, Clone)]
pub struct MixturePolicy {
    id: String,
    spec: MixturePolicySpec,
    expert: ExpertPolicy,
}

impl MixturePolicy {
    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn spec(&self) -> MixturePolicySpec {
        self.spec
    }
}

pub fn mixture_policy(spec: MixturePolicySpec, n_states: usize) -> MixturePolicy {
    debug_assert!((0.0..=1.0).contains(&spec.epsilon));
    MixturePolicy {
        id: format!("toy-mixture-{:.2}", spec.epsilon),
        spec,
        expert: expert_policy(n_states),
    }
}

impl Policy for MixturePolicy {
    fn id(&self) -> &str {
        &self.id
    }

    fn act(&self, state: &[f64], rng: &mut dyn RngCore) -> Result<Action, PolicyError> {
        let s = self.expert.ring_state(state)?;
        let noisy = rng.random::<f64>() < self.spec.epsilon;
        let action = if noisy {
            if rng.random::<f64>() < 0.5 {
                ToyAction::Forward
            } else {
                ToyAction::Backward
            }
        } else {
            self.expert.expert_action(s)
        };
        Ok(action.into())
    }

    fn act_dist(&self, state: &[f64]) -> Option<Vec<f64>> {
        let s = self.expert.ring_state(state).ok()?;
        let eps = self.spec.epsilon;
        let mut dist = vec![eps / 2.0, eps / 2.0];
        dist[self.expert.expert_action(s).index()] += 1.0 - eps;
        Some(dist)
    }

    fn seed_salt(&self) -> u64 {
        self.spec.seed
    }
}

fn rollout(
    config: &ToyEnvConfig,
    policy: &dyn Policy,
    namespace: &str,
    episode: u64,
) -> Result<Vec<Step>, ToyEnvError> {
    let mut env_rng = SeedMix::new(config.seed)
        .text(namespace)
        .text("env")
        .num(episode)
        .rng();
    let mut policy_rng = SeedMix::new(config.seed)
        .text(namespace)
        .text("policy")
        .num(episode)
        .num(policy.seed_salt())
        .rng();

    let mut steps = Vec::with_capacity(config.episode_length);
    let mut state = 0usize; // episodes always start at the bottom of the ring
    for _ in 0..config.episode_length {
        let logged = policy
            .act(&[state as f64], &mut policy_rng)
            .map_err(|source| CoreError::Policy { id: policy.id().to_string(), source })?;
        let action = ToyAction::from_action(&logged)?;
        let (next, reward) = toy_step(config, state, action, &mut env_rng)?;
        steps.push(Step {
            state: vec![state as f64],
            action: logged,
            reward: Some(reward),
            next_state: vec![next as f64],
        });
        state = next;
    }
    Ok(steps)
}

/// Roll out `episodes` trajectories of `config.episode_length` steps each,
/// with rewards recorded.
///
/// Episode sub-seeds are derived from `config.seed` and the episode index, so
/// generation is deterministic and order-independent; episodes may run in
/// parallel.
pub fn generate_dataset(
    config: &ToyEnvConfig,
    policy: &dyn Policy,
    episodes: usize,
) -> Result<ExpertDataset, ToyEnvError> {
    config.validate()?;
    if episodes == 0 {
        return Err(ToyEnvError::InvalidConfig { detail: "episodes must be >= 1".into() });
    }
    let space = config.action_space();
    let indices: Vec<u64> = (0..episodes as u64).collect();
    let results = par_map(&indices, |&ep| {
        rollout(config, policy, "dataset", ep)
            .and_then(|steps| Trajectory::new(steps, &space).map_err(ToyEnvError::from))
    });
    let trajectories = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(ExpertDataset::new(trajectories, space)?)
}

/// Mean total reward per episode over `episodes` seeded rollouts.
///
/// This is the ground-truth performance oracle for ranking tests: it uses the
/// environment directly and is independent of any posterior estimation.
pub fn mean_episode_reward(
    config: &ToyEnvConfig,
    policy: &dyn Policy,
    episodes: usize,
) -> Result<f64, ToyEnvError> {
    config.validate()?;
    if episodes == 0 {
        return Err(ToyEnvError::InvalidConfig { detail: "episodes must be >= 1".into() });
    }
    let indices: Vec<u64> = (0..episodes as u64).collect();
    let returns = par_map(&indices, |&ep| {
        rollout(config, policy, "rollout", ep)
            .map(|steps| steps.iter().filter_map(|s| s.reward).sum::<f64>())
    });
    let mut total = 0.0;
    for r in returns {
        total += r?;
    }
    Ok(total / episodes as f64)
}

#[derive(Debug, Error)]
pub enum ToyEnvError {
    #[error("invalid toy environment config: {detail}")]
    InvalidConfig { detail: String },
    #[error("state {state} out of range for {n_states}-state ring")]
    StateOutOfRange { state: usize, n_states: usize },
    #[error("action {action} is not a ring action (discrete 0 or 1)")]
    NonToyAction { action: String },
    #[error(transparent)]
    Core(#[from] CoreError),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::replay_actions;

    fn no_slip() -> ToyEnvConfig {
        ToyEnvConfig { slip_prob: 0.0, ..ToyEnvConfig::default() }
    }

    #[test]
    fn forward_moves_up_and_rewards_next_state() {
        let mut rng = SeedMix::new(0).rng();
        let (next, reward) = toy_step(&no_slip(), 4, ToyAction::Forward, &mut rng).unwrap();
        assert_eq!((next, reward), (5, 5.0));
    }

    #[test]
    fn backward_wraps_around() {
        let mut rng = SeedMix::new(0).rng();
        let (next, reward) = toy_step(&no_slip(), 0, ToyAction::Backward, &mut rng).unwrap();
        assert_eq!((next, reward), (9, 9.0));
    }

    #[test]
    fn state_out_of_range_is_an_error() {
        let mut rng = SeedMix::new(0).rng();
        assert!(matches!(
            toy_step(&no_slip(), 10, ToyAction::Forward, &mut rng),
            Err(ToyEnvError::StateOutOfRange { state: 10, n_states: 10 })
        ));
    }

    #[test]
    fn full_slip_is_uniform_over_other_states() {
        let config = ToyEnvConfig { slip_prob: 1.0, ..ToyEnvConfig::default() };
        let mut rng = SeedMix::new(7).rng();
        let mut counts = vec![0u32; 10];
        let draws = 100_000;
        for _ in 0..draws {
            let (next, _) = toy_step(&config, 3, ToyAction::Forward, &mut rng).unwrap();
            counts[next] += 1;
        }
        assert_eq!(counts[3], 0);
        for (s, &c) in counts.iter().enumerate() {
            if s == 3 {
                continue;
            }
            let freq = f64::from(c) / draws as f64;
            assert!((freq - 1.0 / 9.0).abs() < 0.01, "state {s} frequency {freq}");
        }
    }

    #[test]
    fn expert_oscillates_at_the_top() {
        let expert = expert_policy(10);
        let mut rng = SeedMix::new(0).rng();
        let act = |s: f64| expert.act(&[s], &mut SeedMix::new(0).rng()).unwrap();
        assert_eq!(act(8.0), Action::Discrete(0));
        assert_eq!(act(9.0), Action::Discrete(1));
        assert_eq!(act(0.0), Action::Discrete(0));
        assert!(expert.act(&[0.0, 1.0], &mut rng).is_err());
    }

    #[test]
    fn generate_dataset_respects_defaults() {
        let config = ToyEnvConfig::default();
        let expert = expert_policy(config.n_states);
        let data = generate_dataset(&config, &expert, 20).unwrap();
        assert_eq!(data.len(), 20);
        assert!(data.trajectories().iter().all(|t| t.len() == 100));
        // reward always equals the index of the next state
        for traj in data.trajectories() {
            for step in traj.steps() {
                assert_eq!(step.reward, Some(step.next_state[0]));
            }
        }
    }

    #[test]
    fn deterministic_expert_climbs_then_alternates() {
        let config = ToyEnvConfig { slip_prob: 0.0, episode_length: 15, ..ToyEnvConfig::default() };
        let expert = expert_policy(config.n_states);
        let data = generate_dataset(&config, &expert, 1).unwrap();
        let visited: Vec<usize> = data.trajectories()[0]
            .steps()
            .iter()
            .map(|s| s.next_state[0] as usize)
            .collect();
        assert_eq!(visited, vec![1, 2, 3, 4, 5, 6, 7, 8, 9, 8, 9, 8, 9, 8, 9]);
    }

    #[test]
    fn generation_is_deterministic() {
        let config = ToyEnvConfig::default();
        let policy = mixture_policy(MixturePolicySpec { epsilon: 0.3, seed: 5 }, 10);
        let a = generate_dataset(&config, &policy, 5).unwrap();
        let b = generate_dataset(&config, &policy, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_mixture_matches_expert() {
        let expert = expert_policy(10);
        let mix = mixture_policy(MixturePolicySpec { epsilon: 0.0, seed: 1 }, 10);
        let config = ToyEnvConfig::default();
        let data = generate_dataset(&config, &expert, 3).unwrap();
        for traj in data.trajectories() {
            let a = replay_actions(&expert, traj, &mut SeedMix::new(0).rng()).unwrap();
            let b = replay_actions(&mix, traj, &mut SeedMix::new(1).rng()).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn full_mixture_is_a_fair_coin() {
        let mix = mixture_policy(MixturePolicySpec { epsilon: 1.0, seed: 2 }, 10);
        let mut rng = SeedMix::new(11).rng();
        let mut forward = 0u32;
        let draws = 100_000;
        for i in 0..draws {
            let state = [f64::from(i % 10)];
            if mix.act(&state, &mut rng).unwrap() == Action::Discrete(0) {
                forward += 1;
            }
        }
        let freq = f64::from(forward) / f64::from(draws);
        assert!((freq - 0.5).abs() < 0.01, "forward frequency {freq}");
    }

    #[test]
    fn mixture_replay_is_reproducible() {
        let mix = mixture_policy(MixturePolicySpec { epsilon: 0.5, seed: 9 }, 10);
        let config = ToyEnvConfig::default();
        let data = generate_dataset(&config, &expert_policy(10), 2).unwrap();
        let traj = &data.trajectories()[0];
        let a = replay_actions(&mix, traj, &mut SeedMix::new(4).rng()).unwrap();
        let b = replay_actions(&mix, traj, &mut SeedMix::new(4).rng()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn act_is_supported_by_act_dist() {
        let policies: Vec<Box<dyn Policy>> = vec![
            Box::new(expert_policy(10)),
            Box::new(mixture_policy(MixturePolicySpec { epsilon: 0.4, seed: 3 }, 10)),
        ];
        let mut rng = SeedMix::new(21).rng();
        for policy in &policies {
            for s in 0..10 {
                let state = [s as f64];
                let dist = policy.act_dist(&state).unwrap();
                assert!((dist.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                for _ in 0..20 {
                    let a = policy.act(&state, &mut rng).unwrap().as_index().unwrap();
                    assert!(dist[a] > 0.0);
                }
            }
        }
    }

    #[test]
    fn noisier_mixtures_earn_less_reward() {
        let config = ToyEnvConfig::default();
        let low = mixture_policy(MixturePolicySpec { epsilon: 0.2, seed: 0 }, 10);
        let high = mixture_policy(MixturePolicySpec { epsilon: 0.8, seed: 0 }, 10);
        let r_low = mean_episode_reward(&config, &low, 1000).unwrap();
        let r_high = mean_episode_reward(&config, &high, 1000).unwrap();
        assert!(r_low > r_high, "expected {r_low} > {r_high}");
    }
}
