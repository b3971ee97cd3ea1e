//! Domain types shared by the whole crate: trajectories, datasets, action
//! spaces, and the policy abstraction.
//!
//! All types here are immutable after construction and safe to share across
//! threads. Policies are queried through [`Policy::act`], which takes the RNG
//! stream explicitly so that every stochastic decision is reproducible from a
//! named seed.

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed::SeedMix;

/// The action space shared by a dataset and the policies evaluated on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActionSpace {
    /// Finite set of `n >= 2` actions, identified by index.
    Discrete { n: usize },
    /// Real-valued actions of dimension `n >= 1`.
    Continuous { n: usize },
}

impl ActionSpace {
    pub fn discrete(n: usize) -> Result<Self, CoreError> {
        if n < 2 {
            return Err(CoreError::InvalidActionSpace {
                detail: format!("discrete cardinality must be >= 2, got {n}"),
            });
        }
        Ok(ActionSpace::Discrete { n })
    }

    pub fn continuous(dim: usize) -> Result<Self, CoreError> {
        if dim < 1 {
            return Err(CoreError::InvalidActionSpace {
                detail: "continuous dimension must be >= 1".into(),
            });
        }
        Ok(ActionSpace::Continuous { n: dim })
    }

    /// Check that `action` is a member of this space.
    pub fn validate_action(&self, action: &Action) -> Result<(), CoreError> {
        match (self, action) {
            (ActionSpace::Discrete { n }, Action::Discrete(i)) => {
                if i >= n {
                    Err(CoreError::ActionOutOfRange { index: *i, cardinality: *n })
                } else {
                    Ok(())
                }
            }
            (ActionSpace::Continuous { n }, Action::Continuous(v)) => {
                if v.len() != *n {
                    Err(CoreError::ActionDimensionMismatch { expected: *n, got: v.len() })
                } else {
                    Ok(())
                }
            }
            _ => Err(CoreError::ActionKindMismatch),
        }
    }
}

/// A single action value: an index for discrete spaces, a vector for
/// continuous ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Action {
    Discrete(usize),
    Continuous(Vec<f64>),
}

impl Action {
    pub fn as_index(&self) -> Option<usize> {
        match self {
            Action::Discrete(i) => Some(*i),
            Action::Continuous(_) => None,
        }
    }

    pub fn as_vector(&self) -> Option<&[f64]> {
        match self {
            Action::Discrete(_) => None,
            Action::Continuous(v) => Some(v),
        }
    }
}

/// One logged transition `(s, a, r, s')`. Rewards are optional: the ranking
/// pipeline never needs them, only the expected-reward extension does.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub state: Vec<f64>,
    pub action: Action,
    pub reward: Option<f64>,
    pub next_state: Vec<f64>,
}

/// An ordered sequence of steps with a single action space and state
/// dimension throughout.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    steps: Vec<Step>,
}

impl Trajectory {
    pub fn new(steps: Vec<Step>, space: &ActionSpace) -> Result<Self, CoreError> {
        if steps.is_empty() {
            return Err(CoreError::EmptyTrajectory);
        }
        let state_dim = steps[0].state.len();
        for (t, step) in steps.iter().enumerate() {
            if step.state.len() != state_dim || step.next_state.len() != state_dim {
                return Err(CoreError::StateDimensionMismatch {
                    step: t,
                    expected: state_dim,
                    got: step.state.len().max(step.next_state.len()),
                });
            }
            space.validate_action(&step.action)?;
        }
        Ok(Trajectory { steps })
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.steps[0].state.len()
    }

    /// Stable content hash over states and actions, used to key per-trajectory
    /// RNG streams independently of the trajectory's position in the dataset.
    pub fn fingerprint(&self) -> u64 {
        let mut mix = SeedMix::new(self.steps.len() as u64);
        for step in &self.steps {
            for x in &step.state {
                mix = mix.num(x.to_bits());
            }
            match &step.action {
                Action::Discrete(i) => mix = mix.num(*i as u64),
                Action::Continuous(v) => {
                    for x in v {
                        mix = mix.num(x.to_bits());
                    }
                }
            }
        }
        mix.finish()
    }
}

/// The evidence: a set of logged trajectories from one or more experts.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpertDataset {
    trajectories: Vec<Trajectory>,
    action_space: ActionSpace,
}

impl ExpertDataset {
    pub fn new(trajectories: Vec<Trajectory>, action_space: ActionSpace) -> Result<Self, CoreError> {
        if trajectories.is_empty() {
            return Err(CoreError::EmptyDataset);
        }
        let state_dim = trajectories[0].state_dim();
        for (i, traj) in trajectories.iter().enumerate() {
            if traj.state_dim() != state_dim {
                return Err(CoreError::StateDimensionMismatch {
                    step: i,
                    expected: state_dim,
                    got: traj.state_dim(),
                });
            }
            for step in traj.steps() {
                action_space.validate_action(&step.action)?;
            }
        }
        Ok(ExpertDataset { trajectories, action_space })
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn action_space(&self) -> &ActionSpace {
        &self.action_space
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.trajectories[0].state_dim()
    }

    /// Total number of steps across all trajectories.
    pub fn step_count(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).sum()
    }
}

/// A candidate (or expert) policy: a state-to-action mapping.
///
/// Implementations must be usable from multiple worker threads. Stochastic
/// policies draw from the RNG stream passed to [`Policy::act`]; the caller
/// derives that stream from named seeds, so a policy's behaviour is a pure
/// function of `(state, stream)`.
pub trait Policy: Send + Sync {
    /// Stable identifier used in reports and for seeding per-policy streams.
    fn id(&self) -> &str;

    /// Choose an action for `state`. Deterministic policies ignore `rng`.
    fn act(&self, state: &[f64], rng: &mut dyn RngCore) -> Result<Action, PolicyError>;

    /// Action probabilities for discrete policies that expose them.
    /// When provided, the vector sums to 1 and `act` only returns actions
    /// with nonzero probability.
    fn act_dist(&self, _state: &[f64]) -> Option<Vec<f64>> {
        None
    }

    /// Extra salt mixed into RNG streams derived for this policy, so two
    /// policies sharing an id but configured with different seeds do not
    /// share randomness.
    fn seed_salt(&self) -> u64 {
        0
    }
}

/// Policy that returns the same action for every state.
#[derive(Debug, Clone)]
pub struct ConstantPolicy {
    id: String,
    action: Action,
}

impl ConstantPolicy {
    pub fn new(id: impl Into<String>, action: Action) -> Self {
        ConstantPolicy { id: id.into(), action }
    }
}

impl Policy for ConstantPolicy {
    fn id(&self) -> &str {
        &self.id
    }

    fn act(&self, _state: &[f64], _rng: &mut dyn RngCore) -> Result<Action, PolicyError> {
        Ok(self.action.clone())
    }
}

/// Replay a policy over the logged states of one trajectory, in order.
///
/// Returns one candidate action per step. The trajectory is never mutated;
/// with the same RNG stream the output is identical across calls.
pub fn replay_actions(
    policy: &dyn Policy,
    trajectory: &Trajectory,
    rng: &mut dyn RngCore,
) -> Result<Vec<Action>, CoreError> {
    let mut actions = Vec::with_capacity(trajectory.len());
    for step in trajectory.steps() {
        let action = policy
            .act(&step.state, rng)
            .map_err(|source| CoreError::Policy { id: policy.id().to_string(), source })?;
        actions.push(action);
    }
    Ok(actions)
}

/// Errors from domain-type construction and replay.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid action space: {detail}")]
    InvalidActionSpace { detail: String },
    #[error("trajectory must contain at least one step")]
    EmptyTrajectory,
    #[error("dataset must contain at least one trajectory")]
    EmptyDataset,
    #[error("state dimension mismatch at entry {step}: expected {expected}, got {got}")]
    StateDimensionMismatch { step: usize, expected: usize, got: usize },
    #[error("discrete action index {index} out of range for cardinality {cardinality}")]
    ActionOutOfRange { index: usize, cardinality: usize },
    #[error("continuous action dimension mismatch: expected {expected}, got {got}")]
    ActionDimensionMismatch { expected: usize, got: usize },
    #[error("action kind does not match the action space")]
    ActionKindMismatch,
    #[error("policy '{id}' failed: {source}")]
    Policy {
        id: String,
        #[source]
        source: PolicyError,
    },
}

/// Errors raised by policy implementations when queried.
#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("policy expects state dimension {expected}, got {got}")]
    StateDimension { expected: usize, got: usize },
    #[error("state {detail} is outside the policy's domain")]
    StateOutOfDomain { detail: String },
    #[error("external policy error: {0}")]
    External(#[source] Box<dyn std::error::Error + Send + Sync>),
}
