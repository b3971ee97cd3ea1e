//! Probabilistic offline policy ranking.
//!
//! Given a dataset of expert trajectories and a set of candidate policies,
//! this crate estimates, for each candidate, the posterior distribution of
//! θ ∈ [0, 1] — the probability that the candidate behaves like the expert on
//! the expert's own states — and ranks candidates from those posteriors. No
//! environment interaction, reward model, or behavior-policy probabilities
//! are required; rewards in the data are optional throughout.
//!
//! The estimation is likelihood-free: bootstrapped subsets of the expert data
//! are replayed through the candidate, a smooth energy in [0, 1] scores the
//! action agreement of each subset, and a Beta pseudo-likelihood fitted to
//! the bootstrapped energies by the method of moments drives a
//! Metropolis-Hastings chain over θ.
//!
//! ```
//! use popr::analysis::rank_mean;
//! use popr::core::Policy;
//! use popr::sampler::{run_all, SamplerConfig};
//! use popr::toyenv::{expert_policy, generate_dataset, mixture_policy, MixturePolicySpec, ToyEnvConfig};
//!
//! let env = ToyEnvConfig::default();
//! let expert = expert_policy(env.n_states);
//! let data = generate_dataset(&env, &expert, 20).unwrap();
//!
//! let candidates: Vec<Box<dyn Policy>> = [0.0, 0.5, 1.0]
//!     .iter()
//!     .map(|&eps| {
//!         Box::new(mixture_policy(MixturePolicySpec { epsilon: eps, seed: 0 }, env.n_states))
//!             as Box<dyn Policy>
//!     })
//!     .collect();
//!
//! let config = SamplerConfig { n_iterations: 50, ..SamplerConfig::default() };
//! let posteriors = run_all(&data, &candidates, &config).unwrap();
//! let report = rank_mean(&posteriors).unwrap();
//! assert_eq!(report.ordering[0], "toy-mixture-0.00");
//! ```

pub mod analysis;
pub mod core;
pub mod energy;
pub mod io;
pub mod metrics;
pub mod parallel;
pub mod sampler;
pub mod seed;
pub mod toyenv;
