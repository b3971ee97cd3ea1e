//! End-to-end pipeline behaviour on the ring environment: posterior ordering,
//! determinism, and scheduling independence.

use popr::analysis::{pairwise, rank_mean, rank_tail, TailMode};
use popr::core::Policy;
use popr::sampler::{run_all, run_chain, SamplerConfig};
use popr::toyenv::{
    expert_policy, generate_dataset, mixture_policy, MixturePolicySpec, ToyEnvConfig,
};

const EPSILONS: [f64; 6] = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];

fn epsilon_family(n_states: usize) -> Vec<Box<dyn Policy>> {
    EPSILONS
        .iter()
        .enumerate()
        .map(|(i, &eps)| {
            Box::new(
                mixture_policy(MixturePolicySpec { epsilon: eps, seed: i as u64 }, n_states)
                    .with_id(format!("mix-{eps:.1}")),
            ) as Box<dyn Policy>
        })
        .collect()
}

fn expert_data(seed: u64, episodes: usize) -> popr::core::ExpertDataset {
    let env = ToyEnvConfig { seed, ..ToyEnvConfig::default() };
    generate_dataset(&env, &expert_policy(env.n_states), episodes).unwrap()
}

#[test]
fn posterior_means_decrease_in_epsilon() {
    let data = expert_data(3, 20);
    let policies = epsilon_family(10);
    let config = SamplerConfig { seed: 17, ..SamplerConfig::default() };
    let posteriors = run_all(&data, &policies, &config).unwrap();

    assert_eq!(posteriors.len(), policies.len());
    let means: Vec<f64> = posteriors.iter().map(|p| p.mean()).collect();
    for pair in means.windows(2) {
        assert!(pair[0] > pair[1], "means not strictly decreasing: {means:?}");
    }

    let report = rank_mean(&posteriors).unwrap();
    let expected: Vec<String> = EPSILONS.iter().map(|e| format!("mix-{e:.1}")).collect();
    assert_eq!(report.ordering, expected);
}

#[test]
fn permuting_policies_permutes_results_identically() {
    let data = expert_data(5, 10);
    let config = SamplerConfig { n_iterations: 100, seed: 9, ..SamplerConfig::default() };

    let forward = epsilon_family(10);
    let mut reversed = epsilon_family(10);
    reversed.reverse();

    let a = run_all(&data, &forward, &config).unwrap();
    let b = run_all(&data, &reversed, &config).unwrap();

    for posterior in &a {
        let twin = b.iter().find(|p| p.policy_id == posterior.policy_id).unwrap();
        assert_eq!(posterior, twin, "per-policy results must be position-independent");
    }
}

#[test]
fn run_all_matches_sequential_chains() {
    // the parallel fan-out must not change any chain's output
    let data = expert_data(6, 10);
    let policies = epsilon_family(10);
    let config = SamplerConfig { n_iterations: 80, seed: 4, ..SamplerConfig::default() };

    let fanned = run_all(&data, &policies, &config).unwrap();
    for (policy, posterior) in policies.iter().zip(&fanned) {
        let solo = run_chain(&data, policy.as_ref(), &config).unwrap();
        assert_eq!(&solo, posterior);
    }
}

#[test]
fn chain_failures_carry_the_policy_id() {
    #[derive(Debug)]
    struct Broken;
    impl Policy for Broken {
        fn id(&self) -> &str {
            "broken"
        }
        fn act(
            &self,
            _state: &[f64],
            _rng: &mut dyn rand::RngCore,
        ) -> Result<popr::core::Action, popr::core::PolicyError> {
            Err(popr::core::PolicyError::StateOutOfDomain { detail: "always fails".into() })
        }
    }

    let data = expert_data(7, 5);
    let policies: Vec<Box<dyn Policy>> = vec![Box::new(Broken)];
    let err = run_all(&data, &policies, &SamplerConfig::default()).unwrap_err();
    let text = err.to_string();
    assert!(text.contains("broken"), "error should name the policy: {text}");
}

#[test]
fn tail_rankings_distinguish_spread_from_mean() {
    let data = expert_data(8, 20);
    let policies = epsilon_family(10);
    let config = SamplerConfig { seed: 30, ..SamplerConfig::default() };
    let posteriors = run_all(&data, &policies, &config).unwrap();

    let worst = rank_tail(&posteriors, TailMode::Worst, 0.05).unwrap();
    let best = rank_tail(&posteriors, TailMode::Best, 0.05).unwrap();
    // the clean expert mixture stays on top under both views
    assert_eq!(worst.ordering[0], "mix-0.0");
    assert_eq!(best.ordering[0], "mix-0.0");
    // tail scores bracket the mean scores
    let mean = rank_mean(&posteriors).unwrap();
    for id in mean.ordering.iter() {
        let w = worst.score_of(id).unwrap();
        let m = mean.score_of(id).unwrap();
        let b = best.score_of(id).unwrap();
        assert!(w <= m + 1e-12 && m <= b + 1e-12, "{id}: {w} {m} {b}");
    }
}

#[test]
fn dominant_policy_wins_every_paired_comparison() {
    let data = expert_data(12, 20);
    let policies = epsilon_family(10);
    let config = SamplerConfig { seed: 31, ..SamplerConfig::default() };
    let posteriors = run_all(&data, &policies, &config).unwrap();
    let matrix = pairwise(&posteriors).unwrap();

    let best = 0; // mix-0.0
    let worst = posteriors.len() - 1; // mix-1.0
    assert!(matrix.probabilities[best][worst] >= 0.95);
    assert!(matrix.probabilities[worst][best] <= 0.05);
}
