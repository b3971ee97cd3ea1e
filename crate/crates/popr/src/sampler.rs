//! Posterior sampling for policy performance.
//!
//! Each Metropolis-Hastings iteration draws fresh bootstrapped energies for
//! the candidate policy, fits a Beta pseudo-likelihood to them by the method
//! of moments, and accepts or rejects a proposed θ using the standard MH
//! ratio evaluated in log space. Because the pseudo-likelihood is re-sampled
//! every iteration, the chain is a pseudo-marginal-style sampler: noisy, but
//! targeting a posterior whose mass tracks the observed energy distribution.
//!
//! A chain is sequential; chains for distinct policies are independent and
//! run in parallel, with per-policy RNG streams keyed by `(seed, policy id)`
//! so results do not depend on scheduling or on the order policies are
//! listed in.

use rand::{Rng, RngCore};
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::core::{ExpertDataset, Policy};
use crate::energy::{
    bootstrap_energies, estimate_action_scale, DiscrepancyKind, EnergyConfig, EnergyError,
    EnergySample, DEFAULT_SMOOTHING,
};
use crate::parallel::par_map;
use crate::seed::{fnv1a, SeedMix};

/// Chain states are kept inside the open unit interval by this margin.
const THETA_CLAMP: f64 = 1e-12;

/// The moment fit clamps the energy mean away from 0 and 1 by this margin so
/// the fitted parameters stay finite under perfect (dis)agreement.
const MEAN_CLAMP: f64 = 1e-6;

/// Shape parameters of a Beta distribution; both strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaParams {
    pub alpha: f64,
    pub beta: f64,
}

impl BetaParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self, SamplerError> {
        if !(alpha > 0.0 && beta > 0.0) {
            return Err(SamplerError::InvalidConfig {
                detail: format!("Beta parameters must be positive, got ({alpha}, {beta})"),
            });
        }
        Ok(BetaParams { alpha, beta })
    }

    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }

    pub fn variance(&self) -> f64 {
        let s = self.alpha + self.beta;
        self.alpha * self.beta / (s * s * (s + 1.0))
    }
}

/// Prior over θ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Prior {
    Beta { alpha: f64, beta: f64 },
    /// Normal density truncated to [0, 1]. The truncation constant is
    /// independent of θ and cancels in the MH ratio, so it is not computed.
    Normal { mu: f64, sigma: f64 },
}

impl Default for Prior {
    fn default() -> Self {
        Prior::Beta { alpha: 0.5, beta: 0.5 }
    }
}

impl Prior {
    pub fn normal_default() -> Self {
        Prior::Normal { mu: 0.4, sigma: 0.4 }
    }

    pub fn log_density(&self, theta: f64) -> f64 {
        if !(0.0..=1.0).contains(&theta) {
            return f64::NEG_INFINITY;
        }
        match self {
            Prior::Beta { alpha, beta } => beta_log_pdf(theta, *alpha, *beta),
            Prior::Normal { mu, sigma } => {
                let z = (theta - mu) / sigma;
                -0.5 * z * z - sigma.ln()
            }
        }
    }

    fn validate(&self) -> Result<(), SamplerError> {
        let ok = match self {
            Prior::Beta { alpha, beta } => *alpha > 0.0 && *beta > 0.0,
            Prior::Normal { sigma, .. } => *sigma > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(SamplerError::InvalidConfig { detail: format!("invalid prior {self:?}") })
        }
    }
}

/// Proposal distribution for the MH chain.
///
/// `BetaAroundCurrent` is the default: a Beta with mean at the current θ and
/// fixed concentration, `q(θ* | θ) = Beta(c·θ + f, c·(1-θ) + f)`. The
/// alternatives are a θ-independent Beta (useful with `alpha = beta = 1` as a
/// uniform independence sampler) and a logit-space Gaussian random walk.
/// A θ-independent `Beta { alpha: 4.0, beta: 1e-3 }` piles essentially all
/// proposal mass within ~1e-6 of θ = 1, which freezes chains whose posterior
/// lives anywhere else; see the proposal notes in the crate README.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Proposal {
    Beta { alpha: f64, beta: f64 },
    BetaAroundCurrent { concentration: f64, floor: f64 },
    LogitWalk { step: f64 },
}

impl Default for Proposal {
    fn default() -> Self {
        Proposal::BetaAroundCurrent { concentration: 4.0, floor: 1e-3 }
    }
}

impl Proposal {
    pub fn uniform() -> Self {
        Proposal::Beta { alpha: 1.0, beta: 1.0 }
    }

    fn sample(&self, current: f64, rng: &mut dyn RngCore) -> f64 {
        let draw = match self {
            Proposal::Beta { alpha, beta } => {
                rand_distr::Beta::new(*alpha, *beta).expect("validated params").sample(rng)
            }
            Proposal::BetaAroundCurrent { concentration, floor } => {
                let a = concentration * current + floor;
                let b = concentration * (1.0 - current) + floor;
                rand_distr::Beta::new(a, b).expect("positive params").sample(rng)
            }
            Proposal::LogitWalk { step } => {
                let z: f64 = rand_distr::StandardNormal.sample(rng);
                let logit = (current / (1.0 - current)).ln();
                let shifted = logit + step * z;
                1.0 / (1.0 + (-shifted).exp())
            }
        };
        draw.clamp(THETA_CLAMP, 1.0 - THETA_CLAMP)
    }

    /// log q(x | given)
    fn log_density(&self, x: f64, given: f64) -> f64 {
        match self {
            Proposal::Beta { alpha, beta } => beta_log_pdf(x, *alpha, *beta),
            Proposal::BetaAroundCurrent { concentration, floor } => {
                let a = concentration * given + floor;
                let b = concentration * (1.0 - given) + floor;
                beta_log_pdf(x, a, b)
            }
            Proposal::LogitWalk { step } => {
                let z = ((x / (1.0 - x)).ln() - (given / (1.0 - given)).ln()) / step;
                // Gaussian in logit space plus the change-of-variables term
                -0.5 * z * z - step.ln() - (x * (1.0 - x)).ln()
            }
        }
    }

    fn validate(&self) -> Result<(), SamplerError> {
        let ok = match self {
            Proposal::Beta { alpha, beta } => *alpha > 0.0 && *beta > 0.0,
            Proposal::BetaAroundCurrent { concentration, floor } => {
                *concentration > 0.0 && *floor > 0.0
            }
            Proposal::LogitWalk { step } => *step > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(SamplerError::InvalidConfig { detail: format!("invalid proposal {self:?}") })
        }
    }
}

/// Full sampler configuration. Defaults: 500 iterations, 5 bootstraps,
/// burn-in 10, thinning 10, Beta(0.5, 0.5) prior, JS discrepancy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub n_iterations: usize,
    pub bootstrap_m: usize,
    pub burnin: usize,
    pub thin: usize,
    pub prior: Prior,
    pub proposal: Proposal,
    pub discrepancy: DiscrepancyKind,
    pub smoothing: f64,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            n_iterations: 500,
            bootstrap_m: 5,
            burnin: 10,
            thin: 10,
            prior: Prior::default(),
            proposal: Proposal::default(),
            discrepancy: DiscrepancyKind::default(),
            smoothing: DEFAULT_SMOOTHING,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), SamplerError> {
        if self.n_iterations == 0 {
            return Err(SamplerError::InvalidConfig { detail: "n_iterations must be >= 1".into() });
        }
        if self.thin == 0 || self.thin > self.n_iterations {
            return Err(SamplerError::InvalidConfig {
                detail: format!(
                    "thin must be in [1, n_iterations], got {} with n_iterations {}",
                    self.thin, self.n_iterations
                ),
            });
        }
        if self.bootstrap_m < 2 {
            return Err(SamplerError::InvalidConfig {
                detail: format!("bootstrap_m must be >= 2, got {}", self.bootstrap_m),
            });
        }
        if self.smoothing < 0.0 {
            return Err(SamplerError::InvalidConfig { detail: "smoothing must be >= 0".into() });
        }
        self.prior.validate()?;
        self.proposal.validate()
    }

    /// Stable hash of the serialized config, recorded in every output.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        format!("{:016x}", fnv1a(json.as_bytes()))
    }

    /// Energy settings implied by this config for `dataset` (estimates the
    /// continuous action scale when the space is continuous).
    pub fn energy_config(&self, dataset: &ExpertDataset) -> EnergyConfig {
        EnergyConfig {
            kind: self.discrepancy.clone(),
            smoothing: self.smoothing,
            continuous_scale: estimate_action_scale(dataset),
        }
    }
}

/// Monte Carlo samples of θ for one candidate policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSamples {
    pub policy_id: String,
    pub samples: Vec<f64>,
    pub acceptance_rate: f64,
    pub config_fingerprint: String,
}

impl PosteriorSamples {
    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    pub fn std(&self) -> f64 {
        let mean = self.mean();
        let n = self.samples.len() as f64;
        (self.samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n).sqrt()
    }
}

fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

fn beta_log_pdf(x: f64, a: f64, b: f64) -> f64 {
    let x = x.clamp(THETA_CLAMP, 1.0 - THETA_CLAMP);
    // (-x).ln_1p() is ln(1 - x), accurate for x near 0
    (a - 1.0) * x.ln() + (b - 1.0) * (-x).ln_1p() - ln_beta(a, b)
}

/// Fit Beta parameters to a mean and variance:
/// `kappa = mean(1-mean)/var - 1`, `alpha = kappa*mean`,
/// `beta = kappa*(1-mean)`.
///
/// Total by construction: the mean is clamped into `(0, 1)` and, if the
/// variance is not achievable by any Beta with that mean
/// (`mean(1-mean) <= var`), the variance is shrunk to 99% of the bound.
pub fn beta_from_moments(mean: f64, variance: f64) -> BetaParams {
    let mu = mean.clamp(MEAN_CLAMP, 1.0 - MEAN_CLAMP);
    let bound = mu * (1.0 - mu);
    let mut var = variance.max(f64::MIN_POSITIVE);
    if bound <= var {
        log::debug!("moment fit: variance {var:.3e} >= mean bound {bound:.3e}, shrinking");
        var = 0.99 * bound;
    }
    let kappa = bound / var - 1.0;
    BetaParams { alpha: mu * kappa, beta: (1.0 - mu) * kappa }
}

/// Fit the pseudo-likelihood to one bootstrap sample (variance floored by
/// the energy module).
pub fn fit_beta_moments(sample: &EnergySample) -> BetaParams {
    beta_from_moments(sample.mean(), sample.floored_variance())
}

/// Beta density at θ, evaluated in log space internally.
pub fn pseudo_likelihood(theta: f64, params: &BetaParams) -> f64 {
    log_pseudo_likelihood(theta, params).exp()
}

/// Log Beta density at θ. Finite for any θ in [0, 1] and shape parameters up
/// to at least 1e6; endpoints are clamped into the open interval.
pub fn log_pseudo_likelihood(theta: f64, params: &BetaParams) -> f64 {
    beta_log_pdf(theta, params.alpha, params.beta)
}

/// One Metropolis-Hastings transition for an arbitrary log-target.
///
/// Proposes from `proposal` given the current state, forms the log acceptance
/// ratio including the proposal correction, and accepts with probability
/// `min(1, ratio)`. Returns the next chain state and whether the proposal was
/// accepted. Non-finite ratios reject rather than panic.
pub fn mh_kernel<F>(current: f64, log_target: F, proposal: &Proposal, rng: &mut dyn RngCore) -> (f64, bool)
where
    F: Fn(f64) -> f64,
{
    let proposed = proposal.sample(current, rng);
    let log_ratio = (log_target(proposed) + proposal.log_density(current, proposed))
        - (log_target(current) + proposal.log_density(proposed, current));
    let u: f64 = rng.random();
    let accept = !log_ratio.is_nan() && u.ln() < log_ratio.min(0.0);
    if accept {
        (proposed, true)
    } else {
        (current, false)
    }
}

fn chain_step(
    current: f64,
    dataset: &ExpertDataset,
    policy: &dyn Policy,
    config: &SamplerConfig,
    energy_cfg: &EnergyConfig,
    rng: &mut dyn RngCore,
) -> Result<(f64, bool), SamplerError> {
    let sample = bootstrap_energies(dataset, policy, config.bootstrap_m, energy_cfg, rng)?;
    let params = fit_beta_moments(&sample);
    let log_target =
        |theta: f64| log_pseudo_likelihood(theta, &params) + config.prior.log_density(theta);
    Ok(mh_kernel(current, log_target, &config.proposal, rng))
}

/// One full sampler iteration: fresh bootstrap energies, moment fit, and an
/// MH transition of θ.
pub fn mh_step(
    current_theta: f64,
    dataset: &ExpertDataset,
    policy: &dyn Policy,
    config: &SamplerConfig,
    rng: &mut dyn RngCore,
) -> Result<(f64, bool), SamplerError> {
    let energy_cfg = config.energy_config(dataset);
    chain_step(current_theta, dataset, policy, config, &energy_cfg, rng)
}

/// Run one chain for one policy: uniform θ init, `burnin` discarded
/// iterations, then `n_iterations` iterations recording every `thin`-th
/// chain state. The acceptance rate is measured over the recorded phase.
pub fn run_chain(
    dataset: &ExpertDataset,
    policy: &dyn Policy,
    config: &SamplerConfig,
) -> Result<PosteriorSamples, SamplerError> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(SamplerError::InvalidConfig { detail: "dataset is empty".into() });
    }
    let energy_cfg = config.energy_config(dataset);
    let mut rng = SeedMix::new(config.seed)
        .text("chain")
        .text(policy.id())
        .num(policy.seed_salt())
        .rng();

    let mut theta = rng.random::<f64>().clamp(THETA_CLAMP, 1.0 - THETA_CLAMP);
    for _ in 0..config.burnin {
        theta = chain_step(theta, dataset, policy, config, &energy_cfg, &mut rng)?.0;
    }

    let mut samples = Vec::with_capacity(config.n_iterations / config.thin);
    let mut accepted = 0usize;
    for i in 1..=config.n_iterations {
        let (next, was_accepted) =
            chain_step(theta, dataset, policy, config, &energy_cfg, &mut rng)?;
        theta = next;
        accepted += usize::from(was_accepted);
        if i % config.thin == 0 {
            samples.push(theta);
        }
    }

    Ok(PosteriorSamples {
        policy_id: policy.id().to_string(),
        samples,
        acceptance_rate: accepted as f64 / config.n_iterations as f64,
        config_fingerprint: config.fingerprint(),
    })
}

/// Run one independent chain per policy (in parallel when the `parallel`
/// feature is enabled). Output order matches input order; per-policy seeds
/// are keyed by policy id, not position, so permuting the input permutes the
/// output identically.
pub fn run_all(
    dataset: &ExpertDataset,
    policies: &[Box<dyn Policy>],
    config: &SamplerConfig,
) -> Result<Vec<PosteriorSamples>, SamplerError> {
    if policies.is_empty() {
        return Err(SamplerError::InvalidConfig { detail: "no candidate policies".into() });
    }
    config.validate()?;
    let results = par_map(policies, |policy| {
        run_chain(dataset, policy.as_ref(), config).map_err(|source| SamplerError::ChainFailed {
            policy_id: policy.id().to_string(),
            source: Box::new(source),
        })
    });
    results.into_iter().collect()
}

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("invalid sampler config: {detail}")]
    InvalidConfig { detail: String },
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error("chain for policy '{policy_id}' failed: {source}")]
    ChainFailed {
        policy_id: String,
        #[source]
        source: Box<SamplerError>,
    },
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::SeedMix;
    use crate::toyenv::{expert_policy, generate_dataset, ToyEnvConfig};

    #[test]
    fn moment_fit_matches_hand_arithmetic() {
        // kappa = 0.25/0.05 - 1 = 4
        let p = beta_from_moments(0.5, 0.05);
        assert!((p.alpha - 2.0).abs() < 1e-12);
        assert!((p.beta - 2.0).abs() < 1e-12);
        // kappa = 0.25/0.125 - 1 = 1
        let p = beta_from_moments(0.5, 0.125);
        assert!((p.alpha - 0.5).abs() < 1e-12);
        assert!((p.beta - 0.5).abs() < 1e-12);
    }

    #[test]
    fn moment_fit_round_trips() {
        let p = beta_from_moments(0.37, 0.021);
        assert!((p.mean() - 0.37).abs() < 1e-9);
        assert!((p.variance() - 0.021).abs() < 1e-9);
    }

    #[test]
    fn moment_fit_is_total() {
        // variance above the achievable bound: shrunk, still positive params
        let p = beta_from_moments(0.5, 0.4);
        assert!(p.alpha > 0.0 && p.beta > 0.0);
        // degenerate means clamp instead of blowing up
        let p = beta_from_moments(1.0, 0.0);
        assert!(p.alpha.is_finite() && p.beta > 0.0);
    }

    #[test]
    fn pseudo_likelihood_known_values() {
        let uniform = BetaParams::new(1.0, 1.0).unwrap();
        assert!((pseudo_likelihood(0.5, &uniform) - 1.0).abs() < 1e-12);
        let symmetric = BetaParams::new(2.0, 2.0).unwrap();
        assert!((pseudo_likelihood(0.5, &symmetric) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn high_energy_fit_peaks_near_one() {
        let params = BetaParams::new(50.0, 0.1).unwrap();
        assert!(
            log_pseudo_likelihood(0.99, &params) > log_pseudo_likelihood(0.5, &params),
            "mass should concentrate near 1"
        );
    }

    #[test]
    fn log_density_is_finite_for_extreme_shapes() {
        let params = BetaParams::new(1e6, 1e-4).unwrap();
        for theta in [1e-12, 0.3, 0.999999, 1.0 - 1e-12] {
            assert!(log_pseudo_likelihood(theta, &params).is_finite());
        }
    }

    #[test]
    fn symmetric_flat_case_always_accepts() {
        let mut rng = SeedMix::new(0).rng();
        let proposal = Proposal::uniform();
        for _ in 0..200 {
            let (_, accepted) = mh_kernel(0.4, |_| 0.0, &proposal, &mut rng);
            assert!(accepted);
        }
    }

    #[test]
    fn kernel_rejects_unreachable_targets_without_panicking() {
        let mut rng = SeedMix::new(1).rng();
        let (next, accepted) = mh_kernel(0.4, |_| f64::NEG_INFINITY, &Proposal::uniform(), &mut rng);
        assert_eq!(next, 0.4);
        assert!(!accepted);
    }

    #[test]
    fn stub_chain_recovers_known_beta_mean() {
        // target fixed to Beta(8, 2), flat prior, uniform proposal
        let target = BetaParams::new(8.0, 2.0).unwrap();
        let mut rng = SeedMix::new(42).rng();
        let proposal = Proposal::uniform();
        let mut theta = 0.5;
        let mut total = 0.0;
        let n = 20_000;
        for _ in 0..n {
            theta = mh_kernel(theta, |t| log_pseudo_likelihood(t, &target), &proposal, &mut rng).0;
            total += theta;
        }
        let mean = total / f64::from(n);
        assert!((mean - 0.8).abs() < 0.02, "chain mean {mean}");
    }

    #[test]
    fn chain_retains_n_over_thin_samples_deterministically() {
        let env = ToyEnvConfig::default();
        let expert = expert_policy(env.n_states);
        let data = generate_dataset(&env, &expert, 5).unwrap();
        let config = SamplerConfig { n_iterations: 100, ..SamplerConfig::default() };
        let a = run_chain(&data, &expert, &config).unwrap();
        let b = run_chain(&data, &expert, &config).unwrap();
        assert_eq!(a.samples.len(), 10);
        assert_eq!(a, b);
        assert!(a.samples.iter().all(|s| (0.0..1.0).contains(s) && *s > 0.0));
        assert!((0.0..=1.0).contains(&a.acceptance_rate));
    }

    #[test]
    fn self_replay_posterior_concentrates_high() {
        let env = ToyEnvConfig::default();
        let expert = expert_policy(env.n_states);
        let data = generate_dataset(&env, &expert, 20).unwrap();
        let posterior = run_chain(&data, &expert, &SamplerConfig::default()).unwrap();
        assert!(posterior.mean() >= 0.9, "posterior mean {}", posterior.mean());
    }

    #[test]
    fn config_validation_catches_bad_values() {
        let bad = SamplerConfig { thin: 0, ..SamplerConfig::default() };
        assert!(matches!(bad.validate(), Err(SamplerError::InvalidConfig { .. })));
        let bad = SamplerConfig { bootstrap_m: 1, ..SamplerConfig::default() };
        assert!(bad.validate().is_err());
        let bad = SamplerConfig { thin: 1000, n_iterations: 500, ..SamplerConfig::default() };
        assert!(bad.validate().is_err());
        let bad = SamplerConfig {
            prior: Prior::Beta { alpha: 0.0, beta: 1.0 },
            ..SamplerConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn fingerprint_tracks_config_content() {
        let a = SamplerConfig::default();
        let b = SamplerConfig { seed: 1, ..SamplerConfig::default() };
        assert_eq!(a.fingerprint(), SamplerConfig::default().fingerprint());
        assert_ne!(a.fingerprint(), b.fingerprint());
    }
}
