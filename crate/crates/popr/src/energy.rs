//! Discrepancy measures and the normalized energy comparing expert actions to
//! candidate actions on the same states.
//!
//! The energy of an aligned pair of action sequences is
//! `E = 1 - mean(rho_t)`, clamped to [0, 1], where `rho_t` is a per-step
//! discrepancy: identical behaviour gives `E = 1`, maximally different
//! behaviour gives `E = 0`. Discrete actions are compared as (optionally
//! smoothed) one-hot distributions under Jensen-Shannon or Kullback-Leibler
//! divergence with base-2 logarithms; continuous actions under a normalized
//! Euclidean distance. The MMD variants instead pool the actions of the whole
//! trajectory into two sample sets and compare those.
//!
//! [`bootstrap_energies`] draws `M` trajectories with replacement, replays
//! the candidate on each, and returns the `M` energies together with their
//! mean and unbiased variance. That sample is what the sampler's Beta
//! pseudo-likelihood is fitted to.

use rand::{Rng, RngCore};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::core::{replay_actions, Action, ActionSpace, CoreError, ExpertDataset, Policy};

/// Smoothing applied to one-hot action distributions so KL stays finite.
pub const DEFAULT_SMOOTHING: f64 = 1e-6;

/// Lower bound on the bootstrap variance before the method-of-moments fit;
/// keeps the fit finite when every bootstrapped energy is identical.
pub const VARIANCE_FLOOR: f64 = 1e-8;

/// Which discrepancy `rho` the energy uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum DiscrepancyKind {
    Js,
    Kl,
    MmdRbf { bandwidth: f64 },
    MmdMultiscale { bandwidths: Vec<f64> },
}

impl Default for DiscrepancyKind {
    fn default() -> Self {
        DiscrepancyKind::Js
    }
}

impl DiscrepancyKind {
    pub fn mmd_rbf_default() -> Self {
        DiscrepancyKind::MmdRbf { bandwidth: 1.0 }
    }

    pub fn mmd_multiscale_default() -> Self {
        DiscrepancyKind::MmdMultiscale { bandwidths: vec![0.2, 0.5, 0.9, 1.3] }
    }
}

/// Settings for one energy evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyConfig {
    pub kind: DiscrepancyKind,
    /// One-hot smoothing epsilon for discrete JS/KL comparisons.
    pub smoothing: f64,
    /// Distance normalization for continuous per-step comparisons; estimate
    /// it from the dataset with [`estimate_action_scale`].
    pub continuous_scale: f64,
}

impl Default for EnergyConfig {
    fn default() -> Self {
        EnergyConfig {
            kind: DiscrepancyKind::Js,
            smoothing: DEFAULT_SMOOTHING,
            continuous_scale: 1.0,
        }
    }
}

/// The `M` bootstrapped energy values of one sampler iteration, with their
/// mean and unbiased (divisor `M - 1`) variance.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergySample {
    values: Vec<f64>,
    mean: f64,
    variance: f64,
}

impl EnergySample {
    pub fn new(values: Vec<f64>) -> Result<Self, EnergyError> {
        if values.len() < 2 {
            return Err(EnergyError::TooFewBootstraps { m: values.len() });
        }
        for &v in &values {
            if !(0.0..=1.0).contains(&v) {
                return Err(EnergyError::EnergyOutOfRange { value: v });
            }
        }
        let m = values.len() as f64;
        let mean = values.iter().sum::<f64>() / m;
        let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
        Ok(EnergySample { values, mean, variance })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    /// Variance with the floor applied, as consumed by the moment fit.
    pub fn floored_variance(&self) -> f64 {
        self.variance.max(VARIANCE_FLOOR)
    }
}

/// A comparable action distribution: probabilities over discrete actions or
/// a sample set of continuous action vectors.
#[derive(Debug, Clone, PartialEq)]
pub enum ActionDistribution {
    Discrete(Vec<f64>),
    Continuous(Vec<Vec<f64>>),
}

impl ActionDistribution {
    /// Smoothed one-hot distribution: `p_i = (delta_i + eps) / (1 + n*eps)`.
    pub fn one_hot(index: usize, n: usize, eps: f64) -> Self {
        let denom = 1.0 + n as f64 * eps;
        let mut p = vec![eps / denom; n];
        p[index] += 1.0 / denom;
        ActionDistribution::Discrete(p)
    }
}

fn validate_distribution(p: &[f64]) -> Result<(), EnergyError> {
    if p.iter().any(|&x| x < 0.0) {
        return Err(EnergyError::NegativeProbability);
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(EnergyError::NotNormalized { sum });
    }
    Ok(())
}

fn check_lengths(a: usize, b: usize) -> Result<(), EnergyError> {
    if a != b {
        return Err(EnergyError::LengthMismatch { expected: a, got: b });
    }
    Ok(())
}

/// Jensen-Shannon divergence with base-2 logarithms, bounded by 1.
///
/// Symmetric, zero exactly when `p == q`.
pub fn js_divergence(p: &[f64], q: &[f64]) -> Result<f64, EnergyError> {
    check_lengths(p.len(), q.len())?;
    validate_distribution(p)?;
    validate_distribution(q)?;
    let mut jsd = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        let mi = 0.5 * (pi + qi);
        if pi > 0.0 {
            jsd += 0.5 * pi * (pi / mi).log2();
        }
        if qi > 0.0 {
            jsd += 0.5 * qi * (qi / mi).log2();
        }
    }
    Ok(jsd.clamp(0.0, 1.0))
}

/// Kullback-Leibler divergence with base-2 logarithms, after smoothing both
/// inputs by `eps` (so the result is finite for any pair when `eps > 0`).
///
/// Asymmetric; returns infinity if `eps == 0` and `q` lacks support where
/// `p` has mass.
pub fn kl_divergence(p: &[f64], q: &[f64], eps: f64) -> Result<f64, EnergyError> {
    check_lengths(p.len(), q.len())?;
    validate_distribution(p)?;
    validate_distribution(q)?;
    let n = p.len() as f64;
    let denom = 1.0 + n * eps;
    let mut kl = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        let ps = (pi + eps) / denom;
        let qs = (qi + eps) / denom;
        if ps > 0.0 {
            kl += ps * (ps / qs).log2();
        }
    }
    Ok(kl.max(0.0))
}

/// Kernel for the MMD two-sample statistic.
#[derive(Debug, Clone, PartialEq)]
pub enum Kernel {
    Rbf { bandwidth: f64 },
    Multiscale { bandwidths: Vec<f64> },
}

impl Kernel {
    fn eval(&self, sq_dist: f64) -> f64 {
        match self {
            Kernel::Rbf { bandwidth } => (-sq_dist / (2.0 * bandwidth * bandwidth)).exp(),
            Kernel::Multiscale { bandwidths } => bandwidths
                .iter()
                .map(|&s| {
                    let s2 = s * s;
                    s2 / (s2 + sq_dist)
                })
                .sum(),
        }
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Biased V-statistic estimate of the squared maximum mean discrepancy
/// between two sample sets, clamped to be nonnegative.
pub fn mmd(x: &[Vec<f64>], y: &[Vec<f64>], kernel: &Kernel) -> Result<f64, EnergyError> {
    if x.is_empty() || y.is_empty() {
        return Err(EnergyError::EmptySampleSet);
    }
    let dim = x[0].len();
    for v in x.iter().chain(y.iter()) {
        if v.len() != dim {
            return Err(EnergyError::DimensionMismatch { expected: dim, got: v.len() });
        }
    }
    let mean_kernel = |a: &[Vec<f64>], b: &[Vec<f64>]| -> f64 {
        let mut total = 0.0;
        for u in a {
            for v in b {
                total += kernel.eval(sq_dist(u, v));
            }
        }
        total / (a.len() * b.len()) as f64
    };
    let value = mean_kernel(x, x) + mean_kernel(y, y) - 2.0 * mean_kernel(x, y);
    Ok(value.max(0.0))
}

fn one_hot_points(actions: &[Action], n: usize) -> Vec<Vec<f64>> {
    actions
        .iter()
        .map(|a| {
            let mut v = vec![0.0; n];
            if let Some(i) = a.as_index() {
                v[i] = 1.0;
            }
            v
        })
        .collect()
}

fn vector_points(actions: &[Action]) -> Vec<Vec<f64>> {
    actions
        .iter()
        .map(|a| a.as_vector().map(<[f64]>::to_vec).unwrap_or_default())
        .collect()
}

/// Normalized energy between two aligned action sequences, in [0, 1].
///
/// `1.0` exactly when the sequences are identical.
pub fn energy(
    expert: &[Action],
    candidate: &[Action],
    space: &ActionSpace,
    cfg: &EnergyConfig,
) -> Result<f64, EnergyError> {
    check_lengths(expert.len(), candidate.len())?;
    if expert.is_empty() {
        return Err(EnergyError::EmptySampleSet);
    }
    for a in expert.iter().chain(candidate.iter()) {
        space.validate_action(a)?;
    }

    let mean_rho = match (&cfg.kind, space) {
        (DiscrepancyKind::Js, ActionSpace::Discrete { n }) => {
            per_step_mean(expert, candidate, |e, c| {
                let (ei, ci) = (e.as_index().unwrap(), c.as_index().unwrap());
                let ActionDistribution::Discrete(p) =
                    ActionDistribution::one_hot(ei, *n, cfg.smoothing)
                else {
                    unreachable!()
                };
                let ActionDistribution::Discrete(q) =
                    ActionDistribution::one_hot(ci, *n, cfg.smoothing)
                else {
                    unreachable!()
                };
                js_divergence(&p, &q)
            })?
        }
        (DiscrepancyKind::Kl, ActionSpace::Discrete { n }) => {
            per_step_mean(expert, candidate, |e, c| {
                let (ei, ci) = (e.as_index().unwrap(), c.as_index().unwrap());
                let mut p = vec![0.0; *n];
                let mut q = vec![0.0; *n];
                p[ei] = 1.0;
                q[ci] = 1.0;
                kl_divergence(&p, &q, cfg.smoothing)
            })?
        }
        (DiscrepancyKind::Js | DiscrepancyKind::Kl, ActionSpace::Continuous { .. }) => {
            let scale = if cfg.continuous_scale > 0.0 { cfg.continuous_scale } else { 1.0 };
            per_step_mean(expert, candidate, |e, c| {
                let d = sq_dist(e.as_vector().unwrap(), c.as_vector().unwrap()).sqrt();
                Ok((d / scale).min(1.0))
            })?
        }
        (kind @ (DiscrepancyKind::MmdRbf { .. } | DiscrepancyKind::MmdMultiscale { .. }), _) => {
            let kernel = match kind {
                DiscrepancyKind::MmdRbf { bandwidth } => Kernel::Rbf { bandwidth: *bandwidth },
                DiscrepancyKind::MmdMultiscale { bandwidths } => {
                    Kernel::Multiscale { bandwidths: bandwidths.clone() }
                }
                _ => unreachable!(),
            };
            let (x, y) = match space {
                ActionSpace::Discrete { n } => {
                    (one_hot_points(expert, *n), one_hot_points(candidate, *n))
                }
                ActionSpace::Continuous { .. } => (vector_points(expert), vector_points(candidate)),
            };
            mmd(&x, &y, &kernel)?.min(1.0)
        }
    };

    Ok((1.0 - mean_rho).clamp(0.0, 1.0))
}

fn per_step_mean<F>(expert: &[Action], candidate: &[Action], rho: F) -> Result<f64, EnergyError>
where
    F: Fn(&Action, &Action) -> Result<f64, EnergyError>,
{
    let mut total = 0.0;
    for (e, c) in expert.iter().zip(candidate) {
        total += rho(e, c)?;
    }
    Ok(total / expert.len() as f64)
}

/// Draw `m` trajectories with replacement, replay the policy on each, and
/// score the agreement of every replay.
///
/// The per-replay RNG streams are split off `rng` up front, so results do not
/// depend on evaluation order.
pub fn bootstrap_energies(
    dataset: &ExpertDataset,
    policy: &dyn Policy,
    m: usize,
    cfg: &EnergyConfig,
    rng: &mut dyn RngCore,
) -> Result<EnergySample, EnergyError> {
    if m < 2 {
        return Err(EnergyError::TooFewBootstraps { m });
    }
    let n = dataset.len();
    let draws: Vec<(usize, u64)> =
        (0..m).map(|_| (rng.random_range(0..n), rng.next_u64())).collect();
    let mut values = Vec::with_capacity(m);
    for (index, stream_seed) in draws {
        let trajectory = &dataset.trajectories()[index];
        let mut replay_rng = ChaCha8Rng::seed_from_u64(stream_seed);
        let candidate = replay_actions(policy, trajectory, &mut replay_rng)?;
        let expert: Vec<Action> = trajectory.steps().iter().map(|s| s.action.clone()).collect();
        values.push(energy(&expert, &candidate, dataset.action_space(), cfg)?);
    }
    EnergySample::new(values)
}

/// Distance normalization for continuous action spaces: the 95th percentile
/// of pairwise distances between logged expert actions (subsampled for large
/// datasets). Returns 1.0 for discrete spaces or degenerate data.
pub fn estimate_action_scale(dataset: &ExpertDataset) -> f64 {
    if !matches!(dataset.action_space(), ActionSpace::Continuous { .. }) {
        return 1.0;
    }
    const MAX_POINTS: usize = 512;
    let all: Vec<&[f64]> = dataset
        .trajectories()
        .iter()
        .flat_map(|t| t.steps())
        .filter_map(|s| s.action.as_vector())
        .collect();
    let stride = (all.len() / MAX_POINTS).max(1);
    let points: Vec<&[f64]> = all.iter().step_by(stride).copied().collect();
    let mut dists = Vec::with_capacity(points.len() * (points.len() - 1) / 2);
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            dists.push(sq_dist(a, b).sqrt());
        }
    }
    if dists.is_empty() {
        return 1.0;
    }
    dists.sort_by(f64::total_cmp);
    let idx = ((dists.len() - 1) as f64 * 0.95).round() as usize;
    let scale = dists[idx];
    if scale > 0.0 {
        scale
    } else {
        1.0
    }
}

#[derive(Debug, Error)]
pub enum EnergyError {
    #[error("bootstrap size must be >= 2, got {m}")]
    TooFewBootstraps { m: usize },
    #[error("sequence length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("probability vector sums to {sum}, expected 1")]
    NotNormalized { sum: f64 },
    #[error("probability vector contains a negative entry")]
    NegativeProbability,
    #[error("sample set is empty")]
    EmptySampleSet,
    #[error("sample dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("energy value {value} outside [0, 1]")]
    EnergyOutOfRange { value: f64 },
    #[error(transparent)]
    Replay(#[from] CoreError),
}
