//! Experiment building blocks shared by the CLI commands: the ε-candidate
//! family, dataset mixing, and the sweep grid.

use std::str::FromStr;

use popr::analysis::rank_mean;
use popr::core::{ExpertDataset, Policy, Trajectory};
use popr::metrics::{ndcg, srcc, Ordering};
use popr::parallel::par_map;
use popr::sampler::{run_all, SamplerConfig};
use popr::seed::SeedMix;
use popr::toyenv::{expert_policy, generate_dataset, mixture_policy, MixturePolicySpec, ToyEnvConfig};

use crate::config::RunConfig;
use crate::CliError;

/// Candidate id for an ε value, shared by policies and truth orderings.
pub fn epsilon_id(epsilon: f64) -> String {
    format!("eps-{epsilon:.2}")
}

/// The ε-mixture candidate family. `seed_salt` decorrelates candidate
/// randomness across repetitions.
pub fn epsilon_policies(epsilons: &[f64], n_states: usize, seed_salt: u64) -> Vec<Box<dyn Policy>> {
    epsilons
        .iter()
        .map(|&epsilon| {
            Box::new(
                mixture_policy(MixturePolicySpec { epsilon, seed: seed_salt }, n_states)
                    .with_id(epsilon_id(epsilon)),
            ) as Box<dyn Policy>
        })
        .collect()
}

/// Ground-truth ordering of the ε family: lower ε is better.
pub fn epsilon_truth(epsilons: &[f64]) -> Result<Ordering, CliError> {
    let mut sorted = epsilons.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ordering::new(sorted.into_iter().map(epsilon_id)).map_err(CliError::usage)
}

/// Compose a dataset with `round(fraction * N)` expert trajectories and the
/// remainder drawn from `noise`, preserving the expert dataset's total count.
///
/// Selection is a seeded sample without replacement from each source;
/// `fraction = 1` returns the expert trajectories unchanged and in order.
pub fn mix_datasets(
    expert: &ExpertDataset,
    noise: &ExpertDataset,
    fraction: f64,
    seed: u64,
) -> Result<ExpertDataset, CliError> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(CliError::Usage(format!("fraction must be in [0, 1], got {fraction}")));
    }
    if expert.action_space() != noise.action_space() {
        return Err(CliError::Usage("expert and noise datasets use different action spaces".into()));
    }
    let total = expert.len();
    let n_expert = ((fraction * total as f64).round() as usize).min(total);
    let n_noise = total - n_expert;
    if n_noise > noise.len() {
        return Err(CliError::Usage(format!(
            "noise dataset has {} trajectories, need {n_noise}",
            noise.len()
        )));
    }

    let sample = |source: &ExpertDataset, take: usize, tag: &str| -> Vec<Trajectory> {
        if take == source.len() {
            return source.trajectories().to_vec();
        }
        let mut rng = SeedMix::new(seed).text("mix").text(tag).rng();
        let mut indices: Vec<usize> = (0..source.len()).collect();
        // partial Fisher-Yates: the first `take` entries are the sample
        for i in 0..take {
            let j = i + (rand::Rng::random_range(&mut rng, 0..(indices.len() - i)));
            indices.swap(i, j);
        }
        indices[..take].iter().map(|&i| source.trajectories()[i].clone()).collect()
    };

    let mut trajectories = sample(expert, n_expert, "expert");
    trajectories.extend(sample(noise, n_noise, "noise"));
    ExpertDataset::new(trajectories, *expert.action_space())
        .map_err(|e| CliError::Runtime(e.to_string()))
}

/// One sweep measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub axis_value: String,
    pub rep: usize,
    pub ndcg: f64,
    pub srcc: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Datasize,
    Quality,
    Iterations,
    Discrepancy,
}

impl FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "datasize" => Ok(SweepAxis::Datasize),
            "quality" => Ok(SweepAxis::Quality),
            "iterations" => Ok(SweepAxis::Iterations),
            "discrepancy" => Ok(SweepAxis::Discrepancy),
            other => Err(format!(
                "unknown axis '{other}' (expected datasize, quality, iterations, or discrepancy)"
            )),
        }
    }
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Datasize => "datasize",
            SweepAxis::Quality => "quality",
            SweepAxis::Iterations => "iterations",
            SweepAxis::Discrepancy => "discrepancy",
        }
    }
}

struct Cell {
    axis_value: String,
    rep: usize,
    episodes: usize,
    expert_fraction: f64,
    sampler: SamplerConfig,
}

/// Rank the ε family against one dataset and score the ordering against the
/// ε ground truth.
fn evaluate_cell(
    config: &RunConfig,
    env: &ToyEnvConfig,
    dataset: &ExpertDataset,
    sampler: &SamplerConfig,
    rep: usize,
) -> Result<(f64, f64), CliError> {
    let policies = epsilon_policies(&config.candidate_epsilons, env.n_states, rep as u64);
    let posteriors = run_all(dataset, &policies, sampler).map_err(CliError::runtime)?;
    let report = rank_mean(&posteriors).map_err(CliError::runtime)?;
    let predicted = Ordering::new(report.ordering).map_err(CliError::runtime)?;
    let truth = epsilon_truth(&config.candidate_epsilons)?;
    Ok((
        ndcg(&predicted, &truth).map_err(CliError::runtime)?,
        srcc(&predicted, &truth).map_err(CliError::runtime)?,
    ))
}

/// Run the full grid for one axis: every axis value times
/// `config.repetitions` seeded repetitions. Cells run in parallel;
/// per-cell seeds are derived from the config seeds and the cell
/// coordinates, so results are independent of scheduling.
pub fn run_sweep(axis: SweepAxis, config: &RunConfig) -> Result<Vec<SweepRow>, CliError> {
    config.validate()?;
    let mut cells = Vec::new();
    let base_sampler = config.sampler.clone();
    let axis_values: Vec<(String, Box<dyn Fn(&mut Cell) + Sync>)> = match axis {
        SweepAxis::Datasize => config
            .sweep
            .datasizes
            .iter()
            .map(|&size| {
                let setter: Box<dyn Fn(&mut Cell) + Sync> =
                    Box::new(move |cell: &mut Cell| cell.episodes = size);
                (size.to_string(), setter)
            })
            .collect(),
        SweepAxis::Quality => config
            .sweep
            .fractions
            .iter()
            .map(|&fraction| {
                let setter: Box<dyn Fn(&mut Cell) + Sync> =
                    Box::new(move |cell: &mut Cell| cell.expert_fraction = fraction);
                (format!("{fraction:.1}"), setter)
            })
            .collect(),
        SweepAxis::Iterations => config
            .sweep
            .iterations
            .iter()
            .map(|&n| {
                let setter: Box<dyn Fn(&mut Cell) + Sync> =
                    Box::new(move |cell: &mut Cell| cell.sampler.n_iterations = n);
                (n.to_string(), setter)
            })
            .collect(),
        SweepAxis::Discrepancy => config
            .sweep
            .discrepancies
            .iter()
            .map(|kind| {
                let label = match kind {
                    popr::energy::DiscrepancyKind::Js => "js".to_string(),
                    popr::energy::DiscrepancyKind::Kl => "kl".to_string(),
                    popr::energy::DiscrepancyKind::MmdRbf { .. } => "mmd-rbf".to_string(),
                    popr::energy::DiscrepancyKind::MmdMultiscale { .. } => {
                        "mmd-multiscale".to_string()
                    }
                };
                let kind = kind.clone();
                let setter: Box<dyn Fn(&mut Cell) + Sync> =
                    Box::new(move |cell: &mut Cell| cell.sampler.discrepancy = kind.clone());
                (label, setter)
            })
            .collect(),
    };

    for (label, setter) in &axis_values {
        for rep in 0..config.repetitions {
            let mut cell = Cell {
                axis_value: label.clone(),
                rep,
                episodes: config.episodes,
                expert_fraction: 1.0,
                sampler: base_sampler.clone(),
            };
            setter(&mut cell);
            // distinct seeds per repetition, stable per cell coordinates
            cell.sampler.seed = SeedMix::new(base_sampler.seed)
                .text("sweep")
                .text(axis.name())
                .text(label)
                .num(rep as u64)
                .finish();
            cells.push(cell);
        }
    }

    let results = par_map(&cells, |cell| -> Result<SweepRow, CliError> {
        let env = ToyEnvConfig {
            seed: SeedMix::new(config.env.seed).text("sweep-env").num(cell.rep as u64).finish(),
            ..config.env
        };
        let expert = expert_policy(env.n_states);
        let expert_data =
            generate_dataset(&env, &expert, cell.episodes).map_err(CliError::runtime)?;
        let dataset = if cell.expert_fraction < 1.0 {
            let noise_env = ToyEnvConfig {
                seed: SeedMix::new(config.env.seed)
                    .text("sweep-noise")
                    .num(cell.rep as u64)
                    .finish(),
                ..config.env
            };
            let noise_policy =
                mixture_policy(MixturePolicySpec { epsilon: 1.0, seed: cell.rep as u64 }, env.n_states);
            let noise_data = generate_dataset(&noise_env, &noise_policy, cell.episodes)
                .map_err(CliError::runtime)?;
            mix_datasets(&expert_data, &noise_data, cell.expert_fraction, cell.sampler.seed)?
        } else {
            expert_data
        };
        let (ndcg_value, srcc_value) =
            evaluate_cell(config, &env, &dataset, &cell.sampler, cell.rep)?;
        Ok(SweepRow {
            axis_value: cell.axis_value.clone(),
            rep: cell.rep,
            ndcg: ndcg_value,
            srcc: srcc_value,
        })
    });
    results.into_iter().collect()
}

/// Long-format results: `axis_value,rep,ndcg,srcc`.
pub fn sweep_results_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("axis_value,rep,ndcg,srcc\n");
    for row in rows {
        out.push_str(&format!("{},{},{:?},{:?}\n", row.axis_value, row.rep, row.ndcg, row.srcc));
    }
    out
}

/// Per-cell mean and standard deviation:
/// `axis_value,ndcg_mean,ndcg_std,srcc_mean,srcc_std`.
pub fn sweep_summary_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("axis_value,ndcg_mean,ndcg_std,srcc_mean,srcc_std\n");
    let mut order: Vec<&str> = Vec::new();
    for row in rows {
        if !order.contains(&row.axis_value.as_str()) {
            order.push(&row.axis_value);
        }
    }
    for value in order {
        let cell: Vec<&SweepRow> = rows.iter().filter(|r| r.axis_value == value).collect();
        let n = cell.len() as f64;
        let stats = |pick: fn(&SweepRow) -> f64| -> (f64, f64) {
            let mean = cell.iter().map(|r| pick(r)).sum::<f64>() / n;
            let var = if cell.len() > 1 {
                cell.iter().map(|r| (pick(r) - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            (mean, var.sqrt())
        };
        let (nm, ns) = stats(|r| r.ndcg);
        let (sm, ss) = stats(|r| r.srcc);
        out.push_str(&format!("{value},{nm:?},{ns:?},{sm:?},{ss:?}\n"));
    }
    out
}
