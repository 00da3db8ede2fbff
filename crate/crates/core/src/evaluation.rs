//! Task-level evaluation of a trained generator.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::data::{one_hot, sample_conditional_ring_for, sample_ring, trajectory_from, Direction};
use crate::error::Result;
use crate::metrics::{classify_samples, dist_min, frechet_2d, mode_coverage, pairwise_diversity, EvalReport, EVAL_SAMPLES};
use crate::nd::Tensor;
use crate::nets::{generator_forward, GeneratorInput, NetworkParams};
use crate::rng::{self, Rng};
use crate::trainer::{Task, TrainConfig};

/// Stream id reserved for evaluation draws, disjoint from the training stream.
pub const EVAL_STREAM: u64 = 7;
pub const TRAJECTORY_CONTEXTS: usize = 25;
pub const SAMPLES_PER_CONTEXT: usize = 100;

fn eval_rng(cfg: &TrainConfig) -> Rng {
    rng::stream(cfg.seed, EVAL_STREAM)
}

pub fn evaluate(cfg: &TrainConfig, g: &NetworkParams) -> Result<EvalReport> {
    let mut rng = eval_rng(cfg);
    match cfg.task {
        Task::Ring => evaluate_ring(cfg, g, &mut rng),
        Task::ConditionalRing => evaluate_conditional(cfg, g, &mut rng),
        Task::Trajectory => evaluate_trajectory(cfg, g, &mut rng),
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn evaluate_ring(cfg: &TrainConfig, g: &NetworkParams, rng: &mut Rng) -> Result<EvalReport> {
    let z = rng::normal_matrix(rng, EVAL_SAMPLES, cfg.z_dim);
    let samples = generator_forward(g, &GeneratorInput::unconditional(z))?;
    let (modes_captured, hq_fraction) = mode_coverage(&samples, &cfg.ring)?;
    let dists = cfg
        .ring
        .centers()
        .iter()
        .map(|c| dist_min(&samples, c))
        .collect::<Result<Vec<_>>>()?;
    let real = sample_ring(&cfg.ring, EVAL_SAMPLES, rng);
    Ok(EvalReport {
        modes_captured,
        hq_fraction,
        pairwise_diversity: pairwise_diversity(&samples)?,
        dist_min: mean(&dists),
        frechet2: frechet_2d(&samples, &real)?,
        n_samples: EVAL_SAMPLES,
    })
}

/// Generated points for the conditional ring, label `i % n_labels` on row `i`.
fn conditional_samples(cfg: &TrainConfig, g: &NetworkParams, rng: &mut Rng) -> Result<(Tensor, Vec<usize>)> {
    let n_labels = cfg.conditional.n_labels;
    let labels: Vec<usize> = (0..EVAL_SAMPLES).map(|i| i % n_labels).collect();
    let z = rng::normal_matrix(rng, EVAL_SAMPLES, cfg.z_dim);
    let samples = generator_forward(
        g,
        &GeneratorInput {
            condition: Some(one_hot(&labels, n_labels)),
            latent: z,
        },
    )?;
    Ok((samples, labels))
}

fn rows_with_label(samples: &Tensor, labels: &[usize], label: usize) -> Result<Tensor> {
    let idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == label).collect();
    Ok(samples.select_rows(&idx))
}

fn evaluate_conditional(cfg: &TrainConfig, g: &NetworkParams, rng: &mut Rng) -> Result<EvalReport> {
    let spec = cfg.conditional_spec();
    let (samples, labels) = conditional_samples(cfg, g, rng)?;
    let (modes_captured, hq_fraction) = mode_coverage(&samples, &spec.base)?;
    let real = sample_conditional_ring_for(&spec, &labels, rng);
    let mut diversity = Vec::new();
    let mut dists = Vec::new();
    let mut frechets = Vec::new();
    for label in 0..spec.n_labels {
        let own = rows_with_label(&samples, &labels, label)?;
        diversity.push(pairwise_diversity(&own)?);
        for k in spec.owned_modes(label) {
            dists.push(dist_min(&own, &spec.base.center(k))?);
        }
        frechets.push(frechet_2d(&own, &rows_with_label(&real.target, &labels, label)?)?);
    }
    Ok(EvalReport {
        modes_captured,
        hq_fraction,
        pairwise_diversity: mean(&diversity),
        dist_min: mean(&dists),
        frechet2: mean(&frechets),
        n_samples: EVAL_SAMPLES,
    })
}

/// Per-label coverage of the modes a label owns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalCoverage {
    /// Owned modes with at least one high-quality sample, per label.
    pub owned_modes_captured: Vec<usize>,
    /// High-quality samples landing on a mode owned by their label, per label.
    pub owned_hq_fraction: Vec<f64>,
    pub modes_per_label: usize,
}

impl ConditionalCoverage {
    pub fn min_owned_modes(&self) -> usize {
        self.owned_modes_captured.iter().copied().min().unwrap_or(0)
    }

    pub fn min_owned_hq_fraction(&self) -> f64 {
        self.owned_hq_fraction.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

pub fn conditional_coverage(cfg: &TrainConfig, g: &NetworkParams) -> Result<ConditionalCoverage> {
    let spec = cfg.conditional_spec();
    let mut rng = eval_rng(cfg);
    let (samples, labels) = conditional_samples(cfg, g, &mut rng)?;
    let classes = classify_samples(&samples, &spec.base)?;
    let mut captured = vec![vec![false; spec.modes_per_label]; spec.n_labels];
    let mut owned_hq = vec![0usize; spec.n_labels];
    let mut hq = vec![0usize; spec.n_labels];
    for (&(mode, good), &label) in classes.iter().zip(&labels) {
        if !good {
            continue;
        }
        hq[label] += 1;
        let owned = spec.owned_modes(label);
        if owned.contains(&mode) {
            owned_hq[label] += 1;
            captured[label][mode - owned.start] = true;
        }
    }
    Ok(ConditionalCoverage {
        owned_modes_captured: captured.iter().map(|c| c.iter().filter(|&&b| b).count()).collect(),
        owned_hq_fraction: owned_hq
            .iter()
            .zip(&hq)
            .map(|(&o, &h)| if h == 0 { 0.0 } else { o as f64 / h as f64 })
            .collect(),
        modes_per_label: spec.modes_per_label,
    })
}

fn evaluate_trajectory(cfg: &TrainConfig, g: &NetworkParams, rng: &mut Rng) -> Result<EvalReport> {
    let spec = &cfg.trajectory;
    let horizon = spec.horizon;
    let limit = 3.0 * spec.noise_std.max(1e-6);
    let mut captured = [false; 2];
    let mut hq = 0usize;
    let mut diversity = Vec::new();
    let mut dists = Vec::new();
    let mut frechets = Vec::new();
    for c in 0..TRAJECTORY_CONTEXTS {
        let start = 2.0 * PI * c as f64 / TRAJECTORY_CONTEXTS as f64 + 0.1;
        let dir = if c % 2 == 0 {
            Direction::Counterclockwise
        } else {
            Direction::Clockwise
        };
        let (context, truth) = trajectory_from(spec, start, dir, rng);
        let cond: Vec<f64> = (0..SAMPLES_PER_CONTEXT).flat_map(|_| context.iter().copied()).collect();
        let z = rng::normal_matrix(rng, SAMPLES_PER_CONTEXT, cfg.z_dim);
        let samples = generator_forward(
            g,
            &GeneratorInput {
                condition: Some(Tensor::matrix(SAMPLES_PER_CONTEXT, context.len(), cond)?),
                latent: z,
            },
        )?;
        let candidates = [
            spec.noiseless_future(start, Direction::Counterclockwise),
            spec.noiseless_future(start, Direction::Clockwise),
        ];
        for i in 0..SAMPLES_PER_CONTEXT {
            let row = samples.row(i);
            for (d, cand) in candidates.iter().enumerate() {
                let sq: f64 = row.iter().zip(cand).map(|(a, b)| (a - b).powi(2)).sum();
                if (sq / horizon as f64).sqrt() <= limit {
                    captured[d] = true;
                    hq += 1;
                    break;
                }
            }
        }
        diversity.push(pairwise_diversity(&samples)?);
        dists.push(dist_min(&samples, &truth)?);

        let last = |t: &Tensor| -> Result<Tensor> {
            let n = t.rows();
            let data = (0..n).flat_map(|i| t.row(i)[2 * horizon - 2..].to_vec()).collect();
            Tensor::matrix(n, 2, data)
        };
        let mut real = Vec::with_capacity(SAMPLES_PER_CONTEXT * 2 * horizon);
        for j in 0..SAMPLES_PER_CONTEXT {
            let d = if j % 2 == 0 {
                Direction::Counterclockwise
            } else {
                Direction::Clockwise
            };
            real.extend(trajectory_from(spec, start, d, rng).1);
        }
        let real = Tensor::matrix(SAMPLES_PER_CONTEXT, 2 * horizon, real)?;
        frechets.push(frechet_2d(&last(&samples)?, &last(&real)?)?);
    }
    Ok(EvalReport {
        modes_captured: captured.iter().filter(|&&b| b).count(),
        hq_fraction: hq as f64 / (TRAJECTORY_CONTEXTS * SAMPLES_PER_CONTEXT) as f64,
        pairwise_diversity: mean(&diversity),
        dist_min: mean(&dists),
        frechet2: mean(&frechets),
        n_samples: TRAJECTORY_CONTEXTS * SAMPLES_PER_CONTEXT,
    })
}
