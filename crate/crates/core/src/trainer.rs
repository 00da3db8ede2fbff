//! Alternating discriminator/generator optimisation with the diversity
//! regularizer, periodic evaluation, λ sweeps, and discriminator warm starts.

use std::io::Write;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::data::{
    sample_conditional_ring, sample_ring, sample_trajectories, ConditionalRingSpec, LabeledBatch, RingMixtureSpec,
    TrajectorySpec,
};
use crate::error::{Error, Result};
use crate::evaluation;
use crate::metrics::EvalReport;
use crate::nd::{adam_step, AdamConfig, AdamState, Tape};
use crate::nets::{generator_forward, mlp_init_with, GeneratorInput, NetworkParams, NetworkSpec};
use crate::objectives::{
    d_loss_var, generator_objective, sample_latent_pair, GeneratorBatch, ObjectiveConfig,
};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Ring,
    ConditionalRing,
    Trajectory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub task: Task,
    pub objective: ObjectiveConfig,
    pub z_dim: usize,
    pub batch_size: usize,
    pub steps: u64,
    pub d_steps_per_g: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    pub eval_every: u64,
    /// Checkpoint whose discriminator weights seed a fresh run.
    pub warm_start_discriminator: Option<PathBuf>,
    /// Generator updates during which a warm-started discriminator is held fixed.
    pub d_freeze_steps: u64,
    pub ring: RingMixtureSpec,
    pub conditional: ConditionalRingSpec,
    pub trajectory: TrajectorySpec,
}

impl TrainConfig {
    /// Defaults for a task: λ = 0.1 on the ring, 1.0 on the conditional ring,
    /// 10 on trajectories.
    pub fn for_task(task: Task) -> Self {
        let mut objective = ObjectiveConfig::default();
        let (z_dim, lambda) = match task {
            Task::Ring => (2, 0.1),
            Task::ConditionalRing => (8, 1.0),
            Task::Trajectory => {
                objective.diversity.space = crate::objectives::DiversitySpace::Sequence;
                (8, 10.0)
            }
        };
        objective.diversity.lambda = lambda;
        Self {
            task,
            objective,
            z_dim,
            batch_size: 128,
            steps: 30_000,
            d_steps_per_g: 1,
            adam: AdamConfig::default(),
            seed: 0,
            eval_every: 1000,
            warm_start_discriminator: None,
            d_freeze_steps: 0,
            ring: RingMixtureSpec::default(),
            conditional: ConditionalRingSpec::default(),
            trajectory: TrajectorySpec::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Config("steps must be >= 1".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Config("batch_size must be >= 2".into()));
        }
        if self.z_dim == 0 || self.d_steps_per_g == 0 || self.eval_every == 0 {
            return Err(Error::Config("z_dim, d_steps_per_g and eval_every must be >= 1".into()));
        }
        self.adam.validate()?;
        self.objective.validate()?;
        match self.task {
            Task::Ring => self.ring.validate(),
            Task::ConditionalRing => self.conditional.validate(),
            Task::Trajectory => self.trajectory.validate(),
        }
    }

    /// Conditional ring specification with the configured ring geometry.
    pub fn conditional_spec(&self) -> ConditionalRingSpec {
        ConditionalRingSpec {
            base: self.ring,
            ..self.conditional
        }
    }

    pub fn condition_dim(&self) -> usize {
        match self.task {
            Task::Ring => 0,
            Task::ConditionalRing => self.conditional.n_labels,
            Task::Trajectory => 2 * self.trajectory.context_len,
        }
    }

    pub fn output_dim(&self) -> usize {
        match self.task {
            Task::Ring | Task::ConditionalRing => 2,
            Task::Trajectory => 2 * self.trajectory.horizon,
        }
    }

    pub fn seq_len(&self) -> usize {
        match self.task {
            Task::Trajectory => self.trajectory.horizon,
            _ => 1,
        }
    }

    pub fn generator_spec(&self) -> NetworkSpec {
        NetworkSpec::ring_generator(self.condition_dim() + self.z_dim, self.output_dim())
    }

    pub fn discriminator_spec(&self) -> NetworkSpec {
        NetworkSpec::ring_discriminator(self.condition_dim() + self.output_dim())
    }

    pub fn sample_real(&self, rng: &mut Rng, n: usize) -> LabeledBatch {
        match self.task {
            Task::Ring => LabeledBatch {
                condition: None,
                target: sample_ring(&self.ring, n, rng),
                labels: vec![0; n],
            },
            Task::ConditionalRing => sample_conditional_ring(&self.conditional_spec(), n, rng),
            Task::Trajectory => sample_trajectories(&self.trajectory, n, rng),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub g: NetworkParams,
    pub d: NetworkParams,
    pub adam_g: AdamState,
    pub adam_d: AdamState,
    pub step: u64,
    pub rng: Rng,
}

impl TrainState {
    /// Fresh networks drawn from the run seed; loads the warm-start
    /// discriminator when one is configured.
    pub fn init(cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let mut state = Self::fresh(cfg)?;
        if let Some(path) = &cfg.warm_start_discriminator {
            let bytes = std::fs::read(path)?;
            let ckpt = checkpoint::load_checkpoint(&bytes)?;
            state.set_discriminator(ckpt.d)?;
        }
        Ok(state)
    }

    fn fresh(cfg: &TrainConfig) -> Result<Self> {
        let mut rng = rng::seeded(cfg.seed);
        let g = mlp_init_with(&cfg.generator_spec(), &mut rng)?;
        let d = mlp_init_with(&cfg.discriminator_spec(), &mut rng)?;
        Ok(Self {
            adam_g: AdamState::new(&g.tensors),
            adam_d: AdamState::new(&d.tensors),
            g,
            d,
            step: 0,
            rng,
        })
    }

    /// Replaces the discriminator weights and resets its optimiser state.
    pub fn set_discriminator(&mut self, d: NetworkParams) -> Result<()> {
        if d.spec != self.d.spec {
            return Err(Error::Checkpoint(format!(
                "discriminator spec mismatch: checkpoint {:?}, run {:?}",
                d.spec, self.d.spec
            )));
        }
        self.adam_d = AdamState::new(&d.tensors);
        self.d = d;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub step: u64,
    pub d_loss: f64,
    pub g_adv: f64,
    pub g_rec: f64,
    pub l_z: f64,
    pub ratio_mean: f64,
    pub eval: Option<EvalReport>,
}

pub const METRICS_HEADER: &str = "step,d_loss,g_adv,g_rec,l_z,ratio_mean,modes,hq_frac,diversity,dist_min,frechet";

impl MetricRow {
    pub fn csv_line(&self) -> String {
        let mut s = format!(
            "{},{},{},{},{},{}",
            self.step, self.d_loss, self.g_adv, self.g_rec, self.l_z, self.ratio_mean
        );
        match &self.eval {
            Some(e) => s.push_str(&format!(
                ",{},{},{},{},{}",
                e.modes_captured, e.hq_fraction, e.pairwise_diversity, e.dist_min, e.frechet2
            )),
            None => s.push_str(",,,,,"),
        }
        s
    }
}

pub fn write_metrics_csv<W: Write>(rows: &[MetricRow], mut out: W) -> Result<()> {
    writeln!(out, "{METRICS_HEADER}")?;
    for r in rows {
        writeln!(out, "{}", r.csv_line())?;
    }
    Ok(())
}

fn diverged(step: u64, e: Error) -> Error {
    match e {
        Error::NonFinite(what) => Error::Diverged { step, reason: what },
        other => other,
    }
}

/// One discriminator update (`d_steps_per_g` of them) followed by one
/// generator update. Logged losses are measured before the respective update.
pub fn train_step(state: &mut TrainState, cfg: &TrainConfig) -> Result<MetricRow> {
    let step = state.step + 1;
    let n = cfg.batch_size;
    let warm_frozen = cfg.warm_start_discriminator.is_some() && state.step < cfg.d_freeze_steps;

    let mut d_loss_value = 0.0;
    for _ in 0..cfg.d_steps_per_g {
        let real = cfg.sample_real(&mut state.rng, n);
        let z = rng::normal_matrix(&mut state.rng, n, cfg.z_dim);
        let fake = generator_forward(
            &state.g,
            &GeneratorInput {
                condition: real.condition.clone(),
                latent: z,
            },
        )?;

        let tape = Tape::new();
        let d = state.d.bind(&tape, !warm_frozen);
        let cond = real.condition.as_ref();
        let real_in = crate::nets::join_condition(cond, &real.target)?;
        let fake_in = crate::nets::join_condition(cond, &fake)?;
        let (lr, _) = d.forward(tape.constant(real_in))?;
        let (lf, _) = d.forward(tape.constant(fake_in))?;
        let loss = d_loss_var(lr.reshape(&[n])?, lf.reshape(&[n])?)?;
        d_loss_value = loss.item();
        if !d_loss_value.is_finite() {
            return Err(Error::Diverged {
                step,
                reason: "discriminator loss".into(),
            });
        }
        if !warm_frozen {
            let grads = tape.gradients(loss)?;
            let gs: Vec<_> = d.vars.iter().map(|&v| grads.wrt(v)).collect();
            adam_step(&mut state.d.tensors, &gs, &mut state.adam_d, &cfg.adam).map_err(|e| diverged(step, e))?;
        }
    }

    let real = cfg.sample_real(&mut state.rng, n);
    let div = &cfg.objective.diversity;
    let (z1, z2) = sample_latent_pair(&mut state.rng, n, cfg.z_dim, div.effective_norm(), div.min_z_gap)?;
    let batch = GeneratorBatch {
        condition: real.condition,
        target: Some(real.target),
        z1,
        z2,
        seq_len: cfg.seq_len(),
    };
    let tape = Tape::new();
    let g = state.g.bind(&tape, true);
    let d = state.d.bind(&tape, false);
    let terms = generator_objective(&tape, &g, &d, &batch, &cfg.objective)?;
    let total = terms.total.item();
    if !total.is_finite() {
        return Err(Error::Diverged {
            step,
            reason: "generator loss".into(),
        });
    }
    let grads = tape.gradients(terms.total)?;
    let gs: Vec<_> = g.vars.iter().map(|&v| grads.wrt(v)).collect();
    adam_step(&mut state.g.tensors, &gs, &mut state.adam_g, &cfg.adam).map_err(|e| diverged(step, e))?;

    state.step = step;
    Ok(MetricRow {
        step,
        d_loss: d_loss_value,
        g_adv: terms.parts.adv,
        g_rec: terms.parts.rec,
        l_z: terms.parts.l_z,
        ratio_mean: terms.parts.ratio_mean,
        eval: None,
    })
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub state: TrainState,
    pub log: Vec<MetricRow>,
    /// State at the evaluation with the most modes captured (ties: higher
    /// high-quality fraction, then earlier).
    pub best: Option<(EvalReport, TrainState)>,
    pub final_report: EvalReport,
}

/// A failed run with the rows logged before the failure.
#[derive(Debug)]
pub struct TrainFailure {
    pub error: Error,
    pub log: Vec<MetricRow>,
}

impl std::fmt::Display for TrainFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} (after {} logged steps)", self.error, self.log.len())
    }
}

impl std::error::Error for TrainFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl From<Error> for TrainFailure {
    fn from(error: Error) -> Self {
        Self { error, log: Vec::new() }
    }
}

pub fn train(cfg: &TrainConfig) -> std::result::Result<TrainOutcome, TrainFailure> {
    let state = TrainState::init(cfg)?;
    train_from(cfg, state, |_| {})
}

/// Runs `cfg.steps - state.step` steps from `state`, calling `on_row` for every logged row.
pub fn train_from(
    cfg: &TrainConfig,
    mut state: TrainState,
    mut on_row: impl FnMut(&MetricRow),
) -> std::result::Result<TrainOutcome, TrainFailure> {
    cfg.validate()?;
    let mut log = Vec::with_capacity(cfg.steps.saturating_sub(state.step) as usize);
    let mut best: Option<(EvalReport, TrainState)> = None;
    let mut last_eval = None;
    while state.step < cfg.steps {
        let mut row = match train_step(&mut state, cfg) {
            Ok(r) => r,
            Err(error) => return Err(TrainFailure { error, log }),
        };
        if row.step % cfg.eval_every == 0 || row.step == cfg.steps {
            let report = match evaluation::evaluate(cfg, &state.g) {
                Ok(r) => r,
                Err(error) => return Err(TrainFailure { error, log }),
            };
            let better = best.as_ref().is_none_or(|(b, _)| {
                (report.modes_captured, report.hq_fraction) > (b.modes_captured, b.hq_fraction)
            });
            if better {
                best = Some((report, state.clone()));
            }
            row.eval = Some(report);
            last_eval = Some(report);
        }
        on_row(&row);
        log.push(row);
    }
    let final_report = match last_eval {
        Some(r) if log.last().is_some_and(|row| row.step == state.step) => r,
        _ => evaluation::evaluate(cfg, &state.g).map_err(|error| TrainFailure {
            error,
            log: log.clone(),
        })?,
    };
    Ok(TrainOutcome {
        state,
        log,
        best,
        final_report,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub lambda: f64,
    pub report: Option<EvalReport>,
    /// Failure message when the run diverged.
    pub error: Option<String>,
}

/// Independent runs that differ only in λ, evaluated at the end. Up to `jobs`
/// runs execute concurrently; each owns its state and generator stream.
pub fn sweep(base: &TrainConfig, lambdas: &[f64], jobs: usize) -> Result<Vec<SweepEntry>> {
    if lambdas.is_empty() {
        return Err(Error::Config("sweep needs at least one lambda".into()));
    }
    let run = |lambda: f64| {
        let mut cfg = base.clone();
        cfg.objective.diversity.lambda = lambda;
        match train(&cfg) {
            Ok(out) => SweepEntry {
                lambda,
                report: Some(out.final_report),
                error: None,
            },
            Err(f) => SweepEntry {
                lambda,
                report: None,
                error: Some(f.to_string()),
            },
        }
    };
    let jobs = jobs.max(1).min(lambdas.len());
    if jobs == 1 {
        return Ok(lambdas.iter().map(|&l| run(l)).collect());
    }
    let mut results: Vec<Option<SweepEntry>> = vec![None; lambdas.len()];
    std::thread::scope(|s| {
        for chunk_start in (0..lambdas.len()).step_by(jobs) {
            let handles: Vec<_> = (chunk_start..(chunk_start + jobs).min(lambdas.len()))
                .map(|i| {
                    let run = &run;
                    (i, s.spawn(move || run(lambdas[i])))
                })
                .collect();
            for (i, h) in handles {
                results[i] = Some(h.join().expect("sweep worker panicked"));
            }
        }
    });
    Ok(results.into_iter().map(|r| r.expect("filled")).collect())
}
