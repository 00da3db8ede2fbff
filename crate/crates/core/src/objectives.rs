//! Adversarial losses, the diversity-sensitive regularizer and its feature /
//! sequence variants, reconstruction loss, and the combined generator
//! objective.
//!
//! Every loss comes in two forms: a plain function on tensors (used for
//! evaluation and tests) and a `*_var` form recorded on a [`Tape`] so the
//! trainer can differentiate it.

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nd::{softplus, Tape, Tensor, Var};
use crate::nets::{join_condition_var, BoundNetwork, NetworkParams};
use crate::rng::{self, Rng};

/// Attempts allowed to redraw `z2` when a latent pair is too close.
pub const MAX_RESAMPLE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Norm {
    L1,
    L2,
}

impl Norm {
    pub fn of(self, v: impl IntoIterator<Item = f64>) -> f64 {
        match self {
            Norm::L1 => v.into_iter().map(f64::abs).sum(),
            Norm::L2 => v.into_iter().map(|x| x * x).sum::<f64>().sqrt(),
        }
    }

    pub fn of_diff(self, a: &[f64], b: &[f64]) -> f64 {
        self.of(a.iter().zip(b).map(|(x, y)| x - y))
    }
}

/// Where sample distances are measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiversitySpace {
    /// Generator outputs directly.
    Output,
    /// Hidden features of the discriminator, averaged over layers.
    Feature,
    /// Per-step l1 distance averaged over an output sequence.
    Sequence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GLossForm {
    /// `mean log(1 − D(G(z)))`, minimised by G.
    Minimax,
    /// `−mean log D(G(z))`.
    NonSaturating,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiversityConfig {
    pub lambda: f64,
    /// Upper clamp on the per-pair ratio; `None` leaves it unbounded.
    pub tau: Option<f64>,
    pub norm: Norm,
    pub space: DiversitySpace,
    pub min_z_gap: f64,
}

impl Default for DiversityConfig {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            tau: Some(10.0),
            norm: Norm::L1,
            space: DiversitySpace::Output,
            min_z_gap: 1e-8,
        }
    }
}

impl DiversityConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if let Some(t) = self.tau {
            if !(t > 0.0) {
                return Err(Error::Config(format!("tau must be > 0 when bounded, got {t}")));
            }
        }
        if !(self.min_z_gap > 0.0) {
            return Err(Error::Config(format!("min_z_gap must be > 0, got {}", self.min_z_gap)));
        }
        Ok(())
    }

    /// The sequence regularizer is defined with l1 norms only.
    pub fn effective_norm(&self) -> Norm {
        match self.space {
            DiversitySpace::Sequence => Norm::L1,
            _ => self.norm,
        }
    }

    fn clamp(&self, raw: f64) -> f64 {
        match self.tau {
            Some(t) => raw.min(t),
            None => raw,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveConfig {
    pub beta: f64,
    pub g_loss_form: GLossForm,
    pub diversity: DiversityConfig,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self {
            beta: 0.0,
            g_loss_form: GLossForm::NonSaturating,
            diversity: DiversityConfig::default(),
        }
    }
}

impl ObjectiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(Error::Config(format!("beta must be >= 0, got {}", self.beta)));
        }
        self.diversity.validate()
    }
}

fn nonempty(v: &[f64], op: &'static str) -> Result<()> {
    if v.is_empty() {
        Err(Error::EmptyBatch(op))
    } else {
        Ok(())
    }
}

fn mean(v: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = v.len() as f64;
    v.sum::<f64>() / n
}

/// Discriminator loss `−mean log σ(real) − mean log(1 − σ(fake))`, in logit form.
pub fn d_loss(logits_real: &[f64], logits_fake: &[f64]) -> Result<f64> {
    nonempty(logits_real, "d_loss")?;
    nonempty(logits_fake, "d_loss")?;
    Ok(mean(logits_real.iter().map(|&l| softplus(-l))) + mean(logits_fake.iter().map(|&l| softplus(l))))
}

pub fn g_adv_loss(logits_fake: &[f64], form: GLossForm) -> Result<f64> {
    nonempty(logits_fake, "g_adv_loss")?;
    Ok(match form {
        GLossForm::Minimax => -mean(logits_fake.iter().map(|&l| softplus(l))),
        GLossForm::NonSaturating => mean(logits_fake.iter().map(|&l| softplus(-l))),
    })
}

fn check_same(a: &Tensor, b: &Tensor, op: &'static str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(op, a.shape(), b.shape()));
    }
    Ok(())
}

fn latent_gap(z1: &Tensor, z2: &Tensor, norm: Norm, min_gap: f64, op: &'static str) -> Result<f64> {
    check_same(z1, z2, op)?;
    let gap = norm.of_diff(z1.data(), z2.data());
    if !(gap >= min_gap) {
        return Err(Error::LatentGap { gap, min_gap });
    }
    Ok(gap)
}

/// `min(‖y1 − y2‖ / ‖z1 − z2‖, τ)` with the configured norm on both sides.
pub fn diversity_ratio(y1: &Tensor, y2: &Tensor, z1: &Tensor, z2: &Tensor, cfg: &DiversityConfig) -> Result<f64> {
    check_same(y1, y2, "diversity_ratio")?;
    let gap = latent_gap(z1, z2, cfg.norm, cfg.min_z_gap, "diversity_ratio")?;
    Ok(cfg.clamp(cfg.norm.of_diff(y1.data(), y2.data()) / gap))
}

/// Layer-averaged feature distance over the latent distance. Never clamped.
pub fn feature_diversity_ratio(
    feats1: &[Tensor],
    feats2: &[Tensor],
    z1: &Tensor,
    z2: &Tensor,
    cfg: &DiversityConfig,
) -> Result<f64> {
    if feats1.len() != feats2.len() || feats1.is_empty() {
        return Err(Error::shape("feature_diversity_ratio", &[feats1.len()], &[feats2.len()]));
    }
    let gap = latent_gap(z1, z2, cfg.norm, cfg.min_z_gap, "feature_diversity_ratio")?;
    let mut total = 0.0;
    for (a, b) in feats1.iter().zip(feats2) {
        check_same(a, b, "feature_diversity_ratio")?;
        total += cfg.norm.of_diff(a.data(), b.data());
    }
    Ok(total / feats1.len() as f64 / gap)
}

/// Step-averaged l1 distance between two output sequences over `‖z1 − z2‖₁`.
pub fn sequence_diversity_ratio(
    seq1: &[Tensor],
    seq2: &[Tensor],
    z1: &Tensor,
    z2: &Tensor,
    cfg: &DiversityConfig,
) -> Result<f64> {
    if seq1.len() != seq2.len() || seq1.is_empty() {
        return Err(Error::shape("sequence_diversity_ratio", &[seq1.len()], &[seq2.len()]));
    }
    let gap = latent_gap(z1, z2, Norm::L1, cfg.min_z_gap, "sequence_diversity_ratio")?;
    let mut total = 0.0;
    for (a, b) in seq1.iter().zip(seq2) {
        check_same(a, b, "sequence_diversity_ratio")?;
        total += Norm::L1.of_diff(a.data(), b.data());
    }
    Ok(total / seq1.len() as f64 / gap)
}

/// Mean absolute error.
pub fn reconstruction_loss(y_hat: &Tensor, y: &Tensor) -> Result<f64> {
    check_same(y_hat, y, "reconstruction_loss")?;
    if y.is_empty() {
        return Err(Error::EmptyBatch("reconstruction_loss"));
    }
    Ok(mean(y_hat.data().iter().zip(y.data()).map(|(a, b)| (a - b).abs())))
}

pub fn d_loss_var<'t>(logits_real: Var<'t>, logits_fake: Var<'t>) -> Result<Var<'t>> {
    let real = logits_real.neg().softplus().mean()?;
    let fake = logits_fake.softplus().mean()?;
    real.add(fake)
}

pub fn g_adv_loss_var(logits_fake: Var<'_>, form: GLossForm) -> Result<Var<'_>> {
    Ok(match form {
        GLossForm::Minimax => logits_fake.softplus().mean()?.neg(),
        GLossForm::NonSaturating => logits_fake.neg().softplus().mean()?,
    })
}

pub fn reconstruction_loss_var<'t>(y_hat: Var<'t>, y: Var<'t>) -> Result<Var<'t>> {
    y_hat.sub(y)?.abs().mean()
}

/// Row-wise norm of a `[n, d]` tensor.
pub fn row_norms_var(x: Var<'_>, norm: Norm) -> Result<Var<'_>> {
    match norm {
        Norm::L1 => x.abs().sum_rows(),
        Norm::L2 => Ok(x.square().sum_rows()?.sqrt()),
    }
}

/// Per-row latent distances, rejecting any below `min_gap`.
pub fn latent_gaps(z1: &Tensor, z2: &Tensor, norm: Norm, min_gap: f64) -> Result<Tensor> {
    check_same(z1, z2, "latent_gaps")?;
    let (n, _) = z1.dims2("latent_gaps")?;
    let mut gaps = Vec::with_capacity(n);
    for i in 0..n {
        let gap = norm.of_diff(z1.row(i), z2.row(i));
        if !(gap >= min_gap) {
            return Err(Error::LatentGap { gap, min_gap });
        }
        gaps.push(gap);
    }
    Ok(Tensor::vector(gaps))
}

/// Batch regularizer value recorded on a tape.
pub struct DiversityTerm<'t> {
    /// Mean over the batch of the (clamped) per-pair ratios.
    pub value: Var<'t>,
    /// Unclamped per-pair ratios.
    pub raw: Tensor,
}

impl DiversityTerm<'_> {
    pub fn raw_mean(&self) -> f64 {
        self.raw.sum() / self.raw.len() as f64
    }
}

fn finish_ratio<'t>(num: Var<'t>, gaps: &Tensor, tau: Option<f64>) -> Result<DiversityTerm<'t>> {
    let ratio = num.div(num.tape().constant(gaps.clone()))?;
    let raw = ratio.value();
    let value = match tau {
        // the outer clamp absorbs rounding when every pair sits at τ
        Some(t) => ratio.min_const(t).mean()?.min_const(t),
        None => ratio.mean()?,
    };
    Ok(DiversityTerm { value, raw })
}

/// Output-space regularizer for a batch of pairs `y1[i], y2[i]`.
pub fn output_diversity_var<'t>(y1: Var<'t>, y2: Var<'t>, gaps: &Tensor, cfg: &DiversityConfig) -> Result<DiversityTerm<'t>> {
    let num = row_norms_var(y1.sub(y2)?, cfg.norm)?;
    finish_ratio(num, gaps, cfg.tau)
}

/// Feature-space regularizer over matching lists of hidden layers.
pub fn feature_diversity_var<'t>(
    feats1: &[Var<'t>],
    feats2: &[Var<'t>],
    gaps: &Tensor,
    cfg: &DiversityConfig,
) -> Result<DiversityTerm<'t>> {
    if feats1.len() != feats2.len() || feats1.is_empty() {
        return Err(Error::shape("feature_diversity", &[feats1.len()], &[feats2.len()]));
    }
    let mut acc: Option<Var<'t>> = None;
    for (&a, &b) in feats1.iter().zip(feats2) {
        let d = row_norms_var(a.sub(b)?, cfg.norm)?;
        acc = Some(match acc {
            Some(s) => s.add(d)?,
            None => d,
        });
    }
    let num = acc.expect("nonempty").scale(1.0 / feats1.len() as f64);
    finish_ratio(num, gaps, None)
}

/// Sequence regularizer. Rows hold `seq_len` steps laid out contiguously.
pub fn sequence_diversity_var<'t>(y1: Var<'t>, y2: Var<'t>, gaps: &Tensor, seq_len: usize) -> Result<DiversityTerm<'t>> {
    if seq_len == 0 || y1.shape().get(1).is_none_or(|c| c % seq_len != 0) {
        return Err(Error::shape("sequence_diversity", &y1.shape(), &[seq_len]));
    }
    let num = y1.sub(y2)?.abs().sum_rows()?.scale(1.0 / seq_len as f64);
    finish_ratio(num, gaps, None)
}

/// One generator minibatch: a latent pair per example plus optional
/// conditions and reconstruction targets.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorBatch {
    pub condition: Option<Tensor>,
    pub target: Option<Tensor>,
    pub z1: Tensor,
    pub z2: Tensor,
    /// Number of output steps per row; 1 for single-point outputs.
    pub seq_len: usize,
}

/// Logged components of the generator objective.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossParts {
    pub adv: f64,
    pub rec: f64,
    /// Regularizer value before weighting by λ.
    pub l_z: f64,
    /// Mean unclamped ratio.
    pub ratio_mean: f64,
}

pub struct GeneratorTerms<'t> {
    pub total: Var<'t>,
    pub parts: LossParts,
}

/// `adv(G(x,z1)) + β·rec(G(x,z1), y) − λ·L_z` recorded on `tape`.
pub fn generator_objective<'t>(
    tape: &'t Tape,
    gen: &BoundNetwork<'t, '_>,
    disc: &BoundNetwork<'t, '_>,
    batch: &GeneratorBatch,
    cfg: &ObjectiveConfig,
) -> Result<GeneratorTerms<'t>> {
    let div = &cfg.diversity;
    if cfg.beta > 0.0 && batch.target.is_none() {
        return Err(Error::Config("reconstruction weight beta > 0 requires targets".into()));
    }
    let gaps = latent_gaps(&batch.z1, &batch.z2, div.effective_norm(), div.min_z_gap)?;
    let cond = batch.condition.as_ref();

    let (y1, _) = gen.forward(join_condition_var(tape, cond, tape.constant(batch.z1.clone()))?)?;
    let (y2, _) = gen.forward(join_condition_var(tape, cond, tape.constant(batch.z2.clone()))?)?;

    let (logits, feats1) = disc.forward(join_condition_var(tape, cond, y1)?)?;
    let n = logits.shape()[0];
    let adv = g_adv_loss_var(logits.reshape(&[n])?, cfg.g_loss_form)?;

    let rec = match &batch.target {
        Some(t) => Some(reconstruction_loss_var(y1, tape.constant(t.clone()))?),
        None => None,
    };

    let term = match div.space {
        DiversitySpace::Output => output_diversity_var(y1, y2, &gaps, div)?,
        DiversitySpace::Feature => {
            let (_, feats2) = disc.forward(join_condition_var(tape, cond, y2)?)?;
            feature_diversity_var(&feats1, &feats2, &gaps, div)?
        }
        DiversitySpace::Sequence => sequence_diversity_var(y1, y2, &gaps, batch.seq_len)?,
    };

    let mut total = adv;
    if cfg.beta > 0.0 {
        total = total.add(rec.expect("checked above").scale(cfg.beta))?;
    }
    total = total.add(term.value.scale(-div.lambda))?;

    let parts = LossParts {
        adv: adv.item(),
        rec: rec.map_or(0.0, |r| r.item()),
        l_z: term.value.item(),
        ratio_mean: term.raw_mean(),
    };
    Ok(GeneratorTerms { total, parts })
}

/// Value of the generator objective and its parts.
pub fn generator_total_loss(
    batch: &GeneratorBatch,
    params_g: &NetworkParams,
    params_d: &NetworkParams,
    cfg: &ObjectiveConfig,
) -> Result<(f64, LossParts)> {
    let tape = Tape::new();
    let g = params_g.bind(&tape, false);
    let d = params_d.bind(&tape, false);
    let terms = generator_objective(&tape, &g, &d, batch, cfg)?;
    Ok((terms.total.item(), terms.parts))
}

/// Objective value, parts, and gradients for every generator tensor.
pub fn generator_loss_and_grads(
    batch: &GeneratorBatch,
    params_g: &NetworkParams,
    params_d: &NetworkParams,
    cfg: &ObjectiveConfig,
) -> Result<(f64, LossParts, Vec<Tensor>)> {
    let tape = Tape::new();
    let g = params_g.bind(&tape, true);
    let d = params_d.bind(&tape, false);
    let terms = generator_objective(&tape, &g, &d, batch, cfg)?;
    let grads = tape.gradients(terms.total)?;
    let gs = g.vars.iter().map(|&v| grads.wrt(v)).collect();
    Ok((terms.total.item(), terms.parts, gs))
}

/// Draws `n` latent pairs from `N(0, I)`, redrawing `z2` rows that land
/// within `min_gap` of `z1`.
pub fn sample_latent_pair(rng: &mut Rng, n: usize, z_dim: usize, norm: Norm, min_gap: f64) -> Result<(Tensor, Tensor)> {
    let z1 = rng::normal_matrix(rng, n, z_dim);
    let z2 = rng::normal_matrix(rng, n, z_dim);
    separate_pairs(z1, z2, norm, min_gap, || {
        (0..z_dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
    })
}

pub(crate) fn separate_pairs(
    z1: Tensor,
    mut z2: Tensor,
    norm: Norm,
    min_gap: f64,
    mut redraw: impl FnMut() -> Vec<f64>,
) -> Result<(Tensor, Tensor)> {
    let (n, d) = z1.dims2("sample_latent_pair")?;
    for i in 0..n {
        let mut attempts = 0;
        while !(norm.of_diff(z1.row(i), z2.row(i)) >= min_gap) {
            if attempts == MAX_RESAMPLE {
                return Err(Error::ResampleExhausted {
                    min_gap,
                    attempts: MAX_RESAMPLE,
                });
            }
            let fresh = redraw();
            z2.data_mut()[i * d..(i + 1) * d].copy_from_slice(&fresh);
            attempts += 1;
        }
    }
    Ok((z1, z2))
}
