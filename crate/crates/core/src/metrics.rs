//! Sample-quality and diversity measures, plus latent interpolation.
//!
//! The diversity and Fréchet numbers are computed on raw output coordinates;
//! they are stand-ins for perceptual and inception-feature metrics.

use serde::{Deserialize, Serialize};

use crate::data::{nearest_mode, RingMixtureSpec};
use crate::error::{Error, Result};
use crate::nd::Tensor;
use crate::nets::{generator_forward, GeneratorInput, NetworkParams};

/// Samples drawn from the generator for one evaluation.
pub const EVAL_SAMPLES: usize = 2500;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub modes_captured: usize,
    pub hq_fraction: f64,
    pub pairwise_diversity: f64,
    pub dist_min: f64,
    pub frechet2: f64,
    pub n_samples: usize,
}

fn nonempty(samples: &Tensor, op: &'static str) -> Result<(usize, usize)> {
    let (n, d) = samples.dims2(op)?;
    if n == 0 {
        return Err(Error::EmptyBatch(op));
    }
    Ok((n, d))
}

/// High-quality flag and nearest mode for every 2D sample.
pub fn classify_samples(samples: &Tensor, spec: &RingMixtureSpec) -> Result<Vec<(usize, bool)>> {
    let (n, d) = nonempty(samples, "mode_coverage")?;
    if d != 2 {
        return Err(Error::shape("mode_coverage", samples.shape(), &[n, 2]));
    }
    let limit = 3.0 * spec.std;
    Ok((0..n)
        .map(|i| {
            let r = samples.row(i);
            let (k, dist) = nearest_mode([r[0], r[1]], spec);
            (k, dist <= limit)
        })
        .collect())
}

/// `(modes with ≥ 1 high-quality sample, fraction of high-quality samples)`,
/// where high quality means within three standard deviations of the nearest mode.
pub fn mode_coverage(samples: &Tensor, spec: &RingMixtureSpec) -> Result<(usize, f64)> {
    let classes = classify_samples(samples, spec)?;
    let mut hit = vec![false; spec.n_modes];
    let mut hq = 0usize;
    for &(k, good) in &classes {
        if good {
            hit[k] = true;
            hq += 1;
        }
    }
    Ok((hit.iter().filter(|&&h| h).count(), hq as f64 / classes.len() as f64))
}

/// Mean over unordered pairs of the per-coordinate mean squared difference.
pub fn pairwise_diversity(samples: &Tensor) -> Result<f64> {
    let (n, d) = samples.dims2("pairwise_diversity")?;
    if n < 2 {
        return Err(Error::Precondition(format!("pairwise_diversity needs >= 2 samples, got {n}")));
    }
    // Σ_{i<j} ‖xᵢ − xⱼ‖² = n Σ‖xᵢ‖² − ‖Σxᵢ‖², evaluated around the mean for stability.
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (m, &v) in mean.iter_mut().zip(samples.row(i)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered_sq: f64 = (0..n)
        .map(|i| samples.row(i).iter().zip(&mean).map(|(v, m)| (v - m).powi(2)).sum::<f64>())
        .sum();
    let pair_sum = n as f64 * centered_sq;
    let pairs = (n * (n - 1) / 2) as f64;
    Ok(pair_sum / pairs / d as f64)
}

/// Smallest per-coordinate MSE between any sample row and `ground_truth`.
pub fn dist_min(samples: &Tensor, ground_truth: &[f64]) -> Result<f64> {
    let (n, d) = nonempty(samples, "dist_min")?;
    if ground_truth.len() != d {
        return Err(Error::shape("dist_min", samples.shape(), &[ground_truth.len()]));
    }
    Ok((0..n)
        .map(|i| {
            samples
                .row(i)
                .iter()
                .zip(ground_truth)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                / d as f64
        })
        .fold(f64::INFINITY, f64::min))
}

/// Mean and unbiased covariance of a 2D point set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gaussian2 {
    pub mean: [f64; 2],
    /// Row-major `[[xx, xy], [xy, yy]]`.
    pub cov: [f64; 4],
}

impl Gaussian2 {
    pub fn fit(points: &Tensor) -> Result<Self> {
        let (n, d) = points.dims2("frechet_2d")?;
        if d != 2 {
            return Err(Error::shape("frechet_2d", points.shape(), &[n, 2]));
        }
        if n < 3 {
            return Err(Error::Precondition(format!("frechet_2d needs >= 3 points per set, got {n}")));
        }
        let mut mean = [0.0; 2];
        for i in 0..n {
            mean[0] += points.row(i)[0];
            mean[1] += points.row(i)[1];
        }
        mean[0] /= n as f64;
        mean[1] /= n as f64;
        let (mut xx, mut xy, mut yy) = (0.0, 0.0, 0.0);
        for i in 0..n {
            let dx = points.row(i)[0] - mean[0];
            let dy = points.row(i)[1] - mean[1];
            xx += dx * dx;
            xy += dx * dy;
            yy += dy * dy;
        }
        let k = (n - 1) as f64;
        Ok(Self {
            mean,
            cov: [xx / k, xy / k, xy / k, yy / k],
        })
    }

    pub fn frechet(&self, other: &Self) -> f64 {
        let dm = (self.mean[0] - other.mean[0]).powi(2) + (self.mean[1] - other.mean[1]).powi(2);
        let [a, b, _, d] = self.cov;
        let [e, f, _, h] = other.cov;
        let tr_a = a + d;
        let tr_b = e + h;
        // tr √(AB) = √(tr(AB) + 2√det(AB)) for 2×2 PSD A, B.
        let tr_ab = a * e + 2.0 * b * f + d * h;
        let det_ab = ((a * d - b * b) * (e * h - f * f)).max(0.0);
        let tr_sqrt = (tr_ab + 2.0 * det_ab.sqrt()).max(0.0).sqrt();
        let trace_term = tr_a + tr_b - 2.0 * tr_sqrt;
        let trace_term = if (-1e-9..0.0).contains(&trace_term) { 0.0 } else { trace_term };
        dm + trace_term
    }
}

/// Fréchet distance between Gaussians fitted to two 2D point sets.
pub fn frechet_2d(set_a: &Tensor, set_b: &Tensor) -> Result<f64> {
    Ok(Gaussian2::fit(set_a)?.frechet(&Gaussian2::fit(set_b)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterpolationMode {
    Linear,
    Slerp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Interpolation {
    /// `[steps, z_dim]`
    pub latents: Tensor,
    /// `[steps, output_dim]`
    pub outputs: Tensor,
    /// Set when slerp was requested but the endpoints were (anti)parallel
    /// and linear interpolation was used instead.
    pub fell_back_to_linear: bool,
}

/// Latents along the path `z_a → z_b` at `steps` evenly spaced positions.
pub fn interpolate_latents(z_a: &[f64], z_b: &[f64], steps: usize, mode: InterpolationMode) -> Result<(Tensor, bool)> {
    if steps < 2 {
        return Err(Error::Precondition(format!("interpolation needs >= 2 steps, got {steps}")));
    }
    if z_a.len() != z_b.len() {
        return Err(Error::shape("latent_interpolation", &[z_a.len()], &[z_b.len()]));
    }
    let na = z_a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = z_b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut fell_back = false;
    let mut slerp_angle = None;
    if mode == InterpolationMode::Slerp {
        if na == 0.0 || nb == 0.0 {
            return Err(Error::Precondition("slerp endpoints must be nonzero".into()));
        }
        let cos = (z_a.iter().zip(z_b).map(|(a, b)| a * b).sum::<f64>() / (na * nb)).clamp(-1.0, 1.0);
        let omega = cos.acos();
        if omega.sin().abs() < 1e-10 {
            fell_back = true;
        } else {
            slerp_angle = Some(omega);
        }
    }
    let d = z_a.len();
    let mut data = Vec::with_capacity(steps * d);
    for s in 0..steps {
        if s == 0 {
            data.extend_from_slice(z_a);
            continue;
        }
        if s == steps - 1 {
            data.extend_from_slice(z_b);
            continue;
        }
        let t = s as f64 / (steps - 1) as f64;
        let (wa, wb) = match slerp_angle {
            Some(w) => (((1.0 - t) * w).sin() / w.sin(), (t * w).sin() / w.sin()),
            None => (1.0 - t, t),
        };
        data.extend(z_a.iter().zip(z_b).map(|(a, b)| wa * a + wb * b));
    }
    Ok((Tensor::matrix(steps, d, data)?, fell_back))
}

/// Generator outputs along a latent path for a fixed (optional) condition.
pub fn latent_interpolation(
    params_g: &NetworkParams,
    condition: Option<&[f64]>,
    z_a: &[f64],
    z_b: &[f64],
    steps: usize,
    mode: InterpolationMode,
) -> Result<Interpolation> {
    let (latents, fell_back_to_linear) = interpolate_latents(z_a, z_b, steps, mode)?;
    let condition = match condition {
        Some(c) => {
            let rows: Vec<f64> = (0..steps).flat_map(|_| c.iter().copied()).collect();
            Some(Tensor::matrix(steps, c.len(), rows)?)
        }
        None => None,
    };
    let outputs = generator_forward(
        params_g,
        &GeneratorInput {
            condition,
            latent: latents.clone(),
        },
    )?;
    Ok(Interpolation {
        latents,
        outputs,
        fell_back_to_linear,
    })
}
