//! Numerical checks of the latent-path gradient bound and of mode attraction
//! after a single optimiser step.

use nalgebra::DMatrix;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nd::{adam_step, evaluate_with_gradients, AdamConfig, AdamState, Tape, Tensor};
use crate::nets::{generator_forward, join_condition_var, BoundNetwork, GeneratorInput, NetworkParams};
use crate::rng::{self, Rng};

/// Matrix norm applied to the generator Jacobian along the latent segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobianNorm {
    #[default]
    Spectral,
    Frobenius,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCheckReport {
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub n_quadrature: usize,
}

impl BoundCheckReport {
    pub fn holds(&self, rel_tol: f64, abs_tol: f64) -> bool {
        self.lhs <= self.rhs * (1.0 + rel_tol) + abs_tol
    }
}

fn l2(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn l2_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn repeat_row(row: &[f64], n: usize) -> Result<Tensor> {
    Tensor::matrix(n, row.len(), (0..n).flat_map(|_| row.iter().copied()).collect())
}

fn forward_rows(g: &NetworkParams, x: Option<&[f64]>, z: Tensor) -> Result<Tensor> {
    let condition = match x {
        Some(c) => Some(repeat_row(c, z.rows())?),
        None => None,
    };
    generator_forward(g, &GeneratorInput { condition, latent: z })
}

/// Jacobians `∂G/∂z` at every row of `z`, each `[out_dim, z_dim]`. Rows are
/// independent, so one backward sweep per output coordinate serves all of them.
pub fn latent_jacobians(g: &NetworkParams, x: Option<&[f64]>, z: &Tensor) -> Result<Vec<Tensor>> {
    let (n, dz) = z.dims2("latent_jacobians")?;
    let condition = match x {
        Some(c) => Some(repeat_row(c, n)?),
        None => None,
    };
    let tape = Tape::new();
    let zv = tape.var(z.clone());
    let input = join_condition_var(&tape, condition.as_ref(), zv)?;
    let (out, _) = g.bind(&tape, false).forward(input)?;
    let m = g.spec.output_dim;
    let mut jac = vec![vec![0.0; m * dz]; n];
    for j in 0..m {
        let mut seed = Tensor::zeros(&[n, m]);
        for i in 0..n {
            seed.data_mut()[i * m + j] = 1.0;
        }
        let grad = tape.gradients_with_seed(out, seed)?.wrt(zv);
        grad.ensure_finite("latent jacobian")?;
        for (i, jac_i) in jac.iter_mut().enumerate() {
            jac_i[j * dz..(j + 1) * dz].copy_from_slice(grad.row(i));
        }
    }
    jac.into_iter().map(|d| Tensor::matrix(m, dz, d)).collect()
}

pub fn matrix_norm(jac: &Tensor, norm: JacobianNorm) -> Result<f64> {
    let (m, n) = jac.dims2("matrix_norm")?;
    let value = match norm {
        JacobianNorm::Frobenius => l2(jac.data()),
        JacobianNorm::Spectral => DMatrix::from_row_slice(m, n, jac.data()).singular_values().max(),
    };
    if !value.is_finite() {
        return Err(Error::NonFinite("jacobian norm".into()));
    }
    Ok(value)
}

/// Compares `‖G(x,z2) − G(x,z1)‖ / ‖z2 − z1‖` against the composite-midpoint
/// average of the Jacobian norm on the segment from `z1` to `z2`.
pub fn path_gradient_bound(
    g: &NetworkParams,
    x: Option<&[f64]>,
    z1: &[f64],
    z2: &[f64],
    n_quad: usize,
    norm: JacobianNorm,
) -> Result<BoundCheckReport> {
    if n_quad < 8 {
        return Err(Error::Precondition(format!("n_quad must be >= 8, got {n_quad}")));
    }
    if z1.len() != z2.len() {
        return Err(Error::shape("path_gradient_bound", &[z1.len()], &[z2.len()]));
    }
    let gap = l2_diff(z1, z2);
    if gap == 0.0 {
        return Err(Error::Precondition("z1 and z2 coincide".into()));
    }
    let ends = forward_rows(g, x, Tensor::from_rows(&[z1.to_vec(), z2.to_vec()])?)?;
    let lhs = l2_diff(ends.row(0), ends.row(1)) / gap;

    let d = z1.len();
    let path = Tensor::from_fn(&[n_quad, d], |idx| {
        let (k, j) = (idx / d, idx % d);
        let t = (k as f64 + 0.5) / n_quad as f64;
        t * z2[j] + (1.0 - t) * z1[j]
    });
    let mut rhs = 0.0;
    for jac in latent_jacobians(g, x, &path)? {
        rhs += matrix_norm(&jac, norm)?;
    }
    rhs /= n_quad as f64;
    Ok(BoundCheckReport {
        lhs,
        rhs,
        slack: rhs - lhs,
        n_quadrature: n_quad,
    })
}

/// Runs the bound at `n_quad`, repeating at `refined` when the first pass
/// does not clear the tolerance.
#[allow(clippy::too_many_arguments)]
pub fn path_gradient_bound_refined(
    g: &NetworkParams,
    x: Option<&[f64]>,
    z1: &[f64],
    z2: &[f64],
    n_quad: usize,
    refined: usize,
    rel_tol: f64,
    abs_tol: f64,
) -> Result<BoundCheckReport> {
    let first = path_gradient_bound(g, x, z1, z2, n_quad, JacobianNorm::Spectral)?;
    if first.holds(rel_tol, abs_tol) || refined <= n_quad {
        return Ok(first);
    }
    path_gradient_bound(g, x, z1, z2, refined, JacobianNorm::Spectral)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub z2: Vec<f64>,
    pub gap: f64,
    pub ratio_t: f64,
    pub ratio_t1: f64,
    pub condition_holds: bool,
    pub attracted_by_half_eps: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttractionReport {
    pub epsilon: f64,
    pub probes: Vec<ProbeRecord>,
    /// `ε / (4 · min max(ratio_t, ratio_t1))` over the probes (and a dense
    /// grid when the latent is 2D). A sampled estimate, not a certified radius.
    pub radius_estimate: f64,
}

impl AttractionReport {
    pub fn condition_count(&self) -> usize {
        self.probes.iter().filter(|p| p.condition_holds).count()
    }

    /// Probes meeting the condition yet not attracted by ε/2.
    pub fn counterexamples(&self) -> usize {
        self.probes
            .iter()
            .filter(|p| p.condition_holds && !p.attracted_by_half_eps)
            .count()
    }
}

/// Probes how the neighbourhood of `z1` moves between two generator snapshots.
///
/// Half of the probes are prior draws `z2 ~ N(0, I)`. The other half sit on a
/// shell around `z1` scaled by `ε / (4‖∂G/∂z(z1)‖)`, where the condition is
/// actually reachable.
pub fn attraction_check(
    g_t: &NetworkParams,
    g_t1: &NetworkParams,
    x: Option<&[f64]>,
    z1: &[f64],
    y_star: &[f64],
    probes: usize,
    rng: &mut Rng,
) -> Result<AttractionReport> {
    if probes == 0 {
        return Err(Error::Precondition("attraction_check needs at least one probe".into()));
    }
    if g_t.spec != g_t1.spec {
        return Err(Error::Precondition("generator snapshots have different specs".into()));
    }
    let d = z1.len();
    let z1_row = Tensor::matrix(1, d, z1.to_vec())?;
    let y_t = forward_rows(g_t, x, z1_row.clone())?;
    let y_t1 = forward_rows(g_t1, x, z1_row.clone())?;
    let epsilon = l2_diff(y_star, y_t.data()) - l2_diff(y_star, y_t1.data());
    if !(epsilon > 0.0) {
        return Err(Error::Precondition(format!(
            "z1 is not attracted by the step (epsilon = {epsilon:e})"
        )));
    }

    let lipschitz = matrix_norm(&latent_jacobians(g_t, x, &z1_row)?[0], JacobianNorm::Spectral)?;
    let shell = epsilon / (4.0 * lipschitz.max(1e-12));
    let n_prior = probes.div_ceil(2);
    let mut z2s = Vec::with_capacity(probes * d);
    for k in 0..probes {
        let u: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        if k < n_prior {
            z2s.extend(u);
        } else {
            let norm = l2(&u).max(1e-300);
            let radius = shell * 2.0 * rng.random_range(f64::EPSILON..1.0);
            z2s.extend(z1.iter().zip(&u).map(|(a, b)| a + radius * b / norm));
        }
    }
    let z2 = Tensor::matrix(probes, d, z2s)?;
    let out_t = forward_rows(g_t, x, z2.clone())?;
    let out_t1 = forward_rows(g_t1, x, z2.clone())?;

    let mut min_ratio = f64::INFINITY;
    let mut records = Vec::with_capacity(probes);
    for i in 0..probes {
        let gap = l2_diff(z1, z2.row(i));
        if gap == 0.0 {
            continue;
        }
        let ratio_t = l2_diff(y_t.data(), out_t.row(i)) / gap;
        let ratio_t1 = l2_diff(y_t1.data(), out_t1.row(i)) / gap;
        min_ratio = min_ratio.min(ratio_t.max(ratio_t1));
        let condition_holds = (ratio_t + ratio_t1) * gap <= epsilon / 2.0;
        let attracted_by_half_eps = l2_diff(y_star, out_t1.row(i)) + epsilon / 2.0 < l2_diff(y_star, out_t.row(i));
        records.push(ProbeRecord {
            z2: z2.row(i).to_vec(),
            gap,
            ratio_t,
            ratio_t1,
            condition_holds,
            attracted_by_half_eps,
        });
    }

    if d == 2 {
        const GRID: usize = 61;
        let pts: Vec<f64> = (0..GRID * GRID)
            .flat_map(|k| {
                let (a, b) = (k / GRID, k % GRID);
                let s = |i: usize| -3.0 + 6.0 * i as f64 / (GRID - 1) as f64;
                [s(a), s(b)]
            })
            .collect();
        let grid = Tensor::matrix(GRID * GRID, 2, pts)?;
        let gt = forward_rows(g_t, x, grid.clone())?;
        let gt1 = forward_rows(g_t1, x, grid.clone())?;
        for i in 0..GRID * GRID {
            let gap = l2_diff(z1, grid.row(i));
            if gap > 0.0 {
                let r = (l2_diff(y_t.data(), gt.row(i)) / gap).max(l2_diff(y_t1.data(), gt1.row(i)) / gap);
                min_ratio = min_ratio.min(r);
            }
        }
    }

    let radius_estimate = if min_ratio > 0.0 {
        epsilon / (4.0 * min_ratio)
    } else {
        f64::INFINITY
    };
    Ok(AttractionReport {
        epsilon,
        probes: records,
        radius_estimate,
    })
}

/// A generator before and after one Adam step on `‖y* − G(x, z1)‖²`.
#[derive(Debug, Clone)]
pub struct AttractionScenario {
    pub g_t: NetworkParams,
    pub g_t1: NetworkParams,
    pub z1: Vec<f64>,
    pub y_star: Vec<f64>,
}

/// Builds a scenario from `g` with a random anchor and target for the fixed
/// condition `x`. The step size is halved until the anchor is attracted (ε > 0).
pub fn attraction_scenario(g: &NetworkParams, x: Option<&[f64]>, rng: &mut Rng, lr: f64) -> Result<AttractionScenario> {
    let cond_len = x.map_or(0, <[f64]>::len);
    if g.spec.input_dim <= cond_len {
        return Err(Error::Precondition("generator has no latent input".into()));
    }
    let dz = g.spec.input_dim - cond_len;
    let z1: Vec<f64> = (0..dz).map(|_| rng.sample(StandardNormal)).collect();
    let y_star: Vec<f64> = (0..g.spec.output_dim).map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal)).collect();
    let z_row = Tensor::matrix(1, dz, z1.clone())?;
    let input: Vec<f64> = x.unwrap_or(&[]).iter().chain(&z1).copied().collect();
    let input = Tensor::matrix(1, g.spec.input_dim, input)?;
    let target = Tensor::matrix(1, y_star.len(), y_star.clone())?;
    let (_, grads) = evaluate_with_gradients(
        |tape, vars| {
            let net = BoundNetwork::from_vars(&g.spec, vars.to_vec());
            let (out, _) = net.forward(tape.constant(input.clone()))?;
            Ok(out.sub(tape.constant(target.clone()))?.square().sum())
        },
        &g.tensors,
    )?;
    let before = l2_diff(&y_star, forward_rows(g, x, z_row.clone())?.data());
    let mut lr = lr;
    for _ in 0..20 {
        let mut g_t1 = g.clone();
        let mut adam = AdamState::new(&g.tensors);
        let cfg = AdamConfig {
            lr,
            ..AdamConfig::default()
        };
        adam_step(&mut g_t1.tensors, &grads, &mut adam, &cfg)?;
        let after = l2_diff(&y_star, forward_rows(&g_t1, x, z_row.clone())?.data());
        if before - after > 0.0 {
            return Ok(AttractionScenario {
                g_t: g.clone(),
                g_t1,
                z1,
                y_star,
            });
        }
        lr *= 0.5;
    }
    Err(Error::Precondition("no step size produced attraction".into()))
}

/// Independent probe stream for scenario `k` of a verification run.
pub fn scenario_rng(seed: u64, k: u64) -> Rng {
    rng::stream(seed, 1000 + k)
}
