//! Finite-difference gradient checks shared by the integration and
//! acceptance tests.

#![allow(dead_code, clippy::cloned_ref_to_slice_refs, clippy::type_complexity)]

use dsgan_core::nd::{evaluate_with_gradients, finite_diff_gradient, Tape, Tensor, Var};
use dsgan_core::nets::{mlp_init, HiddenActivation, NetworkSpec, OutputActivation};
use dsgan_core::objectives::{
    d_loss_var, feature_diversity_var, g_adv_loss_var, generator_loss_and_grads, generator_total_loss, latent_gaps,
    output_diversity_var, reconstruction_loss_var, sample_latent_pair, sequence_diversity_var, DiversityConfig,
    DiversitySpace, GLossForm, GeneratorBatch, Norm, ObjectiveConfig,
};
use dsgan_core::rng;
use dsgan_core::Result;

pub const FD_STEP: f64 = 1e-5;
pub const MAX_REL_ERR: f64 = 1e-4;

/// `|a − b| / max(|a|, |b|, 1e-6)`: relative, with a floor for entries that
/// are zero up to finite-difference noise.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

pub fn max_rel_err(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(&x, &y)| rel_err(x, y)).fold(0.0, f64::max)
}

/// Largest relative error between tape gradients and central differences
/// over every input coordinate.
pub fn check<F>(f: F, inputs: &[Tensor]) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let (_, grads) = evaluate_with_gradients(&f, inputs)?;
    let mut worst: f64 = 0.0;
    for (k, g) in grads.iter().enumerate() {
        let numeric = finite_diff_gradient(
            |x| {
                let mut probe = inputs.to_vec();
                probe[k] = x.clone();
                Ok(evaluate_with_gradients(&f, &probe)?.0)
            },
            &inputs[k],
            FD_STEP,
        )?;
        worst = worst.max(max_rel_err(g, &numeric));
    }
    Ok(worst)
}

pub fn random(shape: &[usize], seed: u64) -> Tensor {
    let mut r = rng::seeded(seed);
    let n: usize = shape.iter().product();
    rng::normal_matrix(&mut r, 1, n).reshape(shape.to_vec()).unwrap()
}

/// Values bounded away from zero, for ops with a kink or pole there.
pub fn away_from_zero(shape: &[usize], seed: u64) -> Tensor {
    random(shape, seed).map(|v| if v >= 0.0 { v + 0.2 } else { v - 0.2 })
}

fn weighted<'t>(tape: &'t Tape, y: Var<'t>, seed: u64) -> Result<Var<'t>> {
    let w = tape.constant(random(&y.shape(), seed));
    Ok(y.mul(w)?.sum())
}

/// Primitive ops, each contracted with fixed random weights.
pub fn op_cases() -> Result<Vec<(&'static str, f64)>> {
    let a = random(&[3, 4], 1);
    let b = random(&[4, 2], 2);
    let c = random(&[3, 4], 3);
    let bias = random(&[4], 4);
    let nz = away_from_zero(&[3, 4], 5);
    let pos = random(&[3, 4], 6).map(|v| v.abs() + 0.5);
    Ok(vec![
        ("matmul", check(|t, x| weighted(t, x[0].matmul(x[1])?, 10), &[a.clone(), b.clone()])?),
        ("add", check(|t, x| weighted(t, x[0].add(x[1])?, 11), &[a.clone(), c.clone()])?),
        ("sub", check(|t, x| weighted(t, x[0].sub(x[1])?, 12), &[a.clone(), c.clone()])?),
        ("mul", check(|t, x| weighted(t, x[0].mul(x[1])?, 13), &[a.clone(), c.clone()])?),
        ("div", check(|t, x| weighted(t, x[0].div(x[1])?, 14), &[a.clone(), nz.clone()])?),
        ("add_bias", check(|t, x| weighted(t, x[0].add_bias(x[1])?, 15), &[a.clone(), bias])?),
        ("scale", check(|t, x| weighted(t, x[0].scale(-2.5).add_scalar(1.0), 16), &[a.clone()])?),
        ("tanh", check(|t, x| weighted(t, x[0].tanh(), 17), &[a.clone()])?),
        ("relu", check(|t, x| weighted(t, x[0].relu(), 18), &[nz.clone()])?),
        ("leaky_relu", check(|t, x| weighted(t, x[0].leaky_relu(0.2), 19), &[nz.clone()])?),
        ("sigmoid", check(|t, x| weighted(t, x[0].sigmoid(), 20), &[a.clone()])?),
        ("softplus", check(|t, x| weighted(t, x[0].softplus(), 21), &[a.clone().map(|v| 8.0 * v)])?),
        ("abs", check(|t, x| weighted(t, x[0].abs(), 22), &[nz.clone()])?),
        ("square", check(|t, x| weighted(t, x[0].square(), 23), &[a.clone()])?),
        ("sqrt", check(|t, x| weighted(t, x[0].sqrt(), 24), &[pos])?),
        ("min_const", check(|t, x| weighted(t, x[0].min_const(0.1), 25), &[nz.clone()])?),
        ("sum_rows", check(|t, x| weighted(t, x[0].sum_rows()?, 26), &[a.clone()])?),
        ("mean", check(|_, x| x[0].square().mean(), &[a.clone()])?),
        ("concat_cols", check(|t, x| weighted(t, x[0].concat_cols(x[1])?, 27), &[a.clone(), c])?),
        ("reshape", check(|t, x| weighted(t, x[0].reshape(&[4, 3])?, 28), &[a])?),
    ])
}

/// Adversarial, reconstruction and regularizer terms in isolation.
pub fn loss_cases() -> Result<Vec<(&'static str, f64)>> {
    let logits_r = random(&[16], 30).map(|v| 3.0 * v);
    let logits_f = random(&[16], 31).map(|v| 3.0 * v);
    let y1 = random(&[8, 2], 32);
    let y2 = random(&[8, 2], 33);
    let (z1, z2) = sample_latent_pair(&mut rng::seeded(34), 8, 3, Norm::L1, 1e-8)?;
    let gaps_l1 = latent_gaps(&z1, &z2, Norm::L1, 1e-8)?;
    let gaps_l2 = latent_gaps(&z1, &z2, Norm::L2, 1e-8)?;
    let l1 = DiversityConfig {
        tau: None,
        ..DiversityConfig::default()
    };
    let l2 = DiversityConfig { norm: Norm::L2, ..l1 };
    // a margin inside the range of the ratios so both clamp branches occur
    let ratios: Vec<f64> = (0..8)
        .map(|i| Norm::L1.of_diff(y1.row(i), y2.row(i)) / gaps_l1.data()[i])
        .collect();
    let mut sorted = ratios.clone();
    sorted.sort_by(f64::total_cmp);
    let tau = 0.5 * (sorted[3] + sorted[4]);
    let clamped = DiversityConfig { tau: Some(tau), ..l1 };
    let seq1 = random(&[8, 6], 35);
    let seq2 = random(&[8, 6], 36);
    let f1 = [random(&[8, 5], 37), random(&[8, 4], 38)];
    let f2 = [random(&[8, 5], 39), random(&[8, 4], 40)];

    Ok(vec![
        ("d_loss", check(|_, x| d_loss_var(x[0], x[1]), &[logits_r.clone(), logits_f.clone()])?),
        (
            "g_adv_nonsaturating",
            check(|_, x| g_adv_loss_var(x[0], GLossForm::NonSaturating), &[logits_f.clone()])?,
        ),
        ("g_adv_minimax", check(|_, x| g_adv_loss_var(x[0], GLossForm::Minimax), &[logits_f])?),
        (
            "reconstruction_l1",
            check(|_, x| reconstruction_loss_var(x[0], x[1]), &[y1.clone(), y2.clone().map(|v| v + 0.3)])?,
        ),
        (
            "regularizer_output_l1",
            check(|_, x| Ok(output_diversity_var(x[0], x[1], &gaps_l1, &l1)?.value), &[y1.clone(), y2.clone()])?,
        ),
        (
            "regularizer_output_l2",
            check(|_, x| Ok(output_diversity_var(x[0], x[1], &gaps_l2, &l2)?.value), &[y1.clone(), y2.clone()])?,
        ),
        (
            "regularizer_output_clamped",
            check(|_, x| Ok(output_diversity_var(x[0], x[1], &gaps_l1, &clamped)?.value), &[y1, y2])?,
        ),
        (
            "regularizer_feature",
            check(
                |_, x| Ok(feature_diversity_var(&x[..2], &x[2..], &gaps_l1, &l1)?.value),
                &[f1[0].clone(), f1[1].clone(), f2[0].clone(), f2[1].clone()],
            )?,
        ),
        (
            "regularizer_sequence",
            check(|_, x| Ok(sequence_diversity_var(x[0], x[1], &gaps_l1, 3)?.value), &[seq1, seq2])?,
        ),
    ])
}

fn small_spec(input: usize, output: usize, act: HiddenActivation) -> NetworkSpec {
    NetworkSpec {
        input_dim: input,
        hidden_dims: vec![6, 5],
        output_dim: output,
        hidden_activation: act,
        output_activation: OutputActivation::Linear,
        init_scale: 1.0,
    }
}

/// Full generator objective against every generator tensor of small networks,
/// across conditioning, reconstruction, and each regularizer space.
pub fn objective_cases() -> Result<Vec<(&'static str, f64)>> {
    let n = 6;
    let z_dim = 3;
    let cond_dim = 2;
    let out = 4;
    let mut cases = Vec::new();
    let variants: [(&'static str, bool, f64, DiversitySpace, GLossForm, Option<f64>); 5] = [
        ("objective_unconditional", false, 0.0, DiversitySpace::Output, GLossForm::NonSaturating, None),
        ("objective_conditional_rec", true, 1.0, DiversitySpace::Output, GLossForm::NonSaturating, None),
        ("objective_feature", true, 0.0, DiversitySpace::Feature, GLossForm::Minimax, None),
        ("objective_sequence", true, 0.5, DiversitySpace::Sequence, GLossForm::NonSaturating, None),
        ("objective_l2_tau_inactive", false, 0.0, DiversitySpace::Output, GLossForm::NonSaturating, Some(1e6)),
    ];
    for (k, (name, conditional, beta, space, form, tau)) in variants.into_iter().enumerate() {
        let seed = 100 + 10 * k as u64;
        let cd = if conditional { cond_dim } else { 0 };
        let g = mlp_init(&small_spec(cd + z_dim, out, HiddenActivation::Tanh), seed)?;
        let d = mlp_init(&small_spec(cd + out, 1, HiddenActivation::LeakyRelu), seed + 1)?;
        let norm = if name.contains("l2") { Norm::L2 } else { Norm::L1 };
        let (z1, z2) = sample_latent_pair(&mut rng::seeded(seed + 2), n, z_dim, norm, 1e-8)?;
        let batch = GeneratorBatch {
            condition: conditional.then(|| random(&[n, cond_dim], seed + 3)),
            target: Some(random(&[n, out], seed + 4).map(|v| v + 5.0)),
            z1,
            z2,
            seq_len: 2,
        };
        let cfg = ObjectiveConfig {
            beta,
            g_loss_form: form,
            diversity: DiversityConfig {
                lambda: 0.7,
                tau,
                norm,
                space,
                min_z_gap: 1e-8,
            },
        };
        let (_, _, grads) = generator_loss_and_grads(&batch, &g, &d, &cfg)?;
        let mut worst: f64 = 0.0;
        for (i, grad) in grads.iter().enumerate() {
            let numeric = finite_diff_gradient(
                |x| {
                    let mut probe = g.clone();
                    probe.tensors[i] = x.clone();
                    Ok(generator_total_loss(&batch, &probe, &d, &cfg)?.0)
                },
                &g.tensors[i],
                FD_STEP,
            )?;
            worst = worst.max(max_rel_err(grad, &numeric));
        }
        cases.push((name, worst));
    }
    Ok(cases)
}
