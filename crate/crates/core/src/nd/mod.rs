//! Numerical substrate: tensors, reverse-mode differentiation, a
//! central-difference oracle, and Adam.

mod adam;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use tape::{Gradients, Tape, Var, DIV_GUARD};
pub use tensor::Tensor;

pub(crate) use tape::softplus;

use crate::error::{Error, Result};

/// Evaluates a scalar function recorded on a fresh tape and returns its value
/// together with the gradient for each input.
pub fn evaluate_with_gradients<F>(f: F, inputs: &[Tensor]) -> Result<(f64, Vec<Tensor>)>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let tape = Tape::new();
    let vars: Vec<Var<'_>> = inputs.iter().map(|t| tape.var(t.clone())).collect();
    let out = f(&tape, &vars)?;
    let value = out.item();
    let grads = tape.gradients(out)?;
    Ok((value, vars.iter().map(|&v| grads.wrt(v)).collect()))
}

/// Central-difference gradient `(f(x + h·eᵢ) − f(x − h·eᵢ)) / 2h`.
pub fn finite_diff_gradient<F>(f: F, x: &Tensor, h: f64) -> Result<Tensor>
where
    F: Fn(&Tensor) -> Result<f64>,
{
    if !(h > 0.0) {
        return Err(Error::Precondition(format!("step size must be positive, got {h}")));
    }
    let mut probe = x.clone();
    let mut out = Tensor::zeros(x.shape());
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let up = f(&probe)?;
        probe.data_mut()[i] = orig - h;
        let down = f(&probe)?;
        probe.data_mut()[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFinite(format!("finite difference at coordinate {i}")));
        }
        out.data_mut()[i] = (up - down) / (2.0 * h);
    }
    Ok(out)
}

/// Jacobian `[dim(out), dim(z)]` of a vector function, one backward sweep per output.
pub fn jacobian<F>(f: F, z: &Tensor) -> Result<Tensor>
where
    F: for<'t> Fn(&'t Tape, Var<'t>) -> Result<Var<'t>>,
{
    let tape = Tape::new();
    let zv = tape.var(z.clone());
    let out = f(&tape, zv)?;
    let out_shape = out.shape();
    let m: usize = out_shape.iter().product();
    let n = z.len();
    let mut jac = Vec::with_capacity(m * n);
    for i in 0..m {
        let mut seed = Tensor::zeros(&out_shape);
        seed.data_mut()[i] = 1.0;
        let g = tape.gradients_with_seed(out, seed)?.wrt(zv);
        g.ensure_finite("jacobian row")?;
        jac.extend_from_slice(g.data());
    }
    Tensor::matrix(m, n, jac)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finite_diff_linear_is_all_ones() {
        let x = Tensor::vector(vec![0.3, -1.2, 4.0]);
        let g = finite_diff_gradient(|t| Ok(t.sum()), &x, 1e-5).unwrap();
        for v in g.data() {
            assert!((v - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn finite_diff_bilinear() {
        let x = Tensor::vector(vec![2.0, 3.0]);
        let g = finite_diff_gradient(|t| Ok(t.data()[0] * t.data()[1]), &x, 1e-5).unwrap();
        assert!((g.data()[0] - 3.0).abs() < 1e-6);
        assert!((g.data()[1] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn finite_diff_rejects_non_finite() {
        let x = Tensor::vector(vec![0.0]);
        let r = finite_diff_gradient(|t| Ok(1.0 / t.data()[0].abs().min(0.0)), &x, 1e-5);
        assert!(r.is_err());
        assert!(finite_diff_gradient(|t| Ok(t.sum()), &x, 0.0).is_err());
    }

    #[test]
    fn jacobian_linear_map() {
        let z = Tensor::matrix(2, 1, vec![0.7, -0.2]).unwrap();
        let a = Tensor::matrix(2, 2, vec![2.0, 0.0, 0.0, 1.0]).unwrap();
        let jac = jacobian(|t, z| t.constant(a.clone()).matmul(z), &z).unwrap();
        assert_eq!(jac.data(), a.data());
    }

    #[test]
    fn jacobian_analytic() {
        // f(z) = (z0², z1) at (3, 1)
        let z = Tensor::vector(vec![3.0, 1.0]);
        let jac = jacobian(
            |t, z| {
                let sq = z.square();
                let mask_sq = t.constant(Tensor::vector(vec![1.0, 0.0]));
                let mask_id = t.constant(Tensor::vector(vec![0.0, 1.0]));
                sq.mul(mask_sq)?.add(z.mul(mask_id)?)
            },
            &z,
        )
        .unwrap();
        assert_eq!(jac.data(), &[6.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn evaluate_sum_of_squares() {
        let (v, g) = evaluate_with_gradients(|_, x| Ok(x[0].square().sum()), &[Tensor::vector(vec![1.0, 2.0])]).unwrap();
        assert_eq!(v, 5.0);
        assert_eq!(g[0].data(), &[2.0, 4.0]);
    }
}
