use super::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// `|a − b| / max(|a|, |b|, 1e-8)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// `‖a − b‖₂ / max(‖a‖₂, ‖b‖₂, 1e-300)`; zero when both are zero.
pub fn norm_relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut a.iter().zip(b).map(|(x, y)| x - y));
    let scale = norm(&mut a.iter().copied()).max(norm(&mut b.iter().copied()));
    if diff == 0.0 {
        0.0
    } else {
        diff / scale.max(1e-300)
    }
}

/// Outcome of [`grad_check_many`].
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// Tensor-wise relative error per input, see [`norm_relative_error`].
    pub per_input: Vec<f64>,
    /// Largest component-wise [`relative_error`] per input. Components far
    /// below the tensor's gradient scale sit at the rounding floor of the
    /// central difference, so this is diagnostic only.
    pub per_component: Vec<f64>,
    /// Index of the worst component per input, with its AD and FD values.
    pub worst: Vec<(usize, f64, f64)>,
}

impl GradCheckReport {
    pub fn max_error(&self) -> f64 {
        self.per_input.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_component_error(&self) -> f64 {
        self.per_component.iter().copied().fold(0.0, f64::max)
    }
}

fn eval_scalar<F>(f: &F, inputs: &[Tensor<f64>]) -> Result<f64>
where
    F: Fn(&Tape<f64>, &[Var]) -> Result<Var>,
{
    let tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = f(&tape, &vars)?;
    tape.value(out).item()
}

/// Compare reverse-mode gradients of the scalar `f` against central
/// differences `(f(x + eps·e) − f(x − eps·e)) / 2eps`, component by
/// component, for every input tensor.
pub fn grad_check_many<F>(f: F, inputs: &[Tensor<f64>], eps: f64) -> Result<GradCheckReport>
where
    F: Fn(&Tape<f64>, &[Var]) -> Result<Var>,
{
    let tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = f(&tape, &vars)?;
    let grads = tape.backward(out)?;

    let mut per_input = Vec::with_capacity(inputs.len());
    let mut per_component = Vec::with_capacity(inputs.len());
    let mut worst = Vec::with_capacity(inputs.len());
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    for (k, var) in vars.iter().enumerate() {
        let ad = grads.get_or_zeros(*var, inputs[k].shape());
        let mut max_err = 0.0;
        let mut w = (0, 0.0, 0.0);
        let mut fds = Vec::with_capacity(inputs[k].numel());
        for i in 0..inputs[k].numel() {
            let orig = inputs[k].data()[i];
            work[k].data_mut()[i] = orig + eps;
            let fp = eval_scalar(&f, &work)?;
            work[k].data_mut()[i] = orig - eps;
            let fm = eval_scalar(&f, &work)?;
            work[k].data_mut()[i] = orig;
            let fd = (fp - fm) / (2.0 * eps);
            let g = ad.data()[i];
            if !fd.is_finite() || !g.is_finite() {
                return Err(Error::Numeric(format!("non-finite gradient at input {k}, component {i}")));
            }
            fds.push(fd);
            let err = relative_error(g, fd);
            if err > max_err {
                max_err = err;
                w = (i, g, fd);
            }
        }
        per_input.push(norm_relative_error(ad.data(), &fds));
        per_component.push(max_err);
        worst.push(w);
    }
    Ok(GradCheckReport {
        per_input,
        per_component,
        worst,
    })
}

/// Single-input form of [`grad_check_many`]; returns the tensor-wise relative error.
pub fn grad_check<F>(f: F, x: &Tensor<f64>, eps: f64) -> Result<f64>
where
    F: Fn(&Tape<f64>, Var) -> Result<Var>,
{
    let report = grad_check_many(|tape, vars| f(tape, vars[0]), std::slice::from_ref(x), eps)?;
    Ok(report.max_error())
}

/// Push components lying within `margin` of zero out to `±margin`, so
/// finite differences do not straddle a ReLU/PReLU/abs kink.
pub fn away_from_kinks(x: &Tensor<f64>, margin: f64) -> Tensor<f64> {
    x.map(|v| {
        if v.abs() >= margin {
            v
        } else if v >= 0.0 {
            margin
        } else {
            -margin
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Backend;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn linear_function_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        // Coefficients of order one keep the rounding noise of the central
        // difference (≈ |f|·1e-16 / eps) well under the bound.
        let x = Tensor::rand_uniform([1, 1, 2, 2], -1.0, 1.0, &mut rng);
        let wts = Tensor::rand_uniform([1, 1, 2, 2], 1.0, 2.0, &mut rng);
        let err = grad_check(
            |t, x| {
                let w = Backend::constant(t, wts.clone());
                let p = t.hadamard(&x, &w)?;
                Ok(t.sum(&p))
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn sigmoid_composite() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::rand_uniform([1, 2, 4, 4], -2.0, 2.0, &mut rng);
        let err = grad_check(
            |t, x| {
                let s = t.sigmoid(&x);
                let q = t.hadamard(&s, &x)?;
                Ok(t.sum(&q))
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert_eq!(norm_relative_error(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert!((norm_relative_error(&[3.0, 4.0], &[3.0, 4.5]) - 0.5 / 4.5f64.hypot(3.0)).abs() < 1e-15);
        assert!((relative_error(1.0, 1.1) - 0.1 / 1.1).abs() < 1e-15);
        assert_eq!(away_from_kinks(&Tensor::scalar(1e-9), 1e-3).item().unwrap(), 1e-3);
    }
}
