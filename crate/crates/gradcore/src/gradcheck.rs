//! Central finite-difference oracles for first and second derivatives.
//!
//! These work on `f64` tensors and treat every stored scalar (including the
//! real and imaginary parts of complex inputs) as an independent coordinate.

use crate::{backward, grad, Result, Tensor};

/// A scalar function of several tensors.
pub type ScalarFn<'a> = dyn Fn(&[Tensor<f64>]) -> Result<Tensor<f64>> + 'a;

/// `||a - b|| / max(||a||, ||b||)`, or the absolute error when both norms are
/// below `1e-12`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "relative_error: length mismatch");
    let diff = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

fn with_coordinate(t: &Tensor<f64>, i: usize, value: f64) -> Tensor<f64> {
    let mut d = t.to_vec();
    d[i] = value;
    let shape = t.shape();
    if t.is_complex() {
        Tensor::from_interleaved(d, shape).expect("same shape")
    } else {
        Tensor::from_vec(d, shape).expect("same shape")
    }
}

/// Central-difference gradient of `f` with respect to the storage of
/// `inputs[which]`.
pub fn numeric_grad(
    f: &ScalarFn<'_>,
    inputs: &[Tensor<f64>],
    which: usize,
    step: f64,
) -> Result<Vec<f64>> {
    let base = &inputs[which];
    let mut out = Vec::with_capacity(base.data().len());
    let mut probe = inputs.to_vec();
    for i in 0..base.data().len() {
        let x = base.data()[i];
        probe[which] = with_coordinate(base, i, x + step);
        let plus = crate::no_grad(|| f(&probe))?.item()?;
        probe[which] = with_coordinate(base, i, x - step);
        let minus = crate::no_grad(|| f(&probe))?.item()?;
        out.push((plus - minus) / (2.0 * step));
    }
    Ok(out)
}

/// Analytic gradients of `f` with respect to every input.
pub fn analytic_grads(f: &ScalarFn<'_>, inputs: &[Tensor<f64>]) -> Result<Vec<Vec<f64>>> {
    let vars: Vec<Tensor<f64>> = inputs.iter().map(|t| t.var()).collect();
    let y = f(&vars)?;
    if !y.is_tracked() {
        return Ok(vars.iter().map(|v| vec![0.0; v.data().len()]).collect());
    }
    let g = backward(&y, false)?;
    Ok(vars
        .iter()
        .map(|v| {
            g.get(v)
                .map(|t| t.to_vec())
                .unwrap_or_else(|| vec![0.0; v.data().len()])
        })
        .collect())
}

/// Largest relative error between analytic and central-difference gradients
/// over all inputs.
pub fn check_gradients(f: &ScalarFn<'_>, inputs: &[Tensor<f64>], step: f64) -> Result<f64> {
    let analytic = analytic_grads(f, inputs)?;
    let mut worst: f64 = 0.0;
    for (i, a) in analytic.iter().enumerate() {
        let n = numeric_grad(f, inputs, i, step)?;
        worst = worst.max(relative_error(a, &n));
    }
    Ok(worst)
}

/// `h(x) = sum_i <grad_i f(x), v_i>`, evaluated with first-order gradients.
fn directional_first_order(
    f: &ScalarFn<'_>,
    inputs: &[Tensor<f64>],
    directions: &[Tensor<f64>],
) -> Result<f64> {
    let grads = analytic_grads(f, inputs)?;
    Ok(grads
        .iter()
        .zip(directions)
        .map(|(g, v)| g.iter().zip(v.data()).map(|(a, b)| a * b).sum::<f64>())
        .sum())
}

/// Checks double backward: the gradient of `h(x) = sum_i <grad_i f(x), v_i>`
/// obtained by differentiating a `create_graph` backward pass is compared
/// with central differences of `h`, where `h` itself only uses first-order
/// gradients. Returns the largest relative error over all inputs.
pub fn check_second_order(
    f: &ScalarFn<'_>,
    inputs: &[Tensor<f64>],
    directions: &[Tensor<f64>],
    step: f64,
) -> Result<f64> {
    assert_eq!(inputs.len(), directions.len(), "one direction per input");
    let vars: Vec<Tensor<f64>> = inputs.iter().map(|t| t.var()).collect();
    let y = f(&vars)?;
    let refs: Vec<&Tensor<f64>> = vars.iter().collect();
    let first = grad(&y, &refs, true)?;
    let mut h: Option<Tensor<f64>> = None;
    for (g, v) in first.iter().zip(directions) {
        let term = g.mul(v)?.sum()?;
        h = Some(match h {
            None => term,
            Some(acc) => acc.add(&term)?,
        });
    }
    let h = h.expect("at least one input");
    let analytic: Vec<Vec<f64>> = if h.is_tracked() {
        let gh = backward(&h, false)?;
        vars.iter()
            .map(|v| {
                gh.get(v)
                    .map(|t| t.to_vec())
                    .unwrap_or_else(|| vec![0.0; v.data().len()])
            })
            .collect()
    } else {
        vars.iter().map(|v| vec![0.0; v.data().len()]).collect()
    };

    let mut worst: f64 = 0.0;
    for (which, a) in analytic.iter().enumerate() {
        let base = &inputs[which];
        let mut probe = inputs.to_vec();
        let mut numeric = Vec::with_capacity(a.len());
        for i in 0..base.data().len() {
            let x = base.data()[i];
            probe[which] = with_coordinate(base, i, x + step);
            let plus = directional_first_order(f, &probe, directions)?;
            probe[which] = with_coordinate(base, i, x - step);
            let minus = directional_first_order(f, &probe, directions)?;
            numeric.push((plus - minus) / (2.0 * step));
        }
        worst = worst.max(relative_error(a, &numeric));
    }
    Ok(worst)
}
