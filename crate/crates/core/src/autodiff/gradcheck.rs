//! Finite-difference verification of the reverse pass.

use super::{Graph, Result, Tensor, TensorError, Var};

/// Compares analytic gradients against central differences.
///
/// `build` must construct the scalar loss from the supplied leaves and be
/// deterministic (fix any sampling seed inside it). For every coordinate of
/// every `requires_grad` input the function rebuilds the tape twice at
/// `x ± eps` and returns the worst relative error
/// `|analytic - numeric| / max(1, |analytic|)`.
pub fn grad_check<F>(build: F, inputs: &[Tensor], eps: f64) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    if !(1e-6..=1e-2).contains(&eps) {
        return Err(TensorError::BadStep { eps });
    }

    let eval = |tensors: &[Tensor]| -> Result<(Graph, Vec<Var>, Var)> {
        let mut g = Graph::new();
        let vars: Vec<Var> = tensors.iter().map(|t| g.leaf(t)).collect::<Result<_>>()?;
        let loss = build(&mut g, &vars)?;
        if g.value(loss).len() != 1 {
            return Err(TensorError::NotScalar { shape: g.shape(loss).to_vec() });
        }
        Ok((g, vars, loss))
    };

    let (mut graph, vars, loss) = eval(inputs)?;
    graph.backward(loss)?;
    let analytic: Vec<Vec<f64>> = vars.iter().map(|&v| graph.grad(v).to_vec()).collect();

    let mut worst = 0.0f64;
    let mut perturbed: Vec<Tensor> = inputs.to_vec();
    for (ti, t) in inputs.iter().enumerate() {
        if !t.requires_grad() {
            continue;
        }
        for ci in 0..t.values().len() {
            let base = t.values()[ci];
            // Divide by the step the f32 storage actually realized, not the
            // nominal 2*eps, so rounding of base +/- eps cancels out.
            let x_plus = (base as f64 + eps) as f32;
            let x_minus = (base as f64 - eps) as f32;
            perturbed[ti].values_mut()[ci] = x_plus;
            let (g_plus, _, l_plus) = eval(&perturbed)?;
            let f_plus = g_plus.value(l_plus)[0];
            perturbed[ti].values_mut()[ci] = x_minus;
            let (g_minus, _, l_minus) = eval(&perturbed)?;
            let f_minus = g_minus.value(l_minus)[0];
            perturbed[ti].values_mut()[ci] = base;

            let numeric = (f_plus - f_minus) / (x_plus as f64 - x_minus as f64);
            let a = analytic[ti][ci];
            let err = (a - numeric).abs() / a.abs().max(1.0);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}
