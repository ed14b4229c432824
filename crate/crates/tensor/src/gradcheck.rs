use crate::error::TensorError;
use crate::tensor::Tensor;

/// Compares analytic gradients against central differences for a scalar-valued
/// function of the given leaf tensors. Returns the worst relative error
/// `|analytic - numeric| / max(1, |numeric|)` over every input coordinate.
///
/// `f` must build its output from the supplied tensors positionally and must
/// be deterministic. `eps` is clamped to the supported range [1e-6, 1e-4].
pub fn grad_check<F>(f: F, inputs: &[Tensor], eps: f64) -> Result<f64, TensorError>
where
    F: Fn(&[Tensor]) -> Result<Tensor, TensorError>,
{
    if !(1e-6..=1e-4).contains(&eps) {
        return Err(TensorError::Contract(format!(
            "grad_check eps {eps} outside [1e-6, 1e-4]"
        )));
    }
    if inputs.is_empty() {
        return Err(TensorError::Contract("grad_check requires at least one input".into()));
    }
    let leaves: Vec<Tensor> = inputs
        .iter()
        .map(|t| Tensor::leaf(t.data().to_vec(), t.shape(), true))
        .collect::<Result<_, _>>()?;
    let out = f(&leaves)?;
    if out.numel() != 1 {
        return Err(TensorError::Contract(format!(
            "grad_check requires a scalar output, got shape {:?}",
            out.shape()
        )));
    }
    out.backward()?;
    let analytic: Vec<Vec<f64>> = leaves
        .iter()
        .map(|t| t.grad().unwrap_or_else(|| vec![0.0; t.numel()]))
        .collect();

    let eval = |tensor_idx: usize, coord: usize, delta: f64| -> Result<f64, TensorError> {
        let probes: Vec<Tensor> = inputs
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let mut data = t.data().to_vec();
                if i == tensor_idx {
                    data[coord] += delta;
                }
                Tensor::leaf(data, t.shape(), false)
            })
            .collect::<Result<_, _>>()?;
        f(&probes)?.item()
    };

    let mut max_err = 0.0f64;
    for (i, t) in inputs.iter().enumerate() {
        for c in 0..t.numel() {
            let plus = eval(i, c, eps)?;
            let minus = eval(i, c, -eps)?;
            let numeric = (plus - minus) / (2.0 * eps);
            let err = (analytic[i][c] - numeric).abs() / numeric.abs().max(1.0);
            if err > max_err {
                max_err = err;
            }
        }
    }
    Ok(max_err)
}
