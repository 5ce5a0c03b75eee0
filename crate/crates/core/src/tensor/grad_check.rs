use super::Tensor;
use crate::Result;

/// Compares the tape gradient of a scalar function against central
/// differences and returns the worst relative error
/// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-12)`.
///
/// `f` must be deterministic; it is called once with a grad-requiring copy
/// of `x` and `2 * x.numel()` times with perturbed constants.
pub fn grad_check<F>(f: F, x: &Tensor, step: f64) -> Result<f64>
where
    F: Fn(&Tensor) -> Result<Tensor>,
{
    let leaf = Tensor::param(x.to_vec(), x.shape())?;
    let y = f(&leaf)?;
    y.backward()?;
    let analytic = leaf.grad().unwrap_or_else(|| vec![0.0; x.numel()]);

    let mut worst = 0.0f64;
    let mut probe = x.to_vec();
    for i in 0..probe.len() {
        let orig = probe[i];
        probe[i] = orig + step;
        let fp = f(&Tensor::new(probe.clone(), x.shape())?)?.item()?;
        probe[i] = orig - step;
        let fm = f(&Tensor::new(probe.clone(), x.shape())?)?.item()?;
        probe[i] = orig;
        let numeric = (fp - fm) / (2.0 * step);
        let a = analytic[i];
        let denom = a.abs().max(numeric.abs()).max(1e-12);
        worst = worst.max((a - numeric).abs() / denom);
    }
    Ok(worst)
}
