use std::f64::consts::PI;

#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementTerm {
    pub total: f64,
    /// Derivative with respect to the band coordinate (x or r) per element.
    pub grad: Vec<f64>,
}

/// Per-point Gaussian well `-(1/(sigma sqrt(2 pi))) exp(-(c - c_k)^2 / 2 sigma^2)`.
#[inline]
pub fn well(c: f64, center: f64, sigma: f64) -> f64 {
    let u = c - center;
    -(-u * u / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * PI).sqrt())
}

/// Negative Gaussian wells pulling each element's band coordinate towards
/// its iteration's offset. `band` is indexed `k * N + i`.
pub fn displacement_loss_and_grad(
    band: &[f64],
    offsets: &[f64],
    num_instances: usize,
    sigma: f64,
) -> DisplacementTerm {
    let mut total = 0.0;
    let grad = band
        .iter()
        .enumerate()
        .map(|(e, &c)| {
            let center = offsets[e / num_instances];
            let cost = well(c, center, sigma);
            total += cost;
            -cost * (c - center) / (sigma * sigma)
        })
        .collect();
    DisplacementTerm { total, grad }
}
