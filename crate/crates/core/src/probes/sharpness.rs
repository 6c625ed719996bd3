use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{gaussian_vector, Objective, Params, StreamRng};

pub const SHARPNESS_DIRECTIONS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SharpnessReport {
    /// Gradient norm at the model on the evaluation sample.
    pub grad_norm: f64,
    /// Largest loss rise `F(x + rho u) - F(x)` over random unit directions.
    pub max_rise: f64,
    /// Identifier of the evaluation sample the numbers refer to.
    pub sample_id: u64,
}

/// `count` independent uniformly distributed unit vectors.
pub fn random_unit_directions(dim: usize, count: usize, rng: &mut StreamRng) -> Vec<Params<f64>> {
    (0..count)
        .map(|_| {
            let v = gaussian_vector::<f64, _>(dim, 1.0, rng);
            let n = v.l2_norm();
            v.scale(1.0 / n)
        })
        .collect()
}

pub fn sharpness_proxy(
    obj: &dyn Objective,
    x: &Params<f64>,
    radius: f64,
    sample_id: u64,
    rng: &mut StreamRng,
) -> Result<SharpnessReport> {
    if !(radius > 0.0) {
        return Err(Error::config(format!("probe radius must be > 0 (got {radius})")));
    }
    let (base, grad) = obj.loss_and_grad(x)?;
    let mut max_rise = f64::NEG_INFINITY;
    for u in random_unit_directions(x.len(), SHARPNESS_DIRECTIONS, rng) {
        let mut p = x.clone();
        p.axpy(radius, &u)?;
        let rise = match obj.loss(&p) {
            Ok(v) => v - base,
            Err(_) => f64::INFINITY,
        };
        max_rise = max_rise.max(rise);
    }
    Ok(SharpnessReport { grad_norm: grad.l2_norm(), max_rise, sample_id })
}
