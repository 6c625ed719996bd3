use std::ops::Range;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{gaussian_vector, Objective, Params, StreamRng};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    /// Points per axis; odd so that the centre cell exists.
    pub resolution: usize,
    pub lim: f64,
    pub two_d: bool,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { resolution: 41, lim: 1.0, two_d: true }
    }
}

/// Loss values on a plane (or line) through a model.
#[derive(Debug, Clone, Serialize)]
pub struct LandscapeGrid {
    pub dir_a: Params<f64>,
    pub dir_b: Option<Params<f64>>,
    pub offsets_a: Vec<f64>,
    pub offsets_b: Vec<f64>,
    /// `losses[i][j] = loss(x + a_i d1 + b_j d2)`; non-finite losses are `+inf`.
    pub losses: Vec<Vec<f64>>,
}

impl LandscapeGrid {
    pub fn center_loss(&self) -> f64 {
        self.losses[self.offsets_a.len() / 2][self.offsets_b.len() / 2]
    }
}

/// Evenly spaced offsets in `[-lim, lim]`, exactly symmetric about 0.
pub fn offsets(resolution: usize, lim: f64) -> Vec<f64> {
    let span = (resolution - 1) as f64;
    (0..resolution).map(|i| lim * (2.0 * i as f64 - span) / span).collect()
}

/// Rescales each block of `dir` to the norm of the same block of `x`.
pub fn filter_normalize(dir: &mut Params<f64>, x: &Params<f64>, blocks: &[Range<usize>]) {
    for b in blocks {
        let target = block_norm(x, b);
        let current = block_norm(dir, b);
        let factor = if current > 0.0 { target / current } else { 0.0 };
        for v in &mut dir.as_mut_slice()[b.clone()] {
            *v *= factor;
        }
    }
}

pub fn block_norm(v: &Params<f64>, block: &Range<usize>) -> f64 {
    v.as_slice()[block.clone()].iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn block_dot(a: &Params<f64>, b: &Params<f64>, block: &Range<usize>) -> f64 {
    a.as_slice()[block.clone()].iter().zip(&b.as_slice()[block.clone()]).map(|(x, y)| x * y).sum()
}

/// Filter-normalized random directions; the second one is made orthogonal to
/// the first inside every block before it is normalized.
pub fn random_directions(
    x: &Params<f64>,
    blocks: &[Range<usize>],
    two_d: bool,
    rng: &mut StreamRng,
) -> (Params<f64>, Option<Params<f64>>) {
    let mut d1 = gaussian_vector::<f64, _>(x.len(), 1.0, rng);
    filter_normalize(&mut d1, x, blocks);
    if !two_d {
        return (d1, None);
    }
    let mut d2 = gaussian_vector::<f64, _>(x.len(), 1.0, rng);
    for b in blocks {
        let nn = block_dot(&d1, &d1, b);
        if nn > 0.0 {
            let proj = block_dot(&d2, &d1, b) / nn;
            for i in b.clone() {
                d2[i] -= proj * d1[i];
            }
        }
    }
    filter_normalize(&mut d2, x, blocks);
    (d1, Some(d2))
}

/// Evaluates the objective on a grid of offsets along random directions.
pub fn landscape_slice(
    obj: &dyn Objective,
    x: &Params<f64>,
    grid: GridSpec,
    rng: &mut StreamRng,
) -> Result<LandscapeGrid> {
    if grid.resolution < 3 || grid.resolution.is_multiple_of(2) {
        return Err(Error::config(format!("grid resolution must be odd and >= 3 (got {})", grid.resolution)));
    }
    if !(grid.lim > 0.0) || !grid.lim.is_finite() {
        return Err(Error::config(format!("grid limit must be > 0 (got {})", grid.lim)));
    }
    if x.len() != obj.dim() {
        return Err(Error::DimensionMismatch { expected: obj.dim(), found: x.len() });
    }
    let (d1, d2) = random_directions(x, &obj.blocks(), grid.two_d, rng);
    let offsets_a = offsets(grid.resolution, grid.lim);
    let offsets_b = if grid.two_d { offsets(grid.resolution, grid.lim) } else { vec![0.0] };
    let losses = offsets_a
        .par_iter()
        .map(|&a| {
            offsets_b
                .iter()
                .map(|&b| {
                    let mut p = x.clone();
                    p.axpy(a, &d1).expect("same dimension");
                    if let Some(d2) = &d2 {
                        p.axpy(b, d2).expect("same dimension");
                    }
                    match obj.loss(&p) {
                        Ok(v) if v.is_finite() => v,
                        _ => f64::INFINITY,
                    }
                })
                .collect()
        })
        .collect();
    Ok(LandscapeGrid { dir_a: d1, dir_b: d2, offsets_a, offsets_b, losses })
}
