//! Laplacian smoothing: `A^{-1} v` with `A = I - sigma_ls * L`, where `L` is the
//! circulant 1-D second-difference operator.
//!
//! `A` is circulant, so it is diagonalized by the DFT with eigenvalues
//! `1 + 2 sigma_ls (1 - cos(2 pi k / d))`; the solve is a forward transform,
//! a pointwise division and an inverse transform.

use std::ops::Range;

use rustfft::num_complex::Complex;
use rustfft::{FftNum, FftPlanner};

use crate::error::{Error, Result};
use crate::numerics::{Params, Scalar};

/// Eigenvalues of `A` in DFT order.
pub fn eigenvalues<T: Scalar>(dim: usize, sigma_ls: T) -> Vec<T> {
    let two = T::lit(2.0);
    (0..dim)
        .map(|k| {
            let theta = two * T::PI() * T::lit(k as f64) / T::lit(dim as f64);
            T::one() + two * sigma_ls * (T::one() - theta.cos())
        })
        .collect()
}

/// Solves `A out = v`.
pub fn smooth<T: Scalar + FftNum>(v: &Params<T>, sigma_ls: T) -> Result<Params<T>> {
    if !(sigma_ls >= T::zero()) || !sigma_ls.is_finite() {
        return Err(Error::config(format!("sigma_ls must be finite and >= 0 (got {sigma_ls})")));
    }
    if sigma_ls == T::zero() || v.len() <= 1 {
        return Ok(v.clone());
    }
    Ok(Params::from_vec(solve_circulant(v.as_slice(), sigma_ls)))
}

/// Smooths each block independently (per-layer smoothing).
pub fn smooth_blocks<T: Scalar + FftNum>(v: &Params<T>, sigma_ls: T, blocks: &[Range<usize>]) -> Result<Params<T>> {
    let mut out = v.clone();
    for b in blocks {
        let part = smooth(&Params::from_vec(v.as_slice()[b.clone()].to_vec()), sigma_ls)?;
        out.as_mut_slice()[b.clone()].copy_from_slice(part.as_slice());
    }
    Ok(out)
}

fn solve_circulant<T: Scalar + FftNum>(v: &[T], sigma_ls: T) -> Vec<T> {
    let d = v.len();
    let mut planner = FftPlanner::<T>::new();
    let forward = planner.plan_fft_forward(d);
    let inverse = planner.plan_fft_inverse(d);
    let mut buf: Vec<Complex<T>> = v.iter().map(|&x| Complex::new(x, T::zero())).collect();
    forward.process(&mut buf);
    for (c, lambda) in buf.iter_mut().zip(eigenvalues(d, sigma_ls)) {
        *c /= lambda;
    }
    inverse.process(&mut buf);
    let scale = T::one() / T::lit(d as f64);
    buf.into_iter().map(|c| c.re * scale).collect()
}

/// `A v`, used for residual checks.
pub fn apply_operator<T: Scalar>(v: &Params<T>, sigma_ls: T) -> Params<T> {
    let d = v.len();
    let x = v.as_slice();
    Params::from_vec(
        (0..d)
            .map(|i| {
                let lap = x[(i + 1) % d] - T::lit(2.0) * x[i] + x[(i + d - 1) % d];
                x[i] - sigma_ls * lap
            })
            .collect(),
    )
}
