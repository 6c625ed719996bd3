//! Flat parameter vectors.
//!
//! Every reduction runs sequentially in ascending index order so results are
//! bit-reproducible regardless of how callers schedule work.

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use super::Scalar;
use crate::error::{Error, Result};

/// Dense parameter (or gradient) vector of fixed dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Params<T> {
    values: Vec<T>,
}

impl<T: Scalar> Params<T> {
    pub fn zeros(dim: usize) -> Self {
        Self { values: vec![T::zero(); dim] }
    }

    pub fn from_vec(values: Vec<T>) -> Self {
        Self { values }
    }

    pub fn filled(dim: usize, value: T) -> Self {
        Self { values: vec![value; dim] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<T> {
        self.values
    }

    pub fn iter(&self) -> std::slice::Iter<'_, T> {
        self.values.iter()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    fn check_len(&self, other: &Self) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch { expected: self.len(), found: other.len() });
        }
        Ok(())
    }

    pub fn dot(&self, other: &Self) -> Result<T> {
        self.check_len(other)?;
        let mut acc = T::zero();
        for (a, b) in self.values.iter().zip(&other.values) {
            acc += *a * *b;
        }
        Ok(acc)
    }

    pub fn l2_norm_sq(&self) -> T {
        let mut acc = T::zero();
        for v in &self.values {
            acc += *v * *v;
        }
        acc
    }

    pub fn l2_norm(&self) -> T {
        self.l2_norm_sq().sqrt()
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_len(other)?;
        Ok(self.zip_map(other, |a, b| a + b))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_len(other)?;
        Ok(self.zip_map(other, |a, b| a - b))
    }

    pub fn scale(&self, factor: T) -> Self {
        Self { values: self.values.iter().map(|v| *v * factor).collect() }
    }

    /// `self += factor * other`
    pub fn axpy(&mut self, factor: T, other: &Self) -> Result<()> {
        self.check_len(other)?;
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += factor * *b;
        }
        Ok(())
    }

    /// Arithmetic mean of the coordinates (zero for an empty vector).
    pub fn mean(&self) -> T {
        if self.values.is_empty() {
            return T::zero();
        }
        let mut acc = T::zero();
        for v in &self.values {
            acc += *v;
        }
        acc / T::lit(self.values.len() as f64)
    }

    fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        Self { values: self.values.iter().zip(&other.values).map(|(a, b)| f(*a, *b)).collect() }
    }
}

/// Sum of vectors in the order given.
pub fn sum_in_order<'a, T: Scalar>(dim: usize, items: impl IntoIterator<Item = &'a Params<T>>) -> Result<Params<T>> {
    let mut acc = Params::zeros(dim);
    for v in items {
        acc.axpy(T::one(), v)?;
    }
    Ok(acc)
}

impl<T> Index<usize> for Params<T> {
    type Output = T;

    fn index(&self, i: usize) -> &T {
        &self.values[i]
    }
}

impl<T> IndexMut<usize> for Params<T> {
    fn index_mut(&mut self, i: usize) -> &mut T {
        &mut self.values[i]
    }
}

impl<T: Scalar> From<Vec<T>> for Params<T> {
    fn from(values: Vec<T>) -> Self {
        Self::from_vec(values)
    }
}
