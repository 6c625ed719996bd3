//! Small differentiable classifiers with hand-derived gradients.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::rng::{gaussian_vector, StreamRng};
use super::{Params, Scalar};
use crate::data::{Batch, Dataset};
use crate::error::{Error, Result};

/// Below this norm a perturbation direction is treated as the zero vector.
pub const TOL_ZERO_NORM: f64 = 1e-12;

/// Standard deviation of the initial parameter draw (variance 0.01).
pub const INIT_STD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
    Relu,
}

impl Activation {
    fn apply<T: Scalar>(self, v: T) -> T {
        match self {
            Activation::Tanh => v.tanh(),
            Activation::Relu => v.max(T::zero()),
        }
    }

    /// Derivative expressed through the activation output `a` and input `v`.
    fn derivative<T: Scalar>(self, v: T, a: T) -> T {
        match self {
            Activation::Tanh => T::one() - a * a,
            Activation::Relu => {
                if v > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelKind {
    /// Multinomial logistic regression.
    Softmax,
    /// One hidden layer perceptron.
    Mlp {
        hidden: usize,
        #[serde(default)]
        activation: Activation,
    },
}

/// A classifier trained with mean cross-entropy.
///
/// Parameter layout is row-major weights followed by biases, layer by layer:
/// `[W (n_cls x n_in), b (n_cls)]` for softmax regression and
/// `[W1 (h x n_in), b1 (h), W2 (n_cls x h), b2 (n_cls)]` for the MLP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Model {
    pub kind: ModelKind,
    pub n_in: usize,
    pub n_cls: usize,
}

impl Model {
    pub fn softmax(n_in: usize, n_cls: usize) -> Self {
        Self { kind: ModelKind::Softmax, n_in, n_cls }
    }

    pub fn mlp(n_in: usize, hidden: usize, n_cls: usize, activation: Activation) -> Self {
        Self { kind: ModelKind::Mlp { hidden, activation }, n_in, n_cls }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_in == 0 || self.n_cls < 2 {
            return Err(Error::config(format!(
                "model needs n_in >= 1 and n_cls >= 2 (got n_in={}, n_cls={})",
                self.n_in, self.n_cls
            )));
        }
        if let ModelKind::Mlp { hidden: 0, .. } = self.kind {
            return Err(Error::config("mlp hidden width must be >= 1"));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self.kind {
            ModelKind::Softmax => self.n_cls * (self.n_in + 1),
            ModelKind::Mlp { hidden, .. } => hidden * (self.n_in + 1) + self.n_cls * (hidden + 1),
        }
    }

    /// Parameter blocks (one per layer) used for filter normalization.
    pub fn blocks(&self) -> Vec<Range<usize>> {
        match self.kind {
            ModelKind::Softmax => std::iter::once(0..self.dim()).collect(),
            ModelKind::Mlp { hidden, .. } => {
                let first = hidden * (self.n_in + 1);
                vec![0..first, first..self.dim()]
            }
        }
    }

    pub fn init<T: Scalar>(&self, rng: &mut StreamRng) -> Params<T> {
        gaussian_vector(self.dim(), T::lit(INIT_STD), rng)
    }

    fn check_inputs<T: Scalar>(&self, x: &Params<T>, batch: &Batch<'_>) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::config(format!(
                "parameter vector has length {} but model dimension is {}",
                x.len(),
                self.dim()
            )));
        }
        if batch.dataset().n_in() != self.n_in || batch.dataset().n_cls() > self.n_cls {
            return Err(Error::config(format!(
                "dataset shape (n_in={}, n_cls={}) does not fit model (n_in={}, n_cls={})",
                batch.dataset().n_in(),
                batch.dataset().n_cls(),
                self.n_in,
                self.n_cls
            )));
        }
        if batch.is_empty() {
            return Err(Error::config("empty batch"));
        }
        if !x.is_finite() {
            return Err(Error::non_finite("parameter vector contains NaN or Inf"));
        }
        Ok(())
    }

    /// Mean cross-entropy over the batch and its exact gradient.
    pub fn loss_and_grad<T: Scalar>(&self, x: &Params<T>, batch: &Batch<'_>) -> Result<(T, Params<T>)> {
        self.check_inputs(x, batch)?;
        let mut grad = Params::zeros(self.dim());
        let mut total = T::zero();
        let mut scratch = Scratch::new(self);
        for &i in batch.indices() {
            let row = batch.dataset().row(i);
            let label = batch.dataset().label(i);
            total += self.example(x.as_slice(), row, label, &mut scratch, Some(grad.as_mut_slice()));
        }
        let inv = T::one() / T::lit(batch.len() as f64);
        let loss = total * inv;
        if !loss.is_finite() {
            return Err(Error::non_finite(format!("loss evaluated to {loss}")));
        }
        for g in grad.as_mut_slice() {
            *g *= inv;
        }
        Ok((loss, grad))
    }

    /// Mean cross-entropy only.
    pub fn loss<T: Scalar>(&self, x: &Params<T>, batch: &Batch<'_>) -> Result<T> {
        self.check_inputs(x, batch)?;
        let mut total = T::zero();
        let mut scratch = Scratch::new(self);
        for &i in batch.indices() {
            let row = batch.dataset().row(i);
            let label = batch.dataset().label(i);
            total += self.example(x.as_slice(), row, label, &mut scratch, None);
        }
        let loss = total / T::lit(batch.len() as f64);
        if !loss.is_finite() {
            return Err(Error::non_finite(format!("loss evaluated to {loss}")));
        }
        Ok(loss)
    }

    /// Gradient at `x + rho * dir / |dir|`; a direction with norm at most
    /// [`TOL_ZERO_NORM`] (or `rho == 0`) leaves `x` unshifted.
    pub fn perturbed_grad<T: Scalar>(
        &self,
        x: &Params<T>,
        dir: &Params<T>,
        rho: T,
        batch: &Batch<'_>,
    ) -> Result<Params<T>> {
        if rho < T::zero() {
            return Err(Error::config("perturbation radius rho must be >= 0"));
        }
        match ascent_shift(dir, rho)? {
            None => Ok(self.loss_and_grad(x, batch)?.1),
            Some(shift) => Ok(self.loss_and_grad(&x.add(&shift)?, batch)?.1),
        }
    }

    /// Class with the largest logit (ties resolved to the lowest index).
    pub fn predict(&self, x: &Params<f64>, row: &[f64]) -> usize {
        let mut scratch = Scratch::new(self);
        self.logits(x.as_slice(), row, &mut scratch);
        let mut best = 0;
        for c in 1..self.n_cls {
            if scratch.logits[c] > scratch.logits[best] {
                best = c;
            }
        }
        best
    }

    pub fn accuracy(&self, x: &Params<f64>, data: &Dataset) -> f64 {
        let correct = (0..data.len()).filter(|&i| self.predict(x, data.row(i)) == data.label(i)).count();
        correct as f64 / data.len() as f64
    }

    fn logits<T: Scalar>(&self, x: &[T], row: &[f64], s: &mut Scratch<T>) {
        match self.kind {
            ModelKind::Softmax => {
                let bias = self.n_cls * self.n_in;
                for c in 0..self.n_cls {
                    let w = &x[c * self.n_in..(c + 1) * self.n_in];
                    let mut z = x[bias + c];
                    for (wj, fj) in w.iter().zip(row) {
                        z += *wj * T::lit(*fj);
                    }
                    s.logits[c] = z;
                }
            }
            ModelKind::Mlp { hidden, activation } => {
                let b1 = hidden * self.n_in;
                let w2 = b1 + hidden;
                let b2 = w2 + self.n_cls * hidden;
                for h in 0..hidden {
                    let w = &x[h * self.n_in..(h + 1) * self.n_in];
                    let mut v = x[b1 + h];
                    for (wj, fj) in w.iter().zip(row) {
                        v += *wj * T::lit(*fj);
                    }
                    s.pre[h] = v;
                    s.act[h] = activation.apply(v);
                }
                for c in 0..self.n_cls {
                    let w = &x[w2 + c * hidden..w2 + (c + 1) * hidden];
                    let mut z = x[b2 + c];
                    for (wh, ah) in w.iter().zip(&s.act) {
                        z += *wh * *ah;
                    }
                    s.logits[c] = z;
                }
            }
        }
    }

    /// Cross-entropy of one example; accumulates its (unscaled) gradient.
    fn example<T: Scalar>(&self, x: &[T], row: &[f64], label: usize, s: &mut Scratch<T>, grad: Option<&mut [T]>) -> T {
        self.logits(x, row, s);
        let max = s.logits.iter().fold(T::neg_infinity(), |m, &z| m.max(z));
        let mut denom = T::zero();
        for c in 0..self.n_cls {
            let e = (s.logits[c] - max).exp();
            s.probs[c] = e;
            denom += e;
        }
        let lse = max + denom.ln();
        let loss = lse - s.logits[label];
        let Some(grad) = grad else {
            return loss;
        };
        // dL/dz = softmax - onehot
        for c in 0..self.n_cls {
            s.probs[c] /= denom;
        }
        s.probs[label] -= T::one();
        match self.kind {
            ModelKind::Softmax => {
                let bias = self.n_cls * self.n_in;
                for c in 0..self.n_cls {
                    let dz = s.probs[c];
                    let g = &mut grad[c * self.n_in..(c + 1) * self.n_in];
                    for (gj, fj) in g.iter_mut().zip(row) {
                        *gj += dz * T::lit(*fj);
                    }
                    grad[bias + c] += dz;
                }
            }
            ModelKind::Mlp { hidden, activation } => {
                let b1 = hidden * self.n_in;
                let w2 = b1 + hidden;
                let b2 = w2 + self.n_cls * hidden;
                for h in 0..hidden {
                    s.back[h] = T::zero();
                }
                for c in 0..self.n_cls {
                    let dz = s.probs[c];
                    for h in 0..hidden {
                        grad[w2 + c * hidden + h] += dz * s.act[h];
                        s.back[h] += dz * x[w2 + c * hidden + h];
                    }
                    grad[b2 + c] += dz;
                }
                for h in 0..hidden {
                    let dv = s.back[h] * activation.derivative(s.pre[h], s.act[h]);
                    let g = &mut grad[h * self.n_in..(h + 1) * self.n_in];
                    for (gj, fj) in g.iter_mut().zip(row) {
                        *gj += dv * T::lit(*fj);
                    }
                    grad[b1 + h] += dv;
                }
            }
        }
        loss
    }
}

/// `rho * dir / |dir|`, or `None` when the shift is the zero vector.
pub fn ascent_shift<T: Scalar>(dir: &Params<T>, rho: T) -> Result<Option<Params<T>>> {
    let norm = dir.l2_norm();
    if !norm.is_finite() {
        return Err(Error::non_finite("perturbation direction is not finite"));
    }
    if rho == T::zero() || norm <= T::lit(TOL_ZERO_NORM) {
        return Ok(None);
    }
    Ok(Some(dir.scale(rho / norm)))
}

struct Scratch<T> {
    logits: Vec<T>,
    probs: Vec<T>,
    pre: Vec<T>,
    act: Vec<T>,
    back: Vec<T>,
}

impl<T: Scalar> Scratch<T> {
    fn new(model: &Model) -> Self {
        let hidden = match model.kind {
            ModelKind::Softmax => 0,
            ModelKind::Mlp { hidden, .. } => hidden,
        };
        Self {
            logits: vec![T::zero(); model.n_cls],
            probs: vec![T::zero(); model.n_cls],
            pre: vec![T::zero(); hidden],
            act: vec![T::zero(); hidden],
            back: vec![T::zero(); hidden],
        }
    }
}

/// A scalar objective over parameter vectors, with layer blocks.
pub trait Objective: Sync {
    fn dim(&self) -> usize;
    fn blocks(&self) -> Vec<Range<usize>>;
    fn loss(&self, x: &Params<f64>) -> Result<f64>;
    fn loss_and_grad(&self, x: &Params<f64>) -> Result<(f64, Params<f64>)>;
}

/// A model evaluated on a fixed batch.
pub struct BatchObjective<'a> {
    pub model: &'a Model,
    pub batch: &'a Batch<'a>,
}

impl Objective for BatchObjective<'_> {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn blocks(&self) -> Vec<Range<usize>> {
        self.model.blocks()
    }

    fn loss(&self, x: &Params<f64>) -> Result<f64> {
        self.model.loss(x, self.batch)
    }

    fn loss_and_grad(&self, x: &Params<f64>) -> Result<(f64, Params<f64>)> {
        self.model.loss_and_grad(x, self.batch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Dataset;

    fn two_class() -> Dataset {
        Dataset::from_rows(vec![vec![1.0, 2.0], vec![-0.5, 0.25], vec![0.3, -1.0], vec![2.0, 0.0]], vec![0, 1, 0, 1], 2)
            .unwrap()
    }

    #[test]
    fn zero_weights_give_ln2_on_balanced_two_class() {
        let ds = two_class();
        let m = Model::softmax(2, 2);
        let (loss, _) = m.loss_and_grad(&Params::<f64>::zeros(m.dim()), &ds.full_batch()).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn duplicated_batch_is_invariant() {
        let ds = two_class();
        let m = Model::mlp(2, 3, 2, Activation::Tanh);
        let mut rng = crate::numerics::Streams::new(1).stream(crate::numerics::Purpose::Test, 0, 0);
        let x: Params<f64> = m.init(&mut rng);
        let once = ds.batch(vec![0, 1, 2, 3]);
        let twice = ds.batch(vec![0, 0, 1, 1, 2, 2, 3, 3]);
        let (l1, g1) = m.loss_and_grad(&x, &once).unwrap();
        let (l2, g2) = m.loss_and_grad(&x, &twice).unwrap();
        assert!((l1 - l2).abs() <= 1e-15 * l1.abs());
        for (a, b) in g1.iter().zip(g2.iter()) {
            assert!((a - b).abs() <= 1e-15);
        }
    }

    #[test]
    fn dimension_mismatch_and_nan_are_rejected() {
        let ds = two_class();
        let m = Model::softmax(2, 2);
        let err = m.loss_and_grad(&Params::<f64>::zeros(5), &ds.full_batch()).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        let mut x = Params::<f64>::zeros(m.dim());
        x[0] = f64::NAN;
        assert!(matches!(m.loss_and_grad(&x, &ds.full_batch()), Err(Error::NonFinite(_))));
    }

    #[test]
    fn zero_direction_and_zero_radius_do_not_shift() {
        let ds = two_class();
        let m = Model::softmax(2, 2);
        let x = Params::from_vec(vec![0.1, -0.2, 0.3, 0.05, -0.1, 0.2]);
        let g = m.loss_and_grad(&x, &ds.full_batch()).unwrap().1;
        let zero = Params::zeros(m.dim());
        assert_eq!(m.perturbed_grad(&x, &zero, 0.2, &ds.full_batch()).unwrap(), g);
        assert_eq!(m.perturbed_grad(&x, &g, 0.0, &ds.full_batch()).unwrap(), g);
    }

    #[test]
    fn f32_and_f64_agree() {
        let ds = two_class();
        let m = Model::softmax(2, 2);
        let x64 = Params::from_vec(vec![0.1, -0.2, 0.3, 0.05, -0.1, 0.2]);
        let x32 = Params::from_vec(x64.iter().map(|v| *v as f32).collect());
        let (l64, _) = m.loss_and_grad(&x64, &ds.full_batch()).unwrap();
        let (l32, _) = m.loss_and_grad(&x32, &ds.full_batch()).unwrap();
        assert!((l64 - l32 as f64).abs() < 1e-6);
    }

    #[test]
    fn block_layout_covers_dimension() {
        let m = Model::mlp(4, 5, 3, Activation::Relu);
        assert_eq!(m.dim(), 5 * 5 + 3 * 6);
        let b = m.blocks();
        assert_eq!(b[0].end, b[1].start);
        assert_eq!(b[1].end, m.dim());
    }
}
