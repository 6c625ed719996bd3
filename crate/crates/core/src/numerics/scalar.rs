use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, NumAssignOps};

/// Floating-point scalar the numeric kernels are written against.
///
/// Implemented for `f32` and `f64`. The training engine itself runs on `f64`
/// so that runs are bit-reproducible; the generic form exists for the vector
/// kernels, the models and the smoothing operator.
pub trait Scalar: Float + FloatConst + NumAssignOps + Sum + Debug + Display + Send + Sync + 'static {
    #[inline]
    fn lit(v: f64) -> Self {
        <Self as num_traits::NumCast>::from(v).expect("literal representable in scalar type")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Scalar for T where T: Float + FloatConst + NumAssignOps + Sum + Debug + Display + Send + Sync + 'static {}
