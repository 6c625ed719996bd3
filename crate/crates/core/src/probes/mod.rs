//! Flatness and update-norm diagnostics.

mod landscape;
mod norms;
mod sharpness;

pub use landscape::{
    block_norm, filter_normalize, landscape_slice, offsets, random_directions, GridSpec, LandscapeGrid,
};
pub use norms::{histogram_edges, norm_report, norm_reports, NormReport, HISTOGRAM_BINS};
pub use sharpness::{random_unit_directions, sharpness_proxy, SharpnessReport, SHARPNESS_DIRECTIONS};

use crate::data::{Batch, Dataset};
use crate::numerics::{Purpose, Streams};

/// Fixed evaluation subset of `size` rows chosen by `seed` (all rows if the
/// dataset is smaller), in ascending order.
pub fn eval_sample(ds: &Dataset, size: usize, seed: u64) -> Batch<'_> {
    if size >= ds.len() {
        return ds.full_batch();
    }
    let mut rng = Streams::new(seed).stream(Purpose::EvalSample, 0, 0);
    let mut idx = rand::seq::index::sample(&mut rng, ds.len(), size).into_vec();
    idx.sort_unstable();
    ds.batch(idx)
}
