//! Non-IID label partitioning and per-client minibatch sampling.

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use super::{Batch, Dataset};
use crate::error::{Error, Result};
use crate::numerics::{Purpose, StreamRng, Streams};

/// Attempts before a Dirichlet partition is declared infeasible.
pub const MAX_PARTITION_RETRIES: u64 = 1000;

/// Smallest shard a client may own for batch size `batch_size`.
pub fn min_client_size(batch_size: usize) -> usize {
    batch_size.max(10)
}

/// Disjoint assignment of dataset rows to clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub alpha: f64,
    pub seed: u64,
    pub min_client_size: usize,
    /// Retry index whose draw was accepted.
    pub attempt: u64,
    pub clients: Vec<Vec<usize>>,
}

impl Partition {
    pub fn num_clients(&self) -> usize {
        self.clients.len()
    }

    pub fn shard(&self, client: usize) -> Result<&[usize]> {
        self.clients
            .get(client)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::config(format!("unknown client id {client} (have {})", self.clients.len())))
    }

    /// Checks that the shards are pairwise disjoint and cover `0..n` exactly.
    pub fn check_cover(&self, n: usize) -> Result<()> {
        let mut seen = vec![false; n];
        for (c, shard) in self.clients.iter().enumerate() {
            for &i in shard {
                if i >= n {
                    return Err(Error::config(format!("client {c} holds out-of-range index {i}")));
                }
                if std::mem::replace(&mut seen[i], true) {
                    return Err(Error::config(format!("index {i} assigned twice")));
                }
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::config(format!("index {i} not assigned to any client")));
        }
        Ok(())
    }

    /// Number of distinct labels present in each client's shard.
    pub fn label_diversity(&self, ds: &Dataset) -> Vec<usize> {
        self.clients
            .iter()
            .map(|shard| {
                let mut present = vec![false; ds.n_cls()];
                for &i in shard {
                    present[ds.label(i)] = true;
                }
                present.iter().filter(|p| **p).count()
            })
            .collect()
    }
}

fn dirichlet(alpha: f64, n: usize, rng: &mut StreamRng) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("alpha > 0 checked by caller");
    let mut p: Vec<f64> = (0..n).map(|_| gamma.sample(rng)).collect();
    let total: f64 = p.iter().sum();
    if total > 0.0 && total.is_finite() {
        p.iter_mut().for_each(|v| *v /= total);
    } else {
        // every gamma draw underflowed; the mass goes to one client
        let winner = rand::Rng::random_range(rng, 0..n);
        p.iter_mut().enumerate().for_each(|(j, v)| *v = if j == winner { 1.0 } else { 0.0 });
    }
    p
}

/// One partition draw: per class, client proportions from `Dir(alpha)`;
/// clients already holding an equal share (`n / N`) are masked out of later
/// classes.
fn draw_once(ds: &Dataset, num_clients: usize, alpha: f64, rng: &mut StreamRng) -> Vec<Vec<usize>> {
    let n = ds.len();
    let fair_share = n as f64 / num_clients as f64;
    let mut shards: Vec<Vec<usize>> = vec![Vec::new(); num_clients];
    for class in 0..ds.n_cls() {
        let mut members: Vec<usize> = (0..n).filter(|&i| ds.label(i) == class).collect();
        let mut p = dirichlet(alpha, num_clients, rng);
        if members.is_empty() {
            continue;
        }
        members.shuffle(rng);
        let masked: Vec<f64> =
            p.iter().zip(&shards).map(|(pj, s)| if (s.len() as f64) < fair_share { *pj } else { 0.0 }).collect();
        let masked_total: f64 = masked.iter().sum();
        if masked_total > 0.0 {
            p = masked.into_iter().map(|v| v / masked_total).collect();
        }
        let m = members.len();
        let mut start = 0usize;
        let mut cum = 0.0;
        for (j, pj) in p.iter().enumerate() {
            cum += pj;
            let end = if j + 1 == num_clients { m } else { ((cum * m as f64).floor() as usize).clamp(start, m) };
            shards[j].extend_from_slice(&members[start..end]);
            start = end;
        }
    }
    for s in &mut shards {
        s.sort_unstable();
    }
    shards
}

/// Dirichlet label partition. A draw leaving any client with fewer than
/// `min_size` rows is discarded and redrawn from the next retry stream, up to
/// [`MAX_PARTITION_RETRIES`] times.
pub fn dirichlet_partition(
    ds: &Dataset,
    num_clients: usize,
    alpha: f64,
    seed: u64,
    min_size: usize,
) -> Result<Partition> {
    if num_clients < 2 {
        return Err(Error::config(format!("need at least 2 clients (got {num_clients})")));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::config(format!("dirichlet alpha must be finite and > 0 (got {alpha})")));
    }
    if num_clients.saturating_mul(min_size) > ds.len() {
        return Err(Error::Infeasible(format!(
            "{num_clients} clients x {min_size} rows exceeds dataset size {}",
            ds.len()
        )));
    }
    let streams = Streams::new(seed);
    for attempt in 0..MAX_PARTITION_RETRIES {
        let mut rng = streams.stream(Purpose::Partition, attempt, 0);
        let clients = draw_once(ds, num_clients, alpha, &mut rng);
        if clients.iter().all(|s| s.len() >= min_size) {
            let part = Partition { alpha, seed, min_client_size: min_size, attempt, clients };
            part.check_cover(ds.len())?;
            return Ok(part);
        }
    }
    Err(Error::Infeasible(format!(
        "no draw gave every client >= {min_size} rows after {MAX_PARTITION_RETRIES} attempts"
    )))
}

/// Uniform sample of `batch_size` rows without replacement from one client's
/// shard; the whole shard (in stored order) when it is not larger than the batch.
pub fn next_batch<'a>(
    ds: &'a Dataset,
    partition: &Partition,
    client: usize,
    batch_size: usize,
    rng: &mut StreamRng,
) -> Result<Batch<'a>> {
    if batch_size == 0 {
        return Err(Error::config("batch size must be >= 1"));
    }
    let shard = partition.shard(client)?;
    if shard.len() <= batch_size {
        return Ok(ds.batch(shard.to_vec()));
    }
    let picked = rand::seq::index::sample(rng, shard.len(), batch_size);
    Ok(ds.batch(picked.iter().map(|k| shard[k]).collect()))
}
