use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma};

use super::{Dataset, RngStream};
use crate::error::{Error, Result};

/// The sample indices owned by one worker, sorted ascending.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Shard {
    pub owner: usize,
    pub indices: Vec<usize>,
}

impl Shard {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Label-skewed split of `ds` over `n` workers.
///
/// For every class (ascending), per-worker proportions are drawn from a
/// symmetric Dirichlet(`conc`) as normalised Gamma(`conc`, 1) draws in worker
/// order; the class's shuffled indices are then dealt out by
/// largest-remainder rounding. Workers left empty receive one sample each
/// from the currently largest shard.
pub fn dirichlet_partition(ds: &Dataset, n: usize, conc: f64, rng: &mut RngStream) -> Result<Vec<Shard>> {
    if n == 0 {
        return Err(Error::invalid("partition needs at least one worker"));
    }
    if !(conc > 0.0) || !conc.is_finite() {
        return Err(Error::invalid(format!("Dirichlet concentration must be positive, got {conc}")));
    }
    let m = ds.len();
    if n > m {
        return Err(Error::invalid(format!("{n} workers but only {m} samples")));
    }
    let gamma = Gamma::new(conc, 1.0).map_err(|e| Error::invalid(e.to_string()))?;

    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.classes()];
    for i in 0..m {
        by_class[ds.label(i)].push(i);
    }

    let mut shards: Vec<Vec<usize>> = vec![Vec::new(); n];
    for members in by_class.iter_mut() {
        let draws: Vec<f64> = (0..n).map(|_| gamma.sample(rng)).collect();
        let total: f64 = draws.iter().sum();
        let props: Vec<f64> = if total > 0.0 && total.is_finite() {
            draws.iter().map(|g| g / total).collect()
        } else {
            vec![1.0 / n as f64; n]
        };
        members.shuffle(rng);
        let counts = largest_remainder(&props, members.len());
        let mut offset = 0;
        for (w, &c) in counts.iter().enumerate() {
            shards[w].extend_from_slice(&members[offset..offset + c]);
            offset += c;
        }
    }

    for w in 0..n {
        if shards[w].is_empty() {
            let donor = (0..n).max_by(|&a, &b| shards[a].len().cmp(&shards[b].len()).then(b.cmp(&a))).expect("n >= 1");
            shards[donor].sort_unstable();
            let moved = shards[donor].pop().expect("donor shard is the largest and m >= n");
            shards[w].push(moved);
        }
    }

    Ok(shards
        .into_iter()
        .enumerate()
        .map(|(owner, mut indices)| {
            indices.sort_unstable();
            Shard { owner, indices }
        })
        .collect())
}

/// Integer counts summing to `total`, proportional to `props`; leftover
/// units go to the largest fractional parts, ties to the lower index.
fn largest_remainder(props: &[f64], total: usize) -> Vec<usize> {
    let raw: Vec<f64> = props.iter().map(|p| p * total as f64).collect();
    let mut counts: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..props.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = raw[a] - raw[a].floor();
        let fb = raw[b] - raw[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &k in order.iter().take(total.saturating_sub(assigned)) {
        counts[k] += 1;
    }
    // Floor of a slightly-over-one proportion can overshoot; trim from the end.
    let mut excess = counts.iter().sum::<usize>().saturating_sub(total);
    for c in counts.iter_mut().rev() {
        let take = excess.min(*c);
        *c -= take;
        excess -= take;
    }
    counts
}

/// `batch` indices drawn uniformly with replacement from the shard.
pub fn sample_minibatch(shard: &Shard, batch: usize, rng: &mut RngStream) -> Result<Vec<usize>> {
    if batch == 0 {
        return Err(Error::invalid("minibatch size must be at least 1"));
    }
    if shard.is_empty() {
        return Err(Error::state(format!("shard of worker {} is empty", shard.owner)));
    }
    let len = shard.len() as u64;
    Ok((0..batch).map(|_| shard.indices[rng.random_range(0..len) as usize]).collect())
}
