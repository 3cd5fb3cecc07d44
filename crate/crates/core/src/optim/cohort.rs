use std::sync::Arc;

use rayon::prelude::*;
use rayon::ThreadPool;

use super::{gossip_average, guard, sum_local_step, Algorithm, SumHyper, WorkerState};
use crate::data::{sample_minibatch, Dataset, Purpose, RngStream, Shard};
use crate::error::{Error, Result};
use crate::objectives::{value_and_grad, GradientOracle};
use crate::topology::TopologySchedule;
use crate::vector::{self, ParamVector};

/// The objective and data every worker trains on; `shards[i]` belongs to worker `i`.
#[derive(Clone, Copy)]
pub struct Problem<'a> {
    pub oracle: &'a dyn GradientOracle,
    pub shards: &'a [Shard],
    pub data: &'a Dataset,
}

/// How each local step picks its samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BatchMode {
    /// `b` indices uniformly with replacement from the worker's shard.
    Minibatch(usize),
    /// The whole shard, in ascending index order (exact `grad f_i`).
    Full,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TraceLevel {
    #[default]
    Off,
    /// Record every batch used, for replay by reference implementations.
    Batches,
    /// Batches plus the `(x, v)` states around every local step.
    Full,
}

/// States around one local step, in the order the update saw them.
#[derive(Clone, Debug)]
pub struct StepStates {
    pub x_before: ParamVector,
    pub v_before: ParamVector,
    /// The direction fed into the SUM update (`g`, or the blend `m` under GT-DSUM).
    pub direction: ParamVector,
    pub x_after: ParamVector,
    pub v_after: ParamVector,
}

#[derive(Clone, Debug)]
pub struct LocalStep {
    pub worker: usize,
    pub epoch: usize,
    pub step: usize,
    pub batch: Vec<usize>,
    pub states: Option<StepStates>,
}

/// Everything recorded while tracing was enabled.
#[derive(Clone, Debug, Default)]
pub struct Trace {
    /// Tracker bootstrap batch per worker (GT-DSUM only).
    pub bootstrap: Vec<Vec<usize>>,
    /// Sorted by `(epoch, worker, step)`.
    pub steps: Vec<LocalStep>,
}

impl Trace {
    pub fn batch(&self, worker: usize, epoch: usize, step: usize) -> Option<&[usize]> {
        self.steps
            .binary_search_by(|s| (s.epoch, s.worker, s.step).cmp(&(epoch, worker, step)))
            .ok()
            .map(|k| self.steps[k].batch.as_slice())
    }

    pub fn epoch_steps(&self, worker: usize, epoch: usize) -> impl Iterator<Item = &LocalStep> {
        self.steps.iter().filter(move |s| s.worker == worker && s.epoch == epoch)
    }
}

/// All workers plus the shared schedule and hyperparameters.
pub struct Cohort {
    workers: Vec<WorkerState>,
    schedule: TopologySchedule,
    hyper: SumHyper,
    seed: u64,
    batch: BatchMode,
    pool: Option<Arc<ThreadPool>>,
    tracker_ready: bool,
    trace_level: TraceLevel,
    trace: Trace,
}

impl std::fmt::Debug for Cohort {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Cohort")
            .field("workers", &self.workers.len())
            .field("hyper", &self.hyper)
            .field("seed", &self.seed)
            .field("batch", &self.batch)
            .finish_non_exhaustive()
    }
}

impl Cohort {
    /// Every worker starts from the same `x0` with `v = x0`, `y = d = 0`.
    pub fn new(
        x0: &ParamVector,
        schedule: TopologySchedule,
        hyper: SumHyper,
        seed: u64,
        batch: BatchMode,
    ) -> Result<Self> {
        hyper.validate()?;
        if let BatchMode::Minibatch(0) = batch {
            return Err(Error::invalid("minibatch size must be at least 1"));
        }
        if x0.is_empty() || !x0.is_finite() {
            return Err(Error::invalid("initial model must be non-empty and finite"));
        }
        let n = schedule.workers();
        let workers = (0..n).map(|i| WorkerState::new(i, x0, RngStream::new(seed, i, 0, Purpose::Minibatch))).collect();
        Ok(Self {
            workers,
            schedule,
            hyper,
            seed,
            batch,
            pool: None,
            tracker_ready: false,
            trace_level: TraceLevel::Off,
            trace: Trace::default(),
        })
    }

    /// Run local phases on `threads` worker threads. Results do not depend on this.
    pub fn with_threads(mut self, threads: usize) -> Result<Self> {
        self.pool = if threads <= 1 {
            None
        } else {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
            Some(Arc::new(pool))
        };
        Ok(self)
    }

    pub fn with_trace(mut self, level: TraceLevel) -> Self {
        self.trace_level = level;
        self
    }

    pub fn workers(&self) -> &[WorkerState] {
        &self.workers
    }

    pub fn workers_mut(&mut self) -> &mut [WorkerState] {
        &mut self.workers
    }

    pub fn n(&self) -> usize {
        self.workers.len()
    }

    pub fn hyper(&self) -> &SumHyper {
        &self.hyper
    }

    pub fn schedule(&self) -> &TopologySchedule {
        &self.schedule
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn batch_mode(&self) -> BatchMode {
        self.batch
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    /// Whether the GT-DSUM tracker has been bootstrapped.
    pub fn tracker_ready(&self) -> bool {
        self.tracker_ready
    }

    pub fn models(&self) -> Vec<&ParamVector> {
        self.workers.iter().map(|w| &w.x).collect()
    }

    /// `x_bar`, the worker average of the models.
    pub fn mean_model(&self) -> ParamVector {
        vector::mean(&self.models())
    }

    fn check_problem(&self, p: &Problem<'_>) -> Result<()> {
        if p.shards.len() != self.workers.len() {
            return Err(Error::invalid(format!("{} shards for {} workers", p.shards.len(), self.workers.len())));
        }
        if p.oracle.param_dim() != self.workers[0].x.len() {
            return Err(Error::invalid("model dimension does not match the cohort"));
        }
        Ok(())
    }

    /// One epoch of the selected algorithm.
    pub fn step_epoch(&mut self, epoch: usize, p: &Problem<'_>) -> Result<()> {
        match self.hyper.algo {
            Algorithm::Vanilla | Algorithm::Dsum => self.dsum_epoch(epoch, p),
            Algorithm::Gtdsum => self.gtdsum_epoch(epoch, p),
        }
    }

    /// `K` local steps per worker, then gossip of `x` (and `v` under D-SUM).
    ///
    /// Under [`Algorithm::Vanilla`] only `x` is mixed and `v` is reset to the
    /// mixed `x`, so local momentum restarts every epoch; with `beta = 0` the
    /// local step is plain `x -= eta g`.
    pub fn dsum_epoch(&mut self, epoch: usize, p: &Problem<'_>) -> Result<()> {
        if self.hyper.algo == Algorithm::Gtdsum {
            return Err(Error::state("dsum_epoch called on a GT-DSUM cohort"));
        }
        self.check_problem(p)?;
        self.local_phase(epoch, p)?;
        let w = self.schedule.lookup(epoch)?;

        let mixed_x = gossip_average(&self.workers.iter().map(|s| &s.x).collect::<Vec<_>>(), w)?;
        match self.hyper.algo {
            Algorithm::Vanilla => {
                for (s, x) in self.workers.iter_mut().zip(mixed_x) {
                    s.v = x.clone();
                    s.x = x;
                }
            }
            _ => {
                let mixed_v = gossip_average(&self.workers.iter().map(|s| &s.v).collect::<Vec<_>>(), w)?;
                for ((s, x), v) in self.workers.iter_mut().zip(mixed_x).zip(mixed_v) {
                    s.x = x;
                    s.v = v;
                }
            }
        }
        Ok(())
    }

    /// GT-DSUM epoch: local SUM steps on `m = lambda g + (1 - lambda) y`,
    /// gossip of `x` and `v`, pseudo-gradient `d = (x^(t) - x^(t+1)) / (K eta)`,
    /// then `y_i <- sum_j w_ij (y_j + d_j - d_prev_j)`.
    ///
    /// The first call bootstraps `y_i = grad F_i(x0; xi)` on a dedicated batch.
    pub fn gtdsum_epoch(&mut self, epoch: usize, p: &Problem<'_>) -> Result<()> {
        if self.hyper.algo != Algorithm::Gtdsum {
            return Err(Error::state("gtdsum_epoch called on a non-GT cohort"));
        }
        self.check_problem(p)?;
        if !self.tracker_ready {
            self.bootstrap_tracker(p)?;
        }
        self.local_phase(epoch, p)?;
        let w = self.schedule.lookup(epoch)?;

        let mixed_x = gossip_average(&self.workers.iter().map(|s| &s.x).collect::<Vec<_>>(), w)?;
        let mixed_v = gossip_average(&self.workers.iter().map(|s| &s.v).collect::<Vec<_>>(), w)?;
        let scale = 1.0 / (self.hyper.k_local as f64 * self.hyper.eta);
        let mut pseudo = Vec::with_capacity(self.workers.len());
        let mut tracked = Vec::with_capacity(self.workers.len());
        for (s, x_next) in self.workers.iter().zip(&mixed_x) {
            let d: Vec<f64> = s.x_epoch_start.iter().zip(x_next.iter()).map(|(a, b)| (a - b) * scale).collect();
            let z: Vec<f64> = s.y.iter().zip(&d).zip(s.d_prev.iter()).map(|((y, dn), dp)| y + dn - dp).collect();
            pseudo.push(ParamVector(d));
            tracked.push(z);
        }
        let mixed_y = gossip_average(&tracked, w)?;
        let k = self.hyper.k_local;
        for (((s, x), v), (y, d)) in
            self.workers.iter_mut().zip(mixed_x).zip(mixed_v).zip(mixed_y.into_iter().zip(pseudo))
        {
            guard(&y, epoch, s.id, k)?;
            s.x = x;
            s.v = v;
            s.y = y;
            s.d_prev = d;
        }
        Ok(())
    }

    fn bootstrap_tracker(&mut self, p: &Problem<'_>) -> Result<()> {
        let seed = self.seed;
        let mode = self.batch;
        let batches = for_each_worker(&self.pool, &mut self.workers, |s| {
            let shard = &p.shards[s.id];
            let batch = match mode {
                BatchMode::Minibatch(b) => {
                    let mut rng = RngStream::new(seed, s.id, 0, Purpose::TrackerBootstrap);
                    sample_minibatch(shard, b, &mut rng)?
                }
                BatchMode::Full => shard.indices.clone(),
            };
            let (_, g) = value_and_grad(p.oracle, &s.x, &batch, p.data)?;
            s.y = g;
            Ok(batch)
        })?;
        if self.trace_level != TraceLevel::Off {
            self.trace.bootstrap = batches;
        }
        self.tracker_ready = true;
        Ok(())
    }

    fn local_phase(&mut self, epoch: usize, p: &Problem<'_>) -> Result<()> {
        if epoch >= self.schedule.horizon() {
            return Err(Error::invalid(format!(
                "epoch {epoch} is beyond the schedule horizon {}",
                self.schedule.horizon()
            )));
        }
        let hyper = self.hyper;
        let seed = self.seed;
        let mode = self.batch;
        let level = self.trace_level;
        let records = for_each_worker(&self.pool, &mut self.workers, |s| {
            run_local_steps(s, &p.shards[s.id], p, &hyper, seed, epoch, mode, level)
        })?;
        if level != TraceLevel::Off {
            for r in records {
                self.trace.steps.extend(r);
            }
            self.trace.steps.sort_by_key(|s| (s.epoch, s.worker, s.step));
        }
        Ok(())
    }

    /// Runs epochs `0..epochs`, calling `after_epoch` once each epoch has
    /// finished. Stops at the first error (e.g. divergence).
    pub fn run<F>(&mut self, p: &Problem<'_>, epochs: usize, mut after_epoch: F) -> Result<()>
    where
        F: FnMut(&Cohort, usize) -> Result<()>,
    {
        if epochs == 0 {
            return Err(Error::invalid("number of epochs must be at least 1"));
        }
        if epochs > self.schedule.horizon() {
            return Err(Error::invalid(format!(
                "{epochs} epochs requested but the topology schedule covers {}",
                self.schedule.horizon()
            )));
        }
        for t in 0..epochs {
            self.step_epoch(t, p)?;
            after_epoch(self, t)?;
        }
        Ok(())
    }
}

/// Applies `f` to every worker, in parallel when a pool is configured.
/// Returns the outputs in worker order, or the error of the lowest-indexed
/// failing worker.
fn for_each_worker<T, F>(pool: &Option<Arc<ThreadPool>>, workers: &mut [WorkerState], f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut WorkerState) -> Result<T> + Sync + Send,
{
    let results: Vec<Result<T>> = match pool {
        Some(pool) => pool.install(|| workers.par_iter_mut().map(&f).collect()),
        None => workers.iter_mut().map(&f).collect(),
    };
    results.into_iter().collect()
}

#[allow(clippy::too_many_arguments)]
fn run_local_steps(
    s: &mut WorkerState,
    shard: &Shard,
    p: &Problem<'_>,
    hyper: &SumHyper,
    seed: u64,
    epoch: usize,
    mode: BatchMode,
    level: TraceLevel,
) -> Result<Vec<LocalStep>> {
    s.rng = RngStream::new(seed, s.id, epoch, Purpose::Minibatch);
    s.x_epoch_start = s.x.clone();
    let mut records = Vec::new();
    for step in 0..hyper.k_local {
        let batch = match mode {
            BatchMode::Minibatch(b) => sample_minibatch(shard, b, &mut s.rng)?,
            BatchMode::Full => shard.indices.clone(),
        };
        let (loss, g) = value_and_grad(p.oracle, &s.x, &batch, p.data)?;
        if !loss.is_finite() {
            return Err(Error::Divergence { epoch, worker: s.id, step, reason: format!("loss is {loss}") });
        }
        let before = (level == TraceLevel::Full).then(|| (s.x.clone(), s.v.clone()));
        let direction = match hyper.algo {
            Algorithm::Vanilla | Algorithm::Dsum => {
                sum_local_step(s, &g, hyper, epoch, step)?;
                g
            }
            Algorithm::Gtdsum => {
                let lam = hyper.lambda;
                let m: Vec<f64> = g.iter().zip(s.y.iter()).map(|(gk, yk)| lam * gk + (1.0 - lam) * yk).collect();
                sum_local_step(s, &m, hyper, epoch, step)?;
                ParamVector(m)
            }
        };
        if level != TraceLevel::Off {
            let states = before.map(|(x_before, v_before)| StepStates {
                x_before,
                v_before,
                direction,
                x_after: s.x.clone(),
                v_after: s.v.clone(),
            });
            records.push(LocalStep { worker: s.id, epoch, step, batch, states });
        }
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SyntheticSpec;
    use crate::objectives::{full_gradient, SyntheticNonConvex};
    use crate::topology::{build_full_mesh, build_ring, MixingMatrix};

    struct Fixture {
        ds: Dataset,
        shards: Vec<Shard>,
        model: SyntheticNonConvex,
    }

    impl Fixture {
        fn new(n: usize) -> Self {
            let ds = SyntheticSpec { classes: 4, dim: 3, samples: 40 * n, blob_stddev: 0.5 }.generate(2).unwrap();
            let shards =
                (0..n).map(|w| Shard { owner: w, indices: (0..ds.len()).filter(|i| i % n == w).collect() }).collect();
            Self { ds, shards, model: SyntheticNonConvex::new(3, 1.5) }
        }

        fn problem(&self) -> Problem<'_> {
            Problem { oracle: &self.model, shards: &self.shards, data: &self.ds }
        }
    }

    fn x0() -> ParamVector {
        ParamVector(vec![1.0, -0.5, 2.0])
    }

    #[test]
    fn one_step_full_mesh_is_centralized_sgd() {
        // Two workers on identical data, K = 1, beta = 0: one gossip round
        // equals a single SGD step on the averaged gradient.
        let fx = Fixture::new(1);
        let shards = vec![fx.shards[0].clone(), Shard { owner: 1, ..fx.shards[0].clone() }];
        let p = Problem { oracle: &fx.model, shards: &shards, data: &fx.ds };
        let hyper = SumHyper { beta: 0.0, k_local: 1, ..SumHyper::new(Algorithm::Dsum, 0.05) };
        let sched = TopologySchedule::constant(build_full_mesh(2).unwrap(), 1).unwrap();
        let mut c = Cohort::new(&x0(), sched, hyper, 9, BatchMode::Full).unwrap();
        c.dsum_epoch(0, &p).unwrap();
        let g = full_gradient(&fx.model, &x0(), &shards[0], &fx.ds).unwrap();
        for w in c.workers() {
            for k in 0..3 {
                assert!((w.x[k] - (x0()[k] - 0.05 * g[k])).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn identity_topology_runs_independent_trajectories() {
        let fx = Fixture::new(2);
        let p = fx.problem();
        let hyper = SumHyper::new(Algorithm::Dsum, 0.01);
        let sched = TopologySchedule::constant(MixingMatrix::identity(2), 5).unwrap();
        let mut c = Cohort::new(&x0(), sched, hyper, 4, BatchMode::Minibatch(4)).unwrap();
        for t in 0..5 {
            c.dsum_epoch(t, &p).unwrap();
        }
        // Re-run each worker alone (single-worker cohort on its own shard).
        for i in 0..2 {
            let mut solo = WorkerState::new(i, &x0(), RngStream::new(4, i, 0, Purpose::Minibatch));
            for t in 0..5 {
                run_local_steps(&mut solo, &fx.shards[i], &p, &hyper, 4, t, BatchMode::Minibatch(4), TraceLevel::Off)
                    .unwrap();
            }
            assert_eq!(solo.x, c.workers()[i].x);
            assert_eq!(solo.v, c.workers()[i].v);
        }
    }

    #[test]
    fn vanilla_resets_v_and_single_worker_gossip_is_identity() {
        let fx = Fixture::new(1);
        let p = fx.problem();
        let sched = TopologySchedule::constant(build_full_mesh(1).unwrap(), 3).unwrap();
        let mut c =
            Cohort::new(&x0(), sched, SumHyper::new(Algorithm::Vanilla, 0.02), 1, BatchMode::Minibatch(8)).unwrap();
        for t in 0..3 {
            c.dsum_epoch(t, &p).unwrap();
            assert_eq!(c.workers()[0].x, c.workers()[0].v);
        }
    }

    #[test]
    fn epoch_functions_check_algorithm() {
        let fx = Fixture::new(3);
        let p = fx.problem();
        let sched = TopologySchedule::constant(build_ring(3).unwrap(), 2).unwrap();
        let mut gt =
            Cohort::new(&x0(), sched.clone(), SumHyper::new(Algorithm::Gtdsum, 0.01), 1, BatchMode::Full).unwrap();
        assert!(matches!(gt.dsum_epoch(0, &p), Err(Error::State(_))));
        let mut ds = Cohort::new(&x0(), sched, SumHyper::new(Algorithm::Dsum, 0.01), 1, BatchMode::Full).unwrap();
        assert!(matches!(ds.gtdsum_epoch(0, &p), Err(Error::State(_))));
        assert!(ds.dsum_epoch(2, &p).is_err());
        assert!(ds.run(&p, 0, |_, _| Ok(())).is_err());
        assert!(ds.run(&p, 3, |_, _| Ok(())).is_err());
    }

    #[test]
    fn lambda_one_uses_raw_gradient() {
        let fx = Fixture::new(3);
        let p = fx.problem();
        let sched = TopologySchedule::constant(build_ring(3).unwrap(), 4).unwrap();
        let base = SumHyper { lambda: 1.0, ..SumHyper::new(Algorithm::Gtdsum, 0.01) };
        let mut gt = Cohort::new(&x0(), sched.clone(), base, 6, BatchMode::Minibatch(5)).unwrap();
        let mut ds =
            Cohort::new(&x0(), sched, SumHyper { algo: Algorithm::Dsum, ..base }, 6, BatchMode::Minibatch(5)).unwrap();
        for t in 0..4 {
            gt.gtdsum_epoch(t, &p).unwrap();
            ds.dsum_epoch(t, &p).unwrap();
        }
        for (a, b) in gt.workers().iter().zip(ds.workers()) {
            assert_eq!(a.x, b.x);
            assert_eq!(a.v, b.v);
            assert_ne!(a.y, ParamVector::zeros(3));
        }
    }

    #[test]
    fn parallel_matches_sequential() {
        let fx = Fixture::new(6);
        let p = fx.problem();
        let sched = TopologySchedule::constant(build_ring(6).unwrap(), 5).unwrap();
        let hyper = SumHyper::new(Algorithm::Gtdsum, 0.01);
        let mut a = Cohort::new(&x0(), sched.clone(), hyper, 3, BatchMode::Minibatch(4)).unwrap();
        let mut b = Cohort::new(&x0(), sched, hyper, 3, BatchMode::Minibatch(4)).unwrap().with_threads(4).unwrap();
        a.run(&p, 5, |_, _| Ok(())).unwrap();
        b.run(&p, 5, |_, _| Ok(())).unwrap();
        for (x, y) in a.workers().iter().zip(b.workers()) {
            assert_eq!(x.x, y.x);
            assert_eq!(x.y, y.y);
        }
    }

    #[test]
    fn trace_records_batches_in_order() {
        let fx = Fixture::new(3);
        let p = fx.problem();
        let sched = TopologySchedule::constant(build_ring(3).unwrap(), 2).unwrap();
        let hyper = SumHyper { k_local: 2, ..SumHyper::new(Algorithm::Gtdsum, 0.01) };
        let mut c = Cohort::new(&x0(), sched, hyper, 3, BatchMode::Minibatch(4))
            .unwrap()
            .with_threads(3)
            .unwrap()
            .with_trace(TraceLevel::Batches);
        c.run(&p, 2, |_, _| Ok(())).unwrap();
        assert_eq!(c.trace().steps.len(), 2 * 3 * 2);
        assert_eq!(c.trace().bootstrap.len(), 3);
        for w in 0..3 {
            let b = c.trace().batch(w, 1, 1).unwrap();
            assert!(b.iter().all(|i| fx.shards[w].indices.contains(i)));
        }
    }
}
