use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::config::{DataSource, ModelKind, RunConfig, TopologyKind};
use crate::data::{dirichlet_partition, load_csv, load_idx_pair, Dataset, Purpose, RngStream, Shard};
use crate::diagnostics::{format_float, measure, stochastic_variance, Measure, MetricsRecord, CSV_HEADER};
use crate::error::{Error, Result};
use crate::objectives::{LogisticRegression, MlpOneHidden, Model, SyntheticNonConvex};
use crate::optim::{BatchMode, Cohort, Problem, TraceLevel};
use crate::topology::{
    build_full_mesh, build_metropolis_hastings, build_ring, Adjacency, MixingMatrix, TopologySchedule,
};
use crate::vector::ParamVector;

/// Everything a run needs, built once from a config.
pub struct Experiment {
    pub config: RunConfig,
    pub train: Dataset,
    pub test: Option<Dataset>,
    pub shards: Vec<Shard>,
    pub model: Model,
    pub schedule: TopologySchedule,
    pub x0: ParamVector,
}

/// What happened in a finished (or diverged) run.
#[derive(Debug)]
pub struct RunSummary {
    pub records: Vec<MetricsRecord>,
    /// The divergence that stopped the run early, if any.
    pub diverged: Option<Error>,
}

fn build_matrix(kind: TopologyKind, n: usize, custom: Option<&Adjacency>) -> Result<MixingMatrix> {
    match kind {
        TopologyKind::FullMesh => build_full_mesh(n),
        TopologyKind::Ring => build_ring(n),
        TopologyKind::Star => build_metropolis_hastings(&Adjacency::star(n)),
        TopologyKind::Custom => {
            let adj = custom.ok_or_else(|| Error::Config("custom_adjacency: missing".into()))?;
            if adj.n() != n {
                return Err(Error::Config(format!("custom_adjacency: graph has {} nodes but workers = {n}", adj.n())));
            }
            build_metropolis_hastings(adj)
        }
    }
}

impl Experiment {
    /// `base` resolves relative paths in the config.
    pub fn build(config: &RunConfig, base: &Path) -> Result<Self> {
        let n = config.workers;
        let resolve = |p: &PathBuf| base.join(p);
        let d = &config.data;
        let (mut train, test) = match d.source {
            DataSource::Synthetic => {
                let spec = d.synthetic.ok_or_else(|| Error::Config("data.synthetic: missing".into()))?;
                let test = match config.model {
                    ModelKind::Synthetic => None,
                    _ => Some(spec.generate_test(config.seed, d.test_samples)?),
                };
                (spec.generate(config.seed)?, test)
            }
            DataSource::Idx => {
                let (p, l) = (d.path.as_ref(), d.labels.as_ref());
                let train = load_idx_pair(&resolve(p.expect("validated")), &resolve(l.expect("validated")))?;
                let test = match (&d.test_path, &d.test_labels) {
                    (Some(tp), Some(tl)) => Some(load_idx_pair(&resolve(tp), &resolve(tl))?),
                    _ => None,
                };
                (train, test)
            }
            DataSource::Csv => {
                let train = load_csv(&resolve(d.path.as_ref().expect("validated")))?;
                let test = d.test_path.as_ref().map(|p| load_csv(&resolve(p))).transpose()?;
                (train, test)
            }
        };
        if let Some(m) = d.max_samples {
            train = train.truncated(m);
        }
        if train.len() < n {
            return Err(Error::Config(format!("data: {} samples for {n} workers", train.len())));
        }
        let test = match (config.model, test) {
            (ModelKind::Synthetic, _) => None,
            (_, t) => t,
        };
        if let Some(t) = &test {
            if t.dim() != train.dim() {
                return Err(Error::Config("data: test and training feature dimensions differ".into()));
            }
        }

        let model = match config.model {
            ModelKind::Synthetic => Model::Synthetic(
                SyntheticNonConvex::new(train.dim(), config.nonconvex.amplitude)
                    .with_init_radius(config.nonconvex.init_radius),
            ),
            ModelKind::Logreg => Model::Logreg(LogisticRegression::new(train.dim(), train.classes())),
            ModelKind::Mlp => Model::Mlp(MlpOneHidden::new(train.dim(), config.mlp.hidden, train.classes())),
        };

        let mut rng = RngStream::new(config.seed, 0, 0, Purpose::Partition);
        let shards = dirichlet_partition(&train, n, d.dirichlet, &mut rng)?;

        let custom = config.custom_adjacency.as_ref().map(|p| Adjacency::load(&resolve(p))).transpose()?;
        let parts = config
            .resolved_schedule()
            .into_iter()
            .map(|e| Ok((e.until_epoch, build_matrix(e.topology, n, custom.as_ref())?)))
            .collect::<Result<Vec<_>>>()?;
        let schedule = TopologySchedule::from_boundaries(parts)?;
        let x0 = model.init_params(config.seed);

        Ok(Self { config: config.clone(), train, test, shards, model, schedule, x0 })
    }

    pub fn problem(&self) -> Problem<'_> {
        Problem { oracle: &self.model, shards: &self.shards, data: &self.train }
    }

    pub fn batch_mode(&self) -> BatchMode {
        if self.config.data.full_batch {
            BatchMode::Full
        } else {
            BatchMode::Minibatch(self.config.data.batch_size)
        }
    }

    pub fn cohort(&self) -> Result<Cohort> {
        Cohort::new(&self.x0, self.schedule.clone(), self.config.hyper(), self.config.seed, self.batch_mode())?
            .with_threads(self.config.threads)
    }

    /// Same as [`cohort`](Self::cohort) with per-step recording enabled.
    pub fn traced_cohort(&self, level: TraceLevel) -> Result<Cohort> {
        Ok(self.cohort()?.with_trace(level))
    }

    pub fn csv_header(&self) -> String {
        if self.config.variance {
            format!("{CSV_HEADER},stoch_var")
        } else {
            CSV_HEADER.to_string()
        }
    }

    /// Runs all epochs, writing one CSV row per epoch and flushing after each.
    ///
    /// Divergence ends the run early and is reported in the summary rather
    /// than as an error, so the rows already written stay valid.
    pub fn run<W: Write>(&self, out: &mut W) -> Result<RunSummary> {
        let io = |source| Error::Io { path: PathBuf::from("<metrics>"), source };
        writeln!(out, "{}", self.csv_header()).map_err(io)?;
        out.flush().map_err(io)?;
        let p = self.problem();
        let mut cohort = self.cohort()?;
        let mut records = Vec::with_capacity(self.config.epochs);
        let tracked = self.config.algo == crate::optim::Algorithm::Gtdsum;
        let every = self.config.diag_every;
        let result = cohort.run(&p, self.config.epochs, |c, epoch| {
            let opts = Measure { test: self.test.as_ref(), tracker: tracked && epoch % every == 0 };
            let rec = measure(c, &p, epoch, opts)?;
            let mut line = rec.csv_row();
            if self.config.variance {
                let v = stochastic_variance(
                    p.oracle,
                    &c.mean_model(),
                    p.shards,
                    p.data,
                    self.config.data.batch_size,
                    self.config.seed,
                    epoch,
                )?;
                line.push(',');
                line.push_str(&format_float(v));
            }
            writeln!(out, "{line}").map_err(io)?;
            out.flush().map_err(io)?;
            records.push(rec);
            Ok(())
        });
        match result {
            Ok(()) => Ok(RunSummary { records, diverged: None }),
            Err(e) if e.is_divergence() => Ok(RunSummary { records, diverged: Some(e) }),
            Err(e) => Err(e),
        }
    }

    /// Runs into `path`, creating parent directories as needed.
    pub fn run_to_file(&self, path: &Path) -> Result<RunSummary> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.to_path_buf(), source })?;
        }
        let file = File::create(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        let mut w = BufWriter::new(file);
        let summary = self.run(&mut w)?;
        w.flush().map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        Ok(summary)
    }
}

/// Builds and runs `config` into an in-memory CSV.
pub fn run_to_string(config: &RunConfig, base: &Path) -> Result<(String, RunSummary)> {
    let exp = Experiment::build(config, base)?;
    let mut buf = Vec::new();
    let summary = exp.run(&mut buf)?;
    Ok((String::from_utf8(buf).expect("CSV is ASCII"), summary))
}
