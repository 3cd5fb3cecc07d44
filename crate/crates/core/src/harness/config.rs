use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::data::SyntheticSpec;
use crate::error::{Error, Result};
use crate::optim::{Algorithm, SumHyper};

/// Step size used when the config gives none, per model family. Chosen by
/// sweeping the grid `{1e-2, 10^-1.5, 1e-1, 10^-0.5}` on the bundled
/// synthetic tasks with 8 workers on a ring.
pub fn default_eta(model: ModelKind) -> f64 {
    match model {
        ModelKind::Synthetic => 0.01,
        ModelKind::Logreg => 0.1,
        ModelKind::Mlp => 0.1,
    }
}

/// The step-size grid reproduced by `--sweep eta=grid`.
pub const ETA_GRID: [f64; 4] = [1e-2, 0.031_622_776_601_683_79, 1e-1, 0.31622776601683794];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Synthetic,
    Logreg,
    Mlp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyKind {
    FullMesh,
    Ring,
    Star,
    Custom,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleEntry {
    /// Exclusive end of this entry's epoch range.
    pub until_epoch: usize,
    pub topology: TopologyKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Synthetic,
    Idx,
    Csv,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default = "default_source")]
    pub source: DataSource,
    /// Training file (`idx` images or `csv`).
    pub path: Option<PathBuf>,
    /// IDX label file for `path`.
    pub labels: Option<PathBuf>,
    pub test_path: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
    /// Keep only the first `max_samples` training samples.
    pub max_samples: Option<usize>,
    pub synthetic: Option<SyntheticSpec>,
    /// Held-out samples drawn for the synthetic source.
    #[serde(default = "default_test_samples")]
    pub test_samples: usize,
    /// Dirichlet concentration of the label-skewed partition.
    #[serde(default = "default_dirichlet")]
    pub dirichlet: f64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    /// Use every sample of the shard in each local step.
    #[serde(default)]
    pub full_batch: bool,
}

fn default_source() -> DataSource {
    DataSource::Synthetic
}
fn default_test_samples() -> usize {
    1000
}
fn default_dirichlet() -> f64 {
    0.5
}
fn default_batch_size() -> usize {
    32
}

#[derive(Clone, Copy, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpConfig {
    pub hidden: usize,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self { hidden: 32 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonConvexConfig {
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    #[serde(default = "default_init_radius")]
    pub init_radius: f64,
}

fn default_amplitude() -> f64 {
    2.0
}
fn default_init_radius() -> f64 {
    3.0
}

impl Default for NonConvexConfig {
    fn default() -> Self {
        Self { amplitude: default_amplitude(), init_radius: default_init_radius() }
    }
}

/// A complete, validated experiment description.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub workers: usize,
    pub epochs: usize,
    #[serde(default = "default_algo")]
    pub algo: Algorithm,

    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    /// Falls back to [`default_eta`] for the model.
    pub eta: Option<f64>,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_k_local")]
    pub k_local: usize,

    /// Single topology for every epoch. With neither this nor `schedule`,
    /// the first half of the epochs runs on a full mesh and the rest on a ring.
    pub topology: Option<TopologyKind>,
    pub custom_adjacency: Option<PathBuf>,
    pub schedule: Option<Vec<ScheduleEntry>>,

    pub model: ModelKind,
    #[serde(default)]
    pub mlp: MlpConfig,
    #[serde(default)]
    pub nonconvex: NonConvexConfig,
    pub data: DataConfig,

    /// Tracker error is computed every `diag_every` epochs (and at epoch 0).
    #[serde(default = "default_diag_every")]
    pub diag_every: usize,
    /// Append a `stoch_var` column with the resampled gradient variance.
    #[serde(default)]
    pub variance: bool,
    #[serde(default = "default_threads")]
    pub threads: usize,
    pub output: Option<PathBuf>,
}

fn default_algo() -> Algorithm {
    Algorithm::Dsum
}
fn default_alpha() -> f64 {
    SumHyper::DEFAULT_ALPHA
}
fn default_beta() -> f64 {
    SumHyper::DEFAULT_BETA
}
fn default_lambda() -> f64 {
    SumHyper::DEFAULT_LAMBDA
}
fn default_k_local() -> usize {
    SumHyper::DEFAULT_K_LOCAL
}
fn default_diag_every() -> usize {
    1
}
fn default_threads() -> usize {
    1
}

fn config_err(key: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("{key}: {msg}"))
}

impl RunConfig {
    pub fn hyper(&self) -> SumHyper {
        SumHyper {
            alpha: self.alpha,
            beta: self.beta,
            eta: self.eta.unwrap_or_else(|| default_eta(self.model)),
            lambda: self.lambda,
            k_local: self.k_local,
            algo: self.algo,
        }
    }

    /// The `(until_epoch, topology)` list in force, defaults applied.
    pub fn resolved_schedule(&self) -> Vec<ScheduleEntry> {
        if let Some(s) = &self.schedule {
            return s.clone();
        }
        if let Some(t) = self.topology {
            return vec![ScheduleEntry { until_epoch: self.epochs, topology: t }];
        }
        let half = self.epochs / 2;
        let mut out = Vec::new();
        if half > 0 {
            out.push(ScheduleEntry { until_epoch: half, topology: TopologyKind::FullMesh });
        }
        out.push(ScheduleEntry { until_epoch: self.epochs, topology: TopologyKind::Ring });
        out
    }

    /// Cross-field checks. `base` resolves relative file paths.
    pub fn validate(&self, base: &Path) -> Result<()> {
        if self.workers == 0 {
            return Err(config_err("workers", "must be at least 1"));
        }
        if self.epochs == 0 {
            return Err(config_err("epochs", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.beta) {
            return Err(config_err("beta", format!("must lie in [0, 1), got {}", self.beta)));
        }
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(config_err("alpha", format!("must be a finite value >= 0, got {}", self.alpha)));
        }
        if let Some(eta) = self.eta {
            if !(eta > 0.0) || !eta.is_finite() {
                return Err(config_err("eta", format!("must be positive, got {eta}")));
            }
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(config_err("lambda", format!("must lie in [0, 1], got {}", self.lambda)));
        }
        if self.k_local == 0 {
            return Err(config_err("k_local", "must be at least 1"));
        }
        if self.diag_every == 0 {
            return Err(config_err("diag_every", "must be at least 1"));
        }
        if self.threads == 0 {
            return Err(config_err("threads", "must be at least 1"));
        }
        if self.mlp.hidden == 0 {
            return Err(config_err("mlp.hidden", "must be at least 1"));
        }
        if !(self.nonconvex.amplitude >= 0.0) || !(self.nonconvex.init_radius > 0.0) {
            return Err(config_err("nonconvex", "amplitude must be >= 0 and init_radius > 0"));
        }
        if self.topology.is_some() && self.schedule.is_some() {
            return Err(config_err("topology", "give either topology or schedule, not both"));
        }

        let sched = self.resolved_schedule();
        let mut start = 0;
        for (k, e) in sched.iter().enumerate() {
            if e.until_epoch <= start {
                return Err(config_err(
                    &format!("schedule[{k}].until_epoch"),
                    format!("{} does not extend past epoch {start}", e.until_epoch),
                ));
            }
            start = e.until_epoch;
        }
        if start < self.epochs {
            return Err(config_err(
                "schedule",
                format!("covers epochs [0, {start}) but the run needs [0, {})", self.epochs),
            ));
        }
        let uses_custom = sched.iter().any(|e| e.topology == TopologyKind::Custom);
        match (&self.custom_adjacency, uses_custom) {
            (None, true) => return Err(config_err("custom_adjacency", "required by topology \"custom\"")),
            (Some(p), _) => require_file("custom_adjacency", base, p)?,
            _ => {}
        }
        if self.workers < 3 && sched.iter().any(|e| e.topology == TopologyKind::Ring) {
            return Err(config_err("topology", "a ring needs at least 3 workers"));
        }

        let d = &self.data;
        if !(d.dirichlet > 0.0) || !d.dirichlet.is_finite() {
            return Err(config_err("data.dirichlet", format!("must be positive, got {}", d.dirichlet)));
        }
        if d.batch_size == 0 {
            return Err(config_err("data.batch_size", "must be at least 1"));
        }
        match d.source {
            DataSource::Synthetic => {
                let s = d.synthetic.ok_or_else(|| config_err("data.synthetic", "required by source \"synthetic\""))?;
                if s.classes == 0 || s.dim == 0 || s.samples == 0 {
                    return Err(config_err("data.synthetic", "classes, dim and samples must be at least 1"));
                }
                if s.samples < self.workers {
                    return Err(config_err("data.synthetic.samples", "fewer samples than workers"));
                }
            }
            DataSource::Idx => {
                let p = d.path.as_ref().ok_or_else(|| config_err("data.path", "required by source \"idx\""))?;
                require_file("data.path", base, p)?;
                let l = d.labels.as_ref().ok_or_else(|| config_err("data.labels", "required by source \"idx\""))?;
                require_file("data.labels", base, l)?;
                match (&d.test_path, &d.test_labels) {
                    (Some(tp), Some(tl)) => {
                        require_file("data.test_path", base, tp)?;
                        require_file("data.test_labels", base, tl)?;
                    }
                    (None, None) => {}
                    _ => {
                        return Err(config_err(
                            "data.test_labels",
                            "idx test data needs both test_path and test_labels",
                        ))
                    }
                }
            }
            DataSource::Csv => {
                let p = d.path.as_ref().ok_or_else(|| config_err("data.path", "required by source \"csv\""))?;
                require_file("data.path", base, p)?;
                if let Some(tp) = &d.test_path {
                    require_file("data.test_path", base, tp)?;
                }
            }
        }
        Ok(())
    }
}

fn require_file(key: &str, base: &Path, p: &Path) -> Result<()> {
    let full = base.join(p);
    if full.is_file() {
        Ok(())
    } else {
        Err(config_err(key, format!("file {} does not exist", full.display())))
    }
}

/// Parses `text`, applies `key=value` overrides, and validates.
/// `origin` names the source in messages; relative paths resolve against
/// `base`.
pub fn parse_config(text: &str, origin: &str, base: &Path, overrides: &[String]) -> Result<RunConfig> {
    let mut table: toml::Table =
        text.parse().map_err(|e: toml::de::Error| Error::Config(format!("{origin}: {}", e.to_string().trim_end())))?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let cfg: RunConfig = table
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(format!("{origin}: {}", e.to_string().trim_end())))?;
    cfg.validate(base)?;
    Ok(cfg)
}

/// Reads and validates a config file. Relative paths inside it resolve
/// against the file's directory.
pub fn load_config(path: &Path, overrides: &[String]) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config(&text, &path.display().to_string(), base, overrides)
}

/// `a.b.c=value`: the value is read as a TOML literal, or as a bare string
/// when it does not parse as one.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) =
        spec.split_once('=').ok_or_else(|| Error::Config(format!("override {spec:?} is not of the form key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    if key.is_empty() {
        return Err(Error::Config(format!("override {spec:?} has an empty key")));
    }
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("just parsed"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.split('.').collect();
    let mut cur = table;
    for part in &parts[..parts.len() - 1] {
        let entry = cur.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| Error::Config(format!("override {key}: {part} is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
model = "synthetic"
workers = 4
epochs = 10

[data.synthetic]
classes = 4
dim = 3
samples = 100
"#;

    fn parse(text: &str, overrides: &[&str]) -> Result<RunConfig> {
        let o: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
        parse_config(text, "test.toml", Path::new("."), &o)
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse(MINIMAL, &[]).unwrap();
        let h = c.hyper();
        assert_eq!((h.alpha, h.beta, h.lambda, h.k_local), (2.0, 0.9, 0.8, 10));
        assert_eq!(h.eta, default_eta(ModelKind::Synthetic));
        assert_eq!(c.algo, Algorithm::Dsum);
        let s = c.resolved_schedule();
        assert_eq!(s.len(), 2);
        assert_eq!((s[0].until_epoch, s[0].topology), (5, TopologyKind::FullMesh));
        assert_eq!((s[1].until_epoch, s[1].topology), (10, TopologyKind::Ring));
    }

    #[test]
    fn beta_one_is_rejected() {
        let err = parse(MINIMAL, &["beta=1.0"]).unwrap_err();
        assert!(err.to_string().contains("beta"), "{err}");
    }

    #[test]
    fn unknown_key_is_named() {
        let text = format!("alhpa = 2.0\n{MINIMAL}");
        let err = parse(&text, &[]).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("alhpa"), "{err}");
    }

    #[test]
    fn syntax_errors_carry_a_line() {
        let err = parse("model = \"synthetic\"\nworkers = = 4\n", &[]).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn overrides_apply_before_validation() {
        let c = parse(MINIMAL, &["alpha=15", "data.batch_size=7", "algo=dsum", "topology=star"]).unwrap();
        assert_eq!(c.alpha, 15.0);
        assert_eq!(c.data.batch_size, 7);
        assert_eq!(c.algo, Algorithm::Dsum);
        assert_eq!(c.resolved_schedule()[0].topology, TopologyKind::Star);
        assert!(parse(MINIMAL, &["noequals"]).is_err());
        assert!(parse(MINIMAL, &["workers.x=1"]).is_err());
    }

    #[test]
    fn schedule_must_cover_the_run() {
        let text = format!(
            "schedule = [{{ until_epoch = 4, topology = \"full_mesh\" }}, {{ until_epoch = 8, topology = \"ring\" }}]\n{MINIMAL}"
        );
        let err = parse(&text, &[]).unwrap_err();
        assert!(err.to_string().contains("schedule"), "{err}");

        let ok = text.replace("until_epoch = 8", "until_epoch = 10");
        assert_eq!(parse(&ok, &[]).unwrap().resolved_schedule().len(), 2);
    }

    #[test]
    fn cross_field_checks() {
        assert!(parse(MINIMAL, &["workers=0"]).is_err());
        assert!(parse(MINIMAL, &["topology=custom"]).is_err());
        assert!(parse(MINIMAL, &["topology=custom", "custom_adjacency=\"/no/such/file\""]).is_err());
        assert!(parse(MINIMAL, &["workers=2", "topology=ring"]).is_err());
        assert!(parse(MINIMAL, &["data.source=idx"]).is_err());
        assert!(parse(MINIMAL, &["data.dirichlet=0"]).is_err());
        assert!(parse(MINIMAL, &["lambda=1.5"]).is_err());
    }
}
