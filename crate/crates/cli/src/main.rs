use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dsum_core::harness::{compare_runs, load_config, Experiment, OrderingAssertion, RunConfig, ETA_GRID};
use dsum_core::Error;

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_DIVERGED: u8 = 3;

/// Decentralized momentum SGD simulator.
#[derive(Parser, Debug)]
#[command(name = "dsum", version, args_conflicts_with_subcommands = true)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compare the final epochs of two metrics CSVs.
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// Ordering to check on the final epoch, e.g. `test_acc:ge` for A >= B.
        #[arg(long = "assert")]
        assertion: Option<String>,
    },
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// vanilla, dsum or gtdsum.
    #[arg(long)]
    algo: Option<String>,
    /// Metrics CSV; defaults to the config's `output`, else standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override any config key, e.g. `--set alpha=15 --set data.batch_size=64`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Run once per value, e.g. `eta=0.01,0.1` or `eta=grid`; each run writes
    /// `<out stem>.<key>-<value>.csv`.
    #[arg(long, value_name = "KEY=V1,V2,...")]
    sweep: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Some(Command::Compare { a, b, assertion }) => compare(&a, &b, assertion.as_deref()),
        None => run(cli.run),
    }
}

fn compare(a: &Path, b: &Path, assertion: Option<&str>) -> ExitCode {
    let assertion = match assertion.map(str::parse::<OrderingAssertion>).transpose() {
        Ok(x) => x,
        Err(e) => return fail(&e),
    };
    match compare_runs(a, b, assertion) {
        Ok(report) => {
            print!("{report}");
            if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_FAILURE)
            }
        }
        Err(e) => fail(&e),
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Divergence { .. } => EXIT_DIVERGED,
        Error::Io { .. } => EXIT_FAILURE,
        _ => EXIT_CONFIG,
    }
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(exit_code(e))
}

fn sweep_values(spec: &str) -> Result<(String, Vec<String>), Error> {
    let (key, values) =
        spec.split_once('=').ok_or_else(|| Error::Config(format!("--sweep {spec:?} is not of the form key=v1,v2")))?;
    let values: Vec<String> = if key == "eta" && values == "grid" {
        ETA_GRID.iter().map(|v| v.to_string()).collect()
    } else {
        values.split(',').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect()
    };
    if values.is_empty() {
        return Err(Error::Config(format!("--sweep {spec:?} lists no values")));
    }
    Ok((key.to_string(), values))
}

fn run(args: RunArgs) -> ExitCode {
    let Some(config_path) = args.config.as_deref() else {
        eprintln!("error: --config is required (see --help)");
        return ExitCode::from(EXIT_CONFIG);
    };
    let mut overrides = args.overrides.clone();
    if let Some(seed) = args.seed {
        overrides.push(format!("seed={seed}"));
    }
    if let Some(algo) = &args.algo {
        overrides.push(format!("algo=\"{algo}\""));
    }

    let Some(spec) = args.sweep.as_deref() else {
        return match run_once(config_path, &overrides, args.out.clone()) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => fail(&e),
        };
    };
    let (key, values) = match sweep_values(spec) {
        Ok(x) => x,
        Err(e) => return fail(&e),
    };
    let mut worst = 0u8;
    for value in values {
        let mut o = overrides.clone();
        o.push(format!("{key}={value}"));
        let out = match sweep_output(config_path, &o, args.out.as_deref(), &key, &value) {
            Ok(p) => p,
            Err(e) => return fail(&e),
        };
        eprintln!("sweep {key}={value} -> {}", out.display());
        if let Err(e) = run_once(config_path, &o, Some(out)) {
            eprintln!("error: {e}");
            let code = exit_code(&e);
            if code != EXIT_DIVERGED {
                return ExitCode::from(code);
            }
            worst = worst.max(code);
        }
    }
    ExitCode::from(worst)
}

fn sweep_output(
    config: &Path,
    overrides: &[String],
    out: Option<&Path>,
    key: &str,
    value: &str,
) -> Result<PathBuf, Error> {
    let base = match out {
        Some(p) => p.to_path_buf(),
        None => read_config(config, overrides)?
            .output
            .map(|p| config.parent().unwrap_or(Path::new(".")).join(p))
            .ok_or_else(|| Error::Config("--sweep needs --out or an `output` key".into()))?,
    };
    let stem = base.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "metrics".into());
    Ok(base.with_file_name(format!("{stem}.{key}-{value}.csv")))
}

/// Like `load_config`, but an unreadable config file is a config error.
fn read_config(path: &Path, overrides: &[String]) -> Result<RunConfig, Error> {
    load_config(path, overrides).map_err(|e| match e {
        Error::Io { path, source } => Error::Config(format!("{}: {source}", path.display())),
        e => e,
    })
}

fn describe(exp: &Experiment, cfg: &RunConfig) {
    let mut line = String::from("rho:");
    for (range, m) in exp.schedule.entries() {
        line.push_str(&format!(" {:.6} ({}, epochs {}..{})", m.rho(), m.label(), range.start, range.end));
    }
    eprintln!("{line}");
    eprintln!("eta: {}", cfg.hyper().eta);
}

fn run_once(config_path: &Path, overrides: &[String], out: Option<PathBuf>) -> Result<(), Error> {
    let cfg = read_config(config_path, overrides)?;
    let base = config_path.parent().unwrap_or(Path::new("."));
    let exp = Experiment::build(&cfg, base)?;
    describe(&exp, &cfg);
    let out = out.or_else(|| cfg.output.as_ref().map(|p| base.join(p)));
    let summary = match &out {
        Some(path) => exp.run_to_file(path)?,
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            let s = exp.run(&mut lock)?;
            lock.flush().map_err(|source| Error::Io { path: "<stdout>".into(), source })?;
            s
        }
    };
    match summary.diverged {
        Some(e) => Err(e),
        None => Ok(()),
    }
}
