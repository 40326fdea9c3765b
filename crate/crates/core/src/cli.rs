//! The `roipca` command line: `run`, `fit` and `compare`.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{ArgAction, Args, Parser, Subcommand};

use crate::baselines::column_mean;
use crate::bench::{
    emit_results, linear_fit, load_csv_dataset, run_experiment, runtime_sweep, AlgorithmSpec, CsvOptions,
    ExperimentResult, ExperimentSpec, Generator, Tracker,
};
use crate::error::{Error, Result};

/// Exit status for usage, configuration and I/O failures.
pub const EXIT_USAGE: i32 = 2;
/// Exit status for failures inside a computation.
pub const EXIT_FAILURE: i32 = 1;

const ALGORITHMS: [&str; 7] = ["roipca1", "roipca2", "froipca1", "froipca2", "ipca", "ccipca", "batch"];

#[derive(Debug, Parser)]
#[command(name = "roipca", version, about = "Online PCA by rank-one eigendecomposition updates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the experiment described by a key=value spec file.
    Run(RunArgs),
    /// Stream a CSV file through one algorithm and write its components.
    Fit(FitArgs),
    /// Run the canonical comparison experiments.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long, value_name = "PATH")]
    spec: PathBuf,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Overrides the seed in the spec file.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[arg(long, value_name = "PATH")]
    input: PathBuf,
    #[arg(long, value_parser = positive)]
    m: usize,
    #[arg(long, default_value = "roipca1", value_parser = ALGORITHMS)]
    algorithm: String,
    #[arg(long, value_parser = ["1", "2"])]
    order: Option<String>,
    #[arg(long, value_parser = ["zero", "mean", "star"])]
    mu: Option<String>,
    /// Rows used for the warm start (default max(m + 1, 2m)).
    #[arg(long, value_parser = positive)]
    n0: Option<usize>,
    #[arg(long = "recenter-every", value_parser = positive)]
    recenter_every: Option<usize>,
    #[arg(long, default_value_t = false, action = ArgAction::Set)]
    header: bool,
    #[arg(long, value_name = "DIR", default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 5, value_parser = positive)]
    trials: usize,
    /// Optional real dataset, streamed after the synthetic experiments.
    #[arg(long, value_name = "PATH")]
    input: Option<PathBuf>,
    #[arg(long, default_value_t = false, action = ArgAction::Set)]
    header: bool,
    /// Warm-start rows for the dataset experiment.
    #[arg(long, default_value_t = 500, value_parser = positive)]
    n0: usize,
    /// Components for the dataset experiment.
    #[arg(long, default_value_t = 1, value_parser = positive)]
    m: usize,
}

fn positive(s: &str) -> std::result::Result<usize, String> {
    match s.parse::<usize>() {
        Ok(k) if k > 0 => Ok(k),
        _ => Err(format!("expected a positive integer, got {s:?}")),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Diagnostics go to `err`, reports to `out`.
pub fn dispatch<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    let outcome = match cli.command {
        Command::Run(a) => run(a, out),
        Command::Fit(a) => fit(a, out),
        Command::Compare(a) => compare(a, out),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Parse { .. } | Error::Io(_) | Error::InvalidInput(_) | Error::InsufficientData { .. } => {
            EXIT_USAGE
        }
        _ => EXIT_FAILURE,
    }
}

/// Experiment spec file: `key = value` per line, `#` starts a comment.
#[derive(Clone, Debug, PartialEq)]
pub struct SpecFile {
    pub spec: ExperimentSpec,
    pub stem: String,
    pub title: String,
}

const SPEC_KEYS: [&str; 18] = [
    "generator",
    "d",
    "spikes",
    "spike_range",
    "bulk_range",
    "input",
    "header",
    "label_column",
    "n0",
    "n_stream",
    "m",
    "algorithms",
    "trials",
    "seed",
    "assume_centered",
    "error_stride",
    "stem",
    "title",
];

/// Parses a spec file's text. Relative `input` paths resolve against `base`.
pub fn parse_spec_text(text: &str, base: &Path) -> Result<SpecFile> {
    let mut kv: BTreeMap<String, String> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::config(format!("line {}: expected key = value, got {line:?}", i + 1)))?;
        let k = k.trim().to_ascii_lowercase();
        if !SPEC_KEYS.contains(&k.as_str()) {
            return Err(Error::config(format!("line {}: unknown key {k:?}", i + 1)));
        }
        if kv.insert(k.clone(), v.trim().to_string()).is_some() {
            return Err(Error::config(format!("line {}: duplicate key {k:?}", i + 1)));
        }
    }
    let get = |k: &str| kv.get(k).map(String::as_str);
    let need = |k: &str| get(k).ok_or_else(|| Error::config(format!("missing key {k:?}")));
    let num = |k: &str| -> Result<Option<usize>> {
        get(k)
            .map(|v| v.parse::<usize>().map_err(|_| Error::config(format!("{k} must be a non-negative integer, got {v:?}"))))
            .transpose()
    };
    let range = |k: &str, default: (f64, f64)| -> Result<(f64, f64)> {
        let Some(v) = get(k) else { return Ok(default) };
        let parts: Vec<&str> = v.split(',').map(str::trim).collect();
        match parts.as_slice() {
            [a, b] => match (a.parse::<f64>(), b.parse::<f64>()) {
                (Ok(a), Ok(b)) if a <= b => Ok((a, b)),
                _ => Err(Error::config(format!("{k} must be lo,hi with lo <= hi, got {v:?}"))),
            },
            _ => Err(Error::config(format!("{k} must be lo,hi, got {v:?}"))),
        }
    };
    let flag = |k: &str, default: bool| -> Result<bool> {
        match get(k) {
            None => Ok(default),
            Some("true") => Ok(true),
            Some("false") => Ok(false),
            Some(v) => Err(Error::config(format!("{k} must be true or false, got {v:?}"))),
        }
    };
    let dim = || -> Result<usize> {
        match num("d")? {
            Some(d) if d > 0 => Ok(d),
            _ => Err(Error::config("d must be a positive integer")),
        }
    };

    let generator = match need("generator")? {
        "gaussian_gamma" => Generator::GaussianGamma { d: dim()? },
        "spiked_diag" => Generator::SpikedDiag {
            d: dim()?,
            spikes: num("spikes")?.unwrap_or(5),
            spike_range: range("spike_range", (5.0, 6.0))?,
            bulk_range: range("bulk_range", (0.0, 1.0))?,
        },
        "runtime_diag" => Generator::RuntimeDiag {
            d: dim()?,
            spikes: num("spikes")?.unwrap_or(5),
        },
        "csv" => Generator::Csv {
            path: base.join(need("input")?),
            options: CsvOptions {
                header: flag("header", false)?,
                label_column: num("label_column")?,
            },
        },
        other => {
            return Err(Error::config(format!(
                "generator must be gaussian_gamma, spiked_diag, runtime_diag or csv, got {other:?}"
            )))
        }
    };
    let algorithms = need("algorithms")?
        .split(',')
        .filter(|t| !t.trim().is_empty())
        .map(AlgorithmSpec::parse)
        .collect::<Result<Vec<_>>>()?;
    if algorithms.is_empty() {
        return Err(Error::config("algorithms is empty"));
    }
    let m = num("m")?.ok_or_else(|| Error::config("missing key \"m\""))?;
    let spec = ExperimentSpec {
        generator,
        n0: num("n0")?.ok_or_else(|| Error::config("missing key \"n0\""))?,
        n_stream: num("n_stream")?.ok_or_else(|| Error::config("missing key \"n_stream\""))?,
        m,
        algorithms,
        trials: num("trials")?.unwrap_or(1),
        seed: match get("seed") {
            None => 0,
            Some(v) => v.parse().map_err(|_| Error::config(format!("seed must be an integer, got {v:?}")))?,
        },
        assume_centered: flag("assume_centered", true)?,
        error_stride: num("error_stride")?,
    };
    spec.validate()?;
    Ok(SpecFile {
        spec,
        stem: get("stem").unwrap_or("results").to_string(),
        title: get("title").unwrap_or("Eigenspace error").to_string(),
    })
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io_at(path, e))
}

fn run(args: RunArgs, out: &mut dyn Write) -> Result<()> {
    let text = read_to_string(&args.spec)?;
    let base = args.spec.parent().unwrap_or(Path::new("."));
    let mut file = parse_spec_text(&text, base)?;
    if let Some(seed) = args.seed {
        file.spec.seed = seed;
    }
    let result = run_experiment(&file.spec)?;
    let written = emit_results(&result, &args.out, &file.stem, &file.title)?;
    write_report(out, &file.title, &result)?;
    for p in written {
        writeln!(out, "wrote {}", p.display())?;
    }
    Ok(())
}

fn fit(args: FitArgs, out: &mut dyn Write) -> Result<()> {
    let mut token = args.algorithm.clone();
    if let Some(o) = &args.order {
        write!(token, ":order={o}").ok();
    }
    if let Some(mu) = &args.mu {
        write!(token, ":mu={mu}").ok();
    }
    if let Some(k) = args.recenter_every {
        write!(token, ":recenter={k}").ok();
    }
    let alg = AlgorithmSpec::parse(&token)?;
    let data = load_csv_dataset(
        &args.input,
        &CsvOptions {
            header: args.header,
            label_column: None,
        },
    )?;
    let m = args.m;
    if m > data.ncols() {
        return Err(Error::config(format!("m = {m} exceeds the {} features", data.ncols())));
    }
    let n0 = args.n0.unwrap_or((2 * m).max(m + 1));
    if n0 > data.nrows() {
        return Err(Error::InsufficientData { rows: data.nrows(), m });
    }
    let x0 = data.rows(0, n0).into_owned();
    let mean0 = column_mean(&x0);
    let mut tracker = Tracker::start(&alg.method, &x0, &mean0, m)?;
    for i in n0..data.nrows() {
        tracker.ingest(&data.row(i).transpose())?;
    }
    let comps = tracker.components()?;

    fs::create_dir_all(&args.out)?;
    let mut text = String::new();
    for j in 0..comps.count() {
        let row: Vec<String> = comps.vector(j).iter().map(|x| x.to_string()).collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    let comp_path = args.out.join("components.csv");
    fs::write(&comp_path, text)?;
    let values: String = comps.values().iter().map(|v| format!("{v}\n")).collect();
    let value_path = args.out.join("eigenvalues.csv");
    fs::write(&value_path, values)?;
    writeln!(
        out,
        "{}: {} samples, d = {}, m = {m}\nwrote {}\nwrote {}",
        alg.label,
        tracker.samples(),
        data.ncols(),
        comp_path.display(),
        value_path.display()
    )?;
    Ok(())
}

fn algorithms(tokens: &[&str]) -> Vec<AlgorithmSpec> {
    tokens.iter().map(|t| AlgorithmSpec::parse(t).expect("built-in algorithm token")).collect()
}

const COMPARED: [&str; 6] = ["roipca1", "froipca1", "roipca2", "froipca2", "ipca", "ccipca"];

fn compare(args: CompareArgs, out: &mut dyn Write) -> Result<()> {
    fs::create_dir_all(&args.out)?;
    let algs = algorithms(&COMPARED);

    for d in [10usize, 100] {
        let spec = ExperimentSpec {
            generator: Generator::GaussianGamma { d },
            n0: 250,
            n_stream: 250,
            m: 5,
            algorithms: algs.clone(),
            trials: args.trials,
            seed: args.seed,
            assume_centered: true,
            error_stride: None,
        };
        let title = format!("Gaussian, covariance min(k,l)/d, d = {d}");
        let result = run_experiment(&spec)?;
        emit_results(&result, &args.out, &format!("gamma_d{d}"), &title)?;
        write_report(out, &title, &result)?;
    }

    let spec = ExperimentSpec {
        generator: Generator::SpikedDiag {
            d: 100,
            spikes: 5,
            spike_range: (5.0, 6.0),
            bulk_range: (0.0, 1.0),
        },
        n0: 500,
        n_stream: 1000,
        m: 5,
        algorithms: algs.clone(),
        trials: args.trials,
        seed: args.seed,
        assume_centered: true,
        error_stride: None,
    };
    let title = "Five spikes in [5,6] over a [0,1] bulk, d = 100";
    let result = run_experiment(&spec)?;
    emit_results(&result, &args.out, "spiked", title)?;
    write_report(out, title, &result)?;

    let dims = [100usize, 250, 500, 750, 1000];
    let timed = algorithms(&["roipca1", "froipca1", "ipca", "ccipca"]);
    let points = runtime_sweep(&dims, 10, 50, 100, &timed, args.seed)?;
    let mut csv = csv::Writer::from_path(args.out.join("runtime.csv")).map_err(csv_error)?;
    csv.write_record(["d", "algorithm", "median_iter_time_s", "mean_iter_time_s"])
        .map_err(csv_error)?;
    for p in &points {
        csv.write_record([
            p.d.to_string(),
            p.algorithm.clone(),
            format!("{:.5e}", p.median_iter_time),
            format!("{:.5e}", p.mean_iter_time),
        ])
        .map_err(csv_error)?;
    }
    csv.flush()?;
    writeln!(out, "\nRuntime per ingest, m = 10, exactly low-rank data")?;
    writeln!(out, "{:<12}{:>14}{:>14}", "algorithm", "slope s/dim", "R^2")?;
    for alg in &timed {
        let (xs, ys): (Vec<f64>, Vec<f64>) = points
            .iter()
            .filter(|p| p.algorithm == alg.label)
            .map(|p| (p.d as f64, p.median_iter_time))
            .unzip();
        if let Some(fit) = linear_fit(&xs, &ys) {
            writeln!(out, "{:<12}{:>14.3e}{:>14.3}", alg.label, fit.slope, fit.r2)?;
        }
    }

    if let Some(path) = args.input {
        let options = CsvOptions {
            header: args.header,
            label_column: None,
        };
        let rows = load_csv_dataset(&path, &options)?.nrows();
        if rows <= args.n0 {
            return Err(Error::InsufficientData { rows, m: args.m });
        }
        let spec = ExperimentSpec {
            generator: Generator::Csv { path: path.clone(), options },
            n0: args.n0,
            n_stream: (rows - args.n0).min(2000),
            m: args.m,
            algorithms: algs,
            trials: args.trials,
            seed: args.seed,
            assume_centered: true,
            error_stride: None,
        };
        spec.validate()?;
        let title = format!("Dataset {}", path.display());
        let result = run_experiment(&spec)?;
        emit_results(&result, &args.out, "dataset", &title)?;
        write_report(out, &title, &result)?;
    }
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

fn write_report(out: &mut dyn Write, title: &str, result: &ExperimentResult) -> Result<()> {
    writeln!(out, "\n{title} (n0 = {}, streamed {})", result.n0, result.n_stream)?;
    writeln!(out, "{:<24}{:>14}{:>14}{:>16}", "algorithm", "median L", "mean L", "median s/iter")?;
    for s in result.summary() {
        writeln!(
            out,
            "{:<24}{:>14.3e}{:>14.3e}{:>16.3e}",
            s.algorithm, s.median_final_error, s.mean_final_error, s.median_iter_time
        )?;
    }
    Ok(())
}
