//! The `driftmap` command line.
//!
//! Every setting can come from a flat `key = value` file given with
//! `--config` and be overridden by the long flag of the same name.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::baseline::{baseline_signals, flag_signal, PcaModel};
use crate::config::{normalize_key, parse_range, KeyValues};
use crate::detector::{run_monitor, DetectorConfig, MonitorSignal, Statistic};
use crate::embedding::chunk_moments;
use crate::error::{Error, Result};
use crate::eval::{evaluate, GridSearch};
use crate::export::{read_events, read_signal, write_events, write_moments, write_signal};
use crate::stream::{chunk_rows, generate_stream, read_rows, write_rows, Chunk, GroundTruth, StreamSpec};
use crate::topo_map::{FeatureMap, GridMetric, GridSpec, MapKind, NeighborhoodKind, TrainSchedule};

macro_rules! config_flags {
    ($($field:ident => $key:literal),* $(,)?) => {
        /// Long flags, one per configuration key.
        #[derive(Debug, Clone, Default, clap::Args)]
        pub struct ConfigFlags {
            $(
                #[arg(long = $key, value_name = "VALUE", allow_hyphen_values = true)]
                pub $field: Option<String>,
            )*
        }

        impl ConfigFlags {
            /// The flags that were given, as `(key, value)` pairs.
            pub fn pairs(&self) -> Vec<(&'static str, &str)> {
                let mut out = Vec::new();
                $(
                    if let Some(v) = &self.$field {
                        out.push(($key, v.as_str()));
                    }
                )*
                out
            }
        }

        /// Every recognised configuration key.
        pub const KEYS: &[&str] = &[$($key),*];
    };
}

config_flags! {
    map_kind => "map-kind",
    grid_rows => "grid-rows",
    grid_cols => "grid-cols",
    grid_metric => "grid-metric",
    epochs => "epochs",
    eta_start => "eta-start",
    eta_end => "eta-end",
    sigma_start => "sigma-start",
    sigma_end => "sigma-end",
    neighborhood => "neighborhood",
    dog_ratio => "dog-ratio",
    dog_amplitude => "dog-amplitude",
    alpha => "alpha",
    window => "window",
    chunk_size => "chunk-size",
    cl_eta => "cl-eta",
    cl_epochs => "cl-epochs",
    input => "input",
    train_input => "train-input",
    stream_spec => "stream-spec",
    seed => "seed",
    train_fraction => "train-fraction",
    map => "map",
    signal_out => "signal-out",
    events_out => "events-out",
    moments_out => "moments-out",
    hist_signal_out => "hist-signal-out",
    ks_signal_out => "ks-signal-out",
    out => "out",
    truth_out => "truth-out",
    events => "events",
    signal => "signal",
    truth => "truth",
    n_chunks => "n-chunks",
    tol => "tol",
    pca_components => "pca-components",
    pca_max_iters => "pca-max-iters",
    pca_tol => "pca-tol",
    hist_bins => "hist-bins",
    kernel_pca => "kernel-pca",
    baseline_decide => "baseline-decide",
    grid => "grid",
    alphas => "alphas",
    windows => "windows",
    matrix_out => "matrix-out",
    report_out => "report-out",
}

#[derive(Debug, Parser)]
#[command(name = "driftmap", version, about = "Distribution-shift monitoring with topology-preserving maps")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a map on the leading fraction of a stream.
    Train(CommandArgs),
    /// Monitor the remainder of a stream with a trained map.
    Monitor(CommandArgs),
    /// Write a synthetic stream and its shift indices.
    Generate(CommandArgs),
    /// Score consecutive chunks with the PCA baseline.
    Baseline(CommandArgs),
    /// Compare detections with ground truth, optionally over a parameter grid.
    Evaluate(CommandArgs),
}

#[derive(Debug, Clone, clap::Args)]
pub struct CommandArgs {
    /// Flat `key = value` configuration file.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub flags: ConfigFlags,
}

/// Settings of one command after merging defaults, file and flags.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    values: KeyValues,
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        other => Err(Error::invalid(key, format!("expected a boolean, got {other:?}"))),
    }
}

impl RunConfig {
    pub fn from_key_values(values: KeyValues) -> Result<Self> {
        let known: Vec<String> = KEYS.iter().map(|k| normalize_key(k)).collect();
        if let Some(unknown) = values.keys().find(|k| !known.iter().any(|n| n == k)) {
            return Err(Error::invalid(unknown.replace('_', "-"), "unknown setting"));
        }
        Ok(RunConfig { values })
    }

    /// File values first, then flags on top.
    pub fn resolve(file: Option<&Path>, flags: &ConfigFlags) -> Result<Self> {
        let mut values = match file {
            Some(path) => KeyValues::load(path)?,
            None => KeyValues::default(),
        };
        for (key, value) in flags.pairs() {
            values.set(key, value);
        }
        Self::from_key_values(values)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key)
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.get(key).map(PathBuf::from)
    }

    pub fn required_path(&self, key: &str) -> Result<PathBuf> {
        self.path(key)
            .ok_or_else(|| Error::invalid(key, "missing required setting"))
    }

    fn flag(&self, key: &str) -> Result<bool> {
        self.get(key).map_or(Ok(false), |v| parse_bool(key, v))
    }

    pub fn seed(&self) -> Result<u64> {
        self.values.parsed_or("seed", 0)
    }

    pub fn train_fraction(&self) -> Result<f64> {
        let frac = self.values.parsed_or("train-fraction", 0.3)?;
        if !(frac > 0.0 && frac < 1.0) {
            return Err(Error::invalid("train-fraction", "must lie strictly between 0 and 1"));
        }
        Ok(frac)
    }

    pub fn tol(&self) -> Result<usize> {
        self.values.parsed_or("tol", 1)
    }

    pub fn map_kind(&self) -> Result<MapKind> {
        self.values.parsed_or("map-kind", MapKind::Som)
    }

    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(
            self.values.parsed_or("grid-rows", 10)?,
            self.values.parsed_or("grid-cols", 10)?,
            self.values.parsed_or("grid-metric", GridMetric::Manhattan)?,
        )
    }

    pub fn schedule(&self) -> Result<TrainSchedule> {
        let d = TrainSchedule::default();
        let v = &self.values;
        let sched = TrainSchedule {
            epochs: v.parsed_or("epochs", d.epochs)?,
            eta_start: v.parsed_or("eta-start", d.eta_start)?,
            eta_end: v.parsed_or("eta-end", d.eta_end)?,
            sigma_start: v.parsed_or("sigma-start", d.sigma_start)?,
            sigma_end: v.parsed_or("sigma-end", d.sigma_end)?,
            neighborhood: v.parsed_or("neighborhood", NeighborhoodKind::Gaussian)?,
            dog_ratio: v.parsed_or("dog-ratio", d.dog_ratio)?,
            dog_amplitude: v.parsed_or("dog-amplitude", d.dog_amplitude)?,
        };
        sched.validate()?;
        Ok(sched)
    }

    pub fn detector(&self) -> Result<DetectorConfig> {
        let d = DetectorConfig::default();
        let v = &self.values;
        let config = DetectorConfig {
            alpha: v.parsed_or("alpha", d.alpha)?,
            window: v.parsed_or("window", d.window)?,
            chunk_size: v.parsed_or("chunk-size", d.chunk_size)?,
            cl_eta: v.parsed_or("cl-eta", d.cl_eta)?,
            cl_epochs: v.parsed_or("cl-epochs", d.cl_epochs)?,
            statistic: Statistic::M1,
        };
        config.validate()?;
        Ok(config)
    }

    /// Rows of the configured stream source, its chunk size and, for
    /// generated streams, the shift indices.
    pub fn dataset(&self) -> Result<Dataset> {
        match (self.path("input"), self.path("stream-spec")) {
            (Some(_), Some(_)) => Err(Error::invalid("input", "give either `input` or `stream-spec`, not both")),
            (None, None) => Err(Error::invalid("input", "a stream source (`input` or `stream-spec`) is required")),
            (Some(path), None) => Ok(Dataset {
                rows: read_rows(&path)?,
                chunk_size: self.detector()?.chunk_size,
                truth: None,
            }),
            (None, Some(path)) => {
                let spec = StreamSpec::load(&path)?;
                if let Some(size) = self.values.parsed::<usize>("chunk-size")? {
                    if size != spec.chunk_size {
                        return Err(Error::invalid(
                            "chunk-size",
                            format!("{size} differs from the stream spec's {}", spec.chunk_size),
                        ));
                    }
                }
                let (chunks, truth) = generate_stream(&spec)?;
                Ok(Dataset {
                    rows: chunks.into_iter().flat_map(|c| c.samples).collect(),
                    chunk_size: spec.chunk_size,
                    truth: Some(truth),
                })
            }
        }
    }

    /// Training rows and the chunks to monitor.
    ///
    /// With `train-input` the map is fitted on that file and the whole
    /// stream is monitored; otherwise the leading `train-fraction` of the
    /// stream is used for training.
    pub fn split(&self, data: &Dataset) -> Result<(Vec<Vec<f64>>, Vec<Chunk>)> {
        match self.path("train-input") {
            Some(path) => Ok((read_rows(&path)?, data.monitor_chunks(0)?)),
            None => {
                let n = data.train_len(self.train_fraction()?)?;
                Ok((data.rows[..n].to_vec(), data.monitor_chunks(n)?))
            }
        }
    }

    fn training_rows(&self, data: &Dataset) -> Result<Vec<Vec<f64>>> {
        match self.path("train-input") {
            Some(path) => read_rows(&path),
            None => Ok(data.rows[..data.train_len(self.train_fraction()?)?].to_vec()),
        }
    }

    fn detector_for(&self, data: &Dataset) -> Result<DetectorConfig> {
        Ok(DetectorConfig {
            chunk_size: data.chunk_size,
            ..self.detector()?
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub rows: Vec<Vec<f64>>,
    pub chunk_size: usize,
    pub truth: Option<GroundTruth>,
}

impl Dataset {
    /// Number of leading rows used for training.
    pub fn train_len(&self, fraction: f64) -> Result<usize> {
        let n = (fraction * self.rows.len() as f64).round() as usize;
        if n < 2 || n >= self.rows.len() {
            return Err(Error::invalid(
                "train-fraction",
                format!("leaves {n} of {} rows for training", self.rows.len()),
            ));
        }
        Ok(n)
    }

    /// Chunks after the training rows, numbered by their position in the
    /// whole stream. Starts at the first chunk boundary past the training rows.
    pub fn monitor_chunks(&self, train_len: usize) -> Result<Vec<Chunk>> {
        if train_len > self.rows.len() {
            return Err(Error::invalid("train-fraction", "exceeds the stream length"));
        }
        let first = train_len.div_ceil(self.chunk_size);
        let start = (first * self.chunk_size).min(self.rows.len());
        let chunks = chunk_rows(self.rows[start..].to_vec(), self.chunk_size, first)?;
        if chunks.len() < 2 {
            return Err(Error::invalid("train-fraction", "fewer than two chunks are left to monitor"));
        }
        Ok(chunks)
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

pub fn cmd_train(cfg: &RunConfig) -> Result<()> {
    let map_path = cfg.required_path("map")?;
    let schedule = cfg.schedule()?;
    let grid = cfg.grid()?;
    let kind = cfg.map_kind()?;
    let seed = cfg.seed()?;
    let data = cfg.dataset()?;
    let training = cfg.training_rows(&data)?;
    let n = training.len();

    let mut map = FeatureMap::init(grid, kind, &training, seed)?;
    let history = map.train(&training, &schedule, seed)?;
    map.save(&map_path)?;
    println!(
        "trained {kind:?} {}x{} map on {n} rows; quantization error {:.6} -> {:.6}",
        grid.rows(),
        grid.cols(),
        history.initial_error,
        history.final_error()
    );
    Ok(())
}

pub fn cmd_monitor(cfg: &RunConfig) -> Result<()> {
    let map = FeatureMap::load(cfg.required_path("map")?)?;
    let signal_out = cfg.path("signal-out").unwrap_or_else(|| "signal.csv".into());
    let events_out = cfg.path("events-out").unwrap_or_else(|| "events.jsonl".into());
    let schedule = cfg.schedule()?;
    let seed = cfg.seed()?;
    let data = cfg.dataset()?;
    let config = cfg.detector_for(&data)?;
    let (_, chunks) = cfg.split(&data)?;

    if let Some(path) = cfg.path("moments-out") {
        let rows = chunks
            .iter()
            .map(|c| Ok((c.index, chunk_moments(&map, &c.samples)?)))
            .collect::<Result<Vec<_>>>()?;
        write_moments(create(&path)?, &rows).map_err(|e| Error::io(&path, e))?;
    }

    let run = run_monitor(&chunks, map, &schedule, &config, seed)?;
    write_signal(create(&signal_out)?, &run.signal).map_err(|e| Error::io(&signal_out, e))?;
    write_events(create(&events_out)?, &run.events)?;
    println!(
        "monitored chunks {}..={}; {} shifts flagged",
        chunks[0].index,
        chunks[chunks.len() - 1].index,
        run.events.len()
    );
    Ok(())
}

fn default_spec(cfg: &RunConfig) -> Result<StreamSpec> {
    Ok(StreamSpec::alternating(
        20,
        cfg.values.parsed_or("chunk-size", 100)?,
        20,
        6,
        0.25,
        2.5,
        cfg.seed()?,
    ))
}

pub fn cmd_generate(cfg: &RunConfig) -> Result<()> {
    let out = cfg.required_path("out")?;
    let spec = match cfg.path("stream-spec") {
        Some(path) => StreamSpec::load(path)?,
        None => default_spec(cfg)?,
    };
    let (chunks, truth) = generate_stream(&spec)?;
    let rows: Vec<Vec<f64>> = chunks.into_iter().flat_map(|c| c.samples).collect();
    write_rows(create(&out)?, &rows)?;
    if let Some(path) = cfg.path("truth-out") {
        let mut w = create(&path)?;
        truth.write(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(&path, e))?;
    }
    println!("wrote {} rows, shifts at {:?}", rows.len(), truth.shift_chunks);
    Ok(())
}

pub fn cmd_baseline(cfg: &RunConfig) -> Result<()> {
    if cfg.flag("kernel-pca")? {
        eprintln!("note: kernel PCA is not available; using linear PCA");
    }
    let hist_out = cfg.path("hist-signal-out").unwrap_or_else(|| "hist_signal.csv".into());
    let ks_out = cfg.path("ks-signal-out").unwrap_or_else(|| "ks_signal.csv".into());
    let k = cfg.values.parsed_or("pca-components", 4)?;
    let max_iters = cfg.values.parsed_or("pca-max-iters", 500)?;
    let tol = cfg.values.parsed_or("pca-tol", 1e-9)?;
    let bins = cfg.values.parsed_or("hist-bins", 20)?;
    let seed = cfg.seed()?;
    let data = cfg.dataset()?;
    let config = cfg.detector_for(&data)?;
    let (training, chunks) = cfg.split(&data)?;

    let model = PcaModel::fit(&training, k, max_iters, tol, seed)?;
    let mut signals = baseline_signals(&model, &chunks, bins)?;
    if cfg.flag("baseline-decide")? {
        flag_signal(&mut signals.hist, config.alpha, config.window)?;
        flag_signal(&mut signals.ks, config.alpha, config.window)?;
    }
    write_signal(create(&hist_out)?, &signals.hist).map_err(|e| Error::io(&hist_out, e))?;
    write_signal(create(&ks_out)?, &signals.ks).map_err(|e| Error::io(&ks_out, e))?;
    println!("scored {} chunk pairs with {k} principal components", signals.ks.len());
    Ok(())
}

fn read_truth(path: &Path) -> Result<GroundTruth> {
    GroundTruth::read(open(path)?)
}

fn usize_grid(key: &str, values: Vec<f64>) -> Result<Vec<usize>> {
    values
        .into_iter()
        .map(|v| {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::invalid(key, format!("{v} is not a positive integer")))
            }
        })
        .collect()
}

fn write_report<T: serde::Serialize>(cfg: &RunConfig, report: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(report)?;
    match cfg.path("report-out") {
        Some(path) => {
            let mut w = create(&path)?;
            writeln!(w, "{text}")
                .and_then(|_| w.flush())
                .map_err(|e| Error::io(&path, e))
        }
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

pub fn cmd_evaluate(cfg: &RunConfig) -> Result<()> {
    if cfg.flag("grid")? {
        return cmd_grid(cfg);
    }
    let truth = read_truth(&cfg.required_path("truth")?)?;
    let tol = cfg.tol()?;
    let (detected, range) = match (cfg.path("signal"), cfg.path("events")) {
        (Some(path), _) => {
            let signal: MonitorSignal = read_signal(open(&path)?)?;
            let (first, last) = match (signal.points.first(), signal.points.last()) {
                (Some(f), Some(l)) => (f.chunk_index, l.chunk_index),
                _ => return Err(Error::Empty("signal")),
            };
            (signal.flagged(), first..last + 1)
        }
        (None, Some(path)) => {
            let events = read_events(open(&path)?)?;
            let n: usize = cfg.values.required("n-chunks")?;
            (events.iter().map(|e| e.chunk_index).collect(), 0..n)
        }
        (None, None) => return Err(Error::invalid("events", "give `signal` or `events` to evaluate")),
    };
    let report = evaluate(&detected, &truth.shift_chunks, range, tol)?;
    write_report(cfg, &report)
}

#[derive(serde::Serialize)]
struct GridReport {
    max_kappa: f64,
    fraction_at_least_0_6: f64,
    cells: usize,
}

fn cmd_grid(cfg: &RunConfig) -> Result<()> {
    let map = FeatureMap::load(cfg.required_path("map")?)?;
    let schedule = cfg.schedule()?;
    let seed = cfg.seed()?;
    let tol = cfg.tol()?;
    let alphas = parse_range("alphas", cfg.get("alphas").unwrap_or("2:28:2"))?;
    let windows = usize_grid("windows", parse_range("windows", cfg.get("windows").unwrap_or("2:24:2"))?)?;
    let data = cfg.dataset()?;
    let base = cfg.detector_for(&data)?;
    let (_, chunks) = cfg.split(&data)?;
    let truth = match (cfg.path("truth"), &data.truth) {
        (Some(path), _) => read_truth(&path)?,
        (None, Some(t)) => t.clone(),
        (None, None) => return Err(Error::invalid("truth", "required when the stream is read from a file")),
    };

    let search = GridSearch {
        stream: || Ok(chunks.clone()),
        map: || Ok(map.clone()),
        schedule: &schedule,
        base: &base,
        truth: &truth.shift_chunks,
        tol,
        seed,
    };
    let matrix = search.run(&alphas, &windows)?;
    if let Some(path) = cfg.path("matrix-out") {
        matrix.write_csv(create(&path)?)?;
    }
    write_report(
        cfg,
        &GridReport {
            max_kappa: matrix.max(),
            fraction_at_least_0_6: matrix.fraction_at_least(0.6),
            cells: alphas.len() * windows.len(),
        },
    )
}

pub fn execute(command: &Command) -> Result<()> {
    let (args, run): (&CommandArgs, fn(&RunConfig) -> Result<()>) = match command {
        Command::Train(a) => (a, cmd_train),
        Command::Monitor(a) => (a, cmd_monitor),
        Command::Generate(a) => (a, cmd_generate),
        Command::Baseline(a) => (a, cmd_baseline),
        Command::Evaluate(a) => (a, cmd_evaluate),
    };
    let cfg = RunConfig::resolve(args.config.as_deref(), &args.flags)?;
    run(&cfg)
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_IO: i32 = 2;

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    match execute(&cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_io() {
                EXIT_IO
            } else {
                EXIT_INVALID
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_key_has_a_flag() {
        let flags = ConfigFlags {
            alpha: Some("3".into()),
            report_out: Some("r.json".into()),
            ..Default::default()
        };
        assert_eq!(flags.pairs(), vec![("alpha", "3"), ("report-out", "r.json")]);
        assert_eq!(KEYS.len(), 46);
    }

    #[test]
    fn flags_override_file_values() {
        let dir = std::env::temp_dir().join(format!("driftmap-cli-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("run.conf");
        std::fs::write(&path, "alpha = 3\nwindow = 6\n").unwrap();
        let flags = ConfigFlags {
            alpha: Some("7".into()),
            ..Default::default()
        };
        let cfg = RunConfig::resolve(Some(&path), &flags).unwrap();
        let d = cfg.detector().unwrap();
        assert_eq!((d.alpha, d.window), (7.0, 6));
        std::fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn unknown_keys_rejected() {
        let kv = KeyValues::parse("alpah = 3").unwrap();
        assert!(RunConfig::from_key_values(kv).is_err());
    }

    #[test]
    fn fraction_bounds() {
        for bad in ["0", "1", "1.5", "-0.1"] {
            let cfg = RunConfig::from_key_values(KeyValues::parse(&format!("train-fraction = {bad}")).unwrap()).unwrap();
            assert!(cfg.train_fraction().is_err(), "{bad}");
        }
    }

    #[test]
    fn training_split_and_monitor_alignment() {
        let data = Dataset {
            rows: (0..1000).map(|i| vec![i as f64]).collect(),
            chunk_size: 200,
            truth: None,
        };
        assert_eq!(data.train_len(0.3).unwrap(), 300);
        let chunks = data.monitor_chunks(300).unwrap();
        assert_eq!(chunks[0].index, 2);
        assert_eq!(chunks[0].samples[0], vec![400.0]);
        assert_eq!(chunks.len(), 3);
    }
}
