//! Chunked ingestion of CSV streams and synthetic streams with labelled
//! distribution shifts.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::rng::{rng_for, Purpose};

/// A consecutive batch of samples, the unit the monitor compares.
#[derive(Debug, Clone, PartialEq)]
pub struct Chunk {
    pub index: usize,
    pub samples: Vec<Vec<f64>>,
}

impl Chunk {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Chunk indices at which the generating distribution changes.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub shift_chunks: Vec<usize>,
}

impl GroundTruth {
    /// Truth restricted to chunks in `range`.
    pub fn within(&self, range: std::ops::Range<usize>) -> GroundTruth {
        GroundTruth {
            shift_chunks: self
                .shift_chunks
                .iter()
                .copied()
                .filter(|c| range.contains(c))
                .collect(),
        }
    }

    /// One index per line.
    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for c in &self.shift_chunks {
            writeln!(w, "{c}")?;
        }
        Ok(())
    }

    /// Reads one index per line; blank lines and a non-numeric first line
    /// (a header) are skipped.
    pub fn read<R: Read>(mut r: R) -> Result<Self> {
        let mut text = String::new();
        r.read_to_string(&mut text)
            .map_err(|e| Error::io("<truth>", e))?;
        let mut shift_chunks = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            match line.parse::<usize>() {
                Ok(v) => shift_chunks.push(v),
                Err(_) if n == 0 => continue,
                Err(_) => {
                    return Err(Error::NonNumeric {
                        line: n as u64 + 1,
                        column: 1,
                        value: line.to_string(),
                    })
                }
            }
        }
        shift_chunks.sort_unstable();
        shift_chunks.dedup();
        Ok(GroundTruth { shift_chunks })
    }
}

/// Splits rows into chunks of `chunk_size`, numbering from `start_index`.
///
/// A trailing remainder of fewer than two rows is dropped since it cannot
/// be summarized.
pub fn chunk_rows(rows: Vec<Vec<f64>>, chunk_size: usize, start_index: usize) -> Result<Vec<Chunk>> {
    if chunk_size == 0 {
        return Err(Error::invalid("chunk-size", "must be positive"));
    }
    let mut chunks = Vec::with_capacity(rows.len() / chunk_size + 1);
    let mut rows = rows.into_iter().peekable();
    let mut index = start_index;
    while rows.peek().is_some() {
        let samples: Vec<Vec<f64>> = rows.by_ref().take(chunk_size).collect();
        if samples.len() < chunk_size && samples.len() < 2 {
            break;
        }
        chunks.push(Chunk { index, samples });
        index += 1;
    }
    Ok(chunks)
}

/// Row iterator over a numeric CSV file with an optional header row.
pub struct CsvRows<R: Read> {
    records: csv::StringRecordsIntoIter<R>,
    dim: Option<usize>,
    first: bool,
    line: u64,
}

impl CsvRows<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::from_reader(BufReader::new(file)))
    }
}

impl<R: Read> CsvRows<R> {
    pub fn from_reader(reader: R) -> Self {
        let records = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(reader)
            .into_records();
        CsvRows {
            records,
            dim: None,
            first: true,
            line: 0,
        }
    }

    fn parse(&mut self, record: &csv::StringRecord) -> Option<Result<Vec<f64>>> {
        let is_first = std::mem::replace(&mut self.first, false);
        let mut row = Vec::with_capacity(record.len());
        for (column, cell) in record.iter().enumerate() {
            match cell.parse::<f64>() {
                Ok(v) => row.push(v),
                // a non-numeric first row is a header
                Err(_) if is_first => {
                    self.dim = Some(record.len());
                    return None;
                }
                Err(_) => {
                    return Some(Err(Error::NonNumeric {
                        line: self.line,
                        column: column + 1,
                        value: cell.to_string(),
                    }))
                }
            }
        }
        match self.dim {
            None => self.dim = Some(row.len()),
            Some(expected) if expected != row.len() => {
                return Some(Err(Error::RaggedRows {
                    row: self.line as usize,
                    expected,
                    actual: row.len(),
                }))
            }
            Some(_) => {}
        }
        Some(Ok(row))
    }
}

impl<R: Read> Iterator for CsvRows<R> {
    type Item = Result<Vec<f64>>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let record = match self.records.next()? {
                Ok(r) => r,
                Err(e) => return Some(Err(e.into())),
            };
            self.line = record.position().map_or(self.line + 1, |p| p.line());
            if record.iter().all(str::is_empty) {
                continue;
            }
            if let Some(row) = self.parse(&record) {
                return Some(row);
            }
        }
    }
}

/// Chunk iterator over a CSV source.
pub struct ChunkReader<R: Read> {
    rows: CsvRows<R>,
    chunk_size: usize,
    next_index: usize,
    done: bool,
}

impl<R: Read> Iterator for ChunkReader<R> {
    type Item = Result<Chunk>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let mut samples = Vec::with_capacity(self.chunk_size);
        while samples.len() < self.chunk_size {
            match self.rows.next() {
                Some(Ok(row)) => samples.push(row),
                Some(Err(e)) => {
                    self.done = true;
                    return Some(Err(e));
                }
                None => {
                    self.done = true;
                    break;
                }
            }
        }
        if samples.is_empty() || (samples.len() < self.chunk_size && samples.len() < 2) {
            self.done = true;
            return None;
        }
        let index = self.next_index;
        self.next_index += 1;
        Some(Ok(Chunk { index, samples }))
    }
}

impl<R: Read> ChunkReader<R> {
    pub fn new(rows: CsvRows<R>, chunk_size: usize) -> Result<Self> {
        if chunk_size == 0 {
            return Err(Error::invalid("chunk-size", "must be positive"));
        }
        Ok(ChunkReader {
            rows,
            chunk_size,
            next_index: 0,
            done: false,
        })
    }
}

/// Streams `path` in chunks of `chunk_size` rows.
pub fn read_chunks(path: impl AsRef<Path>, chunk_size: usize) -> Result<ChunkReader<BufReader<File>>> {
    ChunkReader::new(CsvRows::open(path)?, chunk_size)
}

/// Loads every row of a numeric CSV file.
pub fn read_rows(path: impl AsRef<Path>) -> Result<Vec<Vec<f64>>> {
    CsvRows::open(path)?.collect()
}

/// Writes rows as CSV with an `x0,x1,...` header.
pub fn write_rows<W: Write>(writer: W, rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    if let Some(first) = rows.first() {
        w.write_record((0..first.len()).map(|j| format!("x{j}")))?;
    }
    for row in rows {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// A Gaussian source with independent features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Regime {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    /// Length of the regime in chunks.
    pub duration: usize,
    /// Half-width of a uniform perturbation added to every feature.
    #[serde(default)]
    pub perturbation: f64,
}

impl Regime {
    fn draw<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        self.means
            .iter()
            .zip(&self.stds)
            .map(|(&m, &s)| {
                let mut v = Normal::new(m, s).map_or(m, |d| d.sample(rng));
                if self.perturbation > 0.0 {
                    v += rng.random_range(-self.perturbation..=self.perturbation);
                }
                v
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Transition {
    Sudden,
    /// New-regime share rises linearly over this many chunks.
    Incremental(usize),
}

impl std::str::FromStr for Transition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if s == "sudden" {
            return Ok(Transition::Sudden);
        }
        let blend = s
            .strip_prefix("incremental")
            .map(|rest| rest.trim_matches(|c: char| c == ':' || c == '(' || c == ')' || c.is_whitespace()))
            .and_then(|n| n.parse::<usize>().ok());
        match blend {
            Some(b) => Ok(Transition::Incremental(b)),
            None => Err(Error::invalid(
                "transition",
                format!("expected `sudden` or `incremental:<chunks>`, got {s:?}"),
            )),
        }
    }
}

impl std::fmt::Display for Transition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Transition::Sudden => write!(f, "sudden"),
            Transition::Incremental(b) => write!(f, "incremental:{b}"),
        }
    }
}

/// Recipe for a synthetic stream: consecutive Gaussian regimes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamSpec {
    pub n_features: usize,
    pub chunk_size: usize,
    pub n_chunks: usize,
    pub regimes: Vec<Regime>,
    pub transition: Transition,
    pub seed: u64,
}

impl StreamSpec {
    /// Standard-normal regime followed at `shift_at` by a regime whose first
    /// quarter of features has its mean moved by `magnitude`.
    pub fn two_regime_example(
        n_features: usize,
        chunk_size: usize,
        n_chunks: usize,
        shift_at: usize,
        magnitude: f64,
        seed: u64,
    ) -> Self {
        let base = Regime {
            means: vec![0.0; n_features],
            stds: vec![1.0; n_features],
            duration: shift_at,
            perturbation: 0.0,
        };
        let shifted = Regime {
            means: shifted_means(n_features, 0.25, magnitude),
            duration: n_chunks - shift_at,
            ..base.clone()
        };
        StreamSpec {
            n_features,
            chunk_size,
            n_chunks,
            regimes: vec![base, shifted],
            transition: Transition::Sudden,
            seed,
        }
    }

    /// Alternates a standard-normal regime with a mean-shifted one every
    /// `period` chunks, `n_shifts` times.
    pub fn alternating(
        n_features: usize,
        chunk_size: usize,
        period: usize,
        n_shifts: usize,
        shifted_fraction: f64,
        magnitude: f64,
        seed: u64,
    ) -> Self {
        let base = Regime {
            means: vec![0.0; n_features],
            stds: vec![1.0; n_features],
            duration: period,
            perturbation: 0.0,
        };
        let shifted = Regime {
            means: shifted_means(n_features, shifted_fraction, magnitude),
            ..base.clone()
        };
        let regimes = (0..=n_shifts)
            .map(|i| if i % 2 == 0 { base.clone() } else { shifted.clone() })
            .collect();
        StreamSpec {
            n_features,
            chunk_size,
            n_chunks: period * (n_shifts + 1),
            regimes,
            transition: Transition::Sudden,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_features == 0 {
            return Err(Error::invalid("n_features", "must be positive"));
        }
        if self.chunk_size == 0 {
            return Err(Error::invalid("chunk_size", "must be positive"));
        }
        if self.n_chunks == 0 {
            return Err(Error::invalid("n_chunks", "must be positive"));
        }
        if self.regimes.is_empty() {
            return Err(Error::invalid("regimes", "at least one regime is required"));
        }
        for (i, r) in self.regimes.iter().enumerate() {
            if r.duration == 0 {
                return Err(Error::invalid(format!("regimes.{i}.duration"), "must be positive"));
            }
            if r.means.len() != self.n_features || r.stds.len() != self.n_features {
                return Err(Error::invalid(
                    format!("regimes.{i}"),
                    format!("means and stds need {} entries", self.n_features),
                ));
            }
            if r.means.iter().any(|m| !m.is_finite()) || r.stds.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
                return Err(Error::invalid(format!("regimes.{i}"), "means must be finite and stds nonnegative"));
            }
            if !(r.perturbation.is_finite() && r.perturbation >= 0.0) {
                return Err(Error::invalid(format!("regimes.{i}.perturbation"), "must be nonnegative"));
            }
        }
        let total: usize = self.regimes.iter().map(|r| r.duration).sum();
        if total != self.n_chunks {
            return Err(Error::invalid(
                "regimes",
                format!("durations sum to {total}, expected n_chunks = {}", self.n_chunks),
            ));
        }
        if self.transition == Transition::Incremental(0) {
            return Err(Error::invalid("transition", "blend must span at least one chunk"));
        }
        Ok(())
    }

    /// First chunk of every regime after the first.
    pub fn boundaries(&self) -> Vec<usize> {
        self.regimes
            .iter()
            .scan(0, |start, r| {
                *start += r.duration;
                Some(*start)
            })
            .take(self.regimes.len() - 1)
            .collect()
    }

    pub fn ground_truth(&self) -> GroundTruth {
        GroundTruth {
            shift_chunks: self.boundaries(),
        }
    }

    /// Reads the flat key-value form: top-level fields by name and regimes
    /// as `regimes.<i>.<field>` groups. A single mean or std is broadcast
    /// to all features.
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let n_features: usize = kv.required("n_features")?;
        let mut regimes = Vec::new();
        for i in 0.. {
            let prefix = format!("regimes.{i}.");
            if !kv.keys().any(|k| k.starts_with(&prefix)) {
                break;
            }
            let broadcast = |field: &str, default: Option<f64>| -> Result<Vec<f64>> {
                let key = format!("{prefix}{field}");
                let values = match (kv.list(&key)?, default) {
                    (Some(v), _) => v,
                    (None, Some(d)) => vec![d],
                    (None, None) => return Err(Error::invalid(key, "missing required setting")),
                };
                match values.len() {
                    1 => Ok(vec![values[0]; n_features]),
                    n if n == n_features => Ok(values),
                    n => Err(Error::invalid(key, format!("{n} values for {n_features} features"))),
                }
            };
            regimes.push(Regime {
                means: broadcast("means", None)?,
                stds: broadcast("stds", Some(1.0))?,
                duration: kv.required(&format!("{prefix}duration"))?,
                perturbation: kv.parsed_or(&format!("{prefix}perturbation"), 0.0)?,
            });
        }
        let spec = StreamSpec {
            n_features,
            chunk_size: kv.required("chunk_size")?,
            n_chunks: kv.required("n_chunks")?,
            regimes,
            transition: kv.parsed_or("transition", Transition::Sudden)?,
            seed: kv.parsed_or("seed", 0)?,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_key_values(&KeyValues::load(path)?)
    }

    pub fn to_key_values(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let mut out = format!(
            "n_features = {}\nchunk_size = {}\nn_chunks = {}\ntransition = {}\nseed = {}\n",
            self.n_features, self.chunk_size, self.n_chunks, self.transition, self.seed
        );
        for (i, r) in self.regimes.iter().enumerate() {
            out += &format!(
                "regimes.{i}.duration = {}\nregimes.{i}.means = {}\nregimes.{i}.stds = {}\nregimes.{i}.perturbation = {}\n",
                r.duration,
                join(&r.means),
                join(&r.stds),
                r.perturbation
            );
        }
        out
    }
}

fn shifted_means(n_features: usize, fraction: f64, magnitude: f64) -> Vec<f64> {
    let shifted = ((n_features as f64 * fraction).ceil() as usize).min(n_features);
    (0..n_features)
        .map(|j| if j < shifted { magnitude } else { 0.0 })
        .collect()
}

/// Lazily generated synthetic stream.
///
/// Every chunk draws from its own seeded rng, so the stream is reproducible
/// chunk by chunk regardless of how far it is consumed.
#[derive(Debug, Clone)]
pub struct SyntheticStream {
    spec: StreamSpec,
    /// Regime index of every chunk.
    regime_of: Vec<usize>,
    boundaries: Vec<usize>,
    next: usize,
}

impl SyntheticStream {
    pub fn spec(&self) -> &StreamSpec {
        &self.spec
    }

    /// Generates chunk `index` directly.
    pub fn chunk(&self, index: usize) -> Chunk {
        let mut rng = rng_for(self.spec.seed, Purpose::StreamGeneration, index as u64);
        let current = &self.spec.regimes[self.regime_of[index]];
        let new_share = self.blend_share(index);
        let samples = (0..self.spec.chunk_size)
            .map(|_| match new_share {
                Some((prev, share)) if rng.random::<f64>() >= share => {
                    self.spec.regimes[prev].draw(&mut rng)
                }
                _ => current.draw(&mut rng),
            })
            .collect();
        Chunk { index, samples }
    }

    /// Previous regime and share of the new one, while blending.
    fn blend_share(&self, index: usize) -> Option<(usize, f64)> {
        let Transition::Incremental(blend) = self.spec.transition else {
            return None;
        };
        let start = self
            .boundaries
            .iter()
            .copied()
            .filter(|&b| b <= index)
            .last()?;
        let offset = index - start;
        (offset < blend).then(|| {
            (
                self.regime_of[start] - 1,
                (offset + 1) as f64 / (blend + 1) as f64,
            )
        })
    }
}

impl Iterator for SyntheticStream {
    type Item = Chunk;

    fn next(&mut self) -> Option<Chunk> {
        if self.next >= self.spec.n_chunks {
            return None;
        }
        let chunk = self.chunk(self.next);
        self.next += 1;
        Some(chunk)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.spec.n_chunks - self.next;
        (left, Some(left))
    }
}

impl ExactSizeIterator for SyntheticStream {}

/// Builds the stream described by `spec` together with its shift labels.
pub fn generate_stream(spec: &StreamSpec) -> Result<(Vec<Chunk>, GroundTruth)> {
    let (stream, truth) = synthetic_stream(spec)?;
    Ok((stream.collect(), truth))
}

/// Lazy form of [`generate_stream`].
pub fn synthetic_stream(spec: &StreamSpec) -> Result<(SyntheticStream, GroundTruth)> {
    spec.validate()?;
    let regime_of = spec
        .regimes
        .iter()
        .enumerate()
        .flat_map(|(i, r)| std::iter::repeat_n(i, r.duration))
        .collect();
    let stream = SyntheticStream {
        spec: spec.clone(),
        regime_of,
        boundaries: spec.boundaries(),
        next: 0,
    };
    Ok((stream, spec.ground_truth()))
}

/// Alternates blocks of `period` rows from `a` and `b`, starting with `a`,
/// until the source due next is exhausted.
///
/// Every chunk that contains the first row of a new block is marked as a
/// shift.
pub fn interleave_rows(
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    period: usize,
    chunk_size: usize,
) -> Result<(Vec<Chunk>, GroundTruth)> {
    if period == 0 {
        return Err(Error::invalid("period", "must be positive"));
    }
    if chunk_size == 0 {
        return Err(Error::invalid("chunk-size", "must be positive"));
    }
    let dim_a = a.first().map(Vec::len);
    let dim_b = b.first().map(Vec::len);
    if let (Some(da), Some(db)) = (dim_a, dim_b) {
        if da != db {
            return Err(Error::DimensionMismatch {
                expected: da,
                actual: db,
            });
        }
    }

    let mut sources = [a.into_iter(), b.into_iter()];
    let mut rows = Vec::new();
    let mut exchanges = Vec::new();
    for turn in 0.. {
        let block: Vec<Vec<f64>> = sources[turn % 2].by_ref().take(period).collect();
        if block.is_empty() {
            break;
        }
        if turn > 0 {
            exchanges.push(rows.len());
        }
        let short = block.len() < period;
        rows.extend(block);
        if short {
            break;
        }
    }

    let chunks = chunk_rows(rows, chunk_size, 0)?;
    let mut shift_chunks: Vec<usize> = exchanges
        .into_iter()
        .map(|r| r / chunk_size)
        .filter(|&c| c < chunks.len())
        .collect();
    shift_chunks.dedup();
    Ok((chunks, GroundTruth { shift_chunks }))
}

/// [`interleave_rows`] over two CSV files.
pub fn interleave_datasets(
    a: impl AsRef<Path>,
    b: impl AsRef<Path>,
    period: usize,
    chunk_size: usize,
) -> Result<(Vec<Chunk>, GroundTruth)> {
    interleave_rows(read_rows(a)?, read_rows(b)?, period, chunk_size)
}

/// Where a stream comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum StreamSource {
    Csv(PathBuf),
    Generated(StreamSpec),
}
