//! Topology-preserving feature maps: the Kohonen self-organizing map (SOM)
//! and the scale-invariant map (SIM).
//!
//! Both maps share the lattice, winner search and neighborhood machinery.
//! They differ only in the update: a SOM pulls every neuron toward the input
//! (`w_i += eta·h·(x − w_i)`), a SIM moves every neuron along the winner's
//! error (`w_i += eta·h·(x − w_v)`), so all deltas of one step are parallel.

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{rng_for, Purpose};

/// Distance between lattice positions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridMetric {
    #[default]
    Manhattan,
    Euclidean,
    Chebyshev,
}

impl std::str::FromStr for GridMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "manhattan" => Ok(GridMetric::Manhattan),
            "euclidean" => Ok(GridMetric::Euclidean),
            "chebyshev" => Ok(GridMetric::Chebyshev),
            _ => Err(Error::invalid("grid-metric", format!("unknown metric {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Position {
    pub row: usize,
    pub col: usize,
}

impl Position {
    pub const fn new(row: usize, col: usize) -> Self {
        Position { row, col }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    rows: usize,
    cols: usize,
    metric: GridMetric,
}

impl GridSpec {
    pub fn new(rows: usize, cols: usize, metric: GridMetric) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid(
                "grid",
                format!("grid must be at least 1x1, got {rows}x{cols}"),
            ));
        }
        Ok(GridSpec { rows, cols, metric })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn metric(&self) -> GridMetric {
        self.metric
    }

    /// Number of neurons.
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Position of the neuron with row-major index `index`.
    pub fn position(&self, index: usize) -> Position {
        Position::new(index / self.cols, index % self.cols)
    }

    pub fn index(&self, pos: Position) -> usize {
        pos.row * self.cols + pos.col
    }

    pub fn contains(&self, pos: Position) -> bool {
        pos.row < self.rows && pos.col < self.cols
    }

    pub fn distance(&self, a: Position, b: Position) -> f64 {
        let dr = a.row.abs_diff(b.row) as f64;
        let dc = a.col.abs_diff(b.col) as f64;
        match self.metric {
            GridMetric::Manhattan => dr + dc,
            GridMetric::Euclidean => dr.hypot(dc),
            GridMetric::Chebyshev => dr.max(dc),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapKind {
    Som,
    Sim,
}

impl std::str::FromStr for MapKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "som" => Ok(MapKind::Som),
            "sim" => Ok(MapKind::Sim),
            _ => Err(Error::invalid("map-kind", format!("expected som or sim, got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NeighborhoodKind {
    #[default]
    Gaussian,
    DifferenceOfGaussians,
}

impl std::str::FromStr for NeighborhoodKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" => Ok(NeighborhoodKind::Gaussian),
            "dog" | "differenceofgaussians" | "difference-of-gaussians" => {
                Ok(NeighborhoodKind::DifferenceOfGaussians)
            }
            _ => Err(Error::invalid(
                "neighborhood",
                format!("expected gaussian or dog, got {s:?}"),
            )),
        }
    }
}

/// Learning-rate and radius schedule for offline training.
///
/// Both `eta` and `sigma` decay exponentially from their start to their end
/// value over the total number of presentations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSchedule {
    pub epochs: usize,
    pub eta_start: f64,
    pub eta_end: f64,
    pub sigma_start: f64,
    pub sigma_end: f64,
    pub neighborhood: NeighborhoodKind,
    /// Radius ratio of the subtracted Gaussian (DoG only).
    pub dog_ratio: f64,
    /// Amplitude of the subtracted Gaussian (DoG only).
    pub dog_amplitude: f64,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        TrainSchedule {
            epochs: 20,
            eta_start: 0.5,
            eta_end: 0.01,
            sigma_start: 3.0,
            sigma_end: 0.5,
            neighborhood: NeighborhoodKind::Gaussian,
            dog_ratio: 1.6,
            dog_amplitude: 0.5,
        }
    }
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("epochs", "must be positive"));
        }
        let unit = 0.0..=1.0;
        if !unit.contains(&self.eta_start) || !unit.contains(&self.eta_end) {
            return Err(Error::invalid("eta", "learning rates must lie in [0, 1]"));
        }
        if self.eta_end > self.eta_start {
            return Err(Error::invalid("eta-end", "must not exceed eta-start"));
        }
        if !(self.sigma_end > 0.0 && self.sigma_start.is_finite()) {
            return Err(Error::invalid("sigma", "radii must be positive and finite"));
        }
        if self.sigma_end > self.sigma_start {
            return Err(Error::invalid("sigma-end", "must not exceed sigma-start"));
        }
        if !(self.dog_ratio > 0.0 && self.dog_ratio.is_finite()) {
            return Err(Error::invalid("dog-ratio", "must be positive"));
        }
        if !unit.contains(&self.dog_amplitude) {
            return Err(Error::invalid("dog-amplitude", "must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn eta_at(&self, t_frac: f64) -> f64 {
        decay(self.eta_start, self.eta_end, t_frac)
    }

    pub fn sigma_at(&self, t_frac: f64) -> f64 {
        decay(self.sigma_start, self.sigma_end, t_frac)
    }

    pub fn neighborhood_at(&self, t_frac: f64) -> Neighborhood {
        self.neighborhood_with_sigma(self.sigma_at(t_frac))
    }

    pub fn neighborhood_with_sigma(&self, sigma: f64) -> Neighborhood {
        Neighborhood {
            kind: self.neighborhood,
            sigma,
            dog_ratio: self.dog_ratio,
            dog_amplitude: self.dog_amplitude,
        }
    }
}

/// `start·(end/start)^t`, falling back to linear interpolation when an
/// endpoint is zero.
fn decay(start: f64, end: f64, t_frac: f64) -> f64 {
    let t = t_frac.clamp(0.0, 1.0);
    if start == end {
        start
    } else if start > 0.0 && end > 0.0 {
        start * (end / start).powf(t)
    } else {
        start + (end - start) * t
    }
}

/// A neighborhood function frozen at one radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighborhood {
    pub kind: NeighborhoodKind,
    pub sigma: f64,
    pub dog_ratio: f64,
    pub dog_amplitude: f64,
}

impl Neighborhood {
    pub fn gaussian(sigma: f64) -> Self {
        Neighborhood {
            kind: NeighborhoodKind::Gaussian,
            sigma,
            dog_ratio: 1.6,
            dog_amplitude: 0.5,
        }
    }

    /// Weight for lattice distance `z`.
    ///
    /// The lattice distance enters unsquared: `exp(−z / (2σ²))`.
    pub fn weight(&self, z: f64) -> f64 {
        let center = (-z / (2.0 * self.sigma * self.sigma)).exp();
        match self.kind {
            NeighborhoodKind::Gaussian => center,
            NeighborhoodKind::DifferenceOfGaussians => {
                let wide = self.dog_ratio * self.sigma;
                center - self.dog_amplitude * (-z / (2.0 * wide * wide)).exp()
            }
        }
    }
}

/// Neighborhood weight of lattice distance `z` at training progress `t_frac`.
pub fn neighborhood(z: f64, sched: &TrainSchedule, t_frac: f64) -> f64 {
    sched.neighborhood_at(t_frac).weight(z)
}

/// Per-epoch quantization errors of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainHistory {
    /// Error of the map before the first presentation.
    pub initial_error: f64,
    /// Error after each completed epoch.
    pub epoch_errors: Vec<f64>,
}

impl TrainHistory {
    pub fn final_error(&self) -> f64 {
        self.epoch_errors
            .last()
            .copied()
            .unwrap_or(self.initial_error)
    }
}

/// A trained (or initialized) lattice of weight vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    grid: GridSpec,
    kind: MapKind,
    input_dim: usize,
    /// Row-major neuron order, `input_dim` values per neuron.
    weights: Vec<f64>,
}

/// Dimension shared by all rows.
pub(crate) fn common_dim(rows: &[Vec<f64>]) -> Result<usize> {
    let first = rows.first().ok_or(Error::Empty("sample collection"))?;
    let dim = first.len();
    if dim == 0 {
        return Err(Error::invalid("samples", "rows must have at least one feature"));
    }
    for (row, r) in rows.iter().enumerate() {
        if r.len() != dim {
            return Err(Error::RaggedRows {
                row,
                expected: dim,
                actual: r.len(),
            });
        }
    }
    Ok(dim)
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl FeatureMap {
    /// Seeds every neuron with a training row drawn uniformly with replacement.
    pub fn init(grid: GridSpec, kind: MapKind, training_rows: &[Vec<f64>], seed: u64) -> Result<Self> {
        let input_dim = common_dim(training_rows)?;
        let mut rng = rng_for(seed, Purpose::MapInit, 0);
        let mut weights = Vec::with_capacity(grid.len() * input_dim);
        for _ in 0..grid.len() {
            let pick = rng.random_range(0..training_rows.len());
            weights.extend_from_slice(&training_rows[pick]);
        }
        Ok(FeatureMap {
            grid,
            kind,
            input_dim,
            weights,
        })
    }

    pub fn from_weights(grid: GridSpec, kind: MapKind, input_dim: usize, weights: Vec<f64>) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::invalid("input_dim", "must be positive"));
        }
        if weights.len() != grid.len() * input_dim {
            return Err(Error::DimensionMismatch {
                expected: grid.len() * input_dim,
                actual: weights.len(),
            });
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::invalid("weights", "all weights must be finite"));
        }
        Ok(FeatureMap {
            grid,
            kind,
            input_dim,
            weights,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn kind(&self) -> MapKind {
        self.kind
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, pos: Position) -> &[f64] {
        self.neuron(self.grid.index(pos))
    }

    pub fn neuron(&self, index: usize) -> &[f64] {
        &self.weights[index * self.input_dim..(index + 1) * self.input_dim]
    }

    pub fn neurons(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.weights.chunks_exact(self.input_dim)
    }

    pub(crate) fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                actual: x.len(),
            });
        }
        Ok(())
    }

    /// Best-matching neuron: minimal Euclidean distance, lowest row-major
    /// index on ties.
    pub fn find_winner(&self, x: &[f64]) -> Result<Position> {
        self.check_dim(x)?;
        Ok(self.grid.position(self.winner_index(x).0))
    }

    /// Winner index and its squared distance. `x` must have `input_dim` entries.
    fn winner_index(&self, x: &[f64]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (i, w) in self.neurons().enumerate() {
            let d = squared_distance(x, w);
            if d < best.1 {
                best = (i, d);
            }
        }
        best
    }

    fn check_winner(&self, winner: Position) -> Result<()> {
        if !self.grid.contains(winner) {
            return Err(Error::invalid(
                "winner",
                format!("{winner:?} lies outside the {}x{} grid", self.grid.rows, self.grid.cols),
            ));
        }
        Ok(())
    }

    /// Kohonen step: `w_i += eta·h(|r_v − r_i|)·(x − w_i)` for every neuron.
    pub fn som_update(&mut self, x: &[f64], winner: Position, eta: f64, nb: &Neighborhood) -> Result<()> {
        self.check_dim(x)?;
        self.check_winner(winner)?;
        let dim = self.input_dim;
        for (i, w) in self.weights.chunks_exact_mut(dim).enumerate() {
            let step = eta * nb.weight(self.grid.distance(winner, self.grid.position(i)));
            if step == 0.0 {
                continue;
            }
            for (wj, xj) in w.iter_mut().zip(x) {
                *wj += step * (xj - *wj);
            }
        }
        Ok(())
    }

    /// Scale-invariant step: `w_i += eta·h(|r_v − r_i|)·(x − w_v)` with
    /// `w_v` taken before the step.
    pub fn sim_update(&mut self, x: &[f64], winner: Position, eta: f64, nb: &Neighborhood) -> Result<()> {
        self.check_dim(x)?;
        self.check_winner(winner)?;
        let dim = self.input_dim;
        let error: Vec<f64> = x
            .iter()
            .zip(self.weight(winner))
            .map(|(xj, wj)| xj - wj)
            .collect();
        for (i, w) in self.weights.chunks_exact_mut(dim).enumerate() {
            let step = eta * nb.weight(self.grid.distance(winner, self.grid.position(i)));
            if step == 0.0 {
                continue;
            }
            for (wj, ej) in w.iter_mut().zip(&error) {
                *wj += step * ej;
            }
        }
        Ok(())
    }

    /// Applies the update rule that belongs to this map's kind.
    pub fn update(&mut self, x: &[f64], winner: Position, eta: f64, nb: &Neighborhood) -> Result<()> {
        match self.kind {
            MapKind::Som => self.som_update(x, winner, eta, nb),
            MapKind::Sim => self.sim_update(x, winner, eta, nb),
        }
    }

    /// Offline training over `data`, one seeded shuffle per epoch.
    pub fn train(&mut self, data: &[Vec<f64>], sched: &TrainSchedule, seed: u64) -> Result<TrainHistory> {
        sched.validate()?;
        let dim = common_dim(data)?;
        self.check_dim(&data[0][..dim])?;

        let initial_error = self.quantization_error(data)?;
        let mut rng = rng_for(seed, Purpose::Training, 0);
        let total = sched.epochs * data.len();
        let denom = total.saturating_sub(1).max(1) as f64;
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut epoch_errors = Vec::with_capacity(sched.epochs);
        let mut t = 0usize;
        for _ in 0..sched.epochs {
            order.shuffle(&mut rng);
            for &i in &order {
                let t_frac = t as f64 / denom;
                let x = &data[i];
                let winner = self.grid.position(self.winner_index(x).0);
                let nb = sched.neighborhood_at(t_frac);
                self.update(x, winner, sched.eta_at(t_frac), &nb)?;
                t += 1;
            }
            epoch_errors.push(self.quantization_error(data)?);
        }
        Ok(TrainHistory {
            initial_error,
            epoch_errors,
        })
    }

    /// Mean distance from each sample to its winner's weight vector.
    pub fn quantization_error(&self, data: &[Vec<f64>]) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::Empty("sample collection"));
        }
        let mut total = 0.0;
        for x in data {
            self.check_dim(x)?;
            total += self.winner_index(x).1.sqrt();
        }
        Ok(total / data.len() as f64)
    }

    pub fn write_json<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer_pretty(writer, &MapFile::from(self))?;
        Ok(())
    }

    pub fn read_json<R: Read>(reader: R) -> Result<Self> {
        let file: MapFile = serde_json::from_reader(reader)?;
        file.try_into()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut writer = std::io::BufWriter::new(file);
        self.write_json(&mut writer)?;
        writer
            .write_all(b"\n")
            .and_then(|_| writer.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_json(std::io::BufReader::new(file))
    }
}

const MAP_FORMAT: &str = "driftmap/feature-map";

/// On-disk layout of a [`FeatureMap`].
#[derive(Serialize, Deserialize)]
struct MapFile {
    format: String,
    version: u32,
    kind: MapKind,
    rows: usize,
    cols: usize,
    grid_metric: GridMetric,
    input_dim: usize,
    /// Row-major neurons, `input_dim` values each.
    weights: Vec<f64>,
}

impl From<&FeatureMap> for MapFile {
    fn from(map: &FeatureMap) -> Self {
        MapFile {
            format: MAP_FORMAT.to_string(),
            version: 1,
            kind: map.kind,
            rows: map.grid.rows,
            cols: map.grid.cols,
            grid_metric: map.grid.metric,
            input_dim: map.input_dim,
            weights: map.weights.clone(),
        }
    }
}

impl TryFrom<MapFile> for FeatureMap {
    type Error = Error;

    fn try_from(file: MapFile) -> Result<Self> {
        if file.format != MAP_FORMAT || file.version != 1 {
            return Err(Error::invalid(
                "map file",
                format!("unsupported format {:?} version {}", file.format, file.version),
            ));
        }
        let grid = GridSpec::new(file.rows, file.cols, file.grid_metric)?;
        FeatureMap::from_weights(grid, file.kind, file.input_dim, file.weights)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian_rows(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect()
    }

    fn map_from(rows: usize, cols: usize, dim: usize, weights: Vec<f64>, kind: MapKind) -> FeatureMap {
        let grid = GridSpec::new(rows, cols, GridMetric::Manhattan).unwrap();
        FeatureMap::from_weights(grid, kind, dim, weights).unwrap()
    }

    #[test]
    fn grid_rejects_empty_dims() {
        assert!(GridSpec::new(0, 3, GridMetric::Manhattan).is_err());
        assert!(GridSpec::new(3, 0, GridMetric::Manhattan).is_err());
    }

    #[test]
    fn grid_metrics() {
        let a = Position::new(0, 0);
        let b = Position::new(3, 4);
        let dist = |m| GridSpec::new(5, 5, m).unwrap().distance(a, b);
        assert_eq!(dist(GridMetric::Manhattan), 7.0);
        assert_eq!(dist(GridMetric::Euclidean), 5.0);
        assert_eq!(dist(GridMetric::Chebyshev), 4.0);
    }

    #[test]
    fn init_single_neuron_takes_only_row() {
        let grid = GridSpec::new(1, 1, GridMetric::Manhattan).unwrap();
        for seed in [0, 1, 99] {
            let map = FeatureMap::init(grid, MapKind::Som, &[vec![2.0, 3.0]], seed).unwrap();
            assert_eq!(map.weights(), &[2.0, 3.0]);
        }
    }

    #[test]
    fn init_is_deterministic() {
        let rows = gaussian_rows(50, 3, 1);
        let grid = GridSpec::new(2, 2, GridMetric::Manhattan).unwrap();
        let a = FeatureMap::init(grid, MapKind::Som, &rows, 7).unwrap();
        let b = FeatureMap::init(grid, MapKind::Som, &rows, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn init_weights_are_training_rows() {
        let rows = gaussian_rows(1000, 20, 2);
        let grid = GridSpec::new(10, 10, GridMetric::Manhattan).unwrap();
        let map = FeatureMap::init(grid, MapKind::Som, &rows, 3).unwrap();
        for w in map.neurons() {
            assert!(rows.iter().any(|r| r.as_slice() == w));
        }
    }

    #[test]
    fn init_errors() {
        let grid = GridSpec::new(2, 2, GridMetric::Manhattan).unwrap();
        assert!(matches!(
            FeatureMap::init(grid, MapKind::Som, &[], 0),
            Err(Error::Empty(_))
        ));
        assert!(matches!(
            FeatureMap::init(grid, MapKind::Som, &[vec![1.0, 2.0], vec![1.0]], 0),
            Err(Error::RaggedRows { row: 1, .. })
        ));
    }

    #[test]
    fn winner_exact_match() {
        let map = map_from(1, 2, 2, vec![5.0, 5.0, 1.0, -1.0], MapKind::Som);
        assert_eq!(map.find_winner(&[1.0, -1.0]).unwrap(), Position::new(0, 1));
    }

    #[test]
    fn winner_tie_prefers_lowest_index() {
        let mut weights = vec![10.0; 9];
        weights[0] = -1.0;
        weights[8] = 1.0;
        let map = map_from(3, 3, 1, weights, MapKind::Som);
        assert_eq!(map.find_winner(&[0.0]).unwrap(), Position::new(0, 0));
    }

    #[test]
    fn winner_dimension_mismatch() {
        let map = map_from(1, 1, 2, vec![0.0, 0.0], MapKind::Som);
        assert!(matches!(
            map.find_winner(&[1.0]),
            Err(Error::DimensionMismatch { expected: 2, actual: 1 })
        ));
    }

    #[test]
    fn neighborhood_values() {
        let sched = TrainSchedule {
            sigma_start: 1.7,
            sigma_end: 1.7,
            ..TrainSchedule::default()
        };
        assert_eq!(neighborhood(0.0, &sched, 0.3), 1.0);
        let z = 2.0 * 1.7 * 1.7;
        assert!((neighborhood(z, &sched, 0.9) - (-1.0f64).exp()).abs() < 1e-12);
        let dog = TrainSchedule {
            neighborhood: NeighborhoodKind::DifferenceOfGaussians,
            dog_amplitude: 0.5,
            ..sched
        };
        assert!((neighborhood(0.0, &dog, 0.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn decay_is_exponential_between_endpoints() {
        let sched = TrainSchedule {
            eta_start: 0.8,
            eta_end: 0.2,
            ..TrainSchedule::default()
        };
        assert_eq!(sched.eta_at(0.0), 0.8);
        assert!((sched.eta_at(1.0) - 0.2).abs() < 1e-15);
        assert!((sched.eta_at(0.5) - 0.4).abs() < 1e-12);
    }

    #[test]
    fn som_zero_eta_is_identity() {
        let mut map = map_from(2, 2, 2, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0], MapKind::Som);
        let before = map.clone();
        map.som_update(&[9.0, 9.0], Position::new(0, 0), 0.0, &Neighborhood::gaussian(1.0))
            .unwrap();
        assert_eq!(map, before);
    }

    #[test]
    fn full_step_lands_winner_on_input() {
        for kind in [MapKind::Som, MapKind::Sim] {
            let mut map = map_from(2, 2, 2, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0], kind);
            let x = [-3.5, 8.25];
            let winner = map.find_winner(&x).unwrap();
            map.update(&x, winner, 1.0, &Neighborhood::gaussian(0.7)).unwrap();
            assert_eq!(map.weight(winner), &x);
        }
    }

    #[test]
    fn som_update_matches_scalar_recomputation() {
        let weights = vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0];
        let mut map = map_from(2, 2, 2, weights.clone(), MapKind::Som);
        let x = [1.0, -2.0];
        let winner = Position::new(0, 1);
        let sigma = 10.0;
        map.som_update(&x, winner, 0.5, &Neighborhood::gaussian(sigma)).unwrap();
        // lattice distances from (0,1) under Manhattan: (0,0)=1, (0,1)=0, (1,0)=2, (1,1)=1
        let z = [1.0, 0.0, 2.0, 1.0];
        for i in 0..4 {
            let h = (-z[i] / (2.0 * sigma * sigma)).exp();
            for j in 0..2 {
                let w = weights[i * 2 + j];
                let expected = w + 0.5 * h * (x[j] - w);
                assert!((map.weights()[i * 2 + j] - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sim_equal_neighborhood_gives_equal_deltas() {
        // (0,0) and (0,2) are both at distance 1 from the winner (0,1).
        let weights = vec![0.0, 0.0, 1.0, 1.0, 5.0, -2.0];
        let mut map = map_from(1, 3, 2, weights.clone(), MapKind::Sim);
        map.sim_update(&[3.0, 0.0], Position::new(0, 1), 0.5, &Neighborhood::gaussian(1.0))
            .unwrap();
        let d0: Vec<f64> = (0..2).map(|j| map.weights()[j] - weights[j]).collect();
        let d2: Vec<f64> = (0..2).map(|j| map.weights()[4 + j] - weights[4 + j]).collect();
        for (a, b) in d0.iter().zip(&d2) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn sim_deltas_scale_with_neighborhood_ratio() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let weights: Vec<f64> = (0..9 * 4).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mut map = map_from(3, 3, 4, weights.clone(), MapKind::Sim);
        let x: Vec<f64> = (0..4).map(|_| StandardNormal.sample(&mut rng)).collect();
        let winner = map.find_winner(&x).unwrap();
        let wv = map.weight(winner).to_vec();
        let nb = Neighborhood::gaussian(1.3);
        map.sim_update(&x, winner, 0.3, &nb).unwrap();
        let grid = *map.grid();
        for i in 0..9 {
            let h = nb.weight(grid.distance(winner, grid.position(i)));
            for j in 0..4 {
                let delta = map.weights()[i * 4 + j] - weights[i * 4 + j];
                assert!((delta - 0.3 * h * (x[j] - wv[j])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn update_rejects_bad_inputs() {
        let mut map = map_from(1, 2, 2, vec![0.0; 4], MapKind::Som);
        let nb = Neighborhood::gaussian(1.0);
        assert!(map.som_update(&[1.0], Position::new(0, 0), 0.5, &nb).is_err());
        assert!(map.sim_update(&[1.0, 1.0], Position::new(3, 0), 0.5, &nb).is_err());
    }

    #[test]
    fn train_with_zero_eta_leaves_weights() {
        let rows = gaussian_rows(40, 3, 5);
        let grid = GridSpec::new(3, 3, GridMetric::Manhattan).unwrap();
        let mut map = FeatureMap::init(grid, MapKind::Som, &rows, 1).unwrap();
        let before = map.clone();
        let sched = TrainSchedule {
            epochs: 1,
            eta_start: 0.0,
            eta_end: 0.0,
            ..TrainSchedule::default()
        };
        let history = map.train(&rows, &sched, 4).unwrap();
        assert_eq!(map, before);
        assert_eq!(history.epoch_errors.len(), 1);
    }

    #[test]
    fn train_is_deterministic() {
        let rows = gaussian_rows(200, 5, 8);
        let grid = GridSpec::new(4, 4, GridMetric::Manhattan).unwrap();
        let sched = TrainSchedule {
            epochs: 5,
            ..TrainSchedule::default()
        };
        let run = || {
            let mut map = FeatureMap::init(grid, MapKind::Sim, &rows, 2).unwrap();
            let h = map.train(&rows, &sched, 3).unwrap();
            (map, h)
        };
        let (ma, ha) = run();
        let (mb, hb) = run();
        assert_eq!(ma, mb);
        assert_eq!(ha, hb);
    }

    #[test]
    fn train_rejects_empty_data() {
        let grid = GridSpec::new(1, 1, GridMetric::Manhattan).unwrap();
        let mut map = FeatureMap::from_weights(grid, MapKind::Som, 1, vec![0.0]).unwrap();
        assert!(map.train(&[], &TrainSchedule::default(), 0).is_err());
    }

    #[test]
    fn quantization_error_cases() {
        let weights = vec![0.0, 0.0, 10.0, 10.0];
        let map = map_from(1, 2, 2, weights, MapKind::Som);
        assert_eq!(map.quantization_error(&[vec![0.0, 0.0], vec![10.0, 10.0]]).unwrap(), 0.0);
        assert_eq!(map.quantization_error(&[vec![3.0, 0.0]]).unwrap(), 3.0);
        assert!(map.quantization_error(&[]).is_err());
    }

    #[test]
    fn quantization_error_matches_brute_force() {
        let rows = gaussian_rows(100, 6, 21);
        let grid = GridSpec::new(3, 4, GridMetric::Manhattan).unwrap();
        let map = FeatureMap::init(grid, MapKind::Som, &gaussian_rows(30, 6, 22), 0).unwrap();
        let brute: f64 = rows
            .iter()
            .map(|x| {
                map.neurons()
                    .map(|w| x.iter().zip(w).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
                    .fold(f64::INFINITY, f64::min)
            })
            .sum::<f64>()
            / rows.len() as f64;
        assert!((map.quantization_error(&rows).unwrap() - brute).abs() < 1e-12);
    }

    #[test]
    fn json_round_trip_is_lossless() {
        let rows = gaussian_rows(30, 3, 4);
        let grid = GridSpec::new(3, 2, GridMetric::Chebyshev).unwrap();
        let mut map = FeatureMap::init(grid, MapKind::Sim, &rows, 1).unwrap();
        map.train(&rows, &TrainSchedule { epochs: 2, ..Default::default() }, 1)
            .unwrap();
        let mut buf = Vec::new();
        map.write_json(&mut buf).unwrap();
        let back = FeatureMap::read_json(buf.as_slice()).unwrap();
        assert_eq!(back, map);
        for (a, b) in back.weights().iter().zip(map.weights()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn malformed_map_file_is_rejected() {
        let bad = r#"{"format":"driftmap/feature-map","version":1,"kind":"som","rows":2,"cols":2,
            "grid_metric":"manhattan","input_dim":2,"weights":[1.0,2.0]}"#;
        assert!(FeatureMap::read_json(bad.as_bytes()).is_err());
    }
}
