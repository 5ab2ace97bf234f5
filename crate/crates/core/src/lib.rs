//! Distribution-shift monitoring for data streams.
//!
//! Samples are projected through a trained topology-preserving map (a
//! Kohonen self-organizing map or a scale-invariant map). Each sample's
//! distances to every neuron are averaged into one scalar, each chunk of
//! scalars is summarized by a Gaussian fit, and consecutive chunks are
//! compared with the closed-form Gaussian KL divergence. A sliding-window
//! `mean ± alpha·std` rule flags shifts, and the map is refreshed on the
//! chunk that triggered the flag.
//!
//! ```
//! use driftmap::prelude::*;
//!
//! let spec = StreamSpec::two_regime_example(4, 50, 20, 10, 3.0, 7);
//! let (chunks, truth) = generate_stream(&spec).unwrap();
//! let training: Vec<Vec<f64>> = chunks[..4].iter().flat_map(|c| c.samples.clone()).collect();
//!
//! let grid = GridSpec::new(4, 4, GridMetric::Manhattan).unwrap();
//! let mut map = FeatureMap::init(grid, MapKind::Som, &training, 1).unwrap();
//! let schedule = TrainSchedule::default();
//! map.train(&training, &schedule, 1).unwrap();
//!
//! let config = DetectorConfig { alpha: 5.0, window: 4, ..DetectorConfig::default() };
//! let run = run_monitor(chunks, map, &schedule, &config, 3).unwrap();
//! assert_eq!(run.signal.len(), 19);
//! assert_eq!(truth.shift_chunks, vec![10]);
//! ```

pub mod baseline;
#[cfg(feature = "cli")]
pub mod cli;
pub mod config;
pub mod detector;
pub mod divergence;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod export;
pub mod rng;
pub mod stream;
pub mod topo_map;

pub use error::{Error, Result};

pub mod prelude {
    pub use crate::baseline::{cumulative_hist_distance, ks_statistic, PcaModel};
    pub use crate::detector::{
        decide, run_monitor, Detector, DetectorConfig, MonitorRun, MonitorSignal, ShiftEvent,
        SignalPoint,
    };
    pub use crate::divergence::{kl_discrete, kl_gaussian, DiscretePmf};
    pub use crate::embedding::{
        chunk_summary, compute_moments, distance_matrix, sample_statistic, GaussianSummary,
        MomentVector,
    };
    pub use crate::eval::{evaluate, kappa, tolerant_align, DetectionReport};
    pub use crate::stream::{generate_stream, Chunk, GroundTruth, Regime, StreamSpec, Transition};
    pub use crate::topo_map::{
        FeatureMap, GridMetric, GridSpec, MapKind, NeighborhoodKind, Position, TrainSchedule,
    };
    pub use crate::{Error, Result};
}
