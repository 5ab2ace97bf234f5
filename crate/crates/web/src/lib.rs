//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Each exported function has a plain Rust counterpart returning
//! `driftmap::Result`, which is what the native tests exercise.

use driftmap::divergence::kl_gaussian_params;
use driftmap::prelude::{
    evaluate, generate_stream, run_monitor, DetectorConfig, FeatureMap, GridMetric, GridSpec, MapKind, StreamSpec,
    TrainSchedule, Transition,
};
use driftmap::stream::Regime;
use wasm_bindgen::prelude::*;

fn js_err(e: driftmap::Error) -> JsError {
    JsError::new(&e.to_string())
}

const FEATURES: usize = 10;
const CHUNK: usize = 100;
const PERIOD: usize = 20;
const SHIFTS: usize = 4;

/// Scores of one simulated monitoring run.
#[wasm_bindgen]
#[derive(Debug, Clone)]
pub struct MonitorDemo {
    chunks: Vec<u32>,
    scores: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    flagged: Vec<u32>,
    truth: Vec<u32>,
    kappa: f64,
    recall: f64,
    fpr: f64,
}

#[wasm_bindgen]
impl MonitorDemo {
    #[wasm_bindgen(getter)]
    pub fn chunks(&self) -> Vec<u32> {
        self.chunks.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn scores(&self) -> Vec<f64> {
        self.scores.clone()
    }

    /// Lower decision bound per chunk, `-Infinity` while warming up.
    #[wasm_bindgen(getter)]
    pub fn lower(&self) -> Vec<f64> {
        self.lower.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn upper(&self) -> Vec<f64> {
        self.upper.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn flagged(&self) -> Vec<u32> {
        self.flagged.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn truth(&self) -> Vec<u32> {
        self.truth.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    #[wasm_bindgen(getter)]
    pub fn recall(&self) -> f64 {
        self.recall
    }

    #[wasm_bindgen(getter)]
    pub fn fpr(&self) -> f64 {
        self.fpr
    }
}

fn to_u32(v: &[usize]) -> Vec<u32> {
    v.iter().map(|&i| i as u32).collect()
}

/// Trains a small map on a stationary reference stream, then monitors an
/// alternating stream with four sudden shifts.
pub fn monitor_demo(
    kind: MapKind,
    magnitude: f64,
    shifted_fraction: f64,
    alpha: f64,
    window: usize,
    seed: u64,
) -> driftmap::Result<MonitorDemo> {
    let spec = StreamSpec::alternating(FEATURES, CHUNK, PERIOD, SHIFTS, shifted_fraction, magnitude, seed);
    let reference = StreamSpec::alternating(FEATURES, CHUNK, PERIOD, 0, shifted_fraction, magnitude, seed ^ 0x5eed);
    let (chunks, truth) = generate_stream(&spec)?;
    let (ref_chunks, _) = generate_stream(&reference)?;
    let rows: Vec<Vec<f64>> = ref_chunks.into_iter().flat_map(|c| c.samples).collect();

    let grid = GridSpec::new(6, 6, GridMetric::Manhattan)?;
    let schedule = TrainSchedule {
        epochs: 8,
        ..TrainSchedule::default()
    };
    let mut map = FeatureMap::init(grid, kind, &rows, seed)?;
    map.train(&rows, &schedule, seed)?;

    let config = DetectorConfig {
        alpha,
        window,
        chunk_size: CHUNK,
        ..DetectorConfig::default()
    };
    let run = run_monitor(&chunks, map, &schedule, &config, seed)?;
    let flagged = run.signal.flagged();
    let report = evaluate(&flagged, &truth.shift_chunks, 1..chunks.len(), 1)?;
    let points = &run.signal.points;
    Ok(MonitorDemo {
        chunks: points.iter().map(|p| p.chunk_index as u32).collect(),
        scores: points.iter().map(|p| p.score).collect(),
        lower: points.iter().map(|p| p.lower).collect(),
        upper: points.iter().map(|p| p.upper).collect(),
        flagged: to_u32(&flagged),
        truth: to_u32(&truth.shift_chunks),
        kappa: report.kappa,
        recall: report.recall,
        fpr: report.fpr,
    })
}

/// `kind` is `"som"` or `"sim"`.
#[wasm_bindgen]
pub fn simulate_monitor(
    kind: &str,
    magnitude: f64,
    shifted_fraction: f64,
    alpha: f64,
    window: usize,
    seed: u32,
) -> Result<MonitorDemo, JsError> {
    let kind: MapKind = kind.parse().map_err(js_err)?;
    monitor_demo(kind, magnitude, shifted_fraction, alpha, window, seed as u64).map_err(js_err)
}

/// `KL(p ‖ q)` for Gaussians given by mean and standard deviation.
#[wasm_bindgen]
pub fn gaussian_kl(mu_p: f64, sd_p: f64, mu_q: f64, sd_q: f64) -> Result<f64, JsError> {
    kl_gaussian_params(mu_p, sd_p * sd_p, mu_q, sd_q * sd_q).map_err(js_err)
}

/// A map trained on two-dimensional clustered points.
#[wasm_bindgen]
#[derive(Debug, Clone)]
pub struct Lattice {
    rows: usize,
    cols: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
    errors: Vec<f64>,
}

#[wasm_bindgen]
impl Lattice {
    #[wasm_bindgen(getter)]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[wasm_bindgen(getter)]
    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Training points as interleaved `x, y` pairs.
    #[wasm_bindgen(getter)]
    pub fn points(&self) -> Vec<f64> {
        self.points.clone()
    }

    /// Neuron weights in row-major order as interleaved `x, y` pairs.
    #[wasm_bindgen(getter)]
    pub fn weights(&self) -> Vec<f64> {
        self.weights.clone()
    }

    /// Quantization error before training followed by one value per epoch.
    #[wasm_bindgen(getter)]
    pub fn errors(&self) -> Vec<f64> {
        self.errors.clone()
    }
}

fn cluster(x: f64, y: f64, duration: usize) -> Regime {
    Regime {
        means: vec![x, y],
        stds: vec![0.45, 0.45],
        duration,
        perturbation: 0.0,
    }
}

pub fn lattice_demo(kind: MapKind, side: usize, epochs: usize, seed: u64) -> driftmap::Result<Lattice> {
    let spec = StreamSpec {
        n_features: 2,
        chunk_size: 100,
        n_chunks: 6,
        regimes: vec![cluster(-2.0, -1.5, 2), cluster(2.0, -1.0, 2), cluster(0.0, 2.0, 2)],
        transition: Transition::Sudden,
        seed,
    };
    let (chunks, _) = generate_stream(&spec)?;
    let rows: Vec<Vec<f64>> = chunks.into_iter().flat_map(|c| c.samples).collect();
    let grid = GridSpec::new(side, side, GridMetric::Manhattan)?;
    let schedule = TrainSchedule {
        epochs,
        sigma_start: (side as f64 / 3.0).max(1.0),
        ..TrainSchedule::default()
    };
    let mut map = FeatureMap::init(grid, kind, &rows, seed)?;
    let history = map.train(&rows, &schedule, seed)?;
    let mut errors = vec![history.initial_error];
    errors.extend(history.epoch_errors);
    Ok(Lattice {
        rows: side,
        cols: side,
        points: rows.into_iter().flatten().collect(),
        weights: map.weights().to_vec(),
        errors,
    })
}

#[wasm_bindgen]
pub fn train_lattice(kind: &str, side: usize, epochs: usize, seed: u32) -> Result<Lattice, JsError> {
    let kind: MapKind = kind.parse().map_err(js_err)?;
    lattice_demo(kind, side, epochs, seed as u64).map_err(js_err)
}
