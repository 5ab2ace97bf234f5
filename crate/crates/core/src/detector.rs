//! The continual-learning shift monitor.
//!
//! For every chunk the monitor fits a Gaussian to the per-sample statistic,
//! scores it against the previous chunk with the Gaussian KL divergence and
//! flags the score when it leaves `mean ± alpha·std` of the recent scores.
//! A flagged chunk is used to refresh the map weights.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::divergence::kl_gaussian;
use crate::embedding::{chunk_summary, GaussianSummary};
use crate::error::{Error, Result};
use crate::rng::{rng_for, Purpose};
use crate::stream::Chunk;
use crate::topo_map::{FeatureMap, Neighborhood, TrainSchedule};

/// Smallest standard deviation used by the decision rule.
pub const STD_FLOOR: f64 = 1e-12;

/// Per-sample statistic fed to the monitor.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Statistic {
    /// Mean of the sample's distance matrix.
    #[default]
    M1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub alpha: f64,
    /// Number of recent scores the decision rule looks at.
    pub window: usize,
    pub chunk_size: usize,
    /// Learning rate of the update performed after a detected shift.
    pub cl_eta: f64,
    pub cl_epochs: usize,
    pub statistic: Statistic,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            alpha: 5.0,
            window: 8,
            chunk_size: 200,
            cl_eta: 0.05,
            cl_epochs: 1,
            statistic: Statistic::M1,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::invalid("alpha", "must be positive"));
        }
        if self.window == 0 {
            return Err(Error::invalid("window", "must be at least 1"));
        }
        if self.chunk_size == 0 {
            return Err(Error::invalid("chunk-size", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.cl_eta) {
            return Err(Error::invalid("cl-eta", "must lie in [0, 1]"));
        }
        if self.cl_epochs == 0 {
            return Err(Error::invalid("cl-epochs", "must be positive"));
        }
        Ok(())
    }
}

/// `[mean − alpha·std, mean + alpha·std]` of `recent`, with the sample
/// (n − 1) standard deviation floored at [`STD_FLOOR`].
pub fn decision_bounds(recent: &[f64], alpha: f64) -> Result<(f64, f64)> {
    if recent.is_empty() {
        return Err(Error::Empty("decision window"));
    }
    let n = recent.len() as f64;
    let mean = recent.iter().sum::<f64>() / n;
    let var = if recent.len() > 1 {
        recent.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let half = alpha * var.sqrt().max(STD_FLOOR);
    Ok((mean - half, mean + half))
}

/// True when `current` falls outside the `alpha·std` band of `recent`.
pub fn decide(recent: &[f64], current: f64, alpha: f64) -> Result<bool> {
    let (lower, upper) = decision_bounds(recent, alpha)?;
    Ok(current < lower || current > upper)
}

/// One scored chunk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalPoint {
    pub chunk_index: usize,
    pub score: f64,
    /// Infinite while the decision window is still filling.
    pub lower: f64,
    pub upper: f64,
    pub shift: bool,
}

/// The KL score sequence of a monitoring run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MonitorSignal {
    pub points: Vec<SignalPoint>,
}

impl MonitorSignal {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn scores(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.score).collect()
    }

    pub fn flagged(&self) -> Vec<usize> {
        self.points
            .iter()
            .filter(|p| p.shift)
            .map(|p| p.chunk_index)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ShiftAction {
    WeightsUpdated,
    /// Continual updates are disabled (`cl_eta = 0`).
    NoUpdate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftEvent {
    pub chunk_index: usize,
    pub score: f64,
    pub lower: f64,
    pub upper: f64,
    pub action: ShiftAction,
}

/// Result of feeding one chunk to the detector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    /// `None` for the bootstrap chunk.
    pub point: Option<SignalPoint>,
    pub event: Option<ShiftEvent>,
}

/// Refreshes `map` on `samples`: `epochs` shuffled passes of the map's own
/// update rule with fixed learning rate and neighborhood.
pub fn cl_update(
    map: &mut FeatureMap,
    samples: &[Vec<f64>],
    eta: f64,
    epochs: usize,
    nb: &Neighborhood,
    seed: u64,
    counter: u64,
) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::Empty("chunk"));
    }
    if eta == 0.0 {
        return Ok(());
    }
    let mut rng = rng_for(seed, Purpose::ContinualUpdate, counter);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let x = &samples[i];
            let winner = map.find_winner(x)?;
            map.update(x, winner, eta, nb)?;
        }
    }
    Ok(())
}

/// Streaming detector state. Chunks must arrive in stream order.
#[derive(Debug, Clone)]
pub struct Detector {
    map: FeatureMap,
    config: DetectorConfig,
    cl_neighborhood: Neighborhood,
    seed: u64,
    prev: Option<GaussianSummary>,
    last_index: Option<usize>,
    window: VecDeque<f64>,
    updates: u64,
}

impl Detector {
    /// The continual update uses the schedule's final radius.
    pub fn new(map: FeatureMap, schedule: &TrainSchedule, config: DetectorConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        schedule.validate()?;
        let cl_neighborhood = schedule.neighborhood_with_sigma(schedule.sigma_end);
        Ok(Detector {
            map,
            window: VecDeque::with_capacity(config.window),
            config,
            cl_neighborhood,
            seed,
            prev: None,
            last_index: None,
            updates: 0,
        })
    }

    pub fn map(&self) -> &FeatureMap {
        &self.map
    }

    pub fn into_map(self) -> FeatureMap {
        self.map
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    /// Scores held by the decision window, oldest first.
    pub fn window(&self) -> impl Iterator<Item = f64> + '_ {
        self.window.iter().copied()
    }

    pub fn step(&mut self, chunk: &Chunk) -> Result<StepOutcome> {
        if chunk.len() < 2 {
            return Err(Error::ChunkTooSmall {
                index: chunk.index,
                len: chunk.len(),
            });
        }
        if let Some(last) = self.last_index {
            if chunk.index <= last {
                return Err(Error::invalid(
                    "chunk index",
                    format!("chunk {} arrived after chunk {last}", chunk.index),
                ));
            }
        }
        let current = chunk_summary(&self.map, &chunk.samples).map_err(|e| match e {
            Error::ChunkTooSmall { len, .. } => Error::ChunkTooSmall {
                index: chunk.index,
                len,
            },
            other => other,
        })?;
        self.last_index = Some(chunk.index);
        let Some(prev) = self.prev.replace(current) else {
            return Ok(StepOutcome {
                point: None,
                event: None,
            });
        };

        let score = kl_gaussian(&prev, &current)?;
        let (lower, upper, shift) = if self.window.len() == self.config.window {
            let recent: Vec<f64> = self.window.iter().copied().collect();
            let (lower, upper) = decision_bounds(&recent, self.config.alpha)?;
            (lower, upper, score < lower || score > upper)
        } else {
            (f64::NEG_INFINITY, f64::INFINITY, false)
        };

        let event = if shift {
            let action = if self.config.cl_eta > 0.0 {
                cl_update(
                    &mut self.map,
                    &chunk.samples,
                    self.config.cl_eta,
                    self.config.cl_epochs,
                    &self.cl_neighborhood,
                    self.seed,
                    self.updates,
                )?;
                self.updates += 1;
                ShiftAction::WeightsUpdated
            } else {
                ShiftAction::NoUpdate
            };
            self.window.clear();
            Some(ShiftEvent {
                chunk_index: chunk.index,
                score,
                lower,
                upper,
                action,
            })
        } else {
            None
        };

        if self.window.len() == self.config.window {
            self.window.pop_front();
        }
        self.window.push_back(score);

        Ok(StepOutcome {
            point: Some(SignalPoint {
                chunk_index: chunk.index,
                score,
                lower,
                upper,
                shift,
            }),
            event,
        })
    }
}

/// Output of [`run_monitor`].
#[derive(Debug, Clone)]
pub struct MonitorRun {
    pub signal: MonitorSignal,
    pub events: Vec<ShiftEvent>,
    /// The map after all continual updates.
    pub map: FeatureMap,
}

/// Feeds every chunk through a fresh [`Detector`].
pub fn run_monitor<I>(
    chunks: I,
    map: FeatureMap,
    schedule: &TrainSchedule,
    config: &DetectorConfig,
    seed: u64,
) -> Result<MonitorRun>
where
    I: IntoIterator,
    I::Item: std::borrow::Borrow<Chunk>,
{
    use std::borrow::Borrow;

    let mut detector = Detector::new(map, schedule, config.clone(), seed)?;
    let mut signal = MonitorSignal::default();
    let mut events = Vec::new();
    for chunk in chunks {
        let outcome = detector.step(chunk.borrow())?;
        signal.points.extend(outcome.point);
        events.extend(outcome.event);
    }
    Ok(MonitorRun {
        signal,
        events,
        map: detector.into_map(),
    })
}
