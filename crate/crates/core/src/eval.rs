//! Detection-quality scoring against known shift positions.

use std::io::Write;
use std::ops::Range;

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detector::{run_monitor, DetectorConfig};
use crate::error::{Error, Result};
use crate::stream::Chunk;
use crate::topo_map::{FeatureMap, TrainSchedule};

/// Cohen's kappa between two binary sequences.
///
/// When chance agreement is total (both sequences constant and equal) the
/// sequences agree perfectly and 1 is returned.
pub fn kappa(predicted: &[bool], truth: &[bool]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            actual: predicted.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::Empty("kappa sequences"));
    }
    let n = truth.len() as f64;
    let agree = predicted.iter().zip(truth).filter(|(a, b)| a == b).count() as f64;
    let pred_pos = predicted.iter().filter(|&&p| p).count() as f64 / n;
    let true_pos = truth.iter().filter(|&&t| t).count() as f64 / n;
    let p_o = agree / n;
    let p_e = pred_pos * true_pos + (1.0 - pred_pos) * (1.0 - true_pos);
    if p_e >= 1.0 {
        return Ok(if p_o >= 1.0 { 1.0 } else { 0.0 });
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

/// Pairing of detections with true shifts.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    /// `(truth_index, detected_index)` pairs.
    pub pairs: Vec<(usize, usize)>,
    pub false_alarms: Vec<usize>,
    pub missed: Vec<usize>,
}

impl Alignment {
    /// Binary per-chunk sequences over `range`. Matched detections are
    /// relabelled onto their truth position.
    pub fn sequences(&self, truth: &[usize], range: Range<usize>) -> (Vec<bool>, Vec<bool>) {
        let len = range.len();
        let mut predicted = vec![false; len];
        let mut actual = vec![false; len];
        let mark = |seq: &mut Vec<bool>, i: usize| {
            if range.contains(&i) {
                seq[i - range.start] = true;
            }
        };
        for &t in truth {
            mark(&mut actual, t);
        }
        for &(t, _) in &self.pairs {
            mark(&mut predicted, t);
        }
        for &d in &self.false_alarms {
            mark(&mut predicted, d);
        }
        (predicted, actual)
    }
}

/// Matches every true shift with at most one detection within `±tol` chunks.
///
/// Truths are visited in order and take the earliest free detection inside
/// their window, which yields a maximum matching for equal-width windows.
pub fn tolerant_align(detected: &[usize], truth: &[usize], tol: usize) -> Alignment {
    let mut detected = detected.to_vec();
    detected.sort_unstable();
    detected.dedup();
    let mut truth = truth.to_vec();
    truth.sort_unstable();
    truth.dedup();

    let mut used = vec![false; detected.len()];
    let mut pairs = Vec::new();
    let mut missed = Vec::new();
    let mut cursor = 0;
    for &t in &truth {
        while cursor < detected.len() && detected[cursor] + tol < t {
            cursor += 1;
        }
        let hit = (cursor..detected.len())
            .take_while(|&i| detected[i] <= t + tol)
            .find(|&i| !used[i]);
        match hit {
            Some(i) => {
                used[i] = true;
                pairs.push((t, detected[i]));
            }
            None => missed.push(t),
        }
    }
    let false_alarms = detected
        .iter()
        .zip(&used)
        .filter(|(_, u)| !**u)
        .map(|(d, _)| *d)
        .collect();
    Alignment {
        pairs,
        false_alarms,
        missed,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub kappa: f64,
    pub recall: f64,
    /// False alarms over chunks that carry no true shift.
    pub fpr: f64,
    /// Mean absolute offset of matched detections, in chunks.
    pub mean_delay: f64,
    pub matched_pairs: Vec<(usize, usize)>,
}

/// Scores `detected` against `truth` over the chunk indices in `range`.
/// Indices outside `range` are ignored.
pub fn evaluate(detected: &[usize], truth: &[usize], range: Range<usize>, tol: usize) -> Result<DetectionReport> {
    if range.is_empty() {
        return Err(Error::Empty("evaluation range"));
    }
    let inside = |v: &[usize]| -> Vec<usize> { v.iter().copied().filter(|i| range.contains(i)).collect() };
    let (detected, truth) = (inside(detected), inside(truth));
    let alignment = tolerant_align(&detected, &truth, tol);
    let (predicted, actual) = alignment.sequences(&truth, range.clone());

    let recall = if truth.is_empty() {
        1.0
    } else {
        alignment.pairs.len() as f64 / truth.len() as f64
    };
    let negatives = actual.iter().filter(|a| !**a).count();
    let fpr = if negatives == 0 {
        0.0
    } else {
        alignment.false_alarms.len() as f64 / negatives as f64
    };
    let mean_delay = if alignment.pairs.is_empty() {
        0.0
    } else {
        alignment
            .pairs
            .iter()
            .map(|&(t, d)| t.abs_diff(d) as f64)
            .sum::<f64>()
            / alignment.pairs.len() as f64
    };
    Ok(DetectionReport {
        kappa: kappa(&predicted, &actual)?,
        recall,
        fpr,
        mean_delay,
        matched_pairs: alignment.pairs,
    })
}

/// Kappa for every `(alpha, window)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaMatrix {
    pub alphas: Vec<f64>,
    pub windows: Vec<usize>,
    /// `values[a][w]` belongs to `alphas[a]` and `windows[w]`.
    pub values: Vec<Vec<f64>>,
}

impl KappaMatrix {
    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .flatten()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Share of cells whose kappa is at least `threshold`.
    pub fn fraction_at_least(&self, threshold: f64) -> f64 {
        let cells: Vec<f64> = self.values.iter().flatten().copied().collect();
        cells.iter().filter(|&&k| k >= threshold).count() as f64 / cells.len() as f64
    }

    /// CSV with one row per alpha and one column per window.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["alpha\\window".to_string()];
        header.extend(self.windows.iter().map(|v| v.to_string()));
        w.write_record(&header)?;
        for (alpha, row) in self.alphas.iter().zip(&self.values) {
            let mut record = vec![alpha.to_string()];
            record.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&record)?;
        }
        w.flush().map_err(|e| Error::io("<kappa matrix>", e))?;
        Ok(())
    }
}

/// Everything a grid search needs besides the parameter lists.
pub struct GridSearch<'a, S, M> {
    /// Regenerates the (identical) stream for every cell.
    pub stream: S,
    /// Supplies the trained map for every cell.
    pub map: M,
    pub schedule: &'a TrainSchedule,
    /// Template for all detector settings other than `alpha` and `window`.
    pub base: &'a DetectorConfig,
    pub truth: &'a [usize],
    pub tol: usize,
    pub seed: u64,
}

impl<S, M> GridSearch<'_, S, M>
where
    S: Fn() -> Result<Vec<Chunk>> + Sync,
    M: Fn() -> Result<FeatureMap> + Sync,
{
    /// Kappa of one `(alpha, window)` cell.
    pub fn cell(&self, alpha: f64, window: usize) -> Result<f64> {
        let chunks = (self.stream)()?;
        let (first, last) = match (chunks.first(), chunks.last()) {
            (Some(f), Some(l)) => (f.index, l.index),
            _ => return Err(Error::Empty("stream")),
        };
        let config = DetectorConfig {
            alpha,
            window,
            ..self.base.clone()
        };
        let run = run_monitor(&chunks, (self.map)()?, self.schedule, &config, self.seed)?;
        let report = evaluate(&run.signal.flagged(), self.truth, first..last + 1, self.tol)?;
        Ok(report.kappa)
    }

    /// Runs every cell; the result does not depend on evaluation order.
    pub fn run(&self, alphas: &[f64], windows: &[usize]) -> Result<KappaMatrix> {
        if alphas.is_empty() || windows.is_empty() {
            return Err(Error::Empty("parameter grid"));
        }
        let cells: Vec<(f64, usize)> = alphas
            .iter()
            .flat_map(|&a| windows.iter().map(move |&w| (a, w)))
            .collect();
        #[cfg(feature = "parallel")]
        let flat: Vec<f64> = cells
            .par_iter()
            .map(|&(a, w)| self.cell(a, w))
            .collect::<Result<_>>()?;
        #[cfg(not(feature = "parallel"))]
        let flat: Vec<f64> = cells
            .iter()
            .map(|&(a, w)| self.cell(a, w))
            .collect::<Result<_>>()?;
        Ok(KappaMatrix {
            alphas: alphas.to_vec(),
            windows: windows.to_vec(),
            values: flat.chunks(windows.len()).map(<[f64]>::to_vec).collect(),
        })
    }
}
