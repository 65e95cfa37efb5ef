//! Evaluation: foreground IoU over the full range or the observed area, and
//! class-weighted calibration curves over uncertainty bins.

use crate::grid::Grid;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("evaluation grids do not share one frame")]
    FrameMismatch,
    #[error("u_thr must lie in [0, 1]")]
    BadThreshold,
}

/// Aligned prediction and ground-truth grids plus the uncertainty threshold.
#[derive(Debug, Clone)]
pub struct EvalInputs<'a> {
    pub p_fg: &'a Grid<f64>,
    pub u: &'a Grid<f64>,
    pub observed: &'a Grid<bool>,
    pub gt_fg: &'a Grid<bool>,
    pub u_thr: f64,
}

impl<'a> EvalInputs<'a> {
    pub fn new(
        p_fg: &'a Grid<f64>,
        u: &'a Grid<f64>,
        observed: &'a Grid<bool>,
        gt_fg: &'a Grid<bool>,
        u_thr: f64,
    ) -> Result<Self, MetricsError> {
        if !(p_fg.spec.same_frame(&u.spec)
            && p_fg.spec.same_frame(&observed.spec)
            && p_fg.spec.same_frame(&gt_fg.spec))
        {
            return Err(MetricsError::FrameMismatch);
        }
        if !(0.0..=1.0).contains(&u_thr) {
            return Err(MetricsError::BadThreshold);
        }
        Ok(Self {
            p_fg,
            u,
            observed,
            gt_fg,
            u_thr,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IouMode {
    /// Evaluate the whole range; unobserved ground-truth foreground counts
    /// against the union.
    All,
    /// Evaluate confident observed cells only.
    Obs,
}

/// Foreground IoU: cells confident under `u_thr` (and observed, in Obs mode)
/// are compared by predicted-foreground against ground-truth foreground.
/// Returns 1 when both sets are empty.
#[allow(clippy::needless_range_loop)] // one index across four parallel grids
pub fn iou(inputs: &EvalInputs, mode: IouMode) -> f64 {
    let n = inputs.p_fg.spec.len();
    let mut inter = 0usize;
    let mut union = 0usize;
    for i in 0..n {
        let confident = inputs.u.data[i] < inputs.u_thr;
        let in_x = match mode {
            IouMode::All => confident,
            IouMode::Obs => confident && inputs.observed.data[i],
        };
        let pred_fg = in_x && inputs.p_fg.data[i] > 1.0 - inputs.p_fg.data[i];
        let gt_fg = inputs.gt_fg.data[i] && in_x;
        if pred_fg && gt_fg {
            inter += 1;
        }
        if pred_fg || gt_fg {
            union += 1;
        }
        if mode == IouMode::All && inputs.gt_fg.data[i] && !inputs.observed.data[i] {
            union += 1;
        }
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// One classification sample for calibration: the uncertainty it was issued
/// with, the predicted class and the true class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalSample {
    pub u: f64,
    pub predicted: usize,
    pub truth: usize,
}

/// A non-empty uncertainty bin of the calibration curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalBin {
    pub lo: f64,
    pub hi: f64,
    pub weighted_acc: f64,
    pub mass: f64,
}

/// Calibration curve over ten uncertainty bins; empty bins are absent.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationCurve {
    pub bins: Vec<CalBin>,
}

pub const CAL_BINS: usize = 10;

/// Bin samples by uncertainty into [0, 0.1), ..., [0.9, 1.0] (last bin
/// closed) and compute per-bin accuracy with each sample weighted by
/// 1 / N_class(truth), removing class imbalance.
pub fn calibration(samples: &[CalSample], class_counts: &[usize]) -> CalibrationCurve {
    let mut acc = [0.0f64; CAL_BINS];
    let mut mass = [0.0f64; CAL_BINS];
    for s in samples {
        let count = class_counts
            .get(s.truth)
            .copied()
            .expect("class_counts must cover every represented class");
        assert!(count > 0, "class {} has zero count", s.truth);
        let weight = 1.0 / count as f64;
        let bin = ((s.u * CAL_BINS as f64).floor() as usize).min(CAL_BINS - 1);
        mass[bin] += weight;
        if s.predicted == s.truth {
            acc[bin] += weight;
        }
    }
    let bins = (0..CAL_BINS)
        .filter(|&b| mass[b] > 0.0)
        .map(|b| CalBin {
            lo: b as f64 / CAL_BINS as f64,
            hi: (b + 1) as f64 / CAL_BINS as f64,
            weighted_acc: acc[b] / mass[b],
            mass: mass[b],
        })
        .collect();
    CalibrationCurve { bins }
}

/// Ideal accuracy at uncertainty u for a K-class problem: the diagonal from
/// (0, 1) down to (1, 1/K), where u = 1 means a pure guess.
pub fn ideal_accuracy(u: f64, k: usize) -> f64 {
    1.0 - u * (1.0 - 1.0 / k as f64)
}

/// Mass-weighted mean absolute deviation of the curve from the ideal
/// diagonal, evaluated at bin midpoints over non-empty bins.
pub fn calibration_deviation(curve: &CalibrationCurve, k: usize) -> f64 {
    assert!(!curve.bins.is_empty(), "calibration curve has no bins");
    let mut dev = 0.0;
    let mut total_mass = 0.0;
    for bin in &curve.bins {
        let mid = (bin.lo + bin.hi) / 2.0;
        dev += bin.mass * (bin.weighted_acc - ideal_accuracy(mid, k)).abs();
        total_mass += bin.mass;
    }
    dev / total_mass
}

/// Normalized entropy of a probability vector: -sum p ln p / ln K. The
/// uncertainty stand-in for probability-only (evidence-free) predictions.
pub fn entropy_uncertainty(p: &[f64]) -> f64 {
    let k = p.len();
    let h: f64 = p
        .iter()
        .map(|&pi| if pi > 0.0 { -pi * pi.ln() } else { 0.0 })
        .sum();
    (h / (k as f64).ln()).clamp(0.0, 1.0)
}

/// Collect one calibration sample per observed cell: the cell's issued
/// uncertainty, the argmax class (foreground wins only on p_fg > 0.5), and
/// the ground-truth class. Returns the samples and per-class truth counts.
pub fn collect_cal_samples(
    p_fg: &Grid<f64>,
    u: &Grid<f64>,
    observed: &Grid<bool>,
    gt_fg: &Grid<bool>,
) -> (Vec<CalSample>, Vec<usize>) {
    assert!(
        p_fg.spec.same_frame(&u.spec)
            && p_fg.spec.same_frame(&observed.spec)
            && p_fg.spec.same_frame(&gt_fg.spec)
    );
    let mut samples = Vec::new();
    let mut counts = vec![0usize; 2];
    for i in 0..p_fg.spec.len() {
        if !observed.data[i] {
            continue;
        }
        let predicted = if p_fg.data[i] > 0.5 { 0 } else { 1 };
        let truth = if gt_fg.data[i] { 0 } else { 1 };
        counts[truth] += 1;
        samples.push(CalSample {
            u: u.data[i],
            predicted,
            truth,
        });
    }
    (samples, counts)
}

/// Render the curve as `bin_lo,bin_hi,weighted_acc,mass` CSV.
pub fn calibration_csv(curve: &CalibrationCurve) -> String {
    let mut out = String::from("bin_lo,bin_hi,weighted_acc,mass\n");
    for b in &curve.bins {
        out.push_str(&format!(
            "{},{},{},{}\n",
            b.lo, b.hi, b.weighted_acc, b.mass
        ));
    }
    out
}
