//! Training-run telemetry: log parsing, perplexity, smoothing, train/eval
//! divergence, gradient-norm stability, and loss-curve quality scores.
//!
//! Logs are CSV with a header row. `step` and `train_loss` are required;
//! `eval_loss`, `grad_norm` and `lr` are optional columns whose cells may be
//! empty on rows where the value was not recorded.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TelemetryError {
    #[error("log schema error: {0}")]
    Schema(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("need at least two eval points in the tail window, found {0}")]
    NoEvalData(usize),
    #[error("no gradient-norm data after warm-up")]
    NoGradData,
    #[error("series too short: need at least {needed} points, got {got}")]
    SeriesTooShort { needed: usize, got: usize },
    #[error("smoothing window must be a positive odd integer, got {0}")]
    InvalidWindow(usize),
}

/// One parsed training run. `steps[i]` pairs with `train_loss[i]`; the
/// optional series are sparse `(step, value)` lists sorted by step.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub steps: Vec<u64>,
    pub train_loss: Vec<f64>,
    pub eval_loss: Vec<(u64, f64)>,
    pub grad_norm: Vec<(u64, f64)>,
    pub learning_rate: Vec<(u64, f64)>,
    /// Cells dropped because they were non-numeric, non-finite or negative.
    pub quarantined: usize,
}

#[derive(Default)]
struct Row {
    train: Option<f64>,
    eval: Option<f64>,
    grad: Option<f64>,
    lr: Option<f64>,
}

enum Cell {
    Missing,
    Value(f64),
    Bad,
}

fn parse_cell(raw: Option<&str>, non_negative: bool) -> Cell {
    let Some(raw) = raw.map(str::trim) else {
        return Cell::Missing;
    };
    if raw.is_empty() {
        return Cell::Missing;
    }
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() && (!non_negative || v >= 0.0) => Cell::Value(v),
        _ => Cell::Bad,
    }
}

pub fn parse_run_log<R: Read>(reader: R) -> Result<RunLog, TelemetryError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let step_col = col("step").ok_or_else(|| TelemetryError::Schema("missing `step` column".into()))?;
    let train_col = col("train_loss").ok_or_else(|| TelemetryError::Schema("missing `train_loss` column".into()))?;
    let eval_col = col("eval_loss");
    let grad_col = col("grad_norm");
    let lr_col = col("lr").or_else(|| col("learning_rate"));

    let mut rows: BTreeMap<u64, Row> = BTreeMap::new();
    let mut quarantined = 0usize;
    for record in rdr.records() {
        let record = record?;
        let step = match record.get(step_col).map(str::trim) {
            Some(s) if !s.is_empty() => match s.parse::<u64>() {
                Ok(v) => v,
                Err(_) => {
                    quarantined += 1;
                    continue;
                }
            },
            _ => {
                quarantined += 1;
                continue;
            }
        };
        let mut row = Row::default();
        let mut take = |c: Option<usize>, non_neg: bool| match c.map(|i| parse_cell(record.get(i), non_neg)) {
            Some(Cell::Value(v)) => Some(v),
            Some(Cell::Bad) => {
                quarantined += 1;
                None
            }
            _ => None,
        };
        row.train = take(Some(train_col), true);
        row.eval = take(eval_col, true);
        row.grad = take(grad_col, true);
        row.lr = take(lr_col, false);
        // Duplicate steps: last row wins.
        rows.insert(step, row);
    }

    let mut log = RunLog { quarantined, ..Default::default() };
    for (step, row) in rows {
        if let Some(v) = row.train {
            log.steps.push(step);
            log.train_loss.push(v);
        }
        if let Some(v) = row.eval {
            log.eval_loss.push((step, v));
        }
        if let Some(v) = row.grad {
            log.grad_norm.push((step, v));
        }
        if let Some(v) = row.lr {
            log.learning_rate.push((step, v));
        }
    }
    Ok(log)
}

pub fn read_run_log(path: &Path) -> Result<RunLog, TelemetryError> {
    parse_run_log(std::fs::File::open(path)?)
}

/// Perplexity for a natural-log cross-entropy loss.
pub fn perplexity(loss: f64) -> f64 {
    loss.exp()
}

/// Centered moving average. Near the edges the window shrinks to the
/// neighbours that exist, so the output has the input's length.
pub fn smooth(series: &[f64], window: usize) -> Result<Vec<f64>, TelemetryError> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(TelemetryError::InvalidWindow(window));
    }
    let half = window / 2;
    let n = series.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for &x in series {
        prefix.push(prefix.last().unwrap() + x);
    }
    Ok((0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect())
}

/// Train loss linearly interpolated at `step`, clamped to the ends.
pub fn interpolate(steps: &[u64], values: &[f64], step: u64) -> Option<f64> {
    if steps.is_empty() {
        return None;
    }
    let idx = steps.partition_point(|&s| s < step);
    if idx == 0 {
        return Some(values[0]);
    }
    if idx == steps.len() {
        return Some(values[steps.len() - 1]);
    }
    if steps[idx] == step {
        return Some(values[idx]);
    }
    let (s0, s1) = (steps[idx - 1] as f64, steps[idx] as f64);
    let (v0, v1) = (values[idx - 1], values[idx]);
    Some(v0 + (v1 - v0) * (step as f64 - s0) / (s1 - s0))
}

/// Ordinary least-squares slope of `ys` against `xs`.
pub fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return 0.0;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Divergence {
    NoDivergence,
    Widening,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceVerdict {
    pub max_gap: f64,
    pub gap_trend_slope: f64,
    pub tail_points: usize,
    pub verdict: Divergence,
}

pub const DEFAULT_TAIL_FRACTION: f64 = 0.2;
pub const DEFAULT_SLOPE_EPS: f64 = 1e-5;

/// Fit the eval−train gap over the final `tail_fraction` of the step range
/// and call it widening when the slope exceeds `slope_eps` (loss per step).
pub fn detect_divergence(
    log: &RunLog,
    tail_fraction: f64,
    slope_eps: f64,
) -> Result<DivergenceVerdict, TelemetryError> {
    if log.steps.is_empty() || log.eval_loss.is_empty() {
        return Err(TelemetryError::NoEvalData(0));
    }
    let first = log.steps[0].min(log.eval_loss[0].0) as f64;
    let last = (*log.steps.last().unwrap()).max(log.eval_loss.last().unwrap().0) as f64;
    let cutoff = last - tail_fraction.clamp(0.0, 1.0) * (last - first);

    let gaps: Vec<(f64, f64)> = log
        .eval_loss
        .iter()
        .filter_map(|&(s, e)| interpolate(&log.steps, &log.train_loss, s).map(|t| (s as f64, e - t)))
        .collect();
    let max_gap = gaps.iter().map(|g| g.1).fold(f64::NEG_INFINITY, f64::max);
    let tail: Vec<(f64, f64)> = gaps.into_iter().filter(|&(s, _)| s >= cutoff).collect();
    if tail.len() < 2 {
        return Err(TelemetryError::NoEvalData(tail.len()));
    }
    let xs: Vec<f64> = tail.iter().map(|g| g.0).collect();
    let ys: Vec<f64> = tail.iter().map(|g| g.1).collect();
    let slope = least_squares_slope(&xs, &ys);
    Ok(DivergenceVerdict {
        max_gap,
        gap_trend_slope: slope,
        tail_points: tail.len(),
        verdict: if slope > slope_eps { Divergence::Widening } else { Divergence::NoDivergence },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stability {
    Stable,
    Unstable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub warmup_end_step: u64,
    pub post_warmup_points: usize,
    pub fraction_below_threshold: f64,
    pub max_post_warmup_norm: f64,
    pub verdict: Stability,
}

pub const STABLE_QUANTILE: f64 = 0.95;
pub const SPIKE_FACTOR: f64 = 5.0;

/// Stable iff at least 95% of post-warm-up norms are strictly below
/// `threshold` and none exceeds `5 × threshold`. Steps before
/// `warmup_steps` are exempt.
pub fn grad_norm_stability(log: &RunLog, warmup_steps: u64, threshold: f64) -> Result<StabilityReport, TelemetryError> {
    let post: Vec<f64> = log.grad_norm.iter().filter(|&&(s, _)| s >= warmup_steps).map(|&(_, v)| v).collect();
    if post.is_empty() {
        return Err(TelemetryError::NoGradData);
    }
    let below = post.iter().filter(|&&v| v < threshold).count();
    let fraction = below as f64 / post.len() as f64;
    let max = post.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let stable = fraction >= STABLE_QUANTILE && max <= SPIKE_FACTOR * threshold;
    Ok(StabilityReport {
        warmup_end_step: warmup_steps,
        post_warmup_points: post.len(),
        fraction_below_threshold: fraction,
        max_post_warmup_norm: max,
        verdict: if stable { Stability::Stable } else { Stability::Unstable },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveQuality {
    /// Standard deviation of first differences over the tail, in loss units.
    pub oscillation_score: f64,
    /// `oscillation_score` divided by the mean tail loss.
    pub relative_oscillation: f64,
    /// Relative drop of the smoothed loss across the tail, `(start − end) / start`.
    pub plateau_score: f64,
    /// Fraction of smoothed steps that do not increase.
    pub monotonicity: f64,
}

pub const MIN_CURVE_POINTS: usize = 10;
pub const CURVE_SMOOTHING_WINDOW: usize = 5;

pub fn curve_quality(series: &[f64], tail_fraction: f64) -> Result<CurveQuality, TelemetryError> {
    let n = series.len();
    if n < MIN_CURVE_POINTS {
        return Err(TelemetryError::SeriesTooShort { needed: MIN_CURVE_POINTS, got: n });
    }
    let tail_len = ((tail_fraction.clamp(0.0, 1.0) * n as f64).ceil() as usize).clamp(3, n);
    let tail = &series[n - tail_len..];

    let diffs: Vec<f64> = tail.windows(2).map(|w| w[1] - w[0]).collect();
    let mean_diff = diffs.iter().sum::<f64>() / diffs.len() as f64;
    let var = diffs.iter().map(|d| (d - mean_diff).powi(2)).sum::<f64>() / diffs.len() as f64;
    let oscillation = var.sqrt();
    let mean_tail = tail.iter().sum::<f64>() / tail.len() as f64;
    let relative = if mean_tail.abs() > 0.0 { oscillation / mean_tail.abs() } else { 0.0 };

    let smoothed = smooth(series, CURVE_SMOOTHING_WINDOW)?;
    let s_tail = &smoothed[n - tail_len..];
    let (start, end) = (s_tail[0], s_tail[tail_len - 1]);
    let plateau = if start.abs() > 0.0 { (start - end) / start.abs() } else { 0.0 };
    let non_increasing = smoothed.windows(2).filter(|w| w[1] <= w[0]).count();
    let monotonicity = non_increasing as f64 / (n - 1) as f64;

    Ok(CurveQuality {
        oscillation_score: oscillation,
        relative_oscillation: relative,
        plateau_score: plateau,
        monotonicity,
    })
}

/// Everything the CLI reports for one log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunAnalysis {
    pub points: usize,
    pub quarantined: usize,
    pub final_train_loss: Option<f64>,
    pub final_eval_loss: Option<f64>,
    pub final_eval_perplexity: Option<f64>,
    pub divergence: Option<DivergenceVerdict>,
    pub stability: Option<StabilityReport>,
    pub curve: Option<CurveQuality>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Copy)]
pub struct AnalysisOptions {
    pub tail_fraction: f64,
    pub slope_eps: f64,
    pub warmup_steps: u64,
    pub grad_threshold: f64,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            tail_fraction: DEFAULT_TAIL_FRACTION,
            slope_eps: DEFAULT_SLOPE_EPS,
            warmup_steps: 0,
            grad_threshold: 1.0,
        }
    }
}

pub fn analyze(log: &RunLog, opts: &AnalysisOptions) -> RunAnalysis {
    let mut notes = Vec::new();
    let divergence = detect_divergence(log, opts.tail_fraction, opts.slope_eps)
        .map_err(|e| notes.push(format!("divergence: {e}")))
        .ok();
    let stability = grad_norm_stability(log, opts.warmup_steps, opts.grad_threshold)
        .map_err(|e| notes.push(format!("stability: {e}")))
        .ok();
    let curve = curve_quality(&log.train_loss, opts.tail_fraction).map_err(|e| notes.push(format!("curve: {e}"))).ok();
    let final_eval = log.eval_loss.last().map(|e| e.1);
    RunAnalysis {
        points: log.steps.len(),
        quarantined: log.quarantined,
        final_train_loss: log.train_loss.last().copied(),
        final_eval_loss: final_eval,
        final_eval_perplexity: final_eval.map(perplexity),
        divergence,
        stability,
        curve,
        notes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn log_from(train: &[(u64, f64)], eval: &[(u64, f64)]) -> RunLog {
        RunLog {
            steps: train.iter().map(|t| t.0).collect(),
            train_loss: train.iter().map(|t| t.1).collect(),
            eval_loss: eval.to_vec(),
            ..Default::default()
        }
    }

    #[test]
    fn parses_well_formed_log() {
        let csv = "step,train_loss,eval_loss,grad_norm,lr\n1,2.5,,3.0,1e-4\n2,2.4,2.6,0.9,2e-4\n3,2.3,,0.8,3e-4\n";
        let log = parse_run_log(csv.as_bytes()).unwrap();
        assert_eq!(log.steps, vec![1, 2, 3]);
        assert_eq!(log.eval_loss, vec![(2, 2.6)]);
        assert_eq!(log.grad_norm.len(), 3);
        assert_eq!(log.quarantined, 0);
    }

    #[test]
    fn sorts_rows_and_keeps_last_duplicate() {
        let csv = "step,train_loss\n3,1.0\n1,3.0\n2,2.0\n2,2.5\n";
        let log = parse_run_log(csv.as_bytes()).unwrap();
        assert_eq!(log.steps, vec![1, 2, 3]);
        assert_eq!(log.train_loss, vec![3.0, 2.5, 1.0]);
    }

    #[test]
    fn quarantines_bad_cells() {
        let csv = "step,train_loss\n1,2.0\n2,oops\n3,NaN\n4,-1\n5,1.0\n";
        let log = parse_run_log(csv.as_bytes()).unwrap();
        assert_eq!(log.steps, vec![1, 5]);
        assert_eq!(log.quarantined, 3);
        let one_bad = parse_run_log("step,train_loss\n1,x\n".as_bytes()).unwrap();
        assert_eq!(one_bad.quarantined, 1);
    }

    #[test]
    fn missing_required_column_is_schema_error() {
        let err = parse_run_log("step,eval_loss\n1,2\n".as_bytes()).unwrap_err();
        assert!(matches!(err, TelemetryError::Schema(_)));
    }

    #[test]
    fn perplexity_examples() {
        assert!((perplexity(1.438) - 4.212).abs() < 1e-3);
        assert_eq!(perplexity(0.0), 1.0);
        assert!((perplexity(std::f64::consts::LN_2) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn smooth_examples() {
        let s = [1.0, 5.0, 2.0, 8.0];
        assert_eq!(smooth(&s, 1).unwrap(), s.to_vec());
        assert_eq!(smooth(&[4.0; 6], 5).unwrap(), vec![4.0; 6]);
        let out = smooth(&[0.0, 10.0, 0.0], 3).unwrap();
        assert_eq!(out[0], 5.0);
        assert!((out[1] - 10.0 / 3.0).abs() < 1e-12);
        assert_eq!(out[2], 5.0);
        assert!(smooth(&s, 2).is_err());
        assert!(smooth(&s, 0).is_err());
    }

    fn linear_gap_log(gap_start: f64, gap_end: f64) -> RunLog {
        let train: Vec<(u64, f64)> = (0..=1000).map(|s| (s, 3.0 - 0.001 * s as f64)).collect();
        let eval: Vec<(u64, f64)> = (0..=20)
            .map(|i| {
                let s = i * 50;
                let gap = gap_start + (gap_end - gap_start) * s as f64 / 1000.0;
                (s, 3.0 - 0.001 * s as f64 + gap)
            })
            .collect();
        log_from(&train, &eval)
    }

    #[test]
    fn divergence_examples() {
        let v = detect_divergence(&linear_gap_log(0.05, 0.05), 0.2, 1e-5).unwrap();
        assert_eq!(v.verdict, Divergence::NoDivergence);
        assert!((v.max_gap - 0.05).abs() < 1e-9);
        let v = detect_divergence(&linear_gap_log(0.0, 0.5), 0.2, 1e-5).unwrap();
        assert_eq!(v.verdict, Divergence::Widening);
        assert!((v.gap_trend_slope - 5e-4).abs() < 1e-9);

        let single = log_from(&[(0, 2.0), (100, 1.0)], &[(100, 1.1)]);
        assert!(matches!(detect_divergence(&single, 0.2, 1e-5), Err(TelemetryError::NoEvalData(1))));
    }

    #[test]
    fn eval_alignment_interpolates_train() {
        assert_eq!(interpolate(&[0, 10], &[1.0, 2.0], 5), Some(1.5));
        assert_eq!(interpolate(&[0, 10], &[1.0, 2.0], 20), Some(2.0));
        assert_eq!(interpolate(&[], &[], 5), None);
    }

    fn grad_log(norms: &[(u64, f64)]) -> RunLog {
        RunLog { grad_norm: norms.to_vec(), ..Default::default() }
    }

    #[test]
    fn stability_examples() {
        let mut norms: Vec<(u64, f64)> = (0..50).map(|s| (s, if s % 7 == 0 { 3.0 } else { 1.5 })).collect();
        norms.extend((50..500).map(|s| (s, 0.3 + 0.5 * ((s % 10) as f64 / 10.0))));
        let r = grad_norm_stability(&grad_log(&norms), 50, 1.0).unwrap();
        assert_eq!(r.verdict, Stability::Stable);
        assert!(r.max_post_warmup_norm < 1.0);

        let mut spiky: Vec<(u64, f64)> = (0..500).map(|s| (s, 0.5)).collect();
        spiky[300].1 = 12.0;
        let r = grad_norm_stability(&grad_log(&spiky), 50, 1.0).unwrap();
        assert_eq!(r.verdict, Stability::Unstable);

        let flat: Vec<(u64, f64)> = (0..100).map(|s| (s, 1.0)).collect();
        let r = grad_norm_stability(&grad_log(&flat), 10, 1.0).unwrap();
        assert_eq!(r.verdict, Stability::Unstable);
        assert_eq!(r.fraction_below_threshold, 0.0);

        assert!(matches!(grad_norm_stability(&RunLog::default(), 0, 1.0), Err(TelemetryError::NoGradData)));
    }

    fn decay(n: usize) -> Vec<f64> {
        (0..n).map(|i| 1.0 + 2.0 * (-(i as f64) / 40.0).exp()).collect()
    }

    #[test]
    fn curve_quality_examples() {
        let smooth_curve = decay(200);
        let q = curve_quality(&smooth_curve, 0.2).unwrap();
        assert_eq!(q.monotonicity, 1.0);
        assert!(q.oscillation_score < 1e-3);

        let noisy: Vec<f64> =
            smooth_curve.iter().enumerate().map(|(i, v)| v + if i % 2 == 0 { 0.05 } else { -0.05 }).collect();
        let qn = curve_quality(&noisy, 0.2).unwrap();
        assert!(qn.oscillation_score > q.oscillation_score);

        let flat = curve_quality(&[2.0; 30], 0.2).unwrap();
        assert_eq!(flat.plateau_score, 0.0);
        assert_eq!(flat.monotonicity, 1.0);

        assert!(matches!(curve_quality(&[1.0; 9], 0.2), Err(TelemetryError::SeriesTooShort { .. })));
    }

    proptest! {
        #[test]
        fn perplexity_is_exponential(a in -5.0f64..5.0, b in -5.0f64..5.0) {
            let lhs = perplexity(a + b);
            let rhs = perplexity(a) * perplexity(b);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.max(1.0));
        }

        #[test]
        fn smoothing_preserves_length_and_constant_mean(c in -10.0f64..10.0, n in 1usize..60, w in 0usize..6) {
            let window = 2 * w + 1;
            let out = smooth(&vec![c; n], window).unwrap();
            prop_assert_eq!(out.len(), n);
            for v in out { prop_assert!((v - c).abs() < 1e-9); }
        }

        #[test]
        fn divergence_shift_invariant(shift in -1.0f64..5.0, rising in any::<bool>()) {
            let base = linear_gap_log(0.0, if rising { 0.5 } else { 0.0 });
            let mut shifted = base.clone();
            shifted.train_loss.iter_mut().for_each(|v| *v += shift);
            shifted.eval_loss.iter_mut().for_each(|e| e.1 += shift);
            let a = detect_divergence(&base, 0.2, 1e-5).unwrap();
            let b = detect_divergence(&shifted, 0.2, 1e-5).unwrap();
            prop_assert_eq!(a.verdict, b.verdict);
            prop_assert!((a.gap_trend_slope - b.gap_trend_slope).abs() < 1e-9);
        }

        #[test]
        fn oscillation_shift_invariant_and_linear(shift in 0.0f64..10.0, amp in 0.01f64..1.0) {
            let noisy = |a: f64| -> Vec<f64> {
                (0..100).map(|i| 2.0 + if i % 2 == 0 { a } else { -a }).collect()
            };
            let base = curve_quality(&noisy(amp), 0.3).unwrap();
            let moved: Vec<f64> = noisy(amp).iter().map(|v| v + shift).collect();
            let moved = curve_quality(&moved, 0.3).unwrap();
            prop_assert!((base.oscillation_score - moved.oscillation_score).abs() < 1e-9);
            let doubled = curve_quality(&noisy(2.0 * amp), 0.3).unwrap();
            prop_assert!((doubled.oscillation_score - 2.0 * base.oscillation_score).abs() < 1e-9);
        }
    }
}
