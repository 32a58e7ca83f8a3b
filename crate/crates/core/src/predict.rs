//! Field-of-view and bandwidth predictors.
//!
//! FoV predictors consume observed view directions once per frame and emit
//! unit-vector predictions for the next few frames. Bandwidth predictors
//! consume 200 ms throughput samples and emit the expected bits deliverable
//! over the next one-second segment. Replay adapters play back previously
//! exported predictions so that externally produced predictors can drive
//! the simulator byte-for-byte reproducibly.

use crate::geometry::{viewport_overlap, Vec3};
use crate::{Error, Result};
use std::collections::{BTreeMap, VecDeque};
use std::io::{Read, Write};
use std::path::Path;

/// Throughput samples per bandwidth-prediction window (3 s of 200 ms bins).
pub const BW_WINDOW: usize = 15;

/// 200 ms bins per predicted segment.
pub const BW_BINS_PER_SEGMENT: usize = 5;

pub trait FovPredictor {
    /// Record the pose observed for `frame`.
    fn observe(&mut self, frame: u64, pose: Vec3);

    /// Predict poses for the next `horizon` frames after the last observed
    /// one, nearest first.
    fn predict(&mut self, horizon: u32) -> Result<Vec<Vec3>>;
}

pub trait BandwidthPredictor {
    /// Record one 200 ms throughput sample, in bits.
    fn observe_sample(&mut self, bits: f64);

    /// Predict total deliverable bits for the given upcoming segment.
    fn predict_segment_bits(&mut self, segment: u64) -> Result<f64>;
}

/// Error scores for a bandwidth predictor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionScore {
    /// Mean absolute percentage error with each term capped at 1.
    pub mape: f64,
    /// Sum of absolute errors over the sum of actuals.
    pub nmae: f64,
}

/// MAPE (terms capped at 1) and normalized MAE of predictions against
/// positive actuals.
pub fn score_bandwidth(predicted: &[f64], actual: &[f64]) -> Result<PredictionScore> {
    if predicted.is_empty() || predicted.len() != actual.len() {
        return Err(Error::invalid(
            "need equal-length nonempty prediction and actual lists",
        ));
    }
    if actual.iter().any(|a| *a <= 0.0) {
        return Err(Error::invalid("actual values must be positive"));
    }
    let mut mape = 0.0;
    let mut abs_err = 0.0;
    let mut total = 0.0;
    for (p, a) in predicted.iter().zip(actual) {
        let e = (p - a).abs();
        mape += (e / a).min(1.0);
        abs_err += e;
        total += a;
    }
    Ok(PredictionScore {
        mape: mape / predicted.len() as f64,
        nmae: abs_err / total,
    })
}

/// Mean viewport overlap between predicted and actual poses with the given
/// FoV extents.
pub fn score_fov(predicted: &[Vec3], actual: &[Vec3], h_deg: f64, v_deg: f64) -> Result<f64> {
    if predicted.is_empty() || predicted.len() != actual.len() {
        return Err(Error::invalid(
            "need equal-length nonempty predicted and actual pose lists",
        ));
    }
    let mut sum = 0.0;
    for (p, a) in predicted.iter().zip(actual) {
        let pp = crate::geometry::FovPose::new(*p, h_deg, v_deg);
        let pa = crate::geometry::FovPose::new(*a, h_deg, v_deg);
        sum += viewport_overlap(&pp, &pa, 64)?;
    }
    Ok(sum / predicted.len() as f64)
}

/// Linear extrapolation over the longest recent run that still looks
/// linear. Yaw (unwrapped across the 180 degree seam) and pitch are each
/// fitted by least squares over a trailing window; the window is the
/// longest suffix whose worst per-sample angular residual stays below the
/// threshold, so a sharp head turn truncates the fit to the recent leg.
#[derive(Debug, Clone)]
pub struct TruncatedLinearFov {
    window: usize,
    residual_threshold_deg: f64,
    history: VecDeque<(u64, Vec3)>,
}

impl TruncatedLinearFov {
    pub fn new(window: usize, residual_threshold_deg: f64) -> TruncatedLinearFov {
        TruncatedLinearFov {
            window: window.max(2),
            residual_threshold_deg,
            history: VecDeque::new(),
        }
    }
}

impl Default for TruncatedLinearFov {
    fn default() -> Self {
        TruncatedLinearFov::new(30, 1.0)
    }
}

/// Least-squares line through (t, value) pairs; returns (intercept, slope).
fn fit_line(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let mt = points.iter().map(|(t, _)| t).sum::<f64>() / n;
    let mv = points.iter().map(|(_, v)| v).sum::<f64>() / n;
    let mut stt = 0.0;
    let mut stv = 0.0;
    for &(t, v) in points {
        let dt = t - mt;
        stt += dt * dt;
        stv += dt * (v - mv);
    }
    if stt < 1e-12 {
        return (mv, 0.0);
    }
    let slope = stv / stt;
    (mv - slope * mt, slope)
}

fn dir_from_angles(yaw_deg: f64, pitch_deg: f64) -> Vec3 {
    Vec3::from_yaw_pitch(yaw_deg, pitch_deg.clamp(-90.0, 90.0))
}

impl FovPredictor for TruncatedLinearFov {
    fn observe(&mut self, frame: u64, pose: Vec3) {
        if let Some(&(last, _)) = self.history.back() {
            if frame <= last {
                self.history.clear();
            }
        }
        self.history.push_back((frame, pose.normalized()));
        while self.history.len() > self.window {
            self.history.pop_front();
        }
    }

    fn predict(&mut self, horizon: u32) -> Result<Vec<Vec3>> {
        let last = match self.history.back() {
            Some(&(_, p)) => p,
            None => return Err(Error::Prediction("no pose history".into())),
        };
        if self.history.len() < 2 {
            return Ok(vec![last; horizon as usize]);
        }
        let last_frame = self.history.back().unwrap().0 as f64;
        // Unwrapped yaw and pitch per sample, t relative to the last frame.
        let mut samples: Vec<(f64, f64, f64, Vec3)> = Vec::with_capacity(self.history.len());
        let mut prev_yaw: Option<f64> = None;
        for &(f, v) in &self.history {
            let mut yaw = v.y.atan2(v.x).to_degrees();
            if let Some(p) = prev_yaw {
                while yaw - p > 180.0 {
                    yaw -= 360.0;
                }
                while yaw - p < -180.0 {
                    yaw += 360.0;
                }
            }
            prev_yaw = Some(yaw);
            let pitch = v.z.clamp(-1.0, 1.0).asin().to_degrees();
            samples.push((f as f64 - last_frame, yaw, pitch, v));
        }

        // Longest suffix whose linear fit stays within the threshold; a
        // two-point suffix always fits exactly.
        let mut fit = (0.0, 0.0, 0.0, 0.0);
        for start in 0..=samples.len() - 2 {
            let suffix = &samples[start..];
            let yaw_pts: Vec<(f64, f64)> = suffix.iter().map(|&(t, y, _, _)| (t, y)).collect();
            let pitch_pts: Vec<(f64, f64)> = suffix.iter().map(|&(t, _, p, _)| (t, p)).collect();
            let (yc, ym) = fit_line(&yaw_pts);
            let (pc, pm) = fit_line(&pitch_pts);
            let worst = suffix
                .iter()
                .map(|&(t, _, _, v)| dir_from_angles(yc + ym * t, pc + pm * t).angle_deg(v))
                .fold(0.0, f64::max);
            fit = (yc, ym, pc, pm);
            if worst <= self.residual_threshold_deg || suffix.len() == 2 {
                break;
            }
        }
        let (yc, ym, pc, pm) = fit;
        Ok((1..=horizon)
            .map(|h| dir_from_angles(yc + ym * h as f64, pc + pm * h as f64))
            .collect())
    }
}

/// Repeats the most recent pose; the fallback baseline.
#[derive(Debug, Clone, Default)]
pub struct HoldFov {
    last: Option<Vec3>,
}

impl FovPredictor for HoldFov {
    fn observe(&mut self, _frame: u64, pose: Vec3) {
        self.last = Some(pose.normalized());
    }

    fn predict(&mut self, horizon: u32) -> Result<Vec<Vec3>> {
        match self.last {
            Some(p) => Ok(vec![p; horizon as usize]),
            None => Err(Error::Prediction("no pose history".into())),
        }
    }
}

/// Perfect FoV knowledge from a ground-truth pose sequence, indexed by
/// frame. Used for pipeline lower-bound experiments.
#[derive(Debug, Clone)]
pub struct OracleFov {
    poses: Vec<Vec3>,
    last_frame: Option<u64>,
}

impl OracleFov {
    pub fn new(poses: Vec<Vec3>) -> OracleFov {
        OracleFov {
            poses,
            last_frame: None,
        }
    }
}

impl FovPredictor for OracleFov {
    fn observe(&mut self, frame: u64, _pose: Vec3) {
        self.last_frame = Some(frame);
    }

    fn predict(&mut self, horizon: u32) -> Result<Vec<Vec3>> {
        let base = self
            .last_frame
            .ok_or_else(|| Error::Prediction("no pose history".into()))?;
        Ok((1..=horizon as u64)
            .map(|h| {
                let idx = ((base + h) as usize).min(self.poses.len() - 1);
                self.poses[idx]
            })
            .collect())
    }
}

/// Plays back exported FoV predictions keyed by (observed frame, horizon).
#[derive(Debug, Clone)]
pub struct ReplayFov {
    by_frame: BTreeMap<u64, Vec<Vec3>>,
    last_frame: Option<u64>,
}

impl ReplayFov {
    pub fn from_map(by_frame: BTreeMap<u64, Vec<Vec3>>) -> ReplayFov {
        ReplayFov {
            by_frame,
            last_frame: None,
        }
    }

    /// Load a replay file with rows frame,horizon,x,y,z. Horizons for each
    /// frame must start at 1 and be contiguous.
    pub fn load<R: Read>(reader: R, path: &str) -> Result<ReplayFov> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut raw: BTreeMap<u64, BTreeMap<u32, Vec3>> = BTreeMap::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::trace(path, e.to_string()))?;
            if rec.len() != 5 {
                return Err(Error::trace(
                    path,
                    format!("row {}: expected 5 fields, got {}", i + 2, rec.len()),
                ));
            }
            let parse = |j: usize| -> Result<f64> {
                rec[j]
                    .parse::<f64>()
                    .map_err(|_| Error::trace(path, format!("row {}: bad number {:?}", i + 2, &rec[j])))
            };
            let frame = rec[0]
                .parse::<u64>()
                .map_err(|_| Error::trace(path, format!("row {}: bad frame", i + 2)))?;
            let horizon = rec[1]
                .parse::<u32>()
                .map_err(|_| Error::trace(path, format!("row {}: bad horizon", i + 2)))?;
            if horizon == 0 {
                return Err(Error::trace(path, format!("row {}: horizon 0", i + 2)));
            }
            let v = Vec3::new(parse(2)?, parse(3)?, parse(4)?);
            if (v.norm() - 1.0).abs() > 1e-3 {
                return Err(Error::trace(
                    path,
                    format!("row {}: direction is not a unit vector", i + 2),
                ));
            }
            raw.entry(frame).or_default().insert(horizon, v.normalized());
        }
        let mut by_frame = BTreeMap::new();
        for (frame, horizons) in raw {
            let max_h = *horizons.keys().last().unwrap();
            let mut seq = Vec::with_capacity(max_h as usize);
            for h in 1..=max_h {
                match horizons.get(&h) {
                    Some(v) => seq.push(*v),
                    None => {
                        return Err(Error::trace(
                            path,
                            format!("frame {}: missing horizon {} of {}", frame, h, max_h),
                        ))
                    }
                }
            }
            by_frame.insert(frame, seq);
        }
        Ok(ReplayFov::from_map(by_frame))
    }

    pub fn load_path(path: &Path) -> Result<ReplayFov> {
        let file = std::fs::File::open(path)?;
        ReplayFov::load(file, &path.display().to_string())
    }
}

impl FovPredictor for ReplayFov {
    fn observe(&mut self, frame: u64, _pose: Vec3) {
        self.last_frame = Some(frame);
    }

    fn predict(&mut self, horizon: u32) -> Result<Vec<Vec3>> {
        let frame = self
            .last_frame
            .ok_or_else(|| Error::Prediction("no pose observed before replay".into()))?;
        let seq = self.by_frame.get(&frame).ok_or_else(|| {
            Error::Prediction(format!("replay has no predictions for frame {}", frame))
        })?;
        if (horizon as usize) > seq.len() {
            return Err(Error::Prediction(format!(
                "replay for frame {} stops at horizon {}, needed {}",
                frame,
                seq.len(),
                horizon
            )));
        }
        Ok(seq[..horizon as usize].to_vec())
    }
}

/// Export FoV predictions in the replay format (frame,horizon,x,y,z).
pub fn export_fov_predictions<W: Write>(
    writer: W,
    predictions: &BTreeMap<u64, Vec<Vec3>>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["frame", "horizon", "x", "y", "z"])
        .map_err(|e| Error::invalid(e.to_string()))?;
    for (frame, seq) in predictions {
        for (i, v) in seq.iter().enumerate() {
            w.write_record(&[
                frame.to_string(),
                (i + 1).to_string(),
                format!("{:.17e}", v.x),
                format!("{:.17e}", v.y),
                format!("{:.17e}", v.z),
            ])
            .map_err(|e| Error::invalid(e.to_string()))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Recursive-least-squares autoregressive throughput predictor.
///
/// The next 200 ms sample is regressed on the previous `order` samples with
/// exponential forgetting. Samples are divided by a slow running scale so the
/// covariance stays conditioned whatever the link magnitude, and the
/// covariance diagonal is capped at its initial value so forgetting cannot
/// wind it up across long steady stretches. A segment prediction feeds five
/// one-step predictions back into the regressor and sums them, clamping each
/// step to 1.5x the best recent sample.
#[derive(Debug, Clone)]
pub struct RlsBandwidth {
    order: usize,
    forgetting: f64,
    initial_cov: f64,
    weights: Vec<f64>,
    /// Covariance, row-major order x order.
    cov: Vec<f64>,
    window: VecDeque<f64>,
    /// Slow EMA of raw samples; 0.0 until the first observation.
    scale: f64,
    trained: bool,
}

impl RlsBandwidth {
    pub fn new(order: usize, forgetting: f64, initial_cov: f64) -> RlsBandwidth {
        let order = order.max(1);
        let mut cov = vec![0.0; order * order];
        for i in 0..order {
            cov[i * order + i] = initial_cov;
        }
        RlsBandwidth {
            order,
            forgetting,
            initial_cov,
            weights: vec![0.0; order],
            cov,
            window: VecDeque::new(),
            scale: 0.0,
            trained: false,
        }
    }

    fn normalized_regressor(&self) -> Option<Vec<f64>> {
        if self.window.len() < self.order {
            return None;
        }
        // Most recent sample first.
        Some(
            self.window
                .iter()
                .rev()
                .take(self.order)
                .map(|v| v / self.scale)
                .collect(),
        )
    }

    fn step_predict(&self, x: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(x)
            .map(|(w, v)| w * v)
            .sum::<f64>()
            .max(0.0)
    }

    fn update(&mut self, x: &[f64], y: f64) {
        let n = self.order;
        // P x
        let mut px = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                px[i] += self.cov[i * n + j] * x[j];
            }
        }
        let denom = self.forgetting + x.iter().zip(&px).map(|(a, b)| a * b).sum::<f64>();
        let gain: Vec<f64> = px.iter().map(|v| v / denom).collect();
        let err = y - self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        for i in 0..n {
            self.weights[i] += gain[i] * err;
        }
        // P = (P - gain (x' P)) / forgetting; x' P equals px transposed
        // because P stays symmetric.
        for i in 0..n {
            for j in 0..n {
                self.cov[i * n + j] = (self.cov[i * n + j] - gain[i] * px[j]) / self.forgetting;
            }
        }
        // Forgetting inflates P without bound when the input barely varies;
        // shrinking back to the initial uncertainty keeps the gain finite.
        let max_diag = (0..n).map(|i| self.cov[i * n + i]).fold(0.0, f64::max);
        if max_diag > self.initial_cov {
            let shrink = self.initial_cov / max_diag;
            for v in &mut self.cov {
                *v *= shrink;
            }
        }
        self.trained = true;
    }
}

impl Default for RlsBandwidth {
    fn default() -> Self {
        RlsBandwidth::new(5, 0.98, 1.0e6)
    }
}

impl BandwidthPredictor for RlsBandwidth {
    fn observe_sample(&mut self, bits: f64) {
        let b = bits.max(0.0);
        self.scale = if self.scale <= 0.0 {
            b.max(1.0)
        } else {
            (0.95 * self.scale + 0.05 * b).max(1.0)
        };
        if let Some(x) = self.normalized_regressor() {
            self.update(&x, b / self.scale);
        }
        self.window.push_back(b);
        while self.window.len() > BW_WINDOW {
            self.window.pop_front();
        }
    }

    fn predict_segment_bits(&mut self, _segment: u64) -> Result<f64> {
        if self.window.is_empty() {
            return Ok(0.0);
        }
        if !self.trained || self.window.len() < self.order {
            // Not enough context for the regressor yet; extend the mean.
            let mean = self.window.iter().sum::<f64>() / self.window.len() as f64;
            return Ok(mean * BW_BINS_PER_SEGMENT as f64);
        }
        // An autoregression fed back into itself can run away from one bad
        // fit; no link delivers much more than its best recent bin, so each
        // chained step is clamped there.
        let cap = 1.5 * self.window.iter().copied().fold(0.0, f64::max) / self.scale;
        let mut ctx: Vec<f64> = self.normalized_regressor().unwrap();
        let mut total = 0.0;
        for _ in 0..BW_BINS_PER_SEGMENT {
            let next = self.step_predict(&ctx).min(cap);
            total += next;
            ctx.rotate_right(1);
            ctx[0] = next;
        }
        Ok(total * self.scale)
    }
}

/// Harmonic-mean throughput predictor over the sample window.
#[derive(Debug, Clone, Default)]
pub struct HarmonicMeanBandwidth {
    window: VecDeque<f64>,
}

/// Samples at or below this floor (bits per 200 ms) are lifted before the
/// harmonic mean so that outage bins do not zero the estimate.
const HM_SAMPLE_FLOOR: f64 = 1.0;

impl BandwidthPredictor for HarmonicMeanBandwidth {
    fn observe_sample(&mut self, bits: f64) {
        self.window.push_back(bits.max(0.0));
        while self.window.len() > BW_WINDOW {
            self.window.pop_front();
        }
    }

    fn predict_segment_bits(&mut self, _segment: u64) -> Result<f64> {
        if self.window.is_empty() {
            return Ok(0.0);
        }
        let inv_sum: f64 = self
            .window
            .iter()
            .map(|s| 1.0 / s.max(HM_SAMPLE_FLOOR))
            .sum();
        let hm = self.window.len() as f64 / inv_sum;
        Ok(hm * BW_BINS_PER_SEGMENT as f64)
    }
}

/// Always predicts the same deliverable bits per segment, ignoring
/// observations. Pins the planned bitrate in experiments where the link
/// itself should not steer the plan, such as the pipeline lower bound.
#[derive(Debug, Clone, Copy)]
pub struct FixedBandwidth {
    bits_per_segment: f64,
}

impl FixedBandwidth {
    pub fn new(bits_per_segment: f64) -> FixedBandwidth {
        FixedBandwidth { bits_per_segment }
    }
}

impl BandwidthPredictor for FixedBandwidth {
    fn observe_sample(&mut self, _bits: f64) {}

    fn predict_segment_bits(&mut self, _segment: u64) -> Result<f64> {
        Ok(self.bits_per_segment)
    }
}

/// Perfect per-segment knowledge of deliverable bits, precomputed from the
/// bandwidth trace. The upper bound on predictor skill.
#[derive(Debug, Clone)]
pub struct OracleBandwidth {
    per_segment: Vec<f64>,
}

impl OracleBandwidth {
    pub fn from_bits_per_segment(per_segment: Vec<f64>) -> OracleBandwidth {
        OracleBandwidth { per_segment }
    }
}

impl BandwidthPredictor for OracleBandwidth {
    fn observe_sample(&mut self, _bits: f64) {}

    fn predict_segment_bits(&mut self, segment: u64) -> Result<f64> {
        self.per_segment
            .get(segment as usize)
            .copied()
            .ok_or_else(|| {
                Error::Prediction(format!("no oracle bits for segment {}", segment))
            })
    }
}

/// Plays back exported segment-bit predictions keyed by segment index.
#[derive(Debug, Clone)]
pub struct ReplayBandwidth {
    by_segment: BTreeMap<u64, f64>,
}

impl ReplayBandwidth {
    pub fn from_map(by_segment: BTreeMap<u64, f64>) -> ReplayBandwidth {
        ReplayBandwidth { by_segment }
    }

    /// Load a replay file with rows segment,bits.
    pub fn load<R: Read>(reader: R, path: &str) -> Result<ReplayBandwidth> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut by_segment = BTreeMap::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::trace(path, e.to_string()))?;
            if rec.len() != 2 {
                return Err(Error::trace(
                    path,
                    format!("row {}: expected 2 fields", i + 2),
                ));
            }
            let seg = rec[0]
                .parse::<u64>()
                .map_err(|_| Error::trace(path, format!("row {}: bad segment", i + 2)))?;
            let bits = rec[1]
                .parse::<f64>()
                .map_err(|_| Error::trace(path, format!("row {}: bad bits", i + 2)))?;
            if bits < 0.0 {
                return Err(Error::trace(path, format!("row {}: negative bits", i + 2)));
            }
            by_segment.insert(seg, bits);
        }
        Ok(ReplayBandwidth { by_segment })
    }

    pub fn load_path(path: &Path) -> Result<ReplayBandwidth> {
        let file = std::fs::File::open(path)?;
        ReplayBandwidth::load(file, &path.display().to_string())
    }
}

impl BandwidthPredictor for ReplayBandwidth {
    fn observe_sample(&mut self, _bits: f64) {}

    fn predict_segment_bits(&mut self, segment: u64) -> Result<f64> {
        self.by_segment.get(&segment).copied().ok_or_else(|| {
            Error::Prediction(format!("replay has no prediction for segment {}", segment))
        })
    }
}

/// Export bandwidth predictions in the replay format (segment,bits).
pub fn export_bandwidth_predictions<W: Write>(
    writer: W,
    predictions: &BTreeMap<u64, f64>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["segment", "bits"])
        .map_err(|e| Error::invalid(e.to_string()))?;
    for (seg, bits) in predictions {
        w.write_record(&[seg.to_string(), format!("{:.17e}", bits)])
            .map_err(|e| Error::invalid(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
