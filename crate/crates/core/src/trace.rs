//! FoV and bandwidth trace parsing, validation, and preprocessing.
//!
//! FoV traces are sequences of timestamped unit view directions at the video
//! frame rate. Bandwidth traces are contiguous time intervals each carrying
//! the bits deliverable within it, from which a piecewise-constant rate is
//! derived. Axis convention everywhere: x forward, y left, z up; yaw rotates
//! about z (positive turns left), pitch about y (positive looks up).

use crate::geometry::Vec3;
use crate::{Error, Result};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::io::Read;
use std::path::Path;

/// One timestamped view direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FovSample {
    pub t_ms: f64,
    pub dir: Vec3,
}

/// A view-direction trace with strictly increasing timestamps and unit
/// direction vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct FovTrace {
    samples: Vec<FovSample>,
}

impl FovTrace {
    pub fn new(samples: Vec<FovSample>) -> Result<FovTrace> {
        if samples.is_empty() {
            return Err(Error::invalid("empty FoV trace"));
        }
        for (i, s) in samples.iter().enumerate() {
            if !s.t_ms.is_finite() || !s.dir.norm().is_finite() {
                return Err(Error::invalid(format!("non-finite FoV sample {}", i)));
            }
            if (s.dir.norm() - 1.0).abs() > 1e-6 {
                return Err(Error::invalid(format!(
                    "FoV sample {} is not unit-norm",
                    i
                )));
            }
            if i > 0 && s.t_ms <= samples[i - 1].t_ms {
                return Err(Error::invalid(format!(
                    "timestamps not strictly increasing at sample {}",
                    i
                )));
            }
        }
        Ok(FovTrace { samples })
    }

    /// Build a trace from per-frame directions at a fixed frame interval.
    pub fn from_directions(dirs: Vec<Vec3>, frame_interval_ms: f64) -> Result<FovTrace> {
        let samples = dirs
            .into_iter()
            .enumerate()
            .map(|(i, d)| FovSample {
                t_ms: i as f64 * frame_interval_ms,
                dir: d.normalized(),
            })
            .collect();
        FovTrace::new(samples)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[FovSample] {
        &self.samples
    }

    pub fn dir(&self, index: usize) -> Vec3 {
        self.samples[index.min(self.samples.len() - 1)].dir
    }

    /// Median inter-sample spacing, ms.
    pub fn frame_interval_ms(&self) -> f64 {
        if self.samples.len() < 2 {
            return 0.0;
        }
        let mut gaps: Vec<f64> = self
            .samples
            .windows(2)
            .map(|w| w[1].t_ms - w[0].t_ms)
            .collect();
        gaps.sort_by(|a, b| a.partial_cmp(b).unwrap());
        gaps[gaps.len() / 2]
    }

    /// Duration covered, counting one frame interval past the last sample.
    pub fn duration_ms(&self) -> f64 {
        match self.samples.last() {
            Some(s) => s.t_ms - self.samples[0].t_ms + self.frame_interval_ms(),
            None => 0.0,
        }
    }

    /// Nearest-sample resampling onto a uniform grid starting at the first
    /// timestamp.
    pub fn resampled(&self, fps: f64) -> Result<FovTrace> {
        if fps <= 0.0 {
            return Err(Error::invalid("fps must be positive"));
        }
        let dt = 1000.0 / fps;
        let t0 = self.samples[0].t_ms;
        let n = ((self.duration_ms() / dt).round() as usize).max(1);
        let mut out = Vec::with_capacity(n);
        let mut j = 0usize;
        for i in 0..n {
            let t = t0 + i as f64 * dt;
            while j + 1 < self.samples.len()
                && (self.samples[j + 1].t_ms - t).abs() <= (self.samples[j].t_ms - t).abs()
            {
                j += 1;
            }
            out.push(FovSample {
                t_ms: i as f64 * dt,
                dir: self.samples[j].dir,
            });
        }
        FovTrace::new(out)
    }
}

/// Supported FoV trace file layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FovFormat {
    /// timestamp_ms,yaw_deg,pitch_deg
    YawPitchDeg,
    /// timestamp_ms,x,y,z
    Xyz,
    /// timestamp_ms,qw,qx,qy,qz — rotation applied to the forward axis.
    Quaternion,
    /// Pick by column count and header names.
    Auto,
}

/// Strict mode rejects malformed rows; lenient mode repairs what it can
/// (renormalizes off-unit vectors, drops out-of-order rows) and reports each
/// repair as a warning.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseMode {
    Strict,
    Lenient,
}

fn quat_rotate_forward(w: f64, x: f64, y: f64, z: f64) -> Vec3 {
    // q * (1,0,0) * conj(q) expanded.
    Vec3::new(
        w * w + x * x - y * y - z * z,
        2.0 * (x * y + w * z),
        2.0 * (x * z - w * y),
    )
}

fn detect_fov_format(headers: &csv::StringRecord) -> Result<FovFormat> {
    let names: Vec<String> = headers.iter().map(|h| h.trim().to_lowercase()).collect();
    let has = |n: &str| names.iter().any(|h| h == n || h.starts_with(n));
    if names.len() == 3 && (has("yaw") || has("yaw_deg")) {
        return Ok(FovFormat::YawPitchDeg);
    }
    if names.len() == 4 && has("x") && has("y") && has("z") {
        return Ok(FovFormat::Xyz);
    }
    if names.len() == 5 && (has("qw") || has("w")) {
        return Ok(FovFormat::Quaternion);
    }
    match names.len() {
        3 => Ok(FovFormat::YawPitchDeg),
        4 => Ok(FovFormat::Xyz),
        5 => Ok(FovFormat::Quaternion),
        n => Err(Error::invalid(format!(
            "cannot infer FoV format from {} columns",
            n
        ))),
    }
}

/// Parse a FoV trace CSV. Returns the trace plus any lenient-mode repair
/// warnings (always empty in strict mode).
pub fn parse_fov_trace<R: Read>(
    reader: R,
    path: &str,
    format: FovFormat,
    mode: ParseMode,
) -> Result<(FovTrace, Vec<String>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::trace(path, e.to_string()))?
        .clone();
    let format = match format {
        FovFormat::Auto => detect_fov_format(&headers).map_err(|e| match e {
            Error::InvalidArgument(m) => Error::trace(path, m),
            other => other,
        })?,
        f => f,
    };
    let want_cols = match format {
        FovFormat::YawPitchDeg => 3,
        FovFormat::Xyz => 4,
        FovFormat::Quaternion => 5,
        FovFormat::Auto => unreachable!(),
    };

    let mut samples: Vec<FovSample> = Vec::new();
    let mut warnings = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::trace(path, e.to_string()))?;
        if rec.len() != want_cols {
            return Err(Error::trace(
                path,
                format!("row {}: expected {} fields, got {}", line, want_cols, rec.len()),
            ));
        }
        let mut nums = Vec::with_capacity(want_cols);
        let mut bad = false;
        for field in rec.iter() {
            match field.parse::<f64>() {
                Ok(v) if v.is_finite() => nums.push(v),
                _ => {
                    bad = true;
                    break;
                }
            }
        }
        if bad {
            match mode {
                ParseMode::Strict => {
                    return Err(Error::trace(path, format!("row {}: malformed number", line)))
                }
                ParseMode::Lenient => {
                    warnings.push(format!("row {}: dropped malformed row", line));
                    continue;
                }
            }
        }
        let t_ms = nums[0];
        let dir = match format {
            FovFormat::YawPitchDeg => Vec3::from_yaw_pitch(nums[1], nums[2]),
            FovFormat::Xyz => {
                let v = Vec3::new(nums[1], nums[2], nums[3]);
                let n = v.norm();
                if (n - 1.0).abs() > 1e-3 {
                    match mode {
                        ParseMode::Strict => {
                            return Err(Error::trace(
                                path,
                                format!("row {}: direction norm {} is not 1", line, n),
                            ))
                        }
                        ParseMode::Lenient if n > 1e-9 => {
                            warnings.push(format!("row {}: renormalized direction", line));
                        }
                        ParseMode::Lenient => {
                            warnings.push(format!("row {}: dropped zero direction", line));
                            continue;
                        }
                    }
                }
                v.normalized()
            }
            FovFormat::Quaternion => {
                let qn = (nums[1] * nums[1] + nums[2] * nums[2] + nums[3] * nums[3]
                    + nums[4] * nums[4])
                    .sqrt();
                if (qn - 1.0).abs() > 1e-3 {
                    match mode {
                        ParseMode::Strict => {
                            return Err(Error::trace(
                                path,
                                format!("row {}: quaternion norm {} is not 1", line, qn),
                            ))
                        }
                        ParseMode::Lenient if qn > 1e-9 => {
                            warnings.push(format!("row {}: renormalized quaternion", line));
                        }
                        ParseMode::Lenient => {
                            warnings.push(format!("row {}: dropped zero quaternion", line));
                            continue;
                        }
                    }
                }
                quat_rotate_forward(nums[1] / qn, nums[2] / qn, nums[3] / qn, nums[4] / qn)
                    .normalized()
            }
            FovFormat::Auto => unreachable!("resolved above"),
        };
        if let Some(prev) = samples.last() {
            if t_ms <= prev.t_ms {
                match mode {
                    ParseMode::Strict => {
                        return Err(Error::trace(
                            path,
                            format!("row {}: timestamp {} not increasing", line, t_ms),
                        ))
                    }
                    ParseMode::Lenient => {
                        warnings.push(format!("row {}: dropped out-of-order timestamp", line));
                        continue;
                    }
                }
            }
        }
        samples.push(FovSample { t_ms, dir });
    }
    if samples.is_empty() {
        return Err(Error::trace(path, "no usable samples"));
    }
    Ok((FovTrace { samples }, warnings))
}

pub fn parse_fov_trace_path(
    path: &Path,
    format: FovFormat,
    mode: ParseMode,
) -> Result<(FovTrace, Vec<String>)> {
    let file = std::fs::File::open(path)?;
    parse_fov_trace(file, &path.display().to_string(), format, mode)
}

/// Default per-axis process noise for the constant-velocity smoother.
pub const KALMAN_PROCESS_NOISE: f64 = 1e-4;
/// Default per-axis measurement noise for the constant-velocity smoother.
pub const KALMAN_MEASUREMENT_NOISE: f64 = 1e-2;

/// Constant-velocity Kalman filter, run independently per coordinate axis,
/// with per-sample renormalization back onto the sphere.
pub fn kalman_smooth(trace: &FovTrace, process_noise: f64, measurement_noise: f64) -> Result<FovTrace> {
    if trace.len() < 2 {
        return Err(Error::invalid("smoothing needs at least 2 samples"));
    }
    if process_noise <= 0.0 || measurement_noise <= 0.0 {
        return Err(Error::invalid("noise parameters must be positive"));
    }
    let n = trace.len();
    let mut axes = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for (i, s) in trace.samples.iter().enumerate() {
        axes[0][i] = s.dir.x;
        axes[1][i] = s.dir.y;
        axes[2][i] = s.dir.z;
    }
    let mut filtered = [Vec::new(), Vec::new(), Vec::new()];
    for (a, series) in axes.iter().enumerate() {
        filtered[a] = filter_axis(series, process_noise, measurement_noise);
    }
    let samples = (0..n)
        .map(|i| FovSample {
            t_ms: trace.samples[i].t_ms,
            dir: Vec3::new(filtered[0][i], filtered[1][i], filtered[2][i]).normalized(),
        })
        .collect();
    FovTrace::new(samples)
}

/// Scalar constant-velocity Kalman filter. State (position, velocity) with a
/// unit frame step; returns the filtered positions.
fn filter_axis(z: &[f64], q: f64, r: f64) -> Vec<f64> {
    let mut pos = z[0];
    let mut vel = 0.0;
    // Covariance entries p[0]=var(pos), p[1]=cov(pos,vel), p[2]=var(vel).
    let mut p = [1.0, 0.0, 1.0];
    let mut out = Vec::with_capacity(z.len());
    out.push(pos);
    for &m in &z[1..] {
        // Predict with F = [[1,1],[0,1]], Q = q*I.
        let pos_p = pos + vel;
        let vel_p = vel;
        let p00 = p[0] + 2.0 * p[1] + p[2] + q;
        let p01 = p[1] + p[2];
        let p11 = p[2] + q;
        // Update against the position measurement.
        let s = p00 + r;
        let k0 = p00 / s;
        let k1 = p01 / s;
        let resid = m - pos_p;
        pos = pos_p + k0 * resid;
        vel = vel_p + k1 * resid;
        p = [
            (1.0 - k0) * p00,
            (1.0 - k0) * p01,
            p11 - k1 * p01,
        ];
        out.push(pos);
    }
    out
}

/// Extend a trace to at least `target_ms` by appending alternating reversed
/// and forward copies, then truncating. Junctions repeat the boundary sample,
/// so no extra pose jump is introduced.
pub fn flip_extend(trace: &FovTrace, target_ms: f64) -> Result<FovTrace> {
    if target_ms <= 0.0 {
        return Err(Error::invalid("target duration must be positive"));
    }
    let dt = trace.frame_interval_ms();
    if dt <= 0.0 {
        return Err(Error::invalid("flip extension needs at least 2 samples"));
    }
    let want = (target_ms / dt).ceil() as usize;
    let forward: Vec<Vec3> = trace.samples.iter().map(|s| s.dir).collect();
    let mut dirs: Vec<Vec3> = Vec::with_capacity(want);
    let mut reversed = false;
    while dirs.len() < want {
        if reversed {
            dirs.extend(forward.iter().rev());
        } else {
            dirs.extend(forward.iter());
        }
        reversed = !reversed;
    }
    dirs.truncate(want);
    FovTrace::from_directions(dirs, dt)
}

/// One bandwidth interval: `bits` deliverable between the previous
/// boundary and `end_ms`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandwidthInterval {
    pub end_ms: f64,
    pub bits: f64,
}

/// Contiguous piecewise-constant bandwidth trace starting at t = 0.
#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthTrace {
    intervals: Vec<BandwidthInterval>,
}

impl BandwidthTrace {
    pub fn new(intervals: Vec<BandwidthInterval>) -> Result<BandwidthTrace> {
        if intervals.is_empty() {
            return Err(Error::invalid("empty bandwidth trace"));
        }
        let mut prev = 0.0;
        for (i, iv) in intervals.iter().enumerate() {
            if !iv.end_ms.is_finite() || iv.end_ms <= prev {
                return Err(Error::invalid(format!(
                    "interval {} does not advance time",
                    i
                )));
            }
            if !(iv.bits >= 0.0) {
                return Err(Error::invalid(format!("interval {} has negative bits", i)));
            }
            prev = iv.end_ms;
        }
        Ok(BandwidthTrace { intervals })
    }

    /// Uniform trace from rate samples of equal duration.
    pub fn from_rates_mbps(rates: &[f64], step_ms: f64) -> Result<BandwidthTrace> {
        if step_ms <= 0.0 {
            return Err(Error::invalid("step must be positive"));
        }
        let intervals = rates
            .iter()
            .enumerate()
            .map(|(i, r)| BandwidthInterval {
                end_ms: (i + 1) as f64 * step_ms,
                bits: r * 1e6 * step_ms / 1000.0,
            })
            .collect();
        BandwidthTrace::new(intervals)
    }

    pub fn intervals(&self) -> &[BandwidthInterval] {
        &self.intervals
    }

    pub fn duration_ms(&self) -> f64 {
        self.intervals.last().map(|iv| iv.end_ms).unwrap_or(0.0)
    }

    pub fn total_bits(&self) -> f64 {
        self.intervals.iter().map(|iv| iv.bits).sum()
    }

    /// Peak instantaneous rate, bits per second.
    pub fn peak_rate_bps(&self) -> f64 {
        let mut prev = 0.0;
        let mut peak = 0.0f64;
        for iv in &self.intervals {
            peak = peak.max(iv.bits / (iv.end_ms - prev) * 1000.0);
            prev = iv.end_ms;
        }
        peak
    }

    /// Mean rate over the whole trace, bits per second.
    pub fn mean_rate_bps(&self) -> f64 {
        self.total_bits() / self.duration_ms() * 1000.0
    }

    /// Instantaneous rate in bits per ms at time `t_ms`; zero past the end.
    pub fn rate_bits_per_ms(&self, t_ms: f64) -> f64 {
        let mut prev = 0.0;
        for iv in &self.intervals {
            if t_ms < iv.end_ms {
                return iv.bits / (iv.end_ms - prev);
            }
            prev = iv.end_ms;
        }
        0.0
    }

    /// Bits deliverable in [t0, t1].
    pub fn bits_between(&self, t0_ms: f64, t1_ms: f64) -> f64 {
        if t1_ms <= t0_ms {
            return 0.0;
        }
        let mut acc = 0.0;
        let mut prev: f64 = 0.0;
        for iv in &self.intervals {
            let lo = prev.max(t0_ms);
            let hi = iv.end_ms.min(t1_ms);
            if hi > lo {
                acc += iv.bits * (hi - lo) / (iv.end_ms - prev);
            }
            prev = iv.end_ms;
            if prev >= t1_ms {
                break;
            }
        }
        acc
    }

    /// Earliest time at which `bits` have drained starting from `t0_ms`.
    /// Errors if the trace ends first.
    pub fn advance(&self, t0_ms: f64, bits: f64) -> Result<f64> {
        if bits <= 0.0 {
            return Ok(t0_ms);
        }
        let mut remaining = bits;
        let mut prev = 0.0;
        for iv in &self.intervals {
            if iv.end_ms <= t0_ms {
                prev = iv.end_ms;
                continue;
            }
            let lo = prev.max(t0_ms);
            let span = iv.end_ms - prev;
            let avail = iv.bits * (iv.end_ms - lo) / span;
            if avail >= remaining {
                if iv.bits <= 0.0 {
                    prev = iv.end_ms;
                    continue;
                }
                let dt = remaining * span / iv.bits;
                return Ok(lo + dt);
            }
            remaining -= avail;
            prev = iv.end_ms;
        }
        Err(Error::invalid(format!(
            "bandwidth trace shorter than session: {} bits undeliverable after {} ms",
            remaining,
            self.duration_ms()
        )))
    }

    /// Linearly scale so the peak instantaneous rate equals `target_bps`.
    pub fn scaled_to_peak(&self, target_bps: f64) -> Result<BandwidthTrace> {
        if target_bps <= 0.0 {
            return Err(Error::invalid("target peak must be positive"));
        }
        let peak = self.peak_rate_bps();
        if peak <= 0.0 {
            return Err(Error::invalid("cannot scale an all-zero trace"));
        }
        let factor = target_bps / peak;
        let intervals = self
            .intervals
            .iter()
            .map(|iv| BandwidthInterval {
                end_ms: iv.end_ms,
                bits: iv.bits * factor,
            })
            .collect();
        BandwidthTrace::new(intervals)
    }
}

/// Linear scaling so the peak instantaneous rate equals `target_bps`.
pub fn scale_bandwidth(trace: &BandwidthTrace, target_bps: f64) -> Result<BandwidthTrace> {
    trace.scaled_to_peak(target_bps)
}

/// Supported bandwidth trace file layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandwidthFormat {
    /// timestamp_ms,bytes — bytes that arrived since the previous row.
    Arrivals,
    /// timestamp_ms,mbps — rate holding from this row until the next; the
    /// last row holds for one median step.
    Rate,
    /// Pick by header names.
    Auto,
}

/// Parse a bandwidth trace CSV.
pub fn parse_bandwidth_trace<R: Read>(
    reader: R,
    path: &str,
    format: BandwidthFormat,
) -> Result<BandwidthTrace> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::trace(path, e.to_string()))?
        .clone();
    let format = match format {
        BandwidthFormat::Auto => {
            let names: Vec<String> = headers.iter().map(|h| h.trim().to_lowercase()).collect();
            if names.iter().any(|h| h.contains("mbps") || h.contains("rate")) {
                BandwidthFormat::Rate
            } else {
                BandwidthFormat::Arrivals
            }
        }
        f => f,
    };
    let mut rows: Vec<(f64, f64)> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::trace(path, e.to_string()))?;
        if rec.len() != 2 {
            return Err(Error::trace(
                path,
                format!("row {}: expected 2 fields", line),
            ));
        }
        let t = rec[0]
            .parse::<f64>()
            .map_err(|_| Error::trace(path, format!("row {}: bad timestamp", line)))?;
        let v = rec[1]
            .parse::<f64>()
            .map_err(|_| Error::trace(path, format!("row {}: bad value", line)))?;
        if !t.is_finite() || !v.is_finite() || v < 0.0 {
            return Err(Error::trace(path, format!("row {}: bad value", line)));
        }
        if let Some(&(pt, _)) = rows.last() {
            if t <= pt {
                return Err(Error::trace(
                    path,
                    format!("row {}: timestamp not increasing", line),
                ));
            }
        }
        rows.push((t, v));
    }
    if rows.is_empty() {
        return Err(Error::trace(path, "no usable samples"));
    }
    match format {
        BandwidthFormat::Arrivals => {
            // Bytes attributed to the interval ending at each row.
            let mut intervals = Vec::with_capacity(rows.len());
            for (t, bytes) in rows {
                if t <= 0.0 {
                    return Err(Error::trace(path, "arrival timestamps must be positive"));
                }
                intervals.push(BandwidthInterval {
                    end_ms: t,
                    bits: bytes * 8.0,
                });
            }
            BandwidthTrace::new(intervals)
        }
        BandwidthFormat::Rate => {
            if rows.len() < 2 {
                return Err(Error::trace(path, "rate format needs at least 2 rows"));
            }
            let mut gaps: Vec<f64> = rows.windows(2).map(|w| w[1].0 - w[0].0).collect();
            gaps.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let tail = gaps[gaps.len() / 2];
            let base = rows[0].0;
            let mut intervals = Vec::with_capacity(rows.len());
            for (i, &(t, mbps)) in rows.iter().enumerate() {
                let end = if i + 1 < rows.len() {
                    rows[i + 1].0
                } else {
                    t + tail
                };
                let span_ms = end - t;
                intervals.push(BandwidthInterval {
                    end_ms: end - base,
                    bits: mbps * 1e6 * span_ms / 1000.0,
                });
            }
            BandwidthTrace::new(intervals)
        }
        BandwidthFormat::Auto => unreachable!("resolved above"),
    }
}

pub fn parse_bandwidth_trace_path(path: &Path, format: BandwidthFormat) -> Result<BandwidthTrace> {
    let file = std::fs::File::open(path)?;
    parse_bandwidth_trace(file, &path.display().to_string(), format)
}

/// Sum delivered (time_ms, bits) events into fixed bins covering
/// [0, duration). Events past the end fold into the last bin so that the
/// bins always conserve the total.
pub fn bin_throughput(events: &[(f64, f64)], bin_ms: f64, duration_ms: f64) -> Result<Vec<f64>> {
    if bin_ms <= 0.0 || duration_ms <= 0.0 {
        return Err(Error::invalid("bin and duration must be positive"));
    }
    let nbins = (duration_ms / bin_ms).ceil() as usize;
    let mut bins = vec![0.0; nbins.max(1)];
    for &(t, bits) in events {
        let idx = ((t / bin_ms).floor() as usize).min(bins.len() - 1);
        bins[idx] += bits;
    }
    Ok(bins)
}

/// Styles for the synthetic FoV generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FovStyle {
    /// Smooth wandering gaze with occasional heading changes.
    SmoothWalk,
    /// Climb to a pole and dwell there with a slow spin.
    PoleDwell,
    /// Mostly equatorial panning.
    EquatorPan,
}

/// Deterministic synthetic head-motion trace. Velocities follow a clamped
/// AR(1) random walk, which keeps per-frame motion in the range real traces
/// show (fractions of a degree to a few degrees per frame).
pub fn synthetic_fov_trace(seed: u64, frames: usize, fps: f64, style: FovStyle) -> Result<FovTrace> {
    if frames == 0 || fps <= 0.0 {
        return Err(Error::invalid("frames and fps must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut yaw: f64 = rng.gen_range(-180.0..180.0);
    let mut pitch: f64 = match style {
        FovStyle::PoleDwell => 10.0,
        _ => rng.gen_range(-20.0..20.0),
    };
    let mut yaw_vel: f64 = 0.0;
    let mut pitch_vel: f64 = 0.0;
    let mut dirs = Vec::with_capacity(frames);
    for f in 0..frames {
        let (target_pitch, wobble) = match style {
            FovStyle::SmoothWalk => (0.0, 1.0),
            FovStyle::PoleDwell => (82.0, 0.3),
            FovStyle::EquatorPan => (0.0, 0.25),
        };
        // Velocity drifts toward a pitch set-point plus noise; 0.92 keeps
        // direction changes smooth at 30 fps.
        yaw_vel = 0.92 * yaw_vel + wobble * rng.gen_range(-0.25..0.25);
        pitch_vel = 0.92 * pitch_vel
            + 0.01 * (target_pitch - pitch)
            + wobble * rng.gen_range(-0.15..0.15);
        if let FovStyle::PoleDwell = style {
            // Slow steady spin around the pole.
            yaw_vel = yaw_vel.clamp(-0.8, 0.8) + 0.4;
        }
        yaw_vel = yaw_vel.clamp(-3.0, 3.0);
        pitch_vel = pitch_vel.clamp(-2.0, 2.0);
        yaw = (yaw + yaw_vel).rem_euclid(360.0);
        pitch = (pitch + pitch_vel).clamp(-88.0, 88.0);
        let _ = f;
        dirs.push(Vec3::from_yaw_pitch(yaw, pitch));
    }
    FovTrace::from_directions(dirs, 1000.0 / fps)
}

/// Styles for the synthetic bandwidth generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandwidthStyle {
    /// Near-constant rate with small jitter.
    Steady,
    /// Cellular-like fluctuation around the mean.
    Fluctuating,
    /// Fluctuating plus a short near-outage roughly every 100 s.
    Dropouts,
}

/// Deterministic synthetic bandwidth trace in 200 ms steps around
/// `mean_mbps`.
pub fn synthetic_bandwidth_trace(
    seed: u64,
    duration_ms: f64,
    mean_mbps: f64,
    style: BandwidthStyle,
) -> Result<BandwidthTrace> {
    if duration_ms <= 0.0 || mean_mbps <= 0.0 {
        return Err(Error::invalid("duration and mean must be positive"));
    }
    let step_ms = 200.0;
    let steps = (duration_ms / step_ms).ceil() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_ba5e);
    let (jitter, revert) = match style {
        BandwidthStyle::Steady => (0.02, 0.5),
        _ => (0.12, 0.12),
    };
    let mut level = 1.0f64;
    let mut rates = Vec::with_capacity(steps);
    let mut outage_left = 0usize;
    for i in 0..steps {
        if let BandwidthStyle::Dropouts = style {
            // One 1-1.6 s near-outage per 100 s on average: 0.002 per step.
            if outage_left == 0 && rng.gen_bool(0.002) {
                outage_left = rng.gen_range(5..=8);
            }
        }
        if outage_left > 0 {
            outage_left -= 1;
            rates.push(mean_mbps * 0.02);
            continue;
        }
        level += revert * (1.0 - level) + rng.gen_range(-jitter..jitter);
        level = level.clamp(0.25, 1.9);
        let _ = i;
        rates.push(mean_mbps * level);
    }
    BandwidthTrace::from_rates_mbps(&rates, step_ms)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn walk_trace(n: usize) -> FovTrace {
        let dirs = (0..n)
            .map(|i| Vec3::from_yaw_pitch(i as f64 * 1.5, (i as f64 * 0.7).sin() * 20.0))
            .collect();
        FovTrace::from_directions(dirs, 1000.0 / 30.0).unwrap()
    }

    #[test]
    fn test_parse_yaw_pitch_anchor() {
        let csv = "timestamp_ms,yaw_deg,pitch_deg\n0,0,0\n33.3,90,0\n66.6,0,90\n";
        let (t, warn) = parse_fov_trace(csv.as_bytes(), "mem", FovFormat::Auto, ParseMode::Strict)
            .unwrap();
        assert!(warn.is_empty());
        assert!(t.dir(0).angle_deg(Vec3::new(1.0, 0.0, 0.0)) < 1e-9);
        assert!(t.dir(1).angle_deg(Vec3::new(0.0, 1.0, 0.0)) < 1e-9);
        assert!(t.dir(2).angle_deg(Vec3::new(0.0, 0.0, 1.0)) < 1e-9);
    }

    #[test]
    fn test_parse_quaternion_identity_and_yaw() {
        let half = (45.0f64.to_radians()).cos();
        let s = (45.0f64.to_radians()).sin();
        let csv = format!(
            "timestamp_ms,qw,qx,qy,qz\n0,1,0,0,0\n33.3,{},0,0,{}\n",
            half, s
        );
        let (t, _) =
            parse_fov_trace(csv.as_bytes(), "mem", FovFormat::Auto, ParseMode::Strict).unwrap();
        assert!(t.dir(0).angle_deg(Vec3::new(1.0, 0.0, 0.0)) < 1e-9);
        // Rotation by 90 deg about z turns forward to +y (leftward).
        assert!(t.dir(1).angle_deg(Vec3::new(0.0, 1.0, 0.0)) < 1e-9);
    }

    #[test]
    fn test_angle_round_trip() {
        for (yaw, pitch) in [(0.0, 0.0), (123.4, 45.6), (-91.0, -60.0), (179.0, 5.0)] {
            let v = Vec3::from_yaw_pitch(yaw, pitch);
            let yaw_back = v.lon_deg();
            let pitch_back = v.lat_deg();
            let v2 = Vec3::from_yaw_pitch(yaw_back, pitch_back);
            assert!(v.angle_deg(v2) < 1e-9, "round trip for ({}, {})", yaw, pitch);
        }
    }

    #[test]
    fn test_strict_rejects_lenient_repairs() {
        let csv = "timestamp_ms,x,y,z\n0,1,0,0\n33.3,2,0,0\n30,0,1,0\n66.6,0,0,1\n";
        assert!(
            parse_fov_trace(csv.as_bytes(), "mem", FovFormat::Auto, ParseMode::Strict).is_err()
        );
        let (t, warn) =
            parse_fov_trace(csv.as_bytes(), "mem", FovFormat::Auto, ParseMode::Lenient).unwrap();
        // Row 3 renormalized, row 4 dropped for going back in time.
        assert_eq!(t.len(), 3);
        assert_eq!(warn.len(), 2);
        assert!((t.dir(1).norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn test_kalman_constant_unchanged() {
        let dirs = vec![Vec3::from_yaw_pitch(40.0, 10.0); 50];
        let t = FovTrace::from_directions(dirs, 33.3).unwrap();
        let s = kalman_smooth(&t, KALMAN_PROCESS_NOISE, KALMAN_MEASUREMENT_NOISE).unwrap();
        for i in 10..50 {
            assert!(s.dir(i).angle_deg(t.dir(i)).to_radians() < 1e-6);
        }
    }

    #[test]
    fn test_kalman_damps_impulse() {
        let base = Vec3::from_yaw_pitch(0.0, 0.0);
        let mut dirs = vec![base; 60];
        dirs[30] = Vec3::from_yaw_pitch(8.0, 0.0);
        let t = FovTrace::from_directions(dirs, 33.3).unwrap();
        let s = kalman_smooth(&t, KALMAN_PROCESS_NOISE, KALMAN_MEASUREMENT_NOISE).unwrap();
        let raw = t.dir(30).angle_deg(base);
        let smoothed = s.dir(30).angle_deg(base);
        assert!(
            smoothed < 0.5 * raw,
            "impulse {} only reduced to {}",
            raw,
            smoothed
        );
        for i in 0..60 {
            assert!((s.dir(i).norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn test_flip_extend_identity_and_double() {
        let t = walk_trace(40);
        let dt = t.frame_interval_ms();
        let same = flip_extend(&t, 40.0 * dt).unwrap();
        assert_eq!(same.len(), 40);
        for i in 0..40 {
            assert!(same.dir(i).angle_deg(t.dir(i)) < 1e-12);
        }
        let double = flip_extend(&t, 80.0 * dt).unwrap();
        assert_eq!(double.len(), 80);
        for i in 0..40 {
            assert!(double.dir(40 + i).angle_deg(t.dir(39 - i)) < 1e-12);
        }
        // Max per-frame jump never exceeds that of the original.
        let max_jump = |tr: &FovTrace| {
            tr.samples()
                .windows(2)
                .map(|w| w[0].dir.angle_deg(w[1].dir))
                .fold(0.0, f64::max)
        };
        assert!(max_jump(&double) <= max_jump(&t) + 1e-12);
    }

    #[test]
    fn test_scale_bandwidth() {
        let t = BandwidthTrace::from_rates_mbps(&[10.0, 10.0, 10.0], 200.0).unwrap();
        let scaled = scale_bandwidth(&t, 200e6).unwrap();
        assert!((scaled.peak_rate_bps() - 200e6).abs() < 1e-3);
        assert!((scaled.rate_bits_per_ms(100.0) - 200e3).abs() < 1e-9);

        let varied = BandwidthTrace::from_rates_mbps(&[5.0, 20.0, 10.0, 40.0], 200.0).unwrap();
        let mean = varied.mean_rate_bps();
        let std = {
            let rs = [5.0, 20.0, 10.0, 40.0].map(|m: f64| m * 1e6);
            let mu = rs.iter().sum::<f64>() / 4.0;
            (rs.iter().map(|r| (r - mu) * (r - mu)).sum::<f64>() / 4.0).sqrt()
        };
        let scaled2 = scale_bandwidth(&varied, 200e6).unwrap();
        let mean2 = scaled2.mean_rate_bps();
        let ratio_before = std / mean;
        let rs2: Vec<f64> = scaled2
            .intervals()
            .iter()
            .map(|iv| iv.bits / 200.0 * 1000.0)
            .collect();
        let mu2 = rs2.iter().sum::<f64>() / rs2.len() as f64;
        let std2 = (rs2.iter().map(|r| (r - mu2) * (r - mu2)).sum::<f64>() / rs2.len() as f64)
            .sqrt();
        assert!(((std2 / mean2) - ratio_before).abs() < 1e-9);

        let zero = BandwidthTrace::from_rates_mbps(&[0.0, 0.0], 200.0).unwrap();
        assert!(scale_bandwidth(&zero, 200e6).is_err());
    }

    #[test]
    fn test_advance_and_integral() {
        // 1 Mbps for 200 ms, outage, then 2 Mbps.
        let t = BandwidthTrace::from_rates_mbps(&[1.0, 0.0, 2.0], 200.0).unwrap();
        assert!((t.bits_between(0.0, 600.0) - (200e3 + 400e3)).abs() < 1e-6);
        // 100 kbit drains in 100 ms at 1 Mbps.
        assert!((t.advance(0.0, 100e3).unwrap() - 100.0).abs() < 1e-9);
        // 250 kbit: 200 ms yields 200 kbit, outage, then 25 ms at 2 Mbps.
        assert!((t.advance(0.0, 250e3).unwrap() - 425.0).abs() < 1e-9);
        // Exactly all deliverable bits drain at the very end.
        assert!((t.advance(0.0, 600e3).unwrap() - 600.0).abs() < 1e-9);
        assert!(t.advance(0.0, 600e3 + 1.0).is_err());
    }

    #[test]
    fn test_parse_bandwidth_formats() {
        let arrivals = "timestamp_ms,bytes\n200,25000\n400,50000\n600,25000\n";
        let t = parse_bandwidth_trace(arrivals.as_bytes(), "mem", BandwidthFormat::Auto).unwrap();
        assert!((t.total_bits() - 800e3).abs() < 1e-9);
        assert!((t.rate_bits_per_ms(300.0) - 2000.0).abs() < 1e-9);

        let rates = "timestamp_ms,mbps\n0,1\n200,2\n400,1\n";
        let t2 = parse_bandwidth_trace(rates.as_bytes(), "mem", BandwidthFormat::Auto).unwrap();
        assert!((t2.duration_ms() - 600.0).abs() < 1e-9);
        assert!((t2.total_bits() - (200e3 + 400e3 + 200e3)).abs() < 1e-9);

        let unsorted = "timestamp_ms,bytes\n200,100\n100,100\n";
        assert!(parse_bandwidth_trace(unsorted.as_bytes(), "mem", BandwidthFormat::Auto).is_err());
    }

    #[test]
    fn test_bin_throughput_conserves() {
        let events = vec![(10.0, 100.0), (199.9, 50.0), (200.0, 75.0), (950.0, 25.0)];
        let bins = bin_throughput(&events, 200.0, 1000.0).unwrap();
        assert_eq!(bins.len(), 5);
        assert!((bins[0] - 150.0).abs() < 1e-12);
        assert!((bins[1] - 75.0).abs() < 1e-12);
        assert!((bins.iter().sum::<f64>() - 250.0).abs() < 1e-12);
        // Empty log still conserves (all-zero bins).
        let empty = bin_throughput(&[], 200.0, 1000.0).unwrap();
        assert!(empty.iter().all(|b| *b == 0.0));
    }

    #[test]
    fn test_synthetic_fov_smooth_and_deterministic() {
        let a = synthetic_fov_trace(7, 600, 30.0, FovStyle::SmoothWalk).unwrap();
        let b = synthetic_fov_trace(7, 600, 30.0, FovStyle::SmoothWalk).unwrap();
        assert_eq!(a, b);
        let max_step = a
            .samples()
            .windows(2)
            .map(|w| w[0].dir.angle_deg(w[1].dir))
            .fold(0.0, f64::max);
        assert!(max_step < 5.0, "per-frame motion too fast: {}", max_step);
    }

    #[test]
    fn test_synthetic_pole_dwell_reaches_pole() {
        let t = synthetic_fov_trace(3, 3000, 30.0, FovStyle::PoleDwell).unwrap();
        let late: Vec<f64> = t.samples()[1500..].iter().map(|s| s.dir.lat_deg()).collect();
        let mean_lat = late.iter().sum::<f64>() / late.len() as f64;
        assert!(mean_lat > 70.0, "mean late latitude {}", mean_lat);
    }

    #[test]
    fn test_synthetic_bandwidth_mean_and_dropouts() {
        let t = synthetic_bandwidth_trace(11, 500_000.0, 60.0, BandwidthStyle::Dropouts).unwrap();
        let mean = t.mean_rate_bps() / 1e6;
        assert!(mean > 30.0 && mean < 90.0, "mean {} Mbps", mean);
        // Outage steps run at 2 percent of the mean; detect anything under
        // 5 percent (3 Mbps) over a 200 ms interval.
        let has_outage = t.intervals().iter().any(|iv| iv.bits * 5.0 < 3.0e6);
        assert!(has_outage, "expected at least one dropout in 500 s");
    }

    #[test]
    fn test_resample_nearest() {
        let samples = vec![
            FovSample { t_ms: 0.0, dir: Vec3::from_yaw_pitch(0.0, 0.0) },
            FovSample { t_ms: 100.0, dir: Vec3::from_yaw_pitch(10.0, 0.0) },
            FovSample { t_ms: 200.0, dir: Vec3::from_yaw_pitch(20.0, 0.0) },
        ];
        let t = FovTrace::new(samples).unwrap();
        let r = t.resampled(30.0).unwrap();
        assert!(r.len() >= 8);
        assert!(r.dir(0).angle_deg(Vec3::from_yaw_pitch(0.0, 0.0)) < 1e-9);
        assert!(r.dir(3).angle_deg(Vec3::from_yaw_pitch(10.0, 0.0)) < 1e-9);
    }
}
