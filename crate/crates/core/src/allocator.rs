//! Per-segment rate allocation and per-frame bit budgeting.
//!
//! Once per segment the sender picks a border size, a rotating-intra block
//! size, and the two coding rates (R_e for the predicted FoV, R_b for the
//! border and the rotating block). For a fixed candidate pair the optimal
//! rates under the bit budget come out in closed form because every region's
//! quality is logarithmic in its rate; candidates are then compared by their
//! expected viewport quality.
//!
//! Planning uses flat-ERP region areas (square degrees of the nominal
//! viewport rectangle, the border ring, and the average rotating-block
//! share of the sphere); actual per-frame bit charging uses the true
//! spherical area of each coded tile.

use crate::quality::{LogQrModel, QualityModelSet, RATE_FLOOR};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::geometry::FULL_SPHERE_DEG2;

/// Flat-ERP area of the border ring around an h x v viewport, square degrees.
pub fn border_area_deg2(h_deg: f64, v_deg: f64, border_deg: f64) -> f64 {
    (h_deg + border_deg) * (v_deg + border_deg) - h_deg * v_deg
}

/// Average spherical area of a rotating block of `k` tiles, square degrees.
pub fn ri_area_deg2(k: u32, total_tiles: u32) -> f64 {
    k as f64 / total_tiles as f64 * FULL_SPHERE_DEG2
}

/// Expected fraction of PF or PF+ tiles that stay inter coded when `k`
/// tiles per frame are claimed by the rotating block.
pub fn lambda_inter(k: u32, total_tiles: u32) -> f64 {
    1.0 - k as f64 / total_tiles as f64
}

/// Everything the per-segment optimizer needs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AllocationInputs {
    /// In-time delivery ratio measured over the previous segment.
    pub gamma: f64,
    /// Viewport hit rate of the PF region.
    pub alpha_pf: f64,
    /// Border hit rate per border candidate (degrees).
    pub alpha_pfplus: BTreeMap<u32, f64>,
    /// Rotating-block hit rate per block-size candidate (tiles).
    pub alpha_ri: BTreeMap<u32, f64>,
    /// Distribution of reference lapses of PF tiles at coding time.
    pub lapse: BTreeMap<u32, f64>,
    /// Bit budget per frame.
    pub budget_bits: f64,
    /// Nominal viewport extents, degrees.
    pub fov_h_deg: f64,
    pub fov_v_deg: f64,
    /// Planning area of the PF region, square degrees.
    pub a_pf_deg2: f64,
    pub border_candidates: Vec<u32>,
    pub ri_candidates: Vec<u32>,
    pub total_tiles: u32,
    /// Quality decay at a full rotation period, per block-size candidate.
    pub kappa_min: BTreeMap<u32, f64>,
    pub models: QualityModelSet,
}

impl AllocationInputs {
    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::invalid(format!("gamma {} outside [0, 1]", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.alpha_pf) {
            return Err(Error::invalid("alpha_pf outside [0, 1]"));
        }
        if self.budget_bits <= 0.0 {
            return Err(Error::Allocation(format!(
                "nonpositive frame budget {}",
                self.budget_bits
            )));
        }
        if self.border_candidates.is_empty() || self.ri_candidates.is_empty() {
            return Err(Error::invalid("candidate lists must be nonempty"));
        }
        if self.a_pf_deg2 <= 0.0 || self.total_tiles == 0 {
            return Err(Error::invalid("PF area and tile count must be positive"));
        }
        Ok(())
    }

    fn alpha_pfplus(&self, border: u32) -> Result<f64> {
        self.alpha_pfplus
            .get(&border)
            .copied()
            .ok_or_else(|| Error::invalid(format!("no border hit rate for {} degrees", border)))
    }

    fn alpha_ri(&self, k: u32) -> Result<f64> {
        self.alpha_ri
            .get(&k)
            .copied()
            .ok_or_else(|| Error::invalid(format!("no rotating-block hit rate for {} tiles", k)))
    }

    fn kappa_min(&self, k: u32) -> Result<f64> {
        self.kappa_min
            .get(&k)
            .copied()
            .ok_or_else(|| Error::invalid(format!("no decay floor for {} tiles", k)))
    }

    /// The PF curve as deflated by the expected inter-coding inflation.
    fn lapse_adjusted_pf(&self) -> Result<LogQrModel> {
        let factor = self.models.rate_increase.expected_rho(&self.lapse)?;
        self.models.pf.with_rate_inflation(factor)
    }
}

/// The two coding rates for one candidate pair, bits per square degree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePair {
    pub r_e: f64,
    pub r_b: f64,
    /// True when a rate had to be clamped to the floor or the rates were
    /// projected to satisfy r_e >= r_b.
    pub clamped: bool,
}

/// Plan for one segment (or one frame, when re-derived at the frame budget).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentPlan {
    pub border_deg: u32,
    pub ri_tile_count: u32,
    pub r_e: f64,
    pub r_b: f64,
    pub expected_quality_db: f64,
    pub budget_bits: f64,
    pub rate_clamped: bool,
}

/// Expected viewport quality for one candidate pair at the given rates.
///
/// In-time regions contribute their curve quality weighted by hit rate; the
/// remainder of the viewport shows stale content whose quality has decayed
/// to the rotation-period floor.
pub fn expected_quality(
    r_e: f64,
    r_b: f64,
    inputs: &AllocationInputs,
    border_deg: u32,
    ri_tiles: u32,
) -> Result<f64> {
    inputs.validate()?;
    let q_pf = inputs.lapse_adjusted_pf()?.quality_at_rate(r_e);
    let q_pb = inputs.models.pfplus_model(border_deg)?.quality_at_rate(r_b);
    let q_ri = inputs.models.ri.quality_at_rate(r_b);
    let gamma = inputs.gamma;
    let a_ri = inputs.alpha_ri(ri_tiles)?;
    // PF and border hit rates are shape hits; the candidate's rotating block
    // claims its measured share of the view from inside those shapes, so
    // they are deflated to keep the three masses disjoint.
    let a_pf = inputs.alpha_pf * (1.0 - a_ri);
    let a_pb = inputs.alpha_pfplus(border_deg)? * (1.0 - a_ri);
    let kappa_min = inputs.kappa_min(ri_tiles)?;
    let covered = (a_pf + a_pb + a_ri).min(1.0);
    let hit = gamma * (a_pf * q_pf + a_pb * q_pb + a_ri * q_ri);
    let miss = (1.0 - gamma * covered) * kappa_min * q_ri;
    Ok(hit + miss)
}

/// Closed-form optimal rates for one candidate pair under the frame budget.
///
/// With X = gamma alpha_pf b_pf and Y collecting the slope terms of every
/// region paid at R_b, the optimum splits the budget in proportion X : Y
/// between the PF spend and the border-plus-rotating spend. Rates are
/// floored and projected so that R_e >= R_b, keeping the budget identity
/// exact.
pub fn closed_form_rates(
    inputs: &AllocationInputs,
    border_deg: u32,
    ri_tiles: u32,
) -> Result<RatePair> {
    inputs.validate()?;
    let b_pf = inputs.models.pf.b;
    let b_pb = inputs.models.pfplus_model(border_deg)?.b;
    let b_ri = inputs.models.ri.b;
    let gamma = inputs.gamma;
    let a_ri = inputs.alpha_ri(ri_tiles)?;
    // Same shape-hit deflation as the quality expectation.
    let a_pf = inputs.alpha_pf * (1.0 - a_ri);
    let a_pb = inputs.alpha_pfplus(border_deg)? * (1.0 - a_ri);
    let kappa_min = inputs.kappa_min(ri_tiles)?;
    let covered = (a_pf + a_pb + a_ri).min(1.0);

    let x = gamma * a_pf * b_pf;
    let y = gamma * a_pb * b_pb + gamma * a_ri * b_ri + (1.0 - gamma * covered) * kappa_min * b_ri;
    if x + y <= 0.0 {
        return Err(Error::Allocation(
            "no region has positive quality slope; cannot split the budget".into(),
        ));
    }

    let lambda = lambda_inter(ri_tiles, inputs.total_tiles);
    let denom_e = lambda * inputs.a_pf_deg2;
    let denom_b = lambda * border_area_deg2(inputs.fov_h_deg, inputs.fov_v_deg, border_deg as f64)
        + ri_area_deg2(ri_tiles, inputs.total_tiles);
    let budget = inputs.budget_bits;

    let mut r_e = x / (x + y) * budget / denom_e;
    let mut r_b = y / (x + y) * budget / denom_b;
    let mut clamped = false;

    if r_b < RATE_FLOOR {
        r_b = RATE_FLOOR;
        r_e = (budget - denom_b * r_b) / denom_e;
        clamped = true;
    }
    if r_e < RATE_FLOOR {
        r_e = RATE_FLOOR;
        r_b = ((budget - denom_e * r_e) / denom_b).max(RATE_FLOOR);
        clamped = true;
    }
    if r_e < r_b {
        // The border must never be coded above the viewport; fall back to a
        // single common rate, which still meets the budget exactly.
        let common = (budget / (denom_e + denom_b)).max(RATE_FLOOR);
        r_e = common;
        r_b = common;
        clamped = true;
    }
    Ok(RatePair { r_e, r_b, clamped })
}

/// Enumerate candidate pairs, solve each in closed form, and keep the pair
/// with the best expected quality. Ties prefer the smaller border, then the
/// smaller rotating block; a single-candidate input reproduces the
/// fixed-layout variant.
pub fn plan_segment(inputs: &AllocationInputs) -> Result<SegmentPlan> {
    inputs.validate()?;
    let mut best: Option<SegmentPlan> = None;
    for &border in &inputs.border_candidates {
        for &k in &inputs.ri_candidates {
            let rates = closed_form_rates(inputs, border, k)?;
            let q = expected_quality(rates.r_e, rates.r_b, inputs, border, k)?;
            let candidate = SegmentPlan {
                border_deg: border,
                ri_tile_count: k,
                r_e: rates.r_e,
                r_b: rates.r_b,
                expected_quality_db: q,
                budget_bits: inputs.budget_bits,
                rate_clamped: rates.clamped,
            };
            let better = match &best {
                None => true,
                Some(b) => q > b.expected_quality_db,
            };
            if better {
                best = Some(candidate);
            }
        }
    }
    best.ok_or_else(|| Error::Allocation("no candidate pairs to evaluate".into()))
}

/// Bits granted to a segment: the utilization share of the predicted
/// bandwidth after subtracting the sender backlog, floored at zero.
pub fn segment_budget(predicted_bits: f64, backlog_bits: f64, eta: f64) -> Result<f64> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::invalid(format!("eta {} outside (0, 1]", eta)));
    }
    if predicted_bits < 0.0 || backlog_bits < 0.0 {
        return Err(Error::invalid("bit quantities must be nonnegative"));
    }
    Ok((eta * (predicted_bits - backlog_bits)).max(0.0))
}

/// Mid-segment budget state used by the per-frame controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetState {
    /// Bits granted to this segment.
    pub segment_bits: f64,
    /// Bits already spent on this segment's frames.
    pub spent_bits: f64,
    /// Index of the next frame within the segment, 0-based.
    pub frame_in_segment: u32,
    /// Frames per segment.
    pub frames_per_segment: u32,
    /// Sender buffer occupancy, whole frames.
    pub occupancy_frames: u32,
    /// Sender buffer capacity, frames.
    pub capacity_frames: u32,
}

/// Bits still available to the rest of the segment. Spending is paced: the
/// faster of actual spend and the proportional schedule is charged, so an
/// early overshoot shrinks what later frames may use.
pub fn remaining_segment_budget(state: &BudgetState) -> f64 {
    let n = state.frame_in_segment as f64;
    let pace = n / state.frames_per_segment as f64 * state.segment_bits;
    (state.segment_bits - state.spent_bits.max(pace)).max(0.0)
}

/// Bit budget for the next frame, or None when the sender buffer is full
/// and the frame must be skipped. An emptier buffer is allowed to run ahead
/// of the even split by the gain factor; a fuller buffer is throttled
/// exponentially.
pub fn frame_bit_budget(state: &BudgetState, gain: f64, decay: f64) -> Result<Option<f64>> {
    if state.frame_in_segment >= state.frames_per_segment {
        return Err(Error::invalid(format!(
            "frame {} outside segment of {} frames",
            state.frame_in_segment, state.frames_per_segment
        )));
    }
    if state.capacity_frames == 0 {
        return Err(Error::invalid("sender buffer capacity must be positive"));
    }
    if state.occupancy_frames >= state.capacity_frames {
        return Ok(None);
    }
    let remaining = remaining_segment_budget(state);
    let frames_left = (state.frames_per_segment - state.frame_in_segment) as f64;
    let fullness = state.occupancy_frames as f64 / state.capacity_frames as f64;
    Ok(Some(
        remaining / frames_left * gain * (-decay * fullness).exp(),
    ))
}

/// Normalized histogram of reference lapses. An empty sample set reports
/// the all-fresh distribution {1: 1}.
pub fn lapse_distribution_from_samples(samples: &[u32]) -> BTreeMap<u32, f64> {
    let mut dist = BTreeMap::new();
    if samples.is_empty() {
        dist.insert(1, 1.0);
        return dist;
    }
    for &tau in samples {
        *dist.entry(tau.max(1)).or_insert(0.0) += 1.0;
    }
    let n = samples.len() as f64;
    for v in dist.values_mut() {
        *v /= n;
    }
    dist
}

/// One frame of coding history for lapse replay: which tiles (by raster
/// index) were inter coded as PF, and which were refreshed by other means
/// (border or rotating block).
#[derive(Debug, Clone)]
pub struct FrameCoding {
    pub frame: u64,
    pub pf_tiles: Vec<u32>,
    pub refreshed_tiles: Vec<u32>,
}

/// Replay coding history and collect the distribution of reference lapses
/// seen by PF tiles at their coding instants. `last_coded` maps raster tile
/// index to the frame the tile was last coded and is updated by the replay;
/// tiles with no entry count as fresh (lapse 1).
pub fn measure_lapse_distribution(
    last_coded: &mut BTreeMap<u32, u64>,
    history: &[FrameCoding],
) -> BTreeMap<u32, f64> {
    let mut samples = Vec::new();
    for rec in history {
        for &t in &rec.pf_tiles {
            let tau = match last_coded.get(&t) {
                Some(&prev) if rec.frame > prev => (rec.frame - prev) as u32,
                _ => 1,
            };
            samples.push(tau.max(1));
        }
        for &t in rec.pf_tiles.iter().chain(&rec.refreshed_tiles) {
            last_coded.insert(t, rec.frame);
        }
    }
    lapse_distribution_from_samples(&samples)
}
