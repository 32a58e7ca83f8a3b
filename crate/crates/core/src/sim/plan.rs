//! Per-segment planning and per-frame coding specs for every system variant.

use crate::allocator::{
    border_area_deg2, closed_form_rates, plan_segment, AllocationInputs, SegmentPlan,
};
use crate::config::{SimConfig, SystemVariant};
use crate::geometry::{
    build_layout, ri_refresh_period, ErpGrid, FovPose, RegionLayout, TileId, Vec3,
    FULL_SPHERE_DEG2,
};
use crate::quality::{LogQrModel, QualityModelSet};
use crate::sim::measure::SegmentStats;
use crate::Result;
use std::collections::{BTreeMap, BTreeSet};

/// Floor for the per-frame bit budget when the segment is starved, so the
/// closed form always has something to split.
pub(crate) const MIN_FRAME_BUDGET_BITS: f64 = 1e3;

/// Everything the sender needs to code one frame.
pub(crate) struct FrameSpec {
    pub layout: RegionLayout,
    pub pf_rate: f64,
    pub pf_curve: LogQrModel,
    pub pf_inter: bool,
    pub pfplus_rate: f64,
    pub pfplus_curve: LogQrModel,
    pub pfplus_inter: bool,
    pub ri_rate: f64,
    pub ri_curve: LogQrModel,
    pub border_deg: u32,
    pub ri_tiles: u32,
    pub r_e: f64,
    pub r_b: f64,
}

/// Segment-level summary recorded in the session log.
#[derive(Debug, Clone, Copy)]
pub(crate) struct SegmentPlanDigest {
    pub budget_bits: f64,
    pub border_deg: u32,
    pub ri_tiles: u32,
    pub r_e_nominal: f64,
    pub r_b_nominal: f64,
    pub expected_quality_db: f64,
    pub gamma: f64,
    pub alpha_pf: f64,
}

pub(crate) struct SegmentPlanner {
    variant: SystemVariant,
    models: QualityModelSet,
    grid: ErpGrid,
    fov_h: f64,
    fov_v: f64,
    frames_per_segment: u32,
    a_pf_plan_deg2: f64,
    planner_borders: Vec<u32>,
    planner_ri: Vec<u32>,
    kappa_min: BTreeMap<u32, f64>,
    bm1_span_deg: f64,
    bm2_border_deg: f64,
    bm3_border_deg: f64,
    bm3_border_key: u32,
    bm3_ip_ratio: f64,
    // Carried planning inputs, refreshed from each finished segment.
    gamma: f64,
    alpha_pf: f64,
    alpha_border: BTreeMap<u32, f64>,
    alpha_ri: BTreeMap<u32, f64>,
    lapse: BTreeMap<u32, f64>,
    // Current segment.
    pub segment_bits: f64,
    pub spent_bits: f64,
    plan_border: u32,
    plan_k: u32,
    bm3_r_p_nominal: f64,
}

impl SegmentPlanner {
    pub fn new(cfg: &SimConfig, variant: SystemVariant, grid: ErpGrid) -> Result<SegmentPlanner> {
        let models = cfg.resolve_models()?;
        let (planner_borders, planner_ri) = match variant {
            SystemVariant::Proposed => (
                cfg.candidates.borders_deg.clone(),
                cfg.candidates.ri_tiles.clone(),
            ),
            SystemVariant::Simplified => (
                vec![cfg.planner.simplified_border_deg],
                vec![cfg.planner.simplified_ri_tiles],
            ),
            _ => (Vec::new(), Vec::new()),
        };
        let mut kappa_min = BTreeMap::new();
        for &k in &planner_ri {
            let period = ri_refresh_period(k, &grid);
            kappa_min.insert(k, models.quality_decay.kappa(period));
        }
        let bm3_border_key = cfg.benchmarks.bm3_border_deg.round() as u32;
        if variant == SystemVariant::Bm3 {
            models.pfplus_model(bm3_border_key)?;
        }
        // Cold-start priors: assume prediction mostly lands in the PF, give
        // borders credit growing with their width, and a token share to the
        // rotating block.
        let alpha_pf = cfg.planner.alpha_pf_prior;
        let alpha_border: BTreeMap<u32, f64> = planner_borders
            .iter()
            .map(|&b| (b, 0.08 * b as f64 / 50.0))
            .collect();
        let alpha_ri: BTreeMap<u32, f64> = planner_ri.iter().map(|&k| (k, 0.01)).collect();
        let mut lapse = BTreeMap::new();
        lapse.insert(1, 1.0);
        Ok(SegmentPlanner {
            variant,
            models,
            grid,
            fov_h: cfg.fov.h_deg,
            fov_v: cfg.fov.v_deg,
            frames_per_segment: cfg.segment.frames_per_segment,
            a_pf_plan_deg2: cfg.fov.h_deg * cfg.fov.v_deg,
            planner_borders,
            planner_ri,
            kappa_min,
            bm1_span_deg: cfg.benchmarks.bm1_span_deg,
            bm2_border_deg: cfg.benchmarks.bm2_border_deg,
            bm3_border_deg: cfg.benchmarks.bm3_border_deg,
            bm3_border_key,
            bm3_ip_ratio: cfg.benchmarks.bm3_ip_ratio,
            gamma: 1.0,
            alpha_pf,
            alpha_border,
            alpha_ri,
            lapse,
            segment_bits: 0.0,
            spent_bits: 0.0,
            plan_border: 0,
            plan_k: 0,
            bm3_r_p_nominal: 0.0,
        })
    }

    /// Candidate lists the display measurement must score, so the next plan
    /// has a hit rate for every pair it will consider.
    pub fn measured_borders(&self) -> &[u32] {
        &self.planner_borders
    }

    pub fn measured_ri(&self) -> &[u32] {
        &self.planner_ri
    }

    fn allocation_inputs(&self, budget_bits: f64) -> AllocationInputs {
        AllocationInputs {
            gamma: self.gamma,
            alpha_pf: self.alpha_pf,
            alpha_pfplus: self.alpha_border.clone(),
            alpha_ri: self.alpha_ri.clone(),
            lapse: self.lapse.clone(),
            budget_bits,
            fov_h_deg: self.fov_h,
            fov_v_deg: self.fov_v,
            a_pf_deg2: self.a_pf_plan_deg2,
            border_candidates: self.planner_borders.clone(),
            ri_candidates: self.planner_ri.clone(),
            total_tiles: self.grid.tile_count(),
            kappa_min: self.kappa_min.clone(),
            models: self.models.clone(),
        }
    }

    /// Start a segment: absorb the previous segment's measurements, grant the
    /// budget, and (for the planning variants) choose the candidate pair.
    pub fn begin_segment(
        &mut self,
        segment_bits: f64,
        stats: Option<&SegmentStats>,
    ) -> Result<SegmentPlanDigest> {
        if let Some(s) = stats {
            self.gamma = s.gamma;
            // Hit rates are evidence only if something was displayed; a
            // starved segment keeps the carried values.
            if s.displays > 0 {
                self.alpha_pf = s.alpha_pf;
                if !self.planner_borders.is_empty() {
                    self.alpha_border = s.alpha_border.clone();
                    self.alpha_ri = s.alpha_ri.clone();
                }
            }
            if !s.lapse_samples.is_empty() {
                self.lapse = crate::allocator::lapse_distribution_from_samples(&s.lapse_samples);
            }
        }
        self.segment_bits = segment_bits;
        self.spent_bits = 0.0;
        let nominal =
            (segment_bits / self.frames_per_segment as f64).max(MIN_FRAME_BUDGET_BITS);

        let digest = match self.variant {
            SystemVariant::Proposed | SystemVariant::Simplified => {
                let plan: SegmentPlan = plan_segment(&self.allocation_inputs(nominal))?;
                self.plan_border = plan.border_deg;
                self.plan_k = plan.ri_tile_count;
                SegmentPlanDigest {
                    budget_bits: segment_bits,
                    border_deg: plan.border_deg,
                    ri_tiles: plan.ri_tile_count,
                    r_e_nominal: plan.r_e,
                    r_b_nominal: plan.r_b,
                    expected_quality_db: plan.expected_quality_db,
                    gamma: self.gamma,
                    alpha_pf: self.alpha_pf,
                }
            }
            SystemVariant::Bm1 => {
                let area = self.bm1_slice_area_deg2();
                let rate = nominal / area;
                SegmentPlanDigest {
                    budget_bits: segment_bits,
                    border_deg: 0,
                    ri_tiles: 0,
                    r_e_nominal: rate,
                    r_b_nominal: rate,
                    expected_quality_db: self.models.ri.quality_at_rate(rate),
                    gamma: self.gamma,
                    alpha_pf: self.alpha_pf,
                }
            }
            SystemVariant::Bm2 => {
                let area = self.a_pf_plan_deg2
                    + border_area_deg2(self.fov_h, self.fov_v, self.bm2_border_deg);
                let rate = nominal / area;
                SegmentPlanDigest {
                    budget_bits: segment_bits,
                    border_deg: self.bm2_border_deg.round() as u32,
                    ri_tiles: 0,
                    r_e_nominal: rate,
                    r_b_nominal: rate,
                    expected_quality_db: self.models.ri.quality_at_rate(rate),
                    gamma: self.gamma,
                    alpha_pf: self.alpha_pf,
                }
            }
            SystemVariant::Bm3 => {
                let area_p = self.a_pf_plan_deg2
                    + border_area_deg2(self.fov_h, self.fov_v, self.bm3_border_deg);
                let n = self.frames_per_segment as f64;
                self.bm3_r_p_nominal = segment_bits
                    .max(MIN_FRAME_BUDGET_BITS)
                    / (self.bm3_ip_ratio * FULL_SPHERE_DEG2 + (n - 1.0) * area_p);
                SegmentPlanDigest {
                    budget_bits: segment_bits,
                    border_deg: self.bm3_border_key,
                    ri_tiles: 0,
                    r_e_nominal: self.bm3_r_p_nominal,
                    r_b_nominal: self.bm3_r_p_nominal,
                    expected_quality_db: self
                        .models
                        .pf
                        .quality_at_rate(self.bm3_r_p_nominal),
                    gamma: self.gamma,
                    alpha_pf: self.alpha_pf,
                }
            }
        };
        Ok(digest)
    }

    /// Coding spec for one frame at its granted bit budget.
    pub fn frame_spec(
        &mut self,
        frame: u64,
        frame_in_segment: u32,
        frame_budget_bits: f64,
        predicted: Vec3,
    ) -> Result<FrameSpec> {
        let pose = FovPose::new(predicted, self.fov_h, self.fov_v);
        match self.variant {
            SystemVariant::Proposed | SystemVariant::Simplified => {
                let rates = closed_form_rates(
                    &self.allocation_inputs(frame_budget_bits),
                    self.plan_border,
                    self.plan_k,
                )?;
                if frame == 0 {
                    // The opening frame intra-codes the whole sphere at the
                    // border rate so every later frame has a reference.
                    return Ok(self.full_intra_spec(rates.r_b));
                }
                let layout = build_layout(
                    &pose,
                    self.plan_border as f64,
                    self.plan_k,
                    frame,
                    &self.grid,
                )?;
                let pfplus_curve = *self.models.pfplus_model(self.plan_border)?;
                Ok(FrameSpec {
                    layout,
                    pf_rate: rates.r_e,
                    pf_curve: self.models.pf,
                    pf_inter: true,
                    pfplus_rate: rates.r_b,
                    pfplus_curve,
                    pfplus_inter: true,
                    ri_rate: rates.r_b,
                    ri_curve: self.models.ri,
                    border_deg: self.plan_border,
                    ri_tiles: self.plan_k,
                    r_e: rates.r_e,
                    r_b: rates.r_b,
                })
            }
            SystemVariant::Bm1 => {
                if frame == 0 {
                    return Ok(self.full_intra_spec(frame_budget_bits / FULL_SPHERE_DEG2));
                }
                let layout = self.bm1_layout(predicted)?;
                let rate = frame_budget_bits / layout.a_pf_deg2;
                Ok(FrameSpec {
                    pf_rate: rate,
                    pf_curve: self.models.ri,
                    pf_inter: false,
                    pfplus_rate: 0.0,
                    pfplus_curve: self.models.ri,
                    pfplus_inter: false,
                    ri_rate: 0.0,
                    ri_curve: self.models.ri,
                    border_deg: 0,
                    ri_tiles: 0,
                    r_e: rate,
                    r_b: rate,
                    layout,
                })
            }
            SystemVariant::Bm2 => {
                if frame == 0 {
                    return Ok(self.full_intra_spec(frame_budget_bits / FULL_SPHERE_DEG2));
                }
                let layout = build_layout(&pose, self.bm2_border_deg, 0, frame, &self.grid)?;
                let area = self.a_pf_plan_deg2
                    + border_area_deg2(self.fov_h, self.fov_v, self.bm2_border_deg);
                let rate = frame_budget_bits / area;
                Ok(FrameSpec {
                    layout,
                    pf_rate: rate,
                    pf_curve: self.models.ri,
                    pf_inter: false,
                    pfplus_rate: rate,
                    pfplus_curve: self.models.ri,
                    pfplus_inter: false,
                    ri_rate: 0.0,
                    ri_curve: self.models.ri,
                    border_deg: self.bm2_border_deg.round() as u32,
                    ri_tiles: 0,
                    r_e: rate,
                    r_b: rate,
                })
            }
            SystemVariant::Bm3 => {
                if frame_in_segment == 0 {
                    // Segment-leading intra frame, charged at its nominal
                    // rate no matter what the frame budget says.
                    return Ok(self.full_intra_spec(self.bm3_ip_ratio * self.bm3_r_p_nominal));
                }
                let layout = build_layout(&pose, self.bm3_border_deg, 0, frame, &self.grid)?;
                let area = self.a_pf_plan_deg2
                    + border_area_deg2(self.fov_h, self.fov_v, self.bm3_border_deg);
                let rate = frame_budget_bits / area;
                let pfplus_curve = *self.models.pfplus_model(self.bm3_border_key)?;
                Ok(FrameSpec {
                    layout,
                    pf_rate: rate,
                    pf_curve: self.models.pf,
                    pf_inter: true,
                    pfplus_rate: rate,
                    pfplus_curve,
                    pfplus_inter: true,
                    ri_rate: 0.0,
                    ri_curve: self.models.ri,
                    border_deg: self.bm3_border_key,
                    ri_tiles: 0,
                    r_e: rate,
                    r_b: rate,
                })
            }
        }
    }

    /// Whole-sphere intra layout at a single rate, recorded on the intra
    /// curve. Used for stream-opening frames and BM3 segment leaders.
    fn full_intra_spec(&self, rate: f64) -> FrameSpec {
        let all: BTreeSet<TileId> = (0..self.grid.tile_count())
            .map(|i| self.grid.tile_at_raster(i))
            .collect();
        let layout =
            RegionLayout::from_sets(&self.grid, all, BTreeSet::new(), BTreeSet::new());
        FrameSpec {
            layout,
            pf_rate: rate,
            pf_curve: self.models.ri,
            pf_inter: false,
            pfplus_rate: 0.0,
            pfplus_curve: self.models.ri,
            pfplus_inter: false,
            ri_rate: 0.0,
            ri_curve: self.models.ri,
            border_deg: 0,
            ri_tiles: 0,
            r_e: rate,
            r_b: rate,
        }
    }

    fn bm1_col_count(&self) -> u32 {
        let col_width = 360.0 / self.grid.cols() as f64;
        ((self.bm1_span_deg / col_width).ceil() as u32).min(self.grid.cols())
    }

    fn bm1_slice_area_deg2(&self) -> f64 {
        self.bm1_col_count() as f64 / self.grid.cols() as f64 * FULL_SPHERE_DEG2
    }

    /// Full-height column slices centered on the predicted view direction.
    fn bm1_layout(&self, predicted: Vec3) -> Result<RegionLayout> {
        let cols = self.grid.cols();
        let n_cols = self.bm1_col_count();
        let center = self.grid.tile_of_direction(predicted).col as u32;
        let start = (center + cols - n_cols / 2) % cols;
        let mut tiles = BTreeSet::new();
        for c in 0..n_cols {
            let col = ((start + c) % cols) as u16;
            for row in 0..self.grid.rows() as u16 {
                tiles.insert(TileId { row, col });
            }
        }
        Ok(RegionLayout::from_sets(
            &self.grid,
            tiles,
            BTreeSet::new(),
            BTreeSet::new(),
        ))
    }
}
