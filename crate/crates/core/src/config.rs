//! Runtime configuration: video geometry, pipeline timing, buffer and
//! segment policy, candidate sets, predictor choice, and quality-model
//! presets. Everything loads from one TOML file; omitted keys take the
//! defaults listed here.

use crate::quality::{LogQrModel, QualityDecayModel, QualityModelSet, RateIncreaseModel};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

/// Which streaming system a session simulates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SystemVariant {
    /// Full system: enumerated region sizes, closed-form rates, rotating
    /// intra block.
    Proposed,
    /// Fixed 50 degree border and 4-tile rotating block; rates still closed
    /// form.
    Simplified,
    /// Intra-coded full-height column slices spanning a fixed longitude
    /// range around the predicted view.
    Bm1,
    /// Intra-coded PF plus a fixed border, no rotating block.
    Bm2,
    /// Segment-leading full-frame intra plus inter-coded PF/border frames.
    Bm3,
}

impl SystemVariant {
    pub const ALL: [SystemVariant; 5] = [
        SystemVariant::Proposed,
        SystemVariant::Simplified,
        SystemVariant::Bm1,
        SystemVariant::Bm2,
        SystemVariant::Bm3,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SystemVariant::Proposed => "proposed",
            SystemVariant::Simplified => "simplified",
            SystemVariant::Bm1 => "bm1",
            SystemVariant::Bm2 => "bm2",
            SystemVariant::Bm3 => "bm3",
        }
    }
}

impl FromStr for SystemVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<SystemVariant> {
        match s.to_lowercase().as_str() {
            "proposed" => Ok(SystemVariant::Proposed),
            "simplified" => Ok(SystemVariant::Simplified),
            "bm1" => Ok(SystemVariant::Bm1),
            "bm2" => Ok(SystemVariant::Bm2),
            "bm3" => Ok(SystemVariant::Bm3),
            other => Err(Error::Config(format!("unknown system variant {:?}", other))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VideoConfig {
    pub width_px: u32,
    pub height_px: u32,
    pub tile_px: u32,
    pub fps: f64,
    /// Peak sample intensity for PSNR-style numbers (8-bit video).
    pub peak_intensity: f64,
}

impl Default for VideoConfig {
    fn default() -> Self {
        VideoConfig {
            width_px: 8192,
            height_px: 4096,
            tile_px: 256,
            fps: 30.0,
            peak_intensity: 255.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimingConfig {
    pub encode_ms: f64,
    pub decode_ms: f64,
    pub propagation_ms: f64,
    /// Display polls per frame interval.
    pub polls_per_frame: u32,
}

impl Default for TimingConfig {
    fn default() -> Self {
        TimingConfig {
            encode_ms: 33.33,
            decode_ms: 11.1,
            propagation_ms: 15.0,
            polls_per_frame: 3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BufferConfig {
    pub sender_capacity_frames: u32,
    pub max_display_delay_frames: u32,
}

impl Default for BufferConfig {
    fn default() -> Self {
        BufferConfig {
            sender_capacity_frames: 10,
            max_display_delay_frames: 20,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentConfig {
    pub frames_per_segment: u32,
    /// Fraction of the headroom-adjusted bandwidth prediction granted as
    /// segment budget.
    pub eta: f64,
    /// Per-frame budget gain when the sender buffer is empty.
    pub frame_gain_a: f64,
    /// Exponential budget decay per unit of buffer fill.
    pub frame_decay_b: f64,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        SegmentConfig {
            frames_per_segment: 30,
            eta: 0.66,
            frame_gain_a: 1.2,
            frame_decay_b: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FovExtentConfig {
    pub h_deg: f64,
    pub v_deg: f64,
}

impl Default for FovExtentConfig {
    fn default() -> Self {
        FovExtentConfig {
            h_deg: 90.0,
            v_deg: 90.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CandidateConfig {
    pub borders_deg: Vec<u32>,
    pub ri_tiles: Vec<u32>,
}

impl Default for CandidateConfig {
    fn default() -> Self {
        CandidateConfig {
            borders_deg: vec![10, 20, 30, 40, 50],
            ri_tiles: vec![4, 8, 16, 32, 64],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    /// PF hit-rate prior for the first segment, before measurements exist.
    pub alpha_pf_prior: f64,
    /// Bandwidth assumption for the first segment, before any throughput
    /// sample has been observed.
    pub initial_bandwidth_mbps: f64,
    /// Fixed border width used by the simplified variant.
    pub simplified_border_deg: u32,
    /// Fixed rotating-block size used by the simplified variant.
    pub simplified_ri_tiles: u32,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            alpha_pf_prior: 0.9,
            initial_bandwidth_mbps: 50.0,
            simplified_border_deg: 50,
            simplified_ri_tiles: 4,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FovPredictorChoice {
    TruncatedLinear {
        #[serde(default = "default_fov_window")]
        window: usize,
        #[serde(default = "default_fov_threshold")]
        residual_threshold_deg: f64,
    },
    Hold,
    /// Reads the ground-truth trace; a pipeline lower bound, not a predictor.
    Oracle,
    Replay {
        path: PathBuf,
    },
}

fn default_fov_window() -> usize {
    30
}

fn default_fov_threshold() -> f64 {
    1.0
}

impl Default for FovPredictorChoice {
    fn default() -> Self {
        FovPredictorChoice::TruncatedLinear {
            window: default_fov_window(),
            residual_threshold_deg: default_fov_threshold(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BandwidthPredictorChoice {
    Rls {
        #[serde(default = "default_rls_order")]
        order: usize,
        #[serde(default = "default_rls_forgetting")]
        forgetting: f64,
        #[serde(default = "default_rls_cov")]
        initial_cov: f64,
    },
    HarmonicMean,
    /// Constant prediction regardless of observations; pins the planned
    /// bitrate for lower-bound experiments.
    Fixed {
        mbps: f64,
    },
    /// Reads the trace itself; an upper bound on predictor skill.
    Oracle,
    Replay {
        path: PathBuf,
    },
}

fn default_rls_order() -> usize {
    5
}

fn default_rls_forgetting() -> f64 {
    0.98
}

fn default_rls_cov() -> f64 {
    1.0e6
}

impl Default for BandwidthPredictorChoice {
    fn default() -> Self {
        BandwidthPredictorChoice::Rls {
            order: default_rls_order(),
            forgetting: default_rls_forgetting(),
            initial_cov: default_rls_cov(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictorConfig {
    pub fov: FovPredictorChoice,
    pub bandwidth: BandwidthPredictorChoice,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        PredictorConfig {
            fov: FovPredictorChoice::default(),
            bandwidth: BandwidthPredictorChoice::default(),
        }
    }
}

/// Log-curve parameters as written in config files.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveParams {
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RhoParams {
    pub c: f64,
    pub d: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KappaParams {
    pub g: f64,
    pub h: f64,
}

/// Quality-model section: start from a named preset, then apply any explicit
/// overrides. The presets are synthetic: their shapes (inter curves above the
/// intra curve, moderate lapse inflation, slow decay) stand in for fitted
/// per-content models.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub preset: Option<String>,
    pub pf: Option<CurveParams>,
    /// Border-width-keyed inter curves for the enlarged region; TOML keys
    /// are the widths in degrees.
    pub pfplus: Option<BTreeMap<String, CurveParams>>,
    pub ri: Option<CurveParams>,
    pub rate_increase: Option<RhoParams>,
    pub quality_decay: Option<KappaParams>,
}

pub const PRESET_STABLE: &str = "stable-scene";
pub const PRESET_DYNAMIC: &str = "dynamic-scene";

fn preset_models(name: &str, peak_intensity: f64) -> Result<QualityModelSet> {
    let (pf, pfplus_rows, ri, rho, kappa): (
        (f64, f64),
        [(u32, f64, f64); 5],
        (f64, f64),
        (f64, f64),
        (f64, f64),
    ) = match name {
        PRESET_STABLE => (
            (30.0, 3.2),
            [
                (10, 29.5, 3.05),
                (20, 29.0, 3.0),
                (30, 28.5, 2.95),
                (40, 28.0, 2.9),
                (50, 27.5, 2.85),
            ],
            (22.0, 2.6),
            (0.8, 0.5),
            (0.004, 1.0),
        ),
        PRESET_DYNAMIC => (
            (27.0, 3.0),
            [
                (10, 26.5, 2.9),
                (20, 26.0, 2.85),
                (30, 25.5, 2.8),
                (40, 25.0, 2.75),
                (50, 24.5, 2.7),
            ],
            (20.0, 2.4),
            (1.2, 0.8),
            (0.012, 1.1),
        ),
        other => {
            return Err(Error::Config(format!("unknown model preset {:?}", other)));
        }
    };
    let mut pfplus = BTreeMap::new();
    for (deg, a, b) in pfplus_rows {
        pfplus.insert(deg, LogQrModel::new(a, b)?);
    }
    Ok(QualityModelSet {
        pf: LogQrModel::new(pf.0, pf.1)?,
        pfplus,
        ri: LogQrModel::new(ri.0, ri.1)?,
        rate_increase: RateIncreaseModel::new(rho.0, rho.1)?,
        quality_decay: QualityDecayModel::new(kappa.0, kappa.1)?,
        peak_intensity,
    })
}

impl ModelConfig {
    pub fn resolve(&self, peak_intensity: f64) -> Result<QualityModelSet> {
        let preset = self.preset.as_deref().unwrap_or(PRESET_STABLE);
        let mut set = preset_models(preset, peak_intensity)?;
        if let Some(p) = self.pf {
            set.pf = LogQrModel::new(p.a, p.b)?;
        }
        if let Some(p) = self.ri {
            set.ri = LogQrModel::new(p.a, p.b)?;
        }
        if let Some(rows) = &self.pfplus {
            let mut map = BTreeMap::new();
            for (key, p) in rows {
                let deg: u32 = key
                    .parse()
                    .map_err(|_| Error::Config(format!("bad border key {:?}", key)))?;
                map.insert(deg, LogQrModel::new(p.a, p.b)?);
            }
            set.pfplus = map;
        }
        if let Some(p) = self.rate_increase {
            set.rate_increase = RateIncreaseModel::new(p.c, p.d)?;
        }
        if let Some(p) = self.quality_decay {
            set.quality_decay = QualityDecayModel::new(p.g, p.h)?;
        }
        Ok(set)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    /// Longitude span the column slices must cover.
    pub bm1_span_deg: f64,
    pub bm2_border_deg: f64,
    pub bm3_border_deg: f64,
    /// Intra-to-inter frame bit ratio for the segment-leading full frame.
    pub bm3_ip_ratio: f64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            bm1_span_deg: 140.0,
            bm2_border_deg: 50.0,
            bm3_border_deg: 50.0,
            bm3_ip_ratio: 4.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub seed: u64,
    /// Per-axis sample density for in-simulation viewport hit measurement.
    pub hit_samples_per_axis: u32,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            seed: 1,
            hit_samples_per_axis: 64,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub video: VideoConfig,
    pub timing: TimingConfig,
    pub buffers: BufferConfig,
    pub segment: SegmentConfig,
    pub fov: FovExtentConfig,
    pub candidates: CandidateConfig,
    pub planner: PlannerConfig,
    pub predictors: PredictorConfig,
    pub models: ModelConfig,
    pub benchmarks: BenchmarkConfig,
    pub simulation: SimulationConfig,
}

impl SimConfig {
    pub fn from_toml_str(text: &str) -> Result<SimConfig> {
        let cfg: SimConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_path(path: &Path) -> Result<SimConfig> {
        let text = std::fs::read_to_string(path)?;
        SimConfig::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Default configuration with the named model preset.
    pub fn with_preset(preset: &str) -> Result<SimConfig> {
        let mut cfg = SimConfig::default();
        cfg.models.preset = Some(preset.to_string());
        // Resolve now so an unknown preset fails here, not mid-run.
        cfg.models.resolve(cfg.video.peak_intensity)?;
        Ok(cfg)
    }

    pub fn resolve_models(&self) -> Result<QualityModelSet> {
        self.models.resolve(self.video.peak_intensity)
    }

    pub fn validate(&self) -> Result<()> {
        let v = &self.video;
        if v.fps <= 0.0 || v.fps > 240.0 {
            return Err(Error::Config(format!("fps {} out of range", v.fps)));
        }
        if v.peak_intensity <= 0.0 {
            return Err(Error::Config("peak intensity must be positive".into()));
        }
        crate::geometry::ErpGrid::new(v.width_px, v.height_px, v.tile_px)
            .map_err(|e| Error::Config(format!("video grid: {}", e)))?;
        let t = &self.timing;
        if t.encode_ms <= 0.0 || t.decode_ms < 0.0 || t.propagation_ms < 0.0 {
            return Err(Error::Config("timing values must be positive".into()));
        }
        if t.polls_per_frame == 0 || t.polls_per_frame > 30 {
            return Err(Error::Config("polls per frame out of range".into()));
        }
        if self.buffers.sender_capacity_frames == 0 {
            return Err(Error::Config("sender buffer needs capacity".into()));
        }
        if self.buffers.max_display_delay_frames == 0 {
            return Err(Error::Config("display delay limit must be positive".into()));
        }
        let s = &self.segment;
        if s.frames_per_segment == 0 {
            return Err(Error::Config("segment needs at least one frame".into()));
        }
        if !(0.0 < s.eta && s.eta <= 1.0) {
            return Err(Error::Config(format!("eta {} outside (0, 1]", s.eta)));
        }
        if s.frame_gain_a <= 0.0 || s.frame_decay_b < 0.0 {
            return Err(Error::Config("frame budget parameters out of range".into()));
        }
        if !(self.fov.h_deg > 0.0 && self.fov.h_deg < 180.0)
            || !(self.fov.v_deg > 0.0 && self.fov.v_deg < 180.0)
        {
            return Err(Error::Config("FoV extents must lie in (0, 180)".into()));
        }
        if self.candidates.borders_deg.is_empty() || self.candidates.ri_tiles.is_empty() {
            return Err(Error::Config("candidate sets must be nonempty".into()));
        }
        let total = (v.width_px / v.tile_px) * (v.height_px / v.tile_px);
        for &k in &self.candidates.ri_tiles {
            if k == 0 || k > total {
                return Err(Error::Config(format!(
                    "rotating block candidate {} outside 1..={}",
                    k, total
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.planner.alpha_pf_prior) {
            return Err(Error::Config("alpha_pf prior outside [0, 1]".into()));
        }
        if self.planner.initial_bandwidth_mbps <= 0.0 {
            return Err(Error::Config("initial bandwidth must be positive".into()));
        }
        if self.planner.simplified_ri_tiles == 0 || self.planner.simplified_ri_tiles > total {
            return Err(Error::Config("simplified rotating block size out of range".into()));
        }
        let b = &self.benchmarks;
        if !(0.0 < b.bm1_span_deg && b.bm1_span_deg <= 360.0) {
            return Err(Error::Config("bm1 span outside (0, 360]".into()));
        }
        if b.bm2_border_deg < 0.0 || b.bm3_border_deg < 0.0 || b.bm3_ip_ratio < 1.0 {
            return Err(Error::Config("benchmark parameters out of range".into()));
        }
        if self.simulation.hit_samples_per_axis < 8 {
            return Err(Error::Config("hit sampling density too low".into()));
        }
        let models = self.resolve_models()?;
        for &deg in self
            .candidates
            .borders_deg
            .iter()
            .chain(std::iter::once(&self.planner.simplified_border_deg))
        {
            models.pfplus_model(deg).map_err(|_| {
                Error::Config(format!("no border quality curve for {} degrees", deg))
            })?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn test_default_config_is_valid() {
        let cfg = SimConfig::default();
        cfg.validate().unwrap();
        let models = cfg.resolve_models().unwrap();
        // Synthetic presets must put the intra curve below the inter curves,
        // in both offset and slope.
        assert!(models.ri.a < models.pf.a);
        assert!(models.ri.b < models.pf.b);
        for m in models.pfplus.values() {
            assert!(models.ri.b < m.b);
        }
    }

    #[test]
    fn test_round_trip_toml() {
        let cfg = SimConfig::with_preset(PRESET_DYNAMIC).unwrap();
        let text = cfg.to_toml_string().unwrap();
        let back = SimConfig::from_toml_str(&text).unwrap();
        assert_eq!(back.models.preset.as_deref(), Some(PRESET_DYNAMIC));
        assert_eq!(back.segment.frames_per_segment, 30);
    }

    #[test]
    fn test_partial_toml_with_overrides() {
        let text = r#"
            [segment]
            eta = 0.5

            [models]
            preset = "stable-scene"
            ri = { a = 21.0, b = 2.5 }

            [predictors.bandwidth]
            kind = "harmonic-mean"
        "#;
        let cfg = SimConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.segment.eta, 0.5);
        let models = cfg.resolve_models().unwrap();
        assert_eq!(models.ri.a, 21.0);
        assert!(matches!(
            cfg.predictors.bandwidth,
            BandwidthPredictorChoice::HarmonicMean
        ));
    }

    #[test]
    fn test_bad_configs_rejected() {
        assert!(SimConfig::from_toml_str("[segment]\neta = 1.5\n").is_err());
        assert!(SimConfig::from_toml_str("[video]\nfps = -2.0\n").is_err());
        assert!(SimConfig::from_toml_str("[candidates]\nri_tiles = [0]\n").is_err());
        assert!(SimConfig::with_preset("no-such-preset").is_err());
        // Border candidate without a matching quality curve.
        assert!(SimConfig::from_toml_str("[candidates]\nborders_deg = [15]\n").is_err());
        // Unknown keys are config mistakes, not extensions.
        assert!(SimConfig::from_toml_str("[video]\nwidht_px = 4096\n").is_err());
    }

    #[test]
    fn test_variant_parsing() {
        assert_eq!(
            "proposed".parse::<SystemVariant>().unwrap(),
            SystemVariant::Proposed
        );
        assert_eq!("BM3".parse::<SystemVariant>().unwrap(), SystemVariant::Bm3);
        assert!("bm4".parse::<SystemVariant>().is_err());
        assert_eq!(SystemVariant::Simplified.name(), "simplified");
    }
}
