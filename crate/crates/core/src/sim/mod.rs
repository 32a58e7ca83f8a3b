//! Trace-driven session simulation: the push pipeline from encoder through
//! network and decoder to the display poll loop, with per-segment planning,
//! budget pacing, and display-side measurement feeding the next plan.
//!
//! Time is kept in integer ticks of 0.01 ms so event ordering is exact and
//! the poll cadence stays aligned with frame boundaries. Pipeline arithmetic
//! (transmission, decode chaining) runs in f64 milliseconds and is snapped to
//! ticks only for event scheduling, always rounding completions up so nothing
//! becomes visible early.

pub mod ledger;
pub mod measure;
mod plan;

pub use ledger::{
    charge_frame, rendered_view_quality, rendered_view_quality_over, spatial_discontinuity_db,
    ChargeOutcome, LedgerEntry, RegionCharge, TileLedger, ViewQuality,
};
pub use measure::{measure_display, DisplayMeasurement, SegmentAccumulator, SegmentStats};

use crate::allocator::{frame_bit_budget, segment_budget, BudgetState};
use crate::config::{BandwidthPredictorChoice, FovPredictorChoice, SimConfig, SystemVariant};
use crate::geometry::{tiles_covering_fov, ErpGrid, FovPose, HitRates, RegionLayout, TileId, Vec3};
use crate::predict::{
    BandwidthPredictor, FixedBandwidth, FovPredictor, HarmonicMeanBandwidth, HoldFov,
    OracleBandwidth, OracleFov, ReplayBandwidth, ReplayFov, RlsBandwidth, TruncatedLinearFov,
};
use crate::quality::QualityModelSet;
use crate::trace::{BandwidthTrace, FovTrace};
use crate::{Error, Result};
use plan::{SegmentPlanner, MIN_FRAME_BUDGET_BITS};
use serde::Serialize;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};
use std::rc::Rc;

/// Simulation clock resolution: ticks per millisecond.
pub const TICKS_PER_MS: f64 = 100.0;

/// Grace period after the last encoded frame during which the pipeline may
/// still drain and display. Keeps end-of-session frames from being counted
/// as lost; all statistics windows still close at the nominal duration.
const DRAIN_MS: f64 = 2000.0;

/// Interval of the throughput samples fed to the bandwidth predictor.
const THROUGHPUT_BIN_MS: f64 = 200.0;

fn ticks(ms: f64) -> u64 {
    (ms * TICKS_PER_MS).round() as u64
}

fn ticks_ceil(ms: f64) -> u64 {
    (ms * TICKS_PER_MS).ceil() as u64
}

fn ms_of(tick: u64) -> f64 {
    tick as f64 / TICKS_PER_MS
}

/// Why a frame never reached the screen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DropReason {
    /// Not dropped (displayed, or still in flight at session end).
    None,
    /// Skipped at encode time because the sender buffer was full.
    SenderOverflow,
    /// Decoded but older than the display deadline when it reached the
    /// front of the display buffer.
    Deadline,
}

#[derive(Debug, Clone, Serialize)]
pub struct FrameRecord {
    pub frame: u64,
    pub segment: u64,
    pub encode_start_ms: f64,
    pub horizon_frames: u32,
    pub border_deg: u32,
    pub ri_tiles: u32,
    /// Coding rate of the predicted-FoV region, bits per square degree.
    pub r_e: f64,
    /// Coding rate of the border and rotating regions.
    pub r_b: f64,
    pub budget_bits: f64,
    pub size_bits: f64,
    pub occupancy_at_encode: u32,
    pub send_start_ms: Option<f64>,
    pub departure_ms: Option<f64>,
    pub arrival_ms: Option<f64>,
    pub decode_end_ms: Option<f64>,
    pub display_ms: Option<f64>,
    pub delay_ms: Option<f64>,
    pub drop: DropReason,
    /// Viewport quality rendered from the receiver ledger at display time.
    pub displayed_quality_db: Option<f64>,
    pub hit: Option<HitRates>,
}

impl FrameRecord {
    pub(crate) fn new(frame: u64, segment: u64, encode_start_ms: f64, occupancy: u32) -> FrameRecord {
        FrameRecord {
            frame,
            segment,
            encode_start_ms,
            horizon_frames: 0,
            border_deg: 0,
            ri_tiles: 0,
            r_e: 0.0,
            r_b: 0.0,
            budget_bits: 0.0,
            size_bits: 0.0,
            occupancy_at_encode: occupancy,
            send_start_ms: None,
            departure_ms: None,
            arrival_ms: None,
            decode_end_ms: None,
            display_ms: None,
            delay_ms: None,
            drop: DropReason::None,
            displayed_quality_db: None,
            hit: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SegmentRecord {
    pub segment: u64,
    pub start_frame: u64,
    pub predicted_bits: f64,
    pub backlog_bits: f64,
    pub budget_bits: f64,
    pub border_deg: u32,
    pub ri_tiles: u32,
    pub r_e_nominal: f64,
    pub r_b_nominal: f64,
    pub expected_quality_db: f64,
    /// Delivery ratio carried into this segment's plan.
    pub gamma_in: f64,
    pub alpha_pf_in: f64,
    pub encoded: u32,
    pub displayed: u32,
}

/// One entry of the 30 Hz on-screen quality series.
#[derive(Debug, Clone, Serialize)]
pub struct QualitySample {
    pub t_ms: f64,
    pub shown_frame: u64,
    /// Whole frame intervals the shown frame has been repeated.
    pub repeat_lapse: u32,
    pub quality_db: f64,
    pub spatial_discontinuity_db: f64,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct DisplayEvent {
    pub t_ms: f64,
    pub frame: u64,
}

/// Frame bookkeeping identity: every slot is encoded or skipped, and every
/// encoded frame is displayed, deadline-dropped, or still in flight.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct Conservation {
    pub slots: u64,
    pub encoded: u64,
    pub sender_dropped: u64,
    pub deadline_dropped: u64,
    pub displayed: u64,
    pub in_flight: u64,
}

impl Conservation {
    pub fn balanced(&self) -> bool {
        self.slots == self.encoded + self.sender_dropped
            && self.encoded == self.displayed + self.deadline_dropped + self.in_flight
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SessionLog {
    pub variant: SystemVariant,
    pub duration_ms: f64,
    pub frame_interval_ms: f64,
    pub poll_interval_ms: f64,
    pub frames: Vec<FrameRecord>,
    pub segments: Vec<SegmentRecord>,
    pub quality: Vec<QualitySample>,
    pub displays: Vec<DisplayEvent>,
    pub first_display_ms: Option<f64>,
    /// Polls after the first display (within the nominal duration) at which
    /// more than a frame interval had passed without a new frame.
    pub freeze_polls: u64,
    pub polls_counted: u64,
    /// Lengths (in polls) of each maximal run of freeze polls.
    pub freeze_runs: Vec<u32>,
    pub conservation: Conservation,
}

const ORD_ENCODE: u8 = 0;
const ORD_DECODE: u8 = 2;
const ORD_POLL: u8 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EvKind {
    Encode(u64),
    Decode(u64),
    Poll,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct HeapItem {
    tick: u64,
    ord: u8,
    seq: u64,
    kind: EvKind,
}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // BinaryHeap is a max-heap; invert so the earliest event pops first.
        (other.tick, other.ord, other.seq).cmp(&(self.tick, self.ord, self.seq))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// A frame in the sender buffer. Departure times are infinite while the
/// bandwidth trace has run out.
struct QueueEntry {
    enqueue_tick: u64,
    departure_tick: u64,
    bits: f64,
    send_start_ms: f64,
}

/// Decoded payload waiting for its decode-done event.
struct Decoded {
    encode_start_tick: u64,
    updates: Vec<(u32, f64)>,
    layout: Rc<RegionLayout>,
    predicted_dir: Vec3,
}

/// A decoded frame in the display buffer, with the receiver-ledger snapshot
/// taken the moment its decode finished.
struct PendingDisplay {
    frame: u64,
    ready_tick: u64,
    encode_start_tick: u64,
    snapshot: TileLedger,
    layout: Rc<RegionLayout>,
    predicted_dir: Vec3,
}

struct Screen {
    frame: u64,
    snapshot: TileLedger,
    shown_tick: u64,
}

struct Session<'a> {
    grid: ErpGrid,
    models: QualityModelSet,
    fov: FovTrace,
    bw: &'a BandwidthTrace,
    planner: SegmentPlanner,
    fov_pred: Box<dyn FovPredictor>,
    bw_pred: Box<dyn BandwidthPredictor>,

    frames_total: u64,
    frames_per_segment: u32,
    frame_ms: f64,
    frame_ticks: u64,
    poll_ticks: u64,
    encode_ms: f64,
    decode_ms: f64,
    propagation_ms: f64,
    deadline_ticks: u64,
    end_tick: u64,
    drain_end_tick: u64,
    seg_ms: f64,
    eta: f64,
    gain_a: f64,
    decay_b: f64,
    capacity_frames: u32,
    initial_bw_mbps: f64,
    fov_h: f64,
    fov_v: f64,
    hit_samples: u32,

    heap: BinaryHeap<HeapItem>,
    seq: u64,
    send_queue: VecDeque<QueueEntry>,
    tx_log: Vec<(f64, f64)>,
    tx_cursor: usize,
    link_free_ms: f64,
    decoder_free_ms: f64,
    pending_decodes: BTreeMap<u64, Decoded>,
    display_buffer: VecDeque<PendingDisplay>,
    sender_ledger: TileLedger,
    receiver_ledger: TileLedger,
    current_screen: Option<Screen>,
    cover_cache: Option<(usize, Rc<Vec<TileId>>)>,

    bins_fed: u64,
    last_throughput_sample: f64,

    accumulators: Vec<SegmentAccumulator>,
    frames: Vec<FrameRecord>,
    segments: Vec<SegmentRecord>,
    quality: Vec<QualitySample>,
    displays: Vec<DisplayEvent>,
    first_display_tick: Option<u64>,
    last_display_tick: u64,
    freeze_polls: u64,
    polls_counted: u64,
    freeze_runs: Vec<u32>,
    open_freeze_run: u32,
}

fn build_fov_predictor(choice: &FovPredictorChoice, fov: &FovTrace) -> Result<Box<dyn FovPredictor>> {
    Ok(match choice {
        FovPredictorChoice::TruncatedLinear {
            window,
            residual_threshold_deg,
        } => Box::new(TruncatedLinearFov::new(*window, *residual_threshold_deg)),
        FovPredictorChoice::Hold => Box::<HoldFov>::default(),
        FovPredictorChoice::Oracle => Box::new(OracleFov::new(
            (0..fov.len()).map(|i| fov.dir(i)).collect(),
        )),
        FovPredictorChoice::Replay { path } => Box::new(ReplayFov::load_path(path)?),
    })
}

fn build_bw_predictor(
    choice: &BandwidthPredictorChoice,
    bw: &BandwidthTrace,
    n_segments: u64,
    seg_ms: f64,
) -> Result<Box<dyn BandwidthPredictor>> {
    Ok(match choice {
        BandwidthPredictorChoice::Rls {
            order,
            forgetting,
            initial_cov,
        } => Box::new(RlsBandwidth::new(*order, *forgetting, *initial_cov)),
        BandwidthPredictorChoice::HarmonicMean => Box::<HarmonicMeanBandwidth>::default(),
        BandwidthPredictorChoice::Fixed { mbps } => {
            Box::new(FixedBandwidth::new(mbps * 1e6 * seg_ms / 1000.0))
        }
        BandwidthPredictorChoice::Oracle => {
            let per_segment = (0..n_segments)
                .map(|s| bw.bits_between(s as f64 * seg_ms, (s + 1) as f64 * seg_ms))
                .collect();
            Box::new(OracleBandwidth::from_bits_per_segment(per_segment))
        }
        BandwidthPredictorChoice::Replay { path } => Box::new(ReplayBandwidth::load_path(path)?),
    })
}

/// Simulate one session of `duration_ms` of the given variant against the
/// FoV and bandwidth traces. Deterministic: identical inputs give identical
/// logs.
pub fn run_simulation(
    cfg: &SimConfig,
    variant: SystemVariant,
    fov_trace: &FovTrace,
    bw_trace: &BandwidthTrace,
    duration_ms: f64,
) -> Result<SessionLog> {
    cfg.validate()?;
    if !(duration_ms > 0.0) || !duration_ms.is_finite() {
        return Err(Error::invalid(format!("bad session duration {}", duration_ms)));
    }
    let grid = ErpGrid::new(cfg.video.width_px, cfg.video.height_px, cfg.video.tile_px)?;
    let frame_ms = 1000.0 / cfg.video.fps;
    let frame_ticks = ticks(frame_ms);
    let polls = cfg.timing.polls_per_frame as u64;
    if frame_ticks % polls != 0 {
        return Err(Error::Config(format!(
            "{} polls per frame do not divide the {}-tick frame interval",
            polls, frame_ticks
        )));
    }
    let frames_total = (duration_ms / frame_ms + 1e-9).floor() as u64;
    if frames_total == 0 {
        return Err(Error::invalid("session shorter than one frame"));
    }
    let fov = fov_trace.resampled(cfg.video.fps)?;
    if (fov.len() as u64) < frames_total {
        return Err(Error::invalid(format!(
            "FoV trace covers {} frames at {} fps but the session needs {}",
            fov.len(),
            cfg.video.fps,
            frames_total
        )));
    }
    let n = cfg.segment.frames_per_segment;
    let n_segments = frames_total.div_ceil(n as u64);
    let seg_ms = n as f64 * frame_ms;
    let end_tick = frames_total * frame_ticks;

    let session = Session {
        grid,
        models: cfg.resolve_models()?,
        fov_pred: build_fov_predictor(&cfg.predictors.fov, &fov)?,
        bw_pred: build_bw_predictor(&cfg.predictors.bandwidth, bw_trace, n_segments, seg_ms)?,
        fov,
        bw: bw_trace,
        planner: SegmentPlanner::new(cfg, variant, grid)?,
        frames_total,
        frames_per_segment: n,
        frame_ms,
        frame_ticks,
        poll_ticks: frame_ticks / polls,
        encode_ms: cfg.timing.encode_ms,
        decode_ms: cfg.timing.decode_ms,
        propagation_ms: cfg.timing.propagation_ms,
        deadline_ticks: cfg.buffers.max_display_delay_frames as u64 * frame_ticks,
        end_tick,
        drain_end_tick: end_tick + ticks(DRAIN_MS),
        seg_ms,
        eta: cfg.segment.eta,
        gain_a: cfg.segment.frame_gain_a,
        decay_b: cfg.segment.frame_decay_b,
        capacity_frames: cfg.buffers.sender_capacity_frames,
        initial_bw_mbps: cfg.planner.initial_bandwidth_mbps,
        fov_h: cfg.fov.h_deg,
        fov_v: cfg.fov.v_deg,
        hit_samples: cfg.simulation.hit_samples_per_axis,
        heap: BinaryHeap::new(),
        seq: 0,
        send_queue: VecDeque::new(),
        tx_log: Vec::new(),
        tx_cursor: 0,
        link_free_ms: 0.0,
        decoder_free_ms: 0.0,
        pending_decodes: BTreeMap::new(),
        display_buffer: VecDeque::new(),
        sender_ledger: TileLedger::new(&grid),
        receiver_ledger: TileLedger::new(&grid),
        current_screen: None,
        cover_cache: None,
        bins_fed: 0,
        last_throughput_sample: cfg.planner.initial_bandwidth_mbps * 1e6 * THROUGHPUT_BIN_MS
            / 1000.0,
        accumulators: vec![SegmentAccumulator::default(); n_segments as usize],
        frames: Vec::with_capacity(frames_total as usize),
        segments: Vec::with_capacity(n_segments as usize),
        quality: Vec::new(),
        displays: Vec::new(),
        first_display_tick: None,
        last_display_tick: 0,
        freeze_polls: 0,
        polls_counted: 0,
        freeze_runs: Vec::new(),
        open_freeze_run: 0,
    };
    session.run(variant)
}

impl<'a> Session<'a> {
    fn push_event(&mut self, tick: u64, ord: u8, kind: EvKind) {
        self.seq += 1;
        self.heap.push(HeapItem {
            tick,
            ord,
            seq: self.seq,
            kind,
        });
    }

    fn run(mut self, variant: SystemVariant) -> Result<SessionLog> {
        self.push_event(0, ORD_ENCODE, EvKind::Encode(0));
        self.push_event(0, ORD_POLL, EvKind::Poll);
        while let Some(item) = self.heap.pop() {
            if item.tick > self.drain_end_tick {
                break;
            }
            match item.kind {
                EvKind::Encode(n) => {
                    self.encode_frame(n, item.tick)?;
                    if n + 1 < self.frames_total {
                        self.push_event(
                            (n + 1) * self.frame_ticks,
                            ORD_ENCODE,
                            EvKind::Encode(n + 1),
                        );
                    }
                }
                EvKind::Decode(f) => self.decode_done(f, item.tick),
                EvKind::Poll => {
                    self.poll(item.tick)?;
                    let next = item.tick + self.poll_ticks;
                    if next <= self.drain_end_tick {
                        self.push_event(next, ORD_POLL, EvKind::Poll);
                    }
                }
            }
        }
        self.finalize(variant)
    }

    fn pose_index(&self, tick: u64) -> usize {
        ((tick / self.frame_ticks) as usize).min(self.fov.len() - 1)
    }

    fn pose_at(&self, tick: u64) -> FovPose {
        FovPose::new(self.fov.dir(self.pose_index(tick)), self.fov_h, self.fov_v)
    }

    /// Covering tile set of the actual viewport, cached per frame interval
    /// (the pose only changes at frame boundaries).
    fn cover_at(&mut self, tick: u64) -> Result<Rc<Vec<TileId>>> {
        let idx = self.pose_index(tick);
        if let Some((i, c)) = &self.cover_cache {
            if *i == idx {
                return Ok(c.clone());
            }
        }
        let pose = self.pose_at(tick);
        let cover: Vec<TileId> = tiles_covering_fov(&pose, &self.grid)?.into_iter().collect();
        let rc = Rc::new(cover);
        self.cover_cache = Some((idx, rc.clone()));
        Ok(rc)
    }

    /// Drop departed frames off the queue front.
    fn sweep_queue(&mut self, tick: u64) {
        while let Some(front) = self.send_queue.front() {
            if front.departure_tick <= tick {
                self.send_queue.pop_front();
            } else {
                break;
            }
        }
    }

    fn occupancy(&mut self, tick: u64) -> u32 {
        self.sweep_queue(tick);
        self.send_queue
            .iter()
            .filter(|e| e.enqueue_tick <= tick)
            .count() as u32
    }

    /// Bits still sitting in the sender buffer (partial front frame included).
    fn backlog_bits(&mut self, tick: u64) -> f64 {
        self.sweep_queue(tick);
        let t = ms_of(tick);
        let mut total = 0.0;
        for e in &self.send_queue {
            if e.enqueue_tick > tick {
                break;
            }
            if e.send_start_ms < t {
                let sent = self.bw.bits_between(e.send_start_ms, t);
                total += (e.bits - sent).max(0.0);
            } else {
                total += e.bits;
            }
        }
        total
    }

    /// Feed every complete 200 ms bin up to `now` into the bandwidth
    /// predictor. Samples are busy-time normalized: delivered bits over
    /// transmission time, scaled to the bin length. Raw per-bin arrivals
    /// would measure our own utilization rather than the link, and a budget
    /// built on its own past spending collapses; normalizing by busy time
    /// recovers the capacity whenever anything was on the wire. Idle bins
    /// repeat the previous estimate.
    fn feed_throughput(&mut self, now_tick: u64) {
        let bin_ticks = ticks(THROUGHPUT_BIN_MS);
        while (self.bins_fed + 1) * bin_ticks <= now_tick {
            let t0 = ms_of(self.bins_fed * bin_ticks);
            let t1 = ms_of((self.bins_fed + 1) * bin_ticks);
            while let Some(&(_, d)) = self.tx_log.get(self.tx_cursor) {
                if d <= t0 {
                    self.tx_cursor += 1;
                } else {
                    break;
                }
            }
            let mut busy = 0.0;
            let mut bits = 0.0;
            for &(s, d) in &self.tx_log[self.tx_cursor..] {
                if s >= t1 {
                    break;
                }
                let a = s.max(t0);
                let b = d.min(t1);
                if b > a {
                    busy += b - a;
                    bits += self.bw.bits_between(a, b);
                }
            }
            if busy > 1e-9 {
                self.last_throughput_sample = bits / busy * THROUGHPUT_BIN_MS;
            }
            let sample = self.last_throughput_sample;
            self.bw_pred.observe_sample(sample);
            self.bins_fed += 1;
        }
    }

    /// Pipeline delay estimate, in whole frames: the prediction horizon.
    fn horizon_frames(&mut self, tick: u64) -> u32 {
        let backlog = self.backlog_bits(tick);
        let rate = self.last_throughput_sample / THROUGHPUT_BIN_MS;
        let queue_ms = if rate > 1e-9 { backlog / rate } else { 0.0 };
        let total = self.encode_ms + self.propagation_ms + self.decode_ms + queue_ms;
        ((total / self.frame_ms).ceil() as u32).clamp(1, 30)
    }

    fn begin_segment(&mut self, seg: u64, tick: u64) -> Result<()> {
        self.feed_throughput(tick);
        let predicted_bits = if seg == 0 {
            self.initial_bw_mbps * 1e6 * self.seg_ms / 1000.0
        } else {
            self.bw_pred.predict_segment_bits(seg)?
        };
        let backlog = self.backlog_bits(tick);
        let budget = segment_budget(predicted_bits, backlog, self.eta)?;
        // Stats lag two segments: the previous segment's tail frames are
        // still in flight at this boundary, and counting them as misses
        // would bias the delivery ratio every healthy segment.
        let stats = if seg < 2 {
            None
        } else {
            Some(self.accumulators[(seg - 2) as usize].stats())
        };
        let digest = self.planner.begin_segment(budget, stats.as_ref())?;
        self.segments.push(SegmentRecord {
            segment: seg,
            start_frame: seg * self.frames_per_segment as u64,
            predicted_bits,
            backlog_bits: backlog,
            budget_bits: digest.budget_bits,
            border_deg: digest.border_deg,
            ri_tiles: digest.ri_tiles,
            r_e_nominal: digest.r_e_nominal,
            r_b_nominal: digest.r_b_nominal,
            expected_quality_db: digest.expected_quality_db,
            gamma_in: digest.gamma,
            alpha_pf_in: digest.alpha_pf,
            encoded: 0,
            displayed: 0,
        });
        Ok(())
    }

    fn encode_frame(&mut self, n: u64, tick: u64) -> Result<()> {
        let seg = n / self.frames_per_segment as u64;
        let in_seg = (n % self.frames_per_segment as u64) as u32;
        if in_seg == 0 {
            self.begin_segment(seg, tick)?;
        }
        self.fov_pred.observe(n, self.fov.dir(n as usize));

        let occupancy = self.occupancy(tick);
        let mut rec = FrameRecord::new(n, seg, ms_of(tick), occupancy);
        let state = BudgetState {
            segment_bits: self.planner.segment_bits,
            spent_bits: self.planner.spent_bits,
            frame_in_segment: in_seg,
            frames_per_segment: self.frames_per_segment,
            occupancy_frames: occupancy,
            capacity_frames: self.capacity_frames,
        };
        let Some(granted) = frame_bit_budget(&state, self.gain_a, self.decay_b)? else {
            rec.drop = DropReason::SenderOverflow;
            self.frames.push(rec);
            return Ok(());
        };
        let granted = granted.max(MIN_FRAME_BUDGET_BITS);

        let horizon = self.horizon_frames(tick);
        let predictions = self.fov_pred.predict(horizon)?;
        let predicted = predictions[horizon as usize - 1];

        let spec = self
            .planner
            .frame_spec(n, in_seg, granted, predicted)?;
        let charges = [
            RegionCharge {
                tiles: &spec.layout.pf,
                rate: spec.pf_rate,
                curve: spec.pf_curve,
                inter: spec.pf_inter,
            },
            RegionCharge {
                tiles: &spec.layout.pfplus,
                rate: spec.pfplus_rate,
                curve: spec.pfplus_curve,
                inter: spec.pfplus_inter,
            },
            RegionCharge {
                tiles: &spec.layout.ri,
                rate: spec.ri_rate,
                curve: spec.ri_curve,
                inter: false,
            },
        ];
        let outcome = charge_frame(
            &charges,
            n,
            &self.grid,
            &self.models.rate_increase,
            &mut self.sender_ledger,
        )?;
        for (charge, lapses) in charges.iter().zip(&outcome.lapses) {
            if charge.inter {
                self.accumulators[seg as usize]
                    .lapse_samples
                    .extend_from_slice(lapses);
            }
        }
        self.planner.spent_bits += outcome.total_bits;
        self.accumulators[seg as usize].encoded += 1;

        rec.horizon_frames = horizon;
        rec.border_deg = spec.border_deg;
        rec.ri_tiles = spec.ri_tiles;
        rec.r_e = spec.r_e;
        rec.r_b = spec.r_b;
        rec.budget_bits = granted;
        rec.size_bits = outcome.total_bits;

        let encode_end_ms = ms_of(tick) + self.encode_ms;
        let enqueue_tick = tick + ticks(self.encode_ms);
        let send_start_ms = encode_end_ms.max(self.link_free_ms);
        if send_start_ms.is_finite() {
            match self.bw.advance(send_start_ms, outcome.total_bits) {
                Ok(departure_ms) => {
                    self.link_free_ms = departure_ms;
                    let arrival_ms = departure_ms + self.propagation_ms;
                    let decode_start = arrival_ms.max(self.decoder_free_ms);
                    let decode_end = decode_start + self.decode_ms;
                    self.decoder_free_ms = decode_end;
                    self.send_queue.push_back(QueueEntry {
                        enqueue_tick,
                        departure_tick: ticks_ceil(departure_ms),
                        bits: outcome.total_bits,
                        send_start_ms,
                    });
                    self.tx_log.push((send_start_ms, departure_ms));
                    rec.send_start_ms = Some(send_start_ms);
                    rec.departure_ms = Some(departure_ms);
                    rec.arrival_ms = Some(arrival_ms);
                    rec.decode_end_ms = Some(decode_end);
                    self.pending_decodes.insert(
                        n,
                        Decoded {
                            encode_start_tick: tick,
                            updates: outcome.updates,
                            layout: Rc::new(spec.layout),
                            predicted_dir: predicted,
                        },
                    );
                    self.push_event(ticks_ceil(decode_end), ORD_DECODE, EvKind::Decode(n));
                }
                Err(_) => {
                    // The trace ran dry mid-transfer: this frame and every
                    // later one stay in flight.
                    self.link_free_ms = f64::INFINITY;
                    self.send_queue.push_back(QueueEntry {
                        enqueue_tick,
                        departure_tick: u64::MAX,
                        bits: outcome.total_bits,
                        send_start_ms,
                    });
                    self.tx_log.push((send_start_ms, f64::INFINITY));
                    rec.send_start_ms = Some(send_start_ms);
                }
            }
        } else {
            self.send_queue.push_back(QueueEntry {
                enqueue_tick,
                departure_tick: u64::MAX,
                bits: outcome.total_bits,
                send_start_ms: f64::INFINITY,
            });
        }
        self.frames.push(rec);
        Ok(())
    }

    fn decode_done(&mut self, frame: u64, tick: u64) {
        let Some(d) = self.pending_decodes.remove(&frame) else {
            debug_assert!(false, "decode event without payload");
            return;
        };
        for &(raster, q) in &d.updates {
            self.receiver_ledger.update(raster, frame, q);
        }
        self.display_buffer.push_back(PendingDisplay {
            frame,
            ready_tick: tick,
            encode_start_tick: d.encode_start_tick,
            snapshot: self.receiver_ledger.clone(),
            layout: d.layout,
            predicted_dir: d.predicted_dir,
        });
    }

    fn poll(&mut self, tick: u64) -> Result<()> {
        let counting = tick <= self.end_tick;
        let mut displayed = false;
        loop {
            let Some(front) = self.display_buffer.front() else {
                break;
            };
            if front.ready_tick > tick {
                break;
            }
            if tick - front.encode_start_tick > self.deadline_ticks {
                let e = self.display_buffer.pop_front().unwrap();
                self.frames[e.frame as usize].drop = DropReason::Deadline;
                continue;
            }
            let entry = self.display_buffer.pop_front().unwrap();
            self.display(entry, tick)?;
            displayed = true;
            break;
        }
        if counting && self.first_display_tick.is_some() {
            self.polls_counted += 1;
            if !displayed && tick - self.last_display_tick > self.frame_ticks {
                self.freeze_polls += 1;
                self.open_freeze_run += 1;
            }
        }
        if counting {
            if let Some(first) = self.first_display_tick {
                if (tick - first) % self.frame_ticks == 0 {
                    self.sample_quality(tick)?;
                }
            }
        }
        Ok(())
    }

    fn sample_quality(&mut self, tick: u64) -> Result<()> {
        let cover = self.cover_at(tick)?;
        let Some(screen) = &self.current_screen else {
            return Ok(());
        };
        let extra = ((tick - screen.shown_tick) / self.frame_ticks) as u32;
        let view = rendered_view_quality_over(
            &cover,
            screen.frame,
            extra,
            &screen.snapshot,
            &self.grid,
            &self.models.quality_decay,
        );
        let spatial = spatial_discontinuity_db(&view.tiles, &self.grid);
        self.quality.push(QualitySample {
            t_ms: ms_of(tick),
            shown_frame: screen.frame,
            repeat_lapse: extra,
            quality_db: view.mean_db,
            spatial_discontinuity_db: spatial,
        });
        Ok(())
    }

    fn display(&mut self, entry: PendingDisplay, tick: u64) -> Result<()> {
        let pose = self.pose_at(tick);
        let m = measure_display(
            &pose,
            entry.predicted_dir,
            &entry.layout,
            entry.frame,
            &self.grid,
            self.planner.measured_borders(),
            self.planner.measured_ri(),
            self.hit_samples,
        )?;
        let cover = self.cover_at(tick)?;
        let view = rendered_view_quality_over(
            &cover,
            entry.frame,
            0,
            &entry.snapshot,
            &self.grid,
            &self.models.quality_decay,
        );
        let seg = (entry.frame / self.frames_per_segment as u64) as usize;
        self.accumulators[seg].add_display(&m);
        let rec = &mut self.frames[entry.frame as usize];
        rec.display_ms = Some(ms_of(tick));
        rec.delay_ms = Some(ms_of(tick - entry.encode_start_tick));
        rec.displayed_quality_db = Some(view.mean_db);
        rec.hit = Some(m.hit);
        self.displays.push(DisplayEvent {
            t_ms: ms_of(tick),
            frame: entry.frame,
        });
        if self.open_freeze_run > 0 {
            self.freeze_runs.push(self.open_freeze_run);
            self.open_freeze_run = 0;
        }
        self.last_display_tick = tick;
        if self.first_display_tick.is_none() {
            self.first_display_tick = Some(tick);
        }
        self.current_screen = Some(Screen {
            frame: entry.frame,
            snapshot: entry.snapshot,
            shown_tick: tick,
        });
        Ok(())
    }

    fn finalize(mut self, variant: SystemVariant) -> Result<SessionLog> {
        if self.open_freeze_run > 0 {
            self.freeze_runs.push(self.open_freeze_run);
        }
        let mut conservation = Conservation {
            slots: self.frames_total,
            ..Conservation::default()
        };
        for rec in &self.frames {
            match rec.drop {
                DropReason::SenderOverflow => conservation.sender_dropped += 1,
                DropReason::Deadline => {
                    conservation.encoded += 1;
                    conservation.deadline_dropped += 1;
                }
                DropReason::None => {
                    conservation.encoded += 1;
                    if rec.display_ms.is_some() {
                        conservation.displayed += 1;
                    } else {
                        conservation.in_flight += 1;
                    }
                }
            }
        }
        debug_assert!(conservation.balanced());
        for (i, seg) in self.segments.iter_mut().enumerate() {
            seg.encoded = self.accumulators[i].encoded;
            seg.displayed = self.accumulators[i].displays;
        }
        Ok(SessionLog {
            variant,
            duration_ms: self.frames_total as f64 * self.frame_ms,
            frame_interval_ms: self.frame_ms,
            poll_interval_ms: ms_of(self.poll_ticks),
            frames: self.frames,
            segments: self.segments,
            quality: self.quality,
            displays: self.displays,
            first_display_ms: self.first_display_tick.map(ms_of),
            freeze_polls: self.freeze_polls,
            polls_counted: self.polls_counted,
            freeze_runs: self.freeze_runs,
            conservation,
        })
    }
}
