//! Session metrics: turns a raw simulation log into the numbers a study
//! compares across systems, plus JSON and CSV serialization for reports,
//! per-frame logs, and plot series.

use crate::config::SystemVariant;
use crate::sim::{DropReason, SessionLog};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

pub const METRICS_SCHEMA_VERSION: u32 = 1;

/// Aggregated quality-of-experience metrics for one session, or the
/// unweighted mean over several sessions of the same variant.
///
/// Counts are stored as floats so multi-trace aggregation stays a plain
/// field-wise mean. Percentages are 0 to 100. Divisions guard against empty
/// denominators: a metric whose inputs never occurred reports 0, never NaN,
/// so serialized reports stay schema-stable.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema_version: u32,
    pub variant: String,
    /// Sessions averaged into this report.
    pub traces: u32,
    pub duration_ms: f64,
    pub frames_total: f64,
    pub frames_displayed: f64,
    pub delivered_pct: f64,
    pub sender_dropped_pct: f64,
    pub deadline_dropped_pct: f64,
    /// Mean encoded bitrate over the session.
    pub sent_mbps: f64,
    /// Mean of the 30 Hz on-screen viewport quality series.
    pub ws_psnr_in_fov_db: f64,
    /// Mean absolute quality step between consecutive on-screen samples.
    pub temporal_discontinuity_db: f64,
    /// Mean absolute quality step across adjacent visible tile borders.
    pub spatial_discontinuity_db: f64,
    /// Encode start to display, averaged over displayed frames.
    pub avg_frame_delay_ms: f64,
    pub frame_delay_std_ms: f64,
    /// Coefficient of variation of frame delay.
    pub delay_std_over_mean: f64,
    /// Share of display polls (after startup) that showed a stale frame.
    pub freeze_frame_pct: f64,
    pub avg_freeze_duration_ms: f64,
    pub display_interval_mean_ms: f64,
    pub display_interval_std_ms: f64,
    pub hit_pf_pct: f64,
    pub hit_pfplus_pct: f64,
    pub hit_ri_pct: f64,
    /// Share of the watched viewport covered by any coded region.
    pub hit_total_pct: f64,
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
}

fn pct(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den * 100.0
    } else {
        0.0
    }
}

pub fn compute_metrics(log: &SessionLog) -> MetricsReport {
    let qualities: Vec<f64> = log.quality.iter().map(|q| q.quality_db).collect();
    let temporal: Vec<f64> = qualities
        .windows(2)
        .map(|w| (w[1] - w[0]).abs())
        .collect();
    let spatial: Vec<f64> = log
        .quality
        .iter()
        .map(|q| q.spatial_discontinuity_db)
        .collect();
    let delays: Vec<f64> = log.frames.iter().filter_map(|f| f.delay_ms).collect();
    let delay_mean = mean(&delays);
    let delay_std = std_dev(&delays);
    let intervals: Vec<f64> = log
        .displays
        .windows(2)
        .map(|w| w[1].t_ms - w[0].t_ms)
        .collect();
    let hits: Vec<_> = log.frames.iter().filter_map(|f| f.hit.as_ref()).collect();
    let hit_mean = |f: &dyn Fn(&crate::geometry::HitRates) -> f64| -> f64 {
        if hits.is_empty() {
            0.0
        } else {
            hits.iter().map(|h| f(h)).sum::<f64>() / hits.len() as f64 * 100.0
        }
    };
    let sent_bits: f64 = log.frames.iter().map(|f| f.size_bits).sum();
    let c = &log.conservation;
    let slots = c.slots as f64;

    MetricsReport {
        schema_version: METRICS_SCHEMA_VERSION,
        variant: log.variant.name().to_string(),
        traces: 1,
        duration_ms: log.duration_ms,
        frames_total: slots,
        frames_displayed: c.displayed as f64,
        delivered_pct: pct(c.displayed as f64, slots),
        sender_dropped_pct: pct(c.sender_dropped as f64, slots),
        deadline_dropped_pct: pct(c.deadline_dropped as f64, slots),
        sent_mbps: if log.duration_ms > 0.0 {
            sent_bits / log.duration_ms * 1000.0 / 1e6
        } else {
            0.0
        },
        ws_psnr_in_fov_db: mean(&qualities),
        temporal_discontinuity_db: mean(&temporal),
        spatial_discontinuity_db: mean(&spatial),
        avg_frame_delay_ms: delay_mean,
        frame_delay_std_ms: delay_std,
        delay_std_over_mean: if delay_mean > 0.0 {
            delay_std / delay_mean
        } else {
            0.0
        },
        freeze_frame_pct: pct(log.freeze_polls as f64, log.polls_counted as f64),
        avg_freeze_duration_ms: if log.freeze_runs.is_empty() {
            0.0
        } else {
            mean(
                &log.freeze_runs
                    .iter()
                    .map(|&r| r as f64)
                    .collect::<Vec<_>>(),
            ) * log.poll_interval_ms
        },
        display_interval_mean_ms: mean(&intervals),
        display_interval_std_ms: std_dev(&intervals),
        hit_pf_pct: hit_mean(&|h| h.pf),
        hit_pfplus_pct: hit_mean(&|h| h.pfplus),
        hit_ri_pct: hit_mean(&|h| h.ri),
        hit_total_pct: hit_mean(&|h| h.total()),
    }
}

/// Unweighted mean over sessions. All reports must describe the same
/// variant; the result counts the totals in `traces`.
pub fn aggregate(reports: &[MetricsReport]) -> Result<MetricsReport> {
    let first = reports
        .first()
        .ok_or_else(|| Error::invalid("nothing to aggregate"))?;
    if reports.iter().any(|r| r.variant != first.variant) {
        return Err(Error::invalid("cannot aggregate across variants"));
    }
    let n = reports.len() as f64;
    let avg = |f: &dyn Fn(&MetricsReport) -> f64| reports.iter().map(|r| f(r)).sum::<f64>() / n;
    Ok(MetricsReport {
        schema_version: METRICS_SCHEMA_VERSION,
        variant: first.variant.clone(),
        traces: reports.iter().map(|r| r.traces).sum(),
        duration_ms: avg(&|r| r.duration_ms),
        frames_total: avg(&|r| r.frames_total),
        frames_displayed: avg(&|r| r.frames_displayed),
        delivered_pct: avg(&|r| r.delivered_pct),
        sender_dropped_pct: avg(&|r| r.sender_dropped_pct),
        deadline_dropped_pct: avg(&|r| r.deadline_dropped_pct),
        sent_mbps: avg(&|r| r.sent_mbps),
        ws_psnr_in_fov_db: avg(&|r| r.ws_psnr_in_fov_db),
        temporal_discontinuity_db: avg(&|r| r.temporal_discontinuity_db),
        spatial_discontinuity_db: avg(&|r| r.spatial_discontinuity_db),
        avg_frame_delay_ms: avg(&|r| r.avg_frame_delay_ms),
        frame_delay_std_ms: avg(&|r| r.frame_delay_std_ms),
        delay_std_over_mean: avg(&|r| r.delay_std_over_mean),
        freeze_frame_pct: avg(&|r| r.freeze_frame_pct),
        avg_freeze_duration_ms: avg(&|r| r.avg_freeze_duration_ms),
        display_interval_mean_ms: avg(&|r| r.display_interval_mean_ms),
        display_interval_std_ms: avg(&|r| r.display_interval_std_ms),
        hit_pf_pct: avg(&|r| r.hit_pf_pct),
        hit_pfplus_pct: avg(&|r| r.hit_pfplus_pct),
        hit_ri_pct: avg(&|r| r.hit_ri_pct),
        hit_total_pct: avg(&|r| r.hit_total_pct),
    })
}

pub fn report_json(report: &MetricsReport) -> Result<String> {
    serde_json::to_string_pretty(report).map_err(|e| Error::invalid(e.to_string()))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{:.4}", x)).unwrap_or_default()
}

fn drop_name(d: DropReason) -> &'static str {
    match d {
        DropReason::None => "",
        DropReason::SenderOverflow => "sender-overflow",
        DropReason::Deadline => "deadline",
    }
}

/// Per-frame log as CSV, one row per frame slot.
pub fn frames_csv(log: &SessionLog) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "frame",
        "segment",
        "encode_start_ms",
        "horizon_frames",
        "border_deg",
        "ri_tiles",
        "r_e",
        "r_b",
        "budget_bits",
        "size_bits",
        "occupancy",
        "send_start_ms",
        "departure_ms",
        "arrival_ms",
        "decode_end_ms",
        "display_ms",
        "delay_ms",
        "drop",
        "displayed_quality_db",
        "hit_total",
    ])
    .map_err(|e| Error::invalid(e.to_string()))?;
    for f in &log.frames {
        w.write_record([
            f.frame.to_string(),
            f.segment.to_string(),
            format!("{:.2}", f.encode_start_ms),
            f.horizon_frames.to_string(),
            f.border_deg.to_string(),
            f.ri_tiles.to_string(),
            format!("{:.6}", f.r_e),
            format!("{:.6}", f.r_b),
            format!("{:.1}", f.budget_bits),
            format!("{:.1}", f.size_bits),
            f.occupancy_at_encode.to_string(),
            opt(f.send_start_ms),
            opt(f.departure_ms),
            opt(f.arrival_ms),
            opt(f.decode_end_ms),
            opt(f.display_ms),
            opt(f.delay_ms),
            drop_name(f.drop).to_string(),
            opt(f.displayed_quality_db),
            opt(f.hit.as_ref().map(|h| h.total())),
        ])
        .map_err(|e| Error::invalid(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::invalid(e.to_string()))
}

/// The on-screen quality series as CSV, for plotting.
pub fn quality_csv(log: &SessionLog) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "t_ms",
        "shown_frame",
        "repeat_lapse",
        "quality_db",
        "spatial_discontinuity_db",
    ])
    .map_err(|e| Error::invalid(e.to_string()))?;
    for q in &log.quality {
        w.write_record([
            format!("{:.2}", q.t_ms),
            q.shown_frame.to_string(),
            q.repeat_lapse.to_string(),
            format!("{:.4}", q.quality_db),
            format!("{:.4}", q.spatial_discontinuity_db),
        ])
        .map_err(|e| Error::invalid(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::invalid(e.to_string()))
}

/// One row per labeled report, for sweep summaries.
pub fn summary_csv<'a, I>(rows: I) -> Result<String>
where
    I: IntoIterator<Item = (&'a str, &'a MetricsReport)>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "label",
        "variant",
        "traces",
        "ws_psnr_in_fov_db",
        "temporal_discontinuity_db",
        "spatial_discontinuity_db",
        "avg_frame_delay_ms",
        "delay_std_over_mean",
        "freeze_frame_pct",
        "avg_freeze_duration_ms",
        "display_interval_mean_ms",
        "display_interval_std_ms",
        "hit_total_pct",
        "delivered_pct",
        "sent_mbps",
    ])
    .map_err(|e| Error::invalid(e.to_string()))?;
    for (label, r) in rows {
        w.write_record([
            label.to_string(),
            r.variant.clone(),
            r.traces.to_string(),
            format!("{:.4}", r.ws_psnr_in_fov_db),
            format!("{:.4}", r.temporal_discontinuity_db),
            format!("{:.4}", r.spatial_discontinuity_db),
            format!("{:.3}", r.avg_frame_delay_ms),
            format!("{:.4}", r.delay_std_over_mean),
            format!("{:.3}", r.freeze_frame_pct),
            format!("{:.2}", r.avg_freeze_duration_ms),
            format!("{:.3}", r.display_interval_mean_ms),
            format!("{:.3}", r.display_interval_std_ms),
            format!("{:.3}", r.hit_total_pct),
            format!("{:.3}", r.delivered_pct),
            format!("{:.3}", r.sent_mbps),
        ])
        .map_err(|e| Error::invalid(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::invalid(e.to_string()))
}

/// Returns the variant whose report wins each headline metric, for quick
/// console summaries: (best quality, lowest delay, lowest freeze).
pub fn headline_winners<'a>(
    reports: &'a [MetricsReport],
) -> Option<(&'a str, &'a str, &'a str)> {
    if reports.is_empty() {
        return None;
    }
    let best = |f: &dyn Fn(&MetricsReport) -> f64, invert: bool| -> &'a str {
        let mut idx = 0;
        for (i, r) in reports.iter().enumerate() {
            let better = if invert {
                f(r) < f(&reports[idx])
            } else {
                f(r) > f(&reports[idx])
            };
            if better {
                idx = i;
            }
        }
        &reports[idx].variant
    };
    Some((
        best(&|r| r.ws_psnr_in_fov_db, false),
        best(&|r| r.avg_frame_delay_ms, true),
        best(&|r| r.freeze_frame_pct, true),
    ))
}

pub fn variant_label(v: SystemVariant) -> &'static str {
    v.name()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{
        Conservation, DisplayEvent, FrameRecord, QualitySample, SessionLog,
    };

    fn sample_log() -> SessionLog {
        let mk_frame = |n: u64, delay: Option<f64>, drop: DropReason| {
            let mut f = FrameRecord::new(n, 0, n as f64 * 33.33, 0);
            f.delay_ms = delay;
            f.display_ms = delay.map(|d| n as f64 * 33.33 + d);
            f.size_bits = 1.0e6;
            f.drop = drop;
            f
        };
        SessionLog {
            variant: SystemVariant::Proposed,
            duration_ms: 100.0,
            frame_interval_ms: 33.33,
            poll_interval_ms: 11.11,
            frames: vec![
                mk_frame(0, Some(60.0), DropReason::None),
                mk_frame(1, Some(70.0), DropReason::None),
                mk_frame(2, None, DropReason::SenderOverflow),
            ],
            segments: vec![],
            quality: vec![
                QualitySample {
                    t_ms: 60.0,
                    shown_frame: 0,
                    repeat_lapse: 0,
                    quality_db: 30.0,
                    spatial_discontinuity_db: 1.0,
                },
                QualitySample {
                    t_ms: 93.33,
                    shown_frame: 1,
                    repeat_lapse: 0,
                    quality_db: 32.0,
                    spatial_discontinuity_db: 3.0,
                },
                QualitySample {
                    t_ms: 126.66,
                    shown_frame: 1,
                    repeat_lapse: 1,
                    quality_db: 31.0,
                    spatial_discontinuity_db: 2.0,
                },
            ],
            displays: vec![
                DisplayEvent { t_ms: 60.0, frame: 0 },
                DisplayEvent { t_ms: 93.33, frame: 1 },
            ],
            first_display_ms: Some(60.0),
            freeze_polls: 2,
            polls_counted: 8,
            freeze_runs: vec![2],
            conservation: Conservation {
                slots: 3,
                encoded: 2,
                sender_dropped: 1,
                deadline_dropped: 0,
                displayed: 2,
                in_flight: 0,
            },
        }
    }

    #[test]
    fn test_session_metrics_by_hand() {
        let m = compute_metrics(&sample_log());
        assert_eq!(m.schema_version, METRICS_SCHEMA_VERSION);
        assert_eq!(m.variant, "proposed");
        assert!((m.ws_psnr_in_fov_db - 31.0).abs() < 1e-12);
        assert!((m.temporal_discontinuity_db - 1.5).abs() < 1e-12);
        assert!((m.spatial_discontinuity_db - 2.0).abs() < 1e-12);
        assert!((m.avg_frame_delay_ms - 65.0).abs() < 1e-12);
        assert!((m.frame_delay_std_ms - 5.0).abs() < 1e-12);
        assert!((m.delay_std_over_mean - 5.0 / 65.0).abs() < 1e-12);
        assert!((m.freeze_frame_pct - 25.0).abs() < 1e-12);
        assert!((m.avg_freeze_duration_ms - 22.22).abs() < 1e-9);
        assert!((m.delivered_pct - 200.0 / 3.0).abs() < 1e-9);
        assert!((m.sender_dropped_pct - 100.0 / 3.0).abs() < 1e-9);
        assert!((m.display_interval_mean_ms - 33.33).abs() < 1e-9);
        // 3 Mbit over 0.1 s.
        assert!((m.sent_mbps - 30.0).abs() < 1e-9);
    }

    #[test]
    fn test_aggregate_is_field_mean() {
        let a = compute_metrics(&sample_log());
        let mut b = a.clone();
        b.ws_psnr_in_fov_db = 41.0;
        b.avg_frame_delay_ms = 35.0;
        let agg = aggregate(&[a.clone(), b]).unwrap();
        assert_eq!(agg.traces, 2);
        assert!((agg.ws_psnr_in_fov_db - 36.0).abs() < 1e-12);
        assert!((agg.avg_frame_delay_ms - 50.0).abs() < 1e-12);
        let mut c = a.clone();
        c.variant = "bm1".into();
        assert!(aggregate(&[a, c]).is_err());
        assert!(aggregate(&[]).is_err());
    }

    #[test]
    fn test_empty_session_yields_finite_zeroes() {
        let mut log = sample_log();
        log.frames.clear();
        log.quality.clear();
        log.displays.clear();
        log.freeze_runs.clear();
        log.freeze_polls = 0;
        log.polls_counted = 0;
        log.conservation = Conservation::default();
        let m = compute_metrics(&log);
        assert_eq!(m.ws_psnr_in_fov_db, 0.0);
        assert_eq!(m.avg_frame_delay_ms, 0.0);
        assert_eq!(m.delay_std_over_mean, 0.0);
        assert_eq!(m.freeze_frame_pct, 0.0);
        assert_eq!(m.delivered_pct, 0.0);
        let json = report_json(&m).unwrap();
        assert!(!json.contains("null"), "metrics must stay numeric: {}", json);
    }

    #[test]
    fn test_csv_outputs_parse_back() {
        let log = sample_log();
        let frames = frames_csv(&log).unwrap();
        let mut rdr = csv::Reader::from_reader(frames.as_bytes());
        assert_eq!(rdr.records().count(), 3);
        let quality = quality_csv(&log).unwrap();
        assert_eq!(quality.lines().count(), 4);
        let m = compute_metrics(&log);
        let summary = summary_csv([("t1", &m)]).unwrap();
        assert!(summary.lines().nth(1).unwrap().starts_with("t1,proposed,1,"));
    }
}
