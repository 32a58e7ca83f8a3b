//! Command line front end: single sessions, corpus sweeps, predictor
//! scoring, curve fitting, and trace validation.
//!
//! Exit codes: 0 on success, 1 when inputs fail validation (flags, config,
//! traces, fit points), 2 when a run fails after inputs were accepted.

use clap::{Parser, Subcommand, ValueEnum};
use fovstream::config::{SimConfig, SystemVariant};
use fovstream::predict::{
    score_bandwidth, score_fov, BandwidthPredictor, FovPredictor, HarmonicMeanBandwidth, HoldFov,
    RlsBandwidth, TruncatedLinearFov,
};
use fovstream::quality::{fit_kappa_model, fit_log_model, fit_rho_model};
use fovstream::report::{
    aggregate, compute_metrics, frames_csv, quality_csv, report_json, summary_csv, MetricsReport,
};
use fovstream::sim::{run_simulation, SessionLog};
use fovstream::trace::{
    flip_extend, parse_bandwidth_trace_path, parse_fov_trace_path, synthetic_bandwidth_trace,
    synthetic_fov_trace, BandwidthFormat, BandwidthStyle, BandwidthTrace, FovFormat, FovStyle,
    FovTrace, ParseMode,
};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "fovstream",
    version,
    about = "Trace-driven simulator for tile-based, FoV-adaptive 360-degree streaming"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one session and write its report, frame log, and plot series.
    Simulate(SimulateArgs),
    /// Run every system variant across a trace corpus and aggregate per
    /// variant.
    Sweep(SweepArgs),
    /// Score the view-direction and bandwidth predictors against a trace.
    ScorePredictors(ScorePredictorsArgs),
    /// Fit quality, rate-inflation, and decay curves to CSV sample points.
    FitModels(FitModelsArgs),
    /// Strictly validate a trace file and print its summary.
    ValidateTrace(ValidateTraceArgs),
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum OutFormat {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum FovStyleArg {
    SmoothWalk,
    PoleDwell,
    EquatorPan,
}

impl From<FovStyleArg> for FovStyle {
    fn from(s: FovStyleArg) -> FovStyle {
        match s {
            FovStyleArg::SmoothWalk => FovStyle::SmoothWalk,
            FovStyleArg::PoleDwell => FovStyle::PoleDwell,
            FovStyleArg::EquatorPan => FovStyle::EquatorPan,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BwStyleArg {
    Steady,
    Fluctuating,
    Dropouts,
}

impl From<BwStyleArg> for BandwidthStyle {
    fn from(s: BwStyleArg) -> BandwidthStyle {
        match s {
            BwStyleArg::Steady => BandwidthStyle::Steady,
            BwStyleArg::Fluctuating => BandwidthStyle::Fluctuating,
            BwStyleArg::Dropouts => BandwidthStyle::Dropouts,
        }
    }
}

#[derive(Parser)]
struct SimulateArgs {
    /// Configuration TOML; built-in defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Quality-model preset override (stable-scene or dynamic-scene).
    #[arg(long)]
    preset: Option<String>,
    /// System to simulate: proposed, simplified, bm1, bm2, or bm3.
    #[arg(long, default_value = "proposed")]
    variant: String,
    /// Head-motion trace CSV; synthesized from --fov-style when omitted.
    #[arg(long)]
    fov_trace: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FovStyleArg::SmoothWalk)]
    fov_style: FovStyleArg,
    /// Bandwidth trace CSV; synthesized from --bw-style when omitted.
    #[arg(long)]
    bw_trace: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = BwStyleArg::Fluctuating)]
    bw_style: BwStyleArg,
    /// Mean rate of the synthetic bandwidth trace, Mbps.
    #[arg(long, default_value_t = 60.0)]
    bw_mbps: f64,
    /// Session length, seconds.
    #[arg(long, default_value_t = 60.0)]
    duration: f64,
    /// Seed for synthetic traces.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Report serialization; frame log and plot series are always CSV.
    #[arg(long, value_enum, default_value_t = OutFormat::Json)]
    format: OutFormat,
}

#[derive(Parser)]
struct SweepArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    /// Head-motion trace files; a synthetic corpus is generated when none
    /// are given.
    #[arg(long)]
    fov_trace: Vec<PathBuf>,
    /// Size of the synthetic corpus when no trace files are given.
    #[arg(long, default_value_t = 8)]
    traces: usize,
    #[arg(long)]
    bw_trace: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = BwStyleArg::Fluctuating)]
    bw_style: BwStyleArg,
    #[arg(long, default_value_t = 60.0)]
    bw_mbps: f64,
    /// Session length per trace, seconds.
    #[arg(long, default_value_t = 60.0)]
    duration: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    parallel: usize,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// json additionally writes the aggregates as sweep.json.
    #[arg(long, value_enum, default_value_t = OutFormat::Json)]
    format: OutFormat,
}

#[derive(Parser)]
struct ScorePredictorsArgs {
    /// Head-motion trace CSV; synthesized when omitted.
    #[arg(long)]
    fov_trace: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FovStyleArg::SmoothWalk)]
    fov_style: FovStyleArg,
    /// Bandwidth trace CSV; synthesized when omitted.
    #[arg(long)]
    bw_trace: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = BwStyleArg::Fluctuating)]
    bw_style: BwStyleArg,
    #[arg(long, default_value_t = 60.0)]
    bw_mbps: f64,
    /// Length of synthetic traces, seconds.
    #[arg(long, default_value_t = 120.0)]
    duration: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Also write the score tables as predictors.csv into this directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Parser)]
struct FitModelsArgs {
    /// CSV of rate,quality_db points for the log quality curve.
    #[arg(long)]
    qr: Option<PathBuf>,
    /// CSV of lapse,inflation_factor points for the reference-staleness
    /// rate curve.
    #[arg(long)]
    rho: Option<PathBuf>,
    /// CSV of lapse,decay_factor points for the repeat-display decay curve.
    #[arg(long)]
    kappa: Option<PathBuf>,
    /// Also write the fitted parameters as models.json into this directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Parser)]
struct ValidateTraceArgs {
    #[arg(long)]
    fov_trace: Option<PathBuf>,
    #[arg(long)]
    bw_trace: Option<PathBuf>,
}

/// Failures carry the exit code split: inputs that fail validation exit 1,
/// failures after inputs were accepted exit 2.
enum Failure {
    Validation(String),
    Runtime(String),
}

type CResult<T> = Result<T, Failure>;

fn vfail<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Validation(e.to_string())
}

fn rfail<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Runtime(e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Sweep(args) => sweep(args),
        Command::ScorePredictors(args) => score_predictors(args),
        Command::FitModels(args) => fit_models(args),
        Command::ValidateTrace(args) => validate_trace(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {}", msg);
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {}", msg);
            ExitCode::from(2)
        }
    }
}

fn load_config(path: &Option<PathBuf>, preset: &Option<String>) -> CResult<SimConfig> {
    let mut cfg = match path {
        Some(p) => SimConfig::from_toml_path(p).map_err(vfail)?,
        None => SimConfig::default(),
    };
    if let Some(name) = preset {
        cfg.models.preset = Some(name.clone());
    }
    cfg.validate().map_err(vfail)?;
    // Unknown preset names and inconsistent curve tables should fail here,
    // not mid-run.
    cfg.resolve_models().map_err(vfail)?;
    Ok(cfg)
}

/// Load or synthesize a head-motion trace long enough for the session. File
/// traces shorter than the session are extended by mirrored playback.
fn load_fov(
    path: &Option<PathBuf>,
    style: FovStyleArg,
    seed: u64,
    duration_ms: f64,
    fps: f64,
) -> CResult<FovTrace> {
    let needed_ms = duration_ms + 2000.0;
    match path {
        Some(p) => {
            let (trace, warnings) =
                parse_fov_trace_path(p, FovFormat::Auto, ParseMode::Strict).map_err(vfail)?;
            for w in warnings {
                eprintln!("warning: {}", w);
            }
            if trace.duration_ms() < needed_ms {
                flip_extend(&trace, needed_ms).map_err(vfail)
            } else {
                Ok(trace)
            }
        }
        None => {
            let frames = (needed_ms / 1000.0 * fps).ceil() as usize + 2;
            synthetic_fov_trace(seed, frames, fps, style.into()).map_err(vfail)
        }
    }
}

fn load_bw(
    path: &Option<PathBuf>,
    style: BwStyleArg,
    mbps: f64,
    seed: u64,
    duration_ms: f64,
) -> CResult<BandwidthTrace> {
    let needed_ms = duration_ms + 5000.0;
    match path {
        Some(p) => {
            let trace = parse_bandwidth_trace_path(p, BandwidthFormat::Auto).map_err(vfail)?;
            if trace.duration_ms() < needed_ms {
                return Err(Failure::Validation(format!(
                    "bandwidth trace {} covers {:.0} ms but the session needs {:.0} ms",
                    p.display(),
                    trace.duration_ms(),
                    needed_ms
                )));
            }
            Ok(trace)
        }
        None => {
            synthetic_bandwidth_trace(seed ^ 0x6277, needed_ms, mbps, style.into()).map_err(vfail)
        }
    }
}

fn ensure_dir(dir: &Path) -> CResult<()> {
    std::fs::create_dir_all(dir).map_err(rfail)
}

fn write_file(path: &Path, text: &str) -> CResult<()> {
    std::fs::write(path, text).map_err(rfail)
}

/// Per-segment time series shaped for plotting: link rate against the
/// prediction the plan used, the granted budget, and the chosen region
/// sizes and rates.
fn series_csv(log: &SessionLog, bw: &BandwidthTrace, seg_ms: f64) -> CResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "segment",
        "t_ms",
        "actual_mbps",
        "predicted_mbps",
        "budget_mbit",
        "border_deg",
        "ri_tiles",
        "r_e",
        "r_b",
        "gamma_in",
        "alpha_pf_in",
        "encoded",
        "displayed",
    ])
    .map_err(rfail)?;
    for s in &log.segments {
        let t0 = s.segment as f64 * seg_ms;
        let actual = bw.bits_between(t0, t0 + seg_ms) / seg_ms * 1000.0 / 1e6;
        w.write_record(&[
            s.segment.to_string(),
            format!("{:.3}", t0),
            format!("{:.6}", actual),
            format!("{:.6}", s.predicted_bits / seg_ms * 1000.0 / 1e6),
            format!("{:.6}", s.budget_bits / 1e6),
            s.border_deg.to_string(),
            s.ri_tiles.to_string(),
            format!("{:.6}", s.r_e_nominal),
            format!("{:.6}", s.r_b_nominal),
            format!("{:.6}", s.gamma_in),
            format!("{:.6}", s.alpha_pf_in),
            s.encoded.to_string(),
            s.displayed.to_string(),
        ])
        .map_err(rfail)?;
    }
    let bytes = w.into_inner().map_err(rfail)?;
    String::from_utf8(bytes).map_err(rfail)
}

fn simulate(args: SimulateArgs) -> CResult<()> {
    let cfg = load_config(&args.config, &args.preset)?;
    let variant: SystemVariant = args.variant.parse().map_err(vfail)?;
    if !(args.duration > 0.0) {
        return Err(Failure::Validation("duration must be positive".into()));
    }
    let duration_ms = args.duration * 1000.0;
    let fov = load_fov(
        &args.fov_trace,
        args.fov_style,
        args.seed,
        duration_ms,
        cfg.video.fps,
    )?;
    let bw = load_bw(&args.bw_trace, args.bw_style, args.bw_mbps, args.seed, duration_ms)?;

    let log = run_simulation(&cfg, variant, &fov, &bw, duration_ms).map_err(rfail)?;
    let report = compute_metrics(&log);

    ensure_dir(&args.out_dir)?;
    match args.format {
        OutFormat::Json => write_file(
            &args.out_dir.join("report.json"),
            &(report_json(&report).map_err(rfail)? + "\n"),
        )?,
        OutFormat::Csv => write_file(
            &args.out_dir.join("report.csv"),
            &summary_csv([("session", &report)]).map_err(rfail)?,
        )?,
    }
    write_file(&args.out_dir.join("frames.csv"), &frames_csv(&log).map_err(rfail)?)?;
    write_file(&args.out_dir.join("quality.csv"), &quality_csv(&log).map_err(rfail)?)?;
    let seg_ms = cfg.segment.frames_per_segment as f64 * 1000.0 / cfg.video.fps;
    write_file(&args.out_dir.join("series.csv"), &series_csv(&log, &bw, seg_ms)?)?;

    println!(
        "{}: {:.2} dB viewport quality, delay {:.1} ms, delivered {:.1}%, freeze {:.2}%, \
         sent {:.1} Mbps over {:.0} s -> {}",
        variant.name(),
        report.ws_psnr_in_fov_db,
        report.avg_frame_delay_ms,
        report.delivered_pct,
        report.freeze_frame_pct,
        report.sent_mbps,
        args.duration,
        args.out_dir.display()
    );
    Ok(())
}

fn sweep(args: SweepArgs) -> CResult<()> {
    let cfg = load_config(&args.config, &args.preset)?;
    if !(args.duration > 0.0) {
        return Err(Failure::Validation("duration must be positive".into()));
    }
    let duration_ms = args.duration * 1000.0;

    // Assemble the corpus with stable trace ids; results are reduced in id
    // order so worker scheduling cannot change any output.
    let mut corpus: Vec<(String, FovTrace)> = Vec::new();
    if args.fov_trace.is_empty() {
        if args.traces == 0 {
            return Err(Failure::Validation("need at least one trace".into()));
        }
        let styles = [
            (FovStyleArg::SmoothWalk, "smooth-walk"),
            (FovStyleArg::EquatorPan, "equator-pan"),
            (FovStyleArg::PoleDwell, "pole-dwell"),
        ];
        for i in 0..args.traces {
            let (style, name) = styles[i % styles.len()];
            let seed = args.seed + i as u64;
            let trace = load_fov(&None, style, seed, duration_ms, cfg.video.fps)?;
            corpus.push((format!("{}-{:03}", name, seed), trace));
        }
    } else {
        for p in &args.fov_trace {
            let id = p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| p.display().to_string());
            // Style is ignored when loading from a file.
            let trace = load_fov(
                &Some(p.clone()),
                FovStyleArg::SmoothWalk,
                args.seed,
                duration_ms,
                cfg.video.fps,
            )?;
            corpus.push((id, trace));
        }
    }
    corpus.sort_by(|a, b| a.0.cmp(&b.0));
    let bw = load_bw(&args.bw_trace, args.bw_style, args.bw_mbps, args.seed, duration_ms)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.parallel)
        .build()
        .map_err(rfail)?;
    let jobs: Vec<(SystemVariant, usize)> = SystemVariant::ALL
        .iter()
        .flat_map(|&v| (0..corpus.len()).map(move |i| (v, i)))
        .collect();
    let results: Vec<Result<MetricsReport, fovstream::Error>> = pool.install(|| {
        use rayon::prelude::*;
        jobs.par_iter()
            .map(|&(v, i)| {
                run_simulation(&cfg, v, &corpus[i].1, &bw, duration_ms)
                    .map(|log| compute_metrics(&log))
            })
            .collect()
    });

    let mut by_variant: BTreeMap<String, Vec<MetricsReport>> = BTreeMap::new();
    for (job, res) in jobs.iter().zip(results) {
        let report = res.map_err(rfail)?;
        by_variant
            .entry(job.0.name().to_string())
            .or_default()
            .push(report);
    }
    // Keep the summary in system order, not alphabetical.
    let aggregates: Vec<MetricsReport> = SystemVariant::ALL
        .iter()
        .map(|v| aggregate(&by_variant[v.name()]).map_err(rfail))
        .collect::<CResult<_>>()?;

    ensure_dir(&args.out_dir)?;
    let rows: Vec<(&str, &MetricsReport)> = aggregates
        .iter()
        .map(|r| (r.variant.as_str(), r))
        .collect();
    write_file(
        &args.out_dir.join("sweep.csv"),
        &summary_csv(rows).map_err(rfail)?,
    )?;
    if args.format == OutFormat::Json {
        let text = serde_json::to_string_pretty(&aggregates).map_err(rfail)?;
        write_file(&args.out_dir.join("sweep.json"), &(text + "\n"))?;
    }

    println!(
        "{:>10}  {:>8}  {:>9}  {:>8}  {:>8}  {:>8}  {:>8}",
        "variant", "quality", "delay_ms", "cv", "freeze%", "hit%", "mbps"
    );
    for r in &aggregates {
        println!(
            "{:>10}  {:>8.2}  {:>9.1}  {:>8.3}  {:>8.2}  {:>8.1}  {:>8.1}",
            r.variant,
            r.ws_psnr_in_fov_db,
            r.avg_frame_delay_ms,
            r.delay_std_over_mean,
            r.freeze_frame_pct,
            r.hit_total_pct,
            r.sent_mbps
        );
    }
    println!(
        "{} traces x {} variants over {:.0} s each -> {}",
        corpus.len(),
        SystemVariant::ALL.len(),
        args.duration,
        args.out_dir.display()
    );
    Ok(())
}

fn score_predictors(args: ScorePredictorsArgs) -> CResult<()> {
    if !(args.duration > 0.0) {
        return Err(Failure::Validation("duration must be positive".into()));
    }
    let duration_ms = args.duration * 1000.0;
    let fov = load_fov(&args.fov_trace, args.fov_style, args.seed, duration_ms, 30.0)?;
    let bw = load_bw(&args.bw_trace, args.bw_style, args.bw_mbps, args.seed, duration_ms)?;

    // View-direction predictors: mean viewport overlap at growing horizons,
    // after a one second warmup.
    let fov = fov.resampled(30.0).map_err(rfail)?;
    let dirs: Vec<_> = (0..fov.len()).map(|i| fov.dir(i)).collect();
    let horizons: [u32; 6] = [1, 3, 6, 10, 15, 30];
    let mut fov_rows: Vec<(&str, Vec<f64>)> = Vec::new();
    let fov_predictors: Vec<(&str, Box<dyn FovPredictor>)> = vec![
        ("truncated-linear", Box::new(TruncatedLinearFov::new(30, 1.0))),
        ("hold", Box::<HoldFov>::default()),
    ];
    for (name, mut p) in fov_predictors {
        let mut pairs: BTreeMap<u32, (Vec<_>, Vec<_>)> = BTreeMap::new();
        for (i, d) in dirs.iter().enumerate() {
            p.observe(i as u64, *d);
            if i < 30 || i + 30 >= dirs.len() {
                continue;
            }
            let seq = p.predict(30).map_err(rfail)?;
            for &h in &horizons {
                let entry = pairs.entry(h).or_default();
                entry.0.push(seq[(h - 1) as usize]);
                entry.1.push(dirs[i + h as usize]);
            }
        }
        let mut row = Vec::new();
        for &h in &horizons {
            let (pred, actual) = &pairs[&h];
            row.push(score_fov(pred, actual, 90.0, 90.0).map_err(rfail)? * 100.0);
        }
        fov_rows.push((name, row));
    }

    // Bandwidth predictors: per-segment bit predictions scored against the
    // trace, fed the same 200 ms bins the simulator would supply.
    let seg_ms = 1000.0;
    let bin_ms = 200.0;
    let n_segments = (bw.duration_ms() / seg_ms).floor() as u64;
    let mut bw_rows: Vec<(&str, f64, f64)> = Vec::new();
    let bw_predictors: Vec<(&str, Box<dyn BandwidthPredictor>)> = vec![
        ("rls", Box::new(RlsBandwidth::new(5, 0.98, 1.0e6))),
        ("harmonic-mean", Box::<HarmonicMeanBandwidth>::default()),
    ];
    for (name, mut p) in bw_predictors {
        let mut predicted = Vec::new();
        let mut actual = Vec::new();
        for s in 0..n_segments {
            let t0 = s as f64 * seg_ms;
            if s >= 1 {
                if let Ok(bits) = p.predict_segment_bits(s) {
                    predicted.push(bits);
                    actual.push(bw.bits_between(t0, t0 + seg_ms).max(1.0));
                }
            }
            let mut t = t0;
            while t < t0 + seg_ms - 1e-9 {
                p.observe_sample(bw.bits_between(t, t + bin_ms));
                t += bin_ms;
            }
        }
        let score = score_bandwidth(&predicted, &actual).map_err(rfail)?;
        bw_rows.push((name, score.mape, score.nmae));
    }

    println!("viewport overlap by prediction horizon (%):");
    let mut header = format!("{:>18}", "horizon_ms");
    for &h in &horizons {
        header.push_str(&format!("  {:>8.0}", h as f64 * 1000.0 / 30.0));
    }
    println!("{}", header);
    for (name, row) in &fov_rows {
        let mut line = format!("{:>18}", name);
        for v in row {
            line.push_str(&format!("  {:>8.2}", v));
        }
        println!("{}", line);
    }
    println!("bandwidth prediction error per segment:");
    for (name, mape, nmae) in &bw_rows {
        println!("{:>18}  mape {:.4}  nmae {:.4}", name, mape, nmae);
    }

    if let Some(dir) = &args.out_dir {
        ensure_dir(dir)?;
        let mut w = csv::Writer::from_path(dir.join("predictors.csv")).map_err(rfail)?;
        w.write_record(["kind", "name", "key", "value"]).map_err(rfail)?;
        for (name, row) in &fov_rows {
            for (&h, v) in horizons.iter().zip(row) {
                w.write_record(&[
                    "fov-overlap-pct".to_string(),
                    name.to_string(),
                    format!("{:.0}", h as f64 * 1000.0 / 30.0),
                    format!("{:.6}", v),
                ])
                .map_err(rfail)?;
            }
        }
        for (name, mape, nmae) in &bw_rows {
            w.write_record(&[
                "bw-mape".to_string(),
                name.to_string(),
                String::new(),
                format!("{:.6}", mape),
            ])
            .map_err(rfail)?;
            w.write_record(&[
                "bw-nmae".to_string(),
                name.to_string(),
                String::new(),
                format!("{:.6}", nmae),
            ])
            .map_err(rfail)?;
        }
        w.flush().map_err(rfail)?;
    }
    Ok(())
}

/// Read two-column numeric CSV points, skipping one header row if present.
fn read_points(path: &Path) -> CResult<Vec<(f64, f64)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(vfail)?;
    let mut points = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(vfail)?;
        if rec.len() != 2 {
            return Err(Failure::Validation(format!(
                "{} row {}: expected 2 columns, got {}",
                path.display(),
                i + 1,
                rec.len()
            )));
        }
        match (rec[0].parse::<f64>(), rec[1].parse::<f64>()) {
            (Ok(x), Ok(y)) => points.push((x, y)),
            _ if i == 0 => continue,
            _ => {
                return Err(Failure::Validation(format!(
                    "{} row {}: non-numeric point",
                    path.display(),
                    i + 1
                )))
            }
        }
    }
    Ok(points)
}

fn lapse_points(points: &[(f64, f64)], path: &Path) -> CResult<Vec<(u32, f64)>> {
    points
        .iter()
        .map(|&(x, y)| {
            if x < 0.0 || x.fract() != 0.0 {
                Err(Failure::Validation(format!(
                    "{}: lapse {} is not a nonnegative integer",
                    path.display(),
                    x
                )))
            } else {
                Ok((x as u32, y))
            }
        })
        .collect()
}

fn fit_models(args: FitModelsArgs) -> CResult<()> {
    if args.qr.is_none() && args.rho.is_none() && args.kappa.is_none() {
        return Err(Failure::Validation(
            "nothing to fit: pass --qr, --rho, or --kappa".into(),
        ));
    }
    let mut out = serde_json::Map::new();
    if let Some(p) = &args.qr {
        let m = fit_log_model(&read_points(p)?).map_err(vfail)?;
        println!("qr: a {:.6} b {:.6}", m.a, m.b);
        out.insert("qr".into(), serde_json::json!({ "a": m.a, "b": m.b }));
    }
    if let Some(p) = &args.rho {
        let pts = lapse_points(&read_points(p)?, p)?;
        let m = fit_rho_model(&pts).map_err(vfail)?;
        println!("rho: c {:.6} d {:.6}", m.c, m.d);
        out.insert("rho".into(), serde_json::json!({ "c": m.c, "d": m.d }));
    }
    if let Some(p) = &args.kappa {
        let pts = lapse_points(&read_points(p)?, p)?;
        let m = fit_kappa_model(&pts).map_err(vfail)?;
        println!("kappa: g {:.6} h {:.6}", m.g, m.h);
        out.insert("kappa".into(), serde_json::json!({ "g": m.g, "h": m.h }));
    }
    if let Some(dir) = &args.out_dir {
        ensure_dir(dir)?;
        let text =
            serde_json::to_string_pretty(&serde_json::Value::Object(out)).map_err(rfail)?;
        write_file(&dir.join("models.json"), &(text + "\n"))?;
    }
    Ok(())
}

fn validate_trace(args: ValidateTraceArgs) -> CResult<()> {
    if args.fov_trace.is_none() && args.bw_trace.is_none() {
        return Err(Failure::Validation(
            "nothing to validate: pass --fov-trace or --bw-trace".into(),
        ));
    }
    if let Some(p) = &args.fov_trace {
        let (trace, _) =
            parse_fov_trace_path(p, FovFormat::Auto, ParseMode::Strict).map_err(vfail)?;
        println!(
            "{}: ok, {} samples over {:.1} s, median interval {:.2} ms",
            p.display(),
            trace.len(),
            trace.duration_ms() / 1000.0,
            trace.frame_interval_ms()
        );
    }
    if let Some(p) = &args.bw_trace {
        let trace = parse_bandwidth_trace_path(p, BandwidthFormat::Auto).map_err(vfail)?;
        println!(
            "{}: ok, {} intervals over {:.1} s, mean {:.2} Mbps, peak {:.2} Mbps",
            p.display(),
            trace.intervals().len(),
            trace.duration_ms() / 1000.0,
            trace.mean_rate_bps() / 1e6,
            trace.peak_rate_bps() / 1e6
        );
    }
    Ok(())
}
