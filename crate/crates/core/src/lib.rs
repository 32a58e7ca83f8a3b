//! Simulation library for tile-based, FoV-adaptive 360-degree video streaming.
//!
//! The library models a low-latency streaming system that codes an
//! equirectangular (ERP) frame as three regions: the predicted field of view
//! (PF, inter coded at a high rate), a safety border around it (PF+, inter
//! coded at a lower rate), and a small rotating intra region (RI) that walks
//! across the whole frame and refreshes every tile once per rotation period.
//! Region sizes and the two coding rates are chosen per segment by a
//! closed-form optimizer driven by logarithmic quality-rate models with
//! temporal-lapse corrections.
//!
//! Modules map onto the moving parts of that system:
//!
//! * [`geometry`]: ERP tiling, viewport frusta, region layouts, hit rates.
//! * [`quality`]: WS-PSNR helpers, Q-R models, lapse correction models.
//! * [`allocator`]: closed-form rate/region optimization and bit budgeting.
//! * [`predict`]: FoV and bandwidth predictors plus scoring utilities.
//! * [`trace`]: head-motion and bandwidth trace parsing and preprocessing.
//! * [`sim`]: the push-based sender/receiver pipeline simulation.
//! * [`report`]: per-session metrics and serialized reports.
//! * [`config`]: simulation configuration and built-in model presets.

pub mod allocator;
pub mod config;
pub mod error;
pub mod geometry;
pub mod predict;
pub mod quality;
pub mod report;
pub mod sim;
pub mod trace;

pub use error::Error;

/// Convenience alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;
