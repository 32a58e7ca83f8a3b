//! Per-tile coding state and the bit/quality bookkeeping built on it.
//!
//! Both endpoints keep a ledger: the sender updates at encode time and uses
//! it to price reference lapses, the receiver updates at decode time and
//! supplies the state rendered qualities are computed from.

use crate::geometry::{tiles_covering_fov, ErpGrid, FovPose, TileId};
use crate::quality::{LogQrModel, QualityDecayModel, RateIncreaseModel};
use crate::Result;
use std::collections::BTreeSet;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LedgerEntry {
    pub last_coded_frame: u64,
    pub quality_db: f64,
}

/// Last-coded frame and quality per tile, raster order.
#[derive(Debug, Clone, PartialEq)]
pub struct TileLedger {
    entries: Vec<Option<LedgerEntry>>,
}

impl TileLedger {
    pub fn new(grid: &ErpGrid) -> TileLedger {
        TileLedger {
            entries: vec![None; grid.tile_count() as usize],
        }
    }

    pub fn entry(&self, raster: u32) -> Option<LedgerEntry> {
        self.entries[raster as usize]
    }

    pub fn update(&mut self, raster: u32, frame: u64, quality_db: f64) {
        self.entries[raster as usize] = Some(LedgerEntry {
            last_coded_frame: frame,
            quality_db,
        });
    }

    /// Frames since the tile was last coded, as seen while coding `frame`.
    /// A tile never coded before counts as maximally stale.
    pub fn lapse_at(&self, raster: u32, frame: u64) -> u32 {
        match self.entries[raster as usize] {
            Some(e) => (frame.saturating_sub(e.last_coded_frame)).min(u32::MAX as u64) as u32,
            None => (frame + 1).min(u32::MAX as u64) as u32,
        }
    }
}

/// One region's worth of tiles to code at a common rate.
pub struct RegionCharge<'a> {
    pub tiles: &'a BTreeSet<TileId>,
    /// Target rate, bits per square degree.
    pub rate: f64,
    /// Curve giving the quality the ledger records for these tiles.
    pub curve: LogQrModel,
    /// Inter-coded regions pay the reference-lapse bit inflation; intra
    /// regions do not.
    pub inter: bool,
}

pub struct ChargeOutcome {
    pub total_bits: f64,
    /// Reference lapses seen by each charge, aligned with the input order.
    pub lapses: Vec<Vec<u32>>,
    /// (raster index, recorded quality) of every coded tile, for replaying
    /// the same update on the receiver ledger at decode time.
    pub updates: Vec<(u32, f64)>,
}

/// Price one frame's regions against the ledger and record the new coding
/// state. Bits per tile are spherical tile area times rate, inflated by
/// rho(lapse) for inter regions.
pub fn charge_frame(
    charges: &[RegionCharge],
    frame: u64,
    grid: &ErpGrid,
    rate_increase: &RateIncreaseModel,
    ledger: &mut TileLedger,
) -> Result<ChargeOutcome> {
    let mut total_bits = 0.0;
    let mut lapses = Vec::with_capacity(charges.len());
    let mut updates = Vec::new();
    for charge in charges {
        let mut region_lapses = Vec::with_capacity(charge.tiles.len());
        let quality = charge.curve.quality_at_rate(charge.rate);
        for &tile in charge.tiles {
            let raster = grid.raster_index(tile);
            let tau = ledger.lapse_at(raster, frame);
            let factor = if charge.inter {
                rate_increase.rho(tau)?
            } else {
                1.0
            };
            total_bits += grid.tile_area_deg2(tile.row) * charge.rate * factor;
            region_lapses.push(tau);
            ledger.update(raster, frame, quality);
            updates.push((raster, quality));
        }
        lapses.push(region_lapses);
    }
    Ok(ChargeOutcome {
        total_bits,
        lapses,
        updates,
    })
}

/// Tile-granular qualities across a viewed area plus their area-weighted
/// mean.
pub struct ViewQuality {
    pub mean_db: f64,
    pub tiles: Vec<(TileId, f64)>,
}

/// Quality of what the viewer sees: for every tile covering the actual
/// viewport, the ledger quality decayed by the lapse between the shown frame
/// and the tile's last coding, plus any extra staleness from repeating the
/// frame.
pub fn rendered_view_quality(
    actual: &FovPose,
    shown_frame: u64,
    extra_lapse: u32,
    ledger: &TileLedger,
    grid: &ErpGrid,
    decay: &QualityDecayModel,
) -> Result<ViewQuality> {
    let cover: Vec<TileId> = tiles_covering_fov(actual, grid)?.into_iter().collect();
    Ok(rendered_view_quality_over(
        &cover,
        shown_frame,
        extra_lapse,
        ledger,
        grid,
        decay,
    ))
}

/// Same rendering computation over an already-computed covering tile set,
/// so a cached cover can serve both the display and the sampling clock.
pub fn rendered_view_quality_over(
    cover: &[TileId],
    shown_frame: u64,
    extra_lapse: u32,
    ledger: &TileLedger,
    grid: &ErpGrid,
    decay: &QualityDecayModel,
) -> ViewQuality {
    let mut tiles = Vec::with_capacity(cover.len());
    let mut weighted = 0.0;
    let mut weight = 0.0;
    for &tile in cover {
        let raster = grid.raster_index(tile);
        let q = match ledger.entry(raster) {
            Some(e) => {
                let lapse = (shown_frame.saturating_sub(e.last_coded_frame))
                    .min(u32::MAX as u64) as u32;
                decay.decayed_quality(e.quality_db, lapse.saturating_add(extra_lapse))
            }
            None => 0.0,
        };
        let area = grid.tile_area_deg2(tile.row);
        weighted += area * q;
        weight += area;
        tiles.push((tile, q));
    }
    ViewQuality {
        mean_db: if weight > 0.0 { weighted / weight } else { 0.0 },
        tiles,
    }
}

/// Mean absolute quality difference between 4-neighbor tile pairs within the
/// viewed area. Columns wrap around the frame seam; rows do not.
pub fn spatial_discontinuity_db(tiles: &[(TileId, f64)], grid: &ErpGrid) -> f64 {
    if tiles.len() < 2 {
        return 0.0;
    }
    let mut by_raster = vec![None; grid.tile_count() as usize];
    for (tile, q) in tiles {
        by_raster[grid.raster_index(*tile) as usize] = Some(*q);
    }
    let cols = grid.cols() as u16;
    let rows = grid.rows() as u16;
    let mut sum = 0.0;
    let mut pairs = 0u32;
    for (tile, q) in tiles {
        let right = TileId {
            row: tile.row,
            col: (tile.col + 1) % cols,
        };
        if let Some(nq) = by_raster[grid.raster_index(right) as usize] {
            sum += (q - nq).abs();
            pairs += 1;
        }
        if tile.row + 1 < rows {
            let down = TileId {
                row: tile.row + 1,
                col: tile.col,
            };
            if let Some(nq) = by_raster[grid.raster_index(down) as usize] {
                sum += (q - nq).abs();
                pairs += 1;
            }
        }
    }
    if pairs == 0 {
        0.0
    } else {
        sum / pairs as f64
    }
}
