//! Solid-angle hit rates of an actual viewport against a coded layout.

use super::{ErpGrid, FovPose, Frustum, RegionClass, RegionLayout};
use crate::Result;
use serde::{Deserialize, Serialize};

/// Default sampling density (per axis) for hit-rate measurements.
pub const DEFAULT_HIT_SAMPLES: u32 = 256;

/// Fractions of the actual viewport's solid angle landing in each region.
/// The four fields sum to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HitRates {
    pub pf: f64,
    pub pfplus: f64,
    pub ri: f64,
    pub uncoded: f64,
}

impl HitRates {
    /// Fraction of the viewport covered by any coded region.
    pub fn total(&self) -> f64 {
        self.pf + self.pfplus + self.ri
    }
}

/// Measure how the actual viewport falls across the regions of a layout
/// built for the predicted pose. The predicted pose itself is not
/// re-derived here; the layout must be the one built from it.
pub fn hit_rates(
    predicted: &FovPose,
    actual: &FovPose,
    layout: &RegionLayout,
    grid: &ErpGrid,
) -> Result<HitRates> {
    let _ = predicted;
    hit_rates_sampled(actual, layout, grid, DEFAULT_HIT_SAMPLES)
}

/// Same measurement at an explicit sampling density.
pub fn hit_rates_sampled(
    actual: &FovPose,
    layout: &RegionLayout,
    grid: &ErpGrid,
    samples_per_axis: u32,
) -> Result<HitRates> {
    let frustum = Frustum::new(actual)?;
    let map = layout.class_map();
    let mut acc = [0.0f64; 4];
    let mut total = 0.0f64;
    for (dir, w) in frustum.weighted_samples(samples_per_axis) {
        let tile = grid.tile_of_direction(dir);
        let class = map[grid.raster_index(tile) as usize];
        acc[class_slot(class)] += w;
        total += w;
    }
    if total <= 0.0 {
        return Err(crate::Error::invalid(
            "viewport produced no weighted samples",
        ));
    }
    Ok(HitRates {
        pf: acc[1] / total,
        pfplus: acc[2] / total,
        ri: acc[3] / total,
        uncoded: acc[0] / total,
    })
}

fn class_slot(class: RegionClass) -> usize {
    match class {
        RegionClass::Uncoded => 0,
        RegionClass::Pf => 1,
        RegionClass::PfPlus => 2,
        RegionClass::Ri => 3,
    }
}

/// Fraction of the actual viewport's solid angle that falls inside the
/// predicted viewport (frustum overlap, independent of any tiling).
pub fn viewport_overlap(predicted: &FovPose, actual: &FovPose, samples_per_axis: u32) -> Result<f64> {
    let predicted_frustum = Frustum::new(predicted)?;
    let actual_frustum = Frustum::new(actual)?;
    if predicted_frustum.full_sphere {
        return Ok(1.0);
    }
    let mut inside = 0.0f64;
    let mut total = 0.0f64;
    for (dir, w) in actual_frustum.weighted_samples(samples_per_axis) {
        if predicted_frustum.contains(dir) {
            inside += w;
        }
        total += w;
    }
    if total <= 0.0 {
        return Err(crate::Error::invalid(
            "viewport produced no weighted samples",
        ));
    }
    Ok(inside / total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_layout, ErpGrid, FovPose};

    fn grid_8k() -> ErpGrid {
        ErpGrid::new(8192, 4096, 256).unwrap()
    }

    #[test]
    fn test_perfect_prediction_leaves_nothing_uncoded() {
        let g = grid_8k();
        let pose = FovPose::from_yaw_pitch(10.0, 5.0, 90.0, 90.0);
        let layout = build_layout(&pose, 20.0, 4, 3, &g).unwrap();
        let rates = hit_rates(&pose, &pose, &layout, &g).unwrap();
        // Every sample lies in the covering tile set, so only PF and RI
        // (for the rotating block, if it intersects) can appear.
        assert!(rates.uncoded < 1e-12);
        assert!(rates.pfplus < 1e-12);
        assert!((rates.pf + rates.ri - 1.0).abs() < 1e-12);
        assert!(rates.pf > 0.9);
    }

    #[test]
    fn test_rates_sum_to_one() {
        let g = grid_8k();
        let predicted = FovPose::from_yaw_pitch(0.0, 0.0, 90.0, 90.0);
        let actual = FovPose::from_yaw_pitch(60.0, 25.0, 90.0, 90.0);
        let layout = build_layout(&predicted, 30.0, 8, 11, &g).unwrap();
        let r = hit_rates(&predicted, &actual, &layout, &g).unwrap();
        assert!((r.pf + r.pfplus + r.ri + r.uncoded - 1.0).abs() < 1e-12);
        assert!(r.uncoded > 0.0, "a 60-degree miss must leave gaps");
    }

    #[test]
    fn test_overlap_of_identical_views_is_one() {
        let pose = FovPose::from_yaw_pitch(-20.0, 40.0, 90.0, 90.0);
        let o = viewport_overlap(&pose, &pose, 128).unwrap();
        assert!((o - 1.0).abs() < 1e-12);
    }

    #[test]
    fn test_overlap_decreases_with_offset() {
        let base = FovPose::from_yaw_pitch(0.0, 0.0, 90.0, 90.0);
        let mut prev = 1.1f64;
        for off in [0.0, 15.0, 30.0, 45.0, 60.0] {
            let moved = FovPose::from_yaw_pitch(off, 0.0, 90.0, 90.0);
            let o = viewport_overlap(&base, &moved, 128).unwrap();
            assert!(o < prev);
            prev = o;
        }
        // Disjoint viewports do not overlap at all.
        let opposite = FovPose::from_yaw_pitch(180.0, 0.0, 90.0, 90.0);
        assert_eq!(viewport_overlap(&base, &opposite, 128).unwrap(), 0.0);
    }
}
