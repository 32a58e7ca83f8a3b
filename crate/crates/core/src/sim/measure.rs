//! Viewport measurements taken at display time and their per-segment
//! aggregation into the statistics the next plan consumes.

use crate::geometry::{ErpGrid, FovPose, Frustum, HitRates, RegionClass, RegionLayout, Vec3};
use crate::Result;
use std::collections::BTreeMap;

/// One display's worth of viewport statistics.
///
/// `hit` scores the viewport against the layout actually coded. The planner
/// fields answer the counterfactuals the next segment's optimizer needs:
/// what fraction would a PF-only layout have caught, what would each
/// candidate border size have added, and what does each candidate rotating
/// block size intersect.
#[derive(Debug, Clone)]
pub struct DisplayMeasurement {
    pub hit: HitRates,
    pub planner_pf: f64,
    pub planner_border: BTreeMap<u32, f64>,
    pub planner_ri: BTreeMap<u32, f64>,
}

/// Measure where the actual viewport's solid angle fell, relative to both the
/// coded layout and the predicted viewport the plan was built around.
///
/// A sample needs a border of `2 * max(0, azimuth - h/2, elevation - v/2)`
/// degrees to be caught by an enlarged predicted viewport; the frustum edge
/// planes make that test exact, not an approximation. The PF/border
/// counterfactuals are pure shape hits, independent of which tiles the
/// rotating block happened to claim this frame; the optimizer deflates them
/// by each candidate block's own overlap so the masses stay disjoint.
#[allow(clippy::too_many_arguments)]
pub fn measure_display(
    actual: &FovPose,
    predicted_dir: Vec3,
    layout: &RegionLayout,
    frame: u64,
    grid: &ErpGrid,
    border_candidates: &[u32],
    ri_candidates: &[u32],
    samples_per_axis: u32,
) -> Result<DisplayMeasurement> {
    let actual_frustum = Frustum::new(actual)?;
    let predicted_pose = FovPose::new(predicted_dir, actual.h_deg, actual.v_deg);
    let predicted_frustum = Frustum::new(&predicted_pose)?;
    let half_h = actual.h_deg / 2.0;
    let half_v = actual.v_deg / 2.0;
    let class_map = layout.class_map();
    let total_tiles = grid.tile_count();

    let mut class_w = [0.0f64; 4];
    let mut pf_w = 0.0f64;
    let mut border_w: Vec<f64> = vec![0.0; border_candidates.len()];
    let mut ri_w: Vec<f64> = vec![0.0; ri_candidates.len()];
    let ri_offsets: Vec<u32> = ri_candidates
        .iter()
        .map(|&k| ((frame as u128 * k as u128) % total_tiles as u128) as u32)
        .collect();
    let mut total_w = 0.0f64;

    for (dir, w) in actual_frustum.weighted_samples(samples_per_axis) {
        total_w += w;
        let raster = grid.raster_index(grid.tile_of_direction(dir));
        let class = class_map[raster as usize];
        class_w[class_slot(class)] += w;

        for (i, &k) in ri_candidates.iter().enumerate() {
            if (raster + total_tiles - ri_offsets[i]) % total_tiles < k {
                ri_w[i] += w;
            }
        }

        let df = dir.dot(predicted_frustum.f);
        let needed = if df > 0.0 {
            let az = dir.dot(predicted_frustum.r).atan2(df).to_degrees().abs();
            let el = dir.dot(predicted_frustum.u).atan2(df).to_degrees().abs();
            2.0 * (az - half_h).max(el - half_v).max(0.0)
        } else {
            f64::INFINITY
        };
        if needed <= 0.0 {
            pf_w += w;
        } else {
            for (i, &b) in border_candidates.iter().enumerate() {
                if needed <= b as f64 {
                    border_w[i] += w;
                }
            }
        }
    }

    if total_w <= 0.0 {
        return Err(crate::Error::invalid(
            "viewport produced no weighted samples",
        ));
    }
    Ok(DisplayMeasurement {
        hit: HitRates {
            pf: class_w[1] / total_w,
            pfplus: class_w[2] / total_w,
            ri: class_w[3] / total_w,
            uncoded: class_w[0] / total_w,
        },
        planner_pf: pf_w / total_w,
        planner_border: border_candidates
            .iter()
            .zip(&border_w)
            .map(|(&b, &w)| (b, w / total_w))
            .collect(),
        planner_ri: ri_candidates
            .iter()
            .zip(&ri_w)
            .map(|(&k, &w)| (k, w / total_w))
            .collect(),
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

/// Per-segment tallies that become the planning inputs for the segment after
/// next. Hit fractions are averaged per display; lapse samples are the
/// reference lapses the sender actually charged.
#[derive(Debug, Clone, Default)]
pub struct SegmentAccumulator {
    pub displays: u32,
    pub encoded: u32,
    hit_sum: [f64; 4],
    planner_pf_sum: f64,
    border_sum: BTreeMap<u32, f64>,
    ri_sum: BTreeMap<u32, f64>,
    pub lapse_samples: Vec<u32>,
}

/// Snapshot of a finished segment in planner terms.
#[derive(Debug, Clone)]
pub struct SegmentStats {
    /// Displayed frames over encoded frames.
    pub gamma: f64,
    pub alpha_pf: f64,
    pub alpha_border: BTreeMap<u32, f64>,
    pub alpha_ri: BTreeMap<u32, f64>,
    pub lapse_samples: Vec<u32>,
    pub mean_hit: HitRates,
    pub displays: u32,
}

impl SegmentAccumulator {
    pub fn add_display(&mut self, m: &DisplayMeasurement) {
        self.displays += 1;
        self.hit_sum[0] += m.hit.pf;
        self.hit_sum[1] += m.hit.pfplus;
        self.hit_sum[2] += m.hit.ri;
        self.hit_sum[3] += m.hit.uncoded;
        self.planner_pf_sum += m.planner_pf;
        for (&b, &v) in &m.planner_border {
            *self.border_sum.entry(b).or_insert(0.0) += v;
        }
        for (&k, &v) in &m.planner_ri {
            *self.ri_sum.entry(k).or_insert(0.0) += v;
        }
    }

    pub fn stats(&self) -> SegmentStats {
        let n = self.displays.max(1) as f64;
        let gamma = if self.encoded == 0 {
            0.0
        } else {
            (self.displays as f64 / self.encoded as f64).min(1.0)
        };
        SegmentStats {
            gamma,
            alpha_pf: self.planner_pf_sum / n,
            alpha_border: self
                .border_sum
                .iter()
                .map(|(&b, &v)| (b, v / n))
                .collect(),
            alpha_ri: self.ri_sum.iter().map(|(&k, &v)| (k, v / n)).collect(),
            lapse_samples: self.lapse_samples.clone(),
            mean_hit: HitRates {
                pf: self.hit_sum[0] / n,
                pfplus: self.hit_sum[1] / n,
                ri: self.hit_sum[2] / n,
                uncoded: self.hit_sum[3] / n,
            },
            displays: self.displays,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_layout;

    fn grid() -> ErpGrid {
        ErpGrid::new(8192, 4096, 256).unwrap()
    }

    #[test]
    fn test_perfect_prediction_measures_all_pf() {
        let g = grid();
        let pose = FovPose::from_yaw_pitch(20.0, -10.0, 90.0, 90.0);
        let layout = build_layout(&pose, 30.0, 0, 7, &g).unwrap();
        let m = measure_display(&pose, pose.dir, &layout, 7, &g, &[10, 50], &[4, 64], 64)
            .unwrap();
        assert!(m.hit.pf > 1.0 - 1e-12);
        assert!((m.planner_pf - 1.0).abs() < 1e-12);
        assert!(m.planner_border.values().all(|&v| v == 0.0));
    }

    #[test]
    fn test_border_counterfactual_is_monotone_and_brackets_miss() {
        let g = grid();
        let predicted = FovPose::from_yaw_pitch(0.0, 0.0, 90.0, 90.0);
        let actual = FovPose::from_yaw_pitch(20.0, 0.0, 90.0, 90.0);
        let layout = build_layout(&predicted, 0.0, 0, 3, &g).unwrap();
        let m = measure_display(
            &actual,
            predicted.dir,
            &layout,
            3,
            &g,
            &[10, 20, 30, 40, 50],
            &[],
            96,
        )
        .unwrap();
        // A 20-degree yaw shift means points up to 20 degrees past the
        // predicted half-width are viewed; the needed border is twice the
        // excess, so 40 degrees recovers everything the 10-degree one misses.
        let b10 = m.planner_border[&10];
        let b40 = m.planner_border[&40];
        let b50 = m.planner_border[&50];
        assert!(b10 > 0.0);
        assert!(b10 < b40);
        assert!((b40 - b50).abs() < 1e-12, "40 degrees already catches all");
        assert!((m.planner_pf + b50 - 1.0).abs() < 1e-9);
        let mut prev = 0.0;
        for b in [10, 20, 30, 40, 50] {
            assert!(m.planner_border[&b] >= prev);
            prev = m.planner_border[&b];
        }
    }

    #[test]
    fn test_ri_candidate_fraction_tracks_block_size() {
        let g = grid();
        let pose = FovPose::from_yaw_pitch(0.0, 0.0, 90.0, 90.0);
        let layout = build_layout(&pose, 0.0, 0, 100, &g).unwrap();
        let m = measure_display(
            &pose,
            pose.dir,
            &layout,
            100,
            &g,
            &[],
            &[4, 8, 16, 32, 64],
            96,
        )
        .unwrap();
        let mut prev = -1.0;
        for k in [4, 8, 16, 32, 64] {
            let v = m.planner_ri[&k];
            assert!((0.0..=1.0).contains(&v));
            assert!(v >= prev, "larger blocks can only intersect more");
            prev = v;
        }
        // The whole-sphere block fraction of a 90x90 viewport at 64 tiles is
        // 12.5% of the sphere but the viewport sees a varying share; just
        // check it is nontrivial when the raster interval sweeps the equator.
        assert!(m.planner_ri[&64] > 0.0);
    }

    #[test]
    fn test_accumulator_averages_per_display() {
        let g = grid();
        let predicted = FovPose::from_yaw_pitch(0.0, 0.0, 90.0, 90.0);
        let hit_pose = predicted;
        let miss_pose = FovPose::from_yaw_pitch(140.0, 0.0, 90.0, 90.0);
        let layout = build_layout(&predicted, 0.0, 0, 11, &g).unwrap();
        let mut acc = SegmentAccumulator::default();
        acc.encoded = 4;
        let m_hit =
            measure_display(&hit_pose, predicted.dir, &layout, 11, &g, &[10], &[4], 64).unwrap();
        let m_miss =
            measure_display(&miss_pose, predicted.dir, &layout, 11, &g, &[10], &[4], 64).unwrap();
        acc.add_display(&m_hit);
        acc.add_display(&m_miss);
        let stats = acc.stats();
        assert_eq!(stats.displays, 2);
        assert!((stats.gamma - 0.5).abs() < 1e-12);
        let expect = (m_hit.planner_pf + m_miss.planner_pf) / 2.0;
        assert!((stats.alpha_pf - expect).abs() < 1e-12);
        assert!(stats.alpha_pf < 0.75, "the full miss drags the mean down");
    }
}
