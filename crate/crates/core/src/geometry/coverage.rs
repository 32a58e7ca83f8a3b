//! Tile coverage of a viewport on the ERP grid.
//!
//! A tile belongs to the covering set exactly when its footprint overlaps
//! the viewport with positive spherical area. The test is geometric rather
//! than sampled: a tile overlaps the frustum iff one of its corners lies
//! strictly inside, or the frustum center falls inside the tile, or the
//! frustum reaches across one of the tile's edges. Edge reach is evaluated
//! on edge lines inset a hair into the tile so that contact along a shared
//! boundary line (zero area) does not count as coverage.
//!
//! Along a parallel (fixed latitude) every frustum plane constraint becomes
//! A cos(lon) + B sin(lon) + C >= 0, and along a meridian it becomes
//! P cos(lat) + Q sin(lat) >= 0, so the feasible part of each edge is an
//! exact intersection of circular arcs.

use super::{ErpGrid, FovPose, Frustum, TileId, Vec3};
use crate::Result;
use std::collections::BTreeSet;

/// Inset applied to tile edges before the reach test, radians. Overlaps
/// shallower than this (about 6e-6 degrees) are treated as zero-area.
const EDGE_INSET: f64 = 1e-7;

/// Minimum total feasible arc length for an edge to count as crossed.
const MIN_ARC: f64 = 1e-9;

/// Slack added to the angular prune radius, radians.
const PRUNE_MARGIN: f64 = 0.02;

/// Tiles whose footprint overlaps the viewport with positive area.
pub fn tiles_covering_fov(pose: &FovPose, grid: &ErpGrid) -> Result<BTreeSet<TileId>> {
    let frustum = Frustum::new(pose)?;
    Ok(covering(&frustum, grid))
}

/// Tiles added by growing the viewport by `border_deg` (half per side),
/// excluding the viewport's own tiles.
pub fn border_region(pose: &FovPose, border_deg: f64, grid: &ErpGrid) -> Result<BTreeSet<TileId>> {
    if border_deg < 0.0 {
        return Err(crate::Error::invalid("border must be nonnegative"));
    }
    if border_deg == 0.0 {
        return Ok(BTreeSet::new());
    }
    let mut enlarged = pose.enlarged(border_deg);
    // A border can push one axis past 180 degrees while the other stays
    // partial; cap just below so the frustum model still applies.
    if enlarged.h_deg >= 180.0 && enlarged.v_deg < 180.0 {
        enlarged.h_deg = 179.99;
    }
    if enlarged.v_deg >= 180.0 && enlarged.h_deg < 180.0 {
        enlarged.v_deg = 179.99;
    }
    let inner = tiles_covering_fov(pose, grid)?;
    let outer = tiles_covering_fov(&enlarged, grid)?;
    Ok(outer.difference(&inner).copied().collect())
}

pub(crate) fn covering(frustum: &Frustum, grid: &ErpGrid) -> BTreeSet<TileId> {
    let mut out = BTreeSet::new();
    if frustum.full_sphere {
        for row in 0..grid.rows() as u16 {
            for col in 0..grid.cols() as u16 {
                out.insert(TileId::new(row, col));
            }
        }
        return out;
    }

    // The frustum center always sits in a covered tile; this also settles
    // the case of a frustum smaller than one tile.
    out.insert(grid.tile_of_direction(frustum.f));

    // Constraint planes: four viewport edges plus the forward hemisphere.
    let mut planes = [Vec3::new(0.0, 0.0, 0.0); 5];
    planes[..4].copy_from_slice(&frustum.normals);
    planes[4] = frustum.f;

    let circum = frustum.circumradius_rad();
    let rows = grid.rows() as u16;
    let cols = grid.cols() as u16;
    let lon_width = (360.0 / cols as f64).to_radians();

    for row in 0..rows {
        let (lat_hi_deg, lat_lo_deg) = grid.row_lat_band_deg(row);
        let lat_hi = lat_hi_deg.to_radians();
        let lat_lo = lat_lo_deg.to_radians();
        let lat_mid = 0.5 * (lat_hi + lat_lo);

        // Angular radius of a tile in this row, center to farthest corner.
        let tile_radius = {
            let c = dir_of(lat_mid, 0.0);
            let corner_hi = dir_of(lat_hi, lon_width / 2.0);
            let corner_lo = dir_of(lat_lo, lon_width / 2.0);
            c.dot(corner_hi)
                .min(c.dot(corner_lo))
                .clamp(-1.0, 1.0)
                .acos()
        };
        let limit = circum + tile_radius + PRUNE_MARGIN;
        let prune_cos = if limit < std::f64::consts::PI {
            Some(limit.cos())
        } else {
            None
        };

        for col in 0..cols {
            let tile = TileId::new(row, col);
            if out.contains(&tile) {
                continue;
            }
            let (lon_lo_deg, lon_hi_deg) = grid.col_lon_range_deg(col);
            let lon_lo = lon_lo_deg.to_radians();
            let lon_hi = lon_hi_deg.to_radians();

            if let Some(threshold) = prune_cos {
                let center = dir_of(lat_mid, 0.5 * (lon_lo + lon_hi));
                if frustum.f.dot(center) < threshold {
                    continue;
                }
            }

            if tile_overlaps(frustum, &planes, lat_hi, lat_lo, lon_lo, lon_hi) {
                out.insert(tile);
            }
        }
    }
    out
}

fn dir_of(lat: f64, lon: f64) -> Vec3 {
    Vec3::new(lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin())
}

fn tile_overlaps(
    frustum: &Frustum,
    planes: &[Vec3; 5],
    lat_hi: f64,
    lat_lo: f64,
    lon_lo: f64,
    lon_hi: f64,
) -> bool {
    // Any tile corner strictly inside the frustum.
    for &lat in &[lat_hi, lat_lo] {
        for &lon in &[lon_lo, lon_hi] {
            if frustum.contains_strictly(dir_of(lat, lon), 1e-12) {
                return true;
            }
        }
    }

    // Frustum reaching across an edge, tested a hair inside the tile.
    let lat_edges = [lat_hi - EDGE_INSET, lat_lo + EDGE_INSET];
    for &lat in &lat_edges {
        if lat.abs() < std::f64::consts::FRAC_PI_2 - 1e-9
            && parallel_feasible(planes, lat, lon_lo + EDGE_INSET, lon_hi - EDGE_INSET)
        {
            return true;
        }
    }
    let lon_edges = [lon_lo + EDGE_INSET, lon_hi - EDGE_INSET];
    for &lon in &lon_edges {
        if meridian_feasible(planes, lon, lat_lo + EDGE_INSET, lat_hi - EDGE_INSET) {
            return true;
        }
    }
    false
}

/// Does the frustum intersect the parallel at `lat` within [lon_a, lon_b]
/// with positive arc length?
fn parallel_feasible(planes: &[Vec3; 5], lat: f64, lon_a: f64, lon_b: f64) -> bool {
    if lon_b <= lon_a {
        return false;
    }
    let mut segs = vec![(lon_a, lon_b)];
    let (sin_lat, cos_lat) = (lat.sin(), lat.cos());
    for m in planes {
        let a = m.x * cos_lat;
        let b = m.y * cos_lat;
        let c = m.z * sin_lat;
        let r = (a * a + b * b).sqrt();
        if r < 1e-15 {
            if c < 0.0 {
                return false;
            }
            continue;
        }
        let q = -c / r;
        if q <= -1.0 {
            continue;
        }
        if q >= 1.0 {
            return false;
        }
        intersect_arc(&mut segs, b.atan2(a), q.acos());
        if segs.is_empty() {
            return false;
        }
    }
    segs.iter().map(|(a, b)| b - a).sum::<f64>() > MIN_ARC
}

/// Does the frustum intersect the meridian at `lon` within [lat_a, lat_b]
/// with positive arc length?
fn meridian_feasible(planes: &[Vec3; 5], lon: f64, lat_a: f64, lat_b: f64) -> bool {
    if lat_b <= lat_a {
        return false;
    }
    let mut segs = vec![(lat_a, lat_b)];
    let (sin_lon, cos_lon) = (lon.sin(), lon.cos());
    for m in planes {
        let p = m.x * cos_lon + m.y * sin_lon;
        let q = m.z;
        let r = (p * p + q * q).sqrt();
        if r < 1e-15 {
            continue;
        }
        intersect_arc(&mut segs, q.atan2(p), std::f64::consts::FRAC_PI_2);
        if segs.is_empty() {
            return false;
        }
    }
    segs.iter().map(|(a, b)| b - a).sum::<f64>() > MIN_ARC
}

/// Intersect line segments with the circular arc {x : |x - center| <= width
/// (mod 2 pi)}; segments and arc are in radians.
fn intersect_arc(segs: &mut Vec<(f64, f64)>, center: f64, width: f64) {
    use std::f64::consts::TAU;
    let mut out = Vec::with_capacity(segs.len() + 1);
    for &(a, b) in segs.iter() {
        let mid = 0.5 * (a + b);
        let base = center + ((mid - center) / TAU).round() * TAU;
        for k in [-1.0, 0.0, 1.0] {
            let lo = (base + k * TAU - width).max(a);
            let hi = (base + k * TAU + width).min(b);
            if hi > lo {
                out.push((lo, hi));
            }
        }
    }
    *segs = out;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_layout, FovPose};

    fn grid_8k() -> ErpGrid {
        ErpGrid::new(8192, 4096, 256).unwrap()
    }

    #[test]
    fn test_full_sphere_covers_everything() {
        let g = grid_8k();
        let pose = FovPose::from_yaw_pitch(12.0, 34.0, 360.0, 180.0);
        let tiles = tiles_covering_fov(&pose, &g).unwrap();
        assert_eq!(tiles.len(), 512);
    }

    #[test]
    fn test_pole_pose_spans_all_columns() {
        let g = grid_8k();
        let pose = FovPose::from_yaw_pitch(0.0, 90.0, 90.0, 90.0);
        let tiles = tiles_covering_fov(&pose, &g).unwrap();
        for col in 0..32u16 {
            assert!(
                tiles.contains(&TileId::new(0, col)),
                "top row column {} missing at the pole",
                col
            );
            assert!(tiles.contains(&TileId::new(1, col)));
        }
        // Nothing below the frustum's reach (its boundary stays above ~26N).
        assert!(tiles.iter().all(|t| t.row <= 6));
    }

    #[test]
    fn test_equator_pose_is_symmetric() {
        let g = grid_8k();
        let tiles =
            tiles_covering_fov(&FovPose::from_yaw_pitch(0.0, 0.0, 90.0, 90.0), &g).unwrap();
        // Symmetric about the equator and the center meridian.
        for t in &tiles {
            assert!(tiles.contains(&TileId::new(15 - t.row, t.col)));
            assert!(tiles.contains(&TileId::new(t.row, 31 - t.col)));
        }
        // Longitude span is exactly the 8 central columns. The top and
        // bottom edges are great-circle arcs between the corners, bulging
        // from 45 degrees at the corners to atan(sqrt(2)) = 54.74 degrees
        // at the center meridian, so rows 4..11 are touched and row 3
        // (56.25 and up) is not.
        let min_col = tiles.iter().map(|t| t.col).min().unwrap();
        let max_col = tiles.iter().map(|t| t.col).max().unwrap();
        assert_eq!((min_col, max_col), (12, 19));
        let min_row = tiles.iter().map(|t| t.row).min().unwrap();
        let max_row = tiles.iter().map(|t| t.row).max().unwrap();
        assert_eq!((min_row, max_row), (4, 11));
    }

    #[test]
    fn test_zero_border_is_empty() {
        let g = grid_8k();
        let pose = FovPose::from_yaw_pitch(50.0, 10.0, 90.0, 90.0);
        assert!(border_region(&pose, 0.0, &g).unwrap().is_empty());
    }

    #[test]
    fn test_border_grows_with_candidate_size() {
        let g = grid_8k();
        let pose = FovPose::from_yaw_pitch(-30.0, 20.0, 90.0, 90.0);
        let fov = tiles_covering_fov(&pose, &g).unwrap();
        let mut prev_len = 0usize;
        for border in [10.0, 20.0, 30.0, 40.0, 50.0] {
            let b = border_region(&pose, border, &g).unwrap();
            assert!(b.iter().all(|t| !fov.contains(t)));
            // Nested borders: each candidate contains the previous one.
            assert!(b.len() >= prev_len);
            prev_len = b.len();
        }
    }

    #[test]
    fn test_seam_pose_wraps_longitude() {
        let g = grid_8k();
        let pose = FovPose::from_yaw_pitch(180.0, 0.0, 90.0, 90.0);
        let tiles = tiles_covering_fov(&pose, &g).unwrap();
        // The viewport straddles the frame seam: columns at both ends.
        assert!(tiles.iter().any(|t| t.col == 0));
        assert!(tiles.iter().any(|t| t.col == 31));
        let center = g.tile_of_direction(pose.dir);
        assert!(tiles.contains(&center));
    }

    #[test]
    fn test_overlapping_ri_keeps_its_tiles() {
        let g = grid_8k();
        let pose = FovPose::from_yaw_pitch(0.0, 90.0, 90.0, 90.0);
        // Frame 0 puts the rotating block at raster 0..k, inside the polar
        // viewport, so those tiles must move from PF to RI.
        let layout = build_layout(&pose, 10.0, 4, 0, &g).unwrap();
        for i in 0..4u32 {
            let t = g.tile_at_raster(i);
            assert!(layout.ri.contains(&t));
            assert!(!layout.pf.contains(&t));
        }
        assert!(layout.lambda_pf < 1.0);
        assert!((layout.a_ri_deg2 - 4.0 * g.tile_area_deg2(0)).abs() < 1e-9);
    }
}
