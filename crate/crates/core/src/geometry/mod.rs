//! Spherical geometry for equirectangular (ERP) tiling and viewports.
//!
//! The frame is an ERP image cut into square tiles. Latitude runs from +90
//! degrees at pixel row 0 to -90 at the bottom; the viewing direction
//! convention is x forward, y left, z up, so yaw rotates about z (positive
//! turns left) and pitch about y (positive looks up). Longitude 0 maps to the
//! horizontal center of the frame and columns grow to the viewer's right.

mod coverage;
mod frustum;
mod hitrate;

pub use coverage::{border_region, tiles_covering_fov};
pub use frustum::fov_sample_directions;
pub use hitrate::{hit_rates, viewport_overlap, HitRates};

pub(crate) use frustum::Frustum;

use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// Square degrees per steradian.
pub const DEG2_PER_SR: f64 = (180.0 / std::f64::consts::PI) * (180.0 / std::f64::consts::PI);

/// Spherical area of the full sphere in square degrees (4 pi steradians).
pub const FULL_SPHERE_DEG2: f64 = 4.0 * std::f64::consts::PI * DEG2_PER_SR;

/// Minimal 3-vector for directions on the unit sphere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalized(self) -> Vec3 {
        let n = self.norm();
        Vec3::new(self.x / n, self.y / n, self.z / n)
    }

    pub fn scale(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }

    pub fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }

    pub fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }

    /// Unit vector for a yaw/pitch pair in degrees.
    pub fn from_yaw_pitch(yaw_deg: f64, pitch_deg: f64) -> Vec3 {
        let yaw = yaw_deg.to_radians();
        let pitch = pitch_deg.to_radians();
        Vec3::new(
            pitch.cos() * yaw.cos(),
            pitch.cos() * yaw.sin(),
            pitch.sin(),
        )
    }

    /// Longitude (yaw) in degrees, in (-180, 180].
    pub fn lon_deg(self) -> f64 {
        self.y.atan2(self.x).to_degrees()
    }

    /// Latitude (pitch) in degrees, in [-90, 90].
    pub fn lat_deg(self) -> f64 {
        self.z.clamp(-1.0, 1.0).asin().to_degrees()
    }

    /// Great-circle angle to another unit vector, degrees.
    /// Angle between unit vectors. atan2 of the cross and dot products is
    /// accurate down to zero, where acos of the dot product loses about
    /// eight digits.
    pub fn angle_deg(self, o: Vec3) -> f64 {
        self.cross(o).norm().atan2(self.dot(o)).to_degrees()
    }
}

/// One tile of the ERP grid, addressed by row (0 at the north pole edge)
/// and column (0 at the left frame edge).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TileId {
    pub row: u16,
    pub col: u16,
}

impl TileId {
    pub const fn new(row: u16, col: u16) -> Self {
        TileId { row, col }
    }
}

/// ERP frame dimensions and tiling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErpGrid {
    width_px: u32,
    height_px: u32,
    tile_px: u32,
}

impl ErpGrid {
    /// A grid is valid when both frame dimensions are positive multiples of
    /// the tile size and the frame has the 2:1 ERP aspect ratio.
    pub fn new(width_px: u32, height_px: u32, tile_px: u32) -> Result<ErpGrid> {
        if width_px == 0 || height_px == 0 || tile_px == 0 {
            return Err(Error::invalid("grid dimensions must be positive"));
        }
        if width_px % tile_px != 0 || height_px % tile_px != 0 {
            return Err(Error::invalid(format!(
                "tile size {} does not divide frame {}x{}",
                tile_px, width_px, height_px
            )));
        }
        if width_px != 2 * height_px {
            return Err(Error::invalid(format!(
                "ERP frame must be 2:1, got {}x{}",
                width_px, height_px
            )));
        }
        Ok(ErpGrid {
            width_px,
            height_px,
            tile_px,
        })
    }

    pub fn width_px(&self) -> u32 {
        self.width_px
    }

    pub fn height_px(&self) -> u32 {
        self.height_px
    }

    pub fn tile_px(&self) -> u32 {
        self.tile_px
    }

    pub fn cols(&self) -> u32 {
        self.width_px / self.tile_px
    }

    pub fn rows(&self) -> u32 {
        self.height_px / self.tile_px
    }

    pub fn tile_count(&self) -> u32 {
        self.cols() * self.rows()
    }

    /// WS-PSNR latitude weight of a pixel row: cos((row/m - 1/2) * pi) for a
    /// frame of m rows. Row 0 is the north pole edge (weight 0), the weight
    /// peaks at the equator.
    pub fn ws_weight(&self, row_px: u32) -> Result<f64> {
        if row_px >= self.height_px {
            return Err(Error::invalid(format!(
                "row {} outside frame of {} rows",
                row_px, self.height_px
            )));
        }
        let m = self.height_px as f64;
        Ok(((row_px as f64 / m - 0.5) * std::f64::consts::PI).cos())
    }

    /// Raster index of a tile (row-major).
    pub fn raster_index(&self, tile: TileId) -> u32 {
        tile.row as u32 * self.cols() + tile.col as u32
    }

    pub fn tile_at_raster(&self, index: u32) -> TileId {
        TileId::new(
            (index / self.cols()) as u16,
            (index % self.cols()) as u16,
        )
    }

    /// Continuous pixel coordinates (row, col) of a unit direction. Row 0 is
    /// latitude +90, column grows toward the viewer's right (negative y),
    /// and longitude 0 (the +x axis) lands at the horizontal frame center.
    pub fn pixel_of_direction(&self, d: Vec3) -> (f64, f64) {
        let lat = d.lat_deg();
        let lon = d.lon_deg();
        let v = (90.0 - lat) / 180.0;
        let mut u = (180.0 - lon) / 360.0;
        if u >= 1.0 {
            u -= 1.0;
        }
        (v * self.height_px as f64, u * self.width_px as f64)
    }

    /// Tile containing a unit direction.
    pub fn tile_of_direction(&self, d: Vec3) -> TileId {
        let (row_px, col_px) = self.pixel_of_direction(d);
        let row = ((row_px / self.tile_px as f64) as i64).clamp(0, self.rows() as i64 - 1);
        let col = ((col_px / self.tile_px as f64) as i64).rem_euclid(self.cols() as i64);
        TileId::new(row as u16, col as u16)
    }

    /// Latitude band of a tile row as (high, low) degrees; high edge row 0 is +90.
    pub fn row_lat_band_deg(&self, row: u16) -> (f64, f64) {
        let rows = self.rows() as f64;
        let hi = 90.0 - 180.0 * row as f64 / rows;
        let lo = 90.0 - 180.0 * (row as f64 + 1.0) / rows;
        (hi, lo)
    }

    /// Longitude interval of a tile column as (low, high) degrees within
    /// [-180, 180]; column 0 starts at longitude +180.
    pub fn col_lon_range_deg(&self, col: u16) -> (f64, f64) {
        let cols = self.cols() as f64;
        let hi = 180.0 - 360.0 * col as f64 / cols;
        let lo = 180.0 - 360.0 * (col as f64 + 1.0) / cols;
        (lo, hi)
    }

    /// Spherical area of one tile in the given row, square degrees.
    pub fn tile_area_deg2(&self, row: u16) -> f64 {
        let (hi, lo) = self.row_lat_band_deg(row);
        let strip = hi.to_radians().sin() - lo.to_radians().sin();
        let lon_width = 2.0 * std::f64::consts::PI / self.cols() as f64;
        strip * lon_width * DEG2_PER_SR
    }

    /// Total spherical area of a tile set, square degrees.
    pub fn area_deg2_of(&self, tiles: &BTreeSet<TileId>) -> f64 {
        tiles.iter().map(|t| self.tile_area_deg2(t.row)).sum()
    }
}

/// A viewport: view direction plus rectilinear FoV extents in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FovPose {
    pub dir: Vec3,
    pub h_deg: f64,
    pub v_deg: f64,
}

impl FovPose {
    pub fn new(dir: Vec3, h_deg: f64, v_deg: f64) -> FovPose {
        FovPose {
            dir: dir.normalized(),
            h_deg,
            v_deg,
        }
    }

    pub fn from_yaw_pitch(yaw_deg: f64, pitch_deg: f64, h_deg: f64, v_deg: f64) -> FovPose {
        FovPose {
            dir: Vec3::from_yaw_pitch(yaw_deg, pitch_deg),
            h_deg,
            v_deg,
        }
    }

    /// Same direction with extents grown by `border_deg` in both axes
    /// (half on each side).
    pub fn enlarged(&self, border_deg: f64) -> FovPose {
        FovPose {
            dir: self.dir,
            h_deg: self.h_deg + border_deg,
            v_deg: self.v_deg + border_deg,
        }
    }
}

/// Region classification of one tile within a frame layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionClass {
    Uncoded,
    Pf,
    PfPlus,
    Ri,
}

/// Per-frame coding layout: the disjoint PF / PF+ / RI tile sets, their
/// spherical areas, and the average non-RI fractions used by the budget
/// split.
#[derive(Debug, Clone)]
pub struct RegionLayout {
    pub pf: BTreeSet<TileId>,
    pub pfplus: BTreeSet<TileId>,
    pub ri: BTreeSet<TileId>,
    pub a_pf_deg2: f64,
    pub a_pfplus_deg2: f64,
    pub a_ri_deg2: f64,
    /// Fraction of PF tiles expected to stay inter coded, 1 - k / total.
    pub lambda_pf: f64,
    /// Same fraction for PF+ tiles.
    pub lambda_pfplus: f64,
    class_map: Vec<RegionClass>,
}

impl RegionLayout {
    /// Assemble a layout from explicit tile sets. Overlaps are resolved in
    /// favor of RI, then PF, mirroring `build_layout`.
    pub fn from_sets(
        grid: &ErpGrid,
        pf: BTreeSet<TileId>,
        pfplus: BTreeSet<TileId>,
        ri: BTreeSet<TileId>,
    ) -> RegionLayout {
        let pf: BTreeSet<TileId> = pf.difference(&ri).copied().collect();
        let pfplus: BTreeSet<TileId> = pfplus
            .difference(&ri)
            .filter(|t| !pf.contains(t))
            .copied()
            .collect();
        let lambda = 1.0 - ri.len() as f64 / grid.tile_count() as f64;
        let mut class_map = vec![RegionClass::Uncoded; grid.tile_count() as usize];
        for t in &pf {
            class_map[grid.raster_index(*t) as usize] = RegionClass::Pf;
        }
        for t in &pfplus {
            class_map[grid.raster_index(*t) as usize] = RegionClass::PfPlus;
        }
        for t in &ri {
            class_map[grid.raster_index(*t) as usize] = RegionClass::Ri;
        }
        RegionLayout {
            a_pf_deg2: grid.area_deg2_of(&pf),
            a_pfplus_deg2: grid.area_deg2_of(&pfplus),
            a_ri_deg2: grid.area_deg2_of(&ri),
            pf,
            pfplus,
            ri,
            lambda_pf: lambda,
            lambda_pfplus: lambda,
            class_map,
        }
    }

    pub fn class_of(&self, grid: &ErpGrid, tile: TileId) -> RegionClass {
        self.class_map[grid.raster_index(tile) as usize]
    }

    pub(crate) fn class_map(&self) -> &[RegionClass] {
        &self.class_map
    }
}

/// Tiles of the rotating intra block for a frame: a contiguous raster-order
/// run of `ri_tile_count` tiles starting at offset (frame * count) mod total,
/// wrapping past the end of the frame.
pub fn ri_tiles_at(frame_index: u64, ri_tile_count: u32, grid: &ErpGrid) -> Result<Vec<TileId>> {
    let total = grid.tile_count();
    if ri_tile_count == 0 || ri_tile_count > total {
        return Err(Error::invalid(format!(
            "rotating intra block of {} tiles in a {}-tile grid",
            ri_tile_count, total
        )));
    }
    let offset = ((frame_index as u128 * ri_tile_count as u128) % total as u128) as u32;
    Ok((0..ri_tile_count)
        .map(|i| grid.tile_at_raster((offset + i) % total))
        .collect())
}

/// Number of frames for the rotating intra block to refresh every tile once.
pub fn ri_refresh_period(ri_tile_count: u32, grid: &ErpGrid) -> u32 {
    grid.tile_count().div_ceil(ri_tile_count)
}

/// Build the disjoint region layout for one frame. RI tiles that fall inside
/// the predicted FoV or its border stay RI; `ri_tile_count` 0 disables the
/// rotating block entirely.
pub fn build_layout(
    predicted: &FovPose,
    border_deg: f64,
    ri_tile_count: u32,
    frame_index: u64,
    grid: &ErpGrid,
) -> Result<RegionLayout> {
    if border_deg < 0.0 {
        return Err(Error::invalid("border must be nonnegative"));
    }
    let fov = tiles_covering_fov(predicted, grid)?;
    let border = border_region(predicted, border_deg, grid)?;
    let ri: BTreeSet<TileId> = if ri_tile_count == 0 {
        BTreeSet::new()
    } else {
        ri_tiles_at(frame_index, ri_tile_count, grid)?.into_iter().collect()
    };

    let pf: BTreeSet<TileId> = fov.difference(&ri).copied().collect();
    let pfplus: BTreeSet<TileId> = border.difference(&ri).copied().collect();

    let total = grid.tile_count() as f64;
    let lambda = 1.0 - ri_tile_count as f64 / total;

    let mut class_map = vec![RegionClass::Uncoded; grid.tile_count() as usize];
    for t in &pf {
        class_map[grid.raster_index(*t) as usize] = RegionClass::Pf;
    }
    for t in &pfplus {
        class_map[grid.raster_index(*t) as usize] = RegionClass::PfPlus;
    }
    for t in &ri {
        class_map[grid.raster_index(*t) as usize] = RegionClass::Ri;
    }

    Ok(RegionLayout {
        a_pf_deg2: grid.area_deg2_of(&pf),
        a_pfplus_deg2: grid.area_deg2_of(&pfplus),
        a_ri_deg2: grid.area_deg2_of(&ri),
        pf,
        pfplus,
        ri,
        lambda_pf: lambda,
        lambda_pfplus: lambda,
        class_map,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_8k() -> ErpGrid {
        ErpGrid::new(8192, 4096, 256).unwrap()
    }

    #[test]
    fn test_grid_dimensions() {
        let g = grid_8k();
        assert_eq!(g.cols(), 32);
        assert_eq!(g.rows(), 16);
        assert_eq!(g.tile_count(), 512);
    }

    #[test]
    fn test_grid_rejects_bad_dimensions() {
        assert!(ErpGrid::new(8192, 4096, 100).is_err());
        assert!(ErpGrid::new(8192, 2048, 256).is_err());
        assert!(ErpGrid::new(0, 0, 256).is_err());
    }

    #[test]
    fn test_ws_weight_equator_and_pole() {
        let g = grid_8k();
        assert_eq!(g.ws_weight(2048).unwrap(), 1.0);
        assert!(g.ws_weight(0).unwrap().abs() < 1e-12);
        let quarter = g.ws_weight(1024).unwrap();
        assert!((quarter - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert!(g.ws_weight(4096).is_err());
    }

    #[test]
    fn test_ws_weight_symmetry_up_to_half_pixel() {
        let g = grid_8k();
        let m = g.height_px() as f64;
        // The raw row/m convention is symmetric only up to one pixel's worth
        // of latitude; pairs (row, m-1-row) agree within sin(pi/m).
        let bound = (std::f64::consts::PI / m).sin();
        for row in [1u32, 100, 777, 2000] {
            let a = g.ws_weight(row).unwrap();
            let b = g.ws_weight(g.height_px() - 1 - row).unwrap();
            assert!((a - b).abs() <= bound, "row {}: {} vs {}", row, a, b);
        }
    }

    #[test]
    fn test_tile_areas_sum_to_sphere() {
        let g = grid_8k();
        let total: f64 = (0..g.rows())
            .map(|r| g.tile_area_deg2(r as u16) * g.cols() as f64)
            .sum();
        assert!((total - FULL_SPHERE_DEG2).abs() < 1e-6 * FULL_SPHERE_DEG2);
    }

    #[test]
    fn test_direction_to_tile_centers() {
        let g = grid_8k();
        // Forward (lon 0, lat 0) lands at the frame center.
        let t = g.tile_of_direction(Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(t, TileId::new(8, 16));
        // Straight up is in the top row.
        let t = g.tile_of_direction(Vec3::new(0.0, 0.0, 1.0));
        assert_eq!(t.row, 0);
        // Straight down in the bottom row.
        let t = g.tile_of_direction(Vec3::new(0.0, 0.0, -1.0));
        assert_eq!(t.row, 15);
    }

    #[test]
    fn test_yaw_pitch_convention() {
        // Positive yaw turns left (+y), positive pitch looks up (+z).
        let v = Vec3::from_yaw_pitch(90.0, 0.0);
        assert!((v.y - 1.0).abs() < 1e-12);
        let v = Vec3::from_yaw_pitch(0.0, 90.0);
        assert!((v.z - 1.0).abs() < 1e-12);
        let v = Vec3::from_yaw_pitch(35.0, -20.0);
        assert!((v.lon_deg() - 35.0).abs() < 1e-9);
        assert!((v.lat_deg() + 20.0).abs() < 1e-9);
    }

    #[test]
    fn test_ri_block_wraps_and_refreshes() {
        let g = grid_8k();
        let tiles = ri_tiles_at(0, 4, &g).unwrap();
        assert_eq!(tiles.len(), 4);
        assert_eq!(tiles[0], TileId::new(0, 0));
        // One full rotation after 512/4 frames.
        assert_eq!(ri_refresh_period(4, &g), 128);
        let again = ri_tiles_at(128, 4, &g).unwrap();
        assert_eq!(tiles, again);
        // The block wraps through the raster end.
        let near_end = ri_tiles_at(127, 4, &g).unwrap();
        assert_eq!(g.raster_index(near_end[0]), 508);
        assert_eq!(g.raster_index(near_end[3]), 511);
    }

    #[test]
    fn test_ri_union_covers_all_tiles() {
        let g = grid_8k();
        for k in [4u32, 8, 16, 32, 64] {
            let period = ri_refresh_period(k, &g);
            let mut seen = BTreeSet::new();
            for f in 0..period as u64 {
                for t in ri_tiles_at(f, k, &g).unwrap() {
                    // Each tile refreshed exactly once per rotation.
                    assert!(seen.insert(t), "tile revisited within period, k={}", k);
                }
            }
            assert_eq!(seen.len(), 512, "k={}", k);
        }
    }

    #[test]
    fn test_ri_rejects_bad_count() {
        let g = grid_8k();
        assert!(ri_tiles_at(0, 0, &g).is_err());
        assert!(ri_tiles_at(0, 513, &g).is_err());
    }

    #[test]
    fn test_layout_disjoint_and_disabled_ri() {
        let g = grid_8k();
        let pose = FovPose::from_yaw_pitch(0.0, 0.0, 90.0, 90.0);
        let layout = build_layout(&pose, 20.0, 4, 7, &g).unwrap();
        let union: BTreeSet<_> = layout
            .pf
            .union(&layout.pfplus)
            .copied()
            .collect::<BTreeSet<_>>()
            .union(&layout.ri)
            .copied()
            .collect();
        assert_eq!(
            union.len(),
            layout.pf.len() + layout.pfplus.len() + layout.ri.len()
        );
        assert!((layout.lambda_pf - (1.0 - 4.0 / 512.0)).abs() < 1e-12);

        let no_ri = build_layout(&pose, 20.0, 0, 7, &g).unwrap();
        let fov = tiles_covering_fov(&pose, &g).unwrap();
        assert_eq!(no_ri.pf, fov);
        assert!(no_ri.ri.is_empty());
        assert_eq!(no_ri.lambda_pf, 1.0);
    }
}
