//! Rectilinear viewport frusta on the unit sphere.
//!
//! A viewport with extents under 180 degrees is the intersection of four
//! half-spaces whose boundary planes pass through the origin (one per
//! viewport edge) with the forward hemisphere. Directions are sampled on a
//! pixel-center grid in the tangent plane; each sample carries the solid
//! angle of its grid cell so that weighted sums converge to true spherical
//! measures.

use super::{FovPose, Vec3};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub(crate) struct Frustum {
    pub f: Vec3,
    pub r: Vec3,
    pub u: Vec3,
    pub tan_h: f64,
    pub tan_v: f64,
    /// Inward unit normals of the four edge planes (right, left, top, bottom).
    pub normals: [Vec3; 4],
    /// True when the extents cover the whole sphere (360x180).
    pub full_sphere: bool,
}

impl Frustum {
    pub fn new(pose: &FovPose) -> Result<Frustum> {
        if pose.h_deg <= 0.0 || pose.v_deg <= 0.0 {
            return Err(Error::invalid(format!(
                "viewport extents must be positive, got {}x{}",
                pose.h_deg, pose.v_deg
            )));
        }
        let full_h = pose.h_deg >= 180.0;
        let full_v = pose.v_deg >= 180.0;
        if full_h != full_v {
            return Err(Error::invalid(format!(
                "viewport {}x{} mixes a full axis with a partial one",
                pose.h_deg, pose.v_deg
            )));
        }
        let f = pose.dir.normalized();
        // Camera frame: right is f x up-axis, falling back to a fixed
        // reference when looking straight along z.
        let z = Vec3::new(0.0, 0.0, 1.0);
        let cross = f.cross(z);
        let r = if cross.norm() < 1e-12 {
            f.cross(Vec3::new(1.0, 0.0, 0.0)).normalized()
        } else {
            cross.normalized()
        };
        let u = r.cross(f);

        if full_h {
            return Ok(Frustum {
                f,
                r,
                u,
                tan_h: f64::INFINITY,
                tan_v: f64::INFINITY,
                normals: [z; 4],
                full_sphere: true,
            });
        }

        let tan_h = (pose.h_deg / 2.0).to_radians().tan();
        let tan_v = (pose.v_deg / 2.0).to_radians().tan();
        let edge = |span_a: Vec3, span_b: Vec3| -> Vec3 {
            let n = span_a.cross(span_b).normalized();
            if n.dot(f) < 0.0 {
                n.scale(-1.0)
            } else {
                n
            }
        };
        let normals = [
            edge(f.add(r.scale(tan_h)), u),
            edge(f.sub(r.scale(tan_h)), u),
            edge(f.add(u.scale(tan_v)), r),
            edge(f.sub(u.scale(tan_v)), r),
        ];
        Ok(Frustum {
            f,
            r,
            u,
            tan_h,
            tan_v,
            normals,
            full_sphere: false,
        })
    }

    /// Closed membership test.
    pub fn contains(&self, d: Vec3) -> bool {
        if self.full_sphere {
            return true;
        }
        if d.dot(self.f) <= 0.0 {
            return false;
        }
        self.normals.iter().all(|n| d.dot(*n) >= 0.0)
    }

    /// Strict membership with a small tolerance, used to decide whether a
    /// point sits inside the viewport with room around it.
    pub fn contains_strictly(&self, d: Vec3, eps: f64) -> bool {
        if self.full_sphere {
            return true;
        }
        if d.dot(self.f) <= eps {
            return false;
        }
        self.normals.iter().all(|n| d.dot(*n) > eps)
    }

    /// Direction through tangent-plane coordinates (a, b) in [-1, 1]^2.
    pub fn dir_at(&self, a: f64, b: f64) -> Vec3 {
        self.f
            .add(self.r.scale(a * self.tan_h))
            .add(self.u.scale(b * self.tan_v))
            .normalized()
    }

    /// Corner directions (a, b) = (+-1, +-1).
    pub fn corners(&self) -> [Vec3; 4] {
        [
            self.dir_at(1.0, 1.0),
            self.dir_at(1.0, -1.0),
            self.dir_at(-1.0, 1.0),
            self.dir_at(-1.0, -1.0),
        ]
    }

    /// Largest angle from the center to any point of the viewport, radians.
    pub fn circumradius_rad(&self) -> f64 {
        if self.full_sphere {
            return std::f64::consts::PI;
        }
        self.corners()
            .iter()
            .map(|c| c.dot(self.f).clamp(-1.0, 1.0).acos())
            .fold(0.0, f64::max)
    }

    /// Deterministic pixel-center sample grid with per-sample solid angle
    /// weights in steradians. Weighted sums over the grid approximate
    /// integrals over the viewport.
    pub fn weighted_samples(&self, per_axis: u32) -> WeightedSamples<'_> {
        WeightedSamples {
            frustum: self,
            per_axis: per_axis.max(1),
            next: 0,
        }
    }
}

pub(crate) struct WeightedSamples<'a> {
    frustum: &'a Frustum,
    per_axis: u32,
    next: u64,
}

impl Iterator for WeightedSamples<'_> {
    type Item = (Vec3, f64);

    fn next(&mut self) -> Option<(Vec3, f64)> {
        let n = self.per_axis as u64;
        if self.next >= n * n || self.frustum.full_sphere {
            return None;
        }
        let i = self.next / n;
        let j = self.next % n;
        self.next += 1;
        let a = 2.0 * (j as f64 + 0.5) / n as f64 - 1.0;
        let b = 2.0 * (i as f64 + 0.5) / n as f64 - 1.0;
        let fr = self.frustum;
        let x = a * fr.tan_h;
        let y = b * fr.tan_v;
        // Solid angle of the tangent-plane cell around this ray.
        let cell = (2.0 * fr.tan_h / self.per_axis as f64) * (2.0 * fr.tan_v / self.per_axis as f64);
        let w = cell / (1.0 + x * x + y * y).powf(1.5);
        Some((fr.dir_at(a, b), w))
    }
}

/// Deterministic quasi-uniform directions inside a viewport. One sample
/// returns the center direction; larger counts come from a pixel-center grid
/// of side ceil(sqrt(n)) read in row-major order.
pub fn fov_sample_directions(pose: &FovPose, n_samples: u32) -> Result<Vec<Vec3>> {
    if n_samples == 0 {
        return Err(Error::invalid("sample count must be positive"));
    }
    let frustum = Frustum::new(pose)?;
    if frustum.full_sphere {
        return Err(Error::invalid(
            "cannot sample a full-sphere viewport on a tangent grid",
        ));
    }
    if n_samples == 1 {
        return Ok(vec![frustum.f]);
    }
    let side = (n_samples as f64).sqrt().ceil() as u32;
    let mut out = Vec::with_capacity(n_samples as usize);
    'outer: for i in 0..side {
        for j in 0..side {
            if out.len() == n_samples as usize {
                break 'outer;
            }
            let a = 2.0 * (j as f64 + 0.5) / side as f64 - 1.0;
            let b = 2.0 * (i as f64 + 0.5) / side as f64 - 1.0;
            out.push(frustum.dir_at(a, b));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::FovPose;

    #[test]
    fn test_single_sample_is_center() {
        let pose = FovPose::from_yaw_pitch(30.0, -10.0, 90.0, 90.0);
        let dirs = fov_sample_directions(&pose, 1).unwrap();
        assert_eq!(dirs.len(), 1);
        assert!(dirs[0].angle_deg(pose.dir) < 1e-9);
    }

    #[test]
    fn test_samples_stay_inside_viewport() {
        let pose = FovPose::from_yaw_pitch(120.0, 40.0, 90.0, 90.0);
        let frustum = Frustum::new(&pose).unwrap();
        let max_angle = 45.0_f64 * std::f64::consts::SQRT_2;
        for d in fov_sample_directions(&pose, 10_000).unwrap() {
            assert!(frustum.contains(d));
            assert!(d.angle_deg(pose.dir) <= max_angle + 1e-9);
        }
    }

    #[test]
    fn test_membership_matches_tangent_coordinates() {
        let pose = FovPose::from_yaw_pitch(-45.0, 20.0, 100.0, 80.0);
        let frustum = Frustum::new(&pose).unwrap();
        // Inside: center and a point near a corner.
        assert!(frustum.contains(pose.dir));
        assert!(frustum.contains(frustum.dir_at(0.99, -0.99)));
        // Outside: past an edge, and the antipode.
        assert!(!frustum.contains(frustum.dir_at(1.0, 0.0).add(frustum.r.scale(0.05)).normalized()));
        assert!(!frustum.contains(pose.dir.scale(-1.0)));
    }

    #[test]
    fn test_pole_pose_gets_a_valid_frame() {
        let pose = FovPose::from_yaw_pitch(0.0, 90.0, 90.0, 90.0);
        let frustum = Frustum::new(&pose).unwrap();
        assert!((frustum.r.norm() - 1.0).abs() < 1e-12);
        assert!(frustum.r.dot(frustum.f).abs() < 1e-12);
        assert!(frustum.contains(Vec3::new(0.0, 0.0, 1.0)));
    }

    #[test]
    fn test_rejects_degenerate_extents() {
        assert!(Frustum::new(&FovPose::from_yaw_pitch(0.0, 0.0, 0.0, 90.0)).is_err());
        assert!(Frustum::new(&FovPose::from_yaw_pitch(0.0, 0.0, 360.0, 90.0)).is_err());
        assert!(Frustum::new(&FovPose::from_yaw_pitch(0.0, 0.0, 360.0, 180.0)).is_ok());
    }

    #[test]
    fn test_sample_weights_integrate_viewport_area() {
        // Quadrature over the sample grid must recover the analytic solid
        // angle of the square frustum, 4 asin(sin(h/2) sin(v/2)).
        let pose = FovPose::from_yaw_pitch(10.0, 25.0, 90.0, 90.0);
        let frustum = Frustum::new(&pose).unwrap();
        let total: f64 = frustum.weighted_samples(100).map(|(_, w)| w).sum();
        let half = 45.0_f64.to_radians();
        let analytic = 4.0 * (half.sin() * half.sin()).asin();
        assert!(
            (total - analytic).abs() / analytic < 0.01,
            "quadrature {} vs analytic {}",
            total,
            analytic
        );
    }
}
