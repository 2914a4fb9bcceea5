//! Pinhole projection with depth testing and the point ↔ pixel correspondence.
//!
//! Camera frame convention: x right, y down, z forward. Pixel `(row, col)`
//! is obtained by rounding the continuous image coordinates `(v, u)` to the
//! nearest integer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::Matrix;

/// Points at or closer than this depth (meters) are never visible.
pub const NEAR_PLANE: f64 = 0.01;

/// Depths within this distance are considered tied in the z-buffer.
pub const DEPTH_TIE_TOLERANCE: f64 = 1e-9;

const ORTHONORMAL_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    /// Intrinsics `K`, row-major.
    pub intrinsics: [[f64; 3]; 3],
    /// World-to-camera rigid transform `V`, row-major.
    pub extrinsics: [[f64; 4]; 4],
    pub height: usize,
    pub width: usize,
}

impl Camera {
    pub fn new(
        intrinsics: [[f64; 3]; 3],
        extrinsics: [[f64; 4]; 4],
        height: usize,
        width: usize,
    ) -> Result<Self> {
        let cam = Self {
            intrinsics,
            extrinsics,
            height,
            width,
        };
        cam.validate()?;
        Ok(cam)
    }

    /// Simple intrinsics with square pixels and no skew.
    pub fn pinhole_intrinsics(focal: f64, cx: f64, cy: f64) -> [[f64; 3]; 3] {
        [[focal, 0.0, cx], [0.0, focal, cy], [0.0, 0.0, 1.0]]
    }

    /// Camera at `eye` looking at `target`, with world `up` mapped to image-up.
    pub fn look_at(
        eye: [f64; 3],
        target: [f64; 3],
        up: [f64; 3],
        intrinsics: [[f64; 3]; 3],
        height: usize,
        width: usize,
    ) -> Result<Self> {
        let forward = normalized(sub3(target, eye))
            .ok_or_else(|| Error::Config("look_at target coincides with eye".into()))?;
        let right = normalized(cross(forward, up))
            .ok_or_else(|| Error::Config("look_at direction parallel to up".into()))?;
        let down = cross(forward, right);
        let rot = [right, down, forward];
        let mut v = [[0.0; 4]; 4];
        for r in 0..3 {
            v[r][..3].copy_from_slice(&rot[r]);
            v[r][3] = -(rot[r][0] * eye[0] + rot[r][1] * eye[1] + rot[r][2] * eye[2]);
        }
        v[3][3] = 1.0;
        Self::new(intrinsics, v, height, width)
    }

    pub fn validate(&self) -> Result<()> {
        let k = &self.intrinsics;
        if k[2][2] != 1.0 || k[1][0] != 0.0 || k[2][0] != 0.0 || k[2][1] != 0.0 {
            return Err(Error::Config(
                "intrinsics must be upper-triangular with K[2][2] = 1".into(),
            ));
        }
        if !(k[0][0] > 0.0 && k[1][1] > 0.0) {
            return Err(Error::Config("focal lengths must be positive".into()));
        }
        let v = &self.extrinsics;
        if v[3] != [0.0, 0.0, 0.0, 1.0] {
            return Err(Error::Config("extrinsics bottom row must be [0 0 0 1]".into()));
        }
        for i in 0..3 {
            for j in 0..3 {
                let d: f64 = (0..3).map(|r| v[r][i] * v[r][j]).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                if (d - expect).abs() > ORTHONORMAL_TOLERANCE {
                    return Err(Error::Config("extrinsic rotation is not orthonormal".into()));
                }
            }
        }
        if self.height == 0 || self.width == 0 {
            return Err(Error::Config("image size must be positive".into()));
        }
        let finite = k.iter().flatten().chain(v.iter().flatten()).all(|x| x.is_finite());
        if !finite {
            return Err(Error::NonFinite("camera parameters".into()));
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    /// World point to camera frame.
    pub fn to_camera(&self, p: [f64; 3]) -> [f64; 3] {
        let v = &self.extrinsics;
        let mut out = [0.0; 3];
        for (r, o) in out.iter_mut().enumerate() {
            *o = v[r][0] * p[0] + v[r][1] * p[1] + v[r][2] * p[2] + v[r][3];
        }
        out
    }

    /// Camera-frame point to continuous image coordinates `(u, v)`.
    pub fn to_image(&self, pc: [f64; 3]) -> (f64, f64) {
        let k = &self.intrinsics;
        let x = k[0][0] * pc[0] + k[0][1] * pc[1] + k[0][2] * pc[2];
        let y = k[1][1] * pc[1] + k[1][2] * pc[2];
        (x / pc[2], y / pc[2])
    }

    /// Inverts the projection: image coordinates plus depth back to world.
    pub fn unproject(&self, u: f64, v: f64, depth: f64) -> [f64; 3] {
        let k = &self.intrinsics;
        // Back-substitution through the upper-triangular K.
        let y = (v - k[1][2]) / k[1][1];
        let x = (u - k[0][2] - k[0][1] * y) / k[0][0];
        let pc = [x * depth, y * depth, depth];
        let e = &self.extrinsics;
        let d = [pc[0] - e[0][3], pc[1] - e[1][3], pc[2] - e[2][3]];
        let mut out = [0.0; 3];
        for (c, o) in out.iter_mut().enumerate() {
            *o = e[0][c] * d[0] + e[1][c] * d[1] + e[2][c] * d[2];
        }
        out
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> [f64; 3] {
        let e = &self.extrinsics;
        let mut out = [0.0; 3];
        for (c, o) in out.iter_mut().enumerate() {
            *o = -(e[0][c] * e[0][3] + e[1][c] * e[1][3] + e[2][c] * e[2][3]);
        }
        out
    }
}

/// Projection of one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// Continuous column coordinate.
    pub u: f64,
    /// Continuous row coordinate.
    pub v: f64,
    pub depth: f64,
    /// `(row, col)` when the point lands inside the image in front of the near plane.
    pub pixel: Option<(usize, usize)>,
}

impl Projection {
    pub fn visible(&self) -> bool {
        self.pixel.is_some()
    }
}

pub fn project_point(p: [f64; 3], cam: &Camera) -> Projection {
    let pc = cam.to_camera(p);
    let depth = pc[2];
    if depth <= NEAR_PLANE {
        return Projection {
            u: f64::NAN,
            v: f64::NAN,
            depth,
            pixel: None,
        };
    }
    let (u, v) = cam.to_image(pc);
    let col = u.round();
    let row = v.round();
    let inside = row >= 0.0 && col >= 0.0 && row < cam.height as f64 && col < cam.width as f64;
    Projection {
        u,
        v,
        depth,
        pixel: inside.then_some((row as usize, col as usize)),
    }
}

/// Projects every row of an `N × 3` position matrix.
pub fn project_points(positions: &Matrix, cam: &Camera) -> Vec<Projection> {
    debug_assert_eq!(positions.cols(), 3);
    (0..positions.rows())
        .map(|i| {
            let r = positions.row(i);
            project_point([r[0], r[1], r[2]], cam)
        })
        .collect()
}

/// One visible point and the pixel it won.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrEntry {
    pub point: usize,
    pub row: usize,
    pub col: usize,
    /// Sub-pixel image coordinates, kept so the entry can be un-projected exactly.
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

/// Depth-tested point ↔ pixel map for one view. Entries are sorted by point index.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Correspondence {
    pub entries: Vec<CorrEntry>,
    pub height: usize,
    pub width: usize,
}

impl Correspondence {
    /// `N′`, the number of corresponded points.
    pub fn n_prime(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn point_indices(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.point).collect()
    }

    /// Per-point entry index, `None` for points without a pixel.
    pub fn entry_of_point(&self, n_points: usize) -> Vec<Option<usize>> {
        let mut out = vec![None; n_points];
        for (k, e) in self.entries.iter().enumerate() {
            out[e.point] = Some(k);
        }
        out
    }
}

/// Z-buffer over all points: each pixel keeps its nearest point, ties going to
/// the lower point index.
pub fn build_correspondence(positions: &Matrix, cam: &Camera) -> Correspondence {
    let projections = project_points(positions, cam);
    let mut zbuf: Vec<Option<usize>> = vec![None; cam.pixel_count()];
    for (i, p) in projections.iter().enumerate() {
        let Some((row, col)) = p.pixel else { continue };
        let slot = &mut zbuf[row * cam.width + col];
        match *slot {
            Some(j) if p.depth >= projections[j].depth - DEPTH_TIE_TOLERANCE => {}
            _ => *slot = Some(i),
        }
    }
    let mut winners: Vec<usize> = zbuf.into_iter().flatten().collect();
    winners.sort_unstable();
    let entries = winners
        .into_iter()
        .map(|i| {
            let p = projections[i];
            let (row, col) = p.pixel.expect("winner is visible");
            CorrEntry {
                point: i,
                row,
                col,
                u: p.u,
                v: p.v,
                depth: p.depth,
            }
        })
        .collect();
    Correspondence {
        entries,
        height: cam.height,
        width: cam.width,
    }
}

fn sub3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn normalized(a: [f64; 3]) -> Option<[f64; 3]> {
    let n = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
    (n > 1e-12).then(|| [a[0] / n, a[1] / n, a[2] / n])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn identity_cam(f: f64, c: f64, size: usize) -> Camera {
        let mut v = [[0.0; 4]; 4];
        for (i, row) in v.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        Camera::new(Camera::pinhole_intrinsics(f, c, c), v, size, size).unwrap()
    }

    #[test]
    fn principal_axis_and_offset_point() {
        let cam = identity_cam(100.0, 50.0, 101);
        let p = project_point([0.0, 0.0, 2.0], &cam);
        assert_eq!(p.pixel, Some((50, 50)));
        assert_eq!(p.depth, 2.0);
        let p = project_point([0.5, 0.0, 1.0], &cam);
        assert_eq!(p.pixel, Some((50, 100)));
    }

    #[test]
    fn near_plane_and_bounds() {
        let cam = identity_cam(100.0, 50.0, 100);
        assert!(!project_point([0.0, 0.0, 0.005], &cam).visible());
        assert!(!project_point([0.0, 0.0, -1.0], &cam).visible());
        // col 100 is outside a 100-wide image
        assert!(!project_point([0.5, 0.0, 1.0], &cam).visible());
    }

    #[test]
    fn occlusion_keeps_nearest() {
        let cam = identity_cam(100.0, 50.0, 100);
        let pos = Matrix::from_rows(&[[0.0, 0.0, 2.0], [0.0, 0.0, 1.0]]).unwrap();
        let corr = build_correspondence(&pos, &cam);
        assert_eq!(corr.n_prime(), 1);
        assert_eq!(corr.entries[0].point, 1);
    }

    #[test]
    fn equal_depth_tie_goes_to_lower_index() {
        let cam = identity_cam(100.0, 50.0, 100);
        let pos = Matrix::from_rows(&[[0.001, 0.0, 1.0], [0.0, 0.0, 1.0]]).unwrap();
        let corr = build_correspondence(&pos, &cam);
        assert_eq!(corr.point_indices(), vec![0]);
    }

    #[test]
    fn empty_cloud() {
        let cam = identity_cam(100.0, 50.0, 100);
        let corr = build_correspondence(&Matrix::zeros(0, 3), &cam);
        assert_eq!(corr.n_prime(), 0);
    }

    #[test]
    fn rejects_invalid_cameras() {
        let mut v = [[0.0; 4]; 4];
        for (i, row) in v.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        v[0][0] = 2.0;
        assert!(Camera::new(Camera::pinhole_intrinsics(1.0, 0.0, 0.0), v, 4, 4).is_err());
        let mut k = Camera::pinhole_intrinsics(1.0, 0.0, 0.0);
        k[2][2] = 2.0;
        assert!(Camera::new(k, identity_cam(1.0, 0.0, 4).extrinsics, 4, 4).is_err());
    }

    #[test]
    fn look_at_centers_target() {
        let cam = Camera::look_at(
            [1.0, 2.0, 1.5],
            [4.0, 3.0, 1.0],
            [0.0, 0.0, 1.0],
            Camera::pinhole_intrinsics(32.0, 32.0, 32.0),
            64,
            64,
        )
        .unwrap();
        let p = project_point([4.0, 3.0, 1.0], &cam);
        assert_eq!(p.pixel, Some((32, 32)));
        // something above the target appears higher in the image
        let q = project_point([4.0, 3.0, 1.5], &cam);
        assert!(q.v < p.v);
        let c = cam.center();
        assert!((c[0] - 1.0).abs() < 1e-12 && (c[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn projection_matches_explicit_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let cam = Camera::look_at(
            [0.5, -0.3, 0.2],
            [0.0, 0.0, 3.0],
            [0.0, -1.0, 0.0],
            [[40.0, 0.3, 31.0], [0.0, 42.0, 29.5], [0.0, 0.0, 1.0]],
            60,
            64,
        )
        .unwrap();
        let data: Vec<f64> = (0..3000).map(|_| rng.random_range(-3.0..5.0)).collect();
        let pos = Matrix::new(1000, 3, data).unwrap();
        let proj = project_points(&pos, &cam);
        let (k, v) = (cam.intrinsics, cam.extrinsics);
        for i in 0..1000 {
            let x = [pos[(i, 0)], pos[(i, 1)], pos[(i, 2)], 1.0];
            let mut c = [0.0; 3];
            for r in 0..3 {
                for j in 0..4 {
                    c[r] += v[r][j] * x[j];
                }
            }
            let mut h = [0.0; 3];
            for r in 0..3 {
                for j in 0..3 {
                    h[r] += k[r][j] * c[j];
                }
            }
            let visible = if c[2] > 0.01 {
                let (col, row) = ((h[0] / h[2]).round(), (h[1] / h[2]).round());
                row >= 0.0 && row < 60.0 && col >= 0.0 && col < 64.0
            } else {
                false
            };
            assert_eq!(proj[i].visible(), visible, "point {i}");
        }
    }
}
