use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};

pub type Vec3 = [f64; 3];

#[inline]
pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn normalize(a: Vec3) -> Vec3 {
    let n = norm(a);
    [a[0] / n, a[1] / n, a[2] / n]
}

#[inline]
fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

/// Pinhole camera with an optional single-coefficient radial distortion.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    #[serde(default)]
    pub k1: f64,
}

impl CameraIntrinsics {
    /// Centered principal point and square pixels from a horizontal field of
    /// view in radians.
    pub fn from_fov(width: usize, height: usize, fov_x: f64) -> Self {
        let f = 0.5 * width as f64 / (0.5 * fov_x).tan();
        Self {
            fx: f,
            fy: f,
            cx: 0.5 * width as f64,
            cy: 0.5 * height as f64,
            width,
            height,
            k1: 0.0,
        }
    }

    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if !(self.fx > 0.0 && self.fy > 0.0) {
            errs.push(format!("focal lengths must be positive (fx={}, fy={})", self.fx, self.fy));
        }
        if self.width == 0 || self.height == 0 {
            errs.push(format!("image size {}x{} must be positive", self.width, self.height));
        }
        if !(self.cx > 0.0 && self.cx < self.width as f64) {
            errs.push(format!("cx={} outside (0, {})", self.cx, self.width));
        }
        if !(self.cy > 0.0 && self.cy < self.height as f64) {
            errs.push(format!("cy={} outside (0, {})", self.cy, self.height));
        }
        if !self.k1.is_finite() {
            errs.push("k1 must be finite".to_string());
        }
        errs
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Normalized, undistorted camera-plane coordinates of a pixel center.
    fn undistorted(&self, i: usize, j: usize) -> (f64, f64) {
        let u = (i as f64 + 0.5 - self.cx) / self.fx;
        let v = (j as f64 + 0.5 - self.cy) / self.fy;
        if self.k1 == 0.0 {
            return (u, v);
        }
        // Invert (x, y)·(1 + k1·r²) = (u, v) by fixed-point iteration.
        let (mut x, mut y) = (u, v);
        for _ in 0..20 {
            let scale = 1.0 + self.k1 * (x * x + y * y);
            x = u / scale;
            y = v / scale;
        }
        (x, y)
    }
}

/// Camera-to-world rigid transform. The camera looks along its local −z;
/// local +x follows increasing pixel column and +y increasing pixel row.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    matrix: [[f64; 4]; 4],
}

/// Tolerance for orthonormality, determinant and bottom-row checks.
pub const RIGIDITY_TOL: f64 = 1e-4;

impl Pose {
    /// Identity rotation with zero translation.
    pub fn canonical() -> Self {
        let mut m = [[0.0; 4]; 4];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        Self { matrix: m }
    }

    pub fn from_matrix(matrix: [[f64; 4]; 4]) -> Result<Self> {
        check_rigid(&matrix).map_err(contract)?;
        Ok(Self { matrix })
    }

    pub fn from_rotation_translation(r: [[f64; 3]; 3], t: Vec3) -> Result<Self> {
        let mut m = Self::canonical().matrix;
        for i in 0..3 {
            m[i][..3].copy_from_slice(&r[i]);
            m[i][3] = t[i];
        }
        Self::from_matrix(m)
    }

    /// Camera at `eye` looking at `target`; `image_down` is the world
    /// direction that should appear toward the bottom of the image.
    pub fn look_at(eye: Vec3, target: Vec3, image_down: Vec3) -> Result<Self> {
        let z = normalize(sub(eye, target));
        let d = dot(image_down, z);
        let y_raw = sub(image_down, [d * z[0], d * z[1], d * z[2]]);
        if norm(y_raw) < 1e-12 {
            return Err(contract("look_at: image_down parallel to the viewing axis"));
        }
        let y = normalize(y_raw);
        let x = cross(y, z);
        let r = [
            [x[0], y[0], z[0]],
            [x[1], y[1], z[1]],
            [x[2], y[2], z[2]],
        ];
        Self::from_rotation_translation(r, eye)
    }

    pub fn matrix(&self) -> &[[f64; 4]; 4] {
        &self.matrix
    }

    pub fn rotation(&self) -> [[f64; 3]; 3] {
        std::array::from_fn(|i| [self.matrix[i][0], self.matrix[i][1], self.matrix[i][2]])
    }

    pub fn translation(&self) -> Vec3 {
        [self.matrix[0][3], self.matrix[1][3], self.matrix[2][3]]
    }

    pub fn rotate(&self, v: Vec3) -> Vec3 {
        let m = &self.matrix;
        std::array::from_fn(|i| m[i][0] * v[0] + m[i][1] * v[1] + m[i][2] * v[2])
    }

    /// The pose carried around the world z axis by `angle` radians.
    pub fn yawed(&self, angle: f64) -> Pose {
        let (s, c) = angle.sin_cos();
        let rz = [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]];
        let mut m = [[0.0; 4]; 4];
        m[3][3] = 1.0;
        for i in 0..3 {
            for j in 0..4 {
                m[i][j] = (0..3).map(|k| rz[i][k] * self.matrix[k][j]).sum();
            }
        }
        Pose { matrix: m }
    }

    /// Same rotation, new translation.
    pub fn with_translation(&self, t: Vec3) -> Pose {
        let mut m = self.matrix;
        for i in 0..3 {
            m[i][3] = t[i];
        }
        Pose { matrix: m }
    }
}

/// Checks `RᵀR = I`, `det R = 1` and the `(0,0,0,1)` bottom row.
pub fn check_rigid(m: &[[f64; 4]; 4]) -> std::result::Result<(), String> {
    if m.iter().flatten().any(|v| !v.is_finite()) {
        return Err("transform has non-finite entries".into());
    }
    let bottom = [0.0, 0.0, 0.0, 1.0];
    if m[3].iter().zip(bottom).any(|(a, b)| (a - b).abs() > RIGIDITY_TOL) {
        return Err(format!("bottom row {:?} is not (0,0,0,1)", m[3]));
    }
    for a in 0..3 {
        for b in 0..3 {
            let d: f64 = (0..3).map(|k| m[k][a] * m[k][b]).sum();
            let want = if a == b { 1.0 } else { 0.0 };
            if (d - want).abs() > RIGIDITY_TOL {
                return Err(format!("rotation is not orthonormal (RᵀR[{a}][{b}] = {d})"));
            }
        }
    }
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    if (det - 1.0).abs() > RIGIDITY_TOL {
        return Err(format!("rotation determinant is {det}, expected 1"));
    }
    Ok(())
}

/// Parametric segment `origin + t·direction`, `t ∈ [t_near, t_far]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
    pub t_near: f64,
    pub t_far: f64,
}

/// Range used when a ray misses the unit cube.
pub const MISS_RANGE: (f64, f64) = (0.0, 1.0);

impl Ray {
    /// A ray whose segment is its intersection with `[0,1]³`, or
    /// [`MISS_RANGE`] if it misses.
    pub fn clipped(origin: Vec3, direction: Vec3) -> Ray {
        let (t_near, t_far) = intersect_unit_cube(origin, direction).unwrap_or(MISS_RANGE);
        Ray {
            origin,
            direction,
            t_near,
            t_far,
        }
    }

    pub fn at(&self, t: f64) -> Vec3 {
        std::array::from_fn(|i| self.origin[i] + t * self.direction[i])
    }
}

/// Slab test against the unit cube, restricted to `t ≥ 0`.
pub fn intersect_unit_cube(origin: Vec3, dir: Vec3) -> Option<(f64, f64)> {
    let mut t0 = 0.0f64;
    let mut t1 = f64::INFINITY;
    for a in 0..3 {
        if dir[a].abs() < 1e-15 {
            if origin[a] < 0.0 || origin[a] > 1.0 {
                return None;
            }
            continue;
        }
        let inv = 1.0 / dir[a];
        let (mut near, mut far) = ((0.0 - origin[a]) * inv, (1.0 - origin[a]) * inv);
        if near > far {
            std::mem::swap(&mut near, &mut far);
        }
        t0 = t0.max(near);
        t1 = t1.min(far);
    }
    (t0 < t1).then_some((t0, t1))
}

pub fn inside_unit_cube(p: Vec3) -> bool {
    const SLACK: f64 = 1e-9;
    p.iter().all(|&v| (-SLACK..=1.0 + SLACK).contains(&v))
}

/// Ray through the center of pixel `(i, j)` (column, row).
pub fn pixel_to_ray(i: usize, j: usize, intr: &CameraIntrinsics, pose: &Pose) -> Result<Ray> {
    if i >= intr.width || j >= intr.height {
        return Err(contract(format!(
            "pixel ({i}, {j}) outside {}x{} image",
            intr.width, intr.height
        )));
    }
    let (x, y) = intr.undistorted(i, j);
    let dir = normalize(pose.rotate([x, y, -1.0]));
    Ok(Ray::clipped(pose.translation(), dir))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn intr(k1: f64) -> CameraIntrinsics {
        CameraIntrinsics {
            fx: 20.0,
            fy: 22.0,
            cx: 8.5,
            cy: 7.5,
            width: 16,
            height: 16,
            k1,
        }
    }

    #[test]
    fn principal_ray_points_down_negative_z() {
        let ray = pixel_to_ray(8, 7, &intr(0.0), &Pose::canonical()).unwrap();
        assert_eq!(ray.direction, [0.0, 0.0, -1.0]);
    }

    #[test]
    fn distortion_is_identity_on_principal_ray() {
        let a = pixel_to_ray(8, 7, &intr(0.0), &Pose::canonical()).unwrap();
        let b = pixel_to_ray(8, 7, &intr(-0.3), &Pose::canonical()).unwrap();
        assert_eq!(a, b);
        let off = pixel_to_ray(0, 0, &intr(-0.3), &Pose::canonical()).unwrap();
        let plain = pixel_to_ray(0, 0, &intr(0.0), &Pose::canonical()).unwrap();
        assert_ne!(off.direction, plain.direction);
    }

    #[test]
    fn out_of_bounds_pixel_rejected() {
        assert!(pixel_to_ray(16, 0, &intr(0.0), &Pose::canonical()).is_err());
    }

    #[test]
    fn directions_are_unit_for_random_pose() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..5 {
            let eye = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(1.5..3.0)];
            let pose = Pose::look_at(eye, [0.5, 0.5, 0.5], [0.0, 0.0, -1.0]).unwrap();
            for j in 0..16 {
                for i in 0..16 {
                    let r = pixel_to_ray(i, j, &intr(0.05), &pose).unwrap();
                    assert!((norm(r.direction) - 1.0).abs() < 1e-6);
                    assert!(r.t_near < r.t_far);
                }
            }
        }
    }

    #[test]
    fn look_at_is_rigid_and_faces_target() {
        let pose = Pose::look_at([3.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, -1.0]).unwrap();
        assert!(check_rigid(pose.matrix()).is_ok());
        let fwd = pose.rotate([0.0, 0.0, -1.0]);
        assert!((fwd[0] + 1.0).abs() < 1e-12);
        let down = pose.rotate([0.0, 1.0, 0.0]);
        assert!((down[2] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn reflection_is_not_rigid() {
        let mut m = *Pose::canonical().matrix();
        m[0][0] = -1.0;
        assert!(check_rigid(&m).unwrap_err().contains("determinant"));
    }

    #[test]
    fn cube_intersection() {
        let (a, b) = intersect_unit_cube([-1.0, 0.5, 0.5], [1.0, 0.0, 0.0]).unwrap();
        assert!((a - 1.0).abs() < 1e-12 && (b - 2.0).abs() < 1e-12);
        assert!(intersect_unit_cube([-1.0, 2.0, 0.5], [1.0, 0.0, 0.0]).is_none());
        let (a, _) = intersect_unit_cube([0.5, 0.5, 0.5], [0.0, 0.0, 1.0]).unwrap();
        assert_eq!(a, 0.0);
    }
}
