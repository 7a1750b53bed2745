//! Rigid-body pose algebra, the pinhole camera and dense correspondence fields.
//!
//! Poses are world-from-camera: `pose.transform_point(x_cam)` yields the point
//! in world coordinates. Tangent vectors are ordered `(ω, v)`: three
//! rotational components in radians followed by three translational
//! components in meters, with `exp(ξ)·x ≈ x + ω×x + v` to first order.

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector2, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::GeometryError;
use crate::image::DepthMap;

/// Points at or closer than this (camera-frame z, meters) are treated as
/// behind the camera.
pub const MIN_DEPTH: f64 = 1e-6;

/// Smallest allowed distance from π for [`Pose::log`].
const LOG_PI_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    rotation: UnitQuaternion<f64>,
    translation: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation: renormalize(rotation),
            translation,
        }
    }

    /// Same rotation, bit for bit, with a new translation.
    pub fn with_translation(&self, translation: Vector3<f64>) -> Self {
        Self {
            rotation: self.rotation,
            translation,
        }
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self::new(UnitQuaternion::identity(), t)
    }

    pub fn from_rotation(r: UnitQuaternion<f64>) -> Self {
        Self::new(r, Vector3::zeros())
    }

    /// Builds a pose from a (not necessarily normalized) `(qx, qy, qz, qw)`
    /// quaternion, as stored in TUM trajectory files.
    pub fn from_tum(t: [f64; 3], q_xyzw: [f64; 4]) -> Self {
        let q = Quaternion::new(q_xyzw[3], q_xyzw[0], q_xyzw[1], q_xyzw[2]);
        Self::new(UnitQuaternion::new_normalize(q), Vector3::from(t))
    }

    /// Camera at `eye` looking at `target`, with image y pointing along `-up`
    /// (x right, y down, z forward).
    pub fn look_at(eye: Vector3<f64>, target: Vector3<f64>, up: Vector3<f64>) -> Self {
        let z = (target - eye).normalize();
        let x = z.cross(&up).normalize();
        let y = z.cross(&x);
        let m = Matrix3::from_columns(&[x, y, z]);
        let r = nalgebra::Rotation3::from_matrix_unchecked(m);
        Self::new(UnitQuaternion::from_rotation_matrix(&r), eye)
    }

    #[inline]
    pub fn rotation(&self) -> &UnitQuaternion<f64> {
        &self.rotation
    }

    #[inline]
    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.rotation.to_rotation_matrix().into_inner()
    }

    /// TUM quaternion order `(qx, qy, qz, qw)`.
    pub fn quaternion_xyzw(&self) -> [f64; 4] {
        let q = self.rotation.quaternion();
        [q.i, q.j, q.k, q.w]
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: renormalize(self.rotation * other.rotation),
            translation: self.translation + self.rotation * other.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.rotation.inverse();
        Pose {
            rotation: renormalize(inv),
            translation: -(inv * self.translation),
        }
    }

    #[inline]
    pub fn transform_point(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * x + self.translation
    }

    /// Applies the inverse transform without forming the inverse pose.
    #[inline]
    pub fn inverse_transform_point(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.inverse_transform_vector(&(x - self.translation))
    }

    pub fn exp(xi: &Tangent) -> Pose {
        let omega = xi.rotation();
        let v = xi.translation();
        let rotation = UnitQuaternion::from_scaled_axis(omega);
        Pose::new(rotation, left_jacobian(&omega) * v)
    }

    /// Inverse of [`Pose::exp`]. Fails when the rotation angle is within
    /// 1e-6 rad of π, where the rotation axis is not unique.
    pub fn log(&self) -> Result<Tangent, GeometryError> {
        let omega = self.rotation.scaled_axis();
        let angle = omega.norm();
        if angle > std::f64::consts::PI - LOG_PI_MARGIN {
            return Err(GeometryError::DegenerateRotation { angle });
        }
        let v = left_jacobian_inverse(&omega) * self.translation;
        Ok(Tangent::new(omega, v))
    }

    /// `self ∘ exp(ξ)`: body-frame increment.
    pub fn retract(&self, xi: &Tangent) -> Pose {
        self.compose(&Pose::exp(xi))
    }

    /// Rotation angle of `self⁻¹ ∘ other`, radians.
    pub fn angle_to(&self, other: &Pose) -> f64 {
        self.rotation.angle_to(&other.rotation)
    }

    /// Euclidean distance between the two camera centers, meters.
    pub fn distance_to(&self, other: &Pose) -> f64 {
        (self.translation - other.translation).norm()
    }

    pub fn is_finite(&self) -> bool {
        self.translation.iter().all(|v| v.is_finite())
            && self.rotation.coords.iter().all(|v| v.is_finite())
    }
}

fn renormalize(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    UnitQuaternion::new_normalize(q.into_inner())
}

#[inline]
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Left Jacobian of SO(3), `V(ω)` in `t = V(ω)·v`.
fn left_jacobian(omega: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = omega.norm_squared();
    let w = skew(omega);
    let (a, b) = if theta2 < 1e-10 {
        (0.5 - theta2 / 24.0, 1.0 / 6.0 - theta2 / 120.0)
    } else {
        let theta = theta2.sqrt();
        (
            (1.0 - theta.cos()) / theta2,
            (theta - theta.sin()) / (theta2 * theta),
        )
    };
    Matrix3::identity() + w * a + w * w * b
}

fn left_jacobian_inverse(omega: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = omega.norm_squared();
    let w = skew(omega);
    let c = if theta2 < 1e-10 {
        1.0 / 12.0 + theta2 / 720.0
    } else {
        let theta = theta2.sqrt();
        (1.0 - theta * theta.sin() / (2.0 * (1.0 - theta.cos()))) / theta2
    };
    Matrix3::identity() - w * 0.5 + w * w * c
}

/// se(3) element `(ω, v)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tangent(pub Vector6<f64>);

impl Tangent {
    pub fn new(rotation: Vector3<f64>, translation: Vector3<f64>) -> Self {
        Self(Vector6::new(
            rotation.x,
            rotation.y,
            rotation.z,
            translation.x,
            translation.y,
            translation.z,
        ))
    }

    pub fn zero() -> Self {
        Self(Vector6::zeros())
    }

    pub fn rotation(&self) -> Vector3<f64> {
        self.0.fixed_rows::<3>(0).into_owned()
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.0.fixed_rows::<3>(3).into_owned()
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }
}

/// Pinhole intrinsics. Pixel `(0, 0)` is the center of the top-left pixel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Intrinsics {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
    ) -> Result<Self, GeometryError> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let bad = |m: &str| Err(GeometryError::InvalidIntrinsics(m.to_string()));
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return bad("focal lengths must be positive");
        }
        if self.width == 0 || self.height == 0 {
            return bad("image must be non-empty");
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64) {
            return bad("cx outside the image");
        }
        if !(self.cy >= 0.0 && self.cy < self.height as f64) {
            return bad("cy outside the image");
        }
        Ok(())
    }

    /// Mean focal length.
    #[inline]
    pub fn focal(&self) -> f64 {
        0.5 * (self.fx + self.fy)
    }

    /// Intrinsics of the coarse grid used by flow and pose solving. Coarse
    /// pixel `u` sits on fine pixel `divisor·u + divisor/2`.
    pub fn coarse(&self, divisor: usize) -> Intrinsics {
        let d = divisor as f64;
        let off = (divisor / 2) as f64;
        Intrinsics {
            fx: self.fx / d,
            fy: self.fy / d,
            cx: (self.cx - off) / d,
            cy: (self.cy - off) / d,
            width: self.width / divisor,
            height: self.height / divisor,
        }
    }

    #[inline]
    pub fn contains(&self, p: &Vector2<f64>) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x < self.width as f64 && p.y < self.height as f64
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}

/// Projects a camera-frame point to pixel coordinates.
#[inline]
pub fn project(x: &Vector3<f64>, k: &Intrinsics) -> Result<Vector2<f64>, GeometryError> {
    if x.z <= MIN_DEPTH {
        return Err(GeometryError::BehindCamera { z: x.z });
    }
    Ok(Vector2::new(
        k.fx * x.x / x.z + k.cx,
        k.fy * x.y / x.z + k.cy,
    ))
}

/// Lifts pixel `p` at z-depth `d` into the camera frame.
#[inline]
pub fn backproject(p: &Vector2<f64>, d: f64, k: &Intrinsics) -> Result<Vector3<f64>, GeometryError> {
    if !(d > 0.0 && d.is_finite()) {
        return Err(GeometryError::InvalidDepth(d));
    }
    Ok(Vector3::new(
        (p.x - k.cx) * d / k.fx,
        (p.y - k.cy) * d / k.fy,
        d,
    ))
}

/// Dense per-pixel 2D coordinates with explicit validity and in-bounds masks.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelField {
    pub width: usize,
    pub height: usize,
    pub coords: Vec<Vector2<f64>>,
    pub valid: Vec<bool>,
    pub in_bounds: Vec<bool>,
}

impl PixelField {
    pub fn empty(width: usize, height: usize) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            coords: vec![Vector2::zeros(); n],
            valid: vec![false; n],
            in_bounds: vec![false; n],
        }
    }

    /// Every pixel maps onto itself.
    pub fn identity(width: usize, height: usize) -> Self {
        let mut f = Self::empty(width, height);
        for y in 0..height {
            for x in 0..width {
                let i = y * width + x;
                f.coords[i] = Vector2::new(x as f64, y as f64);
                f.valid[i] = true;
                f.in_bounds[i] = true;
            }
        }
        f
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}

/// Camera-`src` to camera-`dst` transform for world-from-camera poses.
///
/// The camera-from-world form of the same relation is `G_dst ∘ G_src⁻¹`;
/// inverting both poses gives `G_dst⁻¹ ∘ G_src` here.
pub fn relative_pose(src: &Pose, dst: &Pose) -> Pose {
    dst.inverse().compose(src)
}

/// Where each pixel of the source view lands in the destination view, given
/// the source depth and both poses.
///
/// Pixels with invalid depth or whose transformed point is behind the
/// destination camera are invalid. Valid points that leave the image keep
/// their coordinates and are flagged out of bounds.
pub fn correspondence_field(
    depth: &DepthMap,
    src: &Pose,
    dst: &Pose,
    k: &Intrinsics,
) -> Result<PixelField, GeometryError> {
    if (depth.width(), depth.height()) != k.dims() {
        return Err(GeometryError::DimensionMismatch {
            expected: k.dims(),
            actual: (depth.width(), depth.height()),
        });
    }
    let rel = relative_pose(src, dst);
    let mut field = PixelField::empty(k.width, k.height);
    for y in 0..k.height {
        for x in 0..k.width {
            let i = y * k.width + x;
            let Some(d) = depth.get_index(i) else { continue };
            let p = Vector2::new(x as f64, y as f64);
            let Ok(xc) = backproject(&p, d, k) else { continue };
            let xd = rel.transform_point(&xc);
            if let Ok(q) = project(&xd, k) {
                field.coords[i] = q;
                field.valid[i] = true;
                field.in_bounds[i] = k.contains(&q);
            }
        }
    }
    Ok(field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn k100() -> Intrinsics {
        Intrinsics::new(100.0, 100.0, 50.0, 50.0, 100, 100).unwrap()
    }

    fn rz(deg: f64) -> UnitQuaternion<f64> {
        UnitQuaternion::from_axis_angle(&Vector3::z_axis(), deg.to_radians())
    }

    fn assert_pose_close(a: &Pose, b: &Pose, tol: f64) {
        assert!(a.angle_to(b) < tol, "angle {}", a.angle_to(b));
        assert!(a.distance_to(b) < tol, "dist {}", a.distance_to(b));
    }

    prop_compose! {
        fn arb_pose()(axis in prop::array::uniform3(-1.0f64..1.0),
                      angle in 0.0f64..3.0,
                      t in prop::array::uniform3(-5.0f64..5.0)) -> Pose {
            let a = Vector3::from(axis);
            let r = if a.norm() < 1e-6 {
                UnitQuaternion::identity()
            } else {
                UnitQuaternion::from_scaled_axis(a.normalize() * angle)
            };
            Pose::new(r, Vector3::from(t))
        }
    }

    #[test]
    fn compose_with_identity() {
        let p = Pose::new(rz(33.0), Vector3::new(1.0, -2.0, 0.5));
        assert_pose_close(&Pose::identity().compose(&p), &p, 1e-15);
        assert_pose_close(&p.compose(&p.inverse()), &Pose::identity(), 1e-12);
    }

    #[test]
    fn compose_quarter_turns() {
        // Oracle: apply the two poses one after the other to basis points.
        let p = Pose::new(rz(90.0), Vector3::new(1.0, 0.0, 0.0));
        let c = p.compose(&p);
        for e in [Vector3::zeros(), Vector3::x(), Vector3::y(), Vector3::z()] {
            let seq = p.transform_point(&p.transform_point(&e));
            assert!((c.transform_point(&e) - seq).norm() < 1e-12);
        }
        let expected = Pose::new(rz(180.0), Vector3::new(1.0, 1.0, 0.0));
        assert_pose_close(&c, &expected, 1e-12);
    }

    #[test]
    fn inverse_cases() {
        assert_pose_close(&Pose::identity().inverse(), &Pose::identity(), 0.0 + 1e-15);
        let t = Pose::from_translation(Vector3::new(1.0, 2.0, 3.0));
        assert_eq!(*t.inverse().translation(), Vector3::new(-1.0, -2.0, -3.0));
        let p = Pose::new(rz(71.0), Vector3::new(0.3, 2.0, -1.0));
        assert_pose_close(&p.inverse().inverse(), &p, 1e-12);
    }

    #[test]
    fn exp_special_cases() {
        assert_pose_close(&Pose::exp(&Tangent::zero()), &Pose::identity(), 1e-15);
        let th = 0.7;
        let p = Pose::exp(&Tangent::new(Vector3::new(0.0, 0.0, th), Vector3::zeros()));
        assert!((p.rotation().angle() - th).abs() < 1e-12);
        assert!(p.translation().norm() < 1e-15);
        let axis = p.rotation().axis().unwrap();
        assert!((axis.z - 1.0).abs() < 1e-12);
    }

    #[test]
    fn log_exp_roundtrip_random() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let dir = Vector3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            )
            .normalize();
            let v = Vector3::new(
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
            );
            let xi = Tangent::new(dir * 0.3, v);
            let back = Pose::exp(&xi).log().unwrap();
            assert!((back.0 - xi.0).amax() < 1e-10);
        }
    }

    #[test]
    fn log_near_pi_is_degenerate() {
        let p = Pose::from_rotation(rz(180.0));
        assert!(matches!(p.log(), Err(GeometryError::DegenerateRotation { .. })));
    }

    #[test]
    fn project_closed_form() {
        let k = k100();
        assert_eq!(project(&Vector3::new(0.0, 0.0, 1.0), &k).unwrap(), Vector2::new(50.0, 50.0));
        assert_eq!(project(&Vector3::new(1.0, 0.0, 1.0), &k).unwrap(), Vector2::new(150.0, 50.0));
        assert!(matches!(
            project(&Vector3::new(0.0, 0.0, 1e-7), &k),
            Err(GeometryError::BehindCamera { .. })
        ));
    }

    #[test]
    fn backproject_closed_form() {
        let k = k100();
        assert_eq!(
            backproject(&Vector2::new(50.0, 50.0), 3.0, &k).unwrap(),
            Vector3::new(0.0, 0.0, 3.0)
        );
        assert_eq!(
            backproject(&Vector2::new(0.0, 0.0), 2.0, &k).unwrap(),
            Vector3::new(-1.0, -1.0, 2.0)
        );
        assert!(matches!(
            backproject(&Vector2::new(1.0, 1.0), 0.0, &k),
            Err(GeometryError::InvalidDepth(_))
        ));
    }

    #[test]
    fn intrinsics_validation() {
        assert!(Intrinsics::new(0.0, 1.0, 1.0, 1.0, 4, 4).is_err());
        assert!(Intrinsics::new(1.0, 1.0, 4.0, 1.0, 4, 4).is_err());
        assert!(Intrinsics::new(1.0, 1.0, 3.9, 0.0, 4, 4).is_ok());
    }

    #[test]
    fn coarse_intrinsics_agree_with_fine_projection() {
        let k = Intrinsics::new(120.0, 120.0, 79.5, 59.5, 160, 120).unwrap();
        let kc = k.coarse(8);
        assert_eq!((kc.width, kc.height), (20, 15));
        let x = Vector3::new(0.3, -0.2, 2.0);
        let pf = project(&x, &k).unwrap();
        let pc = project(&x, &kc).unwrap();
        assert!((pc * 8.0 + Vector2::new(4.0, 4.0) - pf).norm() < 1e-12);
    }

    fn planar(k: &Intrinsics, d: f64) -> DepthMap {
        DepthMap::from_fn(k.width, k.height, |_, _| Some(d))
    }

    #[test]
    fn correspondence_identity_pose() {
        let k = Intrinsics::new(50.0, 50.0, 10.0, 8.0, 20, 16).unwrap();
        let p = Pose::new(rz(20.0), Vector3::new(1.0, 2.0, 3.0));
        let f = correspondence_field(&planar(&k, 2.0), &p, &p, &k).unwrap();
        let id = PixelField::identity(20, 16);
        for i in 0..f.len() {
            assert!(f.valid[i]);
            assert!((f.coords[i] - id.coords[i]).norm() < 1e-9);
        }
    }

    #[test]
    fn correspondence_lateral_parallax() {
        let k = Intrinsics::new(50.0, 60.0, 10.0, 8.0, 20, 16).unwrap();
        let d = 2.0;
        let tx = 0.1;
        let dst = Pose::from_translation(Vector3::new(tx, 0.0, 0.0));
        let f = correspondence_field(&planar(&k, d), &Pose::identity(), &dst, &k).unwrap();
        for y in 0..16 {
            for x in 0..20 {
                let q = f.coords[y * 20 + x];
                assert!((q.x - (x as f64 - k.fx * tx / d)).abs() < 1e-9);
                assert!((q.y - y as f64).abs() < 1e-9);
            }
        }
        // The leftmost columns leave the image but stay valid.
        assert!(f.valid[0] && !f.in_bounds[0]);
    }

    #[test]
    fn correspondence_masks_invalid_and_behind() {
        let k = Intrinsics::new(50.0, 50.0, 10.0, 8.0, 20, 16).unwrap();
        let mut depth = vec![1.0; 20 * 16];
        depth[5] = f64::NAN;
        let dm = DepthMap::from_values(20, 16, depth);
        let dst = Pose::from_translation(Vector3::new(0.0, 0.0, 5.0));
        let f = correspondence_field(&dm, &Pose::identity(), &dst, &k).unwrap();
        assert_eq!(f.valid_count(), 0);
        let wrong = Intrinsics::new(50.0, 50.0, 10.0, 8.0, 21, 16).unwrap();
        assert!(correspondence_field(&dm, &Pose::identity(), &dst, &wrong).is_err());
    }

    /// Independent per-pixel reimplementation using explicit rotation matrices
    /// built from the quaternion components.
    fn naive_correspondence(x: f64, y: f64, d: f64, src: &Pose, dst: &Pose, k: &Intrinsics) -> Option<(f64, f64)> {
        fn mat(q: [f64; 4]) -> [[f64; 3]; 3] {
            let [x, y, z, w] = q;
            [
                [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - z * w), 2.0 * (x * z + y * w)],
                [2.0 * (x * y + z * w), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - x * w)],
                [2.0 * (x * z - y * w), 2.0 * (y * z + x * w), 1.0 - 2.0 * (x * x + y * y)],
            ]
        }
        let rs = mat(src.quaternion_xyzw());
        let rd = mat(dst.quaternion_xyzw());
        let ts = src.translation();
        let td = dst.translation();
        let pc = [(x - k.cx) * d / k.fx, (y - k.cy) * d / k.fy, d];
        let mut w = [0.0; 3];
        for r in 0..3 {
            w[r] = rs[r][0] * pc[0] + rs[r][1] * pc[1] + rs[r][2] * pc[2] + ts[r];
        }
        let dw = [w[0] - td[0], w[1] - td[1], w[2] - td[2]];
        let mut c = [0.0; 3];
        for r in 0..3 {
            c[r] = rd[0][r] * dw[0] + rd[1][r] * dw[1] + rd[2][r] * dw[2];
        }
        if c[2] <= MIN_DEPTH {
            return None;
        }
        Some((k.fx * c[0] / c[2] + k.cx, k.fy * c[1] / c[2] + k.cy))
    }

    #[test]
    fn correspondence_matches_naive_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let k = Intrinsics::new(60.0, 55.0, 15.5, 11.5, 32, 24).unwrap();
        for _ in 0..20 {
            let mut rp = || {
                let axis = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                let r = UnitQuaternion::from_scaled_axis(axis * 0.3);
                Pose::new(r, Vector3::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)))
            };
            let (src, dst) = (rp(), rp());
            let vals: Vec<f64> = (0..32 * 24).map(|_| rng.gen_range(0.5..5.0)).collect();
            let dm = DepthMap::from_values(32, 24, vals.clone());
            let f = correspondence_field(&dm, &src, &dst, &k).unwrap();
            for y in 0..24 {
                for x in 0..32 {
                    let i = y * 32 + x;
                    match naive_correspondence(x as f64, y as f64, vals[i], &src, &dst, &k) {
                        Some((u, v)) => {
                            assert!(f.valid[i]);
                            assert!((f.coords[i].x - u).abs() < 1e-6 && (f.coords[i].y - v).abs() < 1e-6);
                        }
                        None => assert!(!f.valid[i]),
                    }
                }
            }
        }
    }

    proptest! {
        #[test]
        fn group_axioms(a in arb_pose(), b in arb_pose(), c in arb_pose()) {
            let l = a.compose(&b).compose(&c);
            let r = a.compose(&b.compose(&c));
            prop_assert!(l.angle_to(&r) < 1e-9 && l.distance_to(&r) < 1e-9);
            let e = a.compose(&a.inverse());
            prop_assert!(e.angle_to(&Pose::identity()) < 1e-9);
            prop_assert!(e.translation().norm() < 1e-9);
            prop_assert!((a.rotation().norm() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn compose_is_sequential_application(a in arb_pose(), b in arb_pose(),
                                              x in prop::array::uniform3(-3.0f64..3.0)) {
            let x = Vector3::from(x);
            let lhs = a.compose(&b).transform_point(&x);
            let rhs = a.transform_point(&b.transform_point(&x));
            prop_assert!((lhs - rhs).norm() < 1e-9);
        }

        #[test]
        fn exp_log_roundtrip(p in arb_pose()) {
            prop_assume!(p.rotation().angle() < PI - 1e-3);
            let q = Pose::exp(&p.log().unwrap());
            prop_assert!(q.angle_to(&p) < 1e-9 && q.distance_to(&p) < 1e-9);
        }

        #[test]
        fn project_backproject_roundtrip(x in 0.0f64..99.9, y in 0.0f64..99.9, d in 0.1f64..10.0) {
            let k = k100();
            let p = Vector2::new(x, y);
            let q = project(&backproject(&p, d, &k).unwrap(), &k).unwrap();
            prop_assert!((p - q).norm() < 1e-9);
        }

        #[test]
        fn backproject_project_recovers_point(x in prop::array::uniform3(-2.0f64..2.0), z in 0.2f64..8.0) {
            let k = k100();
            let pt = Vector3::new(x[0], x[1], z);
            let back = backproject(&project(&pt, &k).unwrap(), z, &k).unwrap();
            prop_assert!((back - pt).norm() <= 1e-9 * pt.norm());
        }

        #[test]
        fn correspondence_is_world_gauge_invariant(a in arb_pose(), w in arb_pose(), seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let k = Intrinsics::new(40.0, 40.0, 7.5, 5.5, 16, 12).unwrap();
            let b = a.compose(&Pose::exp(&Tangent::new(Vector3::new(0.05, -0.02, 0.03), Vector3::new(0.1, 0.0, -0.05))));
            let dm = DepthMap::from_values(16, 12, (0..16 * 12).map(|_| rng.gen_range(1.0..4.0)).collect());
            let f1 = correspondence_field(&dm, &a, &b, &k).unwrap();
            let f2 = correspondence_field(&dm, &w.compose(&a), &w.compose(&b), &k).unwrap();
            for i in 0..f1.len() {
                prop_assert_eq!(f1.valid[i], f2.valid[i]);
                if f1.valid[i] {
                    prop_assert!((f1.coords[i] - f2.coords[i]).norm() < 1e-6);
                }
            }
        }
    }
}
