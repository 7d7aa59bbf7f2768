//! Rigid and similarity transforms.
use crate::{Mat3, Vec3};
// Float math for no_std builds; std, when linked anywhere in the graph, provides it inherently.
#[allow(unused_imports)]
use num_traits::Float;

/// Tolerance on `RᵀR = I` and `det R = 1`.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

/// Chains longer than this get their rotation re-projected onto SO(3).
pub const REORTHONORMALIZE_EVERY: usize = 64;

/// Rigid transform, camera-to-world: `world = rotation · camera + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseSE3 {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl Default for PoseSE3 {
    fn default() -> Self {
        Self::identity()
    }
}

impl PoseSE3 {
    pub fn identity() -> Self {
        PoseSE3 { rotation: Mat3::identity(), translation: Vec3::zeros() }
    }

    pub fn new(rotation: Mat3, translation: Vec3) -> Self {
        PoseSE3 { rotation, translation }
    }

    pub fn from_translation(translation: Vec3) -> Self {
        PoseSE3 { rotation: Mat3::identity(), translation }
    }

    /// Rotation about a unit-free axis-angle vector (radians = its norm).
    pub fn from_axis_angle(axis_angle: Vec3, translation: Vec3) -> Self {
        PoseSE3 { rotation: rotation_from_axis_angle(&axis_angle), translation }
    }

    #[inline]
    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &PoseSE3) -> PoseSE3 {
        PoseSE3 {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> PoseSE3 {
        let rt = self.rotation.transpose();
        PoseSE3 { rotation: rt, translation: -(rt * self.translation) }
    }

    /// Position of the camera center in world coordinates.
    pub fn center(&self) -> Vec3 {
        self.translation
    }

    pub fn is_valid(&self) -> bool {
        is_rotation(&self.rotation) && self.translation.iter().all(|v| v.is_finite())
    }

    pub fn orthonormalized(&self) -> PoseSE3 {
        PoseSE3 { rotation: nearest_rotation(&self.rotation), translation: self.translation }
    }
}

/// `a ∘ b`.
pub fn compose(a: &PoseSE3, b: &PoseSE3) -> PoseSE3 {
    a.compose(b)
}

pub fn invert(p: &PoseSE3) -> PoseSE3 {
    p.inverse()
}

/// Scaled rigid transform `x ↦ s·R·x + T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimTransform {
    pub scale: f64,
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl Default for SimTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl SimTransform {
    pub fn identity() -> Self {
        SimTransform { scale: 1.0, rotation: Mat3::identity(), translation: Vec3::zeros() }
    }

    pub fn new(scale: f64, rotation: Mat3, translation: Vec3) -> Self {
        SimTransform { scale, rotation, translation }
    }

    #[inline]
    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p * self.scale + self.translation
    }

    pub fn inverse(&self) -> SimTransform {
        let rt = self.rotation.transpose();
        let inv_s = 1.0 / self.scale;
        SimTransform { scale: inv_s, rotation: rt, translation: -(rt * self.translation) * inv_s }
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &SimTransform) -> SimTransform {
        SimTransform {
            scale: self.scale * other.scale,
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation * self.scale + self.translation,
        }
    }

    /// Rigid pose of a camera after its world frame has been mapped by `self`.
    ///
    /// The camera-frame geometry is scaled by `self.scale`; the returned pose maps
    /// that scaled camera frame into the new world frame.
    pub fn transform_pose(&self, pose: &PoseSE3) -> PoseSE3 {
        PoseSE3 {
            rotation: self.rotation * pose.rotation,
            translation: self.rotation * pose.translation * self.scale + self.translation,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.scale > 0.0 && self.scale.is_finite() && is_rotation(&self.rotation)
    }
}

impl From<PoseSE3> for SimTransform {
    fn from(p: PoseSE3) -> Self {
        SimTransform { scale: 1.0, rotation: p.rotation, translation: p.translation }
    }
}

pub fn is_rotation(r: &Mat3) -> bool {
    let ortho = (r.transpose() * r - Mat3::identity()).norm();
    ortho <= ROTATION_TOLERANCE && (r.determinant() - 1.0).abs() <= ROTATION_TOLERANCE
}

/// Polar projection onto SO(3) via SVD, with the reflection removed.
pub fn nearest_rotation(m: &Mat3) -> Mat3 {
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd requested u");
    let v_t = svd.v_t.expect("svd requested v_t");
    let d = (u * v_t).determinant();
    let mut fix = Mat3::identity();
    if d < 0.0 {
        fix[(2, 2)] = -1.0;
    }
    u * fix * v_t
}

/// Rodrigues formula.
pub fn rotation_from_axis_angle(w: &Vec3) -> Mat3 {
    let theta = w.norm();
    if theta < 1e-15 {
        return Mat3::identity();
    }
    let k = w / theta;
    let kx = Mat3::new(0.0, -k.z, k.y, k.z, 0.0, -k.x, -k.y, k.x, 0.0);
    Mat3::identity() + kx * theta.sin() + kx * kx * (1.0 - theta.cos())
}

/// Geodesic angle of a rotation matrix (radians).
pub fn rotation_angle(r: &Mat3) -> f64 {
    // atan2 form stays accurate near zero where acos((tr-1)/2) does not.
    let skew = Vec3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]);
    let s = skew.norm() * 0.5;
    let c = (r.trace() - 1.0) * 0.5;
    s.atan2(c)
}

/// Geodesic distance between two rotations.
pub fn rotation_distance(a: &Mat3, b: &Mat3) -> f64 {
    rotation_angle(&(a.transpose() * b))
}

/// Accumulates relative poses left-to-right, re-projecting the rotation onto SO(3)
/// every [`REORTHONORMALIZE_EVERY`] steps.
#[derive(Debug, Clone)]
pub struct PoseChain {
    current: PoseSE3,
    steps: usize,
}

impl PoseChain {
    pub fn new(start: PoseSE3) -> Self {
        PoseChain { current: start, steps: 0 }
    }

    pub fn push(&mut self, relative: &PoseSE3) -> PoseSE3 {
        self.current = self.current.compose(relative);
        self.steps += 1;
        if self.steps.is_multiple_of(REORTHONORMALIZE_EVERY) {
            self.current = self.current.orthonormalized();
        }
        self.current
    }

    pub fn current(&self) -> PoseSE3 {
        self.current
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::random_pose;
    use rand::SeedableRng;

    #[test]
    fn identity_compose() {
        let i = compose(&PoseSE3::identity(), &PoseSE3::identity());
        assert_eq!(i, PoseSE3::identity());
    }

    #[test]
    fn invert_translation() {
        let p = PoseSE3::from_translation(Vec3::new(1.0, -2.0, 3.0));
        assert_eq!(invert(&p).translation, Vec3::new(-1.0, 2.0, -3.0));
    }

    #[test]
    fn compose_with_inverse_is_identity() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(3);
        for _ in 0..100 {
            let p = random_pose(&mut rng);
            assert!(p.is_valid());
            let e = compose(&p, &invert(&p));
            assert!((e.rotation - Mat3::identity()).norm() < 1e-9);
            assert!(e.translation.norm() < 1e-9);
        }
    }

    #[test]
    fn sim_inverse_roundtrip() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(5);
        let p = random_pose(&mut rng);
        let s = SimTransform::new(2.5, p.rotation, p.translation);
        let x = Vec3::new(0.3, -1.0, 2.0);
        let back = s.inverse().apply(&s.apply(&x));
        assert!((back - x).norm() < 1e-12);
        let c = s.compose(&s.inverse());
        assert!((c.scale - 1.0).abs() < 1e-12 && c.translation.norm() < 1e-12);
    }

    #[test]
    fn transform_pose_matches_point_mapping() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(8);
        let p = random_pose(&mut rng);
        let q = random_pose(&mut rng);
        let s = SimTransform::new(0.7, q.rotation, q.translation);
        let x = Vec3::new(0.1, 0.2, 1.5);
        let direct = s.apply(&p.apply(&x));
        let via_pose = s.transform_pose(&p).apply(&(x * s.scale));
        assert!((direct - via_pose).norm() < 1e-12);
    }

    #[test]
    fn long_chain_stays_orthonormal() {
        let step = PoseSE3::from_axis_angle(Vec3::new(0.01, 0.02, -0.015), Vec3::new(0.01, 0.0, 0.02));
        let mut chain = PoseChain::new(PoseSE3::identity());
        for _ in 0..1000 {
            chain.push(&step);
        }
        assert!(chain.current().is_valid());
    }

    #[test]
    fn nearest_rotation_fixes_reflection() {
        let m = Mat3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0);
        let r = nearest_rotation(&m);
        assert!(is_rotation(&r));
    }

    #[test]
    fn rotation_angle_small() {
        let r = rotation_from_axis_angle(&Vec3::new(0.0, 0.0, 1e-12));
        assert!((rotation_angle(&r) - 1e-12).abs() < 1e-20);
        let r = rotation_from_axis_angle(&Vec3::new(0.0, 2.0, 0.0));
        assert!((rotation_angle(&r) - 2.0).abs() < 1e-12);
    }
}
