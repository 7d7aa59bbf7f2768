use mono4d_core::{FrameCloud, Vec3};

/// Whether the four bilinear corners around `(x, y)` are valid and coplanar, which
/// excludes creases where two walls meet without a depth jump.
pub fn on_one_plane(cloud: &FrameCloud, x: f64, y: f64) -> bool {
    let (c0, r0) = ((x - 0.5).floor() as usize, (y - 0.5).floor() as usize);
    let corners: Option<Vec<Vec3>> = [(r0, c0), (r0, c0 + 1), (r0 + 1, c0), (r0 + 1, c0 + 1)]
        .iter()
        .map(|&(r, c)| if r < cloud.height() && c < cloud.width() { cloud.get(r, c) } else { None })
        .collect();
    let Some(p) = corners else { return false };
    let n = (p[1] - p[0]).cross(&(p[2] - p[0]));
    n.norm() > 0.0 && (n.normalize().dot(&(p[3] - p[0]))).abs() < 1e-9
}
