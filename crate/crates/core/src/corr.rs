//! Dense correspondences: flow fields, long-term tracks, bilinear warping of clouds
//! and the pseudo-confidence masks that gate every correspondence.
use alloc::format;
use alloc::vec::Vec;

use crate::raster::bilinear_taps;
use crate::{DepthMap, Error, FrameCloud, Grid, Result, Vec3};

/// Relative depth jump that marks a flying pixel unless configured otherwise.
pub const DEFAULT_EDGE_THRESHOLD: f64 = 0.05;

/// Pixel displacements from frame `i` to frame `i + 1`: pixel `p` of frame `i`
/// lands at `p + (du, dv)` in frame `i + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub du: Grid<f64>,
    pub dv: Grid<f64>,
    pub valid: Grid<bool>,
}

impl FlowField {
    /// Non-finite components are forced invalid.
    pub fn new(du: Grid<f64>, dv: Grid<f64>, valid: Grid<bool>) -> Result<Self> {
        du.expect_dims(&dv, "flow components")?;
        du.expect_dims(&valid, "flow validity")?;
        let valid = Grid::from_fn(du.width(), du.height(), |r, c| {
            valid[(r, c)] && du[(r, c)].is_finite() && dv[(r, c)].is_finite()
        });
        Ok(FlowField { du, dv, valid })
    }

    /// Validity taken from the components: NaN marks a missing vector.
    pub fn from_components(du: Grid<f64>, dv: Grid<f64>) -> Result<Self> {
        let valid = Grid::filled(du.width(), du.height(), true);
        Self::new(du, dv, valid)
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        FlowField {
            du: Grid::filled(width, height, 0.0),
            dv: Grid::filled(width, height, 0.0),
            valid: Grid::filled(width, height, true),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.du.dims()
    }

    /// Continuous position in the next frame that pixel `(row, col)` flows to.
    pub fn target(&self, row: usize, col: usize) -> Option<(f64, f64)> {
        if !self.valid[(row, col)] {
            return None;
        }
        Some((col as f64 + 0.5 + self.du[(row, col)], row as f64 + 0.5 + self.dv[(row, col)]))
    }
}

/// Per-pixel confidence in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceMask {
    values: Grid<f64>,
}

impl ConfidenceMask {
    pub fn new(values: Grid<f64>) -> Result<Self> {
        if let Some(v) = values.as_slice().iter().find(|v| !(**v >= 0.0 && **v <= 1.0)) {
            return Err(Error::InvalidParameter(format!("confidence value {v} outside [0, 1]")));
        }
        Ok(ConfidenceMask { values })
    }

    pub fn ones(width: usize, height: usize) -> Self {
        ConfidenceMask { values: Grid::filled(width, height, 1.0) }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        ConfidenceMask { values: Grid::filled(width, height, 0.0) }
    }

    pub fn from_binary(mask: &Grid<bool>) -> Self {
        ConfidenceMask { values: mask.map(|&b| if b { 1.0 } else { 0.0 }) }
    }

    pub fn values(&self) -> &Grid<f64> {
        &self.values
    }

    pub fn dims(&self) -> (usize, usize) {
        self.values.dims()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[(row, col)]
    }

    /// Sum of all confidences.
    pub fn mass(&self) -> f64 {
        self.values.as_slice().iter().sum()
    }
}

/// Long-term 2D tracks. Positions are stored track-major: `positions[n * T + t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackSet {
    pub num_tracks: usize,
    pub num_frames: usize,
    pub positions: Vec<[f64; 2]>,
    pub visible: Vec<bool>,
    pub query_frame: usize,
}

impl TrackSet {
    pub fn new(
        num_tracks: usize,
        num_frames: usize,
        positions: Vec<[f64; 2]>,
        visible: Vec<bool>,
        query_frame: usize,
    ) -> Result<Self> {
        let n = num_tracks * num_frames;
        if positions.len() != n {
            return Err(Error::CountMismatch { context: "track positions", left: n, right: positions.len() });
        }
        if visible.len() != n {
            return Err(Error::CountMismatch { context: "track visibility", left: n, right: visible.len() });
        }
        if num_frames > 0 && query_frame >= num_frames {
            return Err(Error::InvalidParameter(format!("query frame {query_frame} >= {num_frames} frames")));
        }
        if positions.iter().zip(&visible).any(|(p, &v)| v && !(p[0].is_finite() && p[1].is_finite())) {
            return Err(Error::NonFinite { term: "visible track position" });
        }
        Ok(TrackSet { num_tracks, num_frames, positions, visible, query_frame })
    }

    /// Position of `track` in `frame` if it is visible there.
    pub fn position(&self, track: usize, frame: usize) -> Option<[f64; 2]> {
        let i = track * self.num_frames + frame;
        if self.visible[i] {
            Some(self.positions[i])
        } else {
            None
        }
    }

    /// Subset of tracks, in the given order.
    pub fn select(&self, tracks: &[usize]) -> TrackSet {
        let t = self.num_frames;
        let mut positions = Vec::with_capacity(tracks.len() * t);
        let mut visible = Vec::with_capacity(tracks.len() * t);
        for &n in tracks {
            positions.extend_from_slice(&self.positions[n * t..(n + 1) * t]);
            visible.extend_from_slice(&self.visible[n * t..(n + 1) * t]);
        }
        TrackSet { num_tracks: tracks.len(), num_frames: t, positions, visible, query_frame: self.query_frame }
    }
}

/// Bilinear sample of a cloud at continuous position `(x, y)`. Every corner with
/// non-zero weight must be valid.
pub fn sample_point(cloud: &FrameCloud, x: f64, y: f64) -> Option<Vec3> {
    let taps = bilinear_taps(cloud.width(), cloud.height(), x, y)?;
    let points = cloud.points.as_slice();
    let valid = cloud.valid.as_slice();
    let mut acc = Vec3::zeros();
    for (idx, w) in taps {
        if w > 0.0 {
            if !valid[idx] {
                return None;
            }
            acc += points[idx] * w;
        }
    }
    Some(acc)
}

pub fn sample_cloud(cloud: &FrameCloud, pts: &[[f64; 2]]) -> Vec<Option<Vec3>> {
    pts.iter().map(|p| sample_point(cloud, p[0], p[1])).collect()
}

/// `X^{←}`: for each pixel of the source frame, the target cloud interpolated at the
/// position the flow sends it to.
pub fn warp_cloud(target: &FrameCloud, flow: &FlowField) -> Result<FrameCloud> {
    flow.du.expect_dims(&target.points, "warp_cloud")?;
    let (w, h) = target.dims();
    let mut valid = Grid::filled(w, h, false);
    let points =
        Grid::from_fn(w, h, |row, col| match flow.target(row, col).and_then(|(x, y)| sample_point(target, x, y)) {
            Some(p) => {
                valid[(row, col)] = true;
                p
            }
            None => Vec3::zeros(),
        });
    Ok(FrameCloud { points, valid })
}

/// Zero where any 8-neighbor's depth differs by more than `rel_threshold` relative to
/// the nearer of the two, and on invalid depth; one elsewhere. Invalid neighbors are
/// not compared.
pub fn flying_pixel_mask(depth: &DepthMap, rel_threshold: f64) -> Result<ConfidenceMask> {
    if !(rel_threshold > 0.0) || !rel_threshold.is_finite() {
        return Err(Error::InvalidParameter(format!("edge threshold must be positive, got {rel_threshold}")));
    }
    let (w, h) = depth.values.dims();
    let values = Grid::from_fn(w, h, |row, col| {
        let Some(d) = depth.get(row, col) else { return 0.0 };
        for dr in -1i64..=1 {
            for dc in -1i64..=1 {
                if dr == 0 && dc == 0 {
                    continue;
                }
                let (r, c) = (row as i64 + dr, col as i64 + dc);
                if r < 0 || c < 0 || r >= h as i64 || c >= w as i64 {
                    continue;
                }
                if let Some(n) = depth.get(r as usize, c as usize) {
                    if (n - d).abs() > rel_threshold * n.min(d) {
                        return 0.0;
                    }
                }
            }
        }
        1.0
    });
    Ok(ConfidenceMask { values })
}

/// `(1 − dynamic) · edges · flow_valid`, pointwise.
pub fn compose_pseudo_mask(
    dynamic: &ConfidenceMask,
    edges: &ConfidenceMask,
    flow_valid: &Grid<bool>,
) -> Result<ConfidenceMask> {
    dynamic.values.expect_dims(&edges.values, "pseudo mask edges")?;
    dynamic.values.expect_dims(flow_valid, "pseudo mask flow validity")?;
    let (w, h) = dynamic.dims();
    let values = Grid::from_fn(w, h, |r, c| {
        let keep = (1.0 - dynamic.get(r, c)) * edges.get(r, c);
        if flow_valid[(r, c)] {
            keep
        } else {
            0.0
        }
    });
    Ok(ConfidenceMask { values })
}

/// Mask value carried to a continuous position: the minimum over the bilinear
/// corners that contribute, zero outside the image.
pub fn sample_mask_min(mask: &ConfidenceMask, x: f64, y: f64) -> f64 {
    let Some(taps) = bilinear_taps(mask.values.width(), mask.values.height(), x, y) else {
        return 0.0;
    };
    let values = mask.values.as_slice();
    taps.iter().filter(|t| t.1 > 0.0).map(|t| values[t.0]).fold(1.0, f64::min)
}

/// Weighted pixel correspondences between frame `i` (`src`) and frame `j` (`dst`),
/// both as continuous positions. Only pairs with positive weight are kept.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PixelPairs {
    pub src: Vec<[f64; 2]>,
    pub dst: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

impl PixelPairs {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    fn push(&mut self, src: [f64; 2], dst: [f64; 2], w: f64) {
        if w > 0.0 {
            self.src.push(src);
            self.dst.push(dst);
            self.weights.push(w);
        }
    }
}

/// Flow-induced pairs. The weight of pixel `p` is `mask_i(p) · mask_j(p + flow)`, with
/// `mask_j` carried into frame `i` by [`sample_mask_min`]; invalid flow gives zero.
pub fn flow_pairs(flow: &FlowField, mask_i: &ConfidenceMask, mask_j: &ConfidenceMask) -> Result<PixelPairs> {
    flow.du.expect_dims(mask_i.values(), "flow pairs mask_i")?;
    flow.du.expect_dims(mask_j.values(), "flow pairs mask_j")?;
    let (w, h) = flow.dims();
    let mut pairs = PixelPairs::default();
    for row in 0..h {
        for col in 0..w {
            let Some((x, y)) = flow.target(row, col) else { continue };
            let wi = mask_i.get(row, col);
            if wi <= 0.0 {
                continue;
            }
            let (u, v) = (col as f64 + 0.5, row as f64 + 0.5);
            pairs.push([u, v], [x, y], wi * sample_mask_min(mask_j, x, y));
        }
    }
    Ok(pairs)
}

/// Track-induced pairs between frames `i` and `j`: every track visible in both,
/// weighted by both masks at the track positions.
pub fn track_pairs(
    tracks: &TrackSet,
    i: usize,
    j: usize,
    mask_i: &ConfidenceMask,
    mask_j: &ConfidenceMask,
) -> Result<PixelPairs> {
    if i >= tracks.num_frames || j >= tracks.num_frames {
        return Err(Error::InvalidParameter(format!(
            "track frames ({i}, {j}) outside a {}-frame track set",
            tracks.num_frames
        )));
    }
    let mut pairs = PixelPairs::default();
    for n in 0..tracks.num_tracks {
        let (Some(a), Some(b)) = (tracks.position(n, i), tracks.position(n, j)) else { continue };
        let w = sample_mask_min(mask_i, a[0], a[1]) * sample_mask_min(mask_j, b[0], b[1]);
        pairs.push(a, b, w);
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::random_cloud;
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn linear_cloud(w: usize, h: usize) -> FrameCloud {
        let points = Grid::from_fn(w, h, |r, c| Vec3::new(c as f64 * 0.1, r as f64 * 0.2, 2.0 + 0.01 * c as f64));
        FrameCloud::new(points, Grid::filled(w, h, true)).unwrap()
    }

    #[test]
    fn zero_flow_is_identity() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(1);
        let mut c = random_cloud(&mut rng, 7, 5);
        c.valid[(2, 3)] = false;
        let out = warp_cloud(&c, &FlowField::zeros(7, 5)).unwrap();
        for r in 0..5 {
            for col in 0..7 {
                if c.valid[(r, col)] {
                    assert_eq!(out.get(r, col), c.get(r, col));
                } else {
                    assert!(!out.valid[(r, col)]);
                }
            }
        }
    }

    #[test]
    fn integer_flow_shifts_exactly() {
        let c = linear_cloud(6, 4);
        let flow = FlowField::from_components(Grid::filled(6, 4, 1.0), Grid::filled(6, 4, 0.0)).unwrap();
        let out = warp_cloud(&c, &flow).unwrap();
        for r in 0..4 {
            for col in 0..5 {
                assert_eq!(out.get(r, col).unwrap(), c.get(r, col + 1).unwrap());
            }
            assert!(!out.valid[(r, 5)], "shifted out of the image");
        }
    }

    #[test]
    fn warp_marks_invalid_flow_and_invalid_corners() {
        let mut c = linear_cloud(6, 4);
        c.valid[(1, 3)] = false;
        let mut flow = FlowField::from_components(Grid::filled(6, 4, 0.5), Grid::filled(6, 4, 0.0)).unwrap();
        flow.valid[(0, 0)] = false;
        let out = warp_cloud(&c, &flow).unwrap();
        assert!(!out.valid[(0, 0)]);
        assert!(!out.valid[(1, 2)] && !out.valid[(1, 3)]);
        assert!(out.valid[(1, 1)]);
    }

    #[test]
    fn sample_at_center_and_midpoint() {
        let c = linear_cloud(5, 5);
        assert_eq!(sample_point(&c, 2.5, 3.5).unwrap(), c.get(3, 2).unwrap());
        let mid = sample_point(&c, 2.0, 3.5).unwrap();
        let expect = (c.get(3, 1).unwrap() + c.get(3, 2).unwrap()) * 0.5;
        assert!((mid - expect).norm() < 1e-15);
        assert!(sample_point(&c, -0.1, 2.0).is_none());
        assert_eq!(sample_cloud(&c, &[[0.5, 0.5], [100.0, 0.0]]).iter().filter(|p| p.is_some()).count(), 1);
    }

    #[test]
    fn constant_plane_has_no_edges() {
        let d = DepthMap::new(Grid::filled(9, 7, 1.7));
        let m = flying_pixel_mask(&d, 0.05).unwrap();
        assert!(m.values().as_slice().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn step_edge_zeroes_two_columns() {
        let d = DepthMap::new(Grid::from_fn(10, 6, |_, c| if c < 5 { 1.0 } else { 2.0 }));
        let m = flying_pixel_mask(&d, 0.05).unwrap();
        for r in 0..6 {
            for c in 0..10 {
                let expected = if c == 4 || c == 5 { 0.0 } else { 1.0 };
                assert_eq!(m.get(r, c), expected, "({r},{c})");
            }
        }
    }

    #[test]
    fn invalid_depth_is_masked() {
        let mut values = Grid::filled(4, 4, 1.0);
        values[(1, 1)] = 0.0;
        let m = flying_pixel_mask(&DepthMap::new(values), 0.05).unwrap();
        assert_eq!(m.get(1, 1), 0.0);
        assert_eq!(m.get(1, 2), 1.0);
        assert!(flying_pixel_mask(&DepthMap::new(Grid::filled(2, 2, 1.0)), 0.0).is_err());
    }

    #[test]
    fn pseudo_mask_cases() {
        let ones = ConfidenceMask::ones(4, 3);
        let zeros = ConfidenceMask::zeros(4, 3);
        let valid = Grid::filled(4, 3, true);
        let m = compose_pseudo_mask(&zeros, &ones, &valid).unwrap();
        assert!(m.values().as_slice().iter().all(|&v| v == 1.0));
        let mut hand = Grid::filled(4, 3, false);
        hand[(1, 1)] = true;
        hand[(1, 2)] = true;
        let m = compose_pseudo_mask(&ConfidenceMask::from_binary(&hand), &ones, &valid).unwrap();
        for r in 0..3 {
            for c in 0..4 {
                assert_eq!(m.get(r, c), if hand[(r, c)] { 0.0 } else { 1.0 });
            }
        }
        assert!(compose_pseudo_mask(&ConfidenceMask::ones(3, 3), &ones, &valid).is_err());
    }

    #[test]
    fn confidence_range_checked() {
        assert!(ConfidenceMask::new(Grid::filled(2, 2, 1.5)).is_err());
        assert!(ConfidenceMask::new(Grid::filled(2, 2, f64::NAN)).is_err());
    }

    #[test]
    fn flow_pairs_weights() {
        let mut mask_j = ConfidenceMask::ones(5, 4);
        mask_j.values[(1, 3)] = 0.0;
        let flow = FlowField::from_components(Grid::filled(5, 4, 0.5), Grid::filled(5, 4, 0.0)).unwrap();
        let pairs = flow_pairs(&flow, &ConfidenceMask::ones(5, 4), &mask_j).unwrap();
        // last column leaves the image, row 1 cols 2 and 3 touch the zeroed pixel
        assert_eq!(pairs.len(), 4 * 4 - 2);
        assert!(pairs.weights.iter().all(|&w| w == 1.0));
    }

    #[test]
    fn track_pairs_need_visibility() {
        let positions = alloc::vec![[1.5, 1.5], [2.5, 1.5], [1.5, 2.5], [1.5, 2.5]];
        let tracks = TrackSet::new(2, 2, positions, alloc::vec![true, true, true, false], 0).unwrap();
        let m = ConfidenceMask::ones(4, 4);
        let pairs = track_pairs(&tracks, 0, 1, &m, &m).unwrap();
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs.dst[0], [2.5, 1.5]);
        assert!(track_pairs(&tracks, 0, 2, &m, &m).is_err());
        assert!(TrackSet::new(1, 2, alloc::vec![[0.0, 0.0]], alloc::vec![true, true], 0).is_err());
        assert!(TrackSet::new(1, 1, alloc::vec![[f64::NAN, 0.0]], alloc::vec![true], 0).is_err());
    }

    proptest! {
        #[test]
        fn edge_mask_is_scale_invariant(seed in 0u64..500, c in 0.01f64..100.0) {
            use rand::Rng;
            let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
            let d = DepthMap::new(Grid::from_fn(9, 7, |_, _| if rng.random_bool(0.3) { 2.0 } else { rng.random_range(1.0..1.08) }));
            let a = flying_pixel_mask(&d, 0.05).unwrap();
            let b = flying_pixel_mask(&d.scaled(c), 0.05).unwrap();
            let diff = a.values().as_slice().iter().zip(b.values().as_slice()).filter(|(x, y)| x != y).count();
            prop_assert!(diff == 0);
        }

        #[test]
        fn pseudo_mask_is_monotone(seed in 0u64..500) {
            use rand::Rng;
            let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
            let mut g = |lo: f64| ConfidenceMask::new(Grid::from_fn(5, 4, |_, _| rng.random_range(lo..1.0))).unwrap();
            let dynamic = g(0.0);
            let edges = g(0.0);
            let valid = Grid::from_fn(5, 4, |r, c| (r + c) % 3 != 0);
            let base = compose_pseudo_mask(&dynamic, &edges, &valid).unwrap();
            let less_dynamic = ConfidenceMask::new(dynamic.values().map(|v| v * 0.5)).unwrap();
            let more_edges = ConfidenceMask::new(edges.values().map(|v| (v + 0.3).min(1.0))).unwrap();
            let raised = compose_pseudo_mask(&less_dynamic, &more_edges, &Grid::filled(5, 4, true)).unwrap();
            for (a, b) in base.values().as_slice().iter().zip(raised.values().as_slice()) {
                prop_assert!(b >= a);
                prop_assert!((0.0..=1.0).contains(b));
            }
        }
    }
}
