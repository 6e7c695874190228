//! PClines-based selection of converging local orientations.
//!
//! A line of image slope `m` and intercept `b` (coordinates normalized by
//! `max(w, h)`) maps to the straight-space point `(d/(1−m), b/(1−m))` or the
//! twisted-space point `(−d/(1+m), −b/(1+m))`. Lines through a common point
//! map to collinear points in each space, so a convergent bundle of segments
//! shows up as a line-shaped cluster that RANSAC can pick out. Only the
//! bounded strips `u ∈ [0, d]` (straight) and `u ∈ [−d, 0]` (twisted) are
//! used, and every line lands in exactly one of them.

use std::collections::BTreeSet;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::DetectorParams;
use crate::error::{invalid, PithError, Result};
use crate::geom::Point;
use crate::imgproc::{preprocess, Preprocessed, RgbImage, SliceMask};
use crate::lo_sampler::{LoSegment, LoSet};
use crate::pith_solver::{estimate_lo, finish, refine_pith, PithEstimate};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PclinesParams {
    /// Distance between the parallel axes, in normalized units.
    pub d: f64,
    /// Maximum perpendicular distance of an inlier to the fitted dual line.
    pub ransac_outlier_th: f64,
    pub ransac_iters: usize,
    /// A cluster with fewer inliers is rejected.
    pub ransac_min_inliers: usize,
    pub seed: u64,
}

impl PclinesParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.d > 0.0 && self.d.is_finite()) {
            return invalid(format!("d must be > 0, got {}", self.d));
        }
        if !(self.ransac_outlier_th > 0.0) {
            return invalid(format!("ransac_outlier_th must be > 0, got {}", self.ransac_outlier_th));
        }
        if self.ransac_iters < 1 {
            return invalid("ransac_iters must be >= 1");
        }
        Ok(())
    }
}

impl Default for PclinesParams {
    fn default() -> Self {
        Self { d: 1.0, ransac_outlier_th: 0.03, ransac_iters: 1000, ransac_min_inliers: 5, seed: 0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Space {
    Straight,
    Twisted,
}

impl Space {
    pub fn as_str(self) -> &'static str {
        match self {
            Space::Straight => "straight",
            Space::Twisted => "twisted",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DualPoint<T> {
    pub space: Space,
    pub u: T,
    pub v: T,
    /// Index of the originating segment.
    pub source_index: usize,
}

/// Homogeneous coefficients `(A, B, C)` of the line `A·x + B·y + C = 0` through two points.
fn line_through<T: Scalar>(a: Point<T>, b: Point<T>) -> (T, T, T) {
    (a.y - b.y, b.x - a.x, a.x * b.y - b.x * a.y)
}

/// Dual point of the line through `seg` (image coordinates scaled by `1 / max(w, h)`).
pub fn line_to_dual<T: Scalar>(seg: &LoSegment<T>, image_size: (usize, usize), d: T) -> Result<DualPoint<T>> {
    let norm = T::one() / T::from_usize_lossy(image_size.0.max(image_size.1).max(1));
    let (p1, p2) = (seg.p1 * norm, seg.p2 * norm);
    if p1 == p2 {
        return invalid("zero-length segment has no supporting line");
    }
    Ok(dual_of_line(line_through(p1, p2), d, 0))
}

/// Strip assignment: slope `m = −A/B ≤ 0` goes to the straight space, positive
/// slopes and vertical lines (`B = 0`, dual `u = 0` in both) to the twisted one.
fn dual_of_line<T: Scalar>((a, b, c): (T, T, T), d: T, source_index: usize) -> DualPoint<T> {
    if a * b >= T::zero() && b != T::zero() {
        let w = a + b;
        DualPoint { space: Space::Straight, u: d * b / w, v: -c / w, source_index }
    } else {
        let w = b - a;
        DualPoint { space: Space::Twisted, u: -d * b / w, v: c / w, source_index }
    }
}

/// Slope and intercept `(m, b)` of the image line represented by a dual
/// point; `None` for the vertical line (`u = 0`).
pub fn dual_to_line<T: Scalar>(p: &DualPoint<T>, d: T) -> Option<(T, T)> {
    if p.u == T::zero() {
        return None;
    }
    let intercept = p.v * d / p.u;
    let slope = match p.space {
        Space::Straight => T::one() - d / p.u,
        Space::Twisted => -d / p.u - T::one(),
    };
    Some((slope, intercept))
}

/// Dual points of every segment, tagged with their source index.
pub fn dual_points<T: Scalar>(lo: &LoSet<T>, image_size: (usize, usize), d: T) -> Vec<DualPoint<T>> {
    lo.iter()
        .enumerate()
        .filter_map(|(i, s)| line_to_dual(s, image_size, d).ok().map(|p| DualPoint { source_index: i, ..p }))
        .collect()
}

/// Two-point RANSAC line fit in the dual plane. Returns the positions (into
/// `points`) of the inliers of the best model, sorted, or an empty vector when
/// fewer than `ransac_min_inliers` agree.
pub fn ransac_line_cluster<T: Scalar>(points: &[DualPoint<T>], params: &PclinesParams) -> Vec<usize> {
    ransac_line_cluster_seeded(points, params, params.seed)
}

fn ransac_line_cluster_seeded<T: Scalar>(points: &[DualPoint<T>], params: &PclinesParams, seed: u64) -> Vec<usize> {
    let n = points.len();
    if n < 2 {
        return Vec::new();
    }
    let th = T::lit(params.ransac_outlier_th);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(usize, T, usize, usize)> = None;
    for _ in 0..params.ransac_iters {
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let Some((nx, ny, c)) = unit_line(&points[i], &points[j]) else {
            continue;
        };
        let mut count = 0;
        let mut residual = T::zero();
        for p in points {
            let r = (nx * p.u + ny * p.v + c).abs();
            if r <= th {
                count += 1;
                residual = residual + r;
            }
        }
        let better = match best {
            None => true,
            Some((bc, br, _, _)) => count > bc || (count == bc && residual < br),
        };
        if better {
            best = Some((count, residual, i, j));
        }
    }
    let Some((count, _, i, j)) = best else {
        return Vec::new();
    };
    if count < params.ransac_min_inliers {
        return Vec::new();
    }
    let (nx, ny, c) = unit_line(&points[i], &points[j]).expect("best sample is non-degenerate");
    (0..n).filter(|&k| (nx * points[k].u + ny * points[k].v + c).abs() <= th).collect()
}

/// Line through two dual points as a unit normal and offset.
fn unit_line<T: Scalar>(a: &DualPoint<T>, b: &DualPoint<T>) -> Option<(T, T, T)> {
    let (dx, dy) = (b.u - a.u, b.v - a.v);
    let len = dx.hypot(dy);
    if !(len > T::epsilon()) {
        return None;
    }
    let (nx, ny) = (-dy / len, dx / len);
    Some((nx, ny, -(nx * a.u + ny * a.v)))
}

/// Per-space RANSAC selection over the dual points of `lo`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConvergingSelection {
    /// Segment indices kept, sorted.
    pub selected: Vec<usize>,
    pub straight_inliers: Vec<usize>,
    pub twisted_inliers: Vec<usize>,
}

pub fn select_converging_detailed<T: Scalar>(
    lo: &LoSet<T>,
    image_size: (usize, usize),
    params: &PclinesParams,
) -> ConvergingSelection {
    let duals = dual_points(lo, image_size, T::lit(params.d));
    let run = |space: Space, salt: u64| -> Vec<usize> {
        let pts: Vec<DualPoint<T>> = duals.iter().filter(|p| p.space == space).copied().collect();
        ransac_line_cluster_seeded(&pts, params, params.seed ^ salt)
            .into_iter()
            .map(|k| pts[k].source_index)
            .collect()
    };
    let straight = run(Space::Straight, 0x5354);
    let twisted = run(Space::Twisted, 0x5457);
    let s: BTreeSet<usize> = straight.iter().copied().collect();
    let t: BTreeSet<usize> = twisted.iter().copied().collect();
    let selected = s.symmetric_difference(&t).copied().collect();
    ConvergingSelection { selected, straight_inliers: straight, twisted_inliers: twisted }
}

/// Indices of segments whose supporting lines belong to a convergent bundle:
/// the union of both spaces' inliers minus those inliers in both.
pub fn select_converging<T: Scalar>(lo: &LoSet<T>, image_size: (usize, usize), params: &PclinesParams) -> Vec<usize> {
    select_converging_detailed(lo, image_size, params).selected
}

/// Rotates every orientation by π/2 about its midpoint.
pub fn rotate_lo_90<T: Scalar>(lo: &LoSet<T>) -> LoSet<T> {
    lo.iter()
        .map(|s| LoSegment::new(s.midpoint, s.alpha + T::FRAC_PI_2(), s.coherence))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct PclinesOutput<T> {
    pub filtered: LoSet<T>,
    /// Indices into the input of segments converging as-is.
    pub ring: Vec<usize>,
    /// Indices into the input of segments converging once rotated.
    pub radial: Vec<usize>,
}

/// Ring pass, rotated (radial) pass, then a final pass over their union.
pub fn pclines_filter<T: Scalar>(
    lo: &LoSet<T>,
    image_size: (usize, usize),
    params: &PclinesParams,
) -> Result<PclinesOutput<T>> {
    params.validate()?;
    if lo.is_empty() {
        return invalid("pclines_filter needs a non-empty LoSet");
    }
    let ring = select_converging(lo, image_size, params);
    let rotated = rotate_lo_90(lo);
    let radial = select_converging(&rotated, image_size, &PclinesParams { seed: params.seed.wrapping_add(1), ..*params });
    let mut combined = lo.subset(&ring);
    combined.segments.extend(radial.iter().map(|&i| rotated.segments[i]));
    let third = PclinesParams { seed: params.seed.wrapping_add(2), ..*params };
    let keep = select_converging(&combined, image_size, &third);
    if keep.is_empty() {
        return Err(PithError::FilteringFailed);
    }
    Ok(PclinesOutput { filtered: combined.subset(&keep), ring, radial })
}

/// CSV rows `index,space,u,v,inlier` for plotting dual-space diagnostics.
pub fn write_dual_csv<T: Scalar, W: Write>(
    lo: &LoSet<T>,
    image_size: (usize, usize),
    params: &PclinesParams,
    w: W,
) -> Result<()> {
    let sel = select_converging_detailed(lo, image_size, params);
    let inliers: BTreeSet<usize> = sel.selected.into_iter().collect();
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["index", "space", "u", "v", "inlier"])?;
    for p in dual_points(lo, image_size, T::lit(params.d)) {
        wr.write_record([
            p.source_index.to_string(),
            p.space.as_str().to_string(),
            p.u.as_f64().to_string(),
            p.v.as_f64().to_string(),
            u8::from(inliers.contains(&p.source_index)).to_string(),
        ])?;
    }
    wr.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// APD-PCL on an already preprocessed image. Falls back to the unfiltered
/// set (flagged) when filtering finds no cluster.
pub fn detect_pith_apd_pcl_preprocessed<T: Scalar>(
    pre: &Preprocessed<T>,
    params: &DetectorParams,
) -> Result<PithEstimate<T>> {
    params.validate()?;
    let lo = estimate_lo(pre, params)?;
    if lo.is_empty() {
        return Err(PithError::DetectionFailed("no local orientation passed the coherence gate".into()));
    }
    let (used, fallback) = match pclines_filter(&lo, pre.mask.size(), &params.pclines) {
        Ok(out) => (out.filtered, false),
        Err(PithError::FilteringFailed) => (lo.clone(), true),
        Err(e) => return Err(e),
    };
    let mut refinement = refine_pith(&used, &pre.mask, &params.solver)?;
    refinement.diagnostics.pclines_fallback = fallback;
    Ok(finish(pre, refinement, lo.len(), used.len()))
}

/// Full APD-PCL pipeline.
pub fn detect_pith_apd_pcl<T: Scalar>(img: &RgbImage, mask: &SliceMask, params: &DetectorParams) -> Result<PithEstimate<T>> {
    params.validate()?;
    let pre = preprocess::<T>(img, mask, params.target_width)?;
    detect_pith_apd_pcl_preprocessed(&pre, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn through(a: (f64, f64), b: (f64, f64)) -> LoSegment<f64> {
        let mid = Point::new((a.0 + b.0) / 2.0, (a.1 + b.1) / 2.0);
        LoSegment::new(mid, (b.1 - a.1).atan2(b.0 - a.0), 1.0)
    }

    #[test]
    fn horizontal_line_maps_to_straight_edge() {
        let s = through((0.0, 0.5), (1.0, 0.5));
        let p = line_to_dual(&s, (1, 1), 1.0).unwrap();
        assert_eq!(p.space, Space::Straight);
        assert_abs_diff_eq!(p.u, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.v, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn negative_unit_slope() {
        let s = through((0.2, -0.2), (0.4, -0.4));
        let p = line_to_dual(&s, (1, 1), 1.0).unwrap();
        assert_eq!(p.space, Space::Straight);
        assert_abs_diff_eq!(p.u, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(p.v, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn vertical_line_is_twisted_boundary() {
        let s = LoSegment {
            p1: Point::new(0.3, 0.4),
            p2: Point::new(0.3, 0.6),
            midpoint: Point::new(0.3, 0.5),
            alpha: std::f64::consts::FRAC_PI_2,
            coherence: 1.0,
        };
        let p = line_to_dual(&s, (1, 1), 1.0).unwrap();
        assert_eq!(p.space, Space::Twisted);
        assert_abs_diff_eq!(p.u, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.v, 0.3, epsilon = 1e-12);
        assert_eq!(dual_to_line(&p, 1.0), None);
    }

    #[test]
    fn positive_slope_goes_twisted() {
        let s = through((0.0, 0.1), (1.0, 0.6));
        let p = line_to_dual(&s, (1, 1), 1.0).unwrap();
        assert_eq!(p.space, Space::Twisted);
        assert!(p.u <= 0.0 && p.u >= -1.0);
        let (m, b) = dual_to_line(&p, 1.0).unwrap();
        assert_abs_diff_eq!(m, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(b, 0.1, epsilon = 1e-12);
    }

    #[test]
    fn zero_length_rejected() {
        let mut s = through((0.0, 0.0), (1.0, 1.0));
        s.p2 = s.p1;
        assert!(line_to_dual(&s, (10, 10), 1.0).is_err());
    }

    fn dual(u: f64, v: f64) -> DualPoint<f64> {
        DualPoint { space: Space::Straight, u, v, source_index: 0 }
    }

    #[test]
    fn ransac_collinear_all_inliers() {
        let pts: Vec<_> = (0..20).map(|i| dual(i as f64 / 20.0, 0.3 + 0.5 * i as f64 / 20.0)).collect();
        assert_eq!(ransac_line_cluster(&pts, &PclinesParams::default()), (0..20).collect::<Vec<_>>());
    }

    #[test]
    fn ransac_degenerate_inputs() {
        let params = PclinesParams::default();
        assert!(ransac_line_cluster(&[dual(0.1, 0.1)], &params).is_empty());
        let pts = [dual(0.0, 0.0), dual(1.0, 0.0), dual(0.5, 0.9)];
        assert!(ransac_line_cluster(&pts, &params).is_empty());
    }

    #[test]
    fn rotation_examples() {
        let lo = LoSet::new(vec![LoSegment::new(Point::new(4.0, 7.0), 0.0, 0.8)]);
        let r = rotate_lo_90(&lo);
        let s = r.segments[0];
        assert_abs_diff_eq!(s.alpha, std::f64::consts::FRAC_PI_2);
        assert_abs_diff_eq!(s.p1.x, 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.p1.y, 6.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.p2.y, 8.0, epsilon = 1e-12);
        assert_eq!(s.midpoint, Point::new(4.0, 7.0));
        let back = rotate_lo_90(&r).segments[0];
        assert_abs_diff_eq!(back.alpha, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn params_validation() {
        assert!(PclinesParams { d: 0.0, ..Default::default() }.validate().is_err());
        assert!(PclinesParams { ransac_outlier_th: 0.0, ..Default::default() }.validate().is_err());
        assert!(PclinesParams { ransac_iters: 0, ..Default::default() }.validate().is_err());
    }
}
