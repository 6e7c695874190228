//! Sparse sampling of the dense orientation field into local-orientation
//! segments, one per sufficiently coherent patch.

use std::io::Write;

use crate::error::{invalid, Result};
use crate::geom::Point;
use crate::imgproc::{Grid, SliceMask};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LoSamplerParams {
    /// Odd patch side, in pixels.
    pub lo_w: usize,
    /// Fraction of foreground pixels whose coherence must reach the threshold.
    pub percent_lo: f64,
}

impl LoSamplerParams {
    pub const APD: Self = Self { lo_w: 3, percent_lo: 0.7 };
    pub const APD_PCL: Self = Self { lo_w: 7, percent_lo: 0.7 };

    pub fn validate(&self) -> Result<()> {
        if self.lo_w < 3 || self.lo_w.is_multiple_of(2) {
            return invalid(format!("lo_w must be odd and >= 3, got {}", self.lo_w));
        }
        if !(self.percent_lo > 0.0 && self.percent_lo <= 1.0) {
            return invalid(format!("percent_lo must be in (0, 1], got {}", self.percent_lo));
        }
        Ok(())
    }
}

impl Default for LoSamplerParams {
    fn default() -> Self {
        Self::APD
    }
}

/// Unit half-length segment centered on a sampled pixel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LoSegment<T> {
    pub p1: Point<T>,
    pub p2: Point<T>,
    pub midpoint: Point<T>,
    /// Orientation in `[0, π)`.
    pub alpha: T,
    pub coherence: T,
}

impl<T: Scalar> LoSegment<T> {
    /// `p1,2 = midpoint ∓ (cos α, sin α)`; `alpha` is wrapped into `[0, π)`.
    pub fn new(midpoint: Point<T>, alpha: T, coherence: T) -> Self {
        let alpha = wrap_pi(alpha);
        let u = Point::from_angle(alpha);
        Self { p1: midpoint - u, p2: midpoint + u, midpoint, alpha, coherence }
    }

    /// `p2 − p1`, of length 2.
    #[inline]
    pub fn direction(&self) -> Point<T> {
        self.p2 - self.p1
    }
}

/// Wraps an angle into `[0, π)`.
pub fn wrap_pi<T: Scalar>(a: T) -> T {
    let pi = T::PI();
    let mut r = a % pi;
    if r < T::zero() {
        r = r + pi;
    }
    if r >= pi {
        r = r - pi;
    }
    r
}

/// Ordered set of local-orientation segments: the `N×4` endpoint matrix plus
/// per-row midpoint, angle and coherence.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LoSet<T> {
    pub segments: Vec<LoSegment<T>>,
}

impl<T: Scalar> LoSet<T> {
    pub fn new(segments: Vec<LoSegment<T>>) -> Self {
        Self { segments }
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, LoSegment<T>> {
        self.segments.iter()
    }

    /// Rows `[x1, y1, x2, y2]`.
    pub fn to_matrix(&self) -> Vec<[T; 4]> {
        self.segments.iter().map(|s| [s.p1.x, s.p1.y, s.p2.x, s.p2.y]).collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self { segments: indices.iter().map(|&i| self.segments[i]).collect() }
    }

    /// CSV rows `x1,y1,x2,y2,coherence`, with a header line.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["x1", "y1", "x2", "y2", "coherence"])?;
        for s in &self.segments {
            wr.write_record(
                [s.p1.x, s.p1.y, s.p2.x, s.p2.y, s.coherence].map(|v| v.as_f64().to_string()),
            )?;
        }
        wr.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

impl<T> FromIterator<LoSegment<T>> for LoSet<T> {
    fn from_iter<I: IntoIterator<Item = LoSegment<T>>>(iter: I) -> Self {
        Self { segments: iter.into_iter().collect() }
    }
}

/// Lower `(1 − percent_lo)`-quantile of the foreground coherences.
pub fn coherence_threshold<T: Scalar>(st_c: &Grid<T>, mask: &SliceMask, percent_lo: f64) -> Result<T> {
    if st_c.size() != mask.size() {
        return invalid(format!("coherence size {:?} does not match mask {:?}", st_c.size(), mask.size()));
    }
    if !(percent_lo > 0.0 && percent_lo <= 1.0) {
        return invalid(format!("percent_lo must be in (0, 1], got {percent_lo}"));
    }
    let mut values: Vec<T> = st_c
        .data()
        .iter()
        .zip(mask.inside())
        .filter_map(|(&c, &inside)| inside.then_some(c))
        .collect();
    if values.is_empty() {
        return invalid("mask has no foreground pixel");
    }
    let q = 1.0 - percent_lo;
    let k = ((values.len() - 1) as f64 * q).floor() as usize;
    let (_, kth, _) = values.select_nth_unstable_by(k, |a, b| a.partial_cmp(b).expect("finite coherence"));
    Ok(*kth)
}

/// Tiles the grid into `lo_w × lo_w` patches from the top-left (partial edge
/// patches included) and emits the most coherent foreground pixel of each
/// patch when its coherence reaches the global threshold. Zero-coherence
/// (degenerate) pixels are never emitted.
pub fn sample_lo<T: Scalar>(
    st_o: &Grid<T>,
    st_c: &Grid<T>,
    mask: &SliceMask,
    params: &LoSamplerParams,
) -> Result<LoSet<T>> {
    params.validate()?;
    if !st_o.same_shape(st_c) || st_o.size() != mask.size() {
        return invalid("orientation, coherence and mask shapes differ");
    }
    let threshold = coherence_threshold(st_c, mask, params.percent_lo)?;
    let (w, h) = st_c.size();
    let n = params.lo_w;
    let mut segments = Vec::new();
    for py in (0..h).step_by(n) {
        for px in (0..w).step_by(n) {
            let mut best: Option<(usize, usize, T)> = None;
            for y in py..(py + n).min(h) {
                for x in px..(px + n).min(w) {
                    if !mask.contains(x, y) {
                        continue;
                    }
                    let c = st_c.get(x, y);
                    if best.is_none_or(|(_, _, b)| c > b) {
                        best = Some((x, y, c));
                    }
                }
            }
            if let Some((x, y, c)) = best {
                if c >= threshold && c > T::zero() {
                    let mid = Point::new(T::from_usize_lossy(x), T::from_usize_lossy(y));
                    segments.push(LoSegment::new(mid, st_o.get(x, y), c));
                }
            }
        }
    }
    Ok(LoSet { segments })
}
