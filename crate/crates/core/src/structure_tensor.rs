//! Gaussian-windowed 2D structure tensor, local orientation and coherence.
//!
//! Orientation convention: the raw half-angle `½·atan2(2·J12, J22 − J11)` is
//! the iso-intensity (ring tangent) direction. Local orientations must point
//! across the rings, toward the pith, so this module reports the
//! dominant-gradient direction `½·atan2(2·J12, J11 − J22)` instead, which is
//! the raw angle rotated by π/2. On concentric rings that direction is radial;
//! the calibration is pinned by tests on a concentric-circle image.

use crate::error::{invalid, Result};
use crate::imgproc::{derivatives, Grid, IntensityField};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StParams {
    /// Standard deviation of the Gaussian window, in pixels.
    pub st_sigma: f64,
    /// Odd side of the square window, in pixels.
    pub st_w: usize,
}

impl StParams {
    pub const APD: Self = Self { st_sigma: 1.2, st_w: 3 };
    pub const APD_PCL: Self = Self { st_sigma: 1.2, st_w: 7 };

    pub fn validate(&self) -> Result<()> {
        if !(self.st_sigma > 0.0 && self.st_sigma.is_finite()) {
            return invalid(format!("st_sigma must be > 0, got {}", self.st_sigma));
        }
        if self.st_w < 3 || self.st_w.is_multiple_of(2) {
            return invalid(format!("st_w must be odd and >= 3, got {}", self.st_w));
        }
        Ok(())
    }
}

impl Default for StParams {
    fn default() -> Self {
        Self::APD
    }
}

/// Per-pixel symmetric tensor `[[J11, J12], [J12, J22]]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorField<T> {
    pub j11: Grid<T>,
    pub j12: Grid<T>,
    pub j22: Grid<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OrientationField<T> {
    /// Dominant-gradient angle in `[0, π)`.
    pub orientation: Grid<T>,
    /// Coherence in `[0, 1]`; zero marks degenerate pixels.
    pub coherence: Grid<T>,
}

/// Normalized, truncated 1D Gaussian of odd length `w`.
pub fn gaussian_kernel<T: Scalar>(sigma: f64, w: usize) -> Vec<T> {
    let r = (w / 2) as f64;
    let raw: Vec<f64> = (0..w)
        .map(|i| {
            let x = i as f64 - r;
            (-x * x / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|v| T::lit(v / sum)).collect()
}

/// Separable convolution with replicated borders.
fn convolve_separable<T: Scalar>(src: &Grid<T>, kernel: &[T]) -> Grid<T> {
    let (w, h) = src.size();
    let r = kernel.len() / 2;
    let mut tmp = Grid::filled(w, h, T::zero());
    for y in 0..h {
        let row = src.row(y);
        for x in 0..w {
            let mut acc = T::zero();
            for (k, &kv) in kernel.iter().enumerate() {
                let sx = (x + k).saturating_sub(r).min(w - 1);
                acc = acc + kv * row[sx];
            }
            tmp.set(x, y, acc);
        }
    }
    let mut out = Grid::filled(w, h, T::zero());
    for y in 0..h {
        for x in 0..w {
            let mut acc = T::zero();
            for (k, &kv) in kernel.iter().enumerate() {
                let sy = (y + k).saturating_sub(r).min(h - 1);
                acc = acc + kv * tmp.get(x, sy);
            }
            out.set(x, y, acc);
        }
    }
    out
}

pub fn compute_tensor<T: Scalar>(ix: &Grid<T>, iy: &Grid<T>, params: &StParams) -> Result<TensorField<T>> {
    params.validate()?;
    if !ix.same_shape(iy) {
        return invalid(format!("gradient shapes differ: {:?} vs {:?}", ix.size(), iy.size()));
    }
    let kernel = gaussian_kernel::<T>(params.st_sigma, params.st_w);
    let (w, h) = ix.size();
    let mut xx = Vec::with_capacity(w * h);
    let mut xy = Vec::with_capacity(w * h);
    let mut yy = Vec::with_capacity(w * h);
    for (&gx, &gy) in ix.data().iter().zip(iy.data()) {
        xx.push(gx * gx);
        xy.push(gx * gy);
        yy.push(gy * gy);
    }
    let plane = |v| Grid::new(w, h, v).map(|g| convolve_separable(&g, &kernel));
    Ok(TensorField { j11: plane(xx)?, j12: plane(xy)?, j22: plane(yy)? })
}

/// Closed-form eigenvalues `(λ1, λ2)`, `λ1 ≥ λ2`.
#[inline]
pub fn eigenvalues<T: Scalar>(j11: T, j12: T, j22: T) -> (T, T) {
    let half = T::lit(0.5);
    let mean = (j11 + j22) * half;
    let rad = ((j11 - j22) * half).hypot(j12);
    (mean + rad, mean - rad)
}

#[inline]
fn degenerate<T: Scalar>(j11: T, j22: T) -> bool {
    !(j11 + j22 > T::epsilon())
}

#[inline]
pub fn orientation_at<T: Scalar>(j11: T, j12: T, j22: T) -> T {
    if degenerate(j11, j22) {
        return T::zero();
    }
    let two = T::lit(2.0);
    let mut a = (two * j12).atan2(j11 - j22) / two;
    if a < T::zero() {
        a = a + T::PI();
    }
    if a >= T::PI() {
        a = a - T::PI();
    }
    a
}

#[inline]
pub fn coherence_at<T: Scalar>(j11: T, j12: T, j22: T) -> T {
    if degenerate(j11, j22) {
        return T::zero();
    }
    let (l1, l2) = eigenvalues(j11, j12, j22);
    let r = (l1 - l2) / (l1 + l2);
    (r * r).max(T::zero()).min(T::one())
}

pub fn orientation<T: Scalar>(t: &TensorField<T>) -> Grid<T> {
    zip3(t, orientation_at)
}

pub fn coherence<T: Scalar>(t: &TensorField<T>) -> Grid<T> {
    zip3(t, coherence_at)
}

fn zip3<T: Scalar>(t: &TensorField<T>, f: impl Fn(T, T, T) -> T) -> Grid<T> {
    let data: Vec<T> = t
        .j11
        .data()
        .iter()
        .zip(t.j12.data())
        .zip(t.j22.data())
        .map(|((&a, &b), &c)| f(a, b, c))
        .collect();
    Grid::new(t.j11.width(), t.j11.height(), data).expect("tensor planes share shape")
}

/// Derivatives, tensor, orientation and coherence in one pass.
pub fn local_orientation<T: Scalar>(field: &IntensityField<T>, params: &StParams) -> Result<OrientationField<T>> {
    let (ix, iy) = derivatives(field)?;
    let t = compute_tensor(&ix, &iy, params)?;
    Ok(OrientationField { orientation: orientation(&t), coherence: coherence(&t) })
}
