//! Collinearity cost, its maximization, and the APD refinement loop.
//!
//! The cost of a candidate center `c` is the mean over segments of
//! `cos²θᵢ`, where `θᵢ` is the angle between the segment direction and the
//! ray from `c` through the segment midpoint. It equals 1 exactly when every
//! segment lies on a line through `c`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::DetectorParams;
use crate::error::{invalid, PithError, Result};
use crate::geom::{Point, Rect};
use crate::imgproc::{preprocess, Preprocessed, RgbImage, SliceMask};
use crate::lo_sampler::{sample_lo, LoSet};
use crate::scalar::Scalar;
use crate::structure_tensor::local_orientation;

/// Below this distance (pixels) a midpoint is treated as coinciding with the query point.
pub const COINCIDENT_DIST: f64 = 1e-9;

const MAX_OPT_ITERS: usize = 200;
const STEP_TOL: f64 = 1e-8;
const GRAD_TOL: f64 = 1e-10;
const ARMIJO_C1: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;
const SINGULAR_JITTER: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverParams {
    /// The refinement window side is `max(w, h) / r_f`.
    pub r_f: f64,
    /// Stop when consecutive centers move less than this, in pixels.
    pub eps: f64,
    pub max_iter: usize,
    /// Seeds the jitter applied when an iterate lands on a segment midpoint.
    pub seed: u64,
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.r_f > 1.0 && self.r_f.is_finite()) {
            return invalid(format!("r_f must be > 1, got {}", self.r_f));
        }
        if !(self.eps > 0.0) {
            return invalid(format!("eps must be > 0, got {}", self.eps));
        }
        if self.max_iter < 1 {
            return invalid("max_iter must be >= 1");
        }
        Ok(())
    }
}

impl Default for SolverParams {
    fn default() -> Self {
        Self { r_f: 7.0, eps: 1e-5, max_iter: 5, seed: 0 }
    }
}

#[inline]
fn coincident<T: Scalar>(r: Point<T>) -> bool {
    r.norm() < T::lit(COINCIDENT_DIST)
}

/// `(cos²θ, ∂cos²θ/∂c)` for one segment; the gradient is `None` at a coincident midpoint.
#[inline]
fn term<T: Scalar>(c: Point<T>, mid: Point<T>, dir: Point<T>) -> (T, Option<Point<T>>) {
    let r = mid - c;
    if coincident(r) {
        return (T::one(), None);
    }
    let rn = r.norm();
    let dn = dir.norm();
    let cos = r.dot(dir) / (rn * dn);
    let two = T::lit(2.0);
    // d(cos²)/dr = 2·cos/|r| · (d/|d| − cos·r/|r|); d/dc = −d/dr
    let k = two * cos / rn;
    let g = Point::new(k * (dir.x / dn - cos * r.x / rn), k * (dir.y / dn - cos * r.y / rn));
    ((cos * cos).min(T::one()), Some(-g))
}

/// Mean `cos²θᵢ` of the segments seen from `c`; in `[0, 1]`.
pub fn cost<T: Scalar>(c: Point<T>, lo: &LoSet<T>) -> Result<T> {
    if lo.is_empty() {
        return invalid("cost of an empty LoSet");
    }
    let sum: T = lo.iter().map(|s| term(c, s.midpoint, s.direction()).0).sum();
    Ok(sum / T::from_usize_lossy(lo.len()))
}

/// Analytic gradient of [`cost`] with respect to `c`.
pub fn cost_gradient<T: Scalar>(c: Point<T>, lo: &LoSet<T>) -> Result<Point<T>> {
    cost_and_gradient(c, lo).map(|(_, g)| g)
}

/// Cost and gradient in one sweep.
pub fn cost_and_gradient<T: Scalar>(c: Point<T>, lo: &LoSet<T>) -> Result<(T, Point<T>)> {
    if lo.is_empty() {
        return invalid("cost of an empty LoSet");
    }
    let mut h = T::zero();
    let mut g = Point::new(T::zero(), T::zero());
    for (i, s) in lo.iter().enumerate() {
        let (v, dv) = term(c, s.midpoint, s.direction());
        h = h + v;
        g = g + dv.ok_or(PithError::Singular { index: i })?;
    }
    let n = T::from_usize_lossy(lo.len());
    Ok((h / n, g * (T::one() / n)))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LsInit<T> {
    pub center: Point<T>,
    /// The normal equations were rank deficient; `center` is the region center.
    pub degenerate: bool,
}

/// Point minimizing the summed squared distance to the segment-supported
/// lines, clamped to `region`.
pub fn least_squares_init<T: Scalar>(lo: &LoSet<T>, region: &Rect<T>) -> LsInit<T> {
    let (mut a00, mut a01, mut a11) = (T::zero(), T::zero(), T::zero());
    let (mut b0, mut b1) = (T::zero(), T::zero());
    for s in lo.iter() {
        let d = s.direction();
        let dn = d.norm();
        if dn == T::zero() {
            continue;
        }
        let n = Point::new(-d.y / dn, d.x / dn);
        let np = n.dot(s.midpoint);
        a00 = a00 + n.x * n.x;
        a01 = a01 + n.x * n.y;
        a11 = a11 + n.y * n.y;
        b0 = b0 + n.x * np;
        b1 = b1 + n.y * np;
    }
    let det = a00 * a11 - a01 * a01;
    let trace = a00 + a11;
    if !(det > T::epsilon() * T::lit(1e4) * trace * trace) {
        return LsInit { center: region.center(), degenerate: true };
    }
    let c = Point::new((a11 * b0 - a01 * b1) / det, (a00 * b1 - a01 * b0) / det);
    LsInit { center: region.clamp(c), degenerate: false }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Optimum<T> {
    pub center: Point<T>,
    pub value: T,
    pub iterations: usize,
    /// Stopped on the step or gradient tolerance.
    pub converged: bool,
    /// The line search could not improve the cost; `center` is the best iterate.
    pub stalled: bool,
    /// Fewer than two segments: the maximizer is not unique.
    pub underdetermined: bool,
}

/// Evaluates `-cost` and its gradient, nudging `x` off any segment midpoint.
struct Objective<'a, T> {
    lo: &'a LoSet<T>,
    region: Rect<T>,
    rng: ChaCha8Rng,
}

impl<T: Scalar> Objective<'_, T> {
    fn value(&self, x: Point<T>) -> T {
        -cost(x, self.lo).expect("non-empty")
    }

    fn value_grad(&mut self, mut x: Point<T>) -> (Point<T>, T, Point<T>) {
        loop {
            match cost_and_gradient(x, self.lo) {
                Ok((h, g)) => return (x, -h, -g),
                Err(_) => {
                    let a: f64 = self.rng.random::<f64>() * std::f64::consts::TAU;
                    let jitter = Point::new(T::lit(a.cos()), T::lit(a.sin())) * T::lit(SINGULAR_JITTER);
                    let moved = self.region.clamp(x + jitter);
                    x = if moved == x { x - jitter } else { moved };
                }
            }
        }
    }
}

/// Gradient with the components that push out of the box zeroed.
fn projected<T: Scalar>(x: Point<T>, g: Point<T>, r: &Rect<T>) -> Point<T> {
    let fix = |v: T, g: T, lo: T, hi: T| {
        if (v <= lo && g > T::zero()) || (v >= hi && g < T::zero()) {
            T::zero()
        } else {
            g
        }
    };
    Point::new(fix(x.x, g.x, r.x0, r.x1), fix(x.y, g.y, r.y0, r.y1))
}

/// Symmetric 2×2 inverse-Hessian approximation.
#[derive(Clone, Copy)]
struct InvHessian<T> {
    a: T,
    b: T,
    c: T,
}

impl<T: Scalar> InvHessian<T> {
    fn scaled(k: T) -> Self {
        Self { a: k, b: T::zero(), c: k }
    }

    fn apply(&self, v: Point<T>) -> Point<T> {
        Point::new(self.a * v.x + self.b * v.y, self.b * v.x + self.c * v.y)
    }

    /// BFGS update `H ← (I − ρsyᵀ) H (I − ρysᵀ) + ρssᵀ`.
    fn update(&mut self, s: Point<T>, y: Point<T>) {
        let sy = s.dot(y);
        let rho = T::one() / sy;
        let hy = self.apply(y);
        let yhy = y.dot(hy);
        let k = (T::one() + rho * yhy) * rho;
        self.a = self.a + k * s.x * s.x - rho * (hy.x * s.x + s.x * hy.x);
        self.b = self.b + k * s.x * s.y - rho * (hy.x * s.y + s.x * hy.y);
        self.c = self.c + k * s.y * s.y - rho * (hy.y * s.y + s.y * hy.y);
    }
}

/// Maximizes [`cost`] over the box `region` with a projected BFGS ascent
/// started at `init`. Deterministic for fixed inputs and seed.
pub fn optimize_center<T: Scalar>(lo: &LoSet<T>, region: &Rect<T>, init: Point<T>, seed: u64) -> Result<Optimum<T>> {
    if lo.is_empty() {
        return invalid("optimize_center needs at least one segment");
    }
    let mut obj = Objective { lo, region: *region, rng: ChaCha8Rng::seed_from_u64(seed) };
    let (mut x, mut f, mut g) = obj.value_grad(region.clamp(init));
    let mut hinv: Option<InvHessian<T>> = None;
    let mut converged = false;
    let mut stalled = false;
    let mut iterations = 0;

    while iterations < MAX_OPT_ITERS {
        let pg = projected(x, g, region);
        if pg.norm() < T::lit(GRAD_TOL) {
            converged = true;
            break;
        }
        iterations += 1;
        // first step: unit pixel length along the steepest ascent
        let h = *hinv.get_or_insert_with(|| InvHessian::scaled(T::one() / pg.norm()));
        let mut d = projected(x, -h.apply(pg), region);
        if d.dot(pg) >= T::zero() {
            let reset = InvHessian::scaled(T::one() / pg.norm());
            hinv = Some(reset);
            d = -reset.apply(pg);
        }

        let mut t = T::one();
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let xn = region.clamp(x + d * t);
            let fx = obj.value(xn);
            if fx <= f + T::lit(ARMIJO_C1) * g.dot(xn - x) {
                accepted = Some(xn);
                break;
            }
            t = t * T::lit(0.5);
        }
        let Some(xn) = accepted else {
            stalled = true;
            break;
        };
        let (xn, fnew, gnew) = obj.value_grad(xn);
        let s = xn - x;
        let y = gnew - g;
        let step = s.norm();
        x = xn;
        f = fnew;
        g = gnew;
        if step < T::lit(STEP_TOL) {
            converged = true;
            break;
        }
        let sy = s.dot(y);
        if sy > T::epsilon() * s.norm() * y.norm() {
            let hm = hinv.as_mut().expect("initialized");
            if iterations == 1 {
                *hm = InvHessian::scaled(sy / y.dot(y));
            }
            hm.update(s, y);
        } else {
            hinv = None;
        }
    }
    Ok(Optimum { center: x, value: -f, iterations, converged, stalled, underdetermined: lo.len() < 2 })
}

/// Segments whose midpoint lies in the square of side `max(w, h) / r_f`
/// centered at `c`, clipped to the image.
pub fn filter_lo_around<T: Scalar>(lo: &LoSet<T>, c: Point<T>, r_f: f64, image_size: (usize, usize)) -> LoSet<T> {
    let window = refinement_window(c, r_f, image_size);
    lo.iter().filter(|s| window.contains(s.midpoint)).copied().collect()
}

fn refinement_window<T: Scalar>(c: Point<T>, r_f: f64, (w, h): (usize, usize)) -> Rect<T> {
    let side = T::lit(w.max(h) as f64 / r_f);
    let image = Rect::new(T::zero(), T::zero(), T::from_usize_lossy(w - 1), T::from_usize_lossy(h - 1));
    // an empty intersection leaves a degenerate window that matches nothing
    Rect::square(c, side).intersect(&image).unwrap_or(Rect::new(T::one(), T::one(), T::zero(), T::zero()))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize)]
pub struct Diagnostics {
    /// A least-squares initialization fell back to the region center.
    pub degenerate_init: bool,
    /// An optimizer run stopped without satisfying its tolerances.
    pub optimizer_stalled: bool,
    /// Fewer than two segments were available to an optimizer run.
    pub underdetermined: bool,
    /// The refinement window contained no segment; the loop stopped early.
    pub empty_refinement: bool,
    /// The final center lies in the slice bbox but outside the exact mask.
    pub outside_mask: bool,
    /// APD-PCL only: filtering found no cluster and the unfiltered set was used.
    pub pclines_fallback: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceStep<T> {
    pub center: Point<T>,
    /// Cost at `center` over the segments used in this iteration.
    pub cost: T,
    pub n_segments: usize,
}

/// Result of the refinement loop, in the working frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Refinement<T> {
    pub center: Point<T>,
    pub iterations: usize,
    pub trace: Vec<TraceStep<T>>,
    pub converged: bool,
    pub diagnostics: Diagnostics,
}

/// Iterated maximization: the first pass uses every segment over the slice
/// bbox, later passes only those inside the window around the last center.
pub fn refine_pith<T: Scalar>(
    lo_f: &LoSet<T>,
    mask: &SliceMask,
    params: &SolverParams,
) -> Result<Refinement<T>> {
    params.validate()?;
    if lo_f.is_empty() {
        return Err(PithError::DetectionFailed("no local orientation passed the coherence gate".into()));
    }
    let bbox: Rect<T> = mask.bbox().to_rect();
    let mut diag = Diagnostics::default();
    let mut trace: Vec<TraceStep<T>> = Vec::new();
    let mut current: Option<Point<T>> = None;
    let mut converged = false;

    for i in 1..=params.max_iter {
        let (lo_r, region) = match current {
            None => (lo_f.clone(), bbox),
            Some(c) => {
                let lo_r = filter_lo_around(lo_f, c, params.r_f, mask.size());
                let window = Rect::square(c, T::lit(mask.width().max(mask.height()) as f64 / params.r_f));
                (lo_r, window.intersect(&bbox).unwrap_or(bbox))
            }
        };
        if lo_r.is_empty() {
            diag.empty_refinement = true;
            break;
        }
        let init = least_squares_init(&lo_r, &region);
        diag.degenerate_init |= init.degenerate;
        let opt = optimize_center(&lo_r, &region, init.center, params.seed.wrapping_add(i as u64))?;
        diag.optimizer_stalled |= opt.stalled;
        diag.underdetermined |= opt.underdetermined;
        trace.push(TraceStep { center: opt.center, cost: opt.value, n_segments: lo_r.len() });
        let moved = current.map(|c| c.distance(opt.center));
        current = Some(opt.center);
        if moved.is_some_and(|d| d < T::lit(params.eps)) {
            converged = true;
            break;
        }
    }
    let center = current.expect("first iteration always runs on a non-empty set");
    diag.outside_mask = !mask.contains_point(center);
    Ok(Refinement { center, iterations: trace.len(), trace, converged, diagnostics: diag })
}

/// Final pith estimate in both frames.
#[derive(Clone, Debug, PartialEq)]
pub struct PithEstimate<T> {
    /// Center in the resized working frame.
    pub c_working: Point<T>,
    /// Center in the original image frame.
    pub c_original: Point<T>,
    pub iterations: usize,
    pub trace: Vec<TraceStep<T>>,
    pub converged: bool,
    /// Number of sampled segments before any filtering.
    pub n_segments: usize,
    /// Number of segments handed to the refinement loop.
    pub n_used: usize,
    pub diagnostics: Diagnostics,
}

/// Orientation estimation and sampling on a preprocessed image.
pub fn estimate_lo<T: Scalar>(pre: &Preprocessed<T>, params: &DetectorParams) -> Result<LoSet<T>> {
    let field = local_orientation(&pre.field, &params.st)?;
    sample_lo(&field.orientation, &field.coherence, &pre.mask, &params.lo)
}

pub(crate) fn finish<T: Scalar>(
    pre: &Preprocessed<T>,
    refinement: Refinement<T>,
    n_segments: usize,
    n_used: usize,
) -> PithEstimate<T> {
    PithEstimate {
        c_working: refinement.center,
        c_original: pre.resize.to_original(refinement.center),
        iterations: refinement.iterations,
        trace: refinement.trace,
        converged: refinement.converged,
        n_segments,
        n_used,
        diagnostics: refinement.diagnostics,
    }
}

/// APD on an already preprocessed image.
pub fn detect_pith_apd_preprocessed<T: Scalar>(pre: &Preprocessed<T>, params: &DetectorParams) -> Result<PithEstimate<T>> {
    params.validate()?;
    let lo = estimate_lo(pre, params)?;
    let refinement = refine_pith(&lo, &pre.mask, &params.solver)?;
    Ok(finish(pre, refinement, lo.len(), lo.len()))
}

/// Full APD pipeline: preprocessing, orientation sampling and refinement.
pub fn detect_pith_apd<T: Scalar>(img: &RgbImage, mask: &SliceMask, params: &DetectorParams) -> Result<PithEstimate<T>> {
    params.validate()?;
    let pre = preprocess::<T>(img, mask, params.target_width)?;
    detect_pith_apd_preprocessed(&pre, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lo_sampler::LoSegment;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_2;

    fn seg(x: f64, y: f64, alpha: f64) -> LoSegment<f64> {
        LoSegment::new(Point::new(x, y), alpha, 1.0)
    }

    fn radial(center: Point<f64>, n: usize, r: f64) -> LoSet<f64> {
        (0..n)
            .map(|i| {
                let a = i as f64 * std::f64::consts::TAU / n as f64 + 0.1;
                seg(center.x + r * a.cos(), center.y + r * a.sin(), a)
            })
            .collect()
    }

    #[test]
    fn cost_examples() {
        let origin = Point::new(0.0, 0.0);
        let lo = LoSet::new(vec![seg(10.0, 0.0, 0.0), seg(0.0, 10.0, FRAC_PI_2)]);
        assert_abs_diff_eq!(cost(origin, &lo).unwrap(), 1.0, epsilon = 1e-15);

        let lo = LoSet::new(vec![seg(1.0, 1.0, 0.0)]);
        assert_abs_diff_eq!(cost(origin, &lo).unwrap(), 0.5, epsilon = 1e-15);

        let lo = LoSet::new(vec![seg(5.0, 0.0, FRAC_PI_2)]);
        assert_abs_diff_eq!(cost(origin, &lo).unwrap(), 0.0, epsilon = 1e-15);

        assert!(cost(origin, &LoSet::<f64>::default()).is_err());
    }

    #[test]
    fn coincident_midpoint_counts_as_collinear() {
        let lo = LoSet::new(vec![seg(3.0, 4.0, 1.0), seg(10.0, 4.0, FRAC_PI_2)]);
        assert_abs_diff_eq!(cost(Point::new(3.0, 4.0), &lo).unwrap(), 0.5, epsilon = 1e-15);
        assert!(matches!(cost_gradient(Point::new(3.0, 4.0), &lo), Err(PithError::Singular { index: 0 })));
    }

    #[test]
    fn gradient_vanishes_at_radial_center() {
        let c = Point::new(40.0, 25.0);
        let g = cost_gradient(c, &radial(c, 24, 30.0)).unwrap();
        assert!(g.norm() < 1e-8, "{g:?}");
    }

    #[test]
    fn gradient_is_translation_invariant() {
        let lo = LoSet::new(vec![seg(1.0, 1.0, 0.0), seg(7.0, -2.0, 0.4), seg(-3.0, 5.0, 2.0)]);
        let t = Point::new(13.5, -7.25);
        let shifted: LoSet<f64> = lo.iter().map(|s| seg(s.midpoint.x + t.x, s.midpoint.y + t.y, s.alpha)).collect();
        let c = Point::new(0.3, -0.2);
        let g0 = cost_gradient(c, &lo).unwrap();
        let g1 = cost_gradient(c + t, &shifted).unwrap();
        assert_abs_diff_eq!(g0.x, g1.x, epsilon = 1e-12);
        assert_abs_diff_eq!(g0.y, g1.y, epsilon = 1e-12);
    }

    #[test]
    fn ls_init_cases() {
        let region = Rect::new(0.0, 0.0, 20.0, 20.0);
        let lo = LoSet::new(vec![seg(2.0, 5.0, 0.0), seg(5.0, 9.0, FRAC_PI_2)]);
        let init = least_squares_init(&lo, &region);
        assert!(!init.degenerate);
        assert_abs_diff_eq!(init.center.x, 5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(init.center.y, 5.0, epsilon = 1e-12);

        let parallel = LoSet::new(vec![seg(2.0, 5.0, 0.3), seg(5.0, 9.0, 0.3), seg(1.0, 1.0, 0.3)]);
        let init = least_squares_init(&parallel, &region);
        assert!(init.degenerate);
        assert_eq!(init.center, Point::new(10.0, 10.0));

        let c = Point::new(11.25, 7.5);
        let init = least_squares_init(&radial(c, 16, 6.0), &region);
        assert!(init.center.distance(c) < 1e-6);
    }

    #[test]
    fn ls_init_is_clamped() {
        let lo = LoSet::new(vec![seg(2.0, 50.0, 0.0), seg(50.0, 9.0, FRAC_PI_2)]);
        let init = least_squares_init(&lo, &Rect::new(0.0, 0.0, 20.0, 20.0));
        assert_eq!(init.center, Point::new(20.0, 20.0));
    }

    #[test]
    fn optimizer_recovers_radial_center() {
        let c = Point::new(120.0, 95.0);
        let lo = radial(c, 48, 60.0);
        let region = Rect::new(40.0, 20.0, 200.0, 170.0);
        for init in [Point::new(100.0, 90.0), Point::new(140.0, 110.0), Point::new(121.0, 94.0)] {
            let opt = optimize_center(&lo, &region, init, 7).unwrap();
            assert!(opt.center.distance(c) < 1e-3, "{init:?} -> {opt:?}");
            assert!(opt.value >= 1.0 - 1e-9);
        }
    }

    #[test]
    fn single_segment_is_flagged() {
        let lo = LoSet::new(vec![seg(10.0, 10.0, 0.0)]);
        let region = Rect::new(0.0, 0.0, 20.0, 20.0);
        let opt = optimize_center(&lo, &region, Point::new(3.0, 12.0), 0).unwrap();
        assert!(opt.underdetermined);
        assert!(region.contains(opt.center));
        assert!(opt.value > 0.99, "{opt:?}");
    }

    #[test]
    fn optimizer_escapes_singular_start() {
        let c = Point::new(50.0, 50.0);
        let mut lo = radial(c, 12, 20.0);
        lo.segments.push(seg(30.0, 30.0, 0.2));
        let opt = optimize_center(&lo, &Rect::new(0.0, 0.0, 100.0, 100.0), Point::new(30.0, 30.0), 3).unwrap();
        assert!(opt.value.is_finite());
    }

    #[test]
    fn filter_window() {
        let lo: LoSet<f64> = (0..640).step_by(10).flat_map(|x| (0..640).step_by(10).map(move |y| seg(x as f64, y as f64, 0.0))).collect();
        let c = Point::new(319.5, 319.5);
        let kept = filter_lo_around(&lo, c, 7.0, (640, 640));
        let side = 640.0 / 7.0;
        assert_abs_diff_eq!(side, 91.428_571_428_571_43, epsilon = 1e-9);
        assert!(kept.iter().all(|s| (s.midpoint.x - c.x).abs() <= side / 2.0 && (s.midpoint.y - c.y).abs() <= side / 2.0));
        assert_eq!(kept.len(), 81);

        assert_eq!(filter_lo_around(&lo, c, 1.0001, (640, 640)), lo);

        let sparse = LoSet::new(vec![seg(320.0, 320.0, 0.0)]);
        assert!(filter_lo_around(&sparse, Point::new(5.0, 5.0), 7.0, (640, 640)).is_empty());
    }

    #[test]
    fn params_validation() {
        assert!(SolverParams { r_f: 1.0, ..Default::default() }.validate().is_err());
        assert!(SolverParams { eps: 0.0, ..Default::default() }.validate().is_err());
        assert!(SolverParams { max_iter: 0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn refine_empty_is_detection_failure() {
        let mask = SliceMask::full(10, 10);
        let r = refine_pith(&LoSet::<f64>::default(), &mask, &SolverParams::default());
        assert!(matches!(r, Err(PithError::DetectionFailed(_))));
    }

    #[test]
    fn refine_radial_converges_quickly() {
        let c = Point::new(300.25, 280.5);
        let lo: LoSet<f64> = (1..12).flat_map(|k| radial(c, 8 * k, 12.0 * k as f64).segments).collect();
        let mask = SliceMask::full(640, 600);
        let r = refine_pith(&lo, &mask, &SolverParams::default()).unwrap();
        assert!(r.converged);
        assert!(r.iterations <= 3, "{}", r.iterations);
        assert!(r.center.distance(c) < 1e-3);
    }

    #[test]
    fn cost_in_f32() {
        let lo = LoSet::new(vec![LoSegment::new(Point::new(1.0f32, 1.0), 0.0, 1.0)]);
        assert!((cost(Point::new(0.0f32, 0.0), &lo).unwrap() - 0.5).abs() < 1e-6);
    }
}
