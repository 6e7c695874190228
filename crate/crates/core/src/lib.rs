//! Automatic wood pith detection on tree cross-section images.
//!
//! The pith is located where the lines supported by local ring orientations
//! converge. The pipeline stages are:
//!
//! 1. [`imgproc`]: grayscale, background masking, resize to a 640-pixel working width.
//! 2. [`structure_tensor`]: Gaussian-windowed structure tensor, per-pixel orientation and coherence.
//! 3. [`lo_sampler`]: one unit segment per coherent `lo_w × lo_w` patch.
//! 4. [`pclines`] (APD-PCL only): keep segments whose lines form a convergent bundle,
//!    including radial structures such as cracks once rotated by 90°.
//! 5. [`pith_solver`]: maximize the mean `cos²` collinearity between segments and
//!    rays from the candidate center, refining in shrinking windows.
//!
//! [`synthgen`] produces synthetic ring images with known centers and
//! [`evalbench`] runs the normalized-error evaluation over image collections.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the `*64`/`*32`
//! aliases below name the common instantiations.

pub mod config;
pub mod error;
pub mod evalbench;
pub mod geom;
pub mod imgproc;
pub mod io;
pub mod lo_sampler;
pub mod pclines;
pub mod pith_solver;
pub mod scalar;
pub mod structure_tensor;
pub mod synthgen;

pub use config::{DetectorParams, Method};
pub use error::{PithError, Result};
pub use geom::{Point, Rect};
pub use imgproc::{Grid, IntensityField, ResizeInfo, RgbImage, SliceMask};
pub use lo_sampler::{LoSegment, LoSet};
pub use pith_solver::PithEstimate;
pub use scalar::Scalar;

pub type Point64 = Point<f64>;
pub type Point32 = Point<f32>;
pub type Grid64 = Grid<f64>;
pub type Grid32 = Grid<f32>;
pub type LoSegment64 = LoSegment<f64>;
pub type LoSegment32 = LoSegment<f32>;
pub type LoSet64 = LoSet<f64>;
pub type LoSet32 = LoSet<f32>;
pub type PithEstimate64 = PithEstimate<f64>;
pub type PithEstimate32 = PithEstimate<f32>;

/// Runs the selected detector on an image and its slice mask.
pub fn detect<T: Scalar>(img: &RgbImage, mask: &SliceMask, method: Method, params: &DetectorParams) -> Result<PithEstimate<T>> {
    match method {
        Method::Apd => pith_solver::detect_pith_apd(img, mask, params),
        Method::ApdPcl => pclines::detect_pith_apd_pcl(img, mask, params),
    }
}

/// [`detect`] on an already preprocessed image.
pub fn detect_preprocessed<T: Scalar>(
    pre: &imgproc::Preprocessed<T>,
    method: Method,
    params: &DetectorParams,
) -> Result<PithEstimate<T>> {
    match method {
        Method::Apd => pith_solver::detect_pith_apd_preprocessed(pre, params),
        Method::ApdPcl => pclines::detect_pith_apd_pcl_preprocessed(pre, params),
    }
}
