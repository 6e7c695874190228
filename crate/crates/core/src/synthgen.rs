//! Synthetic spider-web slices and segment sets with known centers.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::parse_kv;
use crate::error::{invalid, PithError, Result};
use crate::geom::Point;
use crate::imgproc::{Grid, RgbImage, SliceMask};
use crate::lo_sampler::{LoSegment, LoSet};
use crate::scalar::Scalar;
use crate::structure_tensor::gaussian_kernel;

const RING_CONTRAST: f64 = 0.35;
const BACKGROUND: f64 = 0.2;
const RAY_DEPTH: f64 = 0.55;
const RAY_SIGMA: f64 = 1.2;
const FUNGUS_BLUR: f64 = 2.5;
const TINT: [f64; 3] = [0.95, 0.75, 0.5];

/// Parameters of a synthetic slice: sinusoidal rings around `center`,
/// optional dark rays (crack surrogates), optional structured noise over a
/// central disc (fungus surrogate) and additive Gaussian noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WebSpec {
    pub width: usize,
    pub height: usize,
    pub center: (f64, f64),
    pub n_rings: usize,
    /// Ring period in pixels; the slice disc has radius `n_rings · ring_spacing`.
    pub ring_spacing: f64,
    pub n_rays: usize,
    /// Ring `R` is a circle of radius `R` centered `eccentricity · R` away
    /// from the pith along `eccentricity_angle`; 0 gives concentric rings.
    pub eccentricity: f64,
    pub eccentricity_angle: f64,
    /// Standard deviation of additive noise, in `[0, 1]` intensity units.
    pub noise_sigma: f64,
    /// Radius of the central disc whose rings are replaced by blob noise; 0 disables it.
    pub fungus_radius: f64,
    pub seed: u64,
}

impl Default for WebSpec {
    fn default() -> Self {
        Self {
            width: 640,
            height: 640,
            center: (320.0, 320.0),
            n_rings: 12,
            ring_spacing: 24.0,
            n_rays: 0,
            eccentricity: 0.0,
            eccentricity_angle: 0.0,
            noise_sigma: 0.0,
            fungus_radius: 0.0,
            seed: 0,
        }
    }
}

impl WebSpec {
    pub fn radius(&self) -> f64 {
        self.n_rings as f64 * self.ring_spacing
    }

    pub fn validate(&self) -> Result<()> {
        let (cx, cy) = self.center;
        if self.width == 0 || self.height == 0 {
            return invalid("web size must be positive");
        }
        if !(cx >= 0.0 && cy >= 0.0 && cx <= (self.width - 1) as f64 && cy <= (self.height - 1) as f64) {
            return invalid(format!("center {:?} outside the {}x{} image", self.center, self.width, self.height));
        }
        if self.n_rings < 1 {
            return invalid("n_rings must be >= 1");
        }
        if !(self.ring_spacing >= 2.0) {
            return invalid(format!("ring_spacing must be >= 2, got {}", self.ring_spacing));
        }
        if !(0.0..1.0).contains(&self.eccentricity) {
            return invalid(format!("eccentricity must be in [0, 1), got {}", self.eccentricity));
        }
        if !(self.noise_sigma >= 0.0) || !(self.fungus_radius >= 0.0) {
            return invalid("noise_sigma and fungus_radius must be >= 0");
        }
        Ok(())
    }

    /// Parses the flat `key = value` format; unspecified keys keep their defaults.
    pub fn from_kv(text: &str, origin: &str) -> Result<Self> {
        let mut spec = Self::default();
        for (line, key, value) in parse_kv(text, origin)? {
            let err = |message: String| PithError::Config { path: origin.to_string(), line, message };
            let f = |v: &str| v.parse::<f64>().map_err(|_| err(format!("{key}: cannot parse {v:?}")));
            let u = |v: &str| v.parse::<usize>().map_err(|_| err(format!("{key}: cannot parse {v:?}")));
            match key.as_str() {
                "width" => spec.width = u(&value)?,
                "height" => spec.height = u(&value)?,
                "center_x" => spec.center.0 = f(&value)?,
                "center_y" => spec.center.1 = f(&value)?,
                "n_rings" => spec.n_rings = u(&value)?,
                "ring_spacing" => spec.ring_spacing = f(&value)?,
                "n_rays" => spec.n_rays = u(&value)?,
                "eccentricity" => spec.eccentricity = f(&value)?,
                "eccentricity_angle" => spec.eccentricity_angle = f(&value)?,
                "noise_sigma" => spec.noise_sigma = f(&value)?,
                "fungus_radius" => spec.fungus_radius = f(&value)?,
                "seed" => spec.seed = value.parse().map_err(|_| err(format!("seed: cannot parse {value:?}")))?,
                other => return Err(err(format!("unknown key {other:?}"))),
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    /// Ring radius `R` whose (possibly eccentric) circle passes through offset `q` from the pith.
    fn ring_radius(&self, qx: f64, qy: f64) -> f64 {
        let e = self.eccentricity;
        let q2 = qx * qx + qy * qy;
        if e == 0.0 {
            return q2.sqrt();
        }
        let qu = qx * self.eccentricity_angle.cos() + qy * self.eccentricity_angle.sin();
        (-e * qu + (e * e * qu * qu + (1.0 - e * e) * q2).sqrt()) / (1.0 - e * e)
    }
}

/// Blurred white noise rescaled to unit standard deviation.
fn blob_noise(w: usize, h: usize, rng: &mut ChaCha8Rng) -> Grid<f64> {
    let normal = Normal::new(0.0, 1.0).expect("valid normal");
    let raw = Grid::from_fn(w, h, |_, _| normal.sample(rng));
    let k: Vec<f64> = gaussian_kernel(FUNGUS_BLUR, 2 * (3.0 * FUNGUS_BLUR).ceil() as usize + 1);
    let r = k.len() / 2;
    let blur_x = Grid::from_fn(w, h, |x, y| {
        k.iter().enumerate().map(|(i, &kv)| kv * raw.get((x + i).saturating_sub(r).min(w - 1), y)).sum::<f64>()
    });
    let blurred = Grid::from_fn(w, h, |x, y| {
        k.iter().enumerate().map(|(i, &kv)| kv * blur_x.get(x, (y + i).saturating_sub(r).min(h - 1))).sum::<f64>()
    });
    let n = (w * h) as f64;
    let mean = blurred.data().iter().sum::<f64>() / n;
    let sd = (blurred.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt().max(1e-12);
    blurred.map(|v| (v - mean) / sd)
}

/// Renders a synthetic slice. Returns the image, its disc mask and the true center.
pub fn generate_web(spec: &WebSpec) -> Result<(RgbImage, SliceMask, Point<f64>)> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let (cx, cy) = spec.center;
    let radius = spec.radius();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let ray_offset: f64 = rng.random::<f64>() * std::f64::consts::TAU;
    let rays: Vec<(f64, f64)> = (0..spec.n_rays)
        .map(|k| {
            let a = ray_offset + k as f64 * std::f64::consts::TAU / spec.n_rays as f64;
            (a.cos(), a.sin())
        })
        .collect();
    let fungus = (spec.fungus_radius > 0.0).then(|| blob_noise(w, h, &mut rng));
    let noise = Normal::new(0.0, spec.noise_sigma.max(f64::MIN_POSITIVE)).expect("valid normal");

    let mask = SliceMask::from_fn(w, h, |x, y| {
        let (dx, dy) = (x as f64 - cx, y as f64 - cy);
        dx * dx + dy * dy <= radius * radius
    })?;

    let mut pixels = Vec::with_capacity(3 * w * h);
    for y in 0..h {
        for x in 0..w {
            let (qx, qy) = (x as f64 - cx, y as f64 - cy);
            let mut v = if mask.contains(x, y) {
                let ring_r = spec.ring_radius(qx, qy);
                let mut v = 0.5 + RING_CONTRAST * (std::f64::consts::TAU * ring_r / spec.ring_spacing).cos();
                if let Some(f) = &fungus {
                    let dist = qx.hypot(qy);
                    // smooth 4-pixel transition at the fungus boundary
                    let t = ((spec.fungus_radius + 2.0 - dist) / 4.0).clamp(0.0, 1.0);
                    let t = t * t * (3.0 - 2.0 * t);
                    v = (1.0 - t) * v + t * (0.5 + RING_CONTRAST * f.get(x, y)).clamp(0.0, 1.0);
                }
                for &(ux, uy) in &rays {
                    let along = qx * ux + qy * uy;
                    if along > 0.0 {
                        let perp = qx * uy - qy * ux;
                        v *= 1.0 - RAY_DEPTH * (-perp * perp / (2.0 * RAY_SIGMA * RAY_SIGMA)).exp();
                    }
                }
                v
            } else {
                BACKGROUND
            };
            if spec.noise_sigma > 0.0 {
                v += noise.sample(&mut rng);
            }
            let v = v.clamp(0.0, 1.0);
            pixels.extend(TINT.map(|t| (v * t * 255.0).round() as u8));
        }
    }
    Ok((RgbImage::new(w, h, pixels)?, mask, Point::new(cx, cy)))
}

/// Parameters of a synthetic segment set.
#[derive(Clone, Debug, PartialEq)]
pub struct LoSpec {
    pub center: (f64, f64),
    pub n_segments: usize,
    /// Midpoints are uniform (by area) in the annulus `[inner_radius, outer_radius]`.
    pub inner_radius: f64,
    pub outer_radius: f64,
    /// Angular noise added to each direction, radians.
    pub radial_noise_sigma: f64,
    /// Fraction of segments given uniformly random directions.
    pub outlier_fraction: f64,
    /// Directions perpendicular to the radius (crack surrogate) instead of radial.
    pub tangential: bool,
    pub seed: u64,
}

impl Default for LoSpec {
    fn default() -> Self {
        Self {
            center: (320.0, 320.0),
            n_segments: 200,
            inner_radius: 20.0,
            outer_radius: 250.0,
            radial_noise_sigma: 0.0,
            outlier_fraction: 0.0,
            tangential: false,
            seed: 0,
        }
    }
}

/// Segments around a known center. Outliers, if any, are a seeded random
/// subset of exactly `round(outlier_fraction · n_segments)` segments.
pub fn generate_lo<T: Scalar>(spec: &LoSpec) -> Result<(LoSet<T>, Point<T>)> {
    if !(0.0..1.0).contains(&spec.outlier_fraction) {
        return invalid(format!("outlier_fraction must be in [0, 1), got {}", spec.outlier_fraction));
    }
    if !(spec.inner_radius >= 0.0 && spec.outer_radius > spec.inner_radius) {
        return invalid("annulus radii must satisfy 0 <= inner < outer");
    }
    if !(spec.radial_noise_sigma >= 0.0) {
        return invalid("radial_noise_sigma must be >= 0");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.radial_noise_sigma.max(f64::MIN_POSITIVE)).expect("valid normal");
    let n_out = (spec.outlier_fraction * spec.n_segments as f64).round() as usize;
    let mut is_outlier: Vec<bool> = (0..spec.n_segments).map(|i| i < n_out).collect();
    is_outlier.shuffle(&mut rng);
    let (r0, r1) = (spec.inner_radius * spec.inner_radius, spec.outer_radius * spec.outer_radius);
    let segments = is_outlier
        .into_iter()
        .map(|outlier| {
            let r = rng.random_range(r0..r1).sqrt();
            let phi = rng.random::<f64>() * std::f64::consts::TAU;
            let mid = Point::new(spec.center.0 + r * phi.cos(), spec.center.1 + r * phi.sin());
            let alpha = if outlier {
                rng.random::<f64>() * std::f64::consts::PI
            } else {
                let base = if spec.tangential { phi + std::f64::consts::FRAC_PI_2 } else { phi };
                base + if spec.radial_noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 }
            };
            LoSegment::new(mid.cast(), T::lit(alpha), T::one())
        })
        .collect();
    Ok((LoSet::new(segments), Point::new(T::lit(spec.center.0), T::lit(spec.center.1))))
}
