//! Input standardization: grayscale conversion, background masking, resizing
//! to the working width and first-order image derivatives.

use crate::error::{invalid, Result};
use crate::geom::{Point, Rect};
use crate::scalar::Scalar;

/// Default working width; all solver parameters are tuned for this frame.
pub const WORKING_WIDTH: usize = 640;

/// 8-bit RGB image, row-major, 3 bytes per pixel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return invalid(format!("degenerate image size {width}x{height}"));
        }
        if pixels.len() != 3 * width * height {
            return invalid(format!(
                "pixel buffer has {} bytes, expected {}",
                pixels.len(),
                3 * width * height
            ));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn put_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = 3 * (y * self.width + x);
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }
}

/// Dense row-major grid of scalars.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

/// Single-channel intensity image with values in `[0, 1]`.
pub type IntensityField<T> = Grid<T>;

impl<T: Scalar> Grid<T> {
    pub fn new(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if width == 0 || height == 0 {
            return invalid(format!("degenerate grid size {width}x{height}"));
        }
        if data.len() != width * height {
            return invalid(format!(
                "grid buffer has {} values, expected {}",
                data.len(),
                width * height
            ));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: T) -> Self {
        assert!(width > 0 && height > 0, "degenerate grid size");
        Self { width, height, data: vec![value; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        assert!(width > 0 && height > 0, "degenerate grid size");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn size(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: T) {
        self.data[y * self.width + x] = v;
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn row(&self, y: usize) -> &[T] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { width: self.width, height: self.height, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn same_shape<U>(&self, other: &Grid<U>) -> bool {
        self.width == other.width && self.height == other.height
    }
}

/// Tight bounding box of the true pixels of a mask, inclusive on both ends.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BBox {
    pub x_min: usize,
    pub y_min: usize,
    pub x_max: usize,
    pub y_max: usize,
}

impl BBox {
    /// Width in pixels, counting both end columns.
    pub fn width(&self) -> usize {
        self.x_max - self.x_min + 1
    }

    pub fn height(&self) -> usize {
        self.y_max - self.y_min + 1
    }

    /// The bbox as a continuous rectangle over pixel-center coordinates.
    pub fn to_rect<T: Scalar>(&self) -> Rect<T> {
        Rect::new(
            T::from_usize_lossy(self.x_min),
            T::from_usize_lossy(self.y_min),
            T::from_usize_lossy(self.x_max),
            T::from_usize_lossy(self.y_max),
        )
    }
}

/// Foreground (slice) mask with its cached bounding box.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SliceMask {
    width: usize,
    height: usize,
    inside: Vec<bool>,
    bbox: BBox,
}

impl SliceMask {
    /// Fails when the mask is empty or the buffer size is wrong.
    pub fn new(width: usize, height: usize, inside: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 {
            return invalid(format!("degenerate mask size {width}x{height}"));
        }
        if inside.len() != width * height {
            return invalid(format!("mask buffer has {} values, expected {}", inside.len(), width * height));
        }
        let mut bbox: Option<BBox> = None;
        for y in 0..height {
            for x in 0..width {
                if !inside[y * width + x] {
                    continue;
                }
                bbox = Some(match bbox {
                    None => BBox { x_min: x, y_min: y, x_max: x, y_max: y },
                    Some(b) => BBox {
                        x_min: b.x_min.min(x),
                        y_min: b.y_min.min(y),
                        x_max: b.x_max.max(x),
                        y_max: b.y_max.max(y),
                    },
                });
            }
        }
        match bbox {
            Some(bbox) => Ok(Self { width, height, inside, bbox }),
            None => invalid("mask has no foreground pixel"),
        }
    }

    pub fn full(width: usize, height: usize) -> Self {
        assert!(width > 0 && height > 0, "degenerate mask size");
        Self {
            width,
            height,
            inside: vec![true; width * height],
            bbox: BBox { x_min: 0, y_min: 0, x_max: width - 1, y_max: height - 1 },
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Result<Self> {
        let mut inside = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                inside.push(f(x, y));
            }
        }
        Self::new(width, height, inside)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn size(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn contains(&self, x: usize, y: usize) -> bool {
        self.inside[y * self.width + x]
    }

    /// Membership test for a continuous point, by nearest pixel.
    pub fn contains_point<T: Scalar>(&self, p: Point<T>) -> bool {
        let (x, y) = (p.x.round(), p.y.round());
        if x < T::zero() || y < T::zero() {
            return false;
        }
        let (x, y) = (x.to_usize().unwrap_or(usize::MAX), y.to_usize().unwrap_or(usize::MAX));
        x < self.width && y < self.height && self.contains(x, y)
    }

    pub fn inside(&self) -> &[bool] {
        &self.inside
    }

    pub fn bbox(&self) -> BBox {
        self.bbox
    }

    pub fn count(&self) -> usize {
        self.inside.iter().filter(|&&b| b).count()
    }
}

/// Maps coordinates between the original image frame and the resized working frame.
///
/// Pixel centers are aligned: working pixel `x` covers original
/// `[x·scale, (x+1)·scale)`, so its center maps to `(x + ½)·scale − ½`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResizeInfo {
    /// original_width / working_width.
    pub scale: f64,
    pub original_size: (usize, usize),
    pub working_size: (usize, usize),
}

impl ResizeInfo {
    pub fn identity(width: usize, height: usize) -> Self {
        Self { scale: 1.0, original_size: (width, height), working_size: (width, height) }
    }

    pub fn to_original<T: Scalar>(&self, p: Point<T>) -> Point<T> {
        let s = T::lit(self.scale);
        let half = T::lit(0.5);
        Point::new((p.x + half) * s - half, (p.y + half) * s - half)
    }

    pub fn to_working<T: Scalar>(&self, p: Point<T>) -> Point<T> {
        let s = T::lit(self.scale);
        let half = T::lit(0.5);
        Point::new((p.x + half) / s - half, (p.y + half) / s - half)
    }

    /// Source coordinate (in original pixels) sampled for working pixel index `i`.
    fn source_coord(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.scale - 0.5
    }

    fn for_target(width: usize, height: usize, target_width: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return invalid(format!("degenerate image size {width}x{height}"));
        }
        if target_width < 2 {
            return invalid(format!("target width {target_width} must be at least 2"));
        }
        let scale = width as f64 / target_width as f64;
        let h = ((height as f64 * target_width as f64 / width as f64).round() as usize).max(1);
        Ok(Self { scale, original_size: (width, height), working_size: (target_width, h) })
    }
}

/// Luma (0.299, 0.587, 0.114) normalized to `[0, 1]`.
pub fn to_grayscale<T: Scalar>(img: &RgbImage) -> IntensityField<T> {
    let (wr, wg, wb) = (T::lit(0.299 / 255.0), T::lit(0.587 / 255.0), T::lit(0.114 / 255.0));
    let data = img
        .pixels
        .chunks_exact(3)
        .map(|p| {
            let v = wr * T::lit(p[0] as f64) + wg * T::lit(p[1] as f64) + wb * T::lit(p[2] as f64);
            v.max(T::zero()).min(T::one())
        })
        .collect();
    Grid { width: img.width, height: img.height, data }
}

/// Bilinear, aspect-preserving resize so that the output width is `target_width`.
pub fn resize_to_width<T: Scalar>(field: &Grid<T>, target_width: usize) -> Result<(Grid<T>, ResizeInfo)> {
    let info = ResizeInfo::for_target(field.width, field.height, target_width)?;
    if info.working_size == info.original_size {
        return Ok((field.clone(), info));
    }
    let (w, h) = info.working_size;
    let sample = |i: usize, n: usize| -> (usize, usize, T) {
        let s = info.source_coord(i).max(0.0).min((n - 1) as f64);
        let i0 = s.floor() as usize;
        let i1 = (i0 + 1).min(n - 1);
        (i0, i1, T::lit(s - i0 as f64))
    };
    let cols: Vec<_> = (0..w).map(|x| sample(x, field.width)).collect();
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        let (y0, y1, fy) = sample(y, field.height);
        let (r0, r1) = (field.row(y0), field.row(y1));
        for &(x0, x1, fx) in &cols {
            let top = r0[x0] + (r0[x1] - r0[x0]) * fx;
            let bot = r1[x0] + (r1[x1] - r1[x0]) * fx;
            data.push(top + (bot - top) * fy);
        }
    }
    Ok((Grid { width: w, height: h, data }, info))
}

/// Nearest-neighbour resampling of a mask onto the working frame of `info`.
pub fn resize_mask(mask: &SliceMask, info: &ResizeInfo) -> Result<SliceMask> {
    if mask.size() != info.original_size {
        return invalid(format!(
            "mask size {:?} does not match image size {:?}",
            mask.size(),
            info.original_size
        ));
    }
    if info.working_size == info.original_size {
        return Ok(mask.clone());
    }
    let nearest = |i: usize, n: usize| ((info.source_coord(i) + 0.5).floor().max(0.0) as usize).min(n - 1);
    let (w, h) = info.working_size;
    let cols: Vec<usize> = (0..w).map(|x| nearest(x, mask.width)).collect();
    let resized = SliceMask::from_fn(w, h, |x, y| mask.contains(cols[x], nearest(y, mask.height)));
    match resized {
        Ok(m) => Ok(m),
        // A sliver of foreground can vanish under nearest sampling; keep its bbox center.
        Err(_) => {
            let c = info.to_working(Point::new(
                (mask.bbox.x_min + mask.bbox.x_max) as f64 * 0.5,
                (mask.bbox.y_min + mask.bbox.y_max) as f64 * 0.5,
            ));
            let (cx, cy) = (c.x.round().clamp(0.0, (w - 1) as f64) as usize, c.y.round().clamp(0.0, (h - 1) as f64) as usize);
            SliceMask::from_fn(w, h, |x, y| x == cx && y == cy)
        }
    }
}

/// Zeroes background pixels.
pub fn apply_mask<T: Scalar>(field: &Grid<T>, mask: &SliceMask) -> Result<Grid<T>> {
    if field.size() != mask.size() {
        return invalid(format!("field size {:?} does not match mask size {:?}", field.size(), mask.size()));
    }
    let data = field
        .data
        .iter()
        .zip(&mask.inside)
        .map(|(&v, &inside)| if inside { v } else { T::zero() })
        .collect();
    Ok(Grid { width: field.width, height: field.height, data })
}

/// Central differences with replicated borders. Returns `(Ix, Iy)`.
pub fn derivatives<T: Scalar>(field: &Grid<T>) -> Result<(Grid<T>, Grid<T>)> {
    let (w, h) = field.size();
    if w < 3 || h < 3 {
        return invalid(format!("image {w}x{h} is smaller than 3x3"));
    }
    let half = T::lit(0.5);
    let mut ix = Vec::with_capacity(w * h);
    let mut iy = Vec::with_capacity(w * h);
    for y in 0..h {
        let up = field.row(y.saturating_sub(1));
        let down = field.row((y + 1).min(h - 1));
        let row = field.row(y);
        for x in 0..w {
            let left = row[x.saturating_sub(1)];
            let right = row[(x + 1).min(w - 1)];
            ix.push((right - left) * half);
            iy.push((down[x] - up[x]) * half);
        }
    }
    Ok((Grid { width: w, height: h, data: ix }, Grid { width: w, height: h, data: iy }))
}

/// Background-free working-frame intensity image with its mask.
#[derive(Clone, Debug)]
pub struct Preprocessed<T> {
    pub field: IntensityField<T>,
    pub mask: SliceMask,
    pub resize: ResizeInfo,
}

/// Grayscale, mask the background, then resize image and mask to `target_width`.
pub fn preprocess<T: Scalar>(img: &RgbImage, mask: &SliceMask, target_width: usize) -> Result<Preprocessed<T>> {
    let gray = to_grayscale::<T>(img);
    let masked = apply_mask(&gray, mask)?;
    let (resized, info) = resize_to_width(&masked, target_width)?;
    let working_mask = resize_mask(mask, &info)?;
    let field = apply_mask(&resized, &working_mask)?;
    Ok(Preprocessed { field, mask: working_mask, resize: info })
}
