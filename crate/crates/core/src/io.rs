//! Image, mask and debug-dump file I/O.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{PithError, Result};
use crate::geom::Point;
use crate::imgproc::{Grid, RgbImage, SliceMask};
use crate::scalar::Scalar;

fn image_err(path: &Path) -> impl FnOnce(image::ImageError) -> PithError + '_ {
    move |error| PithError::Image { path: path.to_path_buf(), error }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PithError + '_ {
    move |error| PithError::Io { path: path.to_path_buf(), error }
}

/// Loads a PNG or JPEG as 8-bit RGB.
pub fn load_rgb(path: &Path) -> Result<RgbImage> {
    let img = image::open(path).map_err(image_err(path))?.to_rgb8();
    let (w, h) = img.dimensions();
    RgbImage::new(w as usize, h as usize, img.into_raw())
}

/// Loads a mask image; any nonzero luma is foreground.
pub fn load_mask(path: &Path) -> Result<SliceMask> {
    let img = image::open(path).map_err(image_err(path))?.to_luma8();
    let (w, h) = img.dimensions();
    SliceMask::new(w as usize, h as usize, img.into_raw().into_iter().map(|v| v != 0).collect())
}

pub fn save_rgb_png(img: &RgbImage, path: &Path) -> Result<()> {
    let buf = image::RgbImage::from_raw(img.width() as u32, img.height() as u32, img.pixels().to_vec())
        .expect("buffer size checked at construction");
    buf.save_with_format(path, image::ImageFormat::Png).map_err(image_err(path))
}

/// Writes a mask as single-channel PNG: 255 foreground, 0 background.
pub fn save_mask_png(mask: &SliceMask, path: &Path) -> Result<()> {
    let data = mask.inside().iter().map(|&b| if b { 255 } else { 0 }).collect();
    let buf = image::GrayImage::from_raw(mask.width() as u32, mask.height() as u32, data)
        .expect("buffer size matches mask");
    buf.save_with_format(path, image::ImageFormat::Png).map_err(image_err(path))
}

/// Draws a cross of half-size `arm` pixels centered at `p`, clipped to the image.
pub fn draw_cross(img: &mut RgbImage, p: Point<f64>, arm: i64, color: [u8; 3]) {
    let (cx, cy) = (p.x.round() as i64, p.y.round() as i64);
    let (w, h) = (img.width() as i64, img.height() as i64);
    for t in -arm..=arm {
        for thick in -1..=1 {
            for (x, y) in [(cx + t, cy + thick), (cx + thick, cy + t)] {
                if (0..w).contains(&x) && (0..h).contains(&y) {
                    img.put_pixel(x as usize, y as usize, color);
                }
            }
        }
    }
}

/// Copy of `img` with the prediction (red) and, if given, the ground truth (green) marked.
pub fn overlay(img: &RgbImage, prediction: Point<f64>, ground_truth: Option<Point<f64>>) -> RgbImage {
    let mut out = img.clone();
    let arm = (img.width().max(img.height()) / 60).max(4) as i64;
    if let Some(gt) = ground_truth {
        draw_cross(&mut out, gt, arm, [0, 255, 0]);
    }
    draw_cross(&mut out, prediction, arm, [255, 0, 0]);
    out
}

/// Raw dump: width and height as little-endian `u32`, then row-major little-endian `f32` values.
pub fn write_grid_dump<T: Scalar, W: Write>(grid: &Grid<T>, mut w: W) -> std::io::Result<()> {
    w.write_all(&(grid.width() as u32).to_le_bytes())?;
    w.write_all(&(grid.height() as u32).to_le_bytes())?;
    for &v in grid.data() {
        w.write_all(&(v.as_f64() as f32).to_le_bytes())?;
    }
    w.flush()
}

pub fn save_grid_dump<T: Scalar>(grid: &Grid<T>, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    write_grid_dump(grid, BufWriter::new(file)).map_err(io_err(path))
}

pub fn read_grid_dump(bytes: &[u8]) -> Option<Grid<f32>> {
    let word = |i: usize| bytes.get(i..i + 4).map(|b| [b[0], b[1], b[2], b[3]]);
    let w = u32::from_le_bytes(word(0)?) as usize;
    let h = u32::from_le_bytes(word(4)?) as usize;
    let body = bytes.get(8..)?;
    if body.len() != 4 * w * h {
        return None;
    }
    let data = body.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
    Grid::new(w, h, data).ok()
}
