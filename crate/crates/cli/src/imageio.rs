//! Grayscale PNG/PGM input and output, and montages for display.

use crate::error::CliError;
use genreg::Grid;
use image::{DynamicImage, ImageBuffer, ImageFormat, Luma};
use std::path::Path;

/// Loads an 8- or 16-bit grayscale PNG or PGM, scaled to `[0, 1]`.
pub fn load_image(path: &Path) -> Result<Grid, CliError> {
    let img = image::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    match img {
        DynamicImage::ImageLuma8(buf) => Ok(Grid::from_shape_fn((h, w), |(i, j)| {
            f64::from(buf.get_pixel(j as u32, i as u32)[0]) / 255.0
        })),
        DynamicImage::ImageLuma16(buf) => Ok(Grid::from_shape_fn((h, w), |(i, j)| {
            f64::from(buf.get_pixel(j as u32, i as u32)[0]) / 65535.0
        })),
        other => Err(CliError::Io(format!(
            "{}: unsupported pixel format {:?}; expected 8- or 16-bit grayscale",
            path.display(),
            other.color()
        ))),
    }
}

fn format_for(path: &Path) -> Result<ImageFormat, CliError> {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("png") => Ok(ImageFormat::Png),
        Some("pgm") => Ok(ImageFormat::Pnm),
        _ => Err(CliError::Io(format!(
            "{}: output must end in .png or .pgm",
            path.display()
        ))),
    }
}

/// Saves `g` clamped to `[0, 1]` and quantized to `bits` (8 or 16).
pub fn save_image(g: &Grid, path: &Path, bits: u8) -> Result<(), CliError> {
    let format = format_for(path)?;
    let (h, w) = g.dim();
    let io_err = |e: image::ImageError| CliError::Io(format!("{}: {e}", path.display()));
    let quantize = |x: f64, max: f64| (x.clamp(0.0, 1.0) * max).round();
    if bits == 16 {
        let buf = ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
            Luma([quantize(g[[y as usize, x as usize]], 65535.0) as u16])
        });
        DynamicImage::ImageLuma16(buf)
            .save_with_format(path, format)
            .map_err(io_err)
    } else {
        let buf = ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
            Luma([quantize(g[[y as usize, x as usize]], 255.0) as u8])
        });
        DynamicImage::ImageLuma8(buf)
            .save_with_format(path, format)
            .map_err(io_err)
    }
}

/// Affine map of `[min, max]` onto `[0, 1]`; constant grids map to 0.5.
pub fn rescale(g: &Grid) -> (Grid, (f64, f64)) {
    let (lo, hi) = min_max(g.iter().copied());
    (rescale_with(g, lo, hi), (lo, hi))
}

fn min_max(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
        (lo.min(x), hi.max(x))
    })
}

fn rescale_with(g: &Grid, lo: f64, hi: f64) -> Grid {
    if hi > lo {
        g.mapv(|x| (x - lo) / (hi - lo))
    } else {
        Grid::from_elem(g.dim(), 0.5)
    }
}

/// Tiles grids row by row, `columns` per row, separated by a 1-pixel
/// border of the background value 1. All tiles share one affine display
/// range, which is returned.
pub fn montage(tiles: &[Grid], columns: usize) -> (Grid, (f64, f64)) {
    if tiles.is_empty() {
        return (Grid::zeros((1, 1)), (0.0, 0.0));
    }
    let columns = columns.clamp(1, tiles.len());
    let rows = tiles.len().div_ceil(columns);
    let th = tiles.iter().map(|t| t.nrows()).max().unwrap_or(0);
    let tw = tiles.iter().map(|t| t.ncols()).max().unwrap_or(0);
    let (lo, hi) = min_max(tiles.iter().flat_map(|t| t.iter().copied()));
    let mut out = Grid::ones((rows * (th + 1) + 1, columns * (tw + 1) + 1));
    for (idx, tile) in tiles.iter().enumerate() {
        let (r0, c0) = (
            (idx / columns) * (th + 1) + 1,
            (idx % columns) * (tw + 1) + 1,
        );
        let shown = rescale_with(tile, lo, hi);
        out.slice_mut(ndarray::s![r0..r0 + tile.nrows(), c0..c0 + tile.ncols()])
            .assign(&shown);
    }
    (out, (lo, hi))
}
