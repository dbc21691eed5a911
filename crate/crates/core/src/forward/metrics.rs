//! Image quality metrics.

use crate::error::{GenregError, Result};
use crate::grid::Grid;

const SSIM_WINDOW: usize = 8;
const SSIM_SIGMA: f64 = 1.5;

fn check(u: &Grid, reference: &Grid) -> Result<()> {
    if u.dim() != reference.dim() || u.is_empty() {
        return Err(GenregError::Shape(format!(
            "metric inputs {:?} and {:?} differ",
            u.dim(),
            reference.dim()
        )));
    }
    Ok(())
}

/// `10 log10(peak^2 / MSE)`; `+inf` for identical images.
pub fn psnr(u: &Grid, reference: &Grid, peak: f64) -> Result<f64> {
    check(u, reference)?;
    let mse = u
        .iter()
        .zip(reference.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / u.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

fn window_weights(size: usize) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let mut w = Vec::with_capacity(size * size);
    for i in 0..size {
        for j in 0..size {
            let (di, dj) = (i as f64 - c, j as f64 - c);
            w.push((-(di * di + dj * dj) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp());
        }
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    w
}

/// Mean SSIM over all 8x8 windows (Gaussian weights, sigma 1.5) with
/// `c1 = (0.01 peak)^2` and `c2 = (0.03 peak)^2`. Images smaller than a
/// window use a single window of the largest fitting size.
pub fn ssim(u: &Grid, reference: &Grid, peak: f64) -> Result<f64> {
    check(u, reference)?;
    let (nx, ny) = u.dim();
    let size = SSIM_WINDOW.min(nx).min(ny);
    let weights = window_weights(size);
    let c1 = (0.01 * peak).powi(2);
    let c2 = (0.03 * peak).powi(2);
    let mut total = 0.0;
    let mut count = 0usize;
    for i0 in 0..=(nx - size) {
        for j0 in 0..=(ny - size) {
            let (mut mx, mut my) = (0.0, 0.0);
            for i in 0..size {
                for j in 0..size {
                    let w = weights[i * size + j];
                    mx += w * u[[i0 + i, j0 + j]];
                    my += w * reference[[i0 + i, j0 + j]];
                }
            }
            let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
            for i in 0..size {
                for j in 0..size {
                    let w = weights[i * size + j];
                    let dx = u[[i0 + i, j0 + j]] - mx;
                    let dy = reference[[i0 + i, j0 + j]] - my;
                    vx += w * dx * dx;
                    vy += w * dy * dy;
                    cxy += w * dx * dy;
                }
            }
            total += ((2.0 * mx * my + c1) * (2.0 * cxy + c2))
                / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn pattern() -> Grid {
        Grid::from_shape_fn((20, 17), |(i, j)| ((i * 7 + j * 3) % 11) as f64 / 11.0)
    }

    #[test]
    fn psnr_closed_form() {
        let r = pattern();
        assert_relative_eq!(psnr(&(&r + 0.1), &r, 1.0).unwrap(), 20.0, epsilon = 1e-10);
        assert_eq!(psnr(&r, &r, 1.0).unwrap(), f64::INFINITY);
        assert!(psnr(&r, &Grid::zeros((2, 2)), 1.0).is_err());
    }

    #[test]
    fn ssim_properties() {
        let r = pattern();
        assert_relative_eq!(ssim(&r, &r, 1.0).unwrap(), 1.0, epsilon = 1e-12);
        let noisy = r.mapv(|x| x * 0.5 + 0.2);
        let s = ssim(&noisy, &r, 1.0).unwrap();
        assert!(s < 1.0 && s > -1.0);
        assert_relative_eq!(s, ssim(&r, &noisy, 1.0).unwrap(), epsilon = 1e-12);
        let inverted = r.mapv(|x| 1.0 - x);
        assert!(ssim(&inverted, &r, 1.0).unwrap() < 0.0);
        let tiny = Grid::from_shape_fn((3, 4), |(i, j)| (i + j) as f64);
        assert_relative_eq!(ssim(&tiny, &tiny, 1.0).unwrap(), 1.0, epsilon = 1e-12);
    }
}
