//! Forward operators, their adjoints, corruption simulation and quality
//! metrics for the five restoration tasks.

mod jpeg;
mod metrics;
mod simulate;

pub use jpeg::{
    block_dct, block_idct, quality_table, QuantizedSpectrum, SpectrumEncoding, BLOCK,
    STANDARD_LUMINANCE_TABLE,
};
pub use metrics::{psnr, ssim};
pub use simulate::{gaussian_kernel, simulate_corruption, BlurWidth, NoiseSource, Recipe};

use crate::error::{GenregError, Result};
use crate::grid::Grid;

/// The restoration task together with its operator payload.
// one value per run, so the inline JPEG table is not worth boxing
#[allow(clippy::large_enum_variant)]
#[derive(Clone, Debug, PartialEq)]
pub enum Degradation {
    /// `A = I`, smooth data term.
    Denoise,
    /// `Au = M . u`, hard constraint `Au = y`.
    Inpaint { mask: Grid },
    /// Zero-padded convolution with a `(2s+1) x (2s+1)` kernel, smooth data term.
    Deconv { kernel: Grid },
    /// `s x s` block averaging, hard constraint `Au = y`.
    SuperRes { factor: usize },
    /// Orthonormal 8x8 block DCT, coefficients constrained to their
    /// quantization intervals.
    Jpeg { spectrum: QuantizedSpectrum },
}

impl Degradation {
    pub fn name(&self) -> &'static str {
        match self {
            Degradation::Denoise => "denoise",
            Degradation::Inpaint { .. } => "inpaint",
            Degradation::Deconv { .. } => "deconv",
            Degradation::SuperRes { .. } => "superres",
            Degradation::Jpeg { .. } => "jpeg",
        }
    }
}

/// A restoration problem: the operator, the observed data and the image size.
///
/// `data` lives in the operator's range: the image grid for denoising,
/// inpainting and deconvolution, the low resolution grid for
/// super-resolution, and the dequantized block-DCT coefficients for JPEG.
#[derive(Clone, Debug, PartialEq)]
pub struct ProblemSpec {
    pub image_dims: (usize, usize),
    pub degradation: Degradation,
    pub data: Grid,
}

impl ProblemSpec {
    /// Builds a problem, deriving the image size from the data and the operator.
    pub fn new(degradation: Degradation, data: Grid) -> Result<Self> {
        let (dx, dy) = data.dim();
        let image_dims = match &degradation {
            Degradation::SuperRes { factor } => (dx * factor, dy * factor),
            _ => (dx, dy),
        };
        let spec = ProblemSpec {
            image_dims,
            degradation,
            data,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// JPEG problem whose data are the dequantized coefficients of `spectrum`.
    pub fn jpeg(spectrum: QuantizedSpectrum) -> Result<Self> {
        let data = spectrum.dequantized_coefficients();
        ProblemSpec::new(Degradation::Jpeg { spectrum }, data)
    }

    pub fn validate(&self) -> Result<()> {
        let (nx, ny) = self.image_dims;
        if nx == 0 || ny == 0 {
            return Err(GenregError::Shape("empty image".into()));
        }
        match &self.degradation {
            Degradation::Denoise => {}
            Degradation::Inpaint { mask } => {
                if mask.dim() != self.image_dims {
                    return Err(GenregError::Shape(format!(
                        "mask {:?} vs image {:?}",
                        mask.dim(),
                        self.image_dims
                    )));
                }
                if mask.iter().any(|&m| m != 0.0 && m != 1.0) {
                    return Err(GenregError::Config("mask entries must be 0 or 1".into()));
                }
            }
            Degradation::Deconv { kernel } => {
                let (a, b) = kernel.dim();
                if a != b || a % 2 == 0 {
                    return Err(GenregError::Shape(format!(
                        "blur kernel must be (2s+1)x(2s+1), got {a}x{b}"
                    )));
                }
            }
            Degradation::SuperRes { factor } => {
                if *factor == 0 || nx % factor != 0 || ny % factor != 0 {
                    return Err(GenregError::Config(format!(
                        "factor {factor} must divide the image dims {nx}x{ny}"
                    )));
                }
            }
            Degradation::Jpeg { spectrum } => {
                spectrum.validate()?;
                if spectrum.dims != self.image_dims {
                    return Err(GenregError::Shape(format!(
                        "spectrum {:?} vs image {:?}",
                        spectrum.dims, self.image_dims
                    )));
                }
            }
        }
        let expected = self.data_dims();
        if self.data.dim() != expected {
            return Err(GenregError::Shape(format!(
                "data {:?}, expected {expected:?}",
                self.data.dim()
            )));
        }
        Ok(())
    }

    pub fn data_dims(&self) -> (usize, usize) {
        match &self.degradation {
            Degradation::SuperRes { factor } => {
                (self.image_dims.0 / factor, self.image_dims.1 / factor)
            }
            _ => self.image_dims,
        }
    }

    /// True when the data term is the smooth quadratic (`D^1`); false when it
    /// is an indicator (`D^2`).
    pub fn has_smooth_fidelity(&self) -> bool {
        matches!(
            self.degradation,
            Degradation::Denoise | Degradation::Deconv { .. }
        )
    }

    fn check_image(&self, u: &Grid) -> Result<()> {
        if u.dim() != self.image_dims {
            return Err(GenregError::Shape(format!(
                "image {:?}, problem expects {:?}",
                u.dim(),
                self.image_dims
            )));
        }
        Ok(())
    }

    pub fn apply_forward(&self, u: &Grid) -> Result<Grid> {
        self.check_image(u)?;
        Ok(match &self.degradation {
            Degradation::Denoise => u.clone(),
            Degradation::Inpaint { mask } => mask * u,
            Degradation::Deconv { kernel } => blur(u, kernel),
            Degradation::SuperRes { factor } => block_average(u, *factor),
            Degradation::Jpeg { .. } => block_dct(u)?,
        })
    }

    pub fn apply_adjoint(&self, d: &Grid) -> Result<Grid> {
        if d.dim() != self.data_dims() {
            return Err(GenregError::Shape(format!(
                "data-space value {:?}, expected {:?}",
                d.dim(),
                self.data_dims()
            )));
        }
        Ok(match &self.degradation {
            Degradation::Denoise => d.clone(),
            Degradation::Inpaint { mask } => mask * d,
            Degradation::Deconv { kernel } => blur_adjoint(d, kernel),
            Degradation::SuperRes { factor } => {
                block_replicate(d, *factor) / (factor * factor) as f64
            }
            Degradation::Jpeg { .. } => block_idct(d)?,
        })
    }

    /// Whether `u` satisfies the hard data constraint up to `tol`
    /// (always true for smooth data terms).
    pub fn is_feasible(&self, u: &Grid, tol: f64) -> Result<bool> {
        self.check_image(u)?;
        Ok(match &self.degradation {
            Degradation::Denoise | Degradation::Deconv { .. } => true,
            Degradation::Inpaint { .. } | Degradation::SuperRes { .. } => {
                let au = self.apply_forward(u)?;
                au.iter()
                    .zip(self.data.iter())
                    .all(|(a, y)| (a - y).abs() <= tol)
            }
            Degradation::Jpeg { spectrum } => {
                let coeffs = block_dct(u)?;
                spectrum.contains(&coeffs, tol)
            }
        })
    }

    /// The standard starting image for the solver: the data itself for
    /// denoising and deconvolution, known pixels plus their mean elsewhere for
    /// inpainting, block replication for super-resolution, and the
    /// dequantized image for JPEG.
    pub fn initial_image(&self, adjoint_start: bool) -> Result<Grid> {
        Ok(match &self.degradation {
            Degradation::Denoise => self.data.clone(),
            Degradation::Deconv { .. } => {
                if adjoint_start {
                    self.apply_adjoint(&self.data)?
                } else {
                    self.data.clone()
                }
            }
            Degradation::Inpaint { mask } => {
                let known = mask.sum();
                let mean = if known > 0.0 {
                    (mask * &self.data).sum() / known
                } else {
                    0.0
                };
                ndarray::Zip::from(mask)
                    .and(&self.data)
                    .map_collect(|&m, &y| if m == 1.0 { y } else { mean })
            }
            Degradation::SuperRes { factor } => block_replicate(&self.data, *factor),
            Degradation::Jpeg { .. } => block_idct(&self.data)?,
        })
    }
}

/// `(Au)_{i,j} = sum_{i',j'=-s..s} k[s+i'][s+j'] u[i-i'][j-j']`, zero outside the image.
pub fn blur(u: &Grid, kernel: &Grid) -> Grid {
    let (nx, ny) = u.dim();
    let s = (kernel.nrows() / 2) as isize;
    Grid::from_shape_fn((nx, ny), |(i, j)| {
        let mut acc = 0.0;
        for di in -s..=s {
            let a = i as isize - di;
            if a < 0 || a >= nx as isize {
                continue;
            }
            for dj in -s..=s {
                let b = j as isize - dj;
                if b < 0 || b >= ny as isize {
                    continue;
                }
                acc += kernel[[(s + di) as usize, (s + dj) as usize]] * u[[a as usize, b as usize]];
            }
        }
        acc
    })
}

/// Adjoint of [`blur`]: correlation with the kernel under the same zero padding.
pub fn blur_adjoint(d: &Grid, kernel: &Grid) -> Grid {
    let (nx, ny) = d.dim();
    let s = (kernel.nrows() / 2) as isize;
    Grid::from_shape_fn((nx, ny), |(a, b)| {
        let mut acc = 0.0;
        for di in -s..=s {
            let i = a as isize + di;
            if i < 0 || i >= nx as isize {
                continue;
            }
            for dj in -s..=s {
                let j = b as isize + dj;
                if j < 0 || j >= ny as isize {
                    continue;
                }
                acc += kernel[[(s + di) as usize, (s + dj) as usize]] * d[[i as usize, j as usize]];
            }
        }
        acc
    })
}

/// Mean over each `s x s` block.
pub fn block_average(u: &Grid, s: usize) -> Grid {
    let (nx, ny) = u.dim();
    let mut out = Grid::zeros((nx / s, ny / s));
    for ((i, j), &v) in u.indexed_iter() {
        out[[i / s, j / s]] += v;
    }
    out / (s * s) as f64
}

/// Copies each entry onto its `s x s` block.
pub fn block_replicate(d: &Grid, s: usize) -> Grid {
    let (mx, my) = d.dim();
    Grid::from_shape_fn((mx * s, my * s), |(i, j)| d[[i / s, j / s]])
}
