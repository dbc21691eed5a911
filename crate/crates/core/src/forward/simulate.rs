//! Deterministic corruption of ground-truth images.

use super::jpeg::{quality_table, QuantizedSpectrum};
use super::{Degradation, ProblemSpec};
use crate::error::{GenregError, Result};
use crate::grid::Grid;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Width of the Gaussian blur kernel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BlurWidth {
    /// Standard deviation as a fraction of the kernel half-width `s`.
    RelativeToHalfWidth(f64),
    /// Standard deviation in pixels.
    Pixels(f64),
}

/// How to corrupt a ground-truth image.
#[derive(Clone, Debug, PartialEq)]
pub enum Recipe {
    Inpaint {
        keep_fraction: f64,
    },
    Denoise {
        /// Noise standard deviation relative to the image range.
        noise: f64,
    },
    Deconv {
        half_width: usize,
        width: BlurWidth,
        noise: f64,
    },
    SuperRes {
        factor: usize,
    },
    Jpeg {
        quality: u32,
    },
}

impl Recipe {
    pub fn inpaint() -> Self {
        Recipe::Inpaint { keep_fraction: 0.3 }
    }

    pub fn denoise() -> Self {
        Recipe::Denoise { noise: 0.1 }
    }

    pub fn deconv() -> Self {
        Recipe::Deconv {
            half_width: 4,
            width: BlurWidth::RelativeToHalfWidth(0.25),
            noise: 0.025,
        }
    }

    pub fn superres() -> Self {
        Recipe::SuperRes { factor: 4 }
    }

    pub fn jpeg() -> Self {
        Recipe::Jpeg { quality: 10 }
    }

    fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(GenregError::Recipe(m.to_string()));
        match *self {
            Recipe::Inpaint { keep_fraction } if !(0.0..=1.0).contains(&keep_fraction) => {
                fail("keep_fraction must lie in [0, 1]")
            }
            Recipe::Denoise { noise } | Recipe::Deconv { noise, .. }
                if !(noise >= 0.0 && noise.is_finite()) =>
            {
                fail("noise must be a nonnegative number")
            }
            Recipe::Deconv {
                width: BlurWidth::RelativeToHalfWidth(w) | BlurWidth::Pixels(w),
                ..
            } if !(w > 0.0 && w.is_finite()) => fail("blur width must be positive"),
            Recipe::SuperRes { factor: 0 } => fail("factor must be positive"),
            Recipe::Jpeg { quality } if !(1..=100).contains(&quality) => {
                fail("quality must lie in 1..=100")
            }
            _ => Ok(()),
        }
    }
}

/// Seeded source of uniform and Gaussian samples.
///
/// Uses the ChaCha20 stream (a counter-based generator) and Box-Muller for
/// normals, so the streams are identical on every platform.
pub struct NoiseSource {
    rng: ChaCha20Rng,
    spare: Option<f64>,
}

impl NoiseSource {
    pub fn new(seed: u64) -> Self {
        NoiseSource {
            rng: ChaCha20Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // 1 - U lies in (0, 1], so the log is finite
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(radius * angle.sin());
        radius * angle.cos()
    }
}

/// Normalized `(2s+1) x (2s+1)` Gaussian kernel.
pub fn gaussian_kernel(half_width: usize, width: BlurWidth) -> Grid {
    let sigma = match width {
        BlurWidth::RelativeToHalfWidth(f) => f * half_width as f64,
        BlurWidth::Pixels(p) => p,
    };
    let size = 2 * half_width + 1;
    let s = half_width as f64;
    let mut k = Grid::from_shape_fn((size, size), |(i, j)| {
        let (di, dj) = (i as f64 - s, j as f64 - s);
        if sigma > 0.0 {
            (-(di * di + dj * dj) / (2.0 * sigma * sigma)).exp()
        } else if di == 0.0 && dj == 0.0 {
            1.0
        } else {
            0.0
        }
    });
    let total = k.sum();
    k /= total;
    k
}

fn add_noise(data: &mut Grid, std: f64, source: &mut NoiseSource) {
    if std == 0.0 {
        return;
    }
    for v in data.iter_mut() {
        *v += std * source.standard_normal();
    }
}

fn range(g: &Grid) -> f64 {
    let max = g.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = g.iter().cloned().fold(f64::INFINITY, f64::min);
    max - min
}

/// Produces the observed data `y = A u + eta` for `ground_truth`.
/// The result depends only on `(ground_truth, recipe, seed)`.
pub fn simulate_corruption(ground_truth: &Grid, recipe: &Recipe, seed: u64) -> Result<ProblemSpec> {
    recipe.validate()?;
    let mut source = NoiseSource::new(seed);
    match *recipe {
        Recipe::Inpaint { keep_fraction } => {
            let mask = Grid::from_shape_fn(ground_truth.dim(), |_| {
                if source.uniform() < keep_fraction {
                    1.0
                } else {
                    0.0
                }
            });
            let y = &mask * ground_truth;
            ProblemSpec::new(Degradation::Inpaint { mask }, y)
        }
        Recipe::Denoise { noise } => {
            let mut y = ground_truth.clone();
            add_noise(&mut y, noise * range(ground_truth), &mut source);
            ProblemSpec::new(Degradation::Denoise, y)
        }
        Recipe::Deconv {
            half_width,
            width,
            noise,
        } => {
            let kernel = gaussian_kernel(half_width, width);
            let mut y = super::blur(ground_truth, &kernel);
            add_noise(&mut y, noise * range(ground_truth), &mut source);
            ProblemSpec::new(Degradation::Deconv { kernel }, y)
        }
        Recipe::SuperRes { factor } => {
            let (nx, ny) = ground_truth.dim();
            if nx % factor != 0 || ny % factor != 0 {
                return Err(GenregError::Recipe(format!(
                    "factor {factor} does not divide {nx}x{ny}"
                )));
            }
            ProblemSpec::new(
                Degradation::SuperRes { factor },
                super::block_average(ground_truth, factor),
            )
        }
        Recipe::Jpeg { quality } => {
            let spectrum = QuantizedSpectrum::quantize(ground_truth, quality_table(quality))?;
            ProblemSpec::jpeg(spectrum)
        }
    }
}
