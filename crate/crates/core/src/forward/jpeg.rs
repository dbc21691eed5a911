//! Orthonormal 8x8 block DCT and simulated JPEG quantization.

use crate::error::{GenregError, Result};
use crate::grid::Grid;
use std::io::{BufRead, Write};
use std::sync::OnceLock;

pub const BLOCK: usize = 8;

/// The standard JPEG luminance quantization table (row-major, 0..255 units).
pub const STANDARD_LUMINANCE_TABLE: [f64; 64] = [
    16., 11., 10., 16., 24., 40., 51., 61., //
    12., 12., 14., 19., 26., 58., 60., 55., //
    14., 13., 16., 24., 40., 57., 69., 56., //
    14., 17., 22., 29., 51., 87., 80., 62., //
    18., 22., 37., 56., 68., 109., 103., 77., //
    24., 35., 55., 64., 81., 104., 113., 92., //
    49., 64., 78., 87., 103., 121., 120., 101., //
    72., 92., 95., 98., 112., 100., 103., 99., //
];

/// The standard luminance table scaled to `quality` (1..=100) with the
/// usual IJG rule, expressed in units of a [0, 1] image.
pub fn quality_table(quality: u32) -> [f64; 64] {
    let q = quality.clamp(1, 100) as f64;
    let scale = if q < 50.0 {
        5000.0 / q
    } else {
        200.0 - 2.0 * q
    };
    let mut table = [0.0; 64];
    for (t, base) in table.iter_mut().zip(STANDARD_LUMINANCE_TABLE) {
        let step = ((base * scale + 50.0) / 100.0).floor().clamp(1.0, 255.0);
        *t = step / 255.0;
    }
    table
}

fn dct_matrix() -> &'static [[f64; BLOCK]; BLOCK] {
    static MATRIX: OnceLock<[[f64; BLOCK]; BLOCK]> = OnceLock::new();
    MATRIX.get_or_init(|| {
        let mut c = [[0.0; BLOCK]; BLOCK];
        let n = BLOCK as f64;
        for (k, row) in c.iter_mut().enumerate() {
            let alpha = if k == 0 {
                (1.0 / n).sqrt()
            } else {
                (2.0 / n).sqrt()
            };
            for (x, v) in row.iter_mut().enumerate() {
                *v = alpha
                    * (std::f64::consts::PI * (2 * x + 1) as f64 * k as f64 / (2.0 * n)).cos();
            }
        }
        c
    })
}

fn check_blocks(dims: (usize, usize)) -> Result<()> {
    if dims.0 == 0 || dims.1 == 0 || !dims.0.is_multiple_of(BLOCK) || !dims.1.is_multiple_of(BLOCK)
    {
        return Err(GenregError::Shape(format!(
            "block DCT needs dims that are multiples of {BLOCK}, got {dims:?}"
        )));
    }
    Ok(())
}

fn transform(u: &Grid, inverse: bool) -> Result<Grid> {
    check_blocks(u.dim())?;
    let c = dct_matrix();
    let (nx, ny) = u.dim();
    let mut out = Grid::zeros((nx, ny));
    let mut tmp = [[0.0; BLOCK]; BLOCK];
    for bi in (0..nx).step_by(BLOCK) {
        for bj in (0..ny).step_by(BLOCK) {
            // forward: C X C^T, inverse: C^T Y C
            for (a, trow) in tmp.iter_mut().enumerate() {
                for (y, t) in trow.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for x in 0..BLOCK {
                        let coef = if inverse { c[x][a] } else { c[a][x] };
                        acc += coef * u[[bi + x, bj + y]];
                    }
                    *t = acc;
                }
            }
            for (a, trow) in tmp.iter().enumerate() {
                for b in 0..BLOCK {
                    let mut acc = 0.0;
                    for (y, t) in trow.iter().enumerate() {
                        let coef = if inverse { c[y][b] } else { c[b][y] };
                        acc += t * coef;
                    }
                    out[[bi + a, bj + b]] = acc;
                }
            }
        }
    }
    Ok(out)
}

/// Orthonormal DCT-II of every 8x8 block; coefficients stay in block layout.
pub fn block_dct(u: &Grid) -> Result<Grid> {
    transform(u, false)
}

/// Inverse (and adjoint) of [`block_dct`].
pub fn block_idct(coeffs: &Grid) -> Result<Grid> {
    transform(coeffs, true)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpectrumEncoding {
    Text,
    Binary,
}

/// Quantization indices of every 8x8 block plus the shared quantization table.
///
/// Indices are stored block by block (blocks in row-major order), each
/// block's 64 entries in row-major frequency order.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantizedSpectrum {
    pub dims: (usize, usize),
    pub table: [f64; 64],
    pub indices: Vec<i32>,
}

impl QuantizedSpectrum {
    /// Quantizes the block-DCT of `u`: `k = round(c / q)`, ties away from zero.
    pub fn quantize(u: &Grid, table: [f64; 64]) -> Result<Self> {
        let coeffs = block_dct(u)?;
        let mut spectrum = QuantizedSpectrum {
            dims: u.dim(),
            table,
            indices: Vec::new(),
        };
        spectrum.validate_table()?;
        spectrum.indices = spectrum
            .positions()
            .map(|(i, j, t)| (coeffs[[i, j]] / table[t]).round() as i32)
            .collect();
        Ok(spectrum)
    }

    fn validate_table(&self) -> Result<()> {
        if self.table.iter().any(|q| !(q.is_finite() && *q > 0.0)) {
            return Err(GenregError::Config(
                "quantization steps must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        check_blocks(self.dims)?;
        self.validate_table()?;
        if self.indices.len() != self.dims.0 * self.dims.1 {
            return Err(GenregError::Shape(format!(
                "{} indices for a {:?} image",
                self.indices.len(),
                self.dims
            )));
        }
        Ok(())
    }

    /// `(row, col, table index)` of every stored coefficient in storage order.
    fn positions(&self) -> impl Iterator<Item = (usize, usize, usize)> {
        let (nx, ny) = self.dims;
        let blocks_y = ny / BLOCK;
        let nblocks = (nx / BLOCK) * blocks_y;
        (0..nblocks).flat_map(move |b| {
            let (bi, bj) = ((b / blocks_y) * BLOCK, (b % blocks_y) * BLOCK);
            (0..BLOCK * BLOCK).map(move |t| (bi + t / BLOCK, bj + t % BLOCK, t))
        })
    }

    /// The closed interval `[q(k - 1/2), q(k + 1/2)]` per coefficient, as two grids.
    pub fn intervals(&self) -> (Grid, Grid) {
        let mut lo = Grid::zeros(self.dims);
        let mut hi = Grid::zeros(self.dims);
        for ((i, j, t), &k) in self.positions().zip(&self.indices) {
            let q = self.table[t];
            lo[[i, j]] = q * (k as f64 - 0.5);
            hi[[i, j]] = q * (k as f64 + 0.5);
        }
        (lo, hi)
    }

    /// `q * k` per coefficient, in block layout.
    pub fn dequantized_coefficients(&self) -> Grid {
        let mut out = Grid::zeros(self.dims);
        for ((i, j, t), &k) in self.positions().zip(&self.indices) {
            out[[i, j]] = self.table[t] * k as f64;
        }
        out
    }

    pub fn dequantized_image(&self) -> Result<Grid> {
        block_idct(&self.dequantized_coefficients())
    }

    /// Clamps block-DCT coefficients into their quantization intervals.
    pub fn clamp(&self, coeffs: &Grid) -> Grid {
        let mut out = coeffs.clone();
        for ((i, j, t), &k) in self.positions().zip(&self.indices) {
            let q = self.table[t];
            out[[i, j]] = coeffs[[i, j]].clamp(q * (k as f64 - 0.5), q * (k as f64 + 0.5));
        }
        out
    }

    pub fn contains(&self, coeffs: &Grid, tol: f64) -> bool {
        coeffs.dim() == self.dims
            && self.positions().zip(&self.indices).all(|((i, j, t), &k)| {
                let q = self.table[t];
                let c = coeffs[[i, j]];
                c >= q * (k as f64 - 0.5) - tol && c <= q * (k as f64 + 0.5) + tol
            })
    }

    /// Writes the sidecar format: a text header followed by the indices.
    pub fn write_to<W: Write>(&self, mut w: W, encoding: SpectrumEncoding) -> std::io::Result<()> {
        writeln!(w, "genreg-qspec 1")?;
        writeln!(w, "dims {} {}", self.dims.0, self.dims.1)?;
        let enc = match encoding {
            SpectrumEncoding::Text => "text",
            SpectrumEncoding::Binary => "binary",
        };
        writeln!(w, "encoding {enc}")?;
        let table: Vec<String> = self.table.iter().map(|q| format!("{q:?}")).collect();
        writeln!(w, "table {}", table.join(" "))?;
        let nblocks = self.indices.len() / (BLOCK * BLOCK);
        writeln!(w, "blocks {nblocks}")?;
        match encoding {
            SpectrumEncoding::Text => {
                for block in self.indices.chunks(BLOCK * BLOCK) {
                    let line: Vec<String> = block.iter().map(|k| k.to_string()).collect();
                    writeln!(w, "{}", line.join(" "))?;
                }
            }
            SpectrumEncoding::Binary => {
                for k in &self.indices {
                    w.write_all(&k.to_le_bytes())?;
                }
            }
        }
        w.flush()
    }

    pub fn read_from<R: BufRead>(mut r: R) -> Result<Self> {
        let mut line = String::new();
        let mut header = |expect: &str| -> Result<String> {
            line.clear();
            r.read_line(&mut line)
                .map_err(|e| GenregError::Format(e.to_string()))?;
            let trimmed = line.trim_end();
            trimmed
                .strip_prefix(expect)
                .map(|rest| rest.trim().to_string())
                .ok_or_else(|| {
                    GenregError::Format(format!("expected `{expect}`, found `{trimmed}`"))
                })
        };
        let version = header("genreg-qspec")?;
        if version != "1" {
            return Err(GenregError::Format(format!(
                "unsupported version {version}"
            )));
        }
        let dims: Vec<usize> = parse_list(&header("dims")?)?;
        if dims.len() != 2 {
            return Err(GenregError::Format("dims needs two entries".into()));
        }
        let encoding = match header("encoding")?.as_str() {
            "text" => SpectrumEncoding::Text,
            "binary" => SpectrumEncoding::Binary,
            other => return Err(GenregError::Format(format!("unknown encoding `{other}`"))),
        };
        let table_vals: Vec<f64> = parse_list(&header("table")?)?;
        let table: [f64; 64] = table_vals
            .try_into()
            .map_err(|_| GenregError::Format("table needs 64 entries".into()))?;
        let nblocks: usize = header("blocks")?
            .parse()
            .map_err(|_| GenregError::Format("bad block count".into()))?;
        let count = nblocks * BLOCK * BLOCK;
        let indices = match encoding {
            SpectrumEncoding::Text => {
                let mut rest = String::new();
                r.read_to_string(&mut rest)
                    .map_err(|e| GenregError::Format(e.to_string()))?;
                parse_list::<i32>(&rest)?
            }
            SpectrumEncoding::Binary => {
                let mut bytes = vec![0u8; count * 4];
                r.read_exact(&mut bytes)
                    .map_err(|e| GenregError::Format(e.to_string()))?;
                bytes
                    .chunks_exact(4)
                    .map(|c| i32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                    .collect()
            }
        };
        if indices.len() != count {
            return Err(GenregError::Format(format!(
                "expected {count} indices, found {}",
                indices.len()
            )));
        }
        let spectrum = QuantizedSpectrum {
            dims: (dims[0], dims[1]),
            table,
            indices,
        };
        spectrum.validate()?;
        Ok(spectrum)
    }
}

fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>> {
    s.split_whitespace()
        .map(|tok| {
            tok.parse()
                .map_err(|_| GenregError::Format(format!("cannot parse `{tok}`")))
        })
        .collect()
}
