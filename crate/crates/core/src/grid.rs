//! Grids, normalized norms and the forward-difference gradient.
//!
//! Images, latents and kernels are all stored as row-major `Array2<f64>`.
//! Axis 0 is the row index `i`, axis 1 the column index `j`.

use ndarray::{Array2, Zip};

/// A rectangular grid of real samples.
pub type Grid = Array2<f64>;

/// Forward differences of a grid with Neumann closure.
///
/// `d1` holds differences along rows (last row is zero), `d2` along
/// columns (last column is zero).
#[derive(Clone, Debug, PartialEq)]
pub struct GradientField {
    pub d1: Grid,
    pub d2: Grid,
}

impl GradientField {
    pub fn zeros(dims: (usize, usize)) -> Self {
        GradientField {
            d1: Grid::zeros(dims),
            d2: Grid::zeros(dims),
        }
    }

    pub fn dim(&self) -> (usize, usize) {
        self.d1.dim()
    }

    /// Plain entrywise inner product over both channels.
    pub fn dot(&self, other: &GradientField) -> f64 {
        inner(&self.d1, &other.d1) + inner(&self.d2, &other.d2)
    }
}

/// `((1/(h*w)) * sum |g|^p)^(1/p)`.
pub fn normalized_norm(g: &Grid, p: f64) -> f64 {
    debug_assert!(p >= 1.0);
    let count = g.len() as f64;
    if count == 0.0 {
        return 0.0;
    }
    if p == 1.0 {
        return g.iter().map(|x| x.abs()).sum::<f64>() / count;
    }
    if p == 2.0 {
        return (raw_sq_norm(g) / count).sqrt();
    }
    (g.iter().map(|x| x.abs().powf(p)).sum::<f64>() / count).powf(1.0 / p)
}

/// Sum of squared entries, without normalization.
pub fn raw_sq_norm(g: &Grid) -> f64 {
    g.iter().map(|x| x * x).sum()
}

/// Unnormalized entrywise inner product.
pub fn inner(a: &Grid, b: &Grid) -> f64 {
    debug_assert_eq!(a.dim(), b.dim());
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

pub fn all_finite(g: &Grid) -> bool {
    g.iter().all(|x| x.is_finite())
}

pub fn discrete_gradient(u: &Grid) -> GradientField {
    let (h, w) = u.dim();
    let mut field = GradientField::zeros((h, w));
    for i in 0..h {
        for j in 0..w {
            let here = u[[i, j]];
            if i + 1 < h {
                field.d1[[i, j]] = u[[i + 1, j]] - here;
            }
            if j + 1 < w {
                field.d2[[i, j]] = u[[i, j + 1]] - here;
            }
        }
    }
    field
}

/// Exact adjoint of [`discrete_gradient`] under the plain inner product
/// (the negative discrete divergence).
pub fn gradient_adjoint(f: &GradientField) -> Grid {
    let (h, w) = f.dim();
    let mut g = Grid::zeros((h, w));
    for i in 0..h {
        for j in 0..w {
            let mut acc = 0.0;
            if i + 1 < h {
                acc -= f.d1[[i, j]];
            }
            if i > 0 {
                acc += f.d1[[i - 1, j]];
            }
            if j + 1 < w {
                acc -= f.d2[[i, j]];
            }
            if j > 0 {
                acc += f.d2[[i, j - 1]];
            }
            g[[i, j]] = acc;
        }
    }
    g
}

/// `x + weight * (x - prev)`.
pub fn extrapolate_grid(x: &Grid, prev: &Grid, weight: f64) -> Grid {
    let mut out = x.clone();
    if weight != 0.0 {
        Zip::from(&mut out)
            .and(x)
            .and(prev)
            .for_each(|o, &a, &b| *o = a + weight * (a - b));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;

    #[test]
    fn normalized_norm_examples() {
        let ones = Grid::ones((2, 2));
        for p in [1.0, 2.0, 3.5] {
            assert_relative_eq!(normalized_norm(&ones, p), 1.0, epsilon = 1e-15);
        }
        let g = array![[3.0, 4.0]];
        assert_relative_eq!(
            normalized_norm(&g, 2.0),
            3.5355339059327378,
            epsilon = 1e-14
        );
        assert_eq!(normalized_norm(&Grid::zeros((3, 5)), 1.0), 0.0);
    }

    #[test]
    fn raw_sq_norm_examples() {
        assert_eq!(raw_sq_norm(&array![[3.0, 4.0]]), 25.0);
        assert_eq!(raw_sq_norm(&Grid::zeros((4, 4))), 0.0);
        assert_eq!(raw_sq_norm(&Grid::from_elem((2, 2), 0.5)), 1.0);
    }

    #[test]
    fn gradient_by_hand() {
        let u = array![[0.0, 1.0], [0.0, 1.0]];
        let f = discrete_gradient(&u);
        assert_eq!(f.d1, Grid::zeros((2, 2)));
        assert_eq!(f.d2, array![[1.0, 0.0], [1.0, 0.0]]);

        let c = Grid::from_elem((3, 4), 2.5);
        assert_eq!(discrete_gradient(&c), GradientField::zeros((3, 4)));
        assert_eq!(
            discrete_gradient(&array![[7.0]]),
            GradientField::zeros((1, 1))
        );
    }

    #[test]
    fn adjoint_of_basis_gradient_is_divergence_stencil() {
        // Brute force: build the 4x8 matrix of the gradient on 2x2 grids and
        // compare its transpose applied to f against gradient_adjoint(f).
        let mut e11 = Grid::zeros((2, 2));
        e11[[0, 0]] = 1.0;
        let f = discrete_gradient(&e11);
        let g = gradient_adjoint(&f);
        let mut expected = Grid::zeros((2, 2));
        for bi in 0..2 {
            for bj in 0..2 {
                let mut basis = Grid::zeros((2, 2));
                basis[[bi, bj]] = 1.0;
                expected[[bi, bj]] = discrete_gradient(&basis).dot(&f);
            }
        }
        assert_eq!(g, expected);
        assert_eq!(g, array![[2.0, -1.0], [-1.0, 0.0]]);
        assert_eq!(
            gradient_adjoint(&GradientField::zeros((3, 3))),
            Grid::zeros((3, 3))
        );
    }

    #[test]
    fn extrapolation() {
        let x = array![[1.0]];
        let prev = array![[0.0]];
        assert_eq!(extrapolate_grid(&x, &prev, 0.0), x);
        assert_eq!(extrapolate_grid(&x, &x, 0.7), x);
        assert_relative_eq!(extrapolate_grid(&x, &prev, 0.7)[[0, 0]], 1.7);
    }
}
