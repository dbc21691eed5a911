//! Vector-space operations shared by the three optimization blocks.

use crate::grid::Grid;
use ndarray::Zip;

/// A block variable is a finite collection of grids treated as one vector.
pub trait BlockVariable: Clone {
    fn grids(&self) -> Vec<&Grid>;
    fn grids_mut(&mut self) -> Vec<&mut Grid>;

    fn dot(&self, other: &Self) -> f64 {
        self.grids()
            .into_iter()
            .zip(other.grids())
            .map(|(a, b)| crate::grid::inner(a, b))
            .sum()
    }

    fn raw_sq_norm(&self) -> f64 {
        self.grids().into_iter().map(crate::grid::raw_sq_norm).sum()
    }

    /// `self += alpha * other`
    fn add_scaled(&mut self, alpha: f64, other: &Self) {
        for (a, b) in self.grids_mut().into_iter().zip(other.grids()) {
            a.scaled_add(alpha, b);
        }
    }

    fn difference(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.add_scaled(-1.0, other);
        out
    }

    /// `self + weight * (self - prev)`
    fn extrapolate(&self, prev: &Self, weight: f64) -> Self {
        let mut out = self.clone();
        if weight != 0.0 {
            for ((o, x), p) in out
                .grids_mut()
                .into_iter()
                .zip(self.grids())
                .zip(prev.grids())
            {
                Zip::from(o)
                    .and(x)
                    .and(p)
                    .for_each(|o, &x, &p| *o = x + weight * (x - p));
            }
        }
        out
    }

    fn is_finite(&self) -> bool {
        self.grids().into_iter().all(crate::grid::all_finite)
    }

    fn same_shape(&self, other: &Self) -> bool {
        let a = self.grids();
        let b = other.grids();
        a.len() == b.len() && a.iter().zip(&b).all(|(x, y)| x.dim() == y.dim())
    }
}

impl BlockVariable for Grid {
    fn grids(&self) -> Vec<&Grid> {
        vec![self]
    }

    fn grids_mut(&mut self) -> Vec<&mut Grid> {
        vec![self]
    }
}
