//! Geometry of the cyclic index set.
//!
//! Sites are addressed 1-based at the public surface (`distance`), and
//! 0-based through [`CyclicDomain::dist0`] for hot loops inside the crate.

use nalgebra::DMatrix;

use crate::error::{argument, Result};

/// The ring `{1, .., d}` with distance `min(|i-j|, d-|i-j|)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CyclicDomain {
    d: usize,
}

impl CyclicDomain {
    pub fn new(d: usize) -> Result<Self> {
        if d == 0 {
            return Err(argument("domain needs at least one site"));
        }
        Ok(Self { d })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Largest distance realized on the ring, `floor(d/2)`.
    pub fn max_distance(&self) -> usize {
        self.d / 2
    }

    /// Distance between 1-based sites `i` and `j`.
    pub fn distance(&self, i: usize, j: usize) -> Result<usize> {
        if i == 0 || j == 0 || i > self.d || j > self.d {
            return Err(argument(format!(
                "site index out of range: ({i}, {j}) with d = {}",
                self.d
            )));
        }
        Ok(self.dist0(i - 1, j - 1))
    }

    /// Distance between 0-based sites. Indices are not checked.
    #[inline]
    pub fn dist0(&self, i: usize, j: usize) -> usize {
        let diff = i.abs_diff(j);
        diff.min(self.d - diff)
    }

    /// 0-based sites within distance `radius` of 0-based site `i`, in
    /// increasing index order.
    pub fn window0(&self, i: usize, radius: usize) -> Vec<usize> {
        if 2 * radius + 1 >= self.d {
            return (0..self.d).collect();
        }
        let mut out: Vec<usize> = (0..=2 * radius)
            .map(|off| (i + self.d + off - radius) % self.d)
            .collect();
        out.sort_unstable();
        out
    }

    /// `max_i #{j : d(i,j) <= l}`.
    pub fn volume_constant(&self, l: usize) -> usize {
        // every site sees the same neighbourhood on a ring
        (0..self.d).filter(|&j| self.dist0(0, j) <= l).count()
    }

    /// `max_i #{j : |d(i,j) - big| <= 2 small}`.
    pub fn boundary_volume_constant(&self, big: usize, small: usize) -> usize {
        let band = 2 * small;
        (0..self.d)
            .filter(|&j| self.dist0(0, j).abs_diff(big) <= band)
            .count()
    }

    /// Smallest `x` such that `|a_ij| <= tol` whenever `d(i,j) > x`.
    ///
    /// `tol = 0.0` is an exact zero test.
    pub fn bandwidth_tol(&self, a: &DMatrix<f64>, tol: f64) -> Result<usize> {
        if a.nrows() != self.d || a.ncols() != self.d {
            return Err(argument(format!(
                "bandwidth: matrix is {}x{}, domain has {} sites",
                a.nrows(),
                a.ncols(),
                self.d
            )));
        }
        let mut width = 0;
        for j in 0..self.d {
            for i in 0..self.d {
                if a[(i, j)].abs() > tol {
                    width = width.max(self.dist0(i, j));
                }
            }
        }
        Ok(width)
    }

    pub fn bandwidth(&self, a: &DMatrix<f64>) -> Result<usize> {
        self.bandwidth_tol(a, 0.0)
    }
}
