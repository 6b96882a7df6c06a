//! Dense symmetric matrix utilities: norms, Schur products, localization
//! masks, PSD floors and Loewner domination.

use std::ops::Deref;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::domain::CyclicDomain;
use crate::error::{argument, Error, Result};

/// Relative tolerance used for PSD checks, scaled by the operator norm.
pub const PSD_RELATIVE_TOL: f64 = 1e-10;

/// A symmetric matrix with finite entries.
///
/// Construction symmetrizes the input as `(C + C^T) / 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovMatrix(DMatrix<f64>);

impl CovMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(argument(format!(
                "covariance must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(argument("covariance has non-finite entries"));
        }
        Ok(Self::symmetrized(m))
    }

    /// Symmetrizes without the finiteness check.
    pub(crate) fn symmetrized(m: DMatrix<f64>) -> Self {
        let mut out = m;
        let n = out.nrows();
        for j in 0..n {
            for i in (j + 1)..n {
                let avg = 0.5 * (out[(i, j)] + out[(j, i)]);
                out[(i, j)] = avg;
                out[(j, i)] = avg;
            }
        }
        Self(out)
    }

    pub fn zeros(d: usize) -> Self {
        Self(DMatrix::zeros(d, d))
    }

    pub fn identity(d: usize) -> Self {
        Self(DMatrix::identity(d, d))
    }

    pub fn scaled_identity(d: usize, s: f64) -> Self {
        Self(DMatrix::identity(d, d) * s)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    /// `self + s I`.
    pub fn shifted(&self, s: f64) -> Self {
        let mut m = self.0.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += s;
        }
        Self(m)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self(&self.0 * s)
    }

    pub fn max_diagonal(&self) -> f64 {
        self.0.diagonal().max()
    }
}

impl Deref for CovMatrix {
    type Target = DMatrix<f64>;

    fn deref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskKind {
    Cutoff,
    GaspariCohn,
}

/// A localization matrix `[D]_{ij} = phi(d(i,j))`.
#[derive(Debug, Clone)]
pub struct LocalizationMask {
    kind: MaskKind,
    radius: usize,
    scale: Option<f64>,
    entries: DMatrix<f64>,
}

impl LocalizationMask {
    /// `[D]_{ij} = 1` iff `d(i,j) <= radius`.
    pub fn cutoff(dom: &CyclicDomain, radius: usize) -> Self {
        let d = dom.dim();
        let entries = DMatrix::from_fn(d, d, |i, j| {
            if dom.dist0(i, j) <= radius {
                1.0
            } else {
                0.0
            }
        });
        Self {
            kind: MaskKind::Cutoff,
            radius,
            scale: None,
            entries,
        }
    }

    /// Exponential-polynomial taper `(1 + x/c) exp(-x/c)` truncated past `radius`.
    pub fn gaspari_cohn(dom: &CyclicDomain, scale: f64, radius: usize) -> Result<Self> {
        if !(scale > 0.0) {
            return Err(argument(format!("taper scale must be positive, got {scale}")));
        }
        let d = dom.dim();
        let entries =
            DMatrix::from_fn(d, d, |i, j| gaspari_cohn_weight(dom.dist0(i, j) as f64, scale, radius));
        Ok(Self {
            kind: MaskKind::GaspariCohn,
            radius,
            scale: Some(scale),
            entries,
        })
    }

    /// The all-ones mask (no localization).
    pub fn full(dom: &CyclicDomain) -> Self {
        Self::cutoff(dom, dom.max_distance())
    }

    pub fn kind(&self) -> MaskKind {
        self.kind
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn scale(&self) -> Option<f64> {
        self.scale
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// Max absolute row sum `||D||_1`.
    pub fn row_sum_norm(&self) -> f64 {
        row_sum_norm(&self.entries)
    }
}

/// The taper profile, evaluated at a real distance.
pub fn gaspari_cohn_weight(x: f64, scale: f64, radius: usize) -> f64 {
    if x > radius as f64 {
        0.0
    } else {
        let u = x / scale;
        (1.0 + u) * (-u).exp()
    }
}

/// Entrywise (Hadamard) product.
pub fn schur(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.shape() != b.shape() {
        return Err(argument(format!(
            "schur: shapes {:?} and {:?} differ",
            a.shape(),
            b.shape()
        )));
    }
    Ok(a.component_mul(b))
}

/// Schur product of a covariance with a localization mask.
pub fn localize(c: &CovMatrix, mask: &LocalizationMask) -> Result<CovMatrix> {
    schur(c, mask.entries()).map(CovMatrix)
}

/// `c o D_cut^radius` without materializing the mask.
pub fn cutoff_localize(c: &DMatrix<f64>, dom: &CyclicDomain, radius: usize) -> DMatrix<f64> {
    DMatrix::from_fn(c.nrows(), c.ncols(), |i, j| {
        if dom.dist0(i, j) <= radius {
            c[(i, j)]
        } else {
            0.0
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Norms {
    /// l2 operator norm.
    pub op: f64,
    /// Max absolute row sum.
    pub l1: f64,
    /// Max absolute entry.
    pub maxabs: f64,
}

pub fn norms(a: &CovMatrix) -> Norms {
    Norms {
        op: sym_op_norm(a),
        l1: row_sum_norm(a),
        maxabs: max_abs(a),
    }
}

/// Operator norm of a symmetric matrix as its largest absolute eigenvalue.
pub fn sym_op_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    let eig = a.clone().symmetric_eigenvalues();
    eig.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Operator norm of a general matrix (largest singular value).
pub fn op_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone().singular_values().max()
}

pub fn row_sum_norm(a: &DMatrix<f64>) -> f64 {
    a.row_iter()
        .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// Minimum eigenvalue.
pub fn psd_floor(a: &CovMatrix) -> f64 {
    if a.dim() == 0 {
        return 0.0;
    }
    a.0.clone().symmetric_eigenvalues().min()
}

/// Default absolute PSD tolerance for `a`: `1e-10 * ||a||`.
pub fn psd_tolerance(a: &CovMatrix) -> f64 {
    PSD_RELATIVE_TOL * sym_op_norm(a)
}

pub fn is_psd(a: &CovMatrix) -> bool {
    psd_floor(a) >= -psd_tolerance(a)
}

/// Smallest `r >= 1` with `e <= r (c + rho I)` in Loewner order.
///
/// Computed as `max(1, lambda_max(L^-1 e L^-T))` with `c + rho I = L L^T`.
pub fn domination_factor(e: &CovMatrix, c: &CovMatrix, rho: f64) -> Result<f64> {
    if e.dim() != c.dim() {
        return Err(argument("domination_factor: dimension mismatch"));
    }
    if !(rho > 0.0) {
        return Err(argument(format!("regularization must be positive, got {rho}")));
    }
    let s = c.shifted(rho);
    let chol = match s.0.clone().cholesky() {
        Some(ch) => ch,
        None => {
            return Err(Error::Degenerate {
                what: "regularized covariance C + rho I",
                floor: psd_floor(&s),
            })
        }
    };
    let l = chol.l();
    // W = L^-1 E L^-T via two triangular solves
    let left = l
        .solve_lower_triangular(e.as_matrix())
        .ok_or(Error::Degenerate {
            what: "Cholesky factor",
            floor: 0.0,
        })?;
    let w = l
        .solve_lower_triangular(&left.transpose())
        .ok_or(Error::Degenerate {
            what: "Cholesky factor",
            floor: 0.0,
        })?;
    let w = CovMatrix::symmetrized(w);
    let top = SymmetricEigen::new(w.0).eigenvalues.max();
    Ok(top.max(1.0))
}

/// `max_{i,j} |c_ij| lambda^{-(d(i,j) min l)}`.
pub fn localization_status(
    c: &DMatrix<f64>,
    lambda: f64,
    l: usize,
    dom: &CyclicDomain,
) -> Result<f64> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(argument(format!("lambda must lie in (0,1), got {lambda}")));
    }
    if c.nrows() != dom.dim() || c.ncols() != dom.dim() {
        return Err(argument("localization_status: dimension mismatch"));
    }
    let weights: Vec<f64> = (0..=dom.max_distance())
        .map(|x| lambda.powi(-(x.min(l) as i32)))
        .collect();
    let d = dom.dim();
    let mut best = 0.0_f64;
    for j in 0..d {
        for i in 0..d {
            best = best.max(c[(i, j)].abs() * weights[dom.dist0(i, j)]);
        }
    }
    Ok(best)
}
