//! Linear signal-observation systems and the discretized stochastic
//! advection-diffusion model.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::domain::CyclicDomain;
use crate::error::{argument, Result};
use crate::matrixkit::{psd_floor, psd_tolerance, CovMatrix};
use crate::rng::NoiseStream;

#[derive(Debug, Clone)]
enum NoiseFactor {
    Diagonal(DVector<f64>),
    Dense(DMatrix<f64>),
}

/// `X' = A X + b + xi`, `Y = H X' + zeta`, with `xi ~ N(0, eps Sigma)` and
/// `zeta ~ N(0, eps sigma_o^2 I_q)`.
///
/// `H` is never stored: observing selects the components at `sites`.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    dom: CyclicDomain,
    dynamics: DMatrix<f64>,
    rows: Vec<Vec<(usize, f64)>>,
    drift: DVector<f64>,
    noise_cov: CovMatrix,
    noise_factor: NoiseFactor,
    sites: Vec<usize>,
    obs_var: f64,
    eps: f64,
}

impl LinearSystem {
    /// Builds a system. `sites` are 1-based, strictly increasing and fewer
    /// than `d`.
    ///
    /// `obs_var = 0` is accepted so that noise-free observation can be
    /// exercised, but every filter rejects it.
    pub fn new(
        dynamics: DMatrix<f64>,
        drift: DVector<f64>,
        noise_cov: CovMatrix,
        sites: &[usize],
        obs_var: f64,
    ) -> Result<Self> {
        let d = dynamics.nrows();
        if dynamics.ncols() != d || drift.len() != d || noise_cov.dim() != d {
            return Err(argument("system matrices and drift must share dimension d"));
        }
        let dom = CyclicDomain::new(d)?;
        if dynamics.iter().chain(drift.iter()).any(|x| !x.is_finite()) {
            return Err(argument("dynamics and drift must be finite"));
        }
        if sites.is_empty() || sites.len() >= d {
            return Err(argument(format!(
                "need 1 <= q < d observation sites, got q = {} with d = {d}",
                sites.len()
            )));
        }
        if sites.iter().any(|&s| s == 0 || s > d) || sites.windows(2).any(|w| w[0] >= w[1]) {
            return Err(argument("observation sites must be strictly increasing within 1..=d"));
        }
        if !(obs_var >= 0.0) || !obs_var.is_finite() {
            return Err(argument(format!("observation variance must be >= 0, got {obs_var}")));
        }
        let noise_factor = psd_sqrt(&noise_cov)?;
        let rows = sparse_rows(&dynamics);
        Ok(Self {
            dom,
            dynamics,
            rows,
            drift,
            noise_cov,
            noise_factor,
            sites: sites.iter().map(|s| s - 1).collect(),
            obs_var,
            eps: 1.0,
        })
    }

    /// The same system with both noise variances multiplied by `eps`.
    pub fn with_epsilon(mut self, eps: f64) -> Result<Self> {
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(argument(format!("noise scale must be positive, got {eps}")));
        }
        self.eps = eps;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dom.dim()
    }

    pub fn domain(&self) -> &CyclicDomain {
        &self.dom
    }

    pub fn dynamics(&self) -> &DMatrix<f64> {
        &self.dynamics
    }

    pub fn drift(&self) -> &DVector<f64> {
        &self.drift
    }

    /// Unscaled system noise covariance `Sigma`.
    pub fn noise_cov(&self) -> &CovMatrix {
        &self.noise_cov
    }

    /// `eps Sigma`.
    pub fn effective_noise_cov(&self) -> CovMatrix {
        self.noise_cov.scaled(self.eps)
    }

    /// Unscaled observation noise variance.
    pub fn obs_var(&self) -> f64 {
        self.obs_var
    }

    /// `eps sigma_o^2`.
    pub fn effective_obs_var(&self) -> f64 {
        self.eps * self.obs_var
    }

    pub fn epsilon(&self) -> f64 {
        self.eps
    }

    /// 0-based observation sites.
    pub fn sites(&self) -> &[usize] {
        &self.sites
    }

    pub fn sites_one_based(&self) -> Vec<usize> {
        self.sites.iter().map(|s| s + 1).collect()
    }

    pub fn num_obs(&self) -> usize {
        self.sites.len()
    }

    /// `A x + b`.
    pub fn propagate_mean(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = self.apply(x);
        out += &self.drift;
        out
    }

    /// `A x`.
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.dim(), |i, _| {
            self.rows[i].iter().map(|&(k, a)| a * x[k]).sum()
        })
    }

    /// `A M`, exploiting the sparsity of `A`.
    pub fn left_mul(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let d = self.dim();
        let mut out = DMatrix::zeros(d, m.ncols());
        for (i, row) in self.rows.iter().enumerate() {
            for &(k, a) in row {
                for j in 0..m.ncols() {
                    out[(i, j)] += a * m[(k, j)];
                }
            }
        }
        out
    }

    /// `A M A^T`.
    pub fn conjugate(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        self.left_mul(&self.left_mul(m).transpose()).transpose()
    }

    /// `H x`.
    pub fn select(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.num_obs(), self.sites.iter().map(|&s| x[s]))
    }

    /// `H M` for a matrix: the rows of `M` at the observation sites.
    pub fn select_rows(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        m.select_rows(self.sites.iter())
    }

    /// `G H` for a `d x q` gain: columns of `G` scattered to their sites.
    pub fn scatter_gain(&self, gain: &DMatrix<f64>) -> DMatrix<f64> {
        let d = self.dim();
        let mut out = DMatrix::zeros(gain.nrows(), d);
        for (k, &s) in self.sites.iter().enumerate() {
            out.set_column(s, &gain.column(k));
        }
        out
    }

    /// A draw from `N(0, eps Sigma)`.
    pub fn sample_system_noise(&self, rng: &mut NoiseStream) -> DVector<f64> {
        let z = rng.normal_vector(self.dim());
        let scale = self.eps.sqrt();
        match &self.noise_factor {
            NoiseFactor::Diagonal(s) => z.component_mul(s) * scale,
            NoiseFactor::Dense(f) => f * z * scale,
        }
    }

    /// A draw from `N(0, eps sigma_o^2 I_q)`.
    pub fn sample_obs_noise(&self, rng: &mut NoiseStream) -> DVector<f64> {
        rng.normal_vector(self.num_obs()) * self.effective_obs_var().sqrt()
    }

    /// True iff every pair of distinct sites is more than `2l` apart.
    pub fn sparse_observation_check(&self, l: usize) -> bool {
        let s = &self.sites;
        s.iter().enumerate().all(|(a, &i)| {
            s[a + 1..].iter().all(|&j| self.dom.dist0(i, j) > 2 * l)
        })
    }
}

/// One step of the signal: `A x + b + xi`.
pub fn step_signal(sys: &LinearSystem, x: &DVector<f64>, rng: &mut NoiseStream) -> DVector<f64> {
    sys.propagate_mean(x) + sys.sample_system_noise(rng)
}

/// Noisy observation `H x + zeta`.
pub fn observe(sys: &LinearSystem, x: &DVector<f64>, rng: &mut NoiseStream) -> DVector<f64> {
    sys.select(x) + sys.sample_obs_noise(rng)
}

fn sparse_rows(a: &DMatrix<f64>) -> Vec<Vec<(usize, f64)>> {
    (0..a.nrows())
        .map(|i| {
            (0..a.ncols())
                .filter(|&k| a[(i, k)] != 0.0)
                .map(|k| (k, a[(i, k)]))
                .collect()
        })
        .collect()
}

fn psd_sqrt(sigma: &CovMatrix) -> Result<NoiseFactor> {
    let d = sigma.dim();
    let diagonal = (0..d).all(|j| (0..d).all(|i| i == j || sigma[(i, j)] == 0.0));
    if diagonal {
        if sigma.diagonal().iter().any(|&v| v < 0.0) {
            return Err(argument("system noise covariance has a negative variance"));
        }
        return Ok(NoiseFactor::Diagonal(sigma.diagonal().map(f64::sqrt)));
    }
    if psd_floor(sigma) < -psd_tolerance(sigma) {
        return Err(argument("system noise covariance is not positive semidefinite"));
    }
    let eig = sigma.as_matrix().clone().symmetric_eigen();
    let root = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    let f = &eig.eigenvectors * DMatrix::from_diagonal(&root) * eig.eigenvectors.transpose();
    Ok(NoiseFactor::Dense(f))
}

/// Parameters of the finite-difference advection-diffusion model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TurbulenceRegime {
    pub h: f64,
    pub dt: f64,
    /// One observation every `p` sites, starting at site 1.
    pub p: usize,
    pub nu: f64,
    pub c: f64,
    pub mu: f64,
    pub sigma_x: f64,
    pub sigma_o: f64,
    pub d: usize,
}

impl TurbulenceRegime {
    /// Strong uniform damping, weak advection.
    pub fn regime1(d: usize) -> Self {
        Self {
            h: 1.0,
            dt: 0.1,
            p: 5,
            nu: 5.0,
            c: 0.1,
            mu: 0.1,
            sigma_x: 1.0,
            sigma_o: 1.0,
            d,
        }
    }

    /// Strong advection, weak damping.
    pub fn regime2(d: usize) -> Self {
        Self {
            h: 0.2,
            dt: 0.1,
            p: 5,
            nu: 0.1,
            c: 2.0,
            mu: 0.1,
            sigma_x: 1.0,
            sigma_o: 1.0,
            d,
        }
    }

    /// `"regime1"` or `"regime2"`.
    pub fn by_name(name: &str, d: usize) -> Result<Self> {
        match name {
            "regime1" => Ok(Self::regime1(d)),
            "regime2" => Ok(Self::regime2(d)),
            other => Err(argument(format!("unknown regime {other:?}"))),
        }
    }

    /// `(a_-, a_0, a_+)`.
    pub fn coefficients(&self) -> (f64, f64, f64) {
        let diffusion = self.mu * self.dt / (self.h * self.h);
        let advection = self.c * self.dt / (2.0 * self.h);
        (
            diffusion - advection,
            1.0 - 2.0 * diffusion - self.nu * self.dt,
            diffusion + advection,
        )
    }

    /// Per-step system noise variance `sigma_x^2 dt`.
    pub fn noise_var(&self) -> f64 {
        self.sigma_x * self.sigma_x * self.dt
    }

    /// 1-based sites `1, p+1, 2p+1, ...`.
    pub fn sites(&self) -> Vec<usize> {
        (1..=self.d).step_by(self.p.max(1)).collect()
    }
}

/// The cyclic tridiagonal system for `reg`.
pub fn build_turbulence(reg: &TurbulenceRegime) -> Result<LinearSystem> {
    let d = reg.d;
    if d < 3 {
        return Err(argument(format!("turbulence model needs d >= 3, got {d}")));
    }
    if !(reg.h > 0.0 && reg.dt > 0.0) {
        return Err(argument("grid size and time step must be positive"));
    }
    if reg.p < 2 {
        return Err(argument("observation spacing p must be at least 2"));
    }
    let (am, a0, ap) = reg.coefficients();
    let mut a = DMatrix::zeros(d, d);
    for i in 0..d {
        a[(i, (i + d - 1) % d)] += am;
        a[(i, i)] += a0;
        a[(i, (i + 1) % d)] += ap;
    }
    LinearSystem::new(
        a,
        DVector::zeros(d),
        CovMatrix::scaled_identity(d, reg.noise_var()),
        &reg.sites(),
        reg.sigma_o * reg.sigma_o,
    )
}
