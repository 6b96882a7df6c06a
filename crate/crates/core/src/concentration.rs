//! Monte Carlo harness for the concentration of shifted Gaussian sample
//! covariances `Z = K^-1 sum_k (a_k + z_k)(a_k + z_k)^T`, `z_k ~ N(0, S_z)`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::domain::CyclicDomain;
use crate::error::{argument, Result};
use crate::filters::{local_gain, spread_covariance};
use crate::matrixkit::{max_abs, sym_op_norm, CovMatrix, LocalizationMask};
use crate::model::LinearSystem;
use crate::rng::{Purpose, Streams};

#[derive(Debug, Clone)]
enum NoiseFactor {
    Zero,
    Identity,
    Dense(DMatrix<f64>),
}

/// Shifts, noise covariance and mask for one concentration experiment.
#[derive(Debug, Clone)]
pub struct ConcentrationInstance {
    /// `d x K`, column `k` is `a_k`.
    shifts: DMatrix<f64>,
    noise: CovMatrix,
    factor: NoiseFactor,
    mask: LocalizationMask,
    mean: DMatrix<f64>,
    sigma: f64,
    pub replicas: usize,
    pub t_grid: Vec<f64>,
}

impl ConcentrationInstance {
    pub fn new(
        shifts: DMatrix<f64>,
        noise: CovMatrix,
        mask: LocalizationMask,
        replicas: usize,
        t_grid: Vec<f64>,
    ) -> Result<Self> {
        let d = noise.dim();
        if shifts.nrows() != d || mask.dim() != d {
            return Err(argument("shift, noise and mask dimensions disagree"));
        }
        if shifts.ncols() == 0 {
            return Err(argument("need K >= 1 samples"));
        }
        if replicas == 0 {
            return Err(argument("need at least one replica"));
        }
        if t_grid.iter().any(|t| !(*t >= 0.0)) {
            return Err(argument("thresholds t must be nonnegative"));
        }
        let eig = noise.as_matrix().clone().symmetric_eigen();
        if eig.eigenvalues.min() < -crate::matrixkit::psd_tolerance(&noise) {
            return Err(argument("noise covariance is not PSD"));
        }
        let factor = if noise.as_matrix().iter().all(|&x| x == 0.0) {
            NoiseFactor::Zero
        } else if noise.as_matrix() == &DMatrix::identity(d, d) {
            NoiseFactor::Identity
        } else {
            let sqrt = eig.eigenvalues.map(|x| x.max(0.0).sqrt());
            let q = &eig.eigenvectors;
            NoiseFactor::Dense(q * DMatrix::from_diagonal(&sqrt) * q.transpose())
        };
        let sigma_a = spread_covariance(&shifts);
        let mean = sigma_a.as_matrix() + noise.as_matrix();
        let sigma = sigma_az(&sigma_a, &noise);
        Ok(Self {
            shifts,
            noise,
            factor,
            mask,
            mean,
            sigma,
            replicas,
            t_grid,
        })
    }

    /// `a_k = 0`, `S_z = I`, cutoff mask of radius `big_l`.
    pub fn standard(d: usize, k: usize, big_l: usize, replicas: usize, t_grid: Vec<f64>) -> Result<Self> {
        let dom = CyclicDomain::new(d)?;
        Self::new(
            DMatrix::zeros(d, k),
            CovMatrix::identity(d),
            LocalizationMask::cutoff(&dom, big_l),
            replicas,
            t_grid,
        )
    }

    /// I.i.d. `N(0, shift_var I)` shifts drawn once from the shift streams,
    /// with `S_z = noise_var I`.
    #[allow(clippy::too_many_arguments)]
    pub fn synthetic(
        d: usize,
        k: usize,
        shift_var: f64,
        noise_var: f64,
        big_l: usize,
        replicas: usize,
        t_grid: Vec<f64>,
        streams: &Streams,
    ) -> Result<Self> {
        let dom = CyclicDomain::new(d)?;
        let mut shifts = DMatrix::zeros(d, k);
        for m in 0..k {
            let draw = streams.stream(Purpose::Shifts, 0, m as u64).normal_vector(d) * shift_var.sqrt();
            shifts.set_column(m, &draw);
        }
        Self::new(
            shifts,
            CovMatrix::scaled_identity(d, noise_var),
            LocalizationMask::cutoff(&dom, big_l),
            replicas,
            t_grid,
        )
    }

    /// The forecast of a frozen localized-filter state: `a_k = sqrt(r) A (I - K H) dX_k`
    /// and `S_z = r (sigma_o^2 A K K^T A^T + Sigma)`, so `E Z = r R(C)`.
    pub fn lenkf_frozen(
        sys: &LinearSystem,
        spreads: &DMatrix<f64>,
        r: f64,
        l: usize,
        big_l: usize,
        replicas: usize,
        t_grid: Vec<f64>,
    ) -> Result<Self> {
        let c = spread_covariance(spreads);
        let gain = local_gain(&c, sys, l)?.gain;
        let innovation = spreads - &gain * sys.select_rows(spreads);
        let shifts = sys.left_mul(&innovation) * r.sqrt();
        let ak = sys.left_mul(&gain);
        let noise = (&ak * ak.transpose() * sys.effective_obs_var() + sys.effective_noise_cov().as_matrix()) * r;
        Self::new(
            shifts,
            CovMatrix::symmetrized(noise),
            LocalizationMask::cutoff(sys.domain(), big_l),
            replicas,
            t_grid,
        )
    }

    pub fn dim(&self) -> usize {
        self.noise.dim()
    }

    pub fn samples(&self) -> usize {
        self.shifts.ncols()
    }

    pub fn shifts(&self) -> &DMatrix<f64> {
        &self.shifts
    }

    pub fn noise(&self) -> &CovMatrix {
        &self.noise
    }

    pub fn mask(&self) -> &LocalizationMask {
        &self.mask
    }

    /// `E Z = S_a + S_z`.
    pub fn expected(&self) -> &DMatrix<f64> {
        &self.mean
    }

    pub fn sigma_az(&self) -> f64 {
        self.sigma
    }

    /// Threshold at level `t` for a deviation norm.
    pub fn threshold(&self, mode: TailMode, t: f64) -> f64 {
        match mode {
            TailMode::Entrywise => self.sigma * t,
            TailMode::MaskedNorm | TailMode::FullNorm => self.mask.row_sum_norm() * self.sigma * t,
        }
    }
}

/// `max_{i,j} { [S_z]_ii, [S_a]_ii^1/2 [S_z]_jj^1/2 }`.
pub fn sigma_az(sigma_a: &CovMatrix, sigma_z: &CovMatrix) -> f64 {
    let za = sigma_z.diagonal().max();
    let aa = sigma_a.diagonal().max().max(0.0).sqrt();
    let zz = sigma_z.diagonal().max().max(0.0).sqrt();
    za.max(aa * zz)
}

/// One realization of `Z`, drawn from the given replica stream.
pub fn sample_z(inst: &ConcentrationInstance, streams: &Streams, replica: u64) -> CovMatrix {
    let (d, k) = (inst.dim(), inst.samples());
    let mut w = inst.shifts.clone();
    match &inst.factor {
        NoiseFactor::Zero => {}
        NoiseFactor::Identity => {
            let g = streams.stream(Purpose::Concentration, k as u64, replica).normal_matrix(d, k);
            w += g;
        }
        NoiseFactor::Dense(f) => {
            let g = streams.stream(Purpose::Concentration, k as u64, replica).normal_matrix(d, k);
            w += f * g;
        }
    }
    CovMatrix::symmetrized(&w * w.transpose() / k as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TailMode {
    /// `||(Z - E Z) o D_L||` against `||D_L||_1 sigma t`.
    MaskedNorm,
    /// `max |Z - E Z|` against `sigma t`.
    Entrywise,
    /// `||Z - E Z||` against the masked threshold `||D_L||_1 sigma t`.
    FullNorm,
}

impl TailMode {
    pub fn name(self) -> &'static str {
        match self {
            TailMode::MaskedNorm => "masked-norm",
            TailMode::Entrywise => "entrywise",
            TailMode::FullNorm => "full-norm",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "masked-norm" | "masked" => Ok(TailMode::MaskedNorm),
            "entrywise" => Ok(TailMode::Entrywise),
            "full-norm" | "full" => Ok(TailMode::FullNorm),
            other => Err(argument(format!("unknown tail mode {other:?}"))),
        }
    }
}

fn deviation(dev: &DMatrix<f64>, inst: &ConcentrationInstance, mode: TailMode) -> f64 {
    match mode {
        TailMode::Entrywise => max_abs(dev),
        TailMode::FullNorm => sym_op_norm(dev),
        TailMode::MaskedNorm => sym_op_norm(&dev.component_mul(inst.mask.entries())),
    }
}

/// Deviation norms of every replica under every requested mode, computed on
/// shared realizations. Row `i` of the result belongs to `modes[i]`.
pub fn deviations(inst: &ConcentrationInstance, modes: &[TailMode], streams: &Streams) -> Vec<Vec<f64>> {
    let per_replica: Vec<Vec<f64>> = (0..inst.replicas as u64)
        .into_par_iter()
        .map(|rep| {
            let z = sample_z(inst, streams, rep);
            let dev = z.as_matrix() - &inst.mean;
            modes.iter().map(|&m| deviation(&dev, inst, m)).collect()
        })
        .collect();
    (0..modes.len())
        .map(|i| per_replica.iter().map(|row| row[i]).collect())
        .collect()
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TailPoint {
    pub t: f64,
    pub threshold: f64,
    pub tail: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TailCurve {
    pub mode: TailMode,
    pub d: usize,
    pub k: usize,
    pub replicas: usize,
    pub points: Vec<TailPoint>,
}

impl TailCurve {
    /// Tail estimate at the grid point closest to `t`.
    pub fn at(&self, t: f64) -> Option<f64> {
        self.points
            .iter()
            .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
            .map(|p| p.tail)
    }
}

/// Empirical tail probabilities from precomputed deviations.
pub fn tail_from_deviations(inst: &ConcentrationInstance, mode: TailMode, devs: &[f64]) -> TailCurve {
    let n = devs.len() as f64;
    let points = inst
        .t_grid
        .iter()
        .map(|&t| {
            let threshold = inst.threshold(mode, t);
            let hits = devs.iter().filter(|&&x| x >= threshold).count();
            TailPoint {
                t,
                threshold,
                tail: hits as f64 / n,
            }
        })
        .collect();
    TailCurve {
        mode,
        d: inst.dim(),
        k: inst.samples(),
        replicas: devs.len(),
        points,
    }
}

/// Fraction of replicas whose deviation reaches the threshold, per `t`.
pub fn tail_curve(inst: &ConcentrationInstance, mode: TailMode, streams: &Streams) -> TailCurve {
    let devs = deviations(inst, &[mode], streams).remove(0);
    tail_from_deviations(inst, mode, &devs)
}

pub const CSV_HEADER: &str = "mode,d,K,t,threshold,tail_estimate,replicas";

/// CSV rows (without header) for a set of curves.
pub fn curves_to_csv(curves: &[TailCurve]) -> String {
    let mut out = String::new();
    for c in curves {
        for p in &c.points {
            out.push_str(&format!(
                "{},{},{},{},{:.9e},{:.9e},{}\n",
                c.mode.name(),
                c.d,
                c.k,
                p.t,
                p.threshold,
                p.tail,
                c.replicas
            ));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct DecayFit {
    /// Slope of `ln tail` against `K`.
    pub slope: f64,
    pub stderr: f64,
    pub intercept: f64,
    /// Implied `c min{t, t^2}`, i.e. `-slope`.
    pub rate: f64,
    pub points_used: usize,
}

#[derive(Debug, Clone, Copy, Serialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum DecayReport {
    Fitted(DecayFit),
    BelowResolution,
}

/// Weighted least-squares fit of `ln p(K)` against `K` from `(K, tail,
/// replicas)` triples, with weights from the binomial delta method
/// `var(ln p) ~ (1 - p) / (N p)`. Zero tails carry no information and are
/// dropped.
pub fn decay_fit(points: &[(usize, f64, usize)]) -> Result<DecayReport> {
    if points.len() < 3 {
        return Err(argument("decay fit needs at least three sample sizes"));
    }
    let used: Vec<(f64, f64, f64)> = points
        .iter()
        // empty and saturated tails carry no slope information
        .filter(|p| p.1 > 0.0 && p.1 < 1.0)
        .map(|&(k, p, n)| {
            let n = n.max(1) as f64;
            let var = (1.0 - p) / (n * p);
            (k as f64, p.ln(), 1.0 / var)
        })
        .collect();
    if used.len() < 2 {
        return Ok(DecayReport::BelowResolution);
    }
    let sw: f64 = used.iter().map(|p| p.2).sum();
    let mx = used.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
    let my = used.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
    let sxx: f64 = used.iter().map(|p| p.2 * (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Ok(DecayReport::BelowResolution);
    }
    let sxy: f64 = used.iter().map(|p| p.2 * (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    // the weights are inverse variances, so 1/sxx is the slope variance
    let stderr = (1.0 / sxx).sqrt();
    Ok(DecayReport::Fitted(DecayFit {
        slope,
        stderr,
        intercept,
        rate: -slope,
        points_used: used.len(),
    }))
}

/// Smallest `K` on `k_grid` whose tail at `t` is at most `level`.
pub fn required_sample_size(curves: &[TailCurve], t: f64, level: f64) -> Option<usize> {
    let mut sorted: Vec<&TailCurve> = curves.iter().collect();
    sorted.sort_by_key(|c| c.k);
    sorted
        .into_iter()
        .find(|c| c.at(t).is_some_and(|p| p <= level))
        .map(|c| c.k)
}
