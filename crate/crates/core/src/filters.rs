//! Exact Kalman filter, perturbed-observation EnKF and the domain-localized
//! EnKF with multiplicative inflation, plus the exact conditional
//! error-covariance recursion used to track domination.

use nalgebra::{DMatrix, DVector};

use crate::domain::CyclicDomain;
use crate::error::{argument, Error, Result};
use crate::matrixkit::{cutoff_localize, domination_factor, CovMatrix};
use crate::model::LinearSystem;
use crate::rng::{Purpose, Streams};

#[derive(Debug, Clone)]
pub struct KalmanState {
    pub mean: DVector<f64>,
    pub cov: CovMatrix,
}

impl KalmanState {
    /// Prior `N(0, I)`, matching the signal initialization.
    pub fn standard(d: usize) -> Self {
        Self {
            mean: DVector::zeros(d),
            cov: CovMatrix::identity(d),
        }
    }
}

#[derive(Debug, Clone)]
pub struct KalmanStep {
    pub forecast_mean: DVector<f64>,
    pub forecast_cov: CovMatrix,
    pub gain: DMatrix<f64>,
    pub posterior: KalmanState,
}

fn check_obs_var(sys: &LinearSystem) -> Result<f64> {
    let v = sys.effective_obs_var();
    if v > 0.0 {
        Ok(v)
    } else {
        Err(argument("filters need a positive observation noise variance"))
    }
}

/// Solves `G S = B^T` for symmetric positive definite `S`, i.e. returns
/// `B^T S^-1`.
fn gain_from(b: &DMatrix<f64>, s: DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    let chol = match s.clone().cholesky() {
        Some(c) => c,
        None => {
            let floor = if s.iter().all(|x| x.is_finite()) {
                s.symmetric_eigenvalues().min()
            } else {
                f64::NAN
            };
            return Err(Error::Degenerate { what, floor });
        }
    };
    Ok(chol.solve(b).transpose())
}

/// `(I - G H) P (I - G H)^T + v G G^T` for any `d x q` gain `G`.
pub fn joseph_update(sys: &LinearSystem, p: &DMatrix<f64>, gain: &DMatrix<f64>, v: f64) -> CovMatrix {
    // (I - GH) P = P - G (H P)
    let left = p - gain * sys.select_rows(p);
    // M (I - GH)^T = M - (M H^T) G^T
    let m_ht = left.select_columns(sys.sites().iter());
    let mut out = left - m_ht * gain.transpose();
    out += gain * gain.transpose() * v;
    CovMatrix::symmetrized(out)
}

pub fn kalman_forecast(sys: &LinearSystem, st: &KalmanState) -> (DVector<f64>, CovMatrix) {
    let mean = sys.propagate_mean(&st.mean);
    let mut cov = sys.conjugate(st.cov.as_matrix());
    cov += sys.effective_noise_cov().as_matrix();
    (mean, CovMatrix::symmetrized(cov))
}

pub fn kalman_analysis(
    sys: &LinearSystem,
    mean: &DVector<f64>,
    cov: &CovMatrix,
    y: &DVector<f64>,
) -> Result<(KalmanState, DMatrix<f64>)> {
    let v = check_obs_var(sys)?;
    let b = sys.select_rows(cov.as_matrix());
    let mut s = b.select_columns(sys.sites().iter());
    for k in 0..s.nrows() {
        s[(k, k)] += v;
    }
    let gain = gain_from(&b, s, "Kalman innovation covariance")?;
    let innovation = y - sys.select(mean);
    let post_mean = mean + &gain * innovation;
    let post_cov = joseph_update(sys, cov.as_matrix(), &gain, v);
    Ok((
        KalmanState {
            mean: post_mean,
            cov: post_cov,
        },
        gain,
    ))
}

/// One forecast/analysis cycle of the exact Kalman filter.
pub fn kalman_step(sys: &LinearSystem, st: &KalmanState, y: &DVector<f64>) -> Result<KalmanStep> {
    let (forecast_mean, forecast_cov) = kalman_forecast(sys, st);
    let (posterior, gain) = kalman_analysis(sys, &forecast_mean, &forecast_cov, y)?;
    Ok(KalmanStep {
        forecast_mean,
        forecast_cov,
        gain,
        posterior,
    })
}

/// Ensemble mean and spreads, stored separately.
#[derive(Debug, Clone)]
pub struct EnsembleState {
    pub mean: DVector<f64>,
    /// `d x K`, one column per member.
    pub spreads: DMatrix<f64>,
    pub inflation: f64,
    /// Domain localization radius; `None` for the global EnKF.
    pub radius: Option<usize>,
}

impl EnsembleState {
    /// Splits explicit members into mean and spreads.
    pub fn from_members(members: &DMatrix<f64>, inflation: f64, radius: Option<usize>) -> Result<Self> {
        let k = members.ncols();
        if k < 2 {
            return Err(argument(format!("ensemble needs K >= 2 members, got {k}")));
        }
        if !(inflation >= 1.0) {
            return Err(argument(format!("inflation must be >= 1, got {inflation}")));
        }
        let mean = members.column_mean();
        let mut spreads = members.clone();
        for mut col in spreads.column_iter_mut() {
            col -= &mean;
        }
        Ok(Self {
            mean,
            spreads,
            inflation,
            radius,
        })
    }

    /// `K` i.i.d. `N(0, I)` members drawn from the ensemble-init streams.
    pub fn standard(
        d: usize,
        k: usize,
        streams: &Streams,
        inflation: f64,
        radius: Option<usize>,
    ) -> Result<Self> {
        let mut members = DMatrix::zeros(d, k);
        for m in 0..k {
            let draw = streams.stream(Purpose::EnsembleInit, 0, m as u64).normal_vector(d);
            members.set_column(m, &draw);
        }
        Self::from_members(&members, inflation, radius)
    }

    pub fn size(&self) -> usize {
        self.spreads.ncols()
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn members(&self) -> DMatrix<f64> {
        let mut m = self.spreads.clone();
        for mut col in m.column_iter_mut() {
            col += &self.mean;
        }
        m
    }

    /// `K^-1 sum_k dX_k dX_k^T`.
    pub fn covariance(&self) -> CovMatrix {
        spread_covariance(&self.spreads)
    }
}

pub fn spread_covariance(spreads: &DMatrix<f64>) -> CovMatrix {
    let k = spreads.ncols() as f64;
    CovMatrix::symmetrized(spreads * spreads.transpose() / k)
}

fn forecast_noise(sys: &LinearSystem, streams: &Streams, time: u64, k: usize) -> DMatrix<f64> {
    let mut xi = DMatrix::zeros(sys.dim(), k);
    for m in 0..k {
        let draw = sys.sample_system_noise(&mut streams.stream(Purpose::ForecastNoise, time, m as u64));
        xi.set_column(m, &draw);
    }
    xi
}

fn perturbations(sys: &LinearSystem, streams: &Streams, time: u64, k: usize) -> DMatrix<f64> {
    let mut zeta = DMatrix::zeros(sys.num_obs(), k);
    for m in 0..k {
        let draw = sys.sample_obs_noise(&mut streams.stream(Purpose::ObservationPerturbation, time, m as u64));
        zeta.set_column(m, &draw);
    }
    zeta
}

#[derive(Debug, Clone)]
pub struct EnkfStep {
    pub forecast_mean: DVector<f64>,
    pub forecast_spreads: DMatrix<f64>,
    pub gain: DMatrix<f64>,
    pub posterior: EnsembleState,
}

/// Perturbed-observation EnKF with the same forecast inflation placement as
/// the localized filter: the forecast spreads about the forecast mean are
/// scaled by `sqrt(r)`.
///
/// `time` addresses the sample-noise streams for this step.
pub fn enkf_step(
    sys: &LinearSystem,
    st: &EnsembleState,
    y: &DVector<f64>,
    streams: &Streams,
    time: u64,
) -> Result<EnkfStep> {
    let v = check_obs_var(sys)?;
    let k = st.size();
    if k < 2 {
        return Err(argument("EnKF needs K >= 2"));
    }
    let members = st.members();
    let mut forecast = sys.left_mul(&members) + forecast_noise(sys, streams, time, k);
    for mut col in forecast.column_iter_mut() {
        col += sys.drift();
    }
    let forecast_mean = forecast.column_mean();
    let mut spreads = forecast;
    for mut col in spreads.column_iter_mut() {
        col -= &forecast_mean;
    }
    spreads *= st.inflation.sqrt();

    let h_spreads = sys.select_rows(&spreads);
    let kf = k as f64;
    let b = &h_spreads * spreads.transpose() / kf; // H C
    let mut s = &h_spreads * h_spreads.transpose() / kf;
    for i in 0..s.nrows() {
        s[(i, i)] += v;
    }
    let gain = gain_from(&b, s, "EnKF innovation covariance")?;

    let zeta = perturbations(sys, streams, time, k);
    let mut members = spreads.clone();
    for (m, mut col) in members.column_iter_mut().enumerate() {
        col += &forecast_mean;
        let innov = y - sys.select(&col.clone_owned()) - zeta.column(m);
        col += &gain * innov;
    }
    let posterior = EnsembleState::from_members(&members, st.inflation, None)?;
    Ok(EnkfStep {
        forecast_mean,
        forecast_spreads: spreads,
        gain,
        posterior,
    })
}

/// Patched domain-localized gain, stored as a dense `d x q` matrix.
#[derive(Debug, Clone)]
pub struct LocalGain {
    pub gain: DMatrix<f64>,
    pub radius: usize,
}

impl LocalGain {
    /// `K H` as a `d x d` matrix.
    pub fn times_h(&self, sys: &LinearSystem) -> DMatrix<f64> {
        sys.scatter_gain(&self.gain)
    }
}

/// For each row `i`, the gain built from the covariance restricted to the
/// sites within distance `l` of `i`; row `i` of the result is row `i` of
/// that local gain.
///
/// Only observations inside the window enter each row's small solve; the
/// observations outside decouple as `sigma_o^2 I`.
pub fn local_gain(c: &CovMatrix, sys: &LinearSystem, l: usize) -> Result<LocalGain> {
    let v = check_obs_var(sys)?;
    let d = sys.dim();
    if c.dim() != d {
        return Err(argument("local_gain: covariance dimension mismatch"));
    }
    let dom = sys.domain();
    let mut site_slot = vec![None; d];
    for (k, &s) in sys.sites().iter().enumerate() {
        site_slot[s] = Some(k);
    }
    let mut gain = DMatrix::zeros(d, sys.num_obs());
    for i in 0..d {
        let local: Vec<(usize, usize)> = dom
            .window0(i, l)
            .into_iter()
            .filter_map(|j| site_slot[j].map(|k| (k, j)))
            .collect();
        if local.is_empty() {
            continue;
        }
        let m = local.len();
        let s = DMatrix::from_fn(m, m, |a, b| {
            c[(local[a].1, local[b].1)] + if a == b { v } else { 0.0 }
        });
        let rhs = DVector::from_fn(m, |a, _| c[(i, local[a].1)]);
        let chol = s.cholesky().ok_or(Error::Degenerate {
            what: "local innovation covariance",
            floor: f64::NAN,
        })?;
        let row = chol.solve(&rhs);
        for (a, &(k, _)) in local.iter().enumerate() {
            gain[(i, k)] = row[a];
        }
    }
    Ok(LocalGain { gain, radius: l })
}

/// Diagonal of `(I - K H) C (I - K H)^T + v K K^T` for a local gain,
/// evaluated row by row on each row's support.
pub fn posterior_variance_diagonal(c: &CovMatrix, sys: &LinearSystem, g: &LocalGain) -> DVector<f64> {
    let v = sys.effective_obs_var();
    let sites = sys.sites();
    DVector::from_fn(sys.dim(), |i, _| {
        // row i of (I - KH) as sparse (index, weight) pairs
        let mut row: Vec<(usize, f64)> = vec![(i, 1.0)];
        let mut kk = 0.0;
        for (k, &s) in sites.iter().enumerate() {
            let w = g.gain[(i, k)];
            if w != 0.0 {
                row.push((s, -w));
                kk += w * w;
            }
        }
        let mut quad = 0.0;
        for &(a, wa) in &row {
            for &(b, wb) in &row {
                quad += wa * wb * c[(a, b)];
            }
        }
        quad + v * kk
    })
}

#[derive(Debug, Clone)]
pub struct LenkfStep {
    pub forecast_mean: DVector<f64>,
    pub forecast_spreads: DMatrix<f64>,
    pub forecast_cov: CovMatrix,
    pub gain: LocalGain,
    pub posterior: EnsembleState,
}

/// Localized EnKF cycle.
///
/// The mean is forecast without noise or inflation; the spreads get fresh
/// system noise and `sqrt(r)` inflation. Mean and spreads are then analyzed
/// separately with the patched local gain, without removing ensemble-mean
/// noise terms.
pub fn lenkf_step(
    sys: &LinearSystem,
    st: &EnsembleState,
    y: &DVector<f64>,
    streams: &Streams,
    time: u64,
) -> Result<LenkfStep> {
    let l = st
        .radius
        .ok_or_else(|| argument("localized filter needs a localization radius"))?;
    let (forecast_mean, forecast_spreads) = lenkf_forecast(sys, st, streams, time)?;
    let forecast_cov = spread_covariance(&forecast_spreads);
    let gain = local_gain(&forecast_cov, sys, l)?;
    debug_assert!(
        variance_reduced(&forecast_cov, sys, &gain),
        "localized analysis increased a component variance"
    );
    let posterior = lenkf_analysis(sys, &forecast_mean, &forecast_spreads, &gain, y, streams, time, st)?;
    Ok(LenkfStep {
        forecast_mean,
        forecast_spreads,
        forecast_cov,
        gain,
        posterior,
    })
}

pub fn lenkf_forecast(
    sys: &LinearSystem,
    st: &EnsembleState,
    streams: &Streams,
    time: u64,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let k = st.size();
    if k < 2 {
        return Err(argument("LEnKF needs K >= 2"));
    }
    let mean = sys.propagate_mean(&st.mean);
    let spreads = (sys.left_mul(&st.spreads) + forecast_noise(sys, streams, time, k)) * st.inflation.sqrt();
    Ok((mean, spreads))
}

/// Analysis half of the localized cycle: the mean assimilates `y`, the
/// spreads assimilate perturbed observations drawn at `time`. Inflation and
/// radius are carried over from `prior`.
#[allow(clippy::too_many_arguments)]
pub fn lenkf_analysis(
    sys: &LinearSystem,
    forecast_mean: &DVector<f64>,
    forecast_spreads: &DMatrix<f64>,
    gain: &LocalGain,
    y: &DVector<f64>,
    streams: &Streams,
    time: u64,
    prior: &EnsembleState,
) -> Result<EnsembleState> {
    let k = forecast_spreads.ncols();
    let mean = forecast_mean + &gain.gain * (y - sys.select(forecast_mean));
    let zeta = perturbations(sys, streams, time, k);
    let spreads = forecast_spreads + &gain.gain * (zeta - sys.select_rows(forecast_spreads));
    Ok(EnsembleState {
        mean,
        spreads,
        inflation: prior.inflation,
        radius: prior.radius,
    })
}

/// Whether every component variance is lowered by the localized analysis.
pub fn variance_reduced(c: &CovMatrix, sys: &LinearSystem, g: &LocalGain) -> bool {
    let after = posterior_variance_diagonal(c, sys, g);
    (0..c.dim()).all(|i| after[i] <= c[(i, i)] * (1.0 + 1e-12) + 1e-300)
}

/// `A [(I - K H) E (I - K H)^T + v K K^T] A^T + eps Sigma`.
pub fn error_cov_step(sys: &LinearSystem, e: &CovMatrix, gain: &DMatrix<f64>) -> CovMatrix {
    let post = joseph_update(sys, e.as_matrix(), gain, sys.effective_obs_var());
    let mut next = sys.conjugate(post.as_matrix());
    next += sys.effective_noise_cov().as_matrix();
    CovMatrix::symmetrized(next)
}

/// Smallest `r >= 1` with `E <= r (C o D_cut^L + rho I)`.
pub fn domination_track(
    e: &CovMatrix,
    c: &CovMatrix,
    big_l: usize,
    rho: f64,
    dom: &CyclicDomain,
) -> Result<f64> {
    let masked = CovMatrix::symmetrized(cutoff_localize(c, dom, big_l));
    domination_factor(e, &masked, rho)
}

/// Exact conditional forecast-error covariance along a realized gain
/// sequence, with its domination factor against the localized ensemble
/// covariance.
#[derive(Debug, Clone)]
pub struct ErrorTracker {
    pub cov: CovMatrix,
    pub rho: f64,
    pub r_star: f64,
    pub big_l: usize,
}

impl ErrorTracker {
    /// Initial error covariance `m m^T + I` for a deterministic initial
    /// mean `m` and an independent `N(0, I)` signal.
    pub fn from_initial_mean(mean: &DVector<f64>, rho: f64, r_star: f64, big_l: usize) -> Self {
        let d = mean.len();
        let cov = CovMatrix::symmetrized(mean * mean.transpose() + DMatrix::identity(d, d));
        Self {
            cov,
            rho,
            r_star,
            big_l,
        }
    }

    pub fn advance(&mut self, sys: &LinearSystem, gain: &DMatrix<f64>) {
        self.cov = error_cov_step(sys, &self.cov, gain);
    }

    pub fn factor(&self, c: &CovMatrix, dom: &CyclicDomain) -> Result<f64> {
        domination_track(&self.cov, c, self.big_l, self.rho, dom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_turbulence, TurbulenceRegime};
    use approx::assert_abs_diff_eq;

    fn scalar_system(a: f64, s: f64, v: f64) -> LinearSystem {
        // d = 2 with one observed site; the second component is decoupled
        LinearSystem::new(
            DMatrix::from_diagonal(&DVector::from_vec(vec![a, 0.0])),
            DVector::zeros(2),
            CovMatrix::new(DMatrix::from_diagonal(&DVector::from_vec(vec![s, 0.0]))).unwrap(),
            &[1],
            v,
        )
        .unwrap()
    }

    #[test]
    fn kalman_scalar_riccati() {
        let (p, s, v) = (0.7, 0.3, 0.5);
        let sys = scalar_system(1.0, s, v);
        let st = KalmanState {
            mean: DVector::zeros(2),
            cov: CovMatrix::new(DMatrix::from_diagonal(&DVector::from_vec(vec![p, 0.0]))).unwrap(),
        };
        let out = kalman_step(&sys, &st, &DVector::from_vec(vec![1.0])).unwrap();
        assert_abs_diff_eq!(out.posterior.cov[(0, 0)], (p + s) * v / (p + s + v), epsilon = 1e-14);
        assert_abs_diff_eq!(out.posterior.mean[0], (p + s) / (p + s + v), epsilon = 1e-14);
    }

    #[test]
    fn kalman_without_uncertainty_follows_dynamics() {
        let d = 5;
        let a = DMatrix::from_fn(d, d, |i, j| if i == j { 0.5 } else if (i + 1) % d == j { 0.2 } else { 0.0 });
        let sys = LinearSystem::new(a.clone(), DVector::from_element(d, 1.0), CovMatrix::zeros(d), &[1, 3], 1.0)
            .unwrap();
        let st = KalmanState {
            mean: DVector::from_fn(d, |i, _| i as f64),
            cov: CovMatrix::zeros(d),
        };
        let out = kalman_step(&sys, &st, &DVector::from_vec(vec![100.0, -100.0])).unwrap();
        assert_eq!(out.gain, DMatrix::zeros(d, 2));
        let expect = &a * &st.mean + DVector::from_element(d, 1.0);
        assert!((out.posterior.mean - expect).abs().max() < 1e-14);
    }

    #[test]
    fn local_gain_zero_covariance() {
        let sys = build_turbulence(&TurbulenceRegime::regime1(20)).unwrap();
        let g = local_gain(&CovMatrix::zeros(20), &sys, 1).unwrap();
        assert_eq!(g.gain, DMatrix::zeros(20, sys.num_obs()));
    }

    #[test]
    fn local_gain_single_observation_window() {
        // site 2 (0-based 1) sees the observation at 0-based 0 with c = 0.5
        let sys = build_turbulence(&TurbulenceRegime::regime1(10)).unwrap();
        let mut c = DMatrix::identity(10, 10);
        c[(1, 0)] = 0.5;
        c[(0, 1)] = 0.5;
        let g = local_gain(&CovMatrix::new(c).unwrap(), &sys, 1).unwrap();
        let kh = g.times_h(&sys);
        assert_abs_diff_eq!(kh[(1, 0)], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(kh[(0, 0)], 0.5, epsilon = 1e-15);
        assert_eq!(sys.domain().bandwidth(&kh).unwrap(), 1);
    }

    #[test]
    fn enkf_zero_spread_follows_dynamics() {
        let d = 6;
        let a = DMatrix::from_fn(d, d, |i, j| if i == j { 0.9 } else { 0.0 });
        let sys = LinearSystem::new(a, DVector::zeros(d), CovMatrix::zeros(d), &[1, 4], 1.0).unwrap();
        let members = DMatrix::from_fn(d, 4, |i, _| i as f64);
        let st = EnsembleState::from_members(&members, 1.0, None).unwrap();
        let out = enkf_step(&sys, &st, &DVector::from_vec(vec![5.0, 5.0]), &Streams::new(1), 1).unwrap();
        assert_eq!(out.gain, DMatrix::zeros(d, 2));
        let expect = DVector::from_fn(d, |i, _| 0.9 * i as f64);
        assert!((out.posterior.mean - expect).abs().max() < 1e-14);
    }

    #[test]
    fn lenkf_still_system_only_rescales_spread() {
        let d = 8;
        let sys = LinearSystem::new(DMatrix::identity(d, d), DVector::zeros(d), CovMatrix::zeros(d), &[1, 5], 1.0)
            .unwrap();
        let st = EnsembleState {
            mean: DVector::from_element(d, 3.0),
            spreads: DMatrix::zeros(d, 4),
            inflation: 1.21,
            radius: Some(1),
        };
        let out = lenkf_step(&sys, &st, &DVector::from_vec(vec![0.0, 0.0]), &Streams::new(2), 1).unwrap();
        assert_eq!(out.posterior.mean, st.mean);
        assert_eq!(out.posterior.spreads, DMatrix::zeros(d, 4));
    }

    #[test]
    fn error_cov_step_open_loop() {
        let sys = build_turbulence(&TurbulenceRegime::regime2(7)).unwrap();
        let e = CovMatrix::new(DMatrix::from_fn(7, 7, |i, j| 1.0 / (1.0 + i.abs_diff(j) as f64))).unwrap();
        let zero = DMatrix::zeros(7, sys.num_obs());
        let next = error_cov_step(&sys, &e, &zero);
        let a = sys.dynamics();
        let expect = a * e.as_matrix() * a.transpose() + sys.effective_noise_cov().as_matrix();
        assert!((next.as_matrix() - expect).abs().max() < 1e-13);

        let still = LinearSystem::new(DMatrix::identity(7, 7), DVector::zeros(7), CovMatrix::zeros(7), &[2], 1.0)
            .unwrap();
        assert!((error_cov_step(&still, &e, &DMatrix::zeros(7, 1)).as_matrix() - e.as_matrix()).abs().max() < 1e-15);
    }

    #[test]
    fn domination_track_examples() {
        let dom = CyclicDomain::new(12).unwrap();
        let c = CovMatrix::new(DMatrix::from_fn(12, 12, |i, j| 0.5f64.powi(dom.dist0(i, j) as i32))).unwrap();
        let rho = 0.3;
        let reference = CovMatrix::symmetrized(cutoff_localize(&c, &dom, 4)).shifted(rho);
        assert_abs_diff_eq!(domination_track(&reference, &c, 4, rho, &dom).unwrap(), 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(
            domination_track(&reference.scaled(2.0), &c, 4, rho, &dom).unwrap(),
            2.0,
            epsilon = 1e-10
        );
    }

    #[test]
    fn joseph_matches_standard_form_at_optimal_gain() {
        let sys = build_turbulence(&TurbulenceRegime::regime1(10)).unwrap();
        let p = CovMatrix::new(DMatrix::from_fn(10, 10, |i, j| 0.6f64.powi(sys.domain().dist0(i, j) as i32))).unwrap();
        let (post, gain) = kalman_analysis(&sys, &DVector::zeros(10), &p, &DVector::zeros(2)).unwrap();
        let standard = p.as_matrix() - &gain * sys.select_rows(p.as_matrix());
        assert!((post.cov.as_matrix() - standard).abs().max() < 1e-13);
    }

    #[test]
    fn filters_reject_zero_observation_noise() {
        let d = 4;
        let sys = LinearSystem::new(DMatrix::identity(d, d), DVector::zeros(d), CovMatrix::identity(d), &[1], 0.0)
            .unwrap();
        assert!(local_gain(&CovMatrix::identity(d), &sys, 1).is_err());
        assert!(kalman_step(&sys, &KalmanState::standard(d), &DVector::zeros(1)).is_err());
    }

    #[test]
    fn ensemble_validation() {
        let one = DMatrix::zeros(3, 1);
        assert!(EnsembleState::from_members(&one, 1.0, None).is_err());
        assert!(EnsembleState::from_members(&DMatrix::zeros(3, 2), 0.9, None).is_err());
        let st = EnsembleState::standard(5, 10, &Streams::new(3), 1.1, Some(1)).unwrap();
        assert!(st.spreads.column_sum().abs().max() < 1e-12);
        assert!((st.members().column_mean() - &st.mean).abs().max() < 1e-12);
    }
}
