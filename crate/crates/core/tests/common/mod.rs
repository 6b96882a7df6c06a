#![allow(dead_code)]

use lenkf_core::filters::{local_gain, posterior_variance_diagonal, spread_covariance, lenkf_step};
use lenkf_core::matrixkit::{localization_status, max_abs, op_norm, row_sum_norm, sym_op_norm};
use lenkf_core::rng::NoiseStream;
use lenkf_core::theory::{inconsistency_bound, localization_inconsistency, riccati_localized, riccati_map};
use lenkf_core::{CovMatrix, CyclicDomain, EnsembleState, LinearSystem, LocalizationMask, Purpose, Streams, TheoryParams};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};

pub const CASES: u32 = 1000;

pub fn rng(seed: u64) -> NoiseStream {
    Streams::new(seed).stream(Purpose::Shifts, 0, 0)
}

/// Random matrix with entries `N(0, scale^2)` inside cyclic bandwidth `b`.
pub fn banded(dom: &CyclicDomain, b: usize, scale: f64, g: &mut NoiseStream) -> DMatrix<f64> {
    let d = dom.dim();
    DMatrix::from_fn(d, d, |i, j| if dom.dist0(i, j) <= b { g.normal() * scale } else { 0.0 })
}

/// PSD matrix: either a sample covariance of `k` Gaussian vectors or the
/// Gram matrix of a banded factor.
pub fn psd(dom: &CyclicDomain, g: &mut NoiseStream) -> CovMatrix {
    let d = dom.dim();
    if g.uniform() < 0.5 {
        let k = 2 + (g.uniform() * 14.0) as usize;
        spread_covariance(&(g.normal_matrix(d, k) * (0.2 + g.uniform())))
    } else {
        let w = (g.uniform() * 4.0) as usize;
        let b = banded(dom, w, 0.5, g);
        CovMatrix::new(&b * b.transpose()).unwrap()
    }
}

/// Strictly increasing 1-based sites, at least one and fewer than `d`.
pub fn sites(d: usize, g: &mut NoiseStream, p: f64) -> Vec<usize> {
    let mut s: Vec<usize> = (1..=d).filter(|_| g.uniform() < p).collect();
    if s.is_empty() {
        s.push(1 + (g.uniform() * d as f64) as usize % d);
    }
    if s.len() == d {
        s.pop();
    }
    s
}

pub fn system(d: usize, a_band: usize, g: &mut NoiseStream) -> LinearSystem {
    let dom = CyclicDomain::new(d).unwrap();
    let a = banded(&dom, a_band, 0.4, g);
    let noise = DMatrix::from_diagonal(&DVector::from_fn(d, |_, _| 0.05 + g.uniform()));
    let s = sites(d, g, 0.3);
    LinearSystem::new(a, DVector::zeros(d), CovMatrix::new(noise).unwrap(), &s, 0.2 + 2.0 * g.uniform()).unwrap()
}

pub fn run(name: &str, strategy: impl Strategy<Value = (u64, usize)>, check: impl Fn(u64, usize) -> Result<(), TestCaseError>) -> Result<(), String> {
    let mut runner = TestRunner::new(Config {
        cases: CASES,
        failure_persistence: None,
        ..Config::default()
    });
    runner
        .run(&strategy, |(seed, d)| check(seed, d))
        .map_err(|e| format!("{name}: {e}"))
}

pub fn seeds_dims(lo: usize, hi: usize) -> impl Strategy<Value = (u64, usize)> {
    (any::<u64>(), lo..=hi)
}

/// Operator norm bounded by max row sum (symmetric), entries bounded by
/// the operator norm, and `||D|| <= B_b ||D||_inf` at bandwidth `b`.
pub fn check_norm_inequalities(seed: u64, d: usize) -> Result<(), TestCaseError> {
    let mut g = rng(seed);
    let dom = CyclicDomain::new(d).unwrap();
    let b = (g.uniform() * (dom.max_distance() + 1) as f64) as usize;
    let m = banded(&dom, b, 1.0, &mut g);
    let sym = (&m + m.transpose()) * 0.5;
    let tol = 1e-12 * (1.0 + row_sum_norm(&m));
    prop_assert!(sym_op_norm(&sym) <= row_sum_norm(&sym) + tol);
    prop_assert!(max_abs(&m) <= op_norm(&m) + tol);
    let width = dom.bandwidth(&m).unwrap();
    prop_assert!(op_norm(&m) <= dom.volume_constant(width) as f64 * max_abs(&m) + tol);
    Ok(())
}

/// Every component variance drops through each localized analysis of a
/// short random trajectory.
pub fn check_variance_reduction(seed: u64, d: usize) -> Result<(), TestCaseError> {
    let mut g = rng(seed);
    let l = 1 + (g.uniform() * 2.0) as usize;
    let sys = system(d, l, &mut g);
    let k = 2 + (g.uniform() * 10.0) as usize;
    let streams = Streams::new(seed ^ 0x9e37);
    let mut st = EnsembleState::standard(d, k, &streams, 1.0 + g.uniform() * 0.3, Some(l)).unwrap();
    for n in 1..=3u64 {
        let y = g.normal_vector(sys.num_obs());
        let step = lenkf_step(&sys, &st, &y, &streams, n).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let c = &step.forecast_cov;
        let after = posterior_variance_diagonal(c, &sys, &step.gain);
        // dense Joseph form as an independent route
        let kh = sys.scatter_gain(&step.gain.gain);
        let p = DMatrix::identity(d, d) - &kh;
        let joseph = &p * c.as_matrix() * p.transpose()
            + &step.gain.gain * step.gain.gain.transpose() * sys.effective_obs_var();
        for i in 0..d {
            let tol = 1e-10 * (1.0 + c[(i, i)]);
            prop_assert!((after[i] - joseph[(i, i)]).abs() <= tol);
            prop_assert!(joseph[(i, i)] <= c[(i, i)] + tol, "component {} variance grew", i);
        }
        st = step.posterior;
    }
    Ok(())
}

fn band_profile(m: &DMatrix<f64>, dom: &CyclicDomain, tol: f64) -> Vec<bool> {
    let mut nz = vec![false; dom.max_distance() + 1];
    for i in 0..dom.dim() {
        for j in 0..dom.dim() {
            if m[(i, j)].abs() > tol {
                nz[dom.dist0(i, j)] = true;
            }
        }
    }
    nz
}

/// Localization inconsistency: support within `2 bw(A (I - K H))` of `L`,
/// which is `2l` when the propagator keeps bandwidth `l`; and the operator
/// norm bound at the measured localization status.
pub fn check_inconsistency(seed: u64, d: usize) -> Result<(), TestCaseError> {
    let mut g = rng(seed);
    let dom = CyclicDomain::new(d).unwrap();
    let l = 1 + (g.uniform() * 2.0) as usize;
    let big_l = 4 * l + (g.uniform() * 3.0) as usize;
    let variant = (g.uniform() * 3.0) as usize;
    // 0: diagonal dynamics with a localized gain, 1: banded dynamics with
    // no gain, 2: banded dynamics with a localized gain
    let a_band = if variant == 0 { 0 } else { l };
    let sys = system(d, a_band, &mut g);
    let c = psd(&dom, &mut g);
    let gain = if variant == 1 {
        DMatrix::zeros(d, sys.num_obs())
    } else {
        local_gain(&c, &sys, l).unwrap().gain
    };
    let delta = localization_inconsistency(&sys, &c, &gain, big_l, l).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let prop = sys.dynamics() * (DMatrix::identity(d, d) - sys.scatter_gain(&gain));
    let width = dom.bandwidth(&prop).unwrap();
    let scale = 1e-12 * (1.0 + max_abs(&riccati_map(&sys, &c, &gain)));
    let nz = band_profile(&delta, &dom, scale);
    for (x, &on) in nz.iter().enumerate() {
        if on {
            prop_assert!(x.abs_diff(big_l) <= 2 * width, "entry at distance {} with propagator bandwidth {}", x, width);
            if width <= l {
                prop_assert!(x.abs_diff(big_l) <= 2 * l);
            }
        }
    }
    let lambda = 0.2 + 0.75 * g.uniform();
    let m = localization_status(&c, lambda, big_l, &dom).unwrap();
    let mut params = TheoryParams::from_system(&sys, l, big_l, 1.0, lambda);
    params.lambda_a = lambda;
    let bound = inconsistency_bound(m, &params, lambda.powi((big_l - 2 * l) as i32), &dom);
    let norm = sym_op_norm(&delta);
    prop_assert!(norm <= bound * (1.0 + 1e-10) + scale, "norm {} above bound {}", norm, bound);
    Ok(())
}

/// The patched gain never reaches observations farther than `l`.
pub fn check_gain_bandwidth(seed: u64, d: usize) -> Result<(), TestCaseError> {
    let mut g = rng(seed);
    let dom = CyclicDomain::new(d).unwrap();
    let l = (g.uniform() * 4.0) as usize;
    let sys = system(d, 1, &mut g);
    let c = psd(&dom, &mut g);
    let kh = local_gain(&c, &sys, l).unwrap().times_h(&sys);
    prop_assert!(dom.bandwidth(&kh).unwrap() <= l);
    Ok(())
}

/// `R'(C) = R(C o D_cut^L)` with the mask applied by an independent Schur product.
pub fn check_riccati_identity(seed: u64, d: usize) -> Result<(), TestCaseError> {
    let mut g = rng(seed);
    let dom = CyclicDomain::new(d).unwrap();
    let sys = system(d, 1 + (g.uniform() * 2.0) as usize, &mut g);
    let c = psd(&dom, &mut g);
    let big_l = (g.uniform() * (dom.max_distance() + 1) as f64) as usize;
    let gain = g.normal_matrix(d, sys.num_obs()) * 0.3;
    let mask = LocalizationMask::cutoff(&dom, big_l);
    let masked = CovMatrix::new(c.as_matrix().component_mul(mask.entries())).unwrap();
    let lhs = riccati_localized(&sys, &c, &gain, big_l);
    let rhs = riccati_map(&sys, &masked, &gain);
    let tol = 1e-12 * (1.0 + max_abs(&rhs));
    prop_assert!(max_abs(&(lhs.as_matrix() - rhs.as_matrix())) <= tol);
    Ok(())
}

/// `M_0 = max_i C_ii <= M_1 <= ... <= M_k <= M_0 lambda^-k` for PSD `C`.
pub fn check_status_chain(seed: u64, d: usize) -> Result<(), TestCaseError> {
    let mut g = rng(seed);
    let dom = CyclicDomain::new(d).unwrap();
    let c = psd(&dom, &mut g);
    let lambda = 0.05 + 0.9 * g.uniform();
    let m0 = localization_status(&c, lambda, 0, &dom).unwrap();
    let diag = c.diagonal().max();
    prop_assert!((m0 - diag).abs() <= 1e-14 * (1.0 + diag));
    let mut prev = m0;
    for k in 1..=dom.max_distance() {
        let mk = localization_status(&c, lambda, k, &dom).unwrap();
        prop_assert!(mk >= prev);
        prop_assert!(mk <= m0 * lambda.powi(-(k as i32)) * (1.0 + 1e-12));
        prev = mk;
    }
    Ok(())
}

/// Per-entry Monte Carlo accumulator for a stream of matrices.
pub struct MomentAccumulator {
    n: usize,
    sum: DMatrix<f64>,
    sumsq: DMatrix<f64>,
}

impl MomentAccumulator {
    pub fn new(d: usize) -> Self {
        Self { n: 0, sum: DMatrix::zeros(d, d), sumsq: DMatrix::zeros(d, d) }
    }

    pub fn push(&mut self, m: &DMatrix<f64>) {
        self.n += 1;
        self.sum += m;
        self.sumsq += m.component_mul(m);
    }

    /// Largest `|mean - target| / stderr` over entries, and the largest
    /// absolute deviation.
    pub fn z_score(&self, target: &DMatrix<f64>) -> (f64, f64) {
        let n = self.n as f64;
        let mut worst_z: f64 = 0.0;
        let mut worst_abs: f64 = 0.0;
        for i in 0..target.nrows() {
            for j in 0..target.ncols() {
                let mean = self.sum[(i, j)] / n;
                let var = (self.sumsq[(i, j)] / n - mean * mean).max(0.0) * n / (n - 1.0);
                let se = (var / n).sqrt();
                let dev = (mean - target[(i, j)]).abs();
                worst_abs = worst_abs.max(dev);
                let z = if se > 0.0 { dev / se } else if dev <= 1e-12 { 0.0 } else { f64::INFINITY };
                worst_z = worst_z.max(z);
            }
        }
        (worst_z, worst_abs)
    }
}

pub fn regime1_system(d: usize) -> LinearSystem {
    lenkf_core::model::build_turbulence(&lenkf_core::TurbulenceRegime::regime1(d)).unwrap()
}

/// Conditional forecast covariance of the next localized cycle, averaged
/// over independent perturbation and forecast noise, against
/// `r R(C_n)` at the realized gain. Returns the worst entrywise z-score.
pub fn oracle_conditional_covariance(d: usize, k: usize, replicas: usize) -> f64 {
    let sys = regime1_system(d);
    let r = 1.1;
    let base = Streams::new(11);
    let mut st = EnsembleState::standard(d, k, &base, r, Some(1)).unwrap();
    let mut g = rng(12);
    // a few cycles to leave the initial ensemble behind
    let mut step = None;
    for n in 1..=5u64 {
        let y = g.normal_vector(sys.num_obs());
        let s = lenkf_step(&sys, &st, &y, &base, n).unwrap();
        if n < 5 {
            st = s.posterior.clone();
        }
        step = Some(s);
    }
    let step = step.unwrap();
    let target = riccati_map(&sys, &step.forecast_cov, &step.gain.gain).into_inner() * r;
    let y = g.normal_vector(sys.num_obs());
    let y_next = g.normal_vector(sys.num_obs());
    let mut acc = MomentAccumulator::new(d);
    for rep in 0..replicas as u64 {
        let streams = Streams::new(1_000_000 + rep);
        let post = lenkf_core::filters::lenkf_analysis(
            &sys, &step.forecast_mean, &step.forecast_spreads, &step.gain, &y, &streams, 5, &st,
        )
        .unwrap();
        let next = lenkf_step(&sys, &post, &y_next, &streams, 6).unwrap();
        acc.push(next.forecast_cov.as_matrix());
    }
    acc.z_score(&target).0
}

/// Forecast-error second moment of the localized filter's mean over
/// independent signals and observations, with the ensemble noise held
/// fixed, against the tracked error covariance. Returns the worst z-score
/// and the largest library-versus-oracle mean discrepancy.
pub fn oracle_error_covariance(d: usize, k: usize, horizon: u64, realizations: usize) -> (f64, f64) {
    let sys = regime1_system(d);
    let sample = Streams::new(21);
    let init = EnsembleState::standard(d, k, &sample, 1.1, Some(1)).unwrap();
    // the ensemble spreads, hence the gains, never see the observations
    let mut gains = Vec::new();
    let mut st = init.clone();
    for n in 1..=horizon {
        let s = lenkf_step(&sys, &st, &DVector::zeros(sys.num_obs()), &sample, n).unwrap();
        gains.push(s.gain.gain.clone());
        st = s.posterior;
    }
    let mut tracker = lenkf_core::ErrorTracker::from_initial_mean(&init.mean, 0.04, 1.05, 4);
    tracker.advance(&sys, &DMatrix::zeros(d, sys.num_obs()));
    for gain in &gains[..gains.len() - 1] {
        tracker.advance(&sys, gain);
    }
    let a = sys.dynamics().clone();
    let noise_sd = sys.effective_noise_cov().as_matrix().map_diagonal(f64::sqrt);
    let obs_sd = sys.effective_obs_var().sqrt();
    let mut acc = MomentAccumulator::new(d);
    let mut mean_gap: f64 = 0.0;
    for j in 0..realizations as u64 {
        let s = Streams::new(5_000_000 + j);
        let mut x = s.stream(Purpose::SignalInit, 0, 0).normal_vector(d);
        let mut m = init.mean.clone();
        let mut lib = init.clone();
        let check_library = j < 20;
        let mut err = DVector::zeros(d);
        for n in 1..=horizon {
            let mut gx = s.stream(Purpose::SystemNoise, n, 0);
            x = &a * &x + DVector::from_fn(d, |i, _| noise_sd[i] * gx.normal());
            m = &a * &m;
            err = &m - &x;
            let mut gy = s.stream(Purpose::ObservationNoise, n, 0);
            let y = DVector::from_fn(sys.num_obs(), |q, _| x[sys.sites()[q]] + obs_sd * gy.normal());
            if check_library {
                let out = lenkf_step(&sys, &lib, &y, &sample, n).unwrap();
                mean_gap = mean_gap.max((&out.forecast_mean - &m).amax());
                assert_same_gain(&out.gain.gain, &gains[n as usize - 1]);
                lib = out.posterior;
            }
            let innov = &y - DVector::from_fn(sys.num_obs(), |q, _| m[sys.sites()[q]]);
            m += &gains[n as usize - 1] * innov;
        }
        acc.push(&(&err * err.transpose()));
    }
    (acc.z_score(tracker.cov.as_matrix()).0, mean_gap)
}

fn assert_same_gain(a: &DMatrix<f64>, b: &DMatrix<f64>) {
    assert_eq!(a, b, "gain depends on the observations");
}

/// Row `i` of `C^i H^T (H C^i H^T + v I)^-1` by a full dense inverse, with
/// `C^i` the restriction of `C` to the sites within `l` of `i`.
pub fn dense_row_gain(c: &DMatrix<f64>, sites: &[usize], v: f64, l: usize) -> DMatrix<f64> {
    let d = c.nrows();
    let q = sites.len();
    let dist = |a: usize, b: usize| {
        let e = a.abs_diff(b);
        e.min(d - e)
    };
    let h = DMatrix::from_fn(q, d, |a, j| if sites[a] == j { 1.0 } else { 0.0 });
    let mut out = DMatrix::zeros(d, q);
    for i in 0..d {
        let ci = DMatrix::from_fn(d, d, |a, b| if dist(a, i) <= l && dist(b, i) <= l { c[(a, b)] } else { 0.0 });
        let s = &h * &ci * h.transpose() + DMatrix::identity(q, q) * v;
        let full = &ci * h.transpose() * s.try_inverse().expect("invertible innovation covariance");
        out.set_row(i, &full.row(i));
    }
    out
}

/// `local_gain` against [`dense_row_gain`], relative to the oracle's size.
pub fn check_local_gain_oracle(seed: u64, d: usize) -> Result<(), TestCaseError> {
    let mut g = rng(seed);
    let dom = CyclicDomain::new(d).unwrap();
    let l = (g.uniform() * 4.0) as usize;
    let sys = system(d, 1, &mut g);
    let c = psd(&dom, &mut g);
    let fast = local_gain(&c, &sys, l).unwrap().gain;
    let slow = dense_row_gain(c.as_matrix(), sys.sites(), sys.effective_obs_var(), l);
    let scale = max_abs(&slow).max(f64::MIN_POSITIVE);
    let rel = max_abs(&(&fast - &slow)) / scale;
    prop_assert!(rel <= 1e-12, "relative gap {}", rel);
    Ok(())
}
