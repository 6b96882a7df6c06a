//! Closed-form objects from the stability analysis of the localized filter:
//! Riccati maps, the localization inconsistency and its bound, the
//! weak-interaction coefficient, the `psi` map and its fixed points, the
//! sample-size formulas, and condition reports.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::domain::CyclicDomain;
use crate::error::{argument, Result};
use crate::matrixkit::{cutoff_localize, op_norm, sym_op_norm, CovMatrix};
use crate::model::LinearSystem;

/// Constants entering the stability theorems.
#[derive(Debug, Clone, Serialize)]
pub struct TheoryParams {
    /// Bound on `||A||`.
    pub m_a: f64,
    /// Lower and upper eigenvalue bounds of the system noise covariance.
    pub m_sigma: f64,
    pub big_m_sigma: f64,
    pub lambda_a: f64,
    /// Inflation `r`.
    pub r: f64,
    pub obs_var: f64,
    /// Diagonal system noise variance.
    pub noise_var: f64,
    pub delta: f64,
    pub delta_star: f64,
    pub rho: f64,
    pub r_star: f64,
    /// Analysis localization radius `L`.
    pub big_l: usize,
    /// Gain localization radius `l`.
    pub l: usize,
    /// Absolute constant of the concentration bound.
    pub c_abs: f64,
    /// Largest `M` scanned by [`find_psi_fixed_point`].
    pub psi_cap: f64,
}

impl TheoryParams {
    /// Reads `M_A`, the noise bounds and the variances off `sys`.
    ///
    /// `lambda_a` falls back to `lambda_fallback` when the dynamics admit no
    /// weak-interaction coefficient below one.
    pub fn from_system(sys: &LinearSystem, l: usize, big_l: usize, r: f64, lambda_fallback: f64) -> Self {
        let sigma = sys.effective_noise_cov();
        let eig = sigma.as_matrix().clone().symmetric_eigenvalues();
        let lambda_a = weak_interaction_lambda(sys.dynamics(), sys.domain()).unwrap_or(lambda_fallback);
        Self {
            m_a: op_norm(sys.dynamics()),
            m_sigma: eig.min(),
            big_m_sigma: eig.max(),
            lambda_a,
            r,
            obs_var: sys.effective_obs_var(),
            noise_var: sigma.diagonal().max(),
            delta: 0.5,
            delta_star: 0.128,
            rho: 0.04,
            r_star: 1.05,
            big_l,
            l,
            c_abs: 1.0,
            psi_cap: 1e3,
        }
    }
}

/// `A (I - K H) C (I - K H)^T A^T + sigma_o^2 A K K^T A^T + Sigma`, evaluated
/// through explicit dense products.
pub fn riccati_map(sys: &LinearSystem, c: &CovMatrix, gain: &DMatrix<f64>) -> CovMatrix {
    let d = sys.dim();
    let a = sys.dynamics();
    let kh = sys.scatter_gain(gain);
    let propagator = a * (DMatrix::identity(d, d) - kh);
    let ak = a * gain;
    let out = &propagator * c.as_matrix() * propagator.transpose()
        + &ak * ak.transpose() * sys.effective_obs_var()
        + sys.effective_noise_cov().as_matrix();
    CovMatrix::symmetrized(out)
}

/// [`riccati_map`] applied to `C o D_cut^L`.
pub fn riccati_localized(sys: &LinearSystem, c: &CovMatrix, gain: &DMatrix<f64>, big_l: usize) -> CovMatrix {
    let masked = CovMatrix::symmetrized(cutoff_localize(c, sys.domain(), big_l));
    riccati_map(sys, &masked, gain)
}

/// `R'(C) - R(C) o D_cut^L`: the error from masking before rather than
/// after the Riccati update.
///
/// Requires `A`, `Sigma` and `K H` to have bandwidth at most `l`, and
/// `L >= 4l`.
pub fn localization_inconsistency(
    sys: &LinearSystem,
    c: &CovMatrix,
    gain: &DMatrix<f64>,
    big_l: usize,
    l: usize,
) -> Result<CovMatrix> {
    let dom = sys.domain();
    if big_l < 4 * l {
        return Err(argument(format!("need L >= 4l, got L = {big_l}, l = {l}")));
    }
    let checks = [
        ("dynamics", dom.bandwidth(sys.dynamics())?),
        ("system noise", dom.bandwidth(sys.noise_cov())?),
        ("gain", dom.bandwidth(&sys.scatter_gain(gain))?),
    ];
    for (what, width) in checks {
        if width > l {
            return Err(argument(format!("{what} bandwidth {width} exceeds l = {l}")));
        }
    }
    let consistent = riccati_localized(sys, c, gain, big_l);
    let masked_after = cutoff_localize(&riccati_map(sys, c, gain), dom, big_l);
    Ok(CovMatrix::symmetrized(consistent.as_matrix() - masked_after))
}

/// `M M_A^2 (1 + sigma_o^-2 B_l M)^2 B_l^2 B_{L,l} Phi(L - 2l)`.
pub fn inconsistency_bound(m: f64, params: &TheoryParams, phi_at: f64, dom: &CyclicDomain) -> f64 {
    let b_l = dom.volume_constant(params.l) as f64;
    let b_big = dom.boundary_volume_constant(params.big_l, params.l) as f64;
    let gain_factor = 1.0 + b_l * m / params.obs_var;
    m * params.m_a.powi(2) * gain_factor.powi(2) * b_l.powi(2) * b_big * phi_at
}

/// `max_i sum_k |a_ik| lambda^-d(i,k)`.
pub fn interaction_functional(a: &DMatrix<f64>, dom: &CyclicDomain, lambda: f64) -> f64 {
    let d = dom.dim();
    (0..d)
        .map(|i| {
            (0..d)
                .map(|k| a[(i, k)].abs() * lambda.powi(-(dom.dist0(i, k) as i32)))
                .sum::<f64>()
        })
        .fold(0.0, f64::max)
}

/// Absolute bisection tolerance for [`weak_interaction_lambda`].
pub const LAMBDA_TOL: f64 = 1e-6;

/// Smallest `lambda < 1` with `interaction_functional(lambda) <= lambda`,
/// or `None` when no such `lambda` exists.
///
/// Feasibility is monotone in `lambda` (the functional decreases while the
/// right side increases), so bisection on the feasibility predicate brackets
/// the threshold.
pub fn weak_interaction_lambda(a: &DMatrix<f64>, dom: &CyclicDomain) -> Option<f64> {
    weak_interaction_lambda_tol(a, dom, LAMBDA_TOL)
}

pub fn weak_interaction_lambda_tol(a: &DMatrix<f64>, dom: &CyclicDomain, tol: f64) -> Option<f64> {
    let feasible = |lambda: f64| interaction_functional(a, dom, lambda) <= lambda;
    let mut hi = 1.0 - f64::EPSILON;
    if !feasible(hi) {
        return None;
    }
    let mut lo = 0.0;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid > 0.0 && feasible(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

/// `(r + delta) max{ lambda M (1 + M/s_o)^2 + lambda M^2/s_o,
/// lambda^2 M + s_xi }` with `s_o = sigma_o^2`, `s_xi = sigma_xi^2`.
pub fn psi(m: f64, delta: f64, params: &TheoryParams) -> f64 {
    let lam = params.lambda_a;
    let so = params.obs_var;
    let analysis = lam * m * (1.0 + m / so).powi(2) + lam * m * m / so;
    let forecast = lam * lam * m + params.noise_var;
    (params.r + delta) * analysis.max(forecast)
}

/// Lower limit `(r + 2 delta_*) sigma_xi^2 / (1 - lambda_A)` on `M_*`.
pub fn psi_lower_limit(delta_star: f64, params: &TheoryParams) -> f64 {
    (params.r + 2.0 * delta_star) * params.noise_var / (1.0 - params.lambda_a)
}

/// Admissible range `(0, min{0.25, (1/lambda_A - r)/2})` for `delta_*`.
pub fn delta_star_limit(params: &TheoryParams) -> f64 {
    0.25f64.min(0.5 * (1.0 / params.lambda_a - params.r))
}

/// Smallest `M_* >= psi_lower_limit` with `psi(M_*, delta_*) <= M_*`, up to
/// `params.psi_cap`.
///
/// `psi(M) - M` is convex in `M`, so the feasible set is an interval: a
/// golden-section scan locates the minimum of `psi(M) - M`, then bisection
/// finds the left end of the feasible interval.
pub fn find_psi_fixed_point(delta_star: f64, params: &TheoryParams) -> Result<Option<f64>> {
    let limit = delta_star_limit(params);
    if !(delta_star > 0.0 && delta_star < limit) {
        return Err(argument(format!(
            "delta_* must lie in (0, {limit}), got {delta_star}"
        )));
    }
    if !(params.lambda_a > 0.0 && params.lambda_a < 1.0) {
        return Ok(None);
    }
    let gap = |m: f64| psi(m, delta_star, params) - m;
    let lo = psi_lower_limit(delta_star, params);
    if gap(lo) <= 0.0 {
        return Ok(Some(lo));
    }
    let cap = params.psi_cap.max(lo);
    // golden-section minimization of the convex gap on [lo, cap]
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (lo, cap);
    for _ in 0..200 {
        let x1 = b - phi * (b - a);
        let x2 = a + phi * (b - a);
        if gap(x1) <= 0.0 {
            b = x1;
            break;
        }
        if gap(x2) <= 0.0 {
            b = x2;
            break;
        }
        if gap(x1) < gap(x2) {
            b = x2;
        } else {
            a = x1;
        }
    }
    let mut hi = b;
    if gap(hi) > 0.0 {
        return Ok(None);
    }
    let mut lo_b = lo;
    for _ in 0..200 {
        let mid = 0.5 * (lo_b + hi);
        if gap(mid) <= 0.0 {
            hi = mid;
        } else {
            lo_b = mid;
        }
    }
    Ok(Some(hi))
}

/// Scans `delta_*` downward from its admissible limit and returns the first
/// `(delta_*, M_*)` pair satisfying the fixed-point condition.
pub fn search_valid_pair(params: &TheoryParams, steps: usize) -> Option<(f64, f64)> {
    let limit = delta_star_limit(params);
    if !(limit > 0.0) {
        return None;
    }
    (1..steps).rev().find_map(|k| {
        let delta = limit * k as f64 / steps as f64;
        find_psi_fixed_point(delta, params).ok().flatten().map(|m| (delta, m))
    })
}

/// `max{9x^2, 24x/c, 18x^2 log(d)/c}`.
pub fn gamma(x: f64, d: f64, c_abs: f64) -> f64 {
    let sq = x * x;
    (9.0 * sq).max(24.0 * x / c_abs).max(18.0 * sq * d.ln() / c_abs)
}

/// `2L + ceil(log(4/delta_*) / log(1/lambda_A))`.
pub fn n_star(big_l: usize, delta_star: f64, lambda_a: f64) -> u64 {
    let tail = ((4.0 / delta_star).ln() / (1.0 / lambda_a).ln()).ceil();
    let n = 2 * big_l as i64 + tail as i64;
    n.max(1) as u64
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SampleSize {
    /// `(c delta^2 lambda^2L)^-1 log(16 d^2 n_* / delta^2)`.
    pub structure_branch: f64,
    /// `Gamma(2 r / delta, d)`.
    pub gamma_branch: f64,
    pub value: f64,
    pub n_star: u64,
}

/// Both branches of the ensemble-size requirement for a stable localized
/// structure, and their maximum.
///
/// The first branch is printed with a leading minus sign in its usual
/// statement while its logarithm is positive; it is evaluated here with the
/// sign that makes it a positive size.
pub fn formloc_sample_size(
    big_l: usize,
    delta_star: f64,
    lambda_a: f64,
    r: f64,
    d: f64,
    c_abs: f64,
) -> SampleSize {
    let ns = n_star(big_l, delta_star, lambda_a);
    let denom = c_abs * delta_star.powi(2) * lambda_a.powi(2 * big_l as i32);
    let structure_branch = (16.0 * d * d * ns as f64 / delta_star.powi(2)).ln() / denom;
    let gamma_branch = gamma(2.0 * r / delta_star, d, c_abs);
    SampleSize {
        structure_branch,
        gamma_branch,
        value: structure_branch.max(gamma_branch),
        n_star: ns,
    }
}

/// Back-solves `c_abs` so that [`formloc_sample_size`] equals `target`.
///
/// The sample size is nonincreasing in `c_abs`; bisection in log space.
pub fn calibrate_c_abs(target: f64, big_l: usize, delta_star: f64, lambda_a: f64, r: f64, d: f64) -> Option<f64> {
    let value = |c: f64| formloc_sample_size(big_l, delta_star, lambda_a, r, d, c).value;
    let (mut lo, mut hi) = (1e-12f64.ln(), 1e12f64.ln());
    if value(lo.exp()) < target || value(hi.exp()) > target {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if value(mid.exp()) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some((0.5 * (lo + hi)).exp())
}

/// Long-time failure-probability bound for domination, given the stability
/// constants `b0c0_d0 = B_0 ||C_0|| + D_0` and `m0`.
pub fn domination_failure_bound(
    params: &TheoryParams,
    dom: &CyclicDomain,
    horizon: usize,
    r0: f64,
    b0c0_d0: f64,
    m0: f64,
) -> f64 {
    let b_l = dom.volume_constant(params.l) as f64;
    let log_rs = params.r_star.ln();
    let t = horizon as f64;
    let sigma_o = params.obs_var.sqrt();
    let coupling = b_l.powi(2) * params.m_a.powi(2) / params.rho
        + 2.0 * params.r.cbrt() / (params.rho * sigma_o).cbrt();
    r0 / (t * log_rs)
        + params.delta * b0c0_d0 / (t * log_rs) * coupling
        + params.delta / log_rs
            * (coupling * m0
                + params.big_m_sigma / params.rho
                + 2.0 * (params.r / params.rho).cbrt() * sigma_o.powf(2.0 / 3.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Pass,
    Fail,
    /// A fitted or measured quantity with no pass/fail meaning.
    Estimate,
    NotApplicable,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionCheck {
    pub id: String,
    pub status: Status,
    pub values: BTreeMap<String, f64>,
    pub note: String,
}

impl ConditionCheck {
    fn new(id: &str, status: Status, values: &[(&str, f64)], note: &str) -> Self {
        Self {
            id: id.to_string(),
            status,
            values: values.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            note: note.to_string(),
        }
    }
}

/// Measurements from one localized-filter trajectory.
#[derive(Debug, Clone, Default)]
pub struct TrajectoryStats {
    /// Localization status `M_n` per forecast step.
    pub m_series: Vec<f64>,
    /// Domination factors `r_n` per forecast step.
    pub r_series: Vec<f64>,
    /// Initial domination factor.
    pub r0: Option<f64>,
    pub ensemble_size: usize,
    /// `||C_0||` of the initial ensemble.
    pub c0_norm: f64,
}

/// Least-squares fit of the running mean of `M_n` against `1/T`:
/// intercept estimates `M_0`, slope estimates `B_0 ||C_0|| + D_0`.
pub fn fit_stability(m_series: &[f64]) -> Option<(f64, f64)> {
    if m_series.len() < 2 {
        return None;
    }
    let mut acc = 0.0;
    let pts: Vec<(f64, f64)> = m_series
        .iter()
        .enumerate()
        .map(|(i, m)| {
            acc += m;
            let t = (i + 1) as f64;
            (1.0 / t, acc / t)
        })
        .collect();
    let (slope, intercept) = least_squares(&pts)?;
    Some((intercept, slope))
}

/// Ordinary least squares `y = a x + b`, returning `(a, b)`.
pub fn least_squares(pts: &[(f64, f64)]) -> Option<(f64, f64)> {
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return None;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let a = sxy / sxx;
    Some((a, my - a * mx))
}

/// Evaluates the five domination-theorem conditions for `sys` and a
/// measured trajectory. Condition 3 is reported as an estimate only.
pub fn theorem2_condition_report(
    params: &TheoryParams,
    sys: &LinearSystem,
    stats: &TrajectoryStats,
) -> Result<Vec<ConditionCheck>> {
    let dom = sys.domain();
    let l = params.l;
    let bw_a = dom.bandwidth(sys.dynamics())?;
    let bw_s = dom.bandwidth(sys.noise_cov())?;
    let mut out = Vec::new();

    let cond1 = bw_a <= l && bw_s <= l && params.m_a.powi(2) >= params.m_sigma && params.m_sigma > 0.0;
    out.push(ConditionCheck::new(
        "cond1-system-bounds",
        if cond1 { Status::Pass } else { Status::Fail },
        &[
            ("bandwidth_a", bw_a as f64),
            ("bandwidth_sigma", bw_s as f64),
            ("m_a", params.m_a),
            ("m_sigma", params.m_sigma),
            ("big_m_sigma", params.big_m_sigma),
        ],
        "A and Sigma banded within l; M_A^2 >= m_Sigma",
    ));

    let rho_max = (0.5 - 0.5 / params.r) * (params.m_a.powi(2) / params.m_sigma).min(params.obs_var);
    let rho_ok = params.rho > 0.0 && params.rho < rho_max;
    let mut vals = vec![("rho", params.rho), ("rho_max", rho_max)];
    if let Some(r0) = stats.r0 {
        vals.push(("r0", r0));
    }
    out.push(ConditionCheck::new(
        "cond2-initial-domination",
        if rho_ok { Status::Pass } else { Status::Fail },
        &vals,
        "0 < rho < (1/2 - 1/(2r)) min{M_A^2/m_Sigma, sigma_o^2}; r0 measured from the initial ensemble",
    ));

    let m_mean = mean(&stats.m_series);
    let (m0_est, slope_est) = fit_stability(&stats.m_series).unwrap_or((f64::NAN, f64::NAN));
    out.push(ConditionCheck::new(
        "cond3-stable-structure",
        Status::Estimate,
        &[
            ("m_n_mean", m_mean),
            ("m_n_max", stats.m_series.iter().cloned().fold(f64::NAN, f64::max)),
            ("m0_estimate", m0_est),
            ("b0c0_plus_d0_estimate", slope_est),
        ],
        "affine fit of the running mean of M_n against 1/T; estimates, not a gate",
    ));

    let b_l = dom.volume_constant(l) as f64;
    let b_big = dom.boundary_volume_constant(params.big_l, l) as f64;
    let lhs = params.lambda_a.powi(params.big_l.saturating_sub(2 * l) as i32);
    let rhs = params.delta.powi(3) / (b_big * params.m_a.powi(2) * b_l.powi(6));
    let cond4 = params.big_l >= 4 * l && lhs <= rhs;
    out.push(ConditionCheck::new(
        "cond4-radius",
        if cond4 { Status::Pass } else { Status::Fail },
        &[("phi_l_minus_2l", lhs), ("threshold", rhs), ("big_l", params.big_l as f64)],
        "L >= 4l and Phi(L-2l) <= delta^3 B_{L,l}^-1 M_A^-2 B_l^-6 with Phi(x) = lambda_A^x",
    ));

    let needed = gamma(params.r * b_l / params.delta, dom.dim() as f64, params.c_abs);
    let k = stats.ensemble_size as f64;
    out.push(ConditionCheck::new(
        "cond5-sample-size",
        if k > needed { Status::Pass } else { Status::Fail },
        &[("k", k), ("gamma", needed), ("c_abs", params.c_abs)],
        "K > Gamma(r B_l / delta, d)",
    ));

    if !stats.r_series.is_empty() {
        let within = stats
            .r_series
            .iter()
            .filter(|&&r| r <= params.r_star)
            .count() as f64
            / stats.r_series.len() as f64;
        let bound = domination_failure_bound(
            params,
            dom,
            stats.r_series.len(),
            stats.r0.unwrap_or(1.0),
            slope_est.max(0.0),
            m0_est.max(0.0),
        );
        out.push(ConditionCheck::new(
            "domination-rate",
            Status::Estimate,
            &[
                ("fraction_within_r_star", within),
                ("r_star", params.r_star),
                ("failure_bound", bound),
            ],
            "measured fraction of steps with r_n <= r_*, next to the theorem's failure bound",
        ));
    }
    Ok(out)
}

/// `2 n_* (T lambda_A^L)^-1 (||C_0|| + M_*) + 2 (1 + delta_*) M_*`, the
/// long-time average bound on `M_n`.
pub fn status_average_bound(params: &TheoryParams, horizon: usize, c0_norm: f64, delta_star: f64, m_star: f64) -> f64 {
    let ns = n_star(params.big_l, delta_star, params.lambda_a) as f64;
    2.0 * ns / (horizon as f64 * params.lambda_a.powi(params.big_l as i32)) * (c0_norm + m_star)
        + 2.0 * (1.0 + delta_star) * m_star
}

/// Evaluates the four localized-structure conditions at a given
/// `(delta_*, M_*)` pair and ensemble size.
pub fn theorem3_condition_report(
    params: &TheoryParams,
    sys: &LinearSystem,
    lambda_a: Option<f64>,
    ensemble_size: usize,
    delta_star: f64,
    m_star: f64,
) -> Vec<ConditionCheck> {
    let mut out = Vec::new();
    let sigma = sys.noise_cov().as_matrix();
    let d = sys.dim();
    let diagonal = (0..d).all(|i| (0..d).all(|j| i == j || sigma[(i, j)] == 0.0))
        && (0..d).all(|i| sigma[(i, i)] == sigma[(0, 0)]);
    let sparse = sys.sparse_observation_check(params.l);
    out.push(ConditionCheck::new(
        "cond1-diagonal-noise-sparse-obs",
        if diagonal && sparse { Status::Pass } else { Status::Fail },
        &[("diagonal_noise", diagonal as u8 as f64), ("sparse_observations", sparse as u8 as f64)],
        "Sigma = sigma_xi^2 I and d(o_i, o_j) > 2l",
    ));
    let Some(lam) = lambda_a else {
        out.push(ConditionCheck::new(
            "cond2-weak-interaction",
            Status::Fail,
            &[("r_inverse", 1.0 / params.r)],
            "no lambda_A < 1 exists; the remaining conditions are not verifiable",
        ));
        return out;
    };
    out.push(ConditionCheck::new(
        "cond2-weak-interaction",
        if lam < 1.0 / params.r { Status::Pass } else { Status::Fail },
        &[("lambda_a", lam), ("r_inverse", 1.0 / params.r)],
        "lambda_A < 1/r",
    ));
    let p = TheoryParams { lambda_a: lam, ..params.clone() };
    let limit = delta_star_limit(&p);
    let lower = psi_lower_limit(delta_star, &p);
    let value = psi(m_star, delta_star, &p);
    let ok = delta_star > 0.0 && delta_star < limit && m_star >= lower && value <= m_star;
    out.push(ConditionCheck::new(
        "cond3-psi-fixed-point",
        if ok { Status::Pass } else { Status::Fail },
        &[
            ("delta_star", delta_star),
            ("delta_star_limit", limit),
            ("m_star", m_star),
            ("m_star_lower_limit", lower),
            ("psi", value),
        ],
        "0 < delta_* < min{0.25, (1/lambda_A - r)/2}, M_* >= lower limit, psi(M_*, delta_*) <= M_*",
    ));
    let size = formloc_sample_size(p.big_l, delta_star, lam, p.r, d as f64, p.c_abs);
    out.push(ConditionCheck::new(
        "cond4-sample-size",
        if ensemble_size as f64 > size.value { Status::Pass } else { Status::Fail },
        &[
            ("k", ensemble_size as f64),
            ("required", size.value),
            ("structure_branch", size.structure_branch),
            ("gamma_branch", size.gamma_branch),
            ("n_star", size.n_star as f64),
            ("c_abs", p.c_abs),
        ],
        "K above both sample-size branches",
    ));
    out
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        f64::NAN
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Operator norm of a symmetric inconsistency matrix.
pub fn inconsistency_norm(delta: &CovMatrix) -> f64 {
    sym_op_norm(delta)
}
