//! Experiment drivers: twin experiments on the turbulence regimes, the
//! localization profile estimator, noise-scale sweeps, theory reports and
//! concentration sweeps. Every driver is deterministic in its config.

use std::collections::hash_map::DefaultHasher;
use std::hash::Hasher;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::concentration::{
    decay_fit, deviations, tail_from_deviations, ConcentrationInstance, DecayReport, TailCurve, TailMode,
};
use crate::error::{Error, Result};
use crate::filters::{
    enkf_step, kalman_step, lenkf_step, EnsembleState, ErrorTracker, KalmanState,
};
use crate::matrixkit::{localization_status, max_abs, sym_op_norm, CovMatrix};
use crate::model::{build_turbulence, observe, step_signal, LinearSystem, TurbulenceRegime};
use crate::rng::{derive_seed, Purpose, Streams};
use crate::theory::{
    self, calibrate_c_abs, find_psi_fixed_point, formloc_sample_size, inconsistency_bound,
    localization_inconsistency, n_star, psi, psi_lower_limit, search_valid_pair, TheoryParams,
    TrajectoryStats,
};

/// DSE values are capped here; reaching the cap marks a diverged filter.
pub const OVERFLOW_GUARD: f64 = 1e30;

const SYSTEM_LABEL: u64 = 0x5953;
const SAMPLE_LABEL: u64 = 0x534e;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitScaling {
    /// Signal, prior and ensemble start from `N(0, I)`.
    Unit,
    /// Initial variances are scaled by the noise scale `epsilon`.
    Epsilon,
}

/// Flat experiment configuration. Unknown keys are rejected.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub regime: String,
    pub dims: Vec<usize>,
    pub k: usize,
    pub r: f64,
    pub l: usize,
    pub big_l: usize,
    pub rho: f64,
    pub r_star: f64,
    pub steps: usize,
    pub seeds: Vec<u64>,
    /// Noise scale for `simulate`, `phi-hat` and `check-theory`.
    pub epsilon: f64,
    pub epsilons: Vec<f64>,
    pub burn_in: usize,
    /// Burn-in used by the noise-scale sweep.
    pub sweep_burn_in: usize,
    pub init_scaling: InitScaling,
    pub run_kalman: bool,
    pub run_enkf: bool,
    pub run_lenkf: bool,
    /// Largest dimension for which the dense `d x d` diagnostics run.
    pub diag_max_dim: usize,
    /// `lambda` used for `M_n` when the dynamics have no `lambda_A < 1`.
    pub lambda_report: f64,
    pub phi_replicas: usize,
    pub phi_max_x: usize,
    pub delta: f64,
    pub delta_star: f64,
    pub m_star: f64,
    pub c_abs: f64,
    pub psi_cap: f64,
    pub conc_instance: String,
    pub conc_dim: usize,
    pub conc_radius: usize,
    pub conc_modes: Vec<String>,
    pub conc_k: Vec<usize>,
    pub conc_t: Vec<f64>,
    pub conc_replicas: usize,
    pub output: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            regime: "regime1".into(),
            dims: vec![100],
            k: 10,
            r: 1.1,
            l: 1,
            big_l: 4,
            rho: 0.04,
            r_star: 1.05,
            steps: 100,
            seeds: vec![0],
            epsilon: 1.0,
            epsilons: vec![1.0, 0.5, 0.25, 0.125, 0.0625, 0.03125],
            burn_in: 0,
            sweep_burn_in: 10,
            init_scaling: InitScaling::Unit,
            run_kalman: true,
            run_enkf: true,
            run_lenkf: true,
            diag_max_dim: 200,
            lambda_report: 0.5186,
            phi_replicas: 1000,
            phi_max_x: 10,
            delta: 0.5,
            delta_star: 0.128,
            m_star: 0.2187,
            c_abs: 1.0,
            psi_cap: 1e3,
            conc_instance: "standard".into(),
            conc_dim: 50,
            conc_radius: 4,
            conc_modes: vec!["entrywise".into(), "masked-norm".into()],
            conc_k: vec![20, 40, 80, 160],
            conc_t: vec![0.25, 0.5, 1.0],
            conc_replicas: 2000,
            output: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets one field from its textual form. List fields accept either a
    /// JSON array or comma-separated items.
    pub fn apply_override(&mut self, key: &str, value: &str) -> Result<()> {
        let mut obj = serde_json::to_value(&*self).map_err(|e| Error::Config(e.to_string()))?;
        let map = obj.as_object_mut().expect("config serializes to an object");
        let current = map
            .get(key)
            .ok_or_else(|| Error::Config(format!("unknown config key {key:?}")))?;
        let parse = |s: &str| serde_json::from_str::<Value>(s).unwrap_or_else(|_| Value::String(s.to_string()));
        let parsed = if current.is_array() && !value.trim_start().starts_with('[') {
            Value::Array(value.split(',').map(|s| parse(s.trim())).collect())
        } else {
            parse(value)
        };
        map.insert(key.to_string(), parsed);
        *self = serde_json::from_value(obj).map_err(|e| Error::Config(format!("{key}: {e}")))?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.steps < 1 {
            return bad("steps must be >= 1".into());
        }
        if self.k < 2 {
            return bad(format!("ensemble size must be >= 2, got {}", self.k));
        }
        if self.dims.is_empty() || self.seeds.is_empty() {
            return bad("dims and seeds must be nonempty".into());
        }
        if !(self.r >= 1.0) {
            return bad(format!("inflation must be >= 1, got {}", self.r));
        }
        if !(self.epsilon > 0.0) || self.epsilons.iter().any(|e| !(*e > 0.0)) {
            return bad("noise scales must be positive".into());
        }
        if self.burn_in >= self.steps {
            return bad("burn_in must be smaller than steps".into());
        }
        if !(self.lambda_report > 0.0 && self.lambda_report < 1.0) {
            return bad("lambda_report must lie in (0,1)".into());
        }
        TurbulenceRegime::by_name(&self.regime, 10).map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    /// One-line provenance header listing every field.
    pub fn header(&self) -> String {
        format!("# lenkf config {}\n", serde_json::to_string(self).expect("config serializes"))
    }

    pub fn regime_at(&self, d: usize) -> Result<TurbulenceRegime> {
        TurbulenceRegime::by_name(&self.regime, d)
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct StepRow {
    pub n: usize,
    pub dse_kf: f64,
    pub dse_enkf: f64,
    pub dse_lenkf: f64,
    pub m_n: f64,
    pub cmax: f64,
    pub r_n: f64,
    pub dloc_norm: f64,
    pub dloc_bound: f64,
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub regime: String,
    pub d: usize,
    pub seed: u64,
    pub epsilon: f64,
    pub rows: Vec<StepRow>,
    pub mse_kf: f64,
    pub mse_enkf: f64,
    pub mse_lenkf: f64,
    /// First step at which the EnKF hit the overflow guard.
    pub enkf_diverged_at: Option<usize>,
    /// Hash of the observation sequence, as consumed by every filter.
    pub obs_hash: u64,
    /// Domination factor of the initial error against the initial ensemble.
    pub r0: f64,
    /// `||C_0||` of the initial ensemble.
    pub c0_norm: f64,
    /// Forecast covariance of the localized filter at the last step.
    pub final_cov: Option<CovMatrix>,
}

impl RunRecord {
    pub fn max_dse_enkf(&self) -> f64 {
        self.rows.iter().map(|r| r.dse_enkf).fold(f64::NAN, f64::max)
    }
}

/// Which parts of a run to execute.
#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    pub kalman: bool,
    pub enkf: bool,
    pub lenkf: bool,
    pub diagnostics: bool,
    pub keep_final_cov: bool,
}

impl RunOptions {
    pub fn from_config(cfg: &ExperimentConfig, d: usize) -> Self {
        Self {
            kalman: cfg.run_kalman,
            enkf: cfg.run_enkf,
            lenkf: cfg.run_lenkf,
            diagnostics: cfg.run_lenkf && d <= cfg.diag_max_dim,
            keep_final_cov: false,
        }
    }

    pub fn lenkf_only() -> Self {
        Self {
            kalman: false,
            enkf: false,
            lenkf: true,
            diagnostics: false,
            keep_final_cov: false,
        }
    }
}

/// An indefinite `C o D + rho I` admits no finite domination factor.
fn domination_or_inf(r: Result<f64>) -> f64 {
    match r {
        Ok(v) => v,
        Err(Error::Degenerate { floor, .. }) if floor <= 0.0 => f64::INFINITY,
        Err(_) => f64::NAN,
    }
}

fn feed(h: &mut DefaultHasher, y: &DVector<f64>) {
    for v in y.iter() {
        h.write_u64(v.to_bits());
    }
}

fn dse(truth: &DVector<f64>, estimate: &DVector<f64>) -> f64 {
    (truth - estimate).norm_squared() / truth.len() as f64
}

fn time_mean(xs: impl Iterator<Item = f64>, burn_in: usize) -> f64 {
    let v: Vec<f64> = xs.skip(burn_in).collect();
    v.iter().sum::<f64>() / v.len() as f64
}

/// Runs the selected filters on one signal realization.
///
/// The signal, observations and initial condition come from streams seeded
/// by `(seed, system)`; ensemble initialization, forecast noise and
/// observation perturbations come from `(seed, sample)` and are shared by
/// the EnKF and the localized filter.
pub fn run_single(
    cfg: &ExperimentConfig,
    d: usize,
    seed: u64,
    epsilon: f64,
    opts: RunOptions,
) -> Result<RunRecord> {
    let reg = cfg.regime_at(d)?;
    let sys = build_turbulence(&reg)?.with_epsilon(epsilon)?;
    let sys_streams = Streams::new(derive_seed(seed, SYSTEM_LABEL));
    let sample_streams = Streams::new(derive_seed(seed, SAMPLE_LABEL));
    let init_var = match cfg.init_scaling {
        InitScaling::Unit => 1.0,
        InitScaling::Epsilon => epsilon,
    };
    let init_sd = init_var.sqrt();

    let mut x = sys_streams.stream(Purpose::SignalInit, 0, 0).normal_vector(d) * init_sd;
    let mut members = DMatrix::zeros(d, cfg.k);
    for m in 0..cfg.k {
        let draw = sample_streams.stream(Purpose::EnsembleInit, 0, m as u64).normal_vector(d) * init_sd;
        members.set_column(m, &draw);
    }
    let mut kf = KalmanState {
        mean: DVector::zeros(d),
        cov: CovMatrix::scaled_identity(d, init_var),
    };
    let mut enkf = Some(EnsembleState::from_members(&members, cfg.r, None)?);
    let mut lenkf = EnsembleState::from_members(&members, cfg.r, Some(cfg.l))?;

    let lambda = theory::weak_interaction_lambda(sys.dynamics(), sys.domain()).unwrap_or(cfg.lambda_report);
    let mut params = TheoryParams::from_system(&sys, cfg.l, cfg.big_l, cfg.r, cfg.lambda_report);
    params.lambda_a = lambda;
    params.delta = cfg.delta;
    params.rho = cfg.rho;
    params.r_star = cfg.r_star;
    let phi_at = lambda.powi(cfg.big_l.saturating_sub(2 * cfg.l) as i32);

    let c0 = lenkf.covariance();
    let c0_norm = sym_op_norm(&c0);
    let mut tracker = None;
    let mut r0 = f64::NAN;
    if opts.diagnostics {
        let mean = &lenkf.mean;
        let cov = CovMatrix::symmetrized(mean * mean.transpose() + DMatrix::identity(d, d) * init_var);
        let t = ErrorTracker {
            cov,
            rho: cfg.rho,
            r_star: cfg.r_star,
            big_l: cfg.big_l,
        };
        r0 = domination_or_inf(t.factor(&c0, sys.domain()));
        tracker = Some(t);
    }

    let (mut h_kf, mut h_enkf, mut h_lenkf) = (DefaultHasher::new(), DefaultHasher::new(), DefaultHasher::new());
    let mut rows = Vec::with_capacity(cfg.steps);
    let mut diverged_at = None;
    let mut pending_gain: Option<DMatrix<f64>> = Some(DMatrix::zeros(d, sys.num_obs()));
    let mut final_cov = None;

    for n in 1..=cfg.steps {
        let time = n as u64;
        x = step_signal(&sys, &x, &mut sys_streams.stream(Purpose::SystemNoise, time, 0));
        let y = observe(&sys, &x, &mut sys_streams.stream(Purpose::ObservationNoise, time, 0));
        let mut row = StepRow {
            n,
            dse_kf: f64::NAN,
            dse_enkf: f64::NAN,
            dse_lenkf: f64::NAN,
            m_n: f64::NAN,
            cmax: f64::NAN,
            r_n: f64::NAN,
            dloc_norm: f64::NAN,
            dloc_bound: f64::NAN,
        };

        if opts.kalman {
            feed(&mut h_kf, &y);
            let step = kalman_step(&sys, &kf, &y)?;
            row.dse_kf = dse(&x, &step.forecast_mean);
            kf = step.posterior;
        }

        if opts.enkf {
            feed(&mut h_enkf, &y);
            row.dse_enkf = match enkf.take() {
                None => OVERFLOW_GUARD,
                Some(st) => match enkf_step(&sys, &st, &y, &sample_streams, time) {
                    Ok(step) => {
                        let e = dse(&x, &step.forecast_mean);
                        if e.is_finite() && e < OVERFLOW_GUARD {
                            enkf = Some(step.posterior);
                            e
                        } else {
                            diverged_at.get_or_insert(n);
                            OVERFLOW_GUARD
                        }
                    }
                    Err(_) => {
                        diverged_at.get_or_insert(n);
                        OVERFLOW_GUARD
                    }
                },
            };
        }

        if opts.lenkf {
            feed(&mut h_lenkf, &y);
            let step = lenkf_step(&sys, &lenkf, &y, &sample_streams, time)?;
            row.dse_lenkf = dse(&x, &step.forecast_mean);
            let c = &step.forecast_cov;
            row.m_n = localization_status(c, lambda, cfg.big_l, sys.domain())?;
            row.cmax = max_abs(c);
            if let Some(t) = tracker.as_mut() {
                t.advance(&sys, pending_gain.as_ref().expect("gain from the previous step"));
                row.r_n = domination_or_inf(t.factor(c, sys.domain()));
                let delta = localization_inconsistency(&sys, c, &step.gain.gain, cfg.big_l, cfg.l)?;
                row.dloc_norm = sym_op_norm(&delta);
                row.dloc_bound = inconsistency_bound(row.m_n, &params, phi_at, sys.domain());
            }
            pending_gain = Some(step.gain.gain.clone());
            if n == cfg.steps && opts.keep_final_cov {
                final_cov = Some(step.forecast_cov.clone());
            }
            lenkf = step.posterior;
        }
        rows.push(row);
    }

    let hashes: Vec<u64> = [(opts.kalman, &h_kf), (opts.enkf, &h_enkf), (opts.lenkf, &h_lenkf)]
        .iter()
        .filter(|(on, _)| *on)
        .map(|(_, h)| h.finish())
        .collect();
    assert!(
        hashes.windows(2).all(|w| w[0] == w[1]),
        "filters consumed different observation sequences"
    );

    let burn = cfg.burn_in;
    Ok(RunRecord {
        regime: cfg.regime.clone(),
        d,
        seed,
        epsilon,
        mse_kf: time_mean(rows.iter().map(|r| r.dse_kf), burn),
        mse_enkf: time_mean(rows.iter().map(|r| r.dse_enkf), burn),
        mse_lenkf: time_mean(rows.iter().map(|r| r.dse_lenkf), burn),
        rows,
        enkf_diverged_at: diverged_at,
        obs_hash: hashes.first().copied().unwrap_or(0),
        r0,
        c0_norm,
        final_cov,
    })
}

/// One run per `(d, seed)` cell, in config order.
pub fn run_regime(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    let cells: Vec<(usize, u64)> = cfg
        .dims
        .iter()
        .flat_map(|&d| cfg.seeds.iter().map(move |&s| (d, s)))
        .collect();
    cells
        .par_iter()
        .map(|&(d, seed)| run_single(cfg, d, seed, cfg.epsilon, RunOptions::from_config(cfg, d)))
        .collect()
}

fn num(x: f64) -> String {
    format!("{x:.9e}")
}

pub const STEPS_HEADER: &str = "regime,d,seed,n,dse_kf,dse_enkf,dse_lenkf,m_n,cmax,r_n,dloc_norm,dloc_bound";
pub const SUMMARY_HEADER: &str = "regime,d,seed,mse_kf,mse_enkf,mse_lenkf";

pub fn steps_csv(cfg: &ExperimentConfig, runs: &[RunRecord]) -> String {
    let mut out = cfg.header();
    out.push_str(STEPS_HEADER);
    out.push('\n');
    for run in runs {
        for r in &run.rows {
            let vals = [r.dse_kf, r.dse_enkf, r.dse_lenkf, r.m_n, r.cmax, r.r_n, r.dloc_norm, r.dloc_bound];
            let cols: Vec<String> = vals.iter().map(|&v| num(v)).collect();
            out.push_str(&format!("{},{},{},{},{}\n", run.regime, run.d, run.seed, r.n, cols.join(",")));
        }
    }
    out
}

pub fn summary_csv(cfg: &ExperimentConfig, runs: &[RunRecord]) -> String {
    let mut out = cfg.header();
    out.push_str(SUMMARY_HEADER);
    out.push('\n');
    for run in runs {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            run.regime,
            run.d,
            run.seed,
            num(run.mse_kf),
            num(run.mse_enkf),
            num(run.mse_lenkf)
        ));
    }
    out
}

/// `d^-1 sum_i |C[i, i + x mod d]|` for `x = 0..=max_x`.
pub fn phi_profile(c: &DMatrix<f64>, max_x: usize) -> Vec<f64> {
    let d = c.nrows();
    (0..=max_x)
        .map(|x| (0..d).map(|i| c[(i, (i + x) % d)].abs()).sum::<f64>() / d as f64)
        .collect()
}

/// Average localization profile of the localized filter's forecast
/// covariance at the last step, over `phi_replicas` independent runs at
/// the first configured dimension.
pub fn phi_hat(cfg: &ExperimentConfig) -> Result<Vec<PhiPoint>> {
    cfg.validate()?;
    if cfg.phi_replicas == 0 {
        return Err(Error::Config("phi_replicas must be >= 1".into()));
    }
    let d = cfg.dims[0];
    let base = cfg.seeds[0];
    let opts = RunOptions {
        keep_final_cov: true,
        ..RunOptions::lenkf_only()
    };
    let profiles: Vec<Vec<f64>> = (0..cfg.phi_replicas as u64)
        .into_par_iter()
        .map(|rep| {
            let run = run_single(cfg, d, derive_seed(base, rep), cfg.epsilon, opts)?;
            let c = run.final_cov.expect("final covariance kept");
            Ok(phi_profile(c.as_matrix(), cfg.phi_max_x))
        })
        .collect::<Result<_>>()?;
    let n = profiles.len() as f64;
    Ok((0..=cfg.phi_max_x)
        .map(|x| {
            let mean = profiles.iter().map(|p| p[x]).sum::<f64>() / n;
            let var = if n > 1.0 {
                profiles.iter().map(|p| (p[x] - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            PhiPoint { x, mean, stderr: (var / n).sqrt() }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhiPoint {
    pub x: usize,
    pub mean: f64,
    /// Standard error of `mean` across replicas.
    pub stderr: f64,
}

pub fn phi_csv(cfg: &ExperimentConfig, phi: &[PhiPoint]) -> String {
    let mut out = cfg.header();
    out.push_str("x,phi_hat\n");
    for p in phi {
        out.push_str(&format!("{},{}\n", p.x, num(p.mean)));
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub rows: Vec<(f64, f64)>,
    /// Least-squares slope of `ln MSE` against `ln epsilon`.
    pub slope: f64,
}

/// Localized-filter MSE per noise scale, averaged over all `(d, seed)` cells.
pub fn epsilon_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    cfg.validate()?;
    if cfg.sweep_burn_in >= cfg.steps {
        return Err(Error::Config("sweep_burn_in must be smaller than steps".into()));
    }
    let cfg = &ExperimentConfig {
        burn_in: cfg.sweep_burn_in,
        ..cfg.clone()
    };
    let cells: Vec<(f64, usize, u64)> = cfg
        .epsilons
        .iter()
        .flat_map(|&e| cfg.dims.iter().flat_map(move |&d| cfg.seeds.iter().map(move |&s| (e, d, s))))
        .collect();
    let mses: Vec<f64> = cells
        .par_iter()
        .map(|&(e, d, s)| run_single(cfg, d, s, e, RunOptions::lenkf_only()).map(|r| r.mse_lenkf))
        .collect::<Result<_>>()?;
    let per = cfg.dims.len() * cfg.seeds.len();
    let rows: Vec<(f64, f64)> = cfg
        .epsilons
        .iter()
        .enumerate()
        .map(|(i, &e)| (e, mses[i * per..(i + 1) * per].iter().sum::<f64>() / per as f64))
        .collect();
    let pts: Vec<(f64, f64)> = rows.iter().map(|&(e, m)| (e.ln(), m.ln())).collect();
    let slope = theory::least_squares(&pts).map(|p| p.0).unwrap_or(f64::NAN);
    Ok(SweepResult { rows, slope })
}

pub fn sweep_csv(cfg: &ExperimentConfig, sweep: &SweepResult) -> String {
    let mut out = cfg.header();
    out.push_str("epsilon,mse\n");
    for (e, m) in &sweep.rows {
        out.push_str(&format!("{},{}\n", num(*e), num(*m)));
    }
    out.push_str(&format!("slope,{}\n", num(sweep.slope)));
    out
}

fn opt(x: Option<f64>) -> Value {
    x.map_or(Value::Null, |v| json!(v))
}

/// Theory report for the first configured dimension: weak-interaction
/// coefficient, the `psi` condition at the configured and searched pairs,
/// sample-size formulas, and both theorem condition lists measured on a
/// trajectory of the first seed.
pub fn check_theory(cfg: &ExperimentConfig) -> Result<Value> {
    cfg.validate()?;
    let d = cfg.dims[0];
    let reg = cfg.regime_at(d)?;
    let sys = build_turbulence(&reg)?.with_epsilon(cfg.epsilon)?;
    let lambda = theory::weak_interaction_lambda(sys.dynamics(), sys.domain());
    let (am, a0, ap) = reg.coefficients();
    let quad_root = {
        let (b, c) = (a0.abs(), am.abs() + ap.abs());
        0.5 * (b + (b * b + 4.0 * c).sqrt())
    };
    let mut params = TheoryParams::from_system(&sys, cfg.l, cfg.big_l, cfg.r, cfg.lambda_report);
    params.lambda_a = lambda.unwrap_or(cfg.lambda_report);
    params.delta = cfg.delta;
    params.delta_star = cfg.delta_star;
    params.rho = cfg.rho;
    params.r_star = cfg.r_star;
    params.c_abs = cfg.c_abs;
    params.psi_cap = cfg.psi_cap;

    let mut report = json!({
        "regime": cfg.regime,
        "d": d,
        "epsilon": cfg.epsilon,
        "coefficients": [am, a0, ap],
        "dynamics_norm": params.m_a,
        "dynamics_row_sum": am + a0 + ap,
        "lambda_a": opt(lambda),
        "lambda_quadratic_root": if quad_root < 1.0 { json!(quad_root) } else { Value::Null },
        "c_abs": cfg.c_abs,
    });

    if let Some(lam) = lambda {
        let p = TheoryParams { lambda_a: lam, ..params.clone() };
        let (ds, ms) = (cfg.delta_star, cfg.m_star);
        let fixed = find_psi_fixed_point(ds, &p).ok().flatten();
        let pair = search_valid_pair(&p, 2000);
        let size_d = formloc_sample_size(cfg.big_l, ds, lam, cfg.r, d as f64, cfg.c_abs);
        let size_big = formloc_sample_size(cfg.big_l, ds, lam, cfg.r, 1e6, cfg.c_abs);
        let calibrated = calibrate_c_abs(2.8e4, cfg.big_l, ds, lam, cfg.r, 100.0);
        let calibrated_big = calibrated.map(|c| formloc_sample_size(cfg.big_l, ds, lam, cfg.r, 1e6, c).value);
        report["psi"] = json!({
            "delta_star": ds,
            "m_star": ms,
            "psi_at_pair": psi(ms, ds, &p),
            "lower_limit_at_pair": psi_lower_limit(ds, &p),
            "pair_satisfies": psi(ms, ds, &p) <= ms && ms >= psi_lower_limit(ds, &p),
            "fixed_point_at_delta_star": opt(fixed),
            "valid_pair": pair.map_or(Value::Null, |(a, b)| json!({"delta_star": a, "m_star": b})),
        });
        report["n_star"] = json!(n_star(cfg.big_l, ds, lam));
        report["sample_size"] = json!({
            "at_d": size_d,
            "at_1e6": size_big,
            "c_abs_calibrated_to_2.8e4_at_100": opt(calibrated),
            "at_1e6_with_calibrated_c_abs": opt(calibrated_big),
        });
        report["status_average_bound"] = json!(theory::status_average_bound(&p, cfg.steps, 1.0, ds, ms));
        let t3 = theory::theorem3_condition_report(&p, &sys, Some(lam), cfg.k, ds, ms);
        report["theorem3"] = serde_json::to_value(t3).expect("report serializes");
    } else {
        let t3 = theory::theorem3_condition_report(&params, &sys, None, cfg.k, cfg.delta_star, cfg.m_star);
        report["theorem3"] = serde_json::to_value(t3).expect("report serializes");
    }

    let b_l = sys.domain().volume_constant(cfg.l) as f64;
    report["gamma_cond5"] = json!(theory::gamma(cfg.r * b_l / cfg.delta, d as f64, cfg.c_abs));

    let opts = RunOptions {
        kalman: false,
        enkf: false,
        lenkf: true,
        diagnostics: d <= cfg.diag_max_dim,
        keep_final_cov: false,
    };
    let run = run_single(cfg, d, cfg.seeds[0], cfg.epsilon, opts)?;
    let stats = TrajectoryStats {
        m_series: run.rows.iter().map(|r| r.m_n).collect(),
        r_series: run.rows.iter().map(|r| r.r_n).filter(|r| !r.is_nan()).collect(),
        r0: (!run.r0.is_nan()).then_some(run.r0),
        ensemble_size: cfg.k,
        c0_norm: run.c0_norm,
    };
    let t2 = theory::theorem2_condition_report(&params, &sys, &stats)?;
    report["theorem2"] = serde_json::to_value(t2).expect("report serializes");
    report["trajectory"] = json!({
        "seed": cfg.seeds[0],
        "mse_lenkf": run.mse_lenkf,
        "m_n_mean": stats.m_series.iter().sum::<f64>() / stats.m_series.len() as f64,
        "cmax_max": run.rows.iter().map(|r| r.cmax).fold(0.0, f64::max),
        "c0_norm": run.c0_norm,
    });
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct DecaySummary {
    pub mode: TailMode,
    pub t: f64,
    pub report: DecayReport,
}

#[derive(Debug, Clone)]
pub struct ConcentrationOutput {
    pub curves: Vec<TailCurve>,
    pub fits: Vec<DecaySummary>,
}

fn concentration_instance(cfg: &ExperimentConfig, k: usize) -> Result<ConcentrationInstance> {
    let d = cfg.conc_dim;
    let streams = Streams::new(derive_seed(cfg.seeds[0], k as u64));
    match cfg.conc_instance.as_str() {
        "standard" => ConcentrationInstance::standard(d, k, cfg.conc_radius, cfg.conc_replicas, cfg.conc_t.clone()),
        "synthetic" => {
            ConcentrationInstance::synthetic(d, k, 1.0, 1.0, cfg.conc_radius, cfg.conc_replicas, cfg.conc_t.clone(), &streams)
        }
        "lenkf" => {
            let frozen = ExperimentConfig {
                k,
                ..cfg.clone()
            };
            let sys = build_turbulence(&cfg.regime_at(d)?)?.with_epsilon(cfg.epsilon)?;
            let st = frozen_state(&frozen, &sys, d)?;
            ConcentrationInstance::lenkf_frozen(
                &sys,
                &st.spreads,
                cfg.r,
                cfg.l,
                cfg.conc_radius,
                cfg.conc_replicas,
                cfg.conc_t.clone(),
            )
        }
        other => Err(Error::Config(format!("unknown concentration instance {other:?}"))),
    }
}

/// The localized filter's posterior ensemble after `cfg.steps` steps.
fn frozen_state(cfg: &ExperimentConfig, sys: &LinearSystem, d: usize) -> Result<EnsembleState> {
    let seed = cfg.seeds[0];
    let sys_streams = Streams::new(derive_seed(seed, SYSTEM_LABEL));
    let sample_streams = Streams::new(derive_seed(seed, SAMPLE_LABEL));
    let mut x = sys_streams.stream(Purpose::SignalInit, 0, 0).normal_vector(d);
    let mut st = EnsembleState::standard(d, cfg.k, &sample_streams, cfg.r, Some(cfg.l))?;
    for n in 1..=cfg.steps as u64 {
        x = step_signal(sys, &x, &mut sys_streams.stream(Purpose::SystemNoise, n, 0));
        let y = observe(sys, &x, &mut sys_streams.stream(Purpose::ObservationNoise, n, 0));
        st = lenkf_step(sys, &st, &y, &sample_streams, n)?.posterior;
    }
    Ok(st)
}

/// Tail curves for every configured mode and sample size, computed on
/// shared replicas per sample size, plus decay fits per mode and `t`.
pub fn concentration_cmd(cfg: &ExperimentConfig) -> Result<ConcentrationOutput> {
    cfg.validate()?;
    if cfg.conc_replicas < 100 {
        return Err(Error::Config("concentration needs at least 100 replicas".into()));
    }
    let modes: Vec<TailMode> = cfg.conc_modes.iter().map(|m| TailMode::parse(m)).collect::<Result<_>>()?;
    let streams = Streams::new(cfg.seeds[0]);
    let mut curves = Vec::new();
    for &k in &cfg.conc_k {
        let inst = concentration_instance(cfg, k)?;
        let devs = deviations(&inst, &modes, &streams);
        for (mode, dv) in modes.iter().zip(&devs) {
            curves.push(tail_from_deviations(&inst, *mode, dv));
        }
    }
    let mut fits = Vec::new();
    if cfg.conc_k.len() >= 3 {
        for &mode in &modes {
            for (ti, &t) in cfg.conc_t.iter().enumerate() {
                let pts: Vec<(usize, f64, usize)> = curves
                    .iter()
                    .filter(|c| c.mode == mode)
                    .map(|c| (c.k, c.points[ti].tail, c.replicas))
                    .collect();
                fits.push(DecaySummary {
                    mode,
                    t,
                    report: decay_fit(&pts)?,
                });
            }
        }
    }
    Ok(ConcentrationOutput { curves, fits })
}

pub fn concentration_csv(cfg: &ExperimentConfig, out: &ConcentrationOutput) -> String {
    let mut s = cfg.header();
    s.push_str(crate::concentration::CSV_HEADER);
    s.push('\n');
    s.push_str(&crate::concentration::curves_to_csv(&out.curves));
    s
}
