//! Shared fixtures for the benchmarks.

use lenkf_core::model::build_turbulence;
use lenkf_core::{EnsembleState, LinearSystem, Streams, TurbulenceRegime};
use nalgebra::DVector;

/// Regime I system of dimension `d` with a standard ensemble of size `k`.
pub fn fixture(d: usize, k: usize) -> (LinearSystem, EnsembleState, DVector<f64>) {
    let sys = build_turbulence(&TurbulenceRegime::regime1(d)).expect("valid regime");
    let st = EnsembleState::standard(d, k, &Streams::new(7), 1.1, Some(1)).expect("valid ensemble");
    let y = DVector::from_element(sys.num_obs(), 0.5);
    (sys, st, y)
}
