pub mod baselines;
pub mod dsp;
pub mod envelope;
pub mod eval;
pub mod harness;
pub mod nn;
pub mod separation;
pub mod signal;
