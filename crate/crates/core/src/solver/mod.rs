//! Perturbed gradient descent, gradient-flow integration and second-order
//! stationarity checks.

mod census;
mod flow;
mod gd;
mod sosp;

pub use census::{active_column_census, fraction_above_curve, Census};
pub use flow::{gradient_flow, t0, FieldScale, FlowConfig, FlowSnapshot, FlowTrace, SignalSplit};
pub use gd::{
    clip_operator_norm, perturbed_gd, GdConfig, GdOutcome, IterRecord, IterState, NullSink, PerturbTrigger,
    Perturbation, TraceRecorder, TraceSink,
};
pub use sosp::{
    certify_sosp, dense_hessian, hessian_min_eigenpair, Certification, EigenConfig, EigenMethod, EigenPair, SospReport,
};
