//! Day-ahead reactive-power flexibility regions for unbalanced radial
//! distribution feeders with uncertain solar generation.
//!
//! The numerical kernels (linear algebra, LP, sensitivities, power flow,
//! normal quantiles) are generic over [`Scalar`]; the aliases below pin the
//! `f64` instantiations used by the pipeline.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod forecast;
pub mod linalg;
pub mod lp;
pub mod montecarlo;
pub mod network;
pub mod normal;
pub mod opf;
pub mod powerflow;
pub mod report;
pub mod scalar;
pub mod sensitivity;
pub mod sweep;

pub use forecast::{adjust_forecast, fit_error_model, ErrorBin, ErrorModel, ForecastError};
pub use lp::{certify, solve_lp, LpStatus, Sense};
pub use montecarlo::{validate_fr, McCase, McConfig, McReport, Sampling};
pub use network::{load_network, NetworkError, NetworkModel, NodePhase, Phase, PhaseSet};
pub use normal::{inv_norm_cdf, norm_cdf, NormalError};
pub use opf::{
    compute_fr, reformulate_bounds, DerSpec, FlexibilityRegion, OpfError, QBounds, ScenarioHour, VoltageLimits,
};
pub use report::RunManifest;
pub use scalar::Scalar;
pub use sensitivity::{build_coefficients, build_sensitivity, LinearSensitivity, SensitivityError};
pub use sweep::{sweep, DerConfig, DispatchFile, Profiles, SweepEntry, SweepError, SweepOptions};

pub type Matrix = linalg::DenseMatrix<f64>;
pub type Sensitivity = LinearSensitivity<f64>;
pub type Lp = lp::LpProblem<f64>;
pub type LpResult = lp::LpSolution<f64>;
pub type PowerFlow = powerflow::PfSolution<f64>;
