//! Power-flow solvability certificates for distribution feeders with
//! Volt-Var controlled inverters.
//!
//! The [`certificate`] module decides, without iterating, whether a loading
//! scenario has a power-flow solution near a known operating point. The
//! [`powerflow`] module provides the implicit Z-bus fixed-point solver used
//! as fallback and for validation, and [`screening`] runs both over batches.
//! [`io`] reads and writes the TOML documents and holds the bundled feeders.

// `!(x > 0.0)` style checks are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certificate;
pub mod error;
pub mod io;
pub mod linalg;
pub mod network;
pub mod powerflow;
pub mod scenario;
pub mod screening;
pub mod synthetic;
pub mod twobus;
pub mod voltvar;

pub use certificate::{
    evaluate_certificate, in_domain, in_domain_normalized, xi, CertificateReport, CertificateTerms, OperatingPoint,
    PreparedCertificate, SlopeSource, XiOperator,
};
pub use error::{Error, Result};
pub use network::{build_network, BusId, BusShunt, LineSpec, NetworkModel};
pub use num_complex::Complex64;
pub use powerflow::{
    fixed_point_step, normalized_step, power_mismatch, solve, PowerFlowResult, PowerFlowStatus, SolverConfig,
    VoltVarMode,
};
pub use scenario::{LinearizedScenario, Scenario};
pub use screening::{screen, timing_report, ScreeningOptions, ScreeningOutcome};
pub use twobus::{TwoBusCase, TwoBusSolution};
pub use voltvar::{BusInjectionSpec, LinearVoltVar, SlopeConvention, VoltVarCurve, VoltVarSetting};
