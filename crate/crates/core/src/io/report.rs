//! Result documents. Floats are written in shortest round-trip form, so a
//! report parses back to the same values bit for bit.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Feeder, FORMAT_VERSION};
use crate::certificate::{CertificateReport, OperatingPoint, SlopeSource};
use crate::powerflow::{PowerFlowResult, PowerFlowStatus};
use crate::scenario::Scenario;
use crate::screening::{ReferenceTiming, ScreeningOutcome};
use crate::twobus::TwoBusCase;
use crate::voltvar::SlopeConvention;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportDocument {
    pub format_version: u32,
    pub tool_version: String,
    pub command: String,
    /// Role to `"<source> sha256:<hex>"`.
    #[serde(default)]
    pub inputs: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power_flow: Option<PowerFlowRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate: Option<CertificateRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub screening: Option<ScreeningRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limits: Option<LimitsRecord>,
}

impl ReportDocument {
    pub fn new(command: &str, inputs: BTreeMap<String, String>) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            tool_version: TOOL_VERSION.to_string(),
            command: command.to_string(),
            inputs,
            power_flow: None,
            certificate: None,
            screening: None,
            limits: None,
        }
    }

    pub fn to_toml(&self) -> String {
        super::to_toml(self)
    }

    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerFlowRecord {
    pub scenario: String,
    pub status: PowerFlowStatus,
    pub iterations: usize,
    pub max_power_mismatch_pu: f64,
    #[serde(rename = "bus")]
    pub buses: Vec<BusRecord>,
}

/// Powers are consumption-positive like the input files; `q_kvar` includes
/// the Volt-Var contribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusRecord {
    pub name: String,
    pub u_pu: f64,
    pub angle_deg: f64,
    pub v_volts: f64,
    pub p_kw: f64,
    pub q_kvar: f64,
}

impl PowerFlowRecord {
    pub fn new(feeder: &Feeder, scenario: &Scenario, result: &PowerFlowResult) -> Self {
        let buses = feeder
            .bus_names()
            .iter()
            .enumerate()
            .map(|(k, name)| BusRecord {
                name: name.clone(),
                u_pu: result.u[k].norm(),
                angle_deg: result.v[k].arg().to_degrees(),
                v_volts: result.v[k].norm(),
                p_kw: -result.injection[k].re / 1e3,
                q_kvar: -result.injection[k].im / 1e3,
            })
            .collect();
        Self {
            scenario: scenario.id.clone(),
            status: result.status,
            iterations: result.iterations,
            max_power_mismatch_pu: result.max_power_mismatch,
            buses,
        }
    }

    pub fn from_anchor(feeder: &Feeder, op: &OperatingPoint) -> Self {
        let buses = feeder
            .bus_names()
            .iter()
            .enumerate()
            .map(|(k, name)| BusRecord {
                name: name.clone(),
                u_pu: op.u_abs()[k],
                angle_deg: op.v_hat()[k].arg().to_degrees(),
                v_volts: op.v_hat()[k].norm(),
                p_kw: -op.s_hat()[k].re / 1e3,
                q_kvar: -op.s_hat()[k].im / 1e3,
            })
            .collect();
        Self {
            scenario: op.scenario().id.clone(),
            status: PowerFlowStatus::Converged,
            iterations: 0,
            max_power_mismatch_pu: op.mismatch(),
            buses,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateRecord {
    pub anchor: String,
    pub scenario: String,
    pub slope_convention: SlopeConvention,
    pub slope_source: SlopeSource,
    pub u_min: f64,
    pub xi_s_hat: f64,
    pub xi_m: f64,
    pub xi_residual: f64,
    pub cond_a: f64,
    pub delta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_outer: Option<f64>,
    pub solvable: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl CertificateRecord {
    pub fn new(anchor: &OperatingPoint, candidate: &Scenario, r: &CertificateReport) -> Self {
        Self {
            anchor: anchor.scenario().id.clone(),
            scenario: candidate.id.clone(),
            slope_convention: candidate.convention,
            slope_source: candidate.slope_source,
            u_min: r.u_min,
            xi_s_hat: r.xi_s_hat,
            xi_m: r.xi_m,
            xi_residual: r.xi_residual,
            cond_a: r.cond_a,
            delta: r.delta,
            rho: r.rho,
            rho_outer: r.rho_outer,
            solvable: r.solvable,
            notes: r.margin_notes.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScreeningRecord {
    pub anchor: String,
    pub flag: u8,
    pub early_returned: bool,
    #[serde(rename = "scenario", default)]
    pub scenarios: Vec<ScenarioRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_timing: Option<ReferenceTimingRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioRecord {
    pub id: String,
    pub certified: bool,
    pub u_min: f64,
    pub xi_s_hat: f64,
    pub xi_m: f64,
    pub xi_residual: f64,
    pub cond_a: f64,
    pub delta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    pub fallback_used: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback_status: Option<PowerFlowStatus>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback_iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate_seconds: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback_seconds: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceTimingRecord {
    pub n_pq: usize,
    pub fixed_point_step_seconds: f64,
    pub full_solve_seconds: f64,
    pub full_solve_iterations: usize,
}

impl From<&ReferenceTiming> for ReferenceTimingRecord {
    fn from(r: &ReferenceTiming) -> Self {
        Self {
            n_pq: r.n_pq,
            fixed_point_step_seconds: r.fixed_point_step,
            full_solve_seconds: r.full_solve,
            full_solve_iterations: r.full_solve_iterations,
        }
    }
}

impl ScreeningRecord {
    pub fn new(anchor: &OperatingPoint, outcome: &ScreeningOutcome) -> Self {
        let scenarios = outcome
            .results
            .iter()
            .map(|o| ScenarioRecord {
                id: o.id.clone(),
                certified: o.certified,
                u_min: o.report.u_min,
                xi_s_hat: o.report.xi_s_hat,
                xi_m: o.report.xi_m,
                xi_residual: o.report.xi_residual,
                cond_a: o.report.cond_a,
                delta: o.report.delta,
                rho: o.rho,
                fallback_used: o.fallback_used,
                fallback_status: o.fallback_status,
                fallback_iterations: o.fallback_iterations,
                certificate_seconds: o.timing.map(|t| t.certificate),
                fallback_seconds: o.timing.and_then(|t| t.fallback),
            })
            .collect();
        Self {
            anchor: anchor.scenario().id.clone(),
            flag: outcome.flag,
            early_returned: outcome.early_returned,
            scenarios,
            reference_timing: outcome.reference.as_ref().map(Into::into),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitsRecord {
    pub e_volts: f64,
    pub r_ohms: f64,
    pub x_ohms: f64,
    pub p_max_w: f64,
    pub q_max_var: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_w: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_var: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discriminant: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solvable: Option<bool>,
    /// Receiving-end voltage magnitudes, high-voltage branch first.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub voltages_volts: Vec<f64>,
}

impl LimitsRecord {
    /// With `with_load`, adds the verdict and voltage roots for `case.p`, `case.q`.
    pub fn new(case: &TwoBusCase, with_load: bool) -> Self {
        let mut r = Self {
            e_volts: case.e,
            r_ohms: case.r,
            x_ohms: case.x,
            p_max_w: case.p_max(),
            q_max_var: case.q_max(),
            p_w: None,
            q_var: None,
            discriminant: None,
            solvable: None,
            voltages_volts: Vec::new(),
        };
        if with_load {
            let sol = case.solve();
            r.p_w = Some(case.p);
            r.q_var = Some(case.q);
            r.discriminant = Some(case.discriminant());
            r.solvable = Some(sol.solvable);
            r.voltages_volts = sol.voltages;
        }
        r
    }
}
