//! Implicit Z-bus fixed-point power flow,
//! `v <- w + Y_LL^-1 diag(conj v)^-1 conj(s(v))`,
//! in physical and normalized (`u = W^-1 v`) coordinates.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::NetworkModel;
use crate::scenario::{Injection, LinearizedScenario, Scenario};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VoltVarMode {
    /// Slope-intercept model fixed at the initial voltage.
    Linearized,
    /// Exact curve re-evaluated at every iterate.
    #[default]
    Piecewise,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Stop when `max_k |v_k^(l+1) - v_k^(l)| / |w_k| <= tol`.
    pub tol: f64,
    pub max_iter: usize,
    /// Divergence box on `|u|`.
    pub u_lower: f64,
    pub u_upper: f64,
    pub mode: VoltVarMode,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 200,
            u_lower: 0.2,
            u_upper: 5.0,
            mode: VoltVarMode::Piecewise,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return bad("tol must be positive and finite");
        }
        if self.max_iter == 0 {
            return bad("max_iter must be at least 1");
        }
        if !(self.u_lower >= 0.0 && self.u_lower < self.u_upper) {
            return bad("divergence box needs 0 <= u_lower < u_upper");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerFlowStatus {
    Converged,
    MaxIter,
    Diverged,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PowerFlowResult {
    pub status: PowerFlowStatus,
    pub iterations: usize,
    /// Last iterate, volts.
    pub v: Vec<Complex64>,
    /// `v / w`.
    pub u: Vec<Complex64>,
    /// Last update size `max_k |dv_k| / |w_k|`.
    pub mismatch: f64,
    /// Injections at `v`, VA, injection-positive.
    pub injection: Vec<Complex64>,
    /// Largest nodal power mismatch in per unit of the scenario base.
    pub max_power_mismatch: f64,
}

impl PowerFlowResult {
    pub fn converged(&self) -> bool {
        self.status == PowerFlowStatus::Converged
    }

    pub fn u_abs(&self) -> Vec<f64> {
        self.u.iter().map(|z| z.norm()).collect()
    }
}

fn check_dim(model: &NetworkModel, got: usize) -> Result<()> {
    if got != model.n_pq() {
        return Err(Error::Dimension {
            expected: model.n_pq(),
            got,
        });
    }
    Ok(())
}

/// `w + Y_LL^-1 diag(conj v)^-1 conj(s)` for given injections `s`.
pub fn step_with_injection(model: &NetworkModel, s: &[Complex64], v: &[Complex64]) -> Result<Vec<Complex64>> {
    check_dim(model, v.len())?;
    check_dim(model, s.len())?;
    let mut rhs = Vec::with_capacity(v.len());
    for (k, (sk, vk)) in s.iter().zip(v).enumerate() {
        if vk.norm() == 0.0 {
            return Err(Error::ZeroVoltage(model.bus_at(k).0));
        }
        rhs.push(sk.conj() / vk.conj());
    }
    let mut x = model.solve_yll(&rhs)?;
    for (xk, wk) in x.iter_mut().zip(model.w()) {
        *xk += wk;
    }
    Ok(x)
}

/// One physical iteration with `s = -j diag(m)|v| + s_const`.
pub fn fixed_point_step(
    model: &NetworkModel,
    s_const: &[Complex64],
    m: &[f64],
    v: &[Complex64],
) -> Result<Vec<Complex64>> {
    check_dim(model, m.len())?;
    let s: Vec<Complex64> = s_const
        .iter()
        .zip(m)
        .zip(v)
        .map(|((s, m), vk)| s - Complex64::new(0.0, m * vk.norm()))
        .collect();
    step_with_injection(model, &s, v)
}

/// One normalized iteration `1 + W* diag(conj u)^-1 conj(-jM|u| + s_const)`,
/// evaluated with a single sparse solve.
pub fn normalized_step(
    model: &NetworkModel,
    s_const: &[Complex64],
    weights: &[f64],
    u: &[Complex64],
) -> Result<Vec<Complex64>> {
    check_dim(model, u.len())?;
    check_dim(model, s_const.len())?;
    check_dim(model, weights.len())?;
    let w = model.w();
    let mut rhs = Vec::with_capacity(u.len());
    for k in 0..u.len() {
        if u[k].norm() == 0.0 {
            return Err(Error::ZeroVoltage(model.bus_at(k).0));
        }
        let s = s_const[k] - Complex64::new(0.0, weights[k] * u[k].norm());
        rhs.push(s.conj() / u[k].conj() / w[k].conj());
    }
    let z = model.solve_yll(&rhs)?;
    Ok(z.iter().zip(w).map(|(zk, wk)| 1.0 + zk / wk).collect())
}

/// `||F(v) - v||_inf / ||w||_inf` for the given injection model.
pub fn fixed_point_residual(model: &NetworkModel, injection: &Injection, v: &[Complex64]) -> Result<f64> {
    let s = injection.evaluate(model, v);
    let next = step_with_injection(model, &s, v)?;
    let num = next.iter().zip(v).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    let den = model.w_abs().iter().copied().fold(0.0, f64::max);
    Ok(num / den)
}

/// Per-bus `|v_k conj(i_k) - s_k(v)| / base` with `i = Y_L0 v0 + Y_LL v`.
pub fn power_mismatch_with(
    model: &NetworkModel,
    injection: &Injection,
    v: &[Complex64],
    base: f64,
) -> Result<Vec<f64>> {
    let i = model.nodal_currents(v)?;
    let s = injection.evaluate(model, v);
    Ok(v.iter()
        .zip(&i)
        .zip(&s)
        .map(|((vk, ik), sk)| (vk * ik.conj() - sk).norm() / base)
        .collect())
}

/// Nodal power mismatch against the exact curves, in per unit of the
/// scenario's power base.
pub fn power_mismatch(model: &NetworkModel, scenario: &Scenario, v: &[Complex64]) -> Result<Vec<f64>> {
    scenario.check_dim(model)?;
    power_mismatch_with(model, &Injection::Piecewise(scenario), v, scenario.power_base())
}

/// Solves the scenario from `v_init` (default `w`).
pub fn solve(
    model: &NetworkModel,
    scenario: &Scenario,
    config: &SolverConfig,
    v_init: Option<&[Complex64]>,
) -> Result<PowerFlowResult> {
    config.validate()?;
    scenario.check_dim(model)?;
    let v0 = match v_init {
        Some(v) => {
            check_dim(model, v.len())?;
            v.to_vec()
        }
        None => model.w().to_vec(),
    };
    let linearized;
    let injection = match config.mode {
        VoltVarMode::Piecewise => Injection::Piecewise(scenario),
        VoltVarMode::Linearized => {
            let u_ref: Vec<f64> = v0.iter().zip(model.w_abs()).map(|(v, w)| v.norm() / w).collect();
            linearized = scenario.linearize(model, &u_ref)?;
            Injection::Linearized(&linearized)
        }
    };
    let mut result = iterate(model, config, v0, |v| {
        let s = injection.evaluate(model, v);
        step_with_injection(model, &s, v)
    })?;
    finish(model, &injection, scenario.power_base(), &mut result)?;
    log::debug!(
        "scenario '{}': {:?} after {} iterations (update {:.3e})",
        scenario.id,
        result.status,
        result.iterations,
        result.mismatch
    );
    Ok(result)
}

/// Same iteration carried out in normalized coordinates with a fixed
/// linearization, mapped back to volts at the end.
pub fn solve_normalized(
    model: &NetworkModel,
    linearized: &LinearizedScenario,
    config: &SolverConfig,
    u_init: Option<&[Complex64]>,
    power_base: f64,
) -> Result<PowerFlowResult> {
    config.validate()?;
    let weights = linearized.weights(model);
    let w = model.w();
    let u0 = match u_init {
        Some(u) => {
            check_dim(model, u.len())?;
            u.to_vec()
        }
        None => vec![Complex64::new(1.0, 0.0); model.n_pq()],
    };
    let v0: Vec<Complex64> = u0.iter().zip(w).map(|(u, w)| u * w).collect();
    let mut result = iterate(model, config, v0, |v| {
        let u: Vec<Complex64> = v.iter().zip(w).map(|(v, w)| v / w).collect();
        let next = normalized_step(model, &linearized.s_const, &weights, &u)?;
        Ok(next.iter().zip(w).map(|(u, w)| u * w).collect())
    })?;
    finish(model, &Injection::Linearized(linearized), power_base, &mut result)?;
    Ok(result)
}

fn iterate<F>(model: &NetworkModel, config: &SolverConfig, mut v: Vec<Complex64>, mut step: F) -> Result<PowerFlowResult>
where
    F: FnMut(&[Complex64]) -> Result<Vec<Complex64>>,
{
    let w_abs = model.w_abs();
    let mut status = PowerFlowStatus::MaxIter;
    let mut iterations = 0;
    let mut delta = f64::INFINITY;
    for l in 1..=config.max_iter {
        iterations = l;
        let next = match step(&v) {
            Ok(next) => next,
            Err(Error::ZeroVoltage(_)) => {
                status = PowerFlowStatus::Diverged;
                break;
            }
            Err(e) => return Err(e),
        };
        let escaped = next.iter().zip(w_abs).any(|(vk, wk)| {
            let u = vk.norm() / wk;
            !(u >= config.u_lower && u <= config.u_upper)
        });
        delta = next
            .iter()
            .zip(&v)
            .zip(w_abs)
            .map(|((a, b), wk)| (a - b).norm() / wk)
            .fold(0.0, f64::max);
        v = next;
        if escaped {
            status = PowerFlowStatus::Diverged;
            break;
        }
        if delta <= config.tol {
            status = PowerFlowStatus::Converged;
            break;
        }
    }
    let u = v.iter().zip(model.w()).map(|(v, w)| v / w).collect();
    Ok(PowerFlowResult {
        status,
        iterations,
        v,
        u,
        mismatch: delta,
        injection: Vec::new(),
        max_power_mismatch: f64::NAN,
    })
}

fn finish(model: &NetworkModel, injection: &Injection, base: f64, result: &mut PowerFlowResult) -> Result<()> {
    result.injection = injection.evaluate(model, &result.v);
    if result.v.iter().all(|z| z.is_finite()) {
        let pm = power_mismatch_with(model, injection, &result.v, base)?;
        result.max_power_mismatch = pm.into_iter().fold(0.0, f64::max);
    }
    Ok(())
}
