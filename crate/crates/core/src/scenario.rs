//! Loading scenarios: per-bus constant power and Volt-Var settings, and the
//! linearized form `s = -j diag(m)|v| + s_const` used by the solver and the
//! certificate.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::certificate::SlopeSource;
use crate::error::{Error, Result};
use crate::network::NetworkModel;
use crate::voltvar::{BusInjectionSpec, SlopeConvention};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    /// One entry per PQ position of the model.
    pub buses: Vec<BusInjectionSpec>,
    pub convention: SlopeConvention,
    /// Power base in VA for per-unit mismatch reporting.
    pub power_base: Option<f64>,
    pub slope_source: SlopeSource,
}

/// Slopes `m` in VAR/V and voltage-independent injections `s_const` in VA.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearizedScenario {
    pub m: Vec<f64>,
    pub s_const: Vec<Complex64>,
}

impl LinearizedScenario {
    pub fn zeros(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            s_const: vec![Complex64::new(0.0, 0.0); n],
        }
    }

    /// `M = m ⊙ |w|`, in VAR per unit.
    pub fn weights(&self, model: &NetworkModel) -> Vec<f64> {
        self.m.iter().zip(model.w_abs()).map(|(m, w)| m * w).collect()
    }

    /// `-j m_k |v_k| + s_const_k`.
    pub fn injection(&self, v: &[Complex64]) -> Vec<Complex64> {
        v.iter()
            .zip(&self.m)
            .zip(&self.s_const)
            .map(|((vk, m), s)| s - Complex64::new(0.0, m * vk.norm()))
            .collect()
    }
}

impl Scenario {
    /// Scenario with no injections anywhere.
    pub fn empty(id: impl Into<String>, n: usize) -> Self {
        Self {
            id: id.into(),
            buses: vec![BusInjectionSpec::default(); n],
            convention: SlopeConvention::default(),
            power_base: None,
            slope_source: SlopeSource::default(),
        }
    }

    pub fn check_dim(&self, model: &NetworkModel) -> Result<()> {
        if self.buses.len() != model.n_pq() {
            return Err(Error::Scenario {
                id: self.id.clone(),
                reason: format!(
                    "{} bus entries for a network with {} PQ buses",
                    self.buses.len(),
                    model.n_pq()
                ),
            });
        }
        Ok(())
    }

    /// Linearizes every curve at the per-unit magnitudes `u_ref`.
    pub fn linearize(&self, model: &NetworkModel, u_ref: &[f64]) -> Result<LinearizedScenario> {
        self.check_dim(model)?;
        if u_ref.len() != model.n_pq() {
            return Err(Error::Dimension {
                expected: model.n_pq(),
                got: u_ref.len(),
            });
        }
        let mut out = LinearizedScenario::zeros(model.n_pq());
        for (k, spec) in self.buses.iter().enumerate() {
            let lin = spec.linearize(u_ref[k], model.w_abs()[k], self.convention);
            out.m[k] = lin.slope_m;
            out.s_const[k] = spec.s_const(&lin);
        }
        Ok(out)
    }

    /// Exact (piecewise) injections at voltage `v`.
    pub fn injection(&self, model: &NetworkModel, v: &[Complex64]) -> Vec<Complex64> {
        self.buses
            .iter()
            .zip(v)
            .zip(model.w_abs())
            .map(|((spec, vk), wk)| spec.injection(vk.norm(), *wk))
            .collect()
    }

    /// Declared base, else the largest constant injection magnitude, else 1 VA.
    pub fn power_base(&self) -> f64 {
        if let Some(b) = self.power_base {
            return b;
        }
        let largest = self
            .buses
            .iter()
            .map(|b| Complex64::new(b.p_const, b.q_const).norm())
            .fold(0.0, f64::max);
        if largest > 0.0 {
            largest
        } else {
            1.0
        }
    }
}

/// Source of injections for the solver.
#[derive(Clone, Copy, Debug)]
pub enum Injection<'a> {
    /// Curves re-evaluated at every iterate.
    Piecewise(&'a Scenario),
    /// Fixed slope-intercept model.
    Linearized(&'a LinearizedScenario),
}

impl Injection<'_> {
    pub fn evaluate(&self, model: &NetworkModel, v: &[Complex64]) -> Vec<Complex64> {
        match self {
            Injection::Piecewise(s) => s.injection(model, v),
            Injection::Linearized(l) => l.injection(v),
        }
    }
}
