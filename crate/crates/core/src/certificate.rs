//! Brouwer-type existence certificate around a known operating point.
//!
//! With `u_min = min_j |v̂_j / w_j|` and the operator
//! `ξ(d) = max_i Σ_j |W*_ij| |d_j|`, a candidate scenario has a power-flow
//! solution in `{u : |u_j - û_j| <= ρ}` when
//!
//! ```text
//! a = u_min - ξ(ŝ)/u_min - ξ(M) > 0
//! Δ = a² - 4 ξ(s_const - ŝ - jM|û|) > 0
//! ρ = (a - √Δ) / 2
//! ```

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::network::{NetworkModel, RadialTree};
use crate::powerflow::{power_mismatch, solve, SolverConfig};
use crate::scenario::Scenario;
use crate::voltvar::SlopeConvention;

/// Strict-inequality guard on `a` and `Δ`.
pub const SOLVABLE_GUARD: f64 = 1e-12;
/// Values this close to zero get a margin note.
pub const BORDERLINE: f64 = 1e-9;

/// Which Volt-Var slopes enter `ξ(M)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SlopeSource {
    /// Slopes of the candidate scenario.
    #[default]
    Candidate,
    /// Slopes of the anchor's own Volt-Var settings.
    Anchor,
}

/// Known power-flow solution `(v̂, ŝ)`.
#[derive(Clone, Debug)]
pub struct OperatingPoint {
    v_hat: Vec<Complex64>,
    s_hat: Vec<Complex64>,
    u_hat: Vec<Complex64>,
    u_abs: Vec<f64>,
    scenario: Scenario,
    mismatch: f64,
}

impl OperatingPoint {
    pub const MISMATCH_LIMIT: f64 = 1e-6;

    /// Accepts `v_hat` only if it satisfies the scenario's power-flow
    /// equations to [`Self::MISMATCH_LIMIT`] per unit.
    pub fn new(model: &NetworkModel, scenario: Scenario, v_hat: Vec<Complex64>) -> Result<Self> {
        scenario.check_dim(model)?;
        if v_hat.len() != model.n_pq() {
            return Err(Error::Dimension {
                expected: model.n_pq(),
                got: v_hat.len(),
            });
        }
        if let Some(k) = v_hat.iter().position(|v| !(v.norm() > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidAnchor(format!(
                "voltage at bus {} is zero or not finite",
                model.bus_at(k).0
            )));
        }
        let mismatch = power_mismatch(model, &scenario, &v_hat)?
            .into_iter()
            .fold(0.0, f64::max);
        if !(mismatch <= Self::MISMATCH_LIMIT) {
            return Err(Error::AnchorMismatch {
                mismatch,
                limit: Self::MISMATCH_LIMIT,
            });
        }
        let s_hat = scenario.injection(model, &v_hat);
        let u_hat: Vec<Complex64> = v_hat.iter().zip(model.w()).map(|(v, w)| v / w).collect();
        let u_abs = u_hat.iter().map(|u| u.norm()).collect();
        Ok(Self {
            v_hat,
            s_hat,
            u_hat,
            u_abs,
            scenario,
            mismatch,
        })
    }

    /// Solves the scenario from `w` and anchors at the converged point.
    pub fn from_solve(model: &NetworkModel, scenario: Scenario, config: &SolverConfig) -> Result<Self> {
        let r = solve(model, &scenario, config, None)?;
        if !r.converged() {
            return Err(Error::InvalidAnchor(format!(
                "power flow for '{}' did not converge ({:?} after {} iterations)",
                scenario.id, r.status, r.iterations
            )));
        }
        Self::new(model, scenario, r.v)
    }

    pub fn v_hat(&self) -> &[Complex64] {
        &self.v_hat
    }

    pub fn s_hat(&self) -> &[Complex64] {
        &self.s_hat
    }

    pub fn u_hat(&self) -> &[Complex64] {
        &self.u_hat
    }

    pub fn u_abs(&self) -> &[f64] {
        &self.u_abs
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    /// Largest nodal power mismatch in per unit, measured at construction.
    pub fn mismatch(&self) -> f64 {
        self.mismatch
    }

    pub fn u_min(&self) -> f64 {
        self.u_abs.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Rows over which the maximum of `ξ` is taken on radial feeders.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowSelection {
    /// Leaves only, when path impedance magnitudes grow away from the slack.
    Auto,
    All,
}

#[derive(Clone, Copy, Debug)]
enum XiKind<'a> {
    Radial(&'a RadialTree),
    Dense(&'a DenseMatrix<f64>),
}

/// `ξ(d) = max_i Σ_j |W*_ij| |d_j|`. On shunt-free radial feeders this runs
/// in `O(N)` without forming `W*`; otherwise `|W*|` is materialized once.
#[derive(Clone, Copy, Debug)]
pub struct XiOperator<'a> {
    kind: XiKind<'a>,
    n: usize,
}

impl<'a> XiOperator<'a> {
    pub fn new(model: &'a NetworkModel) -> Self {
        match model.radial() {
            Some(tree) => Self {
                kind: XiKind::Radial(tree),
                n: model.n_pq(),
            },
            None => Self::dense(model),
        }
    }

    pub fn dense(model: &'a NetworkModel) -> Self {
        Self {
            kind: XiKind::Dense(model.abs_w_star()),
            n: model.n_pq(),
        }
    }

    pub fn is_radial(&self) -> bool {
        matches!(self.kind, XiKind::Radial(_))
    }

    pub fn eval(&self, d: &[Complex64]) -> f64 {
        let a: Vec<f64> = d.iter().map(|z| z.norm()).collect();
        self.eval_abs(&a)
    }

    pub fn eval_abs(&self, a: &[f64]) -> f64 {
        self.eval_abs_rows(a, RowSelection::Auto)
    }

    pub fn eval_abs_rows(&self, a: &[f64], rows: RowSelection) -> f64 {
        assert_eq!(a.len(), self.n, "xi argument length");
        match self.kind {
            XiKind::Dense(m) => (0..m.rows())
                .map(|i| m.row(i).iter().zip(a).map(|(x, y)| x * y).sum::<f64>())
                .fold(0.0, f64::max),
            XiKind::Radial(tree) => radial_xi(tree, a, rows),
        }
    }
}

fn radial_xi(tree: &RadialTree, a: &[f64], rows: RowSelection) -> f64 {
    // Subtree sums, children before parents.
    let mut sub = a.to_vec();
    for &i in tree.topo.iter().rev() {
        if let Some(p) = tree.parent[i] {
            sub[p] += sub[i];
        }
    }
    // Row sums r_i = r_parent + (|Z_i| - |Z_parent|) A_i / |v0|^2.
    let mut r = sub;
    for &i in &tree.topo {
        let base = tree.parent[i].map_or(0.0, |p| r[p]);
        r[i] = base + tree.dz[i] * r[i];
    }
    if rows == RowSelection::Auto && tree.monotone {
        tree.leaves.iter().map(|&i| r[i]).fold(0.0, f64::max)
    } else {
        r.into_iter().fold(0.0, f64::max)
    }
}

/// `ξ(d)` on the model.
pub fn xi(model: &NetworkModel, d: &[Complex64]) -> f64 {
    XiOperator::new(model).eval(d)
}

/// Scalar inputs of the certificate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateTerms {
    pub u_min: f64,
    pub xi_m: f64,
    pub xi_s_hat: f64,
    pub xi_residual: f64,
}

impl CertificateTerms {
    pub fn evaluate(&self) -> CertificateReport {
        let cond_a = self.u_min - self.xi_s_hat / self.u_min - self.xi_m;
        let delta = cond_a * cond_a - 4.0 * self.xi_residual;
        let solvable = cond_a > SOLVABLE_GUARD && delta > SOLVABLE_GUARD;
        let rho = solvable.then(|| (cond_a - delta.sqrt()) / 2.0);
        let rho_outer = solvable.then(|| (cond_a + delta.sqrt()) / 2.0);
        let mut margin_notes = Vec::new();
        for (name, x) in [("condition (a)", cond_a), ("discriminant", delta)] {
            if x.abs() <= BORDERLINE {
                margin_notes.push(format!("{name} = {x:.3e} is within {BORDERLINE:.0e} of zero"));
            }
        }
        if !solvable && cond_a > 0.0 && delta > 0.0 {
            margin_notes.push(format!("positive but below the {SOLVABLE_GUARD:.0e} guard; not certified"));
        }
        if !(cond_a > SOLVABLE_GUARD) {
            margin_notes.push("voltage-sensitivity terms exceed u_min".to_string());
        } else if !(delta > SOLVABLE_GUARD) {
            margin_notes.push("injection change too large for the anchor".to_string());
        }
        CertificateReport {
            u_min: self.u_min,
            xi_s_hat: self.xi_s_hat,
            xi_m: self.xi_m,
            xi_residual: self.xi_residual,
            cond_a,
            delta,
            rho,
            rho_outer,
            solvable,
            margin_notes,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub u_min: f64,
    pub xi_s_hat: f64,
    pub xi_m: f64,
    pub xi_residual: f64,
    /// `u_min - ξ(ŝ)/u_min - ξ(M)`.
    pub cond_a: f64,
    /// `cond_a² - 4 ξ(residual)`.
    pub delta: f64,
    /// Smaller root of `r² - a r + ξ(residual) = 0`: the certified radius.
    pub rho: Option<f64>,
    /// Larger root; every radius in `[rho, rho_outer]` gives a self-map.
    pub rho_outer: Option<f64>,
    pub solvable: bool,
    pub margin_notes: Vec<String>,
}

/// Anchor-only terms computed once and reused for every candidate.
#[derive(Clone, Debug)]
pub struct PreparedCertificate<'a> {
    model: &'a NetworkModel,
    anchor: &'a OperatingPoint,
    xi: XiOperator<'a>,
    u_min: f64,
    xi_s_hat: f64,
    /// `ξ(M)` of the anchor slopes under `[Local, Span]`.
    anchor_xi_m: [f64; 2],
}

impl<'a> PreparedCertificate<'a> {
    pub fn new(model: &'a NetworkModel, anchor: &'a OperatingPoint) -> Result<Self> {
        anchor.scenario.check_dim(model)?;
        let xi = XiOperator::new(model);
        let xi_s_hat = xi.eval(anchor.s_hat());
        let mut anchor_xi_m = [0.0; 2];
        for (slot, conv) in anchor_xi_m.iter_mut().zip([SlopeConvention::Local, SlopeConvention::Span]) {
            let mut sc = anchor.scenario.clone();
            sc.convention = conv;
            let lin = sc.linearize(model, anchor.u_abs())?;
            *slot = xi.eval_abs(&lin.weights(model));
        }
        Ok(Self {
            model,
            anchor,
            xi,
            u_min: anchor.u_min(),
            xi_s_hat,
            anchor_xi_m,
        })
    }

    pub fn anchor(&self) -> &OperatingPoint {
        self.anchor
    }

    pub fn terms(&self, candidate: &Scenario) -> Result<CertificateTerms> {
        // Linearized at |û|, s_const - jM|û| is the candidate's exact
        // injection at v̂ whatever the slope convention, so the residual is
        // taken from the curves directly.
        let lin = candidate.linearize(self.model, self.anchor.u_abs())?;
        let weights = lin.weights(self.model);
        let w_abs = self.model.w_abs();
        let residual: Vec<f64> = (0..weights.len())
            .map(|k| {
                let s = candidate.buses[k].injection(self.anchor.v_hat[k].norm(), w_abs[k]);
                (s - self.anchor.s_hat[k]).norm()
            })
            .collect();
        let xi_m = match candidate.slope_source {
            SlopeSource::Candidate => self.xi.eval_abs(&weights),
            SlopeSource::Anchor => match candidate.convention {
                SlopeConvention::Local => self.anchor_xi_m[0],
                SlopeConvention::Span => self.anchor_xi_m[1],
            },
        };
        Ok(CertificateTerms {
            u_min: self.u_min,
            xi_m,
            xi_s_hat: self.xi_s_hat,
            xi_residual: self.xi.eval_abs(&residual),
        })
    }

    pub fn evaluate(&self, candidate: &Scenario) -> Result<CertificateReport> {
        Ok(self.terms(candidate)?.evaluate())
    }
}

pub fn evaluate_certificate(
    model: &NetworkModel,
    anchor: &OperatingPoint,
    candidate: &Scenario,
) -> Result<CertificateReport> {
    PreparedCertificate::new(model, anchor)?.evaluate(candidate)
}

/// `|v_j - v̂_j| <= ρ |w_j|` for every bus.
pub fn in_domain(model: &NetworkModel, anchor: &OperatingPoint, v: &[Complex64], rho: f64) -> bool {
    v.len() == anchor.v_hat.len()
        && v.iter()
            .zip(&anchor.v_hat)
            .zip(model.w_abs())
            .all(|((v, vh), w)| (v - vh).norm() <= rho * w)
}

/// `|u_j - û_j| <= ρ` for every bus.
pub fn in_domain_normalized(anchor: &OperatingPoint, u: &[Complex64], rho: f64) -> bool {
    u.len() == anchor.u_hat.len() && u.iter().zip(&anchor.u_hat).all(|(u, uh)| (u - uh).norm() <= rho)
}
