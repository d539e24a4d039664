//! Piecewise Volt-Var curves and their slope-intercept linearization.
//!
//! Reactive power is injection-positive throughout: `Qa >= 0` is generated
//! at low voltage, `Qd <= 0` is absorbed at high voltage.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the slope `m` of a linearized curve is chosen.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SlopeConvention {
    /// Slope of the segment containing the reference voltage; the left
    /// segment wins at a breakpoint.
    Local,
    /// Half the chord slope between the saturation points,
    /// `(Qa - Qd) / (2 (Vd - Va))`, i.e. `Qa / (Vd - Va)` for a symmetric curve.
    #[default]
    Span,
}

/// Curve with breakpoints `Va <= Vb <= Vc <= Vd` in per unit of the bus
/// no-load voltage and saturation levels `Qa`, `Qd` in VAR.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VoltVarCurve {
    va: f64,
    vb: f64,
    vc: f64,
    vd: f64,
    qa: f64,
    qd: f64,
}

impl VoltVarCurve {
    pub fn new(va: f64, vb: f64, vc: f64, vd: f64, qa: f64, qd: f64) -> Result<Self> {
        let bad = |msg: String| Err(Error::InvalidCurve(msg));
        if ![va, vb, vc, vd, qa, qd].iter().all(|x| x.is_finite()) {
            return bad("non-finite parameter".into());
        }
        if !(va > 0.0 && va <= vb && vb <= vc && vc <= vd) {
            return bad(format!(
                "breakpoints must satisfy 0 < Va <= Vb <= Vc <= Vd, got {va}, {vb}, {vc}, {vd}"
            ));
        }
        if qa < 0.0 || qd > 0.0 {
            return bad(format!("need Qa >= 0 >= Qd (injection-positive), got Qa = {qa}, Qd = {qd}"));
        }
        if qa != 0.0 && va == vb {
            return bad("Va = Vb with Qa != 0 makes the curve discontinuous".into());
        }
        if qd != 0.0 && vc == vd {
            return bad("Vc = Vd with Qd != 0 makes the curve discontinuous".into());
        }
        Ok(Self { va, vb, vc, vd, qa, qd })
    }

    /// Curve generating `qa` VAR at `va`, zero crossing at 1.0 p.u. with no
    /// deadband, mirrored to absorb `qa` at `2 - va`.
    pub fn symmetric(qa: f64, va: f64) -> Result<Self> {
        Self::new(va, 1.0, 1.0, 2.0 - va, qa, -qa)
    }

    pub fn breakpoints(&self) -> [f64; 4] {
        [self.va, self.vb, self.vc, self.vd]
    }

    pub fn qa(&self) -> f64 {
        self.qa
    }

    pub fn qd(&self) -> f64 {
        self.qd
    }

    /// Reactive injection in VAR at voltage magnitude `v` (per unit).
    pub fn evaluate(&self, v: f64) -> f64 {
        if v <= self.va {
            self.qa
        } else if v <= self.vb {
            self.qa * (self.vb - v) / (self.vb - self.va)
        } else if v <= self.vc {
            0.0
        } else if v < self.vd {
            self.qd * (v - self.vc) / (self.vd - self.vc)
        } else {
            self.qd
        }
    }

    /// Slope magnitude `-dQ/dv` in VAR per unit.
    pub fn slope(&self, v_ref: f64, convention: SlopeConvention) -> f64 {
        match convention {
            SlopeConvention::Span => {
                if self.vd > self.va {
                    (self.qa - self.qd) / (2.0 * (self.vd - self.va))
                } else {
                    0.0
                }
            }
            SlopeConvention::Local => {
                if v_ref <= self.va {
                    0.0
                } else if v_ref <= self.vb {
                    self.qa / (self.vb - self.va)
                } else if v_ref <= self.vc {
                    0.0
                } else if v_ref <= self.vd {
                    -self.qd / (self.vd - self.vc)
                } else {
                    0.0
                }
            }
        }
    }

    /// Tangent-style approximation `Q(v) ~ -m |v| + q0` through the curve
    /// value at `v_ref` (per unit). `v_base` converts the slope to VAR/V.
    pub fn linearize(&self, v_ref: f64, convention: SlopeConvention, v_base: f64) -> LinearVoltVar {
        let m_pu = self.slope(v_ref, convention);
        LinearVoltVar {
            slope_m: m_pu / v_base,
            intercept_q0: self.evaluate(v_ref) + m_pu * v_ref,
        }
    }
}

/// `q(|v|) = -slope_m |v| + intercept_q0`, with `|v|` in volts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LinearVoltVar {
    pub slope_m: f64,
    pub intercept_q0: f64,
}

impl LinearVoltVar {
    pub fn evaluate(&self, v_mag_volts: f64) -> f64 {
        -self.slope_m * v_mag_volts + self.intercept_q0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum VoltVarSetting {
    Curve(VoltVarCurve),
    Linear(LinearVoltVar),
}

/// Per-bus injection: constant power plus an optional Volt-Var inverter.
/// `p_const` and `q_const` are injection-positive.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BusInjectionSpec {
    pub p_const: f64,
    pub q_const: f64,
    pub voltvar: Option<VoltVarSetting>,
    /// Overrides the scenario-wide slope convention for this bus.
    pub convention: Option<SlopeConvention>,
}

impl BusInjectionSpec {
    /// Constant load in the consumption-positive convention of feeder tables.
    pub fn load(p_watts: f64, q_var: f64) -> Self {
        Self {
            p_const: -p_watts,
            q_const: -q_var,
            ..Self::default()
        }
    }

    pub fn with_curve(mut self, curve: VoltVarCurve) -> Self {
        self.voltvar = Some(VoltVarSetting::Curve(curve));
        self
    }

    pub fn linearize(&self, v_ref: f64, v_base: f64, default: SlopeConvention) -> LinearVoltVar {
        match self.voltvar {
            None => LinearVoltVar::default(),
            Some(VoltVarSetting::Linear(lin)) => lin,
            Some(VoltVarSetting::Curve(curve)) => {
                curve.linearize(v_ref, self.convention.unwrap_or(default), v_base)
            }
        }
    }

    /// Voltage-independent part `p + j (q0 + q)`.
    pub fn s_const(&self, lin: &LinearVoltVar) -> Complex64 {
        Complex64::new(self.p_const, self.q_const + lin.intercept_q0)
    }

    /// Exact injection at voltage magnitude `v_mag_volts`, evaluating the
    /// curve (not its linearization).
    pub fn injection(&self, v_mag_volts: f64, v_base: f64) -> Complex64 {
        let q_vv = match self.voltvar {
            None => 0.0,
            Some(VoltVarSetting::Linear(lin)) => lin.evaluate(v_mag_volts),
            Some(VoltVarSetting::Curve(curve)) => curve.evaluate(v_mag_volts / v_base),
        };
        Complex64::new(self.p_const, self.q_const + q_vv)
    }
}
