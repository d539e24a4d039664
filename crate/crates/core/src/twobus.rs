//! Single load behind a series impedance fed from an infinite bus.
//!
//! With `t = |V|²`, the receiving-end voltage satisfies
//! `t² + (2(PR + QX) - E²) t + (P² + Q²)(R² + X²) = 0`.

use serde::{Deserialize, Serialize};

/// `E` in volts, `R`, `X` in ohms, load `P`, `Q` consumption-positive.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoBusCase {
    pub e: f64,
    pub r: f64,
    pub x: f64,
    pub p: f64,
    pub q: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoBusSolution {
    pub solvable: bool,
    /// Positive voltage magnitudes, high-voltage branch first.
    pub voltages: Vec<f64>,
}

/// Largest active power at `Q = 0`, `E²/(2X²)(√(R²+X²) - R)`, written as
/// `E² / (2(R + √(R²+X²)))` so that `X = 0` gives `E²/(4R)`.
pub fn p_max(e: f64, r: f64, x: f64) -> f64 {
    e * e / (2.0 * (r + r.hypot(x)))
}

/// Largest reactive power at `P = 0`; `q_max(E, R, X) = p_max(E, X, R)`.
pub fn q_max(e: f64, r: f64, x: f64) -> f64 {
    e * e / (2.0 * (x + r.hypot(x)))
}

impl TwoBusCase {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.e > 0.0 && self.e.is_finite()) {
            return Err("E must be positive".into());
        }
        if !(self.r >= 0.0 && self.x >= 0.0) {
            return Err("R and X must be non-negative".into());
        }
        if !(self.r.hypot(self.x) > 0.0) {
            return Err("R and X cannot both be zero".into());
        }
        if !(self.p.is_finite() && self.q.is_finite()) {
            return Err("P and Q must be finite".into());
        }
        Ok(())
    }

    pub fn p_max(&self) -> f64 {
        p_max(self.e, self.r, self.x)
    }

    pub fn q_max(&self) -> f64 {
        q_max(self.e, self.r, self.x)
    }

    fn coefficients(&self) -> (f64, f64) {
        let b = 2.0 * (self.p * self.r + self.q * self.x) - self.e * self.e;
        let c = (self.p * self.p + self.q * self.q) * (self.r * self.r + self.x * self.x);
        (b, c)
    }

    /// `(2(PR + QX) - E²)² - 4(P² + Q²)(R² + X²)`.
    pub fn discriminant(&self) -> f64 {
        let (b, c) = self.coefficients();
        b * b - 4.0 * c
    }

    pub fn solve(&self) -> TwoBusSolution {
        let (b, c) = self.coefficients();
        let d = b * b - 4.0 * c;
        if d < 0.0 {
            return TwoBusSolution {
                solvable: false,
                voltages: Vec::new(),
            };
        }
        // Cancellation-free pair of roots.
        let q = -0.5 * (b + b.signum() * d.sqrt());
        let mut roots = if q == 0.0 { vec![0.0] } else { vec![q, c / q] };
        roots.retain(|&t| t > 0.0);
        roots.sort_by(|a, b| b.total_cmp(a));
        roots.dedup();
        let voltages: Vec<f64> = roots.into_iter().map(f64::sqrt).collect();
        TwoBusSolution {
            solvable: !voltages.is_empty(),
            voltages,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn case(e: f64, r: f64, x: f64, p: f64, q: f64) -> TwoBusCase {
        TwoBusCase { e, r, x, p, q }
    }

    #[test]
    fn closed_forms() {
        assert!((p_max(240.0, 0.0, 0.11) - 240.0 * 240.0 / 0.22).abs() < 1e-9);
        assert!((q_max(240.0, 0.07, 0.0) - 240.0 * 240.0 / 0.14).abs() < 1e-9);
        let x = 0.3;
        assert!((p_max(100.0, x, x) - 1e4 * (2f64.sqrt() - 1.0) / (2.0 * x)).abs() < 1e-9);
        let literal = 240f64.powi(2) / (2.0 * 0.11f64.powi(2)) * (-0.07 + 0.07f64.hypot(0.11));
        assert!((p_max(240.0, 0.07, 0.11) - literal).abs() < 1e-9 * literal);
        assert!((p_max(240.0, 0.07, 0.11) - 143_724.0).abs() < 0.1);
        assert!((q_max(240.0, 0.07, 0.11) - 119_808.3).abs() < 0.1);
        assert_eq!(p_max(240.0, 0.05, 0.0), 240.0 * 240.0 / 0.2);
    }

    #[test]
    fn discriminant_sign_around_limits() {
        let base = case(240.0, 0.07, 0.11, 0.0, 0.0);
        let pm = base.p_max();
        let qm = base.q_max();
        let scale = 240f64.powi(4);
        assert!(case(240.0, 0.07, 0.11, pm, 0.0).discriminant().abs() <= 1e-9 * scale);
        assert!(case(240.0, 0.07, 0.11, 0.0, qm).discriminant().abs() <= 1e-9 * scale);
        assert!(case(240.0, 0.07, 0.11, pm * 1.001, 0.0).discriminant() < 0.0);
        assert!(case(240.0, 0.07, 0.11, pm * 0.999, 0.0).discriminant() > 0.0);
    }

    #[test]
    fn roots_near_and_past_the_nose() {
        let pm = p_max(240.0, 0.07, 0.11);
        let near = case(240.0, 0.07, 0.11, 0.999 * pm, 0.0).solve();
        assert!(near.solvable);
        assert_eq!(near.voltages.len(), 2);
        assert!((near.voltages[0] - near.voltages[1]) / 240.0 < 0.05);
        let past = case(240.0, 0.07, 0.11, 1.001 * pm, 0.0).solve();
        assert!(!past.solvable && past.voltages.is_empty());
    }

    #[test]
    fn no_load_root_is_source_voltage() {
        let s = case(240.0, 0.07, 0.11, 0.0, 0.0).solve();
        assert!(s.solvable);
        assert_eq!(s.voltages, vec![240.0]);
    }

    #[test]
    fn validation() {
        assert!(case(0.0, 0.1, 0.1, 0.0, 0.0).validate().is_err());
        assert!(case(1.0, 0.0, 0.0, 0.0, 0.0).validate().is_err());
        assert!(case(1.0, -0.1, 0.1, 0.0, 0.0).validate().is_err());
        assert!(case(1.0, 0.1, 0.1, 0.0, 0.0).validate().is_ok());
    }

    proptest! {
        #[test]
        fn roots_satisfy_quadratic(e in 100.0f64..1e4, r in 0.0f64..1.0, x in 0.01f64..1.0, fp in 0.0f64..0.99, fq in -0.5f64..0.5) {
            let c0 = case(e, r, x, 0.0, 0.0);
            let c1 = case(e, r, x, fp * c0.p_max(), fq * fp * c0.p_max());
            for v in c1.solve().voltages {
                let t = v * v;
                let (b, c) = c1.coefficients();
                prop_assert!((t * t + b * t + c).abs() <= 1e-9 * e.powi(4));
            }
        }

        #[test]
        fn symmetry_and_monotone_shrink(e in 1.0f64..1e4, r in 0.001f64..1.0, x in 0.001f64..1.0, dr in 0.0f64..1.0) {
            prop_assert!((q_max(e, r, x) - p_max(e, x, r)).abs() <= 1e-12 * q_max(e, r, x));
            prop_assert!(p_max(e, r + dr, x) <= p_max(e, r, x));
            prop_assert!(q_max(e, r, x + dr) <= q_max(e, r, x));
        }
    }
}
