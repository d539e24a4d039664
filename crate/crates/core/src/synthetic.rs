//! Synthetic feeders for property and scaling checks.

use num_complex::Complex64;

use crate::error::Result;
use crate::network::{build_network, BusId, LineSpec, NetworkModel};
use crate::scenario::Scenario;
use crate::voltvar::{BusInjectionSpec, VoltVarCurve};

/// Chain `0 - 1 - ... - n` whose `n` equal segments add up to
/// `total_impedance`.
pub fn radial_chain(n: usize, total_impedance: Complex64, slack_voltage: Complex64) -> Result<NetworkModel> {
    let z = total_impedance / n as f64;
    let lines: Vec<_> = (0..n).map(|k| LineSpec::new(k, k + 1, z.re, z.im)).collect();
    build_network(&lines, BusId(0), slack_voltage)
}

/// Load of `total_p` W and `total_q` VAR (consumption-positive) spread evenly,
/// with a symmetric Volt-Var curve generating up to `total_qa` VAR at
/// `va` on every bus.
pub fn chain_scenario(n: usize, total_p: f64, total_q: f64, total_qa: f64, va: f64) -> Result<Scenario> {
    let curve = VoltVarCurve::symmetric(total_qa / n as f64, va)?;
    let mut s = Scenario::empty(format!("chain-{n}"), n);
    for b in &mut s.buses {
        *b = BusInjectionSpec::load(total_p / n as f64, total_q / n as f64).with_curve(curve);
    }
    Ok(s)
}
