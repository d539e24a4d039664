//! Plain-text views of the report records.

use std::fmt::Write;

use pfcert::io::bundled::Bundle;
use pfcert::io::report::{CertificateRecord, LimitsRecord, PowerFlowRecord, ScreeningRecord};

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_string(), |v| format!("{v:.6}"))
}

pub fn power_flow(r: &PowerFlowRecord) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "scenario  {}", r.scenario);
    let _ = writeln!(s, "status    {:?} after {} iterations", r.status, r.iterations);
    let _ = writeln!(s, "mismatch  {:.3e} p.u.", r.max_power_mismatch_pu);
    let _ = writeln!(s, "{:>8} {:>9} {:>10} {:>10} {:>10}", "bus", "|u|", "angle", "P kW", "Q kVAR");
    for b in &r.buses {
        let _ = writeln!(
            s,
            "{:>8} {:>9.5} {:>10.4} {:>10.3} {:>10.3}",
            b.name, b.u_pu, b.angle_deg, b.p_kw, b.q_kvar
        );
    }
    s
}

pub fn certificate(r: &CertificateRecord) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "anchor        {}", r.anchor);
    let _ = writeln!(
        s,
        "scenario      {} ({} slopes from {})",
        r.scenario,
        format!("{:?}", r.slope_convention).to_lowercase(),
        format!("{:?}", r.slope_source).to_lowercase()
    );
    let _ = writeln!(s, "u_min         {:.6}", r.u_min);
    let _ = writeln!(s, "xi(M)         {:.6}", r.xi_m);
    let _ = writeln!(s, "xi(s_hat)     {:.6}", r.xi_s_hat);
    let _ = writeln!(s, "xi(residual)  {:.6}", r.xi_residual);
    let _ = writeln!(s, "condition a   {:.6}", r.cond_a);
    let _ = writeln!(s, "condition b   {:.6}", r.delta);
    let _ = writeln!(s, "rho           {}", opt(r.rho));
    let _ = writeln!(
        s,
        "verdict       {}",
        if r.solvable { "solvable" } else { "not certified" }
    );
    for n in &r.notes {
        let _ = writeln!(s, "note          {n}");
    }
    s
}

pub fn screening(r: &ScreeningRecord) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "anchor {}  flag {}", r.anchor, r.flag);
    let _ = writeln!(
        s,
        "{:<28} {:>9} {:>10} {:>10} {:>10}  fallback",
        "scenario", "certified", "cond_a", "delta", "rho"
    );
    for x in &r.scenarios {
        let fallback = match (x.fallback_used, x.fallback_status) {
            (false, _) => "-".to_string(),
            (true, Some(st)) => format!("{st:?} ({} it)", x.fallback_iterations.unwrap_or(0)),
            (true, None) => "error".to_string(),
        };
        let _ = writeln!(
            s,
            "{:<28} {:>9} {:>10.6} {:>10.6} {:>10}  {}",
            x.id,
            if x.certified { "yes" } else { "no" },
            x.cond_a,
            x.delta,
            opt(x.rho),
            fallback
        );
    }
    if r.early_returned {
        let _ = writeln!(s, "stopped at the first scenario that failed both routes");
    }
    s
}

pub fn limits(r: &LimitsRecord) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "p_max  {:.6} W", r.p_max_w);
    let _ = writeln!(s, "q_max  {:.6} VAR", r.q_max_var);
    if let (Some(p), Some(q), Some(ok)) = (r.p_w, r.q_var, r.solvable) {
        let _ = writeln!(s, "load   P = {p} W, Q = {q} VAR");
        let _ = writeln!(s, "solvable  {}", if ok { "yes" } else { "no" });
        for v in &r.voltages_volts {
            let _ = writeln!(s, "root   |V| = {v:.6} V");
        }
    }
    s
}

pub fn bundles(list: &[Bundle]) -> String {
    let mut s = String::new();
    for b in list {
        let _ = writeln!(s, "{:<8} {}", b.name, b.description);
        let _ = writeln!(s, "         feeder    {}", b.path(b.feeder));
        for a in b.anchors {
            let _ = writeln!(s, "         anchor    {}", b.path(a));
        }
        for c in b.scenarios {
            let _ = writeln!(s, "         scenario  {}", b.path(c));
        }
    }
    s
}
