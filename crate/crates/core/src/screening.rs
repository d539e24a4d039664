//! Batch solvability screening: certificate first, full power flow only for
//! scenarios the certificate cannot clear.

use std::fmt::Write as _;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certificate::{evaluate_certificate, CertificateReport, OperatingPoint, PreparedCertificate};
use crate::error::{Error, Result};
use crate::network::NetworkModel;
use crate::powerflow::{fixed_point_step, solve, PowerFlowStatus, SolverConfig};
use crate::scenario::Scenario;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScreeningOptions {
    /// Stop at the first scenario that fails both checks.
    pub early_return: bool,
    /// Move the anchor to each fallback solution.
    pub rolling_anchor: bool,
    /// Worker threads; `None` uses the global pool.
    pub jobs: Option<usize>,
    /// Reuse anchor-only terms across scenarios.
    pub precompute: bool,
    pub timing: bool,
    /// Fallback power-flow settings.
    pub solver: SolverConfig,
}

impl Default for ScreeningOptions {
    fn default() -> Self {
        Self {
            early_return: true,
            rolling_anchor: false,
            jobs: None,
            precompute: true,
            timing: false,
            solver: SolverConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTiming {
    /// Seconds per certificate evaluation.
    pub certificate: f64,
    /// Seconds spent in the fallback solve.
    pub fallback: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioOutcome {
    pub id: String,
    pub certified: bool,
    pub rho: Option<f64>,
    pub fallback_used: bool,
    pub fallback_converged: Option<bool>,
    pub fallback_status: Option<PowerFlowStatus>,
    pub fallback_iterations: Option<usize>,
    pub report: CertificateReport,
    pub timing: Option<ScenarioTiming>,
}

impl ScenarioOutcome {
    pub fn solvable(&self) -> bool {
        self.certified || self.fallback_converged == Some(true)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceTiming {
    pub n_pq: usize,
    /// Seconds per fixed-point iteration at the anchor.
    pub fixed_point_step: f64,
    /// Seconds for a full solve of the anchor scenario from `w`.
    pub full_solve: f64,
    pub full_solve_iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScreeningOutcome {
    /// 1 when every screened scenario is solvable, else 0.
    pub flag: u8,
    /// In input order; truncated after the first failure on early return.
    pub results: Vec<ScenarioOutcome>,
    pub early_returned: bool,
    pub reference: Option<ReferenceTiming>,
}

pub fn screen(
    model: &NetworkModel,
    anchor: &OperatingPoint,
    scenarios: &[Scenario],
    options: &ScreeningOptions,
) -> Result<ScreeningOutcome> {
    options.solver.validate()?;
    for s in scenarios {
        s.check_dim(model)?;
    }
    if scenarios.is_empty() {
        return Ok(ScreeningOutcome {
            flag: 1,
            results: Vec::new(),
            early_returned: false,
            reference: None,
        });
    }

    let results = if options.rolling_anchor {
        screen_rolling(model, anchor, scenarios, options)?
    } else {
        match options.jobs {
            Some(j) => rayon::ThreadPoolBuilder::new()
                .num_threads(j.max(1))
                .build()
                .map_err(|e| Error::InvalidConfig(format!("worker pool: {e}")))?
                .install(|| screen_fixed(model, anchor, scenarios, options))?,
            None => screen_fixed(model, anchor, scenarios, options)?,
        }
    };

    let failed = results.iter().any(|r| !r.solvable());
    let early_returned = options.early_return && failed && results.len() < scenarios.len();
    let reference = options.timing.then(|| reference_timing(model, anchor, &options.solver));
    Ok(ScreeningOutcome {
        flag: u8::from(!failed),
        results,
        early_returned,
        reference,
    })
}

fn screen_fixed(
    model: &NetworkModel,
    anchor: &OperatingPoint,
    scenarios: &[Scenario],
    options: &ScreeningOptions,
) -> Result<Vec<ScenarioOutcome>> {
    let prepared = if options.precompute {
        Some(PreparedCertificate::new(model, anchor)?)
    } else {
        None
    };
    let first_failure = AtomicUsize::new(usize::MAX);
    let raw: Vec<Option<Result<ScenarioOutcome>>> = scenarios
        .par_iter()
        .enumerate()
        .map(|(idx, sc)| {
            if options.early_return && idx > first_failure.load(Ordering::Acquire) {
                return None;
            }
            let out = evaluate_one(model, anchor, prepared.as_ref(), sc, options);
            if matches!(&out, Ok(o) if !o.solvable()) {
                first_failure.fetch_min(idx, Ordering::AcqRel);
            }
            Some(out)
        })
        .collect();

    let mut results = Vec::with_capacity(raw.len());
    for entry in raw {
        let out = entry.expect("scenarios before the first failure are always evaluated")?;
        let stop = options.early_return && !out.solvable();
        results.push(out);
        if stop {
            break;
        }
    }
    Ok(results)
}

fn screen_rolling(
    model: &NetworkModel,
    anchor: &OperatingPoint,
    scenarios: &[Scenario],
    options: &ScreeningOptions,
) -> Result<Vec<ScenarioOutcome>> {
    let mut current = anchor.clone();
    let mut results = Vec::with_capacity(scenarios.len());
    for sc in scenarios {
        let prepared = if options.precompute {
            Some(PreparedCertificate::new(model, &current)?)
        } else {
            None
        };
        let (out, solution) = evaluate_with_solution(model, &current, prepared.as_ref(), sc, options)?;
        let stop = options.early_return && !out.solvable();
        if let Some(v) = solution {
            match OperatingPoint::new(model, sc.clone(), v) {
                Ok(next) => current = next,
                Err(e) => log::warn!("keeping previous anchor after '{}': {e}", sc.id),
            }
        }
        results.push(out);
        if stop {
            break;
        }
    }
    Ok(results)
}

fn evaluate_one(
    model: &NetworkModel,
    anchor: &OperatingPoint,
    prepared: Option<&PreparedCertificate>,
    scenario: &Scenario,
    options: &ScreeningOptions,
) -> Result<ScenarioOutcome> {
    evaluate_with_solution(model, anchor, prepared, scenario, options).map(|(o, _)| o)
}

/// Returns the outcome and, when the fallback converged, its solution.
fn evaluate_with_solution(
    model: &NetworkModel,
    anchor: &OperatingPoint,
    prepared: Option<&PreparedCertificate>,
    scenario: &Scenario,
    options: &ScreeningOptions,
) -> Result<(ScenarioOutcome, Option<Vec<Complex64>>)> {
    let tag = |e: Error| match e {
        e @ Error::Scenario { .. } => e,
        e => Error::Scenario {
            id: scenario.id.clone(),
            reason: e.to_string(),
        },
    };
    let certify = || match prepared {
        Some(p) => p.evaluate(scenario),
        None => evaluate_certificate(model, anchor, scenario),
    };
    let report = certify().map_err(tag)?;
    let certificate_time = options.timing.then(|| {
        median_time(|| {
            let _ = std::hint::black_box(certify());
        })
    });

    let mut out = ScenarioOutcome {
        id: scenario.id.clone(),
        certified: report.solvable,
        rho: report.rho,
        fallback_used: false,
        fallback_converged: None,
        fallback_status: None,
        fallback_iterations: None,
        report,
        timing: certificate_time.map(|c| ScenarioTiming {
            certificate: c,
            fallback: None,
        }),
    };
    if out.certified {
        return Ok((out, None));
    }

    let start = Instant::now();
    let r = solve(model, scenario, &options.solver, Some(anchor.v_hat())).map_err(tag)?;
    let elapsed = start.elapsed().as_secs_f64();
    log::info!(
        "scenario '{}' not certified; fallback {:?} after {} iterations",
        scenario.id,
        r.status,
        r.iterations
    );
    out.fallback_used = true;
    out.fallback_converged = Some(r.converged());
    out.fallback_status = Some(r.status);
    out.fallback_iterations = Some(r.iterations);
    if let Some(t) = out.timing.as_mut() {
        t.fallback = Some(elapsed);
    }
    let solution = r.converged().then_some(r.v);
    Ok((out, solution))
}

/// Median over 5 runs of the per-call wall time of `f`, in seconds. Each run
/// repeats `f` enough times to last at least 200 µs.
pub fn median_time<F: FnMut()>(mut f: F) -> f64 {
    const MIN_RUN: f64 = 2e-4;
    f();
    let mut reps = 1usize;
    loop {
        let t = Instant::now();
        for _ in 0..reps {
            f();
        }
        let dt = t.elapsed().as_secs_f64();
        if dt >= MIN_RUN || reps >= 1 << 20 {
            break;
        }
        reps = if dt > 0.0 {
            ((reps as f64 * 1.5 * MIN_RUN / dt).ceil() as usize).max(reps + 1)
        } else {
            reps * 10
        };
    }
    let mut runs: Vec<f64> = (0..5)
        .map(|_| {
            let t = Instant::now();
            for _ in 0..reps {
                f();
            }
            t.elapsed().as_secs_f64() / reps as f64
        })
        .collect();
    runs.sort_by(f64::total_cmp);
    runs[2]
}

fn reference_timing(model: &NetworkModel, anchor: &OperatingPoint, solver: &SolverConfig) -> ReferenceTiming {
    let lin = anchor
        .scenario()
        .linearize(model, anchor.u_abs())
        .expect("anchor scenario matches the model");
    let step = median_time(|| {
        let _ = std::hint::black_box(fixed_point_step(model, &lin.s_const, &lin.m, anchor.v_hat()));
    });
    let mut iterations = 0;
    let full = median_time(|| {
        if let Ok(r) = solve(model, anchor.scenario(), solver, None) {
            iterations = r.iterations;
        }
    });
    ReferenceTiming {
        n_pq: model.n_pq(),
        fixed_point_step: step,
        full_solve: full,
        full_solve_iterations: iterations,
    }
}

/// Plain-text timing summary; empty when nothing was screened.
pub fn timing_report(outcome: &ScreeningOutcome) -> String {
    if outcome.results.is_empty() {
        return String::new();
    }
    let us = |s: f64| s * 1e6;
    let mut out = String::new();
    let mut cert: Vec<f64> = outcome
        .results
        .iter()
        .filter_map(|r| r.timing.map(|t| t.certificate))
        .collect();
    if cert.is_empty() {
        let _ = writeln!(out, "no timing data (screen with timing enabled)");
        return out;
    }
    cert.sort_by(f64::total_cmp);
    let median = cert[cert.len() / 2];
    let _ = writeln!(out, "scenarios screened: {}", outcome.results.len());
    let _ = writeln!(out, "certificate, median per scenario: {:.3} us", us(median));
    if let Some(r) = outcome.reference {
        let _ = writeln!(out, "PQ buses: {}", r.n_pq);
        let _ = writeln!(out, "one fixed-point iteration: {:.3} us", us(r.fixed_point_step));
        let _ = writeln!(
            out,
            "full solve from no-load: {:.3} us ({} iterations)",
            us(r.full_solve),
            r.full_solve_iterations
        );
        let _ = writeln!(out, "certificate / iteration: {:.2}", median / r.fixed_point_step);
        let _ = writeln!(out, "certificate / full solve: {:.3}", median / r.full_solve);
    }
    let _ = writeln!(out, "{:<24} {:>14} {:>14}", "scenario", "cert [us]", "fallback [us]");
    for r in &outcome.results {
        if let Some(t) = r.timing {
            let fb = t.fallback.map_or("-".to_string(), |f| format!("{:.1}", us(f)));
            let _ = writeln!(out, "{:<24} {:>14.3} {:>14}", r.id, us(t.certificate), fb);
        }
    }
    out
}
