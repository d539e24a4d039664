mod render;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{debug, info};

use pfcert::certificate::{PreparedCertificate, SlopeSource};
use pfcert::io::bundled::{bundle, bundled_feeders};
use pfcert::io::report::{
    CertificateRecord, LimitsRecord, PowerFlowRecord, ReportDocument, ScreeningRecord,
};
use pfcert::io::{input_digest, load_feeder, Feeder};
use pfcert::powerflow::{self, SolverConfig, VoltVarMode};
use pfcert::screening::{screen, ScreeningOptions};
use pfcert::twobus::TwoBusCase;
use pfcert::voltvar::SlopeConvention;

/// Power-flow solvability certificates for feeders with Volt-Var inverters.
///
/// File arguments accept `bundled:<bundle>/<file>` for the shipped feeders
/// (see `pfcert bundled list`).
#[derive(Parser, Debug)]
#[command(name = "pfcert", version)]
struct Cli {
    /// Log filter, e.g. `info` or `pfcert=debug`.
    #[arg(long, global = true, env = "PFCERT_LOG", default_value = "warn")]
    log_level: String,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Write the report here instead of stdout.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Toml,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the power flow of one scenario.
    Solve(SolveArgs),
    /// Evaluate the certificate for one candidate scenario.
    Certify(CertifyArgs),
    /// Certify a batch of scenarios, falling back to a power-flow solve.
    Screen(ScreenArgs),
    /// Two-bus transfer limits and solvability.
    Limits(LimitsArgs),
    /// List or export the shipped feeders.
    Bundled {
        #[command(subcommand)]
        command: BundledCommand,
    },
}

#[derive(Args, Debug)]
struct SolverArgs {
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
}

impl SolverArgs {
    fn config(&self, mode: VoltVarMode) -> SolverConfig {
        SolverConfig {
            tol: self.tol,
            max_iter: self.max_iter,
            mode,
            ..SolverConfig::default()
        }
    }
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum Mode {
    Piecewise,
    Linear,
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[arg(long)]
    feeder: String,
    #[arg(long)]
    scenario: String,
    /// Needed when the scenario is incremental (`base = "anchor"`).
    #[arg(long)]
    anchor: Option<String>,
    #[arg(long, value_enum, default_value_t = Mode::Piecewise)]
    mode: Mode,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum ConventionArg {
    Span,
    Local,
}

impl From<ConventionArg> for SlopeConvention {
    fn from(c: ConventionArg) -> Self {
        match c {
            ConventionArg::Span => SlopeConvention::Span,
            ConventionArg::Local => SlopeConvention::Local,
        }
    }
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum SlopeSourceArg {
    Candidate,
    Anchor,
}

impl From<SlopeSourceArg> for SlopeSource {
    fn from(s: SlopeSourceArg) -> Self {
        match s {
            SlopeSourceArg::Candidate => SlopeSource::Candidate,
            SlopeSourceArg::Anchor => SlopeSource::Anchor,
        }
    }
}

#[derive(Args, Debug)]
struct CertifyArgs {
    #[arg(long)]
    feeder: String,
    #[arg(long)]
    anchor: String,
    #[arg(long)]
    scenario: String,
    /// Overrides the scenario's slope convention.
    #[arg(long, value_enum)]
    slope_convention: Option<ConventionArg>,
    /// Overrides where the Volt-Var slope term comes from.
    #[arg(long, value_enum)]
    slope_source: Option<SlopeSourceArg>,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args, Debug)]
struct ScreenArgs {
    #[arg(long)]
    feeder: String,
    #[arg(long)]
    anchor: String,
    /// A scenario file, a batch file, or a directory of `*.scenario` files.
    #[arg(long)]
    scenarios: String,
    /// Keep screening after the first scenario that fails both routes.
    #[arg(long)]
    no_early_return: bool,
    /// Advance the anchor to each converged fallback solution.
    #[arg(long)]
    rolling_anchor: bool,
    #[arg(long)]
    jobs: Option<usize>,
    /// Add certificate vs fallback timings.
    #[arg(long)]
    timing: bool,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args, Debug)]
struct LimitsArgs {
    /// Sending-end voltage magnitude.
    #[arg(long)]
    e: f64,
    #[arg(long)]
    r: f64,
    #[arg(long)]
    x: f64,
    /// Received active power in W.
    #[arg(long, requires = "q")]
    p: Option<f64>,
    /// Received reactive power in VAR.
    #[arg(long, requires = "p")]
    q: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum BundledCommand {
    List,
    /// Copy a bundle's files into a directory.
    Export { name: String, dir: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().parse_filters(&cli.log_level).init();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

struct Output {
    text: String,
    report: Option<ReportDocument>,
    code: u8,
}

fn run(cli: &Cli) -> Result<u8> {
    let out = match &cli.command {
        Command::Solve(a) => solve(a)?,
        Command::Certify(a) => certify(a)?,
        Command::Screen(a) => screen_cmd(a)?,
        Command::Limits(a) => limits(a)?,
        Command::Bundled { command } => bundled_cmd(command)?,
    };
    let body = match (cli.format, &out.report) {
        (Format::Toml, Some(r)) => r.to_toml(),
        (Format::Toml, None) => bail!("this command has no structured output"),
        (Format::Text, _) => out.text,
    };
    match &cli.output {
        Some(path) => std::fs::write(path, body).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{body}"),
    }
    Ok(out.code)
}

fn digests(inputs: &[(&str, &str)]) -> Result<BTreeMap<String, String>> {
    inputs
        .iter()
        .map(|(role, spec)| Ok((role.to_string(), input_digest(spec)?)))
        .collect()
}

fn feeder(spec: &str) -> Result<Feeder> {
    let f = load_feeder(spec)?;
    info!("feeder {}: {} PQ buses", f.name(), f.model.n_pq());
    Ok(f)
}

fn solve(a: &SolveArgs) -> Result<Output> {
    let mode = match a.mode {
        Mode::Piecewise => VoltVarMode::Piecewise,
        Mode::Linear => VoltVarMode::Linearized,
    };
    let cfg = a.solver.config(mode);
    let f = feeder(&a.feeder)?;
    let anchor = a.anchor.as_deref().map(|s| f.load_anchor(s, &cfg)).transpose()?;
    let scenario = f.load_scenario(&a.scenario, anchor.as_ref().map(|op| op.scenario()))?;
    let result = powerflow::solve(&f.model, &scenario, &cfg, None)?;
    debug!("{} iterations, status {:?}", result.iterations, result.status);
    let mut inputs = vec![("feeder", a.feeder.as_str()), ("scenario", a.scenario.as_str())];
    if let Some(s) = &a.anchor {
        inputs.push(("anchor", s));
    }
    let mut report = ReportDocument::new("solve", digests(&inputs)?);
    let record = PowerFlowRecord::new(&f, &scenario, &result);
    let text = render::power_flow(&record);
    report.power_flow = Some(record);
    Ok(Output {
        text,
        report: Some(report),
        code: if result.converged() { 0 } else { 1 },
    })
}

fn certify(a: &CertifyArgs) -> Result<Output> {
    let cfg = a.solver.config(VoltVarMode::Piecewise);
    let f = feeder(&a.feeder)?;
    let anchor = f.load_anchor(&a.anchor, &cfg)?;
    let mut candidate = f.load_scenario(&a.scenario, Some(anchor.scenario()))?;
    if let Some(c) = a.slope_convention {
        candidate.convention = c.into();
    }
    if let Some(s) = a.slope_source {
        candidate.slope_source = s.into();
    }
    let report = PreparedCertificate::new(&f.model, &anchor)?.evaluate(&candidate)?;
    let record = CertificateRecord::new(&anchor, &candidate, &report);
    let text = render::certificate(&record);
    let mut doc = ReportDocument::new(
        "certify",
        digests(&[("feeder", &a.feeder), ("anchor", &a.anchor), ("scenario", &a.scenario)])?,
    );
    doc.certificate = Some(record);
    Ok(Output {
        text,
        report: Some(doc),
        code: if report.solvable { 0 } else { 1 },
    })
}

fn screen_cmd(a: &ScreenArgs) -> Result<Output> {
    let cfg = a.solver.config(VoltVarMode::Piecewise);
    let f = feeder(&a.feeder)?;
    let anchor = f.load_anchor(&a.anchor, &cfg)?;
    let scenarios = f.load_scenarios(&a.scenarios, Some(anchor.scenario()))?;
    info!("screening {} scenarios", scenarios.len());
    let options = ScreeningOptions {
        early_return: !a.no_early_return,
        rolling_anchor: a.rolling_anchor,
        jobs: a.jobs,
        timing: a.timing,
        solver: cfg,
        ..ScreeningOptions::default()
    };
    let outcome = screen(&f.model, &anchor, &scenarios, &options)?;
    let record = ScreeningRecord::new(&anchor, &outcome);
    let mut text = render::screening(&record);
    if a.timing {
        text.push_str(&pfcert::screening::timing_report(&outcome));
    }
    let mut doc = ReportDocument::new(
        "screen",
        digests(&[("feeder", &a.feeder), ("anchor", &a.anchor), ("scenarios", &a.scenarios)])?,
    );
    doc.screening = Some(record);
    Ok(Output {
        text,
        report: Some(doc),
        code: if outcome.flag == 1 { 0 } else { 1 },
    })
}

fn limits(a: &LimitsArgs) -> Result<Output> {
    let case = TwoBusCase {
        e: a.e,
        r: a.r,
        x: a.x,
        p: a.p.unwrap_or(0.0),
        q: a.q.unwrap_or(0.0),
    };
    if let Err(reason) = case.validate() {
        bail!("invalid two-bus case: {reason}");
    }
    let record = LimitsRecord::new(&case, a.p.is_some());
    let text = render::limits(&record);
    let code = if record.solvable == Some(false) { 1 } else { 0 };
    let mut doc = ReportDocument::new("limits", BTreeMap::new());
    doc.limits = Some(record);
    Ok(Output {
        text,
        report: Some(doc),
        code,
    })
}

fn bundled_cmd(c: &BundledCommand) -> Result<Output> {
    let text = match c {
        BundledCommand::List => render::bundles(bundled_feeders()),
        BundledCommand::Export { name, dir } => {
            let b = bundle(name).with_context(|| format!("no bundle named '{name}'"))?;
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            for (file, contents) in b.files {
                let path = dir.join(file);
                std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
            }
            format!("wrote {} files to {}\n", b.files.len(), dir.display())
        }
    };
    Ok(Output {
        text,
        report: None,
        code: 0,
    })
}
