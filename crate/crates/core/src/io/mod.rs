//! Versioned TOML documents for feeders, scenarios, anchors and batches.
//!
//! Powers in files are consumption-positive kW / kVAR, as in feeder data
//! tables; they are negated into injection-positive W / VAR on load. Every
//! document is parsed strictly: unknown keys are errors.

pub mod bundled;
pub mod report;

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::certificate::{OperatingPoint, SlopeSource};
use crate::error::{Error, Result};
use crate::network::{BusId, BusShunt, LineSpec, NetworkModel};
use crate::powerflow::SolverConfig;
use crate::scenario::Scenario;
use crate::voltvar::{BusInjectionSpec, SlopeConvention, VoltVarCurve, VoltVarSetting};

pub const FORMAT_VERSION: u32 = 1;
pub const CONSUMPTION_POSITIVE: &str = "consumption-positive";
/// Prefix selecting a file shipped with the library instead of the filesystem.
pub const BUNDLED_PREFIX: &str = "bundled:";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeederDocument {
    pub format_version: u32,
    pub name: String,
    pub slack: SlackEntry,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<BaseEntry>,
    #[serde(rename = "bus", default)]
    pub buses: Vec<BusEntry>,
    #[serde(rename = "line", default)]
    pub lines: Vec<LineEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlackEntry {
    pub name: String,
    pub voltage_volts: f64,
    #[serde(default)]
    pub angle_deg: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power_va: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub voltage_volts: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusEntry {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shunt_b_siemens: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineEntry {
    pub from: String,
    pub to: String,
    pub r_ohms: f64,
    pub x_ohms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDocument {
    pub format_version: u32,
    pub id: String,
    /// Must be `"consumption-positive"`.
    pub sign_convention: Option<String>,
    #[serde(default)]
    pub slope_convention: SlopeConvention,
    /// `"anchor"` makes powers increments on top of the anchor scenario and
    /// listed Volt-Var blocks replacements of the anchor's.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate: Option<CertificateOptions>,
    #[serde(rename = "bus", default)]
    pub buses: Vec<ScenarioBus>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateOptions {
    #[serde(default)]
    pub slope_source: SlopeSource,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioBus {
    pub name: String,
    #[serde(default)]
    pub p_kw: f64,
    #[serde(default)]
    pub q_kvar: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub voltvar: Option<VoltVarEntry>,
}

/// Volt-Var block. `qa_kvar` is consumption-positive, so an inverter that
/// generates 5 kVAR at low voltage is written `qa_kvar = -5`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VoltVarEntry {
    pub qa_kvar: f64,
    pub va_pu: f64,
    /// Defaults to `2 - va_pu`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vd_pu: Option<f64>,
    /// Defaults to `-qa_kvar`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qd_kvar: Option<f64>,
    /// `[Vb, Vc]`, defaults to `[1.0, 1.0]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deadband: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convention: Option<SlopeConvention>,
}

impl VoltVarEntry {
    pub fn curve(&self) -> Result<VoltVarCurve> {
        let [vb, vc] = self.deadband.unwrap_or([1.0, 1.0]);
        let vd = self.vd_pu.unwrap_or(2.0 - self.va_pu);
        let qd = self.qd_kvar.unwrap_or(-self.qa_kvar);
        VoltVarCurve::new(self.va_pu, vb, vc, vd, -1e3 * self.qa_kvar, -1e3 * qd)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnchorDocument {
    pub format_version: u32,
    pub scenario: ScenarioDocument,
    /// Complex bus voltages in volts. When absent the scenario is solved.
    #[serde(rename = "voltage", default, skip_serializing_if = "Vec::is_empty")]
    pub voltages: Vec<VoltageEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VoltageEntry {
    pub bus: String,
    pub re: f64,
    pub im: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchDocument {
    pub format_version: u32,
    #[serde(rename = "scenario", default)]
    pub scenarios: Vec<ScenarioDocument>,
}

/// Raw document text with the name used in diagnostics.
#[derive(Clone, Debug)]
pub struct Source {
    pub name: String,
    pub text: String,
}

impl Source {
    /// Reads a file, or a bundled file when `spec` starts with `bundled:`.
    pub fn read(spec: &str) -> Result<Self> {
        if let Some(rest) = spec.strip_prefix(BUNDLED_PREFIX) {
            let text = bundled::file(rest).ok_or_else(|| Error::Parse {
                source_name: spec.to_string(),
                message: format!("no bundled file '{rest}'; see `bundled list`"),
            })?;
            return Ok(Self {
                name: spec.to_string(),
                text: text.to_string(),
            });
        }
        let path = Path::new(spec);
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(Self {
            name: spec.to_string(),
            text,
        })
    }

    pub fn sha256(&self) -> String {
        digest(self.text.as_bytes())
    }
}

pub fn digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn parse<T: for<'de> Deserialize<'de>>(source: &Source) -> Result<T> {
    toml::from_str(&source.text).map_err(|e| Error::Parse {
        source_name: source.name.clone(),
        message: e.to_string().trim_end().to_string(),
    })
}

fn check_version(source: &Source, version: u32) -> Result<()> {
    if version != FORMAT_VERSION {
        return Err(Error::Parse {
            source_name: source.name.clone(),
            message: format!("unsupported format_version {version}, expected {FORMAT_VERSION}"),
        });
    }
    Ok(())
}

pub fn to_toml<T: Serialize>(doc: &T) -> String {
    toml::to_string(doc).expect("documents serialize to TOML")
}

/// Parsed feeder with its network model and bus-name lookup.
#[derive(Debug)]
pub struct Feeder {
    pub document: FeederDocument,
    pub model: NetworkModel,
    /// Bus name by PQ position.
    names: Vec<String>,
    positions: HashMap<String, usize>,
}

pub fn load_feeder(spec: &str) -> Result<Feeder> {
    Feeder::from_source(&Source::read(spec)?)
}

impl Feeder {
    pub fn from_source(source: &Source) -> Result<Self> {
        let doc: FeederDocument = parse(source)?;
        check_version(source, doc.format_version)?;
        Self::from_document(doc).map_err(|e| match e {
            e @ Error::Parse { .. } => e,
            e => Error::Parse {
                source_name: source.name.clone(),
                message: e.to_string(),
            },
        })
    }

    pub fn from_document(doc: FeederDocument) -> Result<Self> {
        let invalid = |message: String| Error::Parse {
            source_name: doc.name.clone(),
            message,
        };
        let mut index: HashMap<String, usize> = HashMap::new();
        index.insert(doc.slack.name.clone(), 0);
        let mut order = vec![doc.slack.name.clone()];
        for b in &doc.buses {
            if b.name == doc.slack.name {
                if b.shunt_b_siemens.is_some() {
                    return Err(invalid(format!("bus '{}': shunt at the slack bus is not supported", b.name)));
                }
                continue;
            }
            if index.insert(b.name.clone(), order.len()).is_some() {
                return Err(invalid(format!("duplicate bus name '{}'", b.name)));
            }
            order.push(b.name.clone());
        }
        let resolve = |name: &str, k: usize| {
            index
                .get(name)
                .copied()
                .ok_or_else(|| invalid(format!("line {k}: unknown bus '{name}'")))
        };
        let mut lines = Vec::with_capacity(doc.lines.len());
        for (k, l) in doc.lines.iter().enumerate() {
            lines.push(LineSpec::new(resolve(&l.from, k)?, resolve(&l.to, k)?, l.r_ohms, l.x_ohms));
        }
        let shunts: Vec<BusShunt> = doc
            .buses
            .iter()
            .filter_map(|b| {
                b.shunt_b_siemens.map(|s| BusShunt {
                    bus: BusId(index[&b.name]),
                    susceptance: s,
                })
            })
            .collect();
        if !(doc.slack.voltage_volts > 0.0 && doc.slack.voltage_volts.is_finite()) {
            return Err(invalid("slack voltage_volts must be positive".into()));
        }
        let v0 = Complex64::from_polar(doc.slack.voltage_volts, doc.slack.angle_deg.to_radians());
        let model = NetworkModel::build(order.len(), &lines, &shunts, BusId(0), v0).map_err(|e| match e {
            Error::Disconnected(i) => invalid(format!("bus '{}' is not connected to the slack", order[i])),
            Error::ZeroNoLoadVoltage(i) => invalid(format!("no-load voltage is zero at bus '{}'", order[i])),
            Error::InvalidLine { index, reason } => invalid(format!(
                "line {index} ({} - {}): {reason}",
                doc.lines[index].from, doc.lines[index].to
            )),
            e => e,
        })?;
        let names: Vec<String> = (0..model.n_pq()).map(|k| order[model.bus_at(k).0].clone()).collect();
        let positions = names.iter().enumerate().map(|(k, n)| (n.clone(), k)).collect();
        Ok(Self {
            document: doc,
            model,
            names,
            positions,
        })
    }

    pub fn name(&self) -> &str {
        &self.document.name
    }

    /// Bus names by PQ position.
    pub fn bus_names(&self) -> &[String] {
        &self.names
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.positions.get(name).copied()
    }

    pub fn power_base(&self) -> Option<f64> {
        self.document.base.as_ref().and_then(|b| b.power_va)
    }

    /// Builds a scenario; `anchor` is required when the document declares
    /// `base = "anchor"`.
    pub fn scenario(&self, doc: &ScenarioDocument, anchor: Option<&Scenario>, source: &str) -> Result<Scenario> {
        let err = |reason: String| Error::Scenario {
            id: doc.id.clone(),
            reason: format!("{source}: {reason}"),
        };
        match doc.sign_convention.as_deref() {
            Some(CONSUMPTION_POSITIVE) => {}
            Some(other) => {
                return Err(err(format!(
                    "sign_convention '{other}' is not supported; use '{CONSUMPTION_POSITIVE}'"
                )))
            }
            None => return Err(err(format!("missing sign_convention = \"{CONSUMPTION_POSITIVE}\""))),
        }
        if doc.buses.is_empty() {
            return Err(err("no [[bus]] entries".into()));
        }
        let mut scenario = match doc.base.as_deref() {
            None => Scenario::empty(doc.id.clone(), self.model.n_pq()),
            Some("anchor") => {
                let base = anchor.ok_or_else(|| err("base = \"anchor\" needs an anchor".into()))?;
                let mut s = base.clone();
                s.id = doc.id.clone();
                s
            }
            Some(other) => return Err(err(format!("unknown base '{other}'; only \"anchor\" is supported"))),
        };
        scenario.convention = doc.slope_convention;
        scenario.slope_source = doc.certificate.as_ref().map(|c| c.slope_source).unwrap_or_default();
        scenario.power_base = self.power_base();
        let mut seen = vec![false; self.model.n_pq()];
        for b in &doc.buses {
            let k = match self.position(&b.name) {
                Some(k) => k,
                None if b.name == self.document.slack.name => {
                    return Err(err(format!("bus '{}' is the slack bus", b.name)))
                }
                None => return Err(err(format!("unknown bus '{}'", b.name))),
            };
            if std::mem::replace(&mut seen[k], true) {
                return Err(err(format!("bus '{}' listed twice", b.name)));
            }
            if !(b.p_kw.is_finite() && b.q_kvar.is_finite()) {
                return Err(err(format!("bus '{}': non-finite power", b.name)));
            }
            let spec: &mut BusInjectionSpec = &mut scenario.buses[k];
            spec.p_const -= 1e3 * b.p_kw;
            spec.q_const -= 1e3 * b.q_kvar;
            if let Some(vv) = &b.voltvar {
                let curve = vv.curve().map_err(|e| err(format!("bus '{}': {e}", b.name)))?;
                spec.voltvar = Some(VoltVarSetting::Curve(curve));
                spec.convention = vv.convention;
            }
        }
        Ok(scenario)
    }

    /// Scenario document reproducing `scenario` in absolute (not incremental)
    /// form.
    pub fn scenario_document(&self, scenario: &Scenario) -> ScenarioDocument {
        let buses = scenario
            .buses
            .iter()
            .enumerate()
            .filter(|(_, b)| **b != BusInjectionSpec::default())
            .map(|(k, b)| ScenarioBus {
                name: self.names[k].clone(),
                p_kw: -b.p_const / 1e3,
                q_kvar: -b.q_const / 1e3,
                voltvar: match b.voltvar {
                    Some(VoltVarSetting::Curve(c)) => {
                        let [va, vb, vc, vd] = c.breakpoints();
                        Some(VoltVarEntry {
                            qa_kvar: -c.qa() / 1e3,
                            va_pu: va,
                            vd_pu: Some(vd),
                            qd_kvar: Some(-c.qd() / 1e3),
                            deadband: Some([vb, vc]),
                            convention: b.convention,
                        })
                    }
                    _ => None,
                },
            })
            .collect();
        ScenarioDocument {
            format_version: FORMAT_VERSION,
            id: scenario.id.clone(),
            sign_convention: Some(CONSUMPTION_POSITIVE.to_string()),
            slope_convention: scenario.convention,
            base: None,
            certificate: (scenario.slope_source != SlopeSource::default()).then_some(CertificateOptions {
                slope_source: scenario.slope_source,
            }),
            buses,
        }
    }

    pub fn load_scenario(&self, spec: &str, anchor: Option<&Scenario>) -> Result<Scenario> {
        let source = Source::read(spec)?;
        let doc: ScenarioDocument = parse(&source)?;
        check_version(&source, doc.format_version)?;
        self.scenario(&doc, anchor, &source.name)
    }

    /// Loads a single scenario file, a batch file with `[[scenario]]`
    /// tables, or every `*.scenario` file of a directory in name order.
    pub fn load_scenarios(&self, spec: &str, anchor: Option<&Scenario>) -> Result<Vec<Scenario>> {
        let path = Path::new(spec);
        if !spec.starts_with(BUNDLED_PREFIX) && path.is_dir() {
            let files = scenario_files(path)?;
            return files
                .iter()
                .map(|p| self.load_scenario(&p.to_string_lossy(), anchor))
                .collect();
        }
        let source = Source::read(spec)?;
        let value: toml::Table = parse(&source)?;
        if value.contains_key("scenario") {
            let batch: BatchDocument = parse(&source)?;
            check_version(&source, batch.format_version)?;
            batch
                .scenarios
                .iter()
                .map(|d| {
                    check_version(&source, d.format_version)?;
                    self.scenario(d, anchor, &source.name)
                })
                .collect()
        } else {
            let doc: ScenarioDocument = parse(&source)?;
            check_version(&source, doc.format_version)?;
            Ok(vec![self.scenario(&doc, anchor, &source.name)?])
        }
    }

    /// Loads an anchor; solves the power flow when no voltages are given.
    pub fn load_anchor(&self, spec: &str, solver: &SolverConfig) -> Result<OperatingPoint> {
        let source = Source::read(spec)?;
        let doc: AnchorDocument = parse(&source)?;
        check_version(&source, doc.format_version)?;
        self.anchor(&doc, solver, &source.name)
    }

    pub fn anchor(&self, doc: &AnchorDocument, solver: &SolverConfig, source: &str) -> Result<OperatingPoint> {
        let scenario = self.scenario(&doc.scenario, None, source)?;
        if doc.voltages.is_empty() {
            return OperatingPoint::from_solve(&self.model, scenario, solver);
        }
        let mut v = vec![None; self.model.n_pq()];
        for e in &doc.voltages {
            let k = self
                .position(&e.bus)
                .ok_or_else(|| Error::InvalidAnchor(format!("{source}: unknown bus '{}'", e.bus)))?;
            if v[k].replace(Complex64::new(e.re, e.im)).is_some() {
                return Err(Error::InvalidAnchor(format!("{source}: bus '{}' listed twice", e.bus)));
            }
        }
        let v: Vec<Complex64> = v
            .into_iter()
            .enumerate()
            .map(|(k, x)| x.ok_or_else(|| Error::InvalidAnchor(format!("{source}: no voltage for bus '{}'", self.names[k]))))
            .collect::<Result<_>>()?;
        OperatingPoint::new(&self.model, scenario, v)
    }

    /// Anchor document with explicit voltages for `op`.
    pub fn anchor_document(&self, op: &OperatingPoint) -> AnchorDocument {
        AnchorDocument {
            format_version: FORMAT_VERSION,
            scenario: self.scenario_document(op.scenario()),
            voltages: op
                .v_hat()
                .iter()
                .enumerate()
                .map(|(k, v)| VoltageEntry {
                    bus: self.names[k].clone(),
                    re: v.re,
                    im: v.im,
                })
                .collect(),
        }
    }
}

fn scenario_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "scenario"))
        .collect();
    files.sort();
    Ok(files)
}

/// `"<spec> sha256:<hex>"`. A directory digests the sorted list of its
/// `*.scenario` file names and digests.
pub fn input_digest(spec: &str) -> Result<String> {
    let path = Path::new(spec);
    if !spec.starts_with(BUNDLED_PREFIX) && path.is_dir() {
        let files = scenario_files(path)?;
        let mut listing = String::new();
        for f in &files {
            let src = Source::read(&f.to_string_lossy())?;
            let name = f.file_name().map(|n| n.to_string_lossy()).unwrap_or_default();
            listing.push_str(&format!("{name} {}\n", src.sha256()));
        }
        return Ok(format!("{spec} sha256:{}", digest(listing.as_bytes())));
    }
    Ok(format!("{spec} sha256:{}", Source::read(spec)?.sha256()))
}
