use crate::analysis::{KatoMode, DEFAULT_ETAS};
use crate::error::{Error, Result};
use crate::quadrature::QuadratureScheme;
use crate::series::RecursionPlan;
use crate::weyl::WeylScheme;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Series,
    Certify,
    Chain,
    Envelope,
    Threep,
    Kato,
    Weyl,
    PerturbedWeyl,
    CkCheck,
}

impl Command {
    /// Name as written in configs.
    pub fn name(self) -> &'static str {
        match self {
            Command::Series => "series",
            Command::Certify => "certify",
            Command::Chain => "chain",
            Command::Envelope => "envelope",
            Command::Threep => "threep",
            Command::Kato => "kato",
            Command::Weyl => "weyl",
            Command::PerturbedWeyl => "perturbed-weyl",
            Command::CkCheck => "ck-check",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    Beta { beta: f64 },
    Gauss { dim: usize },
    Cauchy,
    /// CSV with columns s,x,t,y,value (see `TabulatedKernel`)
    Tabulated { path: PathBuf, time_exponent: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    Zero,
    Constant { value: f64 },
    /// |u|^{-β+ε}
    Power { beta: f64, eps: f64 },
    Bump { amplitude: f64, width: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpaceSpec {
    Point,
    Interval { lo: f64, hi: f64, mesh: usize },
    Line { radius: f64, mesh: usize },
    Plane { radius: f64, mesh: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub times: Vec<f64>,
    /// each state has one coordinate per space dimension; empty means the origin
    #[serde(default)]
    pub states: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSpec {
    /// candidates for the affine fit
    #[serde(default = "default_etas")]
    pub etas: Vec<f64>,
    /// explicit control pair η + c(t-s); skips the fit
    pub eta: Option<f64>,
    pub c: Option<f64>,
}

fn default_etas() -> Vec<f64> {
    DEFAULT_ETAS.to_vec()
}

impl Default for ControlSpec {
    fn default() -> Self {
        Self {
            etas: default_etas(),
            eta: None,
            c: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KatoRun {
    Relative,
    Plain,
    /// both scans and the implication check
    Both,
}

impl KatoRun {
    pub fn single(self) -> Option<KatoMode> {
        match self {
            KatoRun::Relative => Some(KatoMode::Relative),
            KatoRun::Plain => Some(KatoMode::Plain),
            KatoRun::Both => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KatoSpec {
    pub h: Vec<f64>,
    #[serde(default = "default_kato_run")]
    pub mode: KatoRun,
    /// 3P constant for the implication check; defaults to 2^{1-β} for the β-kernel
    pub constant: Option<f64>,
}

fn default_kato_run() -> KatoRun {
    KatoRun::Both
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeylSpec {
    pub beta: f64,
    /// support (a, b) of the bump test function
    pub support: [f64; 2],
    /// evaluation points; default spans left of, inside and right of the support
    #[serde(default)]
    pub s: Vec<f64>,
    #[serde(default)]
    pub scheme: WeylScheme,
    /// residual budget relative to ‖φ‖∞
    pub tolerance: Option<f64>,
    /// also require a ≥4× residual drop when the mesh is doubled
    #[serde(default)]
    pub convergence: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Command,
    #[serde(default)]
    pub seed: u64,
    /// series truncation N; defaults to the plan order
    pub order: Option<usize>,
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub format: OutputFormat,
    pub kernel: Option<KernelSpec>,
    pub potential: Option<PotentialSpec>,
    pub space: Option<SpaceSpec>,
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub quadrature: QuadratureScheme,
    #[serde(default)]
    pub plan: RecursionPlan,
    #[serde(default)]
    pub control: ControlSpec,
    pub kato: Option<KatoSpec>,
    pub weyl: Option<WeylSpec>,
    /// relative tolerance of ck-check
    pub tolerance: Option<f64>,
}

impl ExperimentConfig {
    /// Parses TOML text after applying `key.path=value` overrides.
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        let mut doc: toml::Table = text.parse().map_err(|e| Error::Config(format!("{e}")))?;
        for ov in overrides {
            apply_override(&mut doc, ov)?;
        }
        let cfg: Self = toml::Value::Table(doc)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &std::path::Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, overrides)
    }

    /// Canonical TOML text.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("{e}")))
    }

    /// Command-required sections are present.
    pub fn validate(&self) -> Result<()> {
        let need = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::Config(format!("command {} needs {what}", self.command.name())))
            }
        };
        self.quadrature.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.plan.validate().map_err(|e| Error::Config(e.to_string()))?;
        match self.command {
            Command::Series | Command::Certify | Command::Chain | Command::Envelope => {
                need(self.kernel.is_some(), "[kernel]")?;
                need(self.potential.is_some(), "[potential]")?;
                need(self.grid.is_some(), "[grid]")?;
            }
            Command::Threep => {
                need(self.kernel.is_some(), "[kernel]")?;
                need(self.grid.is_some(), "[grid]")?;
            }
            Command::Kato => {
                need(self.kernel.is_some(), "[kernel]")?;
                need(self.potential.is_some(), "[potential]")?;
                need(self.grid.is_some(), "[grid]")?;
                need(self.kato.is_some(), "[kato]")?;
            }
            Command::Weyl => need(self.weyl.is_some(), "[weyl]")?,
            Command::PerturbedWeyl => {
                need(self.weyl.is_some(), "[weyl]")?;
                need(self.potential.is_some(), "[potential]")?;
            }
            Command::CkCheck => {
                need(self.kernel.is_some(), "[kernel]")?;
                need(self.grid.is_some(), "[grid]")?;
            }
        }
        if let (Some(_), None) | (None, Some(_)) = (self.control.eta, self.control.c) {
            return Err(Error::Config("control needs both eta and c, or neither".into()));
        }
        if let Some(w) = &self.weyl {
            w.scheme.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }
}

/// Sets a dotted key in a TOML table; the value is parsed as TOML and
/// falls back to a plain string.
pub fn apply_override(doc: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {spec:?} is not KEY=VALUE")))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(Error::Config(format!("override key {key:?} is malformed")));
    }
    let value = format!("v = {}", raw.trim())
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    let mut table = doc;
    for part in &parts[..parts.len() - 1] {
        let entry = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override path {key:?} crosses a non-table value at {part:?}")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}
