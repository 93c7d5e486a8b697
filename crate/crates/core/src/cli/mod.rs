//! Batch front end: TOML experiment configs, command dispatch and
//! deterministic JSON/CSV reports.

mod config;
mod run;
mod suite;
#[cfg(test)]
mod tests;

pub use config::{
    apply_override, Command, ControlSpec, ExperimentConfig, GridSpec, KatoRun, KatoSpec, KernelSpec, OutputFormat,
    PotentialSpec, SpaceSpec, WeylSpec,
};
pub use run::run;
pub use suite::{reproduce_paper_suite, SuiteItem, SuiteOptions, SuiteReport, COARSEN_ENV};

use crate::error::{Error, Result};
use serde::Serialize;
use std::io::Write;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_PRECONDITION: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;
pub const EXIT_CERTIFICATE: i32 = 5;
pub const EXIT_VIOLATION: i32 = 6;

/// Process exit status for a failed run.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Domain(_) | Error::Io(_) => EXIT_CONFIG,
        Error::Precondition(_) | Error::PlanViolation { .. } | Error::DegenerateKernel(_) | Error::CannotTruncate(_) => {
            EXIT_PRECONDITION
        }
        Error::Numeric { .. } | Error::DivergentIntegral { .. } => EXIT_NUMERIC,
        Error::NoCertificate(_) => EXIT_CERTIFICATE,
    }
}

/// Tool name and version; `KPERTURB_GIT_DESCRIBE` at build time replaces
/// the crate version.
pub fn tool_version() -> String {
    match option_env!("KPERTURB_GIT_DESCRIBE") {
        Some(d) => format!("kperturb {d}"),
        None => format!("kperturb {}", env!("CARGO_PKG_VERSION")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    CertificateInvalid,
    Violations,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Ok => EXIT_OK,
            Status::CertificateInvalid => EXIT_CERTIFICATE,
            Status::Violations => EXIT_VIOLATION,
        }
    }
}

/// Numeric table shared by the JSON payload and the CSV output.
/// Non-finite cells are written as JSON null and empty CSV fields.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(&self.columns).map_err(io)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|&v| if v.is_finite() { format!("{v:e}") } else { String::new() }))
                .map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

#[derive(Debug, Clone)]
pub struct Report {
    pub version: String,
    pub config: ExperimentConfig,
    pub status: Status,
    /// command-specific summary (violations are listed here)
    pub payload: serde_json::Value,
    pub table: Table,
    /// integrand evaluations of the series engine, when one was used
    pub evaluations: Option<u64>,
    pub wall_clock_s: f64,
}

impl Report {
    pub fn exit_code(&self) -> i32 {
        self.status.exit_code()
    }

    /// Everything but the wall clock; identical across runs of one config.
    pub fn deterministic_json(&self) -> serde_json::Value {
        serde_json::json!({
            "version": self.version,
            "command": self.config.command,
            "config": self.config,
            "status": self.status,
            "exit_code": self.exit_code(),
            "payload": self.payload,
            "table": self.table,
            "evaluations": self.evaluations,
        })
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut v = self.deterministic_json();
        v["wall_clock_s"] = serde_json::json!(self.wall_clock_s);
        v
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_json()).expect("report serializes")
    }

    /// Writes the report in `format`: the full report as JSON, or the table as CSV.
    pub fn write<W: Write>(&self, mut out: W, format: OutputFormat) -> Result<()> {
        match format {
            OutputFormat::Json => {
                out.write_all(self.to_json_string().as_bytes())?;
                out.write_all(b"\n")?;
                Ok(())
            }
            OutputFormat::Csv => self.table.write_csv(out),
        }
    }
}
