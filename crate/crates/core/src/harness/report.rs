//! Reports: named quantities with budgets and pass flags, emitted as JSON or CSV.
//!
//! Floats are written with 17 significant digits so that every pass flag can
//! be recomputed bit-faithfully from the file.

use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ReportFormat};

/// How `value` is compared with `budget`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    /// `value ≤ budget`.
    Le,
    /// `value ≥ budget`.
    Ge,
    /// Recorded for context; always passes.
    Info,
}

impl Relation {
    pub fn as_str(self) -> &'static str {
        match self {
            Relation::Le => "le",
            Relation::Ge => "ge",
            Relation::Info => "info",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quantity {
    pub name: String,
    pub value: f64,
    pub budget: Option<f64>,
    pub relation: Relation,
    pub pass: bool,
}

impl Quantity {
    pub fn le(name: impl Into<String>, value: f64, budget: f64) -> Self {
        Quantity { name: name.into(), value, budget: Some(budget), relation: Relation::Le, pass: value <= budget }
    }

    pub fn ge(name: impl Into<String>, value: f64, budget: f64) -> Self {
        Quantity { name: name.into(), value, budget: Some(budget), relation: Relation::Ge, pass: value >= budget }
    }

    /// `|value − target| ≤ tol`, reported as the absolute deviation.
    pub fn near(name: impl Into<String>, value: f64, target: f64, tol: f64) -> Self {
        Quantity::le(name, (value - target).abs(), tol)
    }

    pub fn info(name: impl Into<String>, value: f64) -> Self {
        Quantity { name: name.into(), value, budget: None, relation: Relation::Info, pass: true }
    }

    /// Recomputes the pass flag from value and budget.
    pub fn recomputed_pass(&self) -> bool {
        match (self.relation, self.budget) {
            (Relation::Le, Some(b)) => self.value <= b,
            (Relation::Ge, Some(b)) => self.value >= b,
            (Relation::Info, _) => true,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub experiment: String,
    pub config: ExperimentConfig,
    pub quantities: Vec<Quantity>,
    pub pass: bool,
    pub provenance: Provenance,
}

impl Report {
    pub fn new(config: ExperimentConfig, quantities: Vec<Quantity>) -> Self {
        let pass = quantities.iter().all(|q| q.pass);
        Report {
            experiment: config.experiment.name().to_string(),
            provenance: Provenance { tool: "lsdisc".into(), version: env!("CARGO_PKG_VERSION").into(), seed: config.seed },
            config,
            quantities,
            pass,
        }
    }

    pub fn quantity(&self, name: &str) -> Option<&Quantity> {
        self.quantities.iter().find(|q| q.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Quantity> {
        self.quantities.iter().filter(|q| !q.pass)
    }

    pub fn to_json(&self) -> String {
        let mut buf = Vec::new();
        let mut ser = serde_json::Serializer::with_formatter(&mut buf, ExactFloats::default());
        self.serialize(&mut ser).expect("reports serialize");
        buf.push(b'\n');
        String::from_utf8(buf).expect("JSON is UTF-8")
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["experiment", "quantity", "value", "budget", "pass", "seed", "relation"]).expect("in-memory write");
        for q in &self.quantities {
            w.write_record([
                self.experiment.as_str(),
                q.name.as_str(),
                &format_float(q.value),
                &q.budget.map(format_float).unwrap_or_default(),
                if q.pass { "true" } else { "false" },
                &self.config.seed.to_string(),
                q.relation.as_str(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush to memory")).expect("CSV is UTF-8")
    }

    pub fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Json => self.to_json(),
            ReportFormat::Csv => self.to_csv(),
        }
    }
}

pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Pretty JSON with every float in `{:.16e}` form.
struct ExactFloats {
    inner: serde_json::ser::PrettyFormatter<'static>,
}

impl Default for ExactFloats {
    fn default() -> Self {
        ExactFloats { inner: serde_json::ser::PrettyFormatter::with_indent(b"  ") }
    }
}

macro_rules! delegate {
    ($($name:ident($($arg:ident: $ty:ty),*);)*) => {
        $(fn $name<W: ?Sized + Write>(&mut self, w: &mut W $(, $arg: $ty)*) -> io::Result<()> {
            self.inner.$name(w $(, $arg)*)
        })*
    };
}

impl serde_json::ser::Formatter for ExactFloats {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        w.write_all(format_float(value).as_bytes())
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        w.write_all(format_float(value as f64).as_bytes())
    }

    delegate! {
        begin_array();
        end_array();
        begin_array_value(first: bool);
        end_array_value();
        begin_object();
        end_object();
        begin_object_key(first: bool);
        begin_object_value();
        end_object_value();
    }
}

/// Writes the report to `path`, or to stdout when `path` is `None`.
pub fn emit_report(report: &Report, format: ReportFormat, path: Option<&Path>) -> io::Result<()> {
    let text = report.render(format);
    match path {
        Some(p) => std::fs::write(p, text),
        None => io::stdout().lock().write_all(text.as_bytes()),
    }
}
