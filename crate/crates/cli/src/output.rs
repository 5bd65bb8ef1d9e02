use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use anyhow::Context;
use serde_json::{Map, Value};

use crate::config::{Format, RunConfig};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Row-at-a-time table writer.
///
/// CSV output starts with two comment lines, `# noma-harq <version>` and
/// `# config: <json>`, followed by the header row. Rows are flushed as they
/// arrive so a failing sweep keeps its completed points. JSON output is a
/// single object `{version, config, columns, rows}` written on [`Sink::finish`].
pub struct Sink {
    columns: Vec<String>,
    kind: Kind,
}

enum Kind {
    Csv(Box<csv::Writer<Box<dyn Write>>>),
    Json { out: Box<dyn Write>, config: Value, rows: Vec<Value> },
}

fn open(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(io::stdout().lock()),
    })
}

impl Sink {
    pub fn new(format: Format, path: Option<&Path>, cfg: &RunConfig, columns: &[&str]) -> anyhow::Result<Self> {
        let mut out = open(path)?;
        let columns: Vec<String> = columns.iter().map(|c| c.to_string()).collect();
        let kind = match format {
            Format::Csv => {
                writeln!(out, "# noma-harq {VERSION}")?;
                writeln!(out, "# config: {}", serde_json::to_string(cfg)?)?;
                let mut w = csv::WriterBuilder::new().from_writer(out);
                w.write_record(&columns)?;
                w.flush()?;
                Kind::Csv(Box::new(w))
            }
            Format::Json => Kind::Json { out, config: serde_json::to_value(cfg)?, rows: Vec::new() },
        };
        Ok(Self { columns, kind })
    }

    pub fn row(&mut self, values: Vec<Value>) -> anyhow::Result<()> {
        assert_eq!(values.len(), self.columns.len(), "row width");
        match &mut self.kind {
            Kind::Csv(w) => {
                w.write_record(values.iter().map(cell))?;
                w.flush()?;
            }
            Kind::Json { rows, .. } => {
                let obj: Map<String, Value> = self.columns.iter().cloned().zip(values).collect();
                rows.push(Value::Object(obj));
            }
        }
        Ok(())
    }

    pub fn finish(self) -> anyhow::Result<()> {
        match self.kind {
            Kind::Csv(mut w) => w.flush()?,
            Kind::Json { mut out, config, rows } => {
                let doc = serde_json::json!({
                    "version": VERSION,
                    "config": config,
                    "columns": self.columns,
                    "rows": rows,
                });
                serde_json::to_writer_pretty(&mut out, &doc)?;
                writeln!(out)?;
                out.flush()?;
            }
        }
        Ok(())
    }
}

fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        Value::Array(items) => items.iter().map(cell).collect::<Vec<_>>().join(";"),
        other => other.to_string(),
    }
}

/// Writes a JSON document with the reproducibility header fields.
pub fn write_json(path: Option<&Path>, cfg: &RunConfig, body: Value) -> anyhow::Result<()> {
    let mut out = open(path)?;
    let mut doc = Map::new();
    doc.insert("version".into(), VERSION.into());
    doc.insert("config".into(), serde_json::to_value(cfg)?);
    if let Value::Object(fields) = body {
        doc.extend(fields);
    }
    serde_json::to_writer_pretty(&mut out, &Value::Object(doc))?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

/// `f64` as JSON, with non-finite values as null.
pub fn num(x: f64) -> Value {
    serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
}

pub fn nums(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|&x| num(x)).collect())
}
