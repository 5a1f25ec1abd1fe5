use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;

/// Provenance written at the top of every output.
#[derive(Debug, Clone, Serialize)]
pub struct Meta {
    pub program: &'static str,
    pub version: &'static str,
    pub command: Vec<String>,
    pub params: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Meta {
    pub fn new(params: Value) -> Self {
        Meta {
            program: env!("CARGO_BIN_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: std::env::args().skip(1).collect(),
            params,
            seed: None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }
}

pub struct Sink {
    out: Box<dyn Write>,
}

impl Sink {
    pub fn open(path: Option<&Path>) -> Result<Self> {
        let out: Box<dyn Write> = match path {
            Some(p) => Box::new(BufWriter::new(
                File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
            )),
            None => Box::new(BufWriter::new(io::stdout())),
        };
        Ok(Sink { out })
    }

    pub fn csv_header(&mut self, meta: &Meta, columns: &[&str]) -> Result<()> {
        writeln!(self.out, "# {} {}", meta.program, meta.version)?;
        writeln!(self.out, "# command: {}", meta.command.join(" "))?;
        writeln!(
            self.out,
            "# params: {}",
            serde_json::to_string(&meta.params)?
        )?;
        if let Some(seed) = meta.seed {
            writeln!(self.out, "# seed: {seed}")?;
        }
        writeln!(self.out, "{}", columns.join(","))?;
        Ok(())
    }

    pub fn csv_row(&mut self, fields: &[String]) -> Result<()> {
        writeln!(self.out, "{}", fields.join(","))?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }

    /// Final marker line; readers treat a file without `complete` as partial.
    pub fn csv_finish(&mut self, error: Option<&str>) -> Result<()> {
        match error {
            None => writeln!(self.out, "# status: complete")?,
            Some(e) => writeln!(self.out, "# status: incomplete ({e})")?,
        }
        self.flush()
    }

    pub fn json(&mut self, meta: &Meta, result: &impl Serialize) -> Result<()> {
        let doc = serde_json::json!({ "meta": meta, "result": result });
        serde_json::to_writer_pretty(&mut self.out, &doc)?;
        writeln!(self.out)?;
        self.flush()
    }
}

/// Shortest round-trip decimal form; `inf`, `-inf` and `nan` for non-finite values.
pub fn num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v}")
    }
}

pub fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}
