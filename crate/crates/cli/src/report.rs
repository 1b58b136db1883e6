use std::fmt::Write as _;
use std::io::Write;

use clap::ValueEnum;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Table,
    Json,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Text(String),
    Num(f64),
    /// Exact rational with its decimal value for display.
    Exact {
        text: String,
        value: f64,
    },
    Flag(bool),
}

impl Cell {
    pub fn text(s: impl Into<String>) -> Self {
        Cell::Text(s.into())
    }

    fn csv(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Num(v) => v.to_string(),
            Cell::Exact { text, .. } => text.clone(),
            Cell::Flag(b) => b.to_string(),
        }
    }

    fn display(&self) -> String {
        match self {
            Cell::Num(v) | Cell::Exact { value: v, .. } => short(*v),
            other => other.csv(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Text(s) => json!(s),
            Cell::Num(v) if v.is_finite() => json!(v),
            Cell::Num(v) => json!(v.to_string()),
            Cell::Exact { text, value } => json!({ "exact": text, "value": value }),
            Cell::Flag(b) => json!(b),
        }
    }
}

/// Integers as is, otherwise three decimals; scientific for tiny values.
fn short(v: f64) -> String {
    if !v.is_finite() {
        v.to_string()
    } else if v.fract() == 0.0 && v.abs() < 1e12 {
        format!("{v:.0}")
    } else if v.abs() < 1e-3 {
        format!("{v:.3e}")
    } else {
        format!("{v:.3}")
    }
}

/// Result of one command: a table of rows plus identifying metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioReport {
    pub scenario_id: String,
    pub command: String,
    /// SHA-256 over the command name, its arguments and input file contents.
    pub inputs_digest: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    /// Lines written before the CSV header, prefixed with `#`.
    pub comments: Vec<String>,
}

pub fn digest(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    h.finalize().iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

impl ScenarioReport {
    pub fn new(scenario_id: impl Into<String>, command: &str, inputs_digest: String, columns: &[&str]) -> Self {
        Self {
            scenario_id: scenario_id.into(),
            command: command.into(),
            inputs_digest,
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            comments: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> anyhow::Result<String> {
        let mut out = Vec::new();
        for c in &self.comments {
            writeln!(out, "# {c}")?;
        }
        {
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(&self.columns)?;
            for row in &self.rows {
                w.write_record(row.iter().map(Cell::csv))?;
            }
            w.flush()?;
        }
        Ok(String::from_utf8(out)?)
    }

    pub fn to_table(&self) -> String {
        let cells: Vec<Vec<String>> = self.rows.iter().map(|r| r.iter().map(Cell::display).collect()).collect();
        let widths: Vec<usize> = (0..self.columns.len())
            .map(|i| cells.iter().map(|r| r[i].chars().count()).chain([self.columns[i].len()]).max().unwrap_or(0))
            .collect();
        let line = |items: &[String]| {
            items.iter().zip(&widths).map(|(s, w)| format!("{s:<w$}")).collect::<Vec<_>>().join("  ").trim_end().to_string()
        };
        let mut out = format!("# {} [{}] digest {}\n", self.command, self.scenario_id, &self.inputs_digest[..16]);
        for c in &self.comments {
            out.push_str(&format!("# {c}\n"));
        }
        out.push_str(&line(&self.columns));
        out.push('\n');
        out.push_str(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  "));
        out.push('\n');
        for r in &cells {
            out.push_str(&line(r));
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        let rows: Vec<Value> =
            self.rows.iter().map(|r| Value::Object(self.columns.iter().cloned().zip(r.iter().map(Cell::json)).collect())).collect();
        let doc = json!({
            "scenario_id": self.scenario_id,
            "command": self.command,
            "inputs_digest": self.inputs_digest,
            "comments": self.comments,
            "columns": self.columns,
            "rows": rows,
        });
        serde_json::to_string_pretty(&doc).expect("report serialises") + "\n"
    }

    pub fn render(&self, format: Format) -> anyhow::Result<String> {
        Ok(match format {
            Format::Csv => self.to_csv()?,
            Format::Table => self.to_table(),
            Format::Json => self.to_json(),
        })
    }
}
