//! Column tables and their CSV / JSON encodings.

use std::io::Write;

use serde_json::{Map, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// Named equal-length real columns plus free-form metadata.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    columns: Vec<(String, Vec<f64>)>,
    pub metadata: Map<String, Value>,
}

impl Table {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a column. Panics if its length differs from earlier columns.
    pub fn push(&mut self, name: impl Into<String>, values: Vec<f64>) {
        if let Some((first, existing)) = self.columns.first() {
            assert_eq!(
                existing.len(),
                values.len(),
                "column length differs from column {first:?}"
            );
        }
        self.columns.push((name.into(), values));
    }

    pub fn columns(&self) -> &[(String, Vec<f64>)] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    pub fn len(&self) -> usize {
        self.columns.first().map_or(0, |(_, v)| v.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn meta(&mut self, key: &str, value: impl Into<Value>) {
        self.metadata.insert(key.into(), value.into());
    }

    pub fn write(&self, format: Format, out: &mut dyn Write) -> std::io::Result<()> {
        match format {
            Format::Csv => self.write_csv(out),
            Format::Json => self.write_json(out),
        }
    }

    fn write_csv(&self, out: &mut dyn Write) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.columns.iter().map(|(n, _)| n.as_str()))?;
        for i in 0..self.len() {
            w.write_record(self.columns.iter().map(|(_, v)| format_number(v[i])))?;
        }
        w.flush()
    }

    fn write_json(&self, out: &mut dyn Write) -> std::io::Result<()> {
        let columns: Map<String, Value> = self
            .columns
            .iter()
            .map(|(n, v)| {
                (
                    n.clone(),
                    Value::Array(v.iter().map(|x| json_number(*x)).collect()),
                )
            })
            .collect();
        let mut doc = Map::new();
        doc.insert("columns".into(), Value::Object(columns));
        doc.insert("metadata".into(), Value::Object(self.metadata.clone()));
        serde_json::to_writer_pretty(&mut *out, &Value::Object(doc))?;
        writeln!(out)
    }
}

/// Shortest representation that parses back to the same `f64`.
pub fn format_number(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else if x != 0.0 && (x.abs() < 1e-5 || x.abs() >= 1e16) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

/// JSON has no non-finite numbers; those become the strings `"NaN"`,
/// `"inf"` and `"-inf"`.
pub fn json_number(x: f64) -> Value {
    serde_json::Number::from_f64(x).map_or_else(|| Value::String(format_number(x)), Value::Number)
}
