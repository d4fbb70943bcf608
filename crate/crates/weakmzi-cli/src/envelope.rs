//! Output envelope: ordered metadata plus one columnar payload, emitted as
//! CSV (metadata as `# key = value` comments, mandatory header row, floats at
//! 17 significant digits) or as a single JSON object {metadata, payload}.
//! Both formats round-trip: parse(emit(x)) == x.

// The binary only emits; the parsing half is exercised by the integration
// tests, which include this file directly via #[path].
#![allow(dead_code)]

use serde_json::{json, Value};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Text(String),
}

impl Cell {
    /// Non-finite values are stored as text so both formats can carry them.
    pub fn num(v: f64) -> Cell {
        if v.is_finite() {
            Cell::Num(v)
        } else {
            Cell::Text(format!("{v}"))
        }
    }

    pub fn text(s: impl Into<String>) -> Cell {
        Cell::Text(s.into())
    }

    pub fn as_num(&self) -> Option<f64> {
        match self {
            Cell::Num(v) => Some(*v),
            Cell::Text(_) => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            Cell::Text(s) => Some(s),
            Cell::Num(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Envelope {
    pub metadata: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Envelope {
    pub fn meta(&mut self, key: &str, value: impl ToString) {
        self.metadata.push((key.to_string(), value.to_string()));
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn emit(&self, format: Format) -> String {
        match format {
            Format::Csv => self.emit_csv(),
            Format::Json => self.emit_json(),
        }
    }

    pub fn parse(text: &str, format: Format) -> Result<Envelope, String> {
        match format {
            Format::Csv => Self::parse_csv(text),
            Format::Json => Self::parse_json(text),
        }
    }

    fn emit_csv(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.metadata {
            out.push_str(&format!("# {k} = {v}\n"));
        }
        out.push_str(&self.columns.iter().map(|c| quote_csv(c)).collect::<Vec<_>>().join(","));
        out.push('\n');
        for row in &self.rows {
            let line: Vec<String> = row
                .iter()
                .map(|c| match c {
                    Cell::Num(v) => format!("{v:.16e}"),
                    Cell::Text(s) => quote_csv(s),
                })
                .collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    fn parse_csv(text: &str) -> Result<Envelope, String> {
        let mut metadata = Vec::new();
        let mut columns = Vec::new();
        let mut rows = Vec::new();
        let mut saw_header = false;
        for line in text.lines() {
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("# ") {
                let (k, v) = rest
                    .split_once(" = ")
                    .ok_or_else(|| format!("malformed metadata line: {line}"))?;
                metadata.push((k.to_string(), v.to_string()));
                continue;
            }
            let fields = split_csv(line)?;
            if !saw_header {
                columns = fields;
                saw_header = true;
                continue;
            }
            rows.push(
                fields
                    .into_iter()
                    .map(|f| match f.parse::<f64>() {
                        Ok(v) if v.is_finite() => Cell::Num(v),
                        _ => Cell::Text(f),
                    })
                    .collect(),
            );
        }
        if !saw_header {
            return Err("CSV without a header row".into());
        }
        Ok(Envelope { metadata, columns, rows })
    }

    fn emit_json(&self) -> String {
        let metadata: serde_json::Map<String, Value> = self
            .metadata
            .iter()
            .map(|(k, v)| (k.clone(), Value::String(v.clone())))
            .collect();
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|row| {
                Value::Array(
                    row.iter()
                        .map(|c| match c {
                            Cell::Num(v) => json!(v),
                            Cell::Text(s) => Value::String(s.clone()),
                        })
                        .collect(),
                )
            })
            .collect();
        let doc = json!({
            "metadata": metadata,
            "payload": { "columns": self.columns, "rows": rows },
        });
        serde_json::to_string_pretty(&doc).expect("plain JSON value")
    }

    fn parse_json(text: &str) -> Result<Envelope, String> {
        let doc: Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
        let metadata = doc
            .get("metadata")
            .and_then(Value::as_object)
            .ok_or("missing metadata object")?
            .iter()
            .map(|(k, v)| {
                v.as_str()
                    .map(|s| (k.clone(), s.to_string()))
                    .ok_or_else(|| format!("metadata value for {k} is not a string"))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let payload = doc.get("payload").ok_or("missing payload object")?;
        let columns = payload
            .get("columns")
            .and_then(Value::as_array)
            .ok_or("missing payload.columns")?
            .iter()
            .map(|v| v.as_str().map(str::to_string).ok_or("non-string column".to_string()))
            .collect::<Result<Vec<_>, _>>()?;
        let rows = payload
            .get("rows")
            .and_then(Value::as_array)
            .ok_or("missing payload.rows")?
            .iter()
            .map(|row| {
                row.as_array()
                    .ok_or("non-array row".to_string())?
                    .iter()
                    .map(|c| match c {
                        Value::Number(n) => n
                            .as_f64()
                            .map(Cell::Num)
                            .ok_or("non-f64 number".to_string()),
                        Value::String(s) => Ok(Cell::Text(s.clone())),
                        other => Err(format!("unsupported cell {other}")),
                    })
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Envelope { metadata, columns, rows })
    }
}

fn quote_csv(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn split_csv(line: &str) -> Result<Vec<String>, String> {
    let mut fields = Vec::new();
    let mut field = String::new();
    let mut chars = line.chars().peekable();
    let mut quoted = false;
    while let Some(c) = chars.next() {
        match c {
            '"' if quoted => {
                if chars.peek() == Some(&'"') {
                    chars.next();
                    field.push('"');
                } else {
                    quoted = false;
                }
            }
            '"' if field.is_empty() => quoted = true,
            ',' if !quoted => fields.push(std::mem::take(&mut field)),
            c => field.push(c),
        }
    }
    if quoted {
        return Err(format!("unterminated quote in: {line}"));
    }
    fields.push(field);
    Ok(fields)
}
