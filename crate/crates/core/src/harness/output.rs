use std::io::Write;

use serde_json::{Map, Value};

use crate::error::{Error, Result};

use super::sweep::SweepTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Text,
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(Format::Text),
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::InvalidParameter(format!(
                "unknown format '{other}' (expected csv|json)"
            ))),
        }
    }
}

/// Shortest rendering with 12 significant digits, like C's `%.12g`.
pub fn format_float(x: f64) -> String {
    const SIG: i32 = 12;
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{:.*e}", (SIG - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    if exp < -5 || exp >= SIG {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (SIG - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn cell(v: Option<f64>) -> String {
    v.map(format_float).unwrap_or_default()
}

pub fn meta_line() -> String {
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    format!(
        "# spinmetro {} generated-unix {}",
        env!("CARGO_PKG_VERSION"),
        secs
    )
}

pub fn write_csv<W: Write>(table: &SweepTable, out: W, meta: bool) -> Result<()> {
    let mut out = out;
    if meta {
        writeln!(out, "{}", meta_line()).map_err(|e| Error::Output(e.to_string()))?;
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["n".to_string(), "omega_over_gamma".into(), "theta".into()];
    header.extend(table.columns.iter().cloned());
    header.push("error".into());
    w.write_record(&header).map_err(|e| Error::Output(e.to_string()))?;
    for row in &table.rows {
        let mut rec = vec![
            row.params.n_spins.to_string(),
            format_float(row.params.omega),
            format_float(row.params.theta),
        ];
        rec.extend(row.values.iter().map(|v| cell(*v)));
        rec.push(row.error.clone().unwrap_or_default());
        w.write_record(&rec).map_err(|e| Error::Output(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::Output(e.to_string()))?;
    Ok(())
}

fn num(x: f64) -> Value {
    serde_json::Number::from_f64(x)
        .map(Value::Number)
        .unwrap_or(Value::Null)
}

pub fn table_json(table: &SweepTable) -> Value {
    let rows = table
        .rows
        .iter()
        .map(|row| {
            let mut m = Map::new();
            m.insert("n".into(), Value::from(row.params.n_spins));
            m.insert("omega_over_gamma".into(), num(row.params.omega));
            m.insert("theta".into(), num(row.params.theta));
            for (name, v) in table.columns.iter().zip(&row.values) {
                m.insert(name.clone(), v.map(num).unwrap_or(Value::Null));
            }
            m.insert(
                "error".into(),
                row.error.clone().map(Value::String).unwrap_or(Value::Null),
            );
            Value::Object(m)
        })
        .collect();
    Value::Array(rows)
}

pub fn write_json<W: Write>(value: &Value, mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| Error::Output(e.to_string()))?;
    writeln!(out).map_err(|e| Error::Output(e.to_string()))
}
