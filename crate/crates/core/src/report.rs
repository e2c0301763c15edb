//! Line-delimited `key<TAB>value` metrics reports.
//!
//! ```text
//! run_id	3f2a9c01d4e5b6a7-s0
//! config_hash	3f2a9c01d4e5b6a7
//! metric.knn_accuracy	0.962
//! series.mean_l_total.0	-1.41
//! series.mean_l_total.1	-1.77
//! ```
//!
//! Floats are written in Rust's shortest round-trip form, so parsing a
//! report gives back exactly the values that were written.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::binio;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsReport {
    pub run_id: String,
    pub config_hash: String,
    pub metrics: BTreeMap<String, f64>,
    /// Per-epoch (or per-dimension) sequences.
    pub series: BTreeMap<String, Vec<f64>>,
}

fn check_key(key: &str) -> Result<()> {
    if key.is_empty() || key.contains(['\t', '\n', '\r']) {
        return Err(Error::invalid(format!("bad report key {key:?}")));
    }
    Ok(())
}

fn check_value(key: &str, v: f64) -> Result<()> {
    if !v.is_finite() {
        return Err(Error::Numerical(format!("report value {key} is not finite")));
    }
    Ok(())
}

impl MetricsReport {
    pub fn new(run_id: impl Into<String>, config_hash: impl Into<String>) -> Self {
        Self {
            run_id: run_id.into(),
            config_hash: config_hash.into(),
            ..Self::default()
        }
    }

    pub fn metric(&mut self, key: impl Into<String>, value: f64) -> Result<()> {
        let key = key.into();
        check_key(&key)?;
        check_value(&key, value)?;
        self.metrics.insert(key, value);
        Ok(())
    }

    pub fn series(&mut self, key: impl Into<String>, values: Vec<f64>) -> Result<()> {
        let key = key.into();
        check_key(&key)?;
        for v in &values {
            check_value(&key, *v)?;
        }
        self.series.insert(key, values);
        Ok(())
    }

    pub fn encode(&self) -> Result<String> {
        check_key(&self.run_id)?;
        check_key(&self.config_hash)?;
        let mut out = String::new();
        writeln!(out, "run_id\t{}", self.run_id).unwrap();
        writeln!(out, "config_hash\t{}", self.config_hash).unwrap();
        for (k, v) in &self.metrics {
            check_key(k)?;
            check_value(k, *v)?;
            writeln!(out, "metric.{k}\t{v}").unwrap();
        }
        for (k, vals) in &self.series {
            check_key(k)?;
            for (i, v) in vals.iter().enumerate() {
                check_value(k, *v)?;
                writeln!(out, "series.{k}.{i}\t{v}").unwrap();
            }
        }
        Ok(out)
    }

    pub fn decode(text: &str) -> Result<Self> {
        let mut report = Self::default();
        let mut seen_id = false;
        let mut seen_hash = false;
        for (lineno, line) in text.lines().enumerate() {
            let bad = |what: &str| Error::format(format!("report line {}: {what}", lineno + 1));
            let (key, value) = line.split_once('\t').ok_or_else(|| bad("missing tab"))?;
            let number = || -> Result<f64> {
                let v: f64 = value.parse().map_err(|_| bad("value is not a number"))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(bad("value is not finite"))
                }
            };
            if key == "run_id" {
                report.run_id = value.to_string();
                seen_id = true;
            } else if key == "config_hash" {
                report.config_hash = value.to_string();
                seen_hash = true;
            } else if let Some(name) = key.strip_prefix("metric.") {
                report.metrics.insert(name.to_string(), number()?);
            } else if let Some(rest) = key.strip_prefix("series.") {
                let (name, idx) = rest.rsplit_once('.').ok_or_else(|| bad("series key has no index"))?;
                let idx: usize = idx.parse().map_err(|_| bad("series index is not an integer"))?;
                let values = report.series.entry(name.to_string()).or_default();
                if idx != values.len() {
                    return Err(bad("series indices out of order"));
                }
                values.push(number()?);
            } else {
                return Err(bad("unknown key"));
            }
        }
        if !seen_id || !seen_hash {
            return Err(Error::format("report lacks run_id or config_hash"));
        }
        Ok(report)
    }

    /// Two aligned columns for the terminal; series show their last value.
    pub fn render_table(&self) -> String {
        let mut rows: Vec<(String, String)> = vec![
            ("run_id".into(), self.run_id.clone()),
            ("config_hash".into(), self.config_hash.clone()),
        ];
        rows.extend(self.metrics.iter().map(|(k, v)| (k.clone(), format!("{v:.6}"))));
        for (k, vals) in &self.series {
            if let Some(last) = vals.last() {
                rows.push((format!("{k} (last of {})", vals.len()), format!("{last:.6}")));
            }
        }
        let width = rows.iter().map(|(k, _)| k.chars().count()).max().unwrap_or(0);
        let mut out = String::new();
        for (k, v) in rows {
            writeln!(out, "{k:<width$}  {v}").unwrap();
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        binio::write_atomic(path, self.encode()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = binio::read_file(path)?;
        let text = String::from_utf8(bytes).map_err(|_| Error::format(format!("{} is not UTF-8", path.display())))?;
        Self::decode(&text)
    }
}

/// Run id for a config and seed: stable across reruns.
pub fn run_id(config_hash: &str, seed: u64) -> String {
    format!("{config_hash}-s{seed}")
}

/// Renders rows of cells as a left-aligned text table with a header rule.
pub fn render_rows(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: Vec<&str>| -> String {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, &w)| format!("{c:<w$}"))
            .collect();
        padded.join("  ").trim_end().to_string()
    };
    let mut out = String::new();
    out.push_str(&line(header.to_vec()));
    out.push('\n');
    let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
    out.push_str(&line(rule.iter().map(String::as_str).collect()));
    out.push('\n');
    for row in rows {
        out.push_str(&line(row.iter().map(String::as_str).collect()));
        out.push('\n');
    }
    out
}
