use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::EntropyStats;
use crate::error::{read_to_string, write_file, Error, Result};

/// Summary written by evaluation runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub bleu: f64,
    pub rouge_l: f64,
    pub mean_entropy: f64,
    pub repetition_rate: f64,
    pub token_accuracy: f64,
    pub exact_match: f64,
    pub sentences: usize,
    pub test_digest: String,
}

/// Attention (and optionally write-gate) matrix for one decoded sentence:
/// one row per decoder step, one column per source token.
#[derive(Clone, Debug, PartialEq)]
pub struct Heatmap {
    pub source: Vec<String>,
    pub output: Vec<String>,
    pub attention: Vec<Vec<f64>>,
    pub gates: Option<Vec<Vec<f64>>>,
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn matrix_csv(source: &[String], output: &[String], rows: &[Vec<f64>]) -> String {
    let mut out = String::from("step");
    for s in source {
        out.push(',');
        out.push_str(&csv_field(s));
    }
    out.push('\n');
    for (i, row) in rows.iter().enumerate() {
        let label = output.get(i).map_or_else(|| format!("#{i}"), |t| csv_field(t));
        out.push_str(&label);
        for v in row {
            // shortest representation that round-trips exactly
            let _ = write!(out, ",{v:?}");
        }
        out.push('\n');
    }
    out
}

/// Writes `<stem>.attention.csv` and, when gates are present,
/// `<stem>.gates.csv`. Returns the paths written.
pub fn export_heatmap(heatmap: &Heatmap, stem: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let path = stem.with_extension("attention.csv");
    write_file(&path, matrix_csv(&heatmap.source, &heatmap.output, &heatmap.attention))?;
    written.push(path);
    if let Some(gates) = &heatmap.gates {
        let path = stem.with_extension("gates.csv");
        write_file(&path, matrix_csv(&heatmap.source, &heatmap.output, gates))?;
        written.push(path);
    }
    Ok(written)
}

fn split_csv_line(line: &str) -> Vec<String> {
    let mut fields = Vec::new();
    let mut cur = String::new();
    let mut quoted = false;
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '"' if quoted && chars.peek() == Some(&'"') => {
                cur.push('"');
                chars.next();
            }
            '"' => quoted = !quoted,
            ',' if !quoted => fields.push(std::mem::take(&mut cur)),
            _ => cur.push(c),
        }
    }
    fields.push(cur);
    fields
}

/// Parse a heatmap matrix back into (source tokens, row labels, values).
pub fn read_heatmap_csv(path: &Path) -> Result<(Vec<String>, Vec<String>, Vec<Vec<f64>>)> {
    let text = read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or(Error::Empty("heatmap file"))?;
    let source: Vec<String> = split_csv_line(header).into_iter().skip(1).collect();
    let mut labels = Vec::new();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let fields = split_csv_line(line);
        let parse_err = |message: String| Error::Parse { path: path.to_path_buf(), line: i + 2, message };
        if fields.len() != source.len() + 1 {
            return Err(parse_err(format!("expected {} fields, got {}", source.len() + 1, fields.len())));
        }
        labels.push(fields[0].clone());
        let row = fields[1..]
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| parse_err(e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok((source, labels, rows))
}

pub fn write_cdf_csv(path: &Path, stats: &EntropyStats) -> Result<()> {
    let mut out = String::from("value,cum_fraction\n");
    for (v, f) in super::cdf_table(stats) {
        let _ = writeln!(out, "{v:?},{f:?}");
    }
    write_file(path, out)
}

pub fn read_cdf_csv(path: &Path) -> Result<Vec<(f64, f64)>> {
    let text = read_to_string(path)?;
    text.lines()
        .enumerate()
        .skip(1)
        .map(|(i, line)| {
            let err = |m: String| Error::Parse { path: path.to_path_buf(), line: i + 1, message: m };
            let (a, b) = line.split_once(',').ok_or_else(|| err("expected two fields".into()))?;
            Ok((
                a.parse().map_err(|e: std::num::ParseFloatError| err(e.to_string()))?,
                b.parse().map_err(|e: std::num::ParseFloatError| err(e.to_string()))?,
            ))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn single_cell() {
        let dir = tempfile::tempdir().unwrap();
        let h = Heatmap { source: s(&["a"]), output: s(&["a"]), attention: vec![vec![1.0]], gates: None };
        let written = export_heatmap(&h, &dir.path().join("one")).unwrap();
        assert_eq!(written.len(), 1);
        let text = std::fs::read_to_string(&written[0]).unwrap();
        assert_eq!(text, "step,a\na,1.0\n");
    }

    #[test]
    fn round_trip_with_gates() {
        let dir = tempfile::tempdir().unwrap();
        let h = Heatmap {
            source: s(&["x", "y,z", "w"]),
            output: s(&["p", "q"]),
            attention: vec![vec![0.1, 0.2, 0.7], vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]],
            gates: Some(vec![vec![0.9, 0.5, 0.25], vec![0.125, 0.75, 0.999]]),
        };
        let written = export_heatmap(&h, &dir.path().join("s0")).unwrap();
        assert_eq!(written.len(), 2);
        let (src, labels, rows) = read_heatmap_csv(&written[0]).unwrap();
        assert_eq!(src, h.source);
        assert_eq!(labels, h.output);
        assert_eq!(rows, h.attention);
        for row in &rows {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
        let (_, _, gates) = read_heatmap_csv(&written[1]).unwrap();
        assert_eq!(Some(gates), h.gates);
    }
}
