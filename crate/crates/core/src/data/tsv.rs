use std::path::Path;

use super::Pair;
use crate::error::{read_to_string, write_file, Error, Result};

/// One `source<TAB>target` pair per line, both sides whitespace-tokenized.
/// Blank lines are skipped.
pub fn parse_tsv(text: &str, origin: &Path) -> Result<Vec<Pair>> {
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: &str| Error::Parse {
            path: origin.to_path_buf(),
            line: i + 1,
            message: message.to_string(),
        };
        let mut fields = line.split('\t');
        let (Some(src), Some(tgt), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(err("expected exactly one tab separating source and target"));
        };
        let source: Vec<String> = src.split_whitespace().map(String::from).collect();
        let target: Vec<String> = tgt.split_whitespace().map(String::from).collect();
        if source.is_empty() || target.is_empty() {
            return Err(err("empty source or target side"));
        }
        pairs.push(Pair::new(source, target));
    }
    if pairs.is_empty() {
        return Err(Error::Parse {
            path: origin.to_path_buf(),
            line: 0,
            message: "no sentence pairs".into(),
        });
    }
    Ok(pairs)
}

pub fn load_tsv(path: &Path) -> Result<Vec<Pair>> {
    parse_tsv(&read_to_string(path)?, path)
}

pub fn write_tsv(path: &Path, pairs: &[Pair]) -> Result<()> {
    let mut out = String::new();
    for p in pairs {
        out.push_str(&p.source.join(" "));
        out.push('\t');
        out.push_str(&p.target.join(" "));
        out.push('\n');
    }
    write_file(path, out)
}
