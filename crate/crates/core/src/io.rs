//! Text and binary encodings shared by the library and the command line.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Formats a float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(n, l)| (n + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

/// Parses coefficient rows `i1,...,id,alpha`; a header row is optional.
pub fn parse_coefficient_table(text: &str) -> Result<(usize, BTreeMap<Vec<i64>, f64>)> {
    let mut dim = None;
    let mut entries = BTreeMap::new();
    for (n, line) in data_lines(text) {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.first().is_some_and(|f| f.starts_with('i')) {
            continue;
        }
        if fields.len() < 2 {
            return Err(Error::Parse(format!(
                "line {n}: need at least one index and a value"
            )));
        }
        let d = fields.len() - 1;
        if *dim.get_or_insert(d) != d {
            return Err(Error::Parse(format!(
                "line {n}: expected {} indices, found {d}",
                dim.unwrap()
            )));
        }
        let site = fields[..d]
            .iter()
            .map(|f| {
                f.parse::<i64>()
                    .map_err(|e| Error::Parse(format!("line {n}: bad index `{f}`: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let value: f64 = fields[d]
            .parse()
            .map_err(|e| Error::Parse(format!("line {n}: bad value `{}`: {e}", fields[d])))?;
        if entries.insert(site, value).is_some() {
            return Err(Error::Parse(format!("line {n}: duplicate site")));
        }
    }
    let dim = dim.ok_or_else(|| Error::Parse("coefficient table is empty".into()))?;
    Ok((dim, entries))
}

/// Writes coefficient rows `i1,...,id,alpha` with a header.
pub fn write_coefficient_table(dim: usize, entries: &BTreeMap<Vec<i64>, f64>) -> String {
    let mut out: String = (1..=dim).map(|k| format!("i{k},")).collect();
    out.push_str("alpha\n");
    for (k, v) in entries {
        for x in k {
            out.push_str(&format!("{x},"));
        }
        out.push_str(&fmt_f64(*v));
        out.push('\n');
    }
    out
}
