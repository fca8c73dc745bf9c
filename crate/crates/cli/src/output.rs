//! Report writers. Numbers are emitted with 17 significant digits so the
//! CSV round-trips doubles bit-faithfully; every run also writes a
//! `meta.json` sidecar carrying the tolerances in force.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

use crate::config::OutputFormat;

/// `d.16e` gives one leading digit plus sixteen fractional digits.
pub fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes a numeric table as `name.csv` (comma-delimited, mandatory header)
/// or `name.json` (array of row objects), depending on the format.
pub fn write_table(
    dir: &Path,
    name: &str,
    format: OutputFormat,
    header: &[&str],
    rows: &[Vec<f64>],
) -> Result<()> {
    match format {
        OutputFormat::Csv => {
            let path = dir.join(format!("{name}.csv"));
            let mut w =
                BufWriter::new(File::create(&path).with_context(|| format!("creating {name}.csv"))?);
            writeln!(w, "{}", header.join(","))?;
            for row in rows {
                let cells: Vec<String> = row.iter().map(|&v| fmt(v)).collect();
                writeln!(w, "{}", cells.join(","))?;
            }
            w.flush()?;
        }
        OutputFormat::Json => {
            let path = dir.join(format!("{name}.json"));
            let objects: Vec<serde_json::Map<String, serde_json::Value>> = rows
                .iter()
                .map(|row| {
                    header
                        .iter()
                        .zip(row)
                        .map(|(&h, &v)| (h.to_string(), serde_json::json!(v)))
                        .collect()
                })
                .collect();
            write_json(dir, &path.file_name().unwrap().to_string_lossy(), &objects)?;
        }
    }
    Ok(())
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let path = dir.join(name);
    let mut w = BufWriter::new(File::create(&path).with_context(|| format!("creating {name}"))?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}
