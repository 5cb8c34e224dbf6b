//! Delimited numeric tables and Wigner matrix files.
//!
//! Every float is written as `{:.16e}` (17 significant digits), which parses
//! back to the identical `f64`. Missing values are written as `NaN`.

use std::fmt::Write as _;
use std::path::Path;

use giant_cavity_filter::WignerGrid;

use crate::config::TableFormat;
use crate::error::{CliError, Result};

pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

/// Header row plus one line per row.
pub fn render_table(columns: &[String], rows: &[Vec<f64>], format: TableFormat) -> String {
    let d = format.delimiter();
    let mut out = String::new();
    out.push_str(&columns.join(&d.to_string()));
    out.push('\n');
    for row in rows {
        push_row(&mut out, row, d);
    }
    out
}

fn push_row(out: &mut String, row: &[f64], d: char) {
    for (i, v) in row.iter().enumerate() {
        if i > 0 {
            out.push(d);
        }
        write!(out, "{v:.16e}").expect("writing to a String");
    }
    out.push('\n');
}

/// One `# key=value ...` header line, then `n_q` lines of `n_p` values.
/// Line `i` holds `W(q_i, p_j)` for `j = 0..n_p`.
pub fn render_wigner(header: &[(&str, String)], grid: &WignerGrid, format: TableFormat) -> String {
    let d = format.delimiter();
    let mut out = String::from("#");
    for (key, value) in header {
        write!(out, " {key}={value}").expect("writing to a String");
    }
    out.push('\n');
    for i in 0..grid.spec().n_q {
        push_row(&mut out, grid.row(i), d);
    }
    out
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Parses a table written by [`render_table`].
pub fn parse_table(text: &str, format: TableFormat) -> Option<(Vec<String>, Vec<Vec<f64>>)> {
    let d = format.delimiter();
    let mut lines = text.lines();
    let columns = lines.next()?.split(d).map(str::to_string).collect();
    let rows = lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.split(d)
                .map(|v| v.parse().ok())
                .collect::<Option<Vec<f64>>>()
        })
        .collect::<Option<_>>()?;
    Some((columns, rows))
}

/// Header `key=value` pairs and grid rows.
pub type WignerFile = (Vec<(String, String)>, Vec<Vec<f64>>);

/// Parses a Wigner file into its header pairs and row-major values.
pub fn parse_wigner(text: &str, format: TableFormat) -> Option<WignerFile> {
    let mut lines = text.lines();
    let header = lines
        .next()?
        .strip_prefix('#')?
        .split_whitespace()
        .map(|kv| {
            kv.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
        })
        .collect::<Option<_>>()?;
    let d = format.delimiter();
    let rows = lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.split(d)
                .map(|v| v.parse().ok())
                .collect::<Option<Vec<f64>>>()
        })
        .collect::<Option<_>>()?;
    Some((header, rows))
}
