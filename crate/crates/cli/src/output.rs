use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use crate::usage;

/// Writes `content` to `out`, or stdout when `out` is `None`.
pub fn emit(out: Option<&Path>, content: &[u8]) -> Result<()> {
    match out {
        Some(path) => {
            if path.is_dir() {
                return Err(usage(format!(
                    "--out {} is a directory; expected a file",
                    path.display()
                )));
            }
            fs::write(path, content).with_context(|| format!("writing {}", path.display()))
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(content)?;
            stdout.flush()?;
            Ok(())
        }
    }
}

/// Destination directory for commands that write one file per input value.
pub fn output_dir(out: Option<&Path>, what: &str) -> Result<PathBuf> {
    let Some(dir) = out else {
        return Err(usage(format!(
            "several {what} requested; pass --out <directory>"
        )));
    };
    if dir.exists() && !dir.is_dir() {
        return Err(usage(format!(
            "--out {} must be a directory for several {what}",
            dir.display()
        )));
    }
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir.to_path_buf())
}

pub fn json<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>> {
    let mut text = serde_json::to_vec_pretty(value)?;
    text.push(b'\n');
    Ok(text)
}

/// `--` for missing values, as in the printed tables.
pub fn or_dash(value: Option<f64>, render: impl Fn(f64) -> String) -> String {
    value.map_or_else(|| "--".to_string(), render)
}

/// Serializes an infinite leverage as the string `"inf"`, matching the CSV
/// sentinel.
pub fn ser_leverage<S: serde::Serializer>(value: &f64, s: S) -> Result<S::Ok, S::Error> {
    if value.is_infinite() {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*value)
    }
}

pub fn ser_opt_leverage<S: serde::Serializer>(
    value: &Option<f64>,
    s: S,
) -> Result<S::Ok, S::Error> {
    match value {
        Some(v) => ser_leverage(v, s),
        None => s.serialize_none(),
    }
}

pub fn leverage_text(value: f64) -> String {
    if value.is_infinite() {
        "inf".into()
    } else {
        format!("{value:.4}")
    }
}

/// Compact numeric label for file names: `0.15`, `10`, `0.1`.
pub fn label(value: f64) -> String {
    format!("{value}")
}

/// Left-aligned first column, right-aligned rest.
pub fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let cols = header.len();
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        let mut s = String::new();
        for (i, cell) in cells.iter().enumerate().take(cols) {
            let pad = widths[i] - cell.chars().count();
            if i == 0 {
                s.push_str(cell);
                s.push_str(&" ".repeat(pad));
            } else {
                s.push_str("  ");
                s.push_str(&" ".repeat(pad));
                s.push_str(cell);
            }
        }
        s.trim_end().to_string() + "\n"
    };
    let mut out = line(header.to_vec());
    for row in rows {
        out.push_str(&line(row.iter().map(String::as_str).collect()));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_aligns() {
        let t = table(
            &["name", "x"],
            &[
                vec!["a".into(), "1.5".into()],
                vec!["long".into(), "10".into()],
            ],
        );
        assert_eq!(t, "name    x\na     1.5\nlong   10\n");
    }

    #[test]
    fn dash_for_missing() {
        assert_eq!(or_dash(None, |v| v.to_string()), "--");
        assert_eq!(or_dash(Some(2.0), |v| v.to_string()), "2");
    }
}
