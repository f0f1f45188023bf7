//! Whitespace-separated text tables with `#` comment headers.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-4..1e15).contains(&a) || !v.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// A parsed table: comment lines (without the leading `#`) and numeric rows
/// with their 1-based line numbers.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub comments: Vec<String>,
    pub rows: Vec<(usize, Vec<f64>)>,
}

impl Table {
    /// Value of a `# key = value` header line.
    pub fn header(&self, key: &str) -> Option<&str> {
        self.comments.iter().find_map(|c| {
            let (k, v) = c.split_once('=')?;
            (k.trim() == key).then(|| v.trim())
        })
    }
}

pub fn read_table(path: &Path) -> Result<Table> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_table(&text, &path.display().to_string())
}

pub fn parse_table(text: &str, name: &str) -> Result<Table> {
    let mut t = Table::default();
    for (i, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if let Some(c) = trimmed.strip_prefix('#') {
            t.comments.push(c.trim().to_string());
            continue;
        }
        let data = trimmed.split('#').next().unwrap_or("").trim();
        if data.is_empty() {
            continue;
        }
        let vals = data
            .split_whitespace()
            .map(|s| {
                s.parse::<f64>().map_err(|_| Error::Parse {
                    path: name.to_string(),
                    line: i + 1,
                    msg: format!("not a number: {s:?}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        t.rows.push((i + 1, vals));
    }
    Ok(t)
}

/// Joins values with single spaces.
pub fn row(vals: &[f64]) -> String {
    let mut s = String::new();
    for (i, v) in vals.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{}", fmt_f64(*v));
    }
    s
}

/// Prefixes every line of `header` with `# `.
pub fn comment_block(header: &str) -> String {
    header.lines().map(|l| format!("# {l}\n")).collect()
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for v in [0.0, 1.0, -2.5, 0.1, 1e-300, 123456.789, 1e20, 0.000123, f64::INFINITY, 11.278101] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
        }
        assert_eq!(fmt_f64(0.5), "0.5");
        assert_eq!(fmt_f64(1e-7), "1e-7");
    }

    #[test]
    fn parses_comments_and_rows() {
        let t = parse_table("# a = 1\n# b=x y\n\n1 2 3\n4 5 6 # flag\n", "t").unwrap();
        assert_eq!(t.header("a"), Some("1"));
        assert_eq!(t.header("b"), Some("x y"));
        assert_eq!(t.rows.len(), 2);
        assert_eq!(t.rows[1], (5, vec![4.0, 5.0, 6.0]));
    }

    #[test]
    fn reports_bad_numbers_with_line() {
        match parse_table("1 2\n3 x\n", "f") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }
}
