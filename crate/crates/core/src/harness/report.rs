//! Rendering of result CSVs.

use std::io::Read;

use crate::error::{Error, Result};
use crate::harness::experiment::CSV_HEADER;

/// A parsed result CSV: header plus string records.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResultTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl ResultTable {
    pub fn read<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let fmt = |e: csv::Error| {
            let offset = e.position().map(|p| p.byte()).unwrap_or(0);
            Error::format(offset, e.to_string())
        };
        let header: Vec<String> = r.headers().map_err(fmt)?.iter().map(str::to_string).collect();
        if header != CSV_HEADER {
            return Err(Error::format(0, "unexpected CSV header"));
        }
        let mut rows = Vec::new();
        for rec in r.records() {
            rows.push(rec.map_err(fmt)?.iter().map(str::to_string).collect());
        }
        Ok(ResultTable { header, rows })
    }

    fn column(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::config(format!("no column {name:?}")))
    }

    /// Only the per-run `mean` rows.
    pub fn means(&self) -> Self {
        let v = self.header.iter().position(|h| h == "victim");
        ResultTable {
            header: self.header.clone(),
            rows: self.rows.iter().filter(|r| v.is_some_and(|i| r[i] == "mean")).cloned().collect(),
        }
    }

    /// Space-aligned plain-text table of the chosen columns (all if empty).
    pub fn render_text(&self, columns: &[&str]) -> Result<String> {
        let cols: Vec<usize> = if columns.is_empty() {
            (0..self.header.len()).collect()
        } else {
            columns.iter().map(|c| self.column(c)).collect::<Result<_>>()?
        };
        let mut width: Vec<usize> = cols.iter().map(|&c| self.header[c].len()).collect();
        for r in &self.rows {
            for (w, &c) in width.iter_mut().zip(&cols) {
                *w = (*w).max(r[c].len());
            }
        }
        let line = |cells: Vec<&str>| {
            let s: Vec<String> = cells.iter().zip(&width).map(|(c, w)| format!("{c:<w$}")).collect();
            s.join("  ").trim_end().to_string()
        };
        let mut out = line(cols.iter().map(|&c| self.header[c].as_str()).collect());
        out.push('\n');
        let rule: Vec<String> = width.iter().map(|w| "-".repeat(*w)).collect();
        out.push_str(&rule.join("  "));
        out.push('\n');
        for r in &self.rows {
            out.push_str(&line(cols.iter().map(|&c| r[c].as_str()).collect()));
            out.push('\n');
        }
        Ok(out)
    }

    /// Whitespace-separated `axis_value transfer_asr` blocks, one per
    /// method/tricks series, separated by blank lines (gnuplot `index`).
    pub fn render_gnuplot(&self) -> Result<String> {
        let m = self.means();
        let (method, tricks, value, asr) =
            (m.column("method")?, m.column("tricks")?, m.column("axis_value")?, m.column("transfer_asr")?);
        let mut series: Vec<(String, Vec<(String, String)>)> = Vec::new();
        for r in &m.rows {
            let key = format!("{} {}", r[method], r[tricks]);
            let point = (r[value].clone(), r[asr].clone());
            match series.iter_mut().find(|(k, _)| *k == key) {
                Some((_, pts)) => pts.push(point),
                None => series.push((key, vec![point])),
            }
        }
        let mut out = String::new();
        for (i, (key, pts)) in series.iter().enumerate() {
            if i > 0 {
                out.push_str("\n\n");
            }
            out.push_str(&format!("# {key}\n"));
            for (x, y) in pts {
                let x = if x.is_empty() { "0" } else { x };
                out.push_str(&format!("{x} {y}\n"));
            }
        }
        Ok(out)
    }
}
