//! Tables, CSV emission and the human summary.

use finpart::expr::C64;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

pub fn num(x: f64) -> String {
    format!("{x:.15e}")
}

pub fn complex(z: C64) -> [String; 2] {
    [num(z.re), num(z.im)]
}

#[derive(Debug, Clone)]
pub struct Table {
    pub name: &'static str,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &'static str, columns: &[&'static str]) -> Self {
        Table { name, columns: columns.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

#[derive(Debug, Clone)]
pub struct Report {
    pub command: &'static str,
    pub header: Vec<String>,
    pub tables: Vec<Table>,
    pub summary: Vec<String>,
    /// Some residual exceeded its tolerance.
    pub failed: bool,
}

impl Report {
    pub fn new(command: &'static str, header: Vec<String>) -> Self {
        Report { command, header, tables: Vec::new(), summary: Vec::new(), failed: false }
    }

    /// Records a residual check in the summary and the failure flag.
    pub fn check(&mut self, what: &str, residual: f64, tolerance: f64) {
        let ok = residual <= tolerance;
        self.failed |= !ok;
        self.summary.push(format!("{what}: {residual:.3e} (tolerance {tolerance:.1e}) {}", if ok { "ok" } else { "FAIL" }));
    }

    fn write_table(&self, table: &Table, out: &mut dyn Write) -> io::Result<()> {
        writeln!(out, "# finpart {} ({})", self.command, table.name)?;
        for line in &self.header {
            writeln!(out, "# {line}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&table.columns)?;
        for row in &table.rows {
            w.write_record(row)?;
        }
        w.flush()
    }

    /// The first table goes to `path`, later ones to `<stem>_<name>.csv`
    /// next to it. Without a path everything goes to stdout.
    pub fn emit(&self, path: Option<&Path>) -> io::Result<Vec<PathBuf>> {
        let mut written = Vec::new();
        match path {
            Some(p) => {
                for (k, t) in self.tables.iter().enumerate() {
                    let target = if k == 0 { p.to_path_buf() } else { sibling(p, t.name) };
                    let mut f = io::BufWriter::new(std::fs::File::create(&target)?);
                    self.write_table(t, &mut f)?;
                    f.flush()?;
                    written.push(target);
                }
            }
            None => {
                let stdout = io::stdout();
                let mut lock = stdout.lock();
                for (k, t) in self.tables.iter().enumerate() {
                    if k > 0 {
                        writeln!(lock)?;
                    }
                    self.write_table(t, &mut lock)?;
                }
            }
        }
        Ok(written)
    }
}

fn sibling(p: &Path, name: &str) -> PathBuf {
    let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = p.extension().map(|e| format!(".{}", e.to_string_lossy())).unwrap_or_default();
    p.with_file_name(format!("{stem}_{name}{ext}"))
}
