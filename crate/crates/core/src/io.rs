//! Small file helpers shared by the loaders: whole-file reads, numbered
//! line iteration, keyword-list parsing, CSV emission and content hashing.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Non-blank lines with their 1-based row numbers.
pub fn numbered_lines(text: &str) -> Vec<(usize, &str)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l))
        .collect()
}

/// One entry per line; `#` starts a comment, blank lines are ignored.
pub fn parse_list(text: &str) -> Vec<String> {
    text.lines()
        .map(|l| match l.find('#') {
            Some(pos) => &l[..pos],
            None => l,
        })
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&read_bytes(path)?))
}

/// Accumulates CSV rows in memory; rows are emitted in insertion order.
#[derive(Debug)]
pub struct CsvTable {
    writer: csv::Writer<Vec<u8>>,
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        Self::start(Vec::new(), header)
    }

    /// A table starting with a `# key=value ...` metadata line.
    pub fn with_meta(meta: &str, header: &[&str]) -> Self {
        Self::start(format!("# {meta}\n").into_bytes(), header)
    }

    fn start(prefix: Vec<u8>, header: &[&str]) -> Self {
        let mut t = CsvTable {
            writer: csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(prefix),
        };
        t.row(header.iter().copied());
        t
    }

    pub fn row<I, S>(&mut self, fields: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let fields: Vec<String> = fields.into_iter().map(|f| f.as_ref().to_string()).collect();
        // Writing into a Vec cannot fail.
        self.writer.write_record(&fields).expect("in-memory csv write");
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.writer.into_inner().expect("in-memory csv flush")
    }

    pub fn into_string(self) -> String {
        String::from_utf8(self.into_bytes()).expect("csv output is utf-8")
    }

    pub fn write_to(self, path: &Path) -> Result<()> {
        write_bytes(path, &self.into_bytes())
    }
}

/// Parses CSV text with a header row; `#` lines are skipped. Rows carry their
/// 1-based line numbers.
pub fn read_csv(text: &str, source_name: &str) -> Result<(Vec<String>, Vec<(usize, Vec<String>)>)> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .has_headers(true)
        .from_reader(text.as_bytes());
    let record_err = |e: csv::Error| {
        let row = e.position().map(|p| p.line() as usize).unwrap_or(0);
        Error::Record {
            source_name: source_name.to_string(),
            row,
            message: e.to_string(),
        }
    };
    let header: Vec<String> = reader
        .headers()
        .map_err(record_err)?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(record_err)?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        rows.push((line, rec.iter().map(str::to_string).collect()));
    }
    Ok((header, rows))
}
