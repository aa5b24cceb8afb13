//! Deterministic structured-text output.
//!
//! Reports are TOML-compatible: `[section]` headers followed by `key = value` lines, in the
//! order they were written. Reals use a fixed `{:.6e}` rendering so identical runs produce
//! byte-identical files.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Default, Clone)]
pub struct Report {
    buf: String,
}

impl Report {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn section(&mut self, name: &str) -> &mut Self {
        if !self.buf.is_empty() {
            self.buf.push('\n');
        }
        let _ = writeln!(self.buf, "[{name}]");
        self
    }

    pub fn real(&mut self, key: &str, v: f64) -> &mut Self {
        let _ = writeln!(self.buf, "{key} = {}", fmt_real(v));
        self
    }

    pub fn int(&mut self, key: &str, v: u64) -> &mut Self {
        let _ = writeln!(self.buf, "{key} = {v}");
        self
    }

    pub fn text(&mut self, key: &str, v: &str) -> &mut Self {
        let _ = writeln!(self.buf, "{key} = {}", quote(v));
        self
    }

    pub fn flag(&mut self, key: &str, v: bool) -> &mut Self {
        let _ = writeln!(self.buf, "{key} = {v}");
        self
    }

    /// Appends pre-rendered TOML (e.g. a config echo) under a prefix for its sections.
    pub fn raw(&mut self, text: &str) -> &mut Self {
        if !self.buf.is_empty() && !text.is_empty() {
            self.buf.push('\n');
        }
        self.buf.push_str(text);
        if !text.ends_with('\n') && !text.is_empty() {
            self.buf.push('\n');
        }
        self
    }

    pub fn as_str(&self) -> &str {
        &self.buf
    }

    pub fn into_string(self) -> String {
        self.buf
    }
}

/// Renders a real as `{:.6e}`, with TOML spellings for the non-finite values.
pub fn fmt_real(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.6e}")
    }
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for ch in s.chars() {
        match ch {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Writes `contents` to `path`, creating parent directories.
pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    let io = |source| Error::Io { path: path.display().to_string(), source };
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(io)?;
        }
    }
    std::fs::write(path, contents).map_err(io)
}
