use std::fs;
use std::path::Path;

use snode_core::io::fmt_f64;

use crate::error::{CliError, CliResult};

/// CSV with `# key: value` comment lines above the header row.
#[derive(Debug, Default)]
pub(crate) struct Csv {
    text: String,
}

impl Csv {
    pub fn new(comments: &[(&str, String)], header: &[&str]) -> Self {
        let mut text = String::new();
        for (k, v) in comments {
            text.push_str(&format!("# {k}: {v}\n"));
        }
        text.push_str(&header.join(","));
        text.push('\n');
        Self { text }
    }

    pub fn row(&mut self, cells: &[String]) {
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        ensure_parent(path)?;
        fs::write(path, &self.text).map_err(|e| CliError::io(path, e))
    }
}

pub(crate) fn num(v: f64) -> String {
    fmt_f64(v)
}

pub(crate) fn ensure_parent(path: &Path) -> CliResult<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e)),
        _ => Ok(()),
    }
}

/// Attaches `path` to I/O failures coming out of the core library.
pub(crate) fn at(path: &Path) -> impl Fn(snode_core::Error) -> CliError + '_ {
    move |e| match e {
        snode_core::Error::Io(io) => CliError::io(path, io),
        other => other.into(),
    }
}
