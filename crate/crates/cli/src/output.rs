//! Output directory with CSV writers. Files are tracked so a failed run can
//! remove what it wrote.
//!
//! Numbers are written with Rust's `{:e}` formatting: the shortest decimal
//! mantissa that round-trips to the same `f64`, in scientific notation
//! (`1e0`, `-2.5e-1`). Counts and indices are plain integers.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::CliError;

pub fn num(x: f64) -> String {
    format!("{x:e}")
}

pub struct OutputDir {
    root: PathBuf,
    created_root: bool,
    files: Vec<PathBuf>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        let created_root = !root.exists();
        fs::create_dir_all(root).map_err(|source| CliError::Io {
            path: root.to_path_buf(),
            source,
        })?;
        Ok(Self {
            root: root.to_path_buf(),
            created_root,
            files: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// File names written so far, in order.
    pub fn file_names(&self) -> Vec<String> {
        self.files
            .iter()
            .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .collect()
    }

    fn open(&mut self, name: &str) -> Result<(PathBuf, BufWriter<File>), CliError> {
        let path = self.root.join(name);
        let f = File::create(&path).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?;
        self.files.push(path.clone());
        Ok((path, BufWriter::new(f)))
    }

    /// Writes a CSV with the given header; each row is already formatted.
    pub fn csv<I>(&mut self, name: &str, header: &[String], rows: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        let (path, mut w) = self.open(name)?;
        let io = |source| CliError::Io {
            path: path.clone(),
            source,
        };
        writeln!(w, "{}", header.join(",")).map_err(io)?;
        for row in rows {
            writeln!(w, "{}", row.join(",")).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn text(&mut self, name: &str, content: &str) -> Result<(), CliError> {
        let (path, mut w) = self.open(name)?;
        let io = |source| CliError::Io {
            path: path.clone(),
            source,
        };
        w.write_all(content.as_bytes()).map_err(io)?;
        w.flush().map_err(io)
    }

    /// Removes every file written by this run, and the directory if the run
    /// created it.
    pub fn discard(self) {
        for f in &self.files {
            let _ = fs::remove_file(f);
        }
        if self.created_root {
            let _ = fs::remove_dir(&self.root);
        }
    }
}
