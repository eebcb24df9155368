//! Result files: atomic writes, JSON with 17 significant digits, CSV tables
//! and the run manifest.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};
use sha2::{Digest, Sha256};

/// Pretty JSON whose floats always carry 17 significant digits.
struct Digits17<'a>(PrettyFormatter<'a>);

impl Formatter for Digits17<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        write!(w, "{v:.16e}")
    }
    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, v: f32) -> io::Result<()> {
        self.write_f64(w, f64::from(v))
    }
    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let mut ser =
        serde_json::Serializer::with_formatter(&mut out, Digits17(PrettyFormatter::new()));
    value.serialize(&mut ser)?;
    out.push(b'\n');
    Ok(out)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text =
        fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("malformed JSON in {}", path.display()))
}

pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

pub fn csv_table(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Vec<u8> {
    let mut s = header.join(",");
    s.push('\n');
    for row in rows {
        let _ = writeln!(s, "{}", row.join(","));
    }
    s.into_bytes()
}

/// Parses a numeric CSV with a header line; returns the header and the columns.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let text =
        fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<String> = lines
        .next()
        .with_context(|| format!("{} is empty", path.display()))?
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    let mut cols = vec![Vec::new(); header.len()];
    for (i, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != header.len() {
            bail!(
                "{} line {}: expected {} columns, found {}",
                path.display(),
                i + 2,
                header.len(),
                cells.len()
            );
        }
        for (col, cell) in cols.iter_mut().zip(cells) {
            let v: f64 = cell.trim().parse().with_context(|| {
                format!("{} line {}: bad number {cell:?}", path.display(), i + 2)
            })?;
            col.push(v);
        }
    }
    Ok((header, cols))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutputFile {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Stage {
    pub name: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSource {
    pub name: String,
    pub source: String,
    pub sha256: String,
}

/// Everything needed to audit a run: what was asked, what was used, how long
/// each stage took, and a checksum for every file written.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: serde_json::Value,
    pub model: Option<ModelSource>,
    pub stages: Vec<Stage>,
    pub verdicts: Vec<String>,
    pub outputs: Vec<OutputFile>,
}

/// Writes files for one run under a common prefix and records them.
pub struct Run {
    prefix: PathBuf,
    manifest: RunManifest,
    clock: Instant,
}

impl Run {
    pub fn new(prefix: &Path, command: &str, config: serde_json::Value) -> Self {
        Self {
            prefix: prefix.to_path_buf(),
            manifest: RunManifest {
                tool: env!("CARGO_PKG_NAME").into(),
                version: env!("CARGO_PKG_VERSION").into(),
                command: command.into(),
                config,
                model: None,
                stages: Vec::new(),
                verdicts: Vec::new(),
                outputs: Vec::new(),
            },
            clock: Instant::now(),
        }
    }

    pub fn set_model(&mut self, model: ModelSource) {
        self.manifest.model = Some(model);
    }

    /// Closes the current stage.
    pub fn stage(&mut self, name: &str) {
        self.manifest.stages.push(Stage {
            name: name.into(),
            seconds: self.clock.elapsed().as_secs_f64(),
        });
        self.clock = Instant::now();
    }

    pub fn verdict(&mut self, v: impl Into<String>) {
        self.manifest.verdicts.push(v.into());
    }

    pub fn path(&self, suffix: &str) -> PathBuf {
        let mut name = self
            .prefix
            .file_name()
            .map(|s| s.to_os_string())
            .unwrap_or_default();
        name.push(suffix);
        self.prefix.with_file_name(name)
    }

    pub fn write(&mut self, suffix: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.path(suffix);
        write_atomic(&path, bytes)?;
        self.manifest.outputs.push(OutputFile {
            path: path.clone(),
            sha256: sha256_hex(bytes),
        });
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, suffix: &str, value: &T) -> Result<PathBuf> {
        self.write(suffix, &to_json(value)?)
    }

    /// Writes `<prefix>_<command>_manifest.json`.
    pub fn finish(self) -> Result<PathBuf> {
        let path = self.path(&format!("_{}_manifest.json", self.manifest.command));
        write_atomic(&path, &to_json(&self.manifest)?)?;
        Ok(path)
    }
}

/// Temp file in the target directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir)
        .with_context(|| format!("cannot create a temporary file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_keep_seventeen_digits_and_round_trip() {
        let v = vec![0.1, 1.0 / 3.0, -2.5e-300, 6.0, f64::NAN];
        let text = String::from_utf8(to_json(&v).unwrap()).unwrap();
        assert!(text.contains("3.3333333333333331e-1"), "{text}");
        assert!(text.contains("null"));
        let back: Vec<Option<f64>> = serde_json::from_str(&text).unwrap();
        for (a, b) in v.iter().zip(&back) {
            match b {
                Some(b) => assert_eq!(a.to_bits(), b.to_bits()),
                None => assert!(a.is_nan()),
            }
        }
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        let xs = [0.1f64, -1.0 / 7.0, 1e-200];
        let rows = xs.iter().map(|&x| vec![fmt_f64(x), fmt_f64(2.0 * x)]);
        write_atomic(&p, &csv_table(&["x", "y"], rows)).unwrap();
        let (h, cols) = read_csv(&p).unwrap();
        assert_eq!(h, ["x", "y"]);
        assert_eq!(cols[0], xs);
        assert_eq!(cols[1][1], -2.0 / 7.0);
    }

    #[test]
    fn ragged_csv_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        fs::write(&p, "x,y\n1,2\n3\n").unwrap();
        let msg = read_csv(&p).unwrap_err().to_string();
        assert!(msg.contains("line 3"), "{msg}");
    }

    #[test]
    fn prefix_suffixes() {
        let run = Run::new(Path::new("out/a"), "solve", serde_json::Value::Null);
        assert_eq!(run.path("_meta.json"), Path::new("out/a_meta.json"));
    }

    #[test]
    fn digest_of_empty_input() {
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }
}
