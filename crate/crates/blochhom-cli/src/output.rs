//! Output files: provenance, CSV/JSON emitters, the binary field dump and the
//! on-disk cache.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use blochhom::grid::{FieldOnGrid, Frame};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use crate::CliError;

pub const TOOL: &str = concat!("blochhom ", env!("CARGO_PKG_VERSION"));

/// Magic bytes of the binary field dump.
pub const FIELD_MAGIC: &[u8; 8] = b"BHFIELD1";

pub struct Output {
    pub dir: PathBuf,
    pub config_hash: String,
    pub verbose: bool,
}

fn io(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

impl Output {
    pub fn new(dir: PathBuf, config_hash: String, verbose: bool) -> Result<Output, CliError> {
        fs::create_dir_all(&dir).map_err(|e| io(&dir, e))?;
        Ok(Output { dir, config_hash, verbose })
    }

    pub fn log(&self, msg: impl AsRef<str>) {
        if self.verbose {
            eprintln!("[blochhom] {}", msg.as_ref());
        }
    }

    pub fn provenance(&self) -> Value {
        json!({ "tool": TOOL, "config_sha256": self.config_hash })
    }

    fn header_line(&self) -> String {
        format!("# {TOOL} config_sha256={}", self.config_hash)
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Pretty JSON with a "provenance" block added to the top-level object.
    pub fn write_json(&self, name: &str, mut body: Value) -> Result<PathBuf, CliError> {
        if let Value::Object(map) = &mut body {
            map.insert("provenance".into(), self.provenance());
        }
        let path = self.path(name);
        let mut text = serde_json::to_string_pretty(&body).expect("json serializes");
        text.push('\n');
        fs::write(&path, text).map_err(|e| io(&path, e))?;
        self.log(format!("wrote {}", path.display()));
        Ok(path)
    }

    /// CSV with '#' comment lines (provenance first), then a header row and records.
    pub fn write_csv(&self, name: &str, comments: &[String], header: &[&str], rows: &[Vec<String>]) -> Result<PathBuf, CliError> {
        self.write_csv_sections(name, comments, &[(None, header, rows.to_vec())])
    }

    /// Several header+records blocks in one file; a titled block is preceded
    /// by a "# <title>" line.
    pub fn write_csv_sections(
        &self,
        name: &str,
        comments: &[String],
        sections: &[(Option<&str>, &[&str], Vec<Vec<String>>)],
    ) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        let mut buf = Vec::new();
        writeln!(buf, "{}", self.header_line()).unwrap();
        for c in comments {
            writeln!(buf, "# {c}").unwrap();
        }
        for (title, header, rows) in sections {
            if let Some(t) = title {
                writeln!(buf, "# {t}").unwrap();
            }
            let mut w = csv::WriterBuilder::new().flexible(true).from_writer(&mut buf);
            w.write_record(*header).map_err(|e| io(&path, e))?;
            for r in rows {
                w.write_record(r).map_err(|e| io(&path, e))?;
            }
            w.flush().map_err(|e| io(&path, e))?;
        }
        fs::write(&path, buf).map_err(|e| io(&path, e))?;
        self.log(format!("wrote {}", path.display()));
        Ok(path)
    }

    pub fn write_field_csv(&self, name: &str, field: &FieldOnGrid, extra: &[String]) -> Result<PathBuf, CliError> {
        let g = &field.grid;
        let mut comments = vec![format!(
            "field={} frame={} eps={} p={} sigma={} omega_hat={}",
            field.meta.kind.name(),
            frame_name(g.frame),
            num(field.meta.eps),
            field.meta.p,
            num(field.meta.sigma),
            num(field.meta.omega_hat)
        )];
        comments.extend_from_slice(extra);
        let header: &[&str] = if g.d == 1 { &["x1", "re", "im"] } else { &["x1", "x2", "re", "im"] };
        let rows: Vec<Vec<String>> = field
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let x = g.point(i);
                let mut r = vec![num(x[0])];
                if g.d == 2 {
                    r.push(num(x[1]));
                }
                r.push(num(v.re));
                r.push(num(v.im));
                r
            })
            .collect();
        self.write_csv(name, &comments, header, &rows)
    }

    /// Little-endian dump:
    /// magic "BHFIELD1", u32 provenance length, provenance bytes,
    /// u32 d, u64 n1, u64 n2, f64 eps, u8 frame (0 fast, 1 slow),
    /// f64 origin[2], f64 spacing[2], then n1*n2 (re, im) f64 pairs,
    /// row-major with x1 fastest.
    pub fn write_field_binary(&self, name: &str, field: &FieldOnGrid) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        let prov = self.header_line();
        let g = &field.grid;
        let mut buf = Vec::with_capacity(64 + prov.len() + 16 * field.values.len());
        buf.extend_from_slice(FIELD_MAGIC);
        buf.extend_from_slice(&(prov.len() as u32).to_le_bytes());
        buf.extend_from_slice(prov.as_bytes());
        buf.extend_from_slice(&(g.d as u32).to_le_bytes());
        buf.extend_from_slice(&(g.counts[0] as u64).to_le_bytes());
        buf.extend_from_slice(&(g.counts[1] as u64).to_le_bytes());
        buf.extend_from_slice(&field.meta.eps.to_le_bytes());
        buf.push(if g.frame == Frame::Fast { 0 } else { 1 });
        for v in [g.origin[0], g.origin[1], g.spacing[0], g.spacing[1]] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for v in &field.values {
            buf.extend_from_slice(&v.re.to_le_bytes());
            buf.extend_from_slice(&v.im.to_le_bytes());
        }
        fs::write(&path, buf).map_err(|e| io(&path, e))?;
        self.log(format!("wrote {}", path.display()));
        Ok(path)
    }

    fn cache_path(&self, module: &str, hash: &str) -> PathBuf {
        self.dir.join(".cache").join(format!("{module}-{hash}.json"))
    }

    /// Cached value for (module, hash), or compute and store it. Unreadable
    /// cache entries are recomputed.
    pub fn cached<T: Serialize + DeserializeOwned>(
        &self,
        module: &str,
        hash: &str,
        compute: impl FnOnce() -> Result<T, CliError>,
    ) -> Result<T, CliError> {
        let path = self.cache_path(module, hash);
        if let Ok(text) = fs::read_to_string(&path) {
            if let Ok(v) = serde_json::from_str(&text) {
                self.log(format!("reusing {}", path.display()));
                return Ok(v);
            }
        }
        let v = compute()?;
        let dir = path.parent().expect("cache path has a parent");
        fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        fs::write(&path, serde_json::to_string(&v).expect("cache entry serializes")).map_err(|e| io(&path, e))?;
        Ok(v)
    }
}

pub fn frame_name(f: Frame) -> &'static str {
    match f {
        Frame::Fast => "fast",
        Frame::Slow => "slow",
    }
}

/// Shortest round-trip decimal form.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}
