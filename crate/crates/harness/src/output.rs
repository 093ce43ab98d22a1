//! Files written by the commands. Everything goes through a temp file in
//! the target directory and a rename, so readers never see partial output.

use std::io::Write;
use std::path::{Path, PathBuf};

use dyson_jacobi::geometry::NORMALIZATION;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::Config;
use crate::error::{HarnessError, Result};

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| HarnessError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| HarnessError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| HarnessError::io(path, e))?;
    tmp.persist(path).map_err(|e| HarnessError::io(path, e.error))?;
    Ok(())
}

/// Shortest round-trip decimal, empty for missing values.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        v.to_string()
    }
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// CSV table with a fixed header.
pub struct Table {
    writer: csv::Writer<Vec<u8>>,
    width: usize,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        let mut writer = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
        writer.write_record(header).expect("writing to memory");
        Self { writer, width: header.len() }
    }

    pub fn row(&mut self, fields: &[String]) {
        assert_eq!(fields.len(), self.width, "row width does not match header");
        self.writer.write_record(fields).expect("writing to memory");
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.writer.into_inner().expect("flushing to memory")
    }

    pub fn write(self, path: &Path) -> Result<()> {
        write_atomic(path, &self.into_bytes())
    }
}

/// Conventions that fix how the numbers are to be read.
pub const CONVENTIONS: &[&str] = &[
    "flattened potential and Gibbs energy use interaction coefficient beta",
    "drift confinement term is b - (a+b) x_i",
    "eigenfunction phi = sum x_i - n b/lambda with G phi = -lambda phi",
    "Hessian of V from direct differentiation (half-angle csc^2 terms)",
    "W2 upper bound in the flattened chart: pi e^{-rho t} sqrt(S(x0) + n b/lambda)",
    "t_mix levels are absolute distances; profile levels are fractions of W(0)",
    "matrix corner uses the n x n Gram M M^T with m = 2(a+b), p = 2b",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: Option<u64>,
    pub config_hash: String,
    pub config: String,
    pub normalization: String,
    pub ot_method: String,
    pub conventions: Vec<String>,
    pub files: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, cfg: &Config, files: &[&str]) -> Self {
        // the output directory does not change any result, so reruns elsewhere hash the same
        let config: String =
            cfg.to_text().lines().filter(|l| !l.starts_with("out =")).map(|l| format!("{l}\n")).collect();
        let config_hash = hex::encode(Sha256::digest(config.as_bytes()));
        Self {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed: cfg.seed,
            config_hash,
            config,
            normalization: NORMALIZATION.into(),
            ot_method: format!("{:?}", cfg.ot).to_lowercase(),
            conventions: CONVENTIONS.iter().map(|s| s.to_string()).collect(),
            files: files.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("manifest.json");
        write_json(&path, self)?;
        Ok(path)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| HarnessError::Numerical(e.to_string()))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}
