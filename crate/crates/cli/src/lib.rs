//! Batch front-end for torus-pdo: JSON scenario configs in, CSV/JSON artifacts out.

pub mod commands;
pub mod config;
pub mod expr;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

pub use config::ScenarioConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CliError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Internal(_) => EXIT_INTERNAL,
        }
    }

    /// Errors raised while building inputs from the config: bad tags and boxes are usage errors.
    pub fn setup(key: &str, e: torus_pdo::Error) -> Self {
        match e {
            torus_pdo::Error::Parse { .. } | torus_pdo::Error::Configuration(_) => {
                CliError::Usage(format!("config key `{key}`: {e}"))
            }
            other => Self::from(other),
        }
    }
}

impl From<torus_pdo::Error> for CliError {
    fn from(e: torus_pdo::Error) -> Self {
        match e {
            torus_pdo::Error::Io(m) => CliError::Internal(m),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Internal(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Internal(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Artifact directory; remembers what was written for the manifest.
#[derive(Debug)]
pub struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    pub fn create(dir: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Internal(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Outputs { dir: dir.to_path_buf(), files: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    /// Opens `name` for writing and hands the writer to `f`.
    pub fn write_with(
        &mut self,
        name: &str,
        f: impl FnOnce(&mut BufWriter<File>) -> CliResult<()>,
    ) -> CliResult<()> {
        let path = self.dir.join(name);
        let file = File::create(&path).map_err(|e| CliError::Internal(format!("{}: {e}", path.display())))?;
        let mut w = BufWriter::new(file);
        f(&mut w)?;
        w.flush()?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        self.write_with(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            w.write_all(b"\n")?;
            Ok(())
        })
    }

    /// Plain numeric CSV with a header row.
    pub fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
        self.write_with(name, |w| {
            writeln!(w, "{}", header.join(","))?;
            for r in rows {
                writeln!(w, "{}", r.join(","))?;
            }
            Ok(())
        })
    }

    pub fn grid_function(&mut self, name: &str, u: &torus_pdo::GridFunction) -> CliResult<()> {
        self.write_with(name, |w| Ok(torus_pdo::io::write_grid_function_csv(u, w)?))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Versions {
    pub torus_pdo: String,
    pub torus_pdo_cli: String,
}

/// Record of one run, written as `manifest.json` next to the artifacts.
#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    /// SHA-256 over the config bytes followed by every referenced input file.
    pub inputs_sha256: String,
    pub inputs: Vec<String>,
    pub versions: Versions,
    pub seed: u64,
    pub threads: usize,
    pub wall_time_seconds: f64,
    pub outputs: Vec<String>,
}

/// Flags that override or complement the config.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

fn hash_inputs(config_bytes: &[u8], cfg: &ScenarioConfig) -> CliResult<(String, Vec<String>)> {
    let mut h = Sha256::new();
    h.update(config_bytes);
    let mut names = Vec::new();
    for p in cfg.referenced_files() {
        let bytes = std::fs::read(&p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
        h.update(&bytes);
        names.push(p.display().to_string());
    }
    let digest = h.finalize();
    Ok((digest.iter().map(|b| format!("{b:02x}")).collect(), names))
}

/// Runs a parsed scenario and writes its artifacts plus the manifest; returns the output directory.
pub fn run(cfg: &ScenarioConfig, config_bytes: &[u8], opts: &RunOptions) -> CliResult<PathBuf> {
    let start = Instant::now();
    let seed = opts.seed.or(cfg.common.seed).unwrap_or(0);
    let dir = opts
        .out
        .clone()
        .or_else(|| cfg.common.out.as_ref().map(|p| cfg.base_dir.join(p)))
        .unwrap_or_else(|| PathBuf::from("out"));
    let (inputs_sha256, inputs) = hash_inputs(config_bytes, cfg)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = opts.threads {
        builder = builder.num_threads(t);
    }
    let pool = builder.build().map_err(|e| CliError::Internal(e.to_string()))?;
    let threads = pool.current_num_threads();
    let mut out = Outputs::create(&dir)?;
    pool.install(|| commands::dispatch(cfg, seed, &mut out))?;
    let manifest = Manifest {
        command: cfg.common.command.clone(),
        inputs_sha256,
        inputs,
        versions: Versions {
            torus_pdo: torus_pdo::VERSION.to_string(),
            torus_pdo_cli: env!("CARGO_PKG_VERSION").to_string(),
        },
        seed,
        threads,
        wall_time_seconds: start.elapsed().as_secs_f64(),
        outputs: out.files().to_vec(),
    };
    out.json("manifest.json", &manifest)?;
    Ok(dir)
}

/// Loads the config at `path` and runs it.
pub fn run_file(path: &Path, opts: &RunOptions) -> CliResult<PathBuf> {
    let (cfg, bytes) = ScenarioConfig::load(path)?;
    run(&cfg, &bytes, opts)
}

/// `--threads`, else `TORUS_PDO_THREADS`, else rayon's default.
pub fn resolve_threads(flag: Option<usize>, env: Option<&str>) -> CliResult<Option<usize>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match env.map(str::trim).filter(|s| !s.is_empty()) {
        None => Ok(None),
        Some(s) => s
            .parse::<usize>()
            .ok()
            .filter(|&k| k > 0)
            .map(Some)
            .ok_or_else(|| CliError::Usage(format!("TORUS_PDO_THREADS = {s:?} is not a positive integer"))),
    }
}
