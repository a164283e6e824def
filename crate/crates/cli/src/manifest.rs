//! Run manifests written next to every output file.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use scma::format::to_json_pretty;
use serde::Serialize;
use serde_json::{json, Value};

/// Everything except `provenance` is a pure function of the arguments.
#[derive(Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config: Value,
    pub seed: Option<u64>,
    pub outputs: Vec<String>,
    pub provenance: Value,
}

pub struct Clock {
    started: Instant,
    unix: u64,
}

impl Clock {
    pub fn start() -> Self {
        let unix = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        Self { started: Instant::now(), unix }
    }
}

impl Manifest {
    pub fn new(command: &str, config: Value, seed: Option<u64>, outputs: Vec<String>, clock: &Clock) -> Self {
        Self {
            tool: "scma",
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            config,
            seed,
            outputs,
            provenance: json!({
                "threads": rayon::current_num_threads(),
                "argv": std::env::args().collect::<Vec<_>>(),
                "started_unix": clock.unix,
                "wall_clock_s": clock.started.elapsed().as_secs_f64(),
            }),
        }
    }

    pub fn write(&self, path: &Path) -> scma::Result<()> {
        std::fs::write(path, to_json_pretty(self)?)?;
        Ok(())
    }
}

/// `FILE.manifest.json` next to a single output file.
pub fn path_for_file(file: &Path) -> PathBuf {
    let mut name = file.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    file.with_file_name(name)
}
