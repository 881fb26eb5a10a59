//! Run directories: outputs, a config echo per subcommand and a log file.
//! Timestamps only ever go to the log, so every other file is reproducible.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::Context;
use serde::Serialize;
use serde_json::{json, Value};

pub struct RunDir {
    path: PathBuf,
    command: &'static str,
    log: File,
}

impl RunDir {
    pub fn create(path: &Path, command: &'static str) -> anyhow::Result<Self> {
        fs::create_dir_all(path).with_context(|| format!("cannot create run directory {}", path.display()))?;
        let log_path = path.join(format!("{command}.log"));
        let log = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&log_path)
            .with_context(|| format!("cannot open {}", log_path.display()))?;
        let mut run = Self { path: path.to_path_buf(), command, log };
        run.log("started");
        Ok(run)
    }

    pub fn join(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    pub fn log(&mut self, msg: &str) {
        let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
        // Logging is best effort.
        let _ = writeln!(self.log, "{secs:.3} {}: {msg}", self.command);
    }

    /// Writes `<command>.config.json` with everything needed to rerun.
    pub fn echo<T: Serialize>(&self, seed: u64, settings: &T, inputs: Value) -> anyhow::Result<()> {
        let echo = json!({
            "command": self.command,
            "version": env!("CARGO_PKG_VERSION"),
            "seed": seed,
            "settings": settings,
            "inputs": inputs,
        });
        self.write_json(&format!("{}.config.json", self.command), &echo)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> anyhow::Result<()> {
        write_json(&self.join(name), value)
    }

    pub fn create_file(&self, name: &str) -> anyhow::Result<BufWriter<File>> {
        let path = self.join(name);
        let f = File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
        Ok(BufWriter::new(f))
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text)
        .map_err(saeprobe::Error::from)
        .with_context(|| format!("cannot parse {}", path.display()))
}

pub fn paths_json(paths: &[PathBuf]) -> Value {
    Value::Array(paths.iter().map(|p| Value::String(p.display().to_string())).collect())
}
