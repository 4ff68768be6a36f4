//! Shared flags, config loading and artifact writing.

use std::path::{Path, PathBuf};

use algoprob::io::{atomic_write, config_hash};
use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Bad input from the user; exits with status 2.
#[derive(Debug)]
pub struct Invalid(pub String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

pub fn invalid(msg: impl Into<String>) -> anyhow::Error {
    Invalid(msg.into()).into()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Args, Clone, Debug)]
pub struct Common {
    /// Seed for every random choice; overrides `seed` in the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// JSON file with command settings; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory for output artifacts.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    pub workers: Option<usize>,
}

/// Resolved settings of one command invocation.
pub struct Ctx {
    pub command: String,
    pub seed: u64,
    pub config_hash: String,
    pub out: PathBuf,
    pub format: Format,
}

/// Reads the config file (if any) into `T`, lets `apply` override fields from
/// flags, and fixes the seed and config hash.
pub fn load<T, F>(command: &str, common: &Common, apply: F) -> Result<(Ctx, T)>
where
    T: DeserializeOwned + Serialize + Default,
    F: FnOnce(&mut T),
{
    let mut seed = None;
    let mut cfg: T = match &common.config {
        None => T::default(),
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let mut value: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
            if let Some(obj) = value.as_object_mut() {
                if let Some(s) = obj.remove("seed") {
                    seed = Some(s.as_u64().ok_or_else(|| invalid("config `seed` must be a non-negative integer"))?);
                }
            }
            serde_json::from_value(value).map_err(|e| invalid(format!("{}: {e}", path.display())))?
        }
    };
    apply(&mut cfg);
    let seed = common.seed.or(seed).unwrap_or(0);
    if let Some(w) = common.workers {
        if w == 0 {
            return Err(invalid("--workers must be at least 1"));
        }
        algoprob::par::set_workers(w);
    }
    let hash = config_hash(&serde_json::json!({ "command": command, "seed": seed, "config": &cfg }))?;
    Ok((
        Ctx { command: command.to_string(), seed, config_hash: hash, out: common.out.clone(), format: common.format },
        cfg,
    ))
}

impl Ctx {
    pub fn provenance(&self) -> Vec<(String, String)> {
        vec![
            ("command".into(), self.command.clone()),
            ("seed".into(), self.seed.to_string()),
            ("config_hash".into(), self.config_hash.clone()),
        ]
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    /// `{command, seed, config_hash, result}` as pretty JSON.
    pub fn write_json<T: Serialize>(&self, name: &str, result: &T) -> Result<PathBuf> {
        let doc = serde_json::json!({
            "command": self.command,
            "seed": self.seed,
            "config_hash": self.config_hash,
            "result": result,
        });
        let path = self.path(name);
        atomic_write(&path, serde_json::to_string_pretty(&doc)?.as_bytes())?;
        Ok(path)
    }

    /// CSV body preceded by `# key=value` provenance lines.
    pub fn write_csv(&self, name: &str, body: &str) -> Result<PathBuf> {
        let mut text = String::new();
        for (k, v) in self.provenance() {
            text.push_str(&format!("# {k}={v}\n"));
        }
        text.push_str(body);
        let path = self.path(name);
        atomic_write(&path, text.as_bytes())?;
        Ok(path)
    }

    /// Writes `stem.csv` or `stem.json` according to `--format`.
    pub fn write_report<T: Serialize>(&self, stem: &str, result: &T, csv: impl FnOnce() -> String) -> Result<PathBuf> {
        match self.format {
            Format::Json => self.write_json(&format!("{stem}.json"), result),
            Format::Csv => self.write_csv(&format!("{stem}.csv"), &csv()),
        }
    }
}

pub fn announce(path: &Path) {
    eprintln!("wrote {}", path.display());
}

/// Config of commands that take no settings beyond the seed.
#[derive(Clone, Debug, Default, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoConfig {}
