//! Run configuration: defaults, optional config file, command-line
//! overrides, and the config-hash run directories.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use mrasc::util::derive_seed;

pub const RUNCONFIG_NAME: &str = "runconfig.txt";

/// A flat, merged key-value configuration. Precedence: defaults, then the
/// config file, then command-line overrides.
#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn from_defaults(defaults: &[(&str, String)]) -> Self {
        Self {
            values: defaults
                .iter()
                .map(|(k, v)| (k.to_string(), v.clone()))
                .collect(),
        }
    }

    /// Merge a flat `key = value` file (one pair per line, `#` comments).
    pub fn merge_file(&mut self, path: &Path) -> Result<(), String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(format!(
                    "{}:{}: expected `key = value`",
                    path.display(),
                    i + 1
                ));
            };
            self.set(key.trim(), value.trim());
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.values.insert(key.to_string(), value.into());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn require(&self, key: &str) -> Result<&str, String> {
        self.get(key).ok_or_else(|| format!("missing config key `{key}`"))
    }

    pub fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T, String> {
        self.require(key)?
            .parse()
            .map_err(|_| format!("config key `{key}` has invalid value `{}`", self.get(key).unwrap()))
    }

    pub fn parse_list(&self, key: &str) -> Result<Vec<usize>, String> {
        self.require(key)?
            .split(',')
            .map(|v| {
                v.trim()
                    .parse()
                    .map_err(|_| format!("config key `{key}`: bad entry `{v}`"))
            })
            .collect()
    }

    /// Canonical serialized form: sorted `key = value` lines.
    pub fn serialized(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.values {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(v);
            out.push('\n');
        }
        out
    }

    /// Stable hash of the serialized configuration.
    pub fn hash(&self) -> u64 {
        derive_seed(0x6d72_6173, &[&self.serialized()])
    }

    pub fn hash_hex(&self) -> String {
        format!("{:016x}", self.hash())
    }
}

/// Claim a run directory for this configuration: serialize the config into
/// it before any work starts, refusing to reuse a non-empty directory
/// unless forced.
pub fn claim_run_dir(dir: &Path, cfg: &RunConfig, force: bool) -> Result<(), String> {
    let marker = dir.join(RUNCONFIG_NAME);
    if marker.exists() && !force {
        return Err(format!(
            "{} already holds a run (use --force to overwrite)",
            dir.display()
        ));
    }
    std::fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
    std::fs::write(&marker, cfg.serialized())
        .map_err(|e| format!("cannot write {}: {e}", marker.display()))?;
    Ok(())
}

/// The per-config run directory of a command under a parent directory:
/// `<parent>/<command>-<confighash>`.
pub fn run_dir_for(parent: &Path, command: &str, cfg: &RunConfig) -> PathBuf {
    parent.join(format!("{command}-{}", cfg.hash_hex()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_defaults_file_flags() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("cfg.txt");
        std::fs::write(&file, "a = file\nb = file\n# comment\n").unwrap();
        let mut cfg = RunConfig::from_defaults(&[
            ("a", "default".into()),
            ("b", "default".into()),
            ("c", "default".into()),
        ]);
        cfg.merge_file(&file).unwrap();
        cfg.set("b", "flag");
        assert_eq!(cfg.get("a"), Some("file"));
        assert_eq!(cfg.get("b"), Some("flag"));
        assert_eq!(cfg.get("c"), Some("default"));
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::from_defaults(&[("x", "1".into())]);
        let mut b = RunConfig::from_defaults(&[("x", "1".into())]);
        assert_eq!(a.hash(), b.hash());
        b.set("x", "2");
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn claim_refuses_rerun_without_force() {
        let dir = tempfile::tempdir().unwrap();
        let run = dir.path().join("r");
        let cfg = RunConfig::from_defaults(&[("x", "1".into())]);
        claim_run_dir(&run, &cfg, false).unwrap();
        assert!(claim_run_dir(&run, &cfg, false).is_err());
        claim_run_dir(&run, &cfg, true).unwrap();
    }
}
