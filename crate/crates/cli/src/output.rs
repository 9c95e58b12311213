//! Output directory handling: the manifest that pins a directory to one config, report
//! wrappers carrying the config fingerprint, and the fingerprinted stage cache.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{io_error, CliError};

pub const SCHEMA_VERSION: u32 = 1;
pub const SOFTWARE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub software_version: String,
    pub config_fingerprint: String,
    pub commands: BTreeSet<String>,
}

/// JSON reports are wrapped in this envelope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub schema_version: u32,
    pub software_version: String,
    pub config_fingerprint: String,
    pub kind: String,
    pub data: T,
}

pub struct OutDir {
    root: PathBuf,
    fingerprint: String,
}

impl OutDir {
    /// Refuses a directory whose manifest names a different config.
    pub fn open(root: &Path, fingerprint: &str, command: &str) -> Result<Self, CliError> {
        fs::create_dir_all(root.join("cache")).map_err(|e| io_error(root, e))?;
        let manifest_path = root.join("manifest.json");
        let mut manifest = if manifest_path.exists() {
            let text = fs::read_to_string(&manifest_path).map_err(|e| io_error(&manifest_path, e))?;
            let m: Manifest = serde_json::from_str(&text)
                .map_err(|e| CliError::Validation(format!("{}: {e}", manifest_path.display())))?;
            if m.config_fingerprint != fingerprint {
                return Err(CliError::Validation(format!(
                    "{} holds artifacts of config {}, not {fingerprint}; use a fresh --out",
                    root.display(),
                    m.config_fingerprint
                )));
            }
            m
        } else {
            Manifest {
                schema_version: SCHEMA_VERSION,
                software_version: SOFTWARE_VERSION.into(),
                config_fingerprint: fingerprint.into(),
                commands: BTreeSet::new(),
            }
        };
        manifest.commands.insert(command.into());
        let out = OutDir {
            root: root.to_path_buf(),
            fingerprint: fingerprint.into(),
        };
        out.write_bytes("manifest.json", &pretty(&manifest)?)?;
        Ok(out)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn write_bytes(&self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        fs::write(&path, bytes).map_err(|e| io_error(&path, e))?;
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, kind: &str, data: &T) -> Result<PathBuf, CliError> {
        let env = Envelope {
            schema_version: SCHEMA_VERSION,
            software_version: SOFTWARE_VERSION.into(),
            config_fingerprint: self.fingerprint.clone(),
            kind: kind.into(),
            data,
        };
        self.write_bytes(name, &pretty(&env)?)
    }

    /// One object per line, each with a `config_fingerprint` key added.
    pub fn write_jsonl<T: Serialize>(&self, name: &str, items: &[T]) -> Result<PathBuf, CliError> {
        let mut buf = Vec::new();
        for item in items {
            let mut v = serde_json::to_value(item).map_err(|e| CliError::Runtime(e.to_string()))?;
            if let Value::Object(map) = &mut v {
                map.insert("config_fingerprint".into(), Value::String(self.fingerprint.clone()));
            }
            serde_json::to_writer(&mut buf, &v).map_err(|e| CliError::Runtime(e.to_string()))?;
            buf.push(b'\n');
        }
        self.write_bytes(name, &buf)
    }

    /// CSV preceded by a `# config_fingerprint=<fp>` comment line.
    pub fn write_csv(
        &self,
        name: &str,
        fill: impl FnOnce(&mut Vec<u8>) -> tsi_core::Result<()>,
    ) -> Result<PathBuf, CliError> {
        let mut buf = format!("# config_fingerprint={}\n", self.fingerprint).into_bytes();
        fill(&mut buf).map_err(|e| CliError::Runtime(e.to_string()))?;
        self.write_bytes(name, &buf)
    }

    pub fn write_text(&self, name: &str, body: &str) -> Result<PathBuf, CliError> {
        let text = format!("# config_fingerprint={}\n{body}", self.fingerprint);
        self.write_bytes(name, text.as_bytes())
    }

    fn cache_path(&self, stage: &str, key: &str, ext: &str) -> PathBuf {
        self.root.join("cache").join(format!("{stage}-{key}.{ext}"))
    }

    pub fn cache_get<T: DeserializeOwned>(&self, stage: &str, key: &str) -> Option<T> {
        let text = fs::read_to_string(self.cache_path(stage, key, "json")).ok()?;
        serde_json::from_str(&text).ok()
    }

    pub fn cache_put<T: Serialize>(&self, stage: &str, key: &str, value: &T) -> Result<PathBuf, CliError> {
        let path = self.cache_path(stage, key, "json");
        fs::write(&path, pretty(value)?).map_err(|e| io_error(&path, e))?;
        Ok(path)
    }

    pub fn cache_file(&self, stage: &str, key: &str, ext: &str) -> PathBuf {
        self.cache_path(stage, key, ext)
    }
}

fn pretty<T: Serialize>(v: &T) -> Result<Vec<u8>, CliError> {
    let mut bytes = serde_json::to_vec_pretty(v).map_err(|e| CliError::Runtime(e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_pins_the_config() {
        let dir = tempfile::tempdir().unwrap();
        let out = OutDir::open(dir.path(), "aaaa", "inspect").unwrap();
        out.write_json("r.json", "test", &vec![1, 2]).unwrap();
        let text = fs::read_to_string(dir.path().join("r.json")).unwrap();
        assert!(text.contains("\"config_fingerprint\": \"aaaa\""));
        assert!(OutDir::open(dir.path(), "aaaa", "tsi").is_ok());
        assert!(matches!(
            OutDir::open(dir.path(), "bbbb", "tsi"),
            Err(CliError::Validation(_))
        ));
    }

    #[test]
    fn csv_and_cache() {
        let dir = tempfile::tempdir().unwrap();
        let out = OutDir::open(dir.path(), "fp", "x").unwrap();
        out.write_csv("a.csv", |w| {
            w.extend_from_slice(b"a,b\n1,2\n");
            Ok(())
        })
        .unwrap();
        assert_eq!(
            fs::read_to_string(dir.path().join("a.csv")).unwrap(),
            "# config_fingerprint=fp\na,b\n1,2\n"
        );
        assert_eq!(out.cache_get::<u32>("s", "k"), None);
        out.cache_put("s", "k", &5u32).unwrap();
        assert_eq!(out.cache_get::<u32>("s", "k"), Some(5));
    }
}
