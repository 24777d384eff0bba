//! `--config` expansion and run directories.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use gazehead_core::{Error, Result};
use serde_json::Value;

/// Splices the flags from a `--config` JSON object into `argv` right after
/// the subcommand. Flags given explicitly on the command line win.
pub fn expand(argv: Vec<OsString>) -> std::result::Result<Vec<OsString>, String> {
    let strs: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let mut path = None;
    for (i, a) in strs.iter().enumerate() {
        if a == "--config" {
            path = strs.get(i + 1).cloned();
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        }
    }
    let Some(path) = path else {
        return Ok(argv);
    };
    let text = std::fs::read_to_string(&path).map_err(|e| format!("cannot read config {path}: {e}"))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| format!("config {path} is not JSON: {e}"))?;
    let Value::Object(map) = value else {
        return Err(format!("config {path} must be a JSON object"));
    };
    let explicit = |flag: &str| {
        strs.iter()
            .any(|a| a == flag || a.starts_with(&format!("{flag}=")))
    };
    let mut extra: Vec<OsString> = Vec::new();
    for (key, v) in map {
        let flag = format!("--{}", key.replace('_', "-"));
        if key == "config" || key == "subcommand" || explicit(&flag) {
            continue;
        }
        match v {
            Value::Bool(true) => extra.push(flag.into()),
            Value::Bool(false) | Value::Null => {}
            Value::String(s) => {
                extra.push(flag.into());
                extra.push(s.into());
            }
            Value::Number(n) => {
                extra.push(flag.into());
                extra.push(n.to_string().into());
            }
            _ => return Err(format!("config key {key:?} must be a scalar")),
        }
    }
    let sub = strs.iter().skip(1).position(|a| !a.starts_with('-')).map(|p| p + 2);
    let at = sub.unwrap_or(argv.len()).min(argv.len());
    let mut out = argv[..at].to_vec();
    out.extend(extra);
    out.extend_from_slice(&argv[at..]);
    Ok(out)
}

/// Creates `<runs_dir>/<UTC timestamp>-<subcommand>[-k]/`.
pub fn create_run_dir(runs_dir: &Path, subcommand: &str) -> Result<PathBuf> {
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ").to_string();
    std::fs::create_dir_all(runs_dir).map_err(|e| Error::Io {
        path: runs_dir.to_path_buf(),
        source: e,
    })?;
    for k in 0.. {
        let name = if k == 0 {
            format!("{stamp}-{subcommand}")
        } else {
            format!("{stamp}-{subcommand}-{k}")
        };
        let dir = runs_dir.join(name);
        match std::fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(Error::Io { path: dir, source: e }),
        }
    }
    unreachable!("unbounded search")
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::Io {
                path: parent.to_path_buf(),
                source: e,
            })?;
        }
    }
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}
