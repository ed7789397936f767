//! `--config file.toml`: each `[subcommand]` table supplies default flags.
//!
//! ```toml
//! [mc]
//! strategy = "forward-det"
//! mu = 0.03
//! T = 1.0
//! ```
//!
//! Config values are inserted before the command-line flags, so explicit
//! flags win. Relative paths for file-valued keys resolve against the
//! config file's directory.

use std::ffi::OsString;
use std::path::Path;

use crate::CliError;

const PATH_KEYS: [&str; 4] = ["csv", "params-json", "out", "manifest"];

/// Removes `--config <path>` from `argv` and splices in the flags from the
/// subcommand's table.
pub fn expand(argv: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let mut rest = Vec::with_capacity(argv.len());
    let mut config = None;
    let mut iter = argv.into_iter();
    while let Some(arg) = iter.next() {
        let text = arg.to_string_lossy();
        if text == "--config" {
            let path = iter
                .next()
                .ok_or_else(|| CliError::Usage("--config needs a file path".into()))?;
            config = Some(path);
        } else if let Some(path) = text.strip_prefix("--config=") {
            config = Some(OsString::from(path));
        } else {
            rest.push(arg);
        }
    }
    let Some(config) = config else {
        return Ok(rest);
    };
    let path = Path::new(&config);
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read config {}: {e}", path.display())))?;
    let table: toml::Table =
        toml::from_str(&text).map_err(|e| CliError::Data(format!("config {}: {e}", path.display())))?;
    // the subcommand is the first argument after the program name that is not a flag
    let Some(pos) = rest
        .iter()
        .skip(1)
        .position(|a| !a.to_string_lossy().starts_with('-'))
        .map(|p| p + 1)
    else {
        return Ok(rest);
    };
    let command = rest[pos].to_string_lossy().into_owned();
    let Some(section) = table.get(&command) else {
        return Ok(rest);
    };
    let section = section
        .as_table()
        .ok_or_else(|| CliError::Data(format!("config key [{command}] must be a table")))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut injected = Vec::new();
    for (key, value) in section {
        let flag = format!("--{key}");
        match value {
            toml::Value::Boolean(true) => injected.push(OsString::from(flag)),
            toml::Value::Boolean(false) => {}
            toml::Value::Array(items) => {
                for item in items {
                    injected.push(OsString::from(&flag));
                    injected.push(scalar(key, item, base)?);
                }
            }
            other => {
                injected.push(OsString::from(flag));
                injected.push(scalar(key, other, base)?);
            }
        }
    }
    let tail = rest.split_off(pos + 1);
    rest.extend(injected);
    rest.extend(tail);
    Ok(rest)
}

fn scalar(key: &str, value: &toml::Value, base: &Path) -> Result<OsString, CliError> {
    let text = match value {
        toml::Value::String(s) if PATH_KEYS.contains(&key) && Path::new(s).is_relative() => {
            return Ok(base.join(s).into_os_string());
        }
        toml::Value::String(s) => s.clone(),
        toml::Value::Integer(i) => i.to_string(),
        toml::Value::Float(f) => f.to_string(),
        toml::Value::Boolean(b) => b.to_string(),
        _ => return Err(CliError::Data(format!("config key {key}: unsupported value {value}"))),
    };
    Ok(OsString::from(text))
}
