//! Flat `key = value` run files. Command-line flags win over file values.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::Failure;

pub fn load_table(path: Option<&Path>) -> Result<toml::Table, Failure> {
    let Some(path) = path else {
        return Ok(toml::Table::new());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::usage(format!("cannot read {}: {e}", path.display())))?;
    let table: toml::Table = toml::from_str(&text).map_err(|e| Failure {
        code: 2,
        kind: "parse",
        message: format!("{}: {e}", path.display()),
    })?;
    if let Some((k, _)) = table.iter().find(|(_, v)| v.is_table() || v.is_array()) {
        return Err(Failure { code: 2, kind: "parse", message: format!("key '{k}' is not a scalar") });
    }
    Ok(table)
}

/// Applies a `key=value` override; the value is read as a TOML scalar, or as
/// a bare string if it is not one.
pub fn apply_set(table: &mut toml::Table, item: &str) -> Result<(), Failure> {
    let (k, v) = item
        .split_once('=')
        .ok_or_else(|| Failure::usage(format!("--set expects key=value, got '{item}'")))?;
    let (k, v) = (k.trim(), v.trim());
    let value = toml::from_str::<toml::Table>(&format!("x = {v}"))
        .ok()
        .and_then(|mut t| t.remove("x"))
        .unwrap_or_else(|| toml::Value::String(v.to_string()));
    table.insert(k.to_string(), value);
    Ok(())
}

pub fn decode<T: DeserializeOwned>(table: toml::Table) -> Result<T, Failure> {
    toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| Failure {
        code: 2,
        kind: "parse",
        message: e.message().to_string(),
    })
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McFile {
    pub group: Option<String>,
    pub time: Option<f64>,
    pub paths: Option<usize>,
    pub steps: Option<usize>,
    pub seed: Option<u64>,
    pub scheme: Option<String>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use nilheat::kernel::QuadratureConfig;

    #[test]
    fn set_overrides_and_typing() {
        let mut t = toml::Table::new();
        apply_set(&mut t, "step = 0.02").unwrap();
        apply_set(&mut t, "error_estimate=false").unwrap();
        let c: QuadratureConfig = decode(t).unwrap();
        assert_eq!(c.step, 0.02);
        assert!(!c.error_estimate);
        assert!(apply_set(&mut toml::Table::new(), "novalue").is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut t = toml::Table::new();
        apply_set(&mut t, "stepz=1").unwrap();
        assert!(decode::<QuadratureConfig>(t).is_err());
    }
}
