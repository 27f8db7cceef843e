//! Versioned CSV and JSON output, written atomically.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use crate::Failure;

pub const SCHEMA: u32 = 1;

/// 17 significant digits.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// `# schema=1` followed by one `# key=value` line per config entry.
pub fn csv_preamble(config: &serde_json::Map<String, serde_json::Value>) -> String {
    let mut s = format!("# schema={SCHEMA}\n");
    for (k, v) in config {
        let v = match v {
            serde_json::Value::String(s) => s.clone(),
            other => other.to_string(),
        };
        let _ = writeln!(s, "# {k}={v}");
    }
    s
}

pub fn to_map(v: impl serde::Serialize) -> serde_json::Map<String, serde_json::Value> {
    match serde_json::to_value(v) {
        Ok(serde_json::Value::Object(m)) => m,
        _ => serde_json::Map::new(),
    }
}

/// Writes `bytes` to `path` through a temporary file in the same directory,
/// or to stdout when no path is given.
pub fn emit(path: Option<&Path>, bytes: &[u8]) -> Result<(), Failure> {
    let Some(path) = path else {
        let mut out = std::io::stdout().lock();
        return out
            .write_all(bytes)
            .and_then(|_| out.flush())
            .map_err(|e| Failure::output(format!("stdout: {e}")));
    };
    let fail = |e: &dyn std::fmt::Display| Failure::output(format!("{}: {e}", path.display()));
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| fail(&e))?;
    tmp.write_all(bytes).map_err(|e| fail(&e))?;
    tmp.as_file().sync_all().map_err(|e| fail(&e))?;
    tmp.persist(path).map_err(|e| fail(&e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23] {
            let s = num(v);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits());
            let digits = s.split('e').next().unwrap().chars().filter(|c| c.is_ascii_digit()).count();
            assert_eq!(digits, 17);
        }
    }

    #[test]
    fn preamble_starts_with_schema() {
        let mut m = serde_json::Map::new();
        m.insert("group".into(), "g4".into());
        m.insert("t".into(), 0.25.into());
        assert_eq!(csv_preamble(&m), "# schema=1\n# group=g4\n# t=0.25\n");
    }

    #[test]
    fn failed_write_leaves_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("missing").join("out.csv");
        assert_eq!(emit(Some(&target), b"x").unwrap_err().code, 3);
        assert!(!target.exists());
        let ok = dir.path().join("out.csv");
        emit(Some(&ok), b"abc").unwrap();
        assert_eq!(std::fs::read(&ok).unwrap(), b"abc");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
