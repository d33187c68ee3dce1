//! Flat key = value configuration files. Lines starting with `#` and blank
//! lines are ignored; later duplicates win. Values stay strings here; the
//! command layer parses them where it knows the expected type.

use std::collections::HashMap;
use std::path::Path;

pub fn load(path: &Path) -> Result<HashMap<String, String>, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read config file {}: {e}", path.display()))?;
    parse(&text).map_err(|e| format!("config file {}: {e}", path.display()))
}

fn parse(text: &str) -> Result<HashMap<String, String>, String> {
    let mut map = HashMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(format!("line {}: expected 'key = value', got '{line}'", lineno + 1));
        };
        let key = key.trim();
        if key.is_empty() {
            return Err(format!("line {}: empty key", lineno + 1));
        }
        map.insert(key.to_string(), value.trim().to_string());
    }
    Ok(map)
}
