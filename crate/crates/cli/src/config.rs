//! Config resolution: defaults, then the JSON file, then `--set` overrides,
//! then dedicated flags.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub struct Resolved<T> {
    pub config: T,
    pub value: Value,
    pub digest: String,
}

pub fn resolve<T>(file: Option<&Path>, sets: &[String], flags: Vec<(&str, Value)>) -> CliResult<Resolved<T>>
where
    T: Serialize + DeserializeOwned + Default,
{
    let mut value = serde_json::to_value(T::default()).map_err(muonlab::Error::from)?;
    if let Some(path) = file {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let parsed: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("malformed config {}: {e}", path.display())))?;
        if !parsed.is_object() {
            return Err(CliError::Usage(format!("config {} must be a JSON object", path.display())));
        }
        merge(&mut value, parsed);
    }
    for set in sets {
        let (path, raw) = set
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects PATH=VALUE, got {set:?}")))?;
        let parsed = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        set_path(&mut value, path, parsed)?;
    }
    for (path, v) in flags {
        set_path(&mut value, path, v)?;
    }
    let config: T = serde_json::from_value(value.clone())
        .map_err(|e| CliError::Usage(format!("invalid config: {e}")))?;
    let canonical = serde_json::to_value(&config).map_err(muonlab::Error::from)?;
    let digest = sha256_hex(&serde_json::to_vec(&canonical).map_err(muonlab::Error::from)?);
    Ok(Resolved {
        config,
        value: canonical,
        digest,
    })
}

/// Objects merge key by key unless their `kind` tags differ, in which case
/// the override replaces the whole object.
fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) if same_kind(b, &o) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn same_kind(a: &Map<String, Value>, b: &Map<String, Value>) -> bool {
    match (a.get("kind"), b.get("kind")) {
        (Some(x), Some(y)) => x == y,
        _ => true,
    }
}

fn set_path(root: &mut Value, path: &str, v: Value) -> CliResult<()> {
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::Usage(format!("bad config path {path:?}")));
    }
    let mut cur = root;
    for key in &keys[..keys.len() - 1] {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| CliError::Usage(format!("config path {path:?} crosses a non-object")))?;
        cur = obj.entry(key.to_string()).or_insert_with(|| Value::Object(Map::new()));
    }
    let obj = cur
        .as_object_mut()
        .ok_or_else(|| CliError::Usage(format!("config path {path:?} crosses a non-object")))?;
    let last = keys[keys.len() - 1].to_string();
    match obj.get_mut(&last) {
        Some(slot) => merge(slot, v),
        None => {
            obj.insert(last, v);
        }
    }
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, Default, Serialize, Deserialize, PartialEq)]
    #[serde(default, deny_unknown_fields)]
    struct Inner {
        a: f64,
        b: Vec<u64>,
    }

    #[derive(Debug, Default, Serialize, Deserialize, PartialEq)]
    #[serde(default, deny_unknown_fields)]
    struct Demo {
        inner: Inner,
        name: String,
    }

    #[test]
    fn set_overrides_nested_fields() {
        let r: Resolved<Demo> = resolve(None, &["inner.a=2.5".into(), "name=x".into()], vec![]).unwrap();
        assert_eq!(r.config.inner.a, 2.5);
        assert_eq!(r.config.name, "x");
    }

    #[test]
    fn flags_win_over_sets() {
        let r: Resolved<Demo> = resolve(
            None,
            &["inner.b=[1,2]".into()],
            vec![("inner.b", serde_json::json!([7]))],
        )
        .unwrap();
        assert_eq!(r.config.inner.b, vec![7]);
    }

    #[test]
    fn unknown_field_is_usage_error() {
        let r = resolve::<Demo>(None, &["inner.zz=1".into()], vec![]);
        assert!(matches!(r, Err(CliError::Usage(_))));
    }

    #[test]
    fn tagged_objects_replace_on_kind_change() {
        let mut base = serde_json::json!({"s": {"kind": "harmonic", "eta0": 1.0, "tau": 1.0}});
        merge(&mut base, serde_json::json!({"s": {"kind": "constant", "eta": 0.1}}));
        assert_eq!(base, serde_json::json!({"s": {"kind": "constant", "eta": 0.1}}));
    }

    #[test]
    fn digest_is_stable() {
        let a: Resolved<Demo> = resolve(None, &["name=q".into()], vec![]).unwrap();
        let b: Resolved<Demo> = resolve(None, &["name=\"q\"".into()], vec![]).unwrap();
        assert_eq!(a.digest, b.digest);
        assert_eq!(a.digest.len(), 64);
    }
}
