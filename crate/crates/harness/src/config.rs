//! Experiment configuration: JSON file, `--set` overrides and typed parameters.
//!
//! Precedence, lowest first: experiment defaults, the config file, `--set`
//! pairs, dedicated flags (`--seed`, `--out`, `--paths`, ...). The output
//! directory falls back to `$LAB_OUT_DIR`, then `lab-out`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::{HarnessError, Result};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "LAB_OUT_DIR";
const DEFAULT_OUT: &str = "lab-out";
pub const DEFAULT_SEED: u64 = 42;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Kind {
    Float,
    /// A number or `null`.
    OptFloat,
    Int,
    Bool,
    FloatList,
    /// A list or `null`.
    OptFloatList,
    Text,
    Choice(&'static [&'static str]),
}

/// A declared parameter with its default.
#[derive(Clone, Debug)]
pub struct ParamSpec {
    pub key: &'static str,
    pub kind: Kind,
    pub default: Value,
    pub help: &'static str,
}

/// The on-disk config file. Unknown keys are rejected.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub experiment: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub params: BTreeMap<String, Value>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| HarnessError::Validation(format!("config {}: {e}", path.display())))
    }
}

/// Fully resolved configuration of one run.
#[derive(Clone, Debug, Serialize)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub seed: u64,
    pub params: BTreeMap<String, Value>,
    #[serde(skip)]
    pub out: PathBuf,
}

/// Raw overrides collected from the command line.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub config: Option<PathBuf>,
    pub sets: Vec<String>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    /// Dedicated flags already mapped to parameter keys.
    pub flags: Vec<(String, String)>,
}

/// Parses a command-line value: JSON when it parses, a comma-separated number
/// list when every piece is numeric, a string otherwise.
pub fn parse_value(raw: &str) -> Value {
    if let Ok(v) = serde_json::from_str::<Value>(raw) {
        return v;
    }
    if raw.contains(',') {
        let nums: Option<Vec<Value>> =
            raw.split(',').map(|s| s.trim().parse::<f64>().ok().and_then(|x| serde_json::Number::from_f64(x).map(Value::Number))).collect();
        if let Some(v) = nums {
            return Value::Array(v);
        }
    }
    Value::String(raw.to_string())
}

fn check_kind(key: &str, kind: Kind, v: &Value) -> Result<Value> {
    let bad = |what: &str| Err(HarnessError::Validation(format!("parameter `{key}` must be {what}, got {v}")));
    match kind {
        Kind::Float => match v.as_f64() {
            Some(x) if x.is_finite() => Ok(v.clone()),
            _ => bad("a finite number"),
        },
        Kind::OptFloat if v.is_null() => Ok(Value::Null),
        Kind::OptFloat => check_kind(key, Kind::Float, v),
        Kind::OptFloatList if v.is_null() => Ok(Value::Null),
        Kind::OptFloatList => check_kind(key, Kind::FloatList, v),
        Kind::Text => match v {
            Value::String(_) => Ok(v.clone()),
            _ => bad("a string"),
        },
        Kind::Int => match v.as_f64() {
            Some(x) if x >= 0.0 && x.fract() == 0.0 && x < 9.0e15 => Ok(Value::from(x as u64)),
            _ => bad("a nonnegative integer"),
        },
        Kind::Bool => match v {
            Value::Bool(_) => Ok(v.clone()),
            _ => bad("true or false"),
        },
        Kind::FloatList => match v {
            Value::Array(items) if !items.is_empty() && items.iter().all(|x| x.as_f64().is_some_and(f64::is_finite)) => {
                Ok(v.clone())
            }
            Value::Number(_) => Ok(Value::Array(vec![v.clone()])),
            _ => bad("a nonempty list of numbers"),
        },
        Kind::Choice(opts) => match v.as_str() {
            Some(s) if opts.contains(&s) => Ok(v.clone()),
            _ => bad(&format!("one of {opts:?}")),
        },
    }
}

impl ExperimentConfig {
    /// Merges defaults, file and overrides for the experiment `name` with parameters `specs`.
    pub fn resolve(name: &str, specs: &[ParamSpec], ov: &Overrides) -> Result<Self> {
        let file = match &ov.config {
            Some(p) => ConfigFile::load(p)?,
            None => ConfigFile::default(),
        };
        if let Some(e) = &file.experiment {
            if e != name {
                return Err(HarnessError::Validation(format!("config is for experiment `{e}`, not `{name}`")));
            }
        }
        let mut raw: BTreeMap<String, Value> = specs.iter().map(|s| (s.key.to_string(), s.default.clone())).collect();
        let mut apply = |k: &str, v: Value| -> Result<()> {
            let Some(spec) = specs.iter().find(|s| s.key == k) else {
                let known: Vec<_> = specs.iter().map(|s| s.key).collect();
                return Err(HarnessError::Validation(format!("unknown parameter `{k}` for `{name}` (known: {known:?})")));
            };
            raw.insert(k.to_string(), check_kind(k, spec.kind, &v)?);
            Ok(())
        };
        for (k, v) in &file.params {
            apply(k, v.clone())?;
        }
        for s in &ov.sets {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| HarnessError::Validation(format!("--set expects key=value, got `{s}`")))?;
            apply(k.trim(), parse_value(v.trim()))?;
        }
        for (k, v) in &ov.flags {
            apply(k, parse_value(v))?;
        }
        for spec in specs {
            raw.insert(spec.key.to_string(), check_kind(spec.key, spec.kind, &raw[spec.key])?);
        }
        let out = ov
            .out
            .clone()
            .or(file.out)
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
        Ok(ExperimentConfig { experiment: name.to_string(), seed: ov.seed.or(file.seed).unwrap_or(DEFAULT_SEED), params: raw, out })
    }

    /// SHA-256 of the canonical JSON of experiment, seed and parameters.
    pub fn hash(&self) -> String {
        let canon = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canon.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    fn get(&self, key: &str) -> Result<&Value> {
        self.params.get(key).ok_or_else(|| HarnessError::Validation(format!("missing parameter `{key}`")))
    }

    pub fn f64(&self, key: &str) -> Result<f64> {
        self.get(key)?.as_f64().ok_or_else(|| HarnessError::Validation(format!("`{key}` is not a number")))
    }

    /// Optional number: `null` means unset.
    pub fn opt_f64(&self, key: &str) -> Result<Option<f64>> {
        match self.get(key)? {
            Value::Null => Ok(None),
            v => v.as_f64().map(Some).ok_or_else(|| HarnessError::Validation(format!("`{key}` is not a number"))),
        }
    }

    /// Optional list: `null` means unset.
    pub fn opt_list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.get(key)? {
            Value::Null => Ok(None),
            _ => self.list(key).map(Some),
        }
    }

    pub fn usize(&self, key: &str) -> Result<usize> {
        self.get(key)?.as_u64().map(|v| v as usize).ok_or_else(|| HarnessError::Validation(format!("`{key}` is not an integer")))
    }

    pub fn bool(&self, key: &str) -> Result<bool> {
        self.get(key)?.as_bool().ok_or_else(|| HarnessError::Validation(format!("`{key}` is not a boolean")))
    }

    pub fn list(&self, key: &str) -> Result<Vec<f64>> {
        match self.get(key)? {
            Value::Array(v) => Ok(v.iter().filter_map(Value::as_f64).collect()),
            v => v.as_f64().map(|x| vec![x]).ok_or_else(|| HarnessError::Validation(format!("`{key}` is not a list"))),
        }
    }

    pub fn str(&self, key: &str) -> Result<&str> {
        self.get(key)?.as_str().ok_or_else(|| HarnessError::Validation(format!("`{key}` is not a string")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn specs() -> Vec<ParamSpec> {
        vec![
            ParamSpec { key: "dt", kind: Kind::Float, default: json!(1e-3), help: "" },
            ParamSpec { key: "paths", kind: Kind::Int, default: json!(10), help: "" },
            ParamSpec { key: "mu_grid", kind: Kind::FloatList, default: json!([1.0]), help: "" },
            ParamSpec { key: "branch", kind: Kind::Choice(&["elliptic", "parabolic"]), default: json!("elliptic"), help: "" },
        ]
    }

    #[test]
    fn value_parsing() {
        assert_eq!(parse_value("0.5"), json!(0.5));
        assert_eq!(parse_value("[1,2]"), json!([1, 2]));
        assert_eq!(parse_value("1,2.5"), json!([1.0, 2.5]));
        assert_eq!(parse_value("parabolic"), json!("parabolic"));
    }

    #[test]
    fn precedence_and_rejection() {
        let dir = std::env::temp_dir().join(format!("lab-config-test-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("c.json");
        std::fs::write(&path, r#"{"seed": 7, "params": {"dt": 0.01, "paths": 20}}"#).unwrap();
        let ov = Overrides {
            config: Some(path.clone()),
            sets: vec!["dt=0.02".into()],
            flags: vec![("paths".into(), "30".into())],
            out: Some(dir.clone()),
            ..Overrides::default()
        };
        let c = ExperimentConfig::resolve("x", &specs(), &ov).unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.f64("dt").unwrap(), 0.02);
        assert_eq!(c.usize("paths").unwrap(), 30);
        assert_eq!(c.list("mu_grid").unwrap(), vec![1.0]);
        let bad = Overrides { sets: vec!["bogus=1".into()], ..Overrides::default() };
        assert!(matches!(ExperimentConfig::resolve("x", &specs(), &bad), Err(HarnessError::Validation(_))));
        let bad = Overrides { sets: vec!["branch=sideways".into()], ..Overrides::default() };
        assert!(ExperimentConfig::resolve("x", &specs(), &bad).is_err());
        std::fs::write(&path, r#"{"params": {}, "extra": 1}"#).unwrap();
        let ov = Overrides { config: Some(path), ..Overrides::default() };
        assert!(ExperimentConfig::resolve("x", &specs(), &ov).is_err());
        std::fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn hash_depends_on_params() {
        let a = ExperimentConfig::resolve("x", &specs(), &Overrides::default()).unwrap();
        let b = ExperimentConfig::resolve("x", &specs(), &Overrides { seed: Some(1), ..Overrides::default() }).unwrap();
        assert_eq!(a.hash(), a.clone().hash());
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
