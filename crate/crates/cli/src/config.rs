//! Parameter resolution: flags over config file over defaults.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::CliError;

/// Declares a flag struct (every field optional) and its resolved counterpart
/// (every field filled from the default expression unless marked optional).
macro_rules! params {
    (
        $(#[$am:meta])* $args:ident => $cfg:ident {
            $( $(#[$fm:meta])* $field:ident : $ty:ty = $default:expr ),* $(,)?
        }
        $( optional { $( $(#[$om:meta])* $ofield:ident : $oty:ty ),* $(,)? } )?
    ) => {
        $(#[$am])*
        #[derive(clap::Args, serde::Serialize, Debug, Default, Clone)]
        pub struct $args {
            $( #[arg(long)] $(#[$fm])* #[serde(skip_serializing_if = "Option::is_none")] pub $field: Option<$ty>, )*
            $( $( #[arg(long)] $(#[$om])* #[serde(skip_serializing_if = "Option::is_none")] pub $ofield: Option<$oty>, )* )?
        }

        #[derive(serde::Serialize, serde::Deserialize, Debug, Clone)]
        #[serde(default, deny_unknown_fields)]
        pub struct $cfg {
            $( pub $field: $ty, )*
            $( $( pub $ofield: Option<$oty>, )* )?
        }

        impl Default for $cfg {
            fn default() -> Self {
                Self {
                    $( $field: $default, )*
                    $( $( $ofield: None, )* )?
                }
            }
        }
    };
}
pub(crate) use params;

/// Keys shared by every subcommand; a config file may set them alongside the
/// subcommand's own parameters.
pub const COMMON_KEYS: [&str; 3] = ["seed", "workers", "out"];

/// A parsed config file split into shared keys and subcommand parameters.
#[derive(Debug, Default)]
pub struct FileConfig {
    pub common: Map<String, Value>,
    pub params: Map<String, Value>,
}

pub fn load_file(path: &Path) -> Result<FileConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("config {} is not valid JSON: {e}", path.display())))?;
    let Value::Object(map) = value else {
        return Err(CliError::Config(format!("config {} must be a JSON object", path.display())));
    };
    let mut out = FileConfig::default();
    for (k, v) in map {
        if COMMON_KEYS.contains(&k.as_str()) {
            out.common.insert(k, v);
        } else {
            out.params.insert(k, v);
        }
    }
    Ok(out)
}

/// Overlays `flags` on `file` on the defaults of `C`.
pub fn resolve<F: Serialize, C: Serialize + DeserializeOwned + Default>(
    flags: &F,
    file: &Map<String, Value>,
) -> Result<C, CliError> {
    let mut merged = match serde_json::to_value(C::default()) {
        Ok(Value::Object(m)) => m,
        _ => unreachable!("parameter structs serialize to objects"),
    };
    for (k, v) in file {
        if !merged.contains_key(k) {
            return Err(CliError::Config(format!("unknown config key `{k}`")));
        }
        merged.insert(k.clone(), v.clone());
    }
    if let Ok(Value::Object(m)) = serde_json::to_value(flags) {
        merged.extend(m);
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| CliError::Config(format!("bad parameter: {e}")))
}

/// Shared settings after precedence is applied.
#[derive(Debug, Clone)]
pub struct Common {
    pub seed: u64,
    pub workers: usize,
    pub out: PathBuf,
}

pub fn resolve_common(
    seed: Option<u64>,
    workers: Option<usize>,
    out: Option<PathBuf>,
    file: &Map<String, Value>,
    command: &str,
) -> Result<Common, CliError> {
    fn from_file<T: DeserializeOwned>(file: &Map<String, Value>, key: &str) -> Result<Option<T>, CliError> {
        file.get(key)
            .map(|v| serde_json::from_value(v.clone()).map_err(|e| CliError::Config(format!("bad `{key}`: {e}"))))
            .transpose()
    }
    let seed = match seed {
        Some(s) => s,
        None => from_file(file, "seed")?.ok_or_else(|| CliError::Config("a seed is required (--seed or config `seed`)".into()))?,
    };
    let workers = match workers {
        Some(w) => w,
        None => from_file(file, "workers")?.unwrap_or(0),
    };
    let out = match out {
        Some(p) => p,
        None => from_file::<PathBuf>(file, "out")?.unwrap_or_else(|| PathBuf::from(command)),
    };
    Ok(Common { seed, workers, out })
}
