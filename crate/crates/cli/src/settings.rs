//! Flat `key = value` settings: built-in defaults, then a config file, then
//! command-line flags. Every flag `--foo-bar` has the key `foo_bar`.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use serde_json::Value;

use crate::error::CliError;

/// One recognised key with its default.
#[derive(Debug, Clone, Copy)]
pub struct Key {
    pub name: &'static str,
    pub default: Option<&'static str>,
}

/// Declares a clap argument struct whose optional fields double as
/// settings keys, together with the key table and the override list.
macro_rules! settings_args {
    (
        $(#[$meta:meta])*
        $name:ident {
            $( $(#[doc = $doc:literal])* $field:ident : $ty:ty = $default:expr ),* $(,)?
        }
    ) => {
        $(#[$meta])*
        #[derive(clap::Args, Debug, Default)]
        pub struct $name {
            /// Settings file: `key = value` lines, or a JSON object such as the
            /// `config` echoed by an earlier run.
            #[arg(long)]
            pub config: Option<std::path::PathBuf>,
            $(
                $(#[doc = $doc])*
                #[arg(long)]
                pub $field: Option<$ty>,
            )*
        }

        impl $name {
            pub const KEYS: &'static [$crate::settings::Key] =
                &[$($crate::settings::Key { name: stringify!($field), default: $default }),*];

            pub fn settings(&self) -> Result<$crate::settings::Settings, $crate::error::CliError> {
                let overrides = vec![$((stringify!($field), self.$field.as_ref().map($crate::settings::FlagValue::render))),*];
                $crate::settings::Settings::resolve(Self::KEYS, self.config.as_deref(), overrides)
            }
        }
    };
}
pub(crate) use settings_args;

/// Text form of a flag value, as it would appear in a settings file.
pub trait FlagValue {
    fn render(&self) -> String;
}

macro_rules! flag_value_display {
    ($($t:ty),*) => { $(impl FlagValue for $t { fn render(&self) -> String { self.to_string() } })* };
}
flag_value_display!(String, usize, u64, f64, bool);

impl FlagValue for std::path::PathBuf {
    fn render(&self) -> String {
        self.to_string_lossy().into_owned()
    }
}

#[derive(Debug, Clone)]
pub struct Settings {
    keys: &'static [Key],
    values: BTreeMap<&'static str, String>,
}

impl Settings {
    pub fn resolve(
        keys: &'static [Key],
        file: Option<&Path>,
        overrides: Vec<(&'static str, Option<String>)>,
    ) -> Result<Self, CliError> {
        let mut values: BTreeMap<&'static str, String> =
            keys.iter().filter_map(|k| k.default.map(|d| (k.name, d.to_string()))).collect();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Io(format!("reading {}: {e}", path.display())))?;
            for (key, value) in parse_file(&text)? {
                let known = keys.iter().find(|k| k.name == key).ok_or_else(|| {
                    CliError::Usage(format!("unknown key `{key}` in {} (expected one of: {})", path.display(), names(keys)))
                })?;
                match value {
                    Some(v) => values.insert(known.name, v),
                    None => values.remove(known.name),
                };
            }
        }
        for (key, value) in overrides {
            if let Some(v) = value {
                values.insert(key, v);
            }
        }
        Ok(Settings { keys, values })
    }

    pub fn is_set(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    pub fn str(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn opt<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: Display,
    {
        self.values
            .get(key)
            .map(|v| v.trim().parse::<T>().map_err(|e| CliError::Usage(format!("bad value `{v}` for `{key}`: {e}"))))
            .transpose()
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        self.opt(key)?.ok_or_else(|| CliError::Usage(format!("missing required setting `{key}`")))
    }

    /// Every key with its effective value (`null` when unset).
    pub fn echo(&self) -> Value {
        Value::Object(
            self.keys
                .iter()
                .map(|k| (k.name.to_string(), self.values.get(k.name).map_or(Value::Null, |v| Value::String(v.clone()))))
                .collect(),
        )
    }
}

fn names(keys: &[Key]) -> String {
    keys.iter().map(|k| k.name).collect::<Vec<_>>().join(", ")
}

fn normalize(key: &str) -> String {
    key.trim().replace('-', "_")
}

/// Parses `key = value` lines (`#` starts a comment) or a JSON object. A
/// JSON object with a `config` member is read through that member.
fn parse_file(text: &str) -> Result<Vec<(String, Option<String>)>, CliError> {
    if text.trim_start().starts_with('{') {
        let v: Value = serde_json::from_str(text).map_err(|e| CliError::Usage(format!("config JSON: {e}")))?;
        let obj = match v.get("config") {
            Some(inner) => inner.clone(),
            None => v,
        };
        let Value::Object(map) = obj else {
            return Err(CliError::Usage("config JSON must be an object".into()));
        };
        return map
            .into_iter()
            .map(|(k, v)| {
                let value = match v {
                    Value::Null => None,
                    Value::String(s) => Some(s),
                    Value::Number(n) => Some(n.to_string()),
                    Value::Bool(b) => Some(b.to_string()),
                    other => return Err(CliError::Usage(format!("config key `{k}` has a non-scalar value {other}"))),
                };
                Ok((normalize(&k), value))
            })
            .collect();
    }
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("config line {}: expected `key = value`", i + 1)))?;
        out.push((normalize(k), Some(v.trim().to_string())));
    }
    Ok(out)
}
