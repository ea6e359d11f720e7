//! Parameter resolution: built-in defaults, then a `key=value` config file,
//! then command-line flags.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::CliError;

/// Every key a config file may set; each mirrors a long flag name.
pub const KNOWN_KEYS: &[&str] = &[
    "stages",
    "dim",
    "k",
    "loss",
    "lr",
    "C",
    "margin",
    "seed",
    "eval-every",
    "patience",
    "max-updates",
    "strategy",
    "beam-width",
    "stages-to-run",
    "freeze-context",
    "warm-start",
    "weights",
    "workers",
    "test-day-modulus",
    "valid-fraction",
    "valid-count",
    "drop-self-pairs",
    "ks",
    "seeds",
    "queries",
    "items",
    "clusters",
    "compare-auc",
];

#[derive(Debug, Default)]
pub struct Resolver {
    file: BTreeMap<String, String>,
    source: Option<PathBuf>,
    effective: Vec<(String, String)>,
}

impl Resolver {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Resolver::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config file {}: {e}", path.display())))?;
        Ok(Resolver {
            file: parse_config(&text, path)?,
            source: Some(path.to_path_buf()),
            effective: Vec::new(),
        })
    }

    /// Flag value if given, else the config file value, else `default`.
    pub fn get<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T, CliError>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let value = match (flag, self.file.get(key)) {
            (Some(v), _) => v,
            (None, Some(raw)) => raw.parse::<T>().map_err(|e| {
                CliError::Usage(format!(
                    "config file {}: bad value `{raw}` for `{key}`: {e}",
                    self.source.as_deref().unwrap_or(Path::new("?")).display()
                ))
            })?,
            (None, None) => default,
        };
        self.effective.push((key.to_string(), value.to_string()));
        Ok(value)
    }

    /// Optional parameter without a default.
    pub fn get_opt<T>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>, CliError>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let value = match (flag, self.file.get(key)) {
            (Some(v), _) => Some(v),
            (None, Some(raw)) => Some(raw.parse::<T>().map_err(|e| {
                CliError::Usage(format!("config file: bad value `{raw}` for `{key}`: {e}"))
            })?),
            (None, None) => None,
        };
        let shown = value.as_ref().map_or_else(|| "none".to_string(), ToString::to_string);
        self.effective.push((key.to_string(), shown));
        Ok(value)
    }

    pub fn effective(&self) -> &[(String, String)] {
        &self.effective
    }

    /// Writes the effective configuration to stderr, one `key=value` per
    /// line.
    pub fn echo(&self) {
        if let Some(src) = &self.source {
            eprintln!("# config file {}", src.display());
        }
        for (k, v) in &self.effective {
            eprintln!("# {k}={v}");
        }
    }
}

fn parse_config(text: &str, path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |msg: &str| CliError::Usage(format!("{}:{}: {msg}", path.display(), i + 1));
        let (key, value) = line.split_once('=').ok_or_else(|| bad("expected key=value"))?;
        let key = key.trim().trim_start_matches("--");
        if !KNOWN_KEYS.contains(&key) {
            return Err(bad(&format!("unknown key `{key}`")));
        }
        out.insert(key.to_string(), value.trim().to_string());
    }
    Ok(out)
}

/// Comma-separated list of cutoffs, e.g. `5,10,30,50`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KList(pub Vec<usize>);

impl FromStr for KList {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let ks = s
            .split(',')
            .map(|p| p.trim().parse::<usize>().map_err(|e| format!("`{p}`: {e}")))
            .collect::<Result<Vec<_>, _>>()?;
        if ks.is_empty() || ks.contains(&0) {
            return Err("cutoffs must be positive".into());
        }
        Ok(KList(ks))
    }
}

impl Display for KList {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(ToString::to_string).collect();
        write!(f, "{}", parts.join(","))
    }
}
