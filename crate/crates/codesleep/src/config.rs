//! Scenario files.
//!
//! A file is TOML with the same sections as [`ScenarioConfig`]. An optional
//! top-level `base = "<scenario>"` starts from a named scenario and the rest of
//! the file overrides it key by key.

use std::fs;
use std::path::{Path, PathBuf};

use codesleep_core::config::ConfigError;
use codesleep_core::oracle::canonical_scenario;
use codesleep_core::ScenarioConfig;
use thiserror::Error;
use toml::{Table, Value};

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        source: toml::de::Error,
    },
    #[error("`base` must be a scenario name")]
    BadBase,
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot render config: {0}")]
    Render(#[from] toml::ser::Error),
}

/// Folds `overlay` into `base`; tables merge, everything else replaces.
pub fn merge(base: &mut Table, overlay: Table) {
    for (key, value) in overlay {
        match (base.get_mut(&key), value) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

fn to_table(config: &ScenarioConfig) -> Result<Table, LoadError> {
    Ok(Table::try_from(config)?)
}

/// Parses scenario text on top of `base` (the defaults when `None`). A `base`
/// key in the text wins over the argument.
pub fn parse_config(text: &str, base: Option<&ScenarioConfig>, origin: &Path) -> Result<ScenarioConfig, LoadError> {
    let mut overlay: Table = text.parse().map_err(|source| LoadError::Parse {
        path: origin.to_path_buf(),
        source,
    })?;
    let start = match overlay.remove("base") {
        Some(Value::String(name)) => canonical_scenario(&name)?,
        Some(_) => return Err(LoadError::BadBase),
        None => base.cloned().unwrap_or_default(),
    };
    let mut table = to_table(&start)?;
    merge(&mut table, overlay);
    let config: ScenarioConfig = table.try_into().map_err(|source| LoadError::Parse {
        path: origin.to_path_buf(),
        source,
    })?;
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: &Path, base: Option<&ScenarioConfig>) -> Result<ScenarioConfig, LoadError> {
    let text = fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text, base, path)
}

/// The fully resolved config as TOML, written next to results.
pub fn render_config(config: &ScenarioConfig) -> Result<String, LoadError> {
    Ok(toml::to_string(config)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use codesleep_core::PolicyKind;

    fn parse(text: &str) -> Result<ScenarioConfig, LoadError> {
        parse_config(text, None, Path::new("test.toml"))
    }

    #[test]
    fn empty_file_is_the_default() {
        assert_eq!(parse("").unwrap(), ScenarioConfig::default());
    }

    #[test]
    fn sections_override_single_keys() {
        let c = parse(
            r#"
            duration = 500
            policy = "always-sleep"

            [learning]
            beta = 0.25

            [topology]
            kind = "random"
            nodes = 12
            width = 300.0
            height = 300.0
            radius = 150.0
            "#,
        )
        .unwrap();
        assert_eq!(c.duration, 500);
        assert_eq!(c.policy, "always-sleep".parse::<PolicyKind>().unwrap());
        assert_eq!(c.learning.beta, 0.25);
        assert_eq!(c.learning.gamma, 0.9);
        assert_eq!(c.topology.node_count(), 12);
    }

    #[test]
    fn base_scenario_then_overrides() {
        let c = parse("base = \"chain-fig1\"\nduration = 77\n").unwrap();
        assert_eq!(c.name, "chain-fig1");
        assert_eq!(c.duration, 77);
        assert_eq!(c.traffic.flows.len(), 2);
    }

    #[test]
    fn rejects_typos_and_bad_values() {
        assert!(matches!(parse("durration = 5"), Err(LoadError::Parse { .. })));
        assert!(matches!(parse("[learning]\nbeta = 2.0"), Err(LoadError::Config(_))));
        assert!(matches!(parse("policy = \"often\""), Err(LoadError::Parse { .. })));
        assert!(matches!(parse("base = \"nowhere\""), Err(LoadError::Config(_))));
        assert!(matches!(parse("base = 3"), Err(LoadError::BadBase)));
    }

    #[test]
    fn rendered_config_reads_back() {
        for name in codesleep_core::oracle::SCENARIOS {
            let c = canonical_scenario(name).unwrap();
            let text = render_config(&c).unwrap();
            assert_eq!(parse(&text).unwrap(), c, "{name}");
        }
    }
}
