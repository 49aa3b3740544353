//! `--set key.path=value` overrides on top of a [`PipelineConfig`].

use qfine::pipeline::PipelineConfig;
use toml::{Table, Value};

use crate::CliError;

/// Parses `value` as a TOML value, falling back to a bare string.
fn parse_value(raw: &str) -> Value {
    toml::from_str::<Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

pub fn apply_overrides(config: &PipelineConfig, overrides: &[String]) -> Result<PipelineConfig, CliError> {
    if overrides.is_empty() {
        return Ok(config.clone());
    }
    let mut root = Value::try_from(config).map_err(|e| CliError::Config(e.to_string()))?;
    for o in overrides {
        let (key, raw) = o
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("override {o:?} is not KEY=VALUE")))?;
        let parts: Vec<&str> = key.trim().split('.').collect();
        let mut node = &mut root;
        for (i, part) in parts.iter().enumerate() {
            let table = node
                .as_table_mut()
                .ok_or_else(|| CliError::Config(format!("{key}: {part:?} is not inside a table")))?;
            if i + 1 == parts.len() {
                table.insert(part.to_string(), parse_value(raw.trim()));
                break;
            }
            node = table
                .entry(part.to_string())
                .or_insert_with(|| Value::Table(Table::new()));
        }
    }
    let text = toml::to_string(&root).map_err(|e| CliError::Config(e.to_string()))?;
    PipelineConfig::from_toml_str(&text).map_err(|e| CliError::Config(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nested_and_typed() {
        let cfg = apply_overrides(
            &PipelineConfig::default(),
            &[
                "train.epochs=2".into(),
                "eval.k_set=[1, 5]".into(),
                "querygen.source=llm".into(),
                "paths.corpus=x.jsonl".into(),
                "endpoints.generator.model=qwen".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.train.epochs, 2);
        assert_eq!(cfg.eval.k_set, [1, 5]);
        assert_eq!(cfg.querygen.source, qfine::pipeline::QuerySource::Llm);
        assert_eq!(cfg.paths.corpus.to_str(), Some("x.jsonl"));
        assert_eq!(cfg.endpoints.generator.model, "qwen");
    }

    #[test]
    fn bad_overrides() {
        let d = PipelineConfig::default();
        assert!(apply_overrides(&d, &["train.epochs".into()]).is_err());
        assert!(apply_overrides(&d, &["train.epochs=lots".into()]).is_err());
        assert!(apply_overrides(&d, &["train.epochs.x=1".into()]).is_err());
    }
}
