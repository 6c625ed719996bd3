//! Layered run configuration: a named profile, then a TOML file, then
//! `--set key=value` overrides (dotted keys, last one wins).

use std::path::Path;

use fedpgn_core::RunConfig;
use toml::{Table, Value};

use crate::error::{CliError, CliResult};

pub fn resolve(profile: &str, file: Option<&Path>, overrides: &[String]) -> CliResult<RunConfig> {
    let base = RunConfig::profile(profile)
        .ok_or_else(|| CliError::Config(format!("profile: unknown profile {profile:?} (expected paper or desk)")))?;
    let mut table = Table::try_from(&base).map_err(|e| CliError::Serialize(e.to_string()))?;
    if let Some(path) = file {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let user: Table = toml::from_str(&text)
            .map_err(|e| CliError::ConfigFile { path: path.display().to_string(), message: e.to_string() })?;
        merge(&mut table, user);
    }
    for item in overrides {
        apply_override(&mut table, item)?;
    }
    let cfg: RunConfig =
        Value::Table(table).try_into().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Recursive merge; a table whose `kind` changes is replaced rather than merged.
fn merge(base: &mut Table, over: Table) {
    for (key, value) in over {
        match (base.get_mut(&key), value) {
            (Some(Value::Table(dst)), Value::Table(src)) if same_kind(dst, &src) => merge(dst, src),
            (_, value) => {
                base.insert(key, value);
            }
        }
    }
}

fn same_kind(a: &Table, b: &Table) -> bool {
    match b.get("kind") {
        None => true,
        Some(k) => a.get("kind") == Some(k),
    }
}

fn apply_override(table: &mut Table, item: &str) -> CliResult<()> {
    let (key, raw) =
        item.split_once('=').ok_or_else(|| CliError::Config(format!("--set {item:?}: expected key=value")))?;
    let key = key.trim();
    let path: Vec<&str> = key.split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("--set {item:?}: empty key segment")));
    }
    let value = parse_value(raw.trim());
    let (last, parents) = path.split_last().expect("split yields one segment");
    let mut node = table;
    for part in parents {
        let entry = node.entry(part.to_string()).or_insert_with(|| Value::Table(Table::new()));
        node = match entry {
            Value::Table(t) => t,
            _ => return Err(CliError::Config(format!("--set {key}: {part} is not a table"))),
        };
    }
    if *last == "kind" && node.get("kind").is_some_and(|k| k != &value) {
        node.clear();
    }
    if let (Some(Value::Table(current)), Value::Table(new)) = (node.get(*last), &value) {
        if same_kind(current, new) {
            let mut merged = current.clone();
            merge(&mut merged, new.clone());
            node.insert(last.to_string(), Value::Table(merged));
            return Ok(());
        }
    }
    node.insert(last.to_string(), value);
    Ok(())
}

/// A TOML literal when it parses as one, otherwise a bare string.
fn parse_value(raw: &str) -> Value {
    toml::from_str::<Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

pub fn to_toml(cfg: &RunConfig) -> CliResult<String> {
    toml::to_string_pretty(cfg).map_err(|e| CliError::Serialize(e.to_string()))
}
