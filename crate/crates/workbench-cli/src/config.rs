//! Flat key = value config files and run configuration. Command-line flags
//! win over config-file values.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use workbench_core::backends::tokens::PriceTable;

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub dataset: PathBuf,
    pub out: PathBuf,
    pub topologies: Vec<String>,
    pub backend: String,
    pub model: Option<String>,
    pub endpoint: Option<String>,
    pub budget: usize,
    pub noise: f64,
    pub seed: Option<u64>,
    pub parallel: usize,
    pub delay_seconds: u64,
    pub prices: Option<PathBuf>,
}

/// Parse a flat `key = value` file; '#' starts a comment line.
pub fn parse_config_file(path: &Path) -> Result<BTreeMap<String, String>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut out = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(format!(
                "{}:{}: expected 'key = value'",
                path.display(),
                lineno + 1
            ));
        };
        out.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(out)
}

/// Fill unset run options from a config map (flags always win).
pub fn apply_config(config: &mut RunConfig, map: &BTreeMap<String, String>) {
    if config.topologies.is_empty() {
        if let Some(v) = map.get("topology") {
            config.topologies = v.split(',').map(|s| s.trim().to_string()).collect();
        }
    }
    if config.backend == "scripted" {
        if let Some(v) = map.get("backend") {
            config.backend = v.clone();
        }
    }
    if config.model.is_none() {
        config.model = map.get("model").cloned();
    }
    if config.endpoint.is_none() {
        config.endpoint = map.get("endpoint.url").or(map.get("endpoint")).cloned();
    }
    if config.seed.is_none() {
        config.seed = map.get("seed").and_then(|v| v.parse().ok());
    }
    if config.prices.is_none() {
        config.prices = map.get("prices").map(PathBuf::from);
    }
}

/// Price table from config lines of the form `<model> = <input>, <output>`
/// (cents per million tokens), merged over the offline defaults. A `price.`
/// key prefix is also accepted inside shared config files.
pub fn load_prices(path: Option<&Path>, extra: &BTreeMap<String, String>) -> Result<PriceTable, String> {
    let mut table = PriceTable::with_offline_defaults();
    let mut absorb = |key: &str, value: &str| -> Result<(), String> {
        let model = key.strip_prefix("price.").unwrap_or(key).trim();
        let parts: Vec<&str> = value.split(',').map(str::trim).collect();
        if parts.len() != 2 {
            return Err(format!("price for '{model}': expected '<input>, <output>'"));
        }
        let input: f64 = parts[0]
            .parse()
            .map_err(|_| format!("price for '{model}': bad input rate"))?;
        let output: f64 = parts[1]
            .parse()
            .map_err(|_| format!("price for '{model}': bad output rate"))?;
        table.insert(model, input, output);
        Ok(())
    };
    if let Some(path) = path {
        for (k, v) in parse_config_file(path)? {
            absorb(&k, &v)?;
        }
    }
    for (k, v) in extra {
        if k.starts_with("price.") {
            absorb(k, v)?;
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_parse_and_precedence() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "# comment\nbackend = planner\nseed = 9\n").unwrap();
        let map = parse_config_file(&path).unwrap();
        let mut config = RunConfig {
            dataset: PathBuf::new(),
            out: PathBuf::new(),
            topologies: vec![],
            backend: "scripted".into(),
            model: None,
            endpoint: None,
            budget: 40,
            noise: 0.0,
            seed: None,
            parallel: 1,
            delay_seconds: 0,
            prices: None,
        };
        apply_config(&mut config, &map);
        assert_eq!(config.backend, "planner");
        assert_eq!(config.seed, Some(9));

        // Flags win: a preset backend is kept.
        let mut config2 = config.clone();
        config2.backend = "remote:gpt".into();
        apply_config(&mut config2, &map);
        assert_eq!(config2.backend, "remote:gpt");
    }

    #[test]
    fn price_file_parses() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("prices.conf");
        std::fs::write(&path, "gpt-5.1 = 125, 1000\n").unwrap();
        let table = load_prices(Some(&path), &BTreeMap::new()).unwrap();
        let p = table.get("gpt-5.1").unwrap();
        assert_eq!(p.input_cents_per_mtok, 125.0);
        assert_eq!(p.output_cents_per_mtok, 1000.0);
        assert!(table.get("scripted").is_ok());
    }
}
