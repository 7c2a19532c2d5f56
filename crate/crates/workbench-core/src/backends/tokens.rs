//! Deterministic token estimation and cost accounting.
//!
//! The estimator is a vendor-neutral stand-in (ceil of byte length over 4);
//! real token counts reported by remote APIs are recorded separately on the
//! trace when present.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// `ceil(bytes / 4)`: monotone in length and subadditive up to one token.
pub fn estimate_tokens(text: &str) -> u64 {
    (text.len() as u64).div_ceil(4)
}

#[derive(Debug, Error)]
pub enum PriceError {
    #[error("model '{0}' is not in the price table")]
    UnknownModel(String),
}

/// Per-model prices in cents per million tokens.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelPrice {
    pub input_cents_per_mtok: f64,
    pub output_cents_per_mtok: f64,
}

/// Price table keyed by model name. Offline backends ("scripted", "planner")
/// are free unless configured otherwise.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PriceTable {
    pub models: BTreeMap<String, ModelPrice>,
}

impl PriceTable {
    pub fn with_offline_defaults() -> Self {
        let mut table = PriceTable::default();
        for name in ["scripted", "planner"] {
            table.models.insert(
                name.to_string(),
                ModelPrice {
                    input_cents_per_mtok: 0.0,
                    output_cents_per_mtok: 0.0,
                },
            );
        }
        table
    }

    pub fn insert(&mut self, model: &str, input_cents_per_mtok: f64, output_cents_per_mtok: f64) {
        self.models.insert(
            model.to_string(),
            ModelPrice {
                input_cents_per_mtok,
                output_cents_per_mtok,
            },
        );
    }

    pub fn get(&self, model: &str) -> Result<ModelPrice, PriceError> {
        self.models
            .get(model)
            .copied()
            .ok_or_else(|| PriceError::UnknownModel(model.to_string()))
    }
}

/// Cost in cents: linear in each token argument.
pub fn cost_cents(
    tokens_in: u64,
    tokens_out: u64,
    model: &str,
    table: &PriceTable,
) -> Result<f64, PriceError> {
    let price = table.get(model)?;
    Ok(tokens_in as f64 * price.input_cents_per_mtok / 1e6
        + tokens_out as f64 * price.output_cents_per_mtok / 1e6)
}
