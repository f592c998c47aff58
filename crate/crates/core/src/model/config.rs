use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::actlut::{default_softmax_exp_format, default_softmax_recip_format, LutError, SamplePoint};
use crate::fixnum::{FxFormat, Overflow, Rounding};
use crate::format::NumFormat;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("malformed config document: {0}")]
    Malformed(String),
    #[error("`{field}` names unknown layer `{layer}`")]
    UnknownLayer { field: &'static str, layer: String },
    #[error("reuse factor for `{layer}` must be >= 1")]
    ReuseFactor { layer: String },
    #[error("prune_threshold must be finite and >= 0, got {0}")]
    PruneThreshold(f64),
    #[error("`{what}` must be a fixed-point format, got {format}: lookup tables hold fixed-point entries")]
    FloatTable { what: String, format: NumFormat },
    #[error("layer `{layer}` ({kind}) takes no numeric format")]
    FormatNotApplicable { layer: String, kind: String },
    #[error("layer `{layer}`: accumulator needs {width} bits (limit 64); use narrower input or weight formats")]
    AccumTooWide { layer: String, width: u32 },
    #[error("lookup table: {0}")]
    Table(#[from] LutError),
}

fn default_type() -> NumFormat {
    NumFormat::Fixed(FxFormat::new(16, 6, Rounding::Nearest, Overflow::Saturate).expect("valid"))
}

fn default_reuse() -> u32 {
    1
}

fn default_table_size() -> usize {
    1024
}

fn default_entry_format() -> NumFormat {
    NumFormat::Fixed(FxFormat::new(18, 2, Rounding::Nearest, Overflow::Saturate).expect("valid"))
}

fn default_exp_format() -> NumFormat {
    NumFormat::Fixed(default_softmax_exp_format())
}

fn default_recip_format() -> NumFormat {
    NumFormat::Fixed(default_softmax_recip_format())
}

/// Quantization and scheduling choices for one compilation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantConfig {
    /// Format of the network input and of every layer without an override.
    #[serde(default = "default_type")]
    pub default_type: NumFormat,
    /// Per-layer override; applies to weights, bias and output edge.
    #[serde(default)]
    pub per_layer_type: BTreeMap<String, NumFormat>,
    #[serde(default = "default_reuse")]
    pub default_reuse_factor: u32,
    #[serde(default)]
    pub reuse_factor: BTreeMap<String, u32>,
    #[serde(default = "default_table_size")]
    pub table_size: usize,
    /// Entry format of sigmoid and tanh tables.
    #[serde(default = "default_entry_format")]
    pub table_entry_format: NumFormat,
    #[serde(default = "default_exp_format")]
    pub softmax_exp_format: NumFormat,
    #[serde(default = "default_recip_format")]
    pub softmax_recip_format: NumFormat,
    /// Weights with magnitude below this are zeroed before quantization.
    #[serde(default)]
    pub prune_threshold: f64,
    #[serde(default)]
    pub sample_point: SamplePoint,
}

impl Default for QuantConfig {
    fn default() -> Self {
        Self {
            default_type: default_type(),
            per_layer_type: BTreeMap::new(),
            default_reuse_factor: default_reuse(),
            reuse_factor: BTreeMap::new(),
            table_size: default_table_size(),
            table_entry_format: default_entry_format(),
            softmax_exp_format: default_exp_format(),
            softmax_recip_format: default_recip_format(),
            prune_threshold: 0.0,
            sample_point: SamplePoint::LeftEdge,
        }
    }
}

impl QuantConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let c: QuantConfig = serde_json::from_str(text).map_err(|e| ConfigError::Malformed(e.to_string()))?;
        c.check_scalars()?;
        Ok(c)
    }

    /// Checks that do not depend on the model.
    pub fn check_scalars(&self) -> Result<(), ConfigError> {
        if !self.prune_threshold.is_finite() || self.prune_threshold < 0.0 {
            return Err(ConfigError::PruneThreshold(self.prune_threshold));
        }
        if self.default_reuse_factor == 0 {
            return Err(ConfigError::ReuseFactor { layer: "<default>".into() });
        }
        if let Some((layer, _)) = self.reuse_factor.iter().find(|(_, r)| **r == 0) {
            return Err(ConfigError::ReuseFactor { layer: layer.clone() });
        }
        Self::fixed_table_format("table_entry_format", self.table_entry_format)?;
        Self::fixed_table_format("softmax_exp_format", self.softmax_exp_format)?;
        Self::fixed_table_format("softmax_recip_format", self.softmax_recip_format)?;
        Ok(())
    }

    pub(crate) fn fixed_table_format(what: &str, f: NumFormat) -> Result<FxFormat, ConfigError> {
        f.as_fixed().ok_or_else(|| ConfigError::FloatTable { what: what.to_string(), format: f })
    }

    pub fn layer_type(&self, layer: &str) -> NumFormat {
        self.per_layer_type.get(layer).copied().unwrap_or(self.default_type)
    }

    pub fn layer_reuse(&self, layer: &str) -> u32 {
        self.reuse_factor.get(layer).copied().unwrap_or(self.default_reuse_factor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_uses_defaults() {
        let c = QuantConfig::parse("{}").unwrap();
        assert_eq!(c, QuantConfig::default());
        assert_eq!(c.default_type.to_string(), "fixed<16,6,rnd,sat>");
        assert_eq!(c.table_size, 1024);
    }

    #[test]
    fn full_document() {
        let c = QuantConfig::parse(
            r#"{"default_type":"float<4,3>","per_layer_type":{"fc1":"fixed<8,2,trn,wrap>"},
                "default_reuse_factor":2,"reuse_factor":{"fc1":4},"table_size":256,
                "prune_threshold":0.5,"sample_point":"midpoint"}"#,
        )
        .unwrap();
        assert_eq!(c.layer_type("fc1").to_string(), "fixed<8,2,trn,wrap>");
        assert_eq!(c.layer_type("fc2").to_string(), "float<4,3>");
        assert_eq!((c.layer_reuse("fc1"), c.layer_reuse("fc2")), (4, 2));
        assert_eq!(c.sample_point, SamplePoint::Midpoint);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(matches!(QuantConfig::parse(r#"{"reuse_factor":{"a":0}}"#), Err(ConfigError::ReuseFactor { .. })));
        assert!(matches!(QuantConfig::parse(r#"{"prune_threshold":-1}"#), Err(ConfigError::PruneThreshold(_))));
        assert!(matches!(
            QuantConfig::parse(r#"{"table_entry_format":"float<4,3>"}"#),
            Err(ConfigError::FloatTable { .. })
        ));
        assert!(matches!(QuantConfig::parse(r#"{"default_type":"fixed<99,2>"}"#), Err(ConfigError::Malformed(_))));
        assert!(matches!(QuantConfig::parse(r#"{"unknown":1}"#), Err(ConfigError::Malformed(_))));
    }
}
