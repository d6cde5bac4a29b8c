//! File-backed run configuration.
//!
//! One JSON document drives every command. All sections are optional and
//! unknown keys are rejected, so a typo fails loudly instead of silently
//! falling back to a default.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::chain::{ChainConfig, SweepGrid};
use crate::error::{Error, Result};
use crate::link::LinkConfig;
use crate::noise::{DetectorKind, DetectorModel};
use crate::swap::SwapLevel;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    /// Enumerate every detection outcome.
    #[default]
    Exhaustive,
    /// Draw outcomes at random.
    Sampled,
}

/// What the swap command feeds into the station.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwapInputs {
    /// Two heralded links built from the `link` section.
    #[default]
    Links,
    /// Two ideal pair states.
    Ideal,
}

fn one() -> f64 {
    1.0
}

fn pnr() -> DetectorModel {
    DetectorModel::ideal(DetectorKind::NumberResolving)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwapSettings {
    #[serde(default = "default_level")]
    pub level: SwapLevel,
    #[serde(default)]
    pub inputs: SwapInputs,
    #[serde(default = "one")]
    pub retrieval_efficiency: f64,
    #[serde(default = "pnr")]
    pub detector: DetectorModel,
}

fn default_level() -> SwapLevel {
    SwapLevel::Elementary
}

impl Default for SwapSettings {
    fn default() -> Self {
        SwapSettings {
            level: default_level(),
            inputs: SwapInputs::default(),
            retrieval_efficiency: 1.0,
            detector: pnr(),
        }
    }
}

/// Parameter axes of a sweep; the `chain` section supplies everything else.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxes {
    #[serde(default)]
    pub emission_probabilities: Vec<f64>,
    #[serde(default)]
    pub transmittances: Vec<f64>,
    #[serde(default)]
    pub segments: Vec<usize>,
    #[serde(default)]
    pub noise_strengths: Vec<f64>,
}

fn default_trials() -> usize {
    1000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mode: RunMode,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Elementary link parameters, shared by the link, swap and chain runs.
    #[serde(default)]
    pub link: LinkConfig,
    #[serde(default)]
    pub swap: SwapSettings,
    /// Chain parameters other than the link, which comes from `link`.
    #[serde(default)]
    pub chain: ChainConfig,
    #[serde(default)]
    pub sweep: SweepAxes,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            mode: RunMode::default(),
            trials: default_trials(),
            out: None,
            link: LinkConfig::default(),
            swap: SwapSettings::default(),
            chain: ChainConfig::default(),
            sweep: SweepAxes::default(),
        }
    }
}

/// Name of the offending key in a serde error message, if it mentions one.
fn offending_key(message: &str) -> String {
    ["unknown field `", "missing field `", "unknown variant `"]
        .iter()
        .find_map(|p| {
            let rest = &message[message.find(p)? + p.len()..];
            Some(rest[..rest.find('`')?].to_string())
        })
        .unwrap_or_else(|| "config".to_string())
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::config(offending_key(&e.to_string()), e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("config", format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::config("trials", "must be at least 1"));
        }
        if self.chain.link != LinkConfig::default() {
            return Err(Error::config("chain.link", "set link parameters in the top-level `link` section"));
        }
        self.link.validate().map_err(|e| prefix("link", e))?;
        if !(0.0..=1.0).contains(&self.swap.retrieval_efficiency) {
            return Err(Error::config("swap.retrieval_efficiency", "must be in [0, 1]"));
        }
        self.swap.detector.validate("swap.detector")?;
        self.chain_config().validate().map_err(|e| prefix("chain", e))?;
        for cell in self.sweep_grid().cells() {
            cell.validate().map_err(|e| prefix("sweep", e))?;
        }
        Ok(())
    }

    /// Chain settings with the shared link section filled in.
    pub fn chain_config(&self) -> ChainConfig {
        ChainConfig {
            link: self.link,
            ..self.chain.clone()
        }
    }

    pub fn sweep_grid(&self) -> SweepGrid {
        SweepGrid {
            base: self.chain_config(),
            emission_probabilities: self.sweep.emission_probabilities.clone(),
            transmittances: self.sweep.transmittances.clone(),
            segments: self.sweep.segments.clone(),
            noise_strengths: self.sweep.noise_strengths.clone(),
        }
    }
}

fn prefix(section: &str, e: Error) -> Error {
    match e {
        Error::Config { key, reason } if !key.starts_with(&format!("{section}.")) => {
            Error::config(format!("{section}.{key}"), reason)
        }
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jones_matrices_are_bare_and_checked() {
        let ok = r#"{"link": {"noise": {"left": [[[0,0],[1,0]],[[1,0],[0,0]]]}}}"#;
        let c = RunConfig::from_json(ok).unwrap();
        assert_ne!(c.link.noise.left, crate::noise::JonesUnitary::identity());
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(RunConfig::from_json(&text).unwrap(), c);
        let bad = r#"{"link": {"noise": {"left": [[[2,0],[0,0]],[[0,0],[1,0]]]}}}"#;
        assert!(matches!(RunConfig::from_json(bad), Err(Error::Config { .. })));
    }

    #[test]
    fn empty_document_gives_defaults() {
        assert_eq!(RunConfig::from_json("{}").unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_key_is_named() {
        let err = RunConfig::from_json(r#"{"link": {"emission_prob": 0.1}}"#).unwrap_err();
        assert!(matches!(err, Error::Config { ref key, .. } if key == "emission_prob"), "{err}");
    }

    #[test]
    fn invalid_value_is_named() {
        let err = RunConfig::from_json(r#"{"link": {"emission_probability": 1.5}}"#).unwrap_err();
        assert!(matches!(err, Error::Config { ref key, .. } if key == "link.emission_probability"), "{err}");
        let err = RunConfig::from_json(r#"{"chain": {"segments": 3}}"#).unwrap_err();
        assert!(matches!(err, Error::Config { ref key, .. } if key == "chain.segments"), "{err}");
        let err = RunConfig::from_json(r#"{"sweep": {"segments": [2, 6]}}"#).unwrap_err();
        assert!(matches!(err, Error::Config { ref key, .. } if key == "sweep.segments"), "{err}");
    }

    #[test]
    fn chain_link_must_come_from_top_level() {
        let err = RunConfig::from_json(r#"{"chain": {"link": {"emission_probability": 0.2}}}"#).unwrap_err();
        assert!(matches!(err, Error::Config { ref key, .. } if key == "chain.link"), "{err}");
        let c = RunConfig::from_json(r#"{"link": {"emission_probability": 0.2}, "chain": {"segments": 4}}"#).unwrap();
        assert_eq!(c.chain_config().link.emission_probability, 0.2);
        assert_eq!(c.chain_config().segments, 4);
    }

    #[test]
    fn modes_parse() {
        let c = RunConfig::from_json(r#"{"mode": "sampled", "swap": {"level": "higher", "inputs": "ideal"}}"#).unwrap();
        assert_eq!(c.mode, RunMode::Sampled);
        assert_eq!(c.swap.level, SwapLevel::Higher);
        assert_eq!(c.swap.inputs, SwapInputs::Ideal);
    }
}
