//! Run configuration: built-in defaults, then the TOML file, then flags.

use std::path::Path;

use anyhow::{Context, Result};
use radsum_core::augment::{RenderTemplate, ShuffleMode, DEFAULT_EPOCHS, DEFAULT_SHUFFLED_EPOCHS};
use radsum_core::dataset::SpecialTokens;
use radsum_core::evaluation::{StratifySpec, CANONICAL_PHRASE};
use radsum_core::ingest::{ParserConfig, SectionName, DEFAULT_NO_FINDING_KEY};
use radsum_core::loss::Reduction;
use radsum_core::rouge::{Component, Metric};
use radsum_core::textnorm::{NormalizationConfig, SentenceConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub strict: bool,
    /// Worker threads; 0 lets rayon decide.
    pub threads: usize,
    pub normalization: NormalizationConfig,
    pub sentences: SentenceConfig,
    pub parse: ParseConfig,
    pub filter: FilterConfig,
    pub split: SplitConfig,
    pub augment: AugmentConfig,
    pub collate: CollateSection,
    pub stats: StatsConfig,
    pub score: ScoreConfig,
    pub stratify: StratifyConfig,
    pub baseline: BaselineConfig,
    pub loss: LossConfig,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

fn all_input_fields() -> Vec<SectionName> {
    SectionName::default_input_fields()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
// Flattened sections cannot deny unknown keys.
#[serde(default)]
pub struct ParseConfig {
    #[serde(flatten)]
    pub parser: ParserConfig,
    /// Column of the labels CSV holding the report id.
    pub id_column: String,
}

impl Default for ParseConfig {
    fn default() -> Self {
        Self {
            parser: ParserConfig::default(),
            id_column: "report_id".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub required_fields: Vec<SectionName>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            required_fields: all_input_fields(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub ratio: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { ratio: 0.8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub fields: Vec<SectionName>,
    pub epochs: usize,
    /// Defaults to `epochs - 3` (saturating) when unset.
    pub shuffle_start: Option<usize>,
    pub mode: ShuffleMode,
    #[serde(flatten)]
    pub template: RenderTemplate,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            fields: all_input_fields(),
            epochs: DEFAULT_EPOCHS,
            shuffle_start: None,
            mode: ShuffleMode::PerEpoch,
            template: RenderTemplate::default(),
        }
    }
}

impl AugmentConfig {
    pub fn resolved_shuffle_start(&self) -> usize {
        self.shuffle_start
            .unwrap_or(self.epochs.saturating_sub(DEFAULT_SHUFFLED_EPOCHS))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollateSection {
    pub batch_size: usize,
    pub max_input_len: usize,
    pub max_target_len: usize,
    pub markers: SpecialTokens,
}

impl Default for CollateSection {
    fn default() -> Self {
        Self {
            batch_size: 8,
            max_input_len: 512,
            max_target_len: 128,
            markers: SpecialTokens::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatsConfig {
    pub fields: Vec<SectionName>,
    pub histogram_bin: usize,
}

impl Default for StatsConfig {
    fn default() -> Self {
        Self {
            fields: vec![
                SectionName::Findings,
                SectionName::Comparison,
                SectionName::Indication,
            ],
            histogram_bin: 25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreConfig {
    pub keep_punctuation: bool,
    /// Bootstrap resamples for 95% intervals; 0 disables.
    pub bootstrap: usize,
    /// Multiplier applied to every reported score.
    pub scale: f64,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self {
            keep_punctuation: false,
            bootstrap: 0,
            scale: 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StratifyConfig {
    #[serde(flatten)]
    pub spec: StratifySpec,
    pub metric: Metric,
    pub component: Component,
}

impl Default for StratifyConfig {
    fn default() -> Self {
        Self {
            spec: StratifySpec::default(),
            metric: Metric::RougeLsum,
            component: Component::F1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMode {
    Canonical,
    Extractive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub mode: BaselineMode,
    pub phrase: String,
    pub k: usize,
    /// Only emit pairs for reports classified as No Findings.
    pub no_findings_only: bool,
    pub no_finding_key: String,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            mode: BaselineMode::Canonical,
            phrase: CANONICAL_PHRASE.into(),
            k: 1,
            no_findings_only: false,
            no_finding_key: DEFAULT_NO_FINDING_KEY.into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub reduction: Reduction,
}
