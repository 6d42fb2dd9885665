//! Optional JSON pipeline configuration. Command-line flags override file
//! values; the merged result is validated in one pass so the user sees
//! every violation at once.

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use dmp_core::morphology::SeShape;
use dmp_core::profile::DifferentialSpec;
use dmp_core::stack::{DmpPreset, ValueDomain};
use dmp_core::tiler::{DEFAULT_STEP, DEFAULT_WINDOW};

use crate::CliError;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub preset: Option<String>,
    /// Explicit pair list, e.g. "9-3,5-3".
    pub pairs: Option<String>,
    pub shape: Option<String>,
    pub domain: Option<String>,
    pub window: Option<u32>,
    pub step: Option<u32>,
    /// Compute the DMP on the whole image before tiling instead of per tile.
    pub whole_image_dmp: Option<bool>,
    pub num_classes: Option<usize>,
    pub exclude_background: Option<bool>,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("{}: invalid config: {e}", path.display())))
    }

    /// File value unless the flag overrides it.
    pub fn merged(&self, flags: &PipelineConfig) -> PipelineConfig {
        PipelineConfig {
            preset: flags.preset.clone().or_else(|| self.preset.clone()),
            pairs: flags.pairs.clone().or_else(|| self.pairs.clone()),
            shape: flags.shape.clone().or_else(|| self.shape.clone()),
            domain: flags.domain.clone().or_else(|| self.domain.clone()),
            window: flags.window.or(self.window),
            step: flags.step.or(self.step),
            whole_image_dmp: flags.whole_image_dmp.or(self.whole_image_dmp),
            num_classes: flags.num_classes.or(self.num_classes),
            exclude_background: flags.exclude_background.or(self.exclude_background),
        }
    }
}

/// The fully-resolved settings a command runs with.
#[derive(Debug, Clone, Serialize)]
pub struct EffectiveConfig {
    pub preset: Option<String>,
    pub pairs: Vec<(u32, u32)>,
    pub shape: String,
    pub domain: String,
    pub window: u32,
    pub step: u32,
    pub whole_image_dmp: bool,
    pub num_classes: usize,
    pub exclude_background: bool,
}

pub fn parse_pairs(text: &str) -> Result<Vec<(u32, u32)>, String> {
    let mut pairs = Vec::new();
    for part in text.split(',') {
        let part = part.trim();
        let Some((outer, inner)) = part.split_once('-') else {
            return Err(format!("pair \"{part}\" is not of the form OUTER-INNER"));
        };
        let outer = outer
            .trim()
            .parse::<u32>()
            .map_err(|_| format!("pair \"{part}\": bad outer size"))?;
        let inner = inner
            .trim()
            .parse::<u32>()
            .map_err(|_| format!("pair \"{part}\": bad inner size"))?;
        pairs.push((outer, inner));
    }
    Ok(pairs)
}

/// Validate the merged config against every module constraint, collecting
/// all violations into a single usage error.
pub fn resolve(cfg: &PipelineConfig) -> Result<(EffectiveConfig, Option<DifferentialSpec>), CliError> {
    let mut problems = Vec::new();

    let shape_text = cfg.shape.clone().unwrap_or_else(|| "square".into());
    let shape = match SeShape::from_str(&shape_text) {
        Ok(s) => Some(s),
        Err(e) => {
            problems.push(e.to_string());
            None
        }
    };

    let domain_text = cfg.domain.clone().unwrap_or_else(|| "unit".into());
    if let Err(e) = ValueDomain::from_str(&domain_text) {
        problems.push(e.to_string());
    }

    let mut pairs: Vec<(u32, u32)> = Vec::new();
    match (&cfg.preset, &cfg.pairs) {
        (Some(_), Some(_)) => {
            problems.push("preset and pairs are mutually exclusive".into());
        }
        (Some(name), None) => match DmpPreset::from_str(name) {
            Ok(p) => pairs = p.pairs().to_vec(),
            Err(e) => problems.push(e.to_string()),
        },
        (None, Some(text)) => match parse_pairs(text) {
            Ok(p) => pairs = p,
            Err(e) => problems.push(e),
        },
        (None, None) => {}
    }

    // Pair constraints are checked even when the shape is bad, so one
    // rejection reports everything; the placeholder shape is never used
    // beyond validation.
    let spec = if pairs.is_empty() {
        None
    } else {
        match DifferentialSpec::new(shape.unwrap_or(SeShape::Square), pairs.clone()) {
            Ok(spec) => shape.is_some().then_some(spec),
            Err(e) => {
                problems.push(e.to_string());
                None
            }
        }
    };

    let window = cfg.window.unwrap_or(DEFAULT_WINDOW);
    let step = cfg.step.unwrap_or(DEFAULT_STEP);
    if window == 0 || step == 0 {
        problems.push(format!("window and step must be positive, got window={window} step={step}"));
    } else if step > window {
        problems.push(format!("step {step} larger than window {window} would leave uncovered pixels"));
    }

    let num_classes = cfg.num_classes.unwrap_or(16);
    if num_classes == 0 || num_classes > 256 {
        problems.push(format!("num_classes must be in 1..=256, got {num_classes}"));
    }

    if !problems.is_empty() {
        return Err(CliError::Usage(format!(
            "invalid configuration:\n  - {}",
            problems.join("\n  - ")
        )));
    }

    Ok((
        EffectiveConfig {
            preset: cfg.preset.clone(),
            pairs,
            shape: shape_text,
            domain: domain_text,
            window,
            step,
            whole_image_dmp: cfg.whole_image_dmp.unwrap_or(false),
            num_classes,
            exclude_background: cfg.exclude_background.unwrap_or(false),
        },
        spec,
    ))
}
