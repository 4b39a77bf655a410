use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ingest::GroupCentering;
use crate::error::{MpcError, Result};
use crate::fda::MfpcaModel;
use crate::graphmodel::PrecisionFit;
use crate::monitor::{Chart, MonitorConfig, ReferenceDistributions};

pub const FORMAT_VERSION: u32 = 1;

/// A calibrated chart plus the data plumbing needed to feed it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub format_version: u32,
    /// Channel labels in model order.
    pub channels: Vec<String>,
    pub centering: Option<GroupCentering>,
    pub config: MonitorConfig,
    pub raw_grid: Vec<f64>,
    pub mfpca: MfpcaModel,
    pub precision: PrecisionFit,
    pub refs: ReferenceDistributions,
    pub gamma: f64,
    pub score_scale: f64,
    pub sparsity_levels: Vec<usize>,
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: Option<u32>,
}

impl ModelBundle {
    pub fn new(chart: Chart, channels: Vec<String>, centering: Option<GroupCentering>) -> Result<Self> {
        if channels.len() != chart.n_channels() {
            return Err(MpcError::DimensionMismatch(format!(
                "{} channel labels for a {}-channel chart",
                channels.len(),
                chart.n_channels()
            )));
        }
        Ok(Self {
            format_version: FORMAT_VERSION,
            channels,
            centering,
            config: chart.config,
            raw_grid: chart.raw_grid,
            mfpca: chart.mfpca,
            precision: chart.precision,
            refs: chart.refs,
            gamma: chart.gamma,
            score_scale: chart.score_scale,
            sparsity_levels: chart.sparsity_levels,
        })
    }

    pub fn chart(&self) -> Chart {
        Chart {
            config: self.config.clone(),
            raw_grid: self.raw_grid.clone(),
            mfpca: self.mfpca.clone(),
            precision: self.precision.clone(),
            refs: self.refs.clone(),
            gamma: self.gamma,
            score_scale: self.score_scale,
            sparsity_levels: self.sparsity_levels.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let probe: VersionProbe = serde_json::from_str(text)?;
        match probe.format_version {
            Some(FORMAT_VERSION) => {}
            Some(v) => {
                return Err(MpcError::Format(format!(
                    "bundle format version {v} is not supported (expected {FORMAT_VERSION})"
                )))
            }
            None => return Err(MpcError::Format("bundle has no format_version".into())),
        }
        let b: Self = serde_json::from_str(text)?;
        b.chart().validate()?;
        if b.channels.len() != b.mfpca.n_channels() {
            return Err(MpcError::Format("channel labels do not match the model".into()));
        }
        if let Some(c) = &b.centering {
            c.validate(&b.channels, b.raw_grid.len())?;
        }
        Ok(b)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
